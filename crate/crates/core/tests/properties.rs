//! Property tests for the value-level invariants, plus golden-vector checks
//! against the independent oracle in `common`.

mod common;

use dstg_core::bitmsg::{bit_error, BitMessage};
use dstg_core::classic::{
    classic_embed, classic_extract, forge_key, permute_locations, xor_decrypt, xor_encrypt,
    Ciphertext, DeniableKeyPair, Slot,
};
use dstg_core::imaging::{from_tensor, procedural_cover, psnr, to_tensor, ImageBuffer};
use dstg_core::losses::balance_loss;
use proptest::prelude::*;

#[test]
fn permutation_matches_oracle_and_golden_file() {
    let text = std::fs::read_to_string(
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/permutation.json"),
    )
    .expect("golden file");
    let golden: serde_json::Value = serde_json::from_str(&text).unwrap();
    for case in golden["cases"].as_array().unwrap() {
        let seed = case["seed"].as_u64().unwrap();
        let n = case["n"].as_u64().unwrap() as usize;
        let expected: Vec<usize> = case["expected"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_u64().unwrap() as usize)
            .collect();
        assert_eq!(permute_locations(seed, n), expected, "golden case seed {seed}");
        assert_eq!(common::oracle_permutation(seed, n), expected, "oracle drifted");
    }
    // and the frozen random-message vector
    let hex = golden["message_seed42_nbits30_hex"].as_str().unwrap();
    assert_eq!(BitMessage::random(42, 30).to_hex(), hex);
}

#[test]
fn permutation_agrees_with_oracle_across_seeds() {
    for seed in [0u64, 1, 2, 0xFFFF_FFFF_FFFF_FFFF, 0x1234_5678_9ABC_DEF0] {
        for n in [1usize, 2, 7, 64, 1000] {
            assert_eq!(
                permute_locations(seed, n),
                common::oracle_permutation(seed, n),
                "seed {seed} n {n}"
            );
        }
    }
}

#[test]
fn random_messages_agree_with_oracle() {
    for seed in [0u64, 42, 7_000_000_000] {
        for nbits in [1usize, 30, 64, 65, 130] {
            let m = BitMessage::random(seed, nbits);
            assert_eq!(m.bits(), common::oracle_message_bits(seed, nbits));
        }
    }
}

proptest! {
    #[test]
    fn hex_codec_round_trips(bits in proptest::collection::vec(0u8..=1, 1..200)) {
        let m = BitMessage::from_bits(bits).unwrap();
        let parsed = BitMessage::parse_hex(&m.to_hex(), m.len()).unwrap();
        prop_assert_eq!(parsed, m);
    }

    #[test]
    fn hex_codec_inverse_direction(nbits in 1usize..100, seed in any::<u64>()) {
        // every valid hex text (zero pads) comes from exactly one message
        let m = BitMessage::random(seed, nbits);
        let hex = m.to_hex();
        prop_assert_eq!(hex.len(), nbits.div_ceil(4));
        let again = BitMessage::parse_hex(&hex, nbits).unwrap().to_hex();
        prop_assert_eq!(again, hex);
    }

    #[test]
    fn bit_error_is_a_symmetric_pseudometric(seed in any::<u64>(), nbits in 1usize..128) {
        let a = BitMessage::random(seed, nbits);
        let b = BitMessage::random(seed.wrapping_add(1), nbits);
        let ab = bit_error(&a, &b).unwrap();
        let ba = bit_error(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(bit_error(&a, &a).unwrap(), 0.0);
        if ab == 0.0 {
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn xor_involution_and_forgery(seed in any::<u64>(), nbits in 1usize..96) {
        let p = BitMessage::random(seed, nbits);
        let pad = BitMessage::random(seed ^ 0xAAAA, nbits);
        let x = xor_encrypt(&p, &pad).unwrap();
        prop_assert_eq!(xor_decrypt(&x, &pad).unwrap(), p);

        let wanted = BitMessage::random(seed ^ 0x5555, nbits);
        let forged = forge_key(&x, &wanted).unwrap();
        prop_assert_eq!(xor_decrypt(&x, &forged).unwrap(), wanted);
    }

    #[test]
    fn forged_ciphertext_identity(seed in any::<u64>(), nbits in 1usize..96) {
        // decrypt(x, forge_key(x, p)) == p for arbitrary x, not just
        // well-formed encryptions
        let x = Ciphertext::from_bits(BitMessage::random(seed, nbits).bits().to_vec());
        let p = BitMessage::random(seed ^ 0x1234, nbits);
        prop_assert_eq!(xor_decrypt(&x, &forge_key(&x, &p).unwrap()).unwrap(), p);
    }

    #[test]
    fn permutation_is_always_a_permutation(seed in any::<u64>(), n in 1usize..500) {
        let p = permute_locations(seed, n);
        let mut sorted = p.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn classic_round_trip_never_errs(seed in any::<u64>(), t in 1usize..64) {
        let cover = procedural_cover(16, seed); // 768 carrier bytes
        let keys = DeniableKeyPair {
            seed_real: seed,
            pad_real: BitMessage::random(seed ^ 1, t),
            seed_fake: seed ^ 2,
            pad_fake: BitMessage::random(seed ^ 3, t),
        };
        let m_r = BitMessage::random(seed ^ 4, t);
        let m_f = BitMessage::random(seed ^ 5, t);
        let stego = classic_embed(&cover, &m_r, &m_f, &keys).unwrap();
        let out_r = classic_extract(&stego, keys.seed_real, keys.seed_fake, &keys.pad_real, Slot::Real).unwrap();
        let out_f = classic_extract(&stego, keys.seed_real, keys.seed_fake, &keys.pad_fake, Slot::Fake).unwrap();
        prop_assert_eq!(out_r, m_r);
        prop_assert_eq!(out_f, m_f);
    }

    #[test]
    fn tensor_round_trip_is_exact(seed in any::<u64>()) {
        let img = procedural_cover(8, seed);
        let back = from_tensor(&to_tensor(&img)).unwrap();
        prop_assert_eq!(img, back);
    }

    #[test]
    fn psnr_is_symmetric_and_monotone(seed in any::<u64>()) {
        let mut a = procedural_cover(16, seed);
        for v in a.data.iter_mut() {
            *v = (*v).min(200); // headroom so the offsets below never clip
        }
        let mut one = a.clone();
        let mut two = a.clone();
        for (i, v) in one.data.iter_mut().enumerate() {
            if i % 7 == 0 { *v += 1; }
        }
        for (i, v) in two.data.iter_mut().enumerate() {
            if i % 7 == 0 { *v += 2; }
        }
        let p1 = psnr(&a, &one).unwrap();
        prop_assert_eq!(p1, psnr(&one, &a).unwrap());
        let p2 = psnr(&a, &two).unwrap();
        prop_assert!(p2 < p1, "larger error must lower psnr: {p2} vs {p1}");
    }

    #[test]
    fn balance_loss_permutation_symmetric_and_zero_iff_equal(
        values in proptest::collection::vec(0.0f64..2.0, 2..6),
        swap_a in 0usize..6,
        swap_b in 0usize..6,
    ) {
        let base = balance_loss(&values).unwrap();
        prop_assert!(base >= 0.0);
        let mut perm = values.clone();
        let (i, j) = (swap_a % values.len(), swap_b % values.len());
        perm.swap(i, j);
        let permuted = balance_loss(&perm).unwrap();
        prop_assert!((base - permuted).abs() < 1e-12);

        let equal = vec![values[0]; values.len()];
        prop_assert_eq!(balance_loss(&equal).unwrap(), 0.0);
        if base == 0.0 {
            for v in &values {
                prop_assert!((v - values[0]).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn classic_distortion_stays_under_the_lsb_bound() {
    // MSE <= 2t/n, so PSNR >= 48.1308 + 10*log10(n / 2t)
    for seed in 0..20u64 {
        let t = 30;
        let cover = procedural_cover(16, seed);
        let n = cover.data.len() as f64;
        let keys = DeniableKeyPair {
            seed_real: seed,
            pad_real: BitMessage::random(seed ^ 11, t),
            seed_fake: seed ^ 7,
            pad_fake: BitMessage::random(seed ^ 12, t),
        };
        let m_r = BitMessage::random(seed ^ 13, t);
        let m_f = BitMessage::random(seed ^ 14, t);
        let stego = classic_embed(&cover, &m_r, &m_f, &keys).unwrap();
        let bound = 48.1308 + 10.0 * (n / (2.0 * t as f64)).log10();
        let got = psnr(&cover, &stego).unwrap();
        assert!(got >= bound - 1e-9, "psnr {got} under bound {bound}");
    }
}

#[test]
fn quantization_round_half_up() {
    // 0.5/255 boundary cases through the tensor path; data is channel-major
    // (two pixels: channels [0.001, 127.49/255], [127.51/255, 0.9999], [0, 1])
    let t = dstg_core::imaging::ImageTensor::new(
        1,
        2,
        vec![0.001, 127.49 / 255.0, 127.51 / 255.0, 0.9999, 0.0, 1.0],
    )
    .unwrap();
    let b: ImageBuffer = from_tensor(&t).unwrap();
    // interleaved output: pixel0 = (0, 128, 0), pixel1 = (127, 255, 255)
    assert_eq!(b.data, vec![0, 128, 0, 127, 255, 255]);
}
