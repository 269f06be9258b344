//! End-to-end coercion walkthrough.
//!
//! The transcript plays both sides: the sender embeds a real and a fake
//! message, the stego crosses the channel, the receiver extracts the real
//! message in private, and under coercion surrenders only the fake one.
//! The classic route must be exact; the network route passes when both
//! hardened extractions stay within the bit-error budget.

use crate::bitmsg::{bit_error, BitMessage};
use crate::classic::{
    classic_embed, classic_extract, forge_key, read_ciphertext, DeniableKeyPair, Slot,
};
use crate::imaging::{from_tensor, procedural_cover, to_tensor};
use crate::networks::{decode, encode, harden, ModelParams};
use crate::rng::SplitMix64;
use std::fmt::Write as _;

/// Bit-error budget for the trained-model walkthrough.
pub const DNN_BIT_ERROR_BUDGET: f64 = 0.05;

pub struct ScenarioOutcome {
    pub transcript: String,
    pub passed: bool,
}

/// Classic-construction walkthrough on a procedural cover. Exact by
/// construction, so any mismatch fails the scenario.
pub fn run_classic_scenario(seed: u64, bits: usize) -> ScenarioOutcome {
    let mut rng = SplitMix64::new(seed);
    let mut out = String::new();
    let mut ok = true;

    let cover = procedural_cover(32, rng.next_u64());
    let m_real = BitMessage::random_from(&mut rng, bits);
    let m_fake = BitMessage::random_from(&mut rng, bits);
    let keys = DeniableKeyPair {
        seed_real: rng.next_u64(),
        pad_real: BitMessage::random_from(&mut rng, bits),
        seed_fake: rng.next_u64(),
        pad_fake: BitMessage::random_from(&mut rng, bits),
    };

    let _ = writeln!(out, "== classic construction ==");
    let _ = writeln!(out, "sender: real message  {}", m_real.to_hex());
    let _ = writeln!(out, "sender: fake message  {}", m_fake.to_hex());

    let stego = match classic_embed(&cover, &m_real, &m_fake, &keys) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(out, "FAIL: embedding failed: {e}");
            return ScenarioOutcome {
                transcript: out,
                passed: false,
            };
        }
    };
    let psnr = crate::imaging::psnr(&cover, &stego).unwrap_or(f64::INFINITY);
    let _ = writeln!(out, "sender: stego written, PSNR {psnr:.2} dB");
    let _ = writeln!(out, "channel: stego transmitted");

    match classic_extract(&stego, keys.seed_real, keys.seed_fake, &keys.pad_real, Slot::Real) {
        Ok(got) if got == m_real => {
            let _ = writeln!(out, "receiver (private): extracted real {}", got.to_hex());
        }
        Ok(got) => {
            ok = false;
            let _ = writeln!(out, "FAIL: real extraction produced {}", got.to_hex());
        }
        Err(e) => {
            ok = false;
            let _ = writeln!(out, "FAIL: real extraction errored: {e}");
        }
    }

    match classic_extract(&stego, keys.seed_real, keys.seed_fake, &keys.pad_fake, Slot::Fake) {
        Ok(got) if got == m_fake => {
            let _ = writeln!(out, "receiver (coerced): surrendered fake {}", got.to_hex());
        }
        Ok(got) => {
            ok = false;
            let _ = writeln!(out, "FAIL: fake extraction produced {}", got.to_hex());
        }
        Err(e) => {
            ok = false;
            let _ = writeln!(out, "FAIL: fake extraction errored: {e}");
        }
    }

    // coercion escalation: the adversary demands the pad for the REAL slots,
    // so the receiver forges one that decodes to an innocuous message
    let claimed = BitMessage::random_from(&mut rng, bits);
    match read_ciphertext(&stego, keys.seed_real, keys.seed_fake, Slot::Real, bits)
        .and_then(|x| forge_key(&x, &claimed))
        .and_then(|pad| {
            classic_extract(&stego, keys.seed_real, keys.seed_fake, &pad, Slot::Real)
                .map(|got| (pad, got))
        }) {
        Ok((pad, got)) if got == claimed => {
            let _ = writeln!(
                out,
                "receiver (coerced harder): forged pad {} opens the real slots as {}",
                pad.to_hex(),
                claimed.to_hex()
            );
        }
        Ok((_, got)) => {
            ok = false;
            let _ = writeln!(out, "FAIL: forged pad decoded to {}", got.to_hex());
        }
        Err(e) => {
            ok = false;
            let _ = writeln!(out, "FAIL: key forgery errored: {e}");
        }
    }

    let _ = writeln!(out, "classic scenario: {}", if ok { "PASS" } else { "FAIL" });
    ScenarioOutcome {
        transcript: out,
        passed: ok,
    }
}

/// Network-scheme walkthrough on a trained (or untrained, then failing)
/// model. Decoder 0 extracts the real message, decoder 1 the fake one.
pub fn run_dnn_scenario(params: &ModelParams, seed: u64) -> ScenarioOutcome {
    let mut rng = SplitMix64::new(seed);
    let mut out = String::new();
    let mut ok = true;
    let cfg = params.cfg;

    let cover_buf = procedural_cover(cfg.image_size, rng.next_u64());
    let cover = to_tensor(&cover_buf);
    let msgs: Vec<BitMessage> = (0..cfg.decoders)
        .map(|_| BitMessage::random_from(&mut rng, cfg.bits))
        .collect();

    let _ = writeln!(out, "== network scheme ({} decoders) ==", cfg.decoders);
    let _ = writeln!(out, "sender: real message  {}", msgs[0].to_hex());
    let _ = writeln!(out, "sender: fake message  {}", msgs[1].to_hex());

    let stego_q = match encode(params, &cover, &msgs).and_then(|s| {
        from_tensor(&s).map_err(|e| crate::networks::NetworkError::Autodiff(
            crate::autodiff::AutodiffError::ShapeMismatch {
                op: "quantize",
                detail: e.to_string(),
            },
        ))
    }) {
        Ok(buf) => buf,
        Err(e) => {
            let _ = writeln!(out, "FAIL: embedding failed: {e}");
            return ScenarioOutcome {
                transcript: out,
                passed: false,
            };
        }
    };
    let psnr = crate::imaging::psnr(&cover_buf, &stego_q).unwrap_or(f64::INFINITY);
    let _ = writeln!(out, "sender: stego written, PSNR {psnr:.2} dB");
    let _ = writeln!(out, "channel: stego transmitted (8-bit PNG)");

    let stego = to_tensor(&stego_q);
    let labels = ["real", "fake"];
    for (i, msg) in msgs.iter().enumerate().take(2) {
        let role = labels[i];
        match decode(params, i, &stego) {
            Ok(soft) => {
                let got = harden(&soft);
                let err = bit_error(&got, msg).unwrap();
                let verdict = err < DNN_BIT_ERROR_BUDGET;
                ok &= verdict;
                let _ = writeln!(
                    out,
                    "receiver ({role}): decoder {i} -> {} (bit error {err:.4}) {}",
                    got.to_hex(),
                    if verdict { "ok" } else { "EXCEEDS BUDGET" }
                );
            }
            Err(e) => {
                ok = false;
                let _ = writeln!(out, "FAIL: decoder {i} errored: {e}");
            }
        }
    }

    let _ = writeln!(out, "network scenario: {}", if ok { "PASS" } else { "FAIL" });
    ScenarioOutcome {
        transcript: out,
        passed: ok,
    }
}
