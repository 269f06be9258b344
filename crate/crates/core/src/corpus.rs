//! Procedural thumbnail corpus.
//!
//! Training and the demo scenario need a few hundred small covers without
//! shipping or downloading a dataset. The generator mixes gradient, wave,
//! checker, blob and value-noise textures, all seeded.

use crate::imaging::{save_image, ImageBuffer, ImagingError};
use crate::rng::SplitMix64;
use std::path::{Path, PathBuf};

/// Generate one RGB texture of `size`x`size` pixels.
pub fn generate_image(rng: &mut SplitMix64, size: usize) -> ImageBuffer {
    match rng.below(5) {
        0 => gradient(rng, size),
        1 => waves(rng, size),
        2 => checker(rng, size),
        3 => blobs(rng, size),
        _ => value_noise(rng, size),
    }
}

/// Write `count` PNG covers named `img_0000.png`, `img_0001.png`, ... into
/// `dir`, creating it if needed. Returns the paths in index order.
pub fn generate_corpus(
    dir: &Path,
    count: usize,
    size: usize,
    seed: u64,
) -> Result<Vec<PathBuf>, ImagingError> {
    std::fs::create_dir_all(dir).map_err(|source| ImagingError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut rng = SplitMix64::new(seed);
    let mut paths = Vec::with_capacity(count);
    for i in 0..count {
        let img = generate_image(&mut rng, size);
        let path = dir.join(format!("img_{i:04}.png"));
        save_image(&path, &img)?;
        paths.push(path);
    }
    Ok(paths)
}

fn rand_color(rng: &mut SplitMix64) -> [f32; 3] {
    [rng.next_f32(), rng.next_f32(), rng.next_f32()]
}

fn fill(size: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> ImageBuffer {
    let mut data = vec![0u8; size * size * 3];
    for y in 0..size {
        for x in 0..size {
            let px = f(x, y);
            for c in 0..3 {
                data[(y * size + x) * 3 + c] = (px[c].clamp(0.0, 1.0) * 255.0).round() as u8;
            }
        }
    }
    ImageBuffer::new(size, size, data)
}

fn gradient(rng: &mut SplitMix64, size: usize) -> ImageBuffer {
    let a = rand_color(rng);
    let b = rand_color(rng);
    let angle = rng.next_f32() * std::f32::consts::TAU;
    let (dx, dy) = (angle.cos(), angle.sin());
    let n = size as f32;
    fill(size, |x, y| {
        let t = ((x as f32 * dx + y as f32 * dy) / n + 1.0) / 2.0;
        let t = t.clamp(0.0, 1.0);
        [
            a[0] * (1.0 - t) + b[0] * t,
            a[1] * (1.0 - t) + b[1] * t,
            a[2] * (1.0 - t) + b[2] * t,
        ]
    })
}

fn waves(rng: &mut SplitMix64, size: usize) -> ImageBuffer {
    let base = rand_color(rng);
    let mut comps = Vec::new();
    for _ in 0..3 {
        comps.push((
            rng.next_f32() * 0.45 + 0.05,                  // amplitude
            rng.next_f32() * 0.55 + 0.08,                  // frequency
            rng.next_f32() * std::f32::consts::TAU,        // phase
            rng.next_f32() * std::f32::consts::TAU,        // direction
            rng.below(3) as usize,                         // channel
        ));
    }
    fill(size, |x, y| {
        let mut px = base;
        for &(amp, freq, phase, dir, ch) in &comps {
            let u = x as f32 * dir.cos() + y as f32 * dir.sin();
            px[ch] += amp * (u * freq + phase).sin();
        }
        px
    })
}

fn checker(rng: &mut SplitMix64, size: usize) -> ImageBuffer {
    let a = rand_color(rng);
    let b = rand_color(rng);
    let cell = (rng.below(5) + 4) as usize;
    let ox = rng.below(cell as u64) as usize;
    let oy = rng.below(cell as u64) as usize;
    fill(size, |x, y| {
        if (((x + ox) / cell) + ((y + oy) / cell)) % 2 == 0 {
            a
        } else {
            b
        }
    })
}

fn blobs(rng: &mut SplitMix64, size: usize) -> ImageBuffer {
    let bg = rand_color(rng);
    let count = (rng.below(4) + 2) as usize;
    let mut centers = Vec::new();
    for _ in 0..count {
        centers.push((
            rng.next_f32() * size as f32,
            rng.next_f32() * size as f32,
            rng.next_f32() * size as f32 * 0.25 + 2.0,
            rand_color(rng),
        ));
    }
    fill(size, |x, y| {
        let mut px = bg;
        for &(cx, cy, r, color) in &centers {
            let d2 = (x as f32 - cx).powi(2) + (y as f32 - cy).powi(2);
            let w = (-d2 / (2.0 * r * r)).exp();
            for c in 0..3 {
                px[c] = px[c] * (1.0 - w) + color[c] * w;
            }
        }
        px
    })
}

fn value_noise(rng: &mut SplitMix64, size: usize) -> ImageBuffer {
    // two octaves of bilinearly interpolated random lattices
    let lattice = |rng: &mut SplitMix64, cells: usize| -> Vec<f32> {
        (0..(cells + 1) * (cells + 1) * 3)
            .map(|_| rng.next_f32())
            .collect()
    };
    let cells0 = 4usize;
    let cells1 = 8usize;
    let l0 = lattice(rng, cells0);
    let l1 = lattice(rng, cells1);
    let sample = |l: &[f32], cells: usize, c: usize, fx: f32, fy: f32| -> f32 {
        let gx = fx * cells as f32;
        let gy = fy * cells as f32;
        let x0 = gx.floor() as usize;
        let y0 = gy.floor() as usize;
        let tx = gx - x0 as f32;
        let ty = gy - y0 as f32;
        let at = |xx: usize, yy: usize| l[(yy * (cells + 1) + xx) * 3 + c];
        let top = at(x0, y0) * (1.0 - tx) + at(x0 + 1, y0) * tx;
        let bot = at(x0, y0 + 1) * (1.0 - tx) + at(x0 + 1, y0 + 1) * tx;
        top * (1.0 - ty) + bot * ty
    };
    let n = size as f32;
    fill(size, |x, y| {
        let fx = (x as f32 / n).min(0.999);
        let fy = (y as f32 / n).min(0.999);
        [
            0.65 * sample(&l0, cells0, 0, fx, fy) + 0.35 * sample(&l1, cells1, 0, fx, fy),
            0.65 * sample(&l0, cells0, 1, fx, fy) + 0.35 * sample(&l1, cells1, 1, fx, fy),
            0.65 * sample(&l0, cells0, 2, fx, fy) + 0.35 * sample(&l1, cells1, 2, fx, fy),
        ]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let a = generate_image(&mut SplitMix64::new(11), 32);
        let b = generate_image(&mut SplitMix64::new(11), 32);
        assert_eq!(a, b);
    }

    #[test]
    fn corpus_writes_ordered_files() {
        let dir = tempfile::tempdir().unwrap();
        let paths = generate_corpus(dir.path(), 5, 16, 3).unwrap();
        assert_eq!(paths.len(), 5);
        let ds = crate::imaging::list_dataset(dir.path(), (16, 16)).unwrap();
        assert_eq!(ds.len(), 5);
        assert_eq!(ds.files[0], "img_0000.png");
        // reload equals generated
        let first = ds.load(0).unwrap();
        assert_eq!(first.width, 16);
    }

    #[test]
    fn images_are_not_degenerate() {
        let mut rng = SplitMix64::new(99);
        for _ in 0..20 {
            let img = generate_image(&mut rng, 32);
            let min = *img.data.iter().min().unwrap();
            let max = *img.data.iter().max().unwrap();
            assert!(max > min, "constant texture generated");
        }
    }
}
