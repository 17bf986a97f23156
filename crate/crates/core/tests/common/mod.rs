#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sinofill::phantom::{pixel_center, Ellipse, Phantom};
use sinofill::{Image, ScanGeometry, Sinogram};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(rng: &mut ChaCha8Rng, n: usize) -> Image {
    Image::from_vec(
        n,
        1.0,
        (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

pub fn random_sino(rng: &mut ChaCha8Rng, g: &ScanGeometry) -> Sinogram {
    let len = g.num_angles() * g.num_bins();
    Sinogram::from_vec(g, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

pub fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// Largest deviation relative to the largest magnitude of `expected`.
pub fn rel_max(actual: &[f64], expected: &[f64]) -> f64 {
    let num = actual
        .iter()
        .zip(expected)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let den = expected.iter().map(|y| y.abs()).fold(0.0, f64::max);
    num / den
}

pub fn centered_disk() -> Phantom {
    Phantom::new(vec![Ellipse::disk(0.0, 0.0, 0.5, 1.0).unwrap()])
}

/// Mean over pixels whose centers lie inside `ellipse` shrunk by `erode_px`
/// on both semi-axes.
pub fn eroded_mean(img: &Image, ellipse: &Ellipse, erode_px: f64) -> f64 {
    let n = img.size();
    let mut e = *ellipse;
    e.semi_axis_a -= erode_px * 2.0 / n as f64;
    e.semi_axis_b -= erode_px * 2.0 / n as f64;
    let (mut sum, mut count) = (0.0, 0usize);
    for r in 0..n {
        for c in 0..n {
            if e.contains(pixel_center(c, n), -pixel_center(r, n)) {
                sum += img.get(r, c);
                count += 1;
            }
        }
    }
    sum / count as f64
}
