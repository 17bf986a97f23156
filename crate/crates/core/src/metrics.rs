//! PSNR and SSIM.
//!
//! SSIM uses the usual constants: an 11×11 Gaussian window with σ = 1.5,
//! `k1 = 0.01`, `k2 = 0.03`, population (biased) local statistics, and only
//! windows that lie entirely inside the image.

use crate::array::Image;
use crate::error::{Error, Result};
use crate::phantom::pixel_center;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Boolean pixel mask, row-major like [`Image`].
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    size: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn full(size: usize) -> Self {
        Self {
            size,
            data: vec![true; size * size],
        }
    }

    /// Pixels whose centers lie in the disk inscribed in the grid.
    pub fn reconstruction_circle(size: usize) -> Self {
        let mut data = Vec::with_capacity(size * size);
        for r in 0..size {
            let y = pixel_center(r, size);
            for c in 0..size {
                let x = pixel_center(c, size);
                data.push(x * x + y * y <= 1.0);
            }
        }
        Self { size, data }
    }

    pub fn from_vec(size: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != size * size {
            return Err(Error::shape(size * size, data.len()));
        }
        Ok(Self { size, data })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.size + col]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

fn check_pair(a: &Image, b: &Image) -> Result<()> {
    if a.size() != b.size() {
        return Err(Error::shape(
            format!("{0}x{0}", a.size()),
            format!("{0}x{0}", b.size()),
        ));
    }
    Ok(())
}

fn check_range(data_range: f64) -> Result<()> {
    if !(data_range > 0.0 && data_range.is_finite()) {
        return Err(Error::invalid("data_range", "must be finite and > 0"));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB; `+∞` when the images agree on the mask.
pub fn psnr(reference: &Image, test: &Image, data_range: f64, mask: Option<&Mask>) -> Result<f64> {
    check_pair(reference, test)?;
    check_range(data_range)?;
    let (sum, count) = match mask {
        None => (
            reference
                .data()
                .iter()
                .zip(test.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>(),
            reference.data().len(),
        ),
        Some(m) => {
            if m.size() != reference.size() {
                return Err(Error::shape(reference.size(), m.size()));
            }
            let mut sum = 0.0;
            let mut count = 0;
            for ((a, b), &keep) in reference.data().iter().zip(test.data()).zip(&m.data) {
                if keep {
                    sum += (a - b) * (a - b);
                    count += 1;
                }
            }
            (sum, count)
        }
    };
    if count == 0 {
        return Err(Error::invalid("mask", "selects no pixels"));
    }
    let mse = sum / count as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (data_range * data_range / mse).log10())
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Separable "valid" filtering: output is `(n - w + 1)²`.
fn filter_valid(data: &[f64], n: usize, w: &[f64]) -> Vec<f64> {
    let m = n - w.len() + 1;
    let mut horiz = vec![0.0; n * m];
    for r in 0..n {
        let row = &data[r * n..(r + 1) * n];
        for c in 0..m {
            horiz[r * m + c] = w.iter().zip(&row[c..]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; m * m];
    for r in 0..m {
        for c in 0..m {
            out[r * m + c] = w
                .iter()
                .enumerate()
                .map(|(k, a)| a * horiz[(r + k) * m + c])
                .sum();
        }
    }
    out
}

/// Local SSIM for every fully contained window, indexed by window position.
pub fn ssim_map(reference: &Image, test: &Image, data_range: f64) -> Result<(usize, Vec<f64>)> {
    check_pair(reference, test)?;
    check_range(data_range)?;
    let n = reference.size();
    if n < SSIM_WINDOW {
        return Err(Error::invalid(
            "image_size",
            format!("must be >= the {SSIM_WINDOW}-pixel SSIM window"),
        ));
    }
    let w = gaussian_window();
    let (a, b) = (reference.data(), test.data());
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(a, n, &w);
    let mu_b = filter_valid(b, n, &w);
    let e_aa = filter_valid(&aa, n, &w);
    let e_bb = filter_valid(&bb, n, &w);
    let e_ab = filter_valid(&ab, n, &w);
    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let map = (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .collect();
    Ok((n - SSIM_WINDOW + 1, map))
}

/// Mean local SSIM over all valid windows.
pub fn ssim(reference: &Image, test: &Image, data_range: f64) -> Result<f64> {
    let (_, map) = ssim_map(reference, test, data_range)?;
    Ok(map.iter().sum::<f64>() / map.len() as f64)
}

/// Mean local SSIM over windows whose center pixel lies in `mask`.
pub fn ssim_masked(reference: &Image, test: &Image, data_range: f64, mask: &Mask) -> Result<f64> {
    let (m, map) = ssim_map(reference, test, data_range)?;
    if mask.size() != reference.size() {
        return Err(Error::shape(reference.size(), mask.size()));
    }
    let half = SSIM_WINDOW / 2;
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in 0..m {
        for c in 0..m {
            if mask.get(r + half, c + half) {
                sum += map[r * m + c];
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::invalid("mask", "contains no window centers"));
    }
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub data_range: f64,
}

/// PSNR and SSIM against `reference`, both restricted to `mask` when given.
pub fn evaluate(
    reference: &Image,
    test: &Image,
    data_range: f64,
    mask: Option<&Mask>,
) -> Result<MetricReport> {
    Ok(MetricReport {
        psnr_db: psnr(reference, test, data_range, mask)?,
        ssim: match mask {
            Some(m) => ssim_masked(reference, test, data_range, m)?,
            None => ssim(reference, test, data_range)?,
        },
        data_range,
    })
}
