//! Ray-driven parallel-beam projector, its exact transpose, filtered
//! back-projection, and the gradient of an image-domain loss with respect to
//! the sinogram.
//!
//! The forward projector samples each ray at a fixed step and interpolates the
//! image bilinearly. The image is embedded in a one-pixel zero border so every
//! sample that can see a nonzero pixel has all four taps in bounds; samples are
//! taken on the global grid `t = k·step` along the ray, which makes the sum a
//! trapezoid rule (the interpolant vanishes at both ends of the support). The
//! adjoint scatters exactly the same weights.

mod filter;

use std::f64::consts::PI;

use rayon::prelude::*;

pub use filter::{padded_len, ramp_filter, FilterKind, FilterSpec, RampFilter};

use crate::array::{Image, Sinogram};
use crate::error::Result;
use crate::geometry::ScanGeometry;

/// Angles per adjoint accumulation buffer. Fixed so the reduction order does
/// not depend on the thread count.
const ADJOINT_CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projector {
    /// Integration step as a fraction of the pixel spacing.
    pub step_fraction: f64,
    /// Debug only: offsets the adjoint's sample grid (in steps), producing a
    /// deliberately mismatched pair. Zero in normal use.
    pub adjoint_shift: f64,
}

impl Default for Projector {
    fn default() -> Self {
        Self {
            step_fraction: 0.5,
            adjoint_shift: 0.0,
        }
    }
}

/// Per-ray sampling parameters in padded index space.
#[derive(Clone, Copy)]
struct RayWalk {
    col0: f64,
    row0: f64,
    dcol: f64,
    drow: f64,
    k_min: i64,
    k_max: i64,
}

struct AngleWalker {
    sin: f64,
    cos: f64,
    half: f64,
    limit: f64,
    step: f64,
    inv_ps: f64,
}

impl AngleWalker {
    fn new(theta: f64, size: usize, pixel_spacing: f64, step: f64) -> Self {
        let (sin, cos) = theta.sin_cos();
        Self {
            sin,
            cos,
            half: (size as f64 + 1.0) / 2.0,
            limit: size as f64 + 1.0,
            step,
            inv_ps: 1.0 / pixel_spacing,
        }
    }

    /// Sampling of the ray at detector offset `s`, with the sample grid
    /// shifted by `shift` steps. `None` if the ray misses the support.
    ///
    /// The admissible parameter range is shrunk by `EDGE` index units so that
    /// every sample has all four taps in bounds without a per-sample check;
    /// the dropped sliver carries at most `EDGE` of a border pixel's weight.
    fn ray(&self, s: f64, shift: f64) -> Option<RayWalk> {
        const EDGE: f64 = 1e-9;
        let h = self.half;
        // col(t) = h + (s·cos − t·sin)/ps,  row(t) = h − (s·sin + t·cos)/ps
        let col0 = h + s * self.cos * self.inv_ps + shift * (-self.sin * self.step * self.inv_ps);
        let row0 = h - s * self.sin * self.inv_ps + shift * (-self.cos * self.step * self.inv_ps);
        let dcol = -self.sin * self.step * self.inv_ps;
        let drow = -self.cos * self.step * self.inv_ps;
        let (lo_bound, hi_bound) = (EDGE, self.limit - EDGE);
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for (p0, dp) in [(col0, dcol), (row0, drow)] {
            if dp.abs() < 1e-12 {
                if !(lo_bound..=hi_bound).contains(&p0) {
                    return None;
                }
            } else {
                let a = (lo_bound - p0) / dp;
                let b = (hi_bound - p0) / dp;
                lo = lo.max(a.min(b));
                hi = hi.min(a.max(b));
            }
        }
        let mut k_min = lo.ceil() as i64;
        let mut k_max = hi.floor() as i64;
        // rounding in the division can admit one sample just outside
        let inside = |k: i64| {
            let c = col0 + k as f64 * dcol;
            let r = row0 + k as f64 * drow;
            c >= 0.0 && c < self.limit - 0.5 * EDGE && r >= 0.0 && r < self.limit - 0.5 * EDGE
        };
        while k_min <= k_max && !inside(k_min) {
            k_min += 1;
        }
        while k_max >= k_min && !inside(k_max) {
            k_max -= 1;
        }
        if k_min > k_max {
            return None;
        }
        Some(RayWalk {
            col0,
            row0,
            dcol,
            drow,
            k_min,
            k_max,
        })
    }
}

impl RayWalk {
    /// Calls `f(top_left_index, wx, wy)` for every sample, where `wx`, `wy`
    /// are the fractional offsets toward the next column/row.
    #[inline(always)]
    fn for_each(&self, stride: usize, mut f: impl FnMut(usize, f64, f64)) {
        for k in self.k_min..=self.k_max {
            let kf = k as f64;
            let c = self.col0 + kf * self.dcol;
            let r = self.row0 + kf * self.drow;
            // both are non-negative, so truncation is floor
            let ci = c as usize;
            let ri = r as usize;
            f(ri * stride + ci, c - ci as f64, r - ri as f64);
        }
    }
}

impl Projector {
    fn step(&self, geometry: &ScanGeometry) -> f64 {
        self.step_fraction * geometry.pixel_spacing()
    }

    /// Line integrals of `image` along every ray of `geometry`.
    pub fn forward(&self, image: &Image, geometry: &ScanGeometry) -> Result<Sinogram> {
        image.check_grid(geometry)?;
        let n = geometry.image_size();
        let stride = n + 2;
        let mut padded = vec![0.0; stride * stride];
        for (r, row) in image.data().chunks_exact(n).enumerate() {
            padded[(r + 1) * stride + 1..(r + 1) * stride + 1 + n].copy_from_slice(row);
        }
        let step = self.step(geometry);
        let det = *geometry.detector();
        let mut sino = Sinogram::zeros(geometry);
        let angles = geometry.angles().as_slice();
        sino.data_mut()
            .par_chunks_mut(det.num_bins())
            .zip(angles.par_iter())
            .for_each(|(row, &theta)| {
                let walker = AngleWalker::new(theta, n, geometry.pixel_spacing(), step);
                for (b, out) in row.iter_mut().enumerate() {
                    let Some(ray) = walker.ray(det.bin_offset(b), 0.0) else {
                        continue;
                    };
                    let mut acc = 0.0;
                    ray.for_each(stride, |i, wx, wy| {
                        let t = &padded[i..i + 2];
                        let b = &padded[i + stride..i + stride + 2];
                        let top = t[0] + wx * (t[1] - t[0]);
                        let bottom = b[0] + wx * (b[1] - b[0]);
                        acc += top + wy * (bottom - top);
                    });
                    *out = acc * step;
                }
            });
        Ok(sino)
    }

    /// Exact transpose of [`Projector::forward`].
    pub fn adjoint(&self, sino: &Sinogram, geometry: &ScanGeometry) -> Result<Image> {
        sino.check_bound(geometry)?;
        let n = geometry.image_size();
        let stride = n + 2;
        let step = self.step(geometry);
        let det = *geometry.detector();
        let nb = det.num_bins();
        let angles = geometry.angles().as_slice();
        let partials: Vec<Vec<f64>> = angles
            .par_chunks(ADJOINT_CHUNK)
            .zip(sino.data().par_chunks(ADJOINT_CHUNK * nb))
            .map(|(thetas, rows)| {
                let mut acc = vec![0.0; stride * stride];
                for (&theta, row) in thetas.iter().zip(rows.chunks_exact(nb)) {
                    let walker = AngleWalker::new(theta, n, geometry.pixel_spacing(), step);
                    for (b, &v) in row.iter().enumerate() {
                        if v == 0.0 {
                            continue;
                        }
                        let Some(ray) = walker.ray(det.bin_offset(b), self.adjoint_shift) else {
                            continue;
                        };
                        let v = v * step;
                        ray.for_each(stride, |i, wx, wy| {
                            let top = v * (1.0 - wy);
                            let bottom = v * wy;
                            let t = &mut acc[i..i + 2];
                            t[0] += top * (1.0 - wx);
                            t[1] += top * wx;
                            let b = &mut acc[i + stride..i + stride + 2];
                            b[0] += bottom * (1.0 - wx);
                            b[1] += bottom * wx;
                        });
                    }
                }
                acc
            })
            .collect();
        let mut padded = vec![0.0; stride * stride];
        for part in &partials {
            for (a, p) in padded.iter_mut().zip(part) {
                *a += p;
            }
        }
        let mut img = Image::for_geometry(geometry);
        for (r, row) in img.data_mut().chunks_exact_mut(n).enumerate() {
            row.copy_from_slice(&padded[(r + 1) * stride + 1..(r + 1) * stride + 1 + n]);
        }
        Ok(img)
    }
}

/// FBP and its transpose for one geometry, with the filter planned once.
#[derive(Debug, Clone)]
pub struct Reconstructor {
    geometry: ScanGeometry,
    projector: Projector,
    filter: RampFilter,
}

impl Reconstructor {
    pub fn new(geometry: ScanGeometry, spec: FilterSpec) -> Self {
        Self::with_projector(geometry, spec, Projector::default())
    }

    pub fn with_projector(geometry: ScanGeometry, spec: FilterSpec, projector: Projector) -> Self {
        let filter = RampFilter::new(spec, geometry.num_bins(), geometry.detector().bin_spacing());
        Self {
            geometry,
            projector,
            filter,
        }
    }

    pub fn geometry(&self) -> &ScanGeometry {
        &self.geometry
    }

    /// Angular weight `π / num_angles` of the discrete back-projection sum.
    pub fn weight(&self) -> f64 {
        PI / self.geometry.num_angles() as f64
    }

    /// `(π/J) · Aᵀ K p`
    pub fn fbp(&self, sino: &Sinogram) -> Result<Image> {
        sino.check_bound(&self.geometry)?;
        let filtered = self.filter.apply(sino);
        let mut img = self.projector.adjoint(&filtered, &self.geometry)?;
        let w = self.weight();
        img.data_mut().iter_mut().for_each(|v| *v *= w);
        Ok(img)
    }

    /// `(π/J) · Kᵀ A g`, the transpose of [`Reconstructor::fbp`]: maps
    /// `∂L/∂ŷ` to `∂L/∂p`.
    pub fn grad_wrt_sinogram(&self, image_grad: &Image) -> Result<Sinogram> {
        let projected = self.projector.forward(image_grad, &self.geometry)?;
        let mut g = self.filter.apply_transpose(&projected);
        let w = self.weight();
        g.data_mut().iter_mut().for_each(|v| *v *= w);
        Ok(g)
    }
}

pub fn forward(image: &Image, geometry: &ScanGeometry) -> Result<Sinogram> {
    Projector::default().forward(image, geometry)
}

pub fn adjoint(sino: &Sinogram, geometry: &ScanGeometry) -> Result<Image> {
    Projector::default().adjoint(sino, geometry)
}

pub fn fbp(sino: &Sinogram, geometry: &ScanGeometry, spec: FilterSpec) -> Result<Image> {
    Reconstructor::new(geometry.clone(), spec).fbp(sino)
}

pub fn grad_wrt_sinogram(
    image_grad: &Image,
    geometry: &ScanGeometry,
    spec: FilterSpec,
) -> Result<Sinogram> {
    Reconstructor::new(geometry.clone(), spec).grad_wrt_sinogram(image_grad)
}
