//! Numerical self-checks at size 64: adjointness, linearity, finite-difference
//! gradients and agreement with the analytic oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::array::{Image, Sinogram};
use crate::error::Result;
use crate::experiment::{acquire, sparse_problem, DoseFraction};
use crate::geometry::{make_full_scan, min_num_bins, ScanGeometry};
use crate::inpaint::{interpolate_linear, LossKind};
use crate::phantom::{analytic_sinogram, pixel_center, rasterize, Ellipse, Phantom};
use crate::projector::{ramp_filter, FilterSpec, Projector, Reconstructor};

pub const SELFTEST_SIZE: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub family: &'static str,
    pub name: &'static str,
    pub measured: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.measured.is_finite() && self.measured < self.tolerance
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SelftestOptions {
    /// Offsets the adjoint's sample grid to break the transpose pairing.
    pub mismatched_adjoint: bool,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn random_image(rng: &mut ChaCha8Rng, n: usize) -> Image {
    Image::from_vec(
        n,
        1.0,
        (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .expect("finite")
}

fn random_sino(rng: &mut ChaCha8Rng, g: &ScanGeometry) -> Sinogram {
    let n = g.num_angles() * g.num_bins();
    Sinogram::from_vec(g, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("finite")
}

fn disk() -> Phantom {
    Phantom::new(vec![Ellipse::disk(0.0, 0.0, 0.5, 1.0).expect("valid disk")])
}

fn adjoint_dot(p: Projector, g: &ScanGeometry, rng: &mut ChaCha8Rng, pairs: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let x = random_image(rng, g.image_size());
        let y = random_sino(rng, g);
        let lhs = p.forward(&x, g)?.dot(&y);
        let rhs = x.dot(&p.adjoint(&y, g)?);
        worst = worst.max(rel(lhs, rhs));
    }
    Ok(worst)
}

fn composed_dot(r: &Reconstructor, rng: &mut ChaCha8Rng, pairs: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let p = random_sino(rng, r.geometry());
        let g = random_image(rng, r.geometry().image_size());
        let lhs = r.fbp(&p)?.dot(&g);
        let rhs = p.dot(&r.grad_wrt_sinogram(&g)?);
        worst = worst.max(rel(lhs, rhs));
    }
    Ok(worst)
}

fn forward_linearity(g: &ScanGeometry, rng: &mut ChaCha8Rng) -> Result<f64> {
    let x = random_image(rng, g.image_size());
    let z = random_image(rng, g.image_size());
    let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    let mix: Vec<f64> = x
        .data()
        .iter()
        .zip(z.data())
        .map(|(u, v)| a * u + b * v)
        .collect();
    let lhs = crate::projector::forward(&Image::from_vec(g.image_size(), 1.0, mix)?, g)?;
    let (fx, fz) = (
        crate::projector::forward(&x, g)?,
        crate::projector::forward(&z, g)?,
    );
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for ((l, u), v) in lhs.data().iter().zip(fx.data()).zip(fz.data()) {
        let r = a * u + b * v;
        num = num.max((l - r).abs());
        den = den.max(r.abs());
    }
    Ok(num / den)
}

fn filter_symmetry(g: &ScanGeometry, rng: &mut ChaCha8Rng) -> f64 {
    let spec = FilterSpec::default();
    let p = random_sino(rng, g);
    let q = random_sino(rng, g);
    let ds = g.detector().bin_spacing();
    rel(
        ramp_filter(&p, ds, spec).dot(&q),
        p.dot(&ramp_filter(&q, ds, spec)),
    )
}

/// Central differences of the MSE self-supervised loss on random entries of
/// the missing block; returns `‖fd − analytic‖ / ‖analytic‖`.
fn gradient_fd(projector: Projector, rng: &mut ChaCha8Rng) -> Result<f64> {
    let n = SELFTEST_SIZE;
    let g = make_full_scan(60, n, min_num_bins(n))?;
    let acq = acquire(&disk(), &g, 0.01, 11)?;
    let problem = sparse_problem(&g, &acq.measured, DoseFraction::new(3)?)?;
    let filter = FilterSpec::default();
    let target =
        Reconstructor::with_projector(problem.measured_geometry().clone(), filter, projector)
            .fbp(problem.measured())?;
    let recon =
        Reconstructor::with_projector(problem.missing_geometry().clone(), filter, projector);
    let loss =
        |p: &Sinogram| -> Result<f64> { Ok(LossKind::Mse.evaluate(&recon.fbp(p)?, &target).0) };

    let mut missing = interpolate_linear(&problem);
    for v in missing.data_mut() {
        *v += rng.random_range(-0.5..0.5);
    }
    let (_, img_grad) = LossKind::Mse.evaluate(&recon.fbp(&missing)?, &target);
    let grad = recon.grad_wrt_sinogram(&img_grad)?;

    let h = 1e-2;
    let nb = g.num_bins();
    let inner = (nb as f64 / 2.0 - n as f64 / 2.0).floor() as usize;
    let (mut num, mut den) = (0.0, 0.0);
    for _ in 0..10 {
        let idx =
            rng.random_range(0..missing.num_angles()) * nb + rng.random_range(inner..nb - inner);
        let mut plus = missing.clone();
        plus.data_mut()[idx] += h;
        let mut minus = missing.clone();
        minus.data_mut()[idx] -= h;
        let fd = (loss(&plus)? - loss(&minus)?) / (2.0 * h);
        num += (fd - grad.data()[idx]).powi(2);
        den += grad.data()[idx].powi(2);
    }
    Ok((num / den).sqrt())
}

fn forward_vs_oracle(g: &ScanGeometry) -> Result<f64> {
    let ph = disk();
    let fw = crate::projector::forward(&rasterize(&ph, g.image_size(), g.pixel_spacing()), g)?;
    let exact = analytic_sinogram(&ph, g);
    let num: f64 = fw
        .data()
        .iter()
        .zip(exact.data())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    let den: f64 = exact.data().iter().map(|b| b * b).sum();
    Ok((num / den).sqrt())
}

/// Mean FBP value over the disk shrunk by 3 pixels, compared with density 1.
fn fbp_disk_interior(g: &ScanGeometry) -> Result<f64> {
    let n = g.image_size();
    let img =
        Reconstructor::new(g.clone(), FilterSpec::default()).fbp(&analytic_sinogram(&disk(), g))?;
    let limit = 0.5 - 3.0 * 2.0 / n as f64;
    let (mut sum, mut count) = (0.0, 0usize);
    for r in 0..n {
        for c in 0..n {
            let (x, y) = (pixel_center(c, n), -pixel_center(r, n));
            if x * x + y * y <= limit * limit {
                sum += img.get(r, c);
                count += 1;
            }
        }
    }
    Ok((sum / count as f64 - 1.0).abs())
}

pub fn run(options: SelftestOptions) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e1f);
    let n = SELFTEST_SIZE;
    let projector = Projector {
        adjoint_shift: if options.mismatched_adjoint { 0.5 } else { 0.0 },
        ..Projector::default()
    };
    let g45 = make_full_scan(45, n, min_num_bins(n))?;
    let g180 = make_full_scan(180, n, min_num_bins(n))?;
    let recon = Reconstructor::with_projector(g45.clone(), FilterSpec::default(), projector);
    Ok(vec![
        Check {
            family: "adjoint",
            name: "<Ax, y> = <x, A^T y>, 10 random pairs, 45 angles",
            measured: adjoint_dot(projector, &g45, &mut rng, 10)?,
            tolerance: 1e-6,
        },
        Check {
            family: "adjoint",
            name: "<fbp(p), g> = <p, grad_wrt_sinogram(g)>, 5 random pairs",
            measured: composed_dot(&recon, &mut rng, 5)?,
            tolerance: 1e-6,
        },
        Check {
            family: "linearity",
            name: "forward(a x + b z) = a forward(x) + b forward(z)",
            measured: forward_linearity(&g45, &mut rng)?,
            tolerance: 1e-10,
        },
        Check {
            family: "linearity",
            name: "ramp filter is symmetric: <Kp, q> = <p, Kq>",
            measured: filter_symmetry(&g45, &mut rng),
            tolerance: 1e-10,
        },
        Check {
            family: "gradient",
            name: "central differences of the MSE self-supervised loss, 10 entries",
            measured: gradient_fd(projector, &mut rng)?,
            tolerance: 1e-3,
        },
        Check {
            family: "oracle",
            name: "forward of rasterized disk vs analytic sinogram, relative L2",
            measured: forward_vs_oracle(&g180)?,
            tolerance: 0.05,
        },
        Check {
            family: "oracle",
            name: "FBP of analytic disk sinogram, eroded interior mean vs density",
            measured: fbp_disk_interior(&g180)?,
            tolerance: 0.05,
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        let checks = run(SelftestOptions::default()).unwrap();
        for c in &checks {
            assert!(c.passed(), "{c:?}");
        }
        let mut families: Vec<_> = checks.iter().map(|c| c.family).collect();
        families.dedup();
        assert!(families.len() >= 4);
    }

    #[test]
    fn mismatched_adjoint_is_caught() {
        let checks = run(SelftestOptions {
            mismatched_adjoint: true,
        })
        .unwrap();
        assert!(!checks[0].passed(), "{:?}", checks[0]);
        assert!(!checks[1].passed(), "{:?}", checks[1]);
    }
}
