//! Filling in missing sinogram angles.
//!
//! Two interpolation baselines work along the angle axis per detector bin. The
//! optimizer treats the missing rows as free parameters: it reconstructs the
//! measured rows and the missing rows separately, each under its own angle
//! subset, and runs plain gradient descent on the image-domain discrepancy
//! between the two reconstructions. The measured reconstruction is a constant.

use crate::array::{Image, Sinogram};
use crate::error::{Error, Result};
use crate::geometry::{AngleSplit, ScanGeometry};
use crate::projector::{FilterSpec, Reconstructor};

/// A sparsely sampled scan: the full geometry, its split, and the measured rows.
#[derive(Debug, Clone)]
pub struct InpaintProblem {
    geometry: ScanGeometry,
    split: AngleSplit,
    measured_geometry: ScanGeometry,
    missing_geometry: ScanGeometry,
    measured: Sinogram,
}

impl InpaintProblem {
    /// `measured` holds one row per entry of `split.measured_idx()`, in order.
    pub fn new(geometry: ScanGeometry, split: AngleSplit, measured: Vec<f64>) -> Result<Self> {
        if split.full() != geometry.angles() {
            return Err(Error::invalid(
                "split",
                "split was built for a different angle set",
            ));
        }
        let measured_geometry = geometry.restrict(split.measured_idx())?;
        let missing_geometry = geometry.restrict(split.missing_idx())?;
        let measured = Sinogram::from_vec(&measured_geometry, measured)?;
        Ok(Self {
            geometry,
            split,
            measured_geometry,
            missing_geometry,
            measured,
        })
    }

    /// Keeps only the measured rows of a full sinogram.
    pub fn from_full(geometry: ScanGeometry, split: AngleSplit, full: &Sinogram) -> Result<Self> {
        full.check_bound(&geometry)?;
        let measured_geometry = geometry.restrict(split.measured_idx())?;
        let rows = full.select_rows(split.measured_idx(), &measured_geometry)?;
        Self::new(geometry, split, rows.into_vec())
    }

    pub fn geometry(&self) -> &ScanGeometry {
        &self.geometry
    }

    pub fn split(&self) -> &AngleSplit {
        &self.split
    }

    pub fn measured(&self) -> &Sinogram {
        &self.measured
    }

    pub fn measured_geometry(&self) -> &ScanGeometry {
        &self.measured_geometry
    }

    pub fn missing_geometry(&self) -> &ScanGeometry {
        &self.missing_geometry
    }

    fn check_missing(&self, missing: &Sinogram) -> Result<()> {
        if missing.num_angles() != self.split.missing_idx().len()
            || missing.num_bins() != self.geometry.num_bins()
        {
            return Err(Error::shape(
                format!(
                    "{}x{} missing block",
                    self.split.missing_idx().len(),
                    self.geometry.num_bins()
                ),
                format!("{}x{}", missing.num_angles(), missing.num_bins()),
            ));
        }
        missing.check_bound(&self.missing_geometry)
    }
}

/// For each missing angle, the measured neighbors `(lower, upper)` as positions
/// into the measured list. Either side is `None` outside the measured range.
fn bracket(problem: &InpaintProblem) -> Vec<(Option<usize>, Option<usize>)> {
    let measured = problem.split.measured_idx();
    problem
        .split
        .missing_idx()
        .iter()
        .map(|&m| {
            // angles are strictly increasing, so index order is angle order
            let upper = measured.partition_point(|&i| i < m);
            let lower = upper.checked_sub(1);
            let upper = (upper < measured.len()).then_some(upper);
            (lower, upper)
        })
        .collect()
}

/// Copies the angularly nearest measured row; ties go to the lower angle.
pub fn interpolate_nearest(problem: &InpaintProblem) -> Sinogram {
    let angles = problem.geometry.angles().as_slice();
    let measured_idx = problem.split.measured_idx();
    let mut out = Sinogram::zeros(&problem.missing_geometry);
    for (k, (&m, (lo, hi))) in problem
        .split
        .missing_idx()
        .iter()
        .zip(bracket(problem))
        .enumerate()
    {
        let src = match (lo, hi) {
            (Some(l), Some(h)) => {
                let dl = angles[m] - angles[measured_idx[l]];
                let dh = angles[measured_idx[h]] - angles[m];
                if dl <= dh {
                    l
                } else {
                    h
                }
            }
            (Some(l), None) => l,
            (None, Some(h)) => h,
            (None, None) => unreachable!("split has at least one measured angle"),
        };
        out.row_mut(k).copy_from_slice(problem.measured.row(src));
    }
    out
}

/// Linear interpolation along the angle axis; clamps outside the measured range.
pub fn interpolate_linear(problem: &InpaintProblem) -> Sinogram {
    let angles = problem.geometry.angles().as_slice();
    let measured_idx = problem.split.measured_idx();
    let mut out = Sinogram::zeros(&problem.missing_geometry);
    for (k, (&m, (lo, hi))) in problem
        .split
        .missing_idx()
        .iter()
        .zip(bracket(problem))
        .enumerate()
    {
        match (lo, hi) {
            (Some(l), Some(h)) => {
                let (t0, t1) = (angles[measured_idx[l]], angles[measured_idx[h]]);
                let w0 = (t1 - angles[m]) / (t1 - t0);
                let w1 = 1.0 - w0;
                let (r0, r1) = (problem.measured.row(l), problem.measured.row(h));
                for ((o, a), b) in out.row_mut(k).iter_mut().zip(r0).zip(r1) {
                    *o = w0 * a + w1 * b;
                }
            }
            (Some(s), None) | (None, Some(s)) => {
                out.row_mut(k).copy_from_slice(problem.measured.row(s));
            }
            (None, None) => unreachable!("split has at least one measured angle"),
        }
    }
    out
}

/// Measured rows from the problem, missing rows from `missing`, in angle order.
pub fn assemble_full(problem: &InpaintProblem, missing: &Sinogram) -> Result<Sinogram> {
    problem.check_missing(missing)?;
    let mut full = Sinogram::zeros(&problem.geometry);
    for (k, &i) in problem.split.measured_idx().iter().enumerate() {
        full.row_mut(i).copy_from_slice(problem.measured.row(k));
    }
    for (k, &i) in problem.split.missing_idx().iter().enumerate() {
        full.row_mut(i).copy_from_slice(missing.row(k));
    }
    Ok(full)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    /// Mean absolute error; the subgradient at a zero residual is 0.
    #[default]
    Mae,
    /// Mean squared error.
    Mse,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Mae => "mae",
            LossKind::Mse => "mse",
        }
    }

    /// Mean-reduced loss of `pred` against `target` and its gradient w.r.t. `pred`.
    pub fn evaluate(&self, pred: &Image, target: &Image) -> (f64, Image) {
        let n = pred.data().len() as f64;
        let mut grad = pred.clone();
        let mut total = 0.0;
        for (g, t) in grad.data_mut().iter_mut().zip(target.data()) {
            let r = *g - t;
            match self {
                LossKind::Mae => {
                    total += r.abs();
                    *g = if r > 0.0 {
                        1.0 / n
                    } else if r < 0.0 {
                        -1.0 / n
                    } else {
                        0.0
                    };
                }
                LossKind::Mse => {
                    total += r * r;
                    *g = 2.0 * r / n;
                }
            }
        }
        (total / n, grad)
    }
}

impl std::str::FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "mae" | "l1" => Ok(LossKind::Mae),
            "mse" | "l2" => Ok(LossKind::Mse),
            _ => Err(format!("unknown loss `{s}` (expected mae or mse)")),
        }
    }
}

/// The self-supervised objective with both reconstructors planned once.
#[derive(Debug, Clone)]
pub struct SelfSupervisedLoss {
    missing: Reconstructor,
    target: Image,
    kind: LossKind,
}

impl SelfSupervisedLoss {
    pub fn new(problem: &InpaintProblem, filter: FilterSpec, kind: LossKind) -> Result<Self> {
        let measured = Reconstructor::new(problem.measured_geometry.clone(), filter);
        let target = measured.fbp(&problem.measured)?;
        Ok(Self {
            missing: Reconstructor::new(problem.missing_geometry.clone(), filter),
            target,
            kind,
        })
    }

    /// Reconstruction of the measured rows alone.
    pub fn target(&self) -> &Image {
        &self.target
    }

    /// Loss value and `∂L/∂ŷ_K` for a candidate missing block.
    pub fn evaluate(&self, missing: &Sinogram) -> Result<(f64, Image)> {
        let recon = self.missing.fbp(missing)?;
        Ok(self.kind.evaluate(&recon, &self.target))
    }

    /// Loss value and gradient w.r.t. the missing rows.
    pub fn value_and_grad(&self, missing: &Sinogram) -> Result<(f64, Sinogram)> {
        let (loss, image_grad) = self.evaluate(missing)?;
        Ok((loss, self.missing.grad_wrt_sinogram(&image_grad)?))
    }
}

pub fn self_supervised_loss(
    problem: &InpaintProblem,
    missing: &Sinogram,
    filter: FilterSpec,
    kind: LossKind,
) -> Result<(f64, Image)> {
    problem.check_missing(missing)?;
    SelfSupervisedLoss::new(problem, filter, kind)?.evaluate(missing)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitMethod {
    Nearest,
    #[default]
    Linear,
}

impl std::str::FromStr for InitMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "nearest" => Ok(InitMethod::Nearest),
            "linear" => Ok(InitMethod::Linear),
            _ => Err(format!("unknown init `{s}` (expected nearest or linear)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    /// Zero returns the initialization unchanged.
    pub max_iterations: usize,
    pub loss: LossKind,
    pub plateau_patience: usize,
    pub plateau_rel_tol: f64,
    pub clamp_nonnegative: bool,
    pub init: InitMethod,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            max_iterations: 500,
            loss: LossKind::Mae,
            plateau_patience: 50,
            plateau_rel_tol: 1e-4,
            clamp_nonnegative: true,
            init: InitMethod::Linear,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("lr", "must be finite and >= 0"));
        }
        if self.plateau_patience == 0 {
            return Err(Error::invalid("plateau_patience", "must be >= 1"));
        }
        if !(self.plateau_rel_tol > 0.0 && self.plateau_rel_tol.is_finite()) {
            return Err(Error::invalid("plateau_rel_tol", "must be finite and > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIterations,
    Plateau,
}

#[derive(Debug, Clone)]
pub struct InpaintState {
    /// Current missing rows, bound to the missing sub-geometry.
    pub missing: Sinogram,
    /// Number of loss evaluations (one per gradient step taken or considered).
    pub iteration: usize,
    pub loss_history: Vec<f64>,
    pub stop: StopReason,
}

/// Gradient descent on the missing rows, starting from an interpolation.
pub fn optimize(
    problem: &InpaintProblem,
    config: &OptimizerConfig,
    filter: FilterSpec,
) -> Result<InpaintState> {
    config.validate()?;
    let mut missing = match config.init {
        InitMethod::Linear => interpolate_linear(problem),
        InitMethod::Nearest => interpolate_nearest(problem),
    };
    let mut state_history = Vec::with_capacity(config.max_iterations);
    if config.max_iterations == 0 {
        return Ok(InpaintState {
            missing,
            iteration: 0,
            loss_history: state_history,
            stop: StopReason::MaxIterations,
        });
    }

    // projected descent starts from a feasible point
    if config.clamp_nonnegative {
        missing.data_mut().iter_mut().for_each(|p| *p = p.max(0.0));
    }
    let objective = SelfSupervisedLoss::new(problem, filter, config.loss)?;
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut stop = StopReason::MaxIterations;
    for iteration in 0..config.max_iterations {
        let (loss, grad) = objective.value_and_grad(&missing)?;
        let max_abs_grad = grad.data().iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if !loss.is_finite() || !max_abs_grad.is_finite() {
            return Err(Error::NonFinite {
                iteration,
                max_abs_grad,
            });
        }
        state_history.push(loss);
        if loss < best * (1.0 - config.plateau_rel_tol) {
            best = loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.plateau_patience {
                stop = StopReason::Plateau;
                break;
            }
        }
        let lr = config.learning_rate;
        for (p, g) in missing.data_mut().iter_mut().zip(grad.data()) {
            *p -= lr * g;
            if config.clamp_nonnegative && *p < 0.0 {
                *p = 0.0;
            }
        }
    }
    Ok(InpaintState {
        missing,
        iteration: state_history.len(),
        loss_history: state_history,
        stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_full_scan, split_by_stride, AngleSplit};

    fn toy(n_angles: usize, measured: Vec<usize>) -> InpaintProblem {
        let g = make_full_scan(n_angles, 4, 6).unwrap();
        let split = AngleSplit::from_measured(g.angles().clone(), measured).unwrap();
        let rows: Vec<f64> = split
            .measured_idx()
            .iter()
            .flat_map(|&i| (0..6).map(move |b| (10 * i + b) as f64))
            .collect();
        InpaintProblem::new(g, split, rows).unwrap()
    }

    #[test]
    fn nearest_tie_goes_low() {
        let p = toy(3, vec![0, 2]);
        let n = interpolate_nearest(&p);
        assert_eq!(n.row(0), p.measured().row(0));
    }

    #[test]
    fn nearest_picks_closest() {
        let p = toy(4, vec![0, 3]);
        let n = interpolate_nearest(&p);
        assert_eq!(n.row(0), p.measured().row(0));
        assert_eq!(n.row(1), p.measured().row(1));
    }

    #[test]
    fn boundaries_copy_edge_rows() {
        let p = toy(6, vec![1, 3]);
        // missing 0, 2, 4, 5
        for block in [interpolate_nearest(&p), interpolate_linear(&p)] {
            assert_eq!(block.row(0), p.measured().row(0));
            assert_eq!(block.row(2), p.measured().row(1));
            assert_eq!(block.row(3), p.measured().row(1));
        }
    }

    #[test]
    fn linear_midpoint_and_thirds() {
        let p = toy(3, vec![0, 2]);
        let l = interpolate_linear(&p);
        for b in 0..6 {
            let avg = 0.5 * (p.measured().row(0)[b] + p.measured().row(1)[b]);
            assert!((l.row(0)[b] - avg).abs() < 1e-12);
        }
        let g = make_full_scan(4, 4, 6).unwrap();
        let split = AngleSplit::from_measured(g.angles().clone(), vec![0, 3]).unwrap();
        let mut rows = vec![0.0; 6];
        rows.extend(vec![1.0; 6]);
        let p = InpaintProblem::new(g, split, rows).unwrap();
        let l = interpolate_linear(&p);
        assert!(l.row(0).iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-12));
        assert!(l.row(1).iter().all(|v| (v - 2.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn linear_keeps_identical_rows() {
        let g = make_full_scan(9, 4, 6).unwrap();
        let split = split_by_stride(&g, 3, 1).unwrap();
        let row = [0.5, -1.0, 2.0, 3.0, 0.0, 7.0];
        let rows: Vec<f64> = (0..split.measured_idx().len()).flat_map(|_| row).collect();
        let p = InpaintProblem::new(g, split, rows).unwrap();
        for r in interpolate_linear(&p).rows() {
            for (a, b) in r.iter().zip(&row) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn assemble_rejects_wrong_block() {
        let p = toy(6, vec![0, 3]);
        let wrong = Sinogram::zeros(p.measured_geometry());
        assert!(assemble_full(&p, &wrong).is_err());
    }

    #[test]
    fn problem_rejects_wrong_row_count() {
        let g = make_full_scan(6, 4, 6).unwrap();
        let split = split_by_stride(&g, 2, 0).unwrap();
        assert!(InpaintProblem::new(g, split, vec![0.0; 12]).is_err());
    }

    #[test]
    fn loss_kinds() {
        let a = Image::from_vec(2, 1.0, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Image::from_vec(2, 1.0, vec![1.0, 1.0, 5.0, 4.5]).unwrap();
        let (l, g) = LossKind::Mae.evaluate(&a, &b);
        assert!((l - 3.5 / 4.0).abs() < 1e-15);
        assert_eq!(g.data(), &[0.0, 0.25, -0.25, -0.25]);
        let (l, g) = LossKind::Mse.evaluate(&a, &b);
        assert!((l - 5.25 / 4.0).abs() < 1e-15);
        assert_eq!(g.data(), &[0.0, 0.5, -1.0, -0.25]);
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::default().validate().is_ok());
        let bad = OptimizerConfig {
            plateau_patience: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = OptimizerConfig {
            learning_rate: f64::NAN,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
