//! Sparse-view benchmark: simulate a scan, drop angles, complete them with
//! each method and score the reconstructions.

use std::fmt;
use std::str::FromStr;

use crate::array::{Image, Sinogram};
use crate::error::{Error, Result};
use crate::geometry::{split_by_stride, ScanGeometry};
use crate::inpaint::{
    assemble_full, interpolate_linear, interpolate_nearest, optimize, InpaintProblem,
    OptimizerConfig, StopReason,
};
use crate::metrics::{self, Mask, MetricReport};
use crate::phantom::{analytic_sinogram, rasterize, NoiseModel, Phantom};
use crate::projector::{FilterSpec, Reconstructor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Nearest,
    Linear,
    Optimize,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Nearest, Method::Linear, Method::Optimize];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Nearest => "nearest",
            Method::Linear => "linear",
            Method::Optimize => "optimize",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Method::Nearest),
            "linear" => Ok(Method::Linear),
            "optimize" | "optimized" => Ok(Method::Optimize),
            _ => Err(Error::invalid("method", "one of nearest, linear, optimize")),
        }
    }
}

/// Fraction `1/keep_every` of the full angle set that is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DoseFraction {
    keep_every: usize,
}

impl DoseFraction {
    pub fn new(keep_every: usize) -> Result<Self> {
        if keep_every < 2 {
            return Err(Error::invalid("dose", "must be 1/k with integer k >= 2"));
        }
        Ok(Self { keep_every })
    }

    pub fn keep_every(&self) -> usize {
        self.keep_every
    }

    pub fn value(&self) -> f64 {
        1.0 / self.keep_every as f64
    }

    /// Filesystem-safe label, `dose_1-3` for one third.
    pub fn dir_name(&self) -> String {
        format!("dose_1-{}", self.keep_every)
    }
}

impl fmt::Display for DoseFraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "1/{}", self.keep_every)
    }
}

impl FromStr for DoseFraction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let k = s
            .trim()
            .strip_prefix("1/")
            .and_then(|k| k.trim().parse::<usize>().ok())
            .ok_or_else(|| Error::invalid("dose", format!("`{s}` is not of the form 1/k")))?;
        Self::new(k)
    }
}

/// Ground truth and full noisy measurement for one seed.
#[derive(Debug, Clone)]
pub struct Acquisition {
    pub geometry: ScanGeometry,
    pub ground_truth: Image,
    pub measured: Sinogram,
    pub noise: NoiseModel,
}

/// Noise sigma is `noise_rel_sigma` times the clean sinogram maximum.
pub fn acquire(
    phantom: &Phantom,
    geometry: &ScanGeometry,
    noise_rel_sigma: f64,
    seed: u64,
) -> Result<Acquisition> {
    if !(noise_rel_sigma >= 0.0 && noise_rel_sigma.is_finite()) {
        return Err(Error::invalid("noise_rel_sigma", "must be finite and >= 0"));
    }
    let mut measured = analytic_sinogram(phantom, geometry);
    let noise = if noise_rel_sigma > 0.0 {
        NoiseModel::gaussian(noise_rel_sigma * measured.max().abs(), seed)?
    } else {
        NoiseModel::none()
    };
    noise.apply(&mut measured);
    Ok(Acquisition {
        geometry: geometry.clone(),
        ground_truth: rasterize(phantom, geometry.image_size(), geometry.pixel_spacing()),
        measured,
        noise,
    })
}

#[derive(Debug, Clone)]
pub struct Completion {
    pub method: Method,
    pub dose: DoseFraction,
    /// Full sinogram: measured rows plus completed missing rows.
    pub sinogram: Sinogram,
    pub reconstruction: Image,
    pub loss_history: Vec<f64>,
    pub stop: Option<StopReason>,
}

/// Keeps every `keep_every`-th row of `full` starting at row 0.
pub fn sparse_problem(
    geometry: &ScanGeometry,
    full: &Sinogram,
    dose: DoseFraction,
) -> Result<InpaintProblem> {
    let split = split_by_stride(geometry, dose.keep_every(), 0)?;
    InpaintProblem::from_full(geometry.clone(), split, full)
}

/// FBP from the measured rows alone.
pub fn sparse_reconstruction(problem: &InpaintProblem, filter: FilterSpec) -> Result<Image> {
    Reconstructor::new(problem.measured_geometry().clone(), filter).fbp(problem.measured())
}

/// Panics if any measured row of `completed` differs bitwise from the input.
pub fn assert_measured_preserved(problem: &InpaintProblem, completed: &Sinogram) {
    for (k, &i) in problem.split().measured_idx().iter().enumerate() {
        let same = problem
            .measured()
            .row(k)
            .iter()
            .zip(completed.row(i))
            .all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(same, "measured row {i} was modified");
    }
}

pub fn complete(
    problem: &InpaintProblem,
    method: Method,
    dose: DoseFraction,
    optimizer: &OptimizerConfig,
    filter: FilterSpec,
) -> Result<Completion> {
    let (missing, loss_history, stop) = match method {
        Method::Nearest => (interpolate_nearest(problem), Vec::new(), None),
        Method::Linear => (interpolate_linear(problem), Vec::new(), None),
        Method::Optimize => {
            let state = optimize(problem, optimizer, filter)?;
            (state.missing, state.loss_history, Some(state.stop))
        }
    };
    let sinogram = assemble_full(problem, &missing)?;
    assert_measured_preserved(problem, &sinogram);
    let reconstruction = Reconstructor::new(problem.geometry().clone(), filter).fbp(&sinogram)?;
    Ok(Completion {
        method,
        dose,
        sinogram,
        reconstruction,
        loss_history,
        stop,
    })
}

/// What reconstructions are scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReferenceKind {
    /// FBP of every measured angle, before any are dropped.
    #[default]
    FullScan,
    /// The rasterized phantom.
    Phantom,
}

impl ReferenceKind {
    pub fn name(&self) -> &'static str {
        match self {
            ReferenceKind::FullScan => "full_scan",
            ReferenceKind::Phantom => "phantom",
        }
    }
}

impl FromStr for ReferenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full_scan" => Ok(ReferenceKind::FullScan),
            "phantom" => Ok(ReferenceKind::Phantom),
            _ => Err(Error::invalid("reference", "one of full_scan, phantom")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskKind {
    #[default]
    Circle,
    Full,
}

impl MaskKind {
    pub fn build(&self, size: usize) -> Mask {
        match self {
            MaskKind::Circle => Mask::reconstruction_circle(size),
            MaskKind::Full => Mask::full(size),
        }
    }
}

impl FromStr for MaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circle" => Ok(MaskKind::Circle),
            "full" => Ok(MaskKind::Full),
            _ => Err(Error::invalid("mask", "one of circle, full")),
        }
    }
}

/// Reference images shared by every method of one acquisition.
#[derive(Debug, Clone)]
pub struct Scorer {
    pub phantom: Image,
    pub full_scan: Image,
    pub data_range: f64,
    pub mask: Mask,
}

impl Scorer {
    /// `data_range` is the phantom maximum for both references.
    pub fn new(ground_truth: Image, full_scan: Image, mask: MaskKind) -> Result<Self> {
        let data_range = ground_truth.max();
        if data_range.is_nan() || data_range <= 0.0 {
            return Err(Error::invalid(
                "phantom",
                "rasterized maximum must be positive",
            ));
        }
        let mask = mask.build(ground_truth.size());
        Ok(Self {
            phantom: ground_truth,
            full_scan,
            data_range,
            mask,
        })
    }

    pub fn for_acquisition(acq: &Acquisition, filter: FilterSpec, mask: MaskKind) -> Result<Self> {
        let full_scan = Reconstructor::new(acq.geometry.clone(), filter).fbp(&acq.measured)?;
        Self::new(acq.ground_truth.clone(), full_scan, mask)
    }

    pub fn reference(&self, kind: ReferenceKind) -> &Image {
        match kind {
            ReferenceKind::FullScan => &self.full_scan,
            ReferenceKind::Phantom => &self.phantom,
        }
    }

    pub fn score(&self, kind: ReferenceKind, img: &Image) -> Result<MetricReport> {
        metrics::evaluate(self.reference(kind), img, self.data_range, Some(&self.mask))
    }
}

#[derive(Debug, Clone)]
pub struct Record {
    pub seed: u64,
    pub dose: DoseFraction,
    pub method: Method,
    pub vs_full_scan: MetricReport,
    pub vs_phantom: MetricReport,
    pub loss_history: Vec<f64>,
}

impl Record {
    pub fn report(&self, kind: ReferenceKind) -> &MetricReport {
        match kind {
            ReferenceKind::FullScan => &self.vs_full_scan,
            ReferenceKind::Phantom => &self.vs_phantom,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkSpec {
    pub phantom: Phantom,
    pub geometry: ScanGeometry,
    pub noise_rel_sigma: f64,
    pub filter: FilterSpec,
    pub optimizer: OptimizerConfig,
    pub mask: MaskKind,
}

/// Every (seed, dose, method) combination, in that nesting order.
pub fn run_benchmark(
    spec: &BenchmarkSpec,
    seeds: &[u64],
    doses: &[DoseFraction],
) -> Result<Vec<Record>> {
    let mut out = Vec::with_capacity(seeds.len() * doses.len() * Method::ALL.len());
    for &seed in seeds {
        let acq = acquire(&spec.phantom, &spec.geometry, spec.noise_rel_sigma, seed)?;
        let scorer = Scorer::for_acquisition(&acq, spec.filter, spec.mask)?;
        for &dose in doses {
            let problem = sparse_problem(&acq.geometry, &acq.measured, dose)?;
            for method in Method::ALL {
                let c = complete(&problem, method, dose, &spec.optimizer, spec.filter)?;
                out.push(Record {
                    seed,
                    dose,
                    method,
                    vs_full_scan: scorer.score(ReferenceKind::FullScan, &c.reconstruction)?,
                    vs_phantom: scorer.score(ReferenceKind::Phantom, &c.reconstruction)?,
                    loss_history: c.loss_history,
                });
            }
        }
    }
    Ok(out)
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub dose: DoseFraction,
    pub psnr_db: (f64, f64),
    pub ssim: (f64, f64),
    pub runs: usize,
}

/// One row per (dose, method) pair, aggregating over seeds.
pub fn summarize(records: &[Record], kind: ReferenceKind) -> Vec<SummaryRow> {
    let mut keys: Vec<(DoseFraction, Method)> =
        records.iter().map(|r| (r.dose, r.method)).collect();
    keys.sort_by(|a, b| b.0.value().total_cmp(&a.0.value()).then(a.1.cmp(&b.1)));
    keys.dedup();
    keys.into_iter()
        .map(|(dose, method)| {
            let sel: Vec<&MetricReport> = records
                .iter()
                .filter(|r| r.dose == dose && r.method == method)
                .map(|r| r.report(kind))
                .collect();
            let psnr: Vec<f64> = sel.iter().map(|m| m.psnr_db).collect();
            let ssim: Vec<f64> = sel.iter().map(|m| m.ssim).collect();
            SummaryRow {
                method,
                dose,
                psnr_db: mean_std(&psnr),
                ssim: mean_std(&ssim),
                runs: sel.len(),
            }
        })
        .collect()
}

/// `method,dose_fraction,psnr_db,ssim`, with `_std` columns after each mean
/// when `with_std` is set.
pub fn metrics_csv(rows: &[SummaryRow], with_std: bool) -> String {
    let mut out = String::from(if with_std {
        "method,dose_fraction,psnr_db,psnr_db_std,ssim,ssim_std\n"
    } else {
        "method,dose_fraction,psnr_db,ssim\n"
    });
    for r in rows {
        if with_std {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.method, r.dose, r.psnr_db.0, r.psnr_db.1, r.ssim.0, r.ssim.1
            ));
        } else {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.method, r.dose, r.psnr_db.0, r.ssim.0
            ));
        }
    }
    out
}
