//! Flat TOML experiment configuration.
//!
//! ```toml
//! phantom = "shepp_logan"      # or a path to an ellipse text file
//! image_size = 256
//! num_angles = 360
//! num_bins = 0                 # 0 picks the smallest covering detector
//! dose = "1/2"                 # used by `inpaint`
//! doses = ["1/2", "1/3"]       # used by `evaluate`
//! noise = "gaussian"           # or "none"
//! noise_rel_sigma = 0.01       # fraction of the clean sinogram maximum
//! seed = 0
//! repeats = 1                  # seeds seed, seed+1, ...
//! filter = "ram_lak"           # or "hann"
//! lr = 0.1
//! iterations = 500
//! loss = "mae"                 # or "mse"
//! plateau_patience = 50
//! plateau_rel_tol = 1e-4
//! clamp_nonnegative = true
//! init = "linear"              # or "nearest"
//! reference = "full_scan"      # or "phantom"
//! mask = "circle"              # or "full"
//! out = "out"
//! ```
//!
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::experiment::{BenchmarkSpec, DoseFraction, MaskKind, ReferenceKind};
use crate::geometry::{make_full_scan, min_num_bins, ScanGeometry};
use crate::inpaint::{InitMethod, LossKind, OptimizerConfig};
use crate::phantom::{shepp_logan, Phantom};
use crate::projector::{FilterKind, FilterSpec};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub phantom: String,
    pub image_size: usize,
    pub num_angles: usize,
    pub num_bins: usize,
    pub dose: String,
    pub doses: Vec<String>,
    pub noise: String,
    pub noise_rel_sigma: f64,
    pub seed: u64,
    pub repeats: usize,
    pub filter: String,
    pub lr: f64,
    pub iterations: usize,
    pub loss: String,
    pub plateau_patience: usize,
    pub plateau_rel_tol: f64,
    pub clamp_nonnegative: bool,
    pub init: String,
    pub reference: String,
    pub mask: String,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let opt = OptimizerConfig::default();
        Self {
            phantom: "shepp_logan".into(),
            image_size: 256,
            num_angles: 360,
            num_bins: 0,
            dose: "1/2".into(),
            doses: vec!["1/2".into(), "1/3".into()],
            noise: "gaussian".into(),
            noise_rel_sigma: 0.01,
            seed: 0,
            repeats: 1,
            filter: "ram_lak".into(),
            lr: opt.learning_rate,
            iterations: opt.max_iterations,
            loss: "mae".into(),
            plateau_patience: opt.plateau_patience,
            plateau_rel_tol: opt.plateau_rel_tol,
            clamp_nonnegative: opt.clamp_nonnegative,
            init: "linear".into(),
            reference: "full_scan".into(),
            mask: "circle".into(),
            out: PathBuf::from("out"),
        }
    }
}

fn parse<T: std::str::FromStr>(field: &'static str, raw: &str, expected: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::invalid(field, format!("`{raw}` is not one of {expected}")))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_toml(&text)
    }

    pub fn load_phantom(&self) -> Result<Phantom> {
        match self.phantom.as_str() {
            "shepp_logan" => Ok(shepp_logan()),
            path => Phantom::load(Path::new(path)),
        }
    }

    pub fn geometry(&self) -> Result<ScanGeometry> {
        if self.image_size == 0 {
            return Err(Error::invalid("image_size", "must be >= 1"));
        }
        let bins = if self.num_bins == 0 {
            min_num_bins(self.image_size)
        } else {
            self.num_bins
        };
        make_full_scan(self.num_angles, self.image_size, bins)
    }

    pub fn noise_rel_sigma(&self) -> Result<f64> {
        match self.noise.as_str() {
            "none" => Ok(0.0),
            "gaussian" if self.noise_rel_sigma >= 0.0 && self.noise_rel_sigma.is_finite() => {
                Ok(self.noise_rel_sigma)
            }
            "gaussian" => Err(Error::invalid("noise_rel_sigma", "must be finite and >= 0")),
            _ => Err(Error::invalid("noise", "one of gaussian, none")),
        }
    }

    pub fn filter(&self) -> Result<FilterSpec> {
        Ok(FilterSpec::new(parse::<FilterKind>(
            "filter",
            &self.filter,
            "ram_lak, hann",
        )?))
    }

    pub fn optimizer(&self) -> Result<OptimizerConfig> {
        let cfg = OptimizerConfig {
            learning_rate: self.lr,
            max_iterations: self.iterations,
            loss: parse::<LossKind>("loss", &self.loss, "mae, mse")?,
            plateau_patience: self.plateau_patience,
            plateau_rel_tol: self.plateau_rel_tol,
            clamp_nonnegative: self.clamp_nonnegative,
            init: parse::<InitMethod>("init", &self.init, "linear, nearest")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dose(&self) -> Result<DoseFraction> {
        self.dose.parse()
    }

    pub fn doses(&self) -> Result<Vec<DoseFraction>> {
        if self.doses.is_empty() {
            return Err(Error::invalid("doses", "at least one dose is required"));
        }
        self.doses.iter().map(|d| d.parse()).collect()
    }

    pub fn reference(&self) -> Result<ReferenceKind> {
        self.reference.parse()
    }

    pub fn mask(&self) -> Result<MaskKind> {
        self.mask.parse()
    }

    pub fn seeds(&self) -> Result<Vec<u64>> {
        if self.repeats == 0 {
            return Err(Error::invalid("repeats", "must be >= 1"));
        }
        Ok((0..self.repeats as u64)
            .map(|k| self.seed.wrapping_add(k))
            .collect())
    }

    /// Output directory of one seed: `out` itself for a single run,
    /// `out/seed_<s>` when repeating.
    pub fn run_dir(&self, seed: u64) -> PathBuf {
        if self.repeats <= 1 {
            self.out.clone()
        } else {
            self.out.join(format!("seed_{seed}"))
        }
    }

    pub fn benchmark(&self) -> Result<BenchmarkSpec> {
        Ok(BenchmarkSpec {
            phantom: self.load_phantom()?,
            geometry: self.geometry()?,
            noise_rel_sigma: self.noise_rel_sigma()?,
            filter: self.filter()?,
            optimizer: self.optimizer()?,
            mask: self.mask()?,
        })
    }

    /// Checks every field that does not touch the filesystem.
    pub fn validate(&self) -> Result<()> {
        self.geometry()?;
        self.noise_rel_sigma()?;
        self.filter()?;
        self.optimizer()?;
        self.dose()?;
        self.doses()?;
        self.reference()?;
        self.mask()?;
        self.seeds()?;
        Ok(())
    }
}
