use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sinofill::config::ExperimentConfig;
use sinofill::experiment::{
    acquire, complete, metrics_csv, sparse_problem, sparse_reconstruction, summarize, Method,
    Record, ReferenceKind, Scorer,
};
use sinofill::io;
use sinofill::selftest::{self, SelftestOptions};
use sinofill::{Error, Image, Reconstructor, Result};

/// Sparse-view CT sinogram inpainting by self-supervised optimization.
#[derive(Parser)]
#[command(name = "sinofill", version, args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize the phantom and write the full noisy sinogram.
    Simulate(ConfigArgs),
    /// Drop angles per the dose and complete them with one method.
    Inpaint {
        /// nearest, linear or optimize
        #[arg(long)]
        method: String,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score every method and dose; write metrics.csv and comparison grids.
    Evaluate(ConfigArgs),
    /// Run the built-in numerical checks.
    Selftest {
        /// Break the forward/adjoint pairing to confirm the check catches it.
        #[arg(long)]
        mismatched_adjoint: bool,
    },
}

/// Every config key, overridable from the command line.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// TOML config file; flags below take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    phantom: Option<String>,
    #[arg(long, alias = "image_size")]
    image_size: Option<usize>,
    #[arg(long, alias = "num_angles")]
    num_angles: Option<usize>,
    #[arg(long, alias = "num_bins")]
    num_bins: Option<usize>,
    /// Measured fraction 1/k for inpaint.
    #[arg(long)]
    dose: Option<String>,
    /// Comma-separated fractions for evaluate.
    #[arg(long, value_delimiter = ',')]
    doses: Option<Vec<String>>,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long, alias = "noise_rel_sigma")]
    noise_rel_sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
    /// ram_lak or hann
    #[arg(long)]
    filter: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    loss: Option<String>,
    #[arg(long, alias = "plateau_patience")]
    plateau_patience: Option<usize>,
    #[arg(long, alias = "plateau_rel_tol")]
    plateau_rel_tol: Option<f64>,
    #[arg(long, alias = "clamp_nonnegative")]
    clamp_nonnegative: Option<bool>,
    #[arg(long)]
    init: Option<String>,
    /// full_scan or phantom
    #[arg(long)]
    reference: Option<String>,
    /// circle or full
    #[arg(long)]
    mask: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

macro_rules! override_fields {
    ($cfg:ident, $args:ident; $($field:ident),* $(,)?) => {
        $(if let Some(v) = $args.$field.clone() { $cfg.$field = v; })*
    };
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let args = self;
        override_fields!(cfg, args;
            phantom, image_size, num_angles, num_bins, dose, doses, noise, noise_rel_sigma,
            seed, repeats, filter, lr, iterations, loss, plateau_patience, plateau_rel_tol,
            clamp_nonnegative, init, reference, mask, out,
        );
        cfg.validate()?;
        Ok(cfg)
    }
}

fn fresh_target(path: &Path) -> Result<()> {
    if path.exists() {
        return Err(Error::Config(format!(
            "`{}` already exists; choose a fresh output directory",
            path.display()
        )));
    }
    Ok(())
}

fn write_image(dir: &Path, stem: &str, img: &Image, data_range: f64) -> Result<()> {
    io::write_image_raw(&dir.join(format!("{stem}.f64")), img)?;
    io::write_image_png(&dir.join(format!("{stem}.png")), img, data_range)
}

fn simulate(cfg: &ExperimentConfig) -> Result<()> {
    let phantom = cfg.load_phantom()?;
    let geometry = cfg.geometry()?;
    let rel_sigma = cfg.noise_rel_sigma()?;
    for seed in cfg.seeds()? {
        let dir = cfg.run_dir(seed);
        let target = dir.join("sinogram.sino");
        fresh_target(&target)?;
        fs::create_dir_all(&dir)?;
        let acq = acquire(&phantom, &geometry, rel_sigma, seed)?;
        let noise_seed = (acq.noise.sigma > 0.0).then_some(seed);
        io::write_sinogram(&target, &geometry, &acq.measured, noise_seed)?;
        write_image(
            &dir,
            "ground_truth",
            &acq.ground_truth,
            acq.ground_truth.max(),
        )?;
        println!(
            "simulate: seed {seed}: {} angles x {} bins, noise sigma {:.6}, wrote {}",
            geometry.num_angles(),
            geometry.num_bins(),
            acq.noise.sigma,
            dir.display()
        );
    }
    Ok(())
}

fn inpaint(cfg: &ExperimentConfig, method: Method) -> Result<()> {
    let dose = cfg.dose()?;
    let filter = cfg.filter()?;
    let optimizer = cfg.optimizer()?;
    for seed in cfg.seeds()? {
        let dir = cfg.run_dir(seed);
        let input = io::read_sinogram(&dir.join("sinogram.sino"))?;
        let data_range = io::read_image_raw(&dir.join("ground_truth.f64"))?.max();
        let target = dir.join(dose.dir_name()).join(method.name());
        fresh_target(&target)?;
        let problem = sparse_problem(&input.geometry, &input.sinogram, dose)?;
        let done = complete(&problem, method, dose, &optimizer, filter)?;
        fs::create_dir_all(&target)?;
        io::write_sinogram(
            &target.join("sinogram.sino"),
            &input.geometry,
            &done.sinogram,
            input.noise_seed,
        )?;
        write_image(&target, "reconstruction", &done.reconstruction, data_range)?;
        let mut line = format!(
            "inpaint: seed {seed}, dose {dose}, {method}: {} measured / {} missing rows",
            problem.split().measured_idx().len(),
            problem.split().missing_idx().len()
        );
        if method == Method::Optimize {
            fs::write(target.join("loss.csv"), io::loss_csv(&done.loss_history))?;
            if let (Some(first), Some(last)) = (done.loss_history.first(), done.loss_history.last())
            {
                line.push_str(&format!(
                    ", {} iterations ({:?}), loss {first:.6e} -> {last:.6e}",
                    done.loss_history.len(),
                    done.stop.expect("optimize reports a stop reason")
                ));
            }
        }
        println!("{line}");
    }
    Ok(())
}

fn evaluate(cfg: &ExperimentConfig) -> Result<()> {
    let filter = cfg.filter()?;
    let reference = cfg.reference()?;
    let doses = cfg.doses()?;
    let seeds = cfg.seeds()?;
    let mut records = Vec::new();
    for (k, &seed) in seeds.iter().enumerate() {
        let dir = cfg.run_dir(seed);
        let input = io::read_sinogram(&dir.join("sinogram.sino"))?;
        let gt = io::read_image_raw(&dir.join("ground_truth.f64"))?;
        let full = Reconstructor::new(input.geometry.clone(), filter).fbp(&input.sinogram)?;
        let scorer = Scorer::new(gt, full, cfg.mask()?)?;
        for &dose in &doses {
            let mut panels = vec![scorer.reference(reference).clone()];
            if k == 0 {
                let problem = sparse_problem(&input.geometry, &input.sinogram, dose)?;
                panels.push(sparse_reconstruction(&problem, filter)?);
            }
            for method in Method::ALL {
                let path = dir
                    .join(dose.dir_name())
                    .join(method.name())
                    .join("reconstruction.f64");
                let img = io::read_image_raw(&path)?;
                records.push(Record {
                    seed,
                    dose,
                    method,
                    vs_full_scan: scorer.score(ReferenceKind::FullScan, &img)?,
                    vs_phantom: scorer.score(ReferenceKind::Phantom, &img)?,
                    loss_history: Vec::new(),
                });
                panels.push(img);
            }
            if k == 0 {
                let refs: Vec<&Image> = panels.iter().collect();
                let grid = cfg.out.join(format!("comparison_{}.png", dose.dir_name()));
                io::write_image_grid(&grid, &refs, scorer.data_range)?;
            }
        }
    }
    let rows = summarize(&records, reference);
    fs::create_dir_all(&cfg.out)?;
    fs::write(
        cfg.out.join("metrics.csv"),
        metrics_csv(&rows, seeds.len() > 1),
    )?;
    println!(
        "reference: {}, runs per row: {}",
        reference.name(),
        seeds.len()
    );
    println!(
        "{:<10} {:>6} {:>10} {:>8}",
        "method", "dose", "psnr_db", "ssim"
    );
    for r in &rows {
        println!(
            "{:<10} {:>6} {:>10.3} {:>8.4}",
            r.method.name(),
            r.dose.to_string(),
            r.psnr_db.0,
            r.ssim.0
        );
    }
    Ok(())
}

fn run_selftest(options: SelftestOptions) -> Result<bool> {
    let checks = selftest::run(options)?;
    let mut ok = true;
    for c in &checks {
        ok &= c.passed();
        println!(
            "{} [{}] {}: measured {:.3e}, tolerance {:.0e}",
            if c.passed() { "PASS" } else { "FAIL" },
            c.family,
            c.name,
            c.measured,
            c.tolerance
        );
    }
    let failed = checks.iter().filter(|c| !c.passed()).count();
    println!("selftest: {} checks, {failed} failed", checks.len());
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate(args) => simulate(&args.resolve()?).map(|_| true),
        Command::Inpaint { method, config } => {
            let cfg = config.resolve()?;
            inpaint(&cfg, method.parse()?).map(|_| true)
        }
        Command::Evaluate(args) => evaluate(&args.resolve()?).map(|_| true),
        Command::Selftest { mismatched_adjoint } => {
            run_selftest(SelftestOptions { mismatched_adjoint })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
