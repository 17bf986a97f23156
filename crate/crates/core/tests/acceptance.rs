//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test --release --test acceptance`.

mod common;

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::*;
use rand::Rng;
use sinofill::experiment::{
    acquire, complete, mean_std, sparse_problem, DoseFraction, MaskKind, Method, ReferenceKind,
    Scorer,
};
use sinofill::geometry::min_num_bins;
use sinofill::inpaint::{interpolate_linear, LossKind, OptimizerConfig, SelfSupervisedLoss};
use sinofill::phantom::{analytic_sinogram, rasterize, shepp_logan};
use sinofill::projector::{adjoint, fbp, forward};
use sinofill::{make_full_scan, FilterSpec, Sinogram};

// Criterion 1
const BENCH_SIZE: usize = 256;
const BENCH_ANGLES: usize = 360;
const BENCH_NOISE_REL: f64 = 0.01;
const BENCH_SEEDS: [u64; 3] = [1, 2, 3];
const BENCH_DOSES: [usize; 2] = [2, 3];
const MIN_PSNR_RATIO: f64 = 1.02;
const MIN_SSIM_RATIO: f64 = 1.03;
const BENCH_BUDGET_S: f64 = 600.0;
// Criterion 3
const ADJOINT_SIZES: [usize; 3] = [32, 64, 128];
const ADJOINT_PAIRS: usize = 20;
const ADJOINT_TOL: f64 = 1e-6;
const ADJOINT_BUDGET_S: f64 = 30.0;
// Criterion 4
const FD_SIZE: usize = 64;
const FD_COORDS: usize = 10;
const FD_TOL: f64 = 1e-3;
const FD_BUDGET_S: f64 = 60.0;
// Criterion 5
const FORWARD_SIZE: usize = 256;
const FORWARD_ANGLES: usize = 90;
const FORWARD_TOL: f64 = 0.02;
// Criterion 6
const FBP_ANGLES: usize = 360;
const FBP_ERODE_PX: f64 = 3.0;
const FBP_TOL: f64 = 0.05;

struct Outcome {
    id: u32,
    title: &'static str,
    passed: bool,
    detail: String,
}

#[derive(Default)]
struct Bench {
    /// [dose][method][seed] -> (psnr, ssim) against the full-scan reference
    full_scan: Vec<Vec<Vec<(f64, f64)>>>,
    phantom: Vec<Vec<Vec<(f64, f64)>>>,
    preserved: bool,
    runs: usize,
    descended: usize,
    seconds: f64,
}

fn run_benchmark() -> Bench {
    let t = Instant::now();
    let g = make_full_scan(BENCH_ANGLES, BENCH_SIZE, min_num_bins(BENCH_SIZE)).unwrap();
    let filter = FilterSpec::default();
    let cfg = OptimizerConfig::default();
    let nm = Method::ALL.len();
    let mut b = Bench {
        full_scan: vec![vec![Vec::new(); nm]; BENCH_DOSES.len()],
        phantom: vec![vec![Vec::new(); nm]; BENCH_DOSES.len()],
        preserved: true,
        ..Default::default()
    };
    for seed in BENCH_SEEDS {
        let acq = acquire(&shepp_logan(), &g, BENCH_NOISE_REL, seed).unwrap();
        let scorer = Scorer::for_acquisition(&acq, filter, MaskKind::Circle).unwrap();
        for (d, &k) in BENCH_DOSES.iter().enumerate() {
            let dose = DoseFraction::new(k).unwrap();
            let problem = sparse_problem(&g, &acq.measured, dose).unwrap();
            for (m, method) in Method::ALL.into_iter().enumerate() {
                let c = complete(&problem, method, dose, &cfg, filter).unwrap();
                b.runs += 1;
                b.preserved &= problem.split().measured_idx().iter().all(|&i| {
                    c.sinogram
                        .row(i)
                        .iter()
                        .zip(acq.measured.row(i))
                        .all(|(x, y)| x.to_bits() == y.to_bits())
                });
                if method == Method::Optimize && c.loss_history.last() < c.loss_history.first() {
                    b.descended += 1;
                }
                let f = scorer
                    .score(ReferenceKind::FullScan, &c.reconstruction)
                    .unwrap();
                let p = scorer
                    .score(ReferenceKind::Phantom, &c.reconstruction)
                    .unwrap();
                b.full_scan[d][m].push((f.psnr_db, f.ssim));
                b.phantom[d][m].push((p.psnr_db, p.ssim));
                println!(
                    "    seed {seed} dose 1/{k} {:<8} vs full scan {:.3} dB / {:.4}, vs phantom {:.3} dB / {:.4}, {} iterations",
                    method.name(),
                    f.psnr_db,
                    f.ssim,
                    p.psnr_db,
                    p.ssim,
                    c.loss_history.len()
                );
            }
        }
    }
    b.seconds = t.elapsed().as_secs_f64();
    b
}

fn means(v: &[(f64, f64)]) -> (f64, f64) {
    let p: Vec<f64> = v.iter().map(|x| x.0).collect();
    let s: Vec<f64> = v.iter().map(|x| x.1).collect();
    (mean_std(&p).0, mean_std(&s).0)
}

fn criterion_1(b: &Bench) -> Outcome {
    let (near, opt) = (0, 2);
    let mut passed = b.seconds < BENCH_BUDGET_S;
    let mut parts = Vec::new();
    for (d, k) in BENCH_DOSES.iter().enumerate() {
        let (pn, sn) = means(&b.full_scan[d][near]);
        let (po, so) = means(&b.full_scan[d][opt]);
        let (rp, rs) = (po / pn, so / sn);
        passed &= rp >= MIN_PSNR_RATIO && rs >= MIN_SSIM_RATIO;
        let (qn, tn) = means(&b.phantom[d][near]);
        let (qo, to) = means(&b.phantom[d][opt]);
        parts.push(format!(
            "dose 1/{k}: psnr x{rp:.4} (>= {MIN_PSNR_RATIO}), ssim x{rs:.4} (>= {MIN_SSIM_RATIO}) [vs phantom: psnr x{:.4}, ssim x{:.4}]",
            qo / qn,
            to / tn
        ));
    }
    Outcome {
        id: 1,
        title: "relative improvement over nearest (mean of 3 seeds, vs full-scan FBP)",
        passed,
        detail: format!(
            "{}; {:.0} s (< {BENCH_BUDGET_S} s)",
            parts.join("; "),
            b.seconds
        ),
    }
}

fn criterion_2(b: &Bench) -> Outcome {
    let mut violations = Vec::new();
    let mut phantom_violations = 0;
    for (d, k) in BENCH_DOSES.iter().enumerate() {
        for (s, seed) in BENCH_SEEDS.iter().enumerate() {
            let [n, l, o] = [0, 1, 2].map(|m| b.full_scan[d][m][s]);
            if !(n.0 <= l.0 && l.0 <= o.0) {
                violations.push(format!("psnr dose 1/{k} seed {seed}"));
            }
            if !(n.1 <= l.1 && l.1 <= o.1) {
                violations.push(format!("ssim dose 1/{k} seed {seed}"));
            }
            let [n, l, o] = [0, 1, 2].map(|m| b.phantom[d][m][s]);
            phantom_violations +=
                usize::from(!(n.0 <= l.0 && l.0 <= o.0)) + usize::from(!(n.1 <= l.1 && l.1 <= o.1));
        }
    }
    Outcome {
        id: 2,
        title: "ordering nearest <= linear <= optimized, each dose and seed",
        passed: violations.is_empty(),
        detail: format!(
            "{} comparisons, violations: {} [vs phantom: {phantom_violations} violations]",
            BENCH_DOSES.len() * BENCH_SEEDS.len() * 2,
            if violations.is_empty() {
                "none".to_string()
            } else {
                violations.join(", ")
            }
        ),
    }
}

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let mut r = rng(3);
    let mut worst = 0.0f64;
    for n in ADJOINT_SIZES {
        let g = make_full_scan(45, n, min_num_bins(n)).unwrap();
        for _ in 0..ADJOINT_PAIRS {
            let x = random_image(&mut r, n);
            let y = random_sino(&mut r, &g);
            let lhs = forward(&x, &g).unwrap().dot(&y);
            let rhs = x.dot(&adjoint(&y, &g).unwrap());
            worst = worst.max(rel(lhs, rhs));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    Outcome {
        id: 3,
        title: "adjoint identity, 20 pairs at sizes 32/64/128",
        passed: worst < ADJOINT_TOL && secs < ADJOINT_BUDGET_S,
        detail: format!(
            "max rel {worst:.2e} (< {ADJOINT_TOL:e}); {secs:.2} s (< {ADJOINT_BUDGET_S} s)"
        ),
    }
}

fn criterion_4() -> Outcome {
    let t = Instant::now();
    let n = FD_SIZE;
    let g = make_full_scan(60, n, min_num_bins(n)).unwrap();
    let acq = acquire(&shepp_logan(), &g, BENCH_NOISE_REL, 4).unwrap();
    let problem = sparse_problem(&g, &acq.measured, DoseFraction::new(3).unwrap()).unwrap();
    let obj = SelfSupervisedLoss::new(&problem, FilterSpec::default(), LossKind::Mse).unwrap();
    let mut r = rng(4);
    let mut missing: Sinogram = interpolate_linear(&problem);
    missing
        .data_mut()
        .iter_mut()
        .for_each(|v| *v += r.random_range(-0.5..0.5));
    let (_, grad) = obj.value_and_grad(&missing).unwrap();
    let nb = missing.num_bins();
    let margin = (nb - n) / 2;
    let h = 1e-3;
    let mut worst = 0.0f64;
    for _ in 0..FD_COORDS {
        let idx =
            r.random_range(0..missing.num_angles()) * nb + r.random_range(margin..nb - margin);
        let mut plus = missing.clone();
        plus.data_mut()[idx] += h;
        let mut minus = missing.clone();
        minus.data_mut()[idx] -= h;
        let fd = (obj.evaluate(&plus).unwrap().0 - obj.evaluate(&minus).unwrap().0) / (2.0 * h);
        worst = worst.max(rel(fd, grad.data()[idx]));
    }
    let secs = t.elapsed().as_secs_f64();
    Outcome {
        id: 4,
        title: "finite-difference gradient through the MSE loss pipeline, size 64",
        passed: worst < FD_TOL && secs < FD_BUDGET_S,
        detail: format!("max rel {worst:.2e} over {FD_COORDS} entries (< {FD_TOL:e}); {secs:.2} s (< {FD_BUDGET_S} s)"),
    }
}

fn criterion_5() -> Outcome {
    let g = make_full_scan(FORWARD_ANGLES, FORWARD_SIZE, min_num_bins(FORWARD_SIZE)).unwrap();
    let disk = centered_disk();
    let fw = forward(&rasterize(&disk, FORWARD_SIZE, 1.0), &g).unwrap();
    let err = rel_l2(fw.data(), analytic_sinogram(&disk, &g).data());
    Outcome {
        id: 5,
        title: "forward vs analytic disk sinogram, size 256, 90 angles",
        passed: err < FORWARD_TOL,
        detail: format!(
            "relative L2 {:.3}% (< {}%)",
            100.0 * err,
            100.0 * FORWARD_TOL
        ),
    }
}

fn criterion_6() -> Outcome {
    let n = FORWARD_SIZE;
    let g = make_full_scan(FBP_ANGLES, n, min_num_bins(n)).unwrap();
    let disk = centered_disk();
    let img = fbp(&analytic_sinogram(&disk, &g), &g, FilterSpec::default()).unwrap();
    let mean = eroded_mean(&img, &disk.ellipses[0], FBP_ERODE_PX);
    let err = (mean - 1.0).abs();
    Outcome {
        id: 6,
        title: "FBP of dense disk sinogram recovers density (3-px eroded interior)",
        passed: err < FBP_TOL,
        detail: format!(
            "interior mean {mean:.5}, error {:.3}% (< {}%)",
            100.0 * err,
            100.0 * FBP_TOL
        ),
    }
}

fn criterion_7(b: &Bench) -> Outcome {
    Outcome {
        id: 7,
        title: "measured rows bit-identical after completion, every run",
        passed: b.preserved,
        detail: format!(
            "{} runs checked; optimize lowered its loss in {} of {} runs",
            b.runs,
            b.descended,
            b.runs / Method::ALL.len()
        ),
    }
}

fn cli_pipeline(out: &Path) {
    let bin = env!("CARGO_BIN_EXE_sinofill");
    let common = [
        "--image-size",
        "64",
        "--num-angles",
        "90",
        "--seed",
        "8",
        "--iterations",
        "40",
    ];
    let run = |args: &[&str]| {
        let o = Command::new(bin)
            .args(args)
            .args(common)
            .arg("--out")
            .arg(out)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    run(&["simulate"]);
    for dose in ["1/2", "1/3"] {
        for m in ["nearest", "linear", "optimize"] {
            run(&["inpaint", "--method", m, "--dose", dose]);
        }
    }
    run(&["evaluate"]);
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    cli_pipeline(&a);
    cli_pipeline(&b);
    let mut files = vec!["metrics.csv".to_string(), "sinogram.sino".to_string()];
    for dose in ["dose_1-2", "dose_1-3"] {
        for m in ["nearest", "linear", "optimize"] {
            files.push(format!("{dose}/{m}/sinogram.sino"));
        }
        files.push(format!("{dose}/optimize/loss.csv"));
    }
    let differing: Vec<&String> = files
        .iter()
        .filter(|f| fs::read(a.join(f)).unwrap() != fs::read(b.join(f)).unwrap())
        .collect();
    Outcome {
        id: 8,
        title: "two end-to-end CLI runs give byte-identical CSVs and sinograms",
        passed: differing.is_empty(),
        detail: format!("{} files compared, {} differ", files.len(), differing.len()),
    }
}

fn main() {
    // `cargo test` passes harness flags; listing must not run the suite.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut outcomes = vec![
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_8(),
    ];
    println!("  running benchmark (Shepp-Logan 256, 360 angles, 3 seeds, doses 1/2 and 1/3)");
    let bench = run_benchmark();
    outcomes.extend([
        criterion_1(&bench),
        criterion_2(&bench),
        criterion_7(&bench),
    ]);
    outcomes.sort_by_key(|o| o.id);
    println!();
    for o in &outcomes {
        println!(
            "{} criterion {}: {}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.id,
            o.title,
            o.detail
        );
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("acceptance: {} criteria, {failed} failed", outcomes.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
