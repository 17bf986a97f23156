mod common;

use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use sinofill::experiment::{acquire, sparse_problem, DoseFraction};
use sinofill::geometry::min_num_bins;
use sinofill::inpaint::{
    assemble_full, interpolate_linear, interpolate_nearest, optimize, self_supervised_loss,
    InitMethod, InpaintProblem, LossKind, OptimizerConfig, SelfSupervisedLoss, StopReason,
};
use sinofill::phantom::{analytic_sinogram, shepp_logan};
use sinofill::{
    make_full_scan, split_by_stride, AngleSplit, FilterSpec, Image, ScanGeometry, Sinogram,
};

fn noisy_problem(
    n: usize,
    angles: usize,
    keep_every: usize,
    seed: u64,
) -> (ScanGeometry, Sinogram, InpaintProblem) {
    let g = make_full_scan(angles, n, min_num_bins(n)).unwrap();
    let acq = acquire(&shepp_logan(), &g, 0.01, seed).unwrap();
    let p = sparse_problem(&g, &acq.measured, DoseFraction::new(keep_every).unwrap()).unwrap();
    (g, acq.measured, p)
}

fn inner_index(rng: &mut impl Rng, block: &Sinogram, n: usize) -> usize {
    let nb = block.num_bins();
    let margin = (nb - n) / 2;
    rng.random_range(0..block.num_angles()) * nb + rng.random_range(margin..nb - margin)
}

#[test]
fn zero_blocks_give_zero_loss_and_gradient() {
    let g = make_full_scan(12, 32, 46).unwrap();
    let split = split_by_stride(&g, 2, 0).unwrap();
    let problem = InpaintProblem::new(g.clone(), split, vec![0.0; 6 * 46]).unwrap();
    let missing = interpolate_linear(&problem);
    let (loss, grad) =
        self_supervised_loss(&problem, &missing, FilterSpec::default(), LossKind::Mae).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grad.data().iter().all(|&v| v == 0.0));
}

#[test]
fn mae_of_constant_offset() {
    let mut r = rng(1);
    let target = random_image(&mut r, 16);
    let c = 0.25;
    let pred = Image::from_vec(16, 1.0, target.data().iter().map(|v| v + c).collect()).unwrap();
    let (loss, grad) = LossKind::Mae.evaluate(&pred, &target);
    assert!((loss - c).abs() < 1e-15);
    assert!(grad.data().iter().all(|&g| g == 1.0 / 256.0));
}

#[test]
fn loss_rejects_wrong_block_shape() {
    let (_, _, problem) = noisy_problem(32, 12, 3, 0);
    let wrong = Sinogram::zeros(problem.measured_geometry());
    assert!(self_supervised_loss(&problem, &wrong, FilterSpec::default(), LossKind::Mse).is_err());
}

#[test]
fn mse_gradient_matches_finite_differences() {
    let n = 64;
    let (_, _, problem) = noisy_problem(n, 60, 3, 2);
    let obj = SelfSupervisedLoss::new(&problem, FilterSpec::default(), LossKind::Mse).unwrap();
    let mut r = rng(2);
    let mut missing = interpolate_linear(&problem);
    missing
        .data_mut()
        .iter_mut()
        .for_each(|v| *v += r.random_range(-0.5..0.5));
    let (_, grad) = obj.value_and_grad(&missing).unwrap();
    let h = 1e-3;
    for _ in 0..10 {
        let idx = inner_index(&mut r, &missing, n);
        let mut plus = missing.clone();
        plus.data_mut()[idx] += h;
        let mut minus = missing.clone();
        minus.data_mut()[idx] -= h;
        let fd = (obj.evaluate(&plus).unwrap().0 - obj.evaluate(&minus).unwrap().0) / (2.0 * h);
        assert!(
            rel(fd, grad.data()[idx]) < 1e-3,
            "fd {fd} vs {}",
            grad.data()[idx]
        );
    }
}

/// Only coordinates whose perturbation leaves every residual sign unchanged
/// are scored, so the difference quotient never straddles the kink.
#[test]
fn mae_gradient_matches_finite_differences_away_from_kink() {
    let n = 64;
    let (_, _, problem) = noisy_problem(n, 60, 3, 3);
    let obj = SelfSupervisedLoss::new(&problem, FilterSpec::default(), LossKind::Mae).unwrap();
    let mut r = rng(3);
    let missing = interpolate_linear(&problem);
    let (_, grad) = obj.value_and_grad(&missing).unwrap();
    let signs = |b: &Sinogram| -> Vec<i8> {
        let recon =
            sinofill::projector::fbp(b, problem.missing_geometry(), FilterSpec::default()).unwrap();
        recon
            .data()
            .iter()
            .zip(obj.target().data())
            .map(|(p, t)| (p - t).signum() as i8)
            .collect()
    };
    let base = signs(&missing);
    let h = 1e-6;
    let mut scored = 0;
    for _ in 0..200 {
        if scored == 10 {
            break;
        }
        let idx = inner_index(&mut r, &missing, n);
        let mut plus = missing.clone();
        plus.data_mut()[idx] += h;
        let mut minus = missing.clone();
        minus.data_mut()[idx] -= h;
        if signs(&plus) != base || signs(&minus) != base {
            continue;
        }
        let fd = (obj.evaluate(&plus).unwrap().0 - obj.evaluate(&minus).unwrap().0) / (2.0 * h);
        assert!(
            rel(fd, grad.data()[idx]) < 1e-2,
            "fd {fd} vs {}",
            grad.data()[idx]
        );
        scored += 1;
    }
    assert_eq!(scored, 10);
}

#[test]
fn small_steps_descend_monotonically() {
    let (_, _, problem) = noisy_problem(64, 60, 2, 4);
    let cfg = OptimizerConfig {
        learning_rate: 1e-3,
        max_iterations: 50,
        loss: LossKind::Mse,
        plateau_patience: 1000,
        ..Default::default()
    };
    let st = optimize(&problem, &cfg, FilterSpec::default()).unwrap();
    assert_eq!(st.loss_history.len(), 50);
    assert_eq!(st.iteration, 50);
    for w in st.loss_history.windows(2) {
        assert!(w[1] <= w[0], "{} -> {}", w[0], w[1]);
    }
    assert!(st.loss_history[49] < st.loss_history[0]);
}

#[test]
fn optimize_is_deterministic_and_preserves_measurements() {
    let (_, _, problem) = noisy_problem(64, 60, 3, 5);
    let before = problem.measured().clone();
    let cfg = OptimizerConfig {
        max_iterations: 20,
        learning_rate: 10.0,
        ..Default::default()
    };
    let a = optimize(&problem, &cfg, FilterSpec::default()).unwrap();
    let b = optimize(&problem, &cfg, FilterSpec::default()).unwrap();
    assert_eq!(a.loss_history, b.loss_history);
    assert_eq!(a.missing, b.missing);
    assert_eq!(problem.measured(), &before);
    let full = assemble_full(&problem, &a.missing).unwrap();
    for (k, &i) in problem.split().measured_idx().iter().enumerate() {
        assert!(full
            .row(i)
            .iter()
            .zip(before.row(k))
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn plateau_stops_early() {
    let (_, _, problem) = noisy_problem(32, 30, 2, 6);
    let cfg = OptimizerConfig {
        learning_rate: 0.0,
        plateau_patience: 5,
        ..Default::default()
    };
    let st = optimize(&problem, &cfg, FilterSpec::default()).unwrap();
    assert_eq!(st.stop, StopReason::Plateau);
    assert_eq!(st.loss_history.len(), 6);
}

#[test]
fn true_rows_do_not_zero_the_loss() {
    let (g, full, problem) = noisy_problem(64, 60, 2, 7);
    let truth = full
        .select_rows(problem.split().missing_idx(), problem.missing_geometry())
        .unwrap();
    let (loss, _) =
        self_supervised_loss(&problem, &truth, FilterSpec::default(), LossKind::Mae).unwrap();
    assert!(loss > 0.0);
    assert_eq!(assemble_full(&problem, &truth).unwrap(), full);
    assert_eq!(full.tag(), g.tag());
}

#[test]
fn zero_iterations_return_the_initialization() {
    let (_, _, problem) = noisy_problem(32, 30, 3, 8);
    let cfg = OptimizerConfig {
        max_iterations: 0,
        ..Default::default()
    };
    let st = optimize(&problem, &cfg, FilterSpec::default()).unwrap();
    assert_eq!(st.missing, interpolate_linear(&problem));
    assert!(st.loss_history.is_empty());
    let nearest = OptimizerConfig {
        init: InitMethod::Nearest,
        ..cfg
    };
    assert_eq!(
        optimize(&problem, &nearest, FilterSpec::default())
            .unwrap()
            .missing,
        interpolate_nearest(&problem)
    );
}

#[test]
fn zero_learning_rate_keeps_interpolation_bit_exact() {
    let g = make_full_scan(60, 64, min_num_bins(64)).unwrap();
    let full = analytic_sinogram(&centered_disk(), &g);
    let problem = sparse_problem(&g, &full, DoseFraction::new(3).unwrap()).unwrap();
    let cfg = OptimizerConfig {
        learning_rate: 0.0,
        max_iterations: 1,
        ..Default::default()
    };
    let st = optimize(&problem, &cfg, FilterSpec::default()).unwrap();
    let lin = interpolate_linear(&problem);
    assert!(st
        .missing
        .data()
        .iter()
        .zip(lin.data())
        .all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(st.loss_history.len(), 1);
}

#[test]
fn non_finite_measurements_are_rejected() {
    let g = make_full_scan(12, 32, 46).unwrap();
    let split = split_by_stride(&g, 2, 0).unwrap();
    let mut rows = vec![0.0; 6 * 46];
    rows[3] = f64::NAN;
    assert!(InpaintProblem::new(g, split, rows).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn assembly_is_a_partition(
        n_angles in 4usize..24,
        keep in 2usize..4,
        phase_seed in 0usize..100,
        seed in any::<u64>(),
    ) {
        let g = make_full_scan(n_angles, 8, 12).unwrap();
        let keep = keep.min(n_angles - 1);
        let split = split_by_stride(&g, keep, phase_seed % keep).unwrap();
        let mut r = rng(seed);
        let full = random_sino(&mut r, &g);
        let problem = InpaintProblem::from_full(g.clone(), split.clone(), &full).unwrap();
        let missing_geom = problem.missing_geometry().clone();
        let block = Sinogram::from_vec(
            &missing_geom,
            (0..missing_geom.num_angles() * 12).map(|k| 1000.0 + k as f64).collect(),
        ).unwrap();
        let out = assemble_full(&problem, &block).unwrap();
        for i in 0..n_angles {
            let from_measured = split.measured_idx().binary_search(&i).ok().map(|k| problem.measured().row(k));
            let from_missing = split.missing_idx().binary_search(&i).ok().map(|k| block.row(k));
            match (from_measured, from_missing) {
                (Some(row), None) | (None, Some(row)) => prop_assert_eq!(out.row(i), row),
                _ => prop_assert!(false, "row {} owned by both or neither", i),
            }
        }

        // the same measured set listed in a shuffled order gives the same problem
        let mut shuffled = split.measured_idx().to_vec();
        shuffled.shuffle(&mut r);
        let resplit = AngleSplit::from_measured(g.angles().clone(), shuffled).unwrap();
        let again = InpaintProblem::from_full(g.clone(), resplit, &full).unwrap();
        prop_assert_eq!(assemble_full(&again, &block).unwrap(), out);
    }
}
