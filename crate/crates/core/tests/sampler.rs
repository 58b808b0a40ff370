mod common;

use common::*;
use num_complex::Complex64;

#[test]
fn noisy_chain_lands_on_posterior_mean() {
    for seed in 0..2 {
        let r = posterior_oracle(seed, seed, true);
        let e = rel_l2(&r.mean, r.sample.data());
        println!("seed {seed}: rel-L2 {e:.3e}");
        assert!(e < 1e-2, "rel-L2 {e}");
    }
}

#[test]
fn averaging_chains_shrinks_the_error() {
    let runs: Vec<_> = (0..8).map(|c| posterior_oracle(5, 100 + c, true)).collect();
    let mean = &runs[0].mean;
    let mut avg = vec![Complex64::new(0.0, 0.0); mean.len()];
    for r in &runs {
        for (a, v) in avg.iter_mut().zip(r.sample.data()) {
            *a += v / runs.len() as f64;
        }
    }
    let single: f64 = runs.iter().map(|r| rel_l2(mean, r.sample.data())).sum::<f64>() / runs.len() as f64;
    let pooled = rel_l2(mean, &avg);
    println!("single {single:.3e} pooled {pooled:.3e}");
    // independent chains: error of the average falls like 1/sqrt(8)
    assert!(pooled < 0.5 * single, "single {single} pooled {pooled}");
}

#[test]
fn noiseless_chain_converges_to_posterior_mean() {
    let r = posterior_oracle(3, 3, false);
    let e = rel_l2(&r.mean, r.sample.data());
    println!("rel-L2 {e:.3e}");
    assert!(e < 1e-4, "rel-L2 {e}");
}

use jointmoco::csm::{eval_csm, mean_rss_energy, BasisKind, PolyCoeffs};
use jointmoco::forward::{ForwardModel, ForwardOptions};
use jointmoco::geometry::{full_plan, MotionParams};
use jointmoco::prior::gaussian_smoothness_prior;
use jointmoco::sampler::{sample_joint, sample_joint_observed, BlockSteps, SamplerConfig, SamplerInit};
use jointmoco::sim::shepp_logan;
use jointmoco::{Error, RngSeed};

#[test]
fn single_shot_single_coil_recovers_inverse_fft() {
    let plan = full_plan(16, 16, 1).unwrap();
    let x_true = shepp_logan(16, 16, 1.0).unwrap();
    let phi = PolyCoeffs::constant(0, &[Complex64::new(1.0, 0.0)]);
    let m = MotionParams::identity(1);
    let y = ForwardModel::new(&plan, ForwardOptions::default())
        .forward(&x_true, &m, &phi)
        .unwrap()
        .predicted;
    let cfg = SamplerConfig {
        sigma_min: 1e-3,
        sigma_max: 0.1,
        steps: 20,
        inner_loops: 5,
        eps_x: Some(0.5e-6),
        poly_order: 0,
        freeze_m: true,
        freeze_phi: true,
        ..Default::default()
    };
    let prior = gaussian_smoothness_prior(1e-3).unwrap();
    let init = SamplerInit {
        x: None,
        m: Some(m),
        phi: Some(phi),
    };
    let out = sample_joint(&y, &plan, &prior, &cfg, &init).map_err(|f| f.error).unwrap();
    // with one unit coil and no motion, A is the orthonormal FFT and x_true = A^H y
    let e = rel_l2(x_true.data(), out.x.data());
    assert!(e < 1e-2, "rel-L2 {e}");
}

fn small_joint() -> (jointmoco::geometry::AcquisitionPlan, jointmoco::Measurements) {
    let plan = random_plan(16, 16, 1.5, 3, 4);
    let x = shepp_logan(16, 16, 1.0).unwrap();
    let m = random_motion(3, 0.02, 0.8, 4);
    let phi = random_phi(2, 2, 4);
    let y = ForwardModel::new(&plan, ForwardOptions::default())
        .forward(&x, &m, &phi)
        .unwrap()
        .predicted;
    (plan, y)
}

fn small_config(block_steps: BlockSteps) -> SamplerConfig {
    SamplerConfig {
        steps: 10,
        inner_loops: 3,
        poly_order: 2,
        block_steps,
        sigma_max: 0.1,
        seed: RngSeed(9),
        ..Default::default()
    }
}

#[test]
fn same_seed_same_bits() {
    let (plan, y) = small_joint();
    let prior = gaussian_smoothness_prior(1.0).unwrap();
    for steps in [BlockSteps::Plain, BlockSteps::Preconditioned] {
        let cfg = small_config(steps);
        let a = sample_joint(&y, &plan, &prior, &cfg, &SamplerInit::default()).map_err(|f| f.error).unwrap();
        let b = sample_joint(&y, &plan, &prior, &cfg, &SamplerInit::default()).map_err(|f| f.error).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.m, b.m);
        assert_eq!(a.phi, b.phi);
        assert_eq!(a.trace.to_csv(), b.trace.to_csv());
        let c = sample_joint(&y, &plan, &prior, &SamplerConfig { seed: RngSeed(10), ..cfg }, &SamplerInit::default())
            .map_err(|f| f.error)
            .unwrap();
        assert_ne!(a.x, c.x);
    }
}

#[test]
fn gauge_is_held_through_the_chain() {
    let (plan, y) = small_joint();
    let prior = gaussian_smoothness_prior(1.0).unwrap();
    for steps in [BlockSteps::Plain, BlockSteps::Preconditioned] {
        let mut rows = Vec::new();
        let out = sample_joint_observed(&y, &plan, &prior, &small_config(steps), &SamplerInit::default(), &mut |r| {
            rows.push(r.clone())
        })
        .map_err(|f| f.error)
        .unwrap();
        assert_eq!(out.m.rotation(0), 0.0);
        assert_eq!(out.m.translation(0), [0.0, 0.0]);
        assert!(rows.iter().all(|r| r.rotations[0] == 0.0 && r.translations[0] == [0.0, 0.0]));
        let e = mean_rss_energy(&eval_csm(&out.phi, 16, 16));
        assert!((e - 1.0).abs() < 1e-12, "mean RSS energy {e}");
        // every level is visited, last sweep of each logged by default
        assert_eq!(rows.len(), 10);
        assert_eq!(rows.first().unwrap().t, 10);
        assert_eq!(rows.last().unwrap().t, 1);
    }
}

#[test]
fn residual_falls_from_the_random_start() {
    let (plan, y) = small_joint();
    let prior = gaussian_smoothness_prior(1.0).unwrap();
    let out = sample_joint(
        &y,
        &plan,
        &prior,
        &small_config(BlockSteps::Preconditioned),
        &SamplerInit::default(),
    )
    .map_err(|f| f.error)
    .unwrap();
    let last = out.trace.rows.last().unwrap().residual;
    assert!(last < 0.1 * out.trace.initial_residual, "{last} vs {}", out.trace.initial_residual);
}

#[test]
fn legendre_basis_runs_and_keeps_its_basis() {
    let (plan, y) = small_joint();
    let prior = gaussian_smoothness_prior(1.0).unwrap();
    let cfg = SamplerConfig {
        basis: BasisKind::Legendre,
        ..small_config(BlockSteps::Preconditioned)
    };
    let out = sample_joint(&y, &plan, &prior, &cfg, &SamplerInit::default()).map_err(|f| f.error).unwrap();
    assert_eq!(out.phi.basis(), BasisKind::Legendre);
}

#[test]
fn runaway_step_is_reported_as_divergence_with_trace() {
    let (plan, y) = small_joint();
    let prior = gaussian_smoothness_prior(1.0).unwrap();
    let cfg = SamplerConfig {
        eps_x: Some(50.0),
        sigma_min: 0.01,
        sigma_max: 1.0,
        trace_every: 1,
        ..small_config(BlockSteps::Plain)
    };
    let f = sample_joint(&y, &plan, &prior, &cfg, &SamplerInit::default()).unwrap_err();
    assert!(matches!(f.error, Error::Divergence(_)), "{}", f.error);
    assert!(!f.trace.rows.is_empty() || f.trace.initial_residual > 0.0);
}
