mod common;

use common::*;
use jointmoco::csm::PolyCoeffs;
use jointmoco::forward::{ForwardModel, ForwardOptions, MotionGradMode, PhaseCoords};
use jointmoco::geometry::{AcquisitionPlan, MotionParams};
use jointmoco::{ComplexGrid, Measurements};
use num_complex::Complex64;

struct Case {
    plan: AcquisitionPlan,
    x: ComplexGrid,
    m: MotionParams,
    phi: PolyCoeffs,
    y: Measurements,
}

fn case(seed: u64) -> Case {
    let plan = random_plan(16, 16, 1.5, 2, seed);
    let x = random_image(16, 16, seed);
    let m = random_motion(2, 0.1, 1.5, seed);
    let phi = random_phi(2, 2, seed);
    // data near, but not at, the model so residuals are of moderate size
    let model = ForwardModel::new(&plan, ForwardOptions::default());
    let clean = model.forward(&x, &m, &phi).unwrap().predicted;
    let y = clean.sub(&random_measurements(2, plan.num_samples(), seed).scaled(0.3));
    Case { plan, x, m, phi, y }
}

fn misfit(model: &ForwardModel, c: &Case, x: &ComplexGrid, m: &MotionParams, phi: &PolyCoeffs) -> f64 {
    model.residual(&c.y, x, m, phi).unwrap().norm_sqr()
}

#[test]
fn grad_x_matches_central_differences() {
    for seed in 0..2 {
        let c = case(seed);
        let model = ForwardModel::new(&c.plan, ForwardOptions::default());
        let (gamma, sigma) = (0.7, 0.2);
        let s = gamma * gamma + sigma * sigma;
        let g = model.grad_x_data(&c.y, &c.x, &c.m, &c.phi, gamma, sigma).unwrap();
        let h = 1e-5;
        let mut an = Vec::new();
        let mut fd = Vec::new();
        for i in 0..c.x.len() {
            for (part, unit) in [(0, Complex64::new(1.0, 0.0)), (1, Complex64::new(0.0, 1.0))] {
                let mut xp = c.x.clone();
                xp.data_mut()[i] += unit * h;
                let mut xm = c.x.clone();
                xm.data_mut()[i] -= unit * h;
                let d = (misfit(&model, &c, &xp, &c.m, &c.phi) - misfit(&model, &c, &xm, &c.m, &c.phi)) / (2.0 * h);
                fd.push(-0.5 * d / s);
                an.push(if part == 0 { g.data()[i].re } else { g.data()[i].im });
            }
        }
        let e = rel_err(&an, &fd);
        assert!(e < 1e-4, "grad_x rel err {e}");
    }
}

fn motion_fd(model: &ForwardModel, c: &Case, sigma: f64, h: f64) -> Vec<f64> {
    let mut fd = Vec::new();
    let base = c.m.to_vec();
    for k in 0..base.len() {
        let mut p = base.clone();
        p[k] += h;
        let mut q = base.clone();
        q[k] -= h;
        let lp = -misfit(model, c, &c.x, &MotionParams::from_vec(&p).unwrap(), &c.phi) / (2.0 * sigma * sigma);
        let lq = -misfit(model, c, &c.x, &MotionParams::from_vec(&q).unwrap(), &c.phi) / (2.0 * sigma * sigma);
        fd.push((lp - lq) / (2.0 * h));
    }
    fd
}

#[test]
fn grad_m_matches_central_differences() {
    for coords in [PhaseCoords::Nominal, PhaseCoords::Rotated] {
        for seed in 0..6 {
            let c = case(seed);
            let opts = ForwardOptions {
                translation_phase_coords: coords,
                ..Default::default()
            };
            let model = ForwardModel::new(&c.plan, opts);
            let sigma = 0.5;
            let g: Vec<f64> = model
                .grad_m_data(&c.y, &c.x, &c.m, &c.phi, sigma)
                .unwrap()
                .concat();
            let fd = motion_fd(&model, &c, sigma, 1e-4);
            let e = rel_err(&g, &fd);
            assert!(e < 1e-4, "{coords:?} seed {seed}: grad_m rel err {e}\n{g:?}\n{fd:?}");
        }
    }
}

#[test]
fn grad_m_analytic_agrees_with_reference_mode() {
    for seed in 7..12 {
    let c = case(seed);
    let a = ForwardModel::new(&c.plan, ForwardOptions::default());
    let f = ForwardModel::new(
        &c.plan,
        ForwardOptions {
            motion_grad: MotionGradMode::FiniteDifference,
            ..Default::default()
        },
    );
    let ga = a.grad_m_data(&c.y, &c.x, &c.m, &c.phi, 0.5).unwrap().concat();
    let gf = f.grad_m_data(&c.y, &c.x, &c.m, &c.phi, 0.5).unwrap().concat();
    let e = rel_err(&ga, &gf);
    assert!(e < 1e-4, "analytic vs reference {e}\n{ga:?}\n{gf:?}");
    }
}

#[test]
fn grad_m_vanishes_at_exact_fit() {
    let c = case(3);
    let model = ForwardModel::new(&c.plan, ForwardOptions::default());
    let y = model.forward(&c.x, &c.m, &c.phi).unwrap().predicted;
    let g = model.grad_m_data(&y, &c.x, &c.m, &c.phi, 1.0).unwrap().concat();
    // curvature scale: gradient magnitude after a small perturbation of the data
    let noisy = y.sub(&random_measurements(2, c.plan.num_samples(), 1).scaled(1e-3));
    let g1 = model.grad_m_data(&noisy, &c.x, &c.m, &c.phi, 1.0).unwrap().concat();
    let n0 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let n1 = g1.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(n0 < 1e-8 * n1 * 1e3, "{n0} vs {n1}");
}

#[test]
fn grad_m_of_shot_ignores_other_shots_data() {
    let c = case(4);
    let model = ForwardModel::new(&c.plan, ForwardOptions::default());
    let g = model.grad_m_data(&c.y, &c.x, &c.m, &c.phi, 1.0).unwrap();
    let mut y2 = c.y.clone();
    for &k in &c.plan.shot_samples()[1] {
        for i in 0..y2.num_coils() {
            y2.coil_mut(i)[k] += Complex64::new(5.0, -3.0);
        }
    }
    let g2 = model.grad_m_data(&y2, &c.x, &c.m, &c.phi, 1.0).unwrap();
    assert_eq!(g[0], g2[0]);
    assert_ne!(g[1], g2[1]);
}

#[test]
fn grad_phi_matches_central_differences() {
    for seed in 0..2 {
        let c = case(seed);
        let model = ForwardModel::new(&c.plan, ForwardOptions::default());
        let sigma = 0.5;
        let g = model.grad_phi_data(&c.y, &c.x, &c.m, &c.phi, sigma).unwrap();
        let h = 1e-5;
        let mut fd = Vec::new();
        for k in 0..c.phi.as_slice().len() {
            let mut p = c.phi.clone();
            p.as_mut_slice()[k] += h;
            let mut q = c.phi.clone();
            q.as_mut_slice()[k] -= h;
            let d = misfit(&model, &c, &c.x, &c.m, &p) - misfit(&model, &c, &c.x, &c.m, &q);
            fd.push(-d / (2.0 * sigma * sigma) / (2.0 * h));
        }
        let e = rel_err(g.as_slice(), &fd);
        assert!(e < 1e-4, "grad_phi rel err {e}");
    }
}

#[test]
fn grad_phi_zero_for_zero_image_and_exact_fit() {
    let c = case(5);
    let model = ForwardModel::new(&c.plan, ForwardOptions::default());
    let zero = ComplexGrid::zeros(16, 16);
    let g = model.grad_phi_data(&c.y, &zero, &c.m, &c.phi, 1.0).unwrap();
    assert!(g.as_slice().iter().all(|v| *v == 0.0));
    let y = model.forward(&c.x, &c.m, &c.phi).unwrap().predicted;
    let g = model.grad_phi_data(&y, &c.x, &c.m, &c.phi, 1.0).unwrap();
    assert!(g.norm() < 1e-9);
}

#[test]
fn grad_x_zero_at_exact_fit_and_scales() {
    let c = case(6);
    let model = ForwardModel::new(&c.plan, ForwardOptions::default());
    let y = model.forward(&c.x, &c.m, &c.phi).unwrap().predicted;
    assert!(model.grad_x_data(&y, &c.x, &c.m, &c.phi, 0.3, 0.1).unwrap().norm() < 1e-10);
    let a = model.grad_x_data(&c.y, &c.x, &c.m, &c.phi, 1.0, 0.0).unwrap();
    let b = model.grad_x_data(&c.y, &c.x, &c.m, &c.phi, 2f64.sqrt(), 0.0).unwrap();
    assert!(a.sub(&b.scaled(Complex64::new(2.0, 0.0))).norm() < 1e-12 * a.norm());
    assert!(model.grad_x_data(&c.y, &c.x, &c.m, &c.phi, 0.0, 0.0).is_err());
}
