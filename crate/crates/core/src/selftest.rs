//! Built-in numerical checks: adjointness, gridding accuracy and
//! finite-difference agreement of every data-term gradient.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::csm::{coefficient_count, BasisKind, PolyCoeffs};
use crate::error::Result;
use crate::forward::{ForwardModel, ForwardOptions, PhaseCoords};
use crate::geometry::{
    cartesian_coords, make_plan, rotate_coords, AcquisitionPlan, MotionParams, PlanSpec, SamplingScheme,
    ShotOrdering,
};
use crate::grid::{ComplexGrid, Measurements, RngSeed};
use crate::nufft::{dft_direct, nufft_forward, rel_l2, NufftOperator, NufftOptions};

/// Deliberate defects for negative-control runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Adds a small random field to every adjoint result.
    PerturbedAdjoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SelftestOptions {
    pub seed: RngSeed,
    pub fault: Option<Fault>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    /// Worst relative error over the check's instances.
    pub error: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.error <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s += &format!(
                "{:<5} {:<24} rel err {:.3e} (tol {:.0e})\n",
                if c.passed() { "PASS" } else { "FAIL" },
                c.name,
                c.error,
                c.tolerance
            );
        }
        s
    }
}

fn random_phi(rng: &mut ChaCha8Rng, coils: usize, order: usize) -> PolyCoeffs {
    let terms = (order + 1) * (order + 1);
    let mut v: Vec<f64> = (0..coefficient_count(coils, order))
        .map(|_| rng.random_range(-0.3..0.3))
        .collect();
    for i in 0..coils {
        v[i * 2 * terms] += 1.0;
    }
    PolyCoeffs::new(coils, order, BasisKind::Monomial, v).expect("layout matches count")
}

fn random_motion(rng: &mut ChaCha8Rng, shots: usize, max_theta: f64, max_t: f64) -> MotionParams {
    let rot = (0..shots).map(|_| rng.random_range(-max_theta..max_theta)).collect();
    let tr = (0..shots)
        .map(|_| [rng.random_range(-max_t..max_t), rng.random_range(-max_t..max_t)])
        .collect();
    MotionParams::new(rot, tr).expect("equal lengths")
}

fn random_grid(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ComplexGrid {
    ComplexGrid::random_normal(h, w, 1.0, rng)
}

fn random_data(rng: &mut ChaCha8Rng, coils: usize, n: usize) -> Measurements {
    Measurements::new(
        (0..coils)
            .map(|_| {
                (0..n)
                    .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect()
            })
            .collect(),
    )
    .expect("equal lengths")
}

fn plan(h: usize, w: usize, accel: f64, shots: usize, seed: RngSeed) -> Result<AcquisitionPlan> {
    make_plan(PlanSpec {
        height: h,
        width: w,
        accel,
        acs_lines: 4,
        scheme: SamplingScheme::Random,
        num_shots: shots,
        ordering: ShotOrdering::Interleaved,
        seed,
    })
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

/// Largest `|<Ax, y> - <x, A^H y>| / (||Ax|| ||y||)` over `instances` random
/// 32x32, 4-coil, 4-shot problems.
pub fn adjoint_check(instances: usize, opts: &SelftestOptions) -> Result<f64> {
    let mut rng = opts.seed.rng(0xad);
    let mut worst = 0.0f64;
    for k in 0..instances {
        let p = plan(32, 32, 2.0, 4, RngSeed(opts.seed.0.wrapping_add(k as u64)))?;
        let model = ForwardModel::new(&p, ForwardOptions::default());
        let m = random_motion(&mut rng, 4, 0.3, 3.0);
        let phi = random_phi(&mut rng, 4, 3);
        let x = random_grid(&mut rng, 32, 32);
        let y = random_data(&mut rng, 4, p.num_samples());
        let ax = model.forward(&x, &m, &phi)?.predicted;
        let mut ahy = model.adjoint_x(&y, &m, &phi)?;
        if opts.fault == Some(Fault::PerturbedAdjoint) {
            let noise = random_grid(&mut rng, 32, 32);
            ahy.axpy(Complex64::new(1e-3, 0.0), &noise);
        }
        let lhs = y.inner(&ax);
        let rhs = ahy.inner(&x);
        let e = (lhs - rhs).norm() / (ax.norm_sqr().sqrt() * y.norm_sqr().sqrt());
        worst = worst.max(e);
    }
    Ok(worst)
}

/// Worst relative L2 distance between gridded and direct evaluation over
/// `rotations` random rotations of the full 32x32 lattice.
pub fn nufft_oracle_check(rotations: usize, opts: &SelftestOptions) -> Result<f64> {
    let mut rng = opts.seed.rng(0xaf);
    let base = cartesian_coords(32, 32)?;
    let nopts = NufftOptions::default();
    let mut worst = 0.0f64;
    for _ in 0..rotations {
        let x = random_grid(&mut rng, 32, 32);
        let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let coords = rotate_coords(&base, theta)?;
        let fast = NufftOperator::gridded(32, 32, &coords, &nopts)?.forward(&x)?;
        worst = worst.max(rel_l2(&fast, &dft_direct(&x, &coords)));
    }
    Ok(worst)
}

/// Relative L2 distance of the on-grid fast path from the direct sum.
pub fn cartesian_check(opts: &SelftestOptions) -> Result<f64> {
    let mut rng = opts.seed.rng(0xca);
    let x = random_grid(&mut rng, 32, 32);
    let coords = cartesian_coords(32, 32)?;
    Ok(rel_l2(&nufft_forward(&x, &coords, &NufftOptions::default())?, &dft_direct(&x, &coords)))
}

struct GradCase {
    plan: AcquisitionPlan,
    x: ComplexGrid,
    m: MotionParams,
    phi: PolyCoeffs,
    y: Measurements,
}

/// 16x16, 2 coils, order 2, 2 shots; data offset from the model so the
/// residual is not small.
fn grad_case(rng: &mut ChaCha8Rng, seed: RngSeed) -> Result<GradCase> {
    let plan = plan(16, 16, 1.5, 2, seed)?;
    let x = random_grid(rng, 16, 16);
    let m = random_motion(rng, 2, 0.1, 1.5);
    let phi = random_phi(rng, 2, 2);
    let clean = ForwardModel::new(&plan, ForwardOptions::default())
        .forward(&x, &m, &phi)?
        .predicted;
    let y = clean.sub(&random_data(rng, 2, plan.num_samples()).scaled(0.3));
    Ok(GradCase { plan, x, m, phi, y })
}

fn loglik(model: &ForwardModel, c: &GradCase, x: &ComplexGrid, m: &MotionParams, phi: &PolyCoeffs, s2: f64) -> Result<f64> {
    Ok(-model.residual(&c.y, x, m, phi)?.norm_sqr() / (2.0 * s2))
}

pub fn grad_x_check(opts: &SelftestOptions) -> Result<f64> {
    let mut rng = opts.seed.rng(0x61);
    let c = grad_case(&mut rng, opts.seed)?;
    let model = ForwardModel::new(&c.plan, ForwardOptions::default());
    let (gamma, sigma) = (0.7, 0.2);
    let s2 = gamma * gamma + sigma * sigma;
    let g = model.grad_x_data(&c.y, &c.x, &c.m, &c.phi, gamma, sigma)?;
    let h = 1e-5;
    let (mut an, mut fd) = (Vec::new(), Vec::new());
    for i in 0..c.x.len() {
        for (part, unit) in [(0, Complex64::new(1.0, 0.0)), (1, Complex64::new(0.0, 1.0))] {
            let mut xp = c.x.clone();
            xp.data_mut()[i] += unit * h;
            let mut xm = c.x.clone();
            xm.data_mut()[i] -= unit * h;
            let d = loglik(&model, &c, &xp, &c.m, &c.phi, s2)? - loglik(&model, &c, &xm, &c.m, &c.phi, s2)?;
            fd.push(d / (2.0 * h));
            an.push(if part == 0 { g.data()[i].re } else { g.data()[i].im });
        }
    }
    Ok(rel_err(&an, &fd))
}

pub fn grad_m_check(opts: &SelftestOptions, coords: PhaseCoords) -> Result<f64> {
    let mut rng = opts.seed.rng(0x62);
    let c = grad_case(&mut rng, opts.seed)?;
    let fopts = ForwardOptions {
        translation_phase_coords: coords,
        ..Default::default()
    };
    let model = ForwardModel::new(&c.plan, fopts);
    let sigma: f64 = 0.3;
    let g = model.grad_m_data(&c.y, &c.x, &c.m, &c.phi, sigma)?;
    let h = 1e-4;
    let base = c.m.to_vec();
    let mut fd = Vec::with_capacity(base.len());
    for k in 0..base.len() {
        let mut p = base.clone();
        p[k] += h;
        let mut q = base.clone();
        q[k] -= h;
        let lp = loglik(&model, &c, &c.x, &MotionParams::from_vec(&p)?, &c.phi, sigma * sigma)?;
        let lq = loglik(&model, &c, &c.x, &MotionParams::from_vec(&q)?, &c.phi, sigma * sigma)?;
        fd.push((lp - lq) / (2.0 * h));
    }
    Ok(rel_err(&g.concat(), &fd))
}

pub fn grad_phi_check(opts: &SelftestOptions) -> Result<f64> {
    let mut rng = opts.seed.rng(0x63);
    let c = grad_case(&mut rng, opts.seed)?;
    let model = ForwardModel::new(&c.plan, ForwardOptions::default());
    let sigma: f64 = 0.4;
    let g = model.grad_phi_data(&c.y, &c.x, &c.m, &c.phi, sigma)?;
    let h = 1e-5;
    let mut fd = Vec::with_capacity(g.as_slice().len());
    for k in 0..c.phi.as_slice().len() {
        let mut p = c.phi.clone();
        p.as_mut_slice()[k] += h;
        let mut q = c.phi.clone();
        q.as_mut_slice()[k] -= h;
        let d = loglik(&model, &c, &c.x, &c.m, &p, sigma * sigma)? - loglik(&model, &c, &c.x, &c.m, &q, sigma * sigma)?;
        fd.push(d / (2.0 * h));
    }
    Ok(rel_err(g.as_slice(), &fd))
}

/// Output change when coil maps are scaled by `s` and the image by `1/s`.
pub fn gauge_check(opts: &SelftestOptions) -> Result<f64> {
    let mut rng = opts.seed.rng(0x64);
    let c = grad_case(&mut rng, opts.seed)?;
    let model = ForwardModel::new(&c.plan, ForwardOptions::default());
    let a = model.forward(&c.x, &c.m, &c.phi)?.predicted;
    let mut xs = c.x.clone();
    xs.scale_real(1.0 / 2.5);
    let b = model.forward(&xs, &c.m, &c.phi.scaled(2.5))?.predicted;
    Ok(a.sub(&b).norm_sqr().sqrt() / a.norm_sqr().sqrt())
}

pub fn run_selftest(opts: &SelftestOptions) -> Result<SelftestReport> {
    let checks = vec![
        CheckResult {
            name: "adjoint",
            error: adjoint_check(5, opts)?,
            tolerance: 1e-6,
        },
        CheckResult {
            name: "nufft-vs-direct",
            error: nufft_oracle_check(10, opts)?,
            tolerance: 1e-5,
        },
        CheckResult {
            name: "cartesian-fast-path",
            error: cartesian_check(opts)?,
            tolerance: 1e-10,
        },
        CheckResult {
            name: "grad-x",
            error: grad_x_check(opts)?,
            tolerance: 1e-4,
        },
        CheckResult {
            name: "grad-m",
            error: grad_m_check(opts, PhaseCoords::Nominal)?,
            tolerance: 1e-4,
        },
        CheckResult {
            name: "grad-m-rotated-phase",
            error: grad_m_check(opts, PhaseCoords::Rotated)?,
            tolerance: 1e-4,
        },
        CheckResult {
            name: "grad-phi",
            error: grad_phi_check(opts)?,
            tolerance: 1e-4,
        },
        CheckResult {
            name: "csm-gauge",
            error: gauge_check(opts)?,
            tolerance: 1e-12,
        },
    ];
    Ok(SelftestReport { checks })
}
