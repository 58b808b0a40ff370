//! Joint annealed Langevin sampling of the image, motion and coil maps.
//!
//! Each noise level runs `inner_loops` sweeps. A sweep updates the image,
//! then the motion, then the coil coefficients, each by one Langevin step
//! on its conditional, and finally renormalizes the coil-map scale.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::csm::{normalize_csm_gauge_with, BasisKind, CsmBasis, PolyCoeffs};
use crate::error::{Error, Result};
use crate::forward::{ForwardModel, ForwardOptions};
use crate::geometry::{AcquisitionPlan, MotionParams};
use crate::grid::{ComplexGrid, Measurements, RngSeed};
use crate::prior::{ve_schedule, NoiseSchedule, ScorePrior};

/// How motion and coil-coefficient steps are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockSteps {
    /// `lambda_t = eps * sigma_t / sigma_max` on the raw gradient.
    #[default]
    Plain,
    /// Constant `lambda` on the gradient preconditioned by the inverse
    /// Gauss-Newton information of the block (per-shot 3x3 for motion,
    /// pixel-domain Gram matrix for coil coefficients), with matching noise.
    Preconditioned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Number of noise levels `T`.
    pub steps: usize,
    /// Sweeps per noise level.
    pub inner_loops: usize,
    /// Image step constant; `None` means `2e-5 * dynamic_range^2`.
    pub eps_x: Option<f64>,
    pub eps_m: f64,
    pub eps_phi: f64,
    pub block_steps: BlockSteps,
    /// Step fractions used by [`BlockSteps::Preconditioned`].
    pub newton_m: f64,
    pub newton_phi: f64,
    /// Initialization spreads.
    pub noise_scale_m: f64,
    pub noise_scale_phi: f64,
    /// Standard deviation of the measurement noise.
    pub noise_sigma: f64,
    /// Optional Gaussian shrinkage on coil coefficients.
    pub sigma_phi_prior: Option<f64>,
    pub poly_order: usize,
    pub basis: BasisKind,
    pub seed: RngSeed,
    /// Hold shot 0 at the identity and keep coil maps at unit mean RSS energy.
    pub gauge_fix: bool,
    /// Log every `trace_every` sweeps; 0 logs only the last sweep of each level.
    pub trace_every: usize,
    pub freeze_m: bool,
    pub freeze_phi: bool,
    /// Set to false to drop the injected noise (deterministic descent).
    pub langevin_noise: bool,
    pub forward: ForwardOptions,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            sigma_min: 0.01,
            sigma_max: 1.0,
            steps: 200,
            inner_loops: 3,
            eps_x: None,
            eps_m: 1e-4,
            eps_phi: 1e-5,
            block_steps: BlockSteps::Plain,
            newton_m: 0.5,
            newton_phi: 0.5,
            noise_scale_m: 0.1,
            noise_scale_phi: 0.01,
            noise_sigma: 0.0,
            sigma_phi_prior: None,
            poly_order: crate::csm::DEFAULT_POLY_ORDER,
            basis: BasisKind::Monomial,
            seed: RngSeed(0),
            gauge_fix: true,
            trace_every: 0,
            freeze_m: false,
            freeze_phi: false,
            langevin_noise: true,
            forward: ForwardOptions::default(),
        }
    }
}

impl SamplerConfig {
    pub fn schedule(&self) -> Result<NoiseSchedule> {
        ve_schedule(self.sigma_min, self.sigma_max, self.steps)
    }

    /// Total number of sweeps, `T * N`.
    pub fn total_updates(&self) -> usize {
        self.steps * self.inner_loops
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule().map_err(|e| Error::Config(e.to_string()))?;
        let bad = |m: String| Err(Error::Config(m));
        if self.inner_loops == 0 {
            return bad("inner_loops must be at least 1".into());
        }
        if let Some(e) = self.eps_x {
            if !(e > 0.0) {
                return bad(format!("eps_x must be positive, got {e}"));
            }
        }
        for (name, v) in [
            ("eps_m", self.eps_m),
            ("eps_phi", self.eps_phi),
            ("newton_m", self.newton_m),
            ("newton_phi", self.newton_phi),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("noise_scale_m", self.noise_scale_m),
            ("noise_scale_phi", self.noise_scale_phi),
            ("noise_sigma", self.noise_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if let Some(s) = self.sigma_phi_prior {
            if !(s > 0.0) {
                return bad(format!("sigma_phi_prior must be positive, got {s}"));
            }
        }
        Ok(())
    }
}

/// Starting values; blocks that are frozen must be given.
#[derive(Debug, Clone, Default)]
pub struct SamplerInit {
    pub x: Option<ComplexGrid>,
    pub m: Option<MotionParams>,
    pub phi: Option<PolyCoeffs>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    /// Noise level index, counting down from `T` to 1.
    pub t: usize,
    /// Sweep index within the level.
    pub n: usize,
    pub sigma: f64,
    /// `||y - A x||^2` after the sweep.
    pub residual: f64,
    pub rotations: Vec<f64>,
    pub translations: Vec<[f64; 2]>,
    pub phi_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SamplerTrace {
    pub initial_residual: f64,
    pub rows: Vec<TraceRow>,
}

impl SamplerTrace {
    pub fn to_csv(&self) -> String {
        let shots = self.rows.first().map_or(0, |r| r.rotations.len());
        let mut s = String::from("t,n,sigma,residual");
        for j in 0..shots {
            s += &format!(",theta_{j},tx_{j},ty_{j}");
        }
        s += ",phi_norm\n";
        for r in &self.rows {
            s += &format!("{},{},{:e},{:e}", r.t, r.n, r.sigma, r.residual);
            for (th, tr) in r.rotations.iter().zip(&r.translations) {
                s += &format!(",{th:e},{:e},{:e}", tr[0], tr[1]);
            }
            s += &format!(",{:e}\n", r.phi_norm);
        }
        s
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct SampleOutput {
    pub x: ComplexGrid,
    pub m: MotionParams,
    pub phi: PolyCoeffs,
    pub trace: SamplerTrace,
}

/// A run that stopped early, with the trace collected so far.
#[derive(Debug)]
pub struct SampleFailure {
    pub error: Error,
    pub trace: SamplerTrace,
}

impl From<SampleFailure> for Error {
    fn from(f: SampleFailure) -> Self {
        f.error
    }
}

/// One Langevin update `v + lambda s + sqrt(2 lambda) g` per real component.
/// Without `rng` no noise is added.
pub fn langevin_step(value: &[f64], score: &[f64], step: f64, rng: Option<&mut dyn RngCore>) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    if value.len() != score.len() {
        return Err(Error::Dimension(format!(
            "{} values, {} score entries",
            value.len(),
            score.len()
        )));
    }
    let amp = (2.0 * step).sqrt();
    Ok(match rng {
        Some(r) => value
            .iter()
            .zip(score)
            .map(|(v, s)| {
                let g: f64 = StandardNormal.sample(r);
                v + step * s + amp * g
            })
            .collect(),
        None => value.iter().zip(score).map(|(v, s)| v + step * s).collect(),
    })
}

/// [`langevin_step`] on motion parameters; angles are re-wrapped.
pub fn langevin_step_motion(
    m: &MotionParams,
    score: &[[f64; 3]],
    step: f64,
    rng: Option<&mut dyn RngCore>,
) -> Result<MotionParams> {
    let v = langevin_step(&m.to_vec(), &score.concat(), step, rng)?;
    MotionParams::from_vec(&v)
}

fn grid_to_real(x: &ComplexGrid) -> Vec<f64> {
    x.data().iter().flat_map(|z| [z.re, z.im]).collect()
}

fn real_to_grid(h: usize, w: usize, v: &[f64]) -> Result<ComplexGrid> {
    ComplexGrid::new(h, w, v.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect())
}

/// [`langevin_step`] on a complex image, two real components per pixel.
pub fn langevin_step_grid(
    x: &ComplexGrid,
    score: &ComplexGrid,
    step: f64,
    rng: Option<&mut dyn RngCore>,
) -> Result<ComplexGrid> {
    if x.shape() != score.shape() {
        return Err(Error::Dimension("score shape differs from image".into()));
    }
    let v = langevin_step(&grid_to_real(x), &grid_to_real(score), step, rng)?;
    real_to_grid(x.height(), x.width(), &v)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Streams of the four random sources, one per parameter block.
struct Streams {
    x: ChaCha8Rng,
    m: ChaCha8Rng,
    phi: ChaCha8Rng,
}

/// `lambda F^{-1} g + sqrt(2 lambda) L^{-T} xi` with `F = L L^T`.
fn preconditioned_step(
    info: &DMatrix<f64>,
    grads: &[DVector<f64>],
    lambda: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Vec<DVector<f64>>> {
    let n = info.nrows();
    let trace = info.trace().max(f64::MIN_POSITIVE);
    let mut f = info.clone();
    for i in 0..n {
        f[(i, i)] += 1e-10 * trace / n as f64;
    }
    let chol = f
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("information matrix is not positive definite".into()))?;
    let l = chol.l();
    let amp = (2.0 * lambda).sqrt();
    let mut rng = rng;
    let mut out = Vec::with_capacity(grads.len());
    for g in grads {
        let mut d = chol.solve(g) * lambda;
        if let Some(r) = rng.as_deref_mut() {
            let xi = DVector::from_fn(n, |_, _| normal(r));
            let z = l
                .transpose()
                .solve_upper_triangular(&xi)
                .ok_or_else(|| Error::RankDeficient("singular information factor".into()))?;
            d += z * amp;
        }
        out.push(d);
    }
    Ok(out)
}

/// Dynamic range used for the default image step: peak of the zero-filled
/// root-sum-of-squares image.
fn dynamic_range(y: &Measurements, plan: &AcquisitionPlan) -> Result<f64> {
    let zf = crate::sim::zero_fill_recon(y, plan)?;
    Ok(zf.magnitude().into_iter().fold(0.0, f64::max).max(1e-12))
}

/// Runs the joint sampler. `observer` sees every logged trace row as it is produced.
pub fn sample_joint_observed(
    y: &Measurements,
    plan: &AcquisitionPlan,
    prior: &dyn ScorePrior,
    config: &SamplerConfig,
    init: &SamplerInit,
    observer: &mut dyn FnMut(&TraceRow),
) -> std::result::Result<SampleOutput, SampleFailure> {
    let mut trace = SamplerTrace::default();
    match run(y, plan, prior, config, init, observer, &mut trace) {
        Ok((x, m, phi)) => Ok(SampleOutput { x, m, phi, trace }),
        Err(error) => Err(SampleFailure { error, trace }),
    }
}

pub fn sample_joint(
    y: &Measurements,
    plan: &AcquisitionPlan,
    prior: &dyn ScorePrior,
    config: &SamplerConfig,
    init: &SamplerInit,
) -> std::result::Result<SampleOutput, SampleFailure> {
    sample_joint_observed(y, plan, prior, config, init, &mut |_| {})
}

#[allow(clippy::too_many_arguments)]
fn run(
    y: &Measurements,
    plan: &AcquisitionPlan,
    prior: &dyn ScorePrior,
    cfg: &SamplerConfig,
    init: &SamplerInit,
    observer: &mut dyn FnMut(&TraceRow),
    trace: &mut SamplerTrace,
) -> Result<(ComplexGrid, MotionParams, PolyCoeffs)> {
    cfg.validate()?;
    let schedule = cfg.schedule()?;
    let (h, w) = (plan.height(), plan.width());
    let shots = plan.num_shots();
    let coils = y.num_coils();
    if y.num_samples() != plan.num_samples() {
        return Err(Error::Dimension(format!(
            "{} samples per coil, plan has {}",
            y.num_samples(),
            plan.num_samples()
        )));
    }
    let model = ForwardModel::new(plan, cfg.forward);
    let seed = cfg.seed;
    let mut streams = Streams {
        x: seed.rng(10),
        m: seed.rng(11),
        phi: seed.rng(12),
    };

    // initial state
    let mut x = match &init.x {
        Some(x0) => x0.clone(),
        None => ComplexGrid::random_normal(h, w, cfg.sigma_max, &mut seed.rng(1)),
    };
    if x.shape() != (h, w) {
        return Err(Error::Dimension("initial image does not match plan".into()));
    }
    let mut m = match (&init.m, cfg.freeze_m) {
        (Some(m0), _) => m0.clone(),
        (None, true) => return Err(Error::Config("frozen motion needs an initial value".into())),
        (None, false) => {
            let mut r = seed.rng(2);
            let mut v: Vec<f64> = (0..3 * shots).map(|_| cfg.noise_scale_m * normal(&mut r)).collect();
            if cfg.gauge_fix {
                v[..3].fill(0.0);
            }
            MotionParams::from_vec(&v)?
        }
    };
    if m.num_shots() != shots {
        return Err(Error::Dimension(format!("initial motion has {} shots, plan has {shots}", m.num_shots())));
    }
    let mut phi = match (&init.phi, cfg.freeze_phi) {
        (Some(p), _) => p.clone(),
        (None, true) => return Err(Error::Config("frozen coil maps need an initial value".into())),
        (None, false) => {
            let mut r = seed.rng(3);
            let mut p = PolyCoeffs::zeros(coils, cfg.poly_order).with_basis(cfg.basis);
            for v in p.as_mut_slice() {
                *v = cfg.noise_scale_phi * normal(&mut r);
            }
            p
        }
    };
    if phi.num_coils() != coils {
        return Err(Error::Dimension(format!("{} coil maps for {coils} coils of data", phi.num_coils())));
    }
    let basis = CsmBasis::for_coeffs(&phi, h, w);
    if cfg.gauge_fix && !cfg.freeze_phi {
        let (p, s) = normalize_csm_gauge_with(&phi, &basis)?;
        phi = p;
        x.scale_real(1.0 / s);
    }

    let eps_x = match cfg.eps_x {
        Some(e) => e,
        None => 2e-5 * dynamic_range(y, plan)?.powi(2),
    };
    let sigma_1 = schedule.sigma_min();
    let sigma_max = schedule.sigma_max();
    let sn2 = cfg.noise_sigma * cfg.noise_sigma;
    let frac = plan.num_samples() as f64 / (h * w) as f64;
    let noise = cfg.langevin_noise;

    trace.initial_residual = model.residual(y, &x, &m, &phi)?.norm_sqr();
    let limit = 1e6 * trace.initial_residual.max(f64::MIN_POSITIVE);
    let total_levels = schedule.len();
    let mut sweep = 0usize;

    for (level, &sigma_t) in schedule.sigmas().iter().enumerate() {
        let t = total_levels - level;
        let sigma_eff = (sigma_t * sigma_t + sn2).sqrt();
        for n in 0..cfg.inner_loops {
            // image
            let lam_x = eps_x * sigma_t * sigma_t / (sigma_1 * sigma_1);
            let mut score = prior.score(&x, sigma_t)?;
            let gd = model.grad_x_data(y, &x, &m, &phi, sigma_t, cfg.noise_sigma)?;
            score.axpy(Complex64::new(1.0, 0.0), &gd);
            x = langevin_step_grid(&x, &score, lam_x, noise.then_some(&mut streams.x as &mut dyn RngCore))?;

            // motion
            if !cfg.freeze_m {
                m = match cfg.block_steps {
                    BlockSteps::Plain => {
                        let mut g = model.grad_m_data(y, &x, &m, &phi, sigma_eff)?;
                        let lam = cfg.eps_m * sigma_t / sigma_max;
                        let mut next = langevin_step_motion(
                            &m,
                            &g,
                            lam,
                            noise.then_some(&mut streams.m as &mut dyn RngCore),
                        )?;
                        if cfg.gauge_fix {
                            g[0] = [0.0; 3];
                            next.set_shot(0, m.rotation(0), m.translation(0));
                        }
                        next
                    }
                    BlockSteps::Preconditioned => {
                        let (g, info) = model.grad_m_with_information(y, &x, &m, &phi, sigma_eff)?;
                        let mut next = m.clone();
                        let first = usize::from(cfg.gauge_fix);
                        for j in first..shots {
                            let fd = DMatrix::from_fn(3, 3, |a, b| info[j][a][b]);
                            let gv = DVector::from_column_slice(&g[j]);
                            let d = preconditioned_step(
                                &fd,
                                &[gv],
                                cfg.newton_m,
                                noise.then_some(&mut streams.m),
                            )?;
                            let tr = m.translation(j);
                            next.set_shot(j, m.rotation(j) + d[0][0], [tr[0] + d[0][1], tr[1] + d[0][2]]);
                        }
                        next
                    }
                };
            }

            // coil coefficients
            if !cfg.freeze_phi {
                let mut g = model.grad_phi_data(y, &x, &m, &phi, sigma_eff)?;
                if let Some(sp) = cfg.sigma_phi_prior {
                    for (gv, pv) in g.as_mut_slice().iter_mut().zip(phi.as_slice()) {
                        *gv -= pv / (sp * sp);
                    }
                }
                match cfg.block_steps {
                    BlockSteps::Plain => {
                        let lam = cfg.eps_phi * sigma_t / sigma_max;
                        let v = langevin_step(
                            phi.as_slice(),
                            g.as_slice(),
                            lam,
                            noise.then_some(&mut streams.phi as &mut dyn RngCore),
                        )?;
                        phi.as_mut_slice().copy_from_slice(&v);
                    }
                    BlockSteps::Preconditioned => {
                        let nb = basis.terms();
                        let mut gram = DMatrix::<f64>::zeros(nb, nb);
                        for (px, v) in x.data().iter().enumerate() {
                            let a = v.norm_sqr();
                            if a == 0.0 {
                                continue;
                            }
                            let row = basis.row(px);
                            for i in 0..nb {
                                let ai = a * row[i];
                                for j in 0..=i {
                                    gram[(i, j)] += ai * row[j];
                                }
                            }
                        }
                        let scale = frac / (sigma_eff * sigma_eff);
                        for i in 0..nb {
                            for j in 0..=i {
                                gram[(i, j)] *= scale;
                                gram[(j, i)] = gram[(i, j)];
                            }
                            if let Some(sp) = cfg.sigma_phi_prior {
                                gram[(i, i)] += 1.0 / (sp * sp);
                            }
                        }
                        let grads: Vec<DVector<f64>> = (0..coils)
                            .flat_map(|i| (0..2).map(move |part| (i, part)))
                            .map(|(i, part)| DVector::from_fn(nb, |t, _| g.get(i, part, t)))
                            .collect();
                        let steps = preconditioned_step(
                            &gram,
                            &grads,
                            cfg.newton_phi,
                            noise.then_some(&mut streams.phi),
                        )?;
                        for (k, d) in steps.iter().enumerate() {
                            let (i, part) = (k / 2, k % 2);
                            for t in 0..nb {
                                *phi.get_mut(i, part, t) += d[t];
                            }
                        }
                    }
                }
                if cfg.gauge_fix {
                    let (p, s) = normalize_csm_gauge_with(&phi, &basis)?;
                    phi = p;
                    x.scale_real(1.0 / s);
                }
            }

            sweep += 1;
            let last_of_level = n + 1 == cfg.inner_loops;
            let log = if cfg.trace_every == 0 {
                last_of_level
            } else {
                sweep % cfg.trace_every == 0
            };
            let final_sweep = level + 1 == total_levels && last_of_level;
            if log || final_sweep || sweep % 16 == 0 {
                let residual = model.residual(y, &x, &m, &phi)?.norm_sqr();
                if !residual.is_finite() || residual > limit || !x.is_finite() {
                    return Err(Error::Divergence(format!(
                        "residual {residual:e} at t={t}, sweep {n} (initial {:e})",
                        trace.initial_residual
                    )));
                }
                if log || final_sweep {
                    let row = TraceRow {
                        t,
                        n,
                        sigma: sigma_t,
                        residual,
                        rotations: m.rotations().to_vec(),
                        translations: m.translations().to_vec(),
                        phi_norm: phi.norm(),
                    };
                    observer(&row);
                    trace.rows.push(row);
                }
            }
        }
    }
    Ok((x, m, phi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_noise_zero_score_is_identity() {
        let v = vec![1.0, -2.0, 3.5];
        assert_eq!(langevin_step(&v, &[0.0; 3], 0.3, None).unwrap(), v);
        let out = langevin_step(&v, &[1.0, 1.0, 1.0], 1e-300, None).unwrap();
        assert_eq!(out, v);
        assert!(langevin_step(&v, &[0.0; 3], 0.0, None).is_err());
    }

    #[test]
    fn gaussian_target_mean() {
        let (mu, tau, lam) = (1.5, 0.7, 0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut v = vec![0.0];
        let mut samples = Vec::new();
        for i in 0..200_000 {
            let s = [(mu - v[0]) / (tau * tau)];
            v = langevin_step(&v, &s, lam, Some(&mut rng)).unwrap();
            if i >= 1000 && i % 50 == 0 {
                samples.push(v[0]);
            }
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        // thinning by 50 steps leaves correlation exp(-50 lam / tau^2) ~ 0.36
        let se = tau / n.sqrt() * ((1.0 + 0.36) / (1.0 - 0.36) as f64).sqrt();
        assert!((mean - mu).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn motion_step_wraps_angles() {
        let m = MotionParams::new(vec![3.1], vec![[0.0, 0.0]]).unwrap();
        let out = langevin_step_motion(&m, &[[1.0, 0.0, 0.0]], 0.1, None).unwrap();
        assert!(out.rotation(0) < 0.0);
    }

    #[test]
    fn config_validation() {
        let mut c = SamplerConfig::default();
        assert!(c.validate().is_ok());
        assert_eq!(c.total_updates(), 600);
        c.inner_loops = 0;
        assert!(c.validate().is_err());
        let c = SamplerConfig {
            sigma_min: 2.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
