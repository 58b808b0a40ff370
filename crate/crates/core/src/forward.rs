//! Motion- and coil-parameterized multi-shot encoding operator.
//!
//! For coil `i`, shot `j` and nominal sample location `p` the model is
//! `y = NUFFT{S_i x}(R(theta_j) p) * exp(-j t_j . p)`.

use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csm::{eval_csm_with, CsmBasis, PolyCoeffs};
use crate::error::{Error, Result};
use crate::geometry::{rotate_coords, translation_phase, AcquisitionPlan, KCoords, MotionParams};
use crate::grid::{ComplexGrid, Measurements};
use crate::nufft::{AdjointAccumulator, ImageSpectra, NufftOperator, NufftOptions};

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Which coordinates enter the translation phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseCoords {
    /// The plan's unrotated sample locations.
    #[default]
    Nominal,
    /// The locations after the shot's rotation.
    Rotated,
}

/// How the motion gradient is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionGradMode {
    /// Chain rule through the NUFFT kernel derivatives.
    #[default]
    Analytic,
    /// Central differences with steps [`FD_STEP_THETA`] and [`FD_STEP_T`].
    FiniteDifference,
}

pub const FD_STEP_THETA: f64 = 1e-4;
pub const FD_STEP_T: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ForwardOptions {
    pub nufft: NufftOptions,
    pub translation_phase_coords: PhaseCoords,
    pub motion_grad: MotionGradMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutputs {
    pub predicted: Measurements,
    /// Sample indices of each shot, in plan order.
    pub per_shot: Vec<Vec<usize>>,
}

/// Per-shot operators and phases for one motion state.
struct ShotOps {
    ops: Vec<NufftOperator>,
    rotated: Vec<KCoords>,
    phases: Vec<Vec<Complex64>>,
}

/// The encoding operator bound to one acquisition plan.
pub struct ForwardModel<'a> {
    plan: &'a AcquisitionPlan,
    opts: ForwardOptions,
    shot_coords: Vec<KCoords>,
    basis: Mutex<Option<Arc<CsmBasis>>>,
}

impl<'a> ForwardModel<'a> {
    pub fn new(plan: &'a AcquisitionPlan, opts: ForwardOptions) -> Self {
        let shot_coords = plan
            .shot_samples()
            .iter()
            .map(|idx| plan.coords().subset(idx))
            .collect();
        Self {
            plan,
            opts,
            shot_coords,
            basis: Mutex::new(None),
        }
    }

    pub fn plan(&self) -> &AcquisitionPlan {
        self.plan
    }

    pub fn options(&self) -> &ForwardOptions {
        &self.opts
    }

    fn shape(&self) -> (usize, usize) {
        (self.plan.height(), self.plan.width())
    }

    fn basis_for(&self, phi: &PolyCoeffs) -> Arc<CsmBasis> {
        let (h, w) = self.shape();
        let mut slot = self.basis.lock().unwrap_or_else(|e| e.into_inner());
        match slot.as_ref() {
            Some(b) if b.matches(phi, h, w) => b.clone(),
            _ => {
                let b = Arc::new(CsmBasis::for_coeffs(phi, h, w));
                *slot = Some(b.clone());
                b
            }
        }
    }

    pub fn coil_maps(&self, phi: &PolyCoeffs) -> Vec<ComplexGrid> {
        eval_csm_with(phi, &self.basis_for(phi))
    }

    fn check_motion(&self, m: &MotionParams) -> Result<()> {
        if m.num_shots() != self.plan.num_shots() {
            return Err(Error::Dimension(format!(
                "motion has {} shots, plan has {}",
                m.num_shots(),
                self.plan.num_shots()
            )));
        }
        Ok(())
    }

    fn check_image(&self, x: &ComplexGrid) -> Result<()> {
        if x.shape() != self.shape() {
            return Err(Error::Dimension(format!(
                "image is {:?}, plan is {:?}",
                x.shape(),
                self.shape()
            )));
        }
        Ok(())
    }

    fn check_data(&self, y: &Measurements, phi: &PolyCoeffs) -> Result<()> {
        if y.num_coils() != phi.num_coils() {
            return Err(Error::Dimension(format!(
                "{} coils of data, {} coil maps",
                y.num_coils(),
                phi.num_coils()
            )));
        }
        if y.num_samples() != self.plan.num_samples() {
            return Err(Error::Dimension(format!(
                "{} samples per coil, plan has {}",
                y.num_samples(),
                self.plan.num_samples()
            )));
        }
        Ok(())
    }

    fn shot_ops(&self, m: &MotionParams) -> Result<ShotOps> {
        self.check_motion(m)?;
        let (h, w) = self.shape();
        let mut ops = Vec::with_capacity(m.num_shots());
        let mut rotated = Vec::with_capacity(m.num_shots());
        let mut phases = Vec::with_capacity(m.num_shots());
        for (j, nominal) in self.shot_coords.iter().enumerate() {
            let rot = rotate_coords(nominal, m.rotation(j))?;
            ops.push(NufftOperator::new(h, w, &rot, &self.opts.nufft)?);
            let pc = match self.opts.translation_phase_coords {
                PhaseCoords::Nominal => nominal,
                PhaseCoords::Rotated => &rot,
            };
            phases.push(translation_phase(pc, m.translation(j)));
            rotated.push(rot);
        }
        Ok(ShotOps {
            ops,
            rotated,
            phases,
        })
    }

    fn predict_coil(&self, so: &ShotOps, image: &ComplexGrid) -> Result<Vec<Complex64>> {
        let refs: Vec<&NufftOperator> = so.ops.iter().collect();
        let spectra = ImageSpectra::for_operators(image, &refs);
        let mut out = vec![Complex64::default(); self.plan.num_samples()];
        for (j, idx) in self.plan.shot_samples().iter().enumerate() {
            let vals = so.ops[j].sample(&spectra)?;
            for ((&k, v), ph) in idx.iter().zip(vals).zip(&so.phases[j]) {
                out[k] = v * ph;
            }
        }
        Ok(out)
    }

    /// `sum_j F_j^H (conj(phase_j) y_j)` for one coil's samples.
    fn backproject_coil(&self, so: &ShotOps, samples: &[Complex64]) -> Result<ComplexGrid> {
        let (h, w) = self.shape();
        let mut acc = AdjointAccumulator::new(h, w);
        for (j, idx) in self.plan.shot_samples().iter().enumerate() {
            let vals: Vec<Complex64> = idx
                .iter()
                .zip(&so.phases[j])
                .map(|(&k, ph)| samples[k] * ph.conj())
                .collect();
            so.ops[j].spread(&vals, &mut acc)?;
        }
        Ok(acc.finish())
    }

    fn predict(&self, so: &ShotOps, x: &ComplexGrid, maps: &[ComplexGrid]) -> Result<Measurements> {
        let coils: Vec<Vec<Complex64>> = maps
            .par_iter()
            .map(|s| self.predict_coil(so, &s.hadamard(x)))
            .collect::<Result<_>>()?;
        Measurements::new(coils)
    }

    pub fn forward(&self, x: &ComplexGrid, m: &MotionParams, phi: &PolyCoeffs) -> Result<ForwardOutputs> {
        self.check_image(x)?;
        let so = self.shot_ops(m)?;
        let maps = self.coil_maps(phi);
        Ok(ForwardOutputs {
            predicted: self.predict(&so, x, &maps)?,
            per_shot: self.plan.shot_samples().to_vec(),
        })
    }

    pub fn adjoint_x(&self, y: &Measurements, m: &MotionParams, phi: &PolyCoeffs) -> Result<ComplexGrid> {
        self.check_data(y, phi)?;
        let so = self.shot_ops(m)?;
        let maps = self.coil_maps(phi);
        self.adjoint_with(&so, y, &maps)
    }

    fn adjoint_with(&self, so: &ShotOps, y: &Measurements, maps: &[ComplexGrid]) -> Result<ComplexGrid> {
        let parts: Vec<ComplexGrid> = maps
            .par_iter()
            .zip(y.coils().par_iter())
            .map(|(s, yi)| Ok(s.map(|v| v.conj()).hadamard(&self.backproject_coil(so, yi)?)))
            .collect::<Result<_>>()?;
        let (h, w) = self.shape();
        let mut out = ComplexGrid::zeros(h, w);
        for p in &parts {
            out.axpy(Complex64::new(1.0, 0.0), p);
        }
        Ok(out)
    }

    /// `y - A x`.
    pub fn residual(
        &self,
        y: &Measurements,
        x: &ComplexGrid,
        m: &MotionParams,
        phi: &PolyCoeffs,
    ) -> Result<Measurements> {
        self.check_data(y, phi)?;
        Ok(y.sub(&self.forward(x, m, phi)?.predicted))
    }

    /// `A^H (y - A x) / (gamma^2 + sigma^2)`.
    pub fn grad_x_data(
        &self,
        y: &Measurements,
        x: &ComplexGrid,
        m: &MotionParams,
        phi: &PolyCoeffs,
        gamma: f64,
        sigma: f64,
    ) -> Result<ComplexGrid> {
        let denom = gamma * gamma + sigma * sigma;
        if !(denom > 0.0) {
            return Err(Error::InvalidArgument("gamma^2 + sigma^2 must be positive".into()));
        }
        self.check_data(y, phi)?;
        self.check_image(x)?;
        let so = self.shot_ops(m)?;
        let maps = self.coil_maps(phi);
        let r = y.sub(&self.predict(&so, x, &maps)?);
        let mut g = self.adjoint_with(&so, &r, &maps)?;
        g.scale_real(1.0 / denom);
        Ok(g)
    }

    /// Gradient of `-||y - A x||^2 / (2 sigma^2)` with respect to
    /// `(theta_j, tx_j, ty_j)` for every shot.
    pub fn grad_m_data(
        &self,
        y: &Measurements,
        x: &ComplexGrid,
        m: &MotionParams,
        phi: &PolyCoeffs,
        sigma: f64,
    ) -> Result<Vec<[f64; 3]>> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidArgument("sigma must be positive".into()));
        }
        self.check_data(y, phi)?;
        self.check_image(x)?;
        match self.opts.motion_grad {
            MotionGradMode::Analytic => Ok(self.grad_m_analytic(y, x, m, phi, sigma)?.0),
            MotionGradMode::FiniteDifference => self.grad_m_fd(y, x, m, phi, sigma),
        }
    }

    /// Analytic motion gradient together with each shot's 3x3 Gauss-Newton
    /// information `Re sum conj(dA/da) dA/db / sigma^2`.
    pub fn grad_m_with_information(
        &self,
        y: &Measurements,
        x: &ComplexGrid,
        m: &MotionParams,
        phi: &PolyCoeffs,
        sigma: f64,
    ) -> Result<(Vec<[f64; 3]>, Vec<[[f64; 3]; 3]>)> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidArgument("sigma must be positive".into()));
        }
        self.check_data(y, phi)?;
        self.check_image(x)?;
        self.grad_m_analytic(y, x, m, phi, sigma)
    }

    #[allow(clippy::type_complexity)]
    fn grad_m_analytic(
        &self,
        y: &Measurements,
        x: &ComplexGrid,
        m: &MotionParams,
        phi: &PolyCoeffs,
        sigma: f64,
    ) -> Result<(Vec<[f64; 3]>, Vec<[[f64; 3]; 3]>)> {
        let so = self.shot_ops(m)?;
        let (h, w) = self.shape();
        // on-grid shots have no kernel to differentiate; plan gridded twins for them
        let deriv: Vec<NufftOperator> = so
            .ops
            .iter()
            .zip(&so.rotated)
            .map(|(op, rot)| {
                if op.is_cartesian() {
                    NufftOperator::gridded(h, w, rot, &self.opts.nufft)
                } else {
                    Ok(op.clone())
                }
            })
            .collect::<Result<_>>()?;
        let maps = self.coil_maps(phi);
        let rotated_phase = self.opts.translation_phase_coords == PhaseCoords::Rotated;
        let per_coil: Vec<(Vec<[f64; 3]>, Vec<[[f64; 3]; 3]>)> = maps
            .par_iter()
            .zip(y.coils().par_iter())
            .map(|(s, yi)| {
                let u = s.hadamard(x);
                let mut refs: Vec<&NufftOperator> = so.ops.iter().collect();
                refs.extend(deriv.iter());
                let spectra = ImageSpectra::for_operators(&u, &refs);
                let mut g = vec![[0.0; 3]; m.num_shots()];
                let mut info = vec![[[0.0; 3]; 3]; m.num_shots()];
                for (j, idx) in self.plan.shot_samples().iter().enumerate() {
                    let vals = so.ops[j].sample(&spectra)?;
                    let (_, dx, dy) = deriv[j].sample_with_derivatives(&spectra)?;
                    let t = m.translation(j);
                    let nominal = &self.shot_coords[j].points;
                    let rot = &so.rotated[j].points;
                    let pc = if rotated_phase { rot } else { nominal };
                    for (n, &k) in idx.iter().enumerate() {
                        let ph = so.phases[j][n];
                        let pred = vals[n] * ph;
                        let r = yi[k] - pred;
                        let q = rot[n];
                        let mut d_theta = ph * (dx[n] * -q[1] + dy[n] * q[0]);
                        if rotated_phase {
                            // d/dtheta of R(theta) p is (-q_y, q_x)
                            d_theta += -J * (t[0] * -q[1] + t[1] * q[0]) * pred;
                        }
                        let d_tx = -J * pc[n][0] * pred;
                        let d_ty = -J * pc[n][1] * pred;
                        let rc = r.conj();
                        let d = [d_theta, d_tx, d_ty];
                        for a in 0..3 {
                            g[j][a] += (rc * d[a]).re;
                            for b in 0..3 {
                                info[j][a][b] += (d[a].conj() * d[b]).re;
                            }
                        }
                    }
                }
                Ok((g, info))
            })
            .collect::<Result<_>>()?;
        let s2 = sigma * sigma;
        let mut out = vec![[0.0; 3]; m.num_shots()];
        let mut out_info = vec![[[0.0; 3]; 3]; m.num_shots()];
        for (g, info) in &per_coil {
            for j in 0..m.num_shots() {
                for a in 0..3 {
                    out[j][a] += g[j][a] / s2;
                    for b in 0..3 {
                        out_info[j][a][b] += info[j][a][b] / s2;
                    }
                }
            }
        }
        Ok((out, out_info))
    }

    /// Data log-likelihood of one shot's samples.
    fn shot_loglik(
        &self,
        y: &Measurements,
        u: &[ComplexGrid],
        shot: usize,
        theta: f64,
        t: [f64; 2],
        sigma: f64,
    ) -> Result<f64> {
        let (h, w) = self.shape();
        let nominal = &self.shot_coords[shot];
        let rot = rotate_coords(nominal, theta)?;
        let op = NufftOperator::new(h, w, &rot, &self.opts.nufft)?;
        let ph = match self.opts.translation_phase_coords {
            PhaseCoords::Nominal => translation_phase(nominal, t),
            PhaseCoords::Rotated => translation_phase(&rot, t),
        };
        let idx = &self.plan.shot_samples()[shot];
        let mut ss = 0.0;
        for (ui, yi) in u.iter().zip(y.coils()) {
            let vals = op.forward(ui)?;
            for ((&k, v), p) in idx.iter().zip(vals).zip(&ph) {
                ss += (yi[k] - v * p).norm_sqr();
            }
        }
        Ok(-ss / (2.0 * sigma * sigma))
    }

    fn grad_m_fd(
        &self,
        y: &Measurements,
        x: &ComplexGrid,
        m: &MotionParams,
        phi: &PolyCoeffs,
        sigma: f64,
    ) -> Result<Vec<[f64; 3]>> {
        self.check_motion(m)?;
        let u: Vec<ComplexGrid> = self.coil_maps(phi).iter().map(|s| s.hadamard(x)).collect();
        (0..m.num_shots())
            .into_par_iter()
            .map(|j| {
                let th = m.rotation(j);
                let t = m.translation(j);
                let f = |dth: f64, dt: [f64; 2]| {
                    self.shot_loglik(y, &u, j, th + dth, [t[0] + dt[0], t[1] + dt[1]], sigma)
                };
                let (a, b) = (FD_STEP_THETA, FD_STEP_T);
                Ok([
                    (f(a, [0.0, 0.0])? - f(-a, [0.0, 0.0])?) / (2.0 * a),
                    (f(0.0, [b, 0.0])? - f(0.0, [-b, 0.0])?) / (2.0 * b),
                    (f(0.0, [0.0, b])? - f(0.0, [0.0, -b])?) / (2.0 * b),
                ])
            })
            .collect()
    }

    /// Gradient of `-||y - A x||^2 / (2 sigma^2)` with respect to the real
    /// and imaginary polynomial coefficients.
    pub fn grad_phi_data(
        &self,
        y: &Measurements,
        x: &ComplexGrid,
        m: &MotionParams,
        phi: &PolyCoeffs,
        sigma: f64,
    ) -> Result<PolyCoeffs> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidArgument("sigma must be positive".into()));
        }
        self.check_data(y, phi)?;
        self.check_image(x)?;
        let so = self.shot_ops(m)?;
        let basis = self.basis_for(phi);
        let maps = eval_csm_with(phi, &basis);
        let r = y.sub(&self.predict(&so, x, &maps)?);
        let projections: Vec<Vec<Complex64>> = r
            .coils()
            .par_iter()
            .map(|ri| {
                let z = self.backproject_coil(&so, ri)?;
                let wfield: Vec<Complex64> = z.data().iter().zip(x.data()).map(|(a, b)| a * b.conj()).collect();
                Ok(basis.project(&wfield))
            })
            .collect::<Result<_>>()?;
        let s2 = sigma * sigma;
        let mut g = PolyCoeffs::zeros(phi.num_coils(), phi.order()).with_basis(phi.basis());
        for (i, p) in projections.iter().enumerate() {
            for (t, v) in p.iter().enumerate() {
                *g.get_mut(i, 0, t) = v.re / s2;
                *g.get_mut(i, 1, t) = v.im / s2;
            }
        }
        Ok(g)
    }

    /// `||y_j - A_j(theta, t) x||^2` of one shot for each candidate pose.
    /// The coil images are transformed once and shared by all candidates.
    pub fn shot_misfits(
        &self,
        y: &Measurements,
        x: &ComplexGrid,
        phi: &PolyCoeffs,
        shot: usize,
        candidates: &[(f64, [f64; 2])],
    ) -> Result<Vec<f64>> {
        self.check_data(y, phi)?;
        self.check_image(x)?;
        if shot >= self.shot_coords.len() {
            return Err(Error::InvalidArgument(format!("shot {shot} out of range")));
        }
        let (h, w) = self.shape();
        let nominal = &self.shot_coords[shot];
        let idx = &self.plan.shot_samples()[shot];
        let probe = NufftOperator::gridded(h, w, nominal, &self.opts.nufft)?;
        let spectra: Vec<ImageSpectra> = self
            .coil_maps(phi)
            .iter()
            .map(|s| ImageSpectra::for_operators(&s.hadamard(x), &[&probe]))
            .collect();
        candidates
            .par_iter()
            .map(|&(theta, t)| {
                let rot = rotate_coords(nominal, theta)?;
                let op = NufftOperator::gridded(h, w, &rot, &self.opts.nufft)?;
                let ph = match self.opts.translation_phase_coords {
                    PhaseCoords::Nominal => translation_phase(nominal, t),
                    PhaseCoords::Rotated => translation_phase(&rot, t),
                };
                let mut ss = 0.0;
                for (sp, yi) in spectra.iter().zip(y.coils()) {
                    for ((&k, v), p) in idx.iter().zip(op.sample(sp)?).zip(&ph) {
                        ss += (yi[k] - v * p).norm_sqr();
                    }
                }
                Ok(ss)
            })
            .collect()
    }

    /// Exhaustive search of one shot's pose with `x` and `phi` held fixed.
    ///
    /// A coarse pass covers `center +- half_range` at ten times the requested
    /// spacing; the fine pass then scans `+- 10` fine steps around the coarse
    /// minimum at the requested spacing (`step_theta` radians, `step_t` pixels).
    #[allow(clippy::too_many_arguments)]
    pub fn grid_search_shot(
        &self,
        y: &Measurements,
        x: &ComplexGrid,
        phi: &PolyCoeffs,
        shot: usize,
        center: (f64, [f64; 2]),
        half_range: (f64, f64),
        step: (f64, f64),
    ) -> Result<(f64, [f64; 2])> {
        let (step_theta, step_t) = step;
        if !(step_theta > 0.0 && step_t > 0.0) {
            return Err(Error::InvalidArgument("grid steps must be positive".into()));
        }
        let axis = |c: f64, half: f64, d: f64| -> Vec<f64> {
            let n = (half / d).round() as i64;
            (-n..=n).map(|k| c + k as f64 * d).collect()
        };
        let mut best = center;
        for (half, d) in [
            (half_range, (10.0 * step_theta, 10.0 * step_t)),
            ((10.0 * step_theta, 10.0 * step_t), (step_theta, step_t)),
        ] {
            let thetas = axis(best.0, half.0, d.0);
            let txs = axis(best.1[0], half.1, d.1);
            let tys = axis(best.1[1], half.1, d.1);
            let mut cands = Vec::with_capacity(thetas.len() * txs.len() * tys.len());
            for &th in &thetas {
                for &tx in &txs {
                    for &ty in &tys {
                        cands.push((th, [tx, ty]));
                    }
                }
            }
            let costs = self.shot_misfits(y, x, phi, shot, &cands)?;
            let k = costs
                .iter()
                .enumerate()
                .fold(0, |b, (i, c)| if *c < costs[b] { i } else { b });
            best = cands[k];
        }
        Ok(best)
    }
}

pub fn forward(x: &ComplexGrid, m: &MotionParams, phi: &PolyCoeffs, plan: &AcquisitionPlan) -> Result<ForwardOutputs> {
    ForwardModel::new(plan, ForwardOptions::default()).forward(x, m, phi)
}

pub fn adjoint_x(y: &Measurements, m: &MotionParams, phi: &PolyCoeffs, plan: &AcquisitionPlan) -> Result<ComplexGrid> {
    ForwardModel::new(plan, ForwardOptions::default()).adjoint_x(y, m, phi)
}
