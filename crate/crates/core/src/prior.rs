//! Noise schedule and image score priors.

use std::path::{Path, PathBuf};
use std::process::Command;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ComplexGrid;
use crate::io;

/// Geometric noise levels in sampling order, from `sigma_max` down to `sigma_min`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    sigmas: Vec<f64>,
}

impl NoiseSchedule {
    /// Levels in the order the sampler visits them (`sigma_T` first).
    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigmas[0]
    }

    pub fn sigma_min(&self) -> f64 {
        *self.sigmas.last().expect("schedule is non-empty")
    }

    /// `sigma_t` for `t` in `1..=T`.
    pub fn sigma(&self, t: usize) -> f64 {
        self.sigmas[self.sigmas.len() - t]
    }
}

/// `sigma_i = sigma_max (sigma_min / sigma_max)^((T - i) / (T - 1))`, `i = 1..T`.
pub fn ve_schedule(sigma_min: f64, sigma_max: f64, steps: usize) -> Result<NoiseSchedule> {
    if !(sigma_min > 0.0 && sigma_min < sigma_max && sigma_max.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < sigma_min < sigma_max, got {sigma_min} and {sigma_max}"
        )));
    }
    if steps < 2 {
        return Err(Error::InvalidArgument(format!("schedule needs at least 2 steps, got {steps}")));
    }
    let ratio = sigma_min / sigma_max;
    let sigmas = (0..steps)
        .map(|k| {
            if k == 0 {
                sigma_max
            } else if k == steps - 1 {
                sigma_min
            } else {
                sigma_max * ratio.powf(k as f64 / (steps - 1) as f64)
            }
        })
        .collect();
    Ok(NoiseSchedule { sigmas })
}

/// Approximation of `grad_x log p_sigma(x)`.
pub trait ScorePrior: Send + Sync {
    fn score(&self, x: &ComplexGrid, sigma: f64) -> Result<ComplexGrid>;

    fn name(&self) -> String;
}

/// PSD graph Laplacian of the 4-neighbour grid; edges across the border are
/// absent, which is the reflective boundary.
pub fn laplacian(x: &ComplexGrid) -> ComplexGrid {
    let (h, w) = x.shape();
    ComplexGrid::from_fn(h, w, |r, c| {
        let v = x[(r, c)];
        let mut acc = Complex64::default();
        if r > 0 {
            acc += v - x[(r - 1, c)];
        }
        if r + 1 < h {
            acc += v - x[(r + 1, c)];
        }
        if c > 0 {
            acc += v - x[(r, c - 1)];
        }
        if c + 1 < w {
            acc += v - x[(r, c + 1)];
        }
        acc
    })
}

/// Improper Gaussian prior `exp(-alpha/2 x^H L x)`, annealed by `1 / (1 + sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessPrior {
    pub alpha: f64,
}

pub fn gaussian_smoothness_prior(alpha: f64) -> Result<SmoothnessPrior> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    Ok(SmoothnessPrior { alpha })
}

impl ScorePrior for SmoothnessPrior {
    fn score(&self, x: &ComplexGrid, sigma: f64) -> Result<ComplexGrid> {
        let mut l = laplacian(x);
        l.scale_real(-self.alpha / (1.0 + sigma * sigma));
        Ok(l)
    }

    fn name(&self) -> String {
        format!("smoothness(alpha={})", self.alpha)
    }
}

/// Mirror index for half-sample symmetric extension.
fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let m = i.rem_euclid(2 * n);
    (if m < n { m } else { 2 * n - 1 - m }) as usize
}

/// Normalized separable Gaussian blur of standard deviation `rho` pixels.
pub fn gaussian_blur(x: &ComplexGrid, rho: f64) -> ComplexGrid {
    let radius = (3.0 * rho).ceil() as i64;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * rho * rho)).exp())
        .collect();
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    let (h, w) = x.shape();
    let rows = ComplexGrid::from_fn(h, w, |r, c| {
        taps.iter()
            .enumerate()
            .map(|(i, t)| x[(r, reflect(c as i64 + i as i64 - radius, w))] * t)
            .sum()
    });
    ComplexGrid::from_fn(h, w, |r, c| {
        taps.iter()
            .enumerate()
            .map(|(i, t)| rows[(reflect(r as i64 + i as i64 - radius, h), c)] * t)
            .sum()
    })
}

/// Denoiser-style score `(G_rho x - x) / sigma^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenoiserSurrogatePrior {
    pub rho: f64,
}

pub fn denoiser_surrogate_prior(rho: f64) -> Result<DenoiserSurrogatePrior> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidArgument(format!("blur radius must be positive, got {rho}")));
    }
    Ok(DenoiserSurrogatePrior { rho })
}

impl ScorePrior for DenoiserSurrogatePrior {
    fn score(&self, x: &ComplexGrid, sigma: f64) -> Result<ComplexGrid> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidArgument("denoiser score needs sigma > 0".into()));
        }
        let mut d = gaussian_blur(x, self.rho).sub(x);
        d.scale_real(1.0 / (sigma * sigma));
        Ok(d)
    }

    fn name(&self) -> String {
        format!("denoiser(rho={})", self.rho)
    }
}

/// Score of `N(x_star, (tau^2 + sigma^2) I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleGaussianPrior {
    pub x_star: ComplexGrid,
    pub tau: f64,
}

pub fn oracle_gaussian_prior(x_star: ComplexGrid, tau: f64) -> Result<OracleGaussianPrior> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    Ok(OracleGaussianPrior { x_star, tau })
}

impl ScorePrior for OracleGaussianPrior {
    fn score(&self, x: &ComplexGrid, sigma: f64) -> Result<ComplexGrid> {
        if x.shape() != self.x_star.shape() {
            return Err(Error::Dimension(format!(
                "oracle prior built for {:?}, got {:?}",
                self.x_star.shape(),
                x.shape()
            )));
        }
        let mut d = self.x_star.sub(x);
        d.scale_real(1.0 / (self.tau * self.tau + sigma * sigma));
        Ok(d)
    }

    fn name(&self) -> String {
        format!("oracle(tau={})", self.tau)
    }
}

/// Score computed by another program.
///
/// Each call writes the current image to `<workdir>/score_in` (array file
/// pair), runs `command` with the placeholders `{input}`, `{output}` and
/// `{sigma}` substituted in its arguments, and reads the score image from
/// `<workdir>/score_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalPrior {
    pub command: Vec<String>,
    pub workdir: PathBuf,
}

impl ExternalPrior {
    pub fn new(command: Vec<String>, workdir: &Path) -> Result<Self> {
        if command.is_empty() {
            return Err(Error::Config("external prior command is empty".into()));
        }
        Ok(Self {
            command,
            workdir: workdir.to_path_buf(),
        })
    }
}

impl ScorePrior for ExternalPrior {
    fn score(&self, x: &ComplexGrid, sigma: f64) -> Result<ComplexGrid> {
        std::fs::create_dir_all(&self.workdir).map_err(|e| Error::io(&self.workdir, e))?;
        let input = self.workdir.join("score_in");
        let output = self.workdir.join("score_out");
        io::save_grid(x, &input)?;
        let fill = |a: &str| {
            a.replace("{input}", &input.display().to_string())
                .replace("{output}", &output.display().to_string())
                .replace("{sigma}", &format!("{sigma:e}"))
        };
        let status = Command::new(fill(&self.command[0]))
            .args(self.command[1..].iter().map(|a| fill(a)))
            .status()
            .map_err(|e| Error::External(format!("cannot run {}: {e}", self.command[0])))?;
        if !status.success() {
            return Err(Error::External(format!("{} exited with {status}", self.command[0])));
        }
        let s = io::load_grid(&output)?;
        if s.shape() != x.shape() {
            return Err(Error::External(format!(
                "external score has shape {:?}, expected {:?}",
                s.shape(),
                x.shape()
            )));
        }
        Ok(s)
    }

    fn name(&self) -> String {
        format!("external({})", self.command.join(" "))
    }
}

/// Prior selection as it appears in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PriorSpec {
    Smoothness { alpha: f64 },
    Denoiser { rho: f64 },
    /// Gaussian around the ground-truth image of the run.
    Oracle { tau: f64 },
    External { command: Vec<String> },
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec::Smoothness { alpha: 1.0 }
    }
}

impl PriorSpec {
    /// `x_star` is needed for the oracle prior; `workdir` for the external one.
    pub fn build(&self, x_star: Option<&ComplexGrid>, workdir: &Path) -> Result<Box<dyn ScorePrior>> {
        Ok(match self {
            PriorSpec::Smoothness { alpha } => Box::new(gaussian_smoothness_prior(*alpha)?),
            PriorSpec::Denoiser { rho } => Box::new(denoiser_surrogate_prior(*rho)?),
            PriorSpec::Oracle { tau } => {
                let x = x_star.ok_or_else(|| Error::Config("oracle prior needs a ground-truth image".into()))?;
                Box::new(oracle_gaussian_prior(x.clone(), *tau)?)
            }
            PriorSpec::External { command } => Box::new(ExternalPrior::new(command.clone(), workdir)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::RngSeed;
    use proptest::prelude::*;

    fn rand(h: usize, w: usize, seed: u64) -> ComplexGrid {
        ComplexGrid::random_normal(h, w, 1.0, &mut RngSeed(seed).rng(0))
    }

    #[test]
    fn schedule_examples() {
        let s = ve_schedule(0.01, 1.0, 2).unwrap();
        assert_eq!(s.sigmas(), &[1.0, 0.01]);
        let s = ve_schedule(0.01, 1.0, 3).unwrap();
        assert!((s.sigmas()[1] - 0.1).abs() < 1e-15);
        assert_eq!(s.sigma(3), 1.0);
        assert_eq!(s.sigma(1), 0.01);
        assert!(ve_schedule(1.0, 0.5, 10).is_err());
        assert!(ve_schedule(0.1, 0.5, 1).is_err());
    }

    proptest! {
        #[test]
        fn schedule_is_geometric(lo in 1e-4f64..0.5, span in 1.5f64..1e4, t in 2usize..300) {
            let s = ve_schedule(lo, lo * span, t).unwrap();
            let r0 = s.sigmas()[1] / s.sigmas()[0];
            for w in s.sigmas().windows(2) {
                prop_assert!(w[1] < w[0]);
                prop_assert!((w[1] / w[0] - r0).abs() < 1e-12);
            }
            prop_assert_eq!(s.sigma_max(), lo * span);
            prop_assert_eq!(s.sigma_min(), lo);
            prop_assert_eq!(ve_schedule(lo, lo * span, t).unwrap(), s);
        }
    }

    #[test]
    fn smoothness_constant_and_linear() {
        let p = gaussian_smoothness_prior(2.0).unwrap();
        let c = ComplexGrid::from_fn(6, 5, |_, _| Complex64::new(0.3, -1.0));
        assert_eq!(p.score(&c, 0.5).unwrap().norm(), 0.0);
        let x = rand(6, 5, 1);
        let a = p.score(&x, 0.5).unwrap();
        let b = p.score(&x.scaled(Complex64::new(2.0, 0.0)), 0.5).unwrap();
        assert!(b.sub(&a.scaled(Complex64::new(2.0, 0.0))).norm() < 1e-12);
    }

    #[test]
    fn smoothness_matches_energy_difference() {
        let (alpha, sigma) = (1.7, 0.4);
        let p = gaussian_smoothness_prior(alpha).unwrap();
        let x = rand(7, 6, 2);
        let energy = |x: &ComplexGrid| -0.5 * alpha * x.inner(&laplacian(x)).re / (1.0 + sigma * sigma);
        let s = p.score(&x, sigma).unwrap();
        let h = 1e-6;
        for i in [0, 5, 17, 41] {
            for unit in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)] {
                let mut a = x.clone();
                a.data_mut()[i] += unit * h;
                let mut b = x.clone();
                b.data_mut()[i] -= unit * h;
                let fd = (energy(&a) - energy(&b)) / (2.0 * h);
                let an = if unit.re == 1.0 { s.data()[i].re } else { s.data()[i].im };
                assert!((fd - an).abs() < 1e-7 * (1.0 + an.abs()), "pixel {i}");
            }
        }
    }

    #[test]
    fn laplacian_is_positive_semidefinite() {
        for seed in 0..5 {
            let x = rand(5, 8, seed);
            assert!(x.inner(&laplacian(&x)).re >= 0.0);
        }
    }

    #[test]
    fn denoiser_cases() {
        let p = denoiser_surrogate_prior(1.5).unwrap();
        let c = ComplexGrid::from_fn(9, 9, |_, _| Complex64::new(2.0, 1.0));
        assert!(p.score(&c, 0.3).unwrap().norm() < 1e-12);
        let x = rand(12, 10, 3);
        let a = p.score(&x, 1.0).unwrap();
        let b = p.score(&x, 2.0).unwrap();
        assert!(a.sub(&b.scaled(Complex64::new(4.0, 0.0))).norm() < 1e-12 * a.norm());
        let mean: Complex64 = a.data().iter().sum();
        assert!(mean.norm() < 1e-12 * a.norm());
    }

    #[test]
    fn blur_wider_than_image_still_preserves_mean() {
        let x = rand(4, 5, 4);
        let b = gaussian_blur(&x, 3.0);
        let s0: Complex64 = x.data().iter().sum();
        let s1: Complex64 = b.data().iter().sum();
        assert!((s0 - s1).norm() < 1e-12);
    }

    #[test]
    fn oracle_cases() {
        let xs = rand(6, 6, 5);
        let p = oracle_gaussian_prior(xs.clone(), 0.5).unwrap();
        assert_eq!(p.score(&xs, 0.2).unwrap().norm(), 0.0);
        let x = rand(6, 6, 6);
        let s = p.score(&x, 0.2).unwrap();
        assert!(s.inner(&xs.sub(&x)).re >= 0.0);
        assert!(p.score(&ComplexGrid::zeros(5, 6), 0.2).is_err());
    }

    #[test]
    fn priors_finite_and_shape_preserving() {
        let x = rand(8, 11, 7);
        let priors: Vec<Box<dyn ScorePrior>> = vec![
            Box::new(gaussian_smoothness_prior(1.0).unwrap()),
            Box::new(denoiser_surrogate_prior(1.0).unwrap()),
            Box::new(oracle_gaussian_prior(rand(8, 11, 8), 1.0).unwrap()),
        ];
        for p in &priors {
            let s = p.score(&x, 0.7).unwrap();
            assert_eq!(s.shape(), x.shape());
            assert!(s.is_finite());
        }
    }

    #[test]
    fn spec_round_trip() {
        let s: PriorSpec = serde_json::from_str(r#"{"kind":"denoiser","rho":1.2}"#).unwrap();
        assert_eq!(s, PriorSpec::Denoiser { rho: 1.2 });
        assert!(PriorSpec::Oracle { tau: 1.0 }.build(None, Path::new(".")).is_err());
    }
}
