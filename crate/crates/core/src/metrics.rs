//! Image, coil-map and motion error metrics.
//!
//! PSNR and SSIM work on magnitude images. NRMSE works on complex values.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::csm::{eval_csm, normalize_csm_gauge, PolyCoeffs};
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, MotionParams};
use crate::grid::ComplexGrid;

/// Reported PSNR for identical images.
pub const PSNR_CAP_DB: f64 = 200.0;

fn check_pair(reference: &ComplexGrid, test: &ComplexGrid) -> Result<()> {
    if reference.shape() != test.shape() {
        return Err(Error::Dimension(format!(
            "reference is {:?}, test is {:?}",
            reference.shape(),
            test.shape()
        )));
    }
    Ok(())
}

/// Peak signal-to-noise ratio of magnitude images, peak taken from the reference.
pub fn psnr(reference: &ComplexGrid, test: &ComplexGrid) -> Result<f64> {
    check_pair(reference, test)?;
    let a = reference.magnitude();
    let b = test.magnitude();
    let peak = a.iter().cloned().fold(0.0, f64::max);
    let mse = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    if peak == 0.0 {
        return Err(Error::InvalidArgument("reference image is zero".into()));
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimOptions {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Fixed dynamic range; `None` uses the reference's peak magnitude.
    pub data_range: Option<f64>,
}

impl Default for SsimOptions {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            data_range: None,
        }
    }
}

/// Mean structural similarity with the default Gaussian window.
pub fn ssim(reference: &ComplexGrid, test: &ComplexGrid) -> Result<f64> {
    ssim_with(reference, test, &SsimOptions::default())
}

fn gaussian_taps(window: usize, sigma: f64) -> Vec<f64> {
    let half = (window / 2) as f64;
    let taps: Vec<f64> = (0..window)
        .map(|i| (-(i as f64 - half).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

/// Separable filtering keeping only windows that lie fully inside the image.
fn filter_valid(img: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut tmp = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            tmp[r * ow + c] = taps.iter().enumerate().map(|(i, t)| t * img[r * w + c + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = taps.iter().enumerate().map(|(i, t)| t * tmp[(r + i) * ow + c]).sum();
        }
    }
    out
}

pub fn ssim_with(reference: &ComplexGrid, test: &ComplexGrid, opts: &SsimOptions) -> Result<f64> {
    check_pair(reference, test)?;
    if opts.window % 2 == 0 || opts.window == 0 {
        return Err(Error::InvalidArgument(format!("SSIM window {} must be odd", opts.window)));
    }
    let (h, w) = reference.shape();
    if h < opts.window || w < opts.window {
        return Err(Error::Dimension(format!(
            "{h}x{w} image is smaller than the {} pixel SSIM window",
            opts.window
        )));
    }
    let a = reference.magnitude();
    let b = test.magnitude();
    let range = opts
        .data_range
        .unwrap_or_else(|| a.iter().cloned().fold(0.0, f64::max));
    let c1 = (opts.k1 * range).powi(2);
    let c2 = (opts.k2 * range).powi(2);
    let taps = gaussian_taps(opts.window, opts.sigma);
    let prod = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| x * y).collect::<Vec<_>>();
    let mu_a = filter_valid(&a, h, w, &taps);
    let mu_b = filter_valid(&b, h, w, &taps);
    let aa = filter_valid(&prod(&a, &a), h, w, &taps);
    let bb = filter_valid(&prod(&b, &b), h, w, &taps);
    let ab = filter_valid(&prod(&a, &b), h, w, &taps);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

/// `||test - reference|| / ||reference||` over complex values.
pub fn nrmse(reference: &ComplexGrid, test: &ComplexGrid) -> Result<f64> {
    check_pair(reference, test)?;
    let r = reference.norm();
    if r == 0.0 {
        return Err(Error::InvalidArgument("NRMSE against a zero reference".into()));
    }
    Ok(test.sub(reference).norm() / r)
}

/// NRMSE between two coil-map sets after bringing both to unit mean RSS
/// energy and removing the best global phase, which the data cannot fix.
pub fn csm_nrmse(est: &PolyCoeffs, truth: &PolyCoeffs, height: usize, width: usize) -> Result<f64> {
    if est.num_coils() != truth.num_coils() {
        return Err(Error::Dimension(format!(
            "{} estimated coils vs {} true coils",
            est.num_coils(),
            truth.num_coils()
        )));
    }
    let (e, _) = normalize_csm_gauge(est, height, width)?;
    let (t, _) = normalize_csm_gauge(truth, height, width)?;
    let me = eval_csm(&e, height, width);
    let mt = eval_csm(&t, height, width);
    csm_maps_nrmse(&me, &mt)
}

/// Phase-aligned NRMSE between stacked coil maps.
pub fn csm_maps_nrmse(est: &[ComplexGrid], truth: &[ComplexGrid]) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(Error::Dimension("coil counts differ".into()));
    }
    let mut cross = Complex64::default();
    let mut ref_energy = 0.0;
    for (e, t) in est.iter().zip(truth) {
        check_pair(t, e)?;
        cross += e.inner(t);
        ref_energy += t.norm_sqr();
    }
    if ref_energy == 0.0 {
        return Err(Error::InvalidArgument("NRMSE against zero coil maps".into()));
    }
    let rot = if cross.norm() > 0.0 {
        cross / cross.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    let err: f64 = est
        .iter()
        .zip(truth)
        .map(|(e, t)| e.scaled(rot).sub(t).norm_sqr())
        .sum();
    Ok((err / ref_energy).sqrt())
}

/// Root-mean-square motion error `(degrees, pixels)` after expressing both
/// estimates relative to their own first shot.
pub fn motion_error(m_est: &MotionParams, m_true: &MotionParams) -> Result<(f64, f64)> {
    if m_est.num_shots() != m_true.num_shots() {
        return Err(Error::Dimension(format!(
            "{} estimated shots vs {} true shots",
            m_est.num_shots(),
            m_true.num_shots()
        )));
    }
    let e = m_est.relative_to_first();
    let t = m_true.relative_to_first();
    let j = e.num_shots() as f64;
    let mut sq_theta = 0.0;
    let mut sq_t = 0.0;
    for s in 0..e.num_shots() {
        sq_theta += wrap_angle(e.rotation(s) - t.rotation(s)).powi(2);
        let (a, b) = (e.translation(s), t.translation(s));
        sq_t += (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    }
    Ok(((sq_theta / j).sqrt().to_degrees(), (sq_t / j).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::RngSeed;
    use crate::sim::shepp_logan;

    fn real(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> ComplexGrid {
        ComplexGrid::from_fn(h, w, |r, c| Complex64::new(f(r, c), 0.0))
    }

    /// Window-by-window SSIM straight from the definition.
    fn ssim_naive(a: &ComplexGrid, b: &ComplexGrid, range: f64) -> f64 {
        let (h, w) = a.shape();
        let (win, sd) = (11usize, 1.5f64);
        let mut g = vec![0.0; win * win];
        for i in 0..win {
            for j in 0..win {
                let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
                g[i * win + j] = (-(di * di + dj * dj) / (2.0 * sd * sd)).exp();
            }
        }
        let s: f64 = g.iter().sum();
        g.iter_mut().for_each(|v| *v /= s);
        let (c1, c2) = ((0.01 * range).powi(2), (0.03 * range).powi(2));
        let mut total = 0.0;
        let mut count = 0;
        for r0 in 0..=h - win {
            for c0 in 0..=w - win {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..win {
                    for j in 0..win {
                        let x = a[(r0 + i, c0 + j)].norm();
                        let y = b[(r0 + i, c0 + j)].norm();
                        let g = g[i * win + j];
                        ma += g * x;
                        mb += g * y;
                        saa += g * x * x;
                        sbb += g * y * y;
                        sab += g * x * y;
                    }
                }
                let (va, vb, cv) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                total += (2.0 * ma * mb + c1) * (2.0 * cv + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        total / count as f64
    }

    #[test]
    fn psnr_identical_is_capped() {
        let x = ComplexGrid::random_normal(8, 8, 1.0, &mut RngSeed(1).rng(0));
        assert_eq!(psnr(&x, &x).unwrap(), PSNR_CAP_DB);
    }

    #[test]
    fn psnr_uniform_error() {
        let a = real(8, 8, |r, c| if r == 0 && c == 0 { 1.0 } else { 0.5 });
        let b = a.map(|z| z + 0.1);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn psnr_scale_invariant() {
        let a = ComplexGrid::random_normal(8, 8, 1.0, &mut RngSeed(2).rng(0));
        let b = ComplexGrid::random_normal(8, 8, 1.0, &mut RngSeed(3).rng(0));
        let p = psnr(&a, &b).unwrap();
        let s = Complex64::new(3.7, 0.0);
        assert!((psnr(&a.scaled(s), &b.scaled(s)).unwrap() - p).abs() < 1e-9);
    }

    #[test]
    fn psnr_shape_mismatch() {
        assert!(psnr(&ComplexGrid::zeros(4, 4), &ComplexGrid::zeros(4, 5)).is_err());
    }

    #[test]
    fn ssim_identical_is_one() {
        let x = shepp_logan(32, 32, 0.5).unwrap();
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_negated_contrast() {
        let x = shepp_logan(64, 64, 0.0).unwrap();
        let peak = x.magnitude().into_iter().fold(0.0, f64::max);
        let neg = x.map(|z| Complex64::new(peak - z.norm(), 0.0));
        let s = ssim(&x, &neg).unwrap();
        assert!((s - ssim_naive(&x, &neg, peak)).abs() < 1e-10);
        assert!(s < 0.5, "ssim {s}");
    }

    #[test]
    fn ssim_matches_naive_on_noise() {
        let a = ComplexGrid::random_normal(20, 17, 1.0, &mut RngSeed(4).rng(0));
        let b = a.add(&ComplexGrid::random_normal(20, 17, 0.3, &mut RngSeed(5).rng(0)));
        let range = a.magnitude().into_iter().fold(0.0, f64::max);
        assert!((ssim(&a, &b).unwrap() - ssim_naive(&a, &b, range)).abs() < 1e-10);
    }

    #[test]
    fn ssim_symmetric_with_fixed_range() {
        let a = shepp_logan(32, 32, 0.0).unwrap();
        let b = a.add(&ComplexGrid::random_normal(32, 32, 0.05, &mut RngSeed(6).rng(0)));
        let o = SsimOptions {
            data_range: Some(1.0),
            ..Default::default()
        };
        let s1 = ssim_with(&a, &b, &o).unwrap();
        let s2 = ssim_with(&b, &a, &o).unwrap();
        assert!((s1 - s2).abs() < 1e-12);
    }

    #[test]
    fn ssim_rejects_even_window() {
        let x = ComplexGrid::zeros(16, 16);
        let o = SsimOptions {
            window: 4,
            ..Default::default()
        };
        assert!(ssim_with(&x, &x, &o).is_err());
    }

    #[test]
    fn nrmse_cases() {
        let a = ComplexGrid::random_normal(8, 8, 1.0, &mut RngSeed(7).rng(0));
        assert_eq!(nrmse(&a, &a).unwrap(), 0.0);
        assert!((nrmse(&a, &a.scaled(Complex64::new(2.0, 0.0))).unwrap() - 1.0).abs() < 1e-12);
        let e = ComplexGrid::random_normal(8, 8, 1.0, &mut RngSeed(8).rng(0));
        let e = e.scaled(Complex64::new(0.01 * a.norm() / e.norm(), 0.0));
        assert!((nrmse(&a, &a.add(&e)).unwrap() - 0.01).abs() < 1e-12);
        assert!(nrmse(&ComplexGrid::zeros(8, 8), &a).is_err());
    }

    #[test]
    fn csm_nrmse_ignores_scale_and_phase() {
        let phi = PolyCoeffs::constant(1, &[Complex64::new(1.0, 0.5), Complex64::new(-0.3, 0.2)]);
        let other = phi.scaled(2.5).rotated(Complex64::from_polar(1.0, 0.7));
        assert!(csm_nrmse(&other, &phi, 8, 8).unwrap() < 1e-12);
    }

    #[test]
    fn motion_error_cases() {
        let m = MotionParams::new(vec![0.0, 0.02, -0.01, 0.03], vec![[0.0, 0.0], [1.0, -0.5], [0.2, 0.3], [-1.0, 0.0]]).unwrap();
        assert_eq!(motion_error(&m, &m).unwrap(), (0.0, 0.0));
        let g = m.compose_global(0.1, [2.0, -1.0]);
        let (a, b) = motion_error(&g, &m).unwrap();
        assert!(a < 1e-10 && b < 1e-10);
        let mut one = m.clone();
        one.set_shot(2, m.rotation(2) + 1f64.to_radians(), m.translation(2));
        let (a, b) = motion_error(&one, &m).unwrap();
        assert!((a - 0.5).abs() < 1e-10 && b < 1e-12);
        assert!(motion_error(&m, &MotionParams::identity(3)).is_err());
    }
}
