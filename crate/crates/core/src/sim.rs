//! Synthetic ground truth: phantom, coil maps, motion and measurements.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::csm::{eval_csm, fit_csm, normalize_csm_gauge, BasisKind, PolyCoeffs};
use crate::error::{Error, Result};
use crate::fft::ifft2_centered;
use crate::forward::{ForwardModel, ForwardOptions};
use crate::geometry::{rotate_coords, translation_phase, AcquisitionPlan, MotionParams};
use crate::grid::{ComplexGrid, Measurements, RngSeed};
use crate::nufft::dft_direct;

/// One ellipse of the phantom: intensity, semi-axes, center and tilt in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub intensity: f64,
    pub a: f64,
    pub b: f64,
    pub x0: f64,
    pub y0: f64,
    pub tilt_deg: f64,
}

const fn e(intensity: f64, a: f64, b: f64, x0: f64, y0: f64, tilt_deg: f64) -> Ellipse {
    Ellipse {
        intensity,
        a,
        b,
        x0,
        y0,
        tilt_deg,
    }
}

/// Shepp-Logan ellipses with the higher-contrast intensities of Toft's variant.
pub const SHEPP_LOGAN: [Ellipse; 10] = [
    e(1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    e(-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    e(-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    e(-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    e(0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    e(0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    e(0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    e(0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    e(0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    e(0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

fn axis(i: usize, n: usize) -> f64 {
    -1.0 + 2.0 * i as f64 / (n - 1) as f64
}

/// Phantom coordinates of pixel `(r, c)`: `x` grows with the column, `y` is
/// `+1` on the top row.
pub fn phantom_coords(r: usize, c: usize, height: usize, width: usize) -> (f64, f64) {
    (axis(c, width), -axis(r, height))
}

fn phase_shape(x: f64, y: f64) -> f64 {
    0.6 * x + 0.4 * y + 0.3 * x * y - 0.2 * x * x
}

/// Complex Shepp-Logan phantom with a smooth polynomial phase whose largest
/// magnitude over the grid is `phase_strength` radians.
pub fn shepp_logan(height: usize, width: usize, phase_strength: f64) -> Result<ComplexGrid> {
    if height < 16 || width < 16 {
        return Err(Error::Dimension(format!("phantom needs at least 16x16, got {height}x{width}")));
    }
    if !phase_strength.is_finite() {
        return Err(Error::InvalidArgument("phase strength is not finite".into()));
    }
    let mut peak: f64 = 0.0;
    for r in 0..height {
        for c in 0..width {
            let (x, y) = phantom_coords(r, c, height, width);
            peak = peak.max(phase_shape(x, y).abs());
        }
    }
    Ok(ComplexGrid::from_fn(height, width, |r, c| {
        let (x, y) = phantom_coords(r, c, height, width);
        let mut v = 0.0;
        for el in &SHEPP_LOGAN {
            let (s, co) = el.tilt_deg.to_radians().sin_cos();
            let (dx, dy) = (x - el.x0, y - el.y0);
            let u = dx * co + dy * s;
            let w = -dx * s + dy * co;
            if (u / el.a).powi(2) + (w / el.b).powi(2) <= 1.0 {
                v += el.intensity;
            }
        }
        if phase_strength == 0.0 {
            Complex64::new(v, 0.0)
        } else {
            Complex64::from_polar(v, phase_strength * phase_shape(x, y) / peak)
        }
    }))
}

/// Smooth coil maps with sensitivity peaks spread around the field of view,
/// returned together with their exact polynomial coefficients.
pub fn synth_csm(
    num_coils: usize,
    height: usize,
    width: usize,
    order: usize,
    seed: RngSeed,
) -> Result<(Vec<ComplexGrid>, PolyCoeffs)> {
    if order > 6 {
        return Err(Error::InvalidArgument(format!("synthetic coil order {order} exceeds 6")));
    }
    if num_coils == 0 {
        return Err(Error::InvalidArgument("need at least one coil".into()));
    }
    for attempt in 0..64u64 {
        let mut rng = seed.rng(0x4353_4d00 + attempt);
        let offset = rng.random_range(0.0..2.0 * PI);
        let targets: Vec<ComplexGrid> = (0..num_coils)
            .map(|i| {
                let ang = offset + 2.0 * PI * i as f64 / num_coils as f64;
                let (cx, cy) = (1.1 * ang.cos(), 1.1 * ang.sin());
                let spread = rng.random_range(0.9..1.3);
                let (gx, gy) = (rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8));
                let p0 = rng.random_range(-PI..PI);
                ComplexGrid::from_fn(height, width, |r, c| {
                    let (x, y) = phantom_coords(r, c, height, width);
                    let d2 = (x - cx).powi(2) + (y - cy).powi(2);
                    Complex64::from_polar((-d2 / (2.0 * spread * spread)).exp(), p0 + gx * x + gy * y)
                })
            })
            .collect();
        let fit = fit_csm(&targets, order, BasisKind::Monomial, None)?;
        let mut phi = fit.coeffs;
        let scale = phi.norm() / (phi.as_slice().len() as f64).sqrt();
        for v in phi.as_mut_slice() {
            *v += 0.02 * scale * rng.random_range(-1.0..1.0);
        }
        let (phi, _) = normalize_csm_gauge(&phi, height, width)?;
        let maps = eval_csm(&phi, height, width);
        if num_coils == 1 || distinct_peaks(&maps) {
            return Ok((maps, phi));
        }
    }
    Err(Error::InvalidArgument("could not draw coil maps with distinct peaks".into()))
}

fn argmax(map: &ComplexGrid) -> usize {
    let mut best = 0;
    for (i, v) in map.data().iter().enumerate() {
        if v.norm() > map.data()[best].norm() {
            best = i;
        }
    }
    best
}

fn distinct_peaks(maps: &[ComplexGrid]) -> bool {
    let mut peaks: Vec<usize> = maps.iter().map(argmax).collect();
    peaks.sort_unstable();
    peaks.windows(2).all(|w| w[0] != w[1])
}

/// Uniform per-shot rotations in `[-k_theta, k_theta]` degrees and
/// translations in `[-k_t, k_t]^2` pixels; shot 0 is the identity.
pub fn draw_motion(num_shots: usize, k_theta_deg: f64, k_t: f64, seed: RngSeed) -> Result<MotionParams> {
    if !(k_theta_deg >= 0.0 && k_t >= 0.0) || !k_theta_deg.is_finite() || !k_t.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "motion ranges must be finite and non-negative, got {k_theta_deg} deg, {k_t} px"
        )));
    }
    if num_shots == 0 {
        return Err(Error::InvalidArgument("need at least one shot".into()));
    }
    let mut rng = seed.rng(0x4d4f_5449);
    let mut uni = |k: f64| if k > 0.0 { rng.random_range(-k..=k) } else { 0.0 };
    let mut rot = vec![0.0];
    let mut tr = vec![[0.0, 0.0]];
    for _ in 1..num_shots {
        rot.push(uni(k_theta_deg).to_radians());
        tr.push([uni(k_t), uni(k_t)]);
    }
    MotionParams::new(rot, tr)
}

/// Motion levels used for the reported experiments: `(k_theta deg, k_t px)`.
pub const MOTION_PRESETS: [(f64, f64); 4] = [(2.0, 3.0), (2.0, 4.0), (3.0, 3.0), (3.0, 4.0)];

fn add_noise(y: &mut Measurements, sigma: f64, seed: RngSeed) {
    if sigma == 0.0 {
        return;
    }
    let mut rng = seed.rng(0x4e4f_4953);
    for i in 0..y.num_coils() {
        for v in y.coil_mut(i) {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            *v += Complex64::new(sigma * a, sigma * b);
        }
    }
}

fn check_noise(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("noise sigma {sigma} must be finite and >= 0")));
    }
    Ok(())
}

/// Motion-corrupted multi-coil samples plus complex Gaussian noise of
/// per-component standard deviation `noise_sigma`.
///
/// Every line of the full k-space gets the pose of the shot that acquires
/// it; the plan's mask then keeps only the acquired lines, so evaluating the
/// operator on the plan's samples directly gives the same result.
pub fn simulate_acquisition(
    x_true: &ComplexGrid,
    phi_true: &PolyCoeffs,
    m_true: &MotionParams,
    plan: &AcquisitionPlan,
    noise_sigma: f64,
    seed: RngSeed,
) -> Result<Measurements> {
    check_noise(noise_sigma)?;
    let model = ForwardModel::new(plan, ForwardOptions::default());
    let mut y = model.forward(x_true, m_true, phi_true)?.predicted;
    add_noise(&mut y, noise_sigma, seed);
    Ok(y)
}

/// Same as [`simulate_acquisition`] but evaluates every sample with the
/// brute-force DFT, sharing nothing with the gridded operator.
pub fn simulate_acquisition_direct(
    x_true: &ComplexGrid,
    phi_true: &PolyCoeffs,
    m_true: &MotionParams,
    plan: &AcquisitionPlan,
    noise_sigma: f64,
    seed: RngSeed,
) -> Result<Measurements> {
    check_noise(noise_sigma)?;
    if x_true.shape() != (plan.height(), plan.width()) {
        return Err(Error::Dimension("image does not match plan".into()));
    }
    if m_true.num_shots() != plan.num_shots() {
        return Err(Error::Dimension("motion does not match plan".into()));
    }
    let maps = eval_csm(phi_true, plan.height(), plan.width());
    let mut coils = Vec::with_capacity(maps.len());
    for s in &maps {
        let u = s.hadamard(x_true);
        let mut out = vec![Complex64::default(); plan.num_samples()];
        for (j, idx) in plan.shot_samples().iter().enumerate() {
            let nominal = plan.coords().subset(idx);
            let rot = rotate_coords(&nominal, m_true.rotation(j))?;
            let ph = translation_phase(&nominal, m_true.translation(j));
            for ((&k, v), p) in idx.iter().zip(dft_direct(&u, &rot)).zip(ph) {
                out[k] = v * p;
            }
        }
        coils.push(out);
    }
    let mut y = Measurements::new(coils)?;
    add_noise(&mut y, noise_sigma, seed);
    Ok(y)
}

/// Root-sum-of-squares of per-coil inverse FFTs of the zero-filled k-space.
pub fn zero_fill_recon(y: &Measurements, plan: &AcquisitionPlan) -> Result<ComplexGrid> {
    if y.num_samples() != plan.num_samples() {
        return Err(Error::Dimension(format!(
            "{} samples per coil, plan has {}",
            y.num_samples(),
            plan.num_samples()
        )));
    }
    let (h, w) = (plan.height(), plan.width());
    let mut energy = vec![0.0; h * w];
    for coil in y.coils() {
        let mut k = ComplexGrid::zeros(h, w);
        for (n, v) in coil.iter().enumerate() {
            k[plan.sample_position(n)] = *v;
        }
        for (e, v) in energy.iter_mut().zip(ifft2_centered(&k).data()) {
            *e += v.norm_sqr();
        }
    }
    let mag: Vec<f64> = energy.into_iter().map(f64::sqrt).collect();
    ComplexGrid::from_real(h, w, &mag)
}
