//! Type-2 nonuniform DFT: a direct-summation reference and a gridded
//! Kaiser-Bessel approximation with an exact (transposed) adjoint.
//!
//! Every transform evaluates
//!
//! ```text
//! X(k) = 1/sqrt(HW) * sum_r x[r] * exp(-j (kx * x_r + ky * y_r))
//! ```
//!
//! with pixel coordinates centered at `(H/2, W/2)`. Since `x_r, y_r` are
//! integers, `X` is 2π-periodic in each frequency component.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{fft2_centered, fft2_raw, ifft2_centered};
use crate::geometry::KCoords;
use crate::grid::ComplexGrid;

/// Gridding parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NufftOptions {
    pub oversampling: f64,
    pub kernel_width: usize,
    /// Kaiser-Bessel shape; `None` picks Beatty's value for the width and oversampling.
    pub beta: Option<f64>,
    /// Largest accepted `|kx|`, `|ky|` as a multiple of π.
    pub coverage: f64,
}

impl Default for NufftOptions {
    fn default() -> Self {
        Self {
            oversampling: 2.0,
            kernel_width: 6,
            beta: None,
            coverage: std::f64::consts::SQRT_2 + 1e-6,
        }
    }
}

impl NufftOptions {
    pub fn kaiser_beta(&self) -> f64 {
        self.beta.unwrap_or_else(|| {
            let w = self.kernel_width as f64;
            let a = self.oversampling;
            PI * ((w / a).powi(2) * (a - 0.5).powi(2) - 0.8).sqrt()
        })
    }
}

/// Brute-force O(HW·m) evaluation; the reference semantics for every other path.
pub fn dft_direct(image: &ComplexGrid, coords: &KCoords) -> Vec<Complex64> {
    let (h, w) = image.shape();
    let (ch, cw) = ((h / 2) as f64, (w / 2) as f64);
    let scale = 1.0 / ((h * w) as f64).sqrt();
    coords
        .points
        .iter()
        .map(|&[kx, ky]| {
            // separable phases: exp(-j kx x) and exp(-j ky y)
            let ex: Vec<Complex64> = (0..w)
                .map(|c| Complex64::from_polar(1.0, -kx * (c as f64 - cw)))
                .collect();
            let mut acc = Complex64::default();
            for r in 0..h {
                let ey = Complex64::from_polar(1.0, -ky * (r as f64 - ch));
                let row: Complex64 = image.row(r).iter().zip(&ex).map(|(v, e)| v * e).sum();
                acc += ey * row;
            }
            acc * scale
        })
        .collect()
}

pub(crate) fn bessel_i0(z: f64) -> f64 {
    let q = 0.25 * z * z;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / ((k * k) as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// `I1(z) / z`, finite at `z = 0`.
pub(crate) fn bessel_i1_over_z(z: f64) -> f64 {
    let q = 0.25 * z * z;
    let mut term = 0.5;
    let mut sum = 0.5;
    for k in 1..200 {
        term *= q / ((k * (k + 1)) as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Kaiser-Bessel window of full width `width` grid cells.
///
/// The plain window stops at a small nonzero pedestal. Over the outermost
/// `ramp` cells the pedestal is faded out with a smoothstep so the kernel reaches zero
/// continuously; samples then vary continuously with their coordinates.
#[derive(Debug, Clone, Copy)]
pub(crate) struct KaiserBessel {
    width: f64,
    beta: f64,
    norm: f64,
    ramp: f64,
}

impl KaiserBessel {
    pub(crate) fn new(width: usize, beta: f64) -> Self {
        Self::with_ramp(width, beta, EDGE_RAMP)
    }

    pub(crate) fn with_ramp(width: usize, beta: f64, ramp: f64) -> Self {
        Self {
            width: width as f64,
            beta,
            norm: 1.0 / bessel_i0(beta),
            ramp,
        }
    }

    fn pedestal(&self) -> f64 {
        self.norm
    }

    /// Kernel value and its derivative with respect to `u`.
    pub(crate) fn eval(&self, u: f64) -> (f64, f64) {
        let half = self.width / 2.0;
        let a = u / half;
        let s2 = 1.0 - a * a;
        if s2 < 0.0 {
            return (0.0, 0.0);
        }
        let s = s2.sqrt();
        let z = self.beta * s;
        let mut val = bessel_i0(z) * self.norm;
        // d/du I0(beta s) = I1(beta s) * beta * ds/du,  ds/du = -4u / (W^2 s)
        let mut der = -bessel_i1_over_z(z) * self.beta * self.beta * 4.0 * u / (self.width * self.width) * self.norm;
        let start = half - self.ramp;
        if self.ramp > 0.0 && u.abs() > start {
            let t = (u.abs() - start) / self.ramp;
            val -= self.pedestal() * t * t * (3.0 - 2.0 * t);
            der -= self.pedestal() * 6.0 * t * (1.0 - t) / self.ramp * u.signum();
        }
        (val, der)
    }

    /// Continuous Fourier transform `int phi(u) exp(j 2π u nu) du`.
    pub(crate) fn transform(&self, nu: f64) -> f64 {
        let a = PI * self.width * nu;
        let d = self.beta * self.beta - a * a;
        let f = if d > 1e-12 {
            let r = d.sqrt();
            r.sinh() / r
        } else if d < -1e-12 {
            let r = (-d).sqrt();
            r.sin() / r
        } else {
            1.0
        };
        let mut out = self.width * f * self.norm;
        if self.ramp > 0.0 {
            // minus pedestal times the smoothstep fade on both sides, by Simpson's rule
            const STEPS: usize = 64;
            let lo = self.width / 2.0 - self.ramp;
            let h = self.ramp / STEPS as f64;
            let mut acc = 0.0;
            for i in 0..=STEPS {
                let t = i as f64 / STEPS as f64;
                let wgt = if i == 0 || i == STEPS { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                acc += wgt * t * t * (3.0 - 2.0 * t) * (2.0 * PI * nu * (lo + t * self.ramp)).cos();
            }
            out -= self.pedestal() * 2.0 * acc * h / 3.0;
        }
        out
    }
}

/// Width in grid cells of the fade that takes the window's edge pedestal to zero.
const EDGE_RAMP: f64 = 0.03;

#[derive(Debug, Clone)]
struct Axis {
    len: usize,
    grid: usize,
    deapod: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Mode {
    /// Every coordinate sits on the Cartesian grid; index into the plain FFT.
    Cartesian { flat: Vec<usize> },
    Gridded {
        x: Axis,
        y: Axis,
        width: usize,
        start_x: Vec<usize>,
        start_y: Vec<usize>,
        wx: Vec<f64>,
        wy: Vec<f64>,
        dwx: Vec<f64>,
        dwy: Vec<f64>,
    },
}

/// A planned type-2 transform from an `H x W` image to a fixed coordinate list.
#[derive(Debug, Clone)]
pub struct NufftOperator {
    height: usize,
    width: usize,
    num_points: usize,
    mode: Mode,
}

fn on_grid(k: f64, n: usize) -> Option<usize> {
    let u = k * n as f64 / (2.0 * PI);
    let r = u.round();
    if (u - r).abs() > 1e-9 {
        return None;
    }
    Some(((r as i64 + (n / 2) as i64).rem_euclid(n as i64)) as usize)
}

impl NufftOperator {
    pub fn new(height: usize, width: usize, coords: &KCoords, opts: &NufftOptions) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension("empty image for nufft".into()));
        }
        let limit = opts.coverage * PI;
        for (i, p) in coords.points.iter().enumerate() {
            if !(p[0].is_finite() && p[1].is_finite()) || p[0].abs() > limit || p[1].abs() > limit {
                return Err(Error::CoordinateRange(format!(
                    "sample {i} at ({}, {}) exceeds ±{:.4}π",
                    p[0], p[1], opts.coverage
                )));
            }
        }

        let cart: Option<Vec<usize>> = coords
            .points
            .iter()
            .map(|p| Some(on_grid(p[1], height)? * width + on_grid(p[0], width)?))
            .collect();
        if let Some(flat) = cart {
            return Ok(Self {
                height,
                width,
                num_points: coords.len(),
                mode: Mode::Cartesian { flat },
            });
        }
        Self::gridded(height, width, coords, opts)
    }

    /// Forces the gridded path even for on-grid coordinates.
    pub fn gridded(height: usize, width: usize, coords: &KCoords, opts: &NufftOptions) -> Result<Self> {
        if opts.oversampling < 1.0 || opts.kernel_width < 2 {
            return Err(Error::InvalidArgument(
                "nufft needs oversampling >= 1 and kernel width >= 2".into(),
            ));
        }
        let kw = opts.kernel_width;
        let kernel = KaiserBessel::new(kw, opts.kaiser_beta());
        let axis = |n: usize| {
            let mut g = (opts.oversampling * n as f64).ceil() as usize;
            g += g % 2;
            let g = g.max(kw);
            let deapod = (0..n)
                .map(|i| kernel.transform((i as f64 - (n / 2) as f64) / g as f64))
                .collect();
            Axis {
                len: n,
                grid: g,
                deapod,
            }
        };
        let x = axis(width);
        let y = axis(height);

        let m = coords.len();
        let mut start_x = Vec::with_capacity(m);
        let mut start_y = Vec::with_capacity(m);
        let mut wx = Vec::with_capacity(m * kw);
        let mut wy = Vec::with_capacity(m * kw);
        let mut dwx = Vec::with_capacity(m * kw);
        let mut dwy = Vec::with_capacity(m * kw);
        let half = kw as f64 / 2.0;
        let fill = |k: f64, ax: &Axis, start: &mut Vec<usize>, wv: &mut Vec<f64>, dv: &mut Vec<f64>| {
            let scale = ax.grid as f64 / (2.0 * PI);
            let u = k * scale;
            let g0 = (u - half).floor() as i64 + 1;
            start.push(g0.rem_euclid(ax.grid as i64) as usize);
            for i in 0..kw {
                let (v, d) = kernel.eval(u - (g0 + i as i64) as f64);
                wv.push(v);
                dv.push(d * scale);
            }
        };
        for p in &coords.points {
            fill(p[0], &x, &mut start_x, &mut wx, &mut dwx);
            fill(p[1], &y, &mut start_y, &mut wy, &mut dwy);
        }
        Ok(Self {
            height,
            width,
            num_points: m,
            mode: Mode::Gridded {
                x,
                y,
                width: kw,
                start_x,
                start_y,
                wx,
                wy,
                dwx,
                dwy,
            },
        })
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn is_cartesian(&self) -> bool {
        matches!(self.mode, Mode::Cartesian { .. })
    }

    fn check_image(&self, image: &ComplexGrid) -> Result<()> {
        if image.shape() != (self.height, self.width) {
            return Err(Error::Dimension(format!(
                "nufft planned for {}x{}, got {}x{}",
                self.height,
                self.width,
                image.height(),
                image.width()
            )));
        }
        Ok(())
    }

    fn norm(&self) -> f64 {
        1.0 / ((self.height * self.width) as f64).sqrt()
    }

    fn axes(&self) -> Option<(&Axis, &Axis)> {
        match &self.mode {
            Mode::Cartesian { .. } => None,
            Mode::Gridded { x, y, .. } => Some((x, y)),
        }
    }

    pub fn forward(&self, image: &ComplexGrid) -> Result<Vec<Complex64>> {
        self.check_image(image)?;
        let spectra = ImageSpectra::for_operators(image, &[self]);
        self.sample(&spectra)
    }

    /// Samples together with their partial derivatives with respect to `kx` and `ky`.
    ///
    /// The derivatives are exact for the gridded approximation itself, so they
    /// agree with finite differences of [`forward`](Self::forward).
    pub fn forward_with_derivatives(
        &self,
        image: &ComplexGrid,
    ) -> Result<(Vec<Complex64>, Vec<Complex64>, Vec<Complex64>)> {
        self.check_image(image)?;
        let spectra = ImageSpectra::for_operators(image, &[self]);
        self.sample_with_derivatives(&spectra)
    }

    /// Reads this operator's samples out of precomputed image spectra.
    pub(crate) fn sample(&self, spectra: &ImageSpectra) -> Result<Vec<Complex64>> {
        match &self.mode {
            Mode::Cartesian { flat } => {
                let k = spectra.cartesian.as_ref().ok_or_else(missing_spectrum)?;
                Ok(flat.iter().map(|&i| k.data()[i]).collect())
            }
            Mode::Gridded { .. } => {
                let spec = spectra.gridded_for(self)?;
                Ok((0..self.num_points).map(|i| self.interp(spec, i, false, false)).collect())
            }
        }
    }

    pub(crate) fn sample_with_derivatives(
        &self,
        spectra: &ImageSpectra,
    ) -> Result<(Vec<Complex64>, Vec<Complex64>, Vec<Complex64>)> {
        if self.is_cartesian() {
            return Err(Error::InvalidArgument(
                "frequency derivatives need a gridded operator".into(),
            ));
        }
        let spec = spectra.gridded_for(self)?;
        let mut v = Vec::with_capacity(self.num_points);
        let mut dx = Vec::with_capacity(self.num_points);
        let mut dy = Vec::with_capacity(self.num_points);
        for i in 0..self.num_points {
            v.push(self.interp(spec, i, false, false));
            dx.push(self.interp(spec, i, true, false));
            dy.push(self.interp(spec, i, false, true));
        }
        Ok((v, dx, dy))
    }

    fn interp(&self, spec: &[Complex64], i: usize, dkx: bool, dky: bool) -> Complex64 {
        let Mode::Gridded {
            x,
            y,
            width,
            start_x,
            start_y,
            wx,
            wy,
            dwx,
            dwy,
        } = &self.mode
        else {
            unreachable!()
        };
        let kw = *width;
        let wxs = if dkx { &dwx[i * kw..(i + 1) * kw] } else { &wx[i * kw..(i + 1) * kw] };
        let wys = if dky { &dwy[i * kw..(i + 1) * kw] } else { &wy[i * kw..(i + 1) * kw] };
        let mut acc = Complex64::default();
        let mut gr = start_y[i];
        for &wyv in wys {
            let row = &spec[gr * x.grid..(gr + 1) * x.grid];
            let mut gc = start_x[i];
            let mut racc = Complex64::default();
            for &wxv in wxs {
                racc += row[gc] * wxv;
                gc += 1;
                if gc == x.grid {
                    gc = 0;
                }
            }
            acc += racc * wyv;
            gr += 1;
            if gr == y.grid {
                gr = 0;
            }
        }
        acc * self.norm()
    }

    pub fn adjoint(&self, samples: &[Complex64]) -> Result<ComplexGrid> {
        let mut acc = AdjointAccumulator::new(self.height, self.width);
        self.spread(samples, &mut acc)?;
        Ok(acc.finish())
    }

    /// Adds the adjoint contribution of `samples` to `acc` without transforming back.
    pub(crate) fn spread(&self, samples: &[Complex64], acc: &mut AdjointAccumulator) -> Result<()> {
        if samples.len() != self.num_points {
            return Err(Error::Dimension(format!(
                "nufft adjoint expects {} samples, got {}",
                self.num_points,
                samples.len()
            )));
        }
        if (acc.height, acc.width) != (self.height, self.width) {
            return Err(Error::Dimension("accumulator planned for another image shape".into()));
        }
        match &self.mode {
            Mode::Cartesian { flat } => {
                let k = acc
                    .cartesian
                    .get_or_insert_with(|| ComplexGrid::zeros(self.height, self.width));
                for (&i, &s) in flat.iter().zip(samples) {
                    k.data_mut()[i] += s;
                }
            }
            Mode::Gridded {
                x,
                y,
                width,
                start_x,
                start_y,
                wx,
                wy,
                ..
            } => {
                let kw = *width;
                let (gx, gy) = (x.grid, y.grid);
                let (ax, ay, buf) = acc
                    .gridded
                    .get_or_insert_with(|| (x.clone(), y.clone(), vec![Complex64::default(); gx * gy]));
                if ax.grid != gx || ay.grid != gy {
                    return Err(Error::InvalidArgument(
                        "operators with different oversampled grids share an accumulator".into(),
                    ));
                }
                for (i, &s) in samples.iter().enumerate() {
                    let mut gr = start_y[i];
                    for &wyv in &wy[i * kw..(i + 1) * kw] {
                        let sy = s * wyv;
                        let row = &mut buf[gr * gx..(gr + 1) * gx];
                        let mut gc = start_x[i];
                        for &wxv in &wx[i * kw..(i + 1) * kw] {
                            row[gc] += sy * wxv;
                            gc += 1;
                            if gc == gx {
                                gc = 0;
                            }
                        }
                        gr += 1;
                        if gr == gy {
                            gr = 0;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn missing_spectrum() -> Error {
    Error::InvalidArgument("image spectra were prepared for different operators".into())
}

/// Image-side transforms shared by all operators planned for one image shape
/// and one set of options: the centered FFT for on-grid operators and the
/// deapodized oversampled FFT for gridded ones.
pub(crate) struct ImageSpectra {
    cartesian: Option<ComplexGrid>,
    gridded: Option<(usize, usize, Vec<Complex64>)>,
}

impl ImageSpectra {
    pub(crate) fn for_operators(image: &ComplexGrid, ops: &[&NufftOperator]) -> Self {
        let cartesian = ops
            .iter()
            .any(|o| o.is_cartesian())
            .then(|| fft2_centered(image));
        let gridded = ops.iter().find_map(|o| o.axes()).map(|(x, y)| {
            let (gx, gy) = (x.grid, y.grid);
            let mut buf = vec![Complex64::default(); gx * gy];
            for r in 0..y.len {
                let gr = (r as i64 - (y.len / 2) as i64).rem_euclid(gy as i64) as usize;
                for c in 0..x.len {
                    let gc = (c as i64 - (x.len / 2) as i64).rem_euclid(gx as i64) as usize;
                    buf[gr * gx + gc] = image[(r, c)] / (x.deapod[c] * y.deapod[r]);
                }
            }
            fft2_raw(&mut buf, gy, gx, FftDirection::Forward);
            (gx, gy, buf)
        });
        Self { cartesian, gridded }
    }

    fn gridded_for(&self, op: &NufftOperator) -> Result<&[Complex64]> {
        let (x, y) = op.axes().ok_or_else(missing_spectrum)?;
        match &self.gridded {
            Some((gx, gy, buf)) if *gx == x.grid && *gy == y.grid => Ok(buf),
            _ => Err(missing_spectrum()),
        }
    }
}

/// Sum of adjoint contributions from several operators on one image shape.
pub(crate) struct AdjointAccumulator {
    height: usize,
    width: usize,
    cartesian: Option<ComplexGrid>,
    gridded: Option<(Axis, Axis, Vec<Complex64>)>,
}

impl AdjointAccumulator {
    pub(crate) fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            cartesian: None,
            gridded: None,
        }
    }

    pub(crate) fn finish(self) -> ComplexGrid {
        let (h, w) = (self.height, self.width);
        let mut out = match self.cartesian {
            Some(k) => ifft2_centered(&k),
            None => ComplexGrid::zeros(h, w),
        };
        if let Some((x, y, mut buf)) = self.gridded {
            let (gx, gy) = (x.grid, y.grid);
            fft2_raw(&mut buf, gy, gx, FftDirection::Inverse);
            let norm = 1.0 / ((h * w) as f64).sqrt();
            for r in 0..h {
                let gr = (r as i64 - (h / 2) as i64).rem_euclid(gy as i64) as usize;
                for c in 0..w {
                    let gc = (c as i64 - (w / 2) as i64).rem_euclid(gx as i64) as usize;
                    out[(r, c)] += buf[gr * gx + gc] * (norm / (x.deapod[c] * y.deapod[r]));
                }
            }
        }
        out
    }
}

pub fn nufft_forward(image: &ComplexGrid, coords: &KCoords, opts: &NufftOptions) -> Result<Vec<Complex64>> {
    NufftOperator::new(image.height(), image.width(), coords, opts)?.forward(image)
}

pub fn nufft_adjoint(
    samples: &[Complex64],
    coords: &KCoords,
    height: usize,
    width: usize,
    opts: &NufftOptions,
) -> Result<ComplexGrid> {
    if samples.len() != coords.len() {
        return Err(Error::Dimension(format!(
            "{} samples for {} coordinates",
            samples.len(),
            coords.len()
        )));
    }
    NufftOperator::new(height, width, coords, opts)?.adjoint(samples)
}

/// Relative L2 distance `||a - b|| / ||b||`.
pub fn rel_l2(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}
