//! Polynomial coil-sensitivity model.
//!
//! Coil `i` has `S_i(x, y) = sum_{p,q=0..N} phi[i, p, q] x^p y^q` with separate
//! real coefficient sets for the real and imaginary parts. Pixel coordinates
//! are mapped affinely onto `[-1, 1]` per axis before evaluation.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::grid::ComplexGrid;
use crate::io::{self, Header, Semantic};

/// Polynomial order used when none is configured.
pub const DEFAULT_POLY_ORDER: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    #[default]
    Monomial,
    /// Products of Legendre polynomials; same span, better conditioning.
    Legendre,
}

/// Number of real unknowns for `c` coils at order `n`: `2 c (n+1)^2`.
pub fn coefficient_count(num_coils: usize, order: usize) -> usize {
    2 * num_coils * (order + 1) * (order + 1)
}

/// Real coefficients, shape `coils x 2 x (N+1)^2`; part 0 is real, part 1 imaginary.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyCoeffs {
    num_coils: usize,
    order: usize,
    basis: BasisKind,
    coeffs: Vec<f64>,
}

impl PolyCoeffs {
    pub fn zeros(num_coils: usize, order: usize) -> Self {
        Self {
            num_coils,
            order,
            basis: BasisKind::Monomial,
            coeffs: vec![0.0; coefficient_count(num_coils, order)],
        }
    }

    pub fn new(num_coils: usize, order: usize, basis: BasisKind, coeffs: Vec<f64>) -> Result<Self> {
        if num_coils == 0 {
            return Err(Error::Dimension("coefficients need at least one coil".into()));
        }
        let n = coefficient_count(num_coils, order);
        if coeffs.len() != n {
            return Err(Error::Dimension(format!(
                "{num_coils} coils at order {order} need {n} coefficients, got {}",
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite polynomial coefficient".into()));
        }
        Ok(Self {
            num_coils,
            order,
            basis,
            coeffs,
        })
    }

    /// Constant maps with the given per-coil complex values.
    pub fn constant(order: usize, values: &[Complex64]) -> Self {
        let mut p = Self::zeros(values.len(), order);
        for (i, v) in values.iter().enumerate() {
            *p.get_mut(i, 0, 0) = v.re;
            *p.get_mut(i, 1, 0) = v.im;
        }
        p
    }

    pub fn with_basis(mut self, basis: BasisKind) -> Self {
        self.basis = basis;
        self
    }

    pub fn num_coils(&self) -> usize {
        self.num_coils
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn basis(&self) -> BasisKind {
        self.basis
    }

    pub fn terms(&self) -> usize {
        (self.order + 1) * (self.order + 1)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    fn offset(&self, coil: usize, part: usize, term: usize) -> usize {
        (coil * 2 + part) * self.terms() + term
    }

    pub fn get(&self, coil: usize, part: usize, term: usize) -> f64 {
        self.coeffs[self.offset(coil, part, term)]
    }

    pub fn get_mut(&mut self, coil: usize, part: usize, term: usize) -> &mut f64 {
        let o = self.offset(coil, part, term);
        &mut self.coeffs[o]
    }

    /// Complex coefficient vector of one coil (`re + j im` per term).
    pub fn coil_complex(&self, coil: usize) -> Vec<Complex64> {
        (0..self.terms())
            .map(|t| Complex64::new(self.get(coil, 0, t), self.get(coil, 1, t)))
            .collect()
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Multiplies every coil map by the complex constant `s`.
    pub fn rotated(&self, s: Complex64) -> Self {
        let mut out = self.clone();
        for i in 0..self.num_coils {
            for t in 0..self.terms() {
                let z = Complex64::new(self.get(i, 0, t), self.get(i, 1, t)) * s;
                *out.get_mut(i, 0, t) = z.re;
                *out.get_mut(i, 1, t) = z.im;
            }
        }
        out
    }

    pub fn same_layout(&self, other: &PolyCoeffs) -> bool {
        self.num_coils == other.num_coils && self.order == other.order && self.basis == other.basis
    }

    /// Stored as a complex `[coils, (N+1)^2]` array (real part = real coefficient,
    /// imaginary part = imaginary coefficient).
    pub fn save(&self, path: &Path) -> Result<()> {
        let data: Vec<Complex64> = (0..self.num_coils).flat_map(|i| self.coil_complex(i)).collect();
        let header = Header::new(vec![self.num_coils, self.terms()], Semantic::CsmCoeffs)
            .with_extra("num_coils", json!(self.num_coils))
            .with_extra("poly_order", json!(self.order))
            .with_extra("basis", serde_json::to_value(self.basis).expect("basis serializes"))
            .with_extra("num_unknowns", json!(coefficient_count(self.num_coils, self.order)));
        io::save_array(path, &header, &data)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, data) = io::load_array(path)?;
        let bad = |m: &str| Error::format(io::header_path(path), m.to_string());
        if header.semantic != Semantic::CsmCoeffs {
            return Err(bad("expected semantic \"csm-coeffs\""));
        }
        let order = header
            .extra
            .get("poly_order")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| bad("missing poly_order"))? as usize;
        let basis = match header.extra.get("basis") {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| bad(&e.to_string()))?,
            None => BasisKind::Monomial,
        };
        let c = header.shape.first().copied().unwrap_or(0);
        if header.shape != vec![c, (order + 1) * (order + 1)] {
            return Err(bad("shape does not match order"));
        }
        let mut p = PolyCoeffs::zeros(c, order).with_basis(basis);
        for i in 0..c {
            for t in 0..p.terms() {
                let z = data[i * p.terms() + t];
                *p.get_mut(i, 0, t) = z.re;
                *p.get_mut(i, 1, t) = z.im;
            }
        }
        Ok(p)
    }
}

fn axis_coord(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        -1.0 + 2.0 * i as f64 / (n - 1) as f64
    }
}

fn powers(v: f64, order: usize, kind: BasisKind) -> Vec<f64> {
    let mut out = Vec::with_capacity(order + 1);
    out.push(1.0);
    if order == 0 {
        return out;
    }
    out.push(v);
    for p in 2..=order {
        let next = match kind {
            BasisKind::Monomial => out[p - 1] * v,
            BasisKind::Legendre => {
                let pf = p as f64;
                ((2.0 * pf - 1.0) * v * out[p - 1] - (pf - 1.0) * out[p - 2]) / pf
            }
        };
        out.push(next);
    }
    out
}

/// Design matrix with one row per pixel (row-major) and one column per
/// monomial `x^p y^q`, columns ordered `(p, q)` lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct CsmBasis {
    height: usize,
    width: usize,
    order: usize,
    kind: BasisKind,
    values: Vec<f64>,
}

impl CsmBasis {
    pub fn new(height: usize, width: usize, order: usize, kind: BasisKind) -> Self {
        let nb = (order + 1) * (order + 1);
        let px: Vec<Vec<f64>> = (0..width).map(|c| powers(axis_coord(c, width), order, kind)).collect();
        let py: Vec<Vec<f64>> = (0..height).map(|r| powers(axis_coord(r, height), order, kind)).collect();
        let mut values = Vec::with_capacity(height * width * nb);
        for r in 0..height {
            for c in 0..width {
                for p in 0..=order {
                    for q in 0..=order {
                        values.push(px[c][p] * py[r][q]);
                    }
                }
            }
        }
        Self {
            height,
            width,
            order,
            kind,
            values,
        }
    }

    pub fn for_coeffs(phi: &PolyCoeffs, height: usize, width: usize) -> Self {
        Self::new(height, width, phi.order, phi.basis)
    }

    pub fn terms(&self) -> usize {
        (self.order + 1) * (self.order + 1)
    }

    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn row(&self, pixel: usize) -> &[f64] {
        let nb = self.terms();
        &self.values[pixel * nb..(pixel + 1) * nb]
    }

    pub fn matches(&self, phi: &PolyCoeffs, height: usize, width: usize) -> bool {
        self.order == phi.order && self.kind == phi.basis && self.height == height && self.width == width
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.num_pixels(), self.terms(), &self.values)
    }

    /// Map of one coil from its complex coefficient vector.
    pub fn eval_coil(&self, coeffs: &[Complex64]) -> ComplexGrid {
        let data = (0..self.num_pixels())
            .map(|px| self.row(px).iter().zip(coeffs).map(|(b, c)| c * b).sum())
            .collect();
        ComplexGrid::from_raw(self.height, self.width, data)
    }

    /// `B^T w` for a complex pixel field `w`: entry `t` is `sum_px B[px, t] w[px]`.
    pub fn project(&self, field: &[Complex64]) -> Vec<Complex64> {
        let nb = self.terms();
        let mut out = vec![Complex64::default(); nb];
        for (px, w) in field.iter().enumerate() {
            for (o, b) in out.iter_mut().zip(self.row(px)) {
                *o += w * b;
            }
        }
        out
    }
}

pub fn csm_basis(height: usize, width: usize, order: usize) -> DMatrix<f64> {
    CsmBasis::new(height, width, order, BasisKind::Monomial).to_matrix()
}

pub fn eval_csm_with(phi: &PolyCoeffs, basis: &CsmBasis) -> Vec<ComplexGrid> {
    (0..phi.num_coils).map(|i| basis.eval_coil(&phi.coil_complex(i))).collect()
}

pub fn eval_csm(phi: &PolyCoeffs, height: usize, width: usize) -> Vec<ComplexGrid> {
    eval_csm_with(phi, &CsmBasis::for_coeffs(phi, height, width))
}

#[derive(Debug, Clone)]
pub struct CsmFit {
    pub coeffs: PolyCoeffs,
    /// Root-mean-square residual over the supported pixels and coils.
    pub residual_rms: f64,
}

/// Least-squares polynomial fit of each map over the supported pixels.
pub fn fit_csm(
    maps: &[ComplexGrid],
    order: usize,
    kind: BasisKind,
    support: Option<&ComplexGrid>,
) -> Result<CsmFit> {
    let first = maps
        .first()
        .ok_or_else(|| Error::Dimension("no maps to fit".into()))?;
    let (h, w) = first.shape();
    if maps.iter().any(|m| m.shape() != (h, w)) {
        return Err(Error::Dimension("coil maps differ in shape".into()));
    }
    let pixels: Vec<usize> = match support {
        Some(mask) => {
            first.check_shape(mask, "support mask")?;
            (0..h * w).filter(|&i| mask.data()[i].norm() > 0.5).collect()
        }
        None => (0..h * w).collect(),
    };
    let basis = CsmBasis::new(h, w, order, kind);
    let nb = basis.terms();
    if pixels.len() < nb {
        return Err(Error::RankDeficient(format!(
            "{} supported pixels for {nb} {kind:?} terms of order {order}",
            pixels.len()
        )));
    }
    let a = DMatrix::from_fn(pixels.len(), nb, |i, j| basis.row(pixels[i])[j]);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-13 * smax) {
        return Err(Error::RankDeficient(format!(
            "{kind:?} basis of order {order} on {} pixels has condition {:.3e}",
            pixels.len(),
            smax / smin
        )));
    }
    let c = maps.len();
    let mut rhs = DMatrix::zeros(pixels.len(), 2 * c);
    for (i, m) in maps.iter().enumerate() {
        for (row, &px) in pixels.iter().enumerate() {
            rhs[(row, 2 * i)] = m.data()[px].re;
            rhs[(row, 2 * i + 1)] = m.data()[px].im;
        }
    }
    let sol = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::RankDeficient(e.to_string()))?;
    let resid = &a * &sol - &rhs;
    let residual_rms = (resid.norm_squared() / (pixels.len() * c) as f64).sqrt();
    let mut coeffs = PolyCoeffs::zeros(c, order).with_basis(kind);
    for i in 0..c {
        for t in 0..nb {
            *coeffs.get_mut(i, 0, t) = sol[(t, 2 * i)];
            *coeffs.get_mut(i, 1, t) = sol[(t, 2 * i + 1)];
        }
    }
    Ok(CsmFit {
        coeffs,
        residual_rms,
    })
}

/// Mean over pixels of the root-sum-of-squares energy `sum_i |S_i|^2`.
pub fn mean_rss_energy(maps: &[ComplexGrid]) -> f64 {
    let n = maps[0].len();
    maps.iter().map(|m| m.norm_sqr()).sum::<f64>() / n as f64
}

/// Rescales `phi` by one positive scalar so that the mean of `sum_i |S_i|^2`
/// is 1. Returns the applied scale; divide the paired image by it.
pub fn normalize_csm_gauge_with(phi: &PolyCoeffs, basis: &CsmBasis) -> Result<(PolyCoeffs, f64)> {
    let energy = mean_rss_energy(&eval_csm_with(phi, basis));
    if !(energy > 0.0) || !energy.is_finite() {
        return Err(Error::InvalidArgument(
            "cannot normalize identically zero coil maps".into(),
        ));
    }
    let scale = 1.0 / energy.sqrt();
    Ok((phi.scaled(scale), scale))
}

pub fn normalize_csm_gauge(phi: &PolyCoeffs, height: usize, width: usize) -> Result<(PolyCoeffs, f64)> {
    normalize_csm_gauge_with(phi, &CsmBasis::for_coeffs(phi, height, width))
}
