//! Shared numeric containers.
//!
//! Grids are row-major with index `(row, col)` mapping to image axes `(y, x)`.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 2D complex grid used for images, coil maps, and Cartesian k-space.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl ComplexGrid {
    pub fn new(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension(format!(
                "grid dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::Dimension(format!(
                "grid {height}x{width} needs {} entries, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|z| !z.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite grid entry at flat index {i}"
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Builds a grid without validation. Callers guarantee the length.
    pub(crate) fn from_raw(height: usize, width: usize, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self {
            height,
            width,
            data,
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::from_raw(height, width, vec![Complex64::new(0.0, 0.0); height * width])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> Complex64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::from_raw(height, width, data)
    }

    pub fn from_real(height: usize, width: usize, values: &[f64]) -> Result<Self> {
        Self::new(
            height,
            width,
            values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )
    }

    /// Standard complex Gaussian grid: each real and imaginary component ~ N(0, std^2).
    pub fn random_normal(height: usize, width: usize, std: f64, rng: &mut impl rand::Rng) -> Self {
        Self::from_fn(height, width, |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(std * re, std * im)
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn same_shape(&self, other: &ComplexGrid) -> bool {
        self.shape() == other.shape()
    }

    pub(crate) fn check_shape(&self, other: &ComplexGrid, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{what}: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.is_finite())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Inner product `sum conj(self) * other`.
    pub fn inner(&self, other: &ComplexGrid) -> Complex64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.norm()).collect()
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> ComplexGrid {
        Self::from_raw(self.height, self.width, self.data.iter().map(|&z| f(z)).collect())
    }

    pub fn scaled(&self, s: Complex64) -> ComplexGrid {
        self.map(|z| z * s)
    }

    pub fn scale_real(&mut self, s: f64) {
        self.data.iter_mut().for_each(|z| *z *= s);
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: Complex64, other: &ComplexGrid) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn add(&self, other: &ComplexGrid) -> ComplexGrid {
        let mut out = self.clone();
        out.axpy(Complex64::new(1.0, 0.0), other);
        out
    }

    pub fn sub(&self, other: &ComplexGrid) -> ComplexGrid {
        let mut out = self.clone();
        out.axpy(Complex64::new(-1.0, 0.0), other);
        out
    }

    /// Pointwise product.
    pub fn hadamard(&self, other: &ComplexGrid) -> ComplexGrid {
        Self::from_raw(
            self.height,
            self.width,
            self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect(),
        )
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.width..(r + 1) * self.width]
    }

    pub fn column(&self, c: usize) -> Vec<Complex64> {
        (0..self.height).map(|r| self[(r, c)]).collect()
    }
}

impl Index<(usize, usize)> for ComplexGrid {
    type Output = Complex64;

    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.width + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexGrid {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.width + c]
    }
}

/// Per-coil complex samples at the acquired k-space positions of a plan.
///
/// All coils share one sample ordering, the plan's acquisition order.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    samples: Vec<Vec<Complex64>>,
}

impl Measurements {
    pub fn new(samples: Vec<Vec<Complex64>>) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::Dimension("measurements need at least one coil".into()));
        };
        let m = first.len();
        if let Some(i) = samples.iter().position(|s| s.len() != m) {
            return Err(Error::Dimension(format!(
                "coil {i} has {} samples, coil 0 has {m}",
                samples[i].len()
            )));
        }
        Ok(Self { samples })
    }

    pub fn zeros(num_coils: usize, num_samples: usize) -> Self {
        Self {
            samples: vec![vec![Complex64::new(0.0, 0.0); num_samples]; num_coils],
        }
    }

    pub fn num_coils(&self) -> usize {
        self.samples.len()
    }

    pub fn num_samples(&self) -> usize {
        self.samples[0].len()
    }

    pub fn coil(&self, i: usize) -> &[Complex64] {
        &self.samples[i]
    }

    pub fn coil_mut(&mut self, i: usize) -> &mut [Complex64] {
        &mut self.samples[i]
    }

    pub fn coils(&self) -> &[Vec<Complex64>] {
        &self.samples
    }

    /// Indices into the plan's acquired positions; always `0..m` in plan order.
    pub fn sample_locations(&self) -> std::ops::Range<usize> {
        0..self.num_samples()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.samples
            .iter()
            .flat_map(|s| s.iter())
            .map(|z| z.norm_sqr())
            .sum()
    }

    /// Inner product `sum conj(self) * other` across all coils.
    pub fn inner(&self, other: &Measurements) -> Complex64 {
        self.samples
            .iter()
            .zip(&other.samples)
            .flat_map(|(a, b)| a.iter().zip(b))
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn sub(&self, other: &Measurements) -> Measurements {
        Measurements {
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                .collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Measurements {
        Measurements {
            samples: self
                .samples
                .iter()
                .map(|a| a.iter().map(|z| z * s).collect())
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().flatten().all(|z| z.is_finite())
    }

    pub fn into_inner(self) -> Vec<Vec<Complex64>> {
        self.samples
    }
}

/// Seed for every stochastic operation.
///
/// Independent parameter blocks draw from separate ChaCha streams of the same
/// seed, so adding draws to one block never shifts another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(stream);
        rng
    }
}

impl From<u64> for RngSeed {
    fn from(v: u64) -> Self {
        RngSeed(v)
    }
}
