//! K-space coordinates, undersampling plans, and rigid-motion transforms.
//!
//! Frequencies are in radians/pixel. `kx` runs along grid columns (readout),
//! `ky` along grid rows (phase encode), and the zero frequency sits at grid
//! index `(H/2, W/2)` (integer division).

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, RngSeed};
use crate::io::{self, Header, Semantic};

/// A list of `(kx, ky)` frequency pairs in radians/pixel.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KCoords {
    pub points: Vec<[f64; 2]>,
}

impl KCoords {
    pub fn new(points: Vec<[f64; 2]>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64; 2]> {
        self.points.iter()
    }

    pub fn subset(&self, indices: &[usize]) -> KCoords {
        KCoords::new(indices.iter().map(|&i| self.points[i]).collect())
    }
}

pub fn cartesian_coords(height: usize, width: usize) -> Result<KCoords> {
    if height < 2 || width < 2 {
        return Err(Error::InvalidArgument(format!(
            "cartesian grid needs both sides >= 2, got {height}x{width}"
        )));
    }
    let mut pts = Vec::with_capacity(height * width);
    for r in 0..height {
        let ky = 2.0 * PI * (r as f64 - (height / 2) as f64) / height as f64;
        for c in 0..width {
            let kx = 2.0 * PI * (c as f64 - (width / 2) as f64) / width as f64;
            pts.push([kx, ky]);
        }
    }
    Ok(KCoords::new(pts))
}

#[inline]
pub fn rotate_point(p: [f64; 2], cos: f64, sin: f64) -> [f64; 2] {
    [cos * p[0] - sin * p[1], sin * p[0] + cos * p[1]]
}

/// Applies `R(theta) = [[cos, -sin], [sin, cos]]` about the k-space origin.
pub fn rotate_coords(coords: &KCoords, theta: f64) -> Result<KCoords> {
    if !theta.is_finite() {
        return Err(Error::InvalidArgument("rotation angle is not finite".into()));
    }
    let (sin, cos) = theta.sin_cos();
    Ok(KCoords::new(
        coords.points.iter().map(|&p| rotate_point(p, cos, sin)).collect(),
    ))
}

/// `exp(-j (tx kx + ty ky))` per point; an integer shift `t` is a circular image shift.
pub fn translation_phase(coords: &KCoords, t: [f64; 2]) -> Vec<Complex64> {
    coords
        .points
        .iter()
        .map(|p| Complex64::from_polar(1.0, -(t[0] * p[0] + t[1] * p[1])))
        .collect()
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Per-shot rigid motion: rotation angles (radians) and translations (pixels).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionParams {
    rotations: Vec<f64>,
    translations: Vec<[f64; 2]>,
}

impl MotionParams {
    pub fn new(rotations: Vec<f64>, translations: Vec<[f64; 2]>) -> Result<Self> {
        if rotations.is_empty() || rotations.len() != translations.len() {
            return Err(Error::Dimension(format!(
                "motion needs matching non-empty per-shot arrays, got {} rotations and {} translations",
                rotations.len(),
                translations.len()
            )));
        }
        if rotations.iter().any(|a| !a.is_finite())
            || translations.iter().flatten().any(|a| !a.is_finite())
        {
            return Err(Error::InvalidArgument("non-finite motion parameter".into()));
        }
        Ok(Self {
            rotations: rotations.into_iter().map(wrap_angle).collect(),
            translations,
        })
    }

    pub fn identity(num_shots: usize) -> Self {
        Self {
            rotations: vec![0.0; num_shots],
            translations: vec![[0.0, 0.0]; num_shots],
        }
    }

    pub fn num_shots(&self) -> usize {
        self.rotations.len()
    }

    pub fn rotations(&self) -> &[f64] {
        &self.rotations
    }

    pub fn translations(&self) -> &[[f64; 2]] {
        &self.translations
    }

    pub fn rotation(&self, shot: usize) -> f64 {
        self.rotations[shot]
    }

    pub fn translation(&self, shot: usize) -> [f64; 2] {
        self.translations[shot]
    }

    pub fn set_shot(&mut self, shot: usize, theta: f64, t: [f64; 2]) {
        self.rotations[shot] = wrap_angle(theta);
        self.translations[shot] = t;
    }

    /// Flattened `[theta_0, tx_0, ty_0, theta_1, ...]`.
    pub fn to_vec(&self) -> Vec<f64> {
        self.rotations
            .iter()
            .zip(&self.translations)
            .flat_map(|(&a, t)| [a, t[0], t[1]])
            .collect()
    }

    pub fn from_vec(v: &[f64]) -> Result<Self> {
        if v.len() % 3 != 0 || v.is_empty() {
            return Err(Error::Dimension(format!(
                "flattened motion length {} is not a positive multiple of 3",
                v.len()
            )));
        }
        Self::new(
            v.chunks(3).map(|c| c[0]).collect(),
            v.chunks(3).map(|c| [c[1], c[2]]).collect(),
        )
    }

    /// Re-expresses every shot relative to shot 0 so shot 0 becomes the identity.
    ///
    /// Shot `j` maps reference image points `r` to `R(-theta_j) r + t_j`. Composing
    /// with the inverse of shot 0 gives `theta_j - theta_0` and
    /// `t_j - R(theta_0 - theta_j) t_0`.
    pub fn relative_to_first(&self) -> MotionParams {
        let a0 = self.rotations[0];
        let t0 = self.translations[0];
        let mut out = self.clone();
        for j in 0..self.num_shots() {
            let d = wrap_angle(self.rotations[j] - a0);
            let (s, c) = (-d).sin_cos();
            let rt0 = rotate_point(t0, c, s);
            out.rotations[j] = d;
            out.translations[j] = [self.translations[j][0] - rt0[0], self.translations[j][1] - rt0[1]];
        }
        out
    }

    /// Applies one global rigid transform `g` to the reference frame:
    /// every shot map becomes `M_j o g^-1`.
    pub fn compose_global(&self, g_theta: f64, g_t: [f64; 2]) -> MotionParams {
        // M_j(r) = R(-a_j) r + t_j, g(r) = R(-b) r + u, g^-1(s) = R(b)(s - u)
        // M_j(g^-1(s)) = R(b - a_j) s - R(b - a_j) u + t_j  =>  a'_j = a_j - b
        let mut out = self.clone();
        for j in 0..self.num_shots() {
            let a = wrap_angle(self.rotations[j] - g_theta);
            let (s, c) = (-a).sin_cos();
            let ru = rotate_point(g_t, c, s);
            out.rotations[j] = a;
            out.translations[j] = [self.translations[j][0] - ru[0], self.translations[j][1] - ru[1]];
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("shot,theta_rad,theta_deg,tx_px,ty_px\n");
        for j in 0..self.num_shots() {
            let a = self.rotations[j];
            let t = self.translations[j];
            s.push_str(&format!(
                "{j},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                a,
                a.to_degrees(),
                t[0],
                t[1]
            ));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rot = Vec::new();
        let mut tr = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(Error::Config(format!("motion csv line {}: expected 5 fields", i + 1)));
            }
            let num = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("motion csv line {}: {e}", i + 1)))
            };
            rot.push(num(f[1])?);
            tr.push([num(f[3])?, num(f[4])?]);
        }
        Self::new(rot, tr)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingScheme {
    Equispaced,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ShotOrdering {
    #[default]
    Sequential,
    Interleaved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSpec {
    pub height: usize,
    pub width: usize,
    pub accel: f64,
    pub acs_lines: usize,
    pub scheme: SamplingScheme,
    pub num_shots: usize,
    pub ordering: ShotOrdering,
    pub seed: RngSeed,
}

/// Which phase-encode lines are acquired and in which shot.
///
/// Samples are ordered line by line (ascending line index) with all `width`
/// readout points of a line contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionPlan {
    spec: PlanSpec,
    acquired_lines: Vec<usize>,
    shot_of_line: Vec<usize>,
    coords: KCoords,
    shot_samples: Vec<Vec<usize>>,
}

impl AcquisitionPlan {
    fn from_lines(spec: PlanSpec, acquired_lines: Vec<usize>, shot_of_line: Vec<usize>) -> Result<Self> {
        let (h, w) = (spec.height, spec.width);
        let grid = cartesian_coords(h, w)?;
        let mut pts = Vec::with_capacity(acquired_lines.len() * w);
        let mut shot_samples = vec![Vec::new(); spec.num_shots];
        for (li, &line) in acquired_lines.iter().enumerate() {
            if line >= h {
                return Err(Error::Dimension(format!("line {line} outside height {h}")));
            }
            let shot = shot_of_line[li];
            if shot >= spec.num_shots {
                return Err(Error::Dimension(format!("shot {shot} >= {}", spec.num_shots)));
            }
            for c in 0..w {
                shot_samples[shot].push(pts.len());
                pts.push(grid.points[line * w + c]);
            }
        }
        Ok(Self {
            spec,
            acquired_lines,
            shot_of_line,
            coords: KCoords::new(pts),
            shot_samples,
        })
    }

    pub fn spec(&self) -> &PlanSpec {
        &self.spec
    }

    pub fn height(&self) -> usize {
        self.spec.height
    }

    pub fn width(&self) -> usize {
        self.spec.width
    }

    pub fn num_shots(&self) -> usize {
        self.spec.num_shots
    }

    pub fn acquired_lines(&self) -> &[usize] {
        &self.acquired_lines
    }

    /// Shot index for each entry of `acquired_lines`.
    pub fn shot_of_line(&self) -> &[usize] {
        &self.shot_of_line
    }

    pub fn shot_of(&self, line: usize) -> Option<usize> {
        self.acquired_lines
            .iter()
            .position(|&l| l == line)
            .map(|i| self.shot_of_line[i])
    }

    /// Nominal (unrotated) coordinates of every acquired sample, in plan order.
    pub fn coords(&self) -> &KCoords {
        &self.coords
    }

    pub fn num_samples(&self) -> usize {
        self.coords.len()
    }

    /// Sample indices belonging to each shot, ascending.
    pub fn shot_samples(&self) -> &[Vec<usize>] {
        &self.shot_samples
    }

    /// Grid position `(row, col)` of sample `k`.
    pub fn sample_position(&self, k: usize) -> (usize, usize) {
        let w = self.spec.width;
        (self.acquired_lines[k / w], k % w)
    }

    pub fn effective_accel(&self) -> f64 {
        self.spec.height as f64 / self.acquired_lines.len() as f64
    }

    pub fn mask(&self) -> ComplexGrid {
        let mut m = ComplexGrid::zeros(self.spec.height, self.spec.width);
        for &line in &self.acquired_lines {
            for c in 0..self.spec.width {
                m[(line, c)] = Complex64::new(1.0, 0.0);
            }
        }
        m
    }

    /// Stores the mask with the plan parameters and shot map in the header.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mask = self.mask();
        let header = Header::new(vec![self.spec.height, self.spec.width], Semantic::Mask)
            .with_extra("plan", serde_json::to_value(&self.spec).expect("plan spec serializes"))
            .with_extra("acquired_lines", json!(self.acquired_lines))
            .with_extra("shot_of_line", json!(self.shot_of_line));
        io::save_array(path, &header, mask.data())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, data) = io::load_array(path)?;
        let bad = |msg: &str| Error::format(io::header_path(path), msg.to_string());
        if header.semantic != Semantic::Mask {
            return Err(bad("plan file must have semantic \"mask\""));
        }
        let spec: PlanSpec = serde_json::from_value(header.extra.get("plan").cloned().ok_or_else(|| bad("missing plan"))?)
            .map_err(|e| bad(&e.to_string()))?;
        let lines: Vec<usize> = serde_json::from_value(
            header.extra.get("acquired_lines").cloned().ok_or_else(|| bad("missing acquired_lines"))?,
        )
        .map_err(|e| bad(&e.to_string()))?;
        let shots: Vec<usize> = serde_json::from_value(
            header.extra.get("shot_of_line").cloned().ok_or_else(|| bad("missing shot_of_line"))?,
        )
        .map_err(|e| bad(&e.to_string()))?;
        if lines.len() != shots.len() {
            return Err(bad("acquired_lines and shot_of_line lengths differ"));
        }
        let plan = Self::from_lines(spec, lines, shots)?;
        let mask = io::grid_from(path, &header, data)?;
        if mask != plan.mask() {
            return Err(bad("mask payload disagrees with acquired_lines"));
        }
        Ok(plan)
    }
}

/// Builds a line-undersampling plan with a fully sampled central ACS block.
pub fn make_plan(spec: PlanSpec) -> Result<AcquisitionPlan> {
    let h = spec.height;
    if h < 2 || spec.width < 2 {
        return Err(Error::InvalidArgument("plan grid needs both sides >= 2".into()));
    }
    if !(spec.accel >= 1.0 && spec.accel <= h as f64) {
        return Err(Error::InvalidArgument(format!(
            "acceleration {} outside [1, {h}]",
            spec.accel
        )));
    }
    if spec.num_shots == 0 {
        return Err(Error::InvalidArgument("num_shots must be >= 1".into()));
    }
    let budget = ((h as f64 / spec.accel) - 1e-9).ceil() as usize;
    if spec.acs_lines >= budget && budget < h {
        return Err(Error::InvalidArgument(format!(
            "acs_lines {} does not fit the line budget {budget}",
            spec.acs_lines
        )));
    }
    if spec.num_shots > budget {
        return Err(Error::InvalidArgument(format!(
            "{} shots exceed {budget} acquired lines",
            spec.num_shots
        )));
    }

    let acs = spec.acs_lines.min(budget);
    let acs_start = h / 2 - acs / 2;
    let mut lines: Vec<usize> = (acs_start..acs_start + acs).collect();
    let candidates: Vec<usize> = (0..h).filter(|l| !lines.contains(l)).collect();
    let need = budget - acs;
    match spec.scheme {
        SamplingScheme::Equispaced => {
            let n = candidates.len();
            for i in 0..need {
                let idx = ((i as f64 + 0.5) * n as f64 / need as f64).floor() as usize;
                lines.push(candidates[idx.min(n - 1)]);
            }
        }
        SamplingScheme::Random => {
            let mut pool = candidates;
            pool.shuffle(&mut spec.seed.rng(0x504c_414e));
            lines.extend_from_slice(&pool[..need]);
        }
    }
    lines.sort_unstable();
    lines.dedup();
    debug_assert_eq!(lines.len(), budget);

    let j = spec.num_shots;
    let n = lines.len();
    let shot_of_line: Vec<usize> = match spec.ordering {
        ShotOrdering::Sequential => {
            // contiguous blocks, earlier blocks take the remainder
            let base = n / j;
            let extra = n % j;
            let mut v = Vec::with_capacity(n);
            for s in 0..j {
                let size = base + usize::from(s < extra);
                v.extend(std::iter::repeat_n(s, size));
            }
            v
        }
        ShotOrdering::Interleaved => (0..n).map(|i| i % j).collect(),
    };
    AcquisitionPlan::from_lines(spec, lines, shot_of_line)
}

/// Fully sampled Cartesian plan, all lines in one shot unless `num_shots` says otherwise.
pub fn full_plan(height: usize, width: usize, num_shots: usize) -> Result<AcquisitionPlan> {
    make_plan(PlanSpec {
        height,
        width,
        accel: 1.0,
        acs_lines: 0,
        scheme: SamplingScheme::Equispaced,
        num_shots,
        ordering: ShotOrdering::Sequential,
        seed: RngSeed(0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn spec(h: usize, accel: f64, acs: usize, j: usize) -> PlanSpec {
        PlanSpec {
            height: h,
            width: h,
            accel,
            acs_lines: acs,
            scheme: SamplingScheme::Equispaced,
            num_shots: j,
            ordering: ShotOrdering::Sequential,
            seed: RngSeed(1),
        }
    }

    #[test]
    fn cartesian_dc_is_centered() {
        let k = cartesian_coords(4, 4).unwrap();
        assert_eq!(k.points[2 * 4 + 2], [0.0, 0.0]);
        let p = k.points[2 * 4 + 3];
        assert_abs_diff_eq!(p[0], PI / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn cartesian_two_by_two() {
        let k = cartesian_coords(2, 2).unwrap();
        let xs: Vec<f64> = k.points.iter().map(|p| p[0]).collect();
        let ys: Vec<f64> = k.points.iter().map(|p| p[1]).collect();
        assert_eq!(xs, vec![-PI, 0.0, -PI, 0.0]);
        assert_eq!(ys, vec![-PI, -PI, 0.0, 0.0]);
        assert!(cartesian_coords(1, 4).is_err());
    }

    #[test]
    fn quarter_turn_maps_x_to_y() {
        let r = rotate_coords(&KCoords::new(vec![[1.0, 0.0]]), PI / 2.0).unwrap();
        assert_abs_diff_eq!(r.points[0][0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.points[0][1], 1.0, epsilon = 1e-15);
        assert!(rotate_coords(&r, f64::NAN).is_err());
    }

    #[test]
    fn translation_phase_values() {
        let k = KCoords::new(vec![[PI, 0.0], [0.3, -1.2]]);
        assert!(translation_phase(&k, [0.0, 0.0]).iter().all(|z| (z - 1.0).norm() < 1e-15));
        let f = translation_phase(&k, [1.0, 0.0]);
        assert!((f[0] - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn small_plan_contains_center_lines() {
        let p = make_plan(spec(8, 2.0, 2, 1)).unwrap();
        assert_eq!(p.acquired_lines().len(), 4);
        assert!(p.acquired_lines().contains(&3));
        assert!(p.acquired_lines().contains(&4));
    }

    #[test]
    fn sequential_shots_are_equal_blocks() {
        let p = make_plan(spec(16, 2.0, 2, 4)).unwrap();
        assert_eq!(p.acquired_lines().len(), 8);
        let mut counts = [0usize; 4];
        p.shot_of_line().iter().for_each(|&s| counts[s] += 1);
        assert_eq!(counts, [2, 2, 2, 2]);
        assert_eq!(p.shot_of_line(), &[0, 0, 1, 1, 2, 2, 3, 3]);
    }

    #[test]
    fn interleaved_shots_round_robin() {
        let mut s = spec(16, 2.0, 2, 4);
        s.ordering = ShotOrdering::Interleaved;
        let p = make_plan(s).unwrap();
        assert_eq!(p.shot_of_line(), &[0, 1, 2, 3, 0, 1, 2, 3]);
    }

    #[test]
    fn accel_4_8_on_384_gives_80_lines() {
        let p = make_plan(spec(384, 4.8, 24, 8)).unwrap();
        assert_eq!(p.acquired_lines().len(), 80);
        assert!((p.effective_accel() - 4.8).abs() <= 0.1);
    }

    #[test]
    fn infeasible_plans_are_rejected() {
        assert!(make_plan(spec(8, 2.0, 4, 1)).is_err());
        assert!(make_plan(spec(8, 2.0, 2, 5)).is_err());
        assert!(make_plan(spec(8, 0.5, 2, 1)).is_err());
        assert!(make_plan(spec(8, 2.0, 2, 0)).is_err());
    }

    #[test]
    fn plan_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = spec(32, 4.0, 4, 3);
        s.scheme = SamplingScheme::Random;
        let p = make_plan(s).unwrap();
        p.save(&dir.path().join("plan")).unwrap();
        assert_eq!(AcquisitionPlan::load(&dir.path().join("plan")).unwrap(), p);
    }

    #[test]
    fn relative_to_first_fixes_shot_zero() {
        let m = MotionParams::new(vec![0.1, -0.05, 0.2], vec![[1.0, 2.0], [0.5, -1.0], [0.0, 0.3]]).unwrap();
        let g = m.relative_to_first();
        assert_abs_diff_eq!(g.rotation(0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.translation(0)[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g.translation(0)[1], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn csv_round_trip() {
        let m = MotionParams::new(vec![0.1, -0.05], vec![[1.0, 2.0], [0.5, -1.0]]).unwrap();
        let back = MotionParams::from_csv(&m.to_csv()).unwrap();
        for (a, b) in m.to_vec().iter().zip(back.to_vec()) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    proptest! {
        #[test]
        fn rotation_is_invertible_isometry(theta in -7.0f64..7.0, x in -4.0f64..4.0, y in -4.0f64..4.0) {
            let k = KCoords::new(vec![[x, y]]);
            let r = rotate_coords(&k, theta).unwrap();
            let back = rotate_coords(&r, -theta).unwrap();
            prop_assert!((back.points[0][0] - x).abs() < 1e-12);
            prop_assert!((back.points[0][1] - y).abs() < 1e-12);
            let n0 = x.hypot(y);
            let n1 = r.points[0][0].hypot(r.points[0][1]);
            prop_assert!((n0 - n1).abs() < 1e-12);
        }

        #[test]
        fn translation_phases_compose(t1x in -5.0f64..5.0, t1y in -5.0f64..5.0, t2x in -5.0f64..5.0, t2y in -5.0f64..5.0) {
            let k = cartesian_coords(6, 5).unwrap();
            let a = translation_phase(&k, [t1x, t1y]);
            let b = translation_phase(&k, [t2x, t2y]);
            let c = translation_phase(&k, [t1x + t2x, t1y + t2y]);
            for i in 0..k.len() {
                prop_assert!((a[i] * b[i] - c[i]).norm() < 1e-12);
                prop_assert!((a[i].norm() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn shots_partition_acquired_lines(
            h in 16usize..80, accel in 1.0f64..4.0, j in 1usize..5, seed in 0u64..100, interleaved in any::<bool>(), random in any::<bool>()
        ) {
            let s = PlanSpec {
                height: h,
                width: 8,
                accel,
                acs_lines: 2,
                scheme: if random { SamplingScheme::Random } else { SamplingScheme::Equispaced },
                num_shots: j,
                ordering: if interleaved { ShotOrdering::Interleaved } else { ShotOrdering::Sequential },
                seed: RngSeed(seed),
            };
            let p = make_plan(s.clone()).unwrap();
            prop_assert_eq!(&make_plan(s).unwrap(), &p);
            let total: usize = p.shot_samples().iter().map(|v| v.len()).sum();
            prop_assert_eq!(total, p.num_samples());
            let mut seen = vec![false; p.num_samples()];
            for v in p.shot_samples() {
                for &k in v {
                    prop_assert!(!seen[k]);
                    seen[k] = true;
                }
            }
            let mid = h / 2;
            prop_assert!(p.acquired_lines().contains(&mid));
            prop_assert!(p.acquired_lines().contains(&(mid - 1)));
            if h as f64 >= 10.0 * accel * accel {
                prop_assert!((p.effective_accel() - accel).abs() <= 0.1);
            }
        }

        #[test]
        fn global_regauge_is_undone(theta in -0.3f64..0.3, tx in -3.0f64..3.0, ty in -3.0f64..3.0) {
            let m = MotionParams::new(vec![0.0, 0.04, -0.02], vec![[0.0, 0.0], [1.0, -0.5], [0.3, 2.0]]).unwrap();
            let moved = m.compose_global(theta, [tx, ty]);
            let back = moved.relative_to_first();
            for (a, b) in m.to_vec().iter().zip(back.to_vec()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
