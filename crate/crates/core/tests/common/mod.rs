#![allow(dead_code)]

use jointmoco::csm::{coefficient_count, BasisKind, PolyCoeffs};
use jointmoco::geometry::{make_plan, AcquisitionPlan, MotionParams, PlanSpec, SamplingScheme, ShotOrdering};
use jointmoco::{ComplexGrid, Measurements, RngSeed};
use num_complex::Complex64;
use rand::Rng;

pub fn random_phi(c: usize, order: usize, seed: u64) -> PolyCoeffs {
    let mut rng = RngSeed(seed).rng(11);
    let n = coefficient_count(c, order);
    let terms = (order + 1) * (order + 1);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-0.3..0.3)).collect();
    for i in 0..c {
        v[i * 2 * terms] += 1.0;
    }
    PolyCoeffs::new(c, order, BasisKind::Monomial, v).unwrap()
}

pub fn random_motion(j: usize, max_theta: f64, max_t: f64, seed: u64) -> MotionParams {
    let mut rng = RngSeed(seed).rng(12);
    let rot = (0..j).map(|_| rng.random_range(-max_theta..max_theta)).collect();
    let tr = (0..j)
        .map(|_| [rng.random_range(-max_t..max_t), rng.random_range(-max_t..max_t)])
        .collect();
    MotionParams::new(rot, tr).unwrap()
}

pub fn random_plan(h: usize, w: usize, accel: f64, shots: usize, seed: u64) -> AcquisitionPlan {
    make_plan(PlanSpec {
        height: h,
        width: w,
        accel,
        acs_lines: 4,
        scheme: SamplingScheme::Random,
        num_shots: shots,
        ordering: ShotOrdering::Interleaved,
        seed: RngSeed(seed),
    })
    .unwrap()
}

pub fn random_measurements(c: usize, m: usize, seed: u64) -> Measurements {
    let mut rng = RngSeed(seed).rng(13);
    Measurements::new(
        (0..c)
            .map(|_| {
                (0..m)
                    .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect()
            })
            .collect(),
    )
    .unwrap()
}

pub fn random_image(h: usize, w: usize, seed: u64) -> ComplexGrid {
    ComplexGrid::random_normal(h, w, 1.0, &mut RngSeed(seed).rng(14))
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

pub fn rel_l2(reference: &[Complex64], test: &[Complex64]) -> f64 {
    let num: f64 = reference.iter().zip(test).map(|(a, b)| (a - b).norm_sqr()).sum();
    let den: f64 = reference.iter().map(|a| a.norm_sqr()).sum();
    (num / den).sqrt()
}

/// Dense forward matrix, one column per pixel, rows stacked coil by coil.
pub fn dense_forward(
    plan: &AcquisitionPlan,
    m: &MotionParams,
    phi: &PolyCoeffs,
) -> nalgebra::DMatrix<Complex64> {
    use jointmoco::forward::{ForwardModel, ForwardOptions};
    let model = ForwardModel::new(plan, ForwardOptions::default());
    let (h, w) = (plan.height(), plan.width());
    let c = phi.num_coils();
    let ns = plan.num_samples();
    let mut a = nalgebra::DMatrix::<Complex64>::zeros(c * ns, h * w);
    for k in 0..h * w {
        let mut e = ComplexGrid::zeros(h, w);
        e.data_mut()[k] = Complex64::new(1.0, 0.0);
        let y = model.forward(&e, m, phi).unwrap().predicted;
        for i in 0..c {
            for (s, v) in y.coil(i).iter().enumerate() {
                a[(i * ns + s, k)] = *v;
            }
        }
    }
    a
}

/// Mean of the Gaussian with log density
/// `-|y - A x|^2 / (2 s_data) - |x - x_star|^2 / (2 s_prior)`.
pub fn gaussian_posterior_mean(
    a: &nalgebra::DMatrix<Complex64>,
    y: &Measurements,
    x_star: &ComplexGrid,
    s_data: f64,
    s_prior: f64,
) -> Vec<Complex64> {
    let yv = nalgebra::DVector::from_iterator(
        a.nrows(),
        y.coils().iter().flat_map(|c| c.iter().copied()),
    );
    let xs = nalgebra::DVector::from_column_slice(x_star.data());
    let ah = a.adjoint();
    let mut p = &ah * a / Complex64::new(s_data, 0.0);
    for i in 0..p.nrows() {
        p[(i, i)] += Complex64::new(1.0 / s_prior, 0.0);
    }
    let rhs = &ah * yv / Complex64::new(s_data, 0.0) + xs / Complex64::new(s_prior, 0.0);
    let mu = p.cholesky().expect("posterior precision is positive definite").solve(&rhs);
    mu.iter().copied().collect()
}

pub struct OracleRun {
    pub sample: ComplexGrid,
    pub mean: Vec<Complex64>,
}

/// Linear-Gaussian instance at 16x16: full sampling, two coils, two moved
/// shots, frozen motion and coil maps, Gaussian prior centred away from the
/// truth so that data and prior both pull on the answer.
pub fn posterior_oracle(seed: u64, chain_seed: u64, langevin_noise: bool) -> OracleRun {
    use jointmoco::forward::{ForwardModel, ForwardOptions};
    use jointmoco::geometry::full_plan;
    use jointmoco::prior::oracle_gaussian_prior;
    use jointmoco::sampler::{sample_joint, BlockSteps, SamplerConfig, SamplerInit};
    use jointmoco::sim::shepp_logan;

    let (h, w) = (16, 16);
    let plan = full_plan(h, w, 2).unwrap();
    let m = random_motion(2, 0.05, 1.0, seed);
    let phi = random_phi(2, 2, seed);
    let x_true = shepp_logan(h, w, 1.0).unwrap();
    let model = ForwardModel::new(&plan, ForwardOptions::default());
    let y = model.forward(&x_true, &m, &phi).unwrap().predicted;
    let mut x_star = x_true.clone();
    x_star.axpy(Complex64::new(0.3, 0.0), &random_image(h, w, seed + 1));

    let (sigma_min, tau) = (1e-3, 2e-3);
    let peak = model
        .coil_maps(&phi)
        .iter()
        .fold(vec![0.0; h * w], |mut acc, s| {
            for (a, v) in acc.iter_mut().zip(s.data()) {
                *a += v.norm_sqr();
            }
            acc
        })
        .into_iter()
        .fold(0.0f64, f64::max);
    let cfg = SamplerConfig {
        sigma_min,
        sigma_max: 0.1,
        steps: 60,
        inner_loops: 40,
        eps_x: Some(0.8 * sigma_min * sigma_min / peak),
        block_steps: BlockSteps::Plain,
        poly_order: 2,
        freeze_m: true,
        freeze_phi: true,
        langevin_noise,
        seed: RngSeed(chain_seed),
        ..Default::default()
    };
    let prior = oracle_gaussian_prior(x_star.clone(), tau).unwrap();
    let init = SamplerInit {
        x: None,
        m: Some(m.clone()),
        phi: Some(phi.clone()),
    };
    let out = sample_joint(&y, &plan, &prior, &cfg, &init).map_err(|f| f.error).unwrap();
    let a = dense_forward(&plan, &m, &phi);
    let mean = gaussian_posterior_mean(&a, &y, &x_star, sigma_min * sigma_min, tau * tau + sigma_min * sigma_min);
    OracleRun { sample: out.x, mean }
}

pub fn cli() -> std::process::Command {
    std::process::Command::new(env!("CARGO_BIN_EXE_jointmoco"))
}

/// Runs the CLI and returns its exit code, echoing stderr on failure.
pub fn run_cli(args: &[&str]) -> i32 {
    let out = cli().args(args).output().expect("binary runs");
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out.status.code().unwrap_or(-1)
}

/// Every file under `dir` except wall-clock timing, as (relative path, bytes).
pub fn snapshot(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &std::path::Path, dir: &std::path::Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else if p.file_name().unwrap() != "timing.json" {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut v = Vec::new();
    walk(dir, dir, &mut v);
    v.sort();
    v
}
