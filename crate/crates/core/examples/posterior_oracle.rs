//! With motion and coil maps held fixed and a Gaussian image prior, the
//! chain targets a Gaussian whose mean has a closed form. Compare the two.

use jointmoco::forward::{ForwardModel, ForwardOptions};
use jointmoco::geometry::{full_plan, MotionParams};
use jointmoco::prior::oracle_gaussian_prior;
use jointmoco::sampler::{sample_joint, SamplerConfig, SamplerInit};
use jointmoco::sim::{shepp_logan, synth_csm};
use jointmoco::{ComplexGrid, RngSeed};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (h, w, coils) = (16, 16, 2);
    let plan = full_plan(h, w, 2)?;
    let m = MotionParams::new(vec![0.0, 0.03], vec![[0.0, 0.0], [0.7, -0.4]])?;
    let (_, phi) = synth_csm(coils, h, w, 2, RngSeed(0))?;
    let model = ForwardModel::new(&plan, ForwardOptions::default());
    let x_true = shepp_logan(h, w, 1.0)?;
    let y = model.forward(&x_true, &m, &phi)?.predicted;
    // prior centred off the truth
    let x_star = x_true.add(&ComplexGrid::random_normal(h, w, 0.2, &mut RngSeed(1).rng(0)));
    let (sigma_min, tau) = (1e-3, 2e-3);

    let cfg = SamplerConfig {
        sigma_min,
        sigma_max: 0.1,
        steps: 60,
        inner_loops: 40,
        eps_x: Some(0.4 * sigma_min * sigma_min),
        poly_order: 2,
        freeze_m: true,
        freeze_phi: true,
        ..Default::default()
    };
    let init = SamplerInit {
        x: None,
        m: Some(m.clone()),
        phi: Some(phi.clone()),
    };
    let prior = oracle_gaussian_prior(x_star.clone(), tau)?;
    let sample = sample_joint(&y, &plan, &prior, &cfg, &init).map_err(|f| f.error)?.x;

    // dense A, one column per pixel
    let ns = plan.num_samples();
    let mut a = DMatrix::<Complex64>::zeros(coils * ns, h * w);
    for k in 0..h * w {
        let mut e = ComplexGrid::zeros(h, w);
        e.data_mut()[k] = Complex64::new(1.0, 0.0);
        let col = model.forward(&e, &m, &phi)?.predicted;
        for (i, c) in col.coils().iter().enumerate() {
            for (s, v) in c.iter().enumerate() {
                a[(i * ns + s, k)] = *v;
            }
        }
    }
    let (wd, wp) = (1.0 / (sigma_min * sigma_min), 1.0 / (tau * tau + sigma_min * sigma_min));
    let ah = a.adjoint();
    let mut p = &ah * &a * Complex64::new(wd, 0.0);
    for i in 0..h * w {
        p[(i, i)] += Complex64::new(wp, 0.0);
    }
    let yv = DVector::from_iterator(coils * ns, y.coils().iter().flatten().copied());
    let rhs = &ah * yv * Complex64::new(wd, 0.0) + DVector::from_column_slice(x_star.data()) * Complex64::new(wp, 0.0);
    let mean = p.cholesky().ok_or("precision not positive definite")?.solve(&rhs);
    let mean = ComplexGrid::new(h, w, mean.iter().copied().collect())?;

    println!("|sample - mean| / |mean| = {:.2e}", sample.sub(&mean).norm() / mean.norm());
    println!("|x_star - mean| / |mean| = {:.2e}", x_star.sub(&mean).norm() / mean.norm());
    Ok(())
}
