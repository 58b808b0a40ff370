//! Drive the sampler with a score computed by another program. The helper
//! here is a short Python script (needs python3 and numpy) implementing the
//! score of a blur-based denoiser; any executable reading and writing the
//! array file pair works. The smoother is a weak prior, so expect roughly
//! zero-fill quality; the point is the wiring.

use std::path::PathBuf;

use jointmoco::csm::PolyCoeffs;
use jointmoco::geometry::{make_plan, MotionParams, PlanSpec, SamplingScheme, ShotOrdering};
use jointmoco::metrics::psnr;
use jointmoco::prior::ExternalPrior;
use jointmoco::sampler::{sample_joint, SamplerConfig, SamplerInit};
use jointmoco::sim::{shepp_logan, simulate_acquisition, zero_fill_recon};
use jointmoco::RngSeed;
use num_complex::Complex64;

const SCRIPT: &str = r#"
import json, sys
import numpy as np
inp, out, sigma = sys.argv[1], sys.argv[2], float(sys.argv[3])
hdr = json.load(open(inp + ".hdr.json"))
h, w = hdr["shape"]
v = np.fromfile(inp + ".bin", dtype="<f8").reshape(h, w, 2)
x = v[..., 0] + 1j * v[..., 1]
# five-point smoothing as a crude denoiser D; score = (D(x) - x) / (sigma^2 + 1e-4)
d = (4 * x + np.roll(x, 1, 0) + np.roll(x, -1, 0) + np.roll(x, 1, 1) + np.roll(x, -1, 1)) / 8
s = (d - x) / (sigma * sigma + 1e-4)
np.stack([s.real, s.imag], axis=-1).astype("<f8").tofile(out + ".bin")
json.dump(hdr, open(out + ".hdr.json", "w"))
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir: PathBuf = std::env::temp_dir().join("jointmoco_external_prior");
    std::fs::create_dir_all(&dir)?;
    let script = dir.join("score.py");
    std::fs::write(&script, SCRIPT)?;

    let (h, w) = (32, 32);
    let x = shepp_logan(h, w, 0.0)?;
    let phi = PolyCoeffs::constant(0, &[Complex64::new(1.0, 0.0)]);
    let m = MotionParams::identity(1);
    let plan = make_plan(PlanSpec {
        height: h,
        width: w,
        accel: 2.5,
        acs_lines: 6,
        scheme: SamplingScheme::Random,
        num_shots: 1,
        ordering: ShotOrdering::Sequential,
        seed: RngSeed(1),
    })?;
    let y = simulate_acquisition(&x, &phi, &m, &plan, 0.01, RngSeed(2))?;

    let prior = ExternalPrior::new(
        ["python3", script.to_str().unwrap(), "{input}", "{output}", "{sigma}"]
            .map(String::from)
            .to_vec(),
        &dir.join("work"),
    )?;
    let cfg = SamplerConfig {
        steps: 30,
        inner_loops: 2,
        sigma_min: 0.01,
        sigma_max: 0.1,
        eps_x: Some(1e-4),
        noise_sigma: 0.01,
        poly_order: 0,
        freeze_m: true,
        freeze_phi: true,
        // report the annealed mode rather than one noisy draw
        langevin_noise: false,
        ..Default::default()
    };
    let init = SamplerInit {
        x: None,
        m: Some(m),
        phi: Some(phi),
    };
    let out = sample_joint(&y, &plan, &prior, &cfg, &init).map_err(|f| f.error)?;
    println!("zero-fill PSNR {:.2} dB", psnr(&x, &zero_fill_recon(&y, &plan)?)?);
    println!("sampled   PSNR {:.2} dB with {}", psnr(&x, &out.x)?, jointmoco::prior::ScorePrior::name(&prior));
    Ok(())
}
