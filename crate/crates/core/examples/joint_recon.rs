//! Joint image, motion and coil-map sampling on the 64x64 phantom, compared
//! with zero filling. Settings come from `configs/shepp64_joint.toml`.
//!
//! `cargo run --release --example joint_recon [steps]`

use std::path::Path;

use jointmoco::config::{load_config, ReconConfig, SimConfig};
use jointmoco::metrics::{csm_nrmse, motion_error, psnr, ssim};
use jointmoco::pipeline::simulate_world;
use jointmoco::sampler::{sample_joint_observed, SamplerInit};
use jointmoco::sim::zero_fill_recon;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let sim: SimConfig = load_config(&configs.join("shepp64.json"))?;
    let mut recon: ReconConfig = load_config(&configs.join("shepp64_joint.toml"))?;
    if let Some(steps) = std::env::args().nth(1) {
        recon.sampler.steps = steps.parse()?;
    }
    let world = simulate_world(&sim)?;
    let (h, w) = (sim.height, sim.width);

    let prior = recon.prior.build(None, &std::env::temp_dir())?;
    println!("prior {}, {} updates", prior.name(), recon.sampler.total_updates());
    let every = (recon.sampler.steps / 6).max(1);
    let out = sample_joint_observed(
        &world.y,
        &world.plan,
        prior.as_ref(),
        &recon.sampler,
        &SamplerInit::default(),
        &mut |row| {
            if row.t % every == 0 || row.t == 1 {
                println!(
                    "t {:>4}  sigma {:.2e}  residual {:.3e}  theta_1 {:+.3} deg",
                    row.t,
                    row.sigma,
                    row.residual,
                    row.rotations[1].to_degrees()
                );
            }
        },
    )
    .map_err(|f| f.error)?;

    let zf = zero_fill_recon(&world.y, &world.plan)?;
    let (dt, dp) = motion_error(&out.m, &world.m_true)?;
    println!("zero-fill PSNR {:.2} dB, SSIM {:.4}", psnr(&world.x_true, &zf)?, ssim(&world.x_true, &zf)?);
    println!("joint     PSNR {:.2} dB, SSIM {:.4}", psnr(&world.x_true, &out.x)?, ssim(&world.x_true, &out.x)?);
    println!("motion rmse {dt:.3} deg, {dp:.3} px");
    println!("coil map nrmse {:.3}", csm_nrmse(&out.phi, &world.phi_true, h, w)?);
    Ok(())
}
