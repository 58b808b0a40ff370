//! Simulate a motion-corrupted 4-coil acquisition and write it as a run
//! directory (`cargo run --example simulate -- /tmp/run`).

use std::path::PathBuf;

use jointmoco::config::SimConfig;
use jointmoco::pipeline;
use jointmoco::sim::MOTION_PRESETS;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("jointmoco_simulate"));
    let (k_theta, k_t) = MOTION_PRESETS[0];
    let cfg: SimConfig = jointmoco::config::parse_json(&format!(
        r#"{{"height": 64, "width": 64, "coils": 4, "shots": 4, "accel": 2,
            "k_theta": {k_theta}, "k_t": {k_t}, "seed": 1, "csm_order": 3, "poly_order": 3}}"#
    ))?;
    let w = pipeline::simulate(&cfg, &out, true)?;

    println!("run written to {}", out.display());
    println!(
        "{} of {} k-space samples per coil (R = {:.2})",
        w.plan.num_samples(),
        cfg.height * cfg.width,
        w.plan.effective_accel()
    );
    for s in 0..w.m_true.num_shots() {
        let t = w.m_true.translation(s);
        println!(
            "shot {s}: {:>3} lines, theta {:+.3} deg, t = ({:+.3}, {:+.3}) px",
            w.plan.shot_samples()[s].len() / cfg.width,
            w.m_true.rotation(s).to_degrees(),
            t[0],
            t[1]
        );
    }
    Ok(())
}
