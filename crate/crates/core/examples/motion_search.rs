//! Brute-force per-shot pose search with the true image and coil maps: a
//! floor for how well motion can be resolved from the data.

use std::time::Instant;

use jointmoco::forward::{ForwardModel, ForwardOptions};
use jointmoco::geometry::{make_plan, PlanSpec, SamplingScheme, ShotOrdering};
use jointmoco::metrics::motion_error;
use jointmoco::sim::{draw_motion, shepp_logan, simulate_acquisition, synth_csm};
use jointmoco::RngSeed;

fn main() -> Result<(), jointmoco::Error> {
    let (h, w, coils, shots) = (48, 48, 4, 3);
    let x = shepp_logan(h, w, 1.0)?;
    let (_, phi) = synth_csm(coils, h, w, 3, RngSeed(0))?;
    let m = draw_motion(shots, 2.0, 2.0, RngSeed(5))?;
    let plan = make_plan(PlanSpec {
        height: h,
        width: w,
        accel: 2.0,
        acs_lines: 8,
        scheme: SamplingScheme::Random,
        num_shots: shots,
        ordering: ShotOrdering::Sequential,
        seed: RngSeed(6),
    })?;
    let y = simulate_acquisition(&x, &phi, &m, &plan, 0.0, RngSeed(7))?;
    let model = ForwardModel::new(&plan, ForwardOptions::default());

    let start = Instant::now();
    let mut est = m.clone();
    for s in 1..shots {
        let (theta, t) = model.grid_search_shot(
            &y,
            &x,
            &phi,
            s,
            (0.0, [0.0, 0.0]),
            (2.5f64.to_radians(), 2.5),
            (0.05f64.to_radians(), 0.05),
        )?;
        println!(
            "shot {s}: found ({:+.3} deg, {:+.3}, {:+.3}) true ({:+.3} deg, {:+.3}, {:+.3})",
            theta.to_degrees(),
            t[0],
            t[1],
            m.rotation(s).to_degrees(),
            m.translation(s)[0],
            m.translation(s)[1]
        );
        est.set_shot(s, theta, t);
    }
    let (dt, dp) = motion_error(&est, &m)?;
    println!("rmse {dt:.4} deg, {dp:.4} px in {:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}
