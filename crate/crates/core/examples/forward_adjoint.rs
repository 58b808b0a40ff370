//! Apply the multi-shot forward operator and its adjoint, then check the
//! dot-product identity <Ax, y> = <x, A^H y>.

use jointmoco::forward::{ForwardModel, ForwardOptions};
use jointmoco::geometry::{make_plan, PlanSpec, SamplingScheme, ShotOrdering};
use jointmoco::sim::{draw_motion, shepp_logan, synth_csm};
use jointmoco::{ComplexGrid, Measurements, RngSeed};

fn main() -> Result<(), jointmoco::Error> {
    let (h, w, coils, shots) = (48, 48, 4, 3);
    let plan = make_plan(PlanSpec {
        height: h,
        width: w,
        accel: 2.0,
        acs_lines: 8,
        scheme: SamplingScheme::Random,
        num_shots: shots,
        ordering: ShotOrdering::Interleaved,
        seed: RngSeed(2),
    })?;
    let x = shepp_logan(h, w, 1.0)?;
    let (_, phi) = synth_csm(coils, h, w, 3, RngSeed(2))?;
    let m = draw_motion(shots, 3.0, 3.0, RngSeed(3))?;
    let model = ForwardModel::new(&plan, ForwardOptions::default());

    let ax = model.forward(&x, &m, &phi)?.predicted;
    println!("forward: {} coils x {} samples, |Ax| = {:.4}", ax.num_coils(), ax.num_samples(), ax.norm_sqr().sqrt());

    let mut rng = RngSeed(4).rng(0);
    let y = Measurements::new(
        (0..coils)
            .map(|_| ComplexGrid::random_normal(1, plan.num_samples(), 1.0, &mut rng).into_data())
            .collect(),
    )?;
    let ahy = model.adjoint_x(&y, &m, &phi)?;
    let lhs = y.inner(&ax);
    let rhs = ahy.inner(&x);
    println!("<Ax, y>    = {lhs:.10}");
    println!("<x, A^H y> = {rhs:.10}");
    println!(
        "relative mismatch {:.2e}",
        (lhs - rhs).norm() / (ax.norm_sqr().sqrt() * y.norm_sqr().sqrt())
    );
    Ok(())
}
