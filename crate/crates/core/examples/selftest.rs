//! Run the built-in numerical checks, then again with a deliberately
//! broken adjoint to show the failure being caught.

use jointmoco::selftest::{run_selftest, Fault, SelftestOptions};
use jointmoco::RngSeed;

fn main() -> Result<(), jointmoco::Error> {
    let report = run_selftest(&SelftestOptions {
        seed: RngSeed(0),
        fault: None,
    })?;
    print!("{}", report.render());
    println!("all passed: {}\n", report.passed());

    let broken = run_selftest(&SelftestOptions {
        seed: RngSeed(0),
        fault: Some(Fault::PerturbedAdjoint),
    })?;
    print!("{}", broken.render());
    println!("all passed: {}", broken.passed());
    Ok(())
}
