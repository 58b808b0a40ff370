//! Image and parameter error metrics on a few degraded phantoms.

use jointmoco::fft::{fft2_centered, ifft2_centered};
use jointmoco::geometry::MotionParams;
use jointmoco::metrics::{motion_error, nrmse, psnr, ssim};
use jointmoco::prior::gaussian_blur;
use jointmoco::sim::shepp_logan;
use jointmoco::{ComplexGrid, RngSeed};
use num_complex::Complex64;

fn main() -> Result<(), jointmoco::Error> {
    let x = shepp_logan(128, 128, 1.0)?;

    let mut noisy = x.clone();
    noisy.axpy(Complex64::new(0.05, 0.0), &ComplexGrid::random_normal(128, 128, 1.0, &mut RngSeed(1).rng(0)));
    let blurred = gaussian_blur(&x, 1.5);
    // keep only the central 32 rows of k-space
    let mut k = fft2_centered(&x);
    for r in (0..48).chain(80..128) {
        for c in 0..128 {
            k[(r, c)] = Complex64::new(0.0, 0.0);
        }
    }
    let truncated = ifft2_centered(&k);

    println!("{:<10} {:>8} {:>7} {:>7}", "case", "PSNR dB", "SSIM", "NRMSE");
    for (name, y) in [("noisy", &noisy), ("blurred", &blurred), ("truncated", &truncated)] {
        println!("{name:<10} {:>8.2} {:>7.4} {:>7.4}", psnr(&x, y)?, ssim(&x, y)?, nrmse(&x, y)?);
    }

    // motion errors ignore a pose shared by all shots
    let truth = MotionParams::new(vec![0.0, 0.02, -0.01], vec![[0.0, 0.0], [1.0, -0.5], [0.3, 0.2]])?;
    let shifted = truth.compose_global(0.1, [2.0, -1.0]);
    let (dt, dp) = motion_error(&shifted, &truth)?;
    println!("globally moved estimate: {dt:.2e} deg, {dp:.2e} px");
    Ok(())
}
