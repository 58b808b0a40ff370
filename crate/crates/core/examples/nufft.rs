//! Kaiser-Bessel gridding against the direct Fourier sum on rotated
//! k-space lattices, and the exact on-grid fast path.

use jointmoco::geometry::{cartesian_coords, rotate_coords};
use jointmoco::nufft::{dft_direct, rel_l2, NufftOperator, NufftOptions};
use jointmoco::sim::shepp_logan;

fn main() -> Result<(), jointmoco::Error> {
    let (h, w) = (32, 32);
    let x = shepp_logan(h, w, 1.0)?;
    let base = cartesian_coords(h, w)?;
    let opts = NufftOptions::default();
    println!("kernel width {}, oversampling {}, beta {:.3}", opts.kernel_width, opts.oversampling, opts.kaiser_beta());

    for deg in [0.0f64, 0.5, 3.0, 17.0, 45.0] {
        let coords = rotate_coords(&base, deg.to_radians())?;
        let op = NufftOperator::new(h, w, &coords, &opts)?;
        let err = rel_l2(&op.forward(&x)?, &dft_direct(&x, &coords));
        println!(
            "rotation {deg:>5.1} deg: {} path, rel-L2 vs direct sum {err:.2e}",
            if op.is_cartesian() { "cartesian" } else { "gridded" }
        );
    }
    Ok(())
}
