//! Fit the polynomial coil model to smooth synthetic maps at several
//! orders and bases, and show the gauge normalization.

use jointmoco::csm::{coefficient_count, eval_csm, fit_csm, mean_rss_energy, normalize_csm_gauge, BasisKind};
use jointmoco::metrics::csm_maps_nrmse;
use jointmoco::sim::synth_csm;
use jointmoco::RngSeed;

fn main() -> Result<(), jointmoco::Error> {
    let (h, w, coils) = (64, 64, 4);
    let (maps, _) = synth_csm(coils, h, w, 5, RngSeed(7))?;

    println!("order  unknowns  basis      fit rms     map nrmse");
    for order in [1, 2, 3, 5] {
        for kind in [BasisKind::Monomial, BasisKind::Legendre] {
            let fit = fit_csm(&maps, order, kind, None)?;
            let err = csm_maps_nrmse(&eval_csm(&fit.coeffs, h, w), &maps)?;
            println!(
                "{order:>5}  {:>8}  {:<9}  {:.3e}   {err:.3e}",
                coefficient_count(coils, order),
                format!("{kind:?}"),
                fit.residual_rms,
            );
        }
    }

    let fit = fit_csm(&maps, 5, BasisKind::Legendre, None)?;
    let scaled = fit.coeffs.scaled(3.0);
    let (normalized, s) = normalize_csm_gauge(&scaled, h, w)?;
    println!(
        "mean RSS energy {:.3} -> {:.3} after scaling by {s:.4}",
        mean_rss_energy(&eval_csm(&scaled, h, w)),
        mean_rss_energy(&eval_csm(&normalized, h, w))
    );
    Ok(())
}
