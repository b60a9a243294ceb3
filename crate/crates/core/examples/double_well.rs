//! Nonconvex double well `(|xi|^2 - 1)^2`: minimizers of `F_eps` at `F = 0`
//! oscillate between the wells, so the Young measure is `(delta_-1 + delta_1) / 2`.

use twoscale::integrand::Integrand;
use twoscale::measure::{estimate_from_sequence, Binning};
use twoscale::optimize::OptimizerConfig;
use twoscale::solver::{estimate_fhom, minimize_epsilon_functional, DEFAULT_PLATEAU_TOLERANCE};

fn main() -> twoscale::Result<()> {
    let f = Integrand::double_well();
    let opt = OptimizerConfig::default().with_restarts(8).with_seed(11);

    let cell = estimate_fhom(
        &f,
        &[0.0],
        1,
        &[1, 2, 4],
        &[64],
        &opt,
        DEFAULT_PLATEAU_TOLERANCE,
    )?;
    for (t, v) in cell.values() {
        println!("cell period T={t}: {v:.3e}");
    }

    let eps = 1.0 / 16.0;
    let r = minimize_epsilon_functional(&f, eps, &[0.0], 1, 256, &opt)?;
    println!(
        "min F_eps at eps={eps}: {:.3e} (affine data gives {:.3})",
        r.energy, r.null_energy
    );

    let nu = estimate_from_sequence(&[(eps, r.minimizer)], Binning::new(4, 8), 1.0, 4.0)?;
    let pooled = nu.pooled()?;
    let mut atoms: Vec<_> = pooled.atoms().to_vec();
    atoms.sort_by(|a, b| b.w.total_cmp(&a.w));
    for a in atoms.iter().take(4) {
        println!("atom {:+.4} weight {:.4}", a.xi[0], a.w);
    }
    Ok(())
}
