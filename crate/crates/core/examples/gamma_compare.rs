//! Compares `min F_eps` with the cell formula and with the minimum over
//! candidate two-scale measures, for the laminate with gradients across its layers.

use twoscale::gamma::{gamma_compare, GammaSettings};
use twoscale::integrand::{Integrand, Laminate};

fn main() -> twoscale::Result<()> {
    let f = Integrand::laminate(Laminate::new(vec![1.0, 4.0], 0)?, 2.0)?;
    let settings = GammaSettings::default();
    let eps = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0];
    let report = gamma_compare(&f, &[1.0], 1, &eps, &settings)?;

    println!("cell formula: {:.8}", report.cell_value);
    if let (Some(v), Some(id)) = (report.candidate_min, &report.argmin) {
        println!("candidate minimum: {v:.8} at {id}");
    }
    for row in &report.rows {
        match (row.min_energy, row.gap) {
            (Some(e), Some(g)) => println!(
                "eps={:<8} cells={:<5} min F_eps={e:.8} gap={g:.2e}",
                row.epsilon, row.cells
            ),
            _ => println!("eps={:<8} failed: {:?}", row.epsilon, row.error),
        }
    }
    for note in &report.notes {
        println!("note: {note}");
    }
    report.write_csv(std::io::stdout())?;
    Ok(())
}
