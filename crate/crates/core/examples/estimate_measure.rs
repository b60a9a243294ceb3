//! Two-scale Young measure of `u_eps(x) = F x + eps sin(2 pi x / eps) / (2 pi)`.
//!
//! Its gradient is `F + cos(2 pi x / eps)`, so the measure at `(x, y)` is the
//! Dirac mass at `F + cos(2 pi y)`. Binned, each pair holds the law of the
//! cosine over its y-bin.

use std::f64::consts::PI;

use twoscale::measure::{barycenter, p_moment, Binning, Generator, SequenceSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let f = 0.5;
    let spec = SequenceSpec {
        epsilons: vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0],
        generator: Generator::SineCorrector {
            matrix: vec![f],
            dim: 1,
            cells: 16384,
            amplitude: 1.0,
        },
        tail_fraction: 1.0,
    };
    let nu = spec.estimate(Binning::new(2, 8), 2.0)?;

    let marginal = nu.y_marginal();
    println!(
        "y-marginal: {:?}",
        marginal
            .iter()
            .map(|m| format!("{m:.4}"))
            .collect::<Vec<_>>()
    );
    let bars = barycenter(&nu);
    for (j, bar) in bars.iter().enumerate() {
        let y = nu.y_center(j)[0];
        println!(
            "y={y:.4}: barycenter {:+.4}, F + cos(2 pi y) {:+.4}, atoms {}",
            bar[0],
            f + (2.0 * PI * y).cos(),
            nu.cell(0, j).len()
        );
    }
    println!(
        "p=2 moment {:.6} (exact F^2 + 1/2 = {})",
        p_moment(&nu, 2.0).total,
        f * f + 0.5
    );

    let path = std::env::temp_dir().join("sine_measure.json");
    std::fs::write(&path, serde_json::to_string_pretty(&nu)?)?;
    println!("wrote {}", path.display());
    Ok(())
}
