//! Measure-level constructions: boundary gluing, tiling, averaging in x and
//! piecewise combinations.

use twoscale::grid::{discrete_gradient, GridSpec, VectorField};
use twoscale::measure::{
    average_measure, glue_boundary, nearest_tiling_epsilon, piecewise_in_x, sine_corrector_field,
    tile_rescale, Atom, DiscreteMeasure, TwoScaleYoungMeasure,
};

fn main() -> twoscale::Result<()> {
    // gluing: keep u_n inside, switch to the affine u near the boundary
    let grid = GridSpec::unit_box(1, 256)?;
    let u = VectorField::affine(grid, &[0.5])?;
    let u_n = sine_corrector_field(&[0.5], 1, 256, 1.0 / 8.0, 1.0)?;
    for k in [4, 8, 16] {
        let glued = glue_boundary(&u_n, &u, k)?;
        let v = &glued.field;
        let last = v.values.len() - 1;
        let gmax = discrete_gradient(v)
            .values
            .iter()
            .fold(0.0f64, |m, g| m.max(g.abs()));
        println!(
            "k={k:>2}: boundary values {:.3} / {:.3}, max |grad| {gmax:.3}, C = {:.1}",
            v.values[0], v.values[last], glued.cutoff_constant
        );
    }

    // tiling: rescaled copies of a generating field at eps = 1/m^2
    let eps = nearest_tiling_epsilon(0.03);
    let tiled = tile_rescale(&[0.5], &[eps], 256, |m| {
        sine_corrector_field(&[0.5], 1, 256, 1.0 / m as f64, 1.0)
    })?;
    let (e, v) = &tiled[0];
    println!(
        "tiling at eps = {e} ({} nodes), v(1) = {:.6}",
        v.values.len(),
        v.values[v.values.len() - 1]
    );

    // averaging a piecewise measure gives the convex combination
    let mu =
        TwoScaleYoungMeasure::homogeneous(1, 1, 4, 2.0, |y| DiscreteMeasure::dirac(vec![y[0]]))?;
    let nu = TwoScaleYoungMeasure::homogeneous(1, 1, 4, 2.0, |_| {
        DiscreteMeasure::new(vec![
            Atom {
                xi: vec![-1.0],
                w: 0.5,
            },
            Atom {
                xi: vec![1.0],
                w: 0.5,
            },
        ])
        .unwrap()
    })?;
    let piecewise = piecewise_in_x(&mu, &nu, 0.25, 4)?;
    let avg = average_measure(&piecewise)?;
    let direct = mu.convex_combination(&nu, 0.25)?;
    println!(
        "average of piecewise (t = 1/4) equals the convex combination: {}",
        avg == direct
    );
    for a in avg.cell(0, 0).atoms() {
        println!("  y-bin 0 atom {:+.3} weight {:.3}", a.xi[0], a.w);
    }
    Ok(())
}
