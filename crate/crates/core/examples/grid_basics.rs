//! Grids, nodal fields, cell-centered gradients and the fast variable `<x/eps>`.

use twoscale::grid::{cell_coordinates, discrete_gradient, GridSpec, VectorField};

fn main() -> twoscale::Result<()> {
    let grid = GridSpec::unit_box(2, 4)?;
    println!(
        "unit box: {} nodes, {} cells, h = {}",
        grid.node_count(),
        grid.cell_count(),
        grid.spacing(0)
    );

    // gradients of affine fields are exact
    let u = VectorField::affine(grid.clone(), &[1.0, -2.0, 0.5, 3.0])?;
    let g = discrete_gradient(&u);
    println!(
        "grad of affine field, cell 0: {:?}, mean {:?}",
        g.cell(0),
        g.mean()
    );

    let wave = VectorField::from_fn(grid, 1, |x| vec![(x[0] * x[1]).sin()]);
    println!(
        "interpolated at (0.3, 0.6): {:.6}",
        wave.interpolate(&[0.3, 0.6])[0]
    );

    let cell = GridSpec::unit_cell(1, 8)?;
    println!(
        "periodic unit cell: {} nodes for {} cells",
        cell.node_count(),
        cell.cell_count()
    );

    for x in [0.0, 0.1, 0.26, 0.99] {
        println!("<{x} / 0.25> = {:?}", cell_coordinates(&[x], 0.25)?);
    }
    Ok(())
}
