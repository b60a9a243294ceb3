//! Uniform box grids, nodal fields, cell-centered gradients and quadrature.
//!
//! A grid axis with `cells = n` has spacing `h = extent / n`. Periodic axes
//! store `n` nodes (the wrap-around node is identified with node 0);
//! non-periodic axes store `n + 1` nodes including both end points. Nodes
//! and cells are numbered with axis 0 running fastest.
//!
//! Gradients are those of the multilinear (1-D linear, 2-D bilinear)
//! interpolant, evaluated at cell centers.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// One axis of a [`GridSpec`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub extent: f64,
    pub cells: usize,
    pub periodic: bool,
}

/// Uniform box grid on `(0, extent_0) x ... x (0, extent_{N-1})`, `N` in {1, 2}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    axes: Vec<Axis>,
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(invalid(format!(
                "grid dimension must be 1 or 2, got {}",
                axes.len()
            )));
        }
        for (a, axis) in axes.iter().enumerate() {
            if axis.cells == 0 {
                return Err(invalid(format!(
                    "axis {a}: need at least 1 cell, got {}",
                    axis.cells
                )));
            }
            if !(axis.extent.is_finite() && axis.extent > 0.0) {
                return Err(invalid(format!(
                    "axis {a}: extent must be positive, got {}",
                    axis.extent
                )));
            }
        }
        Ok(Self { axes })
    }

    /// Cube `(0, extent)^dim` with `cells` cells per axis.
    pub fn cube(dim: usize, extent: f64, cells: usize, periodic: bool) -> Result<Self> {
        Self::new(vec![
            Axis {
                extent,
                cells,
                periodic
            };
            dim
        ])
    }

    /// The periodic unit cell `Q = (0,1)^dim`.
    pub fn unit_cell(dim: usize, cells: usize) -> Result<Self> {
        Self::cube(dim, 1.0, cells, true)
    }

    /// The macroscopic domain `Omega = (0,1)^dim` (non-periodic).
    pub fn unit_box(dim: usize, cells: usize) -> Result<Self> {
        Self::cube(dim, 1.0, cells, false)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, a: usize) -> &Axis {
        &self.axes[a]
    }

    pub fn spacing(&self, a: usize) -> f64 {
        self.axes[a].extent / self.axes[a].cells as f64
    }

    pub fn is_periodic(&self) -> bool {
        self.axes.iter().all(|a| a.periodic)
    }

    pub fn nodes_per_axis(&self, a: usize) -> usize {
        let axis = &self.axes[a];
        if axis.periodic {
            axis.cells
        } else {
            axis.cells + 1
        }
    }

    pub fn node_count(&self) -> usize {
        (0..self.dim()).map(|a| self.nodes_per_axis(a)).product()
    }

    pub fn cell_count(&self) -> usize {
        self.axes.iter().map(|a| a.cells).product()
    }

    pub fn volume(&self) -> f64 {
        self.axes.iter().map(|a| a.extent).product()
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim())
            .map(|a| self.spacing(a))
            .fold(f64::INFINITY, f64::min)
    }

    /// Multi-index of a node.
    pub fn node_multi(&self, node: usize) -> [usize; 2] {
        let n0 = self.nodes_per_axis(0);
        [node % n0, node / n0]
    }

    pub fn node_index(&self, multi: [usize; 2]) -> usize {
        if self.dim() == 1 {
            multi[0]
        } else {
            multi[0] + self.nodes_per_axis(0) * multi[1]
        }
    }

    /// Coordinates of a node (unused trailing entries are zero).
    pub fn node_point(&self, node: usize) -> [f64; 2] {
        let m = self.node_multi(node);
        let mut p = [0.0; 2];
        for (a, pa) in p.iter_mut().enumerate().take(self.dim()) {
            *pa = m[a] as f64 * self.spacing(a);
        }
        p
    }

    pub fn cell_multi(&self, cell: usize) -> [usize; 2] {
        let c0 = self.axes[0].cells;
        [cell % c0, cell / c0]
    }

    pub fn cell_center(&self, cell: usize) -> [f64; 2] {
        let m = self.cell_multi(cell);
        let mut p = [0.0; 2];
        for (a, pa) in p.iter_mut().enumerate().take(self.dim()) {
            *pa = (m[a] as f64 + 0.5) * self.spacing(a);
        }
        p
    }

    /// True when the node sits on a non-periodic face of the box.
    pub fn is_boundary_node(&self, node: usize) -> bool {
        let m = self.node_multi(node);
        (0..self.dim()).any(|a| {
            let axis = &self.axes[a];
            !axis.periodic && (m[a] == 0 || m[a] == axis.cells)
        })
    }

    /// Cell corners and gradient weights of the multilinear element.
    pub(crate) fn stencil(&self) -> Stencil {
        let dim = self.dim();
        let corners_per_cell = 1 << dim;
        let mut corners = Vec::with_capacity(self.cell_count());
        for cell in 0..self.cell_count() {
            let m = self.cell_multi(cell);
            let mut cs = [0usize; 4];
            for (k, ck) in cs.iter_mut().enumerate().take(corners_per_cell) {
                let mut nm = [0usize; 2];
                for a in 0..dim {
                    let shift = (k >> a) & 1;
                    let mut idx = m[a] + shift;
                    if self.axes[a].periodic && idx == self.axes[a].cells {
                        idx = 0;
                    }
                    nm[a] = idx;
                }
                *ck = self.node_index(nm);
            }
            corners.push(cs);
        }
        let mut coeff = [[0.0; 2]; 4];
        let scale = 1.0 / (corners_per_cell / 2) as f64;
        for (k, ck) in coeff.iter_mut().enumerate().take(corners_per_cell) {
            for (a, cka) in ck.iter_mut().enumerate().take(dim) {
                let sign = if (k >> a) & 1 == 1 { 1.0 } else { -1.0 };
                *cka = sign * scale / self.spacing(a);
            }
        }
        Stencil {
            dim,
            corners_per_cell,
            corners,
            coeff,
        }
    }
}

/// Precomputed element connectivity for cell-centered gradients.
#[derive(Clone, Debug)]
pub(crate) struct Stencil {
    pub dim: usize,
    pub corners_per_cell: usize,
    pub corners: Vec<[usize; 4]>,
    pub coeff: [[f64; 2]; 4],
}

impl Stencil {
    /// Writes the `d x N` gradient of `values` (node-major, `d` components) at `cell`.
    #[inline]
    pub fn cell_gradient(&self, values: &[f64], d: usize, cell: usize, out: &mut [f64]) {
        let n = self.dim;
        out[..d * n].iter_mut().for_each(|v| *v = 0.0);
        let cs = &self.corners[cell];
        for k in 0..self.corners_per_cell {
            let base = cs[k] * d;
            for c in 0..d {
                let u = values[base + c];
                for a in 0..n {
                    out[c * n + a] += self.coeff[k][a] * u;
                }
            }
        }
    }

    /// Adds `D^T flux` for one cell: `flux` is a `d x N` matrix dual to the gradient.
    #[inline]
    pub fn scatter_adjoint(&self, flux: &[f64], d: usize, cell: usize, out: &mut [f64]) {
        let n = self.dim;
        let cs = &self.corners[cell];
        for k in 0..self.corners_per_cell {
            let base = cs[k] * d;
            for c in 0..d {
                let mut acc = 0.0;
                for a in 0..n {
                    acc += self.coeff[k][a] * flux[c * n + a];
                }
                out[base + c] += acc;
            }
        }
    }
}

/// Node-valued field with `components` entries per node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    pub grid: GridSpec,
    pub components: usize,
    pub values: Vec<f64>,
}

impl VectorField {
    pub fn new(grid: GridSpec, components: usize, values: Vec<f64>) -> Result<Self> {
        if components == 0 || components > 2 {
            return Err(invalid(format!(
                "components must be 1 or 2, got {components}"
            )));
        }
        if values.len() != grid.node_count() * components {
            return Err(invalid(format!(
                "expected {} values, got {}",
                grid.node_count() * components,
                values.len()
            )));
        }
        Ok(Self {
            grid,
            components,
            values,
        })
    }

    pub fn zeros(grid: GridSpec, components: usize) -> Self {
        let len = grid.node_count() * components;
        Self {
            grid,
            components,
            values: vec![0.0; len],
        }
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: GridSpec, components: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let dim = grid.dim();
        let mut values = Vec::with_capacity(grid.node_count() * components);
        for node in 0..grid.node_count() {
            let p = grid.node_point(node);
            let v = f(&p[..dim]);
            assert_eq!(
                v.len(),
                components,
                "field evaluator returned wrong component count"
            );
            values.extend_from_slice(&v);
        }
        Self {
            grid,
            components,
            values,
        }
    }

    /// The affine map `x -> F x` with `F` a row-major `components x dim` matrix.
    pub fn affine(grid: GridSpec, f: &[f64]) -> Result<Self> {
        let dim = grid.dim();
        if f.is_empty() || !f.len().is_multiple_of(dim) {
            return Err(invalid(format!(
                "matrix of length {} does not fit dimension {dim}",
                f.len()
            )));
        }
        let d = f.len() / dim;
        Ok(Self::from_fn(grid, d, |x| {
            (0..d)
                .map(|c| (0..dim).map(|a| f[c * dim + a] * x[a]).sum())
                .collect()
        }))
    }

    pub fn node(&self, node: usize) -> &[f64] {
        &self.values[node * self.components..(node + 1) * self.components]
    }

    /// Multilinear interpolation at `point`. Periodic axes wrap, other axes clamp.
    pub fn interpolate(&self, point: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let dim = g.dim();
        let mut lo = [0usize; 2];
        let mut hi = [0usize; 2];
        let mut t = [0.0; 2];
        for a in 0..dim {
            let axis = g.axis(a);
            let h = g.spacing(a);
            let mut s = point[a];
            if axis.periodic {
                s = s.rem_euclid(axis.extent);
            } else {
                s = s.clamp(0.0, axis.extent);
            }
            let mut k = (s / h).floor() as usize;
            if k >= axis.cells {
                k = axis.cells - 1;
            }
            t[a] = s / h - k as f64;
            lo[a] = k;
            hi[a] = if axis.periodic && k + 1 == axis.cells {
                0
            } else {
                k + 1
            };
        }
        let d = self.components;
        let mut out = vec![0.0; d];
        for k in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut nm = [0usize; 2];
            for a in 0..dim {
                if (k >> a) & 1 == 1 {
                    w *= t[a];
                    nm[a] = hi[a];
                } else {
                    w *= 1.0 - t[a];
                    nm[a] = lo[a];
                }
            }
            if w == 0.0 {
                continue;
            }
            let node = g.node_index(nm);
            for (c, o) in out.iter_mut().enumerate() {
                *o += w * self.values[node * d + c];
            }
        }
        out
    }
}

/// Cell-valued `d x N` matrix field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientField {
    pub grid: GridSpec,
    pub components: usize,
    pub values: Vec<f64>,
}

impl GradientField {
    pub fn new(grid: GridSpec, components: usize, values: Vec<f64>) -> Result<Self> {
        let width = components * grid.dim();
        if values.len() != grid.cell_count() * width {
            return Err(invalid(format!(
                "expected {} cell values, got {}",
                grid.cell_count() * width,
                values.len()
            )));
        }
        Ok(Self {
            grid,
            components,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.components * self.grid.dim()
    }

    pub fn cell(&self, cell: usize) -> &[f64] {
        let w = self.width();
        &self.values[cell * w..(cell + 1) * w]
    }

    /// Average gradient over the grid (midpoint quadrature).
    pub fn mean(&self) -> Vec<f64> {
        let w = self.width();
        let mut m = vec![0.0; w];
        for cell in 0..self.grid.cell_count() {
            for (mi, v) in m.iter_mut().zip(self.cell(cell)) {
                *mi += v;
            }
        }
        let n = self.grid.cell_count() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }
}

/// Fractional part `<x / eps>` componentwise, in `[0, 1)`.
///
/// Values of `x / eps` within a relative `1e-12` of an integer snap to 0 so
/// that lattice points of `eps Z^N` map to the cell origin.
pub fn cell_coordinates(x: &[f64], eps: f64) -> Result<Vec<f64>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(invalid(format!("epsilon must be positive, got {eps}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(invalid("point has non-finite coordinates"));
    }
    Ok(x.iter().map(|&v| fractional(v / eps)).collect())
}

#[inline]
pub(crate) fn fractional(t: f64) -> f64 {
    let r = t.round();
    if (t - r).abs() <= 1e-12 * t.abs().max(1.0) {
        return 0.0;
    }
    let f = t - t.floor();
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

/// Cell-centered gradient of `u` (exact for affine fields).
pub fn discrete_gradient(u: &VectorField) -> GradientField {
    let grid = &u.grid;
    let stencil = grid.stencil();
    let d = u.components;
    let width = d * grid.dim();
    let mut values = vec![0.0; grid.cell_count() * width];
    for (cell, out) in values.chunks_mut(width).enumerate() {
        stencil.cell_gradient(&u.values, d, cell, out);
    }
    GradientField {
        grid: grid.clone(),
        components: d,
        values,
    }
}

/// Multilinear interpolation of a periodic field; invariant under `y -> y + e_j`.
pub fn sample_periodic(field: &VectorField, y: &[f64]) -> Result<Vec<f64>> {
    if !field.grid.is_periodic() {
        return Err(invalid("sample_periodic needs a fully periodic grid"));
    }
    if y.len() != field.grid.dim() {
        return Err(invalid(format!(
            "point has {} coordinates, grid has {}",
            y.len(),
            field.grid.dim()
        )));
    }
    Ok(field.interpolate(y))
}

/// Midpoint quadrature `h^N * sum(values)` of one value per cell.
pub fn integrate(values: &[f64], grid: &GridSpec) -> f64 {
    assert_eq!(
        values.len(),
        grid.cell_count(),
        "one value per cell expected"
    );
    values.iter().sum::<f64>() * grid.cell_volume()
}

/// Domain average of one value per cell.
pub fn average(values: &[f64], grid: &GridSpec) -> f64 {
    integrate(values, grid) / grid.volume()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn cell_coordinates_examples() {
        assert_eq!(cell_coordinates(&[0.75], 0.5).unwrap(), vec![0.5]);
        assert_eq!(cell_coordinates(&[0.2], 0.1).unwrap(), vec![0.0]);
        let y = cell_coordinates(&[0.3, 0.7], 0.25).unwrap();
        assert_abs_diff_eq!(y[0], 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(y[1], 0.8, epsilon = 1e-12);
        assert!(cell_coordinates(&[0.3], 0.0).is_err());
        assert!(cell_coordinates(&[0.3], -1.0).is_err());
    }

    #[test]
    fn cell_coordinates_negative_tiny() {
        let y = cell_coordinates(&[-1e-17], 0.5).unwrap();
        assert!((0.0..1.0).contains(&y[0]));
    }

    #[test]
    fn gradient_of_linear_1d() {
        let g = GridSpec::unit_box(1, 8).unwrap();
        let u = VectorField::from_fn(g, 1, |x| vec![2.0 * x[0]]);
        let du = discrete_gradient(&u);
        for c in 0..8 {
            assert_abs_diff_eq!(du.cell(c)[0], 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = GridSpec::unit_box(2, 5).unwrap();
        let u = VectorField::from_fn(g, 2, |_| vec![3.0, -1.0]);
        assert!(discrete_gradient(&u).values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_of_affine_2d_vector() {
        let g = GridSpec::unit_box(2, 6).unwrap();
        let f = [1.0, -2.0, 0.5, 3.0];
        let u = VectorField::affine(g, &f).unwrap();
        let du = discrete_gradient(&u);
        for c in 0..du.grid.cell_count() {
            for (a, b) in du.cell(c).iter().zip(f.iter()) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn gradient_of_sine_is_second_order() {
        // analytic derivative at cell centers
        let mut errs = vec![];
        for n in [64, 128] {
            let g = GridSpec::unit_cell(1, n).unwrap();
            let u = VectorField::from_fn(g.clone(), 1, |x| vec![(2.0 * PI * x[0]).sin()]);
            let du = discrete_gradient(&u);
            let err = (0..n)
                .map(|c| (du.cell(c)[0] - 2.0 * PI * (2.0 * PI * g.cell_center(c)[0]).cos()).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        // 2 pi * (pi h)^2 / 6 at n = 64
        assert!(errs[0] < 2.0 * PI * (PI / 64.0).powi(2) / 6.0 * 1.01);
        assert!((errs[0] / errs[1] - 4.0).abs() < 0.05);
    }

    #[test]
    fn periodic_gradient_has_zero_mean() {
        let g = GridSpec::unit_cell(2, 8).unwrap();
        let u = VectorField::from_fn(g, 1, |y| {
            vec![(2.0 * PI * y[0]).sin() * (4.0 * PI * y[1]).cos() + y[0] * 0.0]
        });
        let m = discrete_gradient(&u).mean();
        assert!(m.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn sample_periodic_examples() {
        let g = GridSpec::unit_cell(1, 4).unwrap();
        let c = VectorField::from_fn(g.clone(), 1, |_| vec![2.5]);
        assert_eq!(sample_periodic(&c, &[0.37]).unwrap(), vec![2.5]);
        let hat = VectorField::new(g, 1, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(
            sample_periodic(&hat, &[0.125]).unwrap()[0],
            0.5,
            epsilon = 1e-15
        );
        assert_eq!(
            sample_periodic(&hat, &[0.0]).unwrap(),
            sample_periodic(&hat, &[1.0]).unwrap()
        );
        let open = VectorField::zeros(GridSpec::unit_box(1, 4).unwrap(), 1);
        assert!(sample_periodic(&open, &[0.5]).is_err());
    }

    #[test]
    fn integrate_examples() {
        let g = GridSpec::unit_cell(1, 16).unwrap();
        let three = vec![3.0; 16];
        assert_abs_diff_eq!(integrate(&three, &g), 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(average(&three, &g), 3.0, epsilon = 1e-14);

        let g = GridSpec::unit_cell(1, 64).unwrap();
        let cos: Vec<f64> = (0..64)
            .map(|c| (2.0 * PI * g.cell_center(c)[0]).cos())
            .collect();
        assert!(integrate(&cos, &g).abs() <= 1e-12);

        let g = GridSpec::unit_box(1, 128).unwrap();
        let sq: Vec<f64> = (0..128).map(|c| g.cell_center(c)[0].powi(2)).collect();
        // midpoint error is h^2 / 12 for y^2
        assert!((integrate(&sq, &g) - 1.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::unit_box(3, 4).is_err());
        assert!(GridSpec::unit_box(1, 0).is_err());
        assert!(GridSpec::cube(1, -1.0, 4, true).is_err());
    }

    #[test]
    fn node_counts() {
        let p = GridSpec::unit_cell(2, 4).unwrap();
        let b = GridSpec::unit_box(2, 4).unwrap();
        assert_eq!(p.node_count(), 16);
        assert_eq!(b.node_count(), 25);
        assert!(b.is_boundary_node(0));
        assert!(!b.is_boundary_node(b.node_index([2, 2])));
        assert!(!p.is_boundary_node(0));
    }

    #[test]
    fn field_json_shape() {
        let g = GridSpec::unit_cell(1, 2).unwrap();
        let u = VectorField::new(g, 1, vec![1.0, 2.0]).unwrap();
        let v: serde_json::Value = serde_json::to_value(&u).unwrap();
        assert!(
            v.get("grid").is_some() && v.get("components").is_some() && v.get("values").is_some()
        );
        let back: VectorField = serde_json::from_value(v).unwrap();
        assert_eq!(back, u);
    }
}
