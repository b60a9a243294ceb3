//! Binned two-scale gradient Young measures.
//!
//! A [`TwoScaleYoungMeasure`] splits `Omega = (0,1)^N` into `I^N` uniform
//! x-bins and the unit cell `Q` into `J^N` uniform y-bins. Each pair
//! `(i, j)` carries a finitely supported probability on `R^{d x N}`. The
//! product `nu_(x,y) (x) dy` is implicit in the uniform y-partition; the
//! per-bin sample `mass` keeps the y-marginal observable for empirical
//! estimates.
//!
//! Besides estimation from generating sequences the module provides the
//! analytic single- and double-scale examples, the periodic-cell measure
//! generated by `F x + eps phi(x / eps)`, the x-average of a measure, the
//! boundary cut-off gluing of a sequence and the tiling construction
//! behind the average.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::frobenius;
use crate::grid::{discrete_gradient, fractional, GridSpec, VectorField};
use crate::integrand::{Integrand, IntegrandSpec};
use crate::optimize::OptimizerConfig;
use crate::solver::{minimize_epsilon_functional, solve_cell_problem};

/// Default relative atom merge radius: atoms closer than `r (1 + |xi|)` merge.
pub const DEFAULT_MERGE_RADIUS: f64 = 1e-3;

/// Tolerance on per-bin weight sums.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub xi: Vec<f64>,
    pub w: f64,
}

/// Finitely supported probability measure on `R^{d x N}`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct DiscreteMeasure {
    atoms: Vec<Atom>,
}

fn lex(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Greedy mass-weighted clustering, repeated until no two clusters merge.
fn merge_atoms(mut atoms: Vec<Atom>, radius: f64) -> Vec<Atom> {
    atoms.retain(|a| a.w > 0.0);
    atoms.sort_by(|a, b| lex(&a.xi, &b.xi));
    for _ in 0..16 {
        let before = atoms.len();
        // (weight, weighted sum, centroid); identical atoms keep their exact position
        let mut merged: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::with_capacity(atoms.len());
        for atom in atoms {
            let rad = radius * (1.0 + frobenius(&atom.xi));
            let mut hit = None;
            for (k, (_, _, centroid)) in merged.iter().enumerate().rev() {
                if atom.xi[0] - centroid[0] > 2.0 * rad {
                    break;
                }
                if dist(&atom.xi, centroid) <= rad {
                    hit = Some(k);
                    break;
                }
            }
            match hit {
                Some(k) => {
                    let (w, sum, centroid) = &mut merged[k];
                    *w += atom.w;
                    for (s, v) in sum.iter_mut().zip(&atom.xi) {
                        *s += atom.w * v;
                    }
                    if *centroid != atom.xi {
                        for (c, s) in centroid.iter_mut().zip(sum.iter()) {
                            *c = s / *w;
                        }
                    }
                }
                None => {
                    let sum = atom.xi.iter().map(|v| v * atom.w).collect();
                    merged.push((atom.w, sum, atom.xi));
                }
            }
        }
        atoms = merged
            .into_iter()
            .map(|(w, _, xi)| Atom { xi, w })
            .collect();
        atoms.sort_by(|a, b| lex(&a.xi, &b.xi));
        if atoms.len() == before {
            break;
        }
    }
    atoms
}

impl DiscreteMeasure {
    /// Validated probability from atoms (weights must sum to one).
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(invalid("a probability needs at least one atom"));
        }
        let m = atoms[0].xi.len();
        if atoms
            .iter()
            .any(|a| a.xi.len() != m || a.xi.iter().any(|v| !v.is_finite()))
        {
            return Err(invalid("atoms must be finite and of equal dimension"));
        }
        if atoms.iter().any(|a| !(a.w > 0.0 && a.w.is_finite())) {
            return Err(invalid("atom weights must be positive"));
        }
        let total: f64 = atoms.iter().map(|a| a.w).sum();
        if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(invalid(format!("atom weights sum to {total}, not 1")));
        }
        Ok(Self { atoms })
    }

    pub fn dirac(xi: Vec<f64>) -> Self {
        Self {
            atoms: vec![Atom { xi, w: 1.0 }],
        }
    }

    /// Normalizes nonnegative weights to a probability and merges close atoms.
    pub fn from_weighted(atoms: Vec<Atom>, merge_radius: f64) -> Result<Self> {
        let total: f64 = atoms.iter().map(|a| a.w).sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(invalid("total weight must be positive"));
        }
        let scaled = atoms
            .into_iter()
            .map(|a| Atom {
                w: a.w / total,
                xi: a.xi,
            })
            .collect();
        let mut out = Self {
            atoms: merge_atoms(scaled, merge_radius),
        };
        out.renormalize();
        Self::new(out.atoms)
    }

    /// Mixture `sum_k t_k mu_k` (weights `t_k` must sum to one), merged.
    pub fn mixture(parts: &[(f64, &DiscreteMeasure)], merge_radius: f64) -> Result<Self> {
        let atoms = parts
            .iter()
            .flat_map(|(t, mu)| {
                mu.atoms.iter().map(move |a| Atom {
                    xi: a.xi.clone(),
                    w: t * a.w,
                })
            })
            .collect();
        Self::from_weighted(atoms, merge_radius)
    }

    fn renormalize(&mut self) {
        let total: f64 = self.atoms.iter().map(|a| a.w).sum();
        if (total - 1.0).abs() > 0.0 {
            self.atoms.iter_mut().for_each(|a| a.w /= total);
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.atoms.first().map_or(0, |a| a.xi.len())
    }

    /// `int phi dmu`.
    pub fn integrate(&self, phi: impl Fn(&[f64]) -> f64) -> f64 {
        self.atoms.iter().map(|a| a.w * phi(&a.xi)).sum()
    }

    pub fn barycenter(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.dimension()];
        for a in &self.atoms {
            for (bk, v) in b.iter_mut().zip(&a.xi) {
                *bk += a.w * v;
            }
        }
        b
    }

    /// `int |xi|^p dmu`.
    pub fn p_moment(&self, p: f64) -> f64 {
        self.integrate(|xi| frobenius(xi).powf(p))
    }

    /// Weighted spread `(int |xi - b|^2 dmu)^{1/2}` about the barycenter.
    pub fn spread(&self) -> f64 {
        let b = self.barycenter();
        self.integrate(|xi| dist(xi, &b).powi(2)).sqrt()
    }

    pub fn map(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        Self {
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    xi: f(&a.xi),
                    w: a.w,
                })
                .collect(),
        }
    }

    /// Wasserstein-1 distance; exact in one dimension, greedy matching otherwise.
    pub fn transport_distance(&self, other: &DiscreteMeasure) -> Result<f64> {
        if self.dimension() != other.dimension() {
            return Err(invalid("measures live in different dimensions"));
        }
        if self.dimension() == 1 {
            return Ok(w1_sorted(&self.atoms, &other.atoms));
        }
        let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(self.len() * other.len());
        for (i, a) in self.atoms.iter().enumerate() {
            for (j, b) in other.atoms.iter().enumerate() {
                pairs.push((dist(&a.xi, &b.xi), i, j));
            }
        }
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        let mut ra: Vec<f64> = self.atoms.iter().map(|a| a.w).collect();
        let mut rb: Vec<f64> = other.atoms.iter().map(|a| a.w).collect();
        let mut cost = 0.0;
        for (d, i, j) in pairs {
            let m = ra[i].min(rb[j]);
            if m > 0.0 {
                cost += m * d;
                ra[i] -= m;
                rb[j] -= m;
            }
        }
        Ok(cost)
    }
}

fn w1_sorted(a: &[Atom], b: &[Atom]) -> f64 {
    let mut ev: Vec<(f64, f64)> = a
        .iter()
        .map(|x| (x.xi[0], x.w))
        .chain(b.iter().map(|x| (x.xi[0], -x.w)))
        .collect();
    ev.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut cdf = 0.0;
    let mut cost = 0.0;
    for k in 0..ev.len() {
        cdf += ev[k].1;
        if k + 1 < ev.len() {
            cost += cdf.abs() * (ev[k + 1].0 - ev[k].0);
        }
    }
    cost
}

/// Bin counts per axis and the relative atom merge radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Binning {
    pub x_bins: usize,
    pub y_bins: usize,
    pub merge_radius: f64,
}

impl Default for Binning {
    fn default() -> Self {
        Self {
            x_bins: 4,
            y_bins: 16,
            merge_radius: DEFAULT_MERGE_RADIUS,
        }
    }
}

impl Binning {
    pub fn new(x_bins: usize, y_bins: usize) -> Self {
        Self {
            x_bins,
            y_bins,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.x_bins == 0 || self.y_bins == 0 {
            return Err(invalid("bin counts must be positive"));
        }
        if !(self.merge_radius >= 0.0 && self.merge_radius.is_finite()) {
            return Err(invalid("merge radius must be nonnegative"));
        }
        Ok(())
    }
}

/// Two-scale Young measure on uniform `(x-bin, y-bin)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRecord", into = "MeasureRecord")]
pub struct TwoScaleYoungMeasure {
    dim: usize,
    components: usize,
    x_bins: usize,
    y_bins: usize,
    p: f64,
    merge_radius: f64,
    cells: Vec<DiscreteMeasure>,
    mass: Vec<f64>,
}

fn bin_center(flat: usize, bins: usize, dim: usize) -> [f64; 2] {
    let mut c = [0.0; 2];
    let m = [flat % bins, flat / bins];
    for a in 0..dim {
        c[a] = (m[a] as f64 + 0.5) / bins as f64;
    }
    c
}

fn bin_of(point: &[f64], bins: usize) -> usize {
    let mut flat = 0;
    let mut stride = 1;
    for v in point {
        let k = ((v * bins as f64).floor() as isize).clamp(0, bins as isize - 1) as usize;
        flat += k * stride;
        stride *= bins;
    }
    flat
}

impl TwoScaleYoungMeasure {
    /// Builds a measure from per-pair probabilities, ordered `i * J^N + j`.
    /// `mass` defaults to uniform when `None`.
    pub fn new(
        dim: usize,
        components: usize,
        binning: Binning,
        p: f64,
        cells: Vec<DiscreteMeasure>,
        mass: Option<Vec<f64>>,
    ) -> Result<Self> {
        binning.validate()?;
        if !(1..=2).contains(&dim) || !(1..=2).contains(&components) {
            return Err(invalid("dim and components must be 1 or 2"));
        }
        if !(p > 1.0 && p.is_finite()) {
            return Err(invalid("moment exponent must be > 1"));
        }
        let ix = binning.x_bins.pow(dim as u32);
        let jy = binning.y_bins.pow(dim as u32);
        if cells.len() != ix * jy {
            return Err(invalid(format!(
                "expected {} bin measures, got {}",
                ix * jy,
                cells.len()
            )));
        }
        for (k, c) in cells.iter().enumerate() {
            if c.is_empty() {
                return Err(invalid(format!("bin {k} has no atoms")));
            }
            if c.dimension() != dim * components {
                return Err(invalid(format!(
                    "bin {k}: atoms have dimension {}",
                    c.dimension()
                )));
            }
            let total: f64 = c.atoms.iter().map(|a| a.w).sum();
            if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
                return Err(invalid(format!("bin {k}: weights sum to {total}")));
            }
        }
        let mass = match mass {
            Some(m) => {
                if m.len() != cells.len() || m.iter().any(|v| !(*v >= 0.0)) {
                    return Err(invalid("mass must hold one nonnegative value per bin"));
                }
                m
            }
            None => vec![1.0 / cells.len() as f64; cells.len()],
        };
        Ok(Self {
            dim,
            components,
            x_bins: binning.x_bins,
            y_bins: binning.y_bins,
            p,
            merge_radius: binning.merge_radius,
            cells,
            mass,
        })
    }

    /// Measure whose pair `(i, j)` is `f(x_i, y_j)` at bin centers.
    pub fn from_fn(
        dim: usize,
        components: usize,
        binning: Binning,
        p: f64,
        mut f: impl FnMut(&[f64], &[f64]) -> DiscreteMeasure,
    ) -> Result<Self> {
        let ix = binning.x_bins.pow(dim as u32);
        let jy = binning.y_bins.pow(dim as u32);
        let mut cells = Vec::with_capacity(ix * jy);
        for i in 0..ix {
            let x = bin_center(i, binning.x_bins, dim);
            for j in 0..jy {
                let y = bin_center(j, binning.y_bins, dim);
                cells.push(f(&x[..dim], &y[..dim]));
            }
        }
        Self::new(dim, components, binning, p, cells, None)
    }

    /// x-independent measure `mu_y (x) dy` with a single x-bin.
    pub fn homogeneous(
        dim: usize,
        components: usize,
        y_bins: usize,
        p: f64,
        f: impl Fn(&[f64]) -> DiscreteMeasure,
    ) -> Result<Self> {
        Self::from_fn(
            dim,
            components,
            Binning {
                x_bins: 1,
                y_bins,
                ..Binning::default()
            },
            p,
            |_, y| f(y),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn binning(&self) -> Binning {
        Binning {
            x_bins: self.x_bins,
            y_bins: self.y_bins,
            merge_radius: self.merge_radius,
        }
    }

    /// Total number of x-bins (`I^N`).
    pub fn x_count(&self) -> usize {
        self.x_bins.pow(self.dim as u32)
    }

    /// Total number of y-bins (`J^N`).
    pub fn y_count(&self) -> usize {
        self.y_bins.pow(self.dim as u32)
    }

    pub fn x_center(&self, i: usize) -> Vec<f64> {
        bin_center(i, self.x_bins, self.dim)[..self.dim].to_vec()
    }

    pub fn y_center(&self, j: usize) -> Vec<f64> {
        bin_center(j, self.y_bins, self.dim)[..self.dim].to_vec()
    }

    pub fn cell(&self, i: usize, j: usize) -> &DiscreteMeasure {
        &self.cells[i * self.y_count() + j]
    }

    pub fn cells(&self) -> &[DiscreteMeasure] {
        &self.cells
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn is_homogeneous(&self) -> bool {
        self.x_count() == 1
    }

    /// Sample mass per y-bin, summed over x-bins and normalized to total one.
    pub fn y_marginal(&self) -> Vec<f64> {
        let jy = self.y_count();
        let mut m = vec![0.0; jy];
        for (k, v) in self.mass.iter().enumerate() {
            m[k % jy] += v;
        }
        let total: f64 = m.iter().sum();
        m.iter_mut().for_each(|v| *v /= total);
        m
    }

    /// The full distribution of gradients: the uniform mixture over all bins.
    pub fn pooled(&self) -> Result<DiscreteMeasure> {
        let t = 1.0 / self.cells.len() as f64;
        let parts: Vec<(f64, &DiscreteMeasure)> = self.cells.iter().map(|c| (t, c)).collect();
        DiscreteMeasure::mixture(&parts, self.merge_radius)
    }

    /// Applies `f` to every atom, keeping weights.
    pub fn map_atoms(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let mut out = self.clone();
        out.cells = self.cells.iter().map(|c| c.map(&f)).collect();
        out
    }

    fn same_layout(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim
            || self.components != other.components
            || self.x_bins != other.x_bins
            || self.y_bins != other.y_bins
        {
            return Err(invalid("measures use different binnings"));
        }
        Ok(())
    }

    /// Binwise convex combination `t self + (1 - t) other`.
    pub fn convex_combination(&self, other: &Self, t: f64) -> Result<Self> {
        self.same_layout(other)?;
        if !(0.0..=1.0).contains(&t) {
            return Err(invalid("combination weight must lie in [0, 1]"));
        }
        let cells = self
            .cells
            .iter()
            .zip(&other.cells)
            .map(|(a, b)| DiscreteMeasure::mixture(&[(t, a), (1.0 - t, b)], self.merge_radius))
            .collect::<Result<Vec<_>>>()?;
        let mass = self
            .mass
            .iter()
            .zip(&other.mass)
            .map(|(a, b)| t * a + (1.0 - t) * b)
            .collect();
        Ok(Self {
            cells,
            mass,
            ..self.clone()
        })
    }

    /// Mean over bins of the per-bin transport distance.
    pub fn transport_distance(&self, other: &Self) -> Result<f64> {
        self.same_layout(other)?;
        let d: Vec<f64> = self
            .cells
            .par_iter()
            .zip(other.cells.par_iter())
            .map(|(a, b)| a.transport_distance(b))
            .collect::<Result<_>>()?;
        Ok(d.iter().sum::<f64>() / d.len() as f64)
    }
}

/// JSON layout `{x_bins, y_bins, p, cells: [{i, j, atoms: [{xi, w}]}]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct MeasureRecord {
    dim: usize,
    components: usize,
    x_bins: usize,
    y_bins: usize,
    p: f64,
    #[serde(default = "default_merge")]
    merge_radius: f64,
    cells: Vec<CellRecord>,
}

fn default_merge() -> f64 {
    DEFAULT_MERGE_RADIUS
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CellRecord {
    i: usize,
    j: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mass: Option<f64>,
    atoms: Vec<Atom>,
}

impl From<TwoScaleYoungMeasure> for MeasureRecord {
    fn from(m: TwoScaleYoungMeasure) -> Self {
        let jy = m.y_count();
        let cells = m
            .cells
            .into_iter()
            .zip(m.mass)
            .enumerate()
            .map(|(k, (c, mass))| CellRecord {
                i: k / jy,
                j: k % jy,
                mass: Some(mass),
                atoms: c.atoms,
            })
            .collect();
        Self {
            dim: m.dim,
            components: m.components,
            x_bins: m.x_bins,
            y_bins: m.y_bins,
            p: m.p,
            merge_radius: m.merge_radius,
            cells,
        }
    }
}

impl TryFrom<MeasureRecord> for TwoScaleYoungMeasure {
    type Error = Error;

    fn try_from(r: MeasureRecord) -> Result<Self> {
        if !(1..=2).contains(&r.dim) {
            return Err(invalid("dim must be 1 or 2"));
        }
        let jy = r.y_bins.pow(r.dim as u32);
        let total = r.x_bins.pow(r.dim as u32) * jy;
        let mut slots: Vec<Option<(DiscreteMeasure, Option<f64>)>> = vec![None; total];
        for c in r.cells {
            let k = c.i * jy + c.j;
            if c.j >= jy || k >= total {
                return Err(invalid(format!("bin ({}, {}) is out of range", c.i, c.j)));
            }
            if slots[k].is_some() {
                return Err(invalid(format!("bin ({}, {}) appears twice", c.i, c.j)));
            }
            slots[k] = Some((DiscreteMeasure::new(c.atoms)?, c.mass));
        }
        let mut cells = Vec::with_capacity(total);
        let mut mass = Vec::with_capacity(total);
        let mut all_mass = true;
        for (k, s) in slots.into_iter().enumerate() {
            let (c, m) =
                s.ok_or_else(|| invalid(format!("bin ({}, {}) is missing", k / jy, k % jy)))?;
            all_mass &= m.is_some();
            mass.push(m.unwrap_or(0.0));
            cells.push(c);
        }
        let binning = Binning {
            x_bins: r.x_bins,
            y_bins: r.y_bins,
            merge_radius: r.merge_radius,
        };
        Self::new(
            r.dim,
            r.components,
            binning,
            r.p,
            cells,
            all_mass.then_some(mass),
        )
    }
}

// ---------------------------------------------------------------------------
// Estimation from generating sequences

/// Estimates the two-scale measure generated by `(<x/eps_n>, grad u_n)`.
///
/// Only the last `ceil(tail_fraction * len)` fields are used (equal weight).
/// Each field is sampled at its own cell centers; fields must be vector
/// fields on the unit box of a common dimension.
pub fn estimate_from_sequence(
    fields: &[(f64, VectorField)],
    binning: Binning,
    tail_fraction: f64,
    p: f64,
) -> Result<TwoScaleYoungMeasure> {
    binning.validate()?;
    if fields.is_empty() {
        return Err(invalid("empty sequence"));
    }
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(invalid("tail fraction must lie in (0, 1]"));
    }
    let dim = fields[0].1.grid.dim();
    let components = fields[0].1.components;
    for (eps, u) in fields {
        if !(*eps > 0.0 && eps.is_finite()) {
            return Err(invalid(format!("epsilon must be positive, got {eps}")));
        }
        let g = &u.grid;
        if g.dim() != dim || u.components != components {
            return Err(invalid("fields differ in dimension or component count"));
        }
        if g.axes()
            .iter()
            .any(|a| a.periodic || (a.extent - 1.0).abs() > 1e-12)
        {
            return Err(invalid("fields must live on the unit box (0,1)^N"));
        }
    }
    let tail = ((tail_fraction * fields.len() as f64).ceil() as usize).clamp(1, fields.len());
    let used = &fields[fields.len() - tail..];

    let ix = binning.x_bins.pow(dim as u32);
    let jy = binning.y_bins.pow(dim as u32);
    let width = dim * components;
    let mut raw: Vec<Vec<Atom>> = vec![Vec::new(); ix * jy];
    let mut mass = vec![0.0; ix * jy];
    for (eps, u) in used {
        let grad = discrete_gradient(u);
        let g = &u.grid;
        let w = g.cell_volume() / tail as f64;
        for cell in 0..g.cell_count() {
            let x = g.cell_center(cell);
            let mut y = [0.0; 2];
            for a in 0..dim {
                y[a] = fractional(x[a] / eps);
            }
            let k = bin_of(&x[..dim], binning.x_bins) * jy + bin_of(&y[..dim], binning.y_bins);
            raw[k].push(Atom {
                xi: grad.values[cell * width..(cell + 1) * width].to_vec(),
                w,
            });
            mass[k] += w;
        }
    }
    if let Some(k) = raw.iter().position(|r| r.is_empty()) {
        return Err(Error::UnderResolved(format!(
            "bin (i={}, j={}) received no samples; refine the grid or use fewer bins",
            k / jy,
            k % jy
        )));
    }
    let cells = raw
        .into_par_iter()
        .map(|atoms| DiscreteMeasure::from_weighted(atoms, binning.merge_radius))
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = mass.iter().sum();
    mass.iter_mut().for_each(|m| *m /= total);
    TwoScaleYoungMeasure::new(dim, components, binning, p, cells, Some(mass))
}

/// How the fields `u_n` of a [`SequenceSpec`] are produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    /// `u_n = F x`.
    Affine {
        matrix: Vec<f64>,
        dim: usize,
        cells: usize,
    },
    /// `u_n = F x + eps A sin(2 pi x_1 / eps) / (2 pi) e_1`.
    SineCorrector {
        matrix: Vec<f64>,
        dim: usize,
        cells: usize,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `u_n = F x + eps phi(x / eps)` with `phi` the `T`-periodic extension of
    /// the cell-problem minimizer; `cells_per_unit` per `eps`-cell.
    PeriodicCell {
        integrand: IntegrandSpec,
        matrix: Vec<f64>,
        dim: usize,
        t: usize,
        cells_per_unit: usize,
        #[serde(default)]
        optimizer: OptimizerConfig,
    },
    /// Minimizers of `F_eps` with affine boundary data.
    Minimizer {
        integrand: IntegrandSpec,
        matrix: Vec<f64>,
        dim: usize,
        cells: usize,
        #[serde(default)]
        optimizer: OptimizerConfig,
    },
}

fn one() -> f64 {
    1.0
}

/// A finite generating sequence: `eps_n`, generator and accumulation tail.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceSpec {
    pub epsilons: Vec<f64>,
    pub generator: Generator,
    /// Fraction of the sequence, counted from the end, that is accumulated.
    #[serde(default = "default_tail")]
    pub tail_fraction: f64,
}

/// Tail fraction that selects the last field only (any value below `1/len` does).
pub const LAST_ONLY: f64 = f64::MIN_POSITIVE;

fn default_tail() -> f64 {
    LAST_ONLY
}

impl SequenceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(invalid("epsilon list is empty"));
        }
        if self.epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(invalid("epsilons must be positive"));
        }
        if self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid("epsilons must be strictly decreasing"));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return Err(invalid("tail fraction must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Produces `(eps_n, u_n)` for every `eps_n`.
    pub fn generate(&self) -> Result<Vec<(f64, VectorField)>> {
        self.validate()?;
        match &self.generator {
            Generator::Affine { matrix, dim, cells } => self
                .epsilons
                .iter()
                .map(|&e| {
                    Ok((
                        e,
                        VectorField::affine(GridSpec::unit_box(*dim, *cells)?, matrix)?,
                    ))
                })
                .collect(),
            Generator::SineCorrector {
                matrix,
                dim,
                cells,
                amplitude,
            } => self
                .epsilons
                .iter()
                .map(|&e| {
                    Ok((
                        e,
                        sine_corrector_field(matrix, *dim, *cells, e, *amplitude)?,
                    ))
                })
                .collect(),
            Generator::PeriodicCell {
                integrand,
                matrix,
                dim,
                t,
                cells_per_unit,
                optimizer,
            } => {
                let f = integrand.build()?;
                let cell = solve_cell_problem(&f, matrix, *t, *dim, *cells_per_unit, optimizer)?;
                self.epsilons
                    .iter()
                    .map(|&e| Ok((e, periodic_generator_field(matrix, &cell.minimizer, e)?)))
                    .collect()
            }
            Generator::Minimizer {
                integrand,
                matrix,
                dim,
                cells,
                optimizer,
            } => {
                let f = integrand.build()?;
                self.epsilons
                    .par_iter()
                    .map(|&e| {
                        let r =
                            minimize_epsilon_functional(&f, e, matrix, *dim, *cells, optimizer)?;
                        Ok((e, r.minimizer))
                    })
                    .collect()
            }
        }
    }

    pub fn estimate(&self, binning: Binning, p: f64) -> Result<TwoScaleYoungMeasure> {
        estimate_from_sequence(&self.generate()?, binning, self.tail_fraction, p)
    }
}

/// `F x + eps A sin(2 pi x_1 / eps) / (2 pi) e_1` on the unit box.
pub fn sine_corrector_field(
    matrix: &[f64],
    dim: usize,
    cells: usize,
    eps: f64,
    amplitude: f64,
) -> Result<VectorField> {
    let grid = GridSpec::unit_box(dim, cells)?;
    let mut u = VectorField::affine(grid, matrix)?;
    let d = u.components;
    for node in 0..u.grid.node_count() {
        let x = u.grid.node_point(node)[0];
        u.values[node * d] += eps * amplitude * (2.0 * std::f64::consts::PI * x / eps).sin()
            / (2.0 * std::f64::consts::PI);
    }
    Ok(u)
}

/// `F x + eps phi(x / eps)` with `phi` extended `T`-periodically, sampled on
/// the unit box with `cells_per_unit / eps` cells per axis.
pub fn periodic_generator_field(
    matrix: &[f64],
    phi: &VectorField,
    eps: f64,
) -> Result<VectorField> {
    let g = &phi.grid;
    let t = g.axis(0).extent;
    let per_unit = (g.axis(0).cells as f64 / t).round() as usize;
    let inv = 1.0 / eps;
    if (inv - inv.round()).abs() > 1e-9 * inv {
        return Err(invalid(format!("1/epsilon must be an integer, got {inv}")));
    }
    let grid = GridSpec::unit_box(g.dim(), per_unit * inv.round() as usize)?;
    let base = VectorField::affine(grid, matrix)?;
    let dim = g.dim();
    let mut out = base.clone();
    for node in 0..out.grid.node_count() {
        let p = out.grid.node_point(node);
        let local: Vec<f64> = p[..dim].iter().map(|x| (x / eps).rem_euclid(t)).collect();
        let v = phi.interpolate(&local);
        for (c, vc) in v.iter().enumerate() {
            out.values[node * out.components + c] += eps * vc;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Analytic constructors

/// `nu_(x,y) = delta_{grad u(x) + grad_y u_1(x, y)}` at bin centers.
pub fn analytic_example_single_scale(
    dim: usize,
    components: usize,
    binning: Binning,
    p: f64,
    grad_u: impl Fn(&[f64]) -> Vec<f64>,
    grad_y_u1: impl Fn(&[f64], &[f64]) -> Vec<f64>,
) -> Result<TwoScaleYoungMeasure> {
    TwoScaleYoungMeasure::from_fn(dim, components, binning, p, |x, y| {
        let a = grad_u(x);
        let b = grad_y_u1(x, y);
        DiscreteMeasure::dirac(a.iter().zip(&b).map(|(u, v)| u + v).collect())
    })
}

/// `nu_(x,y) = int_Q delta_{grad u(x) + grad_z u_2(x, y, z)} dz`, with the
/// `z`-integral replaced by the midpoint rule on `K^N` points.
pub fn analytic_example_double_scale(
    dim: usize,
    components: usize,
    binning: Binning,
    p: f64,
    z_resolution: usize,
    grad_u: impl Fn(&[f64]) -> Vec<f64>,
    grad_z_u2: impl Fn(&[f64], &[f64], &[f64]) -> Vec<f64>,
) -> Result<TwoScaleYoungMeasure> {
    if z_resolution == 0 {
        return Err(invalid("z resolution must be positive"));
    }
    let kz = z_resolution.pow(dim as u32);
    let w = 1.0 / kz as f64;
    let mut err = None;
    let m = TwoScaleYoungMeasure::from_fn(dim, components, binning, p, |x, y| {
        let base = grad_u(x);
        let atoms = (0..kz)
            .map(|k| {
                let z = bin_center(k, z_resolution, dim);
                let dz = grad_z_u2(x, y, &z[..dim]);
                Atom {
                    xi: base.iter().zip(&dz).map(|(a, b)| a + b).collect(),
                    w,
                }
            })
            .collect();
        match DiscreteMeasure::from_weighted(atoms, binning.merge_radius) {
            Ok(mu) => mu,
            Err(e) => {
                err = Some(e);
                DiscreteMeasure::dirac(base)
            }
        }
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(m),
    }
}

/// Homogeneous measure `T^{-N} sum_{a in Z^N cap [0,T)^N} delta_{F + grad phi(a + y)} (x) dy`.
///
/// `phi` lives on `(0,T)^N` with `n` cells per unit length; `y_bins` must
/// divide `n`. Every grid cell inside `a + (y-bin j)` contributes one atom,
/// so bin `j` holds `T^N (n / J)^N` equally weighted atoms before merging.
pub fn periodic_cell_measure(
    matrix: &[f64],
    phi: &VectorField,
    y_bins: usize,
    p: f64,
    merge_radius: f64,
) -> Result<TwoScaleYoungMeasure> {
    let g = &phi.grid;
    let dim = g.dim();
    let t = g.axis(0).extent;
    if (t - t.round()).abs() > 1e-12 || t < 1.0 {
        return Err(invalid(format!(
            "cell period T must be a positive integer, got {t}"
        )));
    }
    if matrix.len() != dim * phi.components {
        return Err(invalid("matrix shape does not match the field"));
    }
    let t = t.round() as usize;
    let per_unit = g.axis(0).cells / t;
    if per_unit * t != g.axis(0).cells || (0..dim).any(|a| g.axis(a).cells != per_unit * t) {
        return Err(invalid("field grid is not a uniform (0,T)^N grid"));
    }
    if y_bins == 0 || !per_unit.is_multiple_of(y_bins) {
        return Err(invalid(format!(
            "{y_bins} y-bins do not divide {per_unit} cells per unit"
        )));
    }
    let grad = discrete_gradient(phi);
    let jy = y_bins.pow(dim as u32);
    let mut raw: Vec<Vec<Atom>> = vec![Vec::new(); jy];
    for cell in 0..g.cell_count() {
        let c = g.cell_center(cell);
        let mut y = [0.0; 2];
        for a in 0..dim {
            y[a] = fractional(c[a]);
        }
        let xi = grad
            .cell(cell)
            .iter()
            .zip(matrix)
            .map(|(d, f)| d + f)
            .collect();
        raw[bin_of(&y[..dim], y_bins)].push(Atom { xi, w: 1.0 });
    }
    let cells = raw
        .into_iter()
        .map(|atoms| DiscreteMeasure::from_weighted(atoms, merge_radius))
        .collect::<Result<Vec<_>>>()?;
    let binning = Binning {
        x_bins: 1,
        y_bins,
        merge_radius,
    };
    TwoScaleYoungMeasure::new(dim, phi.components, binning, p, cells, None)
}

/// Average over `x`: pair `j` of the result is `I^{-N} sum_i nu_(i,j)`.
pub fn average_measure(nu: &TwoScaleYoungMeasure) -> Result<TwoScaleYoungMeasure> {
    let ix = nu.x_count();
    if ix == 1 {
        return Ok(nu.clone());
    }
    let jy = nu.y_count();
    let t = 1.0 / ix as f64;
    let mut cells = Vec::with_capacity(jy);
    let mut mass = vec![0.0; jy];
    for j in 0..jy {
        let parts: Vec<(f64, &DiscreteMeasure)> = (0..ix).map(|i| (t, nu.cell(i, j))).collect();
        cells.push(DiscreteMeasure::mixture(&parts, nu.merge_radius)?);
        for i in 0..ix {
            mass[j] += nu.mass[i * jy + j];
        }
    }
    let binning = Binning {
        x_bins: 1,
        ..nu.binning()
    };
    TwoScaleYoungMeasure::new(nu.dim, nu.components, binning, nu.p, cells, Some(mass))
}

/// Measure equal to `mu` on the first `round(t I)` x-bins (along axis 0 in
/// 2-D, by whole columns) and to `nu` on the rest; both inputs homogeneous.
pub fn piecewise_in_x(
    mu: &TwoScaleYoungMeasure,
    nu: &TwoScaleYoungMeasure,
    t: f64,
    x_bins: usize,
) -> Result<TwoScaleYoungMeasure> {
    mu.same_layout(nu)?;
    if !mu.is_homogeneous() || !nu.is_homogeneous() {
        return Err(invalid("piecewise_in_x expects homogeneous inputs"));
    }
    if !(0.0..=1.0).contains(&t) || x_bins == 0 {
        return Err(invalid("need t in [0, 1] and a positive x-bin count"));
    }
    let dim = mu.dim;
    let split = (t * x_bins as f64).round() as usize;
    let ix = x_bins.pow(dim as u32);
    let jy = mu.y_count();
    let mut cells = Vec::with_capacity(ix * jy);
    for i in 0..ix {
        let src = if i % x_bins < split { mu } else { nu };
        cells.extend(src.cells.iter().cloned());
    }
    let binning = Binning {
        x_bins,
        ..mu.binning()
    };
    TwoScaleYoungMeasure::new(dim, mu.components, binning, mu.p, cells, None)
}

/// Result of [`glue_boundary`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GluedField {
    pub field: VectorField,
    /// Constant `C` in `|grad Phi_k| <= C k` for the piecewise-linear cut-off.
    pub cutoff_constant: f64,
}

/// `u + Phi_k (u_n - u)`: equal to `u_n` on `{dist(x, boundary) > 1/k}` and to
/// `u` within `1/(k+1)` of the boundary, linear in the distance in between.
pub fn glue_boundary(u_n: &VectorField, u: &VectorField, k: usize) -> Result<GluedField> {
    if u_n.grid != u.grid || u_n.components != u.components {
        return Err(invalid("fields live on different grids"));
    }
    let g = &u.grid;
    if g.axes().iter().any(|a| a.periodic) {
        return Err(invalid("boundary gluing needs a non-periodic box"));
    }
    if k == 0 {
        return Err(invalid("cut-off index k must be at least 1"));
    }
    let inner = 1.0 / k as f64;
    let outer = 1.0 / (k + 1) as f64;
    if inner < 2.0 * g.min_spacing() {
        return Err(Error::UnderResolved(format!(
            "1/k = {inner} is below two grid spacings ({})",
            2.0 * g.min_spacing()
        )));
    }
    let dim = g.dim();
    let d = u.components;
    let mut out = u.clone();
    for node in 0..g.node_count() {
        let p = g.node_point(node);
        let dist = (0..dim)
            .map(|a| p[a].min(g.axis(a).extent - p[a]))
            .fold(f64::INFINITY, f64::min);
        let phi = ((dist - outer) / (inner - outer)).clamp(0.0, 1.0);
        if phi > 0.0 {
            for c in 0..d {
                let idx = node * d + c;
                out.values[idx] = u.values[idx] + phi * (u_n.values[idx] - u.values[idx]);
            }
        }
    }
    let cutoff_constant = 1.0 / (inner - outer) * inner;
    Ok(GluedField {
        field: out,
        cutoff_constant,
    })
}

/// Nearest `1 / m^2` to `eps`.
pub fn nearest_tiling_epsilon(eps: f64) -> f64 {
    let m = (1.0 / eps.sqrt()).round().max(1.0);
    1.0 / (m * m)
}

/// Tiling construction: for `eps = 1/m^2` (so `rho = eps floor(1/sqrt(eps)) = 1/m`),
/// `v(x) = rho u_m((x - a)/rho) + F a` on each tile `a + rho Q`, `a in rho Z^N`.
///
/// `generator(m)` returns `u_m` on the unit box with `u_m = F x` on the
/// boundary (the member of the generating sequence at `eps = 1/m`). The
/// output fields use `cells` cells per axis.
pub fn tile_rescale(
    matrix: &[f64],
    epsilons: &[f64],
    cells: usize,
    generator: impl Fn(usize) -> Result<VectorField>,
) -> Result<Vec<(f64, VectorField)>> {
    let mut out = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(invalid(format!("epsilon must lie in (0, 1], got {eps}")));
        }
        let m = (1.0 / eps.sqrt()).round();
        if (eps * m * m - 1.0).abs() > 1e-9 {
            return Err(invalid(format!(
                "epsilon = {eps} is not of the form 1/m^2; nearest valid epsilon is {}",
                nearest_tiling_epsilon(eps)
            )));
        }
        let m = m as usize;
        let rho = 1.0 / m as f64;
        let u_m = generator(m)?;
        let dim = u_m.grid.dim();
        if matrix.len() != dim * u_m.components {
            return Err(invalid("matrix shape does not match the generator fields"));
        }
        let grid = GridSpec::unit_box(dim, cells)?;
        let d = u_m.components;
        let v = VectorField::from_fn(grid, d, |x| {
            let mut a = [0.0; 2];
            let mut local = [0.0; 2];
            for ax in 0..dim {
                let k = ((x[ax] / rho).floor() as usize).min(m - 1);
                a[ax] = k as f64 * rho;
                local[ax] = ((x[ax] - a[ax]) / rho).clamp(0.0, 1.0);
            }
            let val = u_m.interpolate(&local[..dim]);
            (0..d)
                .map(|c| {
                    rho * val[c] + (0..dim).map(|ax| matrix[c * dim + ax] * a[ax]).sum::<f64>()
                })
                .collect()
        });
        out.push((eps, v));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Queries

/// Barycenters `b(i, j) = int xi dnu_(i,j)`, ordered like the bins.
pub fn barycenter(nu: &TwoScaleYoungMeasure) -> Vec<Vec<f64>> {
    nu.cells.iter().map(|c| c.barycenter()).collect()
}

/// Moments of a density against a measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    /// `int g(x_i, y_j, xi) dnu_(i,j)` per bin pair.
    pub per_bin: Vec<f64>,
    /// `int_Q int g dnu dy` per x-bin.
    pub per_x: Vec<f64>,
    /// `int_Omega int_Q int g dnu dy dx`.
    pub total: f64,
}

/// Integrates `g(x_i, y_j, xi)` against the measure with uniform bin quadrature.
pub fn moment_with(
    nu: &TwoScaleYoungMeasure,
    g: impl Fn(&[f64], &[f64], &[f64]) -> f64,
) -> MomentTable {
    let ix = nu.x_count();
    let jy = nu.y_count();
    let mut per_bin = Vec::with_capacity(ix * jy);
    let mut per_x = Vec::with_capacity(ix);
    for i in 0..ix {
        let x = nu.x_center(i);
        let mut acc = 0.0;
        for j in 0..jy {
            let y = nu.y_center(j);
            let v = nu.cell(i, j).integrate(|xi| g(&x, &y, xi));
            per_bin.push(v);
            acc += v;
        }
        per_x.push(acc / jy as f64);
    }
    let total = per_x.iter().sum::<f64>() / ix as f64;
    MomentTable {
        per_bin,
        per_x,
        total,
    }
}

/// Moments of a dictionary member or energy density.
pub fn moment(nu: &TwoScaleYoungMeasure, g: &Integrand) -> MomentTable {
    moment_with(nu, |x, y, xi| g.value(x, y, xi))
}

/// `|xi|^p` moments.
pub fn p_moment(nu: &TwoScaleYoungMeasure, p: f64) -> MomentTable {
    moment_with(nu, |_, _, xi| frobenius(xi).powf(p))
}
