//! Numerical tests of the three conditions characterizing two-scale
//! gradient Young measures.
//!
//! * (i) the barycenter splits as `grad u(x) + grad_y u_1(x, y)` with
//!   `u_1(x, .)` periodic. Checked by a least-squares projection onto
//!   discrete periodic gradients on the y-grid of every x-bin.
//! * (ii) `int_Q int f(y, xi) dnu dy >= f_hom(grad u(x))` for every member of
//!   a test dictionary, with `f_hom` supplied by an [`FhomProvider`].
//! * (iii) the `p`-th moment is finite.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::frobenius;
use crate::grid::{GradientField, GridSpec};
use crate::integrand::{Integrand, TestDictionary};
use crate::measure::{barycenter, TwoScaleYoungMeasure};
use crate::optimize::OptimizerConfig;
use crate::solver::{estimate_fhom, DEFAULT_PLATEAU_TOLERANCE};

/// Relative tolerance of the periodic-gradient projection.
pub const PROJECTION_TOLERANCE: f64 = 1e-10;

/// Split of the barycenter field into macroscopic gradient and corrector gradients.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrectorDecomposition {
    /// `grad u(x_i)`, one cell per x-bin on the unit box.
    pub macro_gradient: GradientField,
    /// Per x-bin, the projected `grad_y u_1(x_i, .)` on the periodic y-grid.
    pub corrector_gradients: Vec<GradientField>,
    /// `L^2(Omega x Q)` norm of the part of the fluctuation that is not a periodic gradient.
    pub residual: f64,
    /// Per x-bin residuals (`L^2(Q)`).
    pub residual_per_x: Vec<f64>,
    /// `L^2(Omega)` distance of `grad u` to discrete gradients on the x-grid (zero in 1-D).
    pub x_compat_residual: f64,
    /// `L^2(Omega x Q)` norm of the barycenter field.
    pub barycenter_norm: f64,
}

struct Projection {
    gradient: Vec<f64>,
    residual_sq: f64,
}

/// Least-squares projection of cell values `g` onto `{D w}` by conjugate
/// gradients on `D^T D w = D^T g`; constants are pinned to zero mean.
fn project_onto_gradients(grid: &GridSpec, d: usize, g: &[f64]) -> Projection {
    let stencil = grid.stencil();
    let width = d * grid.dim();
    let n = grid.node_count() * d;
    let cells = grid.cell_count();
    let apply = |w: &[f64], out: &mut [f64]| {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut grad = [0.0; 4];
        for cell in 0..cells {
            stencil.cell_gradient(w, d, cell, &mut grad);
            stencil.scatter_adjoint(&grad[..width], d, cell, out);
        }
    };
    let mut rhs = vec![0.0; n];
    for cell in 0..cells {
        stencil.scatter_adjoint(&g[cell * width..(cell + 1) * width], d, cell, &mut rhs);
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let mut w = vec![0.0; n];
    let rhs_norm = dot(&rhs, &rhs).sqrt();
    if rhs_norm > 0.0 {
        let mut r = rhs.clone();
        let mut p = r.clone();
        let mut ap = vec![0.0; n];
        let mut rr = dot(&r, &r);
        for _ in 0..(10 * n + 100) {
            if rr.sqrt() <= PROJECTION_TOLERANCE * rhs_norm {
                break;
            }
            apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                break;
            }
            let alpha = rr / pap;
            w.iter_mut().zip(&p).for_each(|(wi, pi)| *wi += alpha * pi);
            r.iter_mut()
                .zip(&ap)
                .for_each(|(ri, api)| *ri -= alpha * api);
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            p.iter_mut()
                .zip(&r)
                .for_each(|(pi, ri)| *pi = ri + beta * *pi);
            rr = rr_new;
        }
    }
    for c in 0..d {
        let mean =
            (0..grid.node_count()).map(|k| w[k * d + c]).sum::<f64>() / grid.node_count() as f64;
        (0..grid.node_count()).for_each(|k| w[k * d + c] -= mean);
    }

    let mut gradient = vec![0.0; cells * width];
    let mut residual_sq = 0.0;
    for cell in 0..cells {
        let out = &mut gradient[cell * width..(cell + 1) * width];
        stencil.cell_gradient(&w, d, cell, out);
        for (a, b) in out.iter().zip(&g[cell * width..(cell + 1) * width]) {
            residual_sq += (a - b) * (a - b);
        }
    }
    Projection {
        gradient,
        residual_sq: residual_sq / cells as f64,
    }
}

/// Condition (i): recovers `grad u` as the y-average of the barycenter and
/// projects the fluctuation onto periodic gradients on the y-grid.
///
/// The y-grid is the `J^N` y-binning of `nu` itself, with nodes at bin corners.
pub fn check_condition_i(nu: &TwoScaleYoungMeasure) -> Result<CorrectorDecomposition> {
    let dim = nu.dim();
    let d = nu.components();
    let width = d * dim;
    let ix = nu.x_count();
    let jy = nu.y_count();
    let b = barycenter(nu);
    let x_grid = GridSpec::unit_box(dim, nu.binning().x_bins)?;
    let y_grid = GridSpec::unit_cell(dim, nu.binning().y_bins)?;

    let mut macro_values = vec![0.0; ix * width];
    for i in 0..ix {
        for j in 0..jy {
            for (m, v) in macro_values[i * width..(i + 1) * width]
                .iter_mut()
                .zip(&b[i * jy + j])
            {
                *m += v;
            }
        }
    }
    macro_values.iter_mut().for_each(|v| *v /= jy as f64);

    let per_x: Vec<Projection> = (0..ix)
        .into_par_iter()
        .map(|i| {
            let mean = &macro_values[i * width..(i + 1) * width];
            let mut g = Vec::with_capacity(jy * width);
            for j in 0..jy {
                g.extend(b[i * jy + j].iter().zip(mean).map(|(bv, m)| bv - m));
            }
            project_onto_gradients(&y_grid, d, &g)
        })
        .collect();

    let residual = (per_x.iter().map(|p| p.residual_sq).sum::<f64>() / ix as f64).sqrt();
    let residual_per_x = per_x.iter().map(|p| p.residual_sq.sqrt()).collect();
    let barycenter_norm = (b
        .iter()
        .map(|v| v.iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        / b.len() as f64)
        .sqrt();
    let x_compat_residual = if dim == 1 {
        0.0
    } else {
        project_onto_gradients(&x_grid, d, &macro_values)
            .residual_sq
            .sqrt()
    };
    let corrector_gradients = per_x
        .into_iter()
        .map(|p| GradientField::new(y_grid.clone(), d, p.gradient))
        .collect::<Result<Vec<_>>>()?;
    Ok(CorrectorDecomposition {
        macro_gradient: GradientField::new(x_grid, d, macro_values)?,
        corrector_gradients,
        residual,
        residual_per_x,
        x_compat_residual,
        barycenter_norm,
    })
}

// ---------------------------------------------------------------------------
// f_hom providers

/// Source of `f_hom(F)` values for dictionary members.
pub trait FhomProvider: Sync {
    /// `Ok(None)` when `matrix` is outside the provider's coverage.
    fn fhom(&self, member: &Integrand, matrix: &[f64]) -> Result<Option<f64>>;
}

/// Provider backed by a closure (exact formulas in tests and examples).
pub struct FhomFn<F>(pub F);

impl<F> FhomProvider for FhomFn<F>
where
    F: Fn(&Integrand, &[f64]) -> Option<f64> + Sync,
{
    fn fhom(&self, member: &Integrand, matrix: &[f64]) -> Result<Option<f64>> {
        Ok((self.0)(member, matrix))
    }
}

/// Uniform tensor lattice of `F` values, one range per matrix entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FhomLattice {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Points per entry (1 means `lower == upper`).
    pub points: Vec<usize>,
}

impl FhomLattice {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, points: Vec<usize>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() || lower.len() != points.len() {
            return Err(invalid(
                "lattice bounds and point counts must have equal, nonzero length",
            ));
        }
        for k in 0..lower.len() {
            if !(lower[k].is_finite() && upper[k].is_finite())
                || upper[k] < lower[k]
                || points[k] == 0
            {
                return Err(invalid(format!("bad lattice range for entry {k}")));
            }
            if points[k] == 1 && upper[k] != lower[k] {
                return Err(invalid(format!(
                    "entry {k}: a single point needs lower == upper"
                )));
            }
        }
        Ok(Self {
            lower,
            upper,
            points,
        })
    }

    /// Smallest lattice with spacing at most `spacing` covering all `matrices`.
    pub fn covering(matrices: &[Vec<f64>], spacing: f64) -> Result<Self> {
        if matrices.is_empty() || !(spacing > 0.0) {
            return Err(invalid("need matrices and a positive spacing"));
        }
        let m = matrices[0].len();
        let mut lower = vec![f64::INFINITY; m];
        let mut upper = vec![f64::NEG_INFINITY; m];
        for f in matrices {
            for k in 0..m {
                lower[k] = lower[k].min(f[k]);
                upper[k] = upper[k].max(f[k]);
            }
        }
        let points = (0..m)
            .map(|k| {
                let span = upper[k] - lower[k];
                if span <= 1e-12 * (1.0 + lower[k].abs()) {
                    upper[k] = lower[k];
                    1
                } else {
                    (span / spacing).ceil() as usize + 1
                }
            })
            .collect();
        Self::new(lower, upper, points)
    }

    fn coordinate(&self, k: usize, idx: usize) -> f64 {
        if self.points[k] == 1 {
            self.lower[k]
        } else {
            self.lower[k]
                + (self.upper[k] - self.lower[k]) * idx as f64 / (self.points[k] - 1) as f64
        }
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Lattice point with flat index `flat` (entry 0 fastest).
    pub fn point(&self, mut flat: usize) -> Vec<f64> {
        (0..self.points.len())
            .map(|k| {
                let idx = flat % self.points[k];
                flat /= self.points[k];
                self.coordinate(k, idx)
            })
            .collect()
    }

    /// Multilinear interpolation of lattice values; `None` outside the box.
    pub fn interpolate(&self, values: &[f64], matrix: &[f64]) -> Option<f64> {
        let m = self.points.len();
        if matrix.len() != m {
            return None;
        }
        let mut base = vec![0usize; m];
        let mut frac = vec![0.0; m];
        for k in 0..m {
            let tol = 1e-9 * (1.0 + self.upper[k].abs().max(self.lower[k].abs()));
            if matrix[k] < self.lower[k] - tol || matrix[k] > self.upper[k] + tol {
                return None;
            }
            if self.points[k] > 1 {
                let s = (matrix[k] - self.lower[k]) / (self.upper[k] - self.lower[k])
                    * (self.points[k] - 1) as f64;
                let s = s.clamp(0.0, (self.points[k] - 1) as f64);
                let i0 = (s.floor() as usize).min(self.points[k] - 2);
                base[k] = i0;
                frac[k] = s - i0 as f64;
            }
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << m) {
            let mut w = 1.0;
            let mut flat = 0;
            let mut stride = 1;
            for k in 0..m {
                let bit = (corner >> k) & 1;
                if self.points[k] == 1 {
                    if bit == 1 {
                        w = 0.0;
                    }
                } else {
                    w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
                    flat += (base[k] + bit) * stride;
                }
                stride *= self.points[k];
            }
            if w != 0.0 {
                acc += w * values[flat];
            }
        }
        Some(acc)
    }
}

/// Cell-problem settings used to fill an [`FhomLattice`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FhomSettings {
    pub periods: Vec<usize>,
    pub cells_per_unit: usize,
    pub optimizer: OptimizerConfig,
    pub plateau_tolerance: f64,
}

impl Default for FhomSettings {
    fn default() -> Self {
        Self {
            periods: vec![1, 2],
            cells_per_unit: 32,
            optimizer: OptimizerConfig::default().with_restarts(4),
            plateau_tolerance: DEFAULT_PLATEAU_TOLERANCE,
        }
    }
}

/// `f_hom` tabulated on a lattice per dictionary member and interpolated.
///
/// Convex `y`-independent members use `f_hom = f` directly.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LatticeFhom {
    pub lattice: FhomLattice,
    pub settings: FhomSettings,
    /// Lattice values per member name; absent for closed-form members.
    pub tables: BTreeMap<String, Vec<f64>>,
}

impl LatticeFhom {
    pub fn compute(
        dictionary: &TestDictionary,
        dim: usize,
        lattice: FhomLattice,
        settings: FhomSettings,
    ) -> Result<Self> {
        let mut tables = BTreeMap::new();
        let mut seen = std::collections::BTreeSet::new();
        for f in dictionary.members() {
            if !seen.insert(f.name().to_string()) {
                return Err(invalid(format!(
                    "dictionary member name `{}` is not unique",
                    f.name()
                )));
            }
            if f.closed_form_fhom(&lattice.point(0)).is_some() {
                continue;
            }
            let values = (0..lattice.len())
                .into_par_iter()
                .map(|k| {
                    let matrix = lattice.point(k);
                    estimate_fhom(
                        f,
                        &matrix,
                        dim,
                        &settings.periods,
                        &[settings.cells_per_unit],
                        &settings.optimizer,
                        settings.plateau_tolerance,
                    )
                    .map(|e| e.value)
                })
                .collect::<Result<Vec<_>>>()?;
            tables.insert(f.name().to_string(), values);
        }
        Ok(Self {
            lattice,
            settings,
            tables,
        })
    }
}

impl FhomProvider for LatticeFhom {
    fn fhom(&self, member: &Integrand, matrix: &[f64]) -> Result<Option<f64>> {
        if let Some(v) = member.closed_form_fhom(matrix) {
            return Ok(Some(v));
        }
        Ok(self
            .tables
            .get(member.name())
            .and_then(|t| self.lattice.interpolate(t, matrix)))
    }
}

// ---------------------------------------------------------------------------
// Conditions (ii), (iii) and the composed report

/// Tolerances of the composed check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Condition (i) passes iff `residual <= corrector * (1 + |b|_L2)`.
    pub corrector: f64,
    /// Condition (ii) passes iff every slack is `>= -slack * (1 + |f_hom|)`.
    pub slack: f64,
    /// Atoms with `|xi|` above this are flagged by condition (iii).
    pub moment_cap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            corrector: 1e-2,
            slack: 1e-2,
            moment_cap: 1e6,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MemberSlack {
    pub name: String,
    /// Per x-bin slack; `None` where `f_hom` was not available.
    pub slacks: Vec<Option<f64>>,
    pub fhom: Vec<Option<f64>>,
    pub worst_slack: Option<f64>,
    pub worst_bin: Option<usize>,
    pub untested_bins: Vec<usize>,
    pub pass: bool,
}

/// Condition (ii) slacks for every dictionary member.
pub fn check_condition_ii(
    nu: &TwoScaleYoungMeasure,
    decomposition: &CorrectorDecomposition,
    dictionary: &TestDictionary,
    provider: &dyn FhomProvider,
    slack_tolerance: f64,
) -> Result<Vec<MemberSlack>> {
    let ix = nu.x_count();
    let jy = nu.y_count();
    if decomposition.macro_gradient.grid.cell_count() != ix {
        return Err(invalid("decomposition does not match the measure's x-bins"));
    }
    dictionary
        .members()
        .par_iter()
        .map(|f| {
            let mut slacks = Vec::with_capacity(ix);
            let mut fhom = Vec::with_capacity(ix);
            let mut untested_bins = Vec::new();
            let mut worst: Option<(f64, usize)> = None;
            let mut pass = true;
            for i in 0..ix {
                let x = nu.x_center(i);
                let mut lhs = 0.0;
                for j in 0..jy {
                    let y = nu.y_center(j);
                    lhs += nu.cell(i, j).integrate(|xi| f.value(&x, &y, xi));
                }
                lhs /= jy as f64;
                match provider.fhom(f, decomposition.macro_gradient.cell(i))? {
                    Some(v) => {
                        let s = lhs - v;
                        if s < -slack_tolerance * (1.0 + v.abs()) || !s.is_finite() {
                            pass = false;
                        }
                        if worst.is_none_or(|(w, _)| s < w) {
                            worst = Some((s, i));
                        }
                        slacks.push(Some(s));
                        fhom.push(Some(v));
                    }
                    None => {
                        untested_bins.push(i);
                        slacks.push(None);
                        fhom.push(None);
                    }
                }
            }
            Ok(MemberSlack {
                name: f.name().to_string(),
                slacks,
                fhom,
                worst_slack: worst.map(|w| w.0),
                worst_bin: worst.map(|w| w.1),
                untested_bins,
                pass,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentCheck {
    pub p: f64,
    pub value: f64,
    pub max_atom_norm: f64,
    pub cap: f64,
    pub atoms_above_cap: usize,
    pub pass: bool,
}

/// Condition (iii): the full `p`-moment, with atoms above `cap` flagged.
pub fn check_condition_iii(nu: &TwoScaleYoungMeasure, p: f64, cap: f64) -> MomentCheck {
    let value = crate::measure::p_moment(nu, p).total;
    let mut max_atom_norm = 0.0f64;
    let mut atoms_above_cap = 0;
    for c in nu.cells() {
        for a in c.atoms() {
            let r = frobenius(&a.xi);
            max_atom_norm = max_atom_norm.max(r);
            if r > cap {
                atoms_above_cap += 1;
            }
        }
    }
    MomentCheck {
        p,
        value,
        max_atom_norm,
        cap,
        atoms_above_cap,
        pass: value.is_finite() && atoms_above_cap == 0,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrectorCheck {
    pub residual: f64,
    pub x_compat_residual: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CharacterizationReport {
    pub condition_i: CorrectorCheck,
    pub decomposition: CorrectorDecomposition,
    pub condition_ii: Vec<MemberSlack>,
    pub condition_ii_pass: bool,
    pub condition_iii: MomentCheck,
    pub tolerances: Tolerances,
    pub verdict: bool,
    pub notes: Vec<String>,
}

impl CharacterizationReport {
    /// Fixed-width pass/fail table.
    pub fn table(&self) -> String {
        let mark = |b: bool| if b { "PASS" } else { "FAIL" };
        let mut s = String::new();
        s.push_str(&format!(
            "{:<48} {:>14} {}\n",
            "condition (i) residual",
            format!("{:.3e}", self.condition_i.residual),
            mark(self.condition_i.pass)
        ));
        for m in &self.condition_ii {
            let w = m
                .worst_slack
                .map_or("untested".to_string(), |v| format!("{v:.3e}"));
            s.push_str(&format!(
                "{:<48} {:>14} {}\n",
                format!("(ii) {}", m.name),
                w,
                mark(m.pass)
            ));
        }
        s.push_str(&format!(
            "{:<48} {:>14} {}\n",
            format!("condition (iii) p={}", self.condition_iii.p),
            format!("{:.6}", self.condition_iii.value),
            mark(self.condition_iii.pass)
        ));
        s.push_str(&format!("verdict: {}\n", mark(self.verdict)));
        s
    }
}

/// Runs the three checks and combines them.
pub fn verify_characterization(
    nu: &TwoScaleYoungMeasure,
    dictionary: &TestDictionary,
    provider: &dyn FhomProvider,
    tolerances: Tolerances,
) -> Result<CharacterizationReport> {
    let decomposition = check_condition_i(nu)?;
    let threshold = tolerances.corrector * (1.0 + decomposition.barycenter_norm);
    let condition_i = CorrectorCheck {
        residual: decomposition.residual,
        x_compat_residual: decomposition.x_compat_residual,
        threshold,
        pass: decomposition.residual <= threshold && decomposition.x_compat_residual <= threshold,
    };
    let condition_ii =
        check_condition_ii(nu, &decomposition, dictionary, provider, tolerances.slack)?;
    let condition_ii_pass = condition_ii.iter().all(|m| m.pass);
    let condition_iii = check_condition_iii(nu, nu.p(), tolerances.moment_cap);
    let mut notes = vec![
        "conditions are checked per bin; sets of measure zero in x are not resolved".to_string(),
    ];
    let untested: usize = condition_ii.iter().map(|m| m.untested_bins.len()).sum();
    if untested > 0 {
        notes.push(format!(
            "{untested} (member, x-bin) pairs had no f_hom value and were not tested"
        ));
    }
    let verdict = condition_i.pass && condition_ii_pass && condition_iii.pass;
    Ok(CharacterizationReport {
        condition_i,
        decomposition,
        condition_ii,
        condition_ii_pass,
        condition_iii,
        tolerances,
        verdict,
        notes,
    })
}
