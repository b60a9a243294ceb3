//! Desk-scale comparison of `min F_eps`, the cell formula and the minimum
//! of the energy over homogeneous two-scale gradient Young measures.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::integrand::Integrand;
use crate::measure::{
    moment, periodic_cell_measure, Atom, DiscreteMeasure, TwoScaleYoungMeasure,
    DEFAULT_MERGE_RADIUS,
};
use crate::optimize::OptimizerConfig;
use crate::solver::{
    estimate_fhom, minimize_epsilon_functional, CellProblemResult, DEFAULT_PLATEAU_TOLERANCE,
};

/// `int_Omega int_Q int f(x, y, xi) dnu_(x,y) dy dx` by bin quadrature.
pub fn energy_of_measure(f: &Integrand, nu: &TwoScaleYoungMeasure) -> f64 {
    moment(nu, f).total
}

/// Admission record of one candidate measure.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CandidateEntry {
    pub id: String,
    pub admitted: bool,
    pub energy: Option<f64>,
    /// Reason for rejection.
    pub reason: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeasureMinimum {
    pub value: f64,
    pub argmin: String,
    pub entries: Vec<CandidateEntry>,
}

/// Barycenter tolerance for admission into `M_F`.
pub const BARYCENTER_TOLERANCE: f64 = 1e-8;

/// Minimum of [`energy_of_measure`] over candidates that are homogeneous in
/// `x` with total barycenter `F`. Ties go to the earlier candidate.
pub fn fhom_via_measures(
    f: &Integrand,
    matrix: &[f64],
    candidates: &[(String, TwoScaleYoungMeasure)],
) -> Result<MeasureMinimum> {
    let entries: Vec<CandidateEntry> = candidates
        .par_iter()
        .map(|(id, nu)| {
            let reject = |reason: String| CandidateEntry {
                id: id.clone(),
                admitted: false,
                energy: None,
                reason: Some(reason),
            };
            if !nu.is_homogeneous() {
                return reject("not homogeneous in x".into());
            }
            if nu.dim() * nu.components() != matrix.len() {
                return reject("gradient shape differs from F".into());
            }
            let jy = nu.y_count();
            let mut b = vec![0.0; matrix.len()];
            for j in 0..jy {
                for (bk, v) in b.iter_mut().zip(nu.cell(0, j).barycenter()) {
                    *bk += v / jy as f64;
                }
            }
            let err = b
                .iter()
                .zip(matrix)
                .map(|(u, v)| (u - v).abs())
                .fold(0.0, f64::max);
            if err > BARYCENTER_TOLERANCE * (1.0 + crate::frobenius(matrix)) {
                return reject(format!("barycenter differs from F by {err:.3e}"));
            }
            CandidateEntry {
                id: id.clone(),
                admitted: true,
                energy: Some(energy_of_measure(f, nu)),
                reason: None,
            }
        })
        .collect();
    let mut best: Option<(f64, &str)> = None;
    for e in &entries {
        if let Some(v) = e.energy {
            if best.is_none_or(|(b, _)| v < b) {
                best = Some((v, &e.id));
            }
        }
    }
    let (value, argmin) = best.ok_or_else(|| {
        Error::EmptyFeasibleSet(format!("all {} candidates were rejected", candidates.len()))
    })?;
    let argmin = argmin.to_string();
    Ok(MeasureMinimum {
        value,
        argmin,
        entries,
    })
}

/// Default candidates for `M_F`: `delta_F (x) dy`, the periodic-cell measure
/// of every computed cell minimizer and, for scalar 1-D gradients, two-atom
/// laminates `1/2 delta_{F-s} + 1/2 delta_{F+s}` and the `+-1` laminate.
pub fn default_candidates(
    matrix: &[f64],
    dim: usize,
    p: f64,
    cells: &[CellProblemResult],
) -> Result<Vec<(String, TwoScaleYoungMeasure)>> {
    let components = matrix.len() / dim;
    let mut out = vec![(
        "dirac_F".to_string(),
        TwoScaleYoungMeasure::homogeneous(dim, components, 1, p, |_| {
            DiscreteMeasure::dirac(matrix.to_vec())
        })?,
    )];
    for c in cells {
        let nu = periodic_cell_measure(
            matrix,
            &c.minimizer,
            c.cells_per_unit,
            p,
            DEFAULT_MERGE_RADIUS,
        )?;
        out.push((format!("periodic_cell_T{}", c.t), nu));
    }
    if matrix.len() == 1 {
        let f = matrix[0];
        for s in [0.25, 0.5, 1.0, 1.5, 2.0] {
            let mu = DiscreteMeasure::new(vec![
                Atom {
                    xi: vec![f - s],
                    w: 0.5,
                },
                Atom {
                    xi: vec![f + s],
                    w: 0.5,
                },
            ])?;
            out.push((
                format!("two_atom_s{s}"),
                TwoScaleYoungMeasure::homogeneous(1, 1, 1, p, |_| mu.clone())?,
            ));
        }
        if f.abs() < 1.0 {
            let lambda = (1.0 + f) / 2.0;
            let mu = DiscreteMeasure::new(vec![
                Atom {
                    xi: vec![-1.0],
                    w: 1.0 - lambda,
                },
                Atom {
                    xi: vec![1.0],
                    w: lambda,
                },
            ])?;
            out.push((
                "two_atom_wells".to_string(),
                TwoScaleYoungMeasure::homogeneous(1, 1, 1, p, |_| mu.clone())?,
            ));
        }
    }
    Ok(out)
}

/// Resolution and solver settings of [`gamma_compare`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GammaSettings {
    /// Grid cells per `eps`-period in the `F_eps` problems.
    pub cells_per_period: usize,
    /// Cell-problem periods for `f_hom`.
    pub periods: Vec<usize>,
    /// Cell-problem cells per unit length.
    pub cell_resolution: usize,
    pub optimizer: OptimizerConfig,
    pub plateau_tolerance: f64,
    /// Gap increases below this count as flat.
    pub trend_tolerance: f64,
    /// Slack below `f_hom` allowed for admitted candidates, relative to `1 + |f_hom|`.
    pub bracket_tolerance: f64,
}

impl Default for GammaSettings {
    fn default() -> Self {
        Self {
            cells_per_period: 16,
            periods: vec![1, 2],
            cell_resolution: 32,
            optimizer: OptimizerConfig::default(),
            plateau_tolerance: DEFAULT_PLATEAU_TOLERANCE,
            trend_tolerance: 1e-6,
            bracket_tolerance: 1e-2,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GammaRow {
    pub epsilon: f64,
    pub cells: usize,
    pub min_energy: Option<f64>,
    pub converged: bool,
    pub gap: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GammaReport {
    pub integrand: String,
    pub matrix: Vec<f64>,
    pub dim: usize,
    pub rows: Vec<GammaRow>,
    /// `|Omega| f_hom(F)` with `|Omega| = 1`.
    pub cell_value: f64,
    pub fhom_table: Vec<(usize, f64)>,
    pub fhom_converged: bool,
    pub candidates: Vec<CandidateEntry>,
    pub candidate_min: Option<f64>,
    pub argmin: Option<String>,
    /// True when gaps never grow by more than the trend tolerance.
    pub gaps_nonincreasing: bool,
    /// True when gaps strictly drop by more than the trend tolerance at every step.
    pub gaps_strictly_decreasing: bool,
    /// `candidate_min >= cell_value - bracket_tolerance (1 + |cell_value|)`.
    pub bracket_consistent: bool,
    pub notes: Vec<String>,
}

impl GammaReport {
    /// CSV table `epsilon,min_energy,fhom,gap`; failed rows leave fields empty.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["epsilon", "min_energy", "fhom", "gap"])?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
        for r in &self.rows {
            out.write_record([
                format!("{:e}", r.epsilon),
                opt(r.min_energy),
                format!("{:e}", self.cell_value),
                opt(r.gap),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn final_gap(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.gap)
    }
}

/// Minimizes `F_eps` with affine boundary data for every `eps`, estimates
/// `f_hom(F)` and evaluates the default candidate family.
///
/// Failures of single `F_eps` solves are recorded in their row; failures
/// of the cell problem propagate.
pub fn gamma_compare(
    f: &Integrand,
    matrix: &[f64],
    dim: usize,
    epsilons: &[f64],
    settings: &GammaSettings,
) -> Result<GammaReport> {
    if epsilons.is_empty() {
        return Err(invalid("epsilon list is empty"));
    }
    if settings.cells_per_period == 0 {
        return Err(invalid("cells_per_period must be positive"));
    }
    let fhom = estimate_fhom(
        f,
        matrix,
        dim,
        &settings.periods,
        &[settings.cell_resolution],
        &settings.optimizer,
        settings.plateau_tolerance,
    )?;
    let cell_value = fhom.value;

    let rows: Vec<GammaRow> = epsilons
        .par_iter()
        .map(|&eps| {
            let cells = (settings.cells_per_period as f64 / eps).round() as usize;
            match minimize_epsilon_functional(f, eps, matrix, dim, cells, &settings.optimizer) {
                Ok(r) => GammaRow {
                    epsilon: eps,
                    cells,
                    min_energy: Some(r.energy),
                    converged: r.converged,
                    gap: Some((r.energy - cell_value).abs() / (1.0 + cell_value.abs())),
                    error: None,
                },
                Err(e) => GammaRow {
                    epsilon: eps,
                    cells,
                    min_energy: None,
                    converged: false,
                    gap: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let gaps: Vec<f64> = rows.iter().filter_map(|r| r.gap).collect();
    let gaps_nonincreasing = gaps
        .windows(2)
        .all(|w| w[1] <= w[0] + settings.trend_tolerance);
    let gaps_strictly_decreasing = gaps
        .windows(2)
        .all(|w| w[1] < w[0] - settings.trend_tolerance);

    let candidates = default_candidates(matrix, dim, f.growth().p, &fhom.table)?;
    let (candidate_min, argmin, entries) = match fhom_via_measures(f, matrix, &candidates) {
        Ok(m) => (Some(m.value), Some(m.argmin), m.entries),
        Err(Error::EmptyFeasibleSet(_)) => (None, None, vec![]),
        Err(e) => return Err(e),
    };
    let bracket_consistent = candidate_min
        .is_none_or(|v| v >= cell_value - settings.bracket_tolerance * (1.0 + cell_value.abs()));

    let mut notes = vec![
        "F_eps is minimized with u = F x on the boundary; boundary layers perturb min F_eps by O(eps)".to_string(),
    ];
    if !fhom.converged {
        notes.push("cell-problem values did not plateau over the given periods".to_string());
    }
    if f.growth().offset > 0.0 || !f.is_convex() {
        notes.push(
            "nonconvex integrand: computed values are upper bounds of the true infima".to_string(),
        );
    }
    if !gaps_strictly_decreasing && gaps_nonincreasing {
        notes.push("gaps are flat within the trend tolerance".to_string());
    }
    if rows.iter().any(|r| r.error.is_some()) {
        notes.push("some eps solves failed; see their rows".to_string());
    }

    Ok(GammaReport {
        integrand: f.name().to_string(),
        matrix: matrix.to_vec(),
        dim,
        rows,
        cell_value,
        fhom_table: fhom.values(),
        fhom_converged: fhom.converged,
        candidates: entries,
        candidate_min,
        argmin,
        gaps_nonincreasing,
        gaps_strictly_decreasing,
        bracket_consistent,
        notes,
    })
}
