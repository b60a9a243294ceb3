//! Configuration-driven experiment runner.
//!
//! A JSON [`ExperimentConfig`] selects one of the commands `cell`,
//! `epsilon`, `ym`, `check`, `gamma` or `examples`. [`run`] writes
//! `manifest.json` (the resolved config and crate version) followed by the
//! command's results into the output directory. Identical configs produce
//! byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::checker::{
    verify_characterization, CharacterizationReport, FhomLattice, FhomSettings, LatticeFhom,
    Tolerances,
};
use crate::error::{Error, Result};
use crate::gamma::{gamma_compare, GammaSettings};
use crate::integrand::{IntegrandSpec, TestDictionary};
use crate::measure::{
    analytic_example_double_scale, analytic_example_single_scale, barycenter, Binning, Generator,
    SequenceSpec, TwoScaleYoungMeasure,
};
use crate::optimize::OptimizerConfig;
use crate::solver::{estimate_fhom, minimize_epsilon_functional, DEFAULT_PLATEAU_TOLERANCE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Cell,
    Epsilon,
    Ym,
    Check,
    Gamma,
    Examples,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Cell => "cell",
            Command::Epsilon => "epsilon",
            Command::Ym => "ym",
            Command::Check => "check",
            Command::Gamma => "gamma",
            Command::Examples => "examples",
        }
    }
}

/// One experiment. Every field has an explicit default after loading.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub integrand: Option<IntegrandSpec>,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Macroscopic gradient `F`, row-major `d x N`.
    #[serde(default)]
    pub matrix: Option<Vec<f64>>,
    /// Cell-problem periods `T`.
    #[serde(default = "default_periods")]
    pub periods: Vec<usize>,
    /// Grid cells per microstructure period (per unit length of the cell problem).
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default)]
    pub epsilon_list: Vec<f64>,
    /// Generator of the sequence for `ym` and `check`.
    #[serde(default)]
    pub generator: Option<Generator>,
    #[serde(default = "default_tail")]
    pub tail_fraction: f64,
    /// Measure file for `check` (instead of a generator).
    #[serde(default)]
    pub measure_path: Option<PathBuf>,
    #[serde(default)]
    pub binning: Binning,
    /// Moment exponent recorded on measures.
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub fhom: FhomSettings,
    /// `F`-lattice spacing used to tabulate `f_hom` for `check`.
    #[serde(default = "default_spacing")]
    pub fhom_lattice_spacing: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Also write minimizers and measures.
    #[serde(default)]
    pub save_fields: bool,
}

fn default_dim() -> usize {
    1
}
fn default_periods() -> Vec<usize> {
    vec![1, 2]
}
fn default_resolution() -> usize {
    32
}
fn default_tail() -> f64 {
    crate::measure::LAST_ONLY
}
fn default_p() -> f64 {
    2.0
}
fn default_spacing() -> f64 {
    0.25
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

fn config_error(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

fn at(path: &str, e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) => config_error(path, m),
        other => other,
    }
}

#[derive(Deserialize)]
struct ManifestIn {
    config: serde_json::Value,
}

impl ExperimentConfig {
    /// Parses a config, or the `config` entry of a manifest.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| config_error("", format!("not valid JSON: {e}")))?;
        let value = match serde_json::from_value::<ManifestIn>(value.clone()) {
            Ok(m) if value.get("version").is_some() => m.config,
            _ => value,
        };
        let cfg: Self = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            config_error(
                if path == "." { "" } else { &path },
                e.into_inner().to_string(),
            )
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| config_error("", format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn command(&self) -> Result<Command> {
        self.command
            .ok_or_else(|| config_error("command", "no command given"))
    }

    fn integrand_spec(&self) -> Result<&IntegrandSpec> {
        self.integrand
            .as_ref()
            .ok_or_else(|| config_error("integrand", "required for this command"))
    }

    fn matrix(&self) -> Result<&[f64]> {
        let m = self
            .matrix
            .as_deref()
            .ok_or_else(|| config_error("matrix", "required for this command"))?;
        if m.is_empty() || m.len() % self.dim != 0 || m.len() / self.dim > 2 {
            return Err(config_error(
                "matrix",
                format!("length {} is not d * dim with d in {{1, 2}}", m.len()),
            ));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(config_error("matrix", "entries must be finite"));
        }
        Ok(m)
    }

    fn epsilons(&self) -> Result<&[f64]> {
        if self.epsilon_list.is_empty() {
            return Err(config_error("epsilon_list", "must not be empty"));
        }
        for (k, e) in self.epsilon_list.iter().enumerate() {
            if !(*e > 0.0 && *e <= 1.0) {
                return Err(config_error(
                    &format!("epsilon_list[{k}]"),
                    format!("{e} is not in (0, 1]"),
                ));
            }
        }
        Ok(&self.epsilon_list)
    }

    fn sequence(&self) -> Result<SequenceSpec> {
        let generator = self
            .generator
            .clone()
            .ok_or_else(|| config_error("generator", "required for this command"))?;
        let spec = SequenceSpec {
            epsilons: self.epsilons()?.to_vec(),
            generator,
            tail_fraction: self.tail_fraction,
        };
        spec.validate().map_err(|e| at("epsilon_list", e))?;
        Ok(spec)
    }

    /// Optimizer with the global seed applied.
    pub fn resolved_optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            seed: self.seed,
            ..self.optimizer.clone()
        }
    }

    /// Checks everything the selected command needs, naming the failing key.
    pub fn validate(&self) -> Result<()> {
        let command = self.command()?;
        if !(1..=2).contains(&self.dim) {
            return Err(config_error("dim", "must be 1 or 2"));
        }
        if self.resolution < 2 {
            return Err(config_error("resolution", "must be at least 2"));
        }
        self.optimizer.validate().map_err(|e| at("optimizer", e))?;
        self.binning.validate().map_err(|e| at("binning", e))?;
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(config_error("p", "must be > 1"));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return Err(config_error("tail_fraction", "must lie in (0, 1]"));
        }
        match command {
            Command::Cell => {
                self.integrand_spec()?
                    .build()
                    .map_err(|e| at("integrand", e))?;
                self.matrix()?;
                if self.periods.is_empty() || self.periods.contains(&0) {
                    return Err(config_error(
                        "periods",
                        "must be a nonempty list of positive integers",
                    ));
                }
            }
            Command::Epsilon | Command::Gamma => {
                self.integrand_spec()?
                    .build()
                    .map_err(|e| at("integrand", e))?;
                self.matrix()?;
                self.epsilons()?;
            }
            Command::Ym => {
                self.sequence()?;
            }
            Command::Check => {
                if self.measure_path.is_none() {
                    self.sequence()?;
                }
                if !(self.fhom_lattice_spacing > 0.0) {
                    return Err(config_error("fhom_lattice_spacing", "must be positive"));
                }
            }
            Command::Examples => {}
        }
        Ok(())
    }
}

/// Written first into every output directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub command: Command,
    pub seed: u64,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub command: Command,
    pub output: PathBuf,
    pub files: Vec<String>,
    /// Pass/fail for commands with a verdict.
    pub passed: Option<bool>,
    /// Human-readable digest for the terminal.
    pub message: String,
}

/// Process exit code for an error: 2 for configuration, 3 for numerical, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::InvalidArgument(_) => 2,
        Error::NumericalFailure(_) | Error::UnderResolved(_) | Error::EmptyFeasibleSet(_) => 3,
        Error::Io(_) | Error::Json(_) | Error::Csv(_) => 1,
    }
}

struct Out {
    dir: PathBuf,
    files: Vec<String>,
}

impl Out {
    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.dir.join(name), text)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_path(self.dir.join(name))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

/// Runs a validated config and writes its artifacts.
///
/// On a numerical failure after the manifest was written, `error.json`
/// records the failure next to any partial results.
pub fn run(config: &ExperimentConfig) -> Result<RunSummary> {
    config.validate()?;
    let command = config.command()?;
    let dir = config.output.clone();
    fs::create_dir_all(&dir)?;
    let mut out = Out {
        dir: dir.clone(),
        files: vec![],
    };
    out.json(
        "manifest.json",
        &Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            seed: config.seed,
            config: config.clone(),
        },
    )?;
    info!("running `{}` into {}", command.name(), dir.display());
    let result = match command {
        Command::Cell => run_cell(config, &mut out),
        Command::Epsilon => run_epsilon(config, &mut out),
        Command::Ym => run_ym(config, &mut out),
        Command::Check => run_check(config, &mut out),
        Command::Gamma => run_gamma(config, &mut out),
        Command::Examples => run_examples(config, &mut out),
    };
    match result {
        Ok((passed, message)) => Ok(RunSummary {
            command,
            output: dir,
            files: out.files,
            passed,
            message,
        }),
        Err(e) => {
            let record = serde_json::json!({ "error": e.to_string(), "exit_code": exit_code(&e) });
            // best effort: the original error is more useful than a write failure here
            let _ = out.json("error.json", &record);
            Err(e)
        }
    }
}

type Outcome = Result<(Option<bool>, String)>;

fn run_cell(cfg: &ExperimentConfig, out: &mut Out) -> Outcome {
    let f = cfg.integrand_spec()?.build()?;
    let est = estimate_fhom(
        &f,
        cfg.matrix()?,
        cfg.dim,
        &cfg.periods,
        &[cfg.resolution],
        &cfg.resolved_optimizer(),
        DEFAULT_PLATEAU_TOLERANCE,
    )?;
    let rows: Vec<Vec<String>> = est
        .table
        .iter()
        .map(|r| {
            vec![
                r.t.to_string(),
                num(r.value),
                num(r.null_value),
                r.iterations.to_string(),
                r.converged.to_string(),
            ]
        })
        .collect();
    out.csv(
        "results.csv",
        &["T", "value", "null_value", "iterations", "converged"],
        &rows,
    )?;
    let summary = serde_json::json!({
        "integrand": f.name(),
        "matrix": est.matrix,
        "value": est.value,
        "converged": est.converged,
        "plateau_tolerance": est.plateau_tolerance,
        "upper_bound": !f.is_convex(),
        "table": est.table.iter().map(|r| serde_json::json!({
            "t": r.t, "cells_per_unit": r.cells_per_unit, "value": r.value, "null_value": r.null_value,
            "iterations": r.iterations, "converged": r.converged, "best_start": r.best_start,
        })).collect::<Vec<_>>(),
    });
    out.json("results.json", &summary)?;
    if cfg.save_fields {
        for r in &est.table {
            out.json(&format!("minimizer_T{}.json", r.t), &r.minimizer)?;
        }
    }
    Ok((
        None,
        format!("f_hom({:?}) = {:.10} ({})", est.matrix, est.value, f.name()),
    ))
}

fn run_epsilon(cfg: &ExperimentConfig, out: &mut Out) -> Outcome {
    use rayon::prelude::*;
    let f = cfg.integrand_spec()?.build()?;
    let matrix = cfg.matrix()?;
    let opt = cfg.resolved_optimizer();
    let results: Vec<_> = cfg
        .epsilons()?
        .par_iter()
        .map(|&eps| {
            let cells = (cfg.resolution as f64 / eps).round() as usize;
            (
                eps,
                cells,
                minimize_epsilon_functional(&f, eps, matrix, cfg.dim, cells, &opt),
            )
        })
        .collect();
    let mut rows = vec![];
    let mut entries = vec![];
    let mut first_err = None;
    for (eps, cells, r) in results {
        match r {
            Ok(r) => {
                rows.push(vec![
                    num(eps),
                    cells.to_string(),
                    num(r.energy),
                    num(r.null_energy),
                    r.iterations.to_string(),
                    r.converged.to_string(),
                ]);
                entries.push(serde_json::json!({
                    "epsilon": eps, "cells": cells, "energy": r.energy, "null_energy": r.null_energy,
                    "iterations": r.iterations, "converged": r.converged, "best_start": r.best_start,
                }));
                if cfg.save_fields {
                    out.json(
                        &format!("minimizer_eps{}.json", (1.0 / eps).round()),
                        &r.minimizer,
                    )?;
                }
            }
            Err(e) => {
                entries.push(
                    serde_json::json!({ "epsilon": eps, "cells": cells, "error": e.to_string() }),
                );
                first_err.get_or_insert(e);
            }
        }
    }
    out.csv(
        "results.csv",
        &[
            "epsilon",
            "cells",
            "energy",
            "null_energy",
            "iterations",
            "converged",
        ],
        &rows,
    )?;
    out.json(
        "results.json",
        &serde_json::json!({ "integrand": f.name(), "matrix": matrix, "rows": entries }),
    )?;
    match first_err {
        Some(e) => Err(e),
        None => Ok((None, format!("{} epsilon problems solved", rows.len()))),
    }
}

fn measure_summary(nu: &TwoScaleYoungMeasure) -> serde_json::Value {
    let marginal = nu.y_marginal();
    let uniform = 1.0 / marginal.len() as f64;
    let deviation = marginal
        .iter()
        .map(|m| (m / uniform - 1.0).abs())
        .fold(0.0, f64::max);
    serde_json::json!({
        "x_bins": nu.binning().x_bins,
        "y_bins": nu.binning().y_bins,
        "atoms": nu.cells().iter().map(|c| c.len()).sum::<usize>(),
        "y_marginal": marginal,
        "y_marginal_max_relative_deviation": deviation,
        "barycenters": barycenter(nu),
    })
}

fn run_ym(cfg: &ExperimentConfig, out: &mut Out) -> Outcome {
    let spec = cfg.sequence()?;
    let nu = spec.estimate(cfg.binning, cfg.p)?;
    out.json("measure.json", &nu)?;
    out.json("results.json", &measure_summary(&nu))?;
    let jy = nu.y_count();
    let rows: Vec<Vec<String>> = barycenter(&nu)
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let mut r = vec![
                (k / jy).to_string(),
                (k % jy).to_string(),
                nu.cells()[k].len().to_string(),
            ];
            r.extend(b.iter().map(|v| num(*v)));
            r
        })
        .collect();
    let width = nu.dim() * nu.components();
    let mut header = vec!["i".to_string(), "j".to_string(), "atoms".to_string()];
    header.extend((0..width).map(|k| format!("b{k}")));
    let header: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    out.csv("barycenters.csv", &header, &rows)?;
    Ok((
        None,
        format!(
            "estimated measure with {} atoms",
            nu.cells().iter().map(|c| c.len()).sum::<usize>()
        ),
    ))
}

fn characterize(
    cfg: &ExperimentConfig,
    nu: &TwoScaleYoungMeasure,
) -> Result<CharacterizationReport> {
    let dict = TestDictionary::standard(nu.dim(), nu.components(), nu.p())?;
    let dec = crate::checker::check_condition_i(nu)?;
    let grads: Vec<Vec<f64>> = (0..dec.macro_gradient.grid.cell_count())
        .map(|i| dec.macro_gradient.cell(i).to_vec())
        .collect();
    let lattice = FhomLattice::covering(&grads, cfg.fhom_lattice_spacing)?;
    let settings = FhomSettings {
        optimizer: OptimizerConfig {
            seed: cfg.seed,
            ..cfg.fhom.optimizer.clone()
        },
        ..cfg.fhom.clone()
    };
    let provider = LatticeFhom::compute(&dict, nu.dim(), lattice, settings)?;
    verify_characterization(nu, &dict, &provider, cfg.tolerances)
}

fn run_check(cfg: &ExperimentConfig, out: &mut Out) -> Outcome {
    let nu = match &cfg.measure_path {
        Some(p) => {
            let text = fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| config_error("measure_path", e.to_string()))?
        }
        None => cfg.sequence()?.estimate(cfg.binning, cfg.p)?,
    };
    let report = characterize(cfg, &nu)?;
    if cfg.save_fields {
        out.json("measure.json", &nu)?;
    }
    out.json("report.json", &report)?;
    Ok((Some(report.verdict), report.table()))
}

fn run_gamma(cfg: &ExperimentConfig, out: &mut Out) -> Outcome {
    let f = cfg.integrand_spec()?.build()?;
    let settings = GammaSettings {
        cells_per_period: cfg.resolution,
        periods: cfg.periods.clone(),
        cell_resolution: cfg.resolution,
        optimizer: cfg.resolved_optimizer(),
        ..GammaSettings::default()
    };
    let report = gamma_compare(&f, cfg.matrix()?, cfg.dim, cfg.epsilons()?, &settings)?;
    out.json("gamma.json", &report)?;
    let file = fs::File::create(out.dir.join("gamma.csv"))?;
    report.write_csv(file)?;
    out.files.push("gamma.csv".into());
    let mut msg = format!("f_hom = {:.8}\n", report.cell_value);
    for r in &report.rows {
        match (r.min_energy, r.gap) {
            (Some(e), Some(g)) => msg.push_str(&format!(
                "eps = {:<10} min F_eps = {e:.8}  gap = {g:.3e}\n",
                r.epsilon
            )),
            _ => msg.push_str(&format!(
                "eps = {:<10} failed: {}\n",
                r.epsilon,
                r.error.as_deref().unwrap_or("")
            )),
        }
    }
    if let (Some(v), Some(id)) = (report.candidate_min, &report.argmin) {
        msg.push_str(&format!("best candidate measure: {id} with energy {v:.8}"));
    }
    let failed = report.rows.iter().find_map(|r| r.error.clone());
    match failed {
        Some(e) => Err(Error::NumericalFailure(e)),
        None => Ok((Some(report.bracket_consistent), msg)),
    }
}

/// The single-scale and double-scale analytic measures used by `examples`.
pub fn example_measures(
    matrix: f64,
    binning: Binning,
    p: f64,
) -> Result<Vec<(String, TwoScaleYoungMeasure)>> {
    use std::f64::consts::PI;
    let single = analytic_example_single_scale(
        1,
        1,
        binning,
        p,
        move |_| vec![matrix],
        |_, y| vec![(2.0 * PI * y[0]).cos()],
    )?;
    let double = analytic_example_double_scale(
        1,
        1,
        binning,
        p,
        32,
        move |_| vec![matrix],
        |_, y, z| vec![(2.0 * PI * z[0]).cos() * (1.0 + 0.5 * (2.0 * PI * y[0]).sin())],
    )?;
    Ok(vec![
        ("single_scale".to_string(), single),
        ("double_scale".to_string(), double),
    ])
}

fn run_examples(cfg: &ExperimentConfig, out: &mut Out) -> Outcome {
    let matrix = match &cfg.matrix {
        Some(m) if m.len() == 1 => m[0],
        Some(_) => return Err(config_error("matrix", "examples use a scalar 1-D gradient")),
        None => 0.5,
    };
    let mut all = true;
    let mut msg = String::new();
    for (name, nu) in example_measures(matrix, cfg.binning, cfg.p)? {
        let report = characterize(cfg, &nu)?;
        all &= report.verdict;
        out.json(&format!("{name}_measure.json"), &nu)?;
        out.json(&format!("{name}_report.json"), &report)?;
        msg.push_str(&format!("== {name}\n{}", report.table()));
    }
    Ok((Some(all), msg))
}

/// Parameter of a built-in.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParameterSchema {
    pub name: &'static str,
    pub kind: &'static str,
    pub required: bool,
    pub default: Option<&'static str>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Builtin {
    pub category: &'static str,
    pub name: &'static str,
    pub parameters: Vec<ParameterSchema>,
}

const fn req(name: &'static str, kind: &'static str) -> ParameterSchema {
    ParameterSchema {
        name,
        kind,
        required: true,
        default: None,
    }
}

const fn opt(name: &'static str, kind: &'static str, default: &'static str) -> ParameterSchema {
    ParameterSchema {
        name,
        kind,
        required: false,
        default: Some(default),
    }
}

/// Static catalog of integrands, generators and dictionaries.
pub fn list_builtins() -> Vec<Builtin> {
    let b = |category, name, parameters| Builtin {
        category,
        name,
        parameters,
    };
    vec![
        b("integrand", "p_norm", vec![opt("p", "number", "2")]),
        b(
            "integrand",
            "laminate",
            vec![
                req("a", "array<number>"),
                opt("p", "number", "2"),
                opt("axis", "integer", "0"),
            ],
        ),
        b(
            "integrand",
            "modulated_laminate",
            vec![req("a", "array<number>"), opt("axis", "integer", "0")],
        ),
        b("integrand", "double_well", vec![]),
        b(
            "integrand",
            "linear_probe",
            vec![req("phi", "array<number>"), opt("p", "number", "2")],
        ),
        b(
            "integrand",
            "product",
            vec![
                req("a", "array<number>"),
                opt("axis", "integer", "0"),
                req("inner", "integrand"),
            ],
        ),
        b(
            "generator",
            "affine",
            vec![
                req("matrix", "array<number>"),
                req("dim", "integer"),
                req("cells", "integer"),
            ],
        ),
        b(
            "generator",
            "sine_corrector",
            vec![
                req("matrix", "array<number>"),
                req("dim", "integer"),
                req("cells", "integer"),
                opt("amplitude", "number", "1"),
            ],
        ),
        b(
            "generator",
            "periodic_cell",
            vec![
                req("integrand", "integrand"),
                req("matrix", "array<number>"),
                req("dim", "integer"),
                req("t", "integer"),
                req("cells_per_unit", "integer"),
                opt("optimizer", "optimizer", "{}"),
            ],
        ),
        b(
            "generator",
            "minimizer",
            vec![
                req("integrand", "integrand"),
                req("matrix", "array<number>"),
                req("dim", "integer"),
                req("cells", "integer"),
                opt("optimizer", "optimizer", "{}"),
            ],
        ),
        b("dictionary", "standard", vec![opt("p", "number", "2")]),
    ]
}
