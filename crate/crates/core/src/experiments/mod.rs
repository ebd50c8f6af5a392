//! Configuration, sweeps, result tables and verdicts for the `sqglab` CLI.
//!
//! A config is a TOML file deserialized into [`ExperimentConfig`]. Dotted
//! `key=value` overrides and sweep cells are applied to the TOML tree before
//! deserialization, so both name parameters by the same paths
//! (`params.N`, `grid.n`, `solver.t_end`, ...). Every CSV row carries the
//! SHA-256 of the resolved config.

mod runs;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ansatz::{AnsatzParams, Coupling};
use crate::error::{Result, SqgError};
use crate::norms::NormSpec;
use crate::profiles::{assemble_profiles, ProfileSet};
use crate::solver::SolverConfig;
use crate::spectral_core::Grid;

pub use runs::*;

/// Default limit on the number of cells of a cartesian sweep.
pub const DEFAULT_SWEEP_CAP: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    AnsatzNorms,
    AsymptoticsRate,
    ResidualScaling,
    Evolve,
    Inflation,
    PeriodizeCheck,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::AnsatzNorms => "ansatz-norms",
            Self::AsymptoticsRate => "asymptotics-rate",
            Self::ResidualScaling => "residual-scaling",
            Self::Evolve => "evolve",
            Self::Inflation => "inflation",
            Self::PeriodizeCheck => "periodize-check",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| SqgError::Config(format!("unknown experiment `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub l: f64,
    #[serde(default = "default_dealias")]
    pub dealias_fraction: f64,
    /// When set to `lambda_0`, the cell side becomes `l * lambda_0 / lambda`.
    #[serde(default)]
    pub lambda_scaling: Option<f64>,
    /// When set, `n` is doubled up to this value until the resolution guard passes.
    #[serde(default)]
    pub auto_n_max: Option<usize>,
}

fn default_dealias() -> f64 {
    2.0 / 3.0
}

impl GridSpec {
    pub fn grid(&self) -> Result<Grid> {
        Grid::with_dealias(self.n, self.l, self.dealias_fraction)
    }

    /// Grid for one cell: applies the lambda scaling, then the smallest
    /// admissible `n` for which `guard` passes.
    pub fn grid_for<F>(&self, lambda: f64, guard: F) -> Result<Grid>
    where
        F: Fn(&Grid) -> Result<()>,
    {
        let l = match self.lambda_scaling {
            Some(l0) => self.l * l0 / lambda,
            None => self.l,
        };
        let mut n = self.n;
        loop {
            let grid = Grid::with_dealias(n, l, self.dealias_fraction)?;
            match guard(&grid) {
                Ok(()) => return Ok(grid),
                Err(SqgError::Resolution(_)) if self.auto_n_max.is_some_and(|m| 2 * n <= m) => n *= 2,
                Err(e) => return Err(e),
            }
        }
    }
}

/// Ansatz parameters as written in a config; `T` defaults to the coupled horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub eps: f64,
    pub p: f64,
    pub beta: f64,
    #[serde(rename = "N")]
    pub n: u32,
    pub lambda: f64,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default = "default_coupling")]
    pub coupling: Coupling,
}

fn default_coupling() -> Coupling {
    Coupling::Manual
}

impl Default for ParamsSpec {
    /// The reference desk-scale set.
    fn default() -> Self {
        Self { eps: 0.5, p: 1.2, beta: 1.0, n: 32, lambda: 16.0, horizon: None, coupling: Coupling::Manual }
    }
}

impl ParamsSpec {
    pub fn build(&self) -> Result<AnsatzParams> {
        let base = match self.coupling {
            Coupling::Manual => AnsatzParams::manual(self.eps, self.p, self.beta, self.n, self.lambda)?,
            Coupling::Asymptotic => AnsatzParams::asymptotic(self.eps, self.p, self.beta, self.n)?,
        };
        match self.horizon {
            Some(t) => {
                let out = base.with_horizon(t);
                out.validate()?;
                Ok(out)
            }
            None => Ok(base),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    #[serde(default = "default_seed_amplitude")]
    pub seed_amplitude: f64,
    /// Replaces the amplitude of `g`; 0 gives the radial-only control.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_amplitude: Option<f64>,
    /// Ignore `seed_amplitude` and pick the seed with `max r|h'| = 1` on `supp g`.
    #[serde(default)]
    pub unit_shear: bool,
}

fn default_seed_amplitude() -> f64 {
    5000.0
}

impl Default for ProfileSpec {
    fn default() -> Self {
        Self { seed_amplitude: default_seed_amplitude(), g_amplitude: None, unit_shear: false }
    }
}

impl ProfileSpec {
    pub fn build(&self) -> Result<ProfileSet> {
        let seed = if self.unit_shear { unit_shear_seed()? } else { self.seed_amplitude };
        let set = assemble_profiles(seed)?;
        Ok(match self.g_amplitude {
            Some(a) => set.with_g_amplitude(a),
            None => set,
        })
    }
}

/// Seed amplitude for which `max_{supp g} r |h'(r)| = 1`.
pub fn unit_shear_seed() -> Result<f64> {
    let unit = assemble_profiles(1.0)?;
    let (a, b) = unit.g.support;
    let m = (0..=400)
        .map(|i| {
            let r = a + (b - a) * i as f64 / 400.0;
            r * unit.h.dh(r).abs()
        })
        .fold(0.0, f64::max);
    if m == 0.0 {
        return Err(SqgError::Config("h' vanishes on supp g".into()));
    }
    Ok(1.0 / m)
}

/// One sub-run of the asymptotics experiment on its own grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymptoticsRun {
    pub n: usize,
    pub l: f64,
    #[serde(rename = "N")]
    pub n_values: Vec<u32>,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
}

fn default_lambdas() -> Vec<f64> {
    vec![1.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymptoticsSpec {
    #[serde(default = "one")]
    pub s: f64,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default = "default_ks")]
    pub ks: Vec<f64>,
    #[serde(default = "one")]
    pub c_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<AsymptoticsRun>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rescaled: Option<AsymptoticsRun>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub farfield: Option<AsymptoticsRun>,
    /// Far-field radii in units of `gamma`.
    #[serde(default = "default_radii")]
    pub radii_over_gamma: Vec<f64>,
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn default_ks() -> Vec<f64> {
    vec![0.0, 1.0]
}
fn default_radii() -> Vec<f64> {
    vec![2.5, 3.2, 3.9, 4.6, 5.3, 6.0]
}

impl Default for AsymptoticsSpec {
    fn default() -> Self {
        Self {
            s: 1.0,
            p: 2.0,
            ks: default_ks(),
            c_s: 1.0,
            rate: None,
            rescaled: None,
            farfield: None,
            radii_over_gamma: default_radii(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualSpec {
    #[serde(default)]
    pub t: f64,
    /// Grid size of the transport-identity check at the base parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport_n: Option<usize>,
}

impl Default for ResidualSpec {
    fn default() -> Self {
        Self { t: 0.0, transport_n: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnapshotMode {
    None,
    Ends,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialData {
    Random,
    Ansatz,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveSpec {
    #[serde(default = "default_initial")]
    pub initial: InitialData,
    /// Random data: modes with `1 <= |m| <= modes`.
    #[serde(default = "default_modes")]
    pub modes: u32,
    /// Random data: target `max |theta|`.
    #[serde(default = "one")]
    pub amplitude: f64,
    /// Step-refinement study: base step and end time.
    #[serde(default = "default_rich_dt")]
    pub richardson_dt: f64,
    #[serde(default = "default_rich_t")]
    pub richardson_t_end: f64,
    #[serde(default = "default_snapshots_all")]
    pub snapshots: SnapshotMode,
}

fn default_initial() -> InitialData {
    InitialData::Random
}
fn default_modes() -> u32 {
    6
}
fn default_rich_dt() -> f64 {
    0.02
}
fn default_rich_t() -> f64 {
    0.4
}
fn default_snapshots_all() -> SnapshotMode {
    SnapshotMode::All
}
fn default_snapshots_ends() -> SnapshotMode {
    SnapshotMode::Ends
}

impl Default for EvolveSpec {
    fn default() -> Self {
        Self {
            initial: default_initial(),
            modes: default_modes(),
            amplitude: 1.0,
            richardson_dt: default_rich_dt(),
            richardson_t_end: default_rich_t(),
            snapshots: SnapshotMode::All,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InflationSpec {
    /// Also run the radial-only control (`g = 0`).
    #[serde(default = "yes")]
    pub control: bool,
    #[serde(default = "default_snapshots_ends")]
    pub snapshots: SnapshotMode,
}

fn yes() -> bool {
    true
}

impl Default for InflationSpec {
    fn default() -> Self {
        Self { control: true, snapshots: SnapshotMode::Ends }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodizeSpec {
    #[serde(default = "default_pad")]
    pub pad: usize,
    #[serde(default)]
    pub t: f64,
    /// Sweep cell whose relative correction is checked against the bound.
    #[serde(default = "default_ref_lambda")]
    pub reference_lambda: f64,
}

fn default_pad() -> usize {
    4
}
fn default_ref_lambda() -> f64 {
    16.0
}

impl Default for PeriodizeSpec {
    fn default() -> Self {
        Self { pad: 4, t: 0.0, reference_lambda: 16.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_cap")]
    pub sweep_cap: usize,
    /// Run sweep cells on the worker pool; off keeps peak memory to one cell.
    #[serde(default = "yes")]
    pub parallel_cells: bool,
    pub grid: GridSpec,
    #[serde(default)]
    pub params: ParamsSpec,
    #[serde(default)]
    pub profiles: ProfileSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
    /// Dotted parameter path to the list of values it takes.
    #[serde(default)]
    pub sweeps: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub norm_specs: Vec<NormSpec>,
    #[serde(default)]
    pub asymptotics: AsymptoticsSpec,
    #[serde(default)]
    pub residual: ResidualSpec,
    #[serde(default)]
    pub evolve: EvolveSpec,
    #[serde(default)]
    pub inflation: InflationSpec,
    #[serde(default)]
    pub periodize: PeriodizeSpec,
}

fn default_cap() -> usize {
    DEFAULT_SWEEP_CAP
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut tree: toml::Table = toml::from_str(text).map_err(|e| SqgError::Config(e.to_string()))?;
        for o in overrides {
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| SqgError::Config(format!("override `{o}` is not key=value")))?;
            set_path(&mut tree, key.trim(), parse_value(value.trim()))?;
        }
        let cfg: Self = toml::Value::Table(tree).try_into().map_err(|e: toml::de::Error| SqgError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.grid()?;
        self.params.build()?;
        for spec in &self.norm_specs {
            spec.validate()?;
        }
        if let Some(s) = &self.solver {
            s.validate()?;
        }
        let cells: usize = self.sweeps.values().map(|v| v.len().max(1)).product();
        if cells > self.sweep_cap {
            return Err(SqgError::Config(format!("sweep has {cells} cells, cap is {}", self.sweep_cap)));
        }
        if let Some((k, _)) = self.sweeps.iter().find(|(_, v)| v.is_empty()) {
            return Err(SqgError::Config(format!("sweep `{k}` has no values")));
        }
        Ok(())
    }

    /// SHA-256 (hex) of the canonical JSON form of the resolved config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Cartesian product of the sweeps, in key order with the last key
    /// varying fastest. Each cell is the config with the sweep applied and
    /// `sweeps` cleared.
    pub fn cells(&self) -> Result<Vec<(BTreeMap<String, f64>, ExperimentConfig)>> {
        let keys: Vec<&String> = self.sweeps.keys().collect();
        let mut assignments: Vec<BTreeMap<String, f64>> = vec![BTreeMap::new()];
        for key in &keys {
            let mut next = Vec::new();
            for a in &assignments {
                for v in &self.sweeps[*key] {
                    let mut b = a.clone();
                    b.insert((*key).clone(), *v);
                    next.push(b);
                }
            }
            assignments = next;
        }
        let mut base = self.clone();
        base.sweeps.clear();
        let base_tree = match toml::Value::try_from(&base).map_err(|e| SqgError::Config(e.to_string()))? {
            toml::Value::Table(t) => t,
            _ => unreachable!("a struct serializes to a table"),
        };
        assignments
            .into_iter()
            .map(|a| {
                let mut tree = base_tree.clone();
                for (k, v) in &a {
                    set_path(&mut tree, k, toml::Value::Float(*v))?;
                }
                let cfg: ExperimentConfig = toml::Value::Table(tree)
                    .try_into()
                    .map_err(|e: toml::de::Error| SqgError::Config(format!("sweep {a:?}: {e}")))?;
                Ok((a, cfg))
            })
            .collect()
    }

    pub fn solver(&self) -> Result<SolverConfig> {
        self.solver.ok_or_else(|| SqgError::Config(format!("{} needs a [solver] table", self.experiment.name())))
    }
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets `a.b.c = value` inside existing tables. Numbers are coerced to the
/// type already stored at the path so that `N = 32.0` stays an integer.
fn set_path(tree: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = path.split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut node = tree;
    for p in parents {
        node = match node.get_mut(*p) {
            Some(toml::Value::Table(t)) => t,
            _ => return Err(SqgError::Config(format!("`{path}`: no table `{p}` in the config"))),
        };
    }
    let value = match (node.get(*last), value) {
        (Some(toml::Value::Integer(_)), toml::Value::Float(f)) => {
            if f.fract() != 0.0 {
                return Err(SqgError::Config(format!("`{path}` is an integer, got {f}")));
            }
            toml::Value::Integer(f as i64)
        }
        (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
        (_, v) => v,
    };
    node.insert((*last).to_string(), value);
    Ok(())
}

/// One checked quantity. `criterion` is the acceptance identifier (`C1`..`C11`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub criterion: String,
    pub name: String,
    pub measured: Option<f64>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Verdict {
    /// Pass iff `lo <= measured <= hi` (missing bounds are open).
    pub fn within(criterion: &str, name: &str, measured: f64, lo: Option<f64>, hi: Option<f64>) -> Self {
        let pass = measured.is_finite() && lo.is_none_or(|l| measured >= l) && hi.is_none_or(|h| measured <= h);
        Self {
            criterion: criterion.into(),
            name: name.into(),
            measured: Some(measured).filter(|v| v.is_finite()),
            lo,
            hi,
            pass,
            note: None,
        }
    }

    /// `|measured - target| <= tol`.
    pub fn near(criterion: &str, name: &str, measured: f64, target: f64, tol: f64) -> Self {
        Self::within(criterion, name, measured, Some(target - tol), Some(target + tol))
    }

    /// A criterion that could not be measured.
    pub fn failed(criterion: &str, name: &str, err: &SqgError) -> Self {
        Self {
            criterion: criterion.into(),
            name: name.into(),
            measured: None,
            lo: None,
            hi: None,
            pass: false,
            note: Some(err.to_string()),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn line(&self) -> String {
        let bound = match (self.lo, self.hi) {
            (Some(l), Some(h)) => format!("in [{l:.4e}, {h:.4e}]"),
            (Some(l), None) => format!(">= {l:.4e}"),
            (None, Some(h)) => format!("<= {h:.4e}"),
            (None, None) => String::new(),
        };
        let measured = self.measured.map_or("n/a".to_string(), |v| format!("{v:.6e}"));
        let mut s = format!(
            "{} {} {}: measured {} {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.criterion,
            self.name,
            measured,
            bound
        );
        if let Some(n) = &self.note {
            s.push_str(&format!(" ({n})"));
        }
        s
    }
}

/// A CSV artifact: header plus rows, written with the config hash in front.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path, config_hash: &str) -> Result<PathBuf> {
        let path = dir.join(format!("{}.csv", self.name));
        let mut w = csv::Writer::from_path(&path)?;
        let mut header = vec!["config_hash".to_string()];
        header.extend(self.header.iter().cloned());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut r = vec![config_hash.to_string()];
            r.extend(row.iter().cloned());
            w.write_record(&r)?;
        }
        w.flush()?;
        Ok(path)
    }
}

/// Shortest round-trip decimal form; stable across runs and platforms.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

/// Outcome of one experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub experiment: String,
    pub config_hash: String,
    pub tables: Vec<PathBuf>,
    pub verdicts: Vec<Verdict>,
}

impl RunReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

/// Results of a run before they are written out.
#[derive(Debug, Default)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub verdicts: Vec<Verdict>,
    /// Binary snapshots `(file stem, field, time)`.
    pub snapshots: Vec<(String, crate::spectral_core::PhysicalField, f64)>,
}

/// Runs the configured experiment without touching the filesystem.
pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome> {
    match cfg.experiment {
        ExperimentKind::AnsatzNorms => run_ansatz_norms(cfg),
        ExperimentKind::AsymptoticsRate => run_asymptotics_rate(cfg),
        ExperimentKind::ResidualScaling => run_residual_scaling(cfg),
        ExperimentKind::Evolve => run_evolve(cfg),
        ExperimentKind::Inflation => run_inflation(cfg),
        ExperimentKind::PeriodizeCheck => run_periodize_check(cfg),
    }
}

/// Runs the experiment and writes tables, snapshots, `verdicts.csv` and
/// `report.json` into `out`.
pub fn run_to_dir(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    let outcome = execute(cfg)?;
    write_outcome(cfg, &outcome, out)
}

pub fn write_outcome(cfg: &ExperimentConfig, outcome: &Outcome, out: &Path) -> Result<RunReport> {
    fs::create_dir_all(out)?;
    let hash = cfg.hash();
    let mut tables = Vec::new();
    for t in &outcome.tables {
        tables.push(t.write(out, &hash)?);
    }
    let mut vt = Table::new("verdicts", &["criterion", "name", "measured", "lo", "hi", "pass", "note"]);
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    for v in &outcome.verdicts {
        vt.push(vec![
            v.criterion.clone(),
            v.name.clone(),
            opt(v.measured),
            opt(v.lo),
            opt(v.hi),
            v.pass.to_string(),
            v.note.clone().unwrap_or_default(),
        ]);
    }
    tables.push(vt.write(out, &hash)?);
    if !outcome.snapshots.is_empty() {
        let dir = out.join("snapshots");
        fs::create_dir_all(&dir)?;
        for (stem, field, t) in &outcome.snapshots {
            let path = dir.join(format!("{stem}.sqgf"));
            crate::spectral_core::write_snapshot(&path, field, *t)?;
            tables.push(path);
        }
    }
    let report = RunReport {
        experiment: cfg.experiment.name().into(),
        config_hash: hash,
        tables,
        verdicts: outcome.verdicts.clone(),
    };
    fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

/// Frozen verdict values of one canned config.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Baseline {
    pub config: String,
    pub config_hash: String,
    pub entries: Vec<BaselineEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BaselineEntry {
    pub criterion: String,
    pub name: String,
    pub value: Option<f64>,
    pub pass: bool,
    /// Allowed relative drift of `value`.
    pub rel_tol: f64,
}

/// Relative drift allowed by freshly frozen baselines.
pub const BASELINE_REL_TOL: f64 = 1e-9;

impl Baseline {
    pub fn freeze(config: &str, report: &RunReport) -> Self {
        Self {
            config: config.into(),
            config_hash: report.config_hash.clone(),
            entries: report
                .verdicts
                .iter()
                .map(|v| BaselineEntry {
                    criterion: v.criterion.clone(),
                    name: v.name.clone(),
                    value: v.measured,
                    pass: v.pass,
                    rel_tol: BASELINE_REL_TOL,
                })
                .collect(),
        }
    }

    /// Human-readable regressions of `report` against this baseline.
    pub fn compare(&self, report: &RunReport) -> Vec<String> {
        let mut out = Vec::new();
        if report.config_hash != self.config_hash {
            out.push(format!("{}: config hash changed", self.config));
        }
        for e in &self.entries {
            let Some(v) = report.verdicts.iter().find(|v| v.criterion == e.criterion && v.name == e.name) else {
                out.push(format!("{} {} {}: verdict missing", self.config, e.criterion, e.name));
                continue;
            };
            let drift = match (e.value, v.measured) {
                (Some(b), Some(m)) => (m - b).abs() > e.rel_tol * b.abs().max(f64::MIN_POSITIVE),
                (None, None) => false,
                _ => true,
            };
            if drift || v.pass != e.pass {
                out.push(format!(
                    "{} {} {}: baseline {:?} ({}), now {:?} ({})",
                    self.config,
                    e.criterion,
                    e.name,
                    e.value,
                    if e.pass { "pass" } else { "fail" },
                    v.measured,
                    if v.pass { "pass" } else { "fail" }
                ));
            }
        }
        for v in &report.verdicts {
            if !self.entries.iter().any(|e| e.criterion == v.criterion && e.name == v.name) {
                out.push(format!("{} {} {}: not in baseline", self.config, v.criterion, v.name));
            }
        }
        out
    }
}

/// Summary of a regression pass over a config directory.
#[derive(Debug, Default)]
pub struct RegressionSummary {
    pub configs: Vec<String>,
    pub regressions: Vec<String>,
    pub frozen: Vec<PathBuf>,
}

/// Canned configs (`*.toml`) of `dir`, sorted by name.
pub fn canned_configs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    out.sort();
    Ok(out)
}

/// Runs every canned config of `dir` and compares against
/// `dir/baselines/<stem>.json`; with `freeze`, writes the baselines instead.
pub fn run_all_regression(dir: &Path, out: &Path, freeze: bool) -> Result<RegressionSummary> {
    let mut summary = RegressionSummary::default();
    let base_dir = dir.join("baselines");
    let configs = canned_configs(dir)?;
    if !freeze {
        for path in &configs {
            let b = baseline_path(&base_dir, path);
            if !b.exists() {
                return Err(SqgError::MissingBaseline { path: b.display().to_string() });
            }
        }
    }
    for path in configs {
        let stem = path.file_stem().expect("toml file has a stem").to_string_lossy().to_string();
        let cfg = ExperimentConfig::load(&path, &[])?;
        let report = run_to_dir(&cfg, &out.join(&stem))?;
        let b = baseline_path(&base_dir, &path);
        if freeze {
            fs::create_dir_all(&base_dir)?;
            let name = path.file_name().expect("has name").to_string_lossy().to_string();
            fs::write(&b, serde_json::to_string_pretty(&Baseline::freeze(&name, &report))?)?;
            summary.frozen.push(b);
        } else {
            let baseline: Baseline = serde_json::from_str(&fs::read_to_string(&b)?)?;
            summary.regressions.extend(baseline.compare(&report));
        }
        summary.configs.push(stem);
    }
    Ok(summary)
}

fn baseline_path(base_dir: &Path, config: &Path) -> PathBuf {
    let stem = config.file_stem().expect("toml file has a stem").to_string_lossy().to_string();
    base_dir.join(format!("{stem}.json"))
}
