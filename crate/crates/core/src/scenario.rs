//! Scenario files, solver runs, ε-families and lab case sets.
//!
//! A scenario is one TOML file. It may name a defaults file with
//! `extends = "<path>"` (relative to the scenario); tables are merged key by
//! key, except that a table carrying a `kind` tag replaces its counterpart
//! whole. After merging every field must be present.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::dynamics::{
    self, DiagnosticsConfig, DiagnosticsRecord, DynamicsError, EvolutionConfig, InitialData, StateBundle,
    UnimodularMatrix,
};
use crate::grid::{make_grid, Grid};
use crate::lab::{self, AprioriReport, AprioriSample, LabCase, LabError, RatioReport};
use crate::lagrangian::{self, FlowMap, Interpolation, LagrangianError};
use crate::par;
use crate::vorticity;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(String),
    #[error("inadmissible parameters: {0}")]
    Inadmissible(String),
    #[error("numerical abort: {0}")]
    NonFinite(String),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{0}")]
    Numerics(String),
}

impl RunError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Inadmissible(_) => 3,
            RunError::NonFinite(_) => 4,
            _ => 1,
        }
    }
}

impl From<DynamicsError> for RunError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::NonFinite { .. } => RunError::NonFinite(e.to_string()),
            DynamicsError::CflViolation { .. } => RunError::Numerics(e.to_string()),
            _ => RunError::Inadmissible(e.to_string()),
        }
    }
}

impl From<LabError> for RunError {
    fn from(e: LabError) -> Self {
        match e {
            LabError::InadmissibleParameters(m) => RunError::Inadmissible(m),
            LabError::Grid(g) => RunError::Inadmissible(g.to_string()),
            other => RunError::Numerics(other.to_string()),
        }
    }
}

impl From<LagrangianError> for RunError {
    fn from(e: LagrangianError) -> Self {
        match e {
            LagrangianError::Dynamics(d) => d.into(),
            LagrangianError::MapLeftDomainProxy { .. } | LagrangianError::InversionDiverged { .. } => {
                RunError::NonFinite(e.to_string())
            }
            LagrangianError::Grid(g) => RunError::Inadmissible(g.to_string()),
            other => RunError::Inadmissible(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub n: usize,
    pub period: f64,
}

/// Lagrangian map tracked alongside the solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowMapSpec {
    pub interpolation: Interpolation,
}

/// Exponents of the monitored a priori integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AprioriSpec {
    pub r: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub grid: GridSpec,
    /// Rows of the constant matrix `A`.
    pub matrix: Vec<Vec<f64>>,
    pub initial: InitialData,
    pub evolution: EvolutionConfig,
    pub diagnostics: DiagnosticsConfig,
    pub flow_map: Option<FlowMapSpec>,
    pub apriori: Option<AprioriSpec>,
    pub lab: Vec<LabCase>,
    pub output: OutputSpec,
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if !o.contains_key("kind") => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn read_table(path: &Path, depth: usize) -> Result<toml::Table, RunError> {
    if depth > 8 {
        return Err(RunError::Config(format!("{}: extends chain too deep", path.display())));
    }
    let text = fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
    let mut table: toml::Table =
        toml::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
    match table.remove("extends") {
        None => Ok(table),
        Some(toml::Value::String(rel)) => {
            let base_path = path.parent().unwrap_or(Path::new(".")).join(rel);
            let mut base = read_table(&base_path, depth + 1)?;
            merge(&mut base, table);
            Ok(base)
        }
        Some(_) => Err(RunError::Config(format!("{}: extends must be a path string", path.display()))),
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, RunError> {
        toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))
    }

    /// Reads a scenario, resolving `extends`.
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let table = read_table(path, 0)?;
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| RunError::Config(format!("{}: {e}", path.display())))
    }

    pub fn grid(&self) -> Result<Grid, RunError> {
        make_grid(self.grid.dim, self.grid.n, self.grid.period).map_err(|e| RunError::Inadmissible(e.to_string()))
    }

    pub fn matrix(&self) -> Result<UnimodularMatrix, RunError> {
        Ok(UnimodularMatrix::from_rows(&self.matrix)?)
    }

    /// Checks every parameter before any compute.
    pub fn validate(&self) -> Result<(), RunError> {
        let grid = self.grid()?;
        if self.matrix()?.dim() != grid.dim() {
            return Err(RunError::Inadmissible("matrix dimension differs from grid".into()));
        }
        self.evolution.validate()?;
        for &s in &self.diagnostics.sobolev {
            if !s.is_finite() {
                return Err(RunError::Inadmissible(format!("Sobolev index {s} is not finite")));
            }
        }
        for b in &self.diagnostics.besov {
            if !b.r.is_finite() || b.p.is_nan() || b.p < 1.0 {
                return Err(RunError::Inadmissible(format!("Besov parameters r = {}, p = {}", b.r, b.p)));
            }
        }
        if let Some(a) = &self.apriori {
            let dp = lab::param_check(grid.dim(), a.r, a.p, None)?;
            dp.require_apriori()?;
        }
        for c in &self.lab {
            c.validate()?;
        }
        Ok(())
    }
}

fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn p_label(p: f64) -> String {
    if p.is_infinite() {
        "inf".to_string()
    } else {
        format!("{p}")
    }
}

/// Diagnostics CSV header for a configuration.
pub fn csv_columns(diag: &DiagnosticsConfig) -> Vec<String> {
    let mut cols: Vec<String> = ["t", "energy", "q_ab", "div_res", "sup_gradV"].iter().map(|s| s.to_string()).collect();
    cols.extend(diag.sobolev.iter().map(|s| format!("Hs[{s}]")));
    cols.extend(diag.besov.iter().map(|b| format!("besov[{},{}]", b.r, p_label(b.p))));
    cols
}

fn csv_row(rec: &DiagnosticsRecord) -> String {
    let mut v = vec![
        fmt_num(rec.t),
        fmt_num(rec.energy),
        fmt_num(rec.q_ab),
        fmt_num(rec.div_res),
        fmt_num(rec.sup_grad_v),
    ];
    v.extend(rec.sobolev.iter().map(|(_, x)| fmt_num(*x)));
    v.extend(rec.besov.iter().map(|(_, x)| fmt_num(*x)));
    v.join(",")
}

fn diagnostics_schema(sc: &Scenario) -> serde_json::Value {
    let mut cols = vec![
        json!({"name": "t", "unit": "time", "definition": "simulation time"}),
        json!({"name": "energy", "unit": "energy", "definition": "½ Σ_fields ‖f‖²_{L²} over v and u_a"}),
        json!({"name": "q_ab", "unit": "1/length", "definition": "L² norm of q^i_ab = v_a^k ∂_k v_b^i − v_b^k ∂_k v_a^i, v_a = A_a + u_a, summed over a < b"}),
        json!({"name": "div_res", "unit": "1/time", "definition": "max over v, u_a of the L² norm of the spectral divergence"}),
        json!({"name": "sup_gradV", "unit": "1/time", "definition": "max over components of v and u_a of sup_x |∂_k f^i|"}),
    ];
    for s in &sc.diagnostics.sobolev {
        cols.push(json!({
            "name": format!("Hs[{s}]"),
            "unit": "H^s norm",
            "definition": format!("(Σ_fields Σ_k (1+|k|²)^{s} |f̂(k)|² L^d)^(1/2) over v and u_a"),
        }));
    }
    for b in &sc.diagnostics.besov {
        cols.push(json!({
            "name": format!("besov[{},{}]", b.r, p_label(b.p)),
            "unit": "homogeneous Besov norm",
            "definition": format!(
                "‖Ω‖ in B^{}_{{{},{}}} (homogeneous, Littlewood–Paley blocks, pointwise Euclidean magnitude over ω^mn and ω_a^mn)",
                b.r, p_label(b.p), p_label(b.p)
            ),
        }));
    }
    json!({
        "file": "diagnostics.csv",
        "scenario": sc.name,
        "grid": {"dim": sc.grid.dim, "n": sc.grid.n, "period": sc.grid.period},
        "float_format": "{:.16e}",
        "columns": cols,
    })
}

fn lab_schema() -> serde_json::Value {
    json!({
        "id": "case identifier",
        "params": "case parameters and exact derived quantities (exponents, homogeneity and scaling defects)",
        "samples": [{"seed": "corpus seed", "lhs": "left side", "rhs": "right side without constant", "ratio": "lhs / rhs, 0 when lhs = 0"}],
        "max_ratio": "max over samples of ratio",
        "refinement_slope": "riesz, kato-ponce: log2(max_ratio at 2n / max_ratio at n); strichartz: least-squares slope of log max_ratio against log T; mollifier: null",
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| RunError::Numerics(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Writes lab reports as `<dir>/<id>.json` plus `<dir>/schema.json`.
pub fn write_lab_reports(dir: &Path, reports: &[RatioReport]) -> Result<Vec<PathBuf>, RunError> {
    fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for r in reports {
        let p = dir.join(format!("{}.json", r.id));
        write_json(&p, r)?;
        out.push(p);
    }
    let p = dir.join("schema.json");
    write_json(&p, &lab_schema())?;
    out.push(p);
    Ok(out)
}

fn run_lab_cases(cases: &[LabCase]) -> Result<Vec<RatioReport>, RunError> {
    par::map(cases, |c| c.run()).into_iter().map(|r| r.map_err(RunError::from)).collect()
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub steps: usize,
    pub records: Vec<DiagnosticsRecord>,
    pub apriori: Option<AprioriReport>,
    pub lab: Vec<RatioReport>,
    pub final_state: StateBundle,
    pub flow_map: Option<FlowMap>,
    pub artifacts: Vec<PathBuf>,
}

struct Monitor<'a> {
    sc: &'a Scenario,
    csv: BufWriter<File>,
    records: Vec<DiagnosticsRecord>,
    apriori: Vec<AprioriSample>,
}

impl Monitor<'_> {
    fn record(&mut self, state: &StateBundle) -> Result<(), RunError> {
        let (_, rec) = dynamics::monitor(state, &self.sc.diagnostics);
        writeln!(self.csv, "{}", csv_row(&rec))?;
        if let Some(a) = &self.sc.apriori {
            let om = vorticity::curl(state);
            self.apriori.push(AprioriSample {
                t: state.t,
                sup_grad_v: rec.sup_grad_v,
                sup_omega: om.sup_norm(),
                omega_besov: om.besov_norm(a.r, a.p),
            });
        }
        self.records.push(rec);
        Ok(())
    }
}

/// Runs a validated scenario into `out_dir`. On a numerical abort the
/// diagnostics so far and a `partial.nhsp` checkpoint of the last finite
/// state are left behind.
pub fn run(sc: &Scenario, out_dir: &Path) -> Result<RunSummary, RunError> {
    sc.validate()?;
    let grid = sc.grid()?;
    let a = sc.matrix()?;
    fs::create_dir_all(out_dir)?;
    let mut artifacts = Vec::new();

    let schema_path = out_dir.join("diagnostics.schema.json");
    write_json(&schema_path, &diagnostics_schema(sc))?;
    artifacts.push(schema_path);
    let csv_path = out_dir.join("diagnostics.csv");
    let mut csv = BufWriter::new(File::create(&csv_path)?);
    writeln!(csv, "{}", csv_columns(&sc.diagnostics).join(","))?;
    artifacts.push(csv_path);

    let cfg = &sc.evolution;
    let mut state = dynamics::make_initial_data(&grid, &sc.initial, a.clone(), cfg.eps, cfg.dealias)?;
    let interp = sc.flow_map.as_ref().map(|f| f.interpolation);
    let mut map = match (&sc.flow_map, &sc.initial) {
        (None, _) => None,
        (Some(_), InitialData::Deformation { shears, .. }) => Some(FlowMap::from_deformation(
            &grid,
            &crate::deformation::Deformation { shears: shears.clone() },
        )?),
        (Some(_), _) => Some(FlowMap::identity(&grid, a)),
    };
    let mut mon = Monitor {
        sc,
        csv,
        records: Vec::new(),
        apriori: Vec::new(),
    };
    mon.record(&state)?;

    let steps = cfg.steps();
    let mut warned = false;
    for k in 1..=steps {
        if !warned {
            if let Err(e) = dynamics::check_cfl(&state, cfg) {
                log::warn!("{e}");
                warned = true;
            }
        }
        let next = match (&map, interp) {
            (Some(m), Some(kind)) => lagrangian::coupled_step(&state, m, cfg, kind).map(|(s, m)| (s, Some(m))),
            _ => dynamics::step(&state, cfg).map(|s| (s, None)).map_err(LagrangianError::from),
        };
        let next = next.and_then(|(s, m)| {
            if s.is_finite() {
                Ok((s, m))
            } else {
                Err(DynamicsError::NonFinite {
                    t: s.t,
                    reason: "non-finite coefficient".into(),
                }
                .into())
            }
        });
        match next {
            Ok((s, m)) => {
                state = s;
                if m.is_some() {
                    map = m;
                }
            }
            Err(e) => {
                let err = RunError::from(e);
                mon.csv.flush()?;
                let p = out_dir.join("partial.nhsp");
                Checkpoint::from_state(&state).save(&p)?;
                if let Some(m) = &map {
                    Checkpoint::from_flow_map(m).save(&out_dir.join("partial-flowmap.nhsp"))?;
                }
                log::error!("aborted at step {k}: {err}; partial artifacts in {}", out_dir.display());
                return Err(err);
            }
        }
        if k % cfg.diagnostics_every == 0 || k == steps {
            mon.record(&state)?;
        }
    }
    mon.csv.flush()?;

    let p = out_dir.join("final.nhsp");
    Checkpoint::from_state(&state).save(&p)?;
    artifacts.push(p);
    if let Some(m) = &map {
        let p = out_dir.join("flowmap.nhsp");
        Checkpoint::from_flow_map(m).save(&p)?;
        artifacts.push(p);
    }
    let apriori = match &sc.apriori {
        Some(a) => {
            let dp = lab::param_check(grid.dim(), a.r, a.p, None)?;
            let rep = lab::check_apriori_chain(&mon.apriori, &dp);
            let p = out_dir.join("apriori.json");
            write_json(
                &p,
                &json!({
                    "params": dp,
                    "samples": mon.apriori,
                    "report": rep,
                    "definitions": {
                        "besov_integral": if grid.dim() == 2 {
                            "(∫ max(1, {Ω}_r)^(8/(r+2)) dt)^(1/4)"
                        } else {
                            "(∫ {Ω}_{r,p}^(2p/(p-2)) dt)^((p-2)/(2p))"
                        },
                        "sup_integral": "∫ ‖∇V‖_∞^q + ‖Ω‖_∞^q dt with q = sup_exponent",
                    },
                }),
            )?;
            artifacts.push(p);
            Some(rep)
        }
        None => None,
    };
    let lab = run_lab_cases(&sc.lab)?;
    if !lab.is_empty() {
        artifacts.extend(write_lab_reports(&out_dir.join("lab"), &lab)?);
    }
    Ok(RunSummary {
        steps,
        records: mon.records,
        apriori,
        lab,
        final_state: state,
        flow_map: map,
        artifacts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsRow {
    pub eps: f64,
    pub eps_next: f64,
    pub s: f64,
    /// `sup_t ‖V^ε − V^{ε'}‖_{H^s}`.
    pub sup_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsTable {
    pub rows: Vec<EpsRow>,
}

impl EpsTable {
    /// Differences for index `s`, ordered by decreasing ε.
    pub fn column(&self, s: f64) -> Vec<f64> {
        self.rows.iter().filter(|r| r.s == s).map(|r| r.sup_diff).collect()
    }

    /// Whether every column decreases strictly as ε decreases.
    pub fn strictly_decreasing(&self) -> bool {
        let mut ss: Vec<f64> = self.rows.iter().map(|r| r.s).collect();
        ss.dedup();
        ss.iter().all(|&s| self.column(s).windows(2).all(|w| w[1] < w[0]))
    }
}

/// Runs the scenario for each `ε` in lockstep and tabulates
/// `sup_t ‖V^{ε_i} − V^{ε_{i+1}}‖_{H^s}` for every `s` in the scenario's
/// Sobolev diagnostics. Writes `eps_family.csv` and its schema.
pub fn eps_family(sc: &Scenario, eps: &[f64], out_dir: &Path) -> Result<EpsTable, RunError> {
    sc.validate()?;
    if eps.len() < 3 {
        return Err(RunError::Inadmissible("need at least three ε values".into()));
    }
    if eps.iter().any(|&e| !(e > 0.0)) || eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(RunError::Inadmissible("ε values must be positive and strictly decreasing".into()));
    }
    if sc.diagnostics.sobolev.is_empty() {
        return Err(RunError::Inadmissible("ε-family needs at least one Sobolev index in diagnostics".into()));
    }
    let grid = sc.grid()?;
    let a = sc.matrix()?;
    let cfgs: Vec<EvolutionConfig> = eps
        .iter()
        .map(|&e| EvolutionConfig { eps: e, ..sc.evolution.clone() })
        .collect();
    let mut members = par::map(&cfgs, |c| dynamics::make_initial_data(&grid, &sc.initial, a.clone(), c.eps, c.dealias))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let ss = &sc.diagnostics.sobolev;
    let mut sup = vec![0.0f64; (eps.len() - 1) * ss.len()];
    let mut measure = |m: &[StateBundle]| {
        for i in 0..eps.len() - 1 {
            for (j, &s) in ss.iter().enumerate() {
                let d = m[i].sobolev_distance(&m[i + 1], s);
                let slot = &mut sup[i * ss.len() + j];
                *slot = slot.max(d);
            }
        }
    };
    measure(&members);
    let steps = sc.evolution.steps();
    for k in 1..=steps {
        members = par::map_range(members.len(), |i| dynamics::step(&members[i], &cfgs[i]))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        if members.iter().any(|m| !m.is_finite()) {
            return Err(RunError::NonFinite(format!("ε-family member non-finite at step {k}")));
        }
        if k % sc.evolution.diagnostics_every == 0 || k == steps {
            measure(&members);
        }
    }
    let rows: Vec<EpsRow> = ss
        .iter()
        .enumerate()
        .flat_map(|(j, &s)| {
            let sup = &sup;
            (0..eps.len() - 1).map(move |i| EpsRow {
                eps: eps[i],
                eps_next: eps[i + 1],
                s,
                sup_diff: sup[i * ss.len() + j],
            })
        })
        .collect();
    fs::create_dir_all(out_dir)?;
    let mut w = BufWriter::new(File::create(out_dir.join("eps_family.csv"))?);
    writeln!(w, "eps,eps_next,s,sup_diff")?;
    for r in &rows {
        writeln!(w, "{},{},{},{}", fmt_num(r.eps), fmt_num(r.eps_next), fmt_num(r.s), fmt_num(r.sup_diff))?;
    }
    w.flush()?;
    write_json(
        &out_dir.join("eps_family.schema.json"),
        &json!({
            "file": "eps_family.csv",
            "scenario": sc.name,
            "columns": [
                {"name": "eps", "unit": "length", "definition": "mollifier scale of member i"},
                {"name": "eps_next", "unit": "length", "definition": "mollifier scale of member i+1"},
                {"name": "s", "unit": "dimensionless", "definition": "Sobolev index"},
                {"name": "sup_diff", "unit": "H^s norm", "definition": "max over diagnostic times of ‖V^eps − V^eps_next‖_{H^s} over v and u_a"},
            ],
        }),
    )?;
    Ok(EpsTable { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSet {
    pub name: String,
    pub output: OutputSpec,
    pub case: Vec<LabCase>,
}

impl CaseSet {
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let table = read_table(path, 0)?;
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| RunError::Config(format!("{}: {e}", path.display())))
    }
}

/// Validates every case, then runs them all and writes their reports.
pub fn run_lab(set: &CaseSet, out_dir: &Path) -> Result<Vec<RatioReport>, RunError> {
    for c in &set.case {
        c.validate()?;
    }
    let reports = run_lab_cases(&set.case)?;
    write_lab_reports(out_dir, &reports)?;
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
name = "t"
matrix = [[1.0, 0.0], [0.0, 1.0]]
lab = []
[grid]
dim = 2
n = 16
period = 6.283185307179586
[initial]
kind = "taylor-green"
amplitude = 1.0
[evolution]
eps = 0.01
dt = 0.01
t_end = 0.05
dealias = true
diagnostics_every = 1
cfl = 1.0
[diagnostics]
sobolev = [1.0]
besov = [{ r = 0.25, p = inf }]
[output]
dir = "out"
"#;

    #[test]
    fn parses_and_rejects_unknown_keys() {
        let sc = Scenario::from_toml_str(BASE).unwrap();
        assert_eq!(sc.grid.n, 16);
        assert!(sc.diagnostics.besov[0].p.is_infinite());
        let bad = BASE.replace("cfl = 1.0", "cfl = 1.0\nbogus = 3");
        assert_eq!(Scenario::from_toml_str(&bad).unwrap_err().exit_code(), 2);
        let missing = BASE.replace("dealias = true\n", "");
        assert_eq!(Scenario::from_toml_str(&missing).unwrap_err().exit_code(), 2);
        let extra = BASE.replace("amplitude = 1.0", "amplitude = 1.0\nseed = 3");
        assert_eq!(Scenario::from_toml_str(&extra).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn tagged_table_replaces_instead_of_merging() {
        let mut base: toml::Table = toml::from_str(BASE).unwrap();
        let over: toml::Table = toml::from_str("[initial]\nkind = \"zero\"\n[evolution]\ndt = 0.02").unwrap();
        merge(&mut base, over);
        let sc: Scenario = toml::Value::Table(base).try_into().unwrap();
        assert_eq!(sc.initial, InitialData::Zero);
        assert_eq!(sc.evolution.dt, 0.02);
        assert_eq!(sc.evolution.cfl, 1.0);
    }

    #[test]
    fn validation_maps_to_exit_three() {
        let sc = Scenario::from_toml_str(&BASE.replace("n = 16", "n = 15")).unwrap();
        assert_eq!(sc.validate().unwrap_err().exit_code(), 3);
        let sc = Scenario::from_toml_str(&BASE.replace("dt = 0.01", "dt = -1.0")).unwrap();
        assert_eq!(sc.validate().unwrap_err().exit_code(), 3);
        let sc = Scenario::from_toml_str(&format!("{BASE}\n[apriori]\nr = 0.9\np = inf\n")).unwrap();
        assert_eq!(sc.validate().unwrap_err().exit_code(), 3);
    }

    #[test]
    fn csv_header() {
        let sc = Scenario::from_toml_str(BASE).unwrap();
        assert_eq!(
            csv_columns(&sc.diagnostics).join(","),
            "t,energy,q_ab,div_res,sup_gradV,Hs[1],besov[0.25,inf]"
        );
    }

    #[test]
    fn eps_family_rejects_bad_lists() {
        let sc = Scenario::from_toml_str(BASE).unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(eps_family(&sc, &[0.5, 0.25], dir.path()).unwrap_err().exit_code(), 3);
        assert_eq!(eps_family(&sc, &[0.5, 0.25, 0.3], dir.path()).unwrap_err().exit_code(), 3);
    }
}
