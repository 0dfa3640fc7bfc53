//! Result tables and manifests.
//!
//! CSV output uses 4 decimals for MW and p.u. values; JSON keeps full
//! precision. Every JSON result embeds a [`RunManifest`] without timing so
//! identical runs produce identical files; wall-clock time goes to a sidecar.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case_model::NetworkCase;
use crate::loadability::{Candidate, LoadabilityRecord};
use crate::mc_allocation::{voltage_deviation, DgUnit};
use crate::power_flow::{self, PowerFlowError, PowerFlowSolution, SolverOptions};

pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("candidate file row {row}: {message}")]
    BadCandidate { row: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub case_source: String,
    /// Effective configuration with every default resolved.
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub csv_schema_version: u32,
}

impl RunManifest {
    pub fn new(command: &str, case_source: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        RunManifest {
            command: command.to_string(),
            case_source: case_source.to_string(),
            config,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            csv_schema_version: CSV_SCHEMA_VERSION,
        }
    }
}

#[derive(Debug, Serialize)]
struct Sidecar<'a> {
    manifest: &'a RunManifest,
    result_file: String,
    wall_clock_s: f64,
}

fn fmt4(x: f64) -> String {
    format!("{x:.4}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `{"manifest": ..., "result": ...}` to `path` and the timing
/// sidecar to `<stem>.manifest.json` next to it.
pub fn write_json_result<T: Serialize>(
    path: &Path,
    manifest: &RunManifest,
    result: &T,
    wall_clock_s: f64,
) -> Result<(), ReportError> {
    let doc = serde_json::json!({ "manifest": manifest, "result": result });
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))?;

    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("result");
    let sidecar_path = path.with_file_name(format!("{stem}.manifest.json"));
    let sidecar = Sidecar {
        manifest,
        result_file: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        wall_clock_s,
    };
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    std::fs::write(&sidecar_path, text).map_err(io_err(&sidecar_path))
}

pub fn write_bus_csv<W: Write>(out: W, case: &NetworkCase, sol: &PowerFlowSolution) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bus", "vm_pu", "va_deg", "p_load_mw", "q_load_mvar", "p_gen_mw"])?;
    for (k, bus) in case.buses().iter().enumerate() {
        w.write_record([
            bus.id.to_string(),
            fmt4(sol.v_mag[k]),
            fmt4(sol.v_ang[k].to_degrees()),
            fmt4(bus.p_load),
            fmt4(bus.q_load),
            fmt4(bus.p_gen),
        ])?;
    }
    w.flush().map_err(|e| ReportError::Csv(e.into()))
}

pub fn write_branch_csv<W: Write>(out: W, case: &NetworkCase, sol: &PowerFlowSolution) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "from", "to", "p_from_mw", "q_from_mvar", "p_to_mw", "q_to_mvar", "p_loss_mw", "q_loss_mvar",
        "current_pu",
    ])?;
    let buses = case.buses();
    for ((br, f), i) in case.branches().iter().zip(&sol.branch_flows).zip(&sol.branch_current) {
        w.write_record([
            buses[br.from].id.to_string(),
            buses[br.to].id.to_string(),
            fmt4(f.p_from),
            fmt4(f.q_from),
            fmt4(f.p_to),
            fmt4(f.q_to),
            fmt4(f.p_loss()),
            fmt4(f.q_loss()),
            fmt4(*i),
        ])?;
    }
    w.flush().map_err(|e| ReportError::Csv(e.into()))
}

pub fn write_loadability_csv<W: Write>(out: W, records: &[LoadabilityRecord]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bus", "base_mw", "lambda_max", "additional_mw", "binding"])?;
    for r in records {
        w.write_record([
            r.bus.to_string(),
            fmt4(r.base_mw),
            fmt4(r.lambda_max),
            fmt4(r.additional_mw),
            r.binding.to_string(),
        ])?;
    }
    w.flush().map_err(|e| ReportError::Csv(e.into()))
}

pub fn write_candidates_csv<W: Write>(out: W, candidates: &[Candidate]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "bus", "additional_mw"])?;
    for (rank, c) in candidates.iter().enumerate() {
        w.write_record([(rank + 1).to_string(), c.bus.to_string(), fmt4(c.additional_mw)])?;
    }
    w.flush().map_err(|e| ReportError::Csv(e.into()))
}

/// Reads a candidate list written by [`write_candidates_csv`]. Only the
/// `bus` and `additional_mw` columns are used; rows keep their file order.
pub fn read_candidates_csv<R: Read>(input: R) -> Result<Vec<Candidate>, ReportError> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or(ReportError::BadCandidate {
            row: 0,
            message: format!("missing column `{name}`"),
        })
    };
    let (bus_col, mw_col) = (col("bus")?, col("additional_mw")?);
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = k + 1;
        let bad = |message: String| ReportError::BadCandidate { row, message };
        let bus = rec
            .get(bus_col)
            .unwrap_or("")
            .trim()
            .parse::<usize>()
            .map_err(|e| bad(format!("bus: {e}")))?;
        let additional_mw = rec
            .get(mw_col)
            .unwrap_or("")
            .trim()
            .parse::<f64>()
            .map_err(|e| bad(format!("additional_mw: {e}")))?;
        out.push(Candidate { bus, additional_mw });
    }
    Ok(out)
}

/// One bus per row, one scenario per column.
pub fn write_voltage_profiles<W: Write>(
    out: W,
    bus_ids: &[usize],
    scenarios: &[(String, Vec<f64>)],
) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["bus".to_string()];
    header.extend(scenarios.iter().map(|(name, _)| name.clone()));
    w.write_record(&header)?;
    for (k, id) in bus_ids.iter().enumerate() {
        let mut row = vec![id.to_string()];
        row.extend(scenarios.iter().map(|(_, v)| fmt4(v[k])));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| ReportError::Csv(e.into()))
}

/// A fixed DG configuration scored against its own no-DG base case.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub dgs: Vec<DgUnit>,
    pub total_dg_mw: f64,
    pub base_loss_mw: f64,
    pub loss_mw: f64,
    pub q_loss_mvar: f64,
    pub loss_reduction_pct: f64,
    pub base_voltage_deviation: f64,
    pub voltage_deviation: f64,
    pub v_min: f64,
    pub v_min_bus: usize,
    pub v_max: f64,
    pub v_max_bus: usize,
    pub slack_p_mw: f64,
    /// Every voltage inside its bus band.
    pub within_band: bool,
    pub voltages: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error(transparent)]
    Allocation(#[from] crate::mc_allocation::AllocationError),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
}

pub fn evaluate_configuration(
    case: &NetworkCase,
    dgs: &[DgUnit],
    v_bounds: &[(f64, f64)],
    solver: &SolverOptions,
) -> Result<Evaluation, EvaluationError> {
    let base = power_flow::solve(case, solver)?;
    let modified = crate::mc_allocation::apply_dg(case, dgs)?;
    let sol = power_flow::solve(&modified, solver)?;
    let ids: Vec<usize> = case.buses().iter().map(|b| b.id).collect();
    let (v_min, lo_at) = sol.min_voltage();
    let (v_max, hi_at) = sol.max_voltage();
    Ok(Evaluation {
        dgs: dgs.to_vec(),
        total_dg_mw: dgs.iter().map(|d| d.p_mw).sum(),
        base_loss_mw: base.p_loss_total,
        loss_mw: sol.p_loss_total,
        q_loss_mvar: sol.q_loss_total,
        loss_reduction_pct: 100.0 * (base.p_loss_total - sol.p_loss_total) / base.p_loss_total,
        base_voltage_deviation: voltage_deviation(&base),
        voltage_deviation: voltage_deviation(&sol),
        v_min,
        v_min_bus: ids[lo_at],
        v_max,
        v_max_bus: ids[hi_at],
        slack_p_mw: sol.slack_p,
        within_band: sol
            .v_mag
            .iter()
            .zip(v_bounds)
            .all(|(&v, &(lo, hi))| v >= lo && v <= hi),
        voltages: sol.v_mag,
    })
}
