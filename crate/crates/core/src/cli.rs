//! Command-line front end. `main.rs` only parses arguments and maps
//! [`CliError`] to an exit code; everything else lives here so it can be
//! driven from tests.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::case_model::{builtin_case, parse_case, CaseError, NetworkCase, SlackLimits};
use crate::loadability::{
    network_loadability, rank_candidates, simultaneous_loadability, Candidate, ConstraintSet,
    LoadabilityError, LoadabilitySettings, DEFAULT_LAMBDA_STEP, STAGE1_V_MAX, STAGE1_V_MIN,
};
use crate::mc_allocation::{
    run_monte_carlo, AllocationConfig, AllocationError, DgUnit, MonteCarloOutcome, Sampling, Weights,
    DEFAULT_CANDIDATE_COUNT, DEFAULT_DG_SIZE_BOUNDS, DEFAULT_TRIALS,
};
use crate::power_flow::{self, PowerFlowError, SolverOptions, DEFAULT_MAX_ITER, DEFAULT_TOLERANCE};
use crate::report::{self, EvaluationError, ReportError, RunManifest};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_PARSE: i32 = 4;
pub const EXIT_NON_CONVERGENCE: i32 = 5;
pub const EXIT_NO_FEASIBLE: i32 = 6;
pub const EXIT_OTHER: i32 = 1;

const STAGE2_V_MIN: f64 = 0.95;
const STAGE2_V_MAX: f64 = 1.05;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {path}: {source}")]
    CaseIo {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Case(#[from] CaseError),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error(transparent)]
    Loadability(#[from] LoadabilityError),
    #[error(transparent)]
    Allocation(#[from] AllocationError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::CaseIo { .. } | CliError::Report(_) => EXIT_IO,
            CliError::Case(_) => EXIT_PARSE,
            CliError::PowerFlow(PowerFlowError::NonConvergence { .. })
            | CliError::Loadability(LoadabilityError::PowerFlow(PowerFlowError::NonConvergence { .. }))
            | CliError::Allocation(AllocationError::BaseCase(PowerFlowError::NonConvergence { .. })) => {
                EXIT_NON_CONVERGENCE
            }
            CliError::Allocation(AllocationError::NoFeasibleTrial { .. }) => EXIT_NO_FEASIBLE,
            CliError::Allocation(AllocationError::Case(_)) => EXIT_PARSE,
            _ => EXIT_OTHER,
        }
    }
}

impl From<EvaluationError> for CliError {
    fn from(e: EvaluationError) -> Self {
        match e {
            EvaluationError::Allocation(e) => e.into(),
            EvaluationError::PowerFlow(e) => e.into(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dgplan", version, about = "Loadability analysis and Monte Carlo DG placement")]
pub struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the base-case power flow.
    Pf(PfArgs),
    /// Stage 1: per-bus and simultaneous loadability, ranked candidates.
    Loadability(LoadabilityArgs),
    /// Stage 2: Monte Carlo DG placement and sizing.
    Allocate(AllocateArgs),
    /// Score a fixed DG configuration.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CommonArgs {
    /// `builtin:ieee33`, `builtin:ieee33bw` or a MATPOWER-style case file.
    #[arg(long, default_value = "builtin:ieee33")]
    pub case: String,
    #[arg(long, env = "DGPLAN_OUT_DIR", default_value = "dgplan_out")]
    pub out_dir: PathBuf,
    /// Newton-Raphson mismatch tolerance, p.u.
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    /// Slack active/reactive limits, MW/MVar, replacing the case values.
    #[arg(long, num_args = 4, value_names = ["P_MIN", "P_MAX", "Q_MIN", "Q_MAX"], allow_negative_numbers = true)]
    pub slack_limits: Option<Vec<f64>>,
}

impl CommonArgs {
    fn solver(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }

    fn load_case(&self) -> Result<NetworkCase, CliError> {
        let case = if self.case.starts_with("builtin:") {
            builtin_case(&self.case)?
        } else {
            let path = PathBuf::from(&self.case);
            let text = std::fs::read_to_string(&path).map_err(|source| CliError::CaseIo { path, source })?;
            parse_case(&text)?
        };
        match &self.slack_limits {
            Some(v) => Ok(case.with_slack_limits(SlackLimits {
                p_min: v[0],
                p_max: v[1],
                q_min: v[2],
                q_max: v[3],
            })?),
            None => Ok(case),
        }
    }

    fn prepare_out_dir(&self) -> Result<&Path, CliError> {
        std::fs::create_dir_all(&self.out_dir).map_err(|source| {
            ReportError::Io {
                path: self.out_dir.clone(),
                source,
            }
        })?;
        Ok(&self.out_dir)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PfArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Zero every load before solving.
    #[arg(long)]
    pub zero_loads: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Stage1Args {
    /// Lambda grid step.
    #[arg(long, default_value_t = DEFAULT_LAMBDA_STEP)]
    pub step: f64,
    #[arg(long, default_value_t = STAGE1_V_MIN)]
    pub stage1_vmin: f64,
    #[arg(long, default_value_t = STAGE1_V_MAX)]
    pub stage1_vmax: f64,
    /// Uniform branch ratings (MW, MVar, p.u. current) applied on top of
    /// any ratings in the case.
    #[arg(long)]
    pub line_p_max: Option<f64>,
    #[arg(long)]
    pub line_q_max: Option<f64>,
    #[arg(long)]
    pub line_i_max: Option<f64>,
    /// Number of ranked candidates handed to Stage 2.
    #[arg(long, default_value_t = DEFAULT_CANDIDATE_COUNT)]
    pub top_n: usize,
}

impl Stage1Args {
    fn constraints(&self, case: &NetworkCase) -> ConstraintSet {
        ConstraintSet::from_case(case)
            .with_voltage_band(self.stage1_vmin, self.stage1_vmax)
            .with_branch_ratings(self.line_p_max, self.line_q_max, self.line_i_max)
    }

    fn settings(&self, solver: SolverOptions) -> LoadabilitySettings {
        LoadabilitySettings {
            lambda_step: self.step,
            solver,
            ..LoadabilitySettings::default()
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LoadabilityArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub stage1: Stage1Args,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AllocateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub stage1: Stage1Args,
    /// DG counts to run, e.g. `--n-dg 1,2,3`.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub n_dg: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Objective weights `w1,w2` (voltage deviation, loss).
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.5, 0.5])]
    pub weights: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_DG_SIZE_BOUNDS.0)]
    pub dg_min: f64,
    #[arg(long, default_value_t = DEFAULT_DG_SIZE_BOUNDS.1)]
    pub dg_max: f64,
    /// Total DG cap, MW. Defaults to the simultaneous loadability total.
    #[arg(long)]
    pub cap: Option<f64>,
    /// Candidate CSV from `loadability`; computed inline when absent.
    #[arg(long)]
    pub candidates_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Sampling::MarginWeighted)]
    pub sampling: Sampling,
    #[arg(long, default_value_t = STAGE2_V_MIN)]
    pub vmin: f64,
    #[arg(long, default_value_t = STAGE2_V_MAX)]
    pub vmax: f64,
    /// Evaluate trials on one thread. Output is identical either way.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// DG unit as `bus:MW`; repeat for several units.
    #[arg(long = "dg", value_parser = parse_dg)]
    pub dgs: Vec<DgUnit>,
    #[arg(long, default_value_t = STAGE2_V_MIN)]
    pub vmin: f64,
    #[arg(long, default_value_t = STAGE2_V_MAX)]
    pub vmax: f64,
}

pub fn parse_dg(s: &str) -> Result<DgUnit, String> {
    let (bus, mw) = s
        .split_once(':')
        .ok_or_else(|| format!("expected bus:MW, got `{s}`"))?;
    let bus = bus.trim().parse().map_err(|e| format!("bus `{bus}`: {e}"))?;
    let p_mw: f64 = mw.trim().parse().map_err(|e| format!("size `{mw}`: {e}"))?;
    if !p_mw.is_finite() || p_mw < 0.0 {
        return Err(format!("size must be a non-negative number, got {p_mw}"));
    }
    Ok(DgUnit { bus, p_mw })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|source| {
        ReportError::Io {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

fn config_json<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).unwrap_or(serde_json::Value::Null)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Pf(a) => cmd_pf(&a),
        Command::Loadability(a) => cmd_loadability(&a),
        Command::Allocate(a) => cmd_allocate(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
    }
}

pub fn cmd_pf(args: &PfArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let mut case = args.common.load_case()?;
    if args.zero_loads {
        case = case.zero_loads();
    }
    let sol = power_flow::solve(&case, &args.common.solver())?;
    let (vmin, at) = sol.min_voltage();
    let below = sol.v_mag.iter().filter(|&&v| v < STAGE2_V_MIN).count();
    println!("converged in {} iterations", sol.iterations);
    println!("active loss   {:.4} MW", sol.p_loss_total);
    println!("reactive loss {:.4} MVar", sol.q_loss_total);
    println!("slack         {:.4} MW  {:.4} MVar", sol.slack_p, sol.slack_q);
    println!("v_min         {:.4} p.u. at bus {}", vmin, case.buses()[at].id);
    println!("buses below {STAGE2_V_MIN:.2} p.u.: {below}");

    let dir = args.common.prepare_out_dir()?;
    report::write_bus_csv(create(&dir.join("pf_buses.csv"))?, &case, &sol)?;
    report::write_branch_csv(create(&dir.join("pf_branches.csv"))?, &case, &sol)?;
    let manifest = RunManifest::new("pf", &args.common.case, config_json(args), None);
    report::write_json_result(&dir.join("pf.json"), &manifest, &sol, start.elapsed().as_secs_f64())?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct Stage1Result {
    records: Vec<crate::loadability::LoadabilityRecord>,
    simultaneous: crate::loadability::SimultaneousLoadability,
    candidates: Vec<Candidate>,
}

fn stage1(case: &NetworkCase, args: &Stage1Args, solver: SolverOptions) -> Result<Stage1Result, CliError> {
    let cs = args.constraints(case);
    let settings = args.settings(solver);
    let records = network_loadability(case, &settings, &cs)?;
    let simultaneous = simultaneous_loadability(case, &settings, &cs)?;
    let candidates = rank_candidates(&records, args.top_n);
    Ok(Stage1Result {
        records,
        simultaneous,
        candidates,
    })
}

pub fn cmd_loadability(args: &LoadabilityArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let case = args.common.load_case()?;
    let result = stage1(&case, &args.stage1, args.common.solver())?;

    println!("rank  bus  additional_mw");
    for (k, c) in result.candidates.iter().enumerate() {
        println!("{:>4}  {:>3}  {:>13.4}", k + 1, c.bus, c.additional_mw);
    }
    let s = &result.simultaneous;
    println!(
        "simultaneous: lambda_max {:.4}, {:.4} MW total ({:.4} MW above base), limited by {}",
        s.lambda_max, s.total_achievable_mw, s.additional_mw, s.binding
    );

    let dir = args.common.prepare_out_dir()?;
    report::write_loadability_csv(create(&dir.join("loadability.csv"))?, &result.records)?;
    report::write_candidates_csv(create(&dir.join("candidates.csv"))?, &result.candidates)?;
    let manifest = RunManifest::new("loadability", &args.common.case, config_json(args), None);
    report::write_json_result(
        &dir.join("loadability.json"),
        &manifest,
        &result,
        start.elapsed().as_secs_f64(),
    )?;
    Ok(())
}

/// Table-I style summary of one allocation run.
#[derive(Debug, Serialize)]
struct AllocationSummary {
    n_dg: usize,
    config: AllocationConfig,
    best: crate::mc_allocation::TrialResult,
    evaluation: report::Evaluation,
    feasible_trials: usize,
    feasibility_rate: f64,
    normalizers: crate::mc_allocation::Normalizers,
}

pub fn cmd_allocate(args: &AllocateArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let case = args.common.load_case()?;
    let solver = args.common.solver();
    if args.n_dg.is_empty() {
        return Err(CliError::Usage("--n-dg needs at least one value".into()));
    }
    let weights = Weights::new(args.weights[0], args.weights[1])?;

    let (candidates, stage1_cap) = match &args.candidates_file {
        Some(path) => {
            let file = File::open(path).map_err(|source| CliError::CaseIo {
                path: path.clone(),
                source,
            })?;
            (report::read_candidates_csv(file)?, None)
        }
        None => {
            let s1 = stage1(&case, &args.stage1, solver)?;
            (s1.candidates, Some(s1.simultaneous.total_achievable_mw))
        }
    };
    let cap = match (args.cap, stage1_cap) {
        (Some(c), _) => c,
        (None, Some(c)) => c,
        (None, None) => {
            let cs = args.stage1.constraints(&case);
            simultaneous_loadability(&case, &args.stage1.settings(solver), &cs)?.total_achievable_mw
        }
    };

    let dir = args.common.prepare_out_dir()?.to_path_buf();
    let base = power_flow::solve(&case, &solver)?;
    let bus_ids: Vec<usize> = case.buses().iter().map(|b| b.id).collect();
    let mut profiles = vec![("no_dg".to_string(), base.v_mag.clone())];
    let mut table = Vec::new();
    let mut first_err = None;

    for &n in &args.n_dg {
        let run_start = Instant::now();
        let mut config = AllocationConfig::new(&case, candidates.clone(), n, cap).with_voltage_band(args.vmin, args.vmax);
        config.trials = args.trials;
        config.seed = args.seed;
        config.weights = weights;
        config.dg_size_bounds = (args.dg_min, args.dg_max);
        config.sampling = args.sampling;
        config.solver = solver;
        config.parallel = !args.sequential;

        let outcome: MonteCarloOutcome = match run_monte_carlo(&case, &config) {
            Ok(o) => o,
            Err(e @ AllocationError::NoFeasibleTrial { .. }) => {
                eprintln!("n_dg = {n}: {e}");
                first_err.get_or_insert(CliError::from(e));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let evaluation = report::evaluate_configuration(&case, &outcome.best.dgs, &config.v_bounds, &solver)?;
        let placement: Vec<String> = outcome
            .best
            .dgs
            .iter()
            .map(|d| format!("{}:{:.4}", d.bus, d.p_mw))
            .collect();
        println!(
            "n_dg = {n}: {}  loss {:.4} MW ({:.2}% reduction)  v_min {:.4} at bus {}  feasible {}/{}",
            placement.join(" "),
            evaluation.loss_mw,
            evaluation.loss_reduction_pct,
            evaluation.v_min,
            evaluation.v_min_bus,
            outcome.archive.len(),
            outcome.trials
        );
        profiles.push((format!("dg{n}"), evaluation.voltages.clone()));
        let summary = AllocationSummary {
            n_dg: n,
            best: outcome.best.clone(),
            feasible_trials: outcome.archive.len(),
            feasibility_rate: outcome.feasibility_rate(),
            normalizers: outcome.normalizers,
            config,
            evaluation,
        };
        let manifest = RunManifest::new("allocate", &args.common.case, config_json(args), Some(args.seed));
        report::write_json_result(
            &dir.join(format!("allocate_n{n}.json")),
            &manifest,
            &summary,
            run_start.elapsed().as_secs_f64(),
        )?;
        table.push(summary);
    }

    write_allocation_table(&dir.join("allocate_summary.csv"), &table)?;
    report::write_voltage_profiles(create(&dir.join("voltage_profile.csv"))?, &bus_ids, &profiles)?;
    log::info!("allocate finished in {:.2} s", start.elapsed().as_secs_f64());
    match first_err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn write_allocation_table(path: &Path, rows: &[AllocationSummary]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record([
        "n_dg",
        "buses",
        "sizes_mw",
        "total_dg_mw",
        "base_loss_mw",
        "loss_mw",
        "loss_reduction_pct",
        "v_min_pu",
        "v_min_bus",
        "f_obj",
    ])
    .map_err(ReportError::from)?;
    for r in rows {
        let e = &r.evaluation;
        let join = |f: &dyn Fn(&DgUnit) -> String| e.dgs.iter().map(f).collect::<Vec<_>>().join(";");
        w.write_record([
            r.n_dg.to_string(),
            join(&|d| d.bus.to_string()),
            join(&|d| format!("{:.4}", d.p_mw)),
            format!("{:.4}", e.total_dg_mw),
            format!("{:.4}", e.base_loss_mw),
            format!("{:.4}", e.loss_mw),
            format!("{:.2}", e.loss_reduction_pct),
            format!("{:.4}", e.v_min),
            e.v_min_bus.to_string(),
            format!("{:.4}", r.best.f_obj),
        ])
        .map_err(ReportError::from)?;
    }
    w.flush().map_err(|e| ReportError::Csv(e.into()))?;
    Ok(())
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let case = args.common.load_case()?;
    let bands = vec![(args.vmin, args.vmax); case.bus_count()];
    let e = report::evaluate_configuration(&case, &args.dgs, &bands, &args.common.solver())?;

    println!("base loss      {:.4} MW", e.base_loss_mw);
    println!("loss           {:.4} MW", e.loss_mw);
    println!("loss reduction {:.2} %", e.loss_reduction_pct);
    println!("voltage dev.   {:.4} p.u. (base {:.4})", e.voltage_deviation, e.base_voltage_deviation);
    println!("v_min          {:.4} p.u. at bus {}", e.v_min, e.v_min_bus);
    println!("within band    {}", e.within_band);

    let dir = args.common.prepare_out_dir()?;
    let base = power_flow::solve(&case, &args.common.solver())?;
    let bus_ids: Vec<usize> = case.buses().iter().map(|b| b.id).collect();
    let profiles = vec![
        ("no_dg".to_string(), base.v_mag),
        ("with_dg".to_string(), e.voltages.clone()),
    ];
    report::write_voltage_profiles(create(&dir.join("evaluate_voltage.csv"))?, &bus_ids, &profiles)?;
    let manifest = RunManifest::new("evaluate", &args.common.case, config_json(args), None);
    report::write_json_result(&dir.join("evaluate.json"), &manifest, &e, start.elapsed().as_secs_f64())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dg_spec_parsing() {
        assert_eq!(parse_dg("6:2.893").unwrap(), DgUnit { bus: 6, p_mw: 2.893 });
        assert!(parse_dg("6").is_err());
        assert!(parse_dg("x:1").is_err());
        assert!(parse_dg("6:-1").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes_are_distinct() {
        let codes = [EXIT_USAGE, EXIT_IO, EXIT_PARSE, EXIT_NON_CONVERGENCE, EXIT_NO_FEASIBLE, EXIT_OTHER];
        let set: std::collections::HashSet<_> = codes.iter().collect();
        assert_eq!(set.len(), codes.len());
        let e = CliError::Allocation(AllocationError::NoFeasibleTrial { trials: 3 });
        assert_eq!(e.exit_code(), EXIT_NO_FEASIBLE);
        let e = CliError::PowerFlow(PowerFlowError::NonConvergence {
            iterations: 50,
            mismatch: 1.0,
        });
        assert_eq!(e.exit_code(), EXIT_NON_CONVERGENCE);
    }
}
