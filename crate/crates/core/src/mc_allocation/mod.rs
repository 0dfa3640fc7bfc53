//! Stage 2: Monte Carlo search for DG placement and sizing.
//!
//! Each trial places `n_dg` unity power factor units on distinct buses drawn
//! from the Stage-1 candidates, sizes them inside the per-unit bounds and
//! the total penetration cap, runs a power flow and scores the result with
//!
//! `F = w1 * f1 / f1_base + w2 * f2 / f2_base`
//!
//! where `f1 = sum |V_m - 1|` (p.u.) and `f2` is the active loss (MW). Both
//! terms are divided by their no-DG values so the sum is dimensionless.
//! Trials that diverge or leave the voltage band are discarded.

mod sampling;

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case_model::{BusKind, CaseError, NetworkCase};
use crate::loadability::Candidate;
use crate::power_flow::{self, PowerFlowError, PowerFlowSolution, SolverOptions};

pub use sampling::{pick_buses, sample_trial, trial_rng};

pub const DEFAULT_TRIALS: usize = 20_000;
pub const DEFAULT_DG_SIZE_BOUNDS: (f64, f64) = (0.1, 3.5);
pub const DEFAULT_CANDIDATE_COUNT: usize = 10;
const DEFAULT_MAX_REDRAWS: usize = 1_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocationError {
    #[error("DG cannot be placed on the slack bus {0}")]
    DgOnSlack(usize),
    #[error("more than one DG unit on bus {0}")]
    DuplicateDgBus(usize),
    #[error("bus {0} does not exist")]
    UnknownBus(usize),
    #[error("weights must lie in [0, 1] and sum to 1, got ({0}, {1})")]
    InvalidWeights(f64, f64),
    #[error("objective normalizer must be positive, got {0}")]
    ZeroNormalizer(f64),
    #[error("{candidates} candidate buses cannot host {n_dg} DG units")]
    TooFewCandidates { candidates: usize, n_dg: usize },
    #[error("could not draw sizes under the {cap} MW cap after {attempts} attempts")]
    RedrawExhausted { attempts: usize, cap: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no feasible trial in {trials} trials; consider widening the size bounds, the voltage band or the candidate pool")]
    NoFeasibleTrial { trials: usize },
    #[error("base case: {0}")]
    BaseCase(#[from] PowerFlowError),
    #[error(transparent)]
    Case(#[from] CaseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgUnit {
    /// External bus id.
    pub bus: usize,
    pub p_mw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    Uniform,
    MarginWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub w1: f64,
    pub w2: f64,
}

impl Weights {
    pub fn new(w1: f64, w2: f64) -> Result<Self, AllocationError> {
        let ok = (0.0..=1.0).contains(&w1)
            && (0.0..=1.0).contains(&w2)
            && (w1 + w2 - 1.0).abs() < 1e-9;
        if ok {
            Ok(Weights { w1, w2 })
        } else {
            Err(AllocationError::InvalidWeights(w1, w2))
        }
    }
}

impl Default for Weights {
    fn default() -> Self {
        Weights { w1: 0.5, w2: 0.5 }
    }
}

/// No-DG reference values used to normalise the two objective terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizers {
    pub f1_base: f64,
    pub f2_base: f64,
}

impl Normalizers {
    pub fn from_solution(sol: &PowerFlowSolution) -> Self {
        Normalizers {
            f1_base: voltage_deviation(sol),
            f2_base: sol.p_loss_total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationConfig {
    pub n_dg: usize,
    pub trials: usize,
    /// Per-unit (min, max) MW.
    pub dg_size_bounds: (f64, f64),
    /// Upper bound on the summed DG size, MW.
    pub total_penetration_cap: f64,
    pub weights: Weights,
    pub candidates: Vec<Candidate>,
    pub sampling: Sampling,
    pub seed: u64,
    /// (v_min, v_max) per bus, p.u.
    pub v_bounds: Vec<(f64, f64)>,
    pub solver: SolverOptions,
    pub max_redraws: usize,
    /// Evaluate trials on the rayon pool. Results do not depend on it.
    pub parallel: bool,
}

impl AllocationConfig {
    /// Defaults for everything except the candidates and the cap: 20000
    /// trials, sizes in [0.1, 3.5] MW, equal weights, margin-weighted
    /// sampling, seed 0, and the case's own voltage bands.
    pub fn new(
        case: &NetworkCase,
        candidates: Vec<Candidate>,
        n_dg: usize,
        total_penetration_cap: f64,
    ) -> Self {
        AllocationConfig {
            n_dg,
            trials: DEFAULT_TRIALS,
            dg_size_bounds: DEFAULT_DG_SIZE_BOUNDS,
            total_penetration_cap,
            weights: Weights::default(),
            candidates,
            sampling: Sampling::MarginWeighted,
            seed: 0,
            v_bounds: case.buses().iter().map(|b| (b.v_min, b.v_max)).collect(),
            solver: SolverOptions::default(),
            max_redraws: DEFAULT_MAX_REDRAWS,
            parallel: true,
        }
    }

    pub fn with_voltage_band(mut self, v_min: f64, v_max: f64) -> Self {
        self.v_bounds.iter_mut().for_each(|b| *b = (v_min, v_max));
        self
    }

    pub fn validate(&self, case: &NetworkCase) -> Result<(), AllocationError> {
        let bad = |m: &str| Err(AllocationError::InvalidConfig(m.to_string()));
        Weights::new(self.weights.w1, self.weights.w2)?;
        if self.n_dg == 0 {
            return bad("n_dg must be at least 1");
        }
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        let (lo, hi) = self.dg_size_bounds;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return bad("DG size bounds must satisfy 0 <= min <= max");
        }
        if !(self.total_penetration_cap > 0.0) {
            return bad("penetration cap must be positive");
        }
        if self.v_bounds.len() != case.bus_count() {
            return bad("voltage bounds do not match the bus count");
        }
        let mut seen = HashSet::new();
        for c in &self.candidates {
            if !seen.insert(c.bus) {
                return bad(&format!("candidate bus {} listed twice", c.bus));
            }
            let pos = case
                .bus_index(c.bus)
                .ok_or(AllocationError::UnknownBus(c.bus))?;
            if case.buses()[pos].kind == BusKind::Slack {
                return Err(AllocationError::DgOnSlack(c.bus));
            }
        }
        if self.candidates.len() < self.n_dg {
            return Err(AllocationError::TooFewCandidates {
                candidates: self.candidates.len(),
                n_dg: self.n_dg,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial_index: usize,
    pub dgs: Vec<DgUnit>,
    /// Summed voltage deviation, p.u. NaN when the power flow diverged.
    pub f1: f64,
    /// Active loss, MW.
    pub f2: f64,
    pub f_obj: f64,
    /// (lowest voltage, external bus id).
    pub v_min: (f64, usize),
    pub slack_p: f64,
    pub feasible: bool,
}

impl TrialResult {
    pub fn total_dg_mw(&self) -> f64 {
        self.dgs.iter().map(|d| d.p_mw).sum()
    }
}

/// Adds each unit's output as a negative load at its bus. Reactive demand
/// is untouched.
pub fn apply_dg(case: &NetworkCase, dgs: &[DgUnit]) -> Result<NetworkCase, AllocationError> {
    let mut positions = Vec::with_capacity(dgs.len());
    let mut seen = HashSet::new();
    for dg in dgs {
        let pos = case
            .bus_index(dg.bus)
            .ok_or(AllocationError::UnknownBus(dg.bus))?;
        if case.buses()[pos].kind == BusKind::Slack {
            return Err(AllocationError::DgOnSlack(dg.bus));
        }
        if !seen.insert(dg.bus) {
            return Err(AllocationError::DuplicateDgBus(dg.bus));
        }
        positions.push(pos);
    }
    if dgs.is_empty() {
        return Ok(case.clone());
    }
    Ok(case.with_buses(|buses| {
        for (dg, &pos) in dgs.iter().zip(&positions) {
            buses[pos].p_gen += dg.p_mw;
        }
    })?)
}

/// `sum |V_m - 1|` over every bus, slack included.
pub fn voltage_deviation(sol: &PowerFlowSolution) -> f64 {
    sol.v_mag.iter().map(|v| (v - 1.0).abs()).sum()
}

pub fn objective(
    f1: f64,
    f2: f64,
    weights: Weights,
    norm: Normalizers,
) -> Result<f64, AllocationError> {
    for n in [norm.f1_base, norm.f2_base] {
        if !(n > 0.0) {
            return Err(AllocationError::ZeroNormalizer(n));
        }
    }
    Ok(weights.w1 * (f1 / norm.f1_base) + weights.w2 * (f2 / norm.f2_base))
}

/// Scores trials against a fixed case. Holds the no-DG normalizers so they
/// are computed once per run.
pub struct Evaluator<'a> {
    case: &'a NetworkCase,
    config: &'a AllocationConfig,
    norm: Normalizers,
}

impl<'a> Evaluator<'a> {
    pub fn new(case: &'a NetworkCase, config: &'a AllocationConfig) -> Result<Self, AllocationError> {
        let base = power_flow::solve(case, &config.solver)?;
        Ok(Evaluator {
            case,
            config,
            norm: Normalizers::from_solution(&base),
        })
    }

    pub fn normalizers(&self) -> Normalizers {
        self.norm
    }

    pub fn evaluate(&self, dgs: Vec<DgUnit>, trial_index: usize) -> Result<TrialResult, AllocationError> {
        let modified = apply_dg(self.case, &dgs)?;
        let (lo, hi) = self.config.dg_size_bounds;
        let sizes_ok = dgs.iter().all(|d| d.p_mw >= lo && d.p_mw <= hi);
        let sol = match power_flow::solve(&modified, &self.config.solver) {
            Ok(sol) => sol,
            Err(_) => {
                return Ok(TrialResult {
                    trial_index,
                    dgs,
                    f1: f64::NAN,
                    f2: f64::NAN,
                    f_obj: f64::NAN,
                    v_min: (f64::NAN, 0),
                    slack_p: f64::NAN,
                    feasible: false,
                })
            }
        };
        let voltages_ok = sol
            .v_mag
            .iter()
            .zip(&self.config.v_bounds)
            .all(|(&v, &(lo, hi))| v >= lo && v <= hi);
        let f1 = voltage_deviation(&sol);
        let f2 = sol.p_loss_total;
        let f_obj = objective(f1, f2, self.config.weights, self.norm)?;
        let (v, at) = sol.min_voltage();
        Ok(TrialResult {
            trial_index,
            dgs,
            f1,
            f2,
            f_obj,
            v_min: (v, self.case.buses()[at].id),
            slack_p: sol.slack_p,
            feasible: sizes_ok && voltages_ok,
        })
    }
}

/// Scores one placement. Builds the no-DG normalizers on every call; use an
/// [`Evaluator`] for repeated evaluation.
pub fn evaluate_trial(
    case: &NetworkCase,
    dgs: &[DgUnit],
    config: &AllocationConfig,
) -> Result<TrialResult, AllocationError> {
    Evaluator::new(case, config)?.evaluate(dgs.to_vec(), 0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloOutcome {
    pub best: TrialResult,
    /// Feasible trials in trial order.
    pub archive: Vec<TrialResult>,
    pub trials: usize,
    pub normalizers: Normalizers,
}

impl MonteCarloOutcome {
    pub fn feasibility_rate(&self) -> f64 {
        self.archive.len() as f64 / self.trials as f64
    }
}

/// Runs `config.trials` independent trials and returns the feasible one with
/// the lowest objective (earliest trial on ties) plus every feasible trial.
pub fn run_monte_carlo(
    case: &NetworkCase,
    config: &AllocationConfig,
) -> Result<MonteCarloOutcome, AllocationError> {
    config.validate(case)?;
    let evaluator = Evaluator::new(case, config)?;
    let run_trial = |k: usize| -> Result<TrialResult, AllocationError> {
        let mut rng = trial_rng(config.seed, k as u64);
        let dgs = sample_trial(&mut rng, config)?;
        evaluator.evaluate(dgs, k)
    };
    let results: Vec<TrialResult> = if config.parallel {
        (0..config.trials)
            .into_par_iter()
            .map(run_trial)
            .collect::<Result<_, _>>()?
    } else {
        (0..config.trials).map(run_trial).collect::<Result<_, _>>()?
    };
    let archive: Vec<TrialResult> = results.into_iter().filter(|t| t.feasible).collect();
    let best = archive
        .iter()
        .fold(None::<&TrialResult>, |best, t| match best {
            Some(b) if b.f_obj <= t.f_obj => Some(b),
            _ => Some(t),
        })
        .cloned()
        .ok_or(AllocationError::NoFeasibleTrial {
            trials: config.trials,
        })?;
    Ok(MonteCarloOutcome {
        best,
        archive,
        trials: config.trials,
        normalizers: evaluator.normalizers(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_model::builtin_ieee33;

    fn config(case: &NetworkCase, buses: &[usize], n_dg: usize) -> AllocationConfig {
        let candidates = buses
            .iter()
            .map(|&bus| Candidate {
                bus,
                additional_mw: 1.0,
            })
            .collect();
        AllocationConfig::new(case, candidates, n_dg, 10.0)
    }

    #[test]
    fn empty_dg_list_leaves_case_unchanged() {
        let case = builtin_ieee33();
        assert_eq!(apply_dg(&case, &[]).unwrap(), case);
    }

    #[test]
    fn duplicate_and_slack_placements_are_rejected() {
        let case = builtin_ieee33();
        let dup = [DgUnit { bus: 6, p_mw: 1.0 }, DgUnit { bus: 6, p_mw: 1.0 }];
        assert_eq!(apply_dg(&case, &dup).unwrap_err(), AllocationError::DuplicateDgBus(6));
        let slack = [DgUnit { bus: 1, p_mw: 1.0 }];
        assert_eq!(apply_dg(&case, &slack).unwrap_err(), AllocationError::DgOnSlack(1));
        let unknown = [DgUnit { bus: 40, p_mw: 1.0 }];
        assert_eq!(apply_dg(&case, &unknown).unwrap_err(), AllocationError::UnknownBus(40));
    }

    #[test]
    fn apply_dg_keeps_reactive_demand() {
        let case = builtin_ieee33();
        let with = apply_dg(&case, &[DgUnit { bus: 6, p_mw: 2.0 }]).unwrap();
        let k = case.bus_index(6).unwrap();
        assert_eq!(with.buses()[k].q_load, case.buses()[k].q_load);
        assert_eq!(with.buses()[k].p_net(), case.buses()[k].p_load - 2.0);
    }

    #[test]
    fn voltage_deviation_arithmetic() {
        let mut sol = power_flow::solve(&builtin_ieee33().zero_loads(), &SolverOptions::default()).unwrap();
        assert_eq!(voltage_deviation(&sol), 0.0);
        sol.v_mag = vec![0.99; 33];
        assert!((voltage_deviation(&sol) - 0.33).abs() < 1e-12);
    }

    #[test]
    fn objective_identities() {
        let norm = Normalizers {
            f1_base: 1.8,
            f2_base: 0.21,
        };
        let w = Weights::new(0.3, 0.7).unwrap();
        assert!((objective(1.8, 0.21, w, norm).unwrap() - 1.0).abs() < 1e-15);
        let only_f1 = Weights::new(1.0, 0.0).unwrap();
        assert_eq!(objective(0.9, 0.05, only_f1, norm).unwrap(), 0.9 / 1.8);
        let half = Weights::new(0.5, 0.5).unwrap();
        assert!((objective(0.9, 0.105, half, norm).unwrap() - 0.5).abs() < 1e-15);
        let zero = Normalizers {
            f1_base: 0.0,
            f2_base: 0.21,
        };
        assert_eq!(
            objective(1.0, 1.0, half, zero).unwrap_err(),
            AllocationError::ZeroNormalizer(0.0)
        );
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(Weights::new(0.4, 0.4).is_err());
        assert!(Weights::new(-0.1, 1.1).is_err());
        assert!(Weights::new(0.25, 0.75).is_ok());
    }

    #[test]
    fn degenerate_size_interval() {
        let case = builtin_ieee33();
        let mut cfg = config(&case, &[6, 12, 30], 2);
        cfg.dg_size_bounds = (1.0, 1.0);
        for t in 0..20 {
            let dgs = sample_trial(&mut trial_rng(5, t), &cfg).unwrap();
            assert!(dgs.iter().all(|d| d.p_mw == 1.0));
        }
    }

    #[test]
    fn cap_below_minimum_sizes_exhausts_redraws() {
        let case = builtin_ieee33();
        let mut cfg = config(&case, &[6, 12, 30], 3);
        cfg.total_penetration_cap = 0.2;
        cfg.max_redraws = 50;
        assert!(matches!(
            sample_trial(&mut trial_rng(0, 0), &cfg),
            Err(AllocationError::RedrawExhausted { attempts: 50, .. })
        ));
    }

    #[test]
    fn massive_injection_is_infeasible() {
        let case = builtin_ieee33();
        let mut cfg = config(&case, &[6], 1);
        cfg.dg_size_bounds = (0.0, 100.0);
        let r = evaluate_trial(&case, &[DgUnit { bus: 6, p_mw: 50.0 }], &cfg).unwrap();
        assert!(!r.feasible);
    }

    #[test]
    fn size_outside_bounds_is_infeasible() {
        let case = builtin_ieee33();
        let cfg = config(&case, &[6], 1);
        let r = evaluate_trial(&case, &[DgUnit { bus: 6, p_mw: 3.6 }], &cfg).unwrap();
        assert!(!r.feasible);
        assert!(r.f2.is_finite());
    }

    #[test]
    fn single_trial_run_returns_that_trial() {
        let case = builtin_ieee33();
        // a single unit cannot hold the whole feeder above 0.95
        let mut cfg = config(&case, &[6], 1).with_voltage_band(0.90, 1.05);
        cfg.trials = 1;
        cfg.dg_size_bounds = (2.0, 2.0);
        let out = run_monte_carlo(&case, &cfg).unwrap();
        assert_eq!(out.archive.len(), 1);
        assert_eq!(out.best.trial_index, 0);
        assert_eq!(out.best.dgs, vec![DgUnit { bus: 6, p_mw: 2.0 }]);
    }

    #[test]
    fn no_feasible_trial() {
        let case = builtin_ieee33();
        let mut cfg = config(&case, &[18], 1);
        cfg.trials = 5;
        cfg.dg_size_bounds = (0.1, 0.2);
        // bus 18 at 0.2 MW cannot lift the 0.904 p.u. feeder end to 0.95
        let err = run_monte_carlo(&case, &cfg).unwrap_err();
        assert_eq!(err, AllocationError::NoFeasibleTrial { trials: 5 });
    }

    #[test]
    fn config_validation() {
        let case = builtin_ieee33();
        let cfg = config(&case, &[6, 6], 1);
        assert!(matches!(cfg.validate(&case), Err(AllocationError::InvalidConfig(_))));
        let cfg = config(&case, &[1, 6], 1);
        assert_eq!(cfg.validate(&case).unwrap_err(), AllocationError::DgOnSlack(1));
        let cfg = config(&case, &[6], 2);
        assert!(matches!(
            cfg.validate(&case),
            Err(AllocationError::TooFewCandidates { .. })
        ));
    }
}
