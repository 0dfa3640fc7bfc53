//! Stage 1: how much extra active load each bus (or the whole feeder) can
//! take before an operating limit breaks.
//!
//! The scan walks `lambda = 1, 1 + step, 1 + 2 step, ...` on the active load
//! only. Reactive load stays at its base value. Every point is a fresh
//! flat-start power flow on a copy of the case, so the caller's case is
//! never touched.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case_model::{BusKind, NetworkCase, SlackLimits};
use crate::power_flow::{self, PowerFlowError, PowerFlowSolution, SolverOptions};

/// Voltage floor used for the loadability scan. The 33-bus base case sits
/// at about 0.904 p.u., so a 0.95 floor would leave nothing to scan.
pub const STAGE1_V_MIN: f64 = 0.90;
pub const STAGE1_V_MAX: f64 = 1.05;
pub const DEFAULT_LAMBDA_STEP: f64 = 0.01;
const DEFAULT_MAX_STEPS: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    /// (v_min, v_max) per bus, p.u.
    pub v_bounds: Vec<(f64, f64)>,
    /// (pl_max MW, ql_max MVar) per branch.
    pub branch_flow_bounds: Vec<(Option<f64>, Option<f64>)>,
    /// i_max per branch, p.u.
    pub current_bounds: Vec<Option<f64>>,
    pub slack_bounds: SlackLimits,
}

impl ConstraintSet {
    /// Limits as carried by the case itself.
    pub fn from_case(case: &NetworkCase) -> Self {
        ConstraintSet {
            v_bounds: case.buses().iter().map(|b| (b.v_min, b.v_max)).collect(),
            branch_flow_bounds: case
                .branches()
                .iter()
                .map(|b| (b.pl_max, b.ql_max))
                .collect(),
            current_bounds: case.branches().iter().map(|b| b.i_max).collect(),
            slack_bounds: case.slack_limits(),
        }
    }

    /// Case limits with the voltage band relaxed to the Stage-1 default.
    pub fn stage1(case: &NetworkCase) -> Self {
        Self::from_case(case).with_voltage_band(STAGE1_V_MIN, STAGE1_V_MAX)
    }

    /// Replaces every bus band with `[v_min, v_max]`.
    pub fn with_voltage_band(mut self, v_min: f64, v_max: f64) -> Self {
        self.v_bounds.iter_mut().for_each(|b| *b = (v_min, v_max));
        self
    }

    /// Applies uniform ratings to every branch; `None` leaves a field as is.
    pub fn with_branch_ratings(
        mut self,
        pl_max: Option<f64>,
        ql_max: Option<f64>,
        i_max: Option<f64>,
    ) -> Self {
        for (flow, current) in self
            .branch_flow_bounds
            .iter_mut()
            .zip(self.current_bounds.iter_mut())
        {
            flow.0 = pl_max.or(flow.0);
            flow.1 = ql_max.or(flow.1);
            *current = i_max.or(*current);
        }
        self
    }

    pub fn with_slack_bounds(mut self, slack: SlackLimits) -> Self {
        self.slack_bounds = slack;
        self
    }

    fn matches(&self, case: &NetworkCase) -> bool {
        self.v_bounds.len() == case.bus_count()
            && self.branch_flow_bounds.len() == case.branches().len()
            && self.current_bounds.len() == case.branches().len()
    }
}

/// One broken limit. Bus and branch endpoints are external bus ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    VoltageLow { bus: usize, value: f64, limit: f64 },
    VoltageHigh { bus: usize, value: f64, limit: f64 },
    LineActive { from: usize, to: usize, value: f64, limit: f64 },
    LineReactive { from: usize, to: usize, value: f64, limit: f64 },
    Current { from: usize, to: usize, value: f64, limit: f64 },
    SlackActive { value: f64, min: f64, max: f64 },
    SlackReactive { value: f64, min: f64, max: f64 },
}

impl Violation {
    /// Amount by which the limit is exceeded (positive).
    pub fn margin(&self) -> f64 {
        match *self {
            Violation::VoltageLow { value, limit, .. } => limit - value,
            Violation::VoltageHigh { value, limit, .. }
            | Violation::LineActive { value, limit, .. }
            | Violation::LineReactive { value, limit, .. }
            | Violation::Current { value, limit, .. } => value - limit,
            Violation::SlackActive { value, min, max }
            | Violation::SlackReactive { value, min, max } => {
                if value < min {
                    min - value
                } else {
                    value - max
                }
            }
        }
    }

    pub fn is_voltage(&self) -> bool {
        matches!(
            self,
            Violation::VoltageLow { .. } | Violation::VoltageHigh { .. }
        )
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::VoltageLow { bus, .. } => write!(f, "voltage_low@{bus}"),
            Violation::VoltageHigh { bus, .. } => write!(f, "voltage_high@{bus}"),
            Violation::LineActive { from, to, .. } => write!(f, "line_p@{from}-{to}"),
            Violation::LineReactive { from, to, .. } => write!(f, "line_q@{from}-{to}"),
            Violation::Current { from, to, .. } => write!(f, "current@{from}-{to}"),
            Violation::SlackActive { .. } => write!(f, "slack_p"),
            Violation::SlackReactive { .. } => write!(f, "slack_q"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConstraintReport {
    pub violations: Vec<Violation>,
}

impl ConstraintReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first(&self) -> Option<&Violation> {
        self.violations.first()
    }
}

/// Checks voltage band, branch flow and current ratings, and slack limits.
/// Violations are listed buses first, then branches, then the slack.
pub fn check_constraints(
    sol: &PowerFlowSolution,
    case: &NetworkCase,
    cs: &ConstraintSet,
) -> ConstraintReport {
    debug_assert!(cs.matches(case));
    let mut violations = Vec::new();
    for ((bus, &v), &(lo, hi)) in case.buses().iter().zip(&sol.v_mag).zip(&cs.v_bounds) {
        if v < lo {
            violations.push(Violation::VoltageLow {
                bus: bus.id,
                value: v,
                limit: lo,
            });
        } else if v > hi {
            violations.push(Violation::VoltageHigh {
                bus: bus.id,
                value: v,
                limit: hi,
            });
        }
    }
    let id = |k: usize| case.buses()[k].id;
    for (k, br) in case.branches().iter().enumerate() {
        let (from, to) = (id(br.from), id(br.to));
        let flow = &sol.branch_flows[k];
        let (pl_max, ql_max) = cs.branch_flow_bounds[k];
        if let Some(limit) = pl_max {
            let value = flow.p_from.abs().max(flow.p_to.abs());
            if value > limit {
                violations.push(Violation::LineActive {
                    from,
                    to,
                    value,
                    limit,
                });
            }
        }
        if let Some(limit) = ql_max {
            let value = flow.q_from.abs().max(flow.q_to.abs());
            if value > limit {
                violations.push(Violation::LineReactive {
                    from,
                    to,
                    value,
                    limit,
                });
            }
        }
        if let Some(limit) = cs.current_bounds[k] {
            let value = sol.branch_current[k];
            if value > limit {
                violations.push(Violation::Current {
                    from,
                    to,
                    value,
                    limit,
                });
            }
        }
    }
    let s = cs.slack_bounds;
    if sol.slack_p < s.p_min || sol.slack_p > s.p_max {
        violations.push(Violation::SlackActive {
            value: sol.slack_p,
            min: s.p_min,
            max: s.p_max,
        });
    }
    if sol.slack_q < s.q_min || sol.slack_q > s.q_max {
        violations.push(Violation::SlackReactive {
            value: sol.slack_q,
            min: s.q_min,
            max: s.q_max,
        });
    }
    ConstraintReport { violations }
}

/// What stopped the scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Binding {
    Constraint { violation: Violation },
    NonConvergence,
    /// The unscaled case already fails; carries the first violation, or
    /// `None` when the base power flow itself diverges.
    BaseInfeasible { violation: Option<Violation> },
    StepLimit,
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Binding::Constraint { violation } => write!(f, "{violation}"),
            Binding::NonConvergence => write!(f, "non_convergence"),
            Binding::BaseInfeasible {
                violation: Some(v),
            } => write!(f, "base_infeasible:{v}"),
            Binding::BaseInfeasible { violation: None } => {
                write!(f, "base_infeasible:non_convergence")
            }
            Binding::StepLimit => write!(f, "step_limit"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadabilityRecord {
    /// External bus id.
    pub bus: usize,
    pub base_mw: f64,
    pub lambda_max: f64,
    /// `(lambda_max - 1) * base_mw`; for a bus with no base load, the
    /// additive probe size in MW.
    pub additional_mw: f64,
    pub binding: Binding,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LoadabilitySettings {
    pub lambda_step: f64,
    pub solver: SolverOptions,
    /// Scan points before giving up with [`Binding::StepLimit`].
    pub max_steps: usize,
}

impl Default for LoadabilitySettings {
    fn default() -> Self {
        LoadabilitySettings {
            lambda_step: DEFAULT_LAMBDA_STEP,
            solver: SolverOptions::default(),
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LoadabilityError {
    #[error("lambda step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("bus {0} does not exist")]
    UnknownBus(usize),
    #[error("bus {0} is not a PQ bus")]
    NotPqBus(usize),
    #[error("constraint set does not match the case")]
    ConstraintShape,
    #[error("base case is infeasible ({})", .record.binding)]
    BaseCaseInfeasible { record: LoadabilityRecord },
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimultaneousLoadability {
    pub lambda_max: f64,
    pub base_mw: f64,
    /// `base_mw * lambda_max`.
    pub total_achievable_mw: f64,
    pub additional_mw: f64,
    pub binding: Binding,
}

enum Probe {
    Pass,
    Fail(Binding),
}

fn probe(case: &NetworkCase, cs: &ConstraintSet, solver: &SolverOptions) -> Probe {
    match power_flow::solve(case, solver) {
        Ok(sol) => match check_constraints(&sol, case, cs).violations.into_iter().next() {
            None => Probe::Pass,
            Some(violation) => Probe::Fail(Binding::Constraint { violation }),
        },
        Err(PowerFlowError::NonConvergence { .. }) => Probe::Fail(Binding::NonConvergence),
        // radial check and tolerance are validated before the scan starts
        Err(_) => Probe::Fail(Binding::NonConvergence),
    }
}

fn validate(
    case: &NetworkCase,
    settings: &LoadabilitySettings,
    cs: &ConstraintSet,
) -> Result<(), LoadabilityError> {
    if !(settings.lambda_step > 0.0) || !settings.lambda_step.is_finite() {
        return Err(LoadabilityError::InvalidStep(settings.lambda_step));
    }
    if !cs.matches(case) {
        return Err(LoadabilityError::ConstraintShape);
    }
    if !(settings.solver.tol > 0.0) {
        return Err(PowerFlowError::InvalidTolerance(settings.solver.tol).into());
    }
    if !crate::case_model::validate_radial(case).is_tree() {
        return Err(PowerFlowError::NotRadial.into());
    }
    Ok(())
}

/// Linear scan over the lambda grid. `load_at(k)` builds the case for grid
/// point `k`. Returns the last passing `k` and what stopped the scan.
fn scan<F>(
    settings: &LoadabilitySettings,
    cs: &ConstraintSet,
    load_at: F,
) -> (usize, Binding)
where
    F: Fn(usize) -> NetworkCase,
{
    if let Probe::Fail(b) = probe(&load_at(0), cs, &settings.solver) {
        let violation = match b {
            Binding::Constraint { violation } => Some(violation),
            _ => None,
        };
        return (0, Binding::BaseInfeasible { violation });
    }
    let mut last = 0;
    for k in 1..=settings.max_steps {
        match probe(&load_at(k), cs, &settings.solver) {
            Probe::Pass => last = k,
            Probe::Fail(b) => return (last, b),
        }
    }
    (last, Binding::StepLimit)
}

/// Grid point `k` as a multiplier. Computed directly, not accumulated.
pub fn grid_lambda(k: usize, step: f64) -> f64 {
    1.0 + k as f64 * step
}

/// Case with the active load at `bus` scaled (or, for a zero-load bus,
/// raised additively by `k * step` MW).
pub fn scaled_bus_case(case: &NetworkCase, pos: usize, k: usize, step: f64) -> NetworkCase {
    case.with_buses(|b| {
        let base = b[pos].p_load;
        b[pos].p_load = if base > 0.0 {
            base * grid_lambda(k, step)
        } else {
            k as f64 * step
        };
    })
    .expect("scaling a valid load keeps the case valid")
}

pub fn scaled_system_case(case: &NetworkCase, lambda: f64) -> NetworkCase {
    case.with_buses(|b| b.iter_mut().for_each(|x| x.p_load *= lambda))
        .expect("scaling valid loads keeps the case valid")
}

/// Loadability of a single PQ bus.
///
/// Returns [`LoadabilityError::BaseCaseInfeasible`] carrying a record with
/// `lambda_max = 1` when the unscaled case already fails.
pub fn bus_loadability(
    case: &NetworkCase,
    bus: usize,
    settings: &LoadabilitySettings,
    cs: &ConstraintSet,
) -> Result<LoadabilityRecord, LoadabilityError> {
    validate(case, settings, cs)?;
    let pos = case.bus_index(bus).ok_or(LoadabilityError::UnknownBus(bus))?;
    if case.buses()[pos].kind != BusKind::PQ {
        return Err(LoadabilityError::NotPqBus(bus));
    }
    let step = settings.lambda_step;
    let base_mw = case.buses()[pos].p_load;
    let (k, binding) = scan(settings, cs, |k| scaled_bus_case(case, pos, k, step));
    let lambda_max = grid_lambda(k, step);
    let additional_mw = if base_mw > 0.0 {
        (lambda_max - 1.0) * base_mw
    } else {
        k as f64 * step
    };
    let record = LoadabilityRecord {
        bus,
        base_mw,
        lambda_max,
        additional_mw,
        binding,
    };
    if matches!(record.binding, Binding::BaseInfeasible { .. }) {
        return Err(LoadabilityError::BaseCaseInfeasible { record });
    }
    Ok(record)
}

/// One record per PQ bus, in case order. Buses are scanned independently
/// (in parallel); a base-infeasible bus yields its record rather than an
/// error.
pub fn network_loadability(
    case: &NetworkCase,
    settings: &LoadabilitySettings,
    cs: &ConstraintSet,
) -> Result<Vec<LoadabilityRecord>, LoadabilityError> {
    validate(case, settings, cs)?;
    case.pq_bus_ids()
        .into_par_iter()
        .map(|bus| match bus_loadability(case, bus, settings, cs) {
            Ok(r) => Ok(r),
            Err(LoadabilityError::BaseCaseInfeasible { record }) => Ok(record),
            Err(e) => Err(e),
        })
        .collect()
}

/// Uniform scaling of every bus's active load.
pub fn simultaneous_loadability(
    case: &NetworkCase,
    settings: &LoadabilitySettings,
    cs: &ConstraintSet,
) -> Result<SimultaneousLoadability, LoadabilityError> {
    validate(case, settings, cs)?;
    let step = settings.lambda_step;
    let (k, binding) = scan(settings, cs, |k| {
        scaled_system_case(case, grid_lambda(k, step))
    });
    let lambda_max = grid_lambda(k, step);
    let base_mw = case.total_p_load();
    let result = SimultaneousLoadability {
        lambda_max,
        base_mw,
        total_achievable_mw: base_mw * lambda_max,
        additional_mw: base_mw * (lambda_max - 1.0),
        binding,
    };
    if let Binding::BaseInfeasible { .. } = result.binding {
        let record = LoadabilityRecord {
            bus: 0,
            base_mw,
            lambda_max,
            additional_mw: 0.0,
            binding: result.binding,
        };
        return Err(LoadabilityError::BaseCaseInfeasible { record });
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub bus: usize,
    pub additional_mw: f64,
}

/// Top `n` buses by additional MW, descending; equal margins go to the
/// lower bus id first.
pub fn rank_candidates(records: &[LoadabilityRecord], n: usize) -> Vec<Candidate> {
    if n > records.len() {
        log::warn!(
            "requested {n} candidates but only {} records exist; returning all",
            records.len()
        );
    }
    let mut ranked: Vec<Candidate> = records
        .iter()
        .map(|r| Candidate {
            bus: r.bus,
            additional_mw: r.additional_mw,
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.additional_mw
            .total_cmp(&a.additional_mw)
            .then(a.bus.cmp(&b.bus))
    });
    ranked.truncate(n.max(1));
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_model::builtin_ieee33;

    fn base_solution() -> (NetworkCase, PowerFlowSolution) {
        let case = builtin_ieee33();
        let sol = power_flow::solve(&case, &SolverOptions::default()).unwrap();
        (case, sol)
    }

    #[test]
    fn base_case_fails_the_095_band() {
        let (case, sol) = base_solution();
        let cs = ConstraintSet::from_case(&case);
        let report = check_constraints(&sol, &case, &cs);
        assert!(!report.passed());
        assert_eq!(report.violations.len(), 21);
        assert!(report.violations.iter().all(Violation::is_voltage));
        assert!(report.first().unwrap().margin() > 0.0);
    }

    #[test]
    fn base_case_passes_the_090_band() {
        let (case, sol) = base_solution();
        let cs = ConstraintSet::from_case(&case).with_voltage_band(0.90, 1.05);
        assert!(check_constraints(&sol, &case, &cs).passed());
    }

    #[test]
    fn zero_load_passes() {
        let case = builtin_ieee33().zero_loads();
        let sol = power_flow::solve(&case, &SolverOptions::default()).unwrap();
        assert!(check_constraints(&sol, &case, &ConstraintSet::from_case(&case)).passed());
    }

    #[test]
    fn branch_ratings_and_slack_are_checked() {
        let (case, sol) = base_solution();
        let cs = ConstraintSet::stage1(&case)
            .with_branch_ratings(Some(3.0), Some(1.0), Some(0.1))
            .with_slack_bounds(SlackLimits {
                p_min: 0.0,
                p_max: 3.0,
                q_min: -1.0,
                q_max: 10.0,
            });
        let report = check_constraints(&sol, &case, &cs);
        let names: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
        assert!(names.contains(&"line_p@1-2".to_string()));
        assert!(names.contains(&"line_q@1-2".to_string()));
        assert!(names.contains(&"current@1-2".to_string()));
        assert_eq!(names.last().unwrap(), "slack_p");
        // first entry is on the first branch since no voltage fails
        assert_eq!(names[0], "line_p@1-2");
    }

    #[test]
    fn infeasible_base_gives_unit_lambda() {
        let case = builtin_ieee33();
        let cs = ConstraintSet::from_case(&case);
        match bus_loadability(&case, 18, &LoadabilitySettings::default(), &cs) {
            Err(LoadabilityError::BaseCaseInfeasible { record }) => {
                assert_eq!(record.lambda_max, 1.0);
                assert_eq!(record.additional_mw, 0.0);
                assert!(record.binding.to_string().starts_with("base_infeasible"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_slack_and_unknown_bus() {
        let case = builtin_ieee33();
        let cs = ConstraintSet::stage1(&case);
        let s = LoadabilitySettings::default();
        assert_eq!(
            bus_loadability(&case, 1, &s, &cs).unwrap_err(),
            LoadabilityError::NotPqBus(1)
        );
        assert_eq!(
            bus_loadability(&case, 99, &s, &cs).unwrap_err(),
            LoadabilityError::UnknownBus(99)
        );
        let bad = LoadabilitySettings {
            lambda_step: 0.0,
            ..s
        };
        assert!(matches!(
            bus_loadability(&case, 2, &bad, &cs),
            Err(LoadabilityError::InvalidStep(_))
        ));
    }

    #[test]
    fn zero_load_bus_uses_additive_probe() {
        let case = builtin_ieee33()
            .with_buses(|b| b[17].p_load = 0.0)
            .unwrap();
        let cs = ConstraintSet::stage1(&case);
        let settings = LoadabilitySettings {
            lambda_step: 0.05,
            ..Default::default()
        };
        let r = bus_loadability(&case, 18, &settings, &cs).unwrap();
        assert_eq!(r.base_mw, 0.0);
        let k = ((r.lambda_max - 1.0) / 0.05).round();
        assert!((r.additional_mw - k * 0.05).abs() < 1e-12);
        assert!(r.additional_mw > 0.0);
    }

    #[test]
    fn ranking_ties_go_to_lower_bus() {
        let rec = |bus, mw| LoadabilityRecord {
            bus,
            base_mw: 0.1,
            lambda_max: 2.0,
            additional_mw: mw,
            binding: Binding::NonConvergence,
        };
        let records = vec![rec(7, 1.0), rec(3, 1.0), rec(5, 1.0), rec(9, 2.0)];
        let ranked: Vec<usize> = rank_candidates(&records, 10).iter().map(|c| c.bus).collect();
        assert_eq!(ranked, vec![9, 3, 5, 7]);
        assert_eq!(rank_candidates(&records, 1)[0].bus, 9);
    }

    #[test]
    fn simultaneous_already_at_limit() {
        let case = builtin_ieee33();
        let sol = power_flow::solve(&case, &SolverOptions::default()).unwrap();
        // set the floor right at the base-case minimum
        let floor = sol.min_voltage().0 - 1e-9;
        let cs = ConstraintSet::from_case(&case).with_voltage_band(floor, 1.05);
        let r = simultaneous_loadability(&case, &LoadabilitySettings::default(), &cs).unwrap();
        assert_eq!(r.lambda_max, 1.0);
        assert!((r.total_achievable_mw - case.total_p_load()).abs() < 1e-12);
    }
}
