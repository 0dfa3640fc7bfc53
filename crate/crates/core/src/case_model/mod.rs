//! Network data model for radial distribution feeders.
//!
//! A [`NetworkCase`] holds buses, branches and the slack interconnection
//! limits. Bus ids are the 1-based numbers used in case files; branch
//! endpoints are stored as dense 0-based positions into `buses`.

mod ieee33;
mod parse;
mod topology;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ieee33::{builtin_case, builtin_ieee33, builtin_ieee33_baran_wu, BUILTIN_NAMES};
pub use parse::{parse_case, parse_case_with_warnings, serialize_case, ParseWarning};
pub use topology::{validate_radial, TopologyReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing required matrix `{0}`")]
    MissingMatrix(&'static str),
    #[error("line {line}: `{matrix}` row has {found} columns, expected at least {expected}")]
    ShortRow {
        line: usize,
        matrix: &'static str,
        found: usize,
        expected: usize,
    },
    #[error("duplicate bus id {0}")]
    DuplicateBus(usize),
    #[error("no slack bus")]
    NoSlack,
    #[error("multiple slack buses ({0:?})")]
    MultipleSlack(Vec<usize>),
    #[error("bus {bus}: unsupported bus type {kind}")]
    UnsupportedBusType { bus: usize, kind: i64 },
    #[error("bus {bus}: {message}")]
    InvalidBus { bus: usize, message: String },
    #[error("branch {from}-{to}: {message}")]
    InvalidBranch {
        from: usize,
        to: usize,
        message: String,
    },
    #[error("branch {from}-{to} references unknown bus {bus}")]
    UnknownBus { from: usize, to: usize, bus: usize },
    #[error("invalid slack limits: {0}")]
    InvalidSlackLimits(String),
    #[error("base MVA must be positive, got {0}")]
    InvalidBaseMva(f64),
    #[error("network is not radial (connected: {connected}, acyclic: {acyclic})")]
    NotRadial { connected: bool, acyclic: bool },
    #[error("unknown builtin case `{0}`")]
    UnknownBuiltin(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusKind {
    Slack,
    PQ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusRecord {
    /// External 1-based bus number.
    pub id: usize,
    pub kind: BusKind,
    /// Active demand, MW.
    pub p_load: f64,
    /// Reactive demand, MVar.
    pub q_load: f64,
    /// Active injection from embedded generation, MW (unity power factor).
    pub p_gen: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub base_kv: f64,
    /// Voltage setpoint, p.u. Only meaningful on the slack bus.
    pub v_set: f64,
}

impl BusRecord {
    pub fn pq(id: usize, p_load: f64, q_load: f64, base_kv: f64) -> Self {
        BusRecord {
            id,
            kind: BusKind::PQ,
            p_load,
            q_load,
            p_gen: 0.0,
            v_min: DEFAULT_V_MIN,
            v_max: DEFAULT_V_MAX,
            base_kv,
            v_set: 1.0,
        }
    }

    pub fn slack(id: usize, base_kv: f64) -> Self {
        BusRecord {
            kind: BusKind::Slack,
            ..BusRecord::pq(id, 0.0, 0.0, base_kv)
        }
    }

    /// Net active withdrawal, MW.
    pub fn p_net(&self) -> f64 {
        self.p_load - self.p_gen
    }
}

pub const DEFAULT_V_MIN: f64 = 0.95;
pub const DEFAULT_V_MAX: f64 = 1.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    /// 0-based position of the from bus in `NetworkCase::buses`.
    pub from: usize,
    /// 0-based position of the to bus.
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance, p.u.
    pub b_shunt: f64,
    /// Active flow rating, MW. `None` is unbounded.
    pub pl_max: Option<f64>,
    pub ql_max: Option<f64>,
    /// Current rating, p.u.
    pub i_max: Option<f64>,
    pub in_service: bool,
}

impl BranchRecord {
    pub fn new(from: usize, to: usize, r: f64, x: f64) -> Self {
        BranchRecord {
            from,
            to,
            r,
            x,
            b_shunt: 0.0,
            pl_max: None,
            ql_max: None,
            i_max: None,
            in_service: true,
        }
    }

    /// Series conductance and susceptance, `1 / (r + jx)`.
    pub fn series_admittance(&self) -> (f64, f64) {
        let d = self.r * self.r + self.x * self.x;
        (self.r / d, -self.x / d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlackLimits {
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
}

impl Default for SlackLimits {
    fn default() -> Self {
        SlackLimits {
            p_min: -10.0,
            p_max: 10.0,
            q_min: -10.0,
            q_max: 10.0,
        }
    }
}

impl SlackLimits {
    fn validate(&self) -> Result<(), CaseError> {
        if !(self.p_min <= self.p_max) {
            return Err(CaseError::InvalidSlackLimits(format!(
                "p_min {} > p_max {}",
                self.p_min, self.p_max
            )));
        }
        if !(self.q_min <= self.q_max) {
            return Err(CaseError::InvalidSlackLimits(format!(
                "q_min {} > q_max {}",
                self.q_min, self.q_max
            )));
        }
        Ok(())
    }
}

/// Immutable description of a feeder. Construct through [`NetworkCase::new`],
/// which checks the per-record invariants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    base_mva: f64,
    buses: Vec<BusRecord>,
    branches: Vec<BranchRecord>,
    slack_limits: SlackLimits,
    slack: usize,
}

impl NetworkCase {
    pub fn new(
        base_mva: f64,
        buses: Vec<BusRecord>,
        branches: Vec<BranchRecord>,
        slack_limits: SlackLimits,
    ) -> Result<Self, CaseError> {
        if !(base_mva > 0.0) || !base_mva.is_finite() {
            return Err(CaseError::InvalidBaseMva(base_mva));
        }
        let mut seen = std::collections::HashSet::new();
        for bus in &buses {
            if !seen.insert(bus.id) {
                return Err(CaseError::DuplicateBus(bus.id));
            }
            if !(bus.v_min < bus.v_max) {
                return Err(CaseError::InvalidBus {
                    bus: bus.id,
                    message: format!("v_min {} must be below v_max {}", bus.v_min, bus.v_max),
                });
            }
            if !(bus.p_load >= 0.0) {
                return Err(CaseError::InvalidBus {
                    bus: bus.id,
                    message: format!("negative active load {}", bus.p_load),
                });
            }
            if !bus.q_load.is_finite() || !bus.p_gen.is_finite() {
                return Err(CaseError::InvalidBus {
                    bus: bus.id,
                    message: "non-finite power".into(),
                });
            }
        }
        let slacks: Vec<usize> = buses
            .iter()
            .filter(|b| b.kind == BusKind::Slack)
            .map(|b| b.id)
            .collect();
        let slack = match slacks.len() {
            0 => return Err(CaseError::NoSlack),
            1 => buses.iter().position(|b| b.kind == BusKind::Slack).unwrap(),
            _ => return Err(CaseError::MultipleSlack(slacks)),
        };
        for br in &branches {
            let (fid, tid) = (
                buses.get(br.from).map_or(0, |b| b.id),
                buses.get(br.to).map_or(0, |b| b.id),
            );
            if br.from >= buses.len() || br.to >= buses.len() {
                return Err(CaseError::UnknownBus {
                    from: fid,
                    to: tid,
                    bus: if br.from >= buses.len() { br.from } else { br.to },
                });
            }
            let bad = |message: &str| CaseError::InvalidBranch {
                from: fid,
                to: tid,
                message: message.to_string(),
            };
            if br.from == br.to {
                return Err(bad("from and to bus are the same"));
            }
            if !(br.r >= 0.0) {
                return Err(bad("negative resistance"));
            }
            if br.x == 0.0 && br.r == 0.0 {
                return Err(bad("zero impedance"));
            }
            for limit in [br.pl_max, br.ql_max, br.i_max].into_iter().flatten() {
                if !(limit > 0.0) {
                    return Err(bad("ratings must be positive"));
                }
            }
        }
        slack_limits.validate()?;
        Ok(NetworkCase {
            base_mva,
            buses,
            branches,
            slack_limits,
            slack,
        })
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn buses(&self) -> &[BusRecord] {
        &self.buses
    }

    pub fn branches(&self) -> &[BranchRecord] {
        &self.branches
    }

    pub fn slack_limits(&self) -> SlackLimits {
        self.slack_limits
    }

    /// Position of the slack bus in `buses()`.
    pub fn slack_index(&self) -> usize {
        self.slack
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    /// Maps an external bus id to its position.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn total_p_load(&self) -> f64 {
        self.buses.iter().map(|b| b.p_load).sum()
    }

    pub fn total_q_load(&self) -> f64 {
        self.buses.iter().map(|b| b.q_load).sum()
    }

    pub fn total_p_gen(&self) -> f64 {
        self.buses.iter().map(|b| b.p_gen).sum()
    }

    /// Returns a copy with edits applied to the bus records. Re-validates.
    pub fn with_buses<F>(&self, edit: F) -> Result<NetworkCase, CaseError>
    where
        F: FnOnce(&mut [BusRecord]),
    {
        let mut buses = self.buses.clone();
        edit(&mut buses);
        NetworkCase::new(
            self.base_mva,
            buses,
            self.branches.clone(),
            self.slack_limits,
        )
    }

    pub fn with_branches<F>(&self, edit: F) -> Result<NetworkCase, CaseError>
    where
        F: FnOnce(&mut Vec<BranchRecord>),
    {
        let mut branches = self.branches.clone();
        edit(&mut branches);
        NetworkCase::new(
            self.base_mva,
            self.buses.clone(),
            branches,
            self.slack_limits,
        )
    }

    pub fn with_slack_limits(&self, limits: SlackLimits) -> Result<NetworkCase, CaseError> {
        limits.validate()?;
        Ok(NetworkCase {
            slack_limits: limits,
            ..self.clone()
        })
    }

    /// Same network with every load removed.
    pub fn zero_loads(&self) -> NetworkCase {
        let mut case = self.clone();
        for bus in &mut case.buses {
            bus.p_load = 0.0;
            bus.q_load = 0.0;
            bus.p_gen = 0.0;
        }
        case
    }

    /// External ids of the PQ buses, in case order.
    pub fn pq_bus_ids(&self) -> Vec<usize> {
        self.buses
            .iter()
            .filter(|b| b.kind == BusKind::PQ)
            .map(|b| b.id)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bus() -> NetworkCase {
        NetworkCase::new(
            100.0,
            vec![BusRecord::slack(1, 12.66), BusRecord::pq(2, 1.0, 0.0, 12.66)],
            vec![BranchRecord::new(0, 1, 0.05, 0.05)],
            SlackLimits::default(),
        )
        .unwrap()
    }

    #[test]
    fn rejects_zero_impedance_and_self_loop() {
        let buses = two_bus().buses().to_vec();
        let err = NetworkCase::new(
            100.0,
            buses.clone(),
            vec![BranchRecord::new(0, 1, 0.0, 0.0)],
            SlackLimits::default(),
        )
        .unwrap_err();
        assert!(matches!(err, CaseError::InvalidBranch { .. }));
        let err = NetworkCase::new(
            100.0,
            buses,
            vec![BranchRecord::new(1, 1, 0.1, 0.1)],
            SlackLimits::default(),
        )
        .unwrap_err();
        assert!(matches!(err, CaseError::InvalidBranch { .. }));
    }

    #[test]
    fn rejects_inverted_voltage_band() {
        let err = two_bus()
            .with_buses(|b| {
                b[1].v_min = 1.1;
            })
            .unwrap_err();
        assert!(matches!(err, CaseError::InvalidBus { bus: 2, .. }));
    }

    #[test]
    fn slack_count_is_enforced() {
        let err = two_bus()
            .with_buses(|b| b[1].kind = BusKind::Slack)
            .unwrap_err();
        assert_eq!(err, CaseError::MultipleSlack(vec![1, 2]));
        let err = two_bus().with_buses(|b| b[0].kind = BusKind::PQ).unwrap_err();
        assert_eq!(err, CaseError::NoSlack);
    }

    #[test]
    fn series_admittance_matches_inverse() {
        let br = BranchRecord::new(0, 1, 0.3, 0.4);
        let (g, b) = br.series_admittance();
        assert!((g - 0.3 / 0.25).abs() < 1e-12);
        assert!((b + 0.4 / 0.25).abs() < 1e-12);
    }

    #[test]
    fn slack_limits_must_be_ordered() {
        let err = two_bus()
            .with_slack_limits(SlackLimits {
                p_min: 5.0,
                p_max: 1.0,
                ..SlackLimits::default()
            })
            .unwrap_err();
        assert!(matches!(err, CaseError::InvalidSlackLimits(_)));
    }
}
