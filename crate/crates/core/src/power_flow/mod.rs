//! AC power flow for radial feeders.
//!
//! [`solve`] runs Newton-Raphson from a flat start and returns voltages,
//! branch flows at both ends, sending-end currents, slack injection and
//! losses. Loads are constant power.
//!
//! Branch quantities use the from bus as the sending end. For a branch with
//! no line charging the current magnitude is the same at both ends, so the
//! choice only matters for user cases with `b_shunt != 0`.

pub mod newton;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::case_model::{validate_radial, NetworkCase};
use newton::PolarProblem;

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerFlowError {
    #[error("power flow did not converge after {iterations} iterations (mismatch {mismatch:e} p.u.)")]
    NonConvergence { iterations: usize, mismatch: f64 },
    #[error("network is not radial")]
    NotRadial,
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: DEFAULT_TOLERANCE,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Power entering the branch at each end, MW / MVar.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct BranchFlow {
    pub p_from: f64,
    pub q_from: f64,
    pub p_to: f64,
    pub q_to: f64,
}

impl BranchFlow {
    pub fn p_loss(&self) -> f64 {
        self.p_from + self.p_to
    }

    pub fn q_loss(&self) -> f64 {
        self.q_from + self.q_to
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerFlowSolution {
    pub v_mag: Vec<f64>,
    /// Radians.
    pub v_ang: Vec<f64>,
    /// Slack generation, MW (covers any load at the slack bus).
    pub slack_p: f64,
    pub slack_q: f64,
    pub branch_flows: Vec<BranchFlow>,
    /// Sending-end current magnitude, p.u.
    pub branch_current: Vec<f64>,
    pub p_loss_total: f64,
    pub q_loss_total: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Largest nodal mismatch at exit, p.u.
    pub max_mismatch: f64,
}

impl PowerFlowSolution {
    /// Lowest voltage magnitude and the position of its bus.
    pub fn min_voltage(&self) -> (f64, usize) {
        self.v_mag
            .iter()
            .copied()
            .enumerate()
            .fold((f64::INFINITY, 0), |acc, (k, v)| if v < acc.0 { (v, k) } else { acc })
    }

    pub fn max_voltage(&self) -> (f64, usize) {
        self.v_mag
            .iter()
            .copied()
            .enumerate()
            .fold((f64::NEG_INFINITY, 0), |acc, (k, v)| if v > acc.0 { (v, k) } else { acc })
    }

    fn phasor(&self, k: usize) -> Complex64 {
        Complex64::from_polar(self.v_mag[k], self.v_ang[k])
    }
}

pub fn solve(case: &NetworkCase, opts: &SolverOptions) -> Result<PowerFlowSolution, PowerFlowError> {
    if !(opts.tol > 0.0) {
        return Err(PowerFlowError::InvalidTolerance(opts.tol));
    }
    if !validate_radial(case).is_tree() {
        return Err(PowerFlowError::NotRadial);
    }
    let problem = PolarProblem::from_case(case);
    let out = newton::iterate(&problem, opts.tol, opts.max_iter);
    if !out.converged {
        return Err(PowerFlowError::NonConvergence {
            iterations: out.iterations,
            mismatch: out.mismatch,
        });
    }

    let base = case.base_mva();
    let slack = case.slack_index();
    let s_slack = problem.injections(&out.theta, &out.vm)[slack] * base;
    let slack_bus = &case.buses()[slack];

    let mut sol = PowerFlowSolution {
        v_mag: out.vm,
        v_ang: out.theta,
        slack_p: s_slack.re + slack_bus.p_net(),
        slack_q: s_slack.im + slack_bus.q_load,
        branch_flows: Vec::new(),
        branch_current: Vec::new(),
        p_loss_total: 0.0,
        q_loss_total: 0.0,
        converged: true,
        iterations: out.iterations,
        max_mismatch: out.mismatch,
    };
    sol.branch_flows = line_flows(&sol, case);
    sol.branch_current = branch_currents(&sol, case);
    sol.p_loss_total = sol.branch_flows.iter().map(BranchFlow::p_loss).sum();
    sol.q_loss_total = sol.branch_flows.iter().map(BranchFlow::q_loss).sum();
    Ok(sol)
}

/// Flows at both ends of every branch, from the pi model:
///
/// `PL_mn = g V_m^2 - V_m V_n (g cos t + b sin t)`
/// `QL_mn = -(b + b_sh/2) V_m^2 - V_m V_n (g sin t - b cos t)`
///
/// with `g + jb = 1/(r + jx)` and `t = theta_m - theta_n`. Open branches
/// carry nothing.
pub fn line_flows(sol: &PowerFlowSolution, case: &NetworkCase) -> Vec<BranchFlow> {
    let base = case.base_mva();
    case.branches()
        .iter()
        .map(|br| {
            if !br.in_service {
                return BranchFlow::default();
            }
            let (g, b) = br.series_admittance();
            let half = br.b_shunt / 2.0;
            let end = |m: usize, n: usize| {
                let (vm, vn) = (sol.v_mag[m], sol.v_mag[n]);
                let (sin, cos) = (sol.v_ang[m] - sol.v_ang[n]).sin_cos();
                let p = g * vm * vm - vm * vn * (g * cos + b * sin);
                let q = -(b + half) * vm * vm - vm * vn * (g * sin - b * cos);
                (p * base, q * base)
            };
            let (p_from, q_from) = end(br.from, br.to);
            let (p_to, q_to) = end(br.to, br.from);
            BranchFlow {
                p_from,
                q_from,
                p_to,
                q_to,
            }
        })
        .collect()
}

/// Total active loss, MW, as `sum (PL^2 + QL^2) / V_m^2 * R` over branches,
/// where `PL + jQL` is the sending-end flow through the series impedance.
pub fn total_active_loss(sol: &PowerFlowSolution, case: &NetworkCase) -> f64 {
    let base = case.base_mva();
    case.branches()
        .iter()
        .filter(|br| br.in_service)
        .map(|br| {
            let (g, b) = br.series_admittance();
            let (vm, vn) = (sol.phasor(br.from), sol.phasor(br.to));
            let s = vm * ((vm - vn) * Complex64::new(g, b)).conj();
            s.norm_sqr() / vm.norm_sqr() * br.r
        })
        .sum::<f64>()
        * base
}

/// `|S_mn| / |V_m|` at the from end, p.u.
pub fn branch_currents(sol: &PowerFlowSolution, case: &NetworkCase) -> Vec<f64> {
    let base = case.base_mva();
    case.branches()
        .iter()
        .zip(line_flows(sol, case))
        .map(|(br, f)| {
            if !br.in_service {
                return 0.0;
            }
            Complex64::new(f.p_from, f.q_from).norm() / base / sol.v_mag[br.from]
        })
        .collect()
}
