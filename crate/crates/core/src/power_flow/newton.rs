//! Polar-form Newton-Raphson on the nodal power-balance equations.
//!
//! Unknowns are the angles and magnitudes of every PQ bus, ordered
//! `[theta_pq..., vm_pq...]`. The mismatch is `calculated - scheduled`
//! injection, P rows first, then Q rows.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::case_model::{BusKind, NetworkCase};

pub struct PolarProblem {
    ybus: DMatrix<Complex64>,
    pq: Vec<usize>,
    slack: usize,
    /// Scheduled net injection, p.u.
    p_spec: Vec<f64>,
    q_spec: Vec<f64>,
    v_slack: f64,
}

pub fn admittance_matrix(case: &NetworkCase) -> DMatrix<Complex64> {
    let n = case.bus_count();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for br in case.branches().iter().filter(|b| b.in_service) {
        let (g, b) = br.series_admittance();
        let ys = Complex64::new(g, b);
        let ysh = Complex64::new(0.0, br.b_shunt / 2.0);
        y[(br.from, br.from)] += ys + ysh;
        y[(br.to, br.to)] += ys + ysh;
        y[(br.from, br.to)] -= ys;
        y[(br.to, br.from)] -= ys;
    }
    y
}

impl PolarProblem {
    pub fn from_case(case: &NetworkCase) -> Self {
        let base = case.base_mva();
        let pq = case
            .buses()
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == BusKind::PQ)
            .map(|(k, _)| k)
            .collect();
        let slack = case.slack_index();
        PolarProblem {
            ybus: admittance_matrix(case),
            pq,
            slack,
            p_spec: case.buses().iter().map(|b| -b.p_net() / base).collect(),
            q_spec: case.buses().iter().map(|b| -b.q_load / base).collect(),
            v_slack: case.buses()[slack].v_set,
        }
    }

    pub fn bus_count(&self) -> usize {
        self.p_spec.len()
    }

    pub fn pq_buses(&self) -> &[usize] {
        &self.pq
    }

    pub fn ybus(&self) -> &DMatrix<Complex64> {
        &self.ybus
    }

    /// Flat start: every magnitude 1.0 except the slack setpoint, every angle 0.
    pub fn flat_start(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.bus_count();
        let mut vm = vec![1.0; n];
        vm[self.slack] = self.v_slack;
        (vec![0.0; n], vm)
    }

    /// Calculated complex injection at every bus, p.u.
    pub fn injections(&self, theta: &[f64], vm: &[f64]) -> Vec<Complex64> {
        let n = self.bus_count();
        let v: Vec<Complex64> = (0..n)
            .map(|k| Complex64::from_polar(vm[k], theta[k]))
            .collect();
        (0..n)
            .map(|i| {
                let current: Complex64 = (0..n).map(|k| self.ybus[(i, k)] * v[k]).sum();
                v[i] * current.conj()
            })
            .collect()
    }

    pub fn mismatch(&self, theta: &[f64], vm: &[f64]) -> DVector<f64> {
        let s = self.injections(theta, vm);
        let m = self.pq.len();
        let mut f = DVector::zeros(2 * m);
        for (r, &i) in self.pq.iter().enumerate() {
            f[r] = s[i].re - self.p_spec[i];
            f[m + r] = s[i].im - self.q_spec[i];
        }
        f
    }

    /// Analytic Jacobian of [`mismatch`](Self::mismatch) with respect to
    /// `[theta_pq, vm_pq]`.
    pub fn jacobian(&self, theta: &[f64], vm: &[f64]) -> DMatrix<f64> {
        let s = self.injections(theta, vm);
        let m = self.pq.len();
        let mut j = DMatrix::zeros(2 * m, 2 * m);
        for (r, &i) in self.pq.iter().enumerate() {
            for (c, &k) in self.pq.iter().enumerate() {
                let y = self.ybus[(i, k)];
                let (g, b) = (y.re, y.im);
                if i == k {
                    let (p, q) = (s[i].re, s[i].im);
                    let v = vm[i];
                    j[(r, c)] = -q - b * v * v;
                    j[(r, m + c)] = p / v + g * v;
                    j[(m + r, c)] = p - g * v * v;
                    j[(m + r, m + c)] = q / v - b * v;
                } else {
                    if y.norm() == 0.0 {
                        continue;
                    }
                    let t = theta[i] - theta[k];
                    let (sin, cos) = t.sin_cos();
                    let a = g * cos + b * sin;
                    let d = g * sin - b * cos;
                    j[(r, c)] = vm[i] * vm[k] * d;
                    j[(r, m + c)] = vm[i] * a;
                    j[(m + r, c)] = -vm[i] * vm[k] * a;
                    j[(m + r, m + c)] = vm[i] * d;
                }
            }
        }
        j
    }

    /// Applies a Newton step `dx` (same ordering as the Jacobian columns).
    pub fn apply_step(&self, theta: &mut [f64], vm: &mut [f64], dx: &DVector<f64>) {
        let m = self.pq.len();
        for (r, &i) in self.pq.iter().enumerate() {
            theta[i] += dx[r];
            vm[i] += dx[m + r];
        }
    }
}

pub(crate) struct NewtonOutcome {
    pub theta: Vec<f64>,
    pub vm: Vec<f64>,
    pub iterations: usize,
    pub mismatch: f64,
    pub converged: bool,
}

pub(crate) fn iterate(problem: &PolarProblem, tol: f64, max_iter: usize) -> NewtonOutcome {
    let (mut theta, mut vm) = problem.flat_start();
    let mut iterations = 0;
    loop {
        let f = problem.mismatch(&theta, &vm);
        let norm = f.amax();
        if !norm.is_finite() {
            return NewtonOutcome {
                theta,
                vm,
                iterations,
                mismatch: f64::INFINITY,
                converged: false,
            };
        }
        if norm < tol {
            return NewtonOutcome {
                theta,
                vm,
                iterations,
                mismatch: norm,
                converged: true,
            };
        }
        if iterations >= max_iter {
            return NewtonOutcome {
                theta,
                vm,
                iterations,
                mismatch: norm,
                converged: false,
            };
        }
        let jac = problem.jacobian(&theta, &vm);
        let Some(dx) = jac.lu().solve(&(-f)) else {
            return NewtonOutcome {
                theta,
                vm,
                iterations,
                mismatch: norm,
                converged: false,
            };
        };
        problem.apply_step(&mut theta, &mut vm, &dx);
        iterations += 1;
        if vm.iter().any(|&v| v <= 0.0) {
            let mismatch = problem.mismatch(&theta, &vm).amax();
            return NewtonOutcome {
                theta,
                vm,
                iterations,
                mismatch,
                converged: false,
            };
        }
    }
}
