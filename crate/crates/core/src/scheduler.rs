//! Drift-plus-penalty sensor scheduling over AoI, battery and a virtual
//! transmission queue.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::errmodel::{eval_error, ErrorPolyCoeffs};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    /// Drift-penalty weight `V`.
    pub v: f64,
    /// Transmission weight in the total cost.
    pub lambda: f64,
    /// Prediction error threshold `δ`.
    pub delta: f64,
    /// Sensing power drawn every slot, W.
    pub p_s: f64,
    /// Battery recharge period `T'` in slots; `None` never recharges.
    pub recharge_period: Option<usize>,
    pub p_b0: f64,
}

impl SchedulerConfig {
    pub fn table_one() -> Self {
        Self {
            v: 10.0,
            lambda: 1.0,
            delta: 0.3,
            p_s: 1e-5,
            recharge_period: None,
            p_b0: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerState {
    pub q_a: f64,
    /// AoI of the controller's state information after the previous slot.
    pub beta: usize,
    pub p_b: f64,
    /// Norm of the last state the controller received.
    pub x_last_norm: f64,
    pub t: usize,
}

impl SchedulerState {
    pub fn new(cfg: &SchedulerConfig, x0_norm: f64) -> Self {
        Self {
            q_a: 0.0,
            beta: 0,
            p_b: cfg.p_b0,
            x_last_norm: x0_norm,
            t: 0,
        }
    }

    /// Applies one slot's outcome. `delivered` carries the norm of the state
    /// received this slot, if any; the battery pays for every attempt.
    pub fn advance(
        &mut self,
        decision: &Decision,
        delivered: Option<f64>,
        p_sc: f64,
        cfg: &SchedulerConfig,
    ) {
        let a = if decision.a { 1.0 } else { 0.0 };
        self.beta = aoi_update(self.beta, delivered.is_some());
        self.q_a = queue_update(self.q_a, a, decision.gamma);
        self.p_b = battery_update(
            self.p_b,
            a,
            p_sc,
            cfg.p_s,
            self.t,
            cfg.recharge_period,
            cfg.p_b0,
        );
        if let Some(norm) = delivered {
            self.x_last_norm = norm;
        }
        self.t += 1;
    }
}

/// `β = 1 + (1 − a) β_prev`.
pub fn aoi_update(beta_prev: usize, a: bool) -> usize {
    if a {
        1
    } else {
        beta_prev + 1
    }
}

/// `Q_a' = max(Q_a − Γ, 0) + a`.
pub fn queue_update(q_a: f64, a: f64, gamma: f64) -> f64 {
    (q_a - gamma).max(0.0) + a
}

/// `p_b' = max(p_b − a p_SC − p_s, 0)`, reset to `p_b0` when `(t+1) mod T' = 0`.
pub fn battery_update(
    p_b: f64,
    a: f64,
    p_sc: f64,
    p_s: f64,
    t: usize,
    recharge_period: Option<usize>,
    p_b0: f64,
) -> f64 {
    if recharge_period.is_some_and(|period| period > 0 && (t + 1).is_multiple_of(period)) {
        return p_b0;
    }
    (p_b - a * p_sc - p_s).max(0.0)
}

/// `V Γ + Q_a (a − Γ) − p_b (a p_SC + p_s) + β_prev (1 − a)`.
pub fn drift_penalty_objective(
    state: &SchedulerState,
    a: f64,
    gamma: f64,
    cfg: &SchedulerConfig,
    p_sc: f64,
) -> f64 {
    cfg.v * gamma + state.q_a * (a - gamma) - state.p_b * (a * p_sc + cfg.p_s)
        + state.beta as f64 * (1.0 - a)
}

/// Skipping is allowed when the predicted error at the next AoI stays
/// within `δ` (inclusive).
pub fn a0_feasible(
    coeffs: &ErrorPolyCoeffs,
    x_last_norm: f64,
    beta_prev: usize,
    delta: f64,
) -> bool {
    eval_error(coeffs, x_last_norm, (1 + beta_prev) as f64) <= delta
}

/// Coefficients of `ε(n, 1 + (1 − a) β_prev) − δ = c1 a² + c2 a + c3` for a
/// degree-2 surrogate.
pub fn constraint_coefficients(
    coeffs: &ErrorPolyCoeffs,
    n: f64,
    beta_prev: usize,
    delta: f64,
) -> Option<[f64; 3]> {
    if coeffs.degree != 2 || coeffs.alpha.len() != 5 {
        return None;
    }
    let al = &coeffs.alpha;
    let c = 1.0 + beta_prev as f64;
    let d = beta_prev as f64;
    Some([
        al[3] * d * d,
        -al[1] * d - 2.0 * al[3] * c * d - al[4] * n * d,
        al[0] * n + al[1] * c + al[2] * n * n + al[3] * c * c + al[4] * n * c - delta,
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub a: bool,
    pub gamma: f64,
    pub objective: f64,
    pub epsilon: f64,
    pub a0_feasible: bool,
    pub battery_ok: bool,
    /// Neither skipping nor transmitting was feasible.
    pub starved: bool,
    pub constraint: Option<[f64; 3]>,
}

/// The `(a, Γ)` vertices of `{0 ≤ a ≤ Γ ≤ 1}` with binary `a`.
pub const VERTICES: [(bool, f64); 3] = [(false, 0.0), (false, 1.0), (true, 1.0)];

/// Minimizes the per-slot objective over the feasible vertices. The
/// objective is linear in `a` and `Γ`, so a vertex is optimal.
pub fn decide(
    state: &SchedulerState,
    cfg: &SchedulerConfig,
    coeffs: &ErrorPolyCoeffs,
    p_sc: f64,
) -> Decision {
    let epsilon = eval_error(coeffs, state.x_last_norm, (1 + state.beta) as f64);
    let skip_ok = epsilon <= cfg.delta;
    let battery_ok = state.p_b >= p_sc + cfg.p_s;
    let constraint = constraint_coefficients(coeffs, state.x_last_norm, state.beta, cfg.delta);

    let best = VERTICES
        .iter()
        .filter(|(a, _)| if *a { battery_ok } else { skip_ok })
        .map(|&(a, g)| {
            (
                a,
                g,
                drift_penalty_objective(state, if a { 1.0 } else { 0.0 }, g, cfg, p_sc),
            )
        })
        .fold(None::<(bool, f64, f64)>, |acc, c| match acc {
            Some(b) if b.2 <= c.2 => Some(b),
            _ => Some(c),
        });
    match best {
        Some((a, gamma, objective)) => Decision {
            a,
            gamma,
            objective,
            epsilon,
            a0_feasible: skip_ok,
            battery_ok,
            starved: false,
            constraint,
        },
        None => Decision {
            a: false,
            gamma: 0.0,
            objective: drift_penalty_objective(state, 0.0, 0.0, cfg, p_sc),
            epsilon,
            a0_feasible: skip_ok,
            battery_ok,
            starved: true,
            constraint,
        },
    }
}

/// Brute-force reference: binary `a`, `Γ` on a grid of `steps + 1` points,
/// same feasibility rules. Returns the minimum objective, or `None` if
/// nothing is feasible.
pub fn grid_search(
    state: &SchedulerState,
    cfg: &SchedulerConfig,
    coeffs: &ErrorPolyCoeffs,
    p_sc: f64,
    steps: usize,
) -> Option<f64> {
    let skip_ok = a0_feasible(coeffs, state.x_last_norm, state.beta, cfg.delta);
    let battery_ok = state.p_b >= p_sc + cfg.p_s;
    let mut best: Option<f64> = None;
    let grid: Vec<f64> = (0..=steps).map(|i| i as f64 / steps as f64).collect();
    for a in [0.0, 1.0] {
        if (a == 0.0 && !skip_ok) || (a == 1.0 && !battery_ok) {
            continue;
        }
        for &g in grid.iter().filter(|g| **g >= a) {
            let o = drift_penalty_objective(state, a, g, cfg, p_sc);
            best = Some(best.map_or(o, |b: f64| b.min(o)));
        }
    }
    best
}
