//! KKT certificates for candidate policies.
//!
//! Multipliers are recovered by non-negative least squares over the
//! constraints active at the candidate, in the natural-log form of the
//! Lagrangian (`theta * ln(1 + p)`, no factor one half).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::nnls::nnls;
use crate::domain::{
    cumsum, data_causality_violations, feasibility_violations, ModelKind, PowerSchedule, Scenario,
    TransferSchedule,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct KktOptions {
    /// A constraint with slack at most this is treated as active.
    pub active_tol: f64,
}

impl Default for KktOptions {
    fn default() -> Self {
        Self { active_tol: 1e-6 }
    }
}

/// Recovered multipliers, one entry per slot (zero when inactive or not
/// part of the model).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    /// Node 1 energy causality.
    pub mu: Vec<f64>,
    /// Node 2 energy causality.
    pub eta: Vec<f64>,
    /// Transfer budget (multiple access channel only).
    pub gamma: Vec<f64>,
    /// Data causality (relay only).
    pub lambda: Vec<f64>,
    /// `delta >= 0`.
    pub rho: Vec<f64>,
    pub sigma1: Vec<f64>,
    pub sigma2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// Max-norm of the Lagrangian gradient at the recovered multipliers.
    pub stationarity_residual: f64,
    /// Largest `multiplier * slack` product.
    pub complementary_slackness_residual: f64,
    /// Most negative multiplier, as a positive number (zero when all are >= 0).
    pub dual_feasibility_residual: f64,
    /// Largest constraint violation of the candidate.
    pub primal_feasibility_residual: f64,
    pub active_constraints: usize,
    pub multipliers: Multipliers,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.stationarity_residual
            .max(self.complementary_slackness_residual)
            .max(self.dual_feasibility_residual)
            .max(self.primal_feasibility_residual)
    }

    pub fn satisfied(&self, tol: f64) -> bool {
        self.max_residual() <= tol
    }
}

#[derive(Clone, Copy)]
enum Family {
    Mu,
    Eta,
    Gamma,
    Lambda,
    Rho,
    Sigma1,
    Sigma2,
}

struct Row {
    family: Family,
    slot: usize,
    slack: f64,
    grad: Vec<f64>,
}

/// Stationarity, complementary slackness and dual feasibility residuals of
/// `(p1, p2, delta)` for the model's weighted objective.
///
/// For the relay, node 1 is the source, node 2 the relay, and the weights
/// are ignored. Infeasible candidates are rejected.
pub fn kkt_residuals(
    model: ModelKind,
    theta: (f64, f64),
    s: &Scenario,
    p1: &PowerSchedule,
    p2: &PowerSchedule,
    delta: &TransferSchedule,
    options: &KktOptions,
) -> Result<KktReport> {
    let (th1, th2) = theta;
    if model != ModelKind::Relay && (!(th1 >= 0.0 && th2 >= 0.0) || th1 + th2 <= 0.0 || !th1.is_finite() || !th2.is_finite()) {
        return Err(Error::InvalidWeights(th1, th2));
    }
    let mut violations = feasibility_violations(s, p1, p2, delta)?;
    if model == ModelKind::Relay {
        violations.extend(data_causality_violations(p1, p2)?);
    }
    if !violations.is_empty() {
        return Err(Error::Infeasible(violations));
    }

    let t = s.horizon();
    let n = 3 * t;
    let (x1, x2, d) = (p1.as_slice(), p2.as_slice(), delta.as_slice());
    let c1 = cumsum(s.e1.amounts());
    let c2 = cumsum(s.e2.amounts());
    let (u1, u2, dd) = (cumsum(x1), cumsum(x2), cumsum(d));
    let alpha = s.alpha;

    let mut b = vec![0.0; n];
    for i in 0..t {
        let (g1, g2) = match model {
            ModelKind::TwoWay => (th1 / (1.0 + x1[i]), th2 / (1.0 + x2[i])),
            ModelKind::Relay => (0.0, 1.0 / (1.0 + x2[i])),
            ModelKind::Mac => {
                let sum = 1.0 / (1.0 + x1[i] + x2[i]);
                if th1 >= th2 {
                    ((th1 - th2) / (1.0 + x1[i]) + th2 * sum, th2 * sum)
                } else {
                    (th1 * sum, (th2 - th1) / (1.0 + x2[i]) + th1 * sum)
                }
            }
        };
        b[i] = g1;
        b[t + i] = g2;
    }

    let mut rows = Vec::new();
    let mut push = |family, slot, slack: f64, grad: Vec<f64>| rows.push(Row { family, slot, slack, grad });
    for k in 0..t {
        let mut g = vec![0.0; n];
        for i in 0..=k {
            g[i] = 1.0;
            g[2 * t + i] = 1.0;
        }
        push(Family::Mu, k, c1[k] - dd[k] - u1[k], g);

        let mut g = vec![0.0; n];
        for i in 0..=k {
            g[t + i] = 1.0;
            g[2 * t + i] = -alpha;
        }
        push(Family::Eta, k, c2[k] + alpha * dd[k] - u2[k], g);

        if model == ModelKind::Mac {
            let mut g = vec![0.0; n];
            for i in 0..=k {
                g[2 * t + i] = 1.0;
            }
            push(Family::Gamma, k, c1[k] - dd[k], g);
        }
        if model == ModelKind::Relay {
            let mut g = vec![0.0; n];
            let mut slack = 0.0;
            for i in 0..=k {
                g[i] = -1.0 / (1.0 + x1[i]);
                g[t + i] = 1.0 / (1.0 + x2[i]);
                slack += x1[i].ln_1p() - x2[i].ln_1p();
            }
            push(Family::Lambda, k, slack, g);
        }
    }
    for (family, offset, v) in [(Family::Sigma1, 0, x1), (Family::Sigma2, t, x2), (Family::Rho, 2 * t, d)] {
        for i in 0..t {
            let mut g = vec![0.0; n];
            g[offset + i] = -1.0;
            push(family, i, v[i], g);
        }
    }

    let active: Vec<&Row> = rows.iter().filter(|r| r.slack <= options.active_tol).collect();
    let a = DMatrix::<f64>::from_fn(n, active.len(), |r, c| active[c].grad[r]);
    let bv = DVector::from_vec(b);
    let y = nnls(&a, &bv);
    let stationarity = (&a * &y - &bv).amax();

    let mut m = Multipliers {
        mu: vec![0.0; t],
        eta: vec![0.0; t],
        gamma: vec![0.0; t],
        lambda: vec![0.0; t],
        rho: vec![0.0; t],
        sigma1: vec![0.0; t],
        sigma2: vec![0.0; t],
    };
    let mut comp: f64 = 0.0;
    let mut dual: f64 = 0.0;
    for (row, &val) in active.iter().zip(y.iter()) {
        comp = comp.max((val * row.slack).abs());
        dual = dual.max(-val);
        let slot = match row.family {
            Family::Mu => &mut m.mu,
            Family::Eta => &mut m.eta,
            Family::Gamma => &mut m.gamma,
            Family::Lambda => &mut m.lambda,
            Family::Rho => &mut m.rho,
            Family::Sigma1 => &mut m.sigma1,
            Family::Sigma2 => &mut m.sigma2,
        };
        slot[row.slot] = val;
    }
    let primal = rows.iter().map(|r| -r.slack).fold(0.0_f64, f64::max);

    Ok(KktReport {
        stationarity_residual: stationarity,
        complementary_slackness_residual: comp,
        dual_feasibility_residual: dual,
        primal_feasibility_residual: primal,
        active_constraints: active.len(),
        multipliers: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched(v: &[f64]) -> PowerSchedule {
        PowerSchedule::new(v.to_vec()).unwrap()
    }

    #[test]
    fn water_filled_two_way_passes() {
        // no transfer helps when both users have the same flat profile
        let s = Scenario::new(ModelKind::TwoWay, vec![2., 2.], vec![2., 2.], 0.5).unwrap();
        let r = kkt_residuals(
            ModelKind::TwoWay,
            (1.0, 1.0),
            &s,
            &sched(&[2., 2.]),
            &sched(&[2., 2.]),
            &TransferSchedule::zeros(2),
            &KktOptions::default(),
        )
        .unwrap();
        assert!(r.satisfied(1e-9), "{r:?}");
        assert!((r.multipliers.mu[1] - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn suboptimal_schedule_fails() {
        let s = Scenario::new(ModelKind::TwoWay, vec![4., 0.], vec![2., 2.], 0.5).unwrap();
        let r = kkt_residuals(
            ModelKind::TwoWay,
            (1.0, 1.0),
            &s,
            &sched(&[3., 1.]),
            &sched(&[2., 2.]),
            &TransferSchedule::zeros(2),
            &KktOptions::default(),
        )
        .unwrap();
        assert!(r.stationarity_residual > 1e-3, "{r:?}");
    }

    #[test]
    fn infeasible_rejected() {
        let s = Scenario::new(ModelKind::Mac, vec![1., 1.], vec![1., 1.], 0.5).unwrap();
        let e = kkt_residuals(
            ModelKind::Mac,
            (1.0, 1.0),
            &s,
            &sched(&[2., 0.]),
            &sched(&[1., 1.]),
            &TransferSchedule::zeros(2),
            &KktOptions::default(),
        );
        assert!(matches!(e, Err(Error::Infeasible(_))));
    }
}
