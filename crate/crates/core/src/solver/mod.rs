//! Generic concave maximization over the energy causality set, and KKT
//! certificates for any candidate policy.

pub(crate) mod ipm;
mod kkt;
mod nnls;

use nalgebra::DMatrix;

use crate::domain::{cumsum, rate, PowerSchedule, Scenario, TransferSchedule};
use crate::error::{Error, Result};

pub use kkt::{kkt_residuals, KktOptions, KktReport, Multipliers};

use ipm::{Constraint, ConvexObjective};

/// Default duality-gap target of [`maximize_concave_over_causality`].
pub const DEFAULT_TOL: f64 = 1e-10;

/// Feasible set of `(p1, p2, delta)`: node 1 may beam `delta_k` to node 2,
/// which receives `alpha * delta_k`.
#[derive(Debug, Clone)]
pub struct CausalityPolytope {
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    pub alpha: f64,
    /// When false, `delta` is pinned to zero.
    pub transfer: bool,
    /// Adds `sum_{i<=k} delta_i <= sum_{i<=k} e1_i`, implied by the other
    /// constraints whenever `p1 >= 0`.
    pub include_transfer_budget: bool,
}

impl CausalityPolytope {
    pub fn from_scenario(s: &Scenario, transfer: bool) -> Self {
        Self {
            e1: s.e1.amounts().to_vec(),
            e2: s.e2.amounts().to_vec(),
            alpha: s.alpha,
            transfer: transfer && s.alpha > 0.0,
            include_transfer_budget: false,
        }
    }

    pub fn horizon(&self) -> usize {
        self.e1.len()
    }
}

/// A smooth concave objective over the stacked vector `[p1, p2, delta]`.
pub trait ConcaveObjective {
    fn value(&self, x: &[f64]) -> f64;
    /// Adds the gradient into `g`.
    fn gradient(&self, x: &[f64], g: &mut [f64]);
    /// Adds the (negative semidefinite) Hessian into `h`.
    fn hessian(&self, x: &[f64], h: &mut DMatrix<f64>);
}

const BITS_PER_NAT: f64 = 0.5 / std::f64::consts::LN_2;

/// `theta1 * R(p1) + theta2 * R(p2)` in bits, the two-way objective.
#[derive(Debug, Clone, Copy)]
pub struct WeightedSumRate {
    pub theta1: f64,
    pub theta2: f64,
}

impl ConcaveObjective for WeightedSumRate {
    fn value(&self, x: &[f64]) -> f64 {
        let t = x.len() / 3;
        (0..t)
            .map(|i| self.theta1 * rate(x[i]) + self.theta2 * rate(x[t + i]))
            .sum()
    }
    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        let t = x.len() / 3;
        for i in 0..t {
            g[i] += BITS_PER_NAT * self.theta1 / (1.0 + x[i]);
            g[t + i] += BITS_PER_NAT * self.theta2 / (1.0 + x[t + i]);
        }
    }
    fn hessian(&self, x: &[f64], h: &mut DMatrix<f64>) {
        let t = x.len() / 3;
        for i in 0..t {
            h[(i, i)] -= BITS_PER_NAT * self.theta1 / (1.0 + x[i]).powi(2);
            h[(t + i, t + i)] -= BITS_PER_NAT * self.theta2 / (1.0 + x[t + i]).powi(2);
        }
    }
}

/// Weighted sum rate at the MAC pentagon corner the weights select: the
/// heavier user is decoded last and sees no interference.
#[derive(Debug, Clone, Copy)]
pub struct MacCornerRate {
    pub theta1: f64,
    pub theta2: f64,
}

impl MacCornerRate {
    /// (weight on the own-rate term of user 1, of user 2, weight on the sum term)
    fn split(&self) -> (f64, f64, f64) {
        if self.theta1 >= self.theta2 {
            (self.theta1 - self.theta2, 0.0, self.theta2)
        } else {
            (0.0, self.theta2 - self.theta1, self.theta1)
        }
    }
}

impl ConcaveObjective for MacCornerRate {
    fn value(&self, x: &[f64]) -> f64 {
        let t = x.len() / 3;
        let (a, b, c) = self.split();
        (0..t)
            .map(|i| a * rate(x[i]) + b * rate(x[t + i]) + c * rate(x[i] + x[t + i]))
            .sum()
    }
    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        let t = x.len() / 3;
        let (a, b, c) = self.split();
        for i in 0..t {
            let s = c / (1.0 + x[i] + x[t + i]);
            g[i] += BITS_PER_NAT * (a / (1.0 + x[i]) + s);
            g[t + i] += BITS_PER_NAT * (b / (1.0 + x[t + i]) + s);
        }
    }
    fn hessian(&self, x: &[f64], h: &mut DMatrix<f64>) {
        let t = x.len() / 3;
        let (a, b, c) = self.split();
        for i in 0..t {
            let s = c / (1.0 + x[i] + x[t + i]).powi(2);
            h[(i, i)] -= BITS_PER_NAT * (a / (1.0 + x[i]).powi(2) + s);
            h[(t + i, t + i)] -= BITS_PER_NAT * (b / (1.0 + x[t + i]).powi(2) + s);
            h[(i, t + i)] -= BITS_PER_NAT * s;
            h[(t + i, i)] -= BITS_PER_NAT * s;
        }
    }
}

/// Output of [`maximize_concave_over_causality`].
#[derive(Debug, Clone)]
pub struct Solution {
    pub p1: PowerSchedule,
    pub p2: PowerSchedule,
    pub delta: TransferSchedule,
    pub objective: f64,
    /// Certified bound on the distance to the optimal objective.
    pub gap: f64,
    pub iterations: usize,
    pub gap_history: Vec<f64>,
}

struct Negated<'a>(&'a dyn ConcaveObjective);

impl ConvexObjective for Negated<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        -self.0.value(x)
    }
    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        let mut tmp = vec![0.0; g.len()];
        self.0.gradient(x, &mut tmp);
        g.iter_mut().zip(tmp).for_each(|(a, b)| *a -= b);
    }
    fn add_hessian(&self, x: &[f64], h: &mut DMatrix<f64>) {
        let mut tmp = DMatrix::zeros(h.nrows(), h.ncols());
        self.0.hessian(x, &mut tmp);
        *h -= tmp;
    }
}

/// Maximizes a concave objective over the causality polytope with a
/// primal-dual interior point method, stopping once the duality gap is
/// below `tol`.
///
/// Variables that every feasible point pins to zero (no energy has arrived
/// yet) are removed first so that a strictly feasible start exists.
pub fn maximize_concave_over_causality(
    objective: &dyn ConcaveObjective,
    polytope: &CausalityPolytope,
    tol: f64,
) -> Result<Solution> {
    let t = polytope.horizon();
    if polytope.e2.len() != t {
        return Err(Error::LengthMismatch {
            expected: t,
            got: polytope.e2.len(),
        });
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Precondition(format!("tolerance must be positive, got {tol}")));
    }
    let c1 = cumsum(&polytope.e1);
    let c2 = cumsum(&polytope.e2);
    let alpha = polytope.alpha;
    let transfer = polytope.transfer && alpha > 0.0;

    let mut free = vec![false; 3 * t];
    for k in 0..t {
        free[k] = c1[k] > 0.0;
        free[t + k] = c2[k] + if transfer { alpha * c1[k] } else { 0.0 } > 0.0;
        free[2 * t + k] = transfer && c1[k] > 0.0;
    }

    let mut cons = Vec::with_capacity(6 * t);
    for k in 0..t {
        let mut src: Vec<(usize, f64)> = (0..=k).map(|i| (i, 1.0)).collect();
        let mut dst: Vec<(usize, f64)> = (0..=k).map(|i| (t + i, 1.0)).collect();
        if transfer {
            src.extend((0..=k).map(|i| (2 * t + i, 1.0)));
            dst.extend((0..=k).map(|i| (2 * t + i, -alpha)));
            if polytope.include_transfer_budget {
                cons.push(Constraint {
                    linear: (0..=k).map(|i| (2 * t + i, 1.0)).collect(),
                    exp_terms: vec![],
                    rhs: c1[k],
                });
            }
        }
        cons.push(Constraint { linear: src, exp_terms: vec![], rhs: c1[k] });
        cons.push(Constraint { linear: dst, exp_terms: vec![], rhs: c2[k] });
    }
    cons.extend(nonnegativity(&free));

    let mut weights = vec![1.0; 3 * t];
    for k in 0..t {
        if c2[k] <= 0.0 {
            weights[t + k] = alpha / (4.0 * t as f64);
        }
    }
    let scale = c1[t - 1].max(c2[t - 1]).max(1e-300);
    let x0 = interior_start(&cons, &free, &weights, scale)?;
    let r = ipm::minimize(&Negated(objective), &cons, x0, &free, tol)?;

    let value = objective.value(&r.x);
    if !value.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    let mut x = r.x;
    x.iter_mut().for_each(|v| {
        if *v < 1e-12 {
            *v = 0.0
        }
    });
    Ok(Solution {
        p1: PowerSchedule::from_solver(x[..t].to_vec()),
        p2: PowerSchedule::from_solver(x[t..2 * t].to_vec()),
        delta: TransferSchedule::from_solver(x[2 * t..].to_vec()),
        objective: objective.value(&x),
        gap: r.gap,
        iterations: r.iterations,
        gap_history: r.gap_history,
    })
}

pub(crate) fn nonnegativity(free: &[bool]) -> Vec<Constraint> {
    free.iter()
        .enumerate()
        .filter(|(_, f)| **f)
        .map(|(j, _)| Constraint {
            linear: vec![(j, -1.0)],
            exp_terms: vec![],
            rhs: 0.0,
        })
        .collect()
}

/// Largest `eps = scale / 2^i` for which `eps * weights` (on the free
/// coordinates) is strictly feasible.
pub(crate) fn interior_start(
    cons: &[Constraint],
    free: &[bool],
    weights: &[f64],
    scale: f64,
) -> Result<Vec<f64>> {
    let mut eps = scale;
    for _ in 0..400 {
        let x: Vec<f64> = (0..free.len())
            .map(|j| if free[j] { eps * weights[j] } else { 0.0 })
            .collect();
        let ok = cons.iter().all(|c| {
            let touches = c.linear.iter().any(|&(j, _)| free[j]) || c.exp_terms.iter().any(|&j| free[j]);
            !touches || c.value(&x) < 0.0
        });
        if ok {
            return Ok(x);
        }
        eps *= 0.5;
    }
    Err(Error::Precondition("no strictly feasible starting point".into()))
}

/// Moves a transfer of the same total as early as node 1's own consumption
/// `p1` allows: `D_k = min(D_T, min_{j>=k} (C1_j - P1_j))`. Any feasible
/// transfer with that total is pointwise dominated by this one, so node 2
/// stays feasible.
pub(crate) fn earliest_transfer(e1: &[f64], p1: &[f64], total: f64) -> Vec<f64> {
    let c1 = cumsum(e1);
    let u1 = cumsum(p1);
    let t = e1.len();
    let mut d = vec![0.0; t];
    let mut run = total;
    for k in (0..t).rev() {
        run = run.min((c1[k] - u1[k]).max(0.0));
        d[k] = run;
    }
    let mut prev = 0.0;
    (0..t)
        .map(|k| {
            let x = (d[k] - prev).max(0.0);
            prev = prev.max(d[k]);
            x
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waterfill::single_user_dwf;

    fn poly(e1: &[f64], e2: &[f64], alpha: f64, transfer: bool) -> CausalityPolytope {
        CausalityPolytope {
            e1: e1.to_vec(),
            e2: e2.to_vec(),
            alpha,
            transfer,
            include_transfer_budget: false,
        }
    }

    #[test]
    fn no_transfer_reduces_to_two_water_fillings() {
        let p = poly(&[3., 0., 7.], &[0., 12., 0.], 0.5, false);
        let s = maximize_concave_over_causality(&WeightedSumRate { theta1: 1.0, theta2: 1.0 }, &p, 1e-11).unwrap();
        let a = single_user_dwf(&cumsum(&p.e1)).unwrap();
        let b = single_user_dwf(&cumsum(&p.e2)).unwrap();
        for k in 0..3 {
            assert!((s.p1.as_slice()[k] - a.as_slice()[k]).abs() < 1e-6);
            assert!((s.p2.as_slice()[k] - b.as_slice()[k]).abs() < 1e-6);
        }
        assert!(s.delta.total() == 0.0);
        assert!(s.gap <= 1e-11);
    }

    #[test]
    fn worked_two_way_transfer() {
        // e1 = [6, 2], e2 = [1, 8], alpha = 1: user 1 hands 2 units to user 2
        // in slot 1, after which both water levels match: p1 = [3, 3], p2 = [3, 8].
        let p = poly(&[6., 2.], &[1., 8.], 1.0, true);
        let s = maximize_concave_over_causality(&WeightedSumRate { theta1: 1.0, theta2: 1.0 }, &p, 1e-12).unwrap();
        let d = earliest_transfer(&p.e1, s.p1.as_slice(), s.delta.total());
        assert!((s.p1.as_slice()[0] - 3.0).abs() < 1e-5, "{:?}", s.p1);
        assert!((s.p2.as_slice()[1] - 8.0).abs() < 1e-5, "{:?}", s.p2);
        assert!((d[0] - 2.0).abs() < 1e-5 && d[1].abs() < 1e-5, "{d:?}");
    }

    #[test]
    fn pinned_prefix_is_handled() {
        let p = poly(&[0., 0., 4.], &[0., 2., 0.], 0.8, true);
        let s = maximize_concave_over_causality(&MacCornerRate { theta1: 1.0, theta2: 2.0 }, &p, 1e-10).unwrap();
        assert_eq!(s.p1.as_slice()[0], 0.0);
        assert_eq!(s.p2.as_slice()[0], 0.0);
        assert_eq!(s.delta.as_slice()[..2], [0.0, 0.0]);
    }

    #[test]
    fn earliest_transfer_examples() {
        assert_eq!(earliest_transfer(&[5., 5.], &[1., 1.], 3.0), vec![3.0, 0.0]);
        assert_eq!(earliest_transfer(&[2., 5.], &[1., 1.], 3.0), vec![1.0, 2.0]);
    }
}
