//! Two-user Gaussian multiple access channel where user 1 can transfer
//! energy to user 2.
//!
//! For fixed powers the achievable rates form a pentagon; the weighted
//! optimum sits at the corner where the heavier user is decoded last. When
//! user 1 carries at least as much weight, transferring never helps. When
//! `theta2 / theta1 >= 1 / alpha`, user 1 hands over everything.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{cumsum, rate, ModelKind, Policy, PowerSchedule, Scenario, TransferSchedule};
use crate::error::{Error, Result};
use crate::solver::{
    earliest_transfer, kkt_residuals, maximize_concave_over_causality, CausalityPolytope, KktOptions,
    KktReport, MacCornerRate, DEFAULT_TOL,
};
use crate::twoway::sweep_weights;
use crate::waterfill::{dwf_any_caps, water_fill_with_floors};

const HULL_TOL: f64 = 1e-9;
const MIX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    NoTransfer,
    General,
    FullTransfer,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(match self {
            Regime::NoTransfer => "no_transfer",
            Regime::General => "general",
            Regime::FullTransfer => "full_transfer",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacReport {
    pub theta: (f64, f64),
    pub p1: PowerSchedule,
    pub p2: PowerSchedule,
    pub delta: TransferSchedule,
    /// Rates at the pentagon corner selected by the weights.
    pub corner_rates: (f64, f64),
    pub sum_rate: f64,
    pub regime: Regime,
    pub kkt: KktReport,
}

impl MacReport {
    pub fn objective(&self) -> f64 {
        self.theta.0 * self.corner_rates.0 + self.theta.1 * self.corner_rates.1
    }
}

/// One traced boundary point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacRegionPoint {
    pub theta: (f64, f64),
    pub rates: (f64, f64),
    pub p1: PowerSchedule,
    pub p2: PowerSchedule,
    pub delta: TransferSchedule,
    pub regime: Regime,
}

/// Corners `(R1max, Rsum - R1max)` and `(Rsum - R2max, R2max)` of the rate
/// pentagon for fixed powers.
pub fn pentagon_corners(p1: &PowerSchedule, p2: &PowerSchedule) -> Result<((f64, f64), (f64, f64))> {
    if p1.len() != p2.len() {
        return Err(Error::LengthMismatch {
            expected: p1.len(),
            got: p2.len(),
        });
    }
    let r1 = p1.throughput();
    let r2 = p2.throughput();
    let sum = sum_rate(p1, p2);
    Ok(((r1, sum - r1), (sum - r2, r2)))
}

fn sum_rate(p1: &PowerSchedule, p2: &PowerSchedule) -> f64 {
    p1.as_slice().iter().zip(p2.as_slice()).map(|(a, b)| rate(a + b)).sum()
}

/// True when `rates` satisfies the three pentagon constraints of `(p1, p2)`.
pub fn in_pentagon(p1: &PowerSchedule, p2: &PowerSchedule, rates: (f64, f64)) -> Result<bool> {
    let ((r1max, _), (_, r2max)) = pentagon_corners(p1, p2)?;
    let sum = sum_rate(p1, p2);
    let (r1, r2) = rates;
    Ok(r1 >= 0.0 && r2 >= 0.0 && r1 <= r1max + MIX_TOL && r2 <= r2max + MIX_TOL && r1 + r2 <= sum + MIX_TOL)
}

/// Convexity of the capacity region: for rate pairs inside the pentagons of
/// two feasible policies, their mixture lies inside the pentagon of the
/// mixed policy, which is itself feasible.
pub fn check_pentagon_combination(
    s: &Scenario,
    a: (&Policy, (f64, f64)),
    b: (&Policy, (f64, f64)),
    lambda: f64,
) -> Result<bool> {
    let s = s.normalized();
    for (p, r) in [a, b] {
        let v = p.violations(&s)?;
        if !v.is_empty() {
            return Err(Error::Infeasible(v));
        }
        if !in_pentagon(&p.p1, &p.p2, r)? {
            return Err(Error::Precondition(format!("rates {r:?} lie outside the policy's pentagon")));
        }
    }
    let m = a.0.mix(b.0, lambda)?;
    if !m.violations(&s)?.is_empty() {
        return Ok(false);
    }
    let point = (
        lambda * a.1 .0 + (1.0 - lambda) * b.1 .0,
        lambda * a.1 .1 + (1.0 - lambda) * b.1 .1,
    );
    in_pentagon(&m.p1, &m.p2, point)
}

/// Weight ratio `theta2 / theta1` above which user 1 transfers everything.
pub fn full_transfer_threshold(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Precondition(format!(
            "full transfer threshold needs 0 < alpha <= 1, got {alpha}"
        )));
    }
    Ok(1.0 / alpha)
}

fn regime_of(theta: (f64, f64), alpha: f64) -> Regime {
    if theta.0 >= theta.1 || alpha == 0.0 {
        Regime::NoTransfer
    } else if alpha * theta.1 >= theta.0 {
        Regime::FullTransfer
    } else {
        Regime::General
    }
}

/// Maximizes `theta1 R1 + theta2 R2` over the MAC capacity region.
pub fn solve_mac_weighted(s: &Scenario, theta: (f64, f64)) -> Result<MacReport> {
    let (th1, th2) = theta;
    if !(th1.is_finite() && th2.is_finite() && th1 >= 0.0 && th2 >= 0.0 && th1 + th2 > 0.0) {
        return Err(Error::InvalidWeights(th1, th2));
    }
    if s.model != ModelKind::Mac {
        return Err(Error::Precondition(format!("expected a MAC scenario, got {}", s.model)));
    }
    let s = s.normalized();
    let (e1, e2, alpha) = (s.e1.amounts(), s.e2.amounts(), s.alpha);
    let t = e1.len();
    let (c1, c2) = (cumsum(e1), cumsum(e2));
    let regime = regime_of(theta, alpha);

    let (p1, p2, d) = match regime {
        Regime::FullTransfer => {
            let caps: Vec<f64> = c2.iter().zip(&c1).map(|(b, a)| b + alpha * a).collect();
            (vec![0.0; t], dwf_any_caps(&caps), e1.to_vec())
        }
        Regime::NoTransfer if th1 == th2 => {
            let (p1, p2) = split_sum(&c1, &c2);
            (p1, p2, vec![0.0; t])
        }
        Regime::NoTransfer if th2 == 0.0 => {
            let p1 = dwf_any_caps(&c1);
            let p2 = fill_over(&c2, &p1)?;
            (p1, p2, vec![0.0; t])
        }
        Regime::NoTransfer if th1 == 0.0 => {
            let p2 = dwf_any_caps(&c2);
            let p1 = fill_over(&c1, &p2)?;
            (p1, p2, vec![0.0; t])
        }
        Regime::NoTransfer => {
            let sol = maximize(&s, theta, false)?;
            (sol.p1.into_vec(), sol.p2.into_vec(), vec![0.0; t])
        }
        Regime::General => {
            let sol = maximize(&s, theta, true)?;
            let p1 = sol.p1.into_vec();
            let d = earliest_transfer(e1, &p1, sol.delta.total());
            (p1, sol.p2.into_vec(), d)
        }
    };

    let p1 = PowerSchedule::from_solver(p1);
    let p2 = PowerSchedule::from_solver(p2);
    let delta = TransferSchedule::from_solver(d);
    let kkt = kkt_residuals(ModelKind::Mac, theta, &s, &p1, &p2, &delta, &KktOptions::default())?;
    let (a, b) = pentagon_corners(&p1, &p2)?;
    Ok(MacReport {
        theta,
        corner_rates: if th1 >= th2 { a } else { b },
        sum_rate: sum_rate(&p1, &p2),
        p1,
        p2,
        delta,
        regime,
        kkt,
    })
}

fn maximize(s: &Scenario, theta: (f64, f64), transfer: bool) -> Result<crate::solver::Solution> {
    let mut poly = CausalityPolytope::from_scenario(s, transfer);
    poly.include_transfer_budget = transfer;
    maximize_concave_over_causality(
        &MacCornerRate {
            theta1: theta.0,
            theta2: theta.1,
        },
        &poly,
        DEFAULT_TOL,
    )
}

/// Powers for the silent-weight user: fills the sum rate on top of the
/// other user's fixed powers.
fn fill_over(caps: &[f64], other: &[f64]) -> Result<Vec<f64>> {
    let floors: Vec<f64> = other.iter().map(|p| 1.0 + p).collect();
    let env = crate::waterfill::envelope(caps);
    water_fill_with_floors(&env, &floors)
}

/// Sum-rate powers from water-filling the pooled profile, split so that
/// user 1 spends as early as its own arrivals allow.
fn split_sum(c1: &[f64], c2: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let pooled: Vec<f64> = c1.iter().zip(c2).map(|(a, b)| a + b).collect();
    let sum = dwf_any_caps(&pooled);
    let mut p1 = vec![0.0; sum.len()];
    let mut used = 0.0;
    for (k, &s) in sum.iter().enumerate() {
        let next = c1[k].min(used + s);
        p1[k] = (next - used).max(0.0);
        used = next;
    }
    let p2 = sum.iter().zip(&p1).map(|(s, a)| (s - a).max(0.0)).collect();
    (p1, p2)
}

/// Traces the capacity region boundary over `n_points` weight pairs.
///
/// Weights with `theta1 >= theta2` contribute both pentagon corners of their
/// solution. Points inside the convex hull of the others are dropped, and the
/// rest are sorted by decreasing R1.
pub fn trace_mac_region(s: &Scenario, n_points: usize) -> Result<Vec<MacRegionPoint>> {
    if n_points < 2 {
        return Err(Error::Precondition(format!("need at least 2 points, got {n_points}")));
    }
    let reports = sweep_weights(n_points)
        .into_par_iter()
        .map(|theta| solve_mac_weighted(s, theta))
        .collect::<Result<Vec<_>>>()?;
    let mut points = Vec::new();
    for r in reports {
        let (a, b) = pentagon_corners(&r.p1, &r.p2)?;
        let corners = if r.theta.0 >= r.theta.1 { vec![a, b] } else { vec![b] };
        for rates in corners {
            points.push(MacRegionPoint {
                theta: r.theta,
                rates,
                p1: r.p1.clone(),
                p2: r.p2.clone(),
                delta: r.delta.clone(),
                regime: r.regime,
            });
        }
    }
    Ok(upper_hull(points))
}

fn upper_hull(mut points: Vec<MacRegionPoint>) -> Vec<MacRegionPoint> {
    points.sort_by(|a, b| b.rates.0.total_cmp(&a.rates.0).then(b.rates.1.total_cmp(&a.rates.1)));
    let mut front: Vec<MacRegionPoint> = Vec::new();
    for p in points {
        if let Some(last) = front.last() {
            if p.rates.1 <= last.rates.1 + HULL_TOL {
                continue;
            }
        }
        front.push(p);
    }
    let mut hull: Vec<MacRegionPoint> = Vec::new();
    for p in front {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2].rates, hull[hull.len() - 1].rates);
            let cross = (b.0 - a.0) * (p.rates.1 - a.1) - (b.1 - a.1) * (p.rates.0 - a.0);
            // b lies strictly below the chord from a to p
            if cross < -HULL_TOL {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twoway::concavity_slack;

    fn sched(v: &[f64]) -> PowerSchedule {
        PowerSchedule::new(v.to_vec()).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn corners() {
        let (a, b) = pentagon_corners(&sched(&[1.]), &sched(&[0.])).unwrap();
        assert!(close(a.0, 0.5, 1e-12) && close(a.1, 0.0, 1e-12));
        assert!(close(b.0, 0.5, 1e-12) && close(b.1, 0.0, 1e-12));

        let (a, b) = pentagon_corners(&sched(&[1.]), &sched(&[2.])).unwrap();
        let h = 0.5 * 3f64.log2();
        assert!(close(a.0, 0.5, 1e-12) && close(a.1, 0.5, 1e-12));
        assert!(close(b.0, 1.0 - h, 1e-12) && close(b.1, h, 1e-12));

        let (a, b) = pentagon_corners(&sched(&[3.]), &sched(&[3.])).unwrap();
        assert!(close(a.0 + a.1, 0.5 * 7f64.log2(), 1e-12));
        assert!(close(a.0, b.1, 1e-12) && close(a.1, b.0, 1e-12));
    }

    #[test]
    fn threshold() {
        assert_eq!(full_transfer_threshold(1.0).unwrap(), 1.0);
        assert_eq!(full_transfer_threshold(0.5).unwrap(), 2.0);
        assert_eq!(full_transfer_threshold(0.25).unwrap(), 4.0);
        assert!(full_transfer_threshold(0.0).is_err());
    }

    fn fig_instance(alpha: f64) -> Scenario {
        Scenario::new(ModelKind::Mac, vec![5., 2., 5.], vec![1., 3., 1.], alpha).unwrap()
    }

    #[test]
    fn user_one_priority_never_transfers() {
        let r = solve_mac_weighted(&fig_instance(0.5), (2.0, 1.0)).unwrap();
        assert_eq!(r.regime, Regime::NoTransfer);
        assert_eq!(r.delta.total(), 0.0);
        assert!(r.kkt.satisfied(1e-6), "{:?}", r.kkt);
    }

    #[test]
    fn equal_weights_water_fill_pooled_profile() {
        let r = solve_mac_weighted(&fig_instance(0.5), (1.0, 1.0)).unwrap();
        let sum: Vec<f64> = r.p1.as_slice().iter().zip(r.p2.as_slice()).map(|(a, b)| a + b).collect();
        for (x, y) in sum.iter().zip([5.5, 5.5, 6.0]) {
            assert!(close(*x, y, 1e-9), "{sum:?}");
        }
        assert!(r.kkt.satisfied(1e-6), "{:?}", r.kkt);
    }

    #[test]
    fn heavy_user_two_takes_everything() {
        let r = solve_mac_weighted(&fig_instance(0.5), (1.0, 3.0)).unwrap();
        assert_eq!(r.regime, Regime::FullTransfer);
        assert!(close(r.delta.total(), 12.0, 1e-9));
        assert_eq!(r.p1.total(), 0.0);
        assert!(r.kkt.satisfied(1e-6), "{:?}", r.kkt);
    }

    #[test]
    fn general_regime_certified() {
        let r = solve_mac_weighted(&fig_instance(0.5), (1.0, 1.5)).unwrap();
        assert_eq!(r.regime, Regime::General);
        assert!(r.kkt.satisfied(1e-6), "{:?}", r.kkt);
    }

    #[test]
    fn lossless_transfer_keeps_sum_rate() {
        let s = fig_instance(1.0);
        let point3 = solve_mac_weighted(&s, (1.0, 1.0)).unwrap();
        let point4 = solve_mac_weighted(&s, (0.0, 1.0)).unwrap();
        assert!(close(point3.sum_rate, point4.sum_rate, 1e-9));
        assert!(close(point4.corner_rates.0, 0.0, 1e-12));
    }

    #[test]
    fn region_is_concave() {
        let pts = trace_mac_region(&fig_instance(0.5), 17).unwrap();
        let rates: Vec<_> = pts.iter().map(|p| p.rates).collect();
        assert!(concavity_slack(&rates) >= -1e-7);
        assert!(pts.iter().filter(|p| p.regime == Regime::NoTransfer).all(|p| p.delta.total() == 0.0));
    }

    #[test]
    fn zero_efficiency_never_transfers() {
        let pts = trace_mac_region(&fig_instance(0.0), 9).unwrap();
        assert!(pts.iter().all(|p| p.delta.total() == 0.0 && p.regime == Regime::NoTransfer));
    }
}
