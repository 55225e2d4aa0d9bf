//! Gaussian two-way channel: two-dimensional directional water-filling,
//! weighted rate maximization and capacity region tracing.
//!
//! Each user has a row of water cells, one per slot. Right taps carry water
//! forward in time within a row; down taps carry user 1's water into user
//! 2's row. User 2's volumes are scaled by `1/alpha`, so a unit passing a
//! down tap stays a unit, and user 2's cells sit on a base of `1/alpha`.
//! With weights `theta`, the level of a cell is `(base + volume) / theta_u`;
//! water flows down a tap exactly when it equalizes the two levels.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{cumsum, ModelKind, Policy, PowerSchedule, Scenario, TransferSchedule};
use crate::error::{Error, Result};
use crate::solver::{
    earliest_transfer, kkt_residuals, maximize_concave_over_causality, CausalityPolytope, KktOptions,
    KktReport, WeightedSumRate, DEFAULT_TOL,
};
use crate::waterfill::dwf_any_caps;

/// Sweep cap of the tap relaxation.
pub const MAX_SWEEPS: usize = 10_000;
const LEVEL_TOL: f64 = 1e-10;
const RATIO_TOL: f64 = 1e-6;
const SILENT_TOL: f64 = 1e-9;
const KKT_TOL: f64 = 1e-6;
const MIX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub base_level: f64,
    pub volume: f64,
    pub level: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tap {
    pub open: bool,
    /// Water that has passed through the tap.
    pub meter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterSystem {
    /// `cells[u][i]`: user `u + 1`, slot `i`.
    pub cells: [Vec<Cell>; 2],
    /// `right_taps[u][i]` joins slots `i` and `i + 1` of user `u + 1`.
    pub right_taps: [Vec<Tap>; 2],
    pub down_taps: Vec<Tap>,
}

impl WaterSystem {
    /// Total water in both rows plus what still sits behind closed down taps.
    pub fn total_water(&self) -> f64 {
        self.cells.iter().flatten().map(|c| c.volume).sum()
    }
}

/// Order in which taps are opened. Only [`TapOrdering::Full`] is optimal;
/// the others reproduce intermediate states and the classic wrong orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TapOrdering {
    /// Right taps, then down taps backward with metered taps allowed to reflow.
    #[default]
    Full,
    /// Right taps only: two independent single-user water-fillings.
    HorizontalOnly,
    /// Right taps, then down taps backward, with water that already passed a
    /// tap unable to return.
    HorizontalFirstNoMeters,
    /// Down taps only, each slot balanced on its own.
    VerticalOnly,
    /// Down taps first, then right taps with the transfers frozen.
    VerticalFirst,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoDimOutcome {
    pub system: WaterSystem,
    pub p1: PowerSchedule,
    pub p2: PowerSchedule,
    pub delta: TransferSchedule,
    pub sweeps: usize,
}

/// How a weighted two-way solve was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwoWayMethod {
    /// One user's weight is zero; closed form.
    Endpoint,
    WaterFilling,
    /// Tap relaxation did not certify; the interior point solver was used.
    InteriorPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub theta: (f64, f64),
    pub p1: PowerSchedule,
    pub p2: PowerSchedule,
    pub delta: TransferSchedule,
    pub rates: (f64, f64),
    /// `theta1 * R1 + theta2 * R2`.
    pub objective: f64,
    pub kkt: KktReport,
    pub method: TwoWayMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPoint {
    pub theta: (f64, f64),
    pub rates: (f64, f64),
    pub p1: PowerSchedule,
    pub p2: PowerSchedule,
    pub delta: TransferSchedule,
}

struct Tank<'a> {
    c1: Vec<f64>,
    c2: Vec<f64>,
    e1: &'a [f64],
    e2: &'a [f64],
    alpha: f64,
    theta: (f64, f64),
}

impl Tank<'_> {
    fn powers(&self, d: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let dd = cumsum(d);
        let caps1: Vec<f64> = self.c1.iter().zip(&dd).map(|(c, x)| c - x).collect();
        let caps2: Vec<f64> = self.c2.iter().zip(&dd).map(|(c, x)| c + self.alpha * x).collect();
        (dwf_any_caps(&caps1), dwf_any_caps(&caps2))
    }

    fn levels(&self, p1: &[f64], p2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (t1, t2) = self.theta;
        (
            p1.iter().map(|p| (1.0 + p) / t1).collect(),
            p2.iter().map(|p| (1.0 + p) / (self.alpha * t2)).collect(),
        )
    }

    /// Gain per unit of water sent down tap `i`.
    fn marginal(&self, d: &[f64], i: usize) -> f64 {
        let (p1, p2) = self.powers(d);
        let (l1, l2) = self.levels(&p1, &p2);
        1.0 / l2[i] - 1.0 / l1[i]
    }

    /// User 1's unused headroom `C1_k - D_k` for `k` in `range`.
    fn headroom(&self, d: &[f64], range: std::ops::Range<usize>) -> f64 {
        let dd = cumsum(d);
        range.map(|k| self.c1[k] - dd[k]).fold(f64::INFINITY, f64::min).max(0.0)
    }

    /// Balances down tap `i` alone.
    fn balance_tap(&self, d: &mut [f64], i: usize) {
        let t = d.len();
        let hi = d[i] + self.headroom(d, i..t);
        let mut trial = d.to_vec();
        let x = root_decreasing(0.0, hi, |x| {
            trial[i] = x;
            self.marginal(&trial, i)
        });
        d[i] = x;
    }

    /// Shifts transfer between taps `j < i`, moving water that went down at
    /// `i` back through user 1's right taps (and user 2's) to go down at `j`.
    fn balance_pair(&self, d: &mut [f64], j: usize, i: usize) {
        let lo = -d[j];
        let hi = d[i].min(self.headroom(d, j..i));
        if hi - lo <= 0.0 {
            return;
        }
        let base = d.to_vec();
        let mut trial = d.to_vec();
        let t = root_decreasing(lo, hi, |t| {
            trial[j] = base[j] + t;
            trial[i] = base[i] - t;
            self.marginal(&trial, j) - self.marginal(&trial, i)
        });
        d[j] = (base[j] + t).max(0.0);
        d[i] = (base[i] - t).max(0.0);
    }

    fn system(&self, d: &[f64], p1: &[f64], p2: &[f64], right_open: bool, down_open: bool) -> WaterSystem {
        let t = d.len();
        let scale2 = if self.alpha > 0.0 { 1.0 / self.alpha } else { 1.0 };
        let (t1, t2) = self.theta;
        let row = |p: &[f64], base: f64, scale: f64, theta: f64| -> Vec<Cell> {
            p.iter()
                .map(|&x| Cell {
                    base_level: base,
                    volume: x * scale,
                    level: (base + x * scale) / theta,
                })
                .collect()
        };
        let net1: Vec<f64> = (0..t).map(|k| self.e1[k] - d[k]).collect();
        let net2: Vec<f64> = (0..t).map(|k| (self.e2[k] + self.alpha * d[k]) * scale2).collect();
        let p2s: Vec<f64> = p2.iter().map(|x| x * scale2).collect();
        let meters = |arrive: &[f64], used: &[f64]| -> Vec<Tap> {
            (0..t.saturating_sub(1))
                .map(|k| Tap {
                    open: right_open,
                    meter: (arrive[k] - used[k]).max(0.0),
                })
                .collect()
        };
        WaterSystem {
            cells: [row(p1, 1.0, 1.0, t1), row(p2, scale2, scale2, t2)],
            right_taps: [meters(&net1, p1), meters(&net2, &p2s)],
            down_taps: d.iter().map(|&x| Tap { open: down_open, meter: x }).collect(),
        }
    }
}

/// Root of a nonincreasing function on `[lo, hi]`, clamped to the interval.
fn root_decreasing(mut lo: f64, mut hi: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    if f(lo) <= 0.0 {
        return lo;
    }
    if f(hi) >= 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn check_weights(theta: (f64, f64)) -> Result<()> {
    let (a, b) = theta;
    if !(a.is_finite() && b.is_finite() && a >= 0.0 && b >= 0.0 && a + b > 0.0) {
        return Err(Error::InvalidWeights(a, b));
    }
    Ok(())
}

/// Two-dimensional directional water-filling with all taps.
pub fn two_dim_dwf(e1: &[f64], e2: &[f64], alpha: f64, theta: (f64, f64)) -> Result<TwoDimOutcome> {
    two_dim_dwf_with(e1, e2, alpha, theta, TapOrdering::Full)
}

/// [`two_dim_dwf`] with an explicit tap ordering.
pub fn two_dim_dwf_with(
    e1: &[f64],
    e2: &[f64],
    alpha: f64,
    theta: (f64, f64),
    ordering: TapOrdering,
) -> Result<TwoDimOutcome> {
    check_weights(theta)?;
    if theta.0 == 0.0 || theta.1 == 0.0 {
        return Err(Error::Precondition("water-filling needs both weights positive".into()));
    }
    if e1.len() != e2.len() {
        return Err(Error::LengthMismatch { expected: e1.len(), got: e2.len() });
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    let t = e1.len();
    let tank = Tank { c1: cumsum(e1), c2: cumsum(e2), e1, e2, alpha, theta };
    let mut d = vec![0.0; t];
    let mut sweeps = 0;
    let mut frozen = None;

    if alpha > 0.0 {
        match ordering {
            TapOrdering::HorizontalOnly => {}
            TapOrdering::Full => sweeps = relax(&tank, &mut d)?,
            TapOrdering::HorizontalFirstNoMeters => frozen = Some(no_meter_pass(&tank, &mut d)),
            TapOrdering::VerticalOnly | TapOrdering::VerticalFirst => {
                for i in 0..t {
                    // each slot alone: user 1 keeps e1_i - x, user 2 gets e2_i + alpha x
                    d[i] = root_decreasing(0.0, e1[i], |x| {
                        alpha * theta.1 / (1.0 + e2[i] + alpha * x) - theta.0 / (1.0 + e1[i] - x)
                    });
                }
            }
        }
    }

    let (p1, p2) = if let Some(p) = frozen {
        p
    } else if ordering == TapOrdering::VerticalOnly {
        let p1 = (0..t).map(|i| e1[i] - d[i]).collect();
        let p2 = (0..t).map(|i| e2[i] + alpha * d[i]).collect();
        (p1, p2)
    } else {
        tank.powers(&d)
    };
    let right_open = ordering != TapOrdering::VerticalOnly;
    let down_open = ordering != TapOrdering::HorizontalOnly && alpha > 0.0;
    let system = tank.system(&d, &p1, &p2, right_open, down_open);
    Ok(TwoDimOutcome {
        system,
        p1: PowerSchedule::from_solver(p1),
        p2: PowerSchedule::from_solver(p2),
        delta: TransferSchedule::from_solver(d),
        sweeps,
    })
}

/// Sweeps the down taps backward until no level moves by more than
/// [`LEVEL_TOL`](self). Each sweep balances every tap alone and then every
/// pair of taps, which lets water that went down late go down earlier
/// through metered right taps.
fn relax(tank: &Tank, d: &mut [f64]) -> Result<usize> {
    let t = d.len();
    let (p1, p2) = tank.powers(d);
    let (mut l1, mut l2) = tank.levels(&p1, &p2);
    for sweep in 1..=MAX_SWEEPS {
        for i in (0..t).rev() {
            tank.balance_tap(d, i);
            for j in 0..i {
                tank.balance_pair(d, j, i);
            }
        }
        let (p1, p2) = tank.powers(d);
        let (n1, n2) = tank.levels(&p1, &p2);
        let change = l1
            .iter()
            .zip(&n1)
            .chain(l2.iter().zip(&n2))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        l1 = n1;
        l2 = n2;
        if change < LEVEL_TOL {
            return Ok(sweep);
        }
    }
    Err(Error::TapRelaxation(MAX_SWEEPS))
}

/// Down taps opened backward once each; slots before the tap being opened
/// keep the water they already hold.
fn no_meter_pass(tank: &Tank, d: &mut [f64]) -> (Vec<f64>, Vec<f64>) {
    let t = d.len();
    let (mut p1, mut p2) = tank.powers(d);
    for i in (0..t).rev() {
        let frozen1: f64 = p1[..i].iter().sum();
        let frozen2: f64 = p2[..i].iter().sum();
        let suffix = |d: &[f64]| {
            let dd = cumsum(d);
            let caps1: Vec<f64> = (i..t).map(|k| tank.c1[k] - dd[k] - frozen1).collect();
            let caps2: Vec<f64> = (i..t).map(|k| tank.c2[k] + tank.alpha * dd[k] - frozen2).collect();
            (dwf_any_caps(&caps1), dwf_any_caps(&caps2))
        };
        let hi = d[i] + (i..t).map(|k| tank.c1[k] - cumsum(d)[k] - frozen1).fold(f64::INFINITY, f64::min).max(0.0);
        let mut trial = d.to_vec();
        let x = root_decreasing(0.0, hi, |x| {
            trial[i] = x;
            let (q1, q2) = suffix(&trial);
            let (t1, t2) = tank.theta;
            tank.alpha * t2 / (1.0 + q2[0]) - t1 / (1.0 + q1[0])
        });
        if x == d[i] {
            // no water moves, so nothing upstream is disturbed
            continue;
        }
        d[i] = x;
        let (q1, q2) = suffix(d);
        p1[i..].copy_from_slice(&q1);
        p2[i..].copy_from_slice(&q2);
    }
    (p1, p2)
}

/// Maximizes `theta1 R1 + theta2 R2` for the two-way channel.
pub fn solve_twoway_weighted(s: &Scenario, theta: (f64, f64)) -> Result<SolveReport> {
    check_weights(theta)?;
    if s.model != ModelKind::TwoWay {
        return Err(Error::Precondition(format!("expected a two-way scenario, got {}", s.model)));
    }
    let s = s.normalized();
    let (e1, e2, alpha) = (s.e1.amounts(), s.e2.amounts(), s.alpha);
    let t = e1.len();
    let (c1, c2) = (cumsum(e1), cumsum(e2));

    let (p1, p2, d, method) = if theta.1 == 0.0 || alpha == 0.0 {
        (dwf_any_caps(&c1), dwf_any_caps(&c2), vec![0.0; t], TwoWayMethod::Endpoint)
    } else if theta.0 == 0.0 {
        let caps2: Vec<f64> = c2.iter().zip(&c1).map(|(b, a)| b + alpha * a).collect();
        (vec![0.0; t], dwf_any_caps(&caps2), e1.to_vec(), TwoWayMethod::Endpoint)
    } else {
        match two_dim_dwf(e1, e2, alpha, theta) {
            Ok(o) => (o.p1.into_vec(), o.p2.into_vec(), o.delta.into_vec(), TwoWayMethod::WaterFilling),
            Err(Error::TapRelaxation(_)) => interior_point(&s, theta)?,
            Err(e) => return Err(e),
        }
    };
    let report = build_report(&s, theta, p1, p2, d, method)?;
    if report.method == TwoWayMethod::WaterFilling && !report.kkt.satisfied(KKT_TOL) {
        let (p1, p2, d, method) = interior_point(&s, theta)?;
        return build_report(&s, theta, p1, p2, d, method);
    }
    Ok(report)
}

type Candidate = (Vec<f64>, Vec<f64>, Vec<f64>, TwoWayMethod);

fn interior_point(s: &Scenario, theta: (f64, f64)) -> Result<Candidate> {
    let poly = CausalityPolytope::from_scenario(s, true);
    let sol = maximize_concave_over_causality(
        &WeightedSumRate { theta1: theta.0, theta2: theta.1 },
        &poly,
        DEFAULT_TOL,
    )?;
    let p1 = sol.p1.into_vec();
    let d = earliest_transfer(s.e1.amounts(), &p1, sol.delta.total());
    Ok((p1, sol.p2.into_vec(), d, TwoWayMethod::InteriorPoint))
}

fn build_report(
    s: &Scenario,
    theta: (f64, f64),
    p1: Vec<f64>,
    p2: Vec<f64>,
    d: Vec<f64>,
    method: TwoWayMethod,
) -> Result<SolveReport> {
    let p1 = PowerSchedule::from_solver(p1);
    let p2 = PowerSchedule::from_solver(p2);
    let delta = TransferSchedule::from_solver(d);
    let kkt = kkt_residuals(ModelKind::TwoWay, theta, s, &p1, &p2, &delta, &KktOptions::default())?;
    let rates = (p1.throughput(), p2.throughput());
    Ok(SolveReport {
        theta,
        objective: theta.0 * rates.0 + theta.1 * rates.1,
        rates,
        p1,
        p2,
        delta,
        kkt,
        method,
    })
}

/// Weights `(1 - w, w)` for `w = j / (n - 1)`.
pub fn sweep_weights(n_points: usize) -> Vec<(f64, f64)> {
    (0..n_points)
        .map(|j| {
            let w = j as f64 / (n_points - 1) as f64;
            (1.0 - w, w)
        })
        .collect()
}

/// Traces the capacity region boundary; points are sorted by decreasing R1.
pub fn trace_twoway_region(s: &Scenario, n_points: usize) -> Result<Vec<RegionPoint>> {
    if n_points < 2 {
        return Err(Error::Precondition(format!("need at least 2 points, got {n_points}")));
    }
    let mut points = sweep_weights(n_points)
        .into_par_iter()
        .map(|theta| {
            solve_twoway_weighted(s, theta).map(|r| RegionPoint {
                theta,
                rates: r.rates,
                p1: r.p1,
                p2: r.p2,
                delta: r.delta,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    points.sort_by(|a, b| b.rates.0.total_cmp(&a.rates.0).then(a.rates.1.total_cmp(&b.rates.1)));
    Ok(points)
}

/// Smallest signed distance of a boundary point above the chord of its
/// neighbours; negative values mean the traced boundary dents inward.
/// Points must be sorted by decreasing R1.
pub fn concavity_slack(rates: &[(f64, f64)]) -> f64 {
    rates
        .windows(3)
        .map(|w| {
            let (a, b, c) = (w[0], w[1], w[2]);
            let (dx, dy) = (c.0 - a.0, c.1 - a.1);
            let len = (dx * dx + dy * dy).sqrt();
            if len < 1e-15 {
                return 0.0;
            }
            -(dx * (b.1 - a.1) - dy * (b.0 - a.0)) / len
        })
        .fold(f64::INFINITY, f64::min)
        .min(f64::MAX)
}

/// Convexity of the capacity region: the mixture of two feasible policies
/// is feasible and gives each user at least the mixture of their rates.
pub fn check_convex_combination(s: &Scenario, a: &Policy, b: &Policy, lambda: f64) -> Result<bool> {
    let s = s.normalized();
    for p in [a, b] {
        let v = p.violations(&s)?;
        if !v.is_empty() {
            return Err(Error::Infeasible(v));
        }
    }
    let m = a.mix(b, lambda)?;
    if !m.violations(&s)?.is_empty() {
        return Ok(false);
    }
    let mixed = |x: f64, y: f64| lambda * x + (1.0 - lambda) * y;
    let r1 = mixed(a.p1.throughput(), b.p1.throughput());
    let r2 = mixed(a.p2.throughput(), b.p2.throughput());
    Ok(m.p1.throughput() >= r1 - MIX_TOL && m.p2.throughput() >= r2 - MIX_TOL)
}

/// Per-slot check that `(1 + p1_i) / (1 + p2_i) = theta1 / (alpha theta2)`
/// wherever energy is transferred. In slots where user 1 is silent the
/// ratio need only be at least the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioCheck {
    /// 1-based slot.
    pub slot: usize,
    pub ratio: f64,
    pub expected: f64,
    /// User 1 spends nothing in this slot.
    pub silent: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferRatio {
    /// The ratio is undefined when a weight or `alpha` is zero.
    NotApplicable,
    Slots(Vec<RatioCheck>),
}

impl TransferRatio {
    pub fn all_passed(&self) -> bool {
        match self {
            TransferRatio::NotApplicable => true,
            TransferRatio::Slots(v) => v.iter().all(|c| c.passed),
        }
    }
}

pub fn verify_transfer_ratio(
    p1: &PowerSchedule,
    p2: &PowerSchedule,
    delta: &TransferSchedule,
    theta: (f64, f64),
    alpha: f64,
) -> TransferRatio {
    if theta.0 == 0.0 || theta.1 == 0.0 || alpha == 0.0 {
        return TransferRatio::NotApplicable;
    }
    let expected = theta.0 / (alpha * theta.1);
    let checks = delta
        .as_slice()
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > 1e-9)
        .map(|(i, _)| {
            let ratio = (1.0 + p1.as_slice()[i]) / (1.0 + p2.as_slice()[i]);
            let silent = p1.as_slice()[i] <= SILENT_TOL;
            let passed = if silent {
                ratio >= expected - RATIO_TOL
            } else {
                (ratio - expected).abs() <= RATIO_TOL
            };
            RatioCheck {
                slot: i + 1,
                ratio,
                expected,
                silent,
                passed,
            }
        })
        .collect();
    TransferRatio::Slots(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn worked_run() {
        let o = two_dim_dwf(&[0., 12., 0.], &[6., 6., 0.], 1.0, (1.0, 1.0)).unwrap();
        assert!(close(o.p1.as_slice(), &[0., 4.8, 4.8], 1e-9), "{:?}", o.p1);
        assert!(close(o.p2.as_slice(), &[4.8, 4.8, 4.8], 1e-9), "{:?}", o.p2);
    }

    #[test]
    fn horizontal_stage() {
        let o = two_dim_dwf_with(&[0., 12., 0.], &[6., 6., 0.], 1.0, (1.0, 1.0), TapOrdering::HorizontalOnly).unwrap();
        assert_eq!(o.p1.as_slice(), &[0., 6., 6.]);
        assert_eq!(o.p2.as_slice(), &[4., 4., 4.]);
        let m: Vec<f64> = o.system.right_taps[0].iter().map(|t| t.meter).collect();
        assert_eq!(m, vec![0., 6.]);
        let m: Vec<f64> = o.system.right_taps[1].iter().map(|t| t.meter).collect();
        assert_eq!(m, vec![2., 2.]);
    }

    #[test]
    fn wrong_orders() {
        let (e1, e2) = ([0., 12., 0.], [6., 6., 0.]);
        let o = two_dim_dwf_with(&e1, &e2, 1.0, (1.0, 1.0), TapOrdering::HorizontalFirstNoMeters).unwrap();
        assert!(close(o.p1.as_slice(), &[0., 5., 5.], 1e-9), "{:?}", o.p1);
        assert!(close(o.p2.as_slice(), &[4., 5., 5.], 1e-9), "{:?}", o.p2);
        let o = two_dim_dwf_with(&e1, &e2, 1.0, (1.0, 1.0), TapOrdering::VerticalOnly).unwrap();
        assert!(close(o.p1.as_slice(), &[0., 9., 0.], 1e-9), "{:?}", o.p1);
        assert!(close(o.p2.as_slice(), &[6., 9., 0.], 1e-9), "{:?}", o.p2);
        let o = two_dim_dwf_with(&e1, &e2, 1.0, (1.0, 1.0), TapOrdering::VerticalFirst).unwrap();
        assert!(close(o.p1.as_slice(), &[0., 4.5, 4.5], 1e-9), "{:?}", o.p1);
        assert!(close(o.p2.as_slice(), &[5., 5., 5.], 1e-9), "{:?}", o.p2);
    }

    #[test]
    fn early_transfer_two_slots() {
        let o = two_dim_dwf(&[6., 2.], &[1., 8.], 1.0, (1.0, 1.0)).unwrap();
        assert!(close(o.delta.as_slice(), &[2., 0.], 1e-9), "{:?}", o.delta);
        assert!(close(o.p1.as_slice(), &[3., 3.], 1e-9));
        assert!(close(o.p2.as_slice(), &[3., 8.], 1e-9));
    }

    #[test]
    fn transfer_must_move_earlier() {
        // all of user 1's energy is in slot 1 and user 2 has none: the
        // balance needs water to go down at slot 1, not at slot 2
        let o = two_dim_dwf(&[1., 0.], &[0., 0.], 1.0, (1.0, 1.0)).unwrap();
        let s = Scenario::new(ModelKind::TwoWay, vec![1., 0.], vec![0., 0.], 1.0).unwrap();
        let k = kkt_residuals(ModelKind::TwoWay, (1.0, 1.0), &s, &o.p1, &o.p2, &o.delta, &KktOptions::default()).unwrap();
        assert!(k.satisfied(1e-6), "{k:?} {o:?}");
    }

    #[test]
    fn water_is_conserved() {
        let (e1, e2, alpha) = ([3., 1., 4.], [1., 5., 9.], 0.6);
        let o = two_dim_dwf(&e1, &e2, alpha, (1.0, 2.0)).unwrap();
        let expected = e1.iter().sum::<f64>() + e2.iter().sum::<f64>() / alpha;
        assert!((o.system.total_water() - expected).abs() < 1e-9);
    }

    #[test]
    fn endpoints() {
        let s = Scenario::new(ModelKind::TwoWay, vec![5., 10., 5.], vec![10., 5., 10.], 0.7).unwrap();
        let r = solve_twoway_weighted(&s, (1.0, 0.0)).unwrap();
        assert!(close(r.p1.as_slice(), &[5., 7.5, 7.5], 1e-12));
        assert_eq!(r.delta.total(), 0.0);
        let r = solve_twoway_weighted(&s, (0.0, 1.0)).unwrap();
        assert!(close(r.p2.as_slice(), &[12.75, 12.75, 13.5], 1e-9), "{:?}", r.p2);
        assert_eq!(r.delta.as_slice(), &[5., 10., 5.]);
    }

    #[test]
    fn ratio_check() {
        let p1 = PowerSchedule::new(vec![0., 4.8, 4.8]).unwrap();
        let p2 = PowerSchedule::new(vec![4.8, 4.8, 4.8]).unwrap();
        let d = TransferSchedule::new(vec![0., 0., 2.4]).unwrap();
        assert!(verify_transfer_ratio(&p1, &p2, &d, (1.0, 1.0), 1.0).all_passed());
        let bad = PowerSchedule::new(vec![0., 4.8, 5.1]).unwrap();
        assert!(!verify_transfer_ratio(&p1, &bad, &d, (1.0, 1.0), 1.0).all_passed());
        assert_eq!(verify_transfer_ratio(&p1, &p2, &d, (1.0, 0.0), 1.0), TransferRatio::NotApplicable);
    }

    #[test]
    fn silent_sender_needs_only_the_bound() {
        let s = Scenario::new(ModelKind::TwoWay, vec![6.], vec![5.], 0.5).unwrap();
        let theta = (0.05, 0.95);
        let r = solve_twoway_weighted(&s, theta).unwrap();
        assert!(close(r.p1.as_slice(), &[0.], 1e-9) && close(r.p2.as_slice(), &[8.], 1e-9), "{r:?}");
        let TransferRatio::Slots(v) = verify_transfer_ratio(&r.p1, &r.p2, &r.delta, theta, 0.5) else {
            panic!("weights are positive");
        };
        assert!(v[0].silent && v[0].passed && v[0].ratio > v[0].expected + 1e-3);
        let below = PowerSchedule::new(vec![10.]).unwrap();
        assert!(!verify_transfer_ratio(&r.p1, &below, &r.delta, theta, 0.5).all_passed());
    }
}
