//! End-to-end throughput maximization for a two-hop relay link where the
//! source may beam energy to the relay.
//!
//! Node 1 of a [`Scenario`] is the source and node 2 the relay. Three paths
//! exist: a fixed-point search when all source energy arrives up front, a
//! merged water-filling when the two cumulative arrival curves cross once,
//! and a convex program in the rate variables for everything else.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::domain::{
    cumsum, data_causality_violations, feasibility_violations, majorized_within, power, rate,
    ModelKind, PowerSchedule, Scenario, TransferSchedule, CAUSALITY_TOL,
};
use crate::error::{Error, Result};
use crate::solver::ipm::{self, Constraint, ConvexObjective};
use crate::solver::{earliest_transfer, interior_start, kkt_residuals, nonnegativity, KktOptions, KktReport, DEFAULT_TOL};
use crate::waterfill::{single_user_dwf, single_user_throughput};

const LEMMA_TOL: f64 = 1e-6;
const SCHEDULE_EQ_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelayPath {
    SingleCrossing,
    SourceInitial,
    General,
}

/// Outcome of one structural check on a relay policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaResult {
    pub name: String,
    pub passed: bool,
    /// Size of the quantity the check compares against zero.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayReport {
    pub p_source: PowerSchedule,
    pub p_relay: PowerSchedule,
    pub delta: TransferSchedule,
    /// End-to-end bits delivered over the horizon.
    pub throughput: f64,
    pub kkt: KktReport,
    pub lemma_results: Vec<LemmaResult>,
    pub path: RelayPath,
}

/// Index `i` such that the relay's cumulative arrivals are at least the
/// source's through slot `i` and at most the source's afterwards.
///
/// `Some(0)` means the source is ahead from the first slot, `Some(T)` that
/// the relay never falls behind. Returns `None` when the curves cross more
/// than once.
pub fn detect_single_crossing(e1: &[f64], e2: &[f64]) -> Option<usize> {
    if e1.len() != e2.len() {
        return None;
    }
    let c1 = cumsum(e1);
    let c2 = cumsum(e2);
    let t = e1.len();
    let crossing = (0..t).take_while(|&k| c2[k] >= c1[k] - CAUSALITY_TOL).count();
    (crossing..t)
        .all(|k| c2[k] <= c1[k] + CAUSALITY_TOL)
        .then_some(crossing)
}

fn require_relay(s: &Scenario) -> Result<()> {
    if s.model != ModelKind::Relay {
        return Err(Error::Precondition(format!("expected a relay scenario, got {}", s.model)));
    }
    Ok(())
}

/// Matched source and relay powers from water-filling the lower of the
/// source's arrivals and the energy both nodes can share equally.
pub fn solve_relay_single_crossing(s: &Scenario) -> Result<RelayReport> {
    require_relay(s)?;
    let s = s.normalized();
    let (e1, e2, alpha) = (s.e1.amounts(), s.e2.amounts(), s.alpha);
    let crossing = detect_single_crossing(e1, e2)
        .ok_or_else(|| Error::Precondition("arrival curves cross more than once".into()))?;
    let c1 = cumsum(e1);
    let c2 = cumsum(e2);
    let t = e1.len();
    let merged: Vec<f64> = (0..t)
        .map(|k| if k < crossing { c1[k] } else { c1[k].min((c2[k] + alpha * c1[k]) / (1.0 + alpha)) })
        .collect();
    let p = single_user_dwf(&merged)?;

    let candidates = [per_slot_transfer(&c1, &c2, alpha), transfer_after(crossing, e1, p.as_slice())];
    for d in candidates.into_iter().flatten() {
        let delta = TransferSchedule::from_solver(d);
        if is_feasible(&s, &p, &p, &delta)? {
            return finish(&s, p.clone(), p, delta, RelayPath::SingleCrossing);
        }
    }
    Err(Error::Precondition(
        "no transfer supports the matched schedule".into(),
    ))
}

/// `delta_i = (E_i - Ebar_i) / (1 + alpha)` where the source is ahead, when
/// that cumulative curve is nondecreasing.
fn per_slot_transfer(c1: &[f64], c2: &[f64], alpha: f64) -> Option<Vec<f64>> {
    let cum: Vec<f64> = c1
        .iter()
        .zip(c2)
        .map(|(a, b)| ((a - b) / (1.0 + alpha)).max(0.0))
        .collect();
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(cum.len());
    for c in cum {
        if c < prev - CAUSALITY_TOL {
            return None;
        }
        out.push((c - prev).max(0.0));
        prev = c.max(prev);
    }
    Some(out)
}

/// All unused source energy, moved as early as possible but no earlier than
/// the slot after the crossing.
fn transfer_after(crossing: usize, e1: &[f64], p: &[f64]) -> Option<Vec<f64>> {
    let t = e1.len();
    let (c1, u) = (cumsum(e1), cumsum(p));
    let mut cum = vec![0.0; t];
    let mut run = (c1[t - 1] - u[t - 1]).max(0.0);
    for k in (crossing..t).rev() {
        run = run.min((c1[k] - u[k]).max(0.0));
        cum[k] = run;
    }
    let mut prev = 0.0;
    Some(
        cum.into_iter()
            .map(|c: f64| {
                let x = (c - prev).max(0.0);
                prev = c.max(prev);
                x
            })
            .collect(),
    )
}

/// Source energy arrives only in slot 1: the transfer happens in slot 1 and
/// equalizes the source's flat rate with the relay's best throughput.
pub fn solve_relay_source_initial(s: &Scenario) -> Result<RelayReport> {
    require_relay(s)?;
    let s = s.normalized();
    let (e1, e2, alpha) = (s.e1.amounts(), s.e2.amounts(), s.alpha);
    let t = e1.len();
    if e1[1..].iter().any(|&x| x != 0.0) {
        return Err(Error::Precondition("source energy must arrive only in the first slot".into()));
    }
    let e = e1[0];
    let tf = t as f64;
    let relay_bits = |d: f64| {
        let mut arrivals = e2.to_vec();
        arrivals[0] += alpha * d;
        single_user_throughput(&cumsum(&arrivals))
    };
    let source_bits = |d: f64| tf * rate((e - d) / tf);

    let d_star = if alpha == 0.0 || relay_bits(0.0)? >= source_bits(0.0) {
        0.0
    } else {
        let (mut lo, mut hi) = (0.0, e);
        while hi - lo > 1e-12 * e.max(1.0) {
            let mid = 0.5 * (lo + hi);
            if relay_bits(mid)? >= source_bits(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };

    let p_source = PowerSchedule::from_solver(vec![(e - d_star) / tf; t]);
    let mut delta = vec![0.0; t];
    delta[0] = d_star;
    let delta = TransferSchedule::from_solver(delta);
    if d_star == 0.0 {
        // the relay can forward the flat stream without help when its own
        // arrivals keep pace with it
        if is_feasible(&s, &p_source, &p_source, &delta)? {
            return finish(&s, p_source.clone(), p_source, delta, RelayPath::SourceInitial);
        }
        return solve_relay_general(&s);
    }
    let mut arrivals = e2.to_vec();
    arrivals[0] += alpha * d_star;
    let p_relay = single_user_dwf(&cumsum(&arrivals))?;
    finish(&s, p_source, p_relay, delta, RelayPath::SourceInitial)
}

/// Solves the relay problem, preferring the closed-form paths.
pub fn solve_relay(s: &Scenario) -> Result<RelayReport> {
    require_relay(s)?;
    let s = s.normalized();
    let (e1, e2) = (s.e1.amounts(), s.e2.amounts());
    if e1.iter().sum::<f64>() == 0.0 {
        let t = s.horizon();
        return finish(&s, PowerSchedule::zeros(t), PowerSchedule::zeros(t), TransferSchedule::zeros(t), RelayPath::General);
    }
    if e1[0] > 0.0 && e1[1..].iter().all(|&x| x == 0.0) {
        return solve_relay_source_initial(&s);
    }
    if detect_single_crossing(e1, e2).is_some() {
        if let Ok(r) = solve_relay_single_crossing(&s) {
            return Ok(r);
        }
    }
    solve_relay_general(&s)
}

/// `-sum r2` over `[r1, r2, delta]`.
struct RelayThroughput;

impl ConvexObjective for RelayThroughput {
    fn value(&self, x: &[f64]) -> f64 {
        let t = x.len() / 3;
        -x[t..2 * t].iter().sum::<f64>()
    }
    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        let t = x.len() / 3;
        g[t..2 * t].iter_mut().for_each(|v| *v -= 1.0);
    }
    fn add_hessian(&self, _x: &[f64], _h: &mut DMatrix<f64>) {}
}

/// Convex program in the rate variables: linear objective, energy cost
/// `2^(2r) - 1` per slot, linear data causality.
pub(crate) fn solve_relay_general(s: &Scenario) -> Result<RelayReport> {
    let (e1, e2, alpha) = (s.e1.amounts(), s.e2.amounts(), s.alpha);
    let t = e1.len();
    let c1 = cumsum(e1);
    let c2 = cumsum(e2);
    let transfer = alpha > 0.0;

    let mut free = vec![false; 3 * t];
    for k in 0..t {
        free[k] = c1[k] > 0.0;
        free[t + k] = c1[k] > 0.0 && (c2[k] > 0.0 || transfer);
        free[2 * t + k] = transfer && c1[k] > 0.0;
    }
    let mut cons = Vec::with_capacity(5 * t);
    for k in 0..t {
        let mut src = Constraint {
            linear: vec![],
            exp_terms: (0..=k).collect(),
            rhs: c1[k],
        };
        let mut dst = Constraint {
            linear: vec![],
            exp_terms: (t..=t + k).collect(),
            rhs: c2[k],
        };
        if transfer {
            src.linear = (0..=k).map(|i| (2 * t + i, 1.0)).collect();
            dst.linear = (0..=k).map(|i| (2 * t + i, -alpha)).collect();
        }
        cons.push(src);
        cons.push(dst);
        let mut data: Vec<(usize, f64)> = (0..=k).map(|i| (t + i, 1.0)).collect();
        data.extend((0..=k).map(|i| (i, -1.0)));
        cons.push(Constraint { linear: data, exp_terms: vec![], rhs: 0.0 });
    }
    cons.extend(nonnegativity(&free));

    let mut weights = vec![1.0; 3 * t];
    weights[t..2 * t].iter_mut().for_each(|w| *w = 0.5);
    let x0 = interior_start(&cons, &free, &weights, 1.0)?;
    let x = match ipm::minimize(&RelayThroughput, &cons, x0, &free, DEFAULT_TOL) {
        Ok(r) => r.x,
        Err(Error::NotConverged { best, gap, .. }) if gap < 1e-6 => best,
        Err(e) => return Err(e),
    };

    let clean = |v: f64| if v < 1e-12 { 0.0 } else { v };
    let p1: Vec<f64> = x[..t].iter().map(|&r| clean(power(r))).collect();
    let p2: Vec<f64> = x[t..2 * t].iter().map(|&r| clean(power(r))).collect();
    let total: f64 = x[2 * t..].iter().map(|&d| clean(d)).sum();
    let delta = earliest_transfer(e1, &p1, total);
    finish(
        s,
        PowerSchedule::from_solver(p1),
        PowerSchedule::from_solver(p2),
        TransferSchedule::from_solver(delta),
        RelayPath::General,
    )
}

fn is_feasible(s: &Scenario, p1: &PowerSchedule, p2: &PowerSchedule, d: &TransferSchedule) -> Result<bool> {
    Ok(feasibility_violations(s, p1, p2, d)?.is_empty() && data_causality_violations(p1, p2)?.is_empty())
}

fn finish(
    s: &Scenario,
    p_source: PowerSchedule,
    p_relay: PowerSchedule,
    delta: TransferSchedule,
    path: RelayPath,
) -> Result<RelayReport> {
    let kkt = kkt_residuals(ModelKind::Relay, (0.0, 1.0), s, &p_source, &p_relay, &delta, &KktOptions::default())?;
    let mut report = RelayReport {
        throughput: p_relay.throughput(),
        p_source,
        p_relay,
        delta,
        kkt,
        lemma_results: vec![],
        path,
    };
    report.lemma_results = verify_relay_lemmas(&report, s)?;
    Ok(report)
}

/// The five structural properties every optimal relay policy has.
pub fn verify_relay_lemmas(report: &RelayReport, s: &Scenario) -> Result<Vec<LemmaResult>> {
    let s = s.normalized();
    let (ps, pr, d) = (&report.p_source, &report.p_relay, &report.delta);
    let mut violations = feasibility_violations(&s, ps, pr, d)?;
    violations.extend(data_causality_violations(ps, pr)?);
    if !violations.is_empty() {
        return Err(Error::Infeasible(violations));
    }
    let (rs, rr) = (ps.rates(), pr.rates());
    let result = |name: &str, slack: f64, passed: bool| LemmaResult {
        name: name.to_string(),
        passed,
        slack,
    };

    let bits_gap = (rr.iter().sum::<f64>() - rs.iter().sum::<f64>()).abs();
    let source_left = s.e1.total() - d.total() - ps.total();
    let relay_left = s.e2.total() + s.alpha * d.total() - pr.total();
    let transfers = d.any_positive(CAUSALITY_TOL);

    let power_margin = pr.total() - ps.total();
    let majorized = majorized_within(&rs, &rr, LEMMA_TOL).unwrap_or(false);

    let (cs, cr) = (cumsum(&rs), cumsum(&rr));
    let (us, ur) = (cumsum(ps.as_slice()), cumsum(pr.as_slice()));
    let buffer_margin = (0..s.horizon())
        .filter(|&k| (cs[k] - cr[k]).abs() <= LEMMA_TOL)
        .map(|k| ur[k] - us[k])
        .fold(f64::INFINITY, f64::min);
    let buffer_margin = if buffer_margin.is_finite() { buffer_margin } else { 0.0 };

    Ok(vec![
        result("no_data_left", bits_gap, bits_gap <= LEMMA_TOL),
        result("source_exhausts", source_left, source_left.abs() <= LEMMA_TOL),
        if transfers {
            result("relay_exhausts_when_receiving", relay_left, relay_left.abs() <= LEMMA_TOL)
        } else {
            result("relay_exhausts_when_receiving", 0.0, true)
        },
        result("relay_spends_at_least_source", power_margin, power_margin >= -LEMMA_TOL && majorized),
        result("empty_buffer_power_order", buffer_margin, buffer_margin >= -LEMMA_TOL),
    ])
}

/// Equal relay and source spending forces identical schedules; this is that test.
pub fn schedules_match(a: &PowerSchedule, b: &PowerSchedule) -> bool {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .all(|(x, y)| (x - y).abs() <= SCHEDULE_EQ_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relay(e1: &[f64], e2: &[f64], alpha: f64) -> Scenario {
        Scenario::new(ModelKind::Relay, e1.to_vec(), e2.to_vec(), alpha).unwrap()
    }

    #[test]
    fn crossing_detection() {
        assert_eq!(detect_single_crossing(&[1., 1., 1.], &[2., 2., 2.]), Some(3));
        assert_eq!(detect_single_crossing(&[5., 0., 0.], &[1., 1., 1.]), Some(0));
        assert_eq!(detect_single_crossing(&[1., 4., 0.], &[2., 1., 0.]), Some(1));
        assert_eq!(detect_single_crossing(&[1., 4., 0., 0.], &[2., 1., 5., 0.]), None);
    }

    #[test]
    fn source_initial_worked_example() {
        let r = solve_relay_source_initial(&relay(&[12., 0., 0., 0.], &[5., 1., 0., 2.], 0.5)).unwrap();
        assert_eq!(r.path, RelayPath::SourceInitial);
        assert!((r.delta.as_slice()[0] - 8.0 / 3.0).abs() < 1e-6, "{:?}", r.delta);
        for k in 0..4 {
            assert!((r.p_source.as_slice()[k] - 7.0 / 3.0).abs() < 1e-6);
            assert!((r.p_relay.as_slice()[k] - 7.0 / 3.0).abs() < 1e-6);
        }
        assert!(r.lemma_results.iter().all(|l| l.passed), "{:?}", r.lemma_results);
        assert!(r.kkt.satisfied(1e-6), "{:?}", r.kkt);
    }

    #[test]
    fn source_initial_without_relay_energy() {
        let r = solve_relay_source_initial(&relay(&[4., 0.], &[0., 0.], 1.0)).unwrap();
        assert!((r.delta.as_slice()[0] - 2.0).abs() < 1e-9);
        assert!((r.p_source.as_slice()[1] - 1.0).abs() < 1e-9);
        assert!((r.p_relay.as_slice()[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn abundant_relay_needs_no_transfer() {
        let r = solve_relay_source_initial(&relay(&[6., 0., 0.], &[10., 0., 0.], 0.5)).unwrap();
        assert_eq!(r.delta.total(), 0.0);
        assert_eq!(r.p_source.as_slice(), &[2., 2., 2.]);
    }

    #[test]
    fn identical_profiles_match() {
        let r = solve_relay_single_crossing(&relay(&[2., 2.], &[2., 2.], 0.5)).unwrap();
        assert_eq!(r.delta.total(), 0.0);
        assert!(schedules_match(&r.p_source, &r.p_relay));
        assert!((r.p_source.as_slice()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn general_path_is_certified() {
        let s = relay(&[2., 3., 5., 4.], &[5., 1., 2., 1.], 0.5);
        let r = solve_relay_general(&s).unwrap();
        assert!(r.lemma_results.iter().all(|l| l.passed), "{:?}", r.lemma_results);
        assert!(r.kkt.satisfied(1e-6), "{:?}", r.kkt);
    }

    #[test]
    fn unspent_source_energy_fails_check() {
        let s = relay(&[4., 0.], &[4., 0.], 0.5);
        let mut r = solve_relay(&s).unwrap();
        r.p_source = PowerSchedule::new(vec![1., 1.]).unwrap();
        r.p_relay = PowerSchedule::new(vec![1., 1.]).unwrap();
        let l = verify_relay_lemmas(&r, &s).unwrap();
        assert!(!l[1].passed && l[1].slack > 0.0);
        assert!(l[2].passed);
    }
}
