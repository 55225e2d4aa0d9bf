//! Brute-force reference solutions for small horizons.
//!
//! The outer search is a nested grid over a fraction parametrization that
//! maps the unit box onto the feasible set: each slot spends a fraction of
//! what is still available. Transfers are always gridded; so are the powers
//! of the user whose problem is not a plain water-filling once the rest is
//! fixed. The remaining user is solved exactly by enumerating which
//! cumulative constraints are tight.
//!
//! None of this shares code with the solvers it checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{ModelKind, Policy, PowerSchedule, Scenario, TransferSchedule};
use crate::error::{Error, Result};

pub const MAX_HORIZON: usize = 4;
pub const GRID_POINTS: usize = 9;
const SHRINK: f64 = 1.0 / 3.0;
const MAX_DIMS: usize = 2 * MAX_HORIZON - 1;
const FIT_TOL: f64 = 1e-12;

type Slots = [f64; MAX_HORIZON];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub best_objective: f64,
    pub p1: PowerSchedule,
    pub p2: PowerSchedule,
    pub delta: TransferSchedule,
    /// Refinement levels after the coarse grid.
    pub grid_levels: usize,
    pub cells_evaluated: u64,
}

fn bits(p: f64) -> f64 {
    0.5 * p.ln_1p() / std::f64::consts::LN_2
}

fn power_for(bits: f64) -> f64 {
    (2.0 * bits * std::f64::consts::LN_2).exp_m1()
}

struct Problem {
    model: ModelKind,
    theta: (f64, f64),
    t: usize,
    alpha: f64,
    c1: Slots,
    c2: Slots,
    /// `min_{j>=k} c1_j`
    floor1: Slots,
}

#[derive(Clone, Copy)]
struct Point {
    p1: Slots,
    p2: Slots,
    d: Slots,
}

impl Problem {
    fn dims(&self) -> usize {
        match self.model {
            ModelKind::TwoWay => self.t,
            ModelKind::Relay | ModelKind::Mac => 2 * self.t - 1,
        }
    }

    fn evaluate(&self, u: &[f64]) -> (f64, Point) {
        let t = self.t;
        let mut pt = Point {
            p1: [0.0; MAX_HORIZON],
            p2: [0.0; MAX_HORIZON],
            d: [0.0; MAX_HORIZON],
        };
        let mut cum_d = [0.0; MAX_HORIZON];
        let user2_heavy = self.model == ModelKind::Mac && self.theta.0 < self.theta.1;

        if self.model == ModelKind::TwoWay || user2_heavy {
            let mut used = 0.0;
            for k in 0..t {
                pt.d[k] = u[k] * (self.floor1[k] - used).max(0.0);
                used += pt.d[k];
                cum_d[k] = used;
            }
        } else {
            // transfer and source power share user 1's battery slot by slot
            let mut used = 0.0;
            let mut sent = 0.0;
            for k in 0..t {
                let avail = (self.floor1[k] - used).max(0.0);
                pt.d[k] = u[k] * avail;
                let rest = avail - pt.d[k];
                pt.p1[k] = if k + 1 < t { u[t + k] * rest } else { rest };
                used += pt.d[k] + pt.p1[k];
                sent += pt.d[k];
                cum_d[k] = sent;
            }
        }

        let mut caps1 = [0.0; MAX_HORIZON];
        let mut caps2 = [0.0; MAX_HORIZON];
        for k in 0..t {
            caps1[k] = self.c1[k] - cum_d[k];
            caps2[k] = self.c2[k] + self.alpha * cum_d[k];
        }
        let ones = [1.0; MAX_HORIZON];

        match self.model {
            ModelKind::TwoWay => {
                pt.p1 = fill(&caps1[..t], &ones[..t]);
                pt.p2 = fill(&caps2[..t], &ones[..t]);
            }
            ModelKind::Relay => {
                let mut delivered = [0.0; MAX_HORIZON];
                let mut acc = 0.0;
                for (d, &p) in delivered.iter_mut().zip(&pt.p1[..t]) {
                    acc += bits(p);
                    *d = acc;
                }
                pt.p2 = forward(&caps2[..t], &delivered[..t]);
            }
            ModelKind::Mac if user2_heavy => {
                let mut floor2 = caps2;
                for k in (0..t - 1).rev() {
                    floor2[k] = floor2[k].min(floor2[k + 1]);
                }
                let mut used = 0.0;
                for k in 0..t {
                    let avail = (floor2[k] - used).max(0.0);
                    pt.p2[k] = if k + 1 < t { u[t + k] * avail } else { avail };
                    used += pt.p2[k];
                }
                let floors: Vec<f64> = pt.p2[..t].iter().map(|p| 1.0 + p).collect();
                pt.p1 = fill(&caps1[..t], &floors);
            }
            ModelKind::Mac => {
                let floors: Vec<f64> = pt.p1[..t].iter().map(|p| 1.0 + p).collect();
                pt.p2 = fill(&caps2[..t], &floors);
            }
        }
        (self.objective(&pt), pt)
    }

    fn objective(&self, pt: &Point) -> f64 {
        let (th1, th2) = self.theta;
        (0..self.t)
            .map(|i| {
                let (a, b) = (pt.p1[i], pt.p2[i]);
                match self.model {
                    ModelKind::Relay => bits(b),
                    ModelKind::TwoWay => th1 * bits(a) + th2 * bits(b),
                    ModelKind::Mac if th1 >= th2 => (th1 - th2) * bits(a) + th2 * bits(a + b),
                    ModelKind::Mac => (th2 - th1) * bits(b) + th1 * bits(a + b),
                }
            })
            .sum()
    }
}

/// Maximizes `sum ln(floor_i + p_i)` subject to cumulative caps by trying
/// every set of tight slots (the last one always tight) and keeping the best
/// candidate that fits.
fn fill(caps: &[f64], floors: &[f64]) -> Slots {
    let t = caps.len();
    let mut best = [0.0; MAX_HORIZON];
    let mut best_value = f64::NEG_INFINITY;
    for mask in 0..1usize << (t - 1) {
        let mut p = [0.0; MAX_HORIZON];
        let mut start = 0;
        let mut spent = 0.0;
        let mut ok = true;
        for end in 0..t {
            if end + 1 < t && mask & (1 << end) == 0 {
                continue;
            }
            let budget = caps[end] - spent;
            if budget < -FIT_TOL {
                ok = false;
                break;
            }
            let level = level_over(&floors[start..=end], budget.max(0.0));
            for i in start..=end {
                p[i] = (level - floors[i]).max(0.0);
            }
            spent = caps[end];
            start = end + 1;
        }
        if !ok {
            continue;
        }
        let mut acc = 0.0;
        for k in 0..t {
            acc += p[k];
            if acc > caps[k] + FIT_TOL * caps[k].abs().max(1.0) {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        let value: f64 = (0..t).map(|i| (floors[i] + p[i]).ln()).sum();
        if value > best_value {
            best_value = value;
            best = p;
        }
    }
    best
}

fn level_over(floors: &[f64], volume: f64) -> f64 {
    let mut f: Vec<f64> = floors.to_vec();
    f.sort_by(f64::total_cmp);
    let mut acc = 0.0;
    for j in 0..f.len() {
        acc += f[j];
        let level = (volume + acc) / (j + 1) as f64;
        if j + 1 == f.len() || level <= f[j + 1] {
            return level;
        }
    }
    f64::NAN
}

/// Relay forwarding for fixed source rates: constant-rate segments, each
/// as fast as both the relay's energy and the data received so far allow.
fn forward(energy: &[f64], delivered: &[f64]) -> Slots {
    let t = energy.len();
    let mut p = [0.0; MAX_HORIZON];
    let (mut n, mut e_used, mut r_used) = (0, 0.0, 0.0);
    while n < t {
        let mut best = f64::INFINITY;
        let mut best_end = n;
        for k in n..t {
            let len = (k - n + 1) as f64;
            let by_energy = bits(((energy[k] - e_used) / len).max(0.0));
            let by_data = ((delivered[k] - r_used) / len).max(0.0);
            let r = by_energy.min(by_data);
            if r <= best {
                best = r;
                best_end = k;
            }
        }
        let power = power_for(best);
        for slot in p.iter_mut().take(best_end + 1).skip(n) {
            *slot = power;
        }
        let len = (best_end - n + 1) as f64;
        e_used += len * power;
        r_used += len * best;
        n = best_end + 1;
    }
    p
}

/// Nested grid search for the optimum of `model` on a small scenario.
///
/// The coarse grid has [`GRID_POINTS`] points per variable on the unit box;
/// each of the `depth` refinement levels shrinks the box by a factor of three
/// around the incumbent. The relay objective is the end-to-end throughput;
/// the others use the weights `theta`.
pub fn brute_force_solve(model: ModelKind, s: &Scenario, theta: (f64, f64), depth: usize) -> Result<OracleResult> {
    if s.model != model {
        return Err(Error::Precondition(format!("scenario is {}, asked for {model}", s.model)));
    }
    let t = s.horizon();
    if t > MAX_HORIZON {
        return Err(Error::HorizonTooLarge(t, MAX_HORIZON));
    }
    if depth == 0 {
        return Err(Error::Precondition("oracle depth must be at least 1".into()));
    }
    let (th1, th2) = theta;
    if model != ModelKind::Relay && !(th1.is_finite() && th2.is_finite() && th1 >= 0.0 && th2 >= 0.0 && th1 + th2 > 0.0) {
        return Err(Error::InvalidWeights(th1, th2));
    }
    let s = s.normalized();
    let mut problem = Problem {
        model,
        theta,
        t,
        alpha: s.alpha,
        c1: [0.0; MAX_HORIZON],
        c2: [0.0; MAX_HORIZON],
        floor1: [0.0; MAX_HORIZON],
    };
    let (mut a1, mut a2) = (0.0, 0.0);
    for k in 0..t {
        a1 += s.e1.amounts()[k];
        a2 += s.e2.amounts()[k];
        problem.c1[k] = a1;
        problem.c2[k] = a2;
    }
    problem.floor1 = problem.c1;
    for k in (0..t - 1).rev() {
        problem.floor1[k] = problem.floor1[k].min(problem.floor1[k + 1]);
    }

    let dims = problem.dims();
    let cells = (GRID_POINTS as u64).pow(dims as u32);
    let mut lo = [0.0; MAX_DIMS];
    let mut hi = [1.0; MAX_DIMS];
    let mut incumbent: Option<(f64, [f64; MAX_DIMS])> = None;
    let mut evaluated = 0;

    for level in 0..=depth {
        if let Some((_, center)) = incumbent {
            let half = 0.5 * SHRINK.powi(level as i32);
            for j in 0..dims {
                lo[j] = (center[j] - half).max(0.0);
                hi[j] = (center[j] + half).min(1.0);
            }
        }
        let found = (0..cells)
            .into_par_iter()
            .map(|idx| {
                let mut u = [0.0; MAX_DIMS];
                let mut rest = idx;
                for j in 0..dims {
                    let digit = (rest % GRID_POINTS as u64) as f64;
                    rest /= GRID_POINTS as u64;
                    u[j] = lo[j] + (hi[j] - lo[j]) * digit / (GRID_POINTS - 1) as f64;
                }
                (problem.evaluate(&u[..dims]).0, u)
            })
            .reduce_with(better);
        evaluated += cells;
        if let Some(candidate) = found {
            incumbent = Some(match incumbent {
                Some(current) => better(current, candidate),
                None => candidate,
            });
        }
    }

    let (_, u) = incumbent.expect("grid is non-empty");
    let (value, pt) = problem.evaluate(&u[..dims]);
    Ok(OracleResult {
        best_objective: value,
        p1: PowerSchedule::new(pt.p1[..t].to_vec())?,
        p2: PowerSchedule::new(pt.p2[..t].to_vec())?,
        delta: TransferSchedule::new(pt.d[..t].to_vec())?,
        grid_levels: depth,
        cells_evaluated: evaluated,
    })
}

/// Higher objective wins; ties go to the lexicographically smaller point.
fn better(a: (f64, [f64; MAX_DIMS]), b: (f64, [f64; MAX_DIMS])) -> (f64, [f64; MAX_DIMS]) {
    match a.0.total_cmp(&b.0) {
        std::cmp::Ordering::Greater => a,
        std::cmp::Ordering::Less => b,
        std::cmp::Ordering::Equal => {
            if a.1.iter().zip(&b.1).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()) == Some(std::cmp::Ordering::Greater) {
                b
            } else {
                a
            }
        }
    }
}

/// Deterministic random scenario: arrivals uniform on `[0, max_energy]`,
/// `alpha` uniform on `[0.1, 1]`.
pub fn random_scenario(model: ModelKind, seed: u64, horizon: usize, max_energy: f64) -> Result<Scenario> {
    if horizon == 0 {
        return Err(Error::EmptyProfile);
    }
    if !(max_energy.is_finite() && max_energy > 0.0) {
        return Err(Error::ZeroProfile);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e1 = (0..horizon).map(|_| rng.gen_range(0.0..=max_energy)).collect();
    let e2 = (0..horizon).map(|_| rng.gen_range(0.0..=max_energy)).collect();
    let alpha = rng.gen_range(0.1..=1.0);
    Scenario::new(model, e1, e2, alpha)
}

/// A random feasible policy for the normalized scenario: every slot spends
/// a uniform fraction of what is still available.
pub fn random_policy(s: &Scenario, seed: u64) -> Policy {
    let s = s.normalized();
    let t = s.horizon();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (e1, e2, alpha) = (s.e1.amounts(), s.e2.amounts(), s.alpha);
    let mut floor1 = vec![0.0; t];
    let mut acc = 0.0;
    for k in 0..t {
        acc += e1[k];
        floor1[k] = acc;
    }
    for k in (0..t.saturating_sub(1)).rev() {
        floor1[k] = floor1[k].min(floor1[k + 1]);
    }
    let (mut p1, mut d) = (vec![0.0; t], vec![0.0; t]);
    let mut used = 0.0;
    for k in 0..t {
        let avail = (floor1[k] - used).max(0.0);
        d[k] = rng.gen_range(0.0..=1.0) * avail;
        p1[k] = rng.gen_range(0.0..=1.0) * (avail - d[k]);
        used += d[k] + p1[k];
    }
    let mut floor2 = vec![0.0; t];
    let (mut a, mut sent) = (0.0, 0.0);
    for k in 0..t {
        a += e2[k];
        sent += d[k];
        floor2[k] = a + alpha * sent;
    }
    for k in (0..t.saturating_sub(1)).rev() {
        floor2[k] = floor2[k].min(floor2[k + 1]);
    }
    let mut p2 = vec![0.0; t];
    let mut used = 0.0;
    for k in 0..t {
        p2[k] = rng.gen_range(0.0..=1.0) * (floor2[k] - used).max(0.0);
        used += p2[k];
    }
    Policy {
        p1: PowerSchedule::new(p1).expect("fractions of non-negative amounts"),
        p2: PowerSchedule::new(p2).expect("fractions of non-negative amounts"),
        delta: TransferSchedule::new(d).expect("fractions of non-negative amounts"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub passed: bool,
    /// `(oracle - solver) / |oracle|`; negative when the solver does better.
    pub relative_gap: f64,
}

/// Passes when the solver is no worse than the oracle by more than
/// `rel_tol` relative. The solver may beat the grid.
pub fn compare_reports(solver_obj: f64, oracle_obj: f64, rel_tol: f64) -> Verdict {
    let scale = if oracle_obj.abs() > 0.0 { oracle_obj.abs() } else { 1.0 };
    let relative_gap = (oracle_obj - solver_obj) / scale;
    Verdict {
        passed: solver_obj.is_finite() && oracle_obj.is_finite() && relative_gap <= rel_tol,
        relative_gap,
    }
}

/// Default refinement depth used by [`check_random_instance`].
pub const VERIFY_DEPTH: usize = 6;
/// Largest horizon drawn by [`check_random_instance`].
pub const VERIFY_MAX_HORIZON: usize = 3;
const VERIFY_MAX_ENERGY: f64 = 10.0;

/// Solver against oracle on one random instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceCheck {
    pub model: ModelKind,
    pub seed: u64,
    pub scenario: Scenario,
    pub theta: (f64, f64),
    pub solver_objective: f64,
    pub oracle_objective: f64,
    pub solver_feasible: bool,
    pub verdict: Verdict,
    /// Solver error, if it failed outright.
    pub error: Option<String>,
}

impl InstanceCheck {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.solver_feasible && self.verdict.passed
    }
}

/// Draws a horizon, weights and scenario from `seed`, solves it with the
/// model's solver and with the oracle, and compares the objectives.
pub fn check_random_instance(model: ModelKind, seed: u64, rel_tol: f64) -> Result<InstanceCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = rng.gen_range(1..=VERIFY_MAX_HORIZON);
    let w: f64 = rng.gen_range(0.0..=1.0);
    let theta = if model == ModelKind::Relay { (0.0, 1.0) } else { (1.0 - w, w) };
    let s = random_scenario(model, rng.gen(), horizon, VERIFY_MAX_ENERGY)?;
    let oracle = brute_force_solve(model, &s, theta, VERIFY_DEPTH)?;

    let solved = match model {
        ModelKind::Relay => crate::relay::solve_relay(&s).map(|r| {
            let ok = feasible(&s, &r.p_source, &r.p_relay, &r.delta, true);
            (r.throughput, ok)
        }),
        ModelKind::TwoWay => crate::twoway::solve_twoway_weighted(&s, theta).map(|r| {
            let ok = feasible(&s, &r.p1, &r.p2, &r.delta, false);
            (r.objective, ok)
        }),
        ModelKind::Mac => crate::mac::solve_mac_weighted(&s, theta).map(|r| {
            let ok = feasible(&s, &r.p1, &r.p2, &r.delta, false);
            (r.objective(), ok)
        }),
    };
    let (solver_objective, solver_feasible, error) = match solved {
        Ok((obj, ok)) => (obj, ok, None),
        Err(e) => (f64::NAN, false, Some(e.to_string())),
    };
    Ok(InstanceCheck {
        model,
        seed,
        theta,
        solver_objective,
        oracle_objective: oracle.best_objective,
        solver_feasible,
        verdict: compare_reports(solver_objective, oracle.best_objective, rel_tol),
        error,
        scenario: s,
    })
}

fn feasible(s: &Scenario, p1: &PowerSchedule, p2: &PowerSchedule, d: &TransferSchedule, data: bool) -> bool {
    let energy = crate::domain::feasibility_violations(s, p1, p2, d).map(|v| v.is_empty());
    let data_ok = !data || crate::domain::data_causality_violations(p1, p2).map(|v| v.is_empty()).unwrap_or(false);
    energy.unwrap_or(false) && data_ok
}

/// `count` instances per model with seeds `seed, seed + 1, ...`.
pub fn run_verification(seed: u64, count: usize, rel_tol: f64) -> Result<Vec<InstanceCheck>> {
    let mut out = Vec::with_capacity(3 * count);
    for model in [ModelKind::Relay, ModelKind::TwoWay, ModelKind::Mac] {
        for i in 0..count as u64 {
            out.push(check_random_instance(model, seed.wrapping_add(i), rel_tol)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_slot_relay_splits_evenly() {
        let s = Scenario::new(ModelKind::Relay, vec![4.], vec![0.], 1.0).unwrap();
        let r = brute_force_solve(ModelKind::Relay, &s, (0.0, 1.0), 3).unwrap();
        assert!((r.delta.as_slice()[0] - 2.0).abs() < 1e-9);
        assert!((r.best_objective - 0.5 * 3f64.log2()).abs() < 1e-9);
    }

    #[test]
    fn two_way_worked_run() {
        let s = Scenario::new(ModelKind::TwoWay, vec![0., 12., 0.], vec![6., 6., 0.], 1.0).unwrap();
        let r = brute_force_solve(ModelKind::TwoWay, &s, (1.0, 1.0), 4).unwrap();
        let expected = 2.5 * 5.8f64.log2();
        assert!((r.best_objective - expected).abs() < 1e-4 * expected, "{}", r.best_objective);
    }

    #[test]
    fn useless_transfer_is_avoided() {
        let s = Scenario::new(ModelKind::TwoWay, vec![3., 1.], vec![1., 2.], 0.0).unwrap();
        let r = brute_force_solve(ModelKind::TwoWay, &s, (1.0, 1.0), 2).unwrap();
        assert_eq!(r.delta.total(), 0.0);
    }

    #[test]
    fn deeper_is_never_worse() {
        let s = random_scenario(ModelKind::Mac, 7, 2, 5.0).unwrap();
        let a = brute_force_solve(ModelKind::Mac, &s, (0.3, 0.7), 1).unwrap();
        let b = brute_force_solve(ModelKind::Mac, &s, (0.3, 0.7), 3).unwrap();
        assert!(b.best_objective >= a.best_objective);
    }

    #[test]
    fn rejects_long_horizons() {
        let s = random_scenario(ModelKind::Relay, 1, 5, 5.0).unwrap();
        assert!(matches!(brute_force_solve(ModelKind::Relay, &s, (0.0, 1.0), 1), Err(Error::HorizonTooLarge(5, 4))));
    }

    #[test]
    fn random_scenarios_are_deterministic() {
        let a = random_scenario(ModelKind::TwoWay, 42, 3, 10.0).unwrap();
        let b = random_scenario(ModelKind::TwoWay, 42, 3, 10.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.horizon(), 3);
        assert!(random_scenario(ModelKind::TwoWay, 42, 3, 0.0).is_err());
    }

    #[test]
    fn verdicts() {
        let v = compare_reports(1.0, 1.0, 1e-4);
        assert!(v.passed && v.relative_gap == 0.0);
        let v = compare_reports(0.9, 1.0, 1e-4);
        assert!(!v.passed && (v.relative_gap - 0.1).abs() < 1e-12);
        assert!(compare_reports(1.01, 1.0, 1e-4).passed);
    }
}
