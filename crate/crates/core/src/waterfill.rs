//! Single-user directional water-filling.
//!
//! Energy only moves forward in time, so the optimal schedule is a staircase:
//! each step is the smallest forward average of the remaining cumulative
//! energy curve, and the level only rises at slots where all energy harvested
//! so far has been spent.

use crate::domain::PowerSchedule;
use crate::error::{Error, Result};

const TIE_TOL: f64 = 1e-12;

/// Piecewise-constant structure of a water-filled schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    /// `0 = n_0 < n_1 < ... < n_m = T`; segment `j` covers slots `n_j..n_{j+1}`.
    pub breakpoints: Vec<usize>,
    pub levels: Vec<f64>,
}

impl Segmentation {
    pub fn to_schedule(&self) -> PowerSchedule {
        let mut p = Vec::with_capacity(*self.breakpoints.last().unwrap_or(&0));
        for (w, &level) in self.breakpoints.windows(2).zip(&self.levels) {
            p.extend(std::iter::repeat_n(level, w[1] - w[0]));
        }
        PowerSchedule::from_solver(p)
    }
}

fn check_caps(caps: &[f64]) -> Result<()> {
    if caps.is_empty() {
        return Err(Error::EmptyProfile);
    }
    if let Some(&c) = caps.iter().find(|c| !c.is_finite()) {
        return Err(Error::NegativeOrNonFinite(c));
    }
    if caps[0] < -TIE_TOL {
        return Err(Error::DecreasingCaps { slot: 1 });
    }
    for k in 1..caps.len() {
        if caps[k] < caps[k - 1] - TIE_TOL * caps[k - 1].abs().max(1.0) {
            return Err(Error::DecreasingCaps { slot: k + 1 });
        }
    }
    Ok(())
}

/// Segments of the optimal schedule under the cumulative curve `caps`.
///
/// From each breakpoint the next one is the slot with the smallest forward
/// average; ties go to the largest slot, so adjacent levels are strictly
/// increasing.
pub fn min_average_segmentation(caps: &[f64]) -> Result<Segmentation> {
    check_caps(caps)?;
    let t = caps.len();
    let mut breakpoints = vec![0];
    let mut levels = Vec::new();
    let mut start = 0;
    let mut base = 0.0;
    while start < t {
        let mut best = f64::INFINITY;
        let mut best_end = t;
        for end in start + 1..=t {
            let avg = (caps[end - 1] - base) / (end - start) as f64;
            if avg <= best + TIE_TOL * best.abs().max(1.0) {
                best = best.min(avg);
                best_end = end;
            }
        }
        levels.push(best.max(0.0));
        breakpoints.push(best_end);
        base = caps[best_end - 1];
        start = best_end;
    }
    Ok(Segmentation { breakpoints, levels })
}

/// Throughput-optimal schedule for a single user whose cumulative available
/// energy is `caps`.
pub fn single_user_dwf(caps: &[f64]) -> Result<PowerSchedule> {
    Ok(min_average_segmentation(caps)?.to_schedule())
}

/// Largest bits a single user delivers with cumulative energy `caps`.
pub fn single_user_throughput(caps: &[f64]) -> Result<f64> {
    Ok(single_user_dwf(caps)?.throughput())
}

/// Lower envelope `min_{j>=k} caps_j`; the feasible set is unchanged by it.
pub(crate) fn envelope(caps: &[f64]) -> Vec<f64> {
    let mut env = caps.to_vec();
    for k in (0..env.len().saturating_sub(1)).rev() {
        env[k] = env[k].min(env[k + 1]);
    }
    env
}

/// Water-filling for a cumulative curve that may dip (energy leaving the
/// battery, e.g. through a transfer). Negative envelope values are clamped.
pub(crate) fn dwf_any_caps(caps: &[f64]) -> Vec<f64> {
    let env: Vec<f64> = envelope(caps).into_iter().map(|c| c.max(0.0)).collect();
    min_average_segmentation(&env)
        .expect("envelope is nondecreasing")
        .to_schedule()
        .into_vec()
}

/// Maximizes `sum ln(floor_i + p_i)` subject to `sum_{i<=k} p_i <= caps_k`,
/// spending everything. Levels `floor_i + p_i` rise only where the cumulative
/// cap is tight; slots whose floor sits above the local level stay dry.
pub fn water_fill_with_floors(caps: &[f64], floors: &[f64]) -> Result<Vec<f64>> {
    check_caps(caps)?;
    if floors.len() != caps.len() {
        return Err(Error::LengthMismatch {
            expected: caps.len(),
            got: floors.len(),
        });
    }
    if let Some(&f) = floors.iter().find(|f| !f.is_finite() || **f <= 0.0) {
        return Err(Error::Precondition(format!("floors must be positive, got {f}")));
    }
    let t = caps.len();
    let mut p = vec![0.0; t];
    let mut start = 0;
    let mut base = 0.0;
    while start < t {
        let mut best = f64::INFINITY;
        let mut best_end = t;
        for end in start + 1..=t {
            let level = level_over_floors(&floors[start..end], (caps[end - 1] - base).max(0.0));
            if level <= best + TIE_TOL * best.abs().max(1.0) {
                best = best.min(level);
                best_end = end;
            }
        }
        for i in start..best_end {
            p[i] = (best - floors[i]).max(0.0);
        }
        // spend exactly the segment budget despite rounding in the level
        let spent: f64 = p[start..best_end].iter().sum();
        let budget = (caps[best_end - 1] - base).max(0.0);
        if spent > 0.0 {
            let scale = budget / spent;
            p[start..best_end].iter_mut().for_each(|x| *x *= scale);
        }
        base = caps[best_end - 1];
        start = best_end;
    }
    Ok(p)
}

/// Level `L` with `sum max(0, L - f_i) = volume`.
fn level_over_floors(floors: &[f64], volume: f64) -> f64 {
    let mut f = floors.to_vec();
    f.sort_by(f64::total_cmp);
    let mut acc = 0.0;
    for j in 0..f.len() {
        acc += f[j];
        let level = (volume + acc) / (j + 1) as f64;
        if j + 1 == f.len() || level <= f[j + 1] {
            return level;
        }
    }
    unreachable!("floors are non-empty")
}

/// Euclidean projection of `v` onto `{p >= 0, sum_{i<=k} p_i <= caps_k}`.
///
/// The projection has the form `p_i = max(0, v_i - m_i)` with `m` a
/// nonincreasing, nonnegative step function that drops only at tight slots.
/// Segments are peeled off greedily by the largest shift `m` any prefix needs.
pub fn project_cumulative(v: &[f64], caps: &[f64]) -> Result<PowerSchedule> {
    check_caps(caps)?;
    if v.len() != caps.len() {
        return Err(Error::LengthMismatch {
            expected: caps.len(),
            got: v.len(),
        });
    }
    if let Some(&x) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::NegativeOrNonFinite(x));
    }
    let t = v.len();
    let mut p = vec![0.0; t];
    let mut start = 0;
    let mut base = 0.0;
    while start < t {
        let mut best: f64 = 0.0;
        let mut best_end = None;
        for end in start + 1..=t {
            let shift = shift_for_budget(&v[start..end], (caps[end - 1] - base).max(0.0));
            if shift > 0.0 && shift >= best - TIE_TOL * best.max(1.0) {
                best = shift.max(best);
                best_end = Some(end);
            }
        }
        match best_end {
            Some(end) => {
                for i in start..end {
                    p[i] = (v[i] - best).max(0.0);
                }
                base = caps[end - 1];
                start = end;
            }
            None => {
                for i in start..t {
                    p[i] = v[i].max(0.0);
                }
                break;
            }
        }
    }
    Ok(PowerSchedule::from_solver(p))
}

/// Smallest `m >= 0` with `sum max(0, v_i - m) <= budget`.
fn shift_for_budget(v: &[f64], budget: f64) -> f64 {
    let positive: f64 = v.iter().map(|x| x.max(0.0)).sum();
    if positive <= budget {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    for j in 0..s.len() {
        acc += s[j];
        let m = (acc - budget) / (j + 1) as f64;
        if j + 1 == s.len() || m >= s[j + 1] {
            return m.max(0.0);
        }
    }
    unreachable!("slice is non-empty")
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{cumsum, rate};
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    /// Exhaustive search over nondecreasing schedules on a grid of step `h`.
    fn grid_oracle(increments: &[f64], h: f64) -> f64 {
        let caps = cumsum(increments);
        fn rec(k: usize, used: f64, prev: f64, caps: &[f64], h: f64, best: &mut f64, acc: f64) {
            if k == caps.len() {
                *best = best.max(acc);
                return;
            }
            let mut p = prev;
            while used + p <= caps[k] + 1e-12 {
                rec(k + 1, used + p, p, caps, h, best, acc + rate(p));
                p += h;
            }
        }
        let mut best = f64::NEG_INFINITY;
        rec(0, 0.0, 0.0, &caps, h, &mut best, 0.0);
        best
    }

    #[test]
    fn flat_arrivals_stay_flat() {
        let p = single_user_dwf(&cumsum(&[4., 4., 4.])).unwrap();
        assert!(close(p.as_slice(), &[4., 4., 4.], 1e-12));
    }

    #[test]
    fn late_burst_spreads_forward() {
        let p = single_user_dwf(&cumsum(&[0., 12., 0.])).unwrap();
        assert!(close(p.as_slice(), &[0., 6., 6.], 1e-12));
        let seg = min_average_segmentation(&cumsum(&[0., 12., 0.])).unwrap();
        assert_eq!(seg.breakpoints, vec![0, 1, 3]);
        assert!(close(&seg.levels, &[0., 6.], 1e-12));
    }

    #[test]
    fn grid_oracle_agrees() {
        // oracle: best nondecreasing schedule on a 0.5 grid is [5, 7.5, 7.5]
        let oracle = grid_oracle(&[5., 10., 5.], 0.5);
        let p = single_user_dwf(&cumsum(&[5., 10., 5.])).unwrap();
        assert!(close(p.as_slice(), &[5., 7.5, 7.5], 1e-12));
        assert!((p.throughput() - oracle).abs() < 1e-12);

        let oracle = grid_oracle(&[6., 0., 0.], 0.25);
        let seg = min_average_segmentation(&cumsum(&[6., 0., 0.])).unwrap();
        assert_eq!(seg.breakpoints, vec![0, 3]);
        assert!(close(&seg.levels, &[2.], 1e-12));
        assert!((seg.to_schedule().throughput() - oracle).abs() < 1e-12);
    }

    #[test]
    fn increasing_arrivals_are_three_segments() {
        let seg = min_average_segmentation(&cumsum(&[1., 2., 3.])).unwrap();
        assert_eq!(seg.breakpoints, vec![0, 1, 2, 3]);
        assert!(close(&seg.levels, &[1., 2., 3.], 1e-12));
    }

    #[test]
    fn decreasing_caps_rejected() {
        assert!(matches!(
            single_user_dwf(&[3., 2.]),
            Err(Error::DecreasingCaps { slot: 2 })
        ));
        assert!(single_user_dwf(&[]).is_err());
    }

    #[test]
    fn projection_examples() {
        let p = project_cumulative(&[1., 2.], &[4., 8.]).unwrap();
        assert!(close(p.as_slice(), &[1., 2.], 0.0));
        let p = project_cumulative(&[-1., -1.], &[3., 5.]).unwrap();
        assert!(close(p.as_slice(), &[0., 0.], 0.0));
        // active-set enumeration on T = 2 for v = [10, 0], caps = [4, 8]:
        // {p1 = 4} active, p2 free -> [4, 0], distance 6; feasible since 4 <= 8.
        let p = project_cumulative(&[10., 0.], &[4., 8.]).unwrap();
        assert!(close(p.as_slice(), &[4., 0.], 1e-12));
        // v = [10, 10], caps = [4, 6]: only the total binds -> [3, 3]
        let p = project_cumulative(&[10., 10.], &[4., 6.]).unwrap();
        assert!(close(p.as_slice(), &[3., 3.], 1e-12));
        // v = [3, 5], caps = [6, 6]: total binds -> shift 1 -> [2, 4]
        let p = project_cumulative(&[3., 5.], &[6., 6.]).unwrap();
        assert!(close(p.as_slice(), &[2., 4.], 1e-12));
    }

    #[test]
    fn floors_reduce_to_dwf_with_unit_floor() {
        let caps = cumsum(&[3., 0., 7., 1.]);
        let p = water_fill_with_floors(&caps, &[1.; 4]).unwrap();
        let q = single_user_dwf(&caps).unwrap();
        assert!(close(&p, q.as_slice(), 1e-12));
        // a tall floor stays dry: ln(5 + p1) + ln(1 + p2) with 2 units -> [0, 2]
        let p = water_fill_with_floors(&[2., 2.], &[5., 1.]).unwrap();
        assert!(close(&p, &[0., 2.], 1e-12));
    }

    /// Brute-force projection for T <= 4: every subset of active caps and
    /// zero entries, solved as an equality QP, keeping the closest feasible point.
    fn projection_oracle(v: &[f64], caps: &[f64]) -> Vec<f64> {
        use nalgebra::{DMatrix, DVector};
        let t = v.len();
        let mut best = (f64::INFINITY, vec![]);
        for mask in 0u32..(1 << (2 * t)) {
            let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
            for k in 0..t {
                if mask >> k & 1 == 1 {
                    let mut a = vec![0.0; t];
                    a[..=k].iter_mut().for_each(|x| *x = 1.0);
                    rows.push((a, caps[k]));
                }
                if mask >> (t + k) & 1 == 1 {
                    let mut a = vec![0.0; t];
                    a[k] = 1.0;
                    rows.push((a, 0.0));
                }
            }
            // minimize |p - v|^2 s.t. A p = b  ->  p = v - A^T (A A^T)^+ (A v - b)
            let p = if rows.is_empty() {
                v.to_vec()
            } else {
                let a = DMatrix::from_fn(rows.len(), t, |r, c| rows[r].0[c]);
                let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
                let vv = DVector::from_column_slice(v);
                let aat = &a * a.transpose();
                let Ok(pinv) = aat.pseudo_inverse(1e-12) else { continue };
                let y = pinv * (&a * &vv - b);
                (vv - a.transpose() * y).iter().copied().collect()
            };
            let feasible = p.iter().all(|&x| x >= -1e-9)
                && cumsum(&p).iter().zip(caps).all(|(s, c)| *s <= c + 1e-9);
            if feasible {
                let d: f64 = p.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
                if d < best.0 {
                    best = (d, p);
                }
            }
        }
        best.1
    }

    proptest! {
        #[test]
        fn dwf_structure(inc in proptest::collection::vec(0.0f64..10.0, 1..8)) {
            prop_assume!(inc.iter().sum::<f64>() > 1e-6);
            let caps = cumsum(&inc);
            let p = single_user_dwf(&caps).unwrap();
            let p = p.as_slice();
            let used = cumsum(p);
            prop_assert!((used[used.len() - 1] - caps[caps.len() - 1]).abs() < 1e-9);
            for k in 0..p.len() {
                prop_assert!(used[k] <= caps[k] + 1e-9);
                if k + 1 < p.len() {
                    prop_assert!(p[k] <= p[k + 1] + 1e-12);
                    if p[k + 1] > p[k] + 1e-9 {
                        prop_assert!((used[k] - caps[k]).abs() < 1e-9);
                    }
                }
            }
        }

        #[test]
        fn projection_matches_active_set_oracle(
            v in proptest::collection::vec(-5.0f64..10.0, 1..5),
            inc in proptest::collection::vec(0.0f64..6.0, 4),
        ) {
            let caps = cumsum(&inc[..v.len()]);
            let p = project_cumulative(&v, &caps).unwrap();
            let oracle = projection_oracle(&v, &caps);
            prop_assert!(close(p.as_slice(), &oracle, 1e-7), "{:?} vs {:?}", p, oracle);
        }

        #[test]
        fn floors_satisfy_optimality(
            inc in proptest::collection::vec(0.0f64..6.0, 1..6),
            floors in proptest::collection::vec(0.5f64..8.0, 6),
        ) {
            prop_assume!(inc.iter().sum::<f64>() > 1e-3);
            let caps = cumsum(&inc);
            let f = &floors[..caps.len()];
            let p = water_fill_with_floors(&caps, f).unwrap();
            let used = cumsum(&p);
            prop_assert!((used[used.len() - 1] - caps[caps.len() - 1]).abs() < 1e-9);
            let level: Vec<f64> = p.iter().zip(f).map(|(p, f)| p + f).collect();
            for k in 0..p.len() {
                prop_assert!(used[k] <= caps[k] + 1e-9);
                // wet level never falls; a rise happens only at a tight cap
                for j in k + 1..p.len() {
                    if p[k] > 1e-12 && p[j] > 1e-12 && level[j] + 1e-9 < level[k] {
                        prop_assert!(false, "level falls from {} to {}", k, j);
                    }
                }
            }
        }
    }
}
