//! Domain types shared by every solver: energy profiles, scenarios,
//! schedules, rate arithmetic and energy/data causality checks.
//!
//! Slot numbers reported in [`Violation`] are 1-based; everything else is
//! indexed from zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used for every cumulative-sum comparison.
pub const CAUSALITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[serde(alias = "Relay")]
    Relay,
    #[serde(alias = "TwoWay", alias = "twoway")]
    TwoWay,
    #[serde(alias = "Mac")]
    Mac,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(match self {
            ModelKind::Relay => "relay",
            ModelKind::TwoWay => "two_way",
            ModelKind::Mac => "mac",
        })
    }
}

/// Harvested energy per slot for one node.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct EnergyProfile(Vec<f64>);

impl EnergyProfile {
    pub fn new(amounts: Vec<f64>) -> Result<Self> {
        let profile = Self::nonnegative(amounts)?;
        if profile.total() == 0.0 {
            return Err(Error::ZeroProfile);
        }
        Ok(profile)
    }

    /// Like [`EnergyProfile::new`] but accepts a node that harvests nothing.
    pub(crate) fn nonnegative(amounts: Vec<f64>) -> Result<Self> {
        if amounts.is_empty() {
            return Err(Error::EmptyProfile);
        }
        if let Some((index, &value)) = amounts
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::InvalidEnergy { index, value });
        }
        Ok(Self(amounts))
    }

    pub fn amounts(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn cumulative(&self) -> Vec<f64> {
        cumsum(&self.0)
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Physical link parameters. Energy profiles are read in millijoules per slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalUnits {
    pub bandwidth_hz: f64,
    #[serde(alias = "n0_w_per_hz")]
    pub noise_density_w_per_hz: f64,
    pub path_loss_db: f64,
    pub slot_seconds: f64,
}

impl Default for PhysicalUnits {
    fn default() -> Self {
        Self {
            bandwidth_hz: 1e6,
            noise_density_w_per_hz: 1e-19,
            path_loss_db: 100.0,
            slot_seconds: 1.0,
        }
    }
}

impl PhysicalUnits {
    fn validate(&self) -> Result<()> {
        for v in [self.bandwidth_hz, self.noise_density_w_per_hz, self.slot_seconds] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Precondition(format!(
                    "physical unit parameters must be positive, got {v}"
                )));
            }
        }
        if !self.path_loss_db.is_finite() {
            return Err(Error::Precondition("path loss must be finite".into()));
        }
        Ok(())
    }

    /// Received SNR produced by one milliwatt of transmit power.
    pub fn snr_per_milliwatt(&self) -> f64 {
        1e-3 * 10f64.powf(-self.path_loss_db / 10.0)
            / (self.noise_density_w_per_hz * self.bandwidth_hz)
    }

    /// Normalized energy units (SNR x slot) per millijoule harvested in a slot.
    pub fn normalized_per_millijoule(&self) -> f64 {
        self.snr_per_milliwatt() / self.slot_seconds
    }

    pub fn power_to_milliwatts(&self, snr: f64) -> f64 {
        snr / self.snr_per_milliwatt()
    }

    pub fn energy_to_millijoules(&self, normalized: f64) -> f64 {
        normalized / self.normalized_per_millijoule()
    }

    /// Bits per slot (per channel use) to bits per second.
    pub fn rate_to_bps(&self, bits: f64) -> f64 {
        bits * self.bandwidth_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Units {
    #[default]
    Normalized,
    Physical(PhysicalUnits),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub model: ModelKind,
    pub e1: EnergyProfile,
    pub e2: EnergyProfile,
    pub alpha: f64,
    pub units: Units,
}

impl Scenario {
    pub fn new(model: ModelKind, e1: Vec<f64>, e2: Vec<f64>, alpha: f64) -> Result<Self> {
        let e1 = EnergyProfile::nonnegative(e1)?;
        let e2 = EnergyProfile::nonnegative(e2)?;
        if e1.total() + e2.total() == 0.0 {
            return Err(Error::ZeroProfile);
        }
        if e1.len() != e2.len() {
            return Err(Error::LengthMismatch {
                expected: e1.len(),
                got: e2.len(),
            });
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::AlphaOutOfRange(alpha));
        }
        Ok(Self {
            model,
            e1,
            e2,
            alpha,
            units: Units::Normalized,
        })
    }

    pub fn with_units(mut self, units: Units) -> Result<Self> {
        if let Units::Physical(p) = &units {
            p.validate()?;
        }
        self.units = units;
        Ok(self)
    }

    pub fn horizon(&self) -> usize {
        self.e1.len()
    }

    /// Same scenario expressed in normalized units (unit noise, unit slots).
    pub fn normalized(&self) -> Scenario {
        match self.units {
            Units::Normalized => self.clone(),
            Units::Physical(p) => {
                let k = p.normalized_per_millijoule();
                let scale = |e: &EnergyProfile| EnergyProfile(e.0.iter().map(|v| v * k).collect());
                Scenario {
                    model: self.model,
                    e1: scale(&self.e1),
                    e2: scale(&self.e2),
                    alpha: self.alpha,
                    units: Units::Normalized,
                }
            }
        }
    }
}

/// Transmit power per slot (normalized to SNR).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct PowerSchedule(Vec<f64>);

impl PowerSchedule {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        check_nonneg(&p)?;
        Ok(Self(p))
    }

    /// Builds a schedule from solver output, clearing round-off below zero.
    pub(crate) fn from_solver(mut p: Vec<f64>) -> Self {
        for v in &mut p {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Self(p)
    }

    pub fn zeros(horizon: usize) -> Self {
        Self(vec![0.0; horizon])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn rates(&self) -> Vec<f64> {
        self.0.iter().map(|&p| rate(p)).collect()
    }

    /// Total bits delivered over the horizon.
    pub fn throughput(&self) -> f64 {
        self.0.iter().map(|&p| rate(p)).sum()
    }
}

/// Energy sent over the wireless transfer unit per slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct TransferSchedule(Vec<f64>);

impl TransferSchedule {
    pub fn new(delta: Vec<f64>) -> Result<Self> {
        check_nonneg(&delta)?;
        Ok(Self(delta))
    }

    pub(crate) fn from_solver(mut d: Vec<f64>) -> Self {
        for v in &mut d {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Self(d)
    }

    pub fn zeros(horizon: usize) -> Self {
        Self(vec![0.0; horizon])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn any_positive(&self, tol: f64) -> bool {
        self.0.iter().any(|&d| d > tol)
    }
}

fn check_nonneg(v: &[f64]) -> Result<()> {
    match v.iter().find(|x| !x.is_finite() || **x < 0.0) {
        Some(&x) => Err(Error::NegativeOrNonFinite(x)),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    SourceEnergy,
    ReceiverEnergy,
    TransferBudget,
    DataCausality,
    Negativity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// 1-based slot index.
    pub slot: usize,
    /// Constraint left-hand side minus right-hand side; positive when reported.
    pub slack: f64,
}

/// Bits per slot delivered at power `p`: `0.5 * log2(1 + p)`.
pub fn rate_of_power(p: f64) -> Result<f64> {
    if !p.is_finite() || p < 0.0 {
        return Err(Error::NegativeOrNonFinite(p));
    }
    Ok(rate(p))
}

/// Inverse of [`rate_of_power`]: `2^(2r) - 1`.
pub fn power_of_rate(r: f64) -> Result<f64> {
    if !r.is_finite() || r < 0.0 {
        return Err(Error::NegativeOrNonFinite(r));
    }
    Ok(power(r))
}

#[inline]
pub(crate) fn rate(p: f64) -> f64 {
    0.5 * p.ln_1p() / std::f64::consts::LN_2
}

#[inline]
pub(crate) fn power(r: f64) -> f64 {
    (2.0 * r * std::f64::consts::LN_2).exp_m1()
}

pub fn cumsum(v: &[f64]) -> Vec<f64> {
    v.iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// Both nodes' powers and the transfers: one point of the feasible set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub p1: PowerSchedule,
    pub p2: PowerSchedule,
    pub delta: TransferSchedule,
}

impl Policy {
    /// `lambda * self + (1 - lambda) * other`, slot by slot.
    pub fn mix(&self, other: &Policy, lambda: f64) -> Result<Policy> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Precondition(format!("mixing weight must be in [0, 1], got {lambda}")));
        }
        let t = self.p1.len();
        for len in [self.p2.len(), self.delta.len(), other.p1.len(), other.p2.len(), other.delta.len()] {
            check_len(t, len)?;
        }
        let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| (lambda * x + (1.0 - lambda) * y).max(0.0)).collect()
        };
        Ok(Policy {
            p1: PowerSchedule(mix(self.p1.as_slice(), other.p1.as_slice())),
            p2: PowerSchedule(mix(self.p2.as_slice(), other.p2.as_slice())),
            delta: TransferSchedule(mix(self.delta.as_slice(), other.delta.as_slice())),
        })
    }

    pub fn violations(&self, s: &Scenario) -> Result<Vec<Violation>> {
        feasibility_violations(s, &self.p1, &self.p2, &self.delta)
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::LengthMismatch { expected, got });
    }
    Ok(())
}

/// Energy causality violations of a complete policy.
pub fn feasibility_violations(
    s: &Scenario,
    p1: &PowerSchedule,
    p2: &PowerSchedule,
    d: &TransferSchedule,
) -> Result<Vec<Violation>> {
    raw_feasibility_violations(s, p1.as_slice(), p2.as_slice(), d.as_slice())
}

/// Like [`feasibility_violations`] but on plain slices, so negative entries
/// are reported as [`ViolationKind::Negativity`] instead of being rejected.
pub fn raw_feasibility_violations(
    s: &Scenario,
    p1: &[f64],
    p2: &[f64],
    d: &[f64],
) -> Result<Vec<Violation>> {
    let t = s.horizon();
    check_len(t, p1.len())?;
    check_len(t, p2.len())?;
    check_len(t, d.len())?;
    let (e1, e2, alpha) = (s.e1.amounts(), s.e2.amounts(), s.alpha);

    let mut out = Vec::new();
    for (k, x) in p1.iter().chain(p2).chain(d).enumerate() {
        if !x.is_finite() || *x < -CAUSALITY_TOL {
            out.push(Violation {
                kind: ViolationKind::Negativity,
                slot: k % t + 1,
                slack: if x.is_finite() { -x } else { f64::INFINITY },
            });
        }
    }

    let (mut c1, mut c2, mut cd, mut u1, mut u2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for k in 0..t {
        c1 += e1[k];
        c2 += e2[k];
        cd += d[k];
        u1 += p1[k];
        u2 += p2[k];
        let checks = [
            (ViolationKind::SourceEnergy, u1 - (c1 - cd)),
            (ViolationKind::ReceiverEnergy, u2 - (c2 + alpha * cd)),
            (ViolationKind::TransferBudget, cd - c1),
        ];
        for (kind, slack) in checks {
            if slack > CAUSALITY_TOL {
                out.push(Violation {
                    kind,
                    slot: k + 1,
                    slack,
                });
            }
        }
    }
    Ok(out)
}

/// Data causality at the relay: cumulative relay bits never exceed the
/// cumulative bits received from the source.
pub fn data_causality_violations(p1: &PowerSchedule, p2: &PowerSchedule) -> Result<Vec<Violation>> {
    check_len(p1.len(), p2.len())?;
    let mut out = Vec::new();
    let (mut r1, mut r2) = (0.0, 0.0);
    for k in 0..p1.len() {
        r1 += rate(p1.as_slice()[k]);
        r2 += rate(p2.as_slice()[k]);
        if r2 - r1 > CAUSALITY_TOL {
            out.push(Violation {
                kind: ViolationKind::DataCausality,
                slot: k + 1,
                slack: r2 - r1,
            });
        }
    }
    Ok(out)
}

/// True when `a` is majorized by `b`: after sorting both in decreasing
/// order, every partial sum of `b` is at least the matching partial sum of `a`.
pub fn majorizes(a: &[f64], b: &[f64]) -> Result<bool> {
    majorized_within(a, b, CAUSALITY_TOL)
}

pub(crate) fn majorized_within(a: &[f64], b: &[f64], tol: f64) -> Result<bool> {
    check_len(a.len(), b.len())?;
    let (ta, tb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    if (ta - tb).abs() > tol {
        return Err(Error::TotalMismatch(ta, tb));
    }
    let sorted_desc = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(|x, y| y.total_cmp(x));
        v
    };
    let (sa, sb) = (sorted_desc(a), sorted_desc(b));
    let (mut pa, mut pb) = (0.0, 0.0);
    for (x, y) in sa.iter().zip(&sb) {
        pa += x;
        pb += y;
        if pa > pb + tol {
            return Ok(false);
        }
    }
    Ok(true)
}

impl TryFrom<Vec<f64>> for PowerSchedule {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PowerSchedule> for Vec<f64> {
    fn from(s: PowerSchedule) -> Self {
        s.0
    }
}

impl TryFrom<Vec<f64>> for TransferSchedule {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<TransferSchedule> for Vec<f64> {
    fn from(s: TransferSchedule) -> Self {
        s.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sched(v: &[f64]) -> PowerSchedule {
        PowerSchedule::new(v.to_vec()).unwrap()
    }

    #[test]
    fn rate_examples() {
        assert_eq!(rate_of_power(0.0).unwrap(), 0.0);
        assert!((rate_of_power(1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((rate_of_power(3.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(rate_of_power(-1.0).is_err());
        assert!(rate_of_power(f64::NAN).is_err());
    }

    #[test]
    fn power_examples() {
        assert_eq!(power_of_rate(0.0).unwrap(), 0.0);
        assert!((power_of_rate(0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!((power_of_rate(1.0).unwrap() - 3.0).abs() < 1e-14);
        assert!(power_of_rate(-0.1).is_err());
    }

    #[test]
    fn profile_invariants() {
        assert!(matches!(EnergyProfile::new(vec![]), Err(Error::EmptyProfile)));
        assert!(matches!(EnergyProfile::new(vec![0.0, 0.0]), Err(Error::ZeroProfile)));
        assert!(EnergyProfile::new(vec![1.0, -1.0]).is_err());
        assert!(matches!(
            Scenario::new(ModelKind::Relay, vec![1.0], vec![1.0], 1.5),
            Err(Error::AlphaOutOfRange(_))
        ));
        assert!(Scenario::new(ModelKind::Relay, vec![1.0], vec![1.0, 2.0], 0.5).is_err());
    }

    #[test]
    fn source_initial_example_is_feasible() {
        let s = Scenario::new(ModelKind::Relay, vec![12., 0., 0., 0.], vec![5., 1., 0., 2.], 0.5).unwrap();
        let p = sched(&[7.0 / 3.0; 4]);
        let d = TransferSchedule::new(vec![8.0 / 3.0, 0., 0., 0.]).unwrap();
        assert!(feasibility_violations(&s, &p, &p, &d).unwrap().is_empty());
        // the rounded printed values are feasible too
        let p = sched(&[2.33; 4]);
        let d = TransferSchedule::new(vec![2.67, 0., 0., 0.]).unwrap();
        assert!(feasibility_violations(&s, &p, &p, &d).unwrap().is_empty());
    }

    #[test]
    fn transfer_budget_violation() {
        let s = Scenario::new(ModelKind::Relay, vec![3., 1.], vec![1., 1.], 0.5).unwrap();
        let z = PowerSchedule::zeros(2);
        let d = TransferSchedule::new(vec![4.0, 0.0]).unwrap();
        let v = feasibility_violations(&s, &z, &z, &d).unwrap();
        assert!(v
            .iter()
            .any(|v| v.kind == ViolationKind::TransferBudget && v.slot == 1 && (v.slack - 1.0).abs() < 1e-12));
    }

    #[test]
    fn printed_crossing_example_is_infeasible() {
        let s = Scenario::new(ModelKind::Relay, vec![2., 3., 5., 4.], vec![5., 1., 2., 1.], 0.5).unwrap();
        let p = sched(&[2., 3., 4., 6.33]);
        let d = TransferSchedule::new(vec![0., 0., 1.33, 3.33]).unwrap();
        let v = feasibility_violations(&s, &p, &p, &d).unwrap();
        let source: Vec<usize> = v
            .iter()
            .filter(|v| v.kind == ViolationKind::SourceEnergy)
            .map(|v| v.slot)
            .collect();
        // cumulative source use 9 vs 10-1.33, 15.33 vs 14-4.66
        assert_eq!(source, vec![3, 4]);
        assert!(v.iter().all(|v| v.slack > 0.0));
    }

    #[test]
    fn negativity_reported_on_raw_slices() {
        let s = Scenario::new(ModelKind::TwoWay, vec![1.0], vec![1.0], 1.0).unwrap();
        let v = raw_feasibility_violations(&s, &[-0.5], &[0.0], &[0.0]).unwrap();
        assert_eq!(v[0].kind, ViolationKind::Negativity);
        assert!(raw_feasibility_violations(&s, &[0.0, 0.0], &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn data_causality_examples() {
        let p = sched(&[1.0, 2.0, 3.0]);
        assert!(data_causality_violations(&p, &p).unwrap().is_empty());
        assert!(data_causality_violations(&sched(&[3., 0.]), &sched(&[0., 3.])).unwrap().is_empty());
        let v = data_causality_violations(&sched(&[0., 3.]), &sched(&[3., 0.])).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].slot, 1);
        assert!(data_causality_violations(&sched(&[0.]), &sched(&[0., 1.])).is_err());
    }

    #[test]
    fn majorization_examples() {
        assert!(majorizes(&[1., 1.], &[0., 2.]).unwrap());
        assert!(!majorizes(&[0., 2.], &[1., 1.]).unwrap());
        assert!(majorizes(&[0.3, 1.2, 0.5], &[0.3, 1.2, 0.5]).unwrap());
        assert!(matches!(majorizes(&[1.], &[2.]), Err(Error::TotalMismatch(..))));
    }

    #[test]
    fn default_units_map_millijoules_to_snr() {
        let units = PhysicalUnits::default();
        assert!((units.normalized_per_millijoule() - 1.0).abs() < 1e-12);
        let s = Scenario::new(ModelKind::Relay, vec![12., 0., 0., 0.], vec![5., 1., 0., 2.], 0.5)
            .unwrap()
            .with_units(Units::Physical(units))
            .unwrap();
        let n = s.normalized();
        for (a, b) in n.e1.amounts().iter().zip(s.e1.amounts()) {
            assert!((a - b).abs() < 1e-12 * b.max(1.0));
        }
        assert_eq!(units.rate_to_bps(0.5), 5e5);
    }

    proptest! {
        #[test]
        fn rate_round_trip(p in 0.0f64..1e6) {
            let back = power_of_rate(rate_of_power(p).unwrap()).unwrap();
            prop_assert!((back - p).abs() <= 1e-12 * p.max(1.0));
        }

        #[test]
        fn rate_strictly_concave(p in 0.0f64..100.0, q in 0.0f64..100.0, lam in 0.01f64..0.99) {
            let mid = rate(lam * p + (1.0 - lam) * q);
            let chord = lam * rate(p) + (1.0 - lam) * rate(q);
            prop_assert!(mid >= chord - 1e-12);
            if (p - q).abs() > 1e-3 {
                prop_assert!(mid > chord);
            }
        }
    }
}
