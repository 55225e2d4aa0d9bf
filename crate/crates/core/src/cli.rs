//! Command-line orchestration: scenario files in; result documents, region
//! CSV and SVG out. The binary only parses arguments and forwards here.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::domain::{ModelKind, PhysicalUnits, Policy, PowerSchedule, Scenario, TransferSchedule, Units};
use crate::mac::{self, Regime};
use crate::oracle;
use crate::relay::{self, LemmaResult, RelayReport};
use crate::solver::{kkt_residuals, KktOptions, KktReport};
use crate::twoway::{self, TransferRatio};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 1;
pub const EXIT_VERIFICATION: u8 = 2;

const KKT_TOL: f64 = 1e-6;
const ORACLE_REL_TOL: f64 = 1e-4;
const FULL_TRANSFER_TOL: f64 = 1e-9;
const SIG_DIGITS: usize = 12;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{origin}:{line}:{column}: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario: {0}")]
    Scenario(#[source] crate::Error),
    #[error("{0}")]
    Usage(String),
    #[error("solver failed: {0}")]
    Solver(#[source] crate::Error),
    #[error("stored result fails its checks: {0}")]
    Check(#[source] crate::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Solver(_) | CliError::Check(_) => EXIT_VERIFICATION,
            _ => EXIT_INPUT,
        }
    }
}

/// What a subcommand produced: the exit code and the text for each stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: u8,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn failed(e: CliError) -> Self {
        Outcome {
            code: e.exit_code(),
            stdout: String::new(),
            stderr: format!("error: {e}\n"),
        }
    }
}

/// Input file schema. Unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub model: ModelKind,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<PhysicalUnits>,
}

impl ScenarioFile {
    /// `origin` names the source in diagnostics.
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Parse {
            origin: origin.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn scenario(&self) -> Result<Scenario, CliError> {
        for (name, len) in [("e1", self.e1.len()), ("e2", self.e2.len())] {
            if len != self.horizon {
                return Err(CliError::Usage(format!("field {name} has {len} entries but T is {}", self.horizon)));
            }
        }
        let s = Scenario::new(self.model, self.e1.clone(), self.e2.clone(), self.alpha).map_err(CliError::Scenario)?;
        match self.units {
            Some(u) => s.with_units(Units::Physical(u)).map_err(CliError::Scenario),
            None => Ok(s),
        }
    }

    fn theta(&self) -> (f64, f64) {
        self.theta.unwrap_or((1.0, 1.0))
    }
}

/// Schedules in physical units. Rates are averages over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalSummary {
    pub p1_mw: Vec<f64>,
    pub p2_mw: Vec<f64>,
    pub delta_mj: Vec<f64>,
    pub rates_bps: (f64, f64),
}

/// Output of `solve`. For the relay, user 1 is the source and user 2 the
/// relay, and `objective` is the end-to-end throughput.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveDocument {
    pub scenario: ScenarioFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<(f64, f64)>,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub delta: Vec<f64>,
    /// Bits per channel use over the horizon, per user.
    pub rates: (f64, f64),
    pub objective: f64,
    pub kkt: KktReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemmas: Option<Vec<LemmaResult>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer_ratio: Option<TransferRatio>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corner_rates: Option<(f64, f64)>,
    pub method: String,
    pub verified: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physical: Option<PhysicalSummary>,
}

/// Solves the scenario and runs the model's checks.
pub fn solve_document(file: &ScenarioFile) -> Result<SolveDocument, CliError> {
    let s = file.scenario()?;
    let mut doc = match s.model {
        ModelKind::Relay => {
            let r = relay::solve_relay(&s).map_err(CliError::Solver)?;
            let verified = r.kkt.satisfied(KKT_TOL) && r.lemma_results.iter().all(|l| l.passed);
            SolveDocument {
                scenario: file.clone(),
                theta: None,
                rates: (r.p_source.throughput(), r.p_relay.throughput()),
                objective: r.throughput,
                p1: r.p_source.into_vec(),
                p2: r.p_relay.into_vec(),
                delta: r.delta.into_vec(),
                kkt: r.kkt,
                lemmas: Some(r.lemma_results),
                transfer_ratio: None,
                regime: None,
                corner_rates: None,
                method: format!("{:?}", r.path),
                verified,
                physical: None,
            }
        }
        ModelKind::TwoWay => {
            let theta = file.theta();
            let r = twoway::solve_twoway_weighted(&s, theta).map_err(CliError::Solver)?;
            let ratio = twoway::verify_transfer_ratio(&r.p1, &r.p2, &r.delta, theta, s.alpha);
            SolveDocument {
                scenario: file.clone(),
                theta: Some(theta),
                rates: r.rates,
                objective: r.objective,
                verified: r.kkt.satisfied(KKT_TOL) && ratio.all_passed(),
                p1: r.p1.into_vec(),
                p2: r.p2.into_vec(),
                delta: r.delta.into_vec(),
                kkt: r.kkt,
                lemmas: None,
                transfer_ratio: Some(ratio),
                regime: None,
                corner_rates: None,
                method: format!("{:?}", r.method),
                physical: None,
            }
        }
        ModelKind::Mac => {
            let theta = file.theta();
            let r = mac::solve_mac_weighted(&s, theta).map_err(CliError::Solver)?;
            let verified = r.kkt.satisfied(KKT_TOL) && regime_sound(&s, r.regime, &r.delta);
            SolveDocument {
                scenario: file.clone(),
                theta: Some(theta),
                rates: r.corner_rates,
                objective: r.objective(),
                p1: r.p1.into_vec(),
                p2: r.p2.into_vec(),
                delta: r.delta.into_vec(),
                kkt: r.kkt,
                lemmas: None,
                transfer_ratio: None,
                regime: Some(r.regime),
                corner_rates: Some(r.corner_rates),
                method: "weighted".into(),
                verified,
                physical: None,
            }
        }
    };
    if let Units::Physical(u) = s.units {
        let horizon = s.horizon() as f64;
        doc.physical = Some(PhysicalSummary {
            p1_mw: doc.p1.iter().map(|&p| u.power_to_milliwatts(p)).collect(),
            p2_mw: doc.p2.iter().map(|&p| u.power_to_milliwatts(p)).collect(),
            delta_mj: doc.delta.iter().map(|&d| u.energy_to_millijoules(d)).collect(),
            rates_bps: (
                u.rate_to_bps(doc.rates.0 / horizon),
                u.rate_to_bps(doc.rates.1 / horizon),
            ),
        });
    }
    Ok(doc)
}

fn regime_sound(s: &Scenario, regime: Regime, delta: &TransferSchedule) -> bool {
    match regime {
        Regime::NoTransfer => delta.total() == 0.0,
        Regime::FullTransfer => (delta.total() - s.normalized().e1.total()).abs() <= FULL_TRANSFER_TOL,
        Regime::General => true,
    }
}

fn round_sig(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if !x.is_finite() {
        return x;
    }
    format!("{:.*e}", SIG_DIGITS - 1, x).parse().unwrap_or(x)
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if let Some(x) = n.as_f64().filter(|_| n.is_f64()) {
                if let Some(r) = serde_json::Number::from_f64(round_sig(x)) {
                    *n = r;
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with reals rounded to 12 significant digits.
pub fn to_rounded_json<T: Serialize>(value: &T) -> String {
    let mut v = serde_json::to_value(value).expect("documents serialize");
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v).expect("values serialize");
    s.push('\n');
    s
}

fn fmt_real(x: f64) -> String {
    format!("{}", round_sig(x))
}

fn emit(text: String, out: Option<&Path>) -> Result<String, CliError> {
    match out {
        Some(path) => {
            fs::write(path, &text).map_err(|source| CliError::Write {
                path: path.to_path_buf(),
                source,
            })?;
            Ok(String::new())
        }
        None => Ok(text),
    }
}

pub fn run_solve(path: &Path, out: Option<&Path>) -> Outcome {
    let result = ScenarioFile::read(path).and_then(|f| solve_and_render(&f, out));
    result.unwrap_or_else(Outcome::failed)
}

fn solve_and_render(file: &ScenarioFile, out: Option<&Path>) -> Result<Outcome, CliError> {
    let doc = solve_document(file)?;
    let stdout = emit(to_rounded_json(&doc), out)?;
    let (code, stderr) = if doc.verified {
        (EXIT_OK, String::new())
    } else {
        (EXIT_VERIFICATION, "verification failed: see kkt, lemmas, transfer_ratio or regime in the result\n".into())
    };
    Ok(Outcome { code, stdout, stderr })
}

/// One row of the region CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionRow {
    pub theta: (f64, f64),
    pub rates: (f64, f64),
    pub regime: String,
}

/// Boundary points of the capacity region, sorted by decreasing R1.
pub fn region_rows(s: &Scenario, n_points: usize) -> Result<Vec<RegionRow>, CliError> {
    match s.model {
        ModelKind::TwoWay => Ok(twoway::trace_twoway_region(s, n_points)
            .map_err(CliError::Solver)?
            .into_iter()
            .map(|p| RegionRow {
                theta: p.theta,
                rates: p.rates,
                regime: if p.delta.total() > 0.0 { "Transfer" } else { "NoTransfer" }.into(),
            })
            .collect()),
        ModelKind::Mac => Ok(mac::trace_mac_region(s, n_points)
            .map_err(CliError::Solver)?
            .into_iter()
            .map(|p| RegionRow {
                theta: p.theta,
                rates: p.rates,
                regime: format!("{:?}", p.regime),
            })
            .collect()),
        ModelKind::Relay => Err(CliError::Usage("capacity regions are defined only for the TwoWay and Mac models".into())),
    }
}

pub fn region_csv(rows: &[RegionRow]) -> String {
    let mut out = String::from("theta1,theta2,R1,R2,regime\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_real(r.theta.0),
            fmt_real(r.theta.1),
            fmt_real(r.rates.0),
            fmt_real(r.rates.1),
            r.regime
        );
    }
    out
}

/// The traced region next to the region without energy transfer.
pub fn region_svg(rows: &[RegionRow], baseline: &[RegionRow]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 480.0;
    const PAD: f64 = 48.0;
    let max_of = |f: fn(&RegionRow) -> f64| rows.iter().chain(baseline).map(f).fold(1e-9, f64::max);
    let (x_max, y_max) = (max_of(|r| r.rates.0) * 1.05, max_of(|r| r.rates.1) * 1.05);
    let sx = |x: f64| PAD + x / x_max * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - y / y_max * (H - 2.0 * PAD);
    // close each boundary to the axes so it reads as a region
    let outline = |pts: &[RegionRow]| -> String {
        let mut v = Vec::with_capacity(pts.len() + 2);
        if let Some(first) = pts.first() {
            v.push(format!("{:.2},{:.2}", sx(first.rates.0), sy(0.0)));
        }
        v.extend(pts.iter().map(|r| format!("{:.2},{:.2}", sx(r.rates.0), sy(r.rates.1))));
        if let Some(last) = pts.last() {
            v.push(format!("{:.2},{:.2}", sx(0.0), sy(last.rates.1)));
        }
        v.join(" ")
    };
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<path d="M{:.2},{:.2} V{:.2} H{:.2}" fill="none" stroke="black"/>"#,
        sx(0.0),
        sy(y_max),
        sy(0.0),
        sx(x_max)
    );
    let _ = writeln!(svg, r##"<polyline points="{}" fill="none" stroke="#888" stroke-dasharray="6 4" stroke-width="2"/>"##, outline(baseline));
    let _ = writeln!(svg, r##"<polyline points="{}" fill="none" stroke="#1f5fbf" stroke-width="2"/>"##, outline(rows));
    for r in rows {
        let _ = writeln!(svg, r##"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="#1f5fbf"/>"##, sx(r.rates.0), sy(r.rates.1));
    }
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="13">R1 (bits/channel use)</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(svg, r#"<text x="14" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 14 {:.2})">R2 (bits/channel use)</text>"#, H / 2.0, H / 2.0);
    let _ = writeln!(svg, r##"<text x="{:.2}" y="24" font-family="sans-serif" font-size="12" fill="#1f5fbf">with transfer</text>"##, W - 170.0);
    let _ = writeln!(svg, r##"<text x="{:.2}" y="40" font-family="sans-serif" font-size="12" fill="#888">without transfer</text>"##, W - 170.0);
    svg.push_str("</svg>\n");
    svg
}

pub fn run_region(path: &Path, svg: Option<&Path>, out: Option<&Path>) -> Outcome {
    let result = ScenarioFile::read(path).and_then(|f| region_and_render(&f, svg, out));
    result.unwrap_or_else(Outcome::failed)
}

fn region_and_render(file: &ScenarioFile, svg: Option<&Path>, out: Option<&Path>) -> Result<Outcome, CliError> {
    let s = file.scenario()?;
    if s.model == ModelKind::Relay {
        return Err(CliError::Usage("capacity regions are defined only for the TwoWay and Mac models".into()));
    }
    let n = file
        .sweep_points
        .ok_or_else(|| CliError::Usage("region needs sweep_points in the scenario file".into()))?;
    if n < 2 {
        return Err(CliError::Usage(format!("sweep_points must be at least 2, got {n}")));
    }
    let rows = region_rows(&s, n)?;
    if let Some(svg_path) = svg {
        let mut without = s.clone();
        without.alpha = 0.0;
        let baseline = region_rows(&without, n)?;
        emit(region_svg(&rows, &baseline), Some(svg_path))?;
    }
    Ok(Outcome {
        code: EXIT_OK,
        stdout: emit(region_csv(&rows), out)?,
        stderr: String::new(),
    })
}

/// Pass counts of one verification suite.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuiteTally {
    pub name: &'static str,
    pub passed: usize,
    pub total: usize,
}

/// Runs every verification suite on `count` random instances per model.
pub fn verify_suites(seed: u64, count: usize) -> Result<Vec<SuiteTally>, CliError> {
    let checks = oracle::run_verification(seed, count, ORACLE_REL_TOL).map_err(CliError::Solver)?;
    let mut oracle_t = SuiteTally { name: "oracle", passed: 0, total: 0 };
    let mut kkt_t = SuiteTally { name: "kkt", passed: 0, total: 0 };
    let mut lemma_t = SuiteTally { name: "relay_lemmas", passed: 0, total: 0 };
    let mut ratio_t = SuiteTally { name: "transfer_ratio", passed: 0, total: 0 };
    let mut regime_t = SuiteTally { name: "mac_regimes", passed: 0, total: 0 };
    let mut convex_t = SuiteTally { name: "convexity", passed: 0, total: 0 };
    let tally = |t: &mut SuiteTally, ok: bool| {
        t.total += 1;
        t.passed += ok as usize;
    };

    for c in &checks {
        tally(&mut oracle_t, c.passed());
        let s = &c.scenario;
        match c.model {
            ModelKind::Relay => match relay::solve_relay(s) {
                Ok(r) => {
                    tally(&mut kkt_t, r.kkt.satisfied(KKT_TOL));
                    tally(&mut lemma_t, r.lemma_results.iter().all(|l| l.passed));
                }
                Err(_) => {
                    tally(&mut kkt_t, false);
                    tally(&mut lemma_t, false);
                }
            },
            ModelKind::TwoWay => {
                match twoway::solve_twoway_weighted(s, c.theta) {
                    Ok(r) => {
                        tally(&mut kkt_t, r.kkt.satisfied(KKT_TOL));
                        let ratio = twoway::verify_transfer_ratio(&r.p1, &r.p2, &r.delta, c.theta, s.alpha);
                        tally(&mut ratio_t, ratio.all_passed());
                    }
                    Err(_) => {
                        tally(&mut kkt_t, false);
                        tally(&mut ratio_t, false);
                    }
                }
                let (a, b) = (oracle::random_policy(s, c.seed), oracle::random_policy(s, !c.seed));
                let lambda = ChaCha8Rng::seed_from_u64(c.seed).gen_range(0.0..=1.0);
                tally(&mut convex_t, twoway::check_convex_combination(s, &a, &b, lambda).unwrap_or(false));
            }
            ModelKind::Mac => {
                match mac::solve_mac_weighted(s, c.theta) {
                    Ok(r) => {
                        tally(&mut kkt_t, r.kkt.satisfied(KKT_TOL));
                        tally(&mut regime_t, regime_sound(s, r.regime, &r.delta));
                    }
                    Err(_) => {
                        tally(&mut kkt_t, false);
                        tally(&mut regime_t, false);
                    }
                }
                let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
                let (a, b) = (oracle::random_policy(s, c.seed), oracle::random_policy(s, !c.seed));
                let ra = random_pentagon_point(&a, &mut rng);
                let rb = random_pentagon_point(&b, &mut rng);
                let lambda = rng.gen_range(0.0..=1.0);
                tally(&mut convex_t, mac::check_pentagon_combination(s, (&a, ra), (&b, rb), lambda).unwrap_or(false));
            }
        }
    }
    Ok(vec![oracle_t, kkt_t, lemma_t, ratio_t, regime_t, convex_t])
}

/// A uniformly drawn rate pair inside the policy's pentagon.
pub fn random_pentagon_point(p: &Policy, rng: &mut impl Rng) -> (f64, f64) {
    let ((r1max, _), (_, r2max)) = mac::pentagon_corners(&p.p1, &p.p2).expect("equal lengths");
    let sum: f64 = p.p1.as_slice().iter().zip(p.p2.as_slice()).map(|(a, b)| crate::domain::rate(a + b)).sum();
    let r1 = rng.gen_range(0.0..=1.0) * r1max;
    let r2 = rng.gen_range(0.0..=1.0) * r2max.min(sum - r1).max(0.0);
    (r1, r2)
}

pub fn run_verify(seed: u64, count: usize) -> Outcome {
    if count == 0 {
        return Outcome::failed(CliError::Usage("count must be at least 1".into()));
    }
    let suites = match verify_suites(seed, count) {
        Ok(s) => s,
        Err(e) => return Outcome::failed(e),
    };
    let mut stdout = format!("seed {seed}, {count} instance(s) per model\n");
    for t in &suites {
        let _ = writeln!(stdout, "{:<15} {}/{} passed", t.name, t.passed, t.total);
    }
    let ok = suites.iter().all(|t| t.passed == t.total);
    stdout.push_str(if ok { "all suites passed\n" } else { "some suites failed\n" });
    Outcome {
        code: if ok { EXIT_OK } else { EXIT_VERIFICATION },
        stdout,
        stderr: String::new(),
    }
}

/// Recomputes the KKT and structural checks of a stored result document
/// and compares their outcomes with the stored ones.
pub fn recheck_document(doc: &SolveDocument) -> Result<(bool, bool), CliError> {
    let s = doc.scenario.scenario()?;
    let sched = |v: &[f64]| PowerSchedule::new(v.to_vec()).map_err(CliError::Scenario);
    let (p1, p2) = (sched(&doc.p1)?, sched(&doc.p2)?);
    let delta = TransferSchedule::new(doc.delta.clone()).map_err(CliError::Scenario)?;
    let theta = doc.theta.unwrap_or((0.0, 1.0));
    let normalized = s.normalized();
    let kkt = kkt_residuals(s.model, theta, &normalized, &p1, &p2, &delta, &KktOptions::default())
        .map_err(CliError::Check)?;
    let verified = match s.model {
        ModelKind::Relay => {
            let report = RelayReport {
                throughput: p2.throughput(),
                p_source: p1,
                p_relay: p2,
                delta,
                kkt: kkt.clone(),
                lemma_results: vec![],
                path: relay::RelayPath::General,
            };
            let lemmas = relay::verify_relay_lemmas(&report, &s).map_err(CliError::Check)?;
            kkt.satisfied(KKT_TOL) && lemmas.iter().all(|l| l.passed)
        }
        ModelKind::TwoWay => {
            kkt.satisfied(KKT_TOL) && twoway::verify_transfer_ratio(&p1, &p2, &delta, theta, s.alpha).all_passed()
        }
        ModelKind::Mac => {
            let regime = doc.regime.unwrap_or(Regime::General);
            kkt.satisfied(KKT_TOL) && regime_sound(&s, regime, &delta)
        }
    };
    Ok((doc.verified, verified))
}

pub fn run_recheck(path: &Path) -> Outcome {
    let result = fs::read_to_string(path)
        .map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })
        .and_then(|text| {
            serde_json::from_str::<SolveDocument>(&text).map_err(|e| CliError::Parse {
                origin: path.display().to_string(),
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })
        })
        .and_then(|doc| recheck_document(&doc));
    match result {
        Ok((stored, now)) => Outcome {
            code: if stored == now { EXIT_OK } else { EXIT_VERIFICATION },
            stdout: format!("stored verified={stored}, recomputed verified={now}\n"),
            stderr: String::new(),
        },
        Err(e) => Outcome::failed(e),
    }
}

/// Embedded scenario fixtures, by demo name.
pub const DEMOS: [(&str, &str); 5] = [
    ("relay-source-initial", include_str!("../fixtures/relay_source_initial.json")),
    ("relay-general", include_str!("../fixtures/relay_general.json")),
    ("two-way-worked", include_str!("../fixtures/two_way_worked.json")),
    ("two-way-region", include_str!("../fixtures/two_way_region.json")),
    ("mac-region", include_str!("../fixtures/mac_region.json")),
];

/// Solves a fixture; fixtures with `sweep_points` print their region CSV.
pub fn run_demo(name: &str) -> Outcome {
    let Some((_, text)) = DEMOS.iter().find(|(n, _)| *n == name) else {
        let names: Vec<&str> = DEMOS.iter().map(|(n, _)| *n).collect();
        return Outcome::failed(CliError::Usage(format!("unknown demo {name:?}; available: {}", names.join(", "))));
    };
    let result = ScenarioFile::parse(text, name).and_then(|f| {
        if f.sweep_points.is_some() {
            region_and_render(&f, None, None)
        } else {
            solve_and_render(&f, None)
        }
    });
    result.unwrap_or_else(Outcome::failed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_keeps_twelve_digits() {
        assert_eq!(round_sig(2.0 / 3.0), 0.666666666667);
        assert_eq!(round_sig(-0.0).to_bits(), 0.0f64.to_bits());
        assert_eq!(round_sig(1234567.891234567), 1234567.89123);
        let mut v = serde_json::json!({"a": [1.0 / 3.0, 2], "b": {"c": 1e-20 / 3.0}});
        round_value(&mut v);
        assert_eq!(v["a"][0], 0.333333333333);
        assert_eq!(v["a"][1], 2);
        assert_eq!(v["b"]["c"], 3.33333333333e-21);
    }

    #[test]
    fn csv_layout() {
        let rows = [RegionRow {
            theta: (0.25, 0.75),
            rates: (1.0 / 3.0, 2.0),
            regime: "Transfer".into(),
        }];
        assert_eq!(region_csv(&rows), "theta1,theta2,R1,R2,regime\n0.25,0.75,0.333333333333,2,Transfer\n");
    }

    #[test]
    fn length_mismatch_is_reported_before_validation() {
        let f = ScenarioFile::parse(r#"{"model":"Relay","T":3,"e1":[1,2],"e2":[1,2,3],"alpha":0.5}"#, "x").unwrap();
        let e = f.scenario().unwrap_err();
        assert_eq!(e.exit_code(), EXIT_INPUT);
        assert!(e.to_string().contains("e1 has 2 entries but T is 3"));
    }

    #[test]
    fn demos_parse() {
        for (name, text) in DEMOS {
            let f = ScenarioFile::parse(text, name).unwrap();
            assert!(f.scenario().is_ok(), "{name}");
            assert!(f.units.is_some(), "{name}");
        }
    }

    #[test]
    fn regimes_are_sound() {
        let s = Scenario::new(ModelKind::Mac, vec![5., 2., 5.], vec![1., 3., 1.], 0.5).unwrap();
        let full = TransferSchedule::new(vec![5., 2., 5.]).unwrap();
        assert!(regime_sound(&s, Regime::FullTransfer, &full));
        assert!(!regime_sound(&s, Regime::NoTransfer, &full));
        assert!(regime_sound(&s, Regime::NoTransfer, &TransferSchedule::zeros(3)));
    }
}
