//! Batch experiment runner behind the `colombeau` binary.
//!
//! Every subcommand writes its reports into the output directory and prints a
//! `PASS`/`FAIL` line per asserted check. Exit codes: 0 when every check
//! passes, 1 when one fails, 2 for configuration errors, 3 when a quadrature
//! does not converge.
//!
//! Configuration is a flat `key = value` file (`#` starts a comment). Keys:
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `kernels` | `bump,gaussian` | mollifiers: `bump`, `gaussian`, `poly` (uses `q`) or `polyN` |
//! | `q` | `2` | moment order for the bare `poly` kernel |
//! | `eps0`, `ratio`, `count` | `0.25`, `0.5`, `12` | ε-ladder `eps0 * ratio^j`, `j < count` |
//! | `a0`, `levels`, `truncation` | `1`, `4`, `256` | Hilbert scale weights `a0 2^-n`, level count, largest mode |
//! | `tests` | `default` | test-function set: `default` (plateaus) or `bumps` |
//! | `format` | `csv` | report format: `csv` or `json` |
//! | `seed` | `20240601` | seed for the randomized suites |
//! | `samples` | `1000` | random elements or pairs per level |
//! | `modes` | `0,1,2,4,8,16,32,64` | frequencies for the weak-product table |
//! | `m_max` | `12` | largest frequency for the weak-strong table |
//! | `delta` | `1e-8` | operator-norm tolerance for `compact-rank` |
//! | `schema` | `1` | config schema version; must be `1` |

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::asymptotics::{self, Classification, EpsLadder, GenNumberNet};
use crate::epsnet::{EpsNet, Interval};
use crate::error::Error;
use crate::expr::SmoothExpr;
use crate::hilbert_scale::{self as hs, ScaleParams, SpectralElement, TorusTest};
use crate::mollify::{
    delta_net, embed, make_mollifier, DistributionModel, Mollifier, MollifierKind,
};
use crate::pairing::{self, TestFunction};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_QUADRATURE: i32 = 3;

/// Nets accepted by `classify` and run by `suite`.
pub const SPACE_NETS: [&str; 7] = [
    "dirac",
    "dirac-prime",
    "heaviside",
    "sign",
    "abs",
    "h2-minus-h",
    "neg-exp",
];
/// Generalized numbers accepted by `valuation` and run by `suite`.
pub const NUMBER_NETS: [&str; 12] = [
    "eps-power:-3",
    "eps-power:-2",
    "eps-power:-1",
    "eps-power:0",
    "eps-power:1",
    "eps-power:2",
    "eps-power:3",
    "eps-power:4",
    "eps-power:5",
    "eps-power:6",
    "neg-exp",
    "const:2",
];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Numeric(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numeric(Error::Quadrature { .. }) => EXIT_QUADRATURE,
            CliError::Numeric(
                Error::Invalid(_) | Error::LevelOutOfRange { .. } | Error::Domain(_),
            ) => EXIT_CONFIG,
            _ => EXIT_CHECK_FAILED,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestSet {
    Default,
    Bumps,
}

impl TestSet {
    pub fn functions(self) -> Vec<TestFunction> {
        match self {
            TestSet::Default => pairing::default_test_set(),
            TestSet::Bumps => [(0.0, 1.0), (0.5, 0.75), (-1.0, 1.5)]
                .iter()
                .map(|&(c, r)| TestFunction::bump(c, r).expect("valid bump"))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kernels: Vec<MollifierKind>,
    pub ladder: EpsLadder,
    pub scale: ScaleParams,
    pub tests: TestSet,
    pub format: Format,
    pub seed: u64,
    pub samples: usize,
    pub modes: Vec<usize>,
    pub m_max: usize,
    pub delta: f64,
}

const DEFAULTS: [(&str, &str); 16] = [
    ("kernels", "bump,gaussian"),
    ("q", "2"),
    ("eps0", "0.25"),
    ("ratio", "0.5"),
    ("count", "12"),
    ("a0", "1"),
    ("levels", "4"),
    ("truncation", "256"),
    ("tests", "default"),
    ("format", "csv"),
    ("seed", "20240601"),
    ("samples", "1000"),
    ("modes", "0,1,2,4,8,16,32,64"),
    ("m_max", "12"),
    ("delta", "1e-8"),
    ("schema", "1"),
];

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("bad value for `{key}`: `{value}`")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::from_pairs(std::iter::empty()).expect("defaults are valid")
    }
}

impl ExperimentConfig {
    /// Build from `key = value` overrides applied on top of the defaults.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> CliResult<Self> {
        let mut raw: BTreeMap<&str, String> =
            DEFAULTS.iter().map(|(k, v)| (*k, v.to_string())).collect();
        for (k, v) in pairs {
            match raw.get_mut(k) {
                Some(slot) => *slot = v.trim().to_string(),
                None => return Err(CliError::Config(format!("unknown key `{k}`"))),
            }
        }
        let get = |k: &str| raw[k].as_str();
        if get("schema") != SCHEMA_VERSION.to_string() {
            return Err(CliError::Config(format!(
                "unsupported schema `{}`",
                get("schema")
            )));
        }
        let q: usize = parse_value("q", get("q"))?;
        let kernels = get("kernels")
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                if s == "poly" {
                    Ok(MollifierKind::PolyMoment(q))
                } else {
                    s.parse::<MollifierKind>()
                        .map_err(|_| CliError::Config(format!("unknown kernel `{s}`")))
                }
            })
            .collect::<CliResult<Vec<_>>>()?;
        if kernels.is_empty() {
            return Err(CliError::Config("`kernels` is empty".into()));
        }
        let ladder = EpsLadder::new(
            parse_value("eps0", get("eps0"))?,
            parse_value("ratio", get("ratio"))?,
            parse_value("count", get("count"))?,
        )
        .map_err(|e| CliError::Config(e.to_string()))?;
        let scale = ScaleParams::new(
            parse_value("a0", get("a0"))?,
            parse_value("levels", get("levels"))?,
            parse_value("truncation", get("truncation"))?,
        )
        .map_err(|e| CliError::Config(e.to_string()))?;
        let tests = match get("tests") {
            "default" => TestSet::Default,
            "bumps" => TestSet::Bumps,
            other => return Err(CliError::Config(format!("unknown test set `{other}`"))),
        };
        let format = match get("format") {
            "csv" => Format::Csv,
            "json" => Format::Json,
            other => return Err(CliError::Config(format!("unknown format `{other}`"))),
        };
        let m_max: usize = parse_value("m_max", get("m_max"))?;
        if m_max == 0 || m_max > scale.truncation {
            return Err(CliError::Config(format!(
                "m_max must be in 1..={}",
                scale.truncation
            )));
        }
        let delta: f64 = parse_value("delta", get("delta"))?;
        if !(delta > 0.0) {
            return Err(CliError::Config("delta must be positive".into()));
        }
        let samples: usize = parse_value("samples", get("samples"))?;
        if samples == 0 {
            return Err(CliError::Config("samples must be positive".into()));
        }
        Ok(Self {
            kernels,
            ladder,
            scale,
            tests,
            format,
            seed: parse_value("seed", get("seed"))?,
            samples,
            modes: parse_list("modes", get("modes"))?,
            m_max,
            delta,
        })
    }

    /// Parse a config file body, then apply `overrides`.
    pub fn parse(text: &str, overrides: &[(String, String)]) -> CliResult<Self> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected `key = value`", i + 1))
            })?;
            pairs.push((k.trim(), v.trim()));
        }
        pairs.extend(overrides.iter().map(|(k, v)| (k.as_str(), v.as_str())));
        Self::from_pairs(pairs)
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    fn step_levels(&self, level: Option<usize>) -> CliResult<Vec<usize>> {
        match level {
            Some(n) if n + 1 < self.scale.levels => Ok(vec![n]),
            Some(n) => Err(CliError::Config(format!(
                "level {n} needs level {} but only {} levels exist",
                n + 1,
                self.scale.levels
            ))),
            None => Ok((0..self.scale.levels - 1).collect()),
        }
    }
}

/// A report cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Real(f64),
    Int(i64),
    Flag(bool),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Text(s) => f.write_str(s),
            Cell::Real(x) if x.is_nan() => f.write_str("nan"),
            Cell::Real(x) if x.is_infinite() => f.write_str(if *x > 0.0 { "inf" } else { "-inf" }),
            Cell::Real(x) => write!(f, "{x:e}"),
            Cell::Int(i) => write!(f, "{i}"),
            Cell::Flag(b) => write!(f, "{b}"),
        }
    }
}

impl Serialize for Cell {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Cell::Real(x) if x.is_finite() => s.serialize_f64(*x),
            Cell::Int(i) => s.serialize_i64(*i),
            Cell::Flag(b) => s.serialize_bool(*b),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Real(x)
    }
}
impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}
impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x)
    }
}
impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Flag(x)
    }
}
impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}
impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}
impl From<Classification> for Cell {
    fn from(x: Classification) -> Self {
        Cell::Text(x.to_string())
    }
}

macro_rules! row {
    ($($x:expr),* $(,)?) => { vec![$(Cell::from($x)),*] };
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new(name: impl Into<String>, columns: &[&'static str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.to_vec(),
            rows: Vec::new(),
            checks: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Serialize)]
struct JsonReport<'a> {
    schema_version: u32,
    report: &'a str,
    columns: &'a [&'static str],
    rows: &'a [Vec<Cell>],
    checks: &'a [Check],
}

/// Write `report` into `dir`; CSV also gets a `<name>.checks.csv` companion.
pub fn write_report(report: &Report, dir: &Path, format: Format) -> CliResult<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    match format {
        Format::Json => {
            let path = dir.join(format!("{}.json", report.name));
            let body = serde_json::to_string_pretty(&JsonReport {
                schema_version: SCHEMA_VERSION,
                report: &report.name,
                columns: &report.columns,
                rows: &report.rows,
                checks: &report.checks,
            })?;
            fs::write(&path, body + "\n")?;
            Ok(vec![path])
        }
        Format::Csv => {
            let path = dir.join(format!("{}.csv", report.name));
            let mut w = csv::Writer::from_path(&path)?;
            let mut header = vec!["schema_version"];
            header.extend(report.columns.iter().copied());
            w.write_record(&header)?;
            for r in &report.rows {
                let mut rec = vec![SCHEMA_VERSION.to_string()];
                rec.extend(r.iter().map(Cell::to_string));
                w.write_record(&rec)?;
            }
            w.flush()?;

            let checks = dir.join(format!("{}.checks.csv", report.name));
            let mut w = csv::Writer::from_path(&checks)?;
            w.write_record(["schema_version", "check", "passed", "detail"])?;
            for c in &report.checks {
                w.write_record([
                    SCHEMA_VERSION.to_string(),
                    c.name.clone(),
                    c.passed.to_string(),
                    c.detail.clone(),
                ])?;
            }
            w.flush()?;
            Ok(vec![path, checks])
        }
    }
}

fn mollifiers(cfg: &ExperimentConfig) -> CliResult<Vec<Mollifier>> {
    cfg.kernels
        .iter()
        .map(|k| make_mollifier(*k).map_err(CliError::from))
        .collect()
}

pub fn demo_schwartz(cfg: &ExperimentConfig) -> CliResult<Vec<Report>> {
    let mut r = Report::new("demo_schwartz", &["kernel", "eps", "value", "abs_error"]);
    for rho in mollifiers(cfg)? {
        let values = asymptotics::sample_ladder(&cfg.ladder, |e| pairing::schwartz_core(&rho, e))?;
        let mut worst: f64 = 0.0;
        for (e, v) in values {
            let err = (v + 1.0 / 6.0).abs();
            worst = worst.max(err);
            r.push(row![rho.kind.to_string(), e, v, err]);
        }
        r.check(
            format!("schwartz[{}]", rho.kind),
            worst <= 1e-8,
            format!("max |value + 1/6| = {worst:e} (tol 1e-8)"),
        );
    }
    Ok(vec![r])
}

pub fn demo_association(cfg: &ExperimentConfig) -> CliResult<Vec<Report>> {
    let tests = cfg.tests.functions();
    let mut assoc = Report::new(
        "demo_association",
        &["kernel", "test", "limit", "slope", "classification"],
    );
    let mut gap = Report::new(
        "demo_association_pointwise",
        &[
            "kernel",
            "x",
            "slope",
            "gap_at_smallest_eps",
            "classification",
            "equivalent",
        ],
    );
    for rho in mollifiers(cfg)? {
        let h = embed(&DistributionModel::heaviside(), &rho);
        let h2 = h.mul(&h);
        let rep = pairing::associated(&h2, &h, &tests, &cfg.ladder)?;
        for o in &rep.outcomes {
            assoc.push(row![
                rho.kind.to_string(),
                o.test.clone(),
                o.limit,
                o.slope,
                o.classification
            ]);
            assoc.check(
                format!("associated[{}, {}]", rho.kind, o.test),
                o.limit.abs() <= pairing::ASSOCIATION_TOL && (0.9..=1.1).contains(&o.slope),
                format!(
                    "limit {:e} (tol 1e-6), slope {} (want [0.9, 1.1])",
                    o.limit, o.slope
                ),
            );
        }
        // ψ(0) = 0 kills the first-order term; only the limit is asserted.
        let probe = pairing::rate_probe();
        let p = pairing::pair_limit(&h2.sub(&h), &probe, &cfg.ladder)?;
        assoc.push(row![
            rho.kind.to_string(),
            probe.label.clone(),
            p.limit,
            p.rate.slope,
            p.rate.classification
        ]);
        assoc.check(
            format!("associated[{}, {}]", rho.kind, probe.label),
            p.limit.abs() <= pairing::ASSOCIATION_TOL,
            format!("limit {:e} (tol 1e-6), slope {}", p.limit, p.rate.slope),
        );

        let eq = asymptotics::r_equivalent(&h2, &h, &[0.0], &cfg.ladder)?;
        for p in &eq.points {
            let last = p.report.samples.last().map_or(f64::NAN, |s| s.1);
            gap.push(row![
                rho.kind.to_string(),
                p.x,
                p.report.slope,
                last,
                p.report.classification,
                eq.equivalent
            ]);
            gap.check(
                format!("not_equal[{}, x={}]", rho.kind, p.x),
                p.report.slope <= 0.1 && !eq.equivalent,
                format!("slope {} (want <= 0.1), gap {last}", p.report.slope),
            );
        }
    }
    Ok(vec![assoc, gap])
}

pub fn demo_weak_product(cfg: &ExperimentConfig) -> CliResult<Vec<Report>> {
    let mut r = Report::new(
        "demo_weak_product",
        &["test", "m", "linear", "quadratic", "half_mass"],
    );
    let tests = [
        TorusTest::Constant(1.0 / TAU),
        TorusTest::compact(TestFunction::bump(2.5, 1.5)?)?,
    ];
    for psi in &tests {
        let rows = hs::weak_product_counterexample(&cfg.modes, psi)?;
        for w in &rows {
            r.push(row![psi.label(), w.m, w.linear, w.quadratic, w.half_mass]);
        }
        if let TorusTest::Constant(_) = psi {
            let ok = rows.iter().all(|w| {
                if w.m == 0 {
                    w.linear == 0.0 && w.quadratic == 0.0
                } else {
                    w.linear.abs() <= 1e-12 && (w.quadratic - 0.5).abs() <= 1e-12
                }
            });
            r.check(
                format!("orthogonality[{}]", psi.label()),
                ok,
                "linear = 0, quadratic = 1/2 for m >= 1 (tol 1e-12)",
            );
        }
        if let Some(w) = rows.iter().filter(|w| w.m > 0).max_by_key(|w| w.m) {
            let ok = w.linear.abs() < 0.01 && (w.quadratic - w.half_mass).abs() < 0.01;
            r.check(
                format!("weak_limits[{}, m={}]", psi.label(), w.m),
                ok,
                format!(
                    "|linear| = {:e}, |quadratic - half_mass| = {:e} (tol 0.01)",
                    w.linear.abs(),
                    (w.quadratic - w.half_mass).abs()
                ),
            );
        }
    }
    Ok(vec![r])
}

pub fn demo_hh_prime(cfg: &ExperimentConfig) -> CliResult<Vec<Report>> {
    let mut r = Report::new(
        "demo_hh_prime",
        &[
            "kernel",
            "test",
            "product",
            "limit",
            "expected",
            "abs_error",
        ],
    );
    let centered = TestFunction::bump(0.0, 1.0)?;
    let off = TestFunction::bump(0.3, 1.0)?;
    let off = off.times(
        &SmoothExpr::constant(1.0 / off.value(0.0)),
        "bump[0.3,1]/psi(0)",
    )?;
    for rho in mollifiers(cfg)? {
        let h = embed(&DistributionModel::heaviside(), &rho);
        let hp = h.derive();
        for psi in [&centered, &off] {
            for (name, u, k) in [
                ("H*H'", h.mul(&hp), 2.0),
                ("H^2*H'", h.mul(&h).mul(&hp), 3.0),
            ] {
                let rep = pairing::pair_limit(&u, psi, &cfg.ladder)?;
                let expected = psi.value(0.0) / k;
                let err = (rep.limit - expected).abs();
                r.push(row![
                    rho.kind.to_string(),
                    psi.label.clone(),
                    name,
                    rep.limit,
                    expected,
                    err
                ]);
                r.check(
                    format!("limit[{}, {}, {name}]", rho.kind, psi.label),
                    err <= 1e-6,
                    format!("{} vs psi(0)/{k} = {expected} (tol 1e-6)", rep.limit),
                );
            }
        }
    }
    Ok(vec![r])
}

fn space_net(name: &str, rho: &Mollifier) -> CliResult<(EpsNet, Option<Classification>)> {
    let dist = |d: DistributionModel| embed(&d, rho);
    Ok(match name {
        "dirac" => (delta_net(rho, 0.0), Some(Classification::Moderate(1))),
        "dirac-prime" => (
            dist(DistributionModel::Dirac {
                order: 1,
                center: 0.0,
            }),
            Some(Classification::Moderate(2)),
        ),
        "heaviside" => (
            dist(DistributionModel::heaviside()),
            Some(Classification::Moderate(0)),
        ),
        "sign" => (
            dist(DistributionModel::Sign),
            Some(Classification::Moderate(0)),
        ),
        "abs" => (
            dist(DistributionModel::AbsX),
            Some(Classification::Moderate(0)),
        ),
        "h2-minus-h" => {
            let h = dist(DistributionModel::heaviside());
            (h.mul(&h).sub(&h), Some(Classification::Moderate(0)))
        }
        "neg-exp" => (
            EpsNet::new(
                (SmoothExpr::constant(-1.0).div(&SmoothExpr::eps())).exp(),
                "exp(-1/ε)",
            )?,
            Some(Classification::NegligibleCandidate),
        ),
        other => match other.strip_prefix("eps-power:") {
            Some(b) => {
                let b: i32 = parse_value("net", b)?;
                let expect = if b > asymptotics::N_MAX {
                    Classification::NegligibleCandidate
                } else {
                    Classification::Moderate((-b).max(0))
                };
                (
                    EpsNet::new(SmoothExpr::eps().powi(b), format!("ε^{b}"))?,
                    Some(expect),
                )
            }
            None => return Err(CliError::Config(format!("unknown net `{other}`"))),
        },
    })
}

pub fn classify(cfg: &ExperimentConfig, nets: &[String], k: Interval) -> CliResult<Vec<Report>> {
    let mut r = Report::new(
        "classify",
        &[
            "kernel",
            "net",
            "lo",
            "hi",
            "slope",
            "fit_r2",
            "classification",
            "expected",
        ],
    );
    for rho in mollifiers(cfg)? {
        for name in nets {
            let (net, expected) = space_net(name, &rho)?;
            let rep = asymptotics::classify(&net, k, &cfg.ladder)?;
            let exp_text = expected.map_or("-".to_string(), |c| c.to_string());
            r.push(row![
                rho.kind.to_string(),
                name.as_str(),
                k.lo,
                k.hi,
                rep.slope,
                rep.fit_r2,
                rep.classification,
                exp_text.clone()
            ]);
            if let Some(want) = expected {
                r.check(
                    format!("classify[{}, {name}]", rho.kind),
                    rep.classification == want,
                    format!(
                        "{} (want {exp_text}), slope {}",
                        rep.classification, rep.slope
                    ),
                );
            }
        }
    }
    Ok(vec![r])
}

fn number_net(name: &str) -> CliResult<(GenNumberNet, Option<f64>)> {
    if name == "neg-exp" {
        let expr = (SmoothExpr::constant(-1.0).div(&SmoothExpr::eps())).exp();
        return Ok((GenNumberNet::new(expr)?, Some(f64::INFINITY)));
    }
    if let Some(b) = name.strip_prefix("eps-power:") {
        let b: i32 = parse_value("net", b)?;
        return Ok((GenNumberNet::power(b), Some(b as f64)));
    }
    if let Some(c) = name.strip_prefix("const:") {
        let c: f64 = parse_value("net", c)?;
        return Ok((
            GenNumberNet::constant(c),
            Some(if c == 0.0 { f64::INFINITY } else { 0.0 }),
        ));
    }
    Err(CliError::Config(format!(
        "unknown generalized number `{name}`"
    )))
}

pub fn valuation(cfg: &ExperimentConfig, nets: &[String]) -> CliResult<Vec<Report>> {
    let mut r = Report::new(
        "valuation",
        &[
            "net",
            "valuation",
            "sharp_norm",
            "fit_r2",
            "classification",
            "expected",
        ],
    );
    for name in nets {
        let (x, expected) = number_net(name)?;
        let rep = asymptotics::valuation_report(&x, &cfg.ladder);
        let v = rep.slope;
        r.push(row![
            name.as_str(),
            v,
            (-v).exp(),
            rep.fit_r2,
            rep.classification,
            expected.unwrap_or(f64::NAN)
        ]);
        if let Some(want) = expected {
            let ok = if want.is_infinite() {
                rep.classification == Classification::NegligibleCandidate
            } else {
                (v - want).abs() <= 0.02
            };
            r.check(
                format!("valuation[{name}]"),
                ok,
                format!("{v} (want {want}, tol 0.02)"),
            );
        }
    }
    Ok(vec![r])
}

pub fn check_nuclear(cfg: &ExperimentConfig, level: Option<usize>) -> CliResult<Vec<Report>> {
    let mut r = Report::new(
        "scale_nuclear",
        &[
            "level",
            "gap",
            "truncated",
            "closed_form",
            "abs_diff",
            "tail_bound",
            "terms",
        ],
    );
    for n in cfg.step_levels(level)? {
        let s = hs::nuclear_norm_inclusion(&cfg.scale, n)?;
        let diff = (s.truncated - s.closed_form).abs();
        r.push(row![
            n,
            s.gap,
            s.truncated,
            s.closed_form,
            diff,
            s.tail_bound,
            s.terms
        ]);
        r.check(
            format!("nuclear[level={n}]"),
            diff <= 1e-9 && s.tail_bound < hs::NUCLEAR_TAIL_TOL,
            format!(
                "{} vs coth(d/2) = {}, diff {diff:e} (tol 1e-9)",
                s.truncated, s.closed_form
            ),
        );
    }
    Ok(vec![r])
}

fn random_elements(
    cfg: &ExperimentConfig,
    n: usize,
    count: usize,
    stream: u64,
) -> CliResult<Vec<SpectralElement>> {
    let mut rng = cfg.rng(stream);
    (0..count)
        .map(|i| hs::random_element(&cfg.scale, n, i % 2 == 0, &mut rng).map_err(CliError::from))
        .collect()
}

pub fn check_product(cfg: &ExperimentConfig, level: Option<usize>) -> CliResult<Vec<Report>> {
    let mut r = Report::new(
        "scale_product",
        &[
            "level",
            "samples",
            "constant",
            "min_margin",
            "max_ratio",
            "max_tail_l2",
        ],
    );
    let mut cont = Report::new(
        "scale_product_continuity",
        &["level", "j", "distance", "bound"],
    );
    for n in cfg.step_levels(level)? {
        let elems = random_elements(cfg, n, 2 * cfg.samples, 100 + n as u64)?;
        let results: Vec<(hs::ScaleNormReport, f64)> = elems
            .par_chunks(2)
            .map(|p| {
                let rep = hs::check_product(&cfg.scale, &p[0], &p[1], n)?;
                let tail = hs::product(&p[0], &p[1])?.tail_l2;
                Ok((rep, tail))
            })
            .collect::<crate::Result<_>>()?;
        let min_margin = results
            .iter()
            .map(|x| x.0.margin)
            .fold(f64::INFINITY, f64::min);
        let max_ratio = results
            .iter()
            .map(|x| x.0.value / x.0.bound)
            .fold(0.0, f64::max);
        let max_tail = results.iter().map(|x| x.1).fold(0.0, f64::max);
        let c = hs::product_bound_constant(&cfg.scale, n)?;
        r.push(row![n, results.len(), c, min_margin, max_ratio, max_tail]);
        r.check(
            format!("product_bound[level={n}]"),
            min_margin >= -1e-12,
            format!(
                "min margin {min_margin:e} over {} pairs (tol -1e-12)",
                results.len()
            ),
        );

        // uⱼ = u + 2^{-j} w₁ → u and vⱼ = v + 2^{-j} w₂ → v must give uⱼvⱼ → uv.
        let base = random_elements(cfg, n, 4, 200 + n as u64)?;
        let (u, v) = (&base[0], &base[1]);
        let uv = hs::product(u, v)?.element;
        let nu = hs::norm(&cfg.scale, u, n)?;
        let mut ok = true;
        let mut dists = Vec::new();
        for j in 1..=12 {
            let s = 0.5f64.powi(j);
            let uj = u.add(&base[2].scale(s))?;
            let vj = v.add(&base[3].scale(s))?;
            let dist = hs::norm(&cfg.scale, &hs::product(&uj, &vj)?.element.sub(&uv)?, n + 1)?;
            let bound = c
                * (hs::norm(&cfg.scale, &uj.sub(u)?, n)? * hs::norm(&cfg.scale, &vj, n)?
                    + nu * hs::norm(&cfg.scale, &vj.sub(v)?, n)?);
            ok &= dist <= bound + 1e-12;
            dists.push(dist);
            cont.push(row![n, j as usize, dist, bound]);
        }
        let converging = dists.last().copied().unwrap_or(0.0) <= 1e-3 * dists[0];
        cont.check(
            format!("product_continuity[level={n}]"),
            ok && converging,
            format!(
                "bound holds: {ok}; distance {:e} -> {:e}",
                dists[0],
                dists[dists.len() - 1]
            ),
        );
    }
    Ok(vec![r, cont])
}

pub fn check_derivative(cfg: &ExperimentConfig, level: Option<usize>) -> CliResult<Vec<Report>> {
    let mut r = Report::new(
        "scale_derivative",
        &[
            "level",
            "constant",
            "argmax_k",
            "ratio_at_argmax",
            "max_basis_ratio",
            "samples",
            "min_margin",
        ],
    );
    let kk = cfg.scale.truncation as i64;
    for n in cfg.step_levels(level)? {
        let (c, kmax) = hs::derivative_bound(&cfg.scale, n)?;
        let ratio = |k: i64| -> crate::Result<f64> {
            let e = SpectralElement::basis(k, cfg.scale.truncation)?;
            Ok(hs::norm(&cfg.scale, &hs::derivative(&e), n + 1)? / hs::norm(&cfg.scale, &e, n)?)
        };
        let at_max = ratio(kmax as i64)?;
        let mut max_basis: f64 = 0.0;
        for k in -kk..=kk {
            max_basis = max_basis.max(ratio(k)?);
        }
        let elems = random_elements(cfg, n, cfg.samples, 300 + n as u64)?;
        let margins: Vec<f64> = elems
            .par_iter()
            .map(|u| hs::check_derivative(&cfg.scale, u, n).map(|x| x.margin))
            .collect::<crate::Result<_>>()?;
        let min_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
        r.push(row![
            n,
            c,
            kmax,
            at_max,
            max_basis,
            margins.len(),
            min_margin
        ]);
        r.check(
            format!("derivative_equality[level={n}]"),
            (at_max - c).abs() <= 1e-12 * c,
            format!("ratio at k={kmax} is {at_max} vs constant {c}"),
        );
        r.check(
            format!("derivative_bound[level={n}]"),
            max_basis <= c * (1.0 + 1e-12) && min_margin >= -1e-12,
            format!("max basis ratio {max_basis}, min random margin {min_margin:e}"),
        );
    }
    Ok(vec![r])
}

pub fn weak_strong(cfg: &ExperimentConfig, level: usize, eps: f64) -> CliResult<Vec<Report>> {
    let mut r = Report::new("scale_weak_strong", &["m", "norm", "closed_form"]);
    let rows = hs::weak_strong_demo(&cfg.scale, cfg.m_max, level, eps)?;
    let a = cfg.scale.weight(level);
    let mut closed_ok = true;
    for &(m, v) in &rows {
        let mf = m as f64;
        let closed = std::f64::consts::FRAC_1_SQRT_2 * (a * mf - 0.5 * (eps * mf).powi(2)).exp();
        closed_ok &= (v - closed).abs() <= 1e-12 * closed.max(f64::MIN_POSITIVE);
        r.push(row![m, v, closed]);
    }
    let decreasing = rows.windows(2).all(|w| w[1].1 < w[0].1);
    let small = rows.iter().filter(|x| x.0 >= 8).all(|x| x.1 < 1e-6);
    let sup = rows.iter().map(|x| x.1).fold(0.0, f64::max);
    r.check(
        "weak_strong_closed_form",
        closed_ok,
        "matches (1/√2) e^{a m - (ε m)²/2} (rel tol 1e-12)",
    );
    r.check(
        "weak_strong_decreasing",
        decreasing,
        "strictly decreasing in m",
    );
    r.check("weak_strong_small", small, "norm < 1e-6 for m >= 8");
    r.check(
        "weak_strong_bounded",
        sup <= 0.7072,
        format!("sup {sup} (want <= 0.7072)"),
    );
    Ok(vec![r])
}

pub fn compact_rank(cfg: &ExperimentConfig, level: usize, delta: f64) -> CliResult<Vec<Report>> {
    let n = cfg.step_levels(Some(level))?[0];
    let m = hs::compact_rank(&cfg.scale, n, delta)?;
    let err = hs::projection_error_bound(&cfg.scale, n, m)?;
    let prev = if m > 0 {
        hs::projection_error_bound(&cfg.scale, n, m - 1)?
    } else {
        f64::INFINITY
    };
    let mut r = Report::new(
        "scale_compact_rank",
        &[
            "level",
            "delta",
            "gap",
            "m",
            "rank",
            "error_bound",
            "previous_bound",
        ],
    );
    r.push(row![
        n,
        delta,
        cfg.scale.gap(n),
        m,
        (2 * m).saturating_sub(1),
        err,
        prev
    ]);
    r.check(
        format!("compact_rank_minimal[level={n}]"),
        err <= delta && prev > delta,
        format!("m = {m}: e^(-d m) = {err:e} <= {delta:e} < e^(-d (m-1)) = {prev:e}"),
    );

    let mut fam = Report::new("scale_compact_family", &["m", "norm", "projection_error"]);
    let top = 64.min(cfg.scale.truncation);
    let mut worst: f64 = 0.0;
    for k in 1..=top {
        let expr = (&SmoothExpr::constant(k as f64) * &SmoothExpr::x()).sin();
        let u = hs::mollified_embed(&cfg.scale, &DistributionModel::smooth(expr)?, 1.0)?;
        let nu = hs::norm(&cfg.scale, &u, n)?;
        let e = hs::norm(&cfg.scale, &u.sub(&u.project(m))?, n + 1)?;
        worst = worst.max(e);
        fam.push(row![k, nu, e]);
    }
    fam.check(
        format!("compact_family[level={n}]"),
        worst <= delta,
        format!("sup projection error {worst:e} at rank m = {m} (tol {delta:e})"),
    );
    Ok(vec![r, fam])
}

/// Every demo and check with the configured defaults, in a fixed order.
pub fn suite(cfg: &ExperimentConfig) -> CliResult<Vec<Report>> {
    let nets: Vec<String> = SPACE_NETS.iter().map(|s| s.to_string()).collect();
    let numbers: Vec<String> = NUMBER_NETS.iter().map(|s| s.to_string()).collect();
    let mut out = Vec::new();
    out.extend(demo_schwartz(cfg)?);
    out.extend(demo_association(cfg)?);
    out.extend(demo_weak_product(cfg)?);
    out.extend(demo_hh_prime(cfg)?);
    out.extend(classify(cfg, &nets, Interval::new(-1.0, 1.0)?)?);
    out.extend(valuation(cfg, &numbers)?);
    out.extend(check_nuclear(cfg, None)?);
    out.extend(check_product(cfg, None)?);
    out.extend(check_derivative(cfg, None)?);
    out.extend(weak_strong(cfg, 1, 1.0)?);
    out.extend(compact_rank(cfg, 0, cfg.delta)?);
    Ok(out)
}

#[derive(Debug, Parser)]
#[command(
    name = "colombeau",
    version,
    about = "Generalized-function experiments and checks"
)]
pub struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for the reports.
    #[arg(long, global = true, default_value = "reports")]
    pub out: PathBuf,
    /// Override a config key, e.g. `--set format=json`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    #[command(subcommand)]
    Demo(DemoCommand),
    /// Moderateness report for named nets.
    Classify {
        #[arg(long, value_delimiter = ',', default_value = "dirac")]
        net: Vec<String>,
        #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
        lo: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        hi: f64,
    },
    /// Sharp valuation of named generalized numbers.
    Valuation {
        #[arg(long, value_delimiter = ',', default_value = "eps-power:2")]
        net: Vec<String>,
    },
    #[command(subcommand)]
    Scale(ScaleCommand),
    /// Run everything.
    Suite,
}

#[derive(Debug, Subcommand)]
pub enum DemoCommand {
    Schwartz,
    Association,
    WeakProduct,
    HhPrime,
}

#[derive(Debug, Subcommand)]
pub enum ScaleCommand {
    CheckNuclear {
        #[arg(long)]
        level: Option<usize>,
    },
    CheckProduct {
        #[arg(long)]
        level: Option<usize>,
    },
    CheckDerivative {
        #[arg(long)]
        level: Option<usize>,
    },
    WeakStrong {
        #[arg(long, default_value_t = 1)]
        level: usize,
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
    },
    CompactRank {
        #[arg(long, default_value_t = 0)]
        level: usize,
        #[arg(long)]
        delta: Option<f64>,
    },
}

fn load_config(cli: &Cli) -> CliResult<ExperimentConfig> {
    let overrides = cli
        .set
        .iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| CliError::Config(format!("`--set {s}`: expected KEY=VALUE")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let text = match &cli.config {
        Some(p) => {
            fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => String::new(),
    };
    ExperimentConfig::parse(&text, &overrides)
}

pub fn execute(cli: &Cli, cfg: &ExperimentConfig) -> CliResult<Vec<Report>> {
    match &cli.command {
        Command::Demo(DemoCommand::Schwartz) => demo_schwartz(cfg),
        Command::Demo(DemoCommand::Association) => demo_association(cfg),
        Command::Demo(DemoCommand::WeakProduct) => demo_weak_product(cfg),
        Command::Demo(DemoCommand::HhPrime) => demo_hh_prime(cfg),
        Command::Classify { net, lo, hi } => {
            let k = Interval::new(*lo, *hi).map_err(|e| CliError::Config(e.to_string()))?;
            classify(cfg, net, k)
        }
        Command::Valuation { net } => valuation(cfg, net),
        Command::Scale(ScaleCommand::CheckNuclear { level }) => check_nuclear(cfg, *level),
        Command::Scale(ScaleCommand::CheckProduct { level }) => check_product(cfg, *level),
        Command::Scale(ScaleCommand::CheckDerivative { level }) => check_derivative(cfg, *level),
        Command::Scale(ScaleCommand::WeakStrong { level, eps }) => weak_strong(cfg, *level, *eps),
        Command::Scale(ScaleCommand::CompactRank { level, delta }) => {
            compact_rank(cfg, *level, delta.unwrap_or(cfg.delta))
        }
        Command::Suite => suite(cfg),
    }
}

/// Parse `args`, run, write reports; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let outcome = load_config(&cli).and_then(|cfg| {
        let reports = execute(&cli, &cfg)?;
        for r in &reports {
            for c in &r.checks {
                println!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            for p in write_report(r, &cli.out, cfg.format)? {
                println!("wrote {}", p.display());
            }
        }
        Ok(reports)
    });
    match outcome {
        Ok(reports) if reports.iter().all(Report::passed) => EXIT_OK,
        Ok(_) => EXIT_CHECK_FAILED,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
