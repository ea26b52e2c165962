//! Config-driven experiments with deterministic JSON reports and CSV artifacts.

mod runs;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Disc, DomainSpec, Fixture};
use crate::transport::EntropicOptions;

pub use runs::{sandwich_section, SandwichSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Convexify,
    Contraction,
    RatioBound,
    HeatVsJko,
    SlopeIdentity,
    EntropyConvexity,
    CurvatureConstants,
    PotentialAudit,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::Convexify,
        ExperimentKind::Contraction,
        ExperimentKind::RatioBound,
        ExperimentKind::HeatVsJko,
        ExperimentKind::SlopeIdentity,
        ExperimentKind::EntropyConvexity,
        ExperimentKind::CurvatureConstants,
        ExperimentKind::PotentialAudit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Convexify => "convexify",
            ExperimentKind::Contraction => "contraction",
            ExperimentKind::RatioBound => "ratio-bound",
            ExperimentKind::HeatVsJko => "heat-vs-jko",
            ExperimentKind::SlopeIdentity => "slope-identity",
            ExperimentKind::EntropyConvexity => "entropy-convexity",
            ExperimentKind::CurvatureConstants => "curvature-constants",
            ExperimentKind::PotentialAudit => "potential-audit",
        }
    }

    /// Domain used when the config does not give one.
    pub fn default_domain(self) -> DomainSpec {
        let pacman = Fixture::Pacman { center: [0.5, 0.5], radius: 0.5, mouth_radius: 0.25, mouth_angle: 0.0 };
        let hole = hole_fixture();
        match self {
            ExperimentKind::Convexify => DomainSpec::new(pacman, 1.0 / 64.0),
            ExperimentKind::Contraction | ExperimentKind::RatioBound | ExperimentKind::PotentialAudit => DomainSpec::new(hole, 1.0 / 64.0),
            ExperimentKind::HeatVsJko | ExperimentKind::SlopeIdentity => DomainSpec::new(pacman, 1.0 / 32.0),
            ExperimentKind::EntropyConvexity => DomainSpec::new(Fixture::Square, 1.0 / 16.0),
            ExperimentKind::CurvatureConstants => DomainSpec::new(hole_fixture(), 1.0 / 32.0),
        }
    }
}

fn hole_fixture() -> Fixture {
    Fixture::SquareMinusDiscs { discs: vec![Disc { center: [0.5, 0.5], radius: 0.25 }] }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config("experiment", format!("unknown experiment `{s}`")))
    }
}

/// Gaussian bump density `floor + exp(-|x - center|²/(2σ²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub center: [f64; 2],
    pub sigma: f64,
    #[serde(default)]
    pub floor: f64,
}

/// Potential family for experiments that need one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    ExteriorBall,
    SignedDistance,
}

/// Numeric knobs. Every field is optional; unset fields take the documented
/// per-experiment default and are reported with source `default`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// Exterior-ball radius `r` (default: fixture feature size).
    pub ball_radius: Option<f64>,
    /// Ambient curvature bound `L` of the ball comparison (default 0).
    pub ambient_curvature: Option<f64>,
    /// Override of the potential's κ.
    pub kappa: Option<f64>,
    pub kappa_prime: Option<f64>,
    /// `κ' = factor·κ` when `kappa_prime` is unset (default 2).
    pub kappa_prime_factor: Option<f64>,
    pub potential: Option<PotentialKind>,
    pub pairs: Option<usize>,
    pub oracle_pairs: Option<usize>,
    pub sandwich_support: Option<usize>,
    pub chart_radius: Option<f64>,
    pub near_band: Option<f64>,
    pub tol_cells: Option<usize>,
    /// Upper edge of the band `0 < V <= band` used for sampled pairs.
    pub band: Option<f64>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub delta: Option<f64>,
    pub closed_form_tol: Option<f64>,
    pub tau: Option<f64>,
    pub tau_sweep: Option<Vec<f64>>,
    pub heat_dt: Option<f64>,
    pub checkpoints: Option<Vec<f64>>,
    pub entropic: Option<EntropicOptions>,
    pub gap_tol: Option<f64>,
    pub ede_spacing: Option<f64>,
    pub ede_tol: Option<f64>,
    pub control_factor: Option<f64>,
    pub validation_checkpoints: Option<usize>,
    pub initial: Option<Bump>,
    pub target: Option<Bump>,
    pub sandwich_ks: Option<Vec<u32>>,
    pub sandwich_measures: Option<usize>,
    pub lp_tol: Option<f64>,
    pub densities: Option<usize>,
    pub radius: Option<f64>,
    pub radii: Option<Vec<f64>>,
    pub slope_upper: Option<f64>,
    pub slope_lower: Option<f64>,
    pub near_uniform_tol: Option<f64>,
    pub swaps: Option<usize>,
    pub steps: Option<usize>,
    pub curvature: Option<f64>,
    pub probe_tol: Option<f64>,
    pub dimension: Option<f64>,
    pub constants: Option<[f64; 4]>,
    pub samples: Option<usize>,
    pub audit_tol: Option<f64>,
    pub slope_band: Option<f64>,
    pub slope_min: Option<f64>,
}

/// Config file contents; fields left out are filled from command-line flags
/// or defaults by [`ConfigFile::resolve`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Option<ExperimentKind>,
    pub domain: Option<DomainSpec>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub params: Params,
}

impl ConfigFile {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::config("config", e.message().to_string()))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::config("config", e.to_string()))
    }

    /// Reads JSON when the extension is `.json`, TOML otherwise.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") { ConfigFile::from_json_str(&text) } else { ConfigFile::from_toml_str(&text) };
        parsed.map_err(|e| e.context(format!("parsing {}", path.display())))
    }

    /// Combines the file with command-line values; values in the file win.
    pub fn resolve(self, experiment: ExperimentKind, seed: Option<u64>, out: Option<PathBuf>) -> Result<ExperimentConfig> {
        if let Some(named) = self.experiment {
            if named != experiment {
                return Err(Error::config("experiment", format!("config is for `{named}` but `{experiment}` was requested")));
            }
        }
        let cfg = ExperimentConfig {
            experiment,
            domain: self.domain.unwrap_or_else(|| experiment.default_domain()),
            seed: self.seed.or(seed).unwrap_or(DEFAULT_SEED),
            out: self.out.or(out),
            params: self.params,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub const DEFAULT_SEED: u64 = 1;

/// Fully resolved experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub domain: DomainSpec,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub params: Params,
}

fn positive(field: &str, v: Option<f64>) -> Result<()> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(Error::config(format!("params.{field}"), format!("must be positive and finite, got {x}"))),
        _ => Ok(()),
    }
}

fn nonzero(field: &str, v: Option<usize>) -> Result<()> {
    match v {
        Some(0) => Err(Error::config(format!("params.{field}"), "must be at least 1")),
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        ExperimentConfig { experiment, domain: experiment.default_domain(), seed: DEFAULT_SEED, out: None, params: Params::default() }
    }

    pub fn with_domain(mut self, domain: DomainSpec) -> Self {
        self.domain = domain;
        self
    }

    pub fn with_params(mut self, params: Params) -> Self {
        self.params = params;
        self
    }

    /// Range checks for every knob; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        let d = &self.domain;
        if !(d.h > 0.0 && d.h.is_finite()) {
            return Err(Error::config("domain.h", format!("must be positive, got {}", d.h)));
        }
        if !(d.extent[0] > 0.0 && d.extent[1] > 0.0) {
            return Err(Error::config("domain.extent", "must be positive"));
        }
        let p = &self.params;
        for (name, v) in [
            ("ball_radius", p.ball_radius),
            ("chart_radius", p.chart_radius),
            ("near_band", p.near_band),
            ("band", p.band),
            ("dt", p.dt),
            ("horizon", p.horizon),
            ("closed_form_tol", p.closed_form_tol),
            ("tau", p.tau),
            ("heat_dt", p.heat_dt),
            ("gap_tol", p.gap_tol),
            ("ede_spacing", p.ede_spacing),
            ("ede_tol", p.ede_tol),
            ("control_factor", p.control_factor),
            ("lp_tol", p.lp_tol),
            ("radius", p.radius),
            ("slope_upper", p.slope_upper),
            ("slope_lower", p.slope_lower),
            ("near_uniform_tol", p.near_uniform_tol),
            ("probe_tol", p.probe_tol),
            ("audit_tol", p.audit_tol),
            ("slope_band", p.slope_band),
        ] {
            positive(name, v)?;
        }
        for (name, v) in [("pairs", p.pairs), ("oracle_pairs", p.oracle_pairs), ("sandwich_support", p.sandwich_support), ("densities", p.densities), ("steps", p.steps), ("samples", p.samples), ("sandwich_measures", p.sandwich_measures)] {
            nonzero(name, v)?;
        }
        if let Some(delta) = p.delta {
            if !(0.0..1.0).contains(&delta) {
                return Err(Error::config("params.delta", format!("must lie in [0, 1), got {delta}")));
            }
        }
        if let Some(n) = p.dimension {
            if !(n >= 1.0) {
                return Err(Error::config("params.dimension", format!("must be at least 1, got {n}")));
            }
        }
        for (name, list) in [("tau_sweep", &p.tau_sweep), ("checkpoints", &p.checkpoints), ("radii", &p.radii)] {
            if let Some(list) = list {
                if list.is_empty() || list.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                    return Err(Error::config(format!("params.{name}"), "must be a nonempty list of positive numbers"));
                }
            }
        }
        if let Some(ks) = &p.sandwich_ks {
            if ks.is_empty() || ks.contains(&0) {
                return Err(Error::config("params.sandwich_ks", "must be a nonempty list of positive integers"));
            }
        }
        if let Some(e) = &p.entropic {
            if !(e.epsilon_start > 0.0) || !(e.epsilon_ratio > 0.0 && e.epsilon_ratio < 1.0) || !(e.tol > 0.0) || e.epsilon.is_some_and(|x| !(x > 0.0)) {
                return Err(Error::config("params.entropic", "needs epsilon_start > 0, 0 < epsilon_ratio < 1, tol > 0 and epsilon > 0"));
            }
        }
        for (name, b) in [("initial", &p.initial), ("target", &p.target)] {
            if let Some(b) = b {
                if !(b.sigma > 0.0) || !(b.floor >= 0.0) {
                    return Err(Error::config(format!("params.{name}"), "needs sigma > 0 and floor >= 0"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

/// One pass/fail decision, with the knob that set its threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub relation: Relation,
    pub threshold: f64,
    /// `params.<knob>` that set the threshold, or `fixed` for exact checks.
    pub tolerance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub value: serde_json::Value,
    /// `config` or `default`.
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: ExperimentKind,
    pub fixture: String,
    pub h: f64,
    pub seed: u64,
    pub pass: bool,
    pub parameters: BTreeMap<String, ParamRecord>,
    pub checks: Vec<Check>,
    pub metrics: BTreeMap<String, serde_json::Value>,
    pub notes: Vec<String>,
    pub artifacts: Vec<String>,
}

impl ExperimentReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// The metric swept by [`sweep`].
    pub fn primary(&self) -> Option<f64> {
        self.metrics.get("primary").and_then(serde_json::Value::as_f64)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

pub(crate) struct Ctx {
    pub(crate) rng: ChaCha8Rng,
    pub(crate) report: ExperimentReport,
    out: Option<PathBuf>,
}

impl Ctx {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        if let Some(dir) = &cfg.out {
            std::fs::create_dir_all(dir).map_err(|e| Error::from(e).context(format!("creating {}", dir.display())))?;
        }
        Ok(Ctx {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            report: ExperimentReport {
                experiment: cfg.experiment,
                fixture: cfg.domain.fixture_name().to_string(),
                h: cfg.domain.h,
                seed: cfg.seed,
                pass: true,
                parameters: BTreeMap::new(),
                checks: Vec::new(),
                metrics: BTreeMap::new(),
                notes: Vec::new(),
                artifacts: Vec::new(),
            },
            out: cfg.out.clone(),
        })
    }

    /// Resolves a knob and records its value and source.
    pub(crate) fn param<T: Serialize + Clone>(&mut self, name: &str, value: Option<T>, default: T) -> T {
        let (v, source) = match value {
            Some(v) => (v, "config"),
            None => (default, "default"),
        };
        self.report
            .parameters
            .insert(name.to_string(), ParamRecord { value: serde_json::to_value(&v).unwrap_or(serde_json::Value::Null), source: source.to_string() });
        v
    }

    pub(crate) fn check(&mut self, name: &str, value: f64, relation: Relation, threshold: f64, tolerance: &str) -> bool {
        let pass = match relation {
            Relation::AtMost => value <= threshold,
            Relation::AtLeast => value >= threshold,
        };
        self.report.pass &= pass;
        self.report.checks.push(Check { name: name.to_string(), pass, value, relation, threshold, tolerance: tolerance.to_string() });
        pass
    }

    pub(crate) fn metric<T: Serialize>(&mut self, name: &str, value: T) {
        self.report.metrics.insert(name.to_string(), serde_json::to_value(value).unwrap_or(serde_json::Value::Null));
    }

    pub(crate) fn note(&mut self, text: impl Into<String>) {
        self.report.notes.push(text.into());
    }

    /// Writes an artifact when an output directory is set.
    pub(crate) fn artifact(&mut self, name: &str, write: impl FnOnce(&mut dyn std::io::Write) -> Result<()>) -> Result<()> {
        if let Some(dir) = &self.out {
            let path = dir.join(name);
            let mut f = crate::io::create_file(&path)?;
            write(&mut f).map_err(|e| e.context(format!("writing {}", path.display())))?;
            std::io::Write::flush(&mut f)?;
            self.report.artifacts.push(name.to_string());
        }
        Ok(())
    }
}

/// Runs one experiment; writes `report.json` and CSV artifacts when `out` is set.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let mut ctx = Ctx::new(config)?;
    let name = config.experiment.name();
    let outcome = match config.experiment {
        ExperimentKind::Convexify => runs::convexify(config, &mut ctx),
        ExperimentKind::Contraction => runs::contraction(config, &mut ctx),
        ExperimentKind::RatioBound => runs::ratio_bound(config, &mut ctx),
        ExperimentKind::HeatVsJko => runs::heat_vs_jko(config, &mut ctx),
        ExperimentKind::SlopeIdentity => runs::slope_identity(config, &mut ctx),
        ExperimentKind::EntropyConvexity => runs::entropy_convexity(config, &mut ctx),
        ExperimentKind::CurvatureConstants => runs::curvature_constants(config, &mut ctx),
        ExperimentKind::PotentialAudit => runs::potential_audit(config, &mut ctx),
    };
    outcome.map_err(|e| e.context(format!("experiment {name}")))?;
    let mut report = ctx.report;
    report.artifacts.sort();
    if let Some(dir) = &config.out {
        report.artifacts.insert(0, "report.json".to_string());
        std::fs::write(dir.join("report.json"), report.to_json()?)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub primary: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub experiment: ExperimentKind,
    pub knob: String,
    pub rows: Vec<SweepRow>,
    /// Primary metric nonincreasing along the given value order.
    pub nonincreasing: bool,
    pub nondecreasing: bool,
    /// `primary[i] / primary[i+1]` for consecutive rows.
    pub ratios: Vec<f64>,
}

/// Sets a numeric knob: `h` (grid spacing) or any numeric field of `params`.
pub fn set_knob(config: &mut ExperimentConfig, knob: &str, value: f64) -> Result<()> {
    if knob == "h" || knob == "domain.h" {
        config.domain.h = value;
        return config.validate();
    }
    let key = knob.strip_prefix("params.").unwrap_or(knob);
    let mut v = serde_json::to_value(&config.params)?;
    let obj = v.as_object_mut().expect("params serialize to an object");
    let integral = matches!(key, "pairs" | "oracle_pairs" | "sandwich_support" | "tol_cells" | "validation_checkpoints" | "sandwich_measures" | "densities" | "swaps" | "steps" | "samples");
    let entry = if integral {
        if value.fract() != 0.0 || value < 0.0 {
            return Err(Error::config(format!("params.{key}"), format!("needs a nonnegative integer, got {value}")));
        }
        serde_json::json!(value as u64)
    } else {
        serde_json::json!(value)
    };
    obj.insert(key.to_string(), entry);
    config.params = serde_json::from_value(v).map_err(|e| Error::config(format!("params.{key}"), e.to_string()))?;
    config.validate()
}

/// Runs the experiment once per knob value and tabulates the primary metric.
pub fn sweep(config: &ExperimentConfig, knob: &str, values: &[f64]) -> Result<SweepReport> {
    if values.is_empty() {
        return Err(Error::config("sweep", "needs at least one value"));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let mut cfg = config.clone();
        cfg.out = None;
        set_knob(&mut cfg, knob, value)?;
        let report = run(&cfg)?;
        let primary = report.primary().ok_or_else(|| Error::InvalidParameter(format!("{} reports no primary metric", cfg.experiment)))?;
        rows.push(SweepRow { value, primary, pass: report.pass });
    }
    let nonincreasing = rows.windows(2).all(|w| w[1].primary <= w[0].primary);
    let nondecreasing = rows.windows(2).all(|w| w[1].primary >= w[0].primary);
    let ratios = rows.windows(2).map(|w| w[0].primary / w[1].primary).collect();
    let report = SweepReport { experiment: config.experiment, knob: knob.to_string(), rows, nonincreasing, nondecreasing, ratios };
    if let Some(dir) = &config.out {
        std::fs::create_dir_all(dir)?;
        crate::io::write_json(&dir.join("sweep.json"), &report)?;
        let mut wtr = csv::Writer::from_path(dir.join("sweep.csv"))?;
        wtr.write_record([knob, "primary", "pass"])?;
        for r in &report.rows {
            wtr.serialize((r.value, r.primary, r.pass))?;
        }
        wtr.flush()?;
    }
    Ok(report)
}
