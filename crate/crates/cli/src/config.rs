//! Experiment configuration: one JSON document, validated key by key so that every
//! problem is reported at once.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use stochconf::metrics::MetricSpec;
use stochconf::risk::RiskMeasure;
use stochconf::signals::Format;
use stochconf::stl::{parse, Formula};
use stochconf::systems::{SpecLibrary, SystemKind};
use stochconf::transference::HolderSpec;

/// Every violated key, one message each.
#[derive(Debug)]
pub struct ConfigError(pub Vec<String>);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration:")?;
        for p in &self.0 {
            writeln!(f, "  - {p}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Def1,
    Def2,
    Risk,
    Transfer,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Simulate,
    Score,
    Calibrate,
    Check,
    Risk,
    Transfer,
    Worstcase,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Score => "score",
            Stage::Calibrate => "calibrate",
            Stage::Check => "check",
            Stage::Risk => "risk",
            Stage::Transfer => "transfer",
            Stage::Worstcase => "worstcase",
            Stage::Report => "report",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemCfg {
    pub kind: SystemKind,
    /// Total pairs to generate; defaults to `n_cal + n_test`.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default = "yes")]
    pub shared_inputs: bool,
    #[serde(default)]
    pub common_noise: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetCfg {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<Format>,
    #[serde(default)]
    pub y1: Option<PathBuf>,
    #[serde(default)]
    pub y2: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub enum Source {
    System(SystemCfg),
    File { path: PathBuf, format: Format },
    FilePair { y1: PathBuf, y2: PathBuf },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sizes {
    pub n_cal: usize,
    #[serde(default)]
    pub n_test: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxCfg {
    pub lows: Vec<f64>,
    pub highs: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorstcaseCfg {
    #[serde(default, rename = "box")]
    pub input_box: Option<BoxCfg>,
    pub kappa: f64,
    pub n_per_cell: usize,
    #[serde(default, rename = "K_L")]
    pub k_l: Option<usize>,
    #[serde(default, rename = "delta_L")]
    pub delta_l: Option<f64>,
    #[serde(default, rename = "known_L")]
    pub known_l: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HolderKind {
    RhoVsDsup,
    RhoVsSkorokhod,
    Custom,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderCfg {
    pub source: HolderKind,
    #[serde(default, rename = "H")]
    pub h: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Fixed `K_y` for the Skorokhod source; measured from calibration data when absent.
    #[serde(default, rename = "K_y")]
    pub k_y: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SpecCfg {
    /// Library name or formula text as written in the config.
    pub label: String,
    pub formula: Formula,
}

#[derive(Debug, Clone)]
pub struct Config {
    pub source: Option<Source>,
    pub metric: Option<MetricSpec>,
    pub spec: Option<SpecCfg>,
    pub delta: Option<f64>,
    pub delta_bar: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub epsilon: Option<f64>,
    pub r: Option<f64>,
    pub risk_measure: Option<RiskMeasure>,
    pub sizes: Option<Sizes>,
    pub seed: Option<u64>,
    pub mode: Mode,
    pub worstcase: Option<WorstcaseCfg>,
    pub holder: Option<HolderCfg>,
    pub bins: usize,
    /// SHA-256 of the canonical (key-sorted) JSON of the config.
    pub hash: String,
}

const KEYS: &[&str] = &[
    "system",
    "dataset",
    "metric",
    "spec",
    "delta",
    "delta_bar",
    "beta",
    "gamma",
    "epsilon",
    "r",
    "risk_measure",
    "sizes",
    "seed",
    "mode",
    "worstcase",
    "holder",
    "bins",
];

fn take<T: DeserializeOwned>(map: &mut Map<String, Value>, key: &str, errors: &mut Vec<String>) -> Option<T> {
    let v = map.remove(key)?;
    match serde_json::from_value(v) {
        Ok(t) => Some(t),
        Err(e) => {
            errors.push(format!("`{key}`: {e}"));
            None
        }
    }
}

fn open_probability(key: &str, v: Option<f64>, errors: &mut Vec<String>) {
    if let Some(v) = v {
        if !(v > 0.0 && v < 1.0) {
            errors.push(format!("`{key}` must lie strictly between 0 and 1, got {v}"));
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(vec![format!("cannot read config {}: {e}", path.display())]))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Config::from_str(&text, base)
    }

    /// Parses and validates; relative data paths are resolved against `base`.
    pub fn from_str(text: &str, base: &Path) -> Result<Config, ConfigError> {
        let value: Value = serde_json::from_str(text).map_err(|e| ConfigError(vec![format!("config is not valid JSON: {e}")]))?;
        let Value::Object(mut map) = value.clone() else {
            return Err(ConfigError(vec!["config must be a JSON object".into()]));
        };
        let hash = hex::encode(Sha256::digest(value.to_string().as_bytes()));
        let mut errors = Vec::new();

        let system: Option<SystemCfg> = take(&mut map, "system", &mut errors);
        let dataset: Option<DatasetCfg> = take(&mut map, "dataset", &mut errors);
        let source = match (system, dataset) {
            (Some(_), Some(_)) => {
                errors.push("give either `system` or `dataset`, not both".into());
                None
            }
            (Some(s), None) => Some(Source::System(s)),
            (None, Some(d)) => resolve_dataset(d, base, &mut errors),
            (None, None) => None,
        };
        let metric = take(&mut map, "metric", &mut errors);
        let spec = take::<String>(&mut map, "spec", &mut errors).and_then(|s| {
            let lib = SpecLibrary::standard();
            if let Some(f) = lib.get(&s) {
                return Some(SpecCfg { label: s, formula: f.clone() });
            }
            match parse(&s) {
                Ok(formula) => Some(SpecCfg { label: s, formula }),
                Err(e) => {
                    let names: Vec<&str> = lib.names().collect();
                    errors.push(format!("`spec`: not a library name ({}) and not a formula: {e}", names.join(", ")));
                    None
                }
            }
        });
        let delta = take(&mut map, "delta", &mut errors);
        let delta_bar = take(&mut map, "delta_bar", &mut errors);
        let beta = take(&mut map, "beta", &mut errors);
        let gamma = take(&mut map, "gamma", &mut errors);
        let epsilon: Option<f64> = take(&mut map, "epsilon", &mut errors);
        let r: Option<f64> = take(&mut map, "r", &mut errors);
        let risk_measure = take(&mut map, "risk_measure", &mut errors);
        let sizes: Option<Sizes> = take(&mut map, "sizes", &mut errors);
        let seed = take(&mut map, "seed", &mut errors);
        let mode: Option<Mode> = take(&mut map, "mode", &mut errors);
        let worstcase: Option<WorstcaseCfg> = take(&mut map, "worstcase", &mut errors);
        let holder: Option<HolderCfg> = take(&mut map, "holder", &mut errors);
        let bins: usize = take(&mut map, "bins", &mut errors).unwrap_or(50);

        for key in map.keys() {
            errors.push(format!("unknown key `{key}` (expected one of: {})", KEYS.join(", ")));
        }
        for (k, v) in [("delta", delta), ("delta_bar", delta_bar), ("beta", beta), ("gamma", gamma)] {
            open_probability(k, v, &mut errors);
        }
        for (k, v) in [("epsilon", epsilon), ("r", r)] {
            if matches!(v, Some(x) if !x.is_finite()) {
                errors.push(format!("`{k}` must be finite"));
            }
        }
        if let Some(s) = sizes {
            if s.n_cal == 0 {
                errors.push("`sizes.n_cal` must be at least 1".into());
            }
            if s.n_test == Some(0) {
                errors.push("`sizes.n_test` must be at least 1".into());
            }
        }
        if bins == 0 {
            errors.push("`bins` must be at least 1".into());
        }
        if let Some(w) = &worstcase {
            if !(w.kappa > 0.0) {
                errors.push(format!("`worstcase.kappa` must be positive, got {}", w.kappa));
            }
            if w.n_per_cell == 0 {
                errors.push("`worstcase.n_per_cell` must be at least 1".into());
            }
            open_probability("worstcase.delta_L", w.delta_l, &mut errors);
            match (w.known_l, w.k_l, w.delta_l) {
                (Some(l), None, None) if l >= 0.0 && l.is_finite() => {}
                (Some(_), None, None) => errors.push("`worstcase.known_L` must be finite and non-negative".into()),
                (None, Some(k), Some(_)) if k >= 1 => {}
                (None, Some(_), Some(_)) => errors.push("`worstcase.K_L` must be at least 1".into()),
                _ => errors.push("`worstcase` needs either `known_L` or both `K_L` and `delta_L`".into()),
            }
            if let Some(b) = &w.input_box {
                if b.lows.len() != b.highs.len() || b.lows.is_empty() || b.lows.iter().zip(&b.highs).any(|(l, h)| !(l < h)) {
                    errors.push("`worstcase.box` needs matching non-empty `lows` < `highs`".into());
                }
            }
        }
        if let Some(h) = &holder {
            match h.source {
                HolderKind::Custom if h.h.is_none() || h.gamma.is_none() => {
                    errors.push("`holder` with source `custom` needs `H` and `gamma`".into())
                }
                HolderKind::RhoVsDsup | HolderKind::RhoVsSkorokhod if h.h.is_some() || h.gamma.is_some() => {
                    errors.push("`holder.H`/`holder.gamma` are fixed by built-in sources; use source `custom`".into())
                }
                _ => {}
            }
        }

        let cfg = Config {
            source,
            metric,
            spec,
            delta,
            delta_bar,
            beta,
            gamma,
            epsilon,
            r,
            risk_measure,
            sizes,
            seed,
            mode: mode.unwrap_or(Mode::All),
            worstcase,
            holder,
            bins,
            hash,
        };
        if mode.is_none() && !errors.iter().any(|e| e.starts_with("`mode`")) {
            errors.push("missing key `mode` (def1, def2, risk, transfer or all)".into());
        }
        if errors.is_empty() {
            for stage in cfg.pipeline() {
                errors.extend(cfg.missing_for(stage));
            }
        }
        let errors: Vec<String> = errors.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError(errors))
        }
    }

    /// Stages executed by `run` for the configured mode.
    pub fn pipeline(&self) -> Vec<Stage> {
        use Stage::*;
        let mut stages = match self.mode {
            Mode::Def1 => vec![Simulate, Score, Calibrate, Check],
            Mode::Def2 => vec![Worstcase],
            Mode::Risk => vec![Simulate, Score, Risk],
            Mode::Transfer => vec![Simulate, Score, Calibrate, Transfer],
            Mode::All => {
                let mut s = vec![Simulate, Score, Calibrate, Check, Risk, Transfer];
                if self.worstcase.is_some() {
                    s.push(Worstcase);
                }
                s
            }
        };
        stages.push(Report);
        stages
    }

    /// Keys a stage needs that are absent.
    pub fn missing_for(&self, stage: Stage) -> Vec<String> {
        let mut missing = Vec::new();
        let mut need = |present: bool, key: &str| {
            if !present {
                missing.push(format!("stage `{}` needs {key}", stage.name()));
            }
        };
        match stage {
            Stage::Simulate => {
                need(self.source.is_some(), "`system` or `dataset`");
                need(self.sizes.is_some(), "`sizes`");
                need(self.seed.is_some(), "`seed`");
                if let (Some(Source::System(_)), Some(s)) = (&self.source, &self.sizes) {
                    need(s.n_test.is_some(), "`sizes.n_test`");
                }
            }
            Stage::Score => need(self.metric.is_some(), "`metric`"),
            Stage::Calibrate => need(self.delta.is_some(), "`delta`"),
            Stage::Check => {
                need(self.delta.is_some(), "`delta`");
                need(self.epsilon.is_some(), "`epsilon`");
            }
            Stage::Risk => {
                need(self.beta.is_some(), "`beta`");
                need(self.gamma.is_some(), "`gamma`");
                need(self.r.is_some(), "`r`");
                need(self.risk_measure.is_some(), "`risk_measure`");
                if self.risk_measure == Some(RiskMeasure::Cvar) {
                    need(self.metric.is_some_and(|m| m.clip_b.is_some()), "`metric.clip_b`");
                }
            }
            Stage::Transfer => {
                need(self.spec.is_some(), "`spec`");
                need(self.delta.is_some(), "`delta`");
                need(self.delta_bar.is_some(), "`delta_bar`");
                if self.holder.is_none() {
                    need(
                        self.metric
                            .is_some_and(|m| matches!(m.kind, stochconf::metrics::MetricKind::Sup | stochconf::metrics::MetricKind::Skorokhod)),
                        "`holder` (no built-in Hölder constant for this metric)",
                    );
                }
            }
            Stage::Worstcase => {
                need(matches!(self.source, Some(Source::System(_))), "`system`");
                need(self.worstcase.is_some(), "`worstcase`");
                need(self.metric.is_some(), "`metric`");
                need(self.delta.is_some(), "`delta`");
                need(self.epsilon.is_some(), "`epsilon`");
                need(self.seed.is_some(), "`seed`");
            }
            Stage::Report => {}
        }
        missing
    }

    pub fn require(&self, stage: Stage) -> Result<(), ConfigError> {
        let missing = self.missing_for(stage);
        if missing.is_empty() {
            Ok(())
        } else {
            Err(ConfigError(missing))
        }
    }

    /// Hölder constants for the transfer stage; `k_y` is the measured signal slope.
    pub fn holder_spec(&self, k_y: impl FnOnce() -> f64) -> stochconf::Result<HolderSpec> {
        use stochconf::metrics::MetricKind;
        match &self.holder {
            Some(HolderCfg { source: HolderKind::Custom, h, gamma, .. }) => {
                HolderSpec::custom(h.unwrap_or(f64::NAN), gamma.unwrap_or(f64::NAN))
            }
            Some(HolderCfg { source: HolderKind::RhoVsDsup, .. }) => Ok(HolderSpec::rho_vs_dsup()),
            Some(HolderCfg { source: HolderKind::RhoVsSkorokhod, k_y: fixed, .. }) => {
                HolderSpec::rho_vs_skorokhod(fixed.unwrap_or_else(k_y))
            }
            None => match self.metric.map(|m| m.kind) {
                Some(MetricKind::Skorokhod) => HolderSpec::rho_vs_skorokhod(k_y()),
                _ => Ok(HolderSpec::rho_vs_dsup()),
            },
        }
    }
}

fn resolve_dataset(d: DatasetCfg, base: &Path, errors: &mut Vec<String>) -> Option<Source> {
    let abs = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
    match (d.path, d.y1, d.y2) {
        (Some(path), None, None) => {
            let format = d.format.or_else(|| Format::from_path(&path));
            match format {
                Some(format) => Some(Source::File { path: abs(path), format }),
                None => {
                    errors.push("`dataset.format` is required when the extension is not .csv or .json".into());
                    None
                }
            }
        }
        (None, Some(y1), Some(y2)) => Some(Source::FilePair { y1: abs(y1), y2: abs(y2) }),
        _ => {
            errors.push("`dataset` needs either `path` or both `y1` and `y2`".into());
            None
        }
    }
}
