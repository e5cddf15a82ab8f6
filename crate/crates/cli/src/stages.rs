//! Pipeline stages. Each stage reads its inputs from, and writes its artifact to, the
//! output directory, so stages compose through files.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use stochconf::conformal::{conformal_quantile, scores_from_dataset, validation_score, ConformalBound, ConformanceVerdict, Method, ScoreSet};
use stochconf::metrics::{clip, MetricSpec};
use stochconf::risk::{check_nonconformance_risk, empirical_cvar, RiskMeasure, RiskSpec};
use stochconf::signals::{load_dataset, load_dataset_pair, save_dataset, split_dataset, Dataset, Format, Role};
use stochconf::systems::{generate_pair_dataset, PairSystem};
use stochconf::transference::{
    conformal_lower_bound, measure_holder_constants, robustness_pairs, transfer_probabilistic, transfer_report_from_scores,
    transfer_risk,
};
use stochconf::worstcase::{check_def2, Def2Params, InputBox, LipschitzSource};

use crate::config::{Config, ConfigError, Source, Stage};
use crate::report;

pub const DATASET_CAL: &str = "dataset_cal.json";
pub const DATASET_TEST: &str = "dataset_test.json";
pub const SCORES_CAL: &str = "scores_cal.csv";
pub const SCORES_TEST: &str = "scores_test.csv";
pub const SCORES_META: &str = "scores.meta.json";
pub const BOUND: &str = "bound.json";
pub const VERDICT: &str = "verdict.json";
pub const RISK: &str = "risk.json";
pub const TRANSFER: &str = "transfer.json";
pub const WORSTCASE: &str = "worstcase.json";
pub const REPORT: &str = "report.json";

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Data(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<stochconf::Error> for CliError {
    fn from(e: stochconf::Error) -> Self {
        use stochconf::Error::*;
        match e {
            InvalidArgument(_) | VacuousGuarantee(_) | Syntax { .. } | UnknownIdentifier { .. } | MalformedInterval { .. } => {
                CliError::Config(ConfigError(vec![e.to_string()]))
            }
            InvalidSignal(_)
            | GridMismatch { .. }
            | DataParse { .. }
            | Io { .. }
            | EmptyScores
            | OutsideSupport { .. }
            | InsufficientHorizon { .. }
            | DimensionOutOfRange { .. } => CliError::Data(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

fn internal(e: impl fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

/// Warnings raised while running stages.
#[derive(Default)]
pub struct Context {
    pub out: PathBuf,
    pub warnings: Vec<String>,
}

impl Context {
    pub fn new(out: PathBuf) -> Self {
        Context { out, warnings: Vec::new() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn upstream(&self, name: &str, producer: Stage) -> Result<PathBuf> {
        let p = self.path(name);
        if p.exists() {
            Ok(p)
        } else {
            Err(CliError::Data(format!(
                "missing upstream artifact {} (produced by `stochconf {}`)",
                p.display(),
                producer.name()
            )))
        }
    }

    fn warn(&mut self, msg: String) {
        eprintln!("warning: {msg}");
        self.warnings.push(msg);
    }
}

pub fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v).map_err(internal)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn run_stage(stage: Stage, cfg: &Config, ctx: &mut Context) -> Result<()> {
    cfg.require(stage)?;
    fs::create_dir_all(&ctx.out).map_err(|e| CliError::Data(format!("cannot create {}: {e}", ctx.out.display())))?;
    match stage {
        Stage::Simulate => simulate(cfg, ctx),
        Stage::Score => score(cfg, ctx),
        Stage::Calibrate => calibrate(cfg, ctx),
        Stage::Check => check(cfg, ctx),
        Stage::Risk => risk(cfg, ctx),
        Stage::Transfer => transfer(cfg, ctx),
        Stage::Worstcase => worstcase(cfg, ctx),
        Stage::Report => report::write_report(cfg, ctx),
    }
}

fn pair_system(cfg: &Config) -> Option<PairSystem> {
    match &cfg.source {
        Some(Source::System(s)) => Some(PairSystem::new(s.kind, s.common_noise)),
        _ => None,
    }
}

fn simulate(cfg: &Config, ctx: &mut Context) -> Result<()> {
    let sizes = cfg.sizes.expect("required");
    let seed = cfg.seed.expect("required");
    let (cal, test) = match cfg.source.as_ref().expect("required") {
        Source::System(s) => {
            let n_test = sizes.n_test.expect("required");
            let need = sizes.n_cal + n_test;
            let n = s.n.unwrap_or(need);
            if n < need {
                return Err(ConfigError(vec![format!("`system.n` = {n} is smaller than n_cal + n_test = {need}")]).into());
            }
            let sys = PairSystem::new(s.kind, s.common_noise);
            let all = generate_pair_dataset(&sys, n, seed, s.shared_inputs)?.into_pairs();
            let mut it = all.into_iter();
            let cal: Vec<_> = it.by_ref().take(sizes.n_cal).collect();
            let test: Vec<_> = it.take(n_test).collect();
            (Dataset::new(cal, Role::Calibration)?, Dataset::new(test, Role::Test)?)
        }
        source => {
            let d = match source {
                Source::File { path, format } => load_dataset(path, *format)?,
                Source::FilePair { y1, y2 } => load_dataset_pair(y1, y2)?,
                Source::System(_) => unreachable!(),
            };
            let (cal, test) = split_dataset(&d, sizes.n_cal, seed)?;
            match sizes.n_test {
                Some(n) if n > test.len() => {
                    return Err(CliError::Data(format!(
                        "dataset has {} pairs; n_cal = {} leaves {} for testing, fewer than n_test = {n}",
                        d.len(),
                        sizes.n_cal,
                        test.len()
                    )))
                }
                Some(n) => {
                    let pairs: Vec<_> = test.into_pairs().into_iter().take(n).collect();
                    (cal, Dataset::new(pairs, Role::Test)?)
                }
                None => (cal, test),
            }
        }
    };
    save_dataset(&cal, ctx.path(DATASET_CAL), Format::Json)?;
    save_dataset(&test, ctx.path(DATASET_TEST), Format::Json)?;
    Ok(())
}

/// One row per pair: distance and, when a specification is configured, robustness at
/// time 0 of both systems.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoresTable {
    pub ids: Vec<u64>,
    pub distance: Vec<f64>,
    pub rho: Option<(Vec<f64>, Vec<f64>)>,
}

impl ScoresTable {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let io = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
        w.write_record(["pair_id", "distance", "rho1", "rho2"]).map_err(io)?;
        for (i, id) in self.ids.iter().enumerate() {
            let (r1, r2) = match &self.rho {
                Some((a, b)) => (a[i].to_string(), b[i].to_string()),
                None => (String::new(), String::new()),
            };
            w.write_record([id.to_string(), self.distance[i].to_string(), r1, r2]).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<ScoresTable> {
        let bad = |m: String| CliError::Data(format!("{}: {m}", path.display()));
        let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
        let (mut ids, mut distance, mut rho1, mut rho2) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut has_rho = None;
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let num = |i: usize| -> Result<f64> {
                field(i).parse().map_err(|_| bad(format!("line {}: cannot parse {:?}", line + 2, field(i))))
            };
            ids.push(field(0).parse().map_err(|_| bad(format!("line {}: bad pair_id", line + 2)))?);
            distance.push(num(1)?);
            let present = !field(2).is_empty();
            if *has_rho.get_or_insert(present) != present {
                return Err(bad(format!("line {}: robustness columns filled inconsistently", line + 2)));
            }
            if present {
                rho1.push(num(2)?);
                rho2.push(num(3)?);
            }
        }
        Ok(ScoresTable {
            ids,
            distance,
            rho: has_rho.unwrap_or(false).then_some((rho1, rho2)),
        })
    }

    fn rho(&self, path: &str) -> Result<&(Vec<f64>, Vec<f64>)> {
        self.rho
            .as_ref()
            .ok_or_else(|| CliError::Data(format!("{path} has no robustness columns; configure `spec` and rerun `stochconf score`")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoresMeta {
    pub dataset_cal_sha256: String,
    pub dataset_test_sha256: String,
    pub metric: MetricSpec,
    pub spec: Option<String>,
    pub config_sha256: String,
}

fn scores_for(d: &Dataset, cfg: &Config) -> Result<ScoresTable> {
    let m = cfg.metric.expect("required");
    let distance = scores_from_dataset(d, &m)?.scores().to_vec();
    let rho = match &cfg.spec {
        Some(spec) => {
            let r = robustness_pairs(d, &spec.formula)?;
            Some(r.into_iter().unzip())
        }
        None => None,
    };
    Ok(ScoresTable {
        ids: d.pairs().iter().map(|p| p.id).collect(),
        distance,
        rho,
    })
}

fn score(cfg: &Config, ctx: &mut Context) -> Result<()> {
    let cal_path = ctx.upstream(DATASET_CAL, Stage::Simulate)?;
    let test_path = ctx.upstream(DATASET_TEST, Stage::Simulate)?;
    let cal = load_dataset(&cal_path, Format::Json)?;
    let test = load_dataset(&test_path, Format::Json)?;
    scores_for(&cal, cfg)?.write(&ctx.path(SCORES_CAL))?;
    scores_for(&test, cfg)?.write(&ctx.path(SCORES_TEST))?;
    let meta = ScoresMeta {
        dataset_cal_sha256: sha256_file(&cal_path)?,
        dataset_test_sha256: sha256_file(&test_path)?,
        metric: cfg.metric.expect("required"),
        spec: cfg.spec.as_ref().map(|s| s.label.clone()),
        config_sha256: cfg.hash.clone(),
    };
    write_json(&ctx.path(SCORES_META), &meta)
}

/// Calibration artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundFile {
    pub distance: ConformalBound,
    pub metric: MetricSpec,
    /// Conformal lower bound on `rho(y1)` at level `delta_bar`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<RhoBound>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RhoBound {
    #[serde(with = "stochconf::serde_ext")]
    pub value: f64,
    pub delta_bar: f64,
}

fn calibrate(cfg: &Config, ctx: &mut Context) -> Result<()> {
    let scores = ScoresTable::read(&ctx.upstream(SCORES_CAL, Stage::Score)?)?;
    let distance = conformal_quantile(&ScoreSet::new(scores.distance.clone())?, cfg.delta.expect("required"))?;
    let c1 = match (cfg.delta_bar, &scores.rho) {
        (Some(delta_bar), Some((rho1, _))) => Some(RhoBound {
            value: conformal_lower_bound(rho1, delta_bar)?,
            delta_bar,
        }),
        _ => None,
    };
    let bound = BoundFile {
        distance,
        metric: cfg.metric.expect("required"),
        c1,
    };
    write_json(&ctx.path(BOUND), &bound)
}

/// Compares the dataset hashes recorded at scoring time with the current files.
fn provenance_check(ctx: &mut Context) -> Result<()> {
    let meta_path = ctx.path(SCORES_META);
    if !meta_path.exists() {
        ctx.warn(format!("{} is missing; cannot confirm that scores match the datasets", meta_path.display()));
        return Ok(());
    }
    let meta: ScoresMeta = read_json(&meta_path)?;
    for (name, recorded) in [(DATASET_CAL, &meta.dataset_cal_sha256), (DATASET_TEST, &meta.dataset_test_sha256)] {
        let p = ctx.path(name);
        if !p.exists() {
            continue;
        }
        let now = sha256_file(&p)?;
        if &now != recorded {
            ctx.warn(format!(
                "provenance: {name} has changed since the scores were computed (sha256 {now} vs recorded {recorded}); scores may be stale"
            ));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerdictFile {
    pub verdict: ConformanceVerdict,
    pub validation_score: f64,
    pub n_test: usize,
    pub warnings: Vec<String>,
}

fn check(cfg: &Config, ctx: &mut Context) -> Result<()> {
    let bound: BoundFile = read_json(&ctx.upstream(BOUND, Stage::Calibrate)?)?;
    let test = ScoresTable::read(&ctx.upstream(SCORES_TEST, Stage::Score)?)?;
    let before = ctx.warnings.len();
    provenance_check(ctx)?;
    let epsilon = cfg.epsilon.expect("required");
    let b = bound.distance;
    let verdict = ConformanceVerdict {
        epsilon,
        delta: b.delta,
        z_bar: b.z_bar,
        p_index: b.p_index,
        k: b.k,
        conformant: b.z_bar <= epsilon,
        method: Method::Def1,
        metric: bound.metric,
    };
    let file = VerdictFile {
        verdict,
        validation_score: validation_score(&ScoreSet::new(test.distance.clone())?, b.z_bar),
        n_test: test.distance.len(),
        warnings: ctx.warnings[before..].to_vec(),
    };
    write_json(&ctx.path(VERDICT), &file)
}

fn risk(cfg: &Config, ctx: &mut Context) -> Result<()> {
    let scores = ScoresTable::read(&ctx.upstream(SCORES_CAL, Stage::Score)?)?;
    let measure = cfg.risk_measure.expect("required");
    let metric = cfg.metric.expect("required");
    let (set, support) = match measure {
        RiskMeasure::Var => (ScoreSet::new(scores.distance.clone())?, None),
        RiskMeasure::Cvar => {
            let b = metric.clip_b.expect("required");
            let clipped = scores.distance.iter().map(|&z| clip(z, b)).collect();
            (ScoreSet::new(clipped)?, Some((0.0, b)))
        }
    };
    let spec = RiskSpec::new(measure, cfg.beta.expect("required"), cfg.gamma.expect("required"), support)?;
    let report = check_nonconformance_risk(&set, &spec, cfg.r.expect("required"))?;
    let assumption = match measure {
        RiskMeasure::Var => "VaR bounds assume a continuous distance distribution",
        RiskMeasure::Cvar => "CVaR computed on distances clipped to [0, clip_b]",
    };
    let body = json!({
        "risk": report,
        "k": set.len(),
        "metric": metric,
        "assumption": assumption,
    });
    write_json(&ctx.path(RISK), &body)
}

fn fraction(values: &[f64], pred: impl Fn(f64) -> bool) -> f64 {
    values.iter().filter(|&&v| pred(v)).count() as f64 / values.len() as f64
}

fn transfer(cfg: &Config, ctx: &mut Context) -> Result<()> {
    let cal = ScoresTable::read(&ctx.upstream(SCORES_CAL, Stage::Score)?)?;
    let test = ScoresTable::read(&ctx.upstream(SCORES_TEST, Stage::Score)?)?;
    let bound: BoundFile = read_json(&ctx.upstream(BOUND, Stage::Calibrate)?)?;
    let delta_bar = cfg.delta_bar.expect("required");
    let (rho1_cal, rho2_cal) = cal.rho(SCORES_CAL)?;
    let (rho1_test, rho2_test) = test.rho(SCORES_TEST)?;
    let c1 = match bound.c1 {
        Some(c) if c.delta_bar == delta_bar => c.value,
        _ => conformal_lower_bound(rho1_cal, delta_bar)?,
    };
    let epsilon = bound.distance.z_bar;
    let mut k_y_measured = None;
    let holder = cfg.holder_spec(|| {
        let k = load_dataset(ctx.path(DATASET_CAL), Format::Json)
            .map(|d| measure_holder_constants(&d).k_y)
            .unwrap_or(f64::NAN);
        k_y_measured = Some(k);
        k
    })?;
    let result = transfer_probabilistic(c1, delta_bar, epsilon, bound.distance.delta, &holder)?;
    let report = transfer_report_from_scores(rho2_test, &result)?;

    let risk_transfer = match cfg.beta {
        Some(beta) => {
            let neg = |v: &[f64]| ScoreSet::new(v.iter().map(|r| -r).collect());
            match (neg(rho1_cal), neg(rho2_cal)) {
                (Ok(n1), Ok(n2)) => {
                    let r1 = empirical_cvar(&n1, beta)?;
                    let r = empirical_cvar(&ScoreSet::new(cal.distance.clone())?, beta)?;
                    let observed = empirical_cvar(&n2, beta)?;
                    match transfer_risk(r1, r, &holder) {
                        Ok(t) => json!({
                            "beta": beta,
                            "cvar_neg_rho1": r1,
                            "cvar_distance": r,
                            "H": t.h,
                            "r2_bound": t.r2_bound,
                            "cvar_neg_rho2": observed,
                            "holds": observed <= t.r2_bound,
                        }),
                        Err(e) => json!({ "skipped": e.to_string() }),
                    }
                }
                _ => json!({ "skipped": "robustness values are not all finite" }),
            }
        }
        None => Value::Null,
    };
    let body = json!({
        "transfer": report,
        "epsilon_source": "def1",
        "delta": result.delta,
        "delta_bar": result.delta_bar,
        "vs_rho1": fraction(rho1_test, |r| r >= c1),
        "vs_distance": fraction(&test.distance, |d| d <= epsilon),
        "K_y_measured": k_y_measured,
        "risk_transfer": risk_transfer,
    });
    write_json(&ctx.path(TRANSFER), &body)
}

fn worstcase(cfg: &Config, ctx: &mut Context) -> Result<()> {
    let sys = pair_system(cfg).expect("required");
    let w = cfg.worstcase.as_ref().expect("required");
    let input_box = match &w.input_box {
        Some(b) => InputBox::new(b.lows.clone(), b.highs.clone())?,
        None => sys.init_box().clone(),
    };
    if !input_box.lows.iter().zip(&input_box.highs).zip(sys.init_box().lows.iter().zip(&sys.init_box().highs)).all(
        |((lo, hi), (slo, shi))| lo >= slo && hi <= shi,
    ) {
        return Err(ConfigError(vec!["`worstcase.box` must lie inside the system's initial set".into()]).into());
    }
    let lipschitz = match (w.known_l, w.k_l, w.delta_l) {
        (Some(l), _, _) => LipschitzSource::Known(l),
        (None, Some(k_l), Some(delta_l)) => LipschitzSource::Estimate { k_l, delta_l },
        _ => unreachable!("validated"),
    };
    let params = Def2Params {
        input_box,
        kappa: w.kappa,
        n_per_cell: w.n_per_cell,
        delta: cfg.delta.expect("required"),
        lipschitz,
        epsilon: cfg.epsilon.expect("required"),
        seed: cfg.seed.expect("required"),
    };
    let (verdict, bound) = check_def2(&params, &sys, &cfg.metric.expect("required"))?;
    let guarantee = if bound.lipschitz_estimated { "1 - delta - delta_L" } else { "1 - delta" };
    let body = json!({
        "verdict": verdict,
        "bound": bound,
        "guarantee": guarantee,
        "cells": bound.per_cell.len(),
    });
    write_json(&ctx.path(WORSTCASE), &body)
}
