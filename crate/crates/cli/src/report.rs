//! Merging stage artifacts into one report, with score histograms as CSV data.

use std::path::Path;

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::{Config, Source};
use crate::stages::{read_json, write_json, CliError, Context, Result, ScoresTable};
use crate::stages::{BOUND, REPORT, RISK, SCORES_CAL, SCORES_TEST, TRANSFER, VERDICT, WORSTCASE};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width histogram over the finite values; a constant sample gets a single bin.
pub fn histogram(values: &[f64], bins: usize) -> Histogram {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Histogram { edges: vec![], counts: vec![] };
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Histogram {
            edges: vec![lo, hi],
            counts: vec![finite.len()],
        };
    }
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| lo + width * i as f64).collect();
    edges.push(hi);
    let mut counts = vec![0; bins];
    for v in finite {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    Histogram { edges, counts }
}

fn write_histogram(path: &Path, h: &Histogram) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    w.write_record(["bin_lo", "bin_hi", "count"]).map_err(io)?;
    for (i, c) in h.counts.iter().enumerate() {
        w.write_record([h.edges[i].to_string(), h.edges[i + 1].to_string(), c.to_string()])
            .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn artifact(ctx: &Context, name: &str) -> Result<Value> {
    let p = ctx.path(name);
    if p.exists() {
        read_json(&p)
    } else {
        Ok(Value::Null)
    }
}

pub fn write_report(cfg: &Config, ctx: &mut Context) -> Result<()> {
    let mut histograms = Map::new();
    for (split, file) in [("cal", SCORES_CAL), ("test", SCORES_TEST)] {
        let p = ctx.path(file);
        if !p.exists() {
            continue;
        }
        let t = ScoresTable::read(&p)?;
        let mut series = vec![("distance", t.distance.clone())];
        if let Some((r1, r2)) = &t.rho {
            series.push(("rho1", r1.clone()));
            series.push(("rho2", r2.clone()));
        }
        for (name, values) in series {
            let key = format!("{name}_{split}");
            let h = histogram(&values, cfg.bins);
            let csv_name = format!("hist_{key}.csv");
            write_histogram(&ctx.path(&csv_name), &h)?;
            histograms.insert(key, json!({ "file": csv_name, "edges": h.edges, "counts": h.counts }));
        }
    }

    let verdict = artifact(ctx, VERDICT)?;
    let transfer = artifact(ctx, TRANSFER)?;
    let warnings = verdict.get("warnings").cloned().unwrap_or(json!([]));
    let stand_in = matches!(cfg.source, Some(Source::System(_)));
    let report = json!({
        "provenance": {
            "config_sha256": cfg.hash,
            "seed": cfg.seed,
            "version": env!("CARGO_PKG_VERSION"),
            "mode": format!("{:?}", cfg.mode).to_lowercase(),
            "note": if stand_in {
                "built-in systems use stand-in controllers; absolute bounds are not comparable to other controller designs"
            } else {
                "scores computed from user-supplied trajectories"
            },
        },
        "bound": artifact(ctx, BOUND)?,
        "verdict": verdict.get("verdict").cloned().unwrap_or(Value::Null),
        "validation_scores": {
            "distance": verdict.get("validation_score").cloned().unwrap_or(Value::Null),
            "rho1": transfer.get("vs_rho1").cloned().unwrap_or(Value::Null),
        },
        "risk": artifact(ctx, RISK)?,
        "transfer": transfer,
        "worstcase": artifact(ctx, WORSTCASE)?,
        "histograms": histograms,
        "warnings": warnings,
    });
    write_json(&ctx.path(REPORT), &report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_counts_everything() {
        let v: Vec<f64> = (0..100).map(|i| i as f64 / 10.0).collect();
        let h = histogram(&v, 7);
        assert_eq!(h.counts.iter().sum::<usize>(), 100);
        assert_eq!(h.edges.len(), 8);
        assert_eq!(*h.edges.last().unwrap(), 9.9);
        assert_eq!(histogram(&[2.0, 2.0], 5).counts, vec![2]);
    }
}
