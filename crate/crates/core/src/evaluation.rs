//! Scoring: gain ratios against the implied-delta benchmark, reports
//! bucketed by delta and maturity, and a least-squares constant-correction
//! oracle that bounds what any per-bucket constant shift could achieve.
//!
//! The gain ratio of a hedging strategy over a sample set is
//! `1 - SSE(strategy) / SSE(benchmark)` where the benchmark hedges with the
//! implied Black-Scholes delta. Positive gain means lower squared hedging
//! error than the benchmark.

use crate::learner::{LearnerError, TrainedModel};
use crate::pipeline::{DeltaBucket, HedgeSample, TtmBucket};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty sample set")]
    Empty,
    #[error("degenerate benchmark: zero hedging error on {0} samples; gain ratio undefined")]
    DegenerateBenchmark(usize),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

/// Minimum samples for a bucket's gain to be considered stable.
pub const LOW_COUNT_THRESHOLD: usize = 30;

/// `1 - sse_model / sse_benchmark`. Errors if the benchmark SSE is zero.
pub fn gain_ratio(sse_model: f64, sse_benchmark: f64, n: usize) -> Result<f64, EvalError> {
    if n == 0 {
        return Err(EvalError::Empty);
    }
    if sse_benchmark <= 0.0 {
        return Err(EvalError::DegenerateBenchmark(n));
    }
    Ok(1.0 - sse_model / sse_benchmark)
}

/// Gain and supporting sums for one slice of the sample set.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SliceGain {
    pub n: usize,
    pub sse_model: f64,
    pub sse_benchmark: f64,
    pub gain: f64,
    /// Fewer than [`LOW_COUNT_THRESHOLD`] samples.
    pub low_count: bool,
}

/// Full scoring of one strategy on one sample set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GainReport {
    pub overall: SliceGain,
    pub per_bucket: BTreeMap<DeltaBucket, SliceGain>,
    pub per_ttm: BTreeMap<TtmBucket, SliceGain>,
}

fn slice_gain(sse_model: f64, sse_benchmark: f64, n: usize) -> Result<SliceGain, EvalError> {
    Ok(SliceGain {
        n,
        sse_model,
        sse_benchmark,
        gain: gain_ratio(sse_model, sse_benchmark, n)?,
        low_count: n < LOW_COUNT_THRESHOLD,
    })
}

/// Scores explicit hedge ratios sample by sample and aggregates overall,
/// per delta bucket, and per maturity bucket.
pub fn bucketed_report(samples: &[HedgeSample], ratios: &[f64]) -> Result<GainReport, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::Empty);
    }
    assert_eq!(samples.len(), ratios.len());
    let mut by_bucket: BTreeMap<DeltaBucket, (f64, f64, usize)> = BTreeMap::new();
    let mut by_ttm: BTreeMap<TtmBucket, (f64, f64, usize)> = BTreeMap::new();
    for (s, &r) in samples.iter().zip(ratios) {
        let em = s.dv - r * s.ds;
        let sm = em * em;
        let sb = s.benchmark_sq_error();
        for acc in [
            by_bucket.entry(s.bucket).or_insert((0.0, 0.0, 0)),
            by_ttm.entry(s.ttm_bucket).or_insert((0.0, 0.0, 0)),
        ] {
            acc.0 += sm;
            acc.1 += sb;
            acc.2 += 1;
        }
    }
    // The overall SSEs are by definition the sums of the per-delta-bucket
    // SSEs, so partition additivity over delta buckets is exact.
    let mut total = (0.0, 0.0, 0usize);
    for (sm, sb, n) in by_bucket.values() {
        total.0 += sm;
        total.1 += sb;
        total.2 += n;
    }
    let overall = slice_gain(total.0, total.1, total.2)?;
    let per_bucket = by_bucket
        .into_iter()
        .map(|(k, (sm, sb, n))| slice_gain(sm, sb, n).map(|g| (k, g)))
        .collect::<Result<_, _>>()?;
    let per_ttm = by_ttm
        .into_iter()
        .map(|(k, (sm, sb, n))| slice_gain(sm, sb, n).map(|g| (k, g)))
        .collect::<Result<_, _>>()?;
    Ok(GainReport { overall, per_bucket, per_ttm })
}

/// Scores a trained model on a sample set.
pub fn score_model(model: &TrainedModel, samples: &[HedgeSample]) -> Result<GainReport, EvalError> {
    let ratios = model.predict_hedge(samples)?;
    bucketed_report(samples, &ratios)
}

/// Least-squares constant correction: the `c` minimizing
/// `sum (dv - (delta_bs + c) ds)^2`, in closed form
/// `c = sum((dv - delta_bs*ds)*ds) / sum(ds^2)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OlsOracle {
    pub global_c: f64,
    pub global_gain: f64,
    pub per_bucket: BTreeMap<DeltaBucket, BucketOls>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BucketOls {
    pub n: usize,
    pub c: f64,
    pub gain: f64,
}

fn ols_c(samples: &[&HedgeSample]) -> f64 {
    let num: f64 = samples.iter().map(|s| (s.dv - s.delta_bs() * s.ds) * s.ds).sum();
    let den: f64 = samples.iter().map(|s| s.ds * s.ds).sum();
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn sse_with_c(samples: &[&HedgeSample], c: f64) -> f64 {
    samples
        .iter()
        .map(|s| {
            let e = s.dv - (s.delta_bs() + c) * s.ds;
            e * e
        })
        .sum()
}

/// Fits the constant-correction oracle globally and per delta bucket, with
/// the gain each constant would achieve on the same samples.
pub fn ols_oracle(samples: &[HedgeSample]) -> Result<OlsOracle, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::Empty);
    }
    let refs: Vec<&HedgeSample> = samples.iter().collect();
    let sse_bench: f64 = samples.iter().map(|s| s.benchmark_sq_error()).sum();
    let global_c = ols_c(&refs);
    let global_gain = gain_ratio(sse_with_c(&refs, global_c), sse_bench, samples.len())?;

    let mut grouped: BTreeMap<DeltaBucket, Vec<&HedgeSample>> = BTreeMap::new();
    for s in samples {
        grouped.entry(s.bucket).or_default().push(s);
    }
    let per_bucket = grouped
        .into_iter()
        .map(|(k, group)| {
            let c = ols_c(&group);
            let bench: f64 = group.iter().map(|s| s.benchmark_sq_error()).sum();
            let gain = gain_ratio(sse_with_c(&group, c), bench, group.len())?;
            Ok((k, BucketOls { n: group.len(), c, gain }))
        })
        .collect::<Result<_, EvalError>>()?;
    Ok(OlsOracle { global_c, global_gain, per_bucket })
}

/// Human-readable report: overall gain, then one row per delta bucket and
/// per maturity bucket, gains to four decimals, low-count buckets marked.
pub fn format_report(name: &str, report: &GainReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "=== {name} ===");
    let _ = writeln!(
        out,
        "overall: gain {:+.4}  (n = {}, benchmark sse {:.6e})",
        report.overall.gain, report.overall.n, report.overall.sse_benchmark
    );
    let _ = writeln!(out, "{:>8} {:>10} {:>8}", "bucket", "gain", "n");
    for (bucket, g) in &report.per_bucket {
        let mark = if g.low_count { " *" } else { "" };
        let _ = writeln!(out, "{:>8} {:>+10.4} {:>8}{mark}", bucket.to_string(), g.gain, g.n);
    }
    let _ = writeln!(out, "{:>8} {:>10} {:>8}", "ttm", "gain", "n");
    for (ttm, g) in &report.per_ttm {
        let mark = if g.low_count { " *" } else { "" };
        let _ = writeln!(out, "{:>8} {:>+10.4} {:>8}{mark}", ttm.to_string(), g.gain, g.n);
    }
    if report.per_bucket.values().chain(report.per_ttm.values()).any(|g| g.low_count) {
        let _ = writeln!(out, "* fewer than {LOW_COUNT_THRESHOLD} samples");
    }
    out
}

/// Full-precision machine-readable report rows:
/// `slice,key,n,sse_model,sse_benchmark,gain,low_count`.
pub fn report_csv(report: &GainReport) -> String {
    let mut out = String::from("slice,key,n,sse_model,sse_benchmark,gain,low_count\n");
    let mut row = |slice: &str, key: &str, g: &SliceGain| {
        let _ = writeln!(
            out,
            "{slice},{key},{},{:.16e},{:.16e},{:.16e},{}",
            g.n, g.sse_model, g.sse_benchmark, g.gain, g.low_count
        );
    };
    row("overall", "all", &report.overall);
    for (bucket, g) in &report.per_bucket {
        row("delta_bucket", &bucket.to_string(), g);
    }
    for (ttm, g) in &report.per_ttm {
        row("ttm_bucket", &ttm.to_string(), g);
    }
    out
}
