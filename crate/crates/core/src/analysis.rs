//! Determinism metrics over capture taps and the global-schedule
//! feasibility predictor.
//!
//! "Pseudo-deterministic" has no published definition; the thresholds used
//! here (coefficient of variation and fraction of intervals within a
//! tolerance) are this crate's operationalization.

use std::fmt;

use crate::sim::CaptureRecord;
use crate::tas::GateSchedule;
use crate::time::{Duration, Instant};

/// Coefficient-of-variation ceiling for calling a measured tap deterministic.
pub const DEFAULT_CV_THRESHOLD: f64 = 0.05;

/// First-per-bucket anchors of a tap, with the indices of empty buckets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CycleAnchors {
    pub anchors: Vec<Instant>,
    pub missing_buckets: Vec<u64>,
}

/// Groups sorted timestamps into `base_period` buckets measured from the
/// first one and keeps the earliest timestamp of each bucket.
pub fn cycle_anchors(times: &[Instant], base_period: Duration) -> CycleAnchors {
    let Some(&first) = times.first() else {
        return CycleAnchors::default();
    };
    let base = base_period.as_nanos().max(1);
    let mut out = CycleAnchors::default();
    let mut last_bucket: Option<u64> = None;
    for &t in times {
        let bucket = t.duration_since(first).as_nanos() / base;
        match last_bucket {
            Some(b) if b == bucket => continue,
            Some(b) => out.missing_buckets.extend(b + 1..bucket),
            None => {}
        }
        out.anchors.push(t);
        last_bucket = Some(bucket);
    }
    out
}

pub fn record_times(records: &[CaptureRecord]) -> Vec<Instant> {
    records.iter().map(|r| r.t).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalStats {
    pub mean: Duration,
    pub min: Duration,
    pub max: Duration,
    /// max - min of the inter-anchor intervals.
    pub jitter: Duration,
    /// Population standard deviation over mean.
    pub cv: f64,
    pub fraction_within_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicityReport {
    pub expected_period: Duration,
    pub tolerance: Duration,
    pub n_cycles: u64,
    /// Absent with fewer than two anchors.
    pub stats: Option<IntervalStats>,
    pub missing_cycles: u64,
}

impl PeriodicityReport {
    /// Whether the tap looks deterministic under the given cv ceiling.
    pub fn is_deterministic(&self, cv_threshold: f64) -> bool {
        self.stats
            .is_some_and(|s| s.cv < cv_threshold && s.fraction_within_tol >= 1.0)
            && self.missing_cycles == 0
    }
}

/// Interval statistics over successive anchors. An interval spanning `n`
/// expected periods counts `n - 1` missing cycles.
pub fn periodicity(anchors: &[Instant], expected: Duration, tol: Duration) -> PeriodicityReport {
    let intervals: Vec<u64> = anchors
        .windows(2)
        .map(|w| w[1].duration_since(w[0]).as_nanos())
        .collect();
    let n_cycles = anchors.len() as u64;
    let missing_cycles = if expected.is_zero() {
        0
    } else {
        let e = expected.as_nanos();
        intervals
            .iter()
            .map(|iv| ((iv + e / 2) / e).saturating_sub(1))
            .sum()
    };
    let stats = (!intervals.is_empty()).then(|| {
        let n = intervals.len() as f64;
        let sum: u128 = intervals.iter().map(|&v| u128::from(v)).sum();
        let mean = sum as f64 / n;
        let var = intervals
            .iter()
            .map(|&v| (v as f64 - mean).powi(2))
            .sum::<f64>()
            / n;
        let min = *intervals.iter().min().expect("non-empty");
        let max = *intervals.iter().max().expect("non-empty");
        let cv = if min == max || mean == 0.0 {
            0.0
        } else {
            var.sqrt() / mean
        };
        let e = expected.as_nanos();
        let within = intervals
            .iter()
            .filter(|&&v| v.abs_diff(e) <= tol.as_nanos())
            .count();
        IntervalStats {
            mean: Duration::from_nanos((sum / intervals.len() as u128) as u64),
            min: Duration::from_nanos(min),
            max: Duration::from_nanos(max),
            jitter: Duration::from_nanos(max - min),
            cv,
            fraction_within_tol: within as f64 / n,
        }
    });
    PeriodicityReport {
        expected_period: expected,
        tolerance: tol,
        n_cycles,
        stats,
        missing_cycles,
    }
}

/// Anchors a tap and computes its periodicity in one go.
pub fn analyze_tap(
    records: &[CaptureRecord],
    expected: Duration,
    tol: Duration,
) -> PeriodicityReport {
    let mut times = record_times(records);
    times.sort();
    let anchored = cycle_anchors(&times, expected);
    periodicity(&anchored.anchors, expected, tol)
}

/// Sequence numbers present in `upstream` but absent from `downstream`.
/// Both inputs must be sorted ascending.
pub fn detect_missing(upstream: &[u64], downstream: &[u64]) -> Vec<u64> {
    let mut missing = Vec::new();
    let mut rest = downstream.iter().peekable();
    for &seq in upstream {
        while rest.next_if(|&&d| d < seq).is_some() {}
        if rest.next_if(|&&d| d == seq).is_none() {
            missing.push(seq);
        }
    }
    missing
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeasibilityClass {
    Infeasible,
    Marginal,
    Deterministic,
}

impl fmt::Display for FeasibilityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeasibilityClass::Deterministic => "Deterministic",
            FeasibilityClass::Marginal => "Marginal",
            FeasibilityClass::Infeasible => "Infeasible",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeasibilityVerdict {
    /// Signed slack in nanoseconds.
    pub margin_ns: i64,
    pub class: FeasibilityClass,
}

/// Slack left in a cycle once the transmit window and the worst-case 5G
/// delay are paid: `base - window - d_max`. The marginal band is `d_max`
/// wide (a heuristic, not a derived bound).
pub fn feasibility_for_window(
    base: Duration,
    window: Duration,
    d_max: Duration,
) -> FeasibilityVerdict {
    let margin_ns = base.as_nanos() as i64 - window.as_nanos() as i64 - d_max.as_nanos() as i64;
    let class = if margin_ns <= 0 {
        FeasibilityClass::Infeasible
    } else if margin_ns > d_max.as_nanos() as i64 {
        FeasibilityClass::Deterministic
    } else {
        FeasibilityClass::Marginal
    };
    FeasibilityVerdict { margin_ns, class }
}

/// Verdict for a schedule: each window is judged against the base period and
/// the tightest one wins. A schedule without windows is infeasible.
pub fn feasibility(schedule: &GateSchedule, d_max: Duration) -> FeasibilityVerdict {
    schedule
        .windows
        .iter()
        .map(|w| feasibility_for_window(schedule.base_period, w.duration, d_max))
        .min_by_key(|v| v.margin_ns)
        .unwrap_or(FeasibilityVerdict {
            margin_ns: -(d_max.as_nanos() as i64),
            class: FeasibilityClass::Infeasible,
        })
}
