//! Per-run reports: periodicity per tap, predicted feasibility and loss.

use std::fmt::Write as _;
use std::io::Write;

use tsn5g::analysis::{
    analyze_tap, detect_missing, feasibility, FeasibilityVerdict, PeriodicityReport,
};
use tsn5g::sim::{CaptureSet, Counters, SimOutput};
use tsn5g::time::serialization_time;
use tsn5g::{Duration, Instant, ObservationPoint};

use crate::config::ScenarioConfig;
use crate::error::CliError;

pub const REPORT_HEADER: [&str; 11] = [
    "point",
    "n_cycles",
    "expected_ns",
    "tol_ns",
    "mean_ns",
    "min_ns",
    "max_ns",
    "jitter_ns",
    "cv",
    "fraction_within_tol",
    "missing_cycles",
];

pub fn periodicity_by_point(
    captures: &CaptureSet,
    expected: Duration,
    tol: Duration,
) -> Vec<(ObservationPoint, PeriodicityReport)> {
    ObservationPoint::ALL
        .iter()
        .map(|&p| (p, analyze_tap(captures.at(p), expected, tol)))
        .collect()
}

pub fn write_periodicity_csv<W: Write>(
    out: W,
    rows: &[(ObservationPoint, PeriodicityReport)],
) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for (point, r) in rows {
        let mut record = vec![
            point.as_str().to_string(),
            r.n_cycles.to_string(),
            r.expected_period.as_nanos().to_string(),
            r.tolerance.as_nanos().to_string(),
        ];
        match r.stats {
            Some(s) => record.extend([
                s.mean.as_nanos().to_string(),
                s.min.as_nanos().to_string(),
                s.max.as_nanos().to_string(),
                s.jitter.as_nanos().to_string(),
                format!("{:.6}", s.cv),
                format!("{:.6}", s.fraction_within_tol),
            ]),
            None => record.extend(std::iter::repeat_n(String::new(), 6)),
        }
        record.push(r.missing_cycles.to_string());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Plain-text rendering used by `analyze`.
pub fn render_periodicity(
    rows: &[(ObservationPoint, PeriodicityReport)],
    cv_threshold: f64,
) -> String {
    let mut s = String::new();
    for (point, r) in rows {
        let _ = write!(s, "{}: cycles={}", point.as_str(), r.n_cycles);
        match r.stats {
            Some(st) => {
                let _ = write!(
                    s,
                    ", mean={}, jitter={}, cv={:.6}, fraction_within_tol={:.6}",
                    st.mean, st.jitter, st.cv, st.fraction_within_tol
                );
            }
            None => s.push_str(", too few cycles for statistics"),
        }
        let _ = writeln!(
            s,
            ", missing_cycles={}, periodic={}",
            r.missing_cycles,
            if r.is_deterministic(cv_threshold) {
                "yes"
            } else {
                "no"
            }
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub name: String,
    pub seed: u64,
    pub base_period: Duration,
    pub window: Duration,
    pub d_max: Duration,
    pub feasibility: FeasibilityVerdict,
    pub points: Vec<(ObservationPoint, PeriodicityReport)>,
    pub counters: Counters,
    /// Frames that left the gateway early enough to have reached the core
    /// before the horizon, yet never did.
    pub missing_count: u64,
    pub cv_threshold: f64,
}

impl RunReport {
    pub fn new(cfg: &ScenarioConfig, out: &SimOutput) -> Self {
        let schedule = &cfg.gateway.schedule;
        RunReport {
            name: cfg.name.clone(),
            seed: cfg.seed,
            base_period: schedule.base_period,
            window: schedule
                .windows
                .iter()
                .map(|w| w.duration)
                .max()
                .unwrap_or(Duration::ZERO),
            d_max: cfg.analysis.d_max,
            feasibility: feasibility(schedule, cfg.analysis.d_max),
            points: periodicity_by_point(&out.captures, cfg.expected_period(), cfg.tolerance()),
            counters: out.counters,
            missing_count: settled_missing(cfg, &out.captures),
            cv_threshold: cfg.analysis.cv_threshold,
        }
    }

    pub fn point(&self, point: ObservationPoint) -> &PeriodicityReport {
        &self
            .points
            .iter()
            .find(|(p, _)| *p == point)
            .expect("every point is reported")
            .1
    }

    pub fn core(&self) -> &PeriodicityReport {
        self.point(ObservationPoint::CoreArrival)
    }

    pub fn core_cv(&self) -> Option<f64> {
        self.core().stats.map(|s| s.cv)
    }

    pub fn summary(&self) -> String {
        let core = self.core();
        let mut s = String::new();
        let _ = writeln!(s, "scenario={} seed={}", self.name, self.seed);
        let _ = writeln!(
            s,
            "schedule: base={} window={} d_max={} margin={}ns",
            self.base_period, self.window, self.d_max, self.feasibility.margin_ns
        );
        let jitter = core
            .stats
            .map_or("n/a".to_string(), |st| st.jitter.to_string());
        let _ = write!(
            s,
            "summary: class={}, jitter={}",
            self.feasibility.class, jitter
        );
        if let Some(st) = core.stats {
            let _ = write!(
                s,
                ", cv={:.6}, fraction_within_tol={:.6}",
                st.cv, st.fraction_within_tol
            );
        }
        let _ = writeln!(
            s,
            ", missing_cycles={}, missing_count={}, periodic={}",
            core.missing_cycles,
            self.missing_count,
            if core.is_deterministic(self.cv_threshold) {
                "yes"
            } else {
                "no"
            }
        );
        let c = &self.counters;
        let _ = writeln!(
            s,
            "frames: generated={} egressed={} delivered={} dropped_gateway={} dropped_bridge={} in_flight={} queued={}",
            c.generated,
            c.egressed,
            c.delivered,
            c.dropped_gateway,
            c.dropped_bridge,
            c.in_flight_at_horizon,
            c.queued_at_horizon
        );
        s
    }
}

fn settled_missing(cfg: &ScenarioConfig, captures: &CaptureSet) -> u64 {
    let tx_max = serialization_time(u64::from(cfg.gateway.mtu), cfg.gateway.link_rate_bps, true)
        .unwrap_or(Duration::ZERO);
    let latest = cfg.worst_bridge_delay() + tx_max;
    let horizon = Instant::ZERO + cfg.horizon;
    let mut sent: Vec<u64> = captures
        .gateway_egress
        .iter()
        .filter(|r| r.t + latest < horizon)
        .map(|r| r.seq)
        .collect();
    let mut arrived: Vec<u64> = captures.core_arrival.iter().map(|r| r.seq).collect();
    sent.sort_unstable();
    arrived.sort_unstable();
    detect_missing(&sent, &arrived).len() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use tsn5g::sim::CaptureRecord;

    fn rec(seq: u64, t_ms: u64) -> CaptureRecord {
        CaptureRecord {
            seq,
            stream: None,
            t: Instant::from_nanos(t_ms * 1_000_000),
            size_bytes: 64,
        }
    }

    #[test]
    fn csv_leaves_stats_blank_without_cycles() {
        let captures = CaptureSet {
            gateway_ingress: vec![rec(0, 0), rec(1, 100), rec(2, 200)],
            gateway_egress: vec![rec(0, 5)],
            core_arrival: Vec::new(),
        };
        let ms100 = Duration::from_millis(100).unwrap();
        let rows = periodicity_by_point(&captures, ms100, Duration::ZERO);
        let mut buf = Vec::new();
        write_periodicity_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], REPORT_HEADER.join(","));
        assert_eq!(
            lines[1],
            "gateway_ingress,3,100000000,0,100000000,100000000,100000000,0,0.000000,1.000000,0"
        );
        assert_eq!(lines[2], "gateway_egress,1,100000000,0,,,,,,,0");
        assert_eq!(lines[3], "core_arrival,0,100000000,0,,,,,,,0");
    }

    #[test]
    fn rendering_flags_periodicity() {
        let captures = CaptureSet {
            core_arrival: vec![rec(0, 0), rec(1, 100), rec(2, 230)],
            ..CaptureSet::default()
        };
        let rows = periodicity_by_point(
            &captures,
            Duration::from_millis(100).unwrap(),
            Duration::ZERO,
        );
        let text = render_periodicity(&rows, 0.05);
        assert!(text.contains("gateway_ingress: cycles=0, too few cycles"));
        assert!(
            text.lines().last().unwrap().ends_with("periodic=no"),
            "{text}"
        );
    }
}
