use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use tsn5g::analysis::{detect_missing, FeasibilityVerdict, DEFAULT_CV_THRESHOLD};
use tsn5g::sim::{self, SimOutput};
use tsn5g::{Duration, Instant, ObservationPoint};

use crate::capture::{read_capture, write_capture};
use crate::config::ScenarioConfig;
use crate::error::CliError;
use crate::report::{periodicity_by_point, render_periodicity, write_periodicity_csv, RunReport};

pub fn simulate(cfg: &ScenarioConfig) -> Result<(SimOutput, RunReport), CliError> {
    let out = sim::run(&cfg.scenario()).map_err(|e| CliError::Validation(vec![e.to_string()]))?;
    let report = RunReport::new(cfg, &out);
    Ok((out, report))
}

#[derive(Debug)]
pub struct RunArtifacts {
    pub report: RunReport,
    pub capture_path: PathBuf,
    pub report_path: PathBuf,
}

impl RunArtifacts {
    pub fn render(&self) -> String {
        format!(
            "{}capture: {}\nreport: {}\n",
            self.report.summary(),
            self.capture_path.display(),
            self.report_path.display()
        )
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn cmd_run(config: &Path, seed: Option<u64>, out_dir: &Path) -> Result<RunArtifacts, CliError> {
    let mut cfg = ScenarioConfig::load(config)?;
    if let Some(seed) = seed {
        cfg = cfg.with_seed(seed);
    }
    let (out, report) = simulate(&cfg)?;
    std::fs::create_dir_all(out_dir)?;
    let capture_path = out_dir.join(format!("{}.capture.csv", cfg.name));
    let report_path = out_dir.join(format!("{}.report.csv", cfg.name));
    write_capture(create(&capture_path)?, &out.captures)?;
    write_periodicity_csv(create(&report_path)?, &report.points)?;
    Ok(RunArtifacts {
        report,
        capture_path,
        report_path,
    })
}

pub fn cmd_analyze(capture: &Path, period: Duration, tol: Duration) -> Result<String, CliError> {
    if period.is_zero() {
        return Err(CliError::Usage("--period must be positive".into()));
    }
    let file =
        File::open(capture).map_err(|e| CliError::Parse(format!("{}: {e}", capture.display())))?;
    let captures =
        read_capture(file).map_err(|e| e.with_context(&capture.display().to_string()))?;
    let rows = periodicity_by_point(&captures, period, tol);
    let mut text = render_periodicity(&rows, DEFAULT_CV_THRESHOLD);
    let seqs = |p: ObservationPoint| {
        let mut v: Vec<u64> = captures.at(p).iter().map(|r| r.seq).collect();
        v.sort_unstable();
        v
    };
    let pairs = [
        (
            ObservationPoint::GatewayIngress,
            ObservationPoint::GatewayEgress,
        ),
        (
            ObservationPoint::GatewayEgress,
            ObservationPoint::CoreArrival,
        ),
    ];
    for (up, down) in pairs {
        let lost = detect_missing(&seqs(up), &seqs(down));
        let _ = writeln!(
            text,
            "unmatched {}->{}: {}",
            up.as_str(),
            down.as_str(),
            lost.len()
        );
    }
    Ok(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowMode {
    /// Scale every window offset, length and the epoch with the base period.
    #[default]
    Proportional,
    /// Keep windows and epoch as configured.
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepMeasurement {
    pub feasibility: FeasibilityVerdict,
    pub cv: Option<f64>,
    pub fraction_within_tol: Option<f64>,
    pub jitter: Option<Duration>,
    pub missing_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub base_period: Duration,
    pub window: Duration,
    pub outcome: Result<SweepMeasurement, Vec<String>>,
}

fn scale(d: Duration, num: Duration, den: Duration) -> Duration {
    let scaled = u128::from(d.as_nanos()) * u128::from(num.as_nanos()) / u128::from(den.as_nanos());
    Duration::from_nanos(u64::try_from(scaled).unwrap_or(u64::MAX))
}

/// The scenario with its schedule rebuilt around `base`.
pub fn rescale(cfg: &ScenarioConfig, base: Duration, mode: WindowMode) -> ScenarioConfig {
    let mut cfg = cfg.clone();
    let old = cfg.gateway.schedule.clone();
    let mut schedule = old.clone();
    schedule.base_period = base;
    if mode == WindowMode::Proportional && !old.base_period.is_zero() {
        for w in &mut schedule.windows {
            w.offset = scale(w.offset, base, old.base_period);
            w.duration = scale(w.duration, base, old.base_period);
        }
        schedule.epoch = Instant::ZERO + scale(old.epoch - Instant::ZERO, base, old.base_period);
    }
    if cfg.analysis.expected_period == Some(old.base_period) {
        cfg.analysis.expected_period = None;
    }
    cfg.gateway.schedule = schedule;
    cfg
}

fn sweep_row(cfg: &ScenarioConfig, base: Duration, mode: WindowMode) -> SweepRow {
    let cfg = rescale(cfg, base, mode);
    let window = cfg
        .gateway
        .schedule
        .windows
        .iter()
        .map(|w| w.duration)
        .max()
        .unwrap_or(Duration::ZERO);
    let errors = cfg.validate();
    let outcome = if errors.is_empty() {
        simulate(&cfg)
            .map(|(_, report)| {
                let stats = report.core().stats;
                SweepMeasurement {
                    feasibility: report.feasibility,
                    cv: stats.map(|s| s.cv),
                    fraction_within_tol: stats.map(|s| s.fraction_within_tol),
                    jitter: stats.map(|s| s.jitter),
                    missing_count: report.missing_count,
                }
            })
            .map_err(|e| vec![e.to_string()])
    } else {
        Err(errors)
    };
    SweepRow {
        base_period: base,
        window,
        outcome,
    }
}

/// One row per base period, in input order. `jobs = Some(1)` runs
/// sequentially; `None` uses the global rayon pool.
pub fn sweep(
    cfg: &ScenarioConfig,
    bases: &[Duration],
    mode: WindowMode,
    jobs: Option<usize>,
) -> Result<Vec<SweepRow>, CliError> {
    match jobs {
        Some(1) => Ok(bases.iter().map(|&b| sweep_row(cfg, b, mode)).collect()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(pool.install(|| bases.par_iter().map(|&b| sweep_row(cfg, b, mode)).collect()))
        }
        None => Ok(bases.par_iter().map(|&b| sweep_row(cfg, b, mode)).collect()),
    }
}

pub const SWEEP_HEADER: [&str; 10] = [
    "base_ns",
    "window_ns",
    "status",
    "class",
    "margin_ns",
    "cv",
    "fraction_within_tol",
    "jitter_ns",
    "missing_count",
    "detail",
];

pub fn write_sweep_csv<W: std::io::Write>(out: W, rows: &[SweepRow]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for row in rows {
        let mut record = vec![
            row.base_period.as_nanos().to_string(),
            row.window.as_nanos().to_string(),
        ];
        match &row.outcome {
            Ok(m) => record.extend([
                "ok".to_string(),
                m.feasibility.class.to_string(),
                m.feasibility.margin_ns.to_string(),
                opt(m.cv.map(|v| format!("{v:.6}"))),
                opt(m.fraction_within_tol.map(|v| format!("{v:.6}"))),
                opt(m.jitter.map(|d| d.as_nanos().to_string())),
                m.missing_count.to_string(),
                String::new(),
            ]),
            Err(errors) => {
                record.extend(["invalid".to_string()]);
                record.extend(std::iter::repeat_n(String::new(), 6));
                record.push(errors.join("; "));
            }
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub struct SweepArtifacts {
    pub rows: Vec<SweepRow>,
    pub sweep_path: PathBuf,
    pub csv: String,
}

pub fn cmd_sweep(
    config: &Path,
    bases: &[Duration],
    mode: WindowMode,
    seed: Option<u64>,
    jobs: Option<usize>,
    out_dir: &Path,
) -> Result<SweepArtifacts, CliError> {
    if bases.is_empty() {
        return Err(CliError::Usage("--bases needs at least one period".into()));
    }
    if let Some(b) = bases.iter().find(|b| b.is_zero()) {
        return Err(CliError::Usage(format!("base period {b} must be positive")));
    }
    let mut cfg = ScenarioConfig::load(config)?;
    if let Some(seed) = seed {
        cfg = cfg.with_seed(seed);
    }
    let rows = sweep(&cfg, bases, mode, jobs)?;
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, &rows)?;
    std::fs::create_dir_all(out_dir)?;
    let sweep_path = out_dir.join(format!("{}.sweep.csv", cfg.name));
    std::fs::write(&sweep_path, &buf)?;
    let csv = String::from_utf8(buf).expect("csv output is utf-8");
    Ok(SweepArtifacts {
        rows,
        sweep_path,
        csv,
    })
}
