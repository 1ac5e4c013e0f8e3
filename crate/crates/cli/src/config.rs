//! Scenario files.
//!
//! Scenarios are TOML documents. Every duration is a string with an explicit
//! unit (`"200ms"`, `"12.5ms"`, `"500us"`, `"10s"`); bare numbers are
//! rejected so a value can never silently change magnitude.

use std::path::Path;

use serde::de::{self, Deserializer};
use serde::Deserialize;

use tsn5g::analysis::DEFAULT_CV_THRESHOLD;
use tsn5g::fiveg::{
    BridgeModel, DelayError, DelayModel, OverflowPolicy, TddConfig, TddPattern,
    DEFAULT_LOGNORMAL_SHAPE,
};
use tsn5g::frame::DEFAULT_MTU;
use tsn5g::gateway::{GatewayConfig, StreamRule, DEFAULT_LINK_RATE_BPS};
use tsn5g::sim::{Scenario, ScenarioError, TrafficSpec};
use tsn5g::tas::{GateSchedule, GateWindow, QueueLimit, QueueSet};
use tsn5g::{Duration, Instant, QueueId, StreamId};

use crate::error::CliError;

/// Duration field that must carry a unit suffix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dur(Duration);

impl<'de> Deserialize<'de> for Dur {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse::<Duration>().map(Dur).map_err(de::Error::custom)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    seed: u64,
    horizon: Dur,
    traffic: RawTraffic,
    gateway: RawGateway,
    bridge: RawBridge,
    analysis: RawAnalysis,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawTraffic {
    Periodic {
        dst: String,
        frame_size: u32,
        period: Dur,
        count: u64,
        phase: Dur,
    },
    Cbr {
        dst: String,
        frame_size: u32,
        rate_bps: u64,
        duration: Dur,
        jitter: Dur,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGateway {
    link_rate_bps: Option<u64>,
    mtu: Option<u32>,
    best_effort_queue: Option<u8>,
    /// Per-queue tail-drop depth; absent means unbounded.
    queue_capacity: Option<usize>,
    schedule: RawSchedule,
    #[serde(default)]
    streams: Vec<RawStream>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    base_period: Dur,
    epoch: Option<Dur>,
    windows: Vec<RawWindow>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWindow {
    offset: Dur,
    duration: Dur,
    queues: Vec<u8>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStream {
    dst: String,
    stream: u32,
    vlan_id: u16,
    pcp: u8,
    queue: u8,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawOverflow {
    Drop,
    Defer,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBridge {
    delay: RawDelay,
    capacity: Option<usize>,
    overflow: Option<RawOverflow>,
    defer_extra: Option<Dur>,
    #[serde(default)]
    fifo: bool,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
enum RawDelay {
    Constant {
        value: Dur,
        tdd: Option<RawTdd>,
    },
    Uniform {
        min: Dur,
        max: Dur,
        tdd: Option<RawTdd>,
    },
    Lognormal {
        min: Dur,
        max: Dur,
        mean: Dur,
        shape: Option<f64>,
        tdd: Option<RawTdd>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTdd {
    slot: Dur,
    pattern: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnalysis {
    d_max: Dur,
    tol: Option<Dur>,
    expected_period: Option<Dur>,
    cv_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    /// Worst-case 5G delay used by the feasibility predictor.
    pub d_max: Duration,
    /// Tolerance for fraction-within-tolerance; defaults to the width of the
    /// bridge delay law.
    pub tol: Option<Duration>,
    /// Defaults to the schedule base period.
    pub expected_period: Option<Duration>,
    pub cv_threshold: f64,
}

/// A fully typed scenario.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub horizon: Duration,
    pub traffic: TrafficSpec,
    pub dst_address: String,
    pub gateway: GatewayConfig,
    pub bridge: BridgeModel,
    pub analysis: AnalysisConfig,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        build(raw).map_err(CliError::Validation)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| e.with_context(&path.display().to_string()))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.bridge.rng_seed = seed;
        self
    }

    pub fn base_period(&self) -> Duration {
        self.gateway.schedule.base_period
    }

    pub fn expected_period(&self) -> Duration {
        self.analysis.expected_period.unwrap_or(self.base_period())
    }

    pub fn tolerance(&self) -> Duration {
        self.analysis.tol.unwrap_or_else(|| {
            let (lo, hi) = self.bridge.delay.bounds();
            hi - lo
        })
    }

    /// Longest time a frame accepted by the bridge can spend inside it.
    pub fn worst_bridge_delay(&self) -> Duration {
        let (_, hi) = self.bridge.delay.bounds();
        match (self.bridge.in_flight_capacity, self.bridge.overflow_policy) {
            (Some(_), OverflowPolicy::Defer(extra)) => hi + extra,
            _ => hi,
        }
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            seed: self.seed,
            horizon: self.horizon,
            traffic: self.traffic.clone(),
            dst_address: self.dst_address.clone(),
            gateway: self.gateway.clone(),
            bridge: self.bridge.clone(),
        }
    }

    /// Human-readable list of every validation failure.
    pub fn validate(&self) -> Vec<String> {
        match self.scenario().validate() {
            Ok(()) => Vec::new(),
            Err(ScenarioError::Gateway(errors)) => errors.iter().map(ToString::to_string).collect(),
            Err(other) => vec![other.to_string()],
        }
    }
}

fn queue(index: u8, field: &str, errors: &mut Vec<String>) -> QueueId {
    QueueId::new(index).unwrap_or_else(|| {
        errors.push(format!("{field}: queue {index} outside 0..=7"));
        QueueId::BEST_EFFORT
    })
}

fn delay_model(raw: RawDelay) -> Result<DelayModel, DelayError> {
    let (model, tdd) = match raw {
        RawDelay::Constant { value, tdd } => (DelayModel::Constant(value.0), tdd),
        RawDelay::Uniform { min, max, tdd } => (DelayModel::uniform(min.0, max.0)?, tdd),
        RawDelay::Lognormal {
            min,
            max,
            mean,
            shape,
            tdd,
        } => (
            DelayModel::lognormal(
                min.0,
                max.0,
                mean.0,
                shape.unwrap_or(DEFAULT_LOGNORMAL_SHAPE),
            )?,
            tdd,
        ),
    };
    match tdd {
        None => Ok(model),
        Some(t) => {
            let pattern = t.pattern.parse::<TddPattern>()?;
            DelayModel::slot_quantized(
                model,
                TddConfig {
                    slot_duration: t.slot.0,
                    pattern: pattern.0,
                },
            )
        }
    }
}

fn build(raw: RawScenario) -> Result<ScenarioConfig, Vec<String>> {
    let mut errors = Vec::new();

    let (traffic, dst_address) = match raw.traffic {
        RawTraffic::Periodic {
            dst,
            frame_size,
            period,
            count,
            phase,
        } => (
            TrafficSpec::Periodic {
                period: period.0,
                frame_size,
                count,
                phase: phase.0,
            },
            dst,
        ),
        RawTraffic::Cbr {
            dst,
            frame_size,
            rate_bps,
            duration,
            jitter,
        } => (
            TrafficSpec::ConstantBitrate {
                bps: rate_bps,
                frame_size,
                duration: duration.0,
                jitter: jitter.0,
            },
            dst,
        ),
    };

    let g = raw.gateway;
    let windows = g
        .schedule
        .windows
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let queues: QueueSet = w
                .queues
                .iter()
                .map(|&q| queue(q, &format!("gateway.schedule.windows[{i}]"), &mut errors))
                .collect();
            GateWindow::new(w.offset.0, w.duration.0, queues)
        })
        .collect();
    let schedule = GateSchedule::new(g.schedule.base_period.0, windows)
        .with_epoch(Instant::ZERO + g.schedule.epoch.map_or(Duration::ZERO, |e| e.0));
    let rules = g
        .streams
        .into_iter()
        .enumerate()
        .map(|(i, s)| StreamRule {
            dst_address: s.dst,
            vlan_id: s.vlan_id,
            pcp: s.pcp,
            queue: queue(s.queue, &format!("gateway.streams[{i}]"), &mut errors),
            stream: StreamId(s.stream),
        })
        .collect();
    let mut gateway = GatewayConfig::new(rules, schedule);
    gateway.link_rate_bps = g.link_rate_bps.unwrap_or(DEFAULT_LINK_RATE_BPS);
    gateway.mtu = g.mtu.unwrap_or(DEFAULT_MTU);
    gateway.best_effort_queue = queue(
        g.best_effort_queue.unwrap_or(0),
        "gateway.best_effort_queue",
        &mut errors,
    );
    gateway.queue_limit = g
        .queue_capacity
        .map_or(QueueLimit::Unbounded, QueueLimit::TailDrop);

    let b = raw.bridge;
    let delay = delay_model(b.delay).unwrap_or_else(|e| {
        errors.push(format!("bridge.delay: {e}"));
        DelayModel::Constant(Duration::ZERO)
    });
    let overflow_policy = match (b.overflow, b.defer_extra) {
        (None | Some(RawOverflow::Drop), None) => OverflowPolicy::Drop,
        (Some(RawOverflow::Defer), Some(extra)) => OverflowPolicy::Defer(extra.0),
        (Some(RawOverflow::Defer), None) => {
            errors.push("bridge: overflow = \"defer\" requires defer_extra".into());
            OverflowPolicy::Drop
        }
        (_, Some(_)) => {
            errors.push("bridge: defer_extra is only valid with overflow = \"defer\"".into());
            OverflowPolicy::Drop
        }
    };
    if b.capacity == Some(0) {
        errors.push("bridge.capacity must be at least 1".into());
    }
    let bridge = BridgeModel {
        delay,
        in_flight_capacity: b.capacity,
        overflow_policy,
        fifo_enforced: b.fifo,
        rng_seed: raw.seed,
    };

    let cv_threshold = raw.analysis.cv_threshold.unwrap_or(DEFAULT_CV_THRESHOLD);
    if !(cv_threshold.is_finite() && cv_threshold > 0.0) {
        errors.push(format!(
            "analysis.cv_threshold must be positive, got {cv_threshold}"
        ));
    }
    let analysis = AnalysisConfig {
        d_max: raw.analysis.d_max.0,
        tol: raw.analysis.tol.map(|d| d.0),
        expected_period: raw.analysis.expected_period.map(|d| d.0),
        cv_threshold,
    };

    let config = ScenarioConfig {
        name: raw.name,
        seed: raw.seed,
        horizon: raw.horizon.0,
        traffic,
        dst_address,
        gateway,
        bridge,
        analysis,
    };
    if errors.is_empty() {
        errors = config.validate();
    }
    if config.name.is_empty()
        || !config
            .name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
    {
        errors.push(format!(
            "name `{}` must be non-empty and use only letters, digits, '-', '_' or '.'",
            config.name
        ));
    }
    if errors.is_empty() {
        Ok(config)
    } else {
        Err(errors)
    }
}
