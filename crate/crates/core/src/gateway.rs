//! TSN gateway: stream translation of non-TSN traffic, VLAN tagging, queue
//! assignment and a time-aware shaped TSN egress port.

use std::collections::BTreeSet;
use std::sync::Arc;

use thiserror::Error;

use crate::frame::{Frame, ObservationPoint, QueueId, StreamId, DEFAULT_MTU, MIN_FRAME_BYTES};
use crate::tas::{GateSchedule, QueueLimit, TasPort};
use crate::time::{serialization_time, Duration, Instant};

pub const DEFAULT_LINK_RATE_BPS: u64 = 100_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("base period must be positive")]
    ZeroBasePeriod,
    #[error("window {index} has zero duration")]
    EmptyWindow { index: usize },
    #[error("window {index} ends at {end} beyond the base period {base_period} (WindowExceedsBasePeriod)")]
    WindowExceedsBasePeriod {
        index: usize,
        end: Duration,
        base_period: Duration,
    },
    #[error("windows {first} and {second} overlap (OverlappingWindows)")]
    OverlappingWindows { first: usize, second: usize },
    #[error("queue {0} is assigned to a stream but never opened by the schedule (QueueNeverOpen)")]
    QueueNeverOpen(QueueId),
    #[error("an MTU-sized frame needs {tx_time} but the longest window of queue {queue} is {longest} (MtuNeverFits)")]
    MtuNeverFits {
        queue: QueueId,
        tx_time: Duration,
        longest: Duration,
    },
    #[error("rule for stream {stream} targets the best-effort queue {queue}")]
    RuleOnBestEffortQueue { stream: StreamId, queue: QueueId },
    #[error("stream {0} is defined by more than one rule")]
    DuplicateStream(StreamId),
    #[error("rule for stream {stream} has VLAN id {vlan_id} outside 1..=4094")]
    InvalidVlan { stream: StreamId, vlan_id: u16 },
    #[error("rule for stream {stream} has PCP {pcp} outside 0..=7")]
    InvalidPcp { stream: StreamId, pcp: u8 },
    #[error("link rate must be positive")]
    ZeroLinkRate,
    #[error("MTU {0} is below the {MIN_FRAME_BYTES}-byte minimum frame")]
    InvalidMtu(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamRule {
    /// Matched against the frame's destination address verbatim.
    pub dst_address: String,
    pub vlan_id: u16,
    pub pcp: u8,
    pub queue: QueueId,
    pub stream: StreamId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GatewayConfig {
    pub rules: Vec<StreamRule>,
    pub schedule: GateSchedule,
    pub link_rate_bps: u64,
    pub mtu: u32,
    pub best_effort_queue: QueueId,
    pub queue_limit: QueueLimit,
}

impl GatewayConfig {
    pub fn new(rules: Vec<StreamRule>, schedule: GateSchedule) -> Self {
        GatewayConfig {
            rules,
            schedule,
            link_rate_bps: DEFAULT_LINK_RATE_BPS,
            mtu: DEFAULT_MTU,
            best_effort_queue: QueueId::BEST_EFFORT,
            queue_limit: QueueLimit::Unbounded,
        }
    }

    /// Every violation in the configuration; empty means accepted.
    pub fn validate(&self) -> Vec<ConfigError> {
        let mut errors = Vec::new();
        let schedule = &self.schedule;

        if self.link_rate_bps == 0 {
            errors.push(ConfigError::ZeroLinkRate);
        }
        if self.mtu < MIN_FRAME_BYTES {
            errors.push(ConfigError::InvalidMtu(self.mtu));
        }
        if schedule.base_period.is_zero() {
            errors.push(ConfigError::ZeroBasePeriod);
        }
        for (index, w) in schedule.windows.iter().enumerate() {
            if w.duration.is_zero() {
                errors.push(ConfigError::EmptyWindow { index });
            }
            let end = w
                .offset
                .checked_add(w.duration)
                .unwrap_or(Duration::from_nanos(u64::MAX));
            if end > schedule.base_period {
                errors.push(ConfigError::WindowExceedsBasePeriod {
                    index,
                    end,
                    base_period: schedule.base_period,
                });
            }
        }
        let mut order: Vec<usize> = (0..schedule.windows.len()).collect();
        order.sort_by_key(|&i| schedule.windows[i].offset);
        for pair in order.windows(2) {
            let (a, b) = (&schedule.windows[pair[0]], &schedule.windows[pair[1]]);
            if a.offset.as_nanos().saturating_add(a.duration.as_nanos()) > b.offset.as_nanos() {
                errors.push(ConfigError::OverlappingWindows {
                    first: pair[0].min(pair[1]),
                    second: pair[0].max(pair[1]),
                });
            }
        }

        let mut seen = BTreeSet::new();
        let mut rule_queues = BTreeSet::new();
        for rule in &self.rules {
            if !seen.insert(rule.stream) {
                errors.push(ConfigError::DuplicateStream(rule.stream));
            }
            if !(1..=4094).contains(&rule.vlan_id) {
                errors.push(ConfigError::InvalidVlan {
                    stream: rule.stream,
                    vlan_id: rule.vlan_id,
                });
            }
            if rule.pcp > 7 {
                errors.push(ConfigError::InvalidPcp {
                    stream: rule.stream,
                    pcp: rule.pcp,
                });
            }
            if rule.queue == self.best_effort_queue {
                errors.push(ConfigError::RuleOnBestEffortQueue {
                    stream: rule.stream,
                    queue: rule.queue,
                });
            }
            rule_queues.insert(rule.queue);
        }

        for queue in rule_queues {
            match schedule.max_window(queue) {
                None => errors.push(ConfigError::QueueNeverOpen(queue)),
                Some(longest) => {
                    if let Ok(tx_time) =
                        serialization_time(u64::from(self.mtu), self.link_rate_bps, true)
                    {
                        if tx_time > longest {
                            errors.push(ConfigError::MtuNeverFits {
                                queue,
                                tx_time,
                                longest,
                            });
                        }
                    }
                }
            }
        }
        errors
    }

    /// Tags `frame` per the first rule matching its destination, or marks it
    /// best-effort.
    pub fn classify(&self, mut frame: Frame) -> Frame {
        match self.rules.iter().find(|r| *r.dst_address == *frame.dst) {
            Some(rule) => {
                frame.stream = Some(rule.stream);
                frame.vlan_id = Some(rule.vlan_id);
                frame.pcp = Some(rule.pcp);
                frame.queue = Some(rule.queue);
            }
            None => {
                frame.stream = None;
                frame.vlan_id = None;
                frame.pcp = None;
                frame.queue = Some(self.best_effort_queue);
            }
        }
        frame
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GatewayCounters {
    pub ingested: u64,
    pub egressed: u64,
    pub dropped: u64,
}

#[derive(Debug, Clone)]
pub struct Gateway {
    config: Arc<GatewayConfig>,
    port: TasPort,
    counters: GatewayCounters,
}

impl Gateway {
    pub fn new(config: GatewayConfig) -> Self {
        let port = TasPort::new(config.schedule.clone(), config.link_rate_bps)
            .with_all_limits(config.queue_limit);
        Gateway {
            config: Arc::new(config),
            port,
            counters: GatewayCounters::default(),
        }
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn port(&self) -> &TasPort {
        &self.port
    }

    pub fn counters(&self) -> GatewayCounters {
        self.counters
    }

    /// Accepts a frame from the non-TSN port. The ingress port is treated as
    /// instantaneous; a full queue drops the frame and returns it.
    pub fn ingest(&mut self, mut frame: Frame, t: Instant) -> Result<(), Frame> {
        frame.taps.stamp(ObservationPoint::GatewayIngress, t);
        self.counters.ingested += 1;
        let frame = self.config.classify(frame);
        self.port.enqueue(frame).inspect_err(|_| {
            self.counters.dropped += 1;
        })
    }

    /// Starts the next TSN-side transmission at `t`, stamping its egress tap.
    pub fn poll(&mut self, t: Instant) -> Option<(Frame, Instant)> {
        let (mut frame, done) = self.port.dequeue_step(t)?;
        frame.taps.stamp(ObservationPoint::GatewayEgress, t);
        self.counters.egressed += 1;
        Some((frame, done))
    }

    pub fn next_wakeup(&self, t: Instant) -> Option<Instant> {
        self.port.next_wakeup(t)
    }
}
