//! Deterministic discrete-event kernel wiring end station -> gateway ->
//! 5G bridge -> core, with a capture tap at each hop.
//!
//! Events execute in `(at, seq)` order where `seq` is a global insertion
//! counter, so execution order is a pure function of configuration and seed.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::fiveg::{seeded_rng, Bridge, BridgeModel, Transit};
use crate::frame::{Frame, ObservationPoint, StreamId, MIN_FRAME_BYTES};
use crate::gateway::{ConfigError, Gateway, GatewayConfig};
use crate::time::{Duration, Instant, MAX_HORIZON_NS, NANOS_PER_SEC};

pub const TRAFFIC_RNG_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("gateway configuration rejected: {}", join(.0))]
    Gateway(Vec<ConfigError>),
    #[error("invalid traffic: {0}")]
    Traffic(String),
    #[error("horizon must be positive and at most 2^63 ns")]
    Horizon,
}

fn join(errors: &[ConfigError]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrafficSpec {
    /// Frames at `phase + k * period` for `k` in `0..count`.
    Periodic {
        period: Duration,
        frame_size: u32,
        count: u64,
        phase: Duration,
    },
    /// Fixed-size frames at nominal spacing `frame_size * 8 / bps`, each
    /// displaced by a uniform draw in `[-jitter, +jitter]`, up to `duration`.
    ConstantBitrate {
        bps: u64,
        frame_size: u32,
        duration: Duration,
        jitter: Duration,
    },
}

impl TrafficSpec {
    pub fn frame_size(&self) -> u32 {
        match self {
            TrafficSpec::Periodic { frame_size, .. }
            | TrafficSpec::ConstantBitrate { frame_size, .. } => *frame_size,
        }
    }

    /// Nominal spacing between consecutive frames.
    pub fn spacing(&self) -> Option<Duration> {
        match self {
            TrafficSpec::Periodic { period, .. } => Some(*period),
            TrafficSpec::ConstantBitrate {
                bps, frame_size, ..
            } => (*bps > 0).then(|| cbr_spacing(*bps, *frame_size)),
        }
    }

    pub fn validate(&self, mtu: u32) -> Result<(), String> {
        let size = self.frame_size();
        if !(MIN_FRAME_BYTES..=mtu).contains(&size) {
            return Err(format!(
                "frame size {size} outside {MIN_FRAME_BYTES}..={mtu}"
            ));
        }
        match self {
            TrafficSpec::Periodic { period, .. } => {
                if period.is_zero() {
                    return Err("period must be positive".into());
                }
            }
            TrafficSpec::ConstantBitrate { bps, jitter, .. } => {
                if *bps == 0 {
                    return Err("bitrate must be positive".into());
                }
                let spacing = self.spacing().unwrap_or_default();
                if spacing.is_zero() {
                    return Err("bitrate too high for nanosecond spacing".into());
                }
                if *jitter >= spacing {
                    return Err(format!(
                        "jitter {jitter} must be below the frame spacing {spacing}"
                    ));
                }
            }
        }
        Ok(())
    }
}

fn cbr_spacing(bps: u64, frame_size: u32) -> Duration {
    let ns = u128::from(frame_size) * 8 * u128::from(NANOS_PER_SEC) / u128::from(bps);
    Duration::from_nanos(ns as u64)
}

/// Arrival instants and sizes for one traffic source, sorted by time.
pub fn generate<R: Rng + ?Sized>(spec: &TrafficSpec, rng: &mut R) -> Vec<(Instant, u32)> {
    match spec {
        TrafficSpec::Periodic {
            period,
            frame_size,
            count,
            phase,
        } => (0..*count)
            .map_while(|k| {
                let offset = k
                    .checked_mul(period.as_nanos())?
                    .checked_add(phase.as_nanos())?;
                (offset <= MAX_HORIZON_NS).then(|| (Instant::from_nanos(offset), *frame_size))
            })
            .collect(),
        TrafficSpec::ConstantBitrate {
            bps,
            frame_size,
            duration,
            jitter,
        } => {
            let spacing = cbr_spacing(*bps, *frame_size).as_nanos().max(1);
            let end = duration.as_nanos();
            let j = jitter.as_nanos();
            let mut out = Vec::new();
            let mut k = 0u64;
            while let Some(nominal) = k.checked_mul(spacing).filter(|n| *n < end) {
                let shift = if j == 0 {
                    0
                } else {
                    rng.random_range(0..=2 * j)
                };
                let t = (nominal + shift).saturating_sub(j);
                if t < end {
                    out.push((Instant::from_nanos(t), *frame_size));
                }
                k += 1;
            }
            out.sort_by_key(|(t, _)| *t);
            out
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaptureRecord {
    pub seq: u64,
    pub stream: Option<StreamId>,
    pub t: Instant,
    pub size_bytes: u32,
}

/// Tap observations, each list sorted by `t`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CaptureSet {
    pub gateway_ingress: Vec<CaptureRecord>,
    pub gateway_egress: Vec<CaptureRecord>,
    pub core_arrival: Vec<CaptureRecord>,
}

impl CaptureSet {
    pub fn at(&self, point: ObservationPoint) -> &[CaptureRecord] {
        match point {
            ObservationPoint::GatewayIngress => &self.gateway_ingress,
            ObservationPoint::GatewayEgress => &self.gateway_egress,
            ObservationPoint::CoreArrival => &self.core_arrival,
        }
    }

    pub fn at_mut(&mut self, point: ObservationPoint) -> &mut Vec<CaptureRecord> {
        match point {
            ObservationPoint::GatewayIngress => &mut self.gateway_ingress,
            ObservationPoint::GatewayEgress => &mut self.gateway_egress,
            ObservationPoint::CoreArrival => &mut self.core_arrival,
        }
    }

    fn record(&mut self, point: ObservationPoint, frame: &Frame, t: Instant) {
        self.at_mut(point).push(CaptureRecord {
            seq: frame.seq,
            stream: frame.stream,
            t,
            size_bytes: frame.size_bytes,
        });
    }

    pub fn is_empty(&self) -> bool {
        ObservationPoint::ALL.iter().all(|p| self.at(*p).is_empty())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub generated: u64,
    pub egressed: u64,
    pub delivered: u64,
    pub dropped_gateway: u64,
    pub dropped_bridge: u64,
    pub in_flight_at_horizon: u64,
    /// Frames still in the gateway, including one mid-transmission.
    pub queued_at_horizon: u64,
}

impl Counters {
    pub fn is_conserved(&self) -> bool {
        self.generated
            == self.delivered
                + self.dropped_gateway
                + self.dropped_bridge
                + self.in_flight_at_horizon
                + self.queued_at_horizon
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimOutput {
    pub captures: CaptureSet,
    pub counters: Counters,
    /// Frames that reached the core, in delivery order, with all taps.
    pub delivered: Vec<Frame>,
}

/// Everything the kernel needs for one run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub seed: u64,
    pub horizon: Duration,
    pub traffic: TrafficSpec,
    pub dst_address: String,
    pub gateway: GatewayConfig,
    pub bridge: BridgeModel,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let errors = self.gateway.validate();
        if !errors.is_empty() {
            return Err(ScenarioError::Gateway(errors));
        }
        self.traffic
            .validate(self.gateway.mtu)
            .map_err(ScenarioError::Traffic)?;
        if self.horizon.is_zero() || self.horizon.as_nanos() > MAX_HORIZON_NS {
            return Err(ScenarioError::Horizon);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    /// Emit the next generated frame.
    GeneratorTick(usize),
    FrameArrival(Frame),
    /// Gate edge or other instant at which the port may become eligible.
    GateEdge,
    EgressComplete(Frame),
    BridgeDelivery(Frame),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub at: Instant,
    pub seq: u64,
    pub action: Action,
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (at, seq)
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
    now: Instant,
}

impl EventQueue {
    pub fn now(&self) -> Instant {
        self.now
    }

    /// Schedules `action` at `at`. Scheduling into the past is a kernel bug.
    pub fn schedule(&mut self, at: Instant, action: Action) {
        assert!(
            at >= self.now,
            "event at {at} scheduled before now {}",
            self.now
        );
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { at, seq, action });
    }

    pub fn pop_before(&mut self, horizon: Instant) -> Option<Event> {
        if self.heap.peek()?.at >= horizon {
            return None;
        }
        let event = self.heap.pop()?;
        self.now = event.at;
        Some(event)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

struct Kernel {
    events: EventQueue,
    arrivals: Vec<(Instant, u32)>,
    dst: Arc<str>,
    gateway: Gateway,
    bridge: Bridge,
    in_transmission: bool,
    pending_wakeup: Option<Instant>,
    captures: CaptureSet,
    delivered: Vec<Frame>,
    counters: Counters,
}

impl Kernel {
    fn service_port(&mut self, now: Instant) {
        if self.in_transmission {
            return;
        }
        if let Some((frame, done)) = self.gateway.poll(now) {
            self.in_transmission = true;
            self.counters.egressed += 1;
            self.captures
                .record(ObservationPoint::GatewayEgress, &frame, now);
            self.events.schedule(done, Action::EgressComplete(frame));
            return;
        }
        if let Some(wake) = self.gateway.next_wakeup(now) {
            let already = self.pending_wakeup.is_some_and(|p| p >= now && p <= wake);
            if wake > now && !already {
                self.pending_wakeup = Some(wake);
                self.events.schedule(wake, Action::GateEdge);
            }
        }
    }

    fn step(&mut self, event: Event) {
        let now = event.at;
        match event.action {
            Action::GeneratorTick(index) => {
                let (_, size) = self.arrivals[index];
                let frame = Frame::new(index as u64, size, Arc::clone(&self.dst), now);
                self.events.schedule(now, Action::FrameArrival(frame));
                if let Some(&(next, _)) = self.arrivals.get(index + 1) {
                    self.events.schedule(next, Action::GeneratorTick(index + 1));
                }
            }
            Action::FrameArrival(frame) => {
                self.counters.generated += 1;
                let mut observed = frame.clone();
                observed.stream = self.gateway.config().classify(frame.clone()).stream;
                self.captures
                    .record(ObservationPoint::GatewayIngress, &observed, now);
                if self.gateway.ingest(frame, now).is_err() {
                    self.counters.dropped_gateway += 1;
                }
                self.service_port(now);
            }
            Action::GateEdge => {
                if self.pending_wakeup == Some(now) {
                    self.pending_wakeup = None;
                }
                self.service_port(now);
            }
            Action::EgressComplete(mut frame) => {
                self.in_transmission = false;
                match self.bridge.transit(&mut frame, now) {
                    Transit::Delivered(at) => {
                        self.events.schedule(at, Action::BridgeDelivery(frame));
                    }
                    Transit::Dropped => self.counters.dropped_bridge += 1,
                }
                self.service_port(now);
            }
            Action::BridgeDelivery(frame) => {
                self.bridge.complete();
                self.counters.delivered += 1;
                self.captures
                    .record(ObservationPoint::CoreArrival, &frame, now);
                self.delivered.push(frame);
            }
        }
    }
}

/// Executes the scenario up to (excluding) its horizon.
pub fn run(scenario: &Scenario) -> Result<SimOutput, ScenarioError> {
    scenario.validate()?;
    let mut traffic_rng = seeded_rng(scenario.seed, TRAFFIC_RNG_STREAM);
    let arrivals = generate(&scenario.traffic, &mut traffic_rng);
    let mut kernel = Kernel {
        events: EventQueue::default(),
        arrivals,
        dst: Arc::from(scenario.dst_address.as_str()),
        gateway: Gateway::new(scenario.gateway.clone()),
        bridge: Bridge::new(scenario.bridge.clone()),
        in_transmission: false,
        pending_wakeup: None,
        captures: CaptureSet::default(),
        delivered: Vec::new(),
        counters: Counters::default(),
    };
    if let Some(&(first, _)) = kernel.arrivals.first() {
        kernel.events.schedule(first, Action::GeneratorTick(0));
    }
    let horizon = Instant::ZERO + scenario.horizon;
    while let Some(event) = kernel.events.pop_before(horizon) {
        kernel.step(event);
    }
    let mut counters = kernel.counters;
    counters.in_flight_at_horizon = kernel.bridge.in_flight() as u64;
    counters.queued_at_horizon =
        kernel.gateway.port().queued() as u64 + u64::from(kernel.in_transmission);
    Ok(SimOutput {
        captures: kernel.captures,
        counters,
        delivered: kernel.delivered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiveg::DelayModel;
    use crate::frame::QueueId;
    use crate::gateway::StreamRule;
    use crate::tas::{GateSchedule, GateWindow, QueueSet};

    fn ms(v: u64) -> Duration {
        Duration::from_millis(v).unwrap()
    }

    fn scenario(traffic: TrafficSpec, horizon: Duration) -> Scenario {
        let q1 = QueueId::new(1).unwrap();
        Scenario {
            seed: 11,
            horizon,
            traffic,
            dst_address: "10.10.0.10".into(),
            gateway: GatewayConfig::new(
                vec![StreamRule {
                    dst_address: "10.10.0.10".into(),
                    vlan_id: 100,
                    pcp: 5,
                    queue: q1,
                    stream: StreamId(1),
                }],
                GateSchedule::new(
                    ms(200),
                    vec![GateWindow::new(ms(0), ms(25), QueueSet::EMPTY.with(q1))],
                ),
            ),
            bridge: BridgeModel::new(DelayModel::Constant(Duration::from_nanos(5_680_000)), 11),
        }
    }

    #[test]
    fn generate_periodic() {
        let mut rng = seeded_rng(0, 0);
        let spec = TrafficSpec::Periodic {
            period: ms(200),
            frame_size: 1000,
            count: 3,
            phase: Duration::ZERO,
        };
        let times: Vec<u64> = generate(&spec, &mut rng)
            .iter()
            .map(|(t, _)| t.as_nanos())
            .collect();
        assert_eq!(times, vec![0, 200_000_000, 400_000_000]);
        let spec = TrafficSpec::Periodic {
            period: ms(100),
            frame_size: 1000,
            count: 2,
            phase: ms(5),
        };
        let times: Vec<u64> = generate(&spec, &mut rng)
            .iter()
            .map(|(t, _)| t.as_nanos())
            .collect();
        assert_eq!(times, vec![5_000_000, 105_000_000]);
    }

    #[test]
    fn generate_cbr_exact_spacing() {
        let mut rng = seeded_rng(0, 0);
        let spec = TrafficSpec::ConstantBitrate {
            bps: 8_000_000,
            frame_size: 1000,
            duration: ms(10),
            jitter: Duration::ZERO,
        };
        let frames = generate(&spec, &mut rng);
        let times: Vec<u64> = frames.iter().map(|(t, _)| t.as_nanos()).collect();
        assert_eq!(times, (0..10).map(|k| k * 1_000_000).collect::<Vec<_>>());
        assert!(frames.iter().all(|(_, s)| *s == 1000));
    }

    #[test]
    fn generate_cbr_jitter_bounded() {
        let mut rng = seeded_rng(3, 0);
        let jitter = Duration::from_nanos(300_000);
        let spec = TrafficSpec::ConstantBitrate {
            bps: 8_000_000,
            frame_size: 1000,
            duration: ms(100),
            jitter,
        };
        let frames = generate(&spec, &mut rng);
        assert_eq!(frames.len(), 100);
        assert!(frames.windows(2).all(|w| w[0].0 <= w[1].0));
        let mut sorted_nominal: Vec<i64> = (0..100).map(|k| k * 1_000_000).collect();
        sorted_nominal.sort();
        for ((t, _), nominal) in frames.iter().zip(sorted_nominal) {
            assert!((t.as_nanos() as i64 - nominal).abs() <= 300_000);
        }
    }

    #[test]
    fn cbr_validation() {
        let spec = TrafficSpec::ConstantBitrate {
            bps: 8_000_000,
            frame_size: 1000,
            duration: ms(10),
            jitter: ms(1),
        };
        assert!(spec.validate(1500).is_err());
        let spec = TrafficSpec::Periodic {
            period: ms(1),
            frame_size: 2000,
            count: 1,
            phase: Duration::ZERO,
        };
        assert!(spec.validate(1500).is_err());
    }

    #[test]
    fn event_queue_orders_ties_by_insertion() {
        let mut q = EventQueue::default();
        q.schedule(Instant::from_nanos(5), Action::GateEdge);
        q.schedule(Instant::from_nanos(1), Action::GeneratorTick(1));
        q.schedule(Instant::from_nanos(5), Action::GeneratorTick(2));
        q.schedule(Instant::from_nanos(1), Action::GeneratorTick(3));
        let order: Vec<(u64, u64)> = std::iter::from_fn(|| q.pop_before(Instant::from_nanos(10)))
            .map(|e| (e.at.as_nanos(), e.seq))
            .collect();
        assert_eq!(order, vec![(1, 1), (1, 3), (5, 0), (5, 2)]);
    }

    #[test]
    #[should_panic(expected = "scheduled before now")]
    fn event_queue_rejects_past() {
        let mut q = EventQueue::default();
        q.schedule(Instant::from_nanos(5), Action::GateEdge);
        q.pop_before(Instant::from_nanos(10));
        q.schedule(Instant::from_nanos(4), Action::GateEdge);
    }

    #[test]
    fn scenario1_periodic_constant() {
        let s = scenario(
            TrafficSpec::Periodic {
                period: ms(200),
                frame_size: 1000,
                count: 20,
                phase: Duration::ZERO,
            },
            Duration::from_secs(4).unwrap(),
        );
        let out = run(&s).unwrap();
        assert_eq!(out.counters.generated, 20);
        assert_eq!(out.counters.delivered, 20);
        assert!(out.counters.is_conserved());
        let core = &out.captures.core_arrival;
        assert!(core.windows(2).all(|w| w[1].t - w[0].t == ms(200)));
        // one 1000 B frame: 81.6 us on the wire, then 5.68 ms in the bridge
        assert_eq!(core[0].t.as_nanos(), 81_600 + 5_680_000);
        assert!(out.delivered.iter().all(|f| f.taps.is_monotone()));
    }

    #[test]
    fn empty_generator() {
        let s = scenario(
            TrafficSpec::Periodic {
                period: ms(200),
                frame_size: 1000,
                count: 0,
                phase: Duration::ZERO,
            },
            Duration::from_secs(4).unwrap(),
        );
        let out = run(&s).unwrap();
        assert!(out.captures.is_empty());
        assert_eq!(out.counters, Counters::default());
    }

    #[test]
    fn invalid_scenario_rejected() {
        let mut s = scenario(
            TrafficSpec::Periodic {
                period: ms(200),
                frame_size: 1000,
                count: 1,
                phase: Duration::ZERO,
            },
            ms(100),
        );
        s.gateway.schedule.windows[0].duration = ms(250);
        assert!(matches!(run(&s), Err(ScenarioError::Gateway(_))));
    }

    #[test]
    fn horizon_cuts_in_flight_frames() {
        // last frame egresses at 3.8 s and is still in the bridge at 3.802 s
        let s = scenario(
            TrafficSpec::Periodic {
                period: ms(200),
                frame_size: 1000,
                count: 20,
                phase: Duration::ZERO,
            },
            ms(3_802),
        );
        let out = run(&s).unwrap();
        assert_eq!(out.counters.generated, 20);
        assert_eq!(out.counters.delivered, 19);
        assert_eq!(out.counters.in_flight_at_horizon, 1);
        assert!(out.counters.is_conserved());
    }
}
