//! Black-box 5G bridge: the TSN side hands a frame to the UE and sees it
//! reappear at the core after a delay drawn from a bounded law.
//!
//! Delay laws are expressed as one-way uplink delays. The stochastic default
//! is a shifted log-normal truncated to `[min, max]` whose location is fitted
//! so the truncated mean hits a target; the heavy right tail matches a
//! system whose worst case sits far above its average.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::frame::{Frame, ObservationPoint};
use crate::time::{Duration, Instant};

/// Shape (sigma of the underlying normal) used when a config does not set one.
pub const DEFAULT_LOGNORMAL_SHAPE: f64 = 1.0;

/// Numerology mu=1 (30 kHz subcarrier spacing) slot length.
pub const DEFAULT_SLOT_NS: u64 = 500_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DelayError {
    #[error("delay bounds are inverted: min {min} > max {max}")]
    InvertedBounds { min: Duration, max: Duration },
    #[error("target mean {mean} must lie strictly between min {min} and max {max}")]
    MeanOutOfRange {
        min: Duration,
        max: Duration,
        mean: Duration,
    },
    #[error("log-normal shape must be finite and positive, got {0}")]
    InvalidShape(f64),
    #[error("TDD pattern must be non-empty and contain an uplink slot")]
    NoUplinkSlot,
    #[error("TDD slot duration must be positive")]
    ZeroSlot,
    #[error("unknown TDD slot symbol `{0}` (expected D, S or U)")]
    SlotSymbol(char),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    Downlink,
    Special,
    Uplink,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TddConfig {
    pub slot_duration: Duration,
    pub pattern: Vec<SlotKind>,
}

impl Default for TddConfig {
    /// `DDDDDSUUUU` with 0.5 ms slots.
    fn default() -> Self {
        "DDDDDSUUUU"
            .parse::<TddPattern>()
            .map(|p| TddConfig {
                slot_duration: Duration::from_nanos(DEFAULT_SLOT_NS),
                pattern: p.0,
            })
            .expect("default pattern parses")
    }
}

/// Slot pattern written as a string of `D`, `S`, `U`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TddPattern(pub Vec<SlotKind>);

impl FromStr for TddPattern {
    type Err = DelayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .filter(|c| !c.is_whitespace() && *c != ',')
            .map(|c| match c.to_ascii_uppercase() {
                'D' => Ok(SlotKind::Downlink),
                'S' => Ok(SlotKind::Special),
                'U' => Ok(SlotKind::Uplink),
                other => Err(DelayError::SlotSymbol(other)),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(TddPattern)
    }
}

impl TddConfig {
    pub fn validate(&self) -> Result<(), DelayError> {
        if self.slot_duration.is_zero() {
            return Err(DelayError::ZeroSlot);
        }
        if !self.pattern.contains(&SlotKind::Uplink) {
            return Err(DelayError::NoUplinkSlot);
        }
        Ok(())
    }

    pub fn cycle(&self) -> Duration {
        Duration::from_nanos(self.slot_duration.as_nanos() * self.pattern.len() as u64)
    }

    /// Earliest instant at or after `t` inside an uplink slot. The special
    /// slot counts as non-uplink.
    pub fn next_uplink_opportunity(&self, t: Instant) -> Instant {
        let slot = self.slot_duration.as_nanos();
        let n = self.pattern.len() as u64;
        let phase = t.as_nanos() % (slot * n);
        let index = phase / slot;
        if self.pattern[index as usize] == SlotKind::Uplink {
            return t;
        }
        let cycle_start = t.as_nanos() - phase;
        let next = (index + 1..index + 1 + n)
            .find(|i| self.pattern[(i % n) as usize] == SlotKind::Uplink)
            .expect("validated pattern has an uplink slot");
        Instant::from_nanos(cycle_start + next * slot)
    }

    /// Longest wait [`next_uplink_opportunity`](Self::next_uplink_opportunity) can impose.
    pub fn max_wait(&self) -> Duration {
        let slot = self.slot_duration.as_nanos();
        let n = self.pattern.len();
        let mut longest = 0;
        for i in 0..n {
            if self.pattern[i] == SlotKind::Uplink {
                continue;
            }
            let ahead = (1..=n)
                .find(|k| self.pattern[(i + k) % n] == SlotKind::Uplink)
                .unwrap_or(n);
            longest = longest.max(ahead as u64 * slot);
        }
        Duration::from_nanos(longest)
    }
}

/// Log-normal shifted to start at `min` and truncated at `max`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedLognormal {
    pub min: Duration,
    pub max: Duration,
    pub target_mean: Duration,
    pub shape: f64,
    location: f64,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

impl TruncatedLognormal {
    /// Fits the location parameter by bisection so the truncated mean equals
    /// `target_mean` for the given `shape`.
    pub fn fit(
        min: Duration,
        max: Duration,
        target_mean: Duration,
        shape: f64,
    ) -> Result<Self, DelayError> {
        if !(shape.is_finite() && shape > 0.0) {
            return Err(DelayError::InvalidShape(shape));
        }
        if min > max {
            return Err(DelayError::InvertedBounds { min, max });
        }
        if !(min < target_mean && target_mean < max) {
            return Err(DelayError::MeanOutOfRange {
                min,
                max,
                mean: target_mean,
            });
        }
        let target = (target_mean - min).as_nanos() as f64;
        let span = (max - min).as_nanos() as f64;
        let mean_at = |location: f64| truncated_mean(location, shape, span);

        let mut lo = target.ln() - shape * shape / 2.0 - 5.0 * shape;
        while mean_at(lo) > target {
            lo -= 5.0 * shape;
        }
        let mut hi = span.ln() + 5.0 * shape;
        while mean_at(hi) < target {
            hi += 5.0 * shape;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mean_at(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(TruncatedLognormal {
            min,
            max,
            target_mean,
            shape,
            location: 0.5 * (lo + hi),
        })
    }

    /// Location (mu) of the underlying normal, in ln-nanoseconds above `min`.
    pub fn location(&self) -> f64 {
        self.location
    }

    /// Analytic mean of the truncated law.
    pub fn mean(&self) -> Duration {
        let span = (self.max - self.min).as_nanos() as f64;
        let m = truncated_mean(self.location, self.shape, span);
        self.min + Duration::from_nanos(m.round() as u64)
    }

    /// Inverse-CDF draw; every sample lies in `[min, max]`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Duration {
        let span = (self.max - self.min).as_nanos();
        if span == 0 {
            return self.min;
        }
        let normal = std_normal();
        let upper = normal.cdf(((span as f64).ln() - self.location) / self.shape);
        let u: f64 = rng.random::<f64>() * upper;
        let offset = if u <= 0.0 {
            0.0
        } else {
            (self.location + self.shape * normal.inverse_cdf(u)).exp()
        };
        let offset = (offset.round() as u64).min(span);
        self.min + Duration::from_nanos(offset)
    }
}

/// Mean of `LN(location, shape)` conditioned on being at most `span`.
fn truncated_mean(location: f64, shape: f64, span: f64) -> f64 {
    let normal = std_normal();
    let z = (span.ln() - location) / shape;
    let mass = normal.cdf(z);
    if mass <= 0.0 {
        return span;
    }
    (location + shape * shape / 2.0).exp() * normal.cdf(z - shape) / mass
}

#[derive(Debug, Clone, PartialEq)]
pub enum DelayModel {
    Constant(Duration),
    UniformBounded {
        min: Duration,
        max: Duration,
    },
    TruncatedLognormal(TruncatedLognormal),
    SlotQuantized {
        inner: Box<DelayModel>,
        tdd: TddConfig,
    },
}

impl DelayModel {
    pub fn uniform(min: Duration, max: Duration) -> Result<Self, DelayError> {
        if min > max {
            return Err(DelayError::InvertedBounds { min, max });
        }
        Ok(DelayModel::UniformBounded { min, max })
    }

    pub fn lognormal(
        min: Duration,
        max: Duration,
        mean: Duration,
        shape: f64,
    ) -> Result<Self, DelayError> {
        TruncatedLognormal::fit(min, max, mean, shape).map(DelayModel::TruncatedLognormal)
    }

    pub fn slot_quantized(inner: DelayModel, tdd: TddConfig) -> Result<Self, DelayError> {
        tdd.validate()?;
        Ok(DelayModel::SlotQuantized {
            inner: Box::new(inner),
            tdd,
        })
    }

    /// One-way delay for a frame handed over at `t_send`.
    pub fn sample_delay<R: Rng + ?Sized>(&self, t_send: Instant, rng: &mut R) -> Duration {
        match self {
            DelayModel::Constant(d) => *d,
            DelayModel::UniformBounded { min, max } => {
                Duration::from_nanos(rng.random_range(min.as_nanos()..=max.as_nanos()))
            }
            DelayModel::TruncatedLognormal(law) => law.sample(rng),
            DelayModel::SlotQuantized { inner, tdd } => {
                let grant = tdd.next_uplink_opportunity(t_send);
                (grant - t_send) + inner.sample_delay(grant, rng)
            }
        }
    }

    /// Smallest and largest delay the law can produce.
    pub fn bounds(&self) -> (Duration, Duration) {
        match self {
            DelayModel::Constant(d) => (*d, *d),
            DelayModel::UniformBounded { min, max } => (*min, *max),
            DelayModel::TruncatedLognormal(law) => (law.min, law.max),
            DelayModel::SlotQuantized { inner, tdd } => {
                let (lo, hi) = inner.bounds();
                (lo, hi + tdd.max_wait())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverflowPolicy {
    Drop,
    Defer(Duration),
}

impl fmt::Display for OverflowPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OverflowPolicy::Drop => f.write_str("drop"),
            OverflowPolicy::Defer(extra) => write!(f, "defer({extra})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeModel {
    pub delay: DelayModel,
    pub in_flight_capacity: Option<usize>,
    pub overflow_policy: OverflowPolicy,
    /// Deliver frames in hand-over order even when delays would cross.
    pub fifo_enforced: bool,
    pub rng_seed: u64,
}

impl BridgeModel {
    pub fn new(delay: DelayModel, rng_seed: u64) -> Self {
        BridgeModel {
            delay,
            in_flight_capacity: None,
            overflow_policy: OverflowPolicy::Drop,
            fifo_enforced: false,
            rng_seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transit {
    Delivered(Instant),
    Dropped,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BridgeCounters {
    pub accepted: u64,
    pub deferred: u64,
    pub dropped: u64,
    pub delivered: u64,
}

/// Deterministic RNG for one named stream of a run.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub const BRIDGE_RNG_STREAM: u64 = 2;

/// Runtime state of a [`BridgeModel`].
#[derive(Debug, Clone)]
pub struct Bridge {
    model: BridgeModel,
    rng: ChaCha8Rng,
    in_flight: usize,
    last_arrival: Option<Instant>,
    counters: BridgeCounters,
}

impl Bridge {
    pub fn new(model: BridgeModel) -> Self {
        let rng = seeded_rng(model.rng_seed, BRIDGE_RNG_STREAM);
        Bridge {
            model,
            rng,
            in_flight: 0,
            last_arrival: None,
            counters: BridgeCounters::default(),
        }
    }

    pub fn model(&self) -> &BridgeModel {
        &self.model
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight
    }

    pub fn counters(&self) -> BridgeCounters {
        self.counters
    }

    /// Hands `frame` to the bridge at `t_send`. On delivery the frame's
    /// core-arrival tap is stamped and the frame counts as in flight until
    /// [`complete`](Self::complete) is called.
    pub fn transit(&mut self, frame: &mut Frame, t_send: Instant) -> Transit {
        // one draw per frame regardless of outcome keeps runs comparable
        let delay = self.model.delay.sample_delay(t_send, &mut self.rng);
        let full = self
            .model
            .in_flight_capacity
            .is_some_and(|cap| self.in_flight >= cap);
        let mut arrival = t_send + delay;
        if full {
            match self.model.overflow_policy {
                OverflowPolicy::Drop => {
                    self.counters.dropped += 1;
                    return Transit::Dropped;
                }
                OverflowPolicy::Defer(extra) => {
                    self.counters.deferred += 1;
                    arrival += extra;
                }
            }
        }
        if self.model.fifo_enforced {
            if let Some(last) = self.last_arrival {
                arrival = arrival.max(last);
            }
        }
        self.last_arrival = Some(self.last_arrival.map_or(arrival, |l| l.max(arrival)));
        self.in_flight += 1;
        self.counters.accepted += 1;
        frame.taps.stamp(ObservationPoint::CoreArrival, arrival);
        Transit::Delivered(arrival)
    }

    /// Marks one in-flight frame as having reached the core.
    pub fn complete(&mut self) {
        debug_assert!(self.in_flight > 0);
        self.in_flight = self.in_flight.saturating_sub(1);
        self.counters.delivered += 1;
    }
}
