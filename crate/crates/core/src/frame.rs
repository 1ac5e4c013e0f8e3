//! Frames and the identifiers attached to them along the path.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::time::Instant;

pub const DEFAULT_MTU: u32 = 1500;
pub const MIN_FRAME_BYTES: u32 = 64;
pub const NUM_QUEUES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StreamId(pub u32);

impl fmt::Display for StreamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Egress queue index, 0..=7. Higher index means higher priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QueueId(u8);

impl QueueId {
    pub const BEST_EFFORT: QueueId = QueueId(0);

    pub fn new(index: u8) -> Option<Self> {
        (usize::from(index) < NUM_QUEUES).then_some(QueueId(index))
    }

    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    pub fn all() -> impl DoubleEndedIterator<Item = QueueId> {
        (0..NUM_QUEUES as u8).map(QueueId)
    }
}

impl fmt::Display for QueueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Capture taps along the end station -> gateway -> 5G -> core path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObservationPoint {
    GatewayIngress,
    GatewayEgress,
    CoreArrival,
}

impl ObservationPoint {
    pub const ALL: [ObservationPoint; 3] = [
        ObservationPoint::GatewayIngress,
        ObservationPoint::GatewayEgress,
        ObservationPoint::CoreArrival,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ObservationPoint::GatewayIngress => "gateway_ingress",
            ObservationPoint::GatewayEgress => "gateway_egress",
            ObservationPoint::CoreArrival => "core_arrival",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ObservationPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObservationPoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ObservationPoint::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown observation point `{s}`"))
    }
}

/// Timestamps a frame collected at each tap it has passed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Taps([Option<Instant>; 3]);

impl Taps {
    pub fn get(&self, point: ObservationPoint) -> Option<Instant> {
        self.0[point.slot()]
    }

    pub fn stamp(&mut self, point: ObservationPoint, t: Instant) {
        self.0[point.slot()] = Some(t);
    }

    /// True when the present timestamps are non-decreasing along the path.
    pub fn is_monotone(&self) -> bool {
        let present: Vec<Instant> = self.0.iter().flatten().copied().collect();
        present.windows(2).all(|w| w[0] <= w[1])
    }
}

/// One unit of traffic. Carries sizes and metadata only, never payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub seq: u64,
    /// On-wire L2 size, excluding preamble and inter-frame gap.
    pub size_bytes: u32,
    pub dst: Arc<str>,
    pub stream: Option<StreamId>,
    pub vlan_id: Option<u16>,
    pub pcp: Option<u8>,
    pub queue: Option<QueueId>,
    pub created_at: Instant,
    pub taps: Taps,
}

impl Frame {
    pub fn new(seq: u64, size_bytes: u32, dst: Arc<str>, created_at: Instant) -> Self {
        Frame {
            seq,
            size_bytes,
            dst,
            stream: None,
            vlan_id: None,
            pcp: None,
            queue: None,
            created_at,
            taps: Taps::default(),
        }
    }

    pub fn is_best_effort(&self) -> bool {
        self.stream.is_none()
    }
}
