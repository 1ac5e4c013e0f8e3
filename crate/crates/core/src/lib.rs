//! Discrete-event model of a hybrid TSN/5G path.
//!
//! Non-TSN traffic enters a TSN gateway, is translated into a TSN stream and
//! shaped by an IEEE 802.1Qbv time-aware shaper, crosses a black-box 5G
//! bridge, and is captured at three taps. The [`analysis`] module turns those
//! captures into periodicity, jitter and loss metrics.

pub mod analysis;
pub mod fiveg;
pub mod frame;
pub mod gateway;
pub mod sim;
pub mod tas;
pub mod time;

pub use frame::{Frame, ObservationPoint, QueueId, StreamId};
pub use time::{Duration, Instant};
