//! Integer nanosecond time base.
//!
//! Every instant and duration in the event path is a whole number of
//! nanoseconds. Horizons are capped at 2^63 ns so that `Instant + Duration`
//! cannot overflow inside a validated scenario.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};
use std::str::FromStr;

use thiserror::Error;

pub const NANOS_PER_MICRO: u64 = 1_000;
pub const NANOS_PER_MILLI: u64 = 1_000_000;
pub const NANOS_PER_SEC: u64 = 1_000_000_000;

/// Largest instant a scenario may reach.
pub const MAX_HORIZON_NS: u64 = 1 << 63;

/// Preamble + SFD (8 bytes) and inter-frame gap (12 bytes).
pub const ETHERNET_OVERHEAD_BYTES: u64 = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TimeError {
    #[error("duration {value}{unit} overflows the 2^63 ns time base")]
    Overflow { value: u64, unit: &'static str },
    #[error("link rate must be positive")]
    ZeroLinkRate,
    #[error("invalid duration `{0}`: expected an integer or decimal followed by s, ms, us or ns")]
    Parse(String),
    #[error("duration `{0}` is not a whole number of nanoseconds")]
    SubNanosecond(String),
}

/// Span of simulated time in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Duration(u64);

/// Point in simulated time, nanoseconds since the start of the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Instant(u64);

fn scaled(value: u64, factor: u64, unit: &'static str) -> Result<Duration, TimeError> {
    value
        .checked_mul(factor)
        .filter(|ns| *ns <= MAX_HORIZON_NS)
        .map(Duration)
        .ok_or(TimeError::Overflow { value, unit })
}

impl Duration {
    pub const ZERO: Duration = Duration(0);

    pub const fn from_nanos(ns: u64) -> Self {
        Duration(ns)
    }

    pub fn from_micros(us: u64) -> Result<Self, TimeError> {
        scaled(us, NANOS_PER_MICRO, "us")
    }

    pub fn from_millis(ms: u64) -> Result<Self, TimeError> {
        scaled(ms, NANOS_PER_MILLI, "ms")
    }

    pub fn from_secs(s: u64) -> Result<Self, TimeError> {
        scaled(s, NANOS_PER_SEC, "s")
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / NANOS_PER_MILLI as f64
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn checked_add(self, rhs: Duration) -> Option<Duration> {
        self.0.checked_add(rhs.0).map(Duration)
    }

    pub fn saturating_sub(self, rhs: Duration) -> Duration {
        Duration(self.0.saturating_sub(rhs.0))
    }
}

/// Convenience wrapper matching the millisecond constructor used in configs.
pub fn duration_from_millis(ms: u64) -> Result<Duration, TimeError> {
    Duration::from_millis(ms)
}

pub fn duration_from_micros(us: u64) -> Result<Duration, TimeError> {
    Duration::from_micros(us)
}

impl Instant {
    pub const ZERO: Instant = Instant(0);

    pub const fn from_nanos(ns: u64) -> Self {
        Instant(ns)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    /// Elapsed time since `earlier`, or `None` if `earlier` is later than `self`.
    pub fn checked_duration_since(self, earlier: Instant) -> Option<Duration> {
        self.0.checked_sub(earlier.0).map(Duration)
    }

    pub fn duration_since(self, earlier: Instant) -> Duration {
        Duration(self.0.saturating_sub(earlier.0))
    }

    pub fn checked_add(self, d: Duration) -> Option<Instant> {
        self.0.checked_add(d.0).map(Instant)
    }
}

impl Add for Duration {
    type Output = Duration;
    fn add(self, rhs: Duration) -> Duration {
        Duration(self.0 + rhs.0)
    }
}

impl Sub for Duration {
    type Output = Duration;
    fn sub(self, rhs: Duration) -> Duration {
        Duration(self.0 - rhs.0)
    }
}

impl Add<Duration> for Instant {
    type Output = Instant;
    fn add(self, rhs: Duration) -> Instant {
        Instant(self.0 + rhs.0)
    }
}

impl AddAssign<Duration> for Instant {
    fn add_assign(&mut self, rhs: Duration) {
        self.0 += rhs.0;
    }
}

impl Sub for Instant {
    type Output = Duration;
    fn sub(self, rhs: Instant) -> Duration {
        Duration(self.0 - rhs.0)
    }
}

impl fmt::Display for Duration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

impl fmt::Display for Instant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

/// Parses `<number><unit>` with unit one of `s`, `ms`, `us`, `ns`.
///
/// Decimal values are converted exactly; `12.5ms` is 12_500_000 ns while
/// `0.5ns` is rejected. A bare number without a unit is an error.
impl FromStr for Duration {
    type Err = TimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let text = s.trim();
        let split = text
            .find(|c: char| c.is_ascii_alphabetic())
            .ok_or_else(|| TimeError::Parse(s.to_string()))?;
        let (number, unit) = text.split_at(split);
        let (factor, unit_name) = match unit {
            "s" => (NANOS_PER_SEC, "s"),
            "ms" => (NANOS_PER_MILLI, "ms"),
            "us" => (NANOS_PER_MICRO, "us"),
            "ns" => (1, "ns"),
            _ => return Err(TimeError::Parse(s.to_string())),
        };
        let number = number.trim();
        let (int_part, frac_part) = match number.split_once('.') {
            Some((i, f)) => (i, f),
            None => (number, ""),
        };
        let digits_ok = |p: &str| p.chars().all(|c| c.is_ascii_digit());
        if int_part.is_empty() || !digits_ok(int_part) || !digits_ok(frac_part) {
            return Err(TimeError::Parse(s.to_string()));
        }
        if number.contains('.') && frac_part.is_empty() {
            return Err(TimeError::Parse(s.to_string()));
        }
        let int_value: u64 = int_part
            .parse()
            .map_err(|_| TimeError::Parse(s.to_string()))?;
        let mut total = scaled(int_value, factor, unit_name)?.as_nanos();

        let frac = frac_part.trim_end_matches('0');
        if !frac.is_empty() {
            // factor is a power of ten; the fraction must not go below 1 ns
            let frac_digits = frac.len() as u32;
            let scale = 10u64.pow(frac_digits.min(19));
            if frac_digits > 18 || factor % scale != 0 {
                return Err(TimeError::SubNanosecond(s.to_string()));
            }
            let frac_value: u64 = frac.parse().map_err(|_| TimeError::Parse(s.to_string()))?;
            total = total
                .checked_add(frac_value * (factor / scale))
                .filter(|ns| *ns <= MAX_HORIZON_NS)
                .ok_or(TimeError::Overflow {
                    value: int_value,
                    unit: unit_name,
                })?;
        }
        Ok(Duration(total))
    }
}

/// Time to put `size_bytes` on a link of `link_rate_bps`, rounded up to the
/// next whole nanosecond. With `include_overhead` the 20 bytes of preamble
/// and inter-frame gap are counted as well.
pub fn serialization_time(
    size_bytes: u64,
    link_rate_bps: u64,
    include_overhead: bool,
) -> Result<Duration, TimeError> {
    if link_rate_bps == 0 {
        return Err(TimeError::ZeroLinkRate);
    }
    let overhead = if include_overhead {
        ETHERNET_OVERHEAD_BYTES
    } else {
        0
    };
    let bits = (size_bytes as u128 + overhead as u128) * 8;
    let ns = (bits * NANOS_PER_SEC as u128).div_ceil(link_rate_bps as u128);
    Ok(Duration(u64::try_from(ns).unwrap_or(u64::MAX)))
}
