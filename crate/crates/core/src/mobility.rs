//! Constant-speed lane motion on a ring highway.
//!
//! Vehicles leaving the end of the segment re-enter at the start, which keeps
//! the density (and therefore the offered channel load) constant for the
//! whole run. There is no car following and no lane changing.

use rand::Rng;

use crate::error::ConfigError;

const KMH_PER_MS: f64 = 3.6;

#[derive(Debug, Clone, PartialEq)]
pub struct HighwayConfig {
    /// Segment length in meters.
    pub length: f64,
    pub lane_count: u32,
    /// Lane width in meters.
    pub lane_width: f64,
    pub vehicle_count: u32,
    /// Slowest vehicle, km/h.
    pub speed_min_kmh: f64,
    /// Fastest vehicle, km/h.
    pub speed_max_kmh: f64,
}

impl Default for HighwayConfig {
    fn default() -> Self {
        HighwayConfig {
            length: 1000.0,
            lane_count: 3,
            lane_width: 5.0,
            vehicle_count: 150,
            speed_min_kmh: 50.0,
            speed_max_kmh: 130.0,
        }
    }
}

impl HighwayConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.length > 0.0) || !self.length.is_finite() {
            return Err(ConfigError::invalid("highway.length must be positive"));
        }
        if self.lane_count == 0 {
            return Err(ConfigError::invalid("highway.laneCount must be at least 1"));
        }
        if !(self.lane_width >= 0.0) {
            return Err(ConfigError::invalid("highway.laneWidth must be non-negative"));
        }
        if !(self.speed_min_kmh >= 0.0) || !(self.speed_min_kmh <= self.speed_max_kmh) {
            return Err(ConfigError::invalid(
                "highway speeds must satisfy 0 <= speedMin <= speedMax",
            ));
        }
        Ok(())
    }

    pub fn speed_min_ms(&self) -> f64 {
        self.speed_min_kmh / KMH_PER_MS
    }

    pub fn speed_max_ms(&self) -> f64 {
        self.speed_max_kmh / KMH_PER_MS
    }
}

/// Position and speed of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub lane: u32,
    /// Longitudinal position in `[0, length)`.
    pub x: f64,
    /// Speed in m/s.
    pub speed: f64,
}

/// Places `vehicle_count` vehicles: lanes round-robin, position and speed
/// uniform.
pub fn init_fleet<R: Rng + ?Sized>(config: &HighwayConfig, rng: &mut R) -> Vec<Pose> {
    let (lo, hi) = (config.speed_min_ms(), config.speed_max_ms());
    (0..config.vehicle_count)
        .map(|i| {
            let x = rng.gen_range(0.0..config.length);
            let speed = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
            Pose {
                lane: i % config.lane_count,
                x,
                speed,
            }
        })
        .collect()
}

pub fn advance(pose: Pose, dt: f64, length: f64) -> Pose {
    debug_assert!(dt >= 0.0);
    let mut x = (pose.x + pose.speed * dt).rem_euclid(length);
    // rem_euclid can round up to `length` for tiny negative remainders
    if x >= length {
        x = 0.0;
    }
    Pose { x, ..pose }
}

/// Euclidean distance with ring-shortest longitudinal separation.
pub fn distance(a: &Pose, b: &Pose, config: &HighwayConfig) -> f64 {
    let dx = (a.x - b.x).abs();
    let dx = dx.min(config.length - dx);
    let dy = config.lane_width * (a.lane as f64 - b.lane as f64).abs();
    dx.hypot(dy)
}
