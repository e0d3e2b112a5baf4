//! Beaconing frequency adaptation.
//!
//! An application declares how far its beacon rate may drop (`r_tolerance`)
//! and by how much each adaptation round lowers it (`r_factor`), both as
//! fractions of the initial rate. Two timers bound how long the reduced rate
//! may be held and how long the initial rate must be restored afterwards.

use crate::error::{CannotReduce, ConfigError};
use crate::time::SimTime;

/// Slack for comparing fractions that were typed as decimal percentages.
const EPS: f64 = 1e-9;

/// Upper bound on beaconing frequency accepted by [`QosProfile`].
pub const MAX_BEACON_HZ: u32 = 10;

/// Beaconing requirements of the (single) application on a vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QosProfile {
    /// Initial beaconing frequency in Hz.
    pub b_freq_initial: u32,
    /// Reduction applied per adaptation round, as a fraction of `b_freq_initial`.
    pub r_factor: f64,
    /// Maximum tolerated reduction, as a fraction of `b_freq_initial`.
    pub r_tolerance: f64,
    /// Longest time the application may stay at a reduced rate, seconds.
    pub t_reduced: f64,
    /// Shortest time the application must run at the initial rate after a
    /// reduced epoch, seconds.
    pub t_initial: f64,
}

impl Default for QosProfile {
    fn default() -> Self {
        QosProfile {
            b_freq_initial: 10,
            r_factor: 0.25,
            r_tolerance: 0.50,
            t_reduced: 10.0,
            t_initial: 2.0,
        }
    }
}

impl QosProfile {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(1..=MAX_BEACON_HZ).contains(&self.b_freq_initial) {
            return Err(ConfigError::invalid(format!(
                "qos.bFreqInitial must be within 1..={MAX_BEACON_HZ} Hz, got {}",
                self.b_freq_initial
            )));
        }
        for (name, v) in [("qos.rFactor", self.r_factor), ("qos.rTolerance", self.r_tolerance)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError::invalid(format!("{name} must be within [0, 1], got {v}")));
            }
        }
        if !(self.t_reduced > 0.0) || !self.t_reduced.is_finite() {
            return Err(ConfigError::invalid(format!(
                "qos.tReduced must be positive, got {}",
                self.t_reduced
            )));
        }
        if !(self.t_initial >= 0.0) || !self.t_initial.is_finite() {
            return Err(ConfigError::invalid(format!(
                "qos.tInitial must be non-negative, got {}",
                self.t_initial
            )));
        }
        Ok(())
    }
}

/// Radio access technology used for transmitting beacons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RatKind {
    Adhoc80211p,
    Lte,
}

impl RatKind {
    pub fn other(self) -> RatKind {
        match self {
            RatKind::Adhoc80211p => RatKind::Lte,
            RatKind::Lte => RatKind::Adhoc80211p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Initial,
    Reduced,
}

/// Per-vehicle adaptation state.
///
/// In `Reduced` the deadline is the forced return to the initial rate. In
/// `Initial` a deadline, if set, is the end of the minimum dwell during which
/// no reduction may start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BfaState {
    pub freq_hz: u32,
    pub phase: Phase,
    pub deadline: Option<SimTime>,
}

impl BfaState {
    pub fn new(profile: &QosProfile) -> Self {
        BfaState {
            freq_hz: profile.b_freq_initial,
            phase: Phase::Initial,
            deadline: None,
        }
    }

    /// Whether a reduction round may start at `now` (timers only; tolerance
    /// is checked by [`bfa_step`]).
    pub fn reduction_allowed(&self, now: SimTime) -> bool {
        match (self.phase, self.deadline) {
            (Phase::Reduced, _) => true,
            (Phase::Initial, Some(until)) => now >= until,
            (Phase::Initial, None) => true,
        }
    }

    /// Fraction of the initial rate already given up.
    pub fn reduction_so_far(&self, profile: &QosProfile) -> f64 {
        let initial = profile.b_freq_initial as f64;
        (initial - self.freq_hz as f64) / initial
    }

    /// One guarded adaptation round: runs [`bfa_step`] and applies the
    /// result. Each new rate gets a full `t_reduced` period. A step that does not strictly
    /// lower the rate (zero factor, 1 Hz floor) counts as exhausted.
    pub fn reduce(&mut self, profile: &QosProfile, now: SimTime) -> Result<u32, CannotReduce> {
        if !self.reduction_allowed(now) {
            return Err(CannotReduce);
        }
        let next = bfa_step(profile, self)?;
        if next >= self.freq_hz {
            return Err(CannotReduce);
        }
        self.freq_hz = next;
        self.phase = Phase::Reduced;
        self.deadline = Some(now + SimTime::from_secs(profile.t_reduced));
        Ok(next)
    }

    /// Reduction permitted right now, without mutating.
    pub fn can_reduce(&self, profile: &QosProfile, now: SimTime) -> bool {
        let mut probe = *self;
        probe.reduce(profile, now).is_ok()
    }
}

/// Rounds half-way cases towards positive infinity.
fn round_half_up(x: f64) -> f64 {
    (x + 0.5 + EPS).floor()
}

/// Computes the next reduced frequency.
///
/// The tolerance is checked against the reduction accumulated *before* this
/// step, so the final step may overshoot it (10 Hz, 25 %, 50 % goes
/// 8, 6, 4). The result never drops below 1 Hz.
pub fn bfa_step(profile: &QosProfile, state: &BfaState) -> Result<u32, CannotReduce> {
    debug_assert!(state.freq_hz >= 1);
    if state.reduction_so_far(profile) >= profile.r_tolerance - EPS {
        return Err(CannotReduce);
    }
    let step = profile.r_factor * profile.b_freq_initial as f64;
    let next = round_half_up(state.freq_hz as f64 - step);
    Ok(next.max(1.0) as u32)
}

/// Handles expiry of the phase deadline at `now`.
///
/// `pending_request` is whether a reduction request (local or from a
/// neighbour) is waiting for the minimum dwell to end.
pub fn bfa_on_timer(
    profile: &QosProfile,
    state: &BfaState,
    now: SimTime,
    pending_request: bool,
) -> BfaState {
    match state.phase {
        Phase::Reduced => BfaState {
            freq_hz: profile.b_freq_initial,
            phase: Phase::Initial,
            deadline: (profile.t_initial > 0.0).then(|| now + SimTime::from_secs(profile.t_initial)),
        },
        Phase::Initial => {
            let mut next = BfaState {
                deadline: None,
                ..*state
            };
            if pending_request {
                // tolerance 0 leaves the state in Initial
                let _ = next.reduce(profile, now);
            }
            next
        }
    }
}

/// Spacing between consecutive beacons at the current rate.
pub fn beacon_interval(state: &BfaState) -> SimTime {
    debug_assert!(state.freq_hz >= 1);
    SimTime::from_nanos(1_000_000_000 / state.freq_hz as u64)
}
