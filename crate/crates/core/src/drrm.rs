//! Distributed radio resource management.
//!
//! Each vehicle runs one [`DrrmState`]. The network load monitor compares the
//! 802.11p transmit-queue fill against a threshold; on overload the
//! QoS-aware scheme escalates through local rate reduction, a reduction
//! request to neighbours, and finally a vertical handover to LTE.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::bfa::{bfa_on_timer, BfaState, Phase, QosProfile, RatKind};
use crate::error::{ConfigError, InvalidTransition};
use crate::radio::{queue_fill_ratio, TxQueue};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlmConfig {
    /// Overload threshold as a fraction of queue capacity.
    pub threshold: f64,
}

impl Default for NlmConfig {
    fn default() -> Self {
        NlmConfig { threshold: 0.85 }
    }
}

impl NlmConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(ConfigError::invalid(format!(
                "drrm.nlmThreshold must be in (0, 1], got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadStatus {
    Normal,
    Overload,
}

pub fn nlm_check<T>(q: &TxQueue<T>, cfg: &NlmConfig) -> LoadStatus {
    if queue_fill_ratio(q) >= cfg.threshold {
        LoadStatus::Overload
    } else {
        LoadStatus::Normal
    }
}

/// Expected 802.11p load if this vehicle returned to the ad hoc channel:
/// observed neighbourhood frame rate plus its own beacon rate, converted to
/// channel occupancy and compared against the NLM threshold.
pub fn project_adhoc_load(sensed_frames_per_s: f64, own_hz: u32, airtime: SimTime, cfg: &NlmConfig) -> LoadStatus {
    let utilization = (sensed_frames_per_s + own_hz as f64) * airtime.as_secs();
    if utilization >= cfg.threshold {
        LoadStatus::Overload
    } else {
        LoadStatus::Normal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchemeKind {
    QosAware,
    /// Toggle RAT every `period` seconds regardless of load.
    Periodic(f64),
    NoBfa,
    NoLte,
}

impl SchemeKind {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if let SchemeKind::Periodic(p) = self {
            if !(*p > 0.0) || !p.is_finite() {
                return Err(ConfigError::invalid(format!(
                    "periodic scheme needs a positive period, got {p}"
                )));
            }
        }
        Ok(())
    }

    pub fn uses_lte(&self) -> bool {
        !matches!(self, SchemeKind::NoLte)
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemeKind::QosAware => f.write_str("qos"),
            SchemeKind::Periodic(p) => write!(f, "periodic:{p}"),
            SchemeKind::NoBfa => f.write_str("nobfa"),
            SchemeKind::NoLte => f.write_str("nolte"),
        }
    }
}

impl FromStr for SchemeKind {
    type Err = ConfigError;

    /// Accepts `qos`, `nobfa`, `nolte`, `periodic` (4 s) and `periodic:<s>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let kind = match s.to_ascii_lowercase().as_str() {
            "qos" | "qosaware" | "qos-aware" => SchemeKind::QosAware,
            "nobfa" | "no-bfa" => SchemeKind::NoBfa,
            "nolte" | "no-lte" => SchemeKind::NoLte,
            "periodic" => SchemeKind::Periodic(4.0),
            other => match other.strip_prefix("periodic:") {
                Some(p) => SchemeKind::Periodic(
                    p.parse()
                        .map_err(|_| ConfigError::value("scheme", s, "period must be a number of seconds"))?,
                ),
                None => {
                    return Err(ConfigError::value(
                        "scheme",
                        s,
                        "expected qos|periodic[:S]|nobfa|nolte",
                    ))
                }
            },
        };
        kind.validate()?;
        Ok(kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Stay,
    ReduceLocal,
    RequestNeighbors,
    VhoToLte,
    VhoToAdhoc,
}

/// Where an overload episode currently is in the escalation ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Escalation {
    Idle,
    /// Local reduction applied at the previous evaluation.
    ReducedLocally,
    /// Neighbour request sent at the previous evaluation.
    RequestedNeighbors,
}

/// What the kernel observed for one DRRM evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    /// Current 802.11p queue load.
    pub load: LoadStatus,
    /// Projected 802.11p load if the vehicle transmitted there.
    pub projected: LoadStatus,
    /// A periodic-scheme epoch boundary was reached.
    pub epoch: bool,
}

impl Observation {
    pub fn load(load: LoadStatus) -> Self {
        Observation {
            load,
            projected: load,
            epoch: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DrrmState {
    pub active_rat: RatKind,
    pub bfa: BfaState,
    pub pending_neighbor_requests: BTreeSet<usize>,
    pub vho_in_progress_until: Option<SimTime>,
    pub vho_target: Option<RatKind>,
    pub lte_dwell_until: Option<SimTime>,
    pub escalation: Escalation,
    /// Piggyback a reduction request on the next outgoing 802.11p beacon.
    pub request_flag: bool,
    /// Completed handovers.
    pub vho_count: u64,
}

impl DrrmState {
    pub fn new(profile: &QosProfile) -> Self {
        DrrmState {
            active_rat: RatKind::Adhoc80211p,
            bfa: BfaState::new(profile),
            pending_neighbor_requests: BTreeSet::new(),
            vho_in_progress_until: None,
            vho_target: None,
            lte_dwell_until: None,
            escalation: Escalation::Idle,
            request_flag: false,
            vho_count: 0,
        }
    }

    pub fn in_blackout(&self, now: SimTime) -> bool {
        self.vho_in_progress_until.is_some_and(|until| now < until)
    }

    pub fn vho_in_progress(&self) -> bool {
        self.vho_target.is_some()
    }

    /// Records the effect of a non-handover decision.
    pub fn apply(&mut self, decision: Decision, profile: &QosProfile, now: SimTime) {
        match decision {
            Decision::Stay => self.escalation = Escalation::Idle,
            Decision::ReduceLocal => {
                if self.bfa.reduce(profile, now).is_ok() {
                    self.escalation = Escalation::ReducedLocally;
                }
            }
            Decision::RequestNeighbors => {
                self.request_flag = true;
                self.escalation = Escalation::RequestedNeighbors;
            }
            Decision::VhoToLte | Decision::VhoToAdhoc => {}
        }
    }

    /// Starts a vertical handover; returns its completion time.
    pub fn execute_vho(&mut self, target: RatKind, now: SimTime, vho_delay: f64) -> Result<SimTime, InvalidTransition> {
        if self.vho_in_progress() {
            return Err(InvalidTransition::VhoInProgress);
        }
        if target == self.active_rat {
            return Err(InvalidTransition::AlreadyActive);
        }
        let until = now + SimTime::from_secs(vho_delay);
        self.vho_in_progress_until = Some(until);
        self.vho_target = Some(target);
        Ok(until)
    }

    /// Finishes the handover started by [`execute_vho`](Self::execute_vho).
    pub fn complete_vho(&mut self, now: SimTime, lte_dwell: f64) -> Option<RatKind> {
        let target = self.vho_target.take()?;
        self.vho_in_progress_until = None;
        self.active_rat = target;
        self.vho_count += 1;
        self.escalation = Escalation::Idle;
        self.lte_dwell_until = match target {
            RatKind::Lte => Some(now + SimTime::from_secs(lte_dwell)),
            RatKind::Adhoc80211p => None,
        };
        Some(target)
    }

    /// Notes a reduction request piggybacked on a neighbour's beacon. Only
    /// vehicles transmitting on 802.11p take part.
    pub fn handle_neighbor_request(&mut self, requester: usize) {
        if self.active_rat == RatKind::Adhoc80211p {
            self.pending_neighbor_requests.insert(requester);
        }
    }

    /// Serves pending neighbour requests with one reduction round. Requests
    /// arriving during the minimum dwell at the initial rate are kept until
    /// the dwell ends; requests that cannot be honoured are dropped.
    pub fn process_neighbor_requests(&mut self, profile: &QosProfile, now: SimTime) -> Option<u32> {
        if self.pending_neighbor_requests.is_empty() || !self.bfa.reduction_allowed(now) {
            return None;
        }
        self.pending_neighbor_requests.clear();
        self.bfa.reduce(profile, now).ok()
    }

    /// Handles expiry of the BFA phase timer.
    pub fn on_bfa_timer(&mut self, profile: &QosProfile, now: SimTime) {
        let before = self.bfa;
        let pending = before.phase == Phase::Initial && !self.pending_neighbor_requests.is_empty();
        self.bfa = bfa_on_timer(profile, &before, now, pending);
        if pending {
            self.pending_neighbor_requests.clear();
        }
    }
}

/// The QoS-aware RAT selection flow.
///
/// On 802.11p an overload first lowers the local rate, then asks the
/// neighbours to do the same, alternating while local reduction is still
/// possible. Only when local reduction is exhausted and a neighbour round
/// has already gone out does the vehicle hand over to LTE. On LTE it returns
/// once the dwell has expired and the projected ad hoc load is normal.
pub fn qos_aware_decide(state: &DrrmState, profile: &QosProfile, obs: Observation, now: SimTime) -> Decision {
    match state.active_rat {
        RatKind::Lte => lte_return(state, obs, now),
        RatKind::Adhoc80211p => {
            if obs.load == LoadStatus::Normal {
                return Decision::Stay;
            }
            if state.escalation == Escalation::ReducedLocally {
                return Decision::RequestNeighbors;
            }
            if state.bfa.can_reduce(profile, now) {
                return Decision::ReduceLocal;
            }
            if state.escalation != Escalation::RequestedNeighbors {
                return Decision::RequestNeighbors;
            }
            Decision::VhoToLte
        }
    }
}

fn lte_return(state: &DrrmState, obs: Observation, now: SimTime) -> Decision {
    let dwell_over = state.lte_dwell_until.is_none_or(|until| now >= until);
    if dwell_over && obs.projected == LoadStatus::Normal {
        Decision::VhoToAdhoc
    } else {
        Decision::Stay
    }
}

/// Dispatches to the selected scheme.
pub fn scheme_decide(
    kind: &SchemeKind,
    state: &DrrmState,
    profile: &QosProfile,
    obs: Observation,
    now: SimTime,
) -> Decision {
    match kind {
        SchemeKind::QosAware => qos_aware_decide(state, profile, obs, now),
        SchemeKind::Periodic(_) => match (obs.epoch, state.active_rat) {
            (false, _) => Decision::Stay,
            (true, RatKind::Adhoc80211p) => Decision::VhoToLte,
            (true, RatKind::Lte) => Decision::VhoToAdhoc,
        },
        SchemeKind::NoBfa => match state.active_rat {
            RatKind::Lte => lte_return(state, obs, now),
            RatKind::Adhoc80211p if obs.load == LoadStatus::Overload => Decision::VhoToLte,
            RatKind::Adhoc80211p => Decision::Stay,
        },
        SchemeKind::NoLte => Decision::Stay,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: f64) -> SimTime {
        SimTime::from_secs(s)
    }

    fn queue(len: usize) -> TxQueue<usize> {
        let mut q = TxQueue::new(64);
        for i in 0..len {
            q.push(i).unwrap();
        }
        q
    }

    fn overload() -> Observation {
        Observation::load(LoadStatus::Overload)
    }

    /// Runs the QoS-aware flow against a permanently overloaded channel and
    /// returns the decision sequence up to the handover.
    fn escalate(profile: &QosProfile) -> Vec<Decision> {
        let mut st = DrrmState::new(profile);
        let mut out = Vec::new();
        for i in 0..64 {
            let now = t(i as f64 * 0.5);
            let d = qos_aware_decide(&st, profile, overload(), now);
            out.push(d);
            if d == Decision::VhoToLte {
                return out;
            }
            st.apply(d, profile, now);
        }
        panic!("no handover after 64 evaluations: {out:?}");
    }

    #[test]
    fn nlm_threshold_examples() {
        let cfg = NlmConfig::default();
        assert_eq!(nlm_check(&queue(54), &cfg), LoadStatus::Normal);
        assert_eq!(nlm_check(&queue(55), &cfg), LoadStatus::Overload);
        assert_eq!(nlm_check(&queue(0), &cfg), LoadStatus::Normal);
    }

    #[test]
    fn normal_load_on_adhoc_stays() {
        let p = QosProfile::default();
        let st = DrrmState::new(&p);
        assert_eq!(
            qos_aware_decide(&st, &p, Observation::load(LoadStatus::Normal), t(1.0)),
            Decision::Stay
        );
    }

    #[test]
    fn escalation_ladder_for_worked_example() {
        use Decision::*;
        let p = QosProfile::default();
        assert_eq!(
            escalate(&p),
            vec![
                ReduceLocal,
                RequestNeighbors,
                ReduceLocal,
                RequestNeighbors,
                ReduceLocal,
                RequestNeighbors,
                VhoToLte
            ]
        );
    }

    #[test]
    fn larger_factor_escalates_sooner() {
        let aggressive = QosProfile {
            r_factor: 0.5,
            ..QosProfile::default()
        };
        let gentle = QosProfile {
            r_factor: 0.1,
            ..QosProfile::default()
        };
        assert_eq!(escalate(&aggressive).len(), 3);
        assert_eq!(escalate(&gentle).len(), 11);
    }

    #[test]
    fn never_hands_over_while_reduction_possible() {
        for rf in [0.0, 0.1, 0.25, 0.5, 1.0] {
            for tol in [0.0, 0.2, 0.5, 0.8, 1.0] {
                let p = QosProfile {
                    r_factor: rf,
                    r_tolerance: tol,
                    ..QosProfile::default()
                };
                let mut st = DrrmState::new(&p);
                let mut handed_over = false;
                for i in 0..64 {
                    let now = t(i as f64 * 0.5);
                    let d = qos_aware_decide(&st, &p, overload(), now);
                    if d == Decision::VhoToLte {
                        assert!(!st.bfa.can_reduce(&p, now));
                        assert_eq!(st.escalation, Escalation::RequestedNeighbors);
                        handed_over = true;
                        break;
                    }
                    st.apply(d, &p, now);
                }
                assert!(handed_over, "rf={rf} tol={tol}");
            }
        }
    }

    #[test]
    fn dwell_at_initial_rate_skips_to_neighbours_then_handover() {
        let p = QosProfile::default();
        let mut st = DrrmState::new(&p);
        st.bfa.deadline = Some(t(10.0));
        assert_eq!(qos_aware_decide(&st, &p, overload(), t(5.0)), Decision::RequestNeighbors);
        st.apply(Decision::RequestNeighbors, &p, t(5.0));
        assert!(st.request_flag);
        assert_eq!(qos_aware_decide(&st, &p, overload(), t(5.5)), Decision::VhoToLte);
    }

    #[test]
    fn lte_returns_after_dwell_when_projection_normal() {
        let p = QosProfile::default();
        let mut st = DrrmState::new(&p);
        st.execute_vho(RatKind::Lte, t(10.0), 0.5).unwrap();
        st.complete_vho(t(10.5), 5.0);
        assert_eq!(st.lte_dwell_until, Some(t(15.5)));
        let normal = Observation::load(LoadStatus::Normal);
        assert_eq!(qos_aware_decide(&st, &p, normal, t(15.0)), Decision::Stay);
        assert_eq!(qos_aware_decide(&st, &p, normal, t(15.5)), Decision::VhoToAdhoc);
        let busy = Observation {
            load: LoadStatus::Normal,
            projected: LoadStatus::Overload,
            epoch: false,
        };
        assert_eq!(qos_aware_decide(&st, &p, busy, t(16.0)), Decision::Stay);
    }

    #[test]
    fn vho_timing_and_double_start() {
        let p = QosProfile::default();
        let mut st = DrrmState::new(&p);
        assert_eq!(st.execute_vho(RatKind::Lte, t(10.0), 0.5), Ok(t(10.5)));
        assert!(st.in_blackout(t(10.2)));
        assert_eq!(
            st.execute_vho(RatKind::Lte, t(10.2), 0.5),
            Err(InvalidTransition::VhoInProgress)
        );
        assert_eq!(st.active_rat, RatKind::Adhoc80211p);
        assert_eq!(st.complete_vho(t(10.5), 5.0), Some(RatKind::Lte));
        assert_eq!(st.active_rat, RatKind::Lte);
        assert_eq!(st.vho_count, 1);
        assert!(!st.in_blackout(t(10.5)));
        assert_eq!(
            st.execute_vho(RatKind::Lte, t(11.0), 0.5),
            Err(InvalidTransition::AlreadyActive)
        );
    }

    #[test]
    fn neighbor_request_with_headroom_reduces() {
        let p = QosProfile::default();
        let mut st = DrrmState::new(&p);
        st.handle_neighbor_request(7);
        assert_eq!(st.process_neighbor_requests(&p, t(1.0)), Some(8));
        assert!(st.pending_neighbor_requests.is_empty());
        assert_eq!(st.bfa.phase, Phase::Reduced);
    }

    #[test]
    fn neighbor_request_when_exhausted_is_ignored() {
        let p = QosProfile::default();
        let mut st = DrrmState::new(&p);
        st.bfa = BfaState {
            freq_hz: 4,
            phase: Phase::Reduced,
            deadline: Some(t(20.0)),
        };
        st.handle_neighbor_request(3);
        assert_eq!(st.process_neighbor_requests(&p, t(1.0)), None);
        assert_eq!(st.bfa.freq_hz, 4);
        assert!(st.pending_neighbor_requests.is_empty());
    }

    #[test]
    fn neighbor_request_deferred_through_minimum_dwell() {
        let p = QosProfile::default();
        let mut st = DrrmState::new(&p);
        st.bfa = BfaState {
            freq_hz: 10,
            phase: Phase::Initial,
            deadline: Some(t(25.0)),
        };
        st.handle_neighbor_request(3);
        assert_eq!(st.process_neighbor_requests(&p, t(24.0)), None);
        assert_eq!(st.pending_neighbor_requests.len(), 1);
        st.on_bfa_timer(&p, t(25.0));
        assert_eq!(st.bfa.phase, Phase::Reduced);
        assert_eq!(st.bfa.freq_hz, 8);
        assert_eq!(st.bfa.deadline, Some(t(25.0 + p.t_reduced)));
        assert!(st.pending_neighbor_requests.is_empty());
    }

    #[test]
    fn lte_vehicle_ignores_neighbor_requests() {
        let p = QosProfile::default();
        let mut st = DrrmState::new(&p);
        st.active_rat = RatKind::Lte;
        st.handle_neighbor_request(1);
        assert!(st.pending_neighbor_requests.is_empty());
    }

    #[test]
    fn baseline_schemes() {
        let p = QosProfile::default();
        let st = DrrmState::new(&p);
        let epoch = Observation {
            epoch: true,
            ..Observation::load(LoadStatus::Normal)
        };
        let decide = |k: SchemeKind, o| scheme_decide(&k, &st, &p, o, t(2.0));
        assert_eq!(decide(SchemeKind::NoBfa, overload()), Decision::VhoToLte);
        assert_eq!(decide(SchemeKind::NoLte, overload()), Decision::Stay);
        assert_eq!(decide(SchemeKind::Periodic(2.0), overload()), Decision::Stay);
        assert_eq!(decide(SchemeKind::Periodic(2.0), epoch), Decision::VhoToLte);
        assert_eq!(decide(SchemeKind::QosAware, overload()), Decision::ReduceLocal);
    }

    #[test]
    fn projected_load() {
        let cfg = NlmConfig::default();
        let air = SimTime::from_secs(0.004);
        assert_eq!(project_adhoc_load(100.0, 10, air, &cfg), LoadStatus::Normal);
        assert_eq!(project_adhoc_load(210.0, 10, air, &cfg), LoadStatus::Overload);
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("qos".parse::<SchemeKind>().unwrap(), SchemeKind::QosAware);
        assert_eq!("periodic:6".parse::<SchemeKind>().unwrap(), SchemeKind::Periodic(6.0));
        assert_eq!("NoBfa".parse::<SchemeKind>().unwrap(), SchemeKind::NoBfa);
        assert_eq!("nolte".parse::<SchemeKind>().unwrap(), SchemeKind::NoLte);
        assert!("periodic:0".parse::<SchemeKind>().is_err());
        assert!("lte-only".parse::<SchemeKind>().is_err());
        assert_eq!(SchemeKind::Periodic(2.5).to_string(), "periodic:2.5");
    }
}
