//! Discrete-event kernel.
//!
//! One run is strictly single-threaded and deterministic for a given
//! configuration and seed. Replicates run in parallel and are merged in seed
//! order.
//!
//! After `duration` no new beacons, timers, mobility steps or DRRM decisions
//! happen; the kernel keeps delivering what is already queued or on the air
//! (bounded by `drain_limit`) so every generated beacon gets an outcome.

mod event;
mod rng;
mod trace;

use std::collections::HashMap;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

pub use event::{Event, EventKind, EventQueue, Timer};
pub use rng::{stream, Stream, Streams};
pub use trace::{Trace, NO_VEHICLE};

use crate::bfa::{beacon_interval, Phase, RatKind};
use crate::config::{BeaconPhase, RunConfig, Scenario};
use crate::drrm::{nlm_check, project_adhoc_load, scheme_decide, Decision, DrrmState, Observation, SchemeKind};
use crate::error::SimError;
use crate::metrics::{AggregateMetrics, RunMetrics};
use crate::mobility::{advance, distance, init_fleet, Pose};
use crate::radio::{AdhocChannel, Dropped, LteCell, Propagation, TxQueue};
use crate::time::SimTime;

/// One application message.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Beacon {
    pub id: u64,
    pub source: usize,
    pub generated: SimTime,
}

/// What rides on an 802.11p frame besides the beacon itself.
#[derive(Debug, Clone, Copy)]
struct Frame {
    beacon: Beacon,
    /// Piggybacked neighbour reduction request.
    request: bool,
}

#[derive(Debug)]
struct PendingLte {
    beacon: Beacon,
    receivers: Vec<usize>,
}

#[derive(Debug)]
struct Vehicle {
    pose: Pose,
    drrm: DrrmState,
    queue: TxQueue<Beacon>,
    transmitting: bool,
    access_pending: bool,
    deferrals: u32,
    /// 802.11p frames sensed since the last NLM evaluation.
    sensed_frames: u64,
    /// 802.11p frame rate sensed over the last complete NLM interval.
    sensed_rate: f64,
}

struct Sim<'a, 'w> {
    sc: &'a Scenario,
    prop: Propagation,
    airtime: SimTime,
    end: SimTime,
    vehicles: Vec<Vehicle>,
    events: EventQueue,
    channel: AdhocChannel<Frame>,
    cell: LteCell,
    lte_pending: HashMap<u64, PendingLte>,
    next_delivery: u64,
    next_beacon: u64,
    rng: Streams,
    m: RunMetrics,
    trace: Trace<'w>,
}

/// Runs one simulation with `config.seed`.
pub fn run(config: &RunConfig) -> Result<RunMetrics, SimError> {
    run_traced(config, None)
}

/// Like [`run`], also writing the event trace to `out`.
pub fn run_traced(config: &RunConfig, out: Option<&mut dyn Write>) -> Result<RunMetrics, SimError> {
    config.validate()?;
    let mut sim = Sim::new(config, Trace::new(out));
    sim.bootstrap();
    sim.run_loop();
    sim.finish()
}

/// Runs `replicates` simulations with seeds `seed, seed + 1, ...`.
pub fn run_replicates(config: &RunConfig) -> Result<AggregateMetrics, SimError> {
    config.validate()?;
    let runs = (0..config.replicates as u64)
        .into_par_iter()
        .map(|i| {
            let mut c = config.clone();
            c.seed = config.seed.wrapping_add(i);
            run(&c)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AggregateMetrics::from_runs(runs))
}

impl<'a, 'w> Sim<'a, 'w> {
    fn new(cfg: &'a RunConfig, trace: Trace<'w>) -> Self {
        let sc = &cfg.scenario;
        let mut rng = Streams::new(cfg.seed);
        let poses = init_fleet(&sc.highway, &mut rng.mobility);
        let vehicles = poses
            .into_iter()
            .map(|pose| Vehicle {
                pose,
                drrm: DrrmState::new(&sc.qos),
                queue: TxQueue::new(sc.adhoc.queue_capacity),
                transmitting: false,
                access_pending: false,
                deferrals: 0,
                sensed_frames: 0,
                sensed_rate: 0.0,
            })
            .collect::<Vec<_>>();
        let m = RunMetrics {
            duration: cfg.duration,
            vho_per_vehicle: vec![0; vehicles.len()],
            ..RunMetrics::default()
        };
        Sim {
            sc,
            prop: sc.propagation(),
            airtime: sc.adhoc.airtime(),
            end: SimTime::from_secs(cfg.duration),
            vehicles,
            events: EventQueue::new(),
            channel: AdhocChannel::new(),
            cell: LteCell::new(sc.lte.clone()),
            lte_pending: HashMap::new(),
            next_delivery: 0,
            next_beacon: 0,
            rng,
            m,
            trace,
        }
    }

    fn bootstrap(&mut self) {
        for v in 0..self.vehicles.len() {
            let first = match self.sc.beacon_phase {
                BeaconPhase::Zero => SimTime::ZERO,
                BeaconPhase::Random => {
                    let iv = beacon_interval(&self.vehicles[v].drrm.bfa).as_secs();
                    SimTime::from_secs(self.rng.beacon.gen_range(0.0..iv))
                }
            };
            self.schedule_in_run(first, EventKind::BeaconDue { vehicle: v });
        }
        if let SchemeKind::Periodic(p) = self.sc.scheme {
            for v in 0..self.vehicles.len() {
                let offset = SimTime::from_secs(self.rng.scheme.gen_range(0.0..p));
                self.schedule_in_run(
                    offset,
                    EventKind::TimerExpiry {
                        vehicle: v,
                        timer: Timer::PeriodicEpoch,
                    },
                );
            }
        }
        self.schedule_in_run(SimTime::from_secs(self.sc.nlm_interval), EventKind::NlmEvaluation);
        self.schedule_in_run(SimTime::from_secs(self.sc.mobility_tick), EventKind::MobilityTick);
    }

    /// Schedules an event that only exists while the run is live.
    fn schedule_in_run(&mut self, at: SimTime, kind: EventKind) {
        if at <= self.end {
            self.events.schedule(at, kind);
        }
    }

    fn run_loop(&mut self) {
        let hard_stop = self.end + SimTime::from_secs(self.sc.drain_limit);
        while let Some(ev) = self.events.pop() {
            if ev.time > hard_stop {
                break;
            }
            self.m.events += 1;
            self.dispatch(ev);
        }
    }

    fn finish(mut self) -> Result<RunMetrics, SimError> {
        self.m.vho_count = self.m.vho_per_vehicle.iter().sum();
        self.m.unresolved = self.m.generated.saturating_sub(self.m.classified());
        self.m.trace_hash = self.trace.finish()?;
        Ok(self.m)
    }

    fn dispatch(&mut self, ev: Event) {
        let now = ev.time;
        match ev.kind {
            EventKind::BeaconDue { vehicle } => self.on_beacon_due(vehicle, now),
            EventKind::ChannelAccess { vehicle } => self.on_channel_access(vehicle, now),
            EventKind::AdhocReception { tx } => self.on_adhoc_reception(tx, now),
            EventKind::LteReception { delivery } => self.on_lte_reception(delivery, now),
            EventKind::NlmEvaluation => self.on_nlm(now),
            EventKind::TimerExpiry { vehicle, timer } => self.on_timer(vehicle, timer, now),
            EventKind::MobilityTick => self.on_mobility(now),
            EventKind::VhoComplete { vehicle } => self.on_vho_complete(vehicle, now),
        }
    }

    fn trace(&mut self, now: SimTime, vehicle: usize, kind: &str, detail: u64) {
        self.trace.record(now, vehicle, kind, detail);
    }

    fn audience_adhoc(&self, sender: usize) -> Vec<usize> {
        let sp = &self.vehicles[sender].pose;
        (0..self.vehicles.len())
            .filter(|&r| r != sender && self.prop.in_range(sp, &self.vehicles[r].pose))
            .collect()
    }

    fn audience_lte(&self, sender: usize) -> Vec<usize> {
        let sp = &self.vehicles[sender].pose;
        let range = self.sc.adhoc.range_m;
        (0..self.vehicles.len())
            .filter(|&r| r != sender && distance(sp, &self.vehicles[r].pose, &self.sc.highway) <= range)
            .collect()
    }

    /// Beacon that never reached the air still counts its audience as
    /// expected receptions.
    fn drop_beacon(&mut self, beacon: Beacon, why: Dropped, now: SimTime) {
        let audience = match self.vehicles[beacon.source].drrm.active_rat {
            RatKind::Adhoc80211p => self.audience_adhoc(beacon.source).len(),
            RatKind::Lte => self.audience_lte(beacon.source).len(),
        };
        self.m.expected_receptions += audience as u64;
        match why {
            Dropped::QueueOverflow => self.m.dropped_queue += 1,
            Dropped::CellSaturated => self.m.dropped_saturation += 1,
        }
        self.trace(now, beacon.source, "drop", beacon.id);
    }

    fn on_beacon_due(&mut self, v: usize, now: SimTime) {
        let beacon = Beacon {
            id: self.next_beacon,
            source: v,
            generated: now,
        };
        self.next_beacon += 1;
        self.m.generated += 1;
        self.trace(now, v, "beacon", beacon.id);

        let veh = &self.vehicles[v];
        if !veh.drrm.vho_in_progress() && veh.drrm.active_rat == RatKind::Lte {
            self.send_lte(beacon, now);
        } else {
            // 802.11p, or held back during a handover blackout
            match self.vehicles[v].queue.push(beacon) {
                Ok(()) => self.kick_mac(v, now),
                Err((why, b)) => self.drop_beacon(b, why, now),
            }
        }
        let next = now + beacon_interval(&self.vehicles[v].drrm.bfa);
        self.schedule_in_run(next, EventKind::BeaconDue { vehicle: v });
    }

    fn send_lte(&mut self, beacon: Beacon, now: SimTime) {
        let audience = self.audience_lte(beacon.source);
        let n = audience.len() as u64;
        let jitter = if self.sc.lte.uplink_jitter > 0.0 {
            self.rng.lte.gen::<f64>()
        } else {
            0.0
        };
        match self.cell.transmit(now, self.sc.adhoc.payload_bits(), audience, jitter) {
            Ok(delivery) => {
                self.m.tx_lte += 1;
                self.m.expected_receptions += n;
                let id = self.next_delivery;
                self.next_delivery += 1;
                self.lte_pending.insert(
                    id,
                    PendingLte {
                        beacon,
                        receivers: delivery.receivers,
                    },
                );
                self.events.schedule(delivery.at, EventKind::LteReception { delivery: id });
                self.trace(now, beacon.source, "tx-lte", beacon.id);
            }
            Err(why) => {
                self.m.expected_receptions += n;
                self.m.dropped_saturation += 1;
                debug_assert_eq!(why, Dropped::CellSaturated);
                self.trace(now, beacon.source, "drop", beacon.id);
            }
        }
    }

    /// Starts channel access if the vehicle has something to send on 802.11p.
    fn kick_mac(&mut self, v: usize, now: SimTime) {
        let veh = &self.vehicles[v];
        if veh.transmitting
            || veh.access_pending
            || veh.queue.is_empty()
            || veh.drrm.vho_in_progress()
            || veh.drrm.active_rat != RatKind::Adhoc80211p
        {
            return;
        }
        let at = now + self.jitter();
        self.vehicles[v].access_pending = true;
        self.events.schedule(at, EventKind::ChannelAccess { vehicle: v });
    }

    fn jitter(&mut self) -> SimTime {
        let max = self.sc.adhoc.max_jitter;
        if max > 0.0 {
            SimTime::from_secs(self.rng.mac.gen_range(0.0..max))
        } else {
            SimTime::ZERO
        }
    }

    fn on_channel_access(&mut self, v: usize, now: SimTime) {
        self.vehicles[v].access_pending = false;
        {
            let veh = &self.vehicles[v];
            if veh.transmitting
                || veh.queue.is_empty()
                || veh.drrm.vho_in_progress()
                || veh.drrm.active_rat != RatKind::Adhoc80211p
            {
                return;
            }
        }
        let pose = self.vehicles[v].pose;
        if let Some(busy) = self.channel.busy_until(&pose, now, &self.prop) {
            if self.vehicles[v].deferrals < self.sc.adhoc.max_deferrals {
                self.vehicles[v].deferrals += 1;
                self.vehicles[v].access_pending = true;
                let at = busy + self.jitter();
                self.events.schedule(at, EventKind::ChannelAccess { vehicle: v });
                return;
            }
        }
        let beacon = self.vehicles[v].queue.pop().expect("queue checked non-empty");
        let audience = self.audience_adhoc(v);
        for &r in &audience {
            self.vehicles[r].sensed_frames += 1;
        }
        let veh = &mut self.vehicles[v];
        veh.deferrals = 0;
        veh.transmitting = true;
        let request = std::mem::take(&mut veh.drrm.request_flag);
        self.m.tx_adhoc += 1;
        self.m.expected_receptions += audience.len() as u64;
        let (tx, end) = self
            .channel
            .start(v, pose, now, self.airtime, audience, Frame { beacon, request });
        self.events.schedule(end, EventKind::AdhocReception { tx });
        self.trace(now, v, "tx-adhoc", beacon.id);
    }

    fn on_adhoc_reception(&mut self, tx: u64, now: SimTime) {
        let vehicles = &self.vehicles;
        let Some(fin) = self.channel.finish(tx, |i| vehicles[i].pose, &self.prop) else {
            return;
        };
        let beacon = fin.payload.beacon;
        let latency = (now - beacon.generated).as_secs();
        let bits = self.sc.adhoc.payload_bits();
        for &r in &fin.delivered {
            self.m.actual_receptions += 1;
            self.m.latency.record(latency);
            self.m.delivered_bits_adhoc += bits;
            if fin.payload.request {
                self.vehicles[r].drrm.handle_neighbor_request(fin.sender);
            }
        }
        self.m.collision_losses += fin.collided.len() as u64;
        if fin.delivered.is_empty() {
            self.m.lost_all += 1;
        } else {
            self.m.delivered_at_least_once += 1;
        }
        self.trace(now, fin.sender, "rx-adhoc", fin.delivered.len() as u64);
        self.vehicles[fin.sender].transmitting = false;
        self.kick_mac(fin.sender, now);
    }

    fn on_lte_reception(&mut self, delivery: u64, now: SimTime) {
        let Some(p) = self.lte_pending.remove(&delivery) else {
            return;
        };
        let latency = (now - p.beacon.generated).as_secs();
        let bits = self.sc.adhoc.payload_bits();
        let n = p.receivers.len() as u64;
        self.m.actual_receptions += n;
        self.m.delivered_bits_lte += n * bits;
        for _ in 0..n {
            self.m.latency.record(latency);
        }
        if n == 0 {
            self.m.lost_all += 1;
        } else {
            self.m.delivered_at_least_once += 1;
        }
        self.trace(now, p.beacon.source, "rx-lte", n);
    }

    fn on_nlm(&mut self, now: SimTime) {
        self.trace(now, NO_VEHICLE, "nlm", 0);
        let interval = self.sc.nlm_interval;
        for v in 0..self.vehicles.len() {
            let sensed = std::mem::take(&mut self.vehicles[v].sensed_frames);
            self.vehicles[v].sensed_rate = sensed as f64 / interval;
            if self.vehicles[v].drrm.vho_in_progress() {
                continue;
            }
            let before = self.vehicles[v].drrm.bfa.deadline;
            self.vehicles[v].drrm.process_neighbor_requests(&self.sc.qos, now);
            self.sync_bfa_timer(v, before, now);
            self.decide(v, now);
        }
        let next = now + SimTime::from_secs(interval);
        self.schedule_in_run(next, EventKind::NlmEvaluation);
    }

    /// Runs the scheme's load-driven decision for one vehicle.
    fn decide(&mut self, v: usize, now: SimTime) {
        let veh = &self.vehicles[v];
        let load = nlm_check(&veh.queue, &self.sc.nlm);
        let projected = project_adhoc_load(veh.sensed_rate, veh.drrm.bfa.freq_hz, self.airtime, &self.sc.nlm);
        let obs = Observation {
            load,
            projected,
            epoch: false,
        };
        let decision = scheme_decide(&self.sc.scheme, &veh.drrm, &self.sc.qos, obs, now);
        let before = veh.drrm.bfa.deadline;
        self.act(v, decision, now);
        self.sync_bfa_timer(v, before, now);
    }

    fn act(&mut self, v: usize, decision: Decision, now: SimTime) {
        let target = match decision {
            Decision::VhoToLte => RatKind::Lte,
            Decision::VhoToAdhoc => RatKind::Adhoc80211p,
            other => {
                if other != Decision::Stay {
                    self.trace(now, v, decision_name(other), 0);
                }
                self.vehicles[v].drrm.apply(other, &self.sc.qos, now);
                return;
            }
        };
        if let Ok(done) = self.vehicles[v].drrm.execute_vho(target, now, self.sc.lte.vho_delay) {
            self.trace(now, v, decision_name(decision), 0);
            self.events.schedule(done, EventKind::VhoComplete { vehicle: v });
        }
    }

    /// Schedules the BFA timer if the deadline moved.
    fn sync_bfa_timer(&mut self, v: usize, before: Option<SimTime>, now: SimTime) {
        let after = self.vehicles[v].drrm.bfa.deadline;
        if after != before {
            if let Some(at) = after {
                if at > now {
                    self.schedule_in_run(
                        at,
                        EventKind::TimerExpiry {
                            vehicle: v,
                            timer: Timer::Bfa,
                        },
                    );
                }
            }
        }
    }

    fn on_timer(&mut self, v: usize, timer: Timer, now: SimTime) {
        match timer {
            Timer::Bfa => {
                let before = self.vehicles[v].drrm.bfa.deadline;
                if before != Some(now) {
                    return; // superseded
                }
                self.trace(now, v, "timer-bfa", self.vehicles[v].drrm.bfa.freq_hz as u64);
                let was_reduced = self.vehicles[v].drrm.bfa.phase == Phase::Reduced;
                self.vehicles[v].drrm.on_bfa_timer(&self.sc.qos, now);
                self.sync_bfa_timer(v, before, now);
                // back at the initial rate: reassess right away
                if was_reduced && !self.vehicles[v].drrm.vho_in_progress() {
                    self.decide(v, now);
                }
            }
            Timer::PeriodicEpoch => {
                self.trace(now, v, "timer-epoch", 0);
                let obs = Observation {
                    epoch: true,
                    ..Observation::load(nlm_check(&self.vehicles[v].queue, &self.sc.nlm))
                };
                let decision = scheme_decide(&self.sc.scheme, &self.vehicles[v].drrm, &self.sc.qos, obs, now);
                self.act(v, decision, now);
                if let SchemeKind::Periodic(p) = self.sc.scheme {
                    self.schedule_in_run(
                        now + SimTime::from_secs(p),
                        EventKind::TimerExpiry {
                            vehicle: v,
                            timer: Timer::PeriodicEpoch,
                        },
                    );
                }
            }
        }
    }

    fn on_mobility(&mut self, now: SimTime) {
        let dt = self.sc.mobility_tick;
        let len = self.sc.highway.length;
        for veh in &mut self.vehicles {
            veh.pose = advance(veh.pose, dt, len);
        }
        self.trace(now, NO_VEHICLE, "mobility", 0);
        self.schedule_in_run(now + SimTime::from_secs(dt), EventKind::MobilityTick);
    }

    fn on_vho_complete(&mut self, v: usize, now: SimTime) {
        let Some(target) = self.vehicles[v].drrm.complete_vho(now, self.sc.lte_dwell) else {
            return;
        };
        self.m.vho_per_vehicle[v] += 1;
        self.trace(now, v, "vho-complete", target as u64);
        match target {
            RatKind::Lte => {
                let held: Vec<Beacon> = self.vehicles[v].queue.drain().collect();
                for b in held {
                    self.send_lte(b, now);
                }
            }
            RatKind::Adhoc80211p => self.kick_mac(v, now),
        }
    }
}

fn decision_name(d: Decision) -> &'static str {
    match d {
        Decision::Stay => "stay",
        Decision::ReduceLocal => "reduce-local",
        Decision::RequestNeighbors => "request-neighbors",
        Decision::VhoToLte => "vho-to-lte",
        Decision::VhoToAdhoc => "vho-to-adhoc",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(vehicles: u32, duration: f64) -> RunConfig {
        let mut cfg = RunConfig::desk_scale();
        cfg.duration = duration;
        cfg.replicates = 1;
        cfg.scenario.highway.vehicle_count = vehicles;
        cfg
    }

    #[test]
    fn single_vehicle_zero_phase_one_beacon() {
        let mut cfg = tiny(1, 0.05);
        cfg.scenario.beacon_phase = BeaconPhase::Zero;
        let m = run(&cfg).unwrap();
        assert_eq!(m.generated, 1);
        // nobody to hear it
        assert_eq!(m.lost_all, 1);
        assert!(m.is_conserved());
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg = tiny(2, 1.0);
        cfg.scenario.qos.b_freq_initial = 0;
        assert!(matches!(run(&cfg), Err(SimError::Config(_))));
    }

    #[test]
    fn same_seed_is_deterministic() {
        let cfg = tiny(20, 5.0);
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a, b);
        let mut other = cfg.clone();
        other.seed += 1;
        assert_ne!(run(&other).unwrap().trace_hash, a.trace_hash);
    }

    #[test]
    fn trace_lines_match_event_count() {
        let cfg = tiny(5, 2.0);
        let mut buf = Vec::new();
        let m = run_traced(&cfg, Some(&mut buf)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,vehicle,kind,detail\n"));
        assert!(text.lines().count() as u64 > m.events / 2);
        let mut times = text.lines().skip(1).map(|l| l.split(',').next().unwrap().parse::<f64>().unwrap());
        let mut last = times.next().unwrap();
        for t in times {
            assert!(t >= last);
            last = t;
        }
        assert_eq!(run(&cfg).unwrap().trace_hash, m.trace_hash);
    }

    #[test]
    fn replicates_use_consecutive_seeds() {
        let mut cfg = tiny(10, 3.0);
        cfg.replicates = 3;
        let agg = run_replicates(&cfg).unwrap();
        assert_eq!(agg.runs.len(), 3);
        for (i, r) in agg.runs.iter().enumerate() {
            let mut c = cfg.clone();
            c.seed = cfg.seed + i as u64;
            assert_eq!(&run(&c).unwrap(), r);
        }
        assert!(agg.vho.min <= agg.vho.median && agg.vho.median <= agg.vho.max);
    }
}
