//! Radio models for both access technologies.
//!
//! The 802.11p side is a carrier-sense broadcast medium with per-receiver
//! collision detection on top of a three-segment log-distance path loss.
//! The LTE side is a fixed-latency relay through the base station and the
//! ITS server, limited only by cell capacity.

use std::collections::VecDeque;

use thiserror::Error;

use crate::error::{ConfigError, DomainError};
use crate::mobility::{distance, HighwayConfig, Pose};
use crate::time::SimTime;

/// Distance beyond the nominal range at which the calibrated boundary sits,
/// so that the nominal range itself still receives.
const CALIBRATION_MARGIN_M: f64 = 0.5;

/// Free-space loss in dB at `d_m` meters for a carrier at `f_mhz`.
pub fn free_space_loss_db(f_mhz: f64, d_m: f64) -> f64 {
    32.45 + 20.0 * f_mhz.log10() + 20.0 * (d_m / 1000.0).log10()
}

/// Three-segment log-distance path loss.
#[derive(Debug, Clone, PartialEq)]
pub struct PathLossModel {
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
    pub n0: f64,
    pub n1: f64,
    pub n2: f64,
    /// Loss at `d0`, dB.
    pub ref_loss_db: f64,
    pub tx_power_dbm: f64,
    pub sensitivity_dbm: f64,
}

impl Default for PathLossModel {
    /// 5.8 GHz, 20 dBm, sensitivity calibrated to a 250 m range.
    fn default() -> Self {
        PathLossModel {
            d0: 1.0,
            d1: 200.0,
            d2: 500.0,
            n0: 1.9,
            n1: 3.8,
            n2: 3.8,
            ref_loss_db: free_space_loss_db(5800.0, 1.0),
            tx_power_dbm: 20.0,
            sensitivity_dbm: 0.0,
        }
        .calibrated(250.0)
    }
}

impl PathLossModel {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.d0 > 0.0 && self.d0 < self.d1 && self.d1 < self.d2) {
            return Err(ConfigError::invalid("path loss breakpoints must satisfy 0 < d0 < d1 < d2"));
        }
        if !(self.n0 > 0.0 && self.n1 > 0.0 && self.n2 > 0.0) {
            return Err(ConfigError::invalid("path loss exponents must be positive"));
        }
        Ok(())
    }

    pub fn path_loss_db(&self, d: f64) -> Result<f64, DomainError> {
        if !(d > 0.0) {
            return Err(DomainError(d));
        }
        let seg = |base: f64, n: f64, from: f64, to: f64| base + 10.0 * n * (to / from).log10();
        let loss = if d <= self.d1 {
            seg(self.ref_loss_db, self.n0, self.d0, d)
        } else {
            let at_d1 = seg(self.ref_loss_db, self.n0, self.d0, self.d1);
            if d <= self.d2 {
                seg(at_d1, self.n1, self.d1, d)
            } else {
                let at_d2 = seg(at_d1, self.n1, self.d1, self.d2);
                seg(at_d2, self.n2, self.d2, d)
            }
        };
        Ok(loss)
    }

    /// Received power above sensitivity. Zero distance always receives.
    pub fn can_receive(&self, d: f64) -> bool {
        if d <= 0.0 {
            return true;
        }
        match self.path_loss_db(d) {
            Ok(loss) => self.tx_power_dbm - loss >= self.sensitivity_dbm,
            Err(_) => false,
        }
    }

    /// Sets the sensitivity so that the reception boundary sits just past
    /// `range_m`.
    pub fn calibrated(mut self, range_m: f64) -> Self {
        let target = range_m + CALIBRATION_MARGIN_M;
        self.sensitivity_dbm = self.tx_power_dbm - self.path_loss_db(target).unwrap_or(f64::INFINITY);
        self
    }

    /// Largest distance that still receives, found by bisection over
    /// `(0, max_m]`. Relies on the loss being non-decreasing.
    pub fn reception_boundary(&self, max_m: f64) -> f64 {
        if self.can_receive(max_m) {
            return max_m;
        }
        let (mut lo, mut hi) = (0.0, max_m);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.can_receive(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

/// Who can hear whom on the 802.11p channel.
#[derive(Debug, Clone)]
pub struct Propagation {
    pub path_loss: PathLossModel,
    pub highway: HighwayConfig,
}

impl Propagation {
    pub fn in_range(&self, a: &Pose, b: &Pose) -> bool {
        self.path_loss.can_receive(distance(a, b, &self.highway))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdhocRadioConfig {
    pub data_rate_bps: f64,
    pub beacon_size_bytes: u32,
    /// Interface queue length in frames. The load monitor reacts to queue
    /// fill, so a short queue makes overload visible before backlog builds.
    pub queue_capacity: usize,
    pub range_m: f64,
    /// PHY and MAC framing plus channel access overhead, in bits at the data rate.
    pub overhead_bits: u32,
    /// Upper bound of the uniform jitter added to each access attempt, seconds.
    pub max_jitter: f64,
    /// Deferrals per frame before it is sent regardless of channel state.
    pub max_deferrals: u32,
}

impl Default for AdhocRadioConfig {
    fn default() -> Self {
        AdhocRadioConfig {
            data_rate_bps: 6_000_000.0,
            beacon_size_bytes: 100,
            queue_capacity: 3,
            range_m: 250.0,
            overhead_bits: 40_000,
            max_jitter: 0.001,
            max_deferrals: 1000,
        }
    }
}

impl AdhocRadioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.data_rate_bps > 0.0) {
            return Err(ConfigError::invalid("radio.adhoc.dataRateBps must be positive"));
        }
        if self.queue_capacity == 0 {
            return Err(ConfigError::invalid("radio.adhoc.queueCapacity must be at least 1"));
        }
        if !(self.range_m > 0.0) {
            return Err(ConfigError::invalid("radio.adhoc.rangeMeters must be positive"));
        }
        if !(self.max_jitter >= 0.0) {
            return Err(ConfigError::invalid("radio.adhoc.maxJitter must be non-negative"));
        }
        Ok(())
    }

    pub fn payload_bits(&self) -> u64 {
        self.beacon_size_bytes as u64 * 8
    }

    pub fn airtime(&self) -> SimTime {
        SimTime::from_secs((self.payload_bits() + self.overhead_bits as u64) as f64 / self.data_rate_bps)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LteConfig {
    pub uplink_latency: f64,
    /// Extra uplink delay drawn uniformly from `[0, uplink_jitter]`.
    pub uplink_jitter: f64,
    pub core_latency: f64,
    pub downlink_latency: f64,
    pub cell_capacity_bps: f64,
    /// Signalling blackout of one vertical handover, seconds.
    pub vho_delay: f64,
    /// Window over which offered uplink load is measured, seconds.
    pub load_window: f64,
}

impl Default for LteConfig {
    fn default() -> Self {
        LteConfig {
            uplink_latency: 0.040,
            uplink_jitter: 0.0,
            core_latency: 0.010,
            downlink_latency: 0.040,
            cell_capacity_bps: 10_000_000.0,
            vho_delay: 0.5,
            load_window: 1.0,
        }
    }
}

impl LteConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let lat = [
            self.uplink_latency,
            self.uplink_jitter,
            self.core_latency,
            self.downlink_latency,
            self.vho_delay,
        ];
        if lat.iter().any(|v| !(*v >= 0.0)) {
            return Err(ConfigError::invalid("LTE latencies must be non-negative"));
        }
        if !(self.cell_capacity_bps > 0.0) {
            return Err(ConfigError::invalid("radio.lte.cellCapacityBps must be positive"));
        }
        if !(self.load_window > 0.0) {
            return Err(ConfigError::invalid("radio.lte.loadWindow must be positive"));
        }
        Ok(())
    }

    /// Sum of the fixed latency components.
    pub fn base_latency(&self) -> SimTime {
        SimTime::from_secs(self.uplink_latency + self.core_latency + self.downlink_latency)
    }
}

/// Reason a beacon never reached the air.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum Dropped {
    #[error("transmit queue overflow")]
    QueueOverflow,
    #[error("LTE cell saturated")]
    CellSaturated,
}

/// Bounded FIFO of beacons waiting for the 802.11p channel.
#[derive(Debug, Clone)]
pub struct TxQueue<T> {
    pending: VecDeque<T>,
    capacity: usize,
}

impl<T> TxQueue<T> {
    pub fn new(capacity: usize) -> Self {
        TxQueue {
            pending: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    /// Appends at the tail, handing the item back when full.
    pub fn push(&mut self, item: T) -> Result<(), (Dropped, T)> {
        if self.pending.len() >= self.capacity {
            return Err((Dropped::QueueOverflow, item));
        }
        self.pending.push_back(item);
        Ok(())
    }

    pub fn pop(&mut self) -> Option<T> {
        self.pending.pop_front()
    }

    pub fn front(&self) -> Option<&T> {
        self.pending.front()
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn drain(&mut self) -> impl Iterator<Item = T> + '_ {
        self.pending.drain(..)
    }
}

pub fn queue_fill_ratio<T>(q: &TxQueue<T>) -> f64 {
    q.len() as f64 / q.capacity() as f64
}

pub type TxId = u64;

#[derive(Debug, Clone)]
struct OnAir<P> {
    id: TxId,
    sender: usize,
    sender_pose: Pose,
    start: SimTime,
    end: SimTime,
    audience: Vec<usize>,
    /// Transmissions that overlapped this one in time: (sender, pose at start).
    overlaps: Vec<(usize, Pose)>,
    payload: P,
}

/// Outcome of a finished 802.11p transmission.
#[derive(Debug, Clone)]
pub struct Finished<P> {
    pub id: TxId,
    pub sender: usize,
    pub start: SimTime,
    pub end: SimTime,
    /// Receivers that decoded the frame.
    pub delivered: Vec<usize>,
    /// In-range receivers that lost it to an overlapping transmission.
    pub collided: Vec<usize>,
    pub payload: P,
}

/// The shared 802.11p medium.
#[derive(Debug)]
pub struct AdhocChannel<P> {
    on_air: Vec<OnAir<P>>,
    next_id: TxId,
}

impl<P> Default for AdhocChannel<P> {
    fn default() -> Self {
        AdhocChannel {
            on_air: Vec::new(),
            next_id: 0,
        }
    }
}

impl<P> AdhocChannel<P> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Latest end time among transmissions the sender can sense at `now`.
    pub fn busy_until(&self, sender_pose: &Pose, now: SimTime, prop: &Propagation) -> Option<SimTime> {
        self.on_air
            .iter()
            .filter(|t| t.end > now && prop.in_range(&t.sender_pose, sender_pose))
            .map(|t| t.end)
            .max()
    }

    /// Starts a broadcast. `audience` is the in-range receiver set at `now`.
    pub fn start(
        &mut self,
        sender: usize,
        sender_pose: Pose,
        now: SimTime,
        airtime: SimTime,
        audience: Vec<usize>,
        payload: P,
    ) -> (TxId, SimTime) {
        let id = self.next_id;
        self.next_id += 1;
        let mut overlaps = Vec::new();
        for t in self.on_air.iter_mut().filter(|t| t.end > now) {
            t.overlaps.push((sender, sender_pose));
            overlaps.push((t.sender, t.sender_pose));
        }
        let end = now + airtime;
        self.on_air.push(OnAir {
            id,
            sender,
            sender_pose,
            start: now,
            end,
            audience,
            overlaps,
            payload,
        });
        (id, end)
    }

    /// Resolves a transmission at its end time. A receiver loses the frame if
    /// it was transmitting itself or could hear any overlapping sender.
    pub fn finish(&mut self, id: TxId, receiver_pose: impl Fn(usize) -> Pose, prop: &Propagation) -> Option<Finished<P>> {
        let idx = self.on_air.iter().position(|t| t.id == id)?;
        let tx = self.on_air.swap_remove(idx);
        let mut delivered = Vec::with_capacity(tx.audience.len());
        let mut collided = Vec::new();
        for &r in &tx.audience {
            let rp = receiver_pose(r);
            let lost = tx
                .overlaps
                .iter()
                .any(|(other, other_pose)| *other == r || prop.in_range(other_pose, &rp));
            if lost {
                collided.push(r);
            } else {
                delivered.push(r);
            }
        }
        Some(Finished {
            id: tx.id,
            sender: tx.sender,
            start: tx.start,
            end: tx.end,
            delivered,
            collided,
            payload: tx.payload,
        })
    }

    pub fn is_idle(&self) -> bool {
        self.on_air.is_empty()
    }
}

/// Scheduled downlink broadcast of one uplinked beacon.
#[derive(Debug, Clone, PartialEq)]
pub struct LteDelivery {
    pub at: SimTime,
    pub receivers: Vec<usize>,
}

/// Single eNodeB cell with a sliding-window capacity check.
#[derive(Debug)]
pub struct LteCell {
    cfg: LteConfig,
    window: VecDeque<(SimTime, u64)>,
    window_bits: u64,
}

impl LteCell {
    pub fn new(cfg: LteConfig) -> Self {
        LteCell {
            cfg,
            window: VecDeque::new(),
            window_bits: 0,
        }
    }

    pub fn config(&self) -> &LteConfig {
        &self.cfg
    }

    /// Uplinks a beacon of `bits` at `now`; `jitter_unit` in `[0, 1)` scales
    /// the configured uplink jitter.
    pub fn transmit(
        &mut self,
        now: SimTime,
        bits: u64,
        audience: Vec<usize>,
        jitter_unit: f64,
    ) -> Result<LteDelivery, Dropped> {
        let span = SimTime::from_secs(self.cfg.load_window);
        while let Some(&(t, b)) = self.window.front() {
            if t + span > now {
                break;
            }
            self.window.pop_front();
            self.window_bits -= b;
        }
        let offered = (self.window_bits + bits) as f64 / self.cfg.load_window;
        if offered > self.cfg.cell_capacity_bps {
            return Err(Dropped::CellSaturated);
        }
        self.window.push_back((now, bits));
        self.window_bits += bits;
        let at = now + self.cfg.base_latency() + SimTime::from_secs(self.cfg.uplink_jitter * jitter_unit);
        Ok(LteDelivery { at, receivers: audience })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Hand-evaluated with an independent script: 47.71855987125875 dB
    // reference at 1 m / 5800 MHz, exponents 1.9 / 3.8 / 3.8, breakpoints
    // 200 m and 500 m.
    const TABLE: [(f64, f64); 6] = [
        (1.0, 47.71855987125875),
        (50.0, 79.9989899536431),
        (200.0, 91.43812978887439),
        (350.0, 100.67357563895358),
        (500.0, 106.55985011841182),
        (800.0, 114.31640945933697),
    ];

    fn prop() -> Propagation {
        Propagation {
            path_loss: PathLossModel::default(),
            highway: HighwayConfig::default(),
        }
    }

    fn at(x: f64) -> Pose {
        Pose { lane: 0, x, speed: 0.0 }
    }

    #[test]
    fn reference_distance_gives_reference_loss() {
        let m = PathLossModel::default();
        assert_eq!(m.path_loss_db(m.d0).unwrap(), m.ref_loss_db);
    }

    #[test]
    fn free_space_reference_example() {
        let m = PathLossModel {
            ref_loss_db: 47.7,
            ..PathLossModel::default()
        };
        assert!((m.path_loss_db(100.0).unwrap() - 85.7).abs() < 1e-9);
        assert!((free_space_loss_db(5800.0, 1.0) - 47.7).abs() < 0.02);
    }

    #[test]
    fn matches_table() {
        let m = PathLossModel::default();
        for (d, want) in TABLE {
            let got = m.path_loss_db(d).unwrap();
            assert!((got - want).abs() < 1e-9, "d={d}: {got} vs {want}");
        }
    }

    #[test]
    fn continuous_at_breakpoints() {
        let m = PathLossModel::default();
        for b in [m.d1, m.d2] {
            let lo = m.path_loss_db(b - 1e-7).unwrap();
            let hi = m.path_loss_db(b + 1e-7).unwrap();
            assert!((hi - lo).abs() < 1e-5);
        }
    }

    #[test]
    fn non_positive_distance_is_domain_error() {
        let m = PathLossModel::default();
        assert_eq!(m.path_loss_db(0.0), Err(DomainError(0.0)));
        assert!(m.path_loss_db(-1.0).is_err());
    }

    #[test]
    fn calibrated_boundary() {
        let m = PathLossModel::default();
        assert!(m.can_receive(10.0));
        assert!(m.can_receive(250.0));
        assert!(!m.can_receive(251.0));
        assert!(!m.can_receive(1000.0));
        let b = m.reception_boundary(2000.0);
        assert!((b - 250.0).abs() <= 1.0, "boundary {b}");
    }

    #[test]
    fn queue_fill() {
        let mut q = TxQueue::new(64);
        assert_eq!(queue_fill_ratio(&q), 0.0);
        for i in 0..51 {
            q.push(i).unwrap();
        }
        assert_eq!(queue_fill_ratio(&q), 0.796875);
        for i in 51..64 {
            q.push(i).unwrap();
        }
        assert_eq!(queue_fill_ratio(&q), 1.0);
        assert_eq!(q.push(99), Err((Dropped::QueueOverflow, 99)));
        assert_eq!(q.pop(), Some(0));
        assert_eq!(q.pop(), Some(1));
    }

    #[test]
    fn airtime_of_plain_beacon() {
        let cfg = AdhocRadioConfig {
            overhead_bits: 0,
            ..AdhocRadioConfig::default()
        };
        assert_eq!(cfg.airtime(), SimTime::from_nanos(133_333));
    }

    #[test]
    fn single_sender_delivers_after_airtime() {
        let p = prop();
        let cfg = AdhocRadioConfig::default();
        let poses = [at(0.0), at(100.0)];
        let mut ch = AdhocChannel::new();
        let now = SimTime::from_secs(1.0);
        assert_eq!(ch.busy_until(&poses[0], now, &p), None);
        let (id, end) = ch.start(0, poses[0], now, cfg.airtime(), vec![1], ());
        assert_eq!(end, now + cfg.airtime());
        let fin = ch.finish(id, |i| poses[i], &p).unwrap();
        assert_eq!(fin.delivered, vec![1]);
        assert!(fin.collided.is_empty());
        assert!(ch.is_idle());
    }

    #[test]
    fn overlapping_senders_collide_at_common_neighbor() {
        // hidden terminals: 0 and 2 cannot sense each other, 1 hears both
        let p = prop();
        let poses = [at(0.0), at(200.0), at(400.0)];
        let air = SimTime::from_secs(0.001);
        let mut ch = AdhocChannel::new();
        let t0 = SimTime::from_secs(1.0);
        let (a, _) = ch.start(0, poses[0], t0, air, vec![1], ());
        assert_eq!(ch.busy_until(&poses[2], t0, &p), None);
        let (b, _) = ch.start(2, poses[2], t0 + SimTime::from_nanos(10), air, vec![1], ());
        assert_eq!(ch.finish(a, |i| poses[i], &p).unwrap().collided, vec![1]);
        assert_eq!(ch.finish(b, |i| poses[i], &p).unwrap().collided, vec![1]);
    }

    #[test]
    fn carrier_sense_reports_busy_neighbour() {
        let p = prop();
        let poses = [at(0.0), at(100.0)];
        let air = SimTime::from_secs(0.001);
        let mut ch: AdhocChannel<()> = AdhocChannel::new();
        let t0 = SimTime::from_secs(1.0);
        ch.start(0, poses[0], t0, air, vec![1], ());
        assert_eq!(ch.busy_until(&poses[1], t0, &p), Some(t0 + air));
        assert_eq!(ch.busy_until(&poses[1], t0 + air, &p), None);
    }

    #[test]
    fn sender_transmitting_cannot_receive() {
        let p = prop();
        let poses = [at(0.0), at(100.0)];
        let air = SimTime::from_secs(0.001);
        let mut ch = AdhocChannel::new();
        let t0 = SimTime::from_secs(1.0);
        let (a, _) = ch.start(0, poses[0], t0, air, vec![1], ());
        let (b, _) = ch.start(1, poses[1], t0, air, vec![0], ());
        assert_eq!(ch.finish(a, |i| poses[i], &p).unwrap().collided, vec![1]);
        assert_eq!(ch.finish(b, |i| poses[i], &p).unwrap().collided, vec![0]);
    }

    #[test]
    fn out_of_range_neighbour_not_in_audience() {
        let p = prop();
        assert!(!p.in_range(&at(0.0), &at(300.0)));
        assert!(p.in_range(&at(0.0), &at(249.0)));
    }

    #[test]
    fn lte_delivery_latency_sums_components() {
        let mut cell = LteCell::new(LteConfig::default());
        let now = SimTime::from_secs(3.0);
        let d = cell.transmit(now, 800, vec![4, 5], 0.0).unwrap();
        assert_eq!(d.at, now + SimTime::from_secs(0.090));
        assert_eq!(d.receivers, vec![4, 5]);
        let empty = cell.transmit(now, 800, vec![], 0.0).unwrap();
        assert!(empty.receivers.is_empty());
    }

    #[test]
    fn lte_saturation_drops() {
        let mut cell = LteCell::new(LteConfig {
            cell_capacity_bps: 2000.0,
            ..LteConfig::default()
        });
        let t = SimTime::from_secs(1.0);
        assert!(cell.transmit(t, 800, vec![], 0.0).is_ok());
        assert!(cell.transmit(t, 800, vec![], 0.0).is_ok());
        assert_eq!(cell.transmit(t, 800, vec![], 0.0), Err(Dropped::CellSaturated));
        // window slides
        assert!(cell.transmit(t + SimTime::from_secs(1.0), 800, vec![], 0.0).is_ok());
    }

    proptest! {
        #[test]
        fn loss_monotone(a in 0.01f64..5000.0, b in 0.01f64..5000.0) {
            let m = PathLossModel::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(m.path_loss_db(lo).unwrap() <= m.path_loss_db(hi).unwrap());
        }

        #[test]
        fn reception_symmetric(ax in 0.0f64..1000.0, bx in 0.0f64..1000.0, al in 0u32..3, bl in 0u32..3) {
            let p = prop();
            let a = Pose { lane: al, x: ax, speed: 0.0 };
            let b = Pose { lane: bl, x: bx, speed: 0.0 };
            prop_assert_eq!(p.in_range(&a, &b), p.in_range(&b, &a));
        }
    }
}
