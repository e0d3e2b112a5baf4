//! Per-run counters and the derived delivery metrics.

/// Streaming summary of generation-to-delivery delays, one sample per
/// delivered copy.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LatencyStats {
    pub count: u64,
    pub sum: f64,
    pub min: f64,
    pub max: f64,
}

impl LatencyStats {
    pub fn record(&mut self, secs: f64) {
        if self.count == 0 {
            self.min = secs;
            self.max = secs;
        } else {
            self.min = self.min.min(secs);
            self.max = self.max.max(secs);
        }
        self.count += 1;
        self.sum += secs;
    }

    pub fn from_samples(samples: &[f64]) -> Self {
        let mut s = LatencyStats::default();
        samples.iter().for_each(|&x| s.record(x));
        s
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    /// Simulated duration in seconds, the goodput denominator.
    pub duration: f64,
    pub vho_count: u64,
    pub vho_per_vehicle: Vec<u64>,
    pub generated: u64,
    pub tx_adhoc: u64,
    pub tx_lte: u64,
    /// Sum over beacons of the in-range audience at send (or drop) time.
    pub expected_receptions: u64,
    pub actual_receptions: u64,
    /// Receiver-level losses on 802.11p.
    pub collision_losses: u64,
    pub latency: LatencyStats,
    pub delivered_bits_adhoc: u64,
    pub delivered_bits_lte: u64,
    pub delivered_at_least_once: u64,
    /// Sent but received by nobody (including an empty audience).
    pub lost_all: u64,
    pub dropped_queue: u64,
    pub dropped_saturation: u64,
    /// Still queued when the post-run drain gave up. Zero in a healthy run.
    pub unresolved: u64,
    pub events: u64,
    /// SHA-256 over the event trace, hex encoded.
    pub trace_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Goodput {
    pub adhoc_bps: f64,
    pub lte_bps: f64,
    pub total_bps: f64,
}

impl RunMetrics {
    /// Delivered over expected receptions, percent. `None` without any
    /// expected reception.
    pub fn pdr(&self) -> Option<f64> {
        (self.expected_receptions > 0)
            .then(|| 100.0 * self.actual_receptions as f64 / self.expected_receptions as f64)
    }

    pub fn mean_latency(&self) -> Option<f64> {
        (self.latency.count > 0).then(|| self.latency.sum / self.latency.count as f64)
    }

    /// Application payload delivered per second, split by RAT.
    pub fn goodput(&self) -> Goodput {
        let per_s = |bits: u64| {
            if self.duration > 0.0 {
                bits as f64 / self.duration
            } else {
                0.0
            }
        };
        let adhoc_bps = per_s(self.delivered_bits_adhoc);
        let lte_bps = per_s(self.delivered_bits_lte);
        Goodput {
            adhoc_bps,
            lte_bps,
            total_bps: adhoc_bps + lte_bps,
        }
    }

    /// Beacons with a final outcome.
    pub fn classified(&self) -> u64 {
        self.delivered_at_least_once + self.lost_all + self.dropped_queue + self.dropped_saturation
    }

    /// Every generated beacon ended in exactly one outcome class.
    pub fn is_conserved(&self) -> bool {
        self.unresolved == 0 && self.generated == self.classified()
    }
}

/// Order statistics over replicate runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl Summary {
    /// `None` for an empty input.
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        Some(Summary {
            mean: v.iter().sum::<f64>() / n as f64,
            min: v[0],
            median,
            max: v[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateMetrics {
    pub runs: Vec<RunMetrics>,
    pub vho: Summary,
    pub pdr: Option<Summary>,
    pub latency: Option<Summary>,
    pub goodput_adhoc: Summary,
    pub goodput_lte: Summary,
    pub goodput_total: Summary,
}

impl AggregateMetrics {
    /// Panics on an empty run list; callers run at least one replicate.
    pub fn from_runs(runs: Vec<RunMetrics>) -> Self {
        assert!(!runs.is_empty(), "aggregate over zero runs");
        let col = |f: &dyn Fn(&RunMetrics) -> Option<f64>| -> Vec<f64> { runs.iter().filter_map(f).collect() };
        let vho = Summary::of(&col(&|m| Some(m.vho_count as f64))).expect("non-empty");
        let pdr = Summary::of(&col(&|m| m.pdr()));
        let latency = Summary::of(&col(&|m| m.mean_latency()));
        let goodput_adhoc = Summary::of(&col(&|m| Some(m.goodput().adhoc_bps))).expect("non-empty");
        let goodput_lte = Summary::of(&col(&|m| Some(m.goodput().lte_bps))).expect("non-empty");
        let goodput_total = Summary::of(&col(&|m| Some(m.goodput().total_bps))).expect("non-empty");
        AggregateMetrics {
            runs,
            vho,
            pdr,
            latency,
            goodput_adhoc,
            goodput_lte,
            goodput_total,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pdr_examples() {
        let m = RunMetrics {
            expected_receptions: 1000,
            actual_receptions: 900,
            ..RunMetrics::default()
        };
        assert_eq!(m.pdr(), Some(90.0));
        assert_eq!(RunMetrics::default().pdr(), None);
    }

    #[test]
    fn latency_examples() {
        let m = RunMetrics {
            latency: LatencyStats::from_samples(&[0.001, 0.003]),
            ..RunMetrics::default()
        };
        assert!((m.mean_latency().unwrap() - 0.002).abs() < 1e-15);
        assert_eq!(m.latency.min, 0.001);
        assert_eq!(m.latency.max, 0.003);
        assert_eq!(RunMetrics::default().mean_latency(), None);
    }

    #[test]
    fn goodput_examples() {
        let m = RunMetrics {
            duration: 100.0,
            delivered_bits_adhoc: 1000 * 100 * 8,
            ..RunMetrics::default()
        };
        let g = m.goodput();
        assert_eq!(g.adhoc_bps, 8000.0);
        assert_eq!(g.lte_bps, 0.0);
        assert_eq!(g.total_bps, g.adhoc_bps + g.lte_bps);
    }

    #[test]
    fn summary_order_statistics() {
        let s = Summary::of(&[3.0, 1.0, 2.0, 10.0]).unwrap();
        assert_eq!((s.min, s.median, s.max, s.mean), (1.0, 2.5, 10.0, 4.0));
        let one = Summary::of(&[7.0]).unwrap();
        assert_eq!((one.min, one.median, one.max, one.mean), (7.0, 7.0, 7.0, 7.0));
        assert!(Summary::of(&[]).is_none());
    }

    #[test]
    fn single_run_aggregate_equals_run() {
        let m = RunMetrics {
            duration: 10.0,
            vho_count: 4,
            expected_receptions: 10,
            actual_receptions: 5,
            delivered_bits_lte: 800,
            latency: LatencyStats::from_samples(&[0.5]),
            ..RunMetrics::default()
        };
        let a = AggregateMetrics::from_runs(vec![m.clone()]);
        assert_eq!(a.vho.mean, 4.0);
        assert_eq!(a.pdr.unwrap().median, 50.0);
        assert_eq!(a.latency.unwrap().max, 0.5);
        assert_eq!(a.goodput_lte.min, 80.0);
        assert_eq!(a.runs, vec![m]);
    }

    #[test]
    fn conservation_accounting() {
        let m = RunMetrics {
            generated: 10,
            delivered_at_least_once: 6,
            lost_all: 2,
            dropped_queue: 1,
            dropped_saturation: 1,
            ..RunMetrics::default()
        };
        assert!(m.is_conserved());
        let broken = RunMetrics { unresolved: 1, ..m };
        assert!(!broken.is_conserved());
    }
}
