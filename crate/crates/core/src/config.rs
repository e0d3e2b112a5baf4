//! Scenario configuration and the flat `key=value` file format.
//!
//! Keys are dotted section paths (`radio.adhoc.queueCapacity=64`). Blank
//! lines and lines starting with `#` are ignored. Later assignments win, so
//! overrides are applied by appending.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::bfa::QosProfile;
use crate::drrm::{NlmConfig, SchemeKind};
use crate::error::ConfigError;
use crate::mobility::HighwayConfig;
use crate::radio::{AdhocRadioConfig, LteConfig, PathLossModel, Propagation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeaconPhase {
    /// First beacon of each vehicle at a uniform offset within one interval.
    Random,
    /// All vehicles start beaconing at t = 0.
    Zero,
}

impl fmt::Display for BeaconPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BeaconPhase::Random => "random",
            BeaconPhase::Zero => "zero",
        })
    }
}

/// Everything that describes the simulated world and the scheme under test.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub highway: HighwayConfig,
    pub path_loss: PathLossModel,
    /// Recalibrate the receiver sensitivity to `adhoc.range_m` before use.
    pub calibrate_sensitivity: bool,
    pub adhoc: AdhocRadioConfig,
    pub lte: LteConfig,
    pub qos: QosProfile,
    pub nlm: NlmConfig,
    pub scheme: SchemeKind,
    /// Period of NLM evaluations, seconds.
    pub nlm_interval: f64,
    /// Minimum time on LTE before returning to 802.11p, seconds.
    pub lte_dwell: f64,
    pub mobility_tick: f64,
    pub beacon_phase: BeaconPhase,
    /// Longest post-run drain of queued beacons, seconds.
    pub drain_limit: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            highway: HighwayConfig::default(),
            path_loss: PathLossModel::default(),
            calibrate_sensitivity: true,
            adhoc: AdhocRadioConfig::default(),
            lte: LteConfig::default(),
            qos: QosProfile::default(),
            nlm: NlmConfig::default(),
            scheme: SchemeKind::QosAware,
            nlm_interval: 0.5,
            lte_dwell: 5.0,
            mobility_tick: 0.1,
            beacon_phase: BeaconPhase::Random,
            drain_limit: 120.0,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.highway.validate()?;
        self.path_loss.validate()?;
        self.adhoc.validate()?;
        self.lte.validate()?;
        self.qos.validate()?;
        self.nlm.validate()?;
        self.scheme.validate()?;
        for (name, v) in [
            ("sim.nlmInterval", self.nlm_interval),
            ("sim.mobilityTick", self.mobility_tick),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ConfigError::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.lte_dwell >= 0.0) {
            return Err(ConfigError::invalid("drrm.lteDwell must be non-negative"));
        }
        if !(self.drain_limit >= 0.0) {
            return Err(ConfigError::invalid("sim.drainLimit must be non-negative"));
        }
        Ok(())
    }

    /// Propagation model with the sensitivity calibrated when requested.
    pub fn propagation(&self) -> Propagation {
        let path_loss = if self.calibrate_sensitivity {
            self.path_loss.clone().calibrated(self.adhoc.range_m)
        } else {
            self.path_loss.clone()
        };
        Propagation {
            path_loss,
            highway: self.highway.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Simulated seconds.
    pub duration: f64,
    pub seed: u64,
    pub replicates: u32,
    pub scenario: Scenario,
}

impl Default for RunConfig {
    /// 150 vehicles, 100 s, 10 replicates.
    fn default() -> Self {
        RunConfig {
            duration: 100.0,
            seed: 1,
            replicates: 10,
            scenario: Scenario::default(),
        }
    }
}

impl RunConfig {
    /// Full-size scenario: 150 vehicles, 100 s, 10 replicates.
    pub fn paper_scale() -> Self {
        RunConfig::default()
    }

    /// Reduced scenario for quick turnaround: 50 vehicles, 30 s, 5 replicates.
    pub fn desk_scale() -> Self {
        let mut cfg = RunConfig::default();
        cfg.make_desk_scale();
        cfg
    }

    pub fn make_desk_scale(&mut self) {
        self.duration = 30.0;
        self.replicates = 5;
        self.scenario.highway.vehicle_count = 50;
    }

    pub fn make_paper_scale(&mut self) {
        self.duration = 100.0;
        self.replicates = 10;
        self.scenario.highway.vehicle_count = 150;
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(ConfigError::invalid(format!(
                "sim.duration must be positive, got {}",
                self.duration
            )));
        }
        if self.replicates == 0 {
            return Err(ConfigError::invalid("sim.replicates must be at least 1"));
        }
        self.scenario.validate()
    }

    /// Assigns one configuration key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        let s = &mut self.scenario;
        match key {
            "sim.duration" => self.duration = num(key, v)?,
            "sim.seed" => self.seed = num(key, v)?,
            "sim.replicates" => self.replicates = num(key, v)?,
            "sim.scale" => match v {
                "desk" => self.make_desk_scale(),
                "paper" => self.make_paper_scale(),
                _ => return Err(ConfigError::value(key, v, "expected desk|paper")),
            },
            "sim.nlmInterval" => s.nlm_interval = num(key, v)?,
            "sim.mobilityTick" => s.mobility_tick = num(key, v)?,
            "sim.drainLimit" => s.drain_limit = num(key, v)?,
            "sim.beaconPhase" => {
                s.beacon_phase = match v {
                    "random" => BeaconPhase::Random,
                    "zero" => BeaconPhase::Zero,
                    _ => return Err(ConfigError::value(key, v, "expected random|zero")),
                }
            }

            "highway.length" => s.highway.length = num(key, v)?,
            "highway.laneCount" => s.highway.lane_count = num(key, v)?,
            "highway.laneWidth" => s.highway.lane_width = num(key, v)?,
            "highway.vehicleCount" => s.highway.vehicle_count = num(key, v)?,
            "highway.speedMin" => s.highway.speed_min_kmh = num(key, v)?,
            "highway.speedMax" => s.highway.speed_max_kmh = num(key, v)?,

            "radio.pathloss.d0" => s.path_loss.d0 = num(key, v)?,
            "radio.pathloss.d1" => s.path_loss.d1 = num(key, v)?,
            "radio.pathloss.d2" => s.path_loss.d2 = num(key, v)?,
            "radio.pathloss.n0" => s.path_loss.n0 = num(key, v)?,
            "radio.pathloss.n1" => s.path_loss.n1 = num(key, v)?,
            "radio.pathloss.n2" => s.path_loss.n2 = num(key, v)?,
            "radio.pathloss.refLossDb" => s.path_loss.ref_loss_db = num(key, v)?,
            "radio.pathloss.txPowerDbm" => s.path_loss.tx_power_dbm = num(key, v)?,
            "radio.pathloss.sensitivityDbm" => {
                if v == "auto" {
                    s.calibrate_sensitivity = true;
                } else {
                    s.path_loss.sensitivity_dbm = num(key, v)?;
                    s.calibrate_sensitivity = false;
                }
            }

            "radio.adhoc.dataRateBps" => s.adhoc.data_rate_bps = num(key, v)?,
            "radio.adhoc.beaconSizeBytes" => s.adhoc.beacon_size_bytes = num(key, v)?,
            "radio.adhoc.queueCapacity" => s.adhoc.queue_capacity = num(key, v)?,
            "radio.adhoc.rangeMeters" => s.adhoc.range_m = num(key, v)?,
            "radio.adhoc.overheadBits" => s.adhoc.overhead_bits = num(key, v)?,
            "radio.adhoc.maxJitter" => s.adhoc.max_jitter = num(key, v)?,
            "radio.adhoc.maxDeferrals" => s.adhoc.max_deferrals = num(key, v)?,

            "radio.lte.uplinkLatency" => s.lte.uplink_latency = num(key, v)?,
            "radio.lte.uplinkJitter" => s.lte.uplink_jitter = num(key, v)?,
            "radio.lte.coreLatency" => s.lte.core_latency = num(key, v)?,
            "radio.lte.downlinkLatency" => s.lte.downlink_latency = num(key, v)?,
            "radio.lte.cellCapacityBps" => s.lte.cell_capacity_bps = num(key, v)?,
            "radio.lte.vhoDelay" => s.lte.vho_delay = num(key, v)?,
            "radio.lte.loadWindow" => s.lte.load_window = num(key, v)?,

            "qos.bFreqInitial" => s.qos.b_freq_initial = num(key, v)?,
            "qos.rFactor" => s.qos.r_factor = num(key, v)?,
            "qos.rTolerance" => s.qos.r_tolerance = num(key, v)?,
            "qos.tReduced" => s.qos.t_reduced = num(key, v)?,
            "qos.tInitial" => s.qos.t_initial = num(key, v)?,

            "drrm.nlmThreshold" => s.nlm.threshold = num(key, v)?,
            "drrm.lteDwell" => s.lte_dwell = num(key, v)?,

            "scheme" | "scheme.kind" => {
                let period = match s.scheme {
                    SchemeKind::Periodic(p) => Some(p),
                    _ => None,
                };
                s.scheme = v.parse()?;
                // keep a previously configured period for a bare `periodic`
                if let (SchemeKind::Periodic(_), Some(p), false) = (s.scheme, period, v.contains(':')) {
                    s.scheme = SchemeKind::Periodic(p);
                }
            }
            "scheme.period" => {
                let p: f64 = num(key, v)?;
                s.scheme = SchemeKind::Periodic(p);
                s.scheme.validate()?;
            }
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Applies `key=value` assignments in order.
    pub fn apply<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<(), ConfigError> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Canonical `key=value` dump; parsing it back reproduces the config.
    pub fn to_config_string(&self) -> String {
        let s = &self.scenario;
        let mut lines = vec![
            format!("sim.duration={}", self.duration),
            format!("sim.seed={}", self.seed),
            format!("sim.replicates={}", self.replicates),
            format!("sim.nlmInterval={}", s.nlm_interval),
            format!("sim.mobilityTick={}", s.mobility_tick),
            format!("sim.drainLimit={}", s.drain_limit),
            format!("sim.beaconPhase={}", s.beacon_phase),
            format!("highway.length={}", s.highway.length),
            format!("highway.laneCount={}", s.highway.lane_count),
            format!("highway.laneWidth={}", s.highway.lane_width),
            format!("highway.vehicleCount={}", s.highway.vehicle_count),
            format!("highway.speedMin={}", s.highway.speed_min_kmh),
            format!("highway.speedMax={}", s.highway.speed_max_kmh),
            format!("radio.pathloss.d0={}", s.path_loss.d0),
            format!("radio.pathloss.d1={}", s.path_loss.d1),
            format!("radio.pathloss.d2={}", s.path_loss.d2),
            format!("radio.pathloss.n0={}", s.path_loss.n0),
            format!("radio.pathloss.n1={}", s.path_loss.n1),
            format!("radio.pathloss.n2={}", s.path_loss.n2),
            format!("radio.pathloss.refLossDb={}", s.path_loss.ref_loss_db),
            format!("radio.pathloss.txPowerDbm={}", s.path_loss.tx_power_dbm),
        ];
        if s.calibrate_sensitivity {
            lines.push("radio.pathloss.sensitivityDbm=auto".into());
        } else {
            lines.push(format!("radio.pathloss.sensitivityDbm={}", s.path_loss.sensitivity_dbm));
        }
        lines.extend([
            format!("radio.adhoc.dataRateBps={}", s.adhoc.data_rate_bps),
            format!("radio.adhoc.beaconSizeBytes={}", s.adhoc.beacon_size_bytes),
            format!("radio.adhoc.queueCapacity={}", s.adhoc.queue_capacity),
            format!("radio.adhoc.rangeMeters={}", s.adhoc.range_m),
            format!("radio.adhoc.overheadBits={}", s.adhoc.overhead_bits),
            format!("radio.adhoc.maxJitter={}", s.adhoc.max_jitter),
            format!("radio.adhoc.maxDeferrals={}", s.adhoc.max_deferrals),
            format!("radio.lte.uplinkLatency={}", s.lte.uplink_latency),
            format!("radio.lte.uplinkJitter={}", s.lte.uplink_jitter),
            format!("radio.lte.coreLatency={}", s.lte.core_latency),
            format!("radio.lte.downlinkLatency={}", s.lte.downlink_latency),
            format!("radio.lte.cellCapacityBps={}", s.lte.cell_capacity_bps),
            format!("radio.lte.vhoDelay={}", s.lte.vho_delay),
            format!("radio.lte.loadWindow={}", s.lte.load_window),
            format!("qos.bFreqInitial={}", s.qos.b_freq_initial),
            format!("qos.rFactor={}", s.qos.r_factor),
            format!("qos.rTolerance={}", s.qos.r_tolerance),
            format!("qos.tReduced={}", s.qos.t_reduced),
            format!("qos.tInitial={}", s.qos.t_initial),
            format!("drrm.nlmThreshold={}", s.nlm.threshold),
            format!("drrm.lteDwell={}", s.lte_dwell),
            format!("scheme.kind={}", s.scheme),
        ]);
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse::<T>()
        .map_err(|_| ConfigError::value(key, v, format!("expected {}", std::any::type_name::<T>())))
}

/// One `key=value` line of a config file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Splits config text into entries; `origin` only labels error messages.
pub fn parse_entries(text: &str, origin: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                path: origin.to_string(),
                line: i + 1,
                text: line.to_string(),
            });
        };
        let key = k.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                path: origin.to_string(),
                line: i + 1,
                text: line.to_string(),
            });
        }
        out.push(Entry {
            key: key.to_string(),
            value: v.trim().to_string(),
            line: i + 1,
        });
    }
    Ok(out)
}

pub fn read_entries(path: &Path) -> Result<Vec<Entry>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_entries(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        RunConfig::default().validate().unwrap();
        let desk = RunConfig::desk_scale();
        desk.validate().unwrap();
        assert_eq!(desk.scenario.highway.vehicle_count, 50);
        assert_eq!(desk.duration, 30.0);
        let paper = RunConfig::paper_scale();
        assert_eq!(paper.scenario.highway.vehicle_count, 150);
        assert_eq!((paper.duration, paper.replicates), (100.0, 10));
    }

    #[test]
    fn parses_key_values_and_comments() {
        let text = "# comment\n\nradio.adhoc.queueCapacity = 32\nqos.rFactor=0.1\n";
        let entries = parse_entries(text, "t").unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].line, 3);
        let mut cfg = RunConfig::default();
        cfg.apply(entries.iter().map(|e| (e.key.as_str(), e.value.as_str()))).unwrap();
        assert_eq!(cfg.scenario.adhoc.queue_capacity, 32);
        assert_eq!(cfg.scenario.qos.r_factor, 0.1);
    }

    #[test]
    fn syntax_and_key_errors() {
        assert!(matches!(parse_entries("novalue\n", "f"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(parse_entries("=3\n", "f"), Err(ConfigError::Syntax { .. })));
        let mut cfg = RunConfig::default();
        assert_eq!(cfg.set("qos.nope", "1"), Err(ConfigError::UnknownKey("qos.nope".into())));
        assert!(matches!(cfg.set("qos.rFactor", "lots"), Err(ConfigError::InvalidValue { .. })));
        cfg.set("qos.rFactor", "2").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn scheme_keys() {
        let mut cfg = RunConfig::default();
        cfg.set("scheme.kind", "periodic").unwrap();
        cfg.set("scheme.period", "6").unwrap();
        assert_eq!(cfg.scenario.scheme, SchemeKind::Periodic(6.0));
        cfg.set("scheme.kind", "periodic").unwrap();
        assert_eq!(cfg.scenario.scheme, SchemeKind::Periodic(6.0));
        cfg.set("scheme", "periodic:2").unwrap();
        assert_eq!(cfg.scenario.scheme, SchemeKind::Periodic(2.0));
        cfg.set("scheme.kind", "nolte").unwrap();
        assert_eq!(cfg.scenario.scheme, SchemeKind::NoLte);
    }

    #[test]
    fn dump_round_trips() {
        let mut cfg = RunConfig::desk_scale();
        cfg.set("scheme", "periodic:8").unwrap();
        cfg.set("radio.pathloss.sensitivityDbm", "-80").unwrap();
        cfg.set("qos.tInitial", "0.25").unwrap();
        let text = cfg.to_config_string();
        let mut back = RunConfig::default();
        let entries = parse_entries(&text, "dump").unwrap();
        back.apply(entries.iter().map(|e| (e.key.as_str(), e.value.as_str()))).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn calibrated_propagation_follows_range() {
        let mut s = Scenario::default();
        s.adhoc.range_m = 100.0;
        let p = s.propagation();
        assert!(p.path_loss.can_receive(100.0));
        assert!(!p.path_loss.can_receive(101.0));
    }
}
