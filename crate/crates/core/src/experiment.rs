//! Parameter sweeps, built-in figure presets and the scheme comparison.

use std::io::Write;

use rayon::prelude::*;

use crate::config::{Entry, RunConfig};
use crate::drrm::SchemeKind;
use crate::engine::run_replicates;
use crate::error::{ConfigError, SimError};
use crate::metrics::AggregateMetrics;

/// Metric columns that follow the swept parameters in every sweep CSV.
pub const METRIC_COLUMNS: [&str; 8] = [
    "vho_min",
    "vho_median",
    "vho_max",
    "vho_mean",
    "pdr",
    "latency_mean",
    "goodput_adhoc",
    "goodput_lte",
];

/// `(key, value)` assignments of one sweep point.
pub type Params = Vec<(String, String)>;

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub key: String,
    pub values: Vec<String>,
}

/// A base configuration plus the parameters to sweep over it.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub base: RunConfig,
    pub sweeps: Vec<Sweep>,
}

impl ExperimentSpec {
    pub fn new(name: impl Into<String>, base: RunConfig) -> Self {
        ExperimentSpec {
            name: name.into(),
            base,
            sweeps: Vec::new(),
        }
    }

    /// Adds a swept key. The value list must not be empty.
    pub fn sweep(mut self, key: &str, values: &[&str]) -> Self {
        self.sweeps.push(Sweep {
            key: key.to_string(),
            values: values.iter().map(|v| v.to_string()).collect(),
        });
        self
    }

    /// Applies config entries onto `base`: `experiment.name=...` names the
    /// experiment, `sweep.<key>=v1,v2,...` adds a sweep, anything else is an
    /// ordinary configuration key.
    pub fn from_entries(base: RunConfig, entries: &[Entry]) -> Result<Self, ConfigError> {
        let mut spec = ExperimentSpec::new("sweep", base);
        for e in entries {
            if e.key == "experiment.name" {
                spec.name = e.value.clone();
            } else if let Some(key) = e.key.strip_prefix("sweep.") {
                let values: Vec<String> = e
                    .value
                    .split(',')
                    .map(|v| v.trim().to_string())
                    .filter(|v| !v.is_empty())
                    .collect();
                spec.add_sweep(key, values)?;
            } else {
                spec.base.set(&e.key, &e.value)?;
            }
        }
        Ok(spec)
    }

    fn add_sweep(&mut self, key: &str, values: Vec<String>) -> Result<(), ConfigError> {
        if values.is_empty() {
            return Err(ConfigError::value(&format!("sweep.{key}"), "", "needs at least one value"));
        }
        if self.sweeps.iter().any(|s| s.key == key) {
            return Err(ConfigError::invalid(format!("`{key}` is swept twice")));
        }
        self.sweeps.push(Sweep {
            key: key.to_string(),
            values,
        });
        Ok(())
    }

    /// Cartesian product of the swept values; the first sweep varies
    /// slowest. A spec without sweeps has one empty combination.
    pub fn combinations(&self) -> Vec<Vec<(String, String)>> {
        let mut combos = vec![Vec::new()];
        for s in &self.sweeps {
            combos = combos
                .into_iter()
                .flat_map(|prefix| {
                    s.values.iter().map(move |v| {
                        let mut c: Vec<(String, String)> = prefix.clone();
                        c.push((s.key.clone(), v.clone()));
                        c
                    })
                })
                .collect();
        }
        combos
    }

    /// Configurations for every combination, validated up front.
    pub fn configs(&self) -> Result<Vec<(Params, RunConfig)>, ConfigError> {
        self.combinations()
            .into_iter()
            .map(|combo| {
                let mut cfg = self.base.clone();
                for (k, v) in &combo {
                    cfg.set(k, v)?;
                }
                cfg.validate()?;
                Ok((combo, cfg))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub params: Vec<(String, String)>,
    pub metrics: AggregateMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<SweepRow>,
}

/// Runs every combination; rows come back in combination order.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepTable, SimError> {
    let configs = spec.configs()?;
    let rows = configs
        .into_par_iter()
        .map(|(params, cfg)| run_replicates(&cfg).map(|metrics| SweepRow { params, metrics }))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepTable {
        name: spec.name.clone(),
        columns: spec.sweeps.iter().map(|s| s.key.clone()).collect(),
        rows,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// The metric cells of one aggregate, in [`METRIC_COLUMNS`] order.
pub fn metric_cells(m: &AggregateMetrics) -> Vec<String> {
    vec![
        m.vho.min.to_string(),
        m.vho.median.to_string(),
        m.vho.max.to_string(),
        m.vho.mean.to_string(),
        opt(m.pdr.map(|s| s.mean)),
        opt(m.latency.map(|s| s.mean)),
        m.goodput_adhoc.mean.to_string(),
        m.goodput_lte.mean.to_string(),
    ]
}

impl SweepTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let header: Vec<&str> = self
            .columns
            .iter()
            .map(String::as_str)
            .chain(METRIC_COLUMNS)
            .collect();
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec: Vec<String> = row.params.iter().map(|(_, v)| v.clone()).collect();
            rec.extend(metric_cells(&row.metrics));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Mean VHO count per row, in row order.
    pub fn vho_means(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.metrics.vho.mean).collect()
    }
}

pub const PRESETS: [&str; 7] = ["fig4a", "fig4b", "fig4c", "fig5a", "fig5b", "fig5c", "fig6"];

/// Schemes of the comparison study, in table order.
pub fn comparison_schemes() -> Vec<SchemeKind> {
    let mut v = vec![SchemeKind::QosAware];
    v.extend([2.0, 4.0, 6.0, 8.0, 10.0].map(SchemeKind::Periodic));
    v.extend([SchemeKind::NoBfa, SchemeKind::NoLte]);
    v
}

/// Built-in sweeps reproducing the evaluation figures.
pub fn preset(name: &str, base: RunConfig) -> Option<ExperimentSpec> {
    let spec = ExperimentSpec::new(name, base);
    let rf = ["0.1", "0.25", "0.5"];
    let tol = ["0.2", "0.5", "0.8"];
    let tr = ["5", "10", "20"];
    let ti = ["1", "2", "5"];
    Some(match name {
        "fig4a" => spec.sweep("qos.rFactor", &rf),
        "fig4b" => spec.sweep("qos.rTolerance", &tol),
        "fig4c" => spec.sweep("qos.rFactor", &rf).sweep("qos.rTolerance", &tol),
        "fig5a" => spec.sweep("qos.tReduced", &tr),
        "fig5b" => spec.sweep("qos.tInitial", &ti),
        "fig5c" => spec.sweep("qos.tReduced", &tr).sweep("qos.tInitial", &ti),
        "fig6" | "fig7" | "fig8" | "fig9" => {
            let names: Vec<String> = comparison_schemes().iter().map(|s| s.to_string()).collect();
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            spec.sweep("scheme", &refs)
        }
        _ => return None,
    })
}

/// One row of the scheme comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeResult {
    pub scheme: SchemeKind,
    pub metrics: AggregateMetrics,
}

impl SchemeResult {
    /// LTE part of the total goodput; 0 when nothing was delivered.
    pub fn lte_share(&self) -> f64 {
        let total = self.metrics.goodput_total.mean;
        if total > 0.0 {
            self.metrics.goodput_lte.mean / total
        } else {
            0.0
        }
    }

    fn pdr(&self) -> f64 {
        self.metrics.pdr.map_or(f64::NAN, |s| s.mean)
    }

    fn latency(&self) -> f64 {
        self.metrics.latency.map_or(f64::NAN, |s| s.mean)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub duration: f64,
    pub results: Vec<SchemeResult>,
    pub checks: Vec<TrendCheck>,
}

/// Allowed PDR gap between the QoS-aware and the no-BFA scheme, in
/// percentage points.
pub const PDR_GAP_PP: f64 = 5.0;

/// Runs every scheme of [`comparison_schemes`] on the same seeds and
/// evaluates the expected trends.
pub fn compare(base: &RunConfig) -> Result<Comparison, SimError> {
    let schemes = comparison_schemes();
    let results = schemes
        .into_par_iter()
        .map(|scheme| {
            let mut cfg = base.clone();
            cfg.scenario.scheme = scheme;
            run_replicates(&cfg).map(|metrics| SchemeResult { scheme, metrics })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let checks = trend_checks(&results, base.duration);
    Ok(Comparison {
        duration: base.duration,
        results,
        checks,
    })
}

fn find(results: &[SchemeResult], pred: impl Fn(&SchemeKind) -> bool) -> Vec<&SchemeResult> {
    results.iter().filter(|r| pred(&r.scheme)).collect()
}

/// Trend checks over a set of scheme results. Schemes missing from
/// `results` are skipped by the checks that would need them.
pub fn trend_checks(results: &[SchemeResult], duration: f64) -> Vec<TrendCheck> {
    let mut out = Vec::new();
    let qos = find(results, |s| *s == SchemeKind::QosAware).first().copied();
    let nobfa = find(results, |s| *s == SchemeKind::NoBfa).first().copied();
    let nolte = find(results, |s| *s == SchemeKind::NoLte).first().copied();
    let periodic = find(results, |s| matches!(s, SchemeKind::Periodic(_)));
    let dual = find(results, |s| !matches!(s, SchemeKind::QosAware | SchemeKind::NoLte));

    if let Some(nl) = nolte {
        let total: u64 = nl.metrics.runs.iter().map(|r| r.vho_count).sum();
        out.push(TrendCheck {
            name: "nolte_zero_vho",
            passed: total == 0,
            detail: format!("total VHOs {total}"),
        });
    }

    for p in &periodic {
        let SchemeKind::Periodic(period) = p.scheme else { unreachable!() };
        let expected = (duration / period).floor() as i64;
        let worst = p
            .metrics
            .runs
            .iter()
            .flat_map(|r| r.vho_per_vehicle.iter())
            .map(|&n| (n as i64 - expected).abs())
            .max()
            .unwrap_or(0);
        out.push(TrendCheck {
            name: "periodic_toggle_count",
            passed: worst <= 1,
            detail: format!("{}: expected {expected} per vehicle, worst deviation {worst}", p.scheme),
        });
    }

    if let Some(q) = qos {
        let beaten = dual.iter().all(|d| q.metrics.vho.min < d.metrics.vho.min);
        out.push(TrendCheck {
            name: "qos_min_vho_lowest",
            passed: beaten && !dual.is_empty(),
            detail: format!(
                "qos min {} vs {}",
                q.metrics.vho.min,
                dual.iter()
                    .map(|d| format!("{} {}", d.scheme, d.metrics.vho.min))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        });
    }

    if let (Some(q), Some(nb)) = (qos, nobfa) {
        let pairs: Vec<(u64, u64)> = q
            .metrics
            .runs
            .iter()
            .zip(&nb.metrics.runs)
            .map(|(a, b)| (a.vho_count, b.vho_count))
            .collect();
        out.push(TrendCheck {
            name: "qos_vho_le_nobfa_per_seed",
            passed: pairs.iter().all(|(a, b)| a <= b),
            detail: format!("(qos, nobfa) per seed {pairs:?}"),
        });
        let gap = q.pdr() - nb.pdr();
        out.push(TrendCheck {
            name: "qos_pdr_close_to_nobfa",
            passed: gap.abs() <= PDR_GAP_PP,
            detail: format!("qos {:.2} % vs nobfa {:.2} %", q.pdr(), nb.pdr()),
        });
        out.push(TrendCheck {
            name: "qos_latency_below_nobfa",
            passed: q.latency() < nb.latency(),
            detail: format!("qos {:.4} s vs nobfa {:.4} s", q.latency(), nb.latency()),
        });
    }

    if let Some(nl) = nolte {
        out.push(TrendCheck {
            name: "nolte_pdr_lowest",
            passed: results.iter().filter(|r| r.scheme != nl.scheme).all(|r| nl.pdr() < r.pdr()),
            detail: format!("nolte {:.2} %", nl.pdr()),
        });
        out.push(TrendCheck {
            name: "nolte_latency_lowest",
            passed: results.iter().filter(|r| r.scheme != nl.scheme).all(|r| nl.latency() < r.latency()),
            detail: format!(
                "nolte {:.4} s, next lowest {:.4} s",
                nl.latency(),
                results.iter().filter(|r| r.scheme != nl.scheme).map(|r| r.latency()).fold(f64::INFINITY, f64::min)
            ),
        });
    }

    for r in results {
        let g = &r.metrics;
        let exact = g
            .runs
            .iter()
            .all(|m| m.goodput().adhoc_bps + m.goodput().lte_bps == m.goodput().total_bps);
        out.push(TrendCheck {
            name: "goodput_stack_sums",
            passed: exact,
            detail: r.scheme.to_string(),
        });
    }

    if let Some(q) = qos {
        out.push(TrendCheck {
            name: "qos_adhoc_share_dominates",
            passed: q.metrics.goodput_adhoc.mean > q.metrics.goodput_lte.mean,
            detail: format!("lte share {:.3}", q.lte_share()),
        });
        out.push(TrendCheck {
            name: "qos_lte_share_smallest",
            passed: !dual.is_empty() && dual.iter().all(|d| q.lte_share() < d.lte_share()),
            detail: format!(
                "qos {:.3} vs {}",
                q.lte_share(),
                dual.iter()
                    .map(|d| format!("{} {:.3}", d.scheme, d.lte_share()))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        });
    }
    out
}

impl Comparison {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let header: Vec<&str> = std::iter::once("scheme")
            .chain(METRIC_COLUMNS)
            .chain(["goodput_total"])
            .collect();
        w.write_record(&header)?;
        for r in &self.results {
            let mut rec = vec![r.scheme.to_string()];
            rec.extend(metric_cells(&r.metrics));
            rec.push(r.metrics.goodput_total.mean.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_entries;

    fn tiny() -> RunConfig {
        let mut cfg = RunConfig::desk_scale();
        cfg.duration = 1.0;
        cfg.replicates = 1;
        cfg.scenario.highway.vehicle_count = 4;
        cfg
    }

    #[test]
    fn sweep_row_counts() {
        let one = ExperimentSpec::new("a", tiny()).sweep("qos.rFactor", &["0.1", "0.25", "0.5"]);
        assert_eq!(one.combinations().len(), 3);
        let two = one.clone().sweep("qos.rTolerance", &["0.2", "0.5", "0.8"]);
        let combos = two.combinations();
        assert_eq!(combos.len(), 9);
        assert_eq!(combos[1], vec![
            ("qos.rFactor".to_string(), "0.1".to_string()),
            ("qos.rTolerance".to_string(), "0.5".to_string()),
        ]);
        assert_eq!(ExperimentSpec::new("none", tiny()).combinations(), vec![Vec::new()]);
    }

    #[test]
    fn entries_mix_sweeps_and_settings() {
        let text = "experiment.name=rf\nsweep.qos.rFactor=0.1, 0.5\nsim.seed=9\n";
        let spec = ExperimentSpec::from_entries(tiny(), &parse_entries(text, "t").unwrap()).unwrap();
        assert_eq!(spec.name, "rf");
        assert_eq!(spec.base.seed, 9);
        assert_eq!(spec.sweeps[0].values, vec!["0.1", "0.5"]);

        let dup = "sweep.qos.rFactor=0.1\nsweep.qos.rFactor=0.2\n";
        assert!(ExperimentSpec::from_entries(tiny(), &parse_entries(dup, "t").unwrap()).is_err());
        let bad = "sweep.qos.nope=1\n";
        let spec = ExperimentSpec::from_entries(tiny(), &parse_entries(bad, "t").unwrap()).unwrap();
        assert!(matches!(spec.configs(), Err(ConfigError::UnknownKey(_))));
    }

    #[test]
    fn csv_layout_is_stable() {
        let spec = ExperimentSpec::new("a", tiny()).sweep("qos.rFactor", &["0.1", "0.5"]);
        let table = run_sweep(&spec).unwrap();
        let csv = table.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "qos.rFactor,vho_min,vho_median,vho_max,vho_mean,pdr,latency_mean,goodput_adhoc,goodput_lte"
        );
        assert!(lines.next().unwrap().starts_with("0.1,"));
        assert!(lines.next().unwrap().starts_with("0.5,"));
        assert!(lines.next().is_none());
        assert_eq!(run_sweep(&spec).unwrap().to_csv(), csv);
    }

    #[test]
    fn fig6_lists_every_scheme() {
        let spec = preset("fig6", tiny()).unwrap();
        let labels: Vec<String> = spec.combinations().into_iter().map(|c| c[0].1.clone()).collect();
        assert_eq!(
            labels,
            vec![
                "qos", "periodic:2", "periodic:4", "periodic:6", "periodic:8", "periodic:10", "nobfa", "nolte"
            ]
        );
        for name in PRESETS {
            assert!(preset(name, tiny()).is_some(), "{name}");
        }
        assert!(preset("fig99", tiny()).is_none());
        assert_eq!(preset("fig4c", tiny()).unwrap().combinations().len(), 9);
    }
}
