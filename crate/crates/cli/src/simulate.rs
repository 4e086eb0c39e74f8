//! `simulate` and `sweep`.

use std::fmt::Write as _;

use risfair::parallel::{with_threads, Execution};
use risfair::schemes::{monte_carlo_many, MonteCarloOptions, SchemeId, SchemeSummary};

use crate::config::ExperimentConfig;
use crate::output::{fmt_num, Point, Row};

/// S2 (statistical phases, designed once) against S1 (phases redesigned for
/// every realization) at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeComparison {
    pub point: Point,
    pub realizations: usize,
    pub s2_statistical_ms: f64,
    pub s2_per_realization_ms: f64,
    pub s1_per_realization_ms: f64,
}

impl RuntimeComparison {
    pub fn s2_total_ms(&self) -> f64 {
        self.s2_statistical_ms + self.realizations as f64 * self.s2_per_realization_ms
    }

    pub fn s1_total_ms(&self) -> f64 {
        self.realizations as f64 * self.s1_per_realization_ms
    }

    pub fn s2_faster(&self) -> bool {
        self.s2_total_ms() < self.s1_total_ms()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub rows: Vec<Row>,
    pub runtime: Vec<RuntimeComparison>,
}

impl SimulationReport {
    /// Human-readable runtime comparison, one line per sweep point.
    pub fn runtime_text(&self) -> String {
        let mut s = String::new();
        for r in &self.runtime {
            let _ = writeln!(
                s,
                "runtime K={} M={} N={}{}: S2 {} ms design + {} x {} ms = {} ms; S1 {} x {} ms = {} ms; S2 faster: {}",
                r.point.users,
                r.point.antennas,
                r.point.ris_elements,
                match (r.point.axis, r.point.value) {
                    (Some(a), Some(v)) => format!(" ({a}={})", fmt_num(v)),
                    _ => String::new(),
                },
                fmt_num(r.s2_statistical_ms),
                r.realizations,
                fmt_num(r.s2_per_realization_ms),
                fmt_num(r.s2_total_ms()),
                r.realizations,
                fmt_num(r.s1_per_realization_ms),
                fmt_num(r.s1_total_ms()),
                if r.s2_faster() { "yes" } else { "no" },
            );
        }
        s
    }
}

pub fn execution(threads: usize) -> Execution {
    if threads == 1 {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

/// Run every scheme at every sweep point. Solver failures end up in the
/// `error` column of the affected rows.
pub fn simulate(cfg: &ExperimentConfig) -> SimulationReport {
    with_threads(cfg.threads, || simulate_inner(cfg))
}

fn simulate_inner(cfg: &ExperimentConfig) -> SimulationReport {
    let axis = cfg.sweep.as_ref().map(|s| s.axis.label());
    let mut rows = Vec::new();
    let mut runtime = Vec::new();
    for value in cfg.points() {
        let system = cfg.system_at(value);
        let point = Point {
            axis,
            value,
            users: system.users,
            antennas: system.antennas,
            ris_elements: system.ris_elements,
        };
        let opts = MonteCarloOptions {
            redraw_statistics: cfg.redraw_statistics,
            exposure: cfg.exposure_at(value),
            scheme: cfg.scheme_options.clone(),
            execution: execution(cfg.threads),
        };
        match monte_carlo_many(&cfg.schemes, &system, cfg.trials, cfg.seed, &opts) {
            Ok(summaries) => {
                if let Some(r) = compare_runtime(&summaries, point, cfg.amortize_over) {
                    runtime.push(r);
                }
                rows.extend(summaries.iter().map(|s| Row::from_summary(s, point, cfg.seed)));
            }
            Err(e) => {
                rows.extend(
                    cfg.schemes
                        .iter()
                        .map(|&id| Row::failed(id, point, cfg.seed, cfg.trials, e.to_string())),
                );
            }
        }
    }
    SimulationReport { rows, runtime }
}

fn compare_runtime(summaries: &[SchemeSummary], point: Point, realizations: usize) -> Option<RuntimeComparison> {
    let find = |id| summaries.iter().find(|s| s.scheme == id && s.trials > 0);
    let s1 = find(SchemeId::S1)?;
    let s2 = find(SchemeId::S2)?;
    Some(RuntimeComparison {
        point,
        realizations,
        s2_statistical_ms: s2.statistical_ms,
        s2_per_realization_ms: s2.per_realization_ms,
        s1_per_realization_ms: s1.per_realization_ms,
    })
}
