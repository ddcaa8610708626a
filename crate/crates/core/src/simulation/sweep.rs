use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::catalog::{Catalog, LEVELS};
use crate::error::{Error, Result};
use crate::personas::MotivationKind;
use crate::recommender::{Cscmr, WeightStrategy};
use crate::simulation::{run, run_to_dir, IterationSummary, ModelKind, SimulationConfig};

/// Config field varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepAxis {
    Cscmr,
    Strategy,
    Motivation,
    Model,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 4] = [
        SweepAxis::Cscmr,
        SweepAxis::Strategy,
        SweepAxis::Motivation,
        SweepAxis::Model,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Cscmr => "cscmr",
            SweepAxis::Strategy => "strategy",
            SweepAxis::Motivation => "motivation",
            SweepAxis::Model => "model",
        }
    }

    /// `base` with the axis set to `value`.
    pub fn apply(self, base: &SimulationConfig, value: &str) -> Result<SimulationConfig> {
        let mut config = base.clone();
        match self {
            SweepAxis::Cscmr => {
                let pct: u8 = value.parse().map_err(|_| {
                    Error::InvalidConfig(format!("cscmr value {value:?} is not an integer"))
                })?;
                config.cscmr = Cscmr::new(pct)?;
            }
            SweepAxis::Strategy => config.strategy = value.parse::<WeightStrategy>()?,
            SweepAxis::Motivation => config.motivation = value.parse::<MotivationKind>()?,
            SweepAxis::Model => config.model = value.parse::<ModelKind>()?,
        }
        Ok(config)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weight_strategy" => Ok(SweepAxis::Strategy),
            _ => SweepAxis::ALL
                .into_iter()
                .find(|a| a.name() == s)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown sweep axis {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub value: String,
    pub seed: u64,
    pub dir: Option<PathBuf>,
    /// Per-iteration summaries, or the error message of a failed run.
    pub outcome: std::result::Result<Vec<IterationSummary>, String>,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub runs: Vec<SweepRun>,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    axis_value: &'a str,
    seed: u64,
    iteration: usize,
    mean_entropy_l1: f64,
    mean_entropy_l2: f64,
    mean_entropy_l3: f64,
    mean_satisfaction: f64,
    bubble_l1: f64,
    bubble_l2: f64,
    bubble_l3: f64,
}

#[derive(Serialize)]
struct AggregateRow<'a> {
    axis_value: &'a str,
    iteration: usize,
    runs: usize,
    mean_entropy_l1: f64,
    mean_entropy_l2: f64,
    mean_entropy_l3: f64,
    mean_satisfaction: f64,
}

impl SweepReport {
    pub fn failures(&self) -> impl Iterator<Item = &SweepRun> {
        self.runs.iter().filter(|r| r.outcome.is_err())
    }

    /// One row per (value, seed, iteration) of every successful run.
    pub fn write_summary_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        for run in &self.runs {
            let Ok(summaries) = &run.outcome else {
                continue;
            };
            for s in summaries {
                csv.serialize(SummaryRow {
                    axis_value: &run.value,
                    seed: run.seed,
                    iteration: s.iteration,
                    mean_entropy_l1: s.mean_entropy[0],
                    mean_entropy_l2: s.mean_entropy[1],
                    mean_entropy_l3: s.mean_entropy[2],
                    mean_satisfaction: s.mean_satisfaction,
                    bubble_l1: s.bubble_proportion[0],
                    bubble_l2: s.bubble_proportion[1],
                    bubble_l3: s.bubble_proportion[2],
                })?;
            }
        }
        csv.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Seed-averaged trajectories per axis value.
    pub fn write_aggregate_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        let mut values: Vec<&str> = Vec::new();
        for run in &self.runs {
            if !values.contains(&run.value.as_str()) {
                values.push(&run.value);
            }
        }
        for value in values {
            let trajectories: Vec<&Vec<IterationSummary>> = self
                .runs
                .iter()
                .filter(|r| r.value == value)
                .filter_map(|r| r.outcome.as_ref().ok())
                .collect();
            let Some(len) = trajectories.iter().map(|t| t.len()).min() else {
                continue;
            };
            let n = trajectories.len() as f64;
            for i in 0..len {
                let entropy: [f64; LEVELS] = std::array::from_fn(|l| {
                    trajectories
                        .iter()
                        .map(|t| t[i].mean_entropy[l])
                        .sum::<f64>()
                        / n
                });
                let satisfaction = trajectories
                    .iter()
                    .map(|t| t[i].mean_satisfaction)
                    .sum::<f64>()
                    / n;
                csv.serialize(AggregateRow {
                    axis_value: value,
                    iteration: trajectories[0][i].iteration,
                    runs: trajectories.len(),
                    mean_entropy_l1: entropy[0],
                    mean_entropy_l2: entropy[1],
                    mean_entropy_l3: entropy[2],
                    mean_satisfaction: satisfaction,
                })?;
            }
        }
        csv.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// One run per (value, seed). With `out`, each run is written to
/// `out/<axis>=<value>/seed=<seed>/`. A failing run is recorded in the
/// report and the sweep moves on.
pub fn run_sweep(
    base: &SimulationConfig,
    axis: SweepAxis,
    values: &[String],
    seeds: &[u64],
    catalog: &Catalog,
    out: Option<&Path>,
) -> Result<SweepReport> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig(
            "a sweep needs at least one seed".into(),
        ));
    }
    if values.is_empty() {
        return Err(Error::InvalidConfig(
            "a sweep needs at least one value".into(),
        ));
    }
    let configs = values
        .iter()
        .map(|v| axis.apply(base, v))
        .collect::<Result<Vec<_>>>()?;

    let mut runs = Vec::with_capacity(values.len() * seeds.len());
    for (value, config) in values.iter().zip(&configs) {
        for &seed in seeds {
            let mut config = config.clone();
            config.seed = seed;
            let dir = out.map(|o| {
                o.join(format!("{axis}={value}"))
                    .join(format!("seed={seed}"))
            });
            let result = match &dir {
                Some(d) => run_to_dir(&config, catalog, d, &mut |_| {}),
                None => run(&config, catalog, &mut |_| {}),
            };
            let outcome = match result {
                Ok(log) => Ok(log.summaries()),
                Err(e) => {
                    log::error!("sweep run {axis}={value} seed={seed} failed: {e}");
                    Err(e.to_string())
                }
            };
            runs.push(SweepRun {
                value: value.clone(),
                seed,
                dir,
                outcome,
            });
        }
    }
    Ok(SweepReport { axis, runs })
}
