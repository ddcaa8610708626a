use std::collections::{HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::agents::{save_transcript, FeedbackRecord};
use crate::catalog::{load_catalog, Catalog};
use crate::error::{Error, Result};
use crate::metrics::{
    compute_metrics, write_metrics_csv, write_summary_csv, IterationMetrics, MetricsConfig,
};
use crate::personas::{load_profiles, save_profiles, UserProfile};
use crate::simulation::{run, RunLog, SimulationConfig, Slate};

/// Present in a run directory while the run is unfinished or after it failed.
pub const SENTINEL: &str = "INCOMPLETE";

/// Creates `dir` (which must be absent or empty) and marks it incomplete.
pub fn prepare_run_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        let mut entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        if entries.next().is_some() {
            return Err(Error::InvalidConfig(format!(
                "output directory {} is not empty",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let sentinel = dir.join(SENTINEL);
    fs::write(&sentinel, "run in progress\n").map_err(|e| Error::io(&sentinel, e))
}

/// Records the failure reason in the sentinel.
pub fn mark_failed(dir: &Path, error: &Error) -> Result<()> {
    let sentinel = dir.join(SENTINEL);
    fs::write(&sentinel, format!("run failed: {error}\n")).map_err(|e| Error::io(&sentinel, e))
}

pub fn finish_run_dir(dir: &Path) -> Result<()> {
    let sentinel = dir.join(SENTINEL);
    fs::remove_file(&sentinel).map_err(|e| Error::io(&sentinel, e))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut writer, row)?;
        writer.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                path: path.to_path_buf(),
                line: idx + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(rows)
}

fn write_csv_file(
    path: &Path,
    metrics: &[IterationMetrics],
    write: fn(&[IterationMetrics], BufWriter<File>) -> Result<()>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write(metrics, BufWriter::new(file))
}

/// Writes every artifact of a finished run into `dir`.
pub fn write_run_dir(dir: &Path, log: &RunLog, catalog: &Catalog) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let path = dir.join("config.json");
    let text = serde_json::to_string_pretty(&log.config)?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    written.push(path);

    let path = dir.join("profiles.jsonl");
    save_profiles(&log.profiles, &path)?;
    written.push(path);

    let path = dir.join("records.jsonl");
    write_jsonl(&path, &log.records)?;
    written.push(path);

    let path = dir.join("slates.jsonl");
    write_jsonl(&path, &log.slates)?;
    written.push(path);

    let path = dir.join("catalog.jsonl");
    catalog.save(&path)?;
    written.push(path);

    let path = dir.join("metrics.csv");
    write_csv_file(&path, &log.metrics, write_metrics_csv)?;
    written.push(path);

    let path = dir.join("summary.csv");
    write_csv_file(&path, &log.metrics, write_summary_csv)?;
    written.push(path);

    if !log.transcript.is_empty() {
        let sub = dir.join("transcripts");
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        let path = sub.join("transcript.jsonl");
        save_transcript(&log.transcript, &path)?;
        written.push(path);
    }
    if !log.checkpoints.is_empty() {
        let sub = dir.join("checkpoints");
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        for (iteration, checkpoint) in &log.checkpoints {
            let path = sub.join(format!("iteration_{iteration:03}.json"));
            checkpoint.save(&path)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Runs a simulation into a fresh run directory. On failure the directory
/// keeps its sentinel, now holding the error.
pub fn run_to_dir(
    config: &SimulationConfig,
    catalog: &Catalog,
    dir: &Path,
    progress: &mut dyn FnMut(&IterationMetrics),
) -> Result<RunLog> {
    prepare_run_dir(dir)?;
    let result = run(config, catalog, progress).and_then(|log| {
        write_run_dir(dir, &log, catalog)?;
        Ok(log)
    });
    match result {
        Ok(log) => {
            finish_run_dir(dir)?;
            Ok(log)
        }
        Err(e) => {
            if let Err(marker) = mark_failed(dir, &e) {
                log::error!("could not record failure in {}: {marker}", dir.display());
            }
            Err(e)
        }
    }
}

/// The persisted log of a run, enough to recompute its metrics.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub config: SimulationConfig,
    pub profiles: Vec<UserProfile>,
    pub records: Vec<FeedbackRecord>,
    pub slates: Vec<Slate>,
    pub catalog: Catalog,
}

impl LoadedRun {
    pub fn user_ids(&self) -> Vec<String> {
        self.profiles.iter().map(|p| p.user_id.clone()).collect()
    }

    pub fn metrics(&self, config: MetricsConfig) -> Result<Vec<IterationMetrics>> {
        compute_metrics(
            &self.user_ids(),
            &self.catalog,
            &self.records,
            self.config.n_iterations,
            config,
        )
    }
}

/// Loads and audits a run directory.
pub fn load_run_dir(dir: &Path) -> Result<LoadedRun> {
    if dir.join(SENTINEL).exists() {
        return Err(Error::CorruptLog(format!(
            "{} is marked incomplete",
            dir.display()
        )));
    }
    let path = dir.join("config.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let config = SimulationConfig::from_json(&text)?;
    let profiles = load_profiles(&dir.join("profiles.jsonl"))?;
    let records: Vec<FeedbackRecord> = read_jsonl(&dir.join("records.jsonl"))?;
    let slates: Vec<Slate> = read_jsonl(&dir.join("slates.jsonl"))?;
    let catalog = load_catalog(&dir.join("catalog.jsonl"))?;
    audit_log(&config, &profiles, &records, &slates)?;
    Ok(LoadedRun {
        config,
        profiles,
        records,
        slates,
        catalog,
    })
}

/// Checks the structural invariants of a log: one slate of exactly
/// `items_per_iteration` distinct items per user and iteration, no item
/// shown twice to the same user, and records matching the slates in order.
pub fn audit_log(
    config: &SimulationConfig,
    profiles: &[UserProfile],
    records: &[FeedbackRecord],
    slates: &[Slate],
) -> Result<()> {
    let fail = |m: String| Err(Error::CorruptLog(m));
    let k = config.items_per_iteration;
    let users: HashSet<&str> = profiles.iter().map(|p| p.user_id.as_str()).collect();
    if users.len() != config.n_users || profiles.len() != config.n_users {
        return fail(format!(
            "{} profiles for {} users",
            profiles.len(),
            config.n_users
        ));
    }

    let mut by_key: HashMap<(&str, usize), &Slate> = HashMap::new();
    let mut seen: HashMap<&str, HashSet<&str>> = HashMap::new();
    for slate in slates {
        if !users.contains(slate.user_id.as_str()) {
            return fail(format!("slate for unknown user {}", slate.user_id));
        }
        if slate.iteration >= config.n_iterations {
            return fail(format!(
                "slate for iteration {} of {}",
                slate.iteration, config.n_iterations
            ));
        }
        if slate.items.len() != k {
            return fail(format!(
                "{} items shown to {} in iteration {}, expected {k}",
                slate.items.len(),
                slate.user_id,
                slate.iteration
            ));
        }
        if by_key
            .insert((&slate.user_id, slate.iteration), slate)
            .is_some()
        {
            return fail(format!(
                "two slates for {} in iteration {}",
                slate.user_id, slate.iteration
            ));
        }
        let user_seen = seen.entry(&slate.user_id).or_default();
        for item in &slate.items {
            if !user_seen.insert(item) {
                return fail(format!(
                    "item {item} shown to {} more than once",
                    slate.user_id
                ));
            }
        }
    }
    if by_key.len() != config.n_users * config.n_iterations {
        return fail(format!(
            "{} slates, expected {}",
            by_key.len(),
            config.n_users * config.n_iterations
        ));
    }

    let mut answered: HashMap<(&str, usize), Vec<&str>> = HashMap::new();
    for r in records {
        answered
            .entry((&r.user_id, r.iteration))
            .or_default()
            .push(&r.item_id);
    }
    for (key, slate) in &by_key {
        let got = answered.remove(key).unwrap_or_default();
        let expected: Vec<&str> = slate.items.iter().map(String::as_str).collect();
        if got != expected {
            return fail(format!(
                "records for {} in iteration {} do not match the slate ({} of {k} records)",
                key.0,
                key.1,
                got.len()
            ));
        }
    }
    if let Some(((user, iteration), _)) = answered.into_iter().next() {
        return fail(format!(
            "records for {user} in iteration {iteration} without a slate"
        ));
    }
    Ok(())
}
