//! Diversity and satisfaction metrics computed from a run log.
//!
//! Everything here is a pure function of its inputs, so metrics recomputed
//! from a persisted log match the in-run values bit for bit.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::FeedbackRecord;
use crate::catalog::{Catalog, LEVELS};
use crate::error::{Error, Result};
use crate::personas::UserProfile;

/// `n_seen / n_total`.
pub fn coverage(n_seen: usize, n_total: usize) -> Result<f64> {
    if n_total == 0 {
        return Err(Error::InvalidMetricInput(
            "coverage over zero categories".into(),
        ));
    }
    if n_seen > n_total {
        return Err(Error::InvalidMetricInput(format!(
            "{n_seen} seen categories out of {n_total}"
        )));
    }
    Ok(n_seen as f64 / n_total as f64)
}

/// Watch counts per category for one (user, level, window).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CategoryCounts {
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl CategoryCounts {
    pub fn new() -> Self {
        CategoryCounts::default()
    }

    pub fn add(&mut self, category: &str) {
        *self.counts.entry(category.to_string()).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn get(&self, category: &str) -> u64 {
        self.counts.get(category).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

impl<S: AsRef<str>> FromIterator<S> for CategoryCounts {
    fn from_iter<T: IntoIterator<Item = S>>(iter: T) -> Self {
        let mut counts = CategoryCounts::new();
        for c in iter {
            counts.add(c.as_ref());
        }
        counts
    }
}

/// Shannon entropy in nats; zero for empty counts.
pub fn entropy(counts: &CategoryCounts) -> f64 {
    if counts.total == 0 {
        return 0.0;
    }
    let n = counts.total as f64;
    let h: f64 = counts
        .counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    // A single category gives -1 * ln 1 = -0.0.
    h.max(0.0)
}

/// Fraction of records with a positive feedback type.
pub fn satisfaction(records: &[FeedbackRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let positive = records.iter().filter(|r| r.feedback.is_positive()).count();
    Ok(positive as f64 / records.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BubbleStatus {
    In,
    Out,
}

impl BubbleStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            BubbleStatus::In => "in",
            BubbleStatus::Out => "out",
        }
    }
}

impl fmt::Display for BubbleStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Median with the midpoint convention for an even number of values.
pub fn median(values: &[usize]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0
    })
}

/// A user is in the bubble iff their distinct-category count is strictly
/// below the median over all users. Output order follows the input.
pub fn bubble_status(distinct_counts: &[usize]) -> Vec<BubbleStatus> {
    let Some(m) = median(distinct_counts) else {
        return Vec::new();
    };
    distinct_counts
        .iter()
        .map(|&a| {
            if (a as f64) < m {
                BubbleStatus::In
            } else {
                BubbleStatus::Out
            }
        })
        .collect()
}

pub fn bubble_proportion(statuses: &[BubbleStatus]) -> Result<f64> {
    if statuses.is_empty() {
        return Err(Error::InvalidMetricInput(
            "bubble proportion over no users".into(),
        ));
    }
    let inside = statuses.iter().filter(|&&s| s == BubbleStatus::In).count();
    Ok(inside as f64 / statuses.len() as f64)
}

/// One step of an empirical CDF: `fraction` of the values are `<= value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcdfPoint {
    pub value: f64,
    pub fraction: f64,
}

/// Right-continuous ECDF with one point per distinct value, ascending.
pub fn ecdf(values: &[f64]) -> Result<Vec<EcdfPoint>> {
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidMetricInput(format!(
            "non-finite ECDF value {v}"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut points: Vec<EcdfPoint> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        let fraction = (i + 1) as f64 / n;
        match points.last_mut() {
            Some(last) if last.value == v => last.fraction = fraction,
            _ => points.push(EcdfPoint { value: v, fraction }),
        }
    }
    Ok(points)
}

/// Demographic attribute used to group users for ECDFs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemographicFeature {
    Age,
    Gender,
    CityLevel,
    PhonePrice,
}

/// Age bands used when grouping by age.
pub const AGE_BANDS: [(u32, u32); 4] = [(16, 24), (25, 34), (35, 44), (45, 60)];

impl DemographicFeature {
    pub const ALL: [DemographicFeature; 4] = [
        DemographicFeature::Age,
        DemographicFeature::Gender,
        DemographicFeature::CityLevel,
        DemographicFeature::PhonePrice,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DemographicFeature::Age => "age",
            DemographicFeature::Gender => "gender",
            DemographicFeature::CityLevel => "city_level",
            DemographicFeature::PhonePrice => "phone_price",
        }
    }

    /// Every group label the feature can produce, in display order.
    pub fn groups(self) -> Vec<String> {
        match self {
            DemographicFeature::Age => AGE_BANDS.iter().map(|(a, b)| format!("{a}-{b}")).collect(),
            DemographicFeature::Gender => vec!["female".into(), "male".into()],
            DemographicFeature::CityLevel => (1..=4).map(|c| c.to_string()).collect(),
            DemographicFeature::PhonePrice => crate::personas::PhonePrice::ALL
                .iter()
                .map(|p| p.label().to_string())
                .collect(),
        }
    }

    pub fn group_of(self, profile: &UserProfile) -> String {
        match self {
            DemographicFeature::Age => AGE_BANDS
                .iter()
                .find(|(a, b)| (*a..=*b).contains(&profile.age))
                .map(|(a, b)| format!("{a}-{b}"))
                .unwrap_or_else(|| "other".into()),
            DemographicFeature::Gender => profile.gender.as_str().to_string(),
            DemographicFeature::CityLevel => profile.city_level.to_string(),
            DemographicFeature::PhonePrice => profile.phone_price.label().to_string(),
        }
    }
}

impl fmt::Display for DemographicFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DemographicFeature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DemographicFeature::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown demographic feature {s:?}")))
    }
}

/// ECDF of `values[u]` within each demographic group of `profiles[u]`.
/// Groups without users are omitted.
pub fn demographic_ecdf(
    profiles: &[UserProfile],
    values: &[f64],
    feature: DemographicFeature,
) -> Result<Vec<(String, Vec<EcdfPoint>)>> {
    if profiles.len() != values.len() {
        return Err(Error::InvalidMetricInput(format!(
            "{} values for {} users",
            values.len(),
            profiles.len()
        )));
    }
    let mut grouped: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (p, &v) in profiles.iter().zip(values) {
        grouped.entry(feature.group_of(p)).or_default().push(v);
    }
    let mut out = Vec::new();
    let mut order = feature.groups();
    order.extend(
        grouped
            .keys()
            .filter(|g| !order.contains(g))
            .cloned()
            .collect::<Vec<_>>(),
    );
    for group in order {
        match grouped.get(&group) {
            Some(vals) => out.push((group, ecdf(vals)?)),
            None => log::info!("{feature} group {group:?} has no users, omitted"),
        }
    }
    Ok(out)
}

/// Which records count towards coverage and entropy at iteration `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricWindow {
    /// Records of iteration `i` only.
    #[default]
    PerIteration,
    /// Records of iterations `0..=i`.
    Cumulative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WatchedMode {
    /// Only items with positive feedback were watched.
    #[default]
    Positive,
    AllShown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub window: MetricWindow,
    pub watched: WatchedMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Entropy,
    Coverage,
}

impl FromStr for ValueKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entropy" => Ok(ValueKind::Entropy),
            "coverage" => Ok(ValueKind::Coverage),
            _ => Err(Error::InvalidConfig(format!("unknown value kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelMetrics {
    pub coverage: Vec<f64>,
    pub entropy: Vec<f64>,
    pub distinct: Vec<usize>,
    pub bubble: Vec<BubbleStatus>,
    pub bubble_proportion: f64,
}

impl LevelMetrics {
    pub fn mean_entropy(&self) -> f64 {
        mean(&self.entropy)
    }

    pub fn mean_coverage(&self) -> f64 {
        mean(&self.coverage)
    }
}

/// Metrics of one iteration; per-user vectors follow `user_ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub user_ids: Vec<String>,
    pub satisfaction: Vec<f64>,
    pub levels: [LevelMetrics; LEVELS],
}

impl IterationMetrics {
    pub fn mean_satisfaction(&self) -> f64 {
        mean(&self.satisfaction)
    }

    /// Level is 1-based.
    pub fn level(&self, level: usize) -> &LevelMetrics {
        &self.levels[level - 1]
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Records grouped by user and iteration, with catalog indices resolved.
struct IndexedLog<'a> {
    by_user: Vec<Vec<(usize, usize, &'a FeedbackRecord)>>,
}

impl<'a> IndexedLog<'a> {
    fn new(user_ids: &[String], catalog: &Catalog, records: &'a [FeedbackRecord]) -> Result<Self> {
        let position: HashMap<&str, usize> = user_ids
            .iter()
            .enumerate()
            .map(|(i, u)| (u.as_str(), i))
            .collect();
        let mut by_user = vec![Vec::new(); user_ids.len()];
        for r in records {
            let u = *position.get(r.user_id.as_str()).ok_or_else(|| {
                Error::CorruptLog(format!("record for unknown user {}", r.user_id))
            })?;
            let item = catalog.index_of(&r.item_id).ok_or_else(|| {
                Error::CorruptLog(format!("record for unknown item {}", r.item_id))
            })?;
            by_user[u].push((r.iteration, item, r));
        }
        Ok(IndexedLog { by_user })
    }
}

fn in_window(window: MetricWindow, record_iteration: usize, iteration: usize) -> bool {
    match window {
        MetricWindow::PerIteration => record_iteration == iteration,
        MetricWindow::Cumulative => record_iteration <= iteration,
    }
}

fn counted(watched: WatchedMode, record: &FeedbackRecord) -> bool {
    match watched {
        WatchedMode::Positive => record.feedback.is_positive(),
        WatchedMode::AllShown => true,
    }
}

fn iteration_metrics(
    log: &IndexedLog<'_>,
    user_ids: &[String],
    catalog: &Catalog,
    iteration: usize,
    config: MetricsConfig,
) -> Result<IterationMetrics> {
    let totals = catalog.hierarchy().unique_counts();
    let mut satisfaction_values = Vec::with_capacity(user_ids.len());
    let mut per_level: Vec<(Vec<f64>, Vec<f64>, Vec<usize>)> =
        (0..LEVELS).map(|_| Default::default()).collect();

    for (u, entries) in log.by_user.iter().enumerate() {
        let current: Vec<FeedbackRecord> = entries
            .iter()
            .filter(|(it, _, _)| *it == iteration)
            .map(|(_, _, r)| (*r).clone())
            .collect();
        let s = satisfaction(&current).map_err(|_| {
            Error::CorruptLog(format!(
                "no records for {} in iteration {iteration}",
                user_ids[u]
            ))
        })?;
        satisfaction_values.push(s);

        let watched: Vec<usize> = entries
            .iter()
            .filter(|(it, _, r)| {
                in_window(config.window, *it, iteration) && counted(config.watched, r)
            })
            .map(|&(_, item, _)| item)
            .collect();
        for (l, (cov, ent, distinct)) in per_level.iter_mut().enumerate() {
            let counts: CategoryCounts = watched
                .iter()
                .map(|&i| catalog.item(i).category(l + 1))
                .collect();
            cov.push(coverage(counts.distinct(), totals[l])?);
            ent.push(entropy(&counts));
            distinct.push(counts.distinct());
        }
    }

    let mut levels = Vec::with_capacity(LEVELS);
    for (coverage, entropy, distinct) in per_level {
        let bubble = bubble_status(&distinct);
        let bubble_proportion = bubble_proportion(&bubble)?;
        levels.push(LevelMetrics {
            coverage,
            entropy,
            distinct,
            bubble,
            bubble_proportion,
        });
    }
    Ok(IterationMetrics {
        iteration,
        user_ids: user_ids.to_vec(),
        satisfaction: satisfaction_values,
        levels: levels.try_into().expect("one entry per level"),
    })
}

/// Metrics for iterations `0..n_iterations` of a run log.
pub fn compute_metrics(
    user_ids: &[String],
    catalog: &Catalog,
    records: &[FeedbackRecord],
    n_iterations: usize,
    config: MetricsConfig,
) -> Result<Vec<IterationMetrics>> {
    if user_ids.is_empty() {
        return Err(Error::InvalidMetricInput("no users".into()));
    }
    let log = IndexedLog::new(user_ids, catalog, records)?;
    (0..n_iterations)
        .map(|i| iteration_metrics(&log, user_ids, catalog, i, config))
        .collect()
}

/// Metrics of a single iteration, from the records logged so far.
pub fn compute_iteration(
    user_ids: &[String],
    catalog: &Catalog,
    records: &[FeedbackRecord],
    iteration: usize,
    config: MetricsConfig,
) -> Result<IterationMetrics> {
    let log = IndexedLog::new(user_ids, catalog, records)?;
    iteration_metrics(&log, user_ids, catalog, iteration, config)
}

/// Per-user diversity over every record in the log, for demographic ECDFs.
pub fn whole_run_values(
    user_ids: &[String],
    catalog: &Catalog,
    records: &[FeedbackRecord],
    level: usize,
    kind: ValueKind,
    watched: WatchedMode,
) -> Result<Vec<f64>> {
    if !(1..=LEVELS).contains(&level) {
        return Err(Error::InvalidConfig(format!(
            "level {level} outside 1..={LEVELS}"
        )));
    }
    let log = IndexedLog::new(user_ids, catalog, records)?;
    let total = catalog.hierarchy().unique_counts()[level - 1];
    log.by_user
        .iter()
        .map(|entries| {
            let counts: CategoryCounts = entries
                .iter()
                .filter(|(_, _, r)| counted(watched, r))
                .map(|&(_, i, _)| catalog.item(i).category(level))
                .collect();
            match kind {
                ValueKind::Entropy => Ok(entropy(&counts)),
                ValueKind::Coverage => coverage(counts.distinct(), total),
            }
        })
        .collect()
}

#[derive(Serialize)]
struct MetricsRow<'a> {
    iteration: usize,
    user_id: &'a str,
    level: usize,
    coverage: f64,
    entropy: f64,
    satisfaction: f64,
    bubble_status: BubbleStatus,
}

#[derive(Serialize)]
struct SummaryRow {
    iteration: usize,
    level: usize,
    mean_coverage: f64,
    mean_entropy: f64,
    mean_satisfaction: f64,
    bubble_proportion: f64,
}

/// Per-user rows: `iteration,user_id,level,coverage,entropy,satisfaction,bubble_status`.
pub fn write_metrics_csv<W: Write>(metrics: &[IterationMetrics], writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for m in metrics {
        for (u, user_id) in m.user_ids.iter().enumerate() {
            for (l, level) in m.levels.iter().enumerate() {
                csv.serialize(MetricsRow {
                    iteration: m.iteration,
                    user_id,
                    level: l + 1,
                    coverage: level.coverage[u],
                    entropy: level.entropy[u],
                    satisfaction: m.satisfaction[u],
                    bubble_status: level.bubble[u],
                })?;
            }
        }
    }
    csv.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Per-level rows: `iteration,level,mean_coverage,mean_entropy,mean_satisfaction,bubble_proportion`.
pub fn write_summary_csv<W: Write>(metrics: &[IterationMetrics], writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for m in metrics {
        for (l, level) in m.levels.iter().enumerate() {
            csv.serialize(SummaryRow {
                iteration: m.iteration,
                level: l + 1,
                mean_coverage: level.mean_coverage(),
                mean_entropy: level.mean_entropy(),
                mean_satisfaction: m.mean_satisfaction(),
                bubble_proportion: level.bubble_proportion,
            })?;
        }
    }
    csv.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Serialize)]
struct EcdfRow<'a> {
    feature: &'a str,
    group: &'a str,
    value: f64,
    fraction: f64,
}

/// Rows `feature,group,value,fraction`, one per ECDF step.
pub fn write_ecdf_csv<W: Write>(
    feature: DemographicFeature,
    curves: &[(String, Vec<EcdfPoint>)],
    writer: W,
) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for (group, points) in curves {
        for p in points {
            csv.serialize(EcdfRow {
                feature: feature.name(),
                group,
                value: p.value,
                fraction: p.fraction,
            })?;
        }
    }
    csv.flush().map_err(csv::Error::from)?;
    Ok(())
}
