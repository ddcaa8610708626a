//! The closed recommendation loop: cold-start slates, agent feedback,
//! feedback-weighted retraining and model-driven recommendations, with a
//! complete log of everything shown and answered.

use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{
    AgentHistory, ChatEndpoint, Decision, DecisionRequest, FeedbackAgent, FeedbackRecord,
    HistoryEntry, LlmAgent, LlmConfig, RuleAgent, TranscriptAgent, TranscriptEntry,
    DEFAULT_HISTORY_WINDOW,
};
use crate::catalog::{summarize_item, Catalog, LEVELS};
use crate::error::{Error, Result};
use crate::metrics::{compute_iteration, IterationMetrics, MetricsConfig};
use crate::personas::{generate_profiles, render_profile, MotivationKind, UserProfile};
use crate::recommender::{
    cold_start_slate, feedback_to_sample, recommend, train, Checkpoint, Cscmr, FeatureField,
    FeatureVocabulary, FmModel, LabelMode, MfModel, PairScorer, TrainConfig, TrainSample,
    WeightStrategy,
};

mod rundir;
mod sweep;

pub use rundir::{
    audit_log, finish_run_dir, load_run_dir, mark_failed, prepare_run_dir, run_to_dir,
    write_run_dir, LoadedRun, SENTINEL,
};
pub use sweep::{run_sweep, SweepAxis, SweepReport, SweepRun};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Mf,
    Fm,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Mf => "mf",
            ModelKind::Fm => "fm",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mf" => Ok(ModelKind::Mf),
            "fm" => Ok(ModelKind::Fm),
            _ => Err(Error::InvalidConfig(format!("unknown model kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Rule,
    Llm,
    /// Offline replay of a recorded LLM transcript.
    Transcript,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Rule => "rule",
            Backend::Llm => "llm",
            Backend::Transcript => "transcript",
        })
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rule" => Ok(Backend::Rule),
            "llm" => Ok(Backend::Llm),
            "transcript" => Ok(Backend::Transcript),
            _ => Err(Error::InvalidConfig(format!("unknown agent backend {s:?}"))),
        }
    }
}

/// Which feedback the model is retrained on after each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleWindow {
    /// Everything logged so far.
    #[default]
    Cumulative,
    /// The iteration just finished.
    Latest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_users: usize,
    pub items_per_iteration: usize,
    pub n_iterations: usize,
    pub model: ModelKind,
    pub strategy: WeightStrategy,
    pub label_mode: LabelMode,
    pub cscmr: Cscmr,
    pub motivation: MotivationKind,
    pub backend: Backend,
    /// Recorded transcript to replay when `backend` is `transcript`.
    pub transcript: Option<PathBuf>,
    pub seed: u64,
    pub training: TrainConfig,
    pub sample_window: SampleWindow,
    pub metrics: MetricsConfig,
    pub history_window: usize,
    pub llm: LlmConfig,
    pub save_checkpoints: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n_users: 20,
            items_per_iteration: 5,
            n_iterations: 20,
            model: ModelKind::Mf,
            strategy: WeightStrategy::Default,
            label_mode: LabelMode::LabelFlip,
            cscmr: Cscmr::default(),
            motivation: MotivationKind::Gratification,
            backend: Backend::Rule,
            transcript: None,
            seed: 42,
            training: TrainConfig::default(),
            sample_window: SampleWindow::Cumulative,
            metrics: MetricsConfig::default(),
            history_window: DEFAULT_HISTORY_WINDOW,
            llm: LlmConfig::default(),
            save_checkpoints: false,
        }
    }
}

impl SimulationConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: SimulationConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_users == 0 {
            return fail("n_users must be positive");
        }
        if self.items_per_iteration == 0 {
            return fail("items_per_iteration must be positive");
        }
        if self.n_iterations == 0 {
            return fail("n_iterations must be positive");
        }
        if self.training.dim == 0 {
            return fail("training.dim must be positive");
        }
        if !(self.training.lr.is_finite() && self.training.lr >= 0.0) {
            return fail("training.lr must be finite and non-negative");
        }
        if !(self.training.reg.is_finite() && self.training.reg >= 0.0) {
            return fail("training.reg must be finite and non-negative");
        }
        if !(self.training.init_std.is_finite() && self.training.init_std >= 0.0) {
            return fail("training.init_std must be finite and non-negative");
        }
        if self.backend == Backend::Transcript && self.transcript.is_none() {
            return fail("the transcript backend needs a transcript path");
        }
        if self.backend == Backend::Llm
            && (self.llm.max_attempts == 0 || self.llm.max_in_flight == 0)
        {
            return fail("llm.max_attempts and llm.max_in_flight must be positive");
        }
        Ok(())
    }
}

/// Items shown to one user in one iteration, in presentation order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slate {
    pub iteration: usize,
    pub user_id: String,
    pub items: Vec<String>,
}

/// Compact per-iteration view used for progress output and sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationSummary {
    pub iteration: usize,
    pub mean_coverage: [f64; LEVELS],
    pub mean_entropy: [f64; LEVELS],
    pub mean_satisfaction: f64,
    pub bubble_proportion: [f64; LEVELS],
}

impl From<&IterationMetrics> for IterationSummary {
    fn from(m: &IterationMetrics) -> Self {
        IterationSummary {
            iteration: m.iteration,
            mean_coverage: std::array::from_fn(|l| m.levels[l].mean_coverage()),
            mean_entropy: std::array::from_fn(|l| m.levels[l].mean_entropy()),
            mean_satisfaction: m.mean_satisfaction(),
            bubble_proportion: std::array::from_fn(|l| m.levels[l].bubble_proportion),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunLog {
    pub config: SimulationConfig,
    pub profiles: Vec<UserProfile>,
    pub records: Vec<FeedbackRecord>,
    pub slates: Vec<Slate>,
    pub metrics: Vec<IterationMetrics>,
    /// `(iteration, model after training on it)`, when checkpoints are kept.
    pub checkpoints: Vec<(usize, Checkpoint)>,
    /// Every LLM attempt, for the LLM backend.
    pub transcript: Vec<TranscriptEntry>,
}

impl RunLog {
    pub fn summaries(&self) -> Vec<IterationSummary> {
        self.metrics.iter().map(IterationSummary::from).collect()
    }

    pub fn user_ids(&self) -> Vec<String> {
        self.profiles.iter().map(|p| p.user_id.clone()).collect()
    }
}

const STREAM_PROFILES: u64 = 1;
const STREAM_MODEL_INIT: u64 = 2;
const STREAM_TRAINING: u64 = 3;
const STREAM_USERS: u64 = 4;

/// Independent seed for one purpose and index, via the splitmix64 finalizer.
fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED69));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One-hot FM encoding of users and items.
#[derive(Debug, Clone)]
struct FmEncoder {
    user_features: Vec<Vec<usize>>,
    item_features: Vec<Vec<usize>>,
}

fn fm_vocabulary(profiles: &[UserProfile], catalog: &Catalog) -> FeatureVocabulary {
    let mut fields = vec![
        FeatureField::new("user", profiles.iter().map(|p| p.user_id.clone()).collect()),
        FeatureField::new(
            "item",
            catalog.items().iter().map(|i| i.item_id.clone()).collect(),
        ),
        FeatureField::new("gender", vec!["female".into(), "male".into()]),
        FeatureField::new("city_level", (1..=4).map(|c| c.to_string()).collect()),
        FeatureField::new(
            "phone_price",
            crate::personas::PhonePrice::ALL
                .iter()
                .map(|p| p.label().to_string())
                .collect(),
        ),
    ];
    for level in 1..=LEVELS {
        fields.push(FeatureField::new(
            format!("category_l{level}"),
            catalog.hierarchy().names(level).iter().cloned().collect(),
        ));
    }
    FeatureVocabulary::new(fields)
}

impl FmEncoder {
    fn new(vocabulary: &FeatureVocabulary, profiles: &[UserProfile], catalog: &Catalog) -> Self {
        let lookup = |field: &str, value: &str| {
            vocabulary
                .index_of(field, value)
                .unwrap_or_else(|| panic!("{field} value {value:?} missing from vocabulary"))
        };
        let user_features = profiles
            .iter()
            .map(|p| {
                vec![
                    lookup("user", &p.user_id),
                    lookup("gender", p.gender.as_str()),
                    lookup("city_level", &p.city_level.to_string()),
                    lookup("phone_price", p.phone_price.label()),
                ]
            })
            .collect();
        let item_features = catalog
            .items()
            .iter()
            .map(|item| {
                let mut f = vec![lookup("item", &item.item_id)];
                for level in 1..=LEVELS {
                    f.push(lookup(&format!("category_l{level}"), item.category(level)));
                }
                f
            })
            .collect();
        FmEncoder {
            user_features,
            item_features,
        }
    }

    fn features(&self, user: usize, item: usize) -> Vec<usize> {
        let mut f = self.user_features[user].clone();
        f.extend_from_slice(&self.item_features[item]);
        f
    }
}

struct FmScorer<'a> {
    model: &'a FmModel,
    encoder: &'a FmEncoder,
}

impl PairScorer for FmScorer<'_> {
    fn score(&self, user: usize, item: usize) -> Result<f64> {
        self.model
            .logit_features(&self.encoder.features(user, item))
    }
}

enum Model {
    Mf(MfModel),
    Fm { model: FmModel, encoder: FmEncoder },
}

impl Model {
    fn new(config: &SimulationConfig, profiles: &[UserProfile], catalog: &Catalog) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, STREAM_MODEL_INIT, 0));
        let t = &config.training;
        match config.model {
            ModelKind::Mf => Model::Mf(MfModel::new(
                profiles.len(),
                catalog.len(),
                t.dim,
                t.init_std,
                &mut rng,
            )),
            ModelKind::Fm => {
                let vocabulary = fm_vocabulary(profiles, catalog);
                let encoder = FmEncoder::new(&vocabulary, profiles, catalog);
                Model::Fm {
                    model: FmModel::new(vocabulary, t.dim, t.init_std, &mut rng),
                    encoder,
                }
            }
        }
    }

    fn recommend(
        &self,
        user: usize,
        k: usize,
        exclusions: &HashSet<usize>,
        catalog: &Catalog,
    ) -> Result<Vec<usize>> {
        match self {
            Model::Mf(m) => recommend(m, user, k, exclusions, catalog),
            Model::Fm { model, encoder } => {
                recommend(&FmScorer { model, encoder }, user, k, exclusions, catalog)
            }
        }
    }

    fn train(
        &mut self,
        mut samples: Vec<TrainSample>,
        config: &TrainConfig,
        seed: u64,
    ) -> Result<()> {
        match self {
            Model::Mf(m) => train(m, &samples, config, seed).map(|_| ()),
            Model::Fm { model, encoder } => {
                for s in &mut samples {
                    s.features = encoder.features(s.user, s.item);
                }
                train(model, &samples, config, seed).map(|_| ())
            }
        }
    }

    fn checkpoint(&self) -> Checkpoint {
        match self {
            Model::Mf(m) => Checkpoint::Mf(m.clone()),
            Model::Fm { model, .. } => Checkpoint::Fm(model.clone()),
        }
    }
}

/// The agent a config asks for.
pub enum ConfiguredAgent {
    Rule(RuleAgent),
    Llm(LlmAgent),
    Transcript(TranscriptAgent),
}

impl ConfiguredAgent {
    pub fn from_config(config: &SimulationConfig) -> Result<Self> {
        Ok(match config.backend {
            Backend::Rule => ConfiguredAgent::Rule(RuleAgent),
            Backend::Llm => ConfiguredAgent::Llm(LlmAgent::new(
                ChatEndpoint::from_config(&config.llm),
                config.llm.max_attempts,
            )),
            Backend::Transcript => {
                let path = config
                    .transcript
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("missing transcript path".into()))?;
                ConfiguredAgent::Transcript(TranscriptAgent::load(path)?)
            }
        })
    }

    fn take_transcript(&self) -> Vec<TranscriptEntry> {
        match self {
            ConfiguredAgent::Llm(agent) => agent.take_transcript(),
            _ => Vec::new(),
        }
    }
}

impl FeedbackAgent for ConfiguredAgent {
    fn decide(&self, request: &DecisionRequest<'_>, rng: &mut ChaCha8Rng) -> Result<Decision> {
        match self {
            ConfiguredAgent::Rule(a) => a.decide(request, rng),
            ConfiguredAgent::Llm(a) => a.decide(request, rng),
            ConfiguredAgent::Transcript(a) => a.decide(request, rng),
        }
    }
}

struct UserState {
    rng: ChaCha8Rng,
    history: AgentHistory,
    shown: HashSet<usize>,
    profile_text: String,
}

/// Runs the loop with the agent named in the config.
pub fn run(
    config: &SimulationConfig,
    catalog: &Catalog,
    progress: &mut dyn FnMut(&IterationMetrics),
) -> Result<RunLog> {
    config.validate()?;
    let agent = ConfiguredAgent::from_config(config)?;
    let threads = match config.backend {
        Backend::Llm => config.llm.max_in_flight,
        _ => 0,
    };
    let mut log = run_with_agent(config, catalog, &agent, threads, progress)?;
    log.transcript = agent.take_transcript();
    Ok(log)
}

/// Runs the loop with any agent. `threads` bounds how many users are served
/// concurrently; 0 uses one thread per core.
pub fn run_with_agent(
    config: &SimulationConfig,
    catalog: &Catalog,
    agent: &dyn FeedbackAgent,
    threads: usize,
    progress: &mut dyn FnMut(&IterationMetrics),
) -> Result<RunLog> {
    config.validate()?;
    let k = config.items_per_iteration;
    let needed = k * config.n_iterations;
    if catalog.len() < needed {
        return Err(Error::InsufficientCandidates {
            required: needed,
            available: catalog.len(),
        });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;

    let profiles = generate_profiles(
        config.n_users,
        derive_seed(config.seed, STREAM_PROFILES, 0),
        config.motivation,
        catalog,
    )?;
    let user_ids: Vec<String> = profiles.iter().map(|p| p.user_id.clone()).collect();
    let summaries: Vec<String> = catalog.items().iter().map(summarize_item).collect();
    let mut states: Vec<UserState> = profiles
        .iter()
        .enumerate()
        .map(|(u, p)| UserState {
            rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, STREAM_USERS, u as u64)),
            history: AgentHistory::new(config.history_window),
            shown: HashSet::new(),
            profile_text: render_profile(p),
        })
        .collect();
    let mut model = Model::new(config, &profiles, catalog);

    let mut log = RunLog {
        config: config.clone(),
        profiles: profiles.clone(),
        records: Vec::new(),
        slates: Vec::new(),
        metrics: Vec::new(),
        checkpoints: Vec::new(),
        transcript: Vec::new(),
    };

    for iteration in 0..config.n_iterations {
        let model_ref = &model;
        let outcomes: Vec<Result<(Vec<usize>, Vec<FeedbackRecord>)>> = pool.install(|| {
            states
                .par_iter_mut()
                .enumerate()
                .map(|(u, state)| {
                    let profile = &profiles[u];
                    let slate = if iteration == 0 {
                        cold_start_slate(profile, catalog, config.cscmr, k, &mut state.rng)?
                    } else {
                        model_ref.recommend(u, k, &state.shown, catalog)?
                    };
                    let mut records = Vec::with_capacity(k);
                    for &i in &slate {
                        let item = catalog.item(i);
                        let request = DecisionRequest {
                            profile,
                            profile_text: &state.profile_text,
                            history: &state.history,
                            item,
                            item_summary: &summaries[i],
                            iteration,
                        };
                        let decision = agent.decide(&request, &mut state.rng)?;
                        state.history.push(HistoryEntry::new(
                            item,
                            summaries[i].clone(),
                            decision.feedback,
                        ));
                        state.shown.insert(i);
                        records.push(FeedbackRecord {
                            user_id: profile.user_id.clone(),
                            item_id: item.item_id.clone(),
                            iteration,
                            feedback: decision.feedback,
                            explanation: decision.explanation,
                        });
                    }
                    Ok((slate, records))
                })
                .collect()
        });

        for (u, outcome) in outcomes.into_iter().enumerate() {
            let (slate, records) = outcome?;
            log.slates.push(Slate {
                iteration,
                user_id: user_ids[u].clone(),
                items: slate
                    .iter()
                    .map(|&i| catalog.item(i).item_id.clone())
                    .collect(),
            });
            log.records.extend(records);
        }

        let metrics =
            compute_iteration(&user_ids, catalog, &log.records, iteration, config.metrics)?;
        progress(&metrics);
        log.metrics.push(metrics);

        let samples = training_samples(config, catalog, &user_ids, &log.records, iteration)?;
        if samples.is_empty() {
            log::info!("iteration {iteration}: no weighted feedback, model unchanged");
        } else {
            let seed = derive_seed(config.seed, STREAM_TRAINING, iteration as u64);
            model.train(samples, &config.training, seed)?;
        }
        if config.save_checkpoints {
            log.checkpoints.push((iteration, model.checkpoint()));
        }
    }
    Ok(log)
}

fn training_samples(
    config: &SimulationConfig,
    catalog: &Catalog,
    user_ids: &[String],
    records: &[FeedbackRecord],
    iteration: usize,
) -> Result<Vec<TrainSample>> {
    let weights = config.strategy.weights();
    let mut samples = Vec::new();
    for r in records {
        if config.sample_window == SampleWindow::Latest && r.iteration != iteration {
            continue;
        }
        let user = user_ids
            .iter()
            .position(|u| *u == r.user_id)
            .ok_or_else(|| Error::CorruptLog(format!("unknown user {}", r.user_id)))?;
        let item = catalog
            .index_of(&r.item_id)
            .ok_or_else(|| Error::CorruptLog(format!("unknown item {}", r.item_id)))?;
        if let Some(s) = feedback_to_sample(r.feedback, user, item, &weights, config.label_mode) {
            samples.push(s);
        }
    }
    Ok(samples)
}
