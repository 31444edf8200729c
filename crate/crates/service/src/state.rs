use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use serde::{Deserialize, Serialize};

use triage_core::corpus::{keyword_spans, normalize_url, ArticleLabel, Dataset, KeywordList, PostLabel};
use triage_core::eval::{evaluate_dataset, ClassificationReport};
use triage_core::features::FeatureConfig;
use triage_core::models::{ModelKind, TrainConfig};
use triage_core::pipeline::{build_queue, fit_feature_space, train_on_dataset, PipelineError};
use triage_core::{ModelBundle, RankedQueue, ScoredPost};

use crate::log::FeedbackLog;
use crate::verdict::{apply_feedback, validate_verdict, ArticleStatus, Verdict, VerdictRequest};
use crate::ServiceError;

pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 500;
const EXCERPT_CHARS: usize = 80;
const VERSION_CHARS: usize = 12;

/// Turns a (feedback-corrected) dataset into a model. Swappable so tests can
/// inject failures or observe what the model was trained on.
pub type Trainer = Arc<dyn Fn(&Dataset, &TrainConfig) -> Result<ModelBundle, PipelineError> + Send + Sync>;

/// Fits the feature space on the dataset's comments, then the model on its
/// labelled posts.
pub fn default_trainer(features: FeatureConfig) -> Trainer {
    Arc::new(move |ds: &Dataset, cfg: &TrainConfig| {
        let space = fit_feature_space(ds, cfg.kind, &features)?;
        let model = train_on_dataset(ds, &space, cfg)?;
        Ok(ModelBundle {
            model,
            space,
            config: cfg.clone(),
        })
    })
}

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub feedback_log: PathBuf,
    pub train: TrainConfig,
    pub features: FeatureConfig,
    pub keywords: KeywordList,
}

impl ServiceConfig {
    pub fn new(feedback_log: impl Into<PathBuf>, train: TrainConfig) -> Self {
        ServiceConfig {
            feedback_log: feedback_log.into(),
            train,
            features: FeatureConfig::default(),
            keywords: KeywordList::default(),
        }
    }
}

/// Cross-validation summary for one model version.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub version: String,
    pub model: ModelKind,
    pub seed: u64,
    pub k: usize,
    pub folds: Vec<ClassificationReport>,
    pub aggregate: ClassificationReport,
    pub article: ClassificationReport,
}

/// Immutable view of the queue under one model version.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub version: String,
    pub bundle: Arc<ModelBundle>,
    pub queue: Arc<RankedQueue>,
    pub scored: Arc<HashMap<String, ScoredPost>>,
    /// Queue position of every url.
    pub positions: Arc<HashMap<String, usize>>,
    pub statuses: BTreeMap<String, ArticleStatus>,
    pub verdicts: BTreeMap<String, Verdict>,
    pub metrics: Option<Arc<MetricsSummary>>,
}

/// What replaying the feedback log must reproduce.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QueueState {
    pub version: String,
    pub queue: RankedQueue,
    pub statuses: BTreeMap<String, ArticleStatus>,
    pub verdicts: BTreeMap<String, Verdict>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatusFilter {
    #[default]
    Pending,
    Reviewed,
    All,
}

impl FromStr for StatusFilter {
    type Err = ServiceError;

    fn from_str(s: &str) -> Result<Self, ServiceError> {
        match s {
            "pending" => Ok(StatusFilter::Pending),
            "reviewed" => Ok(StatusFilter::Reviewed),
            "all" => Ok(StatusFilter::All),
            other => Err(ServiceError::InvalidRequest(format!(
                "status must be pending, reviewed or all, got {other:?}"
            ))),
        }
    }
}

impl StatusFilter {
    fn admits(self, status: ArticleStatus) -> bool {
        match self {
            StatusFilter::Pending => status == ArticleStatus::Pending,
            StatusFilter::Reviewed => status == ArticleStatus::Reviewed,
            StatusFilter::All => true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Excerpt {
    pub post_id: String,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArticleSummary {
    /// 1-based position in the full queue.
    pub rank: usize,
    pub url: String,
    pub title: Option<String>,
    pub score: f64,
    pub post_count: usize,
    pub predicted: ArticleLabel,
    pub status: ArticleStatus,
    pub contributor: Excerpt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueuePage {
    pub version: String,
    pub status: StatusFilter,
    pub page: usize,
    pub size: usize,
    pub total: usize,
    pub items: Vec<ArticleSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostDetail {
    pub post_id: String,
    pub comment: String,
    pub probability: f64,
    pub empty: bool,
    pub label: Option<PostLabel>,
    /// Half-open character offsets of keyword hits in `comment`.
    pub keyword_hits: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArticleDetail {
    pub version: String,
    pub rank: usize,
    pub url: String,
    pub title: Option<String>,
    pub score: f64,
    pub predicted: ArticleLabel,
    pub status: ArticleStatus,
    pub contributor: String,
    pub verdict: Option<Verdict>,
    pub posts: Vec<PostDetail>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubmitAck {
    pub article_url: String,
    pub status: ArticleStatus,
    pub log_records: usize,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrainRequest {
    #[serde(default)]
    pub model: Option<ModelKind>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Also cross-validate the new model for `/api/metrics`.
    #[serde(default)]
    pub evaluate: bool,
    #[serde(default)]
    pub folds: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrainOutcome {
    pub version: String,
    pub previous_version: String,
    pub model: ModelKind,
    pub seed: u64,
    pub feedback_records: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsView {
    pub version: String,
    pub model: ModelKind,
    pub seed: u64,
    pub articles: usize,
    pub pending: usize,
    pub reviewed: usize,
    pub feedback_records: usize,
    /// Latest cross-validation run; its own `version` says which model it
    /// describes.
    pub cv: Option<MetricsSummary>,
}

pub struct Service {
    base: Arc<Dataset>,
    post_index: HashMap<String, usize>,
    article_index: HashMap<String, usize>,
    keywords: KeywordList,
    trainer: Trainer,
    snapshot: RwLock<Arc<Snapshot>>,
    writer: Mutex<FeedbackLog>,
    retraining: Mutex<()>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

fn version_of(bundle: &ModelBundle) -> String {
    bundle.fingerprint()[..VERSION_CHARS].to_string()
}

impl Service {
    /// Opens the feedback log, replays it over `base`, and builds the queue
    /// with `initial` — or, when absent, with a model trained on `base` alone.
    /// Feedback only reaches the model through [`Service::retrain`].
    pub fn open(base: Dataset, initial: Option<ModelBundle>, cfg: ServiceConfig) -> Result<Self, ServiceError> {
        let trainer = default_trainer(cfg.features.clone());
        Self::open_with_trainer(base, initial, cfg, trainer)
    }

    pub fn open_with_trainer(
        base: Dataset,
        initial: Option<ModelBundle>,
        cfg: ServiceConfig,
        trainer: Trainer,
    ) -> Result<Self, ServiceError> {
        let (log, records) = FeedbackLog::open(&cfg.feedback_log)?;
        let post_index = base.posts.iter().enumerate().map(|(i, p)| (p.id.clone(), i)).collect();
        let article_index: HashMap<String, usize> =
            base.articles.iter().enumerate().map(|(i, a)| (a.url.clone(), i)).collect();
        let verdicts = replay(&base, &article_index, &records)?;
        let bundle = match initial {
            Some(b) => b,
            None => trainer(&base, &cfg.train)?,
        };
        let mut snap = scored_snapshot(&base, bundle)?;
        for url in verdicts.keys() {
            snap.statuses.insert(url.clone(), ArticleStatus::Reviewed);
        }
        snap.verdicts = verdicts;
        log::info!(
            "queue ready: {} articles, {} reviewed, model {}",
            snap.queue.len(),
            snap.verdicts.len(),
            snap.version
        );
        Ok(Service {
            base: Arc::new(base),
            post_index,
            article_index,
            keywords: cfg.keywords,
            trainer,
            snapshot: RwLock::new(Arc::new(snap)),
            writer: Mutex::new(log),
            retraining: Mutex::new(()),
        })
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn swap(&self, next: Snapshot) {
        *self.snapshot.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(next);
    }

    pub fn base(&self) -> &Dataset {
        &self.base
    }

    pub fn queue_state(&self) -> QueueState {
        let snap = self.snapshot();
        QueueState {
            version: snap.version.clone(),
            queue: (*snap.queue).clone(),
            statuses: snap.statuses.clone(),
            verdicts: snap.verdicts.clone(),
        }
    }

    /// The base dataset with every recorded verdict applied — what the next
    /// retrain trains on.
    pub fn training_dataset(&self) -> Dataset {
        apply_feedback(&self.base, self.snapshot().verdicts.values())
    }

    pub fn feedback_records(&self) -> usize {
        lock(&self.writer).len()
    }

    fn summary(&self, snap: &Snapshot, pos: usize, status: ArticleStatus) -> ArticleSummary {
        let a = &snap.queue.as_slice()[pos];
        let text = self
            .post_index
            .get(&a.contributor)
            .map(|&i| self.base.posts[i].comment().chars().take(EXCERPT_CHARS).collect())
            .unwrap_or_default();
        ArticleSummary {
            rank: pos + 1,
            url: a.url.clone(),
            title: self.article_title(&a.url),
            score: a.score,
            post_count: a.post_count,
            predicted: a.predicted,
            status,
            contributor: Excerpt {
                post_id: a.contributor.clone(),
                text,
            },
        }
    }

    fn article_title(&self, url: &str) -> Option<String> {
        self.article_index.get(url).and_then(|&i| self.base.articles[i].title.clone())
    }

    /// Queue order filtered by status; `page` is 1-based.
    pub fn list_articles(&self, filter: StatusFilter, page: usize, size: usize) -> Result<QueuePage, ServiceError> {
        if page == 0 {
            return Err(ServiceError::InvalidRequest("page starts at 1".into()));
        }
        if size == 0 || size > MAX_PAGE_SIZE {
            return Err(ServiceError::InvalidRequest(format!("size must be within 1..={MAX_PAGE_SIZE}")));
        }
        let snap = self.snapshot();
        let matching: Vec<(usize, ArticleStatus)> = snap
            .queue
            .iter()
            .enumerate()
            .map(|(i, a)| (i, snap.statuses.get(&a.url).copied().unwrap_or(ArticleStatus::Pending)))
            .filter(|&(_, s)| filter.admits(s))
            .collect();
        let items = matching
            .iter()
            .skip((page - 1).saturating_mul(size))
            .take(size)
            .map(|&(i, s)| self.summary(&snap, i, s))
            .collect();
        Ok(QueuePage {
            version: snap.version.clone(),
            status: filter,
            page,
            size,
            total: matching.len(),
            items,
        })
    }

    pub fn article_detail(&self, url: &str) -> Result<ArticleDetail, ServiceError> {
        let url = normalize_url(url);
        let snap = self.snapshot();
        let (&pos, &ai) = snap
            .positions
            .get(&url)
            .zip(self.article_index.get(&url))
            .ok_or_else(|| ServiceError::UnknownArticle(url.clone()))?;
        let scored = &snap.queue.as_slice()[pos];
        let article = &self.base.articles[ai];
        let posts = article
            .post_ids
            .iter()
            .filter_map(|id| self.post_index.get(id).map(|&i| &self.base.posts[i]))
            .map(|p| {
                let s = snap.scored.get(&p.id);
                PostDetail {
                    post_id: p.id.clone(),
                    comment: p.comment().to_string(),
                    probability: s.map_or(0.0, |s| s.probability),
                    empty: s.is_none_or(|s| s.empty),
                    label: p.label,
                    keyword_hits: keyword_spans(p.comment(), &self.keywords),
                }
            })
            .collect();
        Ok(ArticleDetail {
            version: snap.version.clone(),
            rank: pos + 1,
            url: url.clone(),
            title: article.title.clone(),
            score: scored.score,
            predicted: scored.predicted,
            status: snap.statuses.get(&url).copied().unwrap_or(ArticleStatus::Pending),
            contributor: scored.contributor.clone(),
            verdict: snap.verdicts.get(&url).cloned(),
            posts,
        })
    }

    /// Validates, appends to the log (synced), then flips the article to
    /// reviewed. Nothing is written when validation fails.
    pub fn submit_verdict(&self, request: VerdictRequest) -> Result<SubmitAck, ServiceError> {
        let verdict = request.into_verdict();
        let mut log = lock(&self.writer);
        let snap = self.snapshot();
        let article = self
            .article_index
            .get(&verdict.article_url)
            .map(|&i| &self.base.articles[i])
            .ok_or_else(|| ServiceError::UnknownArticle(verdict.article_url.clone()))?;
        if snap.verdicts.contains_key(&verdict.article_url) {
            return Err(ServiceError::DuplicateVerdict(verdict.article_url));
        }
        validate_verdict(&verdict, article, &self.base)?;
        log.append(&verdict)?;
        let mut next = (*snap).clone();
        next.statuses.insert(verdict.article_url.clone(), ArticleStatus::Reviewed);
        next.verdicts.insert(verdict.article_url.clone(), verdict.clone());
        self.swap(next);
        Ok(SubmitAck {
            article_url: verdict.article_url,
            status: ArticleStatus::Reviewed,
            log_records: log.len(),
        })
    }

    /// Trains on the base dataset with all feedback applied and rescores the
    /// queue. On any failure the current snapshot stays in place.
    pub fn retrain(&self, request: &RetrainRequest) -> Result<RetrainOutcome, ServiceError> {
        let _one_at_a_time = lock(&self.retraining);
        let snap = self.snapshot();
        let mut cfg = snap.bundle.config.clone();
        cfg.kind = request.model.unwrap_or(cfg.kind);
        cfg.seed = request.seed.unwrap_or(cfg.seed);
        let feedback = snap.verdicts.len();
        let dataset = apply_feedback(&self.base, snap.verdicts.values());
        log::info!("retraining {} (seed {}) with {feedback} verdicts", cfg.kind, cfg.seed);
        let bundle = (self.trainer)(&dataset, &cfg)?;
        let mut next = scored_snapshot(&self.base, bundle)?;
        if request.evaluate {
            let k = request.folds.unwrap_or(5);
            let eval = evaluate_dataset(&dataset, &next.bundle.space, &cfg, k)?;
            next.metrics = Some(Arc::new(MetricsSummary {
                version: next.version.clone(),
                model: cfg.kind,
                seed: cfg.seed,
                k,
                folds: eval.cv.folds,
                aggregate: eval.cv.aggregate,
                article: eval.articles.report,
            }));
        }
        // Verdicts may have landed while training ran; carry the latest ones.
        let _writer = lock(&self.writer);
        let current = self.snapshot();
        for (url, status) in &current.statuses {
            next.statuses.insert(url.clone(), *status);
        }
        next.verdicts = current.verdicts.clone();
        if next.metrics.is_none() {
            next.metrics = current.metrics.clone();
        }
        let outcome = RetrainOutcome {
            version: next.version.clone(),
            previous_version: current.version.clone(),
            model: cfg.kind,
            seed: cfg.seed,
            feedback_records: feedback,
        };
        self.swap(next);
        Ok(outcome)
    }

    pub fn set_metrics(&self, metrics: MetricsSummary) {
        let _writer = lock(&self.writer);
        let mut next = (*self.snapshot()).clone();
        next.metrics = Some(Arc::new(metrics));
        self.swap(next);
    }

    pub fn metrics(&self) -> MetricsView {
        let snap = self.snapshot();
        let reviewed = snap.verdicts.len();
        MetricsView {
            version: snap.version.clone(),
            model: snap.bundle.config.kind,
            seed: snap.bundle.config.seed,
            articles: snap.queue.len(),
            pending: snap.queue.len() - reviewed,
            reviewed,
            feedback_records: self.feedback_records(),
            cv: snap.metrics.as_deref().cloned(),
        }
    }
}

/// Every logged verdict must name a known article, pass validation and be
/// the only verdict for it.
fn replay(
    base: &Dataset,
    article_index: &HashMap<String, usize>,
    records: &[Verdict],
) -> Result<BTreeMap<String, Verdict>, ServiceError> {
    let mut verdicts = BTreeMap::new();
    for (n, v) in records.iter().enumerate() {
        let corrupt = |message: String| ServiceError::CorruptLog { line: n + 1, message };
        let article = article_index
            .get(&v.article_url)
            .map(|&i| &base.articles[i])
            .ok_or_else(|| corrupt(format!("unknown article {}", v.article_url)))?;
        validate_verdict(v, article, base).map_err(|e| corrupt(e.to_string()))?;
        if verdicts.insert(v.article_url.clone(), v.clone()).is_some() {
            return Err(corrupt(format!("second verdict for {}", v.article_url)));
        }
    }
    Ok(verdicts)
}

/// Scores the base posts under `bundle`; every article starts pending.
fn scored_snapshot(base: &Dataset, bundle: ModelBundle) -> Result<Snapshot, ServiceError> {
    let (queue, scored) = build_queue(base, &bundle.space, &bundle.model)?;
    let positions = queue.iter().enumerate().map(|(i, a)| (a.url.clone(), i)).collect();
    let statuses = queue.iter().map(|a| (a.url.clone(), ArticleStatus::Pending)).collect();
    Ok(Snapshot {
        version: version_of(&bundle),
        bundle: Arc::new(bundle),
        queue: Arc::new(queue),
        scored: Arc::new(scored.into_iter().map(|s| (s.post_id.clone(), s)).collect()),
        positions: Arc::new(positions),
        statuses,
        verdicts: BTreeMap::new(),
        metrics: None,
    })
}
