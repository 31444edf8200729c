mod common;

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use triage_core::corpus::{derive_article_label, synthetic_dataset, ArticleLabel, Dataset, PostLabel, SyntheticConfig};
use triage_core::features::FeatureConfig;
use triage_core::models::{ModelKind, TrainConfig};
use triage_core::pipeline::{fit_feature_space, training_set};
use triage_service::{default_trainer, RetrainRequest, Service, ServiceConfig, Trainer, VerdictRequest};

/// Verdicts that pass validation: a suspicious verdict always leaves an SCP.
fn random_verdicts(ds: &Dataset, n: usize, rng: &mut ChaCha8Rng) -> Vec<VerdictRequest> {
    let labels: HashMap<&str, Option<PostLabel>> = ds.posts.iter().map(|p| (p.id.as_str(), p.label)).collect();
    let mut articles: Vec<_> = ds.articles.iter().collect();
    articles.shuffle(rng);
    articles
        .into_iter()
        .take(n)
        .map(|a| {
            let suspicious = rng.random_bool(0.5);
            let mut corrections = BTreeMap::new();
            for id in &a.post_ids {
                if rng.random_bool(0.5) {
                    let scp = suspicious && rng.random_bool(0.5);
                    corrections.insert(id.clone(), PostLabel::from_positive(scp));
                }
            }
            if suspicious {
                let has_scp = a.post_ids.iter().any(|id| {
                    corrections.get(id).copied().or(labels[id.as_str()]).is_some_and(|l| l.is_positive())
                });
                if !has_scp {
                    corrections.insert(a.post_ids.choose(rng).unwrap().clone(), PostLabel::Scp);
                }
            }
            VerdictRequest {
                article_url: a.url.clone(),
                article_label: ArticleLabel::from_positive(suspicious),
                post_labels: corrections,
                reviewer: format!("r{}", rng.random_range(0..5)),
                timestamp: Some(chrono::DateTime::from_timestamp(1_700_000_000 + rng.random_range(0..1_000_000), 0).unwrap()),
            }
        })
        .collect()
}

/// Independent statement of the feedback policy, post by post.
fn expected_label(base: Option<PostLabel>, post: &str, v: &VerdictRequest) -> Option<PostLabel> {
    match v.article_label {
        ArticleLabel::NotSuspicious => Some(PostLabel::NotScp),
        ArticleLabel::Suspicious => v.post_labels.get(post).copied().or(base),
    }
}

#[test]
fn retrain_sees_exactly_the_corrected_labels() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("feedback.jsonl");
    let base = synthetic_dataset(&SyntheticConfig {
        posts: 400,
        seed: 3,
        ..Default::default()
    });
    let seen: Arc<Mutex<Vec<Dataset>>> = Arc::default();
    let inner = default_trainer(FeatureConfig::default());
    let spy: Trainer = {
        let seen = seen.clone();
        Arc::new(move |ds, cfg| {
            seen.lock().unwrap().push(ds.clone());
            inner(ds, cfg)
        })
    };
    let cfg = ServiceConfig::new(&log, TrainConfig::new(ModelKind::Lr, 42));
    let service = Service::open_with_trainer(base.clone(), None, cfg, spy).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let verdicts = random_verdicts(&base, 40, &mut rng);
    for v in &verdicts {
        service.submit_verdict(v.clone()).unwrap();
    }
    service.retrain(&RetrainRequest::default()).unwrap();
    let trained_on = seen.lock().unwrap().last().unwrap().clone();
    assert_eq!(trained_on, service.training_dataset());

    // Dataset diff: a post's training label changes iff the policy says so.
    let space = fit_feature_space::<f64>(&base, ModelKind::Lr, &FeatureConfig::default()).unwrap();
    let before = training_set(&base, &space);
    let after = training_set(&trained_on, &space);
    let before: HashMap<&str, bool> = before.post_ids.iter().map(String::as_str).zip(before.labels).collect();
    let after: HashMap<&str, bool> = after.post_ids.iter().map(String::as_str).zip(after.labels).collect();
    let by_article: HashMap<&str, &VerdictRequest> = verdicts.iter().map(|v| (v.article_url.as_str(), v)).collect();
    let mut flipped = 0;
    for p in base.posts.iter().filter(|p| !p.is_empty_after_preprocess()) {
        let want = match by_article.get(p.article_url.as_str()) {
            Some(v) => expected_label(p.label, &p.id, v),
            None => p.label,
        };
        assert_eq!(after.get(p.id.as_str()).copied(), want.map(|l| l.is_positive()), "post {}", p.id);
        if before.get(p.id.as_str()) != after.get(p.id.as_str()) {
            flipped += 1;
        }
    }
    assert!(flipped > 0, "the random verdicts should flip something");

    for v in &verdicts {
        let a = trained_on.articles.iter().find(|a| a.url == v.article_url).unwrap();
        assert_eq!(derive_article_label(a, &trained_on.posts).unwrap(), v.article_label);
    }
}
