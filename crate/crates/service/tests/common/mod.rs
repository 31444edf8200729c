#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use tower::ServiceExt;

use triage_core::corpus::{Article, Dataset, Post, PostLabel};
use triage_core::features::{Encoded, FeatureConfig, FeatureSpace, TokenizeMode};
use triage_core::models::{LogisticModel, ModelKind, TrainConfig, TrainedModel};
use triage_core::ModelBundle;
use triage_service::{Service, ServiceConfig};

pub struct FixturePost {
    pub id: String,
    pub comment: String,
    pub label: Option<PostLabel>,
}

/// One article per entry, `https://t.example/{name}`, each post's comment
/// given verbatim (already cleaned).
pub fn dataset<S: AsRef<str>>(articles: &[(S, Vec<FixturePost>)]) -> Dataset {
    let mut posts = Vec::new();
    let mut arts = Vec::new();
    for (name, ps) in articles {
        let name = name.as_ref();
        let url = format!("https://t.example/{name}");
        let mut a = Article::new(url.clone());
        a.title = Some(format!("Title {name}"));
        for p in ps {
            let mut post = Post::new(p.id.clone(), url.clone(), p.comment.clone());
            post.comment_text = Some(p.comment.clone());
            post.label = p.label;
            a.post_ids.push(p.id.clone());
            posts.push(post);
        }
        arts.push(a);
    }
    Dataset::new(posts, arts)
}

pub fn post(id: &str, comment: &str, label: Option<PostLabel>) -> FixturePost {
    FixturePost {
        id: id.into(),
        comment: comment.into(),
        label,
    }
}

/// Logistic model whose probability for a single-token comment `tok` is
/// exactly the one given (up to rounding through the logit).
pub fn fixed_model(token_probs: &[(String, f64)]) -> ModelBundle {
    let texts: Vec<&str> = token_probs.iter().map(|(t, _)| t.as_str()).collect();
    let cfg = FeatureConfig {
        tokenizer: TokenizeMode::Whitespace,
        ..FeatureConfig::default()
    };
    let space = FeatureSpace::fit_ngrams(&texts, &cfg);
    let FeatureSpace::NGrams { vocabulary, .. } = &space else { unreachable!() };
    let mut model = LogisticModel::zeros(vocabulary.len());
    for (tok, p) in token_probs {
        let Encoded::Sparse(v) = space.encode(tok) else { unreachable!() };
        assert_eq!(v.nnz(), 1, "{tok} should be one feature");
        model.weights[v.indices()[0]] = (p / (1.0 - p)).ln();
    }
    ModelBundle {
        model: TrainedModel::Logistic(model),
        space,
        config: TrainConfig::new(ModelKind::Lr, 42),
    }
}

/// `n` single-post articles `a000..` whose post `p000..` says `tokNNN`,
/// scored with the given probabilities.
pub fn scored_fixture(probs: &[f64]) -> (Dataset, ModelBundle) {
    let arts: Vec<(String, Vec<FixturePost>)> = probs
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let label = Some(PostLabel::from_positive(i % 3 == 0));
            (format!("a{i:03}"), vec![post(&format!("p{i:03}"), &format!("tok{i:03}"), label)])
        })
        .collect();
    let ds = dataset(&arts);
    let bundle = fixed_model(
        &probs
            .iter()
            .enumerate()
            .map(|(i, &p)| (format!("tok{i:03}"), p))
            .collect::<Vec<_>>(),
    );
    (ds, bundle)
}

pub fn open(ds: Dataset, bundle: ModelBundle, log: &Path) -> Arc<Service> {
    let cfg = ServiceConfig::new(log, TrainConfig::new(ModelKind::Lr, 42));
    Arc::new(Service::open(ds, Some(bundle), cfg).unwrap())
}

pub fn encode_segment(s: &str) -> String {
    s.bytes()
        .map(|b| {
            if b.is_ascii_alphanumeric() || b"-._~".contains(&b) {
                (b as char).to_string()
            } else {
                format!("%{b:02X}")
            }
        })
        .collect()
}

pub async fn call(router: &Router, method: &str, uri: &str, body: Option<serde_json::Value>) -> (StatusCode, serde_json::Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(serde_json::to_vec(&b).unwrap())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = router.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let value = if bytes.is_empty() {
        serde_json::Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| serde_json::Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

pub fn log_lines(path: &Path) -> usize {
    std::fs::read_to_string(path).map_or(0, |s| s.lines().filter(|l| !l.trim().is_empty()).count())
}
