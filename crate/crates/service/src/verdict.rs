use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use triage_core::corpus::{normalize_url, Article, ArticleLabel, Dataset, PostLabel};

use crate::ServiceError;

/// A reviewer's decision on one article, optionally with corrected labels
/// for some of its posts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Verdict {
    pub article_url: String,
    pub article_label: ArticleLabel,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub post_labels: BTreeMap<String, PostLabel>,
    pub reviewer: String,
    pub timestamp: DateTime<Utc>,
}

/// Request body for a new verdict; the server stamps the time when the
/// client does not.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictRequest {
    pub article_url: String,
    pub article_label: ArticleLabel,
    #[serde(default)]
    pub post_labels: BTreeMap<String, PostLabel>,
    pub reviewer: String,
    #[serde(default)]
    pub timestamp: Option<DateTime<Utc>>,
}

impl VerdictRequest {
    pub fn into_verdict(self) -> Verdict {
        Verdict {
            article_url: normalize_url(&self.article_url),
            article_label: self.article_label,
            post_labels: self.post_labels,
            reviewer: self.reviewer,
            timestamp: self.timestamp.unwrap_or_else(Utc::now),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArticleStatus {
    Pending,
    Reviewed,
}

/// Checks a verdict against the base dataset:
/// - the reviewer id is non-empty and every corrected post belongs to the article;
/// - a not-suspicious verdict carries no SCP correction;
/// - a suspicious verdict leaves at least one SCP among the article's posts
///   once corrections are laid over the base labels.
pub fn validate_verdict(verdict: &Verdict, article: &Article, base: &Dataset) -> Result<(), ServiceError> {
    if verdict.reviewer.trim().is_empty() {
        return Err(ServiceError::InvalidVerdict("reviewer id is empty".into()));
    }
    if let Some(stray) = verdict.post_labels.keys().find(|id| !article.post_ids.contains(id)) {
        return Err(ServiceError::InvalidVerdict(format!(
            "post {stray} does not belong to article {}",
            article.url
        )));
    }
    let any_scp_correction = verdict.post_labels.values().any(|l| l.is_positive());
    match verdict.article_label {
        ArticleLabel::NotSuspicious if any_scp_correction => Err(ServiceError::InconsistentLabels(
            "a not-suspicious article cannot have a suspicion-casting post".into(),
        )),
        ArticleLabel::NotSuspicious => Ok(()),
        ArticleLabel::Suspicious => {
            let index = base.post_index();
            let has_scp = article.post_ids.iter().any(|id| {
                verdict
                    .post_labels
                    .get(id)
                    .copied()
                    .or_else(|| index.get(id.as_str()).and_then(|&i| base.posts[i].label))
                    .is_some_and(|l| l.is_positive())
            });
            if has_scp {
                Ok(())
            } else {
                Err(ServiceError::InconsistentLabels(
                    "a suspicious article needs at least one post labelled scp".into(),
                ))
            }
        }
    }
}

/// The base dataset with expert feedback laid over it; feedback wins.
///
/// A not-suspicious verdict marks every post of the article not-SCP. A
/// suspicious verdict applies the corrected post labels and leaves the other
/// posts as they were. Either way the article takes the verdict's label.
pub fn apply_feedback<'a>(base: &Dataset, verdicts: impl IntoIterator<Item = &'a Verdict>) -> Dataset {
    let mut out = base.clone();
    let posts: HashMap<String, usize> = out.posts.iter().enumerate().map(|(i, p)| (p.id.clone(), i)).collect();
    let articles: HashMap<String, usize> =
        out.articles.iter().enumerate().map(|(i, a)| (a.url.clone(), i)).collect();
    for verdict in verdicts {
        let Some(&ai) = articles.get(&verdict.article_url) else {
            continue;
        };
        out.articles[ai].label = Some(verdict.article_label);
        for id in out.articles[ai].post_ids.clone() {
            let Some(&pi) = posts.get(&id) else { continue };
            let post = &mut out.posts[pi];
            post.label = match verdict.article_label {
                ArticleLabel::NotSuspicious => Some(PostLabel::NotScp),
                ArticleLabel::Suspicious => verdict.post_labels.get(&id).copied().or(post.label),
            };
        }
    }
    out
}
