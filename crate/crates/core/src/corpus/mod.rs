//! Posts, articles and the dataset they live in.
//!
//! Ingestion runs in the order the collection process implies: keyword
//! filtering on raw text, then comment cleaning, then grouping by article URL.

mod filter;
mod folds;
mod io;
mod preprocess;
mod synthetic;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use filter::{filter_candidates, keyword_spans, KeywordList, DEFAULT_KEYWORDS};
pub use folds::{stratified_folds, stratified_subsample, FoldAssignment};
pub use io::{load_dataset, parse_dataset, save_dataset, write_dataset};
pub use preprocess::{clean_comment, preprocess};
pub use synthetic::{synthetic_dataset, SyntheticConfig, CUE_WORDS};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("keyword list is empty")]
    EmptyKeywordList,
    #[error("keyword list contains an empty term")]
    EmptyKeyword,
    #[error("duplicate keyword {0:?}")]
    DuplicateKeyword(String),
    #[error("post {0} has empty raw text")]
    EmptyRawText(String),
    #[error("post {0} is referenced but carries no label")]
    UnlabeledPost(String),
    #[error("post {0} is referenced by an article but missing from the dataset")]
    MissingPost(String),
    #[error("duplicate post id {0}")]
    DuplicateId(String),
    #[error("fold count must be at least 2, got {0}")]
    InvalidFoldCount(usize),
    #[error("class {class} has {count} samples, fewer than k = {k}")]
    InsufficientClassSize { class: u8, count: usize, k: usize },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unknown label value {value}")]
    UnknownLabel { line: usize, value: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CorpusError {
    pub fn code(&self) -> &'static str {
        match self {
            CorpusError::EmptyKeywordList | CorpusError::EmptyKeyword => "invalid_keywords",
            CorpusError::DuplicateKeyword(_) => "invalid_keywords",
            CorpusError::EmptyRawText(_) => "empty_raw_text",
            CorpusError::UnlabeledPost(_) => "unlabeled_post",
            CorpusError::MissingPost(_) => "missing_post",
            CorpusError::DuplicateId(_) => "duplicate_id",
            CorpusError::InvalidFoldCount(_) => "invalid_fold_count",
            CorpusError::InsufficientClassSize { .. } => "insufficient_class_size",
            CorpusError::Malformed { .. } => "malformed_record",
            CorpusError::UnknownLabel { .. } => "unknown_label",
            CorpusError::Io(_) => "io",
        }
    }
}

/// Post-level annotation: does the post cast suspicion on its article.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostLabel {
    Scp,
    NotScp,
}

impl PostLabel {
    pub fn from_positive(positive: bool) -> Self {
        if positive {
            PostLabel::Scp
        } else {
            PostLabel::NotScp
        }
    }

    pub fn is_positive(self) -> bool {
        self == PostLabel::Scp
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArticleLabel {
    Suspicious,
    NotSuspicious,
}

impl ArticleLabel {
    pub fn from_positive(positive: bool) -> Self {
        if positive {
            ArticleLabel::Suspicious
        } else {
            ArticleLabel::NotSuspicious
        }
    }

    pub fn is_positive(self) -> bool {
        self == ArticleLabel::Suspicious
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub article_url: String,
    pub raw_text: String,
    /// Cleaned comment; `None` until [`preprocess`] has run.
    pub comment_text: Option<String>,
    pub label: Option<PostLabel>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub source_meta: BTreeMap<String, String>,
}

impl Post {
    pub fn new(id: impl Into<String>, article_url: impl Into<String>, raw_text: impl Into<String>) -> Self {
        Post {
            id: id.into(),
            article_url: article_url.into(),
            raw_text: raw_text.into(),
            comment_text: None,
            label: None,
            source_meta: BTreeMap::new(),
        }
    }

    pub fn with_label(mut self, label: PostLabel) -> Self {
        self.label = Some(label);
        self
    }

    /// Preprocessing stripped everything; the post is kept but never trained on
    /// or scored.
    pub fn is_empty_after_preprocess(&self) -> bool {
        matches!(self.comment_text.as_deref(), Some(""))
    }

    /// Text fed to the feature extractors.
    pub fn comment(&self) -> &str {
        self.comment_text.as_deref().unwrap_or(&self.raw_text)
    }

    pub fn is_trainable(&self) -> bool {
        self.label.is_some() && !self.is_empty_after_preprocess()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub url: String,
    pub title: Option<String>,
    pub post_ids: Vec<String>,
    pub label: Option<ArticleLabel>,
}

impl Article {
    pub fn new(url: impl Into<String>) -> Self {
        Article {
            url: url.into(),
            title: None,
            post_ids: Vec::new(),
            label: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub posts: Vec<Post>,
    pub articles: Vec<Article>,
}

impl Dataset {
    pub fn new(posts: Vec<Post>, articles: Vec<Article>) -> Self {
        Dataset { posts, articles }
    }

    pub fn post_index(&self) -> HashMap<&str, usize> {
        self.posts
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.as_str(), i))
            .collect()
    }

    /// Fills every article label that can be derived from fully labelled posts.
    /// Articles with an unlabelled post keep whatever label they had.
    pub fn derive_article_labels(&mut self) {
        let index = self.post_index();
        let derived: Vec<Option<ArticleLabel>> = self
            .articles
            .iter()
            .map(|a| derive_with_index(a, &self.posts, &index).ok())
            .collect();
        for (article, label) in self.articles.iter_mut().zip(derived) {
            if label.is_some() {
                article.label = label;
            }
        }
    }

    pub fn stats(&self) -> DatasetStats {
        let labelled: Vec<_> = self.posts.iter().filter_map(|p| p.label).collect();
        let positive_posts = labelled.iter().filter(|l| l.is_positive()).count();
        let comments: Vec<usize> = self
            .posts
            .iter()
            .filter_map(|p| p.comment_text.as_ref())
            .map(|c| c.chars().count())
            .collect();
        let avg_comment_chars = if comments.is_empty() {
            0.0
        } else {
            comments.iter().sum::<usize>() as f64 / comments.len() as f64
        };
        let total_refs: usize = self.articles.iter().map(|a| a.post_ids.len()).sum();
        DatasetStats {
            posts: self.posts.len(),
            positive_posts,
            negative_posts: labelled.len() - positive_posts,
            unlabeled_posts: self.posts.len() - labelled.len(),
            empty_after_preprocess: self.posts.iter().filter(|p| p.is_empty_after_preprocess()).count(),
            avg_comment_chars,
            articles: self.articles.len(),
            suspicious_articles: self
                .articles
                .iter()
                .filter(|a| a.label == Some(ArticleLabel::Suspicious))
                .count(),
            avg_posts_per_article: if self.articles.is_empty() {
                0.0
            } else {
                total_refs as f64 / self.articles.len() as f64
            },
        }
    }
}

/// Summary counts in the layout of a dataset statistics table.
/// Comment length is measured in characters.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetStats {
    pub posts: usize,
    pub positive_posts: usize,
    pub negative_posts: usize,
    pub unlabeled_posts: usize,
    pub empty_after_preprocess: usize,
    pub avg_comment_chars: f64,
    pub articles: usize,
    pub suspicious_articles: usize,
    pub avg_posts_per_article: f64,
}

/// Strips the fragment and lowercases the host; the query is kept.
/// Strings that do not parse as URLs only lose their fragment.
pub fn normalize_url(raw: &str) -> String {
    let trimmed = raw.trim();
    match url::Url::parse(trimmed) {
        Ok(mut u) => {
            u.set_fragment(None);
            u.to_string()
        }
        Err(_) => match trimmed.find('#') {
            Some(pos) => trimmed[..pos].to_string(),
            None => trimmed.to_string(),
        },
    }
}

/// Suspicious iff at least one referenced post is an SCP.
pub fn derive_article_label(article: &Article, posts: &[Post]) -> Result<ArticleLabel, CorpusError> {
    let index: HashMap<&str, usize> = posts.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();
    derive_with_index(article, posts, &index)
}

fn derive_with_index(
    article: &Article,
    posts: &[Post],
    index: &HashMap<&str, usize>,
) -> Result<ArticleLabel, CorpusError> {
    let mut any_scp = false;
    for id in &article.post_ids {
        let post = index
            .get(id.as_str())
            .map(|&i| &posts[i])
            .ok_or_else(|| CorpusError::MissingPost(id.clone()))?;
        match post.label {
            Some(label) => any_scp |= label.is_positive(),
            None => return Err(CorpusError::UnlabeledPost(id.clone())),
        }
    }
    Ok(ArticleLabel::from_positive(any_scp))
}

/// One article per distinct normalized URL, in order of first appearance.
pub fn group_posts_by_article(posts: &[Post]) -> Vec<Article> {
    let mut slots: HashMap<String, usize> = HashMap::new();
    let mut articles: Vec<Article> = Vec::new();
    for post in posts {
        let url = normalize_url(&post.article_url);
        let slot = *slots.entry(url.clone()).or_insert_with(|| {
            articles.push(Article::new(url));
            articles.len() - 1
        });
        articles[slot].post_ids.push(post.id.clone());
    }
    articles
}

/// Result of running the collection front end over a raw dataset.
#[derive(Clone, Debug)]
pub struct IngestOutcome {
    pub dataset: Dataset,
    pub candidates: usize,
    pub dropped: usize,
}

/// Filter → clean → group. Article titles and labels present in `raw` are
/// carried over by normalized URL; missing article labels are derived when
/// every post is labelled.
pub fn ingest(raw: &Dataset, keywords: &KeywordList) -> Result<IngestOutcome, CorpusError> {
    let by_url: HashMap<String, &Article> = raw.articles.iter().map(|a| (normalize_url(&a.url), a)).collect();
    let candidates = filter_candidates(&raw.posts, keywords);
    let mut posts = Vec::with_capacity(candidates.len());
    for post in &candidates {
        let url = normalize_url(&post.article_url);
        let title = by_url.get(&url).and_then(|a| a.title.as_deref());
        let mut cleaned = preprocess(post, title)?;
        cleaned.article_url = url;
        posts.push(cleaned);
    }
    let mut articles = group_posts_by_article(&posts);
    for article in &mut articles {
        if let Some(src) = by_url.get(&article.url) {
            article.title = src.title.clone();
            article.label = src.label;
        }
    }
    let mut dataset = Dataset::new(posts, articles);
    let preset: Vec<Option<ArticleLabel>> = dataset.articles.iter().map(|a| a.label).collect();
    dataset.derive_article_labels();
    for (article, label) in dataset.articles.iter_mut().zip(preset) {
        if label.is_some() {
            article.label = label;
        }
    }
    Ok(IngestOutcome {
        candidates: candidates.len(),
        dropped: raw.posts.len() - candidates.len(),
        dataset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn labelled(id: &str, label: PostLabel) -> Post {
        Post::new(id, "https://ex.com/a", "text").with_label(label)
    }

    fn article_of(posts: &[Post]) -> Article {
        let mut a = Article::new("https://ex.com/a");
        a.post_ids = posts.iter().map(|p| p.id.clone()).collect();
        a
    }

    #[test]
    fn article_with_one_scp_is_suspicious() {
        use PostLabel::*;
        let posts = vec![labelled("1", NotScp), labelled("2", Scp), labelled("3", NotScp)];
        assert_eq!(derive_article_label(&article_of(&posts), &posts).unwrap(), ArticleLabel::Suspicious);
        let posts = vec![labelled("1", NotScp), labelled("2", NotScp)];
        assert_eq!(
            derive_article_label(&article_of(&posts), &posts).unwrap(),
            ArticleLabel::NotSuspicious
        );
    }

    #[test]
    fn unlabelled_post_is_rejected() {
        let posts = vec![labelled("1", PostLabel::NotScp), Post::new("2", "https://ex.com/a", "x")];
        let err = derive_article_label(&article_of(&posts), &posts).unwrap_err();
        assert!(matches!(err, CorpusError::UnlabeledPost(id) if id == "2"));
    }

    #[test]
    fn derived_label_agrees_with_any_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.random_range(1..12);
            let flags: Vec<bool> = (0..n).map(|_| rng.random_bool(0.2)).collect();
            let posts: Vec<Post> = flags
                .iter()
                .enumerate()
                .map(|(i, &f)| labelled(&i.to_string(), PostLabel::from_positive(f)))
                .collect();
            let expected = flags.iter().any(|&f| f);
            let got = derive_article_label(&article_of(&posts), &posts).unwrap();
            assert_eq!(got.is_positive(), expected);
        }
    }

    #[test]
    fn grouping_counts_posts_per_url() {
        let posts: Vec<Post> = ["A", "B", "A", "A", "B"]
            .iter()
            .enumerate()
            .map(|(i, u)| Post::new(i.to_string(), format!("https://ex.com/{u}"), "x"))
            .collect();
        let articles = group_posts_by_article(&posts);
        assert_eq!(articles.len(), 2);
        assert_eq!(articles[0].post_ids, vec!["0", "2", "3"]);
        assert_eq!(articles[1].post_ids, vec!["1", "4"]);
    }

    #[test]
    fn table_scale_post_count() {
        // 1,836 articles at 2.75 posts per article.
        let expected = (1836.0f64 * 2.75).round() as usize;
        assert_eq!(expected, 5049);
        let mut posts = Vec::new();
        let mut id = 0;
        for a in 0..1836 {
            // three posts for three quarters of the articles, two for the rest
            let n = if a % 4 == 3 { 2 } else { 3 };
            for _ in 0..n {
                posts.push(Post::new(id.to_string(), format!("https://news.example/{a}"), "x"));
                id += 1;
            }
        }
        let articles = group_posts_by_article(&posts);
        assert_eq!(articles.len(), 1836);
        let total: usize = articles.iter().map(|a| a.post_ids.len()).sum();
        assert_eq!(total, posts.len());
        assert_eq!(total, 5049);
    }

    #[test]
    fn grouping_matches_hash_map_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let posts: Vec<Post> = (0..500)
            .map(|i| {
                let u = rng.random_range(0..40);
                Post::new(format!("p{i}"), format!("https://Ex.com/{u}#frag{i}"), "x")
            })
            .collect();
        let mut oracle: std::collections::BTreeMap<String, Vec<String>> = Default::default();
        for p in &posts {
            let path = p.article_url.split('#').next().unwrap().replace("Ex.com", "ex.com");
            oracle.entry(path).or_default().push(p.id.clone());
        }
        let got: std::collections::BTreeMap<String, Vec<String>> = group_posts_by_article(&posts)
            .into_iter()
            .map(|a| (a.url, a.post_ids))
            .collect();
        assert_eq!(got, oracle);
    }

    #[test]
    fn url_normalization_rules() {
        assert_eq!(normalize_url("https://EX.com/a?q=1#top"), "https://ex.com/a?q=1");
        assert_eq!(normalize_url("  https://ex.com/A  "), "https://ex.com/A");
        assert_eq!(normalize_url("not a url#x"), "not a url");
    }

    #[test]
    fn ingest_filters_cleans_and_labels() {
        let mut raw = Dataset::default();
        raw.posts = vec![
            Post::new("1", "https://ex.com/a", "この記事は誤報では？ https://ex.com/a").with_label(PostLabel::Scp),
            Post::new("2", "https://ex.com/a", "いい天気"),
            Post::new("3", "https://ex.com/b#x", "誤報であって欲しかった").with_label(PostLabel::NotScp),
        ];
        let kw = KeywordList::new(vec!["誤報".to_string()]).unwrap();
        let out = ingest(&raw, &kw).unwrap();
        assert_eq!(out.candidates, 2);
        assert_eq!(out.dropped, 1);
        let ds = out.dataset;
        assert_eq!(ds.posts[0].comment_text.as_deref(), Some("この記事は誤報では？"));
        assert_eq!(ds.articles.len(), 2);
        assert_eq!(ds.articles[0].label, Some(ArticleLabel::Suspicious));
        assert_eq!(ds.articles[1].url, "https://ex.com/b");
        assert_eq!(ds.articles[1].label, Some(ArticleLabel::NotSuspicious));
    }

    proptest! {
        #[test]
        fn adding_scp_never_clears_suspicion(flags in proptest::collection::vec(any::<bool>(), 1..10)) {
            let mut posts: Vec<Post> = flags
                .iter()
                .enumerate()
                .map(|(i, &f)| labelled(&i.to_string(), PostLabel::from_positive(f)))
                .collect();
            let before = derive_article_label(&article_of(&posts), &posts).unwrap();
            posts.push(labelled("extra", PostLabel::Scp));
            let after = derive_article_label(&article_of(&posts), &posts).unwrap();
            prop_assert_eq!(after, ArticleLabel::Suspicious);
            if before == ArticleLabel::Suspicious {
                prop_assert_eq!(after, before);
            }
        }

        #[test]
        fn grouping_is_a_partition(urls in proptest::collection::vec(0u8..6, 0..60)) {
            let posts: Vec<Post> = urls
                .iter()
                .enumerate()
                .map(|(i, u)| Post::new(i.to_string(), format!("https://ex.com/{u}"), "x"))
                .collect();
            let articles = group_posts_by_article(&posts);
            let mut ids: Vec<String> = articles.iter().flat_map(|a| a.post_ids.clone()).collect();
            prop_assert_eq!(ids.len(), posts.len());
            ids.sort();
            ids.dedup();
            prop_assert_eq!(ids.len(), posts.len());
        }
    }
}
