//! Planted-signal corpus for exercising the pipeline without the real data.
//!
//! Every post contains a filter keyword, so ingestion keeps all of them.
//! Suspicion-casting posts carry one of a handful of cue words with high
//! probability; other posts carry one rarely. Everything else is filler.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{derive_article_label, Article, Dataset, Post, PostLabel};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub posts: usize,
    pub positive_rate: f64,
    pub max_posts_per_article: usize,
    /// Chance that a suspicion-casting post contains a cue word.
    pub cue_rate: f64,
    /// Chance that any other post contains one.
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            posts: 5000,
            positive_rate: 0.15,
            max_posts_per_article: 5,
            cue_rate: 0.97,
            noise_rate: 0.01,
            seed: 42,
        }
    }
}

pub const CUE_WORDS: [&str; 5] = ["hoax", "fabricated", "bogus", "debunked", "lies"];
const KEYWORDS: [&str; 3] = ["misinformation", "fabrication", "untrue"];

fn filler(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    (0..n).map(|_| format!("word{}", rng.random_range(0..300))).collect()
}

/// Raw (un-ingested) posts with labels, and titled articles.
pub fn synthetic_dataset(cfg: &SyntheticConfig) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let positives = (cfg.posts as f64 * cfg.positive_rate).round() as usize;
    let mut labels: Vec<bool> = (0..cfg.posts).map(|i| i < positives).collect();
    labels.shuffle(&mut rng);

    let mut posts = Vec::with_capacity(cfg.posts);
    let mut articles: Vec<Article> = Vec::new();
    let mut remaining_in_article = 0;
    for (i, &scp) in labels.iter().enumerate() {
        if remaining_in_article == 0 {
            let mut a = Article::new(format!("https://news.example/story/{:05}", articles.len()));
            a.title = Some(format!("Story {} {}", articles.len(), filler(&mut rng, 3).join(" ")));
            articles.push(a);
            remaining_in_article = rng.random_range(1..=cfg.max_posts_per_article.max(1));
        }
        remaining_in_article -= 1;
        let article = articles.last_mut().expect("an article was just opened");

        let n_words = rng.random_range(4..12);
        let mut words = filler(&mut rng, n_words);
        let keyword = *KEYWORDS.choose(&mut rng).expect("nonempty");
        words.insert(rng.random_range(0..=words.len()), keyword.to_string());
        let cue = if scp { rng.random_bool(cfg.cue_rate) } else { rng.random_bool(cfg.noise_rate) };
        if cue {
            let c = *CUE_WORDS.choose(&mut rng).expect("nonempty");
            words.insert(rng.random_range(0..=words.len()), c.to_string());
        }
        let mut raw = words.join(" ");
        // the kinds of noise preprocessing removes
        if rng.random_bool(0.3) {
            raw = format!("{} {raw}", article.title.as_deref().unwrap_or_default());
        }
        if rng.random_bool(0.3) {
            raw.push_str(&format!(" {}", article.url));
        }
        if rng.random_bool(0.2) {
            raw.push_str(" #news @someone");
        }
        let id = format!("post{i:05}");
        article.post_ids.push(id.clone());
        posts.push(Post::new(id, article.url.clone(), raw).with_label(PostLabel::from_positive(scp)));
    }
    for a in &mut articles {
        a.label = derive_article_label(a, &posts).ok();
    }
    Dataset::new(posts, articles)
}
