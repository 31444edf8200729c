use std::sync::OnceLock;

use regex::Regex;

use super::{CorpusError, Post};

// A marker runs from its prefix to the next whitespace.
fn noise_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:https?://|[#＃@＠])\S*").expect("static pattern"))
}

fn clean_once(text: &str, title: Option<&str>) -> String {
    let without_title = match title {
        Some(t) if !t.trim().is_empty() => text.replace(t.trim(), ""),
        _ => text.to_string(),
    };
    let stripped = noise_pattern().replace_all(&without_title, "");
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Removes the article title, URLs, hashtags and mentions, then collapses
/// whitespace. Applied until nothing changes, so the result is a fixed point.
pub fn clean_comment(raw: &str, title: Option<&str>) -> String {
    let mut current = clean_once(raw, title);
    loop {
        let next = clean_once(&current, title);
        if next == current {
            return current;
        }
        current = next;
    }
}

/// Returns a copy of `post` with `comment_text` filled in. A post whose
/// comment comes out empty is kept and reports
/// [`Post::is_empty_after_preprocess`].
pub fn preprocess(post: &Post, article_title: Option<&str>) -> Result<Post, CorpusError> {
    if post.raw_text.is_empty() {
        return Err(CorpusError::EmptyRawText(post.id.clone()));
    }
    let mut out = post.clone();
    out.comment_text = Some(clean_comment(&post.raw_text, article_title));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn raw(text: &str) -> Post {
        Post::new("1", "https://ex.com/a", text)
    }

    #[test]
    fn strips_url_hashtag_and_mention() {
        let p = preprocess(&raw("すごい記事 https://ex.com/a #news @bob"), None).unwrap();
        assert_eq!(p.comment_text.as_deref(), Some("すごい記事"));
        assert_eq!(p.raw_text, "すごい記事 https://ex.com/a #news @bob");
    }

    #[test]
    fn strips_repeated_title() {
        let p = preprocess(&raw("TitleX TitleX body"), Some("TitleX")).unwrap();
        assert_eq!(p.comment_text.as_deref(), Some("body"));
    }

    #[test]
    fn full_width_markers_are_removed() {
        assert_eq!(clean_comment("本当？＃拡散希望　＠someone ですか", None), "本当？ ですか");
    }

    #[test]
    fn marker_glued_to_text_takes_the_rest_of_the_token() {
        assert_eq!(clean_comment("記事だhttp://x.jp/a 見て", None), "記事だ 見て");
    }

    #[test]
    fn empty_result_is_flagged() {
        let p = preprocess(&raw("https://ex.com #tag"), None).unwrap();
        assert!(p.is_empty_after_preprocess());
        assert!(!p.is_trainable());
    }

    #[test]
    fn empty_raw_is_an_error() {
        assert!(matches!(preprocess(&raw(""), None), Err(CorpusError::EmptyRawText(_))));
    }

    /// Applies each removal rule in order by walking characters; no regex.
    fn scanner_oracle(text: &str, title: Option<&str>) -> String {
        fn strip_from(text: &str, starts: &[&str]) -> String {
            let chars: Vec<char> = text.chars().collect();
            let mut out = String::new();
            let mut i = 0;
            while i < chars.len() {
                let rest: String = chars[i..].iter().collect();
                if starts.iter().any(|s| rest.starts_with(s)) {
                    while i < chars.len() && !chars[i].is_whitespace() {
                        i += 1;
                    }
                } else {
                    out.push(chars[i]);
                    i += 1;
                }
            }
            out
        }
        let mut cur = text.to_string();
        loop {
            let mut s = cur.clone();
            if let Some(t) = title {
                s = s.replace(t, "");
            }
            s = strip_from(&s, &["http://", "https://"]);
            s = strip_from(&s, &["#", "＃"]);
            s = strip_from(&s, &["@", "＠"]);
            let mut collapsed = String::new();
            for word in s.split(char::is_whitespace).filter(|w| !w.is_empty()) {
                if !collapsed.is_empty() {
                    collapsed.push(' ');
                }
                collapsed.push_str(word);
            }
            if collapsed == cur {
                return cur;
            }
            cur = collapsed;
        }
    }

    #[test]
    fn matches_scanner_oracle_on_random_posts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let words = ["記事", "本当", "fake", "news", "嘘", "TITLE", "ok"];
        let noise = ["https://ex.com/a?b=1", "http://t.co/x", "#拡散", "＃news", "@bob", "＠太郎", "a#b", "x@y.com"];
        for _ in 0..100 {
            let n = rng.random_range(1..10);
            let mut parts = Vec::new();
            for _ in 0..n {
                if rng.random_bool(0.35) {
                    parts.push(noise[rng.random_range(0..noise.len())].to_string());
                } else {
                    parts.push(words[rng.random_range(0..words.len())].to_string());
                }
            }
            let sep = if rng.random_bool(0.5) { " " } else { "\u{3000}" };
            let text = parts.join(sep);
            let title = rng.random_bool(0.5).then_some("TITLE");
            assert_eq!(clean_comment(&text, title), scanner_oracle(&text, title), "input {text:?}");
        }
    }

    proptest! {
        #[test]
        fn cleaning_is_idempotent(text in "[a-c#@ ＃/:hpts記事]{0,30}", use_title in any::<bool>()) {
            let title = use_title.then_some("ab");
            let once = clean_comment(&text, title);
            prop_assert_eq!(clean_comment(&once, title), once);
        }
    }
}
