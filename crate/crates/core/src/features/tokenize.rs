use std::ops::Deref;

use serde::{Deserialize, Serialize};

/// Ordered tokens of one post. Never contains an empty token.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    /// Drops empty strings.
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        TokenSequence(tokens.into_iter().map(Into::into).filter(|t: &String| !t.is_empty()).collect())
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }
}

impl Deref for TokenSequence {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

pub trait Tokenizer {
    fn tokenize(&self, text: &str) -> TokenSequence;
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizeMode {
    /// Split on whitespace; every non-word character becomes its own token.
    Whitespace,
    /// Overlapping character bigrams inside each whitespace-delimited chunk.
    CharBigram,
    /// `CharBigram` when the text contains kana or CJK ideographs, otherwise
    /// `Whitespace`.
    #[default]
    Auto,
}

impl std::str::FromStr for TokenizeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "whitespace" => Ok(TokenizeMode::Whitespace),
            "char_bigram" | "char-bigram" => Ok(TokenizeMode::CharBigram),
            "auto" => Ok(TokenizeMode::Auto),
            other => Err(format!("unknown tokenizer {other:?}")),
        }
    }
}

impl Tokenizer for TokenizeMode {
    fn tokenize(&self, text: &str) -> TokenSequence {
        tokenize(text, *self)
    }
}

fn is_unsegmented(c: char) -> bool {
    matches!(c,
        '\u{3040}'..='\u{30FF}'
        | '\u{3400}'..='\u{4DBF}'
        | '\u{4E00}'..='\u{9FFF}'
        | '\u{F900}'..='\u{FAFF}'
        | '\u{FF66}'..='\u{FF9F}')
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

pub fn tokenize(text: &str, mode: TokenizeMode) -> TokenSequence {
    match mode {
        TokenizeMode::Whitespace => whitespace_tokens(text),
        TokenizeMode::CharBigram => char_bigrams(text),
        TokenizeMode::Auto => {
            if text.chars().any(is_unsegmented) {
                char_bigrams(text)
            } else {
                whitespace_tokens(text)
            }
        }
    }
}

fn whitespace_tokens(text: &str) -> TokenSequence {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for c in chunk.chars() {
            if is_word_char(c) {
                word.push(c);
            } else {
                if !word.is_empty() {
                    tokens.push(std::mem::take(&mut word));
                }
                tokens.push(c.to_string());
            }
        }
        if !word.is_empty() {
            tokens.push(word);
        }
    }
    TokenSequence(tokens)
}

fn char_bigrams(text: &str) -> TokenSequence {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        if chars.len() == 1 {
            tokens.push(chars[0].to_string());
        } else {
            tokens.extend(chars.windows(2).map(|w| w.iter().collect::<String>()));
        }
    }
    TokenSequence(tokens)
}
