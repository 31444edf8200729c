use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Article, ArticleLabel, CorpusError, Dataset, Post, PostLabel};

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Record {
    Post(PostRecord),
    Article(ArticleRecord),
}

#[derive(Serialize, Deserialize)]
struct PostRecord {
    id: String,
    url: String,
    raw: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    comment: Option<String>,
    #[serde(default)]
    label: Value,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    meta: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct ArticleRecord {
    url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    title: Option<String>,
    post_ids: Vec<String>,
    #[serde(default)]
    label: Value,
}

/// `1` is positive; `-1` and `0` are negative; `null` or absent is unlabelled.
/// String forms of the same values are accepted.
fn parse_label(value: &Value, line: usize) -> Result<Option<bool>, CorpusError> {
    let unknown = || CorpusError::UnknownLabel {
        line,
        value: value.to_string(),
    };
    match value {
        Value::Null => Ok(None),
        Value::Number(n) => match n.as_i64() {
            Some(1) => Ok(Some(true)),
            Some(-1) | Some(0) => Ok(Some(false)),
            _ => Err(unknown()),
        },
        Value::String(s) => match s.trim() {
            "1" | "+1" => Ok(Some(true)),
            "-1" | "0" => Ok(Some(false)),
            _ => Err(unknown()),
        },
        _ => Err(unknown()),
    }
}

fn label_value(positive: Option<bool>) -> Value {
    match positive {
        Some(true) => Value::from(1),
        Some(false) => Value::from(-1),
        None => Value::Null,
    }
}

/// Parses dataset JSONL. Blank lines are ignored; line numbers are 1-based.
pub fn parse_dataset(text: &str) -> Result<Dataset, CorpusError> {
    let mut dataset = Dataset::default();
    let mut ids = HashSet::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        match record {
            Record::Post(r) => {
                if !ids.insert(r.id.clone()) {
                    return Err(CorpusError::DuplicateId(r.id));
                }
                let label = parse_label(&r.label, line_no)?.map(PostLabel::from_positive);
                dataset.posts.push(Post {
                    id: r.id,
                    article_url: r.url,
                    raw_text: r.raw,
                    comment_text: r.comment,
                    label,
                    source_meta: r.meta,
                });
            }
            Record::Article(r) => {
                let label = parse_label(&r.label, line_no)?.map(ArticleLabel::from_positive);
                dataset.articles.push(Article {
                    url: r.url,
                    title: r.title,
                    post_ids: r.post_ids,
                    label,
                });
            }
        }
    }
    Ok(dataset)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, CorpusError> {
    parse_dataset(&std::fs::read_to_string(path)?)
}

/// Writes posts, then articles, one JSON object per line.
pub fn write_dataset<W: Write>(dataset: &Dataset, mut out: W) -> Result<(), CorpusError> {
    let to_io = |e: serde_json::Error| CorpusError::Io(e.into());
    for p in &dataset.posts {
        let record = Record::Post(PostRecord {
            id: p.id.clone(),
            url: p.article_url.clone(),
            raw: p.raw_text.clone(),
            comment: p.comment_text.clone(),
            label: label_value(p.label.map(PostLabel::is_positive)),
            meta: p.source_meta.clone(),
        });
        serde_json::to_writer(&mut out, &record).map_err(to_io)?;
        out.write_all(b"\n")?;
    }
    for a in &dataset.articles {
        let record = Record::Article(ArticleRecord {
            url: a.url.clone(),
            title: a.title.clone(),
            post_ids: a.post_ids.clone(),
            label: label_value(a.label.map(ArticleLabel::is_positive)),
        });
        serde_json::to_writer(&mut out, &record).map_err(to_io)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    write_dataset(dataset, BufWriter::new(File::create(path)?))
}
