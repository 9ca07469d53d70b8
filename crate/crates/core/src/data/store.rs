//! On-disk layout of a preprocessed dataset directory.
//!
//! ```text
//! vocab.txt         one item key per line, line number (0-based) = index
//! train.tsv         end_time<TAB>label<TAB>i1,i2,...,it
//! validation.tsv
//! test.tsv
//! stats.txt         key<TAB>value
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{Dataset, DatasetSplit, SessionSample, Vocabulary};
use crate::error::DataError;

pub const VOCAB_FILE: &str = "vocab.txt";
pub const TRAIN_FILE: &str = "train.tsv";
pub const VALIDATION_FILE: &str = "validation.tsv";
pub const TEST_FILE: &str = "test.tsv";
pub const STATS_FILE: &str = "stats.txt";

/// Corpus summary in the usual dataset-statistics layout.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    /// Expanded training samples (validation included).
    pub train_samples: usize,
    pub validation_samples: usize,
    pub test_samples: usize,
    pub items: usize,
    /// Mean length of the filtered train and test sessions.
    pub avg_session_length: f64,
}

impl DatasetStats {
    pub fn to_text(&self) -> String {
        format!(
            "train_sessions\t{}\nvalidation_sessions\t{}\ntest_sessions\t{}\nitems\t{}\navg_session_length\t{:.4}\n",
            self.train_samples,
            self.validation_samples,
            self.test_samples,
            self.items,
            self.avg_session_length
        )
    }

    pub fn summary_table(&self) -> String {
        format!(
            "{:<16}{:>12}\n{:<16}{:>12}\n{:<16}{:>12}\n{:<16}{:>12}\n{:<16}{:>12.2}\n",
            "#train",
            self.train_samples,
            "#validation",
            self.validation_samples,
            "#test",
            self.test_samples,
            "#items",
            self.items,
            "avg. length",
            self.avg_session_length
        )
    }

    fn parse(text: &str, path: &Path) -> Result<Self, DataError> {
        let mut stats = DatasetStats {
            train_samples: 0,
            validation_samples: 0,
            test_samples: 0,
            items: 0,
            avg_session_length: 0.0,
        };
        for (i, line) in text.lines().enumerate() {
            let bad = |reason: &str| DataError::BadDatasetLine {
                path: path.to_path_buf(),
                line: i + 1,
                reason: reason.to_string(),
            };
            let (k, v) = line.split_once('\t').ok_or_else(|| bad("missing tab"))?;
            let count = || v.parse::<usize>().map_err(|_| bad("bad count"));
            match k {
                "train_sessions" => stats.train_samples = count()?,
                "validation_sessions" => stats.validation_samples = count()?,
                "test_sessions" => stats.test_samples = count()?,
                "items" => stats.items = count()?,
                "avg_session_length" => {
                    stats.avg_session_length = v.parse().map_err(|_| bad("bad length"))?
                }
                _ => return Err(bad("unknown key")),
            }
        }
        Ok(stats)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn samples_to_text(samples: &[SessionSample]) -> String {
    let mut out = String::new();
    for s in samples {
        let prefix: Vec<String> = s.prefix.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(out, "{}\t{}\t{}", s.end_time, s.label, prefix.join(","));
    }
    out
}

/// Parses a samples file. Session ids are recovered from prefix chains: a
/// line continues the previous session when it shares the end time and its
/// prefix is the previous prefix plus the previous label.
pub fn parse_samples(text: &str, path: &Path, num_items: usize) -> Result<Vec<SessionSample>, DataError> {
    let mut out: Vec<SessionSample> = Vec::new();
    let mut session_id = 0;
    for (i, line) in text.lines().enumerate() {
        let bad = |reason: String| DataError::BadDatasetLine {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let mut parts = line.split('\t');
        let (Some(t), Some(l), Some(p), None) = (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad("expected 3 tab-separated fields".into()));
        };
        let end_time: i64 = t.parse().map_err(|_| bad(format!("bad end time `{t}`")))?;
        let idx = |s: &str| -> Result<usize, DataError> {
            let v: usize = s.parse().map_err(|_| bad(format!("bad item index `{s}`")))?;
            if v >= num_items {
                return Err(bad(format!("item index {v} outside vocabulary of {num_items}")));
            }
            Ok(v)
        };
        let label = idx(l)?;
        let prefix = p.split(',').map(idx).collect::<Result<Vec<_>, _>>()?;
        if let Some(prev) = out.last() {
            let continues = prev.end_time == end_time
                && prefix.len() == prev.prefix.len() + 1
                && prefix[..prev.prefix.len()] == prev.prefix[..]
                && prefix[prev.prefix.len()] == prev.label;
            if !continues {
                session_id += 1;
            }
        }
        out.push(SessionSample {
            prefix,
            label,
            end_time,
            session_id,
        });
    }
    Ok(out)
}

pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<(), DataError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let write = |name: &str, text: String| -> Result<(), DataError> {
        let path: PathBuf = dir.join(name);
        fs::write(&path, text).map_err(io_err(&path))
    };
    let mut vocab = String::new();
    for k in dataset.vocabulary.keys() {
        vocab.push_str(k);
        vocab.push('\n');
    }
    write(VOCAB_FILE, vocab)?;
    write(TRAIN_FILE, samples_to_text(&dataset.split.train))?;
    write(VALIDATION_FILE, samples_to_text(&dataset.split.validation))?;
    write(TEST_FILE, samples_to_text(&dataset.split.test))?;
    write(STATS_FILE, dataset.stats.to_text())?;
    Ok(())
}

pub fn read_vocabulary(dir: &Path) -> Result<Vocabulary, DataError> {
    let path = dir.join(VOCAB_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    Vocabulary::from_keys(text.lines().map(String::from).collect())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset, DataError> {
    let vocabulary = read_vocabulary(dir)?;
    let n = vocabulary.len();
    let read = |name: &str| -> Result<Vec<SessionSample>, DataError> {
        let path = dir.join(name);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        parse_samples(&text, &path, n)
    };
    let split = DatasetSplit {
        train: read(TRAIN_FILE)?,
        validation: read(VALIDATION_FILE)?,
        test: read(TEST_FILE)?,
    };
    let stats_path = dir.join(STATS_FILE);
    let stats_text = fs::read_to_string(&stats_path).map_err(io_err(&stats_path))?;
    let stats = DatasetStats::parse(&stats_text, &stats_path)?;
    Ok(Dataset {
        vocabulary,
        split,
        stats,
    })
}
