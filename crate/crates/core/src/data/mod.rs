//! Click-log preprocessing: sessionize, filter, split by time, and expand
//! sessions into (prefix, next item) samples.

mod log;
mod store;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::DataError;

pub use self::log::{parse_event_log, read_event_log_file, LogFormat, ParsedLog, TimeFormat};
pub use self::store::{read_dataset, read_vocabulary, write_dataset, DatasetStats};

pub const MS_PER_DAY: i64 = 86_400_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawEvent {
    pub session_key: String,
    /// Epoch milliseconds.
    pub timestamp: i64,
    pub item_key: String,
}

/// A chronologically ordered session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub items: Vec<String>,
    /// Timestamp of the last event.
    pub end_time: i64,
}

pub type Corpus = BTreeMap<String, Session>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    item_keys: Vec<String>,
    index_of: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_keys(item_keys: Vec<String>) -> Result<Self, DataError> {
        let mut index_of = HashMap::with_capacity(item_keys.len());
        for (i, k) in item_keys.iter().enumerate() {
            if index_of.insert(k.clone(), i).is_some() {
                return Err(DataError::InvalidConfig(format!(
                    "duplicate vocabulary key `{k}`"
                )));
            }
        }
        Ok(Self {
            item_keys,
            index_of,
        })
    }

    pub fn len(&self) -> usize {
        self.item_keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.item_keys.is_empty()
    }

    pub fn index_of(&self, key: &str) -> Option<usize> {
        self.index_of.get(key).copied()
    }

    pub fn key(&self, index: usize) -> Option<&str> {
        self.item_keys.get(index).map(String::as_str)
    }

    pub fn keys(&self) -> &[String] {
        &self.item_keys
    }

    /// SHA-256 of the vocabulary file contents.
    pub fn hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for k in &self.item_keys {
            h.update(k.as_bytes());
            h.update(b"\n");
        }
        h.finalize().into()
    }

    pub fn encode(&self, keys: &[String]) -> Result<Vec<usize>, DataError> {
        keys.iter()
            .map(|k| self.index_of(k).ok_or_else(|| DataError::UnknownItem(k.clone())))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionSample {
    pub prefix: Vec<usize>,
    pub label: usize,
    pub end_time: i64,
    /// Ordinal of the originating session; all prefixes of one session share it.
    pub session_id: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetSplit {
    pub train: Vec<SessionSample>,
    pub validation: Vec<SessionSample>,
    pub test: Vec<SessionSample>,
}

/// A non-negative rational, used for the recent-fraction knob so that the
/// sample cut is exact integer arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fraction {
    pub num: u64,
    pub den: u64,
}

impl Fraction {
    pub const ONE: Fraction = Fraction { num: 1, den: 1 };

    pub fn new(num: u64, den: u64) -> Self {
        Self { num, den }
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `⌈self × n⌉`
    pub fn ceil_mul(&self, n: usize) -> usize {
        let prod = self.num as u128 * n as u128;
        prod.div_ceil(self.den as u128) as usize
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// Accepts `a/b`, integers, or plain decimals like `0.25`.
impl FromStr for Fraction {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DataError::InvalidConfig(format!("invalid fraction `{s}`"));
        let s = s.trim();
        if let Some((a, b)) = s.split_once('/') {
            let num = a.trim().parse().map_err(|_| bad())?;
            let den = b.trim().parse().map_err(|_| bad())?;
            if den == 0 {
                return Err(bad());
            }
            return Ok(Self { num, den });
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if frac.len() > 18 || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let den = 10u64.pow(frac.len() as u32);
        let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        let frac_v: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        let num = int
            .checked_mul(den)
            .and_then(|v| v.checked_add(frac_v))
            .ok_or_else(bad)?;
        Ok(Self { num, den })
    }
}

/// Parses durations such as `1d`, `7d`, `24h`, `90m`, `3600s`, `500ms` into
/// milliseconds.
pub fn parse_duration_ms(s: &str) -> Result<i64, DataError> {
    let bad = || DataError::InvalidConfig(format!("invalid duration `{s}`"));
    let s = s.trim();
    let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let n: i64 = num.parse().map_err(|_| bad())?;
    let mult = match unit {
        "ms" => 1,
        "s" => 1000,
        "m" => 60_000,
        "h" => 3_600_000,
        "d" | "" => MS_PER_DAY,
        _ => return Err(bad()),
    };
    n.checked_mul(mult).ok_or_else(bad)
}

pub fn format_duration_ms(ms: i64) -> String {
    if ms % MS_PER_DAY == 0 {
        format!("{}d", ms / MS_PER_DAY)
    } else if ms % 3_600_000 == 0 {
        format!("{}h", ms / 3_600_000)
    } else if ms % 1000 == 0 {
        format!("{}s", ms / 1000)
    } else {
        format!("{ms}ms")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    pub min_session_length: usize,
    /// Minimum number of distinct sessions an item must appear in.
    pub min_item_support: usize,
    pub test_window_ms: i64,
    pub recent_fraction: Fraction,
    pub validation_ratio: f64,
    pub rng_seed: u64,
    pub max_malformed_fraction: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            min_session_length: 2,
            min_item_support: 5,
            test_window_ms: MS_PER_DAY,
            recent_fraction: Fraction::ONE,
            validation_ratio: 0.1,
            rng_seed: 42,
            max_malformed_fraction: 0.05,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::InvalidConfig(m.to_string()));
        if self.min_session_length < 2 {
            return bad("min_session_length must be >= 2");
        }
        let f = self.recent_fraction;
        if f.den == 0 || f.num == 0 || f.num > f.den {
            return bad("recent_fraction must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.validation_ratio) {
            return bad("validation_ratio must lie in [0, 1)");
        }
        if self.test_window_ms <= 0 {
            return bad("test_window must be positive");
        }
        Ok(())
    }
}

/// Groups events by session and orders each session by time; ties keep
/// input order and repeats are preserved.
pub fn sessionize(events: &[RawEvent]) -> Corpus {
    let mut grouped: BTreeMap<&str, Vec<&RawEvent>> = BTreeMap::new();
    for ev in events {
        grouped.entry(&ev.session_key).or_default().push(ev);
    }
    grouped
        .into_iter()
        .map(|(key, mut evs)| {
            evs.sort_by_key(|e| e.timestamp);
            let end_time = evs.last().map(|e| e.timestamp).unwrap_or(0);
            (
                key.to_string(),
                Session {
                    items: evs.iter().map(|e| e.item_key.clone()).collect(),
                    end_time,
                },
            )
        })
        .collect()
}

/// Removes items seen in fewer than `min_item_support` sessions, then drops
/// sessions shorter than `min_session_length`. One pass of each, in that order.
pub fn filter_corpus(sessions: &Corpus, cfg: &PreprocessConfig) -> Result<Corpus, DataError> {
    let mut support: HashMap<&str, usize> = HashMap::new();
    for s in sessions.values() {
        let distinct: HashSet<&str> = s.items.iter().map(String::as_str).collect();
        for item in distinct {
            *support.entry(item).or_default() += 1;
        }
    }
    let out: Corpus = sessions
        .iter()
        .filter_map(|(key, s)| {
            let items: Vec<String> = s
                .items
                .iter()
                .filter(|i| support[i.as_str()] >= cfg.min_item_support)
                .cloned()
                .collect();
            (items.len() >= cfg.min_session_length).then(|| {
                (
                    key.clone(),
                    Session {
                        items,
                        end_time: s.end_time,
                    },
                )
            })
        })
        .collect();
    if out.is_empty() {
        return Err(DataError::EmptyCorpus);
    }
    Ok(out)
}

/// Sessions ending within the trailing `test_window_ms` of the latest
/// timestamp go to test; test sessions lose items unseen in train and are
/// dropped if they become too short.
pub fn split_train_test(
    sessions: &Corpus,
    cfg: &PreprocessConfig,
) -> Result<(Corpus, Corpus), DataError> {
    let max_time = sessions
        .values()
        .map(|s| s.end_time)
        .max()
        .ok_or(DataError::EmptyCorpus)?;
    let cutoff = max_time - cfg.test_window_ms;
    let (train, raw_test): (Corpus, Corpus) = sessions
        .iter()
        .map(|(k, s)| (k.clone(), s.clone()))
        .partition(|(_, s)| s.end_time <= cutoff);
    if train.is_empty() {
        return Err(DataError::EmptySplit("train"));
    }
    let known: HashSet<&str> = train
        .values()
        .flat_map(|s| s.items.iter().map(String::as_str))
        .collect();
    let test: Corpus = raw_test
        .into_iter()
        .filter_map(|(k, s)| {
            let items: Vec<String> = s
                .items
                .into_iter()
                .filter(|i| known.contains(i.as_str()))
                .collect();
            (items.len() >= cfg.min_session_length).then_some((
                k,
                Session {
                    items,
                    end_time: s.end_time,
                },
            ))
        })
        .collect();
    if test.is_empty() {
        return Err(DataError::EmptySplit("test"));
    }
    Ok((train, test))
}

/// Sessions ordered by `(end_time, key)`.
pub fn chronological(corpus: &Corpus) -> Vec<(&String, &Session)> {
    let mut v: Vec<(&String, &Session)> = corpus.iter().collect();
    v.sort_by(|a, b| a.1.end_time.cmp(&b.1.end_time).then(a.0.cmp(b.0)));
    v
}

/// Vocabulary over the training sessions, keys in order of first
/// appearance when sessions are read chronologically.
pub fn build_vocabulary(train: &Corpus) -> Result<Vocabulary, DataError> {
    let mut seen = HashSet::new();
    let mut keys = Vec::new();
    for (_, s) in chronological(train) {
        for item in &s.items {
            if seen.insert(item.as_str()) {
                keys.push(item.clone());
            }
        }
    }
    if keys.is_empty() {
        return Err(DataError::EmptyCorpus);
    }
    Vocabulary::from_keys(keys)
}

/// `[i1..it]` becomes `([i1], i2), ([i1,i2], i3), …, ([i1..i(t-1)], it)`.
pub fn prefix_expand(
    sequence: &[usize],
    end_time: i64,
    session_id: usize,
) -> Result<Vec<SessionSample>, DataError> {
    if sequence.len() < 2 {
        return Err(DataError::SessionTooShort(sequence.len()));
    }
    Ok((1..sequence.len())
        .map(|k| SessionSample {
            prefix: sequence[..k].to_vec(),
            label: sequence[k],
            end_time,
            session_id,
        })
        .collect())
}

/// Keeps the `⌈fraction × n⌉` samples with the latest session end times.
pub fn take_recent_fraction(samples: &[SessionSample], fraction: Fraction) -> Vec<SessionSample> {
    let mut sorted = samples.to_vec();
    sorted.sort_by_key(|s| s.end_time);
    let keep = fraction.ceil_mul(sorted.len()).min(sorted.len());
    sorted.split_off(sorted.len() - keep)
}

/// Session-atomic random split; `round(ratio × sessions)` sessions go to
/// validation. Both sides keep the input order.
pub fn validation_split(
    samples: &[SessionSample],
    ratio: f64,
    rng_seed: u64,
) -> (Vec<SessionSample>, Vec<SessionSample>) {
    let mut sessions: Vec<usize> = Vec::new();
    let mut seen = HashSet::new();
    for s in samples {
        if seen.insert(s.session_id) {
            sessions.push(s.session_id);
        }
    }
    let n_val = ((ratio * sessions.len() as f64).round() as usize).min(sessions.len());
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sessions.shuffle(&mut rng);
    let val_ids: HashSet<usize> = sessions[..n_val].iter().copied().collect();
    samples
        .iter()
        .cloned()
        .partition(|s| !val_ids.contains(&s.session_id))
}

/// Result of the full preprocessing protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub vocabulary: Vocabulary,
    pub split: DatasetSplit,
    pub stats: DatasetStats,
}

fn expand_corpus(
    corpus: &Corpus,
    vocab: &Vocabulary,
    first_id: usize,
) -> Result<Vec<SessionSample>, DataError> {
    let mut out = Vec::new();
    for (i, (_, s)) in chronological(corpus).into_iter().enumerate() {
        let seq = vocab.encode(&s.items)?;
        out.extend(prefix_expand(&seq, s.end_time, first_id + i)?);
    }
    Ok(out)
}

/// Runs the whole protocol on parsed events.
pub fn preprocess(events: &[RawEvent], cfg: &PreprocessConfig) -> Result<Dataset, DataError> {
    cfg.validate()?;
    let sessions = sessionize(events);
    let filtered = filter_corpus(&sessions, cfg)?;
    let (train_sessions, test_sessions) = split_train_test(&filtered, cfg)?;
    let vocabulary = build_vocabulary(&train_sessions)?;

    let train_all = expand_corpus(&train_sessions, &vocabulary, 0)?;
    let test = expand_corpus(&test_sessions, &vocabulary, train_sessions.len())?;
    let recent = take_recent_fraction(&train_all, cfg.recent_fraction);
    let (train, validation) = validation_split(&recent, cfg.validation_ratio, cfg.rng_seed);
    if train.is_empty() {
        return Err(DataError::EmptySplit("train"));
    }

    let total_len: usize = train_sessions
        .values()
        .chain(test_sessions.values())
        .map(|s| s.items.len())
        .sum();
    let n_sessions = train_sessions.len() + test_sessions.len();
    let stats = DatasetStats {
        train_samples: recent.len(),
        validation_samples: validation.len(),
        test_samples: test.len(),
        items: vocabulary.len(),
        avg_session_length: total_len as f64 / n_sessions as f64,
    };
    Ok(Dataset {
        vocabulary,
        split: DatasetSplit {
            train,
            validation,
            test,
        },
        stats,
    })
}
