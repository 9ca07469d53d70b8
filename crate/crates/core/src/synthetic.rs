//! Seeded grammar corpus: after two random opening items, each next item is
//! a fixed function of the unordered pair of the two items before it.
//!
//! Two pair rules are available. `Dominant` draws a random rank over items
//! and a random successor permutation; the next item is the successor of
//! the higher-ranked member of the pair. `Random` fills the pair table with
//! independent uniform draws.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use chrono::{TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{prefix_expand, DatasetSplit, SessionSample, Vocabulary};
use crate::error::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrammarRule {
    Dominant,
    Random,
}

impl GrammarRule {
    pub fn as_str(&self) -> &'static str {
        match self {
            GrammarRule::Dominant => "dominant",
            GrammarRule::Random => "random",
        }
    }
}

impl fmt::Display for GrammarRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GrammarRule {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dominant" => Ok(Self::Dominant),
            "random" => Ok(Self::Random),
            _ => Err(DataError::InvalidConfig(format!("unknown grammar rule `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrammarConfig {
    pub rule: GrammarRule,
    pub num_items: usize,
    pub num_sessions: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for GrammarConfig {
    fn default() -> Self {
        Self {
            rule: GrammarRule::Dominant,
            num_items: 50,
            num_sessions: 5000,
            min_len: 4,
            max_len: 8,
            seed: 7,
        }
    }
}

impl GrammarConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::InvalidConfig(m.to_string()));
        if self.num_items < 2 {
            return bad("grammar needs at least 2 items");
        }
        if self.num_sessions == 0 {
            return bad("grammar needs at least 1 session");
        }
        if self.min_len < 3 || self.max_len < self.min_len {
            return bad("session lengths must satisfy 3 <= min_len <= max_len");
        }
        Ok(())
    }
}

/// Transition table over unordered pairs `{a, b}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grammar {
    num_items: usize,
    table: Vec<usize>,
}

fn pair_index(a: usize, b: usize) -> usize {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    hi * (hi + 1) / 2 + lo
}

impl Grammar {
    pub fn random(num_items: usize, rng: &mut impl Rng) -> Self {
        let pairs = num_items * (num_items + 1) / 2;
        let table = (0..pairs).map(|_| rng.random_range(0..num_items)).collect();
        Self { num_items, table }
    }

    pub fn dominant(num_items: usize, rng: &mut impl Rng) -> Self {
        let mut rank: Vec<usize> = (0..num_items).collect();
        rank.shuffle(rng);
        let mut succ: Vec<usize> = (0..num_items).collect();
        succ.shuffle(rng);
        let mut table = vec![0; num_items * (num_items + 1) / 2];
        for b in 0..num_items {
            for a in 0..=b {
                let top = if rank[a] >= rank[b] { a } else { b };
                table[pair_index(a, b)] = succ[top];
            }
        }
        Self { num_items, table }
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn next(&self, a: usize, b: usize) -> usize {
        self.table[pair_index(a, b)]
    }

    /// True when every step from the third item on follows the table.
    pub fn accepts(&self, session: &[usize]) -> bool {
        session
            .windows(3)
            .all(|w| self.next(w[0], w[1]) == w[2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub grammar: Grammar,
    pub sessions: Vec<Vec<usize>>,
}

pub fn generate(cfg: &GrammarConfig) -> Result<SyntheticCorpus, DataError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let grammar = match cfg.rule {
        GrammarRule::Dominant => Grammar::dominant(cfg.num_items, &mut rng),
        GrammarRule::Random => Grammar::random(cfg.num_items, &mut rng),
    };
    let sessions = (0..cfg.num_sessions)
        .map(|_| {
            let len = rng.random_range(cfg.min_len..=cfg.max_len);
            let mut s = vec![
                rng.random_range(0..cfg.num_items),
                rng.random_range(0..cfg.num_items),
            ];
            while s.len() < len {
                let n = s.len();
                s.push(grammar.next(s[n - 2], s[n - 1]));
            }
            s
        })
        .collect();
    Ok(SyntheticCorpus { grammar, sessions })
}

/// Vocabulary whose index equals the item id, keyed by the decimal id.
pub fn identity_vocabulary(num_items: usize) -> Vocabulary {
    Vocabulary::from_keys((0..num_items).map(|i| i.to_string()).collect())
        .expect("decimal keys are distinct")
}

/// Start of the synthetic clock: 2020-01-01T00:00:00Z.
const EPOCH_MS: i64 = 1_577_836_800_000;
/// Sessions are spread evenly over ten days.
const SPAN_MS: i64 = 10 * 86_400_000;

fn session_start(index: usize, total: usize) -> i64 {
    EPOCH_MS + (SPAN_MS as i128 * index as i128 / total.max(1) as i128) as i64
}

/// Renders the corpus as a `session,timestamp,item` log with ISO-8601
/// times, one second between clicks.
pub fn to_event_log(corpus: &SyntheticCorpus) -> String {
    let mut out = String::new();
    let n = corpus.sessions.len();
    for (s, items) in corpus.sessions.iter().enumerate() {
        let start = session_start(s, n);
        for (k, item) in items.iter().enumerate() {
            let t = Utc
                .timestamp_millis_opt(start + 1000 * k as i64)
                .single()
                .expect("synthetic times are in range");
            let _ = writeln!(
                out,
                "{},{},{}",
                s + 1,
                t.format("%Y-%m-%dT%H:%M:%S%.3fZ"),
                item
            );
        }
    }
    out
}

/// Session-atomic random split of the corpus into train, validation and
/// test samples, indices left as item ids.
pub fn split_sessions(
    corpus: &SyntheticCorpus,
    validation_fraction: f64,
    test_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit, DataError> {
    let n = corpus.sessions.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (test_fraction * n as f64).round() as usize;
    let n_val = (validation_fraction * n as f64).round() as usize;
    if n_test + n_val >= n {
        return Err(DataError::InvalidConfig(
            "validation and test fractions leave no training sessions".into(),
        ));
    }
    let mut split = DatasetSplit::default();
    for (rank, &s) in order.iter().enumerate() {
        let samples: Vec<SessionSample> =
            prefix_expand(&corpus.sessions[s], session_start(s, n), s)?;
        let bucket = if rank < n_test {
            &mut split.test
        } else if rank < n_test + n_val {
            &mut split.validation
        } else {
            &mut split.train
        };
        bucket.extend(samples);
    }
    Ok(split)
}
