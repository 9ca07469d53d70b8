//! Delimiter-separated click-log ingestion.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use chrono::DateTime;
use flate2::read::GzDecoder;

use super::RawEvent;
use crate::error::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeFormat {
    /// RFC 3339 / ISO-8601, e.g. `2014-04-07T10:51:09.277Z`.
    Iso8601,
    EpochMillis,
    EpochSeconds,
}

impl TimeFormat {
    fn parse(&self, field: &str) -> Option<i64> {
        let ms = match self {
            TimeFormat::Iso8601 => DateTime::parse_from_rfc3339(field).ok()?.timestamp_millis(),
            TimeFormat::EpochMillis => field.parse::<i64>().ok()?,
            TimeFormat::EpochSeconds => {
                let s: f64 = field.parse().ok()?;
                if !s.is_finite() {
                    return None;
                }
                (s * 1000.0).round() as i64
            }
        };
        (ms >= 0).then_some(ms)
    }

    fn name(&self) -> &'static str {
        match self {
            TimeFormat::Iso8601 => "iso",
            TimeFormat::EpochMillis => "ms",
            TimeFormat::EpochSeconds => "s",
        }
    }
}

/// Column layout of an event log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogFormat {
    pub delimiter: char,
    pub has_header: bool,
    pub session_col: usize,
    pub time_col: usize,
    pub item_col: usize,
    pub time_format: TimeFormat,
}

impl LogFormat {
    /// Comma-separated, no header, `session,timestamp,item,...` with ISO-8601 times.
    pub fn csv_iso() -> Self {
        Self {
            delimiter: ',',
            has_header: false,
            session_col: 0,
            time_col: 1,
            item_col: 2,
            time_format: TimeFormat::Iso8601,
        }
    }

    /// Semicolon- or tab-separated with a header row, `session;timestamp;item`
    /// and integer epoch-millisecond times.
    pub fn dsv_int(delimiter: char) -> Self {
        Self {
            delimiter,
            has_header: true,
            session_col: 0,
            time_col: 1,
            item_col: 2,
            time_format: TimeFormat::EpochMillis,
        }
    }

    fn parse_row(&self, line: &str) -> Option<RawEvent> {
        let fields: Vec<&str> = line.split(self.delimiter).map(str::trim).collect();
        let get = |i: usize| fields.get(i).copied().filter(|f| !f.is_empty());
        let session_key = get(self.session_col)?;
        let item_key = get(self.item_col)?;
        let timestamp = self.time_format.parse(get(self.time_col)?)?;
        Some(RawEvent {
            session_key: session_key.to_string(),
            timestamp,
            item_key: item_key.to_string(),
        })
    }
}

fn delimiter_name(c: char) -> String {
    match c {
        ',' => "comma".into(),
        ';' => "semicolon".into(),
        '\t' => "tab".into(),
        '|' => "pipe".into(),
        ' ' => "space".into(),
        other => other.to_string(),
    }
}

impl fmt::Display for LogFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "delim={},header={},session={},time={},item={},time_format={}",
            delimiter_name(self.delimiter),
            self.has_header,
            self.session_col,
            self.time_col,
            self.item_col,
            self.time_format.name()
        )
    }
}

/// Accepts `csv-iso`, `ssv-int`, `tsv-int`, or a generic descriptor such as
/// `delim=tab,header=true,session=0,time=1,item=2,time_format=ms`.
impl FromStr for LogFormat {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv-iso" | "yoochoose" => return Ok(Self::csv_iso()),
            "ssv-int" => return Ok(Self::dsv_int(';')),
            "tsv-int" => return Ok(Self::dsv_int('\t')),
            _ => {}
        }
        let bad = || DataError::UnknownFormat(s.to_string());
        let mut fmt = Self::csv_iso();
        for part in s.split(',') {
            let (key, value) = part.split_once('=').ok_or_else(bad)?;
            let col = || value.parse::<usize>().map_err(|_| bad());
            match key.trim() {
                "delim" => {
                    fmt.delimiter = match value {
                        "comma" => ',',
                        "semicolon" => ';',
                        "tab" => '\t',
                        "pipe" => '|',
                        "space" => ' ',
                        v if v.chars().count() == 1 => v.chars().next().unwrap_or(','),
                        _ => return Err(bad()),
                    }
                }
                "header" => fmt.has_header = value.parse().map_err(|_| bad())?,
                "session" => fmt.session_col = col()?,
                "time" => fmt.time_col = col()?,
                "item" => fmt.item_col = col()?,
                "time_format" => {
                    fmt.time_format = match value {
                        "iso" => TimeFormat::Iso8601,
                        "ms" => TimeFormat::EpochMillis,
                        "s" => TimeFormat::EpochSeconds,
                        _ => return Err(bad()),
                    }
                }
                _ => return Err(bad()),
            }
        }
        Ok(fmt)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLog {
    pub events: Vec<RawEvent>,
    /// 1-based line numbers of rejected rows.
    pub malformed_rows: Vec<usize>,
    /// Data rows seen (blank lines and the header excluded).
    pub total_rows: usize,
}

/// Parses a log stream. Rejected rows are reported; more than
/// `max_malformed_fraction` of them is fatal.
pub fn parse_event_log<R: Read>(
    reader: R,
    format: &LogFormat,
    max_malformed_fraction: f64,
) -> Result<ParsedLog, DataError> {
    let reader = BufReader::new(reader);
    let mut events = Vec::new();
    let mut malformed_rows = Vec::new();
    let mut total_rows = 0;
    let mut header_pending = format.has_header;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(DataError::Unreadable)?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if header_pending {
            header_pending = false;
            continue;
        }
        total_rows += 1;
        match format.parse_row(line) {
            Some(ev) => events.push(ev),
            None => malformed_rows.push(idx + 1),
        }
    }
    if total_rows > 0 {
        let fraction = malformed_rows.len() as f64 / total_rows as f64;
        if fraction > max_malformed_fraction {
            return Err(DataError::TooManyMalformed {
                malformed: malformed_rows.len(),
                total: total_rows,
                limit: max_malformed_fraction,
                rows: malformed_rows.iter().take(20).copied().collect(),
            });
        }
    }
    if !malformed_rows.is_empty() {
        log::warn!(
            "{} malformed rows skipped (first: line {})",
            malformed_rows.len(),
            malformed_rows[0]
        );
    }
    Ok(ParsedLog {
        events,
        malformed_rows,
        total_rows,
    })
}

/// Opens a log file, transparently decompressing `.gz`.
pub fn read_event_log_file(
    path: &Path,
    format: &LogFormat,
    max_malformed_fraction: f64,
) -> Result<ParsedLog, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if path.extension().is_some_and(|e| e == "gz") {
        parse_event_log(GzDecoder::new(file), format, max_malformed_fraction)
    } else {
        parse_event_log(file, format, max_malformed_fraction)
    }
}
