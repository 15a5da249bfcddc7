//! Access-log ingestion.
//!
//! Input is UTF-8 CSV with the header `user_id,content_id,region_id[,timestamp]`.
//! Repeated accesses by one user to one content collapse into a single unique
//! access; contents are then ranked by their number of distinct users.

use std::collections::{BTreeMap, HashSet};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::popularity::{EmpiricalDistribution, PopularityError};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("log format error: {0}")]
    Format(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("no unique accesses to rank")]
    Empty,
    #[error(transparent)]
    Popularity(#[from] PopularityError),
}

pub type Result<T> = std::result::Result<T, IngestError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessRecord {
    pub user_id: String,
    pub content_id: String,
    pub region_id: u32,
    pub timestamp: Option<i64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    /// Data rows seen, well-formed or not.
    pub rows: u64,
    pub malformed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedLog {
    pub records: Vec<AccessRecord>,
    pub report: ParseReport,
}

const REQUIRED_COLUMNS: [&str; 3] = ["user_id", "content_id", "region_id"];

pub fn parse_log<R: Read>(input: R) -> Result<ParsedLog> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let headers = reader.headers()?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let has_timestamp = match names.as_slice() {
        [u, c, r] if [*u, *c, *r] == REQUIRED_COLUMNS => false,
        [u, c, r, t] if [*u, *c, *r] == REQUIRED_COLUMNS && *t == "timestamp" => true,
        [] | [""] => return Err(IngestError::Format("missing header".into())),
        _ => {
            return Err(IngestError::Format(format!(
                "expected header `user_id,content_id,region_id[,timestamp]`, found `{}`",
                names.join(",")
            )))
        }
    };
    let width = if has_timestamp { 4 } else { 3 };

    let mut records = Vec::new();
    let mut report = ParseReport::default();
    for row in reader.records() {
        report.rows += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) if matches!(e.kind(), csv::ErrorKind::Utf8 { .. }) => {
                report.malformed += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        match parse_row(&row, width) {
            Some(rec) => records.push(rec),
            None => report.malformed += 1,
        }
    }
    Ok(ParsedLog { records, report })
}

fn parse_row(row: &csv::StringRecord, width: usize) -> Option<AccessRecord> {
    if row.len() != width {
        return None;
    }
    let user_id = row.get(0)?;
    let content_id = row.get(1)?;
    if user_id.is_empty() || content_id.is_empty() {
        return None;
    }
    let region_id = row.get(2)?.parse().ok()?;
    let timestamp = match row.get(3) {
        None | Some("") => None,
        Some(t) => Some(t.parse().ok()?),
    };
    Some(AccessRecord {
        user_id: user_id.to_owned(),
        content_id: content_id.to_owned(),
        region_id,
        timestamp,
    })
}

pub fn filter_region(records: Vec<AccessRecord>, region: u32) -> Vec<AccessRecord> {
    records.into_iter().filter(|r| r.region_id == region).collect()
}

/// Distinct (user, content) pairs and per-content distinct-user counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UniqueAccessSet {
    pairs: HashSet<(String, String)>,
    per_content_counts: BTreeMap<String, u64>,
}

impl UniqueAccessSet {
    pub fn pairs(&self) -> &HashSet<(String, String)> {
        &self.pairs
    }

    pub fn per_content_counts(&self) -> &BTreeMap<String, u64> {
        &self.per_content_counts
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn distinct_users(&self) -> usize {
        self.pairs
            .iter()
            .map(|(u, _)| u.as_str())
            .collect::<HashSet<_>>()
            .len()
    }

    pub fn distinct_contents(&self) -> usize {
        self.per_content_counts.len()
    }

    /// One synthetic record per unique pair (region 0, no timestamp), in
    /// sorted order.
    pub fn to_records(&self) -> Vec<AccessRecord> {
        let mut pairs: Vec<_> = self.pairs.iter().collect();
        pairs.sort();
        pairs
            .into_iter()
            .map(|(u, c)| AccessRecord {
                user_id: u.clone(),
                content_id: c.clone(),
                region_id: 0,
                timestamp: None,
            })
            .collect()
    }
}

/// Timestamps are ignored: any repeat of a (user, content) pair is the
/// same unique access.
pub fn dedup_unique(records: &[AccessRecord]) -> UniqueAccessSet {
    let mut set = UniqueAccessSet::default();
    for r in records {
        if set.pairs.insert((r.user_id.clone(), r.content_id.clone())) {
            *set.per_content_counts.entry(r.content_id.clone()).or_insert(0) += 1;
        }
    }
    set
}

/// Ranked popularity plus the content id behind each rank.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedContents {
    pub distribution: EmpiricalDistribution,
    pub content_ids: Vec<String>,
}

/// Sorts contents by descending distinct-user count; equal counts are
/// ordered by content id.
pub fn to_empirical(unique: &UniqueAccessSet) -> Result<RankedContents> {
    if unique.is_empty() {
        return Err(IngestError::Empty);
    }
    let mut ranked: Vec<(&String, u64)> = unique
        .per_content_counts
        .iter()
        .map(|(c, &n)| (c, n))
        .collect();
    // BTreeMap iteration is already id-ordered, so a stable sort keeps ties by id.
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    let counts = ranked.iter().map(|&(_, n)| n).collect();
    Ok(RankedContents {
        distribution: EmpiricalDistribution::new(counts)?,
        content_ids: ranked.into_iter().map(|(c, _)| c.clone()).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: u64,
    pub malformed: u64,
    pub unique_accesses: u64,
    pub distinct_users: u64,
    pub distinct_contents: u64,
}

impl IngestReport {
    pub fn new(parse: ParseReport, unique: &UniqueAccessSet) -> Self {
        Self {
            rows: parse.rows,
            malformed: parse.malformed,
            unique_accesses: unique.len() as u64,
            distinct_users: unique.distinct_users() as u64,
            distinct_contents: unique.distinct_contents() as u64,
        }
    }
}
