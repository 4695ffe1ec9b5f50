//! Volunteer answers: ingestion, majority-vote consensus, entropy-based task
//! difficulty, consensus convergence and answer-time analytics.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groundtruth::{accuracy_by, hor_bin_of, ClassAccuracy, SegmentGT, HOR_BINS};
use crate::label::{Answer, SegmentLabel};
use crate::rng::rng_for;
use crate::segment::SegmentId;

/// Default number of answers that defines a task's classification.
pub const DEFAULT_REDUNDANCY: usize = 15;

/// Answers outside `(0, MAX_ANSWER_SECONDS]` are treated as outliers in timing.
pub const MAX_ANSWER_SECONDS: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolunteerKind {
    Registered,
    Anonymous,
}

impl VolunteerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VolunteerKind::Registered => "registered",
            VolunteerKind::Anonymous => "anonymous",
        }
    }
}

impl std::str::FromStr for VolunteerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "registered" => Ok(VolunteerKind::Registered),
            "anonymous" => Ok(VolunteerKind::Anonymous),
            other => Err(Error::Schema(format!("unknown volunteer kind {other:?}"))),
        }
    }
}

pub(crate) mod timestamp {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.to_rfc3339_opts(SecondsFormat::Millis, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let s = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&s)
            .map(|t| t.with_timezone(&Utc))
            .map_err(serde::de::Error::custom)
    }
}

/// One classification event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub classification_id: String,
    pub volunteer_id: String,
    pub volunteer_kind: VolunteerKind,
    pub workflow_id: String,
    pub task_id: String,
    pub answer: Answer,
    #[serde(with = "timestamp")]
    pub started_at: DateTime<Utc>,
    #[serde(with = "timestamp")]
    pub finished_at: DateTime<Utc>,
}

impl AnswerRecord {
    pub fn duration_seconds(&self) -> f64 {
        (self.finished_at - self.started_at).num_milliseconds() as f64 / 1000.0
    }
}

pub const ANSWER_COLUMNS: [&str; 8] = [
    "classification_id",
    "volunteer_id",
    "volunteer_kind",
    "workflow_id",
    "task_id",
    "answer",
    "started_at",
    "finished_at",
];

/// Adapter from a platform export to the answer schema. `columns` maps each
/// schema column to the export's column name; `answers` and
/// `volunteer_kinds` translate raw values. Missing entries mean identity.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ColumnMapping {
    #[serde(default)]
    pub columns: BTreeMap<String, String>,
    #[serde(default)]
    pub answers: BTreeMap<String, Answer>,
    #[serde(default)]
    pub volunteer_kinds: BTreeMap<String, VolunteerKind>,
}

impl ColumnMapping {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    fn source<'a>(&'a self, column: &'a str) -> &'a str {
        self.columns
            .get(column)
            .map(String::as_str)
            .unwrap_or(column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowErrorKind {
    Malformed,
    Timestamp,
    Answer,
    VolunteerKind,
    TimeOrder,
    DuplicateClassification,
    DuplicateVolunteer,
}

/// A rejected input row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    /// 1-based line number in the input (the header is line 1).
    pub line: u64,
    pub classification_id: Option<String>,
    pub kind: RowErrorKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    /// Accepted records ordered by task, then start time, then classification id.
    pub records: Vec<AnswerRecord>,
    pub rejected: Vec<RowError>,
}

fn parse_time(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("{s:?}: {e}"))
}

pub fn ingest_answers(path: &Path, mapping: Option<&ColumnMapping>) -> Result<IngestReport> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, mapping)
}

/// Parse an answer CSV. Missing columns abort; bad rows are collected into
/// the report's `rejected` list.
pub fn ingest_reader<R: Read>(input: R, mapping: Option<&ColumnMapping>) -> Result<IngestReport> {
    let identity = ColumnMapping::default();
    let mapping = mapping.unwrap_or(&identity);
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let headers = reader.headers()?.clone();
    let mut index = [0usize; 8];
    let mut missing = Vec::new();
    for (slot, col) in index.iter_mut().zip(ANSWER_COLUMNS) {
        let src = mapping.source(col);
        match headers.iter().position(|h| h.trim() == src) {
            Some(i) => *slot = i,
            None => missing.push(src.to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Schema(format!(
            "answer csv is missing columns: {}",
            missing.join(", ")
        )));
    }
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    let mut ids = HashSet::new();
    let mut pairs = HashSet::new();
    for (n, row) in reader.records().enumerate() {
        let line = n as u64 + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                rejected.push(RowError {
                    line,
                    classification_id: None,
                    kind: RowErrorKind::Malformed,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let field = |i: usize| row.get(index[i]).map(str::trim);
        let cid = field(0).map(str::to_string);
        let reject = |kind, message: String| RowError {
            line,
            classification_id: cid.clone(),
            kind,
            message,
        };
        if index.iter().any(|&i| row.get(i).is_none()) {
            rejected.push(reject(
                RowErrorKind::Malformed,
                format!("expected {} fields, found {}", headers.len(), row.len()),
            ));
            continue;
        }
        let [cid_s, vol, kind_s, wf, task, ans, start, end] =
            [0, 1, 2, 3, 4, 5, 6, 7].map(|i| field(i).unwrap());
        if cid_s.is_empty() || vol.is_empty() || task.is_empty() {
            rejected.push(reject(
                RowErrorKind::Malformed,
                "empty identifier field".into(),
            ));
            continue;
        }
        let answer = match mapping.answers.get(ans) {
            Some(a) => *a,
            None => match ans.parse::<Answer>() {
                Ok(a) => a,
                Err(e) => {
                    rejected.push(reject(RowErrorKind::Answer, e.to_string()));
                    continue;
                }
            },
        };
        let volunteer_kind = match mapping.volunteer_kinds.get(kind_s) {
            Some(k) => *k,
            None => match kind_s.parse::<VolunteerKind>() {
                Ok(k) => k,
                Err(e) => {
                    rejected.push(reject(RowErrorKind::VolunteerKind, e.to_string()));
                    continue;
                }
            },
        };
        let (started_at, finished_at) = match (parse_time(start), parse_time(end)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                rejected.push(reject(RowErrorKind::Timestamp, e));
                continue;
            }
        };
        if finished_at < started_at {
            rejected.push(reject(
                RowErrorKind::TimeOrder,
                "finished_at precedes started_at".into(),
            ));
            continue;
        }
        if !ids.insert(cid_s.to_string()) {
            rejected.push(reject(
                RowErrorKind::DuplicateClassification,
                format!("classification_id {cid_s} seen before"),
            ));
            continue;
        }
        if !pairs.insert((task.to_string(), vol.to_string())) {
            rejected.push(reject(
                RowErrorKind::DuplicateVolunteer,
                format!("volunteer {vol} already answered task {task}"),
            ));
            continue;
        }
        records.push(AnswerRecord {
            classification_id: cid_s.to_string(),
            volunteer_id: vol.to_string(),
            volunteer_kind,
            workflow_id: wf.to_string(),
            task_id: task.to_string(),
            answer,
            started_at,
            finished_at,
        });
    }
    sort_records(&mut records);
    Ok(IngestReport { records, rejected })
}

/// Canonical order: task, start time, classification id.
pub fn sort_records(records: &mut [AnswerRecord]) {
    records.sort_by(|a, b| {
        a.task_id
            .cmp(&b.task_id)
            .then(a.started_at.cmp(&b.started_at))
            .then(a.classification_id.cmp(&b.classification_id))
    });
}

pub fn write_answers_csv<W: Write>(records: &[AnswerRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ANSWER_COLUMNS)?;
    for r in records {
        w.write_record([
            r.classification_id.as_str(),
            r.volunteer_id.as_str(),
            r.volunteer_kind.as_str(),
            r.workflow_id.as_str(),
            r.task_id.as_str(),
            r.answer.as_str(),
            &r.started_at.to_rfc3339_opts(SecondsFormat::Millis, true),
            &r.finished_at.to_rfc3339_opts(SecondsFormat::Millis, true),
        ])?;
    }
    w.flush().map_err(|e| Error::io("answer csv", e))?;
    Ok(())
}

pub fn write_rejections_csv<W: Write>(rows: &[RowError], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("rejection csv", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    /// Easy ≤ 0.33 < Medium ≤ 0.66 < Hard, on normalized entropy.
    pub fn from_normalized_entropy(h: f64) -> Self {
        if h <= 0.33 {
            Difficulty::Easy
        } else if h <= 0.66 {
            Difficulty::Medium
        } else {
            Difficulty::Hard
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyDifficulty {
    /// Shannon entropy of the vote distribution, bits.
    pub raw: f64,
    /// `raw / log2(C)`.
    pub normalized: f64,
    pub difficulty: Difficulty,
}

/// Shannon entropy `−Σ p_i log2 p_i` of the vote counts over the `options`
/// offered, normalized by `log2(options)`.
pub fn entropy_difficulty(counts: &[u32], options: usize) -> Result<EntropyDifficulty> {
    if counts.len() > options {
        return Err(Error::InvalidParameter(format!(
            "{} counts for {options} options",
            counts.len()
        )));
    }
    let total: u64 = counts.iter().map(|&c| c as u64).sum();
    if total == 0 {
        return Err(Error::Empty("all vote counts are zero".into()));
    }
    let raw: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.log2()
        })
        .sum();
    let uniform = counts.len() == options && counts.iter().all(|&c| c == counts[0]);
    let normalized = if options <= 1 {
        0.0
    } else if uniform {
        1.0
    } else {
        (raw / (options as f64).log2()).clamp(0.0, 1.0)
    };
    let raw = if counts.iter().filter(|&&c| c > 0).count() == 1 {
        0.0
    } else {
        raw
    };
    Ok(EntropyDifficulty {
        raw,
        normalized,
        difficulty: Difficulty::from_normalized_entropy(normalized),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteConfig {
    /// Answers per task that define the consensus.
    pub redundancy: usize,
    /// Answer options offered by the workflow, in display order.
    pub options: Vec<Answer>,
    pub seed: u64,
}

impl Default for VoteConfig {
    fn default() -> Self {
        VoteConfig {
            redundancy: DEFAULT_REDUNDANCY,
            options: vec![Answer::Forest, Answer::NonForest, Answer::Undefined],
            seed: 0,
        }
    }
}

impl VoteConfig {
    fn validate(&self) -> Result<()> {
        if self.redundancy == 0 {
            return Err(Error::InvalidParameter(
                "redundancy must be at least 1".into(),
            ));
        }
        let distinct: BTreeSet<_> = self.options.iter().collect();
        if self.options.is_empty() || distinct.len() != self.options.len() {
            return Err(Error::InvalidParameter(format!(
                "invalid answer options {:?}",
                self.options
            )));
        }
        Ok(())
    }
}

/// Consensus of one task over its first `redundancy` answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    /// Tallies for every offered option, in the workflow's option order.
    pub counts: Vec<(Answer, u32)>,
    pub consensus: Answer,
    pub tie: bool,
    pub entropy_raw: f64,
    pub entropy_norm: f64,
    pub difficulty: Difficulty,
    /// Mean answer time of the counted answers after outlier filtering.
    pub mean_duration: Option<f64>,
}

impl TaskResult {
    pub fn count(&self, answer: Answer) -> u32 {
        self.counts
            .iter()
            .find(|(a, _)| *a == answer)
            .map(|(_, c)| *c)
            .unwrap_or(0)
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().map(|(_, c)| c).sum()
    }
}

/// The answers of one task in canonical order, one per volunteer.
fn ordered_answers<'a>(
    records: impl IntoIterator<Item = &'a AnswerRecord>,
) -> Vec<&'a AnswerRecord> {
    let mut list: Vec<&AnswerRecord> = records.into_iter().collect();
    list.sort_by(|a, b| {
        a.started_at
            .cmp(&b.started_at)
            .then(a.classification_id.cmp(&b.classification_id))
    });
    let mut seen = HashSet::new();
    list.retain(|r| seen.insert(r.volunteer_id.as_str()));
    list
}

/// Majority over `answers`; ties are drawn uniformly with a stream keyed by
/// (seed, task, number of answers used).
fn vote(
    task_id: &str,
    answers: &[&AnswerRecord],
    cfg: &VoteConfig,
) -> Result<(Vec<(Answer, u32)>, Answer, bool)> {
    let mut counts: Vec<(Answer, u32)> = cfg.options.iter().map(|&a| (a, 0)).collect();
    for r in answers {
        match counts.iter_mut().find(|(a, _)| *a == r.answer) {
            Some(slot) => slot.1 += 1,
            None => {
                return Err(Error::Schema(format!(
                    "task {task_id}: answer {} is not an offered option",
                    r.answer
                )))
            }
        }
    }
    let max = counts.iter().map(|(_, c)| *c).max().unwrap_or(0);
    let tied: Vec<Answer> = counts
        .iter()
        .filter(|(_, c)| *c == max)
        .map(|(a, _)| *a)
        .collect();
    let (consensus, tie) = if tied.len() == 1 {
        (tied[0], false)
    } else {
        let mut rng = rng_for(
            cfg.seed,
            &[
                b"tie",
                task_id.as_bytes(),
                &(answers.len() as u64).to_le_bytes(),
            ],
        );
        (tied[rng.random_range(0..tied.len())], true)
    };
    Ok((counts, consensus, tie))
}

fn mean_filtered_duration<'a>(records: impl IntoIterator<Item = &'a AnswerRecord>) -> Option<f64> {
    let kept: Vec<f64> = records
        .into_iter()
        .map(|r| r.duration_seconds())
        .filter(|&d| d > 0.0 && d <= MAX_ANSWER_SECONDS)
        .collect();
    (!kept.is_empty()).then(|| kept.iter().sum::<f64>() / kept.len() as f64)
}

fn result_for(task_id: &str, answers: &[&AnswerRecord], cfg: &VoteConfig) -> Result<TaskResult> {
    if answers.len() < cfg.redundancy {
        return Err(Error::IncompleteTask {
            task_id: task_id.to_string(),
            have: answers.len(),
            need: cfg.redundancy,
        });
    }
    let used = &answers[..cfg.redundancy];
    let (counts, consensus, tie) = vote(task_id, used, cfg)?;
    let tallies: Vec<u32> = counts.iter().map(|(_, c)| *c).collect();
    let e = entropy_difficulty(&tallies, cfg.options.len())?;
    Ok(TaskResult {
        task_id: task_id.to_string(),
        counts,
        consensus,
        tie,
        entropy_raw: e.raw,
        entropy_norm: e.normalized,
        difficulty: e.difficulty,
        mean_duration: mean_filtered_duration(used.iter().copied()),
    })
}

/// Consensus of `task_id` from the first `redundancy` answers (by start time,
/// then classification id; one answer per volunteer).
pub fn majority_vote(
    records: &[AnswerRecord],
    task_id: &str,
    cfg: &VoteConfig,
) -> Result<TaskResult> {
    cfg.validate()?;
    let answers = ordered_answers(records.iter().filter(|r| r.task_id == task_id));
    result_for(task_id, &answers, cfg)
}

/// Records grouped by task in canonical order.
pub fn group_by_task(records: &[AnswerRecord]) -> BTreeMap<&str, Vec<&AnswerRecord>> {
    let mut by_task: BTreeMap<&str, Vec<&AnswerRecord>> = BTreeMap::new();
    for r in records {
        by_task.entry(r.task_id.as_str()).or_default().push(r);
    }
    by_task
        .into_iter()
        .map(|(t, list)| (t, ordered_answers(list)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncompleteTask {
    pub task_id: String,
    pub answers: usize,
}

/// Consensus for every task in the log. Tasks with fewer than `redundancy`
/// answers are listed separately rather than failing the whole run.
pub fn aggregate(
    records: &[AnswerRecord],
    cfg: &VoteConfig,
) -> Result<(Vec<TaskResult>, Vec<IncompleteTask>)> {
    cfg.validate()?;
    let mut results = Vec::new();
    let mut incomplete = Vec::new();
    for (task, answers) in group_by_task(records) {
        if answers.len() < cfg.redundancy {
            incomplete.push(IncompleteTask {
                task_id: task.to_string(),
                answers: answers.len(),
            });
            continue;
        }
        results.push(result_for(task, &answers, cfg)?);
    }
    Ok((results, incomplete))
}

/// The answers that count toward each task's consensus.
pub fn counted_answers<'a>(
    records: &'a [AnswerRecord],
    redundancy: usize,
) -> Vec<&'a AnswerRecord> {
    group_by_task(records)
        .into_values()
        .flat_map(|list| list.into_iter().take(redundancy))
        .collect()
}

pub const DEFAULT_CONVERGENCE_KS: [usize; 5] = [5, 7, 9, 11, 13];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub ks: Vec<usize>,
    pub redundancy: usize,
    /// Share of tasks (percent) whose consensus at k matches the one at R.
    pub percent: Vec<f64>,
    /// Per task, whether the consensus at each k matches.
    pub per_task: BTreeMap<String, Vec<bool>>,
}

/// Compare the consensus over the first k answers with the full-redundancy
/// consensus for each k in `ks`.
pub fn convergence(
    records: &[AnswerRecord],
    task_ids: &[String],
    ks: &[usize],
    cfg: &VoteConfig,
) -> Result<ConvergenceReport> {
    cfg.validate()?;
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > cfg.redundancy) {
        return Err(Error::InvalidParameter(format!(
            "k = {k} outside 1..={}",
            cfg.redundancy
        )));
    }
    let grouped = group_by_task(records);
    let mut per_task = BTreeMap::new();
    let mut agree = vec![0usize; ks.len()];
    for task in task_ids {
        let answers = grouped.get(task.as_str()).cloned().unwrap_or_default();
        if answers.len() < cfg.redundancy {
            return Err(Error::IncompleteTask {
                task_id: task.clone(),
                have: answers.len(),
                need: cfg.redundancy,
            });
        }
        let (_, full, _) = vote(task, &answers[..cfg.redundancy], cfg)?;
        let mut row = Vec::with_capacity(ks.len());
        for (i, &k) in ks.iter().enumerate() {
            let (_, at_k, _) = vote(task, &answers[..k], cfg)?;
            row.push(at_k == full);
            if at_k == full {
                agree[i] += 1;
            }
        }
        per_task.insert(task.clone(), row);
    }
    let n = task_ids.len();
    let percent = agree
        .iter()
        .map(|&a| {
            if n == 0 {
                0.0
            } else {
                100.0 * a as f64 / n as f64
            }
        })
        .collect();
    Ok(ConvergenceReport {
        ks: ks.to_vec(),
        redundancy: cfg.redundancy,
        percent,
        per_task,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupTime {
    pub mean_seconds: f64,
    pub answers: usize,
}

/// Mean answer durations; groups with no surviving answers are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeStats {
    pub overall: Option<GroupTime>,
    pub by_consensus: BTreeMap<Answer, GroupTime>,
    pub by_volunteer_kind: BTreeMap<VolunteerKind, GroupTime>,
    pub by_difficulty: BTreeMap<Difficulty, GroupTime>,
    /// Answers dropped as outliers (duration ≤ 0 s or > 300 s).
    pub excluded: usize,
}

fn mean_group<K: Ord>(groups: BTreeMap<K, Vec<f64>>) -> BTreeMap<K, GroupTime> {
    groups
        .into_iter()
        .map(|(k, v)| {
            (
                k,
                GroupTime {
                    mean_seconds: v.iter().sum::<f64>() / v.len() as f64,
                    answers: v.len(),
                },
            )
        })
        .collect()
}

/// Answer-time means overall, by task consensus, by volunteer kind and by
/// task difficulty. Records of tasks without a result only count overall
/// and by volunteer kind.
pub fn time_stats(records: &[AnswerRecord], results: &[TaskResult]) -> TimeStats {
    let by_task: BTreeMap<&str, &TaskResult> =
        results.iter().map(|r| (r.task_id.as_str(), r)).collect();
    let mut all = Vec::new();
    let mut cons: BTreeMap<Answer, Vec<f64>> = BTreeMap::new();
    let mut kind: BTreeMap<VolunteerKind, Vec<f64>> = BTreeMap::new();
    let mut diff: BTreeMap<Difficulty, Vec<f64>> = BTreeMap::new();
    let mut excluded = 0;
    for r in records {
        let d = r.duration_seconds();
        if !(d > 0.0 && d <= MAX_ANSWER_SECONDS) {
            excluded += 1;
            continue;
        }
        all.push(d);
        kind.entry(r.volunteer_kind).or_default().push(d);
        if let Some(t) = by_task.get(r.task_id.as_str()) {
            cons.entry(t.consensus).or_default().push(d);
            diff.entry(t.difficulty).or_default().push(d);
        }
    }
    TimeStats {
        overall: (!all.is_empty()).then(|| GroupTime {
            mean_seconds: all.iter().sum::<f64>() / all.len() as f64,
            answers: all.len(),
        }),
        by_consensus: mean_group(cons),
        by_volunteer_kind: mean_group(kind),
        by_difficulty: mean_group(diff),
        excluded,
    }
}

/// Segment reference labels looked up by task id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TruthIndex {
    pub entries: BTreeMap<String, TaskTruth>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskTruth {
    pub segment_id: SegmentId,
    pub hor: f64,
    pub gt_u: SegmentLabel,
    pub gt_m: SegmentLabel,
}

impl TruthIndex {
    /// Join task → segment pairs with the two segment references. Tasks whose
    /// segment is missing from either reference are skipped.
    pub fn build<'a>(
        task_segments: impl IntoIterator<Item = (&'a str, SegmentId)>,
        gt_u: &SegmentGT,
        gt_m: &SegmentGT,
    ) -> TruthIndex {
        let entries = task_segments
            .into_iter()
            .filter_map(|(task, seg)| {
                let u = gt_u.entries.get(&seg)?;
                let m = gt_m.entries.get(&seg)?;
                Some((
                    task.to_string(),
                    TaskTruth {
                        segment_id: seg,
                        hor: u.hor,
                        gt_u: u.label,
                        gt_m: m.label,
                    },
                ))
            })
            .collect();
        TruthIndex { entries }
    }

    pub fn get(&self, task_id: &str) -> Option<&TaskTruth> {
        self.entries.get(task_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyRow {
    pub easy: usize,
    pub medium: usize,
    pub hard: usize,
    /// Easy, Medium, Hard as percentages of the row total.
    pub percent: [f64; 3],
}

impl DifficultyRow {
    fn from_counts(c: [usize; 3]) -> Self {
        let total: usize = c.iter().sum();
        let pct = |x: usize| {
            if total == 0 {
                0.0
            } else {
                100.0 * x as f64 / total as f64
            }
        };
        DifficultyRow {
            easy: c[0],
            medium: c[1],
            hard: c[2],
            percent: [pct(c[0]), pct(c[1]), pct(c[2])],
        }
    }

    pub fn total(&self) -> usize {
        self.easy + self.medium + self.hard
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtAccuracyPair {
    pub gt_u: ClassAccuracy,
    pub gt_m: ClassAccuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyTables {
    pub overall: DifficultyRow,
    pub per_consensus: BTreeMap<Answer, DifficultyRow>,
    /// Present only when a reference was supplied.
    pub accuracy_by_difficulty: Option<BTreeMap<Difficulty, GtAccuracyPair>>,
    /// Keyed by HoR bin label.
    pub accuracy_by_hor: Option<Vec<(String, GtAccuracyPair)>>,
}

pub fn difficulty_tables(results: &[TaskResult], truth: Option<&TruthIndex>) -> DifficultyTables {
    let idx = |d: Difficulty| d as usize;
    let mut overall = [0usize; 3];
    let mut per: BTreeMap<Answer, [usize; 3]> = BTreeMap::new();
    for r in results {
        overall[idx(r.difficulty)] += 1;
        per.entry(r.consensus).or_default()[idx(r.difficulty)] += 1;
    }
    let pair = |items: Vec<(&TaskResult, &TaskTruth)>| GtAccuracyPair {
        gt_u: accuracy_by(items.iter().map(|(r, t)| (r.consensus, t.gt_u)), |a, l| {
            a.matches(*l)
        })
        .overall,
        gt_m: accuracy_by(items.iter().map(|(r, t)| (r.consensus, t.gt_m)), |a, l| {
            a.matches(*l)
        })
        .overall,
    };
    let (by_difficulty, by_hor) = match truth {
        None => (None, None),
        Some(truth) => {
            let joined: Vec<(&TaskResult, &TaskTruth)> = results
                .iter()
                .filter_map(|r| truth.get(&r.task_id).map(|t| (r, t)))
                .collect();
            let by_d = Difficulty::ALL
                .iter()
                .map(|&d| {
                    (
                        d,
                        pair(
                            joined
                                .iter()
                                .copied()
                                .filter(|(r, _)| r.difficulty == d)
                                .collect(),
                        ),
                    )
                })
                .collect();
            let by_h = HOR_BINS
                .iter()
                .enumerate()
                .map(|(b, label)| {
                    (
                        label.to_string(),
                        pair(
                            joined
                                .iter()
                                .copied()
                                .filter(|(_, t)| hor_bin_of(t.hor) == b)
                                .collect(),
                        ),
                    )
                })
                .collect();
            (Some(by_d), Some(by_h))
        }
    };
    DifficultyTables {
        overall: DifficultyRow::from_counts(overall),
        per_consensus: per
            .into_iter()
            .map(|(a, c)| (a, DifficultyRow::from_counts(c)))
            .collect(),
        accuracy_by_difficulty: by_difficulty,
        accuracy_by_hor: by_hor,
    }
}

/// Consensus label per segment, for tasks that map to segments.
pub fn consensus_by_segment<'a>(
    results: &[TaskResult],
    task_segments: impl IntoIterator<Item = (&'a str, SegmentId)>,
) -> BTreeMap<SegmentId, Answer> {
    let by_task: BTreeMap<&str, &TaskResult> =
        results.iter().map(|r| (r.task_id.as_str(), r)).collect();
    task_segments
        .into_iter()
        .filter_map(|(t, s)| by_task.get(t).map(|r| (s, r.consensus)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    pub(crate) fn rec(
        task: &str,
        vol: &str,
        answer: Answer,
        start_s: i64,
        dur_ms: i64,
    ) -> AnswerRecord {
        let t0 = Utc.with_ymd_and_hms(2019, 5, 1, 12, 0, 0).unwrap();
        let started_at = t0 + chrono::Duration::seconds(start_s);
        AnswerRecord {
            classification_id: format!("{task}-{vol}-{start_s}"),
            volunteer_id: vol.to_string(),
            volunteer_kind: VolunteerKind::Registered,
            workflow_id: "wf".into(),
            task_id: task.to_string(),
            answer,
            started_at,
            finished_at: started_at + chrono::Duration::milliseconds(dur_ms),
        }
    }

    fn task_with(task: &str, answers: &[Answer]) -> Vec<AnswerRecord> {
        answers
            .iter()
            .enumerate()
            .map(|(i, &a)| rec(task, &format!("v{i}"), a, i as i64 * 10, 3000))
            .collect()
    }

    const CSV: &str = "classification_id,volunteer_id,volunteer_kind,workflow_id,task_id,answer,started_at,finished_at
c1,u1,registered,wf,t1,Forest,2019-05-01T12:00:00Z,2019-05-01T12:00:03Z
c2,u2,anonymous,wf,t1,NonForest,2019-05-01T12:00:05.500Z,2019-05-01T12:00:09Z
c3,u1,registered,wf,t2,Undefined,2019-05-01T12:01:00+00:00,2019-05-01T12:01:02Z
";

    #[test]
    fn ingest_well_formed() {
        let rep = ingest_reader(CSV.as_bytes(), None).unwrap();
        assert_eq!(rep.records.len(), 3);
        assert!(rep.rejected.is_empty());
        assert_eq!(rep.records[1].volunteer_kind, VolunteerKind::Anonymous);
        assert_eq!(rep.records[1].duration_seconds(), 3.5);
    }

    #[test]
    fn ingest_rejects_bad_rows() {
        let text = format!(
            "{CSV}c4,u3,registered,wf,t1,Tree,2019-05-01T12:00:00Z,2019-05-01T12:00:03Z
c1,u4,registered,wf,t1,Forest,2019-05-01T12:00:00Z,2019-05-01T12:00:03Z
c5,u5,registered,wf,t1,Forest,yesterday,2019-05-01T12:00:03Z
c6,u6,registered,wf,t1,Forest,2019-05-01T12:00:09Z,2019-05-01T12:00:03Z
c7,u1,registered,wf,t1,Forest,2019-05-01T12:00:00Z,2019-05-01T12:00:03Z
"
        );
        let rep = ingest_reader(text.as_bytes(), None).unwrap();
        assert_eq!(rep.records.len(), 3);
        let kinds: Vec<_> = rep.rejected.iter().map(|r| r.kind).collect();
        assert_eq!(
            kinds,
            vec![
                RowErrorKind::Answer,
                RowErrorKind::DuplicateClassification,
                RowErrorKind::Timestamp,
                RowErrorKind::TimeOrder,
                RowErrorKind::DuplicateVolunteer
            ]
        );
        assert_eq!(rep.rejected[0].line, 5);
    }

    #[test]
    fn ingest_missing_column_is_schema_error() {
        let text = "classification_id,volunteer_id,task_id,answer\nc1,u1,t1,Forest\n";
        assert!(matches!(
            ingest_reader(text.as_bytes(), None),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn ingest_with_mapping() {
        let text = "id,user,user_type,wf,subject,value,start,end
1,a,not-logged-in,w,s1,Floresta,2019-05-01T12:00:00Z,2019-05-01T12:00:03Z
";
        let mapping: ColumnMapping = serde_json::from_str(
            r#"{"columns": {"classification_id": "id", "volunteer_id": "user", "volunteer_kind": "user_type",
                "workflow_id": "wf", "task_id": "subject", "answer": "value", "started_at": "start", "finished_at": "end"},
               "answers": {"Floresta": "Forest"}, "volunteer_kinds": {"not-logged-in": "anonymous"}}"#,
        )
        .unwrap();
        let rep = ingest_reader(text.as_bytes(), Some(&mapping)).unwrap();
        assert_eq!(rep.records[0].answer, Answer::Forest);
        assert_eq!(rep.records[0].volunteer_kind, VolunteerKind::Anonymous);
    }

    #[test]
    fn csv_round_trip_is_byte_exact() {
        let rep = ingest_reader(CSV.as_bytes(), None).unwrap();
        let mut a = Vec::new();
        write_answers_csv(&rep.records, &mut a).unwrap();
        let again = ingest_reader(a.as_slice(), None).unwrap();
        assert_eq!(again.records, rep.records);
        let mut b = Vec::new();
        write_answers_csv(&again.records, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn majority_examples() {
        use Answer::*;
        let cfg = VoteConfig {
            seed: 11,
            ..Default::default()
        };
        let mut answers = vec![Forest; 10];
        answers.extend(vec![NonForest; 5]);
        let r = majority_vote(&task_with("t", &answers), "t", &cfg).unwrap();
        assert_eq!((r.consensus, r.tie), (Forest, false));

        let mut answers = vec![Forest; 7];
        answers.extend(vec![NonForest; 7]);
        answers.push(Undefined);
        let recs = task_with("t", &answers);
        let r = majority_vote(&recs, "t", &cfg).unwrap();
        assert!(r.tie);
        assert!(matches!(r.consensus, Forest | NonForest));
        assert_eq!(majority_vote(&recs, "t", &cfg).unwrap(), r);

        let err = majority_vote(&task_with("t", &[Forest; 14]), "t", &cfg).unwrap_err();
        assert!(matches!(
            err,
            Error::IncompleteTask {
                have: 14,
                need: 15,
                ..
            }
        ));
    }

    #[test]
    fn only_first_answers_count() {
        use Answer::*;
        let mut answers = vec![Forest; 15];
        answers.extend(vec![NonForest; 10]);
        let r = majority_vote(&task_with("t", &answers), "t", &VoteConfig::default()).unwrap();
        assert_eq!(r.count(Forest), 15);
        assert_eq!(r.total(), 15);
    }

    #[test]
    fn answer_not_offered_is_rejected() {
        let recs = task_with("t", &[Answer::Small; 15]);
        assert!(matches!(
            majority_vote(&recs, "t", &VoteConfig::default()),
            Err(Error::Schema(_))
        ));
        let cfg = VoteConfig {
            options: Answer::ALL.to_vec(),
            ..Default::default()
        };
        assert_eq!(
            majority_vote(&recs, "t", &cfg).unwrap().consensus,
            Answer::Small
        );
    }

    #[test]
    fn entropy_examples() {
        let e = entropy_difficulty(&[15, 0, 0], 3).unwrap();
        assert_eq!(
            (e.raw, e.normalized, e.difficulty),
            (0.0, 0.0, Difficulty::Easy)
        );
        let e = entropy_difficulty(&[5, 5, 5], 3).unwrap();
        assert!((e.raw - 3f64.log2()).abs() < 1e-12);
        assert_eq!((e.normalized, e.difficulty), (1.0, Difficulty::Hard));
        // -(2/3)log2(2/3) - (1/3)log2(1/3) = 0.918295834054..., / log2 3 = 0.579380164285...
        let e = entropy_difficulty(&[10, 5, 0], 3).unwrap();
        assert!((e.raw - 0.918_295_834_054_489_6).abs() < 1e-12);
        assert!((e.normalized - 0.579_380_164_285_695).abs() < 1e-12);
        assert_eq!(e.difficulty, Difficulty::Medium);
        assert!(entropy_difficulty(&[0, 0, 0], 3).is_err());
    }

    #[test]
    fn difficulty_thresholds() {
        assert_eq!(Difficulty::from_normalized_entropy(0.33), Difficulty::Easy);
        assert_eq!(
            Difficulty::from_normalized_entropy(0.3300001),
            Difficulty::Medium
        );
        assert_eq!(
            Difficulty::from_normalized_entropy(0.66),
            Difficulty::Medium
        );
        assert_eq!(Difficulty::from_normalized_entropy(0.661), Difficulty::Hard);
    }

    #[test]
    fn convergence_prefix_example() {
        use Answer::*;
        let mut answers = vec![Forest, Forest, Forest, NonForest, NonForest];
        answers.extend(vec![NonForest; 10]);
        let recs = task_with("t", &answers);
        let rep = convergence(
            &recs,
            &["t".to_string()],
            &[5, 7, 9, 11, 13, 15],
            &VoteConfig::default(),
        )
        .unwrap();
        assert_eq!(rep.percent[0], 0.0);
        // At 7 answers: 3 F vs 4 NF.
        assert_eq!(rep.percent[1], 100.0);
        assert_eq!(rep.percent[5], 100.0);
        assert!(convergence(&recs, &["t".to_string()], &[16], &VoteConfig::default()).is_err());
    }

    #[test]
    fn time_stats_filters_outliers() {
        let recs: Vec<AnswerRecord> = [2000, 3000, 4000]
            .iter()
            .enumerate()
            .map(|(i, &ms)| rec("t", &format!("v{i}"), Answer::Forest, i as i64, ms))
            .collect();
        assert_eq!(time_stats(&recs, &[]).overall.unwrap().mean_seconds, 3.0);
        let mut with_outlier = recs.clone();
        with_outlier.push(rec("t", "v9", Answer::Forest, 9, 600_000));
        let ts = time_stats(&with_outlier, &[]);
        assert_eq!(ts.overall.unwrap().mean_seconds, 3.0);
        assert_eq!(ts.excluded, 1);
        let none = time_stats(&[rec("t", "v", Answer::Forest, 0, 0)], &[]);
        assert!(none.overall.is_none());
        assert!(none.by_volunteer_kind.is_empty());
    }

    #[test]
    fn difficulty_table_with_truth() {
        use Answer::*;
        let cfg = VoteConfig::default();
        let mut recs = task_with("a", &[Forest; 15]);
        recs.extend(task_with("b", &[NonForest; 15]));
        let mut hard = vec![Forest; 5];
        hard.extend(vec![NonForest; 5]);
        hard.extend(vec![Undefined; 5]);
        recs.extend(task_with("c", &hard));
        let (results, incomplete) = aggregate(&recs, &cfg).unwrap();
        assert!(incomplete.is_empty());
        let tables = difficulty_tables(&results, None);
        assert_eq!((tables.overall.easy, tables.overall.hard), (2, 1));
        assert!(tables.accuracy_by_difficulty.is_none());

        // c's consensus is one of F/NF/U; make its reference something else.
        let c_cons = results.iter().find(|r| r.task_id == "c").unwrap().consensus;
        let c_truth = if c_cons == Forest {
            SegmentLabel::NonForest
        } else {
            SegmentLabel::Forest
        };
        let truth = TruthIndex {
            entries: [
                ("a", SegmentLabel::Forest, 1.0),
                ("b", SegmentLabel::NonForest, 1.0),
                ("c", c_truth, 0.75),
            ]
            .into_iter()
            .enumerate()
            .map(|(i, (t, l, h))| {
                (
                    t.to_string(),
                    TaskTruth {
                        segment_id: i as i32,
                        hor: h,
                        gt_u: l,
                        gt_m: l,
                    },
                )
            })
            .collect(),
        };
        let tables = difficulty_tables(&results, Some(&truth));
        let by_d = tables.accuracy_by_difficulty.unwrap();
        assert_eq!(by_d[&Difficulty::Easy].gt_m.percent, Some(100.0));
        assert_eq!(by_d[&Difficulty::Hard].gt_m.percent, Some(0.0));
        assert_eq!(by_d[&Difficulty::Medium].gt_m.percent, None);
        let by_h = tables.accuracy_by_hor.unwrap();
        assert_eq!(by_h[2].1.gt_m.total, 1);
        assert_eq!(by_h[5].1.gt_m.total, 2);
    }
}
