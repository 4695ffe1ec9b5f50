//! Volunteer hit rates, scores, ranking and cohort averages.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::consensus::{counted_answers, AnswerRecord, TaskResult, TruthIndex, VolunteerKind};
use crate::error::{Error, Result};

/// Hit rate in percent.
pub fn hit_rate(hits: u64, total: u64) -> Option<f64> {
    (total > 0).then(|| 100.0 * hits as f64 / total as f64)
}

/// `0.3 × total + 0.7 × hits`, evaluated on integers so the result is the
/// correctly rounded decimal.
pub fn volunteer_score(total: u64, hits: u64) -> f64 {
    (3 * total + 7 * hits) as f64 / 10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolunteerScore {
    pub volunteer_id: String,
    pub volunteer_kind: VolunteerKind,
    pub total_answers: u64,
    pub consensus_hits: u64,
    pub hr_consensus: f64,
    pub vs: f64,
    pub hr_gt_u: Option<f64>,
    pub hr_gt_m: Option<f64>,
}

#[derive(Default)]
struct Tally {
    kind: Option<VolunteerKind>,
    total: u64,
    hits: u64,
    gt: u64,
    gt_u_hits: u64,
    gt_m_hits: u64,
}

/// Score every volunteer over the answers that define consensus (the first
/// `redundancy` per task), ranked by VS descending then volunteer id.
pub fn volunteer_scores(
    records: &[AnswerRecord],
    results: &[TaskResult],
    redundancy: usize,
    truth: Option<&TruthIndex>,
) -> Result<Vec<VolunteerScore>> {
    let by_task: BTreeMap<&str, &TaskResult> =
        results.iter().map(|r| (r.task_id.as_str(), r)).collect();
    if let Some(r) = records
        .iter()
        .find(|r| !by_task.contains_key(r.task_id.as_str()))
    {
        return Err(Error::UnknownTask(r.task_id.clone()));
    }
    let mut tallies: BTreeMap<&str, Tally> = BTreeMap::new();
    for r in counted_answers(records, redundancy) {
        let t = tallies.entry(r.volunteer_id.as_str()).or_default();
        t.kind = Some(match t.kind {
            // A volunteer seen as registered anywhere counts as registered.
            Some(VolunteerKind::Registered) => VolunteerKind::Registered,
            _ => r.volunteer_kind,
        });
        t.total += 1;
        if by_task[r.task_id.as_str()].consensus == r.answer {
            t.hits += 1;
        }
        if let Some(tt) = truth.and_then(|tr| tr.get(&r.task_id)) {
            t.gt += 1;
            t.gt_u_hits += r.answer.matches(tt.gt_u) as u64;
            t.gt_m_hits += r.answer.matches(tt.gt_m) as u64;
        }
    }
    let mut scores: Vec<VolunteerScore> = tallies
        .into_iter()
        .map(|(id, t)| VolunteerScore {
            volunteer_id: id.to_string(),
            volunteer_kind: t.kind.expect("tally has at least one answer"),
            total_answers: t.total,
            consensus_hits: t.hits,
            hr_consensus: hit_rate(t.hits, t.total).expect("non-empty tally"),
            vs: volunteer_score(t.total, t.hits),
            hr_gt_u: hit_rate(t.gt_u_hits, t.gt),
            hr_gt_m: hit_rate(t.gt_m_hits, t.gt),
        })
        .collect();
    rank(&mut scores);
    Ok(scores)
}

/// Sort by VS descending, ties by volunteer id.
pub fn rank(scores: &mut [VolunteerScore]) {
    let key = |s: &VolunteerScore| 3 * s.total_answers + 7 * s.consensus_hits;
    scores.sort_by(|a, b| {
        key(b)
            .cmp(&key(a))
            .then_with(|| a.volunteer_id.cmp(&b.volunteer_id))
    });
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortAverage {
    pub volunteers: usize,
    pub hr_consensus: f64,
    pub hr_gt_u: Option<f64>,
    pub hr_gt_m: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Unweighted per-volunteer means of each hit rate, per volunteer kind.
/// Kinds without volunteers are absent.
pub fn cohort_averages(
    scores: &[VolunteerScore],
) -> Result<BTreeMap<VolunteerKind, CohortAverage>> {
    if scores.is_empty() {
        return Err(Error::Empty("no volunteer scores".into()));
    }
    let mut groups: BTreeMap<VolunteerKind, Vec<&VolunteerScore>> = BTreeMap::new();
    for s in scores {
        groups.entry(s.volunteer_kind).or_default().push(s);
    }
    Ok(groups
        .into_iter()
        .map(|(kind, g)| {
            let avg = CohortAverage {
                volunteers: g.len(),
                hr_consensus: mean(g.iter().map(|s| s.hr_consensus)).expect("non-empty group"),
                hr_gt_u: mean(g.iter().filter_map(|s| s.hr_gt_u)),
                hr_gt_m: mean(g.iter().filter_map(|s| s.hr_gt_m)),
            };
            (kind, avg)
        })
        .collect())
}

pub const RANKING_COLUMNS: [&str; 7] = [
    "user_id",
    "number_answers",
    "consensus_hits",
    "hr_consensus",
    "vs",
    "hr_gt_u",
    "hr_gt_m",
];

/// One row of the ranking export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub user_id: String,
    pub number_answers: u64,
    pub consensus_hits: u64,
    pub hr_consensus: f64,
    pub vs: f64,
    pub hr_gt_u: Option<f64>,
    pub hr_gt_m: Option<f64>,
}

impl From<&VolunteerScore> for RankingRow {
    fn from(s: &VolunteerScore) -> Self {
        RankingRow {
            user_id: s.volunteer_id.clone(),
            number_answers: s.total_answers,
            consensus_hits: s.consensus_hits,
            hr_consensus: s.hr_consensus,
            vs: s.vs,
            hr_gt_u: s.hr_gt_u,
            hr_gt_m: s.hr_gt_m,
        }
    }
}

pub fn write_ranking_csv<W: Write>(rows: &[RankingRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(RANKING_COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("ranking csv", e))?;
    Ok(())
}

pub fn read_ranking_csv<R: Read>(input: R) -> Result<Vec<RankingRow>> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.iter().ne(RANKING_COLUMNS) {
        return Err(Error::Schema(format!(
            "ranking csv header must be {}, found {}",
            RANKING_COLUMNS.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}
