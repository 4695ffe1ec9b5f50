//! Seeded synthetic volunteers answering tasks drawn from a segment ground
//! truth. Volunteers are conditionally independent given the true label.

use std::collections::BTreeSet;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::consensus::{sort_records, AnswerRecord, Difficulty, VolunteerKind};
use crate::error::{Error, Result};
use crate::groundtruth::SegmentGT;
use crate::label::{Answer, SegmentLabel};
use crate::rng::rng_for;
use crate::tasks::task_id_for;

/// Answer times: log-normal with a median per difficulty proxy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationLaw {
    /// Median seconds for Easy, Medium and Hard segments.
    pub median_seconds: [f64; 3],
    /// Standard deviation of the log duration.
    pub sigma: f64,
}

impl Default for DurationLaw {
    fn default() -> Self {
        DurationLaw {
            median_seconds: [6.0, 9.0, 13.0],
            sigma: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolunteerModel {
    pub volunteer_id: String,
    pub volunteer_kind: VolunteerKind,
    /// `confusion[i][j]`: probability of answering `Answer::ALL[j]` when the
    /// true label is `Answer::ALL[i]`.
    pub confusion: [[f64; 4]; 4],
    pub duration: DurationLaw,
}

impl VolunteerModel {
    pub fn perfect(id: impl Into<String>, kind: VolunteerKind) -> Self {
        let mut confusion = [[0.0; 4]; 4];
        for (i, row) in confusion.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        VolunteerModel {
            volunteer_id: id.into(),
            volunteer_kind: kind,
            confusion,
            duration: DurationLaw::default(),
        }
    }

    /// Right with probability `accuracy` on Forest/NonForest, otherwise the
    /// other cover class. Undefined segments are answered Undefined with the
    /// same probability, the rest split between the cover classes.
    pub fn binary(id: impl Into<String>, kind: VolunteerKind, accuracy: f64) -> Self {
        let miss = 1.0 - accuracy;
        let confusion = [
            [accuracy, miss, 0.0, 0.0],
            [miss, accuracy, 0.0, 0.0],
            [miss / 2.0, miss / 2.0, accuracy, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ];
        VolunteerModel {
            volunteer_id: id.into(),
            volunteer_kind: kind,
            confusion,
            duration: DurationLaw::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.confusion.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!(
                    "volunteer {}: confusion row {} is not a distribution",
                    self.volunteer_id,
                    Answer::ALL[i]
                )));
            }
        }
        let d = &self.duration;
        if d.median_seconds
            .iter()
            .any(|m| !(*m > 0.0 && m.is_finite()))
            || !(d.sigma >= 0.0 && d.sigma.is_finite())
        {
            return Err(Error::InvalidParameter(format!(
                "volunteer {}: invalid duration law",
                self.volunteer_id
            )));
        }
        Ok(())
    }

    fn answer(&self, truth: SegmentLabel, rng: &mut impl Rng) -> Answer {
        let row = &self.confusion[Answer::from(truth).index()];
        let mut u: f64 = rng.random();
        for (j, p) in row.iter().enumerate() {
            if u < *p {
                return Answer::ALL[j];
            }
            u -= p;
        }
        // Rounding left a sliver of mass; take the last reachable answer.
        Answer::ALL[row.iter().rposition(|p| *p > 0.0).unwrap_or(0)]
    }
}

/// A homogeneous volunteer population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub size: usize,
    /// Per-class accuracy; `None` builds perfect volunteers.
    pub accuracy: Option<f64>,
    /// Share of the pool that is anonymous.
    pub anonymous_share: f64,
    pub duration: DurationLaw,
}

impl Default for PoolSpec {
    fn default() -> Self {
        PoolSpec {
            size: 40,
            accuracy: Some(0.85),
            anonymous_share: 0.25,
            duration: DurationLaw::default(),
        }
    }
}

impl PoolSpec {
    /// Volunteers `sim-0000`, `sim-0001`, ...; the last ⌊size × share⌉ are anonymous.
    pub fn build(&self) -> Result<Vec<VolunteerModel>> {
        if !(0.0..=1.0).contains(&self.anonymous_share) {
            return Err(Error::InvalidParameter(
                "anonymous_share must lie in [0, 1]".into(),
            ));
        }
        if let Some(a) = self.accuracy {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::InvalidParameter(format!(
                    "accuracy {a} outside [0, 1]"
                )));
            }
        }
        let anonymous = (self.size as f64 * self.anonymous_share).round() as usize;
        Ok((0..self.size)
            .map(|i| {
                let id = format!("sim-{i:04}");
                let kind = if i >= self.size - anonymous {
                    VolunteerKind::Anonymous
                } else {
                    VolunteerKind::Registered
                };
                let mut v = match self.accuracy {
                    Some(a) => VolunteerModel::binary(id, kind, a),
                    None => VolunteerModel::perfect(id, kind),
                };
                v.duration = self.duration;
                v
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub workflow_id: String,
    pub redundancy: usize,
    pub seed: u64,
    /// Time of the first answer.
    #[serde(with = "crate::consensus::timestamp")]
    pub start: DateTime<Utc>,
}

impl SimParams {
    pub fn new(workflow_id: impl Into<String>, redundancy: usize, seed: u64) -> Self {
        SimParams {
            workflow_id: workflow_id.into(),
            redundancy,
            seed,
            start: Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap(),
        }
    }
}

/// Difficulty proxy used to pick a duration median.
fn proxy(hor: f64) -> Difficulty {
    if hor >= 0.9 {
        Difficulty::Easy
    } else if hor >= 0.7 {
        Difficulty::Medium
    } else {
        Difficulty::Hard
    }
}

/// One task per segment of `seg_gt`, each answered by `redundancy` distinct
/// volunteers sampled without replacement. Every task draws from its own
/// stream derived from the seed and task id.
pub fn simulate_campaign(
    seg_gt: &SegmentGT,
    pool: &[VolunteerModel],
    params: &SimParams,
) -> Result<Vec<AnswerRecord>> {
    let r = params.redundancy;
    if r == 0 {
        return Err(Error::InvalidParameter(
            "redundancy must be at least 1".into(),
        ));
    }
    if pool.len() < r {
        return Err(Error::InvalidParameter(format!(
            "pool of {} volunteers is smaller than R = {r}",
            pool.len()
        )));
    }
    let ids: BTreeSet<_> = pool.iter().map(|v| v.volunteer_id.as_str()).collect();
    if ids.len() != pool.len() {
        return Err(Error::InvalidParameter(
            "volunteer ids must be unique".into(),
        ));
    }
    for v in pool {
        v.validate()?;
    }
    let mut out = Vec::with_capacity(seg_gt.entries.len() * r);
    for (n, (&segment, entry)) in seg_gt.entries.iter().enumerate() {
        let task_id = task_id_for(&params.workflow_id, segment);
        let mut rng = rng_for(params.seed, &[b"simulate", task_id.as_bytes()]);
        let task_start = params.start + Duration::minutes(n as i64);
        let bucket = proxy(entry.hor) as usize;
        for (slot, who) in sample(&mut rng, pool.len(), r).into_iter().enumerate() {
            let v = &pool[who];
            let answer = v.answer(entry.label, &mut rng);
            let law = LogNormal::new(v.duration.median_seconds[bucket].ln(), v.duration.sigma)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let ms = (law.sample(&mut rng) * 1000.0).round().max(1.0) as i64;
            let started_at = task_start + Duration::seconds(slot as i64);
            out.push(AnswerRecord {
                classification_id: format!("{task_id}-{slot:03}"),
                volunteer_id: v.volunteer_id.clone(),
                volunteer_kind: v.volunteer_kind,
                workflow_id: params.workflow_id.clone(),
                task_id: task_id.clone(),
                answer,
                started_at,
                finished_at: started_at + Duration::milliseconds(ms),
            });
        }
    }
    sort_records(&mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::{aggregate, write_answers_csv, VoteConfig};
    use crate::groundtruth::{segment_gt_from_homogeneity, GtVariant, Homogeneity};

    fn binary_gt(n: usize) -> SegmentGT {
        let h = (0..n)
            .map(|i| {
                let h = if i % 2 == 0 {
                    Homogeneity::from_counts(9, 1)
                } else {
                    Homogeneity::from_counts(0, 10)
                };
                (i as i32, h.unwrap())
            })
            .collect();
        segment_gt_from_homogeneity(&h, GtVariant::Majority)
    }

    #[test]
    fn perfect_pool_is_unanimous() {
        let gt = binary_gt(20);
        let pool = PoolSpec {
            size: 15,
            accuracy: None,
            ..Default::default()
        }
        .build()
        .unwrap();
        let recs = simulate_campaign(&gt, &pool, &SimParams::new("w", 15, 3)).unwrap();
        assert_eq!(recs.len(), 300);
        let (results, _) = aggregate(&recs, &VoteConfig::default()).unwrap();
        for (res, (_, e)) in results.iter().zip(&gt.entries) {
            assert_eq!(res.consensus, Answer::from(e.label));
            assert_eq!(res.entropy_norm, 0.0);
        }
    }

    #[test]
    fn deterministic_csv() {
        let gt = binary_gt(30);
        let pool = PoolSpec::default().build().unwrap();
        let run = |seed| {
            let mut buf = Vec::new();
            write_answers_csv(
                &simulate_campaign(&gt, &pool, &SimParams::new("w", 15, seed)).unwrap(),
                &mut buf,
            )
            .unwrap();
            buf
        };
        assert_eq!(run(42), run(42));
        assert_ne!(run(42), run(43));
    }

    #[test]
    fn distinct_volunteers_per_task() {
        let pool = PoolSpec {
            size: 15,
            ..Default::default()
        }
        .build()
        .unwrap();
        let recs = simulate_campaign(&binary_gt(5), &pool, &SimParams::new("w", 15, 0)).unwrap();
        for chunk in recs.chunks(15) {
            let ids: BTreeSet<_> = chunk.iter().map(|r| &r.volunteer_id).collect();
            assert_eq!(ids.len(), 15);
        }
        assert!(
            simulate_campaign(&binary_gt(5), &pool[..14], &SimParams::new("w", 15, 0)).is_err()
        );
    }

    #[test]
    fn invalid_confusion_is_rejected() {
        let mut v = VolunteerModel::binary("x", VolunteerKind::Registered, 0.7);
        assert!(v.validate().is_ok());
        v.confusion[0][0] = 0.5;
        assert!(v.validate().is_err());
    }
}
