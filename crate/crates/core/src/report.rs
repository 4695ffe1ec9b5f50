//! Campaign report: Markdown tables plus CSV appendices.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::changedetect::ChangeReport;
use crate::consensus::{
    ConvergenceReport, DifficultyRow, DifficultyTables, GroupTime, TimeStats, VolunteerKind,
};
use crate::error::{Error, Result};
use crate::groundtruth::{Accuracy, ClassAccuracy};
use crate::label::{Cover, SegmentLabel};
use crate::scoring::{write_ranking_csv, CohortAverage, RankingRow, VolunteerScore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub workflow_id: String,
    pub tasks: usize,
    pub incomplete_tasks: usize,
    pub answers: usize,
    pub volunteers: usize,
    pub redundancy: usize,
    pub seed: u64,
}

/// Consensus accuracy against each available reference.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub gt_u: Option<Accuracy<SegmentLabel>>,
    pub gt_m: Option<Accuracy<SegmentLabel>>,
    /// Pixel level, consensus broadcast to pixels.
    pub gt_prodes: Option<Accuracy<Cover>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub summary: CampaignSummary,
    pub convergence: Option<ConvergenceReport>,
    pub accuracy: AccuracySummary,
    pub difficulty: DifficultyTables,
    pub times: TimeStats,
    pub ranking: Vec<VolunteerScore>,
    pub cohorts: BTreeMap<VolunteerKind, CohortAverage>,
    pub change: Option<ChangeReport>,
}

/// Rows of the volunteer ranking shown in the Markdown body; the CSV
/// appendix has all of them.
pub const RANKING_ROWS_SHOWN: usize = 20;

const ABSENT: &str = "—";

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| ABSENT.to_string(), |v| format!("{v:.2}%"))
}

fn acc(a: Option<&ClassAccuracy>) -> String {
    pct(a.and_then(|a| a.percent))
}

fn secs(g: Option<&GroupTime>) -> String {
    g.map_or_else(
        || ABSENT.to_string(),
        |g| format!("{:.2} s ({})", g.mean_seconds, g.answers),
    )
}

fn opt_num(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn table(out: &mut String, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    for row in rows {
        let _ = writeln!(out, "| {} |", row.join(" | "));
    }
    out.push('\n');
}

fn difficulty_cells(label: &str, row: &DifficultyRow) -> Vec<String> {
    let mut cells = vec![label.to_string(), row.total().to_string()];
    cells.extend(
        [row.easy, row.medium, row.hard]
            .iter()
            .zip(row.percent)
            .map(|(n, p)| format!("{n} ({p:.2}%)")),
    );
    cells
}

fn accuracy_rows<T: Ord + Copy>(name: &str, a: Option<&Accuracy<T>>, classes: &[T]) -> Vec<String> {
    let mut row = vec![name.to_string(), acc(a.map(|a| &a.overall))];
    for c in classes {
        row.push(acc(a.and_then(|a| a.per_class.get(c))));
    }
    row
}

impl CampaignReport {
    pub fn render_markdown(&self) -> String {
        let mut out = String::new();
        let s = &self.summary;
        let _ = writeln!(out, "# Campaign report: {}\n", s.workflow_id);

        out.push_str("## Summary\n\n");
        table(
            &mut out,
            &[
                "Workflow",
                "Tasks",
                "Incomplete tasks",
                "Answers",
                "Volunteers",
                "Redundancy",
                "Seed",
            ],
            [vec![
                s.workflow_id.clone(),
                s.tasks.to_string(),
                s.incomplete_tasks.to_string(),
                s.answers.to_string(),
                s.volunteers.to_string(),
                s.redundancy.to_string(),
                s.seed.to_string(),
            ]],
        );

        out.push_str("## Consensus convergence\n\n");
        match &self.convergence {
            Some(c) => table(
                &mut out,
                &["k", "Agreement with full consensus"],
                c.ks.iter()
                    .zip(&c.percent)
                    .map(|(k, p)| vec![k.to_string(), pct(Some(*p))]),
            ),
            None => out.push_str("Not computed.\n\n"),
        }

        out.push_str("## Accuracy by ground truth\n\n");
        let a = &self.accuracy;
        let seg_classes = [
            SegmentLabel::Forest,
            SegmentLabel::NonForest,
            SegmentLabel::Undefined,
        ];
        table(
            &mut out,
            &["Reference", "Overall", "Forest", "NonForest", "Undefined"],
            [
                accuracy_rows("GT-U", a.gt_u.as_ref(), &seg_classes),
                accuracy_rows("GT-M", a.gt_m.as_ref(), &seg_classes),
                {
                    let mut r = accuracy_rows(
                        "GT-PRODES (pixels)",
                        a.gt_prodes.as_ref(),
                        &[Cover::Forest, Cover::NonForest],
                    );
                    r.push(ABSENT.into());
                    r
                },
            ],
        );

        out.push_str("## Task difficulty\n\n");
        let d = &self.difficulty;
        let mut rows = vec![difficulty_cells("All tasks", &d.overall)];
        rows.extend(
            d.per_consensus
                .iter()
                .map(|(a, r)| difficulty_cells(&format!("Consensus {a}"), r)),
        );
        table(
            &mut out,
            &["Tasks", "Count", "Easy", "Medium", "Hard"],
            rows,
        );

        out.push_str("## Answer times\n\n");
        let t = &self.times;
        let mut rows = vec![vec!["All answers".to_string(), secs(t.overall.as_ref())]];
        rows.extend(
            t.by_consensus
                .iter()
                .map(|(k, g)| vec![format!("Consensus {k}"), secs(Some(g))]),
        );
        rows.extend(
            t.by_volunteer_kind
                .iter()
                .map(|(k, g)| vec![format!("{} volunteers", k.as_str()), secs(Some(g))]),
        );
        rows.extend(
            t.by_difficulty
                .iter()
                .map(|(k, g)| vec![format!("{k:?} tasks"), secs(Some(g))]),
        );
        table(&mut out, &["Group", "Mean time (answers)"], rows);
        let _ = writeln!(
            out,
            "{} answers outside (0 s, 300 s] were excluded.\n",
            t.excluded
        );

        out.push_str("## Accuracy by difficulty\n\n");
        match &d.accuracy_by_difficulty {
            Some(by) => table(
                &mut out,
                &["Difficulty", "Tasks", "GT-U", "GT-M"],
                by.iter().map(|(k, p)| {
                    vec![
                        format!("{k:?}"),
                        p.gt_u.total.to_string(),
                        acc(Some(&p.gt_u)),
                        acc(Some(&p.gt_m)),
                    ]
                }),
            ),
            None => out.push_str("No ground truth supplied.\n\n"),
        }

        out.push_str("## Accuracy by HoR\n\n");
        match &d.accuracy_by_hor {
            Some(by) => table(
                &mut out,
                &["HoR", "Tasks", "GT-U", "GT-M"],
                by.iter().map(|(k, p)| {
                    vec![
                        k.clone(),
                        p.gt_u.total.to_string(),
                        acc(Some(&p.gt_u)),
                        acc(Some(&p.gt_m)),
                    ]
                }),
            ),
            None => out.push_str("No ground truth supplied.\n\n"),
        }

        out.push_str("## Volunteer ranking\n\n");
        table(
            &mut out,
            &[
                "Rank",
                "Volunteer",
                "Answers",
                "Hits",
                "HR consensus",
                "VS",
                "HR GT-U",
                "HR GT-M",
            ],
            self.ranking
                .iter()
                .take(RANKING_ROWS_SHOWN)
                .enumerate()
                .map(|(i, v)| {
                    vec![
                        (i + 1).to_string(),
                        v.volunteer_id.clone(),
                        v.total_answers.to_string(),
                        v.consensus_hits.to_string(),
                        pct(Some(v.hr_consensus)),
                        format!("{:.1}", v.vs),
                        pct(v.hr_gt_u),
                        pct(v.hr_gt_m),
                    ]
                }),
        );
        if self.ranking.len() > RANKING_ROWS_SHOWN {
            let _ = writeln!(
                out,
                "{} volunteers in total; see ranking.csv.\n",
                self.ranking.len()
            );
        }

        out.push_str("## Cohort averages\n\n");
        table(
            &mut out,
            &["Volunteers", "Count", "HR consensus", "HR GT-U", "HR GT-M"],
            self.cohorts.iter().map(|(k, c)| {
                vec![
                    k.as_str().to_string(),
                    c.volunteers.to_string(),
                    pct(Some(c.hr_consensus)),
                    pct(c.hr_gt_u),
                    pct(c.hr_gt_m),
                ]
            }),
        );

        if let Some(c) = &self.change {
            let _ = writeln!(out, "## Change detection ({} → {})\n", c.epoch_a, c.epoch_b);
            let _ = writeln!(
                out,
                "{} reference change pixels, {} detected: {} detection.\n",
                c.gt_change_pixels,
                c.detected_pixels,
                c.detection_rate
                    .map_or_else(|| ABSENT.to_string(), |r| format!("{r:.1}%"))
            );
            let (p, t) = (&c.pixel_breakdown, &c.task_breakdown);
            table(
                &mut out,
                &["Outcome", "Pixels", "Tasks"],
                [
                    ("Detected (NonForest)", p.detected, t.detected),
                    ("Missed (Forest)", p.missed, t.missed),
                    ("Undefined", p.undefined, t.undefined),
                    ("Tie", p.tie, t.tie),
                    ("Segment too small", p.small, t.small),
                    ("No consensus", p.no_consensus, t.no_consensus),
                    ("Unsegmented", p.unsegmented, t.unsegmented),
                ]
                .into_iter()
                .map(|(k, a, b)| vec![k.to_string(), a.to_string(), b.to_string()]),
            );
        }
        out
    }

    /// `(file name, CSV text)` pairs.
    pub fn csv_appendices(&self) -> Result<Vec<(String, String)>> {
        let mut files = Vec::new();
        let to_string =
            |buf: Vec<u8>| String::from_utf8(buf).map_err(|e| Error::Invariant(e.to_string()));
        let write = |header: &[&str], rows: Vec<Vec<String>>| -> Result<String> {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            to_string(
                w.into_inner()
                    .map_err(|e| Error::Invariant(e.to_string()))?,
            )
        };

        if let Some(c) = &self.convergence {
            let rows =
                c.ks.iter()
                    .zip(&c.percent)
                    .map(|(k, p)| vec![k.to_string(), p.to_string()])
                    .collect();
            files.push(("convergence.csv".into(), write(&["k", "percent"], rows)?));
        }

        let a = &self.accuracy;
        let mut rows = Vec::new();
        let mut push = |name: &str, overall: &ClassAccuracy, per: Vec<(String, &ClassAccuracy)>| {
            rows.push(vec![
                name.into(),
                "overall".into(),
                overall.correct.to_string(),
                overall.total.to_string(),
                opt_num(overall.percent),
            ]);
            for (k, c) in per {
                rows.push(vec![
                    name.into(),
                    k,
                    c.correct.to_string(),
                    c.total.to_string(),
                    opt_num(c.percent),
                ]);
            }
        };
        for (name, g) in [("GT-U", &a.gt_u), ("GT-M", &a.gt_m)] {
            if let Some(g) = g {
                push(
                    name,
                    &g.overall,
                    g.per_class
                        .iter()
                        .map(|(k, v)| (k.to_string(), v))
                        .collect(),
                );
            }
        }
        if let Some(g) = &a.gt_prodes {
            push(
                "GT-PRODES",
                &g.overall,
                g.per_class
                    .iter()
                    .map(|(k, v)| (k.to_string(), v))
                    .collect(),
            );
        }
        files.push((
            "accuracy.csv".into(),
            write(&["reference", "class", "correct", "total", "percent"], rows)?,
        ));

        let d = &self.difficulty;
        let mut rows = vec![diff_csv("all", &d.overall)];
        rows.extend(d.per_consensus.iter().map(|(k, r)| diff_csv(k.as_str(), r)));
        files.push((
            "difficulty.csv".into(),
            write(
                &[
                    "tasks",
                    "easy",
                    "medium",
                    "hard",
                    "easy_pct",
                    "medium_pct",
                    "hard_pct",
                ],
                rows,
            )?,
        ));

        let t = &self.times;
        let mut rows = Vec::new();
        let mut time_row = |group: &str, key: String, g: &GroupTime| {
            rows.push(vec![
                group.to_string(),
                key,
                g.mean_seconds.to_string(),
                g.answers.to_string(),
            ])
        };
        if let Some(g) = &t.overall {
            time_row("overall", "all".into(), g);
        }
        t.by_consensus
            .iter()
            .for_each(|(k, g)| time_row("consensus", k.to_string(), g));
        t.by_volunteer_kind
            .iter()
            .for_each(|(k, g)| time_row("volunteer_kind", k.as_str().into(), g));
        t.by_difficulty
            .iter()
            .for_each(|(k, g)| time_row("difficulty", format!("{k:?}"), g));
        files.push((
            "times.csv".into(),
            write(&["group", "key", "mean_seconds", "answers"], rows)?,
        ));

        let cut = |by: Vec<(String, &crate::consensus::GtAccuracyPair)>| {
            by.into_iter()
                .map(|(k, p)| {
                    vec![
                        k,
                        p.gt_u.total.to_string(),
                        opt_num(p.gt_u.percent),
                        opt_num(p.gt_m.percent),
                    ]
                })
                .collect::<Vec<_>>()
        };
        if let Some(by) = &d.accuracy_by_difficulty {
            let rows = cut(by.iter().map(|(k, p)| (format!("{k:?}"), p)).collect());
            files.push((
                "accuracy_by_difficulty.csv".into(),
                write(&["difficulty", "tasks", "gt_u", "gt_m"], rows)?,
            ));
        }
        if let Some(by) = &d.accuracy_by_hor {
            let rows = cut(by.iter().map(|(k, p)| (k.clone(), p)).collect());
            files.push((
                "accuracy_by_hor.csv".into(),
                write(&["hor_bin", "tasks", "gt_u", "gt_m"], rows)?,
            ));
        }

        let mut buf = Vec::new();
        let ranking: Vec<RankingRow> = self.ranking.iter().map(RankingRow::from).collect();
        write_ranking_csv(&ranking, &mut buf)?;
        files.push(("ranking.csv".into(), to_string(buf)?));

        let rows = self
            .cohorts
            .iter()
            .map(|(k, c)| {
                vec![
                    k.as_str().into(),
                    c.volunteers.to_string(),
                    c.hr_consensus.to_string(),
                    opt_num(c.hr_gt_u),
                    opt_num(c.hr_gt_m),
                ]
            })
            .collect();
        files.push((
            "cohorts.csv".into(),
            write(
                &[
                    "volunteer_kind",
                    "volunteers",
                    "hr_consensus",
                    "hr_gt_u",
                    "hr_gt_m",
                ],
                rows,
            )?,
        ));
        Ok(files)
    }
}

fn diff_csv(name: &str, r: &DifficultyRow) -> Vec<String> {
    let mut row = vec![
        name.to_string(),
        r.easy.to_string(),
        r.medium.to_string(),
        r.hard.to_string(),
    ];
    row.extend(r.percent.iter().map(|p| p.to_string()));
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::difficulty_tables;

    fn minimal() -> CampaignReport {
        CampaignReport {
            summary: CampaignSummary {
                workflow_id: "wf".into(),
                tasks: 0,
                incomplete_tasks: 0,
                answers: 0,
                volunteers: 0,
                redundancy: 15,
                seed: 1,
            },
            convergence: None,
            accuracy: AccuracySummary::default(),
            difficulty: difficulty_tables(&[], None),
            times: crate::consensus::time_stats(&[], &[]),
            ranking: vec![],
            cohorts: BTreeMap::new(),
            change: None,
        }
    }

    #[test]
    fn absent_ground_truth_renders_as_absent() {
        let md = minimal().render_markdown();
        assert!(md.contains("| GT-U | — | — | — | — |"));
        assert!(md.contains("No ground truth supplied."));
        assert!(!md.contains("Change detection"));
        let files = minimal().csv_appendices().unwrap();
        assert!(files.iter().any(|(n, _)| n == "ranking.csv"));
        assert!(!files.iter().any(|(n, _)| n == "accuracy_by_hor.csv"));
    }

    #[test]
    fn change_section_appears_with_change_report() {
        use crate::changedetect::Breakdown;
        let mut r = minimal();
        let pixels = Breakdown {
            detected: 570,
            missed: 115,
            undefined: 302,
            tie: 1197,
            ..Default::default()
        };
        r.change = Some(ChangeReport::from_breakdown(
            "2013",
            "2016",
            pixels,
            Breakdown::default(),
        ));
        let md = r.render_markdown();
        assert!(md.contains("## Change detection (2013 → 2016)"));
        assert!(md.contains("26.1% detection"));
    }
}
