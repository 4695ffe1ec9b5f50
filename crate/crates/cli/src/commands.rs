use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use foresteyes_core::changedetect::{detection_report, gt_change, ChangeReport};
use foresteyes_core::consensus::{
    aggregate, consensus_by_segment, convergence, difficulty_tables, ingest_answers, time_stats,
    write_answers_csv, write_rejections_csv, AnswerRecord, ColumnMapping, ConvergenceReport,
    DifficultyTables, TaskResult, TimeStats, TruthIndex, VoteConfig,
};
use foresteyes_core::decompose::{fit_pca, pca_composite};
use foresteyes_core::groundtruth::{
    binarize, build_segment_gt, hor_histogram, pixel_accuracy, read_segment_gt_csv,
    segment_accuracy, segment_gt_rows, write_segment_gt_csv, BinaryGT, ClassMap, GtVariant,
    SegmentGT, UndefinedPolicy,
};
use foresteyes_core::raster::container::{container_paths, read_u8_plane};
use foresteyes_core::raster::{
    compose, crop_resample, load_band_stack, ndvi, render_index, save_band_stack, GeoRef, Stretch,
};
use foresteyes_core::report::{AccuracySummary, CampaignReport, CampaignSummary};
use foresteyes_core::scoring::{
    cohort_averages, volunteer_scores, write_ranking_csv, RankingRow, VolunteerScore,
};
use foresteyes_core::segment::{
    ift_slic, mask_slic, refine_kmeans, slic, IftSlicParams, Mask, MaskSlicParams, RefineParams,
    SlicParams,
};
use foresteyes_core::simulate::{simulate_campaign, PoolSpec, SimParams};
use foresteyes_core::tasks::{
    generate_tasks_for, load_manifest, save_manifest, select_tasks_by_hor,
    select_tasks_for_refinement, task_id_for, HorSelection, PanelKind, TaskOptions, TaskSpec,
};
use foresteyes_core::{
    Answer, BandStack, Error, PixelRect, Result, RgbComposite, SegmentId, Segmentation,
};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Algorithm, CampaignConfig};
use crate::{Command, GtChoice};

/// Output directory plus the artifacts written by this invocation.
struct Ctx {
    cfg: CampaignConfig,
    dir: PathBuf,
    outputs: Vec<String>,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn record(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    /// Explicit flag, else `<campaign>/<name>`.
    fn input(&self, flag: &Option<PathBuf>, name: &str) -> PathBuf {
        flag.clone().unwrap_or_else(|| self.path(name))
    }

    /// Explicit flag, else `<campaign>/<name>` when it exists.
    fn optional(&self, flag: &Option<PathBuf>, name: &str) -> Option<PathBuf> {
        flag.clone()
            .or_else(|| Some(self.path(name)).filter(|p| exists(p)))
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(name, e))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.record(name);
        Ok(())
    }

    fn write_with(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
    ) -> Result<()> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        self.record(name);
        Ok(())
    }
}

/// A file, or a band-stack stem whose header exists.
fn exists(path: &Path) -> bool {
    path.exists() || container_paths(path).0.exists()
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

fn parse_answers(names: &[String]) -> Result<Vec<Answer>> {
    names.iter().map(|s| s.trim().parse()).collect()
}

pub fn run(command: &Command, cfg: CampaignConfig) -> Result<Value> {
    cfg.validate()?;
    let dir = cfg.campaign_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut ctx = Ctx {
        cfg,
        dir,
        outputs: Vec::new(),
    };
    let name = command.name();
    let metrics = match command {
        Command::Ingest(a) => ingest(&mut ctx, a)?,
        Command::Compose(a) => compose_cmd(&mut ctx, a)?,
        Command::Pca(a) => pca(&mut ctx, a)?,
        Command::Segment(a) => segment(&mut ctx, a)?,
        Command::Refine(a) => refine(&mut ctx, a)?,
        Command::Gt(a) => gt(&mut ctx, a)?,
        Command::Tasks(a) => tasks(&mut ctx, a)?,
        Command::Aggregate(a) => aggregate_cmd(&mut ctx, a)?,
        Command::Score(a) => score(&mut ctx, a)?,
        Command::Convergence(a) => convergence_cmd(&mut ctx, a)?,
        Command::Times(a) => times(&mut ctx, a)?,
        Command::Report(a) => report(&mut ctx, a)?,
        Command::Simulate(a) => simulate(&mut ctx, a)?,
        Command::Changedetect(a) => changedetect(&mut ctx, a)?,
    };
    let cfg = ctx.cfg.clone();
    ctx.write_json(&format!("config.{name}.json"), &cfg)?;
    Ok(json!({
        "status": "ok",
        "command": name,
        "workflow_id": ctx.cfg.workflow_id,
        "seed": ctx.cfg.seed,
        "out_dir": ctx.dir.display().to_string(),
        "outputs": ctx.outputs,
        "metrics": metrics,
    }))
}

fn ingest(ctx: &mut Ctx, a: &crate::IngestArgs) -> Result<Value> {
    let mapping = a.mapping.as_deref().map(ColumnMapping::load).transpose()?;
    let rep = ingest_answers(&a.answers, mapping.as_ref())?;
    ctx.write_with("answers.csv", |w| write_answers_csv(&rep.records, w))?;
    ctx.write_with("rejected.csv", |w| write_rejections_csv(&rep.rejected, w))?;
    let tasks: BTreeSet<_> = rep.records.iter().map(|r| &r.task_id).collect();
    let volunteers: BTreeSet<_> = rep.records.iter().map(|r| &r.volunteer_id).collect();
    Ok(json!({
        "accepted": rep.records.len(),
        "rejected": rep.rejected.len(),
        "tasks": tasks.len(),
        "volunteers": volunteers.len(),
    }))
}

fn raster_input(ctx: &Ctx, flag: &Option<PathBuf>) -> Result<BandStack> {
    let path = flag
        .clone()
        .or_else(|| ctx.cfg.raster.clone())
        .ok_or_else(|| {
            Error::InvalidParameter(
                "no input raster: pass --raster or set \"raster\" in the config".into(),
            )
        })?;
    load_band_stack(&path)
}

fn stretch_of(values: [f64; 2]) -> Result<Stretch> {
    Stretch::new(values[0], values[1])
}

fn compose_cmd(ctx: &mut Ctx, a: &crate::ComposeArgs) -> Result<Value> {
    let mut stack = raster_input(ctx, &a.raster)?;
    if a.crop.is_some() || a.pixel_size.is_some() {
        let window = match &a.crop {
            Some(v) => PixelRect::new(v[0], v[1], v[2], v[3]),
            None => PixelRect::new(0, 0, stack.height(), stack.width()),
        };
        let px = a.pixel_size.unwrap_or_else(|| stack.pixel_size());
        stack = crop_resample(&stack, window, px)?;
        save_band_stack(&stack, &ctx.path("prepared"))?;
        ctx.record("prepared.bsj");
        ctx.record("prepared.bsd");
    }
    let stretch = match &a.stretch {
        Some(v) => stretch_of(*v)?,
        None => stretch_of([2.0, 98.0])?,
    };
    let mut panels = Vec::new();
    if let Some(b) = &a.bands {
        panels.push((a.name.clone(), compose(&stack, *b, stretch)?));
    } else if let Some(n) = &a.ndvi {
        panels.push((a.name.clone(), render_index(&ndvi(&stack, n[0], n[1])?)));
    } else {
        for p in &ctx.cfg.panels {
            let img = match (p.kind, p.bands, p.ndvi) {
                (PanelKind::Ndvi, _, Some([red, nir])) => render_index(&ndvi(&stack, red, nir)?),
                (_, Some(b), _) => compose(&stack, b, stretch_of(p.stretch)?)?,
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "panel {} needs \"bands\" (or \"ndvi\" for NDVI panels)",
                        p.kind.as_str()
                    )))
                }
            };
            panels.push((p.kind.as_str().to_string(), img));
        }
    }
    let mut names = Vec::new();
    for (name, img) in &panels {
        let file = format!("{name}.png");
        img.save_png(&ctx.path(&file))?;
        ctx.record(&file);
        names.push(name.clone());
    }
    Ok(
        json!({"panels": names, "width": stack.width(), "height": stack.height(), "bands": stack.band_count()}),
    )
}

fn pca(ctx: &mut Ctx, a: &crate::PcaArgs) -> Result<Value> {
    let stack = raster_input(ctx, &a.raster)?;
    let model = fit_pca(&stack, a.components)?;
    let pcs = pca_composite(&stack, &model)?;
    model.save_json(&ctx.path("pca.json"))?;
    ctx.record("pca.json");
    save_band_stack(&pcs, &ctx.path("pca"))?;
    ctx.record("pca.bsj");
    ctx.record("pca.bsd");
    if pcs.band_count() >= 3 {
        compose(&pcs, [0, 1, 2], Stretch::IDENTITY)?.save_png(&ctx.path("pca.png"))?;
        ctx.record("pca.png");
    }
    let ratio: Vec<f64> = model
        .explained_variance
        .iter()
        .map(|v| v / model.total_variance)
        .collect();
    Ok(json!({"components": a.components, "explained_variance_ratio": ratio}))
}

fn load_composite(path: &Path) -> Result<BandStack> {
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
    {
        RgbComposite::load_png(path)?.to_stack(GeoRef::default())
    } else {
        load_band_stack(path)
    }
}

fn default_composite(ctx: &Ctx, flag: &Option<PathBuf>) -> Result<PathBuf> {
    if let Some(p) = flag {
        return Ok(p.clone());
    }
    let pca = ctx.path("pca");
    if exists(&pca) {
        Ok(pca)
    } else {
        Err(Error::MissingArtifacts(vec![
            "pca.bsj (run `pca` or pass --composite)".into(),
        ]))
    }
}

fn segment(ctx: &mut Ctx, a: &crate::SegmentArgs) -> Result<Value> {
    let s = &mut ctx.cfg.segmentation;
    if let Some(v) = a.algo {
        s.algorithm = v;
    }
    if let Some(v) = a.n {
        s.n_segments = v;
    }
    if let Some(v) = a.compactness {
        s.compactness = v;
    }
    if let Some(v) = a.iterations {
        s.iterations = v;
    }
    if a.mask.is_some() {
        s.mask = a.mask.clone();
    }
    let s = s.clone();
    let composite = load_composite(&default_composite(ctx, &a.composite)?)?;
    let seg = match s.algorithm {
        Algorithm::Slic => slic(
            &composite,
            SlicParams {
                n_segments: s.n_segments,
                compactness: s.compactness,
                iterations: s.iterations,
            },
        )?,
        Algorithm::IftSlic => ift_slic(
            &composite,
            IftSlicParams {
                n_segments: s.n_segments,
                alpha: s.alpha,
                beta: s.beta,
                iterations: s.iterations,
            },
        )?,
        Algorithm::MaskSlic => {
            let path = s
                .mask
                .clone()
                .ok_or_else(|| Error::InvalidParameter("mask-slic needs --mask".into()))?;
            let (h, codes) = read_u8_plane(&path)?;
            let mask = Mask::new(h.width, h.height, codes.iter().map(|&c| c != 0).collect())?;
            let params = MaskSlicParams {
                target_region_px: s.target_region_px,
                compactness: s.compactness,
                iterations: s.iterations,
            };
            mask_slic(&composite, &mask, params)?
        }
    };
    seg.save(&ctx.path(&a.name), composite.geo())?;
    for ext in ["bsj", "bsd", "segments.json"] {
        ctx.record(&format!("{}.{ext}", a.name));
    }
    Ok(json!({"algorithm": s.algorithm, "stats": seg.stats(), "params": seg.params()}))
}

fn load_results(path: &Path) -> Result<Vec<TaskResult>> {
    read_json(path)
}

fn refine(ctx: &mut Ctx, a: &crate::RefineArgs) -> Result<Value> {
    let composite = load_composite(&default_composite(ctx, &a.composite)?)?;
    let (parent, geo) = Segmentation::load(&ctx.input(&a.segmentation, "segments"))?;
    let ids = match &a.segments {
        Some(ids) => ids.clone(),
        None => {
            let results = load_results(&ctx.input(&a.results, "task_results.json"))?;
            let manifest = load_manifest(&ctx.input(&a.manifest, "tasks.jsonl"))?;
            select_tasks_for_refinement(&results, &manifest)?
        }
    };
    let params = RefineParams {
        min_size: a.min_size,
        max_k: a.max_k,
        seed: ctx.cfg.seed,
    };
    let (refined, report) = refine_kmeans(&composite, &parent, &ids, params)?;
    refined.save(&ctx.path(&a.name), &geo)?;
    for ext in ["bsj", "bsd", "segments.json"] {
        ctx.record(&format!("{}.{ext}", a.name));
    }
    ctx.write_json("refine.json", &report)?;
    let discarded: usize = report.iter().map(|r| r.discarded_pixels).sum();
    Ok(json!({"parents": ids.len(), "children": refined.len(), "discarded_pixels": discarded}))
}

fn gt(ctx: &mut Ctx, a: &crate::GtArgs) -> Result<Value> {
    if let Some(v) = &a.forest_classes {
        ctx.cfg.forest_classes = v.clone();
    }
    let plane = a.classmap.clone().or_else(|| ctx.cfg.classmap.clone());
    let legend = a.legend.clone().or_else(|| ctx.cfg.classmap_legend.clone());
    let (Some(plane), Some(legend)) = (plane, legend) else {
        return Err(Error::InvalidParameter(
            "gt needs --classmap and --legend (or config entries)".into(),
        ));
    };
    let (classmap, geo) = ClassMap::load(&plane, &legend)?;
    let mut forest = BTreeSet::new();
    for name in &ctx.cfg.forest_classes {
        let codes = classmap.codes_named(name);
        if codes.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "legend has no class named {name:?}"
            )));
        }
        forest.extend(codes);
    }
    let binary = binarize(&classmap, &forest)?;
    binary.save(&ctx.path("gt_prodes"), &geo)?;
    ctx.record("gt_prodes.bsj");
    ctx.record("gt_prodes.bsd");
    let forest_pixels = binary
        .cells
        .iter()
        .filter(|c| **c == foresteyes_core::Cover::Forest)
        .count();
    let mut metrics = json!({"forest_pixels": forest_pixels, "nonforest_pixels": binary.cells.len() - forest_pixels});
    if let Some(seg_path) = ctx.optional(&a.segmentation, "segments") {
        let (seg, _) = Segmentation::load(&seg_path)?;
        let u = build_segment_gt(&seg, &binary, GtVariant::WithUndefined)?;
        let m = build_segment_gt(&seg, &binary, GtVariant::Majority)?;
        let rows = segment_gt_rows(&u, &m)?;
        ctx.write_with("segment_gt.csv", |w| write_segment_gt_csv(&rows, w))?;
        let hist = hor_histogram(&seg, &binary)?;
        ctx.write_json("hor_histogram.json", &hist)?;
        let undefined = u
            .entries
            .values()
            .filter(|e| e.label == foresteyes_core::SegmentLabel::Undefined)
            .count();
        metrics["segments"] = json!(rows.len());
        metrics["gt_u_undefined"] = json!(undefined);
        metrics["hor_histogram"] = json!(hist.counts);
    }
    Ok(metrics)
}

fn load_segment_gt(path: &Path) -> Result<(SegmentGT, SegmentGT)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_segment_gt_csv(BufReader::new(file))
}

fn tasks(ctx: &mut Ctx, a: &crate::TasksArgs) -> Result<Value> {
    let (seg, _) = Segmentation::load(&ctx.input(&a.segmentation, "segments"))?;
    let mut specs: Vec<(PanelKind, PathBuf)> = Vec::new();
    if a.panels.is_empty() {
        for p in &ctx.cfg.panels {
            specs.push((p.kind, ctx.path(&format!("{}.png", p.kind.as_str()))));
        }
    } else {
        for p in &a.panels {
            let (kind, path) = p.split_once('=').ok_or_else(|| {
                Error::InvalidParameter(format!("--panel expects KIND=PNG, got {p:?}"))
            })?;
            specs.push((kind.parse()?, PathBuf::from(path)));
        }
    }
    let images = specs
        .iter()
        .map(|(k, p)| Ok((*k, RgbComposite::load_png(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let panels: Vec<(PanelKind, &RgbComposite)> = images.iter().map(|(k, img)| (*k, img)).collect();
    let mut options = TaskOptions {
        margin: a.margin,
        ..Default::default()
    };
    if let Some(o) = &a.options {
        options.answer_options = parse_answers(o)?;
    }
    let ids: Vec<SegmentId> = match a.select_pure {
        Some(n_pure) => {
            let (u, _) = load_segment_gt(&ctx.input(&a.segment_gt, "segment_gt.csv"))?;
            select_tasks_by_hor(
                &u,
                HorSelection {
                    n_pure,
                    seed: ctx.cfg.seed,
                },
            )?
        }
        None => seg.segments().iter().map(|s| s.id).collect(),
    };
    let out_root = ctx.cfg.out.clone();
    let specs = generate_tasks_for(
        &seg,
        &ids,
        &panels,
        &options,
        &ctx.cfg.workflow_id,
        &out_root,
    )?;
    save_manifest(&specs, &ctx.path("tasks.jsonl"))?;
    ctx.record("tasks.jsonl");
    let images: usize = specs.iter().map(|t| t.panels.len()).sum();
    Ok(json!({"tasks": specs.len(), "images": images}))
}

/// Task → segment map: the manifest when present, else every segment of the
/// segment reference under the default task naming.
fn task_map(
    ctx: &Ctx,
    manifest: &Option<PathBuf>,
    segment_gt: &Option<PathBuf>,
) -> Result<Option<BTreeMap<String, SegmentId>>> {
    if let Some(path) = ctx.optional(manifest, "tasks.jsonl") {
        let specs = load_manifest(&path)?;
        return Ok(Some(
            specs
                .into_iter()
                .map(|t| (t.task_id, t.segment_id))
                .collect(),
        ));
    }
    if let Some(path) = ctx.optional(segment_gt, "segment_gt.csv") {
        let (u, _) = load_segment_gt(&path)?;
        let wf = &ctx.cfg.workflow_id;
        return Ok(Some(
            u.entries
                .keys()
                .map(|&id| (task_id_for(wf, id), id))
                .collect(),
        ));
    }
    Ok(None)
}

fn truth(
    ctx: &Ctx,
    manifest: &Option<PathBuf>,
    segment_gt: &Option<PathBuf>,
) -> Result<Option<(TruthIndex, SegmentGT, SegmentGT)>> {
    let Some(gt_path) = ctx.optional(segment_gt, "segment_gt.csv") else {
        return Ok(None);
    };
    let (u, m) = load_segment_gt(&gt_path)?;
    let map = task_map(ctx, manifest, segment_gt)?.unwrap_or_default();
    let index = TruthIndex::build(map.iter().map(|(t, s)| (t.as_str(), *s)), &u, &m);
    Ok(Some((index, u, m)))
}

fn load_records(path: &Path) -> Result<Vec<AnswerRecord>> {
    Ok(ingest_answers(path, None)?.records)
}

fn aggregate_cmd(ctx: &mut Ctx, a: &crate::AggregateArgs) -> Result<Value> {
    if let Some(r) = a.redundancy {
        ctx.cfg.redundancy = r;
        ctx.cfg.validate()?;
    }
    let mapping = a.mapping.as_deref().map(ColumnMapping::load).transpose()?;
    let rep = ingest_answers(&ctx.input(&a.answers, "answers.csv"), mapping.as_ref())?;
    ctx.write_with("rejected.csv", |w| write_rejections_csv(&rep.rejected, w))?;
    let manifest = ctx
        .optional(&a.manifest, "tasks.jsonl")
        .map(|p| load_manifest(&p))
        .transpose()?;
    let options = match (&a.options, &manifest) {
        (Some(o), _) => parse_answers(o)?,
        (None, Some(specs)) if !specs.is_empty() => specs[0].answer_options.clone(),
        _ => VoteConfig::default().options,
    };
    let cfg = VoteConfig {
        redundancy: ctx.cfg.redundancy,
        options,
        seed: ctx.cfg.seed,
    };
    let (results, incomplete) = aggregate(&rep.records, &cfg)?;
    ctx.write_json("task_results.json", &results)?;
    ctx.write_json("incomplete.json", &incomplete)?;

    let truth = truth(ctx, &a.manifest, &a.segment_gt)?;
    let tables = difficulty_tables(&results, truth.as_ref().map(|t| &t.0));
    ctx.write_json("difficulty.json", &tables)?;

    let mut accuracy = AccuracySummary::default();
    if let Some((index, u, m)) = &truth {
        let map: BTreeMap<&str, SegmentId> = index
            .entries
            .iter()
            .map(|(t, e)| (t.as_str(), e.segment_id))
            .collect();
        let consensus = consensus_by_segment(&results, map.iter().map(|(t, s)| (*t, *s)));
        let restrict = |g: &SegmentGT| SegmentGT {
            variant: g.variant,
            entries: g
                .entries
                .iter()
                .filter(|(id, _)| consensus.contains_key(id))
                .map(|(k, v)| (*k, *v))
                .collect(),
        };
        accuracy.gt_u = Some(segment_accuracy(&consensus, &restrict(u))?);
        accuracy.gt_m = Some(segment_accuracy(&consensus, &restrict(m))?);
        let seg_path = ctx.optional(&a.segmentation, "segments");
        let gt_path = ctx.optional(&a.gt_prodes, "gt_prodes");
        if let (Some(sp), Some(gp)) = (seg_path, gt_path) {
            let (seg, _) = Segmentation::load(&sp)?;
            let (gt, _) = BinaryGT::load(&gp)?;
            let policy = if a.exclude_undefined {
                UndefinedPolicy::Exclude
            } else {
                UndefinedPolicy::CountAsWrong
            };
            accuracy.gt_prodes = Some(pixel_accuracy(&seg, &consensus, &gt, policy)?);
        }
        ctx.write_json("accuracy.json", &accuracy)?;
    }

    let volunteers: BTreeSet<_> = rep.records.iter().map(|r| &r.volunteer_id).collect();
    let summary = CampaignSummary {
        workflow_id: ctx.cfg.workflow_id.clone(),
        tasks: results.len(),
        incomplete_tasks: incomplete.len(),
        answers: rep.records.len(),
        volunteers: volunteers.len(),
        redundancy: ctx.cfg.redundancy,
        seed: ctx.cfg.seed,
    };
    ctx.write_json("campaign.json", &summary)?;
    let pct = |c: &Option<foresteyes_core::groundtruth::Accuracy<_>>| {
        c.as_ref().and_then(|a| a.overall.percent)
    };
    Ok(json!({
        "tasks": results.len(),
        "incomplete_tasks": incomplete.len(),
        "answers": rep.records.len(),
        "rejected_rows": rep.rejected.len(),
        "ties": results.iter().filter(|r| r.tie).count(),
        "accuracy_gt_u": pct(&accuracy.gt_u),
        "accuracy_gt_m": pct(&accuracy.gt_m),
    }))
}

/// Records restricted to tasks with a result, and how many were left out.
fn records_with_results(
    ctx: &Ctx,
    a: &crate::AnswersArgs,
) -> Result<(Vec<AnswerRecord>, Vec<TaskResult>, usize)> {
    let records = load_records(&ctx.input(&a.answers, "answers.csv"))?;
    let results = load_results(&ctx.input(&a.results, "task_results.json"))?;
    let known: BTreeSet<&str> = results.iter().map(|r| r.task_id.as_str()).collect();
    let (kept, dropped): (Vec<_>, Vec<_>) = records
        .into_iter()
        .partition(|r| known.contains(r.task_id.as_str()));
    Ok((kept, results, dropped.len()))
}

fn apply_redundancy(ctx: &mut Ctx, r: Option<usize>) -> Result<()> {
    if let Some(r) = r {
        ctx.cfg.redundancy = r;
        ctx.cfg.validate()?;
    }
    Ok(())
}

fn score(ctx: &mut Ctx, a: &crate::AnswersArgs) -> Result<Value> {
    apply_redundancy(ctx, a.redundancy)?;
    let (records, results, excluded) = records_with_results(ctx, a)?;
    let truth = truth(ctx, &a.manifest, &a.segment_gt)?;
    let scores = volunteer_scores(
        &records,
        &results,
        ctx.cfg.redundancy,
        truth.as_ref().map(|t| &t.0),
    )?;
    let cohorts = cohort_averages(&scores)?;
    ctx.write_json("scores.json", &scores)?;
    let rows: Vec<RankingRow> = scores.iter().map(RankingRow::from).collect();
    ctx.write_with("ranking.csv", |w| write_ranking_csv(&rows, w))?;
    ctx.write_json("cohorts.json", &cohorts)?;
    Ok(json!({
        "volunteers": scores.len(),
        "answers_without_result": excluded,
        "top": scores.first().map(|s| json!({"volunteer_id": s.volunteer_id, "vs": s.vs})),
    }))
}

fn convergence_cmd(ctx: &mut Ctx, a: &crate::ConvergenceArgs) -> Result<Value> {
    apply_redundancy(ctx, a.common.redundancy)?;
    let (records, results, _) = records_with_results(ctx, &a.common)?;
    let ids: Vec<String> = results.iter().map(|r| r.task_id.clone()).collect();
    let options = {
        let seen: BTreeSet<Answer> = results
            .iter()
            .flat_map(|r| r.counts.iter().map(|(a, _)| *a))
            .collect();
        // Keep the option order stored with the results.
        results
            .first()
            .map(|r| r.counts.iter().map(|(a, _)| *a).collect())
            .filter(|o: &Vec<Answer>| o.len() == seen.len())
    };
    let cfg = VoteConfig {
        redundancy: ctx.cfg.redundancy,
        options: options.unwrap_or_else(|| VoteConfig::default().options),
        seed: ctx.cfg.seed,
    };
    let rep = convergence(&records, &ids, &a.ks, &cfg)?;
    ctx.write_json("convergence.json", &rep)?;
    Ok(json!({"ks": rep.ks, "percent": rep.percent, "tasks": ids.len()}))
}

fn times(ctx: &mut Ctx, a: &crate::AnswersArgs) -> Result<Value> {
    let records = load_records(&ctx.input(&a.answers, "answers.csv"))?;
    let results = load_results(&ctx.input(&a.results, "task_results.json"))?;
    let stats = time_stats(&records, &results);
    ctx.write_json("times.json", &stats)?;
    Ok(json!({"overall": stats.overall, "excluded": stats.excluded}))
}

fn report(ctx: &mut Ctx, a: &crate::ReportArgs) -> Result<Value> {
    let dir = a.campaign.clone().unwrap_or_else(|| ctx.dir.clone());
    let required = [
        "campaign.json",
        "difficulty.json",
        "times.json",
        "scores.json",
        "cohorts.json",
        "convergence.json",
    ];
    let missing: Vec<String> = required
        .iter()
        .filter(|n| !dir.join(n).exists())
        .map(|n| n.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingArtifacts(missing));
    }
    let accuracy_path = dir.join("accuracy.json");
    let change_path = a
        .change
        .clone()
        .or_else(|| Some(dir.join("change.json")).filter(|p| p.exists()));
    let report = CampaignReport {
        summary: read_json::<CampaignSummary>(&dir.join("campaign.json"))?,
        convergence: Some(read_json::<ConvergenceReport>(
            &dir.join("convergence.json"),
        )?),
        accuracy: if accuracy_path.exists() {
            read_json(&accuracy_path)?
        } else {
            AccuracySummary::default()
        },
        difficulty: read_json::<DifficultyTables>(&dir.join("difficulty.json"))?,
        times: read_json::<TimeStats>(&dir.join("times.json"))?,
        ranking: read_json::<Vec<VolunteerScore>>(&dir.join("scores.json"))?,
        cohorts: read_json(&dir.join("cohorts.json"))?,
        change: change_path
            .as_deref()
            .map(read_json::<ChangeReport>)
            .transpose()?,
    };
    let md = report.render_markdown();
    std::fs::write(ctx.path("report.md"), &md).map_err(|e| Error::io(ctx.path("report.md"), e))?;
    ctx.record("report.md");
    let appendix = ctx.path("report");
    std::fs::create_dir_all(&appendix).map_err(|e| Error::io(&appendix, e))?;
    for (name, text) in report.csv_appendices()? {
        let path = appendix.join(&name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        ctx.record(&format!("report/{name}"));
    }
    Ok(json!({
        "tasks": report.summary.tasks,
        "volunteers": report.ranking.len(),
        "has_ground_truth": report.accuracy.gt_u.is_some(),
        "has_change_section": report.change.is_some(),
    }))
}

fn simulate(ctx: &mut Ctx, a: &crate::SimulateArgs) -> Result<Value> {
    apply_redundancy(ctx, a.redundancy)?;
    let (u, m) = load_segment_gt(&ctx.input(&a.segment_gt, "segment_gt.csv"))?;
    let mut reference = match a.truth {
        GtChoice::GtU => u,
        GtChoice::GtM => m,
    };
    if let Some(path) = ctx.optional(&a.manifest, "tasks.jsonl") {
        let specs: Vec<TaskSpec> = load_manifest(&path)?;
        let wanted: BTreeSet<SegmentId> = specs.iter().map(|t| t.segment_id).collect();
        reference.entries.retain(|id, _| wanted.contains(id));
    }
    let pool = PoolSpec {
        size: a.pool_size,
        accuracy: (!a.perfect).then_some(a.accuracy),
        anonymous_share: a.anonymous_share,
        ..Default::default()
    }
    .build()?;
    let params = SimParams::new(
        ctx.cfg.workflow_id.clone(),
        ctx.cfg.redundancy,
        ctx.cfg.seed,
    );
    let records = simulate_campaign(&reference, &pool, &params)?;
    ctx.write_with("answers.csv", |w| write_answers_csv(&records, w))?;
    ctx.write_json("pool.json", &pool)?;
    Ok(
        json!({"tasks": reference.entries.len(), "answers": records.len(), "volunteers": pool.len()}),
    )
}

fn changedetect(ctx: &mut Ctx, a: &crate::ChangeArgs) -> Result<Value> {
    let (gt_a, _) = BinaryGT::load(&a.gt_a)?;
    let (gt_b, _) = BinaryGT::load(&a.gt_b)?;
    let change = gt_change(&gt_a, &gt_b)?;
    let dir_b = a.campaign_b.clone().unwrap_or_else(|| ctx.dir.clone());
    let seg_path = a
        .segmentation
        .clone()
        .unwrap_or_else(|| dir_b.join("segments"));
    let (seg_b, _) = Segmentation::load(&seg_path)?;
    let results = load_results(&dir_b.join("task_results.json"))?;
    let map = if dir_b.join("tasks.jsonl").exists() {
        load_manifest(&dir_b.join("tasks.jsonl"))?
            .into_iter()
            .map(|t| (t.task_id, t.segment_id))
            .collect()
    } else if dir_b.join("segment_gt.csv").exists() {
        let (u, _) = load_segment_gt(&dir_b.join("segment_gt.csv"))?;
        let wf = dir_b
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        u.entries
            .keys()
            .map(|&id| (task_id_for(&wf, id), id))
            .collect()
    } else {
        return Err(Error::MissingArtifacts(vec![
            "tasks.jsonl or segment_gt.csv in the later campaign".into(),
        ]));
    };
    let epochs = match &a.epochs {
        Some(e) => (e[0].clone(), e[1].clone()),
        None => ("a".to_string(), "b".to_string()),
    };
    let rep = detection_report(&change, &seg_b, &results, &map, (&epochs.0, &epochs.1))?;
    ctx.write_json("change.json", &rep)?;
    change.save_png(&ctx.path("change_mask.png"))?;
    ctx.record("change_mask.png");
    Ok(json!({
        "gt_change_pixels": rep.gt_change_pixels,
        "detected_pixels": rep.detected_pixels,
        "detection_rate": rep.detection_rate,
    }))
}
