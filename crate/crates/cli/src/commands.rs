use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use herdgraph::config::{streams, Config};
use herdgraph::domain::{FrameRecord, StreamMeta};
use herdgraph::evalkit::{self, ClipSample};
use herdgraph::io::{self, Manifest, Role, SampleRow};
use herdgraph::pipeline::{self, ClassifiedWindow, NetworkLayer, Timings, WindowFeatures};
use herdgraph::socialnet::InteractionEvent;
use herdgraph::svm::{self, GroupKey, LabeledClip, SvmModel};
use herdgraph::synthlab::{self, CorpusClip, GtEvent};
use herdgraph::tracker::Track;
use serde::Serialize;

use crate::checks::{self, Check};
use crate::{Command, Global, SynthKind, TrainingSource};

type Checks = anyhow::Result<Vec<Check>>;

pub fn dispatch(cmd: &Command, g: &Global, cfg: &Config) -> Checks {
    let out = g.out_dir.as_path();
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match cmd {
        Command::Synth { kind } => synth(*kind, out, cfg, g.check),
        Command::Track { frames } => track(frames, out, cfg),
        Command::Stabilize { tracks } => stabilize(tracks, out, cfg),
        Command::Gate { tracks, trajectories } => gate(tracks, trajectories, out, cfg),
        Command::Features { windows, events } => features(windows, events.as_deref(), out, cfg),
        Command::Train { source } => train(source, out, cfg),
        Command::Classify {
            model,
            features,
            samples,
        } => classify(model, features, samples, out),
        Command::Evaluate { corpus } => evaluate(corpus.as_deref(), out, cfg, g.check),
        Command::Ablate { corpus } => ablate(corpus.as_deref(), out, cfg, g.check),
        Command::Sensitivity { corpus } => sensitivity(corpus.as_deref(), out, cfg, g.check),
        Command::SweepMatch { frames, ground_truth } => {
            sweep_match(frames.as_deref(), ground_truth.as_deref(), out, cfg, g.check)
        }
        Command::Network { events, tracks, fps } => network(events, tracks.as_deref(), *fps, out, cfg, g.check),
        Command::Pipeline { frames, model, events } => {
            run_pipeline(frames.as_deref(), model.as_deref(), events.as_deref(), out, cfg, g.check)
        }
        Command::DefaultConfig => Ok(Vec::new()),
    }
}

fn echo_config(out: &Path, cfg: &Config) -> anyhow::Result<()> {
    io::write_atomic(&out.join("config.json"), format!("{}\n", cfg.to_json()).as_bytes())?;
    Ok(())
}

fn synth(kind: SynthKind, out: &Path, cfg: &Config, check: bool) -> Checks {
    echo_config(out, cfg)?;
    match kind {
        SynthKind::Corpus => {
            let spec = cfg.corpus_spec();
            let clips = synthlab::corpus(&spec)?;
            io::write_corpus(&out.join("corpus"), &clips)?;
            let mut checks = Vec::new();
            if check {
                checks.push(checks::equal("synth_deterministic", &synthlab::corpus(&spec)?, &clips));
            }
            Ok(checks)
        }
        SynthKind::Scene => {
            let scene = synthlab::scene(&cfg.scene_spec())?;
            write_scene(out, &scene)?;
            let mut checks = Vec::new();
            if check {
                checks.push(checks::equal("synth_deterministic", &synthlab::scene(&cfg.scene_spec())?, &scene));
            }
            Ok(checks)
        }
    }
}

fn gt_as_events(events: &[GtEvent]) -> Vec<InteractionEvent> {
    events
        .iter()
        .map(|e| InteractionEvent {
            pair: e.pair.clone(),
            label: e.label,
            frame_span: e.frame_span,
            confidence: 1.0,
        })
        .collect()
}

fn events_as_gt(events: &[InteractionEvent]) -> Vec<GtEvent> {
    events
        .iter()
        .map(|e| GtEvent {
            pair: e.pair.clone(),
            label: e.label,
            frame_span: e.frame_span,
        })
        .collect()
}

fn write_scene(out: &Path, scene: &synthlab::Scene) -> anyhow::Result<()> {
    io::write_frames(&out.join("frames.jsonl"), &scene.meta, &scene.frames)?;
    io::write_ground_truth(&out.join("ground_truth.jsonl"), &scene.ground_truth)?;
    io::write_events(&out.join("gt_events.jsonl"), &gt_as_events(&scene.events))?;
    let mut m = Manifest::new(Some(scene.meta.clone()));
    m.add(Role::Frames, "frames.jsonl");
    m.add(Role::GroundTruth, "ground_truth.jsonl");
    m.add(Role::Events, "gt_events.jsonl");
    m.save(&out.join("manifest.json"))?;
    Ok(())
}

fn read_frames(path: &Path) -> anyhow::Result<(StreamMeta, Vec<FrameRecord>)> {
    io::read_all_frames(path).with_context(|| format!("reading {}", path.display()))
}

fn track(frames: &Path, out: &Path, cfg: &Config) -> Checks {
    let (meta, frames) = read_frames(frames)?;
    let tracks = pipeline::track(&frames, cfg, meta.fps)?;
    io::write_tracks(&out.join("tracks.jsonl"), &meta, &tracks)?;
    Ok(Vec::new())
}

fn stabilize(tracks: &Path, out: &Path, cfg: &Config) -> Checks {
    let (meta, tracks) = io::read_tracks(tracks)?;
    let trajectories = pipeline::stabilize(&tracks, cfg);
    io::write_trajectories(&out.join("trajectories.jsonl"), &meta, &trajectories)?;
    Ok(Vec::new())
}

fn gate(tracks: &Path, trajectories: &Path, out: &Path, cfg: &Config) -> Checks {
    let (meta, tracks) = io::read_tracks(tracks)?;
    let (_, trajectories) = io::read_trajectories(trajectories)?;
    let windows = pipeline::gate(&tracks, &trajectories, cfg, meta.fps);
    io::write_windows(&out.join("windows.jsonl"), &meta, &windows)?;
    Ok(Vec::new())
}

fn sample_row(w: &WindowFeatures, label: Option<herdgraph::domain::Label>) -> SampleRow {
    let key = w.group_key();
    SampleRow {
        clip_id: format!("{}-{}-{}", key.0, key.1, w.frame_span.0),
        node_a: key.0,
        node_b: key.1,
        start_frame: w.frame_span.0,
        end_frame: w.frame_span.1,
        label,
    }
}

/// Sample rows for windows, labeled from ground truth when given.
fn sample_rows(windows: &[WindowFeatures], gt: Option<&[GtEvent]>) -> Vec<SampleRow> {
    let labels: BTreeMap<String, herdgraph::domain::Label> = gt
        .map(|gt| {
            pipeline::label_windows(windows, gt)
                .into_iter()
                .map(|c| (c.clip_id, c.label))
                .collect()
        })
        .unwrap_or_default();
    windows
        .iter()
        .map(|w| {
            let row = sample_row(w, None);
            let label = labels.get(&row.clip_id).copied();
            SampleRow { label, ..row }
        })
        .collect()
}

fn write_feature_tables(out: &Path, windows: &[WindowFeatures], gt: Option<&[GtEvent]>) -> anyhow::Result<()> {
    let rows: Vec<_> = windows.iter().map(|w| w.features.clone()).collect();
    io::write_features(&out.join("features.csv"), &rows)?;
    io::write_samples(&out.join("samples.csv"), &sample_rows(windows, gt))?;
    Ok(())
}

fn features(windows: &Path, events: Option<&Path>, out: &Path, cfg: &Config) -> Checks {
    let (meta, windows) = io::read_windows(windows)?;
    let gt = events.map(io::read_events).transpose()?.map(|e| events_as_gt(&e));
    let extracted = pipeline::extract(&windows, cfg, meta.fps);
    write_feature_tables(out, &extracted, gt.as_deref())?;
    Ok(Vec::new())
}

fn corpus_clips(path: Option<&Path>, cfg: &Config) -> anyhow::Result<Vec<CorpusClip>> {
    Ok(match path {
        Some(p) => io::read_corpus(p).with_context(|| format!("reading corpus {}", p.display()))?,
        None => synthlab::corpus(&cfg.corpus_spec())?,
    })
}

fn labeled_from_samples(samples: &[ClipSample]) -> Vec<LabeledClip> {
    samples
        .iter()
        .filter_map(|s| {
            Some(LabeledClip {
                clip_id: s.clip_id.clone(),
                features: s.features.clone()?,
                label: s.label,
                group_key: s.group_key.clone(),
            })
        })
        .collect()
}

fn labeled_from_tables(features: &Path, samples: &Path) -> anyhow::Result<Vec<LabeledClip>> {
    let rows = io::read_features(features)?;
    let samples = io::read_samples(samples)?;
    anyhow::ensure!(
        rows.len() == samples.len(),
        herdgraph::Error::LengthMismatch {
            left: rows.len(),
            right: samples.len()
        }
    );
    Ok(rows
        .into_iter()
        .zip(samples)
        .filter_map(|(f, s)| {
            Some(LabeledClip {
                clip_id: s.clip_id,
                features: f?,
                label: s.label?,
                group_key: GroupKey::new(s.node_a, s.node_b),
            })
        })
        .collect())
}

fn all_columns() -> Vec<usize> {
    (0..herdgraph::features::FEATURE_DIM).collect()
}

fn train(source: &TrainingSource, out: &Path, cfg: &Config) -> Checks {
    let clips = match (&source.features, &source.samples) {
        (Some(f), Some(s)) => labeled_from_tables(f, s)?,
        _ => {
            let corpus = corpus_clips(source.corpus.as_deref(), cfg)?;
            labeled_from_samples(&evalkit::corpus_samples(&corpus, &cfg.processing()))
        }
    };
    let model = svm::train(&clips, &all_columns(), &cfg.svm, cfg.seed_for(streams::TRAIN))?;
    io::write_model(&out.join("model.json"), &model)?;
    Ok(Vec::new())
}

fn classify(model: &Path, features: &Path, samples: &Path, out: &Path) -> Checks {
    let model = io::read_model(model)?;
    let rows = io::read_features(features)?;
    let samples = io::read_samples(samples)?;
    anyhow::ensure!(
        rows.len() == samples.len(),
        herdgraph::Error::LengthMismatch {
            left: rows.len(),
            right: samples.len()
        }
    );
    let predictions = herdgraph::par::try_map(&rows, |f| f.as_ref().map(|f| model.predict(f)).transpose())?;
    let events: Vec<InteractionEvent> = samples
        .iter()
        .zip(&predictions)
        .filter_map(|(s, p)| {
            let p = p.as_ref()?;
            p.label.is_class().then(|| InteractionEvent {
                pair: GroupKey::new(s.node_a.clone(), s.node_b.clone()),
                label: p.label,
                frame_span: (s.start_frame, s.end_frame),
                confidence: p.confidence,
            })
        })
        .collect();
    let table: Vec<_> = samples.into_iter().zip(predictions).collect();
    io::write_predictions(&out.join("predictions.csv"), &table)?;
    io::write_events(&out.join("events.jsonl"), &events)?;
    Ok(Vec::new())
}

#[derive(Serialize)]
struct EvaluationSummary<'a> {
    clips: usize,
    gated: usize,
    folds: usize,
    macro_f1: f64,
    accuracy: f64,
    baseline_macro_f1: f64,
    macro_f1_gap: f64,
    svm_distractor_fp_rate: f64,
    occurrence_distractor_fp_rate: f64,
    report: &'a evalkit::ClsReport,
}

fn evaluate(corpus: Option<&Path>, out: &Path, cfg: &Config, check: bool) -> Checks {
    let clips = corpus_clips(corpus, cfg)?;
    let samples = evalkit::corpus_samples(&clips, &cfg.processing());
    let k = cfg.eval.folds;
    let seed = cfg.seed_for(streams::FOLDS);
    let folds = evalkit::sample_folds(&samples, k, seed)?;
    let cmp = evalkit::compare_baseline(&samples, &folds, k, &cfg.svm, seed)?;
    io::write_baseline(&out.join("baseline.csv"), &cmp)?;
    io::write_classification(&out.join("classification.csv"), &cmp.svm)?;
    let summary = EvaluationSummary {
        clips: samples.len(),
        gated: samples.iter().filter(|s| s.gated()).count(),
        folds: k,
        macro_f1: cmp.svm.macro_f1,
        accuracy: cmp.svm.accuracy,
        baseline_macro_f1: cmp.majority.macro_f1,
        macro_f1_gap: cmp.macro_f1_gap(),
        svm_distractor_fp_rate: cmp.svm_fp_rate,
        occurrence_distractor_fp_rate: cmp.occurrence_fp_rate,
        report: &cmp.svm,
    };
    io::write_json(&out.join("evaluation.json"), &summary)?;
    Ok(if check { vec![checks::baseline_gap(&cmp)] } else { Vec::new() })
}

fn ablate(corpus: Option<&Path>, out: &Path, cfg: &Config, check: bool) -> Checks {
    let clips = corpus_clips(corpus, cfg)?;
    let samples = evalkit::corpus_samples(&clips, &cfg.processing());
    let rows = evalkit::ablate(&samples, cfg.eval.folds, &cfg.svm, cfg.seed_for(streams::FOLDS))?;
    io::write_ablation(&out.join("ablation.csv"), &rows)?;
    Ok(if check { checks::ablation_order(&rows) } else { Vec::new() })
}

fn sensitivity(corpus: Option<&Path>, out: &Path, cfg: &Config, check: bool) -> Checks {
    let clips = corpus_clips(corpus, cfg)?;
    let grid = || {
        evalkit::sensitivity(
            &clips,
            &cfg.eval.alphas,
            &cfg.eval.dwells_s,
            &cfg.processing(),
            cfg.eval.folds,
            &cfg.svm,
            cfg.seed_for(streams::FOLDS),
        )
    };
    let rows = grid()?;
    io::write_sensitivity(&out.join("sensitivity.csv"), &rows)?;
    if !check {
        return Ok(Vec::new());
    }
    let mut out = checks::sensitivity_grid(&rows, &cfg.eval.alphas, &cfg.eval.dwells_s);
    out.push(checks::equal("sensitivity_deterministic", &grid()?, &rows));
    Ok(out)
}

fn sweep_match(frames: Option<&Path>, gt: Option<&Path>, out: &Path, cfg: &Config, check: bool) -> Checks {
    let (meta, frames, gt) = match (frames, gt) {
        (Some(f), Some(g)) => {
            let (meta, frames) = read_frames(f)?;
            (meta, frames, io::read_ground_truth(g)?)
        }
        _ => {
            let scene = synthlab::scene(&cfg.scene_spec())?;
            (scene.meta, scene.frames, scene.ground_truth)
        }
    };
    let rows = evalkit::match_threshold_sweep(
        &gt,
        &frames,
        &cfg.eval.match_thresholds,
        &cfg.tracker,
        meta.fps,
        cfg.eval.iou_gate,
    )?;
    io::write_sweep(&out.join("sweep.csv"), &rows)?;
    Ok(if check {
        vec![Check::new(
            "sweep_rows",
            rows.len() == cfg.eval.match_thresholds.len(),
            format!("{} rows for {} thresholds", rows.len(), cfg.eval.match_thresholds.len()),
        )]
    } else {
        Vec::new()
    })
}

fn write_layers(out: &Path, layers: &[NetworkLayer]) -> anyhow::Result<()> {
    for l in layers {
        let name = l.graph.layer.as_str();
        io::write_atomic(&out.join(format!("graph_{name}.graphml")), io::to_graphml(&l.graph).as_bytes())?;
        io::write_atomic(&out.join(format!("graph_{name}.dot")), io::to_dot(&l.graph).as_bytes())?;
    }
    let metrics: Vec<_> = layers.iter().map(|l| &l.metrics).collect();
    io::write_json(&out.join("network_metrics.json"), &metrics)?;
    Ok(())
}

fn network(events: &Path, tracks: Option<&Path>, fps: f64, out: &Path, cfg: &Config, check: bool) -> Checks {
    anyhow::ensure!(fps > 0.0, herdgraph::Error::Config("--fps must be > 0".into()));
    let events = io::read_events(events)?;
    let roster = match tracks {
        Some(t) => pipeline::roster(&io::read_tracks(t)?.1),
        None => Vec::new(),
    };
    let layers = pipeline::networks(&events, &roster, &cfg.network, fps);
    write_layers(out, &layers)?;
    Ok(if check {
        checks::edge_conservation(&events, &layers, &cfg.network, fps)
    } else {
        Vec::new()
    })
}

/// Model from a file, else trained on windows of a generated training
/// scene labeled by its ground truth.
fn pipeline_model(model: Option<&Path>, cfg: &Config) -> anyhow::Result<SvmModel> {
    if let Some(p) = model {
        return Ok(io::read_model(p)?);
    }
    let scene = synthlab::scene(&cfg.training_scene_spec())?;
    let mut t = Timings::default();
    let fe = pipeline::front_end(&scene.frames, cfg, scene.meta.fps, &mut t)?;
    let labeled = pipeline::label_windows(&fe.windows, &scene.events);
    Ok(svm::train(&labeled, &all_columns(), &cfg.svm, cfg.seed_for(streams::TRAIN))?)
}

#[derive(Serialize)]
struct LayerSummary {
    layer: &'static str,
    edges: usize,
    total_weight: f64,
}

#[derive(Serialize)]
struct PipelineReport {
    frames: usize,
    fps: f64,
    tracks: usize,
    windows: usize,
    classified_events: usize,
    layers: Vec<LayerSummary>,
}

fn classified_rows(classified: &[ClassifiedWindow]) -> Vec<(SampleRow, Option<svm::Prediction>)> {
    classified
        .iter()
        .map(|c| (sample_row(&c.window, None), c.prediction.clone()))
        .collect()
}

fn write_run(out: &Path, meta: &StreamMeta, frames: usize, tracks: &[Track], run: &pipeline::PipelineRun) -> anyhow::Result<()> {
    io::write_tracks(&out.join("tracks.jsonl"), meta, tracks)?;
    let windows: Vec<WindowFeatures> = run.classified.iter().map(|c| c.window.clone()).collect();
    write_feature_tables(out, &windows, None)?;
    io::write_predictions(&out.join("predictions.csv"), &classified_rows(&run.classified))?;
    io::write_events(&out.join("events.jsonl"), &run.events)?;
    write_layers(out, &run.layers)?;
    let report = PipelineReport {
        frames,
        fps: meta.fps,
        tracks: tracks.len(),
        windows: run.classified.len(),
        classified_events: run.events.len(),
        layers: run
            .layers
            .iter()
            .map(|l| LayerSummary {
                layer: l.graph.layer.as_str(),
                edges: l.graph.edges.len(),
                total_weight: l.graph.total_weight(),
            })
            .collect(),
    };
    io::write_json(&out.join("report.json"), &report)?;
    io::write_json(&out.join("timings.json"), &run.timings)?;
    let mut m = Manifest::new(Some(meta.clone()));
    m.add(Role::Tracks, "tracks.jsonl");
    m.add(Role::Features, "features.csv");
    m.add(Role::Labels, "samples.csv");
    m.add(Role::Predictions, "predictions.csv");
    m.add(Role::Events, "events.jsonl");
    m.add(Role::Report, "report.json");
    m.add(Role::Report, "network_metrics.json");
    for l in &run.layers {
        let name = l.graph.layer.as_str();
        m.add(Role::Graph, format!("graph_{name}.graphml"));
        m.add(Role::Graph, format!("graph_{name}.dot"));
    }
    m.save(&out.join("manifest.json"))?;
    Ok(())
}

fn run_pipeline(
    frames: Option<&Path>,
    model: Option<&Path>,
    events: Option<&Path>,
    out: &Path,
    cfg: &Config,
    check: bool,
) -> Checks {
    echo_config(out, cfg)?;
    let (meta, frames, gt) = match frames {
        Some(f) => {
            let (meta, frames) = read_frames(f)?;
            let gt = events.map(io::read_events).transpose()?;
            (meta, frames, gt)
        }
        None => {
            let scene = synthlab::scene(&cfg.scene_spec())?;
            let scene_dir: PathBuf = out.join("scene");
            write_scene(&scene_dir, &scene)?;
            (scene.meta, scene.frames, Some(gt_as_events(&scene.events)))
        }
    };
    let model = pipeline_model(model, cfg)?;
    let run = pipeline::run(&frames, meta.fps, &model, cfg)?;
    write_run(out, &meta, frames.len(), &run.tracks, &run)?;
    let mut out_checks = Vec::new();
    if check {
        out_checks.extend(checks::edge_conservation(&run.events, &run.layers, &cfg.network, meta.fps));
        match &gt {
            Some(gt) => out_checks.extend(checks::ground_truth_conservation(
                gt,
                &run.events,
                &pipeline::roster(&run.tracks),
                &cfg.network,
                meta.fps,
            )),
            None => log::warn!("no ground-truth events; skipping the oracle conservation check"),
        }
    }
    Ok(out_checks)
}
