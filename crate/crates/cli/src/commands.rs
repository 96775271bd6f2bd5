use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use craterscan::annotations::{
    crop_for_classifier, dataset_stats, load_image_dir, load_layout, split_dataset, write_layout, AnnotatedImage,
    ClassMap, Raster, StatsBasis,
};
use craterscan::detector::{BridgeBackend, ImageDetections, Provenance, ReplayOracle};
use craterscan::evaluation::{aggregate_runs, evaluate_run, f1_means, mean_rank, EvalOptions, EvalReport, MatchMode, RunAggregate};
use craterscan::geodesy::{scene_scale, UnitMode};
use craterscan::report::{region_report, render, ReportFormat};
use craterscan::{
    detect_direct, detect_tiled, plan_tiles, DetectMode, DetectOptions, DetectorBackend, RunFile, SceneImage,
};
use image::{DynamicImage, Pixel};
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::args::*;
use crate::config::{BackendSpec, PipelineConfig};
use crate::Failure;

type CmdResult = Result<(), Failure>;

pub fn run(cli: Cli) -> CmdResult {
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Dataset(DatasetCommand::Validate { root }) => dataset_validate(&cfg, &root),
        Command::Dataset(DatasetCommand::Split(a)) => dataset_split(&mut cfg, a),
        Command::Dataset(DatasetCommand::Crop(a)) => dataset_crop(&cfg, a),
        Command::Dataset(DatasetCommand::Stats(a)) => dataset_stats_cmd(&cfg, a),
        Command::Tile(TileCommand::Plan(a)) => tile_plan(&mut cfg, a),
        Command::Detect(a) => detect(&mut cfg, a),
        Command::Eval(a) => eval(&mut cfg, a),
        Command::Rank(a) => rank(a),
        Command::Report(a) => report(&mut cfg, a),
    }
}

/// Write `text` to `out`, or to stdout when no path is given.
fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            info!(path = %path.display(), bytes = text.len(), "wrote output");
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output serializes") + "\n"
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn dataset_validate(cfg: &PipelineConfig, root: &Path) -> CmdResult {
    let layout = load_layout(root)?;
    let mut summary = String::new();
    for split in craterscan::annotations::Split::ALL {
        let images = layout.split(split);
        for img in images {
            if let Some(nb) = img.boxes.iter().find(|b| cfg.class_map.label(b.class_id).is_none()) {
                return Err(anyhow!("{}: class id {} is not in the class map", img.id, nb.class_id).into());
            }
        }
        let boxes: usize = images.iter().map(|i| i.boxes.len()).sum();
        summary.push_str(&format!("{:<6}{:>7} images{:>8} boxes\n", split.dir_name(), images.len(), boxes));
    }
    info!(root = %root.display(), "dataset valid");
    emit(None, &summary)?;
    Ok(())
}

fn dataset_split(cfg: &mut PipelineConfig, a: SplitArgs) -> CmdResult {
    if let Some(v) = a.train {
        cfg.split.train = v;
    }
    if let Some(v) = a.val {
        cfg.split.val = v;
    }
    if let Some(v) = a.test {
        cfg.split.test = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    let labels = a
        .labels
        .unwrap_or_else(|| a.images.parent().unwrap_or(Path::new(".")).join("labels"));
    let images = load_image_dir(&a.images, &labels)?;
    let spec = cfg.split_spec();
    let layout = split_dataset(images, &spec)?;
    let meta = write_layout(&layout, &a.out, &spec, &cfg.class_map)?;
    info!(train = layout.train.len(), val = layout.val.len(), test = layout.test.len(), out = %a.out.display(), "split written");
    emit(None, &to_json(&meta))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct ChipRecord {
    image_id: String,
    box_index: usize,
    class_id: u32,
    file: PathBuf,
    source_region: (u32, u32, u32, u32),
    clamped: bool,
}

fn save_chips<P>(
    raster: &Raster<P>,
    img: &AnnotatedImage,
    size: u32,
    out: &Path,
    records: &mut Vec<ChipRecord>,
) -> anyhow::Result<()>
where
    P: Pixel<Subpixel = u8> + image::PixelWithColorType + 'static,
{
    for (k, (class_id, bbox)) in img.pixel_boxes().enumerate() {
        let chip = crop_for_classifier(raster, &bbox, size)?;
        let rel = PathBuf::from(class_id.to_string()).join(format!("{}_{k:04}.png", img.id));
        let path = out.join(&rel);
        std::fs::create_dir_all(path.parent().expect("chip path has a parent"))?;
        chip.image.save(&path).with_context(|| format!("writing {}", path.display()))?;
        records.push(ChipRecord {
            image_id: img.id.clone(),
            box_index: k,
            class_id,
            file: rel,
            source_region: chip.source_region,
            clamped: chip.clamped,
        });
    }
    Ok(())
}

fn dataset_crop(_cfg: &PipelineConfig, a: CropArgs) -> CmdResult {
    if a.size == 0 {
        return Err(anyhow!("chip size must be positive").into());
    }
    let layout = load_layout(&a.root)?;
    let mut records = Vec::new();
    for img in layout.split(a.split) {
        let decoded = image::open(&img.image_path).with_context(|| format!("decoding {}", img.image_path.display()))?;
        match decoded {
            DynamicImage::ImageLuma8(gray) => save_chips(&gray, img, a.size, &a.out, &mut records)?,
            other if other.color().has_color() => save_chips(&other.to_rgb8(), img, a.size, &a.out, &mut records)?,
            other => save_chips(&other.to_luma8(), img, a.size, &a.out, &mut records)?,
        }
    }
    info!(chips = records.len(), out = %a.out.display(), "chips written");
    emit(Some(&a.out.join("chips.json")), &to_json(&records))?;
    Ok(())
}

fn dataset_stats_cmd(cfg: &PipelineConfig, a: StatsArgs) -> CmdResult {
    let layout = load_layout(&a.root)?;
    let region = cfg.load_region(a.region.as_deref())?;
    cfg.thresholds.validate()?;
    let basis = match a.basis {
        StatsBasisArg::Labels => StatsBasis::Labels(&cfg.class_map),
        StatsBasisArg::Size => StatsBasis::Size {
            thresholds: &cfg.thresholds,
            region: region.as_ref(),
            class_map: &cfg.class_map,
        },
    };
    let stats = dataset_stats(&layout, basis)?;
    let text = match a.format {
        TextOrJson::Text => stats.to_table(),
        TextOrJson::Json => to_json(&stats),
    };
    emit(a.out.as_deref(), &text)?;
    Ok(())
}

fn tile_plan(cfg: &mut PipelineConfig, a: TilePlanArgs) -> CmdResult {
    if let Some(v) = a.tile_size {
        cfg.tile_size = v;
    }
    if let Some(v) = a.overlap {
        cfg.overlap = v;
    }
    let plan = plan_tiles(a.width, a.height, cfg.tile_config()?)?;
    info!(windows = plan.len(), stride = plan.stride, "planned tiles");
    emit(a.out.as_deref(), &to_json(&plan))?;
    Ok(())
}

fn apply_detect_overrides(cfg: &mut PipelineConfig, a: &DetectArgs) -> anyhow::Result<()> {
    if let Some(v) = a.tile_size {
        cfg.tile_size = v;
    }
    if let Some(v) = a.overlap {
        cfg.overlap = v;
    }
    if let Some(v) = a.nms_iou {
        cfg.nms_iou = v;
    }
    if a.class_agnostic_nms {
        cfg.class_aware = false;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.drop_prob {
        cfg.replay.drop_prob = v;
    }
    if let Some(v) = a.jitter_px {
        cfg.replay.jitter_px = v;
    }
    if let Some(r) = &a.conf_range {
        cfg.replay.conf = craterscan::detector::ConfDist::Uniform { lo: r[0], hi: r[1] };
    }
    match (a.backend, &a.bridge_cmd) {
        (Some(BackendArg::Replay), _) => cfg.backend = BackendSpec::Replay,
        (Some(BackendArg::Bridge), Some(cmd)) => cfg.backend = BackendSpec::Bridge { command: cmd.clone() },
        (Some(BackendArg::Bridge), None) => {
            if !matches!(cfg.backend, BackendSpec::Bridge { .. }) {
                bail!("--backend bridge needs --bridge-cmd or a bridge command in the config");
            }
        }
        (None, Some(cmd)) => cfg.backend = BackendSpec::Bridge { command: cmd.clone() },
        (None, None) => {}
    }
    cfg.validate()
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn detect(cfg: &mut PipelineConfig, a: DetectArgs) -> CmdResult {
    apply_detect_overrides(cfg, &a)?;
    let jobs = a.jobs.unwrap_or_else(default_jobs);
    if jobs == 0 {
        return Err(anyhow!("--jobs must be at least 1").into());
    }
    let layout = load_layout(&a.dataset)?;
    let images = layout.split(a.split);
    let backend: Box<dyn DetectorBackend> = match &cfg.backend {
        BackendSpec::Replay => Box::new(ReplayOracle::from_images(images, cfg.replay_config())?),
        BackendSpec::Bridge { command } => Box::new(BridgeBackend::spawn(command).map_err(Failure::backend)?),
    };
    let backend_id = backend.capabilities().backend_id.clone();
    let opts = DetectOptions {
        nms_iou: cfg.nms_iou,
        class_aware: cfg.class_aware,
        jobs,
    };
    let tile_cfg = cfg.tile_config()?;
    let mode = match a.mode {
        ModeArg::Direct => DetectMode::Direct,
        ModeArg::Tiled => DetectMode::Tiled,
    };
    info!(images = images.len(), backend = %backend_id, ?mode, jobs, "detecting");
    let mut runs = Vec::with_capacity(images.len());
    for img in images {
        let path = std::fs::canonicalize(&img.image_path).unwrap_or_else(|_| img.image_path.clone());
        let scene = SceneImage::new(&img.id, img.width_px, img.height_px).with_path(path);
        let result = match mode {
            DetectMode::Direct => detect_direct(&scene, backend.as_ref(), &opts),
            DetectMode::Tiled => {
                let plan = plan_tiles(img.width_px, img.height_px, tile_cfg)?;
                detect_tiled(&scene, &plan, backend.as_ref(), &opts)
            }
        };
        let run = match result {
            Ok(run) => run,
            Err(e) if e.is_backend_failure() => {
                return Err(Failure::backend(anyhow!(e).context(format!("image `{}`", img.id))))
            }
            Err(e) => return Err(anyhow!(e).context(format!("image `{}`", img.id)).into()),
        };
        info!(image = %img.id, detections = run.detections.len(), "image done");
        runs.push(run);
    }
    let timestamp = if a.timestamp {
        Some(
            time::OffsetDateTime::now_utc()
                .format(&time::format_description::well_known::Rfc3339)
                .context("formatting timestamp")?,
        )
    } else {
        None
    };
    let provenance = Provenance {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        backend_id,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        timestamp,
    };
    let file = RunFile::new(mode, provenance, runs);
    emit(Some(&a.out), &to_json(&file))?;
    Ok(())
}

/// Output of `eval`: one report per run plus mean ± std across them.
#[derive(Debug, Serialize, Deserialize)]
struct EvalOutput {
    runs: Vec<EvalSummary>,
    aggregate: RunAggregate,
}

#[derive(Debug, Serialize, Deserialize)]
struct EvalSummary {
    run: PathBuf,
    config_hash: String,
    report: EvalReport,
}

fn eval(cfg: &mut PipelineConfig, a: EvalArgs) -> CmdResult {
    if let Some(v) = a.match_iou {
        cfg.match_iou = v;
    }
    cfg.validate()?;
    let layout = load_layout(&a.dataset)?;
    let images = layout.split(a.split);
    let opts = EvalOptions {
        iou_threshold: cfg.match_iou,
        mode: if a.class_agnostic {
            MatchMode::ClassAgnostic
        } else {
            MatchMode::ClassAware
        },
        classes: cfg.class_map.crater_ids(),
    };
    let mut summaries = Vec::new();
    for path in &a.runs {
        let run: RunFile = read_json(path)?;
        for (id, img) in &run.images {
            check_run_dims(id, img, images)?;
        }
        let report = evaluate_run(&run, images, &opts).with_context(|| format!("evaluating {}", path.display()))?;
        info!(run = %path.display(), macro_f1 = report.macro_f1, "evaluated");
        summaries.push(EvalSummary {
            run: path.clone(),
            config_hash: run.provenance.config_hash,
            report,
        });
    }
    let per_run: Vec<_> = summaries.iter().map(|s| s.report.per_class.clone()).collect();
    let aggregate = aggregate_runs(&per_run)?;
    let mut table = String::new();
    if let [only] = summaries.as_slice() {
        table.push_str(&only.report.to_table(&cfg.class_map));
    } else {
        table.push_str(&aggregate.to_table(&cfg.class_map));
    }
    let output = EvalOutput {
        runs: summaries,
        aggregate,
    };
    match &a.out {
        Some(out) => {
            emit(Some(out), &to_json(&output))?;
            emit(None, &table)?;
        }
        None => emit(None, &to_json(&output))?,
    }
    Ok(())
}

fn check_run_dims(id: &str, det: &ImageDetections, images: &[AnnotatedImage]) -> anyhow::Result<()> {
    if let Some(img) = images.iter().find(|i| i.id == id) {
        if (img.width_px, img.height_px) != (det.width, det.height) {
            bail!(
                "run image `{id}` is {}x{} but the dataset image is {}x{}",
                det.width,
                det.height,
                img.width_px,
                img.height_px
            );
        }
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreMatrix {
    models: Vec<String>,
    classes: Vec<String>,
    scores: Vec<Vec<f64>>,
}

fn class_label(map: &ClassMap, id: u32) -> String {
    match map.label(id) {
        Some(l) => format!("{l:?}"),
        None => format!("class {id}"),
    }
}

fn rank(a: RankArgs) -> CmdResult {
    let matrix = match &a.scores {
        Some(path) => read_json::<ScoreMatrix>(path)?,
        None => {
            let mut models = Vec::new();
            let mut columns: Vec<BTreeMap<u32, f64>> = Vec::new();
            for spec in &a.model {
                let (name, path) = spec
                    .split_once('=')
                    .ok_or_else(|| anyhow!("--model expects NAME=PATH, got `{spec}`"))?;
                let output: EvalOutput = read_json(Path::new(path))?;
                models.push(name.to_string());
                columns.push(f1_means(&output.aggregate).into_iter().collect());
            }
            let ids: Vec<u32> = columns.first().map(|c| c.keys().copied().collect()).unwrap_or_default();
            if let Some((i, _)) = columns.iter().enumerate().find(|(_, c)| c.keys().copied().collect::<Vec<_>>() != ids) {
                return Err(anyhow!("model `{}` reports different classes", models[i]).into());
            }
            let map = ClassMap::default();
            ScoreMatrix {
                classes: ids.iter().map(|&id| class_label(&map, id)).collect(),
                scores: columns.iter().map(|c| c.values().copied().collect()).collect(),
                models,
            }
        }
    };
    let table = mean_rank(&matrix.models, &matrix.classes, &matrix.scores)?;
    match &a.out {
        Some(out) => {
            emit(Some(out), &to_json(&table))?;
            emit(None, &table.to_table())?;
        }
        None => emit(None, &to_json(&table))?,
    }
    Ok(())
}

fn report(cfg: &mut PipelineConfig, a: ReportArgs) -> CmdResult {
    if let Some(v) = a.small_max {
        cfg.thresholds.small_max = v;
    }
    if let Some(v) = a.large_min {
        cfg.thresholds.large_min = v;
    }
    if let Some(u) = a.units {
        cfg.thresholds.unit_mode = match u {
            UnitArg::Km => UnitMode::Kilometres,
            UnitArg::Px => UnitMode::Pixels,
        };
    }
    cfg.validate()?;
    let format: ReportFormat = a.format.parse()?;
    let region = cfg
        .load_region(a.region.as_deref())?
        .ok_or_else(|| anyhow!("report needs --region or `region` in the config"))?;
    let file: RunFile = read_json(&a.run)?;
    let image_id = match (&a.image_id, file.images.len()) {
        (Some(id), _) => id.clone(),
        (None, 1) => file.images.keys().next().expect("one image").clone(),
        (None, n) => return Err(anyhow!("run holds {n} images; pick one with --image-id").into()),
    };
    let run = file
        .run_for(&image_id)
        .ok_or_else(|| anyhow!("run has no image `{image_id}`"))?;
    let scale = match cfg.thresholds.unit_mode {
        UnitMode::Kilometres => Some(scene_scale(&region, run.width, run.height)?),
        UnitMode::Pixels => None,
    };
    if cfg.thresholds.unit_mode == UnitMode::Kilometres && region.ew_extent_km().max(region.ns_extent_km()) < cfg.thresholds.large_min {
        warn!(
            large_min_km = cfg.thresholds.large_min,
            "region is smaller than the Large threshold; no crater can classify as Large in kilometre mode"
        );
    }
    let rep = region_report(&run, &region, scale.as_ref(), &cfg.thresholds)?;
    info!(image = %image_id, craters = rep.craters.len(), density = rep.density_per_km2, "report built");
    emit(a.out.as_deref(), &render(&rep, format)?)?;
    Ok(())
}
