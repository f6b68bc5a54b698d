use std::fs;
use std::path::{Path, PathBuf};

use gvtcnn_core::datagen::{decode_dataset, encode_dataset, make_dataset_with, DatasetOptions, Degradation, PATCH_SIZE};
use gvtcnn_core::gvtcnn::{
    build_model, decode_weights, encode_weights, load_weights_expecting, nearest_qp_tag, train_with_progress,
};
use gvtcnn_core::mcsim::{simulate as run_simulation, ModelPair, SelectionMode, SimConfig};
use gvtcnn_core::plane::{encode_pgm, parse_pgm, parse_raw_frames};
use gvtcnn_core::synth::{synthetic_corpus, synthetic_sequence};
use gvtcnn_core::{Error, GvtcnnConfig, Plane, TrainConfig, Variant};
use serde_json::json;

use crate::eval::{evaluate_model, EvalReport};
use crate::manifest::{read, sha256_hex, OutputDir, RunManifest, MANIFEST_NAME, TOOL_NAME};
use crate::{
    run_from, CliError, CliResult, Common, EvalArgs, GenDataArgs, ReplayArgs, SimulateArgs, SynthArgs, TrainArgs,
};

pub const DATASET_FILE: &str = "dataset.gvtd";
pub const WEIGHTS_FILE: &str = "weights.gvtw";
pub const INITIAL_WEIGHTS_FILE: &str = "initial.gvtw";
pub const LOSS_FILE: &str = "loss.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const REPORT_FILE: &str = "report.csv";

/// A PGM image with the bytes it was parsed from.
struct CorpusImage {
    path: PathBuf,
    bytes: Vec<u8>,
    plane: Plane,
}

fn read_corpus(dir: &Path) -> CliResult<Vec<CorpusImage>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("pgm")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Data(format!("{}: no .pgm images", dir.display())));
    }
    paths
        .into_iter()
        .map(|path| {
            let bytes = read(&path)?;
            let plane = parse_pgm(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            Ok(CorpusImage { path, bytes, plane })
        })
        .collect()
}

fn add_corpus_inputs(manifest: &mut RunManifest, corpus: &[CorpusImage]) {
    for img in corpus {
        manifest.add_input_bytes(&img.path, &img.bytes);
    }
}

fn std_range(variant: Variant, lo: Option<f64>, hi: Option<f64>) -> CliResult<(f64, f64)> {
    let (dlo, dhi) = variant.default_std_range();
    let (lo, hi) = (lo.unwrap_or(dlo), hi.unwrap_or(dhi));
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(CliError::Usage(format!("invalid blur std range [{lo}, {hi}]")));
    }
    Ok((lo, hi))
}

/// Inputs recorded by the manifest sitting next to `file`, if there is one.
fn sibling_inputs(file: &Path) -> CliResult<Vec<crate::manifest::FileDigest>> {
    let path = file.parent().unwrap_or(Path::new(".")).join(MANIFEST_NAME);
    if !path.is_file() {
        return Ok(Vec::new());
    }
    let m = RunManifest::load(&path)?;
    Ok(m.inputs.into_iter().chain(m.upstream_inputs).collect())
}

pub fn gen_data(common: &Common, a: &GenDataArgs, args: &[String]) -> CliResult<()> {
    let corpus = read_corpus(&a.corpus)?;
    let opts = DatasetOptions {
        variant: a.variant,
        qp: a.qp,
        std_range: std_range(a.variant, a.std_min, a.std_max)?,
        seed: common.seed,
        stride: a.stride,
    };
    let degraded = a.degraded.as_deref().map(read_corpus).transpose()?;
    let degraded_planes: Vec<Plane> = degraded.iter().flatten().map(|d| d.plane.clone()).collect();
    let (degradation, kind) = match (&degraded, a.no_degradation) {
        (Some(_), _) => (Degradation::Precomputed(&degraded_planes), "precomputed"),
        (None, true) => (Degradation::None, "none"),
        (None, false) => (Degradation::Proxy, "proxy"),
    };
    let planes: Vec<Plane> = corpus.iter().map(|c| c.plane.clone()).collect();
    let dataset = make_dataset_with(&planes, &opts, degradation)?;
    let bytes = encode_dataset(&dataset)?;

    let config = json!({
        "variant": a.variant.to_string(),
        "qp": a.qp,
        "std_min": opts.std_range.0,
        "std_max": opts.std_range.1,
        "stride": a.stride,
        "patch_size": PATCH_SIZE,
        "degradation": kind,
        "images": corpus.len(),
        "pairs": dataset.len(),
    });
    let mut manifest = RunManifest::new("gen-data", args, common.seed, config);
    add_corpus_inputs(&mut manifest, &corpus);
    if let Some(d) = &degraded {
        add_corpus_inputs(&mut manifest, d);
    }
    let mut out = OutputDir::create(&common.out_dir(), manifest)?;
    out.write(DATASET_FILE, &bytes)?;
    out.finish()?;
    println!("{} pairs from {} images", dataset.len(), corpus.len());
    Ok(())
}

/// The schedule implied by the train flags.
pub fn train_schedule(a: &TrainArgs, seed: u64) -> TrainConfig {
    let d = TrainConfig::default();
    let lr_drop_iteration = a.lr_drop_iter.unwrap_or(if a.iters == d.total_iterations {
        d.lr_drop_iteration
    } else {
        TrainConfig::scaled(a.iters, a.batch, a.lr, seed).lr_drop_iteration
    });
    TrainConfig {
        batch_size: a.batch,
        lr_initial: a.lr,
        lr_drop_iteration,
        lr_drop_factor: a.lr_drop_factor,
        total_iterations: a.iters,
        seed,
        ..d
    }
}

pub fn train(common: &Common, a: &TrainArgs, args: &[String]) -> CliResult<()> {
    let bytes = read(&a.dataset)?;
    let dataset = decode_dataset(&bytes)?;
    if let Some(v) = a.variant {
        if v != dataset.variant {
            return Err(Error::VariantMismatch {
                expected: v.to_string(),
                found: dataset.variant.to_string(),
            }
            .into());
        }
    }
    let model_cfg = GvtcnnConfig::new(dataset.variant, a.qp_tag.unwrap_or(nearest_qp_tag(dataset.qp)));
    model_cfg.validate()?;
    let schedule = train_schedule(a, common.seed);
    schedule.validate()?;

    let model = build_model::<f32>(&model_cfg, common.seed)?;
    let initial = a.save_initial.then(|| encode_weights(&model));
    let log_every = a.log_every;
    let (model, curve) = train_with_progress(model, &dataset, &schedule, |r| {
        if log_every > 0 && r.iteration % log_every == 0 {
            eprintln!("iter {:>6}  lr {:.2e}  loss {:.6e}", r.iteration, r.lr, r.loss);
        }
    })?;

    let config = json!({
        "variant": dataset.variant.to_string(),
        "qp_tag": model_cfg.qp_tag,
        "dataset_qp": dataset.qp,
        "pairs": dataset.len(),
        "iters": schedule.total_iterations,
        "batch": schedule.batch_size,
        "effective_batch": schedule.batch_size.min(dataset.len()),
        "lr": schedule.lr_initial,
        "lr_drop_iter": schedule.lr_drop_iteration,
        "lr_drop_factor": schedule.lr_drop_factor,
        "patch_size": schedule.patch_size,
        "stride": schedule.stride,
        "parameters": model.parameter_count(),
        "slopes": model.slope_count(),
    });
    let mut manifest = RunManifest::new("train", args, common.seed, config);
    manifest.add_input_bytes(&a.dataset, &bytes);
    manifest.upstream_inputs = sibling_inputs(&a.dataset)?;
    let mut out = OutputDir::create(&common.out_dir(), manifest)?;
    if let Some(w) = initial {
        out.write(INITIAL_WEIGHTS_FILE, &w)?;
    }
    out.write(WEIGHTS_FILE, &encode_weights(&model))?;
    out.write(LOSS_FILE, curve.to_csv().as_bytes())?;
    out.finish()?;
    println!(
        "{} iterations, loss {:.6e} -> {:.6e}",
        curve.records.len(),
        curve.first().unwrap_or(f64::NAN),
        curve.last().unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn eval_interp(common: &Common, a: &EvalArgs, args: &[String]) -> CliResult<()> {
    let corpus = read_corpus(&a.corpus)?;
    let mut manifest = RunManifest::new("eval-interp", args, common.seed, serde_json::Value::Null);

    let mut training = Vec::new();
    for w in &a.weights {
        training.extend(sibling_inputs(w)?);
    }
    for m in &a.exclude_manifest {
        let loaded = RunManifest::load(m)?;
        training.extend(loaded.inputs.into_iter().chain(loaded.upstream_inputs));
        manifest.add_input(m)?;
    }
    let overlapping = corpus
        .iter()
        .filter(|img| {
            let h = sha256_hex(&img.bytes);
            training.iter().any(|d| d.sha256 == h)
        })
        .count();
    if overlapping > 0 {
        eprintln!("warning: {overlapping} held-out image(s) also appear in the training inputs");
    }

    let planes: Vec<Plane> = corpus.iter().map(|c| c.plane.clone()).collect();
    let mut report = EvalReport {
        rows: Vec::new(),
        overlapping_images: overlapping,
    };
    let mut models = Vec::new();
    for path in &a.weights {
        let bytes = read(path)?;
        let model = decode_weights(&bytes)?;
        manifest.add_input_bytes(path, &bytes);
        let variant = model.config().variant;
        let qp = a.qp.unwrap_or(model.config().qp_tag);
        let range = std_range(variant, a.std_min, a.std_max)?;
        report.rows.extend(evaluate_model(&model, &planes, qp, common.seed, range)?);
        models.push(json!({
            "path": path.display().to_string(),
            "variant": variant.to_string(),
            "qp_tag": model.config().qp_tag,
            "qp": qp,
            "std_min": range.0,
            "std_max": range.1,
        }));
    }
    add_corpus_inputs(&mut manifest, &corpus);
    manifest.config = json!({
        "models": models,
        "images": corpus.len(),
        "overlapping_images": overlapping,
    });

    let mut out = OutputDir::create(&common.out_dir(), manifest)?;
    out.write(EVAL_FILE, &report.to_csv())?;
    out.finish()?;
    for r in &report.rows {
        println!(
            "{} {:>3}  copy {:7.3}  dctif {:7.3}  gvtcnn {:7.3}  gain {:+.3}  gap {:+.3}",
            r.variant,
            r.position.to_string(),
            r.psnr_copy,
            r.psnr_dctif,
            r.psnr_gvtcnn,
            r.gain_vs_copy(),
            r.gap_vs_dctif()
        );
    }
    println!(
        "mean    copy {:7.3}  dctif {:7.3}  gvtcnn {:7.3}  gain {:+.3}  gap {:+.3}",
        report.mean_copy(),
        report.mean_dctif(),
        report.mean_gvtcnn(),
        report.mean_gvtcnn() - report.mean_copy(),
        report.mean_gvtcnn() - report.mean_dctif()
    );
    Ok(())
}

pub fn simulate(common: &Common, a: &SimulateArgs, args: &[String]) -> CliResult<()> {
    let cfg = SimConfig {
        block_size: a.block_size,
        search_range: a.search_range,
        lambda: a.lambda,
        selection_mode: a.mode,
        qp: a.qp,
    };
    cfg.validate()?;
    let mut manifest = RunManifest::new("simulate", args, common.seed, serde_json::Value::Null);

    let frames: Vec<Plane> = match (&a.frames, &a.raw) {
        (Some(dir), _) => {
            let corpus = read_corpus(dir)?;
            add_corpus_inputs(&mut manifest, &corpus);
            corpus.into_iter().map(|c| c.plane).collect()
        }
        (None, Some(raw)) => {
            let (w, h) = a.width.zip(a.height).ok_or_else(|| CliError::Usage("--raw needs --width and --height".into()))?;
            let bytes = read(raw)?;
            manifest.add_input_bytes(raw, &bytes);
            parse_raw_frames(&bytes, w, h, a.frame_count)?
        }
        (None, None) => return Err(CliError::Usage("either --frames or --raw is required".into())),
    };

    let models = match (&a.weights_h, &a.weights_q) {
        (Some(h), Some(q)) => {
            let mh = load_weights_expecting(h, Variant::H)?;
            let mq = load_weights_expecting(q, Variant::Q)?;
            manifest.add_input(h)?;
            manifest.add_input(q)?;
            Some((mh, mq))
        }
        (None, None) => None,
        _ => return Err(Error::Config("--weights-h and --weights-q must be given together".into()).into()),
    };
    if models.is_none() && a.mode != SelectionMode::DctifOnly {
        return Err(Error::Config(format!("--mode {} needs --weights-h and --weights-q", a.mode)).into());
    }
    let pair = models.as_ref().map(|(h, q)| ModelPair { h, q });
    let report = run_simulation(&frames, pair, &cfg)?;

    manifest.config = json!({
        "mode": a.mode.as_str(),
        "qp": a.qp,
        "lambda": a.lambda,
        "block_size": a.block_size,
        "search_range": a.search_range,
        "frames": frames.len(),
        "width": frames[0].width(),
        "height": frames[0].height(),
    });
    let mut out = OutputDir::create(&common.out_dir(), manifest)?;
    out.write(REPORT_FILE, report.to_csv().as_bytes())?;
    out.finish()?;
    println!(
        "{}: {} frames, mean psnr {:.3} dB, total cost {:.1} over {} blocks",
        report.mode,
        report.frames.len(),
        report.mean_psnr(),
        report.total_cost(),
        report.total_blocks()
    );
    Ok(())
}

pub fn synth(common: &Common, a: &SynthArgs, args: &[String]) -> CliResult<()> {
    if a.width == 0 || a.height == 0 {
        return Err(CliError::Usage("--width and --height must be positive".into()));
    }
    let (planes, prefix, config) = if a.sequence {
        let planes = synthetic_sequence(a.width, a.height, a.frames, (a.velocity_x, a.velocity_y), common.seed);
        let config = json!({
            "kind": "sequence",
            "width": a.width,
            "height": a.height,
            "frames": a.frames,
            "velocity_x": a.velocity_x,
            "velocity_y": a.velocity_y,
        });
        (planes, "frame", config)
    } else {
        let planes = synthetic_corpus(a.width, a.height, a.count, common.seed);
        let config = json!({
            "kind": "images",
            "width": a.width,
            "height": a.height,
            "count": a.count,
        });
        (planes, "img", config)
    };
    let manifest = RunManifest::new("synth", args, common.seed, config);
    let mut out = OutputDir::create(&common.out_dir(), manifest)?;
    for (i, p) in planes.iter().enumerate() {
        out.write(&format!("{prefix}_{i:04}.pgm"), &encode_pgm(p))?;
    }
    out.finish()?;
    println!("{} images written", planes.len());
    Ok(())
}

pub fn replay(common: &Common, a: &ReplayArgs, _args: &[String]) -> CliResult<()> {
    let m = RunManifest::load(&a.manifest)?;
    if m.tool != TOOL_NAME {
        return Err(CliError::Data(format!("{}: not a {TOOL_NAME} manifest", a.manifest.display())));
    }
    if m.command == "replay" {
        return Err(CliError::Usage("a replay manifest cannot be replayed".into()));
    }
    let mut argv = vec![TOOL_NAME.to_string()];
    argv.extend(m.args);
    if let Some(dir) = &common.out_dir {
        argv.push("--out-dir".into());
        argv.push(dir.display().to_string());
    }
    run_from(argv)
}

#[cfg(test)]
mod tests {
    use clap::Parser;

    use super::*;
    use crate::{Cli, Command};

    fn train_args(argv: &[&str]) -> TrainArgs {
        let mut full = vec!["gvtcnn", "train", "--dataset", "d.gvtd"];
        full.extend_from_slice(argv);
        match Cli::try_parse_from(full).unwrap().command {
            Command::Train(a) => a,
            _ => unreachable!(),
        }
    }

    #[test]
    fn default_schedule_is_the_full_one() {
        let s = train_schedule(&train_args(&[]), 0);
        assert_eq!(
            (s.total_iterations, s.batch_size, s.lr_initial, s.lr_drop_iteration, s.lr_drop_factor),
            (50_000, 128, 1e-4, 30_000, 10.0)
        );
    }

    #[test]
    fn short_schedules_drop_at_three_fifths_unless_told() {
        assert_eq!(train_schedule(&train_args(&["--iters", "5000"]), 0).lr_drop_iteration, 3000);
        assert_eq!(train_schedule(&train_args(&["--iters", "5000", "--lr-drop-iter", "10"]), 0).lr_drop_iteration, 10);
    }

    #[test]
    fn std_range_defaults_and_validation() {
        assert_eq!(std_range(Variant::Q, None, None).unwrap(), (0.7, 0.8));
        assert_eq!(std_range(Variant::H, Some(0.4), None).unwrap(), (0.4, 0.6));
        assert!(std_range(Variant::H, Some(0.7), Some(0.6)).is_err());
    }
}
