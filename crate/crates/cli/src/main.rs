//! `graspkit`: annotate objects, build scene ground truth, simplify, corrupt
//! and repair depth, train the memory bank, propose and evaluate grasps.
//!
//! Every command prints one JSON line on success and on failure. Exit codes:
//! 0 success, 2 input error, 3 invariant violation.

mod scene_file;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use graspkit::annotate::annotate_object;
use graspkit::config::{stage_seed, PipelineConfig};
use graspkit::depth::{self, OracleRepairer, RepairPredictor, SmoothingRepairer};
use graspkit::enhance::{sample_descriptors, AttentionWeights, DescriptorConfig, MemoryBank};
use graspkit::error::Error;
use graspkit::evaluate::{self, Enhancement, PredictionSet};
use graspkit::io::{bank, gann, pgm, ply, predictions};
use graspkit::scene::{observed_cloud, render_supervision};
use graspkit::simplify::{compression_stats, simplify_with};
use serde_json::{json, Map, Value};

#[derive(Parser)]
#[command(name = "graspkit", version, about = "Grasp annotation and evaluation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Root seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML config file; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Writes the effective config to this path.
    #[arg(long, global = true)]
    emit_config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Annotate an object surface (PLY with normals) into a GANN file.
    Annotate {
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Object id; defaults to the file stem.
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        views: Option<usize>,
        #[arg(long)]
        angles: Option<usize>,
        /// Number of depths, spread evenly up to the finger length.
        #[arg(long)]
        depths: Option<usize>,
        #[arg(long)]
        voxel: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Build scene ground truth and supervision from a scene.json.
    Scene {
        input: PathBuf,
        /// Output directory.
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Simplify a scene annotation.
    Simplify {
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        keep: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Apply the sensor noise model to a depth map.
    Corrupt {
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Repair a real depth map.
    Repair {
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = Predictor::Smoothing)]
        predictor: Predictor,
        /// Clean depth; required by the oracle, used for RMSE otherwise.
        #[arg(long)]
        sim: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Update (or initialise) the memory bank from clouds with normals.
    Bank {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        /// Existing bank checkpoint to continue from.
        #[arg(long)]
        init: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Propose grasps on a cloud with normals and a graspness scalar.
    Propose {
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value = "scene")]
        scene_id: String,
        /// Bank checkpoint enabling descriptor enhancement.
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long)]
        top_m: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate predictions against scene ground truth.
    Eval {
        input: PathBuf,
        /// scene.json files, one per evaluated scene.
        #[arg(long, required = true)]
        scene: Vec<PathBuf>,
        /// Report JSON; a CSV table is written next to it.
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Predictor {
    Oracle,
    Smoothing,
}

type CmdResult = Result<Map<String, Value>, Error>;

fn load_config(common: &Common) -> Result<PipelineConfig, Error> {
    let mut cfg = match &common.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn finish_config(cfg: &PipelineConfig, common: &Common, out: &mut Map<String, Value>) -> Result<(), Error> {
    cfg.validate()?;
    if let Some(p) = &common.emit_config {
        std::fs::write(p, cfg.to_toml()?)?;
    }
    out.insert("seed".into(), json!(cfg.seed));
    Ok(())
}

fn summary(command: &str) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("command".into(), json!(command));
    m.insert("status".into(), json!("ok"));
    m
}

fn cmd_annotate(
    input: &Path,
    output: &Path,
    id: Option<String>,
    overrides: (Option<usize>, Option<usize>, Option<usize>, Option<f64>),
    common: &Common,
) -> CmdResult {
    let start = Instant::now();
    let mut out = summary("annotate");
    let mut cfg = load_config(common)?;
    let (views, angles, depths, voxel) = overrides;
    let a = &mut cfg.annotation;
    if let Some(v) = views {
        a.views = v;
    }
    if let Some(n) = angles {
        a.gripper.angle_count = n;
    }
    if let Some(n) = depths {
        if n == 0 {
            return Err(Error::InvalidArgument("--depths must be at least 1".into()));
        }
        let l = a.gripper.finger_length;
        a.gripper.depth_grid = (1..=n).map(|k| k as f64 * l / n as f64).collect();
    }
    if let Some(v) = voxel {
        a.voxel = v;
    }
    finish_config(&cfg, common, &mut out)?;
    let id = id.unwrap_or_else(|| {
        input
            .file_stem()
            .map_or("object".into(), |s| s.to_string_lossy().into_owned())
    });
    let model = scene_file::load_model(&id, input, None)?;
    let tensor = annotate_object(&model, &cfg.annotation)?;
    gann::write_file(output, &gann::Gann::Object(tensor.clone()))?;
    let (p, v, na, nd) = tensor.shape();
    out.insert("object_id".into(), json!(id));
    out.insert("points".into(), json!(p));
    out.insert("shape".into(), json!([p, v, na, nd]));
    out.insert("candidates_per_point".into(), json!(tensor.candidates_per_point()));
    out.insert("positives".into(), json!(tensor.positives()));
    out.insert("elapsed_s".into(), json!(start.elapsed().as_secs_f64()));
    Ok(out)
}

fn cmd_scene(input: &Path, output: &Path, common: &Common) -> CmdResult {
    let mut out = summary("scene");
    let cfg = load_config(common)?;
    finish_config(&cfg, common, &mut out)?;
    let loaded = scene_file::load(input)?;
    let gt = &loaded.ground_truth;
    std::fs::create_dir_all(output)?;
    gann::write_file(&output.join("scene.gann"), &gann::Gann::Scene(gt.candidates.clone()))?;

    let depth = match &loaded.depth {
        Some(p) => graspkit::io::depth::read_file(p)?,
        None => gt.render_depth()?,
    };
    graspkit::io::depth::write_file(&output.join("depth.bin"), &depth)?;
    let (w, h) = (depth.width(), depth.height());
    pgm::write_file(&output.join("depth.pgm"), &pgm::depth_pgm(w, h, &depth.values)?)?;
    let targets = render_supervision(gt, &depth)?;
    pgm::write_file(&output.join("graspness.pgm"), &pgm::heatmap_pgm(w, h, &targets.heatmap)?)?;
    pgm::write_file(&output.join("object_mask.pgm"), &pgm::mask_pgm(w, h, &targets.object_mask)?)?;
    write_view_graspness(&output.join("view_graspness.csv"), &targets.view_graspness, gt.candidates.view_count)?;

    let cloud = observed_cloud(&depth, &gt.camera, &targets, cfg.normal_radius)?;
    let data = ply::PlyData {
        cloud: cloud.clone(),
        faces: Vec::new(),
    };
    ply::write_ply_file(&output.join("cloud.ply"), &data, ply::PlyEncoding::BinaryLittleEndian)?;

    let mu_min = gt.candidates.mu_grid.values().iter().copied().fold(f64::INFINITY, f64::min);
    let truth = evaluate::ground_truth_predictions(gt, mu_min, evaluate::TOP_K)?;
    predictions::write_predictions_file(&output.join("ground_truth.csv"), &[&truth])?;

    let (p, v, na, nd) = gt.candidates.shape();
    out.insert("scene_id".into(), json!(gt.scene_id));
    out.insert("objects".into(), json!(gt.objects.len()));
    out.insert("shape".into(), json!([p, v, na, nd]));
    out.insert("positives".into(), json!(gt.candidates.positives()));
    out.insert("observed_points".into(), json!(cloud.len()));
    out.insert("object_pixels".into(), json!(targets.object_mask.iter().filter(|&&m| m).count()));
    Ok(out)
}

fn write_view_graspness(path: &Path, rows: &[Vec<f64>], views: usize) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["point".to_string()];
    header.extend((0..views).map(|v| format!("v{v}")));
    w.write_record(&header)?;
    for (i, row) in rows.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(|g| g.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_simplify(input: &Path, output: &Path, keep: Option<usize>, common: &Common) -> CmdResult {
    let mut out = summary("simplify");
    let mut cfg = load_config(common)?;
    if let Some(k) = keep {
        cfg.keep_views = k;
    }
    finish_config(&cfg, common, &mut out)?;
    let candidates = match gann::read_file(input)? {
        gann::Gann::Scene(c) => c,
        other => {
            return Err(Error::InvalidArgument(format!(
                "expected a scene annotation, found {:?}",
                other.kind()
            )))
        }
    };
    let simplified = simplify_with(&candidates, cfg.keep_views)?;
    simplified.validate()?;
    gann::write_file(output, &gann::Gann::Simplified(simplified.clone()))?;
    let stats = compression_stats(&candidates, &simplified)?;
    out.insert("points_before".into(), json!(candidates.shape().0));
    out.insert("points_after".into(), json!(simplified.points.len()));
    if let Value::Object(m) = serde_json::to_value(&stats)? {
        out.extend(m);
    }
    Ok(out)
}

fn cmd_corrupt(input: &Path, output: &Path, common: &Common) -> CmdResult {
    let mut out = summary("corrupt");
    let cfg = load_config(common)?;
    finish_config(&cfg, common, &mut out)?;
    let sim = graspkit::io::depth::read_file(input)?;
    let mut model = cfg.noise.clone();
    model.seed = stage_seed(cfg.seed, "corrupt");
    let real = depth::corrupt(&sim, &model)?;
    graspkit::io::depth::write_file(output, &real)?;
    out.insert("stage_seed".into(), json!(model.seed.to_string()));
    out.insert("valid_before".into(), json!(sim.valid_count()));
    out.insert("valid_after".into(), json!(real.valid_count()));
    out.insert("rmse_mm".into(), json!(depth::rmse(&real, &sim)?));
    Ok(out)
}

fn cmd_repair(input: &Path, output: &Path, predictor: Predictor, sim: Option<&Path>, common: &Common) -> CmdResult {
    let mut out = summary("repair");
    let cfg = load_config(common)?;
    finish_config(&cfg, common, &mut out)?;
    let real = graspkit::io::depth::read_file(input)?;
    let sim = sim.map(graspkit::io::depth::read_file).transpose()?;
    let residual = match predictor {
        Predictor::Oracle => {
            let sim = sim
                .clone()
                .ok_or_else(|| Error::InvalidArgument("the oracle predictor needs --sim".into()))?;
            OracleRepairer { sim }.predict(&real)?
        }
        Predictor::Smoothing => SmoothingRepairer.predict(&real)?,
    };
    let repaired = depth::apply_repair(&real, &residual)?;
    graspkit::io::depth::write_file(output, &repaired.depth)?;
    out.insert(
        "predictor".into(),
        json!(match predictor {
            Predictor::Oracle => "oracle",
            Predictor::Smoothing => "smoothing",
        }),
    );
    out.insert("clamped".into(), json!(repaired.clamped));
    if let Some(sim) = &sim {
        out.insert("rmse_before_mm".into(), json!(depth::rmse(&real, sim)?));
        out.insert("rmse_mm".into(), json!(depth::rmse(&repaired.depth, sim)?));
    }
    Ok(out)
}

fn cmd_bank(inputs: &[PathBuf], output: &Path, init: Option<&Path>, common: &Common) -> CmdResult {
    let mut out = summary("bank");
    let cfg = load_config(common)?;
    finish_config(&cfg, common, &mut out)?;
    let desc = DescriptorConfig::from_gripper(&cfg.annotation.gripper, cfg.bank.dim);
    let root = stage_seed(cfg.seed, "bank");
    let mut batches = Vec::with_capacity(inputs.len());
    for (i, path) in inputs.iter().enumerate() {
        let cloud = ply::read_ply_file(path)?.cloud;
        batches.push(sample_descriptors(&cloud, &desc, cfg.bank.samples, root.wrapping_add(i as u64))?);
    }
    let mut memory = match init {
        Some(p) => bank::read_file(p)?,
        None => {
            let first: Vec<Vec<f64>> = batches.iter().flatten().map(|f| f.vector.clone()).collect();
            MemoryBank::from_features(&first, cfg.bank.k, cfg.bank.alpha, root)?
        }
    };
    if memory.dim() != cfg.bank.dim {
        return Err(Error::InvalidArgument(format!(
            "bank dimension {} differs from the configured {}",
            memory.dim(),
            cfg.bank.dim
        )));
    }
    let (mut assigned, mut skipped) = (0, 0);
    for batch in &batches {
        let stats = memory.update(batch)?;
        assigned += stats.assigned;
        skipped += stats.skipped;
    }
    bank::write_file(output, &memory)?;
    out.insert("k".into(), json!(memory.k()));
    out.insert("dim".into(), json!(memory.dim()));
    out.insert("update_count".into(), json!(memory.update_count));
    out.insert("assigned".into(), json!(assigned));
    out.insert("skipped".into(), json!(skipped));
    Ok(out)
}

fn cmd_propose(
    input: &Path,
    output: &Path,
    scene_id: &str,
    bank_path: Option<&Path>,
    top_m: Option<usize>,
    common: &Common,
) -> CmdResult {
    let mut out = summary("propose");
    let mut cfg = load_config(common)?;
    if let Some(m) = top_m {
        cfg.proposal.top_m = m;
    }
    finish_config(&cfg, common, &mut out)?;
    let cloud = ply::read_ply_file(input)?.cloud;
    let graspness = cloud
        .scalar("graspness")
        .ok_or_else(|| Error::InvalidArgument("cloud has no graspness property".into()))?
        .to_vec();
    let memory = bank_path.map(bank::read_file).transpose()?;
    let weights = match &memory {
        Some(m) => Some(AttentionWeights::random(
            m.dim(),
            cfg.bank.model_dim,
            cfg.bank.heads,
            stage_seed(cfg.seed, "attention"),
        )?),
        None => None,
    };
    let enhancement = match (&memory, &weights) {
        (Some(bank), Some(weights)) => Some(Enhancement {
            bank,
            weights,
            descriptor: DescriptorConfig::from_gripper(&cfg.annotation.gripper, bank.dim()),
        }),
        _ => None,
    };
    let set = evaluate::propose_grasps(
        scene_id,
        &cloud,
        &graspness,
        &cfg.annotation.gripper,
        &cfg.proposal,
        enhancement.as_ref(),
    )?;
    predictions::write_predictions_file(output, &[&set])?;
    out.insert("scene_id".into(), json!(scene_id));
    out.insert("predictions".into(), json!(set.len()));
    out.insert("enhanced".into(), json!(enhancement.is_some()));
    out.insert("top_confidence".into(), json!(set.grasps().first().map(|g| g.confidence)));
    Ok(out)
}

fn cmd_eval(input: &Path, scenes: &[PathBuf], output: &Path, common: &Common) -> CmdResult {
    let mut out = summary("eval");
    let cfg = load_config(common)?;
    finish_config(&cfg, common, &mut out)?;
    let sets = predictions::read_predictions_file(input)?;
    let truths = scenes
        .iter()
        .map(|p| scene_file::load(p).map(|l| l.ground_truth))
        .collect::<Result<Vec<_>, _>>()?;
    let mut runs: Vec<(&PredictionSet, _)> = Vec::new();
    for gt in &truths {
        let set = sets.iter().find(|s| s.scene_id == gt.scene_id).ok_or_else(|| {
            Error::InvalidArgument(format!("no predictions for scene {}", gt.scene_id))
        })?;
        runs.push((set, gt));
    }
    for s in &sets {
        if !truths.iter().any(|t| t.scene_id == s.scene_id) {
            return Err(Error::InvalidArgument(format!("no ground truth for scene {}", s.scene_id)));
        }
    }
    let report = evaluate::average_precision_scenes(&runs, &cfg.annotation.mu_grid)?;
    std::fs::write(output, predictions::report_json(&report)?)?;
    std::fs::write(output.with_extension("csv"), predictions::report_csv(&report)?)?;
    out.insert("scenes".into(), json!(report.per_scene.len()));
    out.insert("AP".into(), json!(report.ap));
    for m in &report.ap_per_mu {
        out.insert(format!("AP_{}", m.mu), json!(m.ap));
    }
    Ok(out)
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Annotate {
            input,
            output,
            id,
            views,
            angles,
            depths,
            voxel,
            common,
        } => cmd_annotate(&input, &output, id, (views, angles, depths, voxel), &common),
        Command::Scene { input, output, common } => cmd_scene(&input, &output, &common),
        Command::Simplify {
            input,
            output,
            keep,
            common,
        } => cmd_simplify(&input, &output, keep, &common),
        Command::Corrupt { input, output, common } => cmd_corrupt(&input, &output, &common),
        Command::Repair {
            input,
            output,
            predictor,
            sim,
            common,
        } => cmd_repair(&input, &output, predictor, sim.as_deref(), &common),
        Command::Bank {
            inputs,
            output,
            init,
            common,
        } => cmd_bank(&inputs, &output, init.as_deref(), &common),
        Command::Propose {
            input,
            output,
            scene_id,
            bank,
            top_m,
            common,
        } => cmd_propose(&input, &output, &scene_id, bank.as_deref(), top_m, &common),
        Command::Eval {
            input,
            scene,
            output,
            common,
        } => cmd_eval(&input, &scene, &output, &common),
    }
}

fn error_code(e: &Error) -> (&'static str, u8) {
    match e {
        Error::Invariant(_) => ("invariant_violation", 3),
        Error::Io(_) => ("io_error", 2),
        Error::Format { .. } | Error::Json(_) | Error::Csv(_) => ("malformed_input", 2),
        Error::InvalidArgument(_) => ("invalid_argument", 2),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{}", Value::Object(summary));
            ExitCode::SUCCESS
        }
        Err(e) => {
            let (code, exit) = error_code(&e);
            println!("{}", json!({"status": "error", "error_code": code, "message": e.to_string()}));
            eprintln!("error: {e}");
            ExitCode::from(exit)
        }
    }
}
