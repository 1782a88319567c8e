//! The `hipnet` command line tool.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assignment;
use crate::binio::read_file;
use crate::error::{HipError, Result};
use crate::evalmesh::{EvalConfig, MetricReport};
use crate::model::HipnetModel;
use crate::pipeline::{self, evaluate_model, evaluate_oracle, every_nth, reconstruct, subject_beta};
use crate::seeds;
use crate::skeleton::{flatten, read_json, write_json, Mat3, Pose, Vec3};
use crate::synthdata::{make_dataset, sample_surface, Dataset, DatasetConfig, FrameRecord, Split};
use crate::training::trainer::MODEL_FILE;
use crate::training::{fit_subject, sample_subject, FitConfig, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "hipnet", version, about = "Articulated implicit body models on synthetic capsule figures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset.
    GenData(GenDataArgs),
    /// Recompute joint assignments of every frame in a dataset, in place.
    Assign(AssignArgs),
    /// Train a model on a dataset's training split.
    Train(TrainArgs),
    /// Score a checkpoint on held-out frames.
    Eval(EvalArgs),
    /// Extract one reconstructed mesh.
    Mesh(MeshArgs),
    /// Drive one subject's body with another subject's motion.
    Retarget(RetargetArgs),
    /// Fit a subject code to a point cloud with the network frozen.
    Fit(FitArgs),
    /// Draw a new subject code from the trained code distribution.
    Sample(SampleArgs),
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub subjects: u32,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub sequences: u32,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub frames: u32,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub points: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = assignment::DEFAULT_NEIGHBORS)]
    pub neighbors: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AssignArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = assignment::DEFAULT_NEIGHBORS)]
    pub neighbors: usize,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// JSON file mirroring the training configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Drop subject codes and train one model per subject.
    #[arg(long)]
    pub single_subject: bool,
    /// With --single-subject, train only this subject.
    #[arg(long)]
    pub subject: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Resume from a directory written by an earlier run.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Stop after this many steps (the run can be resumed later).
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub surface_points: Option<usize>,
    #[arg(long)]
    pub eikonal_points: Option<usize>,
    #[arg(long)]
    pub lambda_eikonal: Option<f64>,
    #[arg(long)]
    pub lambda_normal: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Disable the per-joint sub-network loss terms.
    #[arg(long)]
    pub no_subnetwork_losses: bool,
    /// Feed sub-networks only the input point, not their parent's output.
    #[arg(long)]
    pub no_hierarchy: bool,
}

#[derive(Args, Debug, Clone)]
pub struct EvalOptions {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sample count for each metric.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub resolution: Option<usize>,
}

impl EvalOptions {
    fn config(&self) -> EvalConfig {
        let mut c = EvalConfig::default();
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(n) = self.samples {
            c.uniform_samples = n;
            c.surface_samples = n;
            c.chamfer_samples = n;
        }
        if let Some(r) = self.resolution {
            c.resolution = r;
        }
        c
    }
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint file or training output directory.
    #[arg(long, required_unless_present = "oracle")]
    pub checkpoint: Option<PathBuf>,
    /// Score the analytic ground truth against itself instead of a model.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Evaluate every n-th test frame.
    #[arg(long, default_value_t = 1)]
    pub frame_stride: usize,
    #[command(flatten)]
    pub eval: EvalOptions,
}

#[derive(Args, Debug)]
pub struct FrameSelect {
    #[arg(long)]
    pub subject: usize,
    #[arg(long, default_value_t = 0)]
    pub sequence: usize,
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
}

#[derive(Args, Debug)]
pub struct MeshArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub select: FrameSelect,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RetargetArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Subject whose body is shown.
    #[arg(long)]
    pub subject: usize,
    /// Subject whose motion is borrowed.
    #[arg(long)]
    pub poses_from: usize,
    #[arg(long)]
    pub sequence: usize,
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Output directory for one OBJ per frame.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Frame record (HIPF) holding the pose and points to fit.
    #[arg(long)]
    pub points_file: PathBuf,
    /// Use only this many points (taken in file order).
    #[arg(long)]
    pub count: Option<usize>,
    /// Keep only points whose normal faces +z.
    #[arg(long)]
    pub front_only: bool,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Code output (JSON); a mesh is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Also seeds the fit's point subsampling.
    #[command(flatten)]
    pub eval: EvalOptions,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Frame record whose pose is used for the mesh (rest pose otherwise).
    #[arg(long)]
    pub pose_from: Option<PathBuf>,
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Code output (JSON); a mesh is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

/// Record of one artifact-writing invocation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config_path: Option<PathBuf>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub checkpoint_sha256: Option<String>,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = read_file(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Manifest path for an output: `run.json` inside a directory, otherwise a
/// `.run.json` sibling.
pub fn manifest_path(out: &Path) -> PathBuf {
    if out.is_dir() {
        out.join("run.json")
    } else {
        let mut s = out.as_os_str().to_owned();
        s.push(".run.json");
        PathBuf::from(s)
    }
}

struct Run {
    manifest: RunManifest,
}

impl Run {
    fn new(command: &str, args: &[String]) -> Self {
        Run {
            manifest: RunManifest {
                command: command.into(),
                args: args.to_vec(),
                config_path: None,
                config: serde_json::Value::Null,
                seed: None,
                inputs: Vec::new(),
                outputs: Vec::new(),
                started_unix: now(),
                finished_unix: 0.0,
                checkpoint_sha256: None,
            },
        }
    }

    fn finish(mut self, out: &Path) -> Result<RunManifest> {
        self.manifest.finished_unix = now();
        write_json(&manifest_path(out), &self.manifest)?;
        Ok(self.manifest)
    }
}

fn checkpoint_file(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MODEL_FILE)
    } else {
        path.to_path_buf()
    }
}

fn load_model(ds: &Dataset, checkpoint: &Path, run: &mut Run) -> Result<(HipnetModel, Vec<usize>)> {
    let file = checkpoint_file(checkpoint);
    run.manifest.checkpoint_sha256 = Some(file_sha256(&file)?);
    run.manifest.inputs.push(file.clone());
    HipnetModel::load(&file, &ds.skeleton)
}

/// Maps a dataset subject id to the model's code row.
fn code_row(ids: &[usize], subject: usize) -> Result<usize> {
    ids.iter().position(|&i| i == subject).ok_or_else(|| HipError::UnknownSubject {
        id: subject,
        known: ids.to_vec(),
    })
}

fn code_for(model: &HipnetModel, ids: &[usize], subject: usize) -> Result<Vec<f64>> {
    if model.codes_index().is_none() {
        return Ok(Vec::new());
    }
    subject_beta(model, code_row(ids, subject)?)
}

fn frame_record(ds: &Dataset, sel: &FrameSelect) -> Result<FrameRecord> {
    let seq = ds.sequence(sel.subject, sel.sequence).ok_or_else(|| {
        HipError::Input(format!("subject {} has no sequence {}", sel.subject, sel.sequence))
    })?;
    let rel = seq
        .frames
        .get(sel.frame)
        .ok_or_else(|| HipError::Input(format!("sequence has no frame {}", sel.frame)))?;
    FrameRecord::read(&ds.root.join(rel), sel.subject as u32, sel.frame as u32)
}

fn write_code(path: &Path, code: &[f64]) -> Result<()> {
    write_json(path, &code.to_vec())
}

fn mesh_path(code_out: &Path) -> PathBuf {
    code_out.with_extension("obj")
}

pub fn cmd_gen_data(a: &GenDataArgs, argv: &[String]) -> Result<RunManifest> {
    let mut run = Run::new("gen-data", argv);
    let config = DatasetConfig {
        subjects: a.subjects as usize,
        sequences: a.sequences as usize,
        frames: a.frames as usize,
        points: a.points as usize,
        seed: a.seed,
        neighbors: a.neighbors,
    };
    make_dataset(&config, &a.out)?;
    run.manifest.config = serde_json::to_value(&config).unwrap_or_default();
    run.manifest.seed = Some(a.seed);
    run.manifest.outputs.push(a.out.clone());
    run.finish(&a.out)
}

pub fn cmd_assign(a: &AssignArgs, argv: &[String]) -> Result<RunManifest> {
    let mut run = Run::new("assign", argv);
    let ds = Dataset::open(&a.data)?;
    for split in [Split::Train, Split::Test] {
        for r in ds.frames(split) {
            let mut rec = ds.load(&r)?;
            rec.cloud.labels = assignment::assign(&rec.cloud.points, &rec.pose, a.neighbors)?;
            rec.write(&r.path)?;
        }
    }
    run.manifest.inputs.push(a.data.clone());
    run.manifest.outputs.push(a.data.clone());
    run.finish(&a.data)
}

/// Training configuration: defaults, then the config file, then any flag
/// given explicitly.
pub fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut c: TrainConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    macro_rules! set {
        ($($flag:ident => $($field:ident).+),* $(,)?) => {
            $(if let Some(v) = a.$flag { c.$($field).+ = v; })*
        };
    }
    set!(
        epochs => epochs,
        lr => lr,
        seed => seed,
        surface_points => surface_points,
        eikonal_points => eikonal_points,
        lambda_eikonal => lambda_eikonal,
        lambda_normal => lambda_normal,
        hidden => model.hidden,
        depth => model.depth,
        checkpoint_every => checkpoint_every,
    );
    if a.no_subnetwork_losses {
        c.subnetwork_losses = false;
    }
    if a.no_hierarchy {
        c.model.hierarchical = false;
    }
    if a.single_subject {
        c.model = c.model.single_subject();
    }
    c.validate()?;
    Ok(c)
}

pub fn cmd_train(a: &TrainArgs, argv: &[String]) -> Result<RunManifest> {
    let mut run = Run::new("train", argv);
    let config = train_config(a)?;
    let ds = Dataset::open(&a.data)?;
    run.manifest.config = serde_json::to_value(&config).unwrap_or_default();
    run.manifest.config_path = a.config.clone();
    run.manifest.seed = Some(config.seed);
    run.manifest.inputs.push(a.data.clone());
    let jobs: Vec<(Option<usize>, PathBuf, Option<PathBuf>)> = if a.single_subject && a.subject.is_none() {
        (0..ds.subject_count())
            .map(|s| {
                let sub = format!("subject{s}");
                (Some(s), a.out.join(&sub), a.checkpoint.as_ref().map(|c| c.join(&sub)))
            })
            .collect()
    } else {
        vec![(a.subject, a.out.clone(), a.checkpoint.clone())]
    };
    let mut hashes = Vec::new();
    for (subject, out, resume) in jobs {
        if let Some(r) = &resume {
            run.manifest.inputs.push(r.clone());
        }
        pipeline::train_on_dataset(&ds, &config, &out, resume.as_deref(), subject, a.max_steps, |_| {})?;
        hashes.push(file_sha256(&out.join(MODEL_FILE))?);
        run.manifest.outputs.push(out);
    }
    run.manifest.checkpoint_sha256 = Some(hashes.join(","));
    run.finish(&a.out)
}

pub fn cmd_eval(a: &EvalArgs, argv: &[String]) -> Result<(RunManifest, MetricReport)> {
    let mut run = Run::new("eval", argv);
    let ds = Dataset::open(&a.data)?;
    let config = a.eval.config();
    let refs = every_nth(ds.frames(Split::Test), a.frame_stride);
    if refs.is_empty() {
        return Err(HipError::Input("dataset has no test frames".into()));
    }
    run.manifest.inputs.push(a.data.clone());
    let report = if a.oracle {
        evaluate_oracle(&ds, &refs, &config)?
    } else {
        let ckpt = a.checkpoint.as_ref().expect("clap enforces checkpoint");
        let (model, ids) = load_model(&ds, ckpt, &mut run)?;
        let refs: Vec<_> = if model.codes_index().is_some() {
            refs
        } else {
            // A single-subject model only knows its own subject.
            refs.into_iter().filter(|r| ids.is_empty() || ids.contains(&r.subject)).collect()
        };
        if refs.is_empty() {
            return Err(HipError::Input("no test frames for the checkpoint's subject".into()));
        }
        evaluate_model(&model, &ds, &refs, &config, |s| code_for(&model, &ids, s))?
    };
    write_json(&a.out, &report)?;
    run.manifest.config = serde_json::to_value(&config).unwrap_or_default();
    run.manifest.seed = Some(config.seed);
    run.manifest.outputs.push(a.out.clone());
    Ok((run.finish(&a.out)?, report))
}

fn mesh_config(resolution: Option<usize>) -> EvalConfig {
    let mut c = EvalConfig::default();
    if let Some(r) = resolution {
        c.resolution = r;
    }
    c
}

pub fn cmd_mesh(a: &MeshArgs, argv: &[String]) -> Result<RunManifest> {
    let mut run = Run::new("mesh", argv);
    let ds = Dataset::open(&a.data)?;
    let (model, ids) = load_model(&ds, &a.checkpoint, &mut run)?;
    let rec = frame_record(&ds, &a.select)?;
    let beta = code_for(&model, &ids, a.select.subject)?;
    let mesh = reconstruct(&model, &rec.pose, &beta, &mesh_config(a.resolution))?;
    if mesh.is_empty() {
        eprintln!("warning: the zero level set is empty; writing an empty mesh");
    }
    mesh.write_obj(&a.out)?;
    run.manifest.outputs.push(a.out.clone());
    run.finish(&a.out)
}

pub fn cmd_retarget(a: &RetargetArgs, argv: &[String]) -> Result<RunManifest> {
    let mut run = Run::new("retarget", argv);
    let ds = Dataset::open(&a.data)?;
    let (model, ids) = load_model(&ds, &a.checkpoint, &mut run)?;
    if model.codes_index().is_none() {
        return Err(HipError::Input("retargeting needs a multi-subject checkpoint".into()));
    }
    let row = code_row(&ids, a.subject)?;
    let meshes = pipeline::retarget(&model, &ds, row, a.poses_from, a.sequence, &mesh_config(a.resolution))?;
    crate::binio::build_dir_atomic(&a.out, |dir| {
        for (f, m) in meshes.iter().enumerate() {
            m.write_obj(&dir.join(format!("frame_{f:04}.obj")))?;
        }
        Ok(())
    })?;
    run.manifest.outputs.push(a.out.clone());
    run.finish(&a.out)
}

pub fn cmd_fit(a: &FitArgs, argv: &[String]) -> Result<(RunManifest, Option<f64>)> {
    let mut run = Run::new("fit", argv);
    let ds = Dataset::open(&a.data)?;
    let (model, _) = load_model(&ds, &a.checkpoint, &mut run)?;
    let rec = FrameRecord::read(&a.points_file, 0, 0)?;
    let mut cloud = rec.cloud.clone();
    if a.front_only {
        cloud = cloud.front_only();
    }
    if let Some(n) = a.count {
        let idx: Vec<usize> = (0..n.min(cloud.len())).collect();
        cloud = cloud.subset(&idx);
    }
    let mut fit = FitConfig {
        seed: a.eval.seed.unwrap_or(0),
        ..FitConfig::default()
    };
    if let Some(i) = a.iterations {
        fit.iterations = i;
    }
    if let Some(lr) = a.lr {
        fit.lr = lr;
    }
    let pv = flatten(&rec.pose);
    let code = fit_subject(&model, &cloud, &pv, &fit)?;
    write_code(&a.out, &code)?;
    let eval = a.eval.config();
    let mesh = reconstruct(&model, &rec.pose, &code, &eval)?;
    mesh.write_obj(&mesh_path(&a.out))?;
    // Score against the frame's own subject when the dataset knows it.
    let miou = match ds.figures.get(rec.pose.subject as usize) {
        Some(fig) => {
            let posed = fig.posed(&rec.pose);
            let gt = |p: &[crate::geom::P3]| Ok(posed.sdf_batch(p));
            Some(crate::evalmesh::uniform_miou(
                pipeline::model_sdf(&model, &pv, &code),
                gt,
                &posed.bounds(),
                eval.uniform_samples,
                eval.seed,
            )?)
        }
        None => None,
    };
    if let Some(m) = miou {
        println!("fitted {} points: uniform mIoU {m:.2}%", cloud.len());
    }
    run.manifest.config = serde_json::to_value(&fit).unwrap_or_default();
    run.manifest.seed = Some(fit.seed);
    run.manifest.inputs.push(a.points_file.clone());
    run.manifest.outputs.extend([a.out.clone(), mesh_path(&a.out)]);
    Ok((run.finish(&a.out)?, miou))
}

pub fn rest_pose(ds: &Dataset) -> Result<Pose> {
    crate::skeleton::forward_kinematics(&ds.skeleton, &vec![Mat3::identity(); ds.skeleton.len()], Vec3::zeros())
}

pub fn cmd_sample(a: &SampleArgs, argv: &[String]) -> Result<RunManifest> {
    let mut run = Run::new("sample", argv);
    let ds = Dataset::open(&a.data)?;
    let (model, _) = load_model(&ds, &a.checkpoint, &mut run)?;
    let code = sample_subject(&model, a.seed)?;
    let pose = match &a.pose_from {
        Some(p) => FrameRecord::read(p, 0, 0)?.pose,
        None => rest_pose(&ds)?,
    };
    write_code(&a.out, &code)?;
    reconstruct(&model, &pose, &code, &mesh_config(a.resolution))?.write_obj(&mesh_path(&a.out))?;
    run.manifest.seed = Some(a.seed);
    run.manifest.outputs.extend([a.out.clone(), mesh_path(&a.out)]);
    run.finish(&a.out)
}

/// Fresh surface samples of a dataset subject at a frame's pose, stored as
/// a frame record (handy for fitting experiments with large point counts).
pub fn resample_frame(ds: &Dataset, sel: &FrameSelect, count: usize, seed: u64) -> Result<FrameRecord> {
    let rec = frame_record(ds, sel)?;
    let fig = &ds.figures[sel.subject];
    let mut cloud = sample_surface(fig, &rec.pose, count, seeds::derive(seed, &[sel.subject as u64]))?;
    cloud.labels = assignment::assign(&cloud.points, &rec.pose, assignment::DEFAULT_NEIGHBORS)?;
    Ok(FrameRecord { pose: rec.pose, cloud })
}

fn configure_threads() {
    if let Some(n) = std::env::var("HIPNET_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // Fails only if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

/// Parses `args` and runs the chosen command.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<String> = args
        .into_iter()
        .map(|a| a.into().to_string_lossy().into_owned())
        .collect();
    let cli = Cli::try_parse_from(&argv).map_err(|e| HipError::Input(e.to_string()))?;
    dispatch(&cli, &argv)
}

pub fn dispatch(cli: &Cli, argv: &[String]) -> Result<()> {
    configure_threads();
    match &cli.command {
        Command::GenData(a) => cmd_gen_data(a, argv).map(drop),
        Command::Assign(a) => cmd_assign(a, argv).map(drop),
        Command::Train(a) => cmd_train(a, argv).map(drop),
        Command::Eval(a) => cmd_eval(a, argv).map(|(_, r)| {
            println!(
                "uniform mIoU {:.2}%  near-surface mIoU {:.2}%  chamfer-L1 {:.5}",
                r.uniform_miou, r.near_surface_miou, r.chamfer_l1
            )
        }),
        Command::Mesh(a) => cmd_mesh(a, argv).map(drop),
        Command::Retarget(a) => cmd_retarget(a, argv).map(drop),
        Command::Fit(a) => cmd_fit(a, argv).map(drop),
        Command::Sample(a) => cmd_sample(a, argv).map(drop),
    }
}

/// Entry point for the binary: clap usage errors exit with status 2, other
/// failures print one line and exit with status 1.
pub fn main() -> std::process::ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match dispatch(&cli, &argv) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::ExitCode::FAILURE
        }
    }
}
