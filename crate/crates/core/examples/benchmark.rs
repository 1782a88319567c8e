//! Synthetic benchmark: two capsule subjects, eight sequences of twenty
//! frames each, a width-128/depth-8 model, and evaluation on held-out
//! sequences against the analytic ground truth.
//!
//! cargo run --release --example benchmark -- --out /tmp/bench --epochs 4

use std::path::PathBuf;
use std::time::Instant;

use clap::Parser;
use hipnet::evalmesh::EvalConfig;
use hipnet::model::{HipnetModel, ModelConfig};
use hipnet::pipeline::{evaluate_model, every_nth, subject_beta, train_on_dataset};
use hipnet::synthdata::{make_dataset, Dataset, DatasetConfig, Split};
use hipnet::training::TrainConfig;

#[derive(Parser)]
struct Args {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    epochs: usize,
    #[arg(long, default_value_t = 5000)]
    points_per_frame: usize,
    #[arg(long, default_value_t = 500)]
    batch_points: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// full, no-hierarchy, base, or single
    #[arg(long, default_value = "full")]
    variant: String,
    #[arg(long, default_value_t = 10)]
    eval_stride: usize,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn main() -> hipnet::Result<()> {
    let a = Args::parse();
    let data = a.out.join("data");
    if !data.exists() {
        let cfg = DatasetConfig {
            subjects: 2,
            sequences: 8,
            frames: 20,
            points: a.points_per_frame,
            seed: a.seed,
            neighbors: 8,
        };
        make_dataset(&cfg, &data)?;
    }
    let ds = Dataset::open(&data)?;
    let mut model = ModelConfig {
        hidden: 128,
        depth: 8,
        ..ModelConfig::default()
    };
    let mut train = TrainConfig {
        surface_points: a.batch_points,
        eikonal_points: a.batch_points,
        lr: a.lr,
        epochs: a.epochs,
        seed: a.seed,
        ..TrainConfig::default()
    };
    match a.variant.as_str() {
        "full" => {}
        "no-hierarchy" => model.hierarchical = false,
        "base" => {
            model.hierarchical = false;
            train.subnetwork_losses = false;
        }
        "single" => model = model.single_subject(),
        v => panic!("unknown variant {v}"),
    }
    train.model = model;
    let eval = EvalConfig {
        uniform_samples: a.samples,
        surface_samples: a.samples,
        chamfer_samples: a.samples,
        seed: a.seed,
        ..EvalConfig::default()
    };
    let subjects: Vec<Option<usize>> = if a.variant == "single" { (0..ds.subject_count()).map(Some).collect() } else { vec![None] };
    for subject in subjects {
        let dir = a.out.join(format!("{}{}", a.variant, subject.map_or(String::new(), |s| format!("_s{s}"))));
        let t = Instant::now();
        let mut window = Vec::new();
        let summary = train_on_dataset(&ds, &train, &dir, None, subject, None, |r| {
            window.push(r.loss.total);
            if window.len() == 40 {
                let mean = window.iter().sum::<f64>() / 40.0;
                println!("step {:5} epoch {:3} loss {mean:.5} ({:.0}s)", r.step + 1, r.epoch, t.elapsed().as_secs_f64());
                window.clear();
            }
        })?;
        println!("trained {} steps in {:.0}s", summary.steps, t.elapsed().as_secs_f64());
        let (m, _) = HipnetModel::load(&dir.join("model.hipw"), &ds.skeleton)?;
        let refs: Vec<_> = every_nth(ds.frames(Split::Test), a.eval_stride)
            .into_iter()
            .filter(|r| subject.is_none_or(|s| r.subject == s))
            .collect();
        let t = Instant::now();
        let report = evaluate_model(&m, &ds, &refs, &eval, |s| subject_beta(&m, s))?;
        println!(
            "{}: uniform {:.2} near {:.2} chamfer {:.4} per-joint {:?} ({} frames, {:.0}s)",
            dir.display(),
            report.uniform_miou,
            report.near_surface_miou,
            report.chamfer_l1,
            report.per_joint_near_surface_iou.iter().map(|v| v.map(|x| (x * 10.0).round() / 10.0)).collect::<Vec<_>>(),
            refs.len(),
            t.elapsed().as_secs_f64()
        );
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report).unwrap()).unwrap();
    }
    Ok(())
}
