//! Scores a trained model on held-out frames against the analytic oracle,
//! next to the oracle scored against itself.
//!
//! cargo run --release --example evaluate -- /tmp/hipnet-small

use hipnet::evalmesh::EvalConfig;
use hipnet::pipeline::{evaluate_model, evaluate_oracle, subject_beta};
use hipnet::synthdata::Split;

mod common;

fn main() -> hipnet::Result<()> {
    let dir = common::workdir("small");
    let (ds, model, _) = common::trained(&dir)?;
    let refs = ds.frames(Split::Test);
    let config = EvalConfig {
        uniform_samples: 20_000,
        surface_samples: 20_000,
        chamfer_samples: 20_000,
        resolution: 64,
        ..EvalConfig::default()
    };
    let oracle = evaluate_oracle(&ds, &refs[..2], &config)?;
    println!(
        "oracle: uniform {:.2}%  near {:.2}%  chamfer {:.2e}",
        oracle.uniform_miou, oracle.near_surface_miou, oracle.chamfer_l1
    );
    let report = evaluate_model(&model, &ds, &refs, &config, |s| subject_beta(&model, s))?;
    println!(
        "model:  uniform {:.2}%  near {:.2}%  chamfer {:.4}  over {} frames",
        report.uniform_miou,
        report.near_surface_miou,
        report.chamfer_l1,
        report.frames.len()
    );
    for (k, iou) in report.per_joint_near_surface_iou.iter().enumerate() {
        let v = iou.map_or("-".to_string(), |v| format!("{v:.1}%"));
        println!("  {:>10}  {v}", ds.skeleton.joints()[k].name);
    }
    Ok(())
}
