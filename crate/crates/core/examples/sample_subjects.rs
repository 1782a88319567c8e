//! Draws new subject codes from a Gaussian fitted to the trained codes and
//! meshes each one in the rest pose.
//!
//! cargo run --release --example sample_subjects -- /tmp/hipnet-small

use hipnet::cli::rest_pose;
use hipnet::evalmesh::EvalConfig;
use hipnet::pipeline::reconstruct;
use hipnet::training::sample_subject;

mod common;

fn main() -> hipnet::Result<()> {
    let dir = common::workdir("small");
    let (ds, model, _) = common::trained(&dir)?;
    let pose = rest_pose(&ds)?;
    let config = EvalConfig {
        resolution: 48,
        ..EvalConfig::default()
    };
    for seed in 0..4 {
        let code = sample_subject(&model, seed)?;
        let norm = code.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mesh = reconstruct(&model, &pose, &code, &config)?;
        let path = dir.join(format!("sampled_{seed}.obj"));
        mesh.write_obj(&path)?;
        println!("seed {seed}: |code| {norm:.4}, volume {:.4} -> {}", mesh.volume(), path.display());
    }
    Ok(())
}
