//! Drives subject 0's body with subject 1's motion: the subject code stays
//! fixed while the poses come from the other sequence.
//!
//! cargo run --release --example retarget -- /tmp/hipnet-small

use hipnet::evalmesh::EvalConfig;
use hipnet::pipeline::retarget;

mod common;

fn main() -> hipnet::Result<()> {
    let dir = common::workdir("small");
    let (ds, model, ids) = common::trained(&dir)?;
    let target = ids.iter().position(|&s| s == 0).expect("subject 0 was trained");
    let config = EvalConfig {
        resolution: 48,
        ..EvalConfig::default()
    };
    let meshes = retarget(&model, &ds, target, 1, 0, &config)?;
    let out = dir.join("retarget");
    std::fs::create_dir_all(&out).unwrap();
    for (f, m) in meshes.iter().enumerate() {
        let path = out.join(format!("frame_{f:04}.obj"));
        m.write_obj(&path)?;
        println!("frame {f}: {} triangles, volume {:.4}", m.triangles.len(), m.volume());
    }
    println!("meshes in {}", out.display());
    Ok(())
}
