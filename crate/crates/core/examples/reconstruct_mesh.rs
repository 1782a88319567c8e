//! Extracts the zero level set of a trained model at a held-out pose and
//! writes it next to the ground-truth mesh.
//!
//! cargo run --release --example reconstruct_mesh -- /tmp/hipnet-small

use hipnet::evalmesh::{extract_mesh, pose_bounds, EvalConfig};
use hipnet::geom::P3;
use hipnet::pipeline::{reconstruct, subject_beta};
use hipnet::synthdata::Split;

mod common;

fn main() -> hipnet::Result<()> {
    let dir = common::workdir("small");
    let (ds, model, _) = common::trained(&dir)?;
    let r = &ds.frames(Split::Test)[3];
    let rec = ds.load(r)?;
    let config = EvalConfig {
        resolution: 80,
        ..EvalConfig::default()
    };
    let mesh = reconstruct(&model, &rec.pose, &subject_beta(&model, r.subject)?, &config)?;
    let posed = ds.figures[r.subject].posed(&rec.pose);
    let gt = extract_mesh(|p: &[P3]| Ok(posed.sdf_batch(p)), 80, &pose_bounds(&rec.pose, config.pad))?;
    // an undertrained field can cross the box, leaving the mesh open there
    mesh.write_obj(&dir.join("model.obj"))?;
    gt.write_obj(&dir.join("truth.obj"))?;
    println!(
        "subject {} sequence {} frame {}: model mesh {} triangles (watertight {}), truth {} triangles",
        r.subject,
        r.sequence,
        r.frame,
        mesh.triangles.len(),
        mesh.is_watertight(),
        gt.triangles.len()
    );
    println!("wrote {} and {}", dir.join("model.obj").display(), dir.join("truth.obj").display());
    Ok(())
}
