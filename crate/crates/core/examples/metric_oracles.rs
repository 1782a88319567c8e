//! The evaluation metrics on inputs with known answers: nested spheres for
//! IoU, a mesh against itself and a shifted copy for Chamfer-L1.
//!
//! cargo run --release --example metric_oracles

use hipnet::evalmesh::{chamfer_l1, extract_mesh, near_surface_miou, uniform_miou, Mesh};
use hipnet::geom::{Aabb, P3};

fn ball(c: P3, r: f64) -> impl Fn(&[P3]) -> hipnet::Result<Vec<f64>> + Copy {
    move |p: &[P3]| {
        Ok(p.iter()
            .map(|q| ((q[0] - c[0]).powi(2) + (q[1] - c[1]).powi(2) + (q[2] - c[2]).powi(2)).sqrt() - r)
            .collect())
    }
}

fn main() -> hipnet::Result<()> {
    let gt = ball([0.0; 3], 0.5);
    for r in [0.5, 0.45, 0.4, 0.3] {
        let iou = uniform_miou(ball([0.0; 3], r), gt, &Aabb::cube(0.5), 200_000, 1)?;
        println!("sphere r={r:.2} inside r=0.50: uniform IoU {iou:6.2}%  (exact {:6.2}%)", 100.0 * (r / 0.5f64).powi(3));
    }

    let mesh = extract_mesh(gt, 64, &Aabb::cube(0.7))?;
    let surface = mesh.sample(20_000, &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0))?;
    let near = near_surface_miou(ball([0.0, 0.0, 0.02], 0.5), gt, &surface, 0.03, 2)?;
    println!("sphere shifted by 0.02: near-surface IoU {near:.2}%");

    println!("mesh vs itself: chamfer {:.2e}", chamfer_l1(&mesh, &mesh, 100_000, 3)?);
    let shifted = Mesh::new(mesh.vertices.iter().map(|v| [v[0] + 0.01, v[1], v[2]]).collect(), mesh.triangles.clone())?;
    println!("mesh vs copy shifted by 0.01: chamfer {:.4} (units of 0.1 x box edge)", chamfer_l1(&shifted, &mesh, 100_000, 3)?);
    Ok(())
}
