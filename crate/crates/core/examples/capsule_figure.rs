//! The analytic ground truth: a posed capsule figure, its signed distance,
//! oriented surface samples, and the zero level set as a mesh.
//!
//! cargo run --release --example capsule_figure -- /tmp/figure

use hipnet::evalmesh::{extract_mesh, pose_bounds};
use hipnet::geom::{v3, P3};
use hipnet::synthdata::{desk_limits, desk_skeleton, random_motion, sample_surface, subject_figure, DESK_BONE_RADIUS};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;

fn main() -> hipnet::Result<()> {
    let out = common::workdir("figure");
    std::fs::create_dir_all(&out).unwrap();
    let sk = desk_skeleton();
    let fig = subject_figure(&sk, &DESK_BONE_RADIUS, 1, 2, 0)?;
    println!("subject scale {:.3}, radii {:?}", fig.scale, fig.bone_radius);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let motion = random_motion(&sk, &desk_limits(), 10, &mut rng)?;
    let pose = &motion[9];
    let posed = fig.posed(pose);
    for k in 0..sk.len() {
        let p = pose.position(k);
        println!("{:>10}  at ({:6.3}, {:6.3}, {:6.3})  sdf {:7.4}", sk.joints()[k].name, p.x, p.y, p.z, posed.sdf(&[p.x, p.y, p.z]));
    }

    let cloud = sample_surface(&fig, pose, 5000, 2)?;
    let worst_value = cloud.points.iter().map(|p| posed.sdf(p).abs()).fold(0.0, f64::max);
    let worst_normal = cloud
        .points
        .iter()
        .zip(&cloud.normals)
        .map(|(p, n)| (posed.gradient(p) - v3(n)).norm())
        .fold(0.0, f64::max);
    println!("{} samples: max |sdf| {worst_value:.1e}, max normal error {worst_normal:.1e}", cloud.len());

    let gt = |pts: &[P3]| Ok(posed.sdf_batch(pts));
    let mesh = extract_mesh(gt, 96, &pose_bounds(pose, 0.3))?;
    let path = out.join("figure.obj");
    mesh.write_obj(&path)?;
    println!(
        "mesh: {} triangles, watertight {}, area {:.3}, volume {:.4} -> {}",
        mesh.triangles.len(),
        mesh.is_watertight(),
        mesh.area(),
        mesh.volume(),
        path.display()
    );
    Ok(())
}
