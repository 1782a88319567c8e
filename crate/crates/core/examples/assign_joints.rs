//! Geodesic assignment of surface points to joints, compared with the
//! straight-line nearest joint. The two differ where limbs come close.
//!
//! cargo run --release --example assign_joints

use hipnet::assignment::{assign, build_graph, DEFAULT_NEIGHBORS};
use hipnet::geom::v3;
use hipnet::skeleton::{forward_kinematics, rot_z, Mat3, Vec3};
use hipnet::synthdata::{desk_skeleton, sample_surface, subject_figure, DESK_BONE_RADIUS};

fn main() -> hipnet::Result<()> {
    let sk = desk_skeleton();
    let fig = subject_figure(&sk, &DESK_BONE_RADIUS, 0, 1, 0)?;
    // fold the left arm down so the hand rests against the torso
    let mut locals = vec![Mat3::identity(); sk.len()];
    locals[2] = rot_z(-1.35);
    locals[3] = rot_z(-1.2);
    let pose = forward_kinematics(&sk, &locals, Vec3::zeros())?;
    let cloud = sample_surface(&fig, &pose, 15_000, 4)?;

    let graph = build_graph(&cloud.points, DEFAULT_NEIGHBORS)?;
    println!("kNN graph: average degree {:.2}, connected {}", graph.average_degree(), graph.is_connected());
    let geodesic = assign(&cloud.points, &pose, DEFAULT_NEIGHBORS)?;
    let joints = pose.positions();
    let mut counts = vec![[0usize; 2]; sk.len()];
    let mut disagree = 0;
    for (p, &g) in cloud.points.iter().zip(&geodesic) {
        let e = (0..joints.len())
            .min_by(|&a, &b| (v3(p) - joints[a]).norm().total_cmp(&(v3(p) - joints[b]).norm()))
            .unwrap();
        counts[g as usize][0] += 1;
        counts[e][1] += 1;
        disagree += usize::from(e != g as usize);
    }
    println!("{:>10}  geodesic  euclidean", "joint");
    for (k, c) in counts.iter().enumerate() {
        println!("{:>10}  {:8}  {:9}", sk.joints()[k].name, c[0], c[1]);
    }
    println!("{disagree} of {} points change joint", cloud.len());
    Ok(())
}
