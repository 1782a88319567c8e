use hipnet::assignment::{assign, build_graph, geodesic_distances, proxy_points};
use hipnet::geom::{v3, P3};
use hipnet::skeleton::{forward_kinematics, Joint, Mat3, Pose, RigidTransform, Skeleton, Vec3};
use hipnet::synthdata::{
    desk_limits, desk_skeleton, random_motion, sample_surface, subject_figure, CapsuleFigure, DESK_BONE_RADIUS,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn skeleton(joints: &[(Option<usize>, [f64; 3])]) -> Skeleton {
    Skeleton::new(
        joints
            .iter()
            .enumerate()
            .map(|(i, (p, o))| Joint {
                name: format!("j{i}"),
                parent: *p,
                offset: Vec3::from(*o),
            })
            .collect(),
    )
    .unwrap()
}

fn rest(sk: &Skeleton) -> Pose {
    forward_kinematics(sk, &vec![Mat3::identity(); sk.len()], Vec3::zeros()).unwrap()
}

fn dist(a: &P3, b: &P3) -> f64 {
    (v3(a) - v3(b)).norm()
}

fn at(points: &[P3]) -> Pose {
    Pose {
        transforms: points
            .iter()
            .map(|p| RigidTransform {
                rotation: Mat3::identity(),
                translation: v3(p),
            })
            .collect(),
        frame: 0,
        subject: 0,
    }
}

#[test]
fn average_degree_reaches_k() {
    let fig = subject_figure(&desk_skeleton(), &DESK_BONE_RADIUS, 0, 1, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pose = random_motion(&fig.skeleton, &desk_limits(), 1, &mut rng).unwrap().remove(0);
    let cloud = sample_surface(&fig, &pose, 25_000, 4).unwrap();
    let g = build_graph(&cloud.points, 8).unwrap();
    assert!(g.is_connected());
    assert!(g.average_degree() >= 8.0, "{}", g.average_degree());
}

#[test]
fn joint_on_a_cloud_point_picks_it() {
    let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.3, 0.2, 0.1], [2.0, 1.0, 0.0]];
    assert_eq!(proxy_points(&pts, &at(&[[0.3, 0.2, 0.1], [2.0, 1.0, 0.0]])), vec![2, 3]);
}

#[test]
fn desk_proxies_sit_near_their_joints() {
    let fig = subject_figure(&desk_skeleton(), &DESK_BONE_RADIUS, 1, 2, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for pose in random_motion(&fig.skeleton, &desk_limits(), 4, &mut rng).unwrap() {
        let cloud = sample_surface(&fig, &pose, 5000, 9).unwrap();
        let spacing = (fig.posed(&pose).capsules.iter().map(|c| c.area()).sum::<f64>() / 5000.0).sqrt();
        for (k, &i) in proxy_points(&cloud.points, &pose).iter().enumerate() {
            // a joint is covered by its own bones and possibly the parent's
            let mut r: f64 = 0.0;
            for c in 1..fig.skeleton.len() {
                if c == k || fig.skeleton.parent(c) == Some(k) {
                    r = r.max(fig.radius(c));
                }
            }
            let d = (v3(&cloud.points[i]) - pose.position(k)).norm();
            assert!(d <= r + spacing, "joint {k}: {d} > {r} + {spacing}");
        }
    }
}

#[test]
fn single_joint_labels_everything_zero() {
    let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, 0.5, 0.0]];
    assert_eq!(assign(&pts, &at(&[[0.2, 0.0, 0.0]]), 8).unwrap(), vec![0, 0, 0]);
}

#[test]
fn far_tip_of_second_bone_goes_to_its_joint() {
    let sk = skeleton(&[(None, [0.0; 3]), (Some(0), [0.0, 1.0, 0.0]), (Some(1), [0.0, 1.0, 0.0])]);
    let fig = CapsuleFigure::new(sk, vec![0.1, 0.1], 1.0).unwrap();
    let pose = rest(&fig.skeleton);
    let mut cloud = sample_surface(&fig, &pose, 4000, 2).unwrap();
    cloud.points.push([0.0, 2.1, 0.0]);
    let labels = assign(&cloud.points, &pose, 8).unwrap();
    assert_eq!(*labels.last().unwrap(), 2);
    for (p, &l) in cloud.points.iter().zip(&labels) {
        if p[1] > 1.6 {
            assert_eq!(l, 2);
        }
        if p[1] < 0.4 {
            assert_eq!(l, 0);
        }
    }
}

#[test]
fn touching_limbs_keep_their_own_labels() {
    // a forearm along +x, and a second arm whose wrist hangs just above its
    // middle; the surfaces are a few sample spacings apart
    let (r, gap) = (0.1, 0.06);
    let sk = skeleton(&[
        (None, [0.0; 3]),
        (Some(0), [0.8, 0.0, 0.0]),
        (Some(0), [0.0, 0.9, 0.0]),
        (Some(2), [0.4, -(0.9 - 2.0 * r - gap), 0.0]),
    ]);
    let fig = CapsuleFigure::new(sk, vec![r, r, r], 1.0).unwrap();
    let pose = rest(&fig.skeleton);
    let cloud = sample_surface(&fig, &pose, 10_000, 6).unwrap();
    let labels = assign(&cloud.points, &pose, 8).unwrap();
    let joints: Vec<P3> = pose.positions().iter().map(|p| [p.x, p.y, p.z]).collect();
    let mut contested = 0;
    for ((p, &bone), &l) in cloud.points.iter().zip(&cloud.labels).zip(&labels) {
        if bone != 1 {
            continue;
        }
        let nearest = (0..4).min_by(|&a, &b| dist(p, &joints[a]).total_cmp(&dist(p, &joints[b]))).unwrap();
        if nearest == 3 {
            contested += 1;
            assert!(l == 0 || l == 1, "forearm point {p:?} labelled {l}");
        }
    }
    assert!(contested > 20, "{contested}");
}

/// Points on the lateral part of a unit capsule along y, and the exact
/// geodesic distance on the unrolled cylinder.
fn tube(r: f64, m: usize, seed: u64) -> Vec<P3> {
    let fig = CapsuleFigure::new(skeleton(&[(None, [0.0; 3]), (Some(0), [0.0, 1.0, 0.0])]), vec![r], 1.0).unwrap();
    sample_surface(&fig, &rest(&fig.skeleton), m, seed)
        .unwrap()
        .points
        .into_iter()
        .filter(|p| p[1] >= 0.0 && p[1] <= 1.0)
        .collect()
}

fn cylinder_geodesic(r: f64, a: &P3, b: &P3) -> f64 {
    let mut dt = (a[2].atan2(a[0]) - b[2].atan2(b[0])).abs();
    dt = dt.min(2.0 * std::f64::consts::PI - dt);
    (r * dt).hypot(a[1] - b[1])
}

#[test]
fn single_bone_splits_at_the_bisector() {
    let r = 0.1;
    let pts = tube(r, 6000, 8);
    let pose = at(&[[0.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
    let labels = assign(&pts, &pose, 8).unwrap();
    let proxies = proxy_points(&pts, &pose);
    let area = 2.0 * std::f64::consts::PI * r;
    let spacing = (area / pts.len() as f64).sqrt();
    for (p, &l) in pts.iter().zip(&labels) {
        let d0 = cylinder_geodesic(r, p, &pts[proxies[0]]);
        let d1 = cylinder_geodesic(r, p, &pts[proxies[1]]);
        let exact = u16::from(d1 < d0);
        if l != exact {
            // the distance difference changes at most twice as fast as position
            assert!((d0 - d1).abs() <= 2.0 * spacing, "{p:?}: {d0} vs {d1}");
        }
    }
}

#[test]
fn far_clusters_still_get_labels() {
    let mut pts: Vec<P3> = (0..20).map(|i| [i as f64 * 0.01, 0.0, 0.0]).collect();
    pts.extend((0..20).map(|i| [5.0 + i as f64 * 0.01, 0.0, 0.0]));
    let labels = assign(&pts, &at(&[[0.0; 3], [5.2, 0.0, 0.0]]), 3).unwrap();
    assert!(labels[..20].iter().all(|&l| l == 0));
    assert!(labels[20..].iter().all(|&l| l == 1));
}

fn cloud_and_joints() -> impl Strategy<Value = (Vec<P3>, Vec<P3>)> {
    (
        prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 30..120),
        prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 2..5),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graph_paths_are_never_shorter_than_chords((pts, _) in cloud_and_joints(), k in 1usize..9) {
        let g = build_graph(&pts, k).unwrap();
        prop_assert!(g.is_connected());
        for s in [0, pts.len() / 2] {
            let d = geodesic_distances(&g, s);
            for (i, p) in pts.iter().enumerate() {
                prop_assert!(d[i] >= dist(p, &pts[s]) - 1e-12);
            }
        }
    }

    #[test]
    fn relabelling_joints_permutes_labels((pts, joints) in cloud_and_joints(), seed in 0u64..1000) {
        let proxies = proxy_points(&pts, &at(&joints));
        let mut uniq = proxies.clone();
        uniq.sort_unstable();
        uniq.dedup();
        prop_assume!(uniq.len() == proxies.len());
        let base = assign(&pts, &at(&joints), 6).unwrap();
        let mut perm: Vec<usize> = (0..joints.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        // joint j of the permuted pose is joint perm[j] of the original
        let shuffled: Vec<P3> = perm.iter().map(|&j| joints[j]).collect();
        let relabelled = assign(&pts, &at(&shuffled), 6).unwrap();
        for (a, b) in base.iter().zip(&relabelled) {
            prop_assert_eq!(*a as usize, perm[*b as usize]);
        }
    }
}
