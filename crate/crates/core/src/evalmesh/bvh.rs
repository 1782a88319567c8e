//! Bounding-volume hierarchy over mesh triangles for closest-point and ray
//! queries.

use crate::geom::{cross, dot, sub, Aabb, P3};

use super::mesh::Mesh;

const LEAF: usize = 4;

#[derive(Clone, Debug)]
struct Node {
    bounds: Aabb,
    // Leaf: range into `order`. Inner: children at `start` and `start + 1`.
    start: usize,
    len: usize,
}

#[derive(Clone, Debug)]
pub struct TriangleBvh {
    tris: Vec<[P3; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

fn tri_bounds(t: &[P3; 3]) -> Aabb {
    Aabb::from_points(t.iter()).expect("three corners")
}

/// Closest point on triangle `abc` to `p`.
pub fn closest_on_triangle(p: &P3, [a, b, c]: &[P3; 3]) -> P3 {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(&ab, &ap);
    let d2 = dot(&ac, &ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = sub(p, b);
    let d3 = dot(&ab, &bp);
    let d4 = dot(&ac, &bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let at = |u: &P3, s: f64| [0, 1, 2].map(|i| a[i] + s * u[i]);
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return at(&ab, d1 / (d1 - d3));
    }
    let cp = sub(p, c);
    let d5 = dot(&ab, &cp);
    let d6 = dot(&ac, &cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return at(&ac, d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return [0, 1, 2].map(|i| b[i] + w * (c[i] - b[i]));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    [0, 1, 2].map(|i| a[i] + ab[i] * v + ac[i] * w)
}

/// Ray parameter of the hit with triangle `t`, if any (Möller–Trumbore).
fn ray_triangle(origin: &P3, dir: &P3, [a, b, c]: &[P3; 3]) -> Option<f64> {
    let e1 = sub(b, a);
    let e2 = sub(c, a);
    let h = cross(dir, &e2);
    let det = dot(&e1, &h);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let s = sub(origin, a);
    let u = inv * dot(&s, &h);
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = cross(&s, &e1);
    let v = inv * dot(dir, &q);
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = inv * dot(&e2, &q);
    (t > 0.0).then_some(t)
}

fn ray_hits_box(origin: &P3, inv_dir: &P3, b: &Aabb) -> bool {
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    for a in 0..3 {
        let t1 = (b.min[a] - origin[a]) * inv_dir[a];
        let t2 = (b.max[a] - origin[a]) * inv_dir[a];
        lo = lo.max(t1.min(t2));
        hi = hi.min(t1.max(t2));
    }
    lo <= hi
}

impl TriangleBvh {
    pub fn new(mesh: &Mesh) -> Self {
        let tris: Vec<[P3; 3]> = (0..mesh.triangles.len()).map(|t| mesh.corners(t)).collect();
        let mut order: Vec<usize> = (0..tris.len()).collect();
        let mut nodes = Vec::new();
        if !tris.is_empty() {
            let centroid = |t: usize| [0, 1, 2].map(|a| (tris[t][0][a] + tris[t][1][a] + tris[t][2][a]) / 3.0);
            nodes.push(Node {
                bounds: Aabb::cube(0.0),
                start: 0,
                len: tris.len(),
            });
            let mut stack = vec![0usize];
            while let Some(ni) = stack.pop() {
                let (start, len) = (nodes[ni].start, nodes[ni].len);
                let slice = &mut order[start..start + len];
                let mut b = tri_bounds(&tris[slice[0]]);
                for &t in slice.iter() {
                    b = b.union(&tri_bounds(&tris[t]));
                }
                nodes[ni].bounds = b;
                if len <= LEAF {
                    continue;
                }
                let e = b.extent();
                let axis = (0..3).max_by(|&x, &y| e[x].total_cmp(&e[y])).unwrap();
                let mid = len / 2;
                slice.select_nth_unstable_by(mid, |&x, &y| {
                    centroid(x)[axis].total_cmp(&centroid(y)[axis]).then(x.cmp(&y))
                });
                let first = nodes.len();
                nodes.push(Node { bounds: b, start, len: mid });
                nodes.push(Node { bounds: b, start: start + mid, len: len - mid });
                nodes[ni].start = first;
                nodes[ni].len = 0;
                stack.push(first);
                stack.push(first + 1);
            }
        }
        TriangleBvh { tris, order, nodes }
    }

    pub fn is_empty(&self) -> bool {
        self.tris.is_empty()
    }

    /// Squared distance from `p` to the nearest triangle and that triangle.
    pub fn closest(&self, p: &P3) -> Option<(f64, usize)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (f64::INFINITY, usize::MAX);
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let n = &self.nodes[ni];
            if n.bounds.dist2(p) >= best.0 {
                continue;
            }
            if n.len > 0 {
                for &t in &self.order[n.start..n.start + n.len] {
                    let q = closest_on_triangle(p, &self.tris[t]);
                    let d = sub(p, &q);
                    let d2 = dot(&d, &d);
                    if d2 < best.0 || (d2 == best.0 && t < best.1) {
                        best = (d2, t);
                    }
                }
            } else {
                let (l, r) = (n.start, n.start + 1);
                let (dl, dr) = (self.nodes[l].bounds.dist2(p), self.nodes[r].bounds.dist2(p));
                // Visit the nearer child first.
                if dl <= dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        Some(best)
    }

    pub fn distance(&self, p: &P3) -> f64 {
        self.closest(p).map_or(f64::INFINITY, |(d2, _)| d2.sqrt())
    }

    /// Number of triangles crossed by the ray `origin + t·dir`, `t > 0`.
    pub fn ray_crossings(&self, origin: &P3, dir: &P3) -> usize {
        if self.nodes.is_empty() {
            return 0;
        }
        let inv = dir.map(|d| 1.0 / d);
        let mut count = 0;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let n = &self.nodes[ni];
            if !ray_hits_box(origin, &inv, &n.bounds) {
                continue;
            }
            if n.len > 0 {
                count += self.order[n.start..n.start + n.len]
                    .iter()
                    .filter(|&&t| ray_triangle(origin, dir, &self.tris[t]).is_some())
                    .count();
            } else {
                stack.push(n.start);
                stack.push(n.start + 1);
            }
        }
        count
    }

    /// Inside test by ray parity, taking the majority over three
    /// non-axis-aligned rays so a ray grazing an edge cannot flip the result.
    pub fn contains(&self, p: &P3) -> bool {
        const DIRS: [P3; 3] = [
            [0.5773502691896258, 0.6172133998483676, 0.5345224838248488],
            [-0.3826834323650898, std::f64::consts::FRAC_1_SQRT_2, -0.5946035575013605],
            [0.2672612419124244, -0.5345224838248488, -0.8017837257372732],
        ];
        DIRS.iter().filter(|d| self.ray_crossings(p, d) % 2 == 1).count() >= 2
    }
}
