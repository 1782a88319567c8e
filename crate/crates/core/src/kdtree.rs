//! Static 3-d tree over a point set. Ties in distance resolve to the lower
//! point index, so queries are deterministic.

const LEAF: usize = 8;

pub struct KdTree {
    points: Vec<[f64; 3]>,
    /// Point indices arranged so every subrange `[lo, hi)` is a subtree whose
    /// median element `(lo + hi) / 2` splits on `axis[mid]`.
    order: Vec<u32>,
    axis: Vec<u8>,
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

/// `(dist2, index)` ordering used for every comparison.
fn better(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

impl KdTree {
    pub fn new(points: &[[f64; 3]]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            order: (0..points.len() as u32).collect(),
            axis: vec![0; points.len()],
        };
        tree.build(0, points.len());
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    fn build(&mut self, lo: usize, hi: usize) {
        if hi - lo <= LEAF {
            return;
        }
        let mut mn = [f64::INFINITY; 3];
        let mut mx = [f64::NEG_INFINITY; 3];
        for &i in &self.order[lo..hi] {
            let p = self.points[i as usize];
            for a in 0..3 {
                mn[a] = mn[a].min(p[a]);
                mx[a] = mx[a].max(p[a]);
            }
        }
        let ax = (0..3)
            .max_by(|&a, &b| (mx[a] - mn[a]).total_cmp(&(mx[b] - mn[b])))
            .unwrap();
        let mid = (lo + hi) / 2;
        let pts = &self.points;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&i, &j| {
            pts[i as usize][ax]
                .total_cmp(&pts[j as usize][ax])
                .then(i.cmp(&j))
        });
        self.axis[mid] = ax as u8;
        self.build(lo, mid);
        self.build(mid + 1, hi);
    }

    /// Index and squared distance of the closest point.
    pub fn nearest(&self, q: &[f64; 3]) -> Option<(usize, f64)> {
        let mut best = Vec::with_capacity(1);
        self.search(q, 1, 0, self.points.len(), &mut best);
        best.first().map(|&(d, i)| (i, d))
    }

    /// Up to `k` closest points as `(index, dist2)`, nearest first.
    pub fn knn(&self, q: &[f64; 3], k: usize) -> Vec<(usize, f64)> {
        let mut best = Vec::with_capacity(k + 1);
        if k > 0 {
            self.search(q, k, 0, self.points.len(), &mut best);
        }
        best.into_iter().map(|(d, i)| (i, d)).collect()
    }

    fn offer(best: &mut Vec<(f64, usize)>, k: usize, cand: (f64, usize)) {
        if best.len() == k && !better(cand, best[k - 1]) {
            return;
        }
        let pos = best.partition_point(|&b| better(b, cand));
        best.insert(pos, cand);
        best.truncate(k);
    }

    fn search(&self, q: &[f64; 3], k: usize, lo: usize, hi: usize, best: &mut Vec<(f64, usize)>) {
        if hi - lo <= LEAF {
            for &i in &self.order[lo..hi] {
                let i = i as usize;
                Self::offer(best, k, (dist2(q, &self.points[i]), i));
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let i = self.order[mid] as usize;
        let ax = self.axis[mid] as usize;
        Self::offer(best, k, (dist2(q, &self.points[i]), i));
        let diff = q[ax] - self.points[i][ax];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(q, k, near.0, near.1, best);
        // `<=` keeps equal-distance points on the far side reachable for the
        // index tie-break.
        if best.len() < k || diff * diff <= best[best.len() - 1].0 {
            self.search(q, k, far.0, far.1, best);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<[f64; 3]> = (0..2000)
            .map(|_| [rng.random(), rng.random(), rng.random()])
            .collect();
        let tree = KdTree::new(&pts);
        for _ in 0..200 {
            let q = [rng.random(), rng.random(), rng.random()];
            let mut brute: Vec<(f64, usize)> =
                pts.iter().enumerate().map(|(i, p)| (dist2(&q, p), i)).collect();
            brute.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let got = tree.knn(&q, 7);
            let want: Vec<(usize, f64)> = brute[..7].iter().map(|&(d, i)| (i, d)).collect();
            assert_eq!(got, want);
            assert_eq!(tree.nearest(&q).unwrap().0, brute[0].1);
        }
    }

    #[test]
    fn ties_prefer_lower_index() {
        let pts = vec![[1.0, 0.0, 0.0]; 20];
        let tree = KdTree::new(&pts);
        assert_eq!(tree.nearest(&[0.0; 3]).unwrap().0, 0);
        let ids: Vec<usize> = tree.knn(&[0.0; 3], 3).iter().map(|p| p.0).collect();
        assert_eq!(ids, vec![0, 1, 2]);
    }
}
