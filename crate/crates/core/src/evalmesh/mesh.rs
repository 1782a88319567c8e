use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::binio::write_atomic;
use crate::error::{format_err, io_err, HipError, Result};
use crate::geom::{cross, norm, sub, Aabb, P3};

/// Indexed triangle mesh. Triangles are wound so their normals point out of
/// the solid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<P3>,
    pub triangles: Vec<[u32; 3]>,
}

impl Mesh {
    pub fn new(vertices: Vec<P3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let n = vertices.len();
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i as usize >= n)) {
            return Err(HipError::Input(format!("triangle {t:?} indexes past {n} vertices")));
        }
        Ok(Mesh { vertices, triangles })
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn corners(&self, t: usize) -> [P3; 3] {
        self.triangles[t].map(|i| self.vertices[i as usize])
    }

    /// Unnormalized normal; its length is twice the area.
    pub fn triangle_normal(&self, t: usize) -> P3 {
        let [a, b, c] = self.corners(t);
        cross(&sub(&b, &a), &sub(&c, &a))
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        0.5 * norm(&self.triangle_normal(t))
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Signed enclosed volume; positive for a closed, outward-wound mesh.
    pub fn volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.corners(t);
                crate::geom::dot(&a, &cross(&b, &c)) / 6.0
            })
            .sum()
    }

    pub fn bounds(&self) -> Option<Aabb> {
        Aabb::from_points(self.triangles.iter().flatten().map(|&i| &self.vertices[i as usize]))
    }

    /// Drops zero-area triangles and unreferenced vertices.
    pub fn cleanup(&mut self) {
        let keep: Vec<[u32; 3]> = (0..self.triangles.len())
            .filter(|&t| self.triangle_area(t) > 0.0)
            .map(|t| self.triangles[t])
            .collect();
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut verts = Vec::new();
        let tris = keep
            .into_iter()
            .map(|t| {
                t.map(|i| {
                    if remap[i as usize] == u32::MAX {
                        remap[i as usize] = verts.len() as u32;
                        verts.push(self.vertices[i as usize]);
                    }
                    remap[i as usize]
                })
            })
            .collect();
        self.vertices = verts;
        self.triangles = tris;
    }

    /// Every directed edge appears once and its reverse appears once.
    pub fn is_watertight(&self) -> bool {
        let mut edges: HashMap<(u32, u32), usize> = HashMap::new();
        for t in &self.triangles {
            for e in 0..3 {
                *edges.entry((t[e], t[(e + 1) % 3])).or_default() += 1;
            }
        }
        !edges.is_empty() && edges.iter().all(|(&(a, b), &c)| c == 1 && edges.get(&(b, a)) == Some(&1))
    }

    /// Area-weighted uniform samples on the surface.
    pub fn sample(&self, count: usize, rng: &mut impl Rng) -> Result<Vec<P3>> {
        if self.is_empty() {
            return Err(HipError::EmptyMesh);
        }
        let mut cdf = Vec::with_capacity(self.triangles.len());
        let mut acc = 0.0;
        for t in 0..self.triangles.len() {
            acc += self.triangle_area(t);
            cdf.push(acc);
        }
        if !(acc > 0.0) {
            return Err(HipError::EmptyMesh);
        }
        Ok((0..count)
            .map(|_| {
                let u = rng.random::<f64>() * acc;
                let t = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
                let [a, b, c] = self.corners(t);
                let (r1, r2) = (rng.random::<f64>().sqrt(), rng.random::<f64>());
                let (wa, wb, wc) = (1.0 - r1, r1 * (1.0 - r2), r1 * r2);
                [0, 1, 2].map(|i| wa * a[i] + wb * b[i] + wc * c[i])
            })
            .collect())
    }

    pub fn to_obj(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v[0], v[1], v[2]);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        s
    }

    pub fn write_obj(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_obj().as_bytes())
    }

    /// Reads the `v` and `f` records of an OBJ file; faces with more than
    /// three corners are fanned.
    pub fn read_obj(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let mut it = line.split_whitespace();
            let bad = || format_err(path, format!("line {}: malformed record", ln + 1));
            match it.next() {
                Some("v") => {
                    let c: Vec<f64> = it.take(3).map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
                    if c.len() != 3 {
                        return Err(bad());
                    }
                    vertices.push([c[0], c[1], c[2]]);
                }
                Some("f") => {
                    let idx: Vec<u32> = it
                        .map(|w| w.split('/').next().unwrap_or("").parse::<u32>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad())?;
                    if idx.len() < 3 || idx.contains(&0) {
                        return Err(bad());
                    }
                    for k in 1..idx.len() - 1 {
                        triangles.push([idx[0] - 1, idx[k] - 1, idx[k + 1] - 1]);
                    }
                }
                _ => {}
            }
        }
        Mesh::new(vertices, triangles).map_err(|e| format_err(path, e.to_string()))
    }
}
