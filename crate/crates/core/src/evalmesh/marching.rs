//! Marching cubes by walking cube faces. Each face contributes oriented
//! segments between its edge crossings; the segments of one cube chain into
//! closed loops that are fanned into triangles. Ambiguous faces are split by
//! the sign of the face-centre average, which both cubes sharing the face
//! agree on, so the result has no cracks.

use std::collections::HashMap;

use crate::error::{HipError, Result};
use crate::geom::{lerp, Aabb, P3};

use super::mesh::Mesh;

pub const MIN_RESOLUTION: usize = 16;

/// Corners of each face in counter-clockwise order about its outward
/// normal. Corner `c` sits at offset `(c & 1, (c >> 1) & 1, c >> 2)`.
const FACES: [[usize; 4]; 6] = [
    [0, 4, 6, 2],
    [1, 3, 7, 5],
    [0, 1, 5, 4],
    [2, 6, 7, 3],
    [0, 2, 3, 1],
    [4, 5, 7, 6],
];

/// Sample lattice with `cells + 1` points per axis spanning `bounds`.
#[derive(Clone, Copy, Debug)]
pub struct Grid {
    pub bounds: Aabb,
    pub cells: usize,
}

impl Grid {
    pub fn side(&self) -> usize {
        self.cells + 1
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.side() + j) * self.side() + i
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> P3 {
        let b = &self.bounds;
        let f = |a: usize, n: usize| b.min[a] + (b.max[a] - b.min[a]) * n as f64 / self.cells as f64;
        [f(0, i), f(1, j), f(2, k)]
    }

    pub fn points(&self) -> Vec<P3> {
        let s = self.side();
        let mut out = Vec::with_capacity(s * s * s);
        for k in 0..s {
            for j in 0..s {
                for i in 0..s {
                    out.push(self.point(i, j, k));
                }
            }
        }
        out
    }

    pub fn cell_diagonal(&self) -> f64 {
        let e = self.bounds.extent();
        (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt() / self.cells as f64
    }
}

fn check_resolution(resolution: usize) -> Result<()> {
    if resolution < MIN_RESOLUTION {
        return Err(HipError::Input(format!(
            "grid resolution {resolution} is below the minimum of {MIN_RESOLUTION}"
        )));
    }
    Ok(())
}

/// Zero level set of `sdf` over `bounds` with `resolution` cells per axis.
/// Inside is `sdf < 0`. An empty level set gives an empty mesh.
pub fn extract_mesh(
    sdf: impl Fn(&[P3]) -> Result<Vec<f64>>,
    resolution: usize,
    bounds: &Aabb,
) -> Result<Mesh> {
    check_resolution(resolution)?;
    let grid = Grid {
        bounds: *bounds,
        cells: resolution,
    };
    let values = sdf(&grid.points())?;
    if values.len() != grid.side().pow(3) {
        return Err(HipError::Length {
            what: "grid values",
            expected: grid.side().pow(3),
            got: values.len(),
        });
    }
    Ok(polygonize(&grid, &values))
}

/// Like [`extract_mesh`], but first samples a grid `stride` times coarser and
/// only refines blocks that may hold the surface. Blocks whose corners all
/// share a sign and sit further than `2 ×` the block diagonal from the
/// surface are skipped, which is exact for any field that is 2-Lipschitz.
pub fn extract_mesh_banded(
    sdf: impl Fn(&[P3]) -> Result<Vec<f64>>,
    resolution: usize,
    bounds: &Aabb,
    stride: usize,
) -> Result<Mesh> {
    check_resolution(resolution)?;
    let stride = stride.clamp(1, resolution);
    let grid = Grid {
        bounds: *bounds,
        cells: resolution,
    };
    let s = grid.side();
    let coarse: Vec<usize> = (0..s).step_by(stride).chain((!resolution.is_multiple_of(stride)).then_some(resolution)).collect();
    let nc = coarse.len();
    let mut cpts = Vec::with_capacity(nc * nc * nc);
    for &k in &coarse {
        for &j in &coarse {
            for &i in &coarse {
                cpts.push(grid.point(i, j, k));
            }
        }
    }
    let cvals = sdf(&cpts)?;
    let cv = |a: usize, b: usize, c: usize| cvals[(c * nc + b) * nc + a];
    let margin = 2.0 * grid.cell_diagonal() * stride as f64;
    let mut values = vec![0.0; s * s * s];
    let mut todo = vec![false; s * s * s];
    for c in 0..nc - 1 {
        for b in 0..nc - 1 {
            for a in 0..nc - 1 {
                let corners: Vec<f64> = (0..8).map(|m| cv(a + (m & 1), b + ((m >> 1) & 1), c + (m >> 2))).collect();
                let neg = corners.iter().all(|&v| v < -margin);
                let pos = corners.iter().all(|&v| v > margin);
                for k in coarse[c]..=coarse[c + 1] {
                    for j in coarse[b]..=coarse[b + 1] {
                        for i in coarse[a]..=coarse[a + 1] {
                            let g = grid.index(i, j, k);
                            if neg || pos {
                                if !todo[g] {
                                    values[g] = if neg { -margin } else { margin };
                                }
                            } else {
                                todo[g] = true;
                            }
                        }
                    }
                }
            }
        }
    }
    let idx: Vec<usize> = (0..todo.len()).filter(|&g| todo[g]).collect();
    let pts: Vec<P3> = idx
        .iter()
        .map(|&g| grid.point(g % s, (g / s) % s, g / (s * s)))
        .collect();
    let vals = sdf(&pts)?;
    for (&g, v) in idx.iter().zip(vals) {
        values[g] = v;
    }
    Ok(polygonize(&grid, &values))
}

/// Triangulates the `< 0` region boundary of lattice values.
pub fn polygonize(grid: &Grid, values: &[f64]) -> Mesh {
    let n = grid.cells;
    let mut vertices: Vec<P3> = Vec::new();
    let mut ids: HashMap<usize, u32> = HashMap::new();
    let mut triangles = Vec::new();
    let mut links: Vec<(usize, usize)> = Vec::with_capacity(12);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let at = |c: usize| (i + (c & 1), j + ((c >> 1) & 1), k + (c >> 2));
                let val: [f64; 8] = std::array::from_fn(|c| {
                    let (x, y, z) = at(c);
                    values[grid.index(x, y, z)]
                });
                let inside = val.map(|v| v < 0.0);
                if inside.iter().all(|&b| b) || inside.iter().all(|&b| !b) {
                    continue;
                }
                // Global id of the lattice edge between two adjacent corners.
                let edge = |a: usize, b: usize| {
                    let lo = a.min(b);
                    let axis = (a ^ b).trailing_zeros() as usize;
                    let (x, y, z) = at(lo);
                    grid.index(x, y, z) * 3 + axis
                };
                links.clear();
                for face in &FACES {
                    let mut cross: Vec<(usize, bool)> = Vec::with_capacity(4);
                    for e in 0..4 {
                        let (a, b) = (face[e], face[(e + 1) % 4]);
                        if inside[a] != inside[b] {
                            cross.push((edge(a, b), !inside[a]));
                        }
                    }
                    match cross.len() {
                        2 => {
                            let (entry, exit) = if cross[0].1 { (cross[0].0, cross[1].0) } else { (cross[1].0, cross[0].0) };
                            links.push((entry, exit));
                        }
                        4 => {
                            let centre = face.iter().map(|&c| val[c]).sum::<f64>() / 4.0;
                            let shift = if centre < 0.0 { 3 } else { 1 };
                            for p in 0..4 {
                                if cross[p].1 {
                                    links.push((cross[p].0, cross[(p + shift) % 4].0));
                                }
                            }
                        }
                        _ => {}
                    }
                }
                let mut used = vec![false; links.len()];
                for start in 0..links.len() {
                    if used[start] {
                        continue;
                    }
                    let mut ring = Vec::new();
                    let mut cur = start;
                    loop {
                        used[cur] = true;
                        ring.push(links[cur].0);
                        let next = links[cur].1;
                        match links.iter().position(|l| l.0 == next) {
                            Some(p) if !used[p] => cur = p,
                            _ => break,
                        }
                    }
                    if ring.len() < 3 {
                        continue;
                    }
                    let mut vid = |e: usize| -> u32 {
                        *ids.entry(e).or_insert_with(|| {
                            let g = e / 3;
                            let axis = e % 3;
                            let (x, y, z) = (g % grid.side(), (g / grid.side()) % grid.side(), g / grid.side().pow(2));
                            let (x1, y1, z1) = (x + usize::from(axis == 0), y + usize::from(axis == 1), z + usize::from(axis == 2));
                            let (va, vb) = (values[g], values[grid.index(x1, y1, z1)]);
                            let t = va / (va - vb);
                            vertices.push(lerp(&grid.point(x, y, z), &grid.point(x1, y1, z1), t));
                            (vertices.len() - 1) as u32
                        })
                    };
                    let ring: Vec<u32> = ring.into_iter().map(&mut vid).collect();
                    for m in 1..ring.len() - 1 {
                        triangles.push([ring[0], ring[m], ring[m + 1]]);
                    }
                }
            }
        }
    }
    Mesh { vertices, triangles }
}
