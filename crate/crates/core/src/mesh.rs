//! Structured triangulations of a disk or a square, with an OFF-style text
//! format and a point locator for evaluating piecewise-linear fields.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest number of boundary segments accepted for a disk.
pub const MIN_BOUNDARY_SEGMENTS: usize = 16;
/// Largest number of rings or cells per side.
pub const MAX_DIVISIONS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum Domain {
    /// Disk of the given radius centred at the origin.
    Disk { radius: f64 },
    /// Square `[-side/2, side/2]^2`.
    Square { side: f64 },
}

impl Domain {
    pub fn contains(&self, x: [f64; 2]) -> bool {
        match *self {
            Domain::Disk { radius } => x[0].hypot(x[1]) <= radius,
            Domain::Square { side } => x[0].abs().max(x[1].abs()) <= side / 2.0,
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Domain::Disk { radius } => std::f64::consts::PI * radius * radius,
            Domain::Square { side } => side * side,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_flags: Vec<bool>,
    pub h: f64,
}

pub fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn divisions(length: f64, h: f64) -> Result<usize> {
    if !(h.is_finite() && h > 0.0 && length.is_finite() && length > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "mesh size and domain extent must be positive and finite (h = {h}, extent = {length})"
        )));
    }
    let n = (length / h - 1e-9).ceil().max(1.0);
    if n > MAX_DIVISIONS as f64 {
        return Err(Error::InvalidArgument(format!("mesh size h = {h} is too small")));
    }
    Ok(n as usize)
}

/// Builds a structured triangulation with nominal size `h`.
///
/// A disk is covered by concentric rings of `6j` vertices at radius
/// `j R / N`, so the origin is a vertex, the boundary vertices lie on the
/// circle and halving `h` quadruples the `6 N^2` triangles. A square is a
/// uniform grid with every cell split along the same diagonal.
pub fn build_mesh(domain: Domain, h: f64) -> Result<Mesh> {
    match domain {
        Domain::Disk { radius } => {
            let n = divisions(radius, h)?;
            if 6 * n < MIN_BOUNDARY_SEGMENTS {
                return Err(Error::InvalidArgument(format!(
                    "h = {h} gives only {} boundary segments, need at least {MIN_BOUNDARY_SEGMENTS}",
                    6 * n
                )));
            }
            Ok(disk_mesh(radius, n))
        }
        Domain::Square { side } => {
            let n = divisions(side, h)?;
            Ok(square_mesh(side, n))
        }
    }
}

fn disk_mesh(radius: f64, n: usize) -> Mesh {
    let mut vertices = vec![[0.0, 0.0]];
    let mut boundary_flags = vec![n == 0];
    let mut ring_start = vec![0usize];
    for j in 1..=n {
        ring_start.push(vertices.len());
        let r = if j == n { radius } else { radius * j as f64 / n as f64 };
        for i in 0..6 * j {
            let t = TAU * i as f64 / (6 * j) as f64;
            vertices.push([r * t.cos(), r * t.sin()]);
            boundary_flags.push(j == n);
        }
    }
    let ring_len = |j: usize| if j == 0 { 1 } else { 6 * j };
    let mut triangles = Vec::with_capacity(6 * n * n);
    for j in 1..=n {
        let (inner, outer) = (ring_start[j - 1], ring_start[j]);
        let (ni, no) = (ring_len(j - 1), ring_len(j));
        if j == 1 {
            for i in 0..6 {
                triangles.push([0, outer + i, outer + (i + 1) % 6]);
            }
            continue;
        }
        // Merge the two rings by angle: each step advances whichever ring
        // has the smaller next angle.
        let (mut a, mut b) = (0usize, 0usize);
        while a < ni || b < no {
            let next_inner = (a + 1) as f64 / ni as f64;
            let next_outer = (b + 1) as f64 / no as f64;
            if b < no && (a == ni || next_outer <= next_inner) {
                triangles.push([inner + a % ni, outer + b, outer + (b + 1) % no]);
                b += 1;
            } else {
                triangles.push([inner + a % ni, outer + b % no, inner + (a + 1) % ni]);
                a += 1;
            }
        }
    }
    Mesh {
        vertices,
        triangles,
        boundary_flags,
        h: radius / n as f64,
    }
}

fn square_mesh(side: f64, n: usize) -> Mesh {
    let step = side / n as f64;
    let half = side / 2.0;
    let coord = |i: usize| if i == n { half } else { -half + step * i as f64 };
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    let mut boundary_flags = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([coord(i), coord(j)]);
            boundary_flags.push(i == 0 || j == 0 || i == n || j == n);
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    Mesh {
        vertices,
        triangles,
        boundary_flags,
        h: step,
    }
}

impl Mesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_points(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        signed_area(a, b, c)
    }

    /// Lumped mass: a third of the area of every incident triangle.
    pub fn lumped_mass(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            let a = self.area(t) / 3.0;
            for &v in tri {
                m[v] += a;
            }
        }
        m
    }

    /// Edges with their incident triangle count.
    pub fn edge_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut edges = HashMap::new();
        for tri in &self.triangles {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges
    }

    /// Edges of the boundary polygon (those with a single incident triangle).
    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<_> = self
            .edge_counts()
            .into_iter()
            .filter(|&(_, c)| c == 1)
            .map(|(e, _)| e)
            .collect();
        out.sort_unstable();
        out
    }

    /// Smallest interior angle over all triangles, in radians.
    pub fn min_angle(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let p = self.triangle_points(t);
                (0..3)
                    .map(|i| {
                        let (a, b, c) = (p[i], p[(i + 1) % 3], p[(i + 2) % 3]);
                        let u = [b[0] - a[0], b[1] - a[1]];
                        let v = [c[0] - a[0], c[1] - a[1]];
                        let cos = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
                        cos.clamp(-1.0, 1.0).acos()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks positive areas, conformity and boundary flags.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if self.boundary_flags.len() != n {
            return Err(Error::InvalidArgument("boundary flag count differs from vertex count".into()));
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(Error::InvalidArgument(format!("triangle {t} has an out-of-range vertex")));
            }
            if !(self.area(t) > 0.0) {
                return Err(Error::InvalidArgument(format!("triangle {t} has non-positive area")));
            }
        }
        let edges = self.edge_counts();
        if let Some((e, c)) = edges.iter().find(|&(_, &c)| c > 2) {
            return Err(Error::InvalidArgument(format!("edge {e:?} is shared by {c} triangles")));
        }
        let mut on_boundary = vec![false; n];
        for (&(a, b), &c) in &edges {
            if c == 1 {
                on_boundary[a] = true;
                on_boundary[b] = true;
            }
        }
        if on_boundary != self.boundary_flags {
            return Err(Error::InvalidArgument(
                "boundary flags do not match the boundary polygon".into(),
            ));
        }
        Ok(())
    }

    /// Writes `OFF`, the counts, one `x y 0` line per vertex and one
    /// `3 a b c` line per triangle.
    pub fn write_off<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "OFF")?;
        writeln!(out, "{} {} 0", self.vertices.len(), self.triangles.len())?;
        for v in &self.vertices {
            writeln!(out, "{:.17e} {:.17e} 0", v[0], v[1])?;
        }
        for t in &self.triangles {
            writeln!(out, "3 {} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }

    /// Reads the format of [`Mesh::write_off`]. Boundary flags are rebuilt
    /// from the edges and `h` is the longest edge.
    pub fn read_off<R: BufRead>(input: R) -> Result<Mesh> {
        let mut lines = input
            .lines()
            .map(|l| l.map_err(Error::from))
            .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty() && !s.starts_with('#')));
        let bad = |msg: &str| Error::Parse { pos: 0, msg: msg.to_string() };
        let mut next = || lines.next().ok_or_else(|| bad("unexpected end of OFF data")).and_then(|l| l);
        if next()?.trim() != "OFF" {
            return Err(bad("missing OFF header"));
        }
        let counts: Vec<usize> = next()?
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| bad("malformed counts")))
            .collect::<Result<_>>()?;
        if counts.len() < 2 {
            return Err(bad("malformed counts"));
        }
        let mut vertices = Vec::with_capacity(counts[0]);
        for _ in 0..counts[0] {
            let xs: Vec<f64> = next()?
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| bad("malformed vertex")))
                .collect::<Result<_>>()?;
            if xs.len() < 2 {
                return Err(bad("malformed vertex"));
            }
            vertices.push([xs[0], xs[1]]);
        }
        let mut triangles = Vec::with_capacity(counts[1]);
        for _ in 0..counts[1] {
            let ids: Vec<usize> = next()?
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| bad("malformed face")))
                .collect::<Result<_>>()?;
            if ids.len() != 4 || ids[0] != 3 {
                return Err(bad("only triangular faces are supported"));
            }
            triangles.push([ids[1], ids[2], ids[3]]);
        }
        let mut mesh = Mesh {
            boundary_flags: vec![false; vertices.len()],
            vertices,
            triangles,
            h: 0.0,
        };
        for (&(a, b), &c) in &mesh.edge_counts() {
            if c == 1 {
                mesh.boundary_flags[a] = true;
                mesh.boundary_flags[b] = true;
            }
            let (p, q) = (mesh.vertices[a], mesh.vertices[b]);
            mesh.h = mesh.h.max((p[0] - q[0]).hypot(p[1] - q[1]));
        }
        mesh.validate()?;
        Ok(mesh)
    }

    /// Bucket-grid point locator over the triangles.
    pub fn locator(&self) -> Locator<'_> {
        Locator::new(self)
    }
}

/// Finds the triangle containing a point and its barycentric coordinates.
#[derive(Debug, Clone)]
pub struct Locator<'a> {
    mesh: &'a Mesh,
    origin: [f64; 2],
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
}

impl<'a> Locator<'a> {
    fn new(mesh: &'a Mesh) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for v in &mesh.vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE);
        let target = (mesh.triangles.len() as f64).sqrt().ceil().max(1.0);
        let cell = extent / target;
        let nx = (((hi[0] - lo[0]) / cell).floor() as usize + 1).max(1);
        let ny = (((hi[1] - lo[1]) / cell).floor() as usize + 1).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        for (t, _) in mesh.triangles.iter().enumerate() {
            let pts = mesh.triangle_points(t);
            let (mut a, mut b) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for p in pts {
                for d in 0..2 {
                    a[d] = a[d].min(p[d]);
                    b[d] = b[d].max(p[d]);
                }
            }
            let ix0 = (((a[0] - lo[0]) / cell).floor() as usize).min(nx - 1);
            let ix1 = (((b[0] - lo[0]) / cell).floor() as usize).min(nx - 1);
            let iy0 = (((a[1] - lo[1]) / cell).floor() as usize).min(ny - 1);
            let iy1 = (((b[1] - lo[1]) / cell).floor() as usize).min(ny - 1);
            for iy in iy0..=iy1 {
                for ix in ix0..=ix1 {
                    buckets[iy * nx + ix].push(t as u32);
                }
            }
        }
        Self {
            mesh,
            origin: lo,
            cell,
            nx,
            ny,
            buckets,
        }
    }

    fn barycentric(&self, t: usize, x: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.mesh.triangle_points(t);
        let area = signed_area(a, b, c);
        [
            signed_area(x, b, c) / area,
            signed_area(a, x, c) / area,
            signed_area(a, b, x) / area,
        ]
    }

    /// Containing triangle and barycentric weights. Points slightly outside
    /// the mesh (between a boundary chord and the true boundary) snap to the
    /// nearest bucketed triangle with clipped weights; points far outside
    /// return `None`.
    pub fn locate(&self, x: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let fx = (x[0] - self.origin[0]) / self.cell;
        let fy = (x[1] - self.origin[1]) / self.cell;
        if fx < -1.0 || fy < -1.0 || fx > self.nx as f64 + 1.0 || fy > self.ny as f64 + 1.0 {
            return None;
        }
        let ix = (fx.floor().max(0.0) as usize).min(self.nx - 1);
        let iy = (fy.floor().max(0.0) as usize).min(self.ny - 1);
        let mut best: Option<(f64, usize, [f64; 3])> = None;
        for &t in &self.buckets[iy * self.nx + ix] {
            let w = self.barycentric(t as usize, x);
            let worst = w.iter().copied().fold(f64::INFINITY, f64::min);
            if worst >= -1e-12 {
                return Some((t as usize, w));
            }
            if best.map_or(true, |(b, _, _)| worst > b) {
                best = Some((worst, t as usize, w));
            }
        }
        let (worst, t, w) = best?;
        if worst < -0.5 {
            return None;
        }
        let clipped = w.map(|v| v.max(0.0));
        let s: f64 = clipped.iter().sum();
        Some((t, clipped.map(|v| v / s)))
    }

    /// Piecewise-linear interpolation of nodal `values` at `x`.
    pub fn interpolate(&self, values: &[f64], x: [f64; 2]) -> Option<f64> {
        let (t, w) = self.locate(x)?;
        let tri = self.mesh.triangles[t];
        Some(w[0] * values[tri[0]] + w[1] * values[tri[1]] + w[2] * values[tri[2]])
    }
}
