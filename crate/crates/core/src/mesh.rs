//! Two-subdomain triangulations: a heart disk nested inside a torso disk.
//!
//! Vertices on both circles are placed exactly on the circle. Triangles are
//! tagged by subdomain and the two interfaces are stored as tagged boundary
//! edges. A boundary edge `[a, b]` is oriented so that the triangle of its
//! *owning* subdomain lies to its left (Heart for the inner circle, Torso for
//! the outer circle); both loops therefore run counter-clockwise.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Subdomain {
    Heart,
    Torso,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    /// The heart surface, shared by both subdomains.
    Inner,
    /// The body surface.
    Outer,
}

impl BoundaryTag {
    /// The subdomain lying to the left of the stored edge orientation.
    pub fn owner(self) -> Subdomain {
        match self {
            BoundaryTag::Inner => Subdomain::Heart,
            BoundaryTag::Outer => Subdomain::Torso,
        }
    }
}

impl Subdomain {
    pub fn boundary_tags(self) -> &'static [BoundaryTag] {
        match self {
            Subdomain::Heart => &[BoundaryTag::Inner],
            Subdomain::Torso => &[BoundaryTag::Inner, BoundaryTag::Outer],
        }
    }

    fn keyword(self) -> &'static str {
        match self {
            Subdomain::Heart => "heart",
            Subdomain::Torso => "torso",
        }
    }
}

impl FromStr for Subdomain {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heart" => Ok(Subdomain::Heart),
            "torso" => Ok(Subdomain::Torso),
            other => Err(Error::InvalidInput(format!("unknown subdomain `{other}`"))),
        }
    }
}

impl BoundaryTag {
    fn keyword(self) -> &'static str {
        match self {
            BoundaryTag::Inner => "inner",
            BoundaryTag::Outer => "outer",
        }
    }
}

impl FromStr for BoundaryTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inner" => Ok(BoundaryTag::Inner),
            "outer" => Ok(BoundaryTag::Outer),
            other => Err(Error::InvalidInput(format!("unknown boundary tag `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
}

#[derive(Clone, Debug)]
pub struct Mesh2D {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    subdomains: Vec<Subdomain>,
    boundary_edges: Vec<BoundaryEdge>,
    h: f64,
    /// Closed vertex loops, counter-clockwise, one per tag.
    loops: HashMap<BoundaryTag, Vec<usize>>,
}

pub fn triangle_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Builds the concentric disk-in-disk triangulation.
///
/// The heart disk is meshed with rings of `6k` vertices at radius `k·r_inner/N`
/// around a centre vertex; the torso annulus continues the radial spacing with
/// ring sizes proportional to the radius. `N` is increased until the longest
/// edge is at most `h`.
pub fn build_disk_in_disk_mesh(r_inner: f64, r_outer: f64, h: f64) -> Result<Mesh2D> {
    if !(r_inner > 0.0 && r_outer > r_inner) {
        return Err(Error::InvalidGeometry(format!(
            "need 0 < r_inner < r_outer, got r_inner = {r_inner}, r_outer = {r_outer}"
        )));
    }
    if !(h > 0.0 && h < r_inner) {
        return Err(Error::InvalidGeometry(format!(
            "need 0 < h < r_inner, got h = {h}"
        )));
    }
    let mut n = (r_inner / h).ceil() as usize;
    loop {
        let mesh = disk_in_disk_with_rings(r_inner, r_outer, n);
        if mesh.h <= h {
            return Ok(mesh);
        }
        n += 1;
    }
}

/// The same triangulation with exactly `rings` heart rings. Doubling `rings`
/// keeps every vertex, which nested-mesh extrapolation relies on.
pub fn build_disk_in_disk_mesh_rings(r_inner: f64, r_outer: f64, rings: usize) -> Result<Mesh2D> {
    if !(r_inner > 0.0 && r_outer > r_inner) || rings == 0 {
        return Err(Error::InvalidGeometry(format!(
            "need 0 < r_inner < r_outer and at least one ring, got {r_inner}, {r_outer}, {rings}"
        )));
    }
    Ok(disk_in_disk_with_rings(r_inner, r_outer, rings))
}

fn ring(center_radius: f64, count: usize, vertices: &mut Vec<Point>) -> Vec<usize> {
    (0..count)
        .map(|j| {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / count as f64;
            vertices.push([center_radius * theta.cos(), center_radius * theta.sin()]);
            vertices.len() - 1
        })
        .collect()
}

/// Triangulates the strip between two concentric vertex rings by merging their
/// angular orderings.
fn zip_rings(inner: &[usize], outer: &[usize], out: &mut Vec<[usize; 3]>) {
    let (ni, no) = (inner.len(), outer.len());
    let (mut i, mut j) = (0, 0);
    while i < ni || j < no {
        let next_inner = (i + 1) as f64 / ni as f64;
        let next_outer = (j + 1) as f64 / no as f64;
        if i < ni && (j == no || next_inner <= next_outer) {
            out.push([inner[i], outer[j % no], inner[(i + 1) % ni]]);
            i += 1;
        } else {
            out.push([inner[i % ni], outer[j], outer[(j + 1) % no]]);
            j += 1;
        }
    }
}

fn disk_in_disk_with_rings(r_inner: f64, r_outer: f64, n: usize) -> Mesh2D {
    let mut vertices = vec![[0.0, 0.0]];
    let mut triangles = Vec::new();
    let mut subdomains = Vec::new();

    let dr = r_inner / n as f64;
    let mut prev = ring(dr, 6, &mut vertices);
    for j in 0..6 {
        triangles.push([0, prev[j], prev[(j + 1) % 6]]);
    }
    for k in 2..=n {
        let cur = ring(dr * k as f64, 6 * k, &mut vertices);
        zip_rings(&prev, &cur, &mut triangles);
        prev = cur;
    }
    subdomains.resize(triangles.len(), Subdomain::Heart);
    let inner_loop = prev.clone();

    let m = ((r_outer - r_inner) / dr).ceil().max(1.0) as usize;
    for j in 1..=m {
        let rho = r_inner + (r_outer - r_inner) * j as f64 / m as f64;
        let count = ((6 * n) as f64 * rho / r_inner).round() as usize;
        let cur = ring(rho, count.max(6 * n), &mut vertices);
        zip_rings(&prev, &cur, &mut triangles);
        prev = cur;
    }
    subdomains.resize(triangles.len(), Subdomain::Torso);
    let outer_loop = prev;

    for t in triangles.iter_mut() {
        if triangle_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]) < 0.0 {
            t.swap(1, 2);
        }
    }
    let mut boundary_edges = Vec::new();
    for (tag, lp) in [(BoundaryTag::Inner, &inner_loop), (BoundaryTag::Outer, &outer_loop)] {
        for k in 0..lp.len() {
            boundary_edges.push(BoundaryEdge {
                vertices: [lp[k], lp[(k + 1) % lp.len()]],
                tag,
            });
        }
    }
    let h = max_edge_length(&vertices, &triangles);
    let mut loops = HashMap::new();
    loops.insert(BoundaryTag::Inner, inner_loop);
    loops.insert(BoundaryTag::Outer, outer_loop);
    Mesh2D {
        vertices,
        triangles,
        subdomains,
        boundary_edges,
        h,
        loops,
    }
}

fn max_edge_length(vertices: &[Point], triangles: &[[usize; 3]]) -> f64 {
    triangles
        .iter()
        .flat_map(|t| {
            (0..3).map(move |e| distance(vertices[t[e]], vertices[t[(e + 1) % 3]]))
        })
        .fold(0.0, f64::max)
}

impl Mesh2D {
    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle_subdomains(&self) -> &[Subdomain] {
        &self.subdomains
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    /// Longest edge of the triangulation.
    pub fn mesh_size(&self) -> f64 {
        self.h
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Counter-clockwise vertex loop of the given interface.
    pub fn boundary_loop(&self, tag: BoundaryTag) -> Result<&[usize]> {
        self.loops
            .get(&tag)
            .map(Vec::as_slice)
            .filter(|l| !l.is_empty())
            .ok_or_else(|| Error::tag_empty(tag))
    }

    pub fn edges_with_tag(&self, tag: BoundaryTag) -> impl Iterator<Item = &BoundaryEdge> {
        self.boundary_edges.iter().filter(move |e| e.tag == tag)
    }

    /// Trapezoidal line integral of a nodal field (indexed by global vertex)
    /// over the polygonal interface `tag`.
    pub fn boundary_integral(&self, values: &[f64], tag: BoundaryTag) -> Result<f64> {
        let mut any = false;
        let mut sum = 0.0;
        for e in self.edges_with_tag(tag) {
            any = true;
            let [a, b] = e.vertices;
            sum += 0.5 * distance(self.vertices[a], self.vertices[b]) * (values[a] + values[b]);
        }
        if any {
            Ok(sum)
        } else {
            Err(Error::tag_empty(tag))
        }
    }

    /// Exact integral of the piecewise-linear interpolant over one subdomain.
    pub fn domain_integral(&self, values: &[f64], subdomain: Subdomain) -> Result<f64> {
        let mut any = false;
        let mut sum = 0.0;
        for (t, s) in self.triangles.iter().zip(&self.subdomains) {
            if *s != subdomain {
                continue;
            }
            any = true;
            let area = triangle_area(self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]);
            sum += area * (values[t[0]] + values[t[1]] + values[t[2]]) / 3.0;
        }
        if any {
            Ok(sum)
        } else {
            Err(Error::TagEmpty(format!("{subdomain:?}")))
        }
    }

    pub fn subdomain_area(&self, subdomain: Subdomain) -> f64 {
        self.triangles
            .iter()
            .zip(&self.subdomains)
            .filter(|(_, s)| **s == subdomain)
            .map(|(t, _)| triangle_area(self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]))
            .sum()
    }

    /// Unit normal of the boundary edge `{a, b}` pointing out of `side`.
    pub fn outward_normal(&self, a: usize, b: usize, side: Subdomain) -> Result<[f64; 2]> {
        let edge = self
            .boundary_edges
            .iter()
            .find(|e| e.vertices == [a, b] || e.vertices == [b, a])
            .ok_or(Error::NotBoundaryEdge(a, b))?;
        let sign = match (edge.tag, side) {
            (BoundaryTag::Inner, Subdomain::Heart) | (BoundaryTag::Outer, Subdomain::Torso) => 1.0,
            (BoundaryTag::Inner, Subdomain::Torso) => -1.0,
            (BoundaryTag::Outer, Subdomain::Heart) => return Err(Error::NotBoundaryEdge(a, b)),
        };
        Ok(scale(sign, left_normal_right(self.vertices[edge.vertices[0]], self.vertices[edge.vertices[1]])))
    }

    /// Checks the structural invariants: orientation, tag consistency and
    /// connectivity of both subdomains.
    pub fn validate(&self) -> Result<()> {
        for (k, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= self.vertices.len()) {
                return Err(Error::InvalidGeometry(format!("triangle {k} references a missing vertex")));
            }
            let area = triangle_area(self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]);
            if area <= 0.0 {
                return Err(Error::InvalidGeometry(format!(
                    "triangle {k} is not positively oriented (area {area:.3e})"
                )));
            }
        }
        let adjacency = self.edge_adjacency();
        for e in &self.boundary_edges {
            let key = sorted(e.vertices);
            let owners: Vec<Subdomain> = adjacency
                .get(&key)
                .map(|ts| ts.iter().map(|&t| self.subdomains[t]).collect())
                .unwrap_or_default();
            let ok = match e.tag {
                BoundaryTag::Inner => {
                    owners.len() == 2
                        && owners.contains(&Subdomain::Heart)
                        && owners.contains(&Subdomain::Torso)
                }
                BoundaryTag::Outer => owners == [Subdomain::Torso],
            };
            if !ok {
                return Err(Error::InvalidGeometry(format!(
                    "boundary edge {:?} tagged {:?} has neighbours {owners:?}",
                    e.vertices, e.tag
                )));
            }
        }
        for (key, ts) in &adjacency {
            if ts.len() == 1 && !self.boundary_edges.iter().any(|e| sorted(e.vertices) == *key) {
                return Err(Error::InvalidGeometry(format!("untagged boundary edge {key:?}")));
            }
        }
        for s in [Subdomain::Heart, Subdomain::Torso] {
            if !self.subdomain_connected(s, &adjacency) {
                return Err(Error::InvalidGeometry(format!("{s:?} triangles are not connected")));
            }
        }
        Ok(())
    }

    fn edge_adjacency(&self) -> HashMap<[usize; 2], Vec<usize>> {
        let mut map: HashMap<[usize; 2], Vec<usize>> = HashMap::new();
        for (k, t) in self.triangles.iter().enumerate() {
            for e in 0..3 {
                map.entry(sorted([t[e], t[(e + 1) % 3]])).or_default().push(k);
            }
        }
        map
    }

    fn subdomain_connected(&self, s: Subdomain, adjacency: &HashMap<[usize; 2], Vec<usize>>) -> bool {
        let members: Vec<usize> = (0..self.triangles.len()).filter(|&k| self.subdomains[k] == s).collect();
        let Some(&start) = members.first() else {
            return false;
        };
        let mut seen = HashSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(k) = queue.pop_front() {
            let t = self.triangles[k];
            for e in 0..3 {
                for &nb in &adjacency[&sorted([t[e], t[(e + 1) % 3]])] {
                    if self.subdomains[nb] == s && seen.insert(nb) {
                        queue.push_back(nb);
                    }
                }
            }
        }
        seen.len() == members.len()
    }

    /// Plain-text export: `mesh2d v1`, vertex count, `x y` lines, then
    /// `i j k tag` triangle lines and `i j tag` boundary-edge lines.
    pub fn to_text(&self) -> String {
        let mut out = String::from("mesh2d v1\n");
        let _ = writeln!(out, "{}", self.vertices.len());
        for p in &self.vertices {
            let _ = writeln!(out, "{:e} {:e}", p[0], p[1]);
        }
        for (t, s) in self.triangles.iter().zip(&self.subdomains) {
            let _ = writeln!(out, "{} {} {} {}", t[0], t[1], t[2], s.keyword());
        }
        for e in &self.boundary_edges {
            let _ = writeln!(out, "{} {} {}", e.vertices[0], e.vertices[1], e.tag.keyword());
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Mesh2D> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let parse_err = |line: usize, msg: &str| Error::Parse { line: line + 1, msg: msg.to_string() };
        match lines.next() {
            Some((_, l)) if l.trim() == "mesh2d v1" => {}
            Some((i, _)) => return Err(parse_err(i, "expected header `mesh2d v1`")),
            None => return Err(parse_err(0, "empty mesh file")),
        }
        let (i, count_line) = lines.next().ok_or_else(|| parse_err(1, "missing vertex count"))?;
        let nv: usize = count_line.trim().parse().map_err(|_| parse_err(i, "bad vertex count"))?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (i, l) = lines.next().ok_or_else(|| parse_err(i, "missing vertex line"))?;
            let xs: Vec<f64> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err(i, "bad vertex coordinates"))?;
            if xs.len() != 2 {
                return Err(parse_err(i, "vertex line needs two coordinates"));
            }
            vertices.push([xs[0], xs[1]]);
        }
        let mut triangles = Vec::new();
        let mut subdomains = Vec::new();
        let mut boundary_edges = Vec::new();
        for (i, l) in lines {
            let tok: Vec<&str> = l.split_whitespace().collect();
            let idx = |s: &str| s.parse::<usize>().map_err(|_| parse_err(i, "bad index"));
            match tok.len() {
                4 => {
                    triangles.push([idx(tok[0])?, idx(tok[1])?, idx(tok[2])?]);
                    subdomains.push(tok[3].parse().map_err(|_| parse_err(i, "bad subdomain tag"))?);
                }
                3 => boundary_edges.push(BoundaryEdge {
                    vertices: [idx(tok[0])?, idx(tok[1])?],
                    tag: tok[2].parse().map_err(|_| parse_err(i, "bad boundary tag"))?,
                }),
                _ => return Err(parse_err(i, "expected a triangle or boundary-edge line")),
            }
        }
        if boundary_edges.iter().flat_map(|e| e.vertices).any(|v| v >= vertices.len()) {
            return Err(Error::InvalidGeometry("boundary edge references a missing vertex".into()));
        }
        let h = max_edge_length(&vertices, &triangles);
        let mut mesh = Mesh2D {
            vertices,
            triangles,
            subdomains,
            boundary_edges,
            h,
            loops: HashMap::new(),
        };
        mesh.validate()?;
        mesh.orient_boundary_edges();
        mesh.loops = mesh.chain_loops()?;
        Ok(mesh)
    }

    fn orient_boundary_edges(&mut self) {
        let adjacency = self.edge_adjacency();
        for e in self.boundary_edges.iter_mut() {
            let owner = e.tag.owner();
            let t = adjacency[&sorted(e.vertices)]
                .iter()
                .copied()
                .find(|&t| self.subdomains[t] == owner)
                .expect("validated");
            let tri = self.triangles[t];
            let forward = (0..3).any(|k| [tri[k], tri[(k + 1) % 3]] == e.vertices);
            if !forward {
                e.vertices.swap(0, 1);
            }
        }
    }

    fn chain_loops(&self) -> Result<HashMap<BoundaryTag, Vec<usize>>> {
        let mut loops = HashMap::new();
        for tag in [BoundaryTag::Inner, BoundaryTag::Outer] {
            let next: HashMap<usize, usize> =
                self.edges_with_tag(tag).map(|e| (e.vertices[0], e.vertices[1])).collect();
            let Some(&start) = next.keys().min() else {
                continue;
            };
            let mut lp = vec![start];
            let mut cur = next[&start];
            while cur != start {
                lp.push(cur);
                cur = *next.get(&cur).ok_or_else(|| {
                    Error::InvalidGeometry(format!("{tag:?} boundary is not a closed loop"))
                })?;
                if lp.len() > next.len() {
                    return Err(Error::InvalidGeometry(format!("{tag:?} boundary loop is malformed")));
                }
            }
            if lp.len() != next.len() {
                return Err(Error::InvalidGeometry(format!("{tag:?} boundary has several components")));
            }
            loops.insert(tag, lp);
        }
        Ok(loops)
    }
}

fn sorted(e: [usize; 2]) -> [usize; 2] {
    if e[0] < e[1] {
        e
    } else {
        [e[1], e[0]]
    }
}

fn scale(s: f64, v: [f64; 2]) -> [f64; 2] {
    [s * v[0], s * v[1]]
}

/// Unit normal pointing to the right of the directed segment `a -> b`.
pub(crate) fn left_normal_right(a: Point, b: Point) -> [f64; 2] {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len = dx.hypot(dy);
    [dy / len, -dx / len]
}
