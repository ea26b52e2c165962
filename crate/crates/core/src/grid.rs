//! Masked planar grids and graph approximations of the ambient metric `d` and
//! the induced length metric `d_Y`.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Ambient,
    InY,
    Boundary,
}

impl NodeKind {
    pub fn in_y(self) -> bool {
        !matches!(self, NodeKind::Ambient)
    }
}

/// Neighbor offset set used for graph distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Stencil {
    Eight,
    #[default]
    Sixteen,
}

impl TryFrom<u32> for Stencil {
    type Error = String;

    fn try_from(v: u32) -> std::result::Result<Self, String> {
        match v {
            8 => Ok(Stencil::Eight),
            16 => Ok(Stencil::Sixteen),
            other => Err(format!("stencil must be 8 or 16, got {other}")),
        }
    }
}

impl From<Stencil> for u32 {
    fn from(s: Stencil) -> u32 {
        match s {
            Stencil::Eight => 8,
            Stencil::Sixteen => 16,
        }
    }
}

const KING: [(i64, i64); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];
const KNIGHT: [(i64, i64); 8] = [(2, 1), (1, 2), (-1, 2), (-2, 1), (-2, -1), (-1, -2), (1, -2), (2, -1)];

impl Stencil {
    pub fn offsets(self) -> Vec<(i64, i64)> {
        match self {
            Stencil::Eight => KING.to_vec(),
            Stencil::Sixteen => KING.iter().chain(KNIGHT.iter()).copied().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub center: Point,
    pub radius: f64,
}

fn default_discs() -> Vec<Disc> {
    vec![Disc { center: [0.5, 0.5], radius: 0.25 }]
}
fn default_center() -> Point {
    [0.5, 0.5]
}
fn default_half() -> f64 {
    0.5
}
fn default_quarter() -> f64 {
    0.25
}
fn default_extent() -> [f64; 2] {
    [1.0, 1.0]
}

/// Named planar geometry. Coordinates are physical (the grid box is
/// `[origin, origin + extent]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fixture", rename_all = "snake_case")]
pub enum Fixture {
    Square,
    SquareMinusDiscs {
        #[serde(default = "default_discs")]
        discs: Vec<Disc>,
    },
    Disc {
        #[serde(default = "default_center")]
        center: Point,
        #[serde(default = "default_half")]
        radius: f64,
    },
    /// Disc with a round-ended slot of half-width `mouth_radius` running from
    /// the center through the rim in direction `mouth_angle` (radians).
    Pacman {
        #[serde(default = "default_center")]
        center: Point,
        #[serde(default = "default_half")]
        radius: f64,
        #[serde(default = "default_quarter")]
        mouth_radius: f64,
        #[serde(default)]
        mouth_angle: f64,
    },
    LShape {
        #[serde(default = "default_center")]
        corner: Point,
    },
    /// Disc whose Y-edges crossing the ray `{y = center.y + h/2, x > center.x}`
    /// are deleted.
    SlitDisc {
        #[serde(default = "default_center")]
        center: Point,
        #[serde(default = "default_half")]
        radius: f64,
    },
    /// Explicit mask; `#` marks Y, anything else Ambient. Row 0 is the bottom row.
    Mask { rows: Vec<String> },
}

/// Domain description as read from config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    #[serde(flatten)]
    pub fixture: Fixture,
    pub h: f64,
    #[serde(default)]
    pub stencil: Stencil,
    #[serde(default)]
    pub origin: Point,
    #[serde(default = "default_extent")]
    pub extent: [f64; 2],
}

impl DomainSpec {
    pub fn new(fixture: Fixture, h: f64) -> Self {
        DomainSpec { fixture, h, stencil: Stencil::default(), origin: [0.0, 0.0], extent: default_extent() }
    }

    pub fn with_stencil(mut self, stencil: Stencil) -> Self {
        self.stencil = stencil;
        self
    }

    pub fn fixture_name(&self) -> &'static str {
        match self.fixture {
            Fixture::Square => "square",
            Fixture::SquareMinusDiscs { .. } => "square_minus_discs",
            Fixture::Disc { .. } => "disc",
            Fixture::Pacman { .. } => "pacman",
            Fixture::LShape { .. } => "l_shape",
            Fixture::SlitDisc { .. } => "slit_disc",
            Fixture::Mask { .. } => "mask",
        }
    }

    /// Smallest geometric feature of the fixture (hole radius, slot half-width).
    pub fn feature_size(&self) -> f64 {
        match &self.fixture {
            Fixture::SquareMinusDiscs { discs } => discs.iter().map(|d| d.radius).fold(f64::INFINITY, f64::min),
            Fixture::Disc { radius, .. } | Fixture::SlitDisc { radius, .. } => *radius,
            Fixture::Pacman { mouth_radius, .. } => *mouth_radius,
            Fixture::LShape { corner } => {
                let e = self.extent;
                (corner[0] - self.origin[0]).min(corner[1] - self.origin[1]).min(e[0]).min(e[1])
            }
            Fixture::Square | Fixture::Mask { .. } => self.extent[0].min(self.extent[1]),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub length: f64,
    /// Both endpoints in Y, the straddled cells in Y, and not cut by a slit.
    pub in_y: bool,
    /// Grid offset from `a` to `b`.
    pub offset: (i64, i64),
}

/// Horizontal cut `{y = y0, x > x0}` deleting every Y-edge that crosses it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slit {
    pub y: f64,
    pub x_start: f64,
}

impl Slit {
    fn cuts(&self, p: Point, q: Point) -> bool {
        let (dy0, dy1) = (p[1] - self.y, q[1] - self.y);
        if dy0 * dy1 >= 0.0 {
            return false;
        }
        let s = dy0 / (dy0 - dy1);
        let x = p[0] + s * (q[0] - p[0]);
        x > self.x_start
    }
}

/// Masked rectangular grid with node measures and a symmetric edge list.
#[derive(Debug, Clone)]
pub struct GridDomain {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: Point,
    pub kinds: Vec<NodeKind>,
    pub node_measure: Vec<f64>,
    pub stencil: Stencil,
    pub edges: Vec<Edge>,
    pub slit: Option<Slit>,
    pub spec: Option<DomainSpec>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

const GEOM_EPS: f64 = 1e-9;

fn dist(p: Point, q: Point) -> f64 {
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (vx, vy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 { (((p[0] - a[0]) * vx + (p[1] - a[1]) * vy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    dist(p, [a[0] + t * vx, a[1] + t * vy])
}

impl Fixture {
    /// Membership of a physical point in Y (closed set).
    pub fn contains(&self, p: Point, h: f64) -> bool {
        let eps = GEOM_EPS * h;
        match self {
            Fixture::Square | Fixture::Mask { .. } => true,
            Fixture::SquareMinusDiscs { discs } => discs.iter().all(|d| dist(p, d.center) >= d.radius - eps),
            Fixture::Disc { center, radius } | Fixture::SlitDisc { center, radius } => dist(p, *center) <= radius + eps,
            Fixture::Pacman { center, radius, mouth_radius, mouth_angle } => {
                if dist(p, *center) > radius + eps {
                    return false;
                }
                let reach = radius + 2.0 * mouth_radius;
                let tip = [center[0] + reach * mouth_angle.cos(), center[1] + reach * mouth_angle.sin()];
                segment_distance(p, *center, tip) >= mouth_radius - eps
            }
            Fixture::LShape { corner } => !(p[0] > corner[0] + eps && p[1] > corner[1] + eps),
        }
    }
}

impl GridDomain {
    /// Builds a domain from a specification; see [`build_domain`].
    pub fn build(spec: &DomainSpec) -> Result<Self> {
        build_domain(spec)
    }

    /// Builds a domain from an explicit Y-membership mask (row-major, `iy * nx + ix`).
    pub fn from_mask(nx: usize, ny: usize, h: f64, origin: Point, in_y: &[bool], stencil: Stencil, slit: Option<Slit>) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidSpec(format!("grid spacing must be positive, got {h}")));
        }
        if nx == 0 || ny == 0 || in_y.len() != nx * ny {
            return Err(Error::InvalidSpec(format!("mask of length {} does not match {nx}x{ny}", in_y.len())));
        }
        if !in_y.iter().any(|&b| b) {
            return Err(Error::EmptyY);
        }
        let mut kinds = vec![NodeKind::Ambient; nx * ny];
        for iy in 0..ny {
            for ix in 0..nx {
                let i = iy * nx + ix;
                if !in_y[i] {
                    continue;
                }
                let on_box_edge = ix == 0 || iy == 0 || ix + 1 == nx || iy + 1 == ny;
                let touches_ambient = KING.iter().any(|&(dx, dy)| {
                    let (jx, jy) = (ix as i64 + dx, iy as i64 + dy);
                    jx >= 0 && jy >= 0 && (jx as usize) < nx && (jy as usize) < ny && !in_y[jy as usize * nx + jx as usize]
                });
                kinds[i] = if on_box_edge || touches_ambient { NodeKind::Boundary } else { NodeKind::InY };
            }
        }
        let mut domain = GridDomain {
            nx,
            ny,
            h,
            origin,
            kinds,
            node_measure: vec![h * h; nx * ny],
            stencil,
            edges: Vec::new(),
            slit,
            spec: None,
            adjacency: vec![Vec::new(); nx * ny],
        };
        domain.assemble_edges(in_y);
        domain.check_connected()?;
        Ok(domain)
    }

    fn assemble_edges(&mut self, in_y: &[bool]) {
        let offsets = self.stencil.offsets();
        let (nx, ny) = (self.nx as i64, self.ny as i64);
        for iy in 0..ny {
            for ix in 0..nx {
                let a = (iy * nx + ix) as usize;
                for &(dx, dy) in &offsets {
                    // each undirected edge once: keep offsets pointing "forward"
                    if dy < 0 || (dy == 0 && dx < 0) {
                        continue;
                    }
                    let (jx, jy) = (ix + dx, iy + dy);
                    if jx < 0 || jy < 0 || jx >= nx || jy >= ny {
                        continue;
                    }
                    let b = (jy * nx + jx) as usize;
                    let length = self.h * ((dx * dx + dy * dy) as f64).sqrt();
                    let mut y_edge = in_y[a] && in_y[b];
                    if y_edge {
                        // every node around the edge midpoint must be in Y
                        let (mx, my) = (2 * ix + dx, 2 * iy + dy);
                        for cx in [mx.div_euclid(2), (mx + 1).div_euclid(2)] {
                            for cy in [my.div_euclid(2), (my + 1).div_euclid(2)] {
                                if !in_y[(cy * nx + cx) as usize] {
                                    y_edge = false;
                                }
                            }
                        }
                    }
                    if y_edge {
                        if let Some(slit) = &self.slit {
                            if slit.cuts(self.point(a), self.point(b)) {
                                y_edge = false;
                            }
                        }
                    }
                    let e = self.edges.len();
                    self.edges.push(Edge { a, b, length, in_y: y_edge, offset: (dx, dy) });
                    self.adjacency[a].push((b, e));
                    self.adjacency[b].push((a, e));
                }
            }
        }
    }

    fn check_connected(&self) -> Result<()> {
        let components = self.y_components();
        if components > 1 {
            Err(Error::DisconnectedY { components })
        } else {
            Ok(())
        }
    }

    /// Number of connected components of the Y-subgraph.
    pub fn y_components(&self) -> usize {
        let mut seen = vec![false; self.len()];
        let mut components = 0;
        for start in self.y_nodes() {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &(v, e) in &self.adjacency[u] {
                    if self.edges[e].in_y && !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        components
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn coords(&self, i: usize) -> (usize, usize) {
        (i % self.nx, i / self.nx)
    }

    pub fn point(&self, i: usize) -> Point {
        let (ix, iy) = self.coords(i);
        [self.origin[0] + ix as f64 * self.h, self.origin[1] + iy as f64 * self.h]
    }

    pub fn in_y(&self, i: usize) -> bool {
        self.kinds[i].in_y()
    }

    pub fn y_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.in_y(i)).collect()
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.kinds[i] == NodeKind::Boundary).collect()
    }

    pub fn ambient_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.in_y(i)).collect()
    }

    /// Neighbors of `i` with the index of the connecting edge.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    pub fn y_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| e.in_y).count()
    }

    /// Upper corner of the bounding box.
    pub fn upper(&self) -> Point {
        [self.origin[0] + (self.nx - 1) as f64 * self.h, self.origin[1] + (self.ny - 1) as f64 * self.h]
    }

    pub fn contains_point(&self, p: Point) -> bool {
        let up = self.upper();
        let tol = GEOM_EPS * self.h;
        p[0] >= self.origin[0] - tol && p[1] >= self.origin[1] - tol && p[0] <= up[0] + tol && p[1] <= up[1] + tol
    }

    pub fn clamp_point(&self, p: Point) -> Point {
        let up = self.upper();
        [p[0].clamp(self.origin[0], up[0]), p[1].clamp(self.origin[1], up[1])]
    }

    pub fn nearest_node(&self, p: Point) -> usize {
        let q = self.clamp_point(p);
        let ix = ((q[0] - self.origin[0]) / self.h).round() as usize;
        let iy = ((q[1] - self.origin[1]) / self.h).round() as usize;
        self.index(ix.min(self.nx - 1), iy.min(self.ny - 1))
    }

    /// Bilinear interpolation of a node field at a physical point (clamped to the box).
    pub fn bilinear(&self, values: &[f64], p: Point) -> f64 {
        let q = self.clamp_point(p);
        let fx = (q[0] - self.origin[0]) / self.h;
        let fy = (q[1] - self.origin[1]) / self.h;
        let ix = (fx.floor() as usize).min(self.nx.saturating_sub(2));
        let iy = (fy.floor() as usize).min(self.ny.saturating_sub(2));
        let ix1 = (ix + 1).min(self.nx - 1);
        let iy1 = (iy + 1).min(self.ny - 1);
        let (sx, sy) = (fx - ix as f64, fy - iy as f64);
        let v00 = values[self.index(ix, iy)];
        let v10 = values[self.index(ix1, iy)];
        let v01 = values[self.index(ix, iy1)];
        let v11 = values[self.index(ix1, iy1)];
        (1.0 - sy) * ((1.0 - sx) * v00 + sx * v10) + sy * ((1.0 - sx) * v01 + sx * v11)
    }

    /// Graph hop distance (8-neighbor moves) from every node to the nearest Y node.
    pub fn hops_to_y(&self) -> Vec<usize> {
        let mut hops = vec![usize::MAX; self.len()];
        let mut queue = VecDeque::new();
        for i in self.y_nodes() {
            hops[i] = 0;
            queue.push_back(i);
        }
        while let Some(u) = queue.pop_front() {
            let (ix, iy) = self.coords(u);
            for &(dx, dy) in &KING {
                let (jx, jy) = (ix as i64 + dx, iy as i64 + dy);
                if jx < 0 || jy < 0 || jx as usize >= self.nx || jy as usize >= self.ny {
                    continue;
                }
                let v = self.index(jx as usize, jy as usize);
                if hops[v] == usize::MAX {
                    hops[v] = hops[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        hops
    }
}

/// Builds the masked grid for a fixture or explicit mask.
pub fn build_domain(spec: &DomainSpec) -> Result<GridDomain> {
    let h = spec.h;
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidSpec(format!("grid spacing must be positive, got {h}")));
    }
    let mut domain = if let Fixture::Mask { rows } = &spec.fixture {
        let ny = rows.len();
        let nx = rows.first().map_or(0, |r| r.chars().count());
        if ny == 0 || nx == 0 || rows.iter().any(|r| r.chars().count() != nx) {
            return Err(Error::InvalidSpec("mask rows must be nonempty and of equal length".into()));
        }
        let in_y: Vec<bool> = rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect();
        GridDomain::from_mask(nx, ny, h, spec.origin, &in_y, spec.stencil, None)?
    } else {
        if !(spec.extent[0] > 0.0 && spec.extent[1] > 0.0) {
            return Err(Error::InvalidSpec("extent must be positive".into()));
        }
        let nx = (spec.extent[0] / h).round() as usize + 1;
        let ny = (spec.extent[1] / h).round() as usize + 1;
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidSpec(format!("grid spacing {h} too coarse for extent {:?}", spec.extent)));
        }
        let mut in_y = vec![false; nx * ny];
        for iy in 0..ny {
            for ix in 0..nx {
                let p = [spec.origin[0] + ix as f64 * h, spec.origin[1] + iy as f64 * h];
                in_y[iy * nx + ix] = spec.fixture.contains(p, h);
            }
        }
        let slit = match &spec.fixture {
            Fixture::SlitDisc { center, .. } => Some(Slit { y: center[1] + 0.5 * h, x_start: center[0] }),
            _ => None,
        };
        GridDomain::from_mask(nx, ny, h, spec.origin, &in_y, spec.stencil, slit)?
    };
    domain.spec = Some(spec.clone());
    Ok(domain)
}

/// Edge weighting for graph distances.
#[derive(Debug, Clone, Copy)]
pub enum Weighting<'a> {
    Unit,
    /// Per-node conformal factor; edge weight is length times the endpoint mean.
    Conformal(&'a [f64]),
}

impl Weighting<'_> {
    pub fn edge_weight(&self, e: &Edge) -> f64 {
        match self {
            Weighting::Unit => e.length,
            Weighting::Conformal(phi) => e.length * (0.5 * (phi[e.a] + phi[e.b])),
        }
    }
}

/// Shortest-path tree from one or more sources.
#[derive(Debug, Clone)]
pub struct DistanceMap {
    pub sources: Vec<usize>,
    pub dist: Vec<f64>,
    pub pred: Vec<Option<usize>>,
    pub restrict_to_y: bool,
}

impl DistanceMap {
    /// Distance to `target`, or `Unreachable` when infinite.
    pub fn distance_to(&self, target: usize) -> Result<f64> {
        let d = self.dist[target];
        if d.is_finite() {
            Ok(d)
        } else {
            Err(Error::Unreachable { from: self.sources.first().copied().unwrap_or(usize::MAX), to: target })
        }
    }

    /// Writes `node_x,node_y,distance` rows; unreachable nodes are written as `inf`.
    pub fn write_csv<W: Write>(&self, domain: &GridDomain, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["node_x", "node_y", "distance"])?;
        for (i, d) in self.dist.iter().enumerate() {
            let p = domain.point(i);
            wtr.serialize((p[0], p[1], if d.is_finite() { format!("{d}") } else { "inf".to_string() }))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Copy, Clone, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn validate_weighting(domain: &GridDomain, weighting: &Weighting) -> Result<()> {
    if let Weighting::Conformal(phi) = weighting {
        if phi.len() != domain.len() {
            return Err(Error::InvalidParameter(format!("field has {} entries, domain {}", phi.len(), domain.len())));
        }
        if let Some(bad) = phi.iter().find(|&&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidParameter(format!("conformal factor must be positive and finite, got {bad}")));
        }
    }
    Ok(())
}

/// Multi-source Dijkstra. Ties between equal-length predecessors go to the
/// lowest node index.
pub fn multi_source_distance(domain: &GridDomain, weighting: Weighting, sources: &[usize], restrict_to_y: bool) -> Result<DistanceMap> {
    validate_weighting(domain, &weighting)?;
    let n = domain.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        if s >= n {
            return Err(Error::InvalidParameter(format!("source node {s} out of range")));
        }
        if restrict_to_y && !domain.in_y(s) {
            return Err(Error::InvalidParameter(format!("source node {s} is not in Y")));
        }
        dist[s] = 0.0;
        heap.push(HeapEntry { dist: 0.0, node: s });
    }
    while let Some(HeapEntry { dist: d, node: u }) = heap.pop() {
        if done[u] || d > dist[u] {
            continue;
        }
        done[u] = true;
        for &(v, e) in domain.neighbors(u) {
            let edge = &domain.edges[e];
            if restrict_to_y && !edge.in_y {
                continue;
            }
            let nd = d + weighting.edge_weight(edge);
            if nd < dist[v] {
                dist[v] = nd;
                pred[v] = Some(u);
                heap.push(HeapEntry { dist: nd, node: v });
            } else if nd == dist[v] && pred[v].is_some_and(|p| u < p) {
                pred[v] = Some(u);
            }
        }
    }
    Ok(DistanceMap { sources: sources.to_vec(), dist, pred, restrict_to_y })
}

/// Single-source shortest-path distances (`d` when unrestricted, `d_Y` when
/// restricted to Y-edges).
pub fn graph_distance(domain: &GridDomain, weighting: Weighting, source: usize, restrict_to_y: bool) -> Result<DistanceMap> {
    multi_source_distance(domain, weighting, &[source], restrict_to_y)
}

/// Polyline of grid nodes with per-segment lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPolyline {
    pub nodes: Vec<usize>,
    pub lengths: Vec<f64>,
}

impl PathPolyline {
    pub fn total(&self) -> f64 {
        self.lengths.iter().fold(0.0, |acc, l| acc + l)
    }

    pub fn points(&self, domain: &GridDomain) -> Vec<Point> {
        self.nodes.iter().map(|&i| domain.point(i)).collect()
    }
}

/// Extracts the path from the tree root to `target` in a distance map.
pub fn path_from_map(domain: &GridDomain, weighting: Weighting, map: &DistanceMap, target: usize) -> Result<PathPolyline> {
    map.distance_to(target)?;
    let mut nodes = vec![target];
    let mut cur = target;
    while let Some(p) = map.pred[cur] {
        nodes.push(p);
        cur = p;
    }
    nodes.reverse();
    let mut lengths = Vec::with_capacity(nodes.len().saturating_sub(1));
    for w in nodes.windows(2) {
        let e = domain
            .neighbors(w[0])
            .iter()
            .find(|&&(v, _)| v == w[1])
            .map(|&(_, e)| e)
            .expect("predecessor is a neighbor");
        lengths.push(weighting.edge_weight(&domain.edges[e]));
    }
    Ok(PathPolyline { nodes, lengths })
}

/// Backtracks the shortest-path tree from `x` to obtain a geodesic to `y`.
pub fn trace_geodesic(domain: &GridDomain, weighting: Weighting, x: usize, y: usize, restrict_to_y: bool) -> Result<PathPolyline> {
    let map = graph_distance(domain, weighting, x, restrict_to_y)?;
    path_from_map(domain, weighting, &map, y).map_err(|_| Error::Unreachable { from: x, to: y })
}
