//! Fat-graph geometry: strips of width `eps * w` for the edges, glued node
//! to node onto a scaled polygonal junction region, plus optional satellite
//! slabs inside the strips for the interpolating chain model.
//!
//! Every mesh is structured (wedge lattices and mapped rectangles split into
//! triangles), so glued interfaces match without tolerance-based stitching
//! and all areas are exact sums of polygon areas. Construction is single
//! threaded and deterministic; the resulting mesh is immutable.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Hard cap on mesh nodes; larger requests are refused before allocation.
pub const MESH_NODE_GUARD: usize = 2_000_000;

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Signed area of the triangle (a, b, c); positive when counterclockwise.
pub fn triangle_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * cross(sub(b, a), sub(c, a))
}

/// Region label of a mesh triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionTag {
    /// strip of the given edge
    Edge(usize),
    /// central junction region
    Vertex,
    /// satellite slab inside the strip of the given edge
    Satellite(usize),
}

impl std::fmt::Display for RegionTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RegionTag::Edge(e) => write!(f, "edge:{e}"),
            RegionTag::Vertex => write!(f, "vertex"),
            RegionTag::Satellite(e) => write!(f, "satellite:{e}"),
        }
    }
}

/// Label of a boundary segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryTag {
    /// lateral strip wall or unported polygon side
    Wall,
    /// far end of the strip of the given edge
    End(usize),
}

impl std::fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryTag::Wall => write!(f, "wall"),
            BoundaryTag::End(e) => write!(f, "end:{e}"),
        }
    }
}

/// Unscaled junction polygon with `n` straight ports of equal length.
///
/// For `n <= 3` the polygon is a regular 2n-gon with the ports on
/// alternating sides; for `n >= 4` it is a regular n-gon with every side a
/// port. The side length equals the port length, so gluing a strip of
/// matching width is an isometry, and area and boundary length are exact.
/// Behind every port lies a straight rectangular collar of depth half the
/// port length, entirely inside the polygon.
#[derive(Debug, Clone)]
pub struct VertexTemplate {
    n: usize,
    port_length: f64,
    corners: Vec<Point>,
    ports: Vec<usize>,
}

/// Build the canonical junction polygon for a degree-`n` vertex.
pub fn build_vertex_region(n: usize, port_length: f64) -> Result<VertexTemplate> {
    if n < 2 {
        return Err(Error::Invalid(format!("junction degree must be >= 2, got {n}")));
    }
    if !(port_length > 0.0) || !port_length.is_finite() {
        return Err(Error::Invalid(format!("port length must be positive, got {port_length}")));
    }
    let m = if n <= 3 { 2 * n } else { n };
    let r = 0.5 * port_length / (PI / m as f64).sin();
    let corners: Vec<Point> = (0..m)
        .map(|k| {
            let th = (2 * k + 1) as f64 * PI / m as f64;
            [r * th.cos(), r * th.sin()]
        })
        .collect();
    // m/n is 2 when ports alternate, 1 when every side is a port
    let step = m / n;
    let ports = (0..n).map(|e| e * step).collect();
    Ok(VertexTemplate { n, port_length, corners, ports })
}

impl VertexTemplate {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of polygon sides (2n for n <= 3, n otherwise).
    pub fn sides(&self) -> usize {
        self.corners.len()
    }

    pub fn port_length(&self) -> f64 {
        self.port_length
    }

    /// Exact polygon area m s^2 / (4 tan(pi/m)).
    pub fn vol(&self) -> f64 {
        let m = self.corners.len() as f64;
        m * self.port_length * self.port_length / (4.0 * (PI / m).tan())
    }

    /// Total port length, the boundary volume the gluing sees.
    pub fn vol_boundary(&self) -> f64 {
        self.n as f64 * self.port_length
    }

    pub fn c_vol(&self) -> f64 {
        self.vol() / self.vol_boundary()
    }

    /// Depth of the straight collar recorded behind every port.
    pub fn collar_depth(&self) -> f64 {
        0.5 * self.port_length
    }

    pub fn corners(&self) -> &[Point] {
        &self.corners
    }

    /// Polygon side index carrying port `e`.
    pub fn port_side(&self, e: usize) -> usize {
        self.ports[e]
    }

    fn side_corners(&self, s: usize) -> (Point, Point) {
        let m = self.corners.len();
        (self.corners[s], self.corners[(s + 1) % m])
    }

    /// Convex containment test with tolerance; the polygon is CCW so the
    /// interior lies left of every directed side.
    pub fn contains(&self, p: Point, tol: f64) -> bool {
        (0..self.corners.len()).all(|s| {
            let (a, b) = self.side_corners(s);
            cross(sub(b, a), sub(p, a)) >= -tol
        })
    }
}

/// Geometric and spectral scalars of a junction template that the error
/// constants depend on. The second Neumann eigenvalue of the template is
/// computed elsewhere and passed in; the cross-section eigenvalue is
/// pi^2 / w^2 analytically.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct VertexRegionData {
    pub vol_vertex: f64,
    pub vol_boundary: f64,
    pub c_vol: f64,
    pub lambda2_vertex: f64,
    pub lambda2_edge: f64,
    pub collar_depth: f64,
}

impl VertexRegionData {
    pub fn new(template: &VertexTemplate, lambda2_vertex: f64) -> Result<Self> {
        if !(lambda2_vertex > 0.0) || !lambda2_vertex.is_finite() {
            return Err(Error::Invalid(format!(
                "second Neumann eigenvalue must be positive, got {lambda2_vertex}"
            )));
        }
        let w = template.port_length();
        Ok(VertexRegionData {
            vol_vertex: template.vol(),
            vol_boundary: template.vol_boundary(),
            c_vol: template.c_vol(),
            lambda2_vertex,
            lambda2_edge: PI * PI / (w * w),
            collar_depth: template.collar_depth(),
        })
    }
}

/// Geometry of the fat graph: edge lengths, the shared cross-section width,
/// and the tube scale.
#[derive(Debug, Clone)]
pub struct FatGraphSpec {
    lengths: Vec<f64>,
    width: f64,
    epsilon: f64,
    template: VertexTemplate,
}

impl FatGraphSpec {
    /// The regular template forces one port length for all edges, so the
    /// cross section `width` is shared; per-edge weights on the graph side
    /// are p_e = sqrt(width).
    pub fn new(lengths: Vec<f64>, width: f64, epsilon: f64) -> Result<Self> {
        if lengths.len() < 2 {
            return Err(Error::Invalid(format!(
                "a star needs at least two edges, got {}",
                lengths.len()
            )));
        }
        for (e, &l) in lengths.iter().enumerate() {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::Invalid(format!("edge {e} must have positive length, got {l}")));
            }
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::Invalid(format!("tube scale must lie in (0, 1), got {epsilon}")));
        }
        let template = build_vertex_region(lengths.len(), width)?;
        Ok(FatGraphSpec { lengths, width, epsilon, template })
    }

    /// Unit star: n edges of length 1, cross section 1.
    pub fn unit(n: usize, epsilon: f64) -> Result<Self> {
        Self::new(vec![1.0; n], 1.0, epsilon)
    }

    pub fn n(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn template(&self) -> &VertexTemplate {
        &self.template
    }

    /// Exact area of the fat graph with the given number of satellite
    /// slabs (each slab lengthens its strip by eps).
    pub fn analytic_area(&self, satellites: usize) -> f64 {
        let strips: f64 = self.lengths.iter().sum::<f64>() * self.epsilon * self.width;
        let slabs = satellites as f64 * self.epsilon * self.epsilon * self.width;
        strips + slabs + self.epsilon * self.epsilon * self.template.vol()
    }
}

/// Satellite junction slab on one edge: the strip becomes eps longer and the
/// cells with s in [a, a + eps] are tagged as a separate region of unscaled
/// length 1 and unscaled volume equal to the cross-section width.
#[derive(Debug, Clone, Copy)]
pub struct Satellite {
    pub edge: usize,
    /// distance from the central region to the slab
    pub a: f64,
    /// longitudinal spacing inside the slab
    pub h: f64,
}

/// One edge strip of the assembled mesh: a tensor grid of node ids with the
/// port row first, shared with the junction polygon.
#[derive(Debug, Clone)]
pub struct StripBlock {
    pub edge: usize,
    /// rows[i][j] is the node at longitudinal position s[i], transverse
    /// offset j * dy; row 0 lies on the port
    pub rows: Vec<Vec<usize>>,
    pub s: Vec<f64>,
    /// transverse spacing, eps * width / k
    pub dy: f64,
    /// total strip length (edge length, plus eps when a slab is present)
    pub length: f64,
    /// row index range [i0, i1] of the satellite slab
    pub satellite: Option<(usize, usize)>,
}

impl StripBlock {
    pub fn cols(&self) -> usize {
        self.rows[0].len()
    }
}

/// Conforming triangle mesh of the fat graph with region and boundary tags.
#[derive(Debug, Clone)]
pub struct FatGraphMesh {
    points: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    regions: Vec<RegionTag>,
    boundary: Vec<(usize, usize, BoundaryTag)>,
    strips: Vec<StripBlock>,
    h: f64,
    epsilon: f64,
    width: f64,
    vol_vertex: f64,
    analytic_area: f64,
}

impl FatGraphMesh {
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn regions(&self) -> &[RegionTag] {
        &self.regions
    }

    pub fn boundary(&self) -> &[(usize, usize, BoundaryTag)] {
        &self.boundary
    }

    pub fn strips(&self) -> &[StripBlock] {
        &self.strips
    }

    pub fn node_count(&self) -> usize {
        self.points.len()
    }

    pub fn tri_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// Unscaled junction area vol X_v.
    pub fn vol_vertex(&self) -> f64 {
        self.vol_vertex
    }

    /// Exact area the triangle areas must reproduce.
    pub fn analytic_area(&self) -> f64 {
        self.analytic_area
    }

    #[cfg(test)]
    pub(crate) fn points_mut(&mut self) -> &mut [Point] {
        &mut self.points
    }

    pub fn tri_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.points[a], self.points[b], self.points[c]]
    }

    /// Signed area of triangle `t`.
    pub fn tri_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.tri_points(t);
        triangle_area(a, b, c)
    }

    /// Total mesh area as the sum of signed triangle areas.
    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.tri_area(t)).sum()
    }

    /// Area carried by triangles with the given tag.
    pub fn area_of(&self, tag: RegionTag) -> f64 {
        (0..self.triangles.len())
            .filter(|&t| self.regions[t] == tag)
            .map(|t| self.tri_area(t))
            .sum()
    }

    /// V - E + F with edges counted once per unordered node pair; 1 for a
    /// topological disk.
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = BTreeMap::new();
        for tri in &self.triangles {
            for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
                let key = (a.min(b), a.max(b));
                *edges.entry(key).or_insert(0usize) += 1;
            }
        }
        self.points.len() as i64 - edges.len() as i64 + self.triangles.len() as i64
    }

    /// Check orientation, conformity (interior edges shared by exactly two
    /// triangles, single-triangle edges matching the boundary table), and
    /// connectivity.
    pub fn validate(&self) -> Result<()> {
        for t in 0..self.triangles.len() {
            if self.tri_area(t) <= 0.0 {
                return Err(Error::Invalid(format!(
                    "triangle {t} has non-positive area {}",
                    self.tri_area(t)
                )));
            }
        }
        let mut edges: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for tri in &self.triangles {
            for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        let mut rim: Vec<(usize, usize)> = Vec::new();
        for (&key, &count) in &edges {
            match count {
                1 => rim.push(key),
                2 => {}
                _ => {
                    return Err(Error::Invalid(format!(
                        "edge ({}, {}) shared by {count} triangles",
                        key.0, key.1
                    )))
                }
            }
        }
        let mut tagged: Vec<(usize, usize)> =
            self.boundary.iter().map(|&(a, b, _)| (a.min(b), a.max(b))).collect();
        tagged.sort_unstable();
        tagged.dedup();
        if rim != tagged {
            return Err(Error::Invalid(format!(
                "boundary table lists {} segments, mesh rim has {}",
                tagged.len(),
                rim.len()
            )));
        }
        // connectivity over the node adjacency graph
        let mut adj = vec![Vec::new(); self.points.len()];
        for &(a, b) in edges.keys() {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; self.points.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::Invalid("mesh is disconnected".into()));
        }
        Ok(())
    }
}

// wedge lattice key; one entry per geometric node so spokes and sides
// shared between wedges dedupe exactly
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum NodeKey {
    Center,
    Corner(usize),
    Radial(usize, usize),
    Side(usize, usize),
    Interior(usize, usize, usize),
}

struct PolyMesh {
    points: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    side_rows: Vec<Vec<usize>>,
}

/// Triangulate the polygon by splitting each center-corner-corner wedge into
/// k^2 congruent triangles; side s ends up with k equal segments.
fn mesh_polygon(t: &VertexTemplate, k: usize, scale: f64) -> PolyMesh {
    let m = t.sides();
    let mut points: Vec<Point> = Vec::new();
    let mut index: HashMap<NodeKey, usize> = HashMap::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();

    let mut node = |s: usize, i: usize, j: usize, points: &mut Vec<Point>| -> usize {
        let key = if i == 0 {
            NodeKey::Center
        } else if j == 0 {
            if i == k {
                NodeKey::Corner(s)
            } else {
                NodeKey::Radial(s, i)
            }
        } else if j == i {
            let c = (s + 1) % m;
            if i == k {
                NodeKey::Corner(c)
            } else {
                NodeKey::Radial(c, i)
            }
        } else if i == k {
            NodeKey::Side(s, j)
        } else {
            NodeKey::Interior(s, i, j)
        };
        *index.entry(key).or_insert_with(|| {
            let (a, b) = t.side_corners(s);
            let fi = i as f64 / k as f64;
            let fj = j as f64 / k as f64;
            points.push([
                scale * (fi * a[0] + fj * (b[0] - a[0])),
                scale * (fi * a[1] + fj * (b[1] - a[1])),
            ]);
            points.len() - 1
        })
    };

    for s in 0..m {
        for i in 1..=k {
            for j in 0..i {
                let p = node(s, i, j, &mut points);
                let q = node(s, i, j + 1, &mut points);
                let r = node(s, i - 1, j, &mut points);
                triangles.push([p, q, r]);
                if j + 1 < i {
                    let u = node(s, i - 1, j + 1, &mut points);
                    triangles.push([r, q, u]);
                }
            }
        }
    }

    let side_rows = (0..m)
        .map(|s| (0..=k).map(|j| node(s, k, j, &mut points)).collect())
        .collect();

    PolyMesh { points, triangles, side_rows }
}

/// Mesh of the junction polygon alone at the given scale, every side a
/// boundary wall. Used to compute the template's second Neumann eigenvalue
/// and to check the metric scaling law.
pub fn polygon_only_mesh(template: &VertexTemplate, k: usize, scale: f64) -> Result<FatGraphMesh> {
    if k < 1 {
        return Err(Error::Invalid("polygon subdivision needs k >= 1".into()));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Invalid(format!("scale must be positive, got {scale}")));
    }
    let pm = mesh_polygon(template, k, scale);
    let regions = vec![RegionTag::Vertex; pm.triangles.len()];
    let mut boundary = Vec::new();
    for row in &pm.side_rows {
        for j in 0..row.len() - 1 {
            boundary.push((row[j], row[j + 1], BoundaryTag::Wall));
        }
    }
    let r = 0.5 * template.port_length() / (PI / template.sides() as f64).sin();
    Ok(FatGraphMesh {
        points: pm.points,
        triangles: pm.triangles,
        regions,
        boundary,
        strips: Vec::new(),
        h: scale * r.max(template.port_length()) / k as f64,
        epsilon: scale,
        width: template.port_length(),
        vol_vertex: template.vol(),
        analytic_area: scale * scale * template.vol(),
    })
}

// uniform subdivision of (from, to] appended to coords, endpoint exact
fn extend_segment(coords: &mut Vec<f64>, from: f64, to: f64, target_h: f64) {
    let cells = (((to - from) / target_h) - 1e-9).ceil().max(1.0) as usize;
    for i in 1..=cells {
        let s = if i == cells { to } else { from + (to - from) * i as f64 / cells as f64 };
        coords.push(s);
    }
}

/// Build the fat-graph mesh: the polygon scaled by eps, with a strip of
/// width eps * w and length l_e (plus eps per satellite slab) extruded from
/// every port along its outward normal.
pub fn build_mesh(spec: &FatGraphSpec, h: f64, satellites: &[Satellite]) -> Result<FatGraphMesh> {
    let eps = spec.epsilon();
    let w = spec.width();
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Invalid(format!("mesh size must be positive, got {h}")));
    }
    if h > eps * w / 4.0 * (1.0 + 1e-12) {
        return Err(Error::Invalid(format!(
            "mesh size {h} too coarse for tube width {}; need h <= {}",
            eps * w,
            eps * w / 4.0
        )));
    }

    let mut sat_of: Vec<Option<Satellite>> = vec![None; spec.n()];
    for sat in satellites {
        if sat.edge >= spec.n() {
            return Err(Error::Invalid(format!(
                "satellite edge {} out of range for a {}-star",
                sat.edge,
                spec.n()
            )));
        }
        if sat_of[sat.edge].is_some() {
            return Err(Error::Invalid(format!("duplicate satellite on edge {}", sat.edge)));
        }
        let l = spec.lengths()[sat.edge];
        // the slab must clear both the junction and the far end of the strip
        if !(sat.a >= eps) || !(sat.a < l) {
            return Err(Error::Invalid(format!(
                "satellite on edge {} at a = {} does not fit: need eps = {} <= a < {}",
                sat.edge, sat.a, eps, l
            )));
        }
        if !(sat.h > 0.0) || sat.h > h * (1.0 + 1e-12) {
            return Err(Error::Invalid(format!(
                "slab spacing {} must lie in (0, {h}]",
                sat.h
            )));
        }
        sat_of[sat.edge] = Some(*sat);
    }

    // transverse cell count shared by the polygon lattice and every strip
    let k = ((eps * w / h) - 1e-9).ceil().max(2.0) as usize;

    // longitudinal grids, planned up front so the size guard runs before
    // any allocation
    let mut plans: Vec<(Vec<f64>, Option<(usize, usize)>)> = Vec::with_capacity(spec.n());
    for (e, &l) in spec.lengths().iter().enumerate() {
        let mut s = vec![0.0];
        let slab = if let Some(sat) = sat_of[e] {
            extend_segment(&mut s, 0.0, sat.a, h);
            let i0 = s.len() - 1;
            extend_segment(&mut s, sat.a, sat.a + eps, sat.h);
            let i1 = s.len() - 1;
            extend_segment(&mut s, sat.a + eps, l + eps, h);
            Some((i0, i1))
        } else {
            extend_segment(&mut s, 0.0, l, h);
            None
        };
        plans.push((s, slab));
    }

    let m = spec.template().sides();
    let est = m * k * k + plans.iter().map(|(s, _)| s.len() * (k + 1)).sum::<usize>();
    if est > MESH_NODE_GUARD {
        return Err(Error::TooLarge { size: est, guard: MESH_NODE_GUARD });
    }

    let pm = mesh_polygon(spec.template(), k, eps);
    let mut points = pm.points;
    let mut triangles = pm.triangles;
    let mut regions = vec![RegionTag::Vertex; triangles.len()];
    let mut boundary = Vec::new();

    // unported polygon sides stay on the boundary
    let port_sides: Vec<usize> = (0..spec.n()).map(|e| spec.template().port_side(e)).collect();
    for (s, row) in pm.side_rows.iter().enumerate() {
        if !port_sides.contains(&s) {
            for j in 0..k {
                boundary.push((row[j], row[j + 1], BoundaryTag::Wall));
            }
        }
    }

    let dy = eps * w / k as f64;
    let mut strips = Vec::with_capacity(spec.n());
    for (e, (scoords, slab)) in plans.iter().enumerate() {
        let port_row = &pm.side_rows[port_sides[e]];
        let a = points[port_row[0]];
        let b = points[port_row[k]];
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let tangent = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
        // CCW polygon: outward normal is the tangent rotated clockwise
        let normal = [tangent[1], -tangent[0]];

        let mut rows: Vec<Vec<usize>> = Vec::with_capacity(scoords.len());
        rows.push(port_row.clone());
        for &s in &scoords[1..] {
            let row = (0..=k)
                .map(|j| {
                    let base = points[port_row[j]];
                    points.push([base[0] + s * normal[0], base[1] + s * normal[1]]);
                    points.len() - 1
                })
                .collect();
            rows.push(row);
        }

        for i in 0..rows.len() - 1 {
            let tag = match slab {
                Some((i0, i1)) if i >= *i0 && i < *i1 => RegionTag::Satellite(e),
                _ => RegionTag::Edge(e),
            };
            for j in 0..k {
                let p = rows[i][j];
                let q = rows[i + 1][j];
                let r = rows[i + 1][j + 1];
                let u = rows[i][j + 1];
                triangles.push([p, q, r]);
                triangles.push([p, r, u]);
                regions.push(tag);
                regions.push(tag);
            }
            boundary.push((rows[i][0], rows[i + 1][0], BoundaryTag::Wall));
            boundary.push((rows[i][k], rows[i + 1][k], BoundaryTag::Wall));
        }
        let last = rows.len() - 1;
        for j in 0..k {
            boundary.push((rows[last][j], rows[last][j + 1], BoundaryTag::End(e)));
        }

        strips.push(StripBlock {
            edge: e,
            rows,
            s: scoords.clone(),
            dy,
            length: *scoords.last().unwrap(),
            satellite: *slab,
        });
    }

    Ok(FatGraphMesh {
        points,
        triangles,
        regions,
        boundary,
        strips,
        h,
        epsilon: eps,
        width: w,
        vol_vertex: spec.template().vol(),
        analytic_area: spec.analytic_area(satellites.len()),
    })
}

/// Structured mesh of the rectangle (0, lx) x (0, ly) with nx x ny cells,
/// tagged as a single strip. Reference geometry for solver validation.
pub fn rectangle_mesh(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<FatGraphMesh> {
    if !(lx > 0.0 && ly > 0.0) || nx < 1 || ny < 1 {
        return Err(Error::Invalid(format!(
            "rectangle needs positive sides and cells, got {lx} x {ly}, {nx} x {ny}"
        )));
    }
    let nodes = (nx + 1) * (ny + 1);
    if nodes > MESH_NODE_GUARD {
        return Err(Error::TooLarge { size: nodes, guard: MESH_NODE_GUARD });
    }
    let dx = lx / nx as f64;
    let dy = ly / ny as f64;
    let mut points = Vec::with_capacity(nodes);
    for i in 0..=nx {
        for j in 0..=ny {
            points.push([i as f64 * dx, j as f64 * dy]);
        }
    }
    let id = |i: usize, j: usize| i * (ny + 1) + j;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let regions = vec![RegionTag::Edge(0); triangles.len()];
    let mut boundary = Vec::new();
    for i in 0..nx {
        boundary.push((id(i, 0), id(i + 1, 0), BoundaryTag::Wall));
        boundary.push((id(i, ny), id(i + 1, ny), BoundaryTag::Wall));
    }
    for j in 0..ny {
        boundary.push((id(0, j), id(0, j + 1), BoundaryTag::Wall));
        boundary.push((id(nx, j), id(nx, j + 1), BoundaryTag::End(0)));
    }
    let rows = (0..=nx).map(|i| (0..=ny).map(|j| id(i, j)).collect()).collect();
    Ok(FatGraphMesh {
        points,
        triangles,
        regions,
        boundary,
        strips: vec![StripBlock {
            edge: 0,
            rows,
            s: (0..=nx).map(|i| i as f64 * dx).collect(),
            dy,
            length: lx,
            satellite: None,
        }],
        h: dx.max(dy),
        epsilon: ly,
        width: 1.0,
        vol_vertex: 0.0,
        analytic_area: lx * ly,
    })
}

/// Discrete function on a uniform tensor grid over a strip, with trapezoid
/// quadrature for the norm and finite differences for the energy.
#[derive(Debug, Clone)]
pub struct GridFn {
    pub values: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    pub ds: f64,
    pub dy: f64,
}

impl GridFn {
    pub fn sample(
        rows: usize,
        cols: usize,
        ds: f64,
        dy: f64,
        f: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i as f64 * ds, j as f64 * dy));
            }
        }
        GridFn { values, rows, cols, ds, dy }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    fn weight(idx: usize, count: usize) -> f64 {
        if idx == 0 || idx + 1 == count {
            0.5
        } else {
            1.0
        }
    }

    /// Tensor trapezoid L2 norm squared.
    pub fn norm_sq(&self) -> f64 {
        let mut sum = 0.0;
        for i in 0..self.rows {
            let wi = Self::weight(i, self.rows);
            for j in 0..self.cols {
                let wj = Self::weight(j, self.cols);
                sum += wi * wj * self.at(i, j).powi(2);
            }
        }
        sum * self.ds * self.dy
    }

    /// Finite-difference Dirichlet energy, trapezoid-weighted across the
    /// direction not being differenced.
    pub fn dirichlet(&self) -> f64 {
        let mut sum = 0.0;
        for i in 0..self.rows - 1 {
            for j in 0..self.cols {
                let wj = Self::weight(j, self.cols);
                let d = (self.at(i + 1, j) - self.at(i, j)) / self.ds;
                sum += wj * d * d * self.ds * self.dy;
            }
        }
        for i in 0..self.rows {
            let wi = Self::weight(i, self.rows);
            for j in 0..self.cols - 1 {
                let d = (self.at(i, j + 1) - self.at(i, j)) / self.dy;
                sum += wi * d * d * self.ds * self.dy;
            }
        }
        sum
    }
}

/// Pullback under (s, y) -> ((1 - eps) s, y) of a function living on the
/// shortened strip: node values carry over unchanged while the longitudinal
/// spacing stretches by 1/(1 - eps). The L2 norm therefore shrinks by
/// exactly (1 - eps)^{1/2} when mapping back, and the Dirichlet energy of
/// the pullback exceeds the original by at most the factor 1/(1 - eps).
pub fn rescale_edge_map(u: &GridFn, eps: f64) -> Result<GridFn> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Invalid(format!("rescale needs eps in (0, 1), got {eps}")));
    }
    let mut out = u.clone();
    out.ds = u.ds / (1.0 - eps);
    Ok(out)
}

/// Inverse of [`rescale_edge_map`]; the composition is the identity.
pub fn rescale_edge_inverse(u: &GridFn, eps: f64) -> Result<GridFn> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Invalid(format!("rescale needs eps in (0, 1), got {eps}")));
    }
    let mut out = u.clone();
    out.ds = u.ds * (1.0 - eps);
    Ok(out)
}

/// Plain-text mesh export: a commented header with the table sizes, then
/// node, triangle, and boundary tables.
pub fn export_text(mesh: &FatGraphMesh) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# fat-graph mesh: {} nodes, {} triangles, {} boundary segments, h = {}",
        mesh.node_count(),
        mesh.tri_count(),
        mesh.boundary().len(),
        mesh.h()
    );
    let _ = writeln!(out, "nodes {}", mesh.node_count());
    for (i, p) in mesh.points().iter().enumerate() {
        let _ = writeln!(out, "{i} {} {}", p[0], p[1]);
    }
    let _ = writeln!(out, "triangles {}", mesh.tri_count());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let _ = writeln!(out, "{t} {} {} {} {}", tri[0], tri[1], tri[2], mesh.regions()[t]);
    }
    let _ = writeln!(out, "boundary {}", mesh.boundary().len());
    for &(a, b, tag) in mesh.boundary() {
        let _ = writeln!(out, "{a} {b} {tag}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn template_scalars_match_closed_forms() {
        let t4 = build_vertex_region(4, 1.0).unwrap();
        assert_relative_eq!(t4.vol(), 1.0, max_relative = 1e-14);
        assert_relative_eq!(t4.vol_boundary(), 4.0);
        assert_relative_eq!(t4.c_vol(), 0.25, max_relative = 1e-14);
        assert_eq!(t4.sides(), 4);

        let t2 = build_vertex_region(2, 1.0).unwrap();
        assert_relative_eq!(t2.vol(), 1.0, max_relative = 1e-14);
        assert_relative_eq!(t2.vol_boundary(), 2.0);
        assert_eq!(t2.sides(), 4);

        let t3 = build_vertex_region(3, 1.0).unwrap();
        assert_eq!(t3.sides(), 6);
        assert_relative_eq!(t3.vol(), 1.5 * 3f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(t3.c_vol(), 3f64.sqrt() / 2.0, max_relative = 1e-14);

        // area scales with the square of the port length
        let half = build_vertex_region(3, 0.5).unwrap();
        assert_relative_eq!(half.vol(), t3.vol() * 0.25, max_relative = 1e-14);

        assert!(build_vertex_region(1, 1.0).is_err());
        assert!(build_vertex_region(3, 0.0).is_err());
    }

    #[test]
    fn ports_have_exact_length_and_collars_fit() {
        for n in 2..=6 {
            let t = build_vertex_region(n, 1.0).unwrap();
            let d = t.collar_depth();
            for e in 0..n {
                let (a, b) = t.side_corners(t.port_side(e));
                let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
                assert_relative_eq!(len, 1.0, max_relative = 1e-13);
                // inward normal for a CCW polygon
                let tang = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
                let inw = [-tang[1], tang[0]];
                for f in [0.0, 0.25, 0.5, 0.75, 1.0] {
                    let base = [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])];
                    let deep = [base[0] + d * inw[0], base[1] + d * inw[1]];
                    assert!(t.contains(deep, 1e-9), "collar corner escapes, n={n} e={e} f={f}");
                }
            }
        }
    }

    #[test]
    fn polygon_mesh_is_exact_and_disklike() {
        let t = build_vertex_region(3, 1.0).unwrap();
        let mesh = polygon_only_mesh(&t, 8, 1.0).unwrap();
        assert_relative_eq!(mesh.area(), t.vol(), max_relative = 1e-12);
        assert_eq!(mesh.euler_characteristic(), 1);
        mesh.validate().unwrap();

        // scaled copy: area scales by the square, node count unchanged
        let small = polygon_only_mesh(&t, 8, 0.1).unwrap();
        assert_eq!(small.node_count(), mesh.node_count());
        assert_relative_eq!(small.area(), 0.01 * t.vol(), max_relative = 1e-12);
    }

    #[test]
    fn star_mesh_area_matches_analytic() {
        let spec = FatGraphSpec::unit(2, 0.1).unwrap();
        let mesh = build_mesh(&spec, 0.1 / 8.0, &[]).unwrap();
        assert_relative_eq!(mesh.area(), mesh.analytic_area(), max_relative = 1e-12);
        assert_relative_eq!(mesh.area(), 2.0 * 0.1 + 0.01 * 1.0, max_relative = 1e-12);
        assert_eq!(mesh.euler_characteristic(), 1);
        mesh.validate().unwrap();

        let spec3 = FatGraphSpec::unit(3, 0.1).unwrap();
        let mesh3 = build_mesh(&spec3, 0.0125, &[]).unwrap();
        assert_relative_eq!(mesh3.area(), mesh3.analytic_area(), max_relative = 1e-12);
        assert_eq!(mesh3.euler_characteristic(), 1);
        mesh3.validate().unwrap();
        // port conformity: strip rows start on polygon nodes
        for strip in mesh3.strips() {
            assert_eq!(strip.rows[0].len(), strip.cols());
            assert_eq!(strip.s[0], 0.0);
            assert_relative_eq!(strip.length, 1.0);
        }
    }

    #[test]
    fn satellite_slabs_are_tagged_with_exact_area() {
        let eps = 0.1;
        let spec = FatGraphSpec::unit(3, eps).unwrap();
        let h = eps / 8.0;
        let sats: Vec<Satellite> =
            (0..3).map(|e| Satellite { edge: e, a: 0.3, h }).collect();
        let mesh = build_mesh(&spec, h, &sats).unwrap();
        mesh.validate().unwrap();
        assert_relative_eq!(mesh.area(), mesh.analytic_area(), max_relative = 1e-12);
        for e in 0..3 {
            // slab area eps * (eps * w): unscaled volume 1 by construction
            assert_relative_eq!(
                mesh.area_of(RegionTag::Satellite(e)),
                eps * eps,
                max_relative = 1e-12
            );
        }
        for strip in mesh.strips() {
            let (i0, i1) = strip.satellite.unwrap();
            assert_eq!(strip.s[i0], 0.3);
            assert_relative_eq!(strip.s[i1], 0.3 + eps, max_relative = 1e-14);
            assert_relative_eq!(strip.length, 1.0 + eps, max_relative = 1e-14);
        }
    }

    #[test]
    fn bad_geometry_is_refused() {
        let spec = FatGraphSpec::unit(3, 0.1).unwrap();
        // slab would overlap the junction
        let too_close = [Satellite { edge: 0, a: 0.05, h: 0.0125 }];
        assert!(build_mesh(&spec, 0.0125, &too_close).is_err());
        // slab past the far end
        let too_far = [Satellite { edge: 0, a: 1.0, h: 0.0125 }];
        assert!(build_mesh(&spec, 0.0125, &too_far).is_err());
        // duplicate satellite
        let dup = [
            Satellite { edge: 1, a: 0.3, h: 0.0125 },
            Satellite { edge: 1, a: 0.5, h: 0.0125 },
        ];
        assert!(build_mesh(&spec, 0.0125, &dup).is_err());
        // mesh too coarse for the tube
        assert!(build_mesh(&spec, 0.05, &[]).is_err());
        assert!(FatGraphSpec::new(vec![1.0], 1.0, 0.1).is_err());
        assert!(FatGraphSpec::new(vec![1.0, 1.0], 1.0, 1.5).is_err());
    }

    #[test]
    fn rectangle_mesh_is_exact() {
        let mesh = rectangle_mesh(1.0, 0.1, 16, 4).unwrap();
        assert_relative_eq!(mesh.area(), 0.1, max_relative = 1e-13);
        assert_eq!(mesh.euler_characteristic(), 1);
        mesh.validate().unwrap();
        assert_eq!(mesh.node_count(), 17 * 5);
    }

    #[test]
    fn rescale_map_norms_and_energy() {
        let eps = 0.1;
        let long = 2.0;
        let rows = 41;
        let cols = 9;
        let ds_short = (1.0 - eps) * long / (rows - 1) as f64;
        let dy = eps / (cols - 1) as f64;

        // smooth sample on the shortened strip
        let u = GridFn::sample(rows, cols, ds_short, dy, |s, y| (s + 1.0).sin() * (1.0 + y));
        let pulled = rescale_edge_map(&u, eps).unwrap();
        assert_relative_eq!(pulled.ds * (1.0 - eps), u.ds, max_relative = 1e-15);
        // norm ratio is exactly the Jacobian
        assert_relative_eq!(
            u.norm_sq() / pulled.norm_sq(),
            1.0 - eps,
            max_relative = 1e-13
        );
        // round trip is the identity
        let back = rescale_edge_inverse(&pulled, eps).unwrap();
        assert_eq!(back.values, u.values);
        assert_relative_eq!(back.ds, u.ds, max_relative = 1e-15);

        // energy of the pullback stays within the advertised factor
        let cap = 1.0 + 2.0 * eps / (1.0 - eps).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a: f64 = rng.gen_range(-1.0..1.0);
            let b: f64 = rng.gen_range(0.5..3.0);
            let c: f64 = rng.gen_range(-1.0..1.0);
            let v = GridFn::sample(rows, cols, ds_short, dy, |s, y| {
                a * (b * s).cos() + c * s * y + (y * 20.0).sin()
            });
            let pv = rescale_edge_map(&v, eps).unwrap();
            let ratio = pv.dirichlet() / v.dirichlet();
            assert!(ratio <= cap + 1e-12, "energy ratio {ratio} exceeds {cap}");
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]

        #[test]
        fn random_stars_mesh_exactly(
            n in 2usize..=4,
            eps in 0.05..0.3f64,
            l1 in 0.5..2.0f64,
            l2 in 0.5..2.0f64,
            l3 in 0.5..2.0f64,
            l4 in 0.5..2.0f64,
            afrac in 0.3..0.9f64,
        ) {
            let lengths: Vec<f64> = [l1, l2, l3, l4][..n].to_vec();
            let spec = FatGraphSpec::new(lengths.clone(), 1.0, eps).unwrap();
            let h = eps / 4.0;
            let a = (afrac * lengths[0]).max(eps * 1.001);
            let sats = if a < lengths[0] {
                vec![Satellite { edge: 0, a, h }]
            } else {
                Vec::new()
            };
            let mesh = build_mesh(&spec, h, &sats).unwrap();
            mesh.validate().unwrap();
            proptest::prop_assert!(
                (mesh.area() - mesh.analytic_area()).abs()
                    <= 1e-10 * mesh.analytic_area()
            );
            proptest::prop_assert_eq!(mesh.euler_characteristic(), 1);
        }
    }

    #[test]
    fn export_tables_are_documented() {
        let spec = FatGraphSpec::unit(2, 0.2).unwrap();
        let mesh = build_mesh(&spec, 0.05, &[]).unwrap();
        let text = export_text(&mesh);
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with('#'));
        assert!(header.contains(&format!("{} nodes", mesh.node_count())));
        assert!(header.contains(&format!("{} triangles", mesh.tri_count())));
        assert_eq!(lines.next().unwrap(), format!("nodes {}", mesh.node_count()));
        // node coordinates round-trip through the text format
        let first: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
        assert_eq!(first[0], "0");
        let x: f64 = first[1].parse().unwrap();
        assert_eq!(x, mesh.points()[0][0]);
        assert!(text.contains(&format!("triangles {}", mesh.tri_count())));
        assert!(text.contains(&format!("boundary {}", mesh.boundary().len())));
        assert!(text.contains("vertex"));
        assert!(text.contains("edge:1"));
        assert!(text.contains("end:0"));
    }
}
