//! Planar electrode polygons, the inner control-electrode shape catalog and
//! the five-wire linear trap layout built from it.
//!
//! All electrodes live in the plane z = 0 and are gapless: neighbouring
//! polygons share edges exactly, and everything not covered by a polygon is
//! grounded.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::MICRON;

/// Polygons with a smaller area than this are rejected as degenerate (m^2).
pub const MIN_AREA: f64 = 1e-18;
/// Allowed relative area mismatch between a generated shape and its target.
pub const AREA_TOLERANCE: f64 = 5e-3;
/// Geometric slack for containment checks (m).
const CONTAINMENT_SLACK: f64 = 1e-12;

pub type Vertex = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Role {
    Rf,
    Dc,
    Ground,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Rf => "RF",
            Role::Dc => "DC",
            Role::Ground => "GROUND",
        })
    }
}

/// A named, counter-clockwise polygon in the electrode plane.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonElectrode {
    id: String,
    vertices: Vec<Vertex>,
    role: Role,
}

impl PolygonElectrode {
    /// Builds and validates a polygon: at least three finite vertices, simple,
    /// counter-clockwise and with non-degenerate area.
    pub fn new(id: impl Into<String>, vertices: Vec<Vertex>, role: Role) -> Result<Self> {
        let id = id.into();
        validate_vertices(&id, &vertices)?;
        Ok(Self { id, vertices, role })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn role(&self) -> Role {
        self.role
    }

    /// Shoelace area, positive for counter-clockwise polygons.
    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn centroid(&self) -> Vertex {
        let (mut cx, mut cy) = (0.0, 0.0);
        let n = self.vertices.len();
        for i in 0..n {
            let [x0, y0] = self.vertices[i];
            let [x1, y1] = self.vertices[(i + 1) % n];
            let cross = x0 * y1 - x1 * y0;
            cx += (x0 + x1) * cross;
            cy += (y0 + y1) * cross;
        }
        let a6 = 6.0 * self.area();
        [cx / a6, cy / a6]
    }

    /// Axis-aligned bounding box `([xmin, ymin], [xmax, ymax])`.
    pub fn bounds(&self) -> (Vertex, Vertex) {
        bounds(&self.vertices)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            id: self.id.clone(),
            vertices: self.vertices.iter().map(|[x, y]| [x + dx, y + dy]).collect(),
            role: self.role,
        }
    }

    /// Mirror image under y -> -y, re-ordered to stay counter-clockwise.
    pub fn mirrored_y(&self) -> Self {
        let mut vertices: Vec<Vertex> = self.vertices.iter().map(|[x, y]| [*x, -*y]).collect();
        vertices.reverse();
        Self {
            id: self.id.clone(),
            vertices,
            role: self.role,
        }
    }

    /// Mirror image under x -> -x, re-ordered to stay counter-clockwise.
    pub fn mirrored_x(&self) -> Self {
        let mut vertices: Vec<Vertex> = self.vertices.iter().map(|[x, y]| [-*x, *y]).collect();
        vertices.reverse();
        Self {
            id: self.id.clone(),
            vertices,
            role: self.role,
        }
    }

    /// Point reflection through the origin (180 degree rotation).
    pub fn rotated_half_turn(&self) -> Self {
        Self {
            id: self.id.clone(),
            vertices: self.vertices.iter().map(|[x, y]| [-*x, -*y]).collect(),
            role: self.role,
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Area of the intersection with another polygon.
    pub fn overlap_area(&self, other: &PolygonElectrode) -> f64 {
        let a = triangulate(&self.vertices);
        let b = triangulate(&other.vertices);
        let mut total = 0.0;
        for ta in &a {
            let (la, ha) = bounds(ta);
            for tb in &b {
                let (lb, hb) = bounds(tb);
                if la[0] >= hb[0] || lb[0] >= ha[0] || la[1] >= hb[1] || lb[1] >= ha[1] {
                    continue;
                }
                total += signed_area(&clip_convex(ta, tb)).abs();
            }
        }
        total
    }

    /// True when both polygons describe the same vertex cycle (any starting vertex).
    pub fn same_outline(&self, other: &PolygonElectrode, tol: f64) -> bool {
        let n = self.vertices.len();
        if n != other.vertices.len() {
            return false;
        }
        let close = |p: &Vertex, q: &Vertex| (p[0] - q[0]).abs() <= tol && (p[1] - q[1]).abs() <= tol;
        (0..n).any(|shift| {
            (0..n).all(|i| close(&self.vertices[i], &other.vertices[(i + shift) % n]))
        })
    }
}

fn signed_area(vertices: &[Vertex]) -> f64 {
    let n = vertices.len();
    let mut twice = 0.0;
    for i in 0..n {
        let [x0, y0] = vertices[i];
        let [x1, y1] = vertices[(i + 1) % n];
        twice += x0 * y1 - x1 * y0;
    }
    0.5 * twice
}

fn bounds(vertices: &[Vertex]) -> (Vertex, Vertex) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for v in vertices {
        for k in 0..2 {
            lo[k] = lo[k].min(v[k]);
            hi[k] = hi[k].max(v[k]);
        }
    }
    (lo, hi)
}

fn cross(o: Vertex, a: Vertex, b: Vertex) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn segments_cross(p1: Vertex, p2: Vertex, q1: Vertex, q2: Vertex) -> bool {
    let scale = [p1, p2, q1, q2]
        .iter()
        .flat_map(|v| v.iter())
        .fold(0.0f64, |m, c| m.max(c.abs()))
        .max(f64::MIN_POSITIVE);
    let eps = 1e-12 * scale * scale;
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > eps && d2 < -eps) || (d1 < -eps && d2 > eps))
        && ((d3 > eps && d4 < -eps) || (d3 < -eps && d4 > eps))
    {
        return true;
    }
    let on_segment = |a: Vertex, b: Vertex, p: Vertex, d: f64| {
        d.abs() <= eps
            && p[0] >= a[0].min(b[0]) - 1e-12 * scale
            && p[0] <= a[0].max(b[0]) + 1e-12 * scale
            && p[1] >= a[1].min(b[1]) - 1e-12 * scale
            && p[1] <= a[1].max(b[1]) + 1e-12 * scale
    };
    on_segment(q1, q2, p1, d1)
        || on_segment(q1, q2, p2, d2)
        || on_segment(p1, p2, q1, d3)
        || on_segment(p1, p2, q2, d4)
}

fn validate_vertices(id: &str, vertices: &[Vertex]) -> Result<()> {
    let field = format!("electrode `{id}`");
    if vertices.len() < 3 {
        return Err(Error::validation(field, "needs at least 3 vertices"));
    }
    if vertices.iter().any(|v| !(v[0].is_finite() && v[1].is_finite())) {
        return Err(Error::validation(field, "vertices must be finite"));
    }
    let area = signed_area(vertices);
    if area.abs() < MIN_AREA {
        return Err(Error::validation(field, "degenerate polygon (zero area)"));
    }
    if area < 0.0 {
        return Err(Error::validation(
            field,
            "vertices must be ordered counter-clockwise",
        ));
    }
    let n = vertices.len();
    for i in 0..n {
        let (p1, p2) = (vertices[i], vertices[(i + 1) % n]);
        if p1 == p2 {
            return Err(Error::validation(field, "repeated vertex"));
        }
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (q1, q2) = (vertices[j], vertices[(j + 1) % n]);
            if segments_cross(p1, p2, q1, q2) {
                return Err(Error::validation(field, "polygon is self-intersecting"));
            }
        }
    }
    Ok(())
}

/// Ear-clipping triangulation of a simple counter-clockwise polygon.
fn triangulate(vertices: &[Vertex]) -> Vec<[Vertex; 3]> {
    let mut idx: Vec<usize> = (0..vertices.len()).collect();
    let mut out = Vec::with_capacity(vertices.len().saturating_sub(2));
    let mut guard = 0;
    while idx.len() > 3 && guard < 10 * vertices.len() * vertices.len() {
        guard += 1;
        let m = idx.len();
        let mut clipped = false;
        for k in 0..m {
            let (ia, ib, ic) = (idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]);
            let (a, b, c) = (vertices[ia], vertices[ib], vertices[ic]);
            let turn = cross(a, b, c);
            if turn < 0.0 {
                continue;
            }
            if turn == 0.0 {
                // collinear vertex, drop it without emitting a triangle
                idx.remove(k);
                clipped = true;
                break;
            }
            let contains_other = idx.iter().any(|&j| {
                j != ia
                    && j != ib
                    && j != ic
                    && cross(a, b, vertices[j]) >= 0.0
                    && cross(b, c, vertices[j]) >= 0.0
                    && cross(c, a, vertices[j]) >= 0.0
            });
            if !contains_other {
                out.push([a, b, c]);
                idx.remove(k);
                clipped = true;
                break;
            }
        }
        if !clipped {
            break;
        }
    }
    if idx.len() == 3 {
        out.push([vertices[idx[0]], vertices[idx[1]], vertices[idx[2]]]);
    }
    out
}

/// Sutherland-Hodgman clip of a convex polygon against a convex CCW polygon.
fn clip_convex(subject: &[Vertex], clip: &[Vertex]) -> Vec<Vertex> {
    let mut output: Vec<Vertex> = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % n]);
        let input = std::mem::take(&mut output);
        let m = input.len();
        for j in 0..m {
            let p = input[j];
            let q = input[(j + 1) % m];
            let dp = cross(a, b, p);
            let dq = cross(a, b, q);
            if dp >= 0.0 {
                output.push(p);
            }
            if (dp >= 0.0) != (dq >= 0.0) {
                let t = dp / (dp - dq);
                output.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
    }
    output
}

/// Inner control-electrode shape catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ShapeKind {
    #[serde(rename = "RECT")]
    Rect,
    #[serde(rename = "RECT_SPLIT")]
    RectSplit,
    #[serde(rename = "TRIANGULAR")]
    Triangular,
    #[serde(rename = "L")]
    L,
    #[serde(rename = "T")]
    T,
    #[serde(rename = "Z")]
    Z,
    #[serde(rename = "RHOMBOID")]
    Rhomboid,
}

impl ShapeKind {
    /// Column order of the summary table.
    pub const ALL: [ShapeKind; 7] = [
        ShapeKind::Rect,
        ShapeKind::RectSplit,
        ShapeKind::Triangular,
        ShapeKind::L,
        ShapeKind::T,
        ShapeKind::Z,
        ShapeKind::Rhomboid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Rect => "RECT",
            ShapeKind::RectSplit => "RECT_SPLIT",
            ShapeKind::Triangular => "TRIANGULAR",
            ShapeKind::L => "L",
            ShapeKind::T => "T",
            ShapeKind::Z => "Z",
            ShapeKind::Rhomboid => "RHOMBOID",
        }
    }

    /// Default geometric parameter: alpha in degrees for the rhomboid,
    /// epsilon for L/T/Z.
    pub fn default_parameter(self) -> Option<f64> {
        match self {
            ShapeKind::Rhomboid => Some(30.0),
            ShapeKind::L | ShapeKind::Z => Some(0.5),
            ShapeKind::T => Some(1.0 / 3.0),
            _ => None,
        }
    }

    /// Whether the electrode is mirror symmetric about y = 0 (no y control).
    pub fn is_y_symmetric(self) -> bool {
        self == ShapeKind::Rect
    }

    /// Area of one electrode per unit axial width, divided by the span A.
    fn area_factor(self, parameter: Option<f64>) -> f64 {
        match self {
            ShapeKind::Rect | ShapeKind::Rhomboid | ShapeKind::Z => 1.0,
            ShapeKind::RectSplit | ShapeKind::Triangular => 0.5,
            ShapeKind::L => {
                let e = parameter.unwrap_or(0.5);
                1.0 - e * e
            }
            ShapeKind::T => {
                let e = parameter.unwrap_or(1.0 / 3.0);
                0.5 * (1.0 + e)
            }
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase().replace('-', "_");
        ShapeKind::ALL
            .into_iter()
            .find(|k| k.name() == upper)
            .ok_or_else(|| {
                Error::validation(
                    "shape",
                    format!("unknown shape `{s}` (expected one of RECT, RECT_SPLIT, TRIANGULAR, L, T, Z, RHOMBOID)"),
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    Normal,
    Flipped,
}

/// A fully parametrized inner control-electrode shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    /// Axial width w_ax (m).
    pub axial_width: f64,
    /// alpha in degrees (rhomboid) or epsilon (L, T, Z).
    pub parameter: Option<f64>,
    /// Transverse span A (m).
    pub span: f64,
}

impl ShapeSpec {
    pub fn new(kind: ShapeKind, axial_width: f64, parameter: Option<f64>, span: f64) -> Result<Self> {
        let spec = Self {
            kind,
            axial_width,
            parameter,
            span,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Shape with its catalog parameter and the axial width that normalizes
    /// its area to `target_area`. The plain rectangle is not normalized: it
    /// keeps the axial width of the split rectangle and thus twice the area.
    pub fn normalized(kind: ShapeKind, span: f64, target_area: f64) -> Result<Self> {
        let parameter = kind.default_parameter();
        let w = match kind {
            ShapeKind::Rect => normalize_axial_width(ShapeKind::RectSplit, span, None, target_area)?,
            _ => normalize_axial_width(kind, span, parameter, target_area)?,
        };
        Self::new(kind, w, parameter, span)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.axial_width.is_finite() && self.axial_width > 0.0) {
            return Err(Error::validation("w_ax", "axial width must be positive"));
        }
        if !(self.span.is_finite() && self.span > 0.0) {
            return Err(Error::validation("span", "transverse span must be positive"));
        }
        match (self.kind, self.parameter) {
            (ShapeKind::Rhomboid, Some(alpha)) => {
                if !(alpha > 0.0 && alpha < 90.0) {
                    return Err(Error::validation("alpha", "must lie in (0, 90) degrees"));
                }
            }
            (ShapeKind::L | ShapeKind::T | ShapeKind::Z, Some(eps)) => {
                if !(eps > 0.0 && eps < 1.0) {
                    return Err(Error::validation("epsilon", "must lie in (0, 1)"));
                }
            }
            (ShapeKind::Rhomboid | ShapeKind::L | ShapeKind::T | ShapeKind::Z, None) => {
                return Err(Error::validation(
                    "parameter",
                    format!("{} requires a geometric parameter", self.kind),
                ));
            }
            (_, Some(_)) => {
                return Err(Error::validation(
                    "parameter",
                    format!("{} takes no geometric parameter", self.kind),
                ));
            }
            _ => {}
        }
        Ok(())
    }

    /// Area of a single electrode (m^2).
    pub fn area(&self) -> f64 {
        self.kind.area_factor(self.parameter) * self.axial_width * self.span
    }

    fn shear_offset(&self) -> f64 {
        match (self.kind, self.parameter) {
            (ShapeKind::Rhomboid, Some(alpha)) => 0.5 * self.span * alpha.to_radians().tan(),
            _ => 0.0,
        }
    }

    fn epsilon(&self) -> f64 {
        self.parameter.unwrap_or(0.5)
    }
}

/// Shoelace area of a validated polygon (m^2).
pub fn polygon_area(poly: &PolygonElectrode) -> f64 {
    poly.area()
}

/// Axial width at which a catalog shape reaches `target_area`.
///
/// Every catalog shape has an area linear in w_ax, so this is closed form.
pub fn normalize_axial_width(
    kind: ShapeKind,
    span: f64,
    parameter: Option<f64>,
    target_area: f64,
) -> Result<f64> {
    if !(target_area.is_finite() && target_area > 0.0) {
        return Err(Error::validation("target_area", "must be positive"));
    }
    if !(span.is_finite() && span > 0.0) {
        return Err(Error::validation("span", "must be positive"));
    }
    Ok(target_area / (kind.area_factor(parameter) * span))
}

/// Vertices of a shape centred (bounding box) on the origin, NORMAL orientation.
fn local_outlines(spec: &ShapeSpec) -> Vec<Vec<Vertex>> {
    let w = spec.axial_width;
    let hw = 0.5 * w;
    let h = 0.5 * spec.span;
    match spec.kind {
        ShapeKind::Rect => vec![vec![[-hw, -h], [hw, -h], [hw, h], [-hw, h]]],
        ShapeKind::RectSplit => vec![
            vec![[-hw, -h], [hw, -h], [hw, 0.0], [-hw, 0.0]],
            vec![[-hw, 0.0], [hw, 0.0], [hw, h], [-hw, h]],
        ],
        ShapeKind::Triangular => vec![vec![[-hw, -h], [hw, -h], [0.0, h]]],
        ShapeKind::Rhomboid => {
            let o = spec.shear_offset();
            vec![vec![[-hw - o, -h], [hw - o, -h], [hw + o, h], [-hw + o, h]]]
        }
        ShapeKind::L => {
            // full rectangle minus an (eps w) x (eps A) notch at the upper right
            let e = spec.epsilon();
            let nx = hw - e * w;
            let ny = h - e * spec.span;
            vec![vec![[-hw, -h], [hw, -h], [hw, ny], [nx, ny], [nx, h], [-hw, h]]]
        }
        ShapeKind::T => {
            // bar over the upper half, stem of axial width eps w below it
            let s = 0.5 * spec.epsilon() * w;
            vec![vec![
                [-s, -h],
                [s, -h],
                [s, 0.0],
                [hw, 0.0],
                [hw, h],
                [-hw, h],
                [-hw, 0.0],
                [-s, 0.0],
            ]]
        }
        ShapeKind::Z => {
            // two half-span bars, the lower one shifted by eps w in +x
            let d = 0.5 * spec.epsilon() * w;
            vec![vec![
                [-hw + d, -h],
                [hw + d, -h],
                [hw + d, 0.0],
                [hw - d, 0.0],
                [hw - d, h],
                [-hw - d, h],
                [-hw - d, 0.0],
                [-hw + d, 0.0],
            ]]
        }
    }
}

/// Builds one electrode (two for the split rectangle) centred on `center_x`.
///
/// The shape's bounding box is centred on `center_x`; FLIPPED applies y -> -y.
pub fn make_shape(
    spec: &ShapeSpec,
    center_x: f64,
    orientation: Orientation,
) -> Result<Vec<PolygonElectrode>> {
    spec.validate()?;
    let base = format!("{}", spec.kind).to_ascii_lowercase();
    let outlines = local_outlines(spec);
    let count = outlines.len();
    outlines
        .into_iter()
        .enumerate()
        .map(|(k, verts)| {
            let id = if count == 1 {
                base.clone()
            } else {
                format!("{base}_{}", if k == 0 { "lo" } else { "up" })
            };
            let poly = PolygonElectrode::new(id, verts, Role::Dc)?;
            let poly = match orientation {
                Orientation::Normal => poly,
                Orientation::Flipped => poly.mirrored_y(),
            };
            Ok(poly.translated(center_x, 0.0))
        })
        .collect()
}

/// One tiling unit: polygons placed at an axial offset, with their x extent.
struct TileUnit {
    polygons: Vec<PolygonElectrode>,
    left: f64,
    right: f64,
}

fn tile_sequence(spec: &ShapeSpec, max_extent: f64) -> Result<Vec<TileUnit>> {
    let w = spec.axial_width;
    let normal = make_shape(spec, 0.0, Orientation::Normal)?;
    let flipped = make_shape(spec, 0.0, Orientation::Flipped)?;
    let rotated: Vec<PolygonElectrode> = normal.iter().map(|p| p.rotated_half_turn()).collect();
    let (lo, hi) = normal
        .iter()
        .map(PolygonElectrode::bounds)
        .fold(([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]), |(l, h), (a, b)| {
            ([l[0].min(a[0]), l[1].min(a[1])], [h[0].max(b[0]), h[1].max(b[1])])
        });
    let footprint = hi[0] - lo[0];

    // Offset of the k-th unit's bounding-box centre and the polygons it uses.
    let place = |k: usize| -> (f64, &Vec<PolygonElectrode>) {
        let kf = k as f64;
        match spec.kind {
            ShapeKind::Rect | ShapeKind::RectSplit | ShapeKind::Rhomboid | ShapeKind::Z => {
                (kf * w, &normal)
            }
            ShapeKind::Triangular => (
                kf * 0.5 * w,
                if k % 2 == 0 { &normal } else { &flipped },
            ),
            ShapeKind::T => (
                kf * 0.5 * w * (1.0 + spec.epsilon()),
                if k % 2 == 0 { &normal } else { &rotated },
            ),
            ShapeKind::L => {
                // interlocking pairs; without interlock (eps < 1/2) the
                // partner sits one full width further along
                let e = spec.epsilon();
                let partner = if e >= 0.5 { (1.0 - e) * w } else { w };
                let period = partner + w;
                let pair = (k / 2) as f64;
                let off = if k % 2 == 0 { 0.0 } else { partner };
                (pair * period + off, if k % 2 == 0 { &normal } else { &rotated })
            }
        }
    };

    let mut units = Vec::new();
    let mut k = 0usize;
    loop {
        let (cx, polys) = place(k);
        let left = cx - 0.5 * footprint;
        let right = cx + 0.5 * footprint;
        let start = units.first().map_or(left, |u: &TileUnit| u.left);
        if right - start > max_extent * (1.0 + 1e-12) {
            break;
        }
        units.push(TileUnit {
            polygons: polys.iter().map(|p| p.translated(cx, 0.0)).collect(),
            left,
            right,
        });
        k += 1;
    }
    // alternating sequences need an odd count to be mirror symmetric in x
    if matches!(spec.kind, ShapeKind::Triangular | ShapeKind::T) && units.len() % 2 == 0 {
        units.pop();
    }
    Ok(units)
}

/// Tiles the DC strip x in [-half_length, half_length] with copies of a shape.
///
/// Units are placed left to right and the whole run is centred on x = 0.
/// Electrode ids are `dc_NNN` by axial index (`dc_NNN_lo` / `dc_NNN_up` for
/// the split rectangle).
pub fn tile_dc_strip(spec: &ShapeSpec, half_length: f64) -> Result<Vec<PolygonElectrode>> {
    spec.validate()?;
    if !(half_length.is_finite() && half_length >= spec.axial_width) {
        return Err(Error::validation(
            "dc_half_length",
            "must be at least one axial width",
        ));
    }
    let units = tile_sequence(spec, 2.0 * half_length)?;
    let (first, last) = match (units.first(), units.last()) {
        (Some(f), Some(l)) => (f.left, l.right),
        _ => return Ok(Vec::new()),
    };
    let shift = -0.5 * (first + last);
    let mut out = Vec::new();
    for (i, unit) in units.iter().enumerate() {
        let many = unit.polygons.len() > 1;
        for (r, poly) in unit.polygons.iter().enumerate() {
            let id = if many {
                format!("dc_{i:03}_{}", if r == 0 { "lo" } else { "up" })
            } else {
                format!("dc_{i:03}")
            };
            out.push(poly.translated(shift, 0.0).with_id(id));
        }
    }
    Ok(out)
}

/// Geometry of the linear five-wire test trap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutConfig {
    /// RF electrode splitting A (m).
    pub rf_split: f64,
    /// RF electrode width B (m).
    pub rf_width: f64,
    /// Total trap length along x (m).
    pub trap_length: f64,
    /// DC electrodes cover x in [-dc_half_length, dc_half_length] (m).
    pub dc_half_length: f64,
    /// Area every normalized control electrode is scaled to (m^2).
    pub target_area: f64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            rf_split: 60.0 * MICRON,
            rf_width: 134.0 * MICRON,
            trap_length: 10_000.0 * MICRON,
            dc_half_length: 1_000.0 * MICRON,
            target_area: 1650.0 * MICRON * MICRON,
        }
    }
}

impl LayoutConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rf_split", self.rf_split),
            ("rf_width", self.rf_width),
            ("trap_length", self.trap_length),
            ("dc_half_length", self.dc_half_length),
            ("target_area", self.target_area),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::validation(name, "must be positive"));
            }
        }
        if 2.0 * self.dc_half_length > self.trap_length {
            return Err(Error::validation(
                "dc_half_length",
                "DC region extends beyond the trap",
            ));
        }
        Ok(())
    }

    /// Catalog shape for this geometry.
    pub fn shape(&self, kind: ShapeKind) -> Result<ShapeSpec> {
        ShapeSpec::normalized(kind, self.rf_split, self.target_area)
    }
}

/// RF rails, tiled inner DC electrodes and the implicit ground plane.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapLayout {
    pub rf_rails: [PolygonElectrode; 2],
    pub dc_electrodes: Vec<PolygonElectrode>,
    /// a = A / 2 (m)
    pub rf_inner_half_gap: f64,
    /// b = a + B (m)
    pub rf_outer_half_extent: f64,
    pub trap_length: f64,
    pub dc_region_half_length: f64,
    /// Shape the DC strip was tiled with, if known.
    pub shape: Option<ShapeSpec>,
}

/// Layout with the catalog shape `kind` normalized per `config`.
pub fn build_layout(kind: ShapeKind, config: &LayoutConfig) -> Result<TrapLayout> {
    config.validate()?;
    build_layout_with_shape(&config.shape(kind)?, config)
}

pub fn build_layout_with_shape(spec: &ShapeSpec, config: &LayoutConfig) -> Result<TrapLayout> {
    config.validate()?;
    spec.validate()?;
    let a = 0.5 * config.rf_split;
    let b = a + config.rf_width;
    if spec.span > 2.0 * a * (1.0 + 1e-12) {
        return Err(Error::validation(
            "span",
            format!(
                "DC strip ({:.3} um) is wider than the RF gap ({:.3} um)",
                spec.span / MICRON,
                2.0 * a / MICRON
            ),
        ));
    }
    let hl = 0.5 * config.trap_length;
    let upper = PolygonElectrode::new("rf_upper", vec![[-hl, a], [hl, a], [hl, b], [-hl, b]], Role::Rf)?;
    let lower = PolygonElectrode::new("rf_lower", vec![[-hl, -b], [hl, -b], [hl, -a], [-hl, -a]], Role::Rf)?;
    let layout = TrapLayout {
        rf_rails: [upper, lower],
        dc_electrodes: tile_dc_strip(spec, config.dc_half_length)?,
        rf_inner_half_gap: a,
        rf_outer_half_extent: b,
        trap_length: config.trap_length,
        dc_region_half_length: config.dc_half_length,
        shape: Some(*spec),
    };
    Ok(layout)
}

impl TrapLayout {
    pub fn dc_ids(&self) -> impl Iterator<Item = &str> {
        self.dc_electrodes.iter().map(PolygonElectrode::id)
    }

    pub fn dc_index(&self, id: &str) -> Option<usize> {
        self.dc_electrodes.iter().position(|p| p.id() == id)
    }

    pub fn shape_kind(&self) -> Option<ShapeKind> {
        self.shape.map(|s| s.kind)
    }

    /// Checks containment, disjointness and RF symmetry. Returns the list of
    /// violated invariants (empty when the layout is sound).
    pub fn check_invariants(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let a = self.rf_inner_half_gap;
        let hl = self.dc_region_half_length;
        for p in &self.dc_electrodes {
            let (lo, hi) = p.bounds();
            if lo[1] < -a - CONTAINMENT_SLACK || hi[1] > a + CONTAINMENT_SLACK {
                problems.push(format!("{} extends beyond the RF gap", p.id()));
            }
            if lo[0] < -hl - CONTAINMENT_SLACK || hi[0] > hl + CONTAINMENT_SLACK {
                problems.push(format!("{} extends beyond the DC region", p.id()));
            }
        }
        for (i, p) in self.dc_electrodes.iter().enumerate() {
            let (plo, phi) = p.bounds();
            for q in &self.dc_electrodes[i + 1..] {
                let (qlo, qhi) = q.bounds();
                if plo[0] >= qhi[0] || qlo[0] >= phi[0] {
                    continue;
                }
                let overlap = p.overlap_area(q);
                if overlap > 1e-6 * p.area().min(q.area()) {
                    problems.push(format!("{} overlaps {}", p.id(), q.id()));
                }
            }
        }
        let [r0, r1] = &self.rf_rails;
        let tol = 1e-12 * self.rf_outer_half_extent.max(self.trap_length);
        if !r0.mirrored_y().same_outline(r1, tol) {
            problems.push("RF rails are not mirror symmetric in y".to_string());
        }
        problems
    }

    /// Permutation mapping each DC electrode to its mirror image under
    /// x -> -x, or `None` when the layout has no such symmetry.
    pub fn x_mirror_permutation(&self) -> Option<Vec<usize>> {
        let tol = 1e-9 * self.dc_region_half_length;
        let mirrored: Vec<PolygonElectrode> =
            self.dc_electrodes.iter().map(PolygonElectrode::mirrored_x).collect();
        mirrored
            .iter()
            .map(|m| {
                self.dc_electrodes
                    .iter()
                    .position(|p| p.same_outline(m, tol))
            })
            .collect()
    }
}
