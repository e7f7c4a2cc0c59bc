//! Netlist reconstruction from a sketch: detections of components and node
//! points (corners, intersections) plus the binarized drawing.
//!
//! Pipeline: erase component and identifier boxes, sample the remaining
//! ink as contour points, score every straight connection between two node
//! points by how far its interval points lie from the ink, keep the
//! connections below a length-proportional threshold, then read the
//! circuit off the surviving connections.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::{parse_value, Component, ComponentKind, Netlist, NetlistError, NodeLabel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReconstructError {
    #[error("detections line {line}: {message}")]
    BadFormat { line: usize, message: String },
    #[error("detections line {line}: bounding box lies outside the {width}x{height} image")]
    BboxOutOfBounds { line: usize, width: u32, height: u32 },
    #[error("image: {0}")]
    Image(String),
    #[error("connection endpoints coincide")]
    DegenerateConnection,
    #[error("{kind} at ({x:.0}, {y:.0}) is not crossed by any valid connection")]
    ComponentUnattached { kind: ComponentKind, x: f64, y: f64 },
    #[error("reconstructed netlist is invalid: {0}")]
    Netlist(#[from] NetlistError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionClass {
    Resistor,
    VoltageSource,
    CurrentSource,
    Corner,
    Intersection,
    Identifier,
}

impl DetectionClass {
    pub fn component_kind(self) -> Option<ComponentKind> {
        match self {
            DetectionClass::Resistor => Some(ComponentKind::Resistor),
            DetectionClass::VoltageSource => Some(ComponentKind::VoltageSource),
            DetectionClass::CurrentSource => Some(ComponentKind::CurrentSource),
            _ => None,
        }
    }

    pub fn is_node_point(self) -> bool {
        matches!(self, DetectionClass::Corner | DetectionClass::Intersection)
    }
}

/// Axis-aligned box; a pixel or point `(x, y)` is inside when
/// `x_min ≤ x < x_max` and `y_min ≤ y < y_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.x_min <= x && x < self.x_max && self.y_min <= y && y < self.y_max
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    pub fn diagonal(&self) -> f64 {
        (self.x_max - self.x_min).hypot(self.y_max - self.y_min)
    }

    /// Parameter interval `[t0, t1]` of the segment `p → q` inside the box,
    /// if any.
    pub fn clip(&self, p: (f64, f64), q: (f64, f64)) -> Option<(f64, f64)> {
        let (dx, dy) = (q.0 - p.0, q.1 - p.1);
        let mut t0: f64 = 0.0;
        let mut t1: f64 = 1.0;
        for (d, lo, hi, s) in [
            (dx, self.x_min, self.x_max, p.0),
            (dy, self.y_min, self.y_max, p.1),
        ] {
            if d == 0.0 {
                if s < lo || s > hi {
                    return None;
                }
            } else {
                let (a, b) = ((lo - s) / d, (hi - s) / d);
                let (a, b) = if a < b { (a, b) } else { (b, a) };
                t0 = t0.max(a);
                t1 = t1.min(b);
            }
        }
        (t0 < t1).then_some((t0, t1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class: DetectionClass,
    pub bbox: BBox,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

/// Binarized image; `true` marks ink.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    pub width: u32,
    pub height: u32,
    pub ink: Vec<bool>,
}

impl BinaryImage {
    pub fn blank(width: u32, height: u32) -> Self {
        BinaryImage {
            width,
            height,
            ink: vec![false; (width * height) as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.ink[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: i64, y: i64, value: bool) {
        if x >= 0 && y >= 0 && (x as u32) < self.width && (y as u32) < self.height {
            self.ink[(y as u32 * self.width + x as u32) as usize] = value;
        }
    }

    /// Grayscale PGM (P5): ink 0, background 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let pixels: Vec<u8> = self.ink.iter().map(|&i| if i { 0 } else { 255 }).collect();
        let mut out = Vec::new();
        PnmEncoder::new(&mut out)
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(&pixels, self.width, self.height, ExtendedColorType::L8)
            .expect("encoding into memory cannot fail");
        out
    }

    /// Decodes a PGM and thresholds it: gray values below 128 are ink.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self, ReconstructError> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Pnm)
            .map_err(|e| ReconstructError::Image(e.to_string()))?
            .to_luma8();
        Ok(BinaryImage {
            width: img.width(),
            height: img.height(),
            ink: img.pixels().map(|p| p.0[0] < 128).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub detections: Vec<Detection>,
    pub image: BinaryImage,
}

pub fn parse_detections(text: &str) -> Result<Vec<Detection>, ReconstructError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let d: Detection = serde_json::from_str(line).map_err(|e| ReconstructError::BadFormat {
            line: i + 1,
            message: e.to_string(),
        })?;
        let b = d.bbox;
        if !(b.x_min < b.x_max && b.y_min < b.y_max) || d.score.is_nan() || d.score < 0.0 {
            return Err(ReconstructError::BadFormat {
                line: i + 1,
                message: "bounding box must satisfy min < max and score must be ≥ 0".into(),
            });
        }
        out.push(d);
    }
    Ok(out)
}

pub fn detections_to_jsonl(detections: &[Detection]) -> String {
    detections
        .iter()
        .map(|d| serde_json::to_string(d).expect("detections always serialize") + "\n")
        .collect()
}

pub fn load_scene(detections: &str, pgm: &[u8]) -> Result<Scene, ReconstructError> {
    let detections = parse_detections(detections)?;
    let image = BinaryImage::from_pgm(pgm)?;
    for (i, d) in detections.iter().enumerate() {
        let b = d.bbox;
        if b.x_min < 0.0
            || b.y_min < 0.0
            || b.x_max > image.width as f64
            || b.y_max > image.height as f64
        {
            return Err(ReconstructError::BboxOutOfBounds {
                line: i + 1,
                width: image.width,
                height: image.height,
            });
        }
    }
    Ok(Scene { detections, image })
}

pub fn load_scene_files(detections: &Path, image: &Path) -> Result<Scene, ReconstructError> {
    let det = std::fs::read_to_string(detections)
        .map_err(|e| ReconstructError::Image(format!("{}: {e}", detections.display())))?;
    let img = std::fs::read(image)
        .map_err(|e| ReconstructError::Image(format!("{}: {e}", image.display())))?;
    load_scene(&det, &img)
}

/// Tunables of the reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconstructConfig {
    /// Contour sampling cell size in pixels.
    pub stride: u32,
    /// Target spacing of interval points along a connection.
    pub spacing: f64,
    /// A connection is valid when `loss ≤ tau0 + tau1 · length`.
    pub tau0: f64,
    pub tau1: f64,
    /// Identifier search radius in component bbox diagonals.
    pub identifier_radius: f64,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        ReconstructConfig {
            stride: 2,
            spacing: 4.0,
            tau0: 10.0,
            tau1: 0.5,
            identifier_radius: 1.5,
        }
    }
}

/// Erases the boxes, then keeps the first ink pixel (raster order) of every
/// `stride × stride` cell.
pub fn sample_contours(image: &BinaryImage, erase: &[BBox], stride: u32) -> Vec<(u32, u32)> {
    let stride = stride.max(1);
    let mut out = Vec::new();
    for cy in (0..image.height).step_by(stride as usize) {
        for cx in (0..image.width).step_by(stride as usize) {
            'cell: for y in cy..(cy + stride).min(image.height) {
                for x in cx..(cx + stride).min(image.width) {
                    if image.get(x, y)
                        && !erase.iter().any(|b| b.contains(x as f64, y as f64))
                    {
                        out.push((x, y));
                        break 'cell;
                    }
                }
            }
        }
    }
    out.sort_by_key(|&(x, y)| (y, x));
    out
}

/// Points `p + i/(N−1)·(q − p)`, `N = ⌈len/spacing⌉ + 1`.
pub fn interval_points(p: (f64, f64), q: (f64, f64), spacing: f64) -> Vec<(f64, f64)> {
    let len = (q.0 - p.0).hypot(q.1 - p.1);
    let n = (len / spacing).ceil() as usize + 1;
    (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1))
        })
        .collect()
}

/// Nearest-point lookup over contour points, bucketed on a square grid.
pub struct ContourIndex {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<(f64, f64)>>,
    len: usize,
}

impl ContourIndex {
    pub fn new(points: &[(u32, u32)]) -> Self {
        let cell = 16.0;
        let mut buckets: HashMap<(i64, i64), Vec<(f64, f64)>> = HashMap::new();
        for &(x, y) in points {
            let (x, y) = (x as f64, y as f64);
            buckets
                .entry(((x / cell).floor() as i64, (y / cell).floor() as i64))
                .or_default()
                .push((x, y));
        }
        ContourIndex {
            cell,
            buckets,
            len: points.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Euclidean distance to the nearest contour point, `∞` if empty.
    pub fn nearest(&self, x: f64, y: f64) -> f64 {
        if self.is_empty() {
            return f64::INFINITY;
        }
        let (cx, cy) = ((x / self.cell).floor() as i64, (y / self.cell).floor() as i64);
        let mut best = f64::INFINITY;
        let mut ring = 0i64;
        loop {
            for dy in -ring..=ring {
                for dx in -ring..=ring {
                    if dx.abs() != ring && dy.abs() != ring {
                        continue;
                    }
                    if let Some(pts) = self.buckets.get(&(cx + dx, cy + dy)) {
                        for &(px, py) in pts {
                            best = best.min((px - x).hypot(py - y));
                        }
                    }
                }
            }
            // everything outside the scanned rings is at least this far away
            if best <= ring as f64 * self.cell {
                return best;
            }
            ring += 1;
        }
    }
}

/// Sum of nearest-contour distances over the interval points that lie
/// outside every box, and the number of such points.
pub fn line_loss(
    p: (f64, f64),
    q: (f64, f64),
    contour: &ContourIndex,
    boxes: &[BBox],
    spacing: f64,
) -> Result<(f64, usize), ReconstructError> {
    if (q.0 - p.0).hypot(q.1 - p.1) < 1e-9 {
        return Err(ReconstructError::DegenerateConnection);
    }
    let kept: Vec<(f64, f64)> = interval_points(p, q, spacing)
        .into_iter()
        .filter(|&(x, y)| !boxes.iter().any(|b| b.contains(x, y)))
        .collect();
    if contour.is_empty() {
        return Ok((f64::INFINITY, kept.len()));
    }
    let loss = kept.iter().map(|&(x, y)| contour.nearest(x, y)).sum();
    Ok((loss, kept.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterNodeConnection {
    /// Indices into the node-point list.
    pub a: usize,
    pub b: usize,
    pub endpoints: ((f64, f64), (f64, f64)),
    pub interval_points: usize,
    pub n_effective: usize,
    pub loss: f64,
    pub valid: bool,
}

impl InterNodeConnection {
    pub fn length(&self) -> f64 {
        let (p, q) = self.endpoints;
        (q.0 - p.0).hypot(q.1 - p.1)
    }
}

/// Scores every unordered pair of node points.
pub fn validate_connections(
    points: &[(f64, f64)],
    contour: &ContourIndex,
    boxes: &[BBox],
    cfg: &ReconstructConfig,
) -> Vec<InterNodeConnection> {
    let mut out = Vec::new();
    for a in 0..points.len() {
        for b in a + 1..points.len() {
            let (p, q) = (points[a], points[b]);
            let Ok((loss, n_effective)) = line_loss(p, q, contour, boxes, cfg.spacing) else {
                continue;
            };
            let len = (q.0 - p.0).hypot(q.1 - p.1);
            out.push(InterNodeConnection {
                a,
                b,
                endpoints: (p, q),
                interval_points: interval_points(p, q, cfg.spacing).len(),
                n_effective,
                loss,
                valid: loss <= cfg.tau0 + cfg.tau1 * len,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconstructionResult {
    pub netlist: Netlist,
    pub valid_connections: Vec<InterNodeConnection>,
    pub rejected_connections: Vec<InterNodeConnection>,
    pub diagnostics: Vec<String>,
}

fn reading_order(a: (f64, f64), b: (f64, f64)) -> Ordering {
    a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0))
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        if self.0[x] != x {
            let root = self.find(self.0[x]);
            self.0[x] = root;
        }
        self.0[x]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum NodeKey {
    /// Root node point of a wire-connected group.
    Group(usize),
    /// Bare wire between two components drawn back to back.
    Gap(usize, usize),
}

/// Reads the circuit off the valid connections.
///
/// Connections that cross no component box are wires and merge their node
/// points into one electrical node. Each component takes its terminals from
/// the valid connection that crosses its box with the fewest other
/// components on it, shortest first; when several components sit on that
/// connection the stretch between two neighbours becomes its own node.
pub fn integrate_components(
    points: &[(f64, f64)],
    connections: &[InterNodeConnection],
    detections: &[Detection],
    cfg: &ReconstructConfig,
) -> Result<ReconstructionResult, ReconstructError> {
    let mut diagnostics = Vec::new();
    let mut parts: Vec<(ComponentKind, BBox)> = detections
        .iter()
        .filter_map(|d| d.class.component_kind().map(|k| (k, d.bbox)))
        .collect();
    parts.sort_by(|a, b| reading_order(a.1.center(), b.1.center()));

    let valid: Vec<&InterNodeConnection> = connections.iter().filter(|c| c.valid).collect();
    // crossed component indices along each valid connection, in travel order
    let crossings: Vec<Vec<usize>> = valid
        .iter()
        .map(|c| {
            let mut hits: Vec<(f64, usize)> = parts
                .iter()
                .enumerate()
                .filter_map(|(i, (_, b))| {
                    let (t0, t1) = b.clip(c.endpoints.0, c.endpoints.1)?;
                    ((t1 - t0) * c.length() > 1.0).then_some((t0, i))
                })
                .collect();
            hits.sort_by(|x, y| x.0.total_cmp(&y.0));
            hits.into_iter().map(|(_, i)| i).collect()
        })
        .collect();

    let mut uf = UnionFind((0..points.len()).collect());
    for (c, hits) in valid.iter().zip(&crossings) {
        if hits.is_empty() {
            uf.union(c.a, c.b);
        }
    }

    let group: Vec<usize> = (0..points.len()).map(|i| uf.find(i)).collect();
    let mut terminals: Vec<(NodeKey, NodeKey)> = Vec::with_capacity(parts.len());
    for (pi, (kind, bbox)) in parts.iter().enumerate() {
        let mut candidates: Vec<usize> = (0..valid.len())
            .filter(|&ci| crossings[ci].contains(&pi))
            .collect();
        if candidates.is_empty() {
            let (x, y) = bbox.center();
            return Err(ReconstructError::ComponentUnattached { kind: *kind, x, y });
        }
        candidates.sort_by(|&x, &y| {
            crossings[x]
                .len()
                .cmp(&crossings[y].len())
                .then(valid[x].length().total_cmp(&valid[y].length()))
        });
        let best = candidates[0];
        let endpoint_groups = |ci: usize| {
            let mut g = [group[valid[ci].a], group[valid[ci].b]];
            g.sort_unstable();
            g
        };
        let rivals: Vec<usize> = candidates[1..]
            .iter()
            .copied()
            .filter(|&ci| {
                crossings[ci].len() == crossings[best].len()
                    && endpoint_groups(ci) != endpoint_groups(best)
            })
            .collect();
        if !rivals.is_empty() {
            let (x, y) = bbox.center();
            diagnostics.push(format!(
                "ambiguous attachment of {kind} at ({x:.0}, {y:.0}): {} equally short-listed connections; used the shortest",
                rivals.len() + 1
            ));
        }
        let hits = &crossings[best];
        let k = hits.iter().position(|&h| h == pi).unwrap();
        let c = valid[best];
        let left = if k == 0 {
            NodeKey::Group(group[c.a])
        } else {
            NodeKey::Gap(hits[k - 1].min(pi), hits[k - 1].max(pi))
        };
        let right = if k + 1 == hits.len() {
            NodeKey::Group(group[c.b])
        } else {
            NodeKey::Gap(hits[k + 1].min(pi), hits[k + 1].max(pi))
        };
        terminals.push((left, right));
    }

    // label nodes in reading order of a representative point
    let anchor = |key: NodeKey| -> (f64, f64) {
        match key {
            NodeKey::Group(root) => (0..points.len())
                .filter(|&i| group[i] == root)
                .map(|i| points[i])
                .min_by(|a, b| reading_order(*a, *b))
                .unwrap(),
            NodeKey::Gap(x, y) => {
                let (a, b) = (parts[x].1.center(), parts[y].1.center());
                ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0)
            }
        }
    };
    let mut keys: Vec<NodeKey> = terminals.iter().flat_map(|&(a, b)| [a, b]).collect();
    keys.sort();
    keys.dedup();
    let mut anchored: Vec<((f64, f64), NodeKey)> =
        keys.into_iter().map(|k| (anchor(k), k)).collect();
    anchored.sort_by(|a, b| reading_order(a.0, b.0).then(a.1.cmp(&b.1)));
    let labels: BTreeMap<NodeKey, NodeLabel> = anchored
        .iter()
        .enumerate()
        .map(|(i, &(_, k))| (k, NodeLabel::new(&format!("N{:03}", i + 1))))
        .collect();

    let names = bind_identifiers(&parts, detections, cfg, &mut diagnostics);
    let components: Vec<Component> = parts
        .iter()
        .zip(&terminals)
        .zip(names)
        .map(|(((kind, _), (a, b)), (name, value))| Component {
            name,
            kind: *kind,
            node_a: labels[a].clone(),
            node_b: labels[b].clone(),
            value,
        })
        .collect();
    let netlist = if components.is_empty() {
        Netlist::default()
    } else {
        Netlist::from_components(components)?
    };
    let (valid_connections, rejected_connections) =
        connections.iter().cloned().partition(|c| c.valid);
    Ok(ReconstructionResult {
        netlist,
        valid_connections,
        rejected_connections,
        diagnostics,
    })
}

/// Names and optional values for each component: the nearest identifier
/// within `identifier_radius` bbox diagonals whose text names a component
/// of the right kind, otherwise an automatic name in reading order.
fn bind_identifiers(
    parts: &[(ComponentKind, BBox)],
    detections: &[Detection],
    cfg: &ReconstructConfig,
    diagnostics: &mut Vec<String>,
) -> Vec<(String, Option<f64>)> {
    let idents: Vec<&Detection> = detections
        .iter()
        .filter(|d| d.class == DetectionClass::Identifier)
        .collect();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (ii, d) in idents.iter().enumerate() {
        let (ix, iy) = d.bbox.center();
        for (pi, (_, b)) in parts.iter().enumerate() {
            let (cx, cy) = b.center();
            let dist = (ix - cx).hypot(iy - cy);
            if dist <= cfg.identifier_radius * b.diagonal() {
                pairs.push((dist, ii, pi));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut bound: Vec<Option<(String, Option<f64>)>> = vec![None; parts.len()];
    let mut used_ident = vec![false; idents.len()];
    let mut used_names: Vec<String> = Vec::new();
    for (_, ii, pi) in pairs {
        if used_ident[ii] || bound[pi].is_some() {
            continue;
        }
        let text = idents[ii].text.as_deref().unwrap_or("").trim();
        let mut tokens = text.split_whitespace();
        let Some(name) = tokens.next() else { continue };
        let kind = parts[pi].0;
        if ComponentKind::from_name(name) != Some(kind) {
            diagnostics.push(format!("identifier `{text}` does not name a {kind}; ignored"));
            continue;
        }
        if used_names.iter().any(|n| n.eq_ignore_ascii_case(name)) {
            diagnostics.push(format!("identifier `{name}` used twice; second use ignored"));
            continue;
        }
        let rest: String = tokens.collect::<Vec<_>>().join("");
        let value = if rest.is_empty() {
            None
        } else {
            let v = parse_value(&rest, kind);
            if v.is_none() {
                diagnostics.push(format!("value `{rest}` of {name} not understood; ignored"));
            }
            v
        };
        used_ident[ii] = true;
        used_names.push(name.to_string());
        bound[pi] = Some((name.to_string(), value));
    }
    let mut counters: BTreeMap<&str, usize> = BTreeMap::new();
    bound
        .into_iter()
        .zip(parts)
        .map(|(b, (kind, _))| {
            b.unwrap_or_else(|| loop {
                let n = counters.entry(kind.prefix()).or_insert(0);
                *n += 1;
                let name = format!("{}{}", kind.prefix(), n);
                if !used_names.iter().any(|u| u.eq_ignore_ascii_case(&name)) {
                    used_names.push(name.clone());
                    break (name, None);
                }
            })
        })
        .collect()
}

/// Full pipeline on a loaded scene.
pub fn reconstruct(scene: &Scene, cfg: &ReconstructConfig) -> Result<ReconstructionResult, ReconstructError> {
    let component_boxes: Vec<BBox> = scene
        .detections
        .iter()
        .filter(|d| d.class.component_kind().is_some())
        .map(|d| d.bbox)
        .collect();
    let erase: Vec<BBox> = scene
        .detections
        .iter()
        .filter(|d| d.class.component_kind().is_some() || d.class == DetectionClass::Identifier)
        .map(|d| d.bbox)
        .collect();
    let mut points: Vec<(f64, f64)> = scene
        .detections
        .iter()
        .filter(|d| d.class.is_node_point())
        .map(|d| d.bbox.center())
        .collect();
    points.sort_by(|a, b| reading_order(*a, *b));
    points.dedup();
    let contour = ContourIndex::new(&sample_contours(&scene.image, &erase, cfg.stride));
    let connections = validate_connections(&points, &contour, &component_boxes, cfg);
    integrate_components(&points, &connections, &scene.detections, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stroke_image(y: u32, x_range: std::ops::RangeInclusive<u32>) -> BinaryImage {
        let mut img = BinaryImage::blank(120, 40);
        for x in x_range {
            img.set(x as i64, y as i64, true);
        }
        img
    }

    fn line_contour(y: u32) -> ContourIndex {
        ContourIndex::new(&(0..=60).map(|x| (x, y)).collect::<Vec<_>>())
    }

    #[test]
    fn blank_image_has_no_contour() {
        assert!(sample_contours(&BinaryImage::blank(50, 50), &[], 2).is_empty());
    }

    #[test]
    fn stroke_sampling() {
        let pts = sample_contours(&stroke_image(10, 0..=99), &[], 5);
        assert_eq!(pts.len(), 20);
        assert!(pts.iter().all(|&(_, y)| y == 10));
        let pts = sample_contours(&stroke_image(11, 0..=99), &[], 5);
        assert_eq!(pts.len(), 20);
    }

    #[test]
    fn stroke_inside_box_is_erased() {
        let erase = [BBox::new(0.0, 0.0, 120.0, 20.0)];
        assert!(sample_contours(&stroke_image(10, 0..=99), &erase, 2).is_empty());
    }

    #[test]
    fn loss_on_the_line_is_zero() {
        let (loss, n) = line_loss((0.0, 0.0), (40.0, 0.0), &line_contour(0), &[], 4.0).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(n, 11);
    }

    #[test]
    fn loss_at_offset_three() {
        // oracle: brute force over the raw point list
        let contour: Vec<(u32, u32)> = (0..=60).map(|x| (x, 3)).collect();
        let mut expected = 0.0;
        for (x, y) in interval_points((0.0, 0.0), (40.0, 0.0), 4.0) {
            expected += contour
                .iter()
                .map(|&(cx, cy)| (cx as f64 - x).hypot(cy as f64 - y))
                .fold(f64::INFINITY, f64::min);
        }
        let (loss, n) = line_loss((0.0, 0.0), (40.0, 0.0), &line_contour(3), &[], 4.0).unwrap();
        assert_eq!(n, 11);
        assert!((loss - expected).abs() < 1e-12);
        assert!((loss - 33.0).abs() < 1e-12);
    }

    #[test]
    fn loss_with_excluded_points() {
        let boxes = [BBox::new(16.0, -5.0, 24.0, 5.0)];
        let (loss, n) = line_loss((0.0, 0.0), (40.0, 0.0), &line_contour(3), &boxes, 4.0).unwrap();
        assert_eq!(n, 9);
        assert!((loss - 27.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_empty() {
        assert_eq!(
            line_loss((1.0, 1.0), (1.0, 1.0), &line_contour(0), &[], 4.0),
            Err(ReconstructError::DegenerateConnection)
        );
        let empty = ContourIndex::new(&[]);
        let (loss, _) = line_loss((0.0, 0.0), (40.0, 0.0), &empty, &[], 4.0).unwrap();
        assert!(loss.is_infinite());
        let conns = validate_connections(
            &[(0.0, 0.0), (40.0, 0.0)],
            &empty,
            &[],
            &ReconstructConfig::default(),
        );
        assert!(!conns[0].valid);
    }

    #[test]
    fn nearest_matches_brute_force() {
        let pts: Vec<(u32, u32)> = (0..200).map(|i| ((i * 37) % 151, (i * 53) % 97)).collect();
        let index = ContourIndex::new(&pts);
        for (x, y) in [(0.0, 0.0), (75.5, 40.2), (300.0, 10.0), (-20.0, -20.0), (150.0, 96.0)] {
            let brute = pts
                .iter()
                .map(|&(px, py)| (px as f64 - x).hypot(py as f64 - y))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(index.nearest(x, y), brute);
        }
    }

    #[test]
    fn clip_segment() {
        let b = BBox::new(10.0, -5.0, 20.0, 5.0);
        let (t0, t1) = b.clip((0.0, 0.0), (40.0, 0.0)).unwrap();
        assert!((t0 - 0.25).abs() < 1e-12 && (t1 - 0.5).abs() < 1e-12);
        assert_eq!(b.clip((0.0, 10.0), (40.0, 10.0)), None);
        assert!(b.clip((15.0, -20.0), (15.0, 20.0)).is_some());
    }

    #[test]
    fn detection_format() {
        let text = r#"{"class":"resistor","bbox":[1,2,30,16],"score":0.9}
{"class":"identifier","bbox":[1,20,20,30],"score":0.8,"text":"R1 1k"}
"#;
        let d = parse_detections(text).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].class, DetectionClass::Resistor);
        assert_eq!(d[1].text.as_deref(), Some("R1 1k"));
        assert_eq!(parse_detections(&detections_to_jsonl(&d)).unwrap(), d);
        assert!(matches!(
            parse_detections(r#"{"class":"capacitor","bbox":[0,0,1,1],"score":1}"#),
            Err(ReconstructError::BadFormat { line: 1, .. })
        ));
        assert!(matches!(
            parse_detections(r#"{"class":"corner","bbox":[5,0,1,1],"score":1}"#),
            Err(ReconstructError::BadFormat { .. })
        ));
    }

    #[test]
    fn scene_loading() {
        let img = BinaryImage::blank(50, 40);
        let pgm = img.to_pgm();
        let scene = load_scene("", &pgm).unwrap();
        assert!(scene.detections.is_empty());
        assert_eq!(scene.image, img);
        let result = reconstruct(&scene, &ReconstructConfig::default()).unwrap();
        assert!(result.netlist.is_empty());
        let far = r#"{"class":"corner","bbox":[40,30,60,35],"score":1}"#;
        assert_eq!(
            load_scene(far, &pgm),
            Err(ReconstructError::BboxOutOfBounds {
                line: 1,
                width: 50,
                height: 40
            })
        );
        assert!(matches!(load_scene("", b"P5 garbage"), Err(ReconstructError::Image(_))));
    }

    #[test]
    fn blank_pair_is_invalid_and_drawn_pair_is_valid() {
        let mut img = BinaryImage::blank(100, 60);
        let cfg = ReconstructConfig::default();
        let pts = [(10.0, 30.0), (90.0, 30.0)];
        let blank = ContourIndex::new(&sample_contours(&img, &[], cfg.stride));
        assert!(!validate_connections(&pts, &blank, &[], &cfg)[0].valid);
        for x in 10..=90 {
            img.set(x, 30, true);
        }
        let drawn = ContourIndex::new(&sample_contours(&img, &[], cfg.stride));
        let c = &validate_connections(&pts, &drawn, &[], &cfg)[0];
        assert!(c.valid);
        assert!(c.loss <= 1e-9);
    }

    proptest! {
        #[test]
        fn loss_grows_with_distance(
            offset in 0u32..20,
            extra in 1u32..20,
            x0 in 0.0f64..20.0,
            len in 8.0f64..60.0,
        ) {
            let near = ContourIndex::new(&(0..=100).map(|x| (x, 30 + offset)).collect::<Vec<_>>());
            let far = ContourIndex::new(&(0..=100).map(|x| (x, 30 + offset + extra)).collect::<Vec<_>>());
            let (p, q) = ((x0, 30.0), (x0 + len, 30.0));
            let (a, _) = line_loss(p, q, &near, &[], 4.0).unwrap();
            let (b, _) = line_loss(p, q, &far, &[], 4.0).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert!(b >= a);
        }

        #[test]
        fn exclusion_count(bx in 0.0f64..60.0, bw in 0.5f64..20.0, by in -5.0f64..5.0) {
            let contour = line_contour(0);
            let boxes = [BBox::new(bx, by - 2.0, bx + bw, by + 2.0)];
            let all = interval_points((0.0, 0.0), (40.0, 0.0), 4.0);
            let inside = all.iter().filter(|&&(x, y)| boxes[0].contains(x, y)).count();
            let (_, n) = line_loss((0.0, 0.0), (40.0, 0.0), &contour, &boxes, 4.0).unwrap();
            prop_assert!(n <= all.len());
            prop_assert_eq!(n == all.len(), inside == 0);
            prop_assert_eq!(n + inside, all.len());
        }
    }

    #[test]
    fn unattached_component() {
        let det = vec![Detection {
            class: DetectionClass::Resistor,
            bbox: BBox::new(10.0, 10.0, 30.0, 20.0),
            score: 1.0,
            text: None,
        }];
        let err = integrate_components(&[], &[], &det, &ReconstructConfig::default()).unwrap_err();
        assert!(matches!(err, ReconstructError::ComponentUnattached { .. }));
    }
}
