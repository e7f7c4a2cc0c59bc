//! Synthetic sketch renderer: turns a hand-placed circuit layout into the
//! detections and binarized image the reconstruction consumes, along with
//! the netlist the drawing is meant to show.

use std::collections::BTreeMap;

use crate::netlist::{Component, ComponentKind, Netlist, NodeLabel};
use crate::reconstruct::{BBox, BinaryImage, Detection, DetectionClass, Scene};

/// A component drawn on the straight segment between two layout points,
/// centred at fraction `at` of the way from `a` to `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Part {
    pub kind: ComponentKind,
    pub name: String,
    pub value: Option<f64>,
    pub a: usize,
    pub b: usize,
    pub at: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Layout {
    pub width: u32,
    pub height: u32,
    pub points: Vec<(f64, f64)>,
    pub wires: Vec<(usize, usize)>,
    pub parts: Vec<Part>,
}

impl Layout {
    pub fn point(&mut self, x: f64, y: f64) -> usize {
        self.points.push((x, y));
        self.width = self.width.max(x as u32 + 60);
        self.height = self.height.max(y as u32 + 60);
        self.points.len() - 1
    }

    pub fn wire(&mut self, a: usize, b: usize) -> &mut Self {
        self.wires.push((a, b));
        self
    }

    pub fn part(&mut self, name: &str, value: Option<f64>, a: usize, b: usize, at: f64) -> &mut Self {
        let kind = ComponentKind::from_name(name).expect("layout part names start with R, V or I");
        self.parts.push(Part {
            kind,
            name: name.to_string(),
            value,
            a,
            b,
            at,
        });
        self
    }

    fn segment_point(&self, a: usize, b: usize, t: f64) -> (f64, f64) {
        let (p, q) = (self.points[a], self.points[b]);
        (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1))
    }

    pub fn part_bbox(&self, part: &Part) -> BBox {
        let (cx, cy) = self.segment_point(part.a, part.b, part.at);
        let (cx, cy) = (cx.round(), cy.round());
        let (p, q) = (self.points[part.a], self.points[part.b]);
        let (hw, hh) = if p.1 == q.1 {
            (15.0, 7.0)
        } else if p.0 == q.0 {
            (7.0, 15.0)
        } else {
            (11.0, 11.0)
        };
        BBox::new(cx - hw, cy - hh, cx + hw, cy + hh)
    }

    fn identifier_bbox(&self, part: &Part) -> BBox {
        let (cx, cy) = self.segment_point(part.a, part.b, part.at);
        let (p, q) = (self.points[part.a], self.points[part.b]);
        let len = (q.0 - p.0).hypot(q.1 - p.1);
        let (dx, dy) = ((q.0 - p.0) / len, (q.1 - p.1) / len);
        // horizontal parts are labelled above, everything else to the right
        let (mut nx, mut ny) = (-dy, dx);
        if (p.1 == q.1 && ny > 0.0) || (p.1 != q.1 && nx < 0.0) {
            nx = -nx;
            ny = -ny;
        }
        let (lx, ly) = ((cx + 20.0 * nx).round(), (cy + 20.0 * ny).round());
        BBox::new(lx - 13.0, ly - 5.0, lx + 13.0, ly + 5.0)
    }

    fn degree(&self, point: usize) -> usize {
        let wires = self.wires.iter().filter(|&&(a, b)| a == point || b == point).count();
        let mut segments: Vec<(usize, usize)> = self
            .parts
            .iter()
            .filter(|p| p.a == point || p.b == point)
            .map(|p| (p.a.min(p.b), p.a.max(p.b)))
            .collect();
        segments.sort_unstable();
        segments.dedup();
        wires + segments.len()
    }

    /// The netlist the layout depicts.
    pub fn expected_netlist(&self) -> Netlist {
        let mut root: Vec<usize> = (0..self.points.len()).collect();
        fn find(root: &mut [usize], x: usize) -> usize {
            if root[x] != x {
                root[x] = find(root, root[x]);
            }
            root[x]
        }
        for &(a, b) in &self.wires {
            let (ra, rb) = (find(&mut root, a), find(&mut root, b));
            root[ra.max(rb)] = ra.min(rb);
        }
        let mut by_segment: BTreeMap<(usize, usize), Vec<(f64, usize)>> = BTreeMap::new();
        for (i, p) in self.parts.iter().enumerate() {
            let (key, t) = if p.a < p.b {
                ((p.a, p.b), p.at)
            } else {
                ((p.b, p.a), 1.0 - p.at)
            };
            by_segment.entry(key).or_default().push((t, i));
        }
        let mut ends: Vec<(String, String)> = vec![Default::default(); self.parts.len()];
        for ((a, b), mut list) in by_segment {
            list.sort_by(|x, y| x.0.total_cmp(&y.0));
            let k = list.len();
            for (j, &(_, i)) in list.iter().enumerate() {
                let left = if j == 0 {
                    format!("P{}", find(&mut root, a))
                } else {
                    format!("G{a}_{b}_{j}")
                };
                let right = if j + 1 == k {
                    format!("P{}", find(&mut root, b))
                } else {
                    format!("G{a}_{b}_{}", j + 1)
                };
                let p = &self.parts[i];
                ends[i] = if p.a < p.b { (left, right) } else { (right, left) };
            }
        }
        let components = self
            .parts
            .iter()
            .zip(ends)
            .map(|(p, (a, b))| Component {
                name: p.name.clone(),
                kind: p.kind,
                node_a: NodeLabel::new(&a),
                node_b: NodeLabel::new(&b),
                value: p.value,
            })
            .collect();
        Netlist::from_components(components).expect("layouts describe valid netlists")
    }
}

fn stamp_line(img: &mut BinaryImage, p: (f64, f64), q: (f64, f64)) {
    let len = (q.0 - p.0).hypot(q.1 - p.1);
    let steps = (len * 4.0).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let (x, y) = (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1));
        let (x, y) = (x.round() as i64, y.round() as i64);
        for (dx, dy) in [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)] {
            img.set(x + dx, y + dy, true);
        }
    }
}

fn clear_box(img: &mut BinaryImage, b: &BBox) {
    for y in b.y_min.floor() as i64..=b.y_max.ceil() as i64 {
        for x in b.x_min.floor() as i64..=b.x_max.ceil() as i64 {
            if b.contains(x as f64, y as f64) {
                img.set(x, y, false);
            }
        }
    }
}

fn value_text(kind: ComponentKind, value: f64) -> String {
    format!("{value}{}", kind.unit())
}

/// Draws the layout and emits one detection per node point, component and
/// identifier.
pub fn render(layout: &Layout) -> Scene {
    let mut img = BinaryImage::blank(layout.width, layout.height);
    for &(a, b) in &layout.wires {
        stamp_line(&mut img, layout.points[a], layout.points[b]);
    }
    for p in &layout.parts {
        stamp_line(&mut img, layout.points[p.a], layout.points[p.b]);
    }
    let mut detections = Vec::new();
    for (i, &(x, y)) in layout.points.iter().enumerate() {
        let class = if layout.degree(i) >= 3 {
            DetectionClass::Intersection
        } else {
            DetectionClass::Corner
        };
        detections.push(Detection {
            class,
            bbox: BBox::new(x - 6.0, y - 6.0, x + 6.0, y + 6.0),
            score: 0.9,
            text: None,
        });
    }
    for p in &layout.parts {
        let b = layout.part_bbox(p);
        clear_box(&mut img, &b);
        // symbol outline: box for resistors, diamond for sources
        let (x0, y0, x1, y1) = (b.x_min + 1.0, b.y_min + 1.0, b.x_max - 2.0, b.y_max - 2.0);
        let (cx, cy) = b.center();
        let outline: Vec<(f64, f64)> = match p.kind {
            ComponentKind::Resistor => vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)],
            _ => vec![(cx, y0), (x1, cy), (cx, y1), (x0, cy), (cx, y0)],
        };
        for w in outline.windows(2) {
            stamp_line(&mut img, w[0], w[1]);
        }
        let class = match p.kind {
            ComponentKind::Resistor => DetectionClass::Resistor,
            ComponentKind::VoltageSource => DetectionClass::VoltageSource,
            ComponentKind::CurrentSource => DetectionClass::CurrentSource,
        };
        detections.push(Detection {
            class,
            bbox: b,
            score: 0.95,
            text: None,
        });
        let ib = layout.identifier_bbox(p);
        let (_, iy) = ib.center();
        stamp_line(&mut img, (ib.x_min + 3.0, iy), (ib.x_max - 4.0, iy));
        let text = match p.value {
            Some(v) => format!("{} {}", p.name, value_text(p.kind, v)),
            None => p.name.clone(),
        };
        detections.push(Detection {
            class: DetectionClass::Identifier,
            bbox: ib,
            score: 0.8,
            text: Some(text),
        });
    }
    Scene {
        detections,
        image: img,
    }
}

/// Rectangle loop of the five-component series example.
pub fn series4() -> Layout {
    let mut l = Layout::default();
    let tl = l.point(60.0, 60.0);
    let tr = l.point(300.0, 60.0);
    let br = l.point(300.0, 220.0);
    let bl = l.point(60.0, 220.0);
    l.part("R_A", Some(180.0), tl, tr, 0.3)
        .part("R_B", Some(270.0), tl, tr, 0.7)
        .part("R_C", Some(360.0), tr, br, 0.5)
        .part("R_D", Some(450.0), br, bl, 0.5)
        .part("V7", Some(18.0), tl, bl, 0.5);
    l
}

fn ladder(rungs: &[&str], top: &[Option<&str>], bottom: &[Option<&str>]) -> Layout {
    let mut l = Layout::default();
    let n = rungs.len();
    let t: Vec<usize> = (0..n).map(|i| l.point(60.0 + 140.0 * i as f64, 60.0)).collect();
    let b: Vec<usize> = (0..n).map(|i| l.point(60.0 + 140.0 * i as f64, 220.0)).collect();
    for i in 0..n {
        l.part(rungs[i], None, t[i], b[i], 0.5);
    }
    for i in 0..n - 1 {
        match top.get(i).copied().flatten() {
            Some(name) => l.part(name, None, t[i], t[i + 1], 0.5),
            None => l.wire(t[i], t[i + 1]),
        };
        match bottom.get(i).copied().flatten() {
            Some(name) => l.part(name, None, b[i], b[i + 1], 0.5),
            None => l.wire(b[i], b[i + 1]),
        };
    }
    l
}

fn loop4(left: &str, top: &[&str], right: &str, bottom: &[&str]) -> Layout {
    let mut l = Layout::default();
    let tl = l.point(60.0, 60.0);
    let tr = l.point(380.0, 60.0);
    let br = l.point(380.0, 240.0);
    let bl = l.point(60.0, 240.0);
    let spread = |k: usize, j: usize| (j + 1) as f64 / (k + 1) as f64;
    l.part(left, None, tl, bl, 0.5);
    l.part(right, None, tr, br, 0.5);
    for (j, name) in top.iter().enumerate() {
        l.part(name, None, tl, tr, spread(top.len(), j));
    }
    if bottom.is_empty() {
        l.wire(br, bl);
    }
    for (j, name) in bottom.iter().enumerate() {
        l.part(name, None, bl, br, spread(bottom.len(), j));
    }
    l
}

fn diamond_bridge(extra_source: bool) -> Layout {
    let mut l = Layout::default();
    let left = l.point(60.0, 200.0);
    let top = l.point(200.0, 60.0);
    let right = l.point(340.0, 200.0);
    let bottom = l.point(200.0, 340.0);
    let p1 = l.point(60.0, 440.0);
    let p2 = l.point(340.0, 440.0);
    l.part("R1", None, left, top, 0.5)
        .part("R2", None, top, right, 0.5)
        .part("R3", None, left, bottom, 0.5)
        .part("R4", None, bottom, right, 0.5)
        .part("R5", None, top, bottom, 0.5)
        .wire(left, p1)
        .part("V1", None, p1, p2, 0.5);
    if extra_source {
        l.part("V2", None, p2, right, 0.5);
    } else {
        l.wire(p2, right);
    }
    l
}

fn grid_bridge(diagonal: bool, extra_source: bool) -> Layout {
    let mut l = Layout::default();
    let tl = l.point(60.0, 60.0);
    let tm = l.point(220.0, 60.0);
    let tr = l.point(380.0, 60.0);
    let bl_x = if diagonal { 120.0 } else { 60.0 };
    let bl = l.point(bl_x, 200.0);
    let bm = l.point(250.0, 200.0);
    let br = l.point(380.0, 200.0);
    let p1 = l.point(bl_x, 320.0);
    let p2 = l.point(380.0, 320.0);
    l.part("R1", None, tl, tm, 0.5)
        .part("R2", None, tm, tr, 0.5)
        .part("R3", None, bl, bm, 0.5)
        .part("R4", None, bm, br, 0.5)
        .part("R5", None, tm, bm, 0.5)
        .wire(tl, bl)
        .wire(bl, p1)
        .part("V1", None, p1, p2, 0.5)
        .wire(p2, br);
    if extra_source {
        l.part("V2", None, tr, br, 0.5);
    } else {
        l.wire(tr, br);
    }
    l
}

/// Reference scenes covering every circuit class, several with diagonal
/// strokes. Each entry is `(name, class id, layout)`.
pub fn golden_layouts() -> Vec<(String, usize, Layout)> {
    let mut out: Vec<(&str, usize, Layout)> = Vec::new();
    out.push(("series4", 3, series4()));
    out.push(("series-triangle", 3, {
        let mut l = Layout::default();
        let a = l.point(60.0, 200.0);
        let b = l.point(200.0, 60.0);
        let c = l.point(340.0, 200.0);
        l.part("V1", Some(12.0), a, c, 0.5)
            .part("R1", Some(220.0), a, b, 0.5)
            .part("R2", Some(330.0), b, c, 0.5);
        l
    }));
    out.push(("series-two-sources", 4, loop4("V1", &["R1"], "V2", &["R2"])));
    out.push(("series-current-source", 4, loop4("I1", &["R1"], "V1", &["R2"])));
    out.push(("series-six", 3, loop4("V1", &["R1", "R2"], "R3", &["R4", "R5"])));
    out.push(("series-three-in-a-row", 3, loop4("V1", &["R1", "R2", "R3"], "R4", &[])));
    out.push(("parallel-three", 1, ladder(&["V1", "R1", "R2"], &[], &[])));
    out.push(("parallel-four", 1, ladder(&["V1", "R1", "R2", "R3"], &[], &[])));
    out.push(("parallel-mixed-sources", 2, ladder(&["V1", "R1", "I1", "R2"], &[], &[])));
    out.push(("parallel-current-sources", 2, ladder(&["I1", "R1", "I2", "R2"], &[], &[])));
    out.push(("parallel-diagonal-rail", 1, {
        let mut l = ladder(&["V1", "R1", "R2"], &[], &[]);
        // reroute the first bottom rail segment through a lower point
        let d = l.point(130.0, 300.0);
        l.wires.retain(|&(a, b)| (a, b) != (3, 4));
        l.wire(3, d).wire(d, 4);
        l
    }));
    out.push(("parallel-diagonal-rung", 1, {
        let mut l = Layout::default();
        let t: Vec<usize> = [60.0, 200.0, 340.0].iter().map(|&x| l.point(x, 60.0)).collect();
        let b0 = l.point(60.0, 220.0);
        let b1 = l.point(200.0, 220.0);
        let b2 = l.point(400.0, 220.0);
        l.part("V1", None, t[0], b0, 0.5)
            .part("R1", None, t[1], b1, 0.5)
            .part("R2", None, t[2], b2, 0.5)
            .wire(t[0], t[1])
            .wire(t[1], t[2])
            .wire(b0, b1)
            .wire(b1, b2);
        l
    }));
    out.push(("mixed-divider", 5, ladder(&["V1", "R2", "R3"], &[Some("R1")], &[])));
    out.push(("mixed-ladder", 5, ladder(&["V1", "R2", "R4"], &[Some("R1"), Some("R3")], &[])));
    out.push(("mixed-branch-series", 5, ladder(&["V1", "R2", "R3"], &[Some("R1")], &[None, Some("R4")])));
    out.push(("mixed-two-sources", 6, ladder(&["V1", "R2", "V2"], &[Some("R1"), Some("R3")], &[])));
    out.push(("mixed-current-source", 6, ladder(&["V1", "R2", "I1"], &[Some("R1")], &[])));
    out.push(("mixed-diagonal-rail", 6, {
        let mut l = Layout::default();
        let t0 = l.point(60.0, 60.0);
        let t1 = l.point(200.0, 120.0);
        let t2 = l.point(340.0, 120.0);
        let b0 = l.point(60.0, 260.0);
        let b1 = l.point(200.0, 260.0);
        let b2 = l.point(340.0, 260.0);
        l.part("V1", None, t0, b0, 0.5)
            .part("R1", None, t0, t1, 0.5)
            .part("R2", None, t1, b1, 0.5)
            .part("R3", None, t1, t2, 0.5)
            .part("V2", None, t2, b2, 0.5)
            .wire(b0, b1)
            .wire(b1, b2);
        l
    }));
    out.push(("bridge-diamond", 7, diamond_bridge(false)));
    out.push(("bridge-diamond-two-sources", 8, diamond_bridge(true)));
    out.push(("bridge-grid", 7, grid_bridge(false, false)));
    out.push(("bridge-diagonal-wire", 7, grid_bridge(true, false)));
    out.push(("bridge-grid-two-sources", 8, grid_bridge(false, true)));
    out.into_iter()
        .map(|(name, class, layout)| (name.to_string(), class, layout))
        .collect()
}
