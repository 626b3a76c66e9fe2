//! Rigid triangle meshes: procedural humans, animals and shrubs, plus a
//! minimal OBJ reader/writer (`v` and `f` lines).
//!
//! Local frame: base on the ground at `y = 0`, centred on the vertical
//! axis, facing `+x`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Event class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Human,
    Animal,
    Clutter,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Human, Label::Animal, Label::Clutter];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Human => "human",
            Label::Animal => "animal",
            Label::Clutter => "clutter",
        }
    }

    pub fn is_intruder(self) -> bool {
        self != Label::Clutter
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Label::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown label `{s}`")))
    }
}

/// Allowed silhouette heights (m) per class.
pub const HUMAN_HEIGHT: (f64, f64) = (1.5, 2.0);
pub const ANIMAL_HEIGHT: (f64, f64) = (0.5, 1.2);

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    pub label_hint: Label,
}

impl TriangleMesh {
    /// Validating constructor.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>, label_hint: Label) -> Result<Self> {
        let m = TriangleMesh {
            vertices,
            triangles,
            label_hint,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn empty(label_hint: Label) -> Self {
        TriangleMesh {
            vertices: Vec::new(),
            triangles: Vec::new(),
            label_hint,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (i, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&k| k >= n) {
                return Err(Error::InvalidInput(format!("triangle {i}: vertex index out of range")));
            }
            let [a, b, c] = t.map(|k| self.vertices[k]);
            if (b - a).cross(c - a).norm() < 1e-12 {
                return Err(Error::InvalidInput(format!("triangle {i} is degenerate")));
            }
        }
        if self.vertices.iter().any(|v| !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite())) {
            return Err(Error::InvalidInput("non-finite vertex".into()));
        }
        if self.triangles.is_empty() {
            return Ok(());
        }
        let h = self.height();
        let range = match self.label_hint {
            Label::Human => Some(HUMAN_HEIGHT),
            Label::Animal => Some(ANIMAL_HEIGHT),
            Label::Clutter => None,
        };
        if let Some((lo, hi)) = range {
            if h < lo - 1e-9 || h > hi + 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "{} mesh height {h:.3} m outside [{lo}, {hi}] m",
                    self.label_hint
                )));
            }
        }
        Ok(())
    }

    /// Axis-aligned bounds `(min, max)`; `None` for a mesh without vertices.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), v| {
            (
                Vec3::new(lo.x.min(v.x), lo.y.min(v.y), lo.z.min(v.z)),
                Vec3::new(hi.x.max(v.x), hi.y.max(v.y), hi.z.max(v.z)),
            )
        }))
    }

    pub fn height(&self) -> f64 {
        self.bounds().map_or(0.0, |(lo, hi)| hi.y - lo.y)
    }

    /// The eight corners of the bounding box.
    pub fn bbox_corners(&self) -> Vec<Vec3> {
        let Some((lo, hi)) = self.bounds() else {
            return Vec::new();
        };
        let mut out = Vec::with_capacity(8);
        for &x in &[lo.x, hi.x] {
            for &y in &[lo.y, hi.y] {
                for &z in &[lo.z, hi.z] {
                    out.push(Vec3::new(x, y, z));
                }
            }
        }
        out
    }

    fn append(&mut self, other: TriangleMesh) {
        let base = self.vertices.len();
        self.vertices.extend(other.vertices);
        self.triangles
            .extend(other.triangles.into_iter().map(|t| t.map(|k| k + base)));
    }

    fn map_vertices(mut self, f: impl Fn(Vec3) -> Vec3) -> Self {
        for v in &mut self.vertices {
            *v = f(*v);
        }
        self
    }

    /// Parse the `v x y z` / `f i j k ...` subset of OBJ. Polygons are fan
    /// triangulated; `i/t/n` index forms and negative indices are accepted.
    pub fn from_obj(text: &str, label_hint: Label) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            let mut it = line.split_whitespace();
            let bad = |m: &str| Error::InvalidInput(format!("OBJ line {}: {m}", ln + 1));
            match it.next() {
                Some("v") => {
                    let xs: Vec<f64> = it
                        .take(3)
                        .map(|t| t.parse::<f64>().map_err(|_| bad("bad coordinate")))
                        .collect::<Result<_>>()?;
                    if xs.len() != 3 {
                        return Err(bad("vertex needs 3 coordinates"));
                    }
                    vertices.push(Vec3::new(xs[0], xs[1], xs[2]));
                }
                Some("f") => {
                    let idx: Vec<usize> = it
                        .map(|t| {
                            let raw: i64 = t
                                .split('/')
                                .next()
                                .unwrap_or("")
                                .parse()
                                .map_err(|_| bad("bad face index"))?;
                            let n = vertices.len() as i64;
                            let k = if raw < 0 { n + raw } else { raw - 1 };
                            if k < 0 || k >= n {
                                return Err(bad("face index out of range"));
                            }
                            Ok(k as usize)
                        })
                        .collect::<Result<_>>()?;
                    if idx.len() < 3 {
                        return Err(bad("face needs at least 3 vertices"));
                    }
                    for k in 1..idx.len() - 1 {
                        triangles.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        TriangleMesh::new(vertices, triangles, label_hint)
    }

    pub fn to_obj(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            s.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
        }
        for t in &self.triangles {
            s.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
        }
        s
    }
}

const SEGMENTS: usize = 8;
const CAP_RINGS: usize = 3;

/// Closed capsule between sphere centres `a` and `b`, outward-facing
/// triangles. `a == b` gives a sphere.
pub fn capsule(a: Vec3, b: Vec3, radius: f64, label_hint: Label) -> TriangleMesh {
    let axis = b - a;
    let half = axis.norm() / 2.0;
    let w = if half > 0.0 { axis * (0.5 / half) } else { Vec3::new(0.0, 1.0, 0.0) };
    let helper = if w.y.abs() < 0.9 { Vec3::new(0.0, 1.0, 0.0) } else { Vec3::new(1.0, 0.0, 0.0) };
    let u = w.cross(helper).normalized();
    let v = w.cross(u);
    let center = (a + b) * 0.5;

    // (axial offset, ring radius) from bottom to top, poles excluded
    let mut rings: Vec<(f64, f64)> = Vec::new();
    for k in 1..=CAP_RINGS {
        let t = -FRAC_PI_2 + k as f64 * FRAC_PI_2 / CAP_RINGS as f64;
        rings.push((-half + radius * t.sin(), radius * t.cos()));
    }
    let start = if half > 0.0 { 0 } else { 1 };
    for k in start..CAP_RINGS {
        let t = k as f64 * FRAC_PI_2 / CAP_RINGS as f64;
        rings.push((half + radius * t.sin(), radius * t.cos()));
    }

    let mut vertices = vec![center - w * (half + radius)];
    for &(ax, r) in &rings {
        for s in 0..SEGMENTS {
            let phi = 2.0 * PI * s as f64 / SEGMENTS as f64;
            vertices.push(center + w * ax + (u * phi.cos() + v * phi.sin()) * r);
        }
    }
    vertices.push(center + w * (half + radius));
    let top = vertices.len() - 1;
    let ring = |i: usize, s: usize| 1 + i * SEGMENTS + s % SEGMENTS;

    let mut triangles = Vec::new();
    for s in 0..SEGMENTS {
        triangles.push([0, ring(0, s + 1), ring(0, s)]);
    }
    for i in 0..rings.len() - 1 {
        for s in 0..SEGMENTS {
            triangles.push([ring(i, s), ring(i, s + 1), ring(i + 1, s + 1)]);
            triangles.push([ring(i, s), ring(i + 1, s + 1), ring(i + 1, s)]);
        }
    }
    let last = rings.len() - 1;
    for s in 0..SEGMENTS {
        triangles.push([top, ring(last, s), ring(last, s + 1)]);
    }
    TriangleMesh {
        vertices,
        triangles,
        label_hint,
    }
}

/// Reference human: 1.75 m, facing `+x`, scaled uniformly to `height`.
pub fn human(height: f64) -> Result<TriangleMesh> {
    let p = |x, y, z| Vec3::new(x, y, z);
    let l = Label::Human;
    let mut m = TriangleMesh::empty(l);
    for z in [-0.1, 0.1] {
        m.append(capsule(p(0.0, 0.08, z), p(0.0, 0.82, z), 0.08, l));
        m.append(capsule(p(0.0, 0.85, 2.5 * z), p(0.0, 1.36, 2.5 * z), 0.055, l));
    }
    m.append(capsule(p(0.0, 0.95, 0.0), p(0.0, 1.35, 0.0), 0.17, l));
    m.append(capsule(p(0.0, 1.62, 0.0), p(0.0, 1.62, 0.0), 0.13, l));
    let s = height / 1.75;
    let m = m.map_vertices(|v| v * s);
    TriangleMesh::new(m.vertices, m.triangles, l)
}

/// Reference four-legged animal: 0.8 m tall and 1.2 m long, scaled to
/// `height` with body length `height * length_ratio`.
pub fn animal(height: f64, length_ratio: f64) -> Result<TriangleMesh> {
    let p = |x, y, z| Vec3::new(x, y, z);
    let l = Label::Animal;
    let mut m = TriangleMesh::empty(l);
    m.append(capsule(p(-0.45, 0.55, 0.0), p(0.3, 0.55, 0.0), 0.15, l));
    for x in [-0.4, 0.25] {
        for z in [-0.09, 0.09] {
            m.append(capsule(p(x, 0.05, z), p(x, 0.5, z), 0.05, l));
        }
    }
    m.append(capsule(p(0.48, 0.68, 0.0), p(0.48, 0.68, 0.0), 0.12, l));
    let s = height / 0.8;
    let sx = height * length_ratio / 1.2;
    let m = m.map_vertices(|v| Vec3::new(v.x * sx, v.y * s, v.z * s));
    TriangleMesh::new(m.vertices, m.triangles, l)
}

/// Ellipsoidal shrub resting on the ground.
pub fn shrub(height: f64, width: f64) -> Result<TriangleMesh> {
    let l = Label::Clutter;
    let unit = capsule(Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 1.0, 0.0), 1.0, l);
    let m = unit.map_vertices(|v| Vec3::new(v.x * width / 2.0, v.y * height / 2.0, v.z * width / 2.0));
    TriangleMesh::new(m.vertices, m.triangles, l)
}
