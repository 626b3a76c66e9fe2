//! Virtual-beam geometry of the sensor tower.
//!
//! Each lenslet is an ideal pinhole. A pixel rectangle in the focal plane
//! and a lenslet optical centre define a beam: the four rays from the pixel
//! corners through the centre. Intersecting the beams with a vertical plane
//! at range `R` gives the Virtual Pixel Array (VPA) footprint of each pixel.
//!
//! World frame: `x` to the right of the tower, `y` height above ground, `z`
//! range away from the tower face.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::{ChannelSection, LensSection, TowerSection};
use crate::error::{Error, Result};
use crate::geom::{point_in_convex, signed_area, Bbox2, Point2, Vec3};

/// The eight tower channels, in recording order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChannelName {
    A,
    B,
    C,
    D,
    L1,
    L2,
    R1,
    R2,
}

impl ChannelName {
    pub const ALL: [ChannelName; 8] = [
        ChannelName::A,
        ChannelName::B,
        ChannelName::C,
        ChannelName::D,
        ChannelName::L1,
        ChannelName::L2,
        ChannelName::R1,
        ChannelName::R2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ChannelName::A => "A",
            ChannelName::B => "B",
            ChannelName::C => "C",
            ChannelName::D => "D",
            ChannelName::L1 => "L1",
            ChannelName::L2 => "L2",
            ChannelName::R1 => "R1",
            ChannelName::R2 => "R2",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Lens system each channel must be mounted behind.
    pub fn expected_lens(self) -> &'static str {
        match self {
            ChannelName::A | ChannelName::B => "multilens_AB",
            ChannelName::C | ChannelName::D => "multilens_CD",
            ChannelName::L1 | ChannelName::L2 => "spot_L",
            ChannelName::R1 | ChannelName::R2 => "spot_R",
        }
    }
}

impl fmt::Display for ChannelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChannelName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ChannelName::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown channel name `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LensKind {
    Spot,
    Multi,
}

/// A spot lens or a multi-lens (contiguous lenslets sharing one focal
/// point). Lenslet optical centres lie on a circle of radius `focal_length`
/// around the common focal point, at the given azimuths.
#[derive(Debug, Clone, PartialEq)]
pub struct LensSystem {
    pub name: String,
    pub kind: LensKind,
    pub focal_length: f64,
    pub aperture_area: f64,
    pub transmission: f64,
    pub filter_fraction: f64,
    /// Optical centre of the axial lenslet, `z = 0` at the tower face.
    pub mount: Vec3,
    pub yaw: f64,
    pub lenslet_azimuths: Vec<f64>,
}

impl LensSystem {
    pub fn from_section(name: &str, s: &LensSection) -> Result<Self> {
        let kind = match s.kind.as_str() {
            "spot" => LensKind::Spot,
            "multi" => LensKind::Multi,
            other => {
                return Err(Error::Config(format!(
                    "lens `{name}`: kind must be spot or multi, got `{other}`"
                )))
            }
        };
        let lens = LensSystem {
            name: name.to_string(),
            kind,
            focal_length: s.focal_length_m,
            aperture_area: s.aperture_area_m2,
            transmission: s.transmission,
            filter_fraction: s.filter_fraction,
            mount: Vec3::new(s.mount_x_m, s.mount_height_m, 0.0),
            yaw: s.yaw_rad,
            lenslet_azimuths: s.lenslet_azimuths_rad.clone(),
        };
        lens.validate()?;
        Ok(lens)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("lens `{}`: {m}", self.name)));
        match self.kind {
            LensKind::Spot if self.lenslet_azimuths.len() != 1 => {
                return bad("spot lens needs exactly one lenslet".into())
            }
            LensKind::Multi if self.lenslet_azimuths.len() < 2 => {
                return bad("multi-lens needs at least two lenslets".into())
            }
            _ => {}
        }
        if !(self.focal_length > 0.0) {
            return bad("focal_length_m must be > 0".into());
        }
        if !(self.aperture_area > 0.0) {
            return bad("aperture_area_m2 must be > 0".into());
        }
        for (v, k) in [(self.transmission, "transmission"), (self.filter_fraction, "filter_fraction")] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{k} must be in (0,1]"));
            }
        }
        if self.lenslet_azimuths.iter().any(|a| a.abs() >= std::f64::consts::FRAC_PI_2) {
            return bad("lenslet azimuths must lie within +-90 degrees".into());
        }
        Ok(())
    }

    pub fn aperture_radius(&self) -> f64 {
        (self.aperture_area / std::f64::consts::PI).sqrt()
    }

    fn to_world(&self, local: Vec3) -> Vec3 {
        self.mount + local.rotate_yaw(self.yaw)
    }

    /// World positions of the lenslet optical centres.
    pub fn lenslet_centers(&self) -> Vec<Vec3> {
        let f = self.focal_length;
        self.lenslet_azimuths
            .iter()
            .map(|&a| self.to_world(Vec3::new(f * a.sin(), 0.0, f * a.cos() - f)))
            .collect()
    }

    /// World position of a focal-plane point `(x, y)`.
    pub fn focal_point(&self, x: f64, y: f64) -> Vec3 {
        self.to_world(Vec3::new(x, y, -self.focal_length))
    }
}

/// Axis-aligned rectangle in focal-plane coordinates (m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        [(self.x0, self.y0), (self.x1, self.y0), (self.x1, self.y1), (self.x0, self.y1)]
    }

    fn overlaps(&self, o: &Rect) -> bool {
        self.x0 < o.x1 && o.x0 < self.x1 && self.y0 < o.y1 && o.y0 < self.y1
    }
}

/// Two differentially wired pixels side by side in the focal plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPair {
    pub positive: Rect,
    pub negative: Rect,
    pub vertical_offset: f64,
}

impl PixelPair {
    /// Pair centred at `(0, vertical_offset)`: positive pixel on the left,
    /// negative on the right, separated by `gap`.
    pub fn new(width: f64, height: f64, gap: f64, vertical_offset: f64) -> Self {
        let y0 = vertical_offset - height / 2.0;
        let y1 = vertical_offset + height / 2.0;
        PixelPair {
            positive: Rect { x0: -gap / 2.0 - width, x1: -gap / 2.0, y0, y1 },
            negative: Rect { x0: gap / 2.0, x1: gap / 2.0 + width, y0, y1 },
            vertical_offset,
        }
    }

    /// Degenerate pairs (empty pixels, overlapping polarities, mismatched
    /// shapes) would produce beams without a proper solid angle.
    pub fn validate(&self, aperture_radius: f64) -> Result<()> {
        for r in [&self.positive, &self.negative] {
            if !(r.width() > 0.0 && r.height() > 0.0) {
                return Err(Error::Geometry("pixel rectangle has zero area".into()));
            }
        }
        if self.positive.overlaps(&self.negative) {
            return Err(Error::Geometry(
                "positive and negative pixels overlap (degenerate beam)".into(),
            ));
        }
        let tol = 1e-12;
        if (self.positive.width() - self.negative.width()).abs() > tol
            || (self.positive.height() - self.negative.height()).abs() > tol
        {
            return Err(Error::Geometry("pixel rectangles are not congruent".into()));
        }
        if self.vertical_offset.abs() >= aperture_radius {
            return Err(Error::Geometry(format!(
                "vertical offset {} m exceeds aperture radius {} m",
                self.vertical_offset, aperture_radius
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub name: ChannelName,
    pub pixels: PixelPair,
    /// Index into [`SensorTowerConfig::lenses`].
    pub lens: usize,
}

/// Full geometric and optical description of the eight-sensor tower.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorTowerConfig {
    pub channels: Vec<Channel>,
    pub lenses: Vec<LensSystem>,
    pub sample_rate: f64,
    pub samples_per_event: usize,
}

impl SensorTowerConfig {
    pub fn from_section(s: &TowerSection) -> Result<Self> {
        let lenses = s
            .lenses
            .iter()
            .map(|(name, l)| LensSystem::from_section(name, l))
            .collect::<Result<Vec<_>>>()?;
        let channels = s
            .channels
            .iter()
            .map(|c| channel_from_section(c, &lenses))
            .collect::<Result<Vec<_>>>()?;
        let tower = SensorTowerConfig {
            channels,
            lenses,
            sample_rate: s.sample_rate_hz,
            samples_per_event: s.samples_per_event,
        };
        tower.validate()?;
        Ok(tower)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.len() != 8 {
            return Err(Error::Config(format!(
                "tower needs exactly 8 channels, got {}",
                self.channels.len()
            )));
        }
        for (ch, expected) in self.channels.iter().zip(ChannelName::ALL) {
            if ch.name != expected {
                return Err(Error::Config(format!(
                    "channel order must be A,B,C,D,L1,L2,R1,R2; found {} where {} expected",
                    ch.name, expected
                )));
            }
            let lens = &self.lenses[ch.lens];
            if lens.name != expected.expected_lens() {
                return Err(Error::Config(format!(
                    "channel {} must use lens {}, not {}",
                    ch.name,
                    expected.expected_lens(),
                    lens.name
                )));
            }
            let want_kind = if lens.name.starts_with("spot") { LensKind::Spot } else { LensKind::Multi };
            if lens.kind != want_kind {
                return Err(Error::Config(format!("lens {} has the wrong kind", lens.name)));
            }
            ch.pixels
                .validate(lens.aperture_radius())
                .map_err(|e| Error::Config(format!("channel {}: {e}", ch.name)))?;
        }
        if !(self.sample_rate > 0.0) {
            return Err(Error::Config("sample_rate_hz must be > 0".into()));
        }
        if self.samples_per_event < 8 {
            return Err(Error::Config("samples_per_event must be >= 8".into()));
        }
        Ok(())
    }

    pub fn channel(&self, name: ChannelName) -> &Channel {
        &self.channels[name.index()]
    }

    pub fn lens_of(&self, name: ChannelName) -> &LensSystem {
        &self.lenses[self.channel(name).lens]
    }

    /// Height of the lens system a channel looks through.
    pub fn mounting_height(&self, name: ChannelName) -> f64 {
        self.lens_of(name).mount.y
    }
}

fn channel_from_section(c: &ChannelSection, lenses: &[LensSystem]) -> Result<Channel> {
    let name: ChannelName = c.name.parse()?;
    let lens = lenses
        .iter()
        .position(|l| l.name == c.lens)
        .ok_or_else(|| Error::Config(format!("channel {}: unknown lens `{}`", c.name, c.lens)))?;
    Ok(Channel {
        name,
        pixels: PixelPair::new(c.pixel_width_m, c.pixel_height_m, c.pixel_gap_m, c.vertical_offset_m),
        lens,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn sign(self) -> f64 {
        match self {
            Polarity::Positive => 1.0,
            Polarity::Negative => -1.0,
        }
    }
}

/// One pixel seen through one lenslet.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualBeam {
    pub id: usize,
    pub channel: ChannelName,
    pub lens: usize,
    pub lenslet_index: usize,
    pub polarity: Polarity,
    /// Lenslet optical centre.
    pub origin: Vec3,
    /// Unit directions of the corner rays, in pixel-corner order.
    pub rays: [Vec3; 4],
}

/// Beams for every channel of the tower: one per (pixel, lenslet) pair,
/// ordered by channel, lenslet, then polarity.
pub fn build_virtual_beams(tower: &SensorTowerConfig) -> Result<Vec<VirtualBeam>> {
    build_channel_beams(&tower.channels, &tower.lenses)
}

/// Beams for an arbitrary subset of channels.
pub fn build_channel_beams(channels: &[Channel], lenses: &[LensSystem]) -> Result<Vec<VirtualBeam>> {
    let mut beams = Vec::new();
    for ch in channels {
        let lens = lenses
            .get(ch.lens)
            .ok_or_else(|| Error::Config(format!("channel {}: lens index out of range", ch.name)))?;
        ch.pixels.validate(lens.aperture_radius())?;
        for (li, center) in lens.lenslet_centers().into_iter().enumerate() {
            for (polarity, rect) in [
                (Polarity::Positive, ch.pixels.positive),
                (Polarity::Negative, ch.pixels.negative),
            ] {
                let corners = rect.corners();
                let rays = corners.map(|(x, y)| (center - lens.focal_point(x, y)).normalized());
                check_rays(&rays, ch.name)?;
                beams.push(VirtualBeam {
                    id: beams.len(),
                    channel: ch.name,
                    lens: ch.lens,
                    lenslet_index: li,
                    polarity,
                    origin: center,
                    rays,
                });
            }
        }
    }
    Ok(beams)
}

fn check_rays(rays: &[Vec3; 4], ch: ChannelName) -> Result<()> {
    for i in 0..4 {
        for j in i + 1..4 {
            if rays[i].cross(rays[j]).norm() < 1e-12 {
                return Err(Error::Geometry(format!("channel {ch}: parallel corner rays")));
            }
        }
    }
    Ok(())
}

/// Beam footprint in the plane `z = range`, in that plane's `(x, y)`
/// coordinates (m).
#[derive(Debug, Clone, PartialEq)]
pub struct VpaQuad {
    pub beam_id: usize,
    pub corners: [Point2; 4],
}

impl VpaQuad {
    pub fn area(&self) -> f64 {
        signed_area(&self.corners).abs()
    }

    pub fn centroid(&self) -> Point2 {
        let (sx, sy) = self
            .corners
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        Point2::new(sx / 4.0, sy / 4.0)
    }

    pub fn bbox(&self) -> Bbox2 {
        Bbox2::of(&self.corners)
    }

    pub fn contains(&self, p: Point2) -> bool {
        point_in_convex(&self.corners, p)
    }
}

/// Intersect one beam with the plane `z = range`.
pub fn beam_footprint(beam: &VirtualBeam, range: f64) -> Result<VpaQuad> {
    let dz0 = range - beam.origin.z;
    if dz0.abs() < 1e-12 {
        return Err(Error::Geometry(format!(
            "plane z = {range} passes through the optical centre of beam {}",
            beam.id
        )));
    }
    let mut corners = [Point2::default(); 4];
    for (k, ray) in beam.rays.iter().enumerate() {
        if ray.z.abs() < 1e-12 || (dz0 / ray.z) <= 0.0 {
            return Err(Error::Geometry(format!(
                "beam {} ({} lenslet {}) is parallel to or points away from the plane z = {range}",
                beam.id, beam.channel, beam.lenslet_index
            )));
        }
        let t = dz0 / ray.z;
        corners[k] = Point2::new(beam.origin.x + t * ray.x, beam.origin.y + t * ray.y);
    }
    Ok(VpaQuad {
        beam_id: beam.id,
        corners,
    })
}

/// The VPA at range `R`: one quadrilateral per beam. Beams that cannot
/// reach the plane are collected into a single error.
pub fn vpa_at_plane(beams: &[VirtualBeam], range: f64) -> Result<Vec<VpaQuad>> {
    if !(range > 0.0) {
        return Err(Error::Domain(format!("plane range must be > 0, got {range}")));
    }
    let mut quads = Vec::with_capacity(beams.len());
    let mut failed = Vec::new();
    for b in beams {
        match beam_footprint(b, range) {
            Ok(q) => quads.push(q),
            Err(_) => failed.push(b.id),
        }
    }
    if !failed.is_empty() {
        return Err(Error::Geometry(format!(
            "beams {failed:?} do not intersect the plane z = {range}"
        )));
    }
    Ok(quads)
}

/// Minimum vertical gap between rows B and C over a range interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowSeparation {
    /// `None` when the beam set has no B/C row pair.
    pub min_gap_m: Option<f64>,
    pub at_range_m: Option<f64>,
}

impl RowSeparation {
    pub fn separated(&self) -> bool {
        self.min_gap_m.is_none_or(|g| g >= 0.0)
    }
}

/// Signed gap between the lowest point of row B and the highest point of
/// row C, minimised over `[r_min, r_max]`; negative means the rows overlap.
pub fn check_row_separation(beams: &[VirtualBeam], r_min: f64, r_max: f64) -> Result<RowSeparation> {
    let upper: Vec<&VirtualBeam> = beams.iter().filter(|b| b.channel == ChannelName::B).collect();
    let lower: Vec<&VirtualBeam> = beams.iter().filter(|b| b.channel == ChannelName::C).collect();
    if upper.is_empty() || lower.is_empty() {
        return Ok(RowSeparation {
            min_gap_m: None,
            at_range_m: None,
        });
    }
    const STEPS: usize = 100;
    let mut best: Option<(f64, f64)> = None;
    for i in 0..=STEPS {
        let r = r_min + (r_max - r_min) * i as f64 / STEPS as f64;
        let mut b_low = f64::INFINITY;
        for b in &upper {
            let q = beam_footprint(b, r)?;
            b_low = q.corners.iter().fold(b_low, |m, p| m.min(p.y));
        }
        let mut c_high = f64::NEG_INFINITY;
        for b in &lower {
            let q = beam_footprint(b, r)?;
            c_high = q.corners.iter().fold(c_high, |m, p| m.max(p.y));
        }
        let gap = b_low - c_high;
        if best.is_none_or(|(g, _)| gap < g) {
            best = Some((gap, r));
        }
    }
    Ok(RowSeparation {
        min_gap_m: best.map(|b| b.0),
        at_range_m: best.map(|b| b.1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;

    fn default_tower() -> SensorTowerConfig {
        SensorTowerConfig::from_section(&Config::default().tower).unwrap()
    }

    fn spot(focal: f64) -> LensSystem {
        LensSystem {
            name: "spot_L".into(),
            kind: LensKind::Spot,
            focal_length: focal,
            aperture_area: 1e-4,
            transmission: 1.0,
            filter_fraction: 1.0,
            mount: Vec3::new(0.0, 1.0, 0.0),
            yaw: 0.0,
            lenslet_azimuths: vec![0.0],
        }
    }

    #[test]
    fn spot_lens_gives_two_beams_of_opposite_polarity() {
        let lens = spot(0.025);
        let ch = Channel {
            name: ChannelName::L1,
            pixels: PixelPair::new(0.001, 0.002, 0.0002, 0.0),
            lens: 0,
        };
        let beams = build_channel_beams(&[ch], &[lens]).unwrap();
        assert_eq!(beams.len(), 2);
        assert_eq!(beams[0].polarity.sign(), -beams[1].polarity.sign());
    }

    #[test]
    fn multi_lens_beams_alternate_across_the_fan() {
        let tower = default_tower();
        let beams = build_virtual_beams(&tower).unwrap();
        let a: Vec<_> = beams.iter().filter(|b| b.channel == ChannelName::A).collect();
        assert_eq!(a.len(), 12);
        let mut by_x: Vec<(f64, f64)> = a
            .iter()
            .map(|b| (beam_footprint(b, 5.0).unwrap().centroid().x, b.polarity.sign()))
            .collect();
        by_x.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
        for w in by_x.windows(2) {
            assert_eq!(w[0].1, -w[1].1);
        }
    }

    #[test]
    fn centred_pair_is_symmetric_about_axis() {
        let ch = Channel {
            name: ChannelName::L1,
            pixels: PixelPair::new(0.001, 0.002, 0.0002, 0.0),
            lens: 0,
        };
        let beams = build_channel_beams(&[ch], &[spot(0.025)]).unwrap();
        let q0 = beam_footprint(&beams[0], 6.0).unwrap();
        let q1 = beam_footprint(&beams[1], 6.0).unwrap();
        assert!((q0.centroid().x + q1.centroid().x).abs() < 1e-12);
        assert!((q0.centroid().y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn beam_count_is_pixels_times_lenslets() {
        let tower = default_tower();
        let beams = build_virtual_beams(&tower).unwrap();
        let expected: usize = tower
            .channels
            .iter()
            .map(|c| 2 * tower.lenses[c.lens].lenslet_azimuths.len())
            .sum();
        assert_eq!(beams.len(), expected);
    }

    #[test]
    fn overlapping_pixels_are_rejected() {
        let mut pair = PixelPair::new(0.001, 0.002, 0.0002, 0.0);
        pair.negative.x0 = -0.0005;
        let ch = Channel {
            name: ChannelName::L1,
            pixels: pair,
            lens: 0,
        };
        assert!(build_channel_beams(&[ch], &[spot(0.025)]).is_err());
    }

    #[test]
    fn parallel_beams_are_reported() {
        let mut lens = spot(0.025);
        lens.yaw = std::f64::consts::FRAC_PI_2 - 0.001;
        let ch = Channel {
            name: ChannelName::L1,
            pixels: PixelPair::new(0.001, 0.002, 0.0002, 0.0),
            lens: 0,
        };
        let beams = build_channel_beams(&[ch], &[lens]).unwrap();
        let err = vpa_at_plane(&beams, 5.0).unwrap_err();
        assert!(err.to_string().contains("beams"), "{err}");
        assert!(vpa_at_plane(&beams, -1.0).is_err());
    }

    #[test]
    fn default_rows_stay_separated_and_zero_offset_rows_overlap() {
        let tower = default_tower();
        let beams = build_virtual_beams(&tower).unwrap();
        let rep = check_row_separation(&beams, 5.0, 10.0).unwrap();
        assert!(rep.min_gap_m.unwrap() >= 0.0, "{rep:?}");

        let mut zero = tower.clone();
        for (name, off) in [
            (ChannelName::A, -0.0007),
            (ChannelName::B, 0.0007),
            (ChannelName::C, -0.0007),
            (ChannelName::D, 0.0007),
        ] {
            zero.channels[name.index()].pixels = PixelPair::new(0.001, 0.0012, 0.0002, off);
        }
        let beams = build_virtual_beams(&zero).unwrap();
        let at10 = check_row_separation(&beams, 10.0, 10.0).unwrap();
        assert!(at10.min_gap_m.unwrap() < 0.0);
    }

    #[test]
    fn single_multilens_has_no_row_pair() {
        let tower = default_tower();
        let ab: Vec<Channel> = tower.channels[..2].to_vec();
        let beams = build_channel_beams(&ab, &tower.lenses).unwrap();
        let rep = check_row_separation(&beams, 5.0, 10.0).unwrap();
        assert_eq!(rep.min_gap_m, None);
        assert!(rep.separated());
    }

    #[test]
    fn config_validation_rejects_bad_towers() {
        let mut s = Config::default().tower;
        s.channels.swap(0, 1);
        assert!(SensorTowerConfig::from_section(&s).is_err());

        let mut s = Config::default().tower;
        s.channels[0].lens = "spot_L".into();
        assert!(SensorTowerConfig::from_section(&s).is_err());

        let mut s = Config::default().tower;
        s.lenses.get_mut("spot_R").unwrap().lenslet_azimuths_rad = vec![0.0, 0.1];
        assert!(SensorTowerConfig::from_section(&s).is_err());

        let mut s = Config::default().tower;
        s.channels[3].vertical_offset_m = 0.02;
        assert!(SensorTowerConfig::from_section(&s).is_err());
    }
}
