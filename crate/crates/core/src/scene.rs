//! Scene simulation: animated actors seen through the tower optics,
//! rasterized per beam, converted to power and then to sensor voltages.

use serde::{Deserialize, Serialize};

use crate::config::{Config, RadiometrySection};
use crate::error::{Error, Result};
use crate::geom::{Bbox2, Point2, Vec3};
use crate::mesh::{Label, TriangleMesh};
use crate::optics::{build_virtual_beams, vpa_at_plane, SensorTowerConfig, VirtualBeam, VpaQuad};
use crate::radiometry::{amplify, convolve_response, RadiometryParams, SensorResponseParams};
use crate::raster::{project_point, project_world, ProjectedTriangle, Rasterizer};
use crate::rng::stream_rng;
use crate::trajectory::{Pose, Trajectory};

/// RNG stream used for sensor noise.
pub(crate) const NOISE_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Actor {
    pub mesh: TriangleMesh,
    pub trajectory: Trajectory,
    pub temperature_k: f64,
}

/// Simulation knobs shared by every event of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub tower: SensorTowerConfig,
    pub response: SensorResponseParams,
    pub radiometry: RadiometrySection,
    /// Squares per metre in the projection plane.
    pub grid_resolution: f64,
    pub oversample: usize,
    pub agc_peak_fraction: f64,
}

impl SimSettings {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let s = SimSettings {
            tower: SensorTowerConfig::from_section(&cfg.tower)?,
            response: SensorResponseParams::from_section(&cfg.sensor_response)?,
            radiometry: cfg.radiometry.clone(),
            grid_resolution: cfg.simulation.grid_resolution_per_m,
            oversample: cfg.simulation.oversample,
            agc_peak_fraction: cfg.simulation.agc_peak_fraction,
        };
        s.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grid_resolution >= 100.0) {
            return Err(Error::InvalidInput(format!(
                "grid resolution must be >= 100 squares/m, got {}",
                self.grid_resolution
            )));
        }
        if self.oversample == 0 {
            return Err(Error::InvalidInput("oversample must be >= 1".into()));
        }
        if !(self.agc_peak_fraction > 0.0 && self.agc_peak_fraction <= 1.0) {
            return Err(Error::InvalidInput("agc_peak_fraction must be in (0,1]".into()));
        }
        let r = &self.radiometry;
        if !(r.atmospheric_transmission > 0.0 && r.atmospheric_transmission <= 1.0) {
            return Err(Error::InvalidInput("atmospheric_transmission must be in (0,1]".into()));
        }
        if !(r.background_temperature_k > 0.0) {
            return Err(Error::InvalidInput("background temperature must be > 0 K".into()));
        }
        self.response.validate()
    }

    pub fn duration_s(&self) -> f64 {
        self.tower.samples_per_event as f64 / self.tower.sample_rate
    }
}

/// Descriptive metadata carried with an event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMeta {
    pub id: String,
    pub label: Label,
    pub speed_mps: Option<f64>,
    pub theta_rad: Option<f64>,
    pub range_m: Option<f64>,
    pub seed: u64,
    #[serde(default)]
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub actors: Vec<Actor>,
    pub settings: SimSettings,
    pub seed: u64,
    /// Selects the per-event noise stream.
    pub event_index: u64,
    pub meta: EventMeta,
    /// Enforce the 1–3 m/s and 5–10 m envelope on line trajectories.
    pub enforce_envelope: bool,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        self.settings.validate()?;
        let intruders = self.actors.iter().filter(|a| a.mesh.label_hint.is_intruder()).count();
        if intruders > 1 {
            return Err(Error::InvalidInput(format!(
                "at most one intruder per scene, got {intruders}"
            )));
        }
        for a in &self.actors {
            a.mesh.validate()?;
            a.trajectory.validate()?;
            if self.enforce_envelope && matches!(a.trajectory, Trajectory::Line { .. }) {
                a.trajectory.check_envelope()?;
            }
            if !(a.temperature_k > 0.0) {
                return Err(Error::InvalidInput("actor temperature must be > 0 K".into()));
            }
        }
        Ok(())
    }

    /// Label of the intruder actor, clutter when there is none.
    pub fn label(&self) -> Label {
        self.actors
            .iter()
            .map(|a| a.mesh.label_hint)
            .find(|l| l.is_intruder())
            .unwrap_or(Label::Clutter)
    }
}

/// Eight channels of `samples_per_event` volts, channel-major in the order
/// `A,B,C,D,L1,L2,R1,R2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub channels: [Vec<f64>; 8],
    pub meta: EventMeta,
}

impl Event {
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn label(&self) -> Label {
        self.meta.label
    }
}

/// Per-beam projected area over time, at the internal simulation rate.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageTrace {
    pub beams: Vec<VirtualBeam>,
    /// `area[actor][beam][step]` in m^2 at the actor's projection plane.
    pub area: Vec<Vec<Vec<f64>>>,
    /// Distance from the lenslet centre to the footprint centroid.
    pub distance: Vec<Vec<Vec<f64>>>,
    pub dt: f64,
}

/// Clean differential power per channel at the internal rate.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerTrace {
    pub channels: [Vec<f64>; 8],
    pub dt: f64,
    /// Whether the intruder (if any) was ever seen by a beam.
    pub intruder_seen: bool,
}

struct LensletView {
    center: Vec3,
    beams: Vec<usize>,
}

fn lenslet_views(beams: &[VirtualBeam]) -> Vec<LensletView> {
    let mut views: Vec<LensletView> = Vec::new();
    for b in beams {
        match views.iter_mut().find(|v| (v.center - b.origin).norm() < 1e-12) {
            Some(v) => v.beams.push(b.id),
            None => views.push(LensletView {
                center: b.origin,
                beams: vec![b.id],
            }),
        }
    }
    views
}

/// Per-beam coverage of every actor at every internal time step.
pub fn coverage_trace(spec: &SceneSpec) -> Result<CoverageTrace> {
    spec.validate()?;
    let s = &spec.settings;
    let beams = build_virtual_beams(&s.tower)?;
    let views = lenslet_views(&beams);
    let steps = s.tower.samples_per_event * s.oversample;
    let dt = 1.0 / (s.tower.sample_rate * s.oversample as f64);
    let res = s.grid_resolution;
    let mut raster = Rasterizer::new();
    let mut area = Vec::with_capacity(spec.actors.len());
    let mut distance = Vec::with_capacity(spec.actors.len());

    for actor in &spec.actors {
        let mut a_tr = vec![vec![0.0; steps]; beams.len()];
        let mut d_tr = vec![vec![0.0; steps]; beams.len()];
        let height = actor.mesh.height();
        let corners = actor.mesh.bbox_corners();
        let mut world = vec![Vec3::default(); actor.mesh.vertices.len()];
        let mut last: Option<(Pose, Vec<(usize, f64, f64)>)> = None;
        let mut projected: Vec<ProjectedTriangle> = Vec::new();

        for k in 0..steps {
            let t = k as f64 * dt;
            let Some(pose) = actor.trajectory.pose(t, height) else {
                last = None;
                continue;
            };
            if let Some((p, hits)) = &last {
                if *p == pose {
                    for &(b, a, d) in hits {
                        a_tr[b][k] = a;
                        d_tr[b][k] = d;
                    }
                    continue;
                }
            }
            let plane_z = pose.position.z;
            let quads = vpa_at_plane(&beams, plane_z)?;
            let world_corners: Vec<Vec3> = corners.iter().map(|&c| pose.apply(c)).collect();
            let mut hits = Vec::new();
            let mut transformed = false;
            for view in &views {
                let Some(bb) = projected_bbox(&world_corners, view.center, plane_z) else {
                    continue;
                };
                let candidates: Vec<&VpaQuad> = view
                    .beams
                    .iter()
                    .map(|&b| &quads[b])
                    .filter(|q| q.bbox().intersects(&bb))
                    .collect();
                if candidates.is_empty() {
                    continue;
                }
                if !transformed {
                    for (w, &v) in world.iter_mut().zip(&actor.mesh.vertices) {
                        *w = pose.apply(v);
                    }
                    transformed = true;
                }
                projected.clear();
                projected.extend(project_world(&world, &actor.mesh.triangles, view.center, plane_z)?);
                for q in candidates {
                    let a = raster.coverage(&projected, &q.corners, res);
                    if a > 0.0 {
                        let c = q.centroid();
                        let d = (Vec3::new(c.x, c.y, plane_z) - view.center).norm();
                        a_tr[q.beam_id][k] = a;
                        d_tr[q.beam_id][k] = d;
                        hits.push((q.beam_id, a, d));
                    }
                }
            }
            last = Some((pose, hits));
        }
        area.push(a_tr);
        distance.push(d_tr);
    }
    Ok(CoverageTrace {
        beams,
        area,
        distance,
        dt,
    })
}

/// Bounding box of the projected box corners; `None` when the actor is
/// entirely behind the lens plane.
fn projected_bbox(corners: &[Vec3], center: Vec3, plane_z: f64) -> Option<Bbox2> {
    let front: Vec<&Vec3> = corners.iter().filter(|c| c.z > center.z + 1e-9).collect();
    if front.is_empty() {
        return None;
    }
    if front.len() < corners.len() {
        // Straddling box: no cheap bound, test every beam.
        return Some(Bbox2 {
            min: Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
            max: Point2::new(f64::INFINITY, f64::INFINITY),
        });
    }
    let pts: Vec<Point2> = front.iter().map(|&&c| project_point(c, center, plane_z)).collect();
    Some(Bbox2::of(&pts))
}

/// Coverage converted to differential power per channel.
pub fn power_trace(spec: &SceneSpec) -> Result<PowerTrace> {
    let cov = coverage_trace(spec)?;
    let s = &spec.settings;
    let steps = s.tower.samples_per_event * s.oversample;
    let mut channels: [Vec<f64>; 8] = Default::default();
    for c in &mut channels {
        *c = vec![0.0; steps];
    }
    let mut intruder_seen = false;
    for (ai, actor) in spec.actors.iter().enumerate() {
        for b in &cov.beams {
            let lens = &s.tower.lenses[b.lens];
            let params = RadiometryParams::for_lens(
                &s.radiometry,
                lens.transmission,
                lens.filter_fraction,
                lens.aperture_area,
                actor.temperature_k,
            );
            params.validate()?;
            let factor = params.power_factor() * b.polarity.sign();
            let out = &mut channels[b.channel.index()];
            for k in 0..steps {
                let a = cov.area[ai][b.id][k];
                if a > 0.0 {
                    let d = cov.distance[ai][b.id][k];
                    out[k] += factor * a / (d * d);
                    if actor.mesh.label_hint.is_intruder() {
                        intruder_seen = true;
                    }
                }
            }
        }
    }
    Ok(PowerTrace {
        channels,
        dt: cov.dt,
        intruder_seen,
    })
}

/// Sensor output before gain, offset and noise, at the output rate. The
/// first power sample is taken as the pre-event baseline.
pub fn clean_response(spec: &SceneSpec, power: &PowerTrace) -> [Vec<f64>; 8] {
    let s = &spec.settings;
    let os = s.oversample;
    let n = s.tower.samples_per_event;
    let mut out: [Vec<f64>; 8] = Default::default();
    for (ch, w) in power.channels.iter().enumerate() {
        let base = w.first().copied().unwrap_or(0.0);
        let centred: Vec<f64> = w.iter().map(|x| x - base).collect();
        let v = convolve_response(&centred, &s.response, power.dt);
        out[ch] = (0..n).map(|i| v[i * os]).collect();
    }
    out
}

/// Static per-event gain placing the clean peak at `agc_peak_fraction` of
/// the headroom around the DC offset.
pub fn agc_gain(clean: &[Vec<f64>; 8], p: &SensorResponseParams, fraction: f64) -> f64 {
    let peak = clean
        .iter()
        .flat_map(|c| c.iter())
        .fold(0.0f64, |m, x| m.max(x.abs()));
    if peak == 0.0 {
        return p.gain;
    }
    fraction * (p.clip_high - p.dc_offset).min(p.dc_offset - p.clip_low) / peak
}

/// Full chain: coverage, power, response, AGC, noise and clipping.
pub fn simulate_event(spec: &SceneSpec) -> Result<Event> {
    let power = power_trace(spec)?;
    let clean = clean_response(spec, &power);
    let s = &spec.settings;
    let gain = agc_gain(&clean, &s.response, s.agc_peak_fraction);
    let mut rng = stream_rng(spec.seed, spec.event_index, NOISE_STREAM);
    let mut channels: [Vec<f64>; 8] = Default::default();
    let mut clipped = false;
    for (ch, v) in clean.iter().enumerate() {
        let out = amplify(v, &s.response, gain, &mut rng);
        clipped |= out
            .iter()
            .any(|&x| x <= s.response.clip_low || x >= s.response.clip_high);
        channels[ch] = out;
    }
    let mut meta = spec.meta.clone();
    meta.label = spec.label();
    meta.seed = spec.seed;
    if meta.label.is_intruder() && !power.intruder_seen {
        meta.flags.push("no_crossing".into());
    }
    if clipped {
        meta.flags.push("clipped".into());
    }
    Ok(Event { channels, meta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{human, shrub};

    pub(crate) fn settings() -> SimSettings {
        SimSettings::from_config(&Config::default()).unwrap()
    }

    fn walk_spec(range: f64, heading: f64) -> SceneSpec {
        let s = settings();
        let t_mid = s.duration_s() / 2.0;
        SceneSpec {
            actors: vec![Actor {
                mesh: human(1.75).unwrap(),
                trajectory: Trajectory::Line {
                    anchor: Vec3::new(0.0, 0.0, range),
                    speed: 1.5,
                    heading,
                    t_mid,
                    half_length: 10.0,
                },
                temperature_k: 305.0,
            }],
            settings: s,
            seed: 3,
            event_index: 0,
            meta: EventMeta {
                id: "t".into(),
                label: Label::Human,
                speed_mps: Some(1.5),
                theta_rad: Some(heading),
                range_m: Some(range),
                seed: 3,
                flags: vec![],
            },
            enforce_envelope: true,
        }
    }

    #[test]
    fn walking_human_lights_every_channel() {
        let ev = simulate_event(&walk_spec(5.0, 0.0)).unwrap();
        assert_eq!(ev.len(), 1024);
        for c in &ev.channels {
            let mean = c.iter().sum::<f64>() / c.len() as f64;
            let peak = c.iter().fold(0.0f64, |m, x| m.max((x - mean).abs()));
            assert!(peak > 0.1, "{peak}");
        }
        assert!(ev.meta.flags.is_empty(), "{:?}", ev.meta.flags);
    }

    #[test]
    fn static_shrub_is_silent() {
        let mut spec = walk_spec(5.0, 0.0);
        spec.actors = vec![Actor {
            mesh: shrub(1.2, 0.8).unwrap(),
            trajectory: Trajectory::Oscillation {
                base: Vec3::new(0.3, 0.0, 6.0),
                amplitude: 0.0,
                frequency: 1.0,
                phase: 0.0,
                direction: 0.0,
                gusts: vec![],
            },
            temperature_k: 298.0,
        }];
        let mut s = spec.settings.clone();
        s.response.noise_std = 0.0;
        spec.settings = s;
        let ev = simulate_event(&spec).unwrap();
        assert_eq!(ev.label(), Label::Clutter);
        for c in &ev.channels {
            assert!(c.iter().all(|&x| x == spec.settings.response.dc_offset));
        }
    }

    #[test]
    fn two_intruders_are_rejected() {
        let mut spec = walk_spec(5.0, 0.0);
        spec.actors.push(spec.actors[0].clone());
        assert!(simulate_event(&spec).is_err());
    }

    #[test]
    fn intruder_outside_the_field_is_flagged() {
        let mut spec = walk_spec(5.0, 0.0);
        if let Trajectory::Line { anchor, half_length, .. } = &mut spec.actors[0].trajectory {
            anchor.x = 40.0;
            *half_length = 1.0;
        }
        let ev = simulate_event(&spec).unwrap();
        assert!(ev.meta.flags.contains(&"no_crossing".to_string()));
    }

    #[test]
    fn slow_walk_is_outside_the_envelope() {
        let mut spec = walk_spec(5.0, 0.0);
        if let Trajectory::Line { speed, .. } = &mut spec.actors[0].trajectory {
            *speed = 0.5;
        }
        assert!(simulate_event(&spec).is_err());
        spec.enforce_envelope = false;
        assert!(simulate_event(&spec).is_ok());
    }
}
