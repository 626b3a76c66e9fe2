//! Randomized scene sampling, dataset generation and event file I/O.
//!
//! Layout of a dataset directory:
//!
//! ```text
//! manifest.json
//! config.json
//! events/evt_00000.csv   8 columns A..R2, one row per sample
//! events/evt_00000.json  sidecar metadata
//! ```

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Config, GeneratorSection};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::mesh::{animal, human, shrub, Label};
use crate::optics::{beam_footprint, build_virtual_beams, ChannelName, VirtualBeam};
use crate::rng::stream_rng;
use crate::scene::{simulate_event, Actor, Event, EventMeta, SceneSpec, SimSettings};
use crate::trajectory::{Gust, Trajectory, RANGE_LIMITS};

/// RNG stream used for scene sampling.
const SCENE_STREAM: u64 = 0;

pub const CSV_HEADER: &str = "A,B,C,D,L1,L2,R1,R2";

/// Number of events per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub human: usize,
    pub animal: usize,
    pub clutter: usize,
}

impl ClassCounts {
    pub fn total(&self) -> usize {
        self.human + self.animal + self.clutter
    }

    /// Label of event `i` when events are laid out class by class.
    pub fn label_of(&self, i: usize) -> Label {
        if i < self.human {
            Label::Human
        } else if i < self.human + self.animal {
            Label::Animal
        } else {
            Label::Clutter
        }
    }

    pub fn get(&self, l: Label) -> usize {
        match l {
            Label::Human => self.human,
            Label::Animal => self.animal,
            Label::Clutter => self.clutter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub label: Label,
    pub csv: String,
    pub meta: String,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub sample_rate_hz: f64,
    pub samples_per_event: usize,
    pub counts: ClassCounts,
    pub events: Vec<ManifestEntry>,
}

pub fn event_id(i: usize) -> String {
    format!("evt_{i:05}")
}

/// Tangent of the widest beam azimuth, measured from the `+z` axis.
pub fn field_half_width(beams: &[VirtualBeam]) -> f64 {
    beams
        .iter()
        .flat_map(|b| b.rays.iter())
        .map(|r| (r.x / r.z).abs())
        .fold(0.0, f64::max)
}

/// Range interval at the axis crossing for which a straight walk at
/// inclination `theta` stays within the range limits while inside a field
/// of half-width `tan_half` (tangent). Falls back to the full limits when
/// the interval is empty.
pub fn feasible_range(theta: f64, tan_half: f64) -> (f64, f64) {
    let (s, c) = (theta.abs().sin(), theta.cos());
    let far = tan_half * s / (c - tan_half * s);
    let near = tan_half * s / (c + tan_half * s);
    if !(far.is_finite() && far >= 0.0) {
        return RANGE_LIMITS;
    }
    let lo = RANGE_LIMITS.0 / (1.0 - near);
    let hi = RANGE_LIMITS.1 / (1.0 + far);
    if lo <= hi {
        (lo, hi)
    } else {
        RANGE_LIMITS
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.gen_range(r[0]..=r[1])
    } else {
        r[0]
    }
}

fn uniform_count(rng: &mut ChaCha8Rng, r: [usize; 2]) -> usize {
    if r[1] > r[0] {
        rng.gen_range(r[0]..=r[1])
    } else {
        r[0]
    }
}

/// A straight walk crossing the whole field of view.
pub fn sample_walk(
    rng: &mut ChaCha8Rng,
    g: &GeneratorSection,
    tan_half: f64,
    duration: f64,
    window_fraction: f64,
) -> (Trajectory, f64, f64, f64) {
    let speed = uniform(rng, g.speed_mps);
    let theta = uniform(rng, g.inclination_rad);
    let (lo, hi) = feasible_range(theta, tan_half);
    let lo = lo.max(g.range_m[0]);
    let hi = hi.min(g.range_m[1]).max(lo);
    let range = uniform(rng, [lo, hi]);
    let leftwards = rng.gen_bool(0.5);
    let heading = if leftwards { PI - theta } else { theta };
    let margin = (1.0 - window_fraction) / 2.0;
    let t_mid = uniform(rng, [margin * duration, (1.0 - margin) * duration]);
    let s = theta.abs().sin();
    let reach = tan_half * range / (theta.cos() - tan_half * s).max(0.2);
    let traj = Trajectory::Line {
        anchor: Vec3::new(0.0, 0.0, range),
        speed,
        heading,
        t_mid,
        half_length: reach + 2.0,
    };
    (traj, speed, theta, range)
}

/// A swaying shrub. With `shrub_placement = "beam"` it overlaps one beam
/// of a randomly chosen channel; with `"field"` its base lies anywhere
/// across the field of view (half-width tangent `tan_half`).
pub fn sample_shrub(
    rng: &mut ChaCha8Rng,
    g: &GeneratorSection,
    beams: &[VirtualBeam],
    tan_half: f64,
    duration: f64,
) -> Result<Actor> {
    let (x, range, width, height) = match g.shrub_placement.as_str() {
        "beam" => {
            let ch = ChannelName::ALL[rng.gen_range(0..8)];
            let candidates: Vec<&VirtualBeam> = beams.iter().filter(|b| b.channel == ch).collect();
            let beam = candidates[rng.gen_range(0..candidates.len())];
            let range = uniform(rng, g.shrub_range_m);
            let quad = beam_footprint(beam, range)?;
            let bb = quad.bbox();
            let width = uniform(rng, g.shrub_width_m);
            let min_h = (bb.min.y + 0.1).max(g.shrub_height_m[0]).min(g.shrub_height_m[1]);
            let height = uniform(rng, [min_h, g.shrub_height_m[1]]);
            (quad.centroid().x + uniform(rng, [-0.25, 0.25]) * width, range, width, height)
        }
        "field" => {
            let range = uniform(rng, g.shrub_range_m);
            let half = tan_half * range;
            let x = uniform(rng, [-half, half]);
            (x, range, uniform(rng, g.shrub_width_m), uniform(rng, g.shrub_height_m))
        }
        other => {
            return Err(Error::Config(format!(
                "generator.shrub_placement must be \"beam\" or \"field\", got \"{other}\""
            )))
        }
    };
    let n_gusts = uniform_count(rng, g.gusts_per_shrub);
    let gusts = (0..n_gusts)
        .map(|_| {
            let d = uniform(rng, g.gust_duration_s);
            Gust {
                start_s: uniform(rng, [-d / 2.0, duration - d / 2.0]),
                duration_s: d,
            }
        })
        .collect();
    Ok(Actor {
        mesh: shrub(height, width)?,
        trajectory: Trajectory::Oscillation {
            base: Vec3::new(x, 0.0, range),
            amplitude: uniform(rng, g.sway_amplitude_m),
            frequency: uniform(rng, g.sway_frequency_hz),
            phase: uniform(rng, [0.0, 2.0 * PI]),
            direction: uniform(rng, [0.0, PI]),
            gusts,
        },
        temperature_k: uniform(rng, g.shrub_temperature_k),
    })
}

/// Random scene for event `index` of class `label`.
pub fn sample_scene(cfg: &Config, settings: &SimSettings, label: Label, seed: u64, index: u64) -> Result<SceneSpec> {
    let g = &cfg.generator;
    let mut rng = stream_rng(seed, index, SCENE_STREAM);
    let beams = build_virtual_beams(&settings.tower)?;
    let tan_half = field_half_width(&beams);
    let duration = settings.duration_s();
    let wf = cfg.simulation.window_center_fraction;
    let mut meta = EventMeta {
        id: event_id(index as usize),
        label,
        speed_mps: None,
        theta_rad: None,
        range_m: None,
        seed,
        flags: Vec::new(),
    };
    let mut actors = Vec::new();
    match label {
        Label::Human | Label::Animal => {
            let mesh = if label == Label::Human {
                human(uniform(&mut rng, g.human_height_m))?
            } else {
                let h = uniform(&mut rng, g.animal_height_m);
                animal(h, uniform(&mut rng, g.animal_length_ratio))?
            };
            let temp = if label == Label::Human {
                uniform(&mut rng, g.human_temperature_k)
            } else {
                uniform(&mut rng, g.animal_temperature_k)
            };
            let (traj, speed, theta, range) = sample_walk(&mut rng, g, tan_half, duration, wf);
            meta.speed_mps = Some(speed);
            meta.theta_rad = Some(theta);
            meta.range_m = Some(range);
            actors.push(Actor {
                mesh,
                trajectory: traj,
                temperature_k: temp,
            });
        }
        Label::Clutter => {
            let n = uniform_count(&mut rng, g.shrub_count);
            for _ in 0..n {
                actors.push(sample_shrub(&mut rng, g, &beams, tan_half, duration)?);
            }
            meta.range_m = actors.first().map(|a| a.trajectory.range());
        }
    }
    Ok(SceneSpec {
        actors,
        settings: settings.clone(),
        seed,
        event_index: index,
        meta,
        enforce_envelope: true,
    })
}

/// Scene with no actors: sensor noise only.
pub fn idle_scene(settings: &SimSettings, seed: u64, index: u64) -> SceneSpec {
    SceneSpec {
        actors: Vec::new(),
        settings: settings.clone(),
        seed,
        event_index: index,
        meta: EventMeta {
            id: format!("idle_{index:05}"),
            label: Label::Clutter,
            speed_mps: None,
            theta_rad: None,
            range_m: None,
            seed,
            flags: vec!["idle".into()],
        },
        enforce_envelope: true,
    }
}

/// Simulate the events of a dataset in memory, ordered by event id.
pub fn simulate_events(cfg: &Config, counts: ClassCounts, seed: u64) -> Result<Vec<Event>> {
    let settings = SimSettings::from_config(cfg)?;
    (0..counts.total())
        .into_par_iter()
        .map(|i| {
            let spec = sample_scene(cfg, &settings, counts.label_of(i), seed, i as u64)?;
            simulate_event(&spec)
        })
        .collect()
}

/// Generate and write a dataset; returns its manifest.
pub fn generate_dataset(cfg: &Config, counts: ClassCounts, seed: u64, out: &Path) -> Result<Manifest> {
    let settings = SimSettings::from_config(cfg)?;
    let events_dir = out.join("events");
    fs::create_dir_all(&events_dir).map_err(|e| Error::io(&events_dir, e))?;
    let entries: Vec<ManifestEntry> = (0..counts.total())
        .into_par_iter()
        .map(|i| {
            let spec = sample_scene(cfg, &settings, counts.label_of(i), seed, i as u64)?;
            let ev = simulate_event(&spec)?;
            write_event(&ev, &events_dir)
        })
        .collect::<Result<_>>()?;
    let manifest = Manifest {
        schema_version: crate::config::SCHEMA_VERSION,
        seed,
        config_hash: cfg.hash(),
        sample_rate_hz: settings.tower.sample_rate,
        samples_per_event: settings.tower.samples_per_event,
        counts,
        events: entries,
    };
    write_json(&out.join("config.json"), cfg)?;
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Event voltages as CSV text.
pub fn event_csv(ev: &Event) -> String {
    let mut s = String::with_capacity(ev.len() * 8 * 16 + 32);
    s.push_str(CSV_HEADER);
    s.push('\n');
    for n in 0..ev.len() {
        for (c, ch) in ev.channels.iter().enumerate() {
            if c > 0 {
                s.push(',');
            }
            s.push_str(&format!("{:.8e}", ch[n]));
        }
        s.push('\n');
    }
    s
}

/// Writes `<id>.csv` and `<id>.json` into `dir`.
pub fn write_event(ev: &Event, dir: &Path) -> Result<ManifestEntry> {
    let csv_name = format!("{}.csv", ev.meta.id);
    let meta_name = format!("{}.json", ev.meta.id);
    let csv_path = dir.join(&csv_name);
    let mut f = fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    f.write_all(event_csv(ev).as_bytes())
        .map_err(|e| Error::io(&csv_path, e))?;
    write_json(&dir.join(&meta_name), &ev.meta)?;
    Ok(ManifestEntry {
        id: ev.meta.id.clone(),
        label: ev.meta.label,
        csv: format!("events/{csv_name}"),
        meta: format!("events/{meta_name}"),
        flags: ev.meta.flags.clone(),
    })
}

/// Parse event CSV text; `expected_rows` checks the sample count.
pub fn parse_event_csv(text: &str, path: &Path, expected_rows: Option<usize>) -> Result<[Vec<f64>; 8]> {
    if text.trim().is_empty() {
        return Err(Error::data(path, "empty event file"));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| Error::data(path, format!("bad header: {e}")))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != CSV_HEADER {
        return Err(Error::data(path, format!("header `{header}` is not `{CSV_HEADER}`")));
    }
    let mut channels: [Vec<f64>; 8] = Default::default();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::data(path, format!("row {}: {e}", i + 2)))?;
        if rec.len() != 8 {
            return Err(Error::data(path, format!("row {}: expected 8 fields, got {}", i + 2, rec.len())));
        }
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::data(path, format!("row {}: bad number `{field}`", i + 2)))?;
            if !v.is_finite() {
                return Err(Error::data(path, format!("row {}: non-finite value", i + 2)));
            }
            channels[c].push(v);
        }
    }
    let rows = channels[0].len();
    if rows == 0 {
        return Err(Error::data(path, "no samples"));
    }
    if let Some(n) = expected_rows {
        if rows != n {
            return Err(Error::data(path, format!("expected {n} rows, found {rows} (truncated?)")));
        }
    }
    Ok(channels)
}

/// Reads an event CSV and, when present, its JSON sidecar.
pub fn read_event(csv_path: &Path, expected_rows: Option<usize>) -> Result<Event> {
    let text = fs::read_to_string(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let channels = parse_event_csv(&text, csv_path, expected_rows)?;
    let sidecar = csv_path.with_extension("json");
    let meta = if sidecar.exists() {
        let t = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        serde_json::from_str(&t).map_err(|e| Error::data(&sidecar, e.to_string()))?
    } else {
        EventMeta {
            id: csv_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            label: Label::Clutter,
            speed_mps: None,
            theta_rad: None,
            range_m: None,
            seed: 0,
            flags: vec!["no_sidecar".into()],
        }
    };
    Ok(Event { channels, meta })
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::data(&path, e.to_string()))
}

/// Manifest plus every event, in manifest order.
pub fn load_dataset(dir: &Path) -> Result<(Manifest, Vec<Event>)> {
    let m = read_manifest(dir)?;
    let events = m
        .events
        .par_iter()
        .map(|e| {
            let mut ev = read_event(&dir.join(&e.csv), Some(m.samples_per_event))?;
            ev.meta.label = e.label;
            Ok(ev)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((m, events))
}

pub fn dataset_paths(dir: &Path, m: &Manifest) -> Vec<PathBuf> {
    m.events.iter().map(|e| dir.join(&e.csv)).collect()
}
