//! Feature families computed from an event: per-channel energies (E8), the
//! left/right maximum cross-correlation (rho_max), and 60 chirplet
//! parameters from channels A..D (C60). Also the energy truth table.
//!
//! All features work on mean-removed channels; the DC level is an
//! amplifier artifact.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::chirplet::{analytic_signal, decompose, Decomposition};
use crate::config::Config;
use crate::dataset::{idle_scene, write_json};
use crate::error::{Error, Result};
use crate::mesh::Label;
use crate::optics::ChannelName;
use crate::scene::{simulate_event, Event, SimSettings};

/// Parameters stored per chirplet, in order.
pub const CHIRPLET_PARAMS: [&str; 5] = ["a", "m", "omega", "c", "d"];
/// Channels decomposed for C60.
pub const C60_CHANNELS: [ChannelName; 4] = [ChannelName::A, ChannelName::B, ChannelName::C, ChannelName::D];
pub const FEATURE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub id: String,
    pub label: Option<Label>,
    pub e8: [f64; 8],
    pub rho_max: f64,
    /// Channel-major, then chirplet in extraction order, then `a, m, omega, c, d`.
    pub c60: Vec<f64>,
    /// Diagnostics such as `silent_pair` or `empty_signal:B`.
    pub flags: Vec<String>,
}

pub fn mean_removed(v: &[f64]) -> Vec<f64> {
    if v.iter().all(|x| *x == v[0]) {
        return vec![0.0; v.len()];
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - mean).collect()
}

fn energy(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Energy of every mean-removed channel, order A..R2.
pub fn energy_features(ev: &Event) -> [f64; 8] {
    std::array::from_fn(|c| energy(&mean_removed(&ev.channels[c])))
}

/// Maximum normalised cross-correlation of the left pair against the right
/// pair, and the lag where it occurs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossCorrelation {
    pub rho_max: f64,
    /// `-k*` for the maximising `k`: positive when the right pair sees the
    /// pattern later than the left pair.
    pub lag: i64,
}

/// Correlation over all lags `k` in `-(N-1)..=N-1` of
/// `sum_n sum_i L_i(n + k) R_i(n)`, normalised by the pair energies.
/// Ties go to the most negative `k`.
pub fn rho_max(ev: &Event) -> Result<CrossCorrelation> {
    let l = [ChannelName::L1, ChannelName::L2].map(|c| mean_removed(&ev.channels[c.index()]));
    let r = [ChannelName::R1, ChannelName::R2].map(|c| mean_removed(&ev.channels[c.index()]));
    cross_correlation(&l, &r)
}

pub fn cross_correlation(left: &[Vec<f64>; 2], right: &[Vec<f64>; 2]) -> Result<CrossCorrelation> {
    let el: f64 = left.iter().map(|v| energy(v)).sum();
    let er: f64 = right.iter().map(|v| energy(v)).sum();
    if !(el > 0.0 && er > 0.0) {
        return Err(Error::SilentChannelPair);
    }
    let n = left[0].len();
    if left.iter().chain(right).any(|v| v.len() != n) || n == 0 {
        return Err(Error::InvalidInput("cross-correlation needs equal, non-empty lengths".into()));
    }
    let m = (2 * n - 1).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let spectrum = |v: &[f64]| {
        let mut buf: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        buf.resize(m, Complex64::new(0.0, 0.0));
        fwd.process(&mut buf);
        buf
    };
    let mut acc = vec![Complex64::new(0.0, 0.0); m];
    for i in 0..2 {
        let a = spectrum(&left[i]);
        let b = spectrum(&right[i]);
        for k in 0..m {
            acc[k] += a[k] * b[k].conj();
        }
    }
    inv.process(&mut acc);
    let norm = 1.0 / (m as f64 * (el * er).sqrt());
    let mut best = (f64::NEG_INFINITY, 0i64);
    for k in -(n as i64 - 1)..=(n as i64 - 1) {
        let v = acc[k.rem_euclid(m as i64) as usize].re * norm;
        if v > best.0 {
            best = (v, k);
        }
    }
    Ok(CrossCorrelation {
        rho_max: best.0.clamp(-1.0, 1.0),
        lag: -best.1,
    })
}

/// Chirplet decompositions of channels A..D; `None` for a silent channel.
pub fn decompose_channels(ev: &Event, q: usize) -> Result<[Option<Decomposition>; 4]> {
    let mut out: [Option<Decomposition>; 4] = Default::default();
    for (slot, ch) in out.iter_mut().zip(C60_CHANNELS) {
        let (sa, _) = analytic_signal(&mean_removed(&ev.channels[ch.index()]))?;
        *slot = match decompose(&sa, q) {
            Ok(mut d) => {
                d.channel = Some(ch.to_string());
                Some(d)
            }
            Err(Error::EmptySignal) => None,
            Err(e) => return Err(e),
        };
    }
    Ok(out)
}

/// Packs decompositions into the `5 q` parameters per channel; silent
/// channels become zero blocks and add an `empty_signal:<ch>` flag.
pub fn pack_chirplets(decs: &[Option<Decomposition>; 4], q: usize, flags: &mut Vec<String>) -> Vec<f64> {
    let mut out = Vec::with_capacity(4 * q * 5);
    for (d, ch) in decs.iter().zip(C60_CHANNELS) {
        match d {
            Some(d) => {
                for k in 0..q {
                    match d.chirplets.get(k) {
                        Some(c) => out.extend([c.a, c.m, c.omega, c.c, c.d]),
                        None => out.extend([0.0; 5]),
                    }
                }
            }
            None => {
                flags.push(format!("empty_signal:{ch}"));
                out.extend(std::iter::repeat(0.0).take(5 * q));
            }
        }
    }
    out
}

pub fn c60_features(ev: &Event, q: usize, flags: &mut Vec<String>) -> Result<Vec<f64>> {
    Ok(pack_chirplets(&decompose_channels(ev, q)?, q, flags))
}

/// All feature families for one event. A silent L or R pair gives
/// `rho_max = 0` with the `silent_pair` flag.
pub fn extract(ev: &Event, q: usize) -> Result<FeatureVector> {
    let mut flags = Vec::new();
    let rho = match rho_max(ev) {
        Ok(c) => c.rho_max,
        Err(Error::SilentChannelPair) => {
            flags.push("silent_pair".to_string());
            0.0
        }
        Err(e) => return Err(e),
    };
    let c60 = c60_features(ev, q, &mut flags)?;
    Ok(FeatureVector {
        id: ev.meta.id.clone(),
        label: Some(ev.meta.label),
        e8: energy_features(ev),
        rho_max: rho,
        c60,
        flags,
    })
}

/// [`extract`] over many events in parallel, preserving order.
pub fn featurize_events(events: &[Event], q: usize) -> Result<Vec<FeatureVector>> {
    events.par_iter().map(|e| extract(e, q)).collect()
}

/// Energy-pattern inference over channels A..D.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inference {
    ShortAnimal5m,
    Animal10m,
    TallAnimal5m,
    Human10m,
    ShortHuman5m,
    Human5m,
    ClutterOrUnlikely,
}

impl Inference {
    pub fn from_pattern(bits: [bool; 4]) -> Self {
        match bits.map(u8::from) {
            [0, 0, 0, 1] => Inference::ShortAnimal5m,
            [0, 0, 1, 0] => Inference::Animal10m,
            [0, 0, 1, 1] => Inference::TallAnimal5m,
            [0, 1, 1, 0] => Inference::Human10m,
            [0, 1, 1, 1] => Inference::ShortHuman5m,
            [1, 1, 1, 1] => Inference::Human5m,
            _ => Inference::ClutterOrUnlikely,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Inference::ShortAnimal5m => "short animal at 5 m",
            Inference::Animal10m => "animal at 10 m",
            Inference::TallAnimal5m => "tall animal at 5 m",
            Inference::Human10m => "human at 10 m",
            Inference::ShortHuman5m => "short human at 5 m",
            Inference::Human5m => "human at 5 m",
            Inference::ClutterOrUnlikely => "clutter or unlikely combination",
        }
    }
}

impl fmt::Display for Inference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Threshold the A..D energies (strictly above counts as triggered).
pub fn trigger_pattern(e8: &[f64; 8], thresholds: &[f64; 4]) -> Result<[bool; 4]> {
    if thresholds.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidInput("truth-table thresholds must be > 0".into()));
    }
    Ok(std::array::from_fn(|i| e8[i] > thresholds[i]))
}

pub fn truth_table_inference(e8: &[f64; 8], thresholds: &[f64; 4]) -> Result<Inference> {
    Ok(Inference::from_pattern(trigger_pattern(e8, thresholds)?))
}

pub fn pattern_string(bits: [bool; 4]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// Per-channel A..D thresholds: the configured ones when present, else
/// `threshold_noise_multiple` times the mean idle energy over
/// `idle_calibration_events` simulations without actors.
pub fn truth_table_thresholds(cfg: &Config, seed: u64) -> Result<[f64; 4]> {
    let f = &cfg.features;
    if !f.truth_table_thresholds.is_empty() {
        return <[f64; 4]>::try_from(f.truth_table_thresholds.as_slice())
            .map_err(|_| Error::Config("features.truth_table_thresholds needs 4 values (A, B, C, D)".into()));
    }
    let settings = SimSettings::from_config(cfg)?;
    let n = f.idle_calibration_events.max(1);
    let sums = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let ev = simulate_event(&idle_scene(&settings, seed, i))?;
            let e = energy_features(&ev);
            Ok([e[0], e[1], e[2], e[3]])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = [0.0; 4];
    for e in &sums {
        for i in 0..4 {
            out[i] += e[i];
        }
    }
    // a noise-free configuration still needs positive thresholds
    Ok(out.map(|s| (f.threshold_noise_multiple * s / n as f64).max(f64::MIN_POSITIVE)))
}

/// Column names of the feature file (71 columns).
pub fn feature_header() -> Vec<String> {
    let mut h = vec!["event_id".to_string(), "label".to_string()];
    h.extend(ChannelName::ALL.iter().map(|c| format!("e8_{c}")));
    h.push("rho_max".into());
    for ch in C60_CHANNELS {
        for k in 1..=3 {
            for p in CHIRPLET_PARAMS {
                h.push(format!("c60_{ch}_{k}_{p}"));
            }
        }
    }
    h
}

/// Sidecar written next to a feature file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFileMeta {
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub config_hash: Option<String>,
    pub rows: usize,
    /// Event id to flags, for events that carry any.
    pub flags: BTreeMap<String, Vec<String>>,
}

pub fn meta_path(csv: &Path) -> std::path::PathBuf {
    let mut s = csv.as_os_str().to_owned();
    s.push(".meta.json");
    s.into()
}

pub fn features_csv(rows: &[FeatureVector]) -> Result<String> {
    let width = feature_header().len();
    let mut s = feature_header().join(",");
    s.push('\n');
    for r in rows {
        if 8 + 1 + r.c60.len() + 2 != width {
            return Err(Error::InvalidInput(format!(
                "event {}: expected 60 chirplet values, got {}",
                r.id,
                r.c60.len()
            )));
        }
        if r.id.contains(',') {
            return Err(Error::InvalidInput(format!("event id `{}` contains a comma", r.id)));
        }
        s.push_str(&r.id);
        s.push(',');
        s.push_str(r.label.map(|l| l.as_str()).unwrap_or(""));
        for v in r.e8.iter().chain(std::iter::once(&r.rho_max)).chain(&r.c60) {
            s.push(',');
            s.push_str(&format!("{v:e}"));
        }
        s.push('\n');
    }
    Ok(s)
}

/// Writes the feature CSV and its `.meta.json` sidecar.
pub fn write_features(path: &Path, rows: &[FeatureVector], seed: Option<u64>, config_hash: Option<String>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, features_csv(rows)?).map_err(|e| Error::io(path, e))?;
    let meta = FeatureFileMeta {
        schema_version: FEATURE_SCHEMA_VERSION,
        seed,
        config_hash,
        rows: rows.len(),
        flags: rows
            .iter()
            .filter(|r| !r.flags.is_empty())
            .map(|r| (r.id.clone(), r.flags.clone()))
            .collect(),
    };
    write_json(&meta_path(path), &meta)
}

pub fn parse_features_csv(text: &str, path: &Path) -> Result<Vec<FeatureVector>> {
    let header = feature_header();
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let got: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::data(path, format!("bad header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if got != header {
        return Err(Error::data(path, "feature header does not match the fixed 71-column layout"));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::data(path, format!("line {line}: {e}")))?;
        if rec.len() != header.len() {
            return Err(Error::data(path, format!("line {line}: expected {} fields", header.len())));
        }
        let id = rec[0].to_string();
        let label = match &rec[1] {
            "" => None,
            s => Some(s.parse::<Label>().map_err(|e| Error::data(path, format!("line {line}: {e}")))?),
        };
        let mut vals = Vec::with_capacity(69);
        for (k, f) in rec.iter().enumerate().skip(2) {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| Error::data(path, format!("line {line} ({id}): bad number in `{}`", header[k])))?;
            if !v.is_finite() {
                return Err(Error::data(path, format!("line {line} ({id}): non-finite `{}`", header[k])));
            }
            vals.push(v);
        }
        out.push(FeatureVector {
            id,
            label,
            e8: std::array::from_fn(|c| vals[c]),
            rho_max: vals[8],
            c60: vals[9..].to_vec(),
            flags: Vec::new(),
        });
    }
    Ok(out)
}

/// Reads a feature CSV; flags come from the sidecar when present.
pub fn read_features(path: &Path) -> Result<(Vec<FeatureVector>, Option<FeatureFileMeta>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = parse_features_csv(&text, path)?;
    let mp = meta_path(path);
    let meta = if mp.exists() {
        let t = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
        let m: FeatureFileMeta = serde_json::from_str(&t).map_err(|e| Error::data(&mp, e.to_string()))?;
        for r in &mut rows {
            if let Some(f) = m.flags.get(&r.id) {
                r.flags = f.clone();
            }
        }
        Some(m)
    } else {
        None
    };
    Ok((rows, meta))
}
