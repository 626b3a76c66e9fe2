use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use pirsim::chirplet::{reconstruct, ChirpletDump};
use pirsim::classifier::{evaluate_stage1, train_pipeline, FeatureSet, Grid, Kernel};
use pirsim::config::Config;
use pirsim::dataset::{generate_dataset, load_dataset, read_event, write_json, ClassCounts};
use pirsim::features::{
    decompose_channels, energy_features, featurize_events, mean_removed, pattern_string, rho_max, trigger_pattern,
    truth_table_thresholds, write_features, C60_CHANNELS,
};
use pirsim::optics::ChannelName;
use pirsim::{Error, Result};
use serde::Serialize;

use crate::{Cli, Command, EvaluateArgs, FeaturizeArgs, GridChoice, InspectArgs, Mode, SimulateArgs};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_USAGE: u8 = 4;

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Geometry(_) => EXIT_CONFIG,
        Error::Io { .. } | Error::Data { .. } | Error::EmptySignal | Error::SilentChannelPair => EXIT_DATA,
        Error::Precondition(_) | Error::InvalidInput(_) | Error::Domain(_) => EXIT_USAGE,
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .map_err(|e| Error::Precondition(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a),
        Command::Featurize(a) => featurize(cli, a),
        Command::Evaluate(a) => evaluate(cli, a),
        Command::Inspect(a) => inspect(cli, a),
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    match &cli.config {
        Some(p) => Config::load(p, &cli.overrides),
        None => Config::with_overrides("", &cli.overrides),
    }
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let cfg = load_config(cli)?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("dataset"));
    let counts = ClassCounts {
        human: a.human,
        animal: a.animal,
        clutter: a.clutter,
    };
    let m = generate_dataset(&cfg, counts, cli.seed, &out)?;
    let mut flags: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &m.events {
        for f in &e.flags {
            *flags.entry(f.as_str()).or_default() += 1;
        }
    }
    println!(
        "wrote {} events to {} (human {}, animal {}, clutter {}; seed {}; config {})",
        m.events.len(),
        out.display(),
        counts.human,
        counts.animal,
        counts.clutter,
        m.seed,
        &m.config_hash[..12]
    );
    if flags.is_empty() {
        println!("flags: none");
    } else {
        let list: Vec<String> = flags.iter().map(|(k, v)| format!("{k} x{v}")).collect();
        println!("flags: {}", list.join(", "));
    }
    Ok(())
}

fn featurize(cli: &Cli, a: &FeaturizeArgs) -> Result<()> {
    let cfg = load_config(cli)?;
    let q = cfg.features.chirplets_per_channel;
    if q != 3 {
        return Err(Error::Config(format!(
            "features.chirplets_per_channel = {q}: the feature file layout holds exactly 3 chirplets per channel"
        )));
    }
    let (manifest, events) = load_dataset(&a.dataset)?;
    let rows = featurize_events(&events, q)?;
    let out = cli.out.clone().unwrap_or_else(|| a.dataset.join("features.csv"));
    write_features(&out, &rows, Some(manifest.seed), Some(manifest.config_hash.clone()))?;
    let flagged = rows.iter().filter(|r| !r.flags.is_empty()).count();
    println!("wrote {} feature rows to {} ({flagged} with flags)", rows.len(), out.display());
    Ok(())
}

fn quick_grid() -> Grid {
    let mut points = vec![(Kernel::Linear, 1.0), (Kernel::Linear, 16.0)];
    for g in [2f64.powi(-5), 2f64.powi(-3)] {
        for c in [1.0, 16.0, 256.0] {
            points.push((Kernel::Rbf { gamma: g }, c));
        }
    }
    Grid { points }
}

fn evaluate(cli: &Cli, a: &EvaluateArgs) -> Result<()> {
    let (rows, meta) = pirsim::features::read_features(&a.features)?;
    let grid = match a.grid {
        GridChoice::Full => Grid::default(),
        GridChoice::Quick => quick_grid(),
    };
    let config_hash = meta.as_ref().and_then(|m| m.config_hash.clone());
    let (mut report, model) = match a.mode {
        Mode::Pipeline => {
            let (mut p, r) = train_pipeline(&rows, a.folds, &grid, cli.seed)?;
            p.config_hash = config_hash.clone();
            (r, Some(p))
        }
        m => {
            let set = match m {
                Mode::E8 => FeatureSet::E8,
                Mode::E8Rho => FeatureSet::E8Rho,
                _ => FeatureSet::C60,
            };
            (evaluate_stage1(&rows, set, a.folds, &grid, cli.seed)?, None)
        }
    };
    report.config_hash = config_hash;
    let mode = report.mode.replace('+', "_");
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| sibling(&a.features, &format!("{mode}.report.json")));
    let table = report.render();
    print!("{table}");
    write_json(&out, &report)?;
    let txt = out.with_extension("txt");
    fs::write(&txt, &table).map_err(|e| Error::io(&txt, e))?;
    if let (Some(path), Some(model)) = (&a.model, model) {
        write_json(path, &model)?;
        println!("model written to {}", path.display());
    }
    println!("report written to {}", out.display());
    Ok(())
}

/// `<dir>/<stem>.<suffix>` for a file `<dir>/<stem>.<ext>`.
fn sibling(file: &Path, suffix: &str) -> PathBuf {
    let stem = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    file.with_file_name(format!("{stem}.{suffix}"))
}

#[derive(Debug, Serialize)]
struct ChannelStats {
    channel: String,
    mean: f64,
    std: f64,
    min: f64,
    max: f64,
    energy: f64,
}

#[derive(Debug, Serialize)]
struct ChannelDecomposition {
    channel: String,
    /// Reconstruction SNR of the mean-removed channel (dB).
    snr_db: Option<f64>,
    residual_energy: Option<f64>,
    chirplets: Vec<ChirpletDump>,
}

#[derive(Debug, Serialize)]
struct InspectReport {
    event: String,
    label: String,
    samples: usize,
    stats: Vec<ChannelStats>,
    rho_max: Option<f64>,
    rho_lag: Option<i64>,
    thresholds: [f64; 4],
    pattern: String,
    verdict: String,
    decompositions: Vec<ChannelDecomposition>,
}

fn inspect(cli: &Cli, a: &InspectArgs) -> Result<()> {
    let ev = read_event(&a.event, None)?;
    let cfg = load_config(cli)?;
    let thresholds: [f64; 4] = match &a.thresholds {
        Some(t) => <[f64; 4]>::try_from(t.as_slice())
            .map_err(|_| Error::InvalidInput("--thresholds needs 4 values".into()))?,
        None => truth_table_thresholds(&cfg, cli.seed)?,
    };
    let e8 = energy_features(&ev);
    let stats = ChannelName::ALL
        .iter()
        .map(|ch| {
            let v = &ev.channels[ch.index()];
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            ChannelStats {
                channel: ch.to_string(),
                mean,
                std: (e8[ch.index()] / n).sqrt(),
                min: v.iter().copied().fold(f64::INFINITY, f64::min),
                max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                energy: e8[ch.index()],
            }
        })
        .collect();
    let (rho, lag) = match rho_max(&ev) {
        Ok(c) => (Some(c.rho_max), Some(c.lag)),
        Err(Error::SilentChannelPair) => (None, None),
        Err(e) => return Err(e),
    };
    let bits = trigger_pattern(&e8, &thresholds)?;
    let verdict = pirsim::features::Inference::from_pattern(bits);
    let q = cfg.features.chirplets_per_channel;
    let decs = decompose_channels(&ev, q)?;
    let n = ev.len();
    let mut overlay: Vec<Vec<f64>> = Vec::new();
    let mut decompositions = Vec::new();
    for (d, ch) in decs.iter().zip(C60_CHANNELS) {
        let s = mean_removed(&ev.channels[ch.index()]);
        let recon: Vec<f64> = match d {
            Some(d) => reconstruct(d, n).iter().map(|z| z.re).collect(),
            None => vec![0.0; n],
        };
        let sig: f64 = s.iter().map(|x| x * x).sum();
        let err: f64 = s.iter().zip(&recon).map(|(x, y)| (x - y) * (x - y)).sum();
        decompositions.push(ChannelDecomposition {
            channel: ch.to_string(),
            snr_db: d.as_ref().map(|_| 10.0 * (sig / err).log10()),
            residual_energy: d.as_ref().map(|d| d.residual_energy),
            chirplets: d.as_ref().map(|d| d.dump()).unwrap_or_default(),
        });
        overlay.push(s);
        overlay.push(recon);
    }
    let report = InspectReport {
        event: ev.meta.id.clone(),
        label: ev.meta.label.to_string(),
        samples: n,
        stats,
        rho_max: rho,
        rho_lag: lag,
        thresholds,
        pattern: pattern_string(bits),
        verdict: verdict.to_string(),
        decompositions,
    };
    let mut s = String::new();
    let _ = writeln!(s, "event {} ({}), {} samples", report.event, report.label, n);
    let _ = writeln!(s, "{:<4} {:>10} {:>10} {:>10} {:>10} {:>12}", "ch", "mean", "std", "min", "max", "energy");
    for st in &report.stats {
        let _ = writeln!(
            s,
            "{:<4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>12.4e}",
            st.channel, st.mean, st.std, st.min, st.max, st.energy
        );
    }
    match (rho, lag) {
        (Some(r), Some(l)) => {
            let _ = writeln!(s, "rho_max {r:.4} at lag {l}");
        }
        _ => {
            let _ = writeln!(s, "rho_max undefined: silent channel pair");
        }
    }
    for d in &report.decompositions {
        match d.snr_db {
            Some(v) => {
                let _ = writeln!(s, "channel {} reconstruction SNR {v:.2} dB", d.channel);
            }
            None => {
                let _ = writeln!(s, "channel {} silent", d.channel);
            }
        }
    }
    let _ = writeln!(s, "truth table: pattern {} -> {}", report.pattern, report.verdict);
    print!("{s}");
    let json = serde_json::to_string_pretty(&report.decompositions).expect("serializable");
    println!("chirplets: {json}");
    if let Some(dir) = &cli.out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join(format!("{}.inspect.json", report.event)), &report)?;
        let mut csv = String::from("n");
        for ch in C60_CHANNELS {
            let _ = write!(csv, ",{ch},{ch}_recon");
        }
        csv.push('\n');
        for k in 0..n {
            let _ = write!(csv, "{k}");
            for col in &overlay {
                let _ = write!(csv, ",{:e}", col[k]);
            }
            csv.push('\n');
        }
        let p = dir.join(format!("{}.overlay.csv", report.event));
        fs::write(&p, csv).map_err(|e| Error::io(&p, e))?;
        println!("plot data written to {}", dir.display());
    }
    Ok(())
}
