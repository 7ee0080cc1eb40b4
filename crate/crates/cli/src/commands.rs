use std::path::{Path, PathBuf};

use branchtrack::config::{sha256_hex, Manifest, ManifestEntry, PipelineConfig};
use branchtrack::dataset::{SchemaMode, Sequence};
use branchtrack::metrics::{self, MetricReport, METRICS};
use branchtrack::par::{with_threads, Execution};
use branchtrack::reconstruction::{fit_branch_curve, svg_overlay};
use branchtrack::simulator::generate_dataset;
use branchtrack::tracker::{track_sequence, TrackMode, TrackOutput};
use branchtrack::training::{
    gate_samples, train_gate, train_scorer, training_samples, Checkpoint, TrainOutcome, TrainTarget,
};
use branchtrack::Error;
use serde::{Deserialize, Serialize};

use crate::args::{Cli, Command, TargetArg};
use crate::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";
pub const SEQUENCE_DIR: &str = "sequences";

/// Configuration after the global flags have been applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub config: PipelineConfig,
    pub schema: SchemaMode,
}

impl Settings {
    pub fn from_cli(cli: &Cli) -> CliResult<Self> {
        let mut config = match &cli.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = cli.seed {
            config.simulator.seed = seed;
            config.net.seed = seed;
        }
        if let Command::Generate { sim, .. } = &cli.command {
            sim.apply(&mut config.simulator);
        }
        config.validate()?;
        Ok(Settings {
            config,
            schema: if cli.strict_schema {
                SchemaMode::Strict
            } else {
                SchemaMode::Lenient
            },
        })
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    let settings = Settings::from_cli(&cli)?;
    with_threads(cli.threads, || dispatch(&cli.command, &settings))
}

fn dispatch(command: &Command, s: &Settings) -> CliResult<()> {
    match command {
        Command::Generate { out, .. } => {
            let m = generate(&s.config, out)?;
            println!(
                "wrote {} sequences to {} (dataset {})",
                m.files.len(),
                out.display(),
                m.dataset_hash
            );
        }
        Command::Track {
            dataset,
            mode,
            checkpoint,
            out,
        } => {
            let run = track(s, dataset, (*mode).into(), checkpoint.as_deref(), out)?;
            println!(
                "tracked {} sequences in {} mode -> {}",
                run.outputs.len(),
                run.mode,
                out.display()
            );
        }
        Command::Train {
            dataset,
            target,
            out,
            log,
        } => {
            let target = match target {
                TargetArg::Gate => TrainTarget::Gate,
                TargetArg::Scorer => TrainTarget::Scorer,
            };
            let log = log.clone().unwrap_or_else(|| out.with_extension("log.csv"));
            let outcome = train(s, dataset, target, out, &log)?;
            let last = outcome.curve.last().copied().unwrap_or(f64::NAN);
            println!(
                "trained {target:?} for {} epochs, final loss {last:.6}",
                outcome.curve.len()
            );
        }
        Command::Evaluate {
            dataset,
            tracks,
            out,
            svg,
        } => {
            let rep = evaluate(s, dataset, tracks, out, svg.as_deref())?;
            for m in METRICS {
                match rep.aggregate_value(m, "all") {
                    Some(v) => println!("{m:>5} {v:.4}"),
                    None => println!("{m:>5} -"),
                }
            }
        }
        Command::Report { inputs, out } => print!("{}", report(inputs, out)?),
    }
    Ok(())
}

fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let io = |source| {
        CliError::Core(Error::Io {
            path: path.display().to_string(),
            source,
        })
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    std::fs::write(path, bytes).map_err(io)
}

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|source| {
        CliError::Core(Error::Io {
            path: path.display().to_string(),
            source,
        })
    })
}

/// Simulates the configured dataset into `out`: one JSON file per
/// plant/view sequence, the effective config and a manifest.
pub fn generate(config: &PipelineConfig, out: &Path) -> CliResult<Manifest> {
    let sims = generate_dataset(&config.simulator, Execution::Parallel)?;
    let mut files = Vec::with_capacity(sims.len());
    for (i, sim) in sims.iter().enumerate() {
        let rel = format!("{SEQUENCE_DIR}/seq-{i:04}.json");
        let text = sim.sequence.to_json_string();
        write(&out.join(&rel), text.as_bytes())?;
        files.push(ManifestEntry {
            path: rel,
            sha256: sha256_hex(text.as_bytes()),
        });
    }
    write(&out.join("config.toml"), config.to_toml_string().as_bytes())?;
    let manifest = Manifest::new(config.simulator.seed, config.hash(), files);
    let text = serde_json::to_string_pretty(&manifest).map_err(Error::from)? + "\n";
    write(&out.join(MANIFEST), text.as_bytes())?;
    Ok(manifest)
}

/// Loads a generated dataset after checking every file against the
/// manifest.
pub fn load_dataset(dir: &Path, schema: SchemaMode) -> CliResult<(Manifest, Vec<Sequence>)> {
    let manifest = Manifest::load(&dir.join(MANIFEST))?;
    manifest.verify(dir)?;
    let seqs = manifest
        .files
        .iter()
        .map(|f| Sequence::from_json_str(&read(&dir.join(&f.path))?, schema).map_err(CliError::from))
        .collect::<CliResult<Vec<_>>>()?;
    Ok((manifest, seqs))
}

/// Output of `track`: one entry per dataset sequence, in manifest order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackRun {
    pub dataset_hash: String,
    pub config_hash: String,
    pub mode: String,
    pub outputs: Vec<TrackOutput>,
}

pub fn track(
    s: &Settings,
    dataset: &Path,
    mode: TrackMode,
    checkpoint: Option<&Path>,
    out: &Path,
) -> CliResult<TrackRun> {
    let (manifest, seqs) = load_dataset(dataset, s.schema)?;
    let model = match (mode, checkpoint) {
        (TrackMode::FusionLearned, None) => {
            return Err(CliError::Usage("fusion-learned mode needs --checkpoint".into()))
        }
        (TrackMode::FusionLearned, Some(p)) => {
            let ck: Checkpoint = serde_json::from_str(&read(p)?).map_err(Error::from)?;
            Some(ck.model()?)
        }
        _ => None,
    };
    let tracker = s.config.tracker();
    let outputs = Execution::Parallel
        .map(&seqs, |seq| track_sequence(seq, mode, &tracker, model.as_ref()))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let run = TrackRun {
        dataset_hash: manifest.dataset_hash,
        config_hash: s.config.hash(),
        mode: mode.name().to_string(),
        outputs,
    };
    let text = serde_json::to_string_pretty(&run).map_err(Error::from)? + "\n";
    write(out, text.as_bytes())?;
    Ok(run)
}

pub fn train(s: &Settings, dataset: &Path, target: TrainTarget, out: &Path, log: &Path) -> CliResult<TrainOutcome> {
    let (_, seqs) = load_dataset(dataset, s.schema)?;
    let tracker = s.config.tracker();
    let samples = training_samples(&seqs, &tracker)?;
    let outcome = match target {
        TrainTarget::Gate => {
            let gs = gate_samples(&samples, &tracker)?;
            train_gate(&gs, &tracker, &s.config.net, Execution::Parallel)?
        }
        TrainTarget::Scorer => train_scorer(&samples, &tracker, &s.config.net, Execution::Parallel)?,
    };
    let ck = Checkpoint::new(target, &s.config.net, &s.config.gate, &outcome.params);
    let text = serde_json::to_string_pretty(&ck).map_err(Error::from)? + "\n";
    write(out, text.as_bytes())?;
    let mut csv = String::from("epoch,loss\n");
    for (e, l) in outcome.curve.iter().enumerate() {
        csv.push_str(&format!("{e},{l}\n"));
    }
    write(log, csv.as_bytes())?;
    Ok(outcome)
}

pub fn evaluate(
    s: &Settings,
    dataset: &Path,
    tracks: &Path,
    out: &Path,
    svg: Option<&Path>,
) -> CliResult<MetricReport> {
    let (manifest, seqs) = load_dataset(dataset, s.schema)?;
    let run: TrackRun = serde_json::from_str(&read(tracks)?).map_err(Error::from)?;
    manifest.require(&run.dataset_hash)?;
    if run.outputs.len() != seqs.len() {
        return Err(Error::Manifest(format!(
            "{} tracked sequences for {} in the dataset",
            run.outputs.len(),
            seqs.len()
        ))
        .into());
    }
    for (o, seq) in run.outputs.iter().zip(&seqs) {
        if o.plant_id != seq.plant_id || o.view_angle_deg != seq.view_angle_deg {
            return Err(Error::Manifest(format!(
                "track output for {} does not line up with {}",
                o.plant_id, seq.plant_id
            ))
            .into());
        }
    }
    let preds: Vec<_> = run.outputs.iter().map(|o| o.tracks.clone()).collect();
    let rep = metrics::evaluate(&seqs, &preds, &s.config.eval, Execution::Parallel)?;
    write(out, rep.to_csv().as_bytes())?;
    if let Some(dir) = svg {
        for (i, (o, seq)) in run.outputs.iter().zip(&seqs).enumerate() {
            let doc = overlay(o, seq, &s.config)?;
            write(&dir.join(format!("seq-{i:04}.svg")), doc.as_bytes())?;
        }
    }
    Ok(rep)
}

/// Reconstructed curve of every predicted identity, coloured by identity.
fn overlay(o: &TrackOutput, seq: &Sequence, config: &PipelineConfig) -> CliResult<String> {
    let mut lines = Vec::new();
    for (&id, entries) in &o.tracks.tracks {
        let frames: Vec<_> = entries
            .iter()
            .filter_map(|&(f, b)| seq.frames.iter().find(|fr| fr.index == f).map(|fr| (fr, b)))
            .collect();
        let Some(anchor) = frames.iter().find_map(|(fr, _)| fr.branch_by_order(id)) else {
            continue;
        };
        let mut pts = vec![(anchor.x, anchor.y)];
        pts.extend(
            frames
                .iter()
                .filter_map(|(fr, b)| fr.bud_by_id(*b))
                .map(|b| (b.cx, b.cy)),
        );
        let fit = fit_branch_curve(&pts, config.eval.reconstruction.samples)?;
        lines.push((id, fit.polyline));
    }
    Ok(svg_overlay(&lines, config.eval.reconstruction.raster_size))
}

/// Collects the overall aggregate of every metric from each report into
/// one CSV (one row per report) and returns a printable table.
pub fn report(inputs: &[PathBuf], out: &Path) -> CliResult<String> {
    let mut table = String::from("report");
    for m in METRICS {
        table.push(',');
        table.push_str(m);
    }
    table.push('\n');
    for path in inputs {
        let csv_err = |source| CliError::Csv {
            path: path.display().to_string(),
            source,
        };
        let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
        let mut values = vec![String::new(); METRICS.len()];
        for rec in reader.records() {
            let rec = rec.map_err(csv_err)?;
            if rec.get(6) == Some("true") && rec.get(2) == Some("all") {
                if let Some(k) = METRICS.iter().position(|m| Some(*m) == rec.get(3)) {
                    values[k] = rec.get(4).unwrap_or("").to_string();
                }
            }
        }
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        table.push_str(&label);
        for v in values {
            table.push(',');
            table.push_str(&v);
        }
        table.push('\n');
    }
    write(out, table.as_bytes())?;
    Ok(table)
}
