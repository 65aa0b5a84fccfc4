//! `wander`: command-line front end of the wandering-detection pipeline.
//!
//! Every stage reads and writes flat files in a workspace directory:
//! `simulate` → `<name>.csv` + `<name>.labels.csv`, `preprocess` → blocks,
//! `regions` → regions, `mine` → history + patterns, `detect` → events log,
//! `evaluate` → results tables.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand};
use wander_core::detect::{Method, Verdict};
use wander_core::eval::{
    evaluate_run, leave_one_out_grid, render_table, scaling_check, write_records, EvalGrid, LooRun,
};
use wander_core::geo::GeoPoint;
use wander_core::mining::mine;
use wander_core::pipeline::store::{self, labels_path, Workspace};
use wander_core::pipeline::{
    build_history, periodic_refresh, OnlineTracker, PipelineConfig, Snapshot, SnapshotCell, TrajectorySummary,
};
use wander_core::preprocess::{compress_stream, format_stream, parse_record};
use wander_core::region::discover_regions;
use wander_core::synth::{back_and_forth, generate_corpus, Corpus, Label, WaypointGraph};
use wander_core::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "wander", version, about = "Real-time wandering detection from GPS streams")]
struct Cli {
    /// Configuration file (`key = value` with [section] headers).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding the stores.
    #[arg(long, global = true, default_value = "workspace")]
    workspace: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// proposed | ibdd
    #[arg(long, global = true)]
    method: Option<String>,
    /// θ for the proposed method, θ′ for ibdd.
    #[arg(long, global = true)]
    theta: Option<f64>,
    #[arg(long, global = true)]
    precision: Option<u8>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a labeled synthetic corpus (or the case-study stream).
    Simulate {
        /// Output name: writes `<name>.csv` and `<name>.labels.csv`.
        #[arg(long, default_value = store::CORPUS)]
        name: String,
        /// Write the back-and-forth case-study stream to `case_study.csv` instead.
        #[arg(long)]
        case_study: bool,
    },
    /// Filter, split and contract a point stream into the block store.
    Preprocess {
        /// Point stream; defaults to the workspace corpus.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Cluster heavy stay points of the block store into geofenced regions.
    Regions,
    /// Segment and hash the block store, then mine the pattern store.
    Mine,
    /// Replay a point stream online and append detection events.
    Detect {
        /// Point stream; defaults to the workspace corpus.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Refresh regions and patterns after every N closed blocks (0: never).
        #[arg(long, default_value_t = 0)]
        refresh_every: usize,
    },
    /// Leave-one-out evaluation of both methods on the workspace corpus.
    Evaluate {
        #[arg(long, default_value = store::CORPUS)]
        name: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                Error::MissingStore(_) => 3,
                _ => 1,
            })
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            PipelineConfig::parse(&text)?
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(m) = &cli.method {
        cfg.method = m.parse()?;
    }
    if let Some(theta) = cli.theta {
        match cfg.method {
            Method::Proposed => cfg.theta = theta,
            Method::Ibdd => cfg.theta_prime = theta,
        }
    }
    if let Some(p) = cli.precision {
        cfg.precision = p;
        cfg.grid.precisions = vec![p];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let ws = Workspace::open(&cli.workspace)?;
    match &cli.command {
        Command::Simulate { name, case_study } => simulate(&ws, &cfg, name, *case_study),
        Command::Preprocess { input } => preprocess(&ws, &cfg, input.as_deref()),
        Command::Regions => regions(&ws, &cfg),
        Command::Mine => mine_patterns(&ws, &cfg),
        Command::Detect { input, refresh_every } => detect(&ws, &cfg, input.as_deref(), *refresh_every),
        Command::Evaluate { name } => evaluate(&ws, &cfg, name),
    }
}

fn simulate(ws: &Workspace, cfg: &PipelineConfig, name: &str, case_study: bool) -> Result<()> {
    let g = WaypointGraph::bundled();
    if case_study {
        let points = back_and_forth(&g, &cfg.noise, cfg.corpus.stay_s, 1800.0, 1200, cfg.seed)?;
        ws.write_atomic("case_study.csv", &format_stream(&cfg.corpus.person_id, &points))?;
        println!("case_study.csv: {} points", points.len());
        return Ok(());
    }
    let corpus = generate_corpus(&g, &cfg.corpus, &cfg.noise, cfg.seed)?;
    ws.save_corpus(name, &corpus)?;
    let (normal, anomalous) = corpus.counts();
    println!("{name}.csv: {} trajectories ({normal} normal, {anomalous} anomalous)", normal + anomalous);
    Ok(())
}

/// Points of a stream file grouped by person, in file order. Malformed and
/// out-of-order lines are reported and skipped.
fn read_stream(path: &Path) -> Result<BTreeMap<String, Vec<GeoPoint>>> {
    let file = fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingStore(path.display().to_string()),
        _ => Error::from(e),
    })?;
    let mut out: BTreeMap<String, Vec<GeoPoint>> = BTreeMap::new();
    let mut skipped = 0;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some(rec) = parse_record(trimmed) else {
            eprintln!("warning: {}:{}: malformed record skipped", path.display(), i + 1);
            skipped += 1;
            continue;
        };
        let points = out.entry(rec.person_id).or_default();
        if points.last().is_some_and(|last| rec.point.timestamp <= last.timestamp) {
            eprintln!("warning: {}:{}: out-of-order record skipped", path.display(), i + 1);
            skipped += 1;
            continue;
        }
        points.push(rec.point);
    }
    if skipped > 0 {
        eprintln!("warning: {skipped} input lines skipped");
    }
    Ok(out)
}

fn input_path(ws: &Workspace, input: Option<&Path>) -> PathBuf {
    input.map_or_else(|| ws.path(&format!("{}.csv", store::CORPUS)), Path::to_path_buf)
}

fn preprocess(ws: &Workspace, cfg: &PipelineConfig, input: Option<&Path>) -> Result<()> {
    let path = input_path(ws, input);
    let streams = read_stream(&path)?;
    let start = Instant::now();
    let mut blocks = Vec::new();
    let mut raw = 0;
    for (person, points) in &streams {
        raw += points.len();
        blocks.extend(compress_stream(person, points, &cfg.preprocess)?);
    }
    let kept: usize = blocks.iter().map(|b| b.len()).sum();
    ws.save_blocks(&blocks)?;
    let reduction = if raw == 0 { 0.0 } else { 100.0 * (1.0 - kept as f64 / raw as f64) };
    println!(
        "{}: {raw} points -> {kept} stay points in {} blocks ({reduction:.1}% reduction, {:.3} s)",
        path.display(),
        blocks.len(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn regions(ws: &Workspace, cfg: &PipelineConfig) -> Result<()> {
    let blocks = ws.load_blocks()?;
    // ids are inherited from an existing region store
    let previous = if ws.exists(store::REGIONS) { ws.load_regions()? } else { Vec::new() };
    let regions = discover_regions(&blocks, &previous, &cfg.region);
    ws.save_regions(&regions, cfg.region.buffer_m())?;
    println!("{} regions from {} blocks", regions.len(), blocks.len());
    Ok(())
}

fn mine_patterns(ws: &Workspace, cfg: &PipelineConfig) -> Result<()> {
    let blocks = ws.load_blocks()?;
    let regions = ws.load_regions()?;
    let start = Instant::now();
    let history = build_history(&blocks, &regions, cfg.precision);
    ws.save_history(&history)?;
    let db: Vec<_> = history.iter().map(|h| h.tokens.clone()).collect();
    let set = mine(&db, cfg.eta, cfg.precision);
    ws.save_patterns(&set)?;
    if set.is_empty() {
        eprintln!("warning: no patterns mined; every trajectory will be anomalous");
    }
    println!(
        "{} sequences -> {} patterns (eta = {}, precision = {}, {:.2} s)",
        history.len(),
        set.len(),
        cfg.eta,
        cfg.precision,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn detect(ws: &Workspace, cfg: &PipelineConfig, input: Option<&Path>, refresh_every: usize) -> Result<()> {
    let regions = ws.load_regions()?;
    let history = ws.load_history()?;
    let patterns = ws.load_patterns()?;
    if patterns.precision != cfg.precision {
        return Err(Error::Config(format!(
            "pattern store precision {} != configured precision {}",
            patterns.precision, cfg.precision
        )));
    }
    match cfg.method {
        Method::Proposed if patterns.is_empty() => {
            eprintln!("warning: pattern store is empty; every trajectory will be anomalous")
        }
        Method::Ibdd if history.is_empty() => {
            eprintln!("warning: history store is empty; every trajectory will be anomalous")
        }
        _ => {}
    }
    let mut blocks = if refresh_every > 0 { ws.load_blocks()? } else { Vec::new() };
    let cell = Arc::new(SnapshotCell::new(Snapshot::from_parts(1, regions, history, patterns, cfg)?));

    let path = input_path(ws, input);
    let streams = read_stream(&path)?;
    let mut summaries: Vec<TrajectorySummary> = Vec::new();
    let mut events = 0;
    let mut closed = 0;
    for (person, points) in streams {
        let mut tracker = OnlineTracker::new(person, cfg.clone(), cell.clone())?;
        let mut outputs = Vec::new();
        for p in points {
            outputs.push(tracker.ingest(p)?);
            let out = outputs.last_mut().expect("just pushed");
            if let Some(block) = out.closed_block.take() {
                blocks.push(block);
                closed += 1;
                if refresh_every > 0 && closed % refresh_every == 0 {
                    let next = periodic_refresh(&blocks, &cell.load(), cfg)?;
                    cell.publish(next);
                }
            }
        }
        outputs.push(tracker.finish()?);
        for out in outputs {
            events += out.events.len();
            ws.append_events(&out.events)?;
            summaries.extend(out.finished);
        }
    }
    let flagged = summaries.iter().filter(|s| s.verdict == Verdict::Anomalous).count();
    println!(
        "{}: {} trajectories, {flagged} anomalous, {events} events (method = {}, theta = {})",
        path.display(),
        summaries.len(),
        cfg.method,
        match cfg.method {
            Method::Proposed => cfg.theta,
            Method::Ibdd => cfg.theta_prime,
        }
    );
    let labels = labels_path(&path);
    if labels.is_file() {
        let corpus = Corpus::read(BufReader::new(fs::File::open(&path)?), BufReader::new(fs::File::open(&labels)?))?;
        report_against_labels(&corpus, &summaries);
    }
    Ok(())
}

/// A labeled item counts as flagged when any trajectory overlapping its walk
/// ended anomalous.
fn report_against_labels(corpus: &Corpus, summaries: &[TrajectorySummary]) {
    let mut counts = [[0usize; 2]; 2];
    for t in &corpus.trajectories {
        let flagged = summaries
            .iter()
            .any(|s| s.start < t.walk_end && s.end > t.walk_start && s.verdict == Verdict::Anomalous);
        counts[usize::from(t.label == Label::Anomalous)][usize::from(flagged)] += 1;
    }
    let [normal, anomalous] = counts;
    println!(
        "labeled: {} of {} anomalous flagged, {} of {} normal flagged",
        anomalous[1],
        anomalous[0] + anomalous[1],
        normal[1],
        normal[0] + normal[1]
    );
}

fn evaluate(ws: &Workspace, cfg: &PipelineConfig, name: &str) -> Result<()> {
    let corpus = ws.load_corpus(name)?;
    let grid = EvalGrid { methods: vec![Method::Proposed, Method::Ibdd], ..cfg.grid.clone() };
    if grid.precisions.iter().any(|&p| p >= 19) {
        eprintln!("warning: mining at precision 19 takes minutes per split on this corpus");
    }
    let start = Instant::now();
    let run = leave_one_out_grid(&corpus, &cfg.settings(), &grid)?;
    let rows = evaluate_run(&run, &grid)?;
    let mut records = Vec::new();
    write_records(&rows, &mut records)?;
    ws.write_atomic("results.csv", &String::from_utf8(records).expect("utf-8"))?;
    ws.write_atomic("items.csv", &item_details(&run))?;
    print!("{}", render_table(&rows));
    let proposed = scaling_check(Method::Proposed, 200, 20, 3, cfg.seed)?;
    let ibdd = scaling_check(Method::Ibdd, 200, 200, 20, cfg.seed)?;
    println!(
        "per-step detection time when |V| doubles (200 -> 400): proposed x{:.2}, ibdd x{:.2}",
        proposed.ratio(),
        ibdd.ratio()
    );
    println!("{} items, {:.1} s; records in results.csv, per-item detail in items.csv", corpus.trajectories.len(), start.elapsed().as_secs_f64());
    Ok(())
}

fn item_details(run: &LooRun) -> String {
    let mut s = String::from("method,precision,trajectory_id,label,pair,trajectories,tokens,final_score,detect_s,fit_s\n");
    for (&(key, precision), records) in &run.records {
        for r in records {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                Method::from(key),
                precision,
                r.id,
                r.label,
                r.pair,
                r.trajectories,
                r.tokens,
                r.final_score(),
                r.detect_s,
                r.fit_s
            ));
        }
    }
    s
}
