//! Command-line front end.
//!
//! Exit status is 0 on success, 1 on a usage error and 2 on a data error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cptrack::appearance::{extract_histogram, kmeans_cluster, ColorHistogram, RgbImage};
use cptrack::harness::{generate_scene, random_spec, run_benchmark, SceneKind, SceneSpec, Suite};
use cptrack::io::*;
use cptrack::metrics::MetricsReport;
use cptrack::pipeline::{track_video, Appearance, HistogramMap};
use cptrack::{Config, Error, Frames, Result};

#[derive(Parser, Debug)]
#[command(name = "cptrack", version, about = "Multi-object tracking by constraint programming")]
struct Cli {
    /// Config file of key=value lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Print the effective config and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Track detections and write the track file.
    Track(TrackArgs),
    /// Score a track file against ground truth.
    Eval(EvalArgs),
    /// Cluster histograms into a color class model.
    Cluster(ClusterArgs),
    /// Generate a synthetic scene with ground truth.
    Synth(SynthArgs),
    /// Compare the tracker with the IoU baseline on a synthetic suite.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct TrackArgs {
    /// Detection CSV.
    #[arg(long)]
    det: PathBuf,
    /// Histogram sidecar, one row per detection.
    #[arg(long, conflicts_with = "frames")]
    hist: Option<PathBuf>,
    /// Directory of binary PPM frames named `frame_000001.ppm` and so on.
    #[arg(long)]
    frames: Option<PathBuf>,
    /// Color class model; clustered from the histograms when absent.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output track CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    hyp: PathBuf,
    /// Matching IoU threshold.
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    /// Print a CSV row instead of the table.
    #[arg(long)]
    csv: bool,
}

#[derive(Args, Debug)]
struct ClusterArgs {
    /// Histogram sidecar.
    #[arg(long)]
    hist: PathBuf,
    /// Number of classes; the config's `k` when absent.
    #[arg(long)]
    k: Option<usize>,
    /// Seed; the config's `kmeans_seed` when absent.
    #[arg(long)]
    seed: Option<u64>,
    /// Output model file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Scene spec file; a random spec is drawn when absent.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value = "occlusion")]
    kind: SceneKind,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long = "num-frames", default_value_t = 60)]
    num_frames: u32,
    #[arg(long, default_value_t = 4)]
    objects: usize,
    /// Directory for spec.txt, gt.csv, det.csv, hist.csv and model.txt.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Suite file; the default occlusion suite when absent.
    #[arg(long)]
    suite: Option<PathBuf>,
    /// Per-seed CSV output.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::parse(&read_text(p)?).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => Config::default(),
    };
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn source(p: &Path) -> String {
    p.display().to_string()
}

/// Histograms of every detection, cut from the PPM frame of the same number.
fn histograms_from_frames(dir: &Path, dets: &Frames) -> Result<HistogramMap> {
    let mut files = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    for entry in entries.flatten() {
        let path = entry.path();
        if path.extension().is_some_and(|x| x == "ppm") {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
            if let Ok(f) = stem.strip_prefix("frame_").unwrap_or(stem).parse::<u32>() {
                files.insert(f, path);
            }
        }
    }
    let mut out = HistogramMap::new();
    for (&f, ds) in dets {
        let path = files
            .get(&f)
            .ok_or_else(|| Error::Invalid(format!("no frame image for frame {f} in {}", dir.display())))?;
        let bytes = fs::read(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        let img = RgbImage::parse_ppm(&bytes).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
        for (j, d) in ds.iter().enumerate() {
            out.insert((f, j + 1), extract_histogram(&img, &d.bbox)?);
        }
    }
    Ok(out)
}

fn track(args: &TrackArgs, cfg: &Config) -> Result<()> {
    let dets = parse_detections(&read_text(&args.det)?, &source(&args.det))?;
    let hists = match (&args.hist, &args.frames) {
        (Some(p), _) => Some(parse_histograms(&read_text(p)?, &source(p))?),
        (None, Some(dir)) => Some(histograms_from_frames(dir, &dets)?),
        (None, None) => None,
    };
    let model = match &args.model {
        Some(p) => Some(parse_color_model(&read_text(p)?, &source(p))?),
        None => None,
    };
    let appearance = match &hists {
        Some(h) => Appearance::Histograms {
            hists: h,
            model: model.as_ref(),
        },
        None if model.is_some() => {
            return Err(Error::Invalid("--model needs --hist or --frames".into()));
        }
        None => Appearance::Labels,
    };
    let out = track_video(&dets, appearance, cfg)?;
    emit(args.out.as_deref(), &write_tracks(&out.tracks))?;
    eprintln!(
        "{} tracks, {} batches ({} optimal, {} satisfy fallbacks, {} greedy fallbacks)",
        out.tracks.len(),
        out.batches,
        out.optimal,
        out.satisfy_fallbacks,
        out.greedy_fallbacks
    );
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let gt = parse_tracks(&read_text(&args.gt)?, &source(&args.gt))?;
    let hyp = parse_tracks(&read_text(&args.hyp)?, &source(&args.hyp))?;
    let r = MetricsReport::evaluate(&gt, &hyp, args.iou)?;
    if args.csv {
        println!("{}\n{}", cptrack::metrics::CSV_HEADER, r.csv_row());
    } else {
        print!("{}", r.table());
    }
    Ok(())
}

fn cluster(args: &ClusterArgs, cfg: &Config) -> Result<()> {
    let map = parse_histograms(&read_text(&args.hist)?, &source(&args.hist))?;
    let mut keys: Vec<_> = map.keys().copied().collect();
    keys.sort_unstable();
    let hists: Vec<ColorHistogram> = keys.iter().map(|k| map[k].clone()).collect();
    let c = kmeans_cluster(&hists, args.k.unwrap_or(cfg.k), args.seed.unwrap_or(cfg.kmeans_seed))?;
    emit(args.out.as_deref(), &write_color_model(&c.model))?;
    eprintln!(
        "{} histograms in {} classes, objective {:.6}",
        hists.len(),
        c.model.k(),
        c.objective.last().copied().unwrap_or(0.0)
    );
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let spec = match &args.spec {
        Some(p) => SceneSpec::parse(&read_text(p)?).map_err(|e| Error::Invalid(format!("{}: {e}", p.display())))?,
        None => random_spec(args.kind, args.seed, args.num_frames, args.objects)?,
    };
    let scene = generate_scene(&spec)?;
    fs::create_dir_all(&args.out).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;
    write_text(&args.out.join("spec.txt"), &spec.to_text())?;
    write_text(&args.out.join("gt.csv"), &write_tracks(&scene.gt))?;
    write_text(&args.out.join("det.csv"), &write_detections(&scene.detections))?;
    write_text(&args.out.join("hist.csv"), &write_histograms(&scene.histograms))?;
    write_text(&args.out.join("model.txt"), &write_color_model(&scene.centers))?;
    eprintln!(
        "{} frames, {} objects, {} detections",
        spec.frames,
        spec.objects.len(),
        scene.detections.values().map(Vec::len).sum::<usize>()
    );
    Ok(())
}

fn bench(args: &BenchArgs, cfg: &Config) -> Result<()> {
    let suite = match &args.suite {
        Some(p) => Suite::parse(&read_text(p)?)?,
        None => Suite::default(),
    };
    let report = run_benchmark(&suite, cfg)?;
    print!("{}", report.table());
    if let Some(p) = &args.csv {
        write_text(p, &report.csv())?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    if cli.print_config {
        print!("{}", cfg.to_text());
        return Ok(());
    }
    match cli.command.as_ref().expect("checked by main") {
        Command::Track(a) => track(a, &cfg),
        Command::Eval(a) => eval(a),
        Command::Cluster(a) => cluster(a, &cfg),
        Command::Synth(a) => synth(a),
        Command::Bench(a) => bench(a, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if cli.command.is_none() && !cli.print_config {
        use clap::CommandFactory;
        let _ = Cli::command().print_help();
        return ExitCode::from(1);
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
