//! The `srmt` command-line front end.
//!
//! Exit codes: 0 success, 2 usage/config/load error, 3 FDR gate tripped,
//! 4 runtime failure.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::campaign::{self, CampaignConfig, CampaignReport, Method};
use crate::error::Error;
use crate::gradcam;
use crate::model_io::{self, read_png};
use crate::network::{LayerSpec, Model};
use crate::rng::StreamKey;
use crate::sensitivity::{self, enumerate_rectangles, Fusion};
use crate::transforms::{apply_transform, TransformKind, TransformParams, TransformSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_GATE: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "srmt", version, about = "Sensitive-region metamorphic testing for image classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the architecture, shape chain and Grad-CAM target of a model.
    InspectModel {
        #[arg(long)]
        model: PathBuf,
    },
    /// Write per-class Grad-CAM heat maps as grayscale PNGs (class_<index>.png).
    Heatmap {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, conflicts_with = "all", required_unless_present = "all")]
        class: Option<usize>,
        #[arg(long)]
        all: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the sensitive-region mask of one image as a 1-bit PNG.
    Mask {
        #[command(flatten)]
        sel: Selection,
        #[arg(long)]
        out: PathBuf,
    },
    /// List candidate rectangles for one image, optionally exporting follow-ups.
    Candidates {
        #[command(flatten)]
        sel: Selection,
        #[arg(long, default_value_t = 5)]
        stride: usize,
        #[arg(long, default_value_t = 10)]
        width: usize,
        #[arg(long, default_value_t = 10)]
        height: usize,
        /// Transform applied to each candidate when exporting follow-ups.
        #[arg(long, requires = "export_dir")]
        transform: Option<TransformKind>,
        #[arg(long, requires = "transform")]
        export_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a full campaign and write report.json, trials.csv and bins.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config's out_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed; overrides the config's master_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: available processors).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Recompute aggregates and correlation offline from a trials CSV.
    Report {
        #[arg(long)]
        trials: PathBuf,
        /// A report.json to audit against the trial stream; its config
        /// supplies methods, transforms and binning.
        #[arg(long)]
        check: Option<PathBuf>,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        min_trials: Option<u64>,
        /// Write the recomputed report JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct Selection {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[arg(long, value_parser = parse_fusion)]
    method: Fusion,
    #[arg(long, default_value_t = 0.9)]
    threshold: f32,
}

fn parse_fusion(s: &str) -> Result<Fusion, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl clap::ValueEnum for TransformKind {
    fn value_variants<'a>() -> &'a [Self] {
        &TransformKind::ALL
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(self.as_str()))
    }
}

/// An error paired with the exit code it maps to.
struct Failure {
    code: i32,
    error: Error,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Failure {
            code: EXIT_USAGE,
            error,
        }
    }
}

fn runtime(error: Error) -> Failure {
    Failure {
        code: EXIT_RUNTIME,
        error,
    }
}

type CliResult = Result<i32, Failure>;

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.error);
            f.code
        }
    }
}

fn dispatch(cmd: Command) -> CliResult {
    match cmd {
        Command::InspectModel { model } => inspect_model(&model),
        Command::Heatmap {
            model,
            image,
            class,
            all,
            out,
        } => heatmap(&model, &image, if all { None } else { class }, &out),
        Command::Mask { sel, out } => mask(&sel, &out),
        Command::Candidates {
            sel,
            stride,
            width,
            height,
            transform,
            export_dir,
            seed,
        } => candidates(&sel, stride, width, height, transform.zip(export_dir), seed),
        Command::Run { config, out, seed, jobs } => run(&config, out, seed, jobs),
        Command::Report {
            trials,
            check,
            bins,
            min_trials,
            out,
        } => report(&trials, check.as_deref(), bins, min_trials, out.as_deref()),
    }
}

fn inspect_model(path: &Path) -> CliResult {
    let model = model_io::load_model(path)?;
    let spec = model.spec();
    let [c, h, w] = spec.input_shape;
    println!("model: {}", path.display());
    println!("input: {c}×{h}×{w}");
    println!("classes: {}", spec.num_classes);
    println!("{:>3}  {:<11} {:<6} {:<16} {:>8}", "#", "kind", "act", "output", "params");
    for (i, (layer, shape)) in spec.layers.iter().zip(model.layer_shapes()).enumerate() {
        let (act, params) = match layer {
            LayerSpec::Conv2d {
                activation,
                weights,
                bias,
                ..
            }
            | LayerSpec::Dense {
                activation,
                weights,
                bias,
                ..
            } => (format!("{activation:?}").to_lowercase(), weights.len + bias.len),
            _ => ("-".to_string(), 0),
        };
        let shape = shape.iter().map(usize::to_string).collect::<Vec<_>>().join("×");
        let marker = if i == model.target_layer() { "  <- grad-cam target" } else { "" };
        println!("{i:>3}  {:<11} {act:<6} {shape:<16} {params:>8}{marker}", layer.kind_name());
    }
    if let Some(names) = &spec.class_names {
        println!("class names: {}", names.join(", "));
    }
    Ok(EXIT_OK)
}

fn load_image(model: &Model, path: &Path) -> Result<crate::Tensor, Failure> {
    let img = read_png(path)?;
    if img.shape() != model.input_shape() {
        return Err(Error::shape(format!(
            "image {} is {:?}, model expects {:?}",
            path.display(),
            img.shape(),
            model.input_shape()
        ))
        .into());
    }
    Ok(img)
}

fn heatmap(model_path: &Path, image: &Path, class: Option<usize>, out: &Path) -> CliResult {
    let model = model_io::load_model(model_path)?;
    if let Some(c) = class {
        model.check_class(c)?;
    }
    let img = load_image(&model, image)?;
    let trace = model.trace(&img)?;
    let classes: Vec<usize> = match class {
        Some(c) => vec![c],
        None => (0..model.num_classes()).collect(),
    };
    let mut files = Vec::with_capacity(classes.len());
    for c in classes {
        let map = gradcam::class_heatmap(&model, &trace, c)?;
        files.push((format!("class_{c}.png"), model_io::encode_gray_png(map.grid.height, map.grid.width, &map.grid.values)?));
    }
    write_all(out, files)?;
    Ok(EXIT_OK)
}

fn selection_mask(sel: &Selection) -> Result<(Model, crate::Tensor, sensitivity::SensitiveMask), Failure> {
    let model = model_io::load_model(&sel.model)?;
    let img = load_image(&model, &sel.image)?;
    let (pred, maps) = if sel.method == Fusion::Best {
        let (p, m) = gradcam::best_class_heatmap(&model, &img)?;
        (p, vec![m])
    } else {
        gradcam::heatmaps_with_prediction(&model, &img)?
    };
    let mask = sensitivity::select(&maps, &pred, sel.method, sel.threshold)?;
    Ok((model, img, mask))
}

fn mask(sel: &Selection, out: &Path) -> CliResult {
    let (_, _, mask) = selection_mask(sel)?;
    model_io::write_mask_png(out, mask.height, mask.width, &mask.cells).map_err(runtime)?;
    println!("{} sensitive pixels -> {}", mask.count(), out.display());
    Ok(EXIT_OK)
}

fn candidates(
    sel: &Selection,
    stride: usize,
    width: usize,
    height: usize,
    export: Option<(TransformKind, PathBuf)>,
    seed: u64,
) -> CliResult {
    let (_, img, mask) = selection_mask(sel)?;
    let rects = enumerate_rectangles(&mask, width, height, stride)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let _ = writeln!(out, "index,top,left,height,width");
    for (i, r) in rects.iter().enumerate() {
        let _ = writeln!(out, "{i},{},{},{},{}", r.top, r.left, r.height, r.width);
    }
    if let Some((kind, dir)) = export {
        let spec = TransformSpec {
            kind,
            params: TransformParams::default(),
        };
        let mut files = Vec::with_capacity(rects.len());
        for (i, r) in rects.iter().enumerate() {
            let mut rng = StreamKey::new(seed).with_str(kind.as_str()).with_u64(i as u64).rng();
            let follow = apply_transform(&img, r, &spec, &mut rng)?;
            files.push((format!("{kind}_{i:04}.png"), model_io::encode_image_png(&follow)?));
        }
        write_all(&dir, files)?;
    }
    Ok(EXIT_OK)
}

fn write_all(dir: &Path, files: Vec<(String, Vec<u8>)>) -> Result<(), Failure> {
    let n = files.len();
    let files: Vec<(&str, Vec<u8>)> = files.iter().map(|(n, b)| (n.as_str(), b.clone())).collect();
    campaign::write_atomically(dir, &files).map_err(runtime)?;
    // stdout may carry CSV; keep the summary off it.
    eprintln!("wrote {n} file(s) to {}", dir.display());
    Ok(())
}

fn print_table(report: &CampaignReport) {
    println!("{:<16} {:>10} {:>10} {:>8} {:>8}", "method", "positive", "negative", "FDR", "ratio");
    for m in &report.methods {
        let pct = |f: Option<f64>| f.map(|v| format!("{:.2}%", 100.0 * v)).unwrap_or_else(|| "-".into());
        let ratio = m.fdr_ratio.map(|r| format!("{r:.2}")).unwrap_or_else(|| "-".into());
        println!("{:<16} {:>10} {:>10} {:>8} {:>8}", m.method, m.positives, m.negatives, pct(m.fdr), ratio);
    }
    for c in &report.correlation {
        match c.pearson_r {
            Some(r) => println!("pearson r [{}]: {r:.3} over {} bins", c.method, c.qualifying_bins),
            None => println!("pearson r [{}]: undefined ({})", c.method, c.note.as_deref().unwrap_or("")),
        }
    }
}

fn run(config: &Path, out: Option<PathBuf>, seed: Option<u64>, jobs: Option<usize>) -> CliResult {
    let mut cfg = CampaignConfig::load(config)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    let out = out
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| Error::Config("no output directory: pass --out or set out_dir".into()))?;
    if jobs == Some(0) {
        return Err(Error::Config("--jobs must be at least 1".into()).into());
    }
    // Load failures surface before any trial runs and map to exit 2.
    let model = model_io::load_model(&cfg.model)?;
    model_io::load_seed_set(&model, &cfg.seeds)?;

    let outcome = campaign::run_campaign(&cfg, jobs).map_err(runtime)?;
    campaign::write_outputs(&outcome, &out).map_err(runtime)?;
    print_table(&outcome.report);
    println!("wrote {}", out.display());
    let tripped = outcome.report.gate_violations();
    if !tripped.is_empty() {
        let names: Vec<&str> = tripped.iter().map(|m| m.as_str()).collect();
        eprintln!(
            "FDR gate tripped (> {}): {}",
            cfg.fail_threshold.unwrap_or_default(),
            names.join(", ")
        );
        return Ok(EXIT_GATE);
    }
    Ok(EXIT_OK)
}

fn report(trials: &Path, check: Option<&Path>, bins: Option<usize>, min_trials: Option<u64>, out: Option<&Path>) -> CliResult {
    let records = campaign::read_trials_file(trials)?;
    let existing: Option<CampaignReport> = match check {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Some(serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let mut cfg = match &existing {
        Some(r) => r.config.clone(),
        None => {
            let mut cfg = CampaignConfig::new("", "");
            cfg.methods = Method::ALL.into_iter().filter(|m| records.iter().any(|r| r.method == *m)).collect();
            cfg.transforms = TransformKind::ALL
                .into_iter()
                .filter(|t| records.iter().any(|r| r.transform == *t))
                .collect();
            if cfg.methods.is_empty() {
                cfg.methods = Method::ALL.to_vec();
                cfg.transforms = TransformKind::ALL.to_vec();
            }
            cfg
        }
    };
    let mut code = EXIT_OK;
    if let Some(r) = &existing {
        let problems = campaign::audit(r, &records)?;
        if problems.is_empty() {
            println!("audit: report aggregates match {} trial records", records.len());
        } else {
            for p in &problems {
                eprintln!("audit: {p}");
            }
            code = EXIT_RUNTIME;
        }
    }
    if let Some(b) = bins {
        cfg.num_bins = b;
    }
    if let Some(m) = min_trials {
        cfg.min_bin_trials = m;
    }
    cfg.validate()?;
    let rebuilt = campaign::build_report(&cfg, &records)?;
    print_table(&rebuilt);
    if let Some(path) = out {
        let mut json = serde_json::to_vec_pretty(&rebuilt).expect("report serializes");
        json.push(b'\n');
        std::fs::write(path, json).map_err(|e| runtime(Error::io(path, e)))?;
    }
    Ok(code)
}
