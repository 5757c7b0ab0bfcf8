use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use crackscan::metrics::metrics_csv;
use crackscan::phantom::PhantomSpec;
use crackscan::pipeline::commands::{
    cmd_binarize, cmd_calibrate, cmd_detect, cmd_evaluate, cmd_features, cmd_phantom, EvalInputs,
};
use crackscan::pipeline::{PipelineConfig, Source};
use crackscan::{Error, Result};

/// Crack pre-localization in 3D CT volumes.
#[derive(Parser)]
#[command(name = "crackscan", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// JSON pipeline configuration
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set grid.g=8` (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Raw input volume (dims/format from its .json sidecar)
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Output directory
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Filter kind: mhe, frangi, sheet or percolation
    #[arg(long, global = true)]
    filter: Option<String>,
    /// Comma-separated scale set, e.g. 1,3,5
    #[arg(long, global = true)]
    scales: Option<String>,
    /// Cubes per axis
    #[arg(long, global = true)]
    g: Option<usize>,
    /// Scan window side, in cubes
    #[arg(long, global = true)]
    u: Option<usize>,
    /// Benjamini-Hochberg level
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Worker threads
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic volume and its crack truth
    Phantom {
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        width: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// No crack: a calibration volume
        #[arg(long)]
        homogeneous: bool,
    },
    /// Binarize the input with the configured filter
    Binarize,
    /// Cube feature field of a mask (or of the binarized input)
    Features {
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// Build the empirical null from a crack-free volume
    Calibrate {
        /// Crack-free raw volume; defaults to the configured null or input volume
        #[arg(long)]
        volume: Option<PathBuf>,
    },
    /// Scan, test and aggregate cube decisions
    Detect {
        /// Null CSV written by `calibrate`
        #[arg(long)]
        null: Option<PathBuf>,
    },
    /// Precision/recall/F1 of masks against the truth
    Evaluate {
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        cubes: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

fn json_path(p: &std::path::Path) -> Value {
    Value::String(p.to_string_lossy().into_owned())
}

fn overrides(common: &Common, cmd: &Cmd) -> Vec<(String, Value)> {
    let mut out: Vec<(String, Value)> = Vec::new();
    if let Some(p) = &common.input {
        out.push(("input".into(), serde_json::json!({ "path": { "path": json_path(p) } })));
    }
    if let Some(o) = &common.output {
        out.push(("output".into(), json_path(o)));
    }
    if let Some(f) = &common.filter {
        out.push(("filter.kind".into(), Value::String(f.clone())));
    }
    if let Some(s) = &common.scales {
        let vals: Vec<Value> = s
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map(Value::from)
                    .unwrap_or_else(|_| Value::String(v.into()))
            })
            .collect();
        out.push(("filter.scales".into(), Value::Array(vals)));
    }
    if let Some(g) = common.g {
        out.push(("grid.g".into(), g.into()));
    }
    if let Some(u) = common.u {
        out.push(("grid.u".into(), u.into()));
    }
    if let Some(a) = common.alpha {
        out.push(("test.alpha".into(), a.into()));
    }
    if let Some(t) = common.threads {
        out.push(("threads".into(), t.into()));
    }
    match cmd {
        Cmd::Calibrate { volume: Some(v) } => out.push((
            "null".into(),
            serde_json::json!({ "volume": { "path": { "path": json_path(v) } } }),
        )),
        Cmd::Detect { null: Some(n) } => out.push(("null".into(), serde_json::json!({ "file": json_path(n) }))),
        _ => {}
    }
    out
}

fn load_config(common: &Common, cmd: &Cmd) -> Result<PipelineConfig> {
    let mut tree = match &common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            serde_json::from_str(&text).map_err(|e| Error::Config {
                field: String::new(),
                message: format!("{}: {e}", p.display()),
            })?
        }
        None => Value::Object(Default::default()),
    };
    let map = tree.as_object_mut().ok_or_else(|| Error::Config {
        field: String::new(),
        message: "config root must be an object".into(),
    })?;
    for (k, v) in overrides(common, cmd) {
        let mut parts = k.split('.');
        let head = parts.next().expect("nonempty key");
        match parts.next() {
            None => {
                map.insert(head.into(), v);
            }
            Some(leaf) => {
                let entry = map.entry(head).or_insert_with(|| Value::Object(Default::default()));
                if !entry.is_object() {
                    *entry = Value::Object(Default::default());
                }
                entry.as_object_mut().expect("object").insert(leaf.into(), v);
            }
        }
    }
    PipelineConfig::from_value(tree, &common.set)
}

fn phantom_config(
    mut cfg: PipelineConfig,
    size: Option<usize>,
    width: Option<f64>,
    seed: Option<u64>,
    homogeneous: bool,
) -> Result<PipelineConfig> {
    let explicit = size.is_some() || width.is_some() || seed.is_some() || homogeneous;
    if explicit || cfg.input.is_none() {
        let base = match &cfg.input {
            Some(Source::Phantom(s)) => s.clone(),
            _ => PhantomSpec::planar_crack(128, 5.0, 0),
        };
        let n = size.unwrap_or(base.dims[0]);
        let w = width.unwrap_or_else(|| base.crack.as_ref().map_or(5.0, |c| c.width));
        let s = seed.unwrap_or(base.seed);
        let spec = if homogeneous {
            PhantomSpec::homogeneous(n, s)
        } else {
            PhantomSpec::planar_crack(n, w, s)
        };
        cfg.input = Some(Source::Phantom(spec));
        cfg.validate()?;
    }
    Ok(cfg)
}

fn print_files(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common, &cli.cmd)?;
    if let Some(t) = cfg.threads {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match cli.cmd {
        Cmd::Phantom {
            size,
            width,
            seed,
            homogeneous,
        } => print_files(&cmd_phantom(&phantom_config(cfg, size, width, seed, homogeneous)?)?),
        Cmd::Binarize => print_files(&cmd_binarize(&cfg)?),
        Cmd::Features { mask } => print_files(&cmd_features(&cfg, mask.as_deref())?),
        Cmd::Calibrate { .. } => print_files(&cmd_calibrate(&cfg)?),
        Cmd::Detect { .. } => {
            let out = cmd_detect(&cfg)?;
            print_files(&out.files);
            println!(
                "windows={} rejected={} flagged_cubes={}",
                out.report.windows.len(),
                out.report.rejections(),
                out.report.cubes.count_ones()
            );
        }
        Cmd::Evaluate { mask, cubes, truth } => {
            let (rows, files) = cmd_evaluate(&cfg, &EvalInputs { mask, cubes, truth })?;
            print_files(&files);
            print!("{}", metrics_csv(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
