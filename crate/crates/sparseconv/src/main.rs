use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sparseconv::bench::{
    alexnet_preset, calibrate, fit_alpha, geometric_grid, load_records, run_sweep, save_records,
    SweepSpec, WeightMode,
};
use sparseconv::error::Error;
use sparseconv::model::{
    classify_layer, layer_cost, project_times, useful_sparsity_window, PlatformProfile,
};
use sparseconv::tensor::LayerSpec;
use sparseconv::train::{run_gsl_demo, DemoConfig};

#[derive(Parser)]
#[command(
    name = "sparseconv",
    about = "Sparse convolution kernels, machine calibration, and guided-pruning tooling",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure achievable FLOP/s and bandwidth, write a platform profile.
    Calibrate(CalibrateArgs),
    /// Time kernels across a density grid and emit a CSV of records.
    Sweep(SweepArgs),
    /// Print model projections for one layer at one density.
    Project(ProjectArgs),
    /// Fit the sparse compute overhead from recorded sweep times.
    FitAlpha(FitAlphaArgs),
    /// Train the toy net with guided pruning and write the report.
    GslDemo(GslDemoArgs),
}

#[derive(Args)]
struct CalibrateArgs {
    /// Output path for the profile JSON.
    #[arg(long, default_value = "profile.json")]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
    /// Calibration repetitions used for the stability check.
    #[arg(long, default_value_t = 3)]
    runs: usize,
    /// Minimum seconds of work per measurement.
    #[arg(long, default_value_t = 1.0)]
    seconds: f64,
    /// Profile name recorded in the JSON.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    /// Layer geometry: a preset (alexnet-conv2..alexnet-conv5), an FC shape
    /// `fc:M,K`, or explicit `N=..,C=..,R=..,S=..,H=..,W=..,stride=..,pad=..`.
    #[arg(long, required = true)]
    layer: Vec<String>,
    /// Density grid `from:to:steps`, geometric spacing.
    #[arg(long, default_value = "1.0:0.05:8")]
    grid: String,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    #[arg(long)]
    threads: Option<usize>,
    /// Platform profile: a JSON path or `preset:atom|bdw|knl`.
    #[arg(long, default_value = "preset:bdw")]
    profile: String,
    #[arg(long, default_value = "records.csv")]
    out: PathBuf,
    /// Synthetic weight generator: `magnitude` or `random-mask`.
    #[arg(long, default_value = "magnitude")]
    weights: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long, default_value = "preset:bdw")]
    profile: String,
    #[arg(long)]
    layer: String,
    /// Non-zero density in (0, 1].
    #[arg(long)]
    x: f64,
    #[arg(long, default_value_t = 1)]
    batch: usize,
}

#[derive(Args)]
struct FitAlphaArgs {
    #[arg(long)]
    records: PathBuf,
    #[arg(long, default_value = "preset:bdw")]
    profile: String,
    /// Write the fitted alpha back into the profile JSON (path profiles only).
    #[arg(long, default_value_t = false)]
    write: bool,
}

#[derive(Args)]
struct GslDemoArgs {
    /// Demo configuration JSON. Omit to run with built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dump the default configuration instead of running.
    #[arg(long, default_value_t = false)]
    print_default_config: bool,
}

fn parse_layer(text: &str) -> Result<(String, LayerSpec), Error> {
    if let Some(spec) = alexnet_preset(text) {
        return Ok((text.to_string(), spec));
    }
    if let Some(rest) = text.strip_prefix("fc:") {
        let dims: Vec<&str> = rest.split(',').collect();
        if dims.len() != 2 {
            return Err(Error::InvalidArgument(format!("fc layer needs `fc:M,K`, got {text}")));
        }
        let m: usize = dims[0]
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad M in {text}")))?;
        let k: usize = dims[1]
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad K in {text}")))?;
        return Ok((format!("fc{m}x{k}"), LayerSpec::new(m, k, 1, 1, 1, 1, 1, 0)?));
    }
    if text.contains('=') {
        let mut n = None;
        let mut c = None;
        let mut r = None;
        let mut s = None;
        let mut h = None;
        let mut w = None;
        let mut stride = 1usize;
        let mut pad = 0usize;
        for part in text.split(',') {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("bad field {part:?} in {text}")))?;
            let value: usize = value
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad value in {part:?}")))?;
            match key.trim().to_ascii_lowercase().as_str() {
                "n" => n = Some(value),
                "c" => c = Some(value),
                "r" => r = Some(value),
                "s" => s = Some(value),
                "h" => h = Some(value),
                "w" => w = Some(value),
                "stride" => stride = value,
                "pad" => pad = value,
                other => {
                    return Err(Error::InvalidArgument(format!("unknown layer field {other}")))
                }
            }
        }
        let n = n.ok_or_else(|| Error::InvalidArgument("layer needs N=".into()))?;
        let c = c.ok_or_else(|| Error::InvalidArgument("layer needs C=".into()))?;
        let r = r.ok_or_else(|| Error::InvalidArgument("layer needs R=".into()))?;
        let h = h.ok_or_else(|| Error::InvalidArgument("layer needs H=".into()))?;
        let spec = LayerSpec::new(n, c, r, s.unwrap_or(r), h, w.unwrap_or(h), stride, pad)?;
        // commas would need CSV quoting, so use a compact canonical id
        let id = format!(
            "N{}C{}R{}S{}H{}W{}st{}p{}",
            spec.out_channels,
            spec.in_channels,
            spec.kernel_h,
            spec.kernel_w,
            spec.in_h,
            spec.in_w,
            spec.stride,
            spec.pad
        );
        return Ok((id, spec));
    }
    Err(Error::InvalidArgument(format!(
        "unknown layer {text:?}; use a preset, fc:M,K, or N=..,C=..,R=..,H=.. form"
    )))
}

fn parse_profile(text: &str) -> Result<PlatformProfile, Error> {
    if let Some(name) = text.strip_prefix("preset:") {
        return PlatformProfile::preset(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown preset {name}")));
    }
    PlatformProfile::load(std::path::Path::new(text))
}

fn parse_grid(text: &str) -> Result<Vec<f64>, Error> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidArgument(format!("grid needs from:to:steps, got {text}")));
    }
    let from: f64 =
        parts[0].parse().map_err(|_| Error::InvalidArgument(format!("bad grid start {text}")))?;
    let to: f64 =
        parts[1].parse().map_err(|_| Error::InvalidArgument(format!("bad grid end {text}")))?;
    let steps: usize =
        parts[2].parse().map_err(|_| Error::InvalidArgument(format!("bad grid steps {text}")))?;
    geometric_grid(from, to, steps)
}

fn threads_or_default(flag: Option<usize>) -> usize {
    flag.or_else(|| std::env::var("THREADS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Calibrate(args) => {
            let threads = threads_or_default(args.threads);
            eprintln!("calibrating with {threads} thread(s), {} run(s)...", args.runs);
            let mut profile = calibrate(threads, args.runs, args.seconds)?;
            if let Some(name) = args.name {
                profile.name = name;
            }
            profile.save(&args.out)?;
            println!(
                "{}: {:.2} GFLOP/s, {:.2} GB/s (alpha {} beta {}) -> {}",
                profile.name,
                profile.flops / 1e9,
                profile.bandwidth / 1e9,
                profile.alpha,
                profile.beta,
                args.out.display()
            );
        }
        Command::Sweep(args) => {
            let threads = threads_or_default(args.threads);
            let layers = args
                .layer
                .iter()
                .map(|l| parse_layer(l))
                .collect::<Result<Vec<_>, _>>()?;
            let profile = parse_profile(&args.profile)?;
            let weight_mode = match args.weights.as_str() {
                "magnitude" => WeightMode::MagnitudePruned,
                "random-mask" => WeightMode::RandomMask,
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown weight mode {other}; use magnitude or random-mask"
                    )))
                }
            };
            let sweep = SweepSpec {
                layers,
                grid: parse_grid(&args.grid)?,
                batch: args.batch.unwrap_or_else(|| threads.max(2)),
                reps: args.reps,
                warmup: args.warmup,
                threads,
                weight_mode,
                seed: args.seed,
            };
            let records = run_sweep(&sweep, &profile)?;
            save_records(&args.out, &records)?;
            println!(
                "{} records ({} layers x {} grid points) -> {}",
                records.len(),
                sweep.layers.len(),
                sweep.grid.len(),
                args.out.display()
            );
            for r in &records {
                println!(
                    "  {:<16} {:<14} x={:<8.4} {:>10.3} ms  {:>8.2} eff GFLOP/s  speedup {:>6.2}",
                    r.layer,
                    format!("{:?}", r.variant),
                    r.density,
                    r.median_time_s * 1e3,
                    r.effective_flops / 1e9,
                    r.speedup_vs_dense
                );
            }
        }
        Command::Project(args) => {
            let profile = parse_profile(&args.profile)?;
            let (name, spec) = parse_layer(&args.layer)?;
            let cost = layer_cost(&spec, args.batch);
            let t = project_times(&cost, args.x, &profile)?;
            let window = useful_sparsity_window(&cost, &profile);
            let class = classify_layer(&spec, args.batch, &profile);
            println!("layer {name} on {} (batch {})", profile.name, args.batch);
            println!("  flops            {:.4e}", cost.flops);
            println!("  activation bytes {:.4e}", cost.activation_bytes);
            println!("  weight bytes     {:.4e}", cost.weight_bytes);
            println!("  t_dense          {:.4e} s", t.t_dense);
            println!("  t_sparse_compute {:.4e} s", t.t_sparse_compute);
            println!("  t_sparse_bw      {:.4e} s", t.t_sparse_bw);
            println!("  t_sparse         {:.4e} s", t.t_sparse);
            println!("  speedup          {:.3}", t.speedup);
            println!("  effective rate   {:.2} GFLOP/s", t.effective_flops / 1e9);
            if window.x_lower_useful.is_finite() {
                println!(
                    "  useful window    x in [{:.4}, {:.4}]",
                    window.x_lower_useful, window.x_upper_useful
                );
            } else {
                println!("  useful window    none (bandwidth bound at all densities)");
            }
            println!("  class            {class:?}");
        }
        Command::FitAlpha(args) => {
            let records = load_records(&args.records)?;
            let mut profile = parse_profile(&args.profile)?;
            let alpha = fit_alpha(&records, &profile)?;
            println!("fitted alpha = {alpha:.3} (was {:.3})", profile.alpha);
            if args.write {
                if args.profile.starts_with("preset:") {
                    return Err(Error::InvalidArgument(
                        "--write needs a profile file, not a preset".into(),
                    ));
                }
                profile.alpha = alpha;
                profile.save(std::path::Path::new(&args.profile))?;
                println!("updated {}", args.profile);
            }
        }
        Command::GslDemo(args) => {
            let cfg = match (&args.config, args.print_default_config) {
                (_, true) => {
                    println!("{}", serde_json::to_string_pretty(&DemoConfig::default())?);
                    return Ok(());
                }
                (Some(path), _) => DemoConfig::load(path)?,
                (None, _) => DemoConfig::default(),
            };
            let outcome = run_gsl_demo(&cfg)?;
            println!(
                "dense phase: accuracy {:.3} after {} iterations",
                outcome.dense_accuracy, outcome.dense_iterations_used
            );
            println!("pruned phase: accuracy {:.3}", outcome.final_accuracy);
            for l in &outcome.report.layers {
                println!(
                    "  {:<8} {:?}: final density {:.3}, projected speedup {:.2}",
                    l.id, l.status, l.final_density, l.projected_speedup
                );
            }
            println!("net projected speedup {:.2}", outcome.report.net.projected_speedup);
            if let Some(path) = &cfg.report_out {
                println!("report -> {}", path.display());
            }
            if let Some(path) = &cfg.trajectory_out {
                println!("trajectory -> {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::ValidationGate(_) => ExitCode::from(2),
                Error::CalibrationUnstable(_) => ExitCode::from(3),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
