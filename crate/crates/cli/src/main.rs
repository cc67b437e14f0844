//! `dnt`: train, apply and benchmark distance-based normality tests.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dnt_core::config::ConfigFile;
use dnt_core::engine::{dnt_test, load_model, save_model, train};
use dnt_core::harness::{emit_table, prepare, run_power_study, Method, RunConfig, TableFormat};
use dnt_core::qq::{qq_points, rasterize};
use dnt_core::stats::{sample, DistributionSpec};
use dnt_core::{Error, Result};

const EXIT_REJECT: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_DATA: u8 = 4;
const EXIT_SAMPLE_SIZE: u8 = 5;

#[derive(Parser)]
#[command(name = "dnt", version, about = "Distance-based normality testing on Q-Q features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write it to disk.
    Train {
        /// Config file (key = value lines or a JSON object).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Test one sample; exits 0 when normality is accepted and 1 when it is rejected.
    Test {
        #[arg(long)]
        model: PathBuf,
        /// Newline-delimited numbers; blank lines and `#` comments are skipped.
        #[arg(long)]
        data: PathBuf,
    },
    /// Run the fifteen-case power study.
    Power {
        #[arg(long)]
        config: PathBuf,
        /// CSV output path.
        #[arg(long)]
        out: PathBuf,
        /// Also write the markdown table here.
        #[arg(long)]
        markdown: Option<PathBuf>,
    },
    /// Render the Q-Q raster of a simulated sample as PGM.
    Render {
        /// Distribution label such as `t(2)`, `U(0,1)`, `laplace` or `case7`.
        #[arg(long)]
        dist: String,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the Monte Carlo null cutoff of a classical or image-similarity statistic.
    Calibrate {
        #[arg(long)]
        stat: String,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 20_000)]
        reps: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = RunConfig::default().master_seed)]
        seed: u64,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Io { .. } => EXIT_IO,
        Error::Format { .. } | Error::Data { .. } | Error::UnsupportedVersion { .. } => EXIT_DATA,
        Error::SampleSizeMismatch { .. } => EXIT_SAMPLE_SIZE,
        _ => EXIT_USAGE,
    }
}

fn read_sample(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut values = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|e| Error::Data {
            line: i + 1,
            message: format!("`{line}`: {e}"),
        })?;
        if !v.is_finite() {
            return Err(Error::Data {
                line: i + 1,
                message: format!("`{line}` is not finite"),
            });
        }
        values.push(v);
    }
    Ok(values)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Train { config, out } => {
            let cfg = ConfigFile::load(&config)?.train_config()?;
            let model = train(&cfg)?;
            save_model(&model, &out)?;
            println!(
                "trained {} model: n={} d={} null={} cutoff={} -> {}",
                model.extractor,
                model.n,
                model.d(),
                model.null_distances.len(),
                model.cutoff,
                out.display()
            );
            Ok(0)
        }
        Command::Test { model, data } => {
            let model = load_model(&model)?;
            let x = read_sample(&data)?;
            let r = dnt_test(&x, &model)?;
            println!(
                "statistic={} cutoff={} alpha={} decision={}",
                r.statistic,
                r.cutoff,
                r.alpha,
                if r.reject { "reject" } else { "accept" }
            );
            Ok(if r.reject { EXIT_REJECT } else { 0 })
        }
        Command::Power { config, out, markdown } => {
            let cfg = ConfigFile::load(&config)?.run_config()?;
            let table = run_power_study(&cfg)?;
            write(&out, emit_table(&table, TableFormat::Csv))?;
            let md = emit_table(&table, TableFormat::Markdown);
            if let Some(path) = markdown {
                write(&path, &md)?;
            }
            print!("{md}");
            Ok(0)
        }
        Command::Render { dist, n, seed, out } => {
            let spec = DistributionSpec::parse_label(&dist)?;
            let x = sample(&spec, n, seed)?;
            let raster = rasterize(&qq_points(x.as_ref())?)?;
            raster.write_pgm(&out)?;
            println!("{} n={n} seed={seed}: {}x{} PGM -> {}", spec, raster.width(), raster.height(), out.display());
            Ok(0)
        }
        Command::Calibrate { stat, n, reps, alpha, seed } => {
            let method: Method = stat.parse()?;
            if matches!(method, Method::DntRaw | Method::DntImage) {
                return Err(Error::Config(format!(
                    "{method} cutoffs come from `dnt train`; calibrate accepts classical and image-similarity statistics"
                )));
            }
            let cfg = RunConfig {
                methods: vec![method],
                n,
                calibration_reps: reps,
                alpha,
                master_seed: seed,
                ..RunConfig::default()
            };
            let calibrated = prepare(method, &cfg)?;
            println!("{method} n={n} reps={reps} alpha={alpha} cutoff={}", calibrated.cutoff);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
