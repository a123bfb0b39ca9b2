use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};

use clap::{Parser, Subcommand, ValueEnum};
use dynprice::experiments::config::{canned_sweep, NamedScale, SweepKind};
use dynprice::experiments::generate::{generate_instance, ScaleSpec};
use dynprice::experiments::output::{emit_csv, emit_manifest, load_config_or_manifest, Manifest};
use dynprice::experiments::validate::run_checks;
use dynprice::experiments::{run_grid, ExperimentConfig};
use dynprice::model::InstanceFile;
use dynprice::rng::StreamKey;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_VALIDATION: u8 = 3;

#[derive(Parser)]
#[command(name = "dynprice", version, about = "Network revenue management experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the experiment grid described by a config or manifest file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run one of the canned sweeps.
    Sweep {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        scale: u8,
        /// Comma-separated grid replacing the default one.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Write a generated instance as JSON.
    GenInstance {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        scale: u8,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        horizon: usize,
    },
    /// Run the built-in self-checks.
    Validate,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Horizon,
    Epsilon0,
    Rho,
    Zeta,
    Sigma,
}

impl From<Kind> for SweepKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Horizon => SweepKind::Horizon,
            Kind::Epsilon0 => SweepKind::Epsilon0,
            Kind::Rho => SweepKind::Rho,
            Kind::Zeta => SweepKind::Zeta,
            Kind::Sigma => SweepKind::Sigma,
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8) -> impl FnOnce(String) -> Failure {
    move |message| Failure { code, message }
}

fn git_rev() -> Option<String> {
    let out = Command::new("git").args(["rev-parse", "--short", "HEAD"]).output().ok()?;
    if !out.status.success() {
        return None;
    }
    let rev = String::from_utf8(out.stdout).ok()?.trim().to_string();
    (!rev.is_empty()).then_some(rev)
}

fn execute(cfg: &ExperimentConfig, out: &Path, workers: Option<usize>) -> Result<(), Failure> {
    let cells = run_grid(cfg, workers).map_err(fail(EXIT_RUNTIME))?;
    std::fs::create_dir_all(out).map_err(|e| fail(EXIT_RUNTIME)(format!("{}: {e}", out.display())))?;
    let csv_path = out.join("results.csv");
    emit_csv(&cells, &csv_path).map_err(|e| fail(EXIT_RUNTIME)(e.to_string()))?;
    emit_manifest(&Manifest::new(cfg, git_rev()), &out.join("manifest.json"))
        .map_err(|e| fail(EXIT_RUNTIME)(e.to_string()))?;
    let failed: usize = cells.iter().map(|c| c.failures.len()).sum();
    if failed > 0 {
        eprintln!("warning: {failed} episodes failed and were excluded");
    }
    println!("wrote {} rows to {}", cells.len(), csv_path.display());
    Ok(())
}

fn named(scale: u8) -> NamedScale {
    if scale == 1 {
        NamedScale::Scale1
    } else {
        NamedScale::Scale2
    }
}

fn dispatch(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Run { config, out, workers } => {
            let bytes = std::fs::read(&config).map_err(|e| fail(EXIT_CONFIG)(format!("{}: {e}", config.display())))?;
            let cfg = load_config_or_manifest(&bytes).map_err(|e| fail(EXIT_CONFIG)(e.to_string()))?;
            execute(&cfg, &out, workers)
        }
        Cmd::Sweep { kind, scale, grid, reps, seed, out, workers } => {
            let mut cfg = canned_sweep(kind.into(), named(scale), grid).map_err(|e| fail(EXIT_CONFIG)(e.to_string()))?;
            if let Some(r) = reps {
                cfg.reps = r;
            }
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            cfg.validate().map_err(|e| fail(EXIT_CONFIG)(e.to_string()))?;
            execute(&cfg, &out, workers)
        }
        Cmd::GenInstance { scale, seed, out, horizon } => {
            if horizon == 0 {
                return Err(fail(EXIT_CONFIG)("horizon must be positive".into()));
            }
            let spec = ScaleSpec::by_number(scale).expect("scale checked by the parser");
            let inst = generate_instance(&spec, horizon, StreamKey::new(seed, 0, horizon as u64))
                .map_err(|e| fail(EXIT_RUNTIME)(e.to_string()))?;
            let mut text = serde_json::to_vec_pretty(&InstanceFile::from(&inst)).map_err(|e| fail(EXIT_RUNTIME)(e.to_string()))?;
            text.push(b'\n');
            std::fs::write(&out, text).map_err(|e| fail(EXIT_RUNTIME)(format!("{}: {e}", out.display())))?;
            Ok(())
        }
        Cmd::Validate => {
            let mut ok = true;
            for r in run_checks() {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
                ok &= r.passed;
            }
            if ok {
                Ok(())
            } else {
                Err(fail(EXIT_VALIDATION)("some checks failed".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which is reserved for runtime failures here.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
