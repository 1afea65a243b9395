//! Command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::certificate::{replay, sha256_hex, CertificateDump};
use crate::config::{parse_classes, parse_horizons, RunConfig};
use crate::run::{describe, execute, write_outputs};

/// Exit codes.
pub const EXIT_OK: u8 = 0;
/// A solve failed numerically, or a replayed certificate was rejected.
pub const EXIT_FAILED: u8 = 1;
/// Unreadable, unparsable or dimensionally inconsistent input.
pub const EXIT_INPUT: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "iqc", version, about = "Certified l2-gain bounds for Lurye loops with ReLU or slope-restricted nonlinearities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a certification sweep (the default).
    Run(RunArgs),
    /// Re-check dumped certificates against the plant of a config.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Default)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated subset of relu,slope.
    #[arg(long, value_parser = parse_classes)]
    pub classes: Option<std::vec::Vec<iqc_core::multiplier::MultiplierClass>>,
    /// Inclusive range `0..3` or list `0,1,3`.
    #[arg(long, value_parser = parse_horizons)]
    pub horizons: Option<std::vec::Vec<usize>>,
    /// Parse, build the filters and augmented plants, report dimensions.
    #[arg(long)]
    pub validate_only: bool,
    /// Exit 0 even if some solve fails numerically.
    #[arg(long)]
    pub keep_going: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write every optimal certificate for later replay.
    #[arg(long)]
    pub dump_certificates: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// A certificate file or a directory of them.
    #[arg(long)]
    pub certificate: PathBuf,
    /// Multiply each certificate's γ before checking.
    #[arg(long, default_value_t = 1.0)]
    pub gamma_scale: f64,
}

pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { EXIT_OK });
        }
    };
    let code = match cli.command {
        Some(Command::Run(args)) => run(&args),
        Some(Command::Replay(args)) => replay_cmd(&args),
        None => run(&cli.run),
    };
    ExitCode::from(code)
}

fn load(path: &Path) -> Result<(RunConfig, String), u8> {
    let cfg = RunConfig::load(path).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_INPUT
    })?;
    let text = std::fs::read(path).unwrap_or_default();
    Ok((cfg, sha256_hex(&text)))
}

pub fn run(args: &RunArgs) -> u8 {
    let Some(path) = &args.config else {
        eprintln!("error: --config <path> is required");
        return EXIT_INPUT;
    };
    let (mut cfg, digest) = match load(path) {
        Ok(x) => x,
        Err(code) => return code,
    };
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    if let Some(c) = &args.classes {
        cfg.analysis.classes = c.clone();
    }
    if let Some(h) = &args.horizons {
        cfg.analysis.horizons = h.clone();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let plant = match cfg.validate() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INPUT;
        }
    };

    if args.validate_only {
        return match describe(&cfg, &plant) {
            Ok(report) => {
                print!("{report}");
                EXIT_OK
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_INPUT
            }
        };
    }

    let out = match execute(&cfg, &plant, digest) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INPUT;
        }
    };
    print!("{}", out.table);
    for r in out.results.runs.iter().filter(|r| r.error.is_some()) {
        eprintln!("{} N={}: {}", r.class, r.horizon, r.error.as_deref().unwrap_or(""));
    }
    for e in &out.results.empirical {
        match (e.lower_bound, e.certified) {
            (Some(lb), Some(g)) => println!("{} empirical lower bound {lb:.6} <= certified {g:.6}: {}", e.class, e.consistent == Some(true)),
            (Some(lb), None) => println!("{} empirical lower bound {lb:.6}", e.class),
            _ => eprintln!("{} empirical gain: {}", e.class, e.error.as_deref().unwrap_or("unavailable")),
        }
    }
    match write_outputs(&cfg, &out, args.dump_certificates) {
        Ok(paths) => {
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAILED;
        }
    }
    let failures = out.results.numerical_failures();
    if failures > 0 && !args.keep_going {
        eprintln!("{failures} solve(s) failed numerically (use --keep-going to exit 0)");
        return EXIT_FAILED;
    }
    EXIT_OK
}

fn certificate_files(path: &Path) -> std::io::Result<Vec<PathBuf>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        Ok(files)
    } else {
        Ok(vec![path.to_path_buf()])
    }
}

pub fn replay_cmd(args: &ReplayArgs) -> u8 {
    let (cfg, _) = match load(&args.config) {
        Ok(x) => x,
        Err(code) => return code,
    };
    let plant = match cfg.plant.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INPUT;
        }
    };
    let files = match certificate_files(&args.certificate) {
        Ok(f) if !f.is_empty() => f,
        Ok(_) => {
            eprintln!("error: no certificates in {}", args.certificate.display());
            return EXIT_INPUT;
        }
        Err(e) => {
            eprintln!("error: {}: {e}", args.certificate.display());
            return EXIT_INPUT;
        }
    };
    let mut all_passed = true;
    for f in files {
        let report = CertificateDump::load(&f).and_then(|d| replay(&plant, &d, args.gamma_scale, cfg.solver.class_slack));
        match report {
            Ok(r) => {
                println!("{}: {}", f.display(), r.summary());
                all_passed &= r.passed();
            }
            Err(e) => {
                eprintln!("error: {}: {e}", f.display());
                return EXIT_INPUT;
            }
        }
    }
    if all_passed {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}
