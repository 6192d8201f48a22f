//! `feddst` command-line runner.

mod args;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use log::info;

use feddst::experiment::{
    cap_statistics, default_caps, emit_metrics, read_metrics, run_experiment, run_multi_seed, write_metrics, CapStats,
    RoundMetrics,
};

use args::{CapsArgs, Cli, Command, ExperimentArgs, MultiSeedArgs};

type BoxError = Box<dyn std::error::Error>;

const DEFAULT_CAP_STEPS: usize = 10;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            eprintln!("{}", text.lines().next().unwrap_or("error: invalid arguments"));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), BoxError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Run(a) => run_single(a),
        Command::MultiSeed(a) => run_seeds(a),
        Command::Caps(a) => caps(a),
    }
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".config.toml");
    PathBuf::from(s)
}

fn run_single(a: ExperimentArgs) -> Result<(), BoxError> {
    let a = a.with_file()?;
    let cfg = a.resolve()?;
    cfg.validate()?;
    let data = cfg.load_data()?;
    info!("{} on {} with seed {}", cfg.algorithm.algorithm, cfg.dataset, cfg.seed);
    let out = run_experiment(&cfg, &data)?;
    match &cfg.output {
        Some(path) => fs::write(sidecar(path), a.resolved_file(&cfg))?,
        None => write_metrics(&out.metrics, io::stdout().lock())?,
    }
    Ok(())
}

fn write_summary<W: Write>(stats: &[CapStats], mut out: W) -> io::Result<()> {
    writeln!(out, "cap_bytes,mean_accuracy,std_accuracy")?;
    let cell = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:?}"));
    for s in stats {
        writeln!(out, "{},{},{}", s.cap_bytes, cell(s.mean), cell(s.std))?;
    }
    out.flush()
}

fn caps_or_default(caps: Vec<u64>, per_seed: &[Vec<RoundMetrics>]) -> Vec<u64> {
    if caps.is_empty() {
        default_caps(per_seed, DEFAULT_CAP_STEPS)
    } else {
        caps
    }
}

fn run_seeds(a: MultiSeedArgs) -> Result<(), BoxError> {
    let exp = a.experiment.with_file()?;
    let mut cfg = exp.resolve()?;
    cfg.output = None;
    cfg.validate()?;
    let data = cfg.load_data()?;
    let mut report = run_multi_seed(&cfg, &data, &a.seeds, &[])?;
    let caps = caps_or_default(a.caps, &report.per_seed);
    report.stats = cap_statistics(&report.per_seed, &caps)?;
    match &a.output_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            for (seed, metrics) in report.seeds.iter().zip(&report.per_seed) {
                let path = dir.join(format!("seed_{seed}.csv"));
                emit_metrics(metrics, &path)?;
                let seeded = feddst::experiment::ExperimentConfig { seed: *seed, ..cfg.clone() };
                fs::write(sidecar(&path), exp.resolved_file(&seeded))?;
            }
            write_summary(&report.stats, fs::File::create(dir.join("summary.csv"))?)?;
        }
        None => write_summary(&report.stats, io::stdout().lock())?,
    }
    Ok(())
}

fn caps(a: CapsArgs) -> Result<(), BoxError> {
    let per_seed = a
        .metrics
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            read_metrics(&text).map_err(|e| format!("{}: {e}", p.display()).into())
        })
        .collect::<Result<Vec<_>, BoxError>>()?;
    let caps = caps_or_default(a.caps, &per_seed);
    write_summary(&cap_statistics(&per_seed, &caps)?, io::stdout().lock())?;
    Ok(())
}
