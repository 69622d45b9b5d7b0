use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use decoy_bb84::channel::Channel;
use decoy_bb84::engine::{
    compare, grid, run_trace, sweep, write_comparison_csv, write_sweep_csv, EngineKind, MonteCarloConfig, PeakClass,
    SweepSpec, TraceConfig,
};
use decoy_bb84::keyrate::Regime;
use decoy_bb84::params::{Protocol, SystemParams};
use decoy_bb84::rx::write_histograms_csv;

#[derive(Parser)]
#[command(name = "bb84sim", version, about = "Decoy-state time-bin BB84 simulator and key-rate calculator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep a channel grid and write one CSV row per (point, protocol, regime).
    Run(RunArgs),
    /// Simulate the repeated-pattern trace mode and write the folded histograms.
    Trace(TraceArgs),
    /// Asymptotic polar/phase rate ratio over an attenuation grid.
    Compare(CompareArgs),
    /// Print every parameter with its default value.
    Defaults,
}

#[derive(Clone, Copy, ValueEnum)]
enum Engine {
    Analytic,
    Mc,
}

#[derive(Args)]
struct Common {
    /// `key = value` parameter file applied over the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated protocols: polar, phase.
    #[arg(long, value_delimiter = ',', default_value = "polar")]
    protocol: Vec<Protocol>,
    #[arg(long, value_enum, default_value = "analytic")]
    engine: Engine,
    /// Fiber lengths A:B:STEP (km), or a single length.
    #[arg(long, conflicts_with = "atten_db", required_unless_present = "atten_db")]
    fiber_km: Option<String>,
    /// Attenuations A:B:STEP (dB), or a single value.
    #[arg(long)]
    atten_db: Option<String>,
    /// Comma-separated regimes: finite, asymptotic.
    #[arg(long, value_delimiter = ',', default_value = "finite,asymptotic")]
    regime: Vec<Regime>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo symbols per measurement session.
    #[arg(long, default_value_t = 100_000_000)]
    symbols: u64,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 10_000_000)]
    symbols: u64,
    #[arg(long, default_value_t = 1024)]
    pattern_length: usize,
    #[arg(long, default_value_t = 15.0)]
    atten_db: f64,
    #[arg(long, default_value_t = 100.0)]
    bin_ps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    /// Attenuations A:B:STEP (dB).
    #[arg(long, default_value = "0:40:1")]
    atten_db: String,
}

/// Parses `A:B:STEP` or a single value.
fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = text
        .split(':')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad number `{s}` in `{text}`")))
        .collect::<Result<_>>()?;
    match parts[..] {
        [v] => Ok(vec![v]),
        [a, b, step] => Ok(grid(a, b, step)?),
        _ => bail!("expected A:B:STEP or a single value, got `{text}`"),
    }
}

fn load_params(path: Option<&Path>) -> Result<SystemParams> {
    match path {
        Some(p) => SystemParams::load(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(SystemParams::default()),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(args: RunArgs) -> Result<()> {
    let params = load_params(args.common.config.as_deref())?;
    let channels = match (&args.fiber_km, &args.atten_db) {
        (Some(km), _) => parse_grid(km)?.into_iter().map(Channel::fiber).collect::<Result<Vec<_>, _>>()?,
        (None, Some(db)) => parse_grid(db)?.into_iter().map(Channel::attenuator).collect::<Result<Vec<_>, _>>()?,
        (None, None) => bail!("one of --fiber-km or --atten-db is required"),
    };
    let engine = match args.engine {
        Engine::Analytic => EngineKind::Analytic,
        Engine::Mc => {
            EngineKind::MonteCarlo(MonteCarloConfig { symbols_per_session: args.symbols, ..Default::default() })
        }
    };
    let spec = SweepSpec { channels, protocols: args.protocol, regimes: args.regime, engine, seed: args.seed };
    let rows = sweep(&spec, &params)?;
    info!("{} rows", rows.len());
    let mut w = output(args.common.out.as_deref())?;
    write_sweep_csv(&rows, &mut w)?;
    w.flush()?;
    Ok(())
}

fn trace(args: TraceArgs) -> Result<()> {
    let params = load_params(args.common.config.as_deref())?;
    let cfg = TraceConfig {
        symbols: args.symbols,
        pattern_length: args.pattern_length,
        channel: Channel::attenuator(args.atten_db)?,
        bin_width: args.bin_ps * 1e-12,
        seed: args.seed,
    };
    let out = run_trace(&params, &cfg)?;
    let a = &out.analysis;
    for class in PeakClass::ALL {
        let (r, sigma) = a.ratio(class);
        eprintln!(
            "{class}: {} peaks, ratio {r:.4} ± {sigma:.4} (ideal {:.4})",
            a.stats(class).peaks,
            class.expected_ratio(a.visibility)
        );
    }
    let mut w = output(args.common.out.as_deref())?;
    write_histograms_csv(&out.histograms, &mut w)?;
    w.flush()?;
    Ok(())
}

fn compare_cmd(args: CompareArgs) -> Result<()> {
    let params = load_params(args.common.config.as_deref())?;
    let cmp = compare(&params, &parse_grid(&args.atten_db)?)?;
    match &cmp.mean_ratio {
        Ok(r) => eprintln!("mean polar/phase ratio {r:.4}"),
        Err(e) => eprintln!("mean ratio undefined: {e}"),
    }
    let mut w = output(args.common.out.as_deref())?;
    write_comparison_csv(&cmp, &mut w)?;
    w.flush()?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run(a) => run(a),
        Command::Trace(a) => trace(a),
        Command::Compare(a) => compare_cmd(a),
        Command::Defaults => {
            print!("{}", SystemParams::default().to_config_string());
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("5").unwrap(), vec![5.0]);
        assert_eq!(parse_grid("0:10:5").unwrap(), vec![0.0, 5.0, 10.0]);
        assert!(parse_grid("0:10").is_err());
        assert!(parse_grid("a:1:1").is_err());
        assert!(parse_grid("10:0:1").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
