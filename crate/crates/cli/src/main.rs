use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use lhv_swap::oracle::fixture;
use lhv_swap::runner::{self, OutputFormat, Scenario, ScenarioConfig};
use lhv_swap::{AnglePair, BobSweep, SphereGrid};

#[derive(Parser, Debug)]
#[command(name = "lhvswap", version, about = "Local hidden-variable Bell test and entanglement swapping experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one scenario at every analyzer setting.
    Run(Common),
    /// Bell-result probability of the complete swap against the acceptance limit.
    SweepLimit(Common),
    /// Werner fidelity of the swapped pair against the acceptance limit.
    FidelityCurve(Common),
    /// Sweep Bob's analyzer through a plane and fit sinusoids.
    AngleSweep {
        #[command(flatten)]
        common: Common,
        /// Start from a reference setup (4 or 5); other flags still apply.
        #[arg(long, conflicts_with = "config")]
        figure: Option<u8>,
    },
    /// Check closed forms against Monte Carlo and quadrature. Exits with
    /// status 2 when any check fails.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Quadrature grid size (even, twice an odd number).
        #[arg(long, default_value_t = 102)]
        grid: usize,
    },
    /// Regenerate the quadrature reference values.
    Oracle {
        #[arg(long, default_value_t = SphereGrid::DEFAULT_PRODUCT)]
        grid: usize,
        #[arg(long, default_value = "oracle_reference.tsv")]
        out: PathBuf,
    },
}

/// Flags shared by the experiment commands. Each one overrides the
/// matching field of `--config`.
#[derive(Args, Debug)]
struct Common {
    /// TOML scenario file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// singlet, partial_swap or complete_swap.
    #[arg(long)]
    scenario: Option<Scenario>,
    /// Partial-swap efficiency.
    #[arg(long)]
    eta: Option<f64>,
    /// Complete-swap acceptance limit.
    #[arg(long)]
    limit: Option<f64>,
    /// Comma list or start:stop:step (stop included).
    #[arg(long, value_parser = parse_limits)]
    limits: Option<LimitList>,
    /// Trials per analyzer setting.
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Independent random substreams; output depends on this, not on threads.
    #[arg(long)]
    shards: Option<usize>,
    /// Alice's analyzer as "theta,phi" in degrees.
    #[arg(long, allow_hyphen_values = true)]
    alice: Option<AnglePair>,
    /// Bob's analyzer as "theta,phi"; repeat for several settings.
    #[arg(long, allow_hyphen_values = true)]
    bob: Vec<AnglePair>,
    /// e.g. "plane=xz,start=0,stop=360,step=5" (stop excluded).
    #[arg(long, conflicts_with = "bob")]
    bob_sweep: Option<BobSweep>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<OutputFormat>,
}

#[derive(Clone, Debug, PartialEq)]
struct LimitList(Vec<f64>);

fn parse_limits(s: &str) -> Result<LimitList, String> {
    parse_limit_values(s).map(LimitList)
}

fn parse_limit_values(s: &str) -> Result<Vec<f64>, String> {
    let num = |x: &str| x.trim().parse::<f64>().map_err(|_| format!("`{x}` is not a number"));
    if let Some((start, rest)) = s.split_once(':') {
        let (stop, step) = rest.split_once(':').ok_or("expected start:stop:step")?;
        let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
        if !(step > 0.0) || stop < start {
            return Err("need step > 0 and stop >= start".into());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        // Round away the accumulated binary error so 0:1:0.1 prints as 0.3, not 0.30000000000000004.
        return Ok((0..=n).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect());
    }
    s.split(',').map(num).collect()
}

impl Common {
    fn resolve(&self, base: Option<ScenarioConfig>) -> Result<ScenarioConfig> {
        let mut cfg = match (&self.config, base) {
            (Some(path), _) => {
                ScenarioConfig::load(path).with_context(|| format!("reading {}", path.display()))?
            }
            (None, Some(b)) => b,
            (None, None) => ScenarioConfig::default(),
        };
        if let Some(s) = self.scenario {
            cfg.scenario = s;
        }
        if self.eta.is_some() {
            cfg.eta = self.eta;
        }
        if self.limit.is_some() {
            cfg.limit = self.limit;
        }
        if let Some(LimitList(l)) = &self.limits {
            cfg.limits = Some(l.clone());
        }
        if self.samples.is_some() {
            cfg.n_trials = self.samples;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(shards) = self.shards {
            cfg.n_shards = shards;
        }
        if let Some(a) = self.alice {
            cfg.alice_setting = a;
        }
        if !self.bob.is_empty() {
            cfg.bob_settings = Some(self.bob.clone());
            cfg.bob_sweep = None;
        }
        if let Some(sweep) = self.bob_sweep {
            cfg.bob_sweep = Some(sweep);
            cfg.bob_settings = None;
        }
        if let Some(out) = &self.out {
            cfg.output_path = Some(out.clone());
        }
        if let Some(f) = self.format {
            cfg.output_format = f;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(common) => {
            let cfg = common.resolve(None)?;
            let rows = runner::cmd_run(&cfg)?;
            runner::emit_table(&rows, cfg.output_format, cfg.output_path.as_deref())?;
        }
        Command::SweepLimit(common) => {
            let cfg = common.resolve(None)?;
            let rows = runner::cmd_sweep_limit(&cfg)?;
            runner::emit_table(&rows, cfg.output_format, cfg.output_path.as_deref())?;
        }
        Command::FidelityCurve(common) => {
            let cfg = common.resolve(None)?;
            let rows = runner::cmd_fidelity_curve(&cfg)?;
            runner::emit_table(&rows, cfg.output_format, cfg.output_path.as_deref())?;
        }
        Command::AngleSweep { common, figure } => {
            let base = match figure {
                Some(f) => Some(runner::figure_preset(f, &fixture::reference()?)?),
                None => None,
            };
            let cfg = common.resolve(base)?;
            let report = runner::cmd_angle_sweep(&cfg)?;
            runner::emit_angle_sweep(&report, cfg.output_format, cfg.output_path.as_deref())?;
        }
        Command::Verify { common, grid } => {
            let cfg = common.resolve(None)?;
            let grid = SphereGrid::square(grid)?;
            let rows = runner::cmd_verify(&cfg, &grid)?;
            runner::emit_table(&rows, cfg.output_format, cfg.output_path.as_deref())?;
            let failed: Vec<&str> = rows.iter().filter(|r| !r.pass).map(|r| r.quantity.as_str()).collect();
            eprintln!("verify: {}/{} checks passed", rows.len() - failed.len(), rows.len());
            if !failed.is_empty() {
                for q in failed {
                    eprintln!("  FAIL {q}");
                }
                return Ok(ExitCode::from(2));
            }
        }
        Command::Oracle { grid, out } => {
            let grid = SphereGrid::square(grid)?;
            if grid.coarsened().is_none() {
                bail!("grid {} has no coarser companion for error bounds", grid.n_z());
            }
            let t = Instant::now();
            let f = runner::cmd_oracle(&grid, &out, |label| {
                eprintln!("[{:>7.1}s] {label}", t.elapsed().as_secs_f64())
            })?;
            eprintln!("wrote {} values to {}", f.len(), out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limits_forms() {
        assert_eq!(parse_limits("0,0.5,1").unwrap(), LimitList(vec![0.0, 0.5, 1.0]));
        let r = parse_limit_values("0:1:0.1").unwrap();
        assert_eq!(r.len(), 11);
        assert_eq!(r[3], 0.3);
        assert_eq!(r[10], 1.0);
        assert!(parse_limits("0:1").is_err());
        assert!(parse_limits("0:1:0").is_err());
        assert!(parse_limits("a,b").is_err());
    }

    #[test]
    fn cli_is_well_formed() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
