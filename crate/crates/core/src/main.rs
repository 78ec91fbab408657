//! Command-line surface: `simulate`, `probe {bilinear,commutator,
//! lemma-integral,resonance}`, `picard-check`, `fit-radius`.
//!
//! Exit codes: 0 success, 2 config or precondition error, 3 divergence
//! (partial record persisted), 4 probe assertion failure, 5 Picard
//! non-convergence.

use clap::{Parser, Subcommand};
use kgs_lab::harness::{
    cmd_fit_radius, cmd_picard_check, cmd_probe_bilinear, cmd_probe_commutator,
    cmd_probe_lemma_integral, cmd_probe_resonance, cmd_simulate, resolve_out_dir, RunConfig,
};
use kgs_lab::probe::{CampaignParams, EstimateTag};
use kgs_lab::spectral::DispersionTag;
use kgs_lab::KgsError;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "kgs-lab", version, about = "Pseudospectral Klein-Gordon-Schrodinger laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation from a JSON config; writes run.json and series.csv.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the initial-data seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Numerical probes of the norm estimates.
    Probe {
        #[command(subcommand)]
        probe: ProbeCommand,
    },
    /// Picard fixed-point check: lifespan, contraction table, agreement.
    PicardCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit the decay exponent of a persisted series and check consistency.
    FitRadius {
        #[arg(long)]
        series: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        t_min: f64,
        /// Dimension for the reference exponent; defaults to the sibling
        /// run.json's config.
        #[arg(long)]
        dim: Option<usize>,
    },
}

#[derive(Subcommand)]
enum ProbeCommand {
    /// Bilinear-estimate ratio campaign.
    Bilinear {
        /// estimate1 or estimate2.
        #[arg(long)]
        tag: String,
        #[arg(long = "d")]
        d: usize,
        #[arg(long = "s", default_value_t = 0.0)]
        s: f64,
        #[arg(long = "b")]
        b: f64,
        #[arg(long)]
        bprime: f64,
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        /// Which wave space the second factor lives in: plus or minus.
        #[arg(long, default_value = "plus")]
        sign: String,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, value_delimiter = ',', default_values_t = vec![16usize, 32])]
        cutoffs: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "probes")]
        out: PathBuf,
        /// Skip window validation and stability assertions.
        #[arg(long)]
        exploratory: bool,
    },
    /// Commutator-estimate campaign over a sigma sweep.
    Commutator {
        #[arg(long = "d")]
        d: usize,
        #[arg(long = "b")]
        b: f64,
        #[arg(long)]
        bprime: f64,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.01, 0.001])]
        sigmas: Vec<f64>,
        #[arg(long, default_value = "plus")]
        sign: String,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        /// Band limit of the sweep samples; small enough that
        /// sigma * ||xi||_1 stays in the linear-response window at the
        /// largest sigma.
        #[arg(long, default_value_t = 6)]
        cutoff: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "probes")]
        out: PathBuf,
        #[arg(long)]
        exploratory: bool,
    },
    /// Convolution-integral bound probe over an (a, b) grid.
    LemmaIntegral {
        #[arg(long)]
        alpha: f64,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.6, 1.2])]
        betas: Vec<f64>,
        #[arg(long, default_value_t = 100.0)]
        range: f64,
        #[arg(long, default_value_t = 9)]
        grid_points: usize,
        #[arg(long, default_value = "probes")]
        out: PathBuf,
        #[arg(long)]
        exploratory: bool,
    },
    /// Resonance-identity residual check.
    Resonance {
        #[arg(long, default_value_t = 10000)]
        samples: usize,
        #[arg(long, default_value_t = 3)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "probes")]
        out: PathBuf,
    },
}

fn parse_tag(tag: &str) -> Result<EstimateTag, KgsError> {
    match tag {
        "estimate1" => Ok(EstimateTag::Estimate1),
        "estimate2" => Ok(EstimateTag::Estimate2),
        other => Err(KgsError::Config(format!(
            "unknown tag {other:?}: expected estimate1 or estimate2"
        ))),
    }
}

fn parse_sign(sign: &str) -> Result<DispersionTag, KgsError> {
    match sign {
        "plus" => Ok(DispersionTag::WavePlus),
        "minus" => Ok(DispersionTag::WaveMinus),
        other => Err(KgsError::Config(format!(
            "unknown sign {other:?}: expected plus or minus"
        ))),
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig, KgsError> {
    let mut config = RunConfig::load(path)?;
    if let Some(seed) = seed {
        config.initial.seed = seed;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<i32, KgsError> {
    match cli.command {
        Command::Simulate { config, out, seed } => {
            let config = load_config(&config, seed)?;
            let out_dir = resolve_out_dir(&config, out.as_deref());
            let (record, code) = cmd_simulate(&config, &out_dir)?;
            println!(
                "simulate: {} rows -> {}  (p_hat = {})",
                record.rows.len(),
                out_dir.display(),
                record
                    .p_fit
                    .map(|p| format!("{p:.4}"))
                    .unwrap_or_else(|| "n/a".into())
            );
            if let Some(f) = &record.failure {
                println!("divergence at step {} (t = {}): partial record persisted", f.step, f.time);
            }
            Ok(code)
        }
        Command::PicardCheck { config, out, seed } => {
            let config = load_config(&config, seed)?;
            let out_dir = resolve_out_dir(&config, out.as_deref());
            let (_, code) = cmd_picard_check(&config, &out_dir)?;
            Ok(code)
        }
        Command::FitRadius { series, t_min, dim } => {
            let (_, code) = cmd_fit_radius(&series, t_min, dim)?;
            Ok(code)
        }
        Command::Probe { probe } => match probe {
            ProbeCommand::Bilinear {
                tag,
                d,
                s,
                b,
                bprime,
                sigma,
                sign,
                samples,
                cutoffs,
                seed,
                out,
                exploratory,
            } => {
                let params = CampaignParams {
                    dim: d,
                    sigma,
                    s,
                    b,
                    b_prime: bprime,
                    sign: parse_sign(&sign)?,
                    seed_base: seed,
                };
                cmd_probe_bilinear(parse_tag(&tag)?, &params, samples, &cutoffs, &out, exploratory)
            }
            ProbeCommand::Commutator {
                d,
                b,
                bprime,
                sigmas,
                sign,
                samples,
                cutoff,
                seed,
                out,
                exploratory,
            } => {
                let base = CampaignParams {
                    dim: d,
                    sigma: sigmas.first().copied().unwrap_or(0.1),
                    s: 1.0,
                    b,
                    b_prime: bprime,
                    sign: parse_sign(&sign)?,
                    seed_base: seed,
                };
                cmd_probe_commutator(&base, &sigmas, samples, cutoff, &out, exploratory)
            }
            ProbeCommand::LemmaIntegral {
                alpha,
                betas,
                range,
                grid_points,
                out,
                exploratory,
            } => cmd_probe_lemma_integral(alpha, &betas, range, grid_points, &out, exploratory),
            ProbeCommand::Resonance {
                samples,
                dim,
                seed,
                out,
            } => cmd_probe_resonance(samples, dim, seed, &out),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
