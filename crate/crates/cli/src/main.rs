//! `entrodiff` command-line interface.
//!
//! Exit codes: 0 success, 2 configuration error, 3 positivity loss,
//! 4 step-size underflow, 5 check-suite failure, 1 other errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use entrodiff_cli::config::{self, parse_average, parse_variant, InitialSpec, Overrides, RunConfig};
use entrodiff_cli::runner::{self, RunError, EXIT_CHECK_FAILED};
use entrodiff_cli::{check, image};

#[derive(Parser)]
#[command(
    name = "entrodiff",
    version,
    about = "Entropy-dissipating finite-difference solver for fourth-order parabolic equations on the torus"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Configuration file ([section] key = value form).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Entropy exponent override.
    #[arg(long)]
    alpha: Option<f64>,
    /// Flux exponent override.
    #[arg(long)]
    beta: Option<f64>,
    /// First-order flux coefficient override.
    #[arg(long)]
    a: Option<f64>,
    /// Cubic flux coefficient override.
    #[arg(long)]
    b: Option<f64>,
    /// Nodes per axis override (also resets h to 1/n).
    #[arg(long)]
    n: Option<usize>,
    /// Grid spacing override.
    #[arg(long)]
    h: Option<f64>,
    /// Final time override.
    #[arg(long, value_name = "T")]
    t_end: Option<f64>,
    /// Output directory override.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<String>,
    /// Flux discretization: central|noncentral.
    #[arg(long, value_name = "KIND")]
    variant: Option<String>,
    /// Coefficient averaging: identity|arith|geom.
    #[arg(long, value_name = "RULE")]
    average: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the configured problem and write series/snapshot CSVs.
    Evolve(CommonArgs),
    /// Grid self-convergence study against a fine reference grid.
    Convergence {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated coarse spacings (fractions like 1/32 are fine).
        #[arg(long, value_delimiter = ',', default_values_t = ["1/32".to_string(), "1/64".to_string(), "1/128".to_string()])]
        h_list: Vec<String>,
        /// Reference spacing; must refine every entry of --h-list.
        #[arg(long, default_value = "1/512")]
        h_ref: String,
    },
    /// Smooth a grayscale image with the 2D fourth-order flow.
    Denoise {
        #[command(flatten)]
        common: CommonArgs,
        /// Input PGM; overrides the configured image path.
        #[arg(long, value_name = "PGM")]
        input: Option<String>,
        /// Positivity floor applied to dark pixels.
        #[arg(long, value_name = "F")]
        floor: Option<f64>,
    },
    /// Run the invariant suites for the configuration and print the table.
    Check(CommonArgs),
}

/// Accept either a decimal spacing or a `p/q` fraction.
fn parse_spacing(text: &str) -> Result<f64, RunError> {
    let value = match text.split_once('/') {
        Some((num, den)) => {
            let p: f64 = num
                .trim()
                .parse()
                .map_err(|_| RunError::Invalid(format!("cannot parse spacing {text:?}")))?;
            let q: f64 = den
                .trim()
                .parse()
                .map_err(|_| RunError::Invalid(format!("cannot parse spacing {text:?}")))?;
            p / q
        }
        None => text
            .trim()
            .parse()
            .map_err(|_| RunError::Invalid(format!("cannot parse spacing {text:?}")))?,
    };
    if !(value > 0.0 && value.is_finite()) {
        return Err(RunError::Invalid(format!("spacing {text:?} must be positive")));
    }
    Ok(value)
}

fn load_config(common: &CommonArgs) -> Result<RunConfig, RunError> {
    let text = std::fs::read_to_string(&common.config).map_err(|source| RunError::Io {
        path: common.config.display().to_string(),
        source,
    })?;
    let mut config = config::parse(&text)?;
    let overrides = Overrides {
        alpha: common.alpha,
        beta: common.beta,
        a: common.a,
        b: common.b,
        n: common.n,
        h: common.h,
        t_end: common.t_end,
        out_dir: common.out_dir.clone(),
        variant: common.variant.as_deref().map(parse_variant).transpose()?,
        average: common.average.as_deref().map(parse_average).transpose()?,
    };
    config::apply_overrides(&mut config, &overrides);
    Ok(config)
}

fn run(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Evolve(common) => {
            let config = load_config(&common)?;
            let outcome = runner::run_evolve(&config)?;
            println!(
                "evolved to t = {:e} in {} steps ({} rejected); wrote {} and {} snapshot(s)",
                outcome.solution.t_final,
                outcome.solution.steps_accepted,
                outcome.solution.steps_rejected,
                outcome.series_path.display(),
                outcome.snapshot_paths.len()
            );
            Ok(())
        }
        Command::Convergence { common, h_list, h_ref } => {
            let config = load_config(&common)?;
            let spacings: Vec<f64> =
                h_list.iter().map(|s| parse_spacing(s)).collect::<Result<_, _>>()?;
            let reference = parse_spacing(&h_ref)?;
            let outcome = runner::run_convergence(&config, &spacings, reference)?;
            for row in &outcome.rows {
                match row.order {
                    Some(p) => println!("h = {:<12.6e} error = {:<12.6e} order = {p:.3}", row.h, row.error),
                    None => println!("h = {:<12.6e} error = {:<12.6e}", row.h, row.error),
                }
            }
            println!("wrote {}", outcome.csv_path.display());
            Ok(())
        }
        Command::Denoise { common, input, floor } => {
            let mut config = load_config(&common)?;
            let default_floor = floor.unwrap_or(image::DEFAULT_IMAGE_FLOOR);
            config.initial = match (config.initial, input) {
                (InitialSpec::Image { path: _, floor: f }, Some(cli_path)) => {
                    InitialSpec::Image { path: cli_path, floor: floor.unwrap_or(f) }
                }
                (InitialSpec::Image { path, floor: f }, None) => {
                    InitialSpec::Image { path, floor: floor.unwrap_or(f) }
                }
                (_, Some(cli_path)) => {
                    InitialSpec::Image { path: cli_path, floor: default_floor }
                }
                (other, None) => {
                    let _ = other;
                    return Err(RunError::Invalid(
                        "denoise needs an image: set [initial] preset = image or pass --input".to_string(),
                    ));
                }
            };
            let outcome = runner::run_denoise(&config)?;
            println!(
                "denoised through t = {:e}; wrote {} PGM snapshot(s) and {}",
                outcome.solution.t_final,
                outcome.pgm_paths.len(),
                outcome.series_path.display()
            );
            Ok(())
        }
        Command::Check(common) => {
            let config = load_config(&common)?;
            let report = check::run_check(&config)?;
            print!("{}", report.render_table());
            if report.passed() {
                Ok(())
            } else {
                std::process::exit(EXIT_CHECK_FAILED);
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(runner::exit_code(&err) as u8)
        }
    }
}
