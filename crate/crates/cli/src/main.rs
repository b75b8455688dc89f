//! Command-line driver: calibrate interpolation constants, verify
//! displacement of the assembled diffeomorphisms, sweep analytic costs
//! over scales, evaluate norms of built-in fields, and render stored run
//! reports.

use clap::{Parser, Subcommand};
use critflow_core::norms::{gagliardo_seminorm, gn_bound_a, gn_bound_b, EstimateMethod, NormEstimate};
use critflow_core::xp::{
    render_report_lines, run_calibrate, run_sweep, run_verify, XpError,
};
use critflow_core::{ExperimentConfig, FieldDescriptor, NormMethod, SamplerConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "critflow", version, about = "Short paths to displacement in the critical Sobolev metric")]
struct Cli {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the Monte Carlo seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the scale list, e.g. --k 2 or --k 1,2,3.
    #[arg(long, global = true, value_delimiter = ',')]
    k: Option<Vec<u64>>,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Norm route: gn-a, gn-b or mc.
    #[arg(long, global = true)]
    norm_method: Option<String>,
    /// Clamp widths at 10^FLOOR (log10 of the lambda floor).
    #[arg(long, global = true, allow_hyphen_values = true, value_name = "FLOOR")]
    clamp: Option<f64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Pin the interpolation constants on the built-in bump family.
    Calibrate,
    /// Build Φ_k for each configured k, probe displacement, report costs.
    Verify,
    /// Tabulate analytic stage costs over scales as CSV.
    Sweep,
    /// Evaluate a norm of a built-in field: chi, bump, bump-4, bump-16, xi.
    Norm { field: String },
    /// Render stored JSON-line run reports as a table.
    Report { path: PathBuf },
}

fn parse_norm_method(s: &str) -> Result<NormMethod, XpError> {
    match s {
        "gn-a" => Ok(NormMethod::GnBoundA),
        "gn-b" => Ok(NormMethod::GnBoundB),
        "mc" => Ok(NormMethod::GagliardoMc),
        other => Err(XpError::Config(format!(
            "unknown norm method {other:?}; expected gn-a, gn-b or mc"
        ))),
    }
}

/// Load the config and apply CLI overrides. `apply_k` is off for sweeps,
/// whose scales may exceed what flows can be built for.
fn load_config(cli: &Cli, apply_k: bool) -> Result<ExperimentConfig, XpError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let (true, Some(ks)) = (apply_k, &cli.k) {
        cfg.ks = ks
            .iter()
            .map(|&k| {
                u32::try_from(k)
                    .map_err(|_| XpError::Config(format!("k={k} is too large to build flows for")))
            })
            .collect::<Result<_, _>>()?;
    }
    if let Some(m) = &cli.norm_method {
        cfg.norm_method = parse_norm_method(m)?;
    }
    if let Some(floor) = cli.clamp {
        cfg.log10_lambda_floor = Some(floor);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(out: &Option<PathBuf>, text: &str) -> std::io::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn builtin_field(name: &str, cfg: &ExperimentConfig) -> Result<FieldDescriptor, XpError> {
    let n = cfg.n as usize;
    match name {
        "chi" => Ok(FieldDescriptor::chi(n)),
        "bump" => Ok(FieldDescriptor::radial_bump(n, 1.0)),
        "bump-4" => Ok(FieldDescriptor::radial_bump(n, 0.25)),
        "bump-16" => Ok(FieldDescriptor::radial_bump(n, 0.0625)),
        "xi" => {
            let k = *cfg.ks.first().expect("validated config has ks");
            let params = cfg.params_for(k)?;
            Ok(params.capacity().descriptor(vec![0.0; n]))
        }
        other => Err(XpError::Config(format!(
            "unknown field {other:?}; expected chi, bump, bump-4, bump-16 or xi"
        ))),
    }
}

fn norm_of(field: &FieldDescriptor, cfg: &ExperimentConfig) -> Result<NormEstimate, XpError> {
    let sp = cfg.sobolev().map_err(XpError::Norm)?;
    let mc = cfg.mc();
    Ok(match cfg.norm_method {
        NormMethod::GagliardoMc => gagliardo_seminorm(field, &sp, &mc)?,
        NormMethod::GnBoundA => {
            let c = cfg.c_a.unwrap_or(1.0);
            let v = gn_bound_a(field, &sp, c, &field.support(), &SamplerConfig::MonteCarlo(mc))?;
            NormEstimate::deterministic(v, EstimateMethod::GnBoundA)
        }
        NormMethod::GnBoundB => {
            let c = cfg.c_b.unwrap_or(1.0);
            let v = gn_bound_b(field, &sp, c, &field.support(), &SamplerConfig::MonteCarlo(mc))?;
            NormEstimate::deterministic(v, EstimateMethod::GnBoundB)
        }
    })
}

/// Returns false when some verification failed (exit 1).
fn run(cli: &Cli) -> Result<bool, XpError> {
    match &cli.cmd {
        Cmd::Calibrate => {
            let cfg = load_config(cli, true)?;
            let rec = run_calibrate(&cfg)?;
            let text = serde_json::to_string_pretty(&rec).expect("record serializes") + "\n";
            emit(&cli.out, &text)?;
            Ok(true)
        }
        Cmd::Verify => {
            let cfg = load_config(cli, true)?;
            let reports = run_verify(&cfg)?;
            let mut text = String::new();
            for r in &reports {
                text.push_str(&r.to_json_line());
                text.push('\n');
            }
            emit(&cli.out, &text)?;
            for r in &reports {
                eprintln!(
                    "k={} {} (min final x {:.4}, log total cost {:.4})",
                    r.k,
                    if r.displacement_pass { "PASS" } else { "FAIL" },
                    r.min_final_x,
                    r.costs.log_total,
                );
            }
            Ok(reports.iter().all(|r| r.displacement_pass))
        }
        Cmd::Sweep => {
            let cfg = load_config(cli, false)?;
            let ks: Vec<u64> = match &cli.k {
                Some(ks) => ks.clone(),
                None => (0..=20).map(|j| 1u64 << j).collect(),
            };
            let table = run_sweep(&cfg, &ks)?;
            emit(&cli.out, &table.to_csv())?;
            Ok(table.rows.iter().all(|r| r.displacement_pass != Some(false)))
        }
        Cmd::Norm { field } => {
            let cfg = load_config(cli, true)?;
            let f = builtin_field(field, &cfg)?;
            let est = norm_of(&f, &cfg)?;
            let line = serde_json::json!({
                "field": field,
                "method": est.method,
                "value": est.value,
                "stderr": est.stderr,
                "samples": est.sample_count,
            });
            emit(&cli.out, &(line.to_string() + "\n"))?;
            Ok(true)
        }
        Cmd::Report { path } => {
            let text = std::fs::read_to_string(path)?;
            let rendered = render_report_lines(&text)?;
            emit(&cli.out, &rendered)?;
            Ok(!rendered.contains("FAIL"))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                XpError::Config(_) | XpError::Io(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
