use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use fiohardy::config::RunConfig;
use fiohardy::io::{self, FieldData};
use fiohardy::suite;
use fiohardy::verify::{run_verify, write_tables};
use fiohardy_core::hardy::{evaluate_norms, NormKind, NormOptions};
use fiohardy_core::packets::Which;
use fiohardy_core::tent::tent_norm;
use fiohardy_core::transforms::{adjoint, half_wave, transform};

#[derive(Parser)]
#[command(name = "fiohardy", version, about = "Wave packet transforms and Hardy space norms on the torus")]
struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set n=128`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Start from the quick preset before applying the file and overrides.
    #[arg(long, global = true)]
    fast: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a packet family and write it as FAM1.
    BuildFamily {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Apply W, V or U to a field.
    Transform {
        #[arg(long)]
        family: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "W")]
        which: String,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Apply the adjoint of W, V or U to stored coefficients.
    Reconstruct {
        #[arg(long)]
        family: PathBuf,
        #[arg(long)]
        coefficients: PathBuf,
        /// Adjoint to apply; defaults to the one pairing with the stored transform.
        #[arg(long)]
        which: Option<String>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Tent-space norm of stored coefficients.
    Tentnorm {
        #[arg(long)]
        coefficients: PathBuf,
        #[arg(long, default_value = "2")]
        p: String,
        #[arg(long, default_value_t = 1.0)]
        aperture: f64,
    },
    /// Hardy-space norms of a field, printed as JSON.
    Norm {
        #[arg(long)]
        family: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Comma-separated exponents.
        #[arg(long, default_value = "4/3,2,4")]
        p: String,
        /// Comma-separated norm kinds, or `all`.
        #[arg(long, default_value = "all")]
        kind: String,
        #[arg(long, default_value_t = 1.0)]
        aperture: f64,
    },
    /// Run the acceptance criteria and write the JSON report and CSV tables.
    Verify {
        /// Comma-separated criterion ids; all by default.
        #[arg(long)]
        criteria: Option<String>,
    },
    /// Apply the half-wave propagator `e^{it|D|}`.
    Propagate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        t: f64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Write the selected test functions as FLD1 files.
    Suite {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, short)]
        out_dir: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = if cli.fast { RunConfig::fast() } else { RunConfig::default() };
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .with_context(|| format!("{}:{}: expected 'key = value'", path.display(), lineno + 1))?;
            cfg.set(k.trim(), v.trim()).with_context(|| format!("{}:{}", path.display(), lineno + 1))?;
        }
    }
    for o in &cli.overrides {
        let (k, v) = o.split_once('=').with_context(|| format!("override '{o}' is not KEY=VALUE"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn init_threads(cfg: &RunConfig) -> Result<()> {
    let env = match std::env::var("FIOHARDY_THREADS") {
        Ok(v) => Some(v.trim().parse::<usize>().with_context(|| format!("FIOHARDY_THREADS = '{v}'"))?),
        Err(_) => None,
    };
    if let Some(t) = env.or(cfg.threads) {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("starting the worker pool")?;
    }
    Ok(())
}

fn parse_exponents(s: &str) -> Result<Vec<f64>> {
    let mut cfg = RunConfig::default();
    cfg.set("exponents", s)?;
    Ok(cfg.exponents)
}

fn load_spatial(path: &Path) -> Result<fiohardy_core::SpatialField> {
    Ok(io::load_field(path).with_context(|| format!("reading {}", path.display()))?.into_spatial())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = load_config(&cli)?;
    init_threads(&cfg)?;
    match cli.command {
        Command::BuildFamily { n, out } => {
            let n = n.unwrap_or(cfg.n);
            cfg.validate()?;
            let fam = cfg.build_family(n)?;
            let d = fam.diagnostics();
            io::save_family(&out, &fam)?;
            println!(
                "N = {n}, M = {}, K = {}: calderon {:e}, angular {:e}, partition {:e}",
                fam.directions().len(),
                fam.ladder().depth(),
                d.calderon_residual,
                d.angular_residual,
                d.partition_residual
            );
        }
        Command::Transform { family, input, which, out } => {
            let fam = io::load_family(&family)?;
            let f = load_spatial(&input)?;
            let c = transform(&fam, Which::parse(&which)?, &f)?;
            io::save_coefficients(&out, &c)?;
            println!("{} channels, norm {:e}", c.nonzero_channels().count(), c.norm());
        }
        Command::Reconstruct { family, coefficients, which, out } => {
            let fam = io::load_family(&family)?;
            let c = io::load_coefficients(&coefficients)?;
            let adj = match which {
                Some(w) => Which::parse(&w)?,
                None => match c.which() {
                    Which::V => Which::U,
                    w => w,
                },
            };
            let f = adjoint(&fam, adj, &c)?;
            io::save_field(&out, &FieldData::Spatial(f))?;
        }
        Command::Tentnorm { coefficients, p, aperture } => {
            let c = io::load_coefficients(&coefficients)?;
            for p in parse_exponents(&p)? {
                println!("p = {p}: {:e}", tent_norm(&c, p, aperture)?);
            }
        }
        Command::Norm { family, input, p, kind, aperture } => {
            let fam = io::load_family(&family)?;
            let f = load_spatial(&input)?;
            let kinds: Vec<NormKind> = if kind == "all" {
                NormKind::ALL.to_vec()
            } else {
                kind.split(',').map(|k| k.trim().parse()).collect::<fiohardy_core::Result<_>>()?
            };
            let opts = NormOptions { aperture, ..NormOptions::default() };
            let reports = evaluate_norms(&fam, &f, &parse_exponents(&p)?, &kinds, &opts)?;
            let json: Vec<_> = reports
                .iter()
                .map(|r| {
                    let mut m = serde_json::Map::new();
                    m.insert("p".into(), r.p.into());
                    m.insert("lp".into(), r.lp.into());
                    for (k, v) in &r.norms {
                        m.insert(k.name().into(), (*v).into());
                    }
                    serde_json::Value::Object(m)
                })
                .collect();
            println!("{}", serde_json::to_string_pretty(&json)?);
        }
        Command::Verify { criteria } => {
            let ids: Vec<u32> = match criteria {
                Some(s) => s
                    .split(',')
                    .map(|x| x.trim().parse().with_context(|| format!("criterion id '{x}'")))
                    .collect::<Result<_>>()?,
                None => (1..=10).collect(),
            };
            if ids.is_empty() {
                bail!("no criteria selected");
            }
            let (report_path, csv_dir) = (cfg.report.clone(), cfg.csv_dir.clone());
            let (report, tables) = run_verify(cfg, &ids, |c| println!("{}", c.summary_line()))?;
            report.write_json(&report_path)?;
            write_tables(&csv_dir, &tables)?;
            println!(
                "{} in {:.1} s; report {}, tables in {}",
                if report.passed { "PASS" } else { "FAIL" },
                report.total_seconds,
                report_path.display(),
                csv_dir.display()
            );
            if !report.passed {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Propagate { input, t, out } => {
            let f = load_spatial(&input)?;
            io::save_field(&out, &FieldData::Spatial(half_wave(&f, t)))?;
        }
        Command::Suite { n, out_dir } => {
            let grid = cfg.grid(n.unwrap_or(cfg.n))?;
            std::fs::create_dir_all(&out_dir)?;
            for t in suite::select(&cfg.suite)? {
                let path = out_dir.join(format!("{}.fld", t.id));
                io::save_field(&path, &FieldData::Spectral(t.generator.spectrum(grid)?))?;
                println!("{}", path.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
