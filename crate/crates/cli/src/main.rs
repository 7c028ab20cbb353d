//! Command-line interface: data generation, candidate search, exact
//! certification, catalog queries, witness evaluation, round sampling and
//! estimation, and batch scans.
//!
//! Exit codes: 0 success (including a certified violation), 3 no violation
//! found, 2 malformed input, 4 enumeration cap exceeded.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pibell_core::error::Error as CoreError;
use pibell_core::optimizer::{solve, Gauge, SolverConfig};
use pibell_core::oracle::{certify, lv_moment_data, seeded_lv_model, BellCandidate, LvModel};
use pibell_core::sampling::{
    estimate, rounds_from_csv, rounds_to_csv, sample_rounds, RNG_ALGORITHM,
};
use pibell_core::scans;
use pibell_core::scenario::{
    apply_white_noise, singlet_data, squeezed_data, AngleSet, CollectiveMomentModel, QuantumData,
    Scenario, SqueezedParams,
};
use pibell_core::{catalog, Result as CoreResult};

#[derive(Parser)]
#[command(
    name = "pibell",
    version,
    about = "Permutationally-invariant Bell inequalities from averaged two-body correlations",
    after_help = "Exit codes: 0 success / violation, 3 no violation, 2 input error, \
                  4 enumeration cap exceeded.\n\
                  PIBELL_THREADS limits the worker-thread count."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate coarse-grained moment data (JSON on stdout or --out)
    Gen {
        #[command(subcommand)]
        source: GenSource,
    },
    /// Search for a violated inequality tailored to the data
    Find(FindArgs),
    /// Exactly certify a candidate inequality against data
    Certify {
        /// QuantumData JSON file
        #[arg(long)]
        data: PathBuf,
        /// BellCandidate JSON file
        #[arg(long)]
        candidate: PathBuf,
    },
    /// Query the analytic inequality catalog
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
    /// Evaluate a collective-moment witness against a moment model
    Witness {
        /// Witness name: witness_singlet_k, witness_singlets_1,
        /// witness_singlets_2, witness_su2, tura_tight, squeezed_spin_j,
        /// squeezed_alt
        name: String,
        /// CollectiveMomentModel JSON file
        #[arg(long)]
        moments: PathBuf,
        /// Comma-separated key=value parameters (e.g. k=3, t=1.0472)
        #[arg(long, value_delimiter = ',')]
        param: Vec<String>,
        /// Catalog entry backing witness_su2 (default singlet_anyj)
        #[arg(long)]
        entry: Option<String>,
    },
    /// Simulate measurement rounds on a local-variable model (CSV)
    Sample {
        /// LvModel JSON file
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        rounds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate moment data from recorded rounds
    Estimate {
        /// Round CSV file ('-' or omitted reads stdin)
        #[arg(long)]
        rounds: Option<PathBuf>,
        #[arg(long)]
        two_j: u32,
        /// Seed recorded in the metadata block (informational)
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Batch scans writing CSV tables
    Scan {
        #[command(subcommand)]
        kind: ScanKind,
    },
}

#[derive(Subcommand)]
enum GenSource {
    /// SU(2)-invariant (singlet-type) data
    Singlet {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        two_j: u32,
        /// Comma-separated measurement angles in radians
        #[arg(long)]
        angles: String,
        /// Isotropic collective variance (0 = perfect singlet)
        #[arg(long, default_value_t = 0.0)]
        var: f64,
        /// White-noise fraction applied to the data
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Planar spin-squeezed data
    Squeezed {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        two_j: u32,
        /// Rabi contrast 2<Jx>/N
        #[arg(long)]
        mx: f64,
        /// Scaled transverse variance 4 Var(Jy)/N
        #[arg(long)]
        chi2: f64,
        /// Per-particle <Sx^2> (defaults to j^2; 1/4 for spin-1/2)
        #[arg(long)]
        sx2: Option<f64>,
        /// Per-particle <Sy^2> (defaults to j/2; 1/4 for spin-1/2)
        #[arg(long)]
        sy2: Option<f64>,
        /// Var(Jx) override (defaults to N chi2 / 4)
        #[arg(long)]
        varx: Option<f64>,
        /// Angles; defaults to the optimal two-setting pair (theta, -theta)
        #[arg(long)]
        angles: Option<String>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Moments of a random local-variable mixture
    Lv {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        two_j: u32,
        #[arg(long)]
        k: usize,
        /// Maximum number of mixture components
        #[arg(long, default_value_t = 4)]
        strategies: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the generated LvModel JSON here
        #[arg(long)]
        model_out: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct FindArgs {
    /// QuantumData JSON file ('-' or omitted reads stdin)
    #[arg(long)]
    data: Option<PathBuf>,
    /// SolverConfig JSON file; missing fields take defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Gauge override: 'paper' (independent unit balls) or 'fig5'
    /// (joint sphere normalization)
    #[arg(long)]
    gauge: Option<String>,
    /// Seed override
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CatalogAction {
    /// List the known analytic families
    List,
    /// Show one entry as JSON
    Show {
        name: String,
        /// Comma-separated key=value parameters (e.g. a=1, two_j=2, k=4)
        #[arg(long, value_delimiter = ',')]
        param: Vec<String>,
    },
}

#[derive(Subcommand)]
enum ScanKind {
    /// Singlet zoo over a (t1, t2) angle grid; writes zoo_<j>.csv and
    /// zoo_e_<j>.csv into --out-dir
    Zoo {
        #[arg(long)]
        two_j: u32,
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long, default_value_t = 48)]
        grid: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Robustness-over-theta table; writes fig3.csv
    Fig3 {
        #[arg(long, default_value_t = 0.98)]
        mx: f64,
        #[arg(long, default_value_t = 0.272)]
        chi2: f64,
        #[arg(long, default_value_t = 512)]
        points: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// (m_x, chi2) phase diagram; writes fig4.csv
    Fig4 {
        #[arg(long, default_value_t = 64)]
        grid: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

enum Outcome {
    Done,
    NoViolation,
}

#[derive(Debug)]
enum CliError {
    Core(CoreError),
    Io(String),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("PIBELL_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NoViolation) => ExitCode::from(3),
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::json!({ "error": e.to_string() })
            );
            match e {
                CliError::Core(CoreError::EnumerationCap { .. }) => ExitCode::from(4),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn read_to_string(path: Option<&Path>) -> Result<String, CliError> {
    match path {
        Some(p) if p.as_os_str() != "-" => Ok(std::fs::read_to_string(p)?),
        _ => {
            let mut buf = String::new();
            std::io::stdin().read_to_string(&mut buf)?;
            Ok(buf)
        }
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn parse_angles(text: &str) -> CoreResult<AngleSet> {
    let angles = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| CoreError::InvalidData(format!("bad angle '{s}': {e}")))
        })
        .collect::<CoreResult<Vec<f64>>>()?;
    AngleSet::new(angles)
}

fn parse_params(pairs: &[String]) -> Result<BTreeMap<String, f64>, CliError> {
    let mut map = BTreeMap::new();
    for pair in pairs {
        let (key, value) = pair.split_once('=').ok_or_else(|| {
            CliError::Core(CoreError::InvalidData(format!(
                "parameter '{pair}' is not of the form key=value"
            )))
        })?;
        let value: f64 = value.trim().parse().map_err(|e| {
            CliError::Core(CoreError::InvalidData(format!(
                "parameter '{pair}': {e}"
            )))
        })?;
        map.insert(key.trim().to_string(), value);
    }
    Ok(map)
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    match cli.command {
        Command::Gen { source } => run_gen(source),
        Command::Find(args) => run_find(args),
        Command::Certify { data, candidate } => {
            let data = QuantumData::from_json(&std::fs::read_to_string(data)?)?;
            let candidate = BellCandidate::from_json(&std::fs::read_to_string(candidate)?)?;
            let cert = certify(&candidate, &data)?;
            println!("{}", serde_json::to_string_pretty(&cert).unwrap());
            Ok(if cert.violated {
                Outcome::Done
            } else {
                Outcome::NoViolation
            })
        }
        Command::Catalog { action } => run_catalog(action),
        Command::Witness {
            name,
            moments,
            param,
            entry,
        } => run_witness(&name, &moments, &param, entry.as_deref()),
        Command::Sample {
            model,
            rounds,
            seed,
            out,
        } => {
            let model = LvModel::from_json(&std::fs::read_to_string(model)?)?;
            let records = sample_rounds(&model, rounds, seed);
            emit(&rounds_to_csv(&records), out.as_deref())?;
            Ok(Outcome::Done)
        }
        Command::Estimate {
            rounds,
            two_j,
            seed,
        } => {
            let csv = read_to_string(rounds.as_deref())?;
            let records = rounds_from_csv(&csv)?;
            let n = records
                .first()
                .map(|r| r.settings.len())
                .ok_or_else(|| CoreError::EmptyCell("no rounds at all".into()))?;
            let k = records
                .iter()
                .flat_map(|r| r.settings.iter())
                .map(|&a| a as usize + 1)
                .max()
                .unwrap_or(0);
            let scenario = Scenario::new(n, k, two_j)?;
            let data = estimate(&records, scenario)?;
            let mut value = serde_json::to_value(&data).unwrap();
            value["metadata"] = serde_json::json!({
                "R": records.len(),
                "seed": seed,
                "k": k,
                "N": n,
                "rng": RNG_ALGORITHM,
            });
            println!("{}", serde_json::to_string_pretty(&value).unwrap());
            Ok(Outcome::Done)
        }
        Command::Scan { kind } => run_scan(kind),
    }
}

fn run_gen(source: GenSource) -> Result<Outcome, CliError> {
    let (data, noise, out) = match source {
        GenSource::Singlet {
            n,
            two_j,
            angles,
            var,
            noise,
            out,
        } => (
            singlet_data(n, two_j, &parse_angles(&angles)?, var)?,
            noise,
            out,
        ),
        GenSource::Squeezed {
            n,
            two_j,
            mx,
            chi2,
            sx2,
            sy2,
            varx,
            angles,
            noise,
            out,
        } => {
            let params = SqueezedParams {
                m_x: mx,
                chi2,
                var_x: varx,
                sx2,
                sy2,
                cov_xy: None,
            };
            let angle_set = match angles {
                Some(text) => parse_angles(&text)?,
                None => {
                    // Default: the optimal two-setting pair for this state.
                    let jx = n as f64 * mx / 2.0;
                    let var_y = n as f64 * chi2 / 4.0;
                    let theta = if two_j == 1 {
                        catalog::tura_optimal_theta(n, jx, var_y)
                    } else {
                        let j = two_j as f64 / 2.0;
                        let sx2 = sx2.unwrap_or(j * j);
                        catalog::squeezed_spin_j_optimal_theta(n, jx, var_y, sx2)
                    };
                    AngleSet::new(vec![theta, -theta])?
                }
            };
            (squeezed_data(n, two_j, &params, &angle_set)?, noise, out)
        }
        GenSource::Lv {
            n,
            two_j,
            k,
            strategies,
            seed,
            model_out,
            out,
        } => {
            let scenario = Scenario::new(n, k, two_j)?;
            let model = seeded_lv_model(scenario, strategies, seed)?;
            if let Some(path) = model_out {
                std::fs::write(path, model.to_json())?;
            }
            (lv_moment_data(&model)?, None, out)
        }
    };
    let data = match noise {
        Some(r) => apply_white_noise(&data, r)?,
        None => data,
    };
    emit(&data.to_json(), out.as_deref())?;
    Ok(Outcome::Done)
}

fn run_find(args: FindArgs) -> Result<Outcome, CliError> {
    let text = read_to_string(args.data.as_deref())?;
    let data = QuantumData::from_json(&text)?;
    let mut config: SolverConfig = match args.config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)
            .map_err(CoreError::from)?,
        None => SolverConfig::default(),
    };
    if let Some(gauge) = args.gauge {
        config.gauge = match gauge.as_str() {
            "paper" => Gauge::Ball,
            "fig5" => Gauge::Sphere,
            other => {
                return Err(CliError::Core(CoreError::InvalidData(format!(
                    "unknown gauge '{other}' (expected 'paper' or 'fig5')"
                ))))
            }
        };
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let report = solve(&data, &config)?;
    emit(&report.to_json(), args.out.as_deref())?;
    Ok(if report.certified.violated {
        Outcome::Done
    } else {
        Outcome::NoViolation
    })
}

fn run_catalog(action: CatalogAction) -> Result<Outcome, CliError> {
    match action {
        CatalogAction::List => {
            for name in catalog::names() {
                println!("{name}");
            }
        }
        CatalogAction::Show { name, param } => {
            let params = parse_params(&param)?;
            let entry = catalog::build(&name, &params)?;
            println!("{}", entry.to_json());
        }
    }
    Ok(Outcome::Done)
}

fn run_witness(
    name: &str,
    moments: &Path,
    param: &[String],
    entry: Option<&str>,
) -> Result<Outcome, CliError> {
    let model: CollectiveMomentModel =
        serde_json::from_str(&std::fs::read_to_string(moments)?).map_err(CoreError::from)?;
    let params = parse_params(param)?;
    let n = model.n_parties;
    let nf = n as f64;
    let (var_x, var_y) = (model.var_x(), model.var_y());
    let jx = model.mean_x();
    let sum_sx2 = model.sum_sx2();

    // Each witness reports (fires, margin) with margin > 0 iff it fires.
    let (fires, margin) = match name {
        "witness_singlet_k" => {
            let k = *params.get("k").unwrap_or(&3.0) as usize;
            let threshold = catalog::singlet_k_threshold(k);
            let value = (var_x + var_y) / nf;
            (catalog::witness_singlet_k(var_x, var_y, n, k), threshold - value)
        }
        "witness_singlets_1" => (
            catalog::witness_singlets_1(var_x, var_y, n),
            nf / 18.0 - (var_x + var_y),
        ),
        "witness_singlets_2" => {
            let two_j = model.two_j;
            let j = two_j as f64 / 2.0;
            let j2 = j * j;
            let lhs = var_x * (2.0 + 8.0 * j2 + 1.0 / (8.0 * j2))
                + var_y * (1.0 + 16.0 * j2 - 1.0 / (8.0 * j2))
                - sum_sx2;
            (
                catalog::witness_singlets_2(var_x, var_y, sum_sx2, n, two_j),
                -lhs,
            )
        }
        "witness_su2" => {
            let mut entry_params = BTreeMap::new();
            entry_params.insert("two_j".to_string(), model.two_j as f64);
            let cat = catalog::build(entry.unwrap_or("singlet_anyj"), &entry_params)?;
            let angles = match params.get("t") {
                Some(&t) => AngleSet::new(vec![t, 0.0, -t])?,
                None => AngleSet::new(cat.optimal_angles.clone().ok_or_else(|| {
                    CoreError::InvalidData(
                        "entry has no default angles; pass --param t=...".into(),
                    )
                })?)?,
            };
            let threshold = catalog::su2_threshold(&cat.candidate, &angles)?.unwrap_or(0.0);
            (
                catalog::witness_su2(&cat.candidate, &angles, var_x, n)?,
                threshold - var_x / nf,
            )
        }
        "tura_tight" => {
            let value = catalog::tura_value_at_optimum(n, jx, var_y);
            (value < -nf, -nf - value)
        }
        "squeezed_spin_j" => {
            let sx2 = sum_sx2 / nf;
            let value = catalog::squeezed_spin_j_value_at_optimum(n, jx, var_y, sx2);
            (value < 0.0, -value)
        }
        "squeezed_alt" => {
            let sx2 = sum_sx2 / nf;
            let sy2 = model.single2.get(1, 1) / nf;
            let value = catalog::squeezed_alt_value_at_optimum(n, jx, var_y, sx2, sy2);
            let bound = catalog::squeezed_alt(model.two_j)?.analytic_bound(n);
            (value < bound, bound - value)
        }
        other => {
            return Err(CliError::Core(CoreError::InvalidData(format!(
                "unknown witness '{other}'"
            ))))
        }
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({
            "witness": fires,
            "margin": margin,
        }))
        .unwrap()
    );
    Ok(if fires {
        Outcome::Done
    } else {
        Outcome::NoViolation
    })
}

fn run_scan(kind: ScanKind) -> Result<Outcome, CliError> {
    match kind {
        ScanKind::Zoo {
            two_j,
            n,
            grid,
            seed,
            out_dir,
        } => {
            std::fs::create_dir_all(&out_dir)?;
            let grid_vals = scans::zoo_grid(grid);
            let table = scans::zoo_scan(
                two_j,
                n,
                &grid_vals,
                &grid_vals,
                &scans::zoo_solver_config(seed),
            )?;
            let label = if two_j % 2 == 0 {
                format!("{}", two_j / 2)
            } else {
                format!("{two_j}_2")
            };
            std::fs::write(out_dir.join(format!("zoo_{label}.csv")), scans::zoo_csv(&table))?;
            std::fs::write(
                out_dir.join(format!("zoo_e_{label}.csv")),
                scans::zoo_panel_e_csv(&table),
            )?;
        }
        ScanKind::Fig3 {
            mx,
            chi2,
            points,
            out_dir,
        } => {
            std::fs::create_dir_all(&out_dir)?;
            let grid: Vec<f64> = (0..points)
                .map(|i| (i + 1) as f64 * std::f64::consts::PI / 2.0 / points as f64)
                .collect();
            let rows = scans::robustness_curve(mx, chi2, &grid);
            std::fs::write(out_dir.join("fig3.csv"), scans::robustness_csv(&rows))?;
        }
        ScanKind::Fig4 { grid, out_dir } => {
            std::fs::create_dir_all(&out_dir)?;
            let axis: Vec<f64> = (0..grid)
                .map(|i| i as f64 / (grid - 1).max(1) as f64)
                .collect();
            let points = scans::phase_diagram(&axis, &axis);
            std::fs::write(out_dir.join("fig4.csv"), scans::phase_csv(&points))?;
        }
    }
    Ok(Outcome::Done)
}
