use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use diffw::regularity::{evolve_on, evolve_refined, TimeField};
use diffw::suites::{self, CheckRecord, DomainOverride, Suite, SuiteConfig, COUNTEREXAMPLE_MAX};
use diffw::weights::SampleDomain;
use diffw::{actions, jets::SmoothMap};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

const EXIT_FAIL: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "diffw",
    version,
    about = "Numerical checks for weighted diffeomorphism groups"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a verification suite and write its report.
    Run {
        #[arg(long)]
        suite: Option<String>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Replace every check's tolerance.
        #[arg(long)]
        tol: Option<f64>,
        /// Output path; stdout when absent.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write CSV instead of JSON.
        #[arg(long)]
        csv: bool,
        /// TOML file with the same keys; flags win.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Evolve a time-dependent field and report the time-1 map on the grid.
    Evolve {
        /// TOML description of the field.
        #[arg(long)]
        field: PathBuf,
        /// RK4 steps; when absent, start from the Lipschitz bound and double until the defect passes.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Sup distance between sin and its rescalings for n = 1..max.
    Counterexample {
        #[arg(long, default_value_t = COUNTEREXAMPLE_MAX)]
        max: u32,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Group laws of the semidirect product with the diffeomorphism group.
    SemidirectVerify {
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunFile {
    suite: Option<String>,
    dim: Option<usize>,
    seed: Option<u64>,
    tol: Option<f64>,
    report: Option<PathBuf>,
    csv: Option<bool>,
    #[serde(default)]
    domain: DomainOverride,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum FieldConfig {
    /// `p(t)(x) = A x`.
    Linear { matrix: Vec<Vec<f64>> },
    /// `p(t)(x) = (Σ c_i tⁱ) · a·exp(−‖x − c‖²/(2σ²))`.
    Bump {
        center: Vec<f64>,
        sigma: f64,
        amplitude: Vec<f64>,
        #[serde(default = "unit_coeffs")]
        coeffs: Vec<f64>,
    },
}

fn unit_coeffs() -> Vec<f64> {
    vec![1.0]
}

#[derive(Serialize)]
struct EvolveReport {
    steps: usize,
    lipschitz: f64,
    max_defect: f64,
    points: Vec<EvolvePoint>,
}

#[derive(Serialize)]
struct EvolvePoint {
    x: Vec<f64>,
    gamma: Vec<f64>,
}

#[derive(Serialize)]
struct GapRecord {
    n: u32,
    value: f64,
    pass: bool,
}

enum Failure {
    Parse(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Parse(_) => EXIT_PARSE,
            Failure::Io(_) => EXIT_IO,
        }
    }
}

fn parse_err(e: impl ToString) -> Failure {
    Failure::Parse(e.to_string())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn emit(path: Option<&Path>, body: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, body).map_err(|e| Failure::Io(format!("{}: {e}", p.display()))),
        None => {
            println!("{body}");
            Ok(())
        }
    }
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize")
}

fn to_csv(checks: &[CheckRecord]) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "name",
        "paper_anchor",
        "residual",
        "tolerance",
        "pass",
        "value",
        "note",
    ])
    .map_err(|e| Failure::Io(e.to_string()))?;
    for c in checks {
        w.write_record([
            c.name.clone(),
            c.paper_anchor.clone(),
            c.residual.to_string(),
            c.tolerance.to_string(),
            c.pass.to_string(),
            c.value.map(|v| v.to_string()).unwrap_or_default(),
            c.note.clone().unwrap_or_default(),
        ])
        .map_err(|e| Failure::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn summarize(checks: &[CheckRecord]) -> bool {
    let failed: Vec<&CheckRecord> = checks.iter().filter(|c| !c.pass).collect();
    for c in &failed {
        eprintln!(
            "FAIL {} residual={:e} tolerance={:e}",
            c.name, c.residual, c.tolerance
        );
    }
    eprintln!("{} checks, {} failed", checks.len(), failed.len());
    failed.is_empty()
}

fn run_suite(
    suite: Option<String>,
    dim: Option<usize>,
    seed: Option<u64>,
    tol: Option<f64>,
    report: Option<PathBuf>,
    csv: bool,
    config: Option<PathBuf>,
) -> Result<bool, Failure> {
    let file: RunFile = match &config {
        Some(p) => toml::from_str(&read(p)?).map_err(parse_err)?,
        None => RunFile::default(),
    };
    let name = suite
        .or(file.suite)
        .ok_or_else(|| Failure::Parse("no suite given".into()))?;
    let mut cfg = SuiteConfig::new(name.parse::<Suite>().map_err(parse_err)?);
    cfg.dim = dim.or(file.dim).unwrap_or(1);
    cfg.seed = seed.or(file.seed).unwrap_or(0);
    cfg.tol = tol.or(file.tol);
    cfg.domain = file.domain;
    let report_path = report.or(file.report);
    let as_csv = csv || file.csv.unwrap_or(false);

    let result = suites::run(&cfg).map_err(parse_err)?;
    let body = if as_csv {
        to_csv(&result.checks)?
    } else {
        result.to_json()
    };
    emit(report_path.as_deref(), &body)?;
    Ok(summarize(&result.checks))
}

fn field_from_config(cfg: FieldConfig) -> Result<TimeField, Failure> {
    match cfg {
        FieldConfig::Linear { matrix } => {
            let n = matrix.len();
            if n == 0 || matrix.iter().any(|row| row.len() != n) {
                return Err(Failure::Parse("matrix must be square and non-empty".into()));
            }
            let flat: Vec<f64> = matrix.into_iter().flatten().collect();
            TimeField::linear(DMatrix::from_row_slice(n, n, &flat)).map_err(parse_err)
        }
        FieldConfig::Bump {
            center,
            sigma,
            amplitude,
            coeffs,
        } => {
            if center.len() != amplitude.len() || sigma.is_nan() || sigma <= 0.0 {
                return Err(Failure::Parse(
                    "bump needs matching center/amplitude and sigma > 0".into(),
                ));
            }
            TimeField::modulated(coeffs, SmoothMap::gaussian_bump(&center, sigma, &amplitude))
                .map_err(parse_err)
        }
    }
}

fn run_evolve(
    field: PathBuf,
    steps: Option<usize>,
    report: Option<PathBuf>,
) -> Result<bool, Failure> {
    let cfg: FieldConfig = toml::from_str(&read(&field)?).map_err(parse_err)?;
    let p = field_from_config(cfg)?;
    if p.dim() > 3 {
        return Err(Failure::Parse(
            "fields are sampled in dimension 1, 2 or 3".into(),
        ));
    }
    let domain = SampleDomain::default_for(p.dim());
    let evolved = match steps {
        Some(s) => evolve_on(&p, s, domain.clone()),
        None => evolve_refined(&p, domain.clone()),
    };
    let curve = match evolved {
        Ok(c) => c,
        Err(e) => {
            eprintln!("evolution failed: {e}");
            return Ok(false);
        }
    };
    let points = domain
        .points()
        .map(|x| {
            let gamma = curve.eval(1.0, &x)?;
            Ok(EvolvePoint { x, gamma })
        })
        .collect::<diffw::Result<Vec<_>>>()
        .map_err(parse_err)?;
    let out = EvolveReport {
        steps: curve.steps(),
        lipschitz: curve.lipschitz(),
        max_defect: curve.max_defect(),
        points,
    };
    emit(report.as_deref(), &json(&out))?;
    eprintln!(
        "steps={} lipschitz={:.6} max_defect={:e}",
        out.steps, out.lipschitz, out.max_defect
    );
    Ok(true)
}

fn run_counterexample(max: u32, report: Option<PathBuf>) -> Result<bool, Failure> {
    if max == 0 {
        return Err(Failure::Parse("--max must be positive".into()));
    }
    let domain = SampleDomain::default_for(1);
    let records = (1..=max)
        .map(|n| {
            let value = actions::bc_counterexample(n, &domain)?;
            Ok(GapRecord {
                n,
                value,
                pass: value >= 1.0 - 1e-9,
            })
        })
        .collect::<diffw::Result<Vec<_>>>()
        .map_err(parse_err)?;
    emit(report.as_deref(), &json(&records))?;
    Ok(records.iter().all(|r| r.pass))
}

fn run_semidirect(dim: usize, seed: u64, report: Option<PathBuf>) -> Result<bool, Failure> {
    let mut cfg = SuiteConfig::new(Suite::Actions);
    cfg.dim = dim;
    cfg.seed = seed;
    let mut result = suites::run(&cfg).map_err(parse_err)?;
    result
        .checks
        .retain(|c| c.name.contains("semidirect") || c.name.contains("omega"));
    emit(report.as_deref(), &result.to_json())?;
    Ok(summarize(&result.checks))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_PARSE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Run {
            suite,
            dim,
            seed,
            tol,
            report,
            csv,
            config,
        } => run_suite(suite, dim, seed, tol, report, csv, config),
        Command::Evolve {
            field,
            steps,
            report,
        } => run_evolve(field, steps, report),
        Command::Counterexample { max, report } => run_counterexample(max, report),
        Command::SemidirectVerify { dim, seed, report } => run_semidirect(dim, seed, report),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAIL),
        Err(f) => {
            let msg = match &f {
                Failure::Parse(m) | Failure::Io(m) => m,
            };
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}
