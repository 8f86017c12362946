//! Command-line front end.
//!
//! Exit codes: 0 success or pass, 1 certificate fail (including a failed
//! hypothesis), 2 non-convergence or inconclusive, 3 input error.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::grid::{GridFunction, SolutionTriple};
use crate::inequalities::{self, Certificate, KernelPair, Kernels, Verdict};
use crate::problem::{parse_problem, ProblemError, ProblemFile};
use crate::selftest;
use crate::solver::{self, SolveReport};

#[derive(Debug, Parser)]
#[command(name = "tsde", version, about = "Time-scale dynamic equation solver and bound certificates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a problem file by successive approximation.
    Solve {
        file: PathBuf,
        #[arg(short, long = "out")]
        out: PathBuf,
    },
    /// Check one of the explicit bounds on a problem file.
    Certify {
        file: PathBuf,
        #[arg(long, value_enum)]
        which: Which,
        #[arg(short, long = "out")]
        out: PathBuf,
    },
    /// Run the built-in oracle suite.
    Selftest {
        #[arg(long, default_value_t = selftest::DEFAULT_SEED)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Gronwall,
    Bound,
    Depend,
    Unique,
    Constants,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success = 0,
    Failed = 1,
    NotConverged = 2,
    InputError = 3,
}

impl From<Verdict> for Status {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Pass => Status::Success,
            Verdict::Fail | Verdict::PremiseFailed => Status::Failed,
            Verdict::Inconclusive => Status::NotConverged,
        }
    }
}

#[derive(Debug)]
pub struct RunResult {
    pub status: Status,
    pub artifacts: Vec<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Problem { path: PathBuf, source: ProblemError },
    #[error("writing {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Lib(#[from] crate::Error),
    #[error("{0}")]
    Missing(String),
}

type CliResult<T> = Result<T, CliError>;

fn load(path: &Path) -> CliResult<ProblemFile> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_problem(&text).map_err(|source| CliError::Problem {
        path: path.to_path_buf(),
        source,
    })
}

struct OutDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutDir {
    fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|source| CliError::Write {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> CliResult<()> {
        let path = self.root.join(name);
        let result = fs::File::create(&path).and_then(|f| {
            let mut w = BufWriter::new(f);
            body(&mut w)?;
            w.flush()
        });
        result.map_err(|source| CliError::Write { path: path.clone(), source })?;
        self.written.push(path);
        Ok(())
    }

    fn csv(&mut self, name: &str, g: &GridFunction) -> CliResult<()> {
        self.write(name, |w| g.write_csv(w))
    }

    fn finish(self, status: Status) -> RunResult {
        RunResult {
            status,
            artifacts: self.written,
        }
    }
}

#[derive(Serialize)]
struct SolveRecord<'a> {
    #[serde(flatten)]
    summary: solver::ReportSummary<'a>,
    compatible: bool,
    compatibility_gap: f64,
}

pub fn cmd_solve(path: &Path, out: &Path) -> CliResult<RunResult> {
    let pf = load(path)?;
    let compat = solver::check_compatibility(&pf.spec)?;
    if !compat.pass {
        eprintln!(
            "warning: alpha(x0, z) and beta(y0, z) disagree by up to {:e}",
            compat.max_gap
        );
    }
    let report = solver::solve_picard(&pf.spec, None)?;
    let mut dir = OutDir::create(out)?;
    dir.csv("u.csv", &report.solution.u)?;
    dir.csv("u_d1.csv", &report.solution.u_d1)?;
    dir.csv("u_d2.csv", &report.solution.u_d2)?;
    let record = SolveRecord {
        summary: report.summary(),
        compatible: compat.pass,
        compatibility_gap: compat.max_gap,
    };
    dir.write("report.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &record)?;
        writeln!(w)
    })?;
    let status = if report.converged {
        Status::Success
    } else {
        eprintln!(
            "not converged after {} iterations; last residual {:e}",
            report.iterations,
            report.final_residual()
        );
        Status::NotConverged
    };
    Ok(dir.finish(status))
}

fn kernel_pair(pf: &ProblemFile) -> CliResult<KernelPair> {
    let k = pf.kernels.as_ref();
    match (k.and_then(|k| k.p.clone()), k.and_then(|k| k.r.clone())) {
        (Some(p), Some(r)) => Ok(KernelPair::new(p, r)),
        _ => Err(CliError::Missing("this certificate needs p and r in [kernels]".into())),
    }
}

fn kernels(pf: &ProblemFile) -> CliResult<Kernels> {
    Ok(kernel_pair(pf)?.tabulate(&pf.spec.domain)?)
}

fn solve(pf: &ProblemFile) -> CliResult<SolveReport> {
    Ok(solver::solve_picard(&pf.spec, None)?)
}

pub fn cmd_certify(path: &Path, which: Which, out: &Path) -> CliResult<RunResult> {
    let pf = load(path)?;
    let spec = &pf.spec;
    let cert: Certificate = match which {
        Which::Gronwall => {
            let k = kernels(&pf)?;
            let c = inequalities::condition_bound(spec)?;
            inequalities::solution_gronwall_certificate(&solve(&pf)?, &k, c)?
        }
        Which::Bound => {
            let k = kernels(&pf)?;
            let c = inequalities::condition_bound(spec)?;
            inequalities::boundedness_certificate(spec, &solve(&pf)?, &k, c)?
        }
        Which::Depend => {
            let k = kernels(&pf)?;
            let second = pf
                .second()
                .ok_or_else(|| CliError::Missing("depend needs a [conditions2] section".into()))?;
            inequalities::dependence_certificate(spec, &second, &k)?
        }
        Which::Unique => {
            let k = match kernel_pair(&pf) {
                Ok(pair) => Some(pair.tabulate(&spec.domain)?),
                Err(_) => None,
            };
            let zero = SolutionTriple::zero(spec.domain.clone());
            let one = SolutionTriple::constant(spec.domain.clone(), 1.0);
            inequalities::uniqueness_check(spec, k.as_ref(), (&zero, &one))?
        }
        Which::Constants => {
            let k = pf.kernels.as_ref();
            let (m, kk) = match (k.and_then(|k| k.m.clone()), k.and_then(|k| k.k.clone())) {
                (Some(m), Some(kk)) => (m, kk),
                _ => return Err(CliError::Missing("constants needs M and K in [kernels]".into())),
            };
            inequalities::estimate_constants(spec, &m, &kk)?.certificate(spec.lambda)
        }
    };
    let mut dir = OutDir::create(out)?;
    dir.write("certificate.jsonl", |w| writeln!(w, "{}", cert.to_json_line()))?;
    if let Some(b) = &cert.bound {
        dir.csv("bound.csv", b)?;
    }
    if let Some(o) = &cert.observed {
        dir.csv("observed.csv", o)?;
    }
    if let Some(note) = &cert.note {
        eprintln!("{note}");
    }
    println!("{}", cert.to_json_line());
    Ok(dir.finish(cert.verdict.into()))
}

pub fn cmd_selftest(seed: u64) -> CliResult<RunResult> {
    let report = selftest::run(seed)?;
    println!("{report}");
    Ok(RunResult {
        status: if report.pass() { Status::Success } else { Status::Failed },
        artifacts: Vec::new(),
    })
}

pub fn run(cli: Cli) -> CliResult<RunResult> {
    match cli.command {
        Command::Solve { file, out } => cmd_solve(&file, &out),
        Command::Certify { file, which, out } => cmd_certify(&file, which, &out),
        Command::Selftest { seed } => cmd_selftest(seed),
    }
}

/// Parses arguments and runs; usage errors map to exit 3, not clap's 2.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { Status::InputError as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(r) => ExitCode::from(r.status as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(Status::InputError as u8)
        }
    }
}
