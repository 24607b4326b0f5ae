//! `occnum` command line.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use occnum_core::analytic::{cannibal_ratio, cannibal_stationary, oscillator_moments, AnalyticError, CannibalParams};
use occnum_core::meanfield::{integrate_meanfield, MeanFieldError};
use occnum_core::model::{BuiltinKind, ModelError};
use occnum_core::numfmt::g17;
use occnum_core::ssa::SsaError;
use occnum_core::{
    build_generator, evolve, moments, serialize_model, stationary, Builtin, DiagonalDistribution, SolveError,
};
use serde_json::json;
use thiserror::Error;

use crate::io::{self, FileError, SCHEMA_VERSION};
use crate::parallel::{sample_parallel, worker_count};
use crate::problem::{Problem, SetupError};
use crate::verify::verify;

#[derive(Debug, Parser)]
#[command(
    name = "occnum",
    version,
    about = "Master equations of occupation-number models: compile, solve, sample, verify"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dump the generator as `row col rate` triplets.
    Compile(ModelArgs),
    /// Stationary distribution.
    Stationary(ModelArgs),
    /// Distribution at time `--t` from `--init`.
    Evolve {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        time: TimeArgs,
    },
    /// Histogram of `--count` SSA trajectories at time `--t`.
    Sample {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        time: TimeArgs,
        #[arg(long, default_value_t = 10_000)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Moments of the stationary state, or of the state at `--t`.
    Moments {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        init: Option<Vec<u64>>,
    },
    /// Mean-field trajectory from `--init` over `[0, t]`.
    Meanfield {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        t: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        init: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// Run every applicable invariant check and print a PASS/FAIL table.
    Verify(ModelArgs),
    /// Closed-form tables.
    Analytic(AnalyticArgs),
}

#[derive(Debug, Clone, Args)]
struct ModelArgs {
    /// Built-in model.
    #[arg(long, value_enum, conflicts_with = "file", required_unless_present = "file")]
    model: Option<ModelName>,
    /// `.occ` model file.
    #[arg(long)]
    file: Option<PathBuf>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    l1: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    /// Conserved total for models with one.
    #[arg(long = "N")]
    total: Option<u64>,
    /// Truncation per mode: one value for all modes or a comma list.
    #[arg(long, value_delimiter = ',')]
    cap: Option<Vec<u64>>,
    /// Output directory; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct TimeArgs {
    #[arg(long)]
    t: f64,
    /// Initial occupations, comma separated.
    #[arg(long, value_delimiter = ',')]
    init: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum ModelName {
    Oscillator,
    Lvm,
    LvmTruncated,
    Cannibal,
}

impl From<ModelName> for BuiltinKind {
    fn from(m: ModelName) -> Self {
        match m {
            ModelName::Oscillator => BuiltinKind::Oscillator,
            ModelName::Lvm => BuiltinKind::Lvm,
            ModelName::LvmTruncated => BuiltinKind::LvmTruncated,
            ModelName::Cannibal => BuiltinKind::Cannibal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Table {
    OscillatorMoments,
    CannibalRatio,
}

#[derive(Debug, Clone, Args)]
struct AnalyticArgs {
    #[arg(long, value_enum)]
    table: Table,
    #[arg(long, value_delimiter = ',')]
    mu: Vec<f64>,
    #[arg(long = "N", value_delimiter = ',')]
    total: Vec<u64>,
    #[arg(long, default_value_t = 0.5)]
    kappa: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Where the model comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    Builtin(Builtin),
    File(PathBuf),
}

/// Model source, truncation and output settings shared by every command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: ModelSource,
    pub caps: Option<Vec<u64>>,
    pub total: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Setup(#[from] SetupError),
    #[error(transparent)]
    File(#[from] FileError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Ssa(#[from] SsaError),
    #[error(transparent)]
    MeanField(#[from] MeanFieldError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error("verification failed")]
    VerifyFailed,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Model(_) | CliError::Setup(_) | CliError::File(_) => 1,
            // Bad arguments that only the numerical layer can see.
            CliError::Solve(SolveError::BadTime(_))
            | CliError::Ssa(SsaError::BadTime(_) | SsaError::NoTrajectories | SsaError::InitLength { .. })
            | CliError::MeanField(
                MeanFieldError::BadTime(_) | MeanFieldError::Length { .. } | MeanFieldError::BadInit,
            )
            | CliError::Analytic(AnalyticError::BadParam { .. } | AnalyticError::BadC(_)) => 1,
            _ => 2,
        }
    }
}

impl RunConfig {
    fn from_args(a: &ModelArgs) -> Result<Self, CliError> {
        let source = match (&a.model, &a.file) {
            (Some(name), None) => ModelSource::Builtin(builtin_from_flags(*name, a)?),
            (None, Some(path)) => {
                if [a.mu, a.omega, a.l1, a.l2].iter().any(Option::is_some) {
                    return Err(CliError::Usage("parameter flags only apply to built-in models".into()));
                }
                ModelSource::File(path.clone())
            }
            _ => return Err(CliError::Usage("give exactly one of --model and --file".into())),
        };
        if let Some(dir) = &a.out {
            std::fs::create_dir_all(dir)
                .map_err(|e| CliError::Usage(format!("output directory {}: {e}", dir.display())))?;
        }
        Ok(RunConfig {
            source,
            caps: a.cap.clone(),
            total: a.total,
            out: a.out.clone(),
        })
    }

    pub fn problem(&self) -> Result<Problem, CliError> {
        let (spec, builtin) = match &self.source {
            ModelSource::Builtin(b) => (b.spec(), Some(*b)),
            ModelSource::File(path) => (io::read_model_file(path)?, None),
        };
        Ok(Problem::new(spec, builtin, self.caps.as_deref(), self.total)?)
    }

    fn emit(&self, name: &str, text: &str) -> Result<(), CliError> {
        Ok(io::emit(self.out.as_deref(), name, text)?)
    }
}

fn builtin_from_flags(name: ModelName, a: &ModelArgs) -> Result<Builtin, CliError> {
    let kind = BuiltinKind::from(name);
    let need = |flag: &str, v: Option<f64>| v.ok_or_else(|| CliError::Usage(format!("model {kind} needs --{flag}")));
    let reject = |flags: &[(&str, Option<f64>)]| -> Result<(), CliError> {
        match flags.iter().find(|(_, v)| v.is_some()) {
            Some((f, _)) => Err(CliError::Usage(format!("--{f} does not apply to model {kind}"))),
            None => Ok(()),
        }
    };
    let params = match kind {
        BuiltinKind::Oscillator => {
            reject(&[("l1", a.l1), ("l2", a.l2)])?;
            vec![need("mu", a.mu)?, a.omega.unwrap_or(0.0)]
        }
        BuiltinKind::Lvm | BuiltinKind::Cannibal => {
            reject(&[("mu", a.mu), ("omega", a.omega)])?;
            vec![need("l1", a.l1)?, need("l2", a.l2)?]
        }
        BuiltinKind::LvmTruncated => {
            reject(&[("mu", a.mu), ("omega", a.omega), ("l1", a.l1), ("l2", a.l2)])?;
            vec![]
        }
    };
    Ok(Builtin::new(kind, &params)?)
}

fn warn_tail(p: &DiagonalDistribution) {
    let tail = p.tail_mass();
    if tail > 1e-6 {
        eprintln!(
            "warning: {} of the probability sits on the truncation boundary; raise --cap",
            g17(tail)
        );
    }
}

fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Compile(a) => {
            let cfg = RunConfig::from_args(&a)?;
            let p = cfg.problem()?;
            let g = build_generator(&p.spec, &p.lattice);
            cfg.emit("generator.txt", &io::triplets(&g))?;
            if cfg.out.is_some() {
                cfg.emit("states.csv", &io::state_index_csv(&g))?;
                cfg.emit("model.occ", &serialize_model(&p.spec))?;
            }
        }
        Command::Stationary(a) => {
            let cfg = RunConfig::from_args(&a)?;
            let p = cfg.problem()?;
            let dist = stationary(&build_generator(&p.spec, &p.lattice))?;
            warn_tail(&dist);
            cfg.emit("stationary.csv", &io::distribution_csv(&dist))?;
        }
        Command::Evolve { model, time } => {
            let cfg = RunConfig::from_args(&model)?;
            let p = cfg.problem()?;
            let init = p.init(time.init.as_deref())?;
            let g = build_generator(&p.spec, &p.lattice);
            let dist = evolve(&g, &DiagonalDistribution::point_mass(p.lattice.clone(), &init)?, time.t)?;
            warn_tail(&dist);
            cfg.emit("evolve.csv", &io::distribution_csv(&dist))?;
        }
        Command::Sample {
            model,
            time,
            count,
            seed,
        } => {
            let cfg = RunConfig::from_args(&model)?;
            let spec = match &cfg.source {
                ModelSource::Builtin(b) => b.spec(),
                ModelSource::File(path) => io::read_model_file(path)?,
            };
            let init = match time.init {
                Some(init) => init,
                None => cfg.problem()?.init(None)?,
            };
            let hist = sample_parallel(&spec, &init, time.t, count, seed, worker_count())?;
            cfg.emit("histogram.csv", &io::histogram_csv(&hist))?;
        }
        Command::Moments { model, t, init } => {
            let cfg = RunConfig::from_args(&model)?;
            let p = cfg.problem()?;
            let g = build_generator(&p.spec, &p.lattice);
            let dist = match t {
                None => stationary(&g)?,
                Some(t) => {
                    let init = p.init(init.as_deref())?;
                    evolve(&g, &DiagonalDistribution::point_mass(p.lattice.clone(), &init)?, t)?
                }
            };
            warn_tail(&dist);
            let mut v = io::moments_json(&moments(&dist));
            v["model"] = json!(p.spec.name);
            v["t"] = t.map_or(json!("stationary"), io::number);
            v["tail_mass"] = io::number(dist.tail_mass());
            cfg.emit("moments.json", &io::to_pretty(&v))?;
        }
        Command::Meanfield {
            model,
            t,
            init,
            samples,
        } => {
            let cfg = RunConfig::from_args(&model)?;
            let spec = match &cfg.source {
                ModelSource::Builtin(b) => b.spec(),
                ModelSource::File(path) => io::read_model_file(path)?,
            };
            let traj = integrate_meanfield(&spec, &init, t, samples.max(1))?;
            cfg.emit("meanfield.csv", &io::trajectory_csv(&traj))?;
        }
        Command::Verify(a) => {
            let cfg = RunConfig::from_args(&a)?;
            let p = cfg.problem()?;
            let report = verify(&p, cfg.caps.is_some());
            cfg.emit("verify.csv", &report.table())?;
            if !report.passed() {
                return Err(CliError::VerifyFailed);
            }
        }
        Command::Analytic(a) => analytic(a)?,
    }
    Ok(())
}

fn analytic(a: AnalyticArgs) -> Result<(), CliError> {
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Usage(format!("output directory {}: {e}", dir.display())))?;
    }
    let mut out = format!("# schema_version={SCHEMA_VERSION}\n");
    let name = match a.table {
        Table::OscillatorMoments => {
            if a.mu.is_empty() {
                return Err(CliError::Usage("oscillator-moments needs --mu".into()));
            }
            out.push_str("mu,mean_exact,variance_exact,rel_fluct_exact,mean_large_mu,variance_large_mu,mean_small_mu,variance_small_mu\n");
            for &mu in &a.mu {
                let m = oscillator_moments(mu)?;
                let e = &m.exact;
                let row = [
                    mu,
                    e.mean[0],
                    e.variance[0],
                    e.rel_fluct[0].unwrap_or(f64::NAN),
                    m.large_mu.0,
                    m.large_mu.1,
                    m.small_mu.0,
                    m.small_mu.1,
                ];
                out.push_str(&row.map(g17).join(","));
                out.push('\n');
            }
            "oscillator_moments.csv"
        }
        Table::CannibalRatio => {
            if a.total.is_empty() {
                return Err(CliError::Usage("cannibal-ratio needs --N".into()));
            }
            out.push_str("N,kappa,ratio,mean1,mean2\n");
            for &n in &a.total {
                let ratio = cannibal_ratio(n, a.kappa)?;
                let (n1, n2) = cannibal_stationary(CannibalParams::new(n, a.kappa, 1.0)?).means();
                out.push_str(&format!(
                    "{n},{},{},{},{}\n",
                    g17(a.kappa),
                    g17(ratio),
                    g17(n1),
                    g17(n2)
                ));
            }
            "cannibal_ratio.csv"
        }
    };
    Ok(io::emit(a.out.as_deref(), name, &out)?)
}

/// Parses `argv` (program name first), runs the command and returns the exit
/// status: 0 success, 1 usage error, 2 numerical failure.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            if !matches!(e, CliError::VerifyFailed) {
                eprintln!("error: {e}");
            }
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("occnum").chain(args.iter().copied()))
    }

    #[test]
    fn builtin_flags() {
        let Command::Verify(a) = parse(&["verify", "--model", "oscillator", "--mu", "1"])
            .unwrap()
            .command
        else {
            panic!("wrong subcommand");
        };
        let cfg = RunConfig::from_args(&a).unwrap();
        assert_eq!(
            cfg.source,
            ModelSource::Builtin(Builtin::Oscillator { mu: 1.0, omega: 0.0 })
        );
    }

    #[test]
    fn model_source_exclusive() {
        assert!(parse(&["stationary", "--model", "lvm", "--file", "x.occ"]).is_err());
        assert!(parse(&["stationary"]).is_err());
    }

    #[test]
    fn wrong_parameter_is_usage_error() {
        let Command::Stationary(a) = parse(&["stationary", "--model", "cannibal", "--mu", "1"])
            .unwrap()
            .command
        else {
            panic!("wrong subcommand");
        };
        let err = RunConfig::from_args(&a).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn cap_list_and_total() {
        let Command::Stationary(a) = parse(&["stationary", "--model", "lvm_truncated", "--N", "3", "--cap", "3,3"])
            .unwrap()
            .command
        else {
            panic!("wrong subcommand");
        };
        assert_eq!(a.cap, Some(vec![3, 3]));
        assert_eq!(a.total, Some(3));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(["occnum", "--help"]), 0);
        assert_eq!(run(["occnum", "frobnicate"]), 1);
        assert_eq!(CliError::Solve(SolveError::NonConvergence(3)).exit_code(), 2);
    }
}
