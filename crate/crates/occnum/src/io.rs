//! File formats: CSV tables, JSON summaries, generator triplets and `.occ`
//! model files. Floats are printed with 17 significant digits so files
//! round-trip exactly and identical runs are byte-identical.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use occnum_core::meanfield::Trajectory;
use occnum_core::numfmt::g17;
use occnum_core::{
    parse_model, DiagonalDistribution, EmpiricalDistribution, ModelSpec, MomentSet, ParseError, SparseGenerator,
};
use serde_json::{json, Number, Value};
use thiserror::Error;

/// Version of every table and summary layout written here.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{source}")]
    Parse { path: PathBuf, source: ParseError },
}

pub fn read_model_file(path: &Path) -> Result<ModelSpec, FileError> {
    let text = std::fs::read_to_string(path).map_err(|source| FileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_model(&text).map_err(|source| FileError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

fn schema_line() -> String {
    format!("# schema_version={SCHEMA_VERSION}\n")
}

fn mode_columns(m: usize) -> String {
    (1..=m).map(|i| format!("n{i}")).collect::<Vec<_>>().join(",")
}

fn join_state(s: &[u64]) -> String {
    s.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
}

/// `n1,...,nM,probability`, one row per lattice state.
pub fn distribution_csv(dist: &DiagonalDistribution) -> String {
    let mut out = schema_line();
    let _ = writeln!(out, "{},probability", mode_columns(dist.lattice().modes()));
    for (s, p) in dist.iter() {
        let _ = writeln!(out, "{},{}", join_state(s), g17(p));
    }
    out
}

/// `n1,...,nM,count`, states in lexicographic order.
pub fn histogram_csv(hist: &EmpiricalDistribution) -> String {
    let mut out = schema_line();
    let _ = writeln!(out, "# trajectories={} seed={}", hist.trajectories(), hist.seed());
    let _ = writeln!(out, "{},count", mode_columns(hist.modes()));
    for (s, c) in hist.iter() {
        let _ = writeln!(out, "{},{c}", join_state(s));
    }
    out
}

/// `t,n1,...,nM`.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let m = traj.states.first().map_or(0, Vec::len);
    let mut out = schema_line();
    let _ = writeln!(out, "t,{}", mode_columns(m));
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let row: Vec<String> = std::iter::once(*t).chain(s.iter().copied()).map(g17).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

/// Generator entries as `row col rate` lines (`row` is the target state).
pub fn triplets(gen: &SparseGenerator) -> String {
    let mut out = schema_line();
    let _ = writeln!(out, "# states={} row col rate", gen.dim());
    for (r, c, w) in gen.triplets() {
        let _ = writeln!(out, "{r} {c} {}", g17(w));
    }
    out
}

/// Lattice state of each generator index, for reading `triplets` output.
pub fn state_index_csv(gen: &SparseGenerator) -> String {
    let lattice = gen.lattice();
    let mut out = schema_line();
    let _ = writeln!(out, "index,{}", mode_columns(lattice.modes()));
    for (i, s) in lattice.states().enumerate() {
        let _ = writeln!(out, "{i},{}", join_state(s));
    }
    out
}

/// JSON number carrying the 17-digit text; non-finite values become `null`.
pub fn number(x: f64) -> Value {
    if x.is_finite() {
        Value::Number(Number::from_str(&g17(x)).expect("g17 output is a JSON number"))
    } else {
        Value::Null
    }
}

fn numbers(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| number(x)).collect())
}

/// `{schema_version, mean[], second[][], variance[], rel_fluct[]}`; undefined
/// relative fluctuations are `null`.
pub fn moments_json(m: &MomentSet) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "mean": numbers(&m.mean),
        "second": Value::Array(m.second.iter().map(|r| numbers(r)).collect()),
        "variance": numbers(&m.variance),
        "rel_fluct": Value::Array(m.rel_fluct.iter().map(|r| r.map_or(Value::Null, number)).collect()),
    })
}

pub fn to_pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

/// Writes `text` to `dir/name`, or to stdout when there is no directory.
pub fn emit(dir: Option<&Path>, name: &str, text: &str) -> Result<(), FileError> {
    match dir {
        Some(d) => {
            let path = d.join(name);
            std::fs::write(&path, text).map_err(|source| FileError::Io { path, source })
        }
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| FileError::Io {
                    path: PathBuf::from("<stdout>"),
                    source,
                })
        }
    }
}
