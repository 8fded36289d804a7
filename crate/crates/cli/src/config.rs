//! Problem files: `[domain]`, `[system]` and `[solve]` sections in TOML.

use std::path::Path;

use ocm_core::domain::{BoxN, CellPartition};
use ocm_core::expr::{parse_expr, parse_system, ParseError, PdeSystem, RhsExprs, Scope};
use ocm_core::order::Schedule;
use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::CliError;

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub domain: DomainSection,
    pub system: SystemSection,
    pub solve: SolveSection,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cells: Vec<usize>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub n: usize,
    pub k: usize,
    pub m: u32,
    pub equations: Vec<Spanned<String>>,
    pub rhs: Vec<Spanned<String>>,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleName {
    #[default]
    Nested,
    Plain,
}

impl From<ScheduleName> for Schedule {
    fn from(s: ScheduleName) -> Self {
        match s {
            ScheduleName::Nested => Schedule::Nested,
            ScheduleName::Plain => Schedule::Plain,
        }
    }
}

fn default_min_samples() -> usize {
    10_000
}

fn default_lattice_nodes() -> usize {
    101
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    pub epsilon: f64,
    pub refine_steps: usize,
    pub samples_per_cell: usize,
    pub margin: f64,
    pub seed: u64,
    pub eta: f64,
    #[serde(default = "default_min_samples")]
    pub min_samples: usize,
    #[serde(default)]
    pub schedule: ScheduleName,
    /// Nodes per axis of the lattice carrying refinement images.
    #[serde(default = "default_lattice_nodes")]
    pub lattice_nodes: usize,
}

/// A validated problem, ready to run.
#[derive(Clone, Debug)]
pub struct Problem {
    pub config: ProblemConfig,
    pub system: PdeSystem,
    pub rhs: RhsExprs,
    pub partition: CellPartition,
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Position of an expression error inside the file. Exact for single-line
/// strings without escapes, otherwise points at the string's start.
fn locate(text: &str, src: &Spanned<String>, err: &ParseError) -> String {
    let span = src.span();
    let (line, col) = line_col(text, span.start);
    let raw = &text[span.start..span.end.min(text.len())];
    let plain = raw.len() == src.get_ref().len() + 2 && !raw.contains('\\');
    let (l, c) = if plain && err.line == 1 {
        (line, col + err.column)
    } else {
        (line, col)
    };
    format!("line {l}, column {c}: {}", err.kind)
}

fn bad(name: &str, what: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{name}: {what}"))
}

impl Problem {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: ProblemConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))?;
        let d = &config.domain;
        let s = &config.system;
        let v = &config.solve;
        if s.n == 0 {
            return Err(bad("system.n", "must be at least 1"));
        }
        for (name, len) in [
            ("domain.lower", d.lower.len()),
            ("domain.upper", d.upper.len()),
            ("domain.cells", d.cells.len()),
        ] {
            if len != s.n {
                return Err(bad(name, format_args!("has {len} entries, expected n = {}", s.n)));
            }
        }
        if s.equations.len() != s.k {
            return Err(bad(
                "system.equations",
                format_args!("has {} entries, expected k = {}", s.equations.len(), s.k),
            ));
        }
        if s.rhs.len() != s.k {
            return Err(bad(
                "system.rhs",
                format_args!("has {} entries, expected k = {}", s.rhs.len(), s.k),
            ));
        }
        if !(v.epsilon > 0.0 && v.epsilon.is_finite()) {
            return Err(bad("solve.epsilon", "must be positive"));
        }
        if v.refine_steps == 0 {
            return Err(bad("solve.refine_steps", "must be at least 1"));
        }
        if v.samples_per_cell == 0 {
            return Err(bad("solve.samples_per_cell", "must be at least 1"));
        }
        if !(v.margin > 0.0 && v.margin < 0.5) {
            return Err(bad("solve.margin", "must lie in (0, 0.5)"));
        }
        if !(v.eta >= 0.0 && v.eta.is_finite()) {
            return Err(bad("solve.eta", "must be nonnegative"));
        }
        if v.lattice_nodes < 2 {
            return Err(bad("solve.lattice_nodes", "must be at least 2"));
        }

        let scope = Scope { n: s.n, k: s.k, m: s.m };
        for (i, src) in s.equations.iter().enumerate() {
            parse_expr(src.get_ref(), scope)
                .map_err(|e| bad(&format!("system.equations[{}]", i + 1), locate(text, src, &e)))?;
        }
        for (i, src) in s.rhs.iter().enumerate() {
            parse_expr(src.get_ref(), Scope { n: s.n, k: 0, m: 0 })
                .map_err(|e| bad(&format!("system.rhs[{}]", i + 1), locate(text, src, &e)))?;
        }
        let joined: Vec<&str> = s.equations.iter().map(|e| e.get_ref().as_str()).collect();
        let system = parse_system(&joined.join("\n"), s.n, s.k, s.m).map_err(|e| bad("system.equations", e))?;
        let rhs_src: Vec<&str> = s.rhs.iter().map(|e| e.get_ref().as_str()).collect();
        let rhs = RhsExprs::parse(&rhs_src, s.n).map_err(|e| bad("system.rhs", e))?;

        let bounds = BoxN::new(d.lower.clone(), d.upper.clone()).map_err(|e| bad("domain", e))?;
        let partition = CellPartition::build(&bounds, &d.cells).map_err(|e| bad("domain.cells", e))?;
        Ok(Problem {
            config,
            system,
            rhs,
            partition,
        })
    }
}
