//! The `solve`, `refine` and `selfcheck` pipelines.

use std::path::Path;
use std::time::Instant;

use ocm_core::approx::{global_approx, ApproxOptions, Band, ResidualCertificate};
use ocm_core::baire::Lattice;
use ocm_core::filters::selfcheck::{self, SelfcheckOptions, SelfcheckReport};
use ocm_core::order::{cauchy_gap, refine_solution, SolutionTrace};
use serde::Serialize;

use crate::config::{Problem, ProblemConfig};
use crate::{CliError, EXIT_FAIL, EXIT_OK};

pub const CERTIFICATE_FILE: &str = "certificate.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const REPORT_FILE: &str = "report.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificateRow {
    pub n: usize,
    pub component: usize,
    pub samples: usize,
    pub min_residual: f64,
    pub max_residual: f64,
    pub eps: f64,
    pub eta: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceRow {
    pub n: usize,
    pub eps: f64,
    pub max_residual: f64,
    pub min_residual: f64,
    /// Largest change of the images since step `n − 1`.
    pub gap: Option<f64>,
    pub repairs: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct OffenderRow {
    pub n: usize,
    pub component: usize,
    pub point: Vec<f64>,
    pub residual: f64,
    pub subcell: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub command: &'static str,
    pub config: ProblemConfig,
    pub certificates: Vec<CertificateRow>,
    pub trace: Vec<TraceRow>,
    pub offenders: Vec<OffenderRow>,
    pub pieces: usize,
    pub repairs: usize,
    /// Repairs tolerated before the verdict fails.
    pub repair_bound: usize,
    pub verdict: Verdict,
    pub wall_time_s: f64,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        match self.verdict {
            Verdict::Pass => EXIT_OK,
            Verdict::Fail => EXIT_FAIL,
        }
    }
}

fn options(p: &Problem) -> ApproxOptions {
    let s = &p.config.solve;
    ApproxOptions {
        eta: s.eta,
        samples_per_cell: s.samples_per_cell,
        min_samples: s.min_samples,
        margin: s.margin,
        seed: s.seed,
    }
}

fn cert_rows(n: usize, c: &ResidualCertificate) -> impl Iterator<Item = CertificateRow> + '_ {
    c.components.iter().enumerate().map(move |(i, s)| CertificateRow {
        n,
        component: i + 1,
        samples: s.samples,
        min_residual: s.min_residual,
        max_residual: s.max_residual,
        eps: c.eps(),
        eta: c.eta,
        pass: s.pass,
    })
}

fn offender_rows(n: usize, c: &ResidualCertificate) -> impl Iterator<Item = OffenderRow> + '_ {
    c.offenders.iter().map(move |o| OffenderRow {
        n,
        component: o.component,
        point: o.point.clone(),
        residual: o.residual,
        subcell: o.subcell,
    })
}

fn write(out: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = out.join(name);
    std::fs::write(&path, contents).map_err(|source| CliError::Io { path, source })
}

fn prepare(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.to_path_buf(),
        source,
    })
}

fn write_report(out: &Path, report: &RunReport) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(report).expect("report serialises");
    write(out, REPORT_FILE, &(json + "\n"))
}

/// One-sided approximation at the configured `epsilon`.
pub fn run_solve(p: &Problem, out: &Path) -> Result<RunReport, CliError> {
    let start = Instant::now();
    prepare(out)?;
    let band = Band::below(p.config.solve.epsilon)?;
    let (u, cert) = global_approx(&p.system, &p.rhs, &p.partition, band, &options(p))?;
    write(out, CERTIFICATE_FILE, &cert.to_csv())?;
    let pass = cert.pass() && !cert.insufficient;
    let report = RunReport {
        command: "solve",
        config: p.config.clone(),
        certificates: cert_rows(1, &cert).collect(),
        trace: Vec::new(),
        offenders: offender_rows(1, &cert).collect(),
        pieces: u.len(),
        repairs: 0,
        repair_bound: 0,
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    write_report(out, &report)?;
    Ok(report)
}

fn trace_rows(trace: &SolutionTrace) -> Vec<TraceRow> {
    trace
        .steps
        .iter()
        .map(|s| TraceRow {
            n: s.n,
            eps: s.band.eps(),
            max_residual: s.certificate.max_residual(),
            min_residual: s.certificate.min_residual(),
            gap: (s.n > 1).then(|| {
                cauchy_gap(trace, s.n - 1, s.n)
                    .expect("consecutive steps exist")
                    .into_iter()
                    .fold(0.0, f64::max)
            }),
            repairs: s.repairs,
        })
        .collect()
}

/// Steps `n = 1..=refine_steps` of the refinement schedule. The certificate
/// file holds the last step; the report holds every step.
pub fn run_refine(p: &Problem, out: &Path) -> Result<RunReport, CliError> {
    let start = Instant::now();
    prepare(out)?;
    let s = &p.config.solve;
    let nodes = vec![s.lattice_nodes; p.system.dim()];
    let lattice = Lattice::uniform(p.partition.bounds(), &nodes)?;
    let trace = refine_solution(
        &p.system,
        &p.rhs,
        &p.partition,
        s.refine_steps,
        &lattice,
        &options(p),
        s.schedule.into(),
    )?;
    let last = trace.steps.last().expect("at least one step");
    write(out, TRACE_FILE, &trace.to_csv())?;
    write(out, CERTIFICATE_FILE, &last.certificate.to_csv())?;
    let repair_bound = 0;
    let certified = trace.steps.iter().all(|st| st.certificate.pass() && !st.certificate.insufficient);
    let pass = certified && trace.repairs() <= repair_bound;
    let report = RunReport {
        command: "refine",
        config: p.config.clone(),
        certificates: trace.steps.iter().flat_map(|st| cert_rows(st.n, &st.certificate)).collect(),
        trace: trace_rows(&trace),
        offenders: trace.steps.iter().flat_map(|st| offender_rows(st.n, &st.certificate)).collect(),
        pieces: last.solution.len(),
        repairs: trace.repairs(),
        repair_bound,
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    write_report(out, &report)?;
    Ok(report)
}

/// The filter-axiom checkers against literal enumeration.
pub fn run_selfcheck(opts: &SelfcheckOptions) -> SelfcheckReport {
    selfcheck::run(opts)
}
