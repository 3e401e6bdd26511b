//! Command-line front end: `pmpkit <simulate|adjoint|check|solve|probe>`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bv::NBVMeasure;
use crate::checker::{assemble_adjoint, check_certificate, try_check_certificate, Candidate, Certificate, Tolerances, Verdict};
use crate::csv_io;
use crate::ekeland::{ekeland_descend, extract_multipliers, EkelandOptions};
use crate::error::{Category, Error, Result};
use crate::grid::TimeGrid;
use crate::ode::{solve_forward, ControlSignal};
use crate::problem::{load_problem_file, Problem, ToleranceOverrides};
use crate::spike::differentiability_probe;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_FAIL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "pmpkit", version, about = "Necessary-condition toolkit for state-constrained optimal control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the state equation (trajectory.csv).
    Simulate(Common),
    /// Solve the measure-driven adjoint equation (adjoint.csv).
    Adjoint(Common),
    /// Verify the necessary conditions for a candidate (report).
    Check(Common),
    /// Penalized descent, multiplier extraction and a final check.
    Solve(Common),
    /// Spike-variation differentiability probe (probe.csv).
    Probe(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Problem file (TOML, or JSON).
    #[arg(long)]
    problem: PathBuf,
    /// Number of uniform grid cells.
    #[arg(long)]
    grid: usize,
    /// Output directory.
    #[arg(long, env = "PMPKIT_OUT", default_value = ".")]
    out: PathBuf,
    /// Control CSV (`t,u1..um`); defaults to a constant control.
    #[arg(long)]
    control: Option<PathBuf>,
    /// Cost multiplier.
    #[arg(long, default_value_t = 1.0)]
    psi: f64,
    /// Constraint multiplier CSV (`t,atom1,density1,...`); defaults to zero.
    #[arg(long)]
    eta: Option<PathBuf>,
    /// Comparison control `u'` for `probe`; defaults to the upper corner of Ω.
    #[arg(long)]
    variation: Option<PathBuf>,
    /// Spike fractions for `probe`.
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.1, 0.05, 0.025])]
    rho: Vec<f64>,
    /// Iteration budget for `solve`.
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[arg(long)]
    tol_feasibility: Option<f64>,
    #[arg(long)]
    tol_hamiltonian: Option<f64>,
    #[arg(long)]
    tol_slackness: Option<f64>,
    #[arg(long)]
    tol_transversality: Option<f64>,
    #[arg(long)]
    tol_nontriviality: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Structured,
}

/// Files to publish plus text for standard output and the exit code.
struct Outcome {
    files: Vec<(&'static str, Vec<u8>)>,
    stdout: Vec<u8>,
    code: i32,
}

/// Runs the tool on `argv` (including the program name) and returns the
/// process exit code.
pub fn run_command<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let (name, opts) = match &cli.command {
        Command::Simulate(o) => ("simulate", o),
        Command::Adjoint(o) => ("adjoint", o),
        Command::Check(o) => ("check", o),
        Command::Solve(o) => ("solve", o),
        Command::Probe(o) => ("probe", o),
    };
    let result = load(opts).and_then(|ctx| match cli.command {
        Command::Simulate(_) => simulate(&ctx),
        Command::Adjoint(_) => adjoint(&ctx),
        Command::Check(_) => check(&ctx),
        Command::Solve(_) => solve(&ctx),
        Command::Probe(_) => probe(&ctx),
    });
    let outcome = match result.and_then(|o| publish(&opts.out, &o.files).map(|_| o)) {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(stderr, "pmpkit {name}: {}", render_error(&e));
            return match e.category() {
                Category::Config => EXIT_CONFIG,
                Category::Solver => EXIT_SOLVER,
            };
        }
    };
    let _ = stdout.write_all(&outcome.stdout);
    outcome.code
}

fn render_error(e: &Error) -> String {
    let mut msg = e.to_string();
    let mut source = std::error::Error::source(e);
    while let Some(s) = source {
        let text = s.to_string();
        if !msg.contains(&text) {
            msg.push_str(": ");
            msg.push_str(&text);
        }
        source = s.source();
    }
    msg
}

/// Writes each file through a temporary in `dir`, renaming only after every
/// output was produced.
fn publish(dir: &Path, files: &[(&'static str, Vec<u8>)]) -> Result<()> {
    let io = |path: &Path, e: std::io::Error| Error::Io { path: path.display().to_string(), message: e.to_string() };
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut staged = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io(dir, e))?;
        tmp.write_all(bytes).map_err(|e| io(tmp.path(), e))?;
        staged.push((tmp, dir.join(name)));
    }
    for (tmp, target) in staged {
        tmp.persist(&target).map_err(|e| io(&target, e.error))?;
    }
    Ok(())
}

struct Context<'a> {
    opts: &'a Common,
    problem: Problem,
    grid: TimeGrid,
    tolerances: Tolerances,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.display().to_string(), message: e.to_string() })
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::InvalidInput(m) => Error::InvalidInput(format!("{}: {m}", path.display())),
        e => e,
    })
}

fn load(opts: &Common) -> Result<Context<'_>> {
    if opts.grid < 2 {
        return Err(Error::InvalidConfig(format!("--grid must be at least 2, got {}", opts.grid)));
    }
    let problem = load_problem_file(&opts.problem)?;
    let cli = ToleranceOverrides {
        feasibility: opts.tol_feasibility,
        hamiltonian: opts.tol_hamiltonian,
        slackness: opts.tol_slackness,
        transversality: opts.tol_transversality,
        nontriviality: opts.tol_nontriviality,
    };
    let tolerances = Tolerances::default().with_overrides(&problem.tolerances).with_overrides(&cli);
    let t = &tolerances;
    for (name, v) in [
        ("feasibility", t.feasibility),
        ("hamiltonian", t.hamiltonian),
        ("slackness", t.slackness),
        ("transversality", t.transversality),
        ("nontriviality", t.nontriviality),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidConfig(format!("tolerance `{name}` must be positive, got {v}")));
        }
    }
    let grid = TimeGrid::uniform(problem.t_final, opts.grid)?;
    Ok(Context { opts, problem, grid, tolerances })
}

impl Context<'_> {
    fn control_file(&self, path: &Path) -> Result<ControlSignal> {
        let u = with_path(path, csv_io::read_control(&read(path)?, self.problem.m))?;
        if (u.grid.t_final() - self.problem.t_final).abs() > 1e-12 * self.problem.t_final {
            return Err(Error::InvalidInput(format!(
                "{}: control horizon {} differs from T = {}",
                path.display(),
                u.grid.t_final(),
                self.problem.t_final
            )));
        }
        Ok(u.resample(&self.grid.union_with(u.grid.nodes())))
    }

    /// `--control`, or the given constant.
    fn control_or(&self, default: Vec<f64>) -> Result<ControlSignal> {
        match &self.opts.control {
            Some(path) => self.control_file(path),
            None => Ok(ControlSignal::constant(&self.grid, &default)),
        }
    }

    fn candidate(&self) -> Result<Candidate> {
        let u = self.control_or(self.problem.omega.center())?;
        let eta = match &self.opts.eta {
            Some(path) => with_path(path, csv_io::read_measures(&read(path)?, self.problem.j()))?,
            None => vec![NBVMeasure::zero(&self.grid); self.problem.j()],
        };
        Ok(Candidate { u, psi: self.opts.psi, eta })
    }

    fn solve_grid(&self, u: &ControlSignal) -> TimeGrid {
        self.grid.union_with(u.grid.nodes())
    }
}

fn simulate(ctx: &Context) -> Result<Outcome> {
    let u = ctx.control_or(ctx.problem.omega.center())?;
    let traj = solve_forward(&ctx.problem, &u, &ctx.solve_grid(&u))?;
    Ok(Outcome { files: vec![("trajectory.csv", csv_io::trajectory_csv(&traj))], stdout: Vec::new(), code: EXIT_OK })
}

fn adjoint(ctx: &Context) -> Result<Outcome> {
    let p = assemble_adjoint(&ctx.problem, &ctx.candidate()?)?;
    Ok(Outcome { files: vec![("adjoint.csv", csv_io::bv_path_csv(&p))], stdout: Vec::new(), code: EXIT_OK })
}

fn hamiltonian_csv(cert: &Certificate, m: usize) -> Vec<u8> {
    let mut s = String::from("t,residual,h_candidate,h_min,excluded");
    for i in 1..=m {
        s.push_str(&format!(",v{i}"));
    }
    s.push('\n');
    if let Some(h) = &cert.hamiltonian {
        for n in &h.nodes {
            s.push_str(&format!("{},{},{},{},{}", n.t, n.residual, n.h_candidate, n.h_min, n.excluded as u8));
            for v in &n.argmin {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
    }
    s.into_bytes()
}

fn report_files(cert: &Certificate, format: Format, m: usize) -> Vec<(&'static str, Vec<u8>)> {
    let name = match format {
        Format::Text => "report.txt",
        Format::Structured => "report.json",
    };
    vec![(name, emit_report(cert, format)), ("hamiltonian.csv", hamiltonian_csv(cert, m))]
}

fn verdict_code(cert: &Certificate) -> i32 {
    match &cert.verdict {
        Verdict::Pass => EXIT_OK,
        Verdict::Fail => EXIT_FAIL,
        Verdict::Error(_) => EXIT_SOLVER,
    }
}

fn check(ctx: &Context) -> Result<Outcome> {
    let candidate = ctx.candidate()?;
    let cert = match try_check_certificate(&ctx.problem, &candidate, &ctx.tolerances) {
        Ok(c) => c,
        Err(e) if e.category() == Category::Config => return Err(e),
        Err(e) => Certificate::errored(candidate.psi, render_error(&e)),
    };
    let report = emit_report(&cert, ctx.opts.format);
    Ok(Outcome { files: report_files(&cert, ctx.opts.format, ctx.problem.m), stdout: report, code: verdict_code(&cert) })
}

fn solve(ctx: &Context) -> Result<Outcome> {
    let u0 = ctx.control_or(ctx.problem.omega.upper())?;
    let options = EkelandOptions { max_iterations: ctx.opts.max_iter, ..EkelandOptions::default() };
    let descent = ekeland_descend(&ctx.problem, &u0, &ctx.grid, &options)?;
    let grid = ctx.solve_grid(&descent.u);
    let (psi, eta) = extract_multipliers(&ctx.problem, &descent.u, descent.reference, descent.eps, &grid)?;
    let cert = check_certificate(&ctx.problem, &Candidate { u: descent.u.clone(), psi, eta: eta.clone() }, &ctx.tolerances);
    let mut files = vec![
        ("control.csv", csv_io::control_csv(&descent.u)),
        ("measures.csv", csv_io::measures_csv(&eta, &grid)?),
        ("history.csv", csv_io::history_csv(&descent.history)),
    ];
    files.extend(report_files(&cert, ctx.opts.format, ctx.problem.m));
    let mut stdout = Vec::new();
    let last = descent.history.last().expect("history starts with u0");
    let _ = writeln!(
        stdout,
        "iterations {} accepted {} J {} cost {} feasibility {}{}",
        descent.iterations,
        descent.history.len() - 1,
        last.j,
        last.cost,
        last.feasibility,
        if descent.budget_exhausted { " (budget exhausted)" } else { "" }
    );
    stdout.extend(emit_report(&cert, ctx.opts.format));
    Ok(Outcome { files, stdout, code: verdict_code(&cert) })
}

fn probe(ctx: &Context) -> Result<Outcome> {
    let u = ctx.control_or(ctx.problem.omega.center())?;
    let u_prime = match &ctx.opts.variation {
        Some(path) => ctx.control_file(path)?,
        None => ControlSignal::constant(&ctx.grid, &ctx.problem.omega.upper()),
    };
    let grid = ctx.solve_grid(&u).union_with(u_prime.grid.nodes());
    let rows = differentiability_probe(&ctx.problem, &u, &u_prime, &ctx.opts.rho, &grid)?;
    Ok(Outcome { files: vec![("probe.csv", csv_io::probe_csv(&rows))], stdout: Vec::new(), code: EXIT_OK })
}

#[derive(Serialize)]
struct ConditionReport<'a> {
    name: &'a str,
    verdict: String,
    value: f64,
    tolerance: f64,
    bound: &'static str,
}

#[derive(Serialize)]
struct SlacknessReport {
    residual: f64,
    positive: f64,
    negative: f64,
}

#[derive(Serialize)]
struct Report<'a> {
    verdict: String,
    psi: f64,
    conditions: Vec<ConditionReport<'a>>,
    feasibility: f64,
    transversality: f64,
    hamiltonian_sup: Option<f64>,
    hamiltonian_l1: Option<f64>,
    excluded_nodes: Vec<f64>,
    slackness: Vec<SlacknessReport>,
    nontriviality: f64,
    monotone: &'a [bool],
}

/// Renders a certificate; output depends only on the certificate.
pub fn emit_report(cert: &Certificate, format: Format) -> Vec<u8> {
    match format {
        Format::Text => {
            let mut s = format!("verdict {}\n", cert.verdict);
            for c in &cert.conditions {
                let op = if c.lower_bound { ">=" } else { "<=" };
                s.push_str(&format!("{:<15} {} value {:e} {op} {:e}\n", c.name, c.verdict, c.value, c.tolerance));
            }
            if let Some(h) = &cert.hamiltonian {
                s.push_str(&format!("hamiltonian_l1  {:e}\n", h.l1));
                let excluded = h.nodes.iter().filter(|n| n.excluded).count();
                s.push_str(&format!("excluded_nodes  {excluded}\n"));
            }
            for (i, sl) in cert.slackness.iter().enumerate() {
                s.push_str(&format!(
                    "slackness[{}]    {:e} (positive {:e}, negative {:e})\n",
                    i + 1,
                    sl.residual,
                    sl.positive,
                    sl.negative
                ));
            }
            s.into_bytes()
        }
        Format::Structured => {
            let report = Report {
                verdict: cert.verdict.to_string(),
                psi: cert.psi,
                conditions: cert
                    .conditions
                    .iter()
                    .map(|c| ConditionReport {
                        name: c.name,
                        verdict: c.verdict.to_string(),
                        value: c.value,
                        tolerance: c.tolerance,
                        bound: if c.lower_bound { "lower" } else { "upper" },
                    })
                    .collect(),
                feasibility: cert.feasibility,
                transversality: cert.transversality,
                hamiltonian_sup: cert.hamiltonian.as_ref().map(|h| h.sup),
                hamiltonian_l1: cert.hamiltonian.as_ref().map(|h| h.l1),
                excluded_nodes: cert
                    .hamiltonian
                    .iter()
                    .flat_map(|h| h.nodes.iter().filter(|n| n.excluded).map(|n| n.t))
                    .collect(),
                slackness: cert
                    .slackness
                    .iter()
                    .map(|s| SlacknessReport { residual: s.residual, positive: s.positive, negative: s.negative })
                    .collect(),
                nontriviality: cert.nontriviality,
                monotone: &cert.monotone,
            };
            let mut bytes = serde_json::to_vec_pretty(&report).expect("report serializes");
            bytes.push(b'\n');
            bytes
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checker::Condition;

    fn cert(nontriviality: Verdict) -> Certificate {
        let cond = |name, verdict: Verdict| Condition { name, value: 0.5, tolerance: 1e-10, lower_bound: false, verdict };
        let verdict = if nontriviality.is_pass() { Verdict::Pass } else { Verdict::Fail };
        Certificate {
            psi: 1.0,
            feasibility: 0.0,
            transversality: 0.0,
            hamiltonian: None,
            slackness: Vec::new(),
            nontriviality: 0.0,
            monotone: Vec::new(),
            conditions: vec![cond("feasibility", Verdict::Pass), cond("nontriviality", nontriviality)],
            verdict,
        }
    }

    #[test]
    fn text_report_lines() {
        let text = String::from_utf8(emit_report(&cert(Verdict::Pass), Format::Text)).unwrap();
        assert_eq!(text.lines().filter(|l| l.contains(" PASS ")).count(), 2);
        let text = String::from_utf8(emit_report(&cert(Verdict::Fail), Format::Text)).unwrap();
        assert!(text.lines().any(|l| l.starts_with("nontriviality") && l.contains("FAIL") && l.contains("5e-1")));
        assert_eq!(emit_report(&cert(Verdict::Fail), Format::Text), emit_report(&cert(Verdict::Fail), Format::Text));
    }

    #[test]
    fn structured_report_parses() {
        let bytes = emit_report(&cert(Verdict::Pass), Format::Structured);
        let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(v["verdict"], "PASS");
        assert_eq!(v["conditions"][1]["name"], "nontriviality");
    }

    #[test]
    fn usage_errors_exit_one() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run_command(["pmpkit", "simulate"], &mut out, &mut err), EXIT_CONFIG);
        assert_eq!(run_command(["pmpkit", "--help"], &mut out, &mut err), EXIT_OK);
    }
}
