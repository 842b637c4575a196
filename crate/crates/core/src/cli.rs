//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or I/O failure, 2 invariant violated beyond
//! tolerance, 3 Picard nonconvergence, 4 invalid configuration, 5 unparsable
//! configuration, 6 missing configuration file.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::config::{parse_config, ConfigError, RunConfig};
use crate::error::Error;
use crate::experiments::{
    continuous_dependence, truncation_ladder, write_table, ExperimentPlan, TailTable, Variation,
};
use crate::kernels::log_sample_grid;
use crate::output::{fmt12, gnuplot_script, write_text};
use crate::solver::{report, Solution};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVARIANT: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;
pub const EXIT_INVALID_CONFIG: i32 = 4;
pub const EXIT_PARSE: i32 = 5;
pub const EXIT_MISSING: i32 = 6;

/// Environment variable overriding the output directory.
pub const OUT_ENV: &str = "GROWCOAG_OUT";
const DEFAULT_OUT: &str = "growcoag-out";

#[derive(Debug, Parser)]
#[command(name = "growcoag", version, about = "Growth-coagulation solver for singular kernels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// Configuration file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides $GROWCOAG_OUT and output.dir.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sequential, bitwise reproducible execution.
    #[arg(long)]
    pub verify: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the kernel against its envelope on a log grid.
    CheckKernel(Common),
    /// Check the growth assumptions and the characteristic-flow bounds.
    CheckGrowth(Common),
    /// Solve and write the moment history.
    Simulate(Common),
    /// Continuous dependence on perturbed initial data.
    Depend(Common),
    /// Distances between solutions along a ladder of truncation indices.
    Converge(Common),
    /// Tail first moments beyond a list of radii.
    Tails(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Self::CheckKernel(c)
            | Self::CheckGrowth(c)
            | Self::Simulate(c)
            | Self::Depend(c)
            | Self::Converge(c)
            | Self::Tails(c) => c,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Self::CheckKernel(_) => "check-kernel",
            Self::CheckGrowth(_) => "check-growth",
            Self::Simulate(_) => "simulate",
            Self::Depend(_) => "depend",
            Self::Converge(_) => "converge",
            Self::Tails(_) => "tails",
        }
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    run(&cli.command)
}

pub fn run(command: &Command) -> i32 {
    let common = command.common();
    let cfg = match parse_config(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return match e {
                ConfigError::Missing { .. } => EXIT_MISSING,
                ConfigError::Parse(_) => EXIT_PARSE,
                ConfigError::Invalid(_) => EXIT_INVALID_CONFIG,
            };
        }
    };
    let out = output_dir(common, &cfg);
    let verify = common.verify || cfg.verify;
    let result = match command {
        Command::CheckKernel(_) => check_kernel(&cfg, &out),
        Command::CheckGrowth(_) => check_growth(&cfg, &out),
        Command::Simulate(_) => simulate(&cfg, &out),
        Command::Depend(_) => depend(&cfg, &out, verify),
        Command::Converge(_) => converge(&cfg, &out, verify),
        Command::Tails(_) => tails(&cfg, &out, verify),
    };
    match result {
        Ok(outcome) => {
            let manifest = manifest(command.name(), &cfg, verify, &outcome);
            if let Err(e) = write_text(&out, "manifest.txt", &manifest) {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
            for v in &outcome.violations {
                eprintln!("violation: {v}");
            }
            if outcome.violations.is_empty() {
                EXIT_OK
            } else {
                EXIT_INVARIANT
            }
        }
        Err(Error::NonConvergence(nc)) => {
            eprintln!("error: {nc}");
            let mut outcome = Outcome::default();
            if let Some(partial) = &nc.partial {
                let _ = write_text(&out, "moments.csv", &partial.moments.to_csv());
                outcome.record_solution(partial);
            }
            outcome.body.push_str(&format!("nonconvergence: {nc}\nresiduals:"));
            for r in &nc.residuals {
                outcome.body.push_str(&format!(" {}", fmt12(*r)));
            }
            outcome.body.push('\n');
            let _ = write_text(&out, "manifest.txt", &manifest(command.name(), &cfg, verify, &outcome));
            EXIT_NONCONVERGENCE
        }
        Err(Error::Config(msg)) => {
            eprintln!("error: invalid config: {msg}");
            EXIT_INVALID_CONFIG
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn output_dir(common: &Common, cfg: &RunConfig) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Result text and violated invariants of one subcommand.
#[derive(Debug, Default)]
struct Outcome {
    body: String,
    violations: Vec<String>,
}

impl Outcome {
    fn record_solution(&mut self, sol: &Solution) {
        let _ = writeln!(self.body, "windows={}", sol.steps.len());
        let _ = writeln!(self.body, "overflow={}", fmt12(sol.overflow));
        let _ = writeln!(self.body, "max_clamped={}", fmt12(sol.clamped));
        let _ = writeln!(self.body, "max_contraction_ratio={}", fmt12(sol.max_contraction_ratio()));
        let _ = writeln!(self.body, "{}", sol.moments.checks.to_key_values());
        self.body.push_str("[windows]\n");
        for s in &sol.steps {
            let _ = writeln!(self.body, "{}", s.to_key_values());
        }
    }

    fn check_solution(&mut self, label: &str, sol: &Solution) {
        for v in sol.moments.checks.violations() {
            self.violations.push(format!("{label}: {v}"));
        }
        let ratio = sol.max_contraction_ratio();
        if ratio > report::CONTRACTION_TOL {
            self.violations.push(format!("{label}: Picard contraction ratio {ratio:e} above {}", report::CONTRACTION_TOL));
        }
    }
}

fn sha256(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn manifest(sub: &str, cfg: &RunConfig, verify: bool, outcome: &Outcome) -> String {
    let mut m = String::new();
    let _ = writeln!(m, "growcoag {} {sub}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(m, "verify={verify}");
    let _ = writeln!(m, "[hashes]");
    let kernel = cfg.kernel.descriptor().unwrap_or_default();
    let _ = writeln!(m, "kernel={}", sha256(&kernel));
    let _ = writeln!(m, "grid={}", sha256(&cfg.grid.descriptor()));
    let field = format!("{:?};A={:e};B={:e}", cfg.growth.family, cfg.growth.a_bound, cfg.growth.b_bound);
    let _ = writeln!(m, "field={}", sha256(&field));
    let _ = writeln!(m, "config={}", sha256(&cfg.source));
    let _ = writeln!(m, "[tolerances]");
    let s = &cfg.solver;
    let _ = writeln!(m, "picard_tol={}", fmt12(s.picard_tol));
    let _ = writeln!(m, "picard_max_iters={}", s.picard_max_iters);
    let _ = writeln!(m, "contraction={}", fmt12(report::CONTRACTION_TOL));
    let _ = writeln!(m, "m0_relative={}", fmt12(report::M0_TOL));
    let _ = writeln!(m, "mneg_relative={}", fmt12(report::MNEG_TOL));
    let _ = writeln!(m, "mass_balance={}", fmt12(report::BALANCE_TOL));
    let _ = writeln!(m, "clamped_mass={}", fmt12(report::CLAMP_TOL));
    let _ = writeln!(m, "weak_residual={}", fmt12(report::WEAK_TOL));
    let _ = writeln!(m, "[resolved]");
    let _ = writeln!(m, "kernel={kernel}");
    let _ = writeln!(m, "beta_n={}", fmt12(cfg.kernel.sup_truncated(s.n)));
    let _ = writeln!(m, "field={field}");
    let _ = writeln!(m, "grid={}", cfg.grid.descriptor());
    let _ = writeln!(m, "initial={:?}", cfg.initial);
    let _ = writeln!(m, "moment_beta={}", fmt12(cfg.moment_beta()));
    let _ = writeln!(m, "n={} substeps={} t_final={} window_cap={}", s.n, s.substeps, fmt12(s.t_final), s.window_cap.map(fmt12).unwrap_or_else(|| "none".into()));
    let _ = writeln!(m, "[config]");
    m.push_str(&cfg.source);
    if !cfg.source.ends_with('\n') {
        m.push('\n');
    }
    let _ = writeln!(m, "[result]");
    m.push_str(&outcome.body);
    let _ = writeln!(m, "[violations]");
    for v in &outcome.violations {
        let _ = writeln!(m, "{v}");
    }
    m
}

fn check_kernel(cfg: &RunConfig, out: &Path) -> Result<Outcome, Error> {
    let samples = log_sample_grid(cfg.experiment.envelope_points, 1e-4, 1e4);
    let report = cfg.kernel.verify_envelope(&samples);
    let text = report.to_key_values();
    println!("{text}");
    write_text(out, "envelope.txt", &format!("{text}\n"))?;
    let mut o = Outcome { body: format!("{text}\n"), ..Default::default() };
    if !report.ok {
        o.violations.push(format!("kernel exceeds its envelope, worst ratio {}", fmt12(report.worst_ratio)));
    }
    Ok(o)
}

fn check_growth(cfg: &RunConfig, out: &Path) -> Result<Outcome, Error> {
    let t_final = cfg.solver.t_final;
    let vs: Vec<f64> = (0..60).map(|k| 1e-6 * 10f64.powf(10.0 * k as f64 / 59.0)).collect();
    let samples: Vec<(f64, f64)> =
        (0..5).flat_map(|i| vs.iter().map(move |&v| (t_final * i as f64 / 4.0, v))).collect();
    let assumptions = cfg.growth.verify_assumptions(&samples);
    let suite = cfg.growth.flow_property_suite(cfg.experiment.flow_trials, cfg.experiment.seed)?;
    let text = format!("{}\n{}\n", assumptions.to_key_values(), suite.to_key_values());
    print!("{text}");
    write_text(out, "growth.txt", &text)?;
    let mut o = Outcome { body: text, ..Default::default() };
    if !assumptions.ok {
        o.violations.push("growth field violates its assumptions".into());
    }
    if !suite.ok() {
        o.violations.push("characteristic-flow property suite failed".into());
    }
    Ok(o)
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<Outcome, Error> {
    let sol = cfg.scenario().run()?;
    write_text(out, "moments.csv", &sol.moments.to_csv())?;
    write_text(
        out,
        "moments.gp",
        &gnuplot_script("moments.csv", "moment history", &crate::solver::MomentReport::HEADER, "y"),
    )?;
    write_text(out, "states.csv", &states_csv(&sol))?;
    let mut o = Outcome::default();
    o.record_solution(&sol);
    o.check_solution("simulate", &sol);
    println!("windows={} max_contraction_ratio={}", sol.steps.len(), fmt12(sol.max_contraction_ratio()));
    Ok(o)
}

/// Densities at the output times, one column per time.
fn states_csv(sol: &Solution) -> String {
    let mut header = vec!["v".to_string()];
    header.extend(sol.outputs.iter().map(|s| format!("c_t{}", fmt12(s.time))));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let Some(first) = sol.outputs.first() else {
        return crate::output::csv(&header, &[]);
    };
    let g = first.grid();
    let rows: Vec<Vec<f64>> = (0..g.cells())
        .map(|i| std::iter::once(g.centers()[i]).chain(sol.outputs.iter().map(|s| s.values()[i])).collect())
        .collect();
    crate::output::csv(&header, &rows)
}

fn plan(cfg: &RunConfig, variation: Variation, out: &Path, verify: bool) -> ExperimentPlan {
    let mut p = ExperimentPlan::new(cfg.scenario(), variation);
    p.out_dir = Some(out.to_path_buf());
    p.verify = verify;
    p.perturbation_rate = cfg.experiment.perturbation_rate;
    p.compare_intervals = cfg.experiment.compare_intervals;
    p
}

fn depend(cfg: &RunConfig, out: &Path, verify: bool) -> Result<Outcome, Error> {
    let amps = cfg.experiment.amplitudes.clone().unwrap_or_else(|| vec![1e-1, 1e-2, 1e-3]);
    let table = continuous_dependence(&plan(cfg, Variation::PerturbInitial(amps), out, verify))?;
    let body = table.to_csv();
    write_table(out, "dependence", "continuous dependence", &body, "x")?;
    print!("{body}");
    let mut o = Outcome { body: format!("ratio_spread={}\n", fmt12(table.ratio_spread())), ..Default::default() };
    let spread = table.ratio_spread();
    if table.rows.iter().any(|r| r.amplitude > 0.0 && !r.ratio.is_finite()) || spread > 2.0 {
        o.violations.push(format!("amplification ratios spread by a factor {}", fmt12(spread)));
    }
    Ok(o)
}

fn converge(cfg: &RunConfig, out: &Path, verify: bool) -> Result<Outcome, Error> {
    let ns = cfg.experiment.n_list.clone().unwrap_or_else(|| vec![4, 8, 16, 32]);
    let table = truncation_ladder(&plan(cfg, Variation::TruncationLadder(ns), out, verify))?;
    let body = table.to_csv();
    write_table(out, "ladder", "truncation ladder", &body, "y")?;
    print!("{body}");
    let mut o = Outcome::default();
    for run in &table.runs {
        let _ = writeln!(o.body, "[n={}]", run.n);
        o.record_solution(&run.solution);
        if !run.mneg_ok {
            o.violations.push(format!("n={}: M_-2beta exceeded its initial value", run.n));
        }
    }
    if !table.strictly_decreasing() {
        o.violations.push("successive distances are not strictly decreasing".into());
    }
    Ok(o)
}

fn tails(cfg: &RunConfig, out: &Path, verify: bool) -> Result<Outcome, Error> {
    let radii = cfg.experiment.radii.clone().unwrap_or_else(|| {
        let (lo, hi) = (1.0, cfg.grid.vmax() / 4.0);
        (0..8).map(|k| lo * (hi / lo).powf(k as f64 / 7.0)).collect()
    });
    let plan_tails = plan(cfg, Variation::TailRadii(radii.clone()), out, verify);
    plan_tails.validate()?;
    let runs: Vec<(String, Solution)> = match &cfg.experiment.n_list {
        Some(ns) => truncation_ladder(&plan(cfg, Variation::TruncationLadder(ns.clone()), out, verify))?
            .runs
            .into_iter()
            .map(|r| (format!("n{}", r.n), r.solution))
            .collect(),
        None => vec![(format!("n{}", cfg.solver.n), cfg.scenario().run()?)],
    };
    let refs: Vec<(String, &Solution)> = runs.iter().map(|(l, s)| (l.clone(), s)).collect();
    let table = TailTable::new(&radii, &refs);
    let body = table.to_csv();
    write_table(out, "tails", "tail first moments", &body, "xy")?;
    print!("{body}");
    let mut o = Outcome::default();
    let late = table.non_monotone_in_n();
    let _ = writeln!(o.body, "non_monotone_in_n={}", if late.is_empty() { "none".into() } else { late.join(",") });
    if !table.monotone() {
        o.violations.push("tail columns are not monotone in R".into());
    }
    Ok(o)
}
