//! Run configuration: a sectioned TOML file, validated as a whole.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::experiments::Scenario;
use crate::grid::{InitialData, SizeGrid};
use crate::growth::{GrowthFamily, GrowthField};
use crate::kernels::{default_envelope_constant, KernelFamily, KernelSpec};
use crate::solver::SolverConfig;

pub const DEFAULT_VMIN: f64 = 1e-4;
pub const DEFAULT_VMAX: f64 = 1e4;
pub const DEFAULT_CELLS: usize = 256;
pub const DEFAULT_ENVELOPE_POINTS: usize = 50;
pub const DEFAULT_FLOW_TRIALS: usize = 1000;
pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Missing { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    kernel: RawKernel,
    #[serde(default)]
    growth: RawGrowth,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    initial: RawInitial,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    experiment: RawExperiment,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernel {
    family: String,
    #[serde(default)]
    params: Vec<f64>,
    beta: Option<f64>,
    k_env: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrowth {
    family: Option<String>,
    #[serde(default)]
    params: Vec<f64>,
    #[serde(rename = "A")]
    a_bound: Option<f64>,
    #[serde(rename = "B")]
    b_bound: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    vmin: Option<f64>,
    vmax: Option<f64>,
    cells: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    family: Option<String>,
    #[serde(default)]
    params: Vec<f64>,
    path: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    n: Option<u32>,
    substeps: Option<usize>,
    picard_tol: Option<f64>,
    picard_max_iters: Option<usize>,
    t_final: Option<f64>,
    window_cap: Option<f64>,
    moment_beta: Option<f64>,
    output_times: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    amplitudes: Option<Vec<f64>>,
    perturbation_rate: Option<f64>,
    n_list: Option<Vec<u32>>,
    radii: Option<Vec<f64>>,
    compare_intervals: Option<usize>,
    envelope_points: Option<usize>,
    flow_trials: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    verify: Option<bool>,
}

/// Experiment settings; every list is optional until a subcommand needs it.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSection {
    pub amplitudes: Option<Vec<f64>>,
    pub perturbation_rate: f64,
    pub n_list: Option<Vec<u32>>,
    pub radii: Option<Vec<f64>>,
    pub compare_intervals: usize,
    pub envelope_points: usize,
    pub flow_trials: usize,
    pub seed: u64,
}

/// A validated run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub kernel: KernelSpec,
    pub growth: GrowthField,
    pub grid: Arc<SizeGrid>,
    pub initial: InitialData,
    pub solver: SolverConfig,
    pub experiment: ExperimentSection,
    pub output_dir: Option<PathBuf>,
    pub verify: bool,
    /// The file as read, echoed into manifests.
    pub source: String,
}

impl RunConfig {
    pub fn scenario(&self) -> Scenario {
        Scenario {
            kernel: self.kernel.clone(),
            field: self.growth.clone(),
            grid: self.grid.clone(),
            initial: self.initial.clone(),
            cfg: self.solver.clone(),
        }
    }

    pub fn moment_beta(&self) -> f64 {
        self.solver.moment_beta.unwrap_or(self.kernel.beta)
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|source| ConfigError::Missing { path: path.to_path_buf(), source })?;
    parse_config_str(&text, path.parent())
}

/// Parses `text`; relative table paths resolve against `base_dir`.
pub fn parse_config_str(text: &str, base_dir: Option<&Path>) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let mut bad = Vec::new();

    let kernel = build_kernel(&raw.kernel, &mut bad);
    let growth = build_growth(&raw.growth, &mut bad);
    let (vmin, vmax, cells) = (
        raw.grid.vmin.unwrap_or(DEFAULT_VMIN),
        raw.grid.vmax.unwrap_or(DEFAULT_VMAX),
        raw.grid.cells.unwrap_or(DEFAULT_CELLS),
    );
    if cells < 8 {
        bad.push(format!("grid.cells must be at least 8, got {cells}"));
    }
    let grid = match SizeGrid::shared(vmin, vmax, cells.max(8)) {
        Ok(g) => Some(g),
        Err(e) => {
            bad.push(format!("grid: {e}"));
            None
        }
    };
    let initial = build_initial(&raw.initial, base_dir, &mut bad);

    let defaults = SolverConfig::default();
    let s = &raw.solver;
    let t_final = s.t_final.unwrap_or(defaults.t_final);
    let solver = SolverConfig {
        n: s.n.unwrap_or(defaults.n),
        substeps: s.substeps.unwrap_or(defaults.substeps),
        picard_tol: s.picard_tol.unwrap_or(defaults.picard_tol),
        picard_max_iters: s.picard_max_iters.unwrap_or(defaults.picard_max_iters),
        t_final,
        window_cap: s.window_cap.or(defaults.window_cap),
        moment_beta: s.moment_beta,
        output_times: s.output_times.clone().unwrap_or_default(),
    };
    if let Err(e) = solver.validate() {
        bad.push(format!("solver: {e}"));
    }

    let e = &raw.experiment;
    let experiment = ExperimentSection {
        amplitudes: e.amplitudes.clone(),
        perturbation_rate: e.perturbation_rate.unwrap_or(2.0),
        n_list: e.n_list.clone(),
        radii: e.radii.clone(),
        compare_intervals: e.compare_intervals.unwrap_or(crate::experiments::COMPARE_INTERVALS),
        envelope_points: e.envelope_points.unwrap_or(DEFAULT_ENVELOPE_POINTS),
        flow_trials: e.flow_trials.unwrap_or(DEFAULT_FLOW_TRIALS),
        seed: e.seed.unwrap_or(DEFAULT_SEED),
    };
    if !(experiment.perturbation_rate > 0.0) {
        bad.push("experiment.perturbation_rate must be positive".into());
    }
    if experiment.compare_intervals == 0 {
        bad.push("experiment.compare_intervals must be positive".into());
    }
    if experiment.envelope_points < 2 {
        bad.push("experiment.envelope_points must be at least 2".into());
    }
    if let Some(a) = &experiment.amplitudes {
        if a.is_empty() || a.iter().any(|x| !(*x >= 0.0)) {
            bad.push("experiment.amplitudes must be a nonempty list of nonnegative numbers".into());
        }
    }
    if let Some(ns) = &experiment.n_list {
        if ns.len() < 2 || ns.windows(2).any(|w| w[1] <= w[0]) || ns[0] < 2 {
            bad.push("experiment.n_list needs at least two strictly increasing entries >= 2".into());
        }
    }
    if let Some(r) = &experiment.radii {
        if r.is_empty() || r.windows(2).any(|w| w[1] <= w[0]) {
            bad.push("experiment.radii must be nonempty and strictly increasing".into());
        } else if r.iter().any(|&x| !(x > vmin && x < vmax)) {
            bad.push(format!("experiment.radii must lie in (vmin, vmax) = ({vmin}, {vmax})"));
        }
    }

    // cross-field rules
    let n_max = experiment.n_list.iter().flatten().copied().chain([solver.n]).max().unwrap_or(solver.n);
    if 1.0 / (n_max as f64) < vmin || n_max as f64 > vmax {
        bad.push(format!(
            "containment: the truncation window [1/n, n] = [{}, {n_max}] must lie inside the grid [vmin, vmax] = [{vmin}, {vmax}]",
            1.0 / n_max as f64
        ));
    }
    let beta_m = solver.moment_beta.or(kernel.as_ref().map(|k| k.beta));
    if let (Some(k), Some(b)) = (&kernel, solver.moment_beta) {
        if b > k.beta {
            bad.push(format!(
                "solver.moment_beta = {b} exceeds the kernel's beta = {}; the weighted norms need beta <= kernel beta",
                k.beta
            ));
        }
    }
    if let (Some(init), Some(b)) = (&initial, beta_m) {
        if !init.singular_moment_finite(b) {
            bad.push(format!(
                "integrability: M_(-2beta) of the initial data diverges at v = 0 for beta = {b} (needs 2 beta < 1 for data bounded near 0)"
            ));
        }
    }

    if !bad.is_empty() {
        return Err(ConfigError::Invalid(bad));
    }
    Ok(RunConfig {
        kernel: kernel.unwrap(),
        growth: growth.unwrap(),
        grid: grid.unwrap(),
        initial: initial.unwrap(),
        solver,
        experiment,
        output_dir: raw.output.dir,
        verify: raw.output.verify.unwrap_or(false),
        source: text.to_string(),
    })
}

fn want(params: &[f64], count: usize, what: &str, bad: &mut Vec<String>) -> bool {
    if params.len() == count {
        true
    } else {
        bad.push(format!("{what} takes {count} params, got {}", params.len()));
        false
    }
}

fn build_kernel(raw: &RawKernel, bad: &mut Vec<String>) -> Option<KernelSpec> {
    let p = &raw.params;
    let (family, default_beta) = match raw.family.as_str() {
        "smoluchowski" => want(p, 0, "kernel smoluchowski", bad).then_some((KernelFamily::Smoluchowski, Some(1.0 / 3.0))),
        "granulation" => want(p, 2, "kernel granulation (theta1, theta2)", bad)
            .then(|| (KernelFamily::Granulation { theta1: p[0], theta2: p[1] }, (p[1] > 0.0).then_some(p[1]))),
        "stirred_froth" => want(p, 1, "kernel stirred_froth (theta)", bad)
            .then(|| (KernelFamily::StirredFroth { theta: p[0] }, Some(p[0]))),
        "constant" => want(p, 1, "kernel constant (kappa)", bad).then(|| (KernelFamily::Constant { kappa: p[0] }, None)),
        other => {
            bad.push(format!(
                "unknown kernel.family '{other}' (expected smoluchowski, granulation, stirred_froth or constant)"
            ));
            None
        }
    }?;
    let Some(beta) = raw.beta.or(default_beta) else {
        bad.push(format!("kernel.beta is required for the {} family", raw.family));
        return None;
    };
    let k_env = raw.k_env.unwrap_or_else(|| default_envelope_constant(&family, beta));
    KernelSpec::new(family, beta, k_env).map_err(|e| bad.push(format!("kernel: {e}"))).ok()
}

fn build_growth(raw: &RawGrowth, bad: &mut Vec<String>) -> Option<GrowthField> {
    let p = &raw.params;
    let family = match raw.family.as_deref().unwrap_or("zero") {
        "zero" => want(p, 0, "growth zero", bad).then_some(GrowthFamily::Zero),
        "linear" => want(p, 1, "growth linear (a)", bad).then(|| GrowthFamily::Linear { a: p[0] }),
        "saturating" => {
            want(p, 2, "growth saturating (a, vstar)", bad).then(|| GrowthFamily::Saturating { a: p[0], vstar: p[1] })
        }
        other => {
            bad.push(format!("unknown growth.family '{other}' (expected zero, linear or saturating)"));
            None
        }
    }?;
    let field = GrowthField::new(family, raw.a_bound.unwrap_or(1.0), raw.b_bound.unwrap_or(1.0))
        .map_err(|e| bad.push(format!("growth: {e}")))
        .ok()?;
    if let GrowthFamily::Linear { a } = field.family {
        if !(0.0..field.a_bound).contains(&a) {
            bad.push(format!("growth linear needs 0 <= a < A, got a = {a}, A = {}", field.a_bound));
        }
    }
    Some(field)
}

fn build_initial(raw: &RawInitial, base_dir: Option<&Path>, bad: &mut Vec<String>) -> Option<InitialData> {
    let p = &raw.params;
    match raw.family.as_deref().unwrap_or("exponential") {
        "exponential" => {
            let scale = match p.len() {
                0 => 1.0,
                1 => p[0],
                _ => {
                    bad.push("initial exponential takes at most one param (scale)".into());
                    return None;
                }
            };
            if !(scale > 0.0) {
                bad.push(format!("initial exponential scale must be positive, got {scale}"));
                return None;
            }
            Some(InitialData::Exponential { scale })
        }
        "power_law" => {
            if !want(p, 3, "initial power_law (exponent, lo, hi)", bad) {
                return None;
            }
            if !(p[1] >= 0.0 && p[2] > p[1]) {
                bad.push(format!("initial power_law needs 0 <= lo < hi, got [{}, {}]", p[1], p[2]));
                return None;
            }
            Some(InitialData::TruncatedPowerLaw { exponent: p[0], lo: p[1], hi: p[2] })
        }
        "tabulated" => match &raw.path {
            Some(path) => {
                let full = match base_dir {
                    Some(d) if path.is_relative() => d.join(path),
                    _ => path.clone(),
                };
                Some(InitialData::Tabulated(full))
            }
            None => {
                bad.push("initial tabulated needs a path".into());
                None
            }
        },
        other => {
            bad.push(format!("unknown initial.family '{other}' (expected exponential, power_law or tabulated)"));
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config_str("[kernel]\nfamily = \"constant\"\nparams = [1.0]\nbeta = 0.3\n", None).unwrap();
        assert_eq!(cfg.grid.cells(), DEFAULT_CELLS);
        assert_eq!(cfg.solver, SolverConfig { moment_beta: None, ..SolverConfig::default() });
        assert!(cfg.growth.is_zero());
        assert_eq!(cfg.initial, InitialData::Exponential { scale: 1.0 });
        assert!(!cfg.verify);
    }

    #[test]
    fn containment_violation_is_named() {
        let text = "[kernel]\nfamily = \"constant\"\nparams = [1.0]\nbeta = 0.3\n[grid]\nvmax = 10.0\n[solver]\nn = 100\n";
        match parse_config_str(text, None) {
            Err(ConfigError::Invalid(v)) => assert!(v.iter().any(|m| m.contains("containment")), "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn divergent_singular_moment_rejected() {
        let text = "[kernel]\nfamily = \"stirred_froth\"\nparams = [0.6]\n";
        match parse_config_str(text, None) {
            Err(ConfigError::Invalid(v)) => assert!(v.iter().any(|m| m.contains("integrability")), "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn all_violations_reported() {
        let text = "[kernel]\nfamily = \"warp\"\n[grid]\ncells = 4\n[solver]\nsubsteps = 2\n";
        match parse_config_str(text, None) {
            Err(ConfigError::Invalid(v)) => assert!(v.len() >= 3, "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_errors_are_parse_errors() {
        assert!(matches!(parse_config_str("[kernel\n", None), Err(ConfigError::Parse(_))));
        assert!(matches!(
            parse_config_str("[kernel]\nfamily = \"constant\"\nparams = [1.0]\nbeta = 0.3\nbogus = 1\n", None),
            Err(ConfigError::Parse(_))
        ));
    }
}
