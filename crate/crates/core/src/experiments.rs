//! Numerical studies built on the solver: stability under perturbed data,
//! convergence in the truncation index, tails and superlinear moments.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{l1_distance, project_initial, weighted_norm, DensityState, InitialData, SizeGrid};
use crate::growth::GrowthField;
use crate::kernels::KernelSpec;
use crate::output::{csv, gnuplot_script, write_text};
use crate::solver::{Solution, Solver, SolverConfig};

/// Default number of equal time intervals on which runs are compared.
pub const COMPARE_INTERVALS: usize = 20;

/// Everything needed for one solve.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub kernel: KernelSpec,
    pub field: GrowthField,
    pub grid: Arc<SizeGrid>,
    pub initial: InitialData,
    pub cfg: SolverConfig,
}

impl Scenario {
    /// `β` of `M_{-2β}` and of the weighted norm.
    pub fn moment_beta(&self) -> f64 {
        self.cfg.moment_beta.unwrap_or(self.kernel.beta)
    }

    pub fn project(&self) -> Result<DensityState> {
        project_initial(&self.initial, &self.grid, self.moment_beta()).map(|(s, _)| s)
    }

    pub fn solver(&self) -> Result<Solver> {
        Solver::new(self.cfg.clone(), &self.kernel, self.field.clone(), self.grid.clone())
    }

    pub fn run(&self) -> Result<Solution> {
        self.solver()?.solve(&self.project()?)
    }

    /// Copy whose output times are `k T / intervals`, so that runs with
    /// different window lengths share comparison times.
    pub fn with_compare_times(&self, intervals: usize) -> Self {
        let mut s = self.clone();
        let t = s.cfg.t_final;
        s.cfg.output_times = (0..=intervals).map(|k| t * k as f64 / intervals as f64).collect();
        s
    }

    pub fn with_n(&self, n: u32) -> Self {
        let mut s = self.clone();
        s.cfg.n = n;
        s
    }
}

/// The parameter varied by an experiment.
#[derive(Clone, Debug, PartialEq)]
pub enum Variation {
    PerturbInitial(Vec<f64>),
    TruncationLadder(Vec<u32>),
    TailRadii(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct ExperimentPlan {
    pub base: Scenario,
    pub variation: Variation,
    pub out_dir: Option<PathBuf>,
    /// Sequential execution of independent runs.
    pub verify: bool,
    /// Perturbations are `ε e^{-rate v}`.
    pub perturbation_rate: f64,
    pub compare_intervals: usize,
}

impl ExperimentPlan {
    pub fn new(base: Scenario, variation: Variation) -> Self {
        Self { base, variation, out_dir: None, verify: false, perturbation_rate: 2.0, compare_intervals: COMPARE_INTERVALS }
    }

    /// Lists must be nonempty and strictly monotone.
    pub fn validate(&self) -> Result<()> {
        let ok = match &self.variation {
            Variation::PerturbInitial(a) => !a.is_empty() && strictly_monotone(a) && a.iter().all(|x| *x >= 0.0),
            Variation::TruncationLadder(n) => {
                n.len() >= 2 && n.windows(2).all(|w| w[1] > w[0]) && n[0] >= 2
            }
            Variation::TailRadii(r) => !r.is_empty() && r.windows(2).all(|w| w[1] > w[0]),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("experiment lists must be nonempty and strictly monotone: {:?}", self.variation)))
        }
    }
}

fn strictly_monotone(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[1] > w[0]) || x.windows(2).all(|w| w[1] < w[0])
}

fn map_runs<T: Send, R: Send>(verify: bool, items: Vec<T>, f: impl Fn(T) -> R + Sync + Send) -> Vec<R> {
    if verify {
        items.into_iter().map(f).collect()
    } else {
        items.into_par_iter().map(f).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DependenceRow {
    pub amplitude: f64,
    pub initial_distance: f64,
    pub sup_distance: f64,
    /// `sup_distance / initial_distance`; NaN for a zero perturbation.
    pub ratio: f64,
}

#[derive(Clone, Debug)]
pub struct DependenceTable {
    pub beta: f64,
    pub rows: Vec<DependenceRow>,
}

impl DependenceTable {
    pub const HEADER: [&'static str; 4] = ["amplitude", "initial_distance", "sup_distance", "ratio"];

    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<f64>> =
            self.rows.iter().map(|r| vec![r.amplitude, r.initial_distance, r.sup_distance, r.ratio]).collect();
        csv(&Self::HEADER, &rows)
    }

    /// Largest over smallest finite ratio.
    pub fn ratio_spread(&self) -> f64 {
        let finite: Vec<f64> = self.rows.iter().map(|r| r.ratio).filter(|r| r.is_finite()).collect();
        if finite.is_empty() {
            return f64::NAN;
        }
        let max = finite.iter().copied().fold(f64::MIN, f64::max);
        let min = finite.iter().copied().fold(f64::MAX, f64::min);
        max / min
    }
}

/// `sup_t ‖c_1(t) − c_2(t)‖` in the weight `v^{-β} + v` for data `c_0` and
/// `c_0 + ε e^{-rate v}`, per amplitude `ε`.
pub fn continuous_dependence(plan: &ExperimentPlan) -> Result<DependenceTable> {
    plan.validate()?;
    let Variation::PerturbInitial(amplitudes) = &plan.variation else {
        return Err(Error::Config("continuous_dependence needs a PerturbInitial plan".into()));
    };
    let base = plan.base.with_compare_times(plan.compare_intervals);
    let beta = base.moment_beta();
    let solver = base.solver()?;
    let c0 = base.project()?;
    let (bump, _) = project_initial(&InitialData::Exponential { scale: 1.0 / plan.perturbation_rate }, &base.grid, beta)?;
    let reference = solver.solve(&c0)?;
    let runs = map_runs(plan.verify, amplitudes.clone(), |eps| -> Result<DependenceRow> {
        let perturbed = c0.added(&bump.scaled(eps)?)?;
        let initial_distance = weighted_norm(&c0, &perturbed, beta)?;
        let sol = solver.solve(&perturbed)?;
        let mut sup = 0.0f64;
        for (a, b) in reference.outputs.iter().zip(&sol.outputs) {
            sup = sup.max(weighted_norm(a, b, beta)?);
        }
        Ok(DependenceRow { amplitude: eps, initial_distance, sup_distance: sup, ratio: sup / initial_distance })
    });
    Ok(DependenceTable { beta, rows: runs.into_iter().collect::<Result<_>>()? })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LadderRow {
    pub n: u32,
    pub next_n: u32,
    /// `sup_t ‖c_n(t) − c_{next}(t)‖_{L¹}` over the comparison times.
    pub sup_l1: f64,
}

#[derive(Clone, Debug)]
pub struct LadderRun {
    pub n: u32,
    pub solution: Solution,
    /// `M_{-2β}(t) ≤ M_{-2β}(c_0)(1 + 10⁻⁶)` along the run.
    pub mneg_ok: bool,
}

#[derive(Clone, Debug)]
pub struct LadderTable {
    pub rows: Vec<LadderRow>,
    pub runs: Vec<LadderRun>,
}

impl LadderTable {
    pub const HEADER: [&'static str; 3] = ["n", "next_n", "sup_l1"];

    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<f64>> =
            self.rows.iter().map(|r| vec![r.n as f64, r.next_n as f64, r.sup_l1]).collect();
        csv(&Self::HEADER, &rows)
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].sup_l1 < w[0].sup_l1)
    }
}

/// Solves for each `n` of the ladder and measures successive distances.
pub fn truncation_ladder(plan: &ExperimentPlan) -> Result<LadderTable> {
    plan.validate()?;
    let Variation::TruncationLadder(ns) = &plan.variation else {
        return Err(Error::Config("truncation_ladder needs a TruncationLadder plan".into()));
    };
    let base = plan.base.with_compare_times(plan.compare_intervals);
    let c0 = base.project()?;
    let runs = map_runs(plan.verify, ns.clone(), |n| -> Result<LadderRun> {
        let solution = base.with_n(n).solver()?.solve(&c0)?;
        let mneg_ok = solution.moments.checks.mneg_bounded;
        Ok(LadderRun { n, solution, mneg_ok })
    });
    let runs: Vec<LadderRun> = runs.into_iter().collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(runs.len() - 1);
    for pair in runs.windows(2) {
        let mut sup = 0.0f64;
        for (a, b) in pair[0].solution.outputs.iter().zip(&pair[1].solution.outputs) {
            sup = sup.max(l1_distance(a, b)?);
        }
        rows.push(LadderRow { n: pair[0].n, next_n: pair[1].n, sup_l1: sup });
    }
    Ok(LadderTable { rows, runs })
}

/// `sup_t ∫_R^∞ v c(t, v) dv` for each radius over every stored state.
pub fn tail_report(solution: &Solution, radii: &[f64]) -> Vec<f64> {
    radii
        .iter()
        .map(|&r| solution.history.states.iter().map(|s| s.tail_first_moment(r)).fold(0.0, f64::max))
        .collect()
}

/// Tails of several runs side by side, one column per run.
#[derive(Clone, Debug)]
pub struct TailTable {
    pub radii: Vec<f64>,
    pub labels: Vec<String>,
    /// `columns[k][i]` is the tail of run `k` at `radii[i]`.
    pub columns: Vec<Vec<f64>>,
}

impl TailTable {
    pub fn new(radii: &[f64], runs: &[(String, &Solution)]) -> Self {
        Self {
            radii: radii.to_vec(),
            labels: runs.iter().map(|(l, _)| l.clone()).collect(),
            columns: runs.iter().map(|(_, s)| tail_report(s, radii)).collect(),
        }
    }

    pub fn header(&self) -> Vec<String> {
        std::iter::once("R".to_string()).chain(self.labels.iter().map(|l| format!("tail_{l}"))).collect()
    }

    pub fn to_csv(&self) -> String {
        let header = self.header();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows: Vec<Vec<f64>> = (0..self.radii.len())
            .map(|i| std::iter::once(self.radii[i]).chain(self.columns.iter().map(|c| c[i])).collect())
            .collect();
        csv(&header, &rows)
    }

    /// Every column is nonincreasing in `R`.
    pub fn monotone(&self) -> bool {
        self.columns.iter().all(|c| c.windows(2).all(|w| w[1] <= w[0]))
    }

    /// Runs (by label) whose tail at some radius exceeds that of the previous run.
    pub fn non_monotone_in_n(&self) -> Vec<String> {
        (1..self.columns.len())
            .filter(|&k| self.columns[k].iter().zip(&self.columns[k - 1]).any(|(a, b)| a > b))
            .map(|k| self.labels[k].clone())
            .collect()
    }
}

/// Convex weight `j` of a superlinear moment `∫ j(v) c dv`.
#[derive(Clone)]
pub enum Superlinear {
    Square,
    UserConvex(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for Superlinear {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Square => write!(f, "Square"),
            Self::UserConvex(_) => write!(f, "UserConvex(<fn>)"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SuperlinearSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub max: f64,
    /// `max_t ln(J(t)/J(0)) / t`, the smallest `γ` with `J(t) ≤ J(0) e^{γ t}`.
    pub growth_rate: f64,
}

pub fn superlinear_moment(solution: &Solution, j: &Superlinear) -> SuperlinearSeries {
    let eval = |s: &DensityState| -> f64 {
        match j {
            Superlinear::Square => s.moment(2.0),
            Superlinear::UserConvex(f) => {
                let g = s.grid();
                s.values().iter().zip(g.centers()).zip(g.widths()).map(|((c, x), w)| f(*x) * c * w).sum()
            }
        }
    };
    let times = solution.history.times.clone();
    let values: Vec<f64> = solution.history.states.iter().map(eval).collect();
    let max = values.iter().copied().fold(f64::MIN, f64::max);
    let growth_rate = times
        .iter()
        .zip(&values)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, v)| (v / values[0]).ln() / t)
        .fold(f64::MIN, f64::max);
    SuperlinearSeries { times, values, max, growth_rate }
}

/// Writes `name.csv` and `name.gp` into `dir`.
pub fn write_table(dir: &Path, name: &str, title: &str, table_csv: &str, logscale: &str) -> Result<()> {
    let header: Vec<&str> = table_csv.lines().next().unwrap_or("").split(',').collect();
    let data = format!("{name}.csv");
    write_text(dir, &data, table_csv)?;
    write_text(dir, &format!("{name}.gp"), &gnuplot_script(&data, title, &header, logscale))
}
