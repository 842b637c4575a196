//! Windowed Picard iteration for the truncated problem.
//!
//! On a window `[t_0, t_0 + t_n]` the mild form with the shift `κ_n` reads
//!
//! ```text
//! u(t, v) = c(t_0, Y(t_0)) J(t_0) e^{-κ_n (t - t_0)}
//!         + ∫_{t_0}^t (Q_n(u) + κ_n u)(s, Y(s)) J(s) e^{-κ_n (t - s)} ds
//! ```
//!
//! with `Y(s) = Y(s; t, v)` and `J(s) = J(s; t, v)`. The trajectory is sampled
//! on a uniform substep lattice; the time integral uses the trapezoid rule on
//! the forcing with the exponential factor integrated exactly, and the
//! composition with the flow is a conservative cell remap.

mod remap;
pub mod report;

use std::sync::Arc;

use rayon::prelude::*;

use crate::coag::PairTable;
use crate::error::{Error, NonConvergence, Result};
use crate::grid::{DensityState, SizeGrid};
use crate::growth::GrowthField;
use crate::kernels::{KernelSpec, TruncatedKernel};
use remap::Pullback;
pub use report::{InvariantChecks, MomentReport, MomentRow, StepReport};

/// Numerical settings of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Truncation index.
    pub n: u32,
    pub substeps: usize,
    /// Stop when the sup-in-time `L¹` distance of successive iterates is below this.
    pub picard_tol: f64,
    pub picard_max_iters: usize,
    pub t_final: f64,
    /// Upper bound on the window length.
    pub window_cap: Option<f64>,
    /// Exponent `β` used for `M_{-2β}` and the weighted norm; defaults to the kernel's.
    pub moment_beta: Option<f64>,
    /// Times at which states are returned; windows end exactly on them.
    pub output_times: Vec<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n: 8,
            substeps: 8,
            picard_tol: 1e-10,
            picard_max_iters: 60,
            t_final: 1.0,
            window_cap: Some(0.1),
            moment_beta: None,
            output_times: Vec::new(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.n < 2 {
            bad.push(format!("n must be at least 2, got {}", self.n));
        }
        if self.substeps < 4 {
            bad.push(format!("substeps must be at least 4, got {}", self.substeps));
        }
        if !(self.picard_tol > 0.0) {
            bad.push(format!("picard_tol must be positive, got {}", self.picard_tol));
        }
        if self.picard_max_iters == 0 {
            bad.push("picard_max_iters must be positive".into());
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            bad.push(format!("t_final must be positive, got {}", self.t_final));
        }
        if let Some(cap) = self.window_cap {
            if !(cap > 0.0) {
                bad.push(format!("window_cap must be positive, got {cap}"));
            }
        }
        if let Some(b) = self.moment_beta {
            if !(b >= 0.0) {
                bad.push(format!("moment_beta must be nonnegative, got {b}"));
            }
        }
        if self.output_times.iter().any(|&t| !(t >= 0.0 && t <= self.t_final)) {
            bad.push("output_times must lie in [0, t_final]".into());
        }
        if self.output_times.windows(2).any(|w| w[1] <= w[0]) {
            bad.push("output_times must be strictly increasing".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    /// Requested output times, or `[0, t_final]` when none were given.
    pub fn effective_output_times(&self) -> Vec<f64> {
        if self.output_times.is_empty() {
            vec![0.0, self.t_final]
        } else {
            self.output_times.clone()
        }
    }
}

/// `t_n = 1 / (2(κ_n + 6 β_n M_0)) = 1 / (14 β_n M_0)` with `κ_n = β_n M_0`;
/// `cap` (or `+∞`) when `β_n M_0 = 0`, and never longer than `cap`.
pub fn window_length(kernel: &TruncatedKernel, m0: f64, cap: Option<f64>) -> f64 {
    let kappa = kernel.beta_n * m0;
    let cap = cap.unwrap_or(f64::INFINITY);
    if kappa <= 0.0 {
        return cap;
    }
    (1.0 / (2.0 * (kappa + 6.0 * kernel.beta_n * m0))).min(cap)
}

/// States on the substep lattice of a window (or of a whole run).
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityState>,
}

impl Trajectory {
    /// `sup_j ‖a_j − b_j‖_{L¹}`; both must share the lattice.
    pub fn sup_l1_distance(&self, other: &Self) -> Result<f64> {
        if self.states.len() != other.states.len() {
            return Err(Error::Domain("trajectories have different lattices".into()));
        }
        let mut d = 0.0f64;
        for (a, b) in self.states.iter().zip(&other.states) {
            d = d.max(crate::grid::l1_distance(a, b)?);
        }
        Ok(d)
    }
}

/// Flow maps and quadrature weights of one window; independent of the iterate.
#[derive(Clone, Debug)]
pub struct Window {
    pub index: usize,
    pub t_start: f64,
    pub length: f64,
    pub kappa: f64,
    pub times: Vec<f64>,
    /// `maps[m][l]` pulls data at `times[l]` back to `times[m]`, `l ≤ m`.
    maps: Vec<Vec<Pullback>>,
    /// `weights[m][l]` multiplies the forcing at `times[l]` in the value at `times[m]`.
    weights: Vec<Vec<f64>>,
}

/// Result of one application of the shifted map.
#[derive(Clone, Debug)]
pub struct TnOutput {
    pub states: Vec<Vec<f64>>,
    /// `Σ |negative part| · width` removed over all lattice times.
    pub clamped: f64,
    pub any_negative: bool,
}

/// Solver for a fixed kernel, growth field and grid.
#[derive(Clone, Debug)]
pub struct Solver {
    cfg: SolverConfig,
    kernel: TruncatedKernel,
    field: GrowthField,
    table: PairTable,
    grid: Arc<SizeGrid>,
    beta: f64,
}

/// Output of [`Solver::solve`].
#[derive(Clone, Debug)]
pub struct Solution {
    /// States at the requested output times.
    pub outputs: Vec<DensityState>,
    /// Every lattice state of the run, shared window endpoints stored once.
    pub history: Trajectory,
    pub steps: Vec<StepReport>,
    pub moments: MomentReport,
    /// Total mass removed by coagulation beyond the last pivot.
    pub overflow: f64,
    /// Largest clamped mass of any window.
    pub clamped: f64,
}

impl Solution {
    pub fn max_contraction_ratio(&self) -> f64 {
        self.steps.iter().map(StepReport::max_ratio).fold(0.0, f64::max)
    }

    /// State at `t`, if `t` is a lattice time of the run.
    pub fn state_at(&self, t: f64) -> Option<&DensityState> {
        let scale = t.abs().max(1.0);
        self.history
            .times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * scale)
            .map(|k| &self.history.states[k])
    }
}

impl Solver {
    pub fn new(cfg: SolverConfig, kernel: &KernelSpec, field: GrowthField, grid: Arc<SizeGrid>) -> Result<Self> {
        cfg.validate()?;
        let kernel_n = kernel.truncate(cfg.n)?;
        let table = PairTable::build(&kernel_n, &grid)?;
        Ok(Self::from_parts(cfg, kernel_n, field, table))
    }

    /// Uses a prebuilt (for example cached) pair table.
    pub fn from_parts(cfg: SolverConfig, kernel: TruncatedKernel, field: GrowthField, table: PairTable) -> Self {
        let beta = cfg.moment_beta.unwrap_or(kernel.base.beta);
        let grid = table.grid().clone();
        Self { cfg, kernel, field, table, grid, beta }
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn kernel(&self) -> &TruncatedKernel {
        &self.kernel
    }

    pub fn field(&self) -> &GrowthField {
        &self.field
    }

    pub fn table(&self) -> &PairTable {
        &self.table
    }

    pub fn grid(&self) -> &Arc<SizeGrid> {
        &self.grid
    }

    /// Exponent used for `M_{-2β}` and the weighted norm.
    pub fn moment_beta(&self) -> f64 {
        self.beta
    }

    /// Precomputes the flow maps and quadrature weights of a window.
    pub fn prepare_window(&self, index: usize, t_start: f64, length: f64, kappa: f64) -> Result<Window> {
        let s = self.cfg.substeps;
        let h = length / s as f64;
        let times: Vec<f64> = (0..=s)
            .map(|m| if m == s { t_start + length } else { t_start + m as f64 * h })
            .collect();
        let maps = (0..=s)
            .map(|m| {
                (0..=m)
                    .map(|l| {
                        if l == m || self.field.is_zero() {
                            return Ok(Pullback::Identity);
                        }
                        self.grid
                            .edges()
                            .iter()
                            .map(|&e| self.field.flow(times[l], times[m], e).map(|f| f.y))
                            .collect::<Result<Vec<f64>>>()
                            .map(Pullback::Edges)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let weights = (0..=s)
            .map(|m| {
                let mut w = vec![0.0; m + 1];
                for l in 0..m {
                    let seg = times[l + 1] - times[l];
                    let damp = (-kappa * (times[m] - times[l + 1])).exp();
                    let (pa, pb) = exp_trapezoid(kappa * seg);
                    w[l] += damp * seg * pa;
                    w[l + 1] += damp * seg * pb;
                }
                w
            })
            .collect();
        Ok(Window { index, t_start, length, kappa, times, maps, weights })
    }

    /// One application of the shifted map to the lattice values `u`; `u[0]` is
    /// the window's initial state.
    pub fn apply_tn(&self, window: &Window, u: &[Vec<f64>]) -> TnOutput {
        let grid = &*self.grid;
        let kappa = window.kappa;
        let forcing: Vec<Vec<f64>> = u
            .iter()
            .map(|ul| {
                let mut q = vec![0.0; ul.len()];
                self.table.apply_into(ul, &mut q);
                q.iter_mut().zip(ul).for_each(|(qi, ci)| *qi += kappa * ci);
                q
            })
            .collect();
        let slopes: Vec<Vec<f64>> = forcing.iter().map(|f| remap::slopes(grid, f)).collect();
        let init_slope = remap::slopes(grid, &u[0]);
        let per_time: Vec<(Vec<f64>, f64, bool)> = (0..window.times.len())
            .into_par_iter()
            .map(|m| {
                if m == 0 {
                    return (u[0].clone(), 0.0, false);
                }
                let mut out = vec![0.0; grid.cells()];
                let damp = (-kappa * (window.times[m] - window.times[0])).exp();
                remap::accumulate(grid, &window.maps[m][0], &u[0], &init_slope, damp, &mut out);
                for l in 0..=m {
                    remap::accumulate(grid, &window.maps[m][l], &forcing[l], &slopes[l], window.weights[m][l], &mut out);
                }
                let mut clamped = 0.0;
                let mut neg = false;
                for (o, w) in out.iter_mut().zip(grid.widths()) {
                    if *o < 0.0 {
                        clamped += -*o * w;
                        neg = true;
                        *o = 0.0;
                    }
                }
                (out, clamped, neg)
            })
            .collect();
        let clamped = per_time.iter().map(|p| p.1).sum();
        let any_negative = per_time.iter().any(|p| p.2);
        TnOutput { states: per_time.into_iter().map(|p| p.0).collect(), clamped, any_negative }
    }

    /// Iterates the shifted map from the constant-in-time extension of `c_init`.
    pub fn picard_solve(&self, window: &Window, c_init: &DensityState) -> Result<(Trajectory, StepReport)> {
        let grid = &*self.grid;
        let l1 = |a: &[f64], b: &[f64]| -> f64 {
            a.iter().zip(b).zip(grid.widths()).map(|((x, y), w)| (x - y).abs() * w).sum()
        };
        let mut u: Vec<Vec<f64>> = vec![c_init.values().to_vec(); window.times.len()];
        let mut residuals = Vec::new();
        let mut ratios = Vec::new();
        let mut clamped = 0.0;
        let mut negative = false;
        let mut converged = false;
        while residuals.len() < self.cfg.picard_max_iters {
            let next = self.apply_tn(window, &u);
            let res = u.iter().zip(&next.states).map(|(a, b)| l1(a, b)).fold(0.0, f64::max);
            clamped = next.clamped;
            negative = next.any_negative;
            u = next.states;
            if let Some(&prev) = residuals.last() {
                if prev > 0.0 {
                    ratios.push(res / prev);
                }
            }
            residuals.push(res);
            // the map ignores its argument when nothing coagulates
            if res <= self.cfg.picard_tol || self.table.is_empty() {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonConvergence(Box::new(NonConvergence {
                window: window.index,
                t_start: window.t_start,
                residuals,
                partial: None,
            })));
        }
        let states: Vec<DensityState> = u
            .into_iter()
            .zip(&window.times)
            .map(|(vals, &t)| DensityState::from_parts(self.grid.clone(), vals, t))
            .collect();
        let m0_init = c_init.moment(0.0);
        let m1_init = c_init.moment(1.0);
        let mneg_init = c_init.moment(-2.0 * self.beta);
        let a = self.field.a_bound;
        let report = StepReport {
            window: window.index,
            t_start: window.t_start,
            t_n: window.length,
            kappa: window.kappa,
            iterations: residuals.len(),
            residual: *residuals.last().unwrap(),
            residuals,
            ratios,
            clamped,
            overflow: 0.0,
            nonnegative: !negative,
            m0_ok: states.iter().all(|s| s.moment(0.0) <= m0_init * (1.0 + report::M0_TOL)),
            m1_ok: states.iter().all(|s| {
                s.moment(1.0) <= m1_init * (a * (s.time - window.t_start)).exp() * (1.0 + report::M0_TOL)
            }),
            mneg_ok: states.iter().all(|s| s.moment(-2.0 * self.beta) <= mneg_init * (1.0 + report::MNEG_TOL)),
        };
        Ok((Trajectory { times: window.times.clone(), states }, report))
    }

    /// Chains Picard windows from `c0` (taken at time 0) up to `t_final`.
    pub fn solve(&self, c0: &DensityState) -> Result<Solution> {
        if !Arc::ptr_eq(c0.grid(), &self.grid) && **c0.grid() != *self.grid {
            return Err(Error::Domain("initial state lives on another grid".into()));
        }
        let outputs_t = self.cfg.effective_output_times();
        let t_final = self.cfg.t_final;
        let eps = 1e-12 * t_final.max(1.0);
        let mut stops: Vec<f64> = outputs_t.iter().copied().filter(|&t| t > eps).collect();
        if stops.last().is_none_or(|&t| t < t_final - eps) {
            stops.push(t_final);
        }

        let mut acc = Accumulator::new(self, c0);
        let mut state = DensityState::from_parts(self.grid.clone(), c0.values().to_vec(), 0.0);
        let mut t = 0.0;
        let mut index = 0;
        for &stop in &stops {
            while t < stop - eps {
                let m0 = state.moment(0.0);
                let mut len = window_length(&self.kernel, m0, self.cfg.window_cap).min(stop - t);
                if stop - (t + len) <= eps {
                    len = stop - t;
                }
                let kappa = self.kernel.beta_n * m0;
                let window = self.prepare_window(index, t, len, kappa)?;
                let (traj, mut step) = match self.picard_solve(&window, &state) {
                    Ok(x) => x,
                    Err(Error::NonConvergence(mut nc)) => {
                        nc.partial = Some(acc.finish(self, &outputs_t));
                        return Err(Error::NonConvergence(nc));
                    }
                    Err(e) => return Err(e),
                };
                acc.push_window(self, &traj, &mut step);
                t = if stop - (t + len) <= eps { stop } else { t + len };
                state = traj.states.last().unwrap().clone();
                state.time = t;
                index += 1;
            }
        }
        Ok(acc.finish(self, &outputs_t))
    }

    fn moment_row(&self, s: &DensityState) -> MomentRow {
        MomentRow {
            time: s.time,
            m_neg: s.moment(-2.0 * self.beta),
            m0: s.moment(0.0),
            m1: s.moment(1.0),
            m2: s.moment(2.0),
            weighted: self.weighted_size(s),
            growth_flux: 0.0,
            overflow: 0.0,
            collision_rate: self.collision_rate(s),
        }
    }

    /// `‖c‖` in the weight `v^{-β} + v`.
    pub fn weighted_size(&self, s: &DensityState) -> f64 {
        let g = &*self.grid;
        s.values()
            .iter()
            .zip(g.centers())
            .zip(g.widths())
            .map(|((c, x), w)| (x.powf(-self.beta) + x) * c * w)
            .sum()
    }

    /// `½ ∬ K_n c c` by midpoint quadrature.
    fn collision_rate(&self, s: &DensityState) -> f64 {
        let c = s.values();
        let w = self.grid.widths();
        self.table
            .entries()
            .iter()
            .map(|e| {
                let (i, j) = (e.i as usize, e.j as usize);
                let p = e.kernel * c[i] * w[i] * c[j] * w[j];
                if i == j {
                    0.5 * p
                } else {
                    p
                }
            })
            .sum()
    }

    fn growth_flux_rate(&self, s: &DensityState) -> f64 {
        if self.field.is_zero() {
            return 0.0;
        }
        let g = &*self.grid;
        s.values()
            .iter()
            .zip(g.centers())
            .zip(g.widths())
            .map(|((c, x), w)| self.field.rate(s.time, *x) * c * w)
            .sum()
    }
}

/// Exact weights of `∫_0^1 e^{-xρ} (a ρ + b (1 − ρ)) dρ` on `a` and `b`.
fn exp_trapezoid(x: f64) -> (f64, f64) {
    if x < 0.5 {
        // Σ (-x)^k / (k! (k+2)) and Σ (-x)^k / (k+2)!
        let (mut pa, mut pb) = (0.0, 0.0);
        let mut term = 1.0; // (-x)^k / k!
        for k in 0..30 {
            let kf = k as f64;
            pa += term / (kf + 2.0);
            pb += term / ((kf + 1.0) * (kf + 2.0));
            term *= -x / (kf + 1.0);
        }
        return (pa, pb);
    }
    let em = -(-x).exp_m1();
    let pa = (em - x * (-x).exp()) / (x * x);
    (pa, em / x - pa)
}

/// Running history, moment rows and ledgers of a solve.
struct Accumulator {
    times: Vec<f64>,
    states: Vec<DensityState>,
    rows: Vec<MomentRow>,
    window_starts: Vec<usize>,
    steps: Vec<StepReport>,
    overflow: f64,
    growth_flux: f64,
    last_overflow_rate: f64,
    last_flux_rate: f64,
    worst_clamped: f64,
    nonnegative: bool,
}

impl Accumulator {
    fn new(solver: &Solver, c0: &DensityState) -> Self {
        let s0 = DensityState::from_parts(solver.grid.clone(), c0.values().to_vec(), 0.0);
        let row = solver.moment_row(&s0);
        Self {
            times: vec![0.0],
            last_overflow_rate: solver.table.apply(&s0).overflow_mass_rate,
            last_flux_rate: solver.growth_flux_rate(&s0),
            states: vec![s0],
            rows: vec![row],
            window_starts: Vec::new(),
            steps: Vec::new(),
            overflow: 0.0,
            growth_flux: 0.0,
            worst_clamped: 0.0,
            nonnegative: true,
        }
    }

    fn push_window(&mut self, solver: &Solver, traj: &Trajectory, step: &mut StepReport) {
        self.window_starts.push(self.rows.len() - 1);
        let before = self.overflow;
        for (k, s) in traj.states.iter().enumerate().skip(1) {
            let dt = traj.times[k] - traj.times[k - 1];
            let of_rate = solver.table.apply(s).overflow_mass_rate;
            let flux_rate = solver.growth_flux_rate(s);
            self.overflow += 0.5 * dt * (self.last_overflow_rate + of_rate);
            self.growth_flux += 0.5 * dt * (self.last_flux_rate + flux_rate);
            self.last_overflow_rate = of_rate;
            self.last_flux_rate = flux_rate;
            let mut row = solver.moment_row(s);
            row.overflow = self.overflow;
            row.growth_flux = self.growth_flux;
            self.rows.push(row);
            self.times.push(traj.times[k]);
            self.states.push(s.clone());
        }
        step.overflow = self.overflow - before;
        self.worst_clamped = self.worst_clamped.max(step.clamped);
        self.nonnegative &= step.nonnegative;
        self.steps.push(step.clone());
    }

    fn finish(&self, solver: &Solver, outputs_t: &[f64]) -> Solution {
        let checks = MomentReport::check(report::CheckInputs {
            rows: &self.rows,
            window_starts: &self.window_starts,
            a_bound: solver.field.a_bound,
            growth_is_zero: solver.field.is_zero(),
            nonnegative: self.nonnegative,
            worst_clamped: self.worst_clamped,
        });
        let history = Trajectory { times: self.times.clone(), states: self.states.clone() };
        let outputs = outputs_t
            .iter()
            .filter_map(|&t| {
                let scale = t.abs().max(1.0);
                self.times.iter().position(|&s| (s - t).abs() <= 1e-12 * scale).map(|k| self.states[k].clone())
            })
            .collect();
        Solution {
            outputs,
            history,
            steps: self.steps.clone(),
            moments: MomentReport { beta: solver.beta, rows: self.rows.clone(), checks },
            overflow: self.overflow,
            clamped: self.worst_clamped,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{project_initial, InitialData};

    #[test]
    fn window_length_examples() {
        let k1 = KernelSpec::constant(1.0, 0.3).unwrap().truncate(10).unwrap();
        assert!((window_length(&k1, 1.0, None) - 1.0 / 14.0).abs() < 1e-15);
        let k4 = KernelSpec::stirred_froth(0.5).unwrap().truncate(4).unwrap();
        assert!((window_length(&k4, 1.0, None) - 1.0 / 56.0).abs() < 1e-15);
        let k0 = KernelSpec::constant(0.0, 0.3).unwrap().truncate(10).unwrap();
        assert_eq!(window_length(&k0, 1.0, Some(0.25)), 0.25);
    }

    #[test]
    fn exp_trapezoid_branches_agree() {
        for &x in &[1e-3, 0.1, 0.5, 2.0] {
            let (a, b) = exp_trapezoid(x);
            let (a2, b2) = exp_trapezoid(x * (1.0 - 1e-9));
            assert!((a - a2).abs() < 1e-9 && (b - b2).abs() < 1e-9);
            assert!((a + b + (-x).exp_m1() / x).abs() < 1e-14);
        }
        assert_eq!(exp_trapezoid(0.0), (0.5, 0.5));
    }

    #[test]
    fn zero_dynamics_is_identity() {
        let grid = SizeGrid::shared(1e-3, 1e3, 64).unwrap();
        let (c0, _) = project_initial(&InitialData::Exponential { scale: 1.0 }, &grid, 0.3).unwrap();
        let cfg = SolverConfig { n: 10, t_final: 0.5, ..Default::default() };
        let solver =
            Solver::new(cfg, &KernelSpec::constant(0.0, 0.3).unwrap(), GrowthField::zero(), grid.clone()).unwrap();
        let window = solver.prepare_window(0, 0.0, 0.1, 0.0).unwrap();
        let (traj, step) = solver.picard_solve(&window, &c0).unwrap();
        assert_eq!(step.iterations, 1);
        for s in &traj.states {
            assert_eq!(s.values(), c0.values());
        }
    }

    #[test]
    fn zero_initial_state_stays_zero() {
        let grid = SizeGrid::shared(1e-3, 1e3, 64).unwrap();
        let cfg = SolverConfig { n: 10, t_final: 0.2, ..Default::default() };
        let solver = Solver::new(cfg, &KernelSpec::smoluchowski(), GrowthField::linear(0.5, 0.6, 1.0).unwrap(), grid.clone())
            .unwrap();
        let sol = solver.solve(&DensityState::zeros(grid, 0.0)).unwrap();
        assert!(sol.history.states.iter().all(|s| s.values().iter().all(|&x| x == 0.0)));
    }
}
