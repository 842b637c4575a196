//! Per-window reports and the moment history with its invariant checks.

use crate::output::{csv, fmt12};

/// Relative slack on monotonicity of `M_0` and on membership in the invariant set.
pub const M0_TOL: f64 = 1e-8;
/// Relative slack on monotonicity of `M_{-2β}`.
pub const MNEG_TOL: f64 = 1e-6;
/// Mass-balance residual, relative to `M_1(0)`.
pub const BALANCE_TOL: f64 = 1e-4;
/// Clamped negative mass per window, relative to `M_0(c_0)`.
pub const CLAMP_TOL: f64 = 1e-8;
/// Relative residual of the weak form with test function 1.
pub const WEAK_TOL: f64 = 1e-4;
/// Accepted Picard contraction ratio.
pub const CONTRACTION_TOL: f64 = 0.55;

/// Outcome of one Picard window.
#[derive(Clone, Debug)]
pub struct StepReport {
    pub window: usize,
    pub t_start: f64,
    /// Window length actually used.
    pub t_n: f64,
    pub kappa: f64,
    pub iterations: usize,
    pub residual: f64,
    pub residuals: Vec<f64>,
    /// `d(u_{k+1}, u_k) / d(u_k, u_{k-1})` for `k ≥ 1`.
    pub ratios: Vec<f64>,
    pub clamped: f64,
    pub overflow: f64,
    pub nonnegative: bool,
    pub m0_ok: bool,
    pub m1_ok: bool,
    pub mneg_ok: bool,
}

impl StepReport {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_key_values(&self) -> String {
        format!(
            "window={} t_start={} t_n={} kappa={} iterations={} residual={} max_ratio={} clamped={} overflow={} nonnegative={} m0_ok={} m1_ok={} mneg_ok={}",
            self.window,
            fmt12(self.t_start),
            fmt12(self.t_n),
            fmt12(self.kappa),
            self.iterations,
            fmt12(self.residual),
            fmt12(self.max_ratio()),
            fmt12(self.clamped),
            fmt12(self.overflow),
            self.nonnegative,
            self.m0_ok,
            self.m1_ok,
            self.mneg_ok
        )
    }
}

/// Moments at one lattice time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentRow {
    pub time: f64,
    /// `M_{-2β}`
    pub m_neg: f64,
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
    /// `‖c‖` in the weight `v^{-β} + v`.
    pub weighted: f64,
    /// `∫_0^t ∫ g c dv ds`
    pub growth_flux: f64,
    /// Mass that left through coagulation beyond the last pivot up to `t`.
    pub overflow: f64,
    /// `½ ∬ K_n c c` at this time.
    pub collision_rate: f64,
}

/// Verdict on each discrete invariant along a run.
#[derive(Clone, Debug, Default)]
pub struct InvariantChecks {
    pub nonnegative: bool,
    pub m0_monotone: bool,
    pub worst_m0_increase: f64,
    pub m0_bounded: bool,
    pub m1_bounded: bool,
    pub worst_m1_excess: f64,
    pub mneg_bounded: bool,
    pub mneg_monotone: bool,
    pub worst_mneg_increase: f64,
    pub balance_ok: bool,
    pub worst_balance: f64,
    pub clamp_ok: bool,
    pub worst_clamped: f64,
    /// `None` when the growth field is nonzero (the check then does not apply).
    pub weak_ok: Option<bool>,
    pub worst_weak: f64,
    pub max_m2: f64,
}

impl InvariantChecks {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut push = |ok: bool, what: String| {
            if !ok {
                v.push(what)
            }
        };
        push(self.nonnegative, "negative density values".into());
        push(self.m0_monotone, format!("M0 increased by {:e} (relative)", self.worst_m0_increase));
        push(self.m0_bounded, "M0 exceeded its initial value".into());
        push(self.m1_bounded, format!("M1 exceeded exp(At) M1(0) by {:e} (relative)", self.worst_m1_excess));
        push(self.mneg_bounded && self.mneg_monotone, format!("M_-2beta increased by {:e} (relative)", self.worst_mneg_increase));
        push(self.balance_ok, format!("mass balance residual {:e}", self.worst_balance));
        push(self.clamp_ok, format!("clamped negative mass {:e}", self.worst_clamped));
        push(self.weak_ok.unwrap_or(true), format!("weak-form residual {:e}", self.worst_weak));
        v
    }

    pub fn ok(&self) -> bool {
        self.violations().is_empty()
    }

    pub fn to_key_values(&self) -> String {
        let weak = match self.weak_ok {
            Some(ok) => ok.to_string(),
            None => "n/a".into(),
        };
        [
            format!("nonnegative={}", self.nonnegative),
            format!("m0_monotone={}", self.m0_monotone),
            format!("worst_m0_increase={}", fmt12(self.worst_m0_increase)),
            format!("m0_bounded={}", self.m0_bounded),
            format!("m1_bounded={}", self.m1_bounded),
            format!("worst_m1_excess={}", fmt12(self.worst_m1_excess)),
            format!("mneg_bounded={}", self.mneg_bounded),
            format!("mneg_monotone={}", self.mneg_monotone),
            format!("worst_mneg_increase={}", fmt12(self.worst_mneg_increase)),
            format!("balance_ok={}", self.balance_ok),
            format!("worst_balance={}", fmt12(self.worst_balance)),
            format!("clamp_ok={}", self.clamp_ok),
            format!("worst_clamped={}", fmt12(self.worst_clamped)),
            format!("weak_ok={weak}"),
            format!("worst_weak={}", fmt12(self.worst_weak)),
            format!("max_m2={}", fmt12(self.max_m2)),
        ]
        .join("\n")
    }
}

/// Moment history of a run.
#[derive(Clone, Debug, Default)]
pub struct MomentReport {
    pub beta: f64,
    pub rows: Vec<MomentRow>,
    pub checks: InvariantChecks,
}

pub(crate) struct CheckInputs<'a> {
    pub rows: &'a [MomentRow],
    /// Row index where each window starts.
    pub window_starts: &'a [usize],
    pub a_bound: f64,
    pub growth_is_zero: bool,
    pub nonnegative: bool,
    pub worst_clamped: f64,
}

impl MomentReport {
    pub const HEADER: [&'static str; 6] = ["time", "m_neg2beta", "m0", "m1", "m2", "weighted_norm"];

    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<f64>> = self
            .rows
            .iter()
            .map(|r| vec![r.time, r.m_neg, r.m0, r.m1, r.m2, r.weighted])
            .collect();
        csv(&Self::HEADER, &rows)
    }

    pub fn max_m2(&self) -> f64 {
        self.rows.iter().map(|r| r.m2).fold(0.0, f64::max)
    }

    pub(crate) fn check(input: CheckInputs<'_>) -> InvariantChecks {
        let rows = input.rows;
        let first = rows[0];
        let mut c = InvariantChecks {
            nonnegative: input.nonnegative,
            worst_clamped: input.worst_clamped,
            clamp_ok: input.worst_clamped <= CLAMP_TOL * first.m0,
            max_m2: rows.iter().map(|r| r.m2).fold(0.0, f64::max),
            ..Default::default()
        };
        let rel_increase = |prev: f64, next: f64| if prev > 0.0 { (next - prev) / prev } else { next };
        for w in rows.windows(2) {
            c.worst_m0_increase = c.worst_m0_increase.max(rel_increase(w[0].m0, w[1].m0));
        }
        c.m0_monotone = c.worst_m0_increase <= M0_TOL;
        c.m0_bounded = rows.iter().all(|r| r.m0 <= first.m0 * (1.0 + M0_TOL));
        for r in rows {
            let cap = first.m1 * (input.a_bound * r.time).exp();
            c.worst_m1_excess = c.worst_m1_excess.max(rel_increase(cap, r.m1));
            let resid = (r.m1 - first.m1 - r.growth_flux + r.overflow).abs();
            c.worst_balance = c.worst_balance.max(if first.m1 > 0.0 { resid / first.m1 } else { resid });
            c.worst_mneg_increase = c.worst_mneg_increase.max(rel_increase(first.m_neg, r.m_neg));
        }
        c.m1_bounded = c.worst_m1_excess <= M0_TOL;
        c.mneg_bounded = c.worst_mneg_increase <= MNEG_TOL;
        let mut mono = true;
        for w in input.window_starts.windows(2) {
            let (a, b) = (rows[w[0]].m_neg, rows[w[1]].m_neg);
            let inc = rel_increase(a, b);
            c.worst_mneg_increase = c.worst_mneg_increase.max(inc);
            mono &= inc <= MNEG_TOL;
        }
        if let (Some(&s), Some(last)) = (input.window_starts.last(), rows.last()) {
            let inc = rel_increase(rows[s].m_neg, last.m_neg);
            c.worst_mneg_increase = c.worst_mneg_increase.max(inc);
            mono &= inc <= MNEG_TOL;
        }
        c.mneg_monotone = mono;
        c.balance_ok = c.worst_balance <= BALANCE_TOL;
        if input.growth_is_zero {
            let scale = rows.iter().map(|r| r.collision_rate).fold(0.0, f64::max);
            for w in rows.windows(2) {
                let dt = w[1].time - w[0].time;
                if dt <= 0.0 {
                    continue;
                }
                let lhs = (w[1].m0 - w[0].m0) / dt;
                let rhs = -0.5 * (w[0].collision_rate + w[1].collision_rate);
                let err = (lhs - rhs).abs();
                c.worst_weak = c.worst_weak.max(if scale > 0.0 { err / scale } else { err });
            }
            c.weak_ok = Some(c.worst_weak <= WEAK_TOL);
        }
        c
    }
}
