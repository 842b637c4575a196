//! Growth fields `g(t, v)` and the characteristic flow they generate.
//!
//! The characteristic `Y(s; t, v)` solves `∂_s Y = g(s, Y)`, `Y(t; t, v) = v`,
//! and its Jacobian `J(s; t, v) = ∂_v Y` equals `exp(∫_s^t b(σ, Y) dσ)` with
//! `b = -∂_v g`. Both are integrated together as `(Y, ln J)` with fixed-step
//! classical RK4.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Error, Result};

/// User supplied rate `(t, v) -> g(t, v)`.
pub type GrowthFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Upper bound on `step · A` for the characteristic integrator.
pub const MAX_STEP_TIMES_A: f64 = 1.0 / 64.0;

/// Relative step for the finite-difference assumption checks.
pub const FD_REL_STEP: f64 = 1e-5;

/// Margin used to test the strict inequalities `|∂_v g| < A`, `|∂²_v g| < B`.
pub const STRICT_MARGIN: f64 = 1e-12;

#[derive(Clone)]
pub enum GrowthFamily {
    Zero,
    /// `g = a v`
    Linear { a: f64 },
    /// `g = a v v* / (v + v*)`
    Saturating { a: f64, vstar: f64 },
    UserRate(GrowthFn),
}

impl fmt::Debug for GrowthFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::Linear { a } => write!(f, "Linear(a={a})"),
            Self::Saturating { a, vstar } => write!(f, "Saturating(a={a}, vstar={vstar})"),
            Self::UserRate(_) => write!(f, "UserRate(<fn>)"),
        }
    }
}

/// A growth rate with its Lipschitz bound `A` and curvature bound `B`.
#[derive(Clone, Debug)]
pub struct GrowthField {
    pub family: GrowthFamily,
    pub a_bound: f64,
    pub b_bound: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowResult {
    /// `Y(s; t, v)`
    pub y: f64,
    /// `J(s; t, v)`
    pub jac: f64,
}

impl GrowthField {
    pub fn new(family: GrowthFamily, a_bound: f64, b_bound: f64) -> Result<Self> {
        if !(a_bound > 0.0 && a_bound.is_finite()) {
            return Err(domain(format!("growth bound A must be positive, got {a_bound}")));
        }
        if !(b_bound > 0.0 && b_bound.is_finite()) {
            return Err(domain(format!("growth bound B must be positive, got {b_bound}")));
        }
        if let GrowthFamily::Saturating { vstar, .. } = family {
            if !(vstar > 0.0) {
                return Err(domain(format!("saturation volume must be positive, got {vstar}")));
            }
        }
        Ok(Self { family, a_bound, b_bound })
    }

    pub fn zero() -> Self {
        Self { family: GrowthFamily::Zero, a_bound: 1.0, b_bound: 1.0 }
    }

    pub fn linear(a: f64, a_bound: f64, b_bound: f64) -> Result<Self> {
        Self::new(GrowthFamily::Linear { a }, a_bound, b_bound)
    }

    pub fn saturating(a: f64, vstar: f64, a_bound: f64, b_bound: f64) -> Result<Self> {
        Self::new(GrowthFamily::Saturating { a, vstar }, a_bound, b_bound)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.family, GrowthFamily::Zero)
    }

    pub fn rate(&self, t: f64, v: f64) -> f64 {
        match &self.family {
            GrowthFamily::Zero => 0.0,
            GrowthFamily::Linear { a } => a * v,
            GrowthFamily::Saturating { a, vstar } => a * v * vstar / (v + vstar),
            GrowthFamily::UserRate(f) => f(t, v),
        }
    }

    /// `∂_v g(t, v)`
    pub fn d_rate(&self, t: f64, v: f64) -> f64 {
        match &self.family {
            GrowthFamily::Zero => 0.0,
            GrowthFamily::Linear { a } => *a,
            GrowthFamily::Saturating { a, vstar } => a * vstar * vstar / ((v + vstar) * (v + vstar)),
            GrowthFamily::UserRate(f) => {
                let h = fd_step(v);
                (f(t, v + h) - f(t, v - h)) / (2.0 * h)
            }
        }
    }

    /// Number of RK4 steps over a time span of length `span`.
    fn steps_for(&self, span: f64) -> usize {
        if span == 0.0 {
            return 0;
        }
        ((span * self.a_bound / MAX_STEP_TIMES_A).ceil() as usize).max(1)
    }

    /// Characteristic through `(t, v)` evaluated at time `s`, with its Jacobian.
    pub fn flow(&self, s: f64, t: f64, v: f64) -> Result<FlowResult> {
        if !(v > 0.0) {
            return Err(domain(format!("flow started from nonpositive volume {v}")));
        }
        if !(s >= 0.0 && t >= 0.0) {
            return Err(domain(format!("flow times must be nonnegative, got s={s}, t={t}")));
        }
        if self.is_zero() {
            return Ok(FlowResult { y: v, jac: 1.0 });
        }
        let steps = self.steps_for((s - t).abs());
        if steps == 0 {
            return Ok(FlowResult { y: v, jac: 1.0 });
        }
        // negative h integrates backwards in time
        let h = (s - t) / steps as f64;
        let mut y = v;
        let mut log_j = 0.0;
        let mut tau = t;
        for _ in 0..steps {
            let (k1y, k1j) = (self.rate(tau, y), self.d_rate(tau, y));
            let y2 = y + 0.5 * h * k1y;
            let (k2y, k2j) = (self.rate(tau + 0.5 * h, y2), self.d_rate(tau + 0.5 * h, y2));
            let y3 = y + 0.5 * h * k2y;
            let (k3y, k3j) = (self.rate(tau + 0.5 * h, y3), self.d_rate(tau + 0.5 * h, y3));
            let y4 = y + h * k3y;
            let (k4y, k4j) = (self.rate(tau + h, y4), self.d_rate(tau + h, y4));
            y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
            log_j += h / 6.0 * (k1j + 2.0 * k2j + 2.0 * k3j + k4j);
            tau += h;
        }
        if !(y > 0.0 && y.is_finite()) {
            return Err(Error::Internal(format!(
                "characteristic left (0, inf): Y({s}; {t}, {v}) = {y}"
            )));
        }
        Ok(FlowResult { y, jac: log_j.exp() })
    }

    /// Checks `g(t,0) = 0`, `g ≥ 0`, `|∂_v g| < A` and `|∂²_v g| < B` on the
    /// samples, using centred differences with step `1e-5 · max(v, 1)`.
    pub fn verify_assumptions(&self, samples: &[(f64, f64)]) -> GrowthReport {
        let mut rep = GrowthReport {
            family: format!("{:?}", self.family),
            a_bound: self.a_bound,
            b_bound: self.b_bound,
            samples: samples.len(),
            ok: true,
            zero_at_origin: true,
            nonnegative: true,
            worst_slope: 0.0,
            worst_slope_at: (f64::NAN, f64::NAN),
            worst_curvature: 0.0,
            worst_curvature_at: (f64::NAN, f64::NAN),
        };
        for &(t, v) in samples {
            if self.rate(t, 0.0) != 0.0 {
                rep.zero_at_origin = false;
            }
            let h = fd_step(v);
            let (gm, g0, gp) = (self.rate(t, v - h), self.rate(t, v), self.rate(t, v + h));
            if g0 < 0.0 {
                rep.nonnegative = false;
            }
            let slope = ((gp - gm) / (2.0 * h)).abs();
            let curvature = ((gp - 2.0 * g0 + gm) / (h * h)).abs();
            if slope > rep.worst_slope || rep.worst_slope_at.0.is_nan() {
                rep.worst_slope = slope;
                rep.worst_slope_at = (t, v);
            }
            if curvature > rep.worst_curvature || rep.worst_curvature_at.0.is_nan() {
                rep.worst_curvature = curvature;
                rep.worst_curvature_at = (t, v);
            }
        }
        rep.ok = rep.zero_at_origin
            && rep.nonnegative
            && rep.worst_slope <= self.a_bound - STRICT_MARGIN
            && rep.worst_curvature <= self.b_bound - STRICT_MARGIN;
        rep
    }

    /// Randomised check of the characteristic bounds:
    ///
    /// * `Y(s2;t,v) ≤ Y(s1;t,v) e^{A(s2-s1)}` for `s1 ≤ s2 ≤ t`
    /// * `Y(s;t,v) ≤ v e^{A(s-t)}` and `Y(s;t,v) ≥ v` for `s ≥ t`
    /// * `|g(s, Y(s;0,v))| ≤ A v e^{As}`
    /// * `Y(t; s, Y(s;t,v)) = v`
    /// * `J` against a centred difference of `Y` in `v`
    pub fn flow_property_suite(&self, trials: usize, seed: u64) -> Result<FlowSuiteReport> {
        const REL_TOL: f64 = 1e-6;
        const JAC_TOL: f64 = 1e-5;
        const T_MAX: f64 = 2.0;
        let a = self.a_bound;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rep = FlowSuiteReport { trials, ..Default::default() };
        for _ in 0..trials {
            let v = 10f64.powf(rng.random_range(-3.0..3.0));
            let t = rng.random_range(0.0..T_MAX);
            let mut s1 = rng.random_range(0.0..t.max(1e-12));
            let mut s2 = rng.random_range(0.0..t.max(1e-12));
            if s1 > s2 {
                std::mem::swap(&mut s1, &mut s2);
            }
            let y1 = self.flow(s1, t, v)?.y;
            let y2 = self.flow(s2, t, v)?.y;
            let excess = y2 / (y1 * (a * (s2 - s1)).exp()) - 1.0;
            rep.backward_monotone.record(excess, REL_TOL);

            let s = t + rng.random_range(0.0..T_MAX);
            let fwd = self.flow(s, t, v)?;
            rep.forward_bound.record(fwd.y / (v * (a * (s - t)).exp()) - 1.0, REL_TOL);
            rep.forward_monotone.record(1.0 - fwd.y / v, REL_TOL);

            let from_zero = self.flow(s, 0.0, v)?.y;
            let speed = self.rate(s, from_zero).abs();
            rep.speed_bound.record(speed / (a * v * (a * s).exp()) - 1.0, REL_TOL);

            let back = self.flow(t, s1, self.flow(s1, t, v)?.y)?.y;
            rep.inverse.record((back - v).abs() / v.max(1.0), REL_TOL);

            let dv = 1e-4 * v;
            let fd = (self.flow(s1, t, v + dv)?.y - self.flow(s1, t, v - dv)?.y) / (2.0 * dv);
            let jac = self.flow(s1, t, v)?.jac;
            rep.jacobian.record((fd - jac).abs() / jac, JAC_TOL);
        }
        Ok(rep)
    }
}

fn fd_step(v: f64) -> f64 {
    let h = FD_REL_STEP * v.max(1.0);
    if v - h <= 0.0 {
        0.5 * v
    } else {
        h
    }
}

/// Result of [`GrowthField::verify_assumptions`].
#[derive(Clone, Debug)]
pub struct GrowthReport {
    pub family: String,
    pub a_bound: f64,
    pub b_bound: f64,
    pub samples: usize,
    pub ok: bool,
    pub zero_at_origin: bool,
    pub nonnegative: bool,
    pub worst_slope: f64,
    pub worst_slope_at: (f64, f64),
    pub worst_curvature: f64,
    pub worst_curvature_at: (f64, f64),
}

impl GrowthReport {
    pub fn to_key_values(&self) -> String {
        use crate::output::fmt12;
        format!(
            "family = {}\nA = {}\nB = {}\nsamples = {}\nok = {}\nzero_at_origin = {}\nnonnegative = {}\nworst_slope = {}\nworst_slope_t = {}\nworst_slope_v = {}\nworst_curvature = {}\nworst_curvature_t = {}\nworst_curvature_v = {}\n",
            self.family,
            fmt12(self.a_bound),
            fmt12(self.b_bound),
            self.samples,
            self.ok,
            self.zero_at_origin,
            self.nonnegative,
            fmt12(self.worst_slope),
            fmt12(self.worst_slope_at.0),
            fmt12(self.worst_slope_at.1),
            fmt12(self.worst_curvature),
            fmt12(self.worst_curvature_at.0),
            fmt12(self.worst_curvature_at.1),
        )
    }
}

/// Tally for one inequality of the flow suite. `excess` is the relative
/// amount by which a trial exceeded its bound (≤ 0 when satisfied).
#[derive(Clone, Copy, Debug, Default)]
pub struct CheckTally {
    pub failures: usize,
    pub worst_excess: f64,
}

impl CheckTally {
    fn record(&mut self, excess: f64, tol: f64) {
        if !(excess <= tol) {
            self.failures += 1;
        }
        if excess > self.worst_excess || excess.is_nan() {
            self.worst_excess = excess;
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct FlowSuiteReport {
    pub trials: usize,
    pub backward_monotone: CheckTally,
    pub forward_bound: CheckTally,
    pub speed_bound: CheckTally,
    pub forward_monotone: CheckTally,
    pub inverse: CheckTally,
    pub jacobian: CheckTally,
}

impl FlowSuiteReport {
    pub fn checks(&self) -> [(&'static str, CheckTally); 6] {
        [
            ("backward_monotone", self.backward_monotone),
            ("forward_bound", self.forward_bound),
            ("speed_bound", self.speed_bound),
            ("forward_monotone", self.forward_monotone),
            ("inverse_identity", self.inverse),
            ("jacobian", self.jacobian),
        ]
    }

    pub fn ok(&self) -> bool {
        self.checks().iter().all(|(_, c)| c.failures == 0)
    }

    pub fn to_key_values(&self) -> String {
        let mut out = format!("trials = {}\nok = {}\n", self.trials, self.ok());
        for (name, c) in self.checks() {
            out.push_str(&format!(
                "{name}.failures = {}\n{name}.worst_excess = {}\n",
                c.failures,
                crate::output::fmt12(c.worst_excess)
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_field_freezes_flow() {
        let f = GrowthField::zero().flow(5.0, 1.0, 3.0).unwrap();
        assert_eq!(f, FlowResult { y: 3.0, jac: 1.0 });
    }

    #[test]
    fn linear_flow_closed_form() {
        let g = GrowthField::linear(0.5, 1.0, 1.0).unwrap();
        let fwd = g.flow(2.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(fwd.y, 1f64.exp(), max_relative = 1e-9);
        let back = g.flow(0.0, 2.0, 1.0).unwrap();
        assert_relative_eq!(back.jac, (-1f64).exp(), max_relative = 1e-9);
        assert_relative_eq!(back.y, (-1f64).exp(), max_relative = 1e-9);
    }

    #[test]
    fn linear_semigroup_returns_start() {
        let g = GrowthField::linear(0.5, 1.0, 1.0).unwrap();
        let y = g.flow(2.0, 0.0, 1.0).unwrap().y;
        let back = g.flow(0.0, 2.0, y).unwrap().y;
        assert!((back - 1.0).abs() < 1e-10, "{back}");
    }

    #[test]
    fn flow_rejects_nonpositive_volume() {
        let g = GrowthField::linear(0.5, 1.0, 1.0).unwrap();
        assert!(matches!(g.flow(1.0, 0.0, 0.0), Err(Error::Domain(_))));
    }

    fn samples() -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for &t in &[0.0, 0.5, 1.7] {
            for k in -8..=8 {
                out.push((t, 10f64.powf(k as f64 * 0.5)));
            }
        }
        out
    }

    #[test]
    fn assumption_checks() {
        let ok = GrowthField::linear(0.5, 1.0, 1.0).unwrap().verify_assumptions(&samples());
        assert!(ok.ok, "{ok:?}");
        let steep = GrowthField::linear(2.0, 1.0, 1.0).unwrap().verify_assumptions(&samples());
        assert!(!steep.ok);
        assert_relative_eq!(steep.worst_slope, 2.0, max_relative = 1e-6);
        let sat = GrowthField::saturating(1.0, 1.0, 1.0, 2.0).unwrap().verify_assumptions(&samples());
        assert!(sat.ok, "{sat:?}");
    }

    #[test]
    fn slope_exactly_at_bound_is_rejected() {
        let edge = GrowthField::linear(1.0, 1.0, 1.0).unwrap().verify_assumptions(&samples());
        assert!(!edge.ok);
    }

    #[test]
    fn user_rate_derivative_by_differences() {
        let f: GrowthFn = Arc::new(|_t, v| 0.3 * v);
        let g = GrowthField::new(GrowthFamily::UserRate(f), 0.5, 0.5).unwrap();
        let flow = g.flow(1.0, 0.0, 2.0).unwrap();
        assert_relative_eq!(flow.y, 2.0 * 0.3f64.exp(), max_relative = 1e-9);
        assert_relative_eq!(flow.jac, 0.3f64.exp(), max_relative = 1e-8);
    }

    #[test]
    fn linear_forward_bound_is_tight() {
        let g = GrowthField::linear(0.5, 0.5 + 1e-9, 1.0).unwrap();
        let y = g.flow(1.5, 0.25, 2.0).unwrap().y;
        assert_relative_eq!(y, 2.0 * (0.5f64 * 1.25).exp(), max_relative = 1e-9);
    }
}
