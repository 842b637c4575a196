//! Coagulation kernels, the singular envelope they must satisfy, and their
//! truncations to `(1/n, n)²`.

use std::fmt;
use std::sync::Arc;

use crate::error::{domain, Result};

/// User supplied rate `(v1, v2) -> K(v1, v2)`.
pub type RateFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Sample count per axis of the coarse search used for user kernels.
pub const USER_SUP_GRID: usize = 200;
/// Number of local zoom rounds after the coarse search.
pub const USER_SUP_REFINEMENTS: usize = 5;
/// Lattice size (per axis) of each zoom round.
const ZOOM_POINTS: usize = 11;

#[derive(Clone)]
pub enum KernelFamily {
    /// `(v1^{1/3} + v2^{1/3}) (v1^{-1/3} + v2^{-1/3})`
    Smoluchowski,
    /// `(v1 + v2)^θ1 / (v1 v2)^θ2`
    Granulation { theta1: f64, theta2: f64 },
    /// `(v1 v2)^{-θ}`
    StirredFroth { theta: f64 },
    Constant { kappa: f64 },
    UserRate(RateFn),
}

impl fmt::Debug for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Smoluchowski => write!(f, "Smoluchowski"),
            Self::Granulation { theta1, theta2 } => {
                write!(f, "Granulation(theta1={theta1}, theta2={theta2})")
            }
            Self::StirredFroth { theta } => write!(f, "StirredFroth(theta={theta})"),
            Self::Constant { kappa } => write!(f, "Constant(kappa={kappa})"),
            Self::UserRate(_) => write!(f, "UserRate(<fn>)"),
        }
    }
}

/// A coagulation kernel together with the constants `(β, k)` of its
/// envelope
///
/// ```text
/// K(v1,v2) ≤ k (v1 v2)^{-β}      on (0,1)²
///          ≤ k v2 v1^{-β}        on (0,1)×(1,∞)   (and symmetrically)
///          ≤ k (v1 + v2)         on (1,∞)²
/// ```
#[derive(Clone, Debug)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub beta: f64,
    pub k_env: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, beta: f64, k_env: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(domain(format!("kernel beta must be positive, got {beta}")));
        }
        if !(k_env > 0.0 && k_env.is_finite()) {
            return Err(domain(format!("envelope constant must be positive, got {k_env}")));
        }
        match &family {
            KernelFamily::Granulation { theta1, theta2 } => {
                if !(*theta1 <= 1.0 && *theta2 >= 0.0) {
                    return Err(domain(format!(
                        "granulation kernel needs theta1 <= 1 and theta2 >= 0, got ({theta1}, {theta2})"
                    )));
                }
            }
            KernelFamily::StirredFroth { theta } if !(*theta > 0.0) => {
                return Err(domain(format!("stirred froth kernel needs theta > 0, got {theta}")));
            }
            KernelFamily::Constant { kappa } if !(*kappa >= 0.0 && kappa.is_finite()) => {
                return Err(domain(format!("constant kernel needs kappa >= 0, got {kappa}")));
            }
            _ => {}
        }
        Ok(Self { family, beta, k_env })
    }

    /// Smoluchowski kernel with `β = 1/3`, `k = 4`.
    pub fn smoluchowski() -> Self {
        Self { family: KernelFamily::Smoluchowski, beta: 1.0 / 3.0, k_env: 4.0 }
    }

    /// Stirred froth kernel with `β = θ`, `k = 1`.
    pub fn stirred_froth(theta: f64) -> Result<Self> {
        Self::new(KernelFamily::StirredFroth { theta }, theta, 1.0)
    }

    /// Granulation kernel. `β` is passed explicitly since `θ2 = 0` is allowed.
    pub fn granulation(theta1: f64, theta2: f64, beta: f64) -> Result<Self> {
        let family = KernelFamily::Granulation { theta1, theta2 };
        let k = default_envelope_constant(&family, beta);
        Self::new(family, beta, k)
    }

    /// Constant kernel; any `β > 0` works with `k = κ`.
    pub fn constant(kappa: f64, beta: f64) -> Result<Self> {
        Self::new(KernelFamily::Constant { kappa }, beta, kappa.max(f64::MIN_POSITIVE))
    }

    pub fn user(rate: RateFn, beta: f64, k_env: f64) -> Result<Self> {
        Self::new(KernelFamily::UserRate(rate), beta, k_env)
    }

    /// Kernel value, rejecting nonpositive volumes.
    pub fn evaluate(&self, v1: f64, v2: f64) -> Result<f64> {
        if !(v1 > 0.0 && v2 > 0.0) {
            return Err(domain(format!("kernel evaluated at nonpositive volume ({v1}, {v2})")));
        }
        Ok(self.rate(v1, v2))
    }

    /// Kernel value without argument checks; callers guarantee `v1, v2 > 0`.
    pub fn rate(&self, v1: f64, v2: f64) -> f64 {
        family_rate(&self.family, v1, v2)
    }

    /// Right-hand side of the three-regime bound at `(v1, v2)`.
    pub fn envelope(&self, v1: f64, v2: f64) -> f64 {
        envelope_value(self.beta, self.k_env, v1, v2)
    }

    pub fn verify_envelope(&self, samples: &[(f64, f64)]) -> EnvelopeReport {
        let mut worst_ratio = 0.0_f64;
        let mut witness = (f64::NAN, f64::NAN);
        for &(v1, v2) in samples {
            let ratio = self.rate(v1, v2) / self.envelope(v1, v2);
            if ratio > worst_ratio || witness.0.is_nan() {
                worst_ratio = ratio;
                witness = (v1, v2);
            }
        }
        EnvelopeReport {
            family: format!("{:?}", self.family),
            beta: self.beta,
            k_env: self.k_env,
            samples: samples.len(),
            ok: worst_ratio <= 1.0,
            worst_ratio,
            witness,
        }
    }

    pub fn truncate(&self, n: u32) -> Result<TruncatedKernel> {
        if n < 2 {
            return Err(domain(format!("truncation index must be at least 2, got {n}")));
        }
        Ok(TruncatedKernel { base: self.clone(), n, beta_n: self.sup_truncated(n) })
    }

    /// `sup K` over `(1/n, n)²`.
    ///
    /// Built-in families attain their supremum on the closure of the square at
    /// one of the corners; user kernels are searched on a log lattice.
    pub fn sup_truncated(&self, n: u32) -> f64 {
        let lo = 1.0 / n as f64;
        let hi = n as f64;
        match &self.family {
            KernelFamily::Constant { kappa } => *kappa,
            KernelFamily::StirredFroth { theta } => hi.powf(2.0 * theta),
            KernelFamily::UserRate(f) => sampled_sup(f.as_ref(), lo, hi),
            family => [(lo, lo), (lo, hi), (hi, hi)]
                .iter()
                .map(|&(a, b)| family_rate(family, a, b))
                .fold(0.0, f64::max),
        }
    }

    /// Stable textual identity, used for hashing. `None` for user kernels.
    pub fn descriptor(&self) -> Option<String> {
        match self.family {
            KernelFamily::UserRate(_) => None,
            _ => Some(format!("{:?};beta={:e};k={:e}", self.family, self.beta, self.k_env)),
        }
    }
}

fn family_rate(family: &KernelFamily, v1: f64, v2: f64) -> f64 {
    match family {
        KernelFamily::Smoluchowski => {
            (v1.cbrt() + v2.cbrt()) * (1.0 / v1.cbrt() + 1.0 / v2.cbrt())
        }
        KernelFamily::Granulation { theta1, theta2 } => {
            (v1 + v2).powf(*theta1) * (v1 * v2).powf(-*theta2)
        }
        KernelFamily::StirredFroth { theta } => (v1 * v2).powf(-*theta),
        KernelFamily::Constant { kappa } => *kappa,
        KernelFamily::UserRate(f) => f(v1, v2),
    }
}

fn envelope_value(beta: f64, k: f64, v1: f64, v2: f64) -> f64 {
    let (small, large) = if v1 <= v2 { (v1, v2) } else { (v2, v1) };
    if large <= 1.0 {
        k * (v1 * v2).powf(-beta)
    } else if small <= 1.0 {
        k * large * small.powf(-beta)
    } else {
        k * (v1 + v2)
    }
}

fn sampled_sup(f: &(dyn Fn(f64, f64) -> f64 + Send + Sync), lo: f64, hi: f64) -> f64 {
    let (llo, lhi) = (lo.ln(), hi.ln());
    let step = (lhi - llo) / USER_SUP_GRID as f64;
    // cell-centred so every sample lies strictly inside the open square
    let node = |i: usize| llo + (i as f64 + 0.5) * step;
    let mut best = (f64::NEG_INFINITY, node(0), node(0));
    for i in 0..USER_SUP_GRID {
        for j in 0..USER_SUP_GRID {
            let (a, b) = (node(i), node(j));
            let val = f(a.exp(), b.exp());
            if val > best.0 {
                best = (val, a, b);
            }
        }
    }
    let mut radius = step;
    for _ in 0..USER_SUP_REFINEMENTS {
        let (_, ca, cb) = best;
        for i in 0..ZOOM_POINTS {
            for j in 0..ZOOM_POINTS {
                let off = |k: usize| -radius + 2.0 * radius * k as f64 / (ZOOM_POINTS - 1) as f64;
                let a = (ca + off(i)).clamp(llo, lhi);
                let b = (cb + off(j)).clamp(llo, lhi);
                if a <= llo || a >= lhi || b <= llo || b >= lhi {
                    continue;
                }
                let val = f(a.exp(), b.exp());
                if val > best.0 {
                    best = (val, a, b);
                }
            }
        }
        radius /= 5.0;
    }
    best.0.max(0.0)
}

/// Envelope constant shipped for each built-in family.
///
/// Closed forms where they exist (`4` for Smoluchowski, `1` for stirred froth,
/// `κ` for constant, `2^θ1` for granulation with `0 ≤ θ1 ≤ 1, θ2 ≤ β`); any
/// other case falls back to a dense log-grid maximisation of `K / envelope`.
pub fn default_envelope_constant(family: &KernelFamily, beta: f64) -> f64 {
    match family {
        KernelFamily::Smoluchowski => 4.0,
        KernelFamily::StirredFroth { .. } => 1.0,
        KernelFamily::Constant { kappa } => kappa.max(f64::MIN_POSITIVE),
        KernelFamily::Granulation { theta1, theta2 }
            if (0.0..=1.0).contains(theta1) && *theta2 <= beta =>
        {
            2f64.powf(*theta1)
        }
        other => {
            let samples = log_sample_grid(400, 1e-6, 1e6);
            samples
                .iter()
                .map(|&(a, b)| family_rate(other, a, b) / envelope_value(beta, 1.0, a, b))
                .fold(f64::MIN_POSITIVE, f64::max)
        }
    }
}

/// `points × points` log-uniform lattice on `(lo, hi)²`, endpoints included.
/// With `lo < 1 < hi` it covers all three envelope regimes.
pub fn log_sample_grid(points: usize, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    assert!(points >= 2 && lo > 0.0 && hi > lo);
    let (llo, lhi) = (lo.ln(), hi.ln());
    let axis: Vec<f64> = (0..points)
        .map(|i| (llo + (lhi - llo) * i as f64 / (points - 1) as f64).exp())
        .collect();
    let mut out = Vec::with_capacity(points * points);
    for &a in &axis {
        for &b in &axis {
            out.push((a, b));
        }
    }
    out
}

/// Result of [`KernelSpec::verify_envelope`].
#[derive(Clone, Debug)]
pub struct EnvelopeReport {
    pub family: String,
    pub beta: f64,
    pub k_env: f64,
    pub samples: usize,
    pub ok: bool,
    /// `max K / envelope` over the samples.
    pub worst_ratio: f64,
    pub witness: (f64, f64),
}

impl EnvelopeReport {
    /// Flat `key = value` block.
    pub fn to_key_values(&self) -> String {
        format!(
            "family = {}\nbeta = {}\nk_env = {}\nsamples = {}\nok = {}\nworst_ratio = {}\nwitness_v1 = {}\nwitness_v2 = {}\n",
            self.family,
            crate::output::fmt12(self.beta),
            crate::output::fmt12(self.k_env),
            self.samples,
            self.ok,
            crate::output::fmt12(self.worst_ratio),
            crate::output::fmt12(self.witness.0),
            crate::output::fmt12(self.witness.1),
        )
    }
}

/// `K_n = K · χ(1/n,n)(v1) · χ(1/n,n)(v2)` with its supremum `β_n`.
#[derive(Clone, Debug)]
pub struct TruncatedKernel {
    pub base: KernelSpec,
    pub n: u32,
    pub beta_n: f64,
}

impl TruncatedKernel {
    pub fn lower(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn upper(&self) -> f64 {
        self.n as f64
    }

    /// Whether `v` lies in the open interval `(1/n, n)`.
    pub fn in_support(&self, v: f64) -> bool {
        v > self.lower() && v < self.upper()
    }

    pub fn evaluate(&self, v1: f64, v2: f64) -> f64 {
        if self.in_support(v1) && self.in_support(v2) {
            self.base.rate(v1, v2)
        } else {
            0.0
        }
    }

    pub fn is_zero(&self) -> bool {
        self.beta_n == 0.0
    }
}
