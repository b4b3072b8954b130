//! The random-coding exponent problem.
//!
//! For a channel and rate R the exponent is
//!
//! ```text
//! E_r(R) = -min_{α ∈ (0,1]} { αR + L(α) },   L(α) = log E[e^{α Z(1/(1+α))}]
//! ```
//!
//! where Z(λ) = log E_{X'}[e^{λν}] is the per-symbol tilted log-mgf of ν.
//! The inner λ-minimizer is pinned analytically to λ = 1/(1+α), which makes
//! the tilted mean of Z'(η) vanish at the solution by construction. The
//! solver returns the optimizer ρ, η = 1/(1+ρ), the critical rate
//! R_crit = -L'(1) and the regime of R relative to it.

use crate::channel::DiscreteChannel;
use crate::numeric::{log_sum_exp, Accumulator};
use std::fmt;

/// One support atom's view of the central random variable: the values of
/// (Z(η), Z'(η), Z''(η)) for that (x, y) together with its probability.
#[derive(Debug, Clone, Copy)]
pub struct ZAtom {
    pub z0: f64,
    pub z1: f64,
    pub z2: f64,
    pub p: f64,
}

/// The finite support of (Z(η), Z'(η), Z''(η)) at a fixed tilt η.
#[derive(Debug, Clone)]
pub struct ZSupport {
    pub atoms: Vec<ZAtom>,
    pub eta: f64,
}

/// Evaluate the support of (Z, Z', Z'') at tilt `lambda`.
///
/// Per atom: z0 = log Σ_{x'} P(x') e^{λν} (terms with ν = -∞ contribute 0),
/// z1 and z2 are the mean and variance of ν under the λ-tilted competitor
/// distribution restricted to finite ν.
pub fn z_support(ch: &DiscreteChannel, lambda: f64) -> ZSupport {
    assert!(
        lambda > 0.0 && lambda <= 1.0,
        "tilt must lie in (0, 1], got {lambda}"
    );
    let nt = ch.nu_table();
    let px = ch.input().probs();
    let atoms = nt
        .atoms()
        .iter()
        .enumerate()
        .map(|(a, atom)| {
            let nus = nt.row(a);
            // Pivot exponentials on the largest finite λν to avoid overflow.
            let m = nus
                .iter()
                .filter(|v| v.is_finite())
                .map(|&v| lambda * v)
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = Accumulator::new();
            for (xp, &nu) in nus.iter().enumerate() {
                if nu.is_finite() {
                    total.add(px[xp] * (lambda * nu - m).exp());
                }
            }
            let s = total.value();
            let z0 = m + s.ln();
            let mut mean = Accumulator::new();
            for (xp, &nu) in nus.iter().enumerate() {
                if nu.is_finite() {
                    mean.add(px[xp] * (lambda * nu - m).exp() * nu);
                }
            }
            let z1 = mean.value() / s;
            let mut var = Accumulator::new();
            for (xp, &nu) in nus.iter().enumerate() {
                if nu.is_finite() {
                    let d = nu - z1;
                    var.add(px[xp] * (lambda * nu - m).exp() * d * d);
                }
            }
            let z2 = var.value() / s;
            ZAtom {
                z0,
                z1,
                z2,
                p: atom.p,
            }
        })
        .collect();
    ZSupport { atoms, eta: lambda }
}

/// L(α) = log E[e^{α Z(1/(1+α))}].
pub fn log_mgf(ch: &DiscreteChannel, alpha: f64) -> f64 {
    assert!(alpha > 0.0 && alpha <= 1.0, "alpha must lie in (0, 1]");
    let zs = z_support(ch, 1.0 / (1.0 + alpha));
    let terms: Vec<f64> = zs.atoms.iter().map(|a| a.p.ln() + alpha * a.z0).collect();
    log_sum_exp(&terms)
}

/// L'(α): by the envelope theorem (the inner λ-minimizer kills the ∂λ term)
/// this is the α-tilted mean of Z(1/(1+α)).
fn log_mgf_derivative(ch: &DiscreteChannel, alpha: f64) -> f64 {
    let zs = z_support(ch, 1.0 / (1.0 + alpha));
    let m = zs
        .atoms
        .iter()
        .map(|a| a.p.ln() + alpha * a.z0)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut num = Accumulator::new();
    let mut den = Accumulator::new();
    for a in &zs.atoms {
        let w = (a.p.ln() + alpha * a.z0 - m).exp();
        den.add(w);
        num.add(w * a.z0);
    }
    num.value() / den.value()
}

/// R_crit = -L'(1): the largest rate whose optimizer is ρ = 1.
pub fn critical_rate(ch: &DiscreteChannel) -> f64 {
    -log_mgf_derivative(ch, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    BelowCritical,
    AtCritical,
    AboveCritical,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::BelowCritical => write!(f, "below-critical"),
            Regime::AtCritical => write!(f, "at-critical"),
            Regime::AboveCritical => write!(f, "above-critical"),
        }
    }
}

/// Solved exponent data at one rate.
#[derive(Debug, Clone, Copy)]
pub struct RateAnalysis {
    /// Rate in nats per symbol.
    pub r: f64,
    /// Optimal tilt ρ ∈ (0, 1].
    pub rho: f64,
    /// η = 1/(1+ρ).
    pub eta: f64,
    /// Λ(ρ) = L(ρ).
    pub lambda_rho: f64,
    /// E_r(R).
    pub er: f64,
    /// Critical rate R_crit = -L'(1).
    pub rcrit: f64,
    /// Mutual information I(X;Y).
    pub mi: f64,
    /// Δ = -(μ₀ + R); positive below the critical rate, zero at and above it.
    pub delta: f64,
    pub regime: Regime,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExponentError {
    RateOutOfRange {
        r: f64,
        mi: f64,
    },
    /// R_crit coincides with I(X;Y) (Z(η) is a constant), so no rate lies
    /// strictly between them.
    NoAboveCriticalRegime {
        rcrit: f64,
        mi: f64,
    },
    /// The above-critical regime was forced for a rate at or below R_crit,
    /// where the objective has no interior stationary point.
    ForcedAboveAtLowRate {
        r: f64,
        rcrit: f64,
    },
}

impl fmt::Display for ExponentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExponentError::RateOutOfRange { r, mi } => {
                write!(f, "rate {r} outside (0, I) with I = {mi}")
            }
            ExponentError::NoAboveCriticalRegime { rcrit, mi } => write!(
                f,
                "no above-critical regime exists: R_crit = {rcrit} reaches I = {mi}"
            ),
            ExponentError::ForcedAboveAtLowRate { r, rcrit } => write!(
                f,
                "cannot force the above-critical regime at R = {r} <= R_crit = {rcrit}"
            ),
        }
    }
}

impl std::error::Error for ExponentError {}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// |R - R_crit| below this is treated as exactly critical.
    pub at_crit_tol: f64,
    /// Override the regime decision (CLI `--force-regime`).
    pub forced: Option<Regime>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            at_crit_tol: 1e-9,
            forced: None,
        }
    }
}

pub fn solve_exponent(ch: &DiscreteChannel, r: f64) -> Result<RateAnalysis, ExponentError> {
    solve_exponent_with(ch, r, SolveOptions::default())
}

pub fn solve_exponent_with(
    ch: &DiscreteChannel,
    r: f64,
    opts: SolveOptions,
) -> Result<RateAnalysis, ExponentError> {
    let mi = ch.mutual_information();
    if !(r > 0.0 && r < mi) {
        return Err(ExponentError::RateOutOfRange { r, mi });
    }
    let rcrit = -log_mgf_derivative(ch, 1.0);

    let regime = match opts.forced {
        Some(f) => f,
        None => {
            if (r - rcrit).abs() <= opts.at_crit_tol {
                Regime::AtCritical
            } else if r < rcrit {
                Regime::BelowCritical
            } else {
                Regime::AboveCritical
            }
        }
    };

    let rho = match regime {
        Regime::BelowCritical | Regime::AtCritical => 1.0,
        Regime::AboveCritical => {
            if rcrit >= mi - 1e-12 {
                return Err(ExponentError::NoAboveCriticalRegime { rcrit, mi });
            }
            if r <= rcrit {
                // Only reachable via a forced regime.
                return Err(ExponentError::ForcedAboveAtLowRate { r, rcrit });
            }
            minimize_objective(ch, r)
        }
    };

    let eta = 1.0 / (1.0 + rho);
    let lambda_rho = log_mgf(ch, rho);
    let er = -(rho * r + lambda_rho);
    let mu0 = log_mgf_derivative(ch, rho);
    let delta = -(mu0 + r);

    Ok(RateAnalysis {
        r,
        rho,
        eta,
        lambda_rho,
        er,
        rcrit,
        mi,
        delta,
        regime,
    })
}

/// Minimize α ↦ αR + L(α) over (0, 1] for R strictly above the critical
/// rate: golden-section bracketing followed by bisection on the derivative
/// R + L'(α), which is increasing in α (L is convex).
fn minimize_objective(ch: &DiscreteChannel, r: f64) -> f64 {
    let f = |alpha: f64| alpha * r + log_mgf(ch, alpha);
    let (mut lo, mut hi) = (1e-6, 1.0);

    // Golden-section stage.
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut a = lo;
    let mut b = hi;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..60 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
        if b - a < 1e-10 {
            break;
        }
    }
    lo = (a - 1e-8).max(1e-6);
    hi = (b + 1e-8).min(1.0);

    // Derivative bisection polish. The derivative is increasing, so widen
    // the bracket back to the boundary if golden-section overshot.
    let deriv = |alpha: f64| r + log_mgf_derivative(ch, alpha);
    if deriv(lo) > 0.0 {
        lo = 1e-6;
        if deriv(lo) > 0.0 {
            return lo;
        }
    }
    if deriv(hi) < 0.0 {
        hi = 1.0;
        if deriv(hi) < 0.0 {
            return hi;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let dm = deriv(mid);
        if dm.abs() <= 1e-12 {
            return mid;
        }
        if dm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}
