//! The tilted measure P_ρ and its moments.
//!
//! P_ρ reweights each support atom by e^{ρZ(η) - Λ(ρ)} with
//! Λ(ρ) = log E[e^{ρZ(η)}]. The moments μ_i = E_ρ[Z^{(i)}(η)] and the
//! covariance matrix Σ of (Z, Z') drive every prefactor downstream, and
//! the same weights double as the importance-sampling proposal for the
//! Monte Carlo oracle.

use crate::exponent::ZSupport;
use crate::numeric::Accumulator;

/// Moments of (Z, Z', Z'') under P_ρ.
#[derive(Debug, Clone, Copy)]
pub struct TiltedStats {
    pub mu0: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub sigma00: f64,
    pub sigma01: f64,
    pub sigma11: f64,
    /// det Σ = σ₀₀σ₁₁ - σ₀₁².
    pub det_sigma: f64,
    /// Δ = -(μ₀ + R), stored signed; ≈0 (possibly slightly negative by
    /// rounding) at and above the critical rate.
    pub delta: f64,
}

/// Tilted weights and moments at `rho`, with `zs` evaluated at
/// η = 1/(1+rho). `r` only enters through Δ.
pub fn tilted_stats(zs: &ZSupport, rho: f64, r: f64) -> TiltedStats {
    let weights = tilted_weights(zs, rho);

    let mut m0 = Accumulator::new();
    let mut m1 = Accumulator::new();
    let mut m2 = Accumulator::new();
    for (a, &w) in zs.atoms.iter().zip(&weights) {
        m0.add(w * a.z0);
        m1.add(w * a.z1);
        m2.add(w * a.z2);
    }
    let (mu0, mu1, mu2) = (m0.value(), m1.value(), m2.value());

    let mut s00 = Accumulator::new();
    let mut s01 = Accumulator::new();
    let mut s11 = Accumulator::new();
    for (a, &w) in zs.atoms.iter().zip(&weights) {
        let d0 = a.z0 - mu0;
        let d1 = a.z1 - mu1;
        s00.add(w * d0 * d0);
        s01.add(w * d0 * d1);
        s11.add(w * d1 * d1);
    }
    let (sigma00, sigma01, sigma11) = (s00.value(), s01.value(), s11.value());

    TiltedStats {
        mu0,
        mu1,
        mu2,
        sigma00,
        sigma01,
        sigma11,
        det_sigma: sigma00 * sigma11 - sigma01 * sigma01,
        delta: -(mu0 + r),
    }
}

/// Normalized tilted pmf w_a ∝ p_a e^{ρ z0_a}, pivoted on max z0 so that
/// |z0| up to hundreds of nats cannot overflow.
fn tilted_weights(zs: &ZSupport, rho: f64) -> Vec<f64> {
    let m = zs
        .atoms
        .iter()
        .map(|a| a.p.ln() + rho * a.z0)
        .fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = zs
        .atoms
        .iter()
        .map(|a| (a.p.ln() + rho * a.z0 - m).exp())
        .collect();
    let total = crate::numeric::compensated_sum(raw.iter().cloned());
    raw.into_iter().map(|w| w / total).collect()
}

/// The tilted proposal distribution used by the Monte Carlo oracle: the
/// pmf over atoms plus, per atom, the importance log-weight
/// log(p_a / w_a) = Λ(ρ) - ρ z0_a.
#[derive(Debug, Clone)]
pub struct TiltedSampler {
    pmf: Vec<f64>,
    cdf: Vec<f64>,
    log_importance: Vec<f64>,
    lambda: f64,
}

pub fn tilted_sampler(zs: &ZSupport, rho: f64) -> TiltedSampler {
    let pmf = tilted_weights(zs, rho);
    let mut cdf = Vec::with_capacity(pmf.len());
    let mut acc = Accumulator::new();
    for &w in &pmf {
        acc.add(w);
        cdf.push(acc.value());
    }
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    let terms: Vec<f64> = zs.atoms.iter().map(|a| a.p.ln() + rho * a.z0).collect();
    let lambda = crate::numeric::log_sum_exp(&terms);
    let log_importance = zs.atoms.iter().map(|a| lambda - rho * a.z0).collect();
    TiltedSampler {
        pmf,
        cdf,
        log_importance,
        lambda,
    }
}

impl TiltedSampler {
    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn log_importance(&self) -> &[f64] {
        &self.log_importance
    }

    /// Λ(ρ) = log Σ p_a e^{ρ z0_a}.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Inverse-CDF draw from a uniform u ∈ [0, 1).
    #[inline]
    pub fn sample(&self, u: f64) -> usize {
        match self
            .cdf
            .binary_search_by(|c| c.partial_cmp(&u).expect("cdf is finite"))
        {
            Ok(i) => i + 1,
            Err(i) => i,
        }
        .min(self.cdf.len() - 1)
    }
}
