//! Ground-truth computation of P_RC(n).
//!
//! Everything reduces to the pair statistics of one competitor codeword:
//! given the sent pair (x^n, y^n), let p₊ and p₀ be the probabilities that
//! an independent competitor's likelihood exceeds or exactly ties the sent
//! sequence. The joint type of (x^n, y^n) is a sufficient statistic for
//! (p₊, p₀), so
//!
//! ```text
//! P_RC(n) = Σ_types  multinomial(n; t) Π p_a^{t_a} · q_M(p₊(t), p₀(t))
//! ```
//!
//! Three engines compute the competitor-sum distribution behind (p₊, p₀):
//!
//! * **lattice** — when the finite ν values lie on a span-h grid the sum
//!   lives on integer lattice indices and convolutions are exact;
//! * **value** — for nonlattice ν at small n the distinct sums are few and
//!   are convolved directly as (value, probability) lists;
//! * **grid** — for nonlattice ν at larger n, floor- and ceil-rounding of ν
//!   onto a caller-supplied grid give certified lower/upper bounds. The
//!   exact-tie mass (sums of exactly zero ν values) is kept on index 0 and
//!   never rounded; nonzero values are pushed off index 0 in the rounding
//!   direction so the tie mass stays exact.
//!
//! Atoms with identical competitor-increment distributions collapse into
//! groups (their multinomial factors marginalize), which turns the BSC's
//! C(n+3,3) types into n+1 and keeps block lengths in the hundreds exact.
//!
//! The Monte Carlo path draws (x, y)^n from the ρ-tilted atom distribution
//! and reweights by exp(nΛ(ρ) - ρ Σ z₀), the change of measure that keeps
//! the estimator's relative variance bounded near the exponent's slope.
//! Per-sample (p₊, p₀) are computed exactly from cached group powers, and
//! counter-based per-sample RNG streams make the result bitwise
//! independent of the worker-thread count.

use crate::asymptotics::TieRule;
use crate::channel::{DiscreteChannel, NuTable};
use crate::classify::classify_channel;
use crate::exponent::RateAnalysis;
use crate::numeric::{Accumulator, LnFactorial, SplitMix64};
use crate::tilt::tilted_sampler;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// ν values with |ν| at or below this are exact zeros (ties).
const ZERO_TOL: f64 = 1e-12;
/// Merge tolerance for the value engine and the tie window for float sums.
const TIE_TOL: f64 = 1e-9;
/// Largest block length the value engine accepts before demanding a grid.
const VALUE_ENGINE_MAX_N: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    TypeCapExceeded { types: f64, cap: u64 },
    CellCapExceeded { cells: f64, cap: u64 },
    SizeCapExceeded { states: f64 },
    CodebookTooSmall { m: f64 },
    TooFewSamples { samples: usize },
    NonLatticeNeedsGrid { n: usize },
    BadArguments(String),
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::TypeCapExceeded { types, cap } => {
                write!(f, "joint-type count {types:.3e} exceeds cap {cap}")
            }
            OracleError::CellCapExceeded { cells, cap } => {
                write!(f, "lattice range {cells:.3e} exceeds memory cap {cap}")
            }
            OracleError::SizeCapExceeded { states } => {
                write!(f, "brute-force state count {states:.3e} exceeds 1e8")
            }
            OracleError::CodebookTooSmall { m } => write!(f, "codebook size {m} < 2"),
            OracleError::TooFewSamples { samples } => {
                write!(f, "Monte Carlo needs at least 100 samples, got {samples}")
            }
            OracleError::NonLatticeNeedsGrid { n } => write!(
                f,
                "nonlattice ν at n = {n} exceeds the exact value engine; supply --grid"
            ),
            OracleError::BadArguments(s) => write!(f, "{s}"),
        }
    }
}

impl std::error::Error for OracleError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMethod {
    ExactTypes,
    MonteCarloIS,
    BruteForce,
}

impl fmt::Display for OracleMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleMethod::ExactTypes => write!(f, "exact-types"),
            OracleMethod::MonteCarloIS => write!(f, "mc-is"),
            OracleMethod::BruteForce => write!(f, "brute-force"),
        }
    }
}

/// A P_RC(n) estimate. `stderr` is 0 for exact values and the certified
/// half-width for grid-bounded runs.
#[derive(Debug, Clone, Copy)]
pub struct OracleEstimate {
    pub value: f64,
    pub stderr: f64,
    pub method: OracleMethod,
    pub n: usize,
    /// Codebook size M (integer-valued; exact as f64 below 2^53).
    pub m: f64,
    pub tie: TieRule,
}

/// Joint type of a sent (x^n, y^n) pair: per-support-atom counts.
#[derive(Debug, Clone, PartialEq)]
pub struct PairType {
    pub counts: Vec<u32>,
}

impl PairType {
    pub fn n(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum()
    }
}

/// Distribution of the competitor sum Σ ν over a lattice with the given
/// span: `probs[j]` is the mass at value (min_index + j)·span, and
/// `minus_inf_mass` is the probability that some symbol was impossible.
#[derive(Debug, Clone)]
pub struct LatticeDist {
    pub span: f64,
    pub min_index: i64,
    pub probs: Vec<f64>,
    pub minus_inf_mass: f64,
}

impl LatticeDist {
    /// Mass at exactly zero (a likelihood tie).
    pub fn p_zero(&self) -> f64 {
        let j = -self.min_index;
        if j >= 0 && (j as usize) < self.probs.len() {
            self.probs[j as usize]
        } else {
            0.0
        }
    }

    /// Mass strictly above zero (a competitor win).
    pub fn p_plus(&self) -> f64 {
        let mut acc = Accumulator::new();
        for (j, &p) in self.probs.iter().enumerate() {
            if self.min_index + j as i64 > 0 {
                acc.add(p);
            }
        }
        acc.value()
    }
}

/// Result of [`sum_distribution`]: exact on lattice channels, certified
/// bounds in grid mode.
#[derive(Debug, Clone)]
pub enum SumDist {
    Exact(LatticeDist),
    Bounds {
        lower: LatticeDist,
        upper: LatticeDist,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    /// Cap on enumerated (group-collapsed) joint types.
    pub type_cap: u64,
    /// Cap on lattice cells per convolution.
    pub cell_cap: u64,
    /// Rounding grid for nonlattice channels.
    pub grid: Option<f64>,
    /// Override the tilt used by the Monte Carlo sampler (0 = naive MC).
    pub force_rho: Option<f64>,
    /// Worker threads for Monte Carlo; defaults to EXACTRC_THREADS or 1.
    pub threads: Option<usize>,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            type_cap: 50_000_000,
            cell_cap: 100_000_000,
            grid: None,
            force_rho: None,
            threads: None,
        }
    }
}

/// M_n = ⌈e^{nR}⌉ (never below 2) and the effective rate R_n = log(M_n)/n.
///
/// P_RC depends on the integer codebook size; comparisons against
/// predictions re-solve the exponent at R_n so the rounding of M does not
/// masquerade as a constant-factor error.
pub fn effective_codebook(n: usize, r: f64) -> (f64, f64) {
    let m = (n as f64 * r).exp().ceil().max(2.0);
    (m, m.ln() / n as f64)
}

/// Exact tie-aware error probability for M - 1 independent competitors.
///
/// Ties broken uniformly: q_M = 1 - ((1-p₊)^M - (1-p₀-p₊)^M)/(M p₀);
/// ties as errors: q̃_M = 1 - (1-p₀-p₊)^{M-1}. Evaluated through expm1/ln1p
/// reformulations with a series fallback so the relative error stays ≤1e-12
/// across the full range, including q_M near 0 and M beyond 10^15.
pub fn q_m(p_plus: f64, p_zero: f64, m: f64, tie: TieRule) -> f64 {
    assert!(m >= 2.0, "q_m needs at least two codewords");
    assert!(
        p_plus >= -1e-12 && p_zero >= -1e-12 && p_plus + p_zero <= 1.0 + 1e-9,
        "(p_plus, p_zero) = ({p_plus}, {p_zero}) outside the simplex"
    );
    let s = p_plus.clamp(0.0, 1.0);
    let t = p_zero.clamp(0.0, 1.0).min(1.0 - s);

    match tie {
        TieRule::TieAsError => -((m - 1.0) * (-(s + t)).ln_1p()).exp_m1(),
        TieRule::UniformRandom => {
            if s >= 1.0 {
                return 1.0;
            }
            let u = 1.0 - s;
            // The series branch must decide on M·t, not on t alone: a tie
            // probability far below 1e-14 still matters when M exceeds 1e14.
            let x = t / u;
            if (m - 1.0) * x < 1e-3 {
                // q = 1 - u^{M-1} S(x),  S = Σ_k (-1)^k C(M-1,k) x^k/(k+1):
                // fully cancellation-free as -expm1((M-1) ln(1-s) + ln S).
                let mut coeff = 1.0f64; // C(M-1,k) x^k
                let mut s1 = 0.0f64; // S - 1
                for k in 1..=12u32 {
                    coeff *= x * (m - k as f64) / k as f64;
                    let term = if k % 2 == 0 { 1.0 } else { -1.0 } * coeff / (k as f64 + 1.0);
                    s1 += term;
                    if term.abs() < 1e-20 {
                        break;
                    }
                }
                -((m - 1.0) * (-s).ln_1p() + s1.ln_1p()).exp_m1()
            } else {
                // Direct evaluation in log space:
                // q = 1 + e^{M ln(1-s)} expm1(M ln((1-s-t)/(1-s)))/(M t).
                let a = m * (-s).ln_1p();
                let d = m * ((-(s + t)).ln_1p() - (-s).ln_1p());
                (1.0 + (a.exp() * d.exp_m1()) / (m * t)).clamp(0.0, 1.0)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Competitor-sum distributions
// ---------------------------------------------------------------------------

/// One distribution of a (partial) competitor sum, in lattice-index or
/// explicit-value representation. Probabilities cover the finite part
/// only; the deficit from 1 is -∞ mass.
#[derive(Debug, Clone)]
enum Dist {
    Lat { min: i64, probs: Vec<f64> },
    Val { vals: Vec<f64>, probs: Vec<f64> },
}

impl Dist {
    fn unit(value_repr: bool) -> Self {
        if value_repr {
            Dist::Val {
                vals: vec![0.0],
                probs: vec![1.0],
            }
        } else {
            Dist::Lat {
                min: 0,
                probs: vec![1.0],
            }
        }
    }

    fn len(&self) -> usize {
        match self {
            Dist::Lat { probs, .. } | Dist::Val { probs, .. } => probs.len(),
        }
    }

    fn finite_mass(&self) -> f64 {
        match self {
            Dist::Lat { probs, .. } | Dist::Val { probs, .. } => {
                crate::numeric::compensated_sum(probs.iter().cloned())
            }
        }
    }

    fn convolve(&self, other: &Dist) -> Dist {
        match (self, other) {
            (Dist::Lat { min: ma, probs: pa }, Dist::Lat { min: mb, probs: pb }) => {
                let mut out = vec![0.0f64; pa.len() + pb.len() - 1];
                // Iterate the shorter side outermost for cache locality.
                let (small, big) = if pa.len() <= pb.len() {
                    (pa, pb)
                } else {
                    (pb, pa)
                };
                for (i, &a) in small.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    for (j, &b) in big.iter().enumerate() {
                        out[i + j] += a * b;
                    }
                }
                Dist::Lat {
                    min: ma + mb,
                    probs: out,
                }
            }
            (
                Dist::Val {
                    vals: va,
                    probs: pa,
                },
                Dist::Val {
                    vals: vb,
                    probs: pb,
                },
            ) => {
                let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(va.len() * vb.len());
                for (x, &p) in va.iter().zip(pa) {
                    for (y, &q) in vb.iter().zip(pb) {
                        pairs.push((x + y, p * q));
                    }
                }
                pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite sums"));
                let mut vals = Vec::new();
                let mut probs: Vec<f64> = Vec::new();
                for (v, p) in pairs {
                    match vals.last() {
                        Some(&lv) if v - lv <= TIE_TOL => *probs.last_mut().unwrap() += p,
                        _ => {
                            vals.push(v);
                            probs.push(p);
                        }
                    }
                }
                Dist::Val { vals, probs }
            }
            _ => unreachable!("mixed Dist representations"),
        }
    }

    fn pow(&self, k: usize, value_repr: bool) -> Dist {
        let mut base = self.clone();
        let mut acc = Dist::unit(value_repr);
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.convolve(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.convolve(&base);
            }
        }
        acc
    }
}

/// A distribution with its suffix sums, for O(|partial|) evaluation of
/// (p₊, p₀) against a cached last-group power.
#[derive(Debug, Clone)]
struct SuffixDist {
    dist: Dist,
    /// suffix[j] = Σ_{k ≥ j} probs[k]; suffix[len] = 0.
    suffix: Vec<f64>,
}

impl SuffixDist {
    fn new(dist: Dist) -> Self {
        let probs = match &dist {
            Dist::Lat { probs, .. } | Dist::Val { probs, .. } => probs,
        };
        let mut suffix = vec![0.0; probs.len() + 1];
        for j in (0..probs.len()).rev() {
            suffix[j] = suffix[j + 1] + probs[j];
        }
        SuffixDist { dist, suffix }
    }

    /// Mass of `self` at exactly -x and strictly above -x.
    fn at_and_above(&self, x_lat: i64, x_val: f64) -> (f64, f64) {
        match &self.dist {
            Dist::Lat { min, probs } => {
                let target = -x_lat - min;
                let at = if target >= 0 && (target as usize) < probs.len() {
                    probs[target as usize]
                } else {
                    0.0
                };
                let above_idx = (target + 1).clamp(0, probs.len() as i64) as usize;
                (at, self.suffix[above_idx])
            }
            Dist::Val { vals, probs } => {
                let target = -x_val;
                // Values within TIE_TOL of the target tie; those above win.
                let lo = vals.partition_point(|&v| v < target - TIE_TOL);
                let hi = vals.partition_point(|&v| v <= target + TIE_TOL);
                let at: f64 = probs[lo..hi].iter().sum();
                (at, self.suffix[hi])
            }
        }
    }
}

/// (p₊, p₀) of partial ⊛ power without materializing the convolution.
fn combine_stats(partial: &Dist, power: &SuffixDist) -> (f64, f64) {
    let mut pz = Accumulator::new();
    let mut pp = Accumulator::new();
    match partial {
        Dist::Lat { min, probs } => {
            for (j, &p) in probs.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let (at, above) = power.at_and_above(min + j as i64, 0.0);
                pz.add(p * at);
                pp.add(p * above);
            }
        }
        Dist::Val { vals, probs } => {
            for (v, &p) in vals.iter().zip(probs) {
                if p == 0.0 {
                    continue;
                }
                let (at, above) = power.at_and_above(0, *v);
                pz.add(p * at);
                pp.add(p * above);
            }
        }
    }
    (pp.value(), pz.value())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Rounding {
    Floor,
    Ceil,
}

/// Per-atom competitor-increment distribution plus grouping key data.
#[derive(Debug, Clone)]
struct AtomDist {
    single: Dist,
    minus_inf: f64,
}

impl AtomDist {
    /// Build from one ν row. `span` is Some(h) for the lattice engine
    /// (h from classify, or 1.0 for singular channels whose only finite
    /// value is 0) and None for the value engine; `grid` with a rounding
    /// direction maps nonzero values off index 0 so the exact-tie mass at 0
    /// stays pure.
    fn from_nu_row(
        row: &[f64],
        px: &[f64],
        span: Option<f64>,
        grid: Option<(f64, Rounding)>,
    ) -> AtomDist {
        let mut minus_inf = 0.0;
        let mut entries: Vec<(i64, f64)> = Vec::new();
        let mut vals: Vec<(f64, f64)> = Vec::new();
        for (xp, &nu) in row.iter().enumerate() {
            let p = px[xp];
            if nu == f64::NEG_INFINITY {
                minus_inf += p;
                continue;
            }
            match (span, grid) {
                (Some(h), _) => {
                    let idx = if nu.abs() <= ZERO_TOL {
                        0
                    } else {
                        let r = nu / h;
                        let k = r.round();
                        debug_assert!((r - k).abs() < 1e-6, "ν = {nu} is off the span-{h} lattice");
                        k as i64
                    };
                    entries.push((idx, p));
                }
                (None, Some((delta, rounding))) => {
                    let idx = if nu.abs() <= ZERO_TOL {
                        0
                    } else {
                        let r = nu / delta;
                        let k = r.round();
                        let mut idx = if (r - k).abs() <= 1e-9 * r.abs().max(1.0) {
                            k as i64
                        } else {
                            match rounding {
                                Rounding::Floor => r.floor() as i64,
                                Rounding::Ceil => r.ceil() as i64,
                            }
                        };
                        // Keep index 0 reserved for exact ties.
                        if idx == 0 {
                            idx = match rounding {
                                Rounding::Floor => -1,
                                Rounding::Ceil => 1,
                            };
                        }
                        idx
                    };
                    entries.push((idx, p));
                }
                (None, None) => {
                    let v = if nu.abs() <= ZERO_TOL { 0.0 } else { nu };
                    vals.push((v, p));
                }
            }
        }
        let single = if span.is_some() || grid.is_some() {
            entries.sort_by_key(|e| e.0);
            let min = entries.first().map(|e| e.0).unwrap_or(0);
            let max = entries.last().map(|e| e.0).unwrap_or(0);
            let mut probs = vec![0.0; (max - min + 1) as usize];
            for (idx, p) in entries {
                probs[(idx - min) as usize] += p;
            }
            Dist::Lat { min, probs }
        } else {
            vals.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
            let mut mv: Vec<f64> = Vec::new();
            let mut mp: Vec<f64> = Vec::new();
            for (v, p) in vals {
                match mv.last() {
                    Some(&lv) if v - lv <= TIE_TOL => *mp.last_mut().unwrap() += p,
                    _ => {
                        mv.push(v);
                        mp.push(p);
                    }
                }
            }
            Dist::Val {
                vals: mv,
                probs: mp,
            }
        };
        AtomDist { single, minus_inf }
    }

    /// Bitwise grouping key: atoms with identical increment distributions
    /// are interchangeable for (p₊, p₀).
    fn key(&self) -> Vec<u64> {
        let mut k = vec![self.minus_inf.to_bits()];
        match &self.single {
            Dist::Lat { min, probs } => {
                k.push(0);
                k.push(*min as u64);
                k.extend(probs.iter().map(|p| p.to_bits()));
            }
            Dist::Val { vals, probs } => {
                k.push(1);
                k.extend(vals.iter().map(|v| v.to_bits()));
                k.extend(probs.iter().map(|p| p.to_bits()));
            }
        }
        k
    }
}

/// The competitor sum Σᵢ ν(xᵢ, yᵢ, X'ᵢ) for a fixed pair type, convolved
/// per atom with exponentiation by squaring. Lattice channels (and
/// singular ones) are exact; otherwise `grid` must be supplied and the
/// floor/ceil rounding runs give certified bounds.
pub fn sum_distribution(
    nt: &NuTable,
    ch: &DiscreteChannel,
    t: &PairType,
    grid: Option<f64>,
) -> Result<SumDist, OracleError> {
    sum_distribution_with(nt, ch, t, grid, OracleOptions::default().cell_cap)
}

fn sum_distribution_with(
    nt: &NuTable,
    ch: &DiscreteChannel,
    t: &PairType,
    grid: Option<f64>,
    cell_cap: u64,
) -> Result<SumDist, OracleError> {
    if t.counts.len() != nt.atoms().len() {
        return Err(OracleError::BadArguments(format!(
            "type has {} atoms, support has {}",
            t.counts.len(),
            nt.atoms().len()
        )));
    }
    let cc = classify_channel(nt, ch);
    let px = ch.input().probs();
    if cc.singular || cc.nu_span > 0.0 {
        let span = if cc.singular { 1.0 } else { cc.nu_span };
        let dist = convolve_type(nt, px, t, Some(span), None, cell_cap)?;
        Ok(SumDist::Exact(to_lattice(dist, span)))
    } else {
        let delta = grid.ok_or(OracleError::NonLatticeNeedsGrid { n: t.n() })?;
        if delta.is_nan() || delta <= 0.0 {
            return Err(OracleError::BadArguments("grid must be positive".into()));
        }
        let lo = convolve_type(nt, px, t, None, Some((delta, Rounding::Floor)), cell_cap)?;
        let hi = convolve_type(nt, px, t, None, Some((delta, Rounding::Ceil)), cell_cap)?;
        Ok(SumDist::Bounds {
            lower: to_lattice(lo, delta),
            upper: to_lattice(hi, delta),
        })
    }
}

fn convolve_type(
    nt: &NuTable,
    px: &[f64],
    t: &PairType,
    span: Option<f64>,
    grid: Option<(f64, Rounding)>,
    cell_cap: u64,
) -> Result<Dist, OracleError> {
    // Range estimate before any allocation.
    let mut cells = 1.0f64;
    for (a, &c) in t.counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let ad = AtomDist::from_nu_row(nt.row(a), px, span, grid);
        cells += c as f64 * ad.single.len() as f64;
    }
    if cells > cell_cap as f64 {
        return Err(OracleError::CellCapExceeded {
            cells,
            cap: cell_cap,
        });
    }
    let value_repr = span.is_none() && grid.is_none();
    let mut acc = Dist::unit(value_repr);
    for (a, &c) in t.counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let ad = AtomDist::from_nu_row(nt.row(a), px, span, grid);
        acc = acc.convolve(&ad.single.pow(c as usize, value_repr));
    }
    Ok(acc)
}

fn to_lattice(dist: Dist, span: f64) -> LatticeDist {
    let finite = dist.finite_mass();
    match dist {
        Dist::Lat { min, probs } => LatticeDist {
            span,
            min_index: min,
            probs,
            minus_inf_mass: (1.0 - finite).max(0.0),
        },
        Dist::Val { .. } => unreachable!("lattice output from value representation"),
    }
}

// ---------------------------------------------------------------------------
// Exact oracle by joint-type enumeration
// ---------------------------------------------------------------------------

/// The prepared per-group data for one engine pass.
struct GroupedSupport {
    /// Single-symbol distribution per group.
    singles: Vec<Dist>,
    /// Total sent-pair probability per group.
    probs: Vec<f64>,
    /// Group index per support atom.
    atom_group: Vec<usize>,
    value_repr: bool,
}

fn group_support(
    nt: &NuTable,
    px: &[f64],
    span: Option<f64>,
    grid: Option<(f64, Rounding)>,
) -> GroupedSupport {
    let mut singles: Vec<Dist> = Vec::new();
    let mut probs: Vec<f64> = Vec::new();
    let mut keys: Vec<Vec<u64>> = Vec::new();
    let mut atom_group = Vec::with_capacity(nt.atoms().len());
    for (a, atom) in nt.atoms().iter().enumerate() {
        let ad = AtomDist::from_nu_row(nt.row(a), px, span, grid);
        let key = ad.key();
        let g = match keys.iter().position(|k| *k == key) {
            Some(g) => {
                probs[g] += atom.p;
                g
            }
            None => {
                keys.push(key);
                singles.push(ad.single);
                probs.push(atom.p);
                singles.len() - 1
            }
        };
        atom_group.push(g);
    }
    GroupedSupport {
        singles,
        probs,
        atom_group,
        value_repr: span.is_none() && grid.is_none(),
    }
}

/// Number of compositions of n into g nonnegative parts, C(n+g-1, g-1).
fn composition_count(n: usize, g: usize) -> f64 {
    let mut c = 1.0f64;
    for i in 1..g {
        c *= (n + i) as f64 / i as f64;
    }
    c
}

/// Enumerate group-count types recursively; the final group's count is
/// forced, and (p₊, p₀) against its cached powers cost O(|partial|).
fn enumerate_types<F: FnMut(f64, f64, f64)>(
    gs: &GroupedSupport,
    n: usize,
    cell_cap: u64,
    mut leaf: F,
) -> Result<(), OracleError> {
    let g = gs.singles.len();
    let lnfact = LnFactorial::up_to(n);

    // Range guard for the largest convolution.
    let mut cells = 1.0f64;
    for s in &gs.singles {
        cells += n as f64 * s.len() as f64;
    }
    if cells > cell_cap as f64 {
        return Err(OracleError::CellCapExceeded {
            cells,
            cap: cell_cap,
        });
    }

    // Cached powers of the last group, with suffix sums.
    let last = g - 1;
    let mut powers: Vec<SuffixDist> = Vec::with_capacity(n + 1);
    let mut cur = Dist::unit(gs.value_repr);
    powers.push(SuffixDist::new(cur.clone()));
    for _ in 1..=n {
        cur = cur.convolve(&gs.singles[last]);
        powers.push(SuffixDist::new(cur.clone()));
    }

    let log_p: Vec<f64> = gs.probs.iter().map(|&p| p.ln()).collect();

    // Depth-first over group counts for groups 0..last.
    #[allow(clippy::too_many_arguments)]
    fn rec<F: FnMut(f64, f64, f64)>(
        gs: &GroupedSupport,
        powers: &[SuffixDist],
        lnfact: &LnFactorial,
        log_p: &[f64],
        level: usize,
        rem: usize,
        partial: &Dist,
        logw: f64,
        leaf: &mut F,
    ) {
        let last = gs.singles.len() - 1;
        if level == last {
            let full_logw = logw + rem as f64 * log_p[last] - lnfact.get(rem);
            let (pp, pz) = combine_stats(partial, &powers[rem]);
            leaf(full_logw, pp, pz);
            return;
        }
        let mut cur = partial.clone();
        for m in 0..=rem {
            let w = logw + m as f64 * log_p[level] - lnfact.get(m);
            rec(gs, powers, lnfact, log_p, level + 1, rem - m, &cur, w, leaf);
            if m < rem {
                cur = cur.convolve(&gs.singles[level]);
            }
        }
    }

    let unit = Dist::unit(gs.value_repr);
    let base = lnfact.get(n);
    rec(
        gs,
        &powers,
        &lnfact,
        &log_p,
        0,
        n,
        &unit,
        base,
        &mut |logw, pp, pz| leaf(logw, pp, pz),
    );
    Ok(())
}

/// Exact P_RC(n) by joint-type enumeration. Exact (stderr 0) for lattice
/// and singular channels and, at small n, for arbitrary channels via the
/// value engine; nonlattice channels with a grid get a certified interval
/// (midpoint ± half-width).
pub fn exact_prc(
    ch: &DiscreteChannel,
    n: usize,
    m: f64,
    tie: TieRule,
    opts: &OracleOptions,
) -> Result<OracleEstimate, OracleError> {
    if m < 2.0 {
        return Err(OracleError::CodebookTooSmall { m });
    }
    if n == 0 {
        return Err(OracleError::BadArguments("n must be positive".into()));
    }
    let nt = ch.nu_table();
    let cc = classify_channel(&nt, ch);
    let px = ch.input().probs();

    let run = |grid: Option<(f64, Rounding)>, span: Option<f64>| -> Result<f64, OracleError> {
        let gs = group_support(&nt, px, span, grid);
        let types = composition_count(n, gs.singles.len());
        if types > opts.type_cap as f64 {
            return Err(OracleError::TypeCapExceeded {
                types,
                cap: opts.type_cap,
            });
        }
        let mut acc = Accumulator::new();
        let mut wsum = Accumulator::new();
        enumerate_types(&gs, n, opts.cell_cap, |logw, pp, pz| {
            let w = logw.exp();
            wsum.add(w);
            acc.add(w * q_m(pp, pz, m, tie));
        })?;
        debug_assert!(
            (wsum.value() - 1.0).abs() < 1e-9,
            "type weights sum to {}",
            wsum.value()
        );
        Ok(acc.value())
    };

    if cc.singular || cc.nu_span > 0.0 {
        let span = if cc.singular { 1.0 } else { cc.nu_span };
        let value = run(None, Some(span))?;
        Ok(OracleEstimate {
            value,
            stderr: 0.0,
            method: OracleMethod::ExactTypes,
            n,
            m,
            tie,
        })
    } else if let Some(delta) = opts.grid {
        if delta.is_nan() || delta <= 0.0 {
            return Err(OracleError::BadArguments("grid must be positive".into()));
        }
        let lo = run(Some((delta, Rounding::Floor)), None)?;
        let hi = run(Some((delta, Rounding::Ceil)), None)?;
        Ok(OracleEstimate {
            value: 0.5 * (lo + hi),
            stderr: 0.5 * (hi - lo).max(0.0),
            method: OracleMethod::ExactTypes,
            n,
            m,
            tie,
        })
    } else if n <= VALUE_ENGINE_MAX_N {
        let value = run(None, None)?;
        Ok(OracleEstimate {
            value,
            stderr: 0.0,
            method: OracleMethod::ExactTypes,
            n,
            m,
            tie,
        })
    } else {
        Err(OracleError::NonLatticeNeedsGrid { n })
    }
}

// ---------------------------------------------------------------------------
// Monte Carlo oracle with exponential tilting
// ---------------------------------------------------------------------------

/// Importance-sampled P_RC(n): draw (x, y)^n i.i.d. from the ρ-tilted atom
/// distribution, weight by exp(nΛ(ρ) - ρ Σ z₀), and evaluate q_M at the
/// exact (p₊, p₀) of each sampled type. Deterministic for a fixed
/// (seed, samples) regardless of thread count.
#[allow(clippy::too_many_arguments)]
pub fn mc_prc(
    ch: &DiscreteChannel,
    ra: &RateAnalysis,
    n: usize,
    m: f64,
    tie: TieRule,
    samples: usize,
    seed: u64,
    opts: &OracleOptions,
) -> Result<OracleEstimate, OracleError> {
    if m < 2.0 {
        return Err(OracleError::CodebookTooSmall { m });
    }
    if samples < 100 {
        return Err(OracleError::TooFewSamples { samples });
    }
    let nt = ch.nu_table();
    let cc = classify_channel(&nt, ch);
    let px = ch.input().probs();
    let rho = opts.force_rho.unwrap_or(ra.rho);
    let zs = crate::exponent::z_support(ch, ra.eta);
    let sampler = tilted_sampler(&zs, rho);
    let z0: Vec<f64> = zs.atoms.iter().map(|a| a.z0).collect();
    let lambda = sampler.lambda();

    // Engine setups: one for exact channels, two (floor/ceil) for grid mode.
    let setups: Vec<GroupedSupport> = if cc.singular || cc.nu_span > 0.0 {
        let span = if cc.singular { 1.0 } else { cc.nu_span };
        vec![group_support(&nt, px, Some(span), None)]
    } else if let Some(delta) = opts.grid {
        vec![
            group_support(&nt, px, None, Some((delta, Rounding::Floor))),
            group_support(&nt, px, None, Some((delta, Rounding::Ceil))),
        ]
    } else if n <= VALUE_ENGINE_MAX_N {
        vec![group_support(&nt, px, None, None)]
    } else {
        return Err(OracleError::NonLatticeNeedsGrid { n });
    };
    let bounded = setups.len() == 2;

    // Cached powers per setup per group; the last group carries suffix sums.
    struct SetupCache {
        atom_group: Vec<usize>,
        num_groups: usize,
        value_repr: bool,
        mid_powers: Vec<Vec<Dist>>,
        last_powers: Vec<SuffixDist>,
    }
    let mut caches = Vec::new();
    for gs in &setups {
        let g = gs.singles.len();
        let mut cells = 1.0f64;
        for s in &gs.singles {
            cells += n as f64 * s.len() as f64;
        }
        if cells * (n as f64) > opts.cell_cap as f64 {
            return Err(OracleError::CellCapExceeded {
                cells: cells * n as f64,
                cap: opts.cell_cap,
            });
        }
        let mut mid_powers = Vec::new();
        for gi in 0..g.saturating_sub(1) {
            let mut v = Vec::with_capacity(n + 1);
            let mut cur = Dist::unit(gs.value_repr);
            v.push(cur.clone());
            for _ in 1..=n {
                cur = cur.convolve(&gs.singles[gi]);
                v.push(cur.clone());
            }
            mid_powers.push(v);
        }
        let mut last_powers = Vec::with_capacity(n + 1);
        let mut cur = Dist::unit(gs.value_repr);
        last_powers.push(SuffixDist::new(cur.clone()));
        for _ in 1..=n {
            cur = cur.convolve(&gs.singles[g - 1]);
            last_powers.push(SuffixDist::new(cur.clone()));
        }
        caches.push(SetupCache {
            atom_group: gs.atom_group.clone(),
            num_groups: g,
            value_repr: gs.value_repr,
            mid_powers,
            last_powers,
        });
    }

    let num_atoms = nt.atoms().len();
    let eval_sample = |idx: u64| -> (f64, f64) {
        let mut rng = SplitMix64::for_sample(seed, idx);
        let mut counts = vec![0u32; num_atoms];
        for _ in 0..n {
            counts[sampler.sample(rng.next_f64())] += 1;
        }
        let mut z_sum = 0.0;
        for (a, &c) in counts.iter().enumerate() {
            if c > 0 {
                z_sum += c as f64 * z0[a];
            }
        }
        let weight = (n as f64 * lambda - rho * z_sum).exp();
        let mut qs = [0.0f64; 2];
        for (si, cache) in caches.iter().enumerate() {
            let mut gcounts = vec![0usize; cache.num_groups];
            for (a, &c) in counts.iter().enumerate() {
                gcounts[cache.atom_group[a]] += c as usize;
            }
            let mut partial = Dist::unit(cache.value_repr);
            for (gi, powers) in cache.mid_powers.iter().enumerate() {
                if gcounts[gi] > 0 {
                    partial = partial.convolve(&powers[gcounts[gi]]);
                }
            }
            let (pp, pz) =
                combine_stats(&partial, &cache.last_powers[gcounts[cache.num_groups - 1]]);
            qs[si] = q_m(pp, pz, m, tie);
        }
        if bounded {
            (weight * qs[0], weight * qs[1])
        } else {
            (weight * qs[0], weight * qs[0])
        }
    };

    // Fixed-size chunks reduced in index order: bitwise identical for any
    // worker count.
    const CHUNK: usize = 1024;
    let num_chunks = samples.div_ceil(CHUNK);
    #[derive(Clone, Copy, Default)]
    struct ChunkOut {
        sum_lo: f64,
        sum_hi: f64,
        sumsq_mid: f64,
    }
    let threads = opts
        .threads
        .or_else(|| {
            std::env::var("EXACTRC_THREADS")
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(1)
        .max(1);

    let results: Vec<ChunkOut> = {
        let mut results = vec![ChunkOut::default(); num_chunks];
        let next = AtomicUsize::new(0);
        let slots = Mutex::new(&mut results);
        std::thread::scope(|scope| {
            for _ in 0..threads.min(num_chunks) {
                scope.spawn(|| loop {
                    let c = next.fetch_add(1, Ordering::Relaxed);
                    if c >= num_chunks {
                        break;
                    }
                    let lo = c * CHUNK;
                    let hi = ((c + 1) * CHUNK).min(samples);
                    let mut out = ChunkOut::default();
                    for idx in lo..hi {
                        let (vlo, vhi) = eval_sample(idx as u64);
                        let mid = 0.5 * (vlo + vhi);
                        out.sum_lo += vlo;
                        out.sum_hi += vhi;
                        out.sumsq_mid += mid * mid;
                    }
                    slots.lock().expect("no poisoned chunk slots")[c] = out;
                });
            }
        });
        results
    };

    let mut sum_lo = Accumulator::new();
    let mut sum_hi = Accumulator::new();
    let mut sumsq = Accumulator::new();
    for r in &results {
        sum_lo.add(r.sum_lo);
        sum_hi.add(r.sum_hi);
        sumsq.add(r.sumsq_mid);
    }
    let sn = samples as f64;
    let mean_lo = sum_lo.value() / sn;
    let mean_hi = sum_hi.value() / sn;
    let mean = 0.5 * (mean_lo + mean_hi);
    let var = ((sumsq.value() - sn * mean * mean) / (sn - 1.0)).max(0.0);
    let mc_se = (var / sn).sqrt();
    Ok(OracleEstimate {
        value: mean,
        stderr: mc_se + 0.5 * (mean_hi - mean_lo).max(0.0),
        method: OracleMethod::MonteCarloIS,
        n,
        m,
        tie,
    })
}

// ---------------------------------------------------------------------------
// Brute-force oracle
// ---------------------------------------------------------------------------

/// Exact expectation over all codebooks, outputs, and tie outcomes, by
/// direct enumeration. Ties are averaged analytically: with k codewords
/// tied at the maximum (sent one included) the error contribution is
/// (k-1)/k. Independent of the q_M algebra and of the type decomposition.
pub fn brute_force_prc(
    ch: &DiscreteChannel,
    n: usize,
    m: u32,
    tie: TieRule,
) -> Result<OracleEstimate, OracleError> {
    if m < 2 {
        return Err(OracleError::CodebookTooSmall { m: m as f64 });
    }
    let nx = ch.num_inputs();
    let ny = ch.num_outputs();
    let states = (nx as f64).powi((n * m as usize) as i32) * (ny as f64).powi(n as i32);
    if states > 1e8 {
        return Err(OracleError::SizeCapExceeded { states });
    }
    let px = ch.input().probs();
    let words: Vec<Vec<usize>> = all_words(nx, n);
    let word_prob: Vec<f64> = words
        .iter()
        .map(|w| w.iter().map(|&x| px[x]).product())
        .collect();
    let outputs: Vec<Vec<usize>> = all_words(ny, n);

    let mut total = Accumulator::new();
    for (sent, &psent) in words.iter().zip(&word_prob) {
        for y in &outputs {
            let py: f64 = sent
                .iter()
                .zip(y)
                .map(|(&x, &yy)| ch.transition(x, yy))
                .product();
            if py == 0.0 {
                continue;
            }
            // Per competitor word: Δ = Σ ν(sent_i, y_i, w_i), classified
            // against zero with the shared tie tolerance.
            let deltas: Vec<f64> = words
                .iter()
                .map(|w| {
                    let mut d = 0.0;
                    for i in 0..n {
                        let ws = ch.transition(sent[i], y[i]);
                        let wc = ch.transition(w[i], y[i]);
                        if wc == 0.0 {
                            return f64::NEG_INFINITY;
                        }
                        d += (wc / ws).ln();
                    }
                    d
                })
                .collect();
            // Enumerate all (M-1)-tuples of competitors.
            let mut err = Accumulator::new();
            let kmax = words.len().pow(m - 1);
            for code in 0..kmax {
                let mut c = code;
                let mut pcode = 1.0f64;
                let mut beats = 0u32;
                let mut ties = 0u32;
                for _ in 0..(m - 1) {
                    let wi = c % words.len();
                    c /= words.len();
                    pcode *= word_prob[wi];
                    let d = deltas[wi];
                    if d > TIE_TOL {
                        beats += 1;
                    } else if d >= -TIE_TOL {
                        ties += 1;
                    }
                }
                let e = match tie {
                    TieRule::UniformRandom => {
                        if beats > 0 {
                            1.0
                        } else if ties > 0 {
                            ties as f64 / (ties as f64 + 1.0)
                        } else {
                            0.0
                        }
                    }
                    TieRule::TieAsError => {
                        if beats + ties > 0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                };
                if e > 0.0 {
                    err.add(pcode * e);
                }
            }
            total.add(psent * py * err.value());
        }
    }
    Ok(OracleEstimate {
        value: total.value(),
        stderr: 0.0,
        method: OracleMethod::BruteForce,
        n,
        m: m as f64,
        tie,
    })
}

fn all_words(alphabet: usize, n: usize) -> Vec<Vec<usize>> {
    let mut words = vec![Vec::new()];
    for _ in 0..n {
        let mut next = Vec::with_capacity(words.len() * alphabet);
        for w in &words {
            for s in 0..alphabet {
                let mut w2 = w.clone();
                w2.push(s);
                next.push(w2);
            }
        }
        words = next;
    }
    words
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponent::solve_exponent;
    use proptest::prelude::*;

    #[test]
    fn q_m_hand_values() {
        // One competitor that ties with probability q loses the coin flip
        // half the time.
        assert!((q_m(0.0, 0.3, 2.0, TieRule::UniformRandom) - 0.15).abs() < 1e-15);
        // p₀ → 0 limit.
        let q = q_m(0.2, 0.0, 5.0, TieRule::UniformRandom);
        assert!((q - (1.0 - 0.8f64.powi(4))).abs() < 1e-15);
        // Hand arithmetic from the closed form.
        let q = q_m(0.25, 0.25, 3.0, TieRule::UniformRandom);
        let want = 1.0 - (0.75f64.powi(3) - 0.5f64.powi(3)) / 0.75;
        assert!((q - want).abs() < 1e-15);
        assert!((want - 0.604_166_666_666_666_7).abs() < 1e-15);
        // Tie-as-error closed form.
        let q = q_m(0.1, 0.2, 4.0, TieRule::TieAsError);
        assert!((q - (1.0 - 0.7f64.powi(3))).abs() < 1e-15);
    }

    #[test]
    fn q_m_series_and_direct_paths_agree() {
        // Straddle the crossover (m-1)x = 1e-3 and compare against exact
        // 128-bit-ish reference via rug-free long arithmetic: use the
        // direct formula at f64 with Kahan-refined powers as reference on
        // moderate values where it is well-conditioned.
        // Everything ties: q_M = 1 - 1/M exactly.
        assert!((q_m(0.0, 1.0, 7.0, TieRule::UniformRandom) - 6.0 / 7.0).abs() < 1e-15);
        for &(s, t, m) in &[
            (1e-6, 1e-6, 1000.0),
            (4.9e-7, 1e-7, 2000.0),
            (5.1e-7, 1e-7, 2000.0),
            (1e-9, 3e-9, 100.0),
            (0.3, 0.2, 2.0),
        ] {
            let q = q_m(s, t, m, TieRule::UniformRandom);
            // Reference: Σ over i of C(M-1,i) t^i (1-s-t)^{M-1-i} (i/(i+1))
            // plus 1-(1-s)^{M-1}, evaluated term by term (converges fast).
            let mut reference = -((m - 1.0) * (-s).ln_1p()).exp_m1();
            let mut comb = 1.0f64;
            for i in 1..=60u32 {
                comb *= (m - i as f64) / i as f64;
                let term = comb
                    * t.powi(i as i32)
                    * ((m - 1.0 - i as f64) * (-(s + t)).ln_1p()).exp()
                    * (1.0 - 1.0 / (i as f64 + 1.0));
                reference += term;
                if term < 1e-30 * reference.max(1e-300) {
                    break;
                }
            }
            let rel = (q - reference).abs() / reference.max(1e-300);
            assert!(rel < 1e-10, "s={s} t={t} m={m}: {q} vs {reference}");
        }
    }

    proptest! {
        #[test]
        fn q_m_monotone_in_all_arguments(
            s in 0.0f64..0.5,
            t in 0.0f64..0.3,
            ds in 1e-6f64..0.1,
            dt in 1e-6f64..0.1,
            m in 2u32..200,
        ) {
            prop_assume!(s + t + ds + dt <= 0.999);
            let base = q_m(s, t, m as f64, TieRule::UniformRandom);
            prop_assert!(q_m(s + ds, t, m as f64, TieRule::UniformRandom) >= base - 1e-12);
            prop_assert!(q_m(s, t + dt, m as f64, TieRule::UniformRandom) >= base - 1e-12);
            prop_assert!(q_m(s, t, (m + 1) as f64, TieRule::UniformRandom) >= base - 1e-12);
            // Ties-as-error dominates uniform tie breaking pointwise.
            prop_assert!(q_m(s, t, m as f64, TieRule::TieAsError) >= base - 1e-12);
        }
    }

    #[test]
    fn sum_distribution_single_symbol_identity() {
        let ch = DiscreteChannel::bsc(0.1);
        let nt = ch.nu_table();
        // Atom 0 is (x=0, y=0): increments 0 w.p. 1/2, -log 9 w.p. 1/2.
        let t = PairType {
            counts: vec![1, 0, 0, 0],
        };
        match sum_distribution(&nt, &ch, &t, None).unwrap() {
            SumDist::Exact(d) => {
                assert!((d.span - 9f64.ln()).abs() < 1e-9);
                assert!((d.p_zero() - 0.5).abs() < 1e-15);
                assert!((d.p_plus()).abs() < 1e-15);
                assert!((d.minus_inf_mass).abs() < 1e-12);
            }
            _ => panic!("BSC is lattice"),
        }
    }

    #[test]
    fn sum_distribution_two_symbol_enumeration() {
        // Two correct symbols: competitor sum is 0 w.p. 1/4, -log9 w.p. 1/2,
        // -2log9 w.p. 1/4 (direct enumeration over the 4 competitor pairs).
        let ch = DiscreteChannel::bsc(0.1);
        let nt = ch.nu_table();
        let t = PairType {
            counts: vec![2, 0, 0, 0],
        };
        match sum_distribution(&nt, &ch, &t, None).unwrap() {
            SumDist::Exact(d) => {
                assert!((d.p_zero() - 0.25).abs() < 1e-15);
                assert!(d.p_plus().abs() < 1e-15);
                let mass: f64 = d.probs.iter().sum();
                assert!((mass - 1.0).abs() < 1e-12);
            }
            _ => panic!("BSC is lattice"),
        }
    }

    #[test]
    fn sum_distribution_singular_concentrates_at_zero() {
        let ch = DiscreteChannel::bec(0.4);
        let nt = ch.nu_table();
        // Type: 3 correct receptions of x=0, 2 erasures.
        let t = PairType {
            counts: vec![3, 2, 0, 0],
        };
        match sum_distribution(&nt, &ch, &t, None).unwrap() {
            SumDist::Exact(d) => {
                assert_eq!(d.p_plus(), 0.0);
                // p0 = (1/2)^3 (competitor matches the sent symbol on each
                // unerased position).
                assert!((d.p_zero() - 0.125).abs() < 1e-15);
                assert!((d.minus_inf_mass - (1.0 - 0.125)).abs() < 1e-12);
            }
            _ => panic!("BEC is singular"),
        }
    }

    #[test]
    fn grid_bounds_are_tight_on_own_span_and_bracket_otherwise() {
        let ch = DiscreteChannel::bsc(0.17);
        let nt = ch.nu_table();
        let span = classify_channel(&nt, &ch).nu_span;
        let t = PairType {
            counts: vec![3, 1, 2, 1],
        };
        let exact = match sum_distribution(&nt, &ch, &t, None).unwrap() {
            SumDist::Exact(d) => d,
            _ => unreachable!(),
        };
        // Pretend the channel is nonlattice by supplying its own span as a
        // grid: forcing the grid path through a synthetic nonlattice channel
        // is done below; here we exercise the public grid argument on a
        // lattice channel, which ignores it and stays exact.
        match sum_distribution(&nt, &ch, &t, Some(span)).unwrap() {
            SumDist::Exact(d) => {
                assert_eq!(d.min_index, exact.min_index);
            }
            _ => panic!("grid must be ignored for lattice channels"),
        }

        // Now a genuinely nonlattice channel.
        let (ch, _) = DiscreteChannel::new(
            vec![0.5, 0.5],
            vec![vec![0.62, 0.23, 0.15], vec![0.1, 0.52, 0.38]],
        )
        .unwrap();
        let nt = ch.nu_table();
        let t = PairType {
            counts: vec![2, 1, 0, 0, 1, 1],
        };
        let (lo, hi) = match sum_distribution(&nt, &ch, &t, Some(0.05)).unwrap() {
            SumDist::Bounds { lower, upper } => (lower, upper),
            _ => panic!("nonlattice channel must produce bounds"),
        };
        assert!(lo.p_plus() <= hi.p_plus() + 1e-12);
        // Index 0 carries at least the unrounded exact-tie mass: every
        // symbol's competitor picks the sent input, (1/2)^5 here.
        let all_zero = 0.5f64.powi(5);
        assert!(lo.p_zero() >= all_zero - 1e-12);
        assert!(hi.p_zero() >= all_zero - 1e-12);
    }

    #[test]
    fn exact_matches_hand_computation_n1_m2() {
        // BSC(0.1), n = 1, M = 2: enumerate the four (x, y) atoms and the
        // two competitor symbols by hand.
        let p = 0.1f64;
        let ch = DiscreteChannel::bsc(p);
        // Correct reception (prob 0.9): competitor ties w.p. 1/2 (picks the
        // sent symbol), loses otherwise. Incorrect reception (prob 0.1):
        // competitor ties w.p. 1/2, wins w.p. 1/2.
        let want_uniform = 0.9 * (0.5 * 0.5) + 0.1 * (0.5 + 0.5 * 0.5);
        let got = exact_prc(
            &ch,
            1,
            2.0,
            TieRule::UniformRandom,
            &OracleOptions::default(),
        )
        .unwrap();
        assert!((got.value - want_uniform).abs() < 1e-15);
        // Tie-as-error, n = 1, M = 2: error iff competitor likelihood ≥ sent.
        let want_tie = 0.9 * 0.5 + 0.1 * 1.0;
        let got = exact_prc(&ch, 1, 2.0, TieRule::TieAsError, &OracleOptions::default()).unwrap();
        assert!((got.value - want_tie).abs() < 1e-15);
    }

    #[test]
    fn brute_force_hand_cases() {
        // Noiseless binary channel, n = 1, M = 2: competitor equals the sent
        // word w.p. 1/2 and the coin flip loses half of those.
        let ch = DiscreteChannel::bsc(0.0);
        let got = brute_force_prc(&ch, 1, 2, TieRule::UniformRandom).unwrap();
        assert!((got.value - 0.25).abs() < 1e-15);
        // Pure-noise channel: everything ties, M = 2 loses half the flips.
        let ch = DiscreteChannel::bsc(0.5);
        let got = brute_force_prc(&ch, 2, 2, TieRule::UniformRandom).unwrap();
        assert!((got.value - 0.5).abs() < 1e-15);
        // And with ties as errors the pure-noise channel always errs.
        let got = brute_force_prc(&ch, 2, 2, TieRule::TieAsError).unwrap();
        assert!((got.value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exact_equals_brute_force_on_lattice_and_random_channels() {
        let opts = OracleOptions::default();
        // Lattice channel.
        let ch = DiscreteChannel::bsc(0.3);
        for n in [2usize, 3] {
            for m in [2u32, 3] {
                for tie in [TieRule::UniformRandom, TieRule::TieAsError] {
                    let e = exact_prc(&ch, n, m as f64, tie, &opts).unwrap();
                    let b = brute_force_prc(&ch, n, m, tie).unwrap();
                    assert!(
                        (e.value - b.value).abs() < 1e-12,
                        "BSC n={n} m={m}: {} vs {}",
                        e.value,
                        b.value
                    );
                }
            }
        }
        // Random (nonlattice) channels through the value engine.
        for seed in 0..6u64 {
            let ch = crate::channel::random_channel(seed, 2, 2);
            for tie in [TieRule::UniformRandom, TieRule::TieAsError] {
                let e = exact_prc(&ch, 3, 3.0, tie, &opts).unwrap();
                let b = brute_force_prc(&ch, 3, 3, tie).unwrap();
                assert!(
                    (e.value - b.value).abs() < 1e-12,
                    "seed {seed}: {} vs {}",
                    e.value,
                    b.value
                );
            }
        }
    }

    #[test]
    fn grid_interval_brackets_value_engine() {
        let ch = crate::channel::random_channel(3, 2, 3);
        let opts = OracleOptions::default();
        let exact = exact_prc(&ch, 5, 4.0, TieRule::UniformRandom, &opts).unwrap();
        let gridded = exact_prc(
            &ch,
            5,
            4.0,
            TieRule::UniformRandom,
            &OracleOptions {
                grid: Some(0.01),
                ..OracleOptions::default()
            },
        )
        .unwrap();
        assert!(gridded.stderr > 0.0);
        assert!(
            (exact.value - gridded.value).abs() <= gridded.stderr + 1e-12,
            "exact {} not inside {} ± {}",
            exact.value,
            gridded.value,
            gridded.stderr
        );
    }

    #[test]
    fn mc_agrees_with_exact_and_is_deterministic() {
        let ch = DiscreteChannel::bsc(0.2);
        let r = 0.5 * ch.mutual_information();
        let ra = solve_exponent(&ch, r).unwrap();
        let (m, _) = effective_codebook(20, r);
        let opts = OracleOptions::default();
        let exact = exact_prc(&ch, 20, m, TieRule::UniformRandom, &opts).unwrap();
        let mc = mc_prc(&ch, &ra, 20, m, TieRule::UniformRandom, 20_000, 7, &opts).unwrap();
        let z = (mc.value - exact.value).abs() / mc.stderr;
        assert!(z <= 4.0, "z = {z}: mc {} exact {}", mc.value, exact.value);

        // Forced rho = 0 reduces to naive Monte Carlo; still unbiased.
        let naive = mc_prc(
            &ch,
            &ra,
            20,
            m,
            TieRule::UniformRandom,
            20_000,
            7,
            &OracleOptions {
                force_rho: Some(0.0),
                ..OracleOptions::default()
            },
        )
        .unwrap();
        let z = (naive.value - exact.value).abs() / naive.stderr.max(1e-300);
        assert!(z <= 4.0, "naive z = {z}");

        // Thread count must not change a single bit.
        for threads in [1usize, 4, 8] {
            let run = mc_prc(
                &ch,
                &ra,
                20,
                m,
                TieRule::UniformRandom,
                20_000,
                7,
                &OracleOptions {
                    threads: Some(threads),
                    ..OracleOptions::default()
                },
            )
            .unwrap();
            assert_eq!(run.value.to_bits(), mc.value.to_bits());
            assert_eq!(run.stderr.to_bits(), mc.stderr.to_bits());
        }
    }

    #[test]
    fn mc_grid_bounds_track_exact_grid_bounds() {
        // Nonlattice channel past the value-engine range: both oracles run
        // in grid mode, and the Monte Carlo interval must cover the exact
        // one up to sampling noise.
        let (ch, _) = DiscreteChannel::new(
            vec![0.5, 0.5],
            vec![vec![0.62, 0.23, 0.15], vec![0.1, 0.52, 0.38]],
        )
        .unwrap();
        let n = 24usize;
        let r = 0.5 * ch.mutual_information();
        let (m, rn) = effective_codebook(n, r);
        let ra = solve_exponent(&ch, rn).unwrap();
        let opts = OracleOptions {
            grid: Some(0.02),
            ..OracleOptions::default()
        };
        let exact = exact_prc(&ch, n, m, TieRule::UniformRandom, &opts).unwrap();
        let mc = mc_prc(&ch, &ra, n, m, TieRule::UniformRandom, 30_000, 11, &opts).unwrap();
        assert!(mc.stderr > 0.0 && exact.stderr > 0.0);
        assert!(
            (mc.value - exact.value).abs() <= 4.0 * (mc.stderr + exact.stderr),
            "mc {}±{} vs exact {}±{}",
            mc.value,
            mc.stderr,
            exact.value,
            exact.stderr
        );
    }

    #[test]
    fn mc_handles_many_atom_groups() {
        // Lattice ν (ratios powers of 4) with nonuniform input: five
        // distinct competitor-increment groups, so the per-sample fold
        // convolves cached mid-group powers before the suffix combine.
        let (ch, _) = DiscreteChannel::new(
            vec![0.3, 0.7],
            vec![
                vec![4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0],
                vec![1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0],
            ],
        )
        .unwrap();
        let n = 40usize;
        let r = 0.5 * ch.mutual_information();
        let (m, rn) = effective_codebook(n, r);
        let ra = solve_exponent(&ch, rn).unwrap();
        let opts = OracleOptions::default();
        let exact = exact_prc(&ch, n, m, TieRule::UniformRandom, &opts).unwrap();
        let mc = mc_prc(&ch, &ra, n, m, TieRule::UniformRandom, 30_000, 9, &opts).unwrap();
        let z = (mc.value - exact.value).abs() / mc.stderr;
        assert!(z <= 4.0, "z = {z}: mc {} exact {}", mc.value, exact.value);
    }

    #[test]
    fn mc_importance_weights_average_to_one() {
        let ch = DiscreteChannel::bsc(0.11);
        let r = 0.8 * ch.mutual_information();
        let ra = solve_exponent(&ch, r).unwrap();
        let zs = crate::exponent::z_support(&ch, ra.eta);
        let sampler = tilted_sampler(&zs, ra.rho);
        let z0: Vec<f64> = zs.atoms.iter().map(|a| a.z0).collect();
        let n = 50usize;
        let samples = 40_000usize;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for idx in 0..samples {
            let mut rng = SplitMix64::for_sample(3, idx as u64);
            let mut z_sum = 0.0;
            for _ in 0..n {
                z_sum += z0[sampler.sample(rng.next_f64())];
            }
            let w = (n as f64 * sampler.lambda() - ra.rho * z_sum).exp();
            sum += w;
            sumsq += w * w;
        }
        let mean = sum / samples as f64;
        let se = ((sumsq / samples as f64 - mean * mean) / samples as f64).sqrt();
        assert!((mean - 1.0).abs() <= 4.0 * se, "weight mean {mean} se {se}");
    }

    #[test]
    fn mc_relative_error_stays_small_above_critical() {
        // The tilted estimator's relative variance is bounded on this
        // instance: 1e5 samples give well under 2% relative standard error
        // even at n = 200 where P_RC is ~1e-3.
        let ch = DiscreteChannel::bsc(0.11);
        let r = 0.5 * (crate::exponent::critical_rate(&ch) + ch.mutual_information());
        let (m, rn) = effective_codebook(200, r);
        let ra = solve_exponent(&ch, rn).unwrap();
        let est = mc_prc(
            &ch,
            &ra,
            200,
            m,
            TieRule::UniformRandom,
            100_000,
            5,
            &OracleOptions::default(),
        )
        .unwrap();
        assert!(
            est.stderr / est.value <= 0.02,
            "relative stderr {}",
            est.stderr / est.value
        );
    }

    #[test]
    fn tie_as_error_dominates_pointwise() {
        let ch = DiscreteChannel::bsc(0.25);
        let opts = OracleOptions::default();
        for n in [2usize, 4, 8] {
            for m in [2.0f64, 6.0, 64.0] {
                let u = exact_prc(&ch, n, m, TieRule::UniformRandom, &opts).unwrap();
                let t = exact_prc(&ch, n, m, TieRule::TieAsError, &opts).unwrap();
                assert!(t.value >= u.value - 1e-15);
            }
        }
    }

    #[test]
    fn caps_and_argument_errors() {
        let ch = DiscreteChannel::bsc(0.1);
        assert!(matches!(
            exact_prc(
                &ch,
                5,
                1.0,
                TieRule::UniformRandom,
                &OracleOptions::default()
            ),
            Err(OracleError::CodebookTooSmall { .. })
        ));
        let tiny = OracleOptions {
            type_cap: 2,
            ..OracleOptions::default()
        };
        assert!(matches!(
            exact_prc(&ch, 50, 4.0, TieRule::UniformRandom, &tiny),
            Err(OracleError::TypeCapExceeded { .. })
        ));
        let ch_nl = crate::channel::random_channel(1, 2, 2);
        assert!(matches!(
            exact_prc(
                &ch_nl,
                40,
                4.0,
                TieRule::UniformRandom,
                &OracleOptions::default()
            ),
            Err(OracleError::NonLatticeNeedsGrid { .. })
        ));
        assert!(matches!(
            brute_force_prc(&ch, 12, 4, TieRule::UniformRandom),
            Err(OracleError::SizeCapExceeded { .. })
        ));
        let ra = solve_exponent(&ch, 0.1).unwrap();
        assert!(matches!(
            mc_prc(
                &ch,
                &ra,
                10,
                4.0,
                TieRule::UniformRandom,
                10,
                1,
                &OracleOptions::default()
            ),
            Err(OracleError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn effective_codebook_rounds_up() {
        let (m, rn) = effective_codebook(10, 0.3);
        assert_eq!(m, 21.0); // e^3 = 20.09 → 21
        assert!(rn >= 0.3);
        assert!((rn - m.ln() / 10.0).abs() < 1e-15);
        let (m, _) = effective_codebook(4, 0.01);
        assert_eq!(m, 2.0);
    }
}
