//! Structural classification of channels and (channel, rate) pairs.
//!
//! Three independent facts decide which asymptotic branch applies:
//!
//! * **singular** — every finite ν equals 0, i.e. a competitor either ties
//!   exactly or is impossible;
//! * **ν-lattice span h** — the largest h with all finite ν values in hℤ
//!   (h = 0 encodes nonlattice; the offset is always 0 since ν(x,y,x) = 0);
//! * **(h', a')-lattice pair** — whether Z(η) is supported on a' + h'ℤ,
//!   plus pseudo-symmetry: Z'(η) an affine function of Z(η).
//!
//! These definitions are exact-real statements; over floats the lattice
//! tests use a real-Euclid gcd with relative tolerance [`LATTICE_REL_TOL`]
//! followed by a residue verification pass. Channels that are nearly but
//! not quite commensurable are declared nonlattice rather than guessed.

use crate::channel::{DiscreteChannel, NuTable};
use crate::exponent::ZSupport;
use crate::tilt::TiltedStats;

/// Relative tolerance for lattice detection over floats.
pub const LATTICE_REL_TOL: f64 = 1e-9;

/// Residue acceptance threshold for the verification pass, relative to the
/// candidate span.
const RESIDUE_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelClass {
    pub singular: bool,
    /// ν-lattice span in nats; 0 encodes nonlattice (and singular channels).
    pub nu_span: f64,
    /// Rows are permutations of one row and columns permutations of one column.
    pub strongly_symmetric: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZLattice {
    pub h_prime: f64,
    /// Offset normalized to [0, h').
    pub a_prime: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairClass {
    pub z_lattice: Option<ZLattice>,
    pub pseudo_symmetric: bool,
}

/// Span diagnostics for CLI output when a channel is declared nonlattice.
#[derive(Debug, Clone, Copy)]
pub struct LatticeScan {
    pub span: Option<f64>,
    /// The candidate the gcd cascade collapsed to (or the accepted span).
    pub candidate: f64,
    /// Largest residue of any pairwise difference against the candidate,
    /// relative to the candidate.
    pub max_residue: f64,
}

/// Largest h > 0 such that every pairwise difference of `values` is an
/// integer multiple of h (within `tol`, relative to the largest magnitude).
///
/// Real-Euclid gcd over the sorted distinct differences, then a residue
/// verification pass; `None` when the gcd collapses below the cutoff
/// (nonlattice) or when fewer than two distinct values exist.
///
/// Offset-zero callers (the ν table) must include 0 among the values —
/// it is then a difference like any other, so the gcd divides the values
/// themselves.
pub fn real_lattice_span(values: &[f64], tol: f64) -> Option<f64> {
    lattice_scan(values, tol).span
}

pub fn lattice_scan(values: &[f64], tol: f64) -> LatticeScan {
    let none = LatticeScan {
        span: None,
        candidate: 0.0,
        max_residue: f64::INFINITY,
    };
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return none;
    }
    let scale = values.iter().fold(1.0f64, |m, &v| m.max(v.abs()));
    let cutoff = tol * scale;

    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    sorted.dedup_by(|a, b| (*a - *b).abs() <= cutoff);
    if sorted.len() < 2 {
        return none;
    }

    let mut diffs = Vec::new();
    for i in 0..sorted.len() {
        for j in (i + 1)..sorted.len() {
            diffs.push(sorted[j] - sorted[i]);
        }
    }
    diffs.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));

    let mut g = diffs[0];
    for &d in &diffs[1..] {
        g = real_gcd(g, d, cutoff);
        if g <= cutoff {
            return LatticeScan {
                span: None,
                candidate: g,
                max_residue: f64::INFINITY,
            };
        }
    }

    // Verification pass: every difference must sit on the g-grid, i.e.
    // its residue must stay below RESIDUE_TOL·g.
    let max_residue = diffs
        .iter()
        .map(|&d| (d / g - (d / g).round()).abs())
        .fold(0.0f64, f64::max);
    if max_residue > RESIDUE_TOL {
        return LatticeScan {
            span: None,
            candidate: g,
            max_residue,
        };
    }
    LatticeScan {
        span: Some(g),
        candidate: g,
        max_residue,
    }
}

fn real_gcd(a: f64, b: f64, cutoff: f64) -> f64 {
    let (mut a, mut b) = (a.abs().max(b.abs()), a.abs().min(b.abs()));
    while b > cutoff {
        let r = a - b * (a / b).round();
        a = b;
        b = r.abs();
    }
    a
}

/// Singularity, ν-lattice span, and strong symmetry of the channel itself.
pub fn classify_channel(nt: &NuTable, ch: &DiscreteChannel) -> ChannelClass {
    let finite = nt.finite_values();
    let singular = finite.iter().all(|v| v.abs() <= 1e-12);
    let nu_span = if singular {
        0.0
    } else {
        // 0 is always among the finite values (ν(x,y,x) = 0), so the gcd of
        // differences divides every ν value itself: offset 0 by construction.
        real_lattice_span(&finite, LATTICE_REL_TOL).unwrap_or(0.0)
    };
    ChannelClass {
        singular,
        nu_span,
        strongly_symmetric: strongly_symmetric(ch),
    }
}

fn strongly_symmetric(ch: &DiscreteChannel) -> bool {
    let m = ch.matrix();
    let sorted = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        s
    };
    let row0 = sorted(&m[0]);
    let rows_ok = m.iter().all(|r| multiset_eq(&sorted(r), &row0));
    if !rows_ok {
        return false;
    }
    let col = |j: usize| -> Vec<f64> { m.iter().map(|r| r[j]).collect() };
    let col0 = sorted(&col(0));
    (0..ch.num_outputs()).all(|j| multiset_eq(&sorted(&col(j)), &col0))
}

fn multiset_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12)
}

/// Lattice structure and pseudo-symmetry of (Z(η), Z'(η)) at the solved η.
pub fn classify_pair(zs: &ZSupport, stats: &TiltedStats) -> PairClass {
    let mut z0s: Vec<f64> = zs.atoms.iter().map(|a| a.z0).collect();
    z0s.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let scale = z0s.iter().fold(1.0f64, |m, &v| m.max(v.abs()));
    z0s.dedup_by(|a, b| (*a - *b).abs() <= LATTICE_REL_TOL * scale);

    let z_lattice = if z0s.len() >= 2 {
        real_lattice_span(&z0s, LATTICE_REL_TOL).map(|h_prime| {
            let a_prime = z0s[0].rem_euclid(h_prime);
            // rem_euclid can return h' itself when the value sits just below
            // a lattice point; fold that back to 0.
            let a_prime = if (a_prime - h_prime).abs() <= RESIDUE_TOL * h_prime {
                0.0
            } else {
                a_prime
            };
            ZLattice { h_prime, a_prime }
        })
    } else {
        None
    };

    // The affine-fit test decides; the covariance determinant must agree
    // (points on one line give a rank-one Σ), so it enters as a guard.
    let det_small = stats.det_sigma.abs() <= 1e-10 * (stats.sigma00 * stats.sigma11).max(1.0);
    PairClass {
        z_lattice,
        pseudo_symmetric: affine_dependent(zs) && det_small,
    }
}

/// Do all distinct (z0, z1) support points lie on one line?
fn affine_dependent(zs: &ZSupport) -> bool {
    let mut pts: Vec<(f64, f64)> = zs.atoms.iter().map(|a| (a.z0, a.z1)).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    pts.dedup_by(|a, b| (a.0 - b.0).abs() <= 1e-12 && (a.1 - b.1).abs() <= 1e-12);
    if pts.len() <= 2 {
        return true;
    }
    let scale = pts
        .iter()
        .fold(1.0f64, |m, &(u, v)| m.max(u.abs()).max(v.abs()));
    let n = pts.len() as f64;
    let mu = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mv = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let suu: f64 = pts.iter().map(|p| (p.0 - mu) * (p.0 - mu)).sum();
    if suu <= (1e-12 * scale) * (1e-12 * scale) * n {
        // Vertical line: Z(η) is constant over the support.
        return true;
    }
    let suv: f64 = pts.iter().map(|p| (p.0 - mu) * (p.1 - mv)).sum();
    let slope = suv / suu;
    let icpt = mv - slope * mu;
    pts.iter()
        .all(|&(u, v)| (v - (icpt + slope * u)).abs() <= 1e-9 * scale.max(1.0))
}
