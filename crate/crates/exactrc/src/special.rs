//! Special functions and the constant families behind the asymptotic
//! prefactors.
//!
//! Four kernel families appear, one per (singularity class, tie rule):
//!
//! ```text
//! g_h(u)  = 1 - e^{-bu} (1-e^{-hηu})/(hηu),  b = hη/(e^{hη}-1)   (ties uniform)
//! g̃_h(u)  = 1 - e^{-b e^{hη} u}                                  (ties as error)
//! g'(u)   = 1 - (1-e^{-u})/u                                     (singular, uniform)
//! g̃'(u)   = 1 - e^{-u}                                           (singular, error)
//! ```
//!
//! with the h = 0 conventions (e^x-1)/x = x/(e^x-1) = 1 taken as explicit
//! limit branches (g_0 = g̃'_0 = 1 - e^{-u}). Each family has a closed-form
//! integral ψ = ∫ e^{-ρw} g(e^w) dw (nonlattice prefactors) and an
//! h'-spaced series ψ(x) = Σ_i h' e^{-ρ(x+ih')} g(e^{x+ih'}) (lattice
//! prefactors, periodic in x with period h'), truncated under the
//! geometric tail bound e^{-ρw} g(e^w) ≤ C (e^{-ρw} ∧ e^{(1-ρ)w}).

use crate::numeric::Accumulator;
use std::f64::consts::PI;

/// Lanczos approximation with g = 7 and 9 coefficients (the classic
/// Godfrey / Numerical Recipes set), ~15 significant digits on the
/// positive real axis.
const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)] // published digits kept verbatim
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Γ(x) for 0 < x ≤ 2, relative error ≤ 1e-12.
pub fn gamma_fn(x: f64) -> f64 {
    assert!(x > 0.0, "gamma_fn domain is (0, 2], got {x}");
    debug_assert!(x <= 2.0, "gamma_fn is only contracted on (0, 2]");
    if x < 0.5 {
        // Reflection keeps the Lanczos argument away from the pole.
        PI / ((PI * x).sin() * gamma_lanczos(1.0 - x))
    } else {
        gamma_lanczos(x)
    }
}

fn gamma_lanczos(x: f64) -> f64 {
    let z = x - 1.0;
    let mut a = LANCZOS_COEF[0];
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        a += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * a
}

/// x/(e^x - 1), with the x = 0 convention = 1.
#[inline]
fn inv_em1_ratio(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x / x.exp_m1()
    }
}

/// (e^x - 1)/x, with the x = 0 convention = 1.
#[inline]
fn em1_ratio(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.exp_m1() / x
    }
}

/// (1 - e^{-s})/s - 1 = Σ_{k≥1} (-s)^k/(k+1)!, full relative accuracy for
/// every s ≥ 0 (series below s = 0.5, direct form above).
#[inline]
fn one_em_ratio_minus_one(s: f64) -> f64 {
    if s < 0.5 {
        let mut term = 1.0f64;
        let mut acc = 0.0f64;
        for k in 1..=16u32 {
            term *= -s / (k as f64 + 1.0);
            acc += term;
            if term.abs() < acc.abs() * 1e-18 {
                break;
            }
        }
        acc
    } else {
        (-(-s).exp_m1()) / s - 1.0
    }
}

/// g_h(u) for span h ≥ 0 at tilt η: value in [0, 1); at h = 0 this is
/// 1 - e^{-u}. Computed as -(E + a + Ea) with E = e^{-bu}-1 and
/// a = (1-e^{-hηu})/(hηu) - 1, which stays fully accurate down to u → 0
/// where g_h(u) ~ (b + hη/2) u.
pub fn g_h(h: f64, eta: f64, u: f64) -> f64 {
    debug_assert!(u > 0.0 && h >= 0.0 && eta > 0.0);
    let s = h * eta;
    if s == 0.0 {
        return -(-u).exp_m1();
    }
    let b = inv_em1_ratio(s);
    let e = (-b * u).exp_m1();
    let a = one_em_ratio_minus_one(s * u);
    -(e + a + e * a)
}

/// Leading coefficient of g_h at u → 0: g_h(u)/u → hη/(e^{hη}-1) + hη/2.
pub fn g_h_zero_slope(h: f64, eta: f64) -> f64 {
    let s = h * eta;
    inv_em1_ratio(s) + s / 2.0
}

/// g_{ρ,h}(u) = u^{-ρ} g_h(u) at η = 1/(1+ρ); ρ = 1 is allowed for the
/// critical-rate limits.
pub fn g_rho_h(rho: f64, h: f64, u: f64) -> f64 {
    debug_assert!(rho > 0.0 && rho <= 1.0);
    let eta = 1.0 / (1.0 + rho);
    if u < 1e-280 {
        // Avoid 0·∞ from the underflowed g_h: use the leading term.
        return g_h_zero_slope(h, eta) * u.powf(1.0 - rho);
    }
    u.powf(-rho) * g_h(h, eta, u)
}

/// Tie-rule replacement g̃_h(u) = 1 - e^{-(hηe^{hη}/(e^{hη}-1)) u}.
pub fn g_tilde_h(h: f64, eta: f64, u: f64) -> f64 {
    debug_assert!(u > 0.0 && h >= 0.0 && eta > 0.0);
    let s = h * eta;
    let c = inv_em1_ratio(s) * s.exp();
    -(-c * u).exp_m1()
}

/// Singular kernel g'(u) = 1 - (1-e^{-u})/u ~ u/2 at 0.
pub fn g_singular(u: f64) -> f64 {
    debug_assert!(u > 0.0);
    -one_em_ratio_minus_one(u)
}

/// Singular tie kernel g̃'(u) = 1 - e^{-u}.
pub fn g_singular_tie(u: f64) -> f64 {
    debug_assert!(u > 0.0);
    -(-u).exp_m1()
}

/// ψ_{ρ,h} = ∫ e^{-ρw} g_h(e^w) dw
///         = (Γ(1-ρ)/ρ) (hη/(e^{hη}-1))^{ρ+1} (e^h-1)/h,   η = 1/(1+ρ).
pub fn psi_rho_h(rho: f64, h: f64) -> f64 {
    assert!(
        rho > 0.0 && rho < 1.0,
        "psi_rho_h needs 0 < rho < 1 (Γ(1-ρ) pole at ρ = 1), got {rho}"
    );
    let eta = 1.0 / (1.0 + rho);
    let r = inv_em1_ratio(h * eta);
    gamma_fn(1.0 - rho) / rho * r.powf(rho + 1.0) * em1_ratio(h)
}

/// Tie-rule ψ̃_{ρ,h} = ∫ e^{-ρw} g̃_h(e^w) dw = (Γ(1-ρ)/ρ) (hηe^{hη}/(e^{hη}-1))^ρ.
///
/// This is the value of the defining integral; it satisfies
/// ψ̃/ψ = (1+ρ)(e^h - e^{ρh/(1+ρ)})/(e^h - 1) ∈ [1, 1+ρ).
pub fn psi_tilde_rho_h(rho: f64, h: f64) -> f64 {
    assert!(rho > 0.0 && rho < 1.0);
    let eta = 1.0 / (1.0 + rho);
    let s = h * eta;
    let c = inv_em1_ratio(s) * s.exp();
    gamma_fn(1.0 - rho) / rho * c.powf(rho)
}

/// Singular ψ'_ρ = ∫ e^{-ρw} g'(e^w) dw = Γ(1-ρ)/(ρ(1+ρ)).
pub fn psi_singular(rho: f64) -> f64 {
    assert!(rho > 0.0 && rho < 1.0);
    gamma_fn(1.0 - rho) / (rho * (1.0 + rho))
}

/// Singular tie ψ̃'_ρ = Γ(1-ρ)/ρ = (1+ρ) ψ'_ρ.
pub fn psi_singular_tie(rho: f64) -> f64 {
    assert!(rho > 0.0 && rho < 1.0);
    gamma_fn(1.0 - rho) / rho
}

/// ψ_{ρ,h,h'}(x) = Σ_i h' e^{-ρ(x+ih')} g_h(e^{x+ih'}): the lattice-pair
/// prefactor series, periodic in x with period h'.
pub fn psi_series(rho: f64, h: f64, h_prime: f64, x: f64) -> f64 {
    let eta = 1.0 / (1.0 + rho);
    let c_bound = 1.0 + h * eta;
    series_sum(rho, h_prime, x, c_bound, |u| g_h(h, eta, u))
}

/// Tie-rule series built from g̃_h with the same tail machinery.
pub fn psi_tilde_series(rho: f64, h: f64, h_prime: f64, x: f64) -> f64 {
    let eta = 1.0 / (1.0 + rho);
    let c_bound = 1.0 + h * eta;
    series_sum(rho, h_prime, x, c_bound, |u| g_tilde_h(h, eta, u))
}

/// Singular series ψ'_{ρ,h'}(x) = Σ_i h' e^{-ρ(x+ih')} g'(e^{x+ih'}).
pub fn psi_singular_series(rho: f64, h_prime: f64, x: f64) -> f64 {
    series_sum(rho, h_prime, x, 1.0, g_singular)
}

/// Singular tie series from g̃'(u) = 1 - e^{-u}.
pub fn psi_singular_tie_series(rho: f64, h_prime: f64, x: f64) -> f64 {
    series_sum(rho, h_prime, x, 1.0, g_singular_tie)
}

/// Σ_i h' e^{-ρ w_i} g(e^{w_i}) over w_i = x + ih', expanded symmetrically
/// from the lattice point nearest w = 0 (where the summand peaks) until the
/// geometric tail bounds drop below 1e-12:
///
/// ```text
/// up tail   ≤ C h' e^{-ρ w_next} / (1 - e^{-ρ h'})
/// down tail ≤ C h' e^{(1-ρ) w_next} / (1 - e^{-(1-ρ) h'})
/// ```
fn series_sum<G: Fn(f64) -> f64>(rho: f64, h_prime: f64, x: f64, c_bound: f64, g: G) -> f64 {
    assert!(
        rho > 0.0 && rho < 1.0,
        "series needs 0 < rho < 1, got {rho}"
    );
    assert!(h_prime > 0.0, "series needs h' > 0");
    const TAIL_TOL: f64 = 1e-12;
    let term = |w: f64| {
        if w > 700.0 {
            // g(e^w) ∈ [0, 1]; the e^{-ρw} factor alone is < 1e-90 here.
            (-rho * w).exp()
        } else if w < -700.0 {
            0.0
        } else {
            (-rho * w).exp() * g(w.exp())
        }
    };
    let up_tail = |w: f64| c_bound * h_prime * (-rho * w).exp() / -(-rho * h_prime).exp_m1();
    let down_tail =
        |w: f64| c_bound * h_prime * ((1.0 - rho) * w).exp() / -(-(1.0 - rho) * h_prime).exp_m1();

    let i0 = (-x / h_prime).round();
    let mut acc = Accumulator::new();
    let cap = 100_000_000i64;

    let mut i = 0i64;
    loop {
        let w = x + (i0 + i as f64) * h_prime;
        acc.add(h_prime * term(w));
        i += 1;
        let w_next = x + (i0 + i as f64) * h_prime;
        if up_tail(w_next) < TAIL_TOL {
            break;
        }
        assert!(i < cap, "series did not converge: h' too small");
    }
    let mut j = 1i64;
    loop {
        let w = x + (i0 - j as f64) * h_prime;
        if down_tail(w) < TAIL_TOL {
            break;
        }
        acc.add(h_prime * term(w));
        j += 1;
        assert!(j < cap, "series did not converge: h' too small");
    }
    acc.value()
}

/// E[f(V)] for standard normal V by adaptive Simpson on [-8.5, 8.5];
/// the discarded tail carries < 1e-17 of the mass.
pub fn gauss_expect<F: Fn(f64) -> f64>(f: F, tol: f64) -> f64 {
    let g = |v: f64| {
        let y = f(v);
        assert!(y.is_finite(), "gauss_expect: integrand not finite at {v}");
        y * (-0.5 * v * v).exp() / (2.0 * PI).sqrt()
    };
    adaptive_simpson(&g, -8.5, 8.5, tol)
}

/// Adaptive Simpson quadrature with the standard |S2 - S1|/15 error gauge.
pub(crate) fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let c = 0.5 * (a + b);
    let (fa, fb, fc) = (f(a), f(b), f(c));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
    simpson_step(f, a, b, fa, fb, fc, whole, tol, 52)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    fc: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let c = 0.5 * (a + b);
    let d = 0.5 * (a + c);
    let e = 0.5 * (c + b);
    let (fd, fe) = (f(d), f(e));
    let left = (c - a) / 6.0 * (fa + 4.0 * fd + fc);
    let right = (b - c) / 6.0 * (fc + 4.0 * fe + fb);
    let err = left + right - whole;
    if depth == 0 || err.abs() <= 15.0 * tol {
        left + right + err / 15.0
    } else {
        simpson_step(f, a, c, fa, fc, fd, left, tol * 0.5, depth - 1)
            + simpson_step(f, c, b, fc, fb, fe, right, tol * 0.5, depth - 1)
    }
}
