//! Shared numeric plumbing: compensated summation, log-sum-exp, factorial
//! tables and the counter-based RNG used by the Monte Carlo oracle.

/// Neumaier-compensated accumulator. Sums of atom probabilities and moments
/// must not lose digits to cancellation, so every reduction in the crate
/// goes through this instead of a bare `+=` loop.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    sum: f64,
    comp: f64,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    let mut acc = Accumulator::new();
    for v in iter {
        acc.add(v);
    }
    acc.value()
}

/// log(Σ exp(t_i)) with the usual max shift; -∞ terms drop out.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let mut acc = Accumulator::new();
    for &t in terms {
        acc.add((t - m).exp());
    }
    m + acc.value().ln()
}

/// Table of ln(k!) for k = 0..=n, built once per oracle run.
pub struct LnFactorial {
    table: Vec<f64>,
}

impl LnFactorial {
    pub fn up_to(n: usize) -> Self {
        let mut table = Vec::with_capacity(n + 1);
        let mut acc = Accumulator::new();
        table.push(0.0);
        for k in 1..=n {
            acc.add((k as f64).ln());
            table.push(acc.value());
        }
        Self { table }
    }

    #[inline]
    pub fn get(&self, k: usize) -> f64 {
        self.table[k]
    }
}

/// SplitMix64 stream. Each Monte Carlo sample owns one stream keyed by
/// (seed, sample index), so draws are independent of thread scheduling.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(state: u64) -> Self {
        Self { state }
    }

    /// Stream for one sample: two mixing rounds keep low-entropy
    /// (seed, index) pairs from producing correlated streams.
    pub fn for_sample(seed: u64, index: u64) -> Self {
        let mut s = Self::new(seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let a = s.next_u64();
        let b = s.next_u64();
        Self::new(a ^ b.rotate_left(23))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_beats_naive() {
        // 1 + 1e-16 repeated: naive summation drops every tiny term.
        let mut vals = vec![1.0];
        vals.extend(std::iter::repeat_n(1e-16, 100_000));
        let s = compensated_sum(vals.iter().cloned());
        assert!((s - (1.0 + 1e-11)).abs() < 1e-13);
    }

    #[test]
    fn log_sum_exp_handles_neg_infinity() {
        let v = [f64::NEG_INFINITY, 0.0, (2.0f64).ln()];
        assert!((log_sum_exp(&v) - (3.0f64).ln()).abs() < 1e-15);
        assert_eq!(
            log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn ln_factorial_matches_direct() {
        let t = LnFactorial::up_to(20);
        let mut f = 1.0f64;
        for k in 1..=20usize {
            f *= k as f64;
            assert!((t.get(k) - f.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn rng_streams_are_reproducible_and_distinct() {
        let mut a = SplitMix64::for_sample(7, 42);
        let mut b = SplitMix64::for_sample(7, 42);
        let mut c = SplitMix64::for_sample(7, 43);
        let xa: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
        let mut r = SplitMix64::for_sample(1, 1);
        for _ in 0..1000 {
            let u = r.next_f64();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
