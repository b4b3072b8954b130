//! Finite discrete memoryless channels.
//!
//! A channel is the pair (W, P_X): a row-stochastic transition matrix
//! W(y|x) together with an input distribution. Everything downstream is a
//! functional of the per-symbol log likelihood ratio
//!
//! ```text
//! ν(x, y, x') = log( W(y|x') / W(y|x) )   ∈ [-∞, ∞)
//! ```
//!
//! taken over a competitor symbol x' drawn from P_X. All logarithms are
//! natural; rates are in nats per symbol.

use crate::numeric::{compensated_sum, Accumulator};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Maximum acceptable deviation of a row sum (or the input sum) from 1 at
/// load time. Accepted channels are renormalized to machine precision.
pub const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelError {
    Json(String),
    RowSum {
        row: usize,
        sum: f64,
    },
    InputSum {
        sum: f64,
    },
    NegativeEntry {
        row: usize,
        col: usize,
        value: f64,
    },
    NonFinite {
        row: usize,
        col: usize,
    },
    Shape {
        row: usize,
        expected: usize,
        got: usize,
    },
    EmptyAlphabet,
}

impl fmt::Display for ChannelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelError::Json(e) => write!(f, "malformed channel JSON: {e}"),
            ChannelError::RowSum { row, sum } => {
                write!(
                    f,
                    "row {row} sums to {sum} (must be 1 within {ROW_SUM_TOL:e})"
                )
            }
            ChannelError::InputSum { sum } => {
                write!(
                    f,
                    "input distribution sums to {sum} (must be 1 within {ROW_SUM_TOL:e})"
                )
            }
            ChannelError::NegativeEntry { row, col, value } => {
                write!(f, "negative entry {value} at ({row}, {col})")
            }
            ChannelError::NonFinite { row, col } => {
                write!(f, "non-finite entry at ({row}, {col})")
            }
            ChannelError::Shape { row, expected, got } => {
                write!(f, "row {row} has {got} entries, expected {expected}")
            }
            ChannelError::EmptyAlphabet => write!(f, "empty input or output alphabet"),
        }
    }
}

impl std::error::Error for ChannelError {}

/// Input distribution P_X. After construction every entry is strictly
/// positive (zero-probability inputs are pruned) and the entries sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct InputDistribution {
    probs: Vec<f64>,
}

impl InputDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// One (x, y) pair in the positive-probability support, with its joint
/// probability p = P_X(x) W(y|x). Atom order is the canonical row-major
/// order shared by every module that indexes the support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportAtom {
    pub x: usize,
    pub y: usize,
    pub p: f64,
}

/// Inputs and output columns dropped during load.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PruneReport {
    pub dropped_inputs: Vec<usize>,
    pub dropped_outputs: Vec<usize>,
}

impl PruneReport {
    pub fn is_empty(&self) -> bool {
        self.dropped_inputs.is_empty() && self.dropped_outputs.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
struct RawChannel {
    input: Vec<f64>,
    matrix: Vec<Vec<f64>>,
}

/// A validated finite discrete memoryless channel. Immutable after
/// construction and safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteChannel {
    matrix: Vec<Vec<f64>>,
    input: InputDistribution,
}

/// Parse and validate the JSON document
/// `{"input": [p_1, ...], "matrix": [[W(y_1|x_1), ...], ...]}` (row-major).
///
/// Zero-probability inputs and all-zero output columns are pruned; the
/// report says which. Rows and the input vector are renormalized to sum
/// to 1 at machine precision (they must already be within [`ROW_SUM_TOL`]).
pub fn load_channel(text: &str) -> Result<(DiscreteChannel, PruneReport), ChannelError> {
    let raw: RawChannel =
        serde_json::from_str(text).map_err(|e| ChannelError::Json(e.to_string()))?;
    DiscreteChannel::new(raw.input, raw.matrix)
}

impl DiscreteChannel {
    /// Validate, prune and normalize a channel given as raw vectors.
    pub fn new(
        input: Vec<f64>,
        matrix: Vec<Vec<f64>>,
    ) -> Result<(Self, PruneReport), ChannelError> {
        if input.is_empty() || matrix.is_empty() {
            return Err(ChannelError::EmptyAlphabet);
        }
        if input.len() != matrix.len() {
            return Err(ChannelError::Shape {
                row: 0,
                expected: input.len(),
                got: matrix.len(),
            });
        }
        let ncols = matrix[0].len();
        if ncols == 0 {
            return Err(ChannelError::EmptyAlphabet);
        }
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != ncols {
                return Err(ChannelError::Shape {
                    row: i,
                    expected: ncols,
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(ChannelError::NonFinite { row: i, col: j });
                }
                if v < 0.0 {
                    return Err(ChannelError::NegativeEntry {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
            let sum = compensated_sum(row.iter().cloned());
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(ChannelError::RowSum { row: i, sum });
            }
        }
        for (i, &v) in input.iter().enumerate() {
            if !v.is_finite() {
                return Err(ChannelError::NonFinite { row: i, col: 0 });
            }
            if v < 0.0 {
                return Err(ChannelError::NegativeEntry {
                    row: i,
                    col: 0,
                    value: v,
                });
            }
        }
        let isum = compensated_sum(input.iter().cloned());
        if (isum - 1.0).abs() > ROW_SUM_TOL {
            return Err(ChannelError::InputSum { sum: isum });
        }

        let mut report = PruneReport::default();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut probs: Vec<f64> = Vec::new();
        for (i, (&p, row)) in input.iter().zip(matrix.iter()).enumerate() {
            if p > 0.0 {
                probs.push(p);
                rows.push(row.clone());
            } else {
                report.dropped_inputs.push(i);
            }
        }
        if rows.is_empty() {
            return Err(ChannelError::EmptyAlphabet);
        }
        let keep: Vec<usize> = (0..ncols)
            .filter(|&j| rows.iter().any(|r| r[j] > 0.0))
            .collect();
        report.dropped_outputs = (0..ncols).filter(|j| !keep.contains(j)).collect();
        if keep.is_empty() {
            return Err(ChannelError::EmptyAlphabet);
        }
        let mut pruned: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| keep.iter().map(|&j| r[j]).collect())
            .collect();

        // Renormalize to machine precision; validation already bounded the drift.
        for row in pruned.iter_mut() {
            let s = compensated_sum(row.iter().cloned());
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let s = compensated_sum(probs.iter().cloned());
        for v in probs.iter_mut() {
            *v /= s;
        }

        Ok((
            Self {
                matrix: pruned,
                input: InputDistribution { probs },
            },
            report,
        ))
    }

    /// Binary symmetric channel with crossover probability `p`, uniform input.
    pub fn bsc(p: f64) -> Self {
        Self::new(vec![0.5, 0.5], vec![vec![1.0 - p, p], vec![p, 1.0 - p]])
            .expect("BSC parameters are valid")
            .0
    }

    /// Binary erasure channel with erasure probability `eps`, uniform input,
    /// outputs ordered {0, erasure, 1}.
    pub fn bec(eps: f64) -> Self {
        Self::new(
            vec![0.5, 0.5],
            vec![vec![1.0 - eps, eps, 0.0], vec![0.0, eps, 1.0 - eps]],
        )
        .expect("BEC parameters are valid")
        .0
    }

    /// Erasure channel with arbitrary input distribution: input symbol x is
    /// received intact with probability 1-eps and erased otherwise.
    pub fn erasure(input: &[f64], eps: f64) -> Self {
        let q = input.len();
        let mut matrix = vec![vec![0.0; q + 1]; q];
        for (x, row) in matrix.iter_mut().enumerate() {
            row[x] = 1.0 - eps;
            row[q] = eps;
        }
        Self::new(input.to_vec(), matrix)
            .expect("erasure parameters are valid")
            .0
    }

    pub fn num_inputs(&self) -> usize {
        self.input.len()
    }

    pub fn num_outputs(&self) -> usize {
        self.matrix[0].len()
    }

    pub fn input(&self) -> &InputDistribution {
        &self.input
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.matrix
    }

    #[inline]
    pub fn transition(&self, x: usize, y: usize) -> f64 {
        self.matrix[x][y]
    }

    /// The positive-probability support atoms in row-major (x, y) order.
    pub fn support(&self) -> Vec<SupportAtom> {
        let mut atoms = Vec::new();
        for (x, &px) in self.input.probs().iter().enumerate() {
            for (y, &w) in self.matrix[x].iter().enumerate() {
                if w > 0.0 {
                    atoms.push(SupportAtom { x, y, p: px * w });
                }
            }
        }
        atoms
    }

    /// The table ν(x, y, x') = log(W(y|x')/W(y|x)) over support atoms and
    /// competitor symbols; -∞ encodes W(y|x') = 0.
    pub fn nu_table(&self) -> NuTable {
        let atoms = self.support();
        let nu = atoms
            .iter()
            .map(|a| {
                let wy = self.matrix[a.x][a.y];
                (0..self.num_inputs())
                    .map(|xp| {
                        let wp = self.matrix[xp][a.y];
                        if wp == 0.0 {
                            f64::NEG_INFINITY
                        } else if xp == a.x {
                            0.0
                        } else {
                            (wp / wy).ln()
                        }
                    })
                    .collect()
            })
            .collect();
        NuTable { atoms, nu }
    }

    /// I(X;Y) = E[-log E_{X'}[e^ν]] in nats, by the finite support sum.
    pub fn mutual_information(&self) -> f64 {
        let px = self.input.probs();
        let mut acc = Accumulator::new();
        for a in self.support() {
            // E_{X'}[e^ν] = Σ_{x'} P(x') W(y|x') / W(y|x), with e^{-∞} = 0.
            let s = compensated_sum(
                px.iter()
                    .enumerate()
                    .map(|(xp, &pp)| pp * self.matrix[xp][a.y]),
            ) / self.matrix[a.x][a.y];
            acc.add(-a.p * s.ln());
        }
        acc.value()
    }

    /// Emit the channel back out in the load schema.
    pub fn to_json(&self) -> String {
        let raw = RawChannel {
            input: self.input.probs.clone(),
            matrix: self.matrix.clone(),
        };
        serde_json::to_string(&raw).expect("channel serialization cannot fail")
    }
}

/// Seeded random channel with all entries bounded away from zero; the
/// corpus generator used by the validation suites. Deterministic in
/// (seed, nx, ny) and guaranteed to carry nonzero mutual information.
pub fn random_channel(seed: u64, nx: usize, ny: usize) -> DiscreteChannel {
    let mut rng = crate::numeric::SplitMix64::for_sample(seed, 0x0c4a_11ed);
    loop {
        let mut matrix = Vec::with_capacity(nx);
        for _ in 0..nx {
            let mut row: Vec<f64> = (0..ny).map(|_| 0.05 + rng.next_f64()).collect();
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
            matrix.push(row);
        }
        let mut input: Vec<f64> = (0..nx).map(|_| 0.1 + rng.next_f64()).collect();
        let s: f64 = input.iter().sum();
        input.iter_mut().for_each(|v| *v /= s);
        let (ch, _) = DiscreteChannel::new(input, matrix).expect("generated rows are stochastic");
        if ch.mutual_information() > 1e-3 {
            return ch;
        }
    }
}

/// ν values for every support atom, aligned with [`DiscreteChannel::support`].
#[derive(Debug, Clone)]
pub struct NuTable {
    atoms: Vec<SupportAtom>,
    nu: Vec<Vec<f64>>,
}

impl NuTable {
    pub fn atoms(&self) -> &[SupportAtom] {
        &self.atoms
    }

    /// ν(x_a, y_a, ·) over competitor symbols for support atom `a`.
    pub fn row(&self, a: usize) -> &[f64] {
        &self.nu[a]
    }

    pub fn get(&self, x: usize, y: usize, xp: usize) -> Option<f64> {
        self.atoms
            .iter()
            .position(|a| a.x == x && a.y == y)
            .map(|i| self.nu[i][xp])
    }

    /// All finite ν values over the support (including the zero diagonal).
    pub fn finite_values(&self) -> Vec<f64> {
        self.nu
            .iter()
            .flat_map(|r| r.iter().cloned())
            .filter(|v| v.is_finite())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_round_trip_bsc() {
        let (ch, report) =
            load_channel(r#"{"input":[0.5,0.5],"matrix":[[0.9,0.1],[0.1,0.9]]}"#).unwrap();
        assert!(report.is_empty());
        assert_eq!(ch, DiscreteChannel::bsc(0.1));
        let (back, _) = load_channel(&ch.to_json()).unwrap();
        assert_eq!(back, ch);
    }

    #[test]
    fn load_single_input_channel() {
        let (ch, report) = load_channel(r#"{"input":[1.0],"matrix":[[0.3,0.7]]}"#).unwrap();
        assert!(report.is_empty());
        assert_eq!(ch.num_inputs(), 1);
        assert_eq!(ch.num_outputs(), 2);
    }

    #[test]
    fn load_rejects_bad_row_sum() {
        let err =
            load_channel(r#"{"input":[0.5,0.5],"matrix":[[0.9,0.2],[0.1,0.9]]}"#).unwrap_err();
        assert!(matches!(err, ChannelError::RowSum { row: 0, .. }));
    }

    #[test]
    fn load_rejects_garbage() {
        assert!(matches!(
            load_channel("not json").unwrap_err(),
            ChannelError::Json(_)
        ));
        assert!(matches!(
            load_channel(r#"{"input":[],"matrix":[]}"#).unwrap_err(),
            ChannelError::EmptyAlphabet
        ));
        assert!(matches!(
            load_channel(r#"{"input":[0.5,0.5],"matrix":[[1.0,0.0],[-0.1,1.1]]}"#).unwrap_err(),
            ChannelError::NegativeEntry { .. }
        ));
    }

    #[test]
    fn pruning_drops_dead_inputs_and_outputs() {
        let (ch, report) = load_channel(
            r#"{"input":[0.5,0.0,0.5],"matrix":[[0.9,0.1,0.0],[1.0,0.0,0.0],[0.1,0.9,0.0]]}"#,
        )
        .unwrap();
        assert_eq!(report.dropped_inputs, vec![1]);
        assert_eq!(report.dropped_outputs, vec![2]);
        assert_eq!(ch.num_inputs(), 2);
        assert_eq!(ch.num_outputs(), 2);
    }

    #[test]
    fn nu_values_bsc() {
        let ch = DiscreteChannel::bsc(0.1);
        let nt = ch.nu_table();
        let v = nt.get(0, 0, 1).unwrap();
        assert!((v - (0.1f64 / 0.9).ln()).abs() < 1e-12);
        assert!((v + 9.0f64.ln()).abs() < 1e-12);
        for (a, atom) in nt.atoms().iter().enumerate() {
            assert_eq!(nt.row(a)[atom.x], 0.0);
        }
    }

    #[test]
    fn nu_neg_infinity_on_bec() {
        let ch = DiscreteChannel::bec(0.4);
        let nt = ch.nu_table();
        assert_eq!(nt.get(0, 0, 1).unwrap(), f64::NEG_INFINITY);
        assert_eq!(nt.get(0, 1, 1).unwrap(), 0.0);
    }

    #[test]
    fn nu_exponentiates_back_to_transitions() {
        // exp(ν(x,y,x')) W(y|x) = W(y|x'), with e^{-∞}·c = 0.
        for ch in [
            DiscreteChannel::bsc(0.23),
            DiscreteChannel::bec(0.4),
            DiscreteChannel::new(
                vec![0.3, 0.3, 0.4],
                vec![
                    vec![0.5, 0.25, 0.25],
                    vec![0.1, 0.6, 0.3],
                    vec![0.2, 0.2, 0.6],
                ],
            )
            .unwrap()
            .0,
        ] {
            let nt = ch.nu_table();
            for (a, atom) in nt.atoms().iter().enumerate() {
                for xp in 0..ch.num_inputs() {
                    let nu = nt.row(a)[xp];
                    let lhs = if nu == f64::NEG_INFINITY {
                        0.0
                    } else {
                        nu.exp() * ch.transition(atom.x, atom.y)
                    };
                    assert!((lhs - ch.transition(xp, atom.y)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn mutual_information_closed_forms() {
        assert!((DiscreteChannel::bsc(0.0).mutual_information() - 2.0f64.ln()).abs() < 1e-12);
        assert!(DiscreteChannel::bsc(0.5).mutual_information().abs() < 1e-12);
        // I(BSC(p)) = log 2 - H_b(p) in nats.
        let p: f64 = 0.11;
        let hb = -p * p.ln() - (1.0 - p) * (1.0 - p).ln();
        let mi = DiscreteChannel::bsc(p).mutual_information();
        assert!((mi - (2.0f64.ln() - hb)).abs() < 1e-12);
    }

    #[test]
    fn mutual_information_invariant_under_relabeling() {
        let (a, _) = DiscreteChannel::new(
            vec![0.25, 0.75],
            vec![vec![0.7, 0.2, 0.1], vec![0.05, 0.55, 0.4]],
        )
        .unwrap();
        // Swap the two inputs and rotate the three outputs.
        let (b, _) = DiscreteChannel::new(
            vec![0.75, 0.25],
            vec![vec![0.4, 0.05, 0.55], vec![0.1, 0.7, 0.2]],
        )
        .unwrap();
        assert!((a.mutual_information() - b.mutual_information()).abs() < 1e-12);
    }

    #[test]
    fn mutual_information_bounds() {
        for ch in [
            DiscreteChannel::bsc(0.3),
            DiscreteChannel::bec(0.7),
            DiscreteChannel::new(vec![0.9, 0.1], vec![vec![0.5, 0.5], vec![0.5, 0.5]])
                .unwrap()
                .0,
        ] {
            let mi = ch.mutual_information();
            let cap = (ch.num_inputs().min(ch.num_outputs()) as f64).ln();
            assert!(mi >= -1e-15 && mi <= cap + 1e-12);
        }
    }
}
