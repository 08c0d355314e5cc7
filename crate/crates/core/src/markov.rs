//! Constrained Markov chains: the parameter chart, transition matrices,
//! stationary laws, and the exact entropy rate with its gradient.
//!
//! Parameters use free row coordinates. For every row `i` with allowed
//! successors `j_0 < j_1 < .. < j_m`, the vector `theta` stores
//! `P[i][j_1], .., P[i][j_m]` and the first allowed entry `P[i][j_0]` is the
//! remainder `1 - sum`. The parameter space is thus a product of simplices
//! shrunk by the floor `eps`, and feasibility is checked row by row. For the
//! golden-mean constraint (`"11"` forbidden) the single coordinate is
//! `P[0][1]`, the probability of emitting a one.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::constraint::{self, ForbiddenPairSet, Periodicity};
use crate::error::{Error, Result};

pub const DEFAULT_EPSILON_FLOOR: f64 = 1e-3;
const ROW_SUM_TOL: f64 = 1e-12;

/// A point in the parameter space together with the floor it must respect.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovParams {
    pub theta: Vec<f64>,
    pub epsilon_floor: f64,
}

impl MarkovParams {
    pub fn new(theta: Vec<f64>, epsilon_floor: f64) -> Self {
        MarkovParams {
            theta,
            epsilon_floor,
        }
    }

    /// Draws each row from a symmetric Dirichlet(1) law rescaled onto the
    /// `eps`-floored simplex.
    pub fn random<R: Rng + ?Sized>(f: &ForbiddenPairSet, eps: f64, rng: &mut R) -> Result<Self> {
        let gamma = Gamma::new(1.0, 1.0).expect("valid gamma parameters");
        let mut theta = Vec::with_capacity(f.param_dim());
        for i in 0..f.alphabet_size() {
            let cols = f.allowed_in_row(i);
            let m = cols.len() as f64;
            if eps * m > 1.0 {
                return Err(Error::InfeasibleParams(format!(
                    "floor {eps} too large for row {i} with {m} allowed entries"
                )));
            }
            let draws: Vec<f64> = cols.iter().map(|_| gamma.sample(rng)).collect();
            let total: f64 = draws.iter().sum();
            theta.extend(
                draws[1..]
                    .iter()
                    .map(|g| eps + (1.0 - m * eps) * g / total),
            );
        }
        Ok(MarkovParams::new(theta, eps))
    }

    /// Reads the free coordinates off a matrix supported on the constraint.
    pub fn from_matrix(p: &TransitionMatrix, f: &ForbiddenPairSet, eps: f64) -> Self {
        let theta = chart(f).iter().map(|&(i, j)| p.entry(i, j)).collect();
        MarkovParams::new(theta, eps)
    }
}

/// The `(row, column)` entry each free coordinate stands for, with the
/// remainder column of that row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coordinate {
    pub row: usize,
    pub col: usize,
    pub remainder: usize,
}

pub fn coordinates(f: &ForbiddenPairSet) -> Vec<Coordinate> {
    let mut out = Vec::with_capacity(f.param_dim());
    for i in 0..f.alphabet_size() {
        let cols = f.allowed_in_row(i);
        for &j in &cols[1..] {
            out.push(Coordinate {
                row: i,
                col: j,
                remainder: cols[0],
            });
        }
    }
    out
}

fn chart(f: &ForbiddenPairSet) -> Vec<(usize, usize)> {
    coordinates(f).into_iter().map(|c| (c.row, c.col)).collect()
}

/// An irreducible row-stochastic matrix with its stationary law.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    entries: Vec<Vec<f64>>,
    stationary: Vec<f64>,
}

impl TransitionMatrix {
    pub fn new(entries: Vec<Vec<f64>>) -> Result<Self> {
        let stationary = stationary_distribution(&entries)?;
        Ok(TransitionMatrix {
            entries,
            stationary,
        })
    }

    pub fn size(&self) -> usize {
        self.entries.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.entries
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn periodicity(&self) -> Periodicity {
        constraint::periodicity(&support(&self.entries)).expect("irreducible by construction")
    }
}

/// Maps parameters to a transition matrix vanishing exactly on `f`.
pub fn build_transition(params: &MarkovParams, f: &ForbiddenPairSet) -> Result<TransitionMatrix> {
    let d = f.param_dim();
    if params.theta.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: params.theta.len(),
        });
    }
    let eps = params.epsilon_floor;
    let k = f.alphabet_size();
    let mut entries = vec![vec![0.0; k]; k];
    let mut coords = params.theta.iter();
    for (i, row) in entries.iter_mut().enumerate() {
        let cols = f.allowed_in_row(i);
        let mut used = 0.0;
        for &j in &cols[1..] {
            let v = *coords.next().expect("dimension checked");
            if !v.is_finite() || v < eps || v > 1.0 {
                return Err(Error::InfeasibleParams(format!(
                    "P[{i}][{j}] = {v} outside [{eps}, 1]"
                )));
            }
            row[j] = v;
            used += v;
        }
        let rest = 1.0 - used;
        if rest < eps {
            return Err(Error::InfeasibleParams(format!(
                "P[{i}][{}] = {rest} below floor {eps}",
                cols[0]
            )));
        }
        row[cols[0]] = rest;
    }
    TransitionMatrix::new(entries)
}

pub fn feasible(theta: &[f64], f: &ForbiddenPairSet, eps: f64) -> bool {
    build_transition(&MarkovParams::new(theta.to_vec(), eps), f).is_ok()
}

/// Euclidean projection of each row onto `{r >= eps, sum r = 1}` over the
/// row's allowed entries, expressed back in free coordinates.
pub fn project_feasible(theta: &[f64], f: &ForbiddenPairSet, eps: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(theta.len());
    let mut coords = theta.iter();
    for i in 0..f.alphabet_size() {
        let m = f.allowed_in_row(i).len();
        let free: Vec<f64> = coords.by_ref().take(m - 1).copied().collect();
        let mut row = Vec::with_capacity(m);
        row.push(1.0 - free.iter().sum::<f64>());
        row.extend_from_slice(&free);
        // shift so the floor becomes zero, project onto scaled simplex
        let mass = 1.0 - m as f64 * eps;
        let shifted: Vec<f64> = row.iter().map(|v| v - eps).collect();
        let projected = project_simplex(&shifted, mass);
        out.extend(projected[1..].iter().map(|v| v + eps));
    }
    out
}

fn project_simplex(v: &[f64], mass: f64) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut shift = 0.0;
    for (idx, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - mass) / (idx + 1) as f64;
        if u - t > 0.0 {
            shift = t;
        }
    }
    v.iter().map(|&x| (x - shift).max(0.0)).collect()
}

fn support(p: &[Vec<f64>]) -> Vec<Vec<bool>> {
    p.iter()
        .map(|row| row.iter().map(|&x| x > 0.0).collect())
        .collect()
}

fn check_stochastic(p: &[Vec<f64>]) -> Result<()> {
    let n = p.len();
    if n == 0 {
        return Err(Error::NonStochastic("empty matrix".into()));
    }
    for (i, row) in p.iter().enumerate() {
        if row.len() != n {
            return Err(Error::NonStochastic(format!("row {i} has length {}", row.len())));
        }
        if row.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::NonStochastic(format!("row {i} has a negative entry")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::NonStochastic(format!("row {i} sums to {s}")));
        }
    }
    Ok(())
}

/// Unique stationary law of an irreducible stochastic matrix, by a direct
/// solve of `(P^T - I) mu = 0` with one equation replaced by `sum mu = 1`.
pub fn stationary_distribution(p: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_stochastic(p)?;
    if !constraint::is_strongly_connected(&support(p)) {
        return Err(Error::NotIrreducible);
    }
    let n = p.len();
    let a = DMatrix::from_fn(n, n, |r, c| {
        if r == n - 1 {
            1.0
        } else {
            p[c][r] - if r == c { 1.0 } else { 0.0 }
        }
    });
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let mu = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::SingularSystem("stationary equations".into()))?;
    let mut mu: Vec<f64> = mu.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = mu.iter().sum();
    mu.iter_mut().for_each(|x| *x /= total);
    Ok(mu)
}

/// Stationary law by power iteration of the lazy chain `(P + I) / 2`.
/// Slower than [`stationary_distribution`]; used as a cross-check.
pub fn stationary_by_power(p: &[Vec<f64>], tol: f64, max_iter: usize) -> Vec<f64> {
    let n = p.len();
    let mut mu = vec![1.0 / n as f64; n];
    for _ in 0..max_iter {
        let mut next = vec![0.0; n];
        for i in 0..n {
            next[i] += 0.5 * mu[i];
            for j in 0..n {
                next[j] += 0.5 * mu[i] * p[i][j];
            }
        }
        let diff = next
            .iter()
            .zip(&mu)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        mu = next;
        if diff < tol {
            break;
        }
    }
    mu
}

/// Derivative of the stationary law along a perturbation `dp` of `p`:
/// solves `dmu (I - P) = mu dP` subject to `sum dmu = 0`.
pub fn stationary_sensitivity(p: &[Vec<f64>], mu: &[f64], dp: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = p.len();
    let rhs: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|i| mu[i] * dp[i][j]).sum())
        .collect();
    let a = DMatrix::from_fn(n, n, |r, c| {
        if r == n - 1 {
            1.0
        } else {
            (if r == c { 1.0 } else { 0.0 }) - p[c][r]
        }
    });
    let mut b = DVector::from_vec(rhs);
    b[n - 1] = 0.0;
    let dmu = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::SingularSystem("stationary sensitivity".into()))?;
    Ok(dmu.iter().copied().collect())
}

/// `-sum_j P_ij log2 P_ij` for every row.
fn row_entropies(p: &[Vec<f64>]) -> Vec<f64> {
    p.iter()
        .map(|row| row.iter().map(|&x| -xlog2x(x)).sum())
        .collect()
}

pub fn xlog2x(x: f64) -> f64 {
    if x > 0.0 {
        x * x.log2()
    } else {
        0.0
    }
}

/// Shannon entropy of a probability vector, in bits.
pub fn entropy_bits(p: &[f64]) -> f64 {
    -p.iter().map(|&x| xlog2x(x)).sum::<f64>()
}

/// Entropy rate `H(X_2 | X_1)` of the stationary chain, in bits per symbol.
pub fn markov_entropy_rate(p: &TransitionMatrix) -> f64 {
    row_entropies(p.rows())
        .iter()
        .zip(p.stationary())
        .map(|(h, m)| m * h)
        .sum()
}

/// `dP / dtheta_c` for every free coordinate. The chart is affine, so these
/// do not depend on the point.
pub fn transition_derivatives(f: &ForbiddenPairSet) -> Vec<Vec<Vec<f64>>> {
    let k = f.alphabet_size();
    coordinates(f)
        .into_iter()
        .map(|c| {
            let mut d = vec![vec![0.0; k]; k];
            d[c.row][c.col] = 1.0;
            d[c.row][c.remainder] = -1.0;
            d
        })
        .collect()
}

/// Exact gradient of the entropy rate in free coordinates, including the
/// sensitivity of the stationary law.
pub fn markov_entropy_gradient(params: &MarkovParams, f: &ForbiddenPairSet) -> Result<Vec<f64>> {
    let p = build_transition(params, f)?;
    entropy_rate_gradient(&p, &transition_derivatives(f))
}

/// Directional derivatives of the entropy rate along each `dp`.
pub fn entropy_rate_gradient(p: &TransitionMatrix, dps: &[Vec<Vec<f64>>]) -> Result<Vec<f64>> {
    let rows = p.rows();
    let mu = p.stationary();
    let h = row_entropies(rows);
    let inv_ln2 = std::f64::consts::LOG2_E;
    dps.iter()
        .map(|dp| {
            let dmu = stationary_sensitivity(rows, mu, dp)?;
            let mut g: f64 = dmu.iter().zip(&h).map(|(a, b)| a * b).sum();
            for (i, row) in rows.iter().enumerate() {
                for (j, &pij) in row.iter().enumerate() {
                    if pij > 0.0 && dp[i][j] != 0.0 {
                        g -= mu[i] * dp[i][j] * (pij.log2() + inv_ln2);
                    }
                }
            }
            Ok(g)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn golden() -> ForbiddenPairSet {
        ForbiddenPairSet::rll(1, None).unwrap().0
    }

    #[test]
    fn build_golden_mean() {
        let p = build_transition(&MarkovParams::new(vec![0.5], 1e-3), &golden()).unwrap();
        assert_eq!(p.rows(), &[vec![0.5, 0.5], vec![1.0, 0.0]]);
        assert_abs_diff_eq!(p.stationary()[0], 2.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p.stationary()[1], 1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn build_unconstrained_uniform() {
        let f = ForbiddenPairSet::unconstrained(2).unwrap();
        let p = build_transition(&MarkovParams::new(vec![0.5, 0.5], 1e-3), &f).unwrap();
        assert_eq!(p.rows(), &[vec![0.5, 0.5], vec![0.5, 0.5]]);
    }

    #[test]
    fn build_rejects_floor_violation_and_bad_dimension() {
        let f = golden();
        assert!(matches!(
            build_transition(&MarkovParams::new(vec![1e-9], 1e-3), &f),
            Err(Error::InfeasibleParams(_))
        ));
        assert_eq!(
            build_transition(&MarkovParams::new(vec![0.5, 0.5], 1e-3), &f).unwrap_err(),
            Error::DimensionMismatch {
                expected: 1,
                got: 2
            }
        );
        assert!(feasible(&[0.5], &f, 1e-3));
        assert!(!feasible(&[1.2], &f, 1e-3));
        assert!(!feasible(&[1e-9], &f, 1e-3));
        assert!(!feasible(&[f64::NAN], &f, 1e-3));
    }

    #[test]
    fn stationary_examples() {
        let mu = stationary_distribution(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert_abs_diff_eq!(mu[0], 0.5, epsilon = 1e-15);
        let mu = stationary_distribution(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_abs_diff_eq!(mu[1], 0.5, epsilon = 1e-15);
        assert_eq!(
            stationary_distribution(&[vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap_err(),
            Error::NotIrreducible
        );
        assert!(matches!(
            stationary_distribution(&[vec![0.7, 0.7], vec![0.5, 0.5]]),
            Err(Error::NonStochastic(_))
        ));
    }

    #[test]
    fn matrix_periodicity() {
        let p = TransitionMatrix::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(p.periodicity().period, 2);
        let p = TransitionMatrix::new(vec![
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap();
        assert_eq!(p.periodicity().period, 3);
    }

    #[test]
    fn entropy_rate_examples() {
        let fair = TransitionMatrix::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert_abs_diff_eq!(markov_entropy_rate(&fair), 1.0, epsilon = 1e-15);
        let golden_half = TransitionMatrix::new(vec![vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap();
        assert_abs_diff_eq!(markov_entropy_rate(&golden_half), 2.0 / 3.0, epsilon = 1e-14);
        let swap = TransitionMatrix::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(markov_entropy_rate(&swap), 0.0);
    }

    #[test]
    fn gradient_vanishes_at_symmetric_point() {
        let f = ForbiddenPairSet::unconstrained(2).unwrap();
        let g = markov_entropy_gradient(&MarkovParams::new(vec![0.5, 0.5], 1e-3), &f).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-14), "{g:?}");
    }

    #[test]
    fn gradient_vanishes_at_parry_point() {
        let pi_star = (3.0 - 5f64.sqrt()) / 2.0;
        let g = markov_entropy_gradient(&MarkovParams::new(vec![pi_star], 1e-3), &golden()).unwrap();
        assert!(g[0].abs() < 1e-8, "{g:?}");
    }

    fn fd_entropy(theta: &[f64], f: &ForbiddenPairSet, h: f64) -> Vec<f64> {
        (0..theta.len())
            .map(|c| {
                let mut up = theta.to_vec();
                let mut dn = theta.to_vec();
                up[c] += h;
                dn[c] -= h;
                let hu = markov_entropy_rate(&build_transition(&MarkovParams::new(up, 0.0), f).unwrap());
                let hd = markov_entropy_rate(&build_transition(&MarkovParams::new(dn, 0.0), f).unwrap());
                (hu - hd) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_difference_golden_half() {
        let f = golden();
        let g = markov_entropy_gradient(&MarkovParams::new(vec![0.5], 1e-3), &f).unwrap();
        let fd = fd_entropy(&[0.5], &f, 1e-6);
        assert!((g[0] - fd[0]).abs() < 1e-6, "{g:?} vs {fd:?}");
    }

    #[test]
    fn sensitivity_sums_to_zero_and_matches_fd() {
        let f = ForbiddenPairSet::unconstrained(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = MarkovParams::random(&f, 0.05, &mut rng).unwrap();
        let p = build_transition(&params, &f).unwrap();
        let dps = transition_derivatives(&f);
        for (c, dp) in dps.iter().enumerate() {
            let dmu = stationary_sensitivity(p.rows(), p.stationary(), dp).unwrap();
            assert!(dmu.iter().sum::<f64>().abs() < 1e-12);
            let h = 1e-6;
            let mut up = params.theta.clone();
            let mut dn = params.theta.clone();
            up[c] += h;
            dn[c] -= h;
            let mu_up = build_transition(&MarkovParams::new(up, 0.0), &f).unwrap();
            let mu_dn = build_transition(&MarkovParams::new(dn, 0.0), &f).unwrap();
            for s in 0..3 {
                let fd = (mu_up.stationary()[s] - mu_dn.stationary()[s]) / (2.0 * h);
                assert!((fd - dmu[s]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn power_iteration_agrees_with_direct_solve() {
        let p = vec![
            vec![0.0, 0.3, 0.7],
            vec![0.6, 0.0, 0.4],
            vec![1.0, 0.0, 0.0],
        ];
        let direct = stationary_distribution(&p).unwrap();
        let power = stationary_by_power(&p, 1e-15, 100_000);
        for (a, b) in direct.iter().zip(&power) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_lands_on_floor() {
        let f = golden();
        let out = project_feasible(&[1.5], &f, 1e-3);
        assert_abs_diff_eq!(out[0], 1.0 - 1e-3, epsilon = 1e-15);
        let out = project_feasible(&[-0.2], &f, 1e-3);
        assert_abs_diff_eq!(out[0], 1e-3, epsilon = 1e-15);
        assert_eq!(project_feasible(&[0.4], &f, 1e-3), vec![0.4]);
    }

    /// Enumerates `-(1/n) sum p(x_1^n) log2 p(x_1^n)` for a two-state chain.
    fn block_entropy_per_symbol(p: &TransitionMatrix, n: usize) -> f64 {
        let mu = p.stationary();
        let mut total = 0.0;
        for word in 0..(1usize << n) {
            let bit = |t: usize| (word >> t) & 1;
            let mut prob = mu[bit(0)];
            for t in 1..n {
                prob *= p.entry(bit(t - 1), bit(t));
            }
            total -= xlog2x(prob);
        }
        total / n as f64
    }

    #[test]
    fn entropy_rate_matches_block_enumeration() {
        // H(X_1^n) = H(mu) + (n-1) H(X_2|X_1) for a stationary chain
        for probs in [[0.3, 0.8], [0.5, 1.0], [0.9, 0.2]] {
            let p = TransitionMatrix::new(vec![
                vec![1.0 - probs[0], probs[0]],
                vec![probs[1], 1.0 - probs[1]],
            ])
            .unwrap();
            let rate = markov_entropy_rate(&p);
            let h_mu = entropy_bits(p.stationary());
            for n in [2, 6, 12] {
                let block = block_entropy_per_symbol(&p, n);
                let expected = rate + (h_mu - rate) / n as f64;
                assert!((block - expected).abs() < 1e-12, "n={n}");
            }
        }
    }

    fn constraints() -> Vec<ForbiddenPairSet> {
        vec![
            golden(),
            ForbiddenPairSet::unconstrained(2).unwrap(),
            ForbiddenPairSet::unconstrained(3).unwrap(),
            ForbiddenPairSet::rll(1, Some(3)).unwrap().0,
            ForbiddenPairSet::rll(2, None).unwrap().0,
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn random_params_build_valid_matrices(seed in any::<u64>(), which in 0usize..5) {
            let f = &constraints()[which];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = MarkovParams::random(f, 1e-3, &mut rng).unwrap();
            let p = build_transition(&params, f).unwrap();
            for (i, row) in p.rows().iter().enumerate() {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                for (j, &x) in row.iter().enumerate() {
                    if f.is_allowed(i, j) {
                        prop_assert!(x >= 1e-3);
                    } else {
                        prop_assert_eq!(x, 0.0);
                    }
                }
            }
            let mu = p.stationary();
            prop_assert!((mu.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for j in 0..mu.len() {
                let mp: f64 = (0..mu.len()).map(|i| mu[i] * p.entry(i, j)).sum();
                prop_assert!((mp - mu[j]).abs() <= 1e-10);
            }
        }

        #[test]
        fn gradient_matches_central_differences(seed in any::<u64>(), which in 0usize..5) {
            let f = &constraints()[which];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = MarkovParams::random(f, 0.02, &mut rng).unwrap();
            let g = markov_entropy_gradient(&params, f).unwrap();
            let fd = fd_entropy(&params.theta, f, 1e-6);
            for (a, b) in g.iter().zip(&fd) {
                prop_assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0), "{} vs {}", a, b);
            }
        }
    }
}
