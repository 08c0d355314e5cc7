//! Exact small-instance ground truths.
//!
//! Block entropies are computed by enumerating observation sequences and
//! running the forward recursion along a prefix tree, so each sequence of
//! length `n` costs one step rather than a sum over hidden paths. On top of
//! this sit the block mutual information `I_n`, conditional-entropy
//! sandwiches for the output entropy rate, finite-difference gradients, the
//! max-entropic (Parry) chain of a constraint, and two perturbation
//! experiments around the noiseless limit and around periodic inputs.

use rayon::prelude::*;

use crate::channel::{bsc_family, ChannelSpec};
use crate::constraint::ForbiddenPairSet;
use crate::error::{Error, Result};
use crate::hmm::HmmView;
use crate::markov::{entropy_bits, markov_entropy_rate, MarkovParams, TransitionMatrix};
use crate::stats::{fit_line, LineFit};

/// Upper limit on enumerated sequences.
pub const MAX_TERMS: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Enumeration,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactResult {
    pub value: f64,
    pub n: usize,
    pub method: Method,
    pub error_bound: Option<f64>,
}

/// Compensated (Neumaier) accumulator.
#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    sum: f64,
    comp: f64,
}

impl Acc {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn merge(&mut self, other: &Acc) {
        self.add(other.sum);
        self.add(other.comp);
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn guard(symbols: usize, n: usize) -> Result<()> {
    let terms = (symbols as f64).powi(n as i32);
    if terms > MAX_TERMS {
        return Err(Error::TooLarge {
            terms,
            limit: MAX_TERMS,
        });
    }
    Ok(())
}

/// `H(Z_1^t)` in bits for `t = 1..=n`, enumerating all sequences.
pub fn block_entropies(view: &HmmView, n: usize) -> Result<Vec<f64>> {
    guard(view.symbols(), n)?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let view = view.without_derivatives();
    let first: Vec<Vec<Acc>> = (0..view.symbols())
        .into_par_iter()
        .map(|z| {
            let mut acc = vec![Acc::default(); n];
            descend(&view, view.initial(), 1.0, z, 0, n, &mut acc);
            acc
        })
        .collect();
    let mut total = vec![Acc::default(); n];
    for part in &first {
        for (t, a) in total.iter_mut().zip(part) {
            t.merge(a);
        }
    }
    Ok(total.iter().map(Acc::value).collect())
}

fn descend(view: &HmmView, pred: &[f64], prob: f64, z: usize, depth: usize, n: usize, acc: &mut [Acc]) {
    let h = view.hidden();
    let mut filt = vec![0.0; h];
    let mut c = 0.0;
    for (i, f) in filt.iter_mut().enumerate() {
        *f = pred[i] * view.obs(i, z);
        c += *f;
    }
    if c <= 0.0 {
        return;
    }
    let p = prob * c;
    acc[depth].add(-p * p.log2());
    if depth + 1 == n {
        return;
    }
    let mut next = vec![0.0; h];
    for (i, f) in filt.iter().enumerate() {
        if *f > 0.0 {
            let f = f / c;
            for (j, v) in next.iter_mut().enumerate() {
                *v += f * view.trans(i, j);
            }
        }
    }
    for z2 in 0..view.symbols() {
        descend(view, &next, p, z2, depth + 1, n, acc);
    }
}

/// Exact block mutual information
/// `I_n = (H(X_1^n) + H(Y_1^n) - H(X_1^n, Y_1^n)) / n` under the stationary law.
pub fn exact_in(p: &TransitionMatrix, ch: &ChannelSpec, n: usize) -> Result<ExactResult> {
    if n == 0 {
        return Err(Error::OutOfRange("block length must be positive".into()));
    }
    let vy = HmmView::output(p, &[], ch)?;
    let vxy = HmmView::joint(p, &[], ch)?;
    guard(vxy.symbols(), n)?;
    let h_x = entropy_bits(p.stationary()) + (n - 1) as f64 * markov_entropy_rate(p);
    let h_y = block_entropies(&vy, n)?[n - 1];
    let h_xy = block_entropies(&vxy, n)?[n - 1];
    Ok(ExactResult {
        value: (h_x + h_y - h_xy) / n as f64,
        n,
        method: Method::Enumeration,
        error_bound: None,
    })
}

/// Central differences of [`exact_in`] along each free coordinate.
pub fn fd_gradient<B>(build: B, theta: &[f64], ch: &ChannelSpec, n: usize, h: f64) -> Result<Vec<f64>>
where
    B: Fn(&[f64]) -> Result<TransitionMatrix>,
{
    if !(1e-6..=1e-3).contains(&h) {
        return Err(Error::OutOfRange(format!("step {h} outside [1e-6, 1e-3]")));
    }
    (0..theta.len())
        .map(|c| {
            let mut up = theta.to_vec();
            let mut dn = theta.to_vec();
            up[c] += h;
            dn[c] -= h;
            let iu = exact_in(&build(&up)?, ch, n)?.value;
            let id = exact_in(&build(&dn)?, ch, n)?.value;
            Ok((iu - id) / (2.0 * h))
        })
        .collect()
}

/// Builder for [`fd_gradient`] over a constraint's free coordinates, with
/// no floor so that steps near the boundary stay valid.
pub fn chart_builder(f: &ForbiddenPairSet) -> impl Fn(&[f64]) -> Result<TransitionMatrix> + '_ {
    move |theta| crate::markov::build_transition(&MarkovParams::new(theta.to_vec(), 0.0), f)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BirchBounds {
    pub n: usize,
    /// `H(Y_n | Y_1^{n-1}, X_0, S_0)`.
    pub lower: f64,
    /// `H(Y_n | Y_1^{n-1})`.
    pub upper: f64,
}

impl BirchBounds {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn gap(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Sandwiches `lower_n <= H(Y) <= upper_n` for every `n = 1..=n_max`.
pub fn birch_sequence(p: &TransitionMatrix, ch: &ChannelSpec, n_max: usize) -> Result<Vec<BirchBounds>> {
    let view = HmmView::output(p, &[], ch)?;
    guard(view.symbols(), n_max)?;
    let uncond = block_entropies(&view, n_max)?;
    let hidden = view.hidden();
    let mut cond = vec![0.0; n_max];
    for h0 in 0..hidden {
        let weight = view.initial()[h0];
        if weight == 0.0 {
            continue;
        }
        let start: Vec<f64> = (0..hidden).map(|h1| view.trans(h0, h1)).collect();
        let given = block_entropies(&view.with_initial(start), n_max)?;
        for (c, g) in cond.iter_mut().zip(&given) {
            *c += weight * g;
        }
    }
    Ok((1..=n_max)
        .map(|n| {
            let diff = |h: &[f64]| if n == 1 { h[0] } else { h[n - 1] - h[n - 2] };
            BirchBounds {
                n,
                lower: diff(&cond),
                upper: diff(&uncond),
            }
        })
        .collect())
}

pub fn birch_bounds(p: &TransitionMatrix, ch: &ChannelSpec, n: usize) -> Result<BirchBounds> {
    if n == 0 {
        return Err(Error::OutOfRange("block length must be positive".into()));
    }
    Ok(*birch_sequence(p, ch, n)?.last().expect("n >= 1"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParryOptimum {
    pub theta_star: Vec<f64>,
    /// `log2` of the spectral radius of the constraint graph, in bits.
    pub capacity0: f64,
    pub spectral_radius: f64,
    pub matrix: TransitionMatrix,
}

/// Max-entropic chain `P_ij = A_ij v_j / (lambda v_i)` from the Perron pair
/// `(lambda, v)` of the adjacency matrix.
pub fn parry_optimum(f: &ForbiddenPairSet) -> Result<ParryOptimum> {
    let per = f.periodicity();
    if !per.is_primitive() {
        return Err(Error::NotMixing { period: per.period });
    }
    let adj = f.adjacency();
    let k = f.alphabet_size();
    let mut v = vec![1.0; k];
    for _ in 0..100_000 {
        let mut next = vec![0.0; k];
        for i in 0..k {
            for j in 0..k {
                if adj[i][j] {
                    next[i] += v[j];
                }
            }
        }
        let norm = next.iter().cloned().fold(0.0, f64::max);
        next.iter_mut().for_each(|x| *x /= norm);
        let diff = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if diff < 1e-16 {
            break;
        }
    }
    // Rayleigh-style refinement from the converged vector
    let lambda = (0..k)
        .map(|i| (0..k).filter(|&j| adj[i][j]).map(|j| v[j]).sum::<f64>() / v[i])
        .sum::<f64>()
        / k as f64;
    let mut rows = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            if adj[i][j] {
                rows[i][j] = v[j] / (lambda * v[i]);
            }
        }
        let s: f64 = rows[i].iter().sum();
        rows[i].iter_mut().for_each(|x| *x /= s);
    }
    let matrix = TransitionMatrix::new(rows)?;
    let theta_star = MarkovParams::from_matrix(&matrix, f, 0.0).theta;
    Ok(ParryOptimum {
        theta_star,
        capacity0: lambda.log2(),
        spectral_radius: lambda,
        matrix,
    })
}

/// `pi (2 - pi) / (1 + pi)`, the coefficient of `eps log(1/eps)` in the
/// output entropy of the golden-mean chain through a BSC near `eps = 0`.
pub fn high_snr_coefficient(pi: f64) -> f64 {
    pi * (2.0 - pi) / (1.0 + pi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientExperiment {
    pub pi: f64,
    pub target: f64,
    /// `(eps, (H(Y) - H(X)) / (eps log2(1/eps)), sandwich gap)` per grid point.
    pub ratios: Vec<(f64, f64, f64)>,
    pub fit: LineFit,
    /// Extrapolated `eps -> 0` value of the ratio.
    pub fitted: f64,
    pub relative_error: f64,
}

/// Golden-mean chain with `P[0][1] = pi` through BSC(`eps`) on a grid of
/// small `eps`. The ratio `(H(Y) - H(X)) / (eps log2(1/eps))` behaves like
/// `c + b / log2(1/eps)`; regressing on `1 / log2(1/eps)` extrapolates to
/// the coefficient `c`. `H(Y)` is the midpoint of the order-`n` sandwich.
pub fn asymptotic_coefficient_experiment(pi: f64, eps_grid: &[f64], n: usize) -> Result<CoefficientExperiment> {
    if !(0.0 < pi && pi < 1.0) {
        return Err(Error::OutOfRange(format!("pi = {pi} outside (0, 1)")));
    }
    if eps_grid.len() < 2 {
        return Err(Error::OutOfRange("need at least two noise levels".into()));
    }
    let f = ForbiddenPairSet::rll(1, None)?.0;
    let p = crate::markov::build_transition(&MarkovParams::new(vec![pi], 0.0), &f)?;
    let h_x = markov_entropy_rate(&p);
    let ratios = eps_grid
        .iter()
        .map(|&eps| {
            if !(0.0 < eps && eps < 0.5) {
                return Err(Error::OutOfRange(format!("eps = {eps} outside (0, 1/2)")));
            }
            let ch = bsc_family(eps)?.exact_channel();
            let b = birch_bounds(&p, &ch, n)?;
            let scale = eps * (1.0 / eps).log2();
            Ok((eps, (b.midpoint() - h_x) / scale, b.gap()))
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = ratios.iter().map(|r| 1.0 / (1.0 / r.0).log2()).collect();
    let ys: Vec<f64> = ratios.iter().map(|r| r.1).collect();
    let fit = fit_line(&xs, &ys).ok_or_else(|| Error::OutOfRange("degenerate noise grid".into()))?;
    let target = high_snr_coefficient(pi);
    Ok(CoefficientExperiment {
        pi,
        target,
        ratios,
        fit,
        fitted: fit.intercept,
        relative_error: (fit.intercept - target).abs() / target,
        })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationExperiment {
    /// Perturbed entry `(i, j)`, outside the cyclic blocks.
    pub entry: (usize, usize),
    /// `(delta, H(Y(delta)) - H(Y(0)))` per grid point.
    pub points: Vec<(f64, f64)>,
    pub fit: Option<LineFit>,
    pub all_positive: bool,
    pub in_envelope: bool,
}

/// Acceptance window for the log-log slope of the entropy increase.
pub const PERTURBATION_SLOPE_RANGE: (f64, f64) = (0.5, 1.05);

/// `Pi(delta) = (1 - delta) Pi + delta Q`, where `Q` equals `Pi` except that
/// row `i` puts all its mass on `j` and `(i, j)` lies outside the cyclic
/// blocks of the periodic `Pi`. Entropies are order-`n` sandwich midpoints.
pub fn perturbation_experiment(
    p: &TransitionMatrix,
    delta_grid: &[f64],
    ch: &ChannelSpec,
    entry: Option<(usize, usize)>,
    n: usize,
) -> Result<PerturbationExperiment> {
    let per = p.periodicity();
    if per.period < 2 {
        return Err(Error::NotPeriodic);
    }
    let k = p.size();
    let (i, j) = match entry {
        Some((i, j)) if per.is_block_entry(k, i, j) => {
            return Err(Error::OutOfRange(format!("({i}, {j}) lies in a cyclic block")))
        }
        Some(e) => e,
        None => (0..k)
            .flat_map(|i| (0..k).map(move |j| (i, j)))
            .find(|&(i, j)| !per.is_block_entry(k, i, j))
            .expect("a periodic chain has entries outside its blocks"),
    };
    let entropy_at = |delta: f64| -> Result<f64> {
        let mut rows = p.rows().to_vec();
        for (c, v) in rows[i].iter_mut().enumerate() {
            *v = (1.0 - delta) * *v + if c == j { delta } else { 0.0 };
        }
        let pd = TransitionMatrix::new(rows)?;
        Ok(birch_bounds(&pd, ch, n)?.midpoint())
    };
    let base = entropy_at(0.0)?;
    let points = delta_grid
        .iter()
        .map(|&d| {
            if !(0.0..=1.0).contains(&d) {
                return Err(Error::OutOfRange(format!("delta = {d} outside [0, 1]")));
            }
            Ok((d, if d == 0.0 { 0.0 } else { entropy_at(d)? - base }))
        })
        .collect::<Result<Vec<_>>>()?;
    let positive: Vec<&(f64, f64)> = points.iter().filter(|pt| pt.0 > 0.0).collect();
    let all_positive = positive.iter().all(|pt| pt.1 > 0.0);
    let fit = if all_positive {
        let xs: Vec<f64> = positive.iter().map(|pt| pt.0.ln()).collect();
        let ys: Vec<f64> = positive.iter().map(|pt| pt.1.ln()).collect();
        fit_line(&xs, &ys)
    } else {
        None
    };
    let (lo, hi) = PERTURBATION_SLOPE_RANGE;
    let in_envelope = all_positive && fit.is_some_and(|f| (lo..=hi).contains(&f.slope));
    Ok(PerturbationExperiment {
        entry: (i, j),
        points,
        fit,
        all_positive,
        in_envelope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::bsc_family;
    use crate::markov::{build_transition, markov_entropy_gradient};

    fn golden() -> ForbiddenPairSet {
        ForbiddenPairSet::rll(1, None).unwrap().0
    }

    fn golden_p(pi: f64) -> TransitionMatrix {
        build_transition(&MarkovParams::new(vec![pi], 0.0), &golden()).unwrap()
    }

    #[test]
    fn noiseless_mi_is_input_block_entropy() {
        let p = golden_p(0.4);
        let ch = bsc_family(0.0).unwrap().exact_channel();
        for n in [1, 4, 9] {
            let i = exact_in(&p, &ch, n).unwrap().value;
            let hx = (entropy_bits(p.stationary()) + (n - 1) as f64 * markov_entropy_rate(&p)) / n as f64;
            assert!((i - hx).abs() < 1e-12);
        }
    }

    #[test]
    fn useless_channel_has_zero_mi() {
        let p = TransitionMatrix::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let ch = bsc_family(0.5).unwrap().exact_channel();
        assert!(exact_in(&p, &ch, 4).unwrap().value.abs() < 1e-14);
    }

    #[test]
    fn too_large_is_rejected() {
        let p = golden_p(0.4);
        let ch = bsc_family(0.1).unwrap().exact_channel();
        assert!(matches!(exact_in(&p, &ch, 14), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn block_mi_is_roughly_stable_in_n() {
        let p = golden_p(0.5);
        let ch = bsc_family(0.1).unwrap().exact_channel();
        for n in [4, 6, 8] {
            let a = exact_in(&p, &ch, n).unwrap().value;
            let b = exact_in(&p, &ch, n + 2).unwrap().value;
            assert!((a - b).abs() < 2.0 / n as f64);
        }
    }

    #[test]
    fn fd_gradient_examples() {
        let f = ForbiddenPairSet::unconstrained(2).unwrap();
        let ch = bsc_family(0.1).unwrap().exact_channel();
        let g = fd_gradient(chart_builder(&f), &[0.5, 0.5], &ch, 6, 1e-4).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-8), "{g:?}");
        assert!(fd_gradient(chart_builder(&f), &[0.5, 0.5], &ch, 6, 1e-2).is_err());

        // noiseless route: I_n' -> H(X)' as n grows; at finite n they differ
        // by the derivative of (H(mu) - H(X)) / n
        let g = golden();
        let noiseless = bsc_family(0.0).unwrap().exact_channel();
        let h = 1e-4;
        let n = 10;
        let fd = fd_gradient(chart_builder(&g), &[0.45], &noiseless, n, h).unwrap()[0];
        let rate_grad = markov_entropy_gradient(&MarkovParams::new(vec![0.45], 0.0), &g).unwrap()[0];
        let mu_term = |pi: f64| {
            let p = golden_p(pi);
            entropy_bits(p.stationary()) - markov_entropy_rate(&p)
        };
        let correction = (mu_term(0.45 + h) - mu_term(0.45 - h)) / (2.0 * h) / n as f64;
        assert!((fd - rate_grad - correction).abs() < 1e-5 + 2.0 * h * h);

        // Richardson-style agreement between step sizes
        let ch = bsc_family(0.1).unwrap().exact_channel();
        let a = fd_gradient(chart_builder(&g), &[0.45], &ch, 8, 1e-4).unwrap()[0];
        let b = fd_gradient(chart_builder(&g), &[0.45], &ch, 8, 1e-5).unwrap()[0];
        assert!((a - b).abs() < 1e-5);
    }

    #[test]
    fn birch_noiseless_bounds_coincide() {
        let p = golden_p(0.3);
        let ch = bsc_family(0.0).unwrap().exact_channel();
        for b in birch_sequence(&p, &ch, 8).unwrap().iter().skip(1) {
            assert!((b.upper - b.lower).abs() < 1e-12);
            assert!((b.upper - markov_entropy_rate(&p)).abs() < 1e-12);
        }
    }

    #[test]
    fn birch_bounds_are_ordered_and_monotone() {
        let p = golden_p(0.5);
        let ch = bsc_family(0.1).unwrap().exact_channel();
        let seq = birch_sequence(&p, &ch, 10).unwrap();
        for w in seq.windows(2) {
            assert!(w[0].lower <= w[1].lower);
            assert!(w[1].lower <= w[1].upper);
            assert!(w[1].upper <= w[0].upper);
        }
    }

    #[test]
    fn parry_golden_mean() {
        let opt = parry_optimum(&golden()).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((opt.capacity0 - phi.log2()).abs() < 1e-12);
        assert!((opt.capacity0 - 0.694242).abs() < 1e-6);
        assert!((opt.theta_star[0] - (3.0 - 5f64.sqrt()) / 2.0).abs() < 1e-12);
        let g = markov_entropy_gradient(&MarkovParams::new(opt.theta_star.clone(), 0.0), &golden()).unwrap();
        assert!(g[0].abs() < 1e-8);
        assert!((markov_entropy_rate(&opt.matrix) - opt.capacity0).abs() < 1e-12);
    }

    #[test]
    fn parry_unconstrained_and_rll_1_2() {
        let opt = parry_optimum(&ForbiddenPairSet::unconstrained(2).unwrap()).unwrap();
        assert!((opt.capacity0 - 1.0).abs() < 1e-12);
        assert!(opt.theta_star.iter().all(|t| (t - 0.5).abs() < 1e-12));

        // largest root of x^3 - x - 1 by bisection
        let (mut lo, mut hi) = (1.0f64, 2.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid.powi(3) - mid - 1.0 > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let f = ForbiddenPairSet::rll(1, Some(2)).unwrap().0;
        let opt = parry_optimum(&f).unwrap();
        assert!((opt.capacity0 - lo.log2()).abs() < 1e-12);
        let g = markov_entropy_gradient(&MarkovParams::new(opt.theta_star.clone(), 0.0), &f).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-8), "{g:?}");
    }

    #[test]
    fn parry_rejects_periodic_constraint() {
        let f = ForbiddenPairSet::new(2, [(0, 0), (1, 1)]).unwrap();
        assert_eq!(parry_optimum(&f).unwrap_err(), Error::NotMixing { period: 2 });
    }

    #[test]
    fn coefficient_targets() {
        assert!((high_snr_coefficient(0.5) - 0.5).abs() < 1e-15);
        assert!((high_snr_coefficient(0.3) - 0.51 / 1.3).abs() < 1e-15);
        assert!(high_snr_coefficient(1e-9) < 1e-8);
    }

    #[test]
    fn perturbation_of_two_cycle() {
        let p = TransitionMatrix::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let ch = bsc_family(0.0).unwrap().exact_channel();
        let exp = perturbation_experiment(&p, &[0.0, 0.01], &ch, None, 12).unwrap();
        assert_eq!(exp.entry, (0, 0));
        assert_eq!(exp.points[0], (0.0, 0.0));
        assert!(exp.points[1].1 > 0.0);
        let aperiodic = golden_p(0.5);
        assert_eq!(
            perturbation_experiment(&aperiodic, &[0.01], &ch, None, 12).unwrap_err(),
            Error::NotPeriodic
        );
    }
}
