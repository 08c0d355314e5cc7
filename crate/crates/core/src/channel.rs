//! Finite-state channels and joint path sampling.
//!
//! A channel is given by a state kernel `p(s_n | x_n, s_{n-1})` and an
//! emission kernel `p(y_n | x_n, s_n)`. The memoryless BSC and BEC families
//! are one-state channels parameterized by a noise level `eps`; at `eps = 0`
//! they reduce to the noiseless map `Phi`.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::markov::TransitionMatrix;
use crate::rng::StreamId;

const KERNEL_TOL: f64 = 1e-12;
const MAX_BURN_IN: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    inputs: usize,
    states: usize,
    outputs: usize,
    /// Indexed `[x][s_prev][s]`.
    state_kernel: Vec<f64>,
    /// Indexed `[x][s][y]`.
    emission: Vec<f64>,
}

impl ChannelSpec {
    pub fn new(
        inputs: usize,
        states: usize,
        outputs: usize,
        state_kernel: Vec<f64>,
        emission: Vec<f64>,
    ) -> Result<Self> {
        if inputs == 0 || states == 0 || outputs == 0 {
            return Err(Error::InvalidKernel("alphabet sizes must be positive".into()));
        }
        if state_kernel.len() != inputs * states * states {
            return Err(Error::DimensionMismatch {
                expected: inputs * states * states,
                got: state_kernel.len(),
            });
        }
        if emission.len() != inputs * states * outputs {
            return Err(Error::DimensionMismatch {
                expected: inputs * states * outputs,
                got: emission.len(),
            });
        }
        if let Some(v) = state_kernel.iter().find(|&&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidKernel(format!(
                "state kernel entries must be strictly positive, found {v}"
            )));
        }
        if let Some(v) = emission.iter().find(|&&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidKernel(format!(
                "emission entries must be nonnegative, found {v}"
            )));
        }
        for (r, row) in state_kernel.chunks(states).enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > KERNEL_TOL {
                return Err(Error::InvalidKernel(format!("state kernel row {r} sums to {s}")));
            }
        }
        for (r, row) in emission.chunks(outputs).enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > KERNEL_TOL {
                return Err(Error::InvalidKernel(format!("emission row {r} sums to {s}")));
            }
        }
        Ok(ChannelSpec {
            inputs,
            states,
            outputs,
            state_kernel,
            emission,
        })
    }

    /// One-state channel with emission `kernel[x][y]`.
    pub fn memoryless(kernel: &[Vec<f64>]) -> Result<Self> {
        let inputs = kernel.len();
        let outputs = kernel.first().map_or(0, Vec::len);
        if kernel.iter().any(|r| r.len() != outputs) {
            return Err(Error::InvalidKernel("ragged emission kernel".into()));
        }
        Self::new(
            inputs,
            1,
            outputs,
            vec![1.0; inputs],
            kernel.iter().flatten().copied().collect(),
        )
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    #[inline]
    pub fn state_prob(&self, x: usize, s_prev: usize, s: usize) -> f64 {
        self.state_kernel[(x * self.states + s_prev) * self.states + s]
    }

    #[inline]
    pub fn emit_prob(&self, x: usize, s: usize, y: usize) -> f64 {
        self.emission[(x * self.states + s) * self.outputs + y]
    }

    /// Re-indexes the inputs: new input `i` behaves like old input
    /// `labels[i]`. Used to drive a binary channel from a constraint whose
    /// alphabet is a follower-set graph.
    pub fn with_input_labels(&self, labels: &[usize]) -> Result<Self> {
        if let Some(&l) = labels.iter().find(|&&l| l >= self.inputs) {
            return Err(Error::OutOfRange(format!("label {l} >= {}", self.inputs)));
        }
        let ss = self.states * self.states;
        let so = self.states * self.outputs;
        let state_kernel = labels
            .iter()
            .flat_map(|&l| self.state_kernel[l * ss..(l + 1) * ss].iter().copied())
            .collect();
        let emission = labels
            .iter()
            .flat_map(|&l| self.emission[l * so..(l + 1) * so].iter().copied())
            .collect();
        Self::new(labels.len(), self.states, self.outputs, state_kernel, emission)
    }

    /// Whether every input deterministically produces one output.
    pub fn is_noiseless(&self) -> bool {
        self.emission.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Transition matrix of the joint chain `(x, s)`, indexed `x * |S| + s`.
    pub fn joint_transition(&self, p: &TransitionMatrix) -> Vec<Vec<f64>> {
        let n = self.inputs * self.states;
        let mut t = vec![vec![0.0; n]; n];
        for x in 0..self.inputs {
            for s in 0..self.states {
                for x2 in 0..self.inputs {
                    let px = p.entry(x, x2);
                    if px == 0.0 {
                        continue;
                    }
                    for s2 in 0..self.states {
                        t[x * self.states + s][x2 * self.states + s2] =
                            px * self.state_prob(x2, s, s2);
                    }
                }
            }
        }
        t
    }

    /// Steps discarded before recording a path: `ceil(50 ln|S| / ln(1/l2))`
    /// with `l2` the second largest eigenvalue modulus of the joint chain,
    /// capped at 200. Zero for one-state channels.
    pub fn burn_in(&self, p: &TransitionMatrix) -> usize {
        if self.states == 1 {
            return 0;
        }
        let t = self.joint_transition(p);
        let n = t.len();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| t[i][j]);
        let mut moduli: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.norm()).collect();
        moduli.sort_by(|a, b| b.total_cmp(a));
        let l2 = moduli.get(1).copied().unwrap_or(0.0);
        if l2 <= 0.0 {
            return 0;
        }
        if l2 >= 1.0 - 1e-12 {
            return MAX_BURN_IN;
        }
        let steps = (50.0 * (self.states as f64).ln() / (1.0 / l2).ln()).ceil();
        (steps as usize).min(MAX_BURN_IN)
    }

    /// Parses the channel file format (see [`ChannelSpec::to_text`]).
    pub fn parse(text: &str) -> Result<Self> {
        let tokens: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .flat_map(|(i, l)| {
                l.split('#')
                    .next()
                    .unwrap_or("")
                    .split_whitespace()
                    .map(move |t| (i + 1, t))
            })
            .collect();
        let mut it = tokens.into_iter();
        fn expect_key<'a, I: Iterator<Item = (usize, &'a str)>>(key: &str, it: &mut I) -> Result<()> {
            match it.next() {
                Some((_, k)) if k == key => Ok(()),
                Some((line, k)) => Err(Error::Parse {
                    line,
                    msg: format!("expected `{key}`, got {k:?}"),
                }),
                None => Err(Error::Parse {
                    line: 0,
                    msg: format!("missing `{key}`"),
                }),
            }
        }
        fn count<'a, I: Iterator<Item = (usize, &'a str)>>(it: &mut I) -> Result<usize> {
            match it.next() {
                Some((line, v)) => v.parse().map_err(|e| Error::Parse {
                    line,
                    msg: format!("bad count {v:?}: {e}"),
                }),
                None => Err(Error::Parse {
                    line: 0,
                    msg: "unexpected end of file".into(),
                }),
            }
        }
        fn values<'a, I: Iterator<Item = (usize, &'a str)>>(it: &mut I, n: usize) -> Result<Vec<f64>> {
            (0..n)
                .map(|_| match it.next() {
                    Some((line, v)) => v.parse().map_err(|e| Error::Parse {
                        line,
                        msg: format!("bad probability {v:?}: {e}"),
                    }),
                    None => Err(Error::Parse {
                        line: 0,
                        msg: "unexpected end of file in kernel".into(),
                    }),
                })
                .collect()
        }
        expect_key("inputs", &mut it)?;
        let inputs = count(&mut it)?;
        expect_key("states", &mut it)?;
        let states = count(&mut it)?;
        expect_key("outputs", &mut it)?;
        let outputs = count(&mut it)?;
        expect_key("state_kernel", &mut it)?;
        let state_kernel = values(&mut it, inputs * states * states)?;
        expect_key("emission", &mut it)?;
        let emission = values(&mut it, inputs * states * outputs)?;
        if let Some((line, t)) = it.next() {
            return Err(Error::Parse {
                line,
                msg: format!("trailing token {t:?}"),
            });
        }
        Self::new(inputs, states, outputs, state_kernel, emission)
    }

    /// Writes the channel file format:
    ///
    /// ```text
    /// inputs 2
    /// states 1
    /// outputs 2
    /// state_kernel
    /// 1
    /// 1
    /// emission
    /// 0.9 0.1
    /// 0.1 0.9
    /// ```
    ///
    /// Kernels are row-major, `state_kernel` over `[x][s_prev][s]` and
    /// `emission` over `[x][s][y]`, one row per line.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "inputs {}\nstates {}\noutputs {}\nstate_kernel\n",
            self.inputs, self.states, self.outputs
        );
        for row in self.state_kernel.chunks(self.states) {
            let _ = writeln!(out, "{}", join(row));
        }
        out.push_str("emission\n");
        for row in self.emission.chunks(self.outputs) {
            let _ = writeln!(out, "{}", join(row));
        }
        out
    }
}

fn join(row: &[f64]) -> String {
    row.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    Bsc,
    Bec,
}

impl FamilyKind {
    pub fn max_epsilon(self) -> f64 {
        match self {
            FamilyKind::Bsc => 0.5,
            FamilyKind::Bec => 1.0,
        }
    }

    /// `p(y | x)` at noise level `eps`; polynomial in `eps` entrywise.
    pub fn kernel_at(self, eps: f64) -> Vec<Vec<f64>> {
        match self {
            FamilyKind::Bsc => vec![vec![1.0 - eps, eps], vec![eps, 1.0 - eps]],
            // outputs: 0, 1, erasure
            FamilyKind::Bec => vec![vec![1.0 - eps, 0.0, eps], vec![0.0, 1.0 - eps, eps]],
        }
    }

    /// The noiseless output of each input.
    pub fn phi(self) -> Vec<usize> {
        vec![0, 1]
    }
}

/// A memoryless channel family evaluated at a fixed noise level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisyMemorylessFamily {
    pub kind: FamilyKind,
    pub epsilon: f64,
}

impl NoisyMemorylessFamily {
    pub fn new(kind: FamilyKind, epsilon: f64) -> Result<Self> {
        if !(0.0..=kind.max_epsilon()).contains(&epsilon) {
            return Err(Error::OutOfRange(format!(
                "{kind:?} epsilon {epsilon} outside [0, {}]",
                kind.max_epsilon()
            )));
        }
        Ok(NoisyMemorylessFamily { kind, epsilon })
    }

    pub fn kernel(&self) -> Vec<Vec<f64>> {
        self.kind.kernel_at(self.epsilon)
    }

    pub fn phi(&self) -> Vec<usize> {
        self.kind.phi()
    }

    /// One-state channel without the simulator's non-degeneracy check.
    /// Exact enumeration accepts the noiseless limit.
    pub fn exact_channel(&self) -> ChannelSpec {
        ChannelSpec::memoryless(&self.kernel()).expect("family kernels are stochastic")
    }
}

pub fn bsc_family(epsilon: f64) -> Result<NoisyMemorylessFamily> {
    NoisyMemorylessFamily::new(FamilyKind::Bsc, epsilon)
}

pub fn bec_family(epsilon: f64) -> Result<NoisyMemorylessFamily> {
    NoisyMemorylessFamily::new(FamilyKind::Bec, epsilon)
}

/// One-state channel for Monte Carlo use. The noiseless limit `eps = 0` is
/// rejected: conditionals of the output process are then unbounded below
/// on the simulator's scale and it must be handled by exact enumeration.
pub fn lift_memoryless(family: &NoisyMemorylessFamily) -> Result<ChannelSpec> {
    if family.epsilon <= 0.0 {
        return Err(Error::DegenerateKernel(format!(
            "{:?} at epsilon = 0 is the noiseless limit",
            family.kind
        )));
    }
    Ok(family.exact_channel())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplePath {
    pub x: Vec<usize>,
    pub s: Vec<usize>,
    pub y: Vec<usize>,
    pub seed_id: Option<StreamId>,
}

impl SamplePath {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

#[inline]
fn draw<R: Rng + ?Sized>(rng: &mut R, probs: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Samples `(x, s, y)` of length `n` after the channel's burn-in.
pub fn sample_path<R: Rng + ?Sized>(
    p: &TransitionMatrix,
    ch: &ChannelSpec,
    n: usize,
    rng: &mut R,
) -> SamplePath {
    assert_eq!(p.size(), ch.inputs(), "input alphabet mismatch");
    let burn = ch.burn_in(p);
    let total = burn + n;
    let mut path = SamplePath {
        x: Vec::with_capacity(n),
        s: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        seed_id: None,
    };
    let ns = ch.states();
    let mut s_prev = rng.random_range(0..ns);
    let mut x_prev = usize::MAX;
    for t in 0..total {
        let x = if t == 0 {
            draw(rng, p.stationary().iter().copied())
        } else {
            draw(rng, p.rows()[x_prev].iter().copied())
        };
        let s = if ns == 1 {
            0
        } else {
            draw(rng, (0..ns).map(|s| ch.state_prob(x, s_prev, s)))
        };
        let y = draw(rng, (0..ch.outputs()).map(|y| ch.emit_prob(x, s, y)));
        if t >= burn {
            path.x.push(x);
            path.s.push(s);
            path.y.push(y);
        }
        x_prev = x;
        s_prev = s;
    }
    path
}

/// [`sample_path`] on a dedicated stream.
pub fn sample_path_stream(
    p: &TransitionMatrix,
    ch: &ChannelSpec,
    n: usize,
    id: StreamId,
) -> SamplePath {
    let mut path = sample_path(p, ch, n, &mut id.rng());
    path.seed_id = Some(id);
    path
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::ForbiddenPairSet;
    use crate::markov::{build_transition, MarkovParams};

    fn golden(pi: f64) -> TransitionMatrix {
        let f = ForbiddenPairSet::rll(1, None).unwrap().0;
        build_transition(&MarkovParams::new(vec![pi], 1e-3), &f).unwrap()
    }

    #[test]
    fn bsc_kernels() {
        assert_eq!(bsc_family(0.0).unwrap().kernel(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(bsc_family(0.5).unwrap().kernel(), vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        assert_eq!(bsc_family(0.1).unwrap().kernel(), vec![vec![0.9, 0.1], vec![0.1, 0.9]]);
        assert!(matches!(bsc_family(0.6), Err(Error::OutOfRange(_))));
        assert!(matches!(bsc_family(-0.1), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn bec_kernels() {
        let k = bec_family(0.0).unwrap().kernel();
        assert_eq!(k, vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        let k = bec_family(1.0).unwrap().kernel();
        assert!(k.iter().all(|r| r[2] == 1.0));
        let k = bec_family(0.25).unwrap().kernel();
        assert_eq!((k[0][0], k[0][2], k[0][1]), (0.75, 0.25, 0.0));
        assert!(bec_family(1.5).is_err());
    }

    #[test]
    fn noiseless_limit_keeps_phi() {
        for fam in [bsc_family(0.0).unwrap(), bec_family(0.0).unwrap()] {
            let k = fam.kernel();
            for (x, &y) in fam.phi().iter().enumerate() {
                assert_eq!(k[x][y], 1.0);
            }
        }
    }

    #[test]
    fn lift_rejects_noiseless_limit() {
        let spec = lift_memoryless(&bsc_family(0.1).unwrap()).unwrap();
        assert_eq!((spec.inputs(), spec.states(), spec.outputs()), (2, 1, 2));
        assert_eq!(spec.emit_prob(0, 0, 1), 0.1);
        assert!(matches!(
            lift_memoryless(&bsc_family(0.0).unwrap()),
            Err(Error::DegenerateKernel(_))
        ));
        let bec = lift_memoryless(&bec_family(0.25).unwrap()).unwrap();
        assert_eq!(bec.outputs(), 3);
    }

    #[test]
    fn rejects_bad_kernels() {
        assert!(matches!(
            ChannelSpec::new(1, 2, 1, vec![1.0, 0.0, 0.5, 0.5], vec![1.0, 1.0]),
            Err(Error::InvalidKernel(_))
        ));
        assert!(matches!(
            ChannelSpec::memoryless(&[vec![0.5, 0.6]]),
            Err(Error::InvalidKernel(_))
        ));
    }

    #[test]
    fn channel_file_round_trip() {
        let ch = ChannelSpec::new(
            2,
            2,
            2,
            vec![0.9, 0.1, 0.2, 0.8, 0.7, 0.3, 0.4, 0.6],
            vec![0.95, 0.05, 0.6, 0.4, 0.1, 0.9, 0.3, 0.7],
        )
        .unwrap();
        assert_eq!(ChannelSpec::parse(&ch.to_text()).unwrap(), ch);
        let err = ChannelSpec::parse("inputs 2\nstates x\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn noiseless_path_copies_input() {
        let ch = bsc_family(0.0).unwrap().exact_channel();
        let path = sample_path_stream(&golden(0.5), &ch, 5, StreamId::new(1, 0));
        assert_eq!(path.x, path.y);
        assert_eq!(path.len(), 5);
    }

    #[test]
    fn forbidden_pair_never_sampled() {
        let ch = lift_memoryless(&bsc_family(0.1).unwrap()).unwrap();
        let path = sample_path_stream(&golden(0.5), &ch, 10_000, StreamId::new(2, 0));
        assert!(path.x.windows(2).all(|w| !(w[0] == 1 && w[1] == 1)));
    }

    #[test]
    fn marginal_matches_stationary_law() {
        let ch = lift_memoryless(&bsc_family(0.1).unwrap()).unwrap();
        let n = 100_000;
        let path = sample_path_stream(&golden(0.5), &ch, n, StreamId::new(3, 0));
        let ones = path.x.iter().filter(|&&x| x == 1).count() as f64 / n as f64;
        // the chain is positively correlated only through the forbidden pair;
        // inflate the binomial sigma by the chain's variance factor (< 2)
        let sigma = 2.0 * ((1.0 / 3.0) * (2.0 / 3.0) / n as f64).sqrt();
        assert!((ones - 1.0 / 3.0).abs() < 3.0 * sigma, "{ones}");
    }

    #[test]
    fn bsc_flip_rate() {
        let eps = 0.1;
        let ch = lift_memoryless(&bsc_family(eps).unwrap()).unwrap();
        let n = 200_000;
        let path = sample_path_stream(&golden(0.4), &ch, n, StreamId::new(4, 0));
        let flips = path.x.iter().zip(&path.y).filter(|(a, b)| a != b).count() as f64;
        let rate = flips / n as f64;
        assert!((rate - eps).abs() < 4.0 * (eps * (1.0 - eps) / n as f64).sqrt());
    }

    #[test]
    fn transition_frequencies_pass_chi_square() {
        let p = TransitionMatrix::new(vec![
            vec![0.2, 0.5, 0.3],
            vec![0.6, 0.0, 0.4],
            vec![0.1, 0.9, 0.0],
        ])
        .unwrap();
        let ch = ChannelSpec::memoryless(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        let n = 1_000_000;
        let path = sample_path_stream(&p, &ch, n, StreamId::new(5, 0));
        let mut counts = vec![vec![0usize; 3]; 3];
        for w in path.x.windows(2) {
            counts[w[0]][w[1]] += 1;
        }
        let mut chi2 = 0.0;
        let mut dof = 0;
        for i in 0..3 {
            let row: usize = counts[i].iter().sum();
            for j in 0..3 {
                let expected = row as f64 * p.entry(i, j);
                if expected > 0.0 {
                    chi2 += (counts[i][j] as f64 - expected).powi(2) / expected;
                    dof += 1;
                } else {
                    assert_eq!(counts[i][j], 0);
                }
            }
            dof -= 1;
        }
        // chi-square 0.99 quantile, 4 degrees of freedom
        assert_eq!(dof, 4);
        assert!(chi2 < 13.277, "chi2 = {chi2}");
    }

    #[test]
    fn sampling_is_reproducible() {
        let ch = ChannelSpec::new(
            2,
            2,
            2,
            vec![0.9, 0.1, 0.2, 0.8, 0.7, 0.3, 0.4, 0.6],
            vec![0.95, 0.05, 0.6, 0.4, 0.1, 0.9, 0.3, 0.7],
        )
        .unwrap();
        let p = golden(0.3);
        let a = sample_path_stream(&p, &ch, 500, StreamId::new(9, 4));
        let b = sample_path_stream(&p, &ch, 500, StreamId::new(9, 4));
        let c = sample_path_stream(&p, &ch, 500, StreamId::new(9, 5));
        assert_eq!(a, b);
        assert_ne!(a.y, c.y);
        assert!(ch.burn_in(&p) > 0 && ch.burn_in(&p) <= MAX_BURN_IN);
    }

    #[test]
    fn labels_rebuild_rll_channel() {
        let ch = bsc_family(0.1).unwrap().exact_channel();
        let relabeled = ch.with_input_labels(&[0, 0, 1]).unwrap();
        assert_eq!(relabeled.inputs(), 3);
        assert_eq!(relabeled.emit_prob(2, 0, 1), 0.9);
        assert_eq!(relabeled.emit_prob(1, 0, 1), 0.1);
    }
}
