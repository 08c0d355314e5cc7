#![allow(dead_code)]

use fsc::hmm::HmmView;
use fsc::markov::transition_derivatives;
use fsc::*;
use rand::Rng;

/// Every sequence of length `n` over `k` symbols, in lexicographic order.
pub fn sequences(k: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|s| {
                (0..k).map(move |z| {
                    let mut t = s.clone();
                    t.push(z);
                    t
                })
            })
            .collect();
    }
    out
}

/// Stationary law of the hidden `(x, s)` chain by power iteration, built
/// from the model primitives only.
pub fn hidden_stationary(p: &TransitionMatrix, ch: &ChannelSpec) -> Vec<f64> {
    let (k, ns) = (p.size(), ch.states());
    let h = k * ns;
    let t = hidden_kernel(p, ch);
    let mut v = vec![1.0 / h as f64; h];
    for _ in 0..20_000 {
        let mut next = vec![0.0; h];
        for a in 0..h {
            for b in 0..h {
                // lazy chain so periodic inputs still converge
                next[b] += v[a] * 0.5 * (t[a][b] + if a == b { 1.0 } else { 0.0 });
            }
        }
        v = next;
    }
    v
}

pub fn hidden_kernel(p: &TransitionMatrix, ch: &ChannelSpec) -> Vec<Vec<f64>> {
    let (k, ns) = (p.size(), ch.states());
    let mut t = vec![vec![0.0; k * ns]; k * ns];
    for x in 0..k {
        for s in 0..ns {
            for x2 in 0..k {
                for s2 in 0..ns {
                    t[x * ns + s][x2 * ns + s2] = p.entry(x, x2) * ch.state_prob(x2, s, s2);
                }
            }
        }
    }
    t
}

/// `p(y_1^n)` by summing over every hidden path.
pub fn brute_output_prob(p: &TransitionMatrix, ch: &ChannelSpec, init: &[f64], y: &[usize]) -> f64 {
    let ns = ch.states();
    let t = hidden_kernel(p, ch);
    let h = init.len();
    sequences(h, y.len())
        .iter()
        .map(|path| {
            let mut w = init[path[0]];
            for (idx, &hid) in path.iter().enumerate() {
                if idx > 0 {
                    w *= t[path[idx - 1]][hid];
                }
                w *= ch.emit_prob(hid / ns, hid % ns, y[idx]);
            }
            w
        })
        .sum()
}

/// `p(x_1^n, y_1^n)` by summing over channel state paths.
pub fn brute_joint_prob(p: &TransitionMatrix, ch: &ChannelSpec, init: &[f64], x: &[usize], y: &[usize]) -> f64 {
    let ns = ch.states();
    let t = hidden_kernel(p, ch);
    sequences(ns, x.len())
        .iter()
        .map(|states| {
            let hid: Vec<usize> = x.iter().zip(states).map(|(&x, &s)| x * ns + s).collect();
            let mut w = init[hid[0]];
            for idx in 0..hid.len() {
                if idx > 0 {
                    w *= t[hid[idx - 1]][hid[idx]];
                }
                w *= ch.emit_prob(x[idx], states[idx], y[idx]);
            }
            w
        })
        .sum()
}

pub struct Model {
    pub constraint: ForbiddenPairSet,
    pub params: MarkovParams,
    pub channel: ChannelSpec,
}

impl Model {
    pub fn transition(&self) -> TransitionMatrix {
        build_transition(&self.params, &self.constraint).unwrap()
    }

    pub fn output_view(&self, theta: &[f64]) -> HmmView {
        let p = build_transition(&MarkovParams::new(theta.to_vec(), 0.0), &self.constraint).unwrap();
        HmmView::output(&p, &transition_derivatives(&self.constraint), &self.channel).unwrap()
    }

    pub fn joint_view(&self, theta: &[f64]) -> HmmView {
        let p = build_transition(&MarkovParams::new(theta.to_vec(), 0.0), &self.constraint).unwrap();
        HmmView::joint(&p, &transition_derivatives(&self.constraint), &self.channel).unwrap()
    }
}

fn random_row<R: Rng>(rng: &mut R, len: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| floor + rng.random::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

/// A random constraint, interior point and channel (memoryless or with two
/// states).
pub fn random_model<R: Rng>(rng: &mut R) -> Model {
    let constraint = match rng.random_range(0..4) {
        0 => ForbiddenPairSet::unconstrained(2).unwrap(),
        1 => ForbiddenPairSet::rll(1, None).unwrap().0,
        2 => ForbiddenPairSet::rll(1, Some(2)).unwrap().0,
        _ => ForbiddenPairSet::new(3, [(0, 0), (1, 2)]).unwrap(),
    };
    let params = MarkovParams::random(&constraint, 0.05, rng).unwrap();
    let k = constraint.alphabet_size();
    let channel = if rng.random_bool(0.5) {
        let eps = rng.random_range(0.05..0.4);
        let ch = bsc_family(eps).unwrap().exact_channel();
        if k == 2 {
            ch
        } else {
            ch.with_input_labels(&(0..k).map(|i| i % 2).collect::<Vec<_>>()).unwrap()
        }
    } else {
        let (ns, ny) = (2, 2);
        let state: Vec<f64> = (0..k * ns).flat_map(|_| random_row(rng, ns, 0.2)).collect();
        let emission: Vec<f64> = (0..k * ns).flat_map(|_| random_row(rng, ny, 0.1)).collect();
        ChannelSpec::new(k, ns, ny, state, emission).unwrap()
    };
    Model {
        constraint,
        params,
        channel,
    }
}
