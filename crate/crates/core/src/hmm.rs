//! Forward recursions for hidden Markov views of a channel, carrying the
//! derivatives of every conditional probability with respect to the input
//! chain's parameters.
//!
//! Two views are built from one `(P, channel)` pair. Both use the hidden
//! alphabet `X x S` (index `x * |S| + s`):
//!
//! * [`HmmView::output`] observes `y`, so sequence probabilities are the law
//!   of `Y`;
//! * [`HmmView::joint`] observes `z = x * |Y| + y`, the input coordinate
//!   being emitted deterministically, so sequence probabilities are the law
//!   of `(X, Y)`.
//!
//! The recursion keeps the predictive law `p(h_t | z_1^{t-1})`, normalized at
//! every step, together with its derivative. Each step emits the conditional
//! `c_t = p(z_t | z_1^{t-1})` and `dc_t`, so the log-likelihood and its
//! gradient accumulate as sums of `log c_t` and `dc_t / c_t` without
//! underflow.

use crate::channel::ChannelSpec;
use crate::error::{Error, Result};
use crate::markov::{stationary_distribution, stationary_sensitivity, TransitionMatrix};

/// Conditionals at or below this value are reported as [`Error::ZeroLikelihood`].
pub const UNDERFLOW_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct HmmView {
    hidden: usize,
    symbols: usize,
    initial: Vec<f64>,
    d_initial: Vec<Vec<f64>>,
    /// `trans[h * hidden + h2] = T(h2 | h)`.
    trans: Vec<f64>,
    /// Nonzero entries `(h, h2, dT)` of each derivative kernel.
    d_trans: Vec<Vec<(usize, usize, f64)>>,
    /// `obs[h * symbols + z] = O(z | h)`.
    obs: Vec<f64>,
}

impl HmmView {
    /// General constructor. `d_trans[i]` is the dense derivative of `trans`
    /// along coordinate `i`; `initial` and `d_initial` default to the
    /// stationary law of `trans` and its sensitivity when `None`.
    pub fn new(
        trans: Vec<Vec<f64>>,
        d_trans: Vec<Vec<Vec<f64>>>,
        obs: Vec<Vec<f64>>,
        initial: Option<(Vec<f64>, Vec<Vec<f64>>)>,
    ) -> Result<Self> {
        let hidden = trans.len();
        let symbols = obs.first().map_or(0, Vec::len);
        if obs.len() != hidden || obs.iter().any(|r| r.len() != symbols) {
            return Err(Error::DimensionMismatch {
                expected: hidden,
                got: obs.len(),
            });
        }
        for (h, row) in obs.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 || row.iter().any(|&v| v < 0.0) {
                return Err(Error::InvalidKernel(format!("observation row {h} sums to {s}")));
            }
        }
        for (i, d) in d_trans.iter().enumerate() {
            for (h, row) in d.iter().enumerate() {
                let s: f64 = row.iter().sum();
                if s.abs() > 1e-10 {
                    return Err(Error::InvalidKernel(format!(
                        "derivative kernel {i} row {h} sums to {s}"
                    )));
                }
            }
        }
        let (initial, d_initial) = match initial {
            Some(v) => v,
            None => {
                let mu = stationary_distribution(&trans)?;
                let dmu = d_trans
                    .iter()
                    .map(|d| stationary_sensitivity(&trans, &mu, d))
                    .collect::<Result<Vec<_>>>()?;
                (mu, dmu)
            }
        };
        let sparse = d_trans
            .iter()
            .map(|d| {
                let mut nz = Vec::new();
                for (h, row) in d.iter().enumerate() {
                    for (h2, &v) in row.iter().enumerate() {
                        if v != 0.0 {
                            nz.push((h, h2, v));
                        }
                    }
                }
                nz
            })
            .collect();
        Ok(HmmView {
            hidden,
            symbols,
            initial,
            d_initial,
            trans: trans.into_iter().flatten().collect(),
            d_trans: sparse,
            obs: obs.into_iter().flatten().collect(),
        })
    }

    /// View whose observations are the channel outputs `y`.
    pub fn output(p: &TransitionMatrix, dps: &[Vec<Vec<f64>>], ch: &ChannelSpec) -> Result<Self> {
        let (trans, d_trans) = hidden_chain(p, dps, ch);
        let obs = hidden_states(ch)
            .map(|(x, s)| (0..ch.outputs()).map(|y| ch.emit_prob(x, s, y)).collect())
            .collect();
        Self::new(trans, d_trans, obs, None)
    }

    /// View whose observations are the pairs `(x, y)`, indexed `x * |Y| + y`.
    pub fn joint(p: &TransitionMatrix, dps: &[Vec<Vec<f64>>], ch: &ChannelSpec) -> Result<Self> {
        let (trans, d_trans) = hidden_chain(p, dps, ch);
        let ny = ch.outputs();
        let obs = hidden_states(ch)
            .map(|(x, s)| {
                let mut row = vec![0.0; ch.inputs() * ny];
                for y in 0..ny {
                    row[x * ny + y] = ch.emit_prob(x, s, y);
                }
                row
            })
            .collect();
        Self::new(trans, d_trans, obs, None)
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn symbols(&self) -> usize {
        self.symbols
    }

    /// Number of parameter coordinates carried.
    pub fn dim(&self) -> usize {
        self.d_initial.len()
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    #[inline]
    pub fn trans(&self, h: usize, h2: usize) -> f64 {
        self.trans[h * self.hidden + h2]
    }

    #[inline]
    pub fn obs(&self, h: usize, z: usize) -> f64 {
        self.obs[h * self.symbols + z]
    }

    /// Same chain and observations with no derivative coordinates.
    pub fn without_derivatives(&self) -> Self {
        HmmView {
            d_initial: Vec::new(),
            d_trans: Vec::new(),
            ..self.clone()
        }
    }

    /// Same chain started from `initial` instead of the stationary law,
    /// without derivatives.
    pub fn with_initial(&self, initial: Vec<f64>) -> Self {
        assert_eq!(initial.len(), self.hidden);
        HmmView {
            initial,
            d_initial: Vec::new(),
            d_trans: Vec::new(),
            ..self.clone()
        }
    }
}

fn hidden_states(ch: &ChannelSpec) -> impl Iterator<Item = (usize, usize)> + '_ {
    (0..ch.inputs()).flat_map(move |x| (0..ch.states()).map(move |s| (x, s)))
}

#[allow(clippy::type_complexity)]
fn hidden_chain(
    p: &TransitionMatrix,
    dps: &[Vec<Vec<f64>>],
    ch: &ChannelSpec,
) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
    let trans = ch.joint_transition(p);
    let ns = ch.states();
    let d_trans = dps
        .iter()
        .map(|dp| {
            let n = trans.len();
            let mut d = vec![vec![0.0; n]; n];
            for (x, s) in hidden_states(ch) {
                for (x2, s2) in hidden_states(ch) {
                    d[x * ns + s][x2 * ns + s2] = dp[x][x2] * ch.state_prob(x2, s, s2);
                }
            }
            d
        })
        .collect();
    (trans, d_trans)
}

/// Normalized forward state: predictive law of the next hidden state given
/// the symbols consumed so far, with its parameter derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardState {
    pub alpha: Vec<f64>,
    pub dalpha: Vec<Vec<f64>>,
    /// `log2 p(z_1^t)`.
    pub log2p_acc: f64,
    /// `d ln p(z_1^t) / dtheta_i = sum_t dc_t / c_t`.
    pub dlogp_acc: Vec<f64>,
    pub steps: usize,
}

impl ForwardState {
    /// State before any symbol, started from the view's initial law.
    pub fn start(view: &HmmView) -> Self {
        ForwardState {
            alpha: view.initial.clone(),
            dalpha: view.d_initial.clone(),
            log2p_acc: 0.0,
            dlogp_acc: vec![0.0; view.dim()],
            steps: 0,
        }
    }

    /// Consumes `z`, returning `c = p(z | history)`; `dc` receives `dc/dtheta`.
    pub fn advance(&mut self, view: &HmmView, z: usize, dc: &mut [f64]) -> Result<f64> {
        let n = view.hidden;
        let d = view.dim();
        debug_assert!(z < view.symbols);
        debug_assert_eq!(dc.len(), d);

        // condition on z
        let mut filt = vec![0.0; n];
        let mut c = 0.0;
        for h in 0..n {
            let v = self.alpha[h] * view.obs(h, z);
            filt[h] = v;
            c += v;
        }
        if !(c > UNDERFLOW_FLOOR) {
            return Err(Error::ZeroLikelihood {
                step: self.steps,
                value: c,
            });
        }
        let mut dfilt = vec![vec![0.0; n]; d];
        for i in 0..d {
            let mut s = 0.0;
            for h in 0..n {
                let v = self.dalpha[i][h] * view.obs(h, z);
                dfilt[i][h] = v;
                s += v;
            }
            dc[i] = s;
        }
        for h in 0..n {
            filt[h] /= c;
        }
        for i in 0..d {
            for h in 0..n {
                dfilt[i][h] = (dfilt[i][h] - filt[h] * dc[i]) / c;
            }
        }

        // predict
        for h2 in 0..n {
            self.alpha[h2] = 0.0;
        }
        for h in 0..n {
            let f = filt[h];
            if f != 0.0 {
                for h2 in 0..n {
                    self.alpha[h2] += f * view.trans(h, h2);
                }
            }
        }
        for i in 0..d {
            let da = &mut self.dalpha[i];
            da.iter_mut().for_each(|v| *v = 0.0);
            for h in 0..n {
                let df = dfilt[i][h];
                if df != 0.0 {
                    for h2 in 0..n {
                        da[h2] += df * view.trans(h, h2);
                    }
                }
            }
            for &(h, h2, v) in &view.d_trans[i] {
                da[h2] += filt[h] * v;
            }
            self.dlogp_acc[i] += dc[i] / c;
        }
        self.log2p_acc += c.log2();
        self.steps += 1;
        Ok(c)
    }
}

/// One forward step as a pure function.
pub fn forward_step(
    state: &ForwardState,
    view: &HmmView,
    z: usize,
) -> Result<(ForwardState, f64, Vec<f64>)> {
    let mut next = state.clone();
    let mut dc = vec![0.0; view.dim()];
    let c = next.advance(view, z, &mut dc)?;
    Ok((next, c, dc))
}

/// Result of a fresh forward pass over a window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPass {
    /// `p(z_last | z_first .. z_{last-1})`.
    pub last_c: f64,
    pub last_dc: Vec<f64>,
    /// `d ln p(z_first .. z_last)`, the sum of `dc_t / c_t` over the window.
    pub dlogp: Vec<f64>,
}

pub fn window_pass(view: &HmmView, window: &[usize]) -> Result<WindowPass> {
    assert!(!window.is_empty(), "window must hold at least one symbol");
    let mut state = ForwardState::start(view);
    let mut dc = vec![0.0; view.dim()];
    let mut c = 0.0;
    for &z in window {
        c = state.advance(view, z, &mut dc)?;
    }
    Ok(WindowPass {
        last_c: c,
        last_dc: dc,
        dlogp: state.dlogp_acc,
    })
}

/// `p(z_last | preceding symbols)` and its gradient, from a fresh pass
/// started at the view's initial law. A one-symbol window gives the
/// marginal `p(z)`.
pub fn windowed_conditional(view: &HmmView, window: &[usize]) -> Result<(f64, Vec<f64>)> {
    let pass = window_pass(view, window)?;
    Ok((pass.last_c, pass.last_dc))
}

/// `-log2 p(z_1^n) / n`.
pub fn sample_entropy(view: &HmmView, z: &[usize]) -> Result<f64> {
    assert!(!z.is_empty(), "sample entropy needs at least one symbol");
    let view = view.without_derivatives();
    let mut state = ForwardState::start(&view);
    for &sym in z {
        state.advance(&view, sym, &mut [])?;
    }
    Ok(-state.log2p_acc / z.len() as f64)
}

/// Per-step `-log2 c_t` along a full forward pass, for batch-means error
/// estimates of the sample entropy.
pub fn conditional_surprisals(view: &HmmView, z: &[usize]) -> Result<Vec<f64>> {
    let view = view.without_derivatives();
    let mut state = ForwardState::start(&view);
    z.iter()
        .map(|&sym| state.advance(&view, sym, &mut []).map(|c| -c.log2()))
        .collect()
}

/// Observation sequence of a sample path in the joint view.
pub fn joint_symbols(x: &[usize], y: &[usize], outputs: usize) -> Vec<usize> {
    x.iter().zip(y).map(|(&x, &y)| x * outputs + y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{bsc_family, lift_memoryless, sample_path_stream};
    use crate::constraint::ForbiddenPairSet;
    use crate::markov::{build_transition, transition_derivatives, MarkovParams};
    use crate::rng::StreamId;

    fn golden_views(pi: f64, eps: f64) -> (HmmView, HmmView) {
        let f = ForbiddenPairSet::rll(1, None).unwrap().0;
        let p = build_transition(&MarkovParams::new(vec![pi], 1e-3), &f).unwrap();
        let dps = transition_derivatives(&f);
        let ch = bsc_family(eps).unwrap().exact_channel();
        (
            HmmView::output(&p, &dps, &ch).unwrap(),
            HmmView::joint(&p, &dps, &ch).unwrap(),
        )
    }

    #[test]
    fn first_step_is_marginal() {
        let (vy, _) = golden_views(0.5, 0.1);
        let state = ForwardState::start(&vy);
        let (next, c, _) = forward_step(&state, &vy, 1).unwrap();
        // p(y=1) = 2/3 * 0.1 + 1/3 * 0.9
        assert!((c - (2.0 / 3.0 * 0.1 + 1.0 / 3.0 * 0.9)).abs() < 1e-15);
        assert!((next.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_model_has_zero_derivative() {
        let trans = vec![vec![0.7, 0.3], vec![0.4, 0.6]];
        let zero = vec![vec![0.0; 2]; 2];
        let obs = vec![vec![0.8, 0.2], vec![0.3, 0.7]];
        let view = HmmView::new(trans, vec![zero.clone(), zero], obs, None).unwrap();
        let mut state = ForwardState::start(&view);
        for z in [0, 1, 1, 0] {
            let (next, _, dc) = forward_step(&state, &view, z).unwrap();
            assert!(dc.iter().all(|&v| v == 0.0));
            state = next;
        }
    }

    #[test]
    fn one_symbol_window_is_marginal_with_stationary_derivative() {
        let (vy, _) = golden_views(0.4, 0.1);
        let (p, dp) = windowed_conditional(&vy, &[1]).unwrap();
        // mu_1 = pi / (1 + pi), d mu_1 / d pi = 1 / (1 + pi)^2
        let pi: f64 = 0.4;
        let mu1 = pi / (1.0 + pi);
        assert!((p - (0.1 * (1.0 - mu1) + 0.9 * mu1)).abs() < 1e-15);
        let dmu1 = 1.0 / (1.0 + pi).powi(2);
        assert!((dp[0] - 0.8 * dmu1).abs() < 1e-12);
    }

    #[test]
    fn noiseless_window_is_markov_conditional() {
        let (vy, _) = golden_views(0.3, 0.0);
        let (p, _) = windowed_conditional(&vy, &[1, 0, 0, 1]).unwrap();
        assert!((p - 0.3).abs() < 1e-15);
        let (p, _) = windowed_conditional(&vy, &[0, 1, 0]).unwrap();
        assert!((p - 1.0).abs() < 1e-15);
    }

    #[test]
    fn impossible_symbol_is_zero_likelihood() {
        let (vy, _) = golden_views(0.3, 0.0);
        assert!(matches!(
            windowed_conditional(&vy, &[1, 1]),
            Err(Error::ZeroLikelihood { step: 1, .. })
        ));
    }

    #[test]
    fn fair_coin_sample_entropy() {
        let trans = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let obs = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let view = HmmView::new(trans, vec![], obs, None).unwrap();
        let z = [0, 1, 1, 0, 1, 0, 0, 0, 1];
        assert!((sample_entropy(&view, &z).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn noiseless_sample_entropy_tracks_entropy_rate() {
        let f = ForbiddenPairSet::rll(1, None).unwrap().0;
        let p = build_transition(&MarkovParams::new(vec![0.4], 1e-3), &f).unwrap();
        let ch = bsc_family(0.0).unwrap().exact_channel();
        let view = HmmView::output(&p, &[], &ch).unwrap();
        let path = sample_path_stream(&p, &ch, 100_000, StreamId::new(11, 0));
        let h = sample_entropy(&view, &path.y).unwrap();
        assert!((h - crate::markov::markov_entropy_rate(&p)).abs() < 0.01);
    }

    #[test]
    fn conditionals_sum_to_one() {
        let (vy, vxy) = golden_views(0.35, 0.1);
        for view in [&vy, &vxy] {
            let mut state = ForwardState::start(view);
            let prefix: Vec<usize> = (0..8).map(|t| (t * 7 % 3) % view.symbols()).collect();
            for &z in &prefix {
                let total: f64 = (0..view.symbols())
                    .map(|w| forward_step(&state, view, w).map_or(0.0, |r| r.1))
                    .sum();
                assert!((total - 1.0).abs() < 1e-10);
                if let Ok((next, _, _)) = forward_step(&state, view, z) {
                    state = next;
                }
            }
        }
    }

    #[test]
    fn no_zero_likelihood_on_sampled_windows() {
        let ch = lift_memoryless(&bsc_family(1e-3).unwrap()).unwrap();
        let f = ForbiddenPairSet::rll(1, None).unwrap().0;
        let p = build_transition(&MarkovParams::new(vec![1e-3], 1e-3), &f).unwrap();
        let dps = transition_derivatives(&f);
        let vy = HmmView::output(&p, &dps, &ch).unwrap();
        let vxy = HmmView::joint(&p, &dps, &ch).unwrap();
        let path = sample_path_stream(&p, &ch, 200_000, StreamId::new(12, 0));
        let xy = joint_symbols(&path.x, &path.y, 2);
        let mut min_c: f64 = 1.0;
        for j in 4..path.len() {
            let (cy, _) = windowed_conditional(&vy, &path.y[j - 4..=j]).unwrap();
            let (cxy, _) = windowed_conditional(&vxy, &xy[j - 4..=j]).unwrap();
            min_c = min_c.min(cy).min(cxy);
        }
        assert!(min_c > 1e-7, "{min_c}");
    }
}
