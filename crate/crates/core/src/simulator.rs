//! Blocked Monte Carlo simulator of the mutual-information-rate gradient.
//!
//! A sample of length `n` is cut into `k` blocks of `p` indices, each block
//! preceded by a gap of `q` indices, with `q = floor(n^beta)`,
//! `p = floor(n^alpha)` and `k = floor(n / (p + q))`. For an index `j` inside
//! a block, a fresh forward pass over the window `z_{j-w} .. z_j`,
//! `w = floor(q / 2)`, gives
//!
//! ```text
//! W_j = -(d ln p(z_{j-w} .. z_j)) * log2 p(z_j | z_{j-w} .. z_{j-1})
//! ```
//!
//! The block sums `zeta_i` add to `S_n`, and the estimate combines the
//! output view and the joint view of one sampled path:
//!
//! ```text
//! g = H'(X_2 | X_1) + S_n(Y) / (k p) - S_n(X, Y) / (k p)
//! ```

use std::io::Write;

use rayon::prelude::*;

use crate::channel::{sample_path_stream, ChannelSpec, SamplePath};
use crate::constraint::ForbiddenPairSet;
use crate::error::{Error, Result};
use crate::hmm::{joint_symbols, window_pass, HmmView};
use crate::markov::{build_transition, entropy_rate_gradient, transition_derivatives, MarkovParams};
use crate::rng::StreamId;
use crate::stats::{pairwise_sum, variance};

/// Block exponents `0 < beta < alpha < 1/3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blocking {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for Blocking {
    fn default() -> Self {
        Blocking {
            alpha: 0.3,
            beta: 0.2,
        }
    }
}

impl Blocking {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha < 1.0 / 3.0) {
            return Err(Error::InvalidConfig("alpha: need alpha < 1/3".into()));
        }
        if !(self.beta > 0.0) {
            return Err(Error::InvalidConfig("beta: need beta > 0".into()));
        }
        if !(self.beta < self.alpha) {
            return Err(Error::InvalidConfig("beta: need beta < alpha".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockSchedule {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub p: usize,
    pub q: usize,
    pub k: usize,
}

impl BlockSchedule {
    /// Half-gap `floor(q / 2)`: the number of symbols preceding `j` in its window.
    pub fn window(&self) -> usize {
        self.q / 2
    }

    /// 1-based indices `iq + (i-1)p + 1 ..= iq + ip` of block `i` (1-based).
    pub fn block_range(&self, i: usize) -> std::ops::RangeInclusive<usize> {
        debug_assert!((1..=self.k).contains(&i));
        i * self.q + (i - 1) * self.p + 1..=i * self.q + i * self.p
    }

    pub fn block_ranges(&self) -> impl Iterator<Item = std::ops::RangeInclusive<usize>> + '_ {
        (1..=self.k).map(move |i| self.block_range(i))
    }

    /// `k * p`, the number of indices covered by blocks.
    pub fn covered(&self) -> usize {
        self.k * self.p
    }
}

/// `floor(n^e)`, snapping to the nearest integer when `n^e` is one up to
/// rounding (e.g. `1024^0.3 = 8`).
fn floor_pow(n: usize, e: f64) -> usize {
    let v = (n as f64).powf(e);
    let r = v.round();
    if (v - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        v.floor() as usize
    }
}

pub fn make_schedule(n: usize, blocking: Blocking) -> Result<BlockSchedule> {
    blocking.validate()?;
    let q = floor_pow(n, blocking.beta);
    let p = floor_pow(n, blocking.alpha);
    let k = n.checked_div(p + q).unwrap_or(0);
    if k < 1 || q < 2 {
        return Err(Error::TooShort { n, p, q, k });
    }
    Ok(BlockSchedule {
        n,
        alpha: blocking.alpha,
        beta: blocking.beta,
        p,
        q,
        k,
    })
}

/// Smallest `n` for which [`make_schedule`] succeeds.
pub fn min_sample_len(blocking: Blocking) -> usize {
    (1..)
        .find(|&n| make_schedule(n, blocking).is_ok())
        .expect("some length admits a schedule")
}

/// `W_j` for the 1-based index `j` with window half-gap from `q`.
pub fn compute_w(view: &HmmView, z: &[usize], j: usize, q: usize) -> Result<Vec<f64>> {
    let w = q / 2;
    assert!(j > w && j <= z.len(), "window for j={j} out of range");
    let pass = window_pass(view, &z[j - 1 - w..j])?;
    let log_c = pass.last_c.log2();
    Ok(pass.dlogp.iter().map(|d| -d * log_c).collect())
}

/// `S_n` and the per-block sums `zeta_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSums {
    pub s: Vec<f64>,
    /// `zeta[i][c]` for block `i + 1` and coordinate `c`.
    pub zeta: Vec<Vec<f64>>,
}

pub fn compute_s(view: &HmmView, z: &[usize], schedule: &BlockSchedule) -> Result<BlockSums> {
    if z.len() < schedule.n {
        return Err(Error::TooShort {
            n: z.len(),
            p: schedule.p,
            q: schedule.q,
            k: schedule.k,
        });
    }
    let d = view.dim();
    let zeta = (1..=schedule.k)
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![0.0; d];
            for j in schedule.block_range(i) {
                let w = compute_w(view, z, j, schedule.q)?;
                acc.iter_mut().zip(&w).for_each(|(a, b)| *a += b);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let s = (0..d)
        .map(|c| pairwise_sum(&zeta.iter().map(|row| row[c]).collect::<Vec<_>>()))
        .collect();
    Ok(BlockSums { s, zeta })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub g: Vec<f64>,
    pub s_y: Vec<f64>,
    pub s_xy: Vec<f64>,
    pub h_prime: Vec<f64>,
    pub zeta_y: Vec<Vec<f64>>,
    pub zeta_xy: Vec<Vec<f64>>,
    pub n_used: usize,
    pub schedule: BlockSchedule,
}

/// Combines the exact Markov term with the two block sums.
pub fn combine(h_prime: &[f64], s_y: &[f64], s_xy: &[f64], schedule: &BlockSchedule) -> Vec<f64> {
    let kp = schedule.covered() as f64;
    h_prime
        .iter()
        .zip(s_y.iter().zip(s_xy))
        .map(|(h, (sy, sxy))| h + sy / kp - sxy / kp)
        .collect()
}

/// Output and joint views with derivative kernels at `theta`.
pub struct Views {
    pub output: HmmView,
    pub joint: HmmView,
    pub h_prime: Vec<f64>,
    pub transition: crate::markov::TransitionMatrix,
}

pub fn build_views(theta: &MarkovParams, f: &ForbiddenPairSet, ch: &ChannelSpec) -> Result<Views> {
    if ch.inputs() != f.alphabet_size() {
        return Err(Error::DimensionMismatch {
            expected: f.alphabet_size(),
            got: ch.inputs(),
        });
    }
    let p = build_transition(theta, f)?;
    let dps = transition_derivatives(f);
    Ok(Views {
        output: HmmView::output(&p, &dps, ch)?,
        joint: HmmView::joint(&p, &dps, ch)?,
        h_prime: entropy_rate_gradient(&p, &dps)?,
        transition: p,
    })
}

/// Gradient estimate from an already sampled path.
pub fn estimate_from_path(views: &Views, path: &SamplePath, ch: &ChannelSpec, schedule: &BlockSchedule) -> Result<GradientEstimate> {
    let xy = joint_symbols(&path.x, &path.y, ch.outputs());
    let (by, bxy) = rayon::join(
        || compute_s(&views.output, &path.y, schedule),
        || compute_s(&views.joint, &xy, schedule),
    );
    let (by, bxy) = (by?, bxy?);
    Ok(GradientEstimate {
        g: combine(&views.h_prime, &by.s, &bxy.s, schedule),
        s_y: by.s,
        s_xy: bxy.s,
        h_prime: views.h_prime.clone(),
        zeta_y: by.zeta,
        zeta_xy: bxy.zeta,
        n_used: path.len(),
        schedule: *schedule,
    })
}

/// One draw of `g_n(theta)` from a path sampled on `stream`.
pub fn estimate_gradient(
    theta: &MarkovParams,
    f: &ForbiddenPairSet,
    ch: &ChannelSpec,
    n: usize,
    blocking: Blocking,
    stream: StreamId,
) -> Result<GradientEstimate> {
    if ch.is_noiseless() {
        return Err(Error::DegenerateKernel(
            "noiseless channel: use exact enumeration instead of simulation".into(),
        ));
    }
    let schedule = make_schedule(n, blocking)?;
    let views = build_views(theta, f, ch)?;
    let path = sample_path_stream(&views.transition, ch, n, stream);
    estimate_from_path(&views, &path, ch, &schedule)
}

/// Replicated draws, replica `r` on `stream.child(r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicatedEstimate {
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
    pub replicas: Vec<GradientEstimate>,
}

pub fn estimate_gradient_replicated(
    theta: &MarkovParams,
    f: &ForbiddenPairSet,
    ch: &ChannelSpec,
    n: usize,
    blocking: Blocking,
    replicas: usize,
    stream: StreamId,
) -> Result<ReplicatedEstimate> {
    if ch.is_noiseless() {
        return Err(Error::DegenerateKernel(
            "noiseless channel: use exact enumeration instead of simulation".into(),
        ));
    }
    let schedule = make_schedule(n, blocking)?;
    let views = build_views(theta, f, ch)?;
    let ests = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let path = sample_path_stream(&views.transition, ch, n, stream.child(r));
            estimate_from_path(&views, &path, ch, &schedule)
        })
        .collect::<Result<Vec<_>>>()?;
    let d = views.h_prime.len();
    let column = |c: usize| ests.iter().map(|e| e.g[c]).collect::<Vec<_>>();
    let mean = (0..d).map(|c| crate::stats::mean(&column(c))).collect();
    let std_err = (0..d).map(|c| crate::stats::std_err(&column(c))).collect();
    Ok(ReplicatedEstimate {
        mean,
        std_err,
        replicas: ests,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceDiagnostics {
    /// Empirical variance of `S_n` across replicas, per coordinate.
    pub var_s: Vec<f64>,
    /// `var_s / (k p q^3)`.
    pub ratio: Vec<f64>,
}

/// Variance of `S_n` across replicas from their per-block sums.
pub fn variance_diagnostics(per_block_zeta: &[Vec<Vec<f64>>], schedule: &BlockSchedule) -> Result<VarianceDiagnostics> {
    if per_block_zeta.len() < 2 {
        return Err(Error::InvalidConfig("variance needs at least two replicas".into()));
    }
    let d = per_block_zeta[0].first().map_or(0, Vec::len);
    let totals: Vec<Vec<f64>> = per_block_zeta
        .iter()
        .map(|zeta| {
            (0..d)
                .map(|c| pairwise_sum(&zeta.iter().map(|row| row[c]).collect::<Vec<_>>()))
                .collect()
        })
        .collect();
    let norm = (schedule.k * schedule.p) as f64 * (schedule.q as f64).powi(3);
    let var_s: Vec<f64> = (0..d)
        .map(|c| variance(&totals.iter().map(|s| s[c]).collect::<Vec<_>>()))
        .collect();
    let ratio = var_s.iter().map(|v| v / norm).collect();
    Ok(VarianceDiagnostics { var_s, ratio })
}

/// Writes one CSV row per `(replica, view, block, coordinate)` with its `zeta`.
pub fn write_block_dump<W: Write>(out: W, estimates: &[GradientEstimate]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replica", "view", "block", "coordinate", "zeta"])?;
    for (r, est) in estimates.iter().enumerate() {
        for (view, zeta) in [("y", &est.zeta_y), ("xy", &est.zeta_xy)] {
            for (b, row) in zeta.iter().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    w.write_record([
                        r.to_string(),
                        view.to_string(),
                        (b + 1).to_string(),
                        c.to_string(),
                        v.to_string(),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}
