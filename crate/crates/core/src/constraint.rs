//! Finite-type input constraints given by forbidden symbol pairs.
//!
//! A constraint over the alphabet `{0, .., k-1}` forbids a set of ordered
//! pairs `(i, j)`: symbol `j` may never directly follow symbol `i`. The
//! allowed pairs form a digraph which must be strongly connected; whether it
//! is also aperiodic (mixing) is reported by [`ForbiddenPairSet::periodicity`].

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForbiddenPairSet {
    alphabet_size: usize,
    forbidden: BTreeSet<(usize, usize)>,
}

/// Period of an irreducible digraph and its cyclic classes `D_1, .., D_e`.
///
/// Classes are ordered so that every edge leaving `classes[c]` lands in
/// `classes[(c + 1) % period]`; `classes[0]` contains vertex 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Periodicity {
    pub period: usize,
    pub classes: Vec<Vec<usize>>,
}

impl Periodicity {
    pub fn is_primitive(&self) -> bool {
        self.period == 1
    }

    /// Class index of every vertex.
    pub fn class_of(&self, n: usize) -> Vec<usize> {
        let mut out = vec![0; n];
        for (c, members) in self.classes.iter().enumerate() {
            for &v in members {
                out[v] = c;
            }
        }
        out
    }

    /// Whether `(i, j)` is an entry of one of the cyclic blocks `B_1, .., B_e`.
    pub fn is_block_entry(&self, n: usize, i: usize, j: usize) -> bool {
        let class = self.class_of(n);
        class[j] == (class[i] + 1) % self.period
    }
}

impl ForbiddenPairSet {
    /// Builds a constraint, rejecting out-of-range pairs and reducible graphs.
    pub fn new<I>(alphabet_size: usize, forbidden: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if alphabet_size == 0 {
            return Err(Error::OutOfRange("alphabet size must be positive".into()));
        }
        let forbidden: BTreeSet<_> = forbidden.into_iter().collect();
        if let Some(&(i, j)) = forbidden
            .iter()
            .find(|&&(i, j)| i >= alphabet_size || j >= alphabet_size)
        {
            return Err(Error::OutOfRange(format!(
                "pair ({i}, {j}) outside alphabet of size {alphabet_size}"
            )));
        }
        let set = ForbiddenPairSet {
            alphabet_size,
            forbidden,
        };
        if !is_strongly_connected(&set.adjacency()) {
            return Err(Error::NotIrreducible);
        }
        Ok(set)
    }

    pub fn unconstrained(alphabet_size: usize) -> Result<Self> {
        Self::new(alphabet_size, std::iter::empty())
    }

    /// The `(d, k)` run-length-limited constraint over its follower-set
    /// alphabet, with `k = None` meaning no upper limit on zero runs.
    ///
    /// State `r` ("last symbol was a 1" for `r = 0`, otherwise "the current
    /// run holds `r` zeros", the top state absorbing longer runs when `k` is
    /// unbounded) is stored at index `top - r`. The returned labels give the
    /// binary channel input emitted on entering each state. For `(1, inf)`
    /// this is the binary alphabet with `"11"` forbidden and identity labels.
    pub fn rll(d: usize, k: Option<usize>) -> Result<(Self, Vec<usize>)> {
        if let Some(k) = k {
            if k < d || k == 0 {
                return Err(Error::OutOfRange(format!("invalid ({d},{k})-RLL")));
            }
        }
        let top = match k {
            Some(k) => k,
            None => d.max(1),
        };
        let n = top + 1;
        let index = |r: usize| top - r;
        let mut allowed = BTreeSet::new();
        for r in 0..=top {
            // append a zero
            if r < top {
                allowed.insert((index(r), index(r + 1)));
            } else if k.is_none() {
                allowed.insert((index(r), index(r)));
            }
            // append a one
            if r >= d {
                allowed.insert((index(r), index(0)));
            }
        }
        let forbidden = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|p| !allowed.contains(p));
        let set = Self::new(n, forbidden)?;
        let labels = (0..n).map(|i| usize::from(i == index(0))).collect();
        Ok((set, labels))
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn forbidden(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.forbidden.iter().copied()
    }

    pub fn is_allowed(&self, i: usize, j: usize) -> bool {
        i < self.alphabet_size && j < self.alphabet_size && !self.forbidden.contains(&(i, j))
    }

    /// Allowed successors of `i` in increasing order.
    pub fn allowed_in_row(&self, i: usize) -> Vec<usize> {
        (0..self.alphabet_size)
            .filter(|&j| self.is_allowed(i, j))
            .collect()
    }

    pub fn num_allowed(&self) -> usize {
        self.alphabet_size * self.alphabet_size - self.forbidden.len()
    }

    /// Dimension of the free row parameterization.
    pub fn param_dim(&self) -> usize {
        self.num_allowed() - self.alphabet_size
    }

    pub fn adjacency(&self) -> Vec<Vec<bool>> {
        (0..self.alphabet_size)
            .map(|i| (0..self.alphabet_size).map(|j| self.is_allowed(i, j)).collect())
            .collect()
    }

    pub fn periodicity(&self) -> Periodicity {
        periodicity(&self.adjacency()).expect("constraint graph is irreducible by construction")
    }

    pub fn is_mixing(&self) -> bool {
        self.periodicity().is_primitive()
    }

    /// Parses the plain-text constraint format: a header `alphabet K`
    /// followed by one forbidden pair `i j` per line. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut alphabet = None;
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse {
                line: lineno + 1,
                msg,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            match (alphabet, fields.as_slice()) {
                (None, ["alphabet", k]) => {
                    let k = k
                        .parse::<usize>()
                        .map_err(|e| err(format!("bad alphabet size {k:?}: {e}")))?;
                    alphabet = Some(k);
                }
                (None, _) => return Err(err("expected header `alphabet K`".into())),
                (Some(_), [i, j]) => {
                    let i = i
                        .parse::<usize>()
                        .map_err(|e| err(format!("bad symbol {i:?}: {e}")))?;
                    let j = j
                        .parse::<usize>()
                        .map_err(|e| err(format!("bad symbol {j:?}: {e}")))?;
                    pairs.push((i, j));
                }
                (Some(_), _) => return Err(err(format!("expected `i j`, got {line:?}"))),
            }
        }
        let k = alphabet.ok_or(Error::Parse {
            line: 0,
            msg: "missing `alphabet` header".into(),
        })?;
        Self::new(k, pairs)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("alphabet {}\n", self.alphabet_size);
        for (i, j) in &self.forbidden {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }
}

pub fn is_strongly_connected(adj: &[Vec<bool>]) -> bool {
    let n = adj.len();
    if n == 0 {
        return false;
    }
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                let edge = if forward { adj[u][v] } else { adj[v][u] };
                if edge && !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

/// Period (gcd of cycle lengths) and cyclic classes of an irreducible digraph.
pub fn periodicity(adj: &[Vec<bool>]) -> Result<Periodicity> {
    if !is_strongly_connected(adj) {
        return Err(Error::NotIrreducible);
    }
    let n = adj.len();
    let mut level = vec![usize::MAX; n];
    level[0] = 0;
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if adj[u][v] && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut period = 0usize;
    for u in 0..n {
        for v in 0..n {
            if adj[u][v] {
                let diff = (level[u] + 1).abs_diff(level[v]);
                period = gcd(period, diff);
            }
        }
    }
    let mut classes = vec![Vec::new(); period];
    for (v, &l) in level.iter().enumerate() {
        classes[l % period].push(v);
    }
    Ok(Periodicity { period, classes })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}
