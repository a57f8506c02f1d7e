//! State space and generator action for the PushASEP on `Z/LZ`.
//!
//! A configuration is a strictly increasing tuple of `N` particle positions
//! in `{0, .., L-1}`.  Particles jump right at rate `p` under exclusion and
//! initiate left pushes at rate `q = 1 - p`.  The master equation for the
//! current-deformed law is driven by the operator
//!
//! ```text
//! (H_z f)(X) = p * sum_i [z f(X^{i,-}) - f(X)] 1(X^{i,-} valid)
//!            + q * sum_{i,k} [z^{-k} f(X^{i,+k}) - f(X)] 1(block & target valid)
//! ```
//!
//! where `X^{i,-}` and `X^{i,+k}` are the *source* configurations from which
//! a right jump of particle `i`, respectively a push of length `k` ending at
//! particle `i`, leads into `X`.  Keeping the source-state point of view
//! avoids sign and direction mistakes when assembling the generator.

use crate::{Error, Result, C64};
use serde::{Deserialize, Serialize};

/// Global model parameters for a ring of length `L` with `N` particles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingParams {
    pub l: usize,
    pub n: usize,
    /// Right (exclusion) jump rate; the left (push) rate is `q = 1 - p`.
    pub p: f64,
}

impl RingParams {
    pub fn new(l: usize, n: usize, p: f64) -> Result<Self> {
        if l == 0 || n == 0 || n > l {
            return Err(Error::InvalidParams(format!(
                "need 1 <= N <= L, got L={l}, N={n}"
            )));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParams(format!("need p in [0,1], got {p}")));
        }
        Ok(RingParams { l, n, p })
    }

    pub fn q(&self) -> f64 {
        1.0 - self.p
    }

    /// Particle density `rho = N/L`.
    pub fn rho(&self) -> f64 {
        self.n as f64 / self.l as f64
    }

    /// `r0 = rho^rho (1-rho)^(1-rho)`, the critical |z| where the decoupled
    /// Bethe polynomial acquires a double root at `1 - rho`.
    pub fn r0(&self) -> f64 {
        let rho = self.rho();
        if self.n == self.l {
            return 1.0;
        }
        rho.powf(rho) * (1.0 - rho).powf(1.0 - rho)
    }

    /// Number of states `C(L, N)`.
    pub fn dim(&self) -> usize {
        crate::numeric::binomial(self.l as u64, self.n as u64).round() as usize
    }
}

/// Strictly increasing particle positions `0 <= x_1 < ... < x_N <= L-1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Configuration(Vec<usize>);

impl Configuration {
    pub fn new(positions: Vec<usize>, params: &RingParams) -> Result<Self> {
        if positions.len() != params.n {
            return Err(Error::InvalidConfiguration(format!(
                "expected {} positions, got {}",
                params.n,
                positions.len()
            )));
        }
        for w in positions.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::InvalidConfiguration(format!(
                    "positions not strictly increasing: {positions:?}"
                )));
            }
        }
        if let Some(&last) = positions.last() {
            if last >= params.l {
                return Err(Error::InvalidConfiguration(format!(
                    "position {last} outside ring of length {}",
                    params.l
                )));
            }
        }
        Ok(Configuration(positions))
    }

    pub fn positions(&self) -> &[usize] {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    /// Occupation variable `eta[X]`.
    pub fn occupation(&self, params: &RingParams) -> OccupationVariable {
        let mut bits = vec![false; params.l];
        for &x in &self.0 {
            bits[x] = true;
        }
        OccupationVariable(bits)
    }

    /// Lexicographic rank within `enumerate_states`.
    pub fn rank(&self, params: &RingParams) -> usize {
        // count configurations lexicographically smaller
        let n = params.n;
        let l = params.l as u64;
        let mut rank = 0.0f64;
        let mut prev: i64 = -1;
        for (i, &xi) in self.0.iter().enumerate() {
            for c in (prev + 1) as u64..xi as u64 {
                rank += crate::numeric::binomial(l - c - 1, (n - i - 1) as u64);
            }
            prev = xi as i64;
        }
        rank.round() as usize
    }
}

/// 0/1 site occupancies; round-trips with [`Configuration`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupationVariable(Vec<bool>);

impl OccupationVariable {
    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn to_configuration(&self, params: &RingParams) -> Result<Configuration> {
        let positions: Vec<usize> = self
            .0
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect();
        Configuration::new(positions, params)
    }
}

/// Net currents accumulated along a trajectory: the global count and one
/// counter per directed edge `(x, x+1)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurrentRecord {
    pub global: i64,
    pub edges: Vec<i64>,
}

impl CurrentRecord {
    pub fn new(l: usize) -> Self {
        CurrentRecord {
            global: 0,
            edges: vec![0; l],
        }
    }

    /// Global current must equal the sum of the edge currents.
    pub fn consistent(&self) -> bool {
        self.edges.iter().sum::<i64>() == self.global
    }
}

/// All `C(L,N)` configurations in lexicographic order.  The index is the
/// state index used by every vector- and matrix-valued routine in the crate.
pub fn enumerate_states(params: &RingParams) -> Vec<Configuration> {
    let mut out = Vec::with_capacity(params.dim());
    let mut current: Vec<usize> = (0..params.n).collect();
    loop {
        out.push(Configuration(current.clone()));
        // next lexicographic N-subset of {0, .., L-1}
        let n = params.n;
        let l = params.l;
        let mut i = n;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if current[i] < l - (n - i) {
                current[i] += 1;
                for j in i + 1..n {
                    current[j] = current[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Ring distance from particle `i` to particle `i+k-1` (labels 1-based,
/// wrapped mod `N`), i.e. the paper's `d(x_{i+k-1}, x_i)`.
fn block_span(x: &Configuration, i: usize, k: usize, params: &RingParams) -> usize {
    let n = params.n;
    let j = i + k - 1; // 1-based label of the last particle in the block
    if j > n {
        params.l + x.0[j - n - 1] - x.0[i - 1]
    } else {
        x.0[j - 1] - x.0[i - 1]
    }
}

/// Source configuration `X^{i,-}` for a right jump of particle `i`
/// (1-based), together with its validity flag.
///
/// The returned positions are sorted; for an invalid move they contain a
/// duplicate and do not form an element of the state space.
pub fn predecessor_right(x: &Configuration, i: usize, params: &RingParams) -> (Vec<usize>, bool) {
    assert!(i >= 1 && i <= params.n, "particle index out of bounds");
    let mut pos = x.0.clone();
    if pos[i - 1] == 0 {
        // wrap: particle 1 at site 0 came from site L-1
        pos.remove(0);
        pos.push(params.l - 1);
    } else {
        pos[i - 1] -= 1;
        pos.sort_unstable();
    }
    let valid = pos.windows(2).all(|w| w[0] < w[1]);
    (pos, valid)
}

/// Source configuration `X^{i,+k}` for a push of length `k` whose block in
/// `X` starts at particle `i` (1-based), together with the combined validity
/// flag: the block condition `d(x_{i+k-1}, x_i) = k-1` and membership of
/// `X^{i,+k}` in the state space.
pub fn predecessor_push(
    x: &Configuration,
    i: usize,
    k: usize,
    params: &RingParams,
) -> (Vec<usize>, bool) {
    let n = params.n;
    assert!(i >= 1 && i <= n, "particle index out of bounds");
    assert!(k >= 1 && k <= n, "push length out of bounds");
    let contiguous = block_span(x, i, k, params) == k - 1;
    let mut pos = x.0.clone();
    for d in 0..k {
        let label = (i - 1 + d) % n;
        pos[label] = (pos[label] + 1) % params.l;
    }
    pos.sort_unstable();
    let distinct = pos.windows(2).all(|w| w[0] < w[1]);
    (pos, contiguous && distinct)
}

/// Apply the deformed generator `H_zeta` to a state-indexed vector.
///
/// At `zeta = 1` this is the forward generator of the joint process; row
/// sums vanish and the uniform measure is stationary.
pub fn apply_generator(f: &[C64], zeta: C64, params: &RingParams) -> Vec<C64> {
    let states = enumerate_states(params);
    assert_eq!(f.len(), states.len(), "vector length must equal C(L,N)");
    let p = params.p;
    let q = params.q();
    let zeta_inv = C64::new(1.0, 0.0) / zeta;
    let mut out = vec![C64::new(0.0, 0.0); f.len()];
    for (xi, x) in states.iter().enumerate() {
        let mut acc = C64::new(0.0, 0.0);
        for i in 1..=params.n {
            let (pred, valid) = predecessor_right(x, i, params);
            if valid {
                let idx = Configuration(pred).rank(params);
                acc += C64::new(p, 0.0) * (zeta * f[idx] - f[xi]);
            }
            for k in 1..=params.n {
                let (pred, valid) = predecessor_push(x, i, k, params);
                if valid {
                    let idx = Configuration(pred).rank(params);
                    acc += C64::new(q, 0.0) * (zeta_inv.powi(k as i32) * f[idx] - f[xi]);
                }
            }
        }
        out[xi] = acc;
    }
    out
}

/// Local current `Q_j(t)` from the global current and the endpoint
/// configurations (the deterministic relation between local and global
/// currents conditioned on `X(t) = X`):
///
/// ```text
/// Q_j = Q/L - (1/L) sum_i (x_i - y_i) - #{x_i <= j} + #{y_i <= j}
/// ```
///
/// Fails when the combination is not an integer, which signals an
/// inconsistent `(X, Y, Q)` triple (such triples carry zero probability).
pub fn local_from_global(
    x: &Configuration,
    y: &Configuration,
    q_global: i64,
    j: usize,
    params: &RingParams,
) -> Result<i64> {
    let l = params.l as i64;
    let diff: i64 = x
        .0
        .iter()
        .zip(y.0.iter())
        .map(|(&a, &b)| a as i64 - b as i64)
        .sum();
    let num = q_global - diff;
    if num.rem_euclid(l) != 0 {
        return Err(Error::InconsistentCurrent(format!(
            "Q - sum(x - y) = {num} is not a multiple of L = {l}"
        )));
    }
    let base = num / l; // this is Q_{L-1}
    let xcount = x.0.iter().filter(|&&v| v <= j).count() as i64;
    let ycount = y.0.iter().filter(|&&v| v <= j).count() as i64;
    Ok(base - xcount + ycount)
}
