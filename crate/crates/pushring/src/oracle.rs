//! Brute-force ground truth for the joint law of configuration and current.
//!
//! The deformed master equation is a linear ODE on the `C(L,N)`-dimensional
//! state space.  Everything here is dense: the generator matrix is built
//! from the predecessor maps, evolved with a scaling-and-squaring matrix
//! exponential, and current laws are recovered by discrete Fourier inversion
//! over deformation parameters on the unit circle.

use crate::numeric::{expm, next_pow2, tree_sum};
use crate::ring::{
    enumerate_states, local_from_global, predecessor_push, predecessor_right, Configuration,
    RingParams,
};
use crate::table::DistributionTable;
use crate::{Error, Result, C64};
use ndarray::Array2;
use ndarray_linalg::Eig;
use rayon::prelude::*;

/// Default cap on `C(L,N)`; keeps oracle runs to desk scale.
pub const DEFAULT_STATE_CAP: usize = 20_000;

/// Dense matrix form of the deformed generator `H_zeta`.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    pub dim: usize,
    pub zeta: C64,
    pub mat: Array2<C64>,
}

/// State-indexed solution vector `g(Y, . ; zeta; t)` of the master equation.
#[derive(Debug, Clone)]
pub struct EvolutionResult {
    pub t: f64,
    pub vector: Vec<C64>,
}

/// Assemble `H_zeta` so that `mat . g` equals `apply_generator(g)`.
///
/// Row `X` collects the inflow from the source states `X^{i,-}` (weight
/// `p zeta`) and `X^{i,+k}` (weight `q zeta^{-k}`), with matching diagonal
/// outflow per valid move.
pub fn build_generator(params: &RingParams, zeta: C64, cap: usize) -> Result<GeneratorMatrix> {
    let dim = params.dim();
    if dim > cap {
        return Err(Error::StateSpaceTooLarge { dim, cap });
    }
    let states = enumerate_states(params);
    let p = params.p;
    let q = params.q();
    let zeta_inv = C64::new(1.0, 0.0) / zeta;
    let mut mat = Array2::<C64>::zeros((dim, dim));
    for (xi, x) in states.iter().enumerate() {
        for i in 1..=params.n {
            let (pred, valid) = predecessor_right(x, i, params);
            if valid {
                let src = Configuration::new(pred, params)?.rank(params);
                mat[[xi, src]] += C64::new(p, 0.0) * zeta;
                mat[[xi, xi]] -= C64::new(p, 0.0);
            }
            for k in 1..=params.n {
                let (pred, valid) = predecessor_push(x, i, k, params);
                if valid {
                    let src = Configuration::new(pred, params)?.rank(params);
                    mat[[xi, src]] += C64::new(q, 0.0) * zeta_inv.powi(k as i32);
                    mat[[xi, xi]] -= C64::new(q, 0.0);
                }
            }
        }
    }
    Ok(GeneratorMatrix { dim, zeta, mat })
}

/// Solve the master equation: `exp(t H_zeta)` applied to the delta at `Y`.
pub fn evolve_master(
    y: &Configuration,
    t: f64,
    zeta: C64,
    params: &RingParams,
    cap: usize,
) -> Result<EvolutionResult> {
    if t < 0.0 {
        return Err(Error::InvalidParams("t must be nonnegative".into()));
    }
    let yi = y.rank(params);
    if t == 0.0 {
        let mut v = vec![C64::new(0.0, 0.0); params.dim()];
        v[yi] = C64::new(1.0, 0.0);
        return Ok(EvolutionResult { t, vector: v });
    }
    let gen = build_generator(params, zeta, cap)?;
    let et = expm(&gen.mat.mapv(|x| x * t))?;
    let vector = et.column(yi).to_vec();
    Ok(EvolutionResult { t, vector })
}

/// All eigenvalues of `H_zeta`.
pub fn spectrum(params: &RingParams, zeta: C64, cap: usize) -> Result<Vec<C64>> {
    let gen = build_generator(params, zeta, cap)?;
    let (vals, _) = gen
        .mat
        .eig()
        .map_err(|e| Error::Eigensolver(format!("{e}")))?;
    Ok(vals.to_vec())
}

/// Joint law `P_Y(X(t) = X, Q(t) = q)` on a current window, by evaluating
/// the generating series on `M` unit-circle points and inverting the
/// discrete Fourier transform.  `M` is the next power of two at or above
/// `2 * window + 8`, which keeps aliased tail mass away from the window.
pub struct JointCurrentLaw {
    pub params: RingParams,
    pub y: Configuration,
    pub t: f64,
    pub q_lo: i64,
    pub q_hi: i64,
    /// `probs[qi][xi]` with `qi` indexing `q_lo..=q_hi`.
    pub probs: Vec<Vec<f64>>,
    /// Mass missing from the window (from 1 - total), reported a posteriori.
    pub tail_mass: f64,
}

pub fn joint_current_law(
    y: &Configuration,
    t: f64,
    q_lo: i64,
    q_hi: i64,
    params: &RingParams,
    cap: usize,
) -> Result<JointCurrentLaw> {
    if q_hi < q_lo {
        return Err(Error::InvalidParams("empty current window".into()));
    }
    let width = (q_hi - q_lo) as usize + 1;
    let m = next_pow2(2 * width + 8);
    let dim = params.dim();

    // g(Y, .; zeta_r; t) for the M-th roots of unity
    let evolutions: Vec<Result<Vec<C64>>> = (0..m)
        .into_par_iter()
        .map(|r| {
            let theta = 2.0 * std::f64::consts::PI * r as f64 / m as f64;
            let zeta = C64::new(theta.cos(), theta.sin());
            evolve_master(y, t, zeta, params, cap).map(|e| e.vector)
        })
        .collect();
    let mut gs = Vec::with_capacity(m);
    for e in evolutions {
        gs.push(e?);
    }

    let mut probs = vec![vec![0.0f64; dim]; width];
    let mut total = 0.0;
    for (qi, q) in (q_lo..=q_hi).enumerate() {
        for xi in 0..dim {
            let terms: Vec<C64> = (0..m)
                .map(|r| {
                    let theta = -2.0 * std::f64::consts::PI * (r as f64) * (q as f64) / m as f64;
                    gs[r][xi] * C64::new(theta.cos(), theta.sin())
                })
                .collect();
            let val = tree_sum(&terms) / m as f64;
            probs[qi][xi] = val.re;
            total += val.re;
        }
    }
    let tail = 1.0 - total;
    Ok(JointCurrentLaw {
        params: *params,
        y: y.clone(),
        t,
        q_lo,
        q_hi,
        probs,
        tail_mass: tail,
    })
}

/// PMF of the global current `Q(t)` on a window, as a table.
pub fn current_pmf(
    y: &Configuration,
    t: f64,
    q_lo: i64,
    q_hi: i64,
    params: &RingParams,
    cap: usize,
) -> Result<DistributionTable> {
    let law = joint_current_law(y, t, q_lo, q_hi, params, cap)?;
    if law.tail_mass.abs() > 1e-8 {
        eprintln!(
            "warning: current window [{q_lo}, {q_hi}] misses mass {:.3e}",
            law.tail_mass
        );
    }
    let meta = serde_json::json!({
        "method": "master-equation DFT inversion",
        "L": params.l, "N": params.n, "p": params.p,
        "t": t, "y": y.positions(), "q_window": [q_lo, q_hi],
        "tail_mass": law.tail_mass,
        "state_order": "lexicographic",
    });
    let mut table = DistributionTable::new(vec!["q", "pmf"], meta);
    for (qi, q) in (q_lo..=q_hi).enumerate() {
        let pq: f64 = law.probs[qi].iter().sum();
        table.push(vec![q as f64, pq]);
    }
    Ok(table)
}

/// `P(Q_{L-1}(t) >= Q)` from the joint law via the deterministic
/// local-from-global map.  Pairs `(X, Q_global)` that are off the support
/// (non-integral relation) carry zero mass and are skipped.
pub fn local_current_cdf_oracle(
    y: &Configuration,
    t: f64,
    q: i64,
    params: &RingParams,
    cap: usize,
) -> Result<f64> {
    // window wide enough for the global current at desk-scale times
    let span = (params.n as f64 * (t + 1.0) * 4.0 + 30.0) as i64;
    let law = joint_current_law(y, t, -span, span, params, cap)?;
    if law.tail_mass.abs() > 1e-8 {
        return Err(Error::Tolerance(format!(
            "current window misses mass {:.3e}",
            law.tail_mass
        )));
    }
    let states = enumerate_states(params);
    let mut acc = 0.0;
    for (qi, qg) in (law.q_lo..=law.q_hi).enumerate() {
        for (xi, x) in states.iter().enumerate() {
            let p = law.probs[qi][xi];
            match local_from_global(x, y, qg, params.l - 1, params) {
                Ok(qloc) => {
                    if qloc >= q {
                        acc += p;
                    }
                }
                Err(_) => {
                    // off-support combination; its mass must be noise-level
                    if p.abs() > 1e-9 {
                        return Err(Error::InconsistentCurrent(format!(
                            "mass {p:.3e} on off-support pair (X={:?}, Q={qg})",
                            x.positions()
                        )));
                    }
                }
            }
        }
    }
    Ok(acc)
}

/// Transition probabilities at `zeta = 1` as a table over final states.
pub fn transition_table(
    y: &Configuration,
    t: f64,
    params: &RingParams,
    cap: usize,
) -> Result<DistributionTable> {
    let ev = evolve_master(y, t, C64::new(1.0, 0.0), params, cap)?;
    let meta = serde_json::json!({
        "method": "master-equation matrix exponential",
        "L": params.l, "N": params.n, "p": params.p, "t": t,
        "y": y.positions(),
        "state_order": "lexicographic",
    });
    let mut table = DistributionTable::new(vec!["state_index", "probability"], meta);
    for (i, v) in ev.vector.iter().enumerate() {
        table.push(vec![i as f64, v.re]);
    }
    Ok(table)
}

/// Evolution vector sanity at `zeta = 1`: real, nonnegative, normalized.
pub fn check_probability_vector(v: &[C64]) -> Result<()> {
    let mut sum = 0.0;
    for x in v {
        if x.im.abs() > 1e-10 {
            return Err(Error::Tolerance(format!("imaginary part {:.3e}", x.im)));
        }
        if x.re < -1e-12 {
            return Err(Error::Tolerance(format!("negative probability {:.3e}", x.re)));
        }
        sum += x.re;
    }
    if (sum - 1.0).abs() > 1e-10 {
        return Err(Error::Tolerance(format!("total mass {sum} != 1")));
    }
    Ok(())
}
