//! Current distribution laws: the exact CDF of the local current at the
//! edge `(L-1, 0)`, the winding-model kernel with its method of images, and
//! the finite Fredholm-determinant formulas for flat and step initial data.
//!
//! Everything here reduces `L^N`-fold Bethe-root sums to determinants of
//! column-summed matrices: when an `N x N` determinant's `(i,j)` entry
//! depends on `lambda_j` alone, summing the determinant over all tuples in
//! `Q(z)^N` equals the determinant of the entrywise-summed matrix.

use crate::bethe::{det_small, energy, q_roots, BetheRootSet};
use crate::contour::{ContourSpec, QuadratureBudget};
use crate::numeric::tree_sum;
use crate::ring::{Configuration, RingParams};
use crate::{Error, Result, C64};
use ndarray::Array2;
use rayon::prelude::*;

const ONE: C64 = C64::new(1.0, 0.0);

// ---------------------------------------------------------------------------
// Initial conditions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InitialKind {
    /// Equally spaced: `(delta, d+delta, .., (N-1)d+delta)` with `L = dN`.
    Flat { d: usize, delta: usize },
    /// Packed block `(m, m+1, .., m+N-1)`.
    Step1 { m: usize },
    /// Packed block split around the origin: `(0, .., k-1, L-N+k, .., L-1)`.
    Step2 { k: usize },
    General,
}

/// An initial condition together with its resolved configuration.
#[derive(Debug, Clone)]
pub struct InitialCondition {
    pub kind: InitialKind,
    pub resolved: Configuration,
}

impl InitialCondition {
    pub fn flat(d: usize, delta: usize, params: &RingParams) -> Result<Self> {
        if params.l != d * params.n {
            return Err(Error::InvalidParams(format!(
                "flat initial data needs L = dN, got L={}, d={}, N={}",
                params.l, d, params.n
            )));
        }
        if delta >= d {
            return Err(Error::InvalidParams(format!(
                "flat shift delta={delta} outside 0..{d}"
            )));
        }
        let pos: Vec<usize> = (0..params.n).map(|i| i * d + delta).collect();
        Ok(InitialCondition {
            kind: InitialKind::Flat { d, delta },
            resolved: Configuration::new(pos, params)?,
        })
    }

    pub fn step1(m: usize, params: &RingParams) -> Result<Self> {
        if m > params.l - params.n {
            return Err(Error::InvalidParams(format!(
                "step shift m={m} outside 0..={}",
                params.l - params.n
            )));
        }
        let pos: Vec<usize> = (0..params.n).map(|i| i + m).collect();
        Ok(InitialCondition {
            kind: InitialKind::Step1 { m },
            resolved: Configuration::new(pos, params)?,
        })
    }

    pub fn step2(k: usize, params: &RingParams) -> Result<Self> {
        if k > params.n {
            return Err(Error::InvalidParams(format!(
                "step split k={k} outside 0..={}",
                params.n
            )));
        }
        let mut pos: Vec<usize> = (0..k).collect();
        pos.extend((params.l - params.n + k)..params.l);
        Ok(InitialCondition {
            kind: InitialKind::Step2 { k },
            resolved: Configuration::new(pos, params)?,
        })
    }

    pub fn general(y: Configuration) -> Self {
        InitialCondition {
            kind: InitialKind::General,
            resolved: y,
        }
    }
}

// ---------------------------------------------------------------------------
// Column-sum determinant
// ---------------------------------------------------------------------------

/// `det[ sum_{lam in roots} entry(i, j, lam) ]` over an `n x n` index range.
///
/// By multilinearity in the columns this equals the sum of
/// `det[entry(i, j, lam_j)]` over all `|roots|^n` tuples.
pub fn colsum_det<F: Fn(usize, usize, C64) -> C64>(entry: F, roots: &[C64], n: usize) -> C64 {
    let mut m = Array2::<C64>::zeros((n, n));
    for j in 0..n {
        for i in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for &lam in roots {
                acc += entry(i, j, lam);
            }
            m[[i, j]] = acc;
        }
    }
    det_small(&m)
}

// ---------------------------------------------------------------------------
// Exact current CDF
// ---------------------------------------------------------------------------

/// `P(Q_{L-1}(t) >= Q)` by the small-circle formula
///
/// `(-1)^{(N+1)Q} oint_{eps'} dz/z^{1+QL} det[ sum_lam
///   (1-lam^{-1})^{Q+j-i} lam^{y_j+1} e^{tE(lam)} / (L lam - (L-N)) ]`.
pub fn current_cdf(
    y: &Configuration,
    q: i64,
    t: f64,
    spec: &ContourSpec,
    budget: &QuadratureBudget,
    params: &RingParams,
) -> Result<f64> {
    let vals = current_cdf_many(y, &[q], t, spec, budget, params)?;
    Ok(vals[0])
}

/// Several `Q` levels sharing one sweep of Bethe-root computations.
///
/// The integrand is a single-valued function of `z` with its only
/// singularity at the origin, so the circle radius is free; positive `Q`
/// uses a larger radius to tame the `z^{-QL}` factor, negative `Q` the
/// small one from the contour spec.
pub fn current_cdf_many(
    y: &Configuration,
    qs: &[i64],
    t: f64,
    spec: &ContourSpec,
    budget: &QuadratureBudget,
    params: &RingParams,
) -> Result<Vec<f64>> {
    budget.validate()?;
    let n = params.n;
    let l = params.l as i64;
    let lf = params.l as f64;
    let nf = params.n as f64;
    let mz = budget.nodes_z;

    let mut out = vec![0.0; qs.len()];
    for (pos_q, batch) in [(false, spec.eps_prime), (true, spec.eps_prime.max(0.85 * params.r0()))]
    {
        let idxs: Vec<usize> = (0..qs.len()).filter(|&i| (qs[i] > 0) == pos_q).collect();
        if idxs.is_empty() {
            continue;
        }
        let node_vals: Vec<Result<Vec<C64>>> = (0..mz)
            .into_par_iter()
            .map(|k| -> Result<Vec<C64>> {
                let z = C64::from_polar(batch, 2.0 * std::f64::consts::PI * k as f64 / mz as f64);
                let rs = q_roots(z, params)?;
                let mut per_q = Vec::with_capacity(idxs.len());
                for &qi in &idxs {
                    let q = qs[qi];
                    let det = colsum_det(
                        |i, j, lam| {
                            (ONE - lam.inv()).powi((q + j as i64 - i as i64) as i32)
                                * lam.powi(y.positions()[j] as i32 + 1)
                                * energy(&[lam], ONE, params).scale(t).exp()
                                / (lam * lf - (lf - nf))
                        },
                        &rs.roots,
                        n,
                    );
                    per_q.push(det * z.powi(-(q * l) as i32));
                }
                Ok(per_q)
            })
            .collect();

        let mut collected: Vec<Vec<C64>> = Vec::with_capacity(mz);
        for v in node_vals {
            collected.push(v?);
        }
        for (slot, &qi) in idxs.iter().enumerate() {
            let q = qs[qi];
            let terms: Vec<C64> = collected.iter().map(|v| v[slot]).collect();
            let sign = if ((n as i64 + 1) * q).rem_euclid(2) == 0 {
                1.0
            } else {
                -1.0
            };
            let val = tree_sum(&terms) / mz as f64 * sign;
            if val.im.abs() > 1e-9 {
                return Err(Error::Tolerance(format!(
                    "imaginary residue {:.3e} in the current CDF",
                    val.im
                )));
            }
            out[qi] = val.re;
        }
    }
    Ok(out)
}

/// Alternative expression valid when `Q` is a multiple of `N`:
///
/// `(-1)^{C(N-1,2) Q} oint_{eps'} dz/z det[ sum_lam (1/L)
///   (1-lam^{-1})^{j-i} lam^{y_j+1-Qd} e^{tE} / (lam - (1-rho)) ]`
///
/// with `Qd = QL/N` an integer.
pub fn current_cdf_alt(
    y: &Configuration,
    q: i64,
    t: f64,
    spec: &ContourSpec,
    budget: &QuadratureBudget,
    params: &RingParams,
) -> Result<f64> {
    budget.validate()?;
    let n = params.n as i64;
    if q.rem_euclid(n) != 0 {
        return Err(Error::InvalidParams(format!(
            "alternative CDF form needs Q divisible by N, got Q={q}, N={n}"
        )));
    }
    let qd = q * params.l as i64 / n;
    let lf = params.l as f64;
    let rho = params.rho();
    let mz = budget.nodes_z;

    let node_vals: Vec<Result<C64>> = (0..mz)
        .into_par_iter()
        .map(|k| -> Result<C64> {
            let z = C64::from_polar(
                spec.eps_prime,
                2.0 * std::f64::consts::PI * k as f64 / mz as f64,
            );
            let rs = q_roots(z, params)?;
            Ok(colsum_det(
                |i, j, lam| {
                    (ONE - lam.inv()).powi((j as i64 - i as i64) as i32)
                        * lam.powi((y.positions()[j] as i64 + 1 - qd) as i32)
                        * energy(&[lam], ONE, params).scale(t).exp()
                        / ((lam - (1.0 - rho)) * lf)
                },
                &rs.roots,
                params.n,
            ))
        })
        .collect();
    let mut terms = Vec::with_capacity(mz);
    for v in node_vals {
        terms.push(v?);
    }
    let c2 = (n - 1) * (n - 2) / 2;
    let sign = if (c2 * q).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    let val = tree_sum(&terms) / mz as f64 * sign;
    if val.im.abs() > 1e-9 {
        return Err(Error::Tolerance(format!(
            "imaginary residue {:.3e} in the alternative current CDF",
            val.im
        )));
    }
    Ok(val.re)
}

// ---------------------------------------------------------------------------
// Winding model and method of images
// ---------------------------------------------------------------------------

/// Transition kernel of the periodic model *with winding*:
///
/// `u^BL(Y, X; t) = oint dz/z det[ sum_lam (1/L)
///   (1-lam^{-1})^{j-i+1} lam^{y_j - x_i + 1} e^{tE} / (lam - (1-rho)) ]`.
///
/// `Y`, `X` are arbitrary strictly increasing integer tuples.  The integrand
/// is a single-valued function of `z` analytic away from the origin, so any
/// circle radius computes the same number; the radius is chosen by the sign
/// of the dominant exponents to keep the node values small.
pub fn u_bl(
    y: &[i64],
    x: &[i64],
    t: f64,
    budget: &QuadratureBudget,
    params: &RingParams,
) -> Result<f64> {
    budget.validate()?;
    let n = params.n;
    assert_eq!(y.len(), n);
    assert_eq!(x.len(), n);
    let lf = params.l as f64;
    let rho = params.rho();
    let mz = budget.nodes_z;
    let sy: i64 = y.iter().sum();
    let sx: i64 = x.iter().sum();
    // net positive powers of lambda favour a small circle, negative a large
    let radius = if sy > sx { 0.55 * params.r0() } else { 1.0 / 0.3 };

    let node_vals: Vec<Result<C64>> = (0..mz)
        .into_par_iter()
        .map(|k| -> Result<C64> {
            let z = C64::from_polar(radius, 2.0 * std::f64::consts::PI * k as f64 / mz as f64);
            let rs = q_roots(z, params)?;
            Ok(colsum_det(
                |i, j, lam| {
                    (ONE - lam.inv()).powi((j as i64 - i as i64 + 1) as i32)
                        * lam.powi((y[j] - x[i] + 1) as i32)
                        * energy(&[lam], ONE, params).scale(t).exp()
                        / ((lam - (1.0 - rho)) * lf)
                },
                &rs.roots,
                n,
            ))
        })
        .collect();
    let mut terms = Vec::with_capacity(mz);
    for v in node_vals {
        terms.push(v?);
    }
    let val = tree_sum(&terms) / mz as f64;
    if val.im.abs() > 1e-8 {
        return Err(Error::Tolerance(format!(
            "imaginary residue {:.3e} in the winding kernel",
            val.im
        )));
    }
    Ok(val.re)
}

/// The `m`-th periodic shift `Y^m` of an initial configuration: particles
/// rotate backwards through the labels, dropping by `L` per full turn.
pub fn periodic_shift(y: &[i64], m: i64, l: usize, n: usize) -> Vec<i64> {
    let k = m.div_euclid(n as i64);
    let j = m.rem_euclid(n as i64) as usize;
    let li = l as i64;
    let mut out = Vec::with_capacity(n);
    for i in n - j..n {
        out.push(y[i] - (k + 1) * li);
    }
    for i in 0..n - j {
        out.push(y[i] - k * li);
    }
    out
}

/// Result of the truncated method-of-images sum.
#[derive(Debug, Clone, Copy)]
pub struct ImagesSum {
    pub value: C64,
    /// Combined magnitude of the two boundary terms; large values mean the
    /// truncation window is too small.
    pub boundary_increment: f64,
}

/// `sum_{|m| <= M} u^BL(Y^m, X; t) zeta^{sum(x_i - y^m_i)}`: the ring law
/// recovered from the winding model by the method of mirror images.
pub fn images_sum(
    y: &Configuration,
    x: &Configuration,
    zeta: C64,
    t: f64,
    m_trunc: i64,
    budget: &QuadratureBudget,
    params: &RingParams,
) -> Result<ImagesSum> {
    let n = params.n;
    let yi: Vec<i64> = y.positions().iter().map(|&v| v as i64).collect();
    let xi: Vec<i64> = x.positions().iter().map(|&v| v as i64).collect();
    let sx: i64 = xi.iter().sum();
    let mut value = C64::new(0.0, 0.0);
    let mut boundary = 0.0;
    for m in -m_trunc..=m_trunc {
        let ym = periodic_shift(&yi, m, params.l, n);
        let sym: i64 = ym.iter().sum();
        let term = u_bl(&ym, &xi, t, budget, params)? * zeta.powi((sx - sym) as i32);
        value += term;
        if m.abs() == m_trunc {
            boundary += term.norm();
        }
    }
    if boundary > 1e-8 {
        eprintln!("warning: images truncation boundary terms contribute {boundary:.3e}");
    }
    Ok(ImagesSum {
        value,
        boundary_increment: boundary,
    })
}

// ---------------------------------------------------------------------------
// q_z factorization helpers
// ---------------------------------------------------------------------------

/// `(q_{z,0}(w), q_{z,1}(w), q_{z,1}'(w))`: the factors of
/// `w^{L-N}(w-1)^N - z^L` split over the near-0 and near-1 root families,
/// and the derivative of the latter factor.
pub fn qz_factors(w: C64, rootset: &BetheRootSet) -> Result<(C64, C64, C64)> {
    let q0 = rootset.q0_roots()?;
    let q1 = rootset.q1_roots()?;
    let q0val: C64 = q0.iter().map(|&v| w - v).product();
    let q1val: C64 = q1.iter().map(|&v| w - v).product();
    let mut q1deriv = C64::new(0.0, 0.0);
    for a in 0..q1.len() {
        let mut prod = ONE;
        for (b, &v) in q1.iter().enumerate() {
            if b != a {
                prod *= w - v;
            }
        }
        q1deriv += prod;
    }
    Ok((q0val, q1val, q1deriv))
}

// ---------------------------------------------------------------------------
// Flat Fredholm formula
// ---------------------------------------------------------------------------

/// Per-node root data for the finite Fredholm formulas.
struct FredholmNode {
    q0: Vec<C64>,
    q1: Vec<C64>,
    /// Index into `q1` of the partner `V(u)` for each `u` in `q0`.
    partner: Vec<usize>,
}

fn fredholm_node(z: C64, params: &RingParams, need_partner: bool) -> Result<FredholmNode> {
    let rs = q_roots(z, params)?;
    let q0_idx = rs
        .q0
        .clone()
        .ok_or_else(|| Error::Classification("no Q0/Q1 split".into()))?;
    let q1_idx = rs.q1.clone().unwrap();
    let q0: Vec<C64> = q0_idx.iter().map(|&i| rs.roots[i]).collect();
    let q1: Vec<C64> = q1_idx.iter().map(|&i| rs.roots[i]).collect();
    let mut partner = Vec::with_capacity(q0.len());
    if need_partner {
        for &u in &q0_idx {
            let v = rs.v_partner(u)?;
            let pos = q1_idx.iter().position(|&i| i == v).unwrap();
            partner.push(pos);
        }
    }
    Ok(FredholmNode { q0, q1, partner })
}

/// `ln` of `prod_{v in Q1} prod_{u in Q0} sqrt(v - u)` with the principal
/// square root per factor, accumulated in a deterministic order.
fn log_sqrt_pair_product(q0: &[C64], q1: &[C64]) -> C64 {
    let mut terms: Vec<C64> = Vec::with_capacity(q0.len() * q1.len());
    for &v in q1 {
        for &u in q0 {
            terms.push((v - u).ln() * 0.5);
        }
    }
    // deterministic order: by argument, then modulus
    terms.sort_by(|a, b| (a.im, a.re).partial_cmp(&(b.im, b.re)).unwrap());
    terms.iter().sum()
}

/// Flat-initial-data CDF as a contour integral of a finite Fredholm
/// determinant on the `L - N` near-zero Bethe roots:
///
/// `P(Q_{L-1}(t) >= Q) = oint_{C_r} C_N^flat(z) det(I + K_z^flat) dz/z`,
/// `0 < r < r0`.
///
/// The `delta` shift of the flat data enters through `v^delta` in the
/// prefactor and `w^delta` in the kernel weight.
pub fn flat_cdf(
    d: usize,
    delta: usize,
    q: i64,
    t: f64,
    radius: f64,
    budget: &QuadratureBudget,
    params: &RingParams,
) -> Result<f64> {
    budget.validate()?;
    if params.l != d * params.n || d < 2 {
        return Err(Error::InvalidParams(format!(
            "flat formula needs L = dN with d >= 2, got L={}, N={}, d={d}",
            params.l, params.n
        )));
    }
    if delta >= d {
        return Err(Error::InvalidParams(format!("delta={delta} outside 0..{d}")));
    }
    if !(radius > 0.0 && radius < params.r0()) {
        return Err(Error::InvalidParams(format!(
            "contour radius {radius} outside (0, r0 = {})",
            params.r0()
        )));
    }
    let n = params.n;
    let lf = params.l as f64;
    let nf = n as f64;
    let rho = params.rho();
    let mz = budget.nodes_z;

    // ln f^flat(w) without the q_{z,1} factor; large t and Q make the
    // linear-space value overflow long before the combined node value does
    let ln_fw_base = |w: C64| -> C64 {
        w.ln() * (delta as f64 + 2.0 - nf)
            + (ONE - w.inv()).ln() * (q as f64 - nf + 1.0)
            + energy(&[w], ONE, params).scale(t)
            - (w - (1.0 - rho)).ln()
    };

    let node_vals: Vec<Result<C64>> = (0..mz)
        .into_par_iter()
        .map(|k| -> Result<C64> {
            let z = C64::from_polar(radius, 2.0 * std::f64::consts::PI * k as f64 / mz as f64);
            let node = fredholm_node(z, params, true)?;
            let (q0, q1) = (&node.q0, &node.q1);

            // prefactor in log space, principal branch per factor; the
            // exponent is L-N-Q-d/2+1+delta written via (d-2)/2 so that
            // v^{-d/2} means integer powers of the principal sqrt(v)
            let mut ln_c = C64::new(0.0, 0.0);
            for &u in q0 {
                ln_c += (ONE - u).ln() * (-q as f64);
            }
            let v_exp = lf - nf - q as f64 + delta as f64 - (d as f64 - 2.0) / 2.0;
            for &v in q1 {
                ln_c += v.ln() * v_exp;
                ln_c += energy(&[v], ONE, params).scale(t);
                ln_c -= ((v - (1.0 - rho)) * d as f64).ln() * 0.5;
            }
            ln_c -= log_sqrt_pair_product(q0, q1);

            // kernel on Q0: K(u, u') = f(u) / ((u - v') f(v')), entries by a
            // single exponentiation of log-space ratios
            let ln_f_u: Vec<C64> = q0
                .iter()
                .map(|&u| {
                    let mut acc = ln_fw_base(u);
                    for &v in q1 {
                        acc += (u - v).ln();
                    }
                    acc
                })
                .collect();
            let ln_f_v: Vec<C64> = (0..q1.len())
                .map(|vi| {
                    let mut acc = ln_fw_base(q1[vi]);
                    for (b, &vv) in q1.iter().enumerate() {
                        if b != vi {
                            acc += (q1[vi] - vv).ln();
                        }
                    }
                    acc
                })
                .collect();
            let size = q0.len();
            let mut ik = Array2::<C64>::eye(size);
            for r in 0..size {
                for c in 0..size {
                    let vp = node.partner[c];
                    let ln_entry = ln_f_u[r] - ln_f_v[vp] - (q0[r] - q1[vp]).ln();
                    if ln_entry.re > 600.0 {
                        return Err(Error::Tolerance(format!(
                            "kernel entry magnitude e^{:.0} beyond f64 range",
                            ln_entry.re
                        )));
                    }
                    ik[[r, c]] += ln_entry.exp();
                }
            }
            // exponentiate prefactor and determinant together: both can be
            // astronomically large with an O(1) product
            Ok((ln_c + crate::bethe::log_det_scaled(&ik)).exp())
        })
        .collect();
    let mut terms = Vec::with_capacity(mz);
    for v in node_vals {
        terms.push(v?);
    }
    // the sign (-1)^{(N+1)Q} is already absorbed into the prefactor
    let val = tree_sum(&terms) / mz as f64;
    if val.im.abs() > 1e-7 {
        return Err(Error::Tolerance(format!(
            "imaginary residue {:.3e} in the flat Fredholm formula",
            val.im
        )));
    }
    Ok(val.re)
}

// ---------------------------------------------------------------------------
// Step Fredholm formula
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepCase {
    /// Block `(m, .., m+N-1)`.
    One,
    /// Split block `(0, .., k-1, L-N+k, .., L-1)`.
    Two,
}

/// Step-initial-data CDF:
/// `P(Q_{L-1}(t) >= Q) = oint_{C_r} C_{i,N}^step(z) det(I + K_{i,z}^step) dz/z`.
pub fn step_cdf(
    case: StepCase,
    shift: usize,
    q: i64,
    t: f64,
    radius: f64,
    budget: &QuadratureBudget,
    params: &RingParams,
) -> Result<f64> {
    budget.validate()?;
    let n = params.n;
    let lf = params.l as f64;
    let nf = n as f64;
    let rho = params.rho();
    match case {
        StepCase::One => {
            if shift > params.l - n {
                return Err(Error::InvalidParams(format!(
                    "step shift m={shift} outside 0..={}",
                    params.l - n
                )));
            }
        }
        StepCase::Two => {
            if shift > n {
                return Err(Error::InvalidParams(format!(
                    "step split k={shift} outside 0..={n}"
                )));
            }
        }
    }
    if !(radius > 0.0 && radius < params.r0()) {
        return Err(Error::InvalidParams(format!(
            "contour radius {radius} outside (0, r0 = {})",
            params.r0()
        )));
    }
    let mz = budget.nodes_z;

    // ln f_i^step(w) without the squared q_{z,1} factor
    let ln_fw_base = move |w: C64, params: &RingParams| -> C64 {
        let (wexp, bexp) = match case {
            StepCase::One => (shift as f64 - nf + 2.0, q as f64 - nf + 1.0),
            StepCase::Two => (
                -2.0 * nf + shift as f64 + 2.0,
                q as f64 - 2.0 * nf + shift as f64 + 1.0,
            ),
        };
        w.ln() * wexp + (ONE - w.inv()).ln() * bexp + energy(&[w], ONE, params).scale(t)
            - (w - (1.0 - rho)).ln()
    };

    let node_vals: Vec<Result<C64>> = (0..mz)
        .into_par_iter()
        .map(|k| -> Result<C64> {
            let z = C64::from_polar(radius, 2.0 * std::f64::consts::PI * k as f64 / mz as f64);
            let node = fredholm_node(z, params, false)?;
            let (q0, q1) = (&node.q0, &node.q1);

            // prefactor in log space
            let (v_exp, u_exp) = match case {
                StepCase::One => (lf - nf + shift as f64 - q as f64, -(q as f64)),
                StepCase::Two => (lf - nf - q as f64, -(q as f64) + nf - shift as f64),
            };
            let mut ln_c = C64::new(0.0, 0.0);
            for &v in q1 {
                ln_c += v.ln() * v_exp;
                ln_c += energy(&[v], ONE, params).scale(t);
            }
            for &u in q0 {
                ln_c += (ONE - u).ln() * u_exp;
            }
            for &v in q1 {
                for &u in q0 {
                    ln_c -= (v - u).ln();
                }
            }

            let ln_f_u: Vec<C64> = q0
                .iter()
                .map(|&u| {
                    let mut acc = ln_fw_base(u, params);
                    for &v in q1 {
                        acc += (u - v).ln() * 2.0;
                    }
                    acc
                })
                .collect();
            let ln_f_v: Vec<C64> = (0..q1.len())
                .map(|vi| {
                    let mut acc = ln_fw_base(q1[vi], params);
                    for (b, &vv) in q1.iter().enumerate() {
                        if b != vi {
                            acc += (q1[vi] - vv).ln() * 2.0;
                        }
                    }
                    acc
                })
                .collect();
            let size = q0.len();
            let mut ik = Array2::<C64>::eye(size);
            for r in 0..size {
                for c in 0..size {
                    let mut acc = C64::new(0.0, 0.0);
                    for (vi, &v) in q1.iter().enumerate() {
                        let ln_entry =
                            ln_f_u[r] - ln_f_v[vi] - (q0[r] - v).ln() - (q0[c] - v).ln();
                        if ln_entry.re > 600.0 {
                            return Err(Error::Tolerance(format!(
                                "kernel entry magnitude e^{:.0} beyond f64 range",
                                ln_entry.re
                            )));
                        }
                        acc += ln_entry.exp();
                    }
                    ik[[r, c]] += acc;
                }
            }
            Ok((ln_c + crate::bethe::log_det_scaled(&ik)).exp())
        })
        .collect();
    let mut terms = Vec::with_capacity(mz);
    for v in node_vals {
        terms.push(v?);
    }
    let val = tree_sum(&terms) / mz as f64;
    if val.im.abs() > 1e-7 {
        return Err(Error::Tolerance(format!(
            "imaginary residue {:.3e} in the step Fredholm formula",
            val.im
        )));
    }
    Ok(val.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{local_current_cdf_oracle, transition_table, DEFAULT_STATE_CAP};
    use crate::ring::enumerate_states;

    fn conf(pos: &[usize], params: &RingParams) -> Configuration {
        Configuration::new(pos.to_vec(), params).unwrap()
    }

    #[test]
    fn colsum_matches_tuple_sum() {
        // random analytic entry over 4 roots, N = 2: 16 tuples
        let roots = [
            C64::new(0.3, 0.1),
            C64::new(-0.2, 0.7),
            C64::new(1.1, -0.4),
            C64::new(0.05, -0.9),
        ];
        let entry = |i: usize, j: usize, lam: C64| {
            lam.powi(i as i32 + 1) + lam.powi(-(j as i32) - 1) * C64::new(0.3, 0.2)
        };
        let fast = colsum_det(entry, &roots, 2);
        let mut slow = C64::new(0.0, 0.0);
        for &a in &roots {
            for &b in &roots {
                let m = ndarray::array![
                    [entry(0, 0, a), entry(0, 1, b)],
                    [entry(1, 0, a), entry(1, 1, b)]
                ];
                slow += det_small(&m);
            }
        }
        assert!((fast - slow).norm() < 1e-12 * slow.norm().max(1.0));
        // entry independent of lambda: L^N det
        let flat_entry = |i: usize, j: usize, _| C64::new((i * 2 + j + 1) as f64, 0.3);
        let v = colsum_det(flat_entry, &roots, 2);
        let m = ndarray::array![
            [flat_entry(0, 0, roots[0]), flat_entry(0, 1, roots[0])],
            [flat_entry(1, 0, roots[0]), flat_entry(1, 1, roots[0])]
        ];
        assert!((v - det_small(&m) * 16.0).norm() < 1e-10);
        // N = 1: plain sum
        let v = colsum_det(|_, _, lam| lam, &roots, 1);
        let s: C64 = roots.iter().sum();
        assert!((v - s).norm() < 1e-14);
    }

    #[test]
    fn current_cdf_t0() {
        let ps = RingParams::new(4, 2, 1.0).unwrap();
        let spec = ContourSpec::default_for(&ps).unwrap();
        let budget = QuadratureBudget::default();
        let y = conf(&[0, 2], &ps);
        for q in -2..=0 {
            let v = current_cdf(&y, q, 0.0, &spec, &budget, &ps).unwrap();
            assert!((v - 1.0).abs() < 1e-8, "Q={q}: {v}");
        }
        for q in 1..=3 {
            let v = current_cdf(&y, q, 0.0, &spec, &budget, &ps).unwrap();
            assert!(v.abs() < 1e-8, "Q={q}: {v}");
        }
    }

    #[test]
    fn current_cdf_matches_oracle() {
        for &p in &[1.0, 0.7] {
            let ps = RingParams::new(4, 2, p).unwrap();
            let spec = ContourSpec::default_for(&ps).unwrap();
            let budget = QuadratureBudget::default();
            let y = conf(&[0, 2], &ps);
            let t = 0.5;
            let qs: Vec<i64> = (-2..=3).collect();
            let vals = current_cdf_many(&y, &qs, t, &spec, &budget, &ps).unwrap();
            for (q, v) in qs.iter().zip(&vals) {
                let oracle = local_current_cdf_oracle(&y, t, *q, &ps, DEFAULT_STATE_CAP).unwrap();
                assert!(
                    (v - oracle).abs() < 1e-6,
                    "p={p}, Q={q}: {v} vs oracle {oracle}"
                );
            }
            // nonincreasing in Q
            for w in vals.windows(2) {
                assert!(w[1] <= w[0] + 1e-9);
            }
        }
    }

    #[test]
    fn current_cdf_alt_agrees_at_multiples() {
        let ps = RingParams::new(4, 2, 0.7).unwrap();
        let spec = ContourSpec::default_for(&ps).unwrap();
        let budget = QuadratureBudget::default();
        let y = conf(&[0, 2], &ps);
        let t = 0.5;
        for &q in &[-2i64, 0, 2] {
            let a = current_cdf(&y, q, t, &spec, &budget, &ps).unwrap();
            let b = current_cdf_alt(&y, q, t, &spec, &budget, &ps).unwrap();
            assert!((a - b).abs() < 1e-8, "Q={q}: {a} vs {b}");
        }
        assert!(current_cdf_alt(&y, 1, t, &spec, &budget, &ps).is_err());
    }

    #[test]
    fn stat_current_constant() {
        // restricted (all-Q1) sum against the closed constant (-1)^{(N+1)Q}
        let ps = RingParams::new(5, 2, 0.7).unwrap();
        let budget = QuadratureBudget::default();
        let y = conf(&[0, 2], &ps);
        let t = 0.4;
        let lf = ps.l as f64;
        let nf = ps.n as f64;
        for &q in &[-1i64, 0, 1, 2] {
            let mz = budget.nodes_z;
            let terms: Vec<C64> = (0..mz)
                .map(|k| {
                    let z =
                        C64::from_polar(0.2, 2.0 * std::f64::consts::PI * k as f64 / mz as f64);
                    let rs = q_roots(z, &ps).unwrap();
                    let q1 = rs.q1_roots().unwrap();
                    let det = colsum_det(
                        |i, j, lam| {
                            (ONE - lam.inv()).powi((q + j as i64 - i as i64) as i32)
                                * lam.powi(y.positions()[j] as i32 + 1)
                                * energy(&[lam], ONE, &ps).scale(t).exp()
                                / (lam * lf - (lf - nf))
                        },
                        &q1,
                        ps.n,
                    );
                    det * z.powi(-(q as i32) * ps.l as i32)
                })
                .collect();
            let val = tree_sum(&terms) / mz as f64;
            let sign = if ((ps.n as i64 + 1) * q).rem_euclid(2) == 0 {
                1.0
            } else {
                -1.0
            };
            assert!((val - sign).norm() < 1e-8, "Q={q}: {val} vs {sign}");
        }
    }

    #[test]
    fn state_space_sum_identity() {
        // sum_X det[(1-lam_j^{-1})^{-i} lam_j^{-x_i}]
        //   = (1 + (-1)^N z^{-L} prod(1-lam^{-1})) det[(1-lam_j^{-1})^{-i-1}]
        let ps = RingParams::new(5, 2, 0.7).unwrap();
        let z = C64::new(0.23, 0.11);
        let rs = q_roots(z, &ps).unwrap();
        let lams = [rs.roots[0], rs.roots[3]];
        let states = enumerate_states(&ps);
        let mut lhs = C64::new(0.0, 0.0);
        for x in &states {
            let m = ndarray::Array2::from_shape_fn((2, 2), |(i, j)| {
                (ONE - lams[j].inv()).powi(-(i as i32) - 1)
                    * lams[j].powi(-(x.positions()[i] as i32))
            });
            lhs += det_small(&m);
        }
        let prod: C64 = lams.iter().map(|&l| ONE - l.inv()).product();
        let vandermonde = ndarray::Array2::from_shape_fn((2, 2), |(i, j)| {
            (ONE - lams[j].inv()).powi(-(i as i32) - 2)
        });
        let rhs = (ONE + z.powi(-5) * prod) * det_small(&vandermonde);
        assert!(
            (lhs - rhs).norm() < 1e-9 * rhs.norm().max(1.0),
            "{lhs} vs {rhs}"
        );
    }

    #[test]
    fn u_bl_delta_and_nonnegative() {
        let ps = RingParams::new(4, 2, 1.0).unwrap();
        let budget = QuadratureBudget::default();
        // t = 0: indicator within the winding sector
        let y = [0i64, 2];
        for x in [[0i64, 2], [1, 2], [0, 3], [1, 3]] {
            let v = u_bl(&y, &x, 0.0, &budget, &ps).unwrap();
            let expect = if x == y { 1.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-6, "x={x:?}: {v}");
        }
        // nonnegativity on a small grid
        for t in [0.3, 0.8] {
            for x in [[0i64, 1], [1, 2], [2, 3], [0, 3], [4, 5]] {
                let v = u_bl(&y, &x, t, &budget, &ps).unwrap();
                assert!(v >= -1e-8, "t={t}, x={x:?}: {v}");
            }
        }
    }

    #[test]
    fn u_bl_normalization() {
        // sum over the winding state space at t = 0.5 (truncated window)
        let ps = RingParams::new(4, 2, 1.0).unwrap();
        let budget = QuadratureBudget::default();
        let y = [0i64, 2];
        let mut total = 0.0;
        // x1 ranges over a window, x2 in (x1, x1 + L)
        for x1 in -8i64..12 {
            for x2 in x1 + 1..x1 + 4 {
                total += u_bl(&y, &[x1, x2], 0.5, &budget, &ps).unwrap();
            }
        }
        assert!((total - 1.0).abs() < 1e-6, "total {total}");
    }

    #[test]
    fn periodic_shift_examples() {
        let y = [0i64, 2];
        assert_eq!(periodic_shift(&y, 0, 5, 2), vec![0, 2]);
        assert_eq!(periodic_shift(&y, 1, 5, 2), vec![-3, 0]);
        assert_eq!(periodic_shift(&y, -1, 5, 2), vec![2, 5]);
        assert_eq!(periodic_shift(&y, 2, 5, 2), vec![-5, -3]);
    }

    #[test]
    fn images_match_oracle_and_onefold() {
        let ps = RingParams::new(5, 2, 0.7).unwrap();
        let budget = QuadratureBudget::default();
        let t = 0.5;
        let y = conf(&[0, 2], &ps);
        let states = enumerate_states(&ps);
        // zeta = 1: ring transition probability
        let table = transition_table(&y, t, &ps, DEFAULT_STATE_CAP).unwrap();
        for (xi, x) in states.iter().enumerate() {
            let im = images_sum(&y, x, ONE, t, 3, &budget, &ps).unwrap();
            let oracle = table.rows[xi][1];
            assert!(
                (im.value.re - oracle).abs() < 1e-6,
                "x={:?}: {} vs {oracle}",
                x.positions(),
                im.value.re
            );
        }
        // generic zeta: against the 1-fold formula
        let spec = ContourSpec::default_for(&ps).unwrap();
        let zeta = C64::from_polar(1.0, std::f64::consts::PI / 5.0);
        let x = conf(&[1, 3], &ps);
        let a = images_sum(&y, &x, zeta, t, 3, &budget, &ps).unwrap().value;
        let b = crate::contour::gf_onefold(&y, &x, zeta, t, &spec, &budget, &ps).unwrap();
        assert!((a - b).norm() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn qz_factor_identities() {
        let ps = RingParams::new(6, 2, 0.7).unwrap();
        let z = C64::new(0.21, 0.13);
        let rs = q_roots(z, &ps).unwrap();
        let w = C64::new(0.4, 0.77);
        let (q0v, q1v, _) = qz_factors(w, &rs).unwrap();
        let full = w.powi(4) * (w - ONE).powi(2) - z.powi(6);
        assert!(
            (q0v * q1v - full).norm() < 1e-10 * full.norm().max(1.0),
            "product mismatch"
        );
        // derivative identity at v in Q1
        let lf = 6.0;
        for &v in &rs.q1_roots().unwrap() {
            let (q0v, _, q1d) = qz_factors(v, &rs).unwrap();
            let rhs = v.powi(3) * (v - ONE) * (v - (1.0 - ps.rho())) * lf;
            assert!(
                (q1d * q0v - rhs).norm() < 1e-8 * rhs.norm().max(1.0),
                "derivative identity at {v}"
            );
        }
        // N = L - N = 1: both factors linear
        let ps = RingParams::new(2, 1, 0.7).unwrap();
        let rs = q_roots(C64::new(0.2, 0.05), &ps).unwrap();
        let (q0v, q1v, _) = qz_factors(w, &rs).unwrap();
        let full = w * (w - ONE) - C64::new(0.2, 0.05).powi(2);
        assert!((q0v * q1v - full).norm() < 1e-12);
    }

    #[test]
    fn flat_cdf_matches_current_cdf() {
        let ps = RingParams::new(6, 2, 0.7).unwrap();
        let spec = ContourSpec::default_for(&ps).unwrap();
        let budget = QuadratureBudget::default();
        let ic = InitialCondition::flat(3, 0, &ps).unwrap();
        let radius = 0.6 * ps.r0();
        for &t in &[0.3, 1.0] {
            for &q in &[-1i64, 0, 1, 2] {
                let a = flat_cdf(3, 0, q, t, radius, &budget, &ps).unwrap();
                let b = current_cdf(&ic.resolved, q, t, &spec, &budget, &ps).unwrap();
                assert!((a - b).abs() < 1e-6, "t={t}, Q={q}: {a} vs {b}");
            }
        }
        // t=0, Q=0 -> 1
        let v = flat_cdf(3, 0, 0, 0.0, radius, &budget, &ps).unwrap();
        assert!((v - 1.0).abs() < 1e-6);
    }

    #[test]
    fn flat_cdf_delta_shift() {
        // the delta-shifted flat data must still match the generic formula
        let ps = RingParams::new(6, 2, 0.7).unwrap();
        let spec = ContourSpec::default_for(&ps).unwrap();
        let budget = QuadratureBudget::default();
        let radius = 0.6 * ps.r0();
        for delta in [1usize, 2] {
            let ic = InitialCondition::flat(3, delta, &ps).unwrap();
            for &q in &[0i64, 1] {
                let a = flat_cdf(3, delta, q, 0.7, radius, &budget, &ps).unwrap();
                let b = current_cdf(&ic.resolved, q, 0.7, &spec, &budget, &ps).unwrap();
                assert!((a - b).abs() < 1e-6, "delta={delta}, Q={q}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn flat_cdf_radius_independence() {
        let ps = RingParams::new(6, 2, 0.7).unwrap();
        let budget = QuadratureBudget::default();
        let a = flat_cdf(3, 0, 1, 0.5, 0.5 * ps.r0(), &budget, &ps).unwrap();
        let b = flat_cdf(3, 0, 1, 0.5, 0.7 * ps.r0(), &budget, &ps).unwrap();
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }

    #[test]
    fn step_cdf_matches_current_cdf() {
        let ps = RingParams::new(5, 2, 0.7).unwrap();
        let spec = ContourSpec::default_for(&ps).unwrap();
        let budget = QuadratureBudget::default();
        let radius = 0.6 * ps.r0();
        let t = 0.5;
        // case 1, m = 1
        let ic = InitialCondition::step1(1, &ps).unwrap();
        for &q in &[-1i64, 0, 1] {
            let a = step_cdf(StepCase::One, 1, q, t, radius, &budget, &ps).unwrap();
            let b = current_cdf(&ic.resolved, q, t, &spec, &budget, &ps).unwrap();
            assert!((a - b).abs() < 1e-6, "case1 Q={q}: {a} vs {b}");
        }
        // case 2, k = 1
        let ic = InitialCondition::step2(1, &ps).unwrap();
        for &q in &[-1i64, 0, 1] {
            let a = step_cdf(StepCase::Two, 1, q, t, radius, &budget, &ps).unwrap();
            let b = current_cdf(&ic.resolved, q, t, &spec, &budget, &ps).unwrap();
            assert!((a - b).abs() < 1e-6, "case2 Q={q}: {a} vs {b}");
        }
        // definitional overlap: case 2 with k = N equals case 1 with m = 0
        let a = step_cdf(StepCase::Two, ps.n, 0, t, radius, &budget, &ps).unwrap();
        let b = step_cdf(StepCase::One, 0, 0, t, radius, &budget, &ps).unwrap();
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        // t=0
        let v = step_cdf(StepCase::One, 1, 0, 0.0, radius, &budget, &ps).unwrap();
        assert!((v - 1.0).abs() < 1e-6);
    }

    #[test]
    fn initial_condition_validation() {
        let ps = RingParams::new(6, 2, 0.7).unwrap();
        assert!(InitialCondition::flat(2, 0, &ps).is_err()); // L != dN
        assert!(InitialCondition::flat(3, 3, &ps).is_err()); // delta out of range
        assert!(InitialCondition::step1(5, &ps).is_err());
        assert!(InitialCondition::step2(3, &ps).is_err());
        let ic = InitialCondition::step2(2, &ps).unwrap();
        assert_eq!(ic.resolved.positions(), &[0, 1]);
    }
}
