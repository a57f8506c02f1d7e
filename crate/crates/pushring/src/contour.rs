//! Contour specifications and the three equivalent formulas for the
//! deformed transition kernel: the (N+1)-fold nested contour integral, the
//! 1-fold integral over the auxiliary variable, and the spectral sum over
//! coupled Bethe tuples.
//!
//! All circle integrals use the measure `dz / (2 pi i z)`, discretized by
//! the periodic trapezoid rule; on analytic integrands the node average
//! converges spectrally fast.

use crate::bethe::{
    coupled_roots, energy, lambda_qprime, q_roots, tuple_r, BetheTuple, CoupledSearch,
};
use crate::numeric::tree_sum;
use crate::ring::{Configuration, RingParams};
use crate::{Error, Result, C64};
use ndarray::Array2;
use rayon::prelude::*;

const ONE: C64 = C64::new(1.0, 0.0);

// ---------------------------------------------------------------------------
// Contour conditions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecVariant {
    /// Strict conditions; requires `2N < L`.
    Cond,
    /// Relaxed conditions with the `alpha` prefactors; allows `2N = L`.
    CondPrime,
}

/// The five circle radii and exponents of the nested contours.
#[derive(Debug, Clone, Copy)]
pub struct ContourSpec {
    pub eps_prime: f64,
    pub r_prime: f64,
    pub r_big: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub beta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub variant: SpecVariant,
    pub alpha0: Option<f64>,
    pub alpha1: Option<f64>,
}

/// Optional overrides for [`make_spec`]; `None` fields take the defaults
/// (`beta = 1.5`, interval midpoints for `beta1`, `beta2`).
#[derive(Debug, Clone, Copy, Default)]
pub struct SpecOverrides {
    pub beta: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub alpha0: Option<f64>,
    pub alpha1: Option<f64>,
}

/// Build and validate a contour specification.  The relaxed variant is
/// selected automatically when `2N = L`.
pub fn make_spec(params: &RingParams, eps_prime: f64, ov: SpecOverrides) -> Result<ContourSpec> {
    let l = params.l as f64;
    let n = params.n as f64;
    let d = l / n;
    let rho = params.rho();
    if 2 * params.n > params.l {
        return Err(Error::ContourCondition(format!(
            "contour machinery requires 2N <= L, got L={}, N={}",
            params.l, params.n
        )));
    }
    if !(eps_prime > 0.0 && eps_prime < 1.0) {
        return Err(Error::ContourCondition(format!(
            "need 0 < eps' < 1, got {eps_prime}"
        )));
    }
    let variant = if 2 * params.n == params.l {
        SpecVariant::CondPrime
    } else {
        SpecVariant::Cond
    };
    let beta = ov.beta.unwrap_or(1.5);
    if beta <= 1.0 {
        return Err(Error::ContourCondition(format!("beta = {beta} <= 1")));
    }
    let lo1 = 1.0 / (1.0 - rho);
    let hi1 = d;
    let lo2 = d;
    let hi2 = if params.n > 1 {
        l / (n - 1.0)
    } else {
        d + 2.0 // N = 1: no upper constraint; any beta2 > d works
    };
    let beta1 = ov.beta1.unwrap_or(0.5 * (lo1 + hi1));
    let beta2 = ov.beta2.unwrap_or(0.5 * (lo2 + hi2));
    match variant {
        SpecVariant::Cond => {
            if !(beta1 > lo1 && beta1 < hi1) {
                return Err(Error::ContourCondition(format!(
                    "beta1 = {beta1} outside (1/(1-rho), d) = ({lo1}, {hi1})"
                )));
            }
        }
        SpecVariant::CondPrime => {
            if !(beta1 >= lo1 && beta1 <= hi1) {
                return Err(Error::ContourCondition(format!(
                    "beta1 = {beta1} outside [1/(1-rho), d] = [{lo1}, {hi1}]"
                )));
            }
        }
    }
    if params.n > 1 && !(beta2 > lo2 && beta2 < hi2) {
        return Err(Error::ContourCondition(format!(
            "beta2 = {beta2} outside (d, L/(N-1)) = ({lo2}, {hi2})"
        )));
    }
    if params.n == 1 && beta2 <= lo2 {
        return Err(Error::ContourCondition(format!(
            "beta2 = {beta2} <= d = {lo2}"
        )));
    }

    let (r_prime, eps1, alpha0, alpha1) = match variant {
        SpecVariant::Cond => (1.0 / eps_prime, eps_prime.powf(beta1), None, None),
        SpecVariant::CondPrime => {
            let a1_cap = 2.0f64.powf(-n / (l - n));
            let alpha1 = ov.alpha1.unwrap_or(0.9 * a1_cap);
            if alpha1 >= a1_cap {
                return Err(Error::ContourCondition(format!(
                    "alpha1 = {alpha1} >= 2^(-N/(L-N)) = {a1_cap}"
                )));
            }
            let eps1 = alpha1 * eps_prime.powf(beta1);
            let need = (1.0 + eps1) * (1.0 + eps1.powf(n - 1.0));
            let alpha0 = ov
                .alpha0
                .unwrap_or_else(|| (2.0 * need / alpha1.powf(n)).powf(1.0 / l).max(1.0));
            if need >= alpha0.powf(l) * alpha1.powf(n) {
                return Err(Error::ContourCondition(format!(
                    "(1+eps1)(1+eps1^(N-1)) = {need} >= alpha0^L alpha1^N"
                )));
            }
            (alpha0 / eps_prime, eps1, Some(alpha0), Some(alpha1))
        }
    };
    let r_big = r_prime.powf(beta);
    let eps2 = eps_prime.powf(beta2);
    // geometric sanity: contours must be nested and disjoint
    if !(eps_prime < r_prime && eps1 < r_big && eps2 + 1.0 < r_big && eps1 < 1.0 - eps2) {
        return Err(Error::ContourCondition(
            "circles are not nested/disjoint (eps' < R', eps1 < R, 1 + eps2 < R, eps1 < 1 - eps2)"
                .into(),
        ));
    }
    Ok(ContourSpec {
        eps_prime,
        r_prime,
        r_big,
        eps1,
        eps2,
        beta,
        beta1,
        beta2,
        variant,
        alpha0,
        alpha1,
    })
}

impl ContourSpec {
    pub fn default_for(params: &RingParams) -> Result<Self> {
        make_spec(params, 0.3, SpecOverrides::default())
    }
}

/// Node counts for the circle quadratures.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureBudget {
    pub nodes_z: usize,
    pub nodes_w: usize,
    /// Evaluate large powers through `exp(e log w)` instead of repeated
    /// multiplication (needed for extreme radii).
    pub rescale: bool,
}

impl Default for QuadratureBudget {
    fn default() -> Self {
        QuadratureBudget {
            nodes_z: 64,
            nodes_w: 48,
            rescale: true,
        }
    }
}

impl QuadratureBudget {
    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("nodes_z", self.nodes_z), ("nodes_w", self.nodes_w)] {
            if n < 16 || n % 2 != 0 {
                return Err(Error::InvalidParams(format!(
                    "{name} must be even and >= 16, got {n}"
                )));
            }
        }
        Ok(())
    }

    pub fn doubled(&self) -> Self {
        QuadratureBudget {
            nodes_z: self.nodes_z * 2,
            nodes_w: self.nodes_w * 2,
            rescale: self.rescale,
        }
    }
}

// ---------------------------------------------------------------------------
// Circle quadrature
// ---------------------------------------------------------------------------

/// `(1/(2 pi i)) \oint f(w) dw / w` over the positively oriented circle
/// `center + radius e^{i theta}`, by the `m`-node trapezoid rule.  For a
/// circle centered at the origin this is the plain node average.
pub fn circle_quadrature<F: Fn(C64) -> C64>(center: C64, radius: f64, m: usize, f: F) -> C64 {
    let vals: Vec<C64> = (0..m)
        .map(|k| {
            let w =
                center + C64::from_polar(radius, 2.0 * std::f64::consts::PI * k as f64 / m as f64);
            f(w) * ((w - center) / w)
        })
        .collect();
    tree_sum(&vals) / m as f64
}

fn power(w: C64, e: i32, rescale: bool) -> C64 {
    if rescale && e.abs() > 8 {
        (w.ln() * e as f64).exp()
    } else {
        w.powi(e)
    }
}

// ---------------------------------------------------------------------------
// (N+1)-fold formula
// ---------------------------------------------------------------------------

struct WNode {
    /// Signed quadrature weight: circle sign times `(w - c)/w / M`.
    weight: C64,
    /// `q_z(w)`; depends on the current `z`.
    qz: C64,
    /// `e^{t E(w)}` single-particle factor.
    et: C64,
    /// `1 - w^{-1}`.
    winv1: C64,
    /// `w^e` for `e = -(L-1) .. L-1`, index shifted by `L-1`.
    wpow: Vec<C64>,
    /// `(1 - w^{-1})^e` for `e = -(N-1) .. N-1`, index shifted by `N-1`.
    bpow: Vec<C64>,
}

fn build_wnodes(
    z: C64,
    spec: &ContourSpec,
    budget: &QuadratureBudget,
    t: f64,
    params: &RingParams,
) -> Vec<WNode> {
    let l = params.l as i32;
    let n = params.n as i32;
    let zl = power(z, l, budget.rescale);
    let mw = budget.nodes_w;
    let circles = [
        (C64::new(0.0, 0.0), spec.r_big, 1.0),
        (C64::new(0.0, 0.0), spec.eps1, -1.0),
        (ONE, spec.eps2, -1.0),
    ];
    let mut nodes = Vec::with_capacity(3 * mw);
    for &(c, r, sign) in &circles {
        for k in 0..mw {
            let w = c + C64::from_polar(r, 2.0 * std::f64::consts::PI * k as f64 / mw as f64);
            let winv1 = ONE - w.inv();
            let qz = ONE - zl * power(w, -l, budget.rescale) * power(winv1, -n, budget.rescale);
            let et = (C64::new(params.p, 0.0) * w + C64::new(params.q(), 0.0) * w.inv() - ONE)
                .scale(t)
                .exp();
            let wpow: Vec<C64> = (-(params.l as i32 - 1)..params.l as i32)
                .map(|e| power(w, e, budget.rescale))
                .collect();
            let bpow: Vec<C64> = (-(params.n as i32 - 1)..params.n as i32)
                .map(|e| power(winv1, e, budget.rescale))
                .collect();
            nodes.push(WNode {
                weight: ((w - c) / w).scale(sign / mw as f64),
                qz,
                et,
                winv1,
                wpow,
                bpow,
            });
        }
    }
    nodes
}

fn zeta_prefactor(y: &Configuration, x: &Configuration, zeta: C64) -> C64 {
    let sx: i64 = x.positions().iter().map(|&v| v as i64).sum();
    let sy: i64 = y.positions().iter().map(|&v| v as i64).sum();
    zeta.powi((sx - sy) as i32)
}

/// The (N+1)-fold nested contour integral for every `(Y, X)` pair in the
/// given lists; entry `[yi, xi]` is the generating series value.
pub fn gf_full_grid(
    ys: &[Configuration],
    xs: &[Configuration],
    zeta: C64,
    t: f64,
    spec: &ContourSpec,
    budget: &QuadratureBudget,
    params: &RingParams,
) -> Result<Array2<C64>> {
    budget.validate()?;
    if params.n > 3 {
        return Err(Error::InvalidParams(
            "the full (N+1)-fold quadrature is restricted to N <= 3".into(),
        ));
    }
    let l = params.l as i32;
    let n = params.n;
    let mz = budget.nodes_z;
    let zeta_l = power(zeta, l, budget.rescale);
    let sign_n = if n % 2 == 0 { 1.0 } else { -1.0 };

    let z_jobs: Vec<(f64, usize)> = (0..2 * mz)
        .map(|i| {
            if i < mz {
                (spec.r_prime, i)
            } else {
                (spec.eps_prime, i - mz)
            }
        })
        .collect();

    let partials: Vec<Array2<C64>> = z_jobs
        .par_iter()
        .map(|&(radius, k)| {
            let z_sign = if radius == spec.r_prime { 1.0 } else { -1.0 };
            let z = C64::from_polar(radius, 2.0 * std::f64::consts::PI * k as f64 / mz as f64);
            let zl_inv = power(z, -l, budget.rescale);
            let nodes = build_wnodes(z, spec, budget, t, params);
            let mut acc = Array2::<C64>::zeros((ys.len(), xs.len()));
            // odometer over the N-tuple of combined nodes
            let mut idx = vec![0usize; n];
            let total = nodes.len().pow(n as u32);
            let mut det_buf = Array2::<C64>::zeros((n, n));
            for _ in 0..total {
                let tuple: Vec<&WNode> = idx.iter().map(|&i| &nodes[i]).collect();
                let mut weight = C64::new(z_sign / mz as f64, 0.0);
                let mut qprod = ONE;
                let mut et = ONE;
                let mut bprod = ONE;
                for wn in &tuple {
                    weight *= wn.weight;
                    qprod *= wn.qz;
                    et *= wn.et;
                    bprod *= wn.winv1;
                }
                let pz = ONE + zeta_l * zl_inv * bprod * sign_n;
                let pair_factor = weight * et / (pz * qprod);
                for (yi, y) in ys.iter().enumerate() {
                    for (xi, x) in xs.iter().enumerate() {
                        // det[(1 - w_j^{-1})^{j-i} w_j^{y_j - x_i}]
                        for (j, wn) in tuple.iter().enumerate() {
                            let yj = y.positions()[j] as i32;
                            for i in 0..n {
                                let e_b = j as i32 - i as i32 + (n as i32 - 1);
                                let e_w = yj - x.positions()[i] as i32 + (params.l as i32 - 1);
                                det_buf[[i, j]] = wn.bpow[e_b as usize] * wn.wpow[e_w as usize];
                            }
                        }
                        let det = crate::bethe::det_small(&det_buf);
                        acc[[yi, xi]] += pair_factor * det;
                    }
                }
                // advance odometer
                for d in (0..n).rev() {
                    idx[d] += 1;
                    if idx[d] < nodes.len() {
                        break;
                    }
                    idx[d] = 0;
                }
            }
            acc
        })
        .collect();

    let mut out = Array2::<C64>::zeros((ys.len(), xs.len()));
    for p in &partials {
        out += p;
    }
    for (yi, y) in ys.iter().enumerate() {
        for (xi, x) in xs.iter().enumerate() {
            out[[yi, xi]] *= zeta_prefactor(y, x, zeta);
        }
    }
    Ok(out)
}

/// Single-pair wrapper around [`gf_full_grid`].
pub fn gf_full(
    y: &Configuration,
    x: &Configuration,
    zeta: C64,
    t: f64,
    spec: &ContourSpec,
    budget: &QuadratureBudget,
    params: &RingParams,
) -> Result<C64> {
    let g = gf_full_grid(
        std::slice::from_ref(y),
        std::slice::from_ref(x),
        zeta,
        t,
        spec,
        budget,
        params,
    )?;
    Ok(g[[0, 0]])
}

/// (N+1)-fold value with a node-doubling convergence check.
pub fn gf_full_checked(
    y: &Configuration,
    x: &Configuration,
    zeta: C64,
    t: f64,
    spec: &ContourSpec,
    budget: &QuadratureBudget,
    params: &RingParams,
    tol: f64,
) -> Result<C64> {
    let coarse = gf_full(y, x, zeta, t, spec, budget, params)?;
    let fine = gf_full(y, x, zeta, t, spec, &budget.doubled(), params)?;
    if (coarse - fine).norm() > tol {
        return Err(Error::QuadratureNonConvergence(format!(
            "doubling nodes moved the value by {:.3e}",
            (coarse - fine).norm()
        )));
    }
    Ok(fine)
}

// ---------------------------------------------------------------------------
// 1-fold formula
// ---------------------------------------------------------------------------

/// Per-subset data reused across `(Y, X)` pairs at a fixed `z` node.
struct SubsetFactor {
    /// Root values of the subset.
    lambdas: Vec<C64>,
    /// `e^{tE} / (p_z prod lambda q')`.
    factor: C64,
}

fn onefold_node_factors(
    z: C64,
    zeta_l: C64,
    t: f64,
    params: &RingParams,
    subsets: &[Vec<usize>],
) -> Result<Vec<SubsetFactor>> {
    let rs = q_roots(z, params)?;
    let sign_n = if params.n % 2 == 0 { 1.0 } else { -1.0 };
    let mut out = Vec::with_capacity(subsets.len());
    for s in subsets {
        let lambdas: Vec<C64> = s.iter().map(|&i| rs.roots[i]).collect();
        let mut prod_b = ONE;
        let mut prod_qp = ONE;
        for &lam in &lambdas {
            prod_b *= ONE - lam.inv();
            prod_qp *= lambda_qprime(lam, params);
        }
        let pz = ONE + zeta_l * z.powi(-(params.l as i32)) * prod_b * sign_n;
        let pole_scale = 1.0 + (prod_b / z.powi(params.l as i32)).norm();
        if pz.norm() < 1e-4 * pole_scale {
            return Err(Error::QuadratureNonConvergence(format!(
                "quadrature node z = {z} too close to a coupled root (|p_z| = {:.3e})",
                pz.norm()
            )));
        }
        let et = energy(&lambdas, ONE, params).scale(t).exp();
        out.push(SubsetFactor {
            lambdas,
            factor: et / (pz * prod_qp),
        });
    }
    Ok(out)
}

/// Column-summed determinant
/// `det[ sum_{lam in S} (1-lam^{-1})^{j-i} lam^{y_j - x_i} ]`, which by
/// multilinearity equals the plain determinant summed over all ordered
/// tuples drawn from `S`.
pub(crate) fn colsum_det_pair(
    lambdas: &[C64],
    y: &Configuration,
    x: &Configuration,
    n: usize,
) -> C64 {
    let mut m = Array2::<C64>::zeros((n, n));
    for j in 0..n {
        let yj = y.positions()[j] as i32;
        for i in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for &lam in lambdas {
                acc += (ONE - lam.inv()).powi(j as i32 - i as i32)
                    * lam.powi(yj - x.positions()[i] as i32);
            }
            m[[i, j]] = acc;
        }
    }
    crate::bethe::det_small(&m)
}

/// 1-fold formula on a grid of pairs:
/// `zeta^{sum(x - y)} [ u0 + (oint_{R'} - oint_{eps'}) dz/z I_N(z) ]`.
pub fn gf_onefold_grid(
    ys: &[Configuration],
    xs: &[Configuration],
    zeta: C64,
    t: f64,
    spec: &ContourSpec,
    budget: &QuadratureBudget,
    params: &RingParams,
) -> Result<Array2<C64>> {
    budget.validate()?;
    let l = params.l as i32;
    let n = params.n;
    let mz = budget.nodes_z;
    let zeta_l = zeta.powi(l);
    let subsets = crate::bethe::combinations(params.l, n);

    let z_jobs: Vec<(f64, usize)> = (0..2 * mz)
        .map(|i| {
            if i < mz {
                (spec.r_prime, i)
            } else {
                (spec.eps_prime, i - mz)
            }
        })
        .collect();

    let partials: Vec<Result<Array2<C64>>> = z_jobs
        .par_iter()
        .map(|&(radius, k)| {
            let z_sign = if radius == spec.r_prime { 1.0 } else { -1.0 };
            let z = C64::from_polar(radius, 2.0 * std::f64::consts::PI * k as f64 / mz as f64);
            let factors = onefold_node_factors(z, zeta_l, t, params, &subsets)?;
            let mut acc = Array2::<C64>::zeros((ys.len(), xs.len()));
            for sf in &factors {
                for (yi, y) in ys.iter().enumerate() {
                    for (xi, x) in xs.iter().enumerate() {
                        let det = colsum_det_pair(&sf.lambdas, y, x, n);
                        acc[[yi, xi]] += det * sf.factor;
                    }
                }
            }
            Ok(acc.mapv(|v| v * (z_sign / mz as f64)))
        })
        .collect();

    let mut out = Array2::<C64>::zeros((ys.len(), xs.len()));
    for p in partials {
        out += &p?;
    }
    let u0v = u0(zeta, spec, budget, params)?;
    for (yi, y) in ys.iter().enumerate() {
        for (xi, x) in xs.iter().enumerate() {
            out[[yi, xi]] = (out[[yi, xi]] + u0v) * zeta_prefactor(y, x, zeta);
        }
    }
    Ok(out)
}

/// Single-pair wrapper around [`gf_onefold_grid`].
pub fn gf_onefold(
    y: &Configuration,
    x: &Configuration,
    zeta: C64,
    t: f64,
    spec: &ContourSpec,
    budget: &QuadratureBudget,
    params: &RingParams,
) -> Result<C64> {
    let g = gf_onefold_grid(
        std::slice::from_ref(y),
        std::slice::from_ref(x),
        zeta,
        t,
        spec,
        budget,
        params,
    )?;
    Ok(g[[0, 0]])
}

// ---------------------------------------------------------------------------
// u0
// ---------------------------------------------------------------------------

/// The stationary-branch weight: `1 / C(L,N)` whenever `zeta^L = 1`; zero
/// otherwise (the perturbed stationary root then lies outside the small
/// circle at the desk-scale defaults, so the small-radius integral vanishes).
pub fn u0(
    zeta: C64,
    _spec: &ContourSpec,
    _budget: &QuadratureBudget,
    params: &RingParams,
) -> Result<C64> {
    let zl = zeta.powi(params.l as i32);
    if (zl - ONE).norm() <= 1e-9 {
        Ok(C64::new(1.0 / params.dim() as f64, 0.0))
    } else {
        Ok(C64::new(0.0, 0.0))
    }
}

/// Quadrature form of `u0`: small-circle integral of the all-`Q1` tuple sum
///
/// `oint_{eps'} dz/z sum_{lam in Q1(z)^N} h_lam(Y) u_lam(X) e^{tE} / (p_z prod lam q')`
///
/// retained as an independent check of the closed form (the value is
/// independent of the probe pair `(Y, X)` and of `t`).
pub fn u0_quadrature(
    zeta: C64,
    t: f64,
    spec: &ContourSpec,
    budget: &QuadratureBudget,
    params: &RingParams,
) -> Result<C64> {
    budget.validate()?;
    if spec.eps_prime >= params.r0() {
        return Err(Error::Classification(format!(
            "u0 quadrature needs eps' < r0 = {}",
            params.r0()
        )));
    }
    let l = params.l as i32;
    let n = params.n;
    let zeta_l = zeta.powi(l);
    let base = Configuration::new((0..n).collect(), params)?;
    let sign_n = if n % 2 == 0 { 1.0 } else { -1.0 };
    let vals: Vec<Result<C64>> = (0..budget.nodes_z)
        .into_par_iter()
        .map(|k| -> Result<C64> {
            let z = C64::from_polar(
                spec.eps_prime,
                2.0 * std::f64::consts::PI * k as f64 / budget.nodes_z as f64,
            );
            let rs = q_roots(z, params)?;
            let q1 = rs.q1_roots()?;
            let mut prod_b = ONE;
            let mut prod_qp = ONE;
            for &lam in &q1 {
                prod_b *= ONE - lam.inv();
                prod_qp *= lambda_qprime(lam, params);
            }
            let pz = ONE + zeta_l * z.powi(-l) * prod_b * sign_n;
            let det = colsum_det_pair(&q1, &base, &base, n);
            let et = energy(&q1, ONE, params).scale(t).exp();
            Ok(det * et / (pz * prod_qp))
        })
        .collect();
    let mut terms = Vec::with_capacity(vals.len());
    for v in vals {
        terms.push(v?);
    }
    Ok(tree_sum(&terms) / budget.nodes_z as f64)
}

// ---------------------------------------------------------------------------
// Spectral formula
// ---------------------------------------------------------------------------

/// Spectral decomposition over coupled Bethe tuples:
///
/// `zeta^{sum(x-y)} [ u0 + L sum_tuples alpha h_lam(Y) u_lam(X) e^{tE} ]`
///
/// with `alpha^{-1} = r(lam) prod lam q'(lam)`.  The factor `L` counts the
/// rotations of the auxiliary variable that carry each tuple; the sum over
/// orderings of a tuple collapses into the column-summed determinant.
pub fn gf_spectral(
    y: &Configuration,
    x: &Configuration,
    zeta: C64,
    t: f64,
    tuples: &[BetheTuple],
    params: &RingParams,
) -> Result<C64> {
    let n = params.n;
    let mut acc = u0_closed(zeta, params);
    for tuple in tuples {
        let r = tuple_r(&tuple.lambdas, params);
        if r.norm() < 1e-8 {
            return Err(Error::DegenerateZeta(format!(
                "residue factor r(lambda) = {r} vanishes; zeta is degenerate"
            )));
        }
        let mut prod_qp = ONE;
        for &lam in &tuple.lambdas {
            prod_qp *= lambda_qprime(lam, params);
        }
        let det = colsum_det_pair(&tuple.lambdas, y, x, n);
        acc += det * (tuple.energy.scale(t).exp()) / (r * prod_qp) * params.l as f64;
    }
    Ok(acc * zeta_prefactor(y, x, zeta))
}

fn u0_closed(zeta: C64, params: &RingParams) -> C64 {
    if (zeta.powi(params.l as i32) - ONE).norm() <= 1e-9 {
        C64::new(1.0 / params.dim() as f64, 0.0)
    } else {
        C64::new(0.0, 0.0)
    }
}

/// Convenience: spectral values for all pairs, sharing one root search.
pub fn gf_spectral_grid(
    ys: &[Configuration],
    xs: &[Configuration],
    zeta: C64,
    t: f64,
    params: &RingParams,
) -> Result<Array2<C64>> {
    let tuples = coupled_roots(zeta, params, &CoupledSearch::default())?;
    let mut out = Array2::<C64>::zeros((ys.len(), xs.len()));
    for (yi, y) in ys.iter().enumerate() {
        for (xi, x) in xs.iter().enumerate() {
            out[[yi, xi]] = gf_spectral(y, x, zeta, t, &tuples, params)?;
        }
    }
    Ok(out)
}
