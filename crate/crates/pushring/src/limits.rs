//! Relaxation-scale limit laws `F1(x; tau)` and `F2(x; tau, gamma)`.
//!
//! Both are contour integrals of discrete Fredholm determinants over the
//! root set `S_-(z) = { xi : e^{-xi^2/2} = z, Re(xi) < 0 }`:
//!
//! ```text
//! F1(x; tau)        = oint e^{x A1 + tau A2 + A3 + B} det(I - K^flat) dz/(2 pi i z)
//! F2(x; tau, gamma) = oint e^{x A1 + tau A2 + 2B}    det(I - K^step) dz/(2 pi i z)
//! ```
//!
//! with polylogarithm prefactors and kernels built from the exponent
//! `Psi(xi) = -tau xi^3/3 + x xi - c int_{-infty}^xi Li_{1/2}(e^{-w^2/2}) dw`
//! (`c = 1/sqrt(2 pi)` for flat initial data; doubled for step).  The module
//! also carries the scaling maps that connect a finite ring to these limits.

use crate::numeric::{integrate_segment, tree_sum};
use crate::ring::RingParams;
use crate::{Error, Result, C64};
use ndarray::Array2;
use rayon::prelude::*;

const ONE: C64 = C64::new(1.0, 0.0);
const TAU: f64 = 2.0 * std::f64::consts::PI;

// ---------------------------------------------------------------------------
// Polylogarithms
// ---------------------------------------------------------------------------

/// Half-integer polylogarithm order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HalfOrder {
    Half,
    ThreeHalves,
    FiveHalves,
}

impl HalfOrder {
    pub fn s(&self) -> f64 {
        match self {
            HalfOrder::Half => 0.5,
            HalfOrder::ThreeHalves => 1.5,
            HalfOrder::FiveHalves => 2.5,
        }
    }

    /// `Gamma(s)` for the integral representation.
    fn gamma(&self) -> f64 {
        let sqrt_pi = std::f64::consts::PI.sqrt();
        match self {
            HalfOrder::Half => sqrt_pi,
            HalfOrder::ThreeHalves => 0.5 * sqrt_pi,
            HalfOrder::FiveHalves => 0.75 * sqrt_pi,
        }
    }
}

/// `Li_s(z) = sum_{k>=1} z^k / k^s` for `z` off the cut `[1, oo)`.
///
/// Direct summation inside `|z| <= 0.6`; elsewhere the integral
/// representation `Li_s(z) = (2/Gamma(s)) int_0^oo u^{2s-1} z e^{-u^2} /
/// (1 - z e^{-u^2}) du`, which converges for every `z` off the cut.
pub fn polylog(order: HalfOrder, z: C64, tol: f64) -> Result<C64> {
    if z.im == 0.0 && z.re >= 1.0 {
        return Err(Error::BranchCut(format!(
            "Li_s branch cut at z = {z} on [1, oo)"
        )));
    }
    if z.norm() == 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    if z.norm() <= 0.6 {
        return Ok(polylog_series(order.s(), z, tol));
    }
    // integral route, substitution t = u^2
    let s = order.s();
    let integrand = |u: C64| -> C64 {
        let e = (-u * u).exp();
        u.powf(2.0 * s - 1.0) * z * e / (ONE - z * e)
    };
    // generous real cutoff: e^{-u^2} < 1e-21 beyond u ~ 7
    let cut = C64::new(7.0, 0.0);
    let val = integrate_segment(&integrand, C64::new(1e-12, 0.0), cut, tol * 0.1);
    Ok(val * (2.0 / order.gamma()))
}

fn polylog_series(s: f64, z: C64, tol: f64) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    let mut zk = ONE;
    for k in 1..100_000u64 {
        zk *= z;
        let term = zk / (k as f64).powf(s);
        acc += term;
        if term.norm() < tol * 1e-2 && k > 8 {
            break;
        }
    }
    acc
}

/// The four auxiliary functions of the limit laws:
/// `A1 = -Li_{3/2}(z)/sqrt(2 pi)`, `A2 = -Li_{5/2}(z)/sqrt(2 pi)`,
/// `A3 = -log(1-z)/4`, `B = (1/4 pi) int_0^z Li_{1/2}(y)^2 dy/y`.
pub fn aux_functions(z: C64, tol: f64) -> Result<(C64, C64, C64, C64)> {
    if z.im == 0.0 && z.re >= 1.0 {
        return Err(Error::BranchCut("aux functions on the cut [1, oo)".into()));
    }
    let s2pi = TAU.sqrt();
    let a1 = -polylog(HalfOrder::ThreeHalves, z, tol)? / s2pi;
    let a2 = -polylog(HalfOrder::FiveHalves, z, tol)? / s2pi;
    let a3 = -(ONE - z).ln() * 0.25;
    // straight segment from 0 to z; y = z v, dy/y = dv/v; the integrand
    // Li_{1/2}(zv)^2 / v vanishes linearly at v = 0
    let integrand = |v: C64| -> C64 {
        if v.norm() < 1e-14 {
            return C64::new(0.0, 0.0);
        }
        let li = polylog_series(0.5, z * v, 1e-13);
        li * li / v
    };
    let b = integrate_segment(&integrand, C64::new(0.0, 0.0), ONE, tol * 0.1)
        / C64::new(4.0 * std::f64::consts::PI, 0.0);
    Ok((a1, a2, a3, b))
}

// ---------------------------------------------------------------------------
// Discrete root set S_-(z)
// ---------------------------------------------------------------------------

/// Truncation of `S_-(z)`: `xi_k = -sqrt(-2 Log z + 4 pi i k)`, `|k| <= K`.
#[derive(Debug, Clone)]
pub struct SMinusSet {
    pub z: C64,
    /// `(branch index, root)` pairs, ordered by branch index.
    pub elements: Vec<(i64, C64)>,
}

pub fn s_minus(z: C64, k_max: usize) -> Result<SMinusSet> {
    if z.norm() == 0.0 || z.norm() >= 1.0 || (z.im == 0.0 && z.re >= 1.0) {
        return Err(Error::InvalidParams(format!(
            "S_-(z) needs 0 < |z| < 1 off the cut, got {z}"
        )));
    }
    let log_z = z.ln();
    let mut elements = Vec::with_capacity(2 * k_max + 1);
    for k in -(k_max as i64)..=(k_max as i64) {
        let arg = -log_z * 2.0 + C64::new(0.0, 4.0 * std::f64::consts::PI * k as f64);
        let mut xi = -arg.sqrt();
        // Newton polish on e^{-xi^2/2} - z
        for _ in 0..4 {
            let f = (-xi * xi * 0.5).exp() - z;
            let fp = -xi * (-xi * xi * 0.5).exp();
            xi -= f / fp;
        }
        if xi.re >= 0.0 {
            return Err(Error::Tolerance(format!(
                "branch {k} landed in the right half-plane: {xi}"
            )));
        }
        elements.push((k, xi));
    }
    Ok(SMinusSet { z, elements })
}

// ---------------------------------------------------------------------------
// Exponent functions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExponentKind {
    /// Coefficient `1/sqrt(2 pi)` on the path integral.
    Flat,
    /// Doubled coefficient `sqrt(2/pi)`.
    Step,
}

/// The path integral `int_{-infty}^{xi} Li_{1/2}(e^{-w^2/2}) dw` along
/// `(-infty, Re xi]` followed by the vertical segment to `xi`.  Independent
/// of `x` and `tau`, so kernel builders cache it per root.
pub fn exponent_integral(xi: C64) -> Result<C64> {
    let arg = xi.arg().abs();
    if !(arg > 3.0 * std::f64::consts::FRAC_PI_4) {
        return Err(Error::InvalidParams(format!(
            "xi = {xi} outside the sector arg in (3pi/4, 5pi/4)"
        )));
    }
    let f = |w: C64| polylog_series(0.5, (-w * w * 0.5).exp(), 1e-13);
    // horizontal tail: the integrand decays like e^{-w^2/2}
    let a = C64::new(-(9.5f64.max(xi.re.abs() + 2.0)), 0.0);
    let corner = C64::new(xi.re, 0.0);
    let horizontal = integrate_segment(&f, a, corner, 1e-12);
    let vertical = integrate_segment(&f, corner, xi, 1e-12);
    Ok(horizontal + vertical)
}

/// `Psi(xi; x, tau) = -tau xi^3/3 + x xi - c int_{-infty}^xi Li_{1/2}(e^{-w^2/2}) dw`.
///
/// Branches whose cubic-plus-linear part already sits far below the
/// numerical floor skip the path integral: the kernel sees `e^{Psi}` and
/// anything under `e^{-60}` vanishes next to order-one entries.
pub fn psi_exponent(xi: C64, x: f64, tau: f64, which: ExponentKind) -> Result<C64> {
    let c = match which {
        ExponentKind::Flat => 1.0 / TAU.sqrt(),
        ExponentKind::Step => (2.0 / std::f64::consts::PI).sqrt(),
    };
    let poly = -xi * xi * xi * (tau / 3.0) + xi * x;
    // |integral| <= Li_{1/2}(sup |e^{-w^2/2}|) * path length <= ~2 |xi| + O(1)
    let integral_bound = c * (2.0 * xi.norm() + 4.0);
    if poly.re + integral_bound < -60.0 {
        let arg = xi.arg().abs();
        if !(arg > 3.0 * std::f64::consts::FRAC_PI_4) {
            return Err(Error::InvalidParams(format!(
                "xi = {xi} outside the sector arg in (3pi/4, 5pi/4)"
            )));
        }
        return Ok(poly);
    }
    Ok(poly - exponent_integral(xi)? * c)
}

// ---------------------------------------------------------------------------
// F1 and F2
// ---------------------------------------------------------------------------

/// Evaluation controls for the limit laws.
#[derive(Debug, Clone, Copy)]
pub struct LimitParams {
    /// Branch truncation: `S_-` keeps `2K + 1` roots.
    pub k_trunc: usize,
    /// Outer `z`-circle nodes.
    pub mz: usize,
    /// Outer `z`-circle radius in `(0, 1)`.
    pub rz: f64,
}

impl Default for LimitParams {
    fn default() -> Self {
        LimitParams {
            k_trunc: 24,
            mz: 64,
            rz: 0.5,
        }
    }
}

impl LimitParams {
    fn validate(&self) -> Result<()> {
        if self.k_trunc < 8 {
            return Err(Error::InvalidParams("need K >= 8 branches".into()));
        }
        if !(self.rz > 0.0 && self.rz < 1.0) {
            return Err(Error::InvalidParams("need rz in (0,1)".into()));
        }
        Ok(())
    }
}

fn z_node(rz: f64, mz: usize, k: usize) -> C64 {
    // half-node offset keeps nodes off the positive real axis near the cut
    C64::from_polar(rz, TAU * (k as f64 + 0.5) / mz as f64)
}

/// The integrand is radius-independent, but its node magnitudes grow like
/// `e^{|x| |Re xi|}` for strongly negative `x`; pushing the circle outwards
/// shrinks the central roots and keeps the cancellation within f64 reach.
fn effective_radius(rz: f64, x: f64) -> f64 {
    if x < -2.5 {
        rz.max((0.5 - 0.12 * (x + 2.5)).min(0.95))
    } else {
        rz
    }
}

/// `F1(x; tau)`: flat-data relaxation-scale CDF.
pub fn f1(x: f64, tau: f64, lp: &LimitParams) -> Result<f64> {
    if tau <= 0.0 {
        return Err(Error::InvalidParams("F1 needs tau > 0".into()));
    }
    lp.validate()?;
    let rz = effective_radius(lp.rz, x);
    // the prefactor e^{x A1(z)} swings exponentially around the circle for
    // strongly negative x; resolve it with more nodes there
    let mz = if x < -5.0 { lp.mz.max(96) } else { lp.mz };
    let vals: Vec<Result<C64>> = (0..mz)
        .into_par_iter()
        .map(|k| -> Result<C64> {
            let z = z_node(rz, mz, k);
            let (a1, a2, a3, b) = aux_functions(z, 1e-11)?;
            let sm = s_minus(z, lp.k_trunc)?;
            let psi: Vec<C64> = sm
                .elements
                .iter()
                .map(|&(_, xi)| psi_exponent(xi, x, tau, ExponentKind::Flat))
                .collect::<Result<_>>()?;
            let m = sm.elements.len();
            let mut kernel = Array2::<C64>::zeros((m, m));
            for i in 0..m {
                let xi1 = sm.elements[i].1;
                for j in 0..m {
                    let xi2 = sm.elements[j].1;
                    kernel[[i, j]] = (psi[i] + psi[j]).exp() / (xi1 * (xi1 + xi2));
                }
            }
            let mut ik = Array2::<C64>::eye(m);
            ik -= &kernel;
            let det = crate::bethe::det_small(&ik);
            Ok((a1 * x + a2 * tau + a3 + b).exp() * det)
        })
        .collect();
    let mut terms = Vec::with_capacity(mz);
    for v in vals {
        terms.push(v?);
    }
    let val = tree_sum(&terms) / mz as f64;
    if val.im.abs() > 1e-5 {
        return Err(Error::Tolerance(format!(
            "imaginary residue {:.3e} in F1",
            val.im
        )));
    }
    Ok(val.re)
}

/// `F2(x; tau, gamma)`: step-data relaxation-scale CDF (1-periodic and even
/// in `gamma`).
pub fn f2(x: f64, tau: f64, gamma: f64, lp: &LimitParams) -> Result<f64> {
    if tau <= 0.0 {
        return Err(Error::InvalidParams("F2 needs tau > 0".into()));
    }
    lp.validate()?;
    let rz = effective_radius(lp.rz, x);
    let mz = if x < -5.0 { lp.mz.max(96) } else { lp.mz };
    let vals: Vec<Result<C64>> = (0..mz)
        .into_par_iter()
        .map(|k| -> Result<C64> {
            let z = z_node(rz, mz, k);
            let (a1, a2, _a3, b) = aux_functions(z, 1e-11)?;
            let sm = s_minus(z, lp.k_trunc)?;
            let psi: Vec<C64> = sm
                .elements
                .iter()
                .map(|&(_, xi)| psi_exponent(xi, x, tau, ExponentKind::Step))
                .collect::<Result<_>>()?;
            let m = sm.elements.len();
            // K(xi1, xi2) = sum_eta e^{Psi(xi1) + Psi(eta) + (gamma/2)(xi1^2 - eta^2)}
            //               / (xi1 eta (xi1 + eta) (xi2 + eta))
            let mut left = Array2::<C64>::zeros((m, m)); // (xi1, eta)
            let mut right = Array2::<C64>::zeros((m, m)); // (eta, xi2)
            for i in 0..m {
                let xi1 = sm.elements[i].1;
                for e in 0..m {
                    let eta = sm.elements[e].1;
                    left[[i, e]] = (psi[i] + psi[e] + (xi1 * xi1 - eta * eta) * (gamma / 2.0))
                        .exp()
                        / (xi1 * eta * (xi1 + eta));
                }
            }
            for e in 0..m {
                let eta = sm.elements[e].1;
                for j in 0..m {
                    let xi2 = sm.elements[j].1;
                    right[[e, j]] = ONE / (xi2 + eta);
                }
            }
            let kernel = left.dot(&right);
            let mut ik = Array2::<C64>::eye(m);
            ik -= &kernel;
            let det = crate::bethe::det_small(&ik);
            Ok((a1 * x + a2 * tau + b * 2.0).exp() * det)
        })
        .collect();
    let mut terms = Vec::with_capacity(mz);
    for v in vals {
        terms.push(v?);
    }
    let val = tree_sum(&terms) / mz as f64;
    if val.im.abs() > 1e-5 {
        return Err(Error::Tolerance(format!(
            "imaginary residue {:.3e} in F2",
            val.im
        )));
    }
    Ok(val.re)
}

// ---------------------------------------------------------------------------
// Scaling maps
// ---------------------------------------------------------------------------

/// Model constants of the hydrodynamic picture.
#[derive(Debug, Clone, Copy)]
pub struct ScalingConstants {
    /// Current speed `v = rho [ p(1-rho) - q/(1-rho) ]`.
    pub v: f64,
    /// Time dilation `r = p + q/(1-rho)^3`.
    pub r: f64,
    /// Shock speed `v_shock = p(1-2 rho) - q/(1-rho)^2`.
    pub vshock: f64,
}

impl ScalingConstants {
    pub fn for_params(params: &RingParams) -> Self {
        let rho = params.rho();
        let p = params.p;
        let q = params.q();
        ScalingConstants {
            v: rho * (p * (1.0 - rho) - q / (1.0 - rho)),
            r: p + q / (1.0 - rho).powi(3),
            vshock: p * (1.0 - 2.0 * rho) - q / (1.0 - rho).powi(2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingKind {
    /// Flat data at relaxation time `t = tau L^{3/2} / sqrt(rho(1-rho))`.
    Flat,
    /// Step case 1, critical density window (`m = floor((1-rho-gamma) L)`).
    Step1a,
    /// Step case 1, shock-anchored time (any `m`).
    Step1b,
    /// Step case 2, critical density window (`k = floor((1-gamma) L)`).
    Step2a,
    /// Step case 2, shock-anchored time (any `k`).
    Step2b,
}

/// Finite-`L` coordinates of a limit-law comparison point.
#[derive(Debug, Clone, Copy)]
pub struct ScalingMap {
    pub t: f64,
    /// Integer current level whose tail probability approximates
    /// `F(tau^{1/3} x; r tau)`.
    pub q: i64,
    /// Centering `vt` (minus the step offsets where applicable).
    pub centering: f64,
    /// Fluctuation scale `rho^{2/3} (1-rho)^{2/3} t^{1/3}`.
    pub scale: f64,
}

/// The time, current level, centering and scale of the asymptotic
/// statements, for a finite ring and a target abscissa `x`.
pub fn scaling_maps(
    kind: ScalingKind,
    params: &RingParams,
    tau: f64,
    x: f64,
    gamma: f64,
    shift: Option<usize>,
) -> Result<ScalingMap> {
    let rho = params.rho();
    let lf = params.l as f64;
    let sc = ScalingConstants::for_params(params);
    let relax_t = tau / (rho * (1.0 - rho)).sqrt() * lf.powf(1.5);
    let (t, offset) = match kind {
        ScalingKind::Flat => (relax_t, 0.0),
        ScalingKind::Step1a => {
            if !(0.0..=1.0 - rho).contains(&gamma) {
                return Err(Error::InvalidParams(format!(
                    "step1a needs gamma in [0, 1-rho], got {gamma}"
                )));
            }
            let m = ((1.0 - rho - gamma) * lf).floor();
            if m < 0.0 || m > lf - params.n as f64 {
                return Err(Error::InvalidParams(format!("shift m = {m} out of range")));
            }
            (relax_t, rho * ((1.0 - rho) * lf - m))
        }
        ScalingKind::Step1b => {
            if sc.vshock == 0.0 {
                return Err(Error::InvalidParams(
                    "shock-anchored time needs vshock != 0".into(),
                ));
            }
            let m = shift.ok_or_else(|| Error::InvalidParams("step1b needs the shift m".into()))?;
            if m > params.l - params.n {
                return Err(Error::InvalidParams(format!("shift m = {m} out of range")));
            }
            let laps = (sc.vshock.abs() * tau / (rho * (1.0 - rho)).sqrt() * lf.sqrt()).floor();
            let t = lf / sc.vshock.abs() * laps - ((rho + gamma) * lf + m as f64) / sc.vshock;
            (t, rho * ((1.0 - rho) * lf - m as f64))
        }
        ScalingKind::Step2a => {
            if !((1.0 - rho)..=1.0).contains(&gamma) {
                return Err(Error::InvalidParams(format!(
                    "step2a needs gamma in [1-rho, 1], got {gamma}"
                )));
            }
            let k = ((1.0 - gamma) * lf).floor();
            if k < 0.0 || k > params.n as f64 {
                return Err(Error::InvalidParams(format!("split k = {k} out of range")));
            }
            (relax_t, (1.0 - rho) * k)
        }
        ScalingKind::Step2b => {
            if sc.vshock == 0.0 {
                return Err(Error::InvalidParams(
                    "shock-anchored time needs vshock != 0".into(),
                ));
            }
            let k = shift.ok_or_else(|| Error::InvalidParams("step2b needs the split k".into()))?;
            if k > params.n {
                return Err(Error::InvalidParams(format!("split k = {k} out of range")));
            }
            let laps = (sc.vshock.abs() * tau / (rho * (1.0 - rho)).sqrt() * lf.sqrt()).floor();
            let t = lf / sc.vshock.abs() * laps - (k as f64 + gamma * lf) / sc.vshock;
            (t, (1.0 - rho) * k as f64)
        }
    };
    if t < 0.0 {
        return Err(Error::InvalidParams(format!(
            "scaling map produced negative time t = {t}"
        )));
    }
    let scale = rho.powf(2.0 / 3.0) * (1.0 - rho).powf(2.0 / 3.0) * t.powf(1.0 / 3.0);
    let centering = sc.v * t - offset;
    let q = (centering - x * scale).round() as i64;
    Ok(ScalingMap {
        t,
        q,
        centering,
        scale,
    })
}
