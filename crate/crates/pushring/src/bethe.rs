//! Decoupled Bethe roots, coupled root search, Bethe eigenfunctions and the
//! Fuss–Catalan series toolkit.
//!
//! The decoupled Bethe equations read, in the rescaled variables,
//!
//! ```text
//! q_z(w_i) = 1 - z^L w_i^{-L} (1 - w_i^{-1})^{-N} = 0      (one per particle)
//! p_z(w; zeta) = 1 + (-1)^N zeta^L z^{-L} prod_i (1 - w_i^{-1}) = 0
//! ```
//!
//! The first family says each `w_i` is a root of the degree-`L` polynomial
//! `w^{L-N} (w - 1)^N - z^L`; only the single coupling equation ties the
//! tuple together through the auxiliary variable `z`.  Since everything
//! depends on `z` through `z^L` alone, the search for coupled tuples runs in
//! the variable `omega = z^L`: each solution found there corresponds to `L`
//! rotated values of `z`, all carrying the same tuple.

use crate::numeric::{binomial, poly_roots};
use crate::ring::{Configuration, RingParams};
use crate::{Error, Result, C64};
use num_rational::Ratio;

const ONE: C64 = C64::new(1.0, 0.0);

// ---------------------------------------------------------------------------
// Decoupled roots
// ---------------------------------------------------------------------------

/// The `L` roots of `q_z` at a fixed `z`, with the near-0 / near-1
/// classification and the cycle grouping available for `|z| < r0`.
#[derive(Debug, Clone)]
pub struct BetheRootSet {
    pub z: C64,
    pub roots: Vec<C64>,
    /// Indices of roots with `Re(w) < 1 - rho` (only for `|z| < r0`).
    pub q0: Option<Vec<usize>>,
    /// Indices of roots with `Re(w) > 1 - rho` (only for `|z| < r0`).
    pub q1: Option<Vec<usize>>,
    /// For `L = dN`: the `N` groups `D_k` of `d` roots each, `cycles[k]`
    /// solving `w^d (1 - w^{-1}) = z^d e^{2 pi i k/N}`.
    pub cycles: Option<Vec<Vec<usize>>>,
}

impl BetheRootSet {
    pub fn q0_roots(&self) -> Result<Vec<C64>> {
        let idx = self
            .q0
            .as_ref()
            .ok_or_else(|| Error::Classification("no Q0/Q1 split (|z| >= r0)".into()))?;
        Ok(idx.iter().map(|&i| self.roots[i]).collect())
    }

    pub fn q1_roots(&self) -> Result<Vec<C64>> {
        let idx = self
            .q1
            .as_ref()
            .ok_or_else(|| Error::Classification("no Q0/Q1 split (|z| >= r0)".into()))?;
        Ok(idx.iter().map(|&i| self.roots[i]).collect())
    }

    /// The unique partner `V(u)` in `Q1` sharing the cycle of `u in Q0`.
    pub fn v_partner(&self, u_index: usize) -> Result<usize> {
        let cycles = self
            .cycles
            .as_ref()
            .ok_or_else(|| Error::Classification("no cycle grouping (L != dN)".into()))?;
        let q1 = self.q1.as_ref().unwrap();
        for cyc in cycles {
            if cyc.contains(&u_index) {
                for &j in cyc {
                    if q1.contains(&j) {
                        return Ok(j);
                    }
                }
            }
        }
        Err(Error::Classification(format!(
            "no Q1 partner for root index {u_index}"
        )))
    }
}

/// `f(w) = w^{L-N} (w-1)^N - omega` evaluated in factored form, which stays
/// accurate near the root clusters at 0 and 1 where the monomial basis
/// cancels catastrophically.
fn f_factored(w: C64, omega: C64, l: usize, n: usize) -> C64 {
    w.powi((l - n) as i32) * (w - ONE).powi(n as i32) - omega
}

fn fprime_factored(w: C64, l: usize, n: usize) -> C64 {
    let lf = l as f64;
    let nf = n as f64;
    w.powi((l - n - 1) as i32) * (w - ONE).powi((n - 1) as i32) * (w * lf - (lf - nf))
}

/// All roots of `w^{L-N} (w-1)^N = omega`: companion-matrix estimates
/// polished by factored-form Newton, with colliding estimates resolved by a
/// local quadratic model.
fn structural_roots(omega: C64, l: usize, n: usize) -> Result<Vec<C64>> {
    let mut coeffs = vec![C64::new(0.0, 0.0); l + 1];
    for k in 0..=n {
        let sign = if (n - k) % 2 == 0 { 1.0 } else { -1.0 };
        coeffs[l - n + k] += C64::new(sign * binomial(n as u64, k as u64), 0.0);
    }
    coeffs[0] -= omega;
    let mut roots = poly_roots(&coeffs)?;
    let newton = |w0: C64| -> C64 {
        let mut w = w0;
        for _ in 0..30 {
            let fp = fprime_factored(w, l, n);
            if fp.norm() == 0.0 {
                break;
            }
            let step = f_factored(w, omega, l, n) / fp;
            w -= step;
            if step.norm() <= 1e-16 * w.norm().max(1e-300) {
                break;
            }
        }
        w
    };
    for w in roots.iter_mut() {
        *w = newton(*w);
    }
    // eigenvalue estimates inside a tight cluster can fall into the same
    // Newton basin; split such pairs with the local quadratic model
    for i in 0..l {
        for j in i + 1..l {
            let (wi, wj) = (roots[i], roots[j]);
            if (wi - wj).norm() < 1e-7 * wi.norm().max(1.0) {
                let c = (wi + wj) * 0.5;
                let f0 = f_factored(c, omega, l, n);
                let f1 = fprime_factored(c, l, n);
                let a = (l - n) as f64;
                let b = n as f64;
                let bracket = (c - ONE).powi(2) * (a * (a - 1.0))
                    + c * (c - ONE) * (2.0 * a * b)
                    + c * c * (b * (b - 1.0));
                let f2 = if n >= 2 {
                    c.powi((l - n - 2) as i32) * (c - ONE).powi((n - 2) as i32) * bracket
                } else {
                    c.powi((l - 3) as i32) * ((c - ONE) * (a * (a - 1.0)) + c * (2.0 * a))
                };
                // f0 + f1 d + f2/2 d^2 = 0
                let disc = (f1 * f1 - f0 * f2 * 2.0).sqrt();
                let d1 = (-f1 + disc) / f2;
                let d2 = (-f1 - disc) / f2;
                roots[i] = newton(c + d1);
                roots[j] = newton(c + d2);
            }
        }
    }
    Ok(roots)
}

/// Coefficients of `w^{L-N} (w-1)^N - z^L` in the monomial basis.
#[cfg(test)]
fn qz_poly_coeffs(z: C64, params: &RingParams) -> Vec<C64> {
    let l = params.l;
    let n = params.n;
    let mut coeffs = vec![C64::new(0.0, 0.0); l + 1];
    for k in 0..=n {
        let sign = if (n - k) % 2 == 0 { 1.0 } else { -1.0 };
        coeffs[l - n + k] += C64::new(sign * binomial(n as u64, k as u64), 0.0);
    }
    coeffs[0] -= z.powi(l as i32);
    coeffs
}

/// `q_z(w)` itself.
pub fn qz_value(w: C64, z: C64, params: &RingParams) -> C64 {
    ONE - z.powi(params.l as i32) * w.powi(-(params.l as i32)) * (ONE - w.inv()).powi(-(params.n as i32))
}

/// `lambda q_z'(lambda) = (L lambda - (L-N)) / (lambda - 1)` at a root of `q_z`.
pub fn lambda_qprime(lambda: C64, params: &RingParams) -> C64 {
    let l = params.l as f64;
    let n = params.n as f64;
    (lambda * l - (l - n)) / (lambda - ONE)
}

/// All `L` roots of `w^{L-N}(w-1)^N = z^L`, polished by two Newton steps,
/// classified into `Q0`/`Q1` (and grouped into cycles when `L = dN`) for
/// `|z| < r0`.  Classification at or beyond `|z| = r0` is refused.
pub fn q_roots(z: C64, params: &RingParams) -> Result<BetheRootSet> {
    let l = params.l;
    let n = params.n;
    if z.norm() == 0.0 {
        // degenerate limit: 0 with multiplicity L-N, 1 with multiplicity N
        let mut roots = vec![C64::new(0.0, 0.0); l - n];
        roots.extend(vec![ONE; n]);
        return Ok(BetheRootSet {
            z,
            roots,
            q0: Some((0..l - n).collect()),
            q1: Some((l - n..l).collect()),
            cycles: None,
        });
    }
    let mut roots = structural_roots(z.powi(l as i32), l, n)?;
    // residual check
    let scale = z.norm().powi(l as i32).max(1.0);
    for &w in &roots {
        let res = (w.powi((l - n) as i32) * (w - ONE).powi(n as i32) - z.powi(l as i32)).norm();
        if res > 1e-10 * scale {
            return Err(Error::Tolerance(format!(
                "root residual {res:.3e} after polishing at z = {z}"
            )));
        }
    }
    roots.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());

    let r0 = params.r0();
    let (q0, q1, cycles) = if z.norm() < r0 * (1.0 - 1e-12) {
        let split = 1.0 - params.rho();
        let q0: Vec<usize> = (0..l).filter(|&i| roots[i].re < split).collect();
        let q1: Vec<usize> = (0..l).filter(|&i| roots[i].re > split).collect();
        if q1.len() != n || q0.len() != l - n {
            return Err(Error::Classification(format!(
                "split gave |Q1| = {} (expected {n}) at z = {z}",
                q1.len()
            )));
        }
        let cycles = if l % n == 0 {
            Some(group_cycles(&roots, z, params)?)
        } else {
            None
        };
        (Some(q0), Some(q1), cycles)
    } else if (z.norm() - r0).abs() <= 1e-12 * r0 {
        return Err(Error::Classification(format!(
            "|z| = r0 = {r0}: double root at w = 1 - rho, classification boundary"
        )));
    } else {
        (None, None, None)
    };

    Ok(BetheRootSet {
        z,
        roots,
        q0,
        q1,
        cycles,
    })
}

/// Group the roots by `k = round(N arg(w^d (1-w^{-1}) / z^d) / 2 pi) mod N`.
fn group_cycles(roots: &[C64], z: C64, params: &RingParams) -> Result<Vec<Vec<usize>>> {
    let n = params.n;
    let d = params.l / n;
    let zd = z.powi(d as i32);
    let mut cycles = vec![Vec::new(); n];
    for (i, &w) in roots.iter().enumerate() {
        let val = w.powi(d as i32) * (ONE - w.inv()) / zd;
        if (val.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::Classification(format!(
                "cycle indicator off the unit circle: |val| = {}",
                val.norm()
            )));
        }
        let k = (val.arg() * n as f64 / (2.0 * std::f64::consts::PI)).round() as i64;
        let k = k.rem_euclid(n as i64) as usize;
        if (val - C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64)).norm()
            > 1e-6
        {
            return Err(Error::Classification(
                "cycle indicator not an N-th root of unity".into(),
            ));
        }
        cycles[k].push(i);
    }
    for cyc in &cycles {
        if cyc.len() != params.l / n {
            return Err(Error::Classification(format!(
                "cycle sizes {:?} != d",
                cycles.iter().map(Vec::len).collect::<Vec<_>>()
            )));
        }
    }
    Ok(cycles)
}

// ---------------------------------------------------------------------------
// Coupling equation and Bethe functions
// ---------------------------------------------------------------------------

/// `p_z(w; zeta) = 1 + (-1)^N zeta^L z^{-L} prod_i (1 - w_i^{-1})`.
pub fn p_coupling(lambdas: &[C64], z: C64, zeta: C64, params: &RingParams) -> Result<C64> {
    let n = lambdas.len();
    let mut prod = ONE;
    for &w in lambdas {
        if w.norm() == 0.0 {
            return Err(Error::InvalidParams("lambda = 0 is a pole of p_z".into()));
        }
        prod *= ONE - w.inv();
    }
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    Ok(ONE + zeta.powi(params.l as i32) * z.powi(-(params.l as i32)) * prod * sign)
}

/// Bethe function in determinantal form on integer positions:
/// `det[(1 - (zeta w_j)^{-1})^{j-i} w_j^{-x_i}]`.
///
/// Positions may lie outside `{0, .., L-1}`; the extension is what the
/// exclusion and periodicity rules constrain.
pub fn bethe_function_ext(ws: &[C64], xs: &[i64], zeta: C64) -> Result<C64> {
    let n = ws.len();
    assert_eq!(n, xs.len());
    let mut m = ndarray::Array2::<C64>::zeros((n, n));
    for (j, &w) in ws.iter().enumerate() {
        if w.norm() == 0.0 {
            return Err(Error::InvalidParams("w = 0 in Bethe function".into()));
        }
        let base = ONE - (zeta * w).inv();
        for i in 0..n {
            let e = j as i32 - i as i32;
            if base.norm() < 1e-300 && e < 0 {
                return Err(Error::InvalidParams(
                    "singular entry: zeta w = 1 with negative power".into(),
                ));
            }
            m[[i, j]] = base.powi(e) * w.powf(-xs[i] as f64);
        }
    }
    Ok(det_small(&m))
}

/// Bethe function on a ring configuration.
pub fn bethe_function(ws: &[C64], x: &Configuration, zeta: C64) -> Result<C64> {
    let xs: Vec<i64> = x.positions().iter().map(|&v| v as i64).collect();
    bethe_function_ext(ws, &xs, zeta)
}

/// `ln det M` (imaginary part mod `2 pi`) by column max-scaling followed by
/// partially pivoted elimination.  Keeps determinants with huge dynamic
/// range representable: the value is meant to be added to other log-scale
/// factors before a single exponentiation.
pub fn log_det_scaled(m: &ndarray::Array2<C64>) -> C64 {
    let n = m.nrows();
    let mut a = m.clone();
    let mut log_acc = C64::new(0.0, 0.0);
    for j in 0..n {
        let s = (0..n).map(|i| a[[i, j]].norm()).fold(0.0f64, f64::max);
        if s == 0.0 {
            return C64::new(f64::NEG_INFINITY, 0.0);
        }
        for i in 0..n {
            a[[i, j]] = a[[i, j]] / s;
        }
        log_acc += C64::new(s.ln(), 0.0);
    }
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[[r, col]].norm() > a[[piv, col]].norm() {
                piv = r;
            }
        }
        if a[[piv, col]].norm() == 0.0 {
            return C64::new(f64::NEG_INFINITY, 0.0);
        }
        if piv != col {
            for c in 0..n {
                let tmp = a[[col, c]];
                a[[col, c]] = a[[piv, c]];
                a[[piv, c]] = tmp;
            }
            log_acc += C64::new(0.0, std::f64::consts::PI);
        }
        log_acc += a[[col, col]].ln();
        for r in col + 1..n {
            let f = a[[r, col]] / a[[col, col]];
            for c in col..n {
                let v = a[[col, c]];
                a[[r, c]] -= f * v;
            }
        }
    }
    log_acc
}

/// Gaussian-elimination determinant for the small dense matrices used here.
pub fn det_small(m: &ndarray::Array2<C64>) -> C64 {
    let n = m.nrows();
    let mut a = m.clone();
    let mut det = ONE;
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[[r, col]].norm() > a[[piv, col]].norm() {
                piv = r;
            }
        }
        if a[[piv, col]].norm() == 0.0 {
            return C64::new(0.0, 0.0);
        }
        if piv != col {
            for c in 0..n {
                let tmp = a[[col, c]];
                a[[col, c]] = a[[piv, c]];
                a[[piv, c]] = tmp;
            }
            det = -det;
        }
        det *= a[[col, col]];
        for r in col + 1..n {
            let f = a[[r, col]] / a[[col, col]];
            for c in col..n {
                let v = a[[col, c]];
                a[[r, c]] -= f * v;
            }
        }
    }
    det
}

/// Eigenvalue `E(lambda; zeta) = sum_i (p zeta lambda_i + q (zeta lambda_i)^{-1} - 1)`.
///
/// Coupled tuples store the rescaled variables, whose eigenvalue is
/// `energy(roots, 1, params)`.
pub fn energy(ws: &[C64], zeta: C64, params: &RingParams) -> C64 {
    let p = params.p;
    let q = params.q();
    ws.iter()
        .map(|&w| zeta * w * p + (zeta * w).inv() * q - ONE)
        .sum()
}

/// `r(lambda) = L - sum_i L / (L lambda_i - (L - N))`, the residue factor of
/// the coupling equation at a coupled tuple.
pub fn tuple_r(lambdas: &[C64], params: &RingParams) -> C64 {
    let l = params.l as f64;
    let n = params.n as f64;
    let mut acc = C64::new(l, 0.0);
    for &w in lambdas {
        acc -= C64::new(l, 0.0) / (w * l - (l - n));
    }
    acc
}

// ---------------------------------------------------------------------------
// Coupled root search
// ---------------------------------------------------------------------------

/// One solution of the full deformed Bethe system: `N` pairwise distinct
/// roots of `q_z` that also satisfy the coupling equation.
#[derive(Debug, Clone)]
pub struct BetheTuple {
    /// Rescaled Bethe roots (the `dBE` variables).
    pub lambdas: Vec<C64>,
    /// Canonical auxiliary value (principal `L`-th root of `z^L`); the other
    /// `L - 1` rotations carry the same tuple.
    pub z: C64,
    pub zeta: C64,
    /// Eigenvalue of the deformed generator.
    pub energy: C64,
}

/// Search options for [`coupled_roots`].
#[derive(Debug, Clone, Copy)]
pub struct CoupledSearch {
    /// Samples per cell edge for winding numbers.
    pub edge_samples: usize,
    /// Initial angular subdivisions of the annulus.
    pub angular_cells: usize,
    /// Initial radial subdivisions.
    pub radial_cells: usize,
}

impl Default for CoupledSearch {
    fn default() -> Self {
        CoupledSearch {
            edge_samples: 24,
            angular_cells: 16,
            radial_cells: 6,
        }
    }
}

pub(crate) fn combinations(l: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        out.push(cur.clone());
        let mut i = n;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < l - (n - i) {
                cur[i] += 1;
                for j in i + 1..n {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Roots of `q` at `omega = z^L`, unsorted but polished.
fn roots_at_omega(omega: C64, params: &RingParams) -> Result<Vec<C64>> {
    structural_roots(omega, params.l, params.n)
}

/// Match `new` roots to the ordering of `old` by greedy nearest neighbour.
fn match_roots(old: &[C64], new: &[C64]) -> Vec<C64> {
    let l = old.len();
    let mut used = vec![false; l];
    let mut out = vec![C64::new(0.0, 0.0); l];
    for (i, &o) in old.iter().enumerate() {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (j, &nw) in new.iter().enumerate() {
            if !used[j] {
                let d = (nw - o).norm();
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
        }
        used[best] = true;
        out[i] = new[best];
    }
    out
}

/// `p` value of the subset `s` of `roots` at `omega`, using `zeta^L`.
fn subset_p(roots: &[C64], s: &[usize], omega: C64, zeta_l: C64, n: usize) -> C64 {
    let mut prod = ONE;
    for &i in s {
        prod *= ONE - roots[i].inv();
    }
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    ONE + zeta_l / omega * prod * sign
}

/// Phase increment of `P(omega) = prod_S p(S; omega)` between two nearby
/// points, with roots carried by continuity.  Returns `None` when any factor
/// turns by more than `pi/2` (caller refines the step).
fn phase_step(
    params: &RingParams,
    subsets: &[Vec<usize>],
    zeta_l: C64,
    roots_a: &[C64],
    omega_a: C64,
    omega_b: C64,
) -> Result<Option<(f64, Vec<C64>)>> {
    let raw = roots_at_omega(omega_b, params)?;
    let roots_b = match_roots(roots_a, &raw);
    let mut total = 0.0;
    for s in subsets {
        let pa = subset_p(roots_a, s, omega_a, zeta_l, params.n);
        let pb = subset_p(&roots_b, s, omega_b, zeta_l, params.n);
        if pa.norm() == 0.0 || pb.norm() == 0.0 {
            return Ok(None);
        }
        let d = (pb / pa).arg();
        if d.abs() > std::f64::consts::FRAC_PI_2 {
            return Ok(None);
        }
        total += d;
    }
    Ok(Some((total, roots_b)))
}

/// Winding number of `P` along the straight segment chain `pts` (closed when
/// the caller arranges `pts.last() == pts.first()` territory-wise).
fn winding_along(
    params: &RingParams,
    subsets: &[Vec<usize>],
    zeta_l: C64,
    pts: &[C64],
) -> Result<f64> {
    let mut total = 0.0;
    let mut roots = roots_at_omega(pts[0], params)?;
    let mut cursor = pts[0];
    for &next in &pts[1..] {
        let mut stack = vec![(cursor, next)];
        // adaptive bisection of each step until every factor turns slowly
        let mut guard = 0;
        while let Some((a, b)) = stack.pop() {
            guard += 1;
            if guard > 100_000 {
                return Err(Error::QuadratureNonConvergence(
                    "winding refinement exploded".into(),
                ));
            }
            match phase_step(params, subsets, zeta_l, &roots, a, b)? {
                Some((d, rb)) => {
                    total += d;
                    roots = rb;
                }
                None => {
                    let mid = (a + b) * 0.5;
                    if (b - a).norm() < 1e-13 * (a.norm() + 1.0) {
                        return Err(Error::DegenerateZeta(
                            "phase jump persists at zero step (zero on contour?)".into(),
                        ));
                    }
                    stack.push((mid, b));
                    stack.push((a, mid));
                }
            }
        }
        cursor = next;
    }
    Ok(total / (2.0 * std::f64::consts::PI))
}

/// Log-polar rectangle `[r_lo, r_hi] x [th_lo, th_hi]` in `omega`.
#[derive(Debug, Clone, Copy)]
struct Cell {
    r_lo: f64,
    r_hi: f64,
    th_lo: f64,
    th_hi: f64,
}

impl Cell {
    fn boundary(&self, samples: usize) -> Vec<C64> {
        let mut pts = Vec::with_capacity(4 * samples + 1);
        let arc = |r: f64, t0: f64, t1: f64, m: usize, pts: &mut Vec<C64>| {
            for i in 0..m {
                let t = t0 + (t1 - t0) * i as f64 / m as f64;
                pts.push(C64::from_polar(r, t));
            }
        };
        let ray = |t: f64, r0: f64, r1: f64, m: usize, pts: &mut Vec<C64>| {
            for i in 0..m {
                let r = r0 * (r1 / r0).powf(i as f64 / m as f64);
                pts.push(C64::from_polar(r, t));
            }
        };
        arc(self.r_lo, self.th_lo, self.th_hi, samples, &mut pts);
        ray(self.th_hi, self.r_lo, self.r_hi, samples, &mut pts);
        arc(self.r_hi, self.th_hi, self.th_lo, samples, &mut pts);
        ray(self.th_lo, self.r_hi, self.r_lo, samples, &mut pts);
        pts.push(C64::from_polar(self.r_lo, self.th_lo));
        pts
    }

    fn center(&self) -> C64 {
        C64::from_polar(
            (self.r_lo * self.r_hi).sqrt(),
            0.5 * (self.th_lo + self.th_hi),
        )
    }

    fn diameter(&self) -> f64 {
        let c0 = C64::from_polar(self.r_lo, self.th_lo);
        let c1 = C64::from_polar(self.r_hi, self.th_hi);
        let c2 = C64::from_polar(self.r_lo, self.th_hi);
        let c3 = C64::from_polar(self.r_hi, self.th_lo);
        (c1 - c0).norm().max((c3 - c2).norm())
    }

    fn split(&self) -> [Cell; 4] {
        let rm = (self.r_lo * self.r_hi).sqrt();
        let tm = 0.5 * (self.th_lo + self.th_hi);
        [
            Cell { r_lo: self.r_lo, r_hi: rm, th_lo: self.th_lo, th_hi: tm },
            Cell { r_lo: rm, r_hi: self.r_hi, th_lo: self.th_lo, th_hi: tm },
            Cell { r_lo: self.r_lo, r_hi: rm, th_lo: tm, th_hi: self.th_hi },
            Cell { r_lo: rm, r_hi: self.r_hi, th_lo: tm, th_hi: self.th_hi },
        ]
    }
}

/// Newton-polish one coupled solution starting from `omega0`, tracking the
/// subset whose coupling value is smallest at the start.
fn polish_zero(
    params: &RingParams,
    zeta_l: C64,
    omega0: C64,
) -> Result<Option<(C64, Vec<C64>)>> {
    let l = params.l as f64;
    let n = params.n;
    let subsets = combinations(params.l, n);
    let mut roots = roots_at_omega(omega0, params)?;
    let mut omega = omega0;
    let mut s_best = subsets[0].clone();
    let mut best = f64::INFINITY;
    for s in &subsets {
        let v = subset_p(&roots, s, omega, zeta_l, n).norm();
        if v < best {
            best = v;
            s_best = s.clone();
        }
    }
    for _ in 0..60 {
        let p = subset_p(&roots, &s_best, omega, zeta_l, n);
        // dp/domega with dlambda/domega = lambda (lambda - 1) / (omega (L lambda - (L-N)))
        let mut prod = ONE;
        for &i in &s_best {
            prod *= ONE - roots[i].inv();
        }
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let mut deriv = -zeta_l / (omega * omega) * prod * sign;
        for &i in &s_best {
            let w = roots[i];
            let dw = w * (w - ONE) / (omega * (w * l - (l - n as f64)));
            // d/domega (1 - w^{-1}) = dw / w^2; replaces the i-th factor
            deriv += zeta_l / omega * sign * prod / (ONE - w.inv()) * dw / (w * w);
        }
        if deriv.norm() < 1e-14 {
            return Ok(None);
        }
        let step = p / deriv;
        let omega_new = omega - step;
        let raw = roots_at_omega(omega_new, params)?;
        roots = match_roots(&roots, &raw);
        omega = omega_new;
        if step.norm() < 1e-14 * omega.norm().max(1e-8) {
            break;
        }
    }
    let p_final = subset_p(&roots, &s_best, omega, zeta_l, n).norm();
    let scale = {
        let mut prod = 1.0;
        for &i in &s_best {
            prod *= (ONE - roots[i].inv()).norm();
        }
        1.0 + prod / omega.norm()
    };
    if p_final > 1e-8 * scale {
        return Ok(None);
    }
    Ok(Some((omega, roots)))
}

/// Solutions of the coupled system for a given `zeta`, one `BetheTuple` per
/// distinct root set (the `L` rotations of `z` are implicit).
///
/// Zeros of `P(omega) = prod_{subsets} p(S; omega)` are located by the
/// argument principle on log-polar cells of an annulus, refined to small
/// diameter and Newton-polished.  Unresolved cell clusters signal a
/// degenerate `zeta` (non-simple poles).
pub fn coupled_roots(
    zeta: C64,
    params: &RingParams,
    search: &CoupledSearch,
) -> Result<Vec<BetheTuple>> {
    let l = params.l;
    let n = params.n;
    let zeta_l = zeta.powi(l as i32);
    let subsets = combinations(l, n);
    let rho = params.rho();
    let r0 = params.r0();

    // annulus in z: every solution satisfies |z| <= 1 + rho
    let z_out = (1.0 + rho) * 1.06;
    let mut z_in = 0.30 * r0;
    if (zeta_l - ONE).norm() > 1e-9 {
        // perturbed stationary root sits near |z|^L ~ |Ln(zeta^-L)| / C(L,N)
        let est = ((zeta_l.ln()).norm() / binomial(l as u64, n as u64)).powf(1.0 / l as f64);
        z_in = z_in.min(0.5 * est).max(1e-3);
    }
    let expected = params.dim() - usize::from((zeta_l - ONE).norm() <= 1e-9);

    let mut attempt = 0usize;
    loop {
        attempt += 1;
        let omega_lo = z_in.powi(l as i32);
        let omega_hi = z_out.powi(l as i32);
        let mut queue: Vec<Cell> = Vec::new();
        let tau = 2.0 * std::f64::consts::PI;
        // irrational offset keeps zeros off cell boundaries
        let th0 = 0.31937 + 0.11 * attempt as f64;
        for ri in 0..search.radial_cells {
            let f0 = ri as f64 / search.radial_cells as f64;
            let f1 = (ri + 1) as f64 / search.radial_cells as f64;
            for ai in 0..search.angular_cells {
                queue.push(Cell {
                    r_lo: omega_lo * (omega_hi / omega_lo).powf(f0),
                    r_hi: omega_lo * (omega_hi / omega_lo).powf(f1),
                    th_lo: th0 + tau * ai as f64 / search.angular_cells as f64,
                    th_hi: th0 + tau * (ai + 1) as f64 / search.angular_cells as f64,
                });
            }
        }

        let mut zeros: Vec<(C64, Vec<C64>)> = Vec::new();
        while let Some(cell) = queue.pop() {
            let pts = cell.boundary(search.edge_samples);
            let w = winding_along(params, &subsets, zeta_l, &pts)?;
            let wi = w.round();
            if (w - wi).abs() > 0.25 {
                return Err(Error::QuadratureNonConvergence(format!(
                    "non-integer winding {w:.3} on cell"
                )));
            }
            let wi = wi as i64;
            if wi == 0 {
                continue;
            }
            if cell.diameter() > 1e-3 * cell.center().norm().max(1e-6) {
                queue.extend(cell.split());
                continue;
            }
            if wi > 1 {
                return Err(Error::DegenerateZeta(format!(
                    "unresolved cluster of {wi} coupled roots near omega = {}",
                    cell.center()
                )));
            }
            if let Some((omega, roots)) = polish_zero(params, zeta_l, cell.center())? {
                if !zeros
                    .iter()
                    .any(|(o, _)| (o - omega).norm() < 1e-8 * omega.norm().max(1e-8))
                {
                    zeros.push((omega, roots));
                }
            }
        }

        // collect subsets satisfying the coupling equation at each zero
        let mut tuples: Vec<BetheTuple> = Vec::new();
        for (omega, roots) in &zeros {
            let z = omega.powf(1.0 / l as f64); // principal branch representative
            for s in &subsets {
                let p = subset_p(roots, s, *omega, zeta_l, n);
                let mut prod = 1.0;
                for &i in s {
                    prod *= (ONE - roots[i].inv()).norm();
                }
                let tol = 1e-8 * (1.0 + prod / omega.norm());
                if p.norm() < tol {
                    let mut lambdas: Vec<C64> = s.iter().map(|&i| roots[i]).collect();
                    // repeated roots give trivial Bethe functions; skip them
                    let mut distinct = true;
                    for a in 0..lambdas.len() {
                        for b in a + 1..lambdas.len() {
                            if (lambdas[a] - lambdas[b]).norm() < 1e-9 {
                                distinct = false;
                            }
                        }
                    }
                    if !distinct {
                        continue;
                    }
                    lambdas.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
                    let e = energy(&lambdas, ONE, params);
                    tuples.push(BetheTuple {
                        lambdas,
                        z,
                        zeta,
                        energy: e,
                    });
                }
            }
        }

        if tuples.len() == expected || attempt >= 3 {
            if tuples.len() != expected {
                eprintln!(
                    "warning: coupled root search found {} tuples, expected {} (zeta = {zeta})",
                    tuples.len(),
                    expected
                );
            }
            tuples.sort_by(|a, b| {
                (a.energy.re, a.energy.im)
                    .partial_cmp(&(b.energy.re, b.energy.im))
                    .unwrap()
            });
            return Ok(tuples);
        }
        // escalate: widen annulus inward and refine sampling
        z_in *= 0.5;
    }
}

// ---------------------------------------------------------------------------
// Fuss-Catalan toolkit
// ---------------------------------------------------------------------------

/// `(p, r)`-Fuss–Catalan number `A_m(p, r) = (r/m!) prod_{i=1}^{m-1} (mp + r - i)`.
pub fn fuss_catalan(p: Ratio<i64>, r: Ratio<i64>, m: u32) -> Ratio<i64> {
    if m == 0 {
        return Ratio::from_integer(1);
    }
    let mut acc = r;
    for i in 1..m {
        acc *= p * Ratio::from_integer(m as i64) + r - Ratio::from_integer(i as i64);
    }
    let mut fact = Ratio::from_integer(1);
    for i in 2..=m {
        fact *= Ratio::from_integer(i as i64);
    }
    acc / fact
}

/// Truncated Fuss–Catalan expansion of a `Q1` root:
/// `1 - lambda^{-1} ~ -Z sum_{m=0}^{M} A_m(d, d) Z^m` with `Z = -eta z^d`,
/// valid strictly inside `|Z| < r0^d = rho (1-rho)^{d-1}`.
pub fn phi_expansion(z: C64, eta: C64, m_trunc: u32, params: &RingParams) -> Result<C64> {
    if params.l % params.n != 0 {
        return Err(Error::InvalidParams("phi expansion needs L = dN".into()));
    }
    let d = (params.l / params.n) as i64;
    let rho = params.rho();
    let big_z = -eta * z.powi(d as i32);
    let radius = rho * (1.0 - rho).powi((d - 1) as i32);
    if big_z.norm() >= radius {
        return Err(Error::SeriesDivergence(format!(
            "|Z| = {} at or beyond the radius of convergence {radius}",
            big_z.norm()
        )));
    }
    let mut acc = C64::new(0.0, 0.0);
    let mut zp = ONE;
    for m in 0..=m_trunc {
        let a = fuss_catalan(Ratio::from_integer(d), Ratio::from_integer(d), m);
        let af = *a.numer() as f64 / *a.denom() as f64;
        acc += zp * af;
        zp *= big_z;
    }
    Ok(-big_z * acc)
}

/// Symmetric product `Psi(z) = prod_k phi(Z_k)` over the `N`-th roots of
/// unity, via its log series
/// `ln Psi = sum_{k>=1} ((-1)^{kN} / k) C(kL, kN) z^{kL}`.
///
/// Leading behaviour `1 + (-1)^N C(L,N) z^L + O(z^{2L})`.
pub fn psi_product(z: C64, params: &RingParams) -> Result<C64> {
    let l = params.l;
    let n = params.n;
    if z.norm() >= params.r0() {
        return Err(Error::SeriesDivergence(format!(
            "|z| = {} outside the convergence disk r0 = {}",
            z.norm(),
            params.r0()
        )));
    }
    let mut acc = C64::new(0.0, 0.0);
    let mut k = 1u64;
    loop {
        let sign = if (k as usize * n) % 2 == 0 { 1.0 } else { -1.0 };
        let coeff = sign / k as f64 * binomial(k * l as u64, k * n as u64);
        let term = z.powi((k * l as u64) as i32) * coeff;
        acc += term;
        if term.norm() < 1e-18 * acc.norm().max(1.0) || k > 120 {
            break;
        }
        k += 1;
    }
    Ok(acc.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{spectrum, DEFAULT_STATE_CAP};
    use crate::ring::{apply_generator, enumerate_states};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn quadratic_closed_form() {
        let ps = RingParams::new(2, 1, 0.5).unwrap();
        let z = c(0.21, 0.13);
        let rs = q_roots(z, &ps).unwrap();
        let s = (ONE + z * z * 4.0).sqrt();
        let mut expect = vec![(ONE - s) * 0.5, (ONE + s) * 0.5];
        expect.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
        for (r, e) in rs.roots.iter().zip(&expect) {
            assert!((r - e).norm() < 1e-12);
        }
    }

    #[test]
    fn small_z_clustering_rates() {
        let ps = RingParams::new(6, 2, 0.5).unwrap();
        let rho = ps.rho();
        let d = 3.0;
        for &r in &[1e-2, 1e-3] {
            let z = c(r, 0.0);
            let rs = q_roots(z, &ps).unwrap();
            for &u in &rs.q0_roots().unwrap() {
                let predicted = r.powf(1.0 / (1.0 - rho));
                assert!(
                    (u.norm() / predicted - 1.0).abs() < 0.35,
                    "|u| = {} vs {predicted}",
                    u.norm()
                );
            }
            for &v in &rs.q1_roots().unwrap() {
                let predicted = r.powf(d);
                assert!(((v - ONE).norm() / predicted - 1.0).abs() < 0.35);
            }
        }
    }

    #[test]
    fn unique_q1_partner_per_cycle() {
        let ps = RingParams::new(6, 2, 0.5).unwrap();
        let z = c(0.22, 0.09);
        let rs = q_roots(z, &ps).unwrap();
        let q0 = rs.q0.clone().unwrap();
        let q1 = rs.q1.clone().unwrap();
        for cyc in rs.cycles.as_ref().unwrap() {
            let in_q1 = cyc.iter().filter(|i| q1.contains(i)).count();
            let in_q0 = cyc.iter().filter(|i| q0.contains(i)).count();
            assert_eq!(in_q1, 1);
            assert_eq!(in_q0, 2);
        }
        for &u in &q0 {
            let v = rs.v_partner(u).unwrap();
            assert!(q1.contains(&v));
        }
    }

    #[test]
    fn classification_refused_beyond_r0() {
        let ps = RingParams::new(6, 2, 0.5).unwrap();
        let rs = q_roots(c(2.0, 0.0), &ps).unwrap();
        assert!(rs.q0.is_none());
        assert!(rs.q0_roots().is_err());
    }

    #[test]
    fn coupling_cancellation_n1() {
        let ps = RingParams::new(4, 1, 0.5).unwrap();
        let zeta = C64::from_polar(1.0, 0.3);
        let z = c(0.4, 0.2);
        // choose lambda with 1 - 1/lambda = z^L zeta^{-L}
        let rhs = z.powi(4) * zeta.powi(-4);
        let lambda = (ONE - rhs).inv();
        let p = p_coupling(&[lambda], z, zeta, &ps).unwrap();
        assert!(p.norm() < 1e-12);
    }

    #[test]
    fn coupling_nonzero_at_double_root() {
        // z^L = (-1)^N r0^L puts the double root 1 - rho among the roots;
        // all-Q1 tuples through it do not solve the coupling equation.
        let ps = RingParams::new(6, 2, 0.5).unwrap();
        let r0 = ps.r0();
        // N even: the critical z is real positive; step just inside r0
        let z = c(r0 * (1.0 - 1e-7), 0.0);
        let rs = q_roots(z, &ps).unwrap();
        let q1 = rs.q1_roots().unwrap();
        let one_minus_rho = 1.0 - ps.rho();
        assert!(
            q1.iter().any(|v| (v - one_minus_rho).norm() < 1e-2),
            "no Q1 root near the double point"
        );
        for zeta_arg in [0.0, 0.7] {
            let zeta = C64::from_polar(1.0, zeta_arg);
            let p = p_coupling(&q1, z, zeta, &ps).unwrap();
            assert!(p.norm() > 1e-4, "|p| = {}", p.norm());
        }
    }

    #[test]
    fn coupling_exceptional_limit() {
        // zeta^L = 1, all-Q1 tuple, z -> 0: p -> 1 - Psi(0) = 0
        let ps = RingParams::new(4, 2, 0.5).unwrap();
        let zeta = c(-1.0, 0.0); // zeta^4 = 1
        let mut prev = f64::INFINITY;
        for &r in &[0.05, 0.02, 0.008] {
            let z = c(r, 0.0);
            let rs = q_roots(z, &ps).unwrap();
            let q1 = rs.q1_roots().unwrap();
            let p = p_coupling(&q1, z, zeta, &ps).unwrap();
            assert!(p.norm() < prev);
            prev = p.norm();
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn bethe_function_repeated_root_vanishes() {
        let ps = RingParams::new(5, 2, 0.5).unwrap();
        let x = Configuration::new(vec![1, 3], &ps).unwrap();
        let w = c(0.7, 0.4);
        let val = bethe_function(&[w, w], &x, C64::from_polar(1.0, 0.2)).unwrap();
        assert!(val.norm() < 1e-12);
    }

    #[test]
    fn bethe_function_n1_reduces_to_power() {
        let ps = RingParams::new(5, 1, 0.5).unwrap();
        let x = Configuration::new(vec![3], &ps).unwrap();
        let w = c(0.8, -0.3);
        let val = bethe_function(&[w], &x, C64::from_polar(1.0, 0.4)).unwrap();
        assert!((val - w.powi(-3)).norm() < 1e-14);
    }

    #[test]
    fn determinant_equals_permutation_sum_n2() {
        let ps = RingParams::new(6, 2, 0.5).unwrap();
        let x = Configuration::new(vec![1, 4], &ps).unwrap();
        let zeta = C64::from_polar(1.0, 0.9);
        let ws = [c(0.7, 0.2), c(-0.4, 0.8)];
        let det = bethe_function(&ws, &x, zeta).unwrap();
        // explicit sum over both permutations with A_sigma coefficients
        let a = |j: usize| ONE - (zeta * ws[j]).inv();
        let id_term = ws[0].powi(-1) * ws[1].powi(-4);
        let swap_term = -a(1) / a(0) * ws[1].powi(-1) * ws[0].powi(-4);
        assert!((det - (id_term + swap_term)).norm() < 1e-12 * det.norm().max(1.0));
    }

    #[test]
    fn energy_at_unit_roots_vanishes() {
        let ps = RingParams::new(5, 3, 0.62).unwrap();
        let ws = vec![ONE; 3];
        assert!(energy(&ws, ONE, &ps).norm() < 1e-15);
    }

    #[test]
    fn exclusion_rule_for_coupled_tuple() {
        // u(..., x_k = x_{k-1}, ...) = zeta^{-1} u(..., x_k = x_{k-1}+1, ...)
        let ps = RingParams::new(5, 2, 0.7).unwrap();
        let zeta = C64::from_polar(1.0, std::f64::consts::PI / 5.0);
        let tuples = coupled_roots(zeta, &ps, &CoupledSearch::default()).unwrap();
        for t in tuples.iter().take(4) {
            // original variables lambda = w / zeta satisfy the zeta-deformed system
            let orig: Vec<C64> = t.lambdas.iter().map(|&w| w / zeta).collect();
            for x1 in 0..3i64 {
                let lhs = bethe_function_ext(&orig, &[x1, x1], zeta).unwrap();
                let rhs = bethe_function_ext(&orig, &[x1, x1 + 1], zeta).unwrap();
                assert!(
                    (lhs - rhs / zeta).norm() < 1e-9 * lhs.norm().max(1.0),
                    "exclusion violated"
                );
            }
        }
    }

    #[test]
    fn periodicity_rule_for_coupled_tuple() {
        let ps = RingParams::new(5, 2, 0.7).unwrap();
        let zeta = C64::from_polar(1.0, std::f64::consts::PI / 5.0);
        let tuples = coupled_roots(zeta, &ps, &CoupledSearch::default()).unwrap();
        for t in tuples.iter().take(4) {
            let orig: Vec<C64> = t.lambdas.iter().map(|&w| w / zeta).collect();
            let lhs = bethe_function_ext(&orig, &[1, 3], zeta).unwrap();
            let rhs = bethe_function_ext(&orig, &[3, 1 + 5], zeta).unwrap();
            assert!((lhs - rhs).norm() < 1e-9 * lhs.norm().max(1.0));
        }
    }

    #[test]
    fn coupled_tuples_are_generator_eigenfunctions() {
        let ps = RingParams::new(5, 2, 0.7).unwrap();
        let zeta = C64::from_polar(1.0, std::f64::consts::PI / 5.0);
        let tuples = coupled_roots(zeta, &ps, &CoupledSearch::default()).unwrap();
        let states = enumerate_states(&ps);
        let t = &tuples[0];
        let orig: Vec<C64> = t.lambdas.iter().map(|&w| w / zeta).collect();
        let u: Vec<C64> = states
            .iter()
            .map(|x| bethe_function(&orig, x, zeta).unwrap())
            .collect();
        let hu = apply_generator(&u, zeta, &ps);
        let scale = u.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (hv, uv) in hu.iter().zip(u.iter()) {
            assert!(
                (hv - t.energy * uv).norm() < 1e-8 * scale,
                "eigenrelation violated"
            );
        }
    }

    #[test]
    fn completeness_counts() {
        // L=4, N=1 and L=5, N=2 at zeta = e^{i pi / 7}: no stationary branch
        let zeta = C64::from_polar(1.0, std::f64::consts::PI / 7.0);
        for (l, n) in [(4usize, 1usize), (5, 2)] {
            let ps = RingParams::new(l, n, 0.7).unwrap();
            let tuples = coupled_roots(zeta, &ps, &CoupledSearch::default()).unwrap();
            assert_eq!(tuples.len(), ps.dim(), "L={l} N={n}");
        }
        // at zeta = 1 the stationary branch replaces one tuple
        let ps = RingParams::new(4, 1, 0.7).unwrap();
        let tuples = coupled_roots(ONE, &ps, &CoupledSearch::default()).unwrap();
        assert_eq!(tuples.len() + 1, ps.dim());
    }

    #[test]
    fn tuple_constraints_product_and_radius() {
        let zeta = C64::from_polar(1.0, std::f64::consts::PI / 7.0);
        let ps = RingParams::new(5, 2, 0.7).unwrap();
        let tuples = coupled_roots(zeta, &ps, &CoupledSearch::default()).unwrap();
        let zeta_ln = zeta.powi(5 * 2);
        for t in &tuples {
            let prod: C64 = t.lambdas.iter().product();
            // (prod w_i)^L = zeta^{LN}; at zeta^L = 1 this is the L-th
            // root-of-unity constraint on the product of the roots
            assert!(
                (prod.powi(5) - zeta_ln).norm() < 1e-8,
                "(prod)^L = {:?}",
                prod.powi(5)
            );
            let min_mod = t.lambdas.iter().map(|w| w.norm()).fold(f64::INFINITY, f64::min);
            assert!(t.z.norm() <= min_mod + ps.rho() + 1e-9);
            // no tuple contains the double root 1 - rho
            for w in &t.lambdas {
                assert!((w - (1.0 - ps.rho())).norm() > 1e-6);
            }
        }
    }

    #[test]
    fn energies_match_oracle_spectrum() {
        let zeta = C64::from_polar(1.0, std::f64::consts::PI / 5.0);
        let ps = RingParams::new(5, 2, 0.7).unwrap();
        let tuples = coupled_roots(zeta, &ps, &CoupledSearch::default()).unwrap();
        let energies: Vec<C64> = tuples.iter().map(|t| t.energy).collect();
        let spec = spectrum(&ps, zeta, DEFAULT_STATE_CAP).unwrap();
        assert_eq!(energies.len(), spec.len());
        let worst = crate::validate::multiset_distance(&energies, &spec);
        assert!(worst < 1e-6, "multiset distance {worst}");
    }

    #[test]
    fn fuss_catalan_values_and_convolution() {
        let two = Ratio::from_integer(2);
        let vals: Vec<i64> = (0..4)
            .map(|m| *fuss_catalan(two, two, m).numer())
            .collect();
        assert_eq!(vals, vec![1, 2, 5, 14]);
        // convolution sum_k A_k(p,r) A_{m-k}(p,s) = A_m(p, r+s), p=3, r=1, s=2
        let p = Ratio::from_integer(3);
        let r = Ratio::from_integer(1);
        let s = Ratio::from_integer(2);
        for m in 0..=8u32 {
            let conv: Ratio<i64> = (0..=m)
                .map(|k| fuss_catalan(p, r, k) * fuss_catalan(p, s, m - k))
                .sum();
            assert_eq!(conv, fuss_catalan(p, r + s, m), "m = {m}");
        }
    }

    #[test]
    fn generating_function_power_identity() {
        // B_{2,1}(z)^3 = B_{2,3}(z) as truncated series to order 10
        let p = Ratio::from_integer(2);
        let order = 10usize;
        let b1: Vec<f64> = (0..=order as u32)
            .map(|m| {
                let v = fuss_catalan(p, Ratio::from_integer(1), m);
                *v.numer() as f64 / *v.denom() as f64
            })
            .collect();
        // cube the series
        let mut cube = vec![0.0; order + 1];
        for a in 0..=order {
            for b in 0..=order - a {
                for c in 0..=order - a - b {
                    if a + b + c <= order {
                        cube[a + b + c] += b1[a] * b1[b] * b1[c];
                    }
                }
            }
        }
        for m in 0..=order as u32 {
            let v = fuss_catalan(p, Ratio::from_integer(3), m);
            let expect = *v.numer() as f64 / *v.denom() as f64;
            assert!((cube[m as usize] - expect).abs() < 1e-9 * expect.max(1.0));
        }
    }

    #[test]
    fn log_series_coefficients() {
        // [z^n] ln B_{2,1} = (1/(2n)) C(2n, n): 1, 3/2, 10/3 for n = 1..3
        let p = Ratio::from_integer(2);
        let order = 6usize;
        let b: Vec<f64> = (0..=order as u32)
            .map(|m| {
                let v = fuss_catalan(p, Ratio::from_integer(1), m);
                *v.numer() as f64 / *v.denom() as f64
            })
            .collect();
        // ln(series) coefficients by the standard recurrence
        let mut lnc = vec![0.0; order + 1];
        for n in 1..=order {
            let mut s = b[n];
            for k in 1..n {
                s -= k as f64 / n as f64 * lnc[k] * b[n - k];
            }
            lnc[n] = s;
        }
        let expect = |n: u64| binomial(2 * n, n) / (2.0 * n as f64);
        for n in 1..=3u64 {
            assert!((lnc[n as usize] - expect(n)).abs() < 1e-12);
        }
        assert!((lnc[1] - 1.0).abs() < 1e-12);
        assert!((lnc[2] - 1.5).abs() < 1e-12);
        assert!((lnc[3] - 10.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn phi_expansion_matches_root() {
        let ps = RingParams::new(4, 2, 0.5).unwrap();
        let z = c(0.1, 0.0);
        let rs = q_roots(z, &ps).unwrap();
        let cycles = rs.cycles.as_ref().unwrap();
        let q1 = rs.q1.as_ref().unwrap();
        for (k, cyc) in cycles.iter().enumerate() {
            let vi = *cyc.iter().find(|i| q1.contains(i)).unwrap();
            let v = rs.roots[vi];
            let eta = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / 2.0);
            let series = phi_expansion(z, eta, 8, &ps).unwrap();
            assert!(
                ((ONE - v.inv()) - series).norm() < 1e-10,
                "k={k}: {:?} vs {:?}",
                ONE - v.inv(),
                series
            );
        }
    }

    #[test]
    fn phi_expansion_error_scaling() {
        // halving |z| shrinks the truncation error by ~ 2^{d(M+2)}
        let ps = RingParams::new(4, 2, 0.5).unwrap();
        let m = 4u32;
        let exact = |z: C64| {
            let rs = q_roots(z, &ps).unwrap();
            let cycles = rs.cycles.clone().unwrap();
            let q1 = rs.q1.clone().unwrap();
            let vi = *cycles[0].iter().find(|i| q1.contains(i)).unwrap();
            ONE - rs.roots[vi].inv()
        };
        let err = |z: C64| (exact(z) - phi_expansion(z, ONE, m, &ps).unwrap()).norm();
        let e1 = err(c(0.12, 0.0));
        let e2 = err(c(0.06, 0.0));
        let slope = (e1 / e2).log2();
        let expect = 2.0 * (m as f64 + 2.0);
        assert!(
            (slope - expect).abs() < 0.1 * expect,
            "slope {slope} vs {expect}"
        );
    }

    #[test]
    fn psi_product_values() {
        let ps = RingParams::new(4, 2, 0.5).unwrap();
        assert!((psi_product(c(0.0, 0.0), &ps).unwrap() - ONE).norm() < 1e-15);
        let z = c(0.15, 0.0);
        let psi = psi_product(z, &ps).unwrap();
        let lead = (psi - ONE) / z.powi(4);
        assert!(
            (lead.re - 6.0).abs() < 0.02 * 6.0,
            "leading coefficient {lead}"
        );
        assert!(psi_product(c(0.6, 0.0), &ps).is_err());
    }

    #[test]
    fn limit_ratio_lemma() {
        // prod_i (w_i - 1) / q_z(w_N) -> 1 / (N C(L,N)) with the mu-completion.
        // The finite-z value carries an O(z^d) bias (~0.17 z^2 here), so the
        // limit is extracted by one Richardson step in z^2.
        let ps = RingParams::new(4, 2, 0.5).unwrap();
        let ratio = |zr: f64| {
            let z = c(zr, 0.0);
            let rs = q_roots(z, &ps).unwrap();
            let lam = rs.q1_roots().unwrap()[0];
            // mu^{-1} = 1 + (-1)^N z^L prod (1 - lambda_i^{-1})^{-1}
            let mu = (ONE + z.powi(4) / (ONE - lam.inv())).inv();
            // for N=2 the dBE turns q_z(mu) into the cancellation-free
            // form 1 - (lam mu)^{-L}
            let qz_mu = ONE - (lam * mu).powi(-4);
            (lam - ONE) * (mu - ONE) / qz_mu
        };
        let r1 = ratio(1e-2);
        let r2 = ratio(1e-2 / 2.0f64.sqrt());
        let extrap = r2 * 2.0 - r1;
        let expect = 1.0 / (2.0 * 6.0);
        assert!(
            (extrap - expect).norm() < 1e-6,
            "ratio limit {extrap} vs {expect}"
        );
    }
}
