//! Shared numerical kernels: deterministic reductions, dense matrix
//! exponentials, companion-matrix root finding and adaptive line quadrature.

use crate::{Error, Result, C64};
use ndarray::{Array1, Array2};
use ndarray_linalg::{Eig, Solve};

/// Deterministic pairwise tree sum.
///
/// Quadrature reductions use this instead of a running sum so that results
/// are independent of evaluation order (and of how node values were produced
/// in parallel).
pub fn tree_sum(values: &[C64]) -> C64 {
    match values.len() {
        0 => C64::new(0.0, 0.0),
        1 => values[0],
        n => {
            let (a, b) = values.split_at(n / 2);
            tree_sum(a) + tree_sum(b)
        }
    }
}

/// Exact binomial coefficient as f64 (valid up to ~ C(1020, k)).
pub fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// next power of two >= n
pub fn next_pow2(n: usize) -> usize {
    n.next_power_of_two()
}

// ---------------------------------------------------------------------------
// Matrix exponential
// ---------------------------------------------------------------------------

/// Dense complex matrix exponential by scaling and squaring with the [13/13]
/// Padé approximant (Higham's coefficients).  Robust for the non-normal
/// generators produced by the deformed master equation.
pub fn expm(a: &Array2<C64>) -> Result<Array2<C64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm requires a square matrix");

    // 1-norm based scaling
    let norm1 = a
        .columns()
        .into_iter()
        .map(|c| c.iter().map(|x| x.norm()).sum::<f64>())
        .fold(0.0f64, f64::max);
    const THETA_13: f64 = 5.371920351148152;
    let s = if norm1 > THETA_13 {
        (norm1 / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let a_scaled = a.mapv(|x| x / C64::new(2f64.powi(s), 0.0));

    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];

    let id = Array2::<C64>::eye(n);
    let a2 = a_scaled.dot(&a_scaled);
    let a4 = a2.dot(&a2);
    let a6 = a2.dot(&a4);

    let u_inner = &a6 * C64::new(B[13], 0.0) + &a4 * C64::new(B[11], 0.0) + &a2 * C64::new(B[9], 0.0);
    let u = a_scaled.dot(
        &(a6.dot(&u_inner)
            + &a6 * C64::new(B[7], 0.0)
            + &a4 * C64::new(B[5], 0.0)
            + &a2 * C64::new(B[3], 0.0)
            + &id * C64::new(B[1], 0.0)),
    );
    let v_inner = &a6 * C64::new(B[12], 0.0) + &a4 * C64::new(B[10], 0.0) + &a2 * C64::new(B[8], 0.0);
    let v = a6.dot(&v_inner)
        + &a6 * C64::new(B[6], 0.0)
        + &a4 * C64::new(B[4], 0.0)
        + &a2 * C64::new(B[2], 0.0)
        + &id * C64::new(B[0], 0.0);

    // (V - U) X = (V + U)
    let lhs = &v - &u;
    let rhs = &v + &u;
    let mut cols: Vec<Array1<C64>> = Vec::with_capacity(n);
    for j in 0..n {
        let col = rhs.column(j).to_owned();
        let x = lhs
            .solve(&col)
            .map_err(|e| Error::Eigensolver(format!("Pade solve failed: {e}")))?;
        cols.push(x);
    }
    let mut x = Array2::<C64>::zeros((n, n));
    for (j, col) in cols.iter().enumerate() {
        x.column_mut(j).assign(col);
    }

    for _ in 0..s {
        x = x.dot(&x);
    }
    Ok(x)
}

// ---------------------------------------------------------------------------
// Polynomial roots
// ---------------------------------------------------------------------------

/// All roots of a monic-normalizable complex polynomial
/// `c[0] + c[1] w + ... + c[deg] w^deg` via a balanced companion matrix,
/// following the classical eigenvalue route.
pub fn poly_roots(coeffs: &[C64]) -> Result<Vec<C64>> {
    let deg = coeffs.len() - 1;
    let lead = coeffs[deg];
    if lead.norm() == 0.0 {
        return Err(Error::InvalidParams("zero leading coefficient".into()));
    }
    if deg == 0 {
        return Ok(vec![]);
    }
    let monic: Vec<C64> = coeffs.iter().map(|c| c / lead).collect();

    let mut comp = Array2::<C64>::zeros((deg, deg));
    for i in 1..deg {
        comp[[i, i - 1]] = C64::new(1.0, 0.0);
    }
    for i in 0..deg {
        comp[[i, deg - 1]] = -monic[i];
    }
    balance_in_place(&mut comp);
    let (vals, _) = comp
        .eig()
        .map_err(|e| Error::Eigensolver(format!("companion eig failed: {e}")))?;
    Ok(vals.to_vec())
}

/// Parlett–Reinsch balancing (norm-2 variant); improves companion conditioning.
fn balance_in_place(a: &mut Array2<C64>) {
    let n = a.nrows();
    let radix = 2.0f64;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut c: f64 = (0..n).filter(|&j| j != i).map(|j| a[[j, i]].norm()).sum();
            let mut r: f64 = (0..n).filter(|&j| j != i).map(|j| a[[i, j]].norm()).sum();
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            while c < r / radix {
                c *= radix;
                r /= radix;
                f *= radix;
            }
            while c >= r * radix {
                c /= radix;
                r *= radix;
                f /= radix;
            }
            if (c + r) < 0.95 * s {
                done = false;
                for j in 0..n {
                    a[[i, j]] = a[[i, j]] / f;
                }
                for j in 0..n {
                    a[[j, i]] = a[[j, i]] * f;
                }
            }
        }
    }
}

/// One Newton step for a polynomial given by its coefficients.
pub fn poly_newton_step(coeffs: &[C64], w: C64) -> C64 {
    let mut val = C64::new(0.0, 0.0);
    let mut der = C64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        der = der * w + val;
        val = val * w + c;
    }
    if der.norm() == 0.0 {
        w
    } else {
        w - val / der
    }
}

// ---------------------------------------------------------------------------
// Adaptive quadrature on straight segments
// ---------------------------------------------------------------------------

/// Adaptive Simpson rule for a complex-valued integrand along the straight
/// segment from `a` to `b`.
pub fn integrate_segment<F: Fn(C64) -> C64>(f: &F, a: C64, b: C64, tol: f64) -> C64 {
    let fa = f(a);
    let fb = f(b);
    let m = (a + b) * 0.5;
    let fm = f(m);
    let whole = (b - a) / C64::new(6.0, 0.0) * (fa + fm * 4.0 + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(C64) -> C64>(
    f: &F,
    a: C64,
    b: C64,
    fa: C64,
    fm: C64,
    fb: C64,
    whole: C64,
    tol: f64,
    depth: u32,
) -> C64 {
    let m = (a + b) * 0.5;
    let lm = (a + m) * 0.5;
    let rm = (m + b) * 0.5;
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / C64::new(6.0, 0.0) * (fa + flm * 4.0 + fm);
    let right = (b - m) / C64::new(6.0, 0.0) * (fm + frm * 4.0 + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.norm() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn tree_sum_matches_naive() {
        let xs: Vec<C64> = (0..37).map(|i| C64::new(i as f64, -(i as f64) / 3.0)).collect();
        let naive: C64 = xs.iter().sum();
        assert_relative_eq!(tree_sum(&xs).re, naive.re, max_relative = 1e-14);
        assert_relative_eq!(tree_sum(&xs).im, naive.im, max_relative = 1e-14);
    }

    #[test]
    fn binomial_small_values() {
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(7, 3), 35.0);
        assert_eq!(binomial(10, 0), 1.0);
        assert_eq!(binomial(3, 5), 0.0);
    }

    #[test]
    fn expm_diagonal() {
        let a = array![
            [C64::new(-1.0, 0.5), C64::new(0.0, 0.0)],
            [C64::new(0.0, 0.0), C64::new(0.25, -2.0)]
        ];
        let e = expm(&a).unwrap();
        assert!((e[[0, 0]] - C64::new(-1.0, 0.5).exp()).norm() < 1e-13);
        assert!((e[[1, 1]] - C64::new(0.25, -2.0).exp()).norm() < 1e-13);
        assert!(e[[0, 1]].norm() < 1e-14);
    }

    #[test]
    fn expm_nilpotent() {
        // exp([[0,1],[0,0]]) = [[1,1],[0,1]]
        let a = array![
            [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
            [C64::new(0.0, 0.0), C64::new(0.0, 0.0)]
        ];
        let e = expm(&a).unwrap();
        assert!((e[[0, 0]] - C64::new(1.0, 0.0)).norm() < 1e-14);
        assert!((e[[0, 1]] - C64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn expm_large_norm_scaling() {
        // exp(t*[[0,1],[-1,0]]) is a rotation by t
        let t = 40.0;
        let a = array![
            [C64::new(0.0, 0.0), C64::new(t, 0.0)],
            [C64::new(-t, 0.0), C64::new(0.0, 0.0)]
        ];
        let e = expm(&a).unwrap();
        assert!((e[[0, 0]].re - t.cos()).abs() < 1e-10);
        assert!((e[[0, 1]].re - t.sin()).abs() < 1e-10);
    }

    #[test]
    fn roots_of_quadratic() {
        // w^2 - w - z^2 at z = 0.3: closed form (1 +- sqrt(1+4 z^2))/2
        let z = C64::new(0.3, 0.0);
        let coeffs = vec![-z * z, C64::new(-1.0, 0.0), C64::new(1.0, 0.0)];
        let mut roots = poly_roots(&coeffs).unwrap();
        roots.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        let s = (C64::new(1.0, 0.0) + z * z * 4.0).sqrt();
        assert!((roots[0] - (C64::new(1.0, 0.0) - s) * 0.5).norm() < 1e-12);
        assert!((roots[1] - (C64::new(1.0, 0.0) + s) * 0.5).norm() < 1e-12);
    }

    #[test]
    fn segment_integral_of_exp() {
        let a = C64::new(0.0, 0.0);
        let b = C64::new(1.0, 1.0);
        let val = integrate_segment(&|z: C64| z.exp(), a, b, 1e-12);
        assert!((val - (b.exp() - a.exp())).norm() < 1e-10);
    }
}
