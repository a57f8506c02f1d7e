use num_complex::Complex64 as C64;
use pushring::limits::*;
use ndarray::Array2;

fn node(z: C64, x: f64, tau: f64, ktr: usize) -> C64 {
    let (a1,a2,a3,b) = aux_functions(z, 1e-11).unwrap();
    let sm = s_minus(z, ktr).unwrap();
    let psi: Vec<C64> = sm.elements.iter().map(|&(_,xi)| psi_exponent(xi, x, tau, ExponentKind::Flat).unwrap()).collect();
    let m = sm.elements.len();
    let mut kernel = Array2::<C64>::zeros((m,m));
    for i in 0..m {
        let xi1 = sm.elements[i].1;
        for j in 0..m {
            kernel[[i,j]] = (psi[i]+psi[j]).exp()/(xi1*(xi1+sm.elements[j].1));
        }
    }
    let mut ik = Array2::<C64>::eye(m); ik -= &kernel;
    (a1*x + a2*tau + a3 + b).exp()*pushring::bethe::det_small(&ik)
}

fn main() {
    let tau = 5.0; let x = -11.315;
    for rz in [0.95f64] {
        for mz in [48usize, 96, 192, 384] {
            let mut acc = C64::new(0.0,0.0);
            for k in 0..mz {
                let z = C64::from_polar(rz, 2.0*std::f64::consts::PI*(k as f64+0.5)/mz as f64);
                acc += node(z, x, tau, 24);
            }
            acc /= mz as f64;
            println!("rz={rz} mz={mz}: {:+.6e}{:+.3e}i", acc.re, acc.im);
        }
    }
}
