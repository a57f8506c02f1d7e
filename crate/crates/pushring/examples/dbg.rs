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
    let tau = 5.0; let x = -11.315; let rz = 0.95;
    // fine theta scan for jumps
    let mut prev = C64::new(0.0,0.0);
    for i in 0..33 {
        let th = std::f64::consts::PI * (0.85 + 0.3 * i as f64 / 32.0);
        let z = C64::from_polar(rz, th);
        let v = node(z, x, tau, 24);
        if i > 0 {
            let jump = (v - prev).norm() / (v.norm() + prev.norm() + 1e-300);
            if jump > 0.3 { println!("JUMP at theta/pi={:.4}: |v|={:.3e} rel-jump {:.2}", th/std::f64::consts::PI, v.norm(), jump); }
        }
        prev = v;
    }
    // K-convergence at fixed z near arg pi
    let z = C64::from_polar(rz, std::f64::consts::PI * 0.97);
    for ktr in [16usize, 24, 32, 40] {
        let v = node(z, x, tau, ktr);
        println!("K={ktr}: node = {:+.6e}{:+.6e}i", v.re, v.im);
    }
}
