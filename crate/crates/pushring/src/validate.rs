//! Cross-check harness: every acceptance criterion as a callable check.
//!
//! The CLI `validate` subcommand and the acceptance test suite both run
//! these; each check pins its tolerance in code and reports one line.

use crate::C64;

/// Worst matched distance between two equal-length complex multisets under
/// greedy nearest-neighbour pairing.
pub fn multiset_distance(a: &[C64], b: &[C64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    // pair large-modulus entries first so the greedy choice is stable
    let mut order: Vec<usize> = (0..a.len()).collect();
    order.sort_by(|&i, &j| {
        a[j].norm()
            .partial_cmp(&a[i].norm())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    for &i in &order {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (j, &bv) in b.iter().enumerate() {
            if !used[j] {
                let d = (a[i] - bv).norm();
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
        }
        used[best] = true;
        worst = worst.max(best_d);
    }
    worst
}
