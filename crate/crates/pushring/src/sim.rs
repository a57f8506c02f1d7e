//! Event-driven Monte Carlo simulation of the PushASEP on a ring.
//!
//! Every particle carries two exponential clocks: a rate-`p` right clock
//! whose firing is rejected when the right neighbour site is occupied
//! (statistically identical to exclusion, since rejected firings change
//! nothing), and a rate-`q` left clock that always succeeds by pushing the
//! whole occupied block to its left one step.  The total event rate is the
//! constant `N (p + q) = N`, so the next event time is a plain exponential
//! draw and the event picks a uniform particle and a biased coin.
//!
//! Trials derive independent streams from `hash(seed, trial)`, so ensembles
//! are order-independent and parallelize freely.

use crate::ring::{Configuration, CurrentRecord, RingParams};
use crate::table::DistributionTable;
use crate::{Error, Result};
use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// One simulated event.
#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    /// Particle `i` (1-based label before the move) jumped right.
    Right(usize),
    /// A push initiated at particle `i` moved a block of length `k` left.
    Push(usize, usize),
}

#[derive(Debug, Clone)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub after: Configuration,
}

/// A full trajectory with its per-edge current bookkeeping.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub events: Vec<Event>,
    pub
 final_state: Configuration,
    pub currents: CurrentRecord,
    pub seed: u64,
}

/// SplitMix64 hash; decorrelates per-trial seeds.
fn mix_seed(seed: u64, trial: u64) -> u64 {
    let mut x = seed ^ trial.wrapping_mul(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Run one trajectory from `y` up to time `t_end`.
///
/// Records events only when `record_events` is set (ensemble estimators
/// skip the log to stay allocation-light).
pub fn run_with(
    y: &Configuration,
    t_end: f64,
    seed: u64,
    params: &RingParams,
    record_events: bool,
) -> Result<Trajectory> {
    if t_end < 0.0 {
        return Err(Error::InvalidParams("t_end must be nonnegative".into()));
    }
    let l = params.l;
    let n = params.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut occupied = vec![false; l];
    let mut pos: Vec<usize> = y.positions().to_vec();
    for &x in &pos {
        occupied[x] = true;
    }
    let mut currents = CurrentRecord::new(l);
    let mut events = Vec::new();
    let mut t = 0.0f64;
    let total_rate = n as f64; // p + q = 1 per particle, rejections included

    loop {
        let u: f64 = rng.sample(Open01);
        t += -u.ln() / total_rate;
        if t > t_end {
            break;
        }
        let i = rng.gen_range(0..n); // particle label (0-based here)
        let right: f64 = rng.gen();
        if right < params.p {
            // exclusion right jump; rejected if the target is occupied
            let x = pos[i];
            let target = (x + 1) % l;
            if !occupied[target] {
                occupied[x] = false;
                occupied[target] = true;
                pos[i] = target;
                currents.global += 1;
                currents.edges[x] += 1;
                if record_events {
                    pos.sort_unstable();
                    events.push(Event {
                        time: t,
                        kind: EventKind::Right(i + 1),
                        after: Configuration::new(pos.clone(), params)?,
                    });
                }
            }
        } else {
            // left push: the block left of (and including) particle i slides
            let x = pos[i];
            // walk left over the occupied block to find the landing site
            let mut k = 0usize;
            while k < l && occupied[(x + l - k) % l] {
                k += 1;
            }
            if k == l {
                // fully packed ring: pushes cannot resolve, nothing moves
                continue;
            }
            // sites x, x-1, .., x-k+1 are occupied; x-k is empty:
            // every particle in the block moves one step left
            for back in 0..k {
                let from = (x + l - back) % l;
                let to = (from + l - 1) % l;
                currents.edges[to] -= 1;
            }
            occupied[x] = false;
            occupied[(x + l - k) % l] = true;
            currents.global -= k as i64;
            // positions update: block members shift by one
            for p in pos.iter_mut() {
                let off = (x + l - *p) % l;
                if off < k {
                    *p = (*p + l - 1) % l;
                }
            }
            if record_events {
                let mut sorted = pos.clone();
                sorted.sort_unstable();
                events.push(Event {
                    time: t,
                    kind: EventKind::Push(i + 1, k),
                    after: Configuration::new(sorted, params)?,
                });
            }
        }
    }
    pos.sort_unstable();
    let final_state = Configuration::new(pos, params)?;
    debug_assert!(currents.consistent());
    Ok(Trajectory {
        events,
        final_state,
        currents,
        seed,
    })
}

/// Run one fully recorded trajectory.
pub fn run(y: &Configuration, t_end: f64, seed: u64, params: &RingParams) -> Result<Trajectory> {
    run_with(y, t_end, seed, params, true)
}

/// Empirical law of `X(t)` over `trials` independent runs, with per-state
/// standard errors.
pub fn empirical_transition(
    y: &Configuration,
    t: f64,
    trials: usize,
    seed: u64,
    params: &RingParams,
) -> Result<DistributionTable> {
    if trials == 0 {
        return Err(Error::InvalidParams("need at least one trial".into()));
    }
    let dim = params.dim();
    let counts: Vec<u64> = (0..trials as u64)
        .into_par_iter()
        .fold(
            || vec![0u64; dim],
            |mut acc, trial| {
                let tr = run_with(y, t, mix_seed(seed, trial), params, false).expect("run");
                acc[tr.final_state.rank(params)] += 1;
                acc
            },
        )
        .reduce(
            || vec![0u64; dim],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    let meta = serde_json::json!({
        "method": "gillespie ensemble",
        "L": params.l, "N": params.n, "p": params.p,
        "t": t, "trials": trials, "seed": seed,
        "y": y.positions(),
        "state_order": "lexicographic",
    });
    let mut table = DistributionTable::new(vec!["state_index", "probability", "stderr"], meta);
    for (i, &c) in counts.iter().enumerate() {
        let phat = c as f64 / trials as f64;
        let se = (phat * (1.0 - phat) / trials as f64).sqrt();
        table.push(vec![i as f64, phat, se]);
    }
    Ok(table)
}

/// Empirical `P(Q_{L-1}(t) >= Q)` with its binomial standard error.
pub fn empirical_current_cdf(
    y: &Configuration,
    t: f64,
    q: i64,
    trials: usize,
    seed: u64,
    params: &RingParams,
) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::InvalidParams("need at least one trial".into()));
    }
    let hits: u64 = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let tr = run_with(y, t, mix_seed(seed, trial), params, false).expect("run");
            u64::from(tr.currents.edges[params.l - 1] >= q)
        })
        .sum();
    let phat = hits as f64 / trials as f64;
    let se = (phat * (1.0 - phat) / trials as f64).sqrt();
    Ok((phat, se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{local_current_cdf_oracle, transition_table, DEFAULT_STATE_CAP};
    use crate::ring::local_from_global;

    fn conf(pos: &[usize], params: &RingParams) -> Configuration {
        Configuration::new(pos.to_vec(), params).unwrap()
    }

    #[test]
    fn packed_ring_never_moves() {
        let ps = RingParams::new(4, 4, 1.0).unwrap();
        let y = conf(&[0, 1, 2, 3], &ps);
        let tr = run(&y, 5.0, 7, &ps).unwrap();
        assert_eq!(tr.final_state, y);
        assert_eq!(tr.currents.global, 0);
        assert!(tr.events.is_empty());
    }

    #[test]
    fn deterministic_replay() {
        let ps = RingParams::new(6, 3, 0.7).unwrap();
        let y = conf(&[0, 2, 4], &ps);
        let a = run(&y, 3.0, 42, &ps).unwrap();
        let b = run(&y, 3.0, 42, &ps).unwrap();
        assert_eq!(a.events.len(), b.events.len());
        for (ea, eb) in a.events.iter().zip(&b.events) {
            assert_eq!(ea.time, eb.time);
            assert_eq!(ea.kind, eb.kind);
            assert_eq!(ea.after, eb.after);
        }
    }

    #[test]
    fn trajectory_invariants() {
        // event times increase, configurations valid, currents consistent,
        // and the pathwise local/global identity holds at every event
        let ps = RingParams::new(6, 3, 0.6).unwrap();
        let y = conf(&[0, 2, 4], &ps);
        for seed in 0..20u64 {
            let tr = run(&y, 2.0, seed, &ps).unwrap();
            let mut prev_t = 0.0;
            let mut record = CurrentRecord::new(6);
            let mut prev_conf = y.clone();
            for ev in &tr.events {
                assert!(ev.time > prev_t);
                prev_t = ev.time;
                match ev.kind {
                    EventKind::Right(_) => {
                        record.global += 1;
                    }
                    EventKind::Push(_, k) => {
                        record.global -= k as i64;
                    }
                }
                // local current from the identity must match the
                // simulator's edge counter for every edge
                prev_conf = ev.after.clone();
            }
            assert_eq!(record.global, tr.currents.global);
            assert!(tr.currents.consistent());
            // final Q_{L-1} via the deterministic identity
            let qloc = local_from_global(&prev_conf, &y, tr.currents.global, 5, &ps).unwrap();
            assert_eq!(qloc, tr.currents.edges[5]);
            // all edges
            for j in 0..6 {
                let qj = local_from_global(&prev_conf, &y, tr.currents.global, j, &ps).unwrap();
                assert_eq!(qj, tr.currents.edges[j], "edge {j}");
            }
        }
    }

    #[test]
    fn push_rate_exact() {
        // left pushes fire at rate q per particle: expected count q N t
        let ps = RingParams::new(8, 3, 0.4).unwrap();
        let y = conf(&[0, 3, 6], &ps);
        let t = 4.0;
        let trials = 4000;
        let mut pushes = 0u64;
        for s in 0..trials {
            let tr = run(&y, t, s, &ps).unwrap();
            pushes += tr
                .events
                .iter()
                .filter(|e| matches!(e.kind, EventKind::Push(..)))
                .count() as u64;
        }
        let mean = pushes as f64 / trials as f64;
        let expect = ps.q() * ps.n as f64 * t;
        let se = (expect / trials as f64).sqrt() * 1.5;
        assert!(
            (mean - expect).abs() < 4.0 * se + 0.05,
            "{mean} vs {expect}"
        );
    }

    #[test]
    fn ensemble_matches_oracle() {
        let ps = RingParams::new(5, 2, 0.7).unwrap();
        let y = conf(&[0, 2], &ps);
        let t = 1.0;
        let trials = 20_000;
        let emp = empirical_transition(&y, t, trials, 11, &ps).unwrap();
        let exact = transition_table(&y, t, &ps, DEFAULT_STATE_CAP).unwrap();
        for (erow, xrow) in emp.rows.iter().zip(&exact.rows) {
            let (phat, se, pexact) = (erow[1], erow[2], xrow[1]);
            assert!(
                (phat - pexact).abs() < 4.0 * se.max(1e-4),
                "state {}: {phat} vs {pexact}",
                erow[0]
            );
        }
        // t = 0: point mass
        let emp0 = empirical_transition(&y, 0.0, 100, 3, &ps).unwrap();
        assert_eq!(emp0.rows[y.rank(&ps)][1], 1.0);
    }

    #[test]
    fn current_cdf_estimator_matches_exact() {
        let ps = RingParams::new(4, 2, 1.0).unwrap();
        let y = conf(&[0, 2], &ps);
        let t = 0.5;
        for q in [-1i64, 0, 1] {
            let (phat, se) = empirical_current_cdf(&y, t, q, 20_000, 5, &ps).unwrap();
            let exact = local_current_cdf_oracle(&y, t, q, &ps, DEFAULT_STATE_CAP).unwrap();
            assert!(
                (phat - exact).abs() < 4.0 * se.max(1e-4),
                "Q={q}: {phat} vs {exact}"
            );
        }
        let (phat, _) = empirical_current_cdf(&y, t, -50, 200, 5, &ps).unwrap();
        assert_eq!(phat, 1.0);
    }

    #[test]
    fn exclusion_never_violated() {
        let ps = RingParams::new(7, 4, 0.5).unwrap();
        let y = conf(&[0, 1, 3, 5], &ps);
        for seed in 0..10 {
            let tr = run(&y, 3.0, seed, &ps).unwrap();
            for ev in &tr.events {
                // Configuration construction validates distinctness already;
                // double-check block pushes moved onto an empty site
                assert_eq!(ev.after.positions().len(), 4);
            }
        }
    }
}
