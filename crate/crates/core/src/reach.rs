//! Optimal reaching probabilities, unconditional and conditional.

use ndarray::{Array2, Array4};

use crate::mdp::TabularMdp;

/// Reaching-probability tables of an MDP.
///
/// `u[[h, s, t, s1]]` is the maximal probability, over all policies, of
/// being in state `s` at step `h` given the agent is in `s1` at step
/// `t <= h`. Entries with `t > h` are unused and stay 0. `d_star[[h, s]]`
/// is the unconditional optimum from the initial distribution.
///
/// Memory is `O(H^2 S^2)`, fine for the intended desk scale `S, H <= 64`.
#[derive(Debug, Clone)]
pub struct ReachTable {
    pub u: Array4<f64>,
    pub d_star: Array2<f64>,
}

impl ReachTable {
    #[inline]
    pub fn conditional(&self, h: usize, s: usize, t: usize, s1: usize) -> f64 {
        self.u[[h, s, t, s1]]
    }
}

/// Conditional reach for one target `(h, s)` over all earlier `(t, s1)`,
/// by backward induction: the base case is the indicator of the target,
/// each earlier step takes the best available action.
pub fn conditional_reach(mdp: &TabularMdp, target_h: usize, target_s: usize) -> Array2<f64> {
    let ss = mdp.num_states;
    let mut table = Array2::zeros((target_h + 1, ss));
    for s1 in 0..ss {
        table[[target_h, s1]] = if s1 == target_s { 1.0 } else { 0.0 };
    }
    for t in (0..target_h).rev() {
        for s1 in 0..ss {
            let mut best = 0.0f64;
            for a in 0..mdp.num_actions {
                if !mdp.is_available(t, s1, a) {
                    continue;
                }
                let mut p = 0.0;
                for s2 in 0..ss {
                    let k = mdp.kernel[[t, s1, a, s2]];
                    if k > 0.0 {
                        p += k * table[[t + 1, s2]];
                    }
                }
                best = best.max(p);
            }
            table[[t, s1]] = best;
        }
    }
    table
}

/// Full reach table for every target `(h, s)`.
pub fn optimal_reach(mdp: &TabularMdp) -> ReachTable {
    let (hh, ss) = (mdp.horizon, mdp.num_states);
    let mut u = Array4::zeros((hh, ss, hh, ss));
    let mut d_star = Array2::zeros((hh, ss));
    for h in 0..hh {
        for s in 0..ss {
            let table = conditional_reach(mdp, h, s);
            for t in 0..=h {
                for s1 in 0..ss {
                    u[[h, s, t, s1]] = table[[t, s1]];
                }
            }
            d_star[[h, s]] = (0..ss).map(|s1| mdp.init[s1] * table[[0, s1]]).sum();
        }
    }
    ReachTable { u, d_star }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs;
    use crate::mdp::{occupancy_of_policy, MarkovPolicy};
    use ndarray::Array2 as A2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Reach of a fixed deterministic partial policy, forward simulation.
    fn forward_reach(
        mdp: &TabularMdp,
        actions: &A2<usize>,
        t: usize,
        s1: usize,
        target_h: usize,
        target_s: usize,
    ) -> f64 {
        let ss = mdp.num_states;
        let mut dist = vec![0.0; ss];
        dist[s1] = 1.0;
        for step in t..target_h {
            let mut next = vec![0.0; ss];
            for s in 0..ss {
                if dist[s] == 0.0 {
                    continue;
                }
                let a = actions[[step, s]];
                for s2 in 0..ss {
                    next[s2] += dist[s] * mdp.kernel[[step, s, a, s2]];
                }
            }
            dist = next;
        }
        dist[target_s]
    }

    #[test]
    fn conditional_reach_matches_partial_policy_enumeration() {
        // S=3, A=2, H=4, target step 3: 2^(3*3) = 512 partial policies.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mdp = envs::random_mdp(3, 2, 4, &mut rng);
        let target_h = 3;
        for target_s in 0..3 {
            let table = conditional_reach(&mdp, target_h, target_s);
            for t in 0..=target_h {
                for s1 in 0..3 {
                    let mut best = 0.0f64;
                    for code in 0..(1usize << 9) {
                        let mut actions = A2::zeros((mdp.horizon, 3));
                        for i in 0..9 {
                            actions[[i / 3, i % 3]] = (code >> i) & 1;
                        }
                        best = best
                            .max(forward_reach(&mdp, &actions, t, s1, target_h, target_s));
                    }
                    assert!(
                        (table[[t, s1]] - best).abs() < 1e-12,
                        "t={t} s1={s1}: {} vs {}",
                        table[[t, s1]],
                        best
                    );
                }
            }
        }
    }

    #[test]
    fn reach_chains_through_intermediate_steps() {
        // Treating u(h, s, t, .) as a step-t state reward, its optimal

        // expectation from the start equals the unconditional optimum.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mdp = envs::random_mdp(4, 3, 5, &mut rng);
        let reach = optimal_reach(&mdp);
        for h in 0..mdp.horizon {
            for s in 0..mdp.num_states {
                for t in 0..=h {
                    let trunc = crate::mdp::TabularMdp {
                        horizon: t + 1,
                        kernel: mdp.kernel.slice(ndarray::s![..t + 1, .., .., ..]).to_owned(),
                        available: None,
                        ..mdp.clone()
                    };
                    let (best, _) = crate::mdp::state_reward_dp(&trunc, |hh, s1, _a| {
                        if hh == t {
                            reach.u[[h, s, t, s1]]
                        } else {
                            0.0
                        }
                    });
                    assert!(
                        (best - reach.d_star[[h, s]]).abs() < 1e-12,
                        "h={h} s={s} t={t}: {best} vs {}",
                        reach.d_star[[h, s]]
                    );
                }
            }
        }
    }

    #[test]
    fn deterministic_grid_reach_is_binary_on_diagonals() {
        let (mdp, _, _) = envs::grid(4).unwrap();
        let reach = optimal_reach(&mdp);
        for h in 0..mdp.horizon {
            for s in 0..mdp.num_states {
                let (i, j) = envs::grid_coords(4, s);
                let expected = if i + j == h { 1.0 } else { 0.0 };
                assert_eq!(reach.d_star[[h, s]], expected, "h={h} i={i} j={j}");
            }
        }
    }

    #[test]
    fn reach_never_below_any_single_policy() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mdp = envs::random_mdp(4, 2, 4, &mut rng);
        let reach = optimal_reach(&mdp);
        for _ in 0..20 {
            let policy = envs::random_policy(&mdp, &mut rng);
            let occ = occupancy_of_policy(&mdp, &policy);
            let so = occ.state_occupancy();
            for h in 0..mdp.horizon {
                for s in 0..mdp.num_states {
                    assert!(so[[h, s]] <= reach.d_star[[h, s]] + 1e-12);
                }
            }
        }
        // Greedy reconstruction sanity: uniform policy stays within [0, 1].
        let _ = MarkovPolicy::uniform(&mdp);
    }
}
