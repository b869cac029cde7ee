//! Acceptance gate: ten numbered criteria, each printing one PASS/FAIL
//! line with its runtime. Tolerances and runtime budgets are pinned in
//! the code next to each check. A criterion fails loudly with every
//! violated clause listed; nothing is skipped or weakened.

use std::time::{Duration, Instant};

use lookahead_cr::envs;
use lookahead_cr::{
    analytic_lower_bound, cr_fixed, cr_worst_expectations, exact_lookahead_value,
    maxmin_occupancy_lp, occupancy_of_policy, optimal_reach, reward_grid_oracle,
    simulate_transition_lookahead, sup_lookahead_value, AlphaWeights, RewardSpec, TabularMdp,
};
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Criterion {
    num: usize,
    name: &'static str,
    budget: Duration,
    started: Instant,
    failures: Vec<String>,
}

impl Criterion {
    fn new(num: usize, name: &'static str, budget_secs: u64) -> Self {
        Criterion {
            num,
            name,
            budget: Duration::from_secs(budget_secs),
            started: Instant::now(),
            failures: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(msg());
        }
    }

    fn finish(mut self) {
        let elapsed = self.started.elapsed();
        if elapsed > self.budget {
            self.failures.push(format!(
                "runtime {elapsed:.1?} exceeds the {:?} budget",
                self.budget
            ));
        }
        if self.failures.is_empty() {
            eprintln!(
                "[acceptance] criterion {:02} ({}): PASS [{elapsed:.1?}]",
                self.num, self.name
            );
        } else {
            eprintln!(
                "[acceptance] criterion {:02} ({}): FAIL [{elapsed:.1?}]",
                self.num, self.name
            );
            for f in &self.failures {
                eprintln!("    - {f}");
            }
            panic!(
                "criterion {:02} ({}) failed with {} violation(s)",
                self.num,
                self.name,
                self.failures.len()
            );
        }
    }
}

#[test]
fn criterion_01_action_independent_kernels_reduce_to_bandits() {
    let mut c = Criterion::new(1, "action-independent kernels reduce to bandits", 10);
    for &a in &[2usize, 3, 4, 5] {
        for &s in &[2usize, 3] {
            for &h in &[2usize, 4] {
                for seed in 0..5u64 {
                    let mdp = envs::disguised_bandit(s, a, h, seed * 1000 + (a * 16 + s * 4 + h) as u64);
                    for lookahead in [1, h] {
                        let report = cr_worst_expectations(&mdp, lookahead, false, None).unwrap();
                        let target = 1.0 / a as f64;
                        c.check(report.certified, || {
                            format!("A={a} S={s} H={h} seed={seed} L={lookahead}: not certified")
                        });
                        c.check((report.ratio - target).abs() <= 1e-8, || {
                            format!(
                                "A={a} S={s} H={h} seed={seed} L={lookahead}: ratio {} vs 1/A = {target}",
                                report.ratio
                            )
                        });
                    }
                }
            }
        }
    }
    c.finish();
}

#[test]
fn criterion_02_chain_ratios_match_the_slot_count() {
    let mut c = Criterion::new(2, "chain ratios match the slot count", 30);
    for h in 2..=6usize {
        for &a in &[2usize, 3] {
            let (mdp, rewards, _) = envs::chain(h, a, 1.0).unwrap();
            let target = 1.0 / ((a - 1) * h) as f64;
            for lookahead in [1, h] {
                let report = cr_fixed(&mdp, &rewards, lookahead).unwrap();
                c.check((report.ratio - target).abs() <= 1e-9, || {
                    format!(
                        "H={h} A={a} L={lookahead}: fixed ratio {} vs {target}",
                        report.ratio
                    )
                });
            }
            let worst = cr_worst_expectations(&mdp, h, false, None).unwrap();
            let lo = (1.0 - std::f64::consts::E.recip()) / (a * h) as f64;
            c.check(worst.certified, || format!("H={h} A={a}: not certified"));
            c.check(
                worst.ratio >= lo - 1e-8 && worst.ratio <= target + 1e-8,
                || {
                    format!(
                        "H={h} A={a}: worst-case ratio {} outside [{lo}, {target}]",
                        worst.ratio
                    )
                },
            );
        }
    }
    c.finish();
}

#[test]
fn criterion_03_grid_flow_floor_and_full_lookahead_bound() {
    let mut c = Criterion::new(3, "grid flow floor and full-lookahead bound", 60);
    for n in 3..=6usize {
        let (mdp, _, _) = envs::grid(n).unwrap();
        let policy = envs::grid_flow_policy(n).unwrap();
        let occ = occupancy_of_policy(&mdp, &policy);
        let reach = optimal_reach(&mdp);
        let floor = 1.0 / (2 * (n - 1)) as f64;

        // Edge flow: occupancy of every available action at every
        // reachable cell.
        let mut min_flow = f64::INFINITY;
        for h in 0..mdp.horizon {
            for s in 0..mdp.num_states {
                if reach.d_star[[h, s]] <= 1e-12 {
                    continue;
                }
                for a in mdp.available_actions(h, s) {
                    min_flow = min_flow.min(occ.d[[h, s, a]]);
                }
            }
        }
        c.check(min_flow >= floor - 1e-9, || {
            format!("n={n}: min edge flow {min_flow} under the floor {floor}")
        });

        // States strictly inside the grid hold 1/(n-1) mass at their
        // own diagonal step.
        for i in 1..n - 1 {
            for j in 1..n - 1 {
                let s = envs::grid_index(n, i, j);
                let h = i + j;
                let mass: f64 = (0..mdp.num_actions).map(|a| occ.d[[h, s, a]]).sum();
                let want = 1.0 / (n - 1) as f64;
                c.check((mass - want).abs() <= 1e-9, || {
                    format!("n={n} cell ({i},{j}): occupancy {mass} vs {want}")
                });
            }
        }

        let report = cr_worst_expectations(&mdp, mdp.horizon, false, None).unwrap();
        let bound = 1.0 / (mdp.horizon - 1) as f64;
        c.check(report.certified, || format!("n={n}: not certified"));
        c.check(report.ratio >= bound - 1e-8, || {
            format!(
                "n={n}: full-lookahead worst case {} under 1/(H-1) = {bound}",
                report.ratio
            )
        });
    }
    c.finish();
}

#[test]
fn criterion_04_grid_dense_reward_window_counts() {
    let mut c = Criterion::new(4, "grid dense-reward window counts", 10);
    for n in [3usize, 4, 5] {
        let (mdp, _, _) = envs::grid(n).unwrap();
        let h = mdp.horizon;
        let ones = RewardSpec::deterministic(Array3::from_elem(
            (h, mdp.num_states, mdp.num_actions),
            1.0,
        ));
        for lookahead in 1..=h {
            let report = cr_fixed(&mdp, &ones, lookahead).unwrap();
            let l = lookahead as f64;
            let hf = h as f64;
            let ratio_floor = 1.0 / (l + 1.0);
            let sup_cap = hf * (l + 1.0);
            let tail = (hf - 2.0 * l - 1.0) * (l + 1.0);
            let sup_floor = l * l + tail.max(0.0);
            c.check(report.ratio >= ratio_floor - 1e-9, || {
                format!(
                    "n={n} L={lookahead}: ratio {} under 1/(L+1) = {ratio_floor}",
                    report.ratio
                )
            });
            c.check(report.denominator <= sup_cap + 1e-9, || {
                format!(
                    "n={n} L={lookahead}: supremum {} above the cap H(L+1) = {sup_cap}",
                    report.denominator
                )
            });
            c.check(report.denominator >= sup_floor - 1e-9, || {
                format!(
                    "n={n} L={lookahead}: supremum {} under the floor L^2+max((H-2L-1)(L+1),0) = {sup_floor}",
                    report.denominator
                )
            });
        }
    }
    c.finish();
}

#[test]
fn criterion_05_delayed_tree_values_and_ratio_caps() {
    let mut c = Criterion::new(5, "delayed-tree values and ratio caps", 300);
    for &n in &[0usize, 1] {
        for &h in &[4usize, 6] {
            for &eps in &[0.05f64, 0.01] {
                let (mdp, rewards, _) = envs::delayed_tree(2, n, h, eps).unwrap();
                let slots = ((h - n) * (2 - 1) * (1 << n)) as f64;
                let exact = exact_lookahead_value(&mdp, &rewards, h).unwrap();
                let floor = 1.0 - (1.0 - eps).powf(slots);
                c.check(exact >= floor - 1e-9, || {
                    format!("n={n} H={h} eps={eps}: exact value {exact} under {floor}")
                });
                let report = cr_fixed(&mdp, &rewards, h).unwrap();
                let cap = 1.0 / (slots - slots * slots * eps);
                c.check(report.ratio <= cap + 1e-9, || {
                    format!(
                        "n={n} H={h} eps={eps}: fixed ratio {} above the cap {cap}",
                        report.ratio
                    )
                });
            }
        }
    }
    c.finish();
}

#[test]
fn criterion_06_universal_lower_bounds_on_random_mdps() {
    let mut c = Criterion::new(6, "universal lower bounds on random instances", 600);
    let mut rng = ChaCha8Rng::seed_from_u64(2026);
    for i in 0..200 {
        let s = rng.gen_range(1..=3);
        let a = rng.gen_range(1..=3);
        let h = rng.gen_range(1..=3);
        let mdp = envs::random_mdp(s, a, h, &mut rng);
        for lookahead in 1..=h {
            let report = cr_worst_expectations(&mdp, lookahead, false, None).unwrap();
            let bound = analytic_lower_bound(&mdp, lookahead).best();
            c.check(report.certified, || {
                format!("instance {i} (S={s} A={a} H={h}) L={lookahead}: not certified")
            });
            c.check(report.ratio >= bound - 1e-8, || {
                format!(
                    "instance {i} (S={s} A={a} H={h}) L={lookahead}: ratio {} under {bound}",
                    report.ratio
                )
            });
        }
    }
    c.finish();
}

#[test]
fn criterion_07_long_shot_sandwich_on_random_instances() {
    let mut c = Criterion::new(7, "long-shot sandwich on random instances", 300);
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    for i in 0..20 {
        let s = rng.gen_range(1..=2);
        let a = rng.gen_range(1..=2);
        let h = rng.gen_range(2..=3);
        let mdp = envs::random_mdp(s, a, h, &mut rng);
        let expectation =
            Array3::from_shape_fn((h, s, a), |_| 0.05 + 0.95 * rng.gen::<f64>());
        let entries = (s * a * h) as f64;
        let reach = optimal_reach(&mdp);
        for &eps in &[0.2f64, 0.05, 0.01] {
            let rewards = RewardSpec::long_shot(expectation.clone(), eps).unwrap();
            let factor = (1.0 - eps).powf(entries - 1.0);
            let mut lookaheads = vec![1usize, 2, h];
            lookaheads.dedup();
            for lookahead in lookaheads {
                let sup = sup_lookahead_value(&mdp, &rewards, &reach, lookahead).unwrap();
                let exact = exact_lookahead_value(&mdp, &rewards, lookahead).unwrap();
                c.check(factor * sup.value <= exact + 1e-9, || {
                    format!(
                        "instance {i} eps={eps} L={lookahead}: discounted supremum {} above exact {exact}",
                        factor * sup.value
                    )
                });
                c.check(exact <= sup.value + 1e-9, || {
                    format!(
                        "instance {i} eps={eps} L={lookahead}: exact {exact} above supremum {}",
                        sup.value
                    )
                });
                if let Some(lsf) = sup.long_shot_factor {
                    c.check((lsf - factor).abs() <= 1e-12, || {
                        format!("instance {i} eps={eps}: reported factor {lsf} vs {factor}")
                    });
                }
            }
        }
    }
    c.finish();
}

#[test]
fn criterion_08_grid_search_oracle_converges_to_the_lp() {
    let mut c = Criterion::new(8, "reward-grid oracle converges to the LP optimum", 600);
    // (S, A, H, slots to mask away). Masking keeps the free dimension
    // count at or below 7 so the finest grid stays enumerable.
    let shapes: [(usize, usize, usize, usize); 20] = [
        (1, 2, 2, 0),
        (2, 2, 1, 0),
        (1, 3, 2, 0),
        (3, 2, 1, 0),
        (1, 2, 3, 0),
        (2, 3, 1, 0),
        (2, 2, 2, 1),
        (2, 2, 2, 2),
        (1, 4, 2, 1),
        (4, 2, 1, 1),
        (2, 4, 1, 2),
        (1, 2, 2, 0),
        (2, 2, 1, 0),
        (1, 3, 2, 0),
        (3, 2, 1, 0),
        (1, 2, 3, 0),
        (2, 3, 1, 0),
        (2, 2, 2, 1),
        (1, 4, 2, 1),
        (4, 2, 1, 1),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    for (i, &(s, a, h, masked)) in shapes.iter().enumerate() {
        let mut mdp = envs::random_mdp(s, a, h, &mut rng);
        if masked > 0 {
            let mut available = Array3::from_elem((h, s, a), true);
            let mut dropped = 0;
            while dropped < masked {
                let hh = rng.gen_range(0..h);
                let ss = rng.gen_range(0..s);
                if available[[hh, ss, a - 1]] {
                    available[[hh, ss, a - 1]] = false;
                    dropped += 1;
                }
            }
            mdp = mdp.with_availability(available).unwrap();
        }
        let mut lookaheads = vec![h];
        if i < 2 && h >= 2 {
            lookaheads.push(1);
        }
        for lookahead in lookaheads {
            let exact = cr_worst_expectations(&mdp, lookahead, false, None).unwrap();
            let mut last = f64::INFINITY;
            let mut finest = f64::INFINITY;
            for g in [2usize, 4, 8, 16] {
                let out = reward_grid_oracle(&mdp, lookahead, g, 1_000_000_000).unwrap();
                c.check(out.min_ratio <= last + 1e-12, || {
                    format!(
                        "instance {i} L={lookahead} g={g}: refinement raised the minimum {last} -> {}",
                        out.min_ratio
                    )
                });
                last = out.min_ratio;
                finest = out.min_ratio;
            }
            c.check(finest >= exact.ratio - 1e-8, || {
                format!(
                    "instance {i} L={lookahead}: grid minimum {finest} under the exact {}",
                    exact.ratio
                )
            });
            c.check(finest <= exact.ratio + 0.1, || {
                format!(
                    "instance {i} L={lookahead}: grid minimum {finest} not within 0.1 of {}",
                    exact.ratio
                )
            });
        }
    }
    c.finish();
}

#[test]
fn criterion_09_transition_lookahead_agents_split() {
    let mut c = Criterion::new(9, "transition-lookahead agents split", 120);
    let tree = envs::transition_lookahead_tree(3, 9).unwrap();
    let episodes = 100_000u64;
    let blind = simulate_transition_lookahead(&tree, 0, episodes, 90).unwrap();
    let informed = simulate_transition_lookahead(&tree, 1, episodes, 91).unwrap();

    let informed_floor = 1.0 - (-2.0f64).exp();
    c.check(
        informed.mean >= informed_floor - 3.0 * informed.std_error,
        || {
            format!(
                "informed value {} under {informed_floor} - 3se ({})",
                informed.mean, informed.std_error
            )
        },
    );
    c.check(blind.mean <= 0.125 + 3.0 * blind.std_error, || {
        format!(
            "blind value {} above 1/8 + 3se ({})",
            blind.mean, blind.std_error
        )
    });

    let ratio = blind.mean / informed.mean;
    let se_ratio = ratio
        * ((blind.std_error / blind.mean).powi(2)
            + (informed.std_error / informed.mean).powi(2))
        .sqrt();
    let frac = 1.0 - std::f64::consts::E.recip();
    let cap = 2.0 / 2.0f64.powf(frac * 9.0 - 3.0);
    c.check(ratio <= cap + 3.0 * se_ratio, || {
        format!("value ratio {ratio} above the cap {cap} + 3se ({se_ratio})")
    });
    c.finish();
}

/// Occupancy by a plain forward pass, independent of the library code.
fn occupancy_by_hand(mdp: &TabularMdp, probs: &Array3<f64>) -> Array3<f64> {
    let (hh, ss, aa) = (mdp.horizon, mdp.num_states, mdp.num_actions);
    let mut d = Array3::zeros((hh, ss, aa));
    let mut state: Vec<f64> = (0..ss).map(|s| mdp.init[s]).collect();
    for h in 0..hh {
        for s in 0..ss {
            for a in 0..aa {
                d[[h, s, a]] = state[s] * probs[[h, s, a]];
            }
        }
        let mut next = vec![0.0; ss];
        for s in 0..ss {
            for a in 0..aa {
                if d[[h, s, a]] > 0.0 {
                    for s2 in 0..ss {
                        next[s2] += d[[h, s, a]] * mdp.kernel[[h, s, a, s2]];
                    }
                }
            }
        }
        state = next;
    }
    d
}

fn best_reach_by_hand(mdp: &TabularMdp, target_h: usize, target_s: usize) -> f64 {
    let ss = mdp.num_states;
    let mut v = vec![0.0; ss];
    v[target_s] = 1.0;
    for h in (0..target_h).rev() {
        let mut prev = vec![0.0; ss];
        for s in 0..ss {
            let mut best = 0.0f64;
            for a in 0..mdp.num_actions {
                let q: f64 = (0..ss).map(|s2| mdp.kernel[[h, s, a, s2]] * v[s2]).sum();
                best = best.max(q);
            }
            prev[s] = best;
        }
        v = prev;
    }
    (0..ss).map(|s| mdp.init[s] * v[s]).sum()
}

#[test]
fn criterion_10_specialized_formulas_match_the_general_pipeline() {
    let mut c = Criterion::new(10, "specialized formulas match the general pipeline", 60);
    let mut rng = ChaCha8Rng::seed_from_u64(31337);
    for i in 0..100 {
        let s = rng.gen_range(1..=2);
        let a = rng.gen_range(1..=2);
        let h = rng.gen_range(1..=3);
        let mdp = envs::random_mdp(s, a, h, &mut rng);

        // One-step specialization: the denominator weight of every slot
        // is the base policy's own state mass at that step. Minimize by
        // scanning every deterministic base policy directly.
        let cells = s * h;
        let mut one_step = f64::INFINITY;
        for code in 0..a.pow(cells as u32) {
            let mut probs = Array3::zeros((h, s, a));
            let mut rest = code;
            for hh in 0..h {
                for ss0 in 0..s {
                    probs[[hh, ss0, rest % a]] = 1.0;
                    rest /= a;
                }
            }
            let d = occupancy_by_hand(&mdp, &probs);
            let mut alpha = Array3::zeros((h, s, a));
            for hh in 0..h {
                for ss0 in 0..s {
                    let mass: f64 = (0..a).map(|aa0| d[[hh, ss0, aa0]]).sum();
                    for aa0 in 0..a {
                        alpha[[hh, ss0, aa0]] = mass;
                    }
                }
            }
            let out = maxmin_occupancy_lp(&mdp, &AlphaWeights { alpha }, false).unwrap();
            one_step = one_step.min(out.t_star);
        }
        let general = cr_worst_expectations(&mdp, 1, false, None).unwrap();
        c.check((general.ratio - one_step).abs() <= 1e-10, || {
            format!(
                "instance {i} (S={s} A={a} H={h}) L=1: pipeline {} vs specialized {one_step}",
                general.ratio
            )
        });

        // Full-lookahead specialization: denominator weights are the
        // best-reach probabilities, one LP, no outer minimization.
        let mut alpha = Array3::zeros((h, s, a));
        for hh in 0..h {
            for ss0 in 0..s {
                let reach = best_reach_by_hand(&mdp, hh, ss0);
                for aa0 in 0..a {
                    alpha[[hh, ss0, aa0]] = reach;
                }
            }
        }
        let full = maxmin_occupancy_lp(&mdp, &AlphaWeights { alpha }, false).unwrap();
        let general = cr_worst_expectations(&mdp, h, false, None).unwrap();
        c.check((general.ratio - full.t_star).abs() <= 1e-10, || {
            format!(
                "instance {i} (S={s} A={a} H={h}) L=H: pipeline {} vs specialized {}",
                general.ratio, full.t_star
            )
        });

        // Full-information value: the supremum matches the closed form
        // summing reach-weighted expectations.
        let rewards = envs::random_rewards(&mdp, &mut rng);
        let reach_table = optimal_reach(&mdp);
        let sup = sup_lookahead_value(&mdp, &rewards, &reach_table, h).unwrap();
        let closed: f64 = rewards
            .expectation
            .indexed_iter()
            .map(|((hh, ss0, _), &r)| best_reach_by_hand(&mdp, hh, ss0) * r)
            .sum();
        c.check((sup.value - closed).abs() <= 1e-10, || {
            format!("instance {i}: supremum {} vs closed form {closed}", sup.value)
        });
    }
    c.finish();
}
