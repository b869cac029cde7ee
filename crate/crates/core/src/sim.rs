//! Monte Carlo simulators and an exact dynamic program for the value a
//! lookahead agent actually achieves under a concrete reward
//! distribution, as opposed to the supremum over distributions.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::envs::TransitionTree;
use crate::lookahead::LookaheadSpec;
use crate::mdp::{MarkovPolicy, RewardSpec, TabularMdp};
use crate::reach::{optimal_reach, ReachTable};
use crate::Error;

/// Total table entries the exact windowed dynamic program may allocate.
pub const EXACT_DP_CAP: usize = 10_000_000;

/// One sampled trajectory. `states` has one more entry than `actions`.
#[derive(Debug, Clone)]
pub struct EpisodeTrace {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub total: f64,
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub episodes: u64,
    /// Nominal coverage of [`McEstimate::half_width`].
    pub confidence_level: f64,
}

impl McEstimate {
    fn from_moments(sum: f64, sumsq: f64, n: u64) -> Self {
        let nf = n as f64;
        let mean = sum / nf;
        let var = ((sumsq - sum * sum / nf) / (nf - 1.0)).max(0.0);
        McEstimate {
            mean,
            std_error: (var / nf).sqrt(),
            episodes: n,
            confidence_level: 0.99,
        }
    }

    /// Half-width of the central interval at the stored confidence level.
    pub fn half_width(&self) -> f64 {
        // Normal quantile for two-sided 0.99.
        2.575_829_303_548_9 * self.std_error
    }
}

fn sample_from<R: Rng>(rng: &mut R, probs: impl Iterator<Item = f64>) -> usize {
    let draw = rng.gen::<f64>();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        acc += p;
        last = i;
        if draw < acc {
            return i;
        }
    }
    last
}

fn sample_reward<R: Rng>(rng: &mut R, values: &[f64], probs: &[f64]) -> f64 {
    if values.len() == 1 {
        return values[0];
    }
    values[sample_from(rng, probs.iter().copied())]
}

/// Samples one trajectory of `policy`, drawing rewards from the family.
pub fn sample_episode<R: Rng>(
    mdp: &TabularMdp,
    rewards: &RewardSpec,
    policy: &MarkovPolicy,
    rng: &mut R,
) -> EpisodeTrace {
    let mut states = Vec::with_capacity(mdp.horizon + 1);
    let mut actions = Vec::with_capacity(mdp.horizon);
    let mut collected = Vec::with_capacity(mdp.horizon);
    let mut s = sample_from(rng, mdp.init.iter().copied());
    states.push(s);
    let mut total = 0.0;
    for h in 0..mdp.horizon {
        let a = sample_from(rng, (0..mdp.num_actions).map(|a| policy.probs[[h, s, a]]));
        let (values, probs) = rewards.entry_support(h, s, a);
        let r = sample_reward(rng, &values, &probs);
        total += r;
        let s2 = sample_from(rng, (0..mdp.num_states).map(|s2| mdp.kernel[[h, s, a, s2]]));
        actions.push(a);
        collected.push(r);
        states.push(s2);
        s = s2;
    }
    EpisodeTrace {
        states,
        actions,
        rewards: collected,
        total,
    }
}

/// Stochastic reward slots, in lexicographic `(h, s, a)` order.
fn stochastic_entries(mdp: &TabularMdp, rewards: &RewardSpec) -> Vec<StochEntry> {
    let mut out = Vec::new();
    for h in 0..mdp.horizon {
        for s in 0..mdp.num_states {
            for a in mdp.available_actions(h, s) {
                let (values, probs) = rewards.entry_support(h, s, a);
                if values.len() > 1 {
                    out.push(StochEntry {
                        h,
                        s,
                        a,
                        values,
                        probs,
                    });
                }
            }
        }
    }
    out
}

struct StochEntry {
    h: usize,
    s: usize,
    a: usize,
    values: Vec<f64>,
    probs: Vec<f64>,
}

/// Simulates the greedy lookahead agent: it follows `base` until some
/// stochastic slot inside the visible window realizes a positive value
/// and is still reachable, then navigates to the first such slot in
/// `(h, s, a)` order along maximal-reach actions and plays its action
/// on arrival. Per-episode randomness comes from a counter-based
/// substream of `seed`, so results don't depend on thread scheduling.
pub fn simulate_greedy_lookahead(
    mdp: &TabularMdp,
    rewards: &RewardSpec,
    base: &MarkovPolicy,
    lookahead: usize,
    episodes: u64,
    seed: u64,
) -> Result<McEstimate, Error> {
    LookaheadSpec::new(lookahead, mdp.horizon)?;
    if episodes < 2 {
        return Err(Error::Domain("need at least 2 episodes".to_string()));
    }
    let reach = optimal_reach(mdp);
    let entries = stochastic_entries(mdp, rewards);
    let chunks: Vec<(u64, u64)> = (0..episodes)
        .step_by(1024)
        .map(|lo| (lo, (lo + 1024).min(episodes)))
        .collect();
    let moments: Vec<(f64, f64)> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            let mut realized = vec![0.0; entries.len()];
            for ep in lo..hi {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(ep);
                for (k, e) in entries.iter().enumerate() {
                    realized[k] = sample_reward(&mut rng, &e.values, &e.probs);
                }
                let total = greedy_episode(
                    mdp, rewards, base, &reach, lookahead, &entries, &realized, &mut rng,
                );
                sum += total;
                sumsq += total * total;
            }
            (sum, sumsq)
        })
        .collect();
    let (sum, sumsq) = moments
        .iter()
        .fold((0.0, 0.0), |acc, m| (acc.0 + m.0, acc.1 + m.1));
    Ok(McEstimate::from_moments(sum, sumsq, episodes))
}

#[allow(clippy::too_many_arguments)]
fn greedy_episode<R: Rng>(
    mdp: &TabularMdp,
    rewards: &RewardSpec,
    base: &MarkovPolicy,
    reach: &ReachTable,
    lookahead: usize,
    entries: &[StochEntry],
    realized: &[f64],
    rng: &mut R,
) -> f64 {
    let mut s = sample_from(rng, mdp.init.iter().copied());
    let mut total = 0.0;
    for h in 0..mdp.horizon {
        let visible_end = (h + lookahead).min(mdp.horizon);
        // First realized-positive stochastic slot still reachable from
        // here; the entry list is already in (h, s, a) order.
        let target = entries
            .iter()
            .enumerate()
            .filter(|(k, e)| {
                e.h >= h && e.h < visible_end && realized[*k] > 0.0 && reach.u[[e.h, e.s, h, s]] > 0.0
            })
            .map(|(_, e)| e)
            .next();
        let a = match target {
            None => sample_from(rng, (0..mdp.num_actions).map(|a| base.probs[[h, s, a]])),
            Some(e) if e.h == h => e.a, // reach filter implies s == e.s
            Some(e) => {
                let mut best = (f64::NEG_INFINITY, 0);
                for a in mdp.available_actions(h, s) {
                    let q: f64 = (0..mdp.num_states)
                        .map(|s2| mdp.kernel[[h, s, a, s2]] * reach.u[[e.h, e.s, h + 1, s2]])
                        .sum();
                    if q > best.0 {
                        best = (q, a);
                    }
                }
                best.1
            }
        };
        let (values, probs) = rewards.entry_support(h, s, a);
        // A slot's realization is fixed within the episode: reuse the
        // pre-drawn value for stochastic slots.
        let r = match entries
            .iter()
            .position(|e| e.h == h && e.s == s && e.a == a)
        {
            Some(k) => realized[k],
            None => sample_reward(rng, &values, &probs),
        };
        total += r;
        s = sample_from(rng, (0..mdp.num_states).map(|s2| mdp.kernel[[h, s, a, s2]]));
    }
    total
}

/// Per-step reward randomness for the exact dynamic program.
struct StepSpace {
    /// Stochastic slots of the step with supports.
    entries: Vec<(usize, usize, Vec<f64>, Vec<f64>)>,
    /// Product of support sizes.
    w: usize,
    /// Probability of each joint configuration.
    config_probs: Vec<f64>,
    /// Slot index per `(s, a)`, `usize::MAX` for deterministic slots.
    slot: Array2<usize>,
}

impl StepSpace {
    fn build(mdp: &TabularMdp, rewards: &RewardSpec, h: usize) -> Result<StepSpace, Error> {
        let mut entries = Vec::new();
        let mut slot = Array2::from_elem((mdp.num_states, mdp.num_actions), usize::MAX);
        for s in 0..mdp.num_states {
            for a in mdp.available_actions(h, s) {
                let (values, probs) = rewards.entry_support(h, s, a);
                if values.len() > 1 {
                    slot[[s, a]] = entries.len();
                    entries.push((s, a, values, probs));
                }
            }
        }
        let mut w: usize = 1;
        for e in &entries {
            w = w
                .checked_mul(e.2.len())
                .filter(|&w| w <= EXACT_DP_CAP)
                .ok_or_else(|| {
                    Error::CapExceeded(format!(
                        "step {h} alone has more than {EXACT_DP_CAP} reward configurations"
                    ))
                })?;
        }
        let mut config_probs = vec![1.0; w];
        let mut stride = 1;
        for (_, _, values, probs) in &entries {
            let size = values.len();
            for (c, cp) in config_probs.iter_mut().enumerate() {
                *cp *= probs[(c / stride) % size];
            }
            stride *= size;
        }
        Ok(StepSpace {
            entries,
            w,
            config_probs,
            slot,
        })
    }

    /// Realized reward of `(s, a)` under configuration `c`.
    fn value(&self, rewards: &RewardSpec, h: usize, s: usize, a: usize, c: usize) -> f64 {
        let k = self.slot[[s, a]];
        if k == usize::MAX {
            return rewards.expectation[[h, s, a]];
        }
        let mut stride = 1;
        for (i, e) in self.entries.iter().enumerate() {
            if i == k {
                return e.2[(c / stride) % e.2.len()];
            }
            stride *= e.2.len();
        }
        unreachable!("slot index out of range")
    }
}

/// Averages out the last (least significant) configuration axis.
fn average_last(table: &[f64], keep: usize, w_last: usize, probs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; keep];
    for (q, o) in out.iter_mut().enumerate() {
        let base = q * w_last;
        let mut acc = 0.0;
        for c in 0..w_last {
            acc += probs[c] * table[base + c];
        }
        *o = acc;
    }
    out
}

/// Exact value of the optimal `L`-lookahead agent under the concrete
/// reward distribution of `rewards`, by dynamic programming over
/// `(step, state, visible window configuration)`. Only stochastic slots
/// enter the configuration space; the total table size is capped at
/// [`EXACT_DP_CAP`] entries.
pub fn exact_lookahead_value(
    mdp: &TabularMdp,
    rewards: &RewardSpec,
    lookahead: usize,
) -> Result<f64, Error> {
    LookaheadSpec::new(lookahead, mdp.horizon)?;
    if lookahead == 0 {
        return Ok(crate::mdp::optimal_value_no_lookahead(mdp, rewards).0);
    }
    let (hh, ss) = (mdp.horizon, mdp.num_states);
    let steps: Vec<StepSpace> = (0..hh)
        .map(|h| StepSpace::build(mdp, rewards, h))
        .collect::<Result<_, _>>()?;
    let mut total_entries: u128 = 0;
    for t in 0..hh {
        let mut lw: u128 = 1;
        for h in t..(t + lookahead).min(hh) {
            lw = lw.saturating_mul(steps[h].w as u128);
        }
        total_entries = total_entries.saturating_add(lw.saturating_mul(ss as u128));
        if total_entries > EXACT_DP_CAP as u128 {
            return Err(Error::CapExceeded(format!(
                "windowed tables need more than {EXACT_DP_CAP} entries"
            )));
        }
    }

    // `avg_next[s * m_rest + rest]`: continuation at step t+1 with the
    // newly revealed step already averaged out; `rest` runs over the
    // configurations of steps `t+1 .. min(t+L, H)`.
    let mut avg_next: Vec<f64> = vec![0.0; ss];
    let mut m_rest: usize = 1;
    for t in (0..hh).rev() {
        let e = (t + lookahead).min(hh);
        let w_t = steps[t].w;
        let m = w_t * m_rest;
        let mut v_t = vec![f64::NEG_INFINITY; ss * m];
        for c_t in 0..w_t {
            for s in 0..ss {
                for rest in 0..m_rest {
                    let mut best = f64::NEG_INFINITY;
                    for a in mdp.available_actions(t, s) {
                        let mut q = steps[t].value(rewards, t, s, a, c_t);
                        for s2 in 0..ss {
                            let p = mdp.kernel[[t, s, a, s2]];
                            if p != 0.0 {
                                q += p * avg_next[s2 * m_rest + rest];
                            }
                        }
                        if q > best {
                            best = q;
                        }
                    }
                    v_t[s * m + c_t * m_rest + rest] = best;
                }
            }
        }
        // Hand the previous step a table over `t .. min(t-1+L, H)`: if
        // the window was not truncated, average out its last step.
        if t + lookahead <= hh {
            let w_last = steps[e - 1].w;
            avg_next = average_last(&v_t, ss * m / w_last, w_last, &steps[e - 1].config_probs);
            m_rest = m / w_last;
        } else {
            avg_next = v_t;
            m_rest = m;
        }
    }
    // Average the remaining initial-window steps and mix over the start.
    // The t = 0 iteration above already averaged out step L-1 whenever
    // the window was untruncated there, so only steps 0..min(L-1, H)
    // are still present in the table.
    let mut table = avg_next;
    let mut keep = m_rest;
    for h in (0..(lookahead - 1).min(hh)).rev() {
        let w_last = steps[h].w;
        if w_last == 0 {
            return Err(Error::InvalidInput("empty support product".to_string()));
        }
        table = average_last(&table, ss * keep / w_last, w_last, &steps[h].config_probs);
        keep /= w_last;
    }
    debug_assert_eq!(keep, 1);
    debug_assert_eq!(table.len(), ss);
    Ok((0..ss).map(|s| mdp.init[s] * table[s]).sum())
}

/// Simulates agents on the uniform-descent tree: `lookahead = 0` is the
/// blind descender, `lookahead = 1` sees each action's realized
/// destination before choosing and waits at the current node until some
/// action realizes the on-path child.
pub fn simulate_transition_lookahead(
    tree: &TransitionTree,
    lookahead: usize,
    episodes: u64,
    seed: u64,
) -> Result<McEstimate, Error> {
    if lookahead > 1 {
        return Err(Error::Domain(
            "transition simulator supports lookahead 0 or 1".to_string(),
        ));
    }
    if episodes < 2 {
        return Err(Error::Domain("need at least 2 episodes".to_string()));
    }
    let horizon = tree.mdp.horizon;
    let branch = tree.mdp.num_actions - 1;
    let chunks: Vec<(u64, u64)> = (0..episodes)
        .step_by(1024)
        .map(|lo| (lo, (lo + 1024).min(episodes)))
        .collect();
    let moments: Vec<(f64, f64)> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut sum = 0.0;
            for ep in lo..hi {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(ep);
                let mut node = 0usize;
                let mut level = 0usize;
                let mut collected = 0.0;
                for _h in 0..horizon {
                    let children = &tree.children[node];
                    if children.is_empty() {
                        if node == tree.rewarding_leaf {
                            collected = 1.0;
                        }
                        break;
                    }
                    if lookahead == 0 {
                        node = children[rng.gen_range(0..children.len())];
                        level += 1;
                    } else {
                        // One realized destination per descend action;
                        // move on the first that stays on the path.
                        let mut moved = false;
                        for _a in 1..=branch {
                            let dest = children[rng.gen_range(0..children.len())];
                            if !moved && dest == tree.path[level + 1] {
                                node = dest;
                                level += 1;
                                moved = true;
                            }
                        }
                    }
                }
                sum += collected;
            }
            (sum, 0.0)
        })
        .collect();
    let sum: f64 = moments.iter().map(|m| m.0).sum();
    // Bernoulli outcomes: the second moment equals the first.
    Ok(McEstimate::from_moments(sum, sum, episodes))
}
