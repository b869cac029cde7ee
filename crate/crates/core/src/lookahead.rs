//! Worst-case-distribution lookahead values via the modified-reward
//! reduction to a plain no-lookahead control problem.

use ndarray::Array2;

use crate::mdp::{MarkovPolicy, RewardSpec, TabularMdp};
use crate::reach::ReachTable;
use crate::Error;

/// Lookahead depth `L`, with the reveal-step map.
///
/// With lookahead `L >= 1`, the realized rewards of step `h` become
/// visible at step `max(h - L + 1, 0)`: step 0 starts with steps
/// `0..L` already visible, and each later step reveals exactly one new
/// step until the horizon is exhausted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LookaheadSpec {
    pub lookahead: usize,
}

impl LookaheadSpec {
    pub fn new(lookahead: usize, horizon: usize) -> Result<Self, Error> {
        if lookahead > horizon {
            return Err(Error::Domain(format!(
                "lookahead {lookahead} exceeds horizon {horizon}"
            )));
        }
        Ok(Self { lookahead })
    }

    /// Step at which the rewards of step `h` become visible.
    #[inline]
    pub fn reveal_step(&self, h: usize) -> usize {
        h.saturating_sub(self.lookahead.saturating_sub(1))
    }

    /// Steps whose rewards are revealed while standing at step `t`:
    /// at `t = 0` the initial window `0..L`, later the single step
    /// `t + L - 1` if it exists.
    pub fn revealed_at(&self, t: usize, horizon: usize) -> std::ops::Range<usize> {
        let l = self.lookahead;
        if l == 0 {
            0..0
        } else if t == 0 {
            0..l.min(horizon)
        } else {
            let h = t + l - 1;
            if h < horizon {
                h..h + 1
            } else {
                h..h
            }
        }
    }
}

/// State rewards of the reduced control problem: `rtilde[[t, s1]]` collects
/// every reward entry revealed at step `t`, weighted by the best conditional
/// reach of its location from `(t, s1)`. Unavailable actions contribute
/// nothing. The reduced value `max_pi sum_t E[rtilde_t(s_t)]` equals the
/// supremum of the lookahead value over reward distributions with the given
/// expectations.
pub fn modified_reward(
    mdp: &TabularMdp,
    rewards: &RewardSpec,
    reach: &ReachTable,
    spec: LookaheadSpec,
) -> Array2<f64> {
    let (hh, ss) = (mdp.horizon, mdp.num_states);
    let mut rtilde = Array2::zeros((hh, ss));
    for t in 0..hh {
        for h in spec.revealed_at(t, hh) {
            for s in 0..ss {
                let mut entry_sum = 0.0;
                for a in 0..mdp.num_actions {
                    if mdp.is_available(h, s, a) {
                        entry_sum += rewards.expectation[[h, s, a]];
                    }
                }
                if entry_sum == 0.0 {
                    continue;
                }
                for s1 in 0..ss {
                    let u = reach.u[[h, s, t, s1]];
                    if u > 0.0 {
                        rtilde[[t, s1]] += u * entry_sum;
                    }
                }
            }
        }
    }
    rtilde
}

/// Result of the lookahead-value computation. The value is a supremum
/// over reward distributions with the given expectations, attained only
/// in a long-shot limit; `long_shot_factor` is the certified fraction of
/// the supremum achieved at the finite long-shot parameter of the input,
/// when the input is a long-shot family.
#[derive(Debug, Clone)]
pub struct LookaheadValue {
    pub value: f64,
    pub witness_base: MarkovPolicy,
    pub long_shot_factor: Option<f64>,
}

/// Supremum of the `L`-lookahead value over reward distributions with
/// the expectations of `rewards`, with a maximizing base policy.
///
/// `L = 0` reduces to the optimal no-lookahead value; `L = 1` weighs
/// each state by the sum of its action rewards; `L = H` yields the
/// full-information bound `sum d_star r`.
pub fn sup_lookahead_value(
    mdp: &TabularMdp,
    rewards: &RewardSpec,
    reach: &ReachTable,
    lookahead: usize,
) -> Result<LookaheadValue, Error> {
    let spec = LookaheadSpec::new(lookahead, mdp.horizon)?;
    let (value, witness) = if lookahead == 0 {
        crate::mdp::optimal_value_no_lookahead(mdp, rewards)
    } else {
        let rtilde = modified_reward(mdp, rewards, reach, spec);
        // State rewards are action-independent: collect, then optimize
        // the continuation. state_reward_dp adds the reward per action,
        // which is equivalent since every action collects the same.
        crate::mdp::state_reward_dp(mdp, |t, s1, _a| rtilde[[t, s1]])
    };
    let long_shot_factor = match rewards.family {
        crate::mdp::RewardFamily::LongShot { epsilon } => {
            Some((1.0 - epsilon).powi(mdp.num_entries() as i32 - 1))
        }
        _ => None,
    };
    Ok(LookaheadValue {
        value,
        witness_base: witness,
        long_shot_factor,
    })
}
