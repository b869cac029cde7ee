//! Competitive ratios of reward-lookahead agents: fixed expectations,
//! and exact worst cases over nonnegative reward expectations.
//!
//! The worst case factors through finitely many candidate base policies
//! for the lookahead agent. Only a candidate's state occupancies at the
//! reveal steps matter; they become per-slot weights `alpha`, and the
//! inner problem is `max_d min_slots d/alpha` over occupancy measures
//! `d` — a linear program whose dual is the minimizing reward profile.
//! Candidates that share the occupancy sequence at the choice steps are
//! deduplicated by hashing, which collapses action-independent kernels
//! to a single program.

use std::collections::{HashMap, HashSet};

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::lookahead::LookaheadSpec;
use crate::mdp::{
    occupancy_of_policy, optimal_value_no_lookahead, MarkovPolicy, OccupancyMeasure, RewardSpec,
    TabularMdp,
};
use crate::reach::{optimal_reach, ReachTable};
use crate::simplex::{solve, Cmp, LinearProgram, LpRow};
use crate::{tol, Error};

/// Default cap on enumeration nodes for the exact worst case.
pub const DEFAULT_ENUM_BUDGET: u64 = 1_000_000;
/// Default cap on programs solved by the local-search heuristic.
pub const DEFAULT_HEURISTIC_LPS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrMode {
    /// Ratio at one fixed reward-expectation profile.
    FixedR,
    /// Worst case over all nonnegative reward expectations.
    WorstExpectationNonstationary,
    /// Worst case over step-independent reward expectations.
    WorstExpectationStationary,
}

impl CrMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            CrMode::FixedR => "fixed",
            CrMode::WorstExpectationNonstationary => "worst-nonstationary",
            CrMode::WorstExpectationStationary => "worst-stationary",
        }
    }
}

/// A computed competitive ratio with its witnesses and the results of
/// the independent checks run on it.
#[derive(Debug, Clone)]
pub struct CrReport {
    pub mode: CrMode,
    pub lookahead: usize,
    /// `numerator / denominator`, the quantity being reported.
    pub ratio: f64,
    /// Best value achievable knowing only the expectations.
    pub numerator: f64,
    /// Lookahead agent's supremum value on the same rewards.
    pub denominator: f64,
    /// Reward expectations attaining the ratio (the input profile in
    /// fixed mode, the adversary's minimizer in worst-case modes).
    pub witness_rewards: Option<Array3<f64>>,
    /// Best no-lookahead policy against the witness rewards.
    pub witness_policy: Option<MarkovPolicy>,
    /// Maximizing base policy of the lookahead agent.
    pub witness_base: Option<MarkovPolicy>,
    /// All independent optimality checks passed.
    pub certified: bool,
    /// Denominator vanished; the ratio is reported as +inf.
    pub degenerate: bool,
    pub lps_solved: usize,
    pub nodes_visited: u64,
}

/// Per-slot reward weights of a lookahead agent with a fixed base
/// policy: `alpha[[h, s, a]]` is the mass the base policy holds, at the
/// step where the reward of `(h, s, a)` is revealed, on states that can
/// still reach `s` by `h`. It is the coefficient of `r[[h, s, a]]` in
/// the agent's supremum value. Zero on unavailable slots.
#[derive(Debug, Clone)]
pub struct AlphaWeights {
    pub alpha: Array3<f64>,
}

pub fn alpha_weights(
    mdp: &TabularMdp,
    reach: &ReachTable,
    spec: LookaheadSpec,
    occ_states: &Array2<f64>,
) -> AlphaWeights {
    let (hh, ss, aa) = (mdp.horizon, mdp.num_states, mdp.num_actions);
    let mut alpha = Array3::zeros((hh, ss, aa));
    for h in 0..hh {
        let t = spec.reveal_step(h);
        for s in 0..ss {
            let mut w = 0.0;
            for s1 in 0..ss {
                let mass = occ_states[[t, s1]];
                if mass > tol::UNVISITED {
                    w += mass * reach.u[[h, s, t, s1]];
                }
            }
            if w <= tol::UNVISITED {
                continue;
            }
            for a in 0..aa {
                if mdp.is_available(h, s, a) {
                    alpha[[h, s, a]] = w;
                }
            }
        }
    }
    AlphaWeights { alpha }
}

/// Result of the inner max-min program for one weight set.
#[derive(Debug, Clone)]
pub struct MaxminOutcome {
    /// `max_d min_{alpha > 0} d/alpha`, aggregated over steps in
    /// stationary mode.
    pub t_star: f64,
    pub occupancy: OccupancyMeasure,
    /// Minimizing reward expectations, scaled so `sum alpha r = 1`;
    /// constant across steps in stationary mode.
    pub worst_rewards: Array3<f64>,
    /// Primal tightness, dual recovery, and an independent dynamic
    /// program on the recovered rewards all agree with `t_star`.
    pub certified: bool,
    pub iterations: usize,
}

/// Maximizes, over occupancy measures `d` of the MDP, the minimum of
/// `d[[h, s, a]] / alpha[[h, s, a]]` across slots with positive weight
/// (stationary mode first sums both over `h`). The dual solution
/// recovers the minimizing reward expectations.
pub fn maxmin_occupancy_lp(
    mdp: &TabularMdp,
    alpha: &AlphaWeights,
    stationary: bool,
) -> Result<MaxminOutcome, Error> {
    let (hh, ss, aa) = (mdp.horizon, mdp.num_states, mdp.num_actions);
    if alpha.alpha.dim() != (hh, ss, aa) {
        return Err(Error::DimensionMismatch(format!(
            "alpha shape {:?} vs mdp {:?}",
            alpha.alpha.dim(),
            (hh, ss, aa)
        )));
    }
    let mut var = Array3::from_elem((hh, ss, aa), usize::MAX);
    let mut num_d = 0usize;
    for h in 0..hh {
        for s in 0..ss {
            for a in 0..aa {
                if mdp.is_available(h, s, a) {
                    var[[h, s, a]] = num_d;
                    num_d += 1;
                }
            }
        }
    }
    let t_var = num_d;
    let mut objective = vec![0.0; num_d + 1];
    objective[t_var] = 1.0;
    let mut rows: Vec<LpRow> = Vec::new();

    // Flow: layer 0 matches the initial distribution, each later layer
    // is the push-forward of the previous one.
    for s in 0..ss {
        let coeffs = mdp
            .available_actions(0, s)
            .into_iter()
            .map(|a| (var[[0, s, a]], 1.0))
            .collect();
        rows.push(LpRow {
            coeffs,
            cmp: Cmp::Eq,
            rhs: mdp.init[s],
        });
    }
    for h in 1..hh {
        for s2 in 0..ss {
            let mut coeffs: Vec<(usize, f64)> = mdp
                .available_actions(h, s2)
                .into_iter()
                .map(|a| (var[[h, s2, a]], 1.0))
                .collect();
            for s in 0..ss {
                for a in mdp.available_actions(h - 1, s) {
                    let p = mdp.kernel[[h - 1, s, a, s2]];
                    if p != 0.0 {
                        coeffs.push((var[[h - 1, s, a]], -p));
                    }
                }
            }
            rows.push(LpRow {
                coeffs,
                cmp: Cmp::Eq,
                rhs: 0.0,
            });
        }
    }

    // Covering rows: d >= t * alpha per weighted slot. `h == usize::MAX`
    // marks an aggregated (stationary) row.
    let mut slots: Vec<(usize, usize, usize, usize, f64)> = Vec::new();
    if stationary {
        for s in 0..ss {
            for a in 0..aa {
                let mut abar = 0.0;
                let mut coeffs: Vec<(usize, f64)> = Vec::new();
                for h in 0..hh {
                    if mdp.is_available(h, s, a) {
                        abar += alpha.alpha[[h, s, a]];
                        coeffs.push((var[[h, s, a]], 1.0));
                    }
                }
                if abar > tol::UNVISITED {
                    coeffs.push((t_var, -abar));
                    slots.push((rows.len(), usize::MAX, s, a, abar));
                    rows.push(LpRow {
                        coeffs,
                        cmp: Cmp::Ge,
                        rhs: 0.0,
                    });
                }
            }
        }
    } else {
        for h in 0..hh {
            for s in 0..ss {
                for a in 0..aa {
                    let w = alpha.alpha[[h, s, a]];
                    if w > tol::UNVISITED {
                        slots.push((rows.len(), h, s, a, w));
                        rows.push(LpRow {
                            coeffs: vec![(var[[h, s, a]], 1.0), (t_var, -w)],
                            cmp: Cmp::Ge,
                            rhs: 0.0,
                        });
                    }
                }
            }
        }
    }
    if slots.is_empty() {
        return Err(Error::Unbounded(
            "no slot carries positive weight; the ratio is vacuous".to_string(),
        ));
    }

    let sol = solve(&LinearProgram {
        num_vars: num_d + 1,
        objective,
        rows,
    })?;
    let t_star = sol.objective;

    let mut d = Array3::zeros((hh, ss, aa));
    for h in 0..hh {
        for s in 0..ss {
            for a in 0..aa {
                let v = var[[h, s, a]];
                if v != usize::MAX {
                    d[[h, s, a]] = sol.x[v];
                }
            }
        }
    }
    let occupancy = OccupancyMeasure { d };

    // Primal certificate: the covering minimum equals the objective.
    let mut primal_min = f64::INFINITY;
    for &(_row, h, s, a, w) in &slots {
        let mass = if h == usize::MAX {
            (0..hh)
                .filter(|&h2| mdp.is_available(h2, s, a))
                .map(|h2| occupancy.d[[h2, s, a]])
                .sum::<f64>()
        } else {
            occupancy.d[[h, s, a]]
        };
        primal_min = primal_min.min(mass / w);
    }

    // Dual recovery: covering-row multipliers are the minimizing reward
    // expectations up to one global sign and scale.
    let mut y: Vec<f64> = slots.iter().map(|&(row, ..)| sol.duals[row]).collect();
    let mut weighted: f64 = y.iter().zip(&slots).map(|(v, s)| v * s.4).sum();
    if weighted < 0.0 {
        for v in &mut y {
            *v = -*v;
        }
        weighted = -weighted;
    }
    let mut certified = weighted > tol::UNVISITED;
    let mut worst = Array3::zeros((hh, ss, aa));
    if certified {
        for (k, &(_row, h, s, a, _w)) in slots.iter().enumerate() {
            if y[k] < -tol::LP_CERT * weighted {
                certified = false;
            }
            let r = (y[k] / weighted).max(0.0);
            if h == usize::MAX {
                for h2 in 0..hh {
                    if mdp.is_available(h2, s, a) {
                        worst[[h2, s, a]] = r;
                    }
                }
            } else {
                worst[[h, s, a]] = r;
            }
        }
    }

    // Independent check: an exact dynamic program on the recovered
    // rewards must reproduce the objective.
    let scale = t_star.abs().max(1.0);
    if certified {
        let (v_star, _) = optimal_value_no_lookahead(mdp, &RewardSpec::deterministic(worst.clone()));
        certified &= (v_star - t_star).abs() <= tol::LP_CERT * scale;
    }
    certified &= (primal_min - t_star).abs() <= tol::LP_CERT * scale;
    certified &= occupancy.validate(mdp).is_empty();

    Ok(MaxminOutcome {
        t_star,
        occupancy,
        worst_rewards: worst,
        certified,
        iterations: sol.iterations,
    })
}

/// Competitive ratio at one fixed reward-expectation profile: the best
/// expectation-informed value over the lookahead agent's supremum value.
pub fn cr_fixed(
    mdp: &TabularMdp,
    rewards: &RewardSpec,
    lookahead: usize,
) -> Result<CrReport, Error> {
    let reach = optimal_reach(mdp);
    let (v_star, witness_policy) = optimal_value_no_lookahead(mdp, rewards);
    let lv = crate::lookahead::sup_lookahead_value(mdp, rewards, &reach, lookahead)?;
    let degenerate = lv.value <= tol::UNVISITED;
    // Division by a vanishing denominator is defined as +inf; the
    // numerator can never exceed the denominator, so this only happens
    // when both values vanish.
    let ratio = if degenerate {
        f64::INFINITY
    } else {
        v_star / lv.value
    };
    // Lookahead can only help, so the ratio must not exceed 1.
    let certified = degenerate || lv.value + tol::PROPAGATED >= v_star;
    Ok(CrReport {
        mode: CrMode::FixedR,
        lookahead,
        ratio,
        numerator: v_star,
        denominator: lv.value,
        witness_rewards: Some(rewards.expectation.clone()),
        witness_policy: Some(witness_policy),
        witness_base: Some(lv.witness_base),
        certified,
        degenerate,
        lps_solved: 0,
        nodes_visited: 0,
    })
}

const FNV_OFFSET: u128 = 0x6c62272e07bb014262b821756295c58d;
const FNV_PRIME: u128 = 0x0000000001000000000000000000013B;

#[inline]
fn fnv_u64(mut h: u128, v: u64) -> u128 {
    for b in v.to_le_bytes() {
        h ^= b as u128;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// One surviving base-policy candidate: state occupancies at steps
/// `0..=depth`, row-major.
struct PrefixLeaf {
    occ_rows: Vec<f64>,
}

struct Enumerator<'a> {
    mdp: &'a TabularMdp,
    depth: usize,
    budget: u64,
    visited: u64,
    seen: HashSet<(u32, u128)>,
    leaves: Vec<PrefixLeaf>,
}

impl Enumerator<'_> {
    fn descend(
        &mut self,
        level: usize,
        hash: u128,
        occ_rows: &mut Vec<f64>,
        actions: &mut Vec<u8>,
    ) -> Result<(), Error> {
        if level == self.depth {
            self.leaves.push(PrefixLeaf {
                occ_rows: occ_rows.clone(),
            });
            if self.leaves.len() as u64 > self.budget {
                return Err(Error::CapExceeded(format!(
                    "distinct occupancy sequences exceed the budget of {}",
                    self.budget
                )));
            }
            return Ok(());
        }
        let ss = self.mdp.num_states;
        let active: Vec<usize> = (0..ss)
            .filter(|&s| occ_rows[level * ss + s] > tol::UNVISITED)
            .collect();
        self.assign(level, 0, &active, hash, occ_rows, actions)
    }

    fn assign(
        &mut self,
        level: usize,
        k: usize,
        active: &[usize],
        hash: u128,
        occ_rows: &mut Vec<f64>,
        actions: &mut Vec<u8>,
    ) -> Result<(), Error> {
        let ss = self.mdp.num_states;
        if k == active.len() {
            let mut next = vec![0.0; ss];
            for &s in active {
                let a = actions[level * ss + s] as usize;
                let mass = occ_rows[level * ss + s];
                for s2 in 0..ss {
                    next[s2] += mass * self.mdp.kernel[[level, s, a, s2]];
                }
            }
            let mut h2 = hash;
            for v in &next {
                h2 = fnv_u64(h2, v.to_bits());
            }
            // First (lexicographically lowest) prefix wins; equal
            // hashes mean equal occupancy sequences, with identical
            // continuations.
            if !self.seen.insert(((level + 1) as u32, h2)) {
                return Ok(());
            }
            occ_rows.extend_from_slice(&next);
            let res = self.descend(level + 1, h2, occ_rows, actions);
            occ_rows.truncate((level + 1) * ss);
            return res;
        }
        let s = active[k];
        for a in self.mdp.available_actions(level, s) {
            self.visited += 1;
            if self.visited > self.budget {
                return Err(Error::CapExceeded(format!(
                    "enumeration visited more than {} nodes; raise the budget \
                     or use the heuristic",
                    self.budget
                )));
            }
            actions[level * ss + s] = a as u8;
            self.assign(level, k + 1, active, hash, occ_rows, actions)?;
        }
        actions[level * ss + s] = u8::MAX;
        Ok(())
    }
}

fn solve_leaf(
    mdp: &TabularMdp,
    reach: &ReachTable,
    spec: LookaheadSpec,
    occ_rows: &[f64],
    stationary: bool,
) -> Result<MaxminOutcome, Error> {
    let (hh, ss) = (mdp.horizon, mdp.num_states);
    let mut occ_states = Array2::zeros((hh, ss));
    for t in 0..(occ_rows.len() / ss).min(hh) {
        for s in 0..ss {
            occ_states[[t, s]] = occ_rows[t * ss + s];
        }
    }
    let alpha = alpha_weights(mdp, reach, spec, &occ_states);
    maxmin_occupancy_lp(mdp, &alpha, stationary)
}

/// Exact worst case of the competitive ratio over nonnegative reward
/// expectations (stationary ones if `stationary`), for lookahead
/// `1 <= L <= H`. Enumerates base-policy candidates through their
/// occupancy sequences at the choice steps, deduplicated by hashing;
/// `budget` caps the enumeration (default 10^6 nodes).
pub fn cr_worst_expectations(
    mdp: &TabularMdp,
    lookahead: usize,
    stationary: bool,
    budget: Option<u64>,
) -> Result<CrReport, Error> {
    let spec = LookaheadSpec::new(lookahead, mdp.horizon)?;
    if lookahead == 0 {
        return Err(Error::Domain(
            "worst-case ratio needs lookahead >= 1".to_string(),
        ));
    }
    let budget = budget.unwrap_or(DEFAULT_ENUM_BUDGET);
    let reach = optimal_reach(mdp);
    let depth = mdp.horizon - lookahead;

    let mut enumerator = Enumerator {
        mdp,
        depth,
        budget,
        visited: 0,
        seen: HashSet::new(),
        leaves: Vec::new(),
    };
    let mut occ_rows: Vec<f64> = mdp.init.iter().copied().collect();
    let mut actions = vec![u8::MAX; depth * mdp.num_states];
    enumerator.descend(0, FNV_OFFSET, &mut occ_rows, &mut actions)?;
    let leaves = enumerator.leaves;
    let visited = enumerator.visited;

    // Deterministic parallel minimum: ties go to the first leaf in
    // generation (lexicographic) order.
    let (t_best, idx) = leaves
        .par_iter()
        .enumerate()
        .map(|(i, leaf)| {
            solve_leaf(mdp, &reach, spec, &leaf.occ_rows, stationary).map(|o| (o.t_star, i))
        })
        .try_reduce(
            || (f64::INFINITY, usize::MAX),
            |a, b| {
                Ok(if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
                    b
                } else {
                    a
                })
            },
        )?;
    if idx == usize::MAX {
        return Err(Error::InvalidInput("no base-policy candidate".to_string()));
    }
    let outcome = solve_leaf(mdp, &reach, spec, &leaves[idx].occ_rows, stationary)?;
    finish_worst_case_report(
        mdp,
        &reach,
        lookahead,
        stationary,
        outcome,
        t_best,
        leaves.len() + 1,
        visited,
        true,
    )
}

#[allow(clippy::too_many_arguments)]
fn finish_worst_case_report(
    mdp: &TabularMdp,
    reach: &ReachTable,
    lookahead: usize,
    stationary: bool,
    outcome: MaxminOutcome,
    t_best: f64,
    lps_solved: usize,
    nodes_visited: u64,
    exact: bool,
) -> Result<CrReport, Error> {
    let rewards = RewardSpec::deterministic(outcome.worst_rewards.clone());
    let (numerator, witness_policy) = optimal_value_no_lookahead(mdp, &rewards);
    let lv = crate::lookahead::sup_lookahead_value(mdp, &rewards, reach, lookahead)?;
    let denominator = lv.value;
    let scale = t_best.abs().max(1.0);
    let mut certified = outcome.certified;
    // At the witness rewards the agent's supremum is normalized to 1
    // and must not be beaten by any other base policy; the recomputed
    // ratio must reproduce the program value.
    certified &= (denominator - 1.0).abs() <= tol::LP_CERT;
    certified &= denominator > tol::UNVISITED
        && (numerator / denominator - t_best).abs() <= tol::LP_CERT * scale;
    certified &= exact;
    Ok(CrReport {
        mode: if stationary {
            CrMode::WorstExpectationStationary
        } else {
            CrMode::WorstExpectationNonstationary
        },
        lookahead,
        ratio: t_best,
        numerator,
        denominator,
        witness_rewards: Some(outcome.worst_rewards),
        witness_policy: Some(witness_policy),
        witness_base: Some(lv.witness_base),
        certified,
        degenerate: false,
        lps_solved,
        nodes_visited,
    })
}

/// Local-search lower... upper estimate of the worst case: alternates
/// between solving the inner program for the current base-policy
/// candidate and greedily switching single actions, from several
/// seeded starts. Always an upper bound on the exact worst case; the
/// report is only certified when no enumeration was needed.
pub fn cr_worst_expectations_heuristic(
    mdp: &TabularMdp,
    lookahead: usize,
    stationary: bool,
    restarts: usize,
    seed: u64,
    lp_budget: Option<u64>,
) -> Result<CrReport, Error> {
    let spec = LookaheadSpec::new(lookahead, mdp.horizon)?;
    if lookahead == 0 {
        return Err(Error::Domain(
            "worst-case ratio needs lookahead >= 1".to_string(),
        ));
    }
    let budget = lp_budget.unwrap_or(DEFAULT_HEURISTIC_LPS);
    let reach = optimal_reach(mdp);
    let depth = mdp.horizon - lookahead;
    let ss = mdp.num_states;

    let occ_of = |assign: &Array2<usize>| -> Vec<f64> {
        let mut rows: Vec<f64> = mdp.init.iter().copied().collect();
        for t in 0..depth {
            let mut next = vec![0.0; ss];
            for s in 0..ss {
                let mass = rows[t * ss + s];
                if mass <= tol::UNVISITED {
                    continue;
                }
                let a = assign[[t, s]];
                for s2 in 0..ss {
                    next[s2] += mass * mdp.kernel[[t, s, a, s2]];
                }
            }
            rows.extend_from_slice(&next);
        }
        rows
    };
    let mut cache: HashMap<u128, f64> = HashMap::new();
    let mut lps = 0u64;
    let mut eval = |assign: &Array2<usize>, lps: &mut u64| -> Result<f64, Error> {
        let rows = occ_of(assign);
        let mut h = FNV_OFFSET;
        for v in &rows {
            h = fnv_u64(h, v.to_bits());
        }
        if let Some(&t) = cache.get(&h) {
            return Ok(t);
        }
        *lps += 1;
        let t = solve_leaf(mdp, &reach, spec, &rows, stationary)?.t_star;
        cache.insert(h, t);
        Ok(t)
    };

    let lowest = |t: usize, s: usize| mdp.available_actions(t, s)[0];
    let mut starts: Vec<Array2<usize>> = Vec::new();
    starts.push(Array2::from_shape_fn((depth.max(1), ss), |(t, s)| {
        if t < depth {
            lowest(t, s)
        } else {
            0
        }
    }));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..restarts {
        starts.push(Array2::from_shape_fn((depth.max(1), ss), |(t, s)| {
            if t < depth {
                let acts = mdp.available_actions(t, s);
                acts[rng.gen_range(0..acts.len())]
            } else {
                0
            }
        }));
    }

    let mut best: Option<(f64, Array2<usize>)> = None;
    'outer: for start in starts {
        let mut cur = start;
        let mut cur_t = eval(&cur, &mut lps)?;
        for _sweep in 0..20 {
            let mut improved = false;
            for t in 0..depth {
                let rows = occ_of(&cur);
                for s in 0..ss {
                    if rows[t * ss + s] <= tol::UNVISITED {
                        continue;
                    }
                    let incumbent = cur[[t, s]];
                    for a in mdp.available_actions(t, s) {
                        if a == incumbent {
                            continue;
                        }
                        if lps >= budget {
                            break 'outer;
                        }
                        let mut cand = cur.clone();
                        cand[[t, s]] = a;
                        let cand_t = eval(&cand, &mut lps)?;
                        if cand_t < cur_t - 1e-12 {
                            cur = cand;
                            cur_t = cand_t;
                            improved = true;
                        }
                    }
                }
            }
            if !improved {
                break;
            }
        }
        match &best {
            Some((b, _)) if *b <= cur_t => {}
            _ => best = Some((cur_t, cur)),
        }
    }
    let (t_best, assign) =
        best.ok_or_else(|| Error::InvalidInput("no start evaluated".to_string()))?;
    let rows = occ_of(&assign);
    let outcome = solve_leaf(mdp, &reach, spec, &rows, stationary)?;
    finish_worst_case_report(
        mdp,
        &reach,
        lookahead,
        stationary,
        outcome,
        t_best,
        (lps + 1) as usize,
        lps,
        depth == 0,
    )
}

/// Closed-form lower bounds on the worst-case ratio.
#[derive(Debug, Clone, Copy)]
pub struct AnalyticBounds {
    /// `1 / (S A H)`: one uniform policy against everything.
    pub coarse: f64,
    /// `1 / ((H - L + 1) A^L)`: mixing over window replays.
    pub windowed: f64,
}

impl AnalyticBounds {
    pub fn best(&self) -> f64 {
        self.coarse.max(self.windowed)
    }
}

pub fn analytic_lower_bound(mdp: &TabularMdp, lookahead: usize) -> AnalyticBounds {
    let s = mdp.num_states as f64;
    let a = mdp.num_actions as f64;
    let h = mdp.horizon as f64;
    let l = lookahead as f64;
    AnalyticBounds {
        coarse: 1.0 / (s * a * h),
        windowed: 1.0 / ((h - l + 1.0) * a.powf(l)),
    }
}

/// Brute-force check of the worst case: minimizes the ratio over a full
/// grid of reward profiles with entries in `{0, 1/g, ..., 1}` on the
/// reachable available slots (rewards elsewhere cannot matter). Both the
/// numerator and the denominator are maxima of precomputed per-policy
/// linear forms, updated incrementally while the grid odometer advances.
#[derive(Debug, Clone)]
pub struct GridOracleOutcome {
    pub min_ratio: f64,
    pub argmin_rewards: Array3<f64>,
    pub points: u64,
    pub free_dims: usize,
    pub policies: usize,
}

pub fn reward_grid_oracle(
    mdp: &TabularMdp,
    lookahead: usize,
    grid: usize,
    max_points: u64,
) -> Result<GridOracleOutcome, Error> {
    let spec = LookaheadSpec::new(lookahead, mdp.horizon)?;
    if lookahead == 0 || grid == 0 {
        return Err(Error::Domain(
            "grid oracle needs lookahead >= 1 and grid >= 1".to_string(),
        ));
    }
    let reach = optimal_reach(mdp);
    let (hh, ss, aa) = (mdp.horizon, mdp.num_states, mdp.num_actions);

    let mut dims: Vec<(usize, usize, usize)> = Vec::new();
    let mut reachable: Vec<(usize, usize)> = Vec::new();
    for h in 0..hh {
        for s in 0..ss {
            if reach.d_star[[h, s]] <= tol::UNVISITED {
                continue;
            }
            reachable.push((h, s));
            for a in mdp.available_actions(h, s) {
                dims.push((h, s, a));
            }
        }
    }
    let levels = (grid + 1) as u64;
    let mut total: u64 = 1;
    for _ in 0..dims.len() {
        total = total
            .checked_mul(levels)
            .filter(|&t| t <= max_points)
            .ok_or_else(|| {
                Error::CapExceeded(format!(
                    "grid has (g+1)^dims = {}^{} points, over the cap of {}",
                    levels,
                    dims.len(),
                    max_points
                ))
            })?;
    }

    // Deterministic policies over the reachable states; elsewhere the
    // lowest action. Distinct weight profiles only.
    let mut policy_count: u64 = 1;
    for &(h, s) in &reachable {
        policy_count = policy_count
            .checked_mul(mdp.available_actions(h, s).len() as u64)
            .filter(|&c| c <= 1 << 20)
            .ok_or_else(|| {
                Error::CapExceeded("too many deterministic policies for the oracle".to_string())
            })?;
    }
    let mut num_weights: Vec<Vec<f64>> = Vec::new();
    let mut den_weights: Vec<Vec<f64>> = Vec::new();
    let mut seen = HashSet::new();
    let mut choice: Vec<usize> = vec![0; reachable.len()];
    loop {
        let mut assign = Array2::zeros((hh, ss));
        for h in 0..hh {
            for s in 0..ss {
                assign[[h, s]] = mdp.available_actions(h, s)[0];
            }
        }
        for (k, &(h, s)) in reachable.iter().enumerate() {
            assign[[h, s]] = mdp.available_actions(h, s)[choice[k]];
        }
        let policy = MarkovPolicy::from_actions(&assign, aa);
        let occ = occupancy_of_policy(mdp, &policy);
        let alpha = alpha_weights(mdp, &reach, spec, &occ.state_occupancy());
        let w: Vec<f64> = dims.iter().map(|&(h, s, a)| occ.d[[h, s, a]]).collect();
        let v: Vec<f64> = dims.iter().map(|&(h, s, a)| alpha.alpha[[h, s, a]]).collect();
        let mut hash = FNV_OFFSET;
        for x in w.iter().chain(v.iter()) {
            hash = fnv_u64(hash, x.to_bits());
        }
        if seen.insert(hash) {
            num_weights.push(w);
            den_weights.push(v);
        }
        // Odometer over policy choices.
        let mut k = 0;
        loop {
            if k == reachable.len() {
                break;
            }
            choice[k] += 1;
            let (h, s) = reachable[k];
            if choice[k] < mdp.available_actions(h, s).len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
        if k == reachable.len() {
            break;
        }
    }
    let np = num_weights.len();

    // Walk the reward grid with one running dot product per policy.
    let step = 1.0 / grid as f64;
    let mut digits: Vec<usize> = vec![0; dims.len()];
    let mut cur_num = vec![0.0f64; np];
    let mut cur_den = vec![0.0f64; np];
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut points: u64 = 0;
    loop {
        points += 1;
        let num = cur_num.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let den = cur_den.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if den > tol::UNVISITED {
            let ratio = num / den;
            if best.as_ref().map_or(true, |(b, _)| ratio < *b) {
                best = Some((ratio, digits.clone()));
            }
        }
        let mut k = 0;
        loop {
            if k == dims.len() {
                break;
            }
            digits[k] += 1;
            if digits[k] <= grid {
                for p in 0..np {
                    cur_num[p] += num_weights[p][k] * step;
                    cur_den[p] += den_weights[p][k] * step;
                }
                break;
            }
            digits[k] = 0;
            for p in 0..np {
                cur_num[p] -= num_weights[p][k];
                cur_den[p] -= den_weights[p][k];
            }
            k += 1;
        }
        if k == dims.len() {
            break;
        }
    }
    let (_, best_digits) = best.ok_or_else(|| {
        Error::InvalidInput("no grid point had a positive denominator".to_string())
    })?;

    // Recompute the argmin exactly, free of incremental drift.
    let mut argmin = Array3::zeros((hh, ss, aa));
    for (k, &(h, s, a)) in dims.iter().enumerate() {
        argmin[[h, s, a]] = best_digits[k] as f64 * step;
    }
    let mut num = f64::NEG_INFINITY;
    let mut den = f64::NEG_INFINITY;
    for p in 0..np {
        let mut nv = 0.0;
        let mut dv = 0.0;
        for (k, &(h, s, a)) in dims.iter().enumerate() {
            nv += num_weights[p][k] * argmin[[h, s, a]];
            dv += den_weights[p][k] * argmin[[h, s, a]];
        }
        num = num.max(nv);
        den = den.max(dv);
    }
    Ok(GridOracleOutcome {
        min_ratio: num / den,
        argmin_rewards: argmin,
        points,
        free_dims: dims.len(),
        policies: np,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs;
    use crate::mdp::RewardFamily;
    use ndarray::Array1;

    #[test]
    fn maxmin_single_slot_recovers_reach() {
        let mdp = envs::random_mdp(3, 2, 4, &mut ChaCha8Rng::seed_from_u64(5));
        let reach = optimal_reach(&mdp);
        for (h0, s0, a0, w) in [(2, 1, 0, 1.0), (3, 2, 1, 2.0), (1, 0, 1, 0.5)] {
            let mut alpha = Array3::zeros((4, 3, 2));
            alpha[[h0, s0, a0]] = w;
            let out = maxmin_occupancy_lp(&mdp, &AlphaWeights { alpha }, false).unwrap();
            let expect = reach.d_star[[h0, s0]] / w;
            assert!(
                (out.t_star - expect).abs() < 1e-8,
                "slot ({h0},{s0},{a0}): {} vs {}",
                out.t_star,
                expect
            );
            assert!(out.certified);
        }
    }

    #[test]
    fn action_independent_kernel_gives_exactly_one_over_a() {
        let mdp = envs::disguised_bandit(2, 3, 3, 17);
        for l in 1..=3 {
            let report = cr_worst_expectations(&mdp, l, false, None).unwrap();
            assert!(
                (report.ratio - 1.0 / 3.0).abs() < 1e-9,
                "L={l}: {}",
                report.ratio
            );
            assert!(report.certified, "L={l}");
            // Dedup must collapse all action choices into one program.
            assert_eq!(report.lps_solved, 2, "L={l}");
        }
    }

    #[test]
    fn chain_fixed_ratio_is_reciprocal_of_slots() {
        let (mdp, rewards, desc) = envs::chain(3, 2, 1.0).unwrap();
        let expect = desc.bound("cr_fixed_equal_rewards").unwrap();
        for l in [1usize, 3] {
            let report = cr_fixed(&mdp, &rewards, l).unwrap();
            assert!(
                (report.ratio - expect).abs() < 1e-12,
                "L={l}: {} vs {expect}",
                report.ratio
            );
            assert!(report.certified);
            assert!(!report.degenerate);
        }
    }

    #[test]
    fn worst_case_is_at_most_any_fixed_profile() {
        let (mdp, rewards, _) = envs::chain(3, 2, 1.0).unwrap();
        let fixed = cr_fixed(&mdp, &rewards, 3).unwrap();
        let worst = cr_worst_expectations(&mdp, 3, false, None).unwrap();
        assert!(worst.ratio <= fixed.ratio + 1e-9);
        assert!(worst.certified);
    }

    #[test]
    fn stationary_adversary_is_weaker() {
        let mdp = envs::random_mdp(3, 2, 3, &mut ChaCha8Rng::seed_from_u64(23));
        for l in 1..=3 {
            let ns = cr_worst_expectations(&mdp, l, false, None).unwrap();
            let st = cr_worst_expectations(&mdp, l, true, None).unwrap();
            assert!(
                st.ratio >= ns.ratio - 1e-9,
                "L={l}: stationary {} < nonstationary {}",
                st.ratio,
                ns.ratio
            );
            assert!(ns.certified && st.certified, "L={l}");
        }
    }

    #[test]
    fn analytic_bounds_hold_on_random_instances() {
        for seed in [3u64, 4, 5] {
            let mdp = envs::random_mdp(2, 2, 3, &mut ChaCha8Rng::seed_from_u64(seed));
            for l in 1..=3 {
                let report = cr_worst_expectations(&mdp, l, false, None).unwrap();
                let bounds = analytic_lower_bound(&mdp, l);
                assert!(
                    report.ratio >= bounds.best() - 1e-9,
                    "seed={seed} L={l}: {} < {}",
                    report.ratio,
                    bounds.best()
                );
                assert!(report.ratio <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn witness_rewards_reproduce_the_ratio_through_the_dp() {
        let mdp = envs::disguised_bandit(2, 2, 3, 41);
        let report = cr_worst_expectations(&mdp, 2, false, None).unwrap();
        let witness = RewardSpec::deterministic(report.witness_rewards.clone().unwrap());
        let reach = optimal_reach(&mdp);
        let (v_star, _) = optimal_value_no_lookahead(&mdp, &witness);
        let lv = crate::lookahead::sup_lookahead_value(&mdp, &witness, &reach, 2).unwrap();
        assert!((v_star / lv.value - report.ratio).abs() < 1e-8);
    }

    #[test]
    fn heuristic_upper_bounds_exact_and_matches_at_full_lookahead() {
        let mdp = envs::random_mdp(3, 2, 3, &mut ChaCha8Rng::seed_from_u64(9));
        for l in 1..=3 {
            let exact = cr_worst_expectations(&mdp, l, false, None).unwrap();
            let heur = cr_worst_expectations_heuristic(&mdp, l, false, 2, 7, None).unwrap();
            assert!(
                heur.ratio >= exact.ratio - 1e-9,
                "L={l}: {} < {}",
                heur.ratio,
                exact.ratio
            );
            if l == 3 {
                assert!((heur.ratio - exact.ratio).abs() < 1e-9);
                assert!(heur.certified);
            } else {
                assert!(!heur.certified);
            }
        }
    }

    #[test]
    fn grid_oracle_bounds_the_exact_worst_case() {
        let mut kernel = ndarray::Array4::zeros((2, 2, 2, 2));
        for h in 0..2 {
            for s in 0..2 {
                kernel[[h, s, 0, 0]] = 1.0;
                kernel[[h, s, 1, 1]] = 1.0;
            }
        }
        let mdp = TabularMdp::new(kernel, Array1::from_vec(vec![1.0, 0.0]), true).unwrap();
        for l in [1usize, 2] {
            let exact = cr_worst_expectations(&mdp, l, false, None).unwrap();
            let oracle = reward_grid_oracle(&mdp, l, 8, 100_000_000).unwrap();
            assert!(
                oracle.min_ratio >= exact.ratio - 1e-8,
                "L={l}: oracle {} below exact {}",
                oracle.min_ratio,
                exact.ratio
            );
            // A grid of step 1/8 comes close on this instance.
            assert!(
                oracle.min_ratio <= exact.ratio + 0.2,
                "L={l}: oracle {} far above exact {}",
                oracle.min_ratio,
                exact.ratio
            );
        }
    }

    #[test]
    fn grid_oracle_respects_its_cap() {
        let mdp = envs::random_mdp(3, 2, 4, &mut ChaCha8Rng::seed_from_u64(2));
        match reward_grid_oracle(&mdp, 1, 16, 1000) {
            Err(Error::CapExceeded(_)) => {}
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn enumeration_budget_is_enforced() {
        let mdp = envs::random_mdp(3, 3, 4, &mut ChaCha8Rng::seed_from_u64(3));
        match cr_worst_expectations(&mdp, 1, false, Some(50)) {
            Err(Error::CapExceeded(_)) => {}
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn long_shot_family_keeps_expectations_for_the_ratio() {
        // The fixed-mode ratio only reads expectations; families with
        // equal expectations agree.
        let (mdp, rewards, _) = envs::delayed_tree(2, 1, 4, 0.1).unwrap();
        let det = RewardSpec::deterministic(rewards.expectation.clone());
        let a = cr_fixed(&mdp, &rewards, 2).unwrap();
        let b = cr_fixed(&mdp, &det, 2).unwrap();
        assert_eq!(a.ratio, b.ratio);
        assert!(matches!(rewards.family, RewardFamily::LongShot { .. }));
    }
}
