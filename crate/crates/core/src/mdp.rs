//! Tabular MDP core: types, validation, occupancy measures, exact planning.

use ndarray::{Array1, Array2, Array3, Array4};

use crate::{tol, Error};

/// One failed invariant found by a `validate` call. `index` names the
/// offending entry, `magnitude` the size of the deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub check: &'static str,
    pub index: String,
    pub magnitude: f64,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} at {}: deviation {:.3e}",
            self.check, self.index, self.magnitude
        )
    }
}

/// Finite-horizon tabular MDP with a step-indexed kernel.
///
/// `kernel[[h, s, a, s2]]` is the probability of moving to `s2` when
/// playing `a` in `s` at step `h`. `available` optionally restricts the
/// action set per `(h, s)`; `None` means every action is available.
/// Kernel rows must be valid distributions even for unavailable actions
/// so that the dense array stays well-formed.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    /// Shape `(H, S, A, S)`.
    pub kernel: Array4<f64>,
    /// Initial state distribution, shape `(S,)`.
    pub init: Array1<f64>,
    /// Declares that `kernel[h] == kernel[0]` for all `h`.
    pub stationary_kernel: bool,
    /// Shape `(H, S, A)`; `None` means all actions available.
    pub available: Option<Array3<bool>>,
}

impl TabularMdp {
    pub fn new(
        kernel: Array4<f64>,
        init: Array1<f64>,
        stationary_kernel: bool,
    ) -> Result<Self, Error> {
        let (h, s, _a, s2) = kernel.dim();
        if s != s2 || s != init.len() || h == 0 || s == 0 {
            return Err(Error::DimensionMismatch(format!(
                "kernel {:?} vs init {}",
                kernel.dim(),
                init.len()
            )));
        }
        Ok(Self {
            num_states: s,
            num_actions: kernel.dim().2,
            horizon: h,
            kernel,
            init,
            stationary_kernel,
            available: None,
        })
    }

    pub fn with_availability(mut self, available: Array3<bool>) -> Result<Self, Error> {
        if available.dim() != (self.horizon, self.num_states, self.num_actions) {
            return Err(Error::DimensionMismatch(format!(
                "availability {:?} vs mdp ({}, {}, {})",
                available.dim(),
                self.horizon,
                self.num_states,
                self.num_actions
            )));
        }
        self.available = Some(available);
        Ok(self)
    }

    #[inline]
    pub fn is_available(&self, h: usize, s: usize, a: usize) -> bool {
        match &self.available {
            None => true,
            Some(av) => av[[h, s, a]],
        }
    }

    /// Indices of actions available at `(h, s)`, ascending.
    pub fn available_actions(&self, h: usize, s: usize) -> Vec<usize> {
        (0..self.num_actions)
            .filter(|&a| self.is_available(h, s, a))
            .collect()
    }

    /// Number of `(h, s, a)` entries, availability ignored.
    pub fn num_entries(&self) -> usize {
        self.horizon * self.num_states * self.num_actions
    }

    /// Checks every construction invariant; returns all violations found.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let (hh, ss, aa, _) = self.kernel.dim();
        for h in 0..hh {
            for s in 0..ss {
                for a in 0..aa {
                    let mut sum = 0.0;
                    let mut min = f64::INFINITY;
                    for s2 in 0..ss {
                        let p = self.kernel[[h, s, a, s2]];
                        sum += p;
                        min = min.min(p);
                    }
                    if (sum - 1.0).abs() > tol::CONSTRUCT {
                        out.push(Violation {
                            check: "kernel_row_sum",
                            index: format!("h={h},s={s},a={a}"),
                            magnitude: (sum - 1.0).abs(),
                        });
                    }
                    if min < -tol::CONSTRUCT {
                        out.push(Violation {
                            check: "kernel_nonneg",
                            index: format!("h={h},s={s},a={a}"),
                            magnitude: -min,
                        });
                    }
                }
            }
        }
        let mu_sum: f64 = self.init.sum();
        if (mu_sum - 1.0).abs() > tol::CONSTRUCT {
            out.push(Violation {
                check: "init_sum",
                index: "mu".to_string(),
                magnitude: (mu_sum - 1.0).abs(),
            });
        }
        for s in 0..ss {
            if self.init[s] < -tol::CONSTRUCT {
                out.push(Violation {
                    check: "init_nonneg",
                    index: format!("s={s}"),
                    magnitude: -self.init[s],
                });
            }
        }
        if self.stationary_kernel {
            for h in 1..hh {
                let mut dev: f64 = 0.0;
                for s in 0..ss {
                    for a in 0..aa {
                        for s2 in 0..ss {
                            dev = dev
                                .max((self.kernel[[h, s, a, s2]] - self.kernel[[0, s, a, s2]]).abs());
                        }
                    }
                }
                if dev > tol::CONSTRUCT {
                    out.push(Violation {
                        check: "stationary_kernel",
                        index: format!("h={h}"),
                        magnitude: dev,
                    });
                }
            }
        }
        if let Some(av) = &self.available {
            for h in 0..hh {
                for s in 0..ss {
                    if (0..aa).all(|a| !av[[h, s, a]]) {
                        out.push(Violation {
                            check: "availability_nonempty",
                            index: format!("h={h},s={s}"),
                            magnitude: 1.0,
                        });
                    }
                }
            }
        }
        out
    }
}

/// Discrete reward support for one `(h, s, a)` entry.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSupport {
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
}

impl DiscreteSupport {
    pub fn mean(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.probs)
            .map(|(v, p)| v * p)
            .sum()
    }
}

/// Per-entry reward distribution family.
#[derive(Debug, Clone)]
pub enum RewardFamily {
    /// Reward equals its expectation almost surely.
    Deterministic,
    /// Long-shot: value `r/epsilon` with probability `epsilon`, else 0
    /// (entries with `r = 0` are deterministically 0).
    LongShot { epsilon: f64 },
    /// Arbitrary finite support per entry; entries independent.
    FiniteSupport { support: Array3<DiscreteSupport> },
}

/// Reward specification: expectations plus a distribution family.
/// Rewards are independent across `(h, s, a)`; within-step correlation
/// is outside the model and rejected by the simulation oracles.
#[derive(Debug, Clone)]
pub struct RewardSpec {
    /// Shape `(H, S, A)`.
    pub expectation: Array3<f64>,
    pub family: RewardFamily,
    /// Declares that `expectation[h] == expectation[0]` for all `h`.
    pub stationary_reward: bool,
}

impl RewardSpec {
    pub fn deterministic(expectation: Array3<f64>) -> Self {
        let stationary = is_stationary3(&expectation);
        Self {
            expectation,
            family: RewardFamily::Deterministic,
            stationary_reward: stationary,
        }
    }

    pub fn long_shot(expectation: Array3<f64>, epsilon: f64) -> Result<Self, Error> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::Domain(format!("epsilon {epsilon} not in (0, 1]")));
        }
        let stationary = is_stationary3(&expectation);
        Ok(Self {
            expectation,
            family: RewardFamily::LongShot { epsilon },
            stationary_reward: stationary,
        })
    }

    /// Support of entry `(h, s, a)` as `(values, probs)` with zero-probability
    /// outcomes pruned. Deterministic entries collapse to one outcome.
    pub fn entry_support(&self, h: usize, s: usize, a: usize) -> (Vec<f64>, Vec<f64>) {
        let r = self.expectation[[h, s, a]];
        match &self.family {
            RewardFamily::Deterministic => (vec![r], vec![1.0]),
            RewardFamily::LongShot { epsilon } => {
                if r == 0.0 {
                    (vec![0.0], vec![1.0])
                } else if *epsilon >= 1.0 {
                    (vec![r], vec![1.0])
                } else {
                    (vec![0.0, r / epsilon], vec![1.0 - epsilon, *epsilon])
                }
            }
            RewardFamily::FiniteSupport { support } => {
                let sup = &support[[h, s, a]];
                let mut values = Vec::new();
                let mut probs = Vec::new();
                for (v, p) in sup.values.iter().zip(&sup.probs) {
                    if *p > 0.0 {
                        values.push(*v);
                        probs.push(*p);
                    }
                }
                (values, probs)
            }
        }
    }

    pub fn validate(&self, mdp: &TabularMdp) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.expectation.dim() != (mdp.horizon, mdp.num_states, mdp.num_actions) {
            out.push(Violation {
                check: "reward_shape",
                index: format!("{:?}", self.expectation.dim()),
                magnitude: f64::NAN,
            });
            return out;
        }
        if self.stationary_reward && !is_stationary3(&self.expectation) {
            out.push(Violation {
                check: "stationary_reward",
                index: "r".to_string(),
                magnitude: 1.0,
            });
        }
        if let RewardFamily::LongShot { epsilon } = self.family {
            if !(epsilon > 0.0 && epsilon <= 1.0) {
                out.push(Violation {
                    check: "longshot_epsilon",
                    index: "epsilon".to_string(),
                    magnitude: epsilon,
                });
            }
        }
        if let RewardFamily::FiniteSupport { support } = &self.family {
            if support.dim() != self.expectation.dim() {
                out.push(Violation {
                    check: "support_shape",
                    index: format!("{:?}", support.dim()),
                    magnitude: f64::NAN,
                });
                return out;
            }
            for ((h, s, a), sup) in support.indexed_iter() {
                let psum: f64 = sup.probs.iter().sum();
                if (psum - 1.0).abs() > tol::CONSTRUCT {
                    out.push(Violation {
                        check: "support_prob_sum",
                        index: format!("h={h},s={s},a={a}"),
                        magnitude: (psum - 1.0).abs(),
                    });
                }
                let dev = (sup.mean() - self.expectation[[h, s, a]]).abs();
                if dev > tol::PROPAGATED {
                    out.push(Violation {
                        check: "support_mean",
                        index: format!("h={h},s={s},a={a}"),
                        magnitude: dev,
                    });
                }
            }
        }
        out
    }
}

fn is_stationary3(arr: &Array3<f64>) -> bool {
    let (h, s, a) = arr.dim();
    for hh in 1..h {
        for ss in 0..s {
            for aa in 0..a {
                if arr[[hh, ss, aa]] != arr[[0, ss, aa]] {
                    return false;
                }
            }
        }
    }
    true
}

/// Markov policy: `probs[[h, s, a]]` is the probability of playing `a`
/// in `s` at step `h`. Rows sum to 1 and put no mass on unavailable
/// actions of the MDP they are validated against.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovPolicy {
    pub probs: Array3<f64>,
    pub deterministic: bool,
}

impl MarkovPolicy {
    /// Uniform over available actions at every `(h, s)`.
    pub fn uniform(mdp: &TabularMdp) -> Self {
        let mut probs = Array3::zeros((mdp.horizon, mdp.num_states, mdp.num_actions));
        for h in 0..mdp.horizon {
            for s in 0..mdp.num_states {
                let acts = mdp.available_actions(h, s);
                for &a in &acts {
                    probs[[h, s, a]] = 1.0 / acts.len() as f64;
                }
            }
        }
        Self {
            probs,
            deterministic: false,
        }
    }

    /// Deterministic policy from an action table `actions[[h, s]]`.
    pub fn from_actions(actions: &Array2<usize>, num_actions: usize) -> Self {
        let (h, s) = actions.dim();
        let mut probs = Array3::zeros((h, s, num_actions));
        for hh in 0..h {
            for ss in 0..s {
                probs[[hh, ss, actions[[hh, ss]]]] = 1.0;
            }
        }
        Self {
            probs,
            deterministic: true,
        }
    }

    /// Action table of a deterministic policy (argmax row entry).
    pub fn actions(&self) -> Array2<usize> {
        let (h, s, a) = self.probs.dim();
        let mut out = Array2::zeros((h, s));
        for hh in 0..h {
            for ss in 0..s {
                let mut best = 0;
                for aa in 1..a {
                    if self.probs[[hh, ss, aa]] > self.probs[[hh, ss, best]] {
                        best = aa;
                    }
                }
                out[[hh, ss]] = best;
            }
        }
        out
    }

    pub fn validate(&self, mdp: &TabularMdp) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.probs.dim() != (mdp.horizon, mdp.num_states, mdp.num_actions) {
            out.push(Violation {
                check: "policy_shape",
                index: format!("{:?}", self.probs.dim()),
                magnitude: f64::NAN,
            });
            return out;
        }
        for h in 0..mdp.horizon {
            for s in 0..mdp.num_states {
                let mut sum = 0.0;
                for a in 0..mdp.num_actions {
                    let p = self.probs[[h, s, a]];
                    sum += p;
                    if p < -tol::CONSTRUCT {
                        out.push(Violation {
                            check: "policy_nonneg",
                            index: format!("h={h},s={s},a={a}"),
                            magnitude: -p,
                        });
                    }
                    if p > tol::CONSTRUCT && !mdp.is_available(h, s, a) {
                        out.push(Violation {
                            check: "policy_unavailable_action",
                            index: format!("h={h},s={s},a={a}"),
                            magnitude: p,
                        });
                    }
                }
                if (sum - 1.0).abs() > tol::CONSTRUCT {
                    out.push(Violation {
                        check: "policy_row_sum",
                        index: format!("h={h},s={s}"),
                        magnitude: (sum - 1.0).abs(),
                    });
                }
            }
        }
        out
    }
}

/// Occupancy measure `d[[h, s, a]]`: probability of being in `s` and
/// playing `a` at step `h`. Layers sum to 1 and satisfy the flow
/// constraints of the generating MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure {
    pub d: Array3<f64>,
}

impl OccupancyMeasure {
    /// State occupancy `d_h(s)` summed over actions.
    pub fn state_occupancy(&self) -> Array2<f64> {
        let (h, s, _a) = self.d.dim();
        let mut out = Array2::zeros((h, s));
        for ((hh, ss, _), v) in self.d.indexed_iter() {
            out[[hh, ss]] += v;
        }
        out
    }

    pub fn validate(&self, mdp: &TabularMdp) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.d.dim() != (mdp.horizon, mdp.num_states, mdp.num_actions) {
            out.push(Violation {
                check: "occupancy_shape",
                index: format!("{:?}", self.d.dim()),
                magnitude: f64::NAN,
            });
            return out;
        }
        let (hh, ss, aa) = self.d.dim();
        for ((h, s, a), v) in self.d.indexed_iter() {
            if *v < -tol::PROPAGATED {
                out.push(Violation {
                    check: "occupancy_nonneg",
                    index: format!("h={h},s={s},a={a}"),
                    magnitude: -*v,
                });
            }
        }
        for h in 0..hh {
            let layer: f64 = (0..ss)
                .map(|s| (0..aa).map(|a| self.d[[h, s, a]]).sum::<f64>())
                .sum();
            if (layer - 1.0).abs() > tol::PROPAGATED {
                out.push(Violation {
                    check: "occupancy_layer_sum",
                    index: format!("h={h}"),
                    magnitude: (layer - 1.0).abs(),
                });
            }
        }
        // Flow: layer 0 marginals match init; each layer pushes forward.
        for s in 0..ss {
            let m: f64 = (0..aa).map(|a| self.d[[0, s, a]]).sum();
            if (m - mdp.init[s]).abs() > tol::PROPAGATED {
                out.push(Violation {
                    check: "occupancy_init_flow",
                    index: format!("s={s}"),
                    magnitude: (m - mdp.init[s]).abs(),
                });
            }
        }
        for h in 0..hh.saturating_sub(1) {
            for s2 in 0..ss {
                let inflow: f64 = (0..ss)
                    .map(|s| {
                        (0..aa)
                            .map(|a| self.d[[h, s, a]] * mdp.kernel[[h, s, a, s2]])
                            .sum::<f64>()
                    })
                    .sum();
                let next: f64 = (0..aa).map(|a| self.d[[h + 1, s2, a]]).sum();
                if (inflow - next).abs() > tol::PROPAGATED {
                    out.push(Violation {
                        check: "occupancy_flow",
                        index: format!("h={},s'={}", h + 1, s2),
                        magnitude: (inflow - next).abs(),
                    });
                }
            }
        }
        out
    }
}

/// Occupancy measure of a Markov policy by forward recursion.
pub fn occupancy_of_policy(mdp: &TabularMdp, policy: &MarkovPolicy) -> OccupancyMeasure {
    let (hh, ss, aa) = (mdp.horizon, mdp.num_states, mdp.num_actions);
    let mut d = Array3::zeros((hh, ss, aa));
    let mut state = mdp.init.clone();
    for h in 0..hh {
        for s in 0..ss {
            for a in 0..aa {
                d[[h, s, a]] = state[s] * policy.probs[[h, s, a]];
            }
        }
        if h + 1 < hh {
            let mut next = Array1::zeros(ss);
            for s in 0..ss {
                for a in 0..aa {
                    let mass = d[[h, s, a]];
                    if mass == 0.0 {
                        continue;
                    }
                    for s2 in 0..ss {
                        next[s2] += mass * mdp.kernel[[h, s, a, s2]];
                    }
                }
            }
            state = next;
        }
    }
    OccupancyMeasure { d }
}

/// Markov policy generating a given occupancy measure. States with layer
/// mass below the unvisited threshold get uniform rows over available
/// actions; negative dust from upstream solvers is clipped to zero.
pub fn policy_from_occupancy(mdp: &TabularMdp, occ: &OccupancyMeasure) -> MarkovPolicy {
    let (hh, ss, aa) = (mdp.horizon, mdp.num_states, mdp.num_actions);
    let mut probs = Array3::zeros((hh, ss, aa));
    for h in 0..hh {
        for s in 0..ss {
            let mass: f64 = (0..aa).map(|a| occ.d[[h, s, a]].max(0.0)).sum();
            if mass > tol::UNVISITED {
                for a in 0..aa {
                    probs[[h, s, a]] = occ.d[[h, s, a]].max(0.0) / mass;
                }
            } else {
                let acts = mdp.available_actions(h, s);
                for &a in &acts {
                    probs[[h, s, a]] = 1.0 / acts.len() as f64;
                }
            }
        }
    }
    MarkovPolicy {
        probs,
        deterministic: false,
    }
}

/// Convex combination of occupancy measures. Weights must form a
/// probability vector; the result is again a valid occupancy measure.
pub fn mix_occupancies(
    occs: &[OccupancyMeasure],
    weights: &[f64],
) -> Result<OccupancyMeasure, Error> {
    if occs.is_empty() || occs.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} occupancies vs {} weights",
            occs.len(),
            weights.len()
        )));
    }
    let wsum: f64 = weights.iter().sum();
    if (wsum - 1.0).abs() > tol::CONSTRUCT || weights.iter().any(|w| *w < 0.0) {
        return Err(Error::Domain(format!(
            "weights must be a probability vector, sum {wsum}"
        )));
    }
    let dim = occs[0].d.dim();
    let mut d = Array3::zeros(dim);
    for (occ, w) in occs.iter().zip(weights) {
        if occ.d.dim() != dim {
            return Err(Error::DimensionMismatch(
                "occupancy shapes differ".to_string(),
            ));
        }
        d.scaled_add(*w, &occ.d);
    }
    Ok(OccupancyMeasure { d })
}

/// Expected return of a policy: occupancy inner product with expectations.
pub fn value_of_policy(mdp: &TabularMdp, rewards: &RewardSpec, policy: &MarkovPolicy) -> f64 {
    let occ = occupancy_of_policy(mdp, policy);
    occ.d
        .iter()
        .zip(rewards.expectation.iter())
        .map(|(d, r)| d * r)
        .sum()
}

/// Optimal expected return without lookahead, by backward induction over
/// expectations, with the maximizing deterministic policy. Argmax ties
/// break to the lowest action index.
pub fn optimal_value_no_lookahead(mdp: &TabularMdp, rewards: &RewardSpec) -> (f64, MarkovPolicy) {
    let (value, policy) = state_reward_dp(mdp, |h, s, a| rewards.expectation[[h, s, a]]);
    (value, policy)
}

/// Backward induction for action rewards given by a closure. Shared by
/// the no-lookahead optimum and the modified-reward lookahead reduction.
pub(crate) fn state_reward_dp<F>(mdp: &TabularMdp, reward: F) -> (f64, MarkovPolicy)
where
    F: Fn(usize, usize, usize) -> f64,
{
    let (hh, ss, aa) = (mdp.horizon, mdp.num_states, mdp.num_actions);
    let mut v_next: Array1<f64> = Array1::zeros(ss);
    let mut actions = Array2::zeros((hh, ss));
    for h in (0..hh).rev() {
        let mut v = Array1::zeros(ss);
        for s in 0..ss {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = usize::MAX;
            for a in 0..aa {
                if !mdp.is_available(h, s, a) {
                    continue;
                }
                let mut q = reward(h, s, a);
                if h + 1 < hh {
                    for s2 in 0..ss {
                        q += mdp.kernel[[h, s, a, s2]] * v_next[s2];
                    }
                }
                if q > best {
                    best = q;
                    best_a = a;
                }
            }
            v[s] = best;
            actions[[h, s]] = best_a;
        }
        v_next = v;
    }
    let value = mdp
        .init
        .iter()
        .zip(v_next.iter())
        .map(|(m, v)| m * v)
        .sum();
    (value, MarkovPolicy::from_actions(&actions, aa))
}
