//! Structured environment generators with known analytic bounds, plus
//! seeded random instances for tests and sweeps.

use ndarray::{Array1, Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mdp::{MarkovPolicy, RewardSpec, TabularMdp};
use crate::{tol, Error};

/// Description of a generated environment: the generator kind, its
/// parameters, and the analytic reference bounds it is known to satisfy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvDescriptor {
    pub kind: String,
    pub params: serde_json::Value,
    /// Named reference quantities, e.g. analytic bounds on values or
    /// competitive ratios implied by the construction.
    pub bounds: Vec<NamedBound>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedBound {
    pub name: String,
    pub value: f64,
}

impl EnvDescriptor {
    pub fn bound(&self, name: &str) -> Option<f64> {
        self.bounds.iter().find(|b| b.name == name).map(|b| b.value)
    }
}

fn named(name: &str, value: f64) -> NamedBound {
    NamedBound {
        name: name.to_string(),
        value,
    }
}

/// Uniform point on the probability simplex via exponential spacings.
pub fn simplex_point<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    let mut draws: Vec<f64> = (0..dim)
        .map(|_| -f64::ln(1.0 - rng.gen::<f64>()))
        .collect();
    let sum: f64 = draws.iter().sum();
    for d in &mut draws {
        *d /= sum;
    }
    draws
}

/// Dense random MDP: every kernel row and the initial distribution are
/// uniform simplex points, so all states stay reachable.
pub fn random_mdp<R: Rng>(num_states: usize, num_actions: usize, horizon: usize, rng: &mut R) -> TabularMdp {
    let mut kernel = Array4::zeros((horizon, num_states, num_actions, num_states));
    for h in 0..horizon {
        for s in 0..num_states {
            for a in 0..num_actions {
                let row = simplex_point(rng, num_states);
                for (s2, p) in row.iter().enumerate() {
                    kernel[[h, s, a, s2]] = *p;
                }
            }
        }
    }
    let init = Array1::from_vec(simplex_point(rng, num_states));
    TabularMdp::new(kernel, init, false).expect("random_mdp shapes are consistent")
}

/// Random stochastic Markov policy, rows uniform on the simplex over
/// available actions.
pub fn random_policy<R: Rng>(mdp: &TabularMdp, rng: &mut R) -> MarkovPolicy {
    let mut probs = Array3::zeros((mdp.horizon, mdp.num_states, mdp.num_actions));
    for h in 0..mdp.horizon {
        for s in 0..mdp.num_states {
            let acts = mdp.available_actions(h, s);
            let row = simplex_point(rng, acts.len());
            for (k, &a) in acts.iter().enumerate() {
                probs[[h, s, a]] = row[k];
            }
        }
    }
    MarkovPolicy {
        probs,
        deterministic: false,
    }
}

/// Random deterministic reward expectations in `[0, 1]`.
pub fn random_rewards<R: Rng>(mdp: &TabularMdp, rng: &mut R) -> RewardSpec {
    let r = Array3::from_shape_fn((mdp.horizon, mdp.num_states, mdp.num_actions), |_| {
        rng.gen::<f64>()
    });
    RewardSpec::deterministic(r)
}

/// Two-state deterministic fixture: action 0 stays in state 0, action 1
/// crosses to the absorbing state 1. Horizon 3, start in state 0.
pub fn chain_like_fixture() -> TabularMdp {
    let (hh, ss, aa) = (3, 2, 2);
    let mut kernel = Array4::zeros((hh, ss, aa, ss));
    for h in 0..hh {
        kernel[[h, 0, 0, 0]] = 1.0;
        kernel[[h, 0, 1, 1]] = 1.0;
        kernel[[h, 1, 0, 1]] = 1.0;
        kernel[[h, 1, 1, 1]] = 1.0;
    }
    let init = Array1::from_vec(vec![1.0, 0.0]);
    TabularMdp::new(kernel, init, true).unwrap()
}

/// Action-independent random kernel: every action shares the same
/// transition row, so lookahead on rewards is the only edge an agent
/// can have. Nonstationary rows, seeded.
pub fn disguised_bandit(num_states: usize, num_actions: usize, horizon: usize, seed: u64) -> TabularMdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kernel = Array4::zeros((horizon, num_states, num_actions, num_states));
    for h in 0..horizon {
        for s in 0..num_states {
            let row = simplex_point(&mut rng, num_states);
            for a in 0..num_actions {
                for (s2, p) in row.iter().enumerate() {
                    kernel[[h, s, a, s2]] = *p;
                }
            }
        }
    }
    let init = Array1::from_vec(simplex_point(&mut rng, num_states));
    TabularMdp::new(kernel, init, false).unwrap()
}

/// Prophet-style chain: `H` chain states plus an absorbing terminal.
/// Action 0 advances along the chain; every other action jumps to the
/// terminal and is the only kind that carries reward. With all reward
/// expectations equal, the fixed-reward competitive ratio at any
/// lookahead is `1 / ((A-1) H)`.
pub fn chain(
    horizon: usize,
    num_actions: usize,
    reward_value: f64,
) -> Result<(TabularMdp, RewardSpec, EnvDescriptor), Error> {
    if horizon < 1 || num_actions < 2 {
        return Err(Error::Domain(format!(
            "chain needs H >= 1 and A >= 2, got H={horizon}, A={num_actions}"
        )));
    }
    if reward_value <= 0.0 {
        return Err(Error::Domain("chain reward must be positive".to_string()));
    }
    let ss = horizon + 1;
    let terminal = horizon;
    let mut kernel = Array4::zeros((horizon, ss, num_actions, ss));
    for h in 0..horizon {
        for k in 0..horizon {
            let next = if k + 1 < ss { k + 1 } else { terminal };
            kernel[[h, k, 0, next]] = 1.0;
            for a in 1..num_actions {
                kernel[[h, k, a, terminal]] = 1.0;
            }
        }
        for a in 0..num_actions {
            kernel[[h, terminal, a, terminal]] = 1.0;
        }
    }
    let mut init = Array1::zeros(ss);
    init[0] = 1.0;
    let mdp = TabularMdp::new(kernel, init, true)?;
    let mut r = Array3::zeros((horizon, ss, num_actions));
    for h in 0..horizon {
        for k in 0..horizon {
            for a in 1..num_actions {
                r[[h, k, a]] = reward_value;
            }
        }
    }
    let rewards = RewardSpec::deterministic(r);
    let a = num_actions as f64;
    let hf = horizon as f64;
    let descriptor = EnvDescriptor {
        kind: "chain".to_string(),
        params: serde_json::json!({ "H": horizon, "A": num_actions, "reward": reward_value }),
        bounds: vec![
            named("cr_fixed_equal_rewards", 1.0 / ((a - 1.0) * hf)),
            named(
                "cr_worst_full_lookahead_lower",
                (1.0 - std::f64::consts::E.recip()) / (a * hf),
            ),
        ],
    };
    Ok((mdp, rewards, descriptor))
}

/// Column and row of a grid state index (both 0-based; moving right
/// increments the column, moving up the row).
pub fn grid_coords(n: usize, s: usize) -> (usize, usize) {
    (s % n, s / n)
}

pub fn grid_index(n: usize, i: usize, j: usize) -> usize {
    j * n + i
}

/// `n x n` navigation grid: start bottom-left, finish top-right in
/// `H = 2n - 1` steps, moving right (action 0) or up (action 1). Edge
/// states admit only the legal move; the availability mask records
/// this, and their kernel rows mirror the forced move. Rewards default
/// to 1 everywhere.
pub fn grid(n: usize) -> Result<(TabularMdp, RewardSpec, EnvDescriptor), Error> {
    if n < 2 {
        return Err(Error::Domain(format!("grid needs n >= 2, got {n}")));
    }
    let ss = n * n;
    let hh = 2 * n - 1;
    let aa = 2;
    let mut kernel = Array4::zeros((hh, ss, aa, ss));
    let mut available = Array3::from_elem((hh, ss, aa), true);
    for s in 0..ss {
        let (i, j) = grid_coords(n, s);
        let right = if i + 1 < n { Some(grid_index(n, i + 1, j)) } else { None };
        let up = if j + 1 < n { Some(grid_index(n, i, j + 1)) } else { None };
        let (t_right, t_up, avail) = match (right, up) {
            (Some(r), Some(u)) => (r, u, [true, true]),
            (Some(r), None) => (r, r, [true, false]), // top edge: forced right
            (None, Some(u)) => (u, u, [false, true]), // right edge: forced up
            (None, None) => (s, s, [true, true]),     // top-right corner
        };
        for h in 0..hh {
            kernel[[h, s, 0, t_right]] = 1.0;
            kernel[[h, s, 1, t_up]] = 1.0;
            available[[h, s, 0]] = avail[0];
            available[[h, s, 1]] = avail[1];
        }
    }
    let mut init = Array1::zeros(ss);
    init[grid_index(n, 0, 0)] = 1.0;
    let mdp = TabularMdp::new(kernel, init, true)?.with_availability(available)?;
    let rewards = RewardSpec::deterministic(Array3::from_elem((hh, ss, aa), 1.0));
    let nf = n as f64;
    let descriptor = EnvDescriptor {
        kind: "grid".to_string(),
        params: serde_json::json!({ "n": n }),
        bounds: vec![
            named("min_edge_flow", 1.0 / (2.0 * (nf - 1.0))),
            named("interior_occupancy", 1.0 / (nf - 1.0)),
            named("cr_worst_full_lookahead_lower", 1.0 / (hh as f64 - 1.0)),
        ],
    };
    Ok((mdp, rewards, descriptor))
}

/// The balanced flow policy of the grid: splits mass so that every edge
/// carries at least `1 / (2(n-1))` flow and each interior state on its
/// diagonal carries exactly `1 / (n-1)`.
pub fn grid_flow_policy(n: usize) -> Result<MarkovPolicy, Error> {
    if n < 2 {
        return Err(Error::Domain(format!("grid needs n >= 2, got {n}")));
    }
    let ss = n * n;
    let hh = 2 * n - 1;
    let mut probs = Array3::zeros((hh, ss, 2));
    for s in 0..ss {
        let (i, j) = grid_coords(n, s);
        let last = n - 1;
        let p_right = if i == 0 && j == 0 {
            0.5
        } else if j == 0 && i < last {
            // Bottom row: pass the excess up, keep the rest moving right.
            (last - i) as f64 / (n - i) as f64
        } else if i == 0 && j < last {
            // Leftmost column: send the excess right in a straight line.
            1.0 / (n - j) as f64
        } else if i == last && j == last {
            0.5
        } else if j == last {
            1.0 // top edge: forced right
        } else if i == last {
            0.0 // right edge: forced up
        } else {
            0.5 // interior
        };
        for h in 0..hh {
            probs[[h, s, 0]] = p_right;
            probs[[h, s, 1]] = 1.0 - p_right;
        }
    }
    Ok(MarkovPolicy {
        probs,
        deterministic: false,
    })
}

/// Delayed reward tree: a root with `A - 1` descendants (and a stay
/// action), inner nodes with `A` descendants, and long-shot rewards of
/// expectation `epsilon` on every action of every leaf. An absorbing
/// terminal follows the leaves. `depth_param = n` gives `A^n` tree
/// nodes, `(A-1) A^(n-1)` leaves and `S = A^n + 1` states; `n = 0`
/// collapses to a single rewarding crossing out of the start state.
pub fn delayed_tree(
    num_actions: usize,
    depth_param: usize,
    horizon: usize,
    epsilon: f64,
) -> Result<(TabularMdp, RewardSpec, EnvDescriptor), Error> {
    let n = depth_param;
    if num_actions < 2 {
        return Err(Error::Domain(format!(
            "delayed tree needs A >= 2, got {num_actions}"
        )));
    }
    if horizon < n + 1 {
        return Err(Error::Domain(format!(
            "delayed tree needs H >= n + 1, got H={horizon}, n={n}"
        )));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("epsilon {epsilon} not in (0, 1)")));
    }
    let aa = num_actions;
    let (kernel_spec, leaves) = if n == 0 {
        // Root doubles as the only "leaf": stay on action 0, cross to
        // the terminal with a long-shot on every other action.
        (vec![TreeNode::Root { children: vec![] }], vec![0])
    } else {
        build_complete_tree(aa, n)
    };
    build_tree_mdp(kernel_spec, leaves, aa, horizon, epsilon, n, None)
}

/// Delayed reward tree padded to an exact state count `S` in
/// `[A^n + 2, A^(n+1)]`: extra states become deeper leaves by giving
/// children to some of the old leaves. At least `S(1 - 1/A) - 2` leaves
/// survive.
pub fn delayed_tree_incomplete(
    num_actions: usize,
    num_states: usize,
    horizon: usize,
    epsilon: f64,
) -> Result<(TabularMdp, RewardSpec, EnvDescriptor), Error> {
    let aa = num_actions;
    if aa < 2 {
        return Err(Error::Domain(format!("delayed tree needs A >= 2, got {aa}")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("epsilon {epsilon} not in (0, 1)")));
    }
    // n = floor(log_A(S - 1)) with S strictly between complete sizes.
    let mut n = 0usize;
    while pow_usize(aa, n + 1) < num_states.saturating_sub(1) {
        n += 1;
    }
    if pow_usize(aa, n) + 1 >= num_states || num_states > pow_usize(aa, n + 1) + 1 {
        return Err(Error::Domain(format!(
            "S={num_states} is not strictly between A^n + 1 and A^(n+1) + 1 for any n (A={aa})"
        )));
    }
    if horizon < n + 2 {
        return Err(Error::Domain(format!(
            "incomplete delayed tree needs H >= n + 2, got H={horizon}, n={n}"
        )));
    }
    let (mut nodes, old_leaves) = build_complete_tree(aa, n);
    let extra = num_states - 1 - pow_usize(aa, n);
    let full = extra / aa;
    let rem = extra % aa;
    let mut leaves = Vec::new();
    let mut next_id = nodes.len();
    for (idx, &leaf) in old_leaves.iter().enumerate() {
        let grow = if idx < full {
            aa
        } else if idx == full && rem > 0 {
            rem
        } else {
            0
        };
        if grow == 0 {
            leaves.push(leaf);
            continue;
        }
        let children: Vec<usize> = (0..grow).map(|k| next_id + k).collect();
        next_id += grow;
        for &c in &children {
            leaves.push(c);
        }
        nodes[leaf] = TreeNode::Inner { children };
    }
    for _ in nodes.len()..next_id {
        nodes.push(TreeNode::Inner { children: vec![] });
    }
    debug_assert_eq!(next_id + 1, num_states);
    let af = aa as f64;
    let min_leaves = num_states as f64 * (1.0 - 1.0 / af) - 2.0;
    build_tree_mdp(nodes, leaves, aa, horizon, epsilon, n, Some(min_leaves))
}

enum TreeNode {
    Root { children: Vec<usize> },
    Inner { children: Vec<usize> },
}

/// Complete tree: root with `A - 1` children, inner nodes with `A`,
/// `A^n` nodes total, leaves on the deepest level.
fn build_complete_tree(aa: usize, n: usize) -> (Vec<TreeNode>, Vec<usize>) {
    let mut nodes: Vec<TreeNode> = Vec::new();
    nodes.push(TreeNode::Root { children: vec![] });
    let mut level: Vec<usize> = vec![0];
    let mut next_id = 1usize;
    for depth in 1..=n {
        let mut new_level = Vec::new();
        let level_snapshot = level.clone();
        for &parent in &level_snapshot {
            let fanout = if depth == 1 { aa - 1 } else { aa };
            let children: Vec<usize> = (0..fanout).map(|k| next_id + k).collect();
            next_id += fanout;
            for &c in &children {
                nodes.push(TreeNode::Inner { children: vec![] });
                new_level.push(c);
            }
            match &mut nodes[parent] {
                TreeNode::Root { children: ch } | TreeNode::Inner { children: ch } => {
                    *ch = children;
                }
            }
        }
        level = new_level;
    }
    (nodes, level)
}

fn build_tree_mdp(
    nodes: Vec<TreeNode>,
    leaves: Vec<usize>,
    aa: usize,
    horizon: usize,
    epsilon: f64,
    depth_param: usize,
    min_leaves: Option<f64>,
) -> Result<(TabularMdp, RewardSpec, EnvDescriptor), Error> {
    let ss = nodes.len() + 1;
    let terminal = nodes.len();
    let is_leaf: Vec<bool> = {
        let mut v = vec![false; ss];
        for &l in &leaves {
            v[l] = true;
        }
        v
    };
    let root_is_leaf = is_leaf[0];
    let mut kernel = Array4::zeros((horizon, ss, aa, ss));
    for h in 0..horizon {
        for (id, node) in nodes.iter().enumerate() {
            if is_leaf[id] {
                if id == 0 {
                    // Depth 0: the root keeps its stay action, every
                    // other action is a rewarding crossing.
                    kernel[[h, id, 0, id]] = 1.0;
                    for a in 1..aa {
                        kernel[[h, id, a, terminal]] = 1.0;
                    }
                } else {
                    for a in 0..aa {
                        kernel[[h, id, a, terminal]] = 1.0;
                    }
                }
                continue;
            }
            match node {
                TreeNode::Root { children } => {
                    kernel[[h, id, 0, id]] = 1.0;
                    for a in 1..aa {
                        let target = children.get(a - 1).copied().unwrap_or(id);
                        kernel[[h, id, a, target]] = 1.0;
                    }
                }
                TreeNode::Inner { children } => {
                    for a in 0..aa {
                        // A non-full node cycles its actions over the
                        // children it has.
                        let target = children[a % children.len()];
                        kernel[[h, id, a, target]] = 1.0;
                    }
                }
            }
        }
        for a in 0..aa {
            kernel[[h, terminal, a, terminal]] = 1.0;
        }
    }
    let mut init = Array1::zeros(ss);
    init[0] = 1.0;
    let mdp = TabularMdp::new(kernel, init, true)?;
    let mut r = Array3::zeros((horizon, ss, aa));
    for h in 0..horizon {
        for &leaf in &leaves {
            let first = if leaf == 0 && root_is_leaf { 1 } else { 0 };
            for a in first..aa {
                r[[h, leaf, a]] = epsilon;
            }
        }
    }
    let rewards = RewardSpec::long_shot(r, epsilon)?;
    let af = aa as f64;
    let nf = depth_param as f64;
    let hf = horizon as f64;
    // Reward slots a waiting full-lookahead agent can reach in time.
    let slots = (hf - nf) * (af - 1.0) * af.powf(nf);
    let mut bounds = vec![
        named("value_no_lookahead", epsilon),
        named("full_lookahead_value_lower", 1.0 - (1.0 - epsilon).powf(slots)),
        named("reachable_reward_slots", slots),
    ];
    if slots * epsilon < 1.0 {
        bounds.push(named(
            "cr_fixed_upper",
            1.0 / (slots - slots * slots * epsilon),
        ));
    }
    if let Some(m) = min_leaves {
        bounds.push(named("leaf_count_lower", m));
        bounds.push(named("leaf_count", leaves.len() as f64));
    }
    let descriptor = EnvDescriptor {
        kind: if min_leaves.is_some() {
            "delayed_tree_incomplete".to_string()
        } else {
            "delayed_tree".to_string()
        },
        params: serde_json::json!({
            "A": aa, "n": depth_param, "H": horizon, "epsilon": epsilon, "S": ss,
        }),
        bounds,
    };
    Ok((mdp, rewards, descriptor))
}

fn pow_usize(base: usize, exp: usize) -> usize {
    base.saturating_pow(exp as u32)
}

/// Membership in the bounded-coordinate simplex family: probability
/// vectors with `max q <= S^(alpha-1)` and
/// `min q >= (1 - S^(beta-1)) / (S - 1)`.
pub fn in_p_alpha_beta(q: &[f64], alpha: f64, beta: f64) -> bool {
    let s = q.len() as f64;
    if q.len() < 2 {
        return false;
    }
    let sum: f64 = q.iter().sum();
    if (sum - 1.0).abs() > tol::CONSTRUCT {
        return false;
    }
    let hi = s.powf(alpha - 1.0);
    let lo = (1.0 - s.powf(beta - 1.0)) / (s - 1.0);
    q.iter()
        .all(|&v| v <= hi + tol::CONSTRUCT && v >= lo - tol::CONSTRUCT)
}

/// Random MDP whose kernel rows and initial distribution all live in
/// the bounded-coordinate family: rejection sampling with a projection
/// fallback, capped at 10^4 attempts per row.
pub fn ergodic_kernel(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    alpha: f64,
    beta: f64,
    seed: u64,
) -> Result<(TabularMdp, EnvDescriptor), Error> {
    if num_states < 2 {
        return Err(Error::Domain("ergodic kernel needs S >= 2".to_string()));
    }
    if !(0.0 < beta && beta < alpha && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "need 0 < beta < alpha < 1, got alpha={alpha}, beta={beta}"
        )));
    }
    let s = num_states as f64;
    let hi = s.powf(alpha - 1.0);
    let lo = (1.0 - s.powf(beta - 1.0)) / (s - 1.0);
    if lo > hi || s * lo > 1.0 + tol::CONSTRUCT || s * hi < 1.0 - tol::CONSTRUCT {
        return Err(Error::Domain(format!(
            "empty box: lo={lo:.6}, hi={hi:.6}, S={num_states}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Result<Vec<f64>, Error> {
        for _ in 0..64 {
            let q = simplex_point(rng, num_states);
            if in_p_alpha_beta(&q, alpha, beta) {
                return Ok(q);
            }
        }
        // Projection: clamp(p + lambda) with the shift chosen so the
        // clamped vector sums to 1; monotone, so bisection converges.
        let p = simplex_point(rng, num_states);
        let mut below = lo - 1.0;
        let mut above = hi + 1.0;
        for _ in 0..200 {
            let mid = 0.5 * (below + above);
            let total: f64 = p.iter().map(|v| (v + mid).clamp(lo, hi)).sum();
            if total < 1.0 {
                below = mid;
            } else {
                above = mid;
            }
        }
        let lambda = 0.5 * (below + above);
        let q: Vec<f64> = p.iter().map(|v| (v + lambda).clamp(lo, hi)).collect();
        if in_p_alpha_beta(&q, alpha, beta) {
            Ok(q)
        } else {
            Err(Error::CapExceeded(
                "box-simplex sampling failed after projection".to_string(),
            ))
        }
    };
    let mut kernel = Array4::zeros((horizon, num_states, num_actions, num_states));
    for h in 0..horizon {
        for st in 0..num_states {
            for a in 0..num_actions {
                let row = draw(&mut rng)?;
                for (s2, p) in row.iter().enumerate() {
                    kernel[[h, st, a, s2]] = *p;
                }
            }
        }
    }
    let init = Array1::from_vec(draw(&mut rng)?);
    let mdp = TabularMdp::new(kernel, init, false)?;
    let descriptor = EnvDescriptor {
        kind: "ergodic".to_string(),
        params: serde_json::json!({
            "S": num_states, "A": num_actions, "H": horizon,
            "alpha": alpha, "beta": beta, "seed": seed,
        }),
        bounds: vec![named(
            "cr_one_step_lower",
            (1.0 - s.powf(beta - 1.0)) / (num_actions as f64 * s.powf(alpha)),
        )],
    };
    Ok((mdp, descriptor))
}

/// Transition-lookahead tree: a uniform random-descent tree where only
/// one leaf pays, used to separate reward lookahead from transition
/// lookahead. Action 0 waits at the current node; every other action
/// descends to a uniformly random child. Only simulation oracles use
/// the structure; the kernel itself is an ordinary tabular MDP.
#[derive(Debug, Clone)]
pub struct TransitionTree {
    pub mdp: TabularMdp,
    pub descriptor: EnvDescriptor,
    pub depth: usize,
    /// Children of each internal node, level by level; empty for leaves.
    pub children: Vec<Vec<usize>>,
    pub rewarding_leaf: usize,
    /// Node on the root-to-reward path at each level (level 0 = root).
    pub path: Vec<usize>,
    pub terminal: usize,
    pub rewards: RewardSpec,
}

pub fn transition_lookahead_tree(num_actions: usize, horizon: usize) -> Result<TransitionTree, Error> {
    if num_actions < 3 {
        return Err(Error::Domain(format!(
            "transition tree needs A >= 3 for a branching descent, got {num_actions}"
        )));
    }
    if horizon < 5 {
        return Err(Error::Domain(format!(
            "transition tree needs H >= 5, got {horizon}"
        )));
    }
    let frac = 1.0 - std::f64::consts::E.recip();
    let depth = (frac * horizon as f64).floor() as usize - 1;
    let branch = num_actions - 1;
    // Levels 0..depth, level k holding branch^k nodes.
    let mut children: Vec<Vec<usize>> = Vec::new();
    let mut level: Vec<usize> = vec![0];
    children.push(Vec::new());
    let mut next_id = 1usize;
    for _ in 1..depth {
        let mut new_level = Vec::new();
        for &parent in &level {
            let ch: Vec<usize> = (0..branch).map(|k| next_id + k).collect();
            next_id += branch;
            for &c in &ch {
                new_level.push(c);
                children.push(Vec::new());
            }
            children[parent] = ch;
        }
        level = new_level;
    }
    let leaves = level;
    let terminal = next_id;
    let ss = terminal + 1;
    let aa = num_actions;
    let mut kernel = Array4::zeros((horizon, ss, aa, ss));
    for h in 0..horizon {
        for id in 0..terminal {
            if children[id].is_empty() {
                for a in 0..aa {
                    kernel[[h, id, a, terminal]] = 1.0;
                }
            } else {
                kernel[[h, id, 0, id]] = 1.0;
                let p = 1.0 / children[id].len() as f64;
                for a in 1..aa {
                    for &c in &children[id] {
                        kernel[[h, id, a, c]] += p;
                    }
                }
            }
        }
        for a in 0..aa {
            kernel[[h, terminal, a, terminal]] = 1.0;
        }
    }
    let mut init = Array1::zeros(ss);
    init[0] = 1.0;
    let mdp = TabularMdp::new(kernel, init, true)?;
    let rewarding_leaf = leaves[0];
    let mut path = vec![0usize];
    while !children[*path.last().unwrap()].is_empty() {
        path.push(children[*path.last().unwrap()][0]);
    }
    debug_assert_eq!(*path.last().unwrap(), rewarding_leaf);
    let mut r = Array3::zeros((horizon, ss, aa));
    for h in 0..horizon {
        for a in 0..aa {
            r[[h, rewarding_leaf, a]] = 1.0;
        }
    }
    let rewards = RewardSpec::deterministic(r);
    let n_leaves = leaves.len() as f64;
    let af = num_actions as f64;
    let hf = horizon as f64;
    let descriptor = EnvDescriptor {
        kind: "transition_tree".to_string(),
        params: serde_json::json!({ "A": num_actions, "H": horizon, "depth": depth, "leaves": leaves.len() }),
        bounds: vec![
            named("value_no_lookahead_upper", 1.0 / n_leaves),
            named(
                "value_one_step_lower",
                1.0 - (-2.0f64).exp(),
            ),
            named(
                "ratio_upper",
                2.0 / (af - 1.0).powf(frac * hf - 3.0),
            ),
        ],
    };
    Ok(TransitionTree {
        mdp,
        descriptor,
        depth,
        children,
        rewarding_leaf,
        path,
        terminal,
        rewards,
    })
}
