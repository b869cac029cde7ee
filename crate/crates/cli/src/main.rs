//! Command-line front end for the lookahead competitive-ratio toolkit:
//! environment generation, exact values, competitive ratios, reach
//! tables, simulation estimates, canned verification reports, CSV
//! sweeps, and an invariant checker.
//!
//! Exit codes: 0 success, 1 assertion failure, 2 usage or input error,
//! 3 resource cap exceeded. Numeric output uses 12 significant digits.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lookahead_cr::envs::{self, EnvDescriptor, NamedBound};
use lookahead_cr::wire;
use lookahead_cr::{
    analytic_lower_bound, cr_fixed, cr_worst_expectations, cr_worst_expectations_heuristic,
    exact_lookahead_value, occupancy_of_policy, optimal_reach, reward_grid_oracle,
    sample_episode, simulate_greedy_lookahead, simulate_transition_lookahead,
    sup_lookahead_value, Error, LookaheadSpec, RewardSpec, TabularMdp,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "lookahead-cr",
    version,
    about = "Exact values and competitive ratios of reward-lookahead agents in tabular MDPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an environment package (MDP + rewards + descriptor) as JSON.
    Envgen(EnvgenArgs),
    /// Lookahead value suprema, exact values, and simulation estimates.
    Value(ValueArgs),
    /// Competitive ratios for fixed or worst-case reward expectations.
    Cr(CrArgs),
    /// Best reach probabilities for every step-state pair.
    Reach(ReachArgs),
    /// Monte-Carlo estimate of a lookahead agent's value.
    Simulate(SimulateArgs),
    /// Canned verification report for a named example family.
    Reproduce(ReproduceArgs),
    /// CSV sweep over environments, lookaheads, and modes from a config file.
    Sweep(SweepArgs),
    /// Run the built-in invariant suites; nonzero exit on any failure.
    Check(CheckArgs),
}

#[derive(Args)]
struct EnvgenArgs {
    /// bandit | chain | grid | tree | incomplete-tree | ergodic | random
    #[arg(long)]
    family: String,
    #[arg(long)]
    states: Option<usize>,
    #[arg(long)]
    actions: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Success probability of each long-shot reward draw.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Branching levels before the reward phase (tree family).
    #[arg(long)]
    depth: Option<usize>,
    /// Side length of the grid family.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Deterministic reward on rewarded slots (chain family).
    #[arg(long)]
    reward_value: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValueArgs {
    /// Package JSON with an "mdp" and a "rewards" entry.
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated list, or "all" for 0..=H.
    #[arg(long, default_value = "all")]
    lookaheads: String,
    /// Also run the exact finite-window dynamic program.
    #[arg(long)]
    exact: bool,
    /// Also estimate the greedy agent's value by simulation.
    #[arg(long)]
    episodes: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, ValueEnum)]
enum CrModeArg {
    Auto,
    Fixed,
    Worst,
    Both,
}

#[derive(Args)]
struct CrArgs {
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated list, or "all" for 1..=H.
    #[arg(long, default_value = "all")]
    lookaheads: String,
    #[arg(long, value_enum, default_value_t = CrModeArg::Auto)]
    mode: CrModeArg,
    /// Restrict the worst-case adversary to step-invariant expectations.
    #[arg(long)]
    stationary: bool,
    /// Node budget for the exact base-policy enumeration.
    #[arg(long)]
    budget: Option<u64>,
    /// Local-search upper bound instead of the exact enumeration.
    #[arg(long)]
    heuristic: bool,
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Emit full reports as JSON instead of CSV.
    #[arg(long)]
    json: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReachArgs {
    #[arg(long)]
    input: PathBuf,
    /// Include the conditional reach table, not just the start-state one.
    #[arg(long)]
    full: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Package JSON; required unless --transition-tree is set.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    lookahead: usize,
    #[arg(long, default_value_t = 100_000)]
    episodes: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Base policy JSON; defaults to the modified-reward optimal base.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Simulate the transition-lookahead tree instead of a package.
    #[arg(long)]
    transition_tree: bool,
    #[arg(long, default_value_t = 3)]
    actions: usize,
    #[arg(long, default_value_t = 9)]
    horizon: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum Section {
    Bandit,
    Chain,
    Grid,
    Tree,
    Ergodic,
    Transition,
    All,
}

#[derive(Args)]
struct ReproduceArgs {
    #[arg(long, value_enum)]
    section: Section,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON config: {"envs": [...], "lookaheads": [...] | "all", "mode": "fixed"|"worst"|"both", ...}
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum CheckLevel {
    Fast,
    Full,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, value_enum, default_value_t = CheckLevel::Fast)]
    level: CheckLevel,
    /// Also validate a package file before the built-in suites.
    #[arg(long)]
    input: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    if let Ok(raw) = std::env::var("LOOKAHEAD_CR_THREADS") {
        if let Ok(n) = raw.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
    let result = match cli.command {
        Command::Envgen(a) => cmd_envgen(&a),
        Command::Value(a) => cmd_value(&a),
        Command::Cr(a) => cmd_cr(&a),
        Command::Reach(a) => cmd_reach(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Reproduce(a) => cmd_reproduce(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Check(a) => cmd_check(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::CapExceeded(_) => 3,
            Error::DimensionMismatch(_) | Error::Domain(_) | Error::InvalidInput(_) => 2,
            Error::Infeasible(_) | Error::Unbounded(_) => 1,
        };
        fail(code, e.to_string())
    }
}

/// 12 significant digits, stable across platforms; infinities spelled out.
fn sig(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.11e}")
    }
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<(), Failure> {
    match out {
        None => {
            print!("{content}");
            Ok(())
        }
        Some(path) => fs::write(path, content)
            .map_err(|e| fail(2, format!("cannot write {}: {e}", path.display()))),
    }
}

fn read_json(path: &Path) -> Result<Value, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| fail(2, format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| fail(2, format!("{}: {e}", path.display())))
}

fn read_package(path: &Path) -> Result<(TabularMdp, Option<RewardSpec>), Failure> {
    let v = read_json(path)?;
    Ok(wire::package_from_json(&v)?)
}

fn parse_lookaheads(raw: &str, horizon: usize, lo: usize) -> Result<Vec<usize>, Failure> {
    if raw.trim() == "all" {
        return Ok((lo..=horizon).collect());
    }
    let mut out = Vec::new();
    for part in raw.split(',') {
        let l: usize = part
            .trim()
            .parse()
            .map_err(|_| fail(2, format!("bad lookahead list entry {part:?}")))?;
        if l > horizon {
            return Err(fail(2, format!("lookahead {l} exceeds the horizon {horizon}")));
        }
        out.push(l);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Environment construction shared by envgen and sweep
// ---------------------------------------------------------------------------

#[derive(Clone, Default)]
struct EnvParams {
    states: Option<usize>,
    actions: Option<usize>,
    horizon: Option<usize>,
    seed: Option<u64>,
    epsilon: Option<f64>,
    depth: Option<usize>,
    n: Option<usize>,
    alpha: Option<f64>,
    beta: Option<f64>,
    reward_value: Option<f64>,
}

struct BuiltEnv {
    label: String,
    mdp: TabularMdp,
    rewards: Option<RewardSpec>,
    descriptor: Option<EnvDescriptor>,
}

fn build_env(family: &str, p: &EnvParams) -> Result<BuiltEnv, Failure> {
    match family {
        "bandit" => {
            let (s, a, h) = (
                p.states.unwrap_or(2),
                p.actions.unwrap_or(2),
                p.horizon.unwrap_or(3),
            );
            let seed = p.seed.unwrap_or(0);
            let mdp = envs::disguised_bandit(s, a, h, seed);
            let descriptor = EnvDescriptor {
                kind: "bandit".to_string(),
                params: json!({"S": s, "A": a, "H": h, "seed": seed}),
                bounds: vec![NamedBound {
                    name: "cr_worst_any_lookahead".to_string(),
                    value: 1.0 / a as f64,
                }],
            };
            Ok(BuiltEnv {
                label: format!("bandit S={s} A={a} H={h} seed={seed}"),
                mdp,
                rewards: None,
                descriptor: Some(descriptor),
            })
        }
        "chain" => {
            let h = p.horizon.unwrap_or(4);
            let a = p.actions.unwrap_or(2);
            let rv = p.reward_value.unwrap_or(1.0);
            let (mdp, rewards, descriptor) = envs::chain(h, a, rv)?;
            Ok(BuiltEnv {
                label: format!("chain H={h} A={a}"),
                mdp,
                rewards: Some(rewards),
                descriptor: Some(descriptor),
            })
        }
        "grid" => {
            let n = p.n.unwrap_or(4);
            let (mdp, rewards, descriptor) = envs::grid(n)?;
            Ok(BuiltEnv {
                label: format!("grid n={n}"),
                mdp,
                rewards: Some(rewards),
                descriptor: Some(descriptor),
            })
        }
        "tree" => {
            let a = p.actions.unwrap_or(2);
            let depth = p.depth.unwrap_or(1);
            let h = p.horizon.unwrap_or(6);
            let eps = p.epsilon.unwrap_or(0.05);
            let (mdp, rewards, descriptor) = envs::delayed_tree(a, depth, h, eps)?;
            Ok(BuiltEnv {
                label: format!("tree A={a} depth={depth} H={h} eps={eps}"),
                mdp,
                rewards: Some(rewards),
                descriptor: Some(descriptor),
            })
        }
        "incomplete-tree" | "incomplete_tree" => {
            let a = p.actions.unwrap_or(2);
            let s = p.states.unwrap_or(3);
            let h = p.horizon.unwrap_or(6);
            let eps = p.epsilon.unwrap_or(0.05);
            let (mdp, rewards, descriptor) = envs::delayed_tree_incomplete(a, s, h, eps)?;
            Ok(BuiltEnv {
                label: format!("incomplete-tree A={a} S={s} H={h} eps={eps}"),
                mdp,
                rewards: Some(rewards),
                descriptor: Some(descriptor),
            })
        }
        "ergodic" => {
            let (s, a, h) = (
                p.states.unwrap_or(3),
                p.actions.unwrap_or(2),
                p.horizon.unwrap_or(3),
            );
            let alpha = p.alpha.unwrap_or(0.8);
            let beta = p.beta.unwrap_or(0.4);
            let seed = p.seed.unwrap_or(0);
            let (mdp, descriptor) = envs::ergodic_kernel(s, a, h, alpha, beta, seed)?;
            Ok(BuiltEnv {
                label: format!("ergodic S={s} A={a} H={h} alpha={alpha} beta={beta} seed={seed}"),
                mdp,
                rewards: None,
                descriptor: Some(descriptor),
            })
        }
        "random" => {
            let (s, a, h) = (
                p.states.unwrap_or(2),
                p.actions.unwrap_or(2),
                p.horizon.unwrap_or(3),
            );
            let seed = p.seed.unwrap_or(0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mdp = envs::random_mdp(s, a, h, &mut rng);
            let rewards = envs::random_rewards(&mdp, &mut rng);
            let descriptor = EnvDescriptor {
                kind: "random".to_string(),
                params: json!({"S": s, "A": a, "H": h, "seed": seed}),
                bounds: Vec::new(),
            };
            Ok(BuiltEnv {
                label: format!("random S={s} A={a} H={h} seed={seed}"),
                mdp,
                rewards: Some(rewards),
                descriptor: Some(descriptor),
            })
        }
        other => Err(fail(
            2,
            format!(
                "unknown family {other:?}; expected bandit, chain, grid, tree, \
                 incomplete-tree, ergodic, or random"
            ),
        )),
    }
}

// ---------------------------------------------------------------------------
// envgen
// ---------------------------------------------------------------------------

fn cmd_envgen(a: &EnvgenArgs) -> Result<u8, Failure> {
    let params = EnvParams {
        states: a.states,
        actions: a.actions,
        horizon: a.horizon,
        seed: a.seed,
        epsilon: a.epsilon,
        depth: a.depth,
        n: a.n,
        alpha: a.alpha,
        beta: a.beta,
        reward_value: a.reward_value,
    };
    let built = build_env(&a.family, &params)?;
    let package = wire::package_to_json(&built.mdp, built.rewards.as_ref(), built.descriptor.as_ref());
    let text = serde_json::to_string_pretty(&package).expect("package serializes");
    emit(&a.out, &format!("{text}\n"))?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// value
// ---------------------------------------------------------------------------

fn cmd_value(a: &ValueArgs) -> Result<u8, Failure> {
    let (mdp, rewards) = read_package(&a.input)?;
    let rewards = rewards.ok_or_else(|| {
        fail(2, format!("{} has no rewards entry", a.input.display()))
    })?;
    let lookaheads = parse_lookaheads(&a.lookaheads, mdp.horizon, 0)?;
    let reach = optimal_reach(&mdp);
    let mut csv = String::from("lookahead,sup,exact,mc_mean,mc_std_error\n");
    for &l in &lookaheads {
        let sup = sup_lookahead_value(&mdp, &rewards, &reach, l)?;
        let exact = if a.exact {
            sig(exact_lookahead_value(&mdp, &rewards, l)?)
        } else {
            String::new()
        };
        let (mc_mean, mc_se) = match a.episodes {
            None => (String::new(), String::new()),
            Some(n) => {
                let est = simulate_greedy_lookahead(
                    &mdp,
                    &rewards,
                    &sup.witness_base,
                    l,
                    n,
                    a.seed,
                )?;
                (sig(est.mean), sig(est.std_error))
            }
        };
        csv.push_str(&format!("{l},{},{exact},{mc_mean},{mc_se}\n", sig(sup.value)));
    }
    emit(&a.out, &csv)?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// cr
// ---------------------------------------------------------------------------

fn cmd_cr(a: &CrArgs) -> Result<u8, Failure> {
    let (mdp, rewards) = read_package(&a.input)?;
    let lookaheads = parse_lookaheads(&a.lookaheads, mdp.horizon, 1)?;
    let (run_fixed, run_worst) = match a.mode {
        CrModeArg::Fixed => (true, false),
        CrModeArg::Worst => (false, true),
        CrModeArg::Both => (true, true),
        CrModeArg::Auto => (rewards.is_some(), true),
    };
    if run_fixed && rewards.is_none() {
        return Err(fail(
            2,
            format!("{} has no rewards entry; fixed mode needs one", a.input.display()),
        ));
    }
    let mut reports = Vec::new();
    for &l in &lookaheads {
        if run_fixed {
            reports.push(cr_fixed(&mdp, rewards.as_ref().unwrap(), l)?);
        }
        if run_worst {
            let report = if a.heuristic {
                cr_worst_expectations_heuristic(
                    &mdp,
                    l,
                    a.stationary,
                    a.restarts,
                    a.seed,
                    a.budget,
                )?
            } else {
                cr_worst_expectations(&mdp, l, a.stationary, a.budget)?
            };
            reports.push(report);
        }
    }
    let text = if a.json {
        let list: Vec<Value> = reports.iter().map(wire::report_to_json).collect();
        format!(
            "{}\n",
            serde_json::to_string_pretty(&Value::Array(list)).expect("reports serialize")
        )
    } else {
        let mut csv = String::from(
            "lookahead,mode,ratio,numerator,denominator,certified,degenerate,lps_solved,nodes_visited\n",
        );
        for r in &reports {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.lookahead,
                r.mode.as_str(),
                sig(r.ratio),
                sig(r.numerator),
                sig(r.denominator),
                r.certified,
                r.degenerate,
                r.lps_solved,
                r.nodes_visited,
            ));
        }
        csv
    };
    emit(&a.out, &text)?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// reach
// ---------------------------------------------------------------------------

fn cmd_reach(a: &ReachArgs) -> Result<u8, Failure> {
    let (mdp, _) = read_package(&a.input)?;
    let reach = optimal_reach(&mdp);
    let text = serde_json::to_string_pretty(&wire::reach_to_json(&reach, a.full))
        .expect("reach serializes");
    emit(&a.out, &format!("{text}\n"))?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn cmd_simulate(a: &SimulateArgs) -> Result<u8, Failure> {
    let output = if a.transition_tree {
        if a.lookahead > 1 {
            return Err(fail(
                2,
                "transition-tree simulation supports lookahead 0 or 1 only",
            ));
        }
        let tree = envs::transition_lookahead_tree(a.actions, a.horizon)?;
        let est = simulate_transition_lookahead(&tree, a.lookahead, a.episodes, a.seed)?;
        json!({
            "kind": "transition_tree",
            "actions": a.actions,
            "horizon": a.horizon,
            "lookahead": a.lookahead,
            "estimate": wire::estimate_to_json(&est),
        })
    } else {
        let input = a.input.as_ref().ok_or_else(|| {
            fail(2, "simulate needs --input unless --transition-tree is set")
        })?;
        let (mdp, rewards) = read_package(input)?;
        let rewards = rewards
            .ok_or_else(|| fail(2, format!("{} has no rewards entry", input.display())))?;
        let base = match &a.policy {
            Some(path) => {
                let v = read_json(path)?;
                wire::policy_from_json(&v, (mdp.horizon, mdp.num_states, mdp.num_actions))?
            }
            None => {
                let reach = optimal_reach(&mdp);
                sup_lookahead_value(&mdp, &rewards, &reach, a.lookahead)?.witness_base
            }
        };
        let est = simulate_greedy_lookahead(&mdp, &rewards, &base, a.lookahead, a.episodes, a.seed)?;
        json!({
            "kind": "greedy_lookahead",
            "lookahead": a.lookahead,
            "estimate": wire::estimate_to_json(&est),
        })
    };
    let text = serde_json::to_string_pretty(&output).expect("estimate serializes");
    emit(&a.out, &format!("{text}\n"))?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// reproduce
// ---------------------------------------------------------------------------

#[derive(Copy, Clone)]
enum Rel {
    Eq,
    Ge,
    Le,
}

struct CsvReport {
    lines: Vec<String>,
    failed: usize,
}

impl CsvReport {
    fn new() -> Self {
        CsvReport {
            lines: vec!["quantity,computed,reference,pass,tolerance".to_string()],
            failed: 0,
        }
    }

    fn row(&mut self, quantity: &str, computed: f64, reference: f64, tol: f64, rel: Rel) {
        let pass = match rel {
            Rel::Eq => (computed - reference).abs() <= tol,
            Rel::Ge => computed >= reference - tol,
            Rel::Le => computed <= reference + tol,
        };
        self.lines.push(format!(
            "{quantity},{},{},{},{}",
            sig(computed),
            sig(reference),
            if pass { "pass" } else { "fail" },
            sig(tol),
        ));
        if !pass {
            self.failed += 1;
        }
    }

    fn into_output(self) -> (String, u8) {
        let mut text = self.lines.join("\n");
        text.push('\n');
        (text, if self.failed == 0 { 0 } else { 1 })
    }
}

fn reproduce_bandit(r: &mut CsvReport) -> Result<(), Failure> {
    for a in 2..=5usize {
        let mdp = envs::disguised_bandit(2, a, 3, 40 + a as u64);
        for l in [1usize, 3] {
            let rep = cr_worst_expectations(&mdp, l, false, None)?;
            r.row(
                &format!("bandit A={a} S=2 H=3 L={l} worst-case ratio vs 1/A"),
                rep.ratio,
                1.0 / a as f64,
                1e-9,
                Rel::Eq,
            );
        }
    }
    Ok(())
}

fn reproduce_chain(r: &mut CsvReport) -> Result<(), Failure> {
    for h in 2..=6usize {
        for a in [2usize, 3] {
            let (mdp, rewards, _) = envs::chain(h, a, 1.0)?;
            let target = 1.0 / ((a - 1) * h) as f64;
            for l in [1, h] {
                let rep = cr_fixed(&mdp, &rewards, l)?;
                r.row(
                    &format!("chain H={h} A={a} L={l} fixed ratio vs 1/((A-1)H)"),
                    rep.ratio,
                    target,
                    1e-9,
                    Rel::Eq,
                );
            }
            let rep = cr_worst_expectations(&mdp, h, false, None)?;
            let floor = (1.0 - std::f64::consts::E.recip()) / (a * h) as f64;
            r.row(
                &format!("chain H={h} A={a} worst-case ratio floor (1-1/e)/(AH)"),
                rep.ratio,
                floor,
                1e-8,
                Rel::Ge,
            );
            r.row(
                &format!("chain H={h} A={a} worst-case ratio cap 1/((A-1)H)"),
                rep.ratio,
                target,
                1e-8,
                Rel::Le,
            );
        }
    }
    Ok(())
}

fn reproduce_grid(r: &mut CsvReport) -> Result<(), Failure> {
    for n in 3..=6usize {
        let (mdp, _, _) = envs::grid(n)?;
        let policy = envs::grid_flow_policy(n)?;
        let occ = occupancy_of_policy(&mdp, &policy);
        let reach = optimal_reach(&mdp);
        let mut min_flow = f64::INFINITY;
        for h in 0..mdp.horizon {
            for s in 0..mdp.num_states {
                if reach.d_star[[h, s]] <= 1e-12 {
                    continue;
                }
                for act in mdp.available_actions(h, s) {
                    min_flow = min_flow.min(occ.d[[h, s, act]]);
                }
            }
        }
        r.row(
            &format!("grid n={n} min edge flow floor 1/(2(n-1))"),
            min_flow,
            1.0 / (2 * (n - 1)) as f64,
            1e-9,
            Rel::Ge,
        );
        let mut dev = 0.0f64;
        for i in 1..n - 1 {
            for j in 1..n - 1 {
                let s = envs::grid_index(n, i, j);
                let mass: f64 = (0..mdp.num_actions).map(|act| occ.d[[i + j, s, act]]).sum();
                dev = dev.max((mass - 1.0 / (n - 1) as f64).abs());
            }
        }
        r.row(
            &format!("grid n={n} interior occupancy deviation from 1/(n-1)"),
            dev,
            0.0,
            1e-9,
            Rel::Le,
        );
        let rep = cr_worst_expectations(&mdp, mdp.horizon, false, None)?;
        r.row(
            &format!("grid n={n} full-lookahead worst-case floor 1/(H-1)"),
            rep.ratio,
            1.0 / (mdp.horizon - 1) as f64,
            1e-8,
            Rel::Ge,
        );
    }
    Ok(())
}

fn reproduce_tree(r: &mut CsvReport) -> Result<(), Failure> {
    let h = 6usize;
    for depth in [0usize, 1] {
        for eps in [0.05f64, 0.01] {
            let (mdp, rewards, _) = envs::delayed_tree(2, depth, h, eps)?;
            let slots = ((h - depth) * (1 << depth)) as f64;
            let exact = exact_lookahead_value(&mdp, &rewards, h)?;
            r.row(
                &format!("tree A=2 depth={depth} H={h} eps={eps} full-lookahead value floor"),
                exact,
                1.0 - (1.0 - eps).powf(slots),
                1e-9,
                Rel::Ge,
            );
            let rep = cr_fixed(&mdp, &rewards, h)?;
            r.row(
                &format!("tree A=2 depth={depth} H={h} eps={eps} fixed ratio cap 1/(N-N^2 eps)"),
                rep.ratio,
                1.0 / (slots - slots * slots * eps),
                1e-9,
                Rel::Le,
            );
        }
    }
    Ok(())
}

fn reproduce_ergodic(r: &mut CsvReport) -> Result<(), Failure> {
    let (s, a, h, alpha, beta) = (3usize, 2usize, 3usize, 0.8f64, 0.4f64);
    for seed in [11u64, 12, 13] {
        let (mdp, descriptor) = envs::ergodic_kernel(s, a, h, alpha, beta, seed)?;
        let mut inside = 0usize;
        let mut total = 0usize;
        for hh in 0..h {
            for ss in 0..s {
                for aa in 0..a {
                    let row: Vec<f64> = (0..s).map(|s2| mdp.kernel[[hh, ss, aa, s2]]).collect();
                    total += 1;
                    if envs::in_p_alpha_beta(&row, alpha, beta) {
                        inside += 1;
                    }
                }
            }
        }
        let init: Vec<f64> = mdp.init.iter().copied().collect();
        total += 1;
        if envs::in_p_alpha_beta(&init, alpha, beta) {
            inside += 1;
        }
        r.row(
            &format!("ergodic seed={seed} fraction of rows inside the box"),
            inside as f64 / total as f64,
            1.0,
            0.0,
            Rel::Eq,
        );
        let bound = descriptor
            .bounds
            .iter()
            .find(|b| b.name == "cr_one_step_lower")
            .map(|b| b.value)
            .unwrap_or(0.0);
        let rep = cr_worst_expectations(&mdp, 1, false, None)?;
        r.row(
            &format!("ergodic seed={seed} one-step worst-case floor"),
            rep.ratio,
            bound,
            1e-8,
            Rel::Ge,
        );
    }
    Ok(())
}

fn reproduce_transition(r: &mut CsvReport) -> Result<(), Failure> {
    let tree = envs::transition_lookahead_tree(3, 9)?;
    let episodes = 100_000u64;
    let blind = simulate_transition_lookahead(&tree, 0, episodes, 70)?;
    let informed = simulate_transition_lookahead(&tree, 1, episodes, 71)?;
    r.row(
        "transition A=3 H=9 blind value cap 1/8",
        blind.mean,
        0.125,
        3.0 * blind.std_error,
        Rel::Le,
    );
    r.row(
        "transition A=3 H=9 informed value floor 1-exp(-2)",
        informed.mean,
        1.0 - (-2.0f64).exp(),
        3.0 * informed.std_error,
        Rel::Ge,
    );
    let ratio = blind.mean / informed.mean;
    let se = ratio
        * ((blind.std_error / blind.mean).powi(2)
            + (informed.std_error / informed.mean).powi(2))
        .sqrt();
    let frac = 1.0 - std::f64::consts::E.recip();
    let cap = 2.0 / 2.0f64.powf(frac * 9.0 - 3.0);
    r.row(
        "transition A=3 H=9 blind-to-informed ratio cap",
        ratio,
        cap,
        3.0 * se,
        Rel::Le,
    );
    Ok(())
}

fn cmd_reproduce(a: &ReproduceArgs) -> Result<u8, Failure> {
    let mut report = CsvReport::new();
    let sections: Vec<Section> = match a.section {
        Section::All => vec![
            Section::Bandit,
            Section::Chain,
            Section::Grid,
            Section::Tree,
            Section::Ergodic,
            Section::Transition,
        ],
        s => vec![s],
    };
    for s in sections {
        match s {
            Section::Bandit => reproduce_bandit(&mut report)?,
            Section::Chain => reproduce_chain(&mut report)?,
            Section::Grid => reproduce_grid(&mut report)?,
            Section::Tree => reproduce_tree(&mut report)?,
            Section::Ergodic => reproduce_ergodic(&mut report)?,
            Section::Transition => reproduce_transition(&mut report)?,
            Section::All => unreachable!(),
        }
    }
    let (text, code) = report.into_output();
    emit(&a.out, &text)?;
    Ok(code)
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

fn field_usize(v: &Value, key: &str, ctx: &str) -> Result<Option<usize>, Failure> {
    match v.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(x) => x
            .as_u64()
            .map(|u| Some(u as usize))
            .ok_or_else(|| fail(2, format!("{ctx}.{key} must be a nonnegative integer"))),
    }
}

fn field_u64(v: &Value, key: &str, ctx: &str) -> Result<Option<u64>, Failure> {
    match v.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(x) => x
            .as_u64()
            .map(Some)
            .ok_or_else(|| fail(2, format!("{ctx}.{key} must be a nonnegative integer"))),
    }
}

fn field_f64(v: &Value, key: &str, ctx: &str) -> Result<Option<f64>, Failure> {
    match v.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(x) => x
            .as_f64()
            .map(Some)
            .ok_or_else(|| fail(2, format!("{ctx}.{key} must be a number"))),
    }
}

fn cmd_sweep(a: &SweepArgs) -> Result<u8, Failure> {
    let config = read_json(&a.config)?;
    let env_list = config
        .get("envs")
        .and_then(Value::as_array)
        .ok_or_else(|| fail(2, "config: \"envs\" must be an array"))?;
    let mode = config
        .get("mode")
        .map(|m| {
            m.as_str()
                .ok_or_else(|| fail(2, "config: \"mode\" must be a string"))
        })
        .transpose()?
        .unwrap_or("both");
    let (run_fixed, run_worst) = match mode {
        "fixed" => (true, false),
        "worst" => (false, true),
        "both" => (true, true),
        other => {
            return Err(fail(
                2,
                format!("config: unknown mode {other:?}; expected fixed, worst, or both"),
            ))
        }
    };
    let budget = field_u64(&config, "budget", "config")?;
    let episodes = field_u64(&config, "episodes", "config")?;
    let sim_seed = field_u64(&config, "seed", "config")?.unwrap_or(0);
    let out = a.out.clone().or_else(|| {
        config
            .get("out")
            .and_then(Value::as_str)
            .map(PathBuf::from)
    });

    let mut csv = String::from(
        "env,S,A,H,lookahead,mode,ratio,numerator,denominator,certified,degenerate,mc_mean,mc_std_error\n",
    );
    for (idx, entry) in env_list.iter().enumerate() {
        let ctx = format!("config.envs[{idx}]");
        let built = if let Some(path) = entry.get("path") {
            let path = path
                .as_str()
                .ok_or_else(|| fail(2, format!("{ctx}.path must be a string")))?;
            let (mdp, rewards) = read_package(Path::new(path))?;
            BuiltEnv {
                label: path.to_string(),
                mdp,
                rewards,
                descriptor: None,
            }
        } else {
            let family = entry
                .get("family")
                .and_then(Value::as_str)
                .ok_or_else(|| fail(2, format!("{ctx} needs a \"family\" or \"path\" key")))?;
            let params = EnvParams {
                states: field_usize(entry, "states", &ctx)?,
                actions: field_usize(entry, "actions", &ctx)?,
                horizon: field_usize(entry, "horizon", &ctx)?,
                seed: field_u64(entry, "seed", &ctx)?,
                epsilon: field_f64(entry, "epsilon", &ctx)?,
                depth: field_usize(entry, "depth", &ctx)?,
                n: field_usize(entry, "n", &ctx)?,
                alpha: field_f64(entry, "alpha", &ctx)?,
                beta: field_f64(entry, "beta", &ctx)?,
                reward_value: field_f64(entry, "reward_value", &ctx)?,
            };
            build_env(family, &params)?
        };
        let label = entry
            .get("label")
            .and_then(Value::as_str)
            .map(str::to_string)
            .unwrap_or(built.label);
        if label.contains(',') {
            return Err(fail(2, format!("{ctx}: label {label:?} contains a comma")));
        }

        // Per-env "lookaheads" overrides the config-level list.
        let spec = entry.get("lookaheads").or_else(|| config.get("lookaheads"));
        let lookaheads: Vec<usize> = match spec {
            None => (1..=built.mdp.horizon).collect(),
            Some(Value::String(s)) if s == "all" => (1..=built.mdp.horizon).collect(),
            Some(Value::Array(items)) => {
                let mut ls = Vec::new();
                for item in items {
                    let l = item.as_u64().ok_or_else(|| {
                        fail(2, "config: \"lookaheads\" entries must be integers")
                    })? as usize;
                    if l > built.mdp.horizon {
                        return Err(fail(
                            2,
                            format!(
                                "{ctx} ({label}): lookahead {l} exceeds the horizon {}",
                                built.mdp.horizon
                            ),
                        ));
                    }
                    ls.push(l);
                }
                ls
            }
            Some(_) => {
                return Err(fail(
                    2,
                    "config: \"lookaheads\" must be an integer array or \"all\"",
                ))
            }
        };

        let dims = format!(
            "{},{},{}",
            built.mdp.num_states, built.mdp.num_actions, built.mdp.horizon
        );
        for &l in &lookaheads {
            if run_fixed {
                let rewards = built.rewards.as_ref().ok_or_else(|| {
                    fail(2, format!("{ctx} ({label}) has no rewards; cannot run fixed mode"))
                })?;
                let rep = cr_fixed(&built.mdp, rewards, l)?;
                let (mc_mean, mc_se) = match episodes {
                    None => (String::new(), String::new()),
                    Some(n) => {
                        let reach = optimal_reach(&built.mdp);
                        let base = sup_lookahead_value(&built.mdp, rewards, &reach, l)?.witness_base;
                        let est = simulate_greedy_lookahead(
                            &built.mdp, rewards, &base, l, n, sim_seed,
                        )?;
                        (sig(est.mean), sig(est.std_error))
                    }
                };
                csv.push_str(&format!(
                    "{label},{dims},{l},{},{},{},{},{},{},{mc_mean},{mc_se}\n",
                    rep.mode.as_str(),
                    sig(rep.ratio),
                    sig(rep.numerator),
                    sig(rep.denominator),
                    rep.certified,
                    rep.degenerate,
                ));
            }
            if run_worst {
                let rep = cr_worst_expectations(&built.mdp, l, false, budget)?;
                csv.push_str(&format!(
                    "{label},{dims},{l},{},{},{},{},{},{},,\n",
                    rep.mode.as_str(),
                    sig(rep.ratio),
                    sig(rep.numerator),
                    sig(rep.denominator),
                    rep.certified,
                    rep.degenerate,
                ));
            }
        }
    }
    emit(&out, &csv)?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

struct Checker {
    ran: usize,
    failures: Vec<String>,
}

impl Checker {
    fn new() -> Self {
        Checker {
            ran: 0,
            failures: Vec::new(),
        }
    }

    fn assert(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        self.ran += 1;
        if !ok {
            self.failures.push(msg());
        }
    }
}

fn check_fast(c: &mut Checker) -> Result<(), Failure> {
    // Chain: both end-point lookaheads hit the same fixed ratio.
    let (mdp, rewards, _) = envs::chain(4, 2, 1.0)?;
    c.assert(mdp.validate().is_empty(), || "chain mdp fails validation".into());
    let r1 = cr_fixed(&mdp, &rewards, 1)?;
    let r4 = cr_fixed(&mdp, &rewards, 4)?;
    c.assert((r1.ratio - 0.25).abs() <= 1e-9, || {
        format!("chain H=4 A=2 L=1 ratio {} vs 0.25", r1.ratio)
    });
    c.assert((r1.ratio - r4.ratio).abs() <= 1e-12, || {
        format!("chain end-point ratios differ: {} vs {}", r1.ratio, r4.ratio)
    });

    // Bandit in disguise: worst case is exactly 1/A and certified.
    let bandit = envs::disguised_bandit(2, 3, 3, 5);
    let rb = cr_worst_expectations(&bandit, 1, false, None)?;
    c.assert(rb.certified && (rb.ratio - 1.0 / 3.0).abs() <= 1e-8, || {
        format!("bandit A=3 worst case {} vs 1/3", rb.ratio)
    });

    // Grid: the balanced flow policy keeps every edge above the floor.
    let (grid, _, _) = envs::grid(4)?;
    let occ = occupancy_of_policy(&grid, &envs::grid_flow_policy(4)?);
    c.assert(occ.validate(&grid).is_empty(), || {
        "grid flow occupancy fails validation".into()
    });
    let reach = optimal_reach(&grid);
    let mut min_flow = f64::INFINITY;
    for h in 0..grid.horizon {
        for s in 0..grid.num_states {
            if reach.d_star[[h, s]] <= 1e-12 {
                continue;
            }
            for act in grid.available_actions(h, s) {
                min_flow = min_flow.min(occ.d[[h, s, act]]);
            }
        }
    }
    c.assert(min_flow >= 1.0 / 6.0 - 1e-9, || {
        format!("grid n=4 min edge flow {min_flow} under 1/6")
    });

    // Wire format round trip preserves the package bit for bit.
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let sample = envs::random_mdp(2, 2, 3, &mut rng);
    let sample_rewards = envs::random_rewards(&sample, &mut rng);
    let text = serde_json::to_string(&wire::package_to_json(&sample, Some(&sample_rewards), None))
        .expect("package serializes");
    let parsed: Value = serde_json::from_str(&text).expect("round trip parses");
    let (back, back_rewards) = wire::package_from_json(&parsed)?;
    c.assert(back.kernel == sample.kernel && back.init == sample.init, || {
        "wire round trip changed the mdp".into()
    });
    c.assert(
        back_rewards.map(|r| r.expectation == sample_rewards.expectation) == Some(true),
        || "wire round trip changed the rewards".into(),
    );

    // Random instance: occupancy flows conserve mass; worst-case ratios
    // respect the analytic floor and never improve with more lookahead.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let random = envs::random_mdp(2, 2, 3, &mut rng);
    let pol = envs::random_policy(&random, &mut rng);
    c.assert(
        occupancy_of_policy(&random, &pol).validate(&random).is_empty(),
        || "random occupancy fails validation".into(),
    );
    let mut prev = f64::INFINITY;
    for l in 1..=3usize {
        let rep = cr_worst_expectations(&random, l, false, None)?;
        let bound = analytic_lower_bound(&random, l).best();
        c.assert(rep.certified, || format!("random L={l} not certified"));
        c.assert(rep.ratio >= bound - 1e-8, || {
            format!("random L={l} ratio {} under the floor {bound}", rep.ratio)
        });
        c.assert(rep.ratio <= prev + 1e-8, || {
            format!("random worst case improved with lookahead: {} then {}", prev, rep.ratio)
        });
        prev = rep.ratio;
    }

    // Delayed tree: the exact full-lookahead value has a closed form.
    let (tree, tree_rewards, _) = envs::delayed_tree(2, 1, 5, 0.05)?;
    let exact = exact_lookahead_value(&tree, &tree_rewards, 5)?;
    let want = 1.0 - 0.95f64.powi(8);
    c.assert((exact - want).abs() <= 1e-9, || {
        format!("tree exact value {exact} vs {want}")
    });

    // Reveal windows partition the horizon exactly once for L >= 1.
    for l in [1usize, 2, 4] {
        let spec = LookaheadSpec::new(l, 4)?;
        let mut seen = [0usize; 4];
        for t in 0..4 {
            for h in spec.revealed_at(t, 4) {
                seen[h] += 1;
            }
        }
        c.assert(seen.iter().all(|&k| k == 1), || {
            format!("L={l} reveal windows cover steps {seen:?} times")
        });
    }
    Ok(())
}

fn check_full(c: &mut Checker) -> Result<(), Failure> {
    // Long-shot sandwich: the supremum discounted by the collision
    // factor lower-bounds the exact value.
    let (tree, rewards, _) = envs::delayed_tree(2, 0, 4, 0.2)?;
    let reach = optimal_reach(&tree);
    let sup = sup_lookahead_value(&tree, &rewards, &reach, 4)?;
    let exact = exact_lookahead_value(&tree, &rewards, 4)?;
    let factor = sup.long_shot_factor.unwrap_or(1.0);
    c.assert(
        factor * sup.value <= exact + 1e-9 && exact <= sup.value + 1e-9,
        || format!("sandwich violated: {} vs {exact} vs {}", factor * sup.value, sup.value),
    );

    // Grid search over reward tables converges onto the LP optimum.
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let small = envs::random_mdp(1, 2, 2, &mut rng);
    let exact_cr = cr_worst_expectations(&small, 2, false, None)?;
    let mut last = f64::INFINITY;
    for g in [2usize, 4, 8, 16] {
        let out = reward_grid_oracle(&small, 2, g, 10_000_000)?;
        c.assert(out.min_ratio <= last + 1e-12, || {
            format!("grid oracle minimum rose at g={g}: {last} -> {}", out.min_ratio)
        });
        last = out.min_ratio;
    }
    c.assert(
        last >= exact_cr.ratio - 1e-8 && last <= exact_cr.ratio + 0.1,
        || format!("grid oracle {last} not within [+0, 0.1] of {}", exact_cr.ratio),
    );

    // Frozen worst case of the three-step chain.
    let (chain3, _, _) = envs::chain(3, 2, 1.0)?;
    let rep = cr_worst_expectations(&chain3, 3, false, None)?;
    c.assert((rep.ratio - 0.2).abs() <= 1e-8, || {
        format!("chain H=3 A=2 worst case {} vs 0.2", rep.ratio)
    });

    // Ergodic kernels stay inside their bounded-coordinate box.
    for seed in [11u64, 12] {
        let (mdp, _) = envs::ergodic_kernel(3, 2, 3, 0.8, 0.4, seed)?;
        let mut ok = true;
        for h in 0..mdp.horizon {
            for s in 0..mdp.num_states {
                for a in 0..mdp.num_actions {
                    let row: Vec<f64> =
                        (0..mdp.num_states).map(|s2| mdp.kernel[[h, s, a, s2]]).collect();
                    ok &= envs::in_p_alpha_beta(&row, 0.8, 0.4);
                }
            }
        }
        c.assert(ok, || format!("ergodic seed={seed} kernel row outside the box"));
    }

    // Monte-Carlo state-action frequencies track the flow recursion.
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mdp = envs::random_mdp(3, 2, 3, &mut rng);
    let policy = envs::random_policy(&mdp, &mut rng);
    let rewards = envs::random_rewards(&mdp, &mut rng);
    let occ = occupancy_of_policy(&mdp, &policy);
    let episodes = 100_000usize;
    let mut counts = vec![0.0f64; mdp.horizon * mdp.num_states * mdp.num_actions];
    let mut sim_rng = ChaCha8Rng::seed_from_u64(34);
    for _ in 0..episodes {
        let trace = sample_episode(&mdp, &rewards, &policy, &mut sim_rng);
        for h in 0..mdp.horizon {
            let idx = (h * mdp.num_states + trace.states[h]) * mdp.num_actions + trace.actions[h];
            counts[idx] += 1.0;
        }
    }
    let mut max_dev = 0.0f64;
    for h in 0..mdp.horizon {
        for s in 0..mdp.num_states {
            for a in 0..mdp.num_actions {
                let idx = (h * mdp.num_states + s) * mdp.num_actions + a;
                max_dev = max_dev.max((counts[idx] / episodes as f64 - occ.d[[h, s, a]]).abs());
            }
        }
    }
    c.assert(max_dev <= 0.012, || {
        format!("simulated frequencies deviate from the flow by {max_dev}")
    });
    Ok(())
}

fn cmd_check(a: &CheckArgs) -> Result<u8, Failure> {
    let mut c = Checker::new();
    if let Some(path) = &a.input {
        match read_package(path) {
            Err(f) => c.assert(false, || format!("input {}: {}", path.display(), f.message)),
            Ok((mdp, rewards)) => {
                for v in mdp.validate() {
                    c.assert(false, || format!("input {}: {v}", path.display()));
                }
                if let Some(r) = &rewards {
                    for v in r.validate(&mdp) {
                        c.assert(false, || format!("input {}: {v}", path.display()));
                    }
                }
                c.assert(true, || String::new());
            }
        }
    }
    if let Err(f) = check_fast(&mut c) {
        c.assert(false, || format!("fast suite aborted: {}", f.message));
    }
    if matches!(a.level, CheckLevel::Full) {
        if let Err(f) = check_full(&mut c) {
            c.assert(false, || format!("full suite aborted: {}", f.message));
        }
    }
    let level = match a.level {
        CheckLevel::Fast => "fast",
        CheckLevel::Full => "full",
    };
    if c.failures.is_empty() {
        println!("check {level}: ok ({} checks)", c.ran);
        Ok(0)
    } else {
        println!(
            "check {level}: {} of {} checks failed",
            c.failures.len(),
            c.ran
        );
        for f in c.failures.iter().take(20) {
            println!("  - {f}");
        }
        if c.failures.len() > 20 {
            println!("  ... and {} more", c.failures.len() - 20);
        }
        Ok(1)
    }
}
