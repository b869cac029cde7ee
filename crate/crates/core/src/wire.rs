//! JSON wire format for every core object, with explicit shapes and
//! defensive parsing. Arrays are nested lists in `[h][s][a][s']` order;
//! shapes must agree with the declared `S`, `A`, `H`.

use ndarray::{Array1, Array2, Array3, Array4};
use serde_json::{json, Value};

use crate::cr::CrReport;
use crate::envs::EnvDescriptor;
use crate::mdp::{
    DiscreteSupport, MarkovPolicy, OccupancyMeasure, RewardFamily, RewardSpec, TabularMdp,
};
use crate::reach::ReachTable;
use crate::sim::McEstimate;
use crate::Error;

fn bad(path: &str, what: &str) -> Error {
    Error::InvalidInput(format!("{path}: {what}"))
}

fn get<'a>(v: &'a Value, key: &str, path: &str) -> Result<&'a Value, Error> {
    v.get(key)
        .ok_or_else(|| bad(path, &format!("missing field '{key}'")))
}

fn as_f64(v: &Value, path: &str) -> Result<f64, Error> {
    v.as_f64().ok_or_else(|| bad(path, "expected a number"))
}

fn as_usize(v: &Value, path: &str) -> Result<usize, Error> {
    v.as_u64()
        .map(|u| u as usize)
        .ok_or_else(|| bad(path, "expected a nonnegative integer"))
}

fn as_bool(v: &Value, path: &str) -> Result<bool, Error> {
    v.as_bool().ok_or_else(|| bad(path, "expected a boolean"))
}

fn as_list<'a>(v: &'a Value, len: usize, path: &str) -> Result<&'a [Value], Error> {
    let items = v
        .as_array()
        .ok_or_else(|| bad(path, "expected a list"))?
        .as_slice();
    if items.len() != len {
        return Err(bad(
            path,
            &format!("expected length {len}, got {}", items.len()),
        ));
    }
    Ok(items)
}

fn vec_f64(v: &Value, len: usize, path: &str) -> Result<Vec<f64>, Error> {
    as_list(v, len, path)?
        .iter()
        .enumerate()
        .map(|(i, x)| as_f64(x, &format!("{path}[{i}]")))
        .collect()
}

fn array3(v: &Value, dims: (usize, usize, usize), path: &str) -> Result<Array3<f64>, Error> {
    let mut out = Array3::zeros(dims);
    for (h, vh) in as_list(v, dims.0, path)?.iter().enumerate() {
        let ph = format!("{path}[{h}]");
        for (s, vs) in as_list(vh, dims.1, &ph)?.iter().enumerate() {
            let ps = format!("{ph}[{s}]");
            let row = vec_f64(vs, dims.2, &ps)?;
            for (a, r) in row.into_iter().enumerate() {
                out[[h, s, a]] = r;
            }
        }
    }
    Ok(out)
}

fn array3_json(a: &Array3<f64>) -> Value {
    let (d0, d1, d2) = a.dim();
    Value::Array(
        (0..d0)
            .map(|h| {
                Value::Array(
                    (0..d1)
                        .map(|s| {
                            Value::Array((0..d2).map(|x| json!(a[[h, s, x]])).collect())
                        })
                        .collect(),
                )
            })
            .collect(),
    )
}

fn array2_json(a: &Array2<f64>) -> Value {
    let (d0, d1) = a.dim();
    Value::Array(
        (0..d0)
            .map(|h| Value::Array((0..d1).map(|s| json!(a[[h, s]])).collect()))
            .collect(),
    )
}

pub fn mdp_to_json(mdp: &TabularMdp) -> Value {
    let (hh, ss, aa) = (mdp.horizon, mdp.num_states, mdp.num_actions);
    let p: Value = Value::Array(
        (0..hh)
            .map(|h| {
                Value::Array(
                    (0..ss)
                        .map(|s| {
                            Value::Array(
                                (0..aa)
                                    .map(|a| {
                                        Value::Array(
                                            (0..ss)
                                                .map(|s2| json!(mdp.kernel[[h, s, a, s2]]))
                                                .collect(),
                                        )
                                    })
                                    .collect(),
                            )
                        })
                        .collect(),
                )
            })
            .collect(),
    );
    let mut obj = json!({
        "S": ss,
        "A": aa,
        "H": hh,
        "mu": mdp.init.iter().copied().collect::<Vec<f64>>(),
        "P": p,
        "stationary": mdp.stationary_kernel,
    });
    if let Some(av) = &mdp.available {
        obj["allowed"] = Value::Array(
            (0..hh)
                .map(|h| {
                    Value::Array(
                        (0..ss)
                            .map(|s| {
                                Value::Array((0..aa).map(|a| json!(av[[h, s, a]])).collect())
                            })
                            .collect(),
                    )
                })
                .collect(),
        );
    }
    obj
}

pub fn mdp_from_json(v: &Value) -> Result<TabularMdp, Error> {
    let ss = as_usize(get(v, "S", "mdp")?, "mdp.S")?;
    let aa = as_usize(get(v, "A", "mdp")?, "mdp.A")?;
    let hh = as_usize(get(v, "H", "mdp")?, "mdp.H")?;
    let mu = Array1::from_vec(vec_f64(get(v, "mu", "mdp")?, ss, "mdp.mu")?);
    let mut kernel = Array4::zeros((hh, ss, aa, ss));
    let p = get(v, "P", "mdp")?;
    for (h, vh) in as_list(p, hh, "mdp.P")?.iter().enumerate() {
        let ph = format!("mdp.P[{h}]");
        for (s, vs) in as_list(vh, ss, &ph)?.iter().enumerate() {
            let ps = format!("{ph}[{s}]");
            for (a, va) in as_list(vs, aa, &ps)?.iter().enumerate() {
                let pa = format!("{ps}[{a}]");
                let row = vec_f64(va, ss, &pa)?;
                for (s2, x) in row.into_iter().enumerate() {
                    kernel[[h, s, a, s2]] = x;
                }
            }
        }
    }
    let stationary = match v.get("stationary") {
        Some(b) => as_bool(b, "mdp.stationary")?,
        None => false,
    };
    let mdp = TabularMdp::new(kernel, mu, stationary)?;
    match v.get("allowed") {
        None => Ok(mdp),
        Some(al) => {
            let mut available = Array3::from_elem((hh, ss, aa), true);
            for (h, vh) in as_list(al, hh, "mdp.allowed")?.iter().enumerate() {
                let ph = format!("mdp.allowed[{h}]");
                for (s, vs) in as_list(vh, ss, &ph)?.iter().enumerate() {
                    let ps = format!("{ph}[{s}]");
                    for (a, va) in as_list(vs, aa, &ps)?.iter().enumerate() {
                        available[[h, s, a]] = as_bool(va, &format!("{ps}[{a}]"))?;
                    }
                }
            }
            mdp.with_availability(available)
        }
    }
}

pub fn rewards_to_json(rewards: &RewardSpec) -> Value {
    let mut obj = json!({
        "r": array3_json(&rewards.expectation),
        "stationary": rewards.stationary_reward,
    });
    match &rewards.family {
        RewardFamily::Deterministic => {
            obj["family"] = json!("deterministic");
        }
        RewardFamily::LongShot { epsilon } => {
            obj["family"] = json!("longshot");
            obj["epsilon"] = json!(epsilon);
        }
        RewardFamily::FiniteSupport { support } => {
            obj["family"] = json!("finite_support");
            let (d0, d1, d2) = support.dim();
            obj["support"] = Value::Array(
                (0..d0)
                    .map(|h| {
                        Value::Array(
                            (0..d1)
                                .map(|s| {
                                    Value::Array(
                                        (0..d2)
                                            .map(|a| {
                                                let e = &support[[h, s, a]];
                                                json!({
                                                    "values": e.values,
                                                    "probs": e.probs,
                                                })
                                            })
                                            .collect(),
                                    )
                                })
                                .collect(),
                        )
                    })
                    .collect(),
            );
        }
    }
    obj
}

pub fn rewards_from_json(v: &Value, dims: (usize, usize, usize)) -> Result<RewardSpec, Error> {
    let expectation = array3(get(v, "r", "rewards")?, dims, "rewards.r")?;
    let family = get(v, "family", "rewards")?
        .as_str()
        .ok_or_else(|| bad("rewards.family", "expected a string"))?
        .to_string();
    let stationary = match v.get("stationary") {
        Some(b) => as_bool(b, "rewards.stationary")?,
        None => false,
    };
    let mut spec = match family.as_str() {
        "deterministic" => RewardSpec::deterministic(expectation),
        "longshot" => {
            let eps = as_f64(get(v, "epsilon", "rewards")?, "rewards.epsilon")?;
            RewardSpec::long_shot(expectation, eps)?
        }
        "finite_support" => {
            let sup = get(v, "support", "rewards")?;
            let mut support = Array3::from_elem(dims, DiscreteSupport {
                values: vec![0.0],
                probs: vec![1.0],
            });
            for (h, vh) in as_list(sup, dims.0, "rewards.support")?.iter().enumerate() {
                let ph = format!("rewards.support[{h}]");
                for (s, vs) in as_list(vh, dims.1, &ph)?.iter().enumerate() {
                    let ps = format!("{ph}[{s}]");
                    for (a, va) in as_list(vs, dims.2, &ps)?.iter().enumerate() {
                        let pa = format!("{ps}[{a}]");
                        let values = get(va, "values", &pa)?;
                        let n = values
                            .as_array()
                            .ok_or_else(|| bad(&pa, "expected values list"))?
                            .len();
                        let values = vec_f64(values, n, &format!("{pa}.values"))?;
                        let probs = vec_f64(get(va, "probs", &pa)?, n, &format!("{pa}.probs"))?;
                        support[[h, s, a]] = DiscreteSupport { values, probs };
                    }
                }
            }
            RewardSpec {
                expectation,
                family: RewardFamily::FiniteSupport { support },
                stationary_reward: false,
            }
        }
        other => {
            return Err(bad(
                "rewards.family",
                &format!("unknown family '{other}'"),
            ))
        }
    };
    // The flag is only honored when the table really is step-invariant.
    spec.stationary_reward = stationary && stationary_expectation(&spec.expectation);
    Ok(spec)
}

fn stationary_expectation(r: &Array3<f64>) -> bool {
    let (d0, d1, d2) = r.dim();
    for h in 1..d0 {
        for s in 0..d1 {
            for a in 0..d2 {
                if r[[h, s, a]] != r[[0, s, a]] {
                    return false;
                }
            }
        }
    }
    true
}

pub fn policy_to_json(policy: &MarkovPolicy) -> Value {
    json!({
        "probs": array3_json(&policy.probs),
        "deterministic": policy.deterministic,
    })
}

pub fn policy_from_json(v: &Value, dims: (usize, usize, usize)) -> Result<MarkovPolicy, Error> {
    let probs = array3(get(v, "probs", "policy")?, dims, "policy.probs")?;
    let deterministic = match v.get("deterministic") {
        Some(b) => as_bool(b, "policy.deterministic")?,
        None => false,
    };
    Ok(MarkovPolicy {
        probs,
        deterministic,
    })
}

pub fn occupancy_to_json(occ: &OccupancyMeasure) -> Value {
    json!({ "d": array3_json(&occ.d) })
}

pub fn occupancy_from_json(v: &Value, dims: (usize, usize, usize)) -> Result<OccupancyMeasure, Error> {
    Ok(OccupancyMeasure {
        d: array3(get(v, "d", "occupancy")?, dims, "occupancy.d")?,
    })
}

/// Reach output: the unconditional table plus, per target step, the
/// conditional table flattened as `[h][s][t][s1]`.
pub fn reach_to_json(reach: &ReachTable, full: bool) -> Value {
    let mut obj = json!({ "d_star": array2_json(&reach.d_star) });
    if full {
        let (hh, ss, _, _) = reach.u.dim();
        obj["u"] = Value::Array(
            (0..hh)
                .map(|h| {
                    Value::Array(
                        (0..ss)
                            .map(|s| {
                                Value::Array(
                                    (0..hh)
                                        .map(|t| {
                                            Value::Array(
                                                (0..ss)
                                                    .map(|s1| json!(reach.u[[h, s, t, s1]]))
                                                    .collect(),
                                            )
                                        })
                                        .collect(),
                                )
                            })
                            .collect(),
                    )
                })
                .collect(),
        );
    }
    obj
}

pub fn report_to_json(report: &CrReport) -> Value {
    // JSON has no infinity literal; degenerate ratios become "inf".
    let ratio = if report.ratio.is_finite() {
        json!(report.ratio)
    } else {
        json!("inf")
    };
    let mut obj = json!({
        "mode": report.mode.as_str(),
        "lookahead": report.lookahead,
        "ratio": ratio,
        "numerator": report.numerator,
        "denominator": report.denominator,
        "certified": report.certified,
        "degenerate": report.degenerate,
        "lps_solved": report.lps_solved,
        "nodes_visited": report.nodes_visited,
    });
    if let Some(r) = &report.witness_rewards {
        obj["witness_rewards"] = array3_json(r);
    }
    if let Some(p) = &report.witness_policy {
        obj["witness_policy"] = policy_to_json(p);
    }
    if let Some(p) = &report.witness_base {
        obj["witness_base"] = policy_to_json(p);
    }
    obj
}

pub fn estimate_to_json(est: &McEstimate) -> Value {
    json!({
        "mean": est.mean,
        "std_error": est.std_error,
        "episodes": est.episodes,
        "confidence_level": est.confidence_level,
        "half_width": est.half_width(),
    })
}

/// Bundle written by the environment generators: the MDP, optionally
/// rewards, and the generator's descriptor with its reference bounds.
pub fn package_to_json(
    mdp: &TabularMdp,
    rewards: Option<&RewardSpec>,
    descriptor: Option<&EnvDescriptor>,
) -> Value {
    let mut obj = json!({ "mdp": mdp_to_json(mdp) });
    if let Some(r) = rewards {
        obj["rewards"] = rewards_to_json(r);
    }
    if let Some(d) = descriptor {
        obj["descriptor"] = serde_json::to_value(d).expect("descriptor serializes");
    }
    obj
}

pub fn package_from_json(v: &Value) -> Result<(TabularMdp, Option<RewardSpec>), Error> {
    let mdp = mdp_from_json(get(v, "mdp", "package")?)?;
    let dims = (mdp.horizon, mdp.num_states, mdp.num_actions);
    let rewards = match v.get("rewards") {
        None => None,
        Some(r) => Some(rewards_from_json(r, dims)?),
    };
    Ok((mdp, rewards))
}
