//! Policy specifications on the command line: `name[:key=value,...]`, with
//! `mcts-N` as a shorthand for an MCTS budget of `N`.

use gospa_sm::planners::Policy;
use serde_json::{Map, Value};

use crate::CliError;

/// Overrides from `--budget` and `--lambda`. Keys written in a policy
/// string take precedence.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub budget: Option<usize>,
    pub lambda: Option<f64>,
}

fn scalar(text: &str) -> Value {
    serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string()))
}

fn supports(name: &str, key: &str) -> bool {
    matches!((name, key), ("mcts", "budget") | ("mcts", "discount") | ("exhaustive", "discount"))
}

fn apply_overrides(obj: &mut Map<String, Value>, name: &str, o: Overrides) {
    if let Some(b) = o.budget.filter(|_| supports(name, "budget")) {
        obj.insert("budget".into(), b.into());
    }
    if let Some(l) = o.lambda.filter(|_| supports(name, "discount")) {
        obj.insert("discount".into(), l.into());
    }
}

fn to_policy(obj: Map<String, Value>, spec: &str) -> Result<Policy, CliError> {
    let policy: Policy = serde_json::from_value(Value::Object(obj))
        .map_err(|e| CliError::Config(format!("policy `{spec}`: {e}")))?;
    policy
        .validate()
        .map_err(|e| CliError::Config(format!("policy `{spec}`: {e}")))?;
    Ok(policy)
}

pub fn parse_policy(spec: &str, overrides: Overrides) -> Result<Policy, CliError> {
    let (head, params) = match spec.split_once(':') {
        Some((h, p)) => (h.trim(), Some(p)),
        None => (spec.trim(), None),
    };
    let mut obj = Map::new();
    let name = match head {
        "kl-detect" => {
            obj.insert("mode".into(), "detect_only".into());
            "kl"
        }
        h => match h.strip_prefix("mcts-") {
            Some(n) => {
                let budget: usize = n
                    .parse()
                    .map_err(|_| CliError::Config(format!("policy `{spec}`: bad budget `{n}`")))?;
                obj.insert("budget".into(), budget.into());
                "mcts"
            }
            None => h,
        },
    };
    obj.insert("name".into(), name.into());
    let mut explicit = Map::new();
    for pair in params.into_iter().flat_map(|p| p.split(',')).filter(|p| !p.trim().is_empty()) {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("policy `{spec}`: expected key=value, got `{pair}`")))?;
        let k = match k.trim() {
            "lambda" => "discount",
            other => other,
        };
        explicit.insert(k.to_string(), scalar(v.trim()));
    }
    let mut flagged = overrides;
    if obj.contains_key("budget") {
        flagged.budget = None;
    }
    apply_overrides(&mut obj, name, flagged);
    obj.extend(explicit);
    to_policy(obj, spec)
}

/// Applies `--budget`/`--lambda` to a policy taken from a config file.
pub fn override_policy(policy: &Policy, overrides: Overrides) -> Result<Policy, CliError> {
    let value = serde_json::to_value(policy).expect("policy serialises");
    let Value::Object(mut obj) = value else {
        unreachable!("policies serialise to objects")
    };
    let name = obj["name"].as_str().unwrap_or_default().to_string();
    apply_overrides(&mut obj, &name, overrides);
    to_policy(obj, &policy.label())
}
