//! JSON form of protocol trees.
//!
//! ```text
//! node: {"dtheta": x, "phi_y": x, "n": 1, "shelve0": [["F,mF", "F,mF"], ...],
//!        "shelve1": [...], "verify": false, "child0": ..., "child1": ...}
//! leaf: {"leaf": "F,mF"}
//! ```
//!
//! The root may carry an extra `"prelude"` pulse list applied before the
//! first cycle. Angles are radians, either as numbers or as strings such as
//! `"pi/2"` or `"3*pi/4"`.

use std::f64::consts::PI;
use std::str::FromStr;

use serde_json::{json, Map, Value};

use super::{Branch, ProtocolNode, ProtocolTree, ShelvingPulse};
use crate::atomic::LevelLabel;
use crate::dynamics::ConditionalRotation;
use crate::error::{Error, Result};

const NODE_KEYS: [&str; 9] = ["dtheta", "phi_y", "n", "shelve0", "shelve1", "verify", "child0", "child1", "prelude"];

/// Parses `1.5`, `pi`, `-pi/2`, `3*pi/4`, `0.25pi`.
pub fn parse_angle(text: &str) -> Result<f64> {
    let bad = || Error::InvalidProtocol(format!("cannot parse angle {text:?}"));
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_lowercase();
    if let Ok(x) = s.parse::<f64>() {
        return Ok(x);
    }
    let s = s.replace('π', "pi");
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.to_string(), d.parse::<f64>().map_err(|_| bad())?),
        None => (s.clone(), 1.0),
    };
    let Some(idx) = num.find("pi") else {
        return Err(bad());
    };
    let coeff = num[..idx].trim_end_matches('*');
    if !num[idx + 2..].is_empty() {
        return Err(bad());
    }
    let c = match coeff {
        "" | "+" => 1.0,
        "-" => -1.0,
        c => c.parse::<f64>().map_err(|_| bad())?,
    };
    let x = c * PI / den;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(bad())
    }
}

impl ProtocolTree {
    pub fn to_json(&self) -> Value {
        let mut root = branch_to_json(&self.root);
        if !self.prelude.is_empty() {
            if let Value::Object(map) = &mut root {
                map.insert("prelude".into(), pulses_to_json(&self.prelude));
            }
        }
        root
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("tree JSON is always serializable")
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        let prelude = match value.get("prelude") {
            Some(p) => pulses_from_json(p, "root.prelude")?,
            None => Vec::new(),
        };
        if value.get("leaf").is_some() && !prelude.is_empty() {
            return Err(Error::InvalidProtocol("root.prelude requires a node at the root".into()));
        }
        Ok(Self {
            prelude,
            root: branch_from_json(value, "root", true)?,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::from_json(&serde_json::from_str(text)?)
    }
}

impl FromStr for ProtocolTree {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_json_str(s)
    }
}

fn pulses_to_json(pulses: &[ShelvingPulse]) -> Value {
    Value::Array(
        pulses
            .iter()
            .map(|p| json!([p.from.to_string(), p.to.to_string()]))
            .collect(),
    )
}

fn branch_to_json(branch: &Branch) -> Value {
    match branch {
        Branch::Leaf(l) => json!({ "leaf": l.to_string() }),
        Branch::Node(n) => json!({
            "dtheta": n.rotation.dtheta,
            "phi_y": n.rotation.phi_y,
            "n": n.vote_order,
            "shelve0": pulses_to_json(&n.shelving[0]),
            "shelve1": pulses_to_json(&n.shelving[1]),
            "verify": n.verify_shelving,
            "child0": branch_to_json(&n.children[0]),
            "child1": branch_to_json(&n.children[1]),
        }),
    }
}

fn err(at: &str, msg: impl std::fmt::Display) -> Error {
    Error::InvalidProtocol(format!("{at}: {msg}"))
}

fn angle_from_json(v: &Value, at: &str) -> Result<f64> {
    match v {
        Value::Number(n) => n.as_f64().ok_or_else(|| err(at, "angle out of range")),
        Value::String(s) => parse_angle(s).map_err(|e| err(at, e)),
        _ => Err(err(at, "expected a number or angle string")),
    }
}

fn label_from_json(v: &Value, at: &str) -> Result<LevelLabel> {
    v.as_str()
        .ok_or_else(|| err(at, "expected a \"F,mF\" string"))?
        .parse()
        .map_err(|e| err(at, e))
}

fn pulses_from_json(v: &Value, at: &str) -> Result<Vec<ShelvingPulse>> {
    let list = v.as_array().ok_or_else(|| err(at, "expected a list of [from, to] pairs"))?;
    list.iter()
        .enumerate()
        .map(|(i, pair)| {
            let here = format!("{at}[{i}]");
            match pair.as_array().map(Vec::as_slice) {
                Some([from, to]) => Ok(ShelvingPulse::new(
                    label_from_json(from, &here)?,
                    label_from_json(to, &here)?,
                )),
                _ => Err(err(&here, "expected [from, to]")),
            }
        })
        .collect()
}

fn branch_from_json(v: &Value, at: &str, is_root: bool) -> Result<Branch> {
    let obj: &Map<String, Value> = v.as_object().ok_or_else(|| err(at, "expected an object"))?;
    if let Some(leaf) = obj.get("leaf") {
        if obj.len() != 1 {
            return Err(err(at, "a leaf has only the \"leaf\" key"));
        }
        return Ok(Branch::Leaf(label_from_json(leaf, &format!("{at}.leaf"))?));
    }
    for key in obj.keys() {
        if !NODE_KEYS.contains(&key.as_str()) || (key == "prelude" && !is_root) {
            return Err(err(at, format!("unknown key {key:?}")));
        }
    }
    let get = |key: &str| obj.get(key).ok_or_else(|| err(at, format!("missing key {key:?}")));
    let dtheta = angle_from_json(get("dtheta")?, &format!("{at}.dtheta"))?;
    let phi_y = angle_from_json(get("phi_y")?, &format!("{at}.phi_y"))?;
    let vote_order = match obj.get("n") {
        None => 1,
        Some(n) => n
            .as_u64()
            .filter(|&n| n >= 1)
            .ok_or_else(|| err(&format!("{at}.n"), "expected a positive integer"))? as usize,
    };
    let shelve = |key: &str| match obj.get(key) {
        None => Ok(Vec::new()),
        Some(p) => pulses_from_json(p, &format!("{at}.{key}")),
    };
    let verify_shelving = match obj.get("verify") {
        None => false,
        Some(b) => b.as_bool().ok_or_else(|| err(&format!("{at}.verify"), "expected a boolean"))?,
    };
    let child0 = branch_from_json(get("child0")?, &format!("{at}.child0"), false)?;
    let child1 = branch_from_json(get("child1")?, &format!("{at}.child1"), false)?;
    Ok(Branch::Node(Box::new(ProtocolNode {
        rotation: ConditionalRotation::new(dtheta, phi_y),
        vote_order,
        shelving: [shelve("shelve0")?, shelve("shelve1")?],
        verify_shelving,
        children: [child0, child1],
    })))
}
