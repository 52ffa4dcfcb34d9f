use std::f64::consts::PI;

use super::{Branch, ProtocolNode, ProtocolTree, ShelvingPulse};
use crate::atomic::LevelLabel;
use crate::dynamics::ConditionalRotation;

/// Built-in protocol names with the ion preset each one is written for.
pub const BUILTIN_PROTOCOLS: [(&str, &str); 3] = [
    ("yb171_init", "yb171"),
    ("yb171_readout", "yb171"),
    ("ba137_init", "ba137"),
];

pub fn builtin_protocol(name: &str) -> Option<ProtocolTree> {
    match name {
        "yb171_init" => Some(yb171_init_protocol()),
        "yb171_readout" => Some(yb171_readout_protocol()),
        "ba137_init" => Some(ba137_init_protocol()),
        _ => None,
    }
}

fn lvl(f: i32, m: i32) -> LevelLabel {
    LevelLabel::int(f, m)
}

fn leaf(f: i32, m: i32) -> Branch {
    Branch::Leaf(lvl(f, m))
}

fn pulse(from: (i32, i32), to: (i32, i32)) -> ShelvingPulse {
    ShelvingPulse::new(lvl(from.0, from.1), lvl(to.0, to.1))
}

/// `|0,0⟩ → |1,1⟩`, then `|1,0⟩ → |0,0⟩ → |1,-1⟩`.
fn yb_clock_shelving() -> Vec<ShelvingPulse> {
    vec![
        pulse((0, 0), (1, 1)),
        pulse((1, 0), (0, 0)),
        pulse((0, 0), (1, -1)),
    ]
}

/// Separates `|1,1⟩` (outcome 1) from `|1,-1⟩` (outcome 0).
fn yb_stretched_node() -> ProtocolNode {
    ProtocolNode::new(ConditionalRotation::new(PI / 2.0, PI / 2.0), leaf(1, -1), leaf(1, 1))
}

/// ¹⁷¹Yb⁺ state preparation in two cycles.
///
/// `U_l(π, 0)` separates even `m_F` (outcome 0) from odd `m_F` (outcome 1).
/// The even pair is shelved onto the stretched states and both branches
/// finish with `U_l(π/2, π/2)`.
pub fn yb171_init_protocol() -> ProtocolTree {
    let root = ProtocolNode::new(
        ConditionalRotation::new(PI, 0.0),
        yb_stretched_node().into_branch(),
        yb_stretched_node().into_branch(),
    )
    .with_shelving(0, yb_clock_shelving());
    ProtocolTree::new(root.into_branch())
}

/// ¹⁷¹Yb⁺ clock-qubit readout: unconditional shelving of `|0,0⟩, |1,0⟩`
/// onto `|1,1⟩, |1,-1⟩`, then one `U_l(π/2, π/2)` cycle.
/// Outcome 1 identifies `|0,0⟩`, outcome 0 identifies `|1,0⟩`.
pub fn yb171_readout_protocol() -> ProtocolTree {
    ProtocolTree {
        prelude: yb_clock_shelving(),
        root: yb_stretched_node().into_branch(),
    }
}

/// ¹³⁷Ba⁺ state preparation in three cycles.
pub fn ba137_init_protocol() -> ProtocolTree {
    let q = PI / 2.0;
    // {|2,0⟩, |1,0⟩} shelved to {|2,1⟩, |1,1⟩}
    let aa = ProtocolNode::new(ConditionalRotation::new(q, q), leaf(1, 1), leaf(2, 1));
    let ab = ProtocolNode::new(ConditionalRotation::new(PI / 4.0, q), leaf(2, -2), leaf(2, 2));
    let a = ProtocolNode::new(ConditionalRotation::new(q, 0.0), aa.into_branch(), ab.into_branch())
        .with_shelving(0, vec![pulse((2, 0), (2, 1)), pulse((1, 0), (1, 1))]);

    // outcome 0: {|2,-1⟩, |1,1⟩}; outcome 1: {|2,1⟩, |1,-1⟩}
    let b0 = ProtocolNode::new(ConditionalRotation::new(q, q), leaf(1, 1), leaf(1, -1));
    let b1 = ProtocolNode::new(ConditionalRotation::new(q, q), leaf(1, 1), leaf(1, -1));
    let b = ProtocolNode::new(ConditionalRotation::new(q, q), b0.into_branch(), b1.into_branch())
        .with_shelving(0, vec![pulse((2, -1), (1, -1))])
        .with_shelving(1, vec![pulse((2, 1), (1, 1))]);

    let root = ProtocolNode::new(ConditionalRotation::new(PI, 0.0), a.into_branch(), b.into_branch());
    ProtocolTree::new(root.into_branch())
}
