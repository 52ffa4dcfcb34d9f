//! Measurement decision trees, their execution, and the error-correction
//! wrappers around them.
//!
//! A tree node holds one conditional rotation. Its two branches are indexed
//! by the (majority-voted) readout bit; each carries a list of shelving
//! pulses applied when the branch is taken and either a child node or a
//! leaf. A leaf names the physical level the logic ion occupies at the end
//! of the protocol. The level it occupied before the protocol is recovered
//! by undoing the shelving pulses along the path.

mod builtins;
mod json;
mod leakage;
mod planner;
mod runner;
mod vote;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::atomic::{HyperfineManifold, LevelLabel};
use crate::dynamics::ConditionalRotation;
use crate::error::{Error, Result};
use crate::measurement::predict_partition;

pub use builtins::{ba137_init_protocol, builtin_protocol, yb171_init_protocol, yb171_readout_protocol, BUILTIN_PROTOCOLS};
pub use json::parse_angle;
pub use leakage::{leakage_check, leakage_flag_probability, LeakageCheck, LeakageSettings};
pub use planner::{plan_bisection, PlannerOptions, SettingsGrid};
pub use runner::{
    enumerate_records, run_protocol, CompiledProtocol, EnumeratedPath, InitialState, OutcomeSource, RngOutcomes,
    RunOptions, TrialResult,
};
pub use vote::{analytic_vote_error, majority_vote};

/// Default cap on shelving re-attempts before a trial is aborted.
pub const DEFAULT_SHELVING_RETRIES: usize = 5;

/// A resonant π-pulse between two logic levels.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ShelvingPulse {
    pub from: LevelLabel,
    pub to: LevelLabel,
}

impl ShelvingPulse {
    pub const fn new(from: LevelLabel, to: LevelLabel) -> Self {
        Self { from, to }
    }

    /// Action on a basis label: the two levels are exchanged.
    pub fn map(&self, label: LevelLabel) -> LevelLabel {
        if label == self.from {
            self.to
        } else if label == self.to {
            self.from
        } else {
            label
        }
    }
}

/// Pushes a label forward through a pulse sequence.
pub fn shelve_label(pulses: &[ShelvingPulse], label: LevelLabel) -> LevelLabel {
    pulses.iter().fold(label, |l, p| p.map(l))
}

/// Pulls a label back through a pulse sequence.
pub fn unshelve_label(pulses: &[ShelvingPulse], label: LevelLabel) -> LevelLabel {
    pulses.iter().rev().fold(label, |l, p| p.map(l))
}

fn shelve_set(pulses: &[ShelvingPulse], set: &BTreeSet<LevelLabel>) -> BTreeSet<LevelLabel> {
    set.iter().map(|&l| shelve_label(pulses, l)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum Branch {
    Node(Box<ProtocolNode>),
    Leaf(LevelLabel),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolNode {
    pub rotation: ConditionalRotation,
    /// Odd majority-vote order.
    pub vote_order: usize,
    /// Pulses applied after outcome 0 / 1.
    pub shelving: [Vec<ShelvingPulse>; 2],
    /// Re-run this node after shelving and repeat the pulses while the
    /// shelved population still reads out in the taken branch.
    pub verify_shelving: bool,
    pub children: [Branch; 2],
}

impl ProtocolNode {
    pub fn new(rotation: ConditionalRotation, child0: Branch, child1: Branch) -> Self {
        Self {
            rotation,
            vote_order: 1,
            shelving: [Vec::new(), Vec::new()],
            verify_shelving: false,
            children: [child0, child1],
        }
    }

    pub fn with_shelving(mut self, bit: usize, pulses: Vec<ShelvingPulse>) -> Self {
        self.shelving[bit] = pulses;
        self
    }

    pub fn into_branch(self) -> Branch {
        Branch::Node(Box::new(self))
    }
}

/// A protocol: unconditional prelude pulses followed by a decision tree.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolTree {
    pub prelude: Vec<ShelvingPulse>,
    pub root: Branch,
}

/// One leaf with the level it identifies before any shelving.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct LeafInfo {
    pub path: u32,
    pub depth: usize,
    pub final_level: LevelLabel,
    pub initial_level: LevelLabel,
}

impl ProtocolTree {
    pub fn new(root: Branch) -> Self {
        Self {
            prelude: Vec::new(),
            root,
        }
    }

    /// Number of cycles on the longest path (vote repetitions not counted).
    pub fn depth(&self) -> usize {
        fn go(b: &Branch) -> usize {
            match b {
                Branch::Leaf(_) => 0,
                Branch::Node(n) => 1 + go(&n.children[0]).max(go(&n.children[1])),
            }
        }
        go(&self.root)
    }

    /// Leaves in depth-first order (branch 0 before branch 1).
    pub fn leaves(&self) -> Vec<LeafInfo> {
        fn go(b: &Branch, path: u32, depth: usize, pulses: &mut Vec<ShelvingPulse>, out: &mut Vec<LeafInfo>) {
            match b {
                Branch::Leaf(l) => out.push(LeafInfo {
                    path,
                    depth,
                    final_level: *l,
                    initial_level: unshelve_label(pulses, *l),
                }),
                Branch::Node(n) => {
                    for bit in 0..2 {
                        let mark = pulses.len();
                        pulses.extend_from_slice(&n.shelving[bit]);
                        go(&n.children[bit], path | ((bit as u32) << depth), depth + 1, pulses, out);
                        pulses.truncate(mark);
                    }
                }
            }
        }
        let mut out = Vec::new();
        let mut pulses = self.prelude.clone();
        go(&self.root, 0, 0, &mut pulses, &mut out);
        out
    }

    /// Levels the protocol identifies: leaf levels pulled back to their
    /// pre-protocol labels.
    pub fn initial_subspace(&self) -> BTreeSet<LevelLabel> {
        self.leaves().into_iter().map(|l| l.initial_level).collect()
    }

    /// Sets every node's vote order.
    pub fn with_vote_order(mut self, n: usize) -> Self {
        self.for_each_node_mut(&mut |node| node.vote_order = n);
        self
    }

    /// Enables or disables shelving verification on every node that shelves.
    pub fn with_verify(mut self, verify: bool) -> Self {
        self.for_each_node_mut(&mut |node| {
            node.verify_shelving = verify && node.shelving.iter().any(|s| !s.is_empty())
        });
        self
    }

    pub fn for_each_node_mut(&mut self, f: &mut impl FnMut(&mut ProtocolNode)) {
        fn go(b: &mut Branch, f: &mut impl FnMut(&mut ProtocolNode)) {
            if let Branch::Node(n) = b {
                f(n);
                go(&mut n.children[0], f);
                go(&mut n.children[1], f);
            }
        }
        go(&mut self.root, f);
    }

    pub fn nodes(&self) -> Vec<&ProtocolNode> {
        fn go<'a>(b: &'a Branch, out: &mut Vec<&'a ProtocolNode>) {
            if let Branch::Node(n) = b {
                out.push(n);
                go(&n.children[0], out);
                go(&n.children[1], out);
            }
        }
        let mut out = Vec::new();
        go(&self.root, &mut out);
        out
    }

    /// Checks that every node splits its reachable subspace into two
    /// non-empty halves, that each leaf is reached by exactly its own level,
    /// and that verified shelving lands in the opposite outcome class.
    pub fn validate(&self, manifold: &HyperfineManifold, tol: f64) -> Result<()> {
        let known: BTreeSet<LevelLabel> = manifold.labels().into_iter().collect();
        let check_pulses = |pulses: &[ShelvingPulse]| -> Result<()> {
            for p in pulses {
                for l in [p.from, p.to] {
                    if !known.contains(&l) {
                        return Err(Error::UnknownLevel(l));
                    }
                }
                if p.from == p.to {
                    return Err(Error::InvalidProtocol(format!("shelving pulse {} -> {} is trivial", p.from, p.to)));
                }
            }
            Ok(())
        };
        check_pulses(&self.prelude)?;
        for node in self.nodes() {
            check_pulses(&node.shelving[0])?;
            check_pulses(&node.shelving[1])?;
        }
        for leaf in self.leaves() {
            if !known.contains(&leaf.final_level) {
                return Err(Error::UnknownLevel(leaf.final_level));
            }
        }

        let initial = self.initial_subspace();
        if initial.len() != self.leaves().len() {
            return Err(Error::InvalidProtocol(
                "two leaves identify the same initial level".into(),
            ));
        }
        let reachable = shelve_set(&self.prelude, &initial);
        validate_branch(manifold, &self.root, &reachable, tol, "root")
    }
}

fn validate_branch(
    manifold: &HyperfineManifold,
    branch: &Branch,
    reachable: &BTreeSet<LevelLabel>,
    tol: f64,
    at: &str,
) -> Result<()> {
    match branch {
        Branch::Leaf(label) => {
            if reachable.len() != 1 || !reachable.contains(label) {
                return Err(Error::InvalidProtocol(format!(
                    "{at}: leaf {label} is reached by {{{}}}",
                    join_labels(reachable)
                )));
            }
            Ok(())
        }
        Branch::Node(node) => {
            if node.vote_order % 2 == 0 {
                return Err(Error::InvalidProtocol(format!(
                    "{at}: vote order {} is not odd",
                    node.vote_order
                )));
            }
            let partition = predict_partition(manifold, reachable, node.rotation, tol)?;
            for bit in 0..2u8 {
                let taken = partition.branch(bit);
                if taken.is_empty() {
                    return Err(Error::InvalidProtocol(format!(
                        "{at}: outcome {bit} of (dθ = {}, φ_y = {}) is never observed on {{{}}}",
                        node.rotation.dtheta,
                        node.rotation.phi_y,
                        join_labels(reachable)
                    )));
                }
                let pulses = &node.shelving[bit as usize];
                let shelved = shelve_set(pulses, taken);
                if node.verify_shelving && !pulses.is_empty() {
                    let check = predict_partition(manifold, &shelved, node.rotation, tol).map_err(|_| {
                        Error::InvalidProtocol(format!(
                            "{at}: shelving after outcome {bit} cannot be verified with this node's rotation"
                        ))
                    })?;
                    if !check.branch(bit).is_empty() {
                        return Err(Error::InvalidProtocol(format!(
                            "{at}: shelved levels {{{}}} still read out as {bit}",
                            join_labels(check.branch(bit))
                        )));
                    }
                }
                validate_branch(manifold, &node.children[bit as usize], &shelved, tol, &format!("{at}.child{bit}"))?;
            }
            Ok(())
        }
    }
}

fn join_labels(set: &BTreeSet<LevelLabel>) -> String {
    set.iter().map(|l| format!("|{l}>")).collect::<Vec<_>>().join(", ")
}
