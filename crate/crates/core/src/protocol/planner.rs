use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{Branch, ProtocolNode, ProtocolTree, ShelvingPulse};
use crate::atomic::{HyperfineManifold, LevelLabel};
use crate::dynamics::ConditionalRotation;
use crate::error::{Error, Result};
use crate::measurement::predict_partition;

/// Candidate `(dθ, φ_y)` values; every combination is tried.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingsGrid {
    pub dthetas: Vec<f64>,
    pub phis: Vec<f64>,
}

impl SettingsGrid {
    pub fn new(dthetas: Vec<f64>, phis: Vec<f64>) -> Self {
        Self { dthetas, phis }
    }

    fn candidates(&self) -> Vec<ConditionalRotation> {
        self.dthetas
            .iter()
            .flat_map(|&d| self.phis.iter().map(move |&p| ConditionalRotation::new(d, p)))
            .collect()
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerOptions {
    /// Split classification tolerance.
    pub tolerance: f64,
    /// Longest shelving sequence considered between two cycles.
    pub max_pulses: usize,
}

impl Default for PlannerOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-3,
            max_pulses: 3,
        }
    }
}

type Mask = u64;

struct Planner<'a> {
    manifold: &'a HyperfineManifold,
    candidates: Vec<ConditionalRotation>,
    transitions: Vec<(usize, usize)>,
    options: PlannerOptions,
    memo: HashMap<(Mask, usize), Option<Branch>>,
    degenerate: Option<Mask>,
}

impl<'a> Planner<'a> {
    fn labels(&self, mask: Mask) -> BTreeSet<LevelLabel> {
        (0..self.manifold.len())
            .filter(|k| mask >> k & 1 == 1)
            .map(|k| self.manifold.levels[k].label)
            .collect()
    }

    fn mask(&self, set: &BTreeSet<LevelLabel>) -> Result<Mask> {
        set.iter()
            .try_fold(0, |m, &l| Ok(m | 1 << self.manifold.index_of(l)?))
    }

    /// Proper splits of `mask` ordered by balance, then grid order.
    fn splits(&mut self, mask: Mask) -> Vec<(ConditionalRotation, Mask, Mask)> {
        let set = self.labels(mask);
        let mut out = Vec::new();
        for &rotation in &self.candidates {
            let Ok(p) = predict_partition(self.manifold, &set, rotation, self.options.tolerance) else {
                continue;
            };
            if !p.is_proper() {
                continue;
            }
            let a = self.mask(&p.subspace_a).expect("labels from manifold");
            let b = self.mask(&p.subspace_b).expect("labels from manifold");
            if !out.iter().any(|&(_, x, y)| (x, y) == (a, b)) {
                out.push((rotation, a, b));
            }
        }
        if out.is_empty() && self.degenerate.is_none_or(|d| d.count_ones() < mask.count_ones()) {
            self.degenerate = Some(mask);
        }
        out.sort_by_key(|&(_, a, b)| (a.count_ones() as i64 - b.count_ones() as i64).abs());
        out
    }

    fn apply(&self, mask: Mask, (i, j): (usize, usize)) -> Mask {
        let bi = mask >> i & 1;
        let bj = mask >> j & 1;
        (mask & !(1 << i) & !(1 << j)) | bi << j | bj << i
    }

    /// Subtree for `mask` within `depth` cycles, with no shelving before it.
    fn solve(&mut self, mask: Mask, depth: usize) -> Option<Branch> {
        if mask.count_ones() == 1 {
            let k = mask.trailing_zeros() as usize;
            return Some(Branch::Leaf(self.manifold.levels[k].label));
        }
        if depth == 0 || (depth < 64 && (mask.count_ones() as u64) > 1u64 << depth) {
            return None;
        }
        if let Some(hit) = self.memo.get(&(mask, depth)) {
            return hit.clone();
        }
        let mut found = None;
        'outer: for (rotation, a, b) in self.splits(mask) {
            let mut children = Vec::with_capacity(2);
            for side in [a, b] {
                match self.solve_shelved(side, depth - 1) {
                    Some(child) => children.push(child),
                    None => continue 'outer,
                }
            }
            let (p1, c1) = children.pop().expect("two children");
            let (p0, c0) = children.pop().expect("two children");
            found = Some(
                ProtocolNode::new(rotation, c0, c1)
                    .with_shelving(0, p0)
                    .with_shelving(1, p1)
                    .into_branch(),
            );
            break;
        }
        self.memo.insert((mask, depth), found.clone());
        found
    }

    /// Shortest shelving sequence after which `mask` is solvable in `depth` cycles.
    fn solve_shelved(&mut self, mask: Mask, depth: usize) -> Option<(Vec<ShelvingPulse>, Branch)> {
        let mut queue = VecDeque::from([(mask, Vec::<(usize, usize)>::new())]);
        let mut seen = HashSet::from([mask]);
        while let Some((m, pulses)) = queue.pop_front() {
            if let Some(branch) = self.solve(m, depth) {
                let pulses = pulses
                    .iter()
                    .map(|&(i, j)| ShelvingPulse::new(self.manifold.levels[i].label, self.manifold.levels[j].label))
                    .collect();
                return Some((pulses, branch));
            }
            if pulses.len() == self.options.max_pulses {
                continue;
            }
            for &(i, j) in &self.transitions {
                // orient each pulse from an occupied level
                let (from, to) = match (m >> i & 1, m >> j & 1) {
                    (1, 0) => (i, j),
                    (0, 1) => (j, i),
                    _ => continue,
                };
                let next = self.apply(m, (from, to));
                if seen.insert(next) {
                    let mut p = pulses.clone();
                    p.push((from, to));
                    queue.push_back((next, p));
                }
            }
        }
        None
    }
}

/// Searches for a minimal-depth tree that identifies every level of `subspace`.
///
/// Nodes use settings from `grid`. Between cycles the planner may insert up
/// to `max_pulses` shelving pulses on transitions with `|Δm_F| ≤ 1` and
/// `ΔF ∈ {0, 1}`; at the root these become the tree's prelude.
pub fn plan_bisection(
    manifold: &HyperfineManifold,
    subspace: &BTreeSet<LevelLabel>,
    grid: &SettingsGrid,
    options: PlannerOptions,
) -> Result<ProtocolTree> {
    if subspace.is_empty() {
        return Err(Error::InvalidProtocol("cannot plan for an empty subspace".into()));
    }
    if manifold.len() > 64 {
        return Err(Error::InvalidProtocol("planner supports at most 64 levels".into()));
    }
    let mut transitions = Vec::new();
    for (i, a) in manifold.levels.iter().enumerate() {
        for (j, b) in manifold.levels.iter().enumerate().skip(i + 1) {
            let dm = (a.label.m_f - b.label.m_f).abs().twice();
            let df = (a.label.f - b.label.f).abs().twice();
            if dm <= 2 && df <= 2 {
                transitions.push((i, j));
            }
        }
    }
    let mut planner = Planner {
        manifold,
        candidates: grid.candidates(),
        transitions,
        options,
        memo: HashMap::new(),
        degenerate: None,
    };
    let mask = planner.mask(subspace)?;
    let n = subspace.len();
    let min_depth = (usize::BITS - (n - 1).leading_zeros()) as usize;
    for depth in min_depth..=2 * n {
        if let Some((prelude, root)) = planner.solve_shelved(mask, depth) {
            return Ok(ProtocolTree { prelude, root });
        }
    }
    let levels = planner.degenerate.map_or_else(|| subspace.clone(), |d| planner.labels(d));
    Err(Error::Unsplittable {
        levels: levels.into_iter().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atomic::{build_manifold, IonSpec};
    use std::f64::consts::PI;

    fn yb_grid() -> SettingsGrid {
        SettingsGrid::new(vec![PI, PI / 2.0], vec![0.0, PI / 2.0])
    }

    #[test]
    fn single_level_is_a_leaf() {
        let m = build_manifold(&IonSpec::yb171()).unwrap();
        let c: BTreeSet<_> = [LevelLabel::int(1, 0)].into_iter().collect();
        let t = plan_bisection(&m, &c, &yb_grid(), PlannerOptions::default()).unwrap();
        assert_eq!(t.root, Branch::Leaf(LevelLabel::int(1, 0)));
    }

    #[test]
    fn yb_plan_has_depth_two() {
        let m = build_manifold(&IonSpec::yb171()).unwrap();
        let c: BTreeSet<_> = m.labels().into_iter().collect();
        let t = plan_bisection(&m, &c, &yb_grid(), PlannerOptions::default()).unwrap();
        assert_eq!(t.depth(), 2);
        assert!(t.prelude.is_empty());
        assert_eq!(t.initial_subspace(), c);
        t.validate(&m, 1e-9).unwrap();
    }

    #[test]
    fn flat_grid_is_unsplittable() {
        let m = build_manifold(&IonSpec::yb171()).unwrap();
        let c: BTreeSet<_> = m.labels().into_iter().collect();
        let grid = SettingsGrid::new(vec![0.0], vec![0.0]);
        let e = plan_bisection(&m, &c, &grid, PlannerOptions::default()).unwrap_err();
        assert!(matches!(e, Error::Unsplittable { ref levels } if levels.len() == 4), "{e}");
    }
}
