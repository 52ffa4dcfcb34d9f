use std::collections::BTreeSet;

use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{majority_vote, Branch, ProtocolNode, ProtocolTree, ShelvingPulse, DEFAULT_SHELVING_RETRIES};
use crate::atomic::{HyperfineManifold, LevelLabel};
use crate::dynamics::{shelving_pulse, ConditionalRotation, Cycle, ErrorModel, GateBackend, GateDrive, SystemState};
use crate::error::{Error, Result};
use crate::measurement::{project_readout, reset_readout, MeasurementRecord, IDEAL_SPLIT_TOLERANCE};

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub drive: GateDrive,
    pub errors: ErrorModel,
    pub backend: GateBackend,
    pub shelving_retries: usize,
    /// Partition tolerance used when validating the tree.
    pub split_tolerance: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            drive: GateDrive::default(),
            errors: ErrorModel::ideal(),
            backend: GateBackend::Integrated,
            shelving_retries: DEFAULT_SHELVING_RETRIES,
            split_tolerance: IDEAL_SPLIT_TOLERANCE,
        }
    }
}

/// Logic-ion input to a trial. The readout starts in `|0⟩`, motion in `|n=0⟩`.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialState {
    Level(LevelLabel),
    /// Amplitudes over the manifold levels in manifold order.
    Superposition(Vec<C64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub true_level: Option<LevelLabel>,
    /// Physical level the protocol ends in; `None` for aborted trials.
    pub guessed_level: Option<LevelLabel>,
    /// `guessed_level` pulled back through the shelving along the path.
    pub guessed_initial: Option<LevelLabel>,
    /// Population of `guessed_level` in the final state; 0 when aborted.
    pub fidelity: f64,
    pub record: MeasurementRecord,
    pub shelving_repeats: usize,
    pub aborted: bool,
    /// Leaf path bits, bit `k` being the voted outcome at depth `k`.
    pub path: u32,
}

impl TrialResult {
    pub fn error(&self) -> f64 {
        1.0 - self.fidelity
    }
}

/// Supplies measurement outcomes to the runner.
pub trait OutcomeSource {
    /// Physical outcome given `P(1) = p1`.
    fn physical(&mut self, p1: f64) -> u8;

    /// Reported bit for a physical outcome; `flip` is the synthetic flip probability.
    fn report(&mut self, outcome: u8, flip: f64) -> u8;
}

/// Born-rule sampling from a random number generator.
pub struct RngOutcomes<'a, R: Rng + ?Sized>(pub &'a mut R);

impl<R: Rng + ?Sized> OutcomeSource for RngOutcomes<'_, R> {
    fn physical(&mut self, p1: f64) -> u8 {
        u8::from(self.0.random::<f64>() < p1)
    }

    fn report(&mut self, outcome: u8, flip: f64) -> u8 {
        if flip > 0.0 && self.0.random::<f64>() < flip {
            1 - outcome
        } else {
            outcome
        }
    }
}

#[derive(Clone, Debug)]
enum CompiledBranch {
    Node(Box<CompiledNode>),
    Leaf {
        level: usize,
        label: LevelLabel,
        initial: LevelLabel,
    },
}

#[derive(Clone, Debug)]
struct CompiledNode {
    cycle: usize,
    vote_order: usize,
    shelving: [Vec<(usize, usize)>; 2],
    verify: bool,
    children: [CompiledBranch; 2],
}

type RotationKey = (u64, u64);
type Resolver<'a> = dyn Fn(&[ShelvingPulse]) -> Result<Vec<(usize, usize)>> + 'a;

fn rotation_key(r: &ConditionalRotation) -> RotationKey {
    (r.dtheta.to_bits(), r.phi_y.to_bits())
}

fn rotation_keys(tree: &ProtocolTree) -> Vec<(RotationKey, ConditionalRotation)> {
    let mut out: Vec<(RotationKey, ConditionalRotation)> = Vec::new();
    for node in tree.nodes() {
        let key = rotation_key(&node.rotation);
        if !out.iter().any(|&(k, _)| k == key) {
            out.push((key, node.rotation));
        }
    }
    out
}

/// A validated tree bound to a manifold with every cycle operator precomputed.
#[derive(Clone, Debug)]
pub struct CompiledProtocol {
    manifold: HyperfineManifold,
    tree: ProtocolTree,
    options: RunOptions,
    rotations: Vec<(RotationKey, ConditionalRotation)>,
    cycles: Vec<Cycle>,
    prelude: Vec<(usize, usize)>,
    root: CompiledBranch,
    initial_subspace: BTreeSet<LevelLabel>,
}

impl CompiledProtocol {
    pub fn new(manifold: &HyperfineManifold, tree: &ProtocolTree, options: RunOptions) -> Result<Self> {
        tree.validate(manifold, options.split_tolerance)?;
        options.errors.validate()?;
        let rotations = rotation_keys(tree);
        let cycles = rotations
            .iter()
            .map(|&(_, r)| Cycle::new(manifold, r, &options.drive, &options.errors, options.backend))
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(manifold, tree, options, rotations, cycles)
    }

    /// Binds another tree to the already computed cycles. Every rotation of
    /// `tree` must appear in the current one; vote orders and verification
    /// flags may differ.
    pub fn rebind(&self, tree: &ProtocolTree) -> Result<Self> {
        tree.validate(&self.manifold, self.options.split_tolerance)?;
        let mut cycles = Vec::new();
        let rotations = rotation_keys(tree);
        for (key, r) in &rotations {
            let k = self.rotations.iter().position(|(k, _)| k == key).ok_or_else(|| {
                Error::InvalidProtocol(format!(
                    "rotation (dθ = {}, φ_y = {}) was not compiled",
                    r.dtheta, r.phi_y
                ))
            })?;
            cycles.push(self.cycles[k].clone());
        }
        Self::assemble(&self.manifold, tree, self.options, rotations, cycles)
    }

    fn assemble(
        manifold: &HyperfineManifold,
        tree: &ProtocolTree,
        options: RunOptions,
        rotations: Vec<(RotationKey, ConditionalRotation)>,
        cycles: Vec<Cycle>,
    ) -> Result<Self> {
        let resolve = |pulses: &[ShelvingPulse]| -> Result<Vec<(usize, usize)>> {
            pulses
                .iter()
                .map(|p| Ok((manifold.index_of(p.from)?, manifold.index_of(p.to)?)))
                .collect()
        };

        fn compile(
            branch: &Branch,
            path: &mut Vec<ShelvingPulse>,
            rotations: &[(RotationKey, ConditionalRotation)],
            manifold: &HyperfineManifold,
            resolve: &Resolver<'_>,
        ) -> Result<CompiledBranch> {
            match branch {
                Branch::Leaf(label) => Ok(CompiledBranch::Leaf {
                    level: manifold.index_of(*label)?,
                    label: *label,
                    initial: super::unshelve_label(path, *label),
                }),
                Branch::Node(node) => {
                    let ProtocolNode {
                        rotation,
                        vote_order,
                        shelving,
                        verify_shelving,
                        children,
                    } = node.as_ref();
                    let key = rotation_key(rotation);
                    let cycle = rotations.iter().position(|&(k, _)| k == key).expect("rotation registered");
                    let mut compiled = Vec::with_capacity(2);
                    for bit in 0..2 {
                        let mark = path.len();
                        path.extend_from_slice(&shelving[bit]);
                        compiled.push(compile(&children[bit], path, rotations, manifold, resolve)?);
                        path.truncate(mark);
                    }
                    let child1 = compiled.pop().expect("two children");
                    let child0 = compiled.pop().expect("two children");
                    Ok(CompiledBranch::Node(Box::new(CompiledNode {
                        cycle,
                        vote_order: *vote_order,
                        shelving: [resolve(&shelving[0])?, resolve(&shelving[1])?],
                        verify: *verify_shelving && !(shelving[0].is_empty() && shelving[1].is_empty()),
                        children: [child0, child1],
                    })))
                }
            }
        }

        let mut path = tree.prelude.clone();
        let root = compile(&tree.root, &mut path, &rotations, manifold, &resolve)?;
        Ok(Self {
            manifold: manifold.clone(),
            tree: tree.clone(),
            options,
            rotations,
            cycles,
            prelude: resolve(&tree.prelude)?,
            root,
            initial_subspace: tree.initial_subspace(),
        })
    }

    pub fn manifold(&self) -> &HyperfineManifold {
        &self.manifold
    }

    pub fn tree(&self) -> &ProtocolTree {
        &self.tree
    }

    pub fn options(&self) -> &RunOptions {
        &self.options
    }

    pub fn cycles(&self) -> &[Cycle] {
        &self.cycles
    }

    /// Levels the tree identifies, before any shelving.
    pub fn initial_subspace(&self) -> &BTreeSet<LevelLabel> {
        &self.initial_subspace
    }

    pub fn prepare(&self, initial: &InitialState) -> Result<SystemState> {
        let n_max = self.options.drive.fock_cutoff;
        match initial {
            InitialState::Level(label) => Ok(SystemState::basis(
                self.manifold.len(),
                n_max,
                self.manifold.index_of(*label)?,
            )),
            InitialState::Superposition(amps) => {
                if amps.len() != self.manifold.len() {
                    return Err(Error::InvalidProtocol(format!(
                        "initial state has {} amplitudes for {} levels",
                        amps.len(),
                        self.manifold.len()
                    )));
                }
                SystemState::from_logic(amps, n_max)
            }
        }
    }

    pub fn run<S: OutcomeSource + ?Sized>(&self, initial: &InitialState, source: &mut S) -> Result<TrialResult> {
        Ok(self.run_state(initial, source)?.0)
    }

    /// Runs one trial and also returns the final state.
    pub fn run_state<S: OutcomeSource + ?Sized>(
        &self,
        initial: &InitialState,
        source: &mut S,
    ) -> Result<(TrialResult, SystemState)> {
        let mut state = self.prepare(initial)?;
        let errors = &self.options.errors;
        let mut result = TrialResult {
            true_level: match initial {
                InitialState::Level(l) => Some(*l),
                InitialState::Superposition(_) => None,
            },
            guessed_level: None,
            guessed_initial: None,
            fidelity: 0.0,
            record: MeasurementRecord::default(),
            shelving_repeats: 0,
            aborted: false,
            path: 0,
        };
        self.shelve(&mut state, &self.prelude)?;

        let mut branch = &self.root;
        let mut depth = 0;
        loop {
            match branch {
                CompiledBranch::Leaf { level, label, initial } => {
                    result.guessed_level = Some(*label);
                    result.guessed_initial = Some(*initial);
                    result.fidelity = state.level_population(*level).clamp(0.0, 1.0);
                    return Ok((result, state));
                }
                CompiledBranch::Node(node) => {
                    let bit = self.vote(node, &mut state, source, errors, &mut result.record)?;
                    let pulses = &node.shelving[bit as usize];
                    self.shelve(&mut state, pulses)?;
                    if node.verify && !pulses.is_empty() {
                        let mut flags = 0;
                        while self.vote(node, &mut state, source, errors, &mut result.record)? == bit {
                            flags += 1;
                            if flags > self.options.shelving_retries {
                                result.aborted = true;
                                return Ok((result, state));
                            }
                            result.shelving_repeats += 1;
                            self.shelve(&mut state, pulses)?;
                        }
                    }
                    result.path |= u32::from(bit) << depth;
                    depth += 1;
                    branch = &node.children[bit as usize];
                }
            }
        }
    }

    fn shelve(&self, state: &mut SystemState, pulses: &[(usize, usize)]) -> Result<()> {
        for &(from, to) in pulses {
            shelving_pulse(state, from, to, &self.options.errors)?;
        }
        Ok(())
    }

    fn vote<S: OutcomeSource + ?Sized>(
        &self,
        node: &CompiledNode,
        state: &mut SystemState,
        source: &mut S,
        errors: &ErrorModel,
        record: &mut MeasurementRecord,
    ) -> Result<u8> {
        let cycle = &self.cycles[node.cycle];
        let mut bits = Vec::with_capacity(node.vote_order);
        for _ in 0..node.vote_order {
            cycle.apply(state)?;
            let p1 = state.readout_probability(1).clamp(0.0, 1.0);
            let outcome = source.physical(p1);
            project_readout(state, outcome)?;
            reset_readout(state, outcome);
            let reported = source.report(outcome, errors.readout_flip);
            record.push(reported, p1);
            bits.push(reported);
        }
        majority_vote(&bits)
    }
}

/// Convenience wrapper: compiles and runs one trial with an rng.
pub fn run_protocol<R: Rng + ?Sized>(
    manifold: &HyperfineManifold,
    tree: &ProtocolTree,
    initial: &InitialState,
    options: RunOptions,
    rng: &mut R,
) -> Result<TrialResult> {
    CompiledProtocol::new(manifold, tree, options)?.run(initial, &mut RngOutcomes(rng))
}

/// One measurement record reached by exhaustive enumeration.
#[derive(Clone, Debug)]
pub struct EnumeratedPath {
    pub outcomes: Vec<u8>,
    pub probability: f64,
    pub result: TrialResult,
}

struct ForcedOutcomes {
    prefix: Vec<u8>,
    taken: Vec<u8>,
    /// Path probability before each measurement and the probability of the untaken outcome.
    branch_points: Vec<(f64, f64)>,
    probability: f64,
}

impl OutcomeSource for ForcedOutcomes {
    fn physical(&mut self, p1: f64) -> u8 {
        let pos = self.taken.len();
        let outcome = if pos < self.prefix.len() {
            self.prefix[pos]
        } else {
            u8::from(p1 > 0.5)
        };
        let p_taken = if outcome == 1 { p1 } else { 1.0 - p1 };
        self.branch_points.push((self.probability, 1.0 - p_taken));
        self.probability *= p_taken;
        self.taken.push(outcome);
        outcome
    }

    fn report(&mut self, outcome: u8, _flip: f64) -> u8 {
        outcome
    }
}

/// Every measurement record with probability above `prune`, found by
/// depth-first re-execution with forced outcomes. Requires a noiseless readout.
pub fn enumerate_records(
    compiled: &CompiledProtocol,
    initial: &InitialState,
    prune: f64,
) -> Result<Vec<EnumeratedPath>> {
    if compiled.options.errors.readout_flip != 0.0 {
        return Err(Error::InvalidProtocol(
            "record enumeration needs readout_flip = 0".into(),
        ));
    }
    let mut out = Vec::new();
    let mut stack = vec![Vec::<u8>::new()];
    while let Some(prefix) = stack.pop() {
        let mut source = ForcedOutcomes {
            prefix: prefix.clone(),
            taken: Vec::new(),
            branch_points: Vec::new(),
            probability: 1.0,
        };
        let result = compiled.run(initial, &mut source)?;
        for pos in (prefix.len()..source.taken.len()).rev() {
            let (before, p_other) = source.branch_points[pos];
            if before * p_other > prune {
                let mut alt = source.taken[..pos].to_vec();
                alt.push(1 - source.taken[pos]);
                stack.push(alt);
            }
        }
        out.push(EnumeratedPath {
            outcomes: source.taken,
            probability: source.probability,
            result,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atomic::{build_manifold, IonSpec};
    use crate::protocol::{yb171_init_protocol, yb171_readout_protocol};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn closed_form() -> RunOptions {
        RunOptions {
            backend: GateBackend::ClosedForm,
            ..RunOptions::default()
        }
    }

    #[test]
    fn yb_init_identifies_every_level() {
        let m = build_manifold(&IonSpec::yb171()).unwrap();
        let p = CompiledProtocol::new(&m, &yb171_init_protocol(), closed_form()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for label in m.labels() {
            let r = p.run(&InitialState::Level(label), &mut RngOutcomes(&mut rng)).unwrap();
            assert_eq!(r.guessed_initial, Some(label));
            assert!((r.fidelity - 1.0).abs() < 1e-12);
            assert_eq!(r.record.len(), 2);
        }
    }

    #[test]
    fn zero_zero_is_shelved_to_stretched_state() {
        let m = build_manifold(&IonSpec::yb171()).unwrap();
        let p = CompiledProtocol::new(&m, &yb171_init_protocol(), closed_form()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = p
            .run(&InitialState::Level(LevelLabel::int(0, 0)), &mut RngOutcomes(&mut rng))
            .unwrap();
        assert_eq!(r.record.outcomes(), vec![0, 1]);
        assert_eq!(r.guessed_level, Some(LevelLabel::int(1, 1)));
    }

    #[test]
    fn enumeration_recovers_born_weights() {
        let m = build_manifold(&IonSpec::yb171()).unwrap();
        let p = CompiledProtocol::new(&m, &yb171_readout_protocol(), closed_form()).unwrap();
        let mut amps = vec![C64::new(0.0, 0.0); 4];
        amps[m.index_of(LevelLabel::int(0, 0)).unwrap()] = C64::new(0.6, 0.0);
        amps[m.index_of(LevelLabel::int(1, 0)).unwrap()] = C64::new(0.0, 0.8);
        let paths = enumerate_records(&p, &InitialState::Superposition(amps), 1e-15).unwrap();
        assert_eq!(paths.len(), 2);
        for path in paths {
            let expect = if path.result.guessed_initial == Some(LevelLabel::int(0, 0)) { 0.36 } else { 0.64 };
            assert!((path.probability - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_shelving_never_repeats() {
        let m = build_manifold(&IonSpec::yb171()).unwrap();
        let tree = yb171_init_protocol().with_verify(true);
        let p = CompiledProtocol::new(&m, &tree, closed_form()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = p
            .run(&InitialState::Level(LevelLabel::int(1, 0)), &mut RngOutcomes(&mut rng))
            .unwrap();
        assert_eq!(r.shelving_repeats, 0);
        assert_eq!(r.record.len(), 3);
        assert!((r.fidelity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rabi_shelving_aborts() {
        let m = build_manifold(&IonSpec::yb171()).unwrap();
        let tree = yb171_init_protocol().with_verify(true);
        let mut options = closed_form();
        options.errors.shelving_ratio = 0.0;
        let p = CompiledProtocol::new(&m, &tree, options).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = p
            .run(&InitialState::Level(LevelLabel::int(1, 0)), &mut RngOutcomes(&mut rng))
            .unwrap();
        assert!(r.aborted);
        assert_eq!(r.fidelity, 0.0);
        assert_eq!(r.shelving_repeats, DEFAULT_SHELVING_RETRIES);
    }
}

#[cfg(test)]
mod shelving_bookkeeping {
    use super::*;
    use crate::atomic::{build_manifold, IonSpec};
    use crate::dynamics::ConditionalRotation;
    use crate::protocol::{ProtocolNode, ShelvingPulse};
    use std::f64::consts::PI;

    // {|0,0⟩, |1,1⟩} split by one cycle, |0,0⟩ shelved to |1,-1⟩ on outcome 0.
    fn tree(verify: bool) -> ProtocolTree {
        let root = ProtocolNode::new(
            ConditionalRotation::new(PI, 0.0),
            Branch::Leaf(LevelLabel::int(1, -1)),
            Branch::Leaf(LevelLabel::int(1, 1)),
        )
        .with_shelving(0, vec![ShelvingPulse::new(LevelLabel::int(0, 0), LevelLabel::int(1, -1))]);
        ProtocolTree::new(root.into_branch()).with_verify(verify)
    }

    fn mean_error(ratio: f64, verify: bool, retries: usize) -> f64 {
        let m = build_manifold(&IonSpec::yb171()).unwrap();
        let mut options = RunOptions {
            backend: GateBackend::ClosedForm,
            shelving_retries: retries,
            ..RunOptions::default()
        };
        options.errors.shelving_ratio = ratio;
        let p = CompiledProtocol::new(&m, &tree(verify), options).unwrap();
        enumerate_records(&p, &InitialState::Level(LevelLabel::int(0, 0)), 0.0)
            .unwrap()
            .iter()
            .map(|path| path.probability * path.result.error())
            .sum()
    }

    #[test]
    fn one_repeat_squares_the_residual() {
        for ratio in [0.8, 0.9, 0.95, 1.05] {
            let c2 = (PI * ratio / 2.0).cos().powi(2);
            assert!((mean_error(ratio, false, 1) - c2).abs() < 1e-12);
            assert!((mean_error(ratio, true, 1) - c2 * c2).abs() < 1e-12);
            assert!((mean_error(ratio, true, 3) - c2.powi(4)).abs() < 1e-12);
        }
    }
}
