//! Hyperfine and Zeeman structure of the logic ion's S₁/₂ ground state.
//!
//! The Hamiltonian `A J·I + μ_B g_J B_q J_z` is built on the uncoupled
//! `|m_J, m_I⟩` basis and diagonalized block by block (each `m_F` block has
//! size at most two). Dressed levels are labelled by adiabatic connection to
//! the zero-field `|F, m_F⟩` states, and their eigenvectors are phased to have
//! positive overlap with those states.
//!
//! All energies are angular frequencies (ħ = 1).

use std::{fmt, str::FromStr};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Bohr magneton over ħ, in rad s⁻¹ T⁻¹.
pub const BOHR_MAGNETON_OVER_HBAR: f64 = 9.274_010_078_3e-24 / 1.054_571_817e-34;

/// One gauss in tesla.
pub const GAUSS: f64 = 1e-4;

/// Ratio `μ_B g_J B_q / A` above which the low-field picture is flagged.
pub const LOW_FIELD_LIMIT: f64 = 0.1;

/// A half-integer quantum number, stored as twice its value.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HalfInt(i32);

impl HalfInt {
    pub const ZERO: Self = Self(0);
    pub const HALF: Self = Self(1);

    pub const fn from_twice(twice: i32) -> Self {
        Self(twice)
    }

    pub const fn from_int(n: i32) -> Self {
        Self(2 * n)
    }

    pub const fn twice(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 2.0
    }

    pub fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }

    pub fn abs(self) -> Self {
        Self(self.0.abs())
    }

    /// Nearest half-integer to `x`, if `x` is within 1e-9 of one.
    pub fn from_f64(x: f64) -> Option<Self> {
        let twice = (2.0 * x).round();
        ((2.0 * x - twice).abs() < 1e-9 && twice.abs() < f64::from(i32::MAX))
            .then_some(Self(twice as i32))
    }
}

impl std::ops::Add for HalfInt {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self(self.0 + rhs.0)
    }
}

impl std::ops::Sub for HalfInt {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self(self.0 - rhs.0)
    }
}

impl std::ops::Neg for HalfInt {
    type Output = Self;
    fn neg(self) -> Self {
        Self(-self.0)
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

impl FromStr for HalfInt {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::LevelSyntax(s.to_string());
        if let Some((num, den)) = s.split_once('/') {
            if den.trim() != "2" {
                return Err(bad());
            }
            let num: i32 = num.trim().parse().map_err(|_| bad())?;
            Ok(Self(num))
        } else if let Ok(n) = s.parse::<i32>() {
            Ok(Self(2 * n))
        } else {
            let x: f64 = s.parse().map_err(|_| bad())?;
            Self::from_f64(x).ok_or_else(bad)
        }
    }
}

impl Serialize for HalfInt {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for HalfInt {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let x = f64::deserialize(deserializer)?;
        Self::from_f64(x)
            .ok_or_else(|| serde::de::Error::custom(format!("{x} is not a half-integer")))
    }
}

/// Which hyperfine manifold a level belongs to: `F⁺ = I + 1/2` or `F⁻ = I - 1/2`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ManifoldSign {
    Upper,
    Lower,
}

impl ManifoldSign {
    pub fn sign(self) -> f64 {
        match self {
            Self::Upper => 1.0,
            Self::Lower => -1.0,
        }
    }
}

/// A zero-field `|F, m_F⟩` label. Displays and parses as `F,mF`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LevelLabel {
    pub f: HalfInt,
    pub m_f: HalfInt,
}

impl LevelLabel {
    pub const fn new(f: HalfInt, m_f: HalfInt) -> Self {
        Self { f, m_f }
    }

    /// Integer-valued label, the common case for half-integer nuclear spin.
    pub const fn int(f: i32, m_f: i32) -> Self {
        Self::new(HalfInt::from_int(f), HalfInt::from_int(m_f))
    }
}

impl fmt::Display for LevelLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.f, self.m_f)
    }
}

impl FromStr for LevelLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let inner = s
            .trim()
            .trim_start_matches('|')
            .trim_end_matches('>')
            .trim_end_matches('⟩');
        let (f, m) = inner
            .split_once(',')
            .ok_or_else(|| Error::LevelSyntax(s.to_string()))?;
        let f: HalfInt = f.parse().map_err(|_| Error::LevelSyntax(s.to_string()))?;
        let m_f: HalfInt = m.parse().map_err(|_| Error::LevelSyntax(s.to_string()))?;
        if f.twice() < 0 || m_f.abs() > f || (f.twice() - m_f.twice()) % 2 != 0 {
            return Err(Error::LevelSyntax(s.to_string()));
        }
        Ok(Self { f, m_f })
    }
}

impl Serialize for LevelLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LevelLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Static description of the logic ion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IonSpec {
    pub nuclear_spin: HalfInt,
    /// Hyperfine constant `A` in rad/s.
    pub hyperfine_constant: f64,
    pub lande_gj: f64,
    /// Quantization field `B_q` in tesla.
    pub quantization_field: f64,
}

impl IonSpec {
    /// ¹⁷¹Yb⁺ (I = 1/2). Literature values, not taken from the protocol description:
    /// 12.642 812 GHz ground-state splitting, g_J ≈ 2.0026.
    pub fn yb171() -> Self {
        Self {
            nuclear_spin: HalfInt::HALF,
            hyperfine_constant: 2.0 * std::f64::consts::PI * 12.642_812_118e9,
            lande_gj: 2.0026,
            quantization_field: 0.0,
        }
    }

    /// ¹³⁷Ba⁺ (I = 3/2). Literature values: 8.037 42 GHz splitting (A = splitting / 2),
    /// g_J ≈ 2.0025.
    pub fn ba137() -> Self {
        Self {
            nuclear_spin: HalfInt::from_twice(3),
            hyperfine_constant: 2.0 * std::f64::consts::PI * 8.037_419_8e9 / 2.0,
            lande_gj: 2.0025,
            quantization_field: 0.0,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "yb171" | "171yb" | "yb171+" => Some(Self::yb171()),
            "ba137" | "137ba" | "ba137+" => Some(Self::ba137()),
            _ => None,
        }
    }

    pub fn with_field(mut self, tesla: f64) -> Self {
        self.quantization_field = tesla;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.nuclear_spin.twice() < 1 {
            return Err(Error::InvalidIon(format!(
                "nuclear spin must be >= 1/2, got {}",
                self.nuclear_spin
            )));
        }
        if !(self.hyperfine_constant.is_finite() && self.hyperfine_constant > 0.0) {
            return Err(Error::InvalidIon(format!(
                "hyperfine constant must be positive, got {}",
                self.hyperfine_constant
            )));
        }
        if !self.lande_gj.is_finite() {
            return Err(Error::InvalidIon("g_J must be finite".into()));
        }
        if !(self.quantization_field.is_finite() && self.quantization_field >= 0.0) {
            return Err(Error::InvalidIon(format!(
                "quantization field must be non-negative, got {}",
                self.quantization_field
            )));
        }
        let ratio = self.low_field_ratio();
        if ratio >= LOW_FIELD_LIMIT {
            log::warn!(
                "mu_B g_J B_q / A = {ratio:.3} is outside the low-field regime (< {LOW_FIELD_LIMIT})"
            );
        }
        Ok(())
    }

    /// Zeeman rate `μ_B g_J B_q / ħ` in rad/s.
    pub fn zeeman_rate(&self) -> f64 {
        BOHR_MAGNETON_OVER_HBAR * self.lande_gj * self.quantization_field
    }

    pub fn low_field_ratio(&self) -> f64 {
        (self.zeeman_rate() / self.hyperfine_constant).abs()
    }

    /// `F⁺ = I + 1/2`.
    pub fn upper_f(&self) -> HalfInt {
        self.nuclear_spin + HalfInt::HALF
    }

    pub fn lower_f(&self) -> HalfInt {
        self.nuclear_spin - HalfInt::HALF
    }

    pub fn level_count(&self) -> usize {
        2 * (self.nuclear_spin.twice() as usize + 1)
    }
}

/// One dressed sublevel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperfineLevel {
    pub label: LevelLabel,
    pub manifold: ManifoldSign,
    /// Energy in rad/s.
    pub energy: f64,
    /// `⟨level| J_z |level⟩` in the dressed basis.
    pub b_coeff: f64,
}

/// The diagonalized ground-state manifold.
///
/// Levels are ordered by `F` descending, then `m_F` ascending. The columns
/// of [`basis_transform`](Self::basis_transform) hold the dressed eigenvectors
/// in that order, expressed in the uncoupled basis `|m_J⟩ ⊗ |m_I⟩` with `m_J`
/// ordered (+1/2, -1/2) and `m_I` ascending.
#[derive(Clone, Debug)]
pub struct HyperfineManifold {
    pub ion: IonSpec,
    pub levels: Vec<HyperfineLevel>,
    pub basis_transform: DMatrix<f64>,
}

impl HyperfineManifold {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn upper_f(&self) -> HalfInt {
        self.ion.upper_f()
    }

    pub fn index_of(&self, label: LevelLabel) -> Result<usize> {
        self.levels
            .iter()
            .position(|l| l.label == label)
            .ok_or(Error::UnknownLevel(label))
    }

    pub fn labels(&self) -> Vec<LevelLabel> {
        self.levels.iter().map(|l| l.label).collect()
    }

    pub fn level(&self, label: LevelLabel) -> Result<&HyperfineLevel> {
        self.index_of(label).map(|k| &self.levels[k])
    }

    /// The ideal low-field coefficient `±m_F / 2F⁺`.
    pub fn low_field_b(&self, level: &HyperfineLevel) -> f64 {
        level.manifold.sign() * level.label.m_f.value() / (2.0 * self.upper_f().value())
    }
}

/// Uncoupled basis index of `|m_J, m_I⟩` (twice-valued quantum numbers).
fn uncoupled_index(twice_i: i32, twice_mj: i32, twice_mi: i32) -> usize {
    let electron = if twice_mj > 0 { 0 } else { 1 };
    let nuclear = ((twice_mi + twice_i) / 2) as usize;
    electron * (twice_i as usize + 1) + nuclear
}

/// The hyperfine + Zeeman Hamiltonian of the logic ion on the uncoupled basis.
pub fn uncoupled_hamiltonian(spec: &IonSpec) -> DMatrix<f64> {
    let twice_i = spec.nuclear_spin.twice();
    let i = spec.nuclear_spin.value();
    let a = spec.hyperfine_constant;
    let w = spec.zeeman_rate();
    let dim = 2 * (twice_i as usize + 1);
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for twice_mi in (-twice_i..=twice_i).step_by(2) {
        let mi = f64::from(twice_mi) / 2.0;
        for twice_mj in [1, -1] {
            let mj = f64::from(twice_mj) / 2.0;
            let k = uncoupled_index(twice_i, twice_mj, twice_mi);
            h[(k, k)] = a * mj * mi + w * mj;
        }
        // (A/2) J₊ I₋ couples |-1/2, m_I⟩ and |+1/2, m_I - 1⟩.
        if twice_mi > -twice_i {
            let lower = uncoupled_index(twice_i, 1, twice_mi - 2);
            let upper = uncoupled_index(twice_i, -1, twice_mi);
            let amp = 0.5 * a * (i * (i + 1.0) - mi * (mi - 1.0)).sqrt();
            h[(lower, upper)] = amp;
            h[(upper, lower)] = amp;
        }
    }
    h
}

/// Zero-field coupled state `|F, m_F⟩` on the uncoupled basis
/// (Clebsch-Gordan coefficients for J = 1/2).
pub fn coupled_state(spec: &IonSpec, label: LevelLabel) -> Result<Vec<f64>> {
    let twice_i = spec.nuclear_spin.twice();
    let i = spec.nuclear_spin.value();
    let m = label.m_f.value();
    let sign = if label.f == spec.upper_f() {
        1.0
    } else if label.f == spec.lower_f() {
        -1.0
    } else {
        return Err(Error::UnknownLevel(label));
    };
    if label.m_f.abs() > label.f {
        return Err(Error::UnknownLevel(label));
    }
    let norm = 2.0 * i + 1.0;
    let mut v = vec![0.0; spec.level_count()];
    let twice_m = label.m_f.twice();
    // |+1/2, m - 1/2⟩ component
    if (twice_m - 1).abs() <= twice_i {
        let c = if sign > 0.0 { i + m + 0.5 } else { i - m + 0.5 };
        v[uncoupled_index(twice_i, 1, twice_m - 1)] = (c / norm).sqrt();
    }
    // |-1/2, m + 1/2⟩ component
    if (twice_m + 1).abs() <= twice_i {
        let c = if sign > 0.0 { i - m + 0.5 } else { i + m + 0.5 };
        v[uncoupled_index(twice_i, -1, twice_m + 1)] = sign * (c / norm).sqrt();
    }
    Ok(v)
}

/// Diagonalizes the logic-ion Hamiltonian and labels its eigenstates.
pub fn build_manifold(spec: &IonSpec) -> Result<HyperfineManifold> {
    spec.validate()?;
    let twice_i = spec.nuclear_spin.twice();
    let dim = spec.level_count();
    let h = uncoupled_hamiltonian(spec);
    let upper = spec.upper_f();
    let lower = spec.lower_f();

    // (label, manifold, energy, eigenvector)
    let mut solved: Vec<(LevelLabel, ManifoldSign, f64, Vec<f64>)> = Vec::with_capacity(dim);
    for twice_m in (-upper.twice()..=upper.twice()).step_by(2) {
        let members: Vec<usize> = [1, -1]
            .iter()
            .filter_map(|&twice_mj| {
                let twice_mi = twice_m - twice_mj;
                (twice_mi.abs() <= twice_i).then(|| uncoupled_index(twice_i, twice_mj, twice_mi))
            })
            .collect();
        let block = DMatrix::from_fn(members.len(), members.len(), |r, c| {
            h[(members[r], members[c])]
        });
        let eig = SymmetricEigen::new(block);
        let mut order: Vec<usize> = (0..members.len()).collect();
        // Upper manifold sits above the lower one within every block.
        order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
        for (rank, &col) in order.iter().enumerate() {
            let (f, sign) = if rank == 0 {
                (upper, ManifoldSign::Upper)
            } else {
                (lower, ManifoldSign::Lower)
            };
            let label = LevelLabel::new(f, HalfInt::from_twice(twice_m));
            let mut vec = vec![0.0; dim];
            for (r, &k) in members.iter().enumerate() {
                vec[k] = eig.eigenvectors[(r, col)];
            }
            let reference = coupled_state(spec, label)?;
            let overlap: f64 = vec.iter().zip(&reference).map(|(a, b)| a * b).sum();
            if overlap < 0.0 {
                vec.iter_mut().for_each(|x| *x = -*x);
            }
            solved.push((label, sign, eig.eigenvalues[col], vec));
        }
    }

    solved.sort_by(|a, b| b.0.f.cmp(&a.0.f).then(a.0.m_f.cmp(&b.0.m_f)));

    let mut basis_transform = DMatrix::<f64>::zeros(dim, dim);
    let mut levels = Vec::with_capacity(dim);
    for (col, (label, manifold, energy, vec)) in solved.into_iter().enumerate() {
        let mut b_coeff = 0.0;
        for (k, x) in vec.iter().enumerate() {
            basis_transform[(k, col)] = *x;
            let mj = if k <= twice_i as usize { 0.5 } else { -0.5 };
            b_coeff += mj * x * x;
        }
        levels.push(HyperfineLevel {
            label,
            manifold,
            energy,
            b_coeff,
        });
    }

    Ok(HyperfineManifold {
        ion: spec.clone(),
        levels,
        basis_transform,
    })
}

/// Closed-form Breit-Rabi energy of `|F±, m_F⟩` (nuclear Zeeman term neglected).
pub fn breit_rabi_energy(spec: &IonSpec, manifold: ManifoldSign, m_f: HalfInt) -> Result<f64> {
    spec.validate()?;
    let upper = spec.upper_f();
    if m_f.abs() > upper {
        return Err(Error::UnknownLevel(LevelLabel::new(upper, m_f)));
    }
    let a = spec.hyperfine_constant;
    let i = spec.nuclear_spin.value();
    let w = spec.zeeman_rate();
    if m_f.abs() == upper {
        if manifold == ManifoldSign::Lower {
            return Err(Error::StretchedLowerManifold(m_f.to_string()));
        }
        // stretched states are product states: exactly linear in B_q
        return Ok(a * i / 2.0 + m_f.value().signum() * w / 2.0);
    }
    let splitting = a * (i + 0.5);
    let x = w / splitting;
    let root = (1.0 + 4.0 * m_f.value() * x / (2.0 * i + 1.0) + x * x).sqrt();
    Ok(-a / 4.0 + manifold.sign() * splitting / 2.0 * root)
}
