//! Exact and dense linear algebra for the symmetric subspace of `N` qudit
//! registers of local dimension `d`.
//!
//! Basis convention: register 0 is the leftmost tensor factor and the most
//! significant digit of a basis index, so `kron(a, b)` puts `a`'s registers
//! first. `|phi_0>` is the all-zeros computational basis vector (the private
//! coin), which makes every formula here hold with exact equality.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use num_bigint::{BigInt, BigUint};
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;

use crate::{Error, Result};

/// Default cap on dense state-vector entries (`d^N`).
pub const DEFAULT_DENSE_LIMIT: usize = 1 << 20;

/// Exact ratio of multinomial coefficients, kept in lowest terms.
pub type MultinomialRatio = BigRational;

/// Lossy conversion at reporting boundaries.
pub fn ratio_to_f64(r: &MultinomialRatio) -> f64 {
    r.to_f64().expect("rational out of f64 range")
}

// ---------------------------------------------------------------------------
// Type vectors and multinomial combinatorics
// ---------------------------------------------------------------------------

/// Occupancy vector `(j_0, ..., j_{d-1})` counting how often each basis letter
/// appears in a product string; the index set `I_{d,n}` is all such vectors
/// with total `n`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TypeVector {
    counts: Vec<u32>,
}

impl TypeVector {
    pub fn new(counts: Vec<u32>) -> Self {
        TypeVector { counts }
    }

    /// The all-zero vector in `I_{d,0}`.
    pub fn empty(d: usize) -> Self {
        TypeVector { counts: vec![0; d] }
    }

    /// Type of `k` copies of one letter.
    pub fn single_letter(d: usize, letter: usize, k: u32) -> Result<Self> {
        if letter >= d {
            return Err(Error::LetterOutOfRange { letter, dim: d });
        }
        let mut counts = vec![0; d];
        counts[letter] = k;
        Ok(TypeVector { counts })
    }

    pub fn local_dim(&self) -> usize {
        self.counts.len()
    }

    /// Total register count `n = sum_k j_k`.
    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn count(&self, letter: usize) -> u32 {
        self.counts[letter]
    }

    /// `j + k * e_letter`.
    pub fn with_added(&self, letter: usize, k: u32) -> Self {
        let mut counts = self.counts.clone();
        counts[letter] += k;
        TypeVector { counts }
    }

    /// Membership check for `I_{d,n}`.
    pub fn check_membership(&self, d: usize, n: u32) -> Result<()> {
        if self.local_dim() != d || self.total() != n {
            return Err(Error::TypeSumMismatch {
                counts: self.counts.clone(),
                actual: self.total(),
                expected: n,
            });
        }
        Ok(())
    }

    /// All of `I_{d,n}` in lexicographic order.
    pub fn enumerate(d: usize, n: u32) -> Vec<TypeVector> {
        let mut out = Vec::new();
        let mut counts = vec![0u32; d];
        fn rec(counts: &mut Vec<u32>, pos: usize, left: u32, out: &mut Vec<TypeVector>) {
            if pos == counts.len() - 1 {
                counts[pos] = left;
                out.push(TypeVector {
                    counts: counts.clone(),
                });
                return;
            }
            for v in 0..=left {
                counts[pos] = v;
                rec(counts, pos + 1, left - v, out);
            }
        }
        rec(&mut counts, 0, n, &mut out);
        out
    }
}

/// Classify a product string by letter occupancy.
pub fn type_of(letters: &[usize], d: usize) -> Result<TypeVector> {
    let mut counts = vec![0u32; d];
    for &l in letters {
        if l >= d {
            return Err(Error::LetterOutOfRange { letter: l, dim: d });
        }
        counts[l] += 1;
    }
    Ok(TypeVector { counts })
}

/// Exact binomial coefficient.
pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut num = BigUint::one();
    let mut den = BigUint::one();
    for i in 0..k {
        num *= BigUint::from(n - i);
        den *= BigUint::from(i + 1);
    }
    num / den
}

/// Exact multinomial coefficient `n! / (j_0! ... j_{d-1}!)`.
pub fn multinomial(n: u32, j: &TypeVector) -> Result<BigUint> {
    if j.total() != n {
        return Err(Error::TypeSumMismatch {
            counts: j.counts.clone(),
            actual: j.total(),
            expected: n,
        });
    }
    // product of nested binomials, exact at every step
    let mut out = BigUint::one();
    let mut left = n as u64;
    for &c in &j.counts {
        out *= binomial(left, c as u64);
        left -= c as u64;
    }
    Ok(out)
}

/// Dimension of `Sym^n` for local dimension `d`: `C(n+d-1, d-1)`.
pub fn sym_dim(n_regs: usize, d: usize) -> BigUint {
    binomial((n_regs + d - 1) as u64, (d - 1) as u64)
}

fn big_ratio(num: BigUint, den: BigUint) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

// ---------------------------------------------------------------------------
// Quantum states
// ---------------------------------------------------------------------------

/// `prefix_mills` copies of `|phi_0>` in front, then a superposition of
/// type-basis states `|B^n_j>` on the remaining `n` registers with exact
/// nonnegative weights (`amplitude = sqrt(weight)`). Every state minted or
/// forged in this crate has nonnegative real amplitudes in the fixed basis,
/// so this representation is lossless; anything else goes dense.
#[derive(Clone, Debug)]
pub struct SymTyped {
    pub prefix_mills: usize,
    pub weights: BTreeMap<TypeVector, BigRational>,
}

impl SymTyped {
    /// Registers covered by the type superposition (excludes the prefix).
    pub fn trailing_regs(&self) -> usize {
        self.weights
            .keys()
            .next()
            .map(|j| j.total() as usize)
            .unwrap_or(0)
    }

    /// True when the state is a pure product of `|phi_0>` registers.
    pub fn is_all_mills(&self) -> bool {
        self.weights.iter().all(|(j, w)| {
            w.is_zero() || j.counts()[1..].iter().all(|&c| c == 0)
        })
    }

    /// Exact squared norm.
    pub fn norm_sq(&self) -> BigRational {
        self.weights.values().cloned().sum()
    }
}

#[derive(Clone, Debug)]
pub enum Repr {
    Dense(Vec<Complex64>),
    SymTyped(SymTyped),
}

/// A pure state of `registers` qudits, dense or exact-symmetric.
#[derive(Clone, Debug)]
pub struct QuantumState {
    repr: Repr,
    registers: usize,
    local_dim: usize,
}

impl QuantumState {
    pub fn from_dense(amps: Vec<Complex64>, registers: usize, d: usize) -> Result<Self> {
        let dim = checked_dim(registers, d, usize::MAX)?;
        if amps.len() != dim {
            return Err(Error::RegisterMismatch {
                got: amps.len(),
                expected: dim,
            });
        }
        Ok(QuantumState {
            repr: Repr::Dense(amps),
            registers,
            local_dim: d,
        })
    }

    pub fn from_sym_typed(st: SymTyped, d: usize) -> Self {
        let registers = st.prefix_mills + st.trailing_regs();
        QuantumState {
            repr: Repr::SymTyped(st),
            registers,
            local_dim: d,
        }
    }

    /// Computational basis string `|phi_{s_1} ... phi_{s_N}>`.
    pub fn product_string(letters: &[usize], d: usize) -> Result<Self> {
        let n = letters.len();
        let dim = checked_dim(n, d, usize::MAX)?;
        let mut idx = 0usize;
        for &l in letters {
            if l >= d {
                return Err(Error::LetterOutOfRange { letter: l, dim: d });
            }
            idx = idx * d + l;
        }
        let mut amps = vec![Complex64::zero(); dim];
        amps[idx] = Complex64::one();
        QuantumState::from_dense(amps, n, d)
    }

    pub fn registers(&self) -> usize {
        self.registers
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn repr(&self) -> &Repr {
        &self.repr
    }

    pub fn is_sym_typed(&self) -> bool {
        matches!(self.repr, Repr::SymTyped(_))
    }

    /// Dense amplitudes, expanding an exact state if necessary.
    pub fn dense_amplitudes(&self, limit: usize) -> Result<Vec<Complex64>> {
        match &self.repr {
            Repr::Dense(a) => Ok(a.clone()),
            Repr::SymTyped(st) => expand_sym_typed(st, self.local_dim, limit),
        }
    }

    /// Convert in place to the dense representation.
    pub fn to_dense(&self, limit: usize) -> Result<QuantumState> {
        Ok(QuantumState {
            repr: Repr::Dense(self.dense_amplitudes(limit)?),
            registers: self.registers,
            local_dim: self.local_dim,
        })
    }

    pub fn norm(&self, limit: usize) -> Result<f64> {
        match &self.repr {
            Repr::Dense(a) => Ok(a.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()),
            Repr::SymTyped(st) => {
                let _ = limit;
                Ok(ratio_to_f64(&st.norm_sq()).sqrt())
            }
        }
    }
}

/// `|B^n_j>`: the uniform superposition over all product strings of type `j`.
pub fn sym_basis_state(d: usize, j: &TypeVector) -> Result<QuantumState> {
    j.check_membership(d, j.total())?;
    if j.local_dim() != d {
        return Err(Error::LocalDimMismatch(j.local_dim(), d));
    }
    let mut weights = BTreeMap::new();
    weights.insert(j.clone(), BigRational::one());
    Ok(QuantumState::from_sym_typed(
        SymTyped {
            prefix_mills: 0,
            weights,
        },
        d,
    ))
}

/// `|phi_0>^{(x) k}`, the raw material of every coin.
pub fn mill_block(d: usize, k: usize) -> QuantumState {
    let mut weights = BTreeMap::new();
    weights.insert(TypeVector::empty(d), BigRational::one());
    QuantumState::from_sym_typed(
        SymTyped {
            prefix_mills: k,
            weights,
        },
        d,
    )
}

/// `|phi_letter>^{(x) k}` as an exact single-type state.
pub fn uniform_letter_block(d: usize, letter: usize, k: usize) -> Result<QuantumState> {
    let j = TypeVector::single_letter(d, letter, k as u32)?;
    sym_basis_state(d, &j)
}

fn checked_dim(registers: usize, d: usize, limit: usize) -> Result<usize> {
    let mut dim = 1usize;
    for _ in 0..registers {
        dim = dim
            .checked_mul(d)
            .ok_or(Error::DenseLimitExceeded { dim: usize::MAX, limit })?;
    }
    if dim > limit {
        return Err(Error::DenseLimitExceeded { dim, limit });
    }
    Ok(dim)
}

fn expand_sym_typed(st: &SymTyped, d: usize, limit: usize) -> Result<Vec<Complex64>> {
    let n = st.trailing_regs();
    let regs = st.prefix_mills + n;
    let dim = checked_dim(regs, d, limit)?;
    let trailing_dim = checked_dim(n, d, limit)?;
    let mut amps = vec![Complex64::zero(); dim];
    let mut per_type: HashMap<&TypeVector, f64> = HashMap::new();
    for (j, w) in &st.weights {
        if w.is_zero() {
            continue;
        }
        let mult = multinomial(n as u32, j)?;
        let mult_f = BigRational::from(BigInt::from(mult));
        per_type.insert(j, ratio_to_f64(&(w / &mult_f)).sqrt());
    }
    // prefix letters are all zero, so indices land in the first trailing block
    let mut letters = vec![0usize; n];
    for (t_idx, amp) in amps.iter_mut().take(trailing_dim).enumerate() {
        letters_of(t_idx, n, d, &mut letters);
        let j = type_of(&letters, d)?;
        if let Some(&a) = per_type.get(&j) {
            *amp = Complex64::new(a, 0.0);
        }
    }
    Ok(amps)
}

fn letters_of(idx: usize, n_regs: usize, d: usize, out: &mut [usize]) {
    let mut rest = idx;
    for r in (0..n_regs).rev() {
        out[r] = rest % d;
        rest /= d;
    }
}

/// Tensor product; stays exact when the left factor is pure mills, otherwise
/// falls back to the dense representation.
pub fn tensor(a: &QuantumState, b: &QuantumState, limit: usize) -> Result<QuantumState> {
    if a.local_dim != b.local_dim {
        return Err(Error::LocalDimMismatch(a.local_dim, b.local_dim));
    }
    if let (Repr::SymTyped(sa), Repr::SymTyped(sb)) = (&a.repr, &b.repr) {
        if sa.is_all_mills() {
            return Ok(QuantumState::from_sym_typed(
                SymTyped {
                    prefix_mills: a.registers + sb.prefix_mills,
                    weights: sb.weights.clone(),
                },
                a.local_dim,
            ));
        }
    }
    let da = a.dense_amplitudes(limit)?;
    let db = b.dense_amplitudes(limit)?;
    let dim = checked_dim(a.registers + b.registers, a.local_dim, limit)?;
    let mut out = vec![Complex64::zero(); dim];
    for (i, &x) in da.iter().enumerate() {
        if x == Complex64::zero() {
            continue;
        }
        let base = i * db.len();
        for (k, &y) in db.iter().enumerate() {
            out[base + k] = x * y;
        }
    }
    QuantumState::from_dense(out, a.registers + b.registers, a.local_dim)
}

/// Inner product `<a|b>` via the dense expansion.
pub fn inner(a: &QuantumState, b: &QuantumState, limit: usize) -> Result<Complex64> {
    let da = a.dense_amplitudes(limit)?;
    let db = b.dense_amplitudes(limit)?;
    if da.len() != db.len() {
        return Err(Error::RegisterMismatch {
            got: b.registers,
            expected: a.registers,
        });
    }
    Ok(da
        .iter()
        .zip(db.iter())
        .map(|(x, y)| x.conj() * y)
        .sum())
}

// ---------------------------------------------------------------------------
// Symmetrization over register subsets
// ---------------------------------------------------------------------------

/// Snap probabilities that are within `tol` of 0 or 1; keeps exact-by-
/// construction outcomes exact after float round-off.
pub fn snap_probability(p: f64, tol: f64) -> f64 {
    if p < tol {
        0.0
    } else if (1.0 - p).abs() < tol {
        1.0
    } else {
        p.clamp(0.0, 1.0)
    }
}

/// Precomputed partition of basis indices into symmetrization classes for a
/// fixed register subset: two indices share a class iff they agree outside
/// `regs` and are permutations of each other inside `regs`. Projecting onto
/// the symmetric subspace of `regs` averages amplitudes within each class.
pub struct SymGroups {
    n_regs: usize,
    d: usize,
    group_of: Vec<u32>,
    group_size: Vec<u32>,
    dim: usize,
}

impl SymGroups {
    pub fn new(n_regs: usize, d: usize, regs: &[usize], limit: usize) -> Result<Self> {
        let dim = checked_dim(n_regs, d, limit)?;
        for &r in regs {
            if r >= n_regs {
                return Err(Error::RegisterOutOfRange {
                    reg: r,
                    registers: n_regs,
                });
            }
        }
        let inside: Vec<bool> = {
            let mut v = vec![false; n_regs];
            for &r in regs {
                v[r] = true;
            }
            v
        };
        let q = regs.len();
        let types = TypeVector::enumerate(d, q as u32);
        let n_types = types.len();
        let type_rank: HashMap<Vec<u32>, u32> = types
            .iter()
            .enumerate()
            .map(|(i, t)| (t.counts().to_vec(), i as u32))
            .collect();

        let mut group_of = vec![0u32; dim];
        let mut letters = vec![0usize; n_regs];
        let mut counts = vec![0u32; d];
        let outside_slots = dim / checked_dim(q, d, usize::MAX)?;
        let total_slots = outside_slots
            .checked_mul(n_types)
            .ok_or(Error::DenseLimitExceeded { dim, limit })?;
        let mut group_size = vec![0u32; total_slots];
        for (idx, slot) in group_of.iter_mut().enumerate() {
            letters_of(idx, n_regs, d, &mut letters);
            counts.iter_mut().for_each(|c| *c = 0);
            let mut out_rank = 0usize;
            for r in 0..n_regs {
                if inside[r] {
                    counts[letters[r]] += 1;
                } else {
                    out_rank = out_rank * d + letters[r];
                }
            }
            let t = type_rank[&counts] as usize;
            let gid = out_rank * n_types + t;
            *slot = gid as u32;
            group_size[gid] += 1;
        }
        Ok(SymGroups {
            n_regs,
            d,
            group_of,
            group_size,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn class_sums(&self, amps: &[Complex64]) -> Vec<Complex64> {
        let mut sums = vec![Complex64::zero(); self.group_size.len()];
        for (idx, &a) in amps.iter().enumerate() {
            sums[self.group_of[idx] as usize] += a;
        }
        sums
    }

    /// `<psi| Pi |psi>` for the subset symmetrizer.
    pub fn probability(&self, amps: &[Complex64]) -> f64 {
        let sums = self.class_sums(amps);
        let mut p = 0.0;
        for (g, s) in sums.iter().enumerate() {
            let size = self.group_size[g];
            if size > 0 {
                p += s.norm_sqr() / size as f64;
            }
        }
        p
    }

    /// Projection outcome: probability plus both renormalized branches.
    pub fn project(&self, amps: &[Complex64], tol: f64) -> (f64, Option<Vec<Complex64>>, Option<Vec<Complex64>>) {
        let sums = self.class_sums(amps);
        let mut p = 0.0;
        for (g, s) in sums.iter().enumerate() {
            let size = self.group_size[g];
            if size > 0 {
                p += s.norm_sqr() / size as f64;
            }
        }
        let p = snap_probability(p, tol);
        let accepted = if p > 0.0 {
            let scale = 1.0 / p.sqrt();
            let mut out = vec![Complex64::zero(); amps.len()];
            for (o, &g) in out.iter_mut().zip(self.group_of.iter()) {
                let g = g as usize;
                *o = sums[g] / self.group_size[g] as f64 * scale;
            }
            Some(out)
        } else {
            None
        };
        let rejected = if p < 1.0 {
            let scale = 1.0 / (1.0 - p).sqrt();
            let mut out = vec![Complex64::zero(); amps.len()];
            for (idx, &a) in amps.iter().enumerate() {
                let g = self.group_of[idx] as usize;
                out[idx] = (a - sums[g] / self.group_size[g] as f64) * scale;
            }
            Some(out)
        } else {
            None
        };
        (p, accepted, rejected)
    }

    /// Born-rule measurement of `{Pi, I - Pi}`.
    pub fn measure<R: Rng>(&self, amps: &[Complex64], tol: f64, rng: &mut R) -> (bool, Vec<Complex64>) {
        let (p, acc, rej) = self.project(amps, tol);
        let accept = rng.gen::<f64>() < p;
        if accept {
            (true, acc.expect("accept branch has positive probability"))
        } else {
            (false, rej.expect("reject branch has positive probability"))
        }
    }

    pub fn n_regs(&self) -> usize {
        self.n_regs
    }

    pub fn local_dim(&self) -> usize {
        self.d
    }
}

/// Result of a two-outcome symmetric-subspace projection.
pub struct Projection {
    pub probability: f64,
    pub accepted: Option<QuantumState>,
    pub rejected: Option<QuantumState>,
}

/// Exact projection of a prefix-form state onto the full symmetric subspace:
/// `Pi_Sym^N (|phi_0>^p (x) |B^n_j>) = sqrt(mult(n,j)/mult(N,j+p e_0)) |B^N_{j+p e_0}>`.
pub fn project_sym_full_exact(st: &SymTyped) -> Result<(BigRational, SymTyped)> {
    let n = st.trailing_regs() as u32;
    let p_regs = st.prefix_mills as u32;
    let total = n + p_regs;
    let mut weights = BTreeMap::new();
    let mut prob = BigRational::zero();
    for (j, w) in &st.weights {
        if w.is_zero() {
            continue;
        }
        let lifted = j.with_added(0, p_regs);
        let ratio = big_ratio(multinomial(n, j)?, multinomial(total, &lifted)?);
        let w_new = w * &ratio;
        prob += &w_new;
        *weights.entry(lifted).or_insert_with(BigRational::zero) += w_new;
    }
    // renormalize the accepted branch
    if !prob.is_zero() {
        for w in weights.values_mut() {
            *w /= &prob;
        }
    }
    Ok((
        prob,
        SymTyped {
            prefix_mills: 0,
            weights,
        },
    ))
}

/// Two-outcome projection onto `Sym` of the last `subset_size` registers.
/// Exact when the state is prefix-form and the subset covers all registers.
pub fn project_sym(state: &QuantumState, subset_size: usize, limit: usize, tol: f64) -> Result<Projection> {
    let n_regs = state.registers();
    if subset_size > n_regs {
        return Err(Error::SubsetTooLarge {
            subset: subset_size,
            registers: n_regs,
        });
    }
    if subset_size == n_regs {
        if let Repr::SymTyped(st) = &state.repr {
            let (prob, accepted) = project_sym_full_exact(st)?;
            let p = ratio_to_f64(&prob);
            let accepted_state = if prob.is_zero() {
                None
            } else {
                Some(QuantumState::from_sym_typed(accepted, state.local_dim))
            };
            let rejected_state = if prob.is_one() {
                None
            } else {
                // reject branch leaves the exact family; expand if it fits
                reject_branch_dense(state, limit, tol)
            };
            return Ok(Projection {
                probability: p,
                accepted: accepted_state,
                rejected: rejected_state,
            });
        }
    }
    let regs: Vec<usize> = (n_regs - subset_size..n_regs).collect();
    project_sym_registers(state, &regs, limit, tol)
}

fn reject_branch_dense(state: &QuantumState, limit: usize, tol: f64) -> Option<QuantumState> {
    let regs: Vec<usize> = (0..state.registers()).collect();
    let groups = SymGroups::new(state.registers(), state.local_dim(), &regs, limit).ok()?;
    let amps = state.dense_amplitudes(limit).ok()?;
    let (_, _, rej) = groups.project(&amps, tol);
    rej.and_then(|r| QuantumState::from_dense(r, state.registers(), state.local_dim()).ok())
}

/// Two-outcome projection onto `Sym` of an arbitrary register subset.
pub fn project_sym_registers(
    state: &QuantumState,
    regs: &[usize],
    limit: usize,
    tol: f64,
) -> Result<Projection> {
    let groups = SymGroups::new(state.registers(), state.local_dim(), regs, limit)?;
    let amps = state.dense_amplitudes(limit)?;
    let (p, acc, rej) = groups.project(&amps, tol);
    Ok(Projection {
        probability: p,
        accepted: acc
            .map(|a| QuantumState::from_dense(a, state.registers(), state.local_dim()))
            .transpose()?,
        rejected: rej
            .map(|r| QuantumState::from_dense(r, state.registers(), state.local_dim()))
            .transpose()?,
    })
}

/// Born-sampled symmetric-subspace measurement on a register subset.
pub fn measure_sym_registers<R: Rng>(
    state: &QuantumState,
    regs: &[usize],
    limit: usize,
    tol: f64,
    rng: &mut R,
) -> Result<(bool, QuantumState)> {
    let proj = project_sym_registers(state, regs, limit, tol)?;
    let accept = rng.gen::<f64>() < proj.probability;
    let post = if accept {
        proj.accepted.expect("accept branch exists")
    } else {
        proj.rejected.expect("reject branch exists")
    };
    Ok((accept, post))
}

// ---------------------------------------------------------------------------
// Single-register rank-1 measurements and register removal
// ---------------------------------------------------------------------------

/// `<psi| (I (x) |t><t|_reg (x) I) |psi>` for a unit vector `t` in `C^d`.
pub fn rank1_probability(
    amps: &[Complex64],
    n_regs: usize,
    d: usize,
    reg: usize,
    target: &[Complex64],
) -> Result<f64> {
    let mut p = 0.0;
    for_each_register_block(amps.len(), n_regs, d, reg, |base, stride| {
        let mut c = Complex64::zero();
        for (l, t) in target.iter().enumerate() {
            c += t.conj() * amps[base + l * stride];
        }
        p += c.norm_sqr();
    })?;
    Ok(p)
}

/// Two-outcome measurement `{|t><t|, I - |t><t|}` on one register.
pub fn measure_rank1<R: Rng>(
    state: &QuantumState,
    reg: usize,
    target: &[Complex64],
    limit: usize,
    tol: f64,
    rng: &mut R,
) -> Result<(bool, QuantumState)> {
    let n_regs = state.registers();
    let d = state.local_dim();
    let mut amps = state.dense_amplitudes(limit)?;
    let p = snap_probability(rank1_probability(&amps, n_regs, d, reg, target)?, tol);
    let accept = rng.gen::<f64>() < p;
    let scale = 1.0 / if accept { p.sqrt() } else { (1.0 - p).sqrt() };
    for_each_register_block(amps.len(), n_regs, d, reg, |base, stride| {
        let mut c = Complex64::zero();
        for (l, t) in target.iter().enumerate() {
            c += t.conj() * amps[base + l * stride];
        }
        for (l, t) in target.iter().enumerate() {
            let i = base + l * stride;
            if accept {
                amps[i] = c * t * scale;
            } else {
                amps[i] = (amps[i] - c * t) * scale;
            }
        }
    })?;
    Ok((accept, QuantumState::from_dense(amps, n_regs, d)?))
}

fn for_each_register_block<F: FnMut(usize, usize)>(
    dim: usize,
    n_regs: usize,
    d: usize,
    reg: usize,
    mut f: F,
) -> Result<()> {
    if reg >= n_regs {
        return Err(Error::RegisterOutOfRange {
            reg,
            registers: n_regs,
        });
    }
    let stride = d.pow((n_regs - 1 - reg) as u32);
    let block = stride * d;
    let mut base = 0usize;
    while base < dim {
        for inner in 0..stride {
            f(base + inner, stride);
        }
        base += block;
    }
    Ok(())
}

/// Computational-basis measurement of `regs`, dropping them from the state.
/// Handed-over registers are never touched again by any recorded outcome, so
/// measuring them out preserves the joint distribution of everything else.
pub fn measure_out_registers<R: Rng>(
    state: &QuantumState,
    regs: &[usize],
    limit: usize,
    rng: &mut R,
) -> Result<(Vec<usize>, QuantumState)> {
    let n_regs = state.registers();
    let d = state.local_dim();
    for &r in regs {
        if r >= n_regs {
            return Err(Error::RegisterOutOfRange {
                reg: r,
                registers: n_regs,
            });
        }
    }
    let amps = state.dense_amplitudes(limit)?;
    let inside: Vec<bool> = {
        let mut v = vec![false; n_regs];
        for &r in regs {
            v[r] = true;
        }
        v
    };
    let q = regs.len();
    let out_dim = checked_dim(q, d, usize::MAX)?;
    let rem_regs = n_regs - q;
    let rem_dim = checked_dim(rem_regs, d, usize::MAX)?;

    // outcome probabilities
    let mut probs = vec![0.0f64; out_dim];
    let mut letters = vec![0usize; n_regs];
    for (idx, a) in amps.iter().enumerate() {
        if a.norm_sqr() == 0.0 {
            continue;
        }
        letters_of(idx, n_regs, d, &mut letters);
        let mut key = 0usize;
        for &r in regs {
            key = key * d + letters[r];
        }
        probs[key] += a.norm_sqr();
    }
    let total: f64 = probs.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    // float slack must land on an outcome of positive probability
    let mut outcome = probs
        .iter()
        .rposition(|&p| p > 0.0)
        .expect("state has positive norm");
    for (k, &p) in probs.iter().enumerate() {
        if u < p {
            outcome = k;
            break;
        }
        u -= p;
    }

    // collapse and drop
    let mut out = vec![Complex64::zero(); rem_dim];
    for (idx, a) in amps.iter().enumerate() {
        if a.norm_sqr() == 0.0 {
            continue;
        }
        letters_of(idx, n_regs, d, &mut letters);
        let mut key = 0usize;
        for &r in regs {
            key = key * d + letters[r];
        }
        if key != outcome {
            continue;
        }
        let mut rem_idx = 0usize;
        for r in 0..n_regs {
            if !inside[r] {
                rem_idx = rem_idx * d + letters[r];
            }
        }
        out[rem_idx] = *a;
    }
    let norm: f64 = out.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    for a in &mut out {
        *a /= norm;
    }
    let mut outcome_letters = vec![0usize; q];
    letters_of(outcome, q, d, &mut outcome_letters);
    Ok((
        outcome_letters,
        QuantumState::from_dense(out, rem_regs, d)?,
    ))
}

// ---------------------------------------------------------------------------
// Dense operators
// ---------------------------------------------------------------------------

/// Dense symmetric-subspace projector: `[x][y] = 1/mult(N, T(x))` when
/// `T(x) = T(y)`, else 0. Equal to the average of all register permutation
/// operators (cross-checked against that construction in the tests).
pub fn sym_projector_dense(n_regs: usize, d: usize, limit: usize) -> Result<DMatrix<f64>> {
    let dim = checked_dim(n_regs, d, limit)?;
    let (type_rank, inv_mult) = index_type_table(n_regs, d)?;
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    for x in 0..dim {
        for y in 0..dim {
            if type_rank[x] == type_rank[y] {
                m[(x, y)] = inv_mult[type_rank[x] as usize];
            }
        }
    }
    Ok(m)
}

/// Per-index type rank and `1/multinomial` per rank.
pub fn index_type_table(n_regs: usize, d: usize) -> Result<(Vec<u32>, Vec<f64>)> {
    let dim = checked_dim(n_regs, d, usize::MAX)?;
    let types = TypeVector::enumerate(d, n_regs as u32);
    let rank: HashMap<Vec<u32>, u32> = types
        .iter()
        .enumerate()
        .map(|(i, t)| (t.counts().to_vec(), i as u32))
        .collect();
    let mut inv_mult = Vec::with_capacity(types.len());
    for t in &types {
        let m = multinomial(n_regs as u32, t)?;
        inv_mult.push(1.0 / m.to_f64().expect("multinomial fits f64"));
    }
    let mut letters = vec![0usize; n_regs];
    let mut out = vec![0u32; dim];
    let mut counts = vec![0u32; d];
    for (idx, slot) in out.iter_mut().enumerate() {
        letters_of(idx, n_regs, d, &mut letters);
        counts.iter_mut().for_each(|c| *c = 0);
        for &l in &letters {
            counts[l] += 1;
        }
        *slot = rank[&counts];
    }
    Ok((out, inv_mult))
}

/// Unitary permutation operator on register order: basis string `s` maps to
/// the string whose letter at position `perm[r]` is `s[r]`.
pub fn permutation_operator(perm: &[usize], d: usize) -> Result<DMatrix<f64>> {
    let n_regs = perm.len();
    let dim = checked_dim(n_regs, d, usize::MAX)?;
    let mut seen = vec![false; n_regs];
    for &p in perm {
        if p >= n_regs || seen[p] {
            return Err(Error::RegisterOutOfRange {
                reg: p,
                registers: n_regs,
            });
        }
        seen[p] = true;
    }
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    let mut letters = vec![0usize; n_regs];
    let mut permuted = vec![0usize; n_regs];
    for idx in 0..dim {
        letters_of(idx, n_regs, d, &mut letters);
        for r in 0..n_regs {
            permuted[perm[r]] = letters[r];
        }
        let mut to = 0usize;
        for &l in &permuted {
            to = to * d + l;
        }
        m[(to, idx)] = 1.0;
    }
    Ok(m)
}

/// Oracle construction of the projector as the average over all `N!`
/// permutation operators, enumerated lexicographically. Small `N` only.
pub fn sym_projector_by_averaging(n_regs: usize, d: usize, limit: usize) -> Result<DMatrix<f64>> {
    use itertools::Itertools;
    let dim = checked_dim(n_regs, d, limit)?;
    let mut acc = DMatrix::<f64>::zeros(dim, dim);
    let mut count = 0usize;
    for perm in (0..n_regs).permutations(n_regs) {
        acc += permutation_operator(&perm, d)?;
        count += 1;
    }
    Ok(acc / count as f64)
}

/// Apply a real matrix to a complex vector.
pub fn apply_real_matrix(m: &DMatrix<f64>, v: &[Complex64]) -> Vec<Complex64> {
    let n = m.nrows();
    let mut out = vec![Complex64::zero(); n];
    for col in 0..m.ncols() {
        let x = v[col];
        if x == Complex64::zero() {
            continue;
        }
        for row in 0..n {
            let c = m[(row, col)];
            if c != 0.0 {
                out[row] += x * c;
            }
        }
    }
    out
}

/// Quadratic form `<v| M |v>` for real symmetric `M`.
pub fn quadratic_form(m: &DMatrix<f64>, v: &[Complex64]) -> f64 {
    let mv = apply_real_matrix(m, v);
    v.iter()
        .zip(mv.iter())
        .map(|(a, b)| (a.conj() * b).re)
        .sum()
}

/// Visit every nonzero entry `(x, y, value)` of the symmetric-subspace
/// projector without materializing it; entries are nonzero only within a
/// type class, so the visit count is `sum_j mult(j)^2`.
pub fn for_each_sym_entry<F: FnMut(usize, usize, f64)>(
    n_regs: usize,
    d: usize,
    mut f: F,
) -> Result<()> {
    let dim = checked_dim(n_regs, d, usize::MAX)?;
    let (type_rank, inv_mult) = index_type_table(n_regs, d)?;
    let n_types = inv_mult.len();
    let mut classes: Vec<Vec<usize>> = vec![Vec::new(); n_types];
    for idx in 0..dim {
        classes[type_rank[idx] as usize].push(idx);
    }
    for (t, class) in classes.iter().enumerate() {
        let v = inv_mult[t];
        for &x in class {
            for &y in class {
                f(x, y, v);
            }
        }
    }
    Ok(())
}

/// Signed exact value helper for reporting.
pub fn ratio_from_int(v: i64) -> BigRational {
    BigRational::from(BigInt::from(v))
}

/// `num/den` as an exact ratio of big integers.
pub fn ratio_of(num: BigUint, den: BigUint) -> BigRational {
    big_ratio(num, den)
}

pub fn ratio_abs(r: &BigRational) -> BigRational {
    r.abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const LIM: usize = DEFAULT_DENSE_LIMIT;
    const TOL: f64 = 1e-10;

    fn factorial(n: u64) -> BigUint {
        (1..=n).map(BigUint::from).product::<BigUint>().max(BigUint::one())
    }

    #[test]
    fn type_of_counts_letters() {
        assert_eq!(type_of(&[0, 1, 0], 2).unwrap().counts(), &[2, 1]);
        assert_eq!(type_of(&[2, 2, 2], 3).unwrap().counts(), &[0, 0, 3]);
        assert!(type_of(&[3], 2).is_err());
    }

    #[test]
    fn type_class_sizes_match_binomials() {
        // brute-force enumeration of all d=2, N=4 strings grouped by type
        let mut sizes = std::collections::BTreeMap::new();
        for idx in 0..16usize {
            let mut letters = [0usize; 4];
            letters_of(idx, 4, 2, &mut letters);
            *sizes.entry(type_of(&letters, 2).unwrap()).or_insert(0u32) += 1;
        }
        let got: Vec<u32> = sizes.values().cloned().collect();
        assert_eq!(got, vec![1, 4, 6, 4, 1]);
        for (j, &size) in &sizes {
            assert_eq!(BigUint::from(size), multinomial(4, j).unwrap());
        }
    }

    #[test]
    fn multinomial_examples() {
        assert_eq!(
            multinomial(4, &TypeVector::new(vec![2, 2])).unwrap(),
            BigUint::from(6u32)
        );
        assert_eq!(
            multinomial(7, &TypeVector::new(vec![7, 0, 0])).unwrap(),
            BigUint::one()
        );
        // factorial oracle: 6!/(2!2!2!)
        let oracle = factorial(6) / (factorial(2).pow(3));
        assert_eq!(
            multinomial(6, &TypeVector::new(vec![2, 2, 2])).unwrap(),
            oracle
        );
        assert_eq!(oracle, BigUint::from(90u32));
        assert!(multinomial(5, &TypeVector::new(vec![2, 2])).is_err());
    }

    #[test]
    fn sym_basis_single_string_type() {
        let st = sym_basis_state(2, &TypeVector::new(vec![2, 0])).unwrap();
        let amps = st.dense_amplitudes(LIM).unwrap();
        assert_abs_diff_eq!(amps[0].re, 1.0, epsilon = 1e-15);
        assert!(amps[1..].iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn sym_basis_two_register_superposition() {
        let st = sym_basis_state(2, &TypeVector::new(vec![1, 1])).unwrap();
        let amps = st.dense_amplitudes(LIM).unwrap();
        let r = 1.0 / 2f64.sqrt();
        assert_abs_diff_eq!(amps[1].re, r, epsilon = 1e-15);
        assert_abs_diff_eq!(amps[2].re, r, epsilon = 1e-15);
        assert_eq!(amps[0], Complex64::zero());
        assert_eq!(amps[3], Complex64::zero());
    }

    #[test]
    fn sym_basis_gram_is_identity() {
        // dense Gram computation over all |B^4_j>, d=2
        let types = TypeVector::enumerate(2, 4);
        let states: Vec<_> = types
            .iter()
            .map(|j| sym_basis_state(2, j).unwrap())
            .collect();
        for (a, sa) in states.iter().enumerate() {
            for (b, sb) in states.iter().enumerate() {
                let g = inner(sa, sb, LIM).unwrap();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(g.re, expect, epsilon = 1e-12);
                assert_abs_diff_eq!(g.im, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn project_symmetric_input_is_certain() {
        // two identical coins are already symmetric
        let cc = mill_block(2, 2);
        let proj = project_sym(&cc, 2, LIM, TOL).unwrap();
        assert_eq!(proj.probability, 1.0);
        assert!(proj.rejected.is_none());
    }

    #[test]
    fn project_orthogonal_pair_is_half() {
        let st = QuantumState::product_string(&[0, 1], 2).unwrap();
        let proj = project_sym(&st, 2, LIM, TOL).unwrap();
        assert_abs_diff_eq!(proj.probability, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn project_prefixed_basis_state_exact() {
        // |cent> (x) |B^2_{(1,1)}> with kappa = 1 projects with probability
        // C(2,1)/C(3,2) = 2/3
        let b = sym_basis_state(2, &TypeVector::new(vec![1, 1])).unwrap();
        let st = tensor(&mill_block(2, 1), &b, LIM).unwrap();
        assert!(st.is_sym_typed());
        let proj = project_sym(&st, 3, LIM, TOL).unwrap();
        assert_abs_diff_eq!(proj.probability, 2.0 / 3.0, epsilon = 1e-15);
        // dense projector trace oracle
        let p = sym_projector_dense(3, 2, LIM).unwrap();
        let dense = st.dense_amplitudes(LIM).unwrap();
        assert_abs_diff_eq!(quadratic_form(&p, &dense), 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn dense_projector_rank_and_idempotence() {
        for (n, d, rank) in [(2usize, 2usize, 3.0f64), (3, 2, 4.0)] {
            let p = sym_projector_dense(n, d, LIM).unwrap();
            assert_abs_diff_eq!(p.trace(), rank, epsilon = 1e-12);
            let p2 = &p * &p;
            let dev = (&p2 - &p).amax();
            assert!(dev < 1e-12, "idempotence violated by {dev}");
            let sym_dev = (&p - &p.transpose()).amax();
            assert!(sym_dev < 1e-15);
        }
    }

    #[test]
    fn permutation_operators_average_to_projector() {
        let id = permutation_operator(&[0, 1], 2).unwrap();
        assert_eq!(id, DMatrix::identity(4, 4));
        let swap = permutation_operator(&[1, 0], 2).unwrap();
        let avg = (id + swap) / 2.0;
        let p = sym_projector_dense(2, 2, LIM).unwrap();
        assert!((avg - &p).amax() < 1e-15);
        // N = 3 average over all 6 permutations
        let avg3 = sym_projector_by_averaging(3, 2, LIM).unwrap();
        let p3 = sym_projector_dense(3, 2, LIM).unwrap();
        assert!((avg3 - p3).amax() < 1e-12);
    }

    #[test]
    fn basis_spans_projector_image() {
        // residual of Pi|x> after projecting onto span{|B^N_j>} vanishes
        let n = 4usize;
        let p = sym_projector_dense(n, 2, LIM).unwrap();
        let basis: Vec<Vec<Complex64>> = TypeVector::enumerate(2, n as u32)
            .iter()
            .map(|j| {
                sym_basis_state(2, j)
                    .unwrap()
                    .dense_amplitudes(LIM)
                    .unwrap()
            })
            .collect();
        for x in 0..16usize {
            let mut v = vec![Complex64::zero(); 16];
            v[x] = Complex64::one();
            let mut px = apply_real_matrix(&p, &v);
            for b in &basis {
                let c: Complex64 = b.iter().zip(px.iter()).map(|(u, w)| u.conj() * w).sum();
                for (pi, bi) in px.iter_mut().zip(b.iter()) {
                    *pi -= c * bi;
                }
            }
            let res: f64 = px.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            assert!(res < 1e-10, "residual {res}");
        }
    }

    #[test]
    fn sequential_chain_equals_single_projection() {
        // nested suffix projections (2, 3, 4 registers) against one shot
        let mut state = QuantumState::product_string(&[1, 1, 0, 0], 2).unwrap();
        let single = project_sym(&state, 4, LIM, TOL).unwrap().probability;
        let mut chain = 1.0;
        for sub in [2usize, 3, 4] {
            let proj = project_sym(&state, sub, LIM, TOL).unwrap();
            chain *= proj.probability;
            match proj.accepted {
                Some(next) => state = next,
                None => break,
            }
        }
        assert_abs_diff_eq!(chain, single, epsilon = 1e-10);
    }

    #[test]
    fn exact_and_dense_probabilities_agree() {
        for (n_mills, j) in [
            (1usize, TypeVector::new(vec![1, 1])),
            (2, TypeVector::new(vec![2, 1])),
            (2, TypeVector::new(vec![0, 3])),
        ] {
            let b = sym_basis_state(2, &j).unwrap();
            let st = tensor(&mill_block(2, n_mills), &b, LIM).unwrap();
            let exact = project_sym(&st, st.registers(), LIM, TOL)
                .unwrap()
                .probability;
            let dense = project_sym(&st.to_dense(LIM).unwrap(), st.registers(), LIM, TOL)
                .unwrap()
                .probability;
            assert_abs_diff_eq!(exact, dense, epsilon = 1e-10);
        }
    }

    #[test]
    fn measure_out_preserves_marginals() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        // |phi_0 phi_1> (x) |B^2_{(1,1)}>: measuring out the first two
        // registers leaves the Bell-like tail intact
        let head = QuantumState::product_string(&[0, 1], 2).unwrap();
        let tail = sym_basis_state(2, &TypeVector::new(vec![1, 1])).unwrap();
        let st = tensor(&head, &tail, LIM).unwrap();
        let (letters, rest) = measure_out_registers(&st, &[0, 1], LIM, &mut rng).unwrap();
        assert_eq!(letters, vec![0, 1]);
        let amps = rest.dense_amplitudes(LIM).unwrap();
        let r = 1.0 / 2f64.sqrt();
        assert_abs_diff_eq!(amps[1].re, r, epsilon = 1e-12);
        assert_abs_diff_eq!(amps[2].re, r, epsilon = 1e-12);
    }

    #[test]
    fn rank1_measurement_born_rule() {
        let st = QuantumState::product_string(&[1, 0], 2).unwrap();
        let mill = [Complex64::one(), Complex64::zero()];
        let amps = st.dense_amplitudes(LIM).unwrap();
        assert_abs_diff_eq!(
            rank1_probability(&amps, 2, 2, 0, &mill).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            rank1_probability(&amps, 2, 2, 1, &mill).unwrap(),
            1.0,
            epsilon = 1e-15
        );
    }
}
