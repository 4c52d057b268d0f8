//! Closed-form probabilities, eigenvalues and utility/loss bounds in exact
//! arithmetic, with dense spectral oracles that verify them independently.

use nalgebra::DMatrix;
use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::One;

use crate::privcoin::{MintMode, PrivateScheme};
use crate::symspace::{
    binomial, for_each_sym_entry, index_type_table, multinomial, ratio_of, ratio_to_f64,
    MultinomialRatio, QuantumState, TypeVector,
};
use crate::{Error, Result};

/// Success probability of the forged `n -> m` transaction:
/// `C(m kappa, n kappa) / C((m+1) kappa, (n+1) kappa)`.
pub fn attack_success_prob(n: usize, m: usize, kappa: usize) -> Result<MultinomialRatio> {
    if m <= n || kappa == 0 {
        return Err(Error::AttackParams { n, m });
    }
    let (n, m, kappa) = (n as u64, m as u64, kappa as u64);
    Ok(ratio_of(
        binomial(m * kappa, n * kappa),
        binomial((m + 1) * kappa, (n + 1) * kappa),
    ))
}

/// Largest eigenvalue of the compressed verification operator; equal to the
/// attack success probability, which is what makes the attack optimal.
pub fn lambda_max_p(n: usize, m: usize, kappa: usize) -> Result<MultinomialRatio> {
    attack_success_prob(n, m, kappa)
}

/// Eigenvalue of the compressed verification operator on the type-basis
/// vector indexed by `j`: `mult(m kappa, j) / mult((m+1) kappa, j + kappa e_0)`.
/// Increases with `j_0` and is independent of the other coordinates.
pub fn p_eigenvalue(j: &TypeVector, m: usize, kappa: usize) -> Result<MultinomialRatio> {
    let n_regs = (m * kappa) as u32;
    j.check_membership(j.local_dim(), n_regs)?;
    let lifted = j.with_added(0, kappa as u32);
    Ok(ratio_of(
        multinomial(n_regs, j)?,
        multinomial(n_regs + kappa as u32, &lifted)?,
    ))
}

/// The same eigenvalue in product form: `prod_{r=1}^{kappa} (j_0 + r) / (m kappa + r)`.
pub fn p_eigenvalue_reduced(j0: usize, m: usize, kappa: usize) -> MultinomialRatio {
    let mut num = BigUint::one();
    let mut den = BigUint::one();
    for r in 1..=kappa as u64 {
        num *= BigUint::from(j0 as u64 + r);
        den *= BigUint::from((m * kappa) as u64 + r);
    }
    ratio_of(num, den)
}

/// Eigenvalue family of the compressed verification operator: one value per
/// `j` in `I_{d, m kappa}` with `j_0 <= n kappa`, sorted descending.
pub fn p_eigenvalue_family(
    n: usize,
    m: usize,
    kappa: usize,
    d: usize,
) -> Result<Vec<MultinomialRatio>> {
    let mut vals = Vec::new();
    for j in TypeVector::enumerate(d, (m * kappa) as u32) {
        if j.count(0) as usize <= n * kappa {
            vals.push(p_eigenvalue(&j, m, kappa)?);
        }
    }
    vals.sort();
    vals.reverse();
    Ok(vals)
}

/// Tight expected all-or-nothing utility `m p - n` of the forged transaction
/// together with the closed bound chain value `1 / (m+1)^{kappa-1}`.
#[derive(Clone, Debug)]
pub struct UtilityBound {
    pub tight: BigRational,
    pub chained: BigRational,
}

pub fn expected_utility_bound(n: usize, m: usize, kappa: usize) -> Result<UtilityBound> {
    if n == 0 {
        return Err(Error::AttackParams { n, m });
    }
    let p = attack_success_prob(n, m, kappa)?;
    let tight = BigRational::from(BigInt::from(m as u64)) * p
        - BigRational::from(BigInt::from(n as u64));
    let chained = BigRational::new(
        BigInt::one(),
        BigInt::from((m as u64 + 1).pow(kappa as u32 - 1)),
    );
    debug_assert!(tight <= chained);
    Ok(UtilityBound { tight, chained })
}

/// Eigenvalue of the compressed private-sabotage loss operator:
/// `m C(m kappa, j0) / C((m+1) kappa, j0 + kappa) - j0 / kappa`.
pub fn private_sabotage_eigenvalue(j0: usize, m: usize, kappa: usize) -> BigRational {
    let p = ratio_of(
        binomial((m * kappa) as u64, j0 as u64),
        binomial(((m + 1) * kappa) as u64, (j0 + kappa) as u64),
    );
    BigRational::from(BigInt::from(m as u64)) * p
        - BigRational::new(BigInt::from(j0 as u64), BigInt::from(kappa as u64))
}

/// Maximum of the private-sabotage eigenvalue over `j0`, with its argmax.
pub fn private_sabotage_max(m: usize, kappa: usize) -> (usize, BigRational) {
    let mut best = (0usize, private_sabotage_eigenvalue(0, m, kappa));
    for j0 in 1..=m * kappa {
        let v = private_sabotage_eigenvalue(j0, m, kappa);
        if v > best.1 {
            best = (j0, v);
        }
    }
    best
}

/// Expected-loss term of the single-chunk public-sabotage game on the
/// type-basis vector with `j0` valid registers:
/// `(m+1)(P1 - P2) - (1 - P1) j0 / kappa`, where
/// `P1 = C(m kappa, j0)/C((m+1) kappa, j0 + kappa)` and
/// `P2 = C(m kappa, j0)/C((m+2) kappa, j0 + 2 kappa)`.
pub fn public_sabotage_loss_term(j0: usize, m: usize, kappa: usize) -> BigRational {
    let num = binomial((m * kappa) as u64, j0 as u64);
    let p1 = ratio_of(
        num.clone(),
        binomial(((m + 1) * kappa) as u64, (j0 + kappa) as u64),
    );
    let p2 = ratio_of(
        num,
        binomial(((m + 2) * kappa) as u64, (j0 + 2 * kappa) as u64),
    );
    let m1 = BigRational::from(BigInt::from(m as u64 + 1));
    let j_over_kappa = BigRational::new(BigInt::from(j0 as u64), BigInt::from(kappa as u64));
    m1 * (&p1 - &p2) - (BigRational::one() - p1) * j_over_kappa
}

// ---------------------------------------------------------------------------
// Dense spectral oracles
// ---------------------------------------------------------------------------

fn zeros_of(idx: usize, n_regs: usize, d: usize) -> usize {
    let mut rest = idx;
    let mut zeros = 0usize;
    for _ in 0..n_regs {
        if rest.is_multiple_of(d) {
            zeros += 1;
        }
        rest /= d;
    }
    zeros
}

/// Max-entry norm of `[D, Pi_Sym]` for a diagonal operator `D`; only entries
/// inside a type class can be nonzero, so the scan is over those.
fn diag_commutator_residual<F: Fn(usize) -> f64>(n_regs: usize, d: usize, diag: F) -> Result<f64> {
    let mut max = 0.0f64;
    for_each_sym_entry(n_regs, d, |x, y, v| {
        let r = ((diag(x) - diag(y)) * v).abs();
        if r > max {
            max = r;
        }
    })?;
    Ok(max)
}

/// Max-entry norm of `Pi_L Pi_Sym Pi_R` for diagonal 0/1 masks `L`, `R`.
fn masked_projector_residual<L: Fn(usize) -> bool, R: Fn(usize) -> bool>(
    n_regs: usize,
    d: usize,
    left: L,
    right: R,
) -> Result<f64> {
    let mut max = 0.0f64;
    for_each_sym_entry(n_regs, d, |x, y, v| {
        if left(x) && right(y) && v.abs() > max {
            max = v.abs();
        }
    })?;
    Ok(max)
}

/// Dense construction of the subspace projectors for one `(m, n, kappa, d)`
/// point and verification of the structural identities behind the attack
/// optimality proof.
#[derive(Clone, Debug)]
pub struct SpectralReport {
    pub operator_name: String,
    pub m: usize,
    pub n: usize,
    pub kappa: usize,
    pub d: usize,
    /// Nonzero spectrum of the compressed verification operator, descending.
    pub eigenvalues: Vec<f64>,
    /// Closed-form eigenvalue family, descending.
    pub formula_values: Vec<MultinomialRatio>,
    /// Largest matched deviation between the two lists.
    pub max_abs_deviation: f64,
    /// Largest eigenvalue found by the dense solver.
    pub lambda_max_dense: f64,
    /// `max |[Pi_Good, Pi_Sym]|` over `m kappa` registers.
    pub good_sym_commutator: f64,
    /// `max |Pi_BadTilde Pi_Sym Pi_GoodTilde|` over `(m+1) kappa` registers.
    pub bad_sym_good_residual: f64,
    /// `max |[Counter, Pi_Sym]|` over `(m+1) kappa` registers.
    pub counter_sym_commutator: f64,
    /// Every Good basis string counts `<= n kappa` with certainty and every
    /// Bad basis string counts `> n kappa` with certainty.
    pub count_split_ok: bool,
}

impl SpectralReport {
    pub fn residuals_ok(&self, tol: f64) -> bool {
        self.good_sym_commutator < tol
            && self.bad_sym_good_residual < tol
            && self.counter_sym_commutator < tol
            && self.count_split_ok
    }
}

/// Nonzero spectrum of the compressed verification operator, computed by
/// restricting the dense symmetrizer to the (computational-basis) span of
/// the good prefixed subspace and solving the resulting Hermitian matrix.
pub fn p_operator_nonzero_spectrum(
    n: usize,
    m: usize,
    kappa: usize,
    d: usize,
    limit: usize,
) -> Result<Vec<f64>> {
    let inner_regs = m * kappa;
    let total_regs = (m + 1) * kappa;
    let inner_dim = d.pow(inner_regs as u32);
    let total_dim = d.pow(total_regs as u32);
    if total_dim > limit {
        return Err(Error::DenseLimitExceeded {
            dim: total_dim,
            limit,
        });
    }
    // basis of GoodTilde: prefix registers all zero (index < d^{m kappa}),
    // at most n kappa zero letters among the trailing registers
    let basis: Vec<usize> = (0..inner_dim)
        .filter(|&x| zeros_of(x, inner_regs, d) <= n * kappa)
        .collect();
    let (type_rank, inv_mult) = index_type_table(total_regs, d)?;
    let r = basis.len();
    let mut gram = DMatrix::<f64>::zeros(r, r);
    for (a, &x) in basis.iter().enumerate() {
        for (b, &y) in basis.iter().enumerate() {
            if type_rank[x] == type_rank[y] {
                gram[(a, b)] = inv_mult[type_rank[x] as usize];
            }
        }
    }
    let eig = nalgebra::SymmetricEigen::new(gram);
    let expected_rank = p_eigenvalue_family(n, m, kappa, d)?.len();
    let mut vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    // everything beyond the formula rank must be numerically zero
    for &v in &vals[expected_rank..] {
        debug_assert!(v.abs() < 1e-9, "unexpected nonzero eigenvalue {v}");
    }
    vals.truncate(expected_rank);
    Ok(vals)
}

/// Largest eigenvalue of the compressed private-sabotage loss operator
/// `m Pi_Sym - Counter/kappa + I`, restricted to states whose first `kappa`
/// registers hold the wallet coin. The mean refund loss of any submission is
/// bounded by this value, and its positive spectrum is exactly the
/// `private_sabotage_eigenvalue` family.
pub fn private_sabotage_lambda_max_dense(
    m: usize,
    kappa: usize,
    d: usize,
    limit: usize,
) -> Result<f64> {
    let inner_regs = m * kappa;
    let total_regs = (m + 1) * kappa;
    let inner_dim = d.pow(inner_regs as u32);
    let total_dim = d.pow(total_regs as u32);
    if total_dim > limit {
        return Err(Error::DenseLimitExceeded {
            dim: total_dim,
            limit,
        });
    }
    let (type_rank, inv_mult) = index_type_table(total_regs, d)?;
    // the wallet-prefixed subspace is spanned by indices below d^{m kappa}
    let mut q = DMatrix::<f64>::zeros(inner_dim, inner_dim);
    for x in 0..inner_dim {
        for y in 0..inner_dim {
            if type_rank[x] == type_rank[y] {
                q[(x, y)] = m as f64 * inv_mult[type_rank[x] as usize];
            }
        }
        // Counter/kappa - I on the prefixed index is zeros(x)/kappa
        q[(x, x)] -= zeros_of(x, inner_regs, d) as f64 / kappa as f64;
    }
    let eig = nalgebra::SymmetricEigen::new(q);
    Ok(eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max))
}

/// Dense evaluation of the single-chunk public-sabotage loss term on the
/// type-basis state with `j0` valid registers: the pass probabilities with
/// one and two wallet coins come from dense symmetrizer overlaps instead of
/// the closed binomial forms.
pub fn public_sabotage_loss_term_dense(
    j0: usize,
    m: usize,
    kappa: usize,
    d: usize,
    limit: usize,
) -> Result<f64> {
    use crate::symspace::{mill_block, project_sym, sym_basis_state, tensor, TypeVector};
    let inner_regs = m * kappa;
    let mut counts = vec![0u32; d];
    counts[0] = j0 as u32;
    counts[1] = (inner_regs - j0) as u32;
    let basis = sym_basis_state(d, &TypeVector::new(counts))?;
    let overlap = |wallet_coins: usize| -> Result<f64> {
        let joint = tensor(&mill_block(d, wallet_coins * kappa), &basis, limit)?
            .to_dense(limit)?;
        Ok(project_sym(&joint, joint.registers(), limit, 0.0)?.probability)
    };
    let p1 = overlap(1)?;
    let p2 = overlap(2)?;
    Ok((m + 1) as f64 * (p1 - p2) - (1.0 - p1) * j0 as f64 / kappa as f64)
}

/// Run the full structural-lemma suite at one grid point.
pub fn verify_structural_lemmas(
    m: usize,
    n: usize,
    kappa: usize,
    d: usize,
    limit: usize,
) -> Result<SpectralReport> {
    if m <= n {
        return Err(Error::AttackParams { n, m });
    }
    let inner_regs = m * kappa;
    let total_regs = (m + 1) * kappa;
    let inner_dim = d.pow(inner_regs as u32);
    let total_dim = d.pow(total_regs as u32);
    if total_dim > limit {
        return Err(Error::DenseLimitExceeded {
            dim: total_dim,
            limit,
        });
    }
    let n_cut = n * kappa;

    // [Pi_Good, Pi_Sym] over the m kappa inner registers
    let good_sym_commutator = diag_commutator_residual(inner_regs, d, |x| {
        if zeros_of(x, inner_regs, d) <= n_cut {
            1.0
        } else {
            0.0
        }
    })?;

    // Pi_BadTilde Pi_Sym Pi_GoodTilde over all (m+1) kappa registers;
    // the prefixed masks select indices whose leading kappa letters are zero
    let bad_sym_good_residual = masked_projector_residual(
        total_regs,
        d,
        |x| x < inner_dim && zeros_of(x, inner_regs, d) > n_cut,
        |y| y < inner_dim && zeros_of(y, inner_regs, d) <= n_cut,
    )?;

    // [Counter, Pi_Sym] over all (m+1) kappa registers
    let counter_sym_commutator =
        diag_commutator_residual(total_regs, d, |x| zeros_of(x, total_regs, d) as f64)?;

    // the private count of a Good (Bad) basis string never (always) exceeds
    // n kappa; exercised through the actual counting measurement
    let scheme = PrivateScheme::keygen(d, MintMode::CanonicalBasis)?;
    let mut count_split_ok = true;
    let mut rng = crate::games::trial_rng(0xC0DE, 0);
    let mut letters = vec![0usize; inner_regs];
    for x in 0..inner_dim {
        let mut rest = x;
        for r in (0..inner_regs).rev() {
            letters[r] = rest % d;
            rest /= d;
        }
        let st = QuantumState::product_string(&letters, d)?;
        let (count, _) = scheme.count(&st, limit, 1e-10, &mut rng)?;
        let in_good = zeros_of(x, inner_regs, d) <= n_cut;
        if in_good != (count <= n_cut) {
            count_split_ok = false;
        }
    }

    let eigenvalues = p_operator_nonzero_spectrum(n, m, kappa, d, limit)?;
    let formula_values = p_eigenvalue_family(n, m, kappa, d)?;
    let max_abs_deviation = eigenvalues
        .iter()
        .zip(formula_values.iter())
        .map(|(dense, exact)| (dense - ratio_to_f64(exact)).abs())
        .fold(0.0f64, f64::max);
    let lambda_max_dense = eigenvalues.first().cloned().unwrap_or(0.0);

    Ok(SpectralReport {
        operator_name: format!("compressed verification operator (m={m}, n={n}, kappa={kappa})"),
        m,
        n,
        kappa,
        d,
        eigenvalues,
        formula_values,
        max_abs_deviation,
        lambda_max_dense,
        good_sym_commutator,
        bad_sym_good_residual,
        counter_sym_commutator,
        count_split_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symspace::DEFAULT_DENSE_LIMIT;
    use approx::assert_abs_diff_eq;
    use num_traits::Zero;

    const LIM: usize = DEFAULT_DENSE_LIMIT;

    fn ratio(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn attack_probability_examples() {
        assert_eq!(attack_success_prob(0, 1, 1).unwrap(), ratio(1, 2));
        assert_eq!(attack_success_prob(1, 2, 1).unwrap(), ratio(2, 3));
        assert!(attack_success_prob(2, 2, 1).is_err());
        // single-coin start stays below (2/3)^kappa
        for kappa in 1..=8usize {
            let p = attack_success_prob(1, 2, kappa).unwrap();
            let bound = ratio(2, 3).pow(kappa as i32);
            assert!(p <= bound, "kappa = {kappa}");
        }
    }

    #[test]
    fn attack_probability_approaches_one() {
        // monotone in n for m = n+1 and above the (1 - 1/n)^kappa floor
        for kappa in 1..=3usize {
            let mut prev = BigRational::zero();
            for n in 1..=12usize {
                let p = attack_success_prob(n, n + 1, kappa).unwrap();
                assert!(p > prev);
                let floor = (BigRational::one()
                    - BigRational::new(BigInt::one(), BigInt::from(n as u64)))
                .pow(kappa as i32);
                assert!(p > floor, "n = {n}, kappa = {kappa}");
                prev = p;
            }
        }
    }

    #[test]
    fn lambda_max_matches_dense_solver() {
        for (n, m, kappa, expect) in [(1usize, 2usize, 1usize, 2.0 / 3.0), (0, 1, 2, 1.0 / 6.0)] {
            let spectrum = p_operator_nonzero_spectrum(n, m, kappa, 2, LIM).unwrap();
            assert_abs_diff_eq!(spectrum[0], expect, epsilon = 1e-10);
            assert_abs_diff_eq!(
                ratio_to_f64(&lambda_max_p(n, m, kappa).unwrap()),
                expect,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn p_eigenvalue_examples() {
        // full-mill type has eigenvalue 1
        let full = TypeVector::new(vec![2, 0]);
        assert_eq!(p_eigenvalue(&full, 2, 1).unwrap(), BigRational::one());
        // all-orthogonal type at kappa = 1, m = 2
        let orth = TypeVector::new(vec![0, 2]);
        assert_eq!(p_eigenvalue(&orth, 2, 1).unwrap(), ratio(1, 3));
        // monotone in j0 and equal to the reduced product form
        for m in 1..=3usize {
            for kappa in 1..=3usize {
                let mut prev = BigRational::zero();
                for j0 in 0..=m * kappa {
                    let j = TypeVector::new(vec![j0 as u32, (m * kappa - j0) as u32]);
                    let v = p_eigenvalue(&j, m, kappa).unwrap();
                    assert_eq!(v, p_eigenvalue_reduced(j0, m, kappa));
                    assert!(v > prev);
                    prev = v;
                }
            }
        }
    }

    #[test]
    fn p_eigenvalue_ignores_tail_coordinates() {
        // all completions of a fixed j0 share the eigenvalue (d = 3)
        let m = 2;
        let kappa = 1;
        let reference = p_eigenvalue_reduced(1, m, kappa);
        for j in TypeVector::enumerate(3, (m * kappa) as u32) {
            if j.count(0) == 1 {
                assert_eq!(p_eigenvalue(&j, m, kappa).unwrap(), reference);
            }
        }
    }

    #[test]
    fn utility_bound_examples() {
        let b = expected_utility_bound(1, 2, 4).unwrap();
        // 2 * C(8,4)/C(12,8) - 1 = -71/99
        assert_eq!(b.tight, ratio(-71, 99));
        assert_eq!(b.chained, ratio(1, 27));
        let b1 = expected_utility_bound(1, 2, 1).unwrap();
        assert_eq!(b1.tight, ratio(1, 3));
        assert_eq!(b1.chained, BigRational::one());
        assert!(b1.tight <= b1.chained);
    }

    #[test]
    fn private_sabotage_eigenvalue_examples() {
        assert_eq!(
            private_sabotage_eigenvalue(1, 1, 1),
            BigRational::zero() // j0 = m kappa
        );
        assert_eq!(private_sabotage_eigenvalue(0, 1, 1), ratio(1, 2));
        let (j0, max) = private_sabotage_max(3, 4);
        assert_eq!(j0, 0);
        assert!(max <= ratio(1, 8));
        // the bound 1/2^{kappa-1} holds across a sweep
        for m in 1..=6usize {
            for kappa in 1..=6usize {
                let (_, max) = private_sabotage_max(m, kappa);
                assert!(max <= BigRational::new(BigInt::one(), BigInt::from(1u64 << (kappa - 1))));
            }
        }
    }

    #[test]
    fn public_sabotage_term_examples() {
        // exact zero at the all-valid type
        assert_eq!(
            public_sabotage_loss_term(8, 2, 4),
            BigRational::zero()
        );
        // small-j0 values sit below (3/4)^kappa at kappa = 4, m = 2
        let bound = ratio(3, 4).pow(4);
        for j0 in 0..2usize {
            assert!(public_sabotage_loss_term(j0, 2, 4) <= bound);
        }
    }

    #[test]
    fn private_sabotage_spectrum_matches_dense_operator() {
        for (m, kappa) in [(1usize, 1usize), (2, 1), (1, 2), (2, 2), (3, 2)] {
            let dense = private_sabotage_lambda_max_dense(m, kappa, 2, LIM).unwrap();
            let (_, exact) = private_sabotage_max(m, kappa);
            assert_abs_diff_eq!(dense, ratio_to_f64(&exact), epsilon = 1e-10);
        }
    }

    #[test]
    fn public_sabotage_term_matches_dense_overlaps() {
        for (m, kappa) in [(1usize, 2usize), (2, 2), (2, 3)] {
            for j0 in 0..=m * kappa {
                let dense = public_sabotage_loss_term_dense(j0, m, kappa, 2, LIM).unwrap();
                let exact = ratio_to_f64(&public_sabotage_loss_term(j0, m, kappa));
                assert_abs_diff_eq!(dense, exact, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn structural_lemmas_small_grid() {
        for (m, n, kappa) in [(2usize, 1usize, 1usize), (2, 0, 2)] {
            let report = verify_structural_lemmas(m, n, kappa, 2, LIM).unwrap();
            assert!(report.residuals_ok(1e-12), "{report:?}");
            assert!(report.max_abs_deviation < 1e-10);
        }
    }
}
