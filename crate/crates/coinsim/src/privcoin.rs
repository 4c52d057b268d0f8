//! The private coin scheme: minting copies of a fixed state `|mill>` and
//! verifying with the rank-1 projective measurement `{|mill><mill|, I - ...}`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::symspace::{
    mill_block, rank1_probability, measure_rank1, ratio_from_int, QuantumState, Repr, SymTyped,
};
use crate::{Error, Result};

/// How the coin state is drawn at key generation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MintMode {
    /// `|mill> = |phi_0>`, aligning the coin with the type machinery so the
    /// closed-form checks hold exactly.
    CanonicalBasis,
    /// A Haar-random unit vector (Gaussian method), for scheme-independence
    /// checks of structural identities.
    HaarRandom { seed: u64 },
}

/// A private coin scheme: the secret is the coin state itself.
#[derive(Clone, Debug)]
pub struct PrivateScheme {
    d: usize,
    mill: Vec<Complex64>,
    mode: MintMode,
}

impl PrivateScheme {
    pub fn keygen(d: usize, mode: MintMode) -> Result<Self> {
        if d < 2 {
            return Err(Error::LocalDimTooSmall(d));
        }
        let mill = match mode {
            MintMode::CanonicalBasis => {
                let mut v = vec![Complex64::zero(); d];
                v[0] = Complex64::new(1.0, 0.0);
                v
            }
            MintMode::HaarRandom { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut v: Vec<Complex64> = (0..d)
                    .map(|_| {
                        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
                    })
                    .collect();
                let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
                for c in &mut v {
                    *c /= norm;
                }
                v
            }
        };
        Ok(PrivateScheme { d, mill, mode })
    }

    pub fn local_dim(&self) -> usize {
        self.d
    }

    pub fn mill(&self) -> &[Complex64] {
        &self.mill
    }

    pub fn mode(&self) -> MintMode {
        self.mode
    }

    pub fn is_canonical(&self) -> bool {
        self.mode == MintMode::CanonicalBasis
    }

    /// `|mill>^{(x) count}`.
    pub fn mint(&self, count: usize, limit: usize) -> Result<QuantumState> {
        match self.mode {
            MintMode::CanonicalBasis => Ok(mill_block(self.d, count)),
            MintMode::HaarRandom { .. } => {
                let mut amps = vec![Complex64::new(1.0, 0.0)];
                for _ in 0..count {
                    let mut next = vec![Complex64::zero(); amps.len() * self.d];
                    for (i, &a) in amps.iter().enumerate() {
                        for (l, &m) in self.mill.iter().enumerate() {
                            next[i * self.d + l] = a * m;
                        }
                    }
                    if next.len() > limit {
                        return Err(Error::DenseLimitExceeded {
                            dim: next.len(),
                            limit,
                        });
                    }
                    amps = next;
                }
                QuantumState::from_dense(amps, count, self.d)
            }
        }
    }

    /// Projective verification of one register; Born-sampled, collapsing.
    pub fn verify<R: Rng>(
        &self,
        state: &QuantumState,
        register: usize,
        limit: usize,
        tol: f64,
        rng: &mut R,
    ) -> Result<(bool, QuantumState)> {
        measure_rank1(state, register, &self.mill, limit, tol, rng)
    }

    /// Sequential verification of a register subset, left to right; returns
    /// the number of accepts and the fully collapsed state.
    pub fn count_registers<R: Rng>(
        &self,
        state: &QuantumState,
        regs: &[usize],
        limit: usize,
        tol: f64,
        rng: &mut R,
    ) -> Result<(usize, QuantumState)> {
        let mut current = state.clone();
        let mut accepted = 0usize;
        for &r in regs {
            let (ok, post) = self.verify(&current, r, limit, tol, rng)?;
            if ok {
                accepted += 1;
            }
            current = post;
        }
        Ok((accepted, current))
    }

    /// `Count`: verify every register one by one.
    pub fn count<R: Rng>(
        &self,
        state: &QuantumState,
        limit: usize,
        tol: f64,
        rng: &mut R,
    ) -> Result<(usize, QuantumState)> {
        let regs: Vec<usize> = (0..state.registers()).collect();
        self.count_registers(state, &regs, limit, tol, rng)
    }

    /// `tr(Counter rho)`: the expected number of registers that would pass
    /// verification. Exact on canonical exact states, dense otherwise.
    pub fn count_expectation(&self, state: &QuantumState, limit: usize) -> Result<f64> {
        if self.is_canonical() {
            if let Repr::SymTyped(st) = state.repr() {
                return Ok(crate::symspace::ratio_to_f64(
                    &canonical_count_expectation_exact(st),
                ));
            }
        }
        let amps = state.dense_amplitudes(limit)?;
        let mut total = 0.0;
        for r in 0..state.registers() {
            total += rank1_probability(&amps, state.registers(), self.d, r, &self.mill)?;
        }
        Ok(total)
    }

    /// Distribution of the count value on a canonical exact state: the point
    /// mass structure `Pr[count = prefix + j_0] = weight(j)`.
    pub fn count_distribution_exact(&self, st: &SymTyped) -> Vec<(usize, BigRational)> {
        let mut out: std::collections::BTreeMap<usize, BigRational> = Default::default();
        for (j, w) in &st.weights {
            if w.is_zero() {
                continue;
            }
            let c = st.prefix_mills + j.count(0) as usize;
            *out.entry(c).or_insert_with(BigRational::zero) += w.clone();
        }
        out.into_iter().collect()
    }

    /// Dense `Counter_N = sum_r I (x) |mill><mill|_r (x) I`; canonical mode
    /// only, where it is diagonal with entry = number of zero letters.
    pub fn counter_dense(&self, n_regs: usize, limit: usize) -> Result<DMatrix<f64>> {
        assert!(
            self.is_canonical(),
            "dense counter oracle is defined for the canonical basis"
        );
        let dim = {
            let mut dim = 1usize;
            for _ in 0..n_regs {
                dim *= self.d;
            }
            dim
        };
        if dim > limit {
            return Err(Error::DenseLimitExceeded { dim, limit });
        }
        let mut m = DMatrix::<f64>::zeros(dim, dim);
        for x in 0..dim {
            let mut rest = x;
            let mut zeros = 0usize;
            for _ in 0..n_regs {
                if rest.is_multiple_of(self.d) {
                    zeros += 1;
                }
                rest /= self.d;
            }
            m[(x, x)] = zeros as f64;
        }
        Ok(m)
    }
}

fn canonical_count_expectation_exact(st: &SymTyped) -> BigRational {
    let mut total = BigRational::zero();
    for (j, w) in &st.weights {
        total += w * ratio_from_int((st.prefix_mills + j.count(0) as usize) as i64);
    }
    total
}
