//! Attack strategies. Every strategy interacts with the scheme only through
//! the oracles a real adversary would have: `mint`, public `Count`, and the
//! bank's private `Count`. None of them can see the private key object.

use crate::pkqc::PkScheme;
use crate::symspace::{sym_basis_state, uniform_letter_block, QuantumState, TypeVector};
use crate::{Error, Result};

/// The forged block of `m` alleged coins built from `n` minted ones: the
/// type-basis state with exactly `n kappa` valid registers spread uniformly
/// over `m kappa` registers. Constructed exactly in the type representation,
/// which turns the closed-form success probability into an equality.
pub fn forge_state(n: usize, m: usize, scheme: &PkScheme) -> Result<QuantumState> {
    if m <= n {
        return Err(Error::AttackParams { n, m });
    }
    let kappa = scheme.kappa();
    let d = scheme.params.d;
    let mut counts = vec![0u32; d];
    counts[0] = (n * kappa) as u32;
    counts[1] = ((m - n) * kappa) as u32;
    sym_basis_state(d, &TypeVector::new(counts))
}

/// A nonadaptive strategy: how many coins it mints and what it submits to a
/// single public `Count` query.
#[derive(Clone, Debug)]
pub enum AdversaryStrategy {
    /// Mints `coins` valid coins and submits them unchanged.
    Honest { coins: usize },
    /// Mints `n` coins and submits the forged `m`-coin block.
    Alg2Forger { n: usize, m: usize },
    /// Submits `coins` blocks of `|phi_1>` registers, minting nothing.
    OrthogonalSubmitter { coins: usize },
}

impl AdversaryStrategy {
    /// `(mint calls, submitted joint state)` for the single `Count` query.
    pub fn submission(&self, scheme: &PkScheme) -> Result<(usize, QuantumState)> {
        let kappa = scheme.kappa();
        match *self {
            AdversaryStrategy::Honest { coins } => Ok((
                coins,
                scheme.private.mint(coins * kappa, scheme.limit())?,
            )),
            AdversaryStrategy::Alg2Forger { n, m } => Ok((n, forge_state(n, m, scheme)?)),
            AdversaryStrategy::OrthogonalSubmitter { coins } => Ok((
                0,
                uniform_letter_block(scheme.params.d, 1, coins * kappa)?,
            )),
        }
    }

    /// Number of coins the single query submits.
    pub fn submitted_coins(&self) -> usize {
        match *self {
            AdversaryStrategy::Honest { coins } => coins,
            AdversaryStrategy::Alg2Forger { m, .. } => m,
            AdversaryStrategy::OrthogonalSubmitter { coins } => coins,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            AdversaryStrategy::Honest { coins } => format!("honest({coins})"),
            AdversaryStrategy::Alg2Forger { n, m } => format!("forger(n={n},m={m})"),
            AdversaryStrategy::OrthogonalSubmitter { coins } => format!("orthogonal({coins})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symspace::{project_sym, tensor, mill_block};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forge_state_small_cases() {
        let s = PkScheme::canonical(2, 1).unwrap();
        // n = 0, m = 1: a single orthogonal register
        let f = forge_state(0, 1, &s).unwrap();
        let amps = f.dense_amplitudes(s.limit()).unwrap();
        assert_eq!(amps[1].re, 1.0);
        // n = 1, m = 2: (|phi_0 phi_1> + |phi_1 phi_0>)/sqrt(2)
        let f = forge_state(1, 2, &s).unwrap();
        let amps = f.dense_amplitudes(s.limit()).unwrap();
        let r = 1.0 / 2f64.sqrt();
        assert_abs_diff_eq!(amps[1].re, r, epsilon = 1e-15);
        assert_abs_diff_eq!(amps[2].re, r, epsilon = 1e-15);
        assert!(forge_state(2, 2, &s).is_err());
    }

    #[test]
    fn forge_state_private_count_is_certain() {
        let s = PkScheme::canonical(2, 2).unwrap();
        let f = forge_state(1, 3, &s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let (k, _) = s.private.count(&f, s.limit(), s.tol(), &mut rng).unwrap();
            assert_eq!(k, 2); // n * kappa
        }
    }

    #[test]
    fn forge_state_stays_exact_through_the_wallet() {
        let s = PkScheme::canonical(2, 2).unwrap();
        let f = forge_state(1, 2, &s).unwrap();
        let joint = tensor(&mill_block(2, 2), &f, s.limit()).unwrap();
        assert!(joint.is_sym_typed());
        let p = project_sym(&joint, 6, s.limit(), s.tol()).unwrap().probability;
        // C(4,2)/C(6,4)
        assert_abs_diff_eq!(p, 6.0 / 15.0, epsilon = 1e-15);
    }
}
