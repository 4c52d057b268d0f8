//! The lifted public coin scheme: a public coin is `kappa` private coins, and
//! public verification projects the joint wallet+coin state onto the
//! symmetric subspace over all registers held so far.

use rand::Rng;

use crate::privcoin::{MintMode, PrivateScheme};
use crate::symspace::{
    measure_sym_registers, project_sym, tensor, QuantumState, DEFAULT_DENSE_LIMIT,
};
use crate::{Error, Result};

/// Parameters fixing one instantiated scheme.
#[derive(Clone, Copy, Debug)]
pub struct SchemeParams {
    pub d: usize,
    pub kappa: usize,
    pub dense_limit: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl SchemeParams {
    pub fn new(d: usize, kappa: usize) -> Self {
        SchemeParams {
            d,
            kappa,
            dense_limit: DEFAULT_DENSE_LIMIT,
            tolerance: 1e-10,
            seed: 0,
        }
    }
}

/// A public coin scheme over a private scheme with rank-1 verification.
#[derive(Clone, Debug)]
pub struct PkScheme {
    pub params: SchemeParams,
    pub private: PrivateScheme,
}

impl PkScheme {
    pub fn new(params: SchemeParams, mode: MintMode) -> Result<Self> {
        if params.kappa == 0 {
            return Err(Error::Config("kappa must be at least 1".into()));
        }
        Ok(PkScheme {
            private: PrivateScheme::keygen(params.d, mode)?,
            params,
        })
    }

    pub fn canonical(d: usize, kappa: usize) -> Result<Self> {
        PkScheme::new(SchemeParams::new(d, kappa), MintMode::CanonicalBasis)
    }

    pub fn kappa(&self) -> usize {
        self.params.kappa
    }

    pub fn limit(&self) -> usize {
        self.params.dense_limit
    }

    pub fn tol(&self) -> f64 {
        self.params.tolerance
    }

    /// One public coin: `|cent> = |mill>^{(x) kappa}`.
    pub fn mint_public(&self) -> Result<QuantumState> {
        self.private.mint(self.params.kappa, self.params.dense_limit)
    }
}

/// The verifier's register collection. The wallet coin occupies the first
/// `kappa` registers; received coins are appended in submission order.
/// `verified` is the register-count bookkeeping `m` (it advances on every
/// verification, accepted or not); acceptance is tracked separately.
#[derive(Clone, Debug)]
pub struct Wallet {
    state: QuantumState,
    received: usize,
    verified: usize,
    accepted: usize,
    rejected: bool,
}

impl Wallet {
    /// Fresh wallet holding one valid public coin.
    pub fn init(scheme: &PkScheme) -> Result<Wallet> {
        Ok(Wallet {
            state: scheme.mint_public()?,
            received: 0,
            verified: 0,
            accepted: 0,
            rejected: false,
        })
    }

    pub fn state(&self) -> &QuantumState {
        &self.state
    }

    pub fn into_state(self) -> QuantumState {
        self.state
    }

    /// Coins appended so far (`m`).
    pub fn received(&self) -> usize {
        self.received
    }

    pub fn accepted(&self) -> usize {
        self.accepted
    }

    pub fn rejected(&self) -> bool {
        self.rejected
    }

    /// Append alleged coins (a joint state over a multiple of `kappa`
    /// registers, possibly entangled with whatever the submitter kept).
    pub fn submit(&mut self, scheme: &PkScheme, coins: &QuantumState) -> Result<usize> {
        let kappa = scheme.kappa();
        if coins.registers() == 0 || !coins.registers().is_multiple_of(kappa) {
            return Err(Error::RegisterMismatch {
                got: coins.registers(),
                expected: kappa,
            });
        }
        self.state = tensor(&self.state, coins, scheme.limit())?;
        let n = coins.registers() / kappa;
        self.received += n;
        Ok(n)
    }

    /// Run the verification measurement for the next submitted coin: the
    /// two-outcome symmetric-subspace measurement over the wallet coin and
    /// all coins received up to and including that one. The post-measurement
    /// state stays in the wallet even on reject; no register is returned.
    pub fn verify_one<R: Rng>(&mut self, scheme: &PkScheme, rng: &mut R) -> Result<bool> {
        if self.verified >= self.received {
            return Err(Error::RegisterMismatch {
                got: self.verified,
                expected: self.received,
            });
        }
        let kappa = scheme.kappa();
        let up_to = (1 + self.verified + 1) * kappa;
        let accept = if up_to == self.state.registers() {
            // full-register projection; exact when the state allows it
            let proj = project_sym(&self.state, up_to, scheme.limit(), scheme.tol())?;
            let accept = rng.gen::<f64>() < proj.probability;
            self.state = if accept {
                proj.accepted.ok_or(Error::DenseLimitExceeded {
                    dim: 0,
                    limit: scheme.limit(),
                })?
            } else {
                proj.rejected.ok_or(Error::DenseLimitExceeded {
                    dim: 0,
                    limit: scheme.limit(),
                })?
            };
            accept
        } else {
            let regs: Vec<usize> = (0..up_to).collect();
            let (accept, post) =
                measure_sym_registers(&self.state, &regs, scheme.limit(), scheme.tol(), rng)?;
            self.state = post;
            accept
        };
        self.verified += 1;
        if accept {
            self.accepted += 1;
        } else {
            self.rejected = true;
        }
        Ok(accept)
    }

    /// Receive and verify a single coin: append, then measure over the full
    /// combined wallet.
    pub fn verify_coin<R: Rng>(
        &mut self,
        scheme: &PkScheme,
        coin: &QuantumState,
        rng: &mut R,
    ) -> Result<bool> {
        if coin.registers() != scheme.kappa() {
            return Err(Error::RegisterMismatch {
                got: coin.registers(),
                expected: scheme.kappa(),
            });
        }
        self.submit(scheme, coin)?;
        self.verify_one(scheme, rng)
    }
}

/// Per-verifier record in a multiverifier game.
#[derive(Clone, Copy, Debug, Default)]
pub struct VerifierRecord {
    pub submitted: usize,
    pub accepted: usize,
}

/// Everything a security game records about one run; utilities and losses
/// are pure functions of this.
#[derive(Clone, Debug, Default)]
pub struct GameTranscript {
    /// Number of `mint` oracle calls (`n`).
    pub mint_calls: usize,
    pub count_pk_queries: usize,
    pub count_sk_queries: usize,
    /// Coins submitted across all public `Count` queries.
    pub public_submitted: usize,
    /// Sum of public `Count` outcomes (the `m` the utilities use).
    pub public_accepted: usize,
    /// Coins submitted to the bank.
    pub private_submitted: usize,
    /// Sum of bank `Count` outcomes (`m'`, also the refund total).
    pub private_accepted: usize,
    /// Set iff some public verification rejected.
    pub fail: bool,
    pub per_verifier: Vec<VerifierRecord>,
}

impl GameTranscript {
    /// More than one `Count` query of either kind makes the run adaptive.
    pub fn adaptive(&self) -> bool {
        self.count_pk_queries + self.count_sk_queries > 1
    }

    pub fn refunds(&self) -> usize {
        self.private_accepted
    }
}

/// Outcome of one `Count` transaction.
#[derive(Debug)]
pub struct CountOutcome {
    pub counter: usize,
    pub fail: bool,
    pub wallet: Wallet,
}

/// `Count`: initialize a fresh wallet and verify the submitted coins one by
/// one, counting accepts.
pub fn count_public<R: Rng>(
    scheme: &PkScheme,
    coins: &QuantumState,
    rng: &mut R,
) -> Result<CountOutcome> {
    let mut wallet = Wallet::init(scheme)?;
    let m = wallet.submit(scheme, coins)?;
    let mut counter = 0usize;
    for _ in 0..m {
        if wallet.verify_one(scheme, rng)? {
            counter += 1;
        }
    }
    Ok(CountOutcome {
        counter,
        fail: counter < m,
        wallet,
    })
}

/// Transaction-optimized `Count`: a single symmetric-subspace measurement
/// over all `(m+1) kappa` registers, which for the all-accept event is
/// equivalent to the sequential chain. Returns whether all coins passed.
pub fn count_public_single_shot<R: Rng>(
    scheme: &PkScheme,
    coins: &QuantumState,
    rng: &mut R,
) -> Result<(bool, Wallet)> {
    let mut wallet = Wallet::init(scheme)?;
    let m = wallet.submit(scheme, coins)?;
    let proj = project_sym(
        &wallet.state,
        wallet.state.registers(),
        scheme.limit(),
        scheme.tol(),
    )?;
    let accept = rng.gen::<f64>() < proj.probability;
    wallet.state = if accept {
        proj.accepted.ok_or(Error::DenseLimitExceeded {
            dim: 0,
            limit: scheme.limit(),
        })?
    } else {
        proj.rejected.ok_or(Error::DenseLimitExceeded {
            dim: 0,
            limit: scheme.limit(),
        })?
    };
    wallet.verified = m;
    if accept {
        wallet.accepted = m;
    } else {
        wallet.rejected = true;
    }
    Ok((accept, wallet))
}

/// All-accept probability of a transaction without sampling.
pub fn transaction_accept_probability(scheme: &PkScheme, coins: &QuantumState) -> Result<f64> {
    let mut wallet = Wallet::init(scheme)?;
    wallet.submit(scheme, coins)?;
    let proj = project_sym(
        &wallet.state,
        wallet.state.registers(),
        scheme.limit(),
        scheme.tol(),
    )?;
    Ok(proj.probability)
}

/// Bank verification of one alleged public coin: count the valid private
/// coins among its `kappa` registers, destroy it, and accept with
/// probability `k / kappa`, minting a fresh coin as the replacement.
pub fn verify_bank<R: Rng>(
    scheme: &PkScheme,
    coin: &QuantumState,
    rng: &mut R,
) -> Result<(bool, Option<QuantumState>)> {
    if coin.registers() != scheme.kappa() {
        return Err(Error::RegisterMismatch {
            got: coin.registers(),
            expected: scheme.kappa(),
        });
    }
    let (k, _) = scheme
        .private
        .count(coin, scheme.limit(), scheme.tol(), rng)?;
    let accept = rng.gen::<f64>() < k as f64 / scheme.kappa() as f64;
    if accept {
        Ok((true, Some(scheme.mint_public()?)))
    } else {
        Ok((false, None))
    }
}

/// Bank count over a joint state holding a whole number of alleged coins:
/// sequential `verify_bank` per `kappa`-register group.
pub fn count_bank<R: Rng>(scheme: &PkScheme, coins: &QuantumState, rng: &mut R) -> Result<usize> {
    let kappa = scheme.kappa();
    if !coins.registers().is_multiple_of(kappa) {
        return Err(Error::RegisterMismatch {
            got: coins.registers(),
            expected: kappa,
        });
    }
    let groups = coins.registers() / kappa;
    let mut state = coins.clone();
    let mut accepted = 0usize;
    for g in 0..groups {
        let regs: Vec<usize> = (g * kappa..(g + 1) * kappa).collect();
        let (k, post) =
            scheme
                .private
                .count_registers(&state, &regs, scheme.limit(), scheme.tol(), rng)?;
        state = post;
        if rng.gen::<f64>() < k as f64 / kappa as f64 {
            accepted += 1;
        }
    }
    Ok(accepted)
}
