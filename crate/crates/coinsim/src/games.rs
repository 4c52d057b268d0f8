//! Security-game harnesses: Monte-Carlo estimation of the adversary's
//! utility (forging) and the honest verifier's loss (sabotage) over seeded,
//! reproducible trials.
//!
//! Every harness is a deterministic function of (seed, adversary, scheme,
//! trial count): trial `t` draws from its own RNG stream derived from the
//! master seed, trials are collected in index order, and the statistics are
//! reduced sequentially.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::adversaries::{forge_state, AdversaryStrategy};
use crate::pkqc::{count_bank, GameTranscript, PkScheme, VerifierRecord};
use crate::symspace::{
    measure_out_registers, project_sym_registers, tensor, QuantumState, SymGroups,
};
use crate::{Error, Result};

/// Per-trial RNG stream: one master seed, one stream per trial index.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial.wrapping_add(1));
    rng
}

// ---------------------------------------------------------------------------
// Utilities and losses
// ---------------------------------------------------------------------------

/// The adversary's gain in an unforgeability game.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UtilityVariant {
    FlexAdapt,
    FlexNonadapt,
    AllOrNothingAdapt,
    AllOrNothingNonadapt,
    MultiverifierAllOrNothing,
    MultiverifierFlex,
}

impl UtilityVariant {
    pub fn label(self) -> &'static str {
        match self {
            UtilityVariant::FlexAdapt => "flexible-adaptive",
            UtilityVariant::FlexNonadapt => "flexible-nonadaptive",
            UtilityVariant::AllOrNothingAdapt => "all-or-nothing-adaptive",
            UtilityVariant::AllOrNothingNonadapt => "all-or-nothing-nonadaptive",
            UtilityVariant::MultiverifierAllOrNothing => "multiverifier-all-or-nothing",
            UtilityVariant::MultiverifierFlex => "multiverifier-flexible",
        }
    }
}

/// Pure function of the transcript. `m` below is the sum of public `Count`
/// outcomes, `m'` the sum of bank `Count` outcomes, `n` the mint calls.
pub fn compute_utility(t: &GameTranscript, variant: UtilityVariant) -> Result<f64> {
    let m = t.public_accepted as f64;
    let m_priv = t.private_accepted as f64;
    let n = t.mint_calls as f64;
    match variant {
        UtilityVariant::FlexAdapt => Ok(m + m_priv - n),
        UtilityVariant::FlexNonadapt => {
            if t.adaptive() {
                Err(Error::UndefinedUtility(
                    "flexible-nonadaptive utility",
                    "transcript is adaptive",
                ))
            } else {
                Ok(m + m_priv - n)
            }
        }
        UtilityVariant::AllOrNothingAdapt => {
            if t.fail {
                Ok(-n)
            } else {
                Ok(m + m_priv - n)
            }
        }
        UtilityVariant::AllOrNothingNonadapt => {
            if t.adaptive() {
                Err(Error::UndefinedUtility(
                    "all-or-nothing nonadaptive utility",
                    "transcript is adaptive",
                ))
            } else if t.fail {
                Ok(-n)
            } else {
                Ok(m + m_priv - n)
            }
        }
        UtilityVariant::MultiverifierAllOrNothing => {
            let per: f64 = t
                .per_verifier
                .iter()
                .map(|v| {
                    if v.accepted == v.submitted {
                        v.submitted as f64
                    } else {
                        0.0
                    }
                })
                .sum();
            Ok(per + m_priv - n)
        }
        UtilityVariant::MultiverifierFlex => {
            let per: f64 = t.per_verifier.iter().map(|v| v.accepted as f64).sum();
            Ok(per + m_priv - n)
        }
    }
}

/// The honest side's loss in a sabotage game.
#[derive(Clone, Debug)]
pub enum LossVariant {
    PrivateSabotage,
    PublicSabotage { chunks: Vec<usize> },
    MultiverifierPrivateSabotage { k: usize },
}

// ---------------------------------------------------------------------------
// Sample statistics
// ---------------------------------------------------------------------------

/// Mean with a normal-approximation confidence interval (3 sigma half-width).
#[derive(Clone, Debug)]
pub struct GameStats {
    pub samples: Vec<f64>,
    pub mean: f64,
    pub std_err: f64,
    /// 3 sigma half-width of the mean.
    pub ci: f64,
    pub trials: usize,
}

impl GameStats {
    pub fn from_samples(samples: Vec<f64>) -> GameStats {
        let trials = samples.len();
        let mean = samples.iter().sum::<f64>() / trials as f64;
        let var = if trials > 1 {
            samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (trials - 1) as f64
        } else {
            0.0
        };
        let std_err = (var / trials as f64).sqrt();
        GameStats {
            samples,
            mean,
            std_err,
            ci: 3.0 * std_err,
            trials,
        }
    }
}

fn run_trials<F>(trials: usize, seed: u64, f: F) -> Result<GameStats>
where
    F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync,
{
    let samples: Result<Vec<f64>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            f(&mut rng)
        })
        .collect();
    Ok(GameStats::from_samples(samples?))
}

// ---------------------------------------------------------------------------
// Transaction outcome chains
// ---------------------------------------------------------------------------

/// Precomputed law of one `Count` transaction against a fresh wallet.
///
/// Verifying coin `i` projects onto the symmetric subspace of the wallet
/// plus coins `1..=i`; once a verification rejects, every later one rejects
/// with certainty, so the outcome space is "all accept" plus "first failure
/// at step i". The chain is walked once and the per-outcome post-measurement
/// wallet states are kept for refund and re-spend simulation.
pub struct TransactionChain {
    pub m: usize,
    pub p_all: f64,
    pub fail_probs: Vec<f64>,
    accept_state: Option<QuantumState>,
    fail_states: Vec<Option<QuantumState>>,
}

/// One sampled transaction outcome.
#[derive(Clone, Copy, Debug)]
pub struct TransactionOutcome {
    pub counter: usize,
    pub all_accept: bool,
    /// 1-based first failing verification, if any.
    pub first_fail: Option<usize>,
}

impl TransactionChain {
    pub fn build(scheme: &PkScheme, coins: &QuantumState, want_states: bool) -> Result<Self> {
        let kappa = scheme.kappa();
        if !coins.registers().is_multiple_of(kappa) || coins.registers() == 0 {
            return Err(Error::RegisterMismatch {
                got: coins.registers(),
                expected: kappa,
            });
        }
        let m = coins.registers() / kappa;
        let mut state = tensor(&scheme.mint_public()?, coins, scheme.limit())?;
        let mut prefix = 1.0f64;
        let mut fail_probs = Vec::with_capacity(m);
        let mut fail_states = Vec::with_capacity(m);
        for i in 1..=m {
            let regs: Vec<usize> = (0..(1 + i) * kappa).collect();
            let proj = project_sym_registers(&state, &regs, scheme.limit(), scheme.tol())?;
            fail_probs.push(prefix * (1.0 - proj.probability));
            fail_states.push(if want_states { proj.rejected } else { None });
            prefix *= proj.probability;
            match proj.accepted {
                Some(next) => state = next,
                None => {
                    // dead branch: every later step inherits probability zero
                    for _ in i + 1..=m {
                        fail_probs.push(0.0);
                        fail_states.push(None);
                    }
                    prefix = 0.0;
                    break;
                }
            }
        }
        Ok(TransactionChain {
            m,
            p_all: prefix,
            fail_probs,
            accept_state: if want_states && prefix > 0.0 {
                Some(state)
            } else {
                None
            },
            fail_states,
        })
    }

    /// Draw one outcome; the all-accept event occupies the first segment of
    /// the unit interval so a single uniform draw doubles as the Bernoulli
    /// all-accept indicator.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> TransactionOutcome {
        let mut u = rng.gen::<f64>();
        if u < self.p_all {
            return TransactionOutcome {
                counter: self.m,
                all_accept: true,
                first_fail: None,
            };
        }
        u -= self.p_all;
        for (i, &q) in self.fail_probs.iter().enumerate() {
            if u < q {
                return TransactionOutcome {
                    counter: i,
                    all_accept: false,
                    first_fail: Some(i + 1),
                };
            }
            u -= q;
        }
        // float slack lands on the last nonzero outcome
        let last = self
            .fail_probs
            .iter()
            .rposition(|&q| q > 0.0)
            .expect("some outcome has positive probability");
        TransactionOutcome {
            counter: last,
            all_accept: false,
            first_fail: Some(last + 1),
        }
    }

    /// Post-measurement wallet state for an outcome (requires `want_states`).
    pub fn post_state(&self, outcome: &TransactionOutcome) -> Option<&QuantumState> {
        match outcome.first_fail {
            None => self.accept_state.as_ref(),
            Some(i) => self.fail_states[i - 1].as_ref(),
        }
    }
}

// ---------------------------------------------------------------------------
// Unforgeability
// ---------------------------------------------------------------------------

fn transcript_from_outcome(
    mint_calls: usize,
    m: usize,
    outcome: &TransactionOutcome,
) -> GameTranscript {
    GameTranscript {
        mint_calls,
        count_pk_queries: 1,
        public_submitted: m,
        public_accepted: outcome.counter,
        fail: !outcome.all_accept,
        ..Default::default()
    }
}

/// Single-verifier unforgeability game for a nonadaptive strategy.
pub fn run_unforgeability(
    adversary: &AdversaryStrategy,
    scheme: &PkScheme,
    utility: UtilityVariant,
    trials: usize,
    seed: u64,
) -> Result<GameStats> {
    let (mint_calls, coins) = adversary.submission(scheme)?;
    let chain = TransactionChain::build(scheme, &coins, false)?;
    run_trials(trials, seed, |rng| {
        let outcome = chain.sample(rng);
        let t = transcript_from_outcome(mint_calls, chain.m, &outcome);
        compute_utility(&t, utility)
    })
}

/// Exact all-accept probability of the adversary's single transaction.
pub fn all_accept_probability(adversary: &AdversaryStrategy, scheme: &PkScheme) -> Result<f64> {
    let (_, coins) = adversary.submission(scheme)?;
    Ok(TransactionChain::build(scheme, &coins, false)?.p_all)
}

/// Empirical all-accept frequency of the adversary's single transaction.
pub fn run_all_accept_frequency(
    adversary: &AdversaryStrategy,
    scheme: &PkScheme,
    trials: usize,
    seed: u64,
) -> Result<GameStats> {
    let (_, coins) = adversary.submission(scheme)?;
    let chain = TransactionChain::build(scheme, &coins, false)?;
    run_trials(trials, seed, |rng| {
        Ok(if chain.sample(rng).all_accept { 1.0 } else { 0.0 })
    })
}

// ---------------------------------------------------------------------------
// Adaptive refund attack
// ---------------------------------------------------------------------------

/// The adaptive strategy that breaks flexible-adaptive unforgeability: forge
/// `n+1` alleged coins from `n` minted ones, hand them to the verifier one
/// by one (the verifier's wallet persists and keeps every register), stop at
/// the first rejection, and send all unsubmitted coins to the bank for a
/// refund. On the all-accept branch the adversary banks exactly one coin;
/// a failure at coin `i` costs that coin plus whatever of the refund the
/// bank's count denies.
pub struct AdaptiveRefundRunner<'a> {
    scheme: &'a PkScheme,
    n: usize,
    m: usize,
    /// `|cent> (x) forged`, the wallet and all alleged coins.
    initial: QuantumState,
    /// Step `i` measures the symmetrizer over the wallet plus coins `1..=i`.
    step_groups: Vec<SymGroups>,
}

impl<'a> AdaptiveRefundRunner<'a> {
    pub fn new(n: usize, scheme: &'a PkScheme) -> Result<Self> {
        if n == 0 {
            return Err(Error::AttackParams { n, m: n + 1 });
        }
        let m = n + 1;
        let kappa = scheme.kappa();
        let d = scheme.params.d;
        let forged = forge_state(n, m, scheme)?;
        let initial = tensor(&scheme.mint_public()?, &forged, scheme.limit())?
            .to_dense(scheme.limit())?;
        let n_regs = initial.registers();
        let mut step_groups = Vec::with_capacity(m);
        for i in 1..=m {
            let regs: Vec<usize> = (0..(1 + i) * kappa).collect();
            step_groups.push(SymGroups::new(n_regs, d, &regs, scheme.limit())?);
        }
        Ok(AdaptiveRefundRunner {
            scheme,
            n,
            m,
            initial,
            step_groups,
        })
    }

    pub fn run_trial<R: Rng>(&self, rng: &mut R) -> Result<GameTranscript> {
        let scheme = self.scheme;
        let kappa = scheme.kappa();
        let mut amps = self.initial.dense_amplitudes(scheme.limit())?;
        let mut t = GameTranscript {
            mint_calls: self.n,
            ..Default::default()
        };
        let mut submitted = 0usize;
        for groups in &self.step_groups {
            let (accept, post) = groups.measure(&amps, scheme.tol(), rng);
            amps = post;
            t.count_pk_queries += 1;
            t.public_submitted += 1;
            submitted += 1;
            if accept {
                t.public_accepted += 1;
            } else {
                t.fail = true;
                break;
            }
        }
        let unsubmitted = self.m - submitted;
        if unsubmitted > 0 {
            // the unsubmitted coins occupy the trailing registers; the
            // verifier keeps everything in front of them
            let n_regs = self.initial.registers();
            let state = QuantumState::from_dense(amps, n_regs, scheme.params.d)?;
            let keep_from = (1 + submitted) * kappa;
            let handed: Vec<usize> = (0..keep_from).collect();
            let (_, rest) = measure_out_registers(&state, &handed, scheme.limit(), rng)?;
            t.count_sk_queries = 1;
            t.private_submitted = unsubmitted;
            t.private_accepted = count_bank(scheme, &rest, rng)?;
        }
        Ok(t)
    }
}

/// Unforgeability game driven by the adaptive refund strategy.
pub fn run_adaptive_refund(
    n: usize,
    scheme: &PkScheme,
    utility: UtilityVariant,
    trials: usize,
    seed: u64,
) -> Result<GameStats> {
    let runner = AdaptiveRefundRunner::new(n, scheme)?;
    run_trials(trials, seed, |rng| {
        let t = runner.run_trial(rng)?;
        compute_utility(&t, utility)
    })
}

// ---------------------------------------------------------------------------
// Sabotage games
// ---------------------------------------------------------------------------

/// Private sabotage: the verifier accepts the adversary's coins into a
/// fresh one-coin wallet, then refunds the whole wallet at the bank. The
/// loss is `m + 1 - refund` when every coin was accepted, `1 - refund`
/// otherwise; the post-measurement wallet is refunded in both branches.
pub fn run_private_sabotage(
    adversary: &AdversaryStrategy,
    scheme: &PkScheme,
    trials: usize,
    seed: u64,
) -> Result<GameStats> {
    let (_, coins) = adversary.submission(scheme)?;
    let chain = TransactionChain::build(scheme, &coins, true)?;
    run_trials(trials, seed, |rng| {
        Ok(private_sabotage_loss(scheme, &chain, rng)?.0)
    })
}

fn private_sabotage_loss<R: Rng>(
    scheme: &PkScheme,
    chain: &TransactionChain,
    rng: &mut R,
) -> Result<(f64, VerifierRecord)> {
    let outcome = chain.sample(rng);
    let wallet_state = chain
        .post_state(&outcome)
        .expect("sabotage chains keep post states");
    let refund = count_bank(scheme, wallet_state, rng)? as f64;
    let record = VerifierRecord {
        submitted: chain.m,
        accepted: outcome.counter,
    };
    let loss = if outcome.all_accept {
        chain.m as f64 + 1.0 - refund
    } else {
        1.0 - refund
    };
    Ok((loss, record))
}

/// Public sabotage: if all `m` received coins pass, the `(m+1)`-coin wallet
/// is split lexicographically into chunks and each chunk is spent against a
/// fresh honest verifier in one all-or-nothing transaction; otherwise the
/// wallet goes back to the bank.
pub fn run_public_sabotage(
    adversary: &AdversaryStrategy,
    scheme: &PkScheme,
    chunks: &[usize],
    trials: usize,
    seed: u64,
) -> Result<GameStats> {
    let (_, coins) = adversary.submission(scheme)?;
    let kappa = scheme.kappa();
    let m = coins.registers() / kappa;
    let total: usize = chunks.iter().sum();
    if total != m + 1 {
        return Err(Error::ChunkSumMismatch {
            chunks: chunks.to_vec(),
            got: total,
            expected: m + 1,
        });
    }
    let chain = TransactionChain::build(scheme, &coins, true)?;
    run_trials(trials, seed, |rng| {
        let outcome = chain.sample(rng);
        if !outcome.all_accept {
            let refund = count_bank(scheme, chain.post_state(&outcome).unwrap(), rng)? as f64;
            return Ok(1.0 - refund);
        }
        // spend the verified wallet chunk by chunk
        let mut state = chain.post_state(&outcome).unwrap().clone();
        let mut accepted_total = 0usize;
        let mut group_start = 0usize;
        for &n_i in chunks {
            let fresh = scheme.mint_public()?;
            state = tensor(&state, &fresh, scheme.limit())?;
            let n_regs = state.registers();
            let regs: Vec<usize> = (group_start * kappa..(group_start + n_i) * kappa)
                .chain(n_regs - kappa..n_regs)
                .collect();
            let (accept, post) = crate::symspace::measure_sym_registers(
                &state,
                &regs,
                scheme.limit(),
                scheme.tol(),
                rng,
            )?;
            state = post;
            if accept {
                accepted_total += n_i;
            }
            group_start += n_i;
        }
        Ok(1.0 + m as f64 - accepted_total as f64)
    })
}

// ---------------------------------------------------------------------------
// Multiverifier games
// ---------------------------------------------------------------------------

/// Multiverifier nonadaptive unforgeability: one fresh-wallet verifier per
/// strategy, the all-or-nothing (or flexible) multiverifier utility over the
/// combined transcript.
pub fn run_multiverifier_unforgeability(
    per_verifier: &[AdversaryStrategy],
    scheme: &PkScheme,
    utility: UtilityVariant,
    trials: usize,
    seed: u64,
) -> Result<GameStats> {
    let mut chains = Vec::new();
    let mut mint_calls = 0usize;
    for adv in per_verifier {
        let (n_i, coins) = adv.submission(scheme)?;
        mint_calls += n_i;
        chains.push(TransactionChain::build(scheme, &coins, false)?);
    }
    run_trials(trials, seed, |rng| {
        let mut t = GameTranscript {
            mint_calls,
            count_pk_queries: chains.len(),
            ..Default::default()
        };
        for chain in &chains {
            let outcome = chain.sample(rng);
            t.public_submitted += chain.m;
            t.public_accepted += outcome.counter;
            if !outcome.all_accept {
                t.fail = true;
            }
            t.per_verifier.push(VerifierRecord {
                submitted: chain.m,
                accepted: outcome.counter,
            });
        }
        compute_utility(&t, utility)
    })
}

/// Multiverifier private sabotage: the combined loss over `k` independently
/// initialized verifiers, each refunding its wallet at the bank. Refund
/// values are never revealed to the adversary mid-game.
pub fn run_multiverifier_private_sabotage(
    per_verifier: &[AdversaryStrategy],
    scheme: &PkScheme,
    trials: usize,
    seed: u64,
) -> Result<GameStats> {
    let mut chains = Vec::new();
    for adv in per_verifier {
        let (_, coins) = adv.submission(scheme)?;
        chains.push(TransactionChain::build(scheme, &coins, true)?);
    }
    run_trials(trials, seed, |rng| {
        let mut total = 0.0;
        for chain in &chains {
            total += private_sabotage_loss(scheme, chain, rng)?.0;
        }
        Ok(total)
    })
}

/// The reduction from the multiverifier sabotage game to the single-verifier
/// one: pick one target verifier uniformly at random, simulate the other
/// `k - 1` verifications locally with freshly minted comparison coins, and
/// forward only the chosen submission. Its expected loss is `1/k` times the
/// multiverifier loss.
pub fn run_wrapped_single_sabotage(
    per_verifier: &[AdversaryStrategy],
    scheme: &PkScheme,
    trials: usize,
    seed: u64,
) -> Result<GameStats> {
    let mut chains = Vec::new();
    for adv in per_verifier {
        let (_, coins) = adv.submission(scheme)?;
        chains.push(TransactionChain::build(scheme, &coins, true)?);
    }
    let k = chains.len();
    run_trials(trials, seed, |rng| {
        // k = 1 degenerates to the plain single-verifier game, draw for draw
        let target = if k == 1 { 0 } else { rng.gen_range(0..k) };
        let mut loss = 0.0;
        for (j, chain) in chains.iter().enumerate() {
            if j == target {
                loss = private_sabotage_loss(scheme, chain, rng)?.0;
            } else {
                // local simulation of an honest verifier on a minted coin;
                // the outcome is observed but nothing is forwarded
                let _ = chain.sample(rng);
            }
        }
        Ok(loss)
    })
}
