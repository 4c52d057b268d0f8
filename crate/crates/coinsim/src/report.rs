//! Experiment configuration, machine-readable claim records, and the batch
//! commands behind the CLI. Identical config and seed always produce
//! byte-identical output files: every sub-experiment derives its RNG seed
//! from the master seed and its claim id, records are sorted by claim id,
//! and statistics are reduced in trial order.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::adversaries::AdversaryStrategy;
use crate::analysis;
use crate::games::{self, GameStats, UtilityVariant};
use crate::pkqc::PkScheme;
use crate::symspace::{ratio_to_f64, MultinomialRatio, DEFAULT_DENSE_LIMIT};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// One run's knobs; a TOML file plus flag overrides fully determine the
/// output.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub d: usize,
    pub trials: usize,
    pub seed: u64,
    pub dense_limit: usize,
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
    /// Cap on `(m+1) * kappa` for the attack and unforgeability grids.
    pub attack_max_registers: usize,
    /// Cap on `(m+1) * kappa` for the structural-lemma suite, whose
    /// eigendecompositions grow much faster with the register count.
    pub lemma_max_registers: usize,
    /// Highest kappa in the single-coin bound sweep.
    pub bound_kappa_max: usize,
    /// Kappa for the exact public-sabotage sign sweep.
    pub sabotage_kappa: usize,
    /// Largest m in the public-sabotage sign sweep.
    pub sabotage_m_max: usize,
    /// Verifier counts for the multiverifier reduction checks.
    pub multiverifier_k: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            d: 2,
            trials: 10_000,
            seed: 42,
            dense_limit: DEFAULT_DENSE_LIMIT,
            format: OutputFormat::Csv,
            out: None,
            attack_max_registers: 12,
            lemma_max_registers: 10,
            bound_kappa_max: 6,
            sabotage_kappa: 4,
            sabotage_m_max: 10,
            multiverifier_k: vec![2, 3],
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::Config("d must be at least 2".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be positive".into()));
        }
        if self.attack_max_registers < 2 {
            return Err(Error::Config("attack_max_registers must be at least 2".into()));
        }
        Ok(())
    }
}

/// One verified claim: the exact value, the empirical estimate with its
/// confidence half-width, and the verdict.
#[derive(Clone, Debug, Serialize)]
pub struct ClaimRecord {
    pub claim_id: String,
    pub anchor: String,
    pub exact_value: String,
    pub empirical_value: Option<f64>,
    pub ci: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    NotAsserted,
}

impl ClaimRecord {
    fn exact(claim_id: String, anchor: &str, value: &BigRational, ok: bool) -> ClaimRecord {
        ClaimRecord {
            claim_id,
            anchor: anchor.to_string(),
            exact_value: format_ratio(value),
            empirical_value: None,
            ci: None,
            verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        }
    }

    fn empirical(
        claim_id: String,
        anchor: &str,
        exact: Option<&BigRational>,
        stats: &GameStats,
        ok: bool,
    ) -> ClaimRecord {
        ClaimRecord {
            claim_id,
            anchor: anchor.to_string(),
            exact_value: exact.map(format_ratio).unwrap_or_default(),
            empirical_value: Some(stats.mean),
            ci: Some(stats.ci),
            verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        }
    }
}

pub fn format_ratio(r: &MultinomialRatio) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Deterministic per-claim RNG seed (FNV-1a over the claim id).
pub fn claim_seed(base: u64, claim_id: &str) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in claim_id.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    base ^ h
}

pub fn any_failed(records: &[ClaimRecord]) -> bool {
    records.iter().any(|r| r.verdict == Verdict::Fail)
}

/// Serialize records (sorted by claim id) as RFC-4180 CSV or a JSON array.
pub fn render_records(records: &[ClaimRecord], format: OutputFormat) -> Result<String> {
    let mut sorted: Vec<&ClaimRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.claim_id.cmp(&b.claim_id));
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["claim_id", "anchor", "exact_value", "empirical_value", "ci", "verdict"])
                .map_err(|e| Error::Config(e.to_string()))?;
            for r in sorted {
                let verdict = match r.verdict {
                    Verdict::Pass => "pass",
                    Verdict::Fail => "fail",
                    Verdict::NotAsserted => "not-asserted",
                };
                w.write_record([
                    r.claim_id.as_str(),
                    r.anchor.as_str(),
                    r.exact_value.as_str(),
                    &r.empirical_value.map(|v| v.to_string()).unwrap_or_default(),
                    &r.ci.map(|v| v.to_string()).unwrap_or_default(),
                    verdict,
                ])
                .map_err(|e| Error::Config(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        OutputFormat::Json => {
            let owned: Vec<&ClaimRecord> = sorted;
            let mut text = serde_json::to_string_pretty(&owned)
                .map_err(|e| Error::Config(e.to_string()))?;
            text.push('\n');
            Ok(text)
        }
    }
}

pub fn write_records(
    records: &[ClaimRecord],
    format: OutputFormat,
    out: Option<&Path>,
) -> Result<()> {
    let text = render_records(records, format)?;
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn attack_grid(config: &ExperimentConfig) -> Vec<(usize, usize, usize)> {
    // every (n, m, kappa) with m > n and (m+1) kappa within the register cap
    let mut grid = Vec::new();
    for kappa in 1.. {
        if 2 * kappa > config.attack_max_registers {
            break;
        }
        for m in 1.. {
            if (m + 1) * kappa > config.attack_max_registers {
                break;
            }
            for n in 0..m {
                grid.push((n, m, kappa));
            }
        }
    }
    grid
}

/// Sweep of the forged-transaction success probability: exact value,
/// Monte-Carlo estimate, and the single-coin decay bound.
pub fn cmd_attack_table(config: &ExperimentConfig) -> Result<Vec<ClaimRecord>> {
    config.validate()?;
    let mut records = Vec::new();
    for (n, m, kappa) in attack_grid(config) {
        let claim_id = format!("attack/success-n{n}-m{m}-k{kappa}");
        let exact = analysis::attack_success_prob(n, m, kappa)?;
        let exact_f = ratio_to_f64(&exact);
        let scheme = PkScheme::new(
            crate::pkqc::SchemeParams {
                d: config.d,
                kappa,
                dense_limit: config.dense_limit,
                tolerance: 1e-10,
                seed: config.seed,
            },
            crate::privcoin::MintMode::CanonicalBasis,
        )?;
        let adv = AdversaryStrategy::Alg2Forger { n, m };
        let dense = games::all_accept_probability(&adv, &scheme)?;
        let stats = games::run_all_accept_frequency(
            &adv,
            &scheme,
            config.trials,
            claim_seed(config.seed, &claim_id),
        )?;
        let sigma3 = 3.0 * (exact_f * (1.0 - exact_f) / config.trials as f64).sqrt();
        let ok = (dense - exact_f).abs() < 1e-10 && (stats.mean - exact_f).abs() <= sigma3.max(1e-9);
        records.push(ClaimRecord::empirical(
            claim_id,
            "all-accept probability of the forged transaction",
            Some(&exact),
            &stats,
            ok,
        ));
    }
    // single minted coin: success decays at least as fast as (2/3)^kappa
    for kappa in 1..=config.bound_kappa_max {
        let claim_id = format!("attack/single-coin-bound-k{kappa}");
        let p = analysis::attack_success_prob(1, 2, kappa)?;
        let bound = BigRational::new(2.into(), 3.into()).pow(kappa as i32);
        records.push(ClaimRecord::exact(
            claim_id,
            "success probability from one coin vs (2/3)^kappa",
            &p,
            p <= bound,
        ));
    }
    Ok(records)
}

/// The simulable cells of the security matrix: demonstrated breaks, bound
/// satisfaction sweeps, and the cells left open.
pub fn cmd_security_tables(config: &ExperimentConfig) -> Result<Vec<ClaimRecord>> {
    config.validate()?;
    let mut records = Vec::new();

    // all-or-nothing nonadaptive rational unforgeability: mean utility of
    // the forger stays below 1/(m+1)^{kappa-1}
    for (n, m, kappa) in attack_grid(config) {
        if n == 0 {
            continue;
        }
        let claim_id = format!("unforgeability/all-or-nothing-nonadaptive-n{n}-m{m}-k{kappa}");
        let scheme = scheme_for(config, kappa)?;
        let adv = AdversaryStrategy::Alg2Forger { n, m };
        let bound = analysis::expected_utility_bound(n, m, kappa)?;
        let stats = games::run_unforgeability(
            &adv,
            &scheme,
            UtilityVariant::AllOrNothingNonadapt,
            config.trials,
            claim_seed(config.seed, &claim_id),
        )?;
        let ok = stats.mean <= ratio_to_f64(&bound.chained) + stats.ci
            && (stats.mean - ratio_to_f64(&bound.tight)).abs() <= stats.ci.max(1e-9);
        records.push(ClaimRecord::empirical(
            claim_id,
            "mean all-or-nothing utility vs 1/(m+1)^(kappa-1)",
            Some(&bound.tight),
            &stats,
            ok,
        ));
    }

    // flexible adaptive: the refund strategy achieves positive utility
    {
        let kappa = 2usize;
        let n = kappa * kappa;
        let claim_id = format!("unforgeability/flexible-adaptive-break-n{n}-k{kappa}");
        let scheme = scheme_for(config, kappa)?;
        let stats = games::run_adaptive_refund(
            n,
            &scheme,
            UtilityVariant::FlexAdapt,
            config.trials,
            claim_seed(config.seed, &claim_id),
        )?;
        let ok = stats.mean > stats.ci;
        records.push(ClaimRecord::empirical(
            claim_id,
            "adaptive refund strategy: mean flexible utility > 0",
            None,
            &stats,
            ok,
        ));
    }

    // flexible nonadaptive rational unforgeability is open
    records.push(ClaimRecord {
        claim_id: "unforgeability/flexible-nonadaptive".into(),
        anchor: "no bound asserted for this cell".into(),
        exact_value: String::new(),
        empirical_value: None,
        ci: None,
        verdict: Verdict::NotAsserted,
    });

    // private sabotage: every implemented adversary's mean loss stays below
    // the spectral maximum, which itself stays below 1/2^(kappa-1)
    for kappa in [1usize, 2] {
        let scheme = scheme_for(config, kappa)?;
        let adversaries: Vec<(String, AdversaryStrategy)> = vec![
            ("honest".into(), AdversaryStrategy::Honest { coins: 2 }),
            ("forger".into(), AdversaryStrategy::Alg2Forger { n: 1, m: 2 }),
            (
                "orthogonal".into(),
                AdversaryStrategy::OrthogonalSubmitter { coins: 1 },
            ),
        ];
        for (name, adv) in adversaries {
            let m = adv.submitted_coins();
            let claim_id = format!("sabotage/private-loss-{name}-k{kappa}");
            let (_, spectral_max) = analysis::private_sabotage_max(m, kappa);
            let stats = games::run_private_sabotage(
                &adv,
                &scheme,
                config.trials,
                claim_seed(config.seed, &claim_id),
            )?;
            let ok = stats.mean <= ratio_to_f64(&spectral_max) + stats.ci.max(1e-9);
            records.push(ClaimRecord::empirical(
                claim_id,
                "mean refund loss vs spectral maximum",
                Some(&spectral_max),
                &stats,
                ok,
            ));
        }
    }
    for m in 1..=4usize {
        for kappa in 1..=4usize {
            let claim_id = format!("sabotage/private-spectral-max-m{m}-k{kappa}");
            let (_, spectral_max) = analysis::private_sabotage_max(m, kappa);
            let bound = BigRational::new(1.into(), num_bigint::BigInt::from(1u64 << (kappa - 1)));
            records.push(ClaimRecord::exact(
                claim_id,
                "spectral loss maximum vs 1/2^(kappa-1)",
                &spectral_max,
                spectral_max <= bound,
            ));
        }
    }

    // public sabotage: exact sign sweep plus the paired chunk comparison
    {
        let kappa = config.sabotage_kappa;
        let mut worst: Option<BigRational> = None;
        for m in 1..=config.sabotage_m_max {
            for j0 in kappa / 2..m * kappa {
                let term = analysis::public_sabotage_loss_term(j0, m, kappa);
                if worst.as_ref().is_none_or(|w| &term > w) {
                    worst = Some(term);
                }
            }
        }
        let worst = worst.expect("sweep range is nonempty");
        let all_negative = worst < BigRational::zero();
        records.push(ClaimRecord::exact(
            format!("sabotage/public-sign-sweep-k{kappa}"),
            "largest loss term on the bulk range (must be negative)",
            &worst,
            all_negative,
        ));
        let edge = analysis::public_sabotage_loss_term(config.sabotage_m_max * kappa, config.sabotage_m_max, kappa);
        records.push(ClaimRecord::exact(
            format!("sabotage/public-edge-zero-k{kappa}"),
            "loss term vanishes at the all-valid type",
            &edge,
            edge.is_zero(),
        ));
    }
    {
        // paired simulation: chunked re-spend loses no more than one shot
        let kappa = 2usize;
        let m = 2usize;
        let scheme = scheme_for(config, kappa)?;
        let adv = AdversaryStrategy::Alg2Forger { n: 1, m };
        let claim_id = "sabotage/public-chunk-comparison".to_string();
        let seed = claim_seed(config.seed, &claim_id);
        let single = games::run_public_sabotage(&adv, &scheme, &[m + 1], config.trials, seed)?;
        let chunked = games::run_public_sabotage(&adv, &scheme, &[2, 1], config.trials, seed)?;
        let ok = chunked.mean <= single.mean + 3.0 * (chunked.std_err + single.std_err);
        records.push(ClaimRecord::empirical(
            claim_id,
            "chunked loss vs single-transaction loss (paired seed)",
            None,
            &chunked,
            ok,
        ));
    }

    // multiverifier reduction: wrapped single-verifier loss times k matches
    // the combined multiverifier loss
    for &k in &config.multiverifier_k {
        let kappa = 1usize;
        let scheme = scheme_for(config, kappa)?;
        let advs: Vec<AdversaryStrategy> = (0..k)
            .map(|_| AdversaryStrategy::Alg2Forger { n: 1, m: 2 })
            .collect();
        let claim_id = format!("multiverifier/reduction-k{k}");
        let seed = claim_seed(config.seed, &claim_id);
        let multi = games::run_multiverifier_private_sabotage(&advs, &scheme, config.trials, seed)?;
        let wrapped = games::run_wrapped_single_sabotage(&advs, &scheme, config.trials, seed ^ 1)?;
        let diff = (wrapped.mean * k as f64 - multi.mean).abs();
        let ok = diff <= 3.0 * (k as f64 * wrapped.std_err + multi.std_err);
        records.push(ClaimRecord::empirical(
            claim_id,
            "wrapped single-verifier loss times k vs multiverifier loss",
            None,
            &wrapped,
            ok,
        ));
    }

    Ok(records)
}

/// Structural-lemma residuals and spectral comparisons across the grid.
pub fn cmd_lemma_suite(config: &ExperimentConfig) -> Result<Vec<ClaimRecord>> {
    config.validate()?;
    let mut records = Vec::new();
    for kappa in 1.. {
        if 2 * kappa > config.lemma_max_registers {
            break;
        }
        for m in 2.. {
            if (m + 1) * kappa > config.lemma_max_registers {
                break;
            }
            for n in 0..m {
                let report =
                    analysis::verify_structural_lemmas(m, n, kappa, config.d, config.dense_limit)?;
                let claim_id = format!("lemmas/residuals-m{m}-n{n}-k{kappa}");
                let mut anchor = String::new();
                write!(
                    anchor,
                    "max residual over commutators and cross terms = {:.3e}",
                    report
                        .good_sym_commutator
                        .max(report.bad_sym_good_residual)
                        .max(report.counter_sym_commutator)
                )
                .ok();
                records.push(ClaimRecord {
                    claim_id,
                    anchor,
                    exact_value: String::new(),
                    empirical_value: None,
                    ci: None,
                    verdict: if report.residuals_ok(1e-12) {
                        Verdict::Pass
                    } else {
                        Verdict::Fail
                    },
                });
                let claim_id = format!("lemmas/spectrum-m{m}-n{n}-k{kappa}");
                records.push(ClaimRecord {
                    claim_id,
                    anchor: "dense spectrum vs eigenvalue family".into(),
                    exact_value: report
                        .formula_values
                        .first()
                        .map(format_ratio)
                        .unwrap_or_default(),
                    empirical_value: Some(report.lambda_max_dense),
                    ci: None,
                    verdict: if report.max_abs_deviation < 1e-10 {
                        Verdict::Pass
                    } else {
                        Verdict::Fail
                    },
                });
            }
        }
    }
    Ok(records)
}

fn scheme_for(config: &ExperimentConfig, kappa: usize) -> Result<PkScheme> {
    PkScheme::new(
        crate::pkqc::SchemeParams {
            d: config.d,
            kappa,
            dense_limit: config.dense_limit,
            tolerance: 1e-10,
            seed: config.seed,
        },
        crate::privcoin::MintMode::CanonicalBasis,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_roundtrip_and_validation() {
        let cfg = ExperimentConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.trials, cfg.trials);
        let bad = ExperimentConfig {
            d: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn rendering_is_sorted_and_stable() {
        let records = vec![
            ClaimRecord {
                claim_id: "b".into(),
                anchor: "second".into(),
                exact_value: "1/2".into(),
                empirical_value: Some(0.5),
                ci: Some(0.01),
                verdict: Verdict::Pass,
            },
            ClaimRecord {
                claim_id: "a".into(),
                anchor: "first".into(),
                exact_value: String::new(),
                empirical_value: None,
                ci: None,
                verdict: Verdict::NotAsserted,
            },
        ];
        let csv = render_records(&records, OutputFormat::Csv).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[1].starts_with("a,"));
        assert!(lines[2].starts_with("b,"));
        assert_eq!(
            csv,
            render_records(&records, OutputFormat::Csv).unwrap()
        );
        let json = render_records(&records, OutputFormat::Json).unwrap();
        assert!(json.trim_start().starts_with('['));
    }
}
