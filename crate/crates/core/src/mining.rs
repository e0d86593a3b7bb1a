//! Rule discovery in two phases.
//!
//! Filtering fits one single-predicate rule per covariate type and keeps the
//! types whose rule lowers held-out NLL against a rule-free baseline. The
//! kept types seed an enumeration of candidate rules. A subset search then
//! looks for the fixed-size subset of candidates with the best held-out
//! log-likelihood: subsets are sampled from per-candidate inclusion
//! probabilities, fitted, and the probabilities pulled toward the candidates
//! that appear in the best evaluations so far.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsl::{print_rule, print_weighted_rule, NameTable};
use crate::error::{Error, Result};
use crate::model::{EventSequence, MaskPolicy, ModelParams, Relation, Rule, RuleBody, RuleSet};
use crate::training::{check_corpus, fit, optimize, CorpusDesign, FitConfig, FittedModel, ModelOptions};

pub const REPORT_VERSION: u32 = 1;

/// Mining settings (`[mining]` in the run configuration).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiningConfig {
    /// Rules in the mined set. Default 10.
    pub subset_size: usize,
    /// Maximum number of subset fits. Default 60.
    pub budget: usize,
    /// Largest candidate pool accepted. Default 5000.
    pub pool_cap: usize,
    /// Held-out NLL drop a predicate needs to pass filtering. Default 1e-3.
    pub filter_tolerance: f64,
    /// Share of sequences held out for scoring. Default 0.2.
    pub holdout_fraction: f64,
    /// Subsets evaluated between probability updates. Default 4.
    pub batch_size: usize,
    /// Share of evaluations counted as elite. Default 0.25.
    pub elite_quantile: f64,
    /// Weight on the previous probabilities in each update. Default 0.7.
    pub smoothing: f64,
    /// Chance of a uniform pick per slot. Default 0.1.
    pub exploration: f64,
    /// Allow unfiltered predicates as extra leaves of candidates. Default false.
    pub include_unfiltered: bool,
    /// Store wall-clock time per evaluation; makes reports non-reproducible. Default false.
    pub record_timings: bool,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            subset_size: 10,
            budget: 60,
            pool_cap: 5000,
            filter_tolerance: 1e-3,
            holdout_fraction: 0.2,
            batch_size: 4,
            elite_quantile: 0.25,
            smoothing: 0.7,
            exploration: 0.1,
            include_unfiltered: false,
            record_timings: false,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.subset_size == 0 {
            return bad("subset_size must be at least 1");
        }
        if self.budget == 0 {
            return bad("budget must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return bad("holdout_fraction must be in (0, 1)");
        }
        if !(self.elite_quantile > 0.0 && self.elite_quantile <= 1.0) {
            return bad("elite_quantile must be in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            return bad("smoothing must be in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.exploration) {
            return bad("exploration must be in [0, 1]");
        }
        if !(self.filter_tolerance.is_finite() && self.filter_tolerance >= 0.0) {
            return bad("filter_tolerance must be >= 0");
        }
        Ok(())
    }
}

pub const P_MIN: f64 = 0.01;
pub const P_MAX: f64 = 0.99;

/// Seeded train/held-out split. With a single sequence both parts are that sequence.
pub fn split_corpus(corpus: &[EventSequence], holdout_fraction: f64, seed: u64) -> (Vec<EventSequence>, Vec<EventSequence>) {
    let n = corpus.len();
    if n < 2 {
        return (corpus.to_vec(), corpus.to_vec());
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((n as f64 * holdout_fraction).round() as usize).clamp(1, n - 1);
    let (test, train) = idx.split_at(n_test);
    let mut train = train.to_vec();
    let mut test = test.to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (
        train.iter().map(|&i| corpus[i].clone()).collect(),
        test.iter().map(|&i| corpus[i].clone()).collect(),
    )
}

/// Held-out NLL change of one single-predicate rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateScore {
    pub event_type: u32,
    pub heldout_nll: f64,
    /// Baseline NLL minus this rule's NLL; positive means the rule helps.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub baseline_nll: f64,
    pub scores: Vec<PredicateScore>,
    pub retained: Vec<u32>,
}

/// Keeps covariate types whose rule `X_k -> Y` lowers held-out NLL by more
/// than `config.filter_tolerance` against a rule-free model. Both models keep
/// the numeric term on for every covariate, so the comparison measures what
/// the rule adds beyond the values.
pub fn filter_predicates(
    corpus: &[EventSequence],
    options: &ModelOptions,
    fit_config: &FitConfig,
    config: &MiningConfig,
) -> Result<FilterReport> {
    let first = corpus.first().ok_or(Error::EmptyCorpus)?;
    let (k, y) = (first.num_types(), first.target_type());
    check_corpus(corpus, &RuleSet::unbounded(y))?;
    let (train, test) = split_corpus(corpus, config.holdout_fraction, fit_config.seed);
    let types: Vec<u32> = (1..=k)
        .filter(|&t| t != y && corpus.iter().any(|s| s.events().iter().any(|e| e.event_type == t)))
        .collect();
    let leaves: Vec<RuleBody> = types.iter().map(|&t| RuleBody::leaf(t)).collect();
    let bodies: Vec<&RuleBody> = leaves.iter().collect();
    let train_d = CorpusDesign::build(&train, &bodies, &options.hyper, options.domain);
    let test_d = CorpusDesign::build(&test, &bodies, &options.hyper, options.domain);

    let score = |col: Option<usize>| -> Result<f64> {
        let mut rules = RuleSet::unbounded(y);
        if let Some(c) = col {
            rules.insert(Rule::new(leaves[c].clone(), y, 1)?)?;
        }
        let mut init = ModelParams::new(&rules, k, options.hyper, MaskPolicy::AllCovariates)?;
        init.lambda0 = train_d.initial_lambda0(init.gamma());
        let cols: Vec<usize> = col.into_iter().collect();
        let out = optimize(&train_d, &cols, init, fit_config)?;
        Ok(test_d.mean_nll(&out.params, &cols, false).0)
    };
    let baseline_nll = score(None)?;
    let nlls: Vec<Result<f64>> = (0..types.len()).into_par_iter().map(|c| score(Some(c))).collect();
    let mut scores = Vec::with_capacity(types.len());
    for (&t, nll) in types.iter().zip(nlls) {
        let nll = nll?;
        scores.push(PredicateScore {
            event_type: t,
            heldout_nll: nll,
            delta: baseline_nll - nll,
        });
    }
    let retained = scores
        .iter()
        .filter(|s| s.delta > config.filter_tolerance)
        .map(|s| s.event_type)
        .collect();
    Ok(FilterReport {
        baseline_nll,
        scores,
        retained,
    })
}

/// Size of the unfiltered rule space with `m` leaves: `K^m C^(m-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSpaceSize {
    pub predicates: usize,
    pub configurations: u64,
}

pub fn raw_space_size(num_types: u32, predicates: usize, relations: usize) -> u64 {
    (num_types as u64)
        .saturating_pow(predicates as u32)
        .saturating_mul((relations as u64).saturating_pow(predicates.saturating_sub(1) as u32))
}

/// Candidate rules for the subset search.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    pub target: u32,
    pub num_types: u32,
    pub candidates: Vec<Rule>,
    pub filtered_predicates: Vec<u32>,
    pub raw_space: Vec<RawSpaceSize>,
}

impl CandidatePool {
    /// A pool given explicitly. Rules are canonicalized and deduplicated; order is kept.
    pub fn from_rules(target: u32, num_types: u32, rules: impl IntoIterator<Item = Rule>) -> Result<Self> {
        let mut set = RuleSet::unbounded(target);
        for r in rules {
            set.insert(r)?;
        }
        set.check_types(num_types)?;
        let mut filtered: BTreeSet<u32> = BTreeSet::new();
        for r in set.rules() {
            filtered.extend(r.body().leaves());
        }
        Ok(CandidatePool {
            target,
            num_types,
            candidates: set.rules().to_vec(),
            filtered_predicates: filtered.into_iter().collect(),
            raw_space: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

fn bodies_with_leaves(n: usize, leaves: &[u32], memo: &mut BTreeMap<usize, Vec<RuleBody>>, cap: usize) -> Result<Vec<RuleBody>> {
    if let Some(v) = memo.get(&n) {
        return Ok(v.clone());
    }
    let out: Vec<RuleBody> = if n == 1 {
        leaves.iter().map(|&k| RuleBody::leaf(k)).collect()
    } else {
        let mut set = BTreeSet::new();
        for split in 1..n {
            let left = bodies_with_leaves(split, leaves, memo, cap)?;
            let right = bodies_with_leaves(n - split, leaves, memo, cap)?;
            for l in &left {
                for r in &right {
                    for rel in Relation::ALL {
                        set.insert(RuleBody::node(rel, l.clone(), r.clone()).canonical());
                    }
                }
                if set.len() > cap {
                    return Err(Error::PoolTooLarge { size: set.len(), cap });
                }
            }
        }
        set.into_iter().collect()
    };
    memo.insert(n, out.clone());
    Ok(out)
}

/// Enumerates canonical rules with `1..=max_predicates` leaves over the
/// filtered predicates (all covariates when `include_unfiltered`, as long as
/// one leaf is filtered).
pub fn generate_candidates(
    filtered: &[u32],
    num_types: u32,
    max_predicates: usize,
    target: u32,
    config: &MiningConfig,
) -> Result<CandidatePool> {
    let filtered: BTreeSet<u32> = filtered.iter().copied().collect();
    if let Some(&bad) = filtered.iter().find(|&&k| k == 0 || k > num_types || k == target) {
        return Err(Error::InvalidRule(format!("predicate {bad} cannot appear in a rule for target {target}")));
    }
    let raw_space = (1..=max_predicates)
        .map(|m| RawSpaceSize {
            predicates: m,
            configurations: raw_space_size(num_types, m, Relation::ALL.len()),
        })
        .collect();
    if filtered.is_empty() {
        log::warn!("no predicate passed filtering; the candidate pool is empty");
        return Ok(CandidatePool {
            target,
            num_types,
            candidates: Vec::new(),
            filtered_predicates: Vec::new(),
            raw_space,
        });
    }
    let leaves: Vec<u32> = if config.include_unfiltered {
        (1..=num_types).filter(|&k| k != target).collect()
    } else {
        filtered.iter().copied().collect()
    };
    let mut memo = BTreeMap::new();
    let mut candidates = Vec::new();
    for n in 1..=max_predicates {
        for body in bodies_with_leaves(n, &leaves, &mut memo, config.pool_cap)? {
            if body.leaves().iter().any(|k| filtered.contains(k)) {
                candidates.push(Rule::new(body, target, max_predicates)?);
            }
        }
        if candidates.len() > config.pool_cap {
            return Err(Error::PoolTooLarge {
                size: candidates.len(),
                cap: config.pool_cap,
            });
        }
    }
    Ok(CandidatePool {
        target,
        num_types,
        candidates,
        filtered_predicates: filtered.into_iter().collect(),
        raw_space,
    })
}

/// One subset fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub iteration: usize,
    /// Sorted candidate indices.
    pub subset: Vec<usize>,
    /// Held-out log-likelihood (negated mean held-out NLL); absent when the fit failed.
    pub score: Option<f64>,
    pub train_nll: Option<f64>,
    pub error: Option<String>,
    pub wall_ms: Option<f64>,
}

/// Search state after the last probability update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningState {
    pub inclusion_probs: Vec<f64>,
    pub evaluated: BTreeMap<String, f64>,
    pub best_subset: Vec<usize>,
    pub best_score: f64,
    pub iteration: usize,
    pub seed: u64,
}

/// Result of the subset search.
#[derive(Debug, Clone, PartialEq)]
pub struct MiningReport {
    pub pool: CandidatePool,
    pub filter: Option<FilterReport>,
    pub subset_size: usize,
    pub budget: usize,
    pub seed: u64,
    pub evaluations: Vec<Evaluation>,
    /// Inclusion probabilities before the first batch and after each update.
    pub probability_trajectory: Vec<Vec<f64>>,
    /// Sampled subsets that were already evaluated.
    pub cache_hits: usize,
    pub state: MiningState,
    /// Best subset refitted on the whole corpus.
    pub best_model: FittedModel,
}

impl MiningReport {
    pub fn best_rules(&self) -> &RuleSet {
        &self.best_model.rules
    }

    pub fn cache_hit_rate(&self) -> f64 {
        let draws = self.evaluations.len() + self.cache_hits;
        if draws == 0 {
            0.0
        } else {
            self.cache_hits as f64 / draws as f64
        }
    }

    /// Winning rules, one per line, with `# weight=` annotations.
    pub fn rules_text(&self, names: &NameTable) -> Result<String> {
        let mut out = String::new();
        for (r, &a) in self.best_model.rules.rules().iter().zip(&self.best_model.params.alpha) {
            out.push_str(&print_weighted_rule(r, a, names)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn to_document(&self, names: &NameTable) -> Result<MiningDocument> {
        let pool = self
            .pool
            .candidates
            .iter()
            .map(|r| print_rule(r, names))
            .collect::<Result<_>>()?;
        let best_rules = self
            .best_model
            .rules
            .rules()
            .iter()
            .zip(&self.best_model.params.alpha)
            .map(|(r, &a)| print_weighted_rule(r, a, names))
            .collect::<Result<_>>()?;
        Ok(MiningDocument {
            format_version: REPORT_VERSION,
            subset_size: self.subset_size,
            budget: self.budget,
            seed: self.seed,
            filter: self.filter.clone(),
            filtered_predicates: self.pool.filtered_predicates.clone(),
            raw_space: self.pool.raw_space.clone(),
            pool,
            evaluations: self.evaluations.clone(),
            cache_hits: self.cache_hits,
            cache_hit_rate: self.cache_hit_rate(),
            probability_trajectory: self.probability_trajectory.clone(),
            best_subset: self.state.best_subset.clone(),
            best_score: self.state.best_score,
            best_rules,
            final_train_nll: self.best_model.train_nll,
        })
    }
}

/// Serialized form of a [`MiningReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningDocument {
    pub format_version: u32,
    pub subset_size: usize,
    pub budget: usize,
    pub seed: u64,
    pub filter: Option<FilterReport>,
    pub filtered_predicates: Vec<u32>,
    pub raw_space: Vec<RawSpaceSize>,
    pub pool: Vec<String>,
    pub evaluations: Vec<Evaluation>,
    pub cache_hits: usize,
    pub cache_hit_rate: f64,
    pub probability_trajectory: Vec<Vec<f64>>,
    pub best_subset: Vec<usize>,
    pub best_score: f64,
    pub best_rules: Vec<String>,
    pub final_train_nll: f64,
}

fn subset_key(s: &[usize]) -> String {
    s.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

/// Next combination of `k` out of `n` in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// `C(n, k)`, saturating.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

fn sample_subset(probs: &[f64], size: usize, exploration: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut open: Vec<usize> = (0..probs.len()).collect();
    let mut chosen = Vec::with_capacity(size);
    for _ in 0..size {
        let pos = if rng.random::<f64>() < exploration {
            rng.random_range(0..open.len())
        } else {
            let total: f64 = open.iter().map(|&i| probs[i]).sum();
            let mut u = rng.random::<f64>() * total;
            let mut pick = open.len() - 1;
            for (p, &i) in open.iter().enumerate() {
                u -= probs[i];
                if u < 0.0 {
                    pick = p;
                    break;
                }
            }
            pick
        };
        chosen.push(open.remove(pos));
    }
    chosen.sort_unstable();
    chosen
}

fn better(score: f64, subset: &[usize], best_score: f64, best: &[usize]) -> bool {
    score > best_score || (score == best_score && subset < best)
}

/// Searches fixed-size subsets of `pool` for the best held-out log-likelihood.
#[allow(clippy::too_many_arguments)]
pub fn optimize_ruleset(
    pool: &CandidatePool,
    corpus: &[EventSequence],
    subset_size: usize,
    budget: usize,
    seed: u64,
    options: &ModelOptions,
    fit_config: &FitConfig,
    config: &MiningConfig,
) -> Result<MiningReport> {
    config.validate()?;
    if pool.is_empty() {
        return Err(Error::MiningFailed("candidate pool is empty".into()));
    }
    if subset_size == 0 || subset_size > pool.len() {
        return Err(Error::InvalidConfig(format!(
            "subset_size {subset_size} must be in 1..={}",
            pool.len()
        )));
    }
    if budget == 0 {
        return Err(Error::InvalidConfig("budget must be at least 1".into()));
    }
    let target = pool.target;
    check_corpus(corpus, &RuleSet::from_rules(target, pool.candidates.iter().cloned())?)?;
    let num_types = corpus[0].num_types();
    let (train, test) = split_corpus(corpus, config.holdout_fraction, seed);
    let bodies: Vec<&RuleBody> = pool.candidates.iter().map(|r| r.body()).collect();
    let train_d = CorpusDesign::build(&train, &bodies, &options.hyper, options.domain);
    let test_d = CorpusDesign::build(&test, &bodies, &options.hyper, options.domain);

    let evaluate = |subset: &[usize]| -> Result<(f64, f64)> {
        let rules = RuleSet::from_rules(target, subset.iter().map(|&i| pool.candidates[i].clone()))?;
        let mut init = ModelParams::new(&rules, num_types, options.hyper, options.mask_policy)?;
        init.lambda0 = train_d.initial_lambda0(init.gamma());
        let out = optimize(&train_d, subset, init, fit_config)?;
        let heldout = test_d.mean_nll(&out.params, subset, false).0;
        Ok((-heldout, out.train_nll))
    };

    let n = pool.len();
    let space = binomial(n, subset_size);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probs = vec![(subset_size as f64 / n as f64).clamp(P_MIN, P_MAX); n];
    let mut trajectory = vec![probs.clone()];
    let mut evaluated: BTreeMap<Vec<usize>, Option<f64>> = BTreeMap::new();
    let mut evaluations: Vec<Evaluation> = Vec::new();
    let mut cache_hits = 0;
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut lex_cursor: Vec<usize> = (0..subset_size).collect();
    let mut lex_done = false;
    let mut iteration = 0;

    while evaluations.len() < budget && (evaluated.len() as u64) < space {
        iteration += 1;
        let want = config.batch_size.min(budget - evaluations.len());
        let mut batch: Vec<Vec<usize>> = Vec::with_capacity(want);
        while batch.len() < want && ((evaluated.len() + batch.len()) as u64) < space {
            let mut s = sample_subset(&probs, subset_size, config.exploration, &mut rng);
            if evaluated.contains_key(&s) || batch.contains(&s) {
                cache_hits += 1;
                // deterministic fallback: first unevaluated subset in lexicographic order
                loop {
                    if lex_done {
                        break;
                    }
                    let c = lex_cursor.clone();
                    if !next_combination(&mut lex_cursor, n) {
                        lex_done = true;
                    }
                    if !evaluated.contains_key(&c) && !batch.contains(&c) {
                        s = c;
                        break;
                    }
                }
                if evaluated.contains_key(&s) || batch.contains(&s) {
                    break;
                }
            }
            batch.push(s);
        }
        if batch.is_empty() {
            break;
        }
        let results: Vec<_> = batch
            .par_iter()
            .map(|s| {
                let start = Instant::now();
                let r = evaluate(s);
                let ms = config.record_timings.then(|| start.elapsed().as_secs_f64() * 1e3);
                (r, ms)
            })
            .collect();
        for (s, (r, wall_ms)) in batch.into_iter().zip(results) {
            let (score, train_nll, error) = match r {
                Ok((score, t)) if score.is_finite() => (Some(score), Some(t), None),
                Ok(_) => (None, None, Some("non-finite held-out likelihood".to_string())),
                Err(e) => (None, None, Some(e.to_string())),
            };
            if let Some(sc) = score {
                if best.as_ref().is_none_or(|(bs, b)| better(sc, &s, *bs, b)) {
                    best = Some((sc, s.clone()));
                }
            }
            evaluated.insert(s.clone(), score);
            evaluations.push(Evaluation {
                iteration,
                subset: s,
                score,
                train_nll,
                error,
                wall_ms,
            });
        }
        // elite reweighting over every successful evaluation so far
        let mut ok: Vec<(&Vec<usize>, f64)> = evaluated.iter().filter_map(|(s, v)| v.map(|v| (s, v))).collect();
        if !ok.is_empty() {
            ok.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
            let n_elite = ((ok.len() as f64 * config.elite_quantile).ceil() as usize).max(1);
            let mut freq = vec![0.0; n];
            for (s, _) in &ok[..n_elite] {
                for &i in s.iter() {
                    freq[i] += 1.0 / n_elite as f64;
                }
            }
            for (p, f) in probs.iter_mut().zip(freq) {
                *p = (config.smoothing * *p + (1.0 - config.smoothing) * f).clamp(P_MIN, P_MAX);
            }
        }
        trajectory.push(probs.clone());
    }

    let Some((best_score, best_subset)) = best else {
        let diag: Vec<String> = evaluations
            .iter()
            .filter_map(|e| e.error.as_ref().map(|m| format!("[{}]: {m}", subset_key(&e.subset))))
            .collect();
        return Err(Error::MiningFailed(format!("no subset could be fitted: {}", diag.join("; "))));
    };
    let mut rules = RuleSet::new(target, subset_size);
    for &i in &best_subset {
        rules.insert(pool.candidates[i].clone())?;
    }
    let best_model = fit(corpus, &rules, options, fit_config)?;
    let state = MiningState {
        inclusion_probs: probs,
        evaluated: evaluated
            .iter()
            .filter_map(|(s, v)| v.map(|v| (subset_key(s), v)))
            .collect(),
        best_subset,
        best_score,
        iteration,
        seed,
    };
    Ok(MiningReport {
        pool: pool.clone(),
        filter: None,
        subset_size,
        budget,
        seed,
        evaluations,
        probability_trajectory: trajectory,
        cache_hits,
        state,
        best_model,
    })
}

/// Filtering, candidate generation and subset search in sequence.
///
/// When no predicate survives filtering the result is a rule-free model and
/// the report has no evaluations. The subset size is capped at the pool size.
pub fn mine(
    corpus: &[EventSequence],
    options: &ModelOptions,
    fit_config: &FitConfig,
    config: &MiningConfig,
    max_predicates: usize,
) -> Result<MiningReport> {
    config.validate()?;
    let first = corpus.first().ok_or(Error::EmptyCorpus)?;
    let (k, y) = (first.num_types(), first.target_type());
    let filter = filter_predicates(corpus, options, fit_config, config)?;
    let pool = generate_candidates(&filter.retained, k, max_predicates, y, config)?;
    let seed = fit_config.seed;
    if pool.is_empty() {
        log::warn!("mining found no candidate rules; returning a rule-free model");
        let best_model = fit(corpus, &RuleSet::unbounded(y), options, fit_config)?;
        return Ok(MiningReport {
            pool,
            filter: Some(filter),
            subset_size: 0,
            budget: config.budget,
            seed,
            evaluations: Vec::new(),
            probability_trajectory: Vec::new(),
            cache_hits: 0,
            state: MiningState {
                inclusion_probs: Vec::new(),
                evaluated: BTreeMap::new(),
                best_subset: Vec::new(),
                best_score: f64::NEG_INFINITY,
                iteration: 0,
                seed,
            },
            best_model,
        });
    }
    let size = config.subset_size.min(pool.len());
    if size < config.subset_size {
        log::warn!("subset_size {} exceeds the pool of {}; using {size}", config.subset_size, pool.len());
    }
    let mut report = optimize_ruleset(&pool, corpus, size, config.budget, seed, options, fit_config, config)?;
    report.filter = Some(filter);
    Ok(report)
}
