//! Synthetic corpora from a known model.
//!
//! Covariate types arrive as independent homogeneous Poisson streams carrying
//! i.i.d. values. Target events are then drawn by Ogata thinning against the
//! model intensity, which depends on the covariates only: rules never mention
//! the target and the numeric mask always excludes it.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsl::{parse_rule, print_weighted_rule, NameTable};
use crate::encoders::{ImpulseStream, SignalTracker, TriggerSet};
use crate::error::{Error, Result};
use crate::intensity::{softplus, IntensityContext};
use crate::model::{
    Event, EventSequence, Hyperparams, MaskPolicy, ModelParams, RuleSet, DEFAULT_MAX_PREDICATES,
};
use crate::training::FittedModel;

pub const MANIFEST_VERSION: u32 = 1;

/// Distribution of the value attached to covariate events.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ValueDist {
    Normal { mean: f64, std: f64 },
    Constant { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateStream {
    pub event_type: u32,
    pub rate: f64,
    pub values: ValueDist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedRule {
    /// Rule text in the rule language, resolved against the scenario names.
    pub rule: String,
    pub alpha: f64,
}

fn default_gamma() -> f64 {
    1.0
}

fn default_max_predicates() -> usize {
    DEFAULT_MAX_PREDICATES
}

/// Ground-truth model and sampling plan for a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub num_types: u32,
    pub target_type: u32,
    /// Predicate names; `X1..XK` when empty.
    #[serde(default)]
    pub names: Vec<String>,
    /// One stream per covariate type. Types without a stream never occur.
    #[serde(default)]
    pub covariates: Vec<CovariateStream>,
    #[serde(default)]
    pub rules: Vec<PlantedRule>,
    /// Numeric weights per type, indexed by `type - 1`; empty means all zero.
    #[serde(default)]
    pub beta: Vec<f64>,
    pub lambda0: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub hyper: Hyperparams,
    #[serde(default)]
    pub mask_policy: MaskPolicy,
    #[serde(default = "default_max_predicates")]
    pub max_predicates: usize,
    pub horizon: f64,
    pub num_sequences: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioSpec {
    /// A rule-free scenario with no covariate streams.
    pub fn new(num_types: u32, target_type: u32, lambda0: f64, horizon: f64, num_sequences: usize, seed: u64) -> Self {
        ScenarioSpec {
            num_types,
            target_type,
            names: Vec::new(),
            covariates: Vec::new(),
            rules: Vec::new(),
            beta: Vec::new(),
            lambda0,
            gamma: 1.0,
            hyper: Hyperparams::default(),
            mask_policy: MaskPolicy::Rules,
            max_predicates: DEFAULT_MAX_PREDICATES,
            horizon,
            num_sequences,
            seed,
        }
    }

    /// Adds a stream with the same rate and values for every non-target type.
    pub fn with_uniform_covariates(mut self, rate: f64, values: ValueDist) -> Self {
        self.covariates = (1..=self.num_types)
            .filter(|&k| k != self.target_type)
            .map(|event_type| CovariateStream { event_type, rate, values })
            .collect();
        self
    }

    pub fn with_rule(mut self, rule: &str, alpha: f64) -> Self {
        self.rules.push(PlantedRule {
            rule: rule.to_string(),
            alpha,
        });
        self
    }

    pub fn with_beta(mut self, beta: Vec<f64>) -> Self {
        self.beta = beta;
        self
    }

    pub fn name_table(&self) -> Result<NameTable> {
        if self.names.is_empty() {
            Ok(NameTable::numbered(self.num_types))
        } else {
            let t = NameTable::new(self.names.clone())?;
            if t.len() != self.num_types as usize {
                return Err(Error::InvalidScenario(format!(
                    "{} names for {} types",
                    t.len(),
                    self.num_types
                )));
            }
            Ok(t)
        }
    }

    /// Checks the spec and builds the ground-truth rules and parameters.
    pub fn truth(&self) -> Result<Truth> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if self.num_types == 0 || self.target_type == 0 || self.target_type > self.num_types {
            return bad(format!("target {} not in 1..={}", self.target_type, self.num_types));
        }
        if self.num_sequences == 0 {
            return bad("num_sequences must be at least 1".into());
        }
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return bad(format!("horizon must be finite and >= 0, got {}", self.horizon));
        }
        if !self.lambda0.is_finite() || !(self.gamma.is_finite() && self.gamma > 0.0) {
            return bad("lambda0 must be finite and gamma positive".into());
        }
        self.hyper
            .validate()
            .map_err(|e| Error::InvalidScenario(e.to_string()))?;
        let mut seen = vec![false; self.num_types as usize + 1];
        for c in &self.covariates {
            if c.event_type == 0 || c.event_type > self.num_types || c.event_type == self.target_type {
                return bad(format!("covariate stream for invalid type {}", c.event_type));
            }
            if std::mem::replace(&mut seen[c.event_type as usize], true) {
                return bad(format!("duplicate covariate stream for type {}", c.event_type));
            }
            if !(c.rate.is_finite() && c.rate > 0.0) {
                return bad(format!("rate of type {} must be positive, got {}", c.event_type, c.rate));
            }
            match c.values {
                ValueDist::Normal { mean, std } if !(mean.is_finite() && std.is_finite() && std >= 0.0) => {
                    return bad(format!("bad value distribution for type {}", c.event_type));
                }
                ValueDist::Constant { value } if !value.is_finite() => {
                    return bad(format!("bad value distribution for type {}", c.event_type));
                }
                _ => {}
            }
        }
        if !self.beta.is_empty() && self.beta.len() != self.num_types as usize {
            return bad(format!("beta has {} entries for {} types", self.beta.len(), self.num_types));
        }
        let names = self.name_table()?;
        let mut rules = RuleSet::unbounded(self.target_type);
        let mut alpha = Vec::new();
        for p in &self.rules {
            let rule = parse_rule(&p.rule, &names, self.max_predicates)
                .map_err(|e| Error::InvalidScenario(format!("rule {:?}: {e}", p.rule)))?;
            if rule.target() != self.target_type {
                return bad(format!("rule {:?} does not conclude the target type", p.rule));
            }
            if !p.alpha.is_finite() {
                return bad(format!("alpha of {:?} must be finite", p.rule));
            }
            if !rules.insert(rule)? {
                return bad(format!("duplicate planted rule {:?}", p.rule));
            }
            alpha.push(p.alpha);
        }
        let mut params = ModelParams::new(&rules, self.num_types, self.hyper, self.mask_policy)?;
        params.lambda0 = self.lambda0;
        params.alpha = alpha;
        if !self.beta.is_empty() {
            if self.beta.iter().any(|b| !b.is_finite()) {
                return bad("beta must be finite".into());
            }
            params.beta = self.beta.clone();
        }
        params.gamma_raw = self.gamma.ln();
        Ok(Truth { names, rules, params })
    }

    /// Hex SHA-256 of the spec's JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Ground-truth rules and parameters of a scenario.
#[derive(Debug, Clone)]
pub struct Truth {
    pub names: NameTable,
    pub rules: RuleSet,
    pub params: ModelParams,
}

/// Corpus metadata written next to the sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub format_version: u32,
    pub names: NameTable,
    pub num_types: u32,
    pub target_type: u32,
    pub num_sequences: usize,
    pub spec_hash: String,
    /// Planted rules with their weights as `# weight=` annotated rule lines.
    pub true_rules: Vec<String>,
    pub spec: ScenarioSpec,
}

/// Seed of sequence `index` in a corpus seeded with `seed`.
pub fn sequence_seed(seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng.next_u64()
}

/// Decayed impulse streams of a model on `sequence`, split by sign: the
/// positive streams bound the pre-activation from above until the next impulse.
fn signed_streams(sequence: &EventSequence, rules: &RuleSet, params: &ModelParams) -> (Vec<ImpulseStream>, Vec<ImpulseStream>) {
    let hyper = params.hyper;
    let mut signed: Vec<ImpulseStream> = Vec::new();
    for (j, (rule, &a)) in rules.rules().iter().zip(&params.alpha).enumerate() {
        if a != 0.0 {
            let ts = TriggerSet::compute(j, rule.body(), sequence, hyper.delta);
            let n = ts.times.len();
            signed.push(ImpulseStream {
                times: ts.times,
                amounts: vec![a; n],
                rate: hyper.rule_decay,
            });
        }
    }
    for (k, (&on, &b)) in params.mask().iter().zip(&params.beta).enumerate() {
        if on && b != 0.0 {
            let mut s = ImpulseStream::values_of_type(sequence, k as u32 + 1, hyper.num_decay);
            s.amounts.iter_mut().for_each(|v| *v *= b);
            signed.push(s);
        }
    }
    let split = |keep: fn(f64) -> f64| {
        signed
            .iter()
            .map(|s| ImpulseStream {
                times: s.times.clone(),
                amounts: s.amounts.iter().map(|&v| keep(v)).collect(),
                rate: s.rate,
            })
            .collect::<Vec<_>>()
    };
    (split(|v| v.max(0.0)), split(|v| v.min(0.0)))
}

fn impulse_times(streams: &[ImpulseStream]) -> Vec<f64> {
    let mut t: Vec<f64> = streams.iter().flat_map(|s| s.times.iter().copied()).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

/// Validated scenario ready to draw sequences.
#[derive(Debug, Clone)]
pub struct Simulator {
    spec: ScenarioSpec,
    truth: Truth,
}

impl Simulator {
    pub fn new(spec: &ScenarioSpec) -> Result<Self> {
        let truth = spec.truth()?;
        Ok(Simulator {
            spec: spec.clone(),
            truth,
        })
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn truth(&self) -> &Truth {
        &self.truth
    }

    /// Draws one sequence from `seed`.
    pub fn sequence(&self, seed: u64) -> Result<EventSequence> {
        let spec = &self.spec;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let horizon = spec.horizon;
        let mut events = Vec::new();
        for c in &spec.covariates {
            let gap = Exp::new(c.rate).map_err(|e| Error::InvalidScenario(e.to_string()))?;
            let normal = match c.values {
                ValueDist::Normal { mean, std } => {
                    Some(Normal::new(mean, std).map_err(|e| Error::InvalidScenario(e.to_string()))?)
                }
                ValueDist::Constant { .. } => None,
            };
            let mut t = gap.sample(&mut rng);
            while t < horizon {
                let v = match (c.values, &normal) {
                    (ValueDist::Constant { value }, _) => value,
                    (_, Some(n)) => n.sample(&mut rng),
                    _ => unreachable!(),
                };
                events.push(Event::new(t, c.event_type, v));
                t += gap.sample(&mut rng);
            }
        }
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        let covariates = EventSequence::new(events.clone(), horizon, spec.num_types, spec.target_type)?;
        let targets = self.thin_targets(&covariates, &mut rng)?;
        events.extend(targets.into_iter().map(|t| Event::new(t, spec.target_type, 0.0)));
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        EventSequence::new(events, horizon, spec.num_types, spec.target_type)
    }

    fn thin_targets(&self, covariates: &EventSequence, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let params = &self.truth.params;
        let gamma = params.gamma();
        let horizon = covariates.horizon();
        let (pos, neg) = signed_streams(covariates, &self.truth.rules, params);
        let jumps = impulse_times(&pos);
        let mut upper = SignalTracker::new(pos);
        let mut lower = SignalTracker::new(neg);
        let mut out = Vec::new();
        let mut t = 0.0;
        let mut next = 0;
        while t < horizon {
            while next < jumps.len() && jumps[next] <= t {
                next += 1;
            }
            let window_end = jumps.get(next).copied().unwrap_or(horizon).min(horizon);
            let p: f64 = upper.advance(t, true).iter().sum();
            let bound = softplus(params.lambda0 + p, gamma);
            let cand = t + rng.sample::<f64, _>(Exp::new(bound).map_err(|_| Error::ThinningBound {
                time: t,
                intensity: f64::NAN,
                bound,
            })?);
            if cand >= window_end {
                t = window_end;
                continue;
            }
            let p: f64 = upper.advance(cand, true).iter().sum();
            let n: f64 = lower.advance(cand, true).iter().sum();
            let lambda = softplus(params.lambda0 + p + n, gamma);
            if lambda > bound * (1.0 + 1e-9) {
                return Err(Error::ThinningBound {
                    time: cand,
                    intensity: lambda,
                    bound,
                });
            }
            if rng.random::<f64>() * bound <= lambda {
                out.push(cand);
            }
            t = cand;
        }
        Ok(out)
    }

    /// Sequence `index` of the corpus.
    pub fn corpus_sequence(&self, index: usize) -> Result<EventSequence> {
        self.sequence(sequence_seed(self.spec.seed, index as u64))
    }

    pub fn corpus(&self) -> Result<Vec<EventSequence>> {
        (0..self.spec.num_sequences)
            .into_par_iter()
            .map(|i| self.corpus_sequence(i))
            .collect()
    }

    pub fn manifest(&self) -> Result<CorpusManifest> {
        let names = &self.truth.names;
        let true_rules = self
            .truth
            .rules
            .rules()
            .iter()
            .zip(&self.truth.params.alpha)
            .map(|(r, &a)| print_weighted_rule(r, a, names))
            .collect::<Result<_>>()?;
        Ok(CorpusManifest {
            format_version: MANIFEST_VERSION,
            names: names.clone(),
            num_types: self.spec.num_types,
            target_type: self.spec.target_type,
            num_sequences: self.spec.num_sequences,
            spec_hash: self.spec.hash(),
            true_rules,
            spec: self.spec.clone(),
        })
    }
}

/// Draws one sequence of `spec` from `seed`.
pub fn simulate_sequence(spec: &ScenarioSpec, seed: u64) -> Result<EventSequence> {
    Simulator::new(spec)?.sequence(seed)
}

/// Draws the whole corpus of `spec` together with its manifest.
pub fn simulate_corpus(spec: &ScenarioSpec) -> Result<(Vec<EventSequence>, CorpusManifest)> {
    let sim = Simulator::new(spec)?;
    Ok((sim.corpus()?, sim.manifest()?))
}

/// Draws the next target time after `t_from` by thinning, assuming no further
/// covariate events arrive.
pub fn sample_continuation(model: &FittedModel, history: &EventSequence, t_from: f64, rng: &mut impl Rng) -> Result<f64> {
    let past = history.history_until(t_from);
    let ctx = IntensityContext::new(&past, &model.rules, &model.params)?.with_domain(model.domain);
    let (pos, _) = signed_streams(&past, &model.rules, &model.params);
    let mut upper = SignalTracker::new(pos);
    let gamma = model.params.gamma();
    let limit = t_from + 1e6 * model.mean_target_gap.max(f64::MIN_POSITIVE);
    let mut t = t_from;
    loop {
        let p: f64 = upper.advance(t, true).iter().sum();
        let bound = softplus(model.params.lambda0 + p, gamma);
        t += rng.sample::<f64, _>(Exp::new(bound).map_err(|_| Error::DivergentPrediction { horizon: t })?);
        if t > limit {
            return Err(Error::DivergentPrediction { horizon: t });
        }
        let lambda = ctx.intensity_at(t);
        if lambda > bound * (1.0 + 1e-9) {
            return Err(Error::ThinningBound {
                time: t,
                intensity: lambda,
                bound,
            });
        }
        if rng.random::<f64>() * bound <= lambda {
            return Ok(t);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intensity::softplus_inverse;
    use crate::stats::{exp1_cdf, ks_test, mean};

    fn poisson_spec(rate: f64, horizon: f64, m: usize) -> ScenarioSpec {
        ScenarioSpec::new(1, 1, softplus_inverse(rate, 1.0), horizon, m, 11)
    }

    #[test]
    fn poisson_count_mean() {
        let (corpus, _) = simulate_corpus(&poisson_spec(2.0, 10.0, 10_000)).unwrap();
        let counts: Vec<f64> = corpus.iter().map(|s| s.len() as f64).collect();
        let m = mean(&counts);
        assert!((m - 20.0).abs() < 3.0 * (20.0f64 / 1e4).sqrt(), "{m}");
    }

    #[test]
    fn poisson_gaps_are_exponential() {
        let (corpus, _) = simulate_corpus(&poisson_spec(2.0, 10.0, 10_000)).unwrap();
        let gaps: Vec<f64> = corpus
            .iter()
            .filter_map(|s| s.target_times().first().copied())
            .map(|t| 2.0 * t)
            .collect();
        let r = ks_test(&gaps, exp1_cdf);
        assert!(r.p_value > 0.01, "{r:?}");
    }

    #[test]
    fn zero_horizon_is_empty() {
        let spec = poisson_spec(5.0, 0.0, 1).with_uniform_covariates(3.0, ValueDist::Constant { value: 1.0 });
        assert!(simulate_sequence(&spec, 1).unwrap().is_empty());
    }

    #[test]
    fn corpus_sequences_regenerate() {
        let spec = ScenarioSpec::new(3, 3, 0.0, 5.0, 3, 4)
            .with_uniform_covariates(1.0, ValueDist::Normal { mean: 0.0, std: 1.0 })
            .with_rule("X1 before X2 -> X3", 1.5);
        let sim = Simulator::new(&spec).unwrap();
        let corpus = sim.corpus().unwrap();
        assert_eq!(corpus.len(), 3);
        assert_eq!(sim.corpus_sequence(1).unwrap(), corpus[1]);
        assert_eq!(simulate_corpus(&spec).unwrap().0, corpus);
    }

    #[test]
    fn hash_tracks_spec() {
        let a = poisson_spec(2.0, 10.0, 3);
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.horizon = 11.0;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn invalid_specs_rejected() {
        let base = ScenarioSpec::new(3, 3, 0.0, 5.0, 3, 4);
        let neg = base.clone().with_uniform_covariates(-1.0, ValueDist::Constant { value: 1.0 });
        assert!(matches!(neg.truth(), Err(Error::InvalidScenario(_))));
        let bad_rule = base.clone().with_rule("X3 -> X3", 1.0);
        assert!(matches!(bad_rule.truth(), Err(Error::InvalidScenario(_))));
        let mut none = base.clone();
        none.num_sequences = 0;
        assert!(none.truth().is_err());
        let bad_beta = base.with_beta(vec![1.0]);
        assert!(bad_beta.truth().is_err());
    }

    #[test]
    fn manifest_lists_rules() {
        let spec = ScenarioSpec::new(3, 3, 0.0, 5.0, 2, 4).with_rule("X1 and X2 -> X3", 2.0);
        let m = Simulator::new(&spec).unwrap().manifest().unwrap();
        assert_eq!(m.true_rules, vec!["X1 and X2 -> X3 # weight=2".to_string()]);
        assert_eq!(m.spec_hash, spec.hash());
    }

    #[test]
    fn post_trigger_window_rate_exceeds_baseline() {
        // Y rate inside one unit after a trigger vs outside
        let spec = ScenarioSpec::new(3, 3, softplus_inverse(0.5, 1.0), 20.0, 2000, 9)
            .with_uniform_covariates(0.3, ValueDist::Constant { value: 0.0 })
            .with_rule("X1 before X2 -> X3", 3.0);
        let sim = Simulator::new(&spec).unwrap();
        let rule = &sim.truth().rules.rules()[0];
        let (mut inside, mut t_in, mut outside, mut t_out) = (0.0, 0.0, 0.0, 0.0);
        for s in sim.corpus().unwrap() {
            let trig = TriggerSet::compute(0, rule.body(), &s, spec.hyper.delta).times;
            let covered = |t: f64| trig.iter().any(|&a| t >= a && t < a + 1.0);
            let grid = 2000;
            let h = s.horizon() / grid as f64;
            let cov = (0..grid).filter(|&i| covered((i as f64 + 0.5) * h)).count() as f64 * h;
            t_in += cov;
            t_out += s.horizon() - cov;
            for t in s.target_times() {
                if covered(t) {
                    inside += 1.0;
                } else {
                    outside += 1.0;
                }
            }
        }
        let base = outside / t_out;
        // normal approximation to the one-sided Poisson test
        let z = (inside - base * t_in) / (base * t_in).sqrt();
        assert!(z > 2.33, "z = {z}");
    }
}
