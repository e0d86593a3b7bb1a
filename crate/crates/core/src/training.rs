//! Maximum-likelihood fitting and next-event prediction.
//!
//! Fitting minimizes the mean per-sequence NLL plus a small L2 penalty on the
//! rule and numeric weights with an adaptive-moment optimizer. A step that
//! would raise the objective is retried at half the size, and the size grows
//! back after accepted steps, so the recorded objective never increases.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intensity::{softplus, softplus_inverse, Design, IntegrationDomain, IntensityContext};
use crate::io::CorpusFingerprint;
use crate::model::{EventSequence, Hyperparams, MaskPolicy, ModelParams, RuleBody, RuleSet};
use crate::quadrature::panel_nodes;

/// Optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub max_epochs: usize,
    pub learning_rate: f64,
    /// Stop once an accepted step changes the objective by less than this,
    /// relative to `max(|objective|, 1)`.
    pub convergence_tol: f64,
    /// Seed for data splits made on behalf of the fit (mining, filtering).
    pub seed: u64,
    /// Weight of `||(alpha, beta)||^2`.
    pub l2_weight: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_epochs: 500,
            learning_rate: 0.05,
            convergence_tol: 1e-7,
            seed: 0,
            l2_weight: 1e-4,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(self.convergence_tol.is_finite() && self.convergence_tol > 0.0) {
            return Err(Error::InvalidConfig("convergence_tol must be positive".into()));
        }
        if !(self.l2_weight.is_finite() && self.l2_weight >= 0.0) {
            return Err(Error::InvalidConfig("l2_weight must be >= 0".into()));
        }
        Ok(())
    }
}

/// Model structure chosen before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOptions {
    pub hyper: Hyperparams,
    pub mask_policy: MaskPolicy,
    pub domain: IntegrationDomain,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            hyper: Hyperparams::default(),
            mask_policy: MaskPolicy::Rules,
            domain: IntegrationDomain::Horizon,
        }
    }
}

/// A rule set with trained parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub rules: RuleSet,
    pub params: ModelParams,
    pub domain: IntegrationDomain,
    pub num_types: u32,
    pub target_type: u32,
    /// Mean per-sequence NLL on the training corpus, without the penalty.
    pub train_nll: f64,
    pub epochs_run: usize,
    pub config: FitConfig,
    /// Objective after each epoch, starting with the initial value.
    pub loss_history: Vec<f64>,
    /// Training horizon per target event, the time scale for prediction cut-offs.
    pub mean_target_gap: f64,
    pub corpus: CorpusFingerprint,
}

impl FittedModel {
    pub fn context<'a>(&'a self, sequence: &'a EventSequence) -> Result<IntensityContext<'a>> {
        Ok(IntensityContext::new(sequence, &self.rules, &self.params)?.with_domain(self.domain))
    }

    /// Per-sequence NLL of this model on `corpus`.
    pub fn sequence_nlls(&self, corpus: &[EventSequence]) -> Result<Vec<f64>> {
        check_corpus(corpus, &self.rules)?;
        corpus
            .par_iter()
            .map(|s| {
                let ctx = self.context(s)?;
                Ok(ctx.nll(&s.target_times()).total)
            })
            .collect()
    }

    /// Mean per-sequence NLL (serial reduction in corpus order).
    pub fn mean_nll(&self, corpus: &[EventSequence]) -> Result<f64> {
        let v = self.sequence_nlls(corpus)?;
        Ok(v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Confirms `train_nll` against the training corpus.
    pub fn verify(&self, corpus: &[EventSequence]) -> Result<()> {
        let fp = CorpusFingerprint::of(corpus);
        if fp != self.corpus {
            return Err(Error::CorpusMismatch("corpus fingerprint differs from the training corpus".into()));
        }
        let nll = self.mean_nll(corpus)?;
        if (nll - self.train_nll).abs() > 1e-9 * self.train_nll.abs().max(1.0) {
            return Err(Error::CorpusMismatch(format!(
                "recomputed NLL {nll} differs from stored {}",
                self.train_nll
            )));
        }
        Ok(())
    }
}

/// Checks shared `K`/target across the corpus and against `rules`.
pub fn check_corpus(corpus: &[EventSequence], rules: &RuleSet) -> Result<()> {
    let first = corpus.first().ok_or(Error::EmptyCorpus)?;
    let (k, y) = (first.num_types(), first.target_type());
    if let Some((i, _)) = corpus
        .iter()
        .enumerate()
        .find(|(_, s)| s.num_types() != k || s.target_type() != y)
    {
        return Err(Error::CorpusMismatch(format!("sequence {i} differs in num_types or target_type")));
    }
    if rules.target() != y {
        return Err(Error::CorpusMismatch(format!(
            "rules target {} but corpus target {y}",
            rules.target()
        )));
    }
    rules.check_types(k)
}

/// Mean gap between target events over a corpus: total observed time per target.
pub fn mean_target_gap(corpus: &[EventSequence], domain: IntegrationDomain) -> f64 {
    let time: f64 = corpus.iter().map(|s| domain.end(s)).sum();
    let count: usize = corpus.iter().map(|s| s.target_times().len()).sum();
    if count == 0 {
        time.max(1.0)
    } else {
        time / count as f64
    }
}

/// Per-sequence designs over a fixed list of rule bodies, reused across fits.
#[derive(Debug, Clone)]
pub struct CorpusDesign {
    designs: Vec<Design>,
    target_count: usize,
    total_time: f64,
}

impl CorpusDesign {
    pub fn build(corpus: &[EventSequence], bodies: &[&RuleBody], hyper: &Hyperparams, domain: IntegrationDomain) -> Self {
        let designs: Vec<Design> = corpus
            .par_iter()
            .map(|s| {
                let end = domain.end(s);
                let targets: Vec<f64> = s.target_times().into_iter().filter(|&t| t <= end).collect();
                Design::build(s, bodies, hyper, &targets, 0.0, end, &[])
            })
            .collect();
        let target_count = designs.iter().map(Design::n_targets).sum();
        let total_time = corpus.iter().map(|s| domain.end(s)).sum();
        CorpusDesign {
            designs,
            target_count,
            total_time,
        }
    }

    pub fn len(&self) -> usize {
        self.designs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.designs.is_empty()
    }

    /// Mean NLL and, optionally, its gradient.
    pub fn mean_nll(&self, params: &ModelParams, rule_cols: &[usize], want_grad: bool) -> (f64, Vec<f64>) {
        let dim = params.dim();
        let parts: Vec<(f64, Vec<f64>)> = self
            .designs
            .par_iter()
            .map(|d| {
                let c = d.coefs(params, rule_cols);
                if want_grad {
                    let mut g = vec![0.0; dim];
                    let v = d.eval(&c, Some(&mut g));
                    (v.total, g)
                } else {
                    (d.eval(&c, None).total, Vec::new())
                }
            })
            .collect();
        let n = self.designs.len() as f64;
        let mut total = 0.0;
        let mut grad = vec![0.0; if want_grad { dim } else { 0 }];
        for (v, g) in &parts {
            total += v;
            for (acc, x) in grad.iter_mut().zip(g) {
                *acc += x;
            }
        }
        grad.iter_mut().for_each(|x| *x /= n);
        (total / n, grad)
    }

    /// Rule-free Poisson starting point: `softplus(lambda0)` equals the empirical target rate.
    pub fn initial_lambda0(&self, gamma: f64) -> f64 {
        let rate = if self.total_time > 0.0 {
            (self.target_count as f64 / self.total_time).max(1e-6)
        } else {
            1.0
        };
        softplus_inverse(rate, gamma)
    }
}

/// Outcome of one optimizer run.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub params: ModelParams,
    pub train_nll: f64,
    pub epochs_run: usize,
    pub loss_history: Vec<f64>,
}

fn penalized(design: &CorpusDesign, params: &ModelParams, rule_cols: &[usize], l2: f64) -> (f64, f64, Vec<f64>) {
    let (nll, mut g) = design.mean_nll(params, rule_cols, true);
    let j = params.alpha.len();
    let mut pen = 0.0;
    for (i, &a) in params.alpha.iter().enumerate() {
        pen += a * a;
        g[1 + i] += 2.0 * l2 * a;
    }
    for (i, &b) in params.beta.iter().enumerate() {
        pen += b * b;
        g[1 + j + i] += 2.0 * l2 * b;
    }
    (nll + l2 * pen, nll, g)
}

fn first_non_finite(params: &ModelParams, v: &[f64]) -> Option<String> {
    v.iter().position(|x| !x.is_finite()).map(|i| params.param_name(i))
}

/// Runs the optimizer from `init` on a prebuilt design.
pub fn optimize(design: &CorpusDesign, rule_cols: &[usize], init: ModelParams, config: &FitConfig) -> Result<FitOutcome> {
    config.validate()?;
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    let mut params = init;
    let (mut loss, mut nll, mut grad) = penalized(design, &params, rule_cols, config.l2_weight);
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            parameter: "objective".into(),
            epoch: 0,
        });
    }
    if let Some(p) = first_non_finite(&params, &grad) {
        return Err(Error::NonFinite { parameter: p, epoch: 0 });
    }
    let dim = params.dim();
    let mut theta = params.to_vec();
    let mut m = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    let mut lr = config.learning_rate;
    let mut history = vec![loss];
    let mut epochs = 0;
    let mut step = 0i32;
    let mut trial = params.clone();

    'epochs: while epochs < config.max_epochs {
        epochs += 1;
        step += 1;
        let bc1 = 1.0 - BETA1.powi(step);
        let bc2 = 1.0 - BETA2.powi(step);
        let mut dir = vec![0.0; dim];
        for i in 0..dim {
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
            dir[i] = (m[i] / bc1) / ((v[i] / bc2).sqrt() + EPS);
        }
        // halve the step until the objective does not increase
        let full = lr;
        let mut restarted = false;
        loop {
            let cand: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t - lr * d).collect();
            trial.set_from_slice(&cand);
            let (cand_loss, cand_nll, cand_grad) = penalized(design, &trial, rule_cols, config.l2_weight);
            if cand_loss.is_finite() && cand_loss <= loss {
                if let Some(p) = first_non_finite(&trial, &cand_grad) {
                    return Err(Error::NonFinite { parameter: p, epoch: epochs });
                }
                let change = (loss - cand_loss) / loss.abs().max(1.0);
                theta = cand;
                loss = cand_loss;
                nll = cand_nll;
                grad = cand_grad;
                history.push(loss);
                // a shortened step says nothing about convergence
                let converged = lr == full && change < config.convergence_tol;
                lr = (2.0 * lr).min(config.learning_rate);
                if converged {
                    break 'epochs;
                }
                break;
            }
            if !restarted {
                // momentum points uphill: restart it from the current gradient
                restarted = true;
                for i in 0..dim {
                    m[i] = grad[i] * bc1;
                    dir[i] = grad[i] / ((v[i] / bc2).sqrt() + EPS);
                }
                continue;
            }
            lr *= 0.5;
            if lr < config.learning_rate * 1e-6 {
                history.push(loss);
                break 'epochs;
            }
        }
    }
    params.set_from_slice(&theta);
    Ok(FitOutcome {
        params,
        train_nll: nll,
        epochs_run: epochs,
        loss_history: history,
    })
}

/// Fits `rules` to `corpus`.
pub fn fit(corpus: &[EventSequence], rules: &RuleSet, options: &ModelOptions, config: &FitConfig) -> Result<FittedModel> {
    check_corpus(corpus, rules)?;
    let num_types = corpus[0].num_types();
    let bodies: Vec<&RuleBody> = rules.rules().iter().map(|r| r.body()).collect();
    let design = CorpusDesign::build(corpus, &bodies, &options.hyper, options.domain);
    let mut init = ModelParams::new(rules, num_types, options.hyper, options.mask_policy)?;
    init.lambda0 = design.initial_lambda0(init.gamma());
    let cols: Vec<usize> = (0..rules.len()).collect();
    let out = optimize(&design, &cols, init, config)?;
    // report the NLL through the same path evaluation uses
    let model = FittedModel {
        rules: rules.clone(),
        params: out.params,
        domain: options.domain,
        num_types,
        target_type: corpus[0].target_type(),
        train_nll: 0.0,
        epochs_run: out.epochs_run,
        config: config.clone(),
        loss_history: out.loss_history,
        mean_target_gap: mean_target_gap(corpus, options.domain),
        corpus: CorpusFingerprint::of(corpus),
    };
    let train_nll = model.mean_nll(corpus)?;
    Ok(FittedModel { train_nll, ..model })
}

/// Intensity after `t_from` when no further events arrive:
/// `softplus(lambda0 + a_r exp(-w_r s) + a_n exp(-w_n s))`, `s = t - t_from`.
#[derive(Debug, Clone, Copy)]
pub struct Continuation {
    pub lambda0: f64,
    pub rule_part: f64,
    pub num_part: f64,
    pub rule_decay: f64,
    pub num_decay: f64,
    pub gamma: f64,
}

impl Continuation {
    /// Freezes the history of `history` at `t_from` (events at `t_from` included).
    pub fn new(model: &FittedModel, history: &EventSequence, t_from: f64) -> Result<Self> {
        let past = history.history_until(t_from);
        let ctx = model.context(&past)?;
        let rule_part: f64 = ctx.rule_contributions(t_from).iter().sum();
        let num_part = ctx.preactivation_at(t_from) - model.params.lambda0 - rule_part;
        Ok(Continuation {
            lambda0: model.params.lambda0,
            rule_part,
            num_part,
            rule_decay: model.params.hyper.rule_decay,
            num_decay: model.params.hyper.num_decay,
            gamma: model.params.gamma(),
        })
    }

    #[inline]
    pub fn rate(&self, s: f64) -> f64 {
        softplus(
            self.lambda0 + self.rule_part * (-self.rule_decay * s).exp() + self.num_part * (-self.num_decay * s).exp(),
            self.gamma,
        )
    }

    fn step_width(&self, s: f64) -> f64 {
        (1.0 / self.rule_decay.max(self.num_decay)).min(1.0 / self.rate(s))
    }

    /// `int_a^b rate`, on one Gauss–Legendre panel.
    fn panel_integral(&self, a: f64, b: f64) -> f64 {
        panel_nodes(b - a).map(|(s, w)| w * self.rate(a + s)).sum()
    }

    /// `int_0^s rate`.
    pub fn cumulative(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        let mut a = 0.0;
        while a < s {
            let b = (a + self.step_width(a)).min(s);
            acc += self.panel_integral(a, b);
            a = b;
        }
        acc
    }
}

/// `p(t_query | H_{t_from}) = lambda(t_query) exp(-int_{t_from}^{t_query} lambda)`.
pub fn next_event_density(model: &FittedModel, history: &EventSequence, t_from: f64, t_query: f64) -> Result<f64> {
    let c = Continuation::new(model, history, t_from)?;
    let s = (t_query - t_from).max(0.0);
    Ok(c.rate(s) * (-c.cumulative(s)).exp())
}

/// Survival `P(no target event in (t_from, t])`.
pub fn survival(model: &FittedModel, history: &EventSequence, t_from: f64, t: f64) -> Result<f64> {
    let c = Continuation::new(model, history, t_from)?;
    Ok((-c.cumulative((t - t_from).max(0.0))).exp())
}

const SURVIVAL_CUTOFF: f64 = 1e-6;
const MAX_GAPS: f64 = 1e6;

/// Expected next target time `E[t] = t_from + int_0^inf S(s) ds`.
///
/// The survival integral is accumulated panel by panel until `S < 1e-6`; the
/// remaining tail is closed with the exponential tail `S(s_end) / lambda(s_end)`.
pub fn predict_next_time(model: &FittedModel, history: &EventSequence, t_from: f64) -> Result<f64> {
    let c = Continuation::new(model, history, t_from)?;
    let limit = MAX_GAPS * model.mean_target_gap.max(f64::MIN_POSITIVE);
    let mut s = 0.0;
    let mut cum: f64 = 0.0;
    let mut expect = 0.0;
    loop {
        let surv = (-cum).exp();
        if surv < SURVIVAL_CUTOFF {
            expect += surv / c.rate(s);
            break;
        }
        if s > limit {
            return Err(Error::DivergentPrediction { horizon: t_from + s });
        }
        let h = c.step_width(s);
        // survival at each node needs the cumulative rate up to that node
        for (off, w) in panel_nodes(h) {
            let inner = c.panel_integral(s, s + off);
            expect += w * (-(cum + inner)).exp();
        }
        cum += c.panel_integral(s, s + h);
        s += h;
    }
    Ok(t_from + expect)
}

/// Draws the next target time by inverting the survival function, using `u`
/// in `(0, 1)` as the uniform variate.
pub fn sample_next_time(model: &FittedModel, history: &EventSequence, t_from: f64, u: f64) -> Result<f64> {
    let c = Continuation::new(model, history, t_from)?;
    let goal = -u.ln();
    let limit = MAX_GAPS * model.mean_target_gap.max(f64::MIN_POSITIVE);
    let mut s = 0.0;
    let mut cum = 0.0;
    loop {
        if s > limit {
            return Err(Error::DivergentPrediction { horizon: t_from + s });
        }
        let h = c.step_width(s);
        let piece = c.panel_integral(s, s + h);
        if cum + piece >= goal {
            let (mut lo, mut hi) = (0.0, h);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if cum + c.panel_integral(s, s + mid) < goal {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Ok(t_from + s + 0.5 * (lo + hi));
        }
        cum += piece;
        s += h;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Event, Rule, RuleBody as B};

    fn poisson_model(rate: f64) -> FittedModel {
        let rules = RuleSet::unbounded(1);
        let mut params = ModelParams::new(&rules, 1, Hyperparams::default(), MaskPolicy::Rules).unwrap();
        params.lambda0 = softplus_inverse(rate, 1.0);
        FittedModel {
            rules,
            params,
            domain: IntegrationDomain::Horizon,
            num_types: 1,
            target_type: 1,
            train_nll: 0.0,
            epochs_run: 0,
            config: FitConfig::default(),
            loss_history: vec![],
            mean_target_gap: 1.0 / rate,
            corpus: CorpusFingerprint::default(),
        }
    }

    fn empty_history() -> EventSequence {
        EventSequence::new(vec![], 1.0, 1, 1).unwrap()
    }

    #[test]
    fn constant_rate_prediction() {
        let m = poisson_model(2.0);
        let t = predict_next_time(&m, &empty_history(), 0.0).unwrap();
        assert!((t - 0.5).abs() < 1e-8, "{t}");
        let t = predict_next_time(&m, &empty_history(), 3.0).unwrap();
        assert!((t - 3.5).abs() < 1e-8, "{t}");
    }

    #[test]
    fn constant_rate_density() {
        let m = poisson_model(2.0);
        let h = empty_history();
        for tau in [0.0, 0.3, 1.7] {
            let d = next_event_density(&m, &h, 1.0, 1.0 + tau).unwrap();
            assert!((d - 2.0 * (-2.0 * tau).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn density_normalizes() {
        let m = poisson_model(0.8);
        let h = empty_history();
        let total = crate::quadrature::integrate(|t| next_event_density(&m, &h, 0.0, t).unwrap(), 0.0, 50.0 / 0.8, 0.5);
        assert!((0.99..=1.0 + 1e-9).contains(&total), "{total}");
    }

    #[test]
    fn inverse_cdf_sampling_matches_quantiles() {
        let m = poisson_model(2.0);
        let t = sample_next_time(&m, &empty_history(), 0.0, 0.5).unwrap();
        assert!((t - 2f64.ln() / 2.0).abs() < 1e-9);
    }

    #[test]
    fn divergent_prediction_reported() {
        let mut m = poisson_model(1.0);
        m.params.lambda0 = -800.0;
        m.mean_target_gap = 1e-3;
        assert!(matches!(
            predict_next_time(&m, &empty_history(), 0.0),
            Err(Error::DivergentPrediction { .. })
        ));
    }

    #[test]
    fn zero_epochs_returns_initial() {
        let seq = EventSequence::new(vec![Event::new(1.0, 1, 0.0), Event::new(2.0, 1, 0.0)], 4.0, 1, 1).unwrap();
        let cfg = FitConfig {
            max_epochs: 0,
            ..FitConfig::default()
        };
        let m = fit(std::slice::from_ref(&seq), &RuleSet::unbounded(1), &ModelOptions::default(), &cfg).unwrap();
        assert_eq!(m.epochs_run, 0);
        assert!((softplus(m.params.lambda0, 1.0) - 0.5).abs() < 1e-12);
        assert_eq!(m.loss_history.len(), 1);
        let direct = -2.0 * 0.5f64.ln() + 0.5 * 4.0;
        assert!((m.train_nll - direct).abs() < 1e-10);
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(
            fit(&[], &RuleSet::unbounded(1), &ModelOptions::default(), &FitConfig::default()),
            Err(Error::EmptyCorpus)
        ));
        let a = EventSequence::new(vec![], 1.0, 2, 2).unwrap();
        let b = EventSequence::new(vec![], 1.0, 3, 2).unwrap();
        assert!(matches!(
            fit(&[a.clone(), b], &RuleSet::unbounded(2), &ModelOptions::default(), &FitConfig::default()),
            Err(Error::CorpusMismatch(_))
        ));
        let wrong_target = RuleSet::from_rules(1, [Rule::new(B::leaf(2), 1, 3).unwrap()]).unwrap();
        assert!(fit(&[a], &wrong_target, &ModelOptions::default(), &FitConfig::default()).is_err());
    }

    #[test]
    fn objective_never_increases() {
        let events: Vec<Event> = (0..30)
            .map(|i| Event::new(0.3 * i as f64, if i % 3 == 0 { 2 } else { 1 }, 1.0))
            .collect();
        let seq = EventSequence::new(events, 10.0, 2, 2).unwrap();
        let rules = RuleSet::from_rules(2, [Rule::new(B::leaf(1), 2, 3).unwrap()]).unwrap();
        let m = fit(&[seq], &rules, &ModelOptions::default(), &FitConfig::default()).unwrap();
        assert!(m.loss_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(m.loss_history.last().unwrap() <= &m.loss_history[0]);
    }
}
