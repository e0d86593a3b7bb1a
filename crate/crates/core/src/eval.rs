//! Held-out metrics and the numeric-feature ablation.
//!
//! RMSE is one-step-ahead: each target event after the first is predicted
//! from the history up to the previous target event, as the conditional
//! expectation of the next target time.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{csv_err, finish_csv, CorpusFingerprint};
use crate::mining::split_corpus;
use crate::model::{EventSequence, MaskPolicy, RuleSet};
use crate::simulation::{ScenarioSpec, Simulator};
use crate::training::{check_corpus, fit, predict_next_time, FitConfig, FittedModel, ModelOptions};

pub const EVAL_VERSION: u32 = 1;
pub const RMSE_PROTOCOL: &str = "one-step-ahead expectation from the previous target event";

/// Per-sequence detail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceDetail {
    pub index: usize,
    pub nll: f64,
    pub target_events: usize,
    /// Predictions made; zero when the sequence has fewer than two targets.
    pub predictions: usize,
    pub squared_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    /// Mean per-sequence NLL.
    pub nll: f64,
    /// `None` when no sequence had two target events.
    pub rmse: Option<f64>,
    pub rmse_protocol: String,
    pub predictions: usize,
    pub skipped_for_rmse: usize,
    /// Share of model rules that are true rules; `None` without ground truth.
    pub rule_accuracy: Option<f64>,
    /// Share of true rules the model contains.
    pub rule_recall: Option<f64>,
    pub model_corpus: CorpusFingerprint,
    pub test_corpus: CorpusFingerprint,
    pub details: Vec<SequenceDetail>,
}

impl EvalReport {
    /// One-row table with NLL, RMSE and accuracy columns.
    pub fn table(&self, label: &str) -> String {
        let fmt = |v: Option<f64>, d: usize| v.map_or("-".to_string(), |x| format!("{x:.d$}"));
        let mut s = String::new();
        let _ = writeln!(s, "{:<16} {:>10} {:>10} {:>8}", "Model", "NLL", "RMSE", "Acc");
        let _ = writeln!(
            s,
            "{:<16} {:>10} {:>10} {:>8}",
            label,
            format!("{:.4}", self.nll),
            fmt(self.rmse, 4),
            self.rule_accuracy.map_or("-".into(), |a| format!("{:.0}%", 100.0 * a))
        );
        s
    }

    /// Detail rows as CSV.
    pub fn details_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["index", "nll", "target_events", "predictions", "squared_error"])
            .map_err(csv_err)?;
        for d in &self.details {
            w.write_record([
                d.index.to_string(),
                d.nll.to_string(),
                d.target_events.to_string(),
                d.predictions.to_string(),
                d.squared_error.to_string(),
            ])
            .map_err(csv_err)?;
        }
        finish_csv(w)
    }
}

/// `|mined ∩ truth| / |mined|` under canonical equality; 0 with a warning for an empty mined set.
pub fn rule_accuracy(mined: &RuleSet, truth: &RuleSet) -> f64 {
    if mined.is_empty() {
        log::warn!("rule accuracy of an empty rule set is taken as 0");
        return 0.0;
    }
    let hits = mined.rules().iter().filter(|r| truth.contains(r)).count();
    hits as f64 / mined.len() as f64
}

/// `|mined ∩ truth| / |truth|`; 0 for an empty truth set.
pub fn rule_recall(mined: &RuleSet, truth: &RuleSet) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = truth.rules().iter().filter(|r| mined.contains(r)).count();
    hits as f64 / truth.len() as f64
}

fn sequence_detail(model: &FittedModel, index: usize, s: &EventSequence) -> Result<SequenceDetail> {
    let ctx = model.context(s)?;
    let targets = s.target_times();
    let nll = ctx.nll(&targets).total;
    let mut sq = 0.0;
    for w in targets.windows(2) {
        let err = predict_next_time(model, s, w[0])? - w[1];
        sq += err * err;
    }
    Ok(SequenceDetail {
        index,
        nll,
        target_events: targets.len(),
        predictions: targets.len().saturating_sub(1),
        squared_error: sq,
    })
}

/// NLL and RMSE of `model` on `test`, plus rule accuracy when `truth` is given.
pub fn evaluate(model: &FittedModel, test: &[EventSequence], truth: Option<&RuleSet>) -> Result<EvalReport> {
    check_corpus(test, &model.rules)?;
    if test[0].num_types() != model.num_types {
        return Err(Error::CorpusMismatch(format!(
            "model has {} types, corpus {}",
            model.num_types,
            test[0].num_types()
        )));
    }
    let details: Vec<SequenceDetail> = test
        .par_iter()
        .enumerate()
        .map(|(i, s)| sequence_detail(model, i, s))
        .collect::<Result<_>>()?;
    let nll = details.iter().map(|d| d.nll).sum::<f64>() / details.len() as f64;
    let predictions: usize = details.iter().map(|d| d.predictions).sum();
    let sq: f64 = details.iter().map(|d| d.squared_error).sum();
    let rmse = (predictions > 0).then(|| (sq / predictions as f64).sqrt());
    Ok(EvalReport {
        format_version: EVAL_VERSION,
        nll,
        rmse,
        rmse_protocol: RMSE_PROTOCOL.to_string(),
        predictions,
        skipped_for_rmse: details.iter().filter(|d| d.predictions == 0).count(),
        rule_accuracy: truth.map(|t| rule_accuracy(&model.rules, t)),
        rule_recall: truth.map(|t| rule_recall(&model.rules, t)),
        model_corpus: model.corpus.clone(),
        test_corpus: CorpusFingerprint::of(test),
        details,
    })
}

/// Held-out NLL of the four ablation cells.
///
/// Category I has no rules; Category II uses the scenario's planted rules.
/// "With NFA" keeps the numeric term (every covariate in Category I, the rule
/// predicates in Category II); "without NFA" drops it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub category_i_with_nfa: f64,
    pub category_i_without_nfa: f64,
    pub category_ii_with_nfa: f64,
    pub category_ii_without_nfa: f64,
}

impl AblationGrid {
    /// With-NFA NLL below without-NFA NLL in both categories.
    pub fn nfa_helps(&self) -> bool {
        self.category_i_with_nfa < self.category_i_without_nfa && self.category_ii_with_nfa < self.category_ii_without_nfa
    }

    /// Largest `|with - without|` over the two categories.
    pub fn max_gap(&self) -> f64 {
        (self.category_i_with_nfa - self.category_i_without_nfa)
            .abs()
            .max((self.category_ii_with_nfa - self.category_ii_without_nfa).abs())
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<12} {:>12} {:>12}", "", "with NFA", "without NFA");
        let _ = writeln!(
            s,
            "{:<12} {:>12.4} {:>12.4}",
            "Category I", self.category_i_with_nfa, self.category_i_without_nfa
        );
        let _ = writeln!(
            s,
            "{:<12} {:>12.4} {:>12.4}",
            "Category II", self.category_ii_with_nfa, self.category_ii_without_nfa
        );
        s
    }
}

/// Simulates `scenario`, splits it 80/20 with `config.seed` and fits the four cells.
pub fn run_ablation(scenario: &ScenarioSpec, config: &FitConfig) -> Result<AblationGrid> {
    let sim = Simulator::new(scenario)?;
    let corpus = sim.corpus()?;
    let (train, test) = split_corpus(&corpus, 0.2, config.seed);
    let truth = &sim.truth().rules;
    let empty = RuleSet::unbounded(scenario.target_type);
    let cell = |name: &str, rules: &RuleSet, mask_policy: MaskPolicy| -> Result<f64> {
        let options = ModelOptions {
            hyper: scenario.hyper,
            mask_policy,
            ..ModelOptions::default()
        };
        fit(&train, rules, &options, config)
            .and_then(|m| m.mean_nll(&test))
            .map_err(|e| Error::InCell {
                cell: name.to_string(),
                source: Box::new(e),
            })
    };
    Ok(AblationGrid {
        category_i_with_nfa: cell("Category I with NFA", &empty, MaskPolicy::AllCovariates)?,
        category_i_without_nfa: cell("Category I without NFA", &empty, MaskPolicy::Off)?,
        category_ii_with_nfa: cell("Category II with NFA", truth, MaskPolicy::RulesOrAllCovariates)?,
        category_ii_without_nfa: cell("Category II without NFA", truth, MaskPolicy::Off)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intensity::softplus_inverse;
    use crate::model::{Rule, RuleBody as B};
    use crate::simulation::simulate_corpus;

    fn r(body: B) -> Rule {
        Rule::new(body, 9, 3).unwrap()
    }

    #[test]
    fn accuracy_cases() {
        let truth = RuleSet::from_rules(9, (1..=8).map(|k| r(B::leaf(k)))).unwrap();
        assert_eq!(rule_accuracy(&truth, &truth), 1.0);
        let other = RuleSet::from_rules(9, [r(B::and(B::leaf(1), B::leaf(2)))]).unwrap();
        assert_eq!(rule_accuracy(&other, &truth), 0.0);
        let mut mined: Vec<Rule> = truth.rules().to_vec();
        mined.push(r(B::before(B::leaf(1), B::leaf(2))));
        mined.push(r(B::before(B::leaf(2), B::leaf(1))));
        let mined = RuleSet::from_rules(9, mined).unwrap();
        assert_eq!(mined.len(), 10);
        assert!((rule_accuracy(&mined, &truth) - 0.8).abs() < 1e-15);
        assert_eq!(rule_recall(&mined, &truth), 1.0);
        assert_eq!(rule_accuracy(&RuleSet::unbounded(9), &truth), 0.0);
    }

    #[test]
    fn accuracy_ignores_order() {
        let a = RuleSet::from_rules(9, [r(B::leaf(1)), r(B::leaf(2)), r(B::leaf(3))]).unwrap();
        let b = RuleSet::from_rules(9, [r(B::leaf(3)), r(B::leaf(1))]).unwrap();
        assert_eq!(rule_accuracy(&a, &b), rule_accuracy(&RuleSet::from_rules(9, a.rules().iter().rev().cloned()).unwrap(), &b));
    }

    #[test]
    fn empty_test_corpus_is_an_error() {
        let spec = ScenarioSpec::new(1, 1, 0.0, 5.0, 5, 1);
        let (c, _) = simulate_corpus(&spec).unwrap();
        let m = fit(&c, &RuleSet::unbounded(1), &ModelOptions::default(), &FitConfig::default()).unwrap();
        assert!(matches!(evaluate(&m, &[], None), Err(Error::EmptyCorpus)));
        let rep = evaluate(&m, &c, None).unwrap();
        assert!((rep.nll - m.train_nll).abs() < 1e-9);
        assert!(rep.rule_accuracy.is_none());
        assert_eq!(evaluate(&m, &c, None).unwrap(), rep);
    }

    #[test]
    fn constant_rate_rmse_matches_exponential_sd() {
        let c = 2.0;
        let spec = ScenarioSpec::new(1, 1, softplus_inverse(c, 1.0), 10.0, 2000, 5);
        let (corpus, _) = simulate_corpus(&spec).unwrap();
        let m = fit(&corpus, &RuleSet::unbounded(1), &ModelOptions::default(), &FitConfig::default()).unwrap();
        let rep = evaluate(&m, &corpus, None).unwrap();
        let mse = rep.rmse.unwrap().powi(2);
        assert!((mse - 1.0 / (c * c)).abs() < 0.1 / (c * c), "{mse}");
    }

    #[test]
    fn category_ii_without_rules_matches_category_i() {
        let spec = ScenarioSpec::new(3, 3, 0.0, 5.0, 30, 4)
            .with_uniform_covariates(1.0, crate::simulation::ValueDist::Normal { mean: 0.0, std: 1.0 })
            .with_beta(vec![0.5, 0.5, 0.0]);
        let cfg = FitConfig { max_epochs: 50, ..FitConfig::default() };
        let g = run_ablation(&spec, &cfg).unwrap();
        assert_eq!(g.category_i_with_nfa, g.category_ii_with_nfa);
        assert_eq!(g.category_i_without_nfa, g.category_ii_without_nfa);
        assert!(g.table().contains("Category II"));
    }
}
