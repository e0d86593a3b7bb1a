//! Domain types: events, sequences, temporal relations, rules and parameters.
//!
//! Event types are dense 1-based integers `1..=K`. Human-readable predicate
//! names live only at the IO boundary (see [`crate::dsl::NameTable`]).

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default bound on the number of predicates in one rule body.
pub const DEFAULT_MAX_PREDICATES: usize = 3;

/// A single observation `(t, k, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    #[serde(rename = "t")]
    pub time: f64,
    #[serde(rename = "k")]
    pub event_type: u32,
    #[serde(rename = "v")]
    pub value: f64,
}

impl Event {
    pub fn new(time: f64, event_type: u32, value: f64) -> Self {
        Event {
            time,
            event_type,
            value,
        }
    }
}

/// A time-ordered stream of events observed on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSequence {
    events: Vec<Event>,
    horizon: f64,
    num_types: u32,
    target_type: u32,
}

impl EventSequence {
    /// Validates and builds a sequence. Events must already be sorted by time.
    pub fn new(events: Vec<Event>, horizon: f64, num_types: u32, target_type: u32) -> Result<Self> {
        if num_types == 0 {
            return Err(Error::InvalidSequence("num_types must be positive".into()));
        }
        if target_type == 0 || target_type > num_types {
            return Err(Error::InvalidSequence(format!(
                "target_type {target_type} outside 1..={num_types}"
            )));
        }
        if !horizon.is_finite() || horizon < 0.0 {
            return Err(Error::InvalidSequence(format!("horizon {horizon} must be finite and >= 0")));
        }
        let mut prev = 0.0f64;
        for (i, ev) in events.iter().enumerate() {
            if !ev.time.is_finite() || ev.time < 0.0 {
                return Err(Error::InvalidEvent(format!("event {i}: time {} must be finite and >= 0", ev.time)));
            }
            if ev.event_type == 0 || ev.event_type > num_types {
                return Err(Error::InvalidEvent(format!(
                    "event {i}: type {} outside 1..={num_types}",
                    ev.event_type
                )));
            }
            if !ev.value.is_finite() {
                return Err(Error::InvalidEvent(format!("event {i}: non-finite value")));
            }
            if ev.time < prev {
                return Err(Error::InvalidSequence(format!(
                    "events not sorted: event {i} at t = {} precedes t = {prev}",
                    ev.time
                )));
            }
            prev = ev.time;
        }
        if prev > horizon {
            return Err(Error::InvalidSequence(format!(
                "horizon {horizon} precedes last event at t = {prev}"
            )));
        }
        Ok(EventSequence {
            events,
            horizon,
            num_types,
            target_type,
        })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn num_types(&self) -> u32 {
        self.num_types
    }

    pub fn target_type(&self) -> u32 {
        self.target_type
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Occurrence times of one event type, sorted.
    pub fn times_of(&self, event_type: u32) -> Vec<f64> {
        self.events
            .iter()
            .filter(|e| e.event_type == event_type)
            .map(|e| e.time)
            .collect()
    }

    pub fn target_times(&self) -> Vec<f64> {
        self.times_of(self.target_type)
    }

    pub fn last_time(&self) -> Option<f64> {
        self.events.last().map(|e| e.time)
    }

    /// Events with `time <= t`, observed up to horizon `t`.
    pub fn history_until(&self, t: f64) -> EventSequence {
        let end = self.events.partition_point(|e| e.time <= t);
        EventSequence {
            events: self.events[..end].to_vec(),
            horizon: t.max(0.0),
            num_types: self.num_types,
            target_type: self.target_type,
        }
    }

    /// Events with `time < t`, observed up to horizon `t`.
    pub fn history_before(&self, t: f64) -> EventSequence {
        let end = self.events.partition_point(|e| e.time < t);
        EventSequence {
            events: self.events[..end].to_vec(),
            horizon: t.max(0.0),
            num_types: self.num_types,
            target_type: self.target_type,
        }
    }
}

/// Relation between two sub-formulas. `after` is not a separate kind: it is
/// rewritten as `before` with swapped operands when parsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    And,
    Before,
    Equal,
}

impl Relation {
    pub const ALL: [Relation; 3] = [Relation::And, Relation::Before, Relation::Equal];

    pub fn is_symmetric(self) -> bool {
        !matches!(self, Relation::Before)
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Relation::And => "and",
            Relation::Before => "before",
            Relation::Equal => "equal",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// Rule body: a binary tree of relations over predicate leaves.
///
/// The derived ordering (leaves before nodes, then by content) is the order
/// used to sort operands of symmetric relations.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RuleBody {
    Leaf(u32),
    Node {
        relation: Relation,
        left: Box<RuleBody>,
        right: Box<RuleBody>,
    },
}

impl RuleBody {
    pub fn leaf(event_type: u32) -> Self {
        RuleBody::Leaf(event_type)
    }

    pub fn node(relation: Relation, left: RuleBody, right: RuleBody) -> Self {
        RuleBody::Node {
            relation,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn and(left: RuleBody, right: RuleBody) -> Self {
        Self::node(Relation::And, left, right)
    }

    pub fn before(left: RuleBody, right: RuleBody) -> Self {
        Self::node(Relation::Before, left, right)
    }

    pub fn equal(left: RuleBody, right: RuleBody) -> Self {
        Self::node(Relation::Equal, left, right)
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            RuleBody::Leaf(_) => 1,
            RuleBody::Node { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    /// Leaves in left-to-right order, repeats included.
    pub fn leaves(&self) -> Vec<u32> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<u32>) {
        match self {
            RuleBody::Leaf(k) => out.push(*k),
            RuleBody::Node { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }

    pub fn contains(&self, event_type: u32) -> bool {
        match self {
            RuleBody::Leaf(k) => *k == event_type,
            RuleBody::Node { left, right, .. } => left.contains(event_type) || right.contains(event_type),
        }
    }

    /// Canonical form: operands of `and`/`equal` sorted, bottom-up.
    pub fn canonical(&self) -> RuleBody {
        match self {
            RuleBody::Leaf(k) => RuleBody::Leaf(*k),
            RuleBody::Node { relation, left, right } => {
                let mut l = left.canonical();
                let mut r = right.canonical();
                if relation.is_symmetric() && r.cmp(&l) == Ordering::Less {
                    std::mem::swap(&mut l, &mut r);
                }
                RuleBody::node(*relation, l, r)
            }
        }
    }

    pub fn is_canonical(&self) -> bool {
        *self == self.canonical()
    }
}

/// A temporal logic rule `body -> target`, always held in canonical form.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rule {
    body: RuleBody,
    target: u32,
}

impl Rule {
    pub fn new(body: RuleBody, target: u32, max_predicates: usize) -> Result<Self> {
        let leaves = body.leaf_count();
        if leaves == 0 || leaves > max_predicates {
            return Err(Error::InvalidRule(format!(
                "rule has {leaves} predicates, allowed 1..={max_predicates}"
            )));
        }
        let all = body.leaves();
        if all.contains(&0) {
            return Err(Error::InvalidRule("predicate id 0 is not a valid event type".into()));
        }
        if all.contains(&target) {
            return Err(Error::InvalidRule(format!("target type {target} appears in the rule body")));
        }
        Ok(Rule {
            body: body.canonical(),
            target,
        })
    }

    pub fn body(&self) -> &RuleBody {
        &self.body
    }

    pub fn target(&self) -> u32 {
        self.target
    }

    pub fn leaf_count(&self) -> usize {
        self.body.leaf_count()
    }

    /// Checks that every leaf is a valid type for `num_types`.
    pub fn check_types(&self, num_types: u32) -> Result<()> {
        if let Some(k) = self.body.leaves().into_iter().find(|&k| k > num_types) {
            return Err(Error::InvalidRule(format!("predicate {k} outside 1..={num_types}")));
        }
        if self.target > num_types {
            return Err(Error::InvalidRule(format!("target {} outside 1..={num_types}", self.target)));
        }
        Ok(())
    }
}

/// Rewrites a rule into canonical form. Idempotent.
pub fn canonicalize_rule(rule: &Rule) -> Rule {
    Rule {
        body: rule.body.canonical(),
        target: rule.target,
    }
}

/// An ordered set of distinct rules sharing one target.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleSet {
    rules: Vec<Rule>,
    target: u32,
    max_size: usize,
}

impl RuleSet {
    pub fn new(target: u32, max_size: usize) -> Self {
        RuleSet {
            rules: Vec::new(),
            target,
            max_size,
        }
    }

    /// A rule set without a size cap.
    pub fn unbounded(target: u32) -> Self {
        Self::new(target, usize::MAX)
    }

    pub fn from_rules(target: u32, rules: impl IntoIterator<Item = Rule>) -> Result<Self> {
        let mut set = Self::unbounded(target);
        for r in rules {
            set.insert(r)?;
        }
        Ok(set)
    }

    /// Inserts a rule; returns `false` when an equal rule is already present.
    pub fn insert(&mut self, rule: Rule) -> Result<bool> {
        if rule.target != self.target {
            return Err(Error::InvalidRule(format!(
                "rule target {} differs from rule set target {}",
                rule.target, self.target
            )));
        }
        let rule = canonicalize_rule(&rule);
        if self.rules.contains(&rule) {
            return Ok(false);
        }
        if self.rules.len() >= self.max_size {
            return Err(Error::InvalidRule(format!("rule set is full ({} rules)", self.max_size)));
        }
        self.rules.push(rule);
        Ok(true)
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn target(&self) -> u32 {
        self.target
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn contains(&self, rule: &Rule) -> bool {
        self.rules.contains(&canonicalize_rule(rule))
    }

    pub fn check_types(&self, num_types: u32) -> Result<()> {
        self.rules.iter().try_for_each(|r| r.check_types(num_types))
    }
}

/// `mask[k-1]` is true iff type `k` is a leaf of some rule.
pub fn recompute_mask(rules: &RuleSet, num_types: u32) -> Result<Vec<bool>> {
    let mut mask = vec![false; num_types as usize];
    for rule in rules.rules() {
        for k in rule.body().leaves() {
            if k == 0 || k > num_types {
                return Err(Error::InvalidRule(format!("predicate {k} outside 1..={num_types}")));
            }
            mask[(k - 1) as usize] = true;
        }
    }
    Ok(mask)
}

/// How the numeric-feature mask is derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskPolicy {
    /// Leaves of the rule set.
    #[default]
    Rules,
    /// Every non-target type.
    AllCovariates,
    /// Leaves of the rule set, or every non-target type when the set is empty.
    RulesOrAllCovariates,
    /// Numeric intensity disabled.
    Off,
}

impl MaskPolicy {
    pub fn mask(self, rules: &RuleSet, num_types: u32, target_type: u32) -> Result<Vec<bool>> {
        let all_cov = || (1..=num_types).map(|k| k != target_type).collect::<Vec<_>>();
        match self {
            MaskPolicy::Rules => recompute_mask(rules, num_types),
            MaskPolicy::AllCovariates => Ok(all_cov()),
            MaskPolicy::RulesOrAllCovariates if rules.is_empty() => Ok(all_cov()),
            MaskPolicy::RulesOrAllCovariates => recompute_mask(rules, num_types),
            MaskPolicy::Off => Ok(vec![false; num_types as usize]),
        }
    }
}

/// Fixed hyperparameters: matching tolerance and decay rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams {
    /// Tolerance for `before`/`equal`.
    pub delta: f64,
    /// Decay rate of the rule encoder kernel.
    pub rule_decay: f64,
    /// Decay rate of the numeric encoder kernel.
    pub num_decay: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            delta: 0.05,
            rule_decay: 1.0,
            num_decay: 1.0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("delta", self.delta),
            ("rule_decay", self.rule_decay),
            ("num_decay", self.num_decay),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Learnable parameters plus the fixed hyperparameters they are paired with.
///
/// Flat layout used by the optimizer: `[lambda0, alpha.., beta.., gamma_raw]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub lambda0: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma_raw: f64,
    pub hyper: Hyperparams,
    mask: Vec<bool>,
    mask_policy: MaskPolicy,
}

impl ModelParams {
    /// Zero-initialized parameters for `rules`, with the mask derived from `policy`.
    pub fn new(rules: &RuleSet, num_types: u32, hyper: Hyperparams, policy: MaskPolicy) -> Result<Self> {
        hyper.validate()?;
        rules.check_types(num_types)?;
        let mask = policy.mask(rules, num_types, rules.target())?;
        Ok(ModelParams {
            lambda0: 0.0,
            alpha: vec![0.0; rules.len()],
            beta: vec![0.0; num_types as usize],
            gamma_raw: 0.0,
            hyper,
            mask,
            mask_policy: policy,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma_raw.exp()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn mask_policy(&self) -> MaskPolicy {
        self.mask_policy
    }

    pub fn num_types(&self) -> usize {
        self.beta.len()
    }

    pub fn num_rules(&self) -> usize {
        self.alpha.len()
    }

    pub fn dim(&self) -> usize {
        2 + self.alpha.len() + self.beta.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.push(self.lambda0);
        v.extend_from_slice(&self.alpha);
        v.extend_from_slice(&self.beta);
        v.push(self.gamma_raw);
        v
    }

    pub fn set_from_slice(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.dim(), "parameter vector length");
        let j = self.alpha.len();
        let k = self.beta.len();
        self.lambda0 = v[0];
        self.alpha.copy_from_slice(&v[1..1 + j]);
        self.beta.copy_from_slice(&v[1 + j..1 + j + k]);
        self.gamma_raw = v[1 + j + k];
    }

    /// Human-readable name of flat parameter `i`.
    pub fn param_name(&self, i: usize) -> String {
        let j = self.alpha.len();
        let k = self.beta.len();
        match i {
            0 => "lambda0".into(),
            i if i <= j => format!("alpha[{}]", i - 1),
            i if i <= j + k => format!("beta[{}]", i - 1 - j),
            _ => "gamma_raw".into(),
        }
    }

    /// Checks that these parameters pair with `rules` over `num_types` types.
    pub fn check_pairing(&self, rules: &RuleSet, num_types: u32) -> Result<()> {
        if self.alpha.len() != rules.len() {
            return Err(Error::InvalidConfig(format!(
                "{} rule weights for {} rules",
                self.alpha.len(),
                rules.len()
            )));
        }
        if self.beta.len() != num_types as usize {
            return Err(Error::InvalidConfig(format!(
                "{} numeric weights for {num_types} types",
                self.beta.len()
            )));
        }
        let expect = self.mask_policy.mask(rules, num_types, rules.target())?;
        if expect != self.mask {
            return Err(Error::InvalidConfig("mask does not match rule set".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(k: u32) -> RuleBody {
        RuleBody::leaf(k)
    }

    #[test]
    fn equal_operands_are_sorted() {
        let r = Rule::new(RuleBody::equal(l(2), l(1)), 9, 3).unwrap();
        assert_eq!(r.body(), &RuleBody::equal(l(1), l(2)));
    }

    #[test]
    fn before_keeps_operand_order() {
        let r = Rule::new(RuleBody::before(l(2), l(1)), 9, 3).unwrap();
        assert_eq!(r.body(), &RuleBody::before(l(2), l(1)));
        let r = Rule::new(RuleBody::before(l(1), l(2)), 9, 3).unwrap();
        assert_eq!(canonicalize_rule(&r), r);
    }

    #[test]
    fn leaves_sort_before_nodes() {
        let body = RuleBody::and(RuleBody::before(l(1), l(2)), l(3));
        assert_eq!(body.canonical(), RuleBody::and(l(3), RuleBody::before(l(1), l(2))));
    }

    #[test]
    fn rule_validation() {
        assert!(Rule::new(RuleBody::before(l(1), l(9)), 9, 3).is_err());
        let four = RuleBody::and(RuleBody::and(l(1), l(2)), RuleBody::and(l(3), l(4)));
        assert!(Rule::new(four.clone(), 9, 3).is_err());
        assert!(Rule::new(four, 9, 4).is_ok());
        assert!(Rule::new(l(0), 9, 3).is_err());
        let three = RuleBody::and(RuleBody::and(l(1), l(2)), l(3));
        assert!(Rule::new(three, 9, 2).is_err());
    }

    #[test]
    fn repeated_predicates_are_allowed() {
        assert!(Rule::new(RuleBody::before(l(1), l(1)), 9, 3).is_ok());
    }

    #[test]
    fn duplicate_insert_is_noop() {
        let mut set = RuleSet::new(9, 4);
        assert!(set.insert(Rule::new(RuleBody::equal(l(1), l(2)), 9, 3).unwrap()).unwrap());
        assert!(!set.insert(Rule::new(RuleBody::equal(l(2), l(1)), 9, 3).unwrap()).unwrap());
        assert_eq!(set.len(), 1);
        assert!(set.insert(Rule::new(l(3), 8, 3).unwrap()).is_err());
    }

    #[test]
    fn rule_set_size_cap() {
        let mut set = RuleSet::new(9, 1);
        set.insert(Rule::new(l(1), 9, 3).unwrap()).unwrap();
        assert!(set.insert(Rule::new(l(2), 9, 3).unwrap()).is_err());
    }

    #[test]
    fn mask_examples() {
        let set = RuleSet::from_rules(9, [Rule::new(RuleBody::before(l(1), l(2)), 9, 3).unwrap()]).unwrap();
        assert_eq!(recompute_mask(&set, 4).unwrap(), vec![true, true, false, false]);

        let empty = RuleSet::unbounded(3);
        assert_eq!(recompute_mask(&empty, 3).unwrap(), vec![false, false, false]);

        let set = RuleSet::from_rules(
            9,
            [
                Rule::new(RuleBody::and(l(1), l(3)), 9, 3).unwrap(),
                Rule::new(RuleBody::equal(l(3), l(4)), 9, 3).unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(recompute_mask(&set, 5).unwrap(), vec![true, false, true, true, false]);
    }

    #[test]
    fn mask_rejects_out_of_range_leaf() {
        let set = RuleSet::from_rules(9, [Rule::new(l(7), 9, 3).unwrap()]).unwrap();
        assert!(matches!(recompute_mask(&set, 5), Err(Error::InvalidRule(_))));
    }

    #[test]
    fn mask_policies() {
        let empty = RuleSet::unbounded(2);
        assert_eq!(MaskPolicy::AllCovariates.mask(&empty, 3, 2).unwrap(), vec![true, false, true]);
        assert_eq!(MaskPolicy::RulesOrAllCovariates.mask(&empty, 3, 2).unwrap(), vec![true, false, true]);
        assert_eq!(MaskPolicy::Off.mask(&empty, 3, 2).unwrap(), vec![false; 3]);
        let one = RuleSet::from_rules(2, [Rule::new(l(3), 2, 3).unwrap()]).unwrap();
        assert_eq!(MaskPolicy::RulesOrAllCovariates.mask(&one, 3, 2).unwrap(), vec![false, false, true]);
    }

    #[test]
    fn sequence_validation() {
        let ok = EventSequence::new(vec![Event::new(0.5, 1, 1.0), Event::new(0.5, 2, 0.0)], 1.0, 2, 2);
        assert!(ok.is_ok());
        let unsorted = EventSequence::new(vec![Event::new(0.7, 1, 1.0), Event::new(0.5, 2, 0.0)], 1.0, 2, 2);
        assert!(unsorted.is_err());
        let bad_type = EventSequence::new(vec![Event::new(0.5, 3, 1.0)], 1.0, 2, 2);
        assert!(bad_type.is_err());
        let short = EventSequence::new(vec![Event::new(1.5, 1, 1.0)], 1.0, 2, 2);
        assert!(short.is_err());
        assert!(EventSequence::new(vec![], 1.0, 2, 3).is_err());
        assert!(EventSequence::new(vec![Event::new(-0.1, 1, 0.0)], 1.0, 2, 2).is_err());
    }

    #[test]
    fn param_vector_layout() {
        let set = RuleSet::from_rules(3, [Rule::new(l(1), 3, 3).unwrap()]).unwrap();
        let mut p = ModelParams::new(&set, 3, Hyperparams::default(), MaskPolicy::Rules).unwrap();
        p.set_from_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(p.lambda0, 1.0);
        assert_eq!(p.alpha, vec![2.0]);
        assert_eq!(p.beta, vec![3.0, 4.0, 5.0]);
        assert_eq!(p.gamma_raw, 6.0);
        assert_eq!(p.to_vec(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(p.param_name(1), "alpha[0]");
        assert_eq!(p.param_name(3), "beta[1]");
        assert_eq!(p.param_name(5), "gamma_raw");
        assert!(p.gamma() > 0.0);
    }
}
