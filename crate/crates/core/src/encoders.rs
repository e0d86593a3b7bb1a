//! Rule trigger extraction and the decayed signals fed to the intensity.
//!
//! A rule body is evaluated bottom-up. Each subtree yields the sorted list of
//! times at which it becomes satisfied:
//!
//! * a leaf `X_k` is satisfied at every occurrence of type `k`;
//! * `A before B` fires at a satisfaction of `B` when an unused satisfaction of
//!   `A` lies more than `delta` earlier (`t_a - t_b < -delta`);
//! * `A equal B` fires when satisfactions of the two sides fall within
//!   `delta` of each other (`|t_a - t_b| <= delta`), at the later of the two;
//! * `A and B` fires when both sides have been satisfied, at the later time.
//!
//! Every satisfaction is used by at most one firing. Matching is greedy in
//! time order and always consumes the oldest eligible partner.

use std::collections::VecDeque;

use crate::model::{EventSequence, Relation, RuleBody};

/// Times at which a subtree becomes satisfied, sorted, repeats kept.
pub fn satisfaction_time(body: &RuleBody, sequence: &EventSequence, delta: f64) -> Vec<f64> {
    match body {
        RuleBody::Leaf(k) => sequence.times_of(*k),
        RuleBody::Node { relation, left, right } => {
            let a = satisfaction_time(left, sequence, delta);
            let b = satisfaction_time(right, sequence, delta);
            combine(*relation, &a, &b, delta)
        }
    }
}

/// Applies one relation to the satisfaction lists of its operands.
pub fn combine(relation: Relation, a: &[f64], b: &[f64], delta: f64) -> Vec<f64> {
    match relation {
        Relation::Before => match_before(a, b, delta),
        Relation::Equal => match_window(a, b, |ta, tb| (ta - tb).abs() <= delta),
        Relation::And => match_window(a, b, |_, _| true),
    }
}

fn match_before(a: &[f64], b: &[f64], delta: f64) -> Vec<f64> {
    // Eligible A-satisfactions only accumulate as t_b grows, so a count suffices.
    let mut out = Vec::new();
    let mut next_a = 0;
    let mut available = 0usize;
    for &tb in b {
        while next_a < a.len() && a[next_a] - tb < -delta {
            next_a += 1;
            available += 1;
        }
        if available > 0 {
            available -= 1;
            out.push(tb);
        }
    }
    out
}

fn match_window(a: &[f64], b: &[f64], within: impl Fn(f64, f64) -> bool) -> Vec<f64> {
    let mut out = Vec::new();
    let mut pending: [VecDeque<f64>; 2] = [VecDeque::new(), VecDeque::new()];
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let take_a = j >= b.len() || (i < a.len() && a[i] <= b[j]);
        let (t, side) = if take_a {
            i += 1;
            (a[i - 1], 0)
        } else {
            j += 1;
            (b[j - 1], 1)
        };
        let other = &mut pending[1 - side];
        while other.front().is_some_and(|&p| !within(p, t)) {
            other.pop_front();
        }
        if other.pop_front().is_some() {
            out.push(t);
        } else {
            pending[side].push_back(t);
        }
    }
    out
}

/// Trigger timestamps of one rule, strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerSet {
    pub rule_index: usize,
    pub times: Vec<f64>,
}

impl TriggerSet {
    /// Trigger times of `body` on `sequence`; coincident firings collapse.
    pub fn compute(rule_index: usize, body: &RuleBody, sequence: &EventSequence, delta: f64) -> Self {
        let mut times = satisfaction_time(body, sequence, delta);
        times.dedup();
        TriggerSet { rule_index, times }
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    Exponential,
}

/// Causal decay kernel, `d(t) = exp(-rate * t)` for `t >= 0` and 0 before.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayKernel {
    pub kind: KernelKind,
    pub rate: f64,
}

impl DecayKernel {
    pub fn exponential(rate: f64) -> Self {
        debug_assert!(rate > 0.0);
        DecayKernel {
            kind: KernelKind::Exponential,
            rate,
        }
    }

    #[inline]
    pub fn eval(&self, dt: f64) -> f64 {
        if dt < 0.0 {
            return 0.0;
        }
        match self.kind {
            KernelKind::Exponential => (-self.rate * dt).exp(),
        }
    }
}

/// `e_j(t)`: decayed count of triggers at or before `t`.
pub fn rule_signal(triggers: &TriggerSet, kernel: &DecayKernel, t: f64) -> f64 {
    triggers
        .times
        .iter()
        .take_while(|&&tj| tj <= t)
        .map(|&tj| kernel.eval(t - tj))
        .sum()
}

/// Left limit of [`rule_signal`]: triggers strictly before `t`.
pub fn rule_signal_before(triggers: &TriggerSet, kernel: &DecayKernel, t: f64) -> f64 {
    triggers
        .times
        .iter()
        .take_while(|&&tj| tj < t)
        .map(|&tj| kernel.eval(t - tj))
        .sum()
}

/// `g_k(t)`: masked, decayed sum of type-`k` values observed at or before `t`.
pub fn numeric_signal(sequence: &EventSequence, type_k: u32, mask_k: bool, kernel: &DecayKernel, t: f64) -> f64 {
    if !mask_k {
        return 0.0;
    }
    sequence
        .events()
        .iter()
        .take_while(|e| e.time <= t)
        .filter(|e| e.event_type == type_k)
        .map(|e| e.value * kernel.eval(t - e.time))
        .sum()
}

/// Left limit of [`numeric_signal`].
pub fn numeric_signal_before(sequence: &EventSequence, type_k: u32, mask_k: bool, kernel: &DecayKernel, t: f64) -> f64 {
    if !mask_k {
        return 0.0;
    }
    sequence
        .events()
        .iter()
        .take_while(|e| e.time < t)
        .filter(|e| e.event_type == type_k)
        .map(|e| e.value * kernel.eval(t - e.time))
        .sum()
}

/// Impulses of one signal: at each time the signal jumps by the amount and
/// then decays at `rate`.
#[derive(Debug, Clone)]
pub struct ImpulseStream {
    pub times: Vec<f64>,
    pub amounts: Vec<f64>,
    pub rate: f64,
}

impl ImpulseStream {
    pub fn unit(times: Vec<f64>, rate: f64) -> Self {
        let amounts = vec![1.0; times.len()];
        ImpulseStream { times, amounts, rate }
    }

    pub fn values_of_type(sequence: &EventSequence, type_k: u32, rate: f64) -> Self {
        let (times, amounts) = sequence
            .events()
            .iter()
            .filter(|e| e.event_type == type_k)
            .map(|e| (e.time, e.value))
            .unzip();
        ImpulseStream { times, amounts, rate }
    }
}

/// Evaluates many decayed signals along non-decreasing query times in O(1)
/// amortized work per query and signal, using
/// `s(t2) = s(t1) * exp(-rate (t2 - t1)) + new impulses`.
#[derive(Debug, Clone)]
pub struct SignalTracker {
    streams: Vec<ImpulseStream>,
    cursor: Vec<usize>,
    values: Vec<f64>,
    now: f64,
}

impl SignalTracker {
    pub fn new(streams: Vec<ImpulseStream>) -> Self {
        let n = streams.len();
        SignalTracker {
            streams,
            cursor: vec![0; n],
            values: vec![0.0; n],
            now: 0.0,
        }
    }

    /// Signal values at `t`, counting impulses at exactly `t` only when
    /// `inclusive`. Query times must not decrease, and an inclusive query at
    /// `t` must not be followed by an exclusive one at the same `t`.
    pub fn advance(&mut self, t: f64, inclusive: bool) -> &[f64] {
        debug_assert!(t >= self.now, "query times must be non-decreasing");
        let dt = t - self.now;
        for (s, stream) in self.streams.iter().enumerate() {
            let mut v = if dt > 0.0 { self.values[s] * (-stream.rate * dt).exp() } else { self.values[s] };
            let mut c = self.cursor[s];
            while c < stream.times.len() && (stream.times[c] < t || (inclusive && stream.times[c] == t)) {
                v += stream.amounts[c] * (-stream.rate * (t - stream.times[c])).exp();
                c += 1;
            }
            self.cursor[s] = c;
            self.values[s] = v;
        }
        self.now = t;
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Event, RuleBody as B};

    fn seq(events: &[(f64, u32)]) -> EventSequence {
        let horizon = events.iter().map(|e| e.0).fold(1.0, f64::max);
        EventSequence::new(events.iter().map(|&(t, k)| Event::new(t, k, 1.0)).collect(), horizon, 5, 5).unwrap()
    }

    #[test]
    fn before_fires_at_later_event() {
        let s = seq(&[(1.0, 1), (3.0, 2)]);
        assert_eq!(satisfaction_time(&B::before(B::leaf(1), B::leaf(2)), &s, 0.1), vec![3.0]);
    }

    #[test]
    fn equal_within_tolerance() {
        let s = seq(&[(2.0, 1), (2.05, 2)]);
        assert_eq!(satisfaction_time(&B::equal(B::leaf(1), B::leaf(2)), &s, 0.1), vec![2.05]);
    }

    #[test]
    fn before_order_violated() {
        let s = seq(&[(1.0, 2), (3.0, 1)]);
        assert!(satisfaction_time(&B::before(B::leaf(1), B::leaf(2)), &s, 0.1).is_empty());
    }

    #[test]
    fn nested_before_equal() {
        let s = seq(&[(0.0, 1), (1.0, 2), (1.02, 3)]);
        let body = B::equal(B::before(B::leaf(1), B::leaf(2)), B::leaf(3));
        assert_eq!(satisfaction_time(&body, &s, 0.1), vec![1.02]);
    }

    #[test]
    fn before_gap_equal_to_delta_does_not_fire() {
        let s = seq(&[(1.0, 1), (1.5, 2)]);
        assert!(satisfaction_time(&B::before(B::leaf(1), B::leaf(2)), &s, 0.5).is_empty());
        assert_eq!(satisfaction_time(&B::equal(B::leaf(1), B::leaf(2)), &s, 0.5), vec![1.5]);
    }

    #[test]
    fn one_early_event_fires_once() {
        let s = seq(&[(0.0, 1), (1.0, 2), (2.0, 2), (3.0, 2)]);
        assert_eq!(satisfaction_time(&B::before(B::leaf(1), B::leaf(2)), &s, 0.1), vec![1.0]);
    }

    #[test]
    fn and_pairs_in_time_order() {
        let s = seq(&[(0.0, 1), (1.0, 1), (2.0, 2), (5.0, 2), (6.0, 2)]);
        assert_eq!(satisfaction_time(&B::and(B::leaf(1), B::leaf(2)), &s, 0.1), vec![2.0, 5.0]);
    }

    #[test]
    fn equal_prefers_oldest_partner() {
        // Oldest-first keeps the later A available for the second B.
        let s = seq(&[(0.0, 1), (0.09, 1), (0.1, 2), (0.18, 2)]);
        assert_eq!(satisfaction_time(&B::equal(B::leaf(1), B::leaf(2)), &s, 0.1), vec![0.1, 0.18]);
    }

    #[test]
    fn kernel_shape() {
        let k = DecayKernel::exponential(1.0);
        assert_eq!(k.eval(0.0), 1.0);
        assert_eq!(k.eval(-1e-9), 0.0);
        assert!(k.eval(1.0) < k.eval(0.5));
    }

    #[test]
    fn rule_signal_examples() {
        let k = DecayKernel::exponential(1.0);
        let one = TriggerSet { rule_index: 0, times: vec![0.0] };
        assert!((rule_signal(&one, &k, 1.0) - 0.367879).abs() < 1e-6);
        let none = TriggerSet { rule_index: 0, times: vec![] };
        assert_eq!(rule_signal(&none, &k, 3.0), 0.0);
        let two = TriggerSet { rule_index: 0, times: vec![0.0, 0.5] };
        let direct = (-1.0f64).exp() + (-0.5f64).exp();
        assert!((rule_signal(&two, &k, 1.0) - direct).abs() < 1e-15);
        assert!((rule_signal(&two, &k, 1.0) - 0.974410).abs() < 1e-6);
        // jump of exactly one at a trigger
        assert!((rule_signal(&two, &k, 0.5) - rule_signal_before(&two, &k, 0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn numeric_signal_examples() {
        let k = DecayKernel::exponential(1.0);
        let s = EventSequence::new(vec![Event::new(0.0, 2, 2.0)], 2.0, 3, 3).unwrap();
        assert_eq!(numeric_signal(&s, 2, false, &k, 1.0), 0.0);
        assert!((numeric_signal(&s, 2, true, &k, 1.0) - 0.735759).abs() < 1e-6);
        assert_eq!(numeric_signal_before(&s, 2, true, &k, 0.0), 0.0);
        assert_eq!(numeric_signal(&s, 2, true, &k, 0.0), 2.0);
    }

    #[test]
    fn coincident_triggers_collapse() {
        let s = seq(&[(1.0, 1), (1.0, 1)]);
        let ts = TriggerSet::compute(0, &B::leaf(1), &s, 0.1);
        assert_eq!(ts.times, vec![1.0]);
    }

    #[test]
    fn tracker_matches_direct_sums() {
        let s = EventSequence::new(
            vec![
                Event::new(0.2, 1, 1.5),
                Event::new(0.7, 2, -0.5),
                Event::new(0.7, 1, 2.0),
                Event::new(1.9, 1, 0.25),
            ],
            3.0,
            2,
            2,
        )
        .unwrap();
        let kernel = DecayKernel::exponential(0.8);
        let mut tr = SignalTracker::new(vec![ImpulseStream::values_of_type(&s, 1, 0.8)]);
        for &(t, inclusive) in &[(0.1, true), (0.7, false), (0.7, true), (1.0, true), (1.9, false), (2.5, true)] {
            let got = tr.advance(t, inclusive)[0];
            let want = if inclusive {
                numeric_signal(&s, 1, true, &kernel, t)
            } else {
                numeric_signal_before(&s, 1, true, &kernel, t)
            };
            assert!((got - want).abs() < 1e-13, "t={t} got {got} want {want}");
        }
    }
}
