//! Conditional intensity of the target type and its negative log-likelihood.
//!
//! ```text
//! x(t)      = lambda0 + sum_j alpha_j e_j(t) + sum_k beta_k m_k g_k(t)
//! lambda(t) = gamma * log(1 + exp(x(t) / gamma))
//! NLL       = -sum_i log lambda(t_i-) + int_0^T lambda(t) dt
//! ```
//!
//! Only target-type occurrences enter the log term; every other type acts
//! through the rule and numeric signals. `lambda(t_i-)` uses history strictly
//! before `t_i`.
//!
//! The integral uses 8-point Gauss–Legendre panels whose boundaries include
//! every event and trigger time. Between two boundaries all rule signals decay
//! at one rate and all numeric signals at another, so a panel is fully
//! described by the signal values at its left end; [`Design`] stores exactly
//! that, which makes repeated evaluation during fitting cheap.

use serde::{Deserialize, Serialize};

use crate::encoders::{
    numeric_signal, numeric_signal_before, rule_signal, rule_signal_before, DecayKernel, ImpulseStream,
    SignalTracker, TriggerSet,
};
use crate::error::{Error, Result};
use crate::model::{EventSequence, Hyperparams, ModelParams, RuleBody, RuleSet};
use crate::quadrature::{panel_bounds, panel_nodes};

/// Scaled softplus `gamma * log(1 + exp(x / gamma))`, stable for large `|x / gamma|`.
#[inline]
pub fn softplus(x: f64, gamma: f64) -> f64 {
    x.max(0.0) + gamma * (-(x / gamma).abs()).exp().ln_1p()
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inverse(y: f64, gamma: f64) -> f64 {
    // x = y + gamma * log(1 - exp(-y / gamma))
    y + gamma * (-(-y / gamma).exp()).ln_1p()
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Softplus value with its partial derivatives in `x` and `gamma`.
#[inline]
pub fn softplus_with_grad(x: f64, gamma: f64) -> (f64, f64, f64) {
    let z = x / gamma;
    let e = (-z.abs()).exp();
    let l = e.ln_1p();
    let value = x.max(0.0) + gamma * l;
    let r = e / (1.0 + e);
    let d_x = if z >= 0.0 { 1.0 - r } else { r };
    let d_gamma = l + z.abs() * r;
    (value, d_x, d_gamma)
}

/// Upper end of the likelihood integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrationDomain {
    /// Integrate to the observation horizon; the tail is observed with no event.
    #[default]
    Horizon,
    /// Integrate to the last observed event of any type.
    LastEvent,
}

impl IntegrationDomain {
    pub fn end(self, sequence: &EventSequence) -> f64 {
        match self {
            IntegrationDomain::Horizon => sequence.horizon(),
            IntegrationDomain::LastEvent => sequence.last_time().unwrap_or(0.0),
        }
    }
}

/// The two parts of the negative log-likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NllBreakdown {
    /// `-sum log lambda(t_i)`.
    pub log_term: f64,
    /// `int lambda dt`.
    pub integral_term: f64,
    pub total: f64,
}

impl NllBreakdown {
    fn new(log_term: f64, integral_term: f64) -> Self {
        NllBreakdown {
            log_term,
            integral_term,
            total: log_term + integral_term,
        }
    }
}

/// Signal values sampled for quadrature and at target times, for a fixed list
/// of rule bodies. Columns are `[e_1 .. e_R, g_1 .. g_K]` (numeric columns are
/// unmasked; masking happens through [`Coefs`]).
#[derive(Debug, Clone)]
pub struct Design {
    n_rules: usize,
    n_types: usize,
    bounds: Vec<f64>,
    panel_rows: Vec<f64>,
    node_w: Vec<f64>,
    node_dr: Vec<f64>,
    node_dn: Vec<f64>,
    target_rows: Vec<f64>,
}

const NODES_PER_PANEL: usize = 8;

impl Design {
    /// Samples the signals of `bodies` on `sequence` over `[start, end]`.
    ///
    /// `targets` are the times whose log-intensity enters the likelihood;
    /// `extra_breaks` become additional panel boundaries.
    pub fn build(
        sequence: &EventSequence,
        bodies: &[&RuleBody],
        hyper: &Hyperparams,
        targets: &[f64],
        start: f64,
        end: f64,
        extra_breaks: &[f64],
    ) -> Design {
        let n_rules = bodies.len();
        let n_types = sequence.num_types() as usize;
        let triggers: Vec<TriggerSet> = bodies
            .iter()
            .enumerate()
            .map(|(j, b)| TriggerSet::compute(j, b, sequence, hyper.delta))
            .collect();

        let breaks = sequence
            .events()
            .iter()
            .map(|e| e.time)
            .chain(triggers.iter().flat_map(|t| t.times.iter().copied()))
            .chain(extra_breaks.iter().copied());
        let max_width = 1.0 / hyper.rule_decay.max(hyper.num_decay);
        let bounds = if end > start {
            panel_bounds(breaks, start, end, max_width)
        } else {
            vec![start]
        };
        let n_panels = bounds.len() - 1;

        let mut streams: Vec<ImpulseStream> = triggers
            .into_iter()
            .map(|t| ImpulseStream::unit(t.times, hyper.rule_decay))
            .collect();
        for k in 1..=sequence.num_types() {
            streams.push(ImpulseStream::values_of_type(sequence, k, hyper.num_decay));
        }
        let stride = n_rules + n_types;
        let mut tracker = SignalTracker::new(streams);
        let mut panel_rows = Vec::with_capacity(n_panels * stride);
        let mut target_rows = Vec::with_capacity(targets.len() * stride);

        // Merge panel starts (inclusive) with target times (exclusive); at equal
        // times the exclusive query goes first.
        let (mut p, mut q) = (0, 0);
        while p < n_panels || q < targets.len() {
            let take_target = q < targets.len() && (p >= n_panels || targets[q] <= bounds[p]);
            if take_target {
                target_rows.extend_from_slice(tracker.advance(targets[q], false));
                q += 1;
            } else {
                panel_rows.extend_from_slice(tracker.advance(bounds[p], true));
                p += 1;
            }
        }

        let mut node_w = Vec::with_capacity(n_panels * NODES_PER_PANEL);
        let mut node_dr = Vec::with_capacity(n_panels * NODES_PER_PANEL);
        let mut node_dn = Vec::with_capacity(n_panels * NODES_PER_PANEL);
        for w in bounds.windows(2) {
            for (s, wt) in panel_nodes(w[1] - w[0]) {
                node_w.push(wt);
                node_dr.push((-hyper.rule_decay * s).exp());
                node_dn.push((-hyper.num_decay * s).exp());
            }
        }

        Design {
            n_rules,
            n_types,
            bounds,
            panel_rows,
            node_w,
            node_dr,
            node_dn,
            target_rows,
        }
    }

    pub fn n_rules(&self) -> usize {
        self.n_rules
    }

    pub fn n_targets(&self) -> usize {
        self.target_rows.len() / self.stride().max(1)
    }

    pub fn n_panels(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    fn stride(&self) -> usize {
        self.n_rules + self.n_types
    }

    /// Coefficients for `params`, whose `alpha[j]` weights design column `rule_cols[j]`.
    pub fn coefs(&self, params: &ModelParams, rule_cols: &[usize]) -> Coefs {
        debug_assert_eq!(params.alpha.len(), rule_cols.len());
        debug_assert_eq!(params.beta.len(), self.n_types);
        let j = params.alpha.len();
        let rule = rule_cols
            .iter()
            .zip(&params.alpha)
            .enumerate()
            .map(|(i, (&col, &a))| (col, a, 1 + i))
            .collect();
        let num = params
            .mask()
            .iter()
            .enumerate()
            .filter(|(_, &on)| on)
            .map(|(k, _)| (self.n_rules + k, params.beta[k], 1 + j + k))
            .collect();
        Coefs {
            lambda0: params.lambda0,
            gamma: params.gamma(),
            rule,
            num,
            gamma_index: params.dim() - 1,
        }
    }

    /// Coefficients when the design columns are exactly the rules of `params`.
    pub fn coefs_identity(&self, params: &ModelParams) -> Coefs {
        let cols: Vec<usize> = (0..params.alpha.len()).collect();
        self.coefs(params, &cols)
    }

    #[inline]
    fn panel_scalars(&self, c: &Coefs, p: usize) -> (f64, f64, f64) {
        let row = &self.panel_rows[p * self.stride()..(p + 1) * self.stride()];
        let ar: f64 = c.rule.iter().map(|&(col, a, _)| a * row[col]).sum();
        let an: f64 = c.num.iter().map(|&(col, b, _)| b * row[col]).sum();
        (c.lambda0, ar, an)
    }

    /// Negative log-likelihood; when `grad` is given, adds the gradient in the
    /// flat parameter layout to it.
    pub fn eval(&self, c: &Coefs, mut grad: Option<&mut [f64]>) -> NllBreakdown {
        let stride = self.stride();
        let gamma = c.gamma;
        let mut integral = 0.0;
        let mut g_gamma = 0.0;
        for p in 0..self.n_panels() {
            let (l0, ar, an) = self.panel_scalars(c, p);
            let base = p * NODES_PER_PANEL;
            let (mut s0, mut sr, mut sn) = (0.0, 0.0, 0.0);
            for n in base..base + NODES_PER_PANEL {
                let w = self.node_w[n];
                let x = l0 + ar * self.node_dr[n] + an * self.node_dn[n];
                if grad.is_some() {
                    let (v, dx, dg) = softplus_with_grad(x, gamma);
                    integral += w * v;
                    let ws = w * dx;
                    s0 += ws;
                    sr += ws * self.node_dr[n];
                    sn += ws * self.node_dn[n];
                    g_gamma += w * dg;
                } else {
                    integral += w * softplus(x, gamma);
                }
            }
            if let Some(g) = grad.as_deref_mut() {
                let row = &self.panel_rows[p * stride..(p + 1) * stride];
                g[0] += s0;
                for &(col, _, pi) in &c.rule {
                    g[pi] += sr * row[col];
                }
                for &(col, _, pi) in &c.num {
                    g[pi] += sn * row[col];
                }
            }
        }

        let mut log_term = 0.0;
        for row in self.target_rows.chunks_exact(stride.max(1)).take(self.n_targets()) {
            let x = c.lambda0
                + c.rule.iter().map(|&(col, a, _)| a * row[col]).sum::<f64>()
                + c.num.iter().map(|&(col, b, _)| b * row[col]).sum::<f64>();
            let (v, dx, dg) = softplus_with_grad(x, gamma);
            log_term -= v.ln();
            if let Some(g) = grad.as_deref_mut() {
                let d = -dx / v;
                g[0] += d;
                for &(col, _, pi) in &c.rule {
                    g[pi] += d * row[col];
                }
                for &(col, _, pi) in &c.num {
                    g[pi] += d * row[col];
                }
                g_gamma -= dg / v;
            }
        }
        if let Some(g) = grad {
            g[c.gamma_index] += gamma * g_gamma;
        }
        NllBreakdown::new(log_term, integral)
    }

    /// Integral of the intensity over each panel.
    pub fn panel_integrals(&self, c: &Coefs) -> Vec<f64> {
        (0..self.n_panels())
            .map(|p| {
                let (l0, ar, an) = self.panel_scalars(c, p);
                let base = p * NODES_PER_PANEL;
                (base..base + NODES_PER_PANEL)
                    .map(|n| self.node_w[n] * softplus(l0 + ar * self.node_dr[n] + an * self.node_dn[n], c.gamma))
                    .sum()
            })
            .collect()
    }
}

/// Active coefficients: `(design column, value, flat parameter index)`.
#[derive(Debug, Clone)]
pub struct Coefs {
    lambda0: f64,
    gamma: f64,
    rule: Vec<(usize, f64, usize)>,
    num: Vec<(usize, f64, usize)>,
    gamma_index: usize,
}

/// A sequence paired with a rule set and parameters.
#[derive(Debug, Clone)]
pub struct IntensityContext<'a> {
    sequence: &'a EventSequence,
    rules: &'a RuleSet,
    params: &'a ModelParams,
    triggers: Vec<TriggerSet>,
    rule_kernel: DecayKernel,
    num_kernel: DecayKernel,
    domain: IntegrationDomain,
}

impl<'a> IntensityContext<'a> {
    pub fn new(sequence: &'a EventSequence, rules: &'a RuleSet, params: &'a ModelParams) -> Result<Self> {
        params.check_pairing(rules, sequence.num_types())?;
        if rules.target() != sequence.target_type() {
            return Err(Error::CorpusMismatch(format!(
                "rule target {} differs from sequence target {}",
                rules.target(),
                sequence.target_type()
            )));
        }
        let triggers = rules
            .rules()
            .iter()
            .enumerate()
            .map(|(j, r)| TriggerSet::compute(j, r.body(), sequence, params.hyper.delta))
            .collect();
        Ok(IntensityContext {
            sequence,
            rules,
            params,
            triggers,
            rule_kernel: DecayKernel::exponential(params.hyper.rule_decay),
            num_kernel: DecayKernel::exponential(params.hyper.num_decay),
            domain: IntegrationDomain::Horizon,
        })
    }

    pub fn with_domain(mut self, domain: IntegrationDomain) -> Self {
        self.domain = domain;
        self
    }

    pub fn sequence(&self) -> &EventSequence {
        self.sequence
    }

    pub fn params(&self) -> &ModelParams {
        self.params
    }

    pub fn rules(&self) -> &RuleSet {
        self.rules
    }

    pub fn triggers(&self) -> &[TriggerSet] {
        &self.triggers
    }

    pub fn domain(&self) -> IntegrationDomain {
        self.domain
    }

    /// Per-rule contributions `alpha_j e_j(t)` (history at or before `t`).
    pub fn rule_contributions(&self, t: f64) -> Vec<f64> {
        self.triggers
            .iter()
            .zip(&self.params.alpha)
            .map(|(ts, a)| a * rule_signal(ts, &self.rule_kernel, t))
            .collect()
    }

    /// Left limits of [`Self::rule_contributions`].
    pub fn rule_contributions_before(&self, t: f64) -> Vec<f64> {
        self.triggers
            .iter()
            .zip(&self.params.alpha)
            .map(|(ts, a)| a * rule_signal_before(ts, &self.rule_kernel, t))
            .collect()
    }

    fn numeric_part(&self, t: f64, before: bool) -> f64 {
        let mask = self.params.mask();
        (1..=self.sequence.num_types())
            .zip(&self.params.beta)
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|((k, b), &m)| {
                let g = if before {
                    numeric_signal_before(self.sequence, k, m, &self.num_kernel, t)
                } else {
                    numeric_signal(self.sequence, k, m, &self.num_kernel, t)
                };
                b * g
            })
            .sum()
    }

    /// Pre-activation `x(t)` including events at `t`.
    pub fn preactivation_at(&self, t: f64) -> f64 {
        self.params.lambda0 + self.rule_contributions(t).iter().sum::<f64>() + self.numeric_part(t, false)
    }

    /// Pre-activation from history strictly before `t`.
    pub fn preactivation_before(&self, t: f64) -> f64 {
        let rules: f64 = self
            .triggers
            .iter()
            .zip(&self.params.alpha)
            .map(|(ts, a)| a * rule_signal_before(ts, &self.rule_kernel, t))
            .sum();
        self.params.lambda0 + rules + self.numeric_part(t, true)
    }

    /// Right-continuous intensity at `t`.
    pub fn intensity_at(&self, t: f64) -> f64 {
        softplus(self.preactivation_at(t), self.params.gamma())
    }

    /// Intensity from history strictly before `t`, as used in the log term.
    pub fn intensity_before(&self, t: f64) -> f64 {
        softplus(self.preactivation_before(t), self.params.gamma())
    }

    fn bodies(&self) -> Vec<&RuleBody> {
        self.rules.rules().iter().map(|r| r.body()).collect()
    }

    /// Quadrature design over `[start, end]` with the given targets.
    pub fn design(&self, targets: &[f64], start: f64, end: f64, extra_breaks: &[f64]) -> Design {
        Design::build(self.sequence, &self.bodies(), &self.params.hyper, targets, start, end, extra_breaks)
    }

    fn full_design(&self, target_times: &[f64]) -> Design {
        let end = self.domain.end(self.sequence);
        self.design(target_times, 0.0, end, &[])
    }

    /// Negative log-likelihood of `target_times` on `[0, end]`.
    pub fn nll(&self, target_times: &[f64]) -> NllBreakdown {
        let d = self.full_design(target_times);
        d.eval(&d.coefs_identity(self.params), None)
    }

    /// Gradient of [`Self::nll`] in the flat layout `[lambda0, alpha.., beta.., gamma_raw]`.
    pub fn nll_gradient(&self, target_times: &[f64]) -> Vec<f64> {
        self.nll_with_gradient(target_times).1
    }

    pub fn nll_with_gradient(&self, target_times: &[f64]) -> (NllBreakdown, Vec<f64>) {
        let d = self.full_design(target_times);
        let mut g = vec![0.0; self.params.dim()];
        let v = d.eval(&d.coefs_identity(self.params), Some(&mut g));
        (v, g)
    }

    /// NLL restricted to `(start, end]`: log term over targets in the window,
    /// integral over `[start, end]`, history taken from the whole sequence.
    pub fn nll_window(&self, target_times: &[f64], start: f64, end: f64) -> NllBreakdown {
        let inside: Vec<f64> = target_times
            .iter()
            .copied()
            .filter(|&t| (t > start || (start == 0.0 && t == 0.0)) && t <= end)
            .collect();
        let d = self.design(&inside, start, end, &[]);
        d.eval(&d.coefs_identity(self.params), None)
    }

    /// Cumulative intensity `int_0^t lambda` at each of the sorted `times`.
    pub fn compensator_at(&self, times: &[f64]) -> Vec<f64> {
        let Some(&end) = times.last() else {
            return Vec::new();
        };
        let d = self.design(&[], 0.0, end, times);
        let panels = d.panel_integrals(&d.coefs_identity(self.params));
        let bounds = d.bounds();
        let mut out = Vec::with_capacity(times.len());
        let mut acc = 0.0;
        let mut p = 0;
        for &t in times {
            while p < panels.len() && bounds[p + 1] <= t {
                acc += panels[p];
                p += 1;
            }
            out.push(acc);
        }
        out
    }
}
