//! Hybrid-rule temporal point processes.
//!
//! The intensity of a target event type is driven by three parts: a constant
//! base rate, temporal logic rules whose firings excite (or inhibit) the
//! target, and decayed numeric values of the predicates those rules mention:
//!
//! ```text
//! lambda(t) = softplus_gamma( lambda0 + sum_j alpha_j e_j(t) + sum_k beta_k m_k g_k(t) )
//! ```
//!
//! Modules, bottom-up:
//!
//! * [`model`]: events, sequences, rules, parameters
//! * [`dsl`]: rule text syntax (`A before B -> Y`)
//! * [`encoders`]: rule triggers and decayed signals
//! * [`intensity`]: intensity, likelihood and gradient
//! * [`training`]: maximum-likelihood fitting and next-event prediction
//! * [`simulation`]: thinning sampler for synthetic corpora
//! * [`mining`]: predicate filtering, candidate generation, subset search
//! * [`eval`]: NLL / RMSE / rule accuracy and the numeric-feature ablation
//! * [`io`]: corpus, model and report files
//! * [`cli`]: the `hrtpp` command-line front end

pub mod cli;
pub mod dsl;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod intensity;
pub mod io;
pub mod mining;
pub mod model;
pub mod quadrature;
pub mod simulation;
pub mod stats;
pub mod training;

pub use dsl::{parse_rule, print_rule, NameTable};
pub use error::{Error, Result};
pub use intensity::{IntegrationDomain, IntensityContext, NllBreakdown};
pub use model::{Event, EventSequence, Hyperparams, MaskPolicy, ModelParams, Relation, Rule, RuleBody, RuleSet};
