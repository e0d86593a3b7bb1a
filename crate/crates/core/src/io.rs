//! File formats: JSONL corpora, manifests, run configuration, model
//! documents and intensity traces.
//!
//! Corpus lines look like
//!
//! ```text
//! {"horizon":10.0,"target_type":3,"num_types":3,"events":[{"t":0.5,"k":1,"v":1.2}]}
//! ```
//!
//! Every JSON document carries a `format_version`. Files are written to a
//! temporary sibling and renamed into place.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsl::{parse_rule, print_rule, NameTable};
use crate::encoders::TriggerSet;
use crate::error::{Error, Result};
use crate::intensity::IntegrationDomain;
use crate::mining::MiningConfig;
use crate::model::{Event, EventSequence, Hyperparams, MaskPolicy, ModelParams, RuleSet, DEFAULT_MAX_PREDICATES};
use crate::simulation::CorpusManifest;
use crate::training::{FitConfig, FittedModel, ModelOptions};

pub const MODEL_VERSION: u32 = 1;

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().ok_or_else(|| Error::io(path, std::io::ErrorKind::InvalidInput.into()))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_json(value)?.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SequenceRecord {
    horizon: f64,
    target_type: u32,
    num_types: u32,
    events: Vec<Event>,
}

/// One JSONL line per sequence.
pub fn corpus_to_jsonl(corpus: &[EventSequence]) -> String {
    let mut out = String::new();
    for s in corpus {
        let rec = SequenceRecord {
            horizon: s.horizon(),
            target_type: s.target_type(),
            num_types: s.num_types(),
            events: s.events().to_vec(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("sequence serializes"));
        out.push('\n');
    }
    out
}

/// Parses a JSONL corpus. Blank lines are skipped; errors carry the 1-based line.
pub fn parse_corpus(text: &str) -> Result<Vec<EventSequence>> {
    let mut out: Vec<EventSequence> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: SequenceRecord =
            serde_json::from_str(raw).map_err(|e| Error::Format(e.to_string()).at_line(line))?;
        let seq = EventSequence::new(rec.events, rec.horizon, rec.num_types, rec.target_type)
            .map_err(|e| e.at_line(line))?;
        if let Some(first) = out.first() {
            if first.num_types() != seq.num_types() || first.target_type() != seq.target_type() {
                return Err(Error::CorpusMismatch(format!(
                    "num_types/target_type {}/{} differ from the first sequence's {}/{}",
                    seq.num_types(),
                    seq.target_type(),
                    first.num_types(),
                    first.target_type()
                ))
                .at_line(line));
            }
        }
        out.push(seq);
    }
    Ok(out)
}

pub fn read_corpus(path: &Path) -> Result<Vec<EventSequence>> {
    parse_corpus(&read_text(path)?).map_err(|e| match e {
        Error::AtLine { line, source } => Error::Format(format!("{}:{line}: {source}", path.display())),
        e => e,
    })
}

pub fn write_corpus(path: &Path, corpus: &[EventSequence]) -> Result<()> {
    write_atomic(path, corpus_to_jsonl(corpus).as_bytes())
}

/// Sequence count plus SHA-256 of the corpus in JSONL form.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusFingerprint {
    pub count: usize,
    pub sha256: String,
}

impl CorpusFingerprint {
    pub fn of(corpus: &[EventSequence]) -> Self {
        CorpusFingerprint {
            count: corpus.len(),
            sha256: hex::encode(Sha256::digest(corpus_to_jsonl(corpus).as_bytes())),
        }
    }
}

pub fn read_manifest(path: &Path) -> Result<CorpusManifest> {
    read_json(path)
}

/// Name table for a corpus: the explicit manifest if given, else
/// `manifest.json` beside the corpus, else `X1..XK`.
pub fn resolve_names(manifest: Option<&Path>, corpus_path: &Path, num_types: u32) -> Result<NameTable> {
    let sibling = corpus_path.parent().map(|d| d.join("manifest.json"));
    let chosen = match manifest {
        Some(p) => Some(p.to_path_buf()),
        None => sibling.filter(|p| p.is_file()),
    };
    let names = match chosen {
        Some(p) => read_manifest(&p)?.names,
        None => NameTable::numbered(num_types),
    };
    if names.len() != num_types as usize {
        return Err(Error::CorpusMismatch(format!(
            "name table has {} names for {num_types} types",
            names.len()
        )));
    }
    Ok(names)
}

fn default_delta() -> f64 {
    Hyperparams::default().delta
}

fn default_decay() -> f64 {
    1.0
}

fn default_max_predicates() -> usize {
    DEFAULT_MAX_PREDICATES
}

/// `[model]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Tolerance for `before`/`equal`. Default 0.05.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Rule encoder decay rate. Default 1.0.
    #[serde(default = "default_decay")]
    pub rule_decay: f64,
    /// Numeric encoder decay rate. Default 1.0.
    #[serde(default = "default_decay")]
    pub num_decay: f64,
    /// Leaves per rule. Default 3.
    #[serde(default = "default_max_predicates")]
    pub max_predicates: usize,
    /// Numeric mask derivation. Default `rules`.
    #[serde(default)]
    pub mask_policy: MaskPolicy,
    /// Upper end of the likelihood integral. Default `horizon`.
    #[serde(default)]
    pub domain: IntegrationDomain,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            delta: default_delta(),
            rule_decay: 1.0,
            num_decay: 1.0,
            max_predicates: DEFAULT_MAX_PREDICATES,
            mask_policy: MaskPolicy::Rules,
            domain: IntegrationDomain::Horizon,
        }
    }
}

/// `[fit]` section; defaults match [`FitConfig::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    /// Default 500.
    pub max_epochs: usize,
    /// Default 0.05.
    pub learning_rate: f64,
    /// Default 1e-7.
    pub convergence_tol: f64,
    /// Default 1e-4.
    pub l2_weight: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        let f = FitConfig::default();
        FitSection {
            max_epochs: f.max_epochs,
            learning_rate: f.learning_rate,
            convergence_tol: f.convergence_tol,
            l2_weight: f.l2_weight,
        }
    }
}

/// `[paths]` section. Relative paths resolve against the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// Manifest supplying predicate names. Default: `manifest.json` next to the corpus.
    pub manifest: Option<PathBuf>,
}

/// TOML run configuration. Unknown keys are rejected.
///
/// ```toml
/// seed = 7
///
/// [model]
/// delta = 0.05
/// max_predicates = 2
///
/// [fit]
/// max_epochs = 300
///
/// [mining]
/// subset_size = 2
/// budget = 60
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed for every random choice. Default 0.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub mining: MiningConfig,
    #[serde(default)]
    pub paths: PathsSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::parse(&read_text(path)?)?;
        if let (Some(m), Some(dir)) = (cfg.paths.manifest.as_mut(), path.parent()) {
            if m.is_relative() {
                *m = dir.join(&*m);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper().validate()?;
        if self.model.max_predicates == 0 {
            return Err(Error::InvalidConfig("max_predicates must be at least 1".into()));
        }
        self.fit_config().validate()?;
        self.mining.validate()
    }

    pub fn hyper(&self) -> Hyperparams {
        Hyperparams {
            delta: self.model.delta,
            rule_decay: self.model.rule_decay,
            num_decay: self.model.num_decay,
        }
    }

    pub fn model_options(&self) -> ModelOptions {
        ModelOptions {
            hyper: self.hyper(),
            mask_policy: self.model.mask_policy,
            domain: self.model.domain,
        }
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            max_epochs: self.fit.max_epochs,
            learning_rate: self.fit.learning_rate,
            convergence_tol: self.fit.convergence_tol,
            seed: self.seed,
            l2_weight: self.fit.l2_weight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightedRuleText {
    rule: String,
    alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    format_version: u32,
    names: NameTable,
    num_types: u32,
    target_type: u32,
    max_rules: usize,
    rules: Vec<WeightedRuleText>,
    lambda0: f64,
    beta: Vec<f64>,
    gamma_raw: f64,
    hyper: Hyperparams,
    mask_policy: MaskPolicy,
    mask: Vec<bool>,
    domain: IntegrationDomain,
    train_nll: f64,
    epochs_run: usize,
    mean_target_gap: f64,
    config: FitConfig,
    corpus: CorpusFingerprint,
    loss_history: Vec<f64>,
}

/// Serializes a fitted model as a versioned JSON document.
pub fn model_to_json(model: &FittedModel, names: &NameTable) -> Result<String> {
    if names.len() != model.num_types as usize {
        return Err(Error::CorpusMismatch(format!(
            "name table has {} names for {} types",
            names.len(),
            model.num_types
        )));
    }
    let rules = model
        .rules
        .rules()
        .iter()
        .zip(&model.params.alpha)
        .map(|(r, &alpha)| {
            Ok(WeightedRuleText {
                rule: print_rule(r, names)?,
                alpha,
            })
        })
        .collect::<Result<_>>()?;
    let p = &model.params;
    to_json(&ModelDocument {
        format_version: MODEL_VERSION,
        names: names.clone(),
        num_types: model.num_types,
        target_type: model.target_type,
        max_rules: model.rules.max_size(),
        rules,
        lambda0: p.lambda0,
        beta: p.beta.clone(),
        gamma_raw: p.gamma_raw,
        hyper: p.hyper,
        mask_policy: p.mask_policy(),
        mask: p.mask().to_vec(),
        domain: model.domain,
        train_nll: model.train_nll,
        epochs_run: model.epochs_run,
        mean_target_gap: model.mean_target_gap,
        config: model.config.clone(),
        corpus: model.corpus.clone(),
        loss_history: model.loss_history.clone(),
    })
}

/// Parses a model document, returning the model and its name table.
pub fn model_from_json(text: &str) -> Result<(FittedModel, NameTable)> {
    let doc: ModelDocument = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    if doc.format_version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported model format version {}", doc.format_version)));
    }
    let mut rules = RuleSet::new(doc.target_type, doc.max_rules);
    let mut alpha = Vec::with_capacity(doc.rules.len());
    for r in &doc.rules {
        let rule = parse_rule(&r.rule, &doc.names, usize::MAX)?;
        if !rules.insert(rule)? {
            return Err(Error::Format(format!("duplicate rule {:?}", r.rule)));
        }
        alpha.push(r.alpha);
    }
    let mut params = ModelParams::new(&rules, doc.num_types, doc.hyper, doc.mask_policy)?;
    if params.mask() != doc.mask.as_slice() {
        return Err(Error::Format("stored mask disagrees with the rules and mask policy".into()));
    }
    if doc.beta.len() != doc.num_types as usize {
        return Err(Error::Format(format!("{} numeric weights for {} types", doc.beta.len(), doc.num_types)));
    }
    params.lambda0 = doc.lambda0;
    params.alpha = alpha;
    params.beta = doc.beta;
    params.gamma_raw = doc.gamma_raw;
    let model = FittedModel {
        rules,
        params,
        domain: doc.domain,
        num_types: doc.num_types,
        target_type: doc.target_type,
        train_nll: doc.train_nll,
        epochs_run: doc.epochs_run,
        config: doc.config,
        loss_history: doc.loss_history,
        mean_target_gap: doc.mean_target_gap,
        corpus: doc.corpus,
    };
    Ok((model, doc.names))
}

pub fn save_model(path: &Path, model: &FittedModel, names: &NameTable) -> Result<()> {
    write_atomic(path, model_to_json(model, names)?.as_bytes())
}

pub fn load_model(path: &Path) -> Result<(FittedModel, NameTable)> {
    model_from_json(&read_text(path)?).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        e => e,
    })
}

/// Which limit a trace row reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceSide {
    Grid,
    /// Just before a trigger time.
    Left,
    /// At a trigger time, trigger included.
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub time: f64,
    pub side: TraceSide,
    pub intensity: f64,
    pub preactivation: f64,
    /// `alpha_j e_j(t)` per rule.
    pub contributions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Annotation {
    Trigger { time: f64, rule: usize },
    Event { time: f64, event_type: u32, value: f64 },
}

/// Intensity samples of one sequence plus trigger and event markers.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityTrace {
    pub rows: Vec<TraceRow>,
    pub annotations: Vec<Annotation>,
}

impl IntensityTrace {
    /// Samples every `dt` over `[0, horizon]`, plus left and right limits at
    /// each trigger time. `dt` defaults to `horizon / 2000`.
    pub fn compute(model: &FittedModel, sequence: &EventSequence, dt: Option<f64>) -> Result<Self> {
        let ctx = model.context(sequence)?;
        let horizon = sequence.horizon();
        let dt = dt.unwrap_or(horizon / 2000.0);
        if !(dt.is_finite() && dt > 0.0) && horizon > 0.0 {
            return Err(Error::InvalidConfig(format!("trace step must be positive, got {dt}")));
        }
        let steps = if horizon > 0.0 { (horizon / dt).floor() as usize } else { 0 };
        let mut grid: Vec<(f64, TraceSide)> = (0..=steps).map(|i| (i as f64 * dt, TraceSide::Grid)).collect();
        if grid.last().is_some_and(|&(t, _)| t < horizon) {
            grid.push((horizon, TraceSide::Grid));
        }
        let mut annotations = Vec::new();
        for (j, r) in model.rules.rules().iter().enumerate() {
            for t in TriggerSet::compute(j, r.body(), sequence, model.params.hyper.delta).times {
                grid.push((t, TraceSide::Left));
                grid.push((t, TraceSide::Right));
                annotations.push(Annotation::Trigger { time: t, rule: j });
            }
        }
        grid.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| side_rank(a.1).cmp(&side_rank(b.1))));
        grid.dedup();
        let rows = grid
            .into_iter()
            .map(|(time, side)| {
                let (pre, contributions) = match side {
                    TraceSide::Left => (ctx.preactivation_before(time), ctx.rule_contributions_before(time)),
                    _ => (ctx.preactivation_at(time), ctx.rule_contributions(time)),
                };
                TraceRow {
                    time,
                    side,
                    intensity: crate::intensity::softplus(pre, model.params.gamma()),
                    preactivation: pre,
                    contributions,
                }
            })
            .collect();
        annotations.extend(sequence.events().iter().map(|e| Annotation::Event {
            time: e.time,
            event_type: e.event_type,
            value: e.value,
        }));
        annotations.sort_by(|a, b| annotation_time(a).total_cmp(&annotation_time(b)));
        Ok(IntensityTrace { rows, annotations })
    }

    /// Columns: `time, side, intensity, preactivation`, then one column per rule.
    pub fn rows_csv(&self, model: &FittedModel, names: &NameTable) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["time".to_string(), "side".into(), "intensity".into(), "preactivation".into()];
        for r in model.rules.rules() {
            header.push(print_rule(r, names)?);
        }
        w.write_record(&header).map_err(csv_err)?;
        for row in &self.rows {
            let side = match row.side {
                TraceSide::Grid => "grid",
                TraceSide::Left => "left",
                TraceSide::Right => "right",
            };
            // adding 0.0 turns the -0.0 of an empty float sum into 0
            let num = |v: f64| (v + 0.0).to_string();
            let mut rec = vec![num(row.time), side.to_string(), num(row.intensity), num(row.preactivation)];
            rec.extend(row.contributions.iter().map(|&v| num(v)));
            w.write_record(&rec).map_err(csv_err)?;
        }
        finish_csv(w)
    }

    /// Columns: `kind, time, label, value`. Triggers carry the rule text,
    /// events the type name and value.
    pub fn annotations_csv(&self, model: &FittedModel, names: &NameTable) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["kind", "time", "label", "value"]).map_err(csv_err)?;
        for a in &self.annotations {
            let rec = match a {
                Annotation::Trigger { time, rule } => [
                    "trigger".to_string(),
                    time.to_string(),
                    print_rule(&model.rules.rules()[*rule], names)?,
                    String::new(),
                ],
                Annotation::Event { time, event_type, value } => [
                    "event".to_string(),
                    time.to_string(),
                    names.name(*event_type).unwrap_or("?").to_string(),
                    value.to_string(),
                ],
            };
            w.write_record(&rec).map_err(csv_err)?;
        }
        finish_csv(w)
    }
}

fn side_rank(s: TraceSide) -> u8 {
    match s {
        TraceSide::Left => 0,
        TraceSide::Grid => 1,
        TraceSide::Right => 2,
    }
}

fn annotation_time(a: &Annotation) -> f64 {
    match a {
        Annotation::Trigger { time, .. } | Annotation::Event { time, .. } => *time,
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

pub(crate) fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Rule, RuleBody as B};
    use crate::training::{fit, ModelOptions};

    fn corpus() -> Vec<EventSequence> {
        let s = |shift: f64| {
            EventSequence::new(
                vec![
                    Event::new(0.5 + shift, 1, 1.25),
                    Event::new(1.0 + shift, 2, -0.5),
                    Event::new(1.5 + shift, 3, 0.0),
                    Event::new(3.0 + shift, 3, 0.0),
                ],
                6.0,
                3,
                3,
            )
            .unwrap()
        };
        vec![s(0.0), s(0.7)]
    }

    #[test]
    fn jsonl_round_trip() {
        let c = corpus();
        let text = corpus_to_jsonl(&c);
        assert_eq!(text.lines().count(), 2);
        assert_eq!(parse_corpus(&text).unwrap(), c);
    }

    #[test]
    fn unsorted_line_rejected_with_number() {
        let good = corpus_to_jsonl(&corpus()[..1]);
        let bad = r#"{"horizon":5.0,"target_type":2,"num_types":2,"events":[{"t":2.0,"k":1,"v":0.0},{"t":1.0,"k":2,"v":0.0}]}"#;
        let err = parse_corpus(&format!("{good}\n{bad}\n")).unwrap_err();
        assert!(matches!(err, Error::AtLine { line: 3, .. }), "{err}");
    }

    #[test]
    fn mixed_schema_rejected() {
        let a = corpus_to_jsonl(&corpus()[..1]);
        let b = r#"{"horizon":5.0,"target_type":2,"num_types":2,"events":[]}"#;
        assert!(matches!(parse_corpus(&format!("{a}{b}\n")), Err(Error::AtLine { line: 2, .. })));
    }

    #[test]
    fn fingerprint_changes_with_content() {
        let c = corpus();
        assert_eq!(CorpusFingerprint::of(&c), CorpusFingerprint::of(&c.clone()));
        assert_ne!(CorpusFingerprint::of(&c), CorpusFingerprint::of(&c[..1]));
    }

    #[test]
    fn config_defaults_and_unknown_keys() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.fit_config(), FitConfig::default());
        assert!(RunConfig::parse("seed = 1\n[fit]\nmax_epoch = 3\n").is_err());
        assert!(RunConfig::parse("colour = 1\n").is_err());
        assert!(RunConfig::parse("[model]\ndelta = -1.0\n").is_err());
        let cfg = RunConfig::parse("seed = 9\n[model]\nmask_policy = \"all_covariates\"\n[mining]\nsubset_size = 2\n").unwrap();
        assert_eq!(cfg.fit_config().seed, 9);
        assert_eq!(cfg.model.mask_policy, MaskPolicy::AllCovariates);
        assert_eq!(cfg.mining.subset_size, 2);
    }

    #[test]
    fn model_json_round_trip_is_byte_identical() {
        let c = corpus();
        let rules = RuleSet::from_rules(3, [Rule::new(B::before(B::leaf(1), B::leaf(2)), 3, 3).unwrap()]).unwrap();
        let cfg = FitConfig {
            max_epochs: 20,
            ..FitConfig::default()
        };
        let m = fit(&c, &rules, &ModelOptions::default(), &cfg).unwrap();
        let names = NameTable::new(vec!["heart rate".into(), "lactate".into(), "Y".into()]).unwrap();
        let a = model_to_json(&m, &names).unwrap();
        let (back, names2) = model_from_json(&a).unwrap();
        assert_eq!(back, m);
        assert_eq!(names2, names);
        assert_eq!(model_to_json(&back, &names2).unwrap(), a);
        back.verify(&c).unwrap();
    }

    #[test]
    fn trace_jumps_at_triggers() {
        let c = corpus();
        let rules = RuleSet::from_rules(3, [Rule::new(B::before(B::leaf(1), B::leaf(2)), 3, 3).unwrap()]).unwrap();
        let mut m = fit(&c, &rules, &ModelOptions::default(), &FitConfig { max_epochs: 0, ..FitConfig::default() }).unwrap();
        m.params.alpha[0] = 1.0;
        let tr = IntensityTrace::compute(&m, &c[0], None).unwrap();
        let left = tr.rows.iter().find(|r| r.side == TraceSide::Left).unwrap();
        let right = tr.rows.iter().find(|r| r.side == TraceSide::Right).unwrap();
        assert_eq!(left.time, 1.0);
        assert!(right.intensity > left.intensity);
        assert!((right.contributions[0] - 1.0).abs() < 1e-12);
        assert!(tr.annotations.contains(&Annotation::Trigger { time: 1.0, rule: 0 }));
        let grid = tr.rows.iter().filter(|r| r.side == TraceSide::Grid).count();
        assert_eq!(grid, 2001);
        let names = NameTable::numbered(3);
        let csv = tr.rows_csv(&m, &names).unwrap();
        assert!(csv.starts_with("time,side,intensity,preactivation,X1 before X2 -> X3\n"));
        let ann = tr.annotations_csv(&m, &names).unwrap();
        assert!(ann.contains("trigger,1,X1 before X2 -> X3,"));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(read_text(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
