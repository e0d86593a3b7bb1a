//! Fit a rule-free model to homogeneous Poisson data and compare with the
//! closed-form rate estimate.

use hrtpp::intensity::{softplus, softplus_inverse};
use hrtpp::simulation::{simulate_corpus, ScenarioSpec};
use hrtpp::training::{fit, FitConfig, ModelOptions};
use hrtpp::RuleSet;

fn main() -> hrtpp::Result<()> {
    let rate = 2.0;
    let spec = ScenarioSpec::new(1, 1, softplus_inverse(rate, 1.0), 10.0, 500, 7);
    let (corpus, _) = simulate_corpus(&spec)?;
    let model = fit(&corpus, &RuleSet::unbounded(1), &ModelOptions::default(), &FitConfig::default())?;
    let fitted = softplus(model.params.lambda0, model.params.gamma());
    let count: usize = corpus.iter().map(|s| s.target_times().len()).sum();
    println!("true rate      {rate}");
    println!("count / time   {:.4}", count as f64 / (corpus.len() as f64 * 10.0));
    println!("fitted rate    {fitted:.4}");
    println!("train NLL      {:.4} after {} epochs", model.train_nll, model.epochs_run);
    Ok(())
}
