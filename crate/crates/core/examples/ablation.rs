//! Numeric-feature ablation on a scenario whose numeric values matter.

use hrtpp::eval::run_ablation;
use hrtpp::simulation::{ScenarioSpec, ValueDist};
use hrtpp::training::FitConfig;
use hrtpp::MaskPolicy;

fn main() -> hrtpp::Result<()> {
    let mut spec = ScenarioSpec::new(4, 4, -0.5, 10.0, 500, 21)
        .with_uniform_covariates(0.5, ValueDist::Normal { mean: 0.5, std: 1.0 })
        .with_rule("X1 before X2 -> X4", 1.5)
        .with_beta(vec![1.0, 1.0, 1.0, 0.0]);
    spec.mask_policy = MaskPolicy::AllCovariates;
    let grid = run_ablation(&spec, &FitConfig::default())?;
    print!("{}", grid.table());
    println!("numeric features help: {}", grid.nfa_helps());
    Ok(())
}
