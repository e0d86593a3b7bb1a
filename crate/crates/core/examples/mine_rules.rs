//! Mine rules from data generated by a planted rule: filter predicates,
//! enumerate candidates and search subsets.

use hrtpp::mining::{mine, MiningConfig};
use hrtpp::simulation::{ScenarioSpec, Simulator, ValueDist};
use hrtpp::training::{FitConfig, ModelOptions};

fn main() -> hrtpp::Result<()> {
    let spec = ScenarioSpec::new(4, 4, -1.0, 10.0, 600, 9)
        .with_uniform_covariates(0.5, ValueDist::Normal { mean: 0.0, std: 1.0 })
        .with_rule("X1 before X2 -> X4", 2.5);
    let sim = Simulator::new(&spec)?;
    let corpus = sim.corpus()?;
    let names = &sim.truth().names;

    let config = MiningConfig {
        subset_size: 1,
        budget: 20,
        ..MiningConfig::default()
    };
    let fit_config = FitConfig {
        max_epochs: 200,
        ..FitConfig::default()
    };
    let report = mine(&corpus, &ModelOptions::default(), &fit_config, &config, 2)?;
    if let Some(filter) = &report.filter {
        println!("retained predicates: {:?}", filter.retained);
    }
    println!("candidate pool: {} rules", report.pool.len());
    println!("evaluations: {}, cache hit rate {:.2}", report.evaluations.len(), report.cache_hit_rate());
    print!("mined:\n{}", report.rules_text(names)?);
    println!("planted:\n{}", sim.manifest()?.true_rules.join("\n"));
    Ok(())
}
