//! Draw a synthetic corpus from a planted two-rule model and write it to disk.

use hrtpp::io::{write_corpus, write_json};
use hrtpp::simulation::{ScenarioSpec, Simulator, ValueDist};

fn main() -> hrtpp::Result<()> {
    let spec = ScenarioSpec::new(5, 5, -1.0, 20.0, 200, 42)
        .with_uniform_covariates(0.5, ValueDist::Normal { mean: 0.0, std: 1.0 })
        .with_rule("X1 before X2 -> X5", 2.0)
        .with_rule("X3 and X4 -> X5", -1.0);
    let sim = Simulator::new(&spec)?;
    let corpus = sim.corpus()?;
    let targets: usize = corpus.iter().map(|s| s.target_times().len()).sum();
    let events: usize = corpus.iter().map(|s| s.len()).sum();
    println!("{} sequences, {events} events, {targets} targets", corpus.len());

    let dir = std::env::temp_dir().join("hrtpp_simulate_corpus");
    write_corpus(&dir.join("corpus.jsonl"), &corpus)?;
    write_json(&dir.join("manifest.json"), &sim.manifest()?)?;
    println!("written to {}", dir.display());
    for line in sim.manifest()?.true_rules {
        println!("  {line}");
    }
    Ok(())
}
