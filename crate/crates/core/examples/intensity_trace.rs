//! Fit the planted rules and export the intensity of one sequence as CSV.

use hrtpp::io::IntensityTrace;
use hrtpp::simulation::{ScenarioSpec, Simulator, ValueDist};
use hrtpp::training::{fit, FitConfig, ModelOptions};

fn main() -> hrtpp::Result<()> {
    let spec = ScenarioSpec::new(3, 3, -0.5, 10.0, 300, 3)
        .with_uniform_covariates(0.8, ValueDist::Normal { mean: 0.0, std: 1.0 })
        .with_rule("X1 before X2 -> X3", 2.0);
    let sim = Simulator::new(&spec)?;
    let corpus = sim.corpus()?;
    let truth = sim.truth();
    let model = fit(&corpus, &truth.rules, &ModelOptions::default(), &FitConfig::default())?;
    println!("alpha: true {:?}, fitted {:.3?}", truth.params.alpha, model.params.alpha);

    let trace = IntensityTrace::compute(&model, &corpus[0], Some(0.05))?;
    let csv = trace.rows_csv(&model, &truth.names)?;
    for line in csv.lines().take(6) {
        println!("{line}");
    }
    println!("... {} rows", csv.lines().count() - 1);
    print!("{}", trace.annotations_csv(&model, &truth.names)?);
    Ok(())
}
