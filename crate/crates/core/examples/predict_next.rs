//! Next-event prediction: expected time, density and sampled continuations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hrtpp::simulation::{sample_continuation, ScenarioSpec, Simulator, ValueDist};
use hrtpp::training::{fit, next_event_density, predict_next_time, survival, FitConfig, ModelOptions};

fn main() -> hrtpp::Result<()> {
    let spec = ScenarioSpec::new(3, 3, -1.0, 10.0, 400, 5)
        .with_uniform_covariates(0.6, ValueDist::Normal { mean: 0.0, std: 1.0 })
        .with_rule("X1 before X2 -> X3", 2.5);
    let sim = Simulator::new(&spec)?;
    let corpus = sim.corpus()?;
    let model = fit(&corpus, &sim.truth().rules, &ModelOptions::default(), &FitConfig::default())?;

    let seq = &corpus[0];
    let t_from = seq.horizon();
    let expected = predict_next_time(&model, seq, t_from)?;
    println!("expected next target after t={t_from}: {expected:.3}");
    for dt in [0.5, 1.0, 2.0, 4.0] {
        let t = t_from + dt;
        println!(
            "  t={t:>5.2}  density {:.4}  survival {:.4}",
            next_event_density(&model, seq, t_from, t)?,
            survival(&model, seq, t_from, t)?
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let draws: Vec<f64> = (0..2000)
        .map(|_| sample_continuation(&model, seq, t_from, &mut rng))
        .collect::<hrtpp::Result<_>>()?;
    println!("mean of 2000 thinning draws: {:.3}", draws.iter().sum::<f64>() / draws.len() as f64);
    Ok(())
}
