//! Parse, canonicalize and print rules, and list their triggers on a sequence.

use hrtpp::encoders::TriggerSet;
use hrtpp::{parse_rule, print_rule, Event, EventSequence, NameTable};

fn main() -> hrtpp::Result<()> {
    let names = NameTable::new(vec!["Fever".into(), "Cough".into(), "Rash".into(), "Visit".into()])?;
    let seq = EventSequence::new(
        vec![
            Event::new(0.5, 1, 38.5),
            Event::new(1.0, 2, 1.0),
            Event::new(1.02, 3, 1.0),
            Event::new(2.5, 1, 39.1),
            Event::new(4.0, 2, 1.0),
        ],
        5.0,
        4,
        4,
    )?;
    for text in [
        "Fever before Cough -> Visit",
        "Cough after Fever -> Visit",
        "Rash equal Cough -> Visit",
        "(Fever before Cough) and Rash -> Visit",
    ] {
        let rule = parse_rule(text, &names, 3)?;
        let triggers = TriggerSet::compute(0, rule.body(), &seq, 0.05);
        println!("{text:<40} => {:<36} triggers at {:?}", print_rule(&rule, &names)?, triggers.times);
    }
    match parse_rule("Fever during Cough -> Visit", &names, 3) {
        Ok(_) => unreachable!(),
        Err(e) => println!("rejected: {e}"),
    }
    Ok(())
}
