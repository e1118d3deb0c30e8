//! Generates abrupt, incremental and gradual drift streams from the same
//! templates and prints the concept mix and lexical drift per window.

use odd_core::drift::{drift_profile, generate_stream, ConceptSpec, DriftKind, DriftSchedule, StreamOptions, Template};
use odd_core::Vocab;

fn main() -> odd_core::Result<()> {
    let templates: Vec<Template> = ["please activate my {PLAN} plan today", "is {BRAND} coverage available downtown"]
        .iter()
        .map(|t| t.parse())
        .collect::<odd_core::Result<_>>()?;
    let legacy = ConceptSpec::new("legacy", &[("PLAN", "4G"), ("BRAND", "TelcoOne")]);
    let rebrand = ConceptSpec::new("rebrand", &[("PLAN", "4G"), ("BRAND", "TalkNow")]);
    let current = ConceptSpec::new("current", &[("PLAN", "5G"), ("BRAND", "TalkNow")]);

    let schedules = [
        (DriftKind::Abrupt, vec![legacy.clone(), current.clone()], vec![60], None),
        (DriftKind::Incremental, vec![legacy.clone(), rebrand, current.clone()], vec![40, 80], None),
        (DriftKind::Gradual, vec![legacy, current], vec![], Some((30, 90))),
    ];
    let options = StreamOptions { length: 120, ..StreamOptions::default() };
    for (kind, concepts, switch_points, ramp) in schedules {
        let schedule = DriftSchedule { kind, concepts, switch_points, ramp, seed: 7 };
        let mut vocab = Vocab::new();
        let stream = generate_stream(&templates, &schedule, &options, &mut vocab)?;
        let mix: String = stream.iter().map(|i| i.concept.chars().next().unwrap_or('?')).collect();
        println!("{kind:?}\n  {mix}");
        let profile = drift_profile(&stream, 20)?;
        let line: Vec<String> = profile.iter().map(|(i, d)| format!("{i}:{d:.2}")).collect();
        println!("  drift per window: {}", line.join(" "));
        println!("  first item: {}", vocab.detokenize(&stream[0].reference)?);
    }
    Ok(())
}
