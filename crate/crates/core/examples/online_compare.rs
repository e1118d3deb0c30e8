//! Runs every decoding strategy over a bundled drift scenario and prints the
//! metric table plus post-drift slot accuracy.

use std::collections::BTreeSet;
use std::path::Path;

use odd_core::cli::run_strategy;
use odd_core::config::RunConfig;
use odd_core::drift::slot_accuracy;
use odd_core::metrics::{aggregate, results_table};
use odd_core::scenario::Experiment;
use odd_core::Strategy;

fn main() -> odd_core::Result<()> {
    let path =
        std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/abrupt.toml").into());
    let experiment = Experiment::load(Path::new(&path))?;
    let config = RunConfig::default();
    let switch = experiment.scenario.schedule.switch_points.first().copied().unwrap_or(0);
    let slots: BTreeSet<String> = experiment
        .scenario
        .parsed_templates()?
        .iter()
        .flat_map(|t| t.placeholders().map(String::from).collect::<Vec<_>>())
        .collect();

    let mut rows = Vec::new();
    for strategy in Strategy::ALL {
        let (records, trie) = run_strategy(&config, &experiment, strategy, false)?;
        let acc = slot_accuracy(&experiment.stream, &records, switch, &slots).unwrap_or(0.0);
        println!("{strategy:<12} slot accuracy after item {switch}: {acc:.3} (trie nodes {})", trie.stats().nodes);
        rows.push((strategy.to_string(), aggregate(&records.iter().map(|r| r.metrics).collect::<Vec<_>>())?));
    }
    print!("{}", results_table(&rows));
    Ok(())
}
