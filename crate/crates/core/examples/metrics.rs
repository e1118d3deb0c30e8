//! Scores hypotheses against a reference and bootstraps confidence intervals
//! over a small batch.

use odd_core::metrics::{aggregate, bootstrap_ci, evaluate_pair, MetricBundle, METRIC_NOTES};

fn main() -> odd_core::Result<()> {
    let reference = "please activate my 5G plan today";
    let hyps = [
        "please activate my 5G plan today",
        "please activate my 4G plan today",
        "please activate my plan",
        "reset password for TalkNowApp account access",
    ];
    println!("{METRIC_NOTES}\n");
    println!("{:<46} {}", "hypothesis", MetricBundle::FIELDS.join("  "));
    let mut bundles = Vec::new();
    for h in hyps {
        let m = evaluate_pair(reference, h)?;
        let cells: Vec<String> = m.values().iter().map(|v| format!("{v:.3}")).collect();
        println!("{h:<46} {}", cells.join("  "));
        bundles.push(m);
    }
    let mean = aggregate(&bundles)?;
    let ci = bootstrap_ci(&bundles, 1_000, 0.95, 42)?;
    for (i, name) in MetricBundle::FIELDS.iter().enumerate() {
        println!(
            "{name:<8} mean {:.3}  95% CI [{:.3}, {:.3}]",
            mean.values()[i],
            ci.lower.values()[i],
            ci.upper.values()[i]
        );
    }
    Ok(())
}
