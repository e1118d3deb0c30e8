//! Finds the temperature at which the base model's peak probability matches
//! a target, for a few targets including the clamped extremes.

use odd_core::fusion::{calibrate_temperature, softmax_with_temperature};

fn main() -> odd_core::Result<()> {
    let z = [2.0, 1.0, 0.5, -1.0];
    for target in [0.3, 0.5, 0.9, 0.99, 1.0, 0.1] {
        let c = calibrate_temperature(&z, target)?;
        let peak = softmax_with_temperature(&z, c.temperature)?.as_slice().iter().cloned().fold(0.0, f64::max);
        println!(
            "target {target:<5} T = {:<12.6} peak = {peak:.6} {:?} ({} evaluations)",
            c.temperature, c.outcome, c.iterations
        );
    }

    let two = calibrate_temperature(&[1.0, 0.0], 0.6)?;
    println!("two logits, target 0.6: T = {:.6}, closed form {:.6}", two.temperature, 1.0 / 1.5f64.ln());
    Ok(())
}
