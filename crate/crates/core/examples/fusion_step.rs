//! Runs single fusion steps by hand: a confident prior that disagrees with the
//! base model, then a few steps where both agree and the agreement run grows.

use odd_core::prior::SparseDistribution;
use odd_core::{fuse_step, FusionConfig, FusionState, Strategy, TokenId};

fn main() -> odd_core::Result<()> {
    let disagree = [1.2, 0.4, 0.9, -0.5];
    let agree = [0.2, 1.5, 0.9, -0.5];
    let prior = SparseDistribution::from_probs([(TokenId(1), 0.8), (TokenId(2), 0.2)])?;
    let config = FusionConfig::preset(Strategy::Odd);
    let mut state = FusionState::default();

    for (step, z) in [disagree, agree, agree, agree, agree].iter().enumerate() {
        let out = fuse_step(z, Some(&prior), &mut state, &config)?;
        let d = out.diagnostics;
        println!(
            "step {step}: token {} T={:.4} c_lm={:.4} c_trie={:.4} omega={:.4} continuity={:.4} lm_weight={:.4}",
            d.token, d.temperature, d.c_lm, d.c_trie, d.disagreement, d.continuity, d.lm_weight
        );
        if let Some(fused) = out.fused {
            println!(
                "        fused {:?}",
                fused.as_slice().iter().map(|p| (p * 1e4).round() / 1e4).collect::<Vec<_>>()
            );
        }
    }

    let greedy =
        fuse_step(&disagree, Some(&prior), &mut FusionState::default(), &FusionConfig::preset(Strategy::Greedy))?;
    println!("greedy ignores the prior: token {} (bypass {})", greedy.token, greedy.diagnostics.bypass);
    Ok(())
}
