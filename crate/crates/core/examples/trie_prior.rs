//! Scores the trie's continuations of a prefix and shows the normalized
//! features behind each candidate and the resulting prior.

use odd_core::{trie_prior, PrefixTrie, ScoringWeights, Vocab};

fn main() -> odd_core::Result<()> {
    let mut vocab = Vocab::new();
    let mut trie = PrefixTrie::default();
    let history = [
        ("please activate your plan 4G", 100),
        ("please activate your plan 4G", 160),
        ("please activate your plan 5G", 300),
    ];
    for (text, ts) in history {
        trie.insert_sequence(&vocab.tokenize(text, true)?, ts)?;
    }

    let prefix = vocab.lookup("please activate your plan")?;
    let Some((cands, prior)) = trie_prior(&trie, &prefix, 360, &ScoringWeights::default())? else {
        println!("no candidates");
        return Ok(());
    };
    println!("{:<8} {:>6} {:>6} {:>6} {:>7} {:>7}", "token", "F'", "L'", "R'", "score", "prior");
    for (tok, c) in &cands.entries {
        let n = c.normalized;
        println!(
            "{:<8} {:>6.3} {:>6.3} {:>6.3} {:>7.4} {:>7.4}",
            vocab.token(*tok).unwrap_or("?"),
            n.frequency,
            n.length,
            n.recency,
            c.score,
            prior.get(*tok)
        );
    }
    Ok(())
}
