//! Builds a small trie and prints every node with its frequency, depth and
//! last-seen timestamp, then round-trips it through a snapshot.

use odd_core::{PrefixTrie, Vocab};

fn main() -> odd_core::Result<()> {
    let mut vocab = Vocab::new();
    let mut trie = PrefixTrie::default();
    for (text, ts) in [("please activate your plan 4G", 100), ("please activate your plan 5G", 200)] {
        let ids = vocab.tokenize(text, true)?;
        trie.insert_sequence(&ids, ts)?;
    }

    trie.walk(|path, f| {
        let text = vocab.detokenize(path).unwrap_or_default();
        println!("{text:<32} F={} L={} R={}", f.frequency, f.depth, f.recency);
    });
    let stats = trie.stats();
    println!("{} nodes, {} inserted positions", stats.nodes, stats.total_insertions);

    let bytes = trie.snapshot();
    let restored = PrefixTrie::restore(&bytes)?;
    println!("snapshot: {} bytes, round trip equal: {}", bytes.len(), restored == trie);
    Ok(())
}
