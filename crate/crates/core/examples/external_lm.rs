//! Serves an n-gram model over the line-delimited logits protocol on a local
//! TCP port and decodes through it as a remote client would.

use std::io::{BufReader, BufWriter};
use std::net::TcpListener;
use std::thread;

use odd_core::drift::{decode, HarnessConfig};
use odd_core::lm::{serve, ExternalProvider};
use odd_core::{LogitProvider, NGramModel, PrefixTrie, Vocab};

fn main() -> odd_core::Result<()> {
    let mut vocab = Vocab::new();
    let end = vocab.intern("</s>");
    let mut corpus = Vec::new();
    for text in ["reset password for MyTelco account access", "please activate my 4G plan today"] {
        let mut ids = vocab.tokenize(text, true)?;
        ids.push(end);
        corpus.push(ids);
    }
    let mut model = NGramModel::train(&corpus, 3, 0.01, vocab.len())?;

    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let server = thread::spawn(move || -> odd_core::Result<()> {
        let (stream, _) = listener.accept()?;
        serve(&mut model, BufReader::new(stream.try_clone()?), BufWriter::new(stream))
    });

    let mut remote = ExternalProvider::connect(addr, vocab.len())?;
    println!("connected to {addr}, vocabulary {}", remote.vocab_size());
    let trie = PrefixTrie::default();
    let config = HarnessConfig { end_marker: Some(end), ..HarnessConfig::default() };
    let prompt = vocab.lookup("reset password")?;
    let (generated, steps) = decode(&prompt, &trie, &mut remote, &config, 0)?;
    println!("{} ... {} ({} steps)", vocab.detokenize(&prompt)?, vocab.detokenize(&generated)?, steps.len());

    drop(remote);
    server.join().expect("server thread")?;
    Ok(())
}
