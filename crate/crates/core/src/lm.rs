//! Base next-token models.
//!
//! Anything that can turn a prefix into a logit vector over the shared
//! vocabulary implements [`LogitProvider`]. Three providers ship here: a
//! uniform one, an add-k smoothed n-gram model, and a client for an external
//! process speaking the line protocol below.
//!
//! # External logits protocol
//!
//! Newline-delimited JSON over any byte stream (child stdio or TCP). The
//! server speaks first with a one-line handshake, then answers one response
//! per request:
//!
//! ```text
//! server: {"protocol":"odd-logits","version":1}
//! client: {"prefix":[4,17,2],"vocab":120}
//! server: {"logits":[0.1,-2.3, ...]}          (exactly `vocab` entries)
//! ```
//!
//! Anything else from the server, including a wrong-length vector, surfaces as
//! [`Error::ProviderUnavailable`].

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::TokenId;

pub const PROTOCOL_NAME: &str = "odd-logits";
pub const PROTOCOL_VERSION: u32 = 1;

pub trait LogitProvider {
    fn vocab_size(&self) -> usize;

    /// Unnormalized next-token scores for `prefix`, one per vocabulary entry.
    fn logits(&mut self, prefix: &[TokenId]) -> Result<Vec<f64>>;
}

impl<P: LogitProvider + ?Sized> LogitProvider for Box<P> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn logits(&mut self, prefix: &[TokenId]) -> Result<Vec<f64>> {
        (**self).logits(prefix)
    }
}

fn check_prefix(prefix: &[TokenId], vocab: usize) -> Result<()> {
    match prefix.iter().find(|t| t.index() >= vocab) {
        Some(t) => Err(Error::TokenOutOfRange { id: t.0, vocab }),
        None => Ok(()),
    }
}

/// All-zero logits.
#[derive(Debug, Clone, Copy)]
pub struct UniformProvider {
    pub vocab: usize,
}

impl LogitProvider for UniformProvider {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn logits(&mut self, prefix: &[TokenId]) -> Result<Vec<f64>> {
        check_prefix(prefix, self.vocab)?;
        Ok(vec![0.0; self.vocab])
    }
}

/// Context token used to pad sentence starts; never a real id.
const PAD: TokenId = TokenId(u32::MAX);

/// Add-k smoothed n-gram model. Logits are log conditional probabilities.
///
/// Sentence starts are left-padded, so the first token of a sequence is
/// predicted from an all-padding context. Contexts never seen in training
/// get the uniform distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    order: usize,
    smoothing: f64,
    vocab: usize,
    counts: HashMap<Vec<TokenId>, ContextCounts>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct ContextCounts {
    total: u64,
    next: HashMap<TokenId, u64>,
}

impl NGramModel {
    pub fn train(corpus: &[Vec<TokenId>], order: usize, smoothing: f64, vocab: usize) -> Result<Self> {
        if corpus.iter().all(|s| s.is_empty()) {
            return Err(Error::EmptyCorpus);
        }
        if order == 0 {
            return Err(Error::InvalidConfig("n-gram order must be >= 1".into()));
        }
        if !(smoothing > 0.0 && smoothing.is_finite()) {
            return Err(Error::InvalidConfig(format!("smoothing must be positive, got {smoothing}")));
        }
        if vocab == 0 {
            return Err(Error::InvalidConfig("vocabulary is empty".into()));
        }
        let mut model = NGramModel { order, smoothing, vocab, counts: HashMap::new() };
        for seq in corpus {
            check_prefix(seq, vocab)?;
            for i in 0..seq.len() {
                let ctx = model.context(&seq[..i]);
                let entry = model.counts.entry(ctx).or_default();
                entry.total += 1;
                *entry.next.entry(seq[i]).or_default() += 1;
            }
        }
        Ok(model)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    /// Last `order - 1` tokens of `prefix`, left-padded.
    fn context(&self, prefix: &[TokenId]) -> Vec<TokenId> {
        let n = self.order - 1;
        let take = prefix.len().min(n);
        let mut ctx = vec![PAD; n - take];
        ctx.extend_from_slice(&prefix[prefix.len() - take..]);
        ctx
    }

    pub fn probability(&self, prefix: &[TokenId], next: TokenId) -> f64 {
        let k = self.smoothing;
        let v = self.vocab as f64;
        match self.counts.get(&self.context(prefix)) {
            Some(c) => (c.next.get(&next).copied().unwrap_or(0) as f64 + k) / (c.total as f64 + k * v),
            None => 1.0 / v,
        }
    }

    /// Serializes the count tables as JSON.
    pub fn to_json(&self) -> Result<String> {
        let mut contexts: Vec<(&Vec<TokenId>, &ContextCounts)> = self.counts.iter().collect();
        contexts.sort_by(|a, b| a.0.cmp(b.0));
        let file = ModelFile {
            format: "odd-ngram".into(),
            order: self.order,
            smoothing: self.smoothing,
            vocab: self.vocab,
            contexts: contexts
                .into_iter()
                .map(|(ctx, c)| {
                    let mut next: Vec<(u32, u64)> = c.next.iter().map(|(t, n)| (t.0, *n)).collect();
                    next.sort_unstable();
                    ContextRecord { context: ctx.iter().map(|t| (*t != PAD).then_some(t.0)).collect(), next }
                })
                .collect(),
        };
        serde_json::to_string(&file).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s).map_err(|e| Error::InvalidConfig(format!("model file: {e}")))?;
        if file.format != "odd-ngram"
            || file.order == 0
            || file.vocab == 0
            || !(file.smoothing.is_finite() && file.smoothing > 0.0)
        {
            return Err(Error::InvalidConfig("model file header is invalid".into()));
        }
        let mut counts = HashMap::new();
        for rec in file.contexts {
            if rec.context.len() != file.order - 1 {
                return Err(Error::InvalidConfig("model context has the wrong length".into()));
            }
            let ctx: Vec<TokenId> = rec.context.iter().map(|t| t.map_or(PAD, TokenId)).collect();
            let next: HashMap<TokenId, u64> = rec.next.iter().map(|&(t, n)| (TokenId(t), n)).collect();
            let total = next.values().sum();
            counts.insert(ctx, ContextCounts { total, next });
        }
        Ok(NGramModel { order: file.order, smoothing: file.smoothing, vocab: file.vocab, counts })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    order: usize,
    smoothing: f64,
    vocab: usize,
    contexts: Vec<ContextRecord>,
}

#[derive(Serialize, Deserialize)]
struct ContextRecord {
    /// `null` marks sentence-start padding.
    context: Vec<Option<u32>>,
    next: Vec<(u32, u64)>,
}

impl LogitProvider for NGramModel {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn logits(&mut self, prefix: &[TokenId]) -> Result<Vec<f64>> {
        check_prefix(prefix, self.vocab)?;
        let v = self.vocab as f64;
        let k = self.smoothing;
        Ok(match self.counts.get(&self.context(prefix)) {
            None => vec![-v.ln(); self.vocab],
            Some(c) => {
                let denom = (c.total as f64 + k * v).ln();
                let mut out = vec![k.ln() - denom; self.vocab];
                for (t, &n) in &c.next {
                    out[t.index()] = (n as f64 + k).ln() - denom;
                }
                out
            }
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Handshake {
    protocol: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
struct LogitsRequest {
    prefix: Vec<u32>,
    vocab: usize,
}

#[derive(Serialize, Deserialize)]
struct LogitsResponse {
    logits: Vec<f64>,
}

fn unavailable(msg: impl Into<String>) -> Error {
    Error::ProviderUnavailable(msg.into())
}

/// Client side of the external logits protocol.
pub struct ExternalProvider<R, W> {
    reader: R,
    writer: W,
    vocab: usize,
    line: String,
    child: Option<Child>,
}

impl<R: BufRead, W: Write> ExternalProvider<R, W> {
    /// Wraps an established byte stream and consumes the server handshake.
    pub fn new(mut reader: R, writer: W, vocab: usize) -> Result<Self> {
        let mut line = String::new();
        let n = reader.read_line(&mut line).map_err(|e| unavailable(format!("handshake: {e}")))?;
        if n == 0 {
            return Err(unavailable("connection closed before handshake"));
        }
        let hs: Handshake =
            serde_json::from_str(line.trim_end()).map_err(|e| unavailable(format!("bad handshake: {e}")))?;
        if hs.protocol != PROTOCOL_NAME || hs.version != PROTOCOL_VERSION {
            return Err(unavailable(format!("unsupported protocol {} v{}", hs.protocol, hs.version)));
        }
        Ok(ExternalProvider { reader, writer, vocab, line, child: None })
    }
}

impl ExternalProvider<BufReader<TcpStream>, BufWriter<TcpStream>> {
    pub fn connect<A: ToSocketAddrs>(addr: A, vocab: usize) -> Result<Self> {
        let stream = TcpStream::connect(addr).map_err(|e| unavailable(format!("connect: {e}")))?;
        let write_half = stream.try_clone()?;
        Self::new(BufReader::new(stream), BufWriter::new(write_half), vocab)
    }
}

impl ExternalProvider<BufReader<ChildStdout>, BufWriter<ChildStdin>> {
    /// Starts `program` and talks to it over its stdin/stdout.
    pub fn spawn(program: &str, args: &[String], vocab: usize) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| unavailable(format!("spawn {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut p = Self::new(BufReader::new(stdout), BufWriter::new(stdin), vocab)?;
        p.child = Some(child);
        Ok(p)
    }
}

impl<R, W> Drop for ExternalProvider<R, W> {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl<R: BufRead, W: Write> LogitProvider for ExternalProvider<R, W> {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn logits(&mut self, prefix: &[TokenId]) -> Result<Vec<f64>> {
        check_prefix(prefix, self.vocab)?;
        let req = LogitsRequest { prefix: prefix.iter().map(|t| t.0).collect(), vocab: self.vocab };
        let mut msg = serde_json::to_string(&req).expect("request serializes");
        msg.push('\n');
        self.writer
            .write_all(msg.as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| unavailable(format!("send: {e}")))?;
        self.line.clear();
        let n = self.reader.read_line(&mut self.line).map_err(|e| unavailable(format!("receive: {e}")))?;
        if n == 0 {
            return Err(unavailable("connection closed"));
        }
        let resp: LogitsResponse =
            serde_json::from_str(self.line.trim_end()).map_err(|e| unavailable(format!("malformed response: {e}")))?;
        if resp.logits.len() != self.vocab {
            return Err(unavailable(format!("expected {} logits, got {}", self.vocab, resp.logits.len())));
        }
        Ok(resp.logits)
    }
}

/// Server side of the protocol: answers requests from `reader` with
/// `provider` until end of input.
pub fn serve<P, R, W>(provider: &mut P, reader: R, mut writer: W) -> Result<()>
where
    P: LogitProvider + ?Sized,
    R: BufRead,
    W: Write,
{
    let hs = Handshake { protocol: PROTOCOL_NAME.into(), version: PROTOCOL_VERSION };
    writeln!(writer, "{}", serde_json::to_string(&hs).expect("handshake serializes"))?;
    writer.flush()?;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let req: LogitsRequest =
            serde_json::from_str(&line).map_err(|e| Error::InvalidConfig(format!("bad request: {e}")))?;
        if req.vocab != provider.vocab_size() {
            return Err(Error::InvalidConfig(format!(
                "client vocabulary {} does not match served model {}",
                req.vocab,
                provider.vocab_size()
            )));
        }
        let prefix: Vec<TokenId> = req.prefix.into_iter().map(TokenId).collect();
        let logits = provider.logits(&prefix)?;
        writeln!(writer, "{}", serde_json::to_string(&LogitsResponse { logits }).expect("response serializes"))?;
        writer.flush()?;
    }
    Ok(())
}
