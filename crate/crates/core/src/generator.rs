//! Autoregressive generation conditioned on metadata and a chord progression.
//!
//! Any [`SequenceModel`] can drive [`generate`]. Decoding copies the eleven
//! metadata tokens verbatim, masks every token the grammar forbids, never
//! samples a chord, and injects each scheduled chord (position + chord
//! token) as soon as decoding reaches or passes its grid point.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::codec::{
    chord_token, decode, encode_metadata, position_token, validate_grammar, EncodeError,
    GrammarState, GrammarViolation, Phase, TokenSequence,
};
use crate::types::*;
use crate::vocab::*;

/// Scores for the next token given a prefix. Scores are logits: only their
/// differences matter.
pub trait SequenceModel: Send + Sync {
    fn vocab_size(&self) -> usize {
        VOCAB_SIZE
    }

    fn next_logits(&self, context: &[Token]) -> Vec<f64>;
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("corpus sequence {sequence}: {violation}")]
    InvalidSequence {
        sequence: usize,
        violation: GrammarViolation,
    },
    #[error("invalid model parameter: {0}")]
    Parameter(String),
    #[error("sequence has {0} tokens; at least 12 are needed to score the body")]
    TooShort(usize),
    #[error("model file: {0}")]
    Format(String),
}

/// Log-probability assigned to tokens never seen after a context when
/// smoothing is off. exp() of it is 0 in f64 but it stays finite.
pub const LOG_FLOOR: f64 = -1.0e3;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Platform-independent hash of a context (FNV-1a over length and tokens).
pub fn context_hash(context: &[Token]) -> u64 {
    let mut h = FNV_OFFSET;
    let mut feed = |b: u8| {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    };
    for b in (context.len() as u32).to_le_bytes() {
        feed(b);
    }
    for t in context {
        for b in t.to_le_bytes() {
            feed(b);
        }
    }
    h
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    next: HashMap<Token, u64>,
}

/// n-gram model with additive smoothing that backs off to the longest
/// context seen in training.
#[derive(Debug, Clone, PartialEq)]
pub struct CountModel {
    order: usize,
    alpha: f64,
    table: HashMap<u64, ContextCounts>,
}

const MODEL_MAGIC: &[u8; 4] = b"CMKM";
const MODEL_VERSION: u32 = 1;

impl CountModel {
    pub const DEFAULT_ORDER: usize = 4;
    pub const DEFAULT_ALPHA: f64 = 0.1;

    /// An untrained model; it predicts the uniform distribution.
    pub fn new(order: usize, alpha: f64) -> Result<Self, ModelError> {
        if order == 0 {
            return Err(ModelError::Parameter("order must be at least 1".into()));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(ModelError::Parameter(format!("alpha must be >= 0, got {alpha}")));
        }
        Ok(CountModel {
            order,
            alpha,
            table: HashMap::new(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Same counts, different smoothing.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self, ModelError> {
        let mut m = CountModel::new(self.order, alpha)?;
        m.table = self.table.clone();
        Ok(m)
    }

    /// Counts every body token (index 11 onward) under each context length
    /// from 0 to `order - 1`.
    pub fn add_sequence(&mut self, tokens: &[Token]) {
        for t in METADATA_LEN..tokens.len() {
            for k in 0..self.order.min(t + 1) {
                let entry = self
                    .table
                    .entry(context_hash(&tokens[t - k..t]))
                    .or_default();
                entry.total += 1;
                *entry.next.entry(tokens[t]).or_default() += 1;
            }
        }
    }

    /// Occurrences of `token` after exactly `context` (no backoff).
    pub fn count(&self, context: &[Token], token: Token) -> u64 {
        self.table
            .get(&context_hash(context))
            .and_then(|c| c.next.get(&token))
            .copied()
            .unwrap_or(0)
    }

    fn lookup(&self, context: &[Token]) -> Option<&ContextCounts> {
        let longest = (self.order - 1).min(context.len());
        (0..=longest)
            .rev()
            .find_map(|k| self.table.get(&context_hash(&context[context.len() - k..])))
            .filter(|c| c.total > 0)
    }

    /// Smoothed next-token distribution.
    pub fn distribution(&self, context: &[Token]) -> Vec<f64> {
        let v = VOCAB_SIZE as f64;
        match self.lookup(context) {
            None => vec![1.0 / v; VOCAB_SIZE],
            Some(c) => {
                let denom = c.total as f64 + self.alpha * v;
                let mut p = vec![self.alpha / denom; VOCAB_SIZE];
                for (&t, &n) in &c.next {
                    p[t as usize] = (n as f64 + self.alpha) / denom;
                }
                p
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut triples: Vec<(u64, Token, u64)> = self
            .table
            .iter()
            .flat_map(|(&h, c)| c.next.iter().map(move |(&t, &n)| (h, t, n)))
            .collect();
        triples.sort_unstable();
        let mut out = Vec::with_capacity(24 + triples.len() * 18);
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.order as u32).to_le_bytes());
        out.extend_from_slice(&self.alpha.to_le_bytes());
        out.extend_from_slice(&(triples.len() as u64).to_le_bytes());
        for (h, t, n) in triples {
            out.extend_from_slice(&h.to_le_bytes());
            out.extend_from_slice(&t.to_le_bytes());
            out.extend_from_slice(&n.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let err = |m: &str| ModelError::Format(m.to_string());
        if bytes.len() < 28 || &bytes[..4] != MODEL_MAGIC {
            return Err(err("missing CMKM header"));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != MODEL_VERSION {
            return Err(ModelError::Format(format!("unsupported version {version}")));
        }
        let order = u32_at(8) as usize;
        let alpha = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let n = u64_at(20) as usize;
        let body = &bytes[28..];
        if body.len() != n.checked_mul(18).ok_or_else(|| err("triple count overflows"))? {
            return Err(err("triple table length does not match its count"));
        }
        let mut model = CountModel::new(order, alpha)?;
        for rec in body.chunks_exact(18) {
            let h = u64::from_le_bytes(rec[..8].try_into().unwrap());
            let t = u16::from_le_bytes([rec[8], rec[9]]);
            let c = u64::from_le_bytes(rec[10..18].try_into().unwrap());
            if t as usize >= VOCAB_SIZE {
                return Err(ModelError::Format(format!("token {t} out of vocabulary")));
            }
            let entry = model.table.entry(h).or_default();
            entry.total += c;
            *entry.next.entry(t).or_default() += c;
        }
        Ok(model)
    }
}

impl SequenceModel for CountModel {
    fn next_logits(&self, context: &[Token]) -> Vec<f64> {
        self.distribution(context)
            .into_iter()
            .map(|p| if p > 0.0 { p.ln().max(LOG_FLOOR) } else { LOG_FLOOR })
            .collect()
    }
}

/// Fits a count model on grammar-valid sequences.
pub fn train_count_model(
    corpus: &[TokenSequence],
    order: usize,
    alpha: f64,
) -> Result<CountModel, ModelError> {
    if corpus.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let mut model = CountModel::new(order, alpha)?;
    for (i, seq) in corpus.iter().enumerate() {
        if let Some(v) = validate_grammar(seq).violations.into_iter().next() {
            return Err(ModelError::InvalidSequence {
                sequence: i,
                violation: v,
            });
        }
        model.add_sequence(seq);
    }
    Ok(model)
}

fn log_softmax_at(logits: &[f64], index: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits[index] - lse
}

/// Mean negative log-likelihood of the body tokens; the metadata prefix
/// conditions every prediction but is not scored.
pub fn nll(model: &dyn SequenceModel, tokens: &[Token]) -> Result<f64, ModelError> {
    if tokens.len() <= METADATA_LEN {
        return Err(ModelError::TooShort(tokens.len()));
    }
    let total: f64 = (METADATA_LEN..tokens.len())
        .map(|t| -log_softmax_at(&model.next_logits(&tokens[..t]), tokens[t] as usize))
        .sum();
    Ok(total / (tokens.len() - METADATA_LEN) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub top_k: usize,
    pub temperature: f64,
    pub seed: u64,
    pub max_tokens: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            top_k: 32,
            temperature: 0.95,
            seed: 0,
            max_tokens: 2048,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), GenerateError> {
        if self.top_k == 0 {
            return Err(GenerateError::Config("top_k must be at least 1".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(GenerateError::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// The `top_k` most probable tokens after temperature scaling, ties going to
/// the lower id, with their renormalized probabilities. Non-finite logits
/// are excluded.
pub fn top_k_distribution(logits: &[f64], top_k: usize, temperature: f64) -> Vec<(Token, f64)> {
    let mut cands: Vec<(Token, f64)> = logits
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_finite())
        .map(|(i, &l)| (i as Token, l / temperature))
        .collect();
    let by_rank = |a: &(Token, f64), b: &(Token, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    if cands.len() > top_k {
        cands.select_nth_unstable_by(top_k - 1, by_rank);
        cands.truncate(top_k);
    }
    cands.sort_by(by_rank);
    let Some(&(_, max)) = cands.first() else {
        return cands;
    };
    let mut total = 0.0;
    for c in &mut cands {
        c.1 = (c.1 - max).exp();
        total += c.1;
    }
    for c in &mut cands {
        c.1 /= total;
    }
    cands
}

/// Top-k sampling with temperature. `None` when every logit is masked.
pub fn sample_next<R: Rng + ?Sized>(
    logits: &[f64],
    top_k: usize,
    temperature: f64,
    rng: &mut R,
) -> Option<Token> {
    let dist = top_k_distribution(logits, top_k.max(1), temperature);
    let u: f64 = rng.random();
    let mut cdf = 0.0;
    for &(t, p) in &dist {
        cdf += p;
        if u < cdf {
            return Some(t);
        }
    }
    dist.last().map(|&(t, _)| t)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Error)]
pub enum GenerateError {
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error("invalid conditioning: {0}")]
    Conditioning(String),
    #[error(transparent)]
    Metadata(#[from] EncodeError),
    #[error("decoding failed after {} tokens: {reason}", partial.len())]
    Failed {
        reason: String,
        partial: TokenSequence,
    },
}

fn check_progression(chords: &[ChordEvent], num_bars: u32) -> Result<(), GenerateError> {
    let mut prev: Option<(u32, u8)> = None;
    for (i, c) in chords.iter().enumerate() {
        if c.bar >= num_bars || c.position as u32 >= GRID {
            return Err(GenerateError::Conditioning(format!(
                "chord {i} at bar {} position {} lies outside the {num_bars}-bar grid",
                c.bar, c.position
            )));
        }
        if prev.is_some_and(|p| p >= (c.bar, c.position)) {
            return Err(GenerateError::Conditioning(format!(
                "chord {i} is not strictly after the previous chord"
            )));
        }
        prev = Some((c.bar, c.position));
    }
    Ok(())
}

/// Minimum sequence length for a sample with `num_bars` bars and `chords`
/// chord events and no notes.
pub fn minimum_length(num_bars: u32, chords: usize) -> usize {
    METADATA_LEN + num_bars as usize + 2 * chords + 1
}

/// Decodes one token sequence. Every `Ok` result passes
/// [`validate_grammar`] and carries exactly the given chord progression.
/// Keyswitch velocities are never sampled.
pub fn generate(
    model: &dyn SequenceModel,
    metadata: &MetadataSet,
    chords: &[ChordEvent],
    config: &SamplerConfig,
) -> Result<TokenSequence, GenerateError> {
    config.validate()?;
    let num_bars = metadata.num_measures.bars();
    check_progression(chords, num_bars)?;
    let needed = minimum_length(num_bars, chords.len());
    if config.max_tokens < needed {
        return Err(GenerateError::Config(format!(
            "max_tokens {} is below the {needed} tokens this conditioning needs",
            config.max_tokens
        )));
    }

    let mut rng = rng_from_seed(config.seed);
    let mut state = GrammarState::new();
    let mut tokens: TokenSequence = Vec::with_capacity(config.max_tokens.min(4096));
    let fail = |reason: String, tokens: &TokenSequence| GenerateError::Failed {
        reason,
        partial: tokens.clone(),
    };

    for t in encode_metadata(metadata)? {
        state
            .advance(t)
            .map_err(|v| fail(v.to_string(), &tokens))?;
        tokens.push(t);
    }

    let mut pending = chords.iter().peekable();
    while !state.is_done() {
        let at_event_start = state.phase() == Phase::EventStart;
        let mut logits = model.next_logits(&tokens);
        if logits.len() != VOCAB_SIZE {
            return Err(fail(
                format!("model returned {} scores, expected {VOCAB_SIZE}", logits.len()),
                &tokens,
            ));
        }
        // room left for a note plus everything still owed
        let closing = 2 * pending.len() + (num_bars - state.bars_seen()) as usize + 1;
        let note_affordable = tokens.len() + 4 + closing <= config.max_tokens;
        for (t, l) in logits.iter_mut().enumerate() {
            let t = t as Token;
            // velocity bin 0 would decode to a keyswitch, which is not music
            let forbidden = !state.allows(t)
                || Category::Chord.contains(t)
                || t == VELOCITY_BASE
                || (at_event_start && Category::Position.contains(t) && !note_affordable);
            if forbidden || l.is_nan() {
                *l = f64::NEG_INFINITY;
            }
        }
        let Some(next) = sample_next(&logits, config.top_k, config.temperature, &mut rng) else {
            return Err(fail("no admissible continuation".into(), &tokens));
        };

        if at_event_start {
            let bar = state.current_bar();
            let due = |c: &ChordEvent| match next {
                EOS => true,
                BAR => Some(c.bar) == bar,
                p => Some(c.bar) == bar && c.position as Token + POSITION_BASE <= p,
            };
            while let Some(c) = pending.next_if(|c| due(c)) {
                for t in [position_token(c.position), chord_token(c.chord)] {
                    state
                        .advance(t)
                        .map_err(|v| fail(format!("chord injection: {v}"), &tokens))?;
                    tokens.push(t);
                }
            }
        }
        state
            .advance(next)
            .map_err(|v| fail(v.to_string(), &tokens))?;
        tokens.push(next);
    }
    if pending.next().is_some() {
        return Err(fail("chords left unplaced".into(), &tokens));
    }
    Ok(tokens)
}

/// One conditioning for [`batch_generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub metadata: MetadataSet,
    pub chords: ChordProgression,
}

/// Seed of item `index` in a batch.
pub fn derived_seed(base: u64, index: u64) -> u64 {
    base.wrapping_add(index)
}

/// `n` generations per request, decoded to samples. Item `j` of request `i`
/// uses seed `base + i * n + j`, so results do not depend on scheduling and
/// `n = 1` on a single request reproduces [`generate`]. Failures are
/// reported per item.
pub fn batch_generate(
    model: &dyn SequenceModel,
    requests: &[GenerationRequest],
    n: usize,
    config: &SamplerConfig,
) -> Vec<Vec<Result<Sample, GenerateError>>> {
    let jobs: Vec<(usize, usize)> = (0..requests.len())
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .collect();
    let mut results: Vec<Result<Sample, GenerateError>> = jobs
        .par_iter()
        .map(|&(i, j)| {
            let cfg = SamplerConfig {
                seed: derived_seed(config.seed, (i * n + j) as u64),
                ..*config
            };
            let req = &requests[i];
            let tokens = generate(model, &req.metadata, &req.chords, &cfg)?;
            decode(&tokens).map_err(|v| GenerateError::Failed {
                reason: v.to_string(),
                partial: tokens,
            })
        })
        .collect();
    let mut out = Vec::with_capacity(requests.len());
    for _ in 0..requests.len() {
        let rest = results.split_off(n.min(results.len()));
        out.push(std::mem::replace(&mut results, rest));
    }
    out
}
