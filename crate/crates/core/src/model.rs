//! The network: temporal-convolution word embedding, LSTM encoder, LSTM
//! decoder, and the discriminator pass that re-encodes generated and
//! ground-truth sentences (optionally sharing the encoder weights).
//!
//! Differentiable paths are expressed as free functions over a [`Graph`]
//! plus registered [`ParamVars`]; `ModelParams` also offers value-level
//! wrappers that run a private graph per call.

use std::path::Path;

use crate::config::{DecoderFeed, TrainConfig, Variant};
use crate::corpus::{TokenSeq, Vocabulary, START_ID, STOP_ID};
use crate::numerics::{Graph, NumericsError, Rng, Tensor, Var};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("token id {id} out of range for vocabulary of {vocab} entries")]
    TokenOutOfRange { id: usize, vocab: usize },
    #[error("cannot encode an empty sequence")]
    EmptySequence,
    #[error("target is not framed with START and STOP")]
    UnframedTarget,
    #[error("distribution row {row} sums to {sum}, not 1")]
    UnnormalizedDistribution { row: usize, sum: f64 },
    #[error("this variant has no separate discriminator weights")]
    DiscriminatorMissing,
    #[error("checkpoint error at byte {offset}: {reason}")]
    Checkpoint { offset: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
}

/// Gate weights for one LSTM: input and recurrent projections into the
/// packed i|f|g|o layout, plus the bias row.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    pub w_x: Tensor, // d x 4d
    pub w_h: Tensor, // d x 4d
    pub b: Tensor,   // 1 x 4d
}

impl LstmWeights {
    fn init(d: usize, scale: f64, rng: &mut Rng) -> Self {
        LstmWeights {
            w_x: Tensor::uniform(vec![d, 4 * d], -scale, scale, rng),
            w_h: Tensor::uniform(vec![d, 4 * d], -scale, scale, rng),
            b: Tensor::zeros(vec![1, 4 * d]),
        }
    }

    fn zeros(d: usize) -> Self {
        LstmWeights {
            w_x: Tensor::zeros(vec![d, 4 * d]),
            w_h: Tensor::zeros(vec![d, 4 * d]),
            b: Tensor::zeros(vec![1, 4 * d]),
        }
    }
}

/// All weight groups of the network.
///
/// Embedding tables hold one `V x d` matrix per convolution tap; with the
/// default kernel width 1 the single table is a plain lookup. `disc` is
/// present only for variants that run a discriminator without sharing the
/// encoder weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub vocab_size: usize,
    pub d: usize,
    pub kernel_widths: Vec<usize>,
    pub embed: Vec<Tensor>,
    pub enc: LstmWeights,
    pub dec: LstmWeights,
    pub dec_in: Tensor, // V x d
    pub out_w: Tensor,  // d x V
    pub out_b: Tensor,  // 1 x V
    pub disc: Option<LstmWeights>,
}

impl ModelParams {
    pub fn init(
        vocab_size: usize,
        d: usize,
        kernel_widths: &[usize],
        separate_discriminator: bool,
        init_scale: f64,
        rng: &mut Rng,
    ) -> Self {
        let taps: usize = kernel_widths.iter().sum();
        let embed = (0..taps)
            .map(|_| Tensor::uniform(vec![vocab_size, d], -init_scale, init_scale, rng))
            .collect();
        ModelParams {
            vocab_size,
            d,
            kernel_widths: kernel_widths.to_vec(),
            embed,
            enc: LstmWeights::init(d, init_scale, rng),
            dec: LstmWeights::init(d, init_scale, rng),
            dec_in: Tensor::uniform(vec![vocab_size, d], -init_scale, init_scale, rng),
            out_w: Tensor::uniform(vec![d, vocab_size], -init_scale, init_scale, rng),
            out_b: Tensor::zeros(vec![1, vocab_size]),
            disc: separate_discriminator.then(|| LstmWeights::init(d, init_scale, rng)),
        }
    }

    pub fn init_for(config: &TrainConfig, vocab_size: usize, rng: &mut Rng) -> Self {
        ModelParams::init(
            vocab_size,
            config.d,
            &config.kernel_widths,
            config.variant.separate_discriminator(),
            config.init_scale,
            rng,
        )
    }

    fn embed_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for &w in &self.kernel_widths {
            for t in 0..w {
                names.push(format!("embed.w{w}.t{t}"));
            }
        }
        names
    }

    /// Stable (name, tensor) listing used for optimization, checkpoints
    /// and logs.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = self
            .embed_names()
            .into_iter()
            .zip(self.embed.iter())
            .collect();
        out.push(("enc.w_x".into(), &self.enc.w_x));
        out.push(("enc.w_h".into(), &self.enc.w_h));
        out.push(("enc.b".into(), &self.enc.b));
        out.push(("dec.w_x".into(), &self.dec.w_x));
        out.push(("dec.w_h".into(), &self.dec.w_h));
        out.push(("dec.b".into(), &self.dec.b));
        out.push(("dec_in".into(), &self.dec_in));
        out.push(("out_w".into(), &self.out_w));
        out.push(("out_b".into(), &self.out_b));
        if let Some(disc) = &self.disc {
            out.push(("disc.w_x".into(), &disc.w_x));
            out.push(("disc.w_h".into(), &disc.w_h));
            out.push(("disc.b".into(), &disc.b));
        }
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let names = self.embed_names();
        let mut out: Vec<(String, &mut Tensor)> =
            names.into_iter().zip(self.embed.iter_mut()).collect();
        out.push(("enc.w_x".into(), &mut self.enc.w_x));
        out.push(("enc.w_h".into(), &mut self.enc.w_h));
        out.push(("enc.b".into(), &mut self.enc.b));
        out.push(("dec.w_x".into(), &mut self.dec.w_x));
        out.push(("dec.w_h".into(), &mut self.dec.w_h));
        out.push(("dec.b".into(), &mut self.dec.b));
        out.push(("dec_in".into(), &mut self.dec_in));
        out.push(("out_w".into(), &mut self.out_w));
        out.push(("out_b".into(), &mut self.out_b));
        if let Some(disc) = &mut self.disc {
            out.push(("disc.w_x".into(), &mut disc.w_x));
            out.push(("disc.w_h".into(), &mut disc.w_h));
            out.push(("disc.b".into(), &mut disc.b));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }

    fn check_ids(&self, ids: &[usize]) -> Result<(), ModelError> {
        for &id in ids {
            if id >= self.vocab_size {
                return Err(ModelError::TokenOutOfRange {
                    id,
                    vocab: self.vocab_size,
                });
            }
        }
        Ok(())
    }
}

/// Graph handles for one LSTM's weights.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub w_x: Var,
    pub w_h: Var,
    pub b: Var,
}

/// Graph handles for every parameter tensor, in `named_params` order.
#[derive(Debug, Clone)]
pub struct ParamVars {
    pub embed: Vec<Var>,
    pub enc: LstmVars,
    pub dec: LstmVars,
    pub dec_in: Var,
    pub out_w: Var,
    pub out_b: Var,
    pub disc: Option<LstmVars>,
}

impl ParamVars {
    pub fn register(g: &mut Graph, params: &ModelParams) -> Self {
        let embed = params.embed.iter().map(|t| g.leaf(t)).collect();
        let lstm = |g: &mut Graph, w: &LstmWeights| LstmVars {
            w_x: g.leaf(&w.w_x),
            w_h: g.leaf(&w.w_h),
            b: g.leaf(&w.b),
        };
        ParamVars {
            embed,
            enc: lstm(g, &params.enc),
            dec: lstm(g, &params.dec),
            dec_in: g.leaf(&params.dec_in),
            out_w: g.leaf(&params.out_w),
            out_b: g.leaf(&params.out_b),
            disc: params.disc.as_ref().map(|w| lstm(g, w)),
        }
    }

    /// Vars aligned with [`ModelParams::named_params`].
    pub fn ordered(&self) -> Vec<Var> {
        let mut out = self.embed.clone();
        for lstm in [Some(self.enc), Some(self.dec)].into_iter().flatten() {
            out.extend([lstm.w_x, lstm.w_h, lstm.b]);
        }
        out.extend([self.dec_in, self.out_w, self.out_b]);
        if let Some(d) = self.disc {
            out.extend([d.w_x, d.w_h, d.b]);
        }
        out
    }

    /// Encoder-side LSTM or the separate discriminator, per the sharing flag.
    fn discriminator_lstm(&self, shared: bool) -> Result<LstmVars, ModelError> {
        if shared {
            Ok(self.enc)
        } else {
            self.disc.ok_or(ModelError::DiscriminatorMissing)
        }
    }
}

/// Recurrent state threaded through a sequence within one graph.
#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

pub fn zero_state(g: &mut Graph, d: usize) -> LstmState {
    let z = g.leaf(&Tensor::zeros(vec![1, d]));
    LstmState { h: z, c: z }
}

/// One step of the standard LSTM cell (gates i, f, o through sigmoid,
/// candidate through tanh, no peepholes).
pub fn lstm_step(
    g: &mut Graph,
    x: Var,
    state: LstmState,
    w: LstmVars,
) -> Result<LstmState, ModelError> {
    let d = g.value(x).cols();
    let xs = g.matmul(x, w.w_x)?;
    let hs = g.matmul(state.h, w.w_h)?;
    let lin = g.add(xs, hs)?;
    let pre = g.add(lin, w.b)?;

    let i_pre = g.slice_cols(pre, 0, d)?;
    let f_pre = g.slice_cols(pre, d, 2 * d)?;
    let g_pre = g.slice_cols(pre, 2 * d, 3 * d)?;
    let o_pre = g.slice_cols(pre, 3 * d, 4 * d)?;

    let i = g.sigmoid(i_pre);
    let f = g.sigmoid(f_pre);
    let cand = g.tanh(g_pre);
    let o = g.sigmoid(o_pre);

    let keep = g.mul(f, state.c)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let c_act = g.tanh(c);
    let h = g.mul(o, c_act)?;
    Ok(LstmState { h, c })
}

/// Temporal-convolution embedding of a hard token sequence: one `1 x d` row
/// per position. Each configured kernel width contributes `width` taps,
/// same-padded around the center; positions outside the sequence contribute
/// zero.
pub fn embed_rows(
    g: &mut Graph,
    params: &ModelParams,
    vars: &ParamVars,
    ids: &[usize],
) -> Result<Vec<Var>, ModelError> {
    params.check_ids(ids)?;
    conv_rows(g, params, vars, ids.len(), |g, table, pos| {
        g.gather_rows(table, &[ids[pos]]).map_err(ModelError::from)
    })
}

/// Soft counterpart of [`embed_rows`]: each position carries a probability
/// row over the vocabulary, and the lookup becomes `dist x table`.
pub fn soft_embed_rows(
    g: &mut Graph,
    params: &ModelParams,
    vars: &ParamVars,
    dists: &[Var],
) -> Result<Vec<Var>, ModelError> {
    conv_rows(g, params, vars, dists.len(), |g, table, pos| {
        g.matmul(dists[pos], table).map_err(ModelError::from)
    })
}

fn conv_rows(
    g: &mut Graph,
    params: &ModelParams,
    vars: &ParamVars,
    len: usize,
    embed_at: impl Fn(&mut Graph, Var, usize) -> Result<Var, ModelError>,
) -> Result<Vec<Var>, ModelError> {
    let mut rows = Vec::with_capacity(len);
    for pos in 0..len {
        let mut acc: Option<Var> = None;
        let mut table_idx = 0;
        for &width in &params.kernel_widths {
            let center = (width - 1) / 2;
            for tap in 0..width {
                let table = vars.embed[table_idx];
                table_idx += 1;
                let src = pos as isize + tap as isize - center as isize;
                if src < 0 || src >= len as isize {
                    continue; // zero padding
                }
                let term = embed_at(g, table, src as usize)?;
                acc = Some(match acc {
                    None => term,
                    Some(a) => g.add(a, term)?,
                });
            }
        }
        // the center tap is always in range, so acc is set
        rows.push(acc.expect("center tap"));
    }
    Ok(rows)
}

/// Embedding matrix for a padded sequence: real positions get their
/// convolution rows, PAD positions get zero rows.
pub fn embed_words(
    g: &mut Graph,
    params: &ModelParams,
    vars: &ParamVars,
    seq: &TokenSeq,
) -> Result<Var, ModelError> {
    if seq.ids.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    let mut rows = embed_rows(g, params, vars, seq.content())?;
    if seq.ids.len() > seq.length {
        let zero = g.leaf(&Tensor::zeros(vec![1, params.d]));
        rows.resize(seq.ids.len(), zero);
    }
    Ok(g.concat_rows(&rows)?)
}

/// Runs the encoder LSTM over embedding rows; the final hidden state is the
/// sentence embedding.
pub fn encode_rows(g: &mut Graph, rows: &[Var], w: LstmVars, d: usize) -> Result<Var, ModelError> {
    if rows.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    let mut state = zero_state(g, d);
    for &row in rows {
        state = lstm_step(g, row, state, w)?;
    }
    Ok(state.h)
}

/// Embeds and encodes the real positions of a sequence. Trailing PAD never
/// enters the recurrence, so padded and unpadded forms encode identically.
pub fn encode_seq(
    g: &mut Graph,
    params: &ModelParams,
    vars: &ParamVars,
    seq: &TokenSeq,
) -> Result<Var, ModelError> {
    if seq.length == 0 {
        return Err(ModelError::EmptySequence);
    }
    let rows = embed_rows(g, params, vars, seq.content())?;
    encode_rows(g, &rows, vars.enc, params.d)
}

/// Per-step decoder logits for a framed target. The sentence embedding is
/// fed as the step -1 input; afterwards each step consumes the previous
/// token's `dec_in` row (ground truth under teacher forcing, own argmax
/// under greedy feed) and the logits at step t predict framed token t+1.
pub fn decode_steps(
    g: &mut Graph,
    params: &ModelParams,
    vars: &ParamVars,
    sentence: Var,
    target: &TokenSeq,
    feed: DecoderFeed,
) -> Result<Vec<Var>, ModelError> {
    let framed = target.content();
    if framed.len() < 2 || framed[0] != START_ID || framed[framed.len() - 1] != STOP_ID {
        return Err(ModelError::UnframedTarget);
    }
    params.check_ids(framed)?;

    let mut state = zero_state(g, params.d);
    state = lstm_step(g, sentence, state, vars.dec)?;

    let mut logits = Vec::with_capacity(framed.len() - 1);
    let mut prev_id = framed[0];
    for t in 0..framed.len() - 1 {
        let input_id = match feed {
            DecoderFeed::Teacher => framed[t],
            DecoderFeed::Greedy => {
                if t == 0 {
                    framed[0]
                } else {
                    prev_id
                }
            }
        };
        let x = g.gather_rows(vars.dec_in, &[input_id])?;
        state = lstm_step(g, x, state, vars.dec)?;
        let proj = g.matmul(state.h, vars.out_w)?;
        let logit = g.add(proj, vars.out_b)?;
        prev_id = argmax(&g.value(logit).data);
        logits.push(logit);
    }
    Ok(logits)
}

/// Lowest index wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Discriminator embedding of the predicted sentence: a START one-hot is
/// prepended, the distribution rows are soft-embedded, and the result runs
/// through the shared encoder or the separate discriminator LSTM.
pub fn discriminator_embed_soft(
    g: &mut Graph,
    params: &ModelParams,
    vars: &ParamVars,
    dists: &[Var],
    shared: bool,
) -> Result<Var, ModelError> {
    let w = vars.discriminator_lstm(shared)?;
    let mut start_row = vec![0.0; params.vocab_size];
    start_row[START_ID] = 1.0;
    let start =
        g.leaf(&Tensor::new(vec![1, params.vocab_size], start_row).expect("start one-hot"));
    let mut all = Vec::with_capacity(dists.len() + 1);
    all.push(start);
    all.extend_from_slice(dists);
    let rows = soft_embed_rows(g, params, vars, &all)?;
    encode_rows(g, &rows, w, params.d)
}

/// Discriminator embedding of a ground-truth sequence: an ordinary encode
/// of the framed tokens through the shared or separate LSTM.
pub fn discriminator_embed_hard(
    g: &mut Graph,
    params: &ModelParams,
    vars: &ParamVars,
    seq: &TokenSeq,
    shared: bool,
) -> Result<Var, ModelError> {
    let w = vars.discriminator_lstm(shared)?;
    if seq.length == 0 {
        return Err(ModelError::EmptySequence);
    }
    let rows = embed_rows(g, params, vars, seq.content())?;
    encode_rows(g, &rows, w, params.d)
}

// ── value-level wrappers ────────────────────────────────────────────────

impl ModelParams {
    pub fn embed_words_value(&self, seq: &TokenSeq) -> Result<Tensor, ModelError> {
        let mut g = Graph::new();
        let vars = ParamVars::register(&mut g, self);
        let m = embed_words(&mut g, self, &vars, seq)?;
        Ok(g.value(m).clone())
    }

    /// Sentence embedding (`1 x d`) of a sequence's real tokens.
    pub fn encode_sentence(&self, seq: &TokenSeq) -> Result<Tensor, ModelError> {
        let mut g = Graph::new();
        let vars = ParamVars::register(&mut g, self);
        let f = encode_seq(&mut g, self, &vars, seq)?;
        Ok(g.value(f).clone())
    }

    /// Teacher-forced decoder logits, one row per predicted framed token.
    pub fn decode_teacher_forced(
        &self,
        sentence: &Tensor,
        target: &TokenSeq,
    ) -> Result<Tensor, ModelError> {
        let mut g = Graph::new();
        let vars = ParamVars::register(&mut g, self);
        let f = g.leaf(sentence);
        let steps = decode_steps(&mut g, self, &vars, f, target, DecoderFeed::Teacher)?;
        let all = g.concat_rows(&steps)?;
        Ok(g.value(all).clone())
    }

    /// Greedy decode from a sentence embedding: emits the argmax token each
    /// step (ties to the lowest id) until STOP or `t_max` tokens.
    pub fn decode_greedy(&self, sentence: &Tensor, t_max: usize) -> Result<TokenSeq, ModelError> {
        assert!(t_max >= 1);
        let mut g = Graph::new();
        let vars = ParamVars::register(&mut g, self);
        let f = g.leaf(sentence);
        let mut state = zero_state(&mut g, self.d);
        state = lstm_step(&mut g, f, state, vars.dec)?;

        let mut out = Vec::new();
        let mut prev = START_ID;
        loop {
            let x = g.gather_rows(vars.dec_in, &[prev])?;
            state = lstm_step(&mut g, x, state, vars.dec)?;
            let proj = g.matmul(state.h, vars.out_w)?;
            let logit = g.add(proj, vars.out_b)?;
            let tok = argmax(&g.value(logit).data);
            if tok == STOP_ID {
                break;
            }
            out.push(tok);
            if out.len() == t_max {
                break;
            }
            prev = tok;
        }
        let length = out.len();
        Ok(TokenSeq { ids: out, length })
    }

    /// Encode-then-decode convenience for inference.
    pub fn generate(&self, source: &TokenSeq, t_max: usize) -> Result<TokenSeq, ModelError> {
        let f = self.encode_sentence(source)?;
        self.decode_greedy(&f, t_max)
    }

    /// Value-level discriminator embedding of softmaxed decoder rows
    /// (`T x V`, each row summing to 1 within 1e-9).
    pub fn discriminator_embed_dists(
        &self,
        dists: &Tensor,
        shared: bool,
    ) -> Result<Tensor, ModelError> {
        let (rows, cols) = (dists.rows(), dists.cols());
        if cols != self.vocab_size {
            return Err(ModelError::Numerics(NumericsError::ShapeMismatch {
                op: "discriminator_embed",
                lhs: dists.shape.clone(),
                rhs: vec![rows, self.vocab_size],
            }));
        }
        for r in 0..rows {
            let sum: f64 = dists.row(r).iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(ModelError::UnnormalizedDistribution { row: r, sum });
            }
        }
        let mut g = Graph::new();
        let vars = ParamVars::register(&mut g, self);
        let dist_vars: Vec<Var> = (0..rows)
            .map(|r| {
                g.leaf(&Tensor::new(vec![1, cols], dists.row(r).to_vec()).expect("dist row"))
            })
            .collect();
        let f = discriminator_embed_soft(&mut g, self, &vars, &dist_vars, shared)?;
        Ok(g.value(f).clone())
    }

    /// Value-level discriminator embedding of a hard token sequence.
    pub fn discriminator_embed_tokens(
        &self,
        seq: &TokenSeq,
        shared: bool,
    ) -> Result<Tensor, ModelError> {
        let mut g = Graph::new();
        let vars = ParamVars::register(&mut g, self);
        let f = discriminator_embed_hard(&mut g, self, &vars, seq, shared)?;
        Ok(g.value(f).clone())
    }
}

// ── checkpoint format ───────────────────────────────────────────────────
//
// magic, version, vocab size, d, variant id, kernel widths, the vocabulary,
// a config blob, then each named tensor as (name, shape, little-endian f64).

const MAGIC: &[u8; 8] = b"PQGNCKPT";
const VERSION: u32 = 1;

pub fn save_checkpoint(
    params: &ModelParams,
    vocab: &Vocabulary,
    config: &TrainConfig,
    path: &Path,
) -> Result<(), ModelError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, VERSION);
    put_u32(&mut buf, params.vocab_size as u32);
    put_u32(&mut buf, params.d as u32);
    buf.push(config.variant.id());
    put_u32(&mut buf, params.kernel_widths.len() as u32);
    for &w in &params.kernel_widths {
        put_u32(&mut buf, w as u32);
    }

    put_u32(&mut buf, vocab.len() as u32);
    for id in 0..vocab.len() {
        put_str(&mut buf, vocab.token(id).expect("vocab id"));
    }

    put_str(&mut buf, &config.to_kv_string());

    let named = params.named_params();
    put_u32(&mut buf, named.len() as u32);
    for (name, tensor) in named {
        put_str(&mut buf, &name);
        put_u32(&mut buf, tensor.shape.len() as u32);
        for &dim in &tensor.shape {
            put_u32(&mut buf, dim as u32);
        }
        for &v in &tensor.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, buf)?;
    Ok(())
}

#[derive(Debug)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub vocab: Vocabulary,
    pub config: TrainConfig,
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    let buf = std::fs::read(path)?;
    let mut r = Reader { buf: &buf, pos: 0 };

    let magic = r.bytes(8, "magic")?;
    if magic != MAGIC {
        return Err(r.fail("bad magic bytes"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(r.fail(&format!("unsupported version {version}")));
    }
    let vocab_size = r.u32("vocab size")? as usize;
    let d = r.u32("hidden size")? as usize;
    let variant_id = r.bytes(1, "variant id")?[0];
    let variant = Variant::from_id(variant_id)
        .ok_or_else(|| r.fail(&format!("unknown variant id {variant_id}")))?;
    let n_widths = r.u32("kernel width count")? as usize;
    let mut kernel_widths = Vec::with_capacity(n_widths);
    for _ in 0..n_widths {
        kernel_widths.push(r.u32("kernel width")? as usize);
    }

    let n_tokens = r.u32("vocabulary size")? as usize;
    let mut tokens = Vec::with_capacity(n_tokens);
    for _ in 0..n_tokens {
        tokens.push(r.str("vocabulary token")?);
    }
    let vocab = Vocabulary::from_lines(tokens)?;
    if vocab.len() != vocab_size {
        return Err(r.fail("vocabulary length disagrees with header"));
    }

    let config_blob = r.str("config blob")?;
    let mut config = TrainConfig::default();
    config.apply_text(&config_blob)?;
    if config.variant != variant {
        return Err(r.fail("config variant disagrees with header"));
    }

    // assemble an empty parameter set, then fill tensors by name
    let mut params = ModelParams {
        vocab_size,
        d,
        kernel_widths: kernel_widths.clone(),
        embed: kernel_widths
            .iter()
            .flat_map(|&w| (0..w).map(move |_| Tensor::zeros(vec![vocab_size, d])))
            .collect(),
        enc: LstmWeights::zeros(d),
        dec: LstmWeights::zeros(d),
        dec_in: Tensor::zeros(vec![vocab_size, d]),
        out_w: Tensor::zeros(vec![d, vocab_size]),
        out_b: Tensor::zeros(vec![1, vocab_size]),
        disc: variant.separate_discriminator().then(|| LstmWeights::zeros(d)),
    };

    let n_tensors = r.u32("tensor count")? as usize;
    let expected = params.named_params().len();
    if n_tensors != expected {
        return Err(r.fail(&format!("expected {expected} tensors, found {n_tensors}")));
    }
    for _ in 0..n_tensors {
        let name = r.str("tensor name")?;
        let rank = r.u32("tensor rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("tensor dim")? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(r.f64("tensor data")?);
        }
        let slot = params
            .named_params_mut()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t as *mut Tensor);
        let Some(slot) = slot else {
            return Err(r.fail(&format!("unexpected tensor `{name}`")));
        };
        // SAFETY: slot points into params, which outlives this loop body,
        // and named_params_mut hands out disjoint tensors.
        let tensor = unsafe { &mut *slot };
        if tensor.shape != shape {
            return Err(r.fail(&format!(
                "tensor `{name}` has shape {shape:?}, expected {:?}",
                tensor.shape
            )));
        }
        tensor.data = data;
    }
    if r.pos != buf.len() {
        return Err(r.fail("trailing bytes after last tensor"));
    }
    Ok(Checkpoint {
        params,
        vocab,
        config,
    })
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len() as u32);
    buf.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail(&self, reason: &str) -> ModelError {
        ModelError::Checkpoint {
            offset: self.pos,
            reason: reason.to_string(),
        }
    }

    fn bytes(&mut self, n: usize, what: &str) -> Result<&'a [u8], ModelError> {
        if self.pos + n > self.buf.len() {
            return Err(self.fail(&format!("truncated while reading {what}")));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32, ModelError> {
        let b = self.bytes(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64, ModelError> {
        let b = self.bytes(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }

    fn str(&mut self, what: &str) -> Result<String, ModelError> {
        let len = self.u32(what)? as usize;
        let b = self.bytes(len, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| self.fail(&format!("non-UTF-8 {what}")))
    }
}
