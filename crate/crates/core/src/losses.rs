//! The training objectives: per-token cross-entropy ("local"), the
//! batch-level pairwise margin loss over sentence embeddings ("global"),
//! the closed-form gradient of the latter used as a verification oracle,
//! and the per-variant composition of the two.

use serde::Serialize;

use crate::config::Variant;
use crate::numerics::{Graph, NumericsError, Tensor, Var};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LossError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("cross-entropy over an empty target")]
    EmptyTarget,
    #[error("{logits} logit rows for {targets} target tokens")]
    RowMismatch { logits: usize, targets: usize },
    #[error("variant {variant} requires the {term} loss, which was not computed")]
    MissingTerm { variant: &'static str, term: &'static str },
    #[error("no examples to average")]
    Empty,
}

/// The fixed margin of the pairwise loss.
pub const MARGIN: f64 = 1.0;

/// Predicted and ground-truth sentence embeddings for one batch, one row
/// per sentence.
#[derive(Debug, Clone)]
pub struct BatchEmbeddings {
    pub e_p: Tensor,
    pub e_g: Tensor,
}

impl BatchEmbeddings {
    pub fn n(&self) -> usize {
        self.e_p.rows()
    }
}

/// Per-step loss values as logged during training. `global` is the raw
/// pairwise sum, which includes the constant +1 diagonal terms; subtract
/// the batch size for the effective margin violation.
#[derive(Debug, Clone, Serialize)]
pub struct LossReport {
    pub local: f64,
    pub global: f64,
    pub total: f64,
    pub active_hinges: usize,
}

/// Mean negative log-likelihood of the gold tokens under the per-step
/// logits: `-(1/T) sum_t log softmax(logits_t)[gold_t]`, natural log.
pub fn local_ce(g: &mut Graph, step_logits: &[Var], gold: &[usize]) -> Result<Var, LossError> {
    if gold.is_empty() {
        return Err(LossError::EmptyTarget);
    }
    if step_logits.len() != gold.len() {
        return Err(LossError::RowMismatch {
            logits: step_logits.len(),
            targets: gold.len(),
        });
    }
    let mut acc: Option<Var> = None;
    for (&logit, &tok) in step_logits.iter().zip(gold.iter()) {
        let lp = g.pick_log_softmax(logit, tok)?;
        acc = Some(match acc {
            None => lp,
            Some(a) => g.add(a, lp)?,
        });
    }
    let total = acc.expect("nonempty");
    Ok(g.scale(total, -1.0 / gold.len() as f64))
}

/// Value-level cross-entropy over a `T x V` logits tensor.
pub fn local_ce_value(logits: &Tensor, gold: &[usize]) -> Result<f64, LossError> {
    let mut g = Graph::new();
    let rows: Vec<Var> = (0..logits.rows())
        .map(|r| {
            g.leaf(&Tensor::new(vec![1, logits.cols()], logits.row(r).to_vec()).expect("row"))
        })
        .collect();
    let loss = local_ce(&mut g, &rows, gold)?;
    Ok(g.value(loss).data[0])
}

/// The pairwise margin loss over a batch:
/// `sum_i sum_j max(0, e_p[i]·e_g[j] - e_p[i]·e_g[i] + 1)`.
///
/// The diagonal terms are kept as written; each is exactly the margin
/// constant 1 and carries no gradient, so the raw value is offset by N.
pub fn global_pairwise(g: &mut Graph, e_p: &[Var], e_g: &[Var]) -> Result<Var, LossError> {
    assert!(!e_p.is_empty(), "pairwise loss over an empty batch");
    assert_eq!(e_p.len(), e_g.len(), "batch sides differ");
    let mut acc: Option<Var> = None;
    for i in 0..e_p.len() {
        let own = g.dot(e_p[i], e_g[i])?;
        for j in 0..e_g.len() {
            let cross = g.dot(e_p[i], e_g[j])?;
            let diff = g.sub(cross, own)?;
            let arg = g.add_const(diff, MARGIN);
            let hinge = g.relu_hinge(arg);
            acc = Some(match acc {
                None => hinge,
                Some(a) => g.add(a, hinge)?,
            });
        }
    }
    Ok(acc.expect("nonempty"))
}

/// Value-level pairwise loss, computed through the recorded graph.
pub fn global_pairwise_value(emb: &BatchEmbeddings) -> Result<f64, LossError> {
    let mut g = Graph::new();
    let (e_p, e_g) = register_embeddings(&mut g, emb)?;
    let loss = global_pairwise(&mut g, &e_p, &e_g)?;
    Ok(g.value(loss).data[0])
}

fn register_embeddings(
    g: &mut Graph,
    emb: &BatchEmbeddings,
) -> Result<(Vec<Var>, Vec<Var>), LossError> {
    if emb.e_p.cols() != emb.e_g.cols() || emb.e_p.rows() != emb.e_g.rows() {
        return Err(LossError::Numerics(NumericsError::ShapeMismatch {
            op: "global_pairwise",
            lhs: emb.e_p.shape.clone(),
            rhs: emb.e_g.shape.clone(),
        }));
    }
    let d = emb.e_p.cols();
    let row = |g: &mut Graph, t: &Tensor, r: usize| {
        g.leaf(&Tensor::new(vec![1, d], t.row(r).to_vec()).expect("row"))
    };
    let e_p = (0..emb.e_p.rows()).map(|r| row(g, &emb.e_p, r)).collect();
    let e_g = (0..emb.e_g.rows()).map(|r| row(g, &emb.e_g, r)).collect();
    Ok((e_p, e_g))
}

/// Autodiff gradient of the pairwise loss with respect to both embedding
/// matrices, returned as `(d/de_p, d/de_g)`.
pub fn global_pairwise_autodiff_grad(
    emb: &BatchEmbeddings,
) -> Result<(Tensor, Tensor), LossError> {
    let mut g = Graph::new();
    let (e_p, e_g) = register_embeddings(&mut g, emb)?;
    let loss = global_pairwise(&mut g, &e_p, &e_g)?;
    g.backward(loss)?;
    let d = emb.e_p.cols();
    let collect = |g: &Graph, vars: &[Var]| {
        let mut data = Vec::with_capacity(vars.len() * d);
        for &v in vars {
            data.extend_from_slice(g.grad(v).expect("backward ran"));
        }
        Tensor::new(vec![vars.len(), d], data).expect("grad shape")
    };
    Ok((collect(&g, &e_p), collect(&g, &e_g)))
}

/// Closed-form gradient of the pairwise loss in the regime where every
/// off-diagonal hinge is active:
/// row i of `d/de_p` is `sum_{j != i} (e_g[j] - e_g[i])` and row i of
/// `d/de_g` is `sum_{j != i} (e_p[j] - e_p[i])`.
///
/// This exists as a verification oracle; training always uses the exact
/// subgradient from the recorded graph. Activity of the hinges is the
/// caller's responsibility and is asserted in debug builds.
pub fn global_pairwise_grad_closed_form(emb: &BatchEmbeddings) -> (Tensor, Tensor) {
    let n = emb.n();
    let d = emb.e_p.cols();
    debug_assert!(
        all_off_diagonal_hinges_active(emb),
        "closed form requires every off-diagonal hinge active"
    );
    let mut dp = vec![0.0; n * d];
    let mut dg = vec![0.0; n * d];
    for i in 0..n {
        for j in 0..n {
            if j == i {
                continue;
            }
            for k in 0..d {
                dp[i * d + k] += emb.e_g.row(j)[k] - emb.e_g.row(i)[k];
                dg[i * d + k] += emb.e_p.row(j)[k] - emb.e_p.row(i)[k];
            }
        }
    }
    (
        Tensor::new(vec![n, d], dp).expect("grad shape"),
        Tensor::new(vec![n, d], dg).expect("grad shape"),
    )
}

fn hinge_arg(emb: &BatchEmbeddings, i: usize, j: usize) -> f64 {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(&x, &y)| x * y).sum::<f64>();
    dot(emb.e_p.row(i), emb.e_g.row(j)) - dot(emb.e_p.row(i), emb.e_g.row(i)) + MARGIN
}

pub fn all_off_diagonal_hinges_active(emb: &BatchEmbeddings) -> bool {
    let n = emb.n();
    (0..n).all(|i| (0..n).all(|j| i == j || hinge_arg(emb, i, j) > 0.0))
}

/// Number of off-diagonal pairs with a positive hinge argument.
pub fn active_hinges(emb: &BatchEmbeddings) -> usize {
    let n = emb.n();
    let mut count = 0;
    for i in 0..n {
        for j in 0..n {
            if i != j && hinge_arg(emb, i, j) > 0.0 {
                count += 1;
            }
        }
    }
    count
}

/// Share of sentences whose own ground-truth embedding outscores every
/// other ground truth in the batch: `e_p[i]·e_g[i] > max_{j != i} e_p[i]·e_g[j]`.
pub fn ranking_accuracy(emb: &BatchEmbeddings) -> f64 {
    let n = emb.n();
    if n == 0 {
        return 0.0;
    }
    let mut wins = 0;
    for i in 0..n {
        // hinge_arg(i, j) < MARGIN  <=>  own dot beats cross dot
        if (0..n).all(|j| j == i || hinge_arg(emb, i, j) < MARGIN) {
            wins += 1;
        }
    }
    wins as f64 / n as f64
}

/// Per-batch loss terms; `None` marks a term the variant did not compute.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub local: Option<f64>,
    pub global: Option<f64>,
}

/// Mean over batches of the variant's active terms. Local-only variants
/// ignore any computed global value and vice versa; a variant demanding a
/// term that was never computed is a contract error.
pub fn total_loss(terms: &[LossTerms], variant: Variant) -> Result<f64, LossError> {
    if terms.is_empty() {
        return Err(LossError::Empty);
    }
    let mut sum = 0.0;
    for t in terms {
        sum += step_total(t, variant)?;
    }
    Ok(sum / terms.len() as f64)
}

/// One batch's contribution to the total objective under a variant.
pub fn step_total(terms: &LossTerms, variant: Variant) -> Result<f64, LossError> {
    let mut total = 0.0;
    if variant.uses_local() {
        total += terms.local.ok_or(LossError::MissingTerm {
            variant: variant.name(),
            term: "local",
        })?;
    }
    if variant.uses_discriminator() {
        total += terms.global.ok_or(LossError::MissingTerm {
            variant: variant.name(),
            term: "global",
        })?;
    }
    Ok(total)
}
