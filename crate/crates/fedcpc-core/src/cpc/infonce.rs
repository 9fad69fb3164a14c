//! The contrastive objective.
//!
//! For every context step `t` and offset `k`, the positive latent `z_{t+k}`
//! is scored against `N - 1` negatives drawn uniformly from the other time
//! steps of the same utterance (the positive index is excluded). With the
//! candidate set `Z` (positive in column 0), the per-term loss follows the
//! mean-denominator form
//!
//! `-log( exp(c_t' W_k z_{t+k}) / ((1/N) * sum_{z in Z} exp(c_t' W_k z)) )`
//!
//! which equals `logsumexp(scores) - s_pos - ln N`. The total is the mean
//! over all `(t, k)` terms, so every per-term value is bounded below by
//! `-ln N` and a single candidate (`N = 1`) gives exactly zero loss.

use crate::error::{CoreError, Result};
use crate::tensor::{Graph, NodeId, Scalar};
use rand::Rng;

/// Forward-value diagnostics gathered while building the loss.
#[derive(Debug, Clone)]
pub struct InfoNceDiagnostics {
    pub loss: f64,
    /// fraction of terms whose positive ranks first, per offset k;
    /// ties credit 1/#tied
    pub ranking_accuracy: Vec<f64>,
    /// contrastive terms per offset k
    pub n_terms: Vec<usize>,
    /// true when fewer than two candidates make the contrast degenerate
    pub degenerate: bool,
}

#[derive(Debug)]
pub struct InfoNceOutcome {
    pub loss: NodeId,
    pub diagnostics: InfoNceDiagnostics,
    /// candidate tables per offset (row-major `r x n`), for oracle replay
    pub candidates: Vec<Vec<u32>>,
}

/// Build the InfoNCE loss over `context` `[t_z, h]` and `latents` `[t_z, d]`
/// with one bilinear head per offset. `negatives` is `N - 1`.
pub fn infonce_loss<T: Scalar>(
    g: &mut Graph<T>,
    context: NodeId,
    latents: NodeId,
    heads: &[NodeId],
    negatives: usize,
    rng: &mut impl Rng,
) -> Result<InfoNceOutcome> {
    let t_z = g.value(context).shape()[0];
    if g.value(latents).shape()[0] != t_z {
        return Err(CoreError::InvalidShape(format!(
            "context has {t_z} rows, latents {}",
            g.value(latents).shape()[0]
        )));
    }
    let k_max = heads.len();
    if k_max == 0 {
        return Err(CoreError::Config("no prediction heads".into()));
    }
    if t_z <= k_max {
        return Err(CoreError::Contract(format!(
            "{t_z} latent frames cannot support prediction offset {k_max}"
        )));
    }
    let n_cand = negatives + 1;
    let h = g.value(context).shape()[1];
    let total_terms: usize = (1..=k_max).map(|k| t_z - k).sum();

    let mut loss_acc: Option<NodeId> = None;
    let mut ranking = Vec::with_capacity(k_max);
    let mut n_terms = Vec::with_capacity(k_max);
    let mut candidates = Vec::with_capacity(k_max);
    for (ki, &head) in heads.iter().enumerate() {
        let k = ki + 1;
        let rows = t_z - k;
        let mut cand = vec![0u32; rows * n_cand];
        for r in 0..rows {
            let pos = r + k;
            cand[r * n_cand] = pos as u32;
            for j in 1..n_cand {
                // uniform over the t_z - 1 non-positive steps
                let mut u = rng.gen_range(0..t_z - 1);
                if u >= pos {
                    u += 1;
                }
                cand[r * n_cand + j] = u as u32;
            }
        }
        let ctx_sub = g.slice_rect(context, 0, rows, 0, h)?;
        let scores = g.candidate_scores(ctx_sub, head, latents, &cand, n_cand)?;
        ranking.push(ranking_accuracy(g.value(scores).data(), rows, n_cand));
        n_terms.push(rows);
        candidates.push(cand);

        let logp = g.log_softmax_rows(scores)?;
        let nll = g.nll_loss_mean(logp, &vec![0usize; rows])?;
        let weighted = g.affine(nll, rows as f64 / total_terms as f64, 0.0);
        loss_acc = Some(match loss_acc {
            Some(acc) => g.add(acc, weighted)?,
            None => weighted,
        });
    }
    let acc = loss_acc.expect("at least one offset");
    let loss = g.affine(acc, 1.0, -(n_cand as f64).ln());
    let diagnostics = InfoNceDiagnostics {
        loss: g.value(loss).data()[0].to_f64(),
        ranking_accuracy: ranking,
        n_terms,
        degenerate: n_cand < 2,
    };
    Ok(InfoNceOutcome { loss, diagnostics, candidates })
}

/// Fraction of rows where column 0 holds the maximum; ties credit `1/#tied`,
/// so an all-equal row contributes exactly `1/n`.
fn ranking_accuracy<T: Scalar>(scores: &[T], rows: usize, n: usize) -> f64 {
    if rows == 0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for r in 0..rows {
        let row = &scores[r * n..(r + 1) * n];
        let mut max = row[0];
        for &v in row.iter() {
            if v > max {
                max = v;
            }
        }
        if row[0] == max {
            let ties = row.iter().filter(|&&v| v == max).count();
            acc += 1.0 / ties as f64;
        }
    }
    acc / rows as f64
}
