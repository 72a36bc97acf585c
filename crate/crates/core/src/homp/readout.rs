use std::rc::Rc;

use super::{CellBatch, HompError, PoolingMode, N_RANKS};
use crate::tensor::{Tape, Tensor, Var};

/// Learnable pieces of the readout: per-rank weights (`3 x 1`) for the
/// weighted modes and a scoring layer (`hidden x 1` plus bias) for the
/// attention modes.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReadoutParams {
    pub rank_weights: Option<Var>,
    pub gate: Option<(Var, Var)>,
}

fn presence(batch: &CellBatch) -> Vec<[bool; N_RANKS]> {
    (0..batch.n_graphs)
        .map(|g| {
            let mut p = [false; N_RANKS];
            for (r, slot) in p.iter_mut().enumerate() {
                let end = batch.offsets.get(g + 1).map_or(batch.n_cells[r], |o| o[r]);
                *slot = end > batch.offsets[g][r];
            }
            p
        })
        .collect()
}

fn attention_pool(
    tape: &mut Tape,
    h: Var,
    segment: Rc<Vec<usize>>,
    n_graphs: usize,
    gate: (Var, Var),
) -> Result<Var, HompError> {
    let scores = tape.linear(h, gate.0, Some(gate.1))?;
    let alpha = tape.segment_softmax(scores, segment.clone(), n_graphs)?;
    let weighted = tape.row_scale(h, alpha)?;
    Ok(tape.segment_sum(weighted, segment, n_graphs)?)
}

/// Pools per-rank cell states into one row per graph.
pub fn readout(
    tape: &mut Tape,
    states: &[Var],
    batch: &CellBatch,
    mode: PoolingMode,
    params: ReadoutParams,
) -> Result<Var, HompError> {
    let g = batch.n_graphs;
    let present = presence(batch);
    if present.iter().any(|p| !p.iter().any(|&x| x)) {
        return Err(HompError::EmptyComplex);
    }
    let gate = || params.gate.ok_or_else(|| HompError::Config("attention readout without a gate".into()));
    match mode {
        PoolingMode::GlobalMean | PoolingMode::GlobalAttention => {
            let all = tape.concat_rows(&states[..N_RANKS])?;
            let segment: Vec<usize> = batch.graph_of.iter().flat_map(|s| s.iter().copied()).collect();
            let segment = Rc::new(segment);
            if mode == PoolingMode::GlobalMean {
                Ok(tape.segment_mean(all, segment, g)?)
            } else {
                attention_pool(tape, all, segment, g, gate()?)
            }
        }
        _ => {
            let mut per_rank = Vec::with_capacity(N_RANKS);
            for r in 0..N_RANKS {
                let seg = batch.graph_of[r].clone();
                let pooled = if mode.is_attention() {
                    attention_pool(tape, states[r], seg, g, gate()?)?
                } else {
                    tape.segment_mean(states[r], seg, g)?
                };
                let w: Vec<f64> = present
                    .iter()
                    .map(|p| {
                        if !p[r] {
                            0.0
                        } else if mode.is_weighted() {
                            1.0
                        } else {
                            1.0 / p.iter().filter(|&&x| x).count() as f64
                        }
                    })
                    .collect();
                let w = tape.constant(Tensor::new(vec![g, 1], w)?);
                let mut term = tape.row_scale(pooled, w)?;
                if mode.is_weighted() {
                    let rw = params
                        .rank_weights
                        .ok_or_else(|| HompError::Config("weighted readout without rank weights".into()))?;
                    let wr = tape.gather_rows(rw, Rc::new(vec![r]))?;
                    term = tape.scale_by(term, wr)?;
                }
                per_rank.push(term);
            }
            Ok(tape.add_all(&per_rank)?)
        }
    }
}
