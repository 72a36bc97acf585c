use std::rc::Rc;

use super::HompError;
use crate::complex::NeighborhoodSpec;
use crate::tensor::{self, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    Sum,
    Mean,
}

/// How a cell combines its own state with the aggregated messages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Update {
    /// Only the aggregated messages.
    Aggregate,
    /// `(1 + eps) h_x + messages`.
    SelfPlus { eps: f64 },
}

/// Message pairs of one neighborhood in batch-global indices: `targets[i]`
/// receives from `sources[i]`.
#[derive(Debug, Clone, Default)]
pub struct PairList {
    pub targets: Rc<Vec<usize>>,
    pub sources: Rc<Vec<usize>>,
}

impl PairList {
    pub fn new(pairs: &[(usize, usize)]) -> Self {
        PairList {
            targets: Rc::new(pairs.iter().map(|p| p.0).collect()),
            sources: Rc::new(pairs.iter().map(|p| p.1).collect()),
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

pub type MessageFn<'a> = dyn Fn(&mut Tape, Var, Var) -> tensor::Result<Var> + 'a;
pub type Activation<'a> = dyn Fn(&mut Tape, Var) -> tensor::Result<Var> + 'a;

fn rows(tape: &Tape, v: Var) -> usize {
    tape.value(v).rows()
}

fn check_finite(tape: &Tape, states: &[Var], layer: usize) -> Result<(), HompError> {
    for (rank, &s) in states.iter().enumerate() {
        if !tape.value(s).is_finite() {
            return Err(HompError::NonFiniteState { layer, rank });
        }
    }
    Ok(())
}

fn inverse_counts(targets: &[usize], n: usize) -> Vec<f64> {
    let mut c = vec![0usize; n];
    for &t in targets {
        c[t] += 1;
    }
    c.into_iter().map(|c| if c == 0 { 0.0 } else { 1.0 / c as f64 }).collect()
}

/// Generic higher-order message passing. For each cell `x` of rank `r`,
/// every spec targeting `r` contributes `intra`-aggregated messages
/// `theta_k(h_x, h_y)`; these are combined across specs with `inter`,
/// merged with the self state per `update` and passed through `sigma`.
/// Ranks without an applicable spec keep their state.
#[allow(clippy::too_many_arguments)]
pub fn homp_layer(
    tape: &mut Tape,
    states: &[Var],
    specs: &[NeighborhoodSpec],
    pairs: &[PairList],
    theta: &[&MessageFn],
    intra: Aggregator,
    inter: Aggregator,
    update: Update,
    sigma: Option<&Activation>,
    layer: usize,
) -> Result<Vec<Var>, HompError> {
    if let Some(missing) = specs.get(theta.len()) {
        return Err(HompError::MissingTheta(missing.name()));
    }
    let mut out = Vec::with_capacity(states.len());
    for (rank, &h) in states.iter().enumerate() {
        let n = rows(tape, h);
        let mut terms = Vec::new();
        for (k, spec) in specs.iter().enumerate().filter(|(_, s)| s.rank == rank) {
            let src = *states
                .get(spec.source_rank())
                .ok_or_else(|| HompError::Config(format!("no states for rank {}", spec.source_rank())))?;
            let p = &pairs[k];
            let hx = tape.gather_rows(h, p.targets.clone())?;
            let hy = tape.gather_rows(src, p.sources.clone())?;
            let msg = theta[k](tape, hx, hy)?;
            let mut agg = tape.scatter_add_rows(msg, p.targets.clone(), n)?;
            if intra == Aggregator::Mean {
                let w = tape.constant(tensor::Tensor::new(vec![n, 1], inverse_counts(&p.targets, n))?);
                agg = tape.row_scale(agg, w)?;
            }
            terms.push(agg);
        }
        if terms.is_empty() {
            out.push(h);
            continue;
        }
        let count = terms.len();
        let mut combined = tape.add_all(&terms)?;
        if inter == Aggregator::Mean && count > 1 {
            combined = tape.scale(combined, 1.0 / count as f64);
        }
        let mut next = match update {
            Update::Aggregate => combined,
            Update::SelfPlus { eps } => {
                let own = tape.scale(h, 1.0 + eps);
                tape.add(own, combined)?
            }
        };
        if let Some(sigma) = sigma {
            next = sigma(tape, next)?;
        }
        out.push(next);
    }
    check_finite(tape, &out, layer)?;
    Ok(out)
}

/// Which transformation a layer call is asking for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThetaKey {
    /// The transformation of spec `k`.
    Spec(usize),
    /// Self update of a rank that no spec targets.
    SelfRank(usize),
}

/// The GIN-style specialization: for each cell,
/// `sum_k theta_k((1 + eps) h_x + sum_{y in N_k(x)} h_y)` over the specs
/// targeting its rank; ranks without a spec get `theta((1 + eps) h_x)`.
/// `eps` is a `1 x 1` value.
pub fn gifflar_layer(
    tape: &mut Tape,
    states: &[Var],
    specs: &[NeighborhoodSpec],
    pairs: &[PairList],
    eps: Var,
    theta: &mut dyn FnMut(&mut Tape, ThetaKey, Var) -> Result<Var, HompError>,
    layer: usize,
) -> Result<Vec<Var>, HompError> {
    let mut out = Vec::with_capacity(states.len());
    for (rank, &h) in states.iter().enumerate() {
        let n = rows(tape, h);
        let scaled = tape.scale_by(h, eps)?;
        let own = tape.add(h, scaled)?;
        let mut terms = Vec::new();
        for (k, spec) in specs.iter().enumerate().filter(|(_, s)| s.rank == rank) {
            let src = *states
                .get(spec.source_rank())
                .ok_or_else(|| HompError::Config(format!("no states for rank {}", spec.source_rank())))?;
            let p = &pairs[k];
            let hy = tape.gather_rows(src, p.sources.clone())?;
            let nb = tape.scatter_add_rows(hy, p.targets.clone(), n)?;
            let input = tape.add(own, nb)?;
            terms.push(theta(tape, ThetaKey::Spec(k), input)?);
        }
        let next = if terms.is_empty() {
            theta(tape, ThetaKey::SelfRank(rank), own)?
        } else {
            tape.add_all(&terms)?
        };
        out.push(next);
    }
    check_finite(tape, &out, layer)?;
    Ok(out)
}
