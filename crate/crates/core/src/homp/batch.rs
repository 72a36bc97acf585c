use std::rc::Rc;

use super::layer::PairList;
use super::HompError;
use crate::complex::{CellKind, CombinatorialComplex, NeighborhoodSpec};
use crate::glycan::{vocabulary_index, VOCABULARY};
use crate::molgraph::{BondOrder, Element};
use crate::tensor::Tensor;

pub const N_RANKS: usize = 3;

/// Rows of the frozen class-embedding table of each rank: elements, bond
/// order x glycosidic flag, monosaccharide names plus one unknown slot.
pub const CLASS_COUNTS: [usize; N_RANKS] = [10, 6, VOCABULARY.len() + 1];

pub fn class_index(rank: usize, kind: &CellKind) -> usize {
    match kind {
        CellKind::Atom(e) => match e {
            Element::B => 0,
            Element::C => 1,
            Element::N => 2,
            Element::O => 3,
            Element::F => 4,
            Element::P => 5,
            Element::S => 6,
            Element::Cl => 7,
            Element::Br => 8,
            Element::I => 9,
        },
        CellKind::Bond { order, glycosidic } => {
            let o = match order {
                BondOrder::Single => 0,
                BondOrder::Double => 1,
                BondOrder::Aromatic => 2,
            };
            o * 2 + *glycosidic as usize
        }
        CellKind::Monomer { name, .. } => vocabulary_index(name).unwrap_or(VOCABULARY.len()),
        CellKind::Generic(c) => *c as usize % CLASS_COUNTS[rank.min(N_RANKS - 1)],
    }
}

/// Everything the model needs from one complex, precomputed once.
#[derive(Debug, Clone)]
pub struct GlycanCells {
    pub n_cells: [usize; N_RANKS],
    pub classes: [Vec<usize>; N_RANKS],
    /// One list per neighborhood: `(target, source)` pairs local to this complex.
    pub pairs: Vec<Vec<(usize, usize)>>,
    /// For each neighborhood, the target and source ranks.
    pub pair_ranks: Vec<(usize, usize)>,
    /// Rank-0 positional encodings, `n_cells[0] x pe_dim`.
    pub pe: Option<Tensor>,
}

impl GlycanCells {
    pub fn new(cc: &CombinatorialComplex, specs: &[NeighborhoodSpec], pe: Option<Tensor>) -> Result<Self, HompError> {
        if cc.total_cells() == 0 {
            return Err(HompError::EmptyComplex);
        }
        let mut n_cells = [0; N_RANKS];
        let mut classes: [Vec<usize>; N_RANKS] = Default::default();
        for r in 0..N_RANKS.min(cc.n_ranks()) {
            n_cells[r] = cc.n_cells(r);
            classes[r] = cc.kinds(r).iter().map(|k| class_index(r, k)).collect();
        }
        if let Some(p) = &pe {
            if p.rows() != n_cells[0] {
                return Err(HompError::DimensionMismatch {
                    what: "positional encoding rows",
                    expected: n_cells[0],
                    found: p.rows(),
                });
            }
        }
        let mut pairs = Vec::with_capacity(specs.len());
        for s in specs {
            if s.rank >= N_RANKS || s.source_rank() >= N_RANKS {
                return Err(HompError::Config(format!("neighborhood {s} exceeds rank 2")));
            }
            pairs.push(cc.adjacency(s)?);
        }
        Ok(GlycanCells {
            n_cells,
            classes,
            pairs,
            pair_ranks: specs.iter().map(|s| (s.rank, s.source_rank())).collect(),
            pe,
        })
    }
}

/// Several complexes stacked rank by rank, with pair lists shifted into
/// batch-global indices.
#[derive(Debug, Clone)]
pub struct CellBatch {
    pub n_graphs: usize,
    pub n_cells: [usize; N_RANKS],
    /// `offsets[g][r]`: first row of graph `g` in rank `r`.
    pub offsets: Vec<[usize; N_RANKS]>,
    pub graph_of: [Rc<Vec<usize>>; N_RANKS],
    pub classes: [Rc<Vec<usize>>; N_RANKS],
    pub pairs: Vec<PairList>,
    pub pe: Option<Tensor>,
    /// Per-graph features appended to the pooled embedding.
    pub extra: Option<Tensor>,
}

impl CellBatch {
    pub fn from_cells(items: &[&GlycanCells]) -> Result<Self, HompError> {
        if items.is_empty() {
            return Err(HompError::EmptyComplex);
        }
        let n_specs = items[0].pairs.len();
        let pe_dim = items[0].pe.as_ref().map(|p| p.cols());
        let mut n_cells = [0; N_RANKS];
        let mut offsets = Vec::with_capacity(items.len());
        let mut graph_of: [Vec<usize>; N_RANKS] = Default::default();
        let mut classes: [Vec<usize>; N_RANKS] = Default::default();
        let mut pairs: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_specs];
        let mut pe_rows = Vec::new();
        for (g, item) in items.iter().enumerate() {
            if item.pair_ranks != items[0].pair_ranks || item.pe.as_ref().map(|p| p.cols()) != pe_dim {
                return Err(HompError::Config("batch items prepared with different settings".into()));
            }
            offsets.push(n_cells);
            for (k, list) in item.pairs.iter().enumerate() {
                let (rt, rs) = item.pair_ranks[k];
                let (ot, os) = (n_cells[rt], n_cells[rs]);
                pairs[k].extend(list.iter().map(|&(t, s)| (t + ot, s + os)));
            }
            for r in 0..N_RANKS {
                graph_of[r].extend(std::iter::repeat_n(g, item.n_cells[r]));
                classes[r].extend_from_slice(&item.classes[r]);
            }
            if let Some(p) = &item.pe {
                pe_rows.extend_from_slice(p.data());
            }
            for r in 0..N_RANKS {
                n_cells[r] += item.n_cells[r];
            }
        }
        Ok(CellBatch {
            n_graphs: items.len(),
            n_cells,
            offsets,
            graph_of: graph_of.map(Rc::new),
            classes: classes.map(Rc::new),
            pairs: pairs.iter().map(|p| PairList::new(p)).collect(),
            pe: pe_dim.map(|d| Tensor::new(vec![n_cells[0], d], pe_rows)).transpose()?,
            extra: None,
        })
    }

    pub fn with_extra(mut self, extra: Tensor) -> Result<Self, HompError> {
        if extra.rows() != self.n_graphs {
            return Err(HompError::DimensionMismatch {
                what: "extra feature rows",
                expected: self.n_graphs,
                found: extra.rows(),
            });
        }
        self.extra = Some(extra);
        Ok(self)
    }
}
