//! Combinatorial complexes over atoms: rank 0 for atoms, rank 1 for bonds
//! and rank 2 for monosaccharides, with the neighborhood functions the
//! message-passing layers consume.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::molgraph::{BondOrder, Element, MolecularGraph};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComplexError {
    #[error("molecular graph has no monomer attribution")]
    MissingAttribution,
    #[error("rank function is not order preserving: {0}")]
    RankViolation(String),
    #[error("invalid cell: {0}")]
    InvalidCell(String),
    #[error("cell has rank {found} but the neighborhood is defined on rank {expected}")]
    RankMismatch { expected: usize, found: usize },
    #[error("neighborhood {spec} is not of the requested kind")]
    KindMismatch { spec: NeighborhoodSpec },
    #[error("invalid neighborhood {0}")]
    InvalidSpec(NeighborhoodSpec),
    #[error("cell index {index} out of range for rank {rank}")]
    CellOutOfRange { rank: usize, index: usize },
}

/// What a cell stands for; drives the frozen class embeddings.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellKind {
    Atom(Element),
    Bond { order: BondOrder, glycosidic: bool },
    Monomer { name: String, monomer: usize },
    Generic(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NeighborhoodKind {
    /// Cells of the same rank sharing a cell of higher rank `via`.
    IntraViaHigher,
    /// Cells of the same rank that both contain a cell of lower rank `via`.
    IntraViaLower,
    /// Cells of higher rank `via` that contain the cell.
    UpIncidence,
    /// Cells of lower rank `via` contained in the cell.
    DownIncidence,
}

/// A neighborhood on cells of `rank`, defined through cells of rank `via`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NeighborhoodSpec {
    pub kind: NeighborhoodKind,
    pub rank: usize,
    pub via: usize,
}

impl NeighborhoodSpec {
    pub const fn intra_via_higher(rank: usize, via: usize) -> Self {
        NeighborhoodSpec {
            kind: NeighborhoodKind::IntraViaHigher,
            rank,
            via,
        }
    }

    pub const fn intra_via_lower(rank: usize, via: usize) -> Self {
        NeighborhoodSpec {
            kind: NeighborhoodKind::IntraViaLower,
            rank,
            via,
        }
    }

    pub const fn up(rank: usize, via: usize) -> Self {
        NeighborhoodSpec {
            kind: NeighborhoodKind::UpIncidence,
            rank,
            via,
        }
    }

    pub const fn down(rank: usize, via: usize) -> Self {
        NeighborhoodSpec {
            kind: NeighborhoodKind::DownIncidence,
            rank,
            via,
        }
    }

    pub fn validate(&self) -> Result<(), ComplexError> {
        let ok = match self.kind {
            NeighborhoodKind::IntraViaHigher | NeighborhoodKind::UpIncidence => self.via > self.rank,
            NeighborhoodKind::IntraViaLower | NeighborhoodKind::DownIncidence => self.via < self.rank,
        };
        if ok {
            Ok(())
        } else {
            Err(ComplexError::InvalidSpec(*self))
        }
    }

    /// Rank of the cells that send messages along this neighborhood.
    pub fn source_rank(&self) -> usize {
        match self.kind {
            NeighborhoodKind::IntraViaHigher | NeighborhoodKind::IntraViaLower => self.rank,
            NeighborhoodKind::UpIncidence | NeighborhoodKind::DownIncidence => self.via,
        }
    }

    pub fn is_intra(&self) -> bool {
        matches!(
            self.kind,
            NeighborhoodKind::IntraViaHigher | NeighborhoodKind::IntraViaLower
        )
    }

    /// Short stable name, e.g. `B0.1`, `L2.1`, `U0.1`, `D1.0`.
    pub fn name(&self) -> String {
        let tag = match self.kind {
            NeighborhoodKind::IntraViaHigher => 'B',
            NeighborhoodKind::IntraViaLower => 'L',
            NeighborhoodKind::UpIncidence => 'U',
            NeighborhoodKind::DownIncidence => 'D',
        };
        format!("{tag}{}.{}", self.rank, self.via)
    }
}

impl fmt::Display for NeighborhoodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// The five neighborhoods of the default layer: atoms via bonds, bonds via
/// monomers, monomers via shared glycosidic bonds, atom-in-bond and
/// bond-in-monomer incidences.
pub const DEFAULT_NEIGHBORHOODS: [NeighborhoodSpec; 5] = [
    NeighborhoodSpec::intra_via_higher(0, 1),
    NeighborhoodSpec::intra_via_higher(1, 2),
    NeighborhoodSpec::intra_via_lower(2, 1),
    NeighborhoodSpec::up(0, 1),
    NeighborhoodSpec::up(1, 2),
];

/// Same set with bonds adjacent when they share an atom.
pub const BOND_SHARES_ATOM_NEIGHBORHOODS: [NeighborhoodSpec; 5] = [
    NeighborhoodSpec::intra_via_higher(0, 1),
    NeighborhoodSpec::intra_via_lower(1, 0),
    NeighborhoodSpec::intra_via_lower(2, 1),
    NeighborhoodSpec::up(0, 1),
    NeighborhoodSpec::up(1, 2),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellRef {
    pub rank: usize,
    pub index: usize,
}

impl CellRef {
    pub fn new(rank: usize, index: usize) -> Self {
        CellRef { rank, index }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    /// Monomer classes smaller than this are skipped with a warning.
    pub min_two_cell_size: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { min_two_cell_size: 3 }
    }
}

/// Ranked set system over a ground set `0..n_ground`. Cells of one rank are
/// addressed by their index within that rank; rank-0 cell `i` is `{i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinatorialComplex {
    n_ground: usize,
    cells: Vec<Vec<Vec<usize>>>,
    kinds: Vec<Vec<CellKind>>,
    // containing[r][s]: rank-r cells that contain ground element s
    #[serde(skip)]
    containing: Vec<Vec<Vec<usize>>>,
    pub skipped_monomers: Vec<usize>,
}

impl CombinatorialComplex {
    /// Builds a complex from explicit cells of ranks 1 and up; rank 0 is the
    /// set of singletons. Members are sorted and every invariant is checked.
    pub fn from_cells(
        n_ground: usize,
        higher: Vec<Vec<Vec<usize>>>,
        min_two_cell_size: usize,
    ) -> Result<Self, ComplexError> {
        let kinds = std::iter::once((0..n_ground).map(|_| CellKind::Generic(0)).collect())
            .chain(higher.iter().map(|r| r.iter().map(|_| CellKind::Generic(0)).collect()))
            .collect();
        Self::from_parts(n_ground, higher, kinds, min_two_cell_size, Vec::new())
    }

    fn from_parts(
        n_ground: usize,
        higher: Vec<Vec<Vec<usize>>>,
        kinds: Vec<Vec<CellKind>>,
        min_two_cell_size: usize,
        skipped_monomers: Vec<usize>,
    ) -> Result<Self, ComplexError> {
        let mut cells: Vec<Vec<Vec<usize>>> = vec![(0..n_ground).map(|s| vec![s]).collect()];
        for rank_cells in higher {
            cells.push(
                rank_cells
                    .into_iter()
                    .map(|mut c| {
                        c.sort_unstable();
                        c
                    })
                    .collect(),
            );
        }
        let mut cc = CombinatorialComplex {
            n_ground,
            cells,
            kinds,
            containing: Vec::new(),
            skipped_monomers,
        };
        cc.reindex();
        cc.validate(min_two_cell_size)?;
        Ok(cc)
    }

    fn reindex(&mut self) {
        self.containing = self
            .cells
            .iter()
            .map(|rank_cells| {
                let mut idx = vec![Vec::new(); self.n_ground];
                for (ci, c) in rank_cells.iter().enumerate() {
                    for &s in c {
                        if s < self.n_ground {
                            idx[s].push(ci);
                        }
                    }
                }
                idx
            })
            .collect();
    }

    /// Checks the structural invariants and, exhaustively, that `x ⊂ y`
    /// implies `rank(x) < rank(y)` for every pair of cells.
    pub fn validate(&self, min_two_cell_size: usize) -> Result<(), ComplexError> {
        for (rank, rank_cells) in self.cells.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for (i, c) in rank_cells.iter().enumerate() {
                if c.is_empty() {
                    return Err(ComplexError::InvalidCell(format!("empty cell {rank}:{i}")));
                }
                if c.windows(2).any(|w| w[0] == w[1]) {
                    return Err(ComplexError::InvalidCell(format!("repeated member in {rank}:{i}")));
                }
                if let Some(&s) = c.iter().find(|&&s| s >= self.n_ground) {
                    return Err(ComplexError::InvalidCell(format!("member {s} outside ground set")));
                }
                let size_ok = match rank {
                    0 => c.len() == 1 && c[0] == i,
                    1 => c.len() == 2,
                    2 => c.len() >= min_two_cell_size,
                    _ => true,
                };
                if !size_ok {
                    return Err(ComplexError::InvalidCell(format!(
                        "cell {rank}:{i} has {} members",
                        c.len()
                    )));
                }
                if !seen.insert(c.as_slice()) {
                    return Err(ComplexError::InvalidCell(format!("duplicate cell {rank}:{i}")));
                }
            }
            if self.kinds.get(rank).map(Vec::len) != Some(rank_cells.len()) {
                return Err(ComplexError::InvalidCell(format!("kind table mismatch on rank {rank}")));
            }
        }
        for (rx, rank_cells) in self.cells.iter().enumerate() {
            for (ix, x) in rank_cells.iter().enumerate() {
                // any strict superset of x contains x[0]
                for (ry, index) in self.containing.iter().enumerate() {
                    for &iy in &index[x[0]] {
                        let y = &self.cells[ry][iy];
                        if y.len() > x.len() && is_subset(x, y) && rx >= ry {
                            return Err(ComplexError::RankViolation(format!(
                                "cell {rx}:{ix} is a proper subset of {ry}:{iy}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n_ground(&self) -> usize {
        self.n_ground
    }

    /// Number of ranks that are stored (the top rank may be empty).
    pub fn n_ranks(&self) -> usize {
        self.cells.len()
    }

    pub fn skeleton(&self, rank: usize) -> &[Vec<usize>] {
        self.cells.get(rank).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn n_cells(&self, rank: usize) -> usize {
        self.skeleton(rank).len()
    }

    pub fn total_cells(&self) -> usize {
        self.cells.iter().map(Vec::len).sum()
    }

    pub fn kinds(&self, rank: usize) -> &[CellKind] {
        self.kinds.get(rank).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn members(&self, cell: CellRef) -> Result<&[usize], ComplexError> {
        self.skeleton(cell.rank)
            .get(cell.index)
            .map(Vec::as_slice)
            .ok_or(ComplexError::CellOutOfRange {
                rank: cell.rank,
                index: cell.index,
            })
    }

    pub fn set_kinds(&mut self, rank: usize, kinds: Vec<CellKind>) {
        assert_eq!(kinds.len(), self.n_cells(rank));
        self.kinds[rank] = kinds;
    }

    fn superset_cells(&self, members: &[usize], rank: usize) -> Vec<usize> {
        match self.containing.get(rank) {
            Some(index) => index[members[0]]
                .iter()
                .copied()
                .filter(|&iy| is_subset(members, &self.cells[rank][iy]))
                .collect(),
            None => Vec::new(),
        }
    }

    fn subset_cells(&self, members: &[usize], rank: usize) -> Vec<usize> {
        let Some(index) = self.containing.get(rank) else {
            return Vec::new();
        };
        let mut out: Vec<usize> = members
            .iter()
            .flat_map(|&s| index[s].iter().copied())
            .filter(|&iy| is_subset(&self.cells[rank][iy], members))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Neighbors of `cell` under `spec`, ascending by index. Intra
    /// neighborhoods exclude the cell itself.
    pub fn neighborhood(&self, spec: &NeighborhoodSpec, cell: CellRef) -> Result<Vec<usize>, ComplexError> {
        spec.validate()?;
        if cell.rank != spec.rank {
            return Err(ComplexError::RankMismatch {
                expected: spec.rank,
                found: cell.rank,
            });
        }
        let x = self.members(cell)?;
        let mut out: Vec<usize> = match spec.kind {
            NeighborhoodKind::IntraViaHigher => self
                .superset_cells(x, spec.via)
                .into_iter()
                .flat_map(|z| self.subset_cells(&self.cells[spec.via][z], spec.rank))
                .collect(),
            NeighborhoodKind::IntraViaLower => self
                .subset_cells(x, spec.via)
                .into_iter()
                .flat_map(|z| self.superset_cells(&self.cells[spec.via][z], spec.rank))
                .collect(),
            NeighborhoodKind::UpIncidence => self.superset_cells(x, spec.via),
            NeighborhoodKind::DownIncidence => self.subset_cells(x, spec.via),
        };
        if spec.is_intra() {
            out.retain(|&y| y != cell.index);
        }
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// Same-rank neighbors through shared higher (or lower) cells.
    pub fn neighborhood_intra(&self, spec: &NeighborhoodSpec, cell: CellRef) -> Result<Vec<usize>, ComplexError> {
        if !spec.is_intra() {
            return Err(ComplexError::KindMismatch { spec: *spec });
        }
        self.neighborhood(spec, cell)
    }

    /// Higher-rank cells containing `cell`.
    pub fn neighborhood_up(&self, spec: &NeighborhoodSpec, cell: CellRef) -> Result<Vec<usize>, ComplexError> {
        if spec.kind != NeighborhoodKind::UpIncidence {
            return Err(ComplexError::KindMismatch { spec: *spec });
        }
        self.neighborhood(spec, cell)
    }

    /// Every `(target, source)` message pair of `spec`, sorted by target then
    /// source. Targets index rank `spec.rank`; sources index the source rank.
    pub fn adjacency(&self, spec: &NeighborhoodSpec) -> Result<Vec<(usize, usize)>, ComplexError> {
        spec.validate()?;
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        match spec.kind {
            NeighborhoodKind::IntraViaHigher => {
                for z in self.skeleton(spec.via) {
                    let inside = self.subset_cells(z, spec.rank);
                    for &x in &inside {
                        for &y in &inside {
                            if x != y {
                                pairs.push((x, y));
                            }
                        }
                    }
                }
            }
            NeighborhoodKind::IntraViaLower => {
                for z in self.skeleton(spec.via) {
                    let around = self.superset_cells(z, spec.rank);
                    for &x in &around {
                        for &y in &around {
                            if x != y {
                                pairs.push((x, y));
                            }
                        }
                    }
                }
            }
            NeighborhoodKind::UpIncidence => {
                for (ix, x) in self.skeleton(spec.rank).iter().enumerate() {
                    pairs.extend(self.superset_cells(x, spec.via).into_iter().map(|y| (ix, y)));
                }
            }
            NeighborhoodKind::DownIncidence => {
                for (ix, x) in self.skeleton(spec.rank).iter().enumerate() {
                    pairs.extend(self.subset_cells(x, spec.via).into_iter().map(|y| (ix, y)));
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        Ok(pairs)
    }

    pub fn adjacency_matrices(&self, specs: &[NeighborhoodSpec]) -> Result<Vec<Vec<(usize, usize)>>, ComplexError> {
        specs.iter().map(|s| self.adjacency(s)).collect()
    }

    /// Undirected edge list of the rank-0 graph (atoms joined by bonds).
    pub fn rank0_edges(&self) -> Vec<(usize, usize)> {
        self.skeleton(1)
            .iter()
            .filter(|c| c.len() == 2)
            .map(|c| (c[0], c[1]))
            .collect()
    }

    /// One cell per line: `rank<TAB>index<TAB>members`, members comma
    /// separated in ascending order.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (rank, rank_cells) in self.cells.iter().enumerate() {
            for (i, c) in rank_cells.iter().enumerate() {
                let members: Vec<String> = c.iter().map(usize::to_string).collect();
                out.push_str(&format!("{rank}\t{i}\t{}\n", members.join(",")));
            }
        }
        out
    }

    /// Relabels cells within each rank: `perms[r][old] = new`. The rank-0
    /// permutation relabels the ground set as well, so rank-0 cell `i`
    /// stays `{i}`. Ranks without a permutation keep their order.
    pub fn permuted(&self, perms: &[Vec<usize>]) -> Self {
        let identity = |n: usize| (0..n).collect::<Vec<_>>();
        let perm = |r: usize| perms.get(r).cloned().unwrap_or_else(|| identity(self.n_cells(r)));
        let p0 = perm(0);
        let mut cells = Vec::with_capacity(self.cells.len());
        let mut kinds = Vec::with_capacity(self.cells.len());
        for r in 0..self.cells.len() {
            let pr = perm(r);
            let n = self.cells[r].len();
            let mut new_cells = vec![Vec::new(); n];
            let mut new_kinds = vec![CellKind::Generic(0); n];
            for old in 0..n {
                let mut m: Vec<usize> = self.cells[r][old].iter().map(|&s| p0[s]).collect();
                m.sort_unstable();
                new_cells[pr[old]] = m;
                new_kinds[pr[old]] = self.kinds[r][old].clone();
            }
            cells.push(new_cells);
            kinds.push(new_kinds);
        }
        let mut cc = CombinatorialComplex {
            n_ground: self.n_ground,
            cells,
            kinds,
            containing: Vec::new(),
            skipped_monomers: self.skipped_monomers.clone(),
        };
        cc.reindex();
        cc
    }

    /// Restores the derived lookup tables after deserialization.
    pub fn rebuild_index(&mut self) {
        self.reindex();
    }
}

fn is_subset(small: &[usize], big: &[usize]) -> bool {
    // both sorted
    let mut j = 0;
    for &s in small {
        while j < big.len() && big[j] < s {
            j += 1;
        }
        if j == big.len() || big[j] != s {
            return false;
        }
        j += 1;
    }
    true
}

/// Lifts an assembled glycan graph: atoms become 0-cells, bonds 1-cells and
/// each monomer a 2-cell made of its attributed atoms plus both endpoints of
/// every glycosidic bond it takes part in.
pub fn build_cc(graph: &MolecularGraph) -> Result<CombinatorialComplex, ComplexError> {
    build_cc_with(graph, BuildOptions::default())
}

pub fn build_cc_with(graph: &MolecularGraph, options: BuildOptions) -> Result<CombinatorialComplex, ComplexError> {
    let attr = graph.attribution.as_ref().ok_or(ComplexError::MissingAttribution)?;
    if attr.monomer_of.len() != graph.n_atoms() {
        return Err(ComplexError::MissingAttribution);
    }
    let bonds: Vec<Vec<usize>> = graph.bonds.iter().map(|b| vec![b.a, b.b]).collect();
    let mut classes: Vec<BTreeSet<usize>> = attr.classes().into_iter().map(|c| c.into_iter().collect()).collect();
    for &bi in &graph.linkage_bonds {
        let b = graph.bonds[bi];
        let (ma, mb) = (attr.monomer_of[b.a], attr.monomer_of[b.b]);
        for m in [ma, mb] {
            classes[m].insert(b.a);
            classes[m].insert(b.b);
        }
    }
    let mut monomers = Vec::new();
    let mut monomer_kinds = Vec::new();
    let mut skipped = Vec::new();
    for (m, class) in classes.into_iter().enumerate() {
        if class.len() < options.min_two_cell_size {
            log::warn!(
                "monomer {m} ({}) has {} atoms; no 2-cell created",
                attr.names[m],
                class.len()
            );
            skipped.push(m);
            continue;
        }
        monomers.push(class.into_iter().collect::<Vec<_>>());
        monomer_kinds.push(CellKind::Monomer {
            name: attr.names[m].clone(),
            monomer: m,
        });
    }
    let linkage: BTreeSet<usize> = graph.linkage_bonds.iter().copied().collect();
    let kinds = vec![
        graph.atoms.iter().map(|a| CellKind::Atom(a.element)).collect(),
        graph
            .bonds
            .iter()
            .enumerate()
            .map(|(i, b)| CellKind::Bond {
                order: b.order,
                glycosidic: linkage.contains(&i),
            })
            .collect(),
        monomer_kinds,
    ];
    CombinatorialComplex::from_parts(
        graph.n_atoms(),
        vec![bonds, monomers],
        kinds,
        options.min_two_cell_size,
        skipped,
    )
}
