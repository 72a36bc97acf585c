//! Heavy-atom molecular graphs, a SMILES subset, monosaccharide templates
//! and glycan assembly.

mod assemble;
mod fingerprint;
mod smiles;
mod template;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use assemble::assemble;
pub use fingerprint::{fnv1a64, morgan_fingerprint, Fingerprint};
pub use smiles::{parse_smiles, write_smiles};
pub use template::{template, template_library, MonomerTemplate, TemplateLibrary, TEMPLATE_FORMAT_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MolError {
    #[error("SMILES syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("element {0} cannot be written")]
    UnsupportedElement(Element),
    #[error("no template for monosaccharide `{0}`")]
    MissingTemplate(String),
    #[error("cannot assemble an empty glycan")]
    EmptyGlycan,
    #[error("position {position} of node {node} is already occupied")]
    OccupiedPosition { node: usize, position: u8 },
    #[error("position {position} is not available on `{name}` (node {node})")]
    InvalidPosition { node: usize, name: String, position: u8 },
    #[error("template library: {0}")]
    Template(String),
    #[error("invalid glycan tree: {0}")]
    InvalidTree(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Element {
    B,
    C,
    N,
    O,
    F,
    P,
    S,
    Cl,
    Br,
    I,
}

impl Element {
    pub const ALL: [Element; 10] = [
        Element::B,
        Element::C,
        Element::N,
        Element::O,
        Element::F,
        Element::P,
        Element::S,
        Element::Cl,
        Element::Br,
        Element::I,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Element::B => "B",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::F => "F",
            Element::P => "P",
            Element::S => "S",
            Element::Cl => "Cl",
            Element::Br => "Br",
            Element::I => "I",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Element> {
        Element::ALL.into_iter().find(|e| e.symbol() == s)
    }

    pub fn atomic_number(self) -> u8 {
        match self {
            Element::B => 5,
            Element::C => 6,
            Element::N => 7,
            Element::O => 8,
            Element::F => 9,
            Element::P => 15,
            Element::S => 16,
            Element::Cl => 17,
            Element::Br => 35,
            Element::I => 53,
        }
    }

    /// Allowed valences for organic-subset atoms, ascending.
    pub fn default_valences(self) -> &'static [u8] {
        match self {
            Element::B => &[3],
            Element::C => &[4],
            Element::N => &[3, 5],
            Element::O => &[2],
            Element::P => &[3, 5],
            Element::S => &[2, 4, 6],
            Element::F | Element::Cl | Element::Br | Element::I => &[1],
        }
    }

    pub fn can_be_aromatic(self) -> bool {
        matches!(
            self,
            Element::B | Element::C | Element::N | Element::O | Element::P | Element::S
        )
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub element: Element,
    pub charge: i8,
    pub implicit_h: u8,
    pub aromatic: bool,
}

impl Atom {
    pub fn new(element: Element) -> Self {
        Atom {
            element,
            charge: 0,
            implicit_h: 0,
            aromatic: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BondOrder {
    Single,
    Double,
    Aromatic,
}

impl BondOrder {
    /// Contribution to the valence sum; aromatic bonds count as one and the
    /// aromatic atom itself adds one more.
    fn valence(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

/// Which monosaccharide every atom came from. Glycosidic bridge oxygens
/// belong to the donor monomer and carry the bridge flag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonomerAttribution {
    pub monomer_of: Vec<usize>,
    pub bridge: Vec<bool>,
    pub names: Vec<String>,
}

impl MonomerAttribution {
    pub fn n_monomers(&self) -> usize {
        self.names.len()
    }

    /// Atom indices of each monomer class.
    pub fn classes(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.names.len()];
        for (atom, &m) in self.monomer_of.iter().enumerate() {
            out[m].push(atom);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MolecularGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    pub attribution: Option<MonomerAttribution>,
    /// Indices into `bonds` of glycosidic linkage bonds, ascending.
    pub linkage_bonds: Vec<usize>,
}

impl MolecularGraph {
    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn n_bonds(&self) -> usize {
        self.bonds.len()
    }

    /// Appends an atom and returns its index.
    pub fn add_atom(&mut self, atom: Atom) -> usize {
        self.atoms.push(atom);
        self.atoms.len() - 1
    }

    /// Appends a bond and returns its index. Panics on self loops or
    /// duplicates, which would break the graph invariants.
    pub fn add_bond(&mut self, a: usize, b: usize, order: BondOrder) -> usize {
        assert!(a != b, "self bond on atom {a}");
        assert!(a < self.atoms.len() && b < self.atoms.len());
        assert!(self.bond_between(a, b).is_none(), "duplicate bond {a}-{b}");
        self.bonds.push(Bond { a, b, order });
        self.bonds.len() - 1
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<usize> {
        self.bonds
            .iter()
            .position(|bd| (bd.a == a && bd.b == b) || (bd.a == b && bd.b == a))
    }

    /// Per atom, the incident `(neighbor, bond index)` pairs in bond order.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for (i, b) in self.bonds.iter().enumerate() {
            adj[b.a].push((b.b, i));
            adj[b.b].push((b.a, i));
        }
        adj
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.bonds.iter().filter(|b| b.a == atom || b.b == atom).count()
    }

    pub fn n_components(&self) -> usize {
        let n = self.atoms.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut c = x;
            while p[c] != r {
                let next = p[c];
                p[c] = r;
                c = next;
            }
            r
        }
        let mut comps = n;
        for b in &self.bonds {
            let (ra, rb) = (find(&mut parent, b.a), find(&mut parent, b.b));
            if ra != rb {
                parent[ra] = rb;
                comps -= 1;
            }
        }
        comps
    }

    /// Cyclomatic number: bonds - atoms + components.
    pub fn ring_count(&self) -> usize {
        self.bonds.len() + self.n_components() - self.atoms.len()
    }

    /// Marks atoms that lie on at least one cycle.
    pub fn ring_atoms(&self) -> Vec<bool> {
        let bridges = self.bridge_bonds();
        let mut out = vec![false; self.atoms.len()];
        for (i, b) in self.bonds.iter().enumerate() {
            if !bridges[i] {
                out[b.a] = true;
                out[b.b] = true;
            }
        }
        out
    }

    /// Bonds whose removal disconnects the graph (Tarjan).
    pub fn bridge_bonds(&self) -> Vec<bool> {
        let n = self.atoms.len();
        let adj = self.adjacency();
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut is_bridge = vec![false; self.bonds.len()];
        let mut timer = 0;
        for start in 0..n {
            if disc[start] != usize::MAX {
                continue;
            }
            // (atom, bond used to enter, next adjacency slot)
            let mut stack: Vec<(usize, Option<usize>, usize)> = vec![(start, None, 0)];
            disc[start] = timer;
            low[start] = timer;
            timer += 1;
            while let Some(&mut (v, via, ref mut slot)) = stack.last_mut() {
                if *slot < adj[v].len() {
                    let (u, bi) = adj[v][*slot];
                    *slot += 1;
                    if Some(bi) == via {
                        continue;
                    }
                    if disc[u] == usize::MAX {
                        disc[u] = timer;
                        low[u] = timer;
                        timer += 1;
                        stack.push((u, Some(bi), 0));
                    } else {
                        low[v] = low[v].min(disc[u]);
                    }
                } else {
                    stack.pop();
                    if let (Some(bi), Some(&(p, _, _))) = (via, stack.last()) {
                        low[p] = low[p].min(low[v]);
                        if low[v] > disc[p] {
                            is_bridge[bi] = true;
                        }
                    }
                }
            }
        }
        is_bridge
    }

    /// Implicit hydrogens each atom would receive under organic-subset
    /// valence rules, given its current bonds and charge.
    pub fn default_implicit_h(&self, atom: usize) -> u8 {
        let a = &self.atoms[atom];
        let mut used: u8 = self
            .bonds
            .iter()
            .filter(|b| b.a == atom || b.b == atom)
            .map(|b| b.order.valence())
            .sum();
        if a.aromatic {
            used += 1;
        }
        implicit_h_for(a.element, used)
    }

    /// Counts of C, H, N, O, P, S and other heavy atoms.
    pub fn formula(&self) -> String {
        let mut counts: Vec<(Element, usize)> = Vec::new();
        let mut h = 0usize;
        for a in &self.atoms {
            h += a.implicit_h as usize;
            match counts.iter_mut().find(|(e, _)| *e == a.element) {
                Some((_, c)) => *c += 1,
                None => counts.push((a.element, 1)),
            }
        }
        // Hill order: C, H, then alphabetical
        counts.sort_by(|x, y| {
            let rank = |e: Element| if e == Element::C { 0 } else { 1 };
            rank(x.0).cmp(&rank(y.0)).then(x.0.symbol().cmp(y.0.symbol()))
        });
        let mut out = String::new();
        let mut push = |sym: &str, n: usize| {
            out.push_str(sym);
            if n > 1 {
                out.push_str(&n.to_string());
            }
        };
        let mut h_done = false;
        for (e, c) in counts {
            if e != Element::C && !h_done {
                if h > 0 {
                    push("H", h);
                }
                h_done = true;
            }
            push(e.symbol(), c);
        }
        if !h_done && h > 0 {
            push("H", h);
        }
        out
    }
}

pub(crate) fn implicit_h_for(element: Element, used_valence: u8) -> u8 {
    element
        .default_valences()
        .iter()
        .find(|&&v| v >= used_valence)
        .map(|&v| v - used_valence)
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_bookkeeping() {
        let g = parse_smiles("C1CCOCC1").unwrap();
        assert_eq!(g.ring_count(), 1);
        assert!(g.ring_atoms().iter().all(|&r| r));
        let g = parse_smiles("C1CC1CCO").unwrap();
        assert_eq!(g.ring_count(), 1);
        assert_eq!(g.ring_atoms(), vec![true, true, true, false, false, false]);
        assert_eq!(g.bridge_bonds().iter().filter(|&&b| b).count(), 3);
        let g = parse_smiles("CC.O").unwrap();
        assert_eq!(g.n_components(), 2);
        assert_eq!(g.ring_count(), 0);
    }

    #[test]
    fn formula_hill_order() {
        assert_eq!(parse_smiles("CCO").unwrap().formula(), "C2H6O");
        assert_eq!(parse_smiles("O").unwrap().formula(), "H2O");
        assert_eq!(parse_smiles("CC(=O)N").unwrap().formula(), "C2H5NO");
    }
}
