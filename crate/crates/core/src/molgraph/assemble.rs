use std::collections::BTreeSet;

use super::template::{template_library, TemplateLibrary};
use super::{BondOrder, MolError, MolecularGraph, MonomerAttribution, MonomerTemplate};
use crate::glycan::GlycanTree;

/// Builds the heavy-atom graph of a glycan by condensing monosaccharide
/// templates along each linkage: the acceptor hydroxyl oxygen of the parent
/// is removed and the donor's anomeric oxygen is bonded to the acceptor
/// carbon.
pub fn assemble(tree: &GlycanTree) -> Result<MolecularGraph, MolError> {
    assemble_with(tree, template_library())
}

pub fn assemble_with(tree: &GlycanTree, lib: &TemplateLibrary) -> Result<MolecularGraph, MolError> {
    if tree.is_empty() {
        return Err(MolError::EmptyGlycan);
    }
    tree.validate().map_err(MolError::InvalidTree)?;
    let templates: Vec<&MonomerTemplate> = tree
        .nodes
        .iter()
        .map(|n| lib.get(&n.name).ok_or_else(|| MolError::MissingTemplate(n.name.clone())))
        .collect::<Result<_, _>>()?;

    let n = tree.nodes.len();
    let mut deleted: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut has_parent = vec![false; n];
    for e in &tree.edges {
        let (child_t, parent_t) = (templates[e.child], templates[e.parent]);
        if e.linkage.donor_position != child_t.anomeric_position {
            return Err(MolError::InvalidPosition {
                node: e.child,
                name: child_t.name.clone(),
                position: e.linkage.donor_position,
            });
        }
        let acceptor = e.linkage.acceptor_position;
        let Some(&oxygen) = parent_t.position_oxygens.get(&acceptor) else {
            return Err(MolError::InvalidPosition {
                node: e.parent,
                name: parent_t.name.clone(),
                position: acceptor,
            });
        };
        if !deleted[e.parent].insert(oxygen) {
            return Err(MolError::OccupiedPosition {
                node: e.parent,
                position: acceptor,
            });
        }
        has_parent[e.child] = true;
    }
    for node in 0..n {
        let t = templates[node];
        if has_parent[node] && deleted[node].contains(&t.anomeric_oxygen) {
            return Err(MolError::OccupiedPosition {
                node,
                position: t.anomeric_position,
            });
        }
    }

    let mut graph = MolecularGraph::default();
    let mut monomer_of = Vec::new();
    let mut bridge = Vec::new();
    let mut map: Vec<Vec<Option<usize>>> = Vec::with_capacity(n);
    for node in 0..n {
        let t = templates[node];
        let mut m = vec![None; t.n_atoms()];
        for (i, atom) in t.graph.atoms.iter().enumerate() {
            if deleted[node].contains(&i) {
                continue;
            }
            m[i] = Some(graph.add_atom(*atom));
            monomer_of.push(node);
            bridge.push(has_parent[node] && i == t.anomeric_oxygen);
        }
        for b in &t.graph.bonds {
            if let (Some(x), Some(y)) = (m[b.a], m[b.b]) {
                graph.add_bond(x, y, b.order);
            }
        }
        map.push(m);
    }
    let mut linkage_bonds = Vec::with_capacity(tree.edges.len());
    for e in &tree.edges {
        let (child_t, parent_t) = (templates[e.child], templates[e.parent]);
        let oxygen = map[e.child][child_t.anomeric_oxygen].expect("bridge oxygen kept");
        let carbon = map[e.parent][parent_t.position_carbons[&e.linkage.acceptor_position]]
            .expect("acceptor carbon kept");
        linkage_bonds.push(graph.add_bond(oxygen, carbon, BondOrder::Single));
    }
    // hydrogens follow the new connectivity (the neutral templates lose one
    // H on each side of the condensation)
    for i in 0..graph.n_atoms() {
        graph.atoms[i].implicit_h = graph.default_implicit_h(i);
    }
    linkage_bonds.sort_unstable();
    graph.linkage_bonds = linkage_bonds;
    graph.attribution = Some(MonomerAttribution {
        monomer_of,
        bridge,
        names: tree.nodes.iter().map(|n| n.name.clone()).collect(),
    });
    Ok(graph)
}
