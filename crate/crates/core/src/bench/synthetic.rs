//! Random glycans that always assemble, for property tests and synthetic
//! tasks.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::glycan::{Anomer, GlycanEdge, GlycanTree, Linkage, MonosaccharideNode, VOCABULARY};
use crate::molgraph::template;

/// A tree of `n_nodes` residues drawn from `names` (the full vocabulary
/// when empty). Each new residue attaches to a random existing residue
/// through one of its free hydroxyls; if none is free the tree stops
/// growing early.
pub fn random_tree(rng: &mut impl Rng, n_nodes: usize, names: &[&str]) -> GlycanTree {
    let names = if names.is_empty() { VOCABULARY } else { names };
    let pick = |rng: &mut dyn rand::RngCore| -> String { names.choose(rng).expect("non-empty").to_string() };
    let root_name = pick(rng);
    let mut tree = GlycanTree::single(&root_name);
    // free acceptor positions per node
    let mut free: Vec<Vec<u8>> = vec![template(&root_name).expect("vocabulary template").position_oxygens.keys().copied().collect()];
    while tree.nodes.len() < n_nodes {
        let open: Vec<usize> = (0..free.len()).filter(|&i| !free[i].is_empty()).collect();
        let Some(&parent) = open.choose(rng) else {
            break;
        };
        let k = rng.random_range(0..free[parent].len());
        let acceptor = free[parent].swap_remove(k);
        let name = pick(rng);
        let t = template(&name).expect("vocabulary template");
        let anomer = if rng.random_bool(0.5) { Anomer::Alpha } else { Anomer::Beta };
        let child = tree.nodes.len();
        tree.nodes.push(MonosaccharideNode {
            name: name.clone(),
            anomer,
        });
        tree.edges.push(GlycanEdge {
            parent,
            child,
            linkage: Linkage {
                anomer,
                donor_position: t.anomeric_position,
                acceptor_position: acceptor,
            },
        });
        free.push(
            t.position_oxygens
                .keys()
                .copied()
                .filter(|&p| p != t.anomeric_position)
                .collect(),
        );
    }
    tree
}
