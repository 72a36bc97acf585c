#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use glycocc::bench::{parse_dataset, synthetic::random_tree, Dataset, Task};
use glycocc::complex::{CombinatorialComplex, NeighborhoodKind, NeighborhoodSpec};
use glycocc::glycan::GlycanTree;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn corpus(seed: u64, n: usize, max_nodes: usize) -> Vec<GlycanTree> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let k = rng.random_range(1..=max_nodes);
            random_tree(&mut rng, k, &[])
        })
        .collect()
}

pub fn contains_fuc(t: &GlycanTree) -> bool {
    t.nodes.iter().any(|n| n.name == "Fuc")
}

/// `n` distinct glycans, half of them containing Fuc, as a binary dataset
/// parsed from TSV text.
pub fn fuc_dataset(seed: u64, n: usize, max_nodes: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let (mut pos, mut neg) = (0, 0);
    let mut tsv = String::from("id\tiupac\tlabel\n");
    while pos + neg < n {
        let k = rng.random_range(1..=max_nodes);
        let t = random_tree(&mut rng, k, &[]);
        let text = t.to_iupac();
        let y = contains_fuc(&t);
        let room = if y { pos < n / 2 } else { neg < n - n / 2 };
        if !room || !seen.insert(text.clone()) {
            continue;
        }
        if y {
            pos += 1;
        } else {
            neg += 1;
        }
        tsv.push_str(&format!("g{}\t{}\t{}\n", pos + neg, text, y as u8));
    }
    parse_dataset(&tsv, Task::Binary).unwrap()
}

/// Residue and linkage-pair counts, built from scratch for comparison.
pub fn oracle_fingerprint(t: &GlycanTree) -> BTreeMap<String, u32> {
    let mut keys: Vec<String> = t.nodes.iter().map(|n| n.name.clone()).collect();
    for e in &t.edges {
        keys.push(format!(
            "{}({}{}-{}){}",
            t.nodes[e.child].name,
            match e.linkage.anomer {
                glycocc::glycan::Anomer::Alpha => "a",
                glycocc::glycan::Anomer::Beta => "b",
                glycocc::glycan::Anomer::Unspecified => "?",
            },
            e.linkage.donor_position,
            e.linkage.acceptor_position,
            t.nodes[e.parent].name
        ));
    }
    let mut m = BTreeMap::new();
    for k in keys {
        *m.entry(k).or_insert(0) += 1;
    }
    m
}

pub fn oracle_tanimoto(a: &BTreeMap<String, u32>, b: &BTreeMap<String, u32>) -> f64 {
    let keys: std::collections::BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    let (mut num, mut den) = (0.0, 0.0);
    for k in keys {
        let x = *a.get(k).unwrap_or(&0) as f64;
        let y = *b.get(k).unwrap_or(&0) as f64;
        num += x.min(y);
        den += x.max(y);
    }
    if den == 0.0 {
        1.0
    } else {
        num / den
    }
}

/// Double loop over every test and train pair.
pub fn oracle_ood(train: &[GlycanTree], test: &[GlycanTree], threshold: f64) -> Vec<bool> {
    let mut out = Vec::new();
    for t in test {
        let ft = oracle_fingerprint(t);
        let mut best = 0.0f64;
        for g in train {
            best = best.max(oracle_tanimoto(&ft, &oracle_fingerprint(g)));
        }
        out.push(best < threshold);
    }
    out
}

/// Published MCC scores on ten benchmarks, one row per model.
pub const MCC_MODELS: [&str; 9] = ["RF", "SVM", "XGB", "MLP", "GNNGLY", "SweetNet", "GLAMOUR", "RGCN", "GIFFLAR"];
pub const MCC_DATASETS: [&str; 10] = ["Immunogenicity", "Glycosylation", "Domain", "Kingdom", "Phylum", "Class", "Order", "Family", "Genus", "Species"];
pub const MCC_TABLE: [[f64; 10]; 9] = [
    [0.8223, 0.9648, 0.9129, 0.8749, 0.8010, 0.7094, 0.5546, 0.4944, 0.4613, 0.4439],
    [0.8034, 0.9648, 0.8793, 0.8403, 0.7466, 0.6398, 0.4588, 0.4369, 0.4137, 0.3880],
    [0.8302, 0.9824, 0.8718, 0.8348, 0.7393, 0.6282, 0.4705, 0.4420, 0.3870, 0.3467],
    [0.8481, 0.8704, 0.9106, 0.8763, 0.8033, 0.7206, 0.5413, 0.5097, 0.4708, 0.4282],
    [0.5328, 0.7611, 0.7717, 0.7747, 0.6609, 0.4685, 0.0156, 0.0150, 0.0151, 0.0154],
    [0.7590, 0.8784, 0.8841, 0.7704, 0.6232, 0.5288, 0.0156, 0.1872, 0.0151, 0.1175],
    [0.9212, 0.9767, 0.9111, 0.8704, 0.7864, 0.6857, 0.4998, 0.4785, 0.4320, 0.4407],
    [0.6954, 0.0000, 0.8810, 0.8409, 0.7211, 0.4039, 0.2288, 0.0314, 0.2530, 0.0194],
    [0.8930, 0.9883, 0.9298, 0.9011, 0.8278, 0.7714, 0.6118, 0.5795, 0.5391, 0.4898],
];

/// `[metric][dataset][model]` layout of a single-metric table.
pub fn mcc_values(columns: &[usize]) -> Vec<f64> {
    let mut v = Vec::new();
    for &d in columns {
        for row in &MCC_TABLE {
            v.push(row[d]);
        }
    }
    v
}

pub fn subset(x: &[usize], y: &[usize]) -> bool {
    let y: BTreeSet<_> = y.iter().collect();
    x.iter().all(|v| y.contains(v))
}

/// Neighbors of `x` computed from the raw cell sets.
pub fn oracle_neighbors(cc: &CombinatorialComplex, spec: &NeighborhoodSpec, x: usize) -> Vec<usize> {
    let cx = &cc.skeleton(spec.rank)[x];
    let via = cc.skeleton(spec.via);
    let same = cc.skeleton(spec.rank);
    let mut out: Vec<usize> = match spec.kind {
        NeighborhoodKind::IntraViaHigher => {
            let zs: Vec<&Vec<usize>> = via.iter().filter(|z| subset(cx, z)).collect();
            (0..same.len()).filter(|&y| y != x && zs.iter().any(|z| subset(&same[y], z))).collect()
        }
        NeighborhoodKind::IntraViaLower => {
            let zs: Vec<&Vec<usize>> = via.iter().filter(|z| subset(z, cx)).collect();
            (0..same.len()).filter(|&y| y != x && zs.iter().any(|z| subset(z, &same[y]))).collect()
        }
        NeighborhoodKind::UpIncidence => (0..via.len()).filter(|&z| subset(cx, &via[z])).collect(),
        NeighborhoodKind::DownIncidence => (0..via.len()).filter(|&z| subset(&via[z], cx)).collect(),
    };
    out.sort_unstable();
    out
}
