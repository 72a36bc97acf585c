use super::{BondOrder, MolecularGraph};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    n_bits: usize,
    words: Vec<u64>,
}

impl Fingerprint {
    pub fn new(n_bits: usize) -> Self {
        Fingerprint {
            n_bits,
            words: vec![0; n_bits.div_ceil(64)],
        }
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn set(&mut self, bit: usize) {
        assert!(bit < self.n_bits);
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        bit < self.n_bits && self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn ones(&self) -> Vec<usize> {
        (0..self.n_bits).filter(|&b| self.get(b)).collect()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        (0..self.n_bits).map(|b| if self.get(b) { 1.0 } else { 0.0 }).collect()
    }

    pub fn tanimoto(&self, other: &Fingerprint) -> f64 {
        let inter: u32 = self.words.iter().zip(&other.words).map(|(a, b)| (a & b).count_ones()).sum();
        let union: u32 = self.words.iter().zip(&other.words).map(|(a, b)| (a | b).count_ones()).sum();
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

fn bond_code(order: BondOrder) -> u8 {
    match order {
        BondOrder::Single => 1,
        BondOrder::Double => 2,
        BondOrder::Aromatic => 4,
    }
}

/// Circular (ECFP-style) fingerprint. Round 0 hashes per-atom invariants;
/// each further round hashes the atom's previous identifier together with
/// the sorted `(bond, neighbor identifier)` list. Every identifier from
/// rounds `0..=radius` is folded into `n_bits` by modulo.
pub fn morgan_fingerprint(graph: &MolecularGraph, radius: usize, n_bits: usize) -> Fingerprint {
    assert!(n_bits >= 1, "n_bits must be positive");
    let adj = graph.adjacency();
    let ring = graph.ring_atoms();
    let mut ids: Vec<u64> = graph
        .atoms
        .iter()
        .enumerate()
        .map(|(i, a)| {
            fnv1a64(&[
                a.element.atomic_number(),
                adj[i].len() as u8,
                a.implicit_h,
                a.charge as u8,
                ring[i] as u8,
                a.aromatic as u8,
            ])
        })
        .collect();
    let mut fp = Fingerprint::new(n_bits);
    for &id in &ids {
        fp.set((id % n_bits as u64) as usize);
    }
    let mut buf = Vec::new();
    for round in 1..=radius {
        let next: Vec<u64> = (0..ids.len())
            .map(|i| {
                let mut env: Vec<(u8, u64)> = adj[i]
                    .iter()
                    .map(|&(nb, bi)| (bond_code(graph.bonds[bi].order), ids[nb]))
                    .collect();
                env.sort_unstable();
                buf.clear();
                buf.extend_from_slice(&(round as u32).to_le_bytes());
                buf.extend_from_slice(&ids[i].to_le_bytes());
                for (code, id) in env {
                    buf.push(code);
                    buf.extend_from_slice(&id.to_le_bytes());
                }
                fnv1a64(&buf)
            })
            .collect();
        ids = next;
        for &id in &ids {
            fp.set((id % n_bits as u64) as usize);
        }
    }
    fp
}
