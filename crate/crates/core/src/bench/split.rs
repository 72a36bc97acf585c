use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BenchError, Dataset};
use crate::glycan::GlycanTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Val,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Val, Partition::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Val => "val",
            Partition::Test => "test",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Partition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Partition::Train),
            "val" => Ok(Partition::Val),
            "test" => Ok(Partition::Test),
            other => Err(format!("unknown partition `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitAssignment {
    pub partition: BTreeMap<String, Partition>,
    /// Defined on test ids only.
    pub ood: BTreeMap<String, bool>,
}

impl SplitAssignment {
    pub fn ids(&self, part: Partition) -> Vec<&str> {
        self.partition
            .iter()
            .filter(|(_, &p)| p == part)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn count(&self, part: Partition) -> usize {
        self.partition.values().filter(|&&p| p == part).count()
    }

    /// Flags test glycans against the train partition of `dataset`.
    pub fn compute_ood(&mut self, dataset: &Dataset, threshold: f64) {
        let part_of = |id: &str| self.partition.get(id).copied();
        let train: Vec<&GlycanTree> = dataset
            .records
            .iter()
            .filter(|r| part_of(&r.id) == Some(Partition::Train))
            .map(|r| &r.tree)
            .collect();
        let test: Vec<_> = dataset
            .records
            .iter()
            .filter(|r| part_of(&r.id) == Some(Partition::Test))
            .collect();
        let trees: Vec<&GlycanTree> = test.iter().map(|r| &r.tree).collect();
        let flags = ood_flags(&train, &trees, threshold);
        self.ood = test.iter().zip(flags).map(|(r, f)| (r.id.clone(), f)).collect();
    }
}

/// Seeded shuffle of `ids` cut into train, val and test. The train and val
/// sizes are rounded from the fractions; test takes the remainder.
pub fn random_split(ids: &[&str], fractions: [f64; 3], seed: u64) -> Result<SplitAssignment, BenchError> {
    if fractions.iter().any(|&f| !(f > 0.0 && f.is_finite())) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(BenchError::BadFractions(fractions.to_vec()));
    }
    let mut order: Vec<&str> = ids.to_vec();
    order.sort_unstable();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = order.len();
    let n_train = ((fractions[0] * n as f64).round() as usize).min(n);
    let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
    let mut partition = BTreeMap::new();
    for (i, id) in order.into_iter().enumerate() {
        let p = if i < n_train {
            Partition::Train
        } else if i < n_train + n_val {
            Partition::Val
        } else {
            Partition::Test
        };
        partition.insert(id.to_string(), p);
    }
    Ok(SplitAssignment {
        partition,
        ood: BTreeMap::new(),
    })
}

pub fn write_split(w: &mut impl Write, split: &SplitAssignment) -> std::io::Result<()> {
    writeln!(w, "id\tpartition")?;
    for (id, p) in &split.partition {
        writeln!(w, "{id}\t{p}")?;
    }
    Ok(())
}

pub fn read_split(r: impl BufRead) -> Result<SplitAssignment, BenchError> {
    let mut split = SplitAssignment::default();
    for (i, line) in r.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || (line_no == 1 && line.starts_with("id\t")) {
            continue;
        }
        let (id, p) = line.split_once('\t').ok_or_else(|| BenchError::Format {
            line: line_no,
            message: "expected `id<TAB>partition`".into(),
        })?;
        let p: Partition = p.trim().parse().map_err(|message| BenchError::Format { line: line_no, message })?;
        if split.partition.insert(id.to_string(), p).is_some() {
            return Err(BenchError::Format {
                line: line_no,
                message: format!("duplicate id `{id}`"),
            });
        }
    }
    Ok(split)
}

/// Sparse counts of residue names and of `child(linkage)parent` pairs.
pub type MonoFingerprint = BTreeMap<String, u32>;

pub fn mono_fingerprint(tree: &GlycanTree) -> MonoFingerprint {
    let mut fp = MonoFingerprint::new();
    for node in &tree.nodes {
        *fp.entry(node.name.clone()).or_default() += 1;
    }
    for e in &tree.edges {
        let key = format!("{}{}{}", tree.nodes[e.child].name, e.linkage, tree.nodes[e.parent].name);
        *fp.entry(key).or_default() += 1;
    }
    fp
}

/// `Σ min / Σ max` over the union of keys; two empty vectors count as
/// identical.
pub fn tanimoto_counts<K: Ord>(a: &BTreeMap<K, u32>, b: &BTreeMap<K, u32>) -> f64 {
    let mut lo = 0u64;
    let mut hi = 0u64;
    for (k, &x) in a {
        let y = b.get(k).copied().unwrap_or(0);
        lo += x.min(y) as u64;
        hi += x.max(y) as u64;
    }
    for (k, &y) in b {
        if !a.contains_key(k) {
            hi += y as u64;
        }
    }
    if hi == 0 {
        1.0
    } else {
        lo as f64 / hi as f64
    }
}

/// True for each test glycan whose best similarity to any train glycan is
/// below `threshold`.
pub fn ood_flags(train: &[&GlycanTree], test: &[&GlycanTree], threshold: f64) -> Vec<bool> {
    let train_fp: Vec<MonoFingerprint> = train.iter().map(|t| mono_fingerprint(t)).collect();
    test.iter()
        .map(|t| {
            let fp = mono_fingerprint(t);
            let best = train_fp.iter().map(|g| tanimoto_counts(&fp, g)).fold(0.0, f64::max);
            best < threshold
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glycan::parse_iupac;

    #[test]
    fn tanimoto_examples() {
        let set = |xs: &[u32]| xs.iter().map(|&x| (x, 1)).collect::<BTreeMap<u32, u32>>();
        assert_eq!(tanimoto_counts(&set(&[1, 2, 3]), &set(&[2, 3, 4])), 0.5);
        assert_eq!(tanimoto_counts(&set(&[1, 2]), &set(&[3])), 0.0);
        assert_eq!(tanimoto_counts(&set(&[1, 2]), &set(&[1, 2])), 1.0);
    }

    #[test]
    fn fingerprint_features() {
        let t = parse_iupac("Gal(b1-4)Glc").unwrap();
        let fp = mono_fingerprint(&t);
        assert_eq!(fp.get("Gal"), Some(&1));
        assert_eq!(fp.get("Gal(b1-4)Glc"), Some(&1));
        assert_eq!(fp.len(), 3);
    }

    #[test]
    fn immunogenicity_sized_split() {
        let ids: Vec<String> = (0..1168).map(|i| format!("g{i}")).collect();
        let refs: Vec<&str> = ids.iter().map(|s| s.as_str()).collect();
        let f = [825.0 / 1168.0, 230.0 / 1168.0, 113.0 / 1168.0];
        let s = random_split(&refs, f, 3).unwrap();
        assert_eq!(
            [s.count(Partition::Train), s.count(Partition::Val), s.count(Partition::Test)],
            [825, 230, 113]
        );
    }
}
