use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::glycan::{parse_iupac, GlycanTree};
use crate::homp::Head;
use crate::molgraph::assemble;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Task {
    Binary,
    Multiclass { k: usize },
    Multilabel { k: usize },
    Regression,
    /// Glycan and protein pairs with a real-valued target.
    Interaction,
}

impl Task {
    /// Columns after `id` and `iupac`.
    pub fn n_columns(self) -> usize {
        match self {
            Task::Binary | Task::Multiclass { .. } | Task::Regression => 1,
            Task::Multilabel { k } => k,
            Task::Interaction => 2,
        }
    }

    pub fn n_outputs(self) -> usize {
        match self {
            Task::Multiclass { k } | Task::Multilabel { k } => k,
            _ => 1,
        }
    }

    pub fn head(self) -> Head {
        match self {
            Task::Binary => Head::Classification {
                n_out: 1,
                multilabel: false,
            },
            Task::Multiclass { k } => Head::Classification {
                n_out: k,
                multilabel: false,
            },
            Task::Multilabel { k } => Head::Classification {
                n_out: k,
                multilabel: true,
            },
            Task::Regression | Task::Interaction => Head::Regression,
        }
    }

    pub fn is_regression(self) -> bool {
        matches!(self, Task::Regression | Task::Interaction)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: String,
    pub iupac: String,
    pub tree: GlycanTree,
    /// Class index, 0/1 label vector or value.
    pub label: Vec<f64>,
    pub protein: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProteinTable {
    pub dim: usize,
    pub embeddings: BTreeMap<String, Vec<f64>>,
}

impl ProteinTable {
    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.embeddings.get(id).map(|v| v.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub task: Task,
    pub records: Vec<Record>,
    /// Ids whose glycan failed to parse or assemble.
    pub dropped: Vec<String>,
    pub proteins: Option<ProteinTable>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.id.as_str()).collect()
    }

    pub fn mean_monomers(&self) -> f64 {
        self.records.iter().map(|r| r.tree.len()).sum::<usize>() as f64 / self.records.len().max(1) as f64
    }

    /// Records whose id is in `ids`, in dataset order.
    pub fn subset(&self, ids: &HashSet<&str>) -> Vec<&Record> {
        self.records.iter().filter(|r| ids.contains(r.id.as_str())).collect()
    }
}

fn format_err(line: usize, message: impl Into<String>) -> BenchError {
    BenchError::Format {
        line,
        message: message.into(),
    }
}

fn parse_float(s: &str, line: usize, what: &str) -> Result<f64, BenchError> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format_err(line, format!("{what} `{s}` is not a finite number")))
}

/// Parses dataset TSV text. The first non-empty line is the header.
pub fn parse_dataset(text: &str, task: Task) -> Result<Dataset, BenchError> {
    let mut records = Vec::new();
    let mut dropped = Vec::new();
    let mut seen = HashSet::new();
    let expected = 2 + task.n_columns();
    let mut header_done = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() {
            continue;
        }
        if !header_done {
            header_done = true;
            continue;
        }
        let cols: Vec<&str> = raw.split('\t').collect();
        if cols.len() != expected {
            return Err(format_err(line, format!("expected {expected} columns, found {}", cols.len())));
        }
        let id = cols[0].trim().to_string();
        if id.is_empty() {
            return Err(format_err(line, "empty id"));
        }
        if !seen.insert(id.clone()) {
            return Err(format_err(line, format!("duplicate id `{id}`")));
        }
        let (label, protein) = match task {
            Task::Binary => {
                let v = parse_float(cols[2], line, "label")?;
                if v != 0.0 && v != 1.0 {
                    return Err(format_err(line, format!("binary label must be 0 or 1, got {v}")));
                }
                (vec![v], None)
            }
            Task::Multiclass { k } => {
                let c: usize = cols[2]
                    .trim()
                    .parse()
                    .map_err(|_| format_err(line, format!("class `{}` is not an index", cols[2])))?;
                if c >= k {
                    return Err(format_err(line, format!("class {c} out of range for {k} classes")));
                }
                (vec![c as f64], None)
            }
            Task::Multilabel { .. } => {
                let mut v = Vec::with_capacity(cols.len() - 2);
                for c in &cols[2..] {
                    let x = parse_float(c, line, "label")?;
                    if x != 0.0 && x != 1.0 {
                        return Err(format_err(line, format!("multilabel entries must be 0 or 1, got {x}")));
                    }
                    v.push(x);
                }
                (v, None)
            }
            Task::Regression => (vec![parse_float(cols[2], line, "value")?], None),
            Task::Interaction => {
                let p = cols[2].trim();
                if p.is_empty() {
                    return Err(format_err(line, "empty protein id"));
                }
                (vec![parse_float(cols[3], line, "value")?], Some(p.to_string()))
            }
        };
        let iupac = cols[1].trim().to_string();
        let tree = match parse_iupac(&iupac) {
            Ok(t) => t,
            Err(e) => {
                log::debug!("line {line}: dropping `{iupac}`: {e}");
                dropped.push(id);
                continue;
            }
        };
        if let Err(e) = assemble(&tree) {
            log::debug!("line {line}: dropping `{iupac}`: {e}");
            dropped.push(id);
            continue;
        }
        records.push(Record {
            id,
            iupac,
            tree,
            label,
            protein,
        });
    }
    if !dropped.is_empty() {
        log::info!("dropped {} glycan(s) that failed to parse or assemble", dropped.len());
    }
    if records.is_empty() {
        return Err(BenchError::EmptyDataset);
    }
    Ok(Dataset {
        task,
        records,
        dropped,
        proteins: None,
    })
}

pub fn load_dataset(path: &Path, task: Task) -> Result<Dataset, BenchError> {
    parse_dataset(&std::fs::read_to_string(path)?, task)
}

/// Parses `protein_id<TAB>x1<TAB>x2...`. A first line whose second field
/// is not numeric is taken as a header.
pub fn parse_proteins(text: &str) -> Result<ProteinTable, BenchError> {
    let mut table = ProteinTable::default();
    let mut first = true;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = raw.split('\t').collect();
        if std::mem::take(&mut first) && cols.get(1).is_some_and(|c| c.trim().parse::<f64>().is_err()) {
            continue;
        }
        if cols.len() < 2 {
            return Err(format_err(line, "protein row needs an id and at least one value"));
        }
        let v = cols[1..]
            .iter()
            .map(|c| parse_float(c, line, "embedding entry"))
            .collect::<Result<Vec<_>, _>>()?;
        if table.embeddings.is_empty() {
            table.dim = v.len();
        } else if v.len() != table.dim {
            return Err(format_err(line, format!("expected {} values, found {}", table.dim, v.len())));
        }
        let id = cols[0].trim().to_string();
        if table.embeddings.insert(id.clone(), v).is_some() {
            return Err(format_err(line, format!("duplicate protein `{id}`")));
        }
    }
    if table.embeddings.is_empty() {
        return Err(BenchError::EmptyDataset);
    }
    Ok(table)
}

pub fn load_proteins(path: &Path) -> Result<ProteinTable, BenchError> {
    parse_proteins(&std::fs::read_to_string(path)?)
}
