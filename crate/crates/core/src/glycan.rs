//! IUPAC-condensed glycan notation.
//!
//! A glycan is written from the non-reducing ends towards the reducing end,
//! e.g. `Neu5Ac(a2-3)Gal(b1-4)[Fuc(a1-3)]GlcNAc`. Every residue except the
//! rightmost one carries a linkage token `(<anomer><donor>-<acceptor>)` that
//! attaches it to the next residue of its chain; bracketed groups are side
//! branches that attach to the residue that follows the closing bracket.
//!
//! ```text
//! glycan   = chain residue ;
//! chain    = { residue linkage | "[" chain residue linkage "]" } ;
//! linkage  = "(" [ "a" | "b" | "?" ] digit "-" digit ")" ;
//! residue  = letter { letter | digit } ;
//! ```

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Supported monosaccharide tokens.
pub const VOCABULARY: &[&str] = &[
    "Glc", "Gal", "Man", "GlcNAc", "GalNAc", "Fuc", "Xyl", "Rha", "Ara", "GlcA", "IdoA", "Neu5Ac",
    "Neu5Gc", "Kdn",
];

/// Index of a monosaccharide token in [`VOCABULARY`].
pub fn vocabulary_index(name: &str) -> Option<usize> {
    VOCABULARY.iter().position(|v| *v == name)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GlycanError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown monosaccharide `{token}` at byte {offset}")]
    UnknownMonosaccharide { offset: usize, token: String },
}

impl GlycanError {
    pub fn offset(&self) -> usize {
        match self {
            GlycanError::Syntax { offset, .. } | GlycanError::UnknownMonosaccharide { offset, .. } => {
                *offset
            }
        }
    }

    fn syntax(offset: usize, message: impl Into<String>) -> Self {
        GlycanError::Syntax {
            offset,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Anomer {
    Alpha,
    Beta,
    Unspecified,
}

impl Anomer {
    fn symbol(self) -> char {
        match self {
            Anomer::Alpha => 'a',
            Anomer::Beta => 'b',
            Anomer::Unspecified => '?',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonosaccharideNode {
    pub name: String,
    pub anomer: Anomer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Linkage {
    pub anomer: Anomer,
    pub donor_position: u8,
    pub acceptor_position: u8,
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}{}-{})",
            self.anomer.symbol(),
            self.donor_position,
            self.acceptor_position
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlycanEdge {
    pub parent: usize,
    pub child: usize,
    pub linkage: Linkage,
}

/// Rooted tree of monosaccharides; the root is the reducing end.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlycanTree {
    pub nodes: Vec<MonosaccharideNode>,
    pub edges: Vec<GlycanEdge>,
    pub root: usize,
}

/// Raised while parsing for inputs that were accepted but defaulted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ParseWarning {
    /// The linkage donated by this node gave no anomeric configuration;
    /// assembly treats it as beta.
    UnspecifiedAnomer { node: usize },
}

impl GlycanTree {
    pub fn single(name: &str) -> Self {
        GlycanTree {
            nodes: vec![MonosaccharideNode {
                name: name.to_string(),
                anomer: Anomer::Unspecified,
            }],
            edges: Vec::new(),
            root: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Child edges of `node`, in edge-list order.
    pub fn children(&self, node: usize) -> impl Iterator<Item = &GlycanEdge> {
        self.edges.iter().filter(move |e| e.parent == node)
    }

    pub fn parent_edge(&self, node: usize) -> Option<&GlycanEdge> {
        self.edges.iter().find(|e| e.child == node)
    }

    pub fn warnings(&self) -> Vec<ParseWarning> {
        self.edges
            .iter()
            .filter(|e| e.linkage.anomer == Anomer::Unspecified)
            .map(|e| ParseWarning::UnspecifiedAnomer { node: e.child })
            .collect()
    }

    /// Checks the tree invariants: valid indices, no self edges, every
    /// non-root node has exactly one parent and everything reaches the root.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.nodes.len();
        if n == 0 {
            return Err("empty tree".into());
        }
        if self.root >= n {
            return Err(format!("root index {} out of range", self.root));
        }
        if self.edges.len() != n - 1 {
            return Err(format!("{} nodes but {} edges", n, self.edges.len()));
        }
        let mut parent = vec![None; n];
        for e in &self.edges {
            if e.parent >= n || e.child >= n {
                return Err(format!("edge {}->{} out of range", e.child, e.parent));
            }
            if e.parent == e.child {
                return Err(format!("self edge on node {}", e.child));
            }
            if e.child == self.root {
                return Err("root has a parent".into());
            }
            if parent[e.child].replace(e.parent).is_some() {
                return Err(format!("node {} has two parents", e.child));
            }
        }
        for start in 0..n {
            let mut cur = start;
            let mut steps = 0;
            while cur != self.root {
                cur = parent[cur].ok_or_else(|| format!("node {cur} has no parent"))?;
                steps += 1;
                if steps > n {
                    return Err("cycle detected".into());
                }
            }
        }
        Ok(())
    }

    /// Deterministic IUPAC-condensed rendering. Children are emitted in
    /// ascending acceptor position, ties broken by their rendered text; the
    /// first child stays on the main chain and the rest become branches.
    pub fn to_iupac(&self) -> String {
        let mut children: Vec<Vec<&GlycanEdge>> = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            children[e.parent].push(e);
        }
        fn render(tree: &GlycanTree, children: &[Vec<&GlycanEdge>], node: usize) -> String {
            let mut parts: Vec<(u8, String)> = children[node]
                .iter()
                .map(|e| {
                    let mut s = render(tree, children, e.child);
                    s.push_str(&e.linkage.to_string());
                    (e.linkage.acceptor_position, s)
                })
                .collect();
            parts.sort();
            let mut out = String::new();
            for (i, (_, s)) in parts.iter().enumerate() {
                if i == 0 {
                    out.push_str(s);
                } else {
                    out.push('[');
                    out.push_str(s);
                    out.push(']');
                }
            }
            out.push_str(&tree.nodes[node].name);
            out
        }
        render(self, &children, self.root)
    }

    /// Count of each monosaccharide name.
    pub fn composition(&self) -> BTreeMap<&str, usize> {
        let mut out = BTreeMap::new();
        for n in &self.nodes {
            *out.entry(n.name.as_str()).or_insert(0) += 1;
        }
        out
    }
}

pub fn write_iupac(tree: &GlycanTree) -> String {
    tree.to_iupac()
}

struct Pending {
    node: usize,
    linkage: Linkage,
}

/// Parses IUPAC-condensed text into a [`GlycanTree`]; nodes are numbered
/// in order of appearance.
pub fn parse_iupac(text: &str) -> Result<GlycanTree, GlycanError> {
    let bytes = text.as_bytes();
    if bytes.is_empty() {
        return Err(GlycanError::syntax(0, "empty input"));
    }
    let mut nodes: Vec<MonosaccharideNode> = Vec::new();
    let mut edges: Vec<GlycanEdge> = Vec::new();
    // One pending list per bracket depth; `open` remembers bracket offsets.
    let mut pending: Vec<Vec<Pending>> = vec![Vec::new()];
    let mut open: Vec<usize> = Vec::new();
    let mut root = None;
    let mut pos = 0;

    while pos < bytes.len() {
        match bytes[pos] {
            b'[' => {
                open.push(pos);
                pending.push(Vec::new());
                pos += 1;
            }
            b']' => {
                let Some(_) = open.pop() else {
                    return Err(GlycanError::syntax(pos, "unmatched `]`"));
                };
                let branch = pending.pop().expect("pending stack follows brackets");
                if branch.len() != 1 {
                    return Err(GlycanError::syntax(
                        pos,
                        "branch must end in exactly one linked residue",
                    ));
                }
                pending.last_mut().unwrap().extend(branch);
                pos += 1;
            }
            b if b.is_ascii_alphabetic() => {
                let start = pos;
                while pos < bytes.len() && bytes[pos].is_ascii_alphanumeric() {
                    pos += 1;
                }
                let token = &text[start..pos];
                if vocabulary_index(token).is_none() {
                    return Err(GlycanError::UnknownMonosaccharide {
                        offset: start,
                        token: token.to_string(),
                    });
                }
                let idx = nodes.len();
                nodes.push(MonosaccharideNode {
                    name: token.to_string(),
                    anomer: Anomer::Unspecified,
                });
                for p in pending.last_mut().unwrap().drain(..) {
                    edges.push(GlycanEdge {
                        parent: idx,
                        child: p.node,
                        linkage: p.linkage,
                    });
                }
                if pos < bytes.len() && bytes[pos] == b'(' {
                    let (linkage, next) = parse_linkage(bytes, pos)?;
                    nodes[idx].anomer = linkage.anomer;
                    pending.last_mut().unwrap().push(Pending { node: idx, linkage });
                    pos = next;
                } else if pos == bytes.len() {
                    if let Some(&b) = open.last() {
                        return Err(GlycanError::syntax(b, "unclosed `[`"));
                    }
                    root = Some(idx);
                } else {
                    return Err(GlycanError::syntax(pos, "expected linkage after residue"));
                }
            }
            b'(' => return Err(GlycanError::syntax(pos, "linkage without residue")),
            _ => {
                let ch = text[pos..].chars().next().unwrap_or('?');
                return Err(GlycanError::syntax(pos, format!("unexpected character `{ch}`")));
            }
        }
    }
    if let Some(&b) = open.last() {
        return Err(GlycanError::syntax(b, "unclosed `[`"));
    }
    let root = root.ok_or_else(|| GlycanError::syntax(bytes.len(), "glycan must end in an unlinked residue"))?;
    let tree = GlycanTree { nodes, edges, root };
    debug_assert!(tree.validate().is_ok());
    Ok(tree)
}

fn parse_linkage(bytes: &[u8], start: usize) -> Result<(Linkage, usize), GlycanError> {
    let mut pos = start + 1;
    let err = |at: usize, m: &str| GlycanError::syntax(at, format!("malformed linkage: {m}"));
    let anomer = match bytes.get(pos) {
        Some(b'a') => {
            pos += 1;
            Anomer::Alpha
        }
        Some(b'b') => {
            pos += 1;
            Anomer::Beta
        }
        Some(b'?') => {
            pos += 1;
            Anomer::Unspecified
        }
        Some(b) if b.is_ascii_digit() => Anomer::Unspecified,
        None => return Err(err(pos, "truncated")),
        Some(_) => return Err(err(pos, "expected anomer `a`, `b` or `?`")),
    };
    let donor = match bytes.get(pos) {
        Some(b) if b.is_ascii_digit() && *b != b'0' => b - b'0',
        None => return Err(err(pos, "truncated")),
        _ => return Err(err(pos, "expected donor position 1-9")),
    };
    pos += 1;
    match bytes.get(pos) {
        Some(b'-') => pos += 1,
        None => return Err(err(pos, "truncated")),
        _ => return Err(err(pos, "expected `-`")),
    }
    let acceptor = match bytes.get(pos) {
        Some(b) if b.is_ascii_digit() && *b != b'0' => b - b'0',
        None => return Err(err(pos, "truncated")),
        _ => return Err(err(pos, "expected acceptor position 1-9")),
    };
    pos += 1;
    match bytes.get(pos) {
        Some(b')') => pos += 1,
        None => return Err(err(pos, "truncated")),
        _ => return Err(err(pos, "expected `)`")),
    }
    Ok((
        Linkage {
            anomer,
            donor_position: donor,
            acceptor_position: acceptor,
        },
        pos,
    ))
}
