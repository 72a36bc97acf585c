//! SMILES subset: organic-subset and bracket atoms, branches, ring closures
//! (`1`-`9`, `%nn`), single/double/aromatic bonds and `.` separators.
//! Chirality marks and directional bonds are accepted and dropped.

use std::collections::BTreeMap;

use super::{Atom, BondOrder, Element, MolError, MolecularGraph};

fn syntax(offset: usize, message: impl Into<String>) -> MolError {
    MolError::Syntax {
        offset,
        message: message.into(),
    }
}

struct OpenRing {
    atom: usize,
    order: Option<BondOrder>,
    offset: usize,
}

pub fn parse_smiles(text: &str) -> Result<MolecularGraph, MolError> {
    let bytes = text.as_bytes();
    if bytes.is_empty() {
        return Err(syntax(0, "empty input"));
    }
    let mut g = MolecularGraph::default();
    // atoms written in brackets keep their explicit H count
    let mut bracketed: Vec<bool> = Vec::new();
    let mut prev: Option<usize> = None;
    let mut branch_stack: Vec<(Option<usize>, usize)> = Vec::new();
    let mut pending_bond: Option<(BondOrder, usize)> = None;
    let mut rings: BTreeMap<u32, OpenRing> = BTreeMap::new();
    let mut pos = 0;

    let connect = |g: &mut MolecularGraph,
                   a: usize,
                   b: usize,
                   order: Option<BondOrder>,
                   offset: usize|
     -> Result<(), MolError> {
        if a == b || g.bond_between(a, b).is_some() {
            return Err(syntax(offset, "duplicate or self bond"));
        }
        let order = order.unwrap_or(if g.atoms[a].aromatic && g.atoms[b].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        });
        g.add_bond(a, b, order);
        Ok(())
    };

    while pos < bytes.len() {
        let c = bytes[pos];
        match c {
            b'(' => {
                if prev.is_none() {
                    return Err(syntax(pos, "branch without a preceding atom"));
                }
                branch_stack.push((prev, pos));
                pos += 1;
            }
            b')' => {
                let Some((p, _)) = branch_stack.pop() else {
                    return Err(syntax(pos, "unmatched `)`"));
                };
                if pending_bond.is_some() {
                    return Err(syntax(pos, "bond without a following atom"));
                }
                prev = p;
                pos += 1;
            }
            b'.' => {
                if pending_bond.is_some() {
                    return Err(syntax(pos, "bond before `.`"));
                }
                prev = None;
                pos += 1;
            }
            b'-' | b'/' | b'\\' => {
                pending_bond = Some((BondOrder::Single, pos));
                pos += 1;
            }
            b'=' => {
                pending_bond = Some((BondOrder::Double, pos));
                pos += 1;
            }
            b':' => {
                pending_bond = Some((BondOrder::Aromatic, pos));
                pos += 1;
            }
            b'#' | b'$' => return Err(syntax(pos, "unsupported bond order")),
            b'0'..=b'9' | b'%' => {
                let start = pos;
                let number = if c == b'%' {
                    let digits = bytes.get(pos + 1..pos + 3).filter(|d| d.iter().all(u8::is_ascii_digit));
                    let Some(d) = digits else {
                        return Err(syntax(pos, "`%` must be followed by two digits"));
                    };
                    pos += 3;
                    ((d[0] - b'0') * 10 + (d[1] - b'0')) as u32
                } else {
                    pos += 1;
                    (c - b'0') as u32
                };
                let Some(atom) = prev else {
                    return Err(syntax(start, "ring closure without an atom"));
                };
                let order = pending_bond.take().map(|(o, _)| o);
                match rings.remove(&number) {
                    Some(open) => {
                        let order = match (open.order, order) {
                            (Some(a), Some(b)) if a != b => {
                                return Err(syntax(start, "conflicting ring bond orders"))
                            }
                            (a, b) => a.or(b),
                        };
                        connect(&mut g, open.atom, atom, order, start)?;
                    }
                    None => {
                        rings.insert(
                            number,
                            OpenRing {
                                atom,
                                order,
                                offset: start,
                            },
                        );
                    }
                }
            }
            b'[' => {
                let start = pos;
                let close = text[pos..]
                    .find(']')
                    .map(|i| pos + i)
                    .ok_or_else(|| syntax(pos, "unclosed `[`"))?;
                let atom = parse_bracket_atom(&text[pos + 1..close], pos + 1)?;
                pos = close + 1;
                let idx = g.add_atom(atom);
                bracketed.push(true);
                if let Some(p) = prev {
                    let order = pending_bond.take().map(|(o, _)| o);
                    connect(&mut g, p, idx, order, start)?;
                }
                prev = Some(idx);
            }
            _ => {
                let start = pos;
                let (element, aromatic, len) = organic_atom(bytes, pos)
                    .ok_or_else(|| syntax(pos, format!("bad element token `{}`", c as char)))?;
                pos += len;
                let idx = g.add_atom(Atom {
                    element,
                    charge: 0,
                    implicit_h: 0,
                    aromatic,
                });
                bracketed.push(false);
                if let Some(p) = prev {
                    let order = pending_bond.take().map(|(o, _)| o);
                    connect(&mut g, p, idx, order, start)?;
                } else if let Some((_, off)) = pending_bond {
                    return Err(syntax(off, "bond without a preceding atom"));
                }
                prev = Some(idx);
            }
        }
    }
    if let Some((_, off)) = pending_bond {
        return Err(syntax(off, "bond without a following atom"));
    }
    if let Some((_, off)) = branch_stack.last() {
        return Err(syntax(*off, "unclosed branch"));
    }
    if let Some(open) = rings.values().next() {
        return Err(syntax(open.offset, "unmatched ring bond"));
    }
    for i in 0..g.atoms.len() {
        if !bracketed[i] {
            g.atoms[i].implicit_h = g.default_implicit_h(i);
        }
    }
    Ok(g)
}

fn organic_atom(bytes: &[u8], pos: usize) -> Option<(Element, bool, usize)> {
    let c = bytes[pos];
    let next = bytes.get(pos + 1).copied();
    Some(match c {
        b'C' if next == Some(b'l') => (Element::Cl, false, 2),
        b'B' if next == Some(b'r') => (Element::Br, false, 2),
        b'B' => (Element::B, false, 1),
        b'C' => (Element::C, false, 1),
        b'N' => (Element::N, false, 1),
        b'O' => (Element::O, false, 1),
        b'P' => (Element::P, false, 1),
        b'S' => (Element::S, false, 1),
        b'F' => (Element::F, false, 1),
        b'I' => (Element::I, false, 1),
        b'b' => (Element::B, true, 1),
        b'c' => (Element::C, true, 1),
        b'n' => (Element::N, true, 1),
        b'o' => (Element::O, true, 1),
        b'p' => (Element::P, true, 1),
        b's' => (Element::S, true, 1),
        _ => return None,
    })
}

fn parse_bracket_atom(body: &str, offset: usize) -> Result<Atom, MolError> {
    let b = body.as_bytes();
    let mut i;
    if b.first().is_some_and(u8::is_ascii_digit) {
        return Err(syntax(offset, "isotopes are not supported"));
    }
    let (element, aromatic) = {
        let two = body.get(0..2);
        if let Some(e) = two.and_then(Element::from_symbol) {
            i = 2;
            (e, false)
        } else if let Some(e) = body.get(0..1).and_then(Element::from_symbol) {
            i = 1;
            (e, false)
        } else {
            let lower = body.get(0..1).unwrap_or("");
            let up = lower.to_ascii_uppercase();
            match Element::from_symbol(&up) {
                Some(e) if lower != up && e.can_be_aromatic() => {
                    i = 1;
                    (e, true)
                }
                _ => return Err(syntax(offset, format!("bad element token in `[{body}]`"))),
            }
        }
    };
    while i < b.len() && b[i] == b'@' {
        i += 1;
    }
    let mut h = 0u8;
    if i < b.len() && b[i] == b'H' {
        i += 1;
        h = 1;
        if i < b.len() && b[i].is_ascii_digit() {
            h = b[i] - b'0';
            i += 1;
        }
    }
    let mut charge: i8 = 0;
    if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        let sign: i8 = if b[i] == b'+' { 1 } else { -1 };
        let sym = b[i];
        i += 1;
        if i < b.len() && b[i].is_ascii_digit() {
            charge = sign * (b[i] - b'0') as i8;
            i += 1;
        } else {
            charge = sign;
            while i < b.len() && b[i] == sym {
                charge += sign;
                i += 1;
            }
        }
    }
    if i != b.len() {
        return Err(syntax(offset + i, format!("unsupported bracket atom `[{body}]`")));
    }
    Ok(Atom {
        element,
        charge,
        implicit_h: h,
        aromatic,
    })
}

const WRITABLE: [Element; 5] = [Element::C, Element::O, Element::N, Element::S, Element::P];

/// Writes a SMILES string by depth-first traversal from the lowest
/// unvisited atom, visiting neighbors in bond-list order.
pub fn write_smiles(g: &MolecularGraph) -> Result<String, MolError> {
    if let Some(a) = g.atoms.iter().find(|a| !WRITABLE.contains(&a.element)) {
        return Err(MolError::UnsupportedElement(a.element));
    }
    let n = g.atoms.len();
    let adj = g.adjacency();
    // pass 1: DFS tree, ring closure bonds
    let mut visited = vec![false; n];
    let mut children: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut tree_bond = vec![false; g.bonds.len()];
    let mut roots = Vec::new();
    for start in 0..n {
        if visited[start] {
            continue;
        }
        roots.push(start);
        visited[start] = true;
        let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
        while let Some(top) = stack.last_mut() {
            let (v, slot) = *top;
            if slot < adj[v].len() {
                top.1 += 1;
                let (u, bi) = adj[v][slot];
                if !visited[u] {
                    visited[u] = true;
                    tree_bond[bi] = true;
                    children[v].push((u, bi));
                    stack.push((u, 0));
                }
            } else {
                stack.pop();
            }
        }
    }
    let ring_bonds: Vec<usize> = (0..g.bonds.len()).filter(|&i| !tree_bond[i]).collect();
    let mut ring_at: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &bi in &ring_bonds {
        ring_at[g.bonds[bi].a].push(bi);
        ring_at[g.bonds[bi].b].push(bi);
    }

    struct Writer<'a> {
        g: &'a MolecularGraph,
        children: &'a [Vec<(usize, usize)>],
        ring_at: &'a [Vec<usize>],
        emitted: Vec<bool>,
        digit_of: BTreeMap<usize, u32>,
        in_use: Vec<bool>,
        out: String,
    }

    impl Writer<'_> {
        fn bond_symbol(&self, bi: usize) -> &'static str {
            let b = &self.g.bonds[bi];
            let both_aromatic = self.g.atoms[b.a].aromatic && self.g.atoms[b.b].aromatic;
            match (b.order, both_aromatic) {
                (super::BondOrder::Single, true) => "-",
                (super::BondOrder::Single, false) => "",
                (super::BondOrder::Double, _) => "=",
                (super::BondOrder::Aromatic, true) => "",
                (super::BondOrder::Aromatic, false) => ":",
            }
        }

        fn atom_text(&self, i: usize) -> String {
            let a = &self.g.atoms[i];
            let sym = if a.aromatic {
                a.element.symbol().to_ascii_lowercase()
            } else {
                a.element.symbol().to_string()
            };
            if a.charge == 0 && a.implicit_h == self.g.default_implicit_h(i) {
                return sym;
            }
            let mut s = format!("[{sym}");
            match a.implicit_h {
                0 => {}
                1 => s.push('H'),
                h => s.push_str(&format!("H{h}")),
            }
            match a.charge {
                0 => {}
                1 => s.push('+'),
                -1 => s.push('-'),
                c if c > 0 => s.push_str(&format!("+{c}")),
                c => s.push_str(&format!("-{}", -c)),
            }
            s.push(']');
            s
        }

        fn emit(&mut self, v: usize) {
            self.out.push_str(&self.atom_text(v));
            self.emitted[v] = true;
            let ring_at = self.ring_at;
            for &bi in &ring_at[v] {
                let other = self.g.bonds[bi].other(v);
                if self.emitted[other] && self.digit_of.contains_key(&bi) {
                    let d = self.digit_of.remove(&bi).unwrap();
                    self.in_use[d as usize] = false;
                    self.out.push_str(self.bond_symbol(bi));
                    push_digit(&mut self.out, d);
                } else {
                    let d = (1..self.in_use.len() as u32)
                        .find(|&d| !self.in_use[d as usize])
                        .expect("at most 99 open rings");
                    self.in_use[d as usize] = true;
                    self.digit_of.insert(bi, d);
                    self.out.push_str(self.bond_symbol(bi));
                    push_digit(&mut self.out, d);
                }
            }
            let children = self.children;
            let kids = &children[v];
            for (k, &(u, bi)) in kids.iter().enumerate() {
                let last = k + 1 == kids.len();
                if !last {
                    self.out.push('(');
                }
                self.out.push_str(self.bond_symbol(bi));
                self.emit(u);
                if !last {
                    self.out.push(')');
                }
            }
        }
    }

    fn push_digit(out: &mut String, d: u32) {
        if d < 10 {
            out.push(char::from(b'0' + d as u8));
        } else {
            out.push_str(&format!("%{d:02}"));
        }
    }

    let mut w = Writer {
        g,
        children: &children,
        ring_at: &ring_at,
        emitted: vec![false; n],
        digit_of: BTreeMap::new(),
        in_use: vec![false; 100],
        out: String::new(),
    };
    for (k, &r) in roots.iter().enumerate() {
        if k > 0 {
            w.out.push('.');
        }
        w.emit(r);
    }
    Ok(w.out)
}
