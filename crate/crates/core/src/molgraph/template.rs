//! Monosaccharide atom templates, loaded from the versioned data file
//! `data/templates.json`.
//!
//! Each record lists labelled heavy atoms (`C1`, `O5`, `N2`, ...; the
//! element is the leading letter), bonds between labels with an optional
//! third entry `"double"`, and a map from carbon position to the
//! `[carbon, hydroxyl oxygen]` pair available for glycosidic linkage.
//! `anomeric_position` names the position whose oxygen bridges to the
//! parent when this residue is a donor.

use std::collections::{BTreeMap, HashMap};
use std::sync::OnceLock;

use serde::Deserialize;

use super::{Atom, BondOrder, Element, MolError, MolecularGraph};

pub const TEMPLATE_FORMAT_VERSION: u32 = 1;
const FORMAT_TAG: &str = "glycocc-monomer-templates";
const BUILTIN: &str = include_str!("../../data/templates.json");

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LibraryFile {
    format: String,
    version: u32,
    templates: Vec<TemplateRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateRecord {
    name: String,
    series: String,
    ring: String,
    anomeric_position: u8,
    atoms: Vec<String>,
    bonds: Vec<Vec<String>>,
    positions: BTreeMap<String, [String; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonomerTemplate {
    pub name: String,
    /// D/L series of the free sugar.
    pub series: String,
    pub ring: String,
    pub graph: MolecularGraph,
    pub labels: Vec<String>,
    pub anomeric_position: u8,
    pub anomeric_oxygen: usize,
    pub position_carbons: BTreeMap<u8, usize>,
    pub position_oxygens: BTreeMap<u8, usize>,
}

impl MonomerTemplate {
    pub fn n_atoms(&self) -> usize {
        self.graph.n_atoms()
    }

    pub fn atom_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    fn from_record(rec: TemplateRecord) -> Result<Self, MolError> {
        let bad = |m: String| MolError::Template(format!("{}: {m}", rec.name));
        let mut graph = MolecularGraph::default();
        for label in &rec.atoms {
            let sym = label.get(0..1).unwrap_or("");
            let element = Element::from_symbol(sym).ok_or_else(|| bad(format!("bad atom label `{label}`")))?;
            graph.add_atom(Atom::new(element));
        }
        let index = |l: &str| {
            rec.atoms
                .iter()
                .position(|a| a == l)
                .ok_or_else(|| bad(format!("unknown atom label `{l}`")))
        };
        for b in &rec.bonds {
            let order = match b.get(2).map(String::as_str) {
                None => BondOrder::Single,
                Some("double") => BondOrder::Double,
                Some(o) => return Err(bad(format!("unknown bond order `{o}`"))),
            };
            if b.len() < 2 || b.len() > 3 {
                return Err(bad(format!("malformed bond {b:?}")));
            }
            let (x, y) = (index(&b[0])?, index(&b[1])?);
            if x == y || graph.bond_between(x, y).is_some() {
                return Err(bad(format!("duplicate or self bond {b:?}")));
            }
            graph.add_bond(x, y, order);
        }
        for i in 0..graph.n_atoms() {
            graph.atoms[i].implicit_h = graph.default_implicit_h(i);
        }
        if graph.n_components() != 1 {
            return Err(bad("template graph is not connected".into()));
        }
        let mut position_carbons = BTreeMap::new();
        let mut position_oxygens = BTreeMap::new();
        for (pos, [c, o]) in &rec.positions {
            let p: u8 = pos.parse().map_err(|_| bad(format!("bad position `{pos}`")))?;
            let (ci, oi) = (index(c)?, index(o)?);
            if graph.atoms[ci].element != Element::C || graph.atoms[oi].element != Element::O {
                return Err(bad(format!("position {p} must pair a carbon with an oxygen")));
            }
            match graph.bond_between(ci, oi) {
                Some(bi) if graph.bonds[bi].order == BondOrder::Single => {}
                _ => return Err(bad(format!("position {p}: {o} is not a hydroxyl on {c}"))),
            }
            if graph.degree(oi) != 1 {
                return Err(bad(format!("position {p}: {o} is not terminal")));
            }
            position_carbons.insert(p, ci);
            position_oxygens.insert(p, oi);
        }
        let anomeric_oxygen = *position_oxygens
            .get(&rec.anomeric_position)
            .ok_or_else(|| bad("anomeric position has no hydroxyl".into()))?;
        Ok(MonomerTemplate {
            name: rec.name,
            series: rec.series,
            ring: rec.ring,
            graph,
            labels: rec.atoms,
            anomeric_position: rec.anomeric_position,
            anomeric_oxygen,
            position_carbons,
            position_oxygens,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TemplateLibrary {
    templates: Vec<MonomerTemplate>,
    by_name: HashMap<String, usize>,
}

impl TemplateLibrary {
    pub fn from_json(text: &str) -> Result<Self, MolError> {
        let file: LibraryFile =
            serde_json::from_str(text).map_err(|e| MolError::Template(e.to_string()))?;
        if file.format != FORMAT_TAG {
            return Err(MolError::Template(format!("unexpected format tag `{}`", file.format)));
        }
        if file.version != TEMPLATE_FORMAT_VERSION {
            return Err(MolError::Template(format!(
                "unsupported template version {}",
                file.version
            )));
        }
        let mut templates = Vec::new();
        let mut by_name = HashMap::new();
        for rec in file.templates {
            let t = MonomerTemplate::from_record(rec)?;
            if by_name.insert(t.name.clone(), templates.len()).is_some() {
                return Err(MolError::Template(format!("duplicate template `{}`", t.name)));
            }
            templates.push(t);
        }
        Ok(TemplateLibrary { templates, by_name })
    }

    pub fn get(&self, name: &str) -> Option<&MonomerTemplate> {
        self.by_name.get(name).map(|&i| &self.templates[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &MonomerTemplate> {
        self.templates.iter()
    }
}

/// The library bundled with the crate.
pub fn template_library() -> &'static TemplateLibrary {
    static LIB: OnceLock<TemplateLibrary> = OnceLock::new();
    LIB.get_or_init(|| TemplateLibrary::from_json(BUILTIN).expect("bundled templates are valid"))
}

pub fn template(name: &str) -> Option<&'static MonomerTemplate> {
    template_library().get(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glycan::VOCABULARY;

    #[test]
    fn every_vocabulary_entry_has_a_template() {
        for name in VOCABULARY {
            let t = template(name).unwrap_or_else(|| panic!("missing {name}"));
            assert_eq!(t.graph.ring_count(), 1, "{name}");
        }
        assert_eq!(template_library().iter().count(), VOCABULARY.len());
    }

    #[test]
    fn molecular_formulas() {
        // free reducing sugars
        let expected = [
            ("Glc", "C6H12O6"),
            ("Gal", "C6H12O6"),
            ("Man", "C6H12O6"),
            ("GlcNAc", "C8H15NO6"),
            ("GalNAc", "C8H15NO6"),
            ("Fuc", "C6H12O5"),
            ("Rha", "C6H12O5"),
            ("Xyl", "C5H10O5"),
            ("Ara", "C5H10O5"),
            ("GlcA", "C6H10O7"),
            ("IdoA", "C6H10O7"),
            ("Neu5Ac", "C11H19NO9"),
            ("Neu5Gc", "C11H19NO10"),
            ("Kdn", "C9H16O9"),
        ];
        for (name, formula) in expected {
            assert_eq!(template(name).unwrap().graph.formula(), formula, "{name}");
        }
    }

    #[test]
    fn glucose_shape() {
        let t = template("Glc").unwrap();
        assert_eq!((t.n_atoms(), t.graph.n_bonds()), (12, 12));
        assert_eq!(t.labels[t.anomeric_oxygen], "O1");
        assert_eq!(t.position_oxygens.keys().copied().collect::<Vec<_>>(), vec![1, 2, 3, 4, 6]);
        let s = template("Neu5Ac").unwrap();
        assert_eq!(s.anomeric_position, 2);
        assert_eq!(s.labels[s.anomeric_oxygen], "O2");
    }

    #[test]
    fn rejects_bad_libraries() {
        assert!(TemplateLibrary::from_json("{}").is_err());
        let wrong_version = BUILTIN.replace("\"version\": 1", "\"version\": 9");
        assert!(TemplateLibrary::from_json(&wrong_version).is_err());
        let bad_pos = BUILTIN.replacen("\"1\": [\"C1\", \"O1\"]", "\"1\": [\"C2\", \"O1\"]", 1);
        assert!(TemplateLibrary::from_json(&bad_pos).is_err());
    }
}
