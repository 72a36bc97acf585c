//! Glycans as combinatorial complexes.
//!
//! The pipeline runs IUPAC-condensed text through [`glycan`] into a
//! monosaccharide tree, [`molgraph`] assembles the heavy-atom graph,
//! [`complex`] lifts it to a rank 0/1/2 combinatorial complex, and
//! [`homp`] runs higher-order message passing on top of the reverse-mode
//! engine in [`tensor`]. [`bench`] holds datasets, splits, metrics and the
//! training loops.

pub mod glycan;
pub mod complex;
pub mod molgraph;
pub mod tensor;
pub mod homp;
pub mod bench;
