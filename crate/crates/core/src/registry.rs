//! Name-keyed registries for the interchangeable strategies.
//!
//! Each family (Hamiltonian form, transverse representation, lineshape
//! model) sits behind a trait; configuration selects an implementation by
//! its registered name.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::discretization::{HamiltonianForm, MetricForm, TwistFrame};
use crate::error::{Error, Result};
use crate::resonance::{BreitWignerModel, FanoModel, LineshapeModel};
use crate::scattering::{FullGrid, ModeSpace, TransverseRepresentation};

pub struct Registry<T: ?Sized> {
    family: &'static str,
    entries: BTreeMap<&'static str, Arc<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(family: &'static str) -> Self {
        Self {
            family,
            entries: BTreeMap::new(),
        }
    }

    /// Adds `item` under `name`, replacing any previous entry.
    pub fn register(&mut self, name: &'static str, item: Arc<T>) -> &mut Self {
        self.entries.insert(name, item);
        self
    }

    pub fn get(&self, name: &str) -> Result<Arc<T>> {
        self.entries.get(name).cloned().ok_or_else(|| Error::UnknownStrategy {
            family: self.family,
            name: name.to_string(),
            available: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn family(&self) -> &'static str {
        self.family
    }
}

pub fn hamiltonian_forms() -> Registry<dyn HamiltonianForm> {
    let mut r = Registry::<dyn HamiltonianForm>::new("hamiltonian form");
    r.register("metric", Arc::new(MetricForm));
    r.register("twist-frame", Arc::new(TwistFrame::default()));
    r
}

/// Representations; `modes` sizes the mode-space basis.
pub fn representations(modes: usize) -> Registry<dyn TransverseRepresentation> {
    let mut r = Registry::<dyn TransverseRepresentation>::new("transverse representation");
    r.register("full-grid", Arc::new(FullGrid));
    r.register("mode-space", Arc::new(ModeSpace { modes }));
    r
}

pub fn lineshapes() -> Registry<dyn LineshapeModel> {
    let mut r = Registry::<dyn LineshapeModel>::new("lineshape model");
    r.register("fano", Arc::new(FanoModel));
    r.register("breit-wigner", Arc::new(BreitWignerModel));
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_match_implementations() {
        let forms = hamiltonian_forms();
        for n in forms.names() {
            assert_eq!(forms.get(n).unwrap().name(), n);
        }
        let reps = representations(8);
        for n in reps.names() {
            assert_eq!(reps.get(n).unwrap().name(), n);
        }
        let shapes = lineshapes();
        for n in shapes.names() {
            assert_eq!(shapes.get(n).unwrap().name(), n);
        }
    }

    #[test]
    fn unknown_name_lists_alternatives() {
        let err = hamiltonian_forms().get("cartesian").err().unwrap();
        match err {
            Error::UnknownStrategy { name, available, .. } => {
                assert_eq!(name, "cartesian");
                assert_eq!(available, "metric, twist-frame");
            }
            other => panic!("{other}"),
        }
    }
}
