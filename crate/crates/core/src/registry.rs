use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Name-keyed table of strategy factories.
pub struct Registry<F> {
    family: &'static str,
    entries: BTreeMap<&'static str, F>,
}

impl<F: Copy> Registry<F> {
    pub fn new(family: &'static str) -> Self {
        Self {
            family,
            entries: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &'static str, factory: F) -> &mut Self {
        self.entries.insert(name, factory);
        self
    }

    pub fn get(&self, name: &str) -> Result<F> {
        self.entries.get(name).copied().ok_or_else(|| {
            Error::config(format!(
                "unknown {} {name:?}; expected one of {:?}",
                self.family,
                self.names()
            ))
        })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}
