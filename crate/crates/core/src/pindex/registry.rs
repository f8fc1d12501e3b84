use std::collections::BTreeMap;
use std::sync::Arc;

use parking_lot::RwLock;

use super::{IndexKeySpec, PartialIndex, Scheme};
use crate::error::{Error, Result};
use crate::storage::Table;

/// The set of indexes currently present, keyed by spec.
///
/// Readers take cheap `Arc` snapshots; a dropped index stays alive until
/// the last query holding it finishes.
#[derive(Debug, Default)]
pub struct IndexConfiguration {
    indexes: RwLock<BTreeMap<IndexKeySpec, Arc<PartialIndex>>>,
}

impl IndexConfiguration {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create(&self, spec: IndexKeySpec, scheme: Scheme, table: &Table) -> Result<Arc<PartialIndex>> {
        let mut map = self.indexes.write();
        if map.contains_key(&spec) {
            return Err(Error::DuplicateIndex(spec.to_string()));
        }
        let idx = Arc::new(PartialIndex::new(spec.clone(), scheme, table)?);
        map.insert(spec, idx.clone());
        Ok(idx)
    }

    /// Removes the index; `false` if it was not present.
    pub fn drop_index(&self, spec: &IndexKeySpec) -> bool {
        self.indexes.write().remove(spec).is_some()
    }

    pub fn get(&self, spec: &IndexKeySpec) -> Option<Arc<PartialIndex>> {
        self.indexes.read().get(spec).cloned()
    }

    pub fn contains(&self, spec: &IndexKeySpec) -> bool {
        self.indexes.read().contains_key(spec)
    }

    /// All indexes in spec order.
    pub fn snapshot(&self) -> Vec<Arc<PartialIndex>> {
        self.indexes.read().values().cloned().collect()
    }

    pub fn for_table(&self, table: &str) -> Vec<Arc<PartialIndex>> {
        self.indexes.read().values().filter(|i| i.spec().table == table).cloned().collect()
    }

    pub fn specs(&self) -> Vec<IndexKeySpec> {
        self.indexes.read().keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.indexes.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.indexes.read().is_empty()
    }

    pub fn total_footprint(&self) -> u64 {
        self.indexes.read().values().map(|i| i.footprint()).sum()
    }

    pub fn clear(&self) -> Vec<IndexKeySpec> {
        let mut map = self.indexes.write();
        let specs = map.keys().cloned().collect();
        map.clear();
        specs
    }
}
