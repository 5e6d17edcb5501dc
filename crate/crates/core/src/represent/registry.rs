use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use super::{QueryResponse, RepresentError, ResourceDocument};
use crate::model::ResourceKind;

/// Latest document per device, as seen by the supervising entity.
///
/// Readers share the map; writers are serialized. Documents are stored behind
/// an `Arc` and never mutated in place, so a reader always gets a whole
/// document exactly as inserted.
#[derive(Debug, Default)]
pub struct Registry {
    docs: RwLock<BTreeMap<String, Arc<ResourceDocument>>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_documents(docs: impl IntoIterator<Item = ResourceDocument>) -> Self {
        let registry = Self::new();
        for doc in docs {
            registry.insert(doc);
        }
        registry
    }

    /// Stores `doc`, replacing any earlier snapshot of the same device.
    pub fn insert(&self, doc: ResourceDocument) -> Option<Arc<ResourceDocument>> {
        let mut docs = self.docs.write().unwrap_or_else(|e| e.into_inner());
        docs.insert(doc.device_id.clone(), Arc::new(doc))
    }

    pub fn get(&self, device_id: &str) -> Option<Arc<ResourceDocument>> {
        let docs = self.docs.read().unwrap_or_else(|e| e.into_inner());
        docs.get(device_id).cloned()
    }

    pub fn device_ids(&self) -> Vec<String> {
        let docs = self.docs.read().unwrap_or_else(|e| e.into_inner());
        docs.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.docs.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The whole document when `kind` is `None`, otherwise only that family.
    pub fn query(&self, device_id: &str, kind: Option<ResourceKind>) -> Result<QueryResponse, RepresentError> {
        let doc = self
            .get(device_id)
            .ok_or_else(|| RepresentError::UnknownDevice(device_id.to_string()))?;
        Ok(match kind {
            None => QueryResponse::Document((*doc).clone()),
            Some(kind) => QueryResponse::Fragment(doc.fragment(kind)),
        })
    }
}
