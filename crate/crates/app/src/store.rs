//! On-disk store for uploaded datasets and trained models.
//!
//! Layout under the root:
//!
//! ```text
//! datasets/<dataset_id>.csv   the uploaded bytes
//! models/<model_id>/          artifact directory (see novapipe_core::contract)
//! ```
//!
//! Ids are content-derived, so uploading the same table twice is a no-op.
//! Reads go through an in-memory cache; writes for one id are serialized by
//! a store-wide lock and land via rename, so readers never see partial
//! files.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use novapipe_core::contract::{self, ContractError};
use novapipe_core::intake::{self, IntakeError};
use novapipe_core::train::TrainingOutcome;
use novapipe_core::{Dataset, ModelMetadata, TrainedModel};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error(transparent)]
    Parse(#[from] IntakeError),
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error("store i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

pub type StoredModel = Arc<(TrainedModel, ModelMetadata)>;

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    datasets: RwLock<HashMap<String, Arc<Dataset>>>,
    models: RwLock<HashMap<String, StoredModel>>,
    write_lock: Mutex<()>,
}

/// Ids are hex strings; anything else never names a stored object and must
/// not reach the file system.
fn plausible_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_hexdigit())
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(root.join("datasets"))?;
        fs::create_dir_all(root.join("models"))?;
        Ok(Store {
            root,
            datasets: RwLock::default(),
            models: RwLock::default(),
            write_lock: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dataset_path(&self, id: &str) -> PathBuf {
        self.root.join("datasets").join(format!("{id}.csv"))
    }

    pub fn model_path(&self, id: &str) -> PathBuf {
        self.root.join("models").join(id)
    }

    /// Parses and stores an upload, returning the table.
    pub fn put_dataset(&self, bytes: &[u8]) -> Result<Arc<Dataset>, StoreError> {
        let d = Arc::new(intake::parse_csv(bytes)?);
        let id = d.id().0.clone();
        let path = self.dataset_path(&id);
        {
            let _guard = self.write_lock.lock().expect("store lock");
            if !path.exists() {
                let tmp = path.with_extension("csv.tmp");
                fs::write(&tmp, bytes)?;
                fs::rename(&tmp, &path)?;
            }
        }
        self.datasets.write().expect("dataset cache").insert(id, d.clone());
        Ok(d)
    }

    pub fn dataset(&self, id: &str) -> Result<Arc<Dataset>, StoreError> {
        if let Some(d) = self.datasets.read().expect("dataset cache").get(id) {
            return Ok(d.clone());
        }
        let unknown = || StoreError::UnknownDataset(id.to_string());
        if !plausible_id(id) {
            return Err(unknown());
        }
        let bytes = match fs::read(self.dataset_path(id)) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(unknown()),
            Err(e) => return Err(e.into()),
        };
        let d = Arc::new(intake::parse_csv(&bytes)?);
        self.datasets
            .write()
            .expect("dataset cache")
            .insert(id.to_string(), d.clone());
        Ok(d)
    }

    /// Saves a trained model under its model id.
    pub fn put_model(&self, outcome: &TrainingOutcome) -> Result<String, StoreError> {
        let id = outcome.metadata.model_id.clone();
        {
            let _guard = self.write_lock.lock().expect("store lock");
            contract::save_model(&outcome.model, &outcome.metadata, &self.model_path(&id))?;
        }
        let stored = Arc::new((outcome.model.clone(), outcome.metadata.clone()));
        self.models.write().expect("model cache").insert(id.clone(), stored);
        Ok(id)
    }

    pub fn model(&self, id: &str) -> Result<StoredModel, StoreError> {
        if let Some(m) = self.models.read().expect("model cache").get(id) {
            return Ok(m.clone());
        }
        let path = self.model_path(id);
        if !plausible_id(id) || !path.is_dir() {
            return Err(StoreError::UnknownModel(id.to_string()));
        }
        let loaded = Arc::new(contract::load_model(&path)?);
        self.models
            .write()
            .expect("model cache")
            .insert(id.to_string(), loaded.clone());
        Ok(loaded)
    }
}
