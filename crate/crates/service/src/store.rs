//! On-disk layout: `index.json` maps ids to directories, datasets keep their uploaded
//! bytes, and sessions reuse the engine's own directory format.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use alloop_core::data::{load_csv, load_idx, DataError, Dataset};
use alloop_core::util::atomic_write;
use serde::{Deserialize, Serialize};

pub const INDEX_FILE: &str = "index.json";
const META_FILE: &str = "meta.json";
pub const CSV_FILE: &str = "data.csv";
pub const IMAGES_FILE: &str = "images.idx";
pub const LABELS_FILE: &str = "labels.idx";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "lowercase")]
pub enum DatasetFormat {
    Csv { label_column: String },
    Idx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    #[serde(flatten)]
    pub format: DatasetFormat,
    pub class_names: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEntry {
    pub dataset_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Index {
    pub datasets: BTreeSet<String>,
    pub sessions: BTreeMap<String, SessionEntry>,
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> std::io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("datasets"))?;
        fs::create_dir_all(root.join("sessions"))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dataset_dir(&self, id: &str) -> PathBuf {
        self.root.join("datasets").join(id)
    }

    pub fn session_dir(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(id)
    }

    pub fn read_index(&self) -> std::io::Result<Index> {
        match fs::read(self.root.join(INDEX_FILE)) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(std::io::Error::other),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Index::default()),
            Err(e) => Err(e),
        }
    }

    pub fn write_index(&self, index: &Index) -> std::io::Result<()> {
        let bytes = serde_json::to_vec_pretty(index).map_err(std::io::Error::other)?;
        atomic_write(&self.root.join(INDEX_FILE), &bytes)
    }

    /// Writes the uploaded files into a fresh dataset directory.
    pub fn write_dataset(
        &self,
        id: &str,
        meta: &DatasetMeta,
        files: &[(&str, &[u8])],
    ) -> std::io::Result<()> {
        let dir = self.dataset_dir(id);
        fs::create_dir_all(&dir)?;
        for (name, bytes) in files {
            atomic_write(&dir.join(name), bytes)?;
        }
        let meta = serde_json::to_vec_pretty(meta).map_err(std::io::Error::other)?;
        atomic_write(&dir.join(META_FILE), &meta)
    }

    pub fn load_dataset(&self, id: &str) -> Result<Dataset, DataError> {
        let dir = self.dataset_dir(id);
        let meta_path = dir.join(META_FILE);
        let bytes = fs::read(&meta_path).map_err(|source| DataError::Io {
            path: meta_path.display().to_string(),
            source,
        })?;
        let meta: DatasetMeta = serde_json::from_slice(&bytes)
            .map_err(|e| DataError::InvalidDataset(format!("{}: {e}", meta_path.display())))?;
        open_dataset(&dir, &meta)
    }
}

/// Parses the files of a dataset directory according to `meta`.
pub fn open_dataset(dir: &Path, meta: &DatasetMeta) -> Result<Dataset, DataError> {
    let ds = match &meta.format {
        DatasetFormat::Csv { label_column } => load_csv(&dir.join(CSV_FILE), label_column)?,
        DatasetFormat::Idx => load_idx(&dir.join(IMAGES_FILE), &dir.join(LABELS_FILE))?,
    };
    match &meta.class_names {
        Some(names) => ds.with_class_names(names.clone()),
        None => Ok(ds),
    }
}
