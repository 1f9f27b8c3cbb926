use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use faer::Mat;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{discretize_kernel, Grid, IndexSet, KernelKind, KernelMatrix};
use crate::dynamics::{DeterministicMapModel, MapSpec};
use crate::error::{Error, Result};

/// Everything a cached kernel depends on. A cache hit needs an exact match.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheMeta {
    pub format: u32,
    pub map: MapSpec,
    pub covariance: Vec<Vec<f64>>,
    pub sigma: f64,
    pub bounds: Vec<[f64; 2]>,
    pub nodes_per_axis: Vec<usize>,
    pub rows: usize,
    pub weight: f64,
    #[serde(default)]
    pub hash: String,
}

impl CacheMeta {
    pub fn for_kernel(model: &DeterministicMapModel, grid: &Grid) -> Self {
        let mut meta = Self {
            format: 1,
            map: model.map().clone(),
            covariance: model.covariance().rows(),
            sigma: model.sigma(),
            bounds: grid.bounds(),
            nodes_per_axis: grid.nodes_per_axis(),
            rows: grid.len(),
            weight: grid.weight(),
            hash: String::new(),
        };
        meta.hash = content_hash(&meta);
        meta
    }
}

/// First 64 bits of the SHA-256 of the canonical JSON form, as hex.
pub(crate) fn content_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable");
    let digest = Sha256::digest(&bytes);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Directory of `<hash>.meta.json` / `<hash>.kern` pairs; the payload is the
/// row-major matrix as little-endian f64.
#[derive(Clone, Debug)]
pub struct KernelCache {
    dir: PathBuf,
}

impl KernelCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn paths(&self, hash: &str) -> (PathBuf, PathBuf) {
        (
            self.dir.join(format!("{hash}.meta.json")),
            self.dir.join(format!("{hash}.kern")),
        )
    }

    pub fn load(&self, meta: &CacheMeta) -> Result<Option<KernelMatrix>> {
        let (meta_path, kern_path) = self.paths(&meta.hash);
        let Ok(text) = fs::read_to_string(&meta_path) else {
            return Ok(None);
        };
        let stored: CacheMeta = match serde_json::from_str(&text) {
            Ok(m) => m,
            Err(_) => return Ok(None),
        };
        if &stored != meta {
            return Ok(None);
        }
        let Ok(bytes) = fs::read(&kern_path) else {
            return Ok(None);
        };
        let n = meta.rows;
        if bytes.len() != n * n * 8 {
            log::warn!(
                "cache payload {} has the wrong size, ignoring",
                kern_path.display()
            );
            return Ok(None);
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let matrix = Mat::from_fn(n, n, |i, j| values[i * n + j]);
        KernelMatrix::new(
            matrix,
            meta.weight,
            KernelKind::Stochastic,
            IndexSet::range(n),
        )
        .map(Some)
    }

    pub fn store(&self, meta: &CacheMeta, kernel: &KernelMatrix) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let (meta_path, kern_path) = self.paths(&meta.hash);
        let n = kernel.dim();
        let mut bytes = Vec::with_capacity(n * n * 8);
        for i in 0..n {
            for j in 0..n {
                bytes.extend_from_slice(&kernel.matrix()[(i, j)].to_le_bytes());
            }
        }
        write_atomic(&kern_path, &bytes)?;
        let json = serde_json::to_vec_pretty(meta).map_err(|e| Error::Io(e.to_string()))?;
        write_atomic(&meta_path, &json)
    }

    /// Cached kernel if present, otherwise discretizes and stores it. The
    /// flag reports a cache hit.
    pub fn get_or_build(
        &self,
        model: &DeterministicMapModel,
        grid: &Grid,
    ) -> Result<(KernelMatrix, bool)> {
        let meta = CacheMeta::for_kernel(model, grid);
        if let Some(k) = self.load(&meta)? {
            log::info!("kernel cache hit {}", meta.hash);
            return Ok((k, true));
        }
        let k = discretize_kernel(model, grid)?;
        if let Err(e) = self.store(&meta, &k) {
            log::warn!("could not write kernel cache: {e}");
        }
        Ok((k, false))
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
