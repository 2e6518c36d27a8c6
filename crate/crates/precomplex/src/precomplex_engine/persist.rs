use std::path::Path;

use nalgebra::DMatrix;
use nalgebra_sparse::convert::serial::convert_csr_dense;
use nalgebra_sparse::CsrMatrix;
use serde::{Deserialize, Serialize};

use super::chain::ChainKind;
use super::corrected::{ChainOptions, CorrectedChain, LevelReport};
use super::harmonic::Dimension;
use super::EngineError;
use crate::discrete_geometry::{diagonal, read_matrix_market, write_matrix_market, FieldSpace};

pub const MANIFEST_SCHEMA: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelFiles {
    pub original: String,
    pub corrected: String,
    pub correction: String,
    pub pseudo_inverse: String,
    pub projector: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainManifest {
    pub schema_version: u32,
    pub kind: ChainKind,
    pub spaces: Vec<FieldSpace>,
    pub options: ChainOptions,
    pub levels: Vec<LevelReport>,
    pub level_files: Vec<LevelFiles>,
    pub mass_files: Vec<String>,
    /// Harmonic dimensions and basis files of the levels computed so far.
    pub harmonic: Vec<Option<(Dimension, String)>>,
}

/// Matrices read back from a persisted chain.
#[derive(Clone, Debug)]
pub struct StoredChain {
    pub manifest: ChainManifest,
    pub original: Vec<DMatrix<f64>>,
    pub corrected: Vec<DMatrix<f64>>,
    pub corrections: Vec<DMatrix<f64>>,
    pub pseudo_inverses: Vec<DMatrix<f64>>,
    pub projectors: Vec<DMatrix<f64>>,
    pub masses: Vec<Vec<f64>>,
    pub harmonic: Vec<Option<DMatrix<f64>>>,
}

fn io(path: &Path, e: impl std::fmt::Display) -> EngineError {
    EngineError::Io { path: path.display().to_string(), message: e.to_string() }
}

fn write_dense(dir: &Path, name: &str, m: &DMatrix<f64>) -> Result<String, EngineError> {
    let csr = CsrMatrix::from(m);
    write_matrix_market(&dir.join(name), &csr)?;
    Ok(name.to_string())
}

fn read_dense(dir: &Path, name: &str, rows: usize, cols: usize) -> Result<DMatrix<f64>, EngineError> {
    let csr = read_matrix_market(&dir.join(name))?;
    if csr.nrows() != rows || csr.ncols() != cols {
        return Err(EngineError::Manifest(format!("{name}: expected {rows}x{cols}, found {}x{}", csr.nrows(), csr.ncols())));
    }
    Ok(convert_csr_dense(&csr))
}

impl CorrectedChain {
    /// Writes every matrix as Matrix Market plus a JSON manifest into `dir`.
    pub fn save(&self, dir: &Path) -> Result<ChainManifest, EngineError> {
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let mut level_files = Vec::new();
        for k in 0..self.corrected.len() {
            level_files.push(LevelFiles {
                original: write_dense(dir, &format!("A_{k}.mtx"), &self.original[k])?,
                corrected: write_dense(dir, &format!("A_corrected_{k}.mtx"), &self.corrected[k])?,
                correction: write_dense(dir, &format!("G_{k}.mtx"), &self.corrections[k])?,
                pseudo_inverse: write_dense(dir, &format!("P_{k}.mtx"), &self.projectors[k].pseudo_inverse)?,
                projector: write_dense(dir, &format!("Pi_{k}.mtx"), &self.projectors[k].projector)?,
            });
        }
        let mut mass_files = Vec::new();
        for k in 0..self.len() {
            let name = format!("M_{k}.mtx");
            write_matrix_market(&dir.join(&name), &diagonal(self.mass(k)))?;
            mass_files.push(name);
        }
        let mut harmonic = Vec::new();
        for k in 0..self.len() {
            match self.harmonic[k].get() {
                Some(h) => {
                    let name = write_dense(dir, &format!("harmonic_{k}.mtx"), &h.basis)?;
                    harmonic.push(Some((h.dimension, name)));
                }
                None => harmonic.push(None),
            }
        }
        let manifest = ChainManifest {
            schema_version: MANIFEST_SCHEMA,
            kind: self.spec.kind,
            spaces: self.spec.spaces.clone(),
            options: self.options,
            levels: self.levels.clone(),
            level_files,
            mass_files,
            harmonic,
        };
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| io(&path, e))?;
        std::fs::write(&path, text).map_err(|e| io(&path, e))?;
        Ok(manifest)
    }
}

/// Reads a directory written by [`CorrectedChain::save`].
pub fn load_chain(dir: &Path) -> Result<StoredChain, EngineError> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| io(&path, e))?;
    let manifest: ChainManifest = serde_json::from_str(&text).map_err(|e| EngineError::Manifest(format!("{}: {e}", path.display())))?;
    if manifest.schema_version != MANIFEST_SCHEMA {
        return Err(EngineError::Manifest(format!("unsupported schema version {}", manifest.schema_version)));
    }
    let mut masses = Vec::new();
    for name in &manifest.mass_files {
        let m = read_matrix_market(&dir.join(name))?;
        let mut diag = vec![0.0; m.nrows()];
        for (r, c, &v) in m.triplet_iter() {
            if r == c {
                diag[r] = v;
            }
        }
        masses.push(diag);
    }
    let mut out = StoredChain {
        original: Vec::new(),
        corrected: Vec::new(),
        corrections: Vec::new(),
        pseudo_inverses: Vec::new(),
        projectors: Vec::new(),
        harmonic: Vec::new(),
        masses,
        manifest,
    };
    for (k, f) in out.manifest.level_files.iter().enumerate() {
        let (s, t) = (out.masses[k].len(), out.masses[k + 1].len());
        out.original.push(read_dense(dir, &f.original, t, s)?);
        out.corrected.push(read_dense(dir, &f.corrected, t, s)?);
        out.corrections.push(read_dense(dir, &f.correction, t, s)?);
        out.pseudo_inverses.push(read_dense(dir, &f.pseudo_inverse, s, t)?);
        out.projectors.push(read_dense(dir, &f.projector, t, t)?);
    }
    for (k, h) in out.manifest.harmonic.iter().enumerate() {
        out.harmonic.push(match h {
            Some((dim, name)) => {
                let cols = match dim {
                    Dimension::Exact { value } => Some(*value),
                    Dimension::Interval { .. } => None,
                };
                let csr = read_matrix_market(&dir.join(name))?;
                if let Some(c) = cols {
                    if csr.ncols() != c {
                        return Err(EngineError::Manifest(format!("{name}: expected {c} columns")));
                    }
                }
                if csr.nrows() != out.masses[k].len() {
                    return Err(EngineError::Manifest(format!("{name}: wrong row count")));
                }
                Some(convert_csr_dense(&csr))
            }
            None => None,
        });
    }
    Ok(out)
}
