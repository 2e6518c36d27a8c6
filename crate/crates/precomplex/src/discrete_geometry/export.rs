use std::path::{Path, PathBuf};

use nalgebra_sparse::io::{load_coo_from_matrix_market_file, save_to_matrix_market_file};
use nalgebra_sparse::CsrMatrix;

use super::assemble::DiscreteOperator;
use super::GeometryError;

fn io_error(path: &Path, e: impl std::fmt::Display) -> GeometryError {
    GeometryError::Io { path: path.display().to_string(), message: e.to_string() }
}

pub fn write_matrix_market(path: &Path, m: &CsrMatrix<f64>) -> Result<(), GeometryError> {
    save_to_matrix_market_file(m, path).map_err(|e| io_error(path, e))
}

pub fn read_matrix_market(path: &Path) -> Result<CsrMatrix<f64>, GeometryError> {
    let coo = load_coo_from_matrix_market_file::<f64, _>(path).map_err(|e| io_error(path, e))?;
    Ok(CsrMatrix::from(&coo))
}

/// Writes every operator as `<name>_<k>_<m>.mtx` into `dir` and returns the paths.
pub fn export_operators(dir: &Path, ops: &[DiscreteOperator]) -> Result<Vec<PathBuf>, GeometryError> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let mut out = Vec::with_capacity(ops.len());
    for op in ops {
        let path = dir.join(format!("{}_{}_{}.mtx", op.kind.name(), op.source.k, op.source.m));
        write_matrix_market(&path, &op.matrix)?;
        out.push(path);
    }
    Ok(out)
}
