//! JSON field files: a descriptor header plus a flat coefficient array.

use std::path::Path;

use nalgebra::DVector;
use precomplex::discrete_geometry::FieldSpace;
use precomplex::precomplex_engine::ChainKind;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldDescriptor {
    pub chain: ChainKind,
    /// Index of the space in the chain.
    pub level: usize,
    pub n: usize,
    pub space: FieldSpace,
    pub length: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldFile {
    pub descriptor: FieldDescriptor,
    pub values: Vec<f64>,
}

/// Reads a field and checks it against the expected descriptor. `key` names the
/// config entry that pointed at the file.
pub fn read_field(path: &Path, expected: &FieldDescriptor, key: &str) -> Result<DVector<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let file: FieldFile = serde_path_to_error::deserialize(de)
        .map_err(|e| CliError::Config { key: format!("{key} ({}): {}", path.display(), e.path()), message: e.inner().to_string() })?;
    let bad = |what: &str, got: String, want: String| CliError::Config {
        key: format!("{key} ({}): descriptor.{what}", path.display()),
        message: format!("found {got}, expected {want}"),
    };
    let d = &file.descriptor;
    if d.chain != expected.chain {
        return Err(bad("chain", format!("{:?}", d.chain), format!("{:?}", expected.chain)));
    }
    if d.level != expected.level {
        return Err(bad("level", d.level.to_string(), expected.level.to_string()));
    }
    if d.n != expected.n {
        return Err(bad("n", d.n.to_string(), expected.n.to_string()));
    }
    if d.space != expected.space {
        return Err(bad("space", format!("{:?}", d.space), format!("{:?}", expected.space)));
    }
    if d.length != expected.length || file.values.len() != expected.length {
        return Err(bad("length", format!("{} ({} values)", d.length, file.values.len()), expected.length.to_string()));
    }
    Ok(DVector::from_vec(file.values))
}

pub fn write_field(path: &Path, descriptor: FieldDescriptor, values: &DVector<f64>) -> Result<(), CliError> {
    let file = FieldFile { descriptor, values: values.iter().copied().collect() };
    let text = serde_json::to_string(&file).map_err(|e| CliError::io(path, e))?;
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
