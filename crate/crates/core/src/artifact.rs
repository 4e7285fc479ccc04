//! JSON artifact I/O and schema version checks.
//!
//! Schema strings look like `shapegraph.<kind>/<major>.<minor>`; loaders accept
//! any minor revision of the major they were built for.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub fn write_json<V: Serialize>(path: impl AsRef<Path>, value: &V) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_json<V: DeserializeOwned>(path: impl AsRef<Path>) -> Result<V> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|e| Error::Artifact(format!("cannot open {}: {e}", path.display())))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

fn split(schema: &str) -> Option<(&str, &str)> {
    let (kind, version) = schema.split_once('/')?;
    let (major, _) = version.split_once('.').unwrap_or((version, "0"));
    Some((kind, major))
}

pub fn check_version(found: &str, expected: &str) -> Result<()> {
    match (split(found), split(expected)) {
        (Some((fk, fm)), Some((ek, em))) if fk == ek && fm == em => Ok(()),
        _ => Err(Error::Artifact(format!(
            "unsupported artifact version {found:?} (expected {expected:?})"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minor_revisions_are_accepted() {
        assert!(check_version("shapegraph.graph/1.3", "shapegraph.graph/1.0").is_ok());
        assert!(check_version("shapegraph.graph/2.0", "shapegraph.graph/1.0").is_err());
        assert!(check_version("shapegraph.model/1.0", "shapegraph.graph/1.0").is_err());
        assert!(check_version("garbage", "shapegraph.graph/1.0").is_err());
    }
}
