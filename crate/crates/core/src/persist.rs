//! Versioned on-disk format for fitted models.
//!
//! Files are JSON envelopes `{format, version, kind, payload}`. Floats are
//! written in shortest round-trip form, so a reloaded model predicts
//! bit-identically.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::learners::FittedModel;
use crate::pipeline::{DmlFairModel, RegularizedModel, UnawareModel};

pub const FORMAT: &str = "dmlfair-model";
pub const VERSION: u32 = 1;

/// Types that can be saved; `KIND` tags the payload.
pub trait Persist: Serialize + DeserializeOwned {
    const KIND: &'static str;
}

impl Persist for FittedModel {
    const KIND: &'static str = "fitted_model";
}

impl Persist for DmlFairModel {
    const KIND: &'static str = "dml_fair";
}

impl Persist for UnawareModel {
    const KIND: &'static str = "unaware";
}

impl Persist for RegularizedModel {
    const KIND: &'static str = "regularized";
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    kind: String,
    payload: T,
}

pub fn to_bytes<T: Persist>(value: &T) -> Result<Vec<u8>> {
    let env = Envelope {
        format: FORMAT.to_string(),
        version: VERSION,
        kind: T::KIND.to_string(),
        payload: value,
    };
    Ok(serde_json::to_vec(&env)?)
}

pub fn from_bytes<T: Persist>(bytes: &[u8], path: &Path) -> Result<T> {
    let bad = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let env: Envelope<Value> =
        serde_json::from_slice(bytes).map_err(|e| bad(format!("not a model file: {e}")))?;
    if env.format != FORMAT {
        return Err(bad(format!("unexpected format `{}`", env.format)));
    }
    if env.version != VERSION {
        return Err(bad(format!(
            "format version {} is not supported (expected {VERSION})",
            env.version
        )));
    }
    if env.kind != T::KIND {
        return Err(bad(format!("file holds a `{}` model, expected `{}`", env.kind, T::KIND)));
    }
    serde_json::from_value(env.payload).map_err(|e| bad(format!("corrupt payload: {e}")))
}

/// Writes `value` atomically.
pub fn save<T: Persist>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    crate::io::write_atomic(path, &to_bytes(value)?)
}

pub fn load<T: Persist>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    from_bytes(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::LearnerSpec;
    use crate::matrix::Matrix;

    #[test]
    fn roundtrip_is_exact() {
        let x = Matrix::from_rows(&[vec![0.1, 3.0], vec![1.7, -2.0], vec![2.9, 0.3], vec![4.1, 1.1]]).unwrap();
        let y = [0.3, 1.0 / 3.0, 2.2, 9.1];
        let m = LearnerSpec::Linear.fit(&x, &y).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        save(&m, &p).unwrap();
        let back: FittedModel = load(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.predict(&x).unwrap(), m.predict(&x).unwrap());
    }

    #[test]
    fn wrong_kind_and_garbage() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let m = LearnerSpec::Linear.fit(&x, &[1.0, 2.0, 3.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        save(&m, &p).unwrap();
        assert!(matches!(load::<UnawareModel>(&p), Err(Error::Format { .. })));
        std::fs::write(&p, b"hello").unwrap();
        assert!(matches!(load::<FittedModel>(&p), Err(Error::Format { .. })));
        std::fs::write(&p, br#"{"format":"dmlfair-model","version":99,"kind":"fitted_model","payload":null}"#).unwrap();
        let err = load::<FittedModel>(&p).unwrap_err().to_string();
        assert!(err.contains("version 99"), "{err}");
    }
}
