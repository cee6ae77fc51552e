//! Blob fields are stored as CBOR (RFC 8949), so rows written by one
//! implementation decode in any other.
//!
//! Mapping: null, bool, integer (i64 range), float, text, byte string,
//! array, and maps with text keys. Floats are written in the shortest
//! IEEE width that round-trips the value exactly.

use std::collections::BTreeMap;

use ciborium::value::Value as Cbor;
use thiserror::Error;

use crate::value::Structured;

#[derive(Debug, Error)]
pub enum BlobError {
    #[error("cbor encode: {0}")]
    Encode(String),
    #[error("cbor decode: {0}")]
    Decode(String),
    #[error("unsupported cbor item: {0}")]
    Unsupported(String),
}

pub fn serialize_blob(value: &Structured) -> Result<Vec<u8>, BlobError> {
    let mut out = Vec::new();
    ciborium::ser::into_writer(&to_cbor(value), &mut out).map_err(|e| BlobError::Encode(e.to_string()))?;
    Ok(out)
}

pub fn deserialize_blob(bytes: &[u8]) -> Result<Structured, BlobError> {
    let v: Cbor = ciborium::de::from_reader(bytes).map_err(|e| BlobError::Decode(e.to_string()))?;
    from_cbor(v)
}

fn to_cbor(value: &Structured) -> Cbor {
    match value {
        Structured::Null => Cbor::Null,
        Structured::Bool(b) => Cbor::Bool(*b),
        Structured::Integer(i) => Cbor::Integer((*i).into()),
        Structured::Float(f) => Cbor::Float(*f),
        Structured::Text(s) => Cbor::Text(s.clone()),
        Structured::Bytes(b) => Cbor::Bytes(b.clone()),
        Structured::List(items) => Cbor::Array(items.iter().map(to_cbor).collect()),
        Structured::Map(map) => Cbor::Map(map.iter().map(|(k, v)| (Cbor::Text(k.clone()), to_cbor(v))).collect()),
    }
}

fn from_cbor(value: Cbor) -> Result<Structured, BlobError> {
    Ok(match value {
        Cbor::Null => Structured::Null,
        Cbor::Bool(b) => Structured::Bool(b),
        Cbor::Integer(i) => {
            let wide = i128::from(i);
            Structured::Integer(
                i64::try_from(wide).map_err(|_| BlobError::Unsupported(format!("integer {wide} outside i64")))?,
            )
        }
        Cbor::Float(f) => Structured::Float(f),
        Cbor::Text(s) => Structured::Text(s),
        Cbor::Bytes(b) => Structured::Bytes(b),
        Cbor::Array(items) => Structured::List(items.into_iter().map(from_cbor).collect::<Result<_, _>>()?),
        Cbor::Map(entries) => {
            let mut map = BTreeMap::new();
            for (k, v) in entries {
                let Cbor::Text(k) = k else {
                    return Err(BlobError::Unsupported(format!("non-text map key {k:?}")));
                };
                map.insert(k, from_cbor(v)?);
            }
            Structured::Map(map)
        }
        other => return Err(BlobError::Unsupported(format!("{other:?}"))),
    })
}
