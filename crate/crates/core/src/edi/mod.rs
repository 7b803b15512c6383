//! EDI document model and the canonical interchange encoding.
//!
//! Documents travel as UTF-8 JSON objects, one document per message, with a
//! top-level `kind` field (`PO`, `DA`, `RA`, `CI`, `CARRIER_INVOICE`) and
//! camelCase field names. Unknown fields are rejected. Serialization is
//! canonical: object keys are emitted in sorted order with no insignificant
//! whitespace, so equal documents always produce identical bytes.

mod documents;
mod money;

pub use documents::*;
pub use money::{Currency, Money, MoneyError, Quantity};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EdiError {
    #[error("malformed document at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("invalid field `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error(transparent)]
    Money(#[from] MoneyError),
}

impl EdiError {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        EdiError::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Parses and validates a document of the requested kind.
pub fn parse_document(bytes: &[u8], kind: DocumentKind) -> Result<EdiDocument, EdiError> {
    let text = std::str::from_utf8(bytes).map_err(|e| EdiError::Parse {
        offset: e.valid_up_to(),
        message: "invalid UTF-8".into(),
    })?;
    let value: Value = serde_json::from_str(text).map_err(|e| EdiError::Parse {
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let Value::Object(mut map) = value else {
        return Err(EdiError::Parse {
            offset: 0,
            message: "document must be a JSON object".into(),
        });
    };
    match map.remove("kind") {
        Some(Value::String(k)) if k == kind.as_str() => {}
        Some(Value::String(k)) => {
            return Err(EdiError::validation(
                "kind",
                format!("expected {kind}, found {k}"),
            ))
        }
        Some(_) => return Err(EdiError::validation("kind", "must be a string")),
        None => return Err(EdiError::validation("kind", "missing")),
    }
    let body = Value::Object(map);
    let doc = match kind {
        DocumentKind::Po => EdiDocument::PurchaseOrder(decode(body)?),
        DocumentKind::Da => EdiDocument::DespatchAdvice(decode(body)?),
        DocumentKind::Ra => EdiDocument::ReceivingAdvice(decode(body)?),
        DocumentKind::Ci => EdiDocument::CommercialInvoice(decode(body)?),
        DocumentKind::CarrierInvoice => EdiDocument::CarrierInvoice(decode(body)?),
    };
    doc.validate()?;
    Ok(doc)
}

/// Parses a document whose kind is taken from its own `kind` field.
pub fn parse_any(bytes: &[u8]) -> Result<EdiDocument, EdiError> {
    #[derive(serde::Deserialize)]
    struct KindOnly {
        kind: String,
    }
    let probe: KindOnly = serde_json::from_slice(bytes).map_err(|e| EdiError::Parse {
        offset: byte_offset(&String::from_utf8_lossy(bytes), e.line(), e.column()),
        message: e.to_string(),
    })?;
    let kind = DocumentKind::parse(&probe.kind)
        .ok_or_else(|| EdiError::validation("kind", format!("unknown kind {}", probe.kind)))?;
    parse_document(bytes, kind)
}

/// Canonical bytes of a document.
pub fn serialize_document(doc: &EdiDocument) -> Vec<u8> {
    let mut value = match doc {
        EdiDocument::PurchaseOrder(d) => to_value(d),
        EdiDocument::DespatchAdvice(d) => to_value(d),
        EdiDocument::ReceivingAdvice(d) => to_value(d),
        EdiDocument::CommercialInvoice(d) => to_value(d),
        EdiDocument::CarrierInvoice(d) => to_value(d),
    };
    if let Value::Object(map) = &mut value {
        map.insert("kind".into(), Value::String(doc.kind().as_str().into()));
    }
    // serde_json's default map is ordered by key, which makes this canonical.
    serde_json::to_vec(&value).expect("in-memory JSON serialization")
}

/// SHA-256 over the canonical bytes.
pub fn document_digest(doc: &EdiDocument) -> [u8; 32] {
    Sha256::digest(serialize_document(doc)).into()
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("document types serialize infallibly")
}

fn decode<T: DeserializeOwned>(body: Value) -> Result<T, EdiError> {
    serde_path_to_error::deserialize(body).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        let field = if path == "." {
            field_from_message(&inner).unwrap_or_else(|| ".".into())
        } else {
            path
        };
        EdiError::Validation {
            field,
            message: inner,
        }
    })
}

// serde reports unknown/missing fields as "... field `name` ...".
fn field_from_message(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let end = start + msg[start..].find('`')?;
    Some(msg[start..end].to_string())
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}
