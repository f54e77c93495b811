//! The `cteg/1` text format.
//!
//! ```text
//! cteg/1 <session id>
//! <node>\t<parent or ->\t<micros>\t<type>\t<base64 payload>
//! ```
//!
//! Node lines follow temporal-projection order, so two exports are
//! byte-identical exactly when the traces and session ids are equal.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;

use super::{assemble, records_of, NodeRecord};
use crate::cteg::Cteg;
use crate::error::FormatError;
use crate::types::{ActionId, EventType, SessionId, Timestamp};

pub const HEADER_TAG: &str = "cteg/1";

pub fn export_trace(c: &Cteg, session: SessionId) -> Vec<u8> {
    let mut out = format!("{HEADER_TAG} {session}\n");
    for r in records_of(c, session) {
        let parent = r
            .parent_id
            .map_or_else(|| "-".to_string(), |p| p.to_string());
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.node_id,
            parent,
            r.timestamp.micros(),
            r.event_type,
            STANDARD.encode(&r.payload)
        ));
    }
    out.into_bytes()
}

/// Splits a trace file into rows without checking graph structure.
pub fn parse_trace(bytes: &[u8]) -> Result<(SessionId, Vec<NodeRecord>), FormatError> {
    let text = std::str::from_utf8(bytes).map_err(|e| FormatError::Malformed {
        line: 0,
        reason: format!("not UTF-8: {e}"),
    })?;
    let body = text.strip_suffix('\n').unwrap_or(text);
    let mut lines = body.split('\n').enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().expect("split yields at least one item");
    let session = header
        .strip_prefix(HEADER_TAG)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| malformed(1, format!("expected header `{HEADER_TAG} <session id>`")))?
        .parse::<SessionId>()
        .map_err(|e| malformed(1, e.to_string()))?;
    let mut records = Vec::new();
    for (line, content) in lines {
        records.push(parse_line(line, content, session)?);
    }
    Ok((session, records))
}

fn parse_line(line: usize, content: &str, session: SessionId) -> Result<NodeRecord, FormatError> {
    let fields: Vec<&str> = content.split('\t').collect();
    let [node, parent, micros, ty, payload] = fields[..] else {
        return Err(malformed(
            line,
            format!("expected 5 tab-separated fields, found {}", fields.len()),
        ));
    };
    let node_id = node
        .parse::<ActionId>()
        .map_err(|e| malformed(line, format!("node id: {e}")))?;
    let parent_id = match parent {
        "-" => None,
        p => Some(
            p.parse::<ActionId>()
                .map_err(|e| malformed(line, format!("parent id: {e}")))?,
        ),
    };
    let timestamp = micros
        .parse::<i64>()
        .map(Timestamp::from_micros)
        .map_err(|e| malformed(line, format!("timestamp: {e}")))?;
    let event_type = EventType::new(ty).map_err(|e| malformed(line, e.to_string()))?;
    let payload = STANDARD
        .decode(payload)
        .map_err(|e| malformed(line, format!("payload: {e}")))?;
    Ok(NodeRecord {
        node_id,
        session_id: session,
        parent_id,
        timestamp,
        event_type,
        payload,
    })
}

fn malformed(line: usize, reason: String) -> FormatError {
    FormatError::Malformed { line, reason }
}

/// Parses and validates a trace file.
pub fn import_trace(bytes: &[u8]) -> Result<(Cteg, SessionId), FormatError> {
    let (session, records) = parse_trace(bytes)?;
    let c = assemble(&records)
        .into_cteg()
        .map_err(FormatError::Invalid)?;
    Ok((c, session))
}
