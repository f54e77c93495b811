//! Merkle commitments over CTEGs.
//!
//! Each node hashes, under SHA-256:
//!
//! ```text
//! "CTEG-NODE-V1" ‖ u32le(len(type)) ‖ type ‖ i64le(micros) ‖ SHA-256(payload)
//!                ‖ u32le(child count) ‖ child digests
//! ```
//!
//! Children are taken in ascending `(timestamp, ActionId)` order. Action
//! identifiers themselves are not hashed, so the root digest commits to
//! structure and content only.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use sha2::{Digest as _, Sha256};

use crate::cteg::{temporal_projection, Cteg};
use crate::error::ParseIdError;
use crate::graph::NodeData;
use crate::types::ActionId;

pub const DOMAIN_TAG: &[u8] = b"CTEG-NODE-V1";

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({self})")
    }
}

impl FromStr for Digest {
    type Err = ParseIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 64 || s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(ParseIdError(format!(
                "expected 64 lowercase hex digits, got {s:?}"
            )));
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|e| ParseIdError(e.to_string()))?;
        Ok(Digest(out))
    }
}

/// The digest of one node given its children's digests in canonical order.
pub fn node_digest(node: &NodeData, children: &[Digest]) -> Digest {
    let ty = node.event_type.as_str().as_bytes();
    let mut h = Sha256::new();
    h.update(DOMAIN_TAG);
    h.update((ty.len() as u32).to_le_bytes());
    h.update(ty);
    h.update(node.timestamp.micros().to_le_bytes());
    h.update(Sha256::digest(&node.payload));
    h.update((children.len() as u32).to_le_bytes());
    for c in children {
        h.update(c.0);
    }
    Digest(h.finalize().into())
}

/// Bottom-up digest of the root.
pub fn merkle_root(c: &Cteg) -> Digest {
    let g = c.graph();
    let order = temporal_projection(c);
    let mut digests: BTreeMap<ActionId, Digest> = BTreeMap::new();
    for &n in order.iter().rev() {
        let mut kids: Vec<ActionId> = g.children(n).collect();
        kids.sort_by_key(|&k| (g.timestamp(k), k));
        let child_digests: Vec<Digest> = kids.iter().map(|k| digests[k]).collect();
        let data = g.node(n).expect("projected node exists");
        digests.insert(n, node_digest(data, &child_digests));
    }
    digests[&c.root()]
}

pub fn verify_commitment(c: &Cteg, d: &Digest) -> bool {
    merkle_root(c) == *d
}
