//! Identifiers, timestamps and event types shared by every module.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::ParseIdError;

/// Globally unique node identity.
///
/// Ordering is numeric on the 128-bit value, which coincides with
/// lexicographic order on the big-endian byte encoding. That order is the
/// canonical tie-breaker wherever timestamps collide.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionId(u128);

impl ActionId {
    pub const fn from_u128(value: u128) -> Self {
        Self(value)
    }

    pub const fn as_u128(self) -> u128 {
        self.0
    }

    pub fn to_bytes(self) -> [u8; 16] {
        self.0.to_be_bytes()
    }

    pub fn from_bytes(bytes: [u8; 16]) -> Self {
        Self(u128::from_be_bytes(bytes))
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self(rng.gen())
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

impl fmt::Debug for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ActionId({:032x})", self.0)
    }
}

impl FromStr for ActionId {
    type Err = ParseIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_hex128(s).map(Self)
    }
}

/// Identifier of a registered session.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SessionId(u128);

impl SessionId {
    pub const fn from_u128(value: u128) -> Self {
        Self(value)
    }

    pub const fn as_u128(self) -> u128 {
        self.0
    }

    pub fn to_bytes(self) -> [u8; 16] {
        self.0.to_be_bytes()
    }

    pub fn from_bytes(bytes: [u8; 16]) -> Self {
        Self(u128::from_be_bytes(bytes))
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self(rng.gen())
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

impl fmt::Debug for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SessionId({:032x})", self.0)
    }
}

impl FromStr for SessionId {
    type Err = ParseIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_hex128(s).map(Self)
    }
}

fn parse_hex128(s: &str) -> Result<u128, ParseIdError> {
    if s.len() != 32
        || !s
            .bytes()
            .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
    {
        return Err(ParseIdError(s.to_owned()));
    }
    u128::from_str_radix(s, 16).map_err(|_| ParseIdError(s.to_owned()))
}

/// Microseconds since the Unix epoch.
///
/// Comparison is exact integer comparison, so strictness along causal
/// paths is decidable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(i64);

impl Timestamp {
    pub const fn from_micros(micros: i64) -> Self {
        Self(micros)
    }

    pub const fn micros(self) -> i64 {
        self.0
    }

    /// The next representable instant, saturating at `i64::MAX`.
    pub const fn successor(self) -> Self {
        Self(self.0.saturating_add(1))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Name of an event type drawn from a declared type set.
///
/// Names are non-empty and free of control characters so they can be
/// embedded in the tab-separated trace format.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventType(String);

impl EventType {
    pub fn new(name: impl Into<String>) -> Result<Self, crate::error::InvalidEventType> {
        let name = name.into();
        if name.is_empty() || name.chars().any(char::is_control) {
            return Err(crate::error::InvalidEventType(name));
        }
        Ok(Self(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl FromStr for EventType {
    type Err = crate::error::InvalidEventType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_id_order_matches_byte_order() {
        let a = ActionId::from_u128(0x00ff);
        let b = ActionId::from_u128(0x0100);
        assert!(a < b);
        assert!(a.to_bytes() < b.to_bytes());
    }

    #[test]
    fn action_id_hex_round_trip() {
        let id = ActionId::from_u128(0xdead_beef_0000_0000_0000_0000_0000_0001);
        let text = id.to_string();
        assert_eq!(text.len(), 32);
        assert_eq!(text.parse::<ActionId>().unwrap(), id);
        assert!("DEADBEEF000000000000000000000001"
            .parse::<ActionId>()
            .is_err());
        assert!("abc".parse::<ActionId>().is_err());
    }

    #[test]
    fn event_type_rejects_empty_and_control() {
        assert!(EventType::new("").is_err());
        assert!(EventType::new("a\tb").is_err());
        assert!(EventType::new("a\nb").is_err());
        assert_eq!(EventType::new("tool call").unwrap().as_str(), "tool call");
    }
}
