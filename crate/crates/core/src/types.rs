//! Core identifiers and value types shared across the simulator.
//!
//! Signatures and hashes are modeled, never computed cryptographically: a
//! message is bound to its sender by construction (the simulator stamps the
//! sender id and adversarial nodes can only emit messages stamped with their
//! own id), and content addresses are stable 64-bit digests of the canonical
//! block encoding.

use std::fmt;
use std::ops::{Add, AddAssign};

/// Logical simulation time in abstract ticks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tick(pub u64);

impl Tick {
    pub const ZERO: Tick = Tick(0);

    pub fn saturating_sub(self, rhs: u64) -> Tick {
        Tick(self.0.saturating_sub(rhs))
    }
}

impl Add<u64> for Tick {
    type Output = Tick;
    fn add(self, rhs: u64) -> Tick {
        Tick(self.0 + rhs)
    }
}

impl AddAssign<u64> for Tick {
    fn add_assign(&mut self, rhs: u64) {
        self.0 += rhs;
    }
}

impl fmt::Display for Tick {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Node identifier. Small ids display as letters (`A`..`Z`) to keep traces
/// and scenario files readable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u8);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn from_index(i: usize) -> NodeId {
        NodeId(i as u8)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 < 26 {
            write!(f, "{}", (b'A' + self.0) as char)
        } else {
            write!(f, "N{}", self.0)
        }
    }
}

/// Parses a node name as written in scenario files (`A`..`Z` or `N<k>`).
pub fn parse_node(s: &str) -> Option<NodeId> {
    let s = s.trim();
    let mut chars = s.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if c.is_ascii_uppercase() => Some(NodeId(c as u8 - b'A')),
        (Some('N'), Some(_)) => s[1..].parse::<u8>().ok().map(NodeId),
        _ => None,
    }
}

/// A transaction payload: an opaque body bound to the node that introduced
/// it. The binding is unforgeable; an adversarial node can invent payloads
/// only under its own origin.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Payload {
    pub origin: NodeId,
    pub body: String,
}

impl Payload {
    pub fn new(origin: NodeId, body: impl Into<String>) -> Payload {
        Payload {
            origin,
            body: body.into(),
        }
    }
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.origin, self.body)
    }
}

/// Content address of a block (modeled collision-free digest).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockId(pub u64);

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// FNV-1a, used as the stable content-address digest.
pub fn content_address(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_display_and_parse_round_trip() {
        for i in 0..30u8 {
            let id = NodeId(i);
            assert_eq!(parse_node(&id.to_string()), Some(id));
        }
        assert_eq!(parse_node("D"), Some(NodeId(3)));
        assert_eq!(parse_node("zz"), None);
    }

    #[test]
    fn content_address_is_stable() {
        assert_eq!(content_address(b"genesis"), content_address(b"genesis"));
        assert_ne!(content_address(b"a"), content_address(b"b"));
    }
}
