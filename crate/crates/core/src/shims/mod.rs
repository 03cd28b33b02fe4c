//! Instrumented containers. Each behaves like its plain counterpart and
//! reports selected method calls through a [`Tracer`](crate::logger::Tracer).
//!
//! Instance addresses come from the logger's address pool, so an object's
//! address is stable across Rust moves and gets reused after destruction.

mod array;
mod maps;
mod shared;
mod text;

use std::hash::{Hash, Hasher};

use fnv::FnvHasher;

pub use array::GrowableArray;
pub use maps::{HashedMap, OrderedMap};
pub use shared::SharedHandle;
pub use text::TextBuffer;

/// FNV-1a 64 of `bytes`, truncated to its low 32 bits.
pub fn content_hash(bytes: &[u8]) -> u32 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish() as u32
}

/// Key summary logged by map lookups: FNV-1a 64 over the key's `Hash`
/// byte stream, truncated to 32 bits.
pub fn key_hash<K: Hash + ?Sized>(key: &K) -> u32 {
    let mut h = FnvHasher::default();
    key.hash(&mut h);
    h.finish() as u32
}

#[inline]
pub(crate) fn payload(n: usize) -> u32 {
    u32::try_from(n).unwrap_or(u32::MAX)
}
