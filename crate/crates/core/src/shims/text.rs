use std::fmt;

use super::{content_hash, payload};
use crate::logger::Tracer;
use crate::vocab::{ClassKind, MethodKind, INLINE_TEXT_BYTES};

const CLASS: &str = ClassKind::String.name();

/// Byte string with a 15-byte inline buffer. Growth past the current
/// capacity moves to `max(2 * capacity, needed)` and is logged as `realloc`.
/// The destructor reports size, capacity and the content hash.
pub struct TextBuffer {
    text: String,
    capacity: usize,
    tracer: Tracer,
    addr: u64,
}

impl TextBuffer {
    pub fn new(tracer: &Tracer) -> Self {
        Self::from_str(tracer, "")
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_str(tracer: &Tracer, s: &str) -> Self {
        let this = Self::raw(tracer, s.to_owned());
        this.log(
            MethodKind::Ctor,
            payload(this.len()),
            payload(this.capacity),
            0,
        );
        this
    }

    fn raw(tracer: &Tracer, text: String) -> Self {
        let capacity = text.len().max(INLINE_TEXT_BYTES);
        Self {
            text,
            capacity,
            tracer: tracer.clone(),
            addr: tracer.acquire(),
        }
    }

    #[inline]
    fn log(&self, method: MethodKind, a: u32, b: u32, c: u32) {
        self.tracer.log(CLASS, method.name(), self.addr, a, b, c);
    }

    pub fn address(&self) -> u64 {
        self.addr
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn len(&self) -> usize {
        self.text.len()
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Whether the content lives on the heap.
    pub fn is_heap(&self) -> bool {
        self.capacity > INLINE_TEXT_BYTES
    }

    pub fn content_hash(&self) -> u32 {
        content_hash(self.text.as_bytes())
    }

    fn ensure(&mut self, needed: usize) {
        if needed > self.capacity {
            let new_cap = needed.max(self.capacity * 2);
            self.log(
                MethodKind::Realloc,
                payload(new_cap),
                payload(self.capacity),
                0,
            );
            self.text.reserve_exact(new_cap - self.text.len());
            self.capacity = new_cap;
        }
    }

    pub fn append(&mut self, s: &str) {
        self.ensure(self.text.len() + s.len());
        self.text.push_str(s);
        self.log(
            MethodKind::Append,
            payload(self.len()),
            payload(self.capacity),
            0,
        );
    }

    pub fn push(&mut self, ch: char) {
        let mut buf = [0u8; 4];
        self.append(ch.encode_utf8(&mut buf));
    }

    /// Ensures a total capacity of at least `n` bytes.
    pub fn reserve(&mut self, n: usize) {
        self.ensure(n);
        self.log(MethodKind::Reserve, payload(n), payload(self.capacity), 0);
    }

    pub fn shrink_to_fit(&mut self) {
        self.text.shrink_to_fit();
        self.capacity = self.text.len().max(INLINE_TEXT_BYTES);
        self.log(
            MethodKind::ShrinkToFit,
            payload(self.len()),
            payload(self.capacity),
            0,
        );
    }

    pub fn clear(&mut self) {
        self.text.clear();
    }

    pub fn take(&mut self) -> Self {
        let text = std::mem::take(&mut self.text);
        let capacity = std::mem::replace(&mut self.capacity, INLINE_TEXT_BYTES);
        let mut moved = Self::raw(&self.tracer, text);
        moved.capacity = capacity;
        moved.log(
            MethodKind::MoveCtor,
            payload(moved.len()),
            payload(capacity),
            0,
        );
        moved
    }
}

impl Clone for TextBuffer {
    fn clone(&self) -> Self {
        let copy = Self::raw(&self.tracer, self.text.clone());
        copy.log(
            MethodKind::CopyCtor,
            payload(self.len()),
            payload(copy.capacity),
            0,
        );
        copy
    }
}

impl Drop for TextBuffer {
    fn drop(&mut self) {
        self.log(
            MethodKind::Dtor,
            payload(self.len()),
            payload(self.capacity),
            self.content_hash(),
        );
        self.tracer.release(self.addr);
    }
}

impl fmt::Debug for TextBuffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(&self.text, f)
    }
}

impl fmt::Display for TextBuffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}
