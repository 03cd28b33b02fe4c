use std::ops::{Deref, DerefMut};

use super::payload;
use crate::logger::Tracer;
use crate::vocab::{ClassKind, MethodKind};

const CLASS: &str = ClassKind::Vector.name();

/// Growable array with a doubling policy: the first allocation holds one
/// element and every growth doubles the capacity. Storage moves are
/// reported as `realloc` (new capacity, old capacity); the very first
/// allocation from an empty array is not a move and is visible only through
/// the capacity payload of the triggering call.
pub struct GrowableArray<E> {
    items: Vec<E>,
    capacity: usize,
    tracer: Tracer,
    addr: u64,
}

impl<E> GrowableArray<E> {
    pub fn new(tracer: &Tracer) -> Self {
        Self::with_capacity(tracer, 0)
    }

    pub fn with_capacity(tracer: &Tracer, capacity: usize) -> Self {
        let this = Self::raw(tracer, Vec::with_capacity(capacity), capacity);
        this.log(MethodKind::Ctor, 0, payload(capacity), 0);
        this
    }

    /// `n` clones of `value`; size and capacity both `n`.
    pub fn from_elem(tracer: &Tracer, n: usize, value: E) -> Self
    where
        E: Clone,
    {
        let this = Self::raw(tracer, vec![value; n], n);
        this.log(MethodKind::Ctor, payload(n), payload(n), 0);
        this
    }

    fn raw(tracer: &Tracer, items: Vec<E>, capacity: usize) -> Self {
        Self {
            items,
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

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn as_slice(&self) -> &[E] {
        &self.items
    }

    fn grow_to(&mut self, new_cap: usize) {
        let old = self.capacity;
        if old > 0 {
            self.log(MethodKind::Realloc, payload(new_cap), payload(old), 0);
        }
        self.items.reserve_exact(new_cap - self.items.len());
        self.capacity = new_cap;
    }

    fn make_room(&mut self) {
        if self.items.len() == self.capacity {
            let next = if self.capacity == 0 {
                1
            } else {
                self.capacity * 2
            };
            self.grow_to(next);
        }
    }

    /// Appends a moved-in element.
    pub fn push_back(&mut self, value: E) {
        self.make_room();
        self.items.push(value);
        self.log(
            MethodKind::PushBack,
            payload(self.len()),
            payload(self.capacity),
            0,
        );
    }

    /// Appends a copy of `value`; logged with the copied flag set.
    pub fn push_back_copy(&mut self, value: &E)
    where
        E: Clone,
    {
        self.make_room();
        self.items.push(value.clone());
        self.log(
            MethodKind::PushBack,
            payload(self.len()),
            payload(self.capacity),
            1,
        );
    }

    /// Constructs the element in place.
    pub fn emplace_back(&mut self, make: impl FnOnce() -> E) {
        self.make_room();
        self.items.push(make());
        self.log(
            MethodKind::EmplaceBack,
            payload(self.len()),
            payload(self.capacity),
            0,
        );
    }

    /// Inserts at `index`, shifting the tail. Panics if `index > len`.
    pub fn insert(&mut self, index: usize, value: E) {
        assert!(
            index <= self.items.len(),
            "insert index {index} out of bounds"
        );
        let shifted = self.items.len() - index;
        self.make_room();
        self.items.insert(index, value);
        self.log(
            MethodKind::Insert,
            payload(self.len()),
            payload(self.capacity),
            payload(shifted),
        );
    }

    pub fn pop_back(&mut self) -> Option<E> {
        self.items.pop()
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }

    /// Ensures capacity for at least `n` elements in total.
    pub fn reserve(&mut self, n: usize) {
        if n > self.capacity {
            self.grow_to(n);
        }
        self.log(MethodKind::Reserve, payload(n), payload(self.capacity), 0);
    }

    pub fn shrink_to_fit(&mut self) {
        self.items.shrink_to_fit();
        self.capacity = self.items.len();
        self.log(
            MethodKind::ShrinkToFit,
            payload(self.len()),
            payload(self.capacity),
            0,
        );
    }

    /// Moves the contents into a new instance, leaving this one empty.
    pub fn take(&mut self) -> Self {
        let items = std::mem::take(&mut self.items);
        let capacity = std::mem::replace(&mut self.capacity, 0);
        let moved = Self::raw(&self.tracer, items, capacity);
        moved.log(
            MethodKind::MoveCtor,
            payload(moved.len()),
            payload(capacity),
            0,
        );
        moved
    }
}

impl<E> Deref for GrowableArray<E> {
    type Target = [E];

    fn deref(&self) -> &[E] {
        &self.items
    }
}

impl<E> DerefMut for GrowableArray<E> {
    fn deref_mut(&mut self) -> &mut [E] {
        &mut self.items
    }
}

impl<E: Clone> Clone for GrowableArray<E> {
    fn clone(&self) -> Self {
        let copy = Self::raw(&self.tracer, self.items.clone(), self.items.len());
        copy.log(
            MethodKind::CopyCtor,
            payload(self.len()),
            payload(copy.capacity),
            0,
        );
        copy
    }
}

impl<E> Drop for GrowableArray<E> {
    fn drop(&mut self) {
        self.log(
            MethodKind::Dtor,
            payload(self.len()),
            payload(self.capacity),
            0,
        );
        self.tracer.release(self.addr);
    }
}

impl<E: std::fmt::Debug> std::fmt::Debug for GrowableArray<E> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.items.iter()).finish()
    }
}
