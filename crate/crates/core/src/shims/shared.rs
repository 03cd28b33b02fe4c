use std::ops::Deref;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use super::payload;
use crate::logger::Tracer;
use crate::vocab::{ClassKind, MethodKind};

const CLASS: &str = ClassKind::SharedPtr.name();

struct Shared<T> {
    value: T,
    count: AtomicUsize,
    tracer: Tracer,
    addr: u64,
}

/// Reference-counted handle. All handles to one value share a timeline: the
/// instance address names the shared value, not the individual handle.
pub struct SharedHandle<T> {
    inner: Arc<Shared<T>>,
}

impl<T> SharedHandle<T> {
    pub fn new(tracer: &Tracer, value: T) -> Self {
        let addr = tracer.acquire();
        tracer.log(CLASS, MethodKind::Ctor.name(), addr, 1, 0, 0);
        Self {
            inner: Arc::new(Shared {
                value,
                count: AtomicUsize::new(1),
                tracer: tracer.clone(),
                addr,
            }),
        }
    }

    pub fn ref_count(&self) -> usize {
        self.inner.count.load(Ordering::SeqCst)
    }

    pub fn address(&self) -> u64 {
        self.inner.addr
    }

    pub fn ptr_eq(a: &Self, b: &Self) -> bool {
        Arc::ptr_eq(&a.inner, &b.inner)
    }
}

impl<T> Clone for SharedHandle<T> {
    fn clone(&self) -> Self {
        let n = self.inner.count.fetch_add(1, Ordering::SeqCst) + 1;
        let s = &self.inner;
        s.tracer
            .log(CLASS, MethodKind::Incref.name(), s.addr, payload(n), 0, 0);
        Self {
            inner: Arc::clone(&self.inner),
        }
    }
}

impl<T> Drop for SharedHandle<T> {
    fn drop(&mut self) {
        let prev = self.inner.count.fetch_sub(1, Ordering::SeqCst);
        let s = &self.inner;
        if prev == 1 {
            s.tracer
                .log(CLASS, MethodKind::Dtor.name(), s.addr, 1, 0, 0);
            s.tracer.release(s.addr);
        } else {
            s.tracer.log(
                CLASS,
                MethodKind::Decref.name(),
                s.addr,
                payload(prev - 1),
                0,
                0,
            );
        }
    }
}

impl<T> Deref for SharedHandle<T> {
    type Target = T;

    fn deref(&self) -> &T {
        &self.inner.value
    }
}

impl<T: std::fmt::Debug> std::fmt::Debug for SharedHandle<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SharedHandle")
            .field("value", &self.inner.value)
            .field("refs", &self.ref_count())
            .finish()
    }
}
