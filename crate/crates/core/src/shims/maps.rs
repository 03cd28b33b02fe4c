use std::borrow::Borrow;
use std::collections::{btree_map, hash_map, BTreeMap, HashMap};
use std::hash::Hash;

use super::{key_hash, payload};
use crate::logger::Tracer;
use crate::vocab::{ClassKind, MethodKind};

macro_rules! map_shim {
    ($name:ident, $inner:ident, $class:expr, $($bound:tt)+) => {
        pub struct $name<K, V> {
            map: $inner<K, V>,
            tracer: Tracer,
            addr: u64,
        }

        impl<K: $($bound)+, V> $name<K, V> {
            pub fn new(tracer: &Tracer) -> Self {
                let this = Self::raw(tracer, $inner::new());
                this.log(MethodKind::Ctor, 0, 0, 0);
                this
            }

            fn raw(tracer: &Tracer, map: $inner<K, V>) -> Self {
                Self {
                    map,
                    tracer: tracer.clone(),
                    addr: tracer.acquire(),
                }
            }

            #[inline]
            fn log(&self, method: MethodKind, a: u32, b: u32, c: u32) {
                self.tracer.log($class.name(), method.name(), self.addr, a, b, c);
            }

            pub fn address(&self) -> u64 {
                self.addr
            }

            pub fn len(&self) -> usize {
                self.map.len()
            }

            pub fn is_empty(&self) -> bool {
                self.map.is_empty()
            }

            pub fn insert(&mut self, key: K, value: V) -> Option<V> {
                let h = key_hash(&key);
                let old = self.map.insert(key, value);
                self.log(MethodKind::Insert, h, payload(self.len()), 0);
                old
            }

            /// Logged as `find`.
            pub fn get<Q>(&self, key: &Q) -> Option<&V>
            where
                K: Borrow<Q>,
                Q: $($bound)+ + ?Sized,
            {
                let found = self.map.get(key);
                self.log(MethodKind::Find, key_hash(key), u32::from(found.is_some()), 0);
                found
            }

            /// Logged as `count`.
            pub fn contains_key<Q>(&self, key: &Q) -> bool
            where
                K: Borrow<Q>,
                Q: $($bound)+ + ?Sized,
            {
                let found = self.map.contains_key(key);
                self.log(MethodKind::Count, key_hash(key), u32::from(found), 0);
                found
            }

            /// Subscript access: inserts a default value for a missing key.
            pub fn entry_or_default(&mut self, key: K) -> &mut V
            where
                V: Default,
            {
                let h = key_hash(&key);
                let len_before = self.map.len();
                let absent = !self.map.contains_key(&key);
                let after = len_before + usize::from(absent);
                self.log(MethodKind::Subscript, h, payload(after), 0);
                self.map.entry(key).or_default()
            }

            pub fn remove<Q>(&mut self, key: &Q) -> Option<V>
            where
                K: Borrow<Q>,
                Q: $($bound)+ + ?Sized,
            {
                self.map.remove(key)
            }

            pub fn clear(&mut self) {
                self.map.clear();
            }

            pub fn take(&mut self) -> Self {
                let map = std::mem::take(&mut self.map);
                let moved = Self::raw(&self.tracer, map);
                moved.log(MethodKind::MoveCtor, payload(moved.len()), payload(moved.len()), 0);
                moved
            }
        }

        impl<K: $($bound)+ + Clone, V: Clone> Clone for $name<K, V> {
            fn clone(&self) -> Self {
                let copy = Self::raw(&self.tracer, self.map.clone());
                copy.log(MethodKind::CopyCtor, payload(self.len()), payload(self.len()), 0);
                copy
            }
        }

        impl<K, V> Drop for $name<K, V> {
            fn drop(&mut self) {
                let n = payload(self.map.len());
                self.tracer.log($class.name(), MethodKind::Dtor.name(), self.addr, n, n, 0);
                self.tracer.release(self.addr);
            }
        }

        impl<K: std::fmt::Debug, V: std::fmt::Debug> std::fmt::Debug for $name<K, V> {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                self.map.fmt(f)
            }
        }
    };
}

map_shim!(OrderedMap, BTreeMap, ClassKind::Map, Ord + Hash);
map_shim!(HashedMap, HashMap, ClassKind::UnorderedMap, Eq + Hash);

impl<K: Ord + Hash, V> OrderedMap<K, V> {
    /// Key-ordered traversal; logged as `iter_ordered`.
    pub fn iter(&self) -> btree_map::Iter<'_, K, V> {
        self.log(MethodKind::IterOrdered, payload(self.len()), 0, 0);
        self.map.iter()
    }
}

impl<K: Eq + Hash, V> HashedMap<K, V> {
    /// Unordered traversal; not logged.
    pub fn iter(&self) -> hash_map::Iter<'_, K, V> {
        self.map.iter()
    }
}
