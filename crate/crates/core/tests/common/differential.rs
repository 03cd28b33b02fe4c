//! Random operation sequences applied to a shim and its plain counterpart
//! side by side. Every step asserts identical observable state; each driver
//! returns a digest of everything it observed so runs with logging on and
//! off can be compared.

use std::collections::{BTreeMap, HashMap};
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use perfsan::logger::Tracer;
use perfsan::shims::{
    content_hash, GrowableArray, HashedMap, OrderedMap, SharedHandle, TextBuffer,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

#[derive(Default)]
struct Digest(std::collections::hash_map::DefaultHasher);

impl Digest {
    fn add<T: Hash>(&mut self, v: T) {
        v.hash(&mut self.0);
    }

    fn finish(&self) -> u64 {
        self.0.finish()
    }
}

pub fn array(tracer: &Tracer, seed: u64, ops: usize) -> u64 {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut d = Digest::default();
    let mut shim: GrowableArray<u32> = GrowableArray::new(tracer);
    let mut model: Vec<u32> = Vec::new();
    for _ in 0..ops {
        let v: u32 = rng.random();
        match rng.random_range(0..100) {
            0..=29 => {
                shim.push_back(v);
                model.push(v);
            }
            30..=39 => {
                shim.push_back_copy(&v);
                model.push(v);
            }
            40..=44 => {
                shim.emplace_back(|| v);
                model.push(v);
            }
            45..=54 => {
                let i = rng.random_range(0..=model.len());
                shim.insert(i, v);
                model.insert(i, v);
            }
            55..=69 => assert_eq!(shim.pop_back(), model.pop()),
            70..=74 => {
                let n = rng.random_range(0..256);
                shim.reserve(n);
                model.reserve(n);
                assert!(shim.capacity() >= n);
            }
            75..=77 => shim.shrink_to_fit(),
            78 => {
                shim.clear();
                model.clear();
            }
            79..=89 if !model.is_empty() => {
                let i = rng.random_range(0..model.len());
                shim[i] = v;
                model[i] = v;
            }
            90..=92 => {
                let copy = shim.clone();
                assert_eq!(copy.as_slice(), model.as_slice());
            }
            93 => {
                let moved = shim.take();
                assert!(shim.is_empty());
                shim = moved;
            }
            _ => {
                if let Some(i) = (!model.is_empty()).then(|| rng.random_range(0..model.len())) {
                    assert_eq!(shim.get(i), model.get(i));
                }
            }
        }
        if model.len() > 2_000 {
            shim.clear();
            model.clear();
        }
        assert_eq!(shim.as_slice(), model.as_slice());
        assert!(shim.capacity() >= shim.len());
        d.add(shim.len());
        d.add(shim.last());
    }
    d.add(shim.as_slice());
    d.finish()
}

const ALPHABET: [&str; 6] = ["a", "bc", "héllo", " ", "longer fragment", "ü"];

pub fn text(tracer: &Tracer, seed: u64, ops: usize) -> u64 {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut d = Digest::default();
    let mut shim = TextBuffer::new(tracer);
    let mut model = String::new();
    for _ in 0..ops {
        match rng.random_range(0..100) {
            0..=39 => {
                let s = ALPHABET[rng.random_range(0..ALPHABET.len())];
                shim.append(s);
                model.push_str(s);
            }
            40..=64 => {
                let ch = ['x', 'ß', '€', '7'][rng.random_range(0..4)];
                shim.push(ch);
                model.push(ch);
            }
            65..=74 => {
                let n = rng.random_range(0..128);
                shim.reserve(n);
                model.reserve(n);
                assert!(shim.capacity() >= n);
            }
            75..=79 => shim.shrink_to_fit(),
            80..=82 => {
                shim.clear();
                model.clear();
            }
            83..=89 => {
                let copy = shim.clone();
                assert_eq!(copy.as_str(), model);
            }
            90..=92 => {
                let moved = shim.take();
                assert!(shim.is_empty());
                shim = moved;
            }
            _ => assert_eq!(shim.content_hash(), content_hash(model.as_bytes())),
        }
        if model.len() > 4_000 {
            shim.clear();
            model.clear();
        }
        assert_eq!(shim.as_str(), model);
        assert_eq!(shim.len(), model.len());
        d.add(shim.len());
    }
    d.add(shim.as_str());
    d.finish()
}

macro_rules! map_driver {
    ($fn:ident, $shim:ident, $model:ident, $sorted:expr) => {
        pub fn $fn(tracer: &Tracer, seed: u64, ops: usize) -> u64 {
            let mut rng = StdRng::seed_from_u64(seed);
            let mut d = Digest::default();
            let mut shim: $shim<u16, u32> = $shim::new(tracer);
            let mut model: $model<u16, u32> = $model::new();
            for _ in 0..ops {
                let k: u16 = rng.random_range(0..512);
                let v: u32 = rng.random();
                match rng.random_range(0..100) {
                    0..=29 => assert_eq!(shim.insert(k, v), model.insert(k, v)),
                    30..=49 => assert_eq!(shim.get(&k), model.get(&k)),
                    50..=59 => assert_eq!(shim.contains_key(&k), model.contains_key(&k)),
                    60..=74 => {
                        let s = shim.entry_or_default(k);
                        *s = s.wrapping_add(v);
                        let m = model.entry(k).or_default();
                        *m = m.wrapping_add(v);
                    }
                    75..=89 => assert_eq!(shim.remove(&k), model.remove(&k)),
                    90 => {
                        shim.clear();
                        model.clear();
                    }
                    91..=94 => {
                        let copy = shim.clone();
                        assert_eq!(copy.len(), model.len());
                    }
                    95 => {
                        let moved = shim.take();
                        assert!(shim.is_empty());
                        shim = moved;
                    }
                    _ => {
                        let a: Vec<(u16, u32)> =
                            $sorted(shim.iter().map(|(k, v)| (*k, *v)).collect());
                        let b: Vec<(u16, u32)> =
                            $sorted(model.iter().map(|(k, v)| (*k, *v)).collect());
                        assert_eq!(a, b);
                    }
                }
                assert_eq!(shim.len(), model.len());
                d.add(shim.len());
            }
            let mut all: Vec<(u16, u32)> = shim.iter().map(|(k, v)| (*k, *v)).collect();
            all.sort_unstable();
            d.add(all);
            d.finish()
        }
    };
}

fn keep(v: Vec<(u16, u32)>) -> Vec<(u16, u32)> {
    v
}

fn sorted(mut v: Vec<(u16, u32)>) -> Vec<(u16, u32)> {
    v.sort_unstable();
    v
}

map_driver!(ordered_map, OrderedMap, BTreeMap, keep);
map_driver!(hashed_map, HashedMap, HashMap, sorted);

pub fn shared(tracer: &Tracer, seed: u64, ops: usize) -> u64 {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut d = Digest::default();
    let mut shims: Vec<SharedHandle<u64>> = Vec::new();
    let mut model: Vec<Arc<u64>> = Vec::new();
    for _ in 0..ops {
        match rng.random_range(0..100) {
            0..=19 => {
                let v: u64 = rng.random();
                shims.push(SharedHandle::new(tracer, v));
                model.push(Arc::new(v));
            }
            20..=59 if !model.is_empty() => {
                let i = rng.random_range(0..model.len());
                shims.push(shims[i].clone());
                model.push(model[i].clone());
            }
            _ if !model.is_empty() => {
                let i = rng.random_range(0..model.len());
                shims.swap_remove(i);
                model.swap_remove(i);
            }
            _ => {}
        }
        if model.len() > 500 {
            shims.clear();
            model.clear();
        }
        if !model.is_empty() {
            let i = rng.random_range(0..model.len());
            assert_eq!(*shims[i], *model[i]);
            assert_eq!(shims[i].ref_count(), Arc::strong_count(&model[i]));
        }
        d.add(model.len());
    }
    d.add(
        shims
            .iter()
            .map(|s| (**s, s.ref_count()))
            .collect::<Vec<_>>(),
    );
    d.finish()
}
