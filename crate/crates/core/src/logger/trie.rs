use std::collections::HashMap;

use crate::wirefmt::{NODE_ID_BITS, STRING_ID_BITS};

/// A node created by a trie insertion that must be announced in the log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NewNode {
    pub node_id: u32,
    pub parent_id: u32,
    pub is_leaf: bool,
    pub frame: u64,
}

/// Prefix tree of call stacks keyed outermost-frame-first. Node 0 is the
/// implicit root; every other node id identifies the trace ending there.
#[derive(Debug, Clone)]
pub struct StackTrie {
    // index = node id; slot 0 is the root placeholder
    nodes: Vec<(u32, u64)>,
    children: HashMap<(u32, u64), u32>,
    max_id: u32,
}

impl Default for StackTrie {
    fn default() -> Self {
        Self::with_max_id((1 << NODE_ID_BITS) - 1)
    }
}

impl StackTrie {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn with_max_id(max_id: u32) -> Self {
        Self {
            nodes: vec![(0, 0)],
            children: HashMap::new(),
            max_id,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(parent, frame)` of a registered node.
    pub fn node(&self, id: u32) -> Option<(u32, u64)> {
        if id == 0 {
            return None;
        }
        self.nodes.get(id as usize).copied()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (u32, u32, u64)> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .skip(1)
            .map(|(id, &(parent, frame))| (id as u32, parent, frame))
    }

    /// Inserts `frames` and returns the leaf id, or `None` if the id space
    /// cannot hold the nodes this insertion needs. New nodes are appended to
    /// `created` in parent-before-child order. Nothing is modified on failure.
    pub fn insert(&mut self, frames: &[u64], created: &mut Vec<NewNode>) -> Option<u32> {
        let mut cur = 0u32;
        let mut depth = 0;
        while depth < frames.len() {
            match self.children.get(&(cur, frames[depth])) {
                Some(&child) => {
                    cur = child;
                    depth += 1;
                }
                None => break,
            }
        }
        let missing = frames.len() - depth;
        if self.len() + missing > self.max_id as usize {
            return None;
        }
        for (i, &frame) in frames.iter().enumerate().skip(depth) {
            let id = self.nodes.len() as u32;
            self.nodes.push((cur, frame));
            self.children.insert((cur, frame), id);
            created.push(NewNode {
                node_id: id,
                parent_id: cur,
                is_leaf: i + 1 == frames.len(),
                frame,
            });
            cur = id;
        }
        Some(cur)
    }
}

/// Dense string interner handing out ids from 1.
#[derive(Debug, Clone)]
pub struct Interner {
    ids: HashMap<String, u32>,
    texts: Vec<String>,
    max_id: u32,
}

impl Default for Interner {
    fn default() -> Self {
        Self {
            ids: HashMap::new(),
            texts: Vec::new(),
            max_id: (1 << STRING_ID_BITS) - 1,
        }
    }
}

impl Interner {
    pub fn get(&self, text: &str) -> Option<u32> {
        self.ids.get(text).copied()
    }

    pub fn text(&self, id: u32) -> Option<&str> {
        id.checked_sub(1)
            .and_then(|i| self.texts.get(i as usize))
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (u32, &str)> {
        self.texts
            .iter()
            .enumerate()
            .map(|(i, t)| (i as u32 + 1, t.as_str()))
    }

    /// Returns `(id, newly_created)`, or `None` when the id space is full.
    pub fn intern(&mut self, text: &str) -> Option<(u32, bool)> {
        if let Some(&id) = self.ids.get(text) {
            return Some((id, false));
        }
        if self.texts.len() >= self.max_id as usize {
            return None;
        }
        self.texts.push(text.to_owned());
        let id = self.texts.len() as u32;
        self.ids.insert(text.to_owned(), id);
        Some((id, true))
    }
}
