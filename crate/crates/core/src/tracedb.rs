//! Analysis-ready view of a decoded log: string table, rebuilt stack trie,
//! code segments, the event list, and per-instance timelines.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::vocab::{ClassKind, MethodKind, INLINE_TEXT_BYTES};
use crate::wirefmt::{decode_stream, DecodeError, LogCommand, LogHeader};

/// One decoded method call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MethodEvent {
    pub class_sid: u32,
    pub method_sid: u32,
    pub class: ClassKind,
    pub method: MethodKind,
    pub trace_id: u32,
    pub timestamp: u64,
    pub instance: u64,
    pub a: u32,
    pub b: u32,
    pub c: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeSegment {
    pub name: String,
    pub base: u64,
    pub length: u64,
}

impl CodeSegment {
    pub fn contains(&self, addr: u64) -> bool {
        addr >= self.base && addr - self.base < self.length
    }
}

/// Non-fatal inconsistencies found while building. `index` is the position
/// of the offending command in the input sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BuildWarning {
    UnknownString {
        index: usize,
        sid: u32,
    },
    UnknownTrace {
        index: usize,
        trace_id: u32,
    },
    OrphanNode {
        index: usize,
        node_id: u32,
        parent_id: u32,
    },
    DuplicateString {
        index: usize,
        sid: u32,
    },
    DuplicateNode {
        index: usize,
        node_id: u32,
    },
}

impl fmt::Display for BuildWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuildWarning::UnknownString { index, sid } => {
                write!(f, "command {index}: unknown string id {sid}, dropped")
            }
            BuildWarning::UnknownTrace { index, trace_id } => {
                write!(
                    f,
                    "command {index}: unknown trace id {trace_id}, event dropped"
                )
            }
            BuildWarning::OrphanNode {
                index,
                node_id,
                parent_id,
            } => write!(
                f,
                "command {index}: trace node {node_id} has unknown parent {parent_id}, dropped"
            ),
            BuildWarning::DuplicateString { index, sid } => {
                write!(f, "command {index}: string id {sid} re-registered, ignored")
            }
            BuildWarning::DuplicateNode { index, node_id } => {
                write!(
                    f,
                    "command {index}: trace node {node_id} re-registered, ignored"
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceDbError {
    #[error("unknown trace id {0}")]
    UnknownTrace(u32),
}

#[derive(Debug, Clone, Default)]
pub struct TraceDb {
    pub tick_rate: u64,
    pub strings: BTreeMap<u32, String>,
    /// node id → (parent id, frame)
    pub trie: BTreeMap<u32, (u32, u64)>,
    pub segments: Vec<CodeSegment>,
    pub events: Vec<MethodEvent>,
    pub warnings: Vec<BuildWarning>,
}

impl TraceDb {
    /// Builds the tables. Dangling references are reported as warnings and
    /// the offending command is dropped.
    pub fn build(header: &LogHeader, cmds: &[LogCommand]) -> TraceDb {
        let mut db = TraceDb {
            tick_rate: header.tick_rate,
            ..Default::default()
        };
        let mut kinds: HashMap<u32, (ClassKind, MethodKind)> = HashMap::new();
        for (index, cmd) in cmds.iter().enumerate() {
            match cmd {
                LogCommand::RegisterString { string_id, text } => {
                    if db.strings.contains_key(string_id) {
                        db.warnings.push(BuildWarning::DuplicateString {
                            index,
                            sid: *string_id,
                        });
                    } else {
                        kinds.insert(
                            *string_id,
                            (ClassKind::from_name(text), MethodKind::from_name(text)),
                        );
                        db.strings.insert(*string_id, text.clone());
                    }
                }
                LogCommand::RegisterTraceNode {
                    node_id,
                    parent_id,
                    frame,
                    ..
                } => {
                    if db.trie.contains_key(node_id) {
                        db.warnings.push(BuildWarning::DuplicateNode {
                            index,
                            node_id: *node_id,
                        });
                    } else if *node_id == 0 || (*parent_id != 0 && !db.trie.contains_key(parent_id))
                    {
                        db.warnings.push(BuildWarning::OrphanNode {
                            index,
                            node_id: *node_id,
                            parent_id: *parent_id,
                        });
                    } else {
                        db.trie.insert(*node_id, (*parent_id, *frame));
                    }
                }
                LogCommand::RegisterCodeSegment {
                    name_sid,
                    base,
                    length,
                } => match db.strings.get(name_sid) {
                    Some(name) => {
                        let seg = CodeSegment {
                            name: name.clone(),
                            base: *base,
                            length: *length,
                        };
                        // a later registration under the same name wins
                        match db.segments.iter_mut().find(|s| s.name == seg.name) {
                            Some(slot) => *slot = seg,
                            None => db.segments.push(seg),
                        }
                    }
                    None => db.warnings.push(BuildWarning::UnknownString {
                        index,
                        sid: *name_sid,
                    }),
                },
                LogCommand::RegularEvent(ev) | LogCommand::CompactEvent(ev) => {
                    let class = kinds.get(&ev.class_sid);
                    let method = kinds.get(&ev.method_sid);
                    let (Some(&(class, _)), Some(&(_, method))) = (class, method) else {
                        let sid = if class.is_none() {
                            ev.class_sid
                        } else {
                            ev.method_sid
                        };
                        db.warnings.push(BuildWarning::UnknownString { index, sid });
                        continue;
                    };
                    if !db.trie.contains_key(&ev.trace_id) {
                        db.warnings.push(BuildWarning::UnknownTrace {
                            index,
                            trace_id: ev.trace_id,
                        });
                        continue;
                    }
                    db.events.push(MethodEvent {
                        class_sid: ev.class_sid,
                        method_sid: ev.method_sid,
                        class,
                        method,
                        trace_id: ev.trace_id,
                        timestamp: ev.timestamp,
                        instance: ev.instance,
                        a: ev.a,
                        b: ev.b,
                        c: ev.c,
                    });
                }
            }
        }
        db
    }

    /// Decodes and builds in one step.
    pub fn from_bytes(bytes: &[u8]) -> Result<TraceDb, DecodeError> {
        let (header, cmds) = decode_stream(bytes)?;
        Ok(Self::build(&header, &cmds))
    }

    pub fn string(&self, sid: u32) -> &str {
        self.strings.get(&sid).map_or("?", String::as_str)
    }

    /// Frames of a trace, innermost first.
    pub fn resolve_trace(&self, trace_id: u32) -> Result<Vec<u64>, TraceDbError> {
        let mut out = Vec::new();
        let mut cur = trace_id;
        while cur != 0 {
            let &(parent, frame) = self
                .trie
                .get(&cur)
                .ok_or(TraceDbError::UnknownTrace(trace_id))?;
            out.push(frame);
            cur = parent;
        }
        if out.is_empty() {
            return Err(TraceDbError::UnknownTrace(trace_id));
        }
        Ok(out)
    }

    /// Groups events by (class, address) and splits each group into epochs
    /// at destructors. Timelines are ordered by their first event.
    pub fn reconstruct_instances(&self) -> Vec<InstanceTimeline> {
        let mut timelines: Vec<InstanceTimeline> = Vec::new();
        let mut open: HashMap<(u32, u64), usize> = HashMap::new();
        let mut epochs: HashMap<(u32, u64), u32> = HashMap::new();
        for ev in &self.events {
            let key = (ev.class_sid, ev.instance);
            let idx = *open.entry(key).or_insert_with(|| {
                let epoch = epochs.entry(key).or_insert(0);
                timelines.push(InstanceTimeline::start(
                    ev.instance,
                    *epoch,
                    ev.class,
                    self.string(ev.class_sid),
                ));
                *epoch += 1;
                timelines.len() - 1
            });
            timelines[idx].events.push(*ev);
            if ev.method == MethodKind::Dtor {
                open.remove(&key);
            }
        }
        for t in &mut timelines {
            t.finish();
        }
        timelines
    }

    /// Per-instance event listing.
    pub fn dump(&self) -> String {
        render_timelines(self, &self.reconstruct_instances())
    }
}

/// Renders timelines in the `Instance <addr>:` listing format.
pub fn render_timelines(db: &TraceDb, timelines: &[InstanceTimeline]) -> String {
    let mut out = String::new();
    for (i, t) in timelines.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let rows: Vec<(String, String, u32)> = t
            .events
            .iter()
            .map(|e| {
                (
                    format!("{}::{}", db.string(e.class_sid), db.string(e.method_sid)),
                    format!("[{}, {}, {}]", e.a, e.b, e.c),
                    e.trace_id,
                )
            })
            .collect();
        let name_w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0) + 2;
        let pay_w = rows.iter().map(|r| r.1.len()).max().unwrap_or(0) + 2;
        let _ = writeln!(out, "Instance 0x{:x}:", t.address);
        for (name, pay, trace) in rows {
            let _ = writeln!(out, "{name:<name_w$}{pay:<pay_w$}loc[0x{trace:03x}]");
        }
    }
    out
}

/// Ordered events for one lifetime of one object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceTimeline {
    pub address: u64,
    /// Ordinal of this lifetime among those at the same (class, address).
    pub epoch: u32,
    pub class: ClassKind,
    pub class_name: String,
    pub events: Vec<MethodEvent>,
    /// No constructor opened this epoch.
    pub anomalous: bool,
    pub max_size: u64,
    pub max_capacity: u64,
    pub max_refcount: u64,
    pub realloc_count: u64,
    pub allocations: u64,
}

impl InstanceTimeline {
    fn start(address: u64, epoch: u32, class: ClassKind, class_name: &str) -> Self {
        Self {
            address,
            epoch,
            class,
            class_name: class_name.to_owned(),
            events: Vec::new(),
            anomalous: false,
            max_size: 0,
            max_capacity: 0,
            max_refcount: 0,
            realloc_count: 0,
            allocations: 0,
        }
    }

    fn finish(&mut self) {
        self.anomalous = !self
            .events
            .first()
            .is_some_and(|e| e.method.is_constructor());
        let mut cap = 0u64;
        for e in &self.events {
            let (a, b) = (u64::from(e.a), u64::from(e.b));
            let (size, new_cap) = match (self.class, e.method) {
                (ClassKind::SharedPtr, _) => {
                    self.max_refcount = self.max_refcount.max(a);
                    continue;
                }
                (_, MethodKind::Realloc) => {
                    self.realloc_count += 1;
                    self.allocations += 1;
                    (None, Some(a))
                }
                (c, MethodKind::Insert | MethodKind::Subscript) if c.is_map() => (Some(b), Some(b)),
                (c, MethodKind::Count | MethodKind::Find | MethodKind::IterOrdered)
                    if c.is_map() =>
                {
                    (None, None)
                }
                (_, MethodKind::Reserve) => (None, Some(b)),
                (
                    _,
                    MethodKind::Ctor
                    | MethodKind::CopyCtor
                    | MethodKind::MoveCtor
                    | MethodKind::Dtor
                    | MethodKind::PushBack
                    | MethodKind::EmplaceBack
                    | MethodKind::Insert
                    | MethodKind::Append
                    | MethodKind::ShrinkToFit,
                ) => (Some(a), Some(b)),
                _ => (None, None),
            };
            if let Some(s) = size {
                self.max_size = self.max_size.max(s);
            }
            if let Some(c) = new_cap {
                let heap = |x: u64| match self.class {
                    ClassKind::String => x > INLINE_TEXT_BYTES as u64,
                    _ => x > 0,
                };
                if e.method != MethodKind::Realloc && !heap(cap) && heap(c) {
                    self.allocations += 1;
                }
                cap = c;
                self.max_capacity = self.max_capacity.max(c);
            }
        }
    }

    pub fn ctor_ts(&self) -> u64 {
        self.events.first().map_or(0, |e| e.timestamp)
    }

    pub fn dtor(&self) -> Option<&MethodEvent> {
        self.events.last().filter(|e| e.method == MethodKind::Dtor)
    }

    pub fn dtor_ts(&self) -> Option<u64> {
        self.dtor().map(|e| e.timestamp)
    }

    /// Destructor seen; the object's whole lifetime is in this timeline.
    pub fn is_completed(&self) -> bool {
        self.dtor().is_some()
    }

    pub fn is_alive(&self) -> bool {
        !self.is_completed()
    }

    pub fn lifetime(&self) -> Option<u64> {
        self.dtor_ts().map(|d| d.saturating_sub(self.ctor_ts()))
    }

    /// Trace id of the event that opened this timeline.
    pub fn site(&self) -> u32 {
        self.events.first().map_or(0, |e| e.trace_id)
    }

    pub fn count(&self, method: MethodKind) -> usize {
        self.events.iter().filter(|e| e.method == method).count()
    }

    /// Whether the object owned heap storage at any point.
    pub fn allocated(&self) -> bool {
        match self.class {
            ClassKind::SharedPtr => true,
            ClassKind::String => {
                self.max_capacity > INLINE_TEXT_BYTES as u64 || self.realloc_count > 0
            }
            _ => self.max_capacity > 0 || self.realloc_count > 0,
        }
    }
}
