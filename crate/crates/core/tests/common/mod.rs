//! Shared generators and brute-force oracles for the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use perfsan::wirefmt::{record_compact_eligible, EventRecord, LogCommand};
use proptest::prelude::*;
use proptest::sample::Index;

#[derive(Debug, Clone)]
enum Step {
    Forward(u64),
    Backward(u64),
}

#[derive(Debug, Clone)]
enum Op {
    Segment {
        name: Index,
        base: u64,
        length: u64,
    },
    Event {
        class: Index,
        method: Index,
        trace: Index,
        step: Step,
        a: u32,
        b: u32,
        c: u32,
        instance: u64,
        force_regular: bool,
    },
}

#[derive(Debug, Clone)]
struct Plan {
    strings: Vec<(u32, String)>,
    /// (id, parent index or None for a root, leaf flag, frame)
    nodes: Vec<(u32, Option<usize>, bool, u64)>,
    ops: Vec<Op>,
}

fn payload() -> impl Strategy<Value = u32> {
    prop_oneof![3 => 0u32..4096, 1 => any::<u32>()]
}

fn step() -> impl Strategy<Value = Step> {
    prop_oneof![
        6 => (0u64..1000).prop_map(Step::Forward),
        2 => (0u64..(1 << 30)).prop_map(Step::Forward),
        1 => any::<u64>().prop_map(|v| Step::Forward(v >> 8)),
        1 => any::<u64>().prop_map(Step::Backward),
    ]
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        1 => (any::<Index>(), any::<u64>(), any::<u64>())
            .prop_map(|(name, base, length)| Op::Segment { name, base, length }),
        12 => (
            (any::<Index>(), any::<Index>(), any::<Index>()),
            step(),
            (payload(), payload(), payload()),
            any::<u64>(),
            prop::bool::weighted(0.1),
        )
            .prop_map(|((class, method, trace), step, (a, b, c), instance, force_regular)| Op::Event {
                class,
                method,
                trace,
                step,
                a,
                b,
                c,
                instance,
                force_regular,
            }),
    ]
}

fn plan() -> impl Strategy<Value = Plan> {
    let sids = prop::collection::btree_set(prop_oneof![1u32..64, 1u32..=0xffff], 1..8);
    let nids = prop::collection::btree_set(prop_oneof![1u32..256, 1u32..(1 << 24)], 1..12);
    (sids, nids)
        .prop_flat_map(|(sids, nids)| {
            let ns = sids.len();
            let nn = nids.len();
            (
                Just(sids.into_iter().collect::<Vec<_>>()).prop_shuffle(),
                prop::collection::vec("[a-z_:]{0,20}|\\PC{0,5}", ns),
                Just(nids.into_iter().collect::<Vec<_>>()).prop_shuffle(),
                prop::collection::vec(
                    (
                        any::<Index>(),
                        prop::bool::weighted(0.3),
                        any::<bool>(),
                        any::<u64>(),
                    ),
                    nn,
                ),
                prop::collection::vec(op(), 0..48),
            )
        })
        .prop_map(|(sids, texts, nids, node_bits, ops)| {
            let strings = sids.into_iter().zip(texts).collect();
            let nodes = nids
                .into_iter()
                .zip(node_bits)
                .enumerate()
                .map(|(i, (id, (pick, root, leaf, frame)))| {
                    let parent = (i > 0 && !root).then(|| pick.index(i));
                    (id, parent, leaf, frame)
                })
                .collect();
            Plan {
                strings,
                nodes,
                ops,
            }
        })
}

struct Emitter<'a> {
    plan: &'a Plan,
    out: Vec<LogCommand>,
    strings_done: BTreeSet<usize>,
    nodes_done: BTreeSet<usize>,
}

impl Emitter<'_> {
    fn string(&mut self, i: usize) -> u32 {
        let (id, text) = &self.plan.strings[i];
        if self.strings_done.insert(i) {
            self.out.push(LogCommand::RegisterString {
                string_id: *id,
                text: text.clone(),
            });
        }
        *id
    }

    fn node(&mut self, i: usize) -> u32 {
        let (id, parent, leaf, frame) = self.plan.nodes[i];
        if !self.nodes_done.contains(&i) {
            let parent_id = parent.map_or(0, |p| self.node(p));
            self.nodes_done.insert(i);
            self.out.push(LogCommand::RegisterTraceNode {
                node_id: id,
                parent_id,
                is_leaf: leaf,
                frame,
            });
        }
        id
    }
}

fn materialize(plan: &Plan) -> Vec<LogCommand> {
    let mut e = Emitter {
        plan,
        out: Vec::new(),
        strings_done: BTreeSet::new(),
        nodes_done: BTreeSet::new(),
    };
    let (ns, nn) = (plan.strings.len(), plan.nodes.len());
    let mut prev_ts = 0u64;
    for op in &plan.ops {
        match op {
            Op::Segment { name, base, length } => {
                let name_sid = e.string(name.index(ns));
                e.out.push(LogCommand::RegisterCodeSegment {
                    name_sid,
                    base: *base,
                    length: *length,
                });
            }
            Op::Event {
                class,
                method,
                trace,
                step,
                a,
                b,
                c,
                instance,
                force_regular,
            } => {
                let class_sid = e.string(class.index(ns));
                let method_sid = e.string(method.index(ns));
                let trace_id = e.node(trace.index(nn));
                let timestamp = match step {
                    Step::Forward(d) => prev_ts.saturating_add(*d),
                    Step::Backward(d) => prev_ts.saturating_sub(*d),
                };
                let ev = EventRecord {
                    class_sid,
                    method_sid,
                    trace_id,
                    timestamp,
                    instance: *instance,
                    a: *a,
                    b: *b,
                    c: *c,
                };
                e.out
                    .push(if !force_regular && record_compact_eligible(&ev, prev_ts) {
                        LogCommand::CompactEvent(ev)
                    } else {
                        LogCommand::RegularEvent(ev)
                    });
                prev_ts = timestamp;
            }
        }
    }
    for i in 0..ns {
        e.string(i);
    }
    for i in 0..nn {
        e.node(i);
    }
    e.out
}

/// Valid command sequences: every reference is registered first, ids are
/// unique, and compact events are used wherever the fields fit.
pub fn command_stream() -> impl Strategy<Value = Vec<LogCommand>> {
    plan().prop_map(|p| materialize(&p))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawEvent {
    pub method: String,
    pub trace: u32,
    pub timestamp: u64,
    pub a: u32,
    pub b: u32,
    pub c: u32,
}

/// One object lifetime, split independently of the library.
#[derive(Debug, Clone)]
pub struct RawLife {
    pub class: String,
    pub address: u64,
    pub events: Vec<RawEvent>,
}

impl RawLife {
    pub fn starts_with_ctor(&self) -> bool {
        matches!(
            self.events[0].method.as_str(),
            "ctor" | "copy_ctor" | "move_ctor"
        )
    }

    pub fn dtor(&self) -> Option<&RawEvent> {
        self.events.last().filter(|e| e.method == "dtor")
    }

    pub fn site(&self) -> u32 {
        self.events[0].trace
    }

    pub fn count(&self, method: &str) -> usize {
        self.events.iter().filter(|e| e.method == method).count()
    }
}

pub fn raw_lives(cmds: &[LogCommand]) -> Vec<RawLife> {
    let mut names: HashMap<u32, String> = HashMap::new();
    let mut lives: Vec<RawLife> = Vec::new();
    let mut open: HashMap<(String, u64), usize> = HashMap::new();
    for cmd in cmds {
        match cmd {
            LogCommand::RegisterString { string_id, text } => {
                names.insert(*string_id, text.clone());
            }
            LogCommand::RegularEvent(ev) | LogCommand::CompactEvent(ev) => {
                let class = names[&ev.class_sid].clone();
                let method = names[&ev.method_sid].clone();
                let key = (class.clone(), ev.instance);
                let idx = match open.get(&key) {
                    Some(&i) => i,
                    None => {
                        lives.push(RawLife {
                            class,
                            address: ev.instance,
                            events: Vec::new(),
                        });
                        open.insert(key.clone(), lives.len() - 1);
                        lives.len() - 1
                    }
                };
                let is_dtor = method == "dtor";
                lives[idx].events.push(RawEvent {
                    method,
                    trace: ev.trace_id,
                    timestamp: ev.timestamp,
                    a: ev.a,
                    b: ev.b,
                    c: ev.c,
                });
                if is_dtor {
                    open.remove(&key);
                }
            }
            _ => {}
        }
    }
    lives
}

/// Sums a per-life amount by (site, class), keeping only positive totals.
pub fn by_site(
    lives: &[RawLife],
    amount: impl Fn(&RawLife) -> u64,
) -> BTreeMap<(u32, String), u64> {
    let mut out = BTreeMap::new();
    for l in lives {
        let n = amount(l);
        if n > 0 {
            *out.entry((l.site(), l.class.clone())).or_insert(0) += n;
        }
    }
    out
}
pub mod differential;
