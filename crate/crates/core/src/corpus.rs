//! Built-in synthetic programs: for every rule, one program that exhibits
//! the anti-pattern and a matched program with the anti-pattern removed.
//!
//! Programs run against a logger with a [`ShadowStack`] and a [`ManualClock`]
//! so their logs are fully deterministic.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::logger::{
    Logger, LoggerConfig, LoggerError, ManualClock, ShadowScope, ShadowStack, SharedBuffer, Tracer,
};
use crate::rules::{evaluate, run_all, RuleConfig, RuleId};
use crate::shims::{GrowableArray, HashedMap, OrderedMap, SharedHandle, TextBuffer};
use crate::tracedb::TraceDb;
use crate::wirefmt::{decode_stream, DecodeError, LogCommand};

pub const SEGMENT_NAME: &str = "selftest";
pub const SEGMENT_BASE: u64 = 0x40_0000;
pub const SEGMENT_LEN: u64 = 0x1_0000;

const MAIN_FRAME: u64 = 0x40_1010;
const RUNNER_FRAME: u64 = 0x40_1110;

fn program_base(rule: RuleId, positive: bool) -> u64 {
    0x40_2000 + u64::from(rule.number()) * 0x200 + if positive { 0 } else { 0x100 }
}

/// Execution context handed to each program.
pub struct Harness {
    pub tracer: Tracer,
    pub stack: ShadowStack,
    pub clock: Arc<ManualClock>,
    base: u64,
}

impl Harness {
    /// Enters call site `line` of the current program.
    pub fn site(&self, line: u64) -> ShadowScope<'_> {
        self.stack.scope(&[self.base + line * 0x10])
    }

    /// Simulated work between events.
    pub fn work(&self, ticks: u64) {
        self.clock.advance(ticks);
    }
}

fn consume<T>(_value: T) {}

fn short_lifetime(h: &Harness, positive: bool) {
    for i in 0..20u32 {
        let _s = h.site(1);
        let mut v = GrowableArray::new(&h.tracer);
        for k in 0..4 {
            v.push_back(i + k);
        }
        if !positive {
            h.work(5_000);
        }
    }
}

fn growth_realloc(h: &Harness, positive: bool, instances: u32) {
    for i in 0..instances {
        let _s = h.site(1);
        let mut v = GrowableArray::new(&h.tracer);
        if !positive {
            v.reserve(100);
        }
        for k in 0..100 {
            v.push_back(i * k);
        }
        h.work(2_000);
    }
}

fn data_shift(h: &Harness, positive: bool) {
    let _s = h.site(1);
    let mut v = GrowableArray::new(&h.tracer);
    v.reserve(128);
    for k in 0..100u32 {
        if positive {
            v.insert(0, k);
        } else {
            v.push_back(k);
        }
    }
    h.work(2_000);
}

fn push_back_copy(h: &Harness, positive: bool) {
    let _s = h.site(1);
    let mut v: GrowableArray<String> = GrowableArray::new(&h.tracer);
    v.reserve(16);
    for k in 0..10 {
        let item = format!("item-{k}");
        if positive {
            v.push_back_copy(&item);
        } else {
            v.emplace_back(|| item);
        }
    }
    h.work(2_000);
}

fn shrink_to_fit(h: &Harness, positive: bool) {
    for _ in 0..5 {
        let _s = h.site(1);
        let mut v = GrowableArray::new(&h.tracer);
        v.reserve(256);
        for k in 0..10u32 {
            v.push_back(k);
        }
        if !positive {
            v.shrink_to_fit();
        }
        h.work(2_000);
    }
}

fn value_copy(h: &Harness, positive: bool) {
    let _outer = h.site(1);
    let config = TextBuffer::from_str(
        &h.tracer,
        "a configuration value longer than inline storage",
    );
    let mut total = 0;
    for _ in 0..10 {
        let _s = h.site(2);
        if positive {
            let copy = config.clone();
            total += copy.len();
            consume(copy);
        } else {
            total += config.len();
        }
    }
    assert!(total > 0);
    h.work(2_000);
}

fn small_vector(h: &Harness, positive: bool) {
    let n = if positive { 3 } else { 40 };
    for _ in 0..30 {
        let _s = h.site(1);
        let mut v = GrowableArray::new(&h.tracer);
        v.reserve(n);
        for k in 0..n as u32 {
            v.push_back(k);
        }
        h.work(2_000);
    }
}

fn unique_shared(h: &Harness, positive: bool) {
    for k in 0..10u64 {
        let _s = h.site(1);
        let p = SharedHandle::new(&h.tracer, k);
        let mut sum = *p;
        if !positive {
            let _s = h.site(2);
            let q = p.clone();
            sum += *q;
        }
        h.work(2_000);
        consume(sum);
    }
}

fn duplicate_string(h: &Harness, positive: bool) {
    for k in 0..150 {
        let _s = h.site(1);
        let text = if positive {
            "duplicated configuration entry".to_owned()
        } else {
            format!("distinct configuration entry {k}")
        };
        let s = TextBuffer::from_str(&h.tracer, &text);
        h.work(2_000);
        consume(s);
    }
}

fn unordered_map(h: &Harness, positive: bool) {
    for _ in 0..5 {
        let _s = h.site(1);
        if positive {
            let mut m = OrderedMap::new(&h.tracer);
            for k in 0..8u32 {
                m.insert(k, k * 2);
            }
            assert_eq!(m.get(&3), Some(&6));
        } else {
            let mut m = HashedMap::new(&h.tracer);
            for k in 0..8u32 {
                m.insert(k, k * 2);
            }
            assert_eq!(m.get(&3), Some(&6));
        }
        h.work(2_000);
    }
}

fn double_lookup(h: &Harness, positive: bool) {
    let _s = h.site(1);
    let mut counts: HashedMap<String, u32> = HashedMap::new(&h.tracer);
    for k in 0..20 {
        let key = format!("word-{}", k % 7);
        let _s = h.site(2);
        if positive {
            if counts.contains_key(&key) {
                *counts.entry_or_default(key) += 1;
            } else {
                counts.insert(key, 1);
            }
        } else {
            *counts.entry_or_default(key) += 1;
        }
    }
    h.work(2_000);
}

fn unused_instance(h: &Harness, positive: bool) {
    for k in 0..10u32 {
        let _s = h.site(1);
        let mut v = GrowableArray::new(&h.tracer);
        if !positive {
            v.push_back(k);
        }
        h.work(2_000);
    }
}

fn high_refcount(h: &Harness, positive: bool) {
    let _s = h.site(1);
    let p = SharedHandle::new(&h.tracer, String::from("shared state"));
    let n = if positive { 150 } else { 5 };
    let mut holders = Vec::with_capacity(n);
    for _ in 0..n {
        let _s = h.site(2);
        holders.push(p.clone());
    }
    h.work(2_000);
    drop(holders);
}

/// Runs one rule's positive or negative program on `h`.
pub fn run_rule_program(h: &mut Harness, rule: RuleId, positive: bool) {
    h.base = program_base(rule, positive);
    let _runner = h.stack.scope(&[RUNNER_FRAME]);
    match rule {
        RuleId::ShortLifetime => short_lifetime(h, positive),
        RuleId::GrowthRealloc => growth_realloc(h, positive, 20),
        RuleId::DataShift => data_shift(h, positive),
        RuleId::PushBackCopy => push_back_copy(h, positive),
        RuleId::ShrinkToFit => shrink_to_fit(h, positive),
        RuleId::ValueCopy => value_copy(h, positive),
        RuleId::SmallVector => small_vector(h, positive),
        RuleId::UniqueShared => unique_shared(h, positive),
        RuleId::DuplicateString => duplicate_string(h, positive),
        RuleId::UnorderedMapSuggestion => unordered_map(h, positive),
        RuleId::DoubleLookup => double_lookup(h, positive),
        RuleId::UnusedInstance => unused_instance(h, positive),
        RuleId::HighRefcount => high_refcount(h, positive),
    }
}

/// Every positive program plus a bulk growth workload that brings the
/// corpus past 10,000 events.
pub fn full_corpus(h: &mut Harness) {
    for rule in RuleId::ALL {
        run_rule_program(h, rule, true);
    }
    h.base = program_base(RuleId::GrowthRealloc, true) + 0x80;
    let _runner = h.stack.scope(&[RUNNER_FRAME]);
    growth_realloc(h, true, 80);
}

/// Runs `program` against a fresh in-memory logger and returns the log.
pub fn record(
    buffer_capacity: usize,
    program: impl FnOnce(&mut Harness),
) -> Result<Vec<u8>, LoggerError> {
    let stack = ShadowStack::new();
    let clock = Arc::new(ManualClock::new(0, 1));
    let sink = SharedBuffer::new();
    let logger = Logger::builder()
        .config(LoggerConfig {
            buffer_capacity,
            ..LoggerConfig::default()
        })
        .clock(clock.clone())
        .frames(Arc::new(stack.clone()))
        .writer(sink.clone())?;
    logger.register_code_segment(SEGMENT_NAME, SEGMENT_BASE, SEGMENT_LEN)?;
    let logger = Arc::new(logger);
    let mut h = Harness {
        tracer: Tracer::new(logger.clone()),
        stack: stack.clone(),
        clock,
        base: 0,
    };
    {
        let _main = stack.scope(&[MAIN_FRAME]);
        program(&mut h);
    }
    drop(h);
    logger.flush()?;
    Ok(sink.contents())
}

/// Symbol map describing the corpus frames.
pub fn symbol_map_text() -> String {
    let mut out = String::from("# selftest corpus symbols\n");
    let _ = writeln!(out, "0x401000 0x401100 main|selftest/main.rs:1");
    let _ = writeln!(out, "0x401100 0x401200 run_programs|selftest/main.rs:20");
    for rule in RuleId::ALL {
        for positive in [true, false] {
            let base = program_base(rule, positive);
            let variant = if positive { "positive" } else { "negative" };
            let func = format!("{}_{variant}", rule.name().replace('-', "_"));
            let _ = writeln!(
                out,
                "{base:#x} {:#x} {func}|selftest/{}.rs:{}",
                base + 0x100,
                rule.name(),
                if positive { 10 } else { 40 }
            );
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleCheck {
    pub rule: RuleId,
    pub positive_findings: usize,
    pub negative_findings: usize,
}

impl RuleCheck {
    pub fn passed(&self) -> bool {
        self.positive_findings >= 1 && self.negative_findings == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelftestReport {
    pub checks: Vec<RuleCheck>,
    /// Rules that fired on the combined corpus.
    pub corpus_rules: BTreeSet<RuleId>,
    pub corpus_events: usize,
    pub corpus_compact_events: usize,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(RuleCheck::passed) && self.corpus_rules.len() == RuleId::ALL.len()
    }

    pub fn compact_ratio(&self) -> f64 {
        if self.corpus_events == 0 {
            0.0
        } else {
            self.corpus_compact_events as f64 / self.corpus_events as f64
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{} {:<17} positive={} negative={}",
                if c.passed() { "PASS" } else { "FAIL" },
                c.rule.name(),
                c.positive_findings,
                c.negative_findings
            );
        }
        let _ = writeln!(
            out,
            "{} corpus: {}/{} rules fired, {} events, {:.1}% compact",
            if self.corpus_rules.len() == RuleId::ALL.len() {
                "PASS"
            } else {
                "FAIL"
            },
            self.corpus_rules.len(),
            RuleId::ALL.len(),
            self.corpus_events,
            self.compact_ratio() * 100.0
        );
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SelftestError {
    #[error(transparent)]
    Logger(#[from] LoggerError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

fn findings_of(bytes: &[u8], rule: RuleId, cfg: &RuleConfig) -> Result<usize, SelftestError> {
    let db = TraceDb::from_bytes(bytes)?;
    Ok(evaluate(rule, &db.reconstruct_instances(), cfg).len())
}

/// Runs the positive/negative matrix and the combined corpus.
pub fn selftest(buffer_capacity: usize, cfg: &RuleConfig) -> Result<SelftestReport, SelftestError> {
    let mut checks = Vec::new();
    for rule in RuleId::ALL {
        let pos = record(buffer_capacity, |h| run_rule_program(h, rule, true))?;
        let neg = record(buffer_capacity, |h| run_rule_program(h, rule, false))?;
        checks.push(RuleCheck {
            rule,
            positive_findings: findings_of(&pos, rule, cfg)?,
            negative_findings: findings_of(&neg, rule, cfg)?,
        });
    }
    let corpus = record(buffer_capacity, full_corpus)?;
    let (header, cmds) = decode_stream(&corpus)?;
    let corpus_events = cmds.iter().filter(|c| c.is_event()).count();
    let corpus_compact_events = cmds
        .iter()
        .filter(|c| matches!(c, LogCommand::CompactEvent(_)))
        .count();
    let db = TraceDb::build(&header, &cmds);
    let corpus_rules = run_all(&db.reconstruct_instances(), cfg)
        .into_iter()
        .map(|f| f.rule)
        .collect();
    Ok(SelftestReport {
        checks,
        corpus_rules,
        corpus_events,
        corpus_compact_events,
    })
}
