//! Acceptance gate: one PASS/FAIL line per criterion.

mod common;

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use perfsan::corpus::{full_corpus, record, run_rule_program};
use perfsan::logger::{FixedFrames, Logger, ManualClock, SharedBuffer, Tracer};
use perfsan::report::{histogram, pow2_bucket, render_findings, HistogramKind};
use perfsan::rules::{evaluate, run_all, RuleConfig, RuleId};
use perfsan::shims::{GrowableArray, HashedMap};
use perfsan::symbols::SymbolMap;
use perfsan::tracedb::TraceDb;
use perfsan::vocab::MethodKind;
use perfsan::wirefmt::{decode_stream, encode_stream, LogCommand, LogHeader};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use common::{by_site, raw_lives, RawLife};

const BUFFER: usize = 64 * 1024;

fn within(limit: Duration, start: Instant) {
    let took = start.elapsed();
    assert!(took < limit, "took {took:?}, limit {limit:?}");
}

fn growth_arithmetic() {
    let start = Instant::now();
    let bytes = record(BUFFER, |h| {
        let _s = h.site(1);
        let mut v = GrowableArray::new(&h.tracer);
        for i in 0..10u32 {
            v.push_back(i);
        }
    })
    .unwrap();
    let db = TraceDb::from_bytes(&bytes).unwrap();
    let t = db.reconstruct_instances();
    assert_eq!(t.len(), 1);
    assert_eq!(t[0].allocations, 5, "allocation events");
    assert_eq!(t[0].count(MethodKind::Realloc), 4, "realloc events");
    let caps: Vec<u32> = t[0]
        .events
        .iter()
        .filter(|e| e.method == MethodKind::Realloc)
        .map(|e| e.a)
        .collect();
    assert_eq!(caps, [2, 4, 8, 16]);

    let bytes = record(BUFFER, |h| {
        let _s = h.site(1);
        let mut v = GrowableArray::new(&h.tracer);
        v.reserve(10);
        for i in 0..10u32 {
            v.push_back(i);
        }
    })
    .unwrap();
    let t = TraceDb::from_bytes(&bytes).unwrap().reconstruct_instances();
    assert_eq!(t[0].count(MethodKind::Realloc), 0);
    assert_eq!(t[0].allocations, 1);
    within(Duration::from_secs(1), start);
}

/// (method, a, b) rows of the dump listing.
fn dump_rows(text: &str) -> Vec<(String, u32, u32)> {
    text.lines()
        .filter(|l| l.contains("::"))
        .map(|l| {
            let (name, rest) = l.split_once("  ").unwrap();
            let method = name.trim().rsplit("::").next().unwrap().to_owned();
            let inner = rest.trim().trim_start_matches('[');
            let nums: Vec<u32> = inner
                .split(']')
                .next()
                .unwrap()
                .split(", ")
                .map(|n| n.parse().unwrap())
                .collect();
            (method, nums[0], nums[1])
        })
        .collect()
}

fn fig2_vector() {
    let bytes = record(BUFFER, |h| {
        let _s = h.site(1);
        let mut v = GrowableArray::from_elem(&h.tracer, 3, 0u32);
        for i in 0..12 {
            v.push_back(i);
        }
    })
    .unwrap();
    let dump = TraceDb::from_bytes(&bytes).unwrap().dump();
    assert!(dump.starts_with("Instance 0x"), "{dump}");
    let rows = dump_rows(&dump);
    assert_eq!(rows[0], ("ctor".into(), 3, 3));
    let mut push = 0;
    let mut growth = Vec::new();
    let mut caps = vec![3];
    for (method, a, b) in &rows[1..] {
        match method.as_str() {
            "push_back" => {
                push += 1;
                assert_eq!(*a, 3 + push, "size after push {push}");
                assert_eq!(b, caps.last().unwrap(), "capacity after push {push}");
            }
            "realloc" => {
                growth.push(push + 1);
                caps.push(*a);
            }
            "dtor" => {}
            other => panic!("unexpected {other}"),
        }
    }
    assert_eq!(push, 12);
    assert_eq!(caps, [3, 6, 12, 24]);
    assert_eq!(growth, [1, 4, 10], "growth at 1-based push indices");
}

fn compact_ratio() {
    let start = Instant::now();
    let bytes = record(BUFFER, full_corpus).unwrap();
    let (_, cmds) = decode_stream(&bytes).unwrap();
    let events = cmds.iter().filter(|c| c.is_event()).count();
    let compact = cmds
        .iter()
        .filter(|c| matches!(c, LogCommand::CompactEvent(_)))
        .count();
    assert!(events >= 10_000, "{events} events");
    let ratio = compact as f64 / events as f64;
    assert!(ratio >= 0.9, "compact ratio {ratio}");
    within(Duration::from_secs(5), start);
}

fn wire_roundtrip() {
    let config = Config {
        cases: 10_000,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(
        config.clone(),
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    runner
        .run(
            &(common::command_stream(), 1u64..=u64::MAX),
            |(cmds, rate)| {
                let header = LogHeader::new(rate);
                let bytes = encode_stream(&header, &cmds).unwrap();
                let (h2, decoded) = decode_stream(&bytes).unwrap();
                prop_assert_eq!(h2, header);
                prop_assert_eq!(&decoded, &cmds);
                prop_assert_eq!(encode_stream(&h2, &decoded).unwrap(), bytes);
                Ok(())
            },
        )
        .unwrap();

    let mut runner = TestRunner::new_with_rng(
        config.clone(),
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    runner
        .run(&prop::collection::vec(any::<u8>(), 0..512), |bytes| {
            let _ = decode_stream(&bytes);
            let mut framed = LogHeader::new(1).to_bytes().to_vec();
            framed.extend(&bytes);
            let _ = decode_stream(&framed);
            Ok(())
        })
        .unwrap();

    let mut runner =
        TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner
        .run(
            &(
                common::command_stream(),
                any::<prop::sample::Index>(),
                any::<u8>(),
            ),
            |(cmds, at, flip)| {
                let mut bytes = encode_stream(&LogHeader::new(1), &cmds).unwrap();
                let i = at.index(bytes.len());
                bytes[i] ^= flip;
                let _ = decode_stream(&bytes);
                Ok(())
            },
        )
        .unwrap();
}

fn epoch_splitting() {
    let bytes = record(BUFFER, |h| {
        for i in 0..3u32 {
            let _s = h.site(1 + u64::from(i));
            let mut v = GrowableArray::new(&h.tracer);
            v.push_back(i);
            h.work(10);
        }
    })
    .unwrap();
    let (header, cmds) = decode_stream(&bytes).unwrap();
    let total = cmds.iter().filter(|c| c.is_event()).count();
    let db = TraceDb::build(&header, &cmds);
    let t = db.reconstruct_instances();
    assert_eq!(t.len(), 3);
    assert!(t.iter().all(|x| x.address == t[0].address));
    assert_eq!(t.iter().map(|x| x.epoch).collect::<Vec<_>>(), [0, 1, 2]);
    assert!(t.iter().all(|x| x.is_completed() && !x.anomalous));
    assert_eq!(t.iter().map(|x| x.events.len()).sum::<usize>(), total);
    assert_eq!(db.dump().matches("Instance 0x").count(), 3);
}

fn rule_soundness() {
    let start = Instant::now();
    let cfg = RuleConfig::default();
    let mut failures = Vec::new();
    for rule in RuleId::ALL {
        for positive in [true, false] {
            let bytes = record(BUFFER, |h| run_rule_program(h, rule, positive)).unwrap();
            let t = TraceDb::from_bytes(&bytes).unwrap().reconstruct_instances();
            let n = evaluate(rule, &t, &cfg).len();
            if positive != (n >= 1) {
                failures.push(format!(
                    "{} {}: {n} findings",
                    rule.name(),
                    if positive { "positive" } else { "negative" }
                ));
            }
        }
    }
    assert!(failures.is_empty(), "{failures:?}");
    within(Duration::from_secs(10), start);
}

fn double_lookups(l: &RawLife) -> u64 {
    let lookup = |m: &str| matches!(m, "count" | "find" | "subscript");
    l.events
        .windows(2)
        .filter(|w| {
            matches!(w[0].method.as_str(), "count" | "find")
                && lookup(&w[1].method)
                && w[0].a == w[1].a
        })
        .count() as u64
}

fn aggregation_oracle() {
    let cfg = RuleConfig::default();
    let bytes = record(BUFFER, |h| {
        full_corpus(h);
        let _s = h.site(7);
        let mut m: HashedMap<u32, u32> = HashedMap::new(&h.tracer);
        for k in 0..50u32 {
            if m.get(&(k % 5)).is_some() {
                *m.entry_or_default(k % 5) += 1;
            } else {
                m.insert(k % 5, 0);
            }
        }
    })
    .unwrap();
    let (header, cmds) = decode_stream(&bytes).unwrap();
    let lives = raw_lives(&cmds);
    let timelines = TraceDb::build(&header, &cmds).reconstruct_instances();
    let actual = |rule| -> BTreeMap<(u32, String), u64> {
        evaluate(rule, &timelines, &cfg)
            .into_iter()
            .map(|f| ((f.site, f.class_name), f.aggregate))
            .collect()
    };

    let growable = |l: &RawLife| l.class == "vector" || l.class == "string";
    let expected = by_site(&lives, |l| {
        let n = l.count("realloc") as u64;
        if growable(l) && n >= 2 {
            n
        } else {
            0
        }
    });
    assert!(!expected.is_empty());
    assert_eq!(actual(RuleId::GrowthRealloc), expected, "growth-realloc");

    let mut expected = by_site(&lives, |l| {
        if l.class != "vector" {
            return 0;
        }
        l.events
            .iter()
            .filter(|e| e.method == "insert")
            .map(|e| u64::from(e.c))
            .sum()
    });
    expected.retain(|_, v| *v >= cfg.data_shift_min);
    assert!(!expected.is_empty());
    assert_eq!(actual(RuleId::DataShift), expected, "data-shift");

    let expected = by_site(&lives, |l| {
        if l.class != "vector" {
            return 0;
        }
        l.events
            .iter()
            .filter(|e| e.method == "push_back" && e.c == 1)
            .count() as u64
    });
    assert!(!expected.is_empty());
    assert_eq!(actual(RuleId::PushBackCopy), expected, "push-back-copy");

    let expected = by_site(&lives, |l| {
        if l.class == "map" || l.class == "unordered_map" {
            double_lookups(l)
        } else {
            0
        }
    });
    assert!(expected.len() >= 2, "{expected:?}");
    assert_eq!(actual(RuleId::DoubleLookup), expected, "double-lookup");
}

fn ordering_log() -> Vec<u8> {
    record(BUFFER, |h| {
        {
            let _s = h.site(1);
            let mut v: GrowableArray<String> = GrowableArray::new(&h.tracer);
            v.reserve(64);
            for i in 0..50 {
                v.push_back_copy(&i.to_string());
            }
            h.work(5_000);
        }
        {
            let _s = h.site(2);
            let mut m: HashedMap<u32, u32> = HashedMap::new(&h.tracer);
            for k in 0..10u32 {
                let _s = h.site(3);
                if !m.contains_key(&k) {
                    *m.entry_or_default(k) += 1;
                }
            }
            h.work(5_000);
        }
        {
            let _s = h.site(4);
            let mut v = GrowableArray::with_capacity(&h.tracer, 5);
            for i in 0..40u32 {
                v.push_back(i);
            }
            h.work(5_000);
        }
    })
    .unwrap()
}

fn report_ordering() {
    let render = || {
        let db = TraceDb::from_bytes(&ordering_log()).unwrap();
        let findings = run_all(&db.reconstruct_instances(), &RuleConfig::default());
        let sev: Vec<(RuleId, u64)> = findings.iter().map(|f| (f.rule, f.severity)).collect();
        assert_eq!(
            sev,
            [
                (RuleId::PushBackCopy, 50),
                (RuleId::DoubleLookup, 10),
                (RuleId::GrowthRealloc, 3)
            ]
        );
        render_findings(&findings, &db, &SymbolMap::default(), 20)
    };
    let first = render();
    let heads: Vec<&str> = first.lines().filter(|l| l.contains("(total")).collect();
    assert_eq!(heads.len(), 3);
    assert!(heads[0].contains("(total 50 copies)"), "{first}");
    assert!(heads[1].contains("(total 10 repeated lookups)"), "{first}");
    assert!(heads[2].contains("(total 3 reallocations)"), "{first}");
    assert_eq!(first, render(), "byte-identical across runs");
}

fn histogram_conservation() {
    let bytes = record(BUFFER, full_corpus).unwrap();
    let (header, cmds) = decode_stream(&bytes).unwrap();
    let lives = raw_lives(&cmds);
    let timelines = TraceDb::build(&header, &cmds).reconstruct_instances();
    let complete = |l: &&RawLife| l.starts_with_ctor() && l.dtor().is_some();
    for kind in HistogramKind::ALL {
        let eligible: Vec<&RawLife> = match kind {
            HistogramKind::Size => lives
                .iter()
                .filter(complete)
                .filter(|l| l.class == "vector" || l.class == "string")
                .collect(),
            HistogramKind::Lifetime => lives.iter().filter(complete).collect(),
            HistogramKind::Refcount => lives
                .iter()
                .filter(|l| l.class == "shared_ptr" && l.starts_with_ctor())
                .collect(),
            HistogramKind::StringDup => lives
                .iter()
                .filter(complete)
                .filter(|l| l.class == "string" && l.dtor().unwrap().a > 0)
                .collect(),
        };
        let h = histogram(&timelines, kind);
        assert!(!eligible.is_empty(), "{}", kind.name());
        assert_eq!(h.total(), eligible.len() as u64, "{}", kind.name());
        if kind == HistogramKind::Size {
            let mut tally: BTreeMap<(u64, String), u64> = BTreeMap::new();
            for l in &eligible {
                let n = u64::from(l.dtor().unwrap().a);
                let ub = if n == 0 { 0 } else { n.next_power_of_two() };
                *tally.entry((ub, l.class.clone())).or_default() += 1;
            }
            let got: BTreeMap<(u64, String), u64> = h
                .rows
                .iter()
                .map(|r| ((r.key, r.class.clone()), r.count))
                .collect();
            assert_eq!(got, tally);
            assert!(h.rows.iter().all(|r| pow2_bucket(r.key).1 == r.bucket));
        }
    }
}

fn transparency() {
    const OPS: usize = 100_000;
    let sink = SharedBuffer::new();
    let logger = Logger::builder()
        .clock(Arc::new(ManualClock::new(0, 1)))
        .frames(Arc::new(FixedFrames(vec![0x40_1000, 0x40_2000])))
        .writer(sink.clone())
        .unwrap();
    let logger = Arc::new(logger);
    let on = Tracer::new(logger.clone());
    let off = Tracer::disabled();
    type Driver = fn(&Tracer, u64, usize) -> u64;
    let drivers: [(&str, Driver); 5] = [
        ("array", common::differential::array),
        ("text", common::differential::text),
        ("ordered_map", common::differential::ordered_map),
        ("hashed_map", common::differential::hashed_map),
        ("shared", common::differential::shared),
    ];
    for (seed, (name, drive)) in drivers.into_iter().enumerate() {
        let seed = seed as u64 + 1;
        assert_eq!(drive(&on, seed, OPS), drive(&off, seed, OPS), "{name}");
    }
    logger.flush().unwrap();
    assert!(!logger.failed());
    let (_, cmds) = decode_stream(&sink.contents()).unwrap();
    assert!(cmds.iter().filter(|c| c.is_event()).count() > OPS);
}

fn main() -> ExitCode {
    let criteria: [(&str, fn()); 10] = [
        (
            "growth arithmetic: 5 allocations, 4 reallocs; none after reserve",
            growth_arithmetic,
        ),
        (
            "single-vector listing: capacity 3 -> 6 -> 12 -> 24 at pushes 1, 4, 10",
            fig2_vector,
        ),
        (
            "compact ratio >= 90% over >= 10,000 corpus events",
            compact_ratio,
        ),
        (
            "wire roundtrip (10,000 cases) and decoder totality",
            wire_roundtrip,
        ),
        (
            "epoch splitting: 3 lifetimes at one address",
            epoch_splitting,
        ),
        (
            "rule soundness: 13 positive / 13 negative programs",
            rule_soundness,
        ),
        (
            "aggregation oracle for growth, shift, copy, double lookup",
            aggregation_oracle,
        ),
        ("report ordering 50/10/3 and determinism", report_ordering),
        (
            "histogram conservation against brute-force tally",
            histogram_conservation,
        ),
        (
            "transparency: 100,000 ops per shim, logging on and off",
            transparency,
        ),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(()) => println!("PASS {:>2} {name} ({secs:.2}s)", i + 1),
            Err(e) => {
                failed += 1;
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("FAIL {:>2} {name} ({secs:.2}s): {msg}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
