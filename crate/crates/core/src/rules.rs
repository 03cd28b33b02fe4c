//! Anti-pattern catalog. Each rule is a pure function of the instance
//! timelines and a [`RuleConfig`]; findings are aggregated by the trace id
//! of the event that created the instance.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::tracedb::InstanceTimeline;
use crate::vocab::{ClassKind, MethodKind, INLINE_TEXT_BYTES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RuleId {
    ShortLifetime = 1,
    GrowthRealloc = 2,
    DataShift = 3,
    PushBackCopy = 4,
    ShrinkToFit = 5,
    ValueCopy = 6,
    SmallVector = 7,
    UniqueShared = 8,
    DuplicateString = 9,
    UnorderedMapSuggestion = 10,
    DoubleLookup = 11,
    UnusedInstance = 12,
    HighRefcount = 13,
}

impl RuleId {
    pub const ALL: [RuleId; 13] = [
        RuleId::ShortLifetime,
        RuleId::GrowthRealloc,
        RuleId::DataShift,
        RuleId::PushBackCopy,
        RuleId::ShrinkToFit,
        RuleId::ValueCopy,
        RuleId::SmallVector,
        RuleId::UniqueShared,
        RuleId::DuplicateString,
        RuleId::UnorderedMapSuggestion,
        RuleId::DoubleLookup,
        RuleId::UnusedInstance,
        RuleId::HighRefcount,
    ];

    pub fn number(self) -> u8 {
        self as u8
    }

    /// Stable name used on the command line.
    pub fn name(self) -> &'static str {
        match self {
            RuleId::ShortLifetime => "short-lifetime",
            RuleId::GrowthRealloc => "growth-realloc",
            RuleId::DataShift => "data-shift",
            RuleId::PushBackCopy => "push-back-copy",
            RuleId::ShrinkToFit => "shrink-to-fit",
            RuleId::ValueCopy => "value-copy",
            RuleId::SmallVector => "small-vector",
            RuleId::UniqueShared => "unique-shared",
            RuleId::DuplicateString => "duplicate-string",
            RuleId::UnorderedMapSuggestion => "unordered-map",
            RuleId::DoubleLookup => "double-lookup",
            RuleId::UnusedInstance => "unused-instance",
            RuleId::HighRefcount => "high-refcount",
        }
    }

    pub fn description(self, class: &str) -> String {
        match self {
            RuleId::ShortLifetime => format!("Short-lived {class} objects"),
            RuleId::GrowthRealloc => format!("Repeatedly growing a {class}"),
            RuleId::DataShift => format!("Inserting into the low part of a {class}"),
            RuleId::PushBackCopy => format!("Copying elements into a {class} with push_back"),
            RuleId::ShrinkToFit => format!("Destroying a {class} with unused capacity"),
            RuleId::ValueCopy => format!("Copying a {class} by value"),
            RuleId::SmallVector => format!("A {class} that always stays small"),
            RuleId::UniqueShared => "Shared pointer that is never shared".to_owned(),
            RuleId::DuplicateString => "Same string content stored many times".to_owned(),
            RuleId::UnorderedMapSuggestion => {
                "Map instance is not used as an ordered container".to_owned()
            }
            RuleId::DoubleLookup => format!("Looking up the same key twice in a {class}"),
            RuleId::UnusedInstance => format!("A {class} constructed and never used"),
            RuleId::HighRefcount => "Shared pointer with a very high reference count".to_owned(),
        }
    }

    /// Noun for the aggregate metric.
    pub fn unit(self) -> &'static str {
        match self {
            RuleId::ShortLifetime => "short-lived objects",
            RuleId::GrowthRealloc => "reallocations",
            RuleId::DataShift => "shifted elements",
            RuleId::PushBackCopy | RuleId::ValueCopy => "copies",
            RuleId::ShrinkToFit => "unused slots",
            RuleId::SmallVector | RuleId::UniqueShared | RuleId::UnusedInstance => "instances",
            RuleId::DuplicateString => "duplicates",
            RuleId::UnorderedMapSuggestion => "unordered uses",
            RuleId::DoubleLookup => "repeated lookups",
            RuleId::HighRefcount => "references",
        }
    }

    pub fn recommendation(self, class: &str) -> String {
        match self {
            RuleId::ShortLifetime => {
                format!("Consider reusing the {class} instead of creating temporaries")
            }
            RuleId::GrowthRealloc => {
                format!("Consider reserving space when the {class} is constructed")
            }
            RuleId::DataShift => {
                "Consider appending and reversing, or a container with cheap front insertion"
                    .to_owned()
            }
            RuleId::PushBackCopy => "Consider using emplace_back or moving the element".to_owned(),
            RuleId::ShrinkToFit => {
                format!("Consider calling shrink_to_fit once the {class} is fully built")
            }
            RuleId::ValueCopy => format!("Consider passing the {class} by reference or moving it"),
            RuleId::SmallVector => {
                "Consider a small vector with inline storage for the common size".to_owned()
            }
            RuleId::UniqueShared => "Consider using a unique pointer instead".to_owned(),
            RuleId::DuplicateString => "Consider interning or sharing the string".to_owned(),
            RuleId::UnorderedMapSuggestion => {
                "Consider using std::unordered_map instead".to_owned()
            }
            RuleId::DoubleLookup => {
                "Consider reusing the iterator returned by find instead of a second lookup"
                    .to_owned()
            }
            RuleId::UnusedInstance => format!("Consider removing the unused {class}"),
            RuleId::HighRefcount => {
                "Consider passing the shared pointer by reference to avoid count updates".to_owned()
            }
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
    #[error("rule threshold `{0}` must be positive")]
    ZeroThreshold(&'static str),
}

impl FromStr for RuleId {
    type Err = RuleError;

    fn from_str(s: &str) -> Result<Self, RuleError> {
        let s = s.trim();
        RuleId::ALL
            .into_iter()
            .find(|r| r.name() == s || s.parse::<u8>().ok() == Some(r.number()))
            .ok_or_else(|| RuleError::UnknownRule(s.to_owned()))
    }
}

/// Parses a comma-separated rule list.
pub fn parse_rule_list(list: &str) -> Result<Vec<RuleId>, RuleError> {
    let mut out: Vec<RuleId> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_, _>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleConfig {
    /// Lifetimes strictly below this many ticks are short.
    pub short_lifetime_ticks: u64,
    pub small_vector_max: u64,
    /// Minimum capacity − size at destruction (also required ≥ 2 × size).
    pub shrink_waste_min: u64,
    pub duplicate_string_min: u64,
    pub high_refcount_min: u64,
    /// How many following events a lookup is compared against.
    pub double_lookup_window: usize,
    pub data_shift_min: u64,
    pub min_instances_per_finding: u64,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self {
            short_lifetime_ticks: 1000,
            small_vector_max: 16,
            shrink_waste_min: 16,
            duplicate_string_min: 100,
            high_refcount_min: 100,
            double_lookup_window: 1,
            data_shift_min: 1000,
            min_instances_per_finding: 1,
        }
    }
}

impl RuleConfig {
    pub fn validate(&self) -> Result<(), RuleError> {
        let checks = [
            ("short_lifetime_ticks", self.short_lifetime_ticks),
            ("small_vector_max", self.small_vector_max),
            ("shrink_waste_min", self.shrink_waste_min),
            ("duplicate_string_min", self.duplicate_string_min),
            ("high_refcount_min", self.high_refcount_min),
            ("double_lookup_window", self.double_lookup_window as u64),
            ("data_shift_min", self.data_shift_min),
            ("min_instances_per_finding", self.min_instances_per_finding),
        ];
        match checks.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(RuleError::ZeroThreshold(name)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub rule: RuleId,
    /// Trace id of the representative creation site.
    pub site: u32,
    pub class_name: String,
    pub instance_count: u64,
    /// Rule-specific total (reallocations, copies, shifted elements, ...).
    pub aggregate: u64,
    pub severity: u64,
    /// Up to three trace ids worth showing, the site first.
    pub samples: Vec<u32>,
}

pub const MAX_SAMPLES: usize = 3;

#[derive(Default)]
struct SiteAcc {
    instances: u64,
    aggregate: u64,
    samples: Vec<u32>,
}

impl SiteAcc {
    fn sample(&mut self, trace: u32) {
        if self.samples.len() < MAX_SAMPLES && !self.samples.contains(&trace) {
            self.samples.push(trace);
        }
    }
}

/// Per-(site, class) accumulator.
#[derive(Default)]
struct Sites(BTreeMap<(u32, String), SiteAcc>);

impl Sites {
    fn add(&mut self, t: &InstanceTimeline, amount: u64, extra: impl IntoIterator<Item = u32>) {
        let acc = self.0.entry((t.site(), t.class_name.clone())).or_default();
        acc.instances += 1;
        acc.aggregate += amount;
        acc.sample(t.site());
        for tr in extra {
            acc.sample(tr);
        }
    }

    fn into_findings(self, rule: RuleId) -> Vec<Finding> {
        self.0
            .into_iter()
            .filter(|(_, acc)| acc.aggregate > 0)
            .map(|((site, class_name), acc)| Finding {
                rule,
                site,
                class_name,
                instance_count: acc.instances,
                aggregate: acc.aggregate,
                severity: acc.aggregate,
                samples: acc.samples,
            })
            .collect()
    }
}

fn traces_of(t: &InstanceTimeline, method: MethodKind) -> impl Iterator<Item = u32> + '_ {
    t.events
        .iter()
        .filter(move |e| e.method == method)
        .map(|e| e.trace_id)
}

fn is_growable(c: ClassKind) -> bool {
    matches!(c, ClassKind::Vector | ClassKind::String)
}

/// Number of lookups followed within `window` events by a lookup of the
/// same key hash.
pub fn double_lookup_pairs(t: &InstanceTimeline, window: usize) -> Vec<(usize, usize)> {
    let ev = &t.events;
    let mut pairs = Vec::new();
    for i in 0..ev.len() {
        if !matches!(ev[i].method, MethodKind::Count | MethodKind::Find) {
            continue;
        }
        let hit = (i + 1..ev.len().min(i + 1 + window))
            .find(|&j| ev[j].method.is_lookup() && ev[j].a == ev[i].a);
        if let Some(j) = hit {
            pairs.push((i, j));
        }
    }
    pairs
}

/// Applies one rule. Output is sorted by severity (descending) then site.
pub fn evaluate(rule: RuleId, timelines: &[InstanceTimeline], cfg: &RuleConfig) -> Vec<Finding> {
    let mut sites = Sites::default();
    let mut findings = match rule {
        RuleId::ShortLifetime => {
            for t in timelines {
                if !t.anomalous
                    && t.allocated()
                    && t.lifetime().is_some_and(|l| l < cfg.short_lifetime_ticks)
                {
                    sites.add(t, 1, []);
                }
            }
            sites.into_findings(rule)
        }
        RuleId::GrowthRealloc => {
            for t in timelines.iter().filter(|t| is_growable(t.class)) {
                if t.realloc_count >= 2 {
                    sites.add(t, t.realloc_count, traces_of(t, MethodKind::Realloc));
                }
            }
            sites.into_findings(rule)
        }
        RuleId::DataShift => {
            for t in timelines.iter().filter(|t| t.class == ClassKind::Vector) {
                let shifted: u64 = t
                    .events
                    .iter()
                    .filter(|e| e.method == MethodKind::Insert)
                    .map(|e| u64::from(e.c))
                    .sum();
                if shifted > 0 {
                    let traces = t
                        .events
                        .iter()
                        .filter(|e| e.method == MethodKind::Insert && e.c > 0)
                        .map(|e| e.trace_id);
                    sites.add(t, shifted, traces);
                }
            }
            let mut f = sites.into_findings(rule);
            f.retain(|f| f.aggregate >= cfg.data_shift_min);
            f
        }
        RuleId::PushBackCopy => {
            for t in timelines.iter().filter(|t| t.class == ClassKind::Vector) {
                let copies = t
                    .events
                    .iter()
                    .filter(|e| e.method == MethodKind::PushBack && e.c == 1);
                let n = copies.clone().count() as u64;
                if n > 0 {
                    sites.add(t, n, copies.map(|e| e.trace_id));
                }
            }
            sites.into_findings(rule)
        }
        RuleId::ShrinkToFit => {
            for t in timelines.iter().filter(|t| t.class == ClassKind::Vector) {
                let Some(d) = t.dtor() else { continue };
                let (size, cap) = (u64::from(d.a), u64::from(d.b));
                let waste = cap.saturating_sub(size);
                if waste >= cfg.shrink_waste_min && waste >= 2 * size {
                    sites.add(t, waste, []);
                }
            }
            sites.into_findings(rule)
        }
        RuleId::ValueCopy => {
            for t in timelines.iter().filter(|t| t.class.is_container()) {
                let threshold = if t.class == ClassKind::String {
                    INLINE_TEXT_BYTES as u32
                } else {
                    0
                };
                let copies = t
                    .events
                    .iter()
                    .filter(|e| e.method == MethodKind::CopyCtor && e.a > threshold)
                    .count() as u64;
                if copies > 0 {
                    sites.add(t, copies, []);
                }
            }
            sites.into_findings(rule)
        }
        RuleId::SmallVector => {
            let mut by_site: BTreeMap<(u32, &str), Vec<&InstanceTimeline>> = BTreeMap::new();
            for t in timelines
                .iter()
                .filter(|t| t.class == ClassKind::Vector && t.is_completed() && !t.anomalous)
            {
                by_site
                    .entry((t.site(), &t.class_name))
                    .or_default()
                    .push(t);
            }
            for group in by_site.values() {
                if group
                    .iter()
                    .all(|t| t.max_size <= cfg.small_vector_max && t.allocated())
                {
                    for t in group {
                        sites.add(t, 1, []);
                    }
                }
            }
            sites.into_findings(rule)
        }
        RuleId::UniqueShared => {
            for t in timelines.iter().filter(|t| t.class == ClassKind::SharedPtr) {
                if !t.anomalous && t.max_refcount == 1 {
                    sites.add(t, 1, []);
                }
            }
            sites.into_findings(rule)
        }
        RuleId::DuplicateString => {
            let mut groups: HashMap<u32, Vec<&InstanceTimeline>> = HashMap::new();
            let mut order = Vec::new();
            for t in timelines.iter().filter(|t| t.class == ClassKind::String) {
                if let Some(d) = t.dtor().filter(|d| d.a > 0) {
                    let g = groups.entry(d.c).or_default();
                    if g.is_empty() {
                        order.push(d.c);
                    }
                    g.push(t);
                }
            }
            order
                .into_iter()
                .filter_map(|hash| {
                    let g = &groups[&hash];
                    let n = g.len() as u64;
                    if n < cfg.duplicate_string_min {
                        return None;
                    }
                    let mut samples = Vec::new();
                    for t in g {
                        if samples.len() < MAX_SAMPLES && !samples.contains(&t.site()) {
                            samples.push(t.site());
                        }
                    }
                    Some(Finding {
                        rule,
                        site: g[0].site(),
                        class_name: g[0].class_name.clone(),
                        instance_count: n,
                        aggregate: n,
                        severity: n,
                        samples,
                    })
                })
                .collect()
        }
        RuleId::UnorderedMapSuggestion => {
            for t in timelines.iter().filter(|t| t.class == ClassKind::Map) {
                let used = t
                    .events
                    .iter()
                    .any(|e| e.method.is_lookup() || e.method == MethodKind::Insert);
                if used && t.count(MethodKind::IterOrdered) == 0 {
                    sites.add(t, 1, []);
                }
            }
            sites.into_findings(rule)
        }
        RuleId::DoubleLookup => {
            for t in timelines.iter().filter(|t| t.class.is_map()) {
                let pairs = double_lookup_pairs(t, cfg.double_lookup_window);
                if !pairs.is_empty() {
                    let traces: Vec<u32> =
                        pairs.iter().map(|&(_, j)| t.events[j].trace_id).collect();
                    sites.add(t, pairs.len() as u64, traces);
                }
            }
            sites.into_findings(rule)
        }
        RuleId::UnusedInstance => {
            for t in timelines.iter().filter(|t| t.class != ClassKind::SharedPtr) {
                let kinds: Vec<MethodKind> = t.events.iter().map(|e| e.method).collect();
                if kinds == [MethodKind::Ctor, MethodKind::Dtor] {
                    sites.add(t, 1, []);
                }
            }
            sites.into_findings(rule)
        }
        RuleId::HighRefcount => {
            for t in timelines.iter().filter(|t| t.class == ClassKind::SharedPtr) {
                if t.max_refcount >= cfg.high_refcount_min {
                    sites.add(t, t.max_refcount, traces_of(t, MethodKind::Incref));
                }
            }
            sites.into_findings(rule)
        }
    };
    findings.retain(|f| f.instance_count >= cfg.min_instances_per_finding && f.severity >= 1);
    findings.sort_by(|x, y| {
        y.severity
            .cmp(&x.severity)
            .then(x.site.cmp(&y.site))
            .then_with(|| x.class_name.cmp(&y.class_name))
    });
    findings
}

/// Evaluates a rule by its stable name.
pub fn evaluate_named(
    name: &str,
    timelines: &[InstanceTimeline],
    cfg: &RuleConfig,
) -> Result<Vec<Finding>, RuleError> {
    Ok(evaluate(name.parse()?, timelines, cfg))
}

/// Findings of the given rules, sorted by severity (descending), then rule
/// number, then site.
pub fn run_rules(
    rules: &[RuleId],
    timelines: &[InstanceTimeline],
    cfg: &RuleConfig,
) -> Vec<Finding> {
    let mut all: Vec<Finding> = rules
        .iter()
        .flat_map(|&r| evaluate(r, timelines, cfg))
        .collect();
    all.sort_by(|x, y| {
        y.severity
            .cmp(&x.severity)
            .then(x.rule.cmp(&y.rule))
            .then(x.site.cmp(&y.site))
            .then_with(|| x.class_name.cmp(&y.class_name))
    });
    all
}

pub fn run_all(timelines: &[InstanceTimeline], cfg: &RuleConfig) -> Vec<Finding> {
    run_rules(&RuleId::ALL, timelines, cfg)
}
