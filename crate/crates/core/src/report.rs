//! Text rendering of findings and the histogram families.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::rules::Finding;
use crate::symbols::{symbolize, SymbolMap};
use crate::tracedb::{InstanceTimeline, TraceDb};
use crate::vocab::ClassKind;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("unknown histogram kind `{0}` (expected size, lifetime, refcount or string-dup)")]
    UnknownKind(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// `177723` → `177,723`.
pub fn group_digits(n: u64) -> String {
    let s = n.to_string();
    let mut out = String::with_capacity(s.len() + s.len() / 3);
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

pub const NO_ISSUES: &str = "No issues detected.\n";

/// Renders up to `top_n` findings with symbolicated sample traces.
pub fn render_findings(
    findings: &[Finding],
    db: &TraceDb,
    symbols: &SymbolMap,
    top_n: usize,
) -> String {
    if findings.is_empty() || top_n == 0 {
        return NO_ISSUES.to_owned();
    }
    let mut out = String::new();
    for (i, f) in findings.iter().take(top_n).enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "** {} (total {} {}) in {} instances.",
            f.rule.description(&f.class_name),
            group_digits(f.aggregate),
            f.rule.unit(),
            group_digits(f.instance_count),
        );
        let _ = writeln!(out, "** {}.", f.rule.recommendation(&f.class_name));
        for &trace in &f.samples {
            out.push('\n');
            let _ = writeln!(out, "loc[0x{trace:03x}]:");
            let frames = db.resolve_trace(trace).unwrap_or_default();
            for (k, loc) in symbolize(&frames, symbols, &db.segments).iter().enumerate() {
                if loc.resolved.is_some() {
                    let _ = writeln!(out, "{k}) 0x{:x} {loc}", loc.frame);
                } else {
                    let _ = writeln!(out, "{k}) {loc}");
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HistogramKind {
    /// Element count at destruction, vectors and strings.
    Size,
    /// floor(log2(dtor − ctor ticks)), all classes.
    Lifetime,
    /// Maximum reference count per shared handle.
    Refcount,
    /// How many destroyed strings share each content hash.
    StringDup,
}

impl HistogramKind {
    pub const ALL: [HistogramKind; 4] = [
        HistogramKind::Size,
        HistogramKind::Lifetime,
        HistogramKind::Refcount,
        HistogramKind::StringDup,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HistogramKind::Size => "size",
            HistogramKind::Lifetime => "lifetime",
            HistogramKind::Refcount => "refcount",
            HistogramKind::StringDup => "string-dup",
        }
    }

    pub fn axis_label(self) -> &'static str {
        match self {
            HistogramKind::Size => "elements at destruction",
            HistogramKind::Lifetime => "lifetime, floor(log2(ticks))",
            HistogramKind::Refcount => "max reference count",
            HistogramKind::StringDup => "content repetitions",
        }
    }
}

impl FromStr for HistogramKind {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, ReportError> {
        HistogramKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ReportError::UnknownKind(s.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistogramRow {
    /// Numeric sort key of the bucket.
    pub key: u64,
    pub bucket: String,
    pub class: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    pub kind: HistogramKind,
    /// Sorted by bucket, then class.
    pub rows: Vec<HistogramRow>,
}

/// Power-of-two bucket: 0 alone, otherwise `(2^(k-1), 2^k]`.
pub fn pow2_bucket(n: u64) -> (u64, String) {
    match n {
        0 => (0, "0".to_owned()),
        1 => (1, "(0,1]".to_owned()),
        _ => {
            let ub = n.checked_next_power_of_two().unwrap_or(1 << 63);
            (ub, format!("({},{}]", ub / 2, ub))
        }
    }
}

/// floor(log2(n)), with 0 for n = 0.
pub fn log2_bucket(n: u64) -> u64 {
    if n == 0 {
        0
    } else {
        u64::from(63 - n.leading_zeros())
    }
}

fn completed(t: &InstanceTimeline) -> bool {
    t.is_completed() && !t.anomalous
}

pub fn histogram(timelines: &[InstanceTimeline], kind: HistogramKind) -> Histogram {
    let mut cells: BTreeMap<(u64, String), (String, u64)> = BTreeMap::new();
    let mut add = |(key, label): (u64, String), class: &str| {
        cells.entry((key, class.to_owned())).or_insert((label, 0)).1 += 1;
    };
    match kind {
        HistogramKind::Size => {
            for t in timelines.iter().filter(|t| {
                completed(t) && matches!(t.class, ClassKind::Vector | ClassKind::String)
            }) {
                add(pow2_bucket(u64::from(t.dtor().unwrap().a)), &t.class_name);
            }
        }
        HistogramKind::Lifetime => {
            for t in timelines.iter().filter(|t| completed(t)) {
                let b = log2_bucket(t.lifetime().unwrap());
                add((b, b.to_string()), &t.class_name);
            }
        }
        HistogramKind::Refcount => {
            for t in timelines
                .iter()
                .filter(|t| t.class == ClassKind::SharedPtr && !t.anomalous)
            {
                add(pow2_bucket(t.max_refcount), &t.class_name);
            }
        }
        HistogramKind::StringDup => {
            let eligible: Vec<&InstanceTimeline> = timelines
                .iter()
                .filter(|t| t.class == ClassKind::String && completed(t) && t.dtor().unwrap().a > 0)
                .collect();
            let mut per_hash: HashMap<u32, u64> = HashMap::new();
            for t in &eligible {
                *per_hash.entry(t.dtor().unwrap().c).or_default() += 1;
            }
            for t in eligible {
                let n = per_hash[&t.dtor().unwrap().c];
                add((n, n.to_string()), &t.class_name);
            }
        }
    }
    Histogram {
        kind,
        rows: cells
            .into_iter()
            .map(|((key, class), (bucket, count))| HistogramRow {
                key,
                bucket,
                class,
                count,
            })
            .collect(),
    }
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.rows.iter().map(|r| r.count).sum()
    }

    pub fn render_text(&self) -> String {
        let mut out = format!(
            "# {} histogram ({})\n",
            self.kind.name(),
            self.kind.axis_label()
        );
        if self.rows.is_empty() {
            out.push_str("(no eligible instances)\n");
            return out;
        }
        let max = self.rows.iter().map(|r| r.count).max().unwrap_or(1);
        let bw = self
            .rows
            .iter()
            .map(|r| r.bucket.len())
            .max()
            .unwrap_or(0)
            .max(6);
        let cw = self
            .rows
            .iter()
            .map(|r| r.class.len())
            .max()
            .unwrap_or(0)
            .max(5);
        let _ = writeln!(out, "{:<bw$}  {:<cw$}  {:>8}", "bucket", "class", "count");
        for r in &self.rows {
            let bar = "#".repeat(((r.count * 40).div_ceil(max)) as usize);
            let _ = writeln!(
                out,
                "{:<bw$}  {:<cw$}  {:>8}  {bar}",
                r.bucket, r.class, r.count
            );
        }
        out
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<(), ReportError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["bucket", "class", "count"])?;
        for r in &self.rows {
            wtr.write_record([r.bucket.as_str(), r.class.as_str(), &r.count.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory csv");
        String::from_utf8(buf).expect("csv of utf-8 fields")
    }
}

/// Writes `histogram` as CSV to `path`.
pub fn emit_csv(histogram: &Histogram, path: impl AsRef<Path>) -> Result<(), ReportError> {
    let file = std::fs::File::create(path)?;
    histogram.write_csv(io::BufWriter::new(file))
}
