//! Frame symbolication from a portable text symbol map.
//!
//! Each non-blank, non-`#` line reads
//!
//! ```text
//! <hex start> <hex end> <function>|<file>:<line>
//! ```
//!
//! and covers the half-open address range `[start, end)`.

use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::tracedb::CodeSegment;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolRange {
    pub start: u64,
    pub end: u64,
    pub function: String,
    pub file: String,
    pub line: u32,
    /// 1-based line in the source map file.
    pub source_line: usize,
}

#[derive(Debug, Error)]
pub enum SymbolError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {second}: range {second_range} overlaps {first_range} from line {first}")]
    Overlap {
        first: usize,
        first_range: String,
        second: usize,
        second_range: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolMap {
    ranges: Vec<SymbolRange>,
}

fn parse_hex(tok: &str) -> Option<u64> {
    let digits = tok
        .strip_prefix("0x")
        .or_else(|| tok.strip_prefix("0X"))
        .unwrap_or(tok);
    if digits.is_empty() {
        return None;
    }
    u64::from_str_radix(digits, 16).ok()
}

fn parse_line(text: &str, line: usize) -> Result<SymbolRange, SymbolError> {
    let bad = |reason: &str| SymbolError::Malformed {
        line,
        reason: reason.to_owned(),
    };
    let mut parts = text.splitn(3, char::is_whitespace);
    let start = parts
        .next()
        .and_then(parse_hex)
        .ok_or_else(|| bad("bad start address"))?;
    let end = parts
        .next()
        .and_then(parse_hex)
        .ok_or_else(|| bad("bad end address"))?;
    let rest = parts
        .next()
        .map(str::trim)
        .ok_or_else(|| bad("missing location"))?;
    let (function, loc) = rest
        .rsplit_once('|')
        .ok_or_else(|| bad("expected `function|file:line`"))?;
    let (file, line_no) = loc
        .rsplit_once(':')
        .ok_or_else(|| bad("expected `file:line`"))?;
    let line_no: u32 = line_no.trim().parse().map_err(|_| bad("bad line number"))?;
    if start >= end {
        return Err(bad("start must be below end"));
    }
    if function.trim().is_empty() {
        return Err(bad("empty function name"));
    }
    Ok(SymbolRange {
        start,
        end,
        function: function.trim().to_owned(),
        file: file.trim().to_owned(),
        line: line_no,
        source_line: line,
    })
}

impl SymbolMap {
    pub fn parse(text: &str) -> Result<SymbolMap, SymbolError> {
        let mut ranges = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            ranges.push(parse_line(trimmed, i + 1)?);
        }
        ranges.sort_by_key(|r| (r.start, r.end));
        for w in ranges.windows(2) {
            if w[1].start < w[0].end {
                let fmt_range =
                    |r: &SymbolRange| format!("[0x{:x}, 0x{:x}) {}", r.start, r.end, r.function);
                return Err(SymbolError::Overlap {
                    first: w[0].source_line,
                    first_range: fmt_range(&w[0]),
                    second: w[1].source_line,
                    second_range: fmt_range(&w[1]),
                });
            }
        }
        Ok(SymbolMap { ranges })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SymbolMap, SymbolError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn ranges(&self) -> &[SymbolRange] {
        &self.ranges
    }

    /// The range containing `addr`, if any.
    pub fn lookup(&self, addr: u64) -> Option<&SymbolRange> {
        let idx = self.ranges.partition_point(|r| r.start <= addr);
        let r = self.ranges.get(idx.checked_sub(1)?)?;
        (addr < r.end).then_some(r)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Location {
    pub frame: u64,
    /// `(function, file, line)` when a range contains the frame.
    pub resolved: Option<(String, String, u32)>,
    /// Outside every registered code segment.
    pub foreign: bool,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.resolved {
            Some((func, file, line)) => write!(f, "{func} ({file}:{line})")?,
            None => write!(f, "<unknown 0x{:x}>", self.frame)?,
        }
        if self.foreign {
            f.write_str(" [foreign]")?;
        }
        Ok(())
    }
}

/// Resolves frames by range containment. Segment tagging only applies when
/// at least one code segment was registered.
pub fn symbolize(frames: &[u64], map: &SymbolMap, segments: &[CodeSegment]) -> Vec<Location> {
    frames
        .iter()
        .map(|&frame| Location {
            frame,
            resolved: map
                .lookup(frame)
                .map(|r| (r.function.clone(), r.file.clone(), r.line)),
            foreign: !segments.is_empty() && !segments.iter().any(|s| s.contains(frame)),
        })
        .collect()
}
