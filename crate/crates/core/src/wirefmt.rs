//! The `.w1log` binary format.
//!
//! A log is a 16-byte header (`W1LOGv1\0` followed by the little-endian tick
//! rate) and then a stream of little-endian 64-bit words. Every command starts
//! with a word whose low 4 bits hold the opcode:
//!
//! | opcode | command             | words          |
//! |--------|---------------------|----------------|
//! | 1      | RegisterString      | 1 + ⌈len/8⌉    |
//! | 2      | RegisterTraceNode   | 2              |
//! | 3      | RegisterCodeSegment | 3              |
//! | 4      | RegularEvent        | 5              |
//! | 5      | CompactEvent        | 3              |
//!
//! Compact events carry the timestamp as a delta against the previous event
//! command. Registrations do not move that baseline. Decoded commands always
//! hold absolute timestamps.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

pub const MAGIC: [u8; 8] = *b"W1LOGv1\0";
pub const HEADER_BYTES: usize = 16;

pub const OP_REGISTER_STRING: u64 = 1;
pub const OP_REGISTER_TRACE_NODE: u64 = 2;
pub const OP_REGISTER_CODE_SEGMENT: u64 = 3;
pub const OP_REGULAR_EVENT: u64 = 4;
pub const OP_COMPACT_EVENT: u64 = 5;

pub const STRING_ID_BITS: u32 = 20;
pub const STRING_LEN_BITS: u32 = 24;
pub const NODE_ID_BITS: u32 = 24;
pub const REGULAR_SID_BITS: u32 = 16;

pub const COMPACT_SID_BITS: u32 = 12;
pub const COMPACT_TRACE_BITS: u32 = 24;
pub const COMPACT_DELTA_BITS: u32 = 28;
pub const COMPACT_A_BITS: u32 = 12;
pub const COMPACT_B_BITS: u32 = 18;
pub const COMPACT_C_BITS: u32 = 18;

/// Bytes taken by one compact event.
pub const COMPACT_EVENT_BYTES: usize = 24;
/// Bytes taken by one regular event.
pub const REGULAR_EVENT_BYTES: usize = 40;

const fn mask(bits: u32) -> u64 {
    (1u64 << bits) - 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogHeader {
    /// Timestamp ticks per second.
    pub tick_rate: u64,
}

impl LogHeader {
    pub fn new(tick_rate: u64) -> Self {
        Self { tick_rate }
    }

    pub fn to_bytes(&self) -> [u8; HEADER_BYTES] {
        let mut out = [0u8; HEADER_BYTES];
        out[..8].copy_from_slice(&MAGIC);
        out[8..].copy_from_slice(&self.tick_rate.to_le_bytes());
        out
    }
}

/// Fields shared by regular and compact events. `timestamp` is absolute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EventRecord {
    pub class_sid: u32,
    pub method_sid: u32,
    pub trace_id: u32,
    pub timestamp: u64,
    pub instance: u64,
    pub a: u32,
    pub b: u32,
    pub c: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LogCommand {
    RegisterString {
        string_id: u32,
        text: String,
    },
    RegisterTraceNode {
        node_id: u32,
        parent_id: u32,
        is_leaf: bool,
        frame: u64,
    },
    RegisterCodeSegment {
        name_sid: u32,
        base: u64,
        length: u64,
    },
    RegularEvent(EventRecord),
    CompactEvent(EventRecord),
}

impl LogCommand {
    pub fn is_event(&self) -> bool {
        matches!(
            self,
            LogCommand::RegularEvent(_) | LogCommand::CompactEvent(_)
        )
    }

    pub fn event(&self) -> Option<&EventRecord> {
        match self {
            LogCommand::RegularEvent(ev) | LogCommand::CompactEvent(ev) => Some(ev),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("field `{field}` value {value} does not fit in {bits} bits")]
    FieldOverflow {
        field: &'static str,
        value: u64,
        bits: u32,
    },
    #[error("timestamp {timestamp} precedes previous event timestamp {prev}")]
    NegativeDelta { timestamp: u64, prev: u64 },
}

fn check(field: &'static str, value: u64, bits: u32) -> Result<u64, EncodeError> {
    if value > mask(bits) {
        Err(EncodeError::FieldOverflow { field, value, bits })
    } else {
        Ok(value)
    }
}

/// True iff an event with these fields can be written as a 3-word compact event.
pub fn compact_eligible(
    class_sid: u32,
    method_sid: u32,
    trace_id: u32,
    ts_delta: u64,
    a: u32,
    b: u32,
    c: u32,
) -> bool {
    u64::from(class_sid) <= mask(COMPACT_SID_BITS)
        && u64::from(method_sid) <= mask(COMPACT_SID_BITS)
        && u64::from(trace_id) <= mask(COMPACT_TRACE_BITS)
        && ts_delta <= mask(COMPACT_DELTA_BITS)
        && u64::from(a) <= mask(COMPACT_A_BITS)
        && u64::from(b) <= mask(COMPACT_B_BITS)
        && u64::from(c) <= mask(COMPACT_C_BITS)
}

/// Whether `ev` fits the compact form given the previous event timestamp.
pub fn record_compact_eligible(ev: &EventRecord, prev_ts: u64) -> bool {
    ev.timestamp >= prev_ts
        && compact_eligible(
            ev.class_sid,
            ev.method_sid,
            ev.trace_id,
            ev.timestamp - prev_ts,
            ev.a,
            ev.b,
            ev.c,
        )
}

/// Encodes one command, appending its words to `out`.
///
/// `prev_ts` is the absolute timestamp of the previous event command (0 at
/// stream start); it is only consulted for compact events.
pub fn encode_command_into(
    cmd: &LogCommand,
    prev_ts: u64,
    out: &mut Vec<u64>,
) -> Result<(), EncodeError> {
    match cmd {
        LogCommand::RegisterString { string_id, text } => {
            let id = check("string_id", u64::from(*string_id), STRING_ID_BITS)?;
            let bytes = text.as_bytes();
            let len = check("text_len", bytes.len() as u64, STRING_LEN_BITS)?;
            out.push(OP_REGISTER_STRING | id << 4 | len << 24);
            for chunk in bytes.chunks(8) {
                let mut word = [0u8; 8];
                word[..chunk.len()].copy_from_slice(chunk);
                out.push(u64::from_le_bytes(word));
            }
        }
        LogCommand::RegisterTraceNode {
            node_id,
            parent_id,
            is_leaf,
            frame,
        } => {
            let node = check("node_id", u64::from(*node_id), NODE_ID_BITS)?;
            let parent = check("parent_id", u64::from(*parent_id), NODE_ID_BITS)?;
            out.push(OP_REGISTER_TRACE_NODE | node << 4 | parent << 28 | u64::from(*is_leaf) << 52);
            out.push(*frame);
        }
        LogCommand::RegisterCodeSegment {
            name_sid,
            base,
            length,
        } => {
            let sid = check("name_sid", u64::from(*name_sid), STRING_ID_BITS)?;
            out.push(OP_REGISTER_CODE_SEGMENT | sid << 4);
            out.push(*base);
            out.push(*length);
        }
        LogCommand::RegularEvent(ev) => {
            let class = check("class_sid", u64::from(ev.class_sid), REGULAR_SID_BITS)?;
            let method = check("method_sid", u64::from(ev.method_sid), REGULAR_SID_BITS)?;
            out.push(OP_REGULAR_EVENT | class << 4 | method << 20);
            out.push(u64::from(ev.trace_id) | u64::from(ev.a) << 32);
            out.push(u64::from(ev.b) | u64::from(ev.c) << 32);
            out.push(ev.timestamp);
            out.push(ev.instance);
        }
        LogCommand::CompactEvent(ev) => {
            if ev.timestamp < prev_ts {
                return Err(EncodeError::NegativeDelta {
                    timestamp: ev.timestamp,
                    prev: prev_ts,
                });
            }
            let class = check("class_sid", u64::from(ev.class_sid), COMPACT_SID_BITS)?;
            let method = check("method_sid", u64::from(ev.method_sid), COMPACT_SID_BITS)?;
            let trace = check("trace_id", u64::from(ev.trace_id), COMPACT_TRACE_BITS)?;
            let delta = check("ts_delta", ev.timestamp - prev_ts, COMPACT_DELTA_BITS)?;
            let a = check("a", u64::from(ev.a), COMPACT_A_BITS)?;
            let b = check("b", u64::from(ev.b), COMPACT_B_BITS)?;
            let c = check("c", u64::from(ev.c), COMPACT_C_BITS)?;
            out.push(OP_COMPACT_EVENT | class << 4 | method << 16 | trace << 28 | a << 52);
            out.push(delta | b << 28 | c << 46);
            out.push(ev.instance);
        }
    }
    Ok(())
}

/// Encodes one command into a fresh word vector.
pub fn encode_command(cmd: &LogCommand, prev_ts: u64) -> Result<Vec<u64>, EncodeError> {
    let mut out = Vec::with_capacity(5);
    encode_command_into(cmd, prev_ts, &mut out)?;
    Ok(out)
}

/// Incremental encoder that tracks the delta baseline across commands.
#[derive(Debug, Default, Clone)]
pub struct StreamEncoder {
    prev_ts: u64,
    words: Vec<u64>,
}

impl StreamEncoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn prev_ts(&self) -> u64 {
        self.prev_ts
    }

    pub fn push(&mut self, cmd: &LogCommand) -> Result<(), EncodeError> {
        let start = self.words.len();
        if let Err(e) = encode_command_into(cmd, self.prev_ts, &mut self.words) {
            self.words.truncate(start);
            return Err(e);
        }
        if let Some(ev) = cmd.event() {
            self.prev_ts = ev.timestamp;
        }
        Ok(())
    }

    pub fn finish(self) -> Vec<u8> {
        words_to_bytes(&self.words)
    }
}

/// Serializes a whole stream, header included.
pub fn encode_stream(header: &LogHeader, cmds: &[LogCommand]) -> Result<Vec<u8>, EncodeError> {
    let mut enc = StreamEncoder::new();
    for cmd in cmds {
        enc.push(cmd)?;
    }
    let mut out = header.to_bytes().to_vec();
    out.extend(enc.finish());
    Ok(out)
}

pub fn words_to_bytes(words: &[u64]) -> Vec<u8> {
    words.iter().flat_map(|w| w.to_le_bytes()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeErrorKind {
    #[error("file shorter than the 16-byte header")]
    TruncatedHeader,
    #[error("bad magic")]
    BadMagic,
    #[error("tick rate must be positive")]
    ZeroTickRate,
    #[error("body length {0} is not a multiple of 8")]
    Misaligned(usize),
    #[error("unknown opcode {0}")]
    UnknownOpcode(u8),
    #[error("command truncated: needs {needed} words, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("reserved bits set")]
    ReservedBits,
    #[error("string payload is not valid UTF-8")]
    InvalidUtf8,
    #[error("non-zero string padding")]
    NonZeroPadding,
    #[error("id 0 is reserved")]
    ReservedId,
    #[error("string id {0} registered twice")]
    DuplicateString(u32),
    #[error("trace node {0} registered twice")]
    DuplicateNode(u32),
    #[error("reference to unregistered string id {0}")]
    UnregisteredString(u32),
    #[error("reference to unregistered trace node {0}")]
    UnregisteredNode(u32),
    #[error("timestamp overflow")]
    TimestampOverflow,
}

/// A decode failure located at a byte offset from the start of the file.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct DecodeError {
    pub offset: usize,
    pub kind: DecodeErrorKind,
}

impl fmt::Display for DecodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at byte {}: {}", self.offset, self.kind)
    }
}

pub fn decode_header(bytes: &[u8]) -> Result<LogHeader, DecodeError> {
    let err = |offset, kind| DecodeError { offset, kind };
    if bytes.len() < HEADER_BYTES {
        return Err(err(0, DecodeErrorKind::TruncatedHeader));
    }
    if bytes[..8] != MAGIC {
        return Err(err(0, DecodeErrorKind::BadMagic));
    }
    let tick_rate = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    if tick_rate == 0 {
        return Err(err(8, DecodeErrorKind::ZeroTickRate));
    }
    Ok(LogHeader { tick_rate })
}

/// Decodes a complete `.w1log` file.
pub fn decode_stream(bytes: &[u8]) -> Result<(LogHeader, Vec<LogCommand>), DecodeError> {
    let header = decode_header(bytes)?;
    let body = &bytes[HEADER_BYTES..];
    if !body.len().is_multiple_of(8) {
        return Err(DecodeError {
            offset: HEADER_BYTES + body.len() - body.len() % 8,
            kind: DecodeErrorKind::Misaligned(body.len()),
        });
    }
    let words: Vec<u64> = body
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut decoder = Decoder::default();
    let mut cmds = Vec::new();
    let mut pos = 0;
    while pos < words.len() {
        let (cmd, used) = decoder
            .decode_one(&words[pos..])
            .map_err(|kind| DecodeError {
                offset: HEADER_BYTES + pos * 8,
                kind,
            })?;
        cmds.push(cmd);
        pos += used;
    }
    Ok((header, cmds))
}

#[derive(Default)]
struct Decoder {
    prev_ts: u64,
    strings: HashSet<u32>,
    nodes: HashSet<u32>,
}

impl Decoder {
    fn need(words: &[u64], n: usize) -> Result<(), DecodeErrorKind> {
        if words.len() < n {
            Err(DecodeErrorKind::Truncated {
                needed: n,
                available: words.len(),
            })
        } else {
            Ok(())
        }
    }

    fn string_ref(&self, sid: u32) -> Result<(), DecodeErrorKind> {
        if self.strings.contains(&sid) {
            Ok(())
        } else {
            Err(DecodeErrorKind::UnregisteredString(sid))
        }
    }

    fn node_ref(&self, id: u32) -> Result<(), DecodeErrorKind> {
        if self.nodes.contains(&id) {
            Ok(())
        } else {
            Err(DecodeErrorKind::UnregisteredNode(id))
        }
    }

    fn event_refs(&self, ev: &EventRecord) -> Result<(), DecodeErrorKind> {
        self.string_ref(ev.class_sid)?;
        self.string_ref(ev.method_sid)?;
        self.node_ref(ev.trace_id)
    }

    fn decode_one(&mut self, words: &[u64]) -> Result<(LogCommand, usize), DecodeErrorKind> {
        let w0 = words[0];
        match w0 & 0xf {
            OP_REGISTER_STRING => {
                if w0 >> 48 != 0 {
                    return Err(DecodeErrorKind::ReservedBits);
                }
                let string_id = ((w0 >> 4) & mask(STRING_ID_BITS)) as u32;
                let len = ((w0 >> 24) & mask(STRING_LEN_BITS)) as usize;
                let payload_words = len.div_ceil(8);
                Self::need(words, 1 + payload_words)?;
                if string_id == 0 {
                    return Err(DecodeErrorKind::ReservedId);
                }
                let mut bytes: Vec<u8> = words[1..1 + payload_words]
                    .iter()
                    .flat_map(|w| w.to_le_bytes())
                    .collect();
                if bytes[len..].iter().any(|&b| b != 0) {
                    return Err(DecodeErrorKind::NonZeroPadding);
                }
                bytes.truncate(len);
                let text = String::from_utf8(bytes).map_err(|_| DecodeErrorKind::InvalidUtf8)?;
                if !self.strings.insert(string_id) {
                    return Err(DecodeErrorKind::DuplicateString(string_id));
                }
                Ok((
                    LogCommand::RegisterString { string_id, text },
                    1 + payload_words,
                ))
            }
            OP_REGISTER_TRACE_NODE => {
                Self::need(words, 2)?;
                if w0 >> 53 != 0 {
                    return Err(DecodeErrorKind::ReservedBits);
                }
                let node_id = ((w0 >> 4) & mask(NODE_ID_BITS)) as u32;
                let parent_id = ((w0 >> 28) & mask(NODE_ID_BITS)) as u32;
                let is_leaf = (w0 >> 52) & 1 == 1;
                if node_id == 0 {
                    return Err(DecodeErrorKind::ReservedId);
                }
                if parent_id != 0 {
                    self.node_ref(parent_id)?;
                }
                if !self.nodes.insert(node_id) {
                    return Err(DecodeErrorKind::DuplicateNode(node_id));
                }
                Ok((
                    LogCommand::RegisterTraceNode {
                        node_id,
                        parent_id,
                        is_leaf,
                        frame: words[1],
                    },
                    2,
                ))
            }
            OP_REGISTER_CODE_SEGMENT => {
                Self::need(words, 3)?;
                if w0 >> 24 != 0 {
                    return Err(DecodeErrorKind::ReservedBits);
                }
                let name_sid = ((w0 >> 4) & mask(STRING_ID_BITS)) as u32;
                self.string_ref(name_sid)?;
                Ok((
                    LogCommand::RegisterCodeSegment {
                        name_sid,
                        base: words[1],
                        length: words[2],
                    },
                    3,
                ))
            }
            OP_REGULAR_EVENT => {
                Self::need(words, 5)?;
                if w0 >> 36 != 0 {
                    return Err(DecodeErrorKind::ReservedBits);
                }
                let ev = EventRecord {
                    class_sid: ((w0 >> 4) & mask(REGULAR_SID_BITS)) as u32,
                    method_sid: ((w0 >> 20) & mask(REGULAR_SID_BITS)) as u32,
                    trace_id: words[1] as u32,
                    a: (words[1] >> 32) as u32,
                    b: words[2] as u32,
                    c: (words[2] >> 32) as u32,
                    timestamp: words[3],
                    instance: words[4],
                };
                self.event_refs(&ev)?;
                self.prev_ts = ev.timestamp;
                Ok((LogCommand::RegularEvent(ev), 5))
            }
            OP_COMPACT_EVENT => {
                Self::need(words, 3)?;
                let w1 = words[1];
                let delta = w1 & mask(COMPACT_DELTA_BITS);
                let timestamp = self
                    .prev_ts
                    .checked_add(delta)
                    .ok_or(DecodeErrorKind::TimestampOverflow)?;
                let ev = EventRecord {
                    class_sid: ((w0 >> 4) & mask(COMPACT_SID_BITS)) as u32,
                    method_sid: ((w0 >> 16) & mask(COMPACT_SID_BITS)) as u32,
                    trace_id: ((w0 >> 28) & mask(COMPACT_TRACE_BITS)) as u32,
                    a: (w0 >> 52) as u32,
                    b: ((w1 >> 28) & mask(COMPACT_B_BITS)) as u32,
                    c: (w1 >> 46) as u32,
                    timestamp,
                    instance: words[2],
                };
                self.event_refs(&ev)?;
                self.prev_ts = timestamp;
                Ok((LogCommand::CompactEvent(ev), 3))
            }
            op => Err(DecodeErrorKind::UnknownOpcode(op as u8)),
        }
    }
}
