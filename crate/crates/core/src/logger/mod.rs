//! Runtime event sink for the instrumented containers.
//!
//! All threads append to one buffer under a single lock; the string
//! interner, stack trie and delta baseline are updated under the same lock so
//! the resulting stream is one valid interleaving. Write failures never reach
//! the instrumented program: they set [`Logger::failed`] and drop data.

mod sources;
mod trie;

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::mem;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, OnceLock};

use thiserror::Error;

use crate::wirefmt::{
    encode_command_into, record_compact_eligible, words_to_bytes, EncodeError, EventRecord,
    LogCommand, LogHeader, STRING_LEN_BITS,
};

pub use sources::{
    BacktraceFrames, Clock, FixedFrames, FrameProvider, ManualClock, MonotonicClock, ShadowScope,
    ShadowStack,
};
pub use trie::{Interner, NewNode, StackTrie};

pub const DEFAULT_BUFFER_BYTES: usize = 4 << 20;
pub const MIN_BUFFER_BYTES: usize = 4 << 10;
pub const DEFAULT_MAX_DEPTH: usize = 64;
pub const DEFAULT_LOG_PATH: &str = "perfsan.w1log";

pub const ENV_LOG_PATH: &str = "W1_LOG_PATH";
pub const ENV_BUFFER_BYTES: &str = "W1_BUFFER_BYTES";

#[derive(Debug, Error)]
pub enum LoggerError {
    #[error("string id space exhausted")]
    StringIdsExhausted,
    #[error("trace node id space exhausted")]
    NodeIdsExhausted,
    #[error("cannot intern an empty string")]
    EmptyString,
    #[error("string of {0} bytes exceeds the 2^24-1 byte limit")]
    StringTooLong(usize),
    #[error("trace depth {depth} outside 1..={max}")]
    BadTraceDepth { depth: usize, max: usize },
    #[error("code segment length must be positive")]
    ZeroLengthSegment,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoggerConfig {
    pub buffer_capacity: usize,
    pub output_path: PathBuf,
    pub max_depth: usize,
}

impl Default for LoggerConfig {
    fn default() -> Self {
        Self {
            buffer_capacity: DEFAULT_BUFFER_BYTES,
            output_path: PathBuf::from(DEFAULT_LOG_PATH),
            max_depth: DEFAULT_MAX_DEPTH,
        }
    }
}

impl LoggerConfig {
    /// Defaults with `W1_LOG_PATH` / `W1_BUFFER_BYTES` applied.
    pub fn from_env() -> Result<Self, LoggerError> {
        Self::default().with_env()
    }

    pub fn with_env(self) -> Result<Self, LoggerError> {
        self.with_overrides(
            std::env::var(ENV_LOG_PATH).ok().as_deref(),
            std::env::var(ENV_BUFFER_BYTES).ok().as_deref(),
        )
    }

    pub fn with_overrides(
        mut self,
        path: Option<&str>,
        buffer_bytes: Option<&str>,
    ) -> Result<Self, LoggerError> {
        if let Some(p) = path.filter(|p| !p.is_empty()) {
            self.output_path = PathBuf::from(p);
        }
        if let Some(b) = buffer_bytes.filter(|b| !b.is_empty()) {
            self.buffer_capacity = b
                .trim()
                .parse()
                .map_err(|_| LoggerError::Config(format!("{ENV_BUFFER_BYTES}={b:?}")))?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), LoggerError> {
        if self.buffer_capacity < MIN_BUFFER_BYTES {
            return Err(LoggerError::Config(format!(
                "buffer capacity {} below {MIN_BUFFER_BYTES} bytes",
                self.buffer_capacity
            )));
        }
        if self.max_depth == 0 {
            return Err(LoggerError::Config("max_depth must be positive".into()));
        }
        Ok(())
    }
}

/// In-memory log destination that can be read back while the logger lives.
#[derive(Debug, Default, Clone)]
pub struct SharedBuffer(Arc<Mutex<Vec<u8>>>);

impl SharedBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contents(&self) -> Vec<u8> {
        self.0.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl Write for SharedBuffer {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Counters describing what the logger has emitted so far.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct LoggerStats {
    pub compact_events: u64,
    pub regular_events: u64,
    pub registrations: u64,
    pub dropped_events: u64,
    pub flushes: u64,
    pub bytes_flushed: u64,
}

impl LoggerStats {
    pub fn events(&self) -> u64 {
        self.compact_events + self.regular_events
    }
}

struct State {
    interner: Interner,
    trie: StackTrie,
    buffer: Vec<u8>,
    prev_ts: u64,
    stats: LoggerStats,
}

struct Sink {
    out: Box<dyn Write + Send>,
    header_written: bool,
}

/// Synthetic instance addresses. Released addresses are reused LIFO so that
/// sequential objects share an address the way heap allocations do.
struct AddressPool {
    next: u64,
    free: Vec<u64>,
}

const ADDRESS_BASE: u64 = 0x7f00_0000_1000;
const ADDRESS_STRIDE: u64 = 0x40;

pub struct Logger {
    config: LoggerConfig,
    clock: Arc<dyn Clock>,
    frames: Arc<dyn FrameProvider>,
    state: Mutex<State>,
    sink: Mutex<Sink>,
    addresses: Mutex<AddressPool>,
    failed: AtomicBool,
    io_errors: AtomicU64,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

pub struct LoggerBuilder {
    config: LoggerConfig,
    clock: Arc<dyn Clock>,
    frames: Arc<dyn FrameProvider>,
}

impl LoggerBuilder {
    pub fn config(mut self, config: LoggerConfig) -> Self {
        self.config = config;
        self
    }

    pub fn buffer_capacity(mut self, bytes: usize) -> Self {
        self.config.buffer_capacity = bytes;
        self
    }

    pub fn max_depth(mut self, depth: usize) -> Self {
        self.config.max_depth = depth;
        self
    }

    pub fn clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn frames(mut self, frames: Arc<dyn FrameProvider>) -> Self {
        self.frames = frames;
        self
    }

    /// Creates (truncating) `config.output_path`.
    pub fn open(self) -> Result<Logger, LoggerError> {
        let file = File::create(&self.config.output_path)?;
        self.writer(BufWriter::new(file))
    }

    pub fn writer(self, out: impl Write + Send + 'static) -> Result<Logger, LoggerError> {
        self.config.validate()?;
        Ok(Logger {
            state: Mutex::new(State {
                interner: Interner::default(),
                trie: StackTrie::new(),
                buffer: Vec::with_capacity(self.config.buffer_capacity),
                prev_ts: 0,
                stats: LoggerStats::default(),
            }),
            sink: Mutex::new(Sink {
                out: Box::new(out),
                header_written: false,
            }),
            addresses: Mutex::new(AddressPool {
                next: ADDRESS_BASE,
                free: Vec::new(),
            }),
            config: self.config,
            clock: self.clock,
            frames: self.frames,
            failed: AtomicBool::new(false),
            io_errors: AtomicU64::new(0),
        })
    }
}

impl Logger {
    pub fn builder() -> LoggerBuilder {
        LoggerBuilder {
            config: LoggerConfig::default(),
            clock: Arc::new(MonotonicClock::default()),
            frames: Arc::new(BacktraceFrames::default()),
        }
    }

    pub fn config(&self) -> &LoggerConfig {
        &self.config
    }

    pub fn tick_rate(&self) -> u64 {
        self.clock.tick_rate()
    }

    /// Set once any logging or write failure has occurred.
    pub fn failed(&self) -> bool {
        self.failed.load(Ordering::Relaxed)
    }

    pub fn stats(&self) -> LoggerStats {
        lock(&self.state).stats
    }

    /// Snapshot of interned strings as `(id, text)`.
    pub fn strings(&self) -> Vec<(u32, String)> {
        lock(&self.state)
            .interner
            .entries()
            .map(|(id, t)| (id, t.to_owned()))
            .collect()
    }

    /// Snapshot of trie nodes as `(id, parent, frame)`.
    pub fn trie_nodes(&self) -> Vec<(u32, u32, u64)> {
        lock(&self.state).trie.nodes().collect()
    }

    pub fn intern_string(&self, text: &str) -> Result<u32, LoggerError> {
        let mut st = lock(&self.state);
        let mut words = Vec::new();
        let id = Self::intern_locked(&mut st, text, &mut words)?;
        self.append(st, &words);
        Ok(id)
    }

    /// Inserts an outermost-first trace and returns its leaf id.
    pub fn record_trace(&self, frames: &[u64]) -> Result<u32, LoggerError> {
        if frames.is_empty() || frames.len() > self.config.max_depth {
            return Err(LoggerError::BadTraceDepth {
                depth: frames.len(),
                max: self.config.max_depth,
            });
        }
        let mut st = lock(&self.state);
        let mut words = Vec::new();
        let id = Self::trace_locked(&mut st, frames, &mut words)?;
        self.append(st, &words);
        Ok(id)
    }

    pub fn register_code_segment(
        &self,
        name: &str,
        base: u64,
        length: u64,
    ) -> Result<(), LoggerError> {
        if length == 0 {
            return Err(LoggerError::ZeroLengthSegment);
        }
        let mut st = lock(&self.state);
        let mut words = Vec::new();
        let name_sid = Self::intern_locked(&mut st, name, &mut words)?;
        encode_command_into(
            &LogCommand::RegisterCodeSegment {
                name_sid,
                base,
                length,
            },
            st.prev_ts,
            &mut words,
        )?;
        st.stats.registrations += 1;
        self.append(st, &words);
        Ok(())
    }

    /// Records one method call on an instrumented instance. Never fails
    /// from the caller's point of view.
    pub fn log_event(&self, class: &str, method: &str, instance: u64, a: u32, b: u32, c: u32) {
        let mut frames = self.frames.capture(self.config.max_depth);
        frames.truncate(self.config.max_depth);
        if frames.is_empty() {
            frames.push(0);
        }
        let mut st = lock(&self.state);
        let mut words = Vec::with_capacity(8);
        let res = (|| -> Result<(), LoggerError> {
            let class_sid = Self::intern_locked(&mut st, class, &mut words)?;
            let method_sid = Self::intern_locked(&mut st, method, &mut words)?;
            let trace_id = Self::trace_locked(&mut st, &frames, &mut words)?;
            let ev = EventRecord {
                class_sid,
                method_sid,
                trace_id,
                timestamp: self.clock.now(),
                instance,
                a,
                b,
                c,
            };
            let compact = record_compact_eligible(&ev, st.prev_ts);
            let cmd = if compact {
                LogCommand::CompactEvent(ev)
            } else {
                LogCommand::RegularEvent(ev)
            };
            encode_command_into(&cmd, st.prev_ts, &mut words)?;
            st.prev_ts = ev.timestamp;
            if compact {
                st.stats.compact_events += 1;
            } else {
                st.stats.regular_events += 1;
            }
            Ok(())
        })();
        if res.is_err() {
            st.stats.dropped_events += 1;
            self.failed.store(true, Ordering::Relaxed);
        }
        // registrations made before a failure are still owed to the stream
        self.append(st, &words);
    }

    /// Writes buffered commands to the output, preceded by the header on
    /// the first call. Returns the number of command bytes written.
    pub fn flush(&self) -> Result<usize, LoggerError> {
        let mut st = lock(&self.state);
        let data = mem::replace(
            &mut st.buffer,
            Vec::with_capacity(self.config.buffer_capacity),
        );
        st.stats.flushes += 1;
        st.stats.bytes_flushed += data.len() as u64;
        let sink = lock(&self.sink);
        drop(st);
        self.write_out(sink, &data).map_err(|e| {
            self.failed.store(true, Ordering::Relaxed);
            LoggerError::Io(e)
        })?;
        Ok(data.len())
    }

    /// Hands out an instance address for a new object.
    pub fn acquire_address(&self) -> u64 {
        let mut pool = lock(&self.addresses);
        match pool.free.pop() {
            Some(a) => a,
            None => {
                let a = pool.next;
                pool.next += ADDRESS_STRIDE;
                a
            }
        }
    }

    pub fn release_address(&self, address: u64) {
        lock(&self.addresses).free.push(address);
    }

    fn intern_locked(st: &mut State, text: &str, words: &mut Vec<u64>) -> Result<u32, LoggerError> {
        if text.is_empty() {
            return Err(LoggerError::EmptyString);
        }
        if text.len() as u64 >= 1 << STRING_LEN_BITS {
            return Err(LoggerError::StringTooLong(text.len()));
        }
        let (id, fresh) = st
            .interner
            .intern(text)
            .ok_or(LoggerError::StringIdsExhausted)?;
        if fresh {
            encode_command_into(
                &LogCommand::RegisterString {
                    string_id: id,
                    text: text.to_owned(),
                },
                st.prev_ts,
                words,
            )?;
            st.stats.registrations += 1;
        }
        Ok(id)
    }

    fn trace_locked(
        st: &mut State,
        frames: &[u64],
        words: &mut Vec<u64>,
    ) -> Result<u32, LoggerError> {
        let mut created = Vec::new();
        let leaf = st
            .trie
            .insert(frames, &mut created)
            .ok_or(LoggerError::NodeIdsExhausted)?;
        for n in created {
            encode_command_into(
                &LogCommand::RegisterTraceNode {
                    node_id: n.node_id,
                    parent_id: n.parent_id,
                    is_leaf: n.is_leaf,
                    frame: n.frame,
                },
                st.prev_ts,
                words,
            )?;
            st.stats.registrations += 1;
        }
        Ok(leaf)
    }

    fn append(&self, mut st: MutexGuard<'_, State>, words: &[u64]) {
        if words.is_empty() {
            return;
        }
        let bytes = words_to_bytes(words);
        if st.buffer.is_empty() || st.buffer.len() + bytes.len() <= self.config.buffer_capacity {
            st.buffer.extend_from_slice(&bytes);
            return;
        }
        let pending = mem::replace(
            &mut st.buffer,
            Vec::with_capacity(self.config.buffer_capacity),
        );
        st.buffer.extend_from_slice(&bytes);
        st.stats.flushes += 1;
        st.stats.bytes_flushed += pending.len() as u64;
        let sink = lock(&self.sink);
        drop(st);
        if self.write_out(sink, &pending).is_err() {
            self.failed.store(true, Ordering::Relaxed);
        }
    }

    fn write_out(&self, mut sink: MutexGuard<'_, Sink>, data: &[u8]) -> io::Result<()> {
        let res = (|| {
            if !sink.header_written {
                sink.out
                    .write_all(&LogHeader::new(self.clock.tick_rate()).to_bytes())?;
                sink.header_written = true;
            }
            sink.out.write_all(data)?;
            sink.out.flush()
        })();
        if res.is_err() {
            self.io_errors.fetch_add(1, Ordering::Relaxed);
        }
        res
    }
}

impl fmt::Debug for Logger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Logger")
            .field("config", &self.config)
            .field("failed", &self.failed())
            .finish_non_exhaustive()
    }
}

impl Drop for Logger {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}

static GLOBAL: OnceLock<Arc<Logger>> = OnceLock::new();

/// Installs the process-wide logger. If one is already installed the
/// rejected logger is handed back.
pub fn install_global(logger: Logger) -> Result<Arc<Logger>, Arc<Logger>> {
    let arc = Arc::new(logger);
    GLOBAL.set(arc.clone()).map(|()| arc)
}

pub fn global() -> Option<&'static Arc<Logger>> {
    GLOBAL.get()
}

/// Handle through which shims reach a logger; disabled tracers do nothing.
#[derive(Clone, Default)]
pub struct Tracer(Option<Arc<Logger>>);

impl Tracer {
    pub fn new(logger: Arc<Logger>) -> Self {
        Self(Some(logger))
    }

    pub fn disabled() -> Self {
        Self(None)
    }

    /// The installed global logger, or a disabled tracer.
    pub fn global() -> Self {
        Self(global().cloned())
    }

    pub fn is_enabled(&self) -> bool {
        self.0.is_some()
    }

    pub fn logger(&self) -> Option<&Arc<Logger>> {
        self.0.as_ref()
    }

    #[inline]
    pub fn log(&self, class: &str, method: &str, instance: u64, a: u32, b: u32, c: u32) {
        if let Some(l) = &self.0 {
            l.log_event(class, method, instance, a, b, c);
        }
    }

    pub fn acquire(&self) -> u64 {
        self.0.as_ref().map_or(0, |l| l.acquire_address())
    }

    pub fn release(&self, address: u64) {
        if let Some(l) = &self.0 {
            l.release_address(address);
        }
    }
}

impl std::fmt::Debug for Tracer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_tuple("Tracer").field(&self.is_enabled()).finish()
    }
}
