//! Memory accesses, traces and the trace text format.
//!
//! A trace file is UTF-8 text with one access per line:
//!
//! ```text
//! # comment
//! R 0x1000
//! W 0x1004 0xDEADBEEF
//! ```
//!
//! Addresses are word addresses: each one names a single 32-bit word.

mod profiles;
mod synthetic;

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub use profiles::{profile, PROFILE_NAMES, TRAINING_PROFILES};
pub use synthetic::{generate_synthetic, staged_trace, SyntheticProfile};

/// Default width of a word address, in bits.
pub const DEFAULT_ADDRESS_BITS: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessKind {
    Read,
    Write,
}

/// One request issued by the processor.
///
/// Write data is carried by the variant, so a read can never hold data and a
/// write can never lack it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MemoryAccess {
    Read { address: u64 },
    Write { address: u64, data: u32 },
}

impl MemoryAccess {
    pub fn read(address: u64) -> Self {
        MemoryAccess::Read { address }
    }

    pub fn write(address: u64, data: u32) -> Self {
        MemoryAccess::Write { address, data }
    }

    pub fn kind(&self) -> AccessKind {
        match self {
            MemoryAccess::Read { .. } => AccessKind::Read,
            MemoryAccess::Write { .. } => AccessKind::Write,
        }
    }

    pub fn address(&self) -> u64 {
        match *self {
            MemoryAccess::Read { address } | MemoryAccess::Write { address, .. } => address,
        }
    }

    pub fn data(&self) -> Option<u32> {
        match *self {
            MemoryAccess::Read { .. } => None,
            MemoryAccess::Write { data, .. } => Some(data),
        }
    }

    pub fn is_read(&self) -> bool {
        matches!(self, MemoryAccess::Read { .. })
    }
}

impl fmt::Display for MemoryAccess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            MemoryAccess::Read { address } => write!(f, "R 0x{address:X}"),
            MemoryAccess::Write { address, data } => write!(f, "W 0x{address:X} 0x{data:08X}"),
        }
    }
}

/// An ordered sequence of accesses in issue order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub name: String,
    pub accesses: Vec<MemoryAccess>,
    /// Cumulative end offsets of the stages the trace was built from. A
    /// single-stage trace has one boundary equal to its length.
    pub stage_ends: Vec<usize>,
}

impl Trace {
    pub fn new(name: impl Into<String>, accesses: Vec<MemoryAccess>) -> Self {
        let stage_ends = vec![accesses.len()];
        Trace {
            name: name.into(),
            accesses,
            stage_ends,
        }
    }

    pub fn len(&self) -> usize {
        self.accesses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accesses.is_empty()
    }

    pub fn reads(&self) -> usize {
        self.accesses.iter().filter(|a| a.is_read()).count()
    }

    /// Renders the trace in the text format accepted by [`parse_trace`].
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.accesses.len() * 24);
        let _ = writeln!(out, "# {}", self.name);
        for access in &self.accesses {
            let _ = writeln!(out, "{access}");
        }
        out
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Reads a trace file. The trace name is the file stem.
pub fn parse_trace(path: impl AsRef<Path>) -> Result<Trace> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trace".to_owned());
    parse_trace_str(&name, &text, DEFAULT_ADDRESS_BITS)
}

/// Parses trace text, rejecting addresses wider than `address_bits`.
pub fn parse_trace_str(name: &str, text: &str, address_bits: u32) -> Result<Trace> {
    let max_address = if address_bits >= 64 {
        u64::MAX
    } else {
        (1u64 << address_bits) - 1
    };
    let mut accesses = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse { line, message };
        let mut fields = content.split_whitespace();
        let kind = fields.next().unwrap_or_default();
        let address = fields
            .next()
            .ok_or_else(|| err("missing address".into()))
            .and_then(|s| parse_hex(s).map_err(|m| err(format!("address: {m}"))))?;
        if address > max_address {
            return Err(err(format!(
                "address 0x{address:X} exceeds {address_bits} bits"
            )));
        }
        let access = match kind {
            "R" | "r" => MemoryAccess::read(address),
            "W" | "w" => {
                let data = fields
                    .next()
                    .ok_or_else(|| err("write is missing its data word".into()))
                    .and_then(|s| parse_hex(s).map_err(|m| err(format!("data: {m}"))))?;
                let data = u32::try_from(data)
                    .map_err(|_| err(format!("data 0x{data:X} exceeds 32 bits")))?;
                MemoryAccess::write(address, data)
            }
            other => return Err(err(format!("unknown access kind `{other}`"))),
        };
        if let Some(extra) = fields.next() {
            return Err(err(format!("unexpected field `{extra}`")));
        }
        accesses.push(access);
    }
    if accesses.is_empty() {
        return Err(Error::EmptyTrace);
    }
    Ok(Trace::new(name, accesses))
}

fn parse_hex(s: &str) -> std::result::Result<u64, String> {
    let digits = s
        .strip_prefix("0x")
        .or_else(|| s.strip_prefix("0X"))
        .ok_or_else(|| format!("`{s}` lacks the 0x prefix"))?;
    u64::from_str_radix(digits, 16).map_err(|e| format!("`{s}`: {e}"))
}
