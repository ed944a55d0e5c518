//! Versioned little-endian checkpoint files.
//!
//! Layout:
//! ```text
//! magic "URNNCKPT" | u32 version | u64 iter
//! u32 config length | config text (key = value lines)
//! u32 group count
//!   per group: u32 name length | name | u32 rank | u64 dims[rank] | f64 payload
//! u64 FNV-1a checksum of every preceding byte
//! ```
//! Files are written to a sibling temporary and renamed into place, so a
//! reader sees either the previous file or the complete new one.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::config::RunConfig;
use crate::error::{format_err, Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"URNNCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedArray {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let name = name.into();
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::Consistency(format!(
                "checkpoint group '{name}': shape {dims:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { name, dims, data })
    }

    pub fn vector(name: impl Into<String>, data: &[f64]) -> Self {
        Self {
            name: name.into(),
            dims: vec![data.len()],
            data: data.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    /// Optimization steps completed when the checkpoint was taken.
    pub iter: u64,
    pub config: RunConfig,
    pub groups: Vec<NamedArray>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format_err(field, "file truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, field)?.try_into().expect("4 bytes"),
        ))
    }
    fn u64(&mut self, field: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8, field)?.try_into().expect("8 bytes"),
        ))
    }
    fn len(&mut self, field: &str) -> Result<usize> {
        usize::try_from(self.u64(field)?).map_err(|_| format_err(field, "length overflows usize"))
    }
}

impl Checkpoint {
    pub fn new(iter: u64, config: RunConfig, groups: Vec<NamedArray>) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            iter,
            config,
            groups,
        }
    }

    pub fn group(&self, name: &str) -> Option<&NamedArray> {
        self.groups.iter().find(|g| g.name == name)
    }

    /// Looks up `name` and checks that it holds exactly `dims`.
    pub fn expect_group(&self, name: &str, dims: &[usize]) -> Result<&NamedArray> {
        let g = self
            .group(name)
            .ok_or_else(|| Error::Consistency(format!("checkpoint has no group '{name}'")))?;
        if g.dims != dims {
            return Err(Error::Consistency(format!(
                "checkpoint group '{name}' has shape {:?}, expected {dims:?}",
                g.dims
            )));
        }
        Ok(g)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&self.iter.to_le_bytes());
        let config = self.config.to_text();
        out.extend_from_slice(&(config.len() as u32).to_le_bytes());
        out.extend_from_slice(config.as_bytes());
        out.extend_from_slice(&(self.groups.len() as u32).to_le_bytes());
        for g in &self.groups {
            out.extend_from_slice(&(g.name.len() as u32).to_le_bytes());
            out.extend_from_slice(g.name.as_bytes());
            out.extend_from_slice(&(g.dims.len() as u32).to_le_bytes());
            for &d in &g.dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &g.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let sum = fnv1a(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < CHECKPOINT_MAGIC.len() + 4 + 8 {
            return Err(format_err("checkpoint", "file truncated"));
        }
        if &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(format_err("checkpoint.magic", "not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(format_err(
                "checkpoint.version",
                format!("unsupported version {version} (expected {CHECKPOINT_VERSION})"),
            ));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        if fnv1a(body) != u64::from_le_bytes(tail.try_into().expect("8 bytes")) {
            return Err(format_err(
                "checkpoint.checksum",
                "checksum mismatch (truncated or corrupt)",
            ));
        }

        let mut c = Cursor {
            bytes: body,
            pos: 12,
        };
        let iter = c.u64("checkpoint.iter")?;
        let config_len = c.u32("checkpoint.config")? as usize;
        let config_text = std::str::from_utf8(c.take(config_len, "checkpoint.config")?)
            .map_err(|_| format_err("checkpoint.config", "not UTF-8"))?;
        let config = RunConfig::from_text(config_text)?;
        let count = c.u32("checkpoint.groups")?;
        let mut groups = Vec::new();
        for _ in 0..count {
            let name_len = c.u32("checkpoint.group.name")? as usize;
            let name = std::str::from_utf8(c.take(name_len, "checkpoint.group.name")?)
                .map_err(|_| format_err("checkpoint.group.name", "not UTF-8"))?
                .to_string();
            let rank = c.u32("checkpoint.group.rank")? as usize;
            let dims = (0..rank)
                .map(|_| c.len("checkpoint.group.dims"))
                .collect::<Result<Vec<_>>>()?;
            let total = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .and_then(|n| n.checked_mul(8))
                .ok_or_else(|| format_err("checkpoint.group.dims", "shape overflows"))?;
            let data = c
                .take(total, "checkpoint.group.data")?
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            groups.push(NamedArray { name, dims, data });
        }
        if c.pos != body.len() {
            return Err(format_err("checkpoint", "trailing bytes after last group"));
        }
        Ok(Self {
            version,
            iter,
            config,
            groups,
        })
    }

    /// Atomic write: temporary sibling file, fsync, rename.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut tmp_name = path
            .file_name()
            .map(|n| n.to_os_string())
            .unwrap_or_default();
        tmp_name.push(".tmp");
        let tmp = path.with_file_name(tmp_name);
        let result = (|| {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
            fs::rename(&tmp, path)
        })();
        if result.is_err() {
            let _ = fs::remove_file(&tmp);
        }
        Ok(result?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
