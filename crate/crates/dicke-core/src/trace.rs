// SPDX-License-Identifier: Apache-2.0

//! Photon click traces and their on-disk formats.
//!
//! CSV: a `# duration_ns=<n>` header, optional `# key=value` schedule lines,
//! then one decimal u64 timestamp per line.
//! Binary: magic `CLK1`, little-endian u64 count, the u64 timestamps, then an
//! optional u64 duration trailer.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CLK1";

/// Sweep ramp needed to map time onto coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampInfo {
    pub x_start: f64,
    pub x_end: f64,
    pub duration_s: f64,
}

impl Default for RampInfo {
    fn default() -> Self {
        Self {
            x_start: 0.55,
            x_end: 1.05,
            duration_s: 0.8,
        }
    }
}

impl RampInfo {
    /// Time at which the nominal ramp reaches x = 1.
    pub fn nominal_crossing(&self) -> f64 {
        (1.0 - self.x_start) / (self.x_end - self.x_start) * self.duration_s
    }

    pub fn x_at(&self, t: f64) -> f64 {
        self.x_start + (self.x_end - self.x_start) * t / self.duration_s
    }
}

/// Ground truth recorded by the synthesizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceTruth {
    pub zeta: f64,
    pub phi: f64,
    pub seed: u64,
    /// Time at which the synthesized ramp crosses x = 1.
    pub t_cross: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickTrace {
    /// Nanoseconds since trace start, strictly increasing.
    pub timestamps: Vec<u64>,
    pub duration_ns: u64,
    pub ramp: Option<RampInfo>,
    pub truth: Option<TraceTruth>,
}

impl ClickTrace {
    pub fn new(timestamps: Vec<u64>, duration_ns: u64) -> Result<Self> {
        let t = Self {
            timestamps,
            duration_ns,
            ramp: None,
            truth: None,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn duration(&self) -> f64 {
        self.duration_ns as f64 * 1e-9
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Data("timestamps not strictly increasing".into()));
        }
        if let Some(&last) = self.timestamps.last() {
            if last >= self.duration_ns {
                return Err(Error::Data("timestamp beyond trace duration".into()));
            }
        }
        Ok(())
    }

    /// Clicks with t_start ≤ t < t_end (seconds), re-referenced to t_start.
    pub fn window(&self, t_start: f64, t_end: f64) -> ClickTrace {
        let a = (t_start * 1e9).round().max(0.0) as u64;
        let b = ((t_end * 1e9).round().max(0.0) as u64).min(self.duration_ns);
        let lo = self.timestamps.partition_point(|&t| t < a);
        let hi = self.timestamps.partition_point(|&t| t < b);
        ClickTrace {
            timestamps: self.timestamps[lo..hi].iter().map(|t| t - a).collect(),
            duration_ns: b.saturating_sub(a),
            ramp: None,
            truth: None,
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(w, "# duration_ns={}", self.duration_ns)?;
        if let Some(r) = &self.ramp {
            writeln!(w, "# x_start={:?}", r.x_start)?;
            writeln!(w, "# x_end={:?}", r.x_end)?;
            writeln!(w, "# sweep_duration_s={:?}", r.duration_s)?;
        }
        for t in &self.timestamps {
            writeln!(w, "{t}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut duration = None;
        let mut meta = BTreeMap::new();
        let mut ts = Vec::new();
        for (lineno, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.trim().split_once('=') {
                    let (k, v) = (k.trim(), v.trim());
                    if k == "duration_ns" {
                        duration =
                            Some(v.parse::<u64>().map_err(|e| {
                                Error::Data(format!("bad duration_ns header: {e}"))
                            })?);
                    } else if let Ok(f) = v.parse::<f64>() {
                        meta.insert(k.to_string(), f);
                    }
                }
                continue;
            }
            ts.push(
                line.parse::<u64>()
                    .map_err(|e| Error::Data(format!("line {}: bad timestamp: {e}", lineno + 1)))?,
            );
        }
        let duration_ns =
            duration.ok_or_else(|| Error::Data("missing `# duration_ns=` header".into()))?;
        let ramp = match (
            meta.get("x_start"),
            meta.get("x_end"),
            meta.get("sweep_duration_s"),
        ) {
            (Some(&x_start), Some(&x_end), Some(&duration_s)) => Some(RampInfo {
                x_start,
                x_end,
                duration_s,
            }),
            _ => None,
        };
        let mut t = Self::new(ts, duration_ns)?;
        t.ramp = ramp;
        Ok(t)
    }

    pub fn write_binary<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        w.write_all(MAGIC)?;
        w.write_all(&(self.timestamps.len() as u64).to_le_bytes())?;
        for t in &self.timestamps {
            w.write_all(&t.to_le_bytes())?;
        }
        w.write_all(&self.duration_ns.to_le_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Data("bad magic, expected CLK1".into()));
        }
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let n = u64::from_le_bytes(word) as usize;
        let mut ts = Vec::with_capacity(n.min(1 << 28));
        for _ in 0..n {
            r.read_exact(&mut word)
                .map_err(|_| Error::Data("truncated timestamp block".into()))?;
            ts.push(u64::from_le_bytes(word));
        }
        let duration_ns = match r.read_exact(&mut word) {
            Ok(()) => u64::from_le_bytes(word),
            Err(_) => ts.last().map_or(0, |t| t + 1),
        };
        Self::new(ts, duration_ns)
    }

    /// Read either format, chosen by the file's first bytes.
    pub fn read_path(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        if bytes.starts_with(MAGIC) {
            Self::read_binary(&bytes[..])
        } else {
            Self::read_csv(&bytes[..])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unsorted() {
        assert!(ClickTrace::new(vec![5, 3], 10).is_err());
        assert!(ClickTrace::new(vec![3, 3], 10).is_err());
        assert!(ClickTrace::new(vec![3, 10], 10).is_err());
    }

    #[test]
    fn window_rebases() {
        let t = ClickTrace::new(vec![100, 1_000, 2_000, 3_500], 5_000).unwrap();
        let w = t.window(1e-6, 3e-6);
        assert_eq!(w.timestamps, vec![0, 1_000]);
        assert_eq!(w.duration_ns, 2_000);
    }

    #[test]
    fn bad_magic() {
        assert!(ClickTrace::read_binary(&b"NOPE\0\0\0\0\0\0\0\0"[..]).is_err());
    }
}
