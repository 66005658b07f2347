//! Field dumps and CSV tables written by the pipeline.

use std::fmt::Write as _;
use std::path::Path;

use crate::dyadic::DyadicLattice;
use crate::error::{LabError, Result};
use crate::geometry::BoundarySet;
use crate::whitney::{BoxKey, WhitneyGrid};

const RAW_MAGIC: &[u8; 4] = b"CDLF";
const RAW_VERSION: u32 = 1;

/// Cell-centred scalar field on an axis grid, x-fastest ordering.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldDump {
    pub dims: Vec<usize>,
    pub h: f64,
    /// Lower corner of the grid box (not the first cell centre).
    pub origin: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DumpFormat {
    Text,
    Raw,
}

impl FieldDump {
    pub fn new(dims: Vec<usize>, h: f64, origin: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if dims.len() != origin.len() || dims.iter().product::<usize>() != values.len() {
            return Err(LabError::Argument("field dump shape does not match its values".into()));
        }
        Ok(FieldDump { dims, h, origin, values })
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[String]| v.join(" ");
        let mut s = String::new();
        let _ = writeln!(s, "n {}", self.dims.len());
        let _ = writeln!(s, "dims {}", join(&self.dims.iter().map(|d| d.to_string()).collect::<Vec<_>>()));
        let _ = writeln!(s, "h {:.17e}", self.h);
        let _ = writeln!(s, "origin {}", join(&self.origin.iter().map(|o| format!("{o:.17e}")).collect::<Vec<_>>()));
        for v in &self.values {
            let _ = writeln!(s, "{v:.17e}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| LabError::Serde(format!("text field dump: {m}"));
        let mut lines = text.lines();
        let mut field = |key: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| bad("truncated header"))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(bad(&format!("expected `{key}`")));
            }
            Ok(parts.map(str::to_string).collect())
        };
        let n: usize = field("n")?.first().and_then(|v| v.parse().ok()).ok_or_else(|| bad("n"))?;
        let dims: Vec<usize> = field("dims")?.iter().map(|v| v.parse()).collect::<std::result::Result<_, _>>().map_err(|_| bad("dims"))?;
        let h: f64 = field("h")?.first().and_then(|v| v.parse().ok()).ok_or_else(|| bad("h"))?;
        let origin: Vec<f64> = field("origin")?.iter().map(|v| v.parse()).collect::<std::result::Result<_, _>>().map_err(|_| bad("origin"))?;
        let values: Vec<f64> = lines.map(|l| l.trim().parse()).collect::<std::result::Result<_, _>>().map_err(|_| bad("value"))?;
        if dims.len() != n {
            return Err(bad("dims length differs from n"));
        }
        FieldDump::new(dims, h, origin, values)
    }

    /// Little-endian: magic, version u32, n u32, dims u64×n, h f64, origin f64×n, values f64×Πdims.
    pub fn to_raw(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(16 + 16 * self.dims.len() + 8 * self.values.len());
        b.extend_from_slice(RAW_MAGIC);
        b.extend_from_slice(&RAW_VERSION.to_le_bytes());
        b.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for d in &self.dims {
            b.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        b.extend_from_slice(&self.h.to_le_bytes());
        for o in &self.origin {
            b.extend_from_slice(&o.to_le_bytes());
        }
        for v in &self.values {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    pub fn from_raw(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| LabError::Serde(format!("raw field dump: {m}"));
        let mut at = 0usize;
        let mut take = |k: usize| -> Result<&[u8]> {
            let s = bytes.get(at..at + k).ok_or_else(|| bad("truncated"))?;
            at += k;
            Ok(s)
        };
        if take(4)? != RAW_MAGIC {
            return Err(bad("bad magic"));
        }
        let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap());
        let u64_at = |s: &[u8]| u64::from_le_bytes(s.try_into().unwrap());
        let f64_at = |s: &[u8]| f64::from_le_bytes(s.try_into().unwrap());
        if u32_at(take(4)?) != RAW_VERSION {
            return Err(bad("unsupported version"));
        }
        let n = u32_at(take(4)?) as usize;
        let mut dims = Vec::with_capacity(n);
        for _ in 0..n {
            dims.push(u64_at(take(8)?) as usize);
        }
        let h = f64_at(take(8)?);
        let mut origin = Vec::with_capacity(n);
        for _ in 0..n {
            origin.push(f64_at(take(8)?));
        }
        let count: usize = dims.iter().product();
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            values.push(f64_at(take(8)?));
        }
        if at != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        FieldDump::new(dims, h, origin, values)
    }

    pub fn write(&self, path: &Path, format: DumpFormat) -> Result<()> {
        match format {
            DumpFormat::Text => std::fs::write(path, self.to_text())?,
            DumpFormat::Raw => std::fs::write(path, self.to_raw())?,
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        if bytes.starts_with(RAW_MAGIC) {
            Self::from_raw(&bytes)
        } else {
            Self::from_text(&String::from_utf8(bytes).map_err(|e| LabError::Serde(e.to_string()))?)
        }
    }
}

/// Columns x1..xn, sigma_weight.
pub fn boundary_csv(gamma: &BoundarySet) -> String {
    let n = gamma.ambient_dim();
    let mut s: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    s.push("sigma_weight".into());
    let mut out = s.join(",");
    out.push('\n');
    for (x, w) in gamma.samples().iter().zip(gamma.weights()) {
        for v in x {
            let _ = write!(out, "{v:.12e},");
        }
        let _ = writeln!(out, "{w:.12e}");
    }
    out
}

/// Columns cube_id, k, c1..cn, r_q, parent_id (−1 for roots), sigma_mass.
pub fn lattice_csv(lattice: &DyadicLattice, n: usize) -> String {
    let mut head = vec!["cube_id".to_string(), "k".into()];
    head.extend((1..=n).map(|i| format!("c{i}")));
    head.extend(["r_q".into(), "parent_id".into(), "sigma_mass".into()]);
    let mut out = head.join(",");
    out.push('\n');
    for c in &lattice.cubes {
        let _ = write!(out, "{},{},", c.id, c.k);
        for v in &c.center {
            let _ = write!(out, "{v:.12e},");
        }
        let parent = c.parent.map_or(-1, |p| p as i64);
        let _ = writeln!(out, "{:.12e},{parent},{:.12e}", c.inner_radius, c.sigma_mass);
    }
    out
}

/// Columns box_id, k, lo1..lon, side, dist_to_gamma.
pub fn boxes_csv(grid: &WhitneyGrid, gamma: &BoundarySet, boxes: &[BoxKey]) -> String {
    let n = grid.dim();
    let mut head = vec!["box_id".to_string(), "k".into()];
    head.extend((1..=n).map(|i| format!("lo{i}")));
    head.extend(["side".into(), "dist_to_gamma".into()]);
    let mut out = head.join(",");
    out.push('\n');
    for (i, b) in boxes.iter().enumerate() {
        let (lo, hi) = grid.bounds(b);
        let _ = write!(out, "{i},{},", grid.generation(b));
        for v in &lo {
            let _ = write!(out, "{v:.12e},");
        }
        let _ = writeln!(out, "{:.12e},{:.12e}", grid.side(b), gamma.distance_to_box(&lo, &hi));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dumps_round_trip() {
        let f = FieldDump::new(vec![2, 3], 0.125, vec![-1.0, 0.5], (0..6).map(|i| i as f64 / 7.0).collect()).unwrap();
        assert_eq!(FieldDump::from_text(&f.to_text()).unwrap(), f);
        let raw = f.to_raw();
        assert_eq!(raw.len(), 4 + 4 + 4 + 16 + 8 + 16 + 48);
        assert_eq!(FieldDump::from_raw(&raw).unwrap(), f);
        assert!(FieldDump::from_raw(&raw[..raw.len() - 1]).is_err());
    }
}
