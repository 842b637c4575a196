//! Discrete truncated coagulation operator `Q_n` on a geometric grid.
//!
//! Gain placement is a two-point fixed-pivot split: a merger of particles at
//! centers `x_i`, `x_j` is shared between the pivots bracketing `x_i + x_j`
//! with weights summing to one and preserving `x_i + x_j`. The discrete first
//! moment of `Q_n` therefore vanishes up to round-off and each merger removes
//! exactly one particle. Mergers landing beyond the last pivot leave the grid;
//! their mass is reported as an overflow rate.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{DensityState, SizeGrid};
use crate::kernels::TruncatedKernel;

const NO_TARGET: u32 = u32::MAX;
const CACHE_MAGIC: &[u8; 8] = b"GCPAIRS1";

/// One unordered pair `(i, j)`, `i ≤ j`, with a nonzero truncated kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairEntry {
    pub i: u32,
    pub j: u32,
    /// `K_n(x_i, x_j)`
    pub kernel: f64,
    /// Lower pivot `lo`; the upper pivot is `lo + 1`. `None` for overflow pairs.
    lo: u32,
    pub w_lo: f64,
    pub w_hi: f64,
}

impl PairEntry {
    pub fn target(&self) -> Option<(usize, usize)> {
        (self.lo != NO_TARGET).then(|| (self.lo as usize, self.lo as usize + 1))
    }
}

/// Precomputed kernel values and gain splits for one (kernel, grid, n).
#[derive(Clone, Debug)]
pub struct PairTable {
    grid: Arc<SizeGrid>,
    n: u32,
    beta_n: f64,
    entries: Vec<PairEntry>,
}

/// `Q_n(c)` as a density rate per cell plus the overflow mass rate.
#[derive(Clone, Debug)]
pub struct QnRate {
    pub rate: Vec<f64>,
    pub overflow_mass_rate: f64,
}

impl PairTable {
    pub fn build(kernel: &TruncatedKernel, grid: &Arc<SizeGrid>) -> Result<Self> {
        if kernel.lower() < grid.vmin() || kernel.upper() > grid.vmax() {
            return Err(Error::Config(format!(
                "truncation window [1/{n}, {n}] must lie inside the grid [{}, {}]",
                grid.vmin(),
                grid.vmax(),
                n = kernel.n
            )));
        }
        let x = grid.centers();
        let active: Vec<usize> = (0..grid.cells()).filter(|&i| kernel.in_support(x[i])).collect();
        let mut entries = Vec::with_capacity(active.len() * (active.len() + 1) / 2);
        for (a, &i) in active.iter().enumerate() {
            for &j in &active[a..] {
                let k = kernel.evaluate(x[i], x[j]);
                if k == 0.0 {
                    continue;
                }
                let s = x[i] + x[j];
                let (lo, w_lo, w_hi) = match grid.pivot_below(s) {
                    Some(lo) => {
                        let w_hi = (s - x[lo]) / (x[lo + 1] - x[lo]);
                        (lo as u32, 1.0 - w_hi, w_hi)
                    }
                    None => (NO_TARGET, 0.0, 0.0),
                };
                entries.push(PairEntry { i: i as u32, j: j as u32, kernel: k, lo, w_lo, w_hi });
            }
        }
        Ok(Self { grid: grid.clone(), n: kernel.n, beta_n: kernel.beta_n, entries })
    }

    pub fn grid(&self) -> &Arc<SizeGrid> {
        &self.grid
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn beta_n(&self) -> f64 {
        self.beta_n
    }

    pub fn entries(&self) -> &[PairEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `Q_n(state)`.
    pub fn apply(&self, state: &DensityState) -> QnRate {
        let mut rate = vec![0.0; self.grid.cells()];
        let overflow_mass_rate = self.apply_into(state.values(), &mut rate);
        QnRate { rate, overflow_mass_rate }
    }

    /// Writes `Q_n(c)` into `out` and returns the overflow mass rate.
    ///
    /// Each unordered pair is visited once; number rates are accumulated per
    /// cell and converted to densities at the end.
    pub fn apply_into(&self, c: &[f64], out: &mut [f64]) -> f64 {
        let w = self.grid.widths();
        let x = self.grid.centers();
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut overflow = 0.0;
        for e in &self.entries {
            let (i, j) = (e.i as usize, e.j as usize);
            let p = e.kernel * c[i] * w[i] * c[j] * w[j];
            if p == 0.0 {
                continue;
            }
            let events = if i == j { 0.5 * p } else { p };
            out[i] -= p;
            if i != j {
                out[j] -= p;
            }
            match e.target() {
                Some((lo, hi)) => {
                    out[lo] += events * e.w_lo;
                    out[hi] += events * e.w_hi;
                }
                None => overflow += events * (x[i] + x[j]),
            }
        }
        for (o, wi) in out.iter_mut().zip(w) {
            *o /= wi;
        }
        overflow
    }

    /// Reference evaluation enumerating ordered pairs `(i, j)` and `(j, i)`
    /// separately with the factor ½ on the gain.
    pub fn apply_ordered(&self, state: &DensityState) -> QnRate {
        let c = state.values();
        let w = self.grid.widths();
        let x = self.grid.centers();
        let mut rate = vec![0.0; self.grid.cells()];
        let mut overflow = 0.0;
        for e in &self.entries {
            let orders: &[(usize, usize)] = if e.i == e.j {
                &[(e.i as usize, e.j as usize)]
            } else {
                &[(e.i as usize, e.j as usize), (e.j as usize, e.i as usize)]
            };
            for &(i, j) in orders {
                let p = e.kernel * c[i] * w[i] * c[j] * w[j];
                rate[i] -= p;
                match e.target() {
                    Some((lo, hi)) => {
                        rate[lo] += 0.5 * p * e.w_lo;
                        rate[hi] += 0.5 * p * e.w_hi;
                    }
                    None => overflow += 0.5 * p * (x[i] + x[j]),
                }
            }
        }
        for (o, wi) in rate.iter_mut().zip(w) {
            *o /= wi;
        }
        QnRate { rate, overflow_mass_rate: overflow }
    }

    /// `‖Q_n(c1) − Q_n(c2)‖ / (‖c1 − c2‖ (‖c1‖ + ‖c2‖))` in `L¹`; `None` when
    /// `c1 = c2`.
    pub fn lipschitz_probe(&self, c1: &DensityState, c2: &DensityState) -> Result<Option<f64>> {
        let dist = crate::grid::l1_distance(c1, c2)?;
        if dist == 0.0 {
            return Ok(None);
        }
        let (q1, q2) = (self.apply(c1), self.apply(c2));
        let w = self.grid.widths();
        let dq: f64 = q1.rate.iter().zip(&q2.rate).zip(w).map(|((a, b), wi)| (a - b).abs() * wi).sum();
        Ok(Some(dq / (dist * (c1.l1_norm() + c2.l1_norm()))))
    }

    /// Writes the table to a binary cache file tagged with `key`.
    pub fn write_cache(&self, path: &Path, key: &str) -> Result<()> {
        let mut buf = Vec::with_capacity(64 + self.entries.len() * 40);
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(&(key.len() as u32).to_le_bytes());
        buf.extend_from_slice(key.as_bytes());
        buf.extend_from_slice(&self.n.to_le_bytes());
        buf.extend_from_slice(&self.beta_n.to_le_bytes());
        buf.extend_from_slice(&(self.grid.cells() as u64).to_le_bytes());
        buf.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for e in &self.entries {
            buf.extend_from_slice(&e.i.to_le_bytes());
            buf.extend_from_slice(&e.j.to_le_bytes());
            buf.extend_from_slice(&e.lo.to_le_bytes());
            buf.extend_from_slice(&e.kernel.to_le_bytes());
            buf.extend_from_slice(&e.w_lo.to_le_bytes());
            buf.extend_from_slice(&e.w_hi.to_le_bytes());
        }
        fs::File::create(path)?.write_all(&buf)?;
        Ok(())
    }

    /// Reads a table written by [`PairTable::write_cache`]; the stored key must
    /// equal `key` and the cell count must match `grid`.
    pub fn read_cache(path: &Path, key: &str, grid: &Arc<SizeGrid>) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut r = ByteReader { bytes: &bytes, pos: 0 };
        if r.take(8)? != CACHE_MAGIC {
            return Err(Error::Input("not a pair-table cache file".into()));
        }
        let key_len = r.u32()? as usize;
        if r.take(key_len)? != key.as_bytes() {
            return Err(Error::Input("pair-table cache key mismatch".into()));
        }
        let n = r.u32()?;
        let beta_n = r.f64()?;
        if r.u64()? as usize != grid.cells() {
            return Err(Error::Input("pair-table cache built for another grid".into()));
        }
        let count = r.u64()? as usize;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let (i, j, lo) = (r.u32()?, r.u32()?, r.u32()?);
            let (kernel, w_lo, w_hi) = (r.f64()?, r.f64()?, r.f64()?);
            entries.push(PairEntry { i, j, kernel, lo, w_lo, w_hi });
        }
        Ok(Self { grid: grid.clone(), n, beta_n, entries })
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos + len;
        if end > self.bytes.len() {
            return Err(Error::Io(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated cache file")));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
