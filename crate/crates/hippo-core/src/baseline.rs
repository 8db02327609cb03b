//! Correctness oracle and dense comparison index.
//!
//! [`oracle_scan`] answers a predicate by scanning every page; it is the
//! ground truth for search exactness. [`DenseIndex`] keeps one sorted
//! (key, tuple_id) pair per live tuple, standing in for a per-tuple dense
//! index in size and filtering comparisons.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::pagestore::{TableFile, TupleId};
use crate::predicate::{Atom, Predicate};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"HIPD";
const PAIR_BYTES: usize = 20; // key i64 + page u64 + slot u32

/// Scans every page of the table and returns the ids of live tuples
/// satisfying the predicate, in (page, slot) order.
pub fn oracle_scan(table: &TableFile, pred: &Predicate) -> Result<Vec<TupleId>> {
    let mut out = Vec::new();
    for page in 0..table.num_pages() {
        for (key, id) in table.page_live_entries(page)? {
            if pred.matches(key) {
                out.push(id);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseIndex {
    /// Sorted by (key, tuple_id), one pair per live tuple.
    pairs: Vec<(i64, TupleId)>,
}

impl DenseIndex {
    pub fn build(table: &TableFile) -> Result<Self> {
        if table.num_pages() == 0 {
            return Err(Error::EmptyTable);
        }
        let mut pairs = Vec::new();
        for page in 0..table.num_pages() {
            pairs.extend(table.page_live_entries(page)?);
        }
        pairs.sort_unstable();
        Ok(DenseIndex { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Range lookup over the sorted pairs: binary search to the conjunctive
    /// key interval, then filter by the full predicate.
    pub fn query(&self, pred: &Predicate) -> Vec<TupleId> {
        let (lo, hi) = key_interval(pred);
        let start = match lo {
            Some(l) => self.pairs.partition_point(|&(k, _)| k < l),
            None => 0,
        };
        let end = match hi {
            Some(h) => self.pairs.partition_point(|&(k, _)| k <= h),
            None => self.pairs.len(),
        };
        let mut out: Vec<TupleId> = self.pairs[start..end]
            .iter()
            .filter(|&&(k, _)| pred.matches(k))
            .map(|&(_, id)| id)
            .collect();
        out.sort_unstable();
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |source| Error::Io { path: path.to_path_buf(), source };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        w.write_all(MAGIC).map_err(io)?;
        w.write_all(&(self.pairs.len() as u64).to_le_bytes()).map_err(io)?;
        for &(key, id) in &self.pairs {
            w.write_all(&key.to_le_bytes()).map_err(io)?;
            w.write_all(&id.page.to_le_bytes()).map_err(io)?;
            w.write_all(&u32::from(id.slot).to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let io = |source| Error::Io { path: path.to_path_buf(), source };
        let malformed = |reason: &str| Error::MalformedFile {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let mut bytes = Vec::new();
        File::open(path).map_err(io)?.read_to_end(&mut bytes).map_err(io)?;
        if bytes.len() < 12 || &bytes[0..4] != MAGIC {
            return Err(malformed("bad magic"));
        }
        let count = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
        if bytes.len() != 12 + count * PAIR_BYTES {
            return Err(malformed("length mismatch"));
        }
        let mut pairs = Vec::with_capacity(count);
        for i in 0..count {
            let base = 12 + i * PAIR_BYTES;
            let key = i64::from_le_bytes(bytes[base..base + 8].try_into().unwrap());
            let page = u64::from_le_bytes(bytes[base + 8..base + 16].try_into().unwrap());
            let slot = u32::from_le_bytes(bytes[base + 16..base + 20].try_into().unwrap());
            pairs.push((key, TupleId { page, slot: slot as u16 }));
        }
        if pairs.windows(2).any(|w| w[0] > w[1]) {
            return Err(malformed("pairs not sorted"));
        }
        Ok(DenseIndex { pairs })
    }

    /// On-disk size: 12-byte header plus 20 bytes per pair.
    pub fn size_bytes(&self) -> u64 {
        12 + PAIR_BYTES as u64 * self.pairs.len() as u64
    }
}

/// Intersection of the predicate's atom intervals as closed key bounds.
fn key_interval(pred: &Predicate) -> (Option<i64>, Option<i64>) {
    let mut lo: Option<i64> = None;
    let mut hi: Option<i64> = None;
    for atom in pred.atoms() {
        let (alo, ahi) = match *atom {
            Atom::Equality(k) => (Some(k), Some(k)),
            Atom::Range { lo: l, hi: h, lo_inclusive, hi_inclusive } => (
                l.map(|v| if lo_inclusive { v } else { v.saturating_add(1) }),
                h.map(|v| if hi_inclusive { v } else { v.saturating_sub(1) }),
            ),
        };
        lo = match (lo, alo) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        hi = match (hi, ahi) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
    }
    (lo, hi)
}
