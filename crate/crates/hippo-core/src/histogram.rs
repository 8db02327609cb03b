//! Complete equi-depth (height-balanced) histogram over the key attribute.
//!
//! Bucket `i` (1-based) covers the half-open interval `[b[i-1], b[i])`;
//! the last bucket is closed on the right. Out-of-range keys clamp to the
//! first/last bucket so that keys inserted after the build still map to a
//! bucket and filtering stays free of false negatives.

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompleteHistogram {
    /// `resolution + 1` non-decreasing boundary keys.
    boundaries: Vec<i64>,
}

impl CompleteHistogram {
    /// Builds the histogram from the key multiset by full sort: boundary `k`
    /// is the `k/H` quantile, the last boundary is the maximum key.
    pub fn build(mut keys: Vec<i64>, resolution: u32) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::ZeroResolution);
        }
        if keys.is_empty() {
            return Err(Error::EmptyTable);
        }
        let card = keys.len() as u64;
        if resolution as u64 > card {
            return Err(Error::ResolutionTooLarge(resolution, card));
        }
        keys.sort_unstable();
        let h = resolution as u64;
        let mut boundaries = Vec::with_capacity(resolution as usize + 1);
        for k in 0..h {
            boundaries.push(keys[((k * card) / h) as usize]);
        }
        boundaries.push(*keys.last().expect("non-empty"));
        Ok(CompleteHistogram { boundaries })
    }

    pub fn from_boundaries(boundaries: Vec<i64>) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(Error::ZeroResolution);
        }
        if boundaries.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::MalformedBitmap("histogram boundaries must be non-decreasing"));
        }
        Ok(CompleteHistogram { boundaries })
    }

    pub fn resolution(&self) -> u32 {
        (self.boundaries.len() - 1) as u32
    }

    pub fn boundaries(&self) -> &[i64] {
        &self.boundaries
    }

    /// Bucket containing `key` after clamping, in `1..=H`.
    ///
    /// Equal boundaries (heavy duplicates) create empty buckets; the binary
    /// search resolves them to the first matching bucket.
    pub fn bucket_of(&self, key: i64) -> u32 {
        let h = self.resolution() as usize;
        let b = &self.boundaries;
        if key < b[0] {
            return 1;
        }
        if key > b[h] {
            return h as u32;
        }
        // First i in 1..=H with key < b[i]; if it exists it is the unique
        // half-open container [b[i-1], b[i]).
        let i = b[1..].partition_point(|&x| x <= key) + 1;
        if i <= h {
            return i as u32;
        }
        // key == b[H], possibly a duplicated boundary: first bucket whose
        // closed interval contains key.
        (b[1..].partition_point(|&x| x < key) + 1) as u32
    }

    /// Buckets whose interval intersects the (optionally bounded) predicate
    /// interval, as an inclusive 1-based range. `None` means the interval is
    /// unsatisfiable over the integer key domain.
    pub fn buckets_hit_by_range(
        &self,
        lo: Option<i64>,
        hi: Option<i64>,
        lo_inclusive: bool,
        hi_inclusive: bool,
    ) -> Result<Option<(u32, u32)>> {
        if let (Some(l), Some(h)) = (lo, hi) {
            if l > h {
                return Err(Error::InvalidRange(l, h));
            }
        }
        // Normalize to closed integer bounds.
        let lo_eff = match lo {
            None => i64::MIN,
            Some(l) if lo_inclusive => l,
            Some(l) => match l.checked_add(1) {
                Some(v) => v,
                None => return Ok(None),
            },
        };
        let hi_eff = match hi {
            None => i64::MAX,
            Some(h) if hi_inclusive => h,
            Some(h) => match h.checked_sub(1) {
                Some(v) => v,
                None => return Ok(None),
            },
        };
        if lo_eff > hi_eff {
            return Ok(None);
        }
        Ok(Some((self.bucket_of(lo_eff), self.bucket_of(hi_eff))))
    }
}
