//! Bucket bitmaps: one bit per complete-histogram bucket.
//!
//! Bit `i - 1` stands for bucket `i`. The on-disk encoding is two-mode with
//! a 1-byte tag: mode 0 is the raw bit array, mode 1 is run-length coded as
//! a leading run-value byte followed by LEB128 run lengths. The encoder
//! picks whichever is smaller, so the encoded size never exceeds
//! `ceil(nbits / 8) + 2` bytes and collapses to a few bytes for sparse or
//! clustered bitmaps.

use crate::{Error, Result};

const TAG_RAW: u8 = 0;
const TAG_RLE: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BucketBitmap {
    nbits: u32,
    words: Vec<u64>,
}

impl BucketBitmap {
    pub fn new(nbits: u32) -> Self {
        let words = vec![0u64; nbits.div_ceil(64) as usize];
        BucketBitmap { nbits, words }
    }

    /// Bitmap with the given 1-based buckets set; panics on out-of-range ids
    /// (test convenience).
    pub fn from_buckets(nbits: u32, buckets: impl IntoIterator<Item = u32>) -> Self {
        let mut bm = BucketBitmap::new(nbits);
        for b in buckets {
            bm.set_bucket(b).expect("bucket in range");
        }
        bm
    }

    pub fn nbits(&self) -> u32 {
        self.nbits
    }

    /// Sets the bit for 1-based `bucket_id`. Idempotent.
    pub fn set_bucket(&mut self, bucket_id: u32) -> Result<()> {
        if bucket_id < 1 || bucket_id > self.nbits {
            return Err(Error::BucketOutOfRange(bucket_id, self.nbits));
        }
        let bit = (bucket_id - 1) as usize;
        self.words[bit / 64] |= 1u64 << (bit % 64);
        Ok(())
    }

    pub fn contains_bucket(&self, bucket_id: u32) -> bool {
        if bucket_id < 1 || bucket_id > self.nbits {
            return false;
        }
        let bit = (bucket_id - 1) as usize;
        self.words[bit / 64] & (1u64 << (bit % 64)) != 0
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Fraction of set buckets, in `[0, 1]`.
    pub fn density(&self) -> f64 {
        debug_assert!(self.nbits >= 1);
        f64::from(self.count_ones()) / f64::from(self.nbits)
    }

    /// True iff some bit is set in both bitmaps. Word-wise AND with early exit.
    pub fn intersects(&self, other: &BucketBitmap) -> Result<bool> {
        if self.nbits != other.nbits {
            return Err(Error::BitmapLengthMismatch(self.nbits, other.nbits));
        }
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .any(|(a, b)| a & b != 0))
    }

    pub fn union_with(&mut self, other: &BucketBitmap) -> Result<()> {
        if self.nbits != other.nbits {
            return Err(Error::BitmapLengthMismatch(self.nbits, other.nbits));
        }
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
        Ok(())
    }

    /// 1-based ids of set buckets, ascending.
    pub fn iter_set(&self) -> impl Iterator<Item = u32> + '_ {
        (1..=self.nbits).filter(|&b| self.contains_bucket(b))
    }

    /// Canonical compressed encoding: tag byte plus body.
    pub fn encode(&self) -> Vec<u8> {
        let raw = self.raw_bytes();
        let rle = self.rle_body();
        if rle.len() < raw.len() {
            let mut out = Vec::with_capacity(1 + rle.len());
            out.push(TAG_RLE);
            out.extend_from_slice(&rle);
            out
        } else {
            let mut out = Vec::with_capacity(1 + raw.len());
            out.push(TAG_RAW);
            out.extend_from_slice(&raw);
            out
        }
    }

    pub fn decode(bytes: &[u8], nbits: u32) -> Result<Self> {
        let (&tag, body) = bytes
            .split_first()
            .ok_or(Error::MalformedBitmap("missing tag byte"))?;
        match tag {
            TAG_RAW => {
                if body.len() != nbits.div_ceil(8) as usize {
                    return Err(Error::MalformedBitmap("raw body length mismatch"));
                }
                let mut bm = BucketBitmap::new(nbits);
                for (i, &byte) in body.iter().enumerate() {
                    for bit in 0..8 {
                        let pos = i * 8 + bit;
                        if byte & (1 << bit) != 0 {
                            if pos >= nbits as usize {
                                return Err(Error::MalformedBitmap("set bit past nbits"));
                            }
                            bm.words[pos / 64] |= 1u64 << (pos % 64);
                        }
                    }
                }
                Ok(bm)
            }
            TAG_RLE => {
                let (&first, mut rest) = body
                    .split_first()
                    .ok_or(Error::MalformedBitmap("missing run value"))?;
                if first > 1 {
                    return Err(Error::MalformedBitmap("run value must be 0 or 1"));
                }
                let mut bm = BucketBitmap::new(nbits);
                let mut value = first == 1;
                let mut pos: u64 = 0;
                while !rest.is_empty() {
                    let (run, tail) = decode_varint(rest)?;
                    rest = tail;
                    if value {
                        for p in pos..pos + run {
                            if p >= u64::from(nbits) {
                                return Err(Error::MalformedBitmap("runs exceed nbits"));
                            }
                            bm.words[(p / 64) as usize] |= 1u64 << (p % 64);
                        }
                    }
                    pos += run;
                    value = !value;
                }
                if pos != u64::from(nbits) {
                    return Err(Error::MalformedBitmap("runs do not cover nbits"));
                }
                Ok(bm)
            }
            _ => Err(Error::MalformedBitmap("unknown tag")),
        }
    }

    fn raw_bytes(&self) -> Vec<u8> {
        let nbytes = self.nbits.div_ceil(8) as usize;
        let mut out = vec![0u8; nbytes];
        for pos in 0..self.nbits as usize {
            if self.words[pos / 64] & (1u64 << (pos % 64)) != 0 {
                out[pos / 8] |= 1 << (pos % 8);
            }
        }
        out
    }

    fn rle_body(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let first = self.bit(0);
        out.push(first as u8);
        let mut value = first;
        let mut run: u64 = 0;
        for pos in 0..self.nbits as usize {
            if self.bit(pos) == value {
                run += 1;
            } else {
                encode_varint(run, &mut out);
                value = !value;
                run = 1;
            }
        }
        encode_varint(run, &mut out);
        out
    }

    fn bit(&self, pos: usize) -> bool {
        self.words[pos / 64] & (1u64 << (pos % 64)) != 0
    }
}

fn encode_varint(mut v: u64, out: &mut Vec<u8>) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

fn decode_varint(bytes: &[u8]) -> Result<(u64, &[u8])> {
    let mut v: u64 = 0;
    for (i, &byte) in bytes.iter().enumerate() {
        if i >= 10 {
            break;
        }
        v |= u64::from(byte & 0x7f) << (7 * i);
        if byte & 0x80 == 0 {
            return Ok((v, &bytes[i + 1..]));
        }
    }
    Err(Error::MalformedBitmap("truncated varint"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Bitmap string in bucket order: leftmost char = bucket 1.
    fn as_string(bm: &BucketBitmap) -> String {
        (1..=bm.nbits())
            .map(|b| if bm.contains_bucket(b) { '1' } else { '0' })
            .collect()
    }

    #[test]
    fn buckets_2_3_4_of_5_render_as_01110() {
        let bm = BucketBitmap::from_buckets(5, [2, 3, 4]);
        assert_eq!(as_string(&bm), "01110");
    }

    #[test]
    fn set_is_idempotent() {
        let mut bm = BucketBitmap::new(5);
        bm.set_bucket(3).unwrap();
        let snapshot = bm.clone();
        bm.set_bucket(3).unwrap();
        assert_eq!(bm, snapshot);
    }

    #[test]
    fn set_out_of_range_errors() {
        let mut bm = BucketBitmap::new(5);
        assert!(matches!(bm.set_bucket(6), Err(Error::BucketOutOfRange(6, 5))));
        assert!(matches!(bm.set_bucket(0), Err(Error::BucketOutOfRange(0, 5))));
    }

    #[test]
    fn intersects_on_joint_bucket() {
        let pred = BucketBitmap::from_buckets(5, [3]); // 00100
        let partial = BucketBitmap::from_buckets(5, [2, 3, 4]); // 01110
        assert!(pred.intersects(&partial).unwrap());
    }

    #[test]
    fn disjoint_bitmaps_do_not_intersect() {
        let a = BucketBitmap::from_buckets(5, [5]); // 00001
        let b = BucketBitmap::from_buckets(5, [2, 3, 4]); // 01110
        assert!(!a.intersects(&b).unwrap());
    }

    #[test]
    fn all_zeros_absorbs() {
        let zeros = BucketBitmap::new(5);
        let any = BucketBitmap::from_buckets(5, [1, 2, 3, 4, 5]);
        assert!(!any.intersects(&zeros).unwrap());
    }

    #[test]
    fn length_mismatch_errors() {
        let a = BucketBitmap::new(5);
        let b = BucketBitmap::new(6);
        assert!(matches!(a.intersects(&b), Err(Error::BitmapLengthMismatch(5, 6))));
    }

    #[test]
    fn density_examples() {
        assert_eq!(BucketBitmap::from_buckets(5, [2, 3, 4]).density(), 0.6);
        assert_eq!(BucketBitmap::from_buckets(5, [1, 2, 3, 4, 5]).density(), 1.0);
        assert_eq!(BucketBitmap::new(5).density(), 0.0);
    }

    #[test]
    fn all_zero_400_bits_encodes_tiny() {
        let bm = BucketBitmap::new(400);
        let enc = bm.encode();
        assert!(enc.len() <= 8, "encoded {} bytes", enc.len());
        assert_eq!(BucketBitmap::decode(&enc, 400).unwrap(), bm);
    }

    #[test]
    fn alternating_400_bits_falls_back_to_raw() {
        let bm = BucketBitmap::from_buckets(400, (1..=400).filter(|b| b % 2 == 1));
        let enc = bm.encode();
        assert!(enc.len() <= 52, "encoded {} bytes", enc.len());
        assert_eq!(enc[0], TAG_RAW);
        assert_eq!(BucketBitmap::decode(&enc, 400).unwrap(), bm);
    }

    #[test]
    fn decode_rejects_malformed() {
        assert!(BucketBitmap::decode(&[], 5).is_err());
        assert!(BucketBitmap::decode(&[7, 0], 5).is_err());
        assert!(BucketBitmap::decode(&[TAG_RAW, 0xff], 5).is_err()); // set bit past nbits
        assert!(BucketBitmap::decode(&[TAG_RLE, 0, 3], 5).is_err()); // runs cover 3 of 5
    }

    proptest! {
        #[test]
        fn roundtrip_and_size_bound(
            nbits in 1u32..700,
            seed_bits in proptest::collection::vec(any::<u32>(), 0..64),
        ) {
            let mut bm = BucketBitmap::new(nbits);
            for s in seed_bits {
                bm.set_bucket(s % nbits + 1).unwrap();
            }
            let enc = bm.encode();
            prop_assert!(enc.len() <= nbits.div_ceil(8) as usize + 2);
            let back = BucketBitmap::decode(&enc, nbits).unwrap();
            prop_assert_eq!(&back, &bm);
            // canonical: equal bitmaps encode identically
            prop_assert_eq!(back.encode(), enc);
        }

        #[test]
        fn intersects_matches_naive_oracle(
            nbits in 1u32..200,
            a_bits in proptest::collection::vec(any::<u32>(), 0..32),
            b_bits in proptest::collection::vec(any::<u32>(), 0..32),
        ) {
            let a = BucketBitmap::from_buckets(nbits, a_bits.iter().map(|s| s % nbits + 1));
            let b = BucketBitmap::from_buckets(nbits, b_bits.iter().map(|s| s % nbits + 1));
            let naive = (1..=nbits).any(|i| a.contains_bucket(i) && b.contains_bucket(i));
            prop_assert_eq!(a.intersects(&b).unwrap(), naive);
        }

        #[test]
        fn density_is_monotone_under_set(
            nbits in 1u32..200,
            bit in any::<u32>(),
            base in proptest::collection::vec(any::<u32>(), 0..32),
        ) {
            let mut bm = BucketBitmap::from_buckets(nbits, base.iter().map(|s| s % nbits + 1));
            let before = bm.density();
            bm.set_bucket(bit % nbits + 1).unwrap();
            prop_assert!(bm.density() >= before);
        }
    }
}
