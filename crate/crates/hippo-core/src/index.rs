//! The sparse index proper.
//!
//! An index entry summarizes a run of contiguous heap pages with a partial
//! histogram bitmap. Entries live in an append-only region addressed by
//! byte offset; a sorted list of entry addresses in ascending `start_page`
//! order supports binary search during maintenance. Updated entries are
//! rewritten in place when the re-encoded bitmap fits the old slot and
//! relocated to the region tail otherwise, with only the sorted-list
//! pointer rewritten. Dead slots from relocation are left as garbage.
//!
//! Index file format (little-endian): header {magic `HIPX`, version u32,
//! H u32, D in micro-units u32, num_entries u64, sorted_list_offset u64,
//! entries_offset u64, table path (len u16, bytes)}; histogram block
//! {H u32, boundaries (H+1) x i64}; sorted list (num_entries x u64 region
//! offsets); entry region. Entry record: start_page u64, end_page u64,
//! enc_len u16, encoded bitmap.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::bitset::BucketBitmap;
use crate::histogram::CompleteHistogram;
use crate::pagestore::{TableFile, Tuple, TupleId};
use crate::predicate::Predicate;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"HIPX";
const VERSION: u32 = 1;
const DENSITY_SCALE: f64 = 1_000_000.0;
const RECORD_HEADER_BYTES: usize = 18; // start u64 + end u64 + enc_len u16

/// Decoded view of one index entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub start_page: u64,
    pub end_page: u64,
    pub partial: BucketBitmap,
}

/// Marks of possible qualified pages, bit `p` for page ordinal `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageBitmap {
    npages: u64,
    words: Vec<u64>,
}

impl PageBitmap {
    pub fn new(npages: u64) -> Self {
        PageBitmap {
            npages,
            words: vec![0u64; npages.div_ceil(64) as usize],
        }
    }

    pub fn npages(&self) -> u64 {
        self.npages
    }

    pub fn mark_range(&mut self, start: u64, end: u64) {
        for p in start..=end.min(self.npages.saturating_sub(1)) {
            self.words[(p / 64) as usize] |= 1u64 << (p % 64);
        }
    }

    pub fn is_marked(&self, page: u64) -> bool {
        page < self.npages && self.words[(page / 64) as usize] & (1u64 << (page % 64)) != 0
    }

    pub fn count_marked(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    pub fn iter_marked(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.npages).filter(|&p| self.is_marked(p))
    }
}

/// Result of one eager insert, for maintenance-cost accounting.
#[derive(Debug, Clone, Copy)]
pub struct InsertOutcome {
    pub tuple_id: TupleId,
    /// Sorted-list probes spent locating the affected entry.
    pub probes: u32,
    /// Entry no longer fit its slot and was appended at the region tail.
    pub relocated: bool,
    /// A fresh entry was created for a page past the summarized range.
    pub created_entry: bool,
}

#[derive(Debug, Clone)]
pub struct HippoIndex {
    density_micro: u32,
    histogram: CompleteHistogram,
    table_path: PathBuf,
    entry_region: Vec<u8>,
    sorted_list: Vec<u64>,
}

impl HippoIndex {
    /// Initializes the index with a single pass over the table pages: the
    /// buckets hit by each page's live tuples are OR-ed into a working
    /// bitmap, and the working entry is closed as soon as its density
    /// exceeds the threshold. The final working entry is flushed even if
    /// its density is at or below the threshold.
    pub fn build(table: &TableFile, resolution: u32, density: f64) -> Result<Self> {
        let histogram = CompleteHistogram::build(table.all_live_keys(), resolution)?;
        Self::build_with_histogram(table, histogram, density)
    }

    /// Build against a pre-computed histogram. The histogram must describe
    /// the same key population the search path will use.
    pub fn build_with_histogram(
        table: &TableFile,
        histogram: CompleteHistogram,
        density: f64,
    ) -> Result<Self> {
        if !(density > 0.0 && density <= 1.0) {
            return Err(Error::InvalidDensity(density));
        }
        if table.num_pages() == 0 {
            return Err(Error::EmptyTable);
        }
        let mut index = HippoIndex {
            density_micro: (density * DENSITY_SCALE).round() as u32,
            histogram,
            table_path: table.path().to_path_buf(),
            entry_region: Vec::new(),
            sorted_list: Vec::new(),
        };
        let h = index.histogram.resolution();

        let mut working = BucketBitmap::new(h);
        let mut start_page = 0u64;
        for page in 0..table.num_pages() {
            for key in table.page_live_keys(page)? {
                working.set_bucket(index.histogram.bucket_of(key))?;
            }
            if working.density() > index.density() {
                let addr = index.append_record(start_page, page, &working);
                index.sorted_list.push(addr);
                working = BucketBitmap::new(h);
                start_page = page + 1;
            }
        }
        if start_page < table.num_pages() {
            let addr = index.append_record(start_page, table.num_pages() - 1, &working);
            index.sorted_list.push(addr);
        }
        Ok(index)
    }

    pub fn density(&self) -> f64 {
        f64::from(self.density_micro) / DENSITY_SCALE
    }

    pub fn resolution(&self) -> u32 {
        self.histogram.resolution()
    }

    pub fn histogram(&self) -> &CompleteHistogram {
        &self.histogram
    }

    pub fn table_path(&self) -> &Path {
        &self.table_path
    }

    pub fn num_entries(&self) -> u64 {
        self.sorted_list.len() as u64
    }

    /// One past the last summarized page.
    pub fn covered_pages(&self) -> u64 {
        match self.sorted_list.last() {
            Some(&addr) => self.read_range(addr).1 + 1,
            None => 0,
        }
    }

    /// Entries decoded in ascending page order.
    pub fn entries(&self) -> Vec<IndexEntry> {
        self.sorted_list
            .iter()
            .map(|&addr| self.read_entry(addr))
            .collect()
    }

    /// Serialized size of the index file, including relocation garbage.
    pub fn size_bytes(&self) -> u64 {
        let header = 4 + 4 + 4 + 4 + 8 + 8 + 8 + 2 + self.table_path_bytes().len();
        let hist = 4 + 8 * self.histogram.boundaries().len();
        (header + hist + 8 * self.sorted_list.len() + self.entry_region.len()) as u64
    }

    /// Step 2 of search: page bitmap of every page whose entry's partial
    /// histogram has joint buckets with the predicate bitmap.
    pub fn filter_pages(&self, pred_bitmap: &BucketBitmap) -> Result<PageBitmap> {
        let mut pages = PageBitmap::new(self.covered_pages());
        for &addr in &self.sorted_list {
            let entry = self.read_entry(addr);
            if entry.partial.intersects(pred_bitmap)? {
                pages.mark_range(entry.start_page, entry.end_page);
            }
        }
        Ok(pages)
    }

    /// Full three-step search: convert the predicate, filter false
    /// positives, inspect the surviving pages. Returns qualifying tuples in
    /// (page, slot) order.
    #[cfg(feature = "parallel")]
    pub fn search(&self, table: &TableFile, pred: &Predicate) -> Result<Vec<Tuple>> {
        self.check_coverage(table)?;
        let pages = self.filter_pages(&pred.to_bitmap(&self.histogram)?)?;
        let marked: Vec<u64> = pages.iter_marked().collect();
        let per_page: Vec<Result<Vec<Tuple>>> = marked
            .par_iter()
            .map(|&p| inspect_page(table, p, pred))
            .collect();
        let mut out = Vec::new();
        for r in per_page {
            out.extend(r?);
        }
        Ok(out)
    }

    #[cfg(not(feature = "parallel"))]
    pub fn search(&self, table: &TableFile, pred: &Predicate) -> Result<Vec<Tuple>> {
        self.search_sequential(table, pred)
    }

    /// Sequential page inspection; the data-parallel [`Self::search`] must
    /// return exactly the same tuples.
    pub fn search_sequential(&self, table: &TableFile, pred: &Predicate) -> Result<Vec<Tuple>> {
        self.check_coverage(table)?;
        let pages = self.filter_pages(&pred.to_bitmap(&self.histogram)?)?;
        let mut out = Vec::new();
        for p in pages.iter_marked() {
            out.extend(inspect_page(table, p, pred)?);
        }
        Ok(out)
    }

    /// Binary search over the sorted entry list for the entry summarizing
    /// `page_id`. Returns the entry address (if any) and the number of
    /// sorted-list probes spent, at most `ceil(log2(num_entries)) + 1`.
    pub fn locate_entry(&self, page_id: u64) -> (Option<u64>, u32) {
        let n = self.sorted_list.len();
        let mut probes = 0u32;
        // Rightmost entry with start_page <= page_id, tracking its range so
        // the final containment check costs no extra probe.
        let mut candidate: Option<(u64, u64)> = None; // (addr, end_page)
        let (mut lo, mut hi) = (0usize, n);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            let addr = self.sorted_list[mid];
            let (start, end) = self.read_range(addr);
            probes += 1;
            if start <= page_id {
                candidate = Some((addr, end));
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        match candidate {
            Some((addr, end)) if page_id <= end => (Some(addr), probes),
            _ => (None, probes),
        }
    }

    /// Eager maintenance for one inserted tuple: appends to the table, then
    /// updates the summary of the tuple's page. A tuple landing on a fresh
    /// page extends the last entry while that entry's density is below the
    /// threshold and opens a new entry otherwise.
    pub fn insert(
        &mut self,
        table: &mut TableFile,
        key: i64,
        payload: &[u8],
    ) -> Result<InsertOutcome> {
        let covered = self.covered_pages();
        if table.num_pages() > covered {
            return Err(Error::StaleIndex { indexed: covered, actual: table.num_pages() });
        }
        let tuple_id = table.append_tuple(key, payload)?;
        let bucket = self.histogram.bucket_of(key);
        let (found, probes) = self.locate_entry(tuple_id.page);

        let mut outcome = InsertOutcome { tuple_id, probes, relocated: false, created_entry: false };
        match found {
            Some(addr) => {
                let mut entry = self.read_entry(addr);
                if !entry.partial.contains_bucket(bucket) {
                    entry.partial.set_bucket(bucket)?;
                    outcome.relocated = self.rewrite(addr, &entry)?;
                }
            }
            None => {
                // tuple_id.page == covered: the append opened a new page.
                let last_idx = self.sorted_list.len() - 1;
                let addr = self.sorted_list[last_idx];
                let mut last = self.read_entry(addr);
                if last.partial.density() < self.density() {
                    last.end_page = tuple_id.page;
                    last.partial.set_bucket(bucket)?;
                    outcome.relocated = self.rewrite(addr, &last)?;
                } else {
                    let partial = BucketBitmap::from_buckets(self.resolution(), [bucket]);
                    let new_addr = self.append_record(tuple_id.page, tuple_id.page, &partial);
                    self.sorted_list.push(new_addr);
                    outcome.created_entry = true;
                }
            }
        }
        Ok(outcome)
    }

    /// Lazy maintenance after deletes: every entry with a deletion note on
    /// any of its pages has those pages vacuumed and its partial histogram
    /// rebuilt from the surviving tuples. Page ranges never change; entries
    /// whose re-encoded bitmap no longer fits are relocated.
    pub fn vacuum(&mut self, table: &mut TableFile) -> Result<()> {
        for idx in 0..self.sorted_list.len() {
            let addr = self.sorted_list[idx];
            let mut entry = self.read_entry(addr);
            let end = entry.end_page.min(table.num_pages().saturating_sub(1));
            let mut dirty = false;
            for page in entry.start_page..=end {
                if table.page_has_deletions(page)? {
                    table.vacuum_page(page)?;
                    dirty = true;
                }
            }
            if !dirty {
                continue;
            }
            let mut partial = BucketBitmap::new(self.resolution());
            for page in entry.start_page..=end {
                for key in table.page_live_keys(page)? {
                    partial.set_bucket(self.histogram.bucket_of(key))?;
                }
            }
            entry.partial = partial;
            self.rewrite(addr, &entry)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |source| Error::Io { path: path.to_path_buf(), source };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        let path_bytes = self.table_path_bytes();
        let header_len = 4 + 4 + 4 + 4 + 8 + 8 + 8 + 2 + path_bytes.len();
        let hist_len = 4 + 8 * self.histogram.boundaries().len();
        let sorted_list_offset = header_len as u64 + hist_len as u64;
        let entries_offset = sorted_list_offset + 8 * self.sorted_list.len() as u64;

        w.write_all(MAGIC).map_err(io)?;
        w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&self.resolution().to_le_bytes()).map_err(io)?;
        w.write_all(&self.density_micro.to_le_bytes()).map_err(io)?;
        w.write_all(&(self.sorted_list.len() as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&sorted_list_offset.to_le_bytes()).map_err(io)?;
        w.write_all(&entries_offset.to_le_bytes()).map_err(io)?;
        w.write_all(&(path_bytes.len() as u16).to_le_bytes()).map_err(io)?;
        w.write_all(path_bytes).map_err(io)?;

        w.write_all(&self.resolution().to_le_bytes()).map_err(io)?;
        for &b in self.histogram.boundaries() {
            w.write_all(&b.to_le_bytes()).map_err(io)?;
        }
        for &addr in &self.sorted_list {
            w.write_all(&addr.to_le_bytes()).map_err(io)?;
        }
        w.write_all(&self.entry_region).map_err(io)?;
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
        let mut cur = Cursor::new(&bytes);
        if cur.take(4)? != MAGIC {
            return Err(malformed("bad magic"));
        }
        if cur.u32()? != VERSION {
            return Err(malformed("unsupported version"));
        }
        let h = cur.u32()?;
        let density_micro = cur.u32()?;
        let num_entries = cur.u64()? as usize;
        let sorted_list_offset = cur.u64()? as usize;
        let entries_offset = cur.u64()? as usize;
        let path_len = cur.u16()? as usize;
        let table_path = PathBuf::from(
            String::from_utf8(cur.take(path_len)?.to_vec())
                .map_err(|_| malformed("table path not utf-8"))?,
        );
        let hist_h = cur.u32()?;
        if hist_h != h {
            return Err(malformed("histogram resolution mismatch"));
        }
        let mut boundaries = Vec::with_capacity(h as usize + 1);
        for _ in 0..=h {
            boundaries.push(cur.u64()? as i64);
        }
        let histogram = CompleteHistogram::from_boundaries(boundaries)
            .map_err(|_| malformed("bad histogram boundaries"))?;
        if cur.pos != sorted_list_offset {
            return Err(malformed("sorted list offset mismatch"));
        }
        let mut sorted_list = Vec::with_capacity(num_entries);
        for _ in 0..num_entries {
            sorted_list.push(cur.u64()?);
        }
        if cur.pos != entries_offset {
            return Err(malformed("entry region offset mismatch"));
        }
        let entry_region = bytes[entries_offset..].to_vec();
        let index = HippoIndex {
            density_micro,
            histogram,
            table_path,
            entry_region,
            sorted_list,
        };
        // validate addresses before handing the index out
        for &addr in &index.sorted_list {
            if addr as usize + RECORD_HEADER_BYTES > index.entry_region.len() {
                return Err(malformed("entry address out of range"));
            }
            let enc_len = index.read_enc_len(addr);
            if addr as usize + RECORD_HEADER_BYTES + enc_len > index.entry_region.len() {
                return Err(malformed("entry record out of range"));
            }
            BucketBitmap::decode(
                &index.entry_region[addr as usize + RECORD_HEADER_BYTES..]
                    [..enc_len],
                h,
            )?;
        }
        Ok(index)
    }

    fn check_coverage(&self, table: &TableFile) -> Result<()> {
        if self.covered_pages() != table.num_pages() {
            return Err(Error::StaleIndex {
                indexed: self.covered_pages(),
                actual: table.num_pages(),
            });
        }
        Ok(())
    }

    fn table_path_bytes(&self) -> &[u8] {
        self.table_path.to_str().map(str::as_bytes).unwrap_or(b"")
    }

    fn append_record(&mut self, start: u64, end: u64, partial: &BucketBitmap) -> u64 {
        let addr = self.entry_region.len() as u64;
        let enc = partial.encode();
        self.entry_region.extend_from_slice(&start.to_le_bytes());
        self.entry_region.extend_from_slice(&end.to_le_bytes());
        self.entry_region.extend_from_slice(&(enc.len() as u16).to_le_bytes());
        self.entry_region.extend_from_slice(&enc);
        addr
    }

    /// Writes the entry back at `addr` when the encoding fits the old slot,
    /// otherwise appends it at the tail and rewrites the sorted-list
    /// pointer. Returns whether the entry was relocated.
    fn rewrite(&mut self, addr: u64, entry: &IndexEntry) -> Result<bool> {
        let enc = entry.partial.encode();
        let old_len = self.read_enc_len(addr);
        if enc.len() <= old_len {
            let base = addr as usize;
            self.entry_region[base..base + 8].copy_from_slice(&entry.start_page.to_le_bytes());
            self.entry_region[base + 8..base + 16].copy_from_slice(&entry.end_page.to_le_bytes());
            self.entry_region[base + 16..base + 18]
                .copy_from_slice(&(enc.len() as u16).to_le_bytes());
            self.entry_region[base + 18..base + 18 + enc.len()].copy_from_slice(&enc);
            Ok(false)
        } else {
            let new_addr = self.append_record(entry.start_page, entry.end_page, &entry.partial);
            let idx = self
                .sorted_list
                .iter()
                .position(|&a| a == addr)
                .expect("rewritten entry must be listed");
            self.sorted_list[idx] = new_addr;
            Ok(true)
        }
    }

    fn read_enc_len(&self, addr: u64) -> usize {
        let base = addr as usize;
        u16::from_le_bytes(self.entry_region[base + 16..base + 18].try_into().unwrap()) as usize
    }

    fn read_range(&self, addr: u64) -> (u64, u64) {
        let base = addr as usize;
        let start = u64::from_le_bytes(self.entry_region[base..base + 8].try_into().unwrap());
        let end = u64::from_le_bytes(self.entry_region[base + 8..base + 16].try_into().unwrap());
        (start, end)
    }

    fn read_entry(&self, addr: u64) -> IndexEntry {
        let (start_page, end_page) = self.read_range(addr);
        let enc_len = self.read_enc_len(addr);
        let base = addr as usize + RECORD_HEADER_BYTES;
        let partial = BucketBitmap::decode(&self.entry_region[base..base + enc_len], self.resolution())
            .expect("region holds only encodings we produced");
        IndexEntry { start_page, end_page, partial }
    }
}

fn inspect_page(table: &TableFile, page: u64, pred: &Predicate) -> Result<Vec<Tuple>> {
    Ok(table
        .scan_page(page)?
        .into_iter()
        .filter(|t| pred.matches(t.key))
        .collect())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::MalformedBitmap("truncated index file"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
