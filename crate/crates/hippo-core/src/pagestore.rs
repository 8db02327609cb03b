//! Slotted heap-page table file.
//!
//! A table file is a header page followed by fixed 8192-byte pages. Every
//! page except possibly the last holds exactly `page_card` tuples. Deletes
//! tombstone the slot and raise a `has_deletions` note in the page header;
//! the space is reclaimed only by [`TableFile::vacuum_page`].
//!
//! On-disk layout (little-endian):
//! - header page: magic `HIPT`, version u32, page_card u32, page_size u32, num_pages u64
//! - data page: tuple_count u16, has_deletions u8, slot directory of
//!   (offset u16, dead u8) per slot, then tuple records (key i64,
//!   payload_len u16, payload bytes) at the recorded offsets

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::{Error, Result};

pub const PAGE_SIZE: usize = 8192;

const MAGIC: &[u8; 4] = b"HIPT";
const VERSION: u32 = 1;
const PAGE_HEADER_BYTES: usize = 3; // tuple_count u16 + has_deletions u8
const SLOT_DIR_ENTRY_BYTES: usize = 3; // offset u16 + dead u8
const RECORD_HEADER_BYTES: usize = 10; // key i64 + payload_len u16

/// Location of a tuple: page ordinal and slot ordinal, both 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TupleId {
    pub page: u64,
    pub slot: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tuple {
    pub id: TupleId,
    pub key: i64,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone)]
struct Slot {
    key: i64,
    payload: Vec<u8>,
    dead: bool,
}

#[derive(Debug, Clone, Default)]
struct Page {
    has_deletions: bool,
    slots: Vec<Slot>,
}

impl Page {
    fn used_bytes(&self) -> usize {
        PAGE_HEADER_BYTES
            + self
                .slots
                .iter()
                .map(|s| SLOT_DIR_ENTRY_BYTES + RECORD_HEADER_BYTES + s.payload.len())
                .sum::<usize>()
    }
}

/// In-memory image of a table file. Mutations are buffered; call
/// [`TableFile::save`] to persist. Reads take `&self` and may run
/// concurrently; all mutation must be externally serialized.
#[derive(Debug)]
pub struct TableFile {
    path: PathBuf,
    page_card: u32,
    pages: Vec<Page>,
}

impl TableFile {
    /// Creates an empty table file at `path` and writes its header.
    pub fn create(path: impl AsRef<Path>, page_card: u32) -> Result<Self> {
        if page_card == 0 {
            return Err(Error::ZeroPageCard);
        }
        let table = TableFile {
            path: path.as_ref().to_path_buf(),
            page_card,
            pages: Vec::new(),
        };
        table.save()?;
        Ok(table)
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let io = |source| Error::Io { path: path.clone(), source };
        let malformed = |reason: &str| Error::MalformedFile {
            path: path.clone(),
            reason: reason.to_string(),
        };
        let mut reader = BufReader::new(File::open(&path).map_err(io)?);
        let mut header = [0u8; PAGE_SIZE];
        reader.read_exact(&mut header).map_err(io)?;
        if &header[0..4] != MAGIC {
            return Err(malformed("bad magic"));
        }
        if read_u32(&header[4..8]) != VERSION {
            return Err(malformed("unsupported version"));
        }
        let page_card = read_u32(&header[8..12]);
        let page_size = read_u32(&header[12..16]) as usize;
        if page_size != PAGE_SIZE {
            return Err(malformed("unexpected page size"));
        }
        let num_pages = read_u64(&header[16..24]);
        if page_card == 0 {
            return Err(malformed("zero page capacity"));
        }

        let mut pages = Vec::with_capacity(num_pages as usize);
        let mut buf = vec![0u8; PAGE_SIZE];
        for _ in 0..num_pages {
            reader.read_exact(&mut buf).map_err(io)?;
            pages.push(decode_page(&buf, &malformed)?);
        }
        Ok(TableFile { path, page_card, pages })
    }

    /// Writes the full table image back to its file.
    pub fn save(&self) -> Result<()> {
        let io = |source| Error::Io { path: self.path.clone(), source };
        let mut writer = BufWriter::new(File::create(&self.path).map_err(io)?);
        let mut header = [0u8; PAGE_SIZE];
        header[0..4].copy_from_slice(MAGIC);
        header[4..8].copy_from_slice(&VERSION.to_le_bytes());
        header[8..12].copy_from_slice(&self.page_card.to_le_bytes());
        header[12..16].copy_from_slice(&(PAGE_SIZE as u32).to_le_bytes());
        header[16..24].copy_from_slice(&(self.pages.len() as u64).to_le_bytes());
        writer.write_all(&header).map_err(io)?;
        let mut buf = vec![0u8; PAGE_SIZE];
        for page in &self.pages {
            encode_page(page, &mut buf);
            writer.write_all(&buf).map_err(io)?;
        }
        writer.flush().map_err(io)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn page_card(&self) -> u32 {
        self.page_card
    }

    pub fn num_pages(&self) -> u64 {
        self.pages.len() as u64
    }

    /// Total number of live tuples.
    pub fn cardinality(&self) -> u64 {
        self.pages
            .iter()
            .map(|p| p.slots.iter().filter(|s| !s.dead).count() as u64)
            .sum()
    }

    /// Appends a tuple into the last page if it has a free slot, otherwise
    /// into a newly allocated page.
    pub fn append_tuple(&mut self, key: i64, payload: &[u8]) -> Result<TupleId> {
        let record_bytes = SLOT_DIR_ENTRY_BYTES + RECORD_HEADER_BYTES + payload.len();
        if PAGE_HEADER_BYTES + record_bytes > PAGE_SIZE {
            return Err(Error::TupleTooLarge(payload.len()));
        }
        let need_new = match self.pages.last() {
            Some(p) => {
                p.slots.len() >= self.page_card as usize
                    || p.used_bytes() + record_bytes > PAGE_SIZE
            }
            None => true,
        };
        if need_new {
            self.pages.push(Page::default());
        }
        let page_id = self.pages.len() as u64 - 1;
        let page = self.pages.last_mut().expect("page just ensured");
        let slot = page.slots.len() as u16;
        page.slots.push(Slot {
            key,
            payload: payload.to_vec(),
            dead: false,
        });
        Ok(TupleId { page: page_id, slot })
    }

    /// Marks a live tuple dead and notes the deletion in the page header.
    pub fn delete_tuple(&mut self, id: TupleId) -> Result<()> {
        let num_pages = self.num_pages();
        let page = self
            .pages
            .get_mut(id.page as usize)
            .ok_or(Error::PageOutOfRange(id.page, num_pages))?;
        match page.slots.get_mut(id.slot as usize) {
            Some(slot) if !slot.dead => {
                slot.dead = true;
                page.has_deletions = true;
                Ok(())
            }
            _ => Err(Error::TupleNotFound(id.page, id.slot)),
        }
    }

    /// Returns the live tuples of a page in slot order.
    pub fn scan_page(&self, page_id: u64) -> Result<Vec<Tuple>> {
        let page = self
            .pages
            .get(page_id as usize)
            .ok_or(Error::PageOutOfRange(page_id, self.num_pages()))?;
        Ok(page
            .slots
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.dead)
            .map(|(slot, s)| Tuple {
                id: TupleId { page: page_id, slot: slot as u16 },
                key: s.key,
                payload: s.payload.clone(),
            })
            .collect())
    }

    /// Live keys of a page in slot order, without copying payloads.
    pub fn page_live_keys(&self, page_id: u64) -> Result<impl Iterator<Item = i64> + '_> {
        let page = self
            .pages
            .get(page_id as usize)
            .ok_or(Error::PageOutOfRange(page_id, self.num_pages()))?;
        Ok(page.slots.iter().filter(|s| !s.dead).map(|s| s.key))
    }

    /// Live (key, tuple_id) pairs of a page in slot order.
    pub fn page_live_entries(
        &self,
        page_id: u64,
    ) -> Result<impl Iterator<Item = (i64, TupleId)> + '_> {
        let page = self
            .pages
            .get(page_id as usize)
            .ok_or(Error::PageOutOfRange(page_id, self.num_pages()))?;
        Ok(page
            .slots
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.dead)
            .map(move |(slot, s)| (s.key, TupleId { page: page_id, slot: slot as u16 })))
    }

    pub fn page_has_deletions(&self, page_id: u64) -> Result<bool> {
        self.pages
            .get(page_id as usize)
            .map(|p| p.has_deletions)
            .ok_or(Error::PageOutOfRange(page_id, self.num_pages()))
    }

    pub fn page_tuple_count(&self, page_id: u64) -> Result<u16> {
        self.pages
            .get(page_id as usize)
            .map(|p| p.slots.len() as u16)
            .ok_or(Error::PageOutOfRange(page_id, self.num_pages()))
    }

    /// Physically removes dead slots, renumbering the survivors in order,
    /// and clears the deletion note. Idempotent.
    pub fn vacuum_page(&mut self, page_id: u64) -> Result<()> {
        let num_pages = self.num_pages();
        let page = self
            .pages
            .get_mut(page_id as usize)
            .ok_or(Error::PageOutOfRange(page_id, num_pages))?;
        if page.has_deletions {
            page.slots.retain(|s| !s.dead);
            page.has_deletions = false;
        }
        Ok(())
    }

    /// All live keys in (page, slot) order.
    pub fn all_live_keys(&self) -> Vec<i64> {
        self.pages
            .iter()
            .flat_map(|p| p.slots.iter().filter(|s| !s.dead).map(|s| s.key))
            .collect()
    }
}

fn encode_page(page: &Page, buf: &mut [u8]) {
    buf.fill(0);
    buf[0..2].copy_from_slice(&(page.slots.len() as u16).to_le_bytes());
    buf[2] = page.has_deletions as u8;
    let dir_end = PAGE_HEADER_BYTES + SLOT_DIR_ENTRY_BYTES * page.slots.len();
    let mut off = dir_end;
    for (i, slot) in page.slots.iter().enumerate() {
        let dir = PAGE_HEADER_BYTES + SLOT_DIR_ENTRY_BYTES * i;
        buf[dir..dir + 2].copy_from_slice(&(off as u16).to_le_bytes());
        buf[dir + 2] = slot.dead as u8;
        buf[off..off + 8].copy_from_slice(&slot.key.to_le_bytes());
        buf[off + 8..off + 10].copy_from_slice(&(slot.payload.len() as u16).to_le_bytes());
        buf[off + 10..off + 10 + slot.payload.len()].copy_from_slice(&slot.payload);
        off += RECORD_HEADER_BYTES + slot.payload.len();
    }
}

fn decode_page(buf: &[u8], malformed: &impl Fn(&str) -> Error) -> Result<Page> {
    let count = read_u16(&buf[0..2]) as usize;
    let has_deletions = buf[2] != 0;
    let mut slots = Vec::with_capacity(count);
    for i in 0..count {
        let dir = PAGE_HEADER_BYTES + SLOT_DIR_ENTRY_BYTES * i;
        if dir + SLOT_DIR_ENTRY_BYTES > PAGE_SIZE {
            return Err(malformed("slot directory overruns page"));
        }
        let off = read_u16(&buf[dir..dir + 2]) as usize;
        let dead = buf[dir + 2] != 0;
        if off + RECORD_HEADER_BYTES > PAGE_SIZE {
            return Err(malformed("record offset overruns page"));
        }
        let key = i64::from_le_bytes(buf[off..off + 8].try_into().unwrap());
        let payload_len = read_u16(&buf[off + 8..off + 10]) as usize;
        if off + RECORD_HEADER_BYTES + payload_len > PAGE_SIZE {
            return Err(malformed("record payload overruns page"));
        }
        let payload = buf[off + 10..off + 10 + payload_len].to_vec();
        slots.push(Slot { key, payload, dead });
    }
    Ok(Page { has_deletions, slots })
}

fn read_u16(b: &[u8]) -> u16 {
    u16::from_le_bytes(b[0..2].try_into().unwrap())
}

fn read_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes(b[0..4].try_into().unwrap())
}

fn read_u64(b: &[u8]) -> u64 {
    u64::from_le_bytes(b[0..8].try_into().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tempfile::tempdir;

    fn temp_table(page_card: u32) -> (tempfile::TempDir, TableFile) {
        let dir = tempdir().unwrap();
        let table = TableFile::create(dir.path().join("t.hipt"), page_card).unwrap();
        (dir, table)
    }

    #[test]
    fn create_empty_table() {
        let (_d, table) = temp_table(50);
        assert_eq!(table.num_pages(), 0);
        assert_eq!(table.cardinality(), 0);
    }

    #[test]
    fn create_rejects_zero_page_card() {
        let dir = tempdir().unwrap();
        assert!(matches!(
            TableFile::create(dir.path().join("t"), 0),
            Err(Error::ZeroPageCard)
        ));
    }

    #[test]
    fn page_card_one_is_valid() {
        let (_d, mut table) = temp_table(1);
        for k in 0..3 {
            table.append_tuple(k, &[]).unwrap();
        }
        assert_eq!(table.num_pages(), 3);
    }

    #[test]
    fn hundred_appends_at_fifty_per_page_gives_two_pages() {
        let (_d, mut table) = temp_table(50);
        for k in 0..100 {
            table.append_tuple(k, &[]).unwrap();
        }
        assert_eq!(table.num_pages(), 2);
    }

    #[test]
    fn first_append_lands_at_zero_zero() {
        let (_d, mut table) = temp_table(5);
        let id = table.append_tuple(7, b"x").unwrap();
        assert_eq!(id, TupleId { page: 0, slot: 0 });
    }

    #[test]
    fn five_appends_fill_page_zero() {
        let (_d, mut table) = temp_table(5);
        for k in 0..5 {
            let id = table.append_tuple(k, &[]).unwrap();
            assert_eq!(id, TupleId { page: 0, slot: k as u16 });
        }
        assert_eq!(table.num_pages(), 1);
    }

    #[test]
    fn append_past_full_page_allocates_new_page() {
        let (_d, mut table) = temp_table(2);
        table.append_tuple(1, &[]).unwrap();
        table.append_tuple(2, &[]).unwrap();
        let id = table.append_tuple(3, &[]).unwrap();
        assert_eq!(id, TupleId { page: 1, slot: 0 });
    }

    #[test]
    fn oversized_tuple_rejected() {
        let (_d, mut table) = temp_table(50);
        let payload = vec![0u8; PAGE_SIZE];
        assert!(matches!(
            table.append_tuple(1, &payload),
            Err(Error::TupleTooLarge(_))
        ));
    }

    #[test]
    fn delete_sets_page_flag_and_hides_tuple() {
        let (_d, mut table) = temp_table(5);
        for k in 0..5 {
            table.append_tuple(k, &[]).unwrap();
        }
        table.delete_tuple(TupleId { page: 0, slot: 2 }).unwrap();
        assert!(table.page_has_deletions(0).unwrap());
        let keys: Vec<i64> = table.scan_page(0).unwrap().iter().map(|t| t.key).collect();
        assert_eq!(keys, vec![0, 1, 3, 4]);
    }

    #[test]
    fn double_delete_errors() {
        let (_d, mut table) = temp_table(5);
        table.append_tuple(1, &[]).unwrap();
        let id = TupleId { page: 0, slot: 0 };
        table.delete_tuple(id).unwrap();
        assert!(matches!(table.delete_tuple(id), Err(Error::TupleNotFound(0, 0))));
    }

    #[test]
    fn scan_out_of_range_errors() {
        let (_d, table) = temp_table(5);
        assert!(matches!(table.scan_page(0), Err(Error::PageOutOfRange(0, 0))));
    }

    #[test]
    fn vacuum_compacts_and_clears_flag() {
        let (_d, mut table) = temp_table(5);
        for k in 0..5 {
            table.append_tuple(k, &[]).unwrap();
        }
        table.delete_tuple(TupleId { page: 0, slot: 1 }).unwrap();
        table.delete_tuple(TupleId { page: 0, slot: 3 }).unwrap();
        let live_before: Vec<i64> = table.scan_page(0).unwrap().iter().map(|t| t.key).collect();
        table.vacuum_page(0).unwrap();
        assert!(!table.page_has_deletions(0).unwrap());
        assert_eq!(table.page_tuple_count(0).unwrap(), 3);
        let after = table.scan_page(0).unwrap();
        let keys: Vec<i64> = after.iter().map(|t| t.key).collect();
        assert_eq!(keys, live_before);
        // slots renumbered densely
        let slots: Vec<u16> = after.iter().map(|t| t.id.slot).collect();
        assert_eq!(slots, vec![0, 1, 2]);
    }

    #[test]
    fn vacuum_is_idempotent() {
        let (_d, mut table) = temp_table(5);
        for k in 0..5 {
            table.append_tuple(k, &[]).unwrap();
        }
        table.delete_tuple(TupleId { page: 0, slot: 0 }).unwrap();
        table.vacuum_page(0).unwrap();
        let once = table.scan_page(0).unwrap();
        table.vacuum_page(0).unwrap();
        assert_eq!(table.scan_page(0).unwrap(), once);
    }

    #[test]
    fn save_open_roundtrip_is_bit_identical() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.hipt");
        let mut table = TableFile::create(&path, 7).unwrap();
        for k in 0..100 {
            table.append_tuple(k * 3, format!("p{k}").as_bytes()).unwrap();
        }
        table.delete_tuple(TupleId { page: 2, slot: 1 }).unwrap();
        table.save().unwrap();
        let bytes1 = std::fs::read(&path).unwrap();

        let reopened = TableFile::open(&path).unwrap();
        assert_eq!(reopened.page_card(), 7);
        assert_eq!(reopened.num_pages(), table.num_pages());
        for p in 0..table.num_pages() {
            assert_eq!(reopened.scan_page(p).unwrap(), table.scan_page(p).unwrap());
            assert_eq!(
                reopened.page_has_deletions(p).unwrap(),
                table.page_has_deletions(p).unwrap()
            );
        }
        reopened.save().unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes1);
    }

    proptest! {
        #[test]
        fn random_workload_matches_model(
            page_card in 1u32..8,
            ops in proptest::collection::vec((0u8..4, any::<i64>(), 0usize..64), 1..200)
        ) {
            let dir = tempdir().unwrap();
            let mut table = TableFile::create(dir.path().join("t"), page_card).unwrap();
            // model: per page, vec of (key, dead)
            let mut model: Vec<Vec<(i64, bool)>> = Vec::new();
            for (op, key, pick) in ops {
                match op {
                    0 | 1 => {
                        let id = table.append_tuple(key, &[]).unwrap();
                        let full = model
                            .last()
                            .map(|p| p.len() >= page_card as usize)
                            .unwrap_or(true);
                        if full {
                            model.push(Vec::new());
                        }
                        prop_assert_eq!(id.page as usize, model.len() - 1);
                        model.last_mut().unwrap().push((key, false));
                    }
                    2 => {
                        if model.is_empty() { continue; }
                        let p = pick % model.len();
                        let s = pick % model[p].len().max(1);
                        if s < model[p].len() && !model[p][s].1 {
                            table.delete_tuple(TupleId { page: p as u64, slot: s as u16 }).unwrap();
                            model[p][s].1 = true;
                        }
                    }
                    _ => {
                        if model.is_empty() { continue; }
                        let p = pick % model.len();
                        table.vacuum_page(p as u64).unwrap();
                        model[p].retain(|(_, dead)| !dead);
                    }
                }
                // capacity invariant
                for p in 0..table.num_pages() {
                    prop_assert!(table.page_tuple_count(p).unwrap() as u32 <= page_card);
                }
            }
            for (p, slots) in model.iter().enumerate() {
                let live: Vec<i64> = table.scan_page(p as u64).unwrap().iter().map(|t| t.key).collect();
                let expect: Vec<i64> = slots.iter().filter(|(_, d)| !d).map(|(k, _)| *k).collect();
                prop_assert_eq!(live, expect);
            }
        }
    }
}
