//! Sparse page-range index engine.
//!
//! The index summarizes runs of contiguous heap pages with partial histograms:
//! per-run bitmaps recording which buckets of a complete equi-depth histogram
//! are hit by the run's tuples. Queries convert their predicate to a bucket
//! bitmap, AND it against each summary to discard page ranges that cannot
//! contain qualifying tuples, and inspect only the surviving pages. Inserts
//! update the affected summary eagerly; deletes are reconciled lazily by a
//! vacuum pass.
//!
//! Modules:
//! - [`pagestore`]: slotted heap-page table file (the indexed "parent table")
//! - [`histogram`]: complete equi-depth histogram over the key attribute
//! - [`bitset`]: bucket bitmaps with a compressed on-disk encoding
//! - [`predicate`]: conjunctive equality/range predicates and their bucket conversion
//! - [`index`]: the sparse index proper (build, search, insert, vacuum)
//! - [`costmodel`]: analytical estimates for filter probability, entry count and I/O cost
//! - [`baseline`]: full-scan oracle and a dense sorted index for comparisons

pub mod baseline;
pub mod bitset;
pub mod costmodel;
pub mod histogram;
pub mod index;
pub mod pagestore;
pub mod predicate;

mod error;

pub use error::{Error, Result};
