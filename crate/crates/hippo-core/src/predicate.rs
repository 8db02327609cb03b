//! Conjunctive predicates over the key attribute and their conversion to
//! hit-bucket bitmaps.
//!
//! A predicate is a non-empty AND of atoms; an atom is an equality test or a
//! (half-)bounded range. Equality is treated as the degenerate inclusive
//! range `[k, k]`, so one hit test covers both. Disjunction is not modeled;
//! callers issue one search per disjunct.
//!
//! Textual syntax (CLI): `key = N`, `key > N`, `key >= N`, `key < N`,
//! `key <= N`, joined by `AND`.

use crate::bitset::BucketBitmap;
use crate::histogram::CompleteHistogram;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Atom {
    Equality(i64),
    Range {
        lo: Option<i64>,
        hi: Option<i64>,
        lo_inclusive: bool,
        hi_inclusive: bool,
    },
}

impl Atom {
    pub fn matches(&self, key: i64) -> bool {
        match *self {
            Atom::Equality(k) => key == k,
            Atom::Range { lo, hi, lo_inclusive, hi_inclusive } => {
                let lo_ok = match lo {
                    None => true,
                    Some(l) if lo_inclusive => key >= l,
                    Some(l) => key > l,
                };
                let hi_ok = match hi {
                    None => true,
                    Some(h) if hi_inclusive => key <= h,
                    Some(h) => key < h,
                };
                lo_ok && hi_ok
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let Atom::Range { lo: Some(l), hi: Some(h), lo_inclusive, hi_inclusive } = *self {
            if l > h || (l == h && !(lo_inclusive && hi_inclusive)) {
                return Err(Error::InvalidRange(l, h));
            }
        }
        Ok(())
    }

    /// Hit-bucket range of this atom, or `None` when unsatisfiable over the
    /// integer domain.
    fn hit_buckets(&self, hist: &CompleteHistogram) -> Result<Option<(u32, u32)>> {
        match *self {
            Atom::Equality(k) => {
                let b = hist.bucket_of(k);
                Ok(Some((b, b)))
            }
            Atom::Range { lo, hi, lo_inclusive, hi_inclusive } => {
                hist.buckets_hit_by_range(lo, hi, lo_inclusive, hi_inclusive)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Predicate {
    atoms: Vec<Atom>,
}

impl Predicate {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyPredicate);
        }
        for atom in &atoms {
            atom.validate()?;
        }
        Ok(Predicate { atoms })
    }

    pub fn equality(key: i64) -> Self {
        Predicate { atoms: vec![Atom::Equality(key)] }
    }

    pub fn range(lo: Option<i64>, hi: Option<i64>, lo_inclusive: bool, hi_inclusive: bool) -> Result<Self> {
        Predicate::new(vec![Atom::Range { lo, hi, lo_inclusive, hi_inclusive }])
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn matches(&self, key: i64) -> bool {
        self.atoms.iter().all(|a| a.matches(key))
    }

    /// Converts the predicate to its hit-bucket bitmap: per-atom hit sets
    /// intersected across the conjunction. A contradictory conjunction
    /// yields the all-zeros bitmap, which selects no pages downstream.
    pub fn to_bitmap(&self, hist: &CompleteHistogram) -> Result<BucketBitmap> {
        let h = hist.resolution();
        let mut joint: Option<(u32, u32)> = Some((1, h));
        for atom in &self.atoms {
            joint = match (joint, atom.hit_buckets(hist)?) {
                (Some((alo, ahi)), Some((blo, bhi))) => {
                    let lo = alo.max(blo);
                    let hi = ahi.min(bhi);
                    (lo <= hi).then_some((lo, hi))
                }
                _ => None,
            };
        }
        let mut bm = BucketBitmap::new(h);
        if let Some((lo, hi)) = joint {
            for b in lo..=hi {
                bm.set_bucket(b)?;
            }
        }
        Ok(bm)
    }

    /// Parses the CLI predicate syntax.
    pub fn parse(text: &str) -> Result<Self> {
        let mut atoms = Vec::new();
        for part in split_on_and(text) {
            let part = part.trim();
            if part.is_empty() {
                return Err(Error::PredicateParse("empty atom".to_string()));
            }
            atoms.push(parse_atom(part)?);
        }
        Predicate::new(atoms)
    }
}

fn split_on_and(text: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut rest = text;
    loop {
        match find_and(rest) {
            Some(pos) => {
                parts.push(&rest[..pos]);
                rest = &rest[pos + 3..];
            }
            None => {
                parts.push(rest);
                return parts;
            }
        }
    }
}

fn find_and(text: &str) -> Option<usize> {
    let upper = text.to_ascii_uppercase();
    let mut from = 0;
    while let Some(rel) = upper[from..].find("AND") {
        let pos = from + rel;
        let before_ok = pos == 0 || upper.as_bytes()[pos - 1].is_ascii_whitespace();
        let after = pos + 3;
        let after_ok = after >= upper.len() || upper.as_bytes()[after].is_ascii_whitespace();
        if before_ok && after_ok {
            return Some(pos);
        }
        from = pos + 3;
    }
    None
}

fn parse_atom(text: &str) -> Result<Atom> {
    let err = || Error::PredicateParse(text.to_string());
    let rest = text.trim().strip_prefix("key").ok_or_else(err)?;
    let rest = rest.trim_start();
    let (op, num) = if let Some(n) = rest.strip_prefix(">=") {
        (">=", n)
    } else if let Some(n) = rest.strip_prefix("<=") {
        ("<=", n)
    } else if let Some(n) = rest.strip_prefix('=') {
        ("=", n)
    } else if let Some(n) = rest.strip_prefix('>') {
        (">", n)
    } else if let Some(n) = rest.strip_prefix('<') {
        ("<", n)
    } else {
        return Err(err());
    };
    let value: i64 = num.trim().parse().map_err(|_| err())?;
    Ok(match op {
        "=" => Atom::Equality(value),
        ">" => Atom::Range { lo: Some(value), hi: None, lo_inclusive: false, hi_inclusive: false },
        ">=" => Atom::Range { lo: Some(value), hi: None, lo_inclusive: true, hi_inclusive: false },
        "<" => Atom::Range { lo: None, hi: Some(value), lo_inclusive: false, hi_inclusive: false },
        _ => Atom::Range { lo: None, hi: Some(value), lo_inclusive: false, hi_inclusive: true },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hist() -> CompleteHistogram {
        CompleteHistogram::build((1..=100).collect(), 5).unwrap()
    }

    fn bits(bm: &BucketBitmap) -> String {
        (1..=bm.nbits())
            .map(|b| if bm.contains_bucket(b) { '1' } else { '0' })
            .collect()
    }

    #[test]
    fn equality_55_hits_bucket_3() {
        let bm = Predicate::equality(55).to_bitmap(&hist()).unwrap();
        assert_eq!(bits(&bm), "00100");
    }

    #[test]
    fn conjunct_55_to_65_hits_buckets_3_and_4() {
        let pred = Predicate::parse("key > 55 AND key < 65").unwrap();
        let bm = pred.to_bitmap(&hist()).unwrap();
        assert_eq!(bits(&bm), "00110");
    }

    #[test]
    fn out_of_domain_range_clamps_to_last_bucket() {
        let pred = Predicate::parse("key > 200").unwrap();
        let bm = pred.to_bitmap(&hist()).unwrap();
        assert_eq!(bits(&bm), "00001");
    }

    #[test]
    fn contradictory_conjunction_yields_zeros() {
        let pred = Predicate::parse("key < 10 AND key > 90").unwrap();
        let bm = pred.to_bitmap(&hist()).unwrap();
        assert!(bm.is_empty());
    }

    #[test]
    fn empty_predicate_rejected() {
        assert!(matches!(Predicate::new(vec![]), Err(Error::EmptyPredicate)));
    }

    #[test]
    fn degenerate_range_needs_inclusive_bounds() {
        assert!(Predicate::range(Some(5), Some(5), true, true).is_ok());
        assert!(matches!(
            Predicate::range(Some(5), Some(5), true, false),
            Err(Error::InvalidRange(5, 5))
        ));
        assert!(matches!(
            Predicate::range(Some(9), Some(3), true, true),
            Err(Error::InvalidRange(9, 3))
        ));
    }

    #[test]
    fn parse_all_operators() {
        assert_eq!(
            Predicate::parse("key = 55").unwrap().atoms(),
            &[Atom::Equality(55)]
        );
        assert_eq!(
            Predicate::parse("key >= -3").unwrap().atoms(),
            &[Atom::Range { lo: Some(-3), hi: None, lo_inclusive: true, hi_inclusive: false }]
        );
        assert_eq!(
            Predicate::parse("key<=10").unwrap().atoms(),
            &[Atom::Range { lo: None, hi: Some(10), lo_inclusive: false, hi_inclusive: true }]
        );
        assert!(Predicate::parse("value = 3").is_err());
        assert!(Predicate::parse("key ~ 3").is_err());
        assert!(Predicate::parse("").is_err());
    }

    #[test]
    fn parse_matches_manual_conjunction() {
        let pred = Predicate::parse("key > 10 AND key <= 20").unwrap();
        assert!(!pred.matches(10));
        assert!(pred.matches(11));
        assert!(pred.matches(20));
        assert!(!pred.matches(21));
    }

    proptest! {
        #[test]
        fn soundness_no_false_negatives(
            keys in proptest::collection::vec(0i64..1000, 20..200),
            lo in -100i64..1100,
            width in 0i64..500,
            h in 1u32..12,
        ) {
            prop_assume!(keys.len() as u32 >= h);
            let hist = CompleteHistogram::build(keys.clone(), h).unwrap();
            let pred = Predicate::range(Some(lo), Some(lo + width), true, true).unwrap();
            let bm = pred.to_bitmap(&hist).unwrap();
            for &k in &keys {
                if pred.matches(k) {
                    prop_assert!(
                        bm.contains_bucket(hist.bucket_of(k)),
                        "key {k} matches but its bucket is not in the hit set"
                    );
                }
            }
        }

        #[test]
        fn conjunction_equals_bitmap_intersection(
            keys in proptest::collection::vec(0i64..1000, 30..100),
            a_lo in -100i64..1100, a_w in 0i64..600,
            b_lo in -100i64..1100, b_w in 0i64..600,
            h in 1u32..10,
        ) {
            prop_assume!(keys.len() as u32 >= h);
            let hist = CompleteHistogram::build(keys, h).unwrap();
            let a = Atom::Range { lo: Some(a_lo), hi: Some(a_lo + a_w), lo_inclusive: true, hi_inclusive: true };
            let b = Atom::Range { lo: Some(b_lo), hi: Some(b_lo + b_w), lo_inclusive: true, hi_inclusive: true };
            let joint = Predicate::new(vec![a.clone(), b.clone()]).unwrap().to_bitmap(&hist).unwrap();
            let bm_a = Predicate::new(vec![a]).unwrap().to_bitmap(&hist).unwrap();
            let bm_b = Predicate::new(vec![b]).unwrap().to_bitmap(&hist).unwrap();
            for i in 1..=hist.resolution() {
                prop_assert_eq!(
                    joint.contains_bucket(i),
                    bm_a.contains_bucket(i) && bm_b.contains_bucket(i)
                );
            }
        }
    }
}
