//! Sparse per-location state: a sorted list of disjoint ranges covering
//! `[0, size)`, each carrying one value. Adjacent equal values are merged.

use std::ops::Range;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RangeMap<T> {
    // (start, value); each entry extends to the next start, the last to `size`.
    entries: Vec<(u64, T)>,
    size: u64,
}

impl<T: Clone + PartialEq> RangeMap<T> {
    pub fn new(size: u64, init: T) -> Self {
        RangeMap {
            entries: vec![(0, init)],
            size,
        }
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    fn index_of(&self, offset: u64) -> usize {
        match self.entries.binary_search_by_key(&offset, |e| e.0) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }

    fn end_of(&self, i: usize) -> u64 {
        self.entries.get(i + 1).map_or(self.size, |e| e.0)
    }

    pub fn get(&self, offset: u64) -> &T {
        &self.entries[self.index_of(offset.min(self.size.saturating_sub(1)))].1
    }

    /// Ensures an entry boundary at `offset`.
    fn split_at(&mut self, offset: u64) {
        if offset == 0 || offset >= self.size {
            return;
        }
        let i = self.index_of(offset);
        if self.entries[i].0 != offset {
            let v = self.entries[i].1.clone();
            self.entries.insert(i + 1, (offset, v));
        }
    }

    fn merge(&mut self) {
        self.entries.dedup_by(|later, earlier| later.1 == earlier.1);
    }

    /// Iterates over the pieces of `range` with their values.
    pub fn iter_range(&self, range: Range<u64>) -> impl Iterator<Item = (Range<u64>, &T)> {
        let range = range.start.min(self.size)..range.end.min(self.size);
        let first = if range.start < range.end { self.index_of(range.start) } else { self.entries.len() };
        (first..self.entries.len())
            .map(move |i| (self.entries[i].0.max(range.start)..self.end_of(i).min(range.end), &self.entries[i].1))
            .take_while(|(r, _)| r.start < r.end)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Range<u64>, &T)> {
        self.iter_range(0..self.size)
    }

    /// Applies `f` to every piece of `range`, stopping at the first error.
    /// Pieces already visited keep their updates.
    pub fn try_update<E>(
        &mut self,
        range: Range<u64>,
        mut f: impl FnMut(Range<u64>, &mut T) -> Result<(), E>,
    ) -> Result<(), E> {
        let range = range.start.min(self.size)..range.end.min(self.size);
        if range.start >= range.end {
            return Ok(());
        }
        self.split_at(range.start);
        self.split_at(range.end);
        let mut i = self.index_of(range.start);
        let mut result = Ok(());
        while i < self.entries.len() && self.entries[i].0 < range.end {
            let piece = self.entries[i].0..self.end_of(i);
            if let Err(e) = f(piece, &mut self.entries[i].1) {
                result = Err(e);
                break;
            }
            i += 1;
        }
        self.merge();
        result
    }

    pub fn update(&mut self, range: Range<u64>, mut f: impl FnMut(&mut T)) {
        let _: Result<(), ()> = self.try_update(range, |_, v| {
            f(v);
            Ok(())
        });
    }

    pub fn set(&mut self, range: Range<u64>, value: T) {
        self.update(range, |v| *v = value.clone());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn set_splits_and_merges() {
        let mut m = RangeMap::new(16, 0u8);
        m.set(4..8, 1);
        let pieces: Vec<_> = m.iter().map(|(r, v)| (r, *v)).collect();
        assert_eq!(pieces, vec![(0..4, 0), (4..8, 1), (8..16, 0)]);
        m.set(4..8, 0);
        assert_eq!(m.iter().count(), 1);
    }

    #[test]
    fn iter_range_clips() {
        let mut m = RangeMap::new(10, 'a');
        m.set(3..6, 'b');
        let pieces: Vec<_> = m.iter_range(2..4).map(|(r, v)| (r, *v)).collect();
        assert_eq!(pieces, vec![(2..3, 'a'), (3..4, 'b')]);
        assert_eq!(m.iter_range(5..5).count(), 0);
        assert_eq!(*m.get(9), 'a');
    }

    proptest! {
        #[test]
        fn matches_a_byte_vector(ops in prop::collection::vec((0u64..32, 0u64..32, 0u8..4), 0..20)) {
            let mut m = RangeMap::new(32, 0u8);
            let mut v = vec![0u8; 32];
            for (a, b, x) in ops {
                let (lo, hi) = (a.min(b), a.max(b));
                m.set(lo..hi, x);
                for b in &mut v[lo as usize..hi as usize] {
                    *b = x;
                }
            }
            for (i, b) in v.iter().enumerate() {
                prop_assert_eq!(m.get(i as u64), b);
            }
            let covered: u64 = m.iter().map(|(r, _)| r.end - r.start).sum();
            prop_assert_eq!(covered, 32);
        }
    }
}
