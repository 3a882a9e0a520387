use smallvec::{smallvec, SmallVec};

/// Fixed-length bitset over page slots. Up to 256 slots are stored inline.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SlotBits {
    words: SmallVec<[u64; 4]>,
    len: usize,
}

impl SlotBits {
    pub fn new(len: usize) -> Self {
        Self { words: smallvec![0; len.div_ceil(64)], len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn get(&self, i: usize) -> bool {
        i < self.len && self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn set(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn clear(&mut self, i: usize) {
        self.words[i / 64] &= !(1 << (i % 64));
    }

    /// Clears every bit that is set in `other`.
    pub fn remove_all(&mut self, other: &SlotBits) {
        for (w, o) in self.words.iter_mut().zip(&other.words) {
            *w &= !o;
        }
    }

    pub fn clear_all(&mut self) {
        self.words.iter_mut().for_each(|w| *w = 0);
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Highest set index.
    pub fn last_one(&self) -> Option<usize> {
        let (wi, &w) = self.words.iter().enumerate().rev().find(|(_, &w)| w != 0)?;
        Some(wi * 64 + 63 - w.leading_zeros() as usize)
    }

    /// Indices of set bits, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    None
                } else {
                    let b = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    Some(wi * 64 + b)
                }
            })
        })
    }

    /// Indices of clear bits below `len`, ascending.
    pub fn zeros(&self) -> impl Iterator<Item = usize> + '_ {
        let len = self.len;
        self.words.iter().enumerate().flat_map(move |(wi, &w)| {
            let mut bits = !w;
            let limit = (len - wi * 64).min(64);
            if limit < 64 {
                bits &= (1u64 << limit) - 1;
            }
            std::iter::from_fn(move || {
                if bits == 0 {
                    None
                } else {
                    let b = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    Some(wi * 64 + b)
                }
            })
        })
    }
}

/// Growable set of page indices that pops its lowest member.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PageSet {
    words: Vec<u64>,
    len: usize,
    /// No member lives in a word below this one.
    low: usize,
}

impl PageSet {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, page: usize) -> bool {
        self.words.get(page / 64).is_some_and(|w| w & (1 << (page % 64)) != 0)
    }

    /// Returns false if `page` was already present.
    pub fn insert(&mut self, page: usize) -> bool {
        let wi = page / 64;
        if wi >= self.words.len() {
            self.words.resize(wi + 1, 0);
        }
        let bit = 1 << (page % 64);
        if self.words[wi] & bit != 0 {
            return false;
        }
        self.words[wi] |= bit;
        self.len += 1;
        self.low = self.low.min(wi);
        true
    }

    /// Returns false if `page` was absent.
    pub fn remove(&mut self, page: usize) -> bool {
        if !self.contains(page) {
            return false;
        }
        self.words[page / 64] &= !(1 << (page % 64));
        self.len -= 1;
        true
    }

    pub fn pop_first(&mut self) -> Option<usize> {
        if self.len == 0 {
            return None;
        }
        while self.words[self.low] == 0 {
            self.low += 1;
        }
        let w = self.words[self.low];
        let page = self.low * 64 + w.trailing_zeros() as usize;
        self.words[self.low] = w & (w - 1);
        self.len -= 1;
        Some(page)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn page_set_pops_lowest() {
        let mut s = PageSet::default();
        for p in [130, 5, 64, 5, 7] {
            s.insert(p);
        }
        assert_eq!(s.len(), 4);
        assert!(s.remove(7) && !s.remove(7));
        assert_eq!(s.pop_first(), Some(5));
        s.insert(3);
        assert_eq!(s.pop_first(), Some(3));
        assert_eq!(s.pop_first(), Some(64));
        assert!(s.contains(130) && !s.contains(64) && !s.contains(9999));
        assert_eq!(s.pop_first(), Some(130));
        assert_eq!(s.pop_first(), None);
    }

    #[test]
    fn last_one_finds_highest_bit() {
        let mut b = SlotBits::new(170);
        assert_eq!(b.last_one(), None);
        b.set(3);
        b.set(129);
        assert_eq!(b.last_one(), Some(129));
        b.clear(129);
        assert_eq!(b.last_one(), Some(3));
    }

    #[test]
    fn ones_and_zeros_partition() {
        let mut b = SlotBits::new(130);
        for i in [0, 63, 64, 129] {
            b.set(i);
        }
        assert_eq!(b.ones().collect::<Vec<_>>(), vec![0, 63, 64, 129]);
        assert_eq!(b.zeros().count(), 126);
        assert_eq!(b.count(), 4);
        b.clear(63);
        assert!(!b.get(63));
        assert!(!b.get(500));
        b.clear_all();
        assert!(b.is_empty());
    }
}
