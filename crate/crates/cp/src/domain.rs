//! Trailed integer domains.
//!
//! Small domains (span up to [`BITSET_SPAN_LIMIT`]) are kept as bitsets and
//! support arbitrary value removal. Wider domains only track their bounds:
//! removing an interior value is a no-op, removing a bound shrinks it.

use std::fmt;

/// Widest span represented with an explicit bitset.
pub const BITSET_SPAN_LIMIT: i64 = 4096;

/// Index of a variable inside a [`Model`](crate::Model).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

/// Raised when a domain becomes empty.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conflict;

pub type PropResult<T = ()> = Result<T, Conflict>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Domain {
    base: i64,
    lo: i64,
    hi: i64,
    size: u64,
    // bit b of word w stands for value base + 64 * w + b
    words: Option<Vec<u64>>,
}

impl Domain {
    pub(crate) fn range(lo: i64, hi: i64) -> Self {
        debug_assert!(lo <= hi);
        let span = hi - lo + 1;
        let words = (span <= BITSET_SPAN_LIMIT).then(|| {
            let n = span.div_euclid(64) as usize + usize::from(span % 64 != 0);
            let mut w = vec![u64::MAX; n];
            let tail = span % 64;
            if tail != 0 {
                w[n - 1] = (1u64 << tail) - 1;
            }
            w
        });
        Domain {
            base: lo,
            lo,
            hi,
            size: span as u64,
            words,
        }
    }

    fn bit(&self, v: i64) -> (usize, u64) {
        let off = (v - self.base) as usize;
        (off / 64, 1u64 << (off % 64))
    }

    pub(crate) fn contains(&self, v: i64) -> bool {
        if v < self.lo || v > self.hi {
            return false;
        }
        match &self.words {
            None => true,
            Some(w) => {
                let (i, m) = self.bit(v);
                w[i] & m != 0
            }
        }
    }

    fn next_from(&self, v: i64) -> i64 {
        let mut v = v;
        while v <= self.hi && !self.contains(v) {
            v += 1;
        }
        v
    }

    fn prev_from(&self, v: i64) -> i64 {
        let mut v = v;
        while v >= self.lo && !self.contains(v) {
            v -= 1;
        }
        v
    }
}

#[derive(Clone, Debug)]
enum TrailEntry {
    Bounds { var: usize, lo: i64, hi: i64, size: u64 },
    Word { var: usize, idx: usize, old: u64 },
}

/// The domains of every variable in a model, with an undo trail.
#[derive(Clone, Debug, Default)]
pub struct Domains {
    doms: Vec<Domain>,
    trail: Vec<TrailEntry>,
    touched: Vec<VarId>,
}

impl Domains {
    pub(crate) fn push(&mut self, lo: i64, hi: i64) -> VarId {
        self.doms.push(Domain::range(lo, hi));
        VarId(self.doms.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.doms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doms.is_empty()
    }

    pub fn min(&self, v: VarId) -> i64 {
        self.doms[v.0].lo
    }

    pub fn max(&self, v: VarId) -> i64 {
        self.doms[v.0].hi
    }

    pub fn size(&self, v: VarId) -> u64 {
        self.doms[v.0].size
    }

    pub fn is_fixed(&self, v: VarId) -> bool {
        self.doms[v.0].size == 1
    }

    pub fn value(&self, v: VarId) -> Option<i64> {
        self.is_fixed(v).then(|| self.doms[v.0].lo)
    }

    pub fn contains(&self, v: VarId, x: i64) -> bool {
        self.doms[v.0].contains(x)
    }

    /// Whether the domain keeps an explicit value set (as opposed to bounds only).
    pub fn is_enumerable(&self, v: VarId) -> bool {
        self.doms[v.0].words.is_some()
    }

    /// All values currently in the domain, ascending.
    ///
    /// Bounds-only domains enumerate their whole interval.
    pub fn values(&self, v: VarId) -> Vec<i64> {
        let d = &self.doms[v.0];
        match &d.words {
            None => (d.lo..=d.hi).collect(),
            Some(words) => {
                let mut out = Vec::with_capacity(d.size as usize);
                for (i, &w) in words.iter().enumerate() {
                    let mut w = w;
                    while w != 0 {
                        let x = d.base + 64 * i as i64 + w.trailing_zeros() as i64;
                        if x > d.hi {
                            break;
                        }
                        if x >= d.lo {
                            out.push(x);
                        }
                        w &= w - 1;
                    }
                }
                out
            }
        }
    }

    pub(crate) fn trail_len(&self) -> usize {
        self.trail.len()
    }

    /// Undo every change recorded after `mark`.
    pub(crate) fn restore(&mut self, mark: usize) {
        while self.trail.len() > mark {
            match self.trail.pop().unwrap() {
                TrailEntry::Bounds { var, lo, hi, size } => {
                    let d = &mut self.doms[var];
                    d.lo = lo;
                    d.hi = hi;
                    d.size = size;
                }
                TrailEntry::Word { var, idx, old } => {
                    self.doms[var].words.as_mut().unwrap()[idx] = old;
                }
            }
        }
        self.touched.clear();
    }

    pub(crate) fn clear_trail(&mut self) {
        self.trail.clear();
    }

    pub(crate) fn take_touched(&mut self) -> Vec<VarId> {
        std::mem::take(&mut self.touched)
    }

    fn save_bounds(&mut self, var: usize) {
        let d = &self.doms[var];
        self.trail.push(TrailEntry::Bounds {
            var,
            lo: d.lo,
            hi: d.hi,
            size: d.size,
        });
    }

    /// Remove `x`. Returns whether the domain changed.
    pub fn remove(&mut self, v: VarId, x: i64) -> PropResult<bool> {
        let d = &self.doms[v.0];
        if !d.contains(x) {
            return Ok(false);
        }
        if d.size == 1 {
            return Err(Conflict);
        }
        if d.words.is_none() {
            // bounds-only: interior holes are not representable
            return if x == d.lo {
                self.set_min(v, x + 1)
            } else if x == d.hi {
                self.set_max(v, x - 1)
            } else {
                Ok(false)
            };
        }
        let (idx, mask) = d.bit(x);
        let old = d.words.as_ref().unwrap()[idx];
        self.trail.push(TrailEntry::Word { var: v.0, idx, old });
        self.save_bounds(v.0);
        let d = &mut self.doms[v.0];
        d.words.as_mut().unwrap()[idx] = old & !mask;
        d.size -= 1;
        if x == d.lo {
            d.lo = d.next_from(x + 1);
        } else if x == d.hi {
            d.hi = d.prev_from(x - 1);
        }
        self.touched.push(v);
        Ok(true)
    }

    /// Raise the lower bound to `x`.
    pub fn set_min(&mut self, v: VarId, x: i64) -> PropResult<bool> {
        let d = &self.doms[v.0];
        if x <= d.lo {
            return Ok(false);
        }
        if x > d.hi {
            return Err(Conflict);
        }
        let new_lo = d.next_from(x);
        let removed = match &d.words {
            None => (new_lo - d.lo) as u64,
            Some(_) => (d.lo..new_lo).filter(|&y| d.contains(y)).count() as u64,
        };
        self.save_bounds(v.0);
        let d = &mut self.doms[v.0];
        d.lo = new_lo;
        d.size -= removed;
        self.touched.push(v);
        Ok(true)
    }

    /// Lower the upper bound to `x`.
    pub fn set_max(&mut self, v: VarId, x: i64) -> PropResult<bool> {
        let d = &self.doms[v.0];
        if x >= d.hi {
            return Ok(false);
        }
        if x < d.lo {
            return Err(Conflict);
        }
        let new_hi = d.prev_from(x);
        let removed = match &d.words {
            None => (d.hi - new_hi) as u64,
            Some(_) => (new_hi + 1..=d.hi).filter(|&y| d.contains(y)).count() as u64,
        };
        self.save_bounds(v.0);
        let d = &mut self.doms[v.0];
        d.hi = new_hi;
        d.size -= removed;
        self.touched.push(v);
        Ok(true)
    }

    /// Reduce the domain to the single value `x`.
    pub fn assign(&mut self, v: VarId, x: i64) -> PropResult<bool> {
        if !self.contains(v, x) {
            return Err(Conflict);
        }
        if self.is_fixed(v) {
            return Ok(false);
        }
        let a = self.set_min(v, x)?;
        let b = self.set_max(v, x)?;
        Ok(a || b)
    }

    /// Keep only values satisfying `keep`. Bounds-only domains are trimmed at both ends.
    pub fn retain(&mut self, v: VarId, mut keep: impl FnMut(i64) -> bool) -> PropResult<bool> {
        let mut changed = false;
        if self.is_enumerable(v) {
            for x in self.values(v) {
                if !keep(x) {
                    changed |= self.remove(v, x)?;
                }
            }
        } else {
            while !keep(self.min(v)) {
                changed |= self.set_min(v, self.min(v) + 1)?;
            }
            while !keep(self.max(v)) {
                changed |= self.set_max(v, self.max(v) - 1)?;
            }
        }
        Ok(changed)
    }

    /// Snapshot of every domain, for equality checks in tests and diagnostics.
    pub fn snapshot(&self) -> Vec<Vec<i64>> {
        (0..self.doms.len())
            .map(|i| {
                let v = VarId(i);
                if self.is_enumerable(v) {
                    self.values(v)
                } else {
                    vec![self.min(v), self.max(v)]
                }
            })
            .collect()
    }
}
