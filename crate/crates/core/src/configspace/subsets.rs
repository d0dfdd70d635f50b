use std::sync::Arc;

use crate::error::{Error, Result};

/// Largest number of sites for which the subset lookup table is allocated.
pub const MAX_SITES: usize = 24;

const ABSENT: u32 = u32::MAX;

/// Enumeration of all site subsets `η` with `|η| ≤ cap`, encoded as bitmasks.
///
/// Subsets are ordered by size and, within a size, by increasing mask value.
/// Cloning is cheap: the tables are shared.
#[derive(Debug, Clone)]
pub struct SubsetSpace {
    inner: Arc<Inner>,
}

#[derive(Debug)]
struct Inner {
    sites: usize,
    cap: usize,
    masks: Vec<u32>,
    index: Vec<u32>,
    /// `offsets[k]..offsets[k+1]` are the indices of subsets of size `k`.
    offsets: Vec<usize>,
}

impl PartialEq for SubsetSpace {
    fn eq(&self, other: &Self) -> bool {
        self.sites() == other.sites() && self.cap() == other.cap()
    }
}

impl SubsetSpace {
    pub fn new(sites: usize, cap: usize) -> Result<Self> {
        if cap > sites {
            return Err(Error::InvalidTruncation { cap, sites });
        }
        if sites > MAX_SITES {
            return Err(Error::InvalidInput(format!(
                "{sites} sites exceed the supported maximum of {MAX_SITES}"
            )));
        }
        let mut masks = Vec::new();
        let mut offsets = vec![0];
        for k in 0..=cap {
            masks.extend(fixed_size_subsets(sites, k));
            offsets.push(masks.len());
        }
        let mut index = vec![ABSENT; 1usize << sites];
        for (i, &m) in masks.iter().enumerate() {
            index[m as usize] = i as u32;
        }
        Ok(SubsetSpace {
            inner: Arc::new(Inner {
                sites,
                cap,
                masks,
                index,
                offsets,
            }),
        })
    }

    /// The untruncated space of all `2^sites` subsets.
    pub fn full(sites: usize) -> Result<Self> {
        Self::new(sites, sites)
    }

    pub fn sites(&self) -> usize {
        self.inner.sites
    }

    pub fn cap(&self) -> usize {
        self.inner.cap
    }

    pub fn len(&self) -> usize {
        self.inner.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.masks.is_empty()
    }

    pub fn mask(&self, i: usize) -> u32 {
        self.inner.masks[i]
    }

    pub fn masks(&self) -> &[u32] {
        &self.inner.masks
    }

    pub fn index_of(&self, mask: u32) -> Option<usize> {
        match self.inner.index.get(mask as usize) {
            Some(&i) if i != ABSENT => Some(i as usize),
            _ => None,
        }
    }

    /// Index range of the subsets of size `k`.
    pub fn size_range(&self, k: usize) -> std::ops::Range<usize> {
        if k > self.cap() {
            return 0..0;
        }
        self.inner.offsets[k]..self.inner.offsets[k + 1]
    }

    pub fn size_of(&self, i: usize) -> usize {
        self.inner.masks[i].count_ones() as usize
    }
}

/// All `k`-subsets of `{0, …, n-1}` in increasing mask order (Gosper's hack).
pub fn fixed_size_subsets(n: usize, k: usize) -> Vec<u32> {
    if k > n {
        return Vec::new();
    }
    if k == 0 {
        return vec![0];
    }
    let limit = 1u64 << n;
    let mut out = Vec::new();
    let mut x: u64 = (1u64 << k) - 1;
    while x < limit {
        out.push(x as u32);
        let c = x & x.wrapping_neg();
        let r = x + c;
        x = (((r ^ x) >> 2) / c) | r;
    }
    out
}

/// Site indices contained in `mask`, in increasing order.
pub fn sites_of(mask: u32) -> impl Iterator<Item = usize> {
    let mut m = mask;
    std::iter::from_fn(move || {
        if m == 0 {
            None
        } else {
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            Some(i)
        }
    })
}

pub fn mask_of(sites: &[usize]) -> u32 {
    sites.iter().fold(0, |m, &s| m | (1 << s))
}
