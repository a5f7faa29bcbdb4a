//! Packed voxel bitmask.

/// Fixed-length bitset over voxel indices, 64 voxels per word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelMask {
    words: Vec<u64>,
    len: usize,
}

impl VoxelMask {
    pub fn new(len: usize) -> Self {
        Self { words: vec![0; len.div_ceil(64)], len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.words[i >> 6] >> (i & 63) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize) {
        debug_assert!(i < self.len);
        self.words[i >> 6] |= 1 << (i & 63);
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// True if no voxel is set in both masks.
    pub fn is_disjoint(&self, other: &VoxelMask) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & b == 0)
    }

    pub fn is_subset(&self, other: &VoxelMask) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    pub fn union(&self, other: &VoxelMask) -> VoxelMask {
        let words = self.words.iter().zip(&other.words).map(|(a, b)| a | b).collect();
        VoxelMask { words, len: self.len }
    }

    pub fn complement(&self) -> VoxelMask {
        let mut words: Vec<u64> = self.words.iter().map(|w| !w).collect();
        let tail = self.len % 64;
        if tail != 0 {
            if let Some(last) = words.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
        VoxelMask { words, len: self.len }
    }

    /// Indices of set voxels in ascending order.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut word = w;
            std::iter::from_fn(move || {
                if word == 0 {
                    None
                } else {
                    let bit = word.trailing_zeros() as usize;
                    word &= word - 1;
                    Some(wi * 64 + bit)
                }
            })
        })
    }
}

impl FromIterator<bool> for VoxelMask {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        let mut words = Vec::new();
        let mut len = 0;
        for bit in iter {
            if len % 64 == 0 {
                words.push(0);
            }
            if bit {
                *words.last_mut().unwrap() |= 1 << (len % 64);
            }
            len += 1;
        }
        Self { words, len }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_get_count() {
        let mut m = VoxelMask::new(130);
        for i in [0, 63, 64, 129] {
            m.set(i);
        }
        assert!(m.get(63) && m.get(64) && !m.get(65));
        assert_eq!(m.count(), 4);
        assert_eq!(m.iter_ones().collect::<Vec<_>>(), vec![0, 63, 64, 129]);
    }

    #[test]
    fn from_bools_and_set_ops() {
        let a: VoxelMask = [true, false, true, false].into_iter().collect();
        let b: VoxelMask = [false, true, false, false].into_iter().collect();
        assert!(a.is_disjoint(&b));
        assert_eq!(a.union(&b).count(), 3);
        assert!(a.is_subset(&a.union(&b)));
        assert!(!a.union(&b).is_subset(&a));
        let c = a.complement();
        assert_eq!(c.count(), 2);
        assert!(c.get(1) && c.get(3));
    }
}
