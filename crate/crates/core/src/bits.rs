//! Fixed-width binary feature vectors.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Identifier of a binary feature (a skill).
pub type FeatureId = u32;

const WORD: usize = 64;

/// A point of `{0,1}^d`, stored as packed 64-bit words.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryVector {
    dim: usize,
    words: Vec<u64>,
}

impl BinaryVector {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            words: vec![0; dim.div_ceil(WORD)],
        }
    }

    /// Builds a vector with the given features set. Ids outside `0..dim`
    /// panic.
    pub fn from_active<I>(dim: usize, active: I) -> Self
    where
        I: IntoIterator<Item = FeatureId>,
    {
        let mut v = Self::zeros(dim);
        for id in active {
            v.set(id, true);
        }
        v
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, id: FeatureId) -> bool {
        let i = id as usize;
        assert!(
            i < self.dim,
            "feature {i} out of range for dimension {}",
            self.dim
        );
        self.words[i / WORD] >> (i % WORD) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, id: FeatureId, on: bool) {
        let i = id as usize;
        assert!(
            i < self.dim,
            "feature {i} out of range for dimension {}",
            self.dim
        );
        let mask = 1u64 << (i % WORD);
        if on {
            self.words[i / WORD] |= mask;
        } else {
            self.words[i / WORD] &= !mask;
        }
    }

    #[inline]
    pub fn toggle(&mut self, id: FeatureId) {
        let i = id as usize;
        assert!(
            i < self.dim,
            "feature {i} out of range for dimension {}",
            self.dim
        );
        self.words[i / WORD] ^= 1u64 << (i % WORD);
    }

    /// Copy of `self` with every listed feature inverted.
    pub fn toggled<'a, I>(&self, ids: I) -> Self
    where
        I: IntoIterator<Item = &'a FeatureId>,
    {
        let mut out = self.clone();
        for &id in ids {
            out.toggle(id);
        }
        out
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Active feature ids in ascending order.
    pub fn active(&self) -> impl Iterator<Item = FeatureId> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros() as usize;
                w &= w - 1;
                Some((wi * WORD + bit) as FeatureId)
            })
        })
    }

    pub fn hamming(&self, other: &Self) -> usize {
        assert_eq!(self.dim, other.dim);
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }
}

impl fmt::Debug for BinaryVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BinaryVector(dim={}, ", self.dim)?;
        f.debug_set().entries(self.active()).finish()?;
        f.write_str(")")
    }
}

/// Serialized as `{"dim": d, "active": [ids]}`.
#[derive(Serialize, Deserialize)]
struct SparseForm {
    dim: usize,
    active: Vec<FeatureId>,
}

impl Serialize for BinaryVector {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        SparseForm {
            dim: self.dim,
            active: self.active().collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BinaryVector {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let form = SparseForm::deserialize(deserializer)?;
        if let Some(&bad) = form.active.iter().find(|&&id| id as usize >= form.dim) {
            return Err(serde::de::Error::custom(format!(
                "feature {bad} out of range for dimension {}",
                form.dim
            )));
        }
        Ok(Self::from_active(form.dim, form.active))
    }
}
