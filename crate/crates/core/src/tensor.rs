//! Dense strided tensors of `f64`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Initial contents for [`DenseTensor::new`]. Values are written in storage
/// order, independent of the stride layout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Fill {
    Zeros,
    /// Uniform in `[-1, 1)`, reproducible for a given seed.
    Random(u64),
    /// Uniform integers in `[-max_abs, max_abs]`, stored as exact doubles.
    RandomInt {
        seed: u64,
        max_abs: i64,
    },
    /// `data[k] = k`.
    Sequence,
}

/// A strided multi-dimensional array of `f64`.
///
/// Element `idx` lives at `base_offset + Σ idx[d] * strides[d]` in `data`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    extents: Vec<usize>,
    strides: Vec<usize>,
    data: Vec<f64>,
    base_offset: usize,
}

/// Column-major strides: the first index varies fastest.
pub fn column_major_strides(extents: &[usize]) -> Vec<usize> {
    let mut strides = Vec::with_capacity(extents.len());
    let mut acc = 1;
    for &e in extents {
        strides.push(acc);
        acc *= e;
    }
    strides
}

fn fill_data(len: usize, fill: Fill) -> Vec<f64> {
    match fill {
        Fill::Zeros => vec![0.0; len],
        Fill::Sequence => (0..len).map(|k| k as f64).collect(),
        Fill::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
        }
        Fill::RandomInt { seed, max_abs } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..len)
                .map(|_| rng.random_range(-max_abs..=max_abs) as f64)
                .collect()
        }
    }
}

impl DenseTensor {
    /// A column-major tensor with the given extents.
    pub fn new(extents: &[usize], fill: Fill) -> Result<Self> {
        let order: Vec<usize> = (0..extents.len()).collect();
        Self::with_axis_order(extents, &order, fill)
    }

    /// A compact tensor whose axes are laid out in memory in `order`:
    /// `order[0]` has stride 1, `order[1]` the next-smallest stride, and so on.
    pub fn with_axis_order(extents: &[usize], order: &[usize], fill: Fill) -> Result<Self> {
        if let Some(&e) = extents.iter().find(|&&e| e == 0) {
            return Err(Error::ZeroExtent(e));
        }
        let mut seen = vec![false; extents.len()];
        if order.len() != extents.len()
            || order
                .iter()
                .any(|&ax| ax >= extents.len() || std::mem::replace(&mut seen[ax], true))
        {
            return Err(Error::InvalidLayout(format!(
                "axis order {order:?} is not a permutation of 0..{}",
                extents.len()
            )));
        }
        let mut strides = vec![0; extents.len()];
        let mut acc = 1;
        for &ax in order {
            strides[ax] = acc;
            acc *= extents[ax];
        }
        Ok(DenseTensor {
            extents: extents.to_vec(),
            strides,
            data: fill_data(acc, fill),
            base_offset: 0,
        })
    }

    /// Wraps existing storage. Every multi-index must map to a distinct
    /// in-bounds offset.
    pub fn from_parts(
        extents: Vec<usize>,
        strides: Vec<usize>,
        data: Vec<f64>,
        base_offset: usize,
    ) -> Result<Self> {
        if extents.len() != strides.len() {
            return Err(Error::RankMismatch {
                extents: extents.len(),
                strides: strides.len(),
            });
        }
        if let Some(&e) = extents.iter().find(|&&e| e == 0) {
            return Err(Error::ZeroExtent(e));
        }
        let t = DenseTensor {
            extents,
            strides,
            data,
            base_offset,
        };
        let mut offsets: Vec<usize> = t.multi_indices().map(|idx| t.offset_unchecked(&idx)).collect();
        if let Some(&max) = offsets.iter().max() {
            if max >= t.data.len() {
                return Err(Error::InvalidLayout(format!(
                    "offset {max} exceeds storage length {}",
                    t.data.len()
                )));
            }
        }
        offsets.sort_unstable();
        if offsets.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidLayout("two indices share one offset".into()));
        }
        Ok(t)
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn base_offset(&self) -> usize {
        self.base_offset
    }

    pub fn rank(&self) -> usize {
        self.extents.len()
    }

    /// Number of logical elements.
    pub fn len(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn offset_unchecked(&self, idx: &[usize]) -> usize {
        self.base_offset + idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum::<usize>()
    }

    pub fn offset_of(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.extents.len() || idx.iter().zip(&self.extents).any(|(i, e)| i >= e) {
            return Err(Error::IndexOutOfRange {
                index: idx.to_vec(),
                extents: self.extents.clone(),
            });
        }
        Ok(self.offset_unchecked(idx))
    }

    pub fn element_at(&self, idx: &[usize]) -> Result<f64> {
        Ok(self.data[self.offset_of(idx)?])
    }

    pub fn set_element(&mut self, idx: &[usize], value: f64) -> Result<()> {
        let off = self.offset_of(idx)?;
        self.data[off] = value;
        Ok(())
    }

    /// All valid multi-indices, first index fastest.
    pub fn multi_indices(&self) -> MultiIndexIter {
        MultiIndexIter::new(&self.extents)
    }
}

/// Odometer over a box of extents, first coordinate varying fastest.
#[derive(Clone, Debug)]
pub struct MultiIndexIter {
    extents: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl MultiIndexIter {
    pub fn new(extents: &[usize]) -> Self {
        let next = if extents.contains(&0) {
            None
        } else {
            Some(vec![0; extents.len()])
        };
        MultiIndexIter {
            extents: extents.to_vec(),
            next,
        }
    }
}

impl Iterator for MultiIndexIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let cur = self.next.take()?;
        let mut succ = cur.clone();
        for d in 0..succ.len() {
            succ[d] += 1;
            if succ[d] < self.extents[d] {
                self.next = Some(succ);
                return Some(cur);
            }
            succ[d] = 0;
        }
        Some(cur)
    }
}
