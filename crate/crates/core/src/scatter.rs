//! Block scatter matrix views of tensors.
//!
//! A view presents a tensor as an `m x n` matrix. Row `i` and column `j`
//! address `data[rscat[i] + cscat[j]]`. Rows are grouped into blocks of `rb`
//! and columns into blocks of `cb`; `rbs[b]` is the constant stride between
//! consecutive rows of block `b`, or 0 when the block has no constant stride
//! (or touches padding). Kernels use a nonzero entry to switch to strided
//! access for the whole block.

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

/// Scatter entry of an implicit zero row or column. Reads yield 0.0 and
/// writes are dropped.
pub const PAD: usize = usize::MAX;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockScatterView {
    rscat: Vec<usize>,
    cscat: Vec<usize>,
    rb: usize,
    cb: usize,
    rbs: Vec<usize>,
    cbs: Vec<usize>,
    // Stride reported for a block holding a single real entry.
    row_unit: usize,
    col_unit: usize,
}

/// Block scatter vector of `scat` for blocks of `bs` entries.
///
/// A block is regular only when every step equals `unit`, the stride of the
/// fastest nontrivial axis. Blocks that straddle a wrap of that axis can have
/// some other constant step; those are reported as 0 so that regular entries
/// agree across all sub-views of one parent.
fn block_strides(scat: &[usize], bs: usize, unit: usize) -> Vec<usize> {
    scat.chunks(bs)
        .map(|block| {
            let regular =
                !block.contains(&PAD) && block.windows(2).all(|w| w[1] > w[0] && w[1] - w[0] == unit);
            if regular {
                unit
            } else {
                0
            }
        })
        .collect()
}

/// Offsets of every point of a bundle, first axis fastest.
fn linearize(t: &DenseTensor, axes: &[usize]) -> Vec<usize> {
    let extents: Vec<usize> = axes.iter().map(|&ax| t.extents()[ax]).collect();
    let strides: Vec<usize> = axes.iter().map(|&ax| t.strides()[ax]).collect();
    let total: usize = extents.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; axes.len()];
    let mut off = 0usize;
    for _ in 0..total {
        out.push(off);
        for d in 0..idx.len() {
            idx[d] += 1;
            off += strides[d];
            if idx[d] < extents[d] {
                break;
            }
            off -= strides[d] * extents[d];
            idx[d] = 0;
        }
    }
    out
}

fn unit_stride(t: &DenseTensor, axes: &[usize]) -> usize {
    let nontrivial = axes.iter().find(|&&ax| t.extents()[ax] > 1);
    match nontrivial.or(axes.first()).map(|&ax| t.strides()[ax]) {
        Some(s) if s > 0 => s,
        _ => 1,
    }
}

impl BlockScatterView {
    /// Matricizes `t`, whose axes carry `tensor_labels`, with `row_bundle`
    /// as rows and `col_bundle` as columns. The first label of each bundle
    /// varies fastest. The tensor's base offset is folded into `cscat`.
    pub fn make_view(
        t: &DenseTensor,
        tensor_labels: &[char],
        row_bundle: &[char],
        col_bundle: &[char],
        rb: usize,
        cb: usize,
    ) -> Result<Self> {
        if tensor_labels.len() != t.rank() {
            return Err(Error::Bundle(format!(
                "{} labels for a rank-{} tensor",
                tensor_labels.len(),
                t.rank()
            )));
        }
        let axes_of = |bundle: &[char]| -> Result<Vec<usize>> {
            bundle
                .iter()
                .map(|l| {
                    tensor_labels
                        .iter()
                        .position(|x| x == l)
                        .ok_or_else(|| Error::Bundle(format!("label '{l}' is not an axis of the tensor")))
                })
                .collect()
        };
        let row_axes = axes_of(row_bundle)?;
        let col_axes = axes_of(col_bundle)?;
        Self::from_axes(t, &row_axes, &col_axes, rb, cb)
    }

    /// As [`make_view`](Self::make_view) with bundles given as axis numbers.
    pub fn from_axes(
        t: &DenseTensor,
        row_axes: &[usize],
        col_axes: &[usize],
        rb: usize,
        cb: usize,
    ) -> Result<Self> {
        if rb == 0 || cb == 0 {
            return Err(Error::Geometry("block sizes must be at least 1".into()));
        }
        let mut covered = vec![0u8; t.rank()];
        for &ax in row_axes.iter().chain(col_axes) {
            if ax >= t.rank() {
                return Err(Error::Bundle(format!("axis {ax} out of range")));
            }
            covered[ax] += 1;
        }
        if covered.iter().any(|&c| c > 1) {
            return Err(Error::Bundle("row and column bundles overlap".into()));
        }
        if covered.contains(&0) {
            return Err(Error::Bundle("bundles do not cover every axis".into()));
        }

        let rscat = linearize(t, row_axes);
        let cscat: Vec<usize> = linearize(t, col_axes)
            .into_iter()
            .map(|c| c + t.base_offset())
            .collect();
        Ok(Self::from_scatter(
            rscat,
            cscat,
            rb,
            cb,
            unit_stride(t, row_axes),
            unit_stride(t, col_axes),
        ))
    }

    /// A view over a plain strided matrix starting at `offset`.
    pub fn dense(
        rows: usize,
        cols: usize,
        row_stride: usize,
        col_stride: usize,
        offset: usize,
        rb: usize,
        cb: usize,
    ) -> Self {
        let rscat = (0..rows).map(|i| i * row_stride).collect();
        let cscat = (0..cols).map(|j| offset + j * col_stride).collect();
        Self::from_scatter(rscat, cscat, rb, cb, row_stride.max(1), col_stride.max(1))
    }

    fn from_scatter(
        rscat: Vec<usize>,
        cscat: Vec<usize>,
        rb: usize,
        cb: usize,
        row_unit: usize,
        col_unit: usize,
    ) -> Self {
        let rbs = block_strides(&rscat, rb, row_unit);
        let cbs = block_strides(&cscat, cb, col_unit);
        BlockScatterView {
            rscat,
            cscat,
            rb,
            cb,
            rbs,
            cbs,
            row_unit,
            col_unit,
        }
    }

    /// Sub-view over `rows x cols`. Block scatter vectors are recomputed with
    /// blocks aligned to the start of each range.
    pub fn split_view(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Result<Self> {
        for (r, len) in [(&rows, self.m()), (&cols, self.n())] {
            if r.start >= r.end || r.end > len {
                return Err(Error::InvalidRange {
                    start: r.start,
                    end: r.end,
                    len,
                });
            }
        }
        Ok(Self::from_scatter(
            self.rscat[rows].to_vec(),
            self.cscat[cols].to_vec(),
            self.rb,
            self.cb,
            self.row_unit,
            self.col_unit,
        ))
    }

    /// Extends the view with PAD rows and columns up to `m_target x n_target`.
    pub fn pad_view(&self, m_target: usize, n_target: usize) -> Result<Self> {
        if m_target < self.m() || n_target < self.n() {
            return Err(Error::Geometry(format!(
                "cannot pad {}x{} down to {m_target}x{n_target}",
                self.m(),
                self.n()
            )));
        }
        if m_target == self.m() && n_target == self.n() {
            return Ok(self.clone());
        }
        let mut rscat = self.rscat.clone();
        rscat.resize(m_target, PAD);
        let mut cscat = self.cscat.clone();
        cscat.resize(n_target, PAD);
        Ok(Self::from_scatter(
            rscat,
            cscat,
            self.rb,
            self.cb,
            self.row_unit,
            self.col_unit,
        ))
    }

    pub fn m(&self) -> usize {
        self.rscat.len()
    }
    pub fn n(&self) -> usize {
        self.cscat.len()
    }
    pub fn rscat(&self) -> &[usize] {
        &self.rscat
    }
    pub fn cscat(&self) -> &[usize] {
        &self.cscat
    }
    pub fn rb(&self) -> usize {
        self.rb
    }
    pub fn cb(&self) -> usize {
        self.cb
    }
    pub fn rbs(&self) -> &[usize] {
        &self.rbs
    }
    pub fn cbs(&self) -> &[usize] {
        &self.cbs
    }

    /// Storage offset of `(i, j)`, or `None` for a padded position.
    #[inline]
    pub fn offset(&self, i: usize, j: usize) -> Option<usize> {
        let (r, c) = (self.rscat[i], self.cscat[j]);
        (r != PAD && c != PAD).then(|| r + c)
    }

    /// Element `(i, j)` of the view over `data`; padding reads as zero.
    #[inline]
    pub fn get(&self, data: &[f64], i: usize, j: usize) -> f64 {
        self.offset(i, j).map_or(0.0, |o| data[o])
    }

    /// Copies the view into a dense column-major `m x n` array.
    pub fn to_dense(&self, data: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.m() * self.n());
        for j in 0..self.n() {
            for i in 0..self.m() {
                out.push(self.get(data, i, j));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Fill;

    fn dca() -> (DenseTensor, BlockScatterView) {
        // A_{d,c,a} with d:8, c:2, a:4, column-major.
        let t = DenseTensor::new(&[8, 2, 4], Fill::Sequence).unwrap();
        let v = BlockScatterView::make_view(&t, &['d', 'c', 'a'], &['a', 'c'], &['d'], 8, 4).unwrap();
        (t, v)
    }

    #[test]
    fn dca_view_scatter_vectors() {
        let (t, v) = dca();
        assert_eq!(t.strides(), &[1, 8, 16]);
        assert_eq!(v.rscat(), &[0, 16, 32, 48, 8, 24, 40, 56]);
        assert_eq!(v.rbs(), &[0]);
        assert_eq!(v.cscat(), &[0, 1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(v.cbs(), &[1, 1]);
    }

    #[test]
    fn dca_view_brute_force_offsets() {
        let (t, v) = dca();
        for a in 0..4 {
            for c in 0..2 {
                for d in 0..8 {
                    let want = t.element_at(&[d, c, a]).unwrap();
                    assert_eq!(v.get(t.data(), a + 4 * c, d), want);
                }
            }
        }
    }

    #[test]
    fn plain_matrix_view_is_regular() {
        let (m, n) = (16, 12);
        let t = DenseTensor::new(&[m, n], Fill::Sequence).unwrap();
        let v = BlockScatterView::make_view(&t, &['i', 'j'], &['i'], &['j'], 8, 4).unwrap();
        assert_eq!(v.rscat(), (0..m).collect::<Vec<_>>().as_slice());
        assert!(v.rbs().iter().all(|&s| s == 1));
        assert_eq!(v.cscat(), (0..n).map(|j| j * m).collect::<Vec<_>>().as_slice());
        assert!(v.cbs().iter().all(|&s| s == m));
    }

    #[test]
    fn unit_extent_bundle() {
        let t = DenseTensor::new(&[1, 5], Fill::Sequence).unwrap();
        let v = BlockScatterView::make_view(&t, &['x', 'y'], &['x'], &['y'], 8, 4).unwrap();
        assert_eq!(v.m(), 1);
        assert_eq!(v.rscat(), &[0]);
        assert_eq!(v.rbs(), &[1]);
    }

    #[test]
    fn base_offset_folded_into_columns() {
        let t = DenseTensor::from_parts(vec![2, 2], vec![1, 2], (0..9).map(f64::from).collect(), 5).unwrap();
        let v = BlockScatterView::from_axes(&t, &[0], &[1], 2, 2).unwrap();
        assert_eq!(v.rscat(), &[0, 1]);
        assert_eq!(v.cscat(), &[5, 7]);
        assert_eq!(v.get(t.data(), 1, 1), 8.0);
    }

    #[test]
    fn bundle_errors() {
        let t = DenseTensor::new(&[2, 3, 4], Fill::Zeros).unwrap();
        let labels = ['a', 'b', 'c'];
        assert!(BlockScatterView::make_view(&t, &labels, &['a', 'b'], &['b', 'c'], 2, 2).is_err());
        assert!(BlockScatterView::make_view(&t, &labels, &['a'], &['b'], 2, 2).is_err());
        assert!(BlockScatterView::make_view(&t, &labels, &['a', 'z'], &['b', 'c'], 2, 2).is_err());
        assert!(BlockScatterView::make_view(&t, &labels, &['a'], &['b', 'c'], 0, 2).is_err());
    }

    #[test]
    fn quadrant_of_regular_matrix_keeps_strides() {
        let t = DenseTensor::new(&[16, 16], Fill::Sequence).unwrap();
        let v = BlockScatterView::from_axes(&t, &[0], &[1], 8, 4).unwrap();
        for (r, c) in [(0..8, 0..8), (0..8, 8..16), (8..16, 0..8), (8..16, 8..16)] {
            let q = v.split_view(r, c).unwrap();
            assert!(q.rbs().iter().all(|&s| s == 1));
            assert!(q.cbs().iter().all(|&s| s == 16));
        }
    }

    #[test]
    fn split_recomputes_block_strides() {
        let (_, v) = dca();
        let q = v.split_view(0..4, 0..8).unwrap();
        assert_eq!(q.rscat(), &[0, 16, 32, 48]);
        assert_eq!(q.rbs(), &[16]);
    }

    #[test]
    fn identity_split() {
        let (_, v) = dca();
        assert_eq!(v.split_view(0..8, 0..8).unwrap(), v);
    }

    #[test]
    #[allow(clippy::reversed_empty_ranges)]
    fn split_rejects_bad_ranges() {
        let (_, v) = dca();
        assert!(v.split_view(3..3, 0..8).is_err());
        assert!(v.split_view(0..9, 0..8).is_err());
        assert!(v.split_view(0..8, 4..2).is_err());
    }

    #[test]
    fn pad_rows() {
        let t = DenseTensor::new(&[3, 2], Fill::Sequence).unwrap();
        let v = BlockScatterView::from_axes(&t, &[0], &[1], 4, 4).unwrap();
        let p = v.pad_view(4, 2).unwrap();
        assert_eq!(p.rscat(), &[0, 1, 2, PAD]);
        assert_eq!(p.rbs(), &[0]);
        assert_eq!(v.pad_view(3, 2).unwrap(), v);
        assert!(v.pad_view(2, 2).is_err());
    }

    #[test]
    fn padded_traversal_embeds_in_zeros() {
        let t = DenseTensor::new(&[7, 7], Fill::Random(3)).unwrap();
        let v = BlockScatterView::from_axes(&t, &[0], &[1], 4, 4).unwrap();
        let p = v.pad_view(8, 8).unwrap();
        let mut embedded = vec![0.0; 64];
        for j in 0..7 {
            for i in 0..7 {
                embedded[i + 8 * j] = t.element_at(&[i, j]).unwrap();
            }
        }
        assert_eq!(p.to_dense(t.data()), embedded);
        assert_eq!(p.offset(7, 0), None);
    }

    #[test]
    fn negative_differences_are_irregular() {
        // Row bundle (a, c) with a:2 stride 3, c:3 stride 1 gives rows 0,3,1,4,2,5.
        let t = DenseTensor::with_axis_order(&[2, 3], &[1, 0], Fill::Zeros).unwrap();
        let v = BlockScatterView::from_axes(&t, &[0, 1], &[], 2, 1).unwrap();
        assert_eq!(v.rscat(), &[0, 3, 1, 4, 2, 5]);
        assert_eq!(v.rbs(), &[3, 3, 3]);
        let q = v.split_view(3..6, 0..1).unwrap();
        assert_eq!(q.rscat(), &[4, 2, 5]);
        assert_eq!(q.rbs(), &[0, 3]);
    }

    #[test]
    fn step_across_a_wrap_is_not_regular() {
        // Axes x(2), z(2), y(3) laid out x fastest then z then y; rows are (x, y).
        let t = DenseTensor::new(&[2, 2, 3], Fill::Zeros).unwrap();
        let v = BlockScatterView::from_axes(&t, &[0, 2], &[1], 2, 1).unwrap();
        assert_eq!(v.rscat(), &[0, 1, 4, 5, 8, 9]);
        let top = v.split_view(0..3, 0..2).unwrap();
        let bottom = v.split_view(3..6, 0..2).unwrap();
        assert_eq!(top.rbs(), &[1, 1]);
        // Rows 5 and 8 differ by 3, which is constant but not the unit step.
        assert_eq!(bottom.rbs(), &[0, 1]);
    }

    #[test]
    fn unit_skips_trivial_leading_axis() {
        let t = DenseTensor::new(&[1, 5, 2], Fill::Zeros).unwrap();
        let v = BlockScatterView::from_axes(&t, &[0, 1], &[2], 2, 1).unwrap();
        assert_eq!(v.rscat(), &[0, 1, 2, 3, 4]);
        assert_eq!(v.rbs(), &[1, 1, 1]);
    }

    proptest::proptest! {
        #[test]
        fn split_twice_equals_split_once(
            seed in 0u64..1000,
            rb in 1usize..6,
            cb in 1usize..6,
            cuts in proptest::array::uniform8(0usize..1000),
        ) {
            let t = DenseTensor::with_axis_order(&[3, 4, 5], &[2, 0, 1], Fill::Random(seed)).unwrap();
            let v = BlockScatterView::from_axes(&t, &[1, 0], &[2], rb, cb).unwrap();
            let range = |len: usize, x: usize, y: usize| {
                let start = x % len;
                start..start + 1 + y % (len - start)
            };
            let (r1, c1) = (range(v.m(), cuts[0], cuts[1]), range(v.n(), cuts[2], cuts[3]));
            let outer = v.split_view(r1.clone(), c1.clone()).unwrap();
            let (r2, c2) = (range(outer.m(), cuts[4], cuts[5]), range(outer.n(), cuts[6], cuts[7]));
            let twice = outer.split_view(r2.clone(), c2.clone()).unwrap();
            let once = v
                .split_view(r1.start + r2.start..r1.start + r2.end, c1.start + c2.start..c1.start + c2.end)
                .unwrap();
            proptest::prop_assert_eq!(twice, once);
        }
    }
}
