//! Packing routines and the register-blocked micro-kernel.
//!
//! Packing reads an operand through one or more block scatter views and
//! writes `Σ coeff_t * view_t` into a sliver-major buffer. A register-sized
//! sub-block is copied with two constant strides when every view reports a
//! nonzero block scatter entry for both its row block and column block;
//! otherwise each element is fetched through the scatter vectors.
//!
//! The micro-kernel forms one `mr x nr` product of packed slivers and adds it,
//! with a sign, to every target tile of C. Each target picks the strided
//! store on its own.

use std::ops::{AddAssign, Range};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::scatter::{BlockScatterView, PAD};

/// Cache and register blocking sizes, in elements.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockingParams {
    pub mc: usize,
    pub nc: usize,
    pub kc: usize,
    pub mr: usize,
    pub nr: usize,
    pub kr: usize,
}

impl Default for BlockingParams {
    fn default() -> Self {
        BlockingParams {
            mc: 96,
            nc: 4096,
            kc: 256,
            mr: 8,
            nr: 4,
            kr: 4,
        }
    }
}

impl BlockingParams {
    pub fn new(mc: usize, nc: usize, kc: usize, mr: usize, nr: usize, kr: usize) -> Result<Self> {
        let p = BlockingParams {
            mc,
            nc,
            kc,
            mr,
            nr,
            kr,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.mc, self.nc, self.kc, self.mr, self.nr, self.kr];
        if all.contains(&0) {
            return Err(Error::Blocking(format!("all sizes must be positive: {self:?}")));
        }
        for (outer, inner, name) in [
            (self.mc, self.mr, "mc % mr"),
            (self.nc, self.nr, "nc % nr"),
            (self.kc, self.kr, "kc % kr"),
        ] {
            if outer % inner != 0 {
                return Err(Error::Blocking(format!(
                    "{name} must be 0, got {outer} % {inner}"
                )));
            }
        }
        Ok(())
    }
}

/// Everything the driver needs besides the operands.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExecConfig {
    pub params: BlockingParams,
    /// Worker threads for the jr loop. 1 runs inline.
    pub threads: usize,
    /// Take the per-element scatter path everywhere.
    pub force_slow: bool,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            params: BlockingParams::default(),
            threads: 1,
            force_slow: false,
        }
    }
}

impl ExecConfig {
    pub fn with_params(params: BlockingParams) -> Self {
        ExecConfig {
            params,
            ..Self::default()
        }
    }
}

/// Counters of strided ("fast") versus scattered ("slow") block handling.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct KernelStats {
    /// Packed sub-blocks copied with constant strides.
    pub fast_blocks: u64,
    pub slow_blocks: u64,
    /// C tile updates stored with constant strides.
    pub fast_updates: u64,
    pub slow_updates: u64,
}

impl AddAssign for KernelStats {
    fn add_assign(&mut self, o: Self) {
        self.fast_blocks += o.fast_blocks;
        self.slow_blocks += o.slow_blocks;
        self.fast_updates += o.fast_updates;
        self.slow_updates += o.slow_updates;
    }
}

#[derive(Clone, Copy)]
#[repr(C, align(64))]
struct CacheLine([f64; 8]);

/// Contiguous, 64-byte aligned packing buffer.
pub struct PackedBuffer {
    lines: Vec<CacheLine>,
    len: usize,
}

impl PackedBuffer {
    pub fn new(len: usize) -> Self {
        PackedBuffer {
            lines: vec![CacheLine([0.0; 8]); len.div_ceil(8)],
            len,
        }
    }

    /// Grows the buffer to hold at least `len` elements.
    pub fn reserve(&mut self, len: usize) {
        if len > self.len {
            *self = Self::new(len);
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_slice(&self) -> &[f64] {
        // SAFETY: CacheLine is repr(C) around [f64; 8], so `lines` is
        // `8 * lines.len() >= len` contiguous f64 values.
        unsafe { std::slice::from_raw_parts(self.lines.as_ptr().cast::<f64>(), self.len) }
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        // SAFETY: as in `as_slice`, with unique access through `&mut self`.
        unsafe { std::slice::from_raw_parts_mut(self.lines.as_mut_ptr().cast::<f64>(), self.len) }
    }
}

/// One side of a fused Strassen operand: `Σ coeffs[t] * views[t]`.
#[derive(Clone, Debug)]
pub struct OperandSide<'a> {
    views: Vec<&'a BlockScatterView>,
    coeffs: Vec<f64>,
}

impl<'a> OperandSide<'a> {
    /// All views must share dimensions and block geometry, and every
    /// coefficient must be +1 or -1.
    pub fn new(views: Vec<&'a BlockScatterView>, coeffs: &[i8]) -> Result<Self> {
        if views.is_empty() || views.len() != coeffs.len() {
            return Err(Error::Geometry(format!(
                "{} views with {} coefficients",
                views.len(),
                coeffs.len()
            )));
        }
        if let Some(c) = coeffs.iter().find(|c| c.abs() != 1) {
            return Err(Error::Geometry(format!("coefficient {c} is not ±1")));
        }
        let first = views[0];
        if views
            .iter()
            .any(|v| (v.m(), v.n(), v.rb(), v.cb()) != (first.m(), first.n(), first.rb(), first.cb()))
        {
            return Err(Error::Geometry(
                "operand views differ in shape or blocking".into(),
            ));
        }
        Ok(OperandSide {
            views,
            coeffs: coeffs.iter().map(|&c| f64::from(c)).collect(),
        })
    }

    pub fn single(view: &'a BlockScatterView) -> Self {
        OperandSide {
            views: vec![view],
            coeffs: vec![1.0],
        }
    }

    pub fn views(&self) -> &[&'a BlockScatterView] {
        &self.views
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    pub fn m(&self) -> usize {
        self.views[0].m()
    }

    pub fn n(&self) -> usize {
        self.views[0].n()
    }

    fn blocking(&self) -> (usize, usize) {
        (self.views[0].rb(), self.views[0].cb())
    }

    fn all_regular(&self, row_block: usize, col_block: usize) -> bool {
        self.views
            .iter()
            .all(|v| v.rbs()[row_block] != 0 && v.cbs()[col_block] != 0)
    }

    /// Writes (t == 0) or adds the `rows x cols` sub-block at `(r0, c0)` of
    /// every term into `dst`, where element `(i, j)` goes to
    /// `dst[i * di + j * dj]`.
    #[allow(clippy::too_many_arguments)]
    #[inline]
    fn gather_block(
        &self,
        data: &[f64],
        r0: usize,
        c0: usize,
        rows: usize,
        cols: usize,
        fast: bool,
        dst: &mut [f64],
        di: usize,
        dj: usize,
    ) {
        for (t, (v, &coeff)) in self.views.iter().zip(&self.coeffs).enumerate() {
            if fast {
                let base = v.rscat()[r0] + v.cscat()[c0];
                let (rs, cs) = (v.rbs()[r0 / v.rb()], v.cbs()[c0 / v.cb()]);
                for j in 0..cols {
                    for i in 0..rows {
                        let x = coeff * data[base + i * rs + j * cs];
                        let d = &mut dst[i * di + j * dj];
                        if t == 0 {
                            *d = x;
                        } else {
                            *d += x;
                        }
                    }
                }
            } else {
                for j in 0..cols {
                    let cj = v.cscat()[c0 + j];
                    for i in 0..rows {
                        let ri = v.rscat()[r0 + i];
                        let src = if ri == PAD || cj == PAD {
                            0.0
                        } else {
                            data[ri + cj]
                        };
                        let x = coeff * src;
                        let d = &mut dst[i * di + j * dj];
                        if t == 0 {
                            *d = x;
                        } else {
                            *d += x;
                        }
                    }
                }
            }
        }
    }
}

fn check_range(r: &Range<usize>, len: usize, align: usize, max: usize, what: &str) -> Result<()> {
    if r.start >= r.end || r.end > len {
        return Err(Error::InvalidRange {
            start: r.start,
            end: r.end,
            len,
        });
    }
    if !r.start.is_multiple_of(align) || r.len() > max {
        return Err(Error::Geometry(format!(
            "{what} range {r:?} must start on a multiple of {align} and span at most {max}"
        )));
    }
    Ok(())
}

/// Packs rows `rows` and columns `ks` of the A-side sum into `out`.
///
/// Element `(i, p)` of sliver `s` lands at `s * mr * k + p * mr + i` where
/// `k = ks.len()`. Rows past the end of the range are zero-filled.
pub fn pack_a(
    side: &OperandSide<'_>,
    data: &[f64],
    rows: Range<usize>,
    ks: Range<usize>,
    cfg: &ExecConfig,
    out: &mut [f64],
    stats: &mut KernelStats,
) -> Result<()> {
    let BlockingParams { mc, kc, mr, kr, .. } = cfg.params;
    if side.blocking() != (mr, kr) {
        return Err(Error::Geometry(format!(
            "A views use {:?} blocks, expected ({mr}, {kr})",
            side.blocking()
        )));
    }
    check_range(&rows, side.m(), mr, mc, "row")?;
    check_range(&ks, side.n(), kr, kc, "k")?;
    let klen = ks.len();
    let slivers = rows.len().div_ceil(mr);
    if out.len() < slivers * mr * klen {
        return Err(Error::Geometry("A packing buffer too small".into()));
    }

    for (s, r0) in rows.clone().step_by(mr).enumerate() {
        let m_eff = mr.min(rows.end - r0);
        let sliver = &mut out[s * mr * klen..(s + 1) * mr * klen];
        for p0 in ks.clone().step_by(kr) {
            let k_eff = kr.min(ks.end - p0);
            let fast = !cfg.force_slow && side.all_regular(r0 / mr, p0 / kr);
            let dst = &mut sliver[(p0 - ks.start) * mr..];
            side.gather_block(data, r0, p0, m_eff, k_eff, fast, dst, 1, mr);
            if m_eff < mr {
                for p in 0..k_eff {
                    dst[p * mr + m_eff..(p + 1) * mr].fill(0.0);
                }
            }
            if fast {
                stats.fast_blocks += 1;
            } else {
                stats.slow_blocks += 1;
            }
        }
    }
    Ok(())
}

/// Packs rows `ks` and columns `cols` of the B-side sum into `out`.
///
/// Element `(p, j)` of sliver `s` lands at `s * k * nr + p * nr + j`.
/// Columns past the end of the range are zero-filled.
pub fn pack_b(
    side: &OperandSide<'_>,
    data: &[f64],
    ks: Range<usize>,
    cols: Range<usize>,
    cfg: &ExecConfig,
    out: &mut [f64],
    stats: &mut KernelStats,
) -> Result<()> {
    let BlockingParams { nc, kc, nr, kr, .. } = cfg.params;
    if side.blocking() != (kr, nr) {
        return Err(Error::Geometry(format!(
            "B views use {:?} blocks, expected ({kr}, {nr})",
            side.blocking()
        )));
    }
    check_range(&ks, side.m(), kr, kc, "k")?;
    check_range(&cols, side.n(), nr, nc, "column")?;
    let klen = ks.len();
    let slivers = cols.len().div_ceil(nr);
    if out.len() < slivers * nr * klen {
        return Err(Error::Geometry("B packing buffer too small".into()));
    }

    for (s, c0) in cols.clone().step_by(nr).enumerate() {
        let n_eff = nr.min(cols.end - c0);
        let sliver = &mut out[s * nr * klen..(s + 1) * nr * klen];
        for p0 in ks.clone().step_by(kr) {
            let k_eff = kr.min(ks.end - p0);
            let fast = !cfg.force_slow && side.all_regular(p0 / kr, c0 / nr);
            let dst = &mut sliver[(p0 - ks.start) * nr..];
            side.gather_block(data, p0, c0, k_eff, n_eff, fast, dst, nr, 1);
            if n_eff < nr {
                for p in 0..k_eff {
                    dst[p * nr + n_eff..(p + 1) * nr].fill(0.0);
                }
            }
            if fast {
                stats.fast_blocks += 1;
            } else {
                stats.slow_blocks += 1;
            }
        }
    }
    Ok(())
}

#[inline(always)]
fn tile_fixed<const MR: usize, const NR: usize>(a: &[f64], b: &[f64], k: usize, acc: &mut [f64]) {
    let mut regs = [[0.0f64; MR]; NR];
    for (ap, bp) in a.chunks_exact(MR).zip(b.chunks_exact(NR)).take(k) {
        for j in 0..NR {
            for i in 0..MR {
                regs[j][i] += ap[i] * bp[j];
            }
        }
    }
    for j in 0..NR {
        acc[j * MR..(j + 1) * MR].copy_from_slice(&regs[j]);
    }
}

/// `acc[j * mr + i] = Σ_p a[p * mr + i] * b[p * nr + j]`, summed in order of `p`.
#[inline]
pub fn compute_tile(a: &[f64], b: &[f64], k: usize, mr: usize, nr: usize, acc: &mut [f64]) {
    match (mr, nr) {
        (8, 4) => tile_fixed::<8, 4>(a, b, k, acc),
        (4, 4) => tile_fixed::<4, 4>(a, b, k, acc),
        (8, 6) => tile_fixed::<8, 6>(a, b, k, acc),
        _ => {
            acc[..mr * nr].fill(0.0);
            for p in 0..k {
                let ap = &a[p * mr..(p + 1) * mr];
                let bp = &b[p * nr..(p + 1) * nr];
                for j in 0..nr {
                    for i in 0..mr {
                        acc[j * mr + i] += ap[i] * bp[j];
                    }
                }
            }
        }
    }
}

/// Position and real extent of a micro-tile within the C views.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tile {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
}

/// Raw handle to C storage so that threads owning disjoint tiles can store
/// concurrently.
#[derive(Clone, Copy)]
pub(crate) struct SharedOut {
    ptr: *mut f64,
    len: usize,
}

// SAFETY: writers only touch disjoint offsets; see the gemm driver.
unsafe impl Send for SharedOut {}
unsafe impl Sync for SharedOut {}

impl SharedOut {
    pub(crate) fn new(data: &mut [f64]) -> Self {
        SharedOut {
            ptr: data.as_mut_ptr(),
            len: data.len(),
        }
    }

    /// # Safety
    /// No other thread may access `off` concurrently.
    #[inline(always)]
    unsafe fn add(&self, off: usize, v: f64) {
        assert!(off < self.len, "C offset {off} out of bounds");
        *self.ptr.add(off) += v;
    }
}

/// Adds `coeff * acc` into the tile of every target.
///
/// # Safety
/// The tile's offsets in `out` must not be accessed concurrently.
pub(crate) unsafe fn store_tile(
    acc: &[f64],
    mr: usize,
    targets: &[(&BlockScatterView, f64)],
    tile: Tile,
    out: SharedOut,
    force_slow: bool,
    stats: &mut KernelStats,
) {
    for &(v, coeff) in targets {
        let rs = v.rbs()[tile.row / v.rb()];
        let cs = v.cbs()[tile.col / v.cb()];
        if !force_slow && rs != 0 && cs != 0 {
            let base = v.rscat()[tile.row] + v.cscat()[tile.col];
            for j in 0..tile.cols {
                for i in 0..tile.rows {
                    out.add(base + i * rs + j * cs, coeff * acc[j * mr + i]);
                }
            }
            stats.fast_updates += 1;
        } else {
            for j in 0..tile.cols {
                let cj = v.cscat()[tile.col + j];
                if cj == PAD {
                    continue;
                }
                for i in 0..tile.rows {
                    let ri = v.rscat()[tile.row + i];
                    if ri != PAD {
                        out.add(ri + cj, coeff * acc[j * mr + i]);
                    }
                }
            }
            stats.slow_updates += 1;
        }
    }
}

/// Multiplies an `mr x k` A sliver by a `k x nr` B sliver and adds
/// `coeff * product` to `tile` of each target view over `c`.
///
/// Targets must use `(mr, nr)` blocks and the tile must start on a block
/// boundary.
#[allow(clippy::too_many_arguments)]
pub fn microkernel(
    a_sliver: &[f64],
    b_sliver: &[f64],
    k: usize,
    targets: &[(&BlockScatterView, f64)],
    tile: Tile,
    c: &mut [f64],
    cfg: &ExecConfig,
    stats: &mut KernelStats,
) {
    let BlockingParams { mr, nr, .. } = cfg.params;
    let mut acc = vec![0.0; mr * nr];
    compute_tile(a_sliver, b_sliver, k, mr, nr, &mut acc);
    // SAFETY: `c` is exclusively borrowed for the duration of the call.
    unsafe { store_tile(&acc, mr, targets, tile, SharedOut::new(c), cfg.force_slow, stats) };
}

/// `target += coeff * m` through the target's scatter vectors, one
/// `rb x cb` block of the target at a time.
pub fn accumulate_dense_to_view(
    m: &DenseMatrix,
    coeff: f64,
    target: &BlockScatterView,
    c: &mut [f64],
    force_slow: bool,
    stats: &mut KernelStats,
) -> Result<()> {
    if (m.rows(), m.cols()) != (target.m(), target.n()) {
        return Err(Error::Geometry(format!(
            "{}x{} matrix onto {}x{} view",
            m.rows(),
            m.cols(),
            target.m(),
            target.n()
        )));
    }
    let (rb, cb) = (target.rb(), target.cb());
    let md = m.data();
    let ld = m.rows();
    for c0 in (0..target.n()).step_by(cb) {
        let n_eff = cb.min(target.n() - c0);
        for r0 in (0..target.m()).step_by(rb) {
            let m_eff = rb.min(target.m() - r0);
            let rs = target.rbs()[r0 / rb];
            let cs = target.cbs()[c0 / cb];
            if !force_slow && rs != 0 && cs != 0 {
                let base = target.rscat()[r0] + target.cscat()[c0];
                for j in 0..n_eff {
                    for i in 0..m_eff {
                        c[base + i * rs + j * cs] += coeff * md[(r0 + i) + (c0 + j) * ld];
                    }
                }
                stats.fast_updates += 1;
            } else {
                for j in 0..n_eff {
                    for i in 0..m_eff {
                        if let Some(off) = target.offset(r0 + i, c0 + j) {
                            c[off] += coeff * md[(r0 + i) + (c0 + j) * ld];
                        }
                    }
                }
                stats.slow_updates += 1;
            }
        }
    }
    Ok(())
}

/// Materializes `Σ coeff_t * view_t` into `out`, resizing it.
pub fn unpack_into(side: &OperandSide<'_>, data: &[f64], out: &mut DenseMatrix) {
    let (m, n) = (side.m(), side.n());
    out.reset(m, n);
    side.gather_block(data, 0, 0, m, n, false, out.data_mut(), 1, m);
}

/// Materializes `Σ coeff_t * view_t` as a dense column-major matrix.
pub fn unpack_to_dense(side: &OperandSide<'_>, data: &[f64]) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(side.m(), side.n());
    unpack_into(side, data, &mut out);
    out
}
