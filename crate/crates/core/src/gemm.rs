//! GotoBLAS five-loop driver over block scatter views.
//!
//! ```text
//! for jc in 0..n step nc          // B̃ panel (L3)
//!   for pc in 0..k step kc
//!     pack B[pc, jc] -> B̃
//!     for ic in 0..m step mc      // Ã block (L2)
//!       pack A[ic, pc] -> Ã
//!       for jr in 0..nc step nr
//!         for ir in 0..mc step mr
//!           micro-kernel -> every C target
//! ```
//!
//! The driver is written for the fused Strassen primitive
//! `Σ c_t C_t += (Σ a_t A_t)(Σ b_t B_t)`; ordinary GEMM is the case of one
//! view per side.

use crate::error::{Error, Result};
use crate::kernel::{
    compute_tile, pack_a, pack_b, store_tile, BlockingParams, ExecConfig, KernelStats, OperandSide,
    PackedBuffer, SharedOut, Tile,
};
use crate::matrix::DenseMatrix;
use crate::scatter::BlockScatterView;

/// `Σ c.coeffs[t] * c.views[t] += (Σ a) (Σ b)`.
#[derive(Clone, Debug)]
pub struct FusedPrimitive<'a> {
    pub a: OperandSide<'a>,
    pub b: OperandSide<'a>,
    pub c: OperandSide<'a>,
}

impl FusedPrimitive<'_> {
    /// `(m, n, k)` when the three sides are conformal.
    pub fn dims(&self) -> Result<(usize, usize, usize)> {
        let (m, k) = (self.a.m(), self.a.n());
        let n = self.b.n();
        if self.b.m() != k || self.c.m() != m || self.c.n() != n {
            return Err(Error::Geometry(format!(
                "A {}x{}, B {}x{}, C {}x{} are not conformal",
                m,
                k,
                self.b.m(),
                n,
                self.c.m(),
                self.c.n()
            )));
        }
        Ok((m, n, k))
    }
}

/// Packing buffers for Ã and B̃, reused across calls.
pub struct Workspace {
    a: PackedBuffer,
    b: PackedBuffer,
}

impl Workspace {
    pub fn new() -> Self {
        Workspace {
            a: PackedBuffer::new(0),
            b: PackedBuffer::new(0),
        }
    }

    /// Buffers large enough for an `m x n x k` problem.
    pub fn for_problem(m: usize, n: usize, k: usize, p: &BlockingParams) -> Self {
        let mut ws = Self::new();
        ws.reserve(m, n, k, p);
        ws
    }

    pub fn reserve(&mut self, m: usize, n: usize, k: usize, p: &BlockingParams) {
        let kc = p.kc.min(k);
        let mc = p.mc.min(m.div_ceil(p.mr) * p.mr);
        let nc = p.nc.min(n.div_ceil(p.nr) * p.nr);
        self.a.reserve(mc * kc);
        self.b.reserve(kc * nc);
    }
}

impl Default for Workspace {
    fn default() -> Self {
        Self::new()
    }
}

/// True when no two real entries of `views` share an offset, within one
/// view or across views. Concurrent tile stores rely on this.
fn targets_disjoint(views: &[&BlockScatterView], len: usize) -> bool {
    let mut seen = vec![false; len];
    for v in views {
        for &c in v.cscat().iter().filter(|&&c| c != crate::PAD) {
            for &r in v.rscat().iter().filter(|&&r| r != crate::PAD) {
                if std::mem::replace(&mut seen[r + c], true) {
                    return false;
                }
            }
        }
    }
    true
}

/// Runs the fused primitive, adding into the storage behind the C views.
///
/// Fails if the C views overlap while the run is threaded (and always in
/// debug builds).
#[allow(clippy::too_many_arguments)]
pub fn run_fused(
    prim: &FusedPrimitive<'_>,
    a_data: &[f64],
    b_data: &[f64],
    c_data: &mut [f64],
    cfg: &ExecConfig,
    ws: &mut Workspace,
    stats: &mut KernelStats,
) -> Result<()> {
    cfg.params.validate()?;
    let (m, n, k) = prim.dims()?;
    let BlockingParams {
        mc, nc, kc, mr, nr, ..
    } = cfg.params;
    if prim.c.views().iter().any(|v| (v.rb(), v.cb()) != (mr, nr)) {
        return Err(Error::Geometry(format!("C views must use ({mr}, {nr}) blocks")));
    }
    for v in prim.c.views() {
        let max_r = v.rscat().iter().filter(|&&r| r != crate::PAD).max();
        let max_c = v.cscat().iter().filter(|&&c| c != crate::PAD).max();
        if let (Some(r), Some(c)) = (max_r, max_c) {
            if r + c >= c_data.len() {
                return Err(Error::Geometry("C view addresses past the end of storage".into()));
            }
        }
    }
    let threads = cfg.threads.max(1);
    if (threads > 1 || cfg!(debug_assertions)) && !targets_disjoint(prim.c.views(), c_data.len()) {
        return Err(Error::Geometry("C views address overlapping storage".into()));
    }
    ws.reserve(m, n, k, &cfg.params);

    let targets: Vec<(&BlockScatterView, f64)> = prim
        .c
        .views()
        .iter()
        .copied()
        .zip(prim.c.coeffs().iter().copied())
        .collect();
    let out = SharedOut::new(c_data);

    for jc in (0..n).step_by(nc) {
        let n_cur = nc.min(n - jc);
        for pc in (0..k).step_by(kc) {
            let k_cur = kc.min(k - pc);
            pack_b(
                &prim.b,
                b_data,
                pc..pc + k_cur,
                jc..jc + n_cur,
                cfg,
                ws.b.as_mut_slice(),
                stats,
            )?;
            for ic in (0..m).step_by(mc) {
                let m_cur = mc.min(m - ic);
                pack_a(
                    &prim.a,
                    a_data,
                    ic..ic + m_cur,
                    pc..pc + k_cur,
                    cfg,
                    ws.a.as_mut_slice(),
                    stats,
                )?;

                let a_buf = ws.a.as_slice();
                let b_buf = ws.b.as_slice();
                let macro_kernel = |jr_tiles: std::ops::Range<usize>, stats: &mut KernelStats| {
                    let mut acc = vec![0.0; mr * nr];
                    for jr in jr_tiles {
                        let b_sliver = &b_buf[jr * nr * k_cur..(jr + 1) * nr * k_cur];
                        let col = jc + jr * nr;
                        for ir in 0..m_cur.div_ceil(mr) {
                            let a_sliver = &a_buf[ir * mr * k_cur..(ir + 1) * mr * k_cur];
                            compute_tile(a_sliver, b_sliver, k_cur, mr, nr, &mut acc);
                            let row = ic + ir * mr;
                            let tile = Tile {
                                row,
                                col,
                                rows: mr.min(m - row),
                                cols: nr.min(n - col),
                            };
                            // SAFETY: each jr tile covers distinct columns of
                            // every target, and distinct targets of one
                            // primitive address disjoint storage.
                            unsafe { store_tile(&acc, mr, &targets, tile, out, cfg.force_slow, stats) };
                        }
                    }
                };

                let n_tiles = n_cur.div_ceil(nr);
                if threads == 1 || n_tiles < 2 {
                    macro_kernel(0..n_tiles, stats);
                } else {
                    let per = n_tiles.div_ceil(threads);
                    let merged = std::thread::scope(|s| {
                        let handles: Vec<_> = (0..n_tiles)
                            .step_by(per)
                            .map(|start| {
                                let end = (start + per).min(n_tiles);
                                let mk = &macro_kernel;
                                s.spawn(move || {
                                    let mut local = KernelStats::default();
                                    mk(start..end, &mut local);
                                    local
                                })
                            })
                            .collect();
                        handles
                            .into_iter()
                            .map(|h| h.join().expect("macro-kernel thread panicked"))
                            .fold(KernelStats::default(), |mut acc, s| {
                                acc += s;
                                acc
                            })
                    });
                    *stats += merged;
                }
            }
        }
    }
    Ok(())
}

/// `c += a * b` on dense column-major matrices through the same driver.
pub fn run_gemm_dense(
    c: &mut DenseMatrix,
    a: &DenseMatrix,
    b: &DenseMatrix,
    cfg: &ExecConfig,
    ws: &mut Workspace,
    stats: &mut KernelStats,
) -> Result<()> {
    if a.cols() != b.rows() || c.rows() != a.rows() || c.cols() != b.cols() {
        return Err(Error::Geometry(format!(
            "C {}x{} += A {}x{} * B {}x{}",
            c.rows(),
            c.cols(),
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    if a.rows() == 0 || b.cols() == 0 || a.cols() == 0 {
        return Ok(());
    }
    let p = &cfg.params;
    let av = a.view(p.mr, p.kr);
    let bv = b.view(p.kr, p.nr);
    let cv = c.view(p.mr, p.nr);
    let prim = FusedPrimitive {
        a: OperandSide::single(&av),
        b: OperandSide::single(&bv),
        c: OperandSide::single(&cv),
    };
    run_fused(&prim, a.data(), b.data(), c.data_mut(), cfg, ws, stats)
}
