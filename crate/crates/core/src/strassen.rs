//! Strassen's algorithm on block scatter views.
//!
//! One level splits every operand into quadrants
//!
//! ```text
//! X = | X0 X1 |
//!     | X2 X3 |
//! ```
//!
//! and computes `C += A B` with seven products:
//!
//! ```text
//! M0 = (A0 + A3)(B0 + B3)   C0 += M0; C3 += M0
//! M1 = (A2 + A3) B0         C2 += M1; C3 -= M1
//! M2 = A0 (B1 - B3)         C1 += M2; C3 += M2
//! M3 = A3 (B2 - B0)         C0 += M3; C2 += M3
//! M4 = (A0 + A1) B3         C1 += M4; C0 -= M4
//! M5 = (A2 - A0)(B0 + B1)   C3 += M5
//! M6 = (A1 - A3)(B2 + B3)   C0 += M6
//! ```
//!
//! Deeper levels substitute the table into itself, so a level-`L` run
//! performs `7^L` leaf products over `4^L` quadrants per operand.

use std::fmt;
use std::str::FromStr;

use crate::contraction::ContractionSpec;
use crate::error::{Error, Result};
use crate::gemm::{run_fused, run_gemm_dense, FusedPrimitive, Workspace};
use crate::kernel::{accumulate_dense_to_view, unpack_into, ExecConfig, KernelStats, OperandSide};
use crate::matrix::DenseMatrix;
use crate::reference::{effective_gflops, RunStats};
use crate::scatter::BlockScatterView;
use crate::tensor::DenseTensor;
use crate::Instant;

/// Quadrant id and sign.
pub type QuadrantOp = (usize, i8);

/// One leaf product `(Σ a) (Σ b)` and the C quadrants it is added to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StrassenTerm {
    pub a: Vec<QuadrantOp>,
    pub b: Vec<QuadrantOp>,
    pub c: Vec<QuadrantOp>,
}

#[rustfmt::skip]
const ONE_LEVEL: [(&[QuadrantOp], &[QuadrantOp], &[QuadrantOp]); 7] = [
    (&[(0, 1), (3, 1)],  &[(0, 1), (3, 1)],  &[(0, 1), (3, 1)]),
    (&[(2, 1), (3, 1)],  &[(0, 1)],          &[(2, 1), (3, -1)]),
    (&[(0, 1)],          &[(1, 1), (3, -1)], &[(1, 1), (3, 1)]),
    (&[(3, 1)],          &[(2, 1), (0, -1)], &[(0, 1), (2, 1)]),
    (&[(0, 1), (1, 1)],  &[(3, 1)],          &[(1, 1), (0, -1)]),
    (&[(2, 1), (0, -1)], &[(0, 1), (1, 1)],  &[(3, 1)]),
    (&[(1, 1), (3, -1)], &[(2, 1), (3, 1)],  &[(0, 1)]),
];

fn compose(outer: &[QuadrantOp], inner: &[QuadrantOp], inner_quadrants: usize) -> Vec<QuadrantOp> {
    outer
        .iter()
        .flat_map(|&(q, s)| {
            inner
                .iter()
                .map(move |&(sub, t)| (q * inner_quadrants + sub, s * t))
        })
        .collect()
}

/// The `7^level` terms, in table order (outer level slowest).
pub fn strassen_terms(level: usize) -> Vec<StrassenTerm> {
    if level == 0 {
        return vec![StrassenTerm {
            a: vec![(0, 1)],
            b: vec![(0, 1)],
            c: vec![(0, 1)],
        }];
    }
    let inner = strassen_terms(level - 1);
    let sub = 4usize.pow(level as u32 - 1);
    ONE_LEVEL
        .iter()
        .flat_map(|(a, b, c)| {
            inner.iter().map(move |t| StrassenTerm {
                a: compose(a, &t.a, sub),
                b: compose(b, &t.b, sub),
                c: compose(c, &t.c, sub),
            })
        })
        .collect()
}

fn split4(v: &BlockScatterView) -> Result<[BlockScatterView; 4]> {
    let (hm, hn) = (v.m() / 2, v.n() / 2);
    Ok([
        v.split_view(0..hm, 0..hn)?,
        v.split_view(0..hm, hn..v.n())?,
        v.split_view(hm..v.m(), 0..hn)?,
        v.split_view(hm..v.m(), hn..v.n())?,
    ])
}

/// The `4^level` quadrant views of `v`, indexed by quadrant id.
///
/// The view is first padded so both dimensions are multiples of `2^level`.
/// Id `q * 4^(level-1) + sub` is sub-quadrant `sub` of top-level quadrant
/// `q`, with quadrants numbered row-major at every level.
pub fn quadrant_views(v: &BlockScatterView, level: usize) -> Result<Vec<BlockScatterView>> {
    let f = 1usize << level;
    let padded = v.pad_view(v.m().div_ceil(f) * f, v.n().div_ceil(f) * f)?;
    let mut views = vec![padded];
    for _ in 0..level {
        views = views
            .iter()
            .map(split4)
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
    }
    Ok(views)
}

/// How the seven products are executed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Operand sums folded into packing, C updates folded into the micro-kernel.
    Abc,
    /// Each product is stored in a dense temporary, then added into C.
    Ab,
    /// Operand sums are also copied to dense temporaries before a plain GEMM.
    Naive,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Abc, Variant::Ab, Variant::Naive];

    /// The numbering used by the `-impl` flag.
    pub fn from_impl(n: u32) -> Option<Self> {
        match n {
            1 => Some(Variant::Abc),
            2 => Some(Variant::Ab),
            3 => Some(Variant::Naive),
            _ => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Abc => "abc",
            Variant::Ab => "ab",
            Variant::Naive => "naive",
        })
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "abc" => Ok(Variant::Abc),
            "ab" => Ok(Variant::Ab),
            "naive" => Ok(Variant::Naive),
            other => Err(format!("unknown variant {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ContractOptions {
    pub level: usize,
    pub variant: Variant,
    pub exec: ExecConfig,
    /// Deepest level accepted.
    pub max_level: usize,
}

impl ContractOptions {
    pub const DEFAULT_MAX_LEVEL: usize = 2;

    pub fn new(level: usize, variant: Variant) -> Self {
        ContractOptions {
            level,
            variant,
            exec: ExecConfig::default(),
            max_level: Self::DEFAULT_MAX_LEVEL,
        }
    }
}

fn check_extents(t: &DenseTensor, want: Vec<usize>, name: &str) -> Result<()> {
    if t.extents() != want.as_slice() {
        return Err(Error::Bundle(format!(
            "tensor {name} has extents {:?}, contraction expects {want:?}",
            t.extents()
        )));
    }
    Ok(())
}

/// Classical flops actually executed by the leaf products plus the extra
/// operand additions and C updates Strassen introduces.
fn executed_flops(terms: &[StrassenTerm], mq: usize, nq: usize, kq: usize) -> f64 {
    let (mq, nq, kq) = (mq as f64, nq as f64, kq as f64);
    terms
        .iter()
        .map(|t| {
            2.0 * mq * nq * kq
                + (t.a.len() - 1) as f64 * mq * kq
                + (t.b.len() - 1) as f64 * kq * nq
                + (t.c.len() - 1) as f64 * mq * nq
        })
        .sum()
}

fn side<'a>(ops: &[QuadrantOp], quads: &'a [BlockScatterView]) -> Result<OperandSide<'a>> {
    let views = ops.iter().map(|&(q, _)| &quads[q]).collect();
    let signs: Vec<i8> = ops.iter().map(|&(_, s)| s).collect();
    OperandSide::new(views, &signs)
}

/// `C += contraction(A, B)` using `opts.level` levels of Strassen.
pub fn contract(
    spec: &ContractionSpec,
    a: &DenseTensor,
    b: &DenseTensor,
    c: &mut DenseTensor,
    opts: &ContractOptions,
) -> Result<RunStats> {
    check_extents(a, spec.extents_of_a(), "A")?;
    check_extents(b, spec.extents_of_b(), "B")?;
    check_extents(c, spec.extents_of_c(), "C")?;
    if opts.level > opts.max_level {
        return Err(Error::LevelTooDeep {
            level: opts.level,
            max: opts.max_level,
        });
    }
    let cfg = &opts.exec;
    cfg.params.validate()?;
    let p = cfg.params;

    let start = Instant::now();

    let av = BlockScatterView::make_view(a, spec.labels_a(), spec.bundle_i(), spec.bundle_p(), p.mr, p.kr)?;
    let bv = BlockScatterView::make_view(b, spec.labels_b(), spec.bundle_p(), spec.bundle_j(), p.kr, p.nr)?;
    let cv = BlockScatterView::make_view(c, spec.labels_c(), spec.bundle_i(), spec.bundle_j(), p.mr, p.nr)?;
    let a_quads = quadrant_views(&av, opts.level)?;
    let b_quads = quadrant_views(&bv, opts.level)?;
    let c_quads = quadrant_views(&cv, opts.level)?;
    let (mq, kq) = (a_quads[0].m(), a_quads[0].n());
    let nq = b_quads[0].n();

    let terms = strassen_terms(opts.level);
    let mut ws = Workspace::for_problem(mq, nq, kq, &p);
    let mut kstats = KernelStats::default();
    let mut leaf_multiplies = 0u64;

    match opts.variant {
        Variant::Abc => {
            for t in &terms {
                let prim = FusedPrimitive {
                    a: side(&t.a, &a_quads)?,
                    b: side(&t.b, &b_quads)?,
                    c: side(&t.c, &c_quads)?,
                };
                run_fused(&prim, a.data(), b.data(), c.data_mut(), cfg, &mut ws, &mut kstats)?;
                leaf_multiplies += 1;
            }
        }
        Variant::Ab => {
            let mut m = DenseMatrix::zeros(mq, nq);
            let mv = m.view(p.mr, p.nr);
            for t in &terms {
                m.fill(0.0);
                let prim = FusedPrimitive {
                    a: side(&t.a, &a_quads)?,
                    b: side(&t.b, &b_quads)?,
                    c: OperandSide::single(&mv),
                };
                run_fused(&prim, a.data(), b.data(), m.data_mut(), cfg, &mut ws, &mut kstats)?;
                leaf_multiplies += 1;
                for &(q, s) in &t.c {
                    accumulate_dense_to_view(
                        &m,
                        f64::from(s),
                        &c_quads[q],
                        c.data_mut(),
                        cfg.force_slow,
                        &mut kstats,
                    )?;
                }
            }
        }
        Variant::Naive => {
            let mut m = DenseMatrix::zeros(mq, nq);
            let mut sa = DenseMatrix::zeros(mq, kq);
            let mut sb = DenseMatrix::zeros(kq, nq);
            for t in &terms {
                unpack_into(&side(&t.a, &a_quads)?, a.data(), &mut sa);
                unpack_into(&side(&t.b, &b_quads)?, b.data(), &mut sb);
                m.fill(0.0);
                run_gemm_dense(&mut m, &sa, &sb, cfg, &mut ws, &mut kstats)?;
                leaf_multiplies += 1;
                for &(q, s) in &t.c {
                    accumulate_dense_to_view(
                        &m,
                        f64::from(s),
                        &c_quads[q],
                        c.data_mut(),
                        cfg.force_slow,
                        &mut kstats,
                    )?;
                }
            }
        }
    }

    let seconds = start.elapsed().as_secs_f64().max(1e-9);
    let (ni, nj, np) = (spec.n_i(), spec.n_j(), spec.n_p());
    let total_flops = executed_flops(&terms, mq, nq, kq);
    Ok(RunStats {
        seconds,
        total_flops,
        effective_gflops: effective_gflops(ni, nj, np, seconds)?,
        rel_error: None,
        fast_blocks: kstats.fast_blocks,
        slow_blocks: kstats.slow_blocks,
        fast_updates: kstats.fast_updates,
        slow_updates: kstats.slow_updates,
        leaf_multiplies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Fill;

    #[test]
    fn level_zero_is_identity_term() {
        let t = strassen_terms(0);
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].a, vec![(0, 1)]);
        assert_eq!(t[0].c, vec![(0, 1)]);
    }

    #[test]
    fn level_one_table_rows() {
        let t = strassen_terms(1);
        assert_eq!(t.len(), 7);
        assert_eq!(
            t[0],
            StrassenTerm {
                a: vec![(0, 1), (3, 1)],
                b: vec![(0, 1), (3, 1)],
                c: vec![(0, 1), (3, 1)],
            }
        );
        assert_eq!(
            t[1],
            StrassenTerm {
                a: vec![(2, 1), (3, 1)],
                b: vec![(0, 1)],
                c: vec![(2, 1), (3, -1)],
            }
        );
        assert_eq!(
            t[4],
            StrassenTerm {
                a: vec![(0, 1), (1, 1)],
                b: vec![(3, 1)],
                c: vec![(1, 1), (0, -1)],
            }
        );
    }

    #[test]
    fn level_two_shape() {
        let t = strassen_terms(2);
        assert_eq!(t.len(), 49);
        let longest = t.iter().flat_map(|t| [t.a.len(), t.b.len(), t.c.len()]).max();
        assert_eq!(longest, Some(4));
        assert!(t
            .iter()
            .flat_map(|t| t.a.iter().chain(&t.b).chain(&t.c))
            .all(|&(q, _)| q < 16));
        // First term is M0 applied to M0.
        assert_eq!(t[0].a, vec![(0, 1), (3, 1), (12, 1), (15, 1)]);
    }

    /// The composed table multiplies symbolic 4x4 block matrices correctly:
    /// for every (i, p) in A and (p', j) in B, the coefficient of the
    /// product A_ip B_p'j landing on C_ij is 1 if p == p' else 0.
    #[test]
    fn tables_reproduce_block_products() {
        for level in 1..=2 {
            let side = 1usize << level;
            let q = side * side;
            // Quadrant id -> (row, col) in the 2^L x 2^L block grid.
            let pos = |mut id: usize| {
                let (mut r, mut c) = (0, 0);
                for l in (0..level).rev() {
                    let d = id / 4usize.pow(l as u32);
                    id %= 4usize.pow(l as u32);
                    r += (d / 2) << l;
                    c += (d % 2) << l;
                }
                (r, c)
            };
            let mut coeff = vec![0i64; q * q * q];
            for t in strassen_terms(level) {
                for &(qa, sa) in &t.a {
                    for &(qb, sb) in &t.b {
                        for &(qc, sc) in &t.c {
                            coeff[(qa * q + qb) * q + qc] += i64::from(sa * sb * sc);
                        }
                    }
                }
            }
            for qa in 0..q {
                for qb in 0..q {
                    for qc in 0..q {
                        let ((ai, ap), (bp, bj), (ci, cj)) = (pos(qa), pos(qb), pos(qc));
                        let want = i64::from(ap == bp && ai == ci && bj == cj);
                        assert_eq!(coeff[(qa * q + qb) * q + qc], want, "level {level}");
                    }
                }
            }
        }
    }

    #[test]
    fn quadrants_of_16x16() {
        let v = BlockScatterView::dense(16, 16, 1, 16, 0, 8, 4);
        let q = quadrant_views(&v, 1).unwrap();
        assert_eq!(q.len(), 4);
        assert!(q.iter().all(|x| (x.m(), x.n()) == (8, 8)));
        assert_eq!(q[1].cscat()[0], 8 * 16);
        assert_eq!(q[2].rscat()[0], 8);
    }

    #[test]
    fn quadrants_of_7x7_are_padded() {
        let t = DenseTensor::new(&[7, 7], Fill::Zeros).unwrap();
        let v = BlockScatterView::from_axes(&t, &[0], &[1], 8, 4).unwrap();
        let q = quadrant_views(&v, 1).unwrap();
        assert!(q.iter().all(|x| (x.m(), x.n()) == (4, 4)));
        assert!(!q[0].rscat().contains(&crate::PAD));
        assert_eq!(q[1].cscat()[3], crate::PAD);
        assert_eq!(q[2].rscat()[3], crate::PAD);
        assert_eq!(q[3].rscat()[3], crate::PAD);
    }

    #[test]
    fn level_two_quadrants_compose() {
        let t = DenseTensor::with_axis_order(&[4, 4, 4, 4], &[2, 0, 3, 1], Fill::Zeros).unwrap();
        let v = BlockScatterView::from_axes(&t, &[0, 1], &[2, 3], 8, 4).unwrap();
        let two = quadrant_views(&v, 2).unwrap();
        assert_eq!(two.len(), 16);
        let one = quadrant_views(&v, 1).unwrap();
        for (q, outer) in one.iter().enumerate() {
            let inner = quadrant_views(outer, 1).unwrap();
            for (s, view) in inner.iter().enumerate() {
                assert_eq!(&two[q * 4 + s], view);
            }
        }
    }

    #[test]
    fn level_cap_and_conformance() {
        let spec: ContractionSpec = "ab ac cb & a:4;b:4;c:4;".parse().unwrap();
        let a = DenseTensor::new(&[4, 4], Fill::Zeros).unwrap();
        let mut c = a.clone();
        let err = contract(&spec, &a, &a, &mut c, &ContractOptions::new(3, Variant::Abc));
        assert_eq!(err.unwrap_err(), Error::LevelTooDeep { level: 3, max: 2 });
        let deep = ContractOptions {
            max_level: 3,
            ..ContractOptions::new(3, Variant::Abc)
        };
        assert_eq!(
            contract(&spec, &a, &a, &mut c, &deep).unwrap().leaf_multiplies,
            343
        );

        let wrong = DenseTensor::new(&[4, 5], Fill::Zeros).unwrap();
        assert!(matches!(
            contract(&spec, &wrong, &a, &mut c, &ContractOptions::new(1, Variant::Ab)),
            Err(Error::Bundle(_))
        ));
    }

    #[test]
    fn variant_parsing() {
        assert_eq!(Variant::from_impl(1), Some(Variant::Abc));
        assert_eq!(Variant::from_impl(3), Some(Variant::Naive));
        assert_eq!(Variant::from_impl(0), None);
        assert_eq!("AB".parse::<Variant>().unwrap(), Variant::Ab);
        assert_eq!(Variant::Naive.to_string(), "naive");
    }

    #[test]
    fn flop_count_level_zero_is_classical() {
        let t = strassen_terms(0);
        assert_eq!(executed_flops(&t, 8, 8, 8), 1024.0);
        // One level: 7 half-size products, 5 extra A sums, 5 extra B sums
        // and 5 extra C updates.
        let t = strassen_terms(1);
        assert_eq!(executed_flops(&t, 4, 4, 4), 7.0 * 128.0 + 15.0 * 16.0);
    }
}
