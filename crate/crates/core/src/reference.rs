//! Ground truth: a nested-loop contraction, the relative error metric and
//! the effective GFLOPS rate.

use crate::contraction::ContractionSpec;
use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, MultiIndexIter};

/// Timing, rates and kernel counters of one contraction.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunStats {
    pub seconds: f64,
    /// Flops executed, counting Strassen's extra additions.
    pub total_flops: f64,
    /// `2 * N_I * N_J * N_P / seconds / 1e9`, whatever algorithm ran.
    pub effective_gflops: f64,
    pub rel_error: Option<f64>,
    pub fast_blocks: u64,
    pub slow_blocks: u64,
    pub fast_updates: u64,
    pub slow_updates: u64,
    pub leaf_multiplies: u64,
}

impl RunStats {
    /// Executed flops per second, in GFLOPS.
    pub fn total_gflops(&self) -> f64 {
        self.total_flops / self.seconds / 1e9
    }
}

/// Classical-flop rate: `2 * ni * nj * np / seconds / 1e9`.
pub fn effective_gflops(ni: usize, nj: usize, np: usize, seconds: f64) -> Result<f64> {
    if seconds.is_nan() || seconds <= 0.0 {
        return Err(Error::NonPositiveTime(seconds));
    }
    Ok(2.0 * ni as f64 * nj as f64 * np as f64 / seconds / 1e9)
}

/// Offset contribution of every point of `bundle` within a tensor whose
/// axes carry `labels`. Labels of the bundle that the tensor lacks add 0.
fn bundle_offsets(spec: &ContractionSpec, t: &DenseTensor, labels: &[char], bundle: &[char]) -> Vec<usize> {
    let extents: Vec<usize> = bundle.iter().map(|l| spec.extent(*l).unwrap()).collect();
    let strides: Vec<usize> = bundle
        .iter()
        .map(|l| labels.iter().position(|x| x == l).map_or(0, |ax| t.strides()[ax]))
        .collect();
    MultiIndexIter::new(&extents)
        .map(|idx| idx.iter().zip(&strides).map(|(i, s)| i * s).sum())
        .collect()
}

/// `C += contraction(A, B)` by visiting every `(I, J, P)` multi-index, with
/// the P bundle innermost.
///
/// Element offsets come straight from each tensor's strides, so the oracle
/// shares nothing with the scatter-view machinery it checks.
pub fn contract_reference(
    spec: &ContractionSpec,
    a: &DenseTensor,
    b: &DenseTensor,
    c: &mut DenseTensor,
) -> Result<()> {
    for (t, want) in [
        (a, spec.extents_of_a()),
        (b, spec.extents_of_b()),
        (&*c, spec.extents_of_c()),
    ] {
        if t.extents() != want.as_slice() {
            return Err(Error::ExtentMismatch(t.extents().to_vec(), want));
        }
    }
    let (bi, bj, bp) = (spec.bundle_i(), spec.bundle_j(), spec.bundle_p());
    let a_i = bundle_offsets(spec, a, spec.labels_a(), bi);
    let a_p = bundle_offsets(spec, a, spec.labels_a(), bp);
    let b_p = bundle_offsets(spec, b, spec.labels_b(), bp);
    let b_j = bundle_offsets(spec, b, spec.labels_b(), bj);
    let c_i = bundle_offsets(spec, c, spec.labels_c(), bi);
    let c_j = bundle_offsets(spec, c, spec.labels_c(), bj);
    let (ad, bd) = (a.data(), b.data());
    let (a0, b0, c0) = (a.base_offset(), b.base_offset(), c.base_offset());

    for (&ci, &ai) in c_i.iter().zip(&a_i) {
        for (&cj, &bj) in c_j.iter().zip(&b_j) {
            let mut acc = 0.0;
            for (&ap, &bp) in a_p.iter().zip(&b_p) {
                acc += ad[a0 + ai + ap] * bd[b0 + bj + bp];
            }
            c.data_mut()[c0 + ci + cj] += acc;
        }
    }
    Ok(())
}

/// `‖t - t_ref‖_F / ‖t_ref‖_F`, compared by logical index. Zero when both
/// are zero tensors.
pub fn relative_error(t: &DenseTensor, t_ref: &DenseTensor) -> Result<f64> {
    if t.extents() != t_ref.extents() {
        return Err(Error::ExtentMismatch(
            t.extents().to_vec(),
            t_ref.extents().to_vec(),
        ));
    }
    let mut diff = 0.0;
    let mut norm = 0.0;
    for idx in t.multi_indices() {
        let x = t.element_at(&idx)?;
        let y = t_ref.element_at(&idx)?;
        diff += (x - y) * (x - y);
        norm += y * y;
    }
    if norm == 0.0 {
        return Ok(if diff == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok((diff / norm).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Fill;

    #[test]
    fn zero_a_leaves_c() {
        let spec: ContractionSpec = "abc dca db & a:4;b:8;c:2;d:8;".parse().unwrap();
        let a = DenseTensor::new(&spec.extents_of_a(), Fill::Zeros).unwrap();
        let b = DenseTensor::new(&spec.extents_of_b(), Fill::Random(1)).unwrap();
        let mut c = DenseTensor::new(&spec.extents_of_c(), Fill::Random(2)).unwrap();
        let before = c.clone();
        contract_reference(&spec, &a, &b, &mut c).unwrap();
        assert_eq!(c, before);
    }

    #[test]
    fn identity_b_adds_a() {
        let spec: ContractionSpec = "ab ac cb & a:2;b:2;c:2;".parse().unwrap();
        let a = DenseTensor::from_parts(vec![2, 2], vec![1, 2], vec![1.0, 3.0, 2.0, 4.0], 0).unwrap();
        let b = DenseTensor::from_parts(vec![2, 2], vec![1, 2], vec![1.0, 0.0, 0.0, 1.0], 0).unwrap();
        let mut c = DenseTensor::new(&[2, 2], Fill::Zeros).unwrap();
        contract_reference(&spec, &a, &b, &mut c).unwrap();
        assert_eq!(c, a);
    }

    #[test]
    fn sequence_matches_reordered_loops() {
        let spec: ContractionSpec = "abc dca db & a:4;b:8;c:2;d:8;".parse().unwrap();
        let a = DenseTensor::new(&[8, 2, 4], Fill::Sequence).unwrap();
        let b = DenseTensor::new(&[8, 8], Fill::Sequence).unwrap();
        let mut c = DenseTensor::new(&[4, 8, 2], Fill::Zeros).unwrap();
        contract_reference(&spec, &a, &b, &mut c).unwrap();

        // d outermost, explicit labels.
        let mut want = DenseTensor::new(&[4, 8, 2], Fill::Zeros).unwrap();
        for d in 0..8 {
            for cc in 0..2 {
                for bb in 0..8 {
                    for aa in 0..4 {
                        let v = want.element_at(&[aa, bb, cc]).unwrap()
                            + a.element_at(&[d, cc, aa]).unwrap() * b.element_at(&[d, bb]).unwrap();
                        want.set_element(&[aa, bb, cc], v).unwrap();
                    }
                }
            }
        }
        assert_eq!(c, want);
    }

    #[test]
    fn conformance_failure() {
        let spec: ContractionSpec = "ab ac cb & a:2;b:2;c:3;".parse().unwrap();
        let a = DenseTensor::new(&[2, 2], Fill::Zeros).unwrap();
        let mut c = a.clone();
        assert!(matches!(
            contract_reference(&spec, &a, &a, &mut c),
            Err(Error::ExtentMismatch(..))
        ));
    }

    #[test]
    fn relative_error_cases() {
        let t = DenseTensor::new(&[3, 4], Fill::Random(3)).unwrap();
        assert_eq!(relative_error(&t, &t).unwrap(), 0.0);
        let mut twice = t.clone();
        twice.data_mut().iter_mut().for_each(|x| *x *= 2.0);
        assert!((relative_error(&twice, &t).unwrap() - 1.0).abs() < 1e-15);
        let z = DenseTensor::new(&[3, 4], Fill::Zeros).unwrap();
        assert_eq!(relative_error(&z, &z).unwrap(), 0.0);
        assert!(relative_error(&t, &DenseTensor::new(&[4, 3], Fill::Zeros).unwrap()).is_err());
    }

    #[test]
    fn relative_error_matches_sorted_two_pass_norm() {
        let t = DenseTensor::new(&[5, 6], Fill::Random(4)).unwrap();
        let r = DenseTensor::with_axis_order(&[5, 6], &[1, 0], Fill::Random(5)).unwrap();
        let mut d2 = Vec::new();
        let mut n2 = Vec::new();
        for i in 0..5 {
            for j in 0..6 {
                let (x, y) = (t.element_at(&[i, j]).unwrap(), r.element_at(&[i, j]).unwrap());
                d2.push((x - y) * (x - y));
                n2.push(y * y);
            }
        }
        d2.sort_by(f64::total_cmp);
        n2.sort_by(f64::total_cmp);
        let want = (d2.iter().sum::<f64>() / n2.iter().sum::<f64>()).sqrt();
        assert!((relative_error(&t, &r).unwrap() - want).abs() <= 1e-14 * want);
    }

    #[test]
    fn relative_error_is_scale_aware() {
        let t = DenseTensor::new(&[7], Fill::Random(6)).unwrap();
        for c in [0.5, 1.5, -1.0, 3.0] {
            let mut s = t.clone();
            s.data_mut().iter_mut().for_each(|x| *x *= c);
            let e = relative_error(&s, &t).unwrap();
            assert!((e - (c - 1.0f64).abs()).abs() < 1e-14, "{c}: {e}");
        }
    }

    #[test]
    fn gflops_arithmetic() {
        assert!((effective_gflops(1000, 1000, 1000, 0.1).unwrap() - 20.0).abs() < 1e-12);
        assert!((effective_gflops(8, 8, 8, 1e-6).unwrap() - 1.024).abs() < 1e-12);
        let slow = effective_gflops(64, 64, 64, 10.0).unwrap();
        let fast = effective_gflops(64, 64, 64, 1.0).unwrap();
        assert!(slow < fast);
        assert!(effective_gflops(1, 1, 1, 0.0).is_err());
        assert!(effective_gflops(1, 1, 1, -1.0).is_err());
    }
}
