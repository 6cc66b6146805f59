//! Dense row-major tensors and pairwise contraction.
//!
//! Layout: the last index runs fastest. Contractions are lowered onto a
//! single matrix product after permuting the contracted indices together.

use faer::{Accum, MatMut, MatRef};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} entries, got {}",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Shape("tensor entries must be finite".into()));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Unchecked constructor for internal kernels.
    pub(crate) fn from_raw(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = Self::zeros(shape);
        let mut idx = vec![0usize; shape.len()];
        for x in t.data.iter_mut() {
            *x = f(&idx);
            for ax in (0..shape.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    fn strides(shape: &[usize]) -> Vec<usize> {
        let mut s = vec![1usize; shape.len()];
        for ax in (0..shape.len().saturating_sub(1)).rev() {
            s[ax] = s[ax + 1] * shape[ax + 1];
        }
        s
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        let s = Self::strides(&self.shape);
        self.data[idx.iter().zip(&s).map(|(i, s)| i * s).sum::<usize>()]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::Shape(format!("cannot reshape {:?} into {shape:?}", self.shape)));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    #[must_use]
    pub fn scale(&self, alpha: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| alpha * x).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `result[i_0, …] = self[i_{axes[0]}, …]` i.e. output axis `k` is input axis `axes[k]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Self> {
        let r = self.rank();
        let mut seen = vec![false; r];
        if axes.len() != r || axes.iter().any(|&a| a >= r || std::mem::replace(&mut seen[a], true)) {
            return Err(Error::Shape(format!("{axes:?} is not a permutation of {r} axes")));
        }
        let new_shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let data = permute_data(&self.data, &self.shape, axes);
        Ok(Self { shape: new_shape, data })
    }
}

/// Row-major permutation kernel shared by [`DenseTensor::permute`] and the
/// DMRG environment code.
pub(crate) fn permute_data(data: &[f64], shape: &[usize], axes: &[usize]) -> Vec<f64> {
    let r = shape.len();
    if axes.iter().enumerate().all(|(k, &a)| k == a) {
        return data.to_vec();
    }
    let in_strides = DenseTensor::strides(shape);
    let new_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let mut out = vec![0.0; data.len()];
    if out.is_empty() {
        return out;
    }
    let inner = new_shape[r - 1];
    let inner_stride = src_strides[r - 1];
    let mut idx = vec![0usize; r - 1];
    let mut offset = 0usize;
    for chunk in out.chunks_mut(inner) {
        for (k, x) in chunk.iter_mut().enumerate() {
            *x = data[offset + k * inner_stride];
        }
        for ax in (0..r - 1).rev() {
            idx[ax] += 1;
            offset += src_strides[ax];
            if idx[ax] < new_shape[ax] {
                break;
            }
            offset -= src_strides[ax] * new_shape[ax];
            idx[ax] = 0;
        }
    }
    out
}

/// `c = a · b` (or `c += a · b` when `accumulate`) for row-major operands.
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], accumulate: bool) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c.iter_mut().for_each(|x| *x = 0.0);
        }
        return;
    }
    let a = MatRef::from_row_major_slice(a, m, k);
    let b = MatRef::from_row_major_slice(b, k, n);
    let c = MatMut::from_row_major_slice_mut(c, m, n);
    let accum = if accumulate { Accum::Add } else { Accum::Replace };
    faer::linalg::matmul::matmul(c, accum, a, b, 1.0, faer::Par::Seq);
}

/// `c = aᵀ · b` for row-major `a` of shape `k x m`.
pub(crate) fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    if m == 0 || n == 0 {
        return;
    }
    let a = MatRef::from_row_major_slice(a, k, m).transpose();
    let b = MatRef::from_row_major_slice(b, k, n);
    let c = MatMut::from_row_major_slice_mut(c, m, n);
    faer::linalg::matmul::matmul(c, Accum::Replace, a, b, 1.0, faer::Par::Seq);
}

/// `c = a · bᵀ` (or `c += …`) for row-major `b` of shape `n x k`.
pub(crate) fn gemm_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], accumulate: bool) {
    if m == 0 || n == 0 {
        return;
    }
    let a = MatRef::from_row_major_slice(a, m, k);
    let b = MatRef::from_row_major_slice(b, n, k).transpose();
    let c = MatMut::from_row_major_slice_mut(c, m, n);
    let accum = if accumulate { Accum::Add } else { Accum::Replace };
    faer::linalg::matmul::matmul(c, accum, a, b, 1.0, faer::Par::Seq);
}

/// Contracts `a` and `b` over the index pairs `(axis of a, axis of b)`.
/// Result axes: the uncontracted axes of `a` in order, then those of `b`.
pub fn contract(a: &DenseTensor, b: &DenseTensor, pairs: &[(usize, usize)]) -> Result<DenseTensor> {
    let mut used_a = vec![false; a.rank()];
    let mut used_b = vec![false; b.rank()];
    for &(ia, ib) in pairs {
        if ia >= a.rank() || ib >= b.rank() {
            return Err(Error::Shape(format!("contraction axis ({ia}, {ib}) out of range")));
        }
        if std::mem::replace(&mut used_a[ia], true) || std::mem::replace(&mut used_b[ib], true) {
            return Err(Error::Shape(format!("axis repeated in contraction pairs {pairs:?}")));
        }
        if a.shape[ia] != b.shape[ib] {
            return Err(Error::Shape(format!(
                "extent mismatch: axis {ia} has {} but axis {ib} has {}",
                a.shape[ia], b.shape[ib]
            )));
        }
    }
    let free_a: Vec<usize> = (0..a.rank()).filter(|&i| !used_a[i]).collect();
    let free_b: Vec<usize> = (0..b.rank()).filter(|&i| !used_b[i]).collect();
    let perm_a: Vec<usize> = free_a.iter().copied().chain(pairs.iter().map(|p| p.0)).collect();
    let perm_b: Vec<usize> = pairs.iter().map(|p| p.1).chain(free_b.iter().copied()).collect();
    let m: usize = free_a.iter().map(|&i| a.shape[i]).product();
    let n: usize = free_b.iter().map(|&i| b.shape[i]).product();
    let k: usize = pairs.iter().map(|p| a.shape[p.0]).product();
    let pa = permute_data(&a.data, &a.shape, &perm_a);
    let pb = permute_data(&b.data, &b.shape, &perm_b);
    let mut out = vec![0.0; m * n];
    gemm(m, k, n, &pa, &pb, &mut out, false);
    let shape: Vec<usize> = free_a
        .iter()
        .map(|&i| a.shape[i])
        .chain(free_b.iter().map(|&i| b.shape[i]))
        .collect();
    Ok(DenseTensor { shape, data: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> DenseTensor {
        DenseTensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn matrix_product_special_case() {
        let a = DenseTensor::from_vec(&[2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = DenseTensor::from_vec(&[3, 2], vec![7., 8., 9., 10., 11., 12.]).unwrap();
        let c = contract(&a, &b, &[(1, 0)]).unwrap();
        assert_eq!(c.shape(), &[2, 2]);
        assert_eq!(c.data(), &[58., 64., 139., 154.]);
    }

    #[test]
    fn identity_contraction_permutes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random(&[3, 4, 5], &mut rng);
        let id = DenseTensor::from_fn(&[4, 4], |i| if i[0] == i[1] { 1.0 } else { 0.0 });
        let c = contract(&t, &id, &[(1, 0)]).unwrap();
        assert_eq!(c, t.permute(&[0, 2, 1]).unwrap());
    }

    #[test]
    fn four_index_contraction_matches_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random(&[3, 4, 2, 5], &mut rng);
        let b = random(&[5, 2, 3, 6], &mut rng);
        // contract a.3-b.0 and a.2-b.1 -> result [3,4,3,6]
        let c = contract(&a, &b, &[(3, 0), (2, 1)]).unwrap();
        assert_eq!(c.shape(), &[3, 4, 3, 6]);
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..4 {
                for k in 0..3 {
                    for l in 0..6 {
                        let mut s = 0.0;
                        for x in 0..5 {
                            for y in 0..2 {
                                s += a.get(&[i, j, y, x]) * b.get(&[x, y, k, l]);
                            }
                        }
                        worst = worst.max((s - c.get(&[i, j, k, l])).abs());
                    }
                }
            }
        }
        assert!(worst <= 1e-13, "{worst}");
    }

    #[test]
    fn contraction_errors() {
        let a = DenseTensor::zeros(&[2, 3]);
        let b = DenseTensor::zeros(&[2, 3]);
        assert!(contract(&a, &b, &[(1, 0)]).is_err());
        assert!(contract(&a, &b, &[(0, 0), (0, 1)]).is_err());
        assert!(DenseTensor::from_vec(&[2, 2], vec![0.0; 3]).is_err());
        assert!(DenseTensor::from_vec(&[1], vec![f64::NAN]).is_err());
    }

    #[test]
    fn permute_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random(&[2, 3, 4, 5], &mut rng);
        let p = t.permute(&[2, 0, 3, 1]).unwrap();
        assert_eq!(p.get(&[3, 1, 4, 2]), t.get(&[1, 2, 3, 4]));
        let back = p.permute(&[1, 3, 0, 2]).unwrap();
        assert_eq!(back, t);
        assert!(t.permute(&[0, 0, 1, 2]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn contraction_is_bilinear(seed in 0u64..1000, alpha in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random(&[3, 2, 4], &mut rng);
            let b = random(&[4, 3, 2], &mut rng);
            let lhs = contract(&a.scale(alpha), &b, &[(2, 0), (0, 1)]).unwrap();
            let rhs = contract(&a, &b, &[(2, 0), (0, 1)]).unwrap().scale(alpha);
            for (x, y) in lhs.data().iter().zip(rhs.data()) {
                proptest::prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
    }
}
