//! Finite matrix-product states in mixed canonical form.
//!
//! Site tensors are `A[l, s, r]` (left bond, physical, right bond), row-major.
//! Tensors left of the orthogonality center are left-isometric, tensors right
//! of it right-isometric.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::thin_qr;
use crate::local::{LocalBasis, LocalOperator};
use crate::mpo::ProductOperator;
use crate::tensor::{gemm, gemm_nt, gemm_tn, DenseTensor};

const MAGIC: &[u8; 8] = b"QROTMPS\0";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Mps {
    tensors: Vec<DenseTensor>,
    phys: usize,
    center: usize,
    discarded: Vec<f64>,
}

impl Mps {
    /// Wraps raw site tensors and brings them into canonical form centred on
    /// site 0. The state is normalized.
    pub fn from_tensors(tensors: Vec<DenseTensor>) -> Result<Self> {
        if tensors.is_empty() {
            return Err(Error::Shape("an MPS needs at least one site".into()));
        }
        let phys = tensors[0].shape().get(1).copied().unwrap_or(0);
        for (i, t) in tensors.iter().enumerate() {
            if t.rank() != 3 || t.shape()[1] != phys {
                return Err(Error::Shape(format!("site {i} has shape {:?}", t.shape())));
            }
            if i + 1 < tensors.len() && t.shape()[2] != tensors[i + 1].shape()[0] {
                return Err(Error::Shape(format!(
                    "bond {i} mismatch: {:?} vs {:?}",
                    t.shape(),
                    tensors[i + 1].shape()
                )));
            }
        }
        if tensors[0].shape()[0] != 1 || tensors.last().unwrap().shape()[2] != 1 {
            return Err(Error::Shape("boundary bonds must have dimension 1".into()));
        }
        let len = tensors.len();
        let mut mps = Self {
            tensors,
            phys,
            center: len - 1,
            discarded: vec![0.0; len - 1],
        };
        let n = mps.canonicalize(0);
        if n == 0.0 || !n.is_finite() {
            return Err(Error::Shape("state has zero or non-finite norm".into()));
        }
        Ok(mps)
    }

    /// Product of charge eigenstates `|n_0, n_1, …⟩`.
    pub fn product_state(basis: LocalBasis, charges: &[i64]) -> Result<Self> {
        let d = basis.dim();
        let mut tensors = Vec::with_capacity(charges.len());
        for &n in charges {
            let idx = basis.index(n).ok_or(Error::InvalidParameter {
                field: "charges",
                reason: format!("charge {n} outside |n| <= {}", basis.n_max()),
            })?;
            let mut t = DenseTensor::zeros(&[1, d, 1]);
            t.data_mut()[idx] = 1.0;
            tensors.push(t);
        }
        Self::from_tensors(tensors)
    }

    /// Product state with the same normalized site vector everywhere.
    pub fn uniform_product(len: usize, site: &[f64]) -> Result<Self> {
        let d = site.len();
        let t = DenseTensor::from_vec(&[1, d, 1], site.to_vec())?;
        Self::from_tensors(vec![t; len])
    }

    /// Random state with bond dimension up to `chi`, deterministic in `seed`.
    pub fn random(len: usize, phys: usize, chi: usize, seed: u64) -> Result<Self> {
        if len == 0 || phys == 0 || chi == 0 {
            return Err(Error::Shape("random MPS needs len, phys, chi >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = bounded_bonds(len, phys, chi);
        let tensors = (0..len)
            .map(|i| DenseTensor::from_fn(&[dims[i], phys, dims[i + 1]], |_| rng.random_range(-1.0..1.0)))
            .collect();
        Self::from_tensors(tensors)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn phys_dim(&self) -> usize {
        self.phys
    }

    pub fn center(&self) -> usize {
        self.center
    }

    pub fn tensor(&self, site: usize) -> &DenseTensor {
        &self.tensors[site]
    }

    pub fn tensors(&self) -> &[DenseTensor] {
        &self.tensors
    }

    /// Bond dimensions including the trivial outer bonds (`len + 1` entries).
    pub fn bond_dims(&self) -> Vec<usize> {
        let mut dims: Vec<usize> = self.tensors.iter().map(|t| t.shape()[0]).collect();
        dims.push(1);
        dims
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Discarded weight recorded at each internal bond by the last truncation.
    pub fn discarded_weights(&self) -> &[f64] {
        &self.discarded
    }

    pub(crate) fn set_discarded(&mut self, bond: usize, w: f64) {
        self.discarded[bond] = w;
    }

    pub(crate) fn set_tensor(&mut self, site: usize, t: DenseTensor) {
        self.tensors[site] = t;
    }

    pub(crate) fn set_center(&mut self, c: usize) {
        self.center = c;
    }

    pub fn norm(&self) -> f64 {
        self.tensors[self.center].norm()
    }

    /// Moves the orthogonality center by exact QR steps.
    pub fn move_center(&mut self, target: usize) {
        assert!(target < self.len());
        while self.center < target {
            self.shift_right(self.center);
            self.center += 1;
        }
        while self.center > target {
            self.shift_left(self.center);
            self.center -= 1;
        }
    }

    fn shift_right(&mut self, i: usize) {
        let sh = self.tensors[i].shape().to_vec();
        let (q, r, k) = thin_qr(self.tensors[i].data(), sh[0] * sh[1], sh[2]);
        self.tensors[i] = DenseTensor::from_raw(vec![sh[0], sh[1], k], q);
        let next = &self.tensors[i + 1];
        let ns = next.shape().to_vec();
        let mut out = vec![0.0; k * ns[1] * ns[2]];
        gemm(k, ns[0], ns[1] * ns[2], &r, next.data(), &mut out, false);
        self.tensors[i + 1] = DenseTensor::from_raw(vec![k, ns[1], ns[2]], out);
    }

    fn shift_left(&mut self, i: usize) {
        let sh = self.tensors[i].shape().to_vec();
        let (rows, cols) = (sh[0], sh[1] * sh[2]);
        // M = Rᵀ Qᵀ from the QR of Mᵀ
        let mt = transpose(self.tensors[i].data(), rows, cols);
        let (q, r, k) = thin_qr(&mt, cols, rows);
        self.tensors[i] = DenseTensor::from_raw(vec![k, sh[1], sh[2]], transpose(&q, cols, k));
        let prev = &self.tensors[i - 1];
        let ps = prev.shape().to_vec();
        let mut out = vec![0.0; ps[0] * ps[1] * k];
        // prev · Rᵀ with R of shape k x rows
        gemm_nt(ps[0] * ps[1], ps[2], k, prev.data(), &r, &mut out, false);
        self.tensors[i - 1] = DenseTensor::from_raw(vec![ps[0], ps[1], k], out);
    }

    /// Rebuilds the canonical form from scratch around `center`, normalizes the
    /// state and returns its norm before normalization.
    pub fn canonicalize(&mut self, center: usize) -> f64 {
        let len = self.len();
        for i in 0..center {
            self.shift_right(i);
        }
        for i in (center + 1..len).rev() {
            self.shift_left(i);
        }
        self.center = center;
        let n = self.tensors[center].norm();
        if n > 0.0 {
            self.tensors[center].data_mut().iter_mut().for_each(|x| *x /= n);
        }
        n
    }

    /// Largest deviation from the isometry conditions over all sites.
    pub fn isometry_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, t) in self.tensors.iter().enumerate() {
            let sh = t.shape();
            if i < self.center {
                let k = sh[2];
                let mut g = vec![0.0; k * k];
                gemm_tn(k, sh[0] * sh[1], k, t.data(), t.data(), &mut g);
                worst = worst.max(identity_deviation(&g, k));
            } else if i > self.center {
                let k = sh[0];
                let mut g = vec![0.0; k * k];
                gemm_nt(k, sh[1] * sh[2], k, t.data(), t.data(), &mut g, false);
                worst = worst.max(identity_deviation(&g, k));
            }
        }
        worst.max((self.norm() - 1.0).abs())
    }

    /// `⟨self|other⟩`.
    pub fn overlap(&self, other: &Mps) -> Result<f64> {
        self.check_compatible(other)?;
        let mut env = vec![1.0];
        for i in 0..self.len() {
            env = transfer(&env, &self.tensors[i], &other.tensors[i], None);
        }
        Ok(env[0])
    }

    /// `|⟨self|other⟩|`, both states being normalized.
    pub fn fidelity(&self, other: &Mps) -> Result<f64> {
        Ok(self.overlap(other)?.abs())
    }

    /// `⟨ψ|O|ψ⟩ / ⟨ψ|ψ⟩` for a product operator.
    pub fn expectation(&self, op: &ProductOperator) -> Result<f64> {
        if op.len() != self.len() || op.basis().dim() != self.phys {
            return Err(Error::Shape(format!(
                "operator on {} sites of dim {} applied to MPS on {} sites of dim {}",
                op.len(),
                op.basis().dim(),
                self.len(),
                self.phys
            )));
        }
        let Some(&(first, _)) = op.factors().first() else {
            return Ok(1.0);
        };
        let last = op.factors().last().unwrap().0;
        let mut env = self.left_env_identity(first);
        for i in first..=last {
            env = transfer(&env, &self.tensors[i], &self.tensors[i], op.factor(i));
        }
        Ok(self.close_right(&env, last) / self.norm().powi(2))
    }

    /// `O|ψ⟩`, renormalized; also returns `‖O|ψ⟩‖` before normalization.
    pub fn apply_product_operator(&self, op: &ProductOperator) -> Result<(Mps, f64)> {
        if op.len() != self.len() || op.basis().dim() != self.phys {
            return Err(Error::Shape("product operator does not match the state".into()));
        }
        let mut out = self.clone();
        for (site, o) in op.factors() {
            out.tensors[*site] = apply_local(&out.tensors[*site], o);
        }
        let n = out.canonicalize(self.center) * self.norm();
        if n == 0.0 {
            return Err(Error::Shape("operator annihilates the state".into()));
        }
        Ok((out, n))
    }

    /// Dense amplitude vector, site 0 most significant.
    pub fn to_dense_vector(&self) -> Result<Vec<f64>> {
        let total = (self.phys as f64).powi(self.len() as i32);
        if total > (1u64 << 24) as f64 {
            return Err(Error::DimensionGuard {
                dim: total as usize,
                guard: 1 << 24,
            });
        }
        let mut v = vec![1.0];
        let mut rows = 1usize;
        let mut bond = 1usize;
        for t in &self.tensors {
            let sh = t.shape();
            let mut next = vec![0.0; rows * sh[1] * sh[2]];
            gemm(rows, bond, sh[1] * sh[2], &v, t.data(), &mut next, false);
            rows *= sh[1];
            bond = sh[2];
            v = next;
        }
        Ok(v)
    }

    /// Environment `E[bra, ket]` of sites `0..site`, which is the identity when
    /// the center is at or right of `site`.
    pub(crate) fn left_env_identity(&self, site: usize) -> Vec<f64> {
        if self.center >= site {
            let k = self.tensors[site].shape()[0];
            let mut e = vec![0.0; k * k];
            (0..k).for_each(|i| e[i * k + i] = 1.0);
            e
        } else {
            let mut env = vec![1.0];
            for i in 0..site {
                env = transfer(&env, &self.tensors[i], &self.tensors[i], None);
            }
            env
        }
    }

    /// Closes a left environment on bond `site + 1` with the remainder of the chain.
    pub(crate) fn close_right(&self, env: &[f64], site: usize) -> f64 {
        if self.center <= site {
            let k = self.tensors[site].shape()[2];
            (0..k).map(|i| env[i * k + i]).sum()
        } else {
            let mut e = env.to_vec();
            for i in site + 1..self.len() {
                e = transfer(&e, &self.tensors[i], &self.tensors[i], None);
            }
            e[0]
        }
    }

    fn check_compatible(&self, other: &Mps) -> Result<()> {
        if self.len() != other.len() || self.phys != other.phys {
            return Err(Error::Shape(format!(
                "MPS mismatch: {} sites (dim {}) vs {} sites (dim {})",
                self.len(),
                self.phys,
                other.len(),
                other.phys
            )));
        }
        Ok(())
    }

    /// Writes a versioned little-endian checkpoint.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        for v in [self.len(), self.phys, self.center] {
            buf.extend_from_slice(&(v as u64).to_le_bytes());
        }
        for w in &self.discarded {
            buf.extend_from_slice(&w.to_le_bytes());
        }
        for t in &self.tensors {
            buf.extend_from_slice(&(t.shape()[0] as u64).to_le_bytes());
            buf.extend_from_slice(&(t.shape()[2] as u64).to_le_bytes());
            for x in t.data() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        let mut r = Reader { buf: &buf, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not an MPS checkpoint".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let len = r.u64()? as usize;
        let phys = r.u64()? as usize;
        let center = r.u64()? as usize;
        if len == 0 || center >= len || phys == 0 {
            return Err(Error::Checkpoint("corrupt header".into()));
        }
        let discarded = (0..len - 1).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let mut tensors = Vec::with_capacity(len);
        for _ in 0..len {
            let l = r.u64()? as usize;
            let rr = r.u64()? as usize;
            let n = l
                .checked_mul(phys)
                .and_then(|x| x.checked_mul(rr))
                .ok_or(Error::Checkpoint("corrupt shape".into()))?;
            if n * 8 > buf.len() {
                return Err(Error::Checkpoint("truncated tensor data".into()));
            }
            let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            tensors.push(DenseTensor::from_raw(vec![l, phys, rr], data));
        }
        if r.pos != buf.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Self {
            tensors,
            phys,
            center,
            discarded,
        })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("unexpected end of file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn bounded_bonds(len: usize, phys: usize, chi: usize) -> Vec<usize> {
    let mut dims = vec![1usize; len + 1];
    for (i, dim) in dims.iter_mut().enumerate().take(len).skip(1) {
        let from_left = (phys as f64).powi(i as i32);
        let from_right = (phys as f64).powi((len - i) as i32);
        *dim = (chi as f64).min(from_left).min(from_right) as usize;
    }
    dims
}

fn identity_deviation(g: &[f64], k: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..k {
        for j in 0..k {
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[i * k + j] - want).abs());
        }
    }
    worst
}

pub(crate) fn transpose(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = data[i * cols + j];
        }
    }
    out
}

/// `A'[l, t, r] = Σ_s O[t, s] A[l, s, r]`.
pub(crate) fn apply_local(a: &DenseTensor, o: &LocalOperator) -> DenseTensor {
    let sh = a.shape();
    let (l, d, r) = (sh[0], sh[1], sh[2]);
    let mut out = vec![0.0; l * d * r];
    let src = a.data();
    for x in 0..l {
        for t in 0..d {
            let dst = &mut out[(x * d + t) * r..(x * d + t + 1) * r];
            for s in 0..d {
                let c = o.get(t, s);
                if c != 0.0 {
                    let row = &src[(x * d + s) * r..(x * d + s + 1) * r];
                    dst.iter_mut().zip(row).for_each(|(y, v)| *y += c * v);
                }
            }
        }
    }
    DenseTensor::from_raw(vec![l, d, r], out)
}

/// One step of the overlap transfer map: `E'[x', y'] = Σ B[x,s,x'] E[x,y] (O A)[y,s,y']`.
pub(crate) fn transfer(env: &[f64], bra: &DenseTensor, ket: &DenseTensor, op: Option<&LocalOperator>) -> Vec<f64> {
    let applied;
    let ket = match op {
        Some(o) => {
            applied = apply_local(ket, o);
            &applied
        }
        None => ket,
    };
    let bs = bra.shape();
    let ks = ket.shape();
    let (xl, d, xr) = (bs[0], bs[1], bs[2]);
    let (yl, yr) = (ks[0], ks[2]);
    let mut t1 = vec![0.0; xl * d * yr];
    gemm(xl, yl, d * yr, env, ket.data(), &mut t1, false);
    let mut out = vec![0.0; xr * yr];
    gemm_tn(xr, xl * d, yr, bra.data(), &t1, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::local::{parity_factor, phase_raise_operator};
    use crate::mpo::build_global_parity;

    fn dense_dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn random_state_is_canonical_and_normalized() {
        let mut psi = Mps::random(6, 3, 8, 7).unwrap();
        assert!(psi.isometry_residual() < 1e-12);
        assert_eq!(psi.bond_dims(), vec![1, 3, 8, 8, 8, 3, 1]);
        for c in [5, 2, 0, 3] {
            psi.move_center(c);
            assert!(psi.isometry_residual() < 1e-12);
        }
        let v = psi.to_dense_vector().unwrap();
        assert!((dense_dot(&v, &v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn moving_center_preserves_state() {
        let mut psi = Mps::random(5, 3, 4, 1).unwrap();
        let before = psi.to_dense_vector().unwrap();
        psi.move_center(4);
        psi.move_center(1);
        let after = psi.to_dense_vector().unwrap();
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((psi.overlap(&psi).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overlap_matches_dense() {
        let a = Mps::random(5, 3, 5, 2).unwrap();
        let b = Mps::random(5, 3, 3, 3).unwrap();
        let dense = dense_dot(&a.to_dense_vector().unwrap(), &b.to_dense_vector().unwrap());
        assert!((a.overlap(&b).unwrap() - dense).abs() < 1e-13);
    }

    #[test]
    fn product_state_amplitude() {
        let basis = LocalBasis::new(1).unwrap();
        let psi = Mps::product_state(basis, &[1, -1, 0]).unwrap();
        let v = psi.to_dense_vector().unwrap();
        // site 0 most significant: index (2, 0, 1) in base 3
        assert_eq!(v[2 * 9 + 1], 1.0);
        assert!(Mps::product_state(basis, &[2]).is_err());
    }

    #[test]
    fn identity_and_parity_application() {
        let n_max = 1;
        let basis = LocalBasis::new(n_max).unwrap();
        let psi = Mps::random(6, 3, 6, 9).unwrap();
        let (same, n) = psi
            .apply_product_operator(&ProductOperator::identity(6, basis))
            .unwrap();
        assert!((n - 1.0).abs() < 1e-12);
        assert!((psi.fidelity(&same).unwrap() - 1.0).abs() < 1e-12);
        let p = build_global_parity(6, n_max).unwrap();
        let (once, _) = psi.apply_product_operator(&p).unwrap();
        let (twice, _) = once.apply_product_operator(&p).unwrap();
        assert!(psi.fidelity(&twice).unwrap() >= 1.0 - 1e-10);
        assert!(twice.isometry_residual() < 1e-12);
        let e = psi.expectation(&p).unwrap();
        assert!((-1.0..=1.0).contains(&e));
    }

    #[test]
    fn expectation_matches_dense() {
        let basis = LocalBasis::new(1).unwrap();
        let op = ProductOperator::new(
            4,
            basis,
            vec![(1, phase_raise_operator(1, 1).unwrap()), (2, parity_factor(1).unwrap())],
        )
        .unwrap();
        let mut psi = Mps::random(4, 3, 4, 5).unwrap();
        psi.move_center(3);
        let v = psi.to_dense_vector().unwrap();
        let dense = crate::mpo::Mpo::from_product(&op).to_sparse();
        let mut w = vec![0.0; v.len()];
        dense.matvec(&v, &mut w);
        let want = dense_dot(&v, &w);
        assert!((psi.expectation(&op).unwrap() - want).abs() < 1e-12);
        psi.move_center(0);
        assert!((psi.expectation(&op).unwrap() - want).abs() < 1e-12);
        // truncated raise operator is not unitary; the applied norm shows it
        let (_, n) = psi.apply_product_operator(&op).unwrap();
        assert!(n < 1.0 + 1e-12);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut psi = Mps::random(5, 3, 4, 12).unwrap();
        psi.set_discarded(2, 1.25e-9);
        psi.move_center(3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("psi.mps");
        psi.save(&path).unwrap();
        let back = Mps::load(&path).unwrap();
        assert_eq!(back.center(), 3);
        assert_eq!(back.discarded_weights(), psi.discarded_weights());
        for (a, b) in psi.tensors().iter().zip(back.tensors()) {
            assert_eq!(a, b);
        }
        std::fs::write(&path, b"garbage").unwrap();
        assert!(matches!(Mps::load(&path), Err(Error::Checkpoint(_))));
    }
}
