//! Matrix-product operators for the rotor-chain Hamiltonian, plus
//! site-factorized string operators (soliton pairs, global parity).

use crate::error::{Error, Result};
use crate::local::{
    charge_operator, cos_phase_operator, parity_factor, phase_lower_operator, phase_raise_operator, LocalBasis,
    LocalOperator,
};
use crate::model::{Boundary, ModelParams};
use crate::sparse::SparseMatrix;

/// One MPO tensor `W[a, b, s_out, s_in]` (left bond, right bond, ket, bra),
/// stored row-major, together with the list of nonzero `(a, b)` blocks.
#[derive(Clone, Debug)]
pub struct MpoTensor {
    left: usize,
    right: usize,
    phys: usize,
    data: Vec<f64>,
    blocks: Vec<(usize, usize)>,
}

impl MpoTensor {
    pub fn zeros(left: usize, right: usize, phys: usize) -> Self {
        Self {
            left,
            right,
            phys,
            data: vec![0.0; left * right * phys * phys],
            blocks: Vec::new(),
        }
    }

    pub fn left_dim(&self) -> usize {
        self.left
    }

    pub fn right_dim(&self) -> usize {
        self.right
    }

    pub fn phys_dim(&self) -> usize {
        self.phys
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Nonzero `(a, b)` blocks in lexicographic order.
    pub fn blocks(&self) -> &[(usize, usize)] {
        &self.blocks
    }

    fn offset(&self, a: usize, b: usize) -> usize {
        (a * self.right + b) * self.phys * self.phys
    }

    /// Row-major `d x d` block `W[a, b, :, :]`.
    pub fn block(&self, a: usize, b: usize) -> &[f64] {
        let o = self.offset(a, b);
        &self.data[o..o + self.phys * self.phys]
    }

    pub fn get(&self, a: usize, b: usize, s_out: usize, s_in: usize) -> f64 {
        self.data[self.offset(a, b) + s_out * self.phys + s_in]
    }

    /// Adds `coef · op` into block `(a, b)`.
    pub fn add_block(&mut self, a: usize, b: usize, coef: f64, op: &LocalOperator) {
        assert_eq!(op.dim(), self.phys);
        if coef == 0.0 {
            return;
        }
        let o = self.offset(a, b);
        let d = self.phys;
        for i in 0..d {
            for j in 0..d {
                self.data[o + i * d + j] += coef * op.get(i, j);
            }
        }
        self.refresh_blocks();
    }

    /// Adds a row-major `d x d` block into `(a, b)`.
    pub(crate) fn add_raw_block(&mut self, a: usize, b: usize, blk: &[f64]) {
        let o = self.offset(a, b);
        let n = self.phys * self.phys;
        self.data[o..o + n].iter_mut().zip(blk).for_each(|(x, y)| *x += y);
        self.refresh_blocks();
    }

    fn refresh_blocks(&mut self) {
        let mut blocks = Vec::new();
        for a in 0..self.left {
            for b in 0..self.right {
                if self.block(a, b).iter().any(|&x| x != 0.0) {
                    blocks.push((a, b));
                }
            }
        }
        self.blocks = blocks;
    }
}

/// Matrix-product operator with explicit boundary vectors.
///
/// The operator is `l · W_0 · W_1 · … · W_{L-1} · r` where the products run
/// over the virtual (bond) indices.
#[derive(Clone, Debug)]
pub struct Mpo {
    tensors: Vec<MpoTensor>,
    left_boundary: Vec<f64>,
    right_boundary: Vec<f64>,
}

impl Mpo {
    pub fn new(tensors: Vec<MpoTensor>, left_boundary: Vec<f64>, right_boundary: Vec<f64>) -> Result<Self> {
        if tensors.is_empty() {
            return Err(Error::Shape("MPO needs at least one site".into()));
        }
        let phys = tensors[0].phys;
        if left_boundary.len() != tensors[0].left {
            return Err(Error::Shape("left boundary vector does not match first bond".into()));
        }
        if right_boundary.len() != tensors.last().unwrap().right {
            return Err(Error::Shape("right boundary vector does not match last bond".into()));
        }
        for (k, w) in tensors.windows(2).enumerate() {
            if w[0].right != w[1].left {
                return Err(Error::Shape(format!("bond mismatch between sites {k} and {}", k + 1)));
            }
        }
        if tensors.iter().any(|t| t.phys != phys) {
            return Err(Error::Shape("inhomogeneous physical dimension".into()));
        }
        Ok(Self {
            tensors,
            left_boundary,
            right_boundary,
        })
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn phys_dim(&self) -> usize {
        self.tensors[0].phys
    }

    pub fn tensor(&self, site: usize) -> &MpoTensor {
        &self.tensors[site]
    }

    pub fn tensors(&self) -> &[MpoTensor] {
        &self.tensors
    }

    pub fn left_boundary(&self) -> &[f64] {
        &self.left_boundary
    }

    pub fn right_boundary(&self) -> &[f64] {
        &self.right_boundary
    }

    /// Bond dimensions including the two boundary bonds (`len + 1` entries).
    pub fn bond_dims(&self) -> Vec<usize> {
        std::iter::once(self.tensors[0].left)
            .chain(self.tensors.iter().map(|t| t.right))
            .collect()
    }

    /// Site-factorized operator as a bond-dimension-1 MPO.
    pub fn from_product(op: &ProductOperator) -> Self {
        let basis = op.basis();
        let tensors = (0..op.len())
            .map(|site| {
                let mut t = MpoTensor::zeros(1, 1, basis.dim());
                match op.factor(site) {
                    Some(f) => t.add_block(0, 0, 1.0, f),
                    None => t.add_block(0, 0, 1.0, &LocalOperator::identity(basis)),
                }
                t
            })
            .collect();
        Self {
            tensors,
            left_boundary: vec![1.0],
            right_boundary: vec![1.0],
        }
    }

    /// `self + coef · other`, realized as a block-diagonal bond space.
    pub fn plus(&self, coef: f64, other: &Mpo) -> Result<Self> {
        if self.len() != other.len() || self.phys_dim() != other.phys_dim() {
            return Err(Error::Shape(
                "MPO sum needs matching length and physical dimension".into(),
            ));
        }
        let d = self.phys_dim();
        let tensors = self
            .tensors
            .iter()
            .zip(&other.tensors)
            .map(|(a, b)| {
                let mut t = MpoTensor::zeros(a.left + b.left, a.right + b.right, d);
                for (src, ao, bo) in [(a, 0, 0), (b, a.left, a.right)] {
                    for &(i, j) in &src.blocks {
                        let from = src.offset(i, j);
                        let to = t.offset(i + ao, j + bo);
                        t.data[to..to + d * d].copy_from_slice(&src.data[from..from + d * d]);
                    }
                }
                t.refresh_blocks();
                t
            })
            .collect();
        let left_boundary = self
            .left_boundary
            .iter()
            .copied()
            .chain(other.left_boundary.iter().map(|x| coef * x))
            .collect();
        let right_boundary = self
            .right_boundary
            .iter()
            .chain(&other.right_boundary)
            .copied()
            .collect();
        Ok(Self {
            tensors,
            left_boundary,
            right_boundary,
        })
    }

    /// Exact many-body matrix over the product charge basis. Site 0 is the
    /// most significant digit of the basis index.
    pub fn to_sparse(&self) -> SparseMatrix {
        let d = self.phys_dim();
        let w0 = self.left_boundary.len();
        // channel[a] holds the partial operator on the sites seen so far
        let mut channels: Vec<Vec<(usize, usize, f64)>> = (0..w0)
            .map(|a| {
                if self.left_boundary[a] != 0.0 {
                    vec![(0, 0, self.left_boundary[a])]
                } else {
                    vec![]
                }
            })
            .collect();
        for t in &self.tensors {
            let mut next: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); t.right];
            for &(a, b) in &t.blocks {
                let blk = t.block(a, b);
                for &(r, c, x) in &channels[a] {
                    for so in 0..d {
                        for si in 0..d {
                            let v = blk[so * d + si];
                            if v != 0.0 {
                                next[b].push((r * d + so, c * d + si, x * v));
                            }
                        }
                    }
                }
            }
            channels = next.into_iter().map(merge_triplets).collect();
        }
        let dim = d.pow(self.len() as u32);
        let mut all = Vec::new();
        for (b, ch) in channels.into_iter().enumerate() {
            let coef = self.right_boundary[b];
            if coef != 0.0 {
                all.extend(ch.into_iter().map(|(r, c, x)| (r, c, coef * x)));
            }
        }
        SparseMatrix::from_triplets(dim, all)
    }
}

fn merge_triplets(mut t: Vec<(usize, usize, f64)>) -> Vec<(usize, usize, f64)> {
    t.sort_unstable_by_key(|&(r, c, _)| (r, c));
    let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(t.len());
    for (r, c, v) in t {
        match out.last_mut() {
            Some(last) if last.0 == r && last.1 == c => last.2 += v,
            _ => out.push((r, c, v)),
        }
    }
    out.retain(|x| x.2 != 0.0);
    out
}

/// Single-site part of the Hamiltonian: `n² − E_g n − E_{J1} cos φ − E_{J2} cos 2φ`.
pub fn onsite_term(params: &ModelParams) -> Result<LocalOperator> {
    let n = charge_operator(params.n_max)?;
    let n2 = n.compose(&n)?;
    let h = n2
        .sub(&n.scale(params.eg))?
        .sub(&cos_phase_operator(params.n_max, 1)?.scale(params.ej1))?
        .sub(&cos_phase_operator(params.n_max, 2)?.scale(params.ej2))?;
    Ok(h.with_label("h_site"))
}

/// Bulk MPO tensor (bond dimension 5) shared by every site of the chain.
///
/// Channel layout: 4 = nothing placed yet, 0 = term completed,
/// 1 = `ε n` placed, 2 = `−(E_J/2) e^{iφ}` placed, 3 = `−(E_J/2) e^{−iφ}` placed.
pub fn bulk_tensor(params: &ModelParams) -> Result<MpoTensor> {
    let basis = LocalBasis::new(params.n_max)?;
    let id = LocalOperator::identity(basis);
    let n = charge_operator(params.n_max)?;
    let up = phase_raise_operator(params.n_max, 1)?;
    let down = phase_lower_operator(params.n_max, 1)?;
    let mut w = MpoTensor::zeros(5, 5, basis.dim());
    w.add_block(0, 0, 1.0, &id);
    w.add_block(1, 0, 1.0, &n);
    w.add_block(2, 0, 1.0, &down);
    w.add_block(3, 0, 1.0, &up);
    w.add_block(4, 0, 1.0, &onsite_term(params)?);
    w.add_block(4, 1, params.eps, &n);
    w.add_block(4, 2, -0.5 * params.ej, &up);
    w.add_block(4, 3, -0.5 * params.ej, &down);
    w.add_block(4, 4, 1.0, &id);
    Ok(w)
}

/// Boundary vectors `(l, r)` matching [`bulk_tensor`].
pub fn bulk_boundaries() -> (Vec<f64>, Vec<f64>) {
    (vec![0.0, 0.0, 0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0, 0.0, 0.0])
}

/// Open-chain Hamiltonian as a bond-dimension-5 MPO.
pub fn build_hamiltonian(params: &ModelParams) -> Result<Mpo> {
    params.validate()?;
    if params.bc == Boundary::Periodic {
        return Err(Error::PeriodicMpo);
    }
    let w = bulk_tensor(params)?;
    let (l, r) = bulk_boundaries();
    Mpo::new(vec![w; params.len], l, r)
}

/// Lorentz spin of a soliton-creating operator; `2s` is the phase winding
/// carried by its endpoint factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LorentzSpin {
    Zero,
    Half,
    One,
}

impl LorentzSpin {
    pub fn winding(self) -> usize {
        match self {
            LorentzSpin::Zero => 0,
            LorentzSpin::Half => 1,
            LorentzSpin::One => 2,
        }
    }
}

/// Ordered list of `(site, factor)` with identity on the remaining sites.
/// Sites are 0-based.
#[derive(Clone, Debug)]
pub struct ProductOperator {
    len: usize,
    basis: LocalBasis,
    factors: Vec<(usize, LocalOperator)>,
}

impl ProductOperator {
    pub fn new(len: usize, basis: LocalBasis, factors: Vec<(usize, LocalOperator)>) -> Result<Self> {
        let mut last: Option<usize> = None;
        for (site, op) in &factors {
            if *site >= len {
                return Err(Error::SiteOutOfRange { site: *site, len });
            }
            if last.is_some_and(|l| l >= *site) {
                return Err(Error::UnorderedSites(*site));
            }
            if op.basis() != basis {
                return Err(Error::BasisMismatch {
                    left: basis.n_max(),
                    right: op.basis().n_max(),
                });
            }
            last = Some(*site);
        }
        Ok(Self { len, basis, factors })
    }

    pub fn identity(len: usize, basis: LocalBasis) -> Self {
        Self {
            len,
            basis,
            factors: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn basis(&self) -> LocalBasis {
        self.basis
    }

    pub fn factors(&self) -> &[(usize, LocalOperator)] {
        &self.factors
    }

    pub fn factor(&self, site: usize) -> Option<&LocalOperator> {
        self.factors.iter().find(|(s, _)| *s == site).map(|(_, op)| op)
    }

    /// Site-wise product `self · other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.len != other.len {
            return Err(Error::Shape("product operators on different chain lengths".into()));
        }
        let id = LocalOperator::identity(self.basis);
        let mut factors = Vec::new();
        for site in 0..self.len {
            match (self.factor(site), other.factor(site)) {
                (None, None) => {}
                (a, b) => factors.push((site, a.unwrap_or(&id).compose(b.unwrap_or(&id))?)),
            }
        }
        Self::new(self.len, self.basis, factors)
    }

    pub fn adjoint(&self) -> Self {
        Self {
            len: self.len,
            basis: self.basis,
            factors: self.factors.iter().map(|(s, op)| (*s, op.adjoint())).collect(),
        }
    }

    /// True when every factor equals the identity within `tol`.
    pub fn is_identity(&self, tol: f64) -> bool {
        let id = LocalOperator::identity(self.basis);
        self.factors
            .iter()
            .all(|(_, op)| op.sub(&id).map(|d| d.max_abs() <= tol).unwrap_or(false))
    }
}

/// `O_s^q(j)† O_s^q(j+d)` reduced to its support: `e^{−2isφ_j} e^{−iqπn_j}` at
/// `j`, parity-string factors on `j < m < j+d`, and `e^{2isφ_{j+d}}` at
/// `j+d`. Sites are 0-based.
pub fn build_soliton_pair(
    len: usize,
    j: usize,
    d: usize,
    spin: LorentzSpin,
    charge: i8,
    n_max: usize,
) -> Result<ProductOperator> {
    if charge != 1 && charge != -1 {
        return Err(Error::InvalidParameter {
            field: "q",
            reason: format!("topological charge must be ±1, got {charge}"),
        });
    }
    let end = j + d;
    if end >= len {
        return Err(Error::SiteOutOfRange { site: end, len });
    }
    let basis = LocalBasis::new(n_max)?;
    let id = LocalOperator::identity(basis);
    // e^{−iqπn} = (−1)^n for q = ±1
    let string = parity_factor(n_max)?.with_label("e^{-iqπn}");
    let (lower, raise) = match spin.winding() {
        0 => (id.clone(), id.clone()),
        a => (phase_lower_operator(n_max, a)?, phase_raise_operator(n_max, a)?),
    };
    let mut factors = Vec::new();
    if d == 0 {
        let op = lower.compose(&raise)?;
        if spin != LorentzSpin::Zero {
            factors.push((j, op));
        }
    } else {
        factors.push((j, lower.compose(&string)?));
        for m in j + 1..end {
            factors.push((m, string.clone()));
        }
        if spin != LorentzSpin::Zero {
            factors.push((end, raise));
        }
    }
    ProductOperator::new(len, basis, factors)
}

/// `P = Π_k e^{iπ n_k}`.
pub fn build_global_parity(len: usize, n_max: usize) -> Result<ProductOperator> {
    let p = parity_factor(n_max)?;
    ProductOperator::new(len, p.basis(), (0..len).map(|k| (k, p.clone())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decoupled_two_site_spectrum() {
        let h = build_hamiltonian(&ModelParams::new(2, 1)).unwrap().to_sparse();
        let mut diag: Vec<f64> = (0..9).map(|i| h.get(i, i)).collect();
        diag.sort_by(f64::total_cmp);
        assert_eq!(diag, vec![0.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0]);
        assert_eq!(h.nnz(), 8);
    }

    #[test]
    fn hermitian_expansion() {
        let p = ModelParams::new(3, 2).ej(1.3).ej1(0.2).ej2(0.7).eg(0.1).eps(0.3);
        let h = build_hamiltonian(&p).unwrap().to_sparse();
        assert!(h.max_abs_diff(&h.transpose()) <= 1e-12);
    }

    #[test]
    fn bond_dimension_is_five() {
        let p = ModelParams::new(6, 2).ej(1.0);
        let mpo = build_hamiltonian(&p).unwrap();
        assert_eq!(mpo.bond_dims(), vec![5; 7]);
    }

    #[test]
    fn periodic_rejected() {
        let p = ModelParams::new(4, 1).bc(Boundary::Periodic);
        assert!(matches!(build_hamiltonian(&p), Err(Error::PeriodicMpo)));
    }

    #[test]
    fn soliton_pair_support() {
        let o = build_soliton_pair(10, 2, 4, LorentzSpin::Zero, 1, 2).unwrap();
        let sites: Vec<usize> = o.factors().iter().map(|(s, _)| *s).collect();
        assert_eq!(sites, vec![2, 3, 4, 5]);
        let o = build_soliton_pair(10, 2, 4, LorentzSpin::Half, -1, 2).unwrap();
        let sites: Vec<usize> = o.factors().iter().map(|(s, _)| *s).collect();
        assert_eq!(sites, vec![2, 3, 4, 5, 6]);
        assert!(build_soliton_pair(10, 0, 0, LorentzSpin::Zero, 1, 2)
            .unwrap()
            .is_identity(0.0));
        assert!(build_soliton_pair(10, 5, 5, LorentzSpin::Zero, 1, 2).is_err());
        assert!(build_soliton_pair(10, 1, 1, LorentzSpin::Zero, 0, 2).is_err());
    }

    #[test]
    fn global_parity_is_involution() {
        let p = build_global_parity(5, 3).unwrap();
        assert!(p.compose(&p).unwrap().is_identity(0.0));
    }

    #[test]
    fn product_operator_rejects_bad_sites() {
        let b = LocalBasis::new(1).unwrap();
        let id = LocalOperator::identity(b);
        assert!(ProductOperator::new(3, b, vec![(1, id.clone()), (1, id.clone())]).is_err());
        assert!(ProductOperator::new(3, b, vec![(3, id)]).is_err());
    }

    #[test]
    fn plus_adds_operators() {
        let p = ModelParams::new(3, 1).ej(0.8).ej2(0.4);
        let h = build_hamiltonian(&p).unwrap();
        let par = build_global_parity(3, 1).unwrap();
        let sum = h.plus(-0.25, &Mpo::from_product(&par)).unwrap().to_sparse();
        let hs = h.to_sparse();
        let ps = Mpo::from_product(&par).to_sparse();
        for r in 0..27 {
            for c in 0..27 {
                let want = hs.get(r, c) - 0.25 * ps.get(r, c);
                assert!((sum.get(r, c) - want).abs() < 1e-14);
            }
        }
    }
}
