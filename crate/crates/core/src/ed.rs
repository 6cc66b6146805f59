//! Exact diagonalization of small chains, built directly from the charge basis
//! without going through the MPO.

use faer::Mat;

use crate::error::{Error, Result};
use crate::linalg::{lowest_eigenpair, KrylovSettings};
use crate::model::{Boundary, ModelParams};
use crate::mpo::ProductOperator;
use crate::sparse::SparseMatrix;

/// Largest Hilbert-space dimension accepted.
pub const DIMENSION_GUARD: usize = 1 << 20;

/// Above this dimension `lowest_k` switches from dense diagonalization to
/// deflated Lanczos.
pub const DENSE_LIMIT: usize = 4096;

/// Many-body Hamiltonian on the full product charge basis, site 0 most
/// significant.
#[derive(Clone, Debug)]
pub struct ExactHamiltonian {
    pub params: ModelParams,
    matrix: SparseMatrix,
}

impl ExactHamiltonian {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn to_dense(&self) -> Result<Mat<f64>> {
        if self.dim() > 16384 {
            return Err(Error::DimensionGuard {
                dim: self.dim(),
                guard: 16384,
            });
        }
        Ok(self.matrix.to_dense())
    }

    /// `max |H − Hᵀ|` entrywise.
    pub fn hermiticity_residual(&self) -> f64 {
        self.matrix.max_abs_diff(&self.matrix.transpose())
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matrix.matvec(x, y);
    }

    pub fn expectation(&self, v: &[f64]) -> f64 {
        let mut w = vec![0.0; v.len()];
        self.apply(v, &mut w);
        v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / v.iter().map(|a| a * a).sum::<f64>()
    }
}

fn checked_dim(len: usize, d: usize) -> Result<usize> {
    let mut dim: usize = 1;
    for _ in 0..len {
        dim = dim
            .checked_mul(d)
            .filter(|&x| x <= DIMENSION_GUARD)
            .ok_or(Error::DimensionGuard {
                dim: (d as f64).powi(len as i32).min(usize::MAX as f64) as usize,
                guard: DIMENSION_GUARD,
            })?;
    }
    Ok(dim)
}

/// Sum of all terms of the Hamiltonian lifted to the full chain. Periodic
/// boundaries add the bond between the last and first site.
pub fn dense_hamiltonian(params: &ModelParams) -> Result<ExactHamiltonian> {
    params.validate()?;
    let len = params.len;
    let n_max = params.n_max as i64;
    let d = params.phys_dim();
    let dim = checked_dim(len, d)?;
    let mut strides = vec![1usize; len];
    for k in (0..len - 1).rev() {
        strides[k] = strides[k + 1] * d;
    }
    let mut bonds: Vec<(usize, usize)> = (0..len - 1).map(|k| (k, k + 1)).collect();
    if params.bc == Boundary::Periodic {
        bonds.push((len - 1, 0));
    }
    let mut triplets = Vec::with_capacity(dim * (1 + 2 * bonds.len() + 4 * len));
    let mut n = vec![0i64; len];
    for idx in 0..dim {
        let mut rem = idx;
        for k in 0..len {
            n[k] = (rem / strides[k]) as i64 - n_max;
            rem %= strides[k];
        }
        let mut diag = 0.0;
        for &nk in &n {
            diag += (nk * nk) as f64 - params.eg * nk as f64;
        }
        for &(a, b) in &bonds {
            diag += params.eps * (n[a] * n[b]) as f64;
        }
        triplets.push((idx, idx, diag));
        // single-site tunnelling: cos(aφ) = (e^{iaφ} + e^{-iaφ}) / 2 shifts n by ±a
        for (a, coef) in [(1i64, params.ej1), (2, params.ej2)] {
            if coef == 0.0 {
                continue;
            }
            for k in 0..len {
                for shift in [a, -a] {
                    let m = n[k] + shift;
                    if m.abs() <= n_max {
                        let j = (idx as i64 + shift * strides[k] as i64) as usize;
                        triplets.push((j, idx, -0.5 * coef));
                    }
                }
            }
        }
        // cos(φ_a − φ_b) = (e^{iφ_a}e^{-iφ_b} + h.c.) / 2 moves one pair between a and b
        if params.ej != 0.0 {
            for &(a, b) in &bonds {
                for shift in [1i64, -1] {
                    let (ma, mb) = (n[a] + shift, n[b] - shift);
                    if ma.abs() <= n_max && mb.abs() <= n_max {
                        let j = (idx as i64 + shift * strides[a] as i64 - shift * strides[b] as i64) as usize;
                        triplets.push((j, idx, -0.5 * params.ej));
                    }
                }
            }
        }
    }
    Ok(ExactHamiltonian {
        params: params.clone(),
        matrix: SparseMatrix::from_triplets(dim, triplets),
    })
}

/// Global parity `Π (−1)^{n_k}` as a diagonal matrix.
pub fn dense_parity(len: usize, n_max: usize) -> Result<SparseMatrix> {
    let d = 2 * n_max + 1;
    let dim = checked_dim(len, d)?;
    let mut triplets = Vec::with_capacity(dim);
    for idx in 0..dim {
        let mut rem = idx;
        let mut total = 0i64;
        for _ in 0..len {
            total += (rem % d) as i64 - n_max as i64;
            rem /= d;
        }
        triplets.push((idx, idx, if total.rem_euclid(2) == 0 { 1.0 } else { -1.0 }));
    }
    Ok(SparseMatrix::from_triplets(dim, triplets))
}

#[derive(Clone, Debug)]
pub struct Spectrum {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    /// `‖H v − λ v‖` per pair.
    pub residuals: Vec<f64>,
}

/// The `k` lowest eigenpairs.
pub fn lowest_k(params: &ModelParams, k: usize) -> Result<Spectrum> {
    let h = dense_hamiltonian(params)?;
    lowest_k_of(&h, k)
}

pub fn lowest_k_of(h: &ExactHamiltonian, k: usize) -> Result<Spectrum> {
    let dim = h.dim();
    if k == 0 || k > dim {
        return Err(Error::InvalidParameter {
            field: "k",
            reason: format!("need 1 <= k <= {dim}"),
        });
    }
    let (values, vectors) = if dim <= DENSE_LIMIT {
        let evd = h
            .matrix
            .to_dense()
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(|e| Error::Backend(format!("{e:?}")))?;
        let vals: Vec<f64> = evd.S().column_vector().iter().take(k).copied().collect();
        let vecs = (0..k).map(|c| evd.U().col(c).iter().copied().collect()).collect();
        (vals, vecs)
    } else {
        deflated_lanczos(h, k)?
    };
    let residuals = vectors
        .iter()
        .zip(&values)
        .map(|(v, &lam): (&Vec<f64>, &f64)| {
            let mut w = vec![0.0; dim];
            h.apply(v, &mut w);
            w.iter().zip(v).map(|(a, b)| (a - lam * b).powi(2)).sum::<f64>().sqrt()
        })
        .collect();
    Ok(Spectrum {
        values,
        vectors,
        residuals,
    })
}

/// Lanczos on `H + shift · Σ|v⟩⟨v|` for successive eigenvectors.
fn deflated_lanczos(h: &ExactHamiltonian, k: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let dim = h.dim();
    // Gershgorin bound on ‖H‖
    let bound = (0..dim)
        .map(|r| h.matrix.row(r).map(|(_, v)| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let shift = 2.0 * bound + 1.0;
    let settings = KrylovSettings {
        tol: 1e-13,
        max_iter: 20000,
        krylov_dim: 80,
        seed: 7,
    };
    let mut found: Vec<Vec<f64>> = Vec::new();
    let mut values = Vec::new();
    for _ in 0..k {
        let sol = lowest_eigenpair(
            |x, y| {
                h.apply(x, y);
                for v in &found {
                    let c = shift * crate::linalg::dot(v, x);
                    y.iter_mut().zip(v).for_each(|(yi, vi)| *yi += c * vi);
                }
            },
            dim,
            None,
            &KrylovSettings {
                seed: settings.seed + found.len() as u64,
                ..settings
            },
        )?;
        let mut v = sol.vector;
        for u in &found {
            let c = crate::linalg::dot(u, &v);
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= c * b);
        }
        let n = crate::linalg::norm(&v);
        v.iter_mut().for_each(|a| *a /= n);
        values.push(h.expectation(&v));
        found.push(v);
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    Ok((
        order.iter().map(|&i| values[i]).collect(),
        order.iter().map(|&i| found[i].clone()).collect(),
    ))
}

/// Applies a product operator to a full state vector.
pub fn apply_product(state: &[f64], op: &ProductOperator) -> Result<Vec<f64>> {
    let d = op.basis().dim();
    let len = op.len();
    let dim = checked_dim(len, d)?;
    if state.len() != dim {
        return Err(Error::Shape(format!(
            "state has length {} but the operator acts on dimension {dim}",
            state.len()
        )));
    }
    let mut v = state.to_vec();
    for (site, o) in op.factors() {
        let right = d.pow((len - 1 - site) as u32);
        let left = dim / (right * d);
        let mut out = vec![0.0; dim];
        for l in 0..left {
            for s in 0..d {
                let dst = (l * d + s) * right;
                for t in 0..d {
                    let c = o.get(s, t);
                    if c != 0.0 {
                        let src = (l * d + t) * right;
                        for r in 0..right {
                            out[dst + r] += c * v[src + r];
                        }
                    }
                }
            }
        }
        v = out;
    }
    Ok(v)
}

/// `⟨v|O|v⟩ / ⟨v|v⟩`.
pub fn ed_expectation(state: &[f64], op: &ProductOperator) -> Result<f64> {
    let w = apply_product(state, op)?;
    let norm2: f64 = state.iter().map(|x| x * x).sum();
    Ok(state.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / norm2)
}

/// Rotates a near-degenerate pair of eigenvectors into parity eigenstates and
/// returns their parity eigenvalues.
pub fn parity_resolve(v0: &[f64], v1: &[f64], parity: &SparseMatrix) -> ([f64; 2], [Vec<f64>; 2]) {
    let mut p0 = vec![0.0; v0.len()];
    let mut p1 = vec![0.0; v1.len()];
    parity.matvec(v0, &mut p0);
    parity.matvec(v1, &mut p1);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let m = Mat::from_fn(2, 2, |i, j| {
        let (a, pb) = match (i, j) {
            (0, 0) => (v0, &p0),
            (0, 1) => (v0, &p1),
            (1, 0) => (v1, &p0),
            _ => (v1, &p1),
        };
        dot(a, pb)
    });
    let evd = m
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("2x2 symmetric eigenproblem");
    let vals = [evd.S()[0], evd.S()[1]];
    let u = evd.U();
    let mk = |c: usize| {
        v0.iter()
            .zip(v1)
            .map(|(a, b)| u[(0, c)] * a + u[(1, c)] * b)
            .collect::<Vec<f64>>()
    };
    (vals, [mk(0), mk(1)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::local::{phase_lower_operator, phase_raise_operator, LocalBasis};
    use crate::mpo::{build_global_parity, build_hamiltonian};

    #[test]
    fn pure_charging_spectrum() {
        let s = lowest_k(&ModelParams::new(2, 1), 9).unwrap();
        let want = [0.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0];
        for (a, b) in s.values.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hermitian_and_matches_mpo() {
        let params = ModelParams::new(3, 2).ej(0.9).ej1(0.3).ej2(0.2).eg(0.15).eps(0.25);
        let h = dense_hamiltonian(&params).unwrap();
        assert!(h.hermiticity_residual() <= 1e-12);
        let mpo = build_hamiltonian(&params).unwrap().to_sparse();
        assert!(h.matrix().max_abs_diff(&mpo) <= 1e-12);
    }

    #[test]
    fn parity_commutes_only_without_odd_terms() {
        let p = dense_parity(4, 1).unwrap();
        let sym = dense_hamiltonian(&ModelParams::new(4, 1).ej(1.0).ej2(0.3).eps(0.1)).unwrap();
        assert!(sym.matrix().commutator_norm(&p) <= 1e-12);
        let broken = dense_hamiltonian(&ModelParams::new(4, 1).ej(1.0).ej1(0.1)).unwrap();
        assert!(broken.matrix().commutator_norm(&p) > 1e-3);
    }

    #[test]
    fn lanczos_path_matches_dense_path() {
        let params = ModelParams::new(4, 3).ej(1.1).ej2(0.2).eps(0.1);
        let h = dense_hamiltonian(&params).unwrap();
        assert!(h.dim() == 2401);
        let dense = lowest_k_of(&h, 3).unwrap();
        let lanczos = deflated_lanczos(&h, 3).unwrap();
        for (a, b) in dense.values.iter().zip(&lanczos.0) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn expectation_of_simple_operators() {
        let params = ModelParams::new(4, 1).ej(0.8).ej2(0.3);
        let s = lowest_k(&params, 1).unwrap();
        let v = &s.vectors[0];
        let basis = LocalBasis::new(1).unwrap();
        assert!((ed_expectation(v, &ProductOperator::identity(4, basis)).unwrap() - 1.0).abs() < 1e-14);
        let p = build_global_parity(4, 1).unwrap();
        assert!((ed_expectation(v, &p).unwrap().abs() - 1.0).abs() < 1e-12);
        let corr = ProductOperator::new(
            4,
            basis,
            vec![
                (0, phase_raise_operator(1, 1).unwrap()),
                (2, phase_lower_operator(1, 1).unwrap()),
            ],
        )
        .unwrap();
        let want = {
            let m = crate::mpo::Mpo::from_product(&corr).to_sparse();
            let mut w = vec![0.0; v.len()];
            m.matvec(v, &mut w);
            v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
        };
        assert!((ed_expectation(v, &corr).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn guard_rejects_large_chains() {
        assert!(matches!(
            dense_hamiltonian(&ModelParams::new(7, 4)),
            Err(Error::DimensionGuard { .. })
        ));
    }
}
