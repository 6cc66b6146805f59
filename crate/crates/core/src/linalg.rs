//! Truncated SVD and Krylov eigensolvers used by the DMRG kernels.

use faer::{Mat, MatRef};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bond truncation policy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruncationSpec {
    /// Maximum number of kept singular values.
    pub chi_max: usize,
    /// Singular values whose relative weight `s²/Σs²` falls below this are dropped.
    pub cutoff: f64,
}

impl Default for TruncationSpec {
    fn default() -> Self {
        Self {
            chi_max: 128,
            cutoff: 1e-10,
        }
    }
}

impl TruncationSpec {
    pub fn new(chi_max: usize, cutoff: f64) -> Result<Self> {
        let spec = Self { chi_max, cutoff };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.chi_max == 0 {
            return Err(Error::InvalidParameter {
                field: "chi_max",
                reason: "must be at least 1".into(),
            });
        }
        if !(0.0..1.0).contains(&self.cutoff) {
            return Err(Error::InvalidParameter {
                field: "cutoff",
                reason: format!("must lie in [0, 1), got {}", self.cutoff),
            });
        }
        Ok(())
    }
}

/// `m ≈ u · diag(s) · vt` with `u` (`rows x k`) and `vt` (`k x cols`) row-major.
#[derive(Clone, Debug)]
pub struct TruncatedSvd {
    pub u: Vec<f64>,
    pub s: Vec<f64>,
    pub vt: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    /// Sum of the squared singular values that were dropped.
    pub discarded_weight: f64,
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.s.len()
    }
}

/// Truncated SVD of a row-major `rows x cols` matrix.
pub fn truncated_svd(data: &[f64], rows: usize, cols: usize, spec: &TruncationSpec) -> Result<TruncatedSvd> {
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyMatrix);
    }
    if data.len() != rows * cols {
        return Err(Error::Shape(format!(
            "{} entries for a {rows}x{cols} matrix",
            data.len()
        )));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::Shape("non-finite entries passed to SVD".into()));
    }
    let m = MatRef::from_row_major_slice(data, rows, cols);
    let svd = m
        .thin_svd()
        .or_else(|_| m.svd())
        .map_err(|e| Error::Backend(format!("SVD failed: {e:?}")))?;
    let s_all: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    let total: f64 = s_all.iter().map(|s| s * s).sum();
    let mut keep = 0;
    for (i, s) in s_all.iter().enumerate() {
        if i >= spec.chi_max {
            break;
        }
        let weight = if total > 0.0 { s * s / total } else { 0.0 };
        if i > 0 && (weight < spec.cutoff || *s == 0.0) {
            break;
        }
        keep += 1;
    }
    let discarded_weight: f64 = s_all[keep..].iter().map(|s| s * s).sum();
    let u_mat = svd.U();
    let v_mat = svd.V();
    let mut u = vec![0.0; rows * keep];
    for i in 0..rows {
        for k in 0..keep {
            u[i * keep + k] = u_mat[(i, k)];
        }
    }
    let mut vt = vec![0.0; keep * cols];
    for k in 0..keep {
        for j in 0..cols {
            vt[k * cols + j] = v_mat[(j, k)];
        }
    }
    Ok(TruncatedSvd {
        u,
        s: s_all[..keep].to_vec(),
        vt,
        rows,
        cols,
        discarded_weight,
    })
}

/// Thin QR of a row-major `rows x cols` matrix: `q` is `rows x k`, `r` is
/// `k x cols`, `k = min(rows, cols)`, both row-major.
pub(crate) fn thin_qr(data: &[f64], rows: usize, cols: usize) -> (Vec<f64>, Vec<f64>, usize) {
    let m = MatRef::from_row_major_slice(data, rows, cols);
    let qr = m.qr();
    let q = qr.compute_thin_Q();
    let r = qr.thin_R();
    let k = rows.min(cols);
    let mut qv = vec![0.0; rows * k];
    for i in 0..rows {
        for j in 0..k {
            qv[i * k + j] = q[(i, j)];
        }
    }
    let mut rv = vec![0.0; k * cols];
    for i in 0..k {
        for j in i..cols {
            rv[i * cols + j] = r[(i, j)];
        }
    }
    (qv, rv, k)
}

/// Shared knobs for the Krylov solvers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KrylovSettings {
    /// Residual tolerance (relative to the operator-norm estimate for
    /// Lanczos, relative to each eigenvalue for Arnoldi).
    pub tol: f64,
    /// Budget of operator applications.
    pub max_iter: usize,
    /// Krylov subspace size before a restart.
    pub krylov_dim: usize,
    /// Seed for the random start vector when no guess is supplied.
    pub seed: u64,
}

impl Default for KrylovSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 2000,
            krylov_dim: 40,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LowestEigenpair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
    pub norm_estimate: f64,
    pub converged: bool,
    pub matvecs: usize,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // eight independent partial sums so the loop vectorizes
    let mut acc = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    acc.iter().sum::<f64>() + tail
}

/// `y += alpha · x`.
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Removes the components of `w` along the first `k` rows of `basis`
/// (row-major, `dim` columns) with two classical Gram-Schmidt passes.
fn orthogonalize(basis: &[f64], k: usize, dim: usize, w: &mut [f64], coef: &mut [f64]) {
    let v = MatRef::from_row_major_slice(&basis[..k * dim], k, dim);
    for _ in 0..2 {
        let wm = MatRef::from_column_major_slice(w, dim, 1);
        let c = faer::MatMut::from_column_major_slice_mut(&mut coef[..k], k, 1);
        faer::linalg::matmul::matmul(c, faer::Accum::Replace, v, wm, 1.0, faer::Par::Seq);
        let c = MatRef::from_column_major_slice(&coef[..k], k, 1);
        let wm = faer::MatMut::from_column_major_slice_mut(w, dim, 1);
        faer::linalg::matmul::matmul(wm, faer::Accum::Add, v.transpose(), c, -1.0, faer::Par::Seq);
    }
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn random_unit(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Lowest eigenpair of a Hermitian map by restarted Lanczos with full
/// reorthogonalization. A supplied `guess` warm-starts the iteration.
pub fn lowest_eigenpair(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    dim: usize,
    guess: Option<&[f64]>,
    settings: &KrylovSettings,
) -> Result<LowestEigenpair> {
    if dim == 0 {
        return Err(Error::EmptyMatrix);
    }
    let mut start = match guess {
        Some(g) if g.len() == dim && norm(g) > 0.0 => {
            let n = norm(g);
            g.iter().map(|x| x / n).collect()
        }
        Some(g) if g.len() != dim => {
            return Err(Error::Shape(format!(
                "guess has length {} for dimension {dim}",
                g.len()
            )))
        }
        _ => random_unit(dim, settings.seed),
    };
    let m_max = settings.krylov_dim.max(2).min(dim);
    let mut matvecs = 0usize;
    let mut norm_est: f64 = 0.0;
    let mut w = vec![0.0; dim];
    let mut basis = vec![0.0; m_max * dim];
    let mut coef = vec![0.0; m_max];
    let mut best: Option<LowestEigenpair> = None;
    let mut restarts = 0u64;
    loop {
        basis[..dim].copy_from_slice(&start);
        let mut size = 1;
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        let mut ritz = (0.0, vec![1.0]);
        for j in 0..m_max {
            apply(&basis[j * dim..(j + 1) * dim], &mut w);
            matvecs += 1;
            let alpha = dot(&w, &basis[j * dim..(j + 1) * dim]);
            alphas.push(alpha);
            orthogonalize(&basis, size, dim, &mut w, &mut coef);
            let beta = norm(&w);
            let (theta, y, extremes) = tridiagonal_lowest(&alphas, &betas)?;
            norm_est = norm_est.max(extremes.0.abs()).max(extremes.1.abs());
            ritz = (theta, y);
            let resid_est = beta * ritz.1.last().unwrap().abs();
            let scale = norm_est.max(f64::MIN_POSITIVE);
            let invariant = beta <= 1e-14 * scale;
            if resid_est <= settings.tol * scale || invariant || j + 1 == m_max || matvecs >= settings.max_iter {
                break;
            }
            betas.push(beta);
            let next = &mut basis[size * dim..(size + 1) * dim];
            next.iter_mut().zip(&w).for_each(|(b, x)| *b = x / beta);
            size += 1;
        }
        let mut x = vec![0.0; dim];
        for (k, c) in ritz.1.iter().enumerate() {
            axpy(*c, &basis[k * dim..(k + 1) * dim], &mut x);
        }
        let nx = norm(&x);
        x.iter_mut().for_each(|v| *v /= nx);
        apply(&x, &mut w);
        matvecs += 1;
        let theta = dot(&x, &w);
        axpy(-theta, &x, &mut w);
        let residual = norm(&w);
        norm_est = norm_est.max(theta.abs());
        let converged = residual <= settings.tol * norm_est.max(f64::MIN_POSITIVE);
        let candidate = LowestEigenpair {
            value: theta,
            vector: x,
            residual,
            norm_estimate: norm_est,
            converged,
            matvecs,
        };
        if converged || matvecs >= settings.max_iter {
            return Ok(match best {
                Some(b) if b.value < candidate.value => LowestEigenpair { matvecs, ..b },
                _ => candidate,
            });
        }
        // a Krylov space that exhausted the whole space cannot improve further
        if m_max == dim && size == dim {
            return Ok(LowestEigenpair {
                converged: true,
                ..candidate
            });
        }
        if best.as_ref().map_or(true, |b| candidate.value < b.value) {
            start = candidate.vector.clone();
            best = Some(candidate);
        } else {
            // stagnation: perturb the restart vector deterministically
            restarts += 1;
            let kick = random_unit(dim, settings.seed.wrapping_add(restarts));
            let b = best.as_ref().unwrap();
            start = b.vector.iter().zip(&kick).map(|(a, k)| a + 1e-3 * k).collect();
            let n = norm(&start);
            start.iter_mut().for_each(|v| *v /= n);
        }
    }
}

/// Lowest eigenpair of the symmetric tridiagonal matrix plus its extreme
/// eigenvalues.
fn tridiagonal_lowest(alphas: &[f64], betas: &[f64]) -> Result<(f64, Vec<f64>, (f64, f64))> {
    let n = alphas.len();
    let t = Mat::from_fn(n, n, |i, j| {
        if i == j {
            alphas[i]
        } else if i == j + 1 {
            betas[j]
        } else if j == i + 1 {
            betas[i]
        } else {
            0.0
        }
    });
    let evd = t
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Backend(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let y: Vec<f64> = evd.U().col(0).iter().copied().collect();
    Ok((s[0], y, (s[0], s[n - 1])))
}

#[derive(Clone, Debug)]
pub struct DominantEigen {
    /// Eigenvalues ordered by decreasing magnitude.
    pub values: Vec<Complex64>,
    /// Matching unit eigenvectors.
    pub vectors: Vec<Vec<Complex64>>,
    /// `‖A x − λ x‖ / |λ|` for each pair.
    pub relative_residuals: Vec<f64>,
    pub converged: bool,
    pub matvecs: usize,
}

fn cdot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn cnorm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// The `k` largest-magnitude eigenvalues of a (generally non-Hermitian) map,
/// by Arnoldi iteration with thick restarts on the wanted Ritz subspace.
/// Small problems are solved densely.
pub fn dominant_eigenvalues(
    mut apply: impl FnMut(&[Complex64], &mut [Complex64]),
    dim: usize,
    k: usize,
    guess: Option<&[Complex64]>,
    settings: &KrylovSettings,
) -> Result<DominantEigen> {
    if dim == 0 {
        return Err(Error::EmptyMatrix);
    }
    if k == 0 || k > dim {
        return Err(Error::InvalidParameter {
            field: "k",
            reason: format!("need 1 <= k <= {dim}, got {k}"),
        });
    }
    if dim <= settings.krylov_dim.max(k + 2) {
        return dense_dominant(apply, dim, k);
    }
    let m = settings.krylov_dim.max(2 * k + 4).min(dim);
    let keep = (k + (m - k) / 2).min(m - 1).max(k);
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut v0: Vec<Complex64> = match guess {
        Some(g) if g.len() == dim && cnorm(g) > 0.0 => g.to_vec(),
        _ => (0..dim)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect(),
    };
    let n0 = cnorm(&v0);
    v0.iter_mut().for_each(|x| *x /= n0);
    let mut basis: Vec<Vec<Complex64>> = vec![v0];
    // h is (m+1) x m, column-major per Arnoldi column
    let mut h = Mat::<Complex64>::zeros(m + 1, m);
    let mut p = 0usize;
    let mut matvecs = 0usize;
    let mut w = vec![Complex64::new(0.0, 0.0); dim];
    loop {
        let mut size = m;
        for j in p..m {
            apply(&basis[j], &mut w);
            matvecs += 1;
            let wnorm0 = cnorm(&w);
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = cdot(v, &w);
                    h[(i, j)] += c;
                    w.iter_mut().zip(v).for_each(|(x, y)| *x -= c * y);
                }
            }
            let beta = cnorm(&w);
            h[(j + 1, j)] = Complex64::new(beta, 0.0);
            if beta <= 1e-13 * wnorm0.max(f64::MIN_POSITIVE) {
                size = j + 1;
                break;
            }
            basis.push(w.iter().map(|x| x / beta).collect());
        }
        let hm = h.subrows(0, size).subcols(0, size).to_owned();
        let evd = hm
            .eigen()
            .map_err(|e| Error::Backend(format!("Arnoldi projected eigenproblem: {e:?}")))?;
        let vals: Vec<Complex64> = evd.S().column_vector().iter().copied().collect();
        let mut order: Vec<usize> = (0..size).collect();
        order.sort_by(|&a, &b| vals[b].norm().total_cmp(&vals[a].norm()));
        let y = evd.U();
        let exhausted = size < m || size == dim;
        let residual_row: Vec<Complex64> = (0..size)
            .map(|c| {
                if exhausted {
                    Complex64::new(0.0, 0.0)
                } else {
                    h[(size, c)]
                }
            })
            .collect();
        let take = k.min(size);
        let mut rel = Vec::with_capacity(take);
        for &idx in order.iter().take(take) {
            let yv = y.col(idx);
            let ynorm = yv.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            let r: Complex64 = residual_row.iter().zip(yv.iter()).map(|(a, b)| a * b).sum();
            rel.push(r.norm() / ynorm / vals[idx].norm().max(f64::MIN_POSITIVE));
        }
        let converged = rel.iter().all(|&r| r <= settings.tol) || exhausted;
        if converged || matvecs >= settings.max_iter {
            let mut values = Vec::with_capacity(take);
            let mut vectors = Vec::with_capacity(take);
            for &idx in order.iter().take(take) {
                let yv = y.col(idx);
                let mut x = vec![Complex64::new(0.0, 0.0); dim];
                for (c, v) in yv.iter().zip(&basis) {
                    x.iter_mut().zip(v).for_each(|(xi, vi)| *xi += c * vi);
                }
                let n = cnorm(&x);
                x.iter_mut().for_each(|v| *v /= n);
                values.push(vals[idx]);
                vectors.push(x);
            }
            return Ok(DominantEigen {
                values,
                vectors,
                relative_residuals: rel,
                converged,
                matvecs,
            });
        }
        // thick restart on the span of the wanted Ritz vectors
        let wanted: Vec<usize> = order.iter().take(keep).copied().collect();
        let ysel = Mat::from_fn(size, wanted.len(), |i, c| y[(i, wanted[c])]);
        let q = ysel.qr().compute_thin_Q();
        let s_small = q.adjoint() * &hm * &q;
        let invariance = {
            let hq = &hm * &q;
            let proj = &q * &s_small;
            let diff = &hq - &proj;
            diff.norm_l2() / hm.norm_l2().max(f64::MIN_POSITIVE)
        };
        if invariance > 1e-8 {
            // ill-conditioned Ritz basis: fall back to an explicit restart
            let mut x = vec![Complex64::new(0.0, 0.0); dim];
            for &idx in order.iter().take(k) {
                for (c, v) in y.col(idx).iter().zip(&basis) {
                    x.iter_mut().zip(v).for_each(|(xi, vi)| *xi += c * vi);
                }
            }
            let n = cnorm(&x);
            x.iter_mut().for_each(|v| *v /= n);
            basis = vec![x];
            h = Mat::zeros(m + 1, m);
            p = 0;
            continue;
        }
        let mut new_basis: Vec<Vec<Complex64>> = Vec::with_capacity(m + 1);
        for c in 0..q.ncols() {
            let mut x = vec![Complex64::new(0.0, 0.0); dim];
            for (i, v) in basis.iter().enumerate().take(size) {
                let coef = q[(i, c)];
                x.iter_mut().zip(v).for_each(|(xi, vi)| *xi += coef * vi);
            }
            new_basis.push(x);
        }
        let residual_vec = basis[size].clone();
        new_basis.push(residual_vec);
        let mut h_new = Mat::<Complex64>::zeros(m + 1, m);
        let pk = q.ncols();
        for i in 0..pk {
            for j in 0..pk {
                h_new[(i, j)] = s_small[(i, j)];
            }
        }
        for j in 0..pk {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..size {
                acc += residual_row[i] * q[(i, j)];
            }
            h_new[(pk, j)] = acc;
        }
        basis = new_basis;
        h = h_new;
        p = pk;
    }
}

fn dense_dominant(
    mut apply: impl FnMut(&[Complex64], &mut [Complex64]),
    dim: usize,
    k: usize,
) -> Result<DominantEigen> {
    let mut a = Mat::<Complex64>::zeros(dim, dim);
    let mut e = vec![Complex64::new(0.0, 0.0); dim];
    let mut col = vec![Complex64::new(0.0, 0.0); dim];
    for j in 0..dim {
        e.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
        e[j] = Complex64::new(1.0, 0.0);
        apply(&e, &mut col);
        for i in 0..dim {
            a[(i, j)] = col[i];
        }
    }
    let evd = a
        .eigen()
        .map_err(|e| Error::Backend(format!("dense eigenproblem: {e:?}")))?;
    let vals: Vec<Complex64> = evd.S().column_vector().iter().copied().collect();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&x, &y| vals[y].norm().total_cmp(&vals[x].norm()));
    let mut values = Vec::new();
    let mut vectors = Vec::new();
    let mut rel = Vec::new();
    for &idx in order.iter().take(k) {
        let mut x: Vec<Complex64> = evd.U().col(idx).iter().copied().collect();
        let n = cnorm(&x);
        x.iter_mut().for_each(|v| *v /= n);
        apply(&x, &mut col);
        let r = col
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - vals[idx] * b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        rel.push(r / vals[idx].norm().max(f64::MIN_POSITIVE));
        values.push(vals[idx]);
        vectors.push(x);
    }
    Ok(DominantEigen {
        values,
        vectors,
        relative_residuals: rel,
        converged: true,
        matvecs: dim + k,
    })
}
