//! Truncated single-island Hilbert space and its operator algebra.
//!
//! Each island carries an integer excess Cooper-pair number `n` restricted to
//! `-n_max..=n_max`. Basis states are ordered by ascending charge, so row and
//! column index 0 correspond to `n = -n_max`. In this basis every operator the
//! chain needs (`n`, `e^{iaφ}`, `cos(aφ)`, `e^{iπn}`) has real entries.

use faer::Mat;

use crate::error::{Error, Result};

/// Default charge truncation used across the toolkit.
pub const DEFAULT_N_MAX: usize = 4;

/// Charge basis `{-n_max, ..., n_max}` of one island.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LocalBasis {
    n_max: usize,
}

impl LocalBasis {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max == 0 {
            return Err(Error::InvalidTruncation(n_max));
        }
        Ok(Self { n_max })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Always odd: `2 n_max + 1`.
    pub fn dim(&self) -> usize {
        2 * self.n_max + 1
    }

    /// Charge label of basis index `i`.
    pub fn charge(&self, i: usize) -> i64 {
        i as i64 - self.n_max as i64
    }

    /// Basis index of charge `n`, if it lies inside the truncation.
    pub fn index(&self, n: i64) -> Option<usize> {
        let i = n + self.n_max as i64;
        (0..self.dim() as i64).contains(&i).then_some(i as usize)
    }

    pub fn charges(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.dim()).map(|i| self.charge(i))
    }
}

/// A `dim x dim` operator on one island.
#[derive(Clone, Debug)]
pub struct LocalOperator {
    basis: LocalBasis,
    matrix: Mat<f64>,
    label: String,
    hermitian: bool,
}

impl LocalOperator {
    /// Wraps a matrix; the hermiticity flag is computed from the entries.
    pub fn from_matrix(basis: LocalBasis, matrix: Mat<f64>, label: impl Into<String>) -> Result<Self> {
        let d = basis.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::Shape(format!(
                "local operator must be {d}x{d}, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix
            .col_iter()
            .flat_map(|c| c.iter().copied())
            .any(|x| !x.is_finite())
        {
            return Err(Error::Shape("local operator has non-finite entries".into()));
        }
        let hermitian = is_symmetric(&matrix);
        Ok(Self {
            basis,
            matrix,
            label: label.into(),
            hermitian,
        })
    }

    pub fn identity(basis: LocalBasis) -> Self {
        Self {
            basis,
            matrix: Mat::identity(basis.dim(), basis.dim()),
            label: "1".into(),
            hermitian: true,
        }
    }

    pub fn basis(&self) -> LocalBasis {
        self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.matrix
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.matrix[(row, col)]
    }

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<f64> {
        let d = self.dim();
        (0..d * d).map(|k| self.matrix[(k / d, k % d)]).collect()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    fn check_basis(&self, other: &Self) -> Result<()> {
        if self.basis != other.basis {
            return Err(Error::BasisMismatch {
                left: self.basis.n_max,
                right: other.basis.n_max,
            });
        }
        Ok(())
    }

    /// Operator product `self · other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.check_basis(other)?;
        let m = &self.matrix * &other.matrix;
        Self::from_matrix(self.basis, m, format!("{}·{}", self.label, other.label))
    }

    pub fn adjoint(&self) -> Self {
        Self {
            basis: self.basis,
            matrix: self.matrix.transpose().to_owned(),
            label: format!("({})†", self.label),
            hermitian: self.hermitian,
        }
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self {
            basis: self.basis,
            matrix: &self.matrix * faer::Scale(alpha),
            label: format!("{alpha}·{}", self.label),
            hermitian: self.hermitian,
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_basis(other)?;
        Self::from_matrix(
            self.basis,
            &self.matrix + &other.matrix,
            format!("{}+{}", self.label, other.label),
        )
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_basis(other)?;
        Self::from_matrix(
            self.basis,
            &self.matrix - &other.matrix,
            format!("{}-{}", self.label, other.label),
        )
    }

    /// `[self, other]`
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.compose(other)?.sub(&other.compose(self)?)
    }

    /// `{self, other}`
    pub fn anticommutator(&self, other: &Self) -> Result<Self> {
        self.compose(other)?.add(&other.compose(self)?)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.matrix
            .col_iter()
            .flat_map(|c| c.iter().copied())
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.matrix[(i, i)]).sum()
    }

    /// Eigenvalues in ascending order (Hermitian operators only).
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        if !self.hermitian {
            return Err(Error::Shape(format!("{} is not Hermitian", self.label)));
        }
        self.matrix
            .self_adjoint_eigenvalues(faer::Side::Lower)
            .map_err(|e| Error::Backend(format!("{e:?}")))
    }
}

fn is_symmetric(m: &Mat<f64>) -> bool {
    let n = m.nrows();
    (0..n).all(|i| (0..i).all(|j| m[(i, j)] == m[(j, i)]))
}

fn check_shift(n_max: usize, a: usize) -> Result<LocalBasis> {
    let basis = LocalBasis::new(n_max)?;
    if a == 0 || a > 2 * n_max {
        return Err(Error::ShiftOutOfRange { shift: a, n_max });
    }
    Ok(basis)
}

/// `n = diag(-n_max, ..., n_max)`.
pub fn charge_operator(n_max: usize) -> Result<LocalOperator> {
    let basis = LocalBasis::new(n_max)?;
    let d = basis.dim();
    let m = Mat::from_fn(d, d, |i, j| if i == j { basis.charge(i) as f64 } else { 0.0 });
    LocalOperator::from_matrix(basis, m, "n")
}

/// `e^{iaφ}`: raises the charge by `a`, with hard truncation at the edge of
/// the basis. Not unitary on the truncated space.
pub fn phase_raise_operator(n_max: usize, a: usize) -> Result<LocalOperator> {
    let basis = check_shift(n_max, a)?;
    let d = basis.dim();
    let m = Mat::from_fn(d, d, |i, j| if i == j + a { 1.0 } else { 0.0 });
    LocalOperator::from_matrix(basis, m, format!("e^{{i{a}φ}}"))
}

/// `e^{-iaφ}`, the adjoint of [`phase_raise_operator`].
pub fn phase_lower_operator(n_max: usize, a: usize) -> Result<LocalOperator> {
    Ok(phase_raise_operator(n_max, a)?
        .adjoint()
        .with_label(format!("e^{{-i{a}φ}}")))
}

/// `cos(aφ) = (e^{iaφ} + e^{-iaφ}) / 2`.
pub fn cos_phase_operator(n_max: usize, a: usize) -> Result<LocalOperator> {
    let raise = phase_raise_operator(n_max, a)?;
    let sum = raise.add(&raise.adjoint())?;
    Ok(sum.scale(0.5).with_label(format!("cos({a}φ)")))
}

/// `e^{iπn} = diag((-1)^n)`.
pub fn parity_factor(n_max: usize) -> Result<LocalOperator> {
    let basis = LocalBasis::new(n_max)?;
    let d = basis.dim();
    let m = Mat::from_fn(d, d, |i, j| {
        if i == j {
            if basis.charge(i).rem_euclid(2) == 0 {
                1.0
            } else {
                -1.0
            }
        } else {
            0.0
        }
    });
    LocalOperator::from_matrix(basis, m, "e^{iπn}")
}
