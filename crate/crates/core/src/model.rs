//! Couplings of the rotor-chain Hamiltonian
//!
//! ```text
//! H = Σ n_k² + ε Σ n_k n_{k+1} − E_J Σ cos(φ_k − φ_{k+1}) − E_g Σ n_k
//!     − E_{J1} Σ cos φ_k − E_{J2} Σ cos 2φ_k
//! ```
//!
//! All energies are in units of the charging energy `E_c`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::local::DEFAULT_N_MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Open,
    Periodic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Number of islands.
    pub len: usize,
    pub n_max: usize,
    /// Nearest-neighbour Josephson coupling `E_J / E_c`.
    pub ej: f64,
    /// Single Cooper-pair tunnelling to ground, `E_{J1} / E_c`.
    pub ej1: f64,
    /// Cooper-pair-pair tunnelling to ground, `E_{J2} / E_c`.
    pub ej2: f64,
    /// Gate charge coupling `E_g / E_c`.
    pub eg: f64,
    /// Nearest-neighbour charge interaction ε (< 1).
    pub eps: f64,
    pub bc: Boundary,
}

impl ModelParams {
    /// Pure charging chain (all couplings zero) with open boundaries.
    pub fn new(len: usize, n_max: usize) -> Self {
        Self {
            len,
            n_max,
            ej: 0.0,
            ej1: 0.0,
            ej2: 0.0,
            eg: 0.0,
            eps: 0.0,
            bc: Boundary::Open,
        }
    }

    pub fn with_default_truncation(len: usize) -> Self {
        Self::new(len, DEFAULT_N_MAX)
    }

    pub fn ej(mut self, v: f64) -> Self {
        self.ej = v;
        self
    }

    pub fn ej1(mut self, v: f64) -> Self {
        self.ej1 = v;
        self
    }

    pub fn ej2(mut self, v: f64) -> Self {
        self.ej2 = v;
        self
    }

    pub fn eg(mut self, v: f64) -> Self {
        self.eg = v;
        self
    }

    pub fn eps(mut self, v: f64) -> Self {
        self.eps = v;
        self
    }

    pub fn bc(mut self, bc: Boundary) -> Self {
        self.bc = bc;
        self
    }

    pub fn len(mut self, len: usize) -> Self {
        self.len = len;
        self
    }

    pub fn n_max(mut self, n_max: usize) -> Self {
        self.n_max = n_max;
        self
    }

    pub fn phys_dim(&self) -> usize {
        2 * self.n_max + 1
    }

    /// `[H, P] = 0` holds exactly when neither the gate charge nor the
    /// single-pair tunnelling term is present.
    pub fn conserves_parity(&self) -> bool {
        self.eg == 0.0 && self.ej1 == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.len < 2 {
            return Err(Error::InvalidParameter {
                field: "len",
                reason: format!("need at least 2 sites, got {}", self.len),
            });
        }
        if self.n_max == 0 {
            return Err(Error::InvalidTruncation(0));
        }
        for (field, v) in [
            ("ej", self.ej),
            ("ej1", self.ej1),
            ("ej2", self.ej2),
            ("eg", self.eg),
            ("eps", self.eps),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter {
                    field,
                    reason: format!("must be finite, got {v}"),
                });
            }
        }
        if self.eps >= 1.0 {
            return Err(Error::InvalidParameter {
                field: "eps",
                reason: format!("must be < 1, got {}", self.eps),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(ModelParams::new(4, 2).ej(1.0).validate().is_ok());
        assert!(ModelParams::new(1, 2).validate().is_err());
        assert!(ModelParams::new(4, 0).validate().is_err());
        assert!(ModelParams::new(4, 2).eps(1.0).validate().is_err());
        assert!(ModelParams::new(4, 2).ej(f64::NAN).validate().is_err());
        assert!(ModelParams::new(4, 2).ej2(0.3).conserves_parity());
        assert!(!ModelParams::new(4, 2).ej1(0.1).conserves_parity());
    }
}
