//! Closed-form sine-Gordon predictions used to check the lattice numerics.

use serde::Serialize;

use crate::error::{Error, Result};

/// Sine-Gordon coupling and the exponents derived from it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SgParameters {
    pub beta_sq: f64,
    /// `β² / (1 − β²)`.
    pub xi: f64,
    pub nu: f64,
}

impl SgParameters {
    pub fn new(beta_sq: f64) -> Result<Self> {
        check_beta_sq(beta_sq)?;
        Ok(Self {
            beta_sq,
            xi: beta_sq / (1.0 - beta_sq),
            nu: nu_exponent(beta_sq)?,
        })
    }

    pub fn from_luttinger(k: f64) -> Result<Self> {
        Self::new(beta_sq_from_k(k)?)
    }
}

fn check_beta_sq(beta_sq: f64) -> Result<()> {
    if beta_sq > 0.0 && beta_sq < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "beta_sq",
            reason: format!("{beta_sq} is not in (0, 1)"),
        })
    }
}

/// `β² = K / 2`.
pub fn beta_sq_from_k(k: f64) -> Result<f64> {
    if k > 0.0 && k < 2.0 {
        Ok(k / 2.0)
    } else {
        Err(Error::Domain {
            what: "Luttinger parameter",
            reason: format!("K = {k} is not in (0, 2)"),
        })
    }
}

/// `ν = (1 − β²/4) / (1 − β²)`, the exponent relating the two couplings in η.
pub fn nu_exponent(beta_sq: f64) -> Result<f64> {
    check_beta_sq(beta_sq)?;
    Ok((1.0 - beta_sq / 4.0) / (1.0 - beta_sq))
}

/// `η = E_J1 / E_J2^ν`.
pub fn eta_parameter(ej1: f64, ej2: f64, beta_sq: f64) -> Result<f64> {
    if ej2 <= 0.0 || !ej2.is_finite() {
        return Err(Error::Domain {
            what: "eta",
            reason: format!("ej2 = {ej2} must be positive"),
        });
    }
    Ok(ej1 / ej2.powf(nu_exponent(beta_sq)?))
}

/// Leading-order confinement `σ = 2 ⟨e^{iφ}⟩ E_J1` (units of E_c per site).
pub fn string_tension_lo(vertex: f64, ej1: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&vertex) {
        return Err(Error::Domain {
            what: "string tension",
            reason: format!("vertex {vertex} not in [0, 1]"),
        });
    }
    if ej1 < 0.0 || !ej1.is_finite() {
        return Err(Error::Domain {
            what: "string tension",
            reason: format!("ej1 = {ej1} must be >= 0"),
        });
    }
    Ok(2.0 * vertex * ej1)
}

/// Mass of the `n`-th breather in units of the soliton mass,
/// `2 sin(π n ξ / 2)` with `ξ = β²/(1−β²)`.
pub fn breather_mass_ratio(beta_sq: f64, n: usize) -> Result<f64> {
    let p = SgParameters::new(beta_sq)?;
    if n == 0 || n as f64 * p.xi > 1.0 + 1e-12 {
        return Err(Error::Domain {
            what: "breather index",
            reason: format!("n = {n} outside the tower 1 <= n <= 1/xi = {:.6}", 1.0 / p.xi),
        });
    }
    Ok(2.0 * (std::f64::consts::PI * n as f64 * p.xi / 2.0).sin())
}

/// Two particles of mass `M` bound by a linear potential `σ|x|`:
/// `m = 2M + σ^{2/3} M^{−1/3} z_k` with `z_k` the k-th zero of `Ai(−z)`.
pub fn meson_mass_ni2p(mass: f64, sigma: f64, k: usize) -> Result<f64> {
    if mass <= 0.0 || !mass.is_finite() {
        return Err(Error::Domain {
            what: "meson mass",
            reason: format!("M = {mass} must be positive"),
        });
    }
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::Domain {
            what: "meson mass",
            reason: format!("sigma = {sigma} must be >= 0"),
        });
    }
    Ok(2.0 * mass + sigma.powf(2.0 / 3.0) * mass.powf(-1.0 / 3.0) * airy_zero(k)?)
}

const AI0: f64 = 0.355_028_053_887_817_2;
const AIP0: f64 = -0.258_819_403_792_806_8;

/// `(Ai(x), Ai'(x))` for `x <= 0` by Taylor stepping of `y'' = x y` from the origin.
pub fn airy_ai(x: f64) -> (f64, f64) {
    let steps = (x.abs() / 0.25).ceil().max(1.0) as usize;
    let h = x / steps as f64;
    let (mut y, mut dy) = (AI0, AIP0);
    let mut x0 = 0.0;
    let mut c = [0.0f64; 48];
    for _ in 0..steps {
        c[0] = y;
        c[1] = dy;
        c[2] = 0.0;
        for n in 0..c.len() - 2 {
            let prev = if n == 0 { 0.0 } else { c[n - 1] };
            c[n + 2] = (x0 * c[n] + prev) / ((n + 2) * (n + 1)) as f64;
        }
        let (mut v, mut dv, mut p) = (0.0, 0.0, 1.0);
        for (n, cn) in c.iter().enumerate() {
            v += cn * p;
            if n + 1 < c.len() {
                dv += (n + 1) as f64 * c[n + 1] * p;
            }
            p *= h;
        }
        y = v;
        dy = dv;
        x0 += h;
    }
    (y, dy)
}

/// Magnitude of the k-th (1-based) zero of the Airy function.
pub fn airy_zero(k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Domain {
            what: "Airy zero",
            reason: "levels start at k = 1".into(),
        });
    }
    // asymptotic estimate, then a bracket wide enough to isolate the root
    let t = 3.0 * std::f64::consts::PI * (4.0 * k as f64 - 1.0) / 8.0;
    let guess = t.powf(2.0 / 3.0) * (1.0 + 5.0 / (48.0 * t * t));
    let half_gap = 0.5 * std::f64::consts::PI / guess.sqrt();
    let (mut lo, mut hi) = ((guess - half_gap).max(0.0), guess + half_gap);
    let f = |z: f64| airy_ai(-z).0;
    let (mut flo, fhi) = (f(lo), f(hi));
    if flo * fhi > 0.0 {
        return Err(Error::Backend(format!("failed to bracket Airy zero {k}")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
