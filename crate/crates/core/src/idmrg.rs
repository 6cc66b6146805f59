//! Infinite DMRG with a two-site unit cell, and transfer-matrix correlation
//! lengths of the resulting uniform state.

use num_complex::Complex64;
use serde::Serialize;

use crate::dmrg::{update_left, update_right, Env, TwoSiteOp};
use crate::error::{Error, Result};
use crate::linalg::{dominant_eigenvalues, lowest_eigenpair, truncated_svd, KrylovSettings, TruncationSpec};
use crate::local::{parity_factor, LocalOperator};
use crate::model::ModelParams;
use crate::mpo::{bulk_boundaries, bulk_tensor};
use crate::mps::transfer;
use crate::tensor::{gemm, DenseTensor};

#[derive(Clone, Debug)]
pub struct IdmrgSettings {
    pub trunc: TruncationSpec,
    pub max_steps: usize,
    pub min_steps: usize,
    /// Tolerance on the change of the energy per site between growth steps.
    pub e_tol: f64,
    /// Tolerance on the change of the central Schmidt spectrum.
    pub schmidt_tol: f64,
    /// Field `−h Σ cos φ` applied during the first `pin_steps` steps when the
    /// model itself has none, to select one of the degenerate vacua.
    pub pin_field: f64,
    pub pin_steps: usize,
    pub krylov: KrylovSettings,
}

impl Default for IdmrgSettings {
    fn default() -> Self {
        Self {
            trunc: TruncationSpec {
                chi_max: 64,
                cutoff: 1e-10,
            },
            max_steps: 600,
            min_steps: 40,
            e_tol: 1e-10,
            schmidt_tol: 1e-6,
            pin_field: 1e-3,
            pin_steps: 20,
            krylov: KrylovSettings {
                tol: 1e-7,
                max_iter: 200,
                krylov_dim: 24,
                seed: 11,
            },
        }
    }
}

impl IdmrgSettings {
    pub fn chi_max(mut self, chi: usize) -> Self {
        self.trunc.chi_max = chi;
        self
    }
}

/// Translation-invariant state `… X1 X2 X1 X2 …` in left-canonical gauge.
#[derive(Clone, Debug, Serialize)]
pub struct UniformMps {
    #[serde(skip)]
    cell: [DenseTensor; 2],
    /// Schmidt values on the bond inside the cell.
    pub schmidt: Vec<f64>,
    /// Schmidt values on the bond between cells.
    pub schmidt_outer: Vec<f64>,
    pub energy_density: f64,
    pub energy_history: Vec<f64>,
    pub converged: bool,
    pub steps: usize,
    pub truncation_error: f64,
    pub params: ModelParams,
}

impl UniformMps {
    pub fn cell(&self) -> &[DenseTensor; 2] {
        &self.cell
    }

    pub fn phys_dim(&self) -> usize {
        self.cell[0].shape()[1]
    }

    /// Bond dimension between cells.
    pub fn outer_bond(&self) -> usize {
        self.cell[0].shape()[0]
    }

    pub fn entanglement_entropy(&self) -> f64 {
        self.schmidt
            .iter()
            .filter(|&&s| s > 0.0)
            .map(|s| -s * s * (s * s).ln())
            .sum()
    }

    /// Applies the (optionally parity-dressed) cell transfer map to a left
    /// environment `E[bra, ket]`.
    pub fn transfer_left(&self, env: &[f64], dressing: Option<&LocalOperator>) -> Vec<f64> {
        let e = transfer(env, &self.cell[0], &self.cell[0], dressing);
        transfer(&e, &self.cell[1], &self.cell[1], dressing)
    }

    fn transfer_left_complex(&self, v: &[Complex64], out: &mut [Complex64], dressing: Option<&LocalOperator>) {
        let re: Vec<f64> = v.iter().map(|z| z.re).collect();
        let im: Vec<f64> = v.iter().map(|z| z.im).collect();
        let a = self.transfer_left(&re, dressing);
        let b = self.transfer_left(&im, dressing);
        for (o, (x, y)) in out.iter_mut().zip(a.iter().zip(&b)) {
            *o = Complex64::new(*x, *y);
        }
    }

    /// Leading eigenvalues (by modulus) of the cell transfer map.
    pub fn transfer_spectrum(&self, k: usize, twist: Twist) -> Result<Vec<Complex64>> {
        let chi = self.outer_bond();
        let dim = chi * chi;
        let dressing = match twist {
            Twist::None => None,
            Twist::ParityString => Some(parity_factor(self.params.n_max)?),
        };
        let k = k.min(dim);
        let mut guess = vec![Complex64::new(0.0, 0.0); dim];
        for i in 0..chi {
            guess[i * chi + i] = Complex64::new(1.0, 0.0);
        }
        let settings = KrylovSettings {
            tol: 1e-10,
            max_iter: 6000,
            krylov_dim: 40,
            seed: 5,
        };
        let res = dominant_eigenvalues(
            |v, out| self.transfer_left_complex(v, out, dressing.as_ref()),
            dim,
            k,
            Some(&guess),
            &settings,
        )?;
        if !res.converged {
            return Err(Error::Backend("transfer-matrix eigenvalues did not converge".into()));
        }
        Ok(res.values)
    }

    /// Left and right fixed points of the plain transfer map, normalized so
    /// that `Tr(ρ_L ρ_R) = 1`.
    pub fn fixed_points(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let chi = self.outer_bond();
        // the cell is left-canonical up to truncation, so the identity is
        // (nearly) the left fixed point; refine both by power iteration
        let mut left: Vec<f64> = (0..chi * chi)
            .map(|k| if k % (chi + 1) == 0 { 1.0 } else { 0.0 })
            .collect();
        let mut right = vec![0.0; chi * chi];
        for (i, s) in self.schmidt_outer.iter().enumerate() {
            right[i * chi + i] = s * s;
        }
        for _ in 0..100000 {
            let next = self.transfer_left(&left, None);
            let n = trace(&next, chi);
            let next: Vec<f64> = next.iter().map(|x| x / n).collect();
            let diff = next.iter().zip(&left).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            left = next;
            if diff < 1e-14 {
                break;
            }
        }
        for _ in 0..100000 {
            let next = self.transfer_right(&right);
            let n = trace(&next, chi);
            let next: Vec<f64> = next.iter().map(|x| x / n).collect();
            let diff = next.iter().zip(&right).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            right = next;
            if diff < 1e-14 {
                break;
            }
        }
        let overlap: f64 = (0..chi)
            .flat_map(|i| (0..chi).map(move |j| (i, j)))
            .map(|(i, j)| left[i * chi + j] * right[i * chi + j])
            .sum();
        let right = right.iter().map(|x| x / overlap).collect();
        Ok((left, right))
    }

    /// Right environment `F[ket, bra]` pushed through one cell.
    pub fn transfer_right(&self, env: &[f64]) -> Vec<f64> {
        let e = transfer_right_site(env, &self.cell[1]);
        transfer_right_site(&e, &self.cell[0])
    }
}

fn trace(m: &[f64], chi: usize) -> f64 {
    (0..chi).map(|i| m[i * chi + i]).sum()
}

/// `F'[y, x] = Σ A[y,s,y'] F[y',x'] A[x,s,x']` for a real site tensor.
fn transfer_right_site(env: &[f64], a: &DenseTensor) -> Vec<f64> {
    let (l, d, r) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    let mut t = vec![0.0; l * d * r];
    gemm(l * d, r, r, a.data(), env, &mut t, false);
    let mut out = vec![0.0; l * l];
    crate::tensor::gemm_nt(l, d * r, l, &t, a.data(), &mut out, false);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Twist {
    None,
    ParityString,
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrelationLength {
    /// In single-site lattice units.
    pub xi: f64,
    /// Modulus ratio of the eigenvalue used to the leading plain eigenvalue.
    pub ratio: f64,
    pub note: Option<String>,
}

/// `ξ = −2 / ln|λ/λ₁|` from the cell transfer map. The plain map uses its
/// second eigenvalue; the parity-dressed map uses its leading eigenvalue, or
/// its second one when the state is itself parity symmetric.
pub fn correlation_length(u: &UniformMps, twist: Twist) -> Result<CorrelationLength> {
    let chi = u.outer_bond();
    if chi == 1 {
        return Ok(CorrelationLength {
            xi: 0.0,
            ratio: 0.0,
            note: Some("product state: rank-1 transfer map".into()),
        });
    }
    let plain = u.transfer_spectrum(3, Twist::None)?;
    let lead = plain[0].norm();
    let (ratio, note) = match twist {
        Twist::None => (plain[1].norm() / lead, None),
        Twist::ParityString => {
            let dressed = u.transfer_spectrum(3, Twist::ParityString)?;
            let r0 = dressed[0].norm() / lead;
            if r0 > 1.0 - 1e-8 {
                (
                    dressed[1].norm() / lead,
                    Some("parity-symmetric state: used the subleading dressed eigenvalue".into()),
                )
            } else {
                (r0, None)
            }
        }
    };
    if ratio < 1e-12 {
        return Ok(CorrelationLength {
            xi: 0.0,
            ratio,
            note: Some("subleading eigenvalue numerically zero".into()),
        });
    }
    Ok(CorrelationLength {
        xi: -2.0 / ratio.ln(),
        ratio,
        note,
    })
}

/// Grows an infinite chain two sites at a time until the energy per site and
/// the central Schmidt spectrum are stationary.
pub fn idmrg_fixed_point(params: &ModelParams, settings: &IdmrgSettings) -> Result<UniformMps> {
    let mut check = params.clone();
    check.len = check.len.max(2);
    check.validate()?;
    settings.trunc.validate()?;
    let w_model = bulk_tensor(params)?;
    let pin = if params.ej1 == 0.0 && settings.pin_field != 0.0 && settings.pin_steps > 0 {
        Some(bulk_tensor(&params.clone().ej1(settings.pin_field))?)
    } else {
        None
    };
    let (lb, rb) = bulk_boundaries();
    let mut lenv = Env::boundary(&lb);
    let mut renv = Env::boundary(&rb);
    let d = params.phys_dim();

    let mut lambda: Vec<f64> = vec![1.0];
    let mut lambda_prev: Vec<f64> = vec![1.0];
    let mut a_t = DenseTensor::zeros(&[1, d, 1]);
    let mut b_t = DenseTensor::zeros(&[1, d, 1]);
    let mut e_density = f64::NAN;
    let mut history = Vec::new();
    let mut converged = false;
    let mut trunc_err: f64 = 0.0;
    let mut steps = 0;
    for step in 0..settings.max_steps {
        steps = step + 1;
        let pinned = step < settings.pin_steps && pin.is_some();
        let w = if pinned { pin.as_ref().unwrap() } else { &w_model };
        let chi = lenv.m;
        let guess = if step == 0 {
            None
        } else {
            Some(predict(&a_t, &b_t, &lambda, &lambda_prev))
        };
        let mut op = TwoSiteOp::new(&lenv, w, w, &renv);
        let krylov = KrylovSettings {
            seed: settings.krylov.seed.wrapping_add(step as u64),
            ..settings.krylov
        };
        let sol = lowest_eigenpair(|x, y| op.apply(x, y), chi * d * d * chi, guess.as_deref(), &krylov)?;
        let svd = truncated_svd(&sol.vector, chi * d, d * chi, &settings.trunc)?;
        let k = svd.rank();
        trunc_err = svd.discarded_weight;
        let norm = svd.s.iter().map(|s| s * s).sum::<f64>().sqrt();
        let new_lambda: Vec<f64> = svd.s.iter().map(|s| s / norm).collect();
        a_t = DenseTensor::from_raw(vec![chi, d, k], svd.u);
        b_t = DenseTensor::from_raw(vec![k, d, chi], svd.vt);
        // the environments carry the energy of all previous sites subtracted,
        // so the local eigenvalue is the energy added by the two new sites
        let new_density = sol.value / 2.0;
        let spectrum_change = if new_lambda.len() == lambda.len() {
            new_lambda
                .iter()
                .zip(&lambda)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        } else {
            f64::INFINITY
        };
        let energy_change = (new_density - e_density).abs();
        e_density = new_density;
        if !pinned {
            history.push(new_density);
        }
        lambda_prev = std::mem::replace(&mut lambda, new_lambda);
        lenv = update_left(&lenv, &a_t, &a_t, w);
        renv = update_right(&renv, &b_t, &b_t, w);
        subtract_identity(&mut lenv, 0, 4, new_density);
        subtract_identity(&mut renv, 4, 0, new_density);
        if !pinned
            && step >= settings.min_steps
            && energy_change < settings.e_tol
            && spectrum_change < settings.schmidt_tol
        {
            converged = true;
            break;
        }
    }
    // cell: A_n and Λ_n B_n Λ_{n-1}^{-1}
    let (k, chi) = (b_t.shape()[0], b_t.shape()[2]);
    let maxp = lambda_prev.iter().cloned().fold(0.0, f64::max);
    let mut x2 = b_t.data().to_vec();
    for a in 0..k {
        for s in 0..d {
            for c in 0..chi {
                let inv = if lambda_prev[c] > 1e-12 * maxp {
                    1.0 / lambda_prev[c]
                } else {
                    0.0
                };
                x2[(a * d + s) * chi + c] *= lambda[a] * inv;
            }
        }
    }
    let mut u = UniformMps {
        cell: [a_t, DenseTensor::from_raw(vec![k, d, chi], x2)],
        schmidt: lambda,
        schmidt_outer: lambda_prev,
        energy_density: e_density,
        energy_history: history,
        converged,
        steps,
        truncation_error: trunc_err,
        params: params.clone(),
    };
    normalize_cell(&mut u)?;
    Ok(u)
}

/// `E[done] -= shift · E[identity]`.
fn subtract_identity(env: &mut Env, done: usize, identity: usize, shift: f64) {
    let s = env.m * env.n;
    let (lo, hi) = env.data.split_at_mut(done.max(identity) * s);
    let (dst, src) = if done < identity {
        (&mut lo[done * s..(done + 1) * s], &hi[..s])
    } else {
        (&mut hi[..s], &lo[identity * s..(identity + 1) * s])
    };
    dst.iter_mut().zip(src).for_each(|(d, i)| *d -= shift * i);
}

/// Wavefunction prediction `Λ_n B_n Λ_{n-1}^{-1} A_n Λ_n` for the next two-site problem.
fn predict(a: &DenseTensor, b: &DenseTensor, lambda: &[f64], lambda_prev: &[f64]) -> Vec<f64> {
    let (chi_old, d, k) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    let maxp = lambda_prev.iter().cloned().fold(0.0, f64::max);
    // left[l, s1, c] = Λ[l] B[l, s1, c] / Λ_prev[c]
    let mut left = b.data().to_vec();
    for l in 0..k {
        for s in 0..d {
            for c in 0..chi_old {
                let inv = if lambda_prev[c] > 1e-12 * maxp {
                    1.0 / lambda_prev[c]
                } else {
                    0.0
                };
                left[(l * d + s) * chi_old + c] *= lambda[l] * inv;
            }
        }
    }
    // right[c, s2, r] = A[c, s2, r] Λ[r]
    let mut right = a.data().to_vec();
    for row in right.chunks_mut(k) {
        row.iter_mut().zip(lambda).for_each(|(x, l)| *x *= l);
    }
    let mut theta = vec![0.0; k * d * d * k];
    gemm(k * d, chi_old, d * k, &left, &right, &mut theta, false);
    theta
}

/// Rescales the cell so that the transfer map has leading eigenvalue one.
fn normalize_cell(u: &mut UniformMps) -> Result<()> {
    if u.outer_bond() == 1 && u.cell[1].shape()[0] == 1 {
        let n = u.cell[0].norm() * u.cell[1].norm();
        let f = n.sqrt();
        u.cell[0] = u.cell[0].scale(1.0 / f);
        u.cell[1] = u.cell[1].scale(1.0 / f);
        return Ok(());
    }
    let lead = u.transfer_spectrum(1, Twist::None)?[0].norm();
    let f = lead.powf(0.25);
    u.cell[0] = u.cell[0].scale(1.0 / f);
    u.cell[1] = u.cell[1].scale(1.0 / f);
    Ok(())
}
