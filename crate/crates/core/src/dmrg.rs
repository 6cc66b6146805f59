//! Two-site finite DMRG and MPO expectation values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{axpy, lowest_eigenpair, truncated_svd, KrylovSettings, TruncationSpec};
use crate::model::ModelParams;
use crate::mpo::{build_global_parity, build_hamiltonian, Mpo, MpoTensor};
use crate::mps::{transfer, Mps};
use crate::tensor::{gemm, gemm_nt, gemm_tn, DenseTensor};

/// Environment block `E[w][m][n]`. Left environments carry `(bra, ket)` in
/// `(m, n)`, right environments `(ket, bra)`.
#[derive(Clone, Debug)]
pub(crate) struct Env {
    pub w: usize,
    pub m: usize,
    pub n: usize,
    pub data: Vec<f64>,
}

impl Env {
    pub fn boundary(v: &[f64]) -> Self {
        Self {
            w: v.len(),
            m: 1,
            n: 1,
            data: v.to_vec(),
        }
    }

    fn channel(&self, a: usize) -> &[f64] {
        let s = self.m * self.n;
        &self.data[a * s..(a + 1) * s]
    }

    fn active(&self) -> Vec<bool> {
        (0..self.w).map(|a| self.channel(a).iter().any(|&x| x != 0.0)).collect()
    }
}

/// Applies the `d x d` blocks of `w` to a stack `input[ch][x][t][rest]`.
/// Forward maps left channels to right channels, backward right to left.
/// The output is `out[ch'][x][s][rest]`, or `out[x][s][ch'][rest]` when
/// `channel_inner` is set.
fn apply_blocks_into(
    w: &MpoTensor,
    input: &[f64],
    x: usize,
    rest: usize,
    forward: bool,
    channel_inner: bool,
    active: &[bool],
    out: &mut Vec<f64>,
) {
    let d = w.phys_dim();
    let stride = x * d * rest;
    let out_w = if forward { w.right_dim() } else { w.left_dim() };
    out.clear();
    out.resize(out_w * stride, 0.0);
    // nonzero entries (src, dst, s, t, c), visited per x so that the slices
    // touched stay in cache
    let mut entries = Vec::new();
    for &(a, b) in w.blocks() {
        let (src, dst) = if forward { (a, b) } else { (b, a) };
        if !active[src] {
            continue;
        }
        let blk = w.block(a, b);
        for s in 0..d {
            for t in 0..d {
                let c = blk[s * d + t];
                if c != 0.0 {
                    entries.push((src, dst, s, t, c));
                }
            }
        }
    }
    for xi in 0..x {
        for &(src, dst, s, t, c) in &entries {
            let o = if channel_inner {
                ((xi * d + s) * out_w + dst) * rest
            } else {
                dst * stride + (xi * d + s) * rest
            };
            let i = src * stride + (xi * d + t) * rest;
            axpy(c, &input[i..i + rest], &mut out[o..o + rest]);
        }
    }
}

fn apply_blocks(w: &MpoTensor, input: &[f64], x: usize, rest: usize, forward: bool, active: &[bool]) -> Vec<f64> {
    let mut out = Vec::new();
    apply_blocks_into(w, input, x, rest, forward, false, active, &mut out);
    out
}

/// Channels of the right side of `w` reachable from the active left channels.
fn propagate_active(w: &MpoTensor, active: &[bool]) -> Vec<bool> {
    let mut out = vec![false; w.right_dim()];
    for &(a, b) in w.blocks() {
        if active[a] {
            out[b] = true;
        }
    }
    out
}

/// Left environment one site further right.
pub(crate) fn update_left(env: &Env, bra: &DenseTensor, ket: &DenseTensor, w: &MpoTensor) -> Env {
    let (xl, d, xr) = (bra.shape()[0], bra.shape()[1], bra.shape()[2]);
    let (yl, yr) = (ket.shape()[0], ket.shape()[2]);
    let wl = env.w;
    let active = env.active();
    let mut t1 = vec![0.0; wl * xl * d * yr];
    for a in 0..wl {
        if active[a] {
            gemm(
                xl,
                yl,
                d * yr,
                env.channel(a),
                ket.data(),
                &mut t1[a * xl * d * yr..(a + 1) * xl * d * yr],
                false,
            );
        }
    }
    let t2 = apply_blocks(w, &t1, xl, yr, true, &active);
    let wr = w.right_dim();
    let mut data = vec![0.0; wr * xr * yr];
    for b in 0..wr {
        gemm_tn(
            xr,
            xl * d,
            yr,
            bra.data(),
            &t2[b * xl * d * yr..(b + 1) * xl * d * yr],
            &mut data[b * xr * yr..(b + 1) * xr * yr],
        );
    }
    Env {
        w: wr,
        m: xr,
        n: yr,
        data,
    }
}

/// Right environment one site further left.
pub(crate) fn update_right(env: &Env, bra: &DenseTensor, ket: &DenseTensor, w: &MpoTensor) -> Env {
    let (xl, d, xr) = (bra.shape()[0], bra.shape()[1], bra.shape()[2]);
    let (yl, yr) = (ket.shape()[0], ket.shape()[2]);
    let wr = env.w;
    let active = env.active();
    let mut t1 = vec![0.0; wr * yl * d * xr];
    for c in 0..wr {
        if active[c] {
            gemm(
                yl * d,
                yr,
                xr,
                ket.data(),
                env.channel(c),
                &mut t1[c * yl * d * xr..(c + 1) * yl * d * xr],
                false,
            );
        }
    }
    let t2 = apply_blocks(w, &t1, yl, xr, false, &active);
    let wl = w.left_dim();
    let mut data = vec![0.0; wl * yl * xl];
    for a in 0..wl {
        gemm_nt(
            yl,
            d * xr,
            xl,
            &t2[a * yl * d * xr..(a + 1) * yl * d * xr],
            bra.data(),
            &mut data[a * yl * xl..(a + 1) * yl * xl],
            false,
        );
    }
    Env {
        w: wl,
        m: yl,
        n: xl,
        data,
    }
}

/// Effective two-site Hamiltonian `θ[l, s1, s2, r] ↦ (L W1 W2 R) θ` with
/// reusable scratch buffers.
pub(crate) struct TwoSiteOp<'a> {
    l: &'a Env,
    w1: &'a MpoTensor,
    w2: &'a MpoTensor,
    r: &'a Env,
    lact: Vec<bool>,
    mid: Vec<bool>,
    t1: Vec<f64>,
    t2: Vec<f64>,
    t3: Vec<f64>,
}

impl<'a> TwoSiteOp<'a> {
    pub fn new(l: &'a Env, w1: &'a MpoTensor, w2: &'a MpoTensor, r: &'a Env) -> Self {
        let lact = l.active();
        let mid = propagate_active(w1, &lact);
        Self {
            l,
            w1,
            w2,
            r,
            lact,
            mid,
            t1: Vec::new(),
            t2: Vec::new(),
            t3: Vec::new(),
        }
    }

    pub fn apply(&mut self, theta: &[f64], out: &mut [f64]) {
        let (xl, xr) = (self.l.m, self.r.m);
        let d = self.w1.phys_dim();
        let blk = xl * d * d * xr;
        self.t1.resize(self.l.w * blk, 0.0);
        gemm(self.l.w * xl, xl, d * d * xr, &self.l.data, theta, &mut self.t1, false);
        apply_blocks_into(self.w1, &self.t1, xl, d * xr, true, false, &self.lact, &mut self.t2);
        apply_blocks_into(self.w2, &self.t2, xl * d, xr, true, true, &self.mid, &mut self.t3);
        gemm(xl * d * d, self.r.w * xr, xr, &self.t3, &self.r.data, out, false);
    }
}

fn check_shapes(psi: &Mps, h: &Mpo) -> Result<()> {
    if psi.len() != h.len() || psi.phys_dim() != h.phys_dim() {
        return Err(Error::Shape(format!(
            "MPS ({} sites, dim {}) does not match MPO ({} sites, dim {})",
            psi.len(),
            psi.phys_dim(),
            h.len(),
            h.phys_dim()
        )));
    }
    Ok(())
}

/// `⟨ψ|H|ψ⟩ / ⟨ψ|ψ⟩`.
pub fn energy_expectation(psi: &Mps, h: &Mpo) -> Result<f64> {
    check_shapes(psi, h)?;
    let mut env = Env::boundary(h.left_boundary());
    for i in 0..psi.len() {
        env = update_left(&env, psi.tensor(i), psi.tensor(i), h.tensor(i));
    }
    let e: f64 = env.data.iter().zip(h.right_boundary()).map(|(x, r)| x * r).sum();
    Ok(e / psi.norm().powi(2))
}

/// `⟨H²⟩ − ⟨H⟩²` from a doubled MPO layer.
pub fn energy_variance(psi: &Mps, h: &Mpo) -> Result<f64> {
    check_shapes(psi, h)?;
    let h2 = square_mpo(h);
    let e = energy_expectation(psi, h)?;
    Ok(energy_expectation(psi, &h2)? - e * e)
}

/// `H · H` as an MPO with squared bond dimension.
pub(crate) fn square_mpo(h: &Mpo) -> Mpo {
    let d = h.phys_dim();
    let tensors = h
        .tensors()
        .iter()
        .map(|w| {
            let (wl, wr) = (w.left_dim(), w.right_dim());
            let mut t = MpoTensor::zeros(wl * wl, wr * wr, d);
            for &(a1, b1) in w.blocks() {
                for &(a2, b2) in w.blocks() {
                    let x = w.block(a1, b1);
                    let y = w.block(a2, b2);
                    let mut prod = vec![0.0; d * d];
                    gemm(d, d, d, x, y, &mut prod, false);
                    t.add_raw_block(a1 * wl + a2, b1 * wr + b2, &prod);
                }
            }
            t
        })
        .collect();
    let outer = |v: &[f64]| -> Vec<f64> { v.iter().flat_map(|a| v.iter().map(move |b| a * b)).collect() };
    Mpo::new(tensors, outer(h.left_boundary()), outer(h.right_boundary())).expect("squared MPO is well formed")
}

#[derive(Clone, Debug)]
pub struct DmrgSettings {
    pub trunc: TruncationSpec,
    pub max_sweeps: usize,
    /// Energy change between full sweeps below which the run is converged.
    pub e_tol: f64,
    /// Bond dimension of the first sweep; doubled every sweep up to `chi_max`.
    pub chi_start: usize,
    /// Bond dimension of the random initial state.
    pub init_chi: usize,
    pub seed: u64,
    pub krylov: KrylovSettings,
    /// Compute `⟨H²⟩ − ⟨H⟩²` after the last sweep.
    pub measure_variance: bool,
}

impl DmrgSettings {
    pub fn new(trunc: TruncationSpec, max_sweeps: usize, e_tol: f64) -> Self {
        Self {
            trunc,
            max_sweeps,
            e_tol,
            chi_start: 16,
            init_chi: 4,
            seed: 1,
            krylov: KrylovSettings {
                tol: 1e-7,
                max_iter: 120,
                krylov_dim: 24,
                seed: 1,
            },
            measure_variance: false,
        }
    }

    /// Defaults scaled to the chain length: `e_tol = 1e-9 L`, 12 sweeps.
    pub fn for_length(len: usize) -> Self {
        Self::new(TruncationSpec::default(), 12, 1e-9 * len as f64)
    }

    pub fn chi_max(mut self, chi: usize) -> Self {
        self.trunc.chi_max = chi;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.krylov.seed = seed;
        self
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ConvergenceReport {
    /// Energy after each full (right and left) sweep.
    pub sweep_energies: Vec<f64>,
    pub energy_variance: Option<f64>,
    /// Largest discarded weight of the final sweep.
    pub max_truncation_error: f64,
    pub max_bond: usize,
    pub sweeps: usize,
    pub converged: bool,
    /// Number of local eigenproblems that hit their iteration budget.
    pub unconverged_local_solves: usize,
    /// Total effective-Hamiltonian applications.
    pub matvecs: usize,
}

#[derive(Clone, Debug)]
pub struct DmrgResult {
    pub mps: Mps,
    pub energy: f64,
    pub report: ConvergenceReport,
}

/// Penalty term `weight · |φ⟩⟨φ|` used to push the search away from known states.
struct Penalty<'a> {
    state: &'a Mps,
    weight: f64,
    left: Vec<Vec<f64>>,
    right: Vec<Vec<f64>>,
}

/// Right overlap environment `E[x_cur, y_other]` one site further left.
fn transfer_right(env: &[f64], cur: &DenseTensor, other: &DenseTensor) -> Vec<f64> {
    let (xl, d, xr) = (cur.shape()[0], cur.shape()[1], cur.shape()[2]);
    let (yl, yr) = (other.shape()[0], other.shape()[2]);
    // t[(x s), y'] = cur[(x s), x'] env[x', y']
    let mut t = vec![0.0; xl * d * yr];
    gemm(xl * d, xr, yr, cur.data(), env, &mut t, false);
    let mut out = vec![0.0; xl * yl];
    gemm_nt(xl, d * yr, yl, &t, other.data(), &mut out, false);
    out
}

/// Finite two-site DMRG from a seeded random state.
pub fn ground_state(h: &Mpo, settings: &DmrgSettings) -> Result<DmrgResult> {
    let init = Mps::random(h.len(), h.phys_dim(), settings.init_chi, settings.seed)?;
    run_dmrg(h, init, &[], settings)
}

/// Finite two-site DMRG from a supplied state.
pub fn ground_state_from(h: &Mpo, init: Mps, settings: &DmrgSettings) -> Result<DmrgResult> {
    check_shapes(&init, h)?;
    run_dmrg(h, init, &[], settings)
}

/// Lowest state orthogonal to `lower`, found by adding `weight · Σ|φ⟩⟨φ|`
/// to the Hamiltonian. `weight` must exceed the gap being resolved.
pub fn excited_state(h: &Mpo, lower: &[&Mps], weight: f64, settings: &DmrgSettings) -> Result<DmrgResult> {
    for s in lower {
        check_shapes(s, h)?;
    }
    let init = Mps::random(
        h.len(),
        h.phys_dim(),
        settings.init_chi,
        settings.seed.wrapping_add(101),
    )?;
    let penalties: Vec<(&Mps, f64)> = lower.iter().map(|s| (*s, weight)).collect();
    let mut res = run_dmrg(h, init, &penalties, settings)?;
    res.energy = energy_expectation(&res.mps, h)?;
    Ok(res)
}

#[derive(Clone, Debug)]
pub struct SectorState {
    pub mps: Mps,
    /// Energy measured without the sector bias.
    pub energy: f64,
    pub parity: f64,
    pub report: ConvergenceReport,
}

/// Bias weight of the parity term used to select a sector.
pub const SECTOR_BIAS: f64 = 1e-3;

/// Lowest state with global parity `parity` (±1), obtained by running DMRG on
/// `H − parity · w · P` and re-measuring with `w = 0`.
pub fn excited_in_sector(params: &ModelParams, parity: i8, bias: f64, settings: &DmrgSettings) -> Result<SectorState> {
    if parity != 1 && parity != -1 {
        return Err(Error::InvalidParameter {
            field: "parity",
            reason: format!("must be ±1, got {parity}"),
        });
    }
    if !params.conserves_parity() {
        return Err(Error::SymmetryBroken("parity sectors need eg = 0 and ej1 = 0"));
    }
    let h = build_hamiltonian(params)?;
    let p = Mpo::from_product(&build_global_parity(params.len, params.n_max)?);
    let biased = h.plus(-(parity as f64) * bias, &p)?;
    // local updates cannot tunnel out of a symmetry-broken vacuum, so start inside the sector
    let init = sector_product_state(params, parity, settings.seed)?;
    let res = run_dmrg(&biased, init, &[], settings)?;
    let measured = res.mps.expectation(&build_global_parity(params.len, params.n_max)?)?;
    if (measured - parity as f64).abs() > 1e-3 {
        return Err(Error::SectorMismatch {
            requested: parity,
            measured,
        });
    }
    let energy = energy_expectation(&res.mps, &h)?;
    Ok(SectorState {
        mps: res.mps,
        energy,
        parity: measured,
        report: res.report,
    })
}

/// Random product state with definite parity: every site is supported on even
/// charges, except site 0 on odd charges when `parity` is −1.
fn sector_product_state(params: &ModelParams, parity: i8, seed: u64) -> Result<Mps> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(313));
    let d = params.phys_dim();
    let tensors = (0..params.len)
        .map(|site| {
            let odd = site == 0 && parity == -1;
            DenseTensor::from_fn(&[1, d, 1], |idx| {
                let charge = idx[1] as i64 - params.n_max as i64;
                if (charge.rem_euclid(2) == 1) == odd {
                    rng.random_range(0.5..1.0)
                } else {
                    0.0
                }
            })
        })
        .collect();
    Mps::from_tensors(tensors)
}

fn run_dmrg(h: &Mpo, mut psi: Mps, penalties: &[(&Mps, f64)], settings: &DmrgSettings) -> Result<DmrgResult> {
    settings.trunc.validate()?;
    if settings.trunc.chi_max < 2 {
        return Err(Error::InvalidParameter {
            field: "chi_max",
            reason: "two-site DMRG needs chi_max >= 2".into(),
        });
    }
    let len = h.len();
    if len < 2 {
        return Err(Error::Shape("two-site DMRG needs at least two sites".into()));
    }
    psi.move_center(0);
    let mut lenv: Vec<Option<Env>> = vec![None; len + 1];
    let mut renv: Vec<Option<Env>> = vec![None; len + 1];
    lenv[0] = Some(Env::boundary(h.left_boundary()));
    renv[len] = Some(Env::boundary(h.right_boundary()));
    for i in (1..len).rev() {
        renv[i] = Some(update_right(
            renv[i + 1].as_ref().unwrap(),
            psi.tensor(i),
            psi.tensor(i),
            h.tensor(i),
        ));
    }
    let mut pens: Vec<Penalty> = penalties
        .iter()
        .map(|&(state, weight)| {
            let mut p = Penalty {
                state,
                weight,
                left: vec![Vec::new(); len + 1],
                right: vec![Vec::new(); len + 1],
            };
            p.left[0] = vec![1.0];
            p.right[len] = vec![1.0];
            for i in (1..len).rev() {
                p.right[i] = transfer_right(&p.right[i + 1], psi.tensor(i), state.tensor(i));
            }
            p
        })
        .collect();

    let mut report = ConvergenceReport::default();
    let mut chi = settings.chi_start.clamp(2, settings.trunc.chi_max);
    let mut last_energy = f64::INFINITY;
    let mut energy = f64::INFINITY;
    let mut guess_seed = settings.krylov.seed;
    for sweep in 0..settings.max_sweeps {
        let spec = TruncationSpec {
            chi_max: chi,
            cutoff: settings.trunc.cutoff,
        };
        let mut max_trunc: f64 = 0.0;
        let order: Vec<(usize, bool)> = (0..len - 1)
            .map(|i| (i, true))
            .chain((0..len - 1).rev().map(|i| (i, false)))
            .collect();
        for (i, right) in order {
            guess_seed = guess_seed.wrapping_add(1);
            let a = psi.tensor(i);
            let b = psi.tensor(i + 1);
            let (xl, d, xm) = (a.shape()[0], a.shape()[1], a.shape()[2]);
            let xr = b.shape()[2];
            let mut theta = vec![0.0; xl * d * d * xr];
            gemm(xl * d, xm, d * xr, a.data(), b.data(), &mut theta, false);
            let l = lenv[i].as_ref().unwrap();
            let r = renv[i + 2].as_ref().unwrap();
            let projections: Vec<(Vec<f64>, f64)> = pens
                .iter()
                .map(|p| {
                    let sa = p.state.tensor(i);
                    let sb = p.state.tensor(i + 1);
                    let (yl, ym, yr) = (sa.shape()[0], sa.shape()[2], sb.shape()[2]);
                    let mut st = vec![0.0; yl * d * d * yr];
                    gemm(yl * d, ym, d * yr, sa.data(), sb.data(), &mut st, false);
                    // φ_loc[x, s1, s2, z] = Σ EL[x, y] st[y, s1 s2, y'] ER[z, y']
                    let mut t = vec![0.0; xl * d * d * yr];
                    gemm(xl, yl, d * d * yr, &p.left[i], &st, &mut t, false);
                    let mut v = vec![0.0; xl * d * d * xr];
                    gemm_nt(xl * d * d, yr, xr, &t, &p.right[i + 2], &mut v, false);
                    (v, p.weight)
                })
                .collect();
            let krylov = KrylovSettings {
                seed: guess_seed,
                ..settings.krylov
            };
            let mut op = TwoSiteOp::new(l, h.tensor(i), h.tensor(i + 1), r);
            let sol = lowest_eigenpair(
                |x, y| {
                    op.apply(x, y);
                    for (v, w) in &projections {
                        let c = w * crate::linalg::dot(v, x);
                        y.iter_mut().zip(v).for_each(|(yi, vi)| *yi += c * vi);
                    }
                },
                theta.len(),
                Some(&theta),
                &krylov,
            )?;
            if !sol.converged {
                report.unconverged_local_solves += 1;
            }
            report.matvecs += sol.matvecs;
            energy = sol.value;
            let svd = truncated_svd(&sol.vector, xl * d, d * xr, &spec)?;
            let k = svd.rank();
            max_trunc = max_trunc.max(svd.discarded_weight);
            psi.set_discarded(i, svd.discarded_weight);
            let norm = svd.s.iter().map(|s| s * s).sum::<f64>().sqrt();
            let s: Vec<f64> = svd.s.iter().map(|x| x / norm).collect();
            if right {
                let mut sv = svd.vt.clone();
                for (q, row) in sv.chunks_mut(d * xr).enumerate() {
                    row.iter_mut().for_each(|x| *x *= s[q]);
                }
                psi.set_tensor(i, DenseTensor::from_raw(vec![xl, d, k], svd.u));
                psi.set_tensor(i + 1, DenseTensor::from_raw(vec![k, d, xr], sv));
                psi.set_center(i + 1);
                lenv[i + 1] = Some(update_left(
                    lenv[i].as_ref().unwrap(),
                    psi.tensor(i),
                    psi.tensor(i),
                    h.tensor(i),
                ));
                for p in pens.iter_mut() {
                    p.left[i + 1] = transfer(&p.left[i], psi.tensor(i), p.state.tensor(i), None);
                }
            } else {
                let mut us = svd.u.clone();
                for row in us.chunks_mut(k) {
                    row.iter_mut().zip(&s).for_each(|(x, sq)| *x *= sq);
                }
                psi.set_tensor(i, DenseTensor::from_raw(vec![xl, d, k], us));
                psi.set_tensor(i + 1, DenseTensor::from_raw(vec![k, d, xr], svd.vt));
                psi.set_center(i);
                renv[i + 1] = Some(update_right(
                    renv[i + 2].as_ref().unwrap(),
                    psi.tensor(i + 1),
                    psi.tensor(i + 1),
                    h.tensor(i + 1),
                ));
                for p in pens.iter_mut() {
                    p.right[i + 1] = transfer_right(&p.right[i + 2], psi.tensor(i + 1), p.state.tensor(i + 1));
                }
            }
        }
        if penalties.is_empty() {
            energy = energy_expectation(&psi, h)?;
        }
        report.sweep_energies.push(energy);
        report.sweeps = sweep + 1;
        report.max_truncation_error = max_trunc;
        let at_full_chi = chi == settings.trunc.chi_max;
        if at_full_chi && (last_energy - energy).abs() < settings.e_tol {
            report.converged = true;
            break;
        }
        last_energy = energy;
        chi = (chi * 2).min(settings.trunc.chi_max);
    }
    report.max_bond = psi.max_bond();
    let energy = if penalties.is_empty() {
        energy_expectation(&psi, h)?
    } else {
        energy
    };
    if settings.measure_variance {
        report.energy_variance = Some(energy_variance(&psi, h)?);
    }
    Ok(DmrgResult {
        mps: psi,
        energy,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::local::LocalBasis;

    fn dense_energy(h: &Mpo, psi: &Mps) -> f64 {
        let v = psi.to_dense_vector().unwrap();
        let m = h.to_sparse();
        let mut w = vec![0.0; v.len()];
        m.matvec(&v, &mut w);
        v.iter().zip(&w).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn energy_expectation_matches_dense_product_state() {
        let params = ModelParams::new(4, 1).ej(0.7).ej1(0.2).ej2(0.3).eps(0.1).eg(0.05);
        let h = build_hamiltonian(&params).unwrap();
        let site = [0.3, 0.8, -0.5];
        let psi = Mps::uniform_product(4, &site).unwrap();
        assert!((energy_expectation(&psi, &h).unwrap() - dense_energy(&h, &psi)).abs() < 1e-12);
        let r = Mps::random(4, 3, 5, 3).unwrap();
        assert!((energy_expectation(&r, &h).unwrap() - dense_energy(&h, &r)).abs() < 1e-12);
    }

    #[test]
    fn variance_of_eigenstate_vanishes() {
        let params = ModelParams::new(4, 1);
        let h = build_hamiltonian(&params).unwrap();
        let psi = Mps::product_state(LocalBasis::new(1).unwrap(), &[0, 1, -1, 0]).unwrap();
        assert!((energy_expectation(&psi, &h).unwrap() - 2.0).abs() < 1e-14);
        assert!(energy_variance(&psi, &h).unwrap().abs() < 1e-12);
        let r = Mps::random(4, 3, 4, 8).unwrap();
        assert!(energy_variance(&r, &h).unwrap() > 1e-3);
    }

    #[test]
    fn decoupled_sites_give_product_state() {
        let params = ModelParams::new(5, 2).ej2(0.4).ej1(0.1);
        let h = build_hamiltonian(&params).unwrap();
        let onsite = crate::mpo::onsite_term(&params).unwrap().eigenvalues().unwrap()[0];
        let res = ground_state(&h, &DmrgSettings::for_length(5).chi_max(8)).unwrap();
        assert!((res.energy - 5.0 * onsite).abs() < 1e-10);
        assert_eq!(res.mps.max_bond(), 1);
        assert!(res.report.converged);
    }

    #[test]
    fn small_chain_matches_dense_minimum() {
        let params = ModelParams::new(5, 1).ej(1.3).ej2(0.2).eps(0.2);
        let h = build_hamiltonian(&params).unwrap();
        let exact = h
            .to_sparse()
            .to_dense()
            .self_adjoint_eigenvalues(faer::Side::Lower)
            .unwrap()[0];
        let res = ground_state(&h, &DmrgSettings::for_length(5).chi_max(27)).unwrap();
        assert!(res.energy >= exact - 1e-10);
        assert!((res.energy - exact).abs() < 1e-9 * exact.abs());
        assert!(res.mps.isometry_residual() < 1e-12);
        for w in res.report.sweep_energies.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn orthogonal_excited_state_matches_dense() {
        let params = ModelParams::new(4, 1).ej(0.8).ej1(0.15).ej2(0.1);
        let h = build_hamiltonian(&params).unwrap();
        let evals = h
            .to_sparse()
            .to_dense()
            .self_adjoint_eigenvalues(faer::Side::Lower)
            .unwrap();
        let s = DmrgSettings::for_length(4).chi_max(9);
        let g = ground_state(&h, &s).unwrap();
        let e1 = excited_state(&h, &[&g.mps], 10.0, &s).unwrap();
        assert!((e1.energy - evals[1]).abs() < 1e-8, "{} vs {}", e1.energy, evals[1]);
        assert!(g.mps.overlap(&e1.mps).unwrap().abs() < 1e-6);
    }

    #[test]
    fn square_mpo_matches_dense_square() {
        let params = ModelParams::new(3, 1).ej(0.5).ej1(0.3).eps(0.2);
        let h = build_hamiltonian(&params).unwrap();
        let m = h.to_sparse().to_dense();
        let m2 = &m * &m;
        let s2 = square_mpo(&h).to_sparse().to_dense();
        assert!((&m2 - &s2).norm_max() < 1e-12);
    }

    #[test]
    fn sector_targeting_rejects_broken_symmetry() {
        let params = ModelParams::new(4, 1).ej(1.0).eg(0.1);
        let s = DmrgSettings::for_length(4).chi_max(9);
        assert!(matches!(
            excited_in_sector(&params, 1, SECTOR_BIAS, &s),
            Err(Error::SymmetryBroken(_))
        ));
        assert!(excited_in_sector(&params.clone().eg(0.0), 2, SECTOR_BIAS, &s).is_err());
    }
}
