//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test -p qrotor --test acceptance -- A1 A10` runs a subset.
//! Set `QROTOR_ACCEPTANCE_STRICT=1` to turn any FAIL into a nonzero exit.

use std::collections::HashMap;
use std::time::Instant;

use qrotor::dmrg::SECTOR_BIAS;
use qrotor::local::DEFAULT_N_MAX;
use qrotor::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Results shared between criteria.
#[derive(Default)]
struct Cache {
    luttinger: HashMap<u64, f64>,
    tension: HashMap<usize, (f64, f64, f64)>,
}

fn key(x: f64) -> u64 {
    x.to_bits()
}

fn finite(len: usize, chi: usize) -> DmrgSettings {
    let mut s = DmrgSettings::for_length(len).chi_max(chi);
    s.max_sweeps = 20;
    s
}

fn uniform(params: &ModelParams, chi: usize) -> Result<UniformMps> {
    idmrg_fixed_point(params, &IdmrgSettings::default().chi_max(chi))
}

const IDMRG_CHI: usize = 32;

/// Correlation lengths converge slowly in the bond dimension; these runs
/// keep every Schmidt value above 1e-14.
fn precise(params: &ModelParams) -> Result<UniformMps> {
    let mut s = IdmrgSettings::default().chi_max(96);
    s.trunc.cutoff = 1e-14;
    idmrg_fixed_point(params, &s)
}

// ---------------------------------------------------------------- A1

fn a1(_: &mut Cache) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut draws = Vec::new();
    for regime in ["free", "free", "sg", "sg", "psg"] {
        let mut p = ModelParams::new(6, 2)
            .ej(rng.random_range(0.5..2.5))
            .eps(rng.random_range(0.0..0.5))
            .eg(rng.random_range(0.0..0.3));
        match regime {
            "sg" => p = p.ej2(rng.random_range(0.05..0.5)),
            "psg" => p = p.ej1(rng.random_range(0.05..0.3)).ej2(rng.random_range(0.05..0.5)),
            _ => {}
        }
        draws.push((regime, p));
    }
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for (regime, p) in &draws {
        let exact = lowest_k(p, 1)?.values[0];
        let mut s = finite(6, 125);
        s.trunc.cutoff = 0.0;
        s.e_tol = 1e-13;
        s.krylov.tol = 1e-10;
        let e = ground_state(&build_hamiltonian(p)?, &s)?.energy;
        worst = worst.max(rel(e, exact));
        lines.push(format!("{regime}:{:.1e}", rel(e, exact)));
    }
    Ok(outcome(
        worst <= 1e-8,
        format!("max rel err {worst:.2e} [{}]", lines.join(" ")),
    ))
}

// ---------------------------------------------------------------- A2 / A3

const A2_LEN: usize = 64;
const A2_EJ: [f64; 3] = [2.0, 2.5, 3.0];
const A2_WINDOW: (f64, f64) = (4.0, 20.0);

fn luttinger(cache: &mut Cache, ej: f64) -> Result<(f64, f64)> {
    let p = ModelParams::new(A2_LEN, DEFAULT_N_MAX).ej(ej);
    let gs = ground_state(&build_hamiltonian(&p)?, &finite(A2_LEN, 48))?;
    let j0 = A2_LEN / 4;
    let series = two_point_series(&gs.mps, 1, j0, A2_LEN - 1 - j0)?;
    let fit = fit_power_law(&series, A2_WINDOW.0, A2_WINDOW.1)?;
    cache.luttinger.insert(key(ej), fit.value);
    Ok((fit.value, fit.quality))
}

fn a2(cache: &mut Cache) -> Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for ej in A2_EJ {
        let (k, q) = luttinger(cache, ej)?;
        pass &= q >= 0.99 && k > 0.0 && k < 2.0;
        parts.push(format!("ej={ej}: K={k:.4} R2={q:.5}"));
    }
    Ok(outcome(pass, parts.join("; ")))
}

const A3_EJ: [f64; 2] = [2.0, 2.5];
const VERTEX_EJ2: [f64; 4] = [0.05, 0.1, 0.15, 0.2];

/// β² from the scaling of ⟨e^{iφ}⟩ with ej2 at ej1 = 0; also returns the states.
fn vertex_beta_sq(ej: f64, ej2s: &[f64]) -> Result<(FitResult, Vec<UniformMps>)> {
    let mut states = Vec::new();
    let mut v = Vec::new();
    for &ej2 in ej2s {
        let u = uniform(&ModelParams::new(2, DEFAULT_N_MAX).ej(ej).ej2(ej2), IDMRG_CHI)?;
        v.push(vertex_expectation(&u)?);
        states.push(u);
    }
    Ok((fit_vertex_scaling(ej2s, &v)?, states))
}

fn a3(cache: &mut Cache) -> Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for ej in A3_EJ {
        let k = match cache.luttinger.get(&key(ej)) {
            Some(k) => *k,
            None => luttinger(cache, ej)?.0,
        };
        let (fit, _) = vertex_beta_sq(ej, &VERTEX_EJ2)?;
        let b = fit.value;
        let d = rel(b, k / 2.0);
        if b <= 0.6 {
            pass &= d <= 0.15;
        }
        parts.push(format!(
            "ej={ej}: beta2={b:.4} K/2={:.4} dev={:.1}%",
            k / 2.0,
            100.0 * d
        ));
    }
    Ok(outcome(pass, parts.join("; ")))
}

// ---------------------------------------------------------------- A4

fn a4(_: &mut Cache) -> Result<Outcome> {
    let len = 32;
    let p = ModelParams::new(len, DEFAULT_N_MAX).ej(2.0).ej2(0.3);
    let s = finite(len, 64);
    let even = excited_in_sector(&p, 1, SECTOR_BIAS, &s)?;
    let odd = excited_in_sector(&p, -1, SECTOR_BIAS, &s)?;
    let h = build_hamiltonian(&p)?;
    let third = excited_state(&h, &[&even.mps, &odd.mps], 10.0, &s)?;
    let (e0, e1) = if even.energy <= odd.energy {
        (even.energy, odd.energy)
    } else {
        (odd.energy, even.energy)
    };
    let ratio = (e1 - e0) / (third.energy - e0);
    Ok(outcome(
        ratio.abs() <= 1e-2 && third.energy > e1,
        format!("E1-E0={:.3e} E2-E0={:.4} ratio={ratio:.2e}", e1 - e0, third.energy - e0),
    ))
}

// ---------------------------------------------------------------- A5 / A6 / A8

const TENSION_EJ: f64 = 2.0;
const TENSION_EJ2: f64 = 0.1;
const A6_EJ1: f64 = 0.1;
const TENSION_WINDOW: (f64, f64) = (2.0, 12.0);

fn separations() -> Vec<usize> {
    (2..=12).collect()
}

fn a5(_: &mut Cache) -> Result<Outcome> {
    let len = 48;
    let p = ModelParams::new(len, DEFAULT_N_MAX).ej(TENSION_EJ).ej2(TENSION_EJ2);
    let curve = string_tension_curve(&p, len / 4, &separations(), &finite(len, 64))?;
    let t = &curve.series.y;
    let mean = t.iter().sum::<f64>() / t.len() as f64;
    let dev = t.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max);
    Ok(outcome(dev <= 1e-3, format!("mean T={mean:.5} max|T-mean|={dev:.2e}")))
}

/// (σ, fit quality, vertex at ej1 = 0) for the tension instance at `n_max`.
fn tension(cache: &mut Cache, n_max: usize) -> Result<(f64, f64, f64)> {
    if let Some(r) = cache.tension.get(&n_max) {
        return Ok(*r);
    }
    let len = 64;
    let p = ModelParams::new(len, n_max).ej(TENSION_EJ).ej1(A6_EJ1).ej2(TENSION_EJ2);
    let curve = string_tension_curve(&p, len / 4, &separations(), &finite(len, 64))?;
    let fit = fit_string_tension(&curve.series, TENSION_WINDOW.0, TENSION_WINDOW.1)?;
    let u = uniform(&ModelParams::new(2, n_max).ej(TENSION_EJ).ej2(TENSION_EJ2), IDMRG_CHI)?;
    let r = (fit.value, fit.quality, vertex_expectation(&u)?);
    cache.tension.insert(n_max, r);
    Ok(r)
}

fn a6(cache: &mut Cache) -> Result<Outcome> {
    let (sigma, q, v) = tension(cache, DEFAULT_N_MAX)?;
    let lo = string_tension_lo(v, A6_EJ1)?;
    let d = rel(sigma, lo);
    Ok(outcome(
        q >= 0.98 && d <= 0.2,
        format!(
            "sigma={sigma:.5} R2={q:.5} sigma_LO={lo:.5} (vertex {v:.4}) dev={:.1}%",
            100.0 * d
        ),
    ))
}

fn a8(cache: &mut Cache) -> Result<Outcome> {
    let (s4, _, v4) = tension(cache, DEFAULT_N_MAX)?;
    let (s5, _, v5) = tension(cache, DEFAULT_N_MAX + 1)?;
    // the vertex of the confined instance itself
    let p = ModelParams::new(2, DEFAULT_N_MAX)
        .ej(TENSION_EJ)
        .ej1(A6_EJ1)
        .ej2(TENSION_EJ2);
    let w4 = vertex_expectation(&uniform(&p, IDMRG_CHI)?)?;
    let w5 = vertex_expectation(&uniform(&p.clone().n_max(DEFAULT_N_MAX + 1), IDMRG_CHI)?)?;
    let (ds, dv, dw) = (rel(s5, s4), rel(v5, v4), rel(w5, w4));
    Ok(outcome(
        ds < 5e-3 && dv < 5e-3 && dw < 5e-3,
        format!(
            "sigma {s4:.6}->{s5:.6} ({:.3}%), vertex(ej1=0) {v4:.6}->{v5:.6} ({:.3}%), vertex(ej1={A6_EJ1}) {w4:.6}->{w5:.6} ({:.3}%)",
            100.0 * ds,
            100.0 * dv,
            100.0 * dw
        ),
    ))
}

// ---------------------------------------------------------------- A7

const A7_EJ: f64 = 1.05;
const A7_EJ2: f64 = 0.2;
const A7_CALIBRATION: [f64; 4] = [0.16, 0.18, 0.2, 0.22];
const A7_ETA: [f64; 4] = [0.01, 0.02, 0.05, 0.1];

fn a7(_: &mut Cache) -> Result<Outcome> {
    let (fit, _) = vertex_beta_sq(A7_EJ, &A7_CALIBRATION)?;
    let b = fit.value;
    let nu = nu_exponent(b)?;
    let u0 = precise(&ModelParams::new(2, DEFAULT_N_MAX).ej(A7_EJ).ej2(A7_EJ2))?;
    let mass = 1.0 / correlation_length(&u0, Twist::ParityString)?.xi;
    let mut masses = Vec::new();
    for eta in A7_ETA {
        let ej1 = eta * A7_EJ2.powf(nu);
        let u = precise(&ModelParams::new(2, DEFAULT_N_MAX).ej(A7_EJ).ej1(ej1).ej2(A7_EJ2))?;
        masses.push(1.0 / correlation_length(&u, Twist::None)?.xi);
    }
    let ratios: Vec<String> = masses.iter().map(|m| format!("{:.3}", m / mass)).collect();
    let head = format!("beta2={b:.3} M={mass:.4} m/M=[{}]", ratios.join(","));
    match fit_meson_scaling(&A7_ETA, &masses, mass) {
        Ok(f) => Ok(outcome(
            b > 0.5 && (f.value - 2.0 / 3.0).abs() <= 0.15,
            format!("{head} alpha={:.3}±{:.3}", f.value, f.std_err),
        )),
        Err(e) => Ok(outcome(false, format!("{head}: {e}"))),
    }
}

// ---------------------------------------------------------------- A9

const A9_EJ: f64 = 1.3;
const A9_EJ2: f64 = 0.1;
const A9_CALIBRATION: [f64; 4] = [0.07, 0.085, 0.1, 0.12];

fn a9(_: &mut Cache) -> Result<Outcome> {
    let (fit, _) = vertex_beta_sq(A9_EJ, &A9_CALIBRATION)?;
    let b = fit.value;
    let u = precise(&ModelParams::new(2, DEFAULT_N_MAX).ej(A9_EJ).ej2(A9_EJ2))?;
    let xn = correlation_length(&u, Twist::None)?.xi;
    let xt = correlation_length(&u, Twist::ParityString)?.xi;
    let measured = xt / xn;
    let predicted = breather_mass_ratio(b, 1)?;
    let d = rel(measured, predicted);
    Ok(outcome(
        (b - 0.4).abs() <= 0.05 && d <= 0.15,
        format!(
            "beta2={b:.4} m_b/M measured={measured:.4} predicted={predicted:.4} dev={:.1}%",
            100.0 * d
        ),
    ))
}

// ---------------------------------------------------------------- A10

fn a10(_: &mut Cache) -> Result<Outcome> {
    let checks = [
        ("breather(0.5,1)", breather_mass_ratio(0.5, 1)?, 2.0),
        ("breather(0.4,1)", breather_mass_ratio(0.4, 1)?, 3f64.sqrt()),
        ("nu(0.5)", nu_exponent(0.5)?, 1.75),
        ("nu(0.4)", nu_exponent(0.4)?, 1.5),
        ("z1", airy_zero(1)?, 2.338107410459767),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, got, want) in checks {
        pass &= (got - want).abs() <= 1e-6;
        parts.push(format!("{name}={got:.7}"));
    }
    // meson binding ∝ σ^{2/3} and the deconfined limit
    let (m, s) = (0.3, 0.02);
    let b1 = meson_mass_ni2p(m, s, 1)? - 2.0 * m;
    let b2 = meson_mass_ni2p(m, 2.0 * s, 1)? - 2.0 * m;
    let doubling = b2 / b1;
    pass &= (doubling - 2f64.powf(2.0 / 3.0)).abs() <= 1e-6;
    let limit = meson_mass_ni2p(m, 1e-12, 1)?;
    pass &= (limit - 2.0 * m).abs() <= 1e-6;
    parts.push(format!("binding doubling={doubling:.7}"));
    Ok(outcome(pass, parts.join(" ")))
}

type Criterion = fn(&mut Cache) -> Result<Outcome>;

fn main() {
    let all: [(&str, Criterion); 10] = [
        ("A1", a1),
        ("A2", a2),
        ("A3", a3),
        ("A4", a4),
        ("A5", a5),
        ("A6", a6),
        ("A7", a7),
        ("A8", a8),
        ("A9", a9),
        ("A10", a10),
    ];
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| a.starts_with('A')).collect();
    let strict = std::env::var("QROTOR_ACCEPTANCE_STRICT").is_ok_and(|v| v != "0");
    let mut cache = Cache::default();
    let mut failed = 0;
    for (name, f) in all {
        if !wanted.is_empty() && !wanted.iter().any(|w| w == name) {
            continue;
        }
        let t = Instant::now();
        let (pass, detail) = match f(&mut cache) {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{name} {} ({:.0} s) {detail}",
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {failed} failed");
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
