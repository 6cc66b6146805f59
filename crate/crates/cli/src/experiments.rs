//! One pipeline per experiment kind.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use qrotor::{
    breather_mass_ratio, build_hamiltonian, connected_normalized, correlation_length, eta_parameter, fit_casimir,
    fit_meson_scaling, fit_power_law, fit_string_tension, fit_vertex_scaling, ground_state, idmrg_fixed_point,
    lowest_k, string_tension_lo, string_tension_on, two_point_series, vertex_expectation, Boundary, CorrelatorSeries,
    DmrgResult, DmrgSettings, FitResult, IdmrgSettings, ModelParams, Twist, UniformMps,
};
use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::manifest::{OutputDir, PointSummary, RunManifest};
use crate::CliError;

/// Tolerance used by the validate experiment.
pub const VALIDATE_TOL: f64 = 1e-8;

/// Runs `f(i)` for `i in 0..n` on up to `threads` workers; results keep their index order.
pub fn run_pool<T: Send>(threads: usize, n: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = f(i);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}

fn dmrg_settings(cfg: &ExperimentConfig, len: usize) -> DmrgSettings {
    let mut s = DmrgSettings::new(
        cfg.truncation,
        cfg.dmrg.max_sweeps,
        cfg.dmrg.e_tol_per_site * len as f64,
    );
    s.seed = cfg.seed;
    s
}

fn idmrg_settings(cfg: &ExperimentConfig) -> IdmrgSettings {
    let mut s = IdmrgSettings::default().chi_max(cfg.idmrg.chi_max);
    s.trunc.cutoff = cfg.truncation.cutoff;
    s.max_steps = cfg.idmrg.max_steps;
    s.e_tol = cfg.idmrg.e_tol;
    s.krylov.seed = cfg.seed;
    s
}

fn label(p: &ModelParams) -> String {
    format!("L{}_nmax{}_ej{}_ej1{}_ej2{}", p.len, p.n_max, p.ej, p.ej1, p.ej2)
}

fn summarize_dmrg(label: String, r: &DmrgResult, seconds: f64) -> PointSummary {
    PointSummary {
        label,
        ok: true,
        converged: r.report.converged,
        energy: Some(r.energy),
        iterations: r.report.sweeps,
        max_bond: r.report.max_bond,
        truncation_error: r.report.max_truncation_error,
        seconds,
        error: None,
    }
}

fn summarize_idmrg(label: String, u: &UniformMps, seconds: f64) -> PointSummary {
    PointSummary {
        label,
        ok: true,
        converged: u.converged,
        energy: Some(u.energy_density),
        iterations: u.steps,
        max_bond: u.outer_bond(),
        truncation_error: u.truncation_error,
        seconds,
        error: None,
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_else(|| "nan".into())
}

#[derive(Serialize)]
struct FitEntry {
    label: String,
    fit: Option<FitResult>,
    error: Option<String>,
}

fn fit_entry(label: String, r: qrotor::Result<FitResult>) -> FitEntry {
    match r {
        Ok(f) => FitEntry {
            label,
            fit: Some(f),
            error: None,
        },
        Err(e) => FitEntry {
            label,
            fit: None,
            error: Some(e.to_string()),
        },
    }
}

/// Measurements of an infinite-chain fixed point.
struct UniformPoint {
    params: ModelParams,
    state: UniformMps,
    xi_none: f64,
    xi_twist: f64,
    vertex: Option<f64>,
}

fn uniform_point(cfg: &ExperimentConfig, params: &ModelParams) -> qrotor::Result<UniformPoint> {
    let state = idmrg_fixed_point(params, &idmrg_settings(cfg))?;
    let xi_none = correlation_length(&state, Twist::None)?.xi;
    let xi_twist = correlation_length(&state, Twist::ParityString)?.xi;
    let vertex = vertex_expectation(&state).ok();
    Ok(UniformPoint {
        params: params.clone(),
        state,
        xi_none,
        xi_twist,
        vertex,
    })
}

fn uniform_scan(cfg: &ExperimentConfig, params: &[ModelParams]) -> Vec<(PointSummary, Option<UniformPoint>)> {
    run_pool(cfg.threads, params.len(), |i| {
        let t = Instant::now();
        let p = &params[i];
        match uniform_point(cfg, p) {
            Ok(u) => (summarize_idmrg(label(p), &u.state, t.elapsed().as_secs_f64()), Some(u)),
            Err(e) => (PointSummary::failed(label(p), &e, t.elapsed().as_secs_f64()), None),
        }
    })
}

fn finite_scan(cfg: &ExperimentConfig, params: &[ModelParams]) -> Vec<(PointSummary, Option<DmrgResult>)> {
    run_pool(cfg.threads, params.len(), |i| {
        let t = Instant::now();
        let p = &params[i];
        let r = build_hamiltonian(p).and_then(|h| ground_state(&h, &dmrg_settings(cfg, p.len)));
        match r {
            Ok(r) => (summarize_dmrg(label(p), &r, t.elapsed().as_secs_f64()), Some(r)),
            Err(e) => (PointSummary::failed(label(p), &e, t.elapsed().as_secs_f64()), None),
        }
    })
}

/// Executes the configured experiment and writes its artifacts and manifest.
pub fn run(cfg: &ExperimentConfig) -> Result<RunManifest, CliError> {
    cfg.validate()?;
    let root = cfg
        .out
        .clone()
        .unwrap_or_else(|| format!("runs/{}", cfg.kind().name()).into());
    let mut out = OutputDir::create(&root)?;
    let mut points = Vec::new();
    let result = match cfg.kind() {
        ExperimentKind::FreeBosonScan => free_boson_scan(cfg, &mut out, &mut points),
        ExperimentKind::SgScaling => sg_scaling(cfg, &mut out, &mut points),
        ExperimentKind::CorrelatorProfile => correlator_profile(cfg, &mut out, &mut points),
        ExperimentKind::StringTension => string_tension(cfg, &mut out, &mut points),
        ExperimentKind::MassScaling => mass_scaling(cfg, &mut out, &mut points),
        ExperimentKind::Validate => validate(cfg, &mut out, &mut points),
    };
    let failed = points.iter().filter(|p| !p.ok).count();
    let status = match &result {
        Err(e) => format!("failed: {e}"),
        Ok(()) if failed > 0 => format!("completed with {failed} failed point(s)"),
        Ok(()) => "completed".to_string(),
    };
    let manifest = out.finish(cfg, points, &status)?;
    result.map(|_| manifest)
}

fn free_boson_scan(
    cfg: &ExperimentConfig,
    out: &mut OutputDir,
    points: &mut Vec<PointSummary>,
) -> Result<(), CliError> {
    let params = cfg.model.points();
    let len = cfg.model.len;
    let j0 = len / 4;
    let r_max = len - 1 - j0;
    let [lo, hi] = cfg.windows.power_law.unwrap_or([4.0, (len / 3) as f64]);
    let runs = finite_scan(cfg, &params);
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for (p, (summary, r)) in params.iter().zip(runs) {
        points.push(summary);
        let Some(r) = r else { continue };
        let series = two_point_series(&r.mps, 1, j0, r_max).map_err(CliError::from)?;
        out.csv(&format!("correlator_{}.csv", label(p)), &series)?;
        let fit = fit_power_law(&series, lo, hi);
        if let Ok(f) = &fit {
            rows.push(vec![fmt(p.ej), fmt(f.value), fmt(f.std_err), fmt(f.quality)]);
        }
        fits.push(fit_entry(label(p), fit));
    }
    out.table("luttinger.csv", &["ej", "K", "K_err", "fit_quality"], &rows)?;
    let mut casimir = Vec::new();
    if !cfg.casimir.lengths.is_empty() {
        for ej in cfg.model.ej.values() {
            let ps: Vec<ModelParams> = cfg
                .casimir
                .lengths
                .iter()
                .map(|&l| cfg.model.at(ej, 0.0, 0.0).len(l))
                .collect();
            let runs = finite_scan(cfg, &ps);
            let mut ls = Vec::new();
            let mut es = Vec::new();
            for (p, (summary, r)) in ps.iter().zip(runs) {
                points.push(summary);
                if let Some(r) = r {
                    ls.push(p.len);
                    es.push(r.energy);
                }
            }
            casimir.push(fit_entry(format!("ej{ej}"), fit_casimir(&ls, &es, Boundary::Open)));
        }
    }
    out.json(
        "summary.json",
        &serde_json::json!({ "window": [lo, hi], "power_law": fits, "casimir": casimir }),
    )?;
    Ok(())
}

fn sg_scaling(cfg: &ExperimentConfig, out: &mut OutputDir, points: &mut Vec<PointSummary>) -> Result<(), CliError> {
    let params = cfg.model.points();
    let runs = uniform_scan(cfg, &params);
    let mut table = Vec::new();
    let mut measured = Vec::new();
    for (summary, u) in runs {
        points.push(summary);
        if let Some(u) = u {
            table.push(vec![
                fmt(u.params.ej),
                fmt(u.params.ej1),
                fmt(u.params.ej2),
                fmt(u.state.energy_density),
                opt(u.vertex),
                fmt(u.xi_none),
                fmt(u.xi_twist),
            ]);
            measured.push(u);
        }
    }
    out.table(
        "points.csv",
        &["ej", "ej1", "ej2", "energy_density", "vertex", "xi_none", "xi_twist"],
        &table,
    )?;
    let mut fits = Vec::new();
    for ej in cfg.model.ej.values() {
        for ej1 in cfg.model.ej1.values() {
            let group: Vec<&UniformPoint> = measured
                .iter()
                .filter(|u| u.params.ej == ej && u.params.ej1 == ej1 && u.vertex.is_some())
                .collect();
            let x: Vec<f64> = group.iter().map(|u| u.params.ej2).collect();
            let y: Vec<f64> = group.iter().map(|u| u.vertex.unwrap()).collect();
            if let Ok(s) = CorrelatorSeries::new("vertex expectation vs ej2", x.clone(), y.clone()) {
                let s = s
                    .with_meta("ej", ej)
                    .with_meta("ej1", ej1)
                    .with_meta("n_max", cfg.model.n_max);
                out.csv(&format!("vertex_ej{ej}_ej1{ej1}.csv"), &s)?;
            }
            let fit = fit_vertex_scaling(&x, &y);
            let ratios: Vec<f64> = group.iter().map(|u| u.xi_twist / u.xi_none).collect();
            let predicted = fit.as_ref().ok().and_then(|f| breather_mass_ratio(f.value, 1).ok());
            fits.push(serde_json::json!({
                "ej": ej,
                "ej1": ej1,
                "vertex_scaling": fit_entry(format!("ej{ej}"), fit),
                "mass_ratio_measured": ratios,
                "breather_ratio_predicted": predicted,
            }));
        }
    }
    out.json("summary.json", &fits)?;
    Ok(())
}

fn correlator_profile(
    cfg: &ExperimentConfig,
    out: &mut OutputDir,
    points: &mut Vec<PointSummary>,
) -> Result<(), CliError> {
    let params = cfg.model.points();
    let runs = uniform_scan(cfg, &params);
    let mut summary = Vec::new();
    for (s, u) in runs {
        points.push(s);
        let Some(u) = u else { continue };
        let name = label(&u.params);
        match connected_normalized(&u.state, cfg.profile.r_max) {
            Ok(series) => {
                let mu = 1.0 / u.xi_twist;
                let x: Vec<f64> = series.x.iter().map(|r| r * mu).collect();
                let mut scaled = CorrelatorSeries::new("connected normalized vs Mu r", x, series.y.clone())
                    .map_err(CliError::from)?;
                scaled.y_err = series.y_err.clone();
                scaled.metadata = series.metadata.clone();
                scaled = scaled.with_meta("xi_twist", u.xi_twist).with_meta("xi_none", u.xi_none);
                out.csv(&format!("profile_{name}.csv"), &scaled)?;
                let decay = qrotor::observables::exponential_decay_length(&series, u.xi_none, 4.0 * u.xi_none).ok();
                summary.push(serde_json::json!({
                    "label": name, "xi_none": u.xi_none, "xi_twist": u.xi_twist,
                    "vertex": u.vertex, "connected_decay_length": decay,
                }));
            }
            Err(e) => summary.push(serde_json::json!({ "label": name, "error": e.to_string() })),
        }
    }
    out.json("summary.json", &summary)?;
    Ok(())
}

fn string_tension(cfg: &ExperimentConfig, out: &mut OutputDir, points: &mut Vec<PointSummary>) -> Result<(), CliError> {
    let params = cfg.model.points();
    let len = cfg.model.len;
    let j = cfg.string_tension.j.unwrap_or(len / 4);
    let [lo, hi] = cfg.windows.string_tension.unwrap_or([4.0, 12.0]);
    let runs = finite_scan(cfg, &params);
    // leading-order comparison needs the vertex expectation at ej1 = 0
    let reference: Vec<ModelParams> = params.iter().map(|p| p.clone().ej1(0.0)).collect();
    let refs = if params.iter().any(|p| p.ej1 > 0.0) {
        uniform_scan(cfg, &reference)
    } else {
        Vec::new()
    };
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (i, (p, (s, r))) in params.iter().zip(runs).enumerate() {
        points.push(s);
        let Some(r) = r else { continue };
        let curve = match string_tension_on(p, &r.mps, r.energy, j, &cfg.string_tension.separations) {
            Ok(c) => c,
            Err(e) => {
                summary.push(serde_json::json!({ "label": label(p), "error": e.to_string() }));
                continue;
            }
        };
        out.csv(&format!("tension_{}.csv", label(p)), &curve.series)?;
        let fit = fit_string_tension(&curve.series, lo, hi);
        let vertex = refs.get(i).and_then(|(_, u)| u.as_ref()).and_then(|u| u.vertex);
        let sigma_lo = vertex.and_then(|v| string_tension_lo(v, p.ej1).ok());
        let t = &curve.series.y;
        let mean = t.iter().sum::<f64>() / t.len() as f64;
        let spread = t.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max);
        rows.push(vec![
            fmt(p.ej),
            fmt(p.ej1),
            fmt(p.ej2),
            opt(fit.as_ref().ok().map(|f| f.value)),
            opt(fit.as_ref().ok().map(|f| f.std_err)),
            opt(fit.as_ref().ok().map(|f| f.quality)),
            opt(sigma_lo),
            fmt(spread),
        ]);
        summary.push(serde_json::json!({
            "label": label(p), "j": j, "fit": fit_entry(label(p), fit), "vertex": vertex,
            "sigma_lo": sigma_lo, "max_deviation_from_mean": spread,
        }));
    }
    for (s, _) in refs {
        points.push(s);
    }
    out.table(
        "sigma.csv",
        &[
            "ej",
            "ej1",
            "ej2",
            "sigma",
            "sigma_err",
            "fit_quality",
            "sigma_lo",
            "max_dev_T",
        ],
        &rows,
    )?;
    out.json("summary.json", &summary)?;
    Ok(())
}

fn mass_scaling(cfg: &ExperimentConfig, out: &mut OutputDir, points: &mut Vec<PointSummary>) -> Result<(), CliError> {
    let ej = cfg.model.ej.values()[0];
    let ej2 = cfg.model.ej2.values()[0];
    let mut calibration = None;
    let beta_sq = match cfg.mass.beta_sq {
        Some(b) => b,
        None => {
            let ps: Vec<ModelParams> = cfg
                .mass
                .calibration_ej2
                .iter()
                .map(|&e2| cfg.model.at(ej, 0.0, e2))
                .collect();
            let runs = uniform_scan(cfg, &ps);
            let mut x = Vec::new();
            let mut y = Vec::new();
            for (s, u) in runs {
                points.push(s);
                if let Some(v) = u.and_then(|u| u.vertex.map(|v| (u.params.ej2, v))) {
                    x.push(v.0);
                    y.push(v.1);
                }
            }
            let f = fit_vertex_scaling(&x, &y)?;
            let b = f.value;
            calibration = Some(f);
            b
        }
    };
    let soliton = uniform_scan(cfg, &[cfg.model.at(ej, 0.0, ej2)]).pop().unwrap();
    points.push(soliton.0);
    let Some(sol) = soliton.1 else {
        return Err(CliError::Run("soliton-mass run at ej1 = 0 failed".into()));
    };
    let mass = 1.0 / sol.xi_twist;
    let ej1s: Vec<f64> = cfg.model.ej1.values().into_iter().filter(|v| *v > 0.0).collect();
    let ps: Vec<ModelParams> = ej1s.iter().map(|&e1| cfg.model.at(ej, e1, ej2)).collect();
    let runs = uniform_scan(cfg, &ps);
    let mut eta = Vec::new();
    let mut masses = Vec::new();
    let mut rows = Vec::new();
    for (s, u) in runs {
        points.push(s);
        let Some(u) = u else { continue };
        let e = eta_parameter(u.params.ej1, ej2, beta_sq)?;
        let m = 1.0 / u.xi_none;
        rows.push(vec![
            fmt(u.params.ej1),
            fmt(e),
            fmt(m / mass),
            fmt((m - 2.0 * mass) / mass),
        ]);
        eta.push(e);
        masses.push(m);
    }
    out.table("mesons.csv", &["ej1", "eta", "m_over_M", "binding_over_M"], &rows)?;
    let fit = fit_meson_scaling(&eta, &masses, mass);
    out.json(
        "summary.json",
        &serde_json::json!({
            "ej": ej, "ej2": ej2, "beta_sq": beta_sq, "beta_sq_calibration": calibration,
            "soliton_mass": mass, "xi_twist_at_eta0": sol.xi_twist,
            "meson_scaling": fit_entry("alpha".into(), fit),
        }),
    )?;
    Ok(())
}

#[derive(Serialize)]
struct ValidationEntry {
    params: ModelParams,
    dmrg_energy: f64,
    ed_energy: f64,
    relative_error: f64,
}

fn validate(cfg: &ExperimentConfig, out: &mut OutputDir, points: &mut Vec<PointSummary>) -> Result<(), CliError> {
    let params = cfg.model.points();
    let runs = finite_scan(cfg, &params);
    let mut entries = Vec::new();
    for (p, (s, r)) in params.iter().zip(runs) {
        points.push(s);
        let Some(r) = r else { continue };
        let exact = lowest_k(p, 1)?.values[0];
        let rel = (r.energy - exact).abs() / exact.abs().max(1e-300);
        entries.push(ValidationEntry {
            params: p.clone(),
            dmrg_energy: r.energy,
            ed_energy: exact,
            relative_error: rel,
        });
    }
    let worst = entries.iter().map(|e| e.relative_error).fold(0.0, f64::max);
    let pass = entries.len() == params.len() && worst <= VALIDATE_TOL;
    out.json(
        "validate.json",
        &serde_json::json!({ "tolerance": VALIDATE_TOL, "max_relative_error": worst, "pass": pass, "entries": entries }),
    )?;
    Ok(())
}
