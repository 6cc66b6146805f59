//! Correlators of vertex operators and the soliton-pair energy profile.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::dmrg::{energy_expectation, ground_state, DmrgSettings};
use crate::error::{Error, Result};
use crate::idmrg::{correlation_length, Twist, UniformMps};
use crate::local::{phase_lower_operator, phase_raise_operator, LocalBasis, LocalOperator};
use crate::model::ModelParams;
use crate::mpo::{build_hamiltonian, build_soliton_pair, LorentzSpin, ProductOperator};
use crate::mps::{transfer, Mps};

/// A sampled function of separation, `y(x) ± y_err`.
#[derive(Clone, Debug, Serialize)]
pub struct CorrelatorSeries {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub y_err: Vec<f64>,
    /// Free-form `key = value` pairs written as comment lines.
    pub metadata: Vec<(String, String)>,
}

impl CorrelatorSeries {
    pub fn new(label: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Shape(format!("{} separations but {} values", x.len(), y.len())));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Shape("separations must be strictly increasing".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("non-finite correlator value".into()));
        }
        let n = x.len();
        Ok(Self {
            label: label.into(),
            x,
            y,
            y_err: vec![0.0; n],
            metadata: Vec::new(),
        })
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.metadata.push((key.into(), value.to_string()));
        self
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Points with `lo <= x <= hi`.
    pub fn window(&self, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
        self.x
            .iter()
            .zip(&self.y)
            .filter(|(x, _)| **x >= lo && **x <= hi)
            .map(|(x, y)| (*x, *y))
            .unzip()
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "# series = {}", self.label)?;
        for (k, v) in &self.metadata {
            writeln!(w, "# {k} = {v}")?;
        }
        writeln!(w, "x,y,y_err")?;
        for i in 0..self.len() {
            writeln!(w, "{},{:.17e},{:.17e}", self.x[i], self.y[i], self.y_err[i])?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

fn vertex_pair(n_max: usize, a: usize) -> Result<(LocalOperator, LocalOperator)> {
    Ok((phase_raise_operator(n_max, a)?, phase_lower_operator(n_max, a)?))
}

/// `⟨e^{iaφ_j} e^{−iaφ_k}⟩` on a finite chain (0-based, `j < k`).
pub fn two_point(psi: &Mps, a: usize, j: usize, k: usize) -> Result<f64> {
    if j >= k {
        return Err(Error::UnorderedSites(k));
    }
    let n_max = (psi.phys_dim() - 1) / 2;
    let (up, down) = vertex_pair(n_max, a)?;
    let op = ProductOperator::new(psi.len(), LocalBasis::new(n_max)?, vec![(j, up), (k, down)])?;
    psi.expectation(&op)
}

/// `⟨e^{iaφ_j} e^{−iaφ_{j+r}}⟩` for `r = 1..=r_max` in one pass.
pub fn two_point_series(psi: &Mps, a: usize, j: usize, r_max: usize) -> Result<CorrelatorSeries> {
    if j + r_max >= psi.len() {
        return Err(Error::SiteOutOfRange {
            site: j + r_max,
            len: psi.len(),
        });
    }
    let n_max = (psi.phys_dim() - 1) / 2;
    let (up, down) = vertex_pair(n_max, a)?;
    let norm2 = psi.norm().powi(2);
    let mut env = psi.left_env_identity(j);
    env = transfer(&env, psi.tensor(j), psi.tensor(j), Some(&up));
    let mut ys = Vec::with_capacity(r_max);
    for r in 1..=r_max {
        let k = j + r;
        let closed = transfer(&env, psi.tensor(k), psi.tensor(k), Some(&down));
        ys.push(psi.close_right(&closed, k) / norm2);
        env = transfer(&env, psi.tensor(k), psi.tensor(k), None);
    }
    let xs = (1..=r_max).map(|r| r as f64).collect();
    Ok(
        CorrelatorSeries::new(format!("<e^(i{a}phi_j) e^(-i{a}phi_(j+r))>"), xs, ys)?
            .with_meta("j", j)
            .with_meta("len", psi.len())
            .with_meta("chi", psi.max_bond()),
    )
}

/// Correlator of the uniform state starting at cell position `start`.
pub fn uniform_two_point(u: &UniformMps, a: usize, start: usize, r_max: usize) -> Result<Vec<f64>> {
    let (up, down) = vertex_pair(u.params.n_max, a)?;
    let (left, right) = u.fixed_points()?;
    let cell = u.cell();
    let mut env = left;
    for pos in 0..start % 2 {
        env = transfer(&env, &cell[pos], &cell[pos], None);
    }
    let p0 = start % 2;
    env = transfer(&env, &cell[p0], &cell[p0], Some(&up));
    let close = |e: &[f64], pos: usize| -> f64 {
        // carry to the end of the cell and contract with the right fixed point
        let mut e = e.to_vec();
        for q in pos + 1..2 {
            e = transfer(&e, &cell[q], &cell[q], None);
        }
        e.iter().zip(&right).map(|(x, y)| x * y).sum()
    };
    let mut out = Vec::with_capacity(r_max);
    for r in 1..=r_max {
        let pos = (p0 + r) % 2;
        let closed = transfer(&env, &cell[pos], &cell[pos], Some(&down));
        out.push(close(&closed, pos));
        env = transfer(&env, &cell[pos], &cell[pos], None);
    }
    Ok(out)
}

/// Correlator averaged over both positions in the unit cell.
pub fn uniform_correlator(u: &UniformMps, a: usize, r_max: usize) -> Result<CorrelatorSeries> {
    let c0 = uniform_two_point(u, a, 0, r_max)?;
    let c1 = uniform_two_point(u, a, 1, r_max)?;
    let y: Vec<f64> = c0.iter().zip(&c1).map(|(x, y)| 0.5 * (x + y)).collect();
    let err: Vec<f64> = c0.iter().zip(&c1).map(|(x, y)| 0.5 * (x - y).abs()).collect();
    let mut s = CorrelatorSeries::new(
        format!("<e^(i{a}phi_j) e^(-i{a}phi_(j+r))>"),
        (1..=r_max).map(|r| r as f64).collect(),
        y,
    )?
    .with_meta("chi", u.outer_bond())
    .with_meta("ej", u.params.ej)
    .with_meta("ej1", u.params.ej1)
    .with_meta("ej2", u.params.ej2)
    .with_meta("n_max", u.params.n_max);
    s.y_err = err;
    Ok(s)
}

/// Relative drift allowed over a decade of separations.
pub const PLATEAU_DRIFT: f64 = 1e-3;

/// `⟨e^{iφ}⟩` as the square root of the long-distance plateau of
/// `⟨e^{iφ_j} e^{−iφ_k}⟩`.
pub fn vertex_expectation(u: &UniformMps) -> Result<f64> {
    let p = &u.params;
    if p.ej1 == 0.0 && p.ej2 == 0.0 {
        return Err(Error::NoPlateau(
            "no phase-pinning term (ej1 = ej2 = 0): the phase is critical and correlations decay as a power law".into(),
        ));
    }
    let xi = correlation_length(u, Twist::None)?.xi;
    let r0 = ((10.0 * xi).ceil() as usize).clamp(8, 20_000);
    let c = uniform_correlator(u, 1, 10 * r0)?;
    let tail = *c.y.last().unwrap();
    if tail.abs() < 1e-10 {
        return Ok(0.0);
    }
    let drift = c.y[r0 - 1..].iter().map(|y| (y - tail).abs()).fold(0.0, f64::max) / tail.abs();
    if drift > PLATEAU_DRIFT || tail < 0.0 {
        return Err(Error::NoPlateau(format!(
            "correlator drifts by {drift:.2e} over r in [{r0}, {}]; the state is likely critical or unconverged",
            10 * r0
        )));
    }
    Ok(tail.sqrt())
}

/// `(C(r) − v²) / v²` with `v` the vertex expectation.
pub fn connected_normalized(u: &UniformMps, r_max: usize) -> Result<CorrelatorSeries> {
    let v = vertex_expectation(u)?;
    if v <= 0.0 {
        return Err(Error::Domain {
            what: "connected correlator",
            reason: "vertex expectation vanishes".into(),
        });
    }
    let v2 = v * v;
    let c = uniform_correlator(u, 1, r_max)?;
    let y = c.y.iter().map(|y| (y - v2) / v2).collect();
    let mut s = CorrelatorSeries::new("connected normalized vertex correlator", c.x, y)?.with_meta("vertex", v);
    s.metadata.extend(c.metadata);
    s.y_err = c.y_err.iter().map(|e| e / v2).collect();
    Ok(s)
}

/// Decay rate of `|f(r)|` from a straight-line fit of `ln|f|` over a window.
pub fn exponential_decay_length(series: &CorrelatorSeries, lo: f64, hi: f64) -> Result<f64> {
    let (x, y) = series.window(lo, hi);
    if x.len() < 4 {
        return Err(Error::Fit(format!("only {} points in [{lo}, {hi}]", x.len())));
    }
    if y.contains(&0.0) {
        return Err(Error::Fit("zero value in decay window".into()));
    }
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    let fit = crate::fit::linear_fit(&x, &ly)?;
    if fit.slope >= 0.0 {
        return Err(Error::Fit("correlator does not decay".into()));
    }
    Ok(-1.0 / fit.slope)
}

/// Soliton-pair energies `T(d) = ⟨O† H O⟩ − E₀` on the DMRG ground state.
#[derive(Clone, Debug, Serialize)]
pub struct StringTensionCurve {
    pub ground_energy: f64,
    pub series: CorrelatorSeries,
    pub pair_norms: Vec<f64>,
}

pub fn string_tension_curve(
    params: &ModelParams,
    j: usize,
    separations: &[usize],
    settings: &DmrgSettings,
) -> Result<StringTensionCurve> {
    let gs = ground_state(&build_hamiltonian(params)?, settings)?;
    string_tension_on(params, &gs.mps, gs.energy, j, separations)
}

/// As [`string_tension_curve`] with a precomputed ground state.
pub fn string_tension_on(
    params: &ModelParams,
    psi: &Mps,
    e0: f64,
    j: usize,
    separations: &[usize],
) -> Result<StringTensionCurve> {
    if params.ej2 <= 0.0 {
        return Err(Error::InvalidParameter {
            field: "ej2",
            reason: "soliton pairs need degenerate vacua (ej2 > 0)".into(),
        });
    }
    let len = params.len;
    let margin = len / 4;
    let d_max = separations.iter().copied().max().unwrap_or(0);
    if j < margin || j + d_max + margin > len {
        return Err(Error::InvalidParameter {
            field: "j",
            reason: format!(
                "pair [{j}, {}] closer than {margin} sites to an edge of a {len}-site chain",
                j + d_max
            ),
        });
    }
    let h = build_hamiltonian(params)?;
    let mut ds = separations.to_vec();
    ds.sort_unstable();
    ds.dedup();
    let mut t = Vec::with_capacity(ds.len());
    let mut norms = Vec::with_capacity(ds.len());
    for &d in &ds {
        let op = build_soliton_pair(len, j, d, LorentzSpin::Zero, 1, params.n_max)?;
        let (phi, n) = psi.apply_product_operator(&op)?;
        t.push(energy_expectation(&phi, &h)? - e0);
        norms.push(n);
    }
    let series = CorrelatorSeries::new("T(d)", ds.iter().map(|&d| d as f64).collect(), t)?
        .with_meta("j", j)
        .with_meta("len", len)
        .with_meta("ej", params.ej)
        .with_meta("ej1", params.ej1)
        .with_meta("ej2", params.ej2)
        .with_meta("n_max", params.n_max)
        .with_meta("ground_energy", e0);
    Ok(StringTensionCurve {
        ground_energy: e0,
        series,
        pair_norms: norms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ed::{ed_expectation, lowest_k};
    use crate::linalg::TruncationSpec;

    #[test]
    fn csv_layout() {
        let s = CorrelatorSeries::new("c", vec![1.0, 2.0], vec![0.5, 0.25])
            .unwrap()
            .with_meta("ej", 2.0);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# series = c");
        assert_eq!(lines[1], "# ej = 2");
        assert_eq!(lines[2], "x,y,y_err");
        assert_eq!(lines.len(), 5);
        assert!(CorrelatorSeries::new("c", vec![2.0, 1.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn charge_product_state_has_no_phase_correlations() {
        let psi = Mps::product_state(LocalBasis::new(2).unwrap(), &[0, 1, -1, 0, 2]).unwrap();
        assert_eq!(two_point(&psi, 1, 0, 3).unwrap(), 0.0);
        assert!(two_point(&psi, 1, 3, 3).is_err());
    }

    #[test]
    fn finite_correlator_matches_ed() {
        let params = ModelParams::new(6, 2).ej(1.5);
        let mut settings = DmrgSettings::new(TruncationSpec::new(125, 0.0).unwrap(), 20, 1e-13);
        settings.krylov.tol = 1e-13;
        let gs = ground_state(&build_hamiltonian(&params).unwrap(), &settings).unwrap();
        let spec = lowest_k(&params, 1).unwrap();
        let v = &spec.vectors[0];
        let series = two_point_series(&gs.mps, 1, 1, 4).unwrap();
        let basis = LocalBasis::new(2).unwrap();
        let mut prev = f64::INFINITY;
        for (r, y) in series.y.iter().enumerate() {
            let k = 2 + r;
            let (up, down) = vertex_pair(2, 1).unwrap();
            let op = ProductOperator::new(6, basis, vec![(1, up), (k, down)]).unwrap();
            let exact = ed_expectation(v, &op).unwrap();
            assert!((y - exact).abs() < 1e-10, "r = {}: {y} vs {exact}", r + 1);
            assert!((two_point(&gs.mps, 1, 1, k).unwrap() - exact).abs() < 1e-10);
            assert!(exact < prev);
            prev = exact;
        }
    }
}
