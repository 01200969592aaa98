//! Continuous-time quantum walks and their time-averaged observables.
//!
//! States are propagated exactly through the eigenbasis. Running time
//! averages `(1/t) int_0^t <O>(t') dt'` are evaluated in closed form:
//! for `psi(t) = sum_n c_n e^{-i E_n t} phi_n` with real eigenvectors,
//!
//! ```text
//! (1/t) int_0^t <psi|O|psi> = sum_{n,m} c_n c_m O_nm sinc((E_n - E_m) t)
//! ```
//!
//! so no quadrature error enters. A cumulative trapezoid rule on the
//! sampled instantaneous values is kept as a cross-check.

use std::io::Write;

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::model::{build_gssh, Boundary, ModelParams};
use crate::numerics::{fmt_f64, pairwise_sum, running_average_trapezoid};
use crate::spectral::{eigensolve, Spectrum};

/// Frequencies below this multiple of `g` count as degenerate.
pub const DEGENERACY_CUTOFF: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeAveraging {
    /// Closed-form spectral evaluation (exact).
    #[default]
    Spectral,
    /// Cumulative trapezoid rule on the sampling grid.
    Trapezoid,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionReference {
    /// Cell positions measured from the initial excitation's cell.
    #[default]
    Relative,
    /// Raw cell indices.
    Absolute,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkOptions {
    pub averaging: TimeAveraging,
    pub position: PositionReference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkInstance {
    pub params: ModelParams,
    /// Initial site, 1-based.
    pub l0: usize,
    pub times: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct WalkResult {
    /// `density[k][site] = |<site|psi(t_k)>|^2`.
    pub density: Vec<Vec<f64>>,
    /// `2 <psi|Gamma (X - x_0)|psi>` at every sampled time.
    pub inst_chiral: Vec<f64>,
    /// `|<l0|psi>|^2` at every sampled time.
    pub inst_survival: Vec<f64>,
    /// Mean chiral displacement `C_t`.
    pub chiral_disp: Vec<f64>,
    /// Time-averaged survival probability `S_t`.
    pub survival: Vec<f64>,
    pub instance: WalkInstance,
}

/// The stored `C_t` series.
pub fn chiral_displacement_series(result: &WalkResult) -> &[f64] {
    &result.chiral_disp
}

/// The stored `S_t` series.
pub fn survival_series(result: &WalkResult) -> &[f64] {
    &result.survival
}

/// `C_t` recomputed from the sampled density by the trapezoid rule.
pub fn chiral_displacement_trapezoid(result: &WalkResult) -> Vec<f64> {
    running_average_trapezoid(&result.instance.times, &result.inst_chiral)
}

/// `S_t` recomputed from the sampled density by the trapezoid rule.
pub fn survival_trapezoid(result: &WalkResult) -> Vec<f64> {
    running_average_trapezoid(&result.instance.times, &result.inst_survival)
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(invalid("times", "time grid is empty"));
    }
    if times[0] < 0.0 || !times.iter().all(|t| t.is_finite()) {
        return Err(invalid("times", "times must be finite and non-negative"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("times", "times must be strictly increasing"));
    }
    Ok(())
}

fn walk_basis(s: &Spectrum, l0: usize) -> Result<(&Mat<f64>, Vec<f64>)> {
    if s.boundary != Boundary::Open {
        return Err(Error::Boundary { required: "open" });
    }
    let v = s.states.as_real().ok_or_else(|| Error::InvalidInput("walks require a real chain spectrum".into()))?;
    if l0 == 0 || l0 > s.len() {
        return Err(invalid("l0", format!("initial site {l0} outside 1..={}", s.len())));
    }
    let c = (0..s.len()).map(|n| v[(l0 - 1, n)]).collect();
    Ok((v, c))
}

/// Diagonal of `Gamma (X - x_0)` for a walk started at `l0`.
fn chiral_position(s: &Spectrum, l0: usize, position: PositionReference) -> Vec<f64> {
    let x0 = match position {
        PositionReference::Relative => s.cell_index[l0 - 1] as f64,
        PositionReference::Absolute => 0.0,
    };
    s.cell_index.iter().zip(&s.chiral_sign).map(|(&x, &g)| f64::from(g) * (x as f64 - x0)).collect()
}

/// `sin(w t)/(w t)`, with the degenerate and `t = inf` limits.
fn sinc(omega: f64, t: f64, cutoff: f64) -> f64 {
    if omega.abs() < cutoff || t == 0.0 {
        1.0
    } else if t.is_infinite() {
        0.0
    } else {
        let x = omega * t;
        x.sin() / x
    }
}

/// `sum_{n,m} A_nm sinc((E_n - E_m) t)` for symmetric `A`.
fn spectral_average(energies: &[f64], a: &Mat<f64>, t: f64, cutoff: f64) -> f64 {
    linalg::clear_upper_simd();
    let l = energies.len();
    let mut rows = Vec::with_capacity(l);
    for n in 0..l {
        let mut off = 0.0;
        for m in n + 1..l {
            off += a[(n, m)] * sinc(energies[n] - energies[m], t, cutoff);
        }
        rows.push(a[(n, n)] + 2.0 * off);
    }
    pairwise_sum(&rows)
}

/// Matrix `A_nm = c_n c_m <phi_n|O|phi_m>` of a diagonal observable `o`.
fn observable_weights(v: &Mat<f64>, c: &[f64], o: &[f64]) -> Mat<f64> {
    let l = c.len();
    let ov = Mat::from_fn(l, l, |i, n| o[i] * v[(i, n)]);
    let onm = v.transpose() * &ov;
    Mat::from_fn(l, l, |n, m| c[n] * c[m] * onm[(n, m)])
}

fn survival_weights(c: &[f64]) -> Mat<f64> {
    let l = c.len();
    Mat::from_fn(l, l, |n, m| c[n] * c[n] * c[m] * c[m])
}

/// Time-averaged survival `S_t(l0)` from the spectral expansion; pass
/// `f64::INFINITY` for the long-time limit `sum_n |<l0|phi_n>|^4`.
pub fn time_avg_survival_spectral(s: &Spectrum, l0: usize, t: f64) -> Result<f64> {
    let (_, c) = walk_basis(s, l0)?;
    if t.is_infinite() {
        return Ok(pairwise_sum(&c.iter().map(|x| x.powi(4)).collect::<Vec<_>>()));
    }
    Ok(spectral_average(&s.energies, &survival_weights(&c), t, DEGENERACY_CUTOFF * s.energy_unit))
}

/// Mean chiral displacement `C_t(l0)` from the spectral expansion; accepts
/// `f64::INFINITY`.
pub fn time_avg_chiral_spectral(s: &Spectrum, l0: usize, t: f64, position: PositionReference) -> Result<f64> {
    let (v, c) = walk_basis(s, l0)?;
    let a = observable_weights(v, &c, &chiral_position(s, l0, position));
    Ok(2.0 * spectral_average(&s.energies, &a, t, DEGENERACY_CUTOFF * s.energy_unit))
}

/// Propagate `|l0>` through a precomputed open-chain spectrum.
pub fn evolve_spectrum(s: &Spectrum, l0: usize, times: &[f64], options: &WalkOptions) -> Result<WalkResult> {
    check_times(times)?;
    let (v, c) = walk_basis(s, l0)?;
    let params = s.params.clone().ok_or_else(|| Error::InvalidInput("walks require a gSSH chain spectrum".into()))?;
    let l = s.len();
    let nt = times.len();
    linalg::clear_upper_simd();
    let cos_part = Mat::from_fn(l, nt, |n, k| c[n] * (s.energies[n] * times[k]).cos());
    let sin_part = Mat::from_fn(l, nt, |n, k| c[n] * (s.energies[n] * times[k]).sin());
    let re = v * &cos_part;
    let im = v * &sin_part;
    let o = chiral_position(s, l0, options.position);

    let mut density = Vec::with_capacity(nt);
    let mut inst_chiral = Vec::with_capacity(nt);
    let mut inst_survival = Vec::with_capacity(nt);
    for k in 0..nt {
        let p: Vec<f64> = (0..l).map(|i| re[(i, k)].powi(2) + im[(i, k)].powi(2)).collect();
        let weighted: Vec<f64> = p.iter().zip(&o).map(|(a, b)| a * b).collect();
        inst_chiral.push(2.0 * pairwise_sum(&weighted));
        inst_survival.push(p[l0 - 1]);
        density.push(p);
    }

    let (chiral_disp, survival) = match options.averaging {
        TimeAveraging::Spectral => {
            let cutoff = DEGENERACY_CUTOFF * s.energy_unit;
            let a_c = observable_weights(v, &c, &o);
            let a_s = survival_weights(&c);
            (
                times.iter().map(|&t| 2.0 * spectral_average(&s.energies, &a_c, t, cutoff)).collect(),
                times.iter().map(|&t| spectral_average(&s.energies, &a_s, t, cutoff)).collect(),
            )
        }
        TimeAveraging::Trapezoid => {
            (running_average_trapezoid(times, &inst_chiral), running_average_trapezoid(times, &inst_survival))
        }
    };

    Ok(WalkResult {
        density,
        inst_chiral,
        inst_survival,
        chiral_disp,
        survival,
        instance: WalkInstance { params, l0, times: times.to_vec() },
    })
}

/// Build, diagonalize and evolve one walk instance.
pub fn evolve(instance: &WalkInstance, options: &WalkOptions) -> Result<WalkResult> {
    if instance.params.boundary != Boundary::Open {
        return Err(Error::Boundary { required: "open" });
    }
    let s = eigensolve(&build_gssh(&instance.params)?)?;
    evolve_spectrum(&s, instance.l0, &instance.times, options)
}

/// Every `(delta, l0)` instance in delta-major order; deltas are processed
/// concurrently on the current rayon pool.
pub fn run_instances(
    params: &ModelParams,
    deltas: &[f64],
    l0s: &[usize],
    times: &[f64],
    options: &WalkOptions,
) -> Result<Vec<WalkResult>> {
    if deltas.is_empty() || l0s.is_empty() {
        return Err(Error::InvalidInput("need at least one delta and one l0".into()));
    }
    if params.boundary != Boundary::Open {
        return Err(Error::Boundary { required: "open" });
    }
    check_times(times)?;
    let per_delta: Vec<Result<Vec<WalkResult>>> = deltas
        .par_iter()
        .map(|&delta| {
            let s = eigensolve(&build_gssh(&params.clone().with_delta(delta))?)?;
            l0s.iter().map(|&l0| evolve_spectrum(&s, l0, times, options)).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(deltas.len() * l0s.len());
    for r in per_delta {
        out.extend(r?);
    }
    Ok(out)
}

/// Mean and standard error of the mean (n - 1 normalization; 0 for one sample).
pub fn mean_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mu = pairwise_sum(values) / n;
    if values.len() < 2 {
        return (mu, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|x| (x - mu).powi(2)).collect();
    (mu, (pairwise_sum(&sq) / (n - 1.0) / n).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceAverage {
    pub times: Vec<f64>,
    pub c_bar: Vec<f64>,
    pub s_bar: Vec<f64>,
    pub sem_c: Vec<f64>,
    pub sem_s: Vec<f64>,
    pub n_disorder: usize,
    pub n_initial: usize,
}

impl InstanceAverage {
    /// Average walk results that share a time grid.
    pub fn from_results(results: &[WalkResult], n_disorder: usize, n_initial: usize) -> Result<Self> {
        let first = results.first().ok_or_else(|| Error::InvalidInput("no walk results".into()))?;
        let times = first.instance.times.clone();
        if results.iter().any(|r| r.instance.times != times) {
            return Err(Error::InvalidInput("walk results use different time grids".into()));
        }
        let mut out = Self {
            times,
            c_bar: Vec::new(),
            s_bar: Vec::new(),
            sem_c: Vec::new(),
            sem_s: Vec::new(),
            n_disorder,
            n_initial,
        };
        for k in 0..out.times.len() {
            let (c, sc) = mean_sem(&results.iter().map(|r| r.chiral_disp[k]).collect::<Vec<_>>());
            let (s, ss) = mean_sem(&results.iter().map(|r| r.survival[k]).collect::<Vec<_>>());
            out.c_bar.push(c);
            out.s_bar.push(s);
            out.sem_c.push(sc);
            out.sem_s.push(ss);
        }
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,c_bar,s_bar,sem_c,sem_s")?;
        for k in 0..self.times.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                fmt_f64(self.times[k]),
                fmt_f64(self.c_bar[k]),
                fmt_f64(self.s_bar[k]),
                fmt_f64(self.sem_c[k]),
                fmt_f64(self.sem_s[k])
            )?;
        }
        Ok(())
    }
}

/// Instance-averaged `C_t` and `S_t` over the `deltas x l0s` grid.
pub fn average_instances(
    params: &ModelParams,
    deltas: &[f64],
    l0s: &[usize],
    times: &[f64],
    options: &WalkOptions,
) -> Result<InstanceAverage> {
    let results = run_instances(params, deltas, l0s, times, options)?;
    InstanceAverage::from_results(&results, deltas.len(), l0s.len())
}

/// Instance averages at a single horizon `t` (finite or infinite).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonAverage {
    pub t: f64,
    pub c_bar: f64,
    pub s_bar: f64,
    pub sem_c: f64,
    pub sem_s: f64,
}

pub fn average_at_horizon(
    params: &ModelParams,
    deltas: &[f64],
    l0s: &[usize],
    t: f64,
    position: PositionReference,
) -> Result<HorizonAverage> {
    if deltas.is_empty() || l0s.is_empty() {
        return Err(Error::InvalidInput("need at least one delta and one l0".into()));
    }
    if !(t >= 0.0) {
        return Err(invalid("t", format!("horizon must be non-negative, got {t}")));
    }
    let per_delta: Vec<Result<Vec<(f64, f64)>>> = deltas
        .par_iter()
        .map(|&delta| {
            let s = eigensolve(&build_gssh(&params.clone().with_delta(delta))?)?;
            l0s.iter()
                .map(|&l0| Ok((time_avg_chiral_spectral(&s, l0, t, position)?, time_avg_survival_spectral(&s, l0, t)?)))
                .collect()
        })
        .collect();
    let mut cs = Vec::new();
    let mut ss = Vec::new();
    for r in per_delta {
        for (c, s) in r? {
            cs.push(c);
            ss.push(s);
        }
    }
    let (c_bar, sem_c) = mean_sem(&cs);
    let (s_bar, sem_s) = mean_sem(&ss);
    Ok(HorizonAverage { t, c_bar, s_bar, sem_c, sem_s })
}

/// Bhattacharyya overlap `sum_x sqrt(p_x q_x)` of two distributions.
pub fn statistical_fidelity(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::InvalidInput(format!("length mismatch {} vs {}", p.len(), q.len())));
    }
    for (name, d) in [("p", p), ("q", q)] {
        if d.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidInput(format!("{name} has negative or NaN entries")));
        }
        let total = pairwise_sum(d);
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("{name} sums to {total}, not 1")));
        }
    }
    let terms: Vec<f64> = p.iter().zip(q).map(|(a, b)| (a * b).sqrt()).collect();
    Ok(pairwise_sum(&terms).min(1.0))
}

/// Density matrix CSV: one row per site, one column per sampled time.
pub fn write_density_csv<W: Write>(result: &WalkResult, mut out: W) -> Result<()> {
    let times = &result.instance.times;
    let header: Vec<String> = times.iter().map(|t| format!("t={}", fmt_f64(*t))).collect();
    writeln!(out, "site,{}", header.join(","))?;
    let l = result.density.first().map_or(0, Vec::len);
    for i in 0..l {
        let row: Vec<String> = result.density.iter().map(|p| fmt_f64(p[i])).collect();
        writeln!(out, "{},{}", i + 1, row.join(","))?;
    }
    Ok(())
}

/// Per-instance `(t, C_t, S_t)` CSV.
pub fn write_series_csv<W: Write>(result: &WalkResult, mut out: W) -> Result<()> {
    writeln!(out, "t,c_t,s_t")?;
    for (k, t) in result.instance.times.iter().enumerate() {
        writeln!(out, "{},{},{}", fmt_f64(*t), fmt_f64(result.chiral_disp[k]), fmt_f64(result.survival[k]))?;
    }
    Ok(())
}
