//! Phase classification, topological boundaries, mobility-edge maps and
//! critical-exponent fits.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::model::{build_gssh, disorder_sequence, Boundary, ModelParams};
use crate::numerics::{fmt_f64, logspace, mean, pairwise_sum, pairwise_sum_by};
use crate::spectral::{
    chiral_energies, eigensolve, gap_from_energies, localization_diagnostics, winding_number,
    zero_mode_loc_length_analytic, zero_mode_loc_length_analytic_intercell, LocalizationDiagnostics,
    SINGULAR_BOND_THRESHOLD,
};

/// Which side of the `m = W` line a boundary or fit belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    MAboveW,
    MBelowW,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::MAboveW => "m>W",
            Branch::MBelowW => "m<W",
        })
    }
}

/// A critical value together with the branch on which it holds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryEstimate {
    pub value: f64,
    pub branch: Branch,
    /// Whether the requested coordinate lies where this branch of the
    /// boundary exists.
    pub applies: bool,
}

/// `m_c = g + W^2 / (4g)` on the `m > W` branch (exists for `W <= 2g`).
pub fn topological_boundary(w: f64, g: f64) -> Result<BoundaryEstimate> {
    if g <= 0.0 {
        return Err(invalid("g", format!("must be positive, got {g}")));
    }
    Ok(BoundaryEstimate { value: g + w * w / (4.0 * g), branch: Branch::MAboveW, applies: w.abs() <= 2.0 * g })
}

/// `W_c = 2g` on the `m < W` branch (exists for `m < 2g`).
pub fn topological_boundary_w(m: f64, g: f64) -> Result<BoundaryEstimate> {
    if g <= 0.0 {
        return Err(invalid("g", format!("must be positive, got {g}")));
    }
    Ok(BoundaryEstimate { value: 2.0 * g, branch: Branch::MBelowW, applies: m.abs() < 2.0 * g })
}

/// Cutoffs on the per-state fractal dimension.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// `D_f >= theta_ext` counts as extended.
    pub theta_ext: f64,
    /// `D_f <= theta_loc` counts as localized.
    pub theta_loc: f64,
    /// Fraction at which a single class makes the phase pure.
    pub purity: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { theta_ext: 0.8, theta_loc: 0.2, purity: 0.95 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateClass {
    Extended,
    Critical,
    Localized,
}

pub fn classify_state(d_f: f64, th: &Thresholds) -> StateClass {
    if d_f >= th.theta_ext {
        StateClass::Extended
    } else if d_f <= th.theta_loc {
        StateClass::Localized
    } else {
        StateClass::Critical
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseLabel {
    #[serde(rename = "Ex")]
    Ex,
    #[serde(rename = "Cr")]
    Cr,
    #[serde(rename = "AL")]
    Al,
    #[serde(rename = "Ex+AL")]
    ExAl,
    #[serde(rename = "Cr+AL")]
    CrAl,
    /// Extended and critical states with (almost) no localized ones.
    #[serde(rename = "Ex+Cr")]
    ExCr,
}

impl fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhaseLabel::Ex => "Ex",
            PhaseLabel::Cr => "Cr",
            PhaseLabel::Al => "AL",
            PhaseLabel::ExAl => "Ex+AL",
            PhaseLabel::CrAl => "Cr+AL",
            PhaseLabel::ExCr => "Ex+Cr",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fractions {
    pub extended: f64,
    pub critical: f64,
    pub localized: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub fractions: Fractions,
    pub label: PhaseLabel,
}

/// Class fractions of a set of fractal dimensions and the resulting label.
///
/// A class holding at least `purity` of the states names a pure phase.
/// Otherwise a localized share of at least `1 - purity` gives a mixed label
/// pairing the larger of the extended and critical shares with AL, and the
/// remaining case is Ex+Cr.
pub fn classify_d_f(d_f: &[f64], th: &Thresholds) -> Classification {
    let n = d_f.len() as f64;
    let count = |c: StateClass| d_f.iter().filter(|&&d| classify_state(d, th) == c).count();
    let (ne, nl) = (count(StateClass::Extended), count(StateClass::Localized));
    let nc = d_f.len() - ne - nl;
    let fractions = Fractions { extended: ne as f64 / n, critical: nc as f64 / n, localized: nl as f64 / n };
    let label = if fractions.extended >= th.purity {
        PhaseLabel::Ex
    } else if fractions.critical >= th.purity {
        PhaseLabel::Cr
    } else if fractions.localized >= th.purity {
        PhaseLabel::Al
    } else if fractions.localized >= 1.0 - th.purity {
        if ne > nc {
            PhaseLabel::ExAl
        } else {
            PhaseLabel::CrAl
        }
    } else {
        PhaseLabel::ExCr
    };
    Classification { fractions, label }
}

pub fn classify_states(diag: &LocalizationDiagnostics, th: &Thresholds) -> Classification {
    classify_d_f(&diag.d_f_per_state, th)
}

/// Aggregated diagnostics at one `(W/g, m/g)` grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub w_over_g: f64,
    pub m_over_g: f64,
    pub winding: f64,
    pub avg_ipr: f64,
    pub avg_npr: f64,
    pub eta: f64,
    pub mean_d_f: f64,
    pub fractions: Fractions,
    pub label: PhaseLabel,
    pub topological: bool,
    pub c_bar: Option<f64>,
    pub s_bar: Option<f64>,
}

impl PhasePoint {
    /// Label joined with the topological class, e.g. `Cr+AL/topological`.
    pub fn full_label(&self) -> String {
        format!("{}/{}", self.label, if self.topological { "topological" } else { "trivial" })
    }
}

/// Static diagnostics averaged over disorder phases.
///
/// `base` supplies `g`, `W'`, `beta`, size and boundary; `w` and `m` are in
/// units of `g`. Winding is computed over the central `bulk_fraction` of
/// cells; it is skipped (NaN) when `bulk_fraction` is `None` or the chain is
/// not open. Class fractions pool the states of every phase.
pub fn phase_point(
    base: &ModelParams,
    w: f64,
    m: f64,
    deltas: &[f64],
    bulk_fraction: Option<f64>,
    th: &Thresholds,
) -> Result<PhasePoint> {
    if deltas.is_empty() {
        return Err(Error::InvalidInput("need at least one delta".into()));
    }
    let g = base.g;
    let per_delta: Vec<Result<(f64, LocalizationDiagnostics)>> = deltas
        .par_iter()
        .map(|&delta| {
            let p = ModelParams { m: m * g, w: w * g, delta, ..base.clone() };
            let s = eigensolve(&build_gssh(&p)?)?;
            let winding = match bulk_fraction {
                Some(f) if p.boundary == Boundary::Open => winding_number(&s, f)?,
                _ => f64::NAN,
            };
            Ok((winding, localization_diagnostics(&s)))
        })
        .collect();
    let mut windings = Vec::new();
    let mut diags = Vec::new();
    for r in per_delta {
        let (nw, d) = r?;
        windings.push(nw);
        diags.push(d);
    }
    let winding = mean(&windings);
    let avg_ipr = mean(&diags.iter().map(|d| d.avg_ipr).collect::<Vec<_>>());
    let avg_npr = mean(&diags.iter().map(|d| d.avg_npr).collect::<Vec<_>>());
    let pooled: Vec<f64> = diags.iter().flat_map(|d| d.d_f_per_state.iter().copied()).collect();
    let class = classify_d_f(&pooled, th);
    Ok(PhasePoint {
        w_over_g: w,
        m_over_g: m,
        winding,
        avg_ipr,
        avg_npr,
        eta: (avg_ipr * avg_npr).log10(),
        mean_d_f: mean(&pooled),
        fractions: class.fractions,
        label: class.label,
        topological: winding.round() >= 0.5,
        c_bar: None,
        s_bar: None,
    })
}

/// Header of the phase-map CSV.
pub const PHASE_MAP_HEADER: &str =
    "w_over_g,m_over_g,winding,avg_ipr,eta,mean_d_f,frac_ex,frac_cr,frac_al,label,c_bar,s_bar";

pub fn write_phase_map_csv<W: Write>(points: &[PhasePoint], mut out: W) -> Result<()> {
    writeln!(out, "{PHASE_MAP_HEADER}")?;
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            fmt_f64(p.w_over_g),
            fmt_f64(p.m_over_g),
            fmt_f64(p.winding),
            fmt_f64(p.avg_ipr),
            fmt_f64(p.eta),
            fmt_f64(p.mean_d_f),
            fmt_f64(p.fractions.extended),
            fmt_f64(p.fractions.critical),
            fmt_f64(p.fractions.localized),
            p.full_label(),
            opt(p.c_bar),
            opt(p.s_bar)
        )?;
    }
    Ok(())
}

fn require_open_even(params: &ModelParams) -> Result<()> {
    if params.boundary != Boundary::Open {
        return Err(Error::Boundary { required: "open" });
    }
    if params.n_cells < 2 || params.n_cells % 2 != 0 {
        return Err(invalid("n_cells", format!("finite-size comparison needs an even size, got {}", params.n_cells)));
    }
    Ok(())
}

/// Per-delta spectra at `N_c / 2` and `N_c`, reduced by `f` and averaged
/// elementwise over deltas.
fn two_size_average<F>(params: &ModelParams, deltas: &[f64], f: F) -> Result<[Vec<f64>; 2]>
where
    F: Fn(&LocalizationDiagnostics) -> Vec<f64> + Sync,
{
    require_open_even(params)?;
    if deltas.is_empty() {
        return Err(Error::InvalidInput("need at least one delta".into()));
    }
    let sizes = [params.n_cells / 2, params.n_cells];
    let jobs: Vec<(usize, f64)> = sizes.iter().flat_map(|&n| deltas.iter().map(move |&d| (n, d))).collect();
    let reduced: Vec<Result<Vec<f64>>> = jobs
        .par_iter()
        .map(|&(n, delta)| {
            let p = params.clone().with_n_cells(n).with_delta(delta);
            Ok(f(&localization_diagnostics(&eigensolve(&build_gssh(&p)?)?)))
        })
        .collect();
    let reduced: Vec<Vec<f64>> = reduced.into_iter().collect::<Result<_>>()?;
    let nd = deltas.len();
    let avg = |chunk: &[Vec<f64>]| -> Vec<f64> {
        (0..chunk[0].len()).map(|k| mean(&chunk.iter().map(|r| r[k]).collect::<Vec<_>>())).collect()
    };
    Ok([avg(&reduced[..nd]), avg(&reduced[nd..])])
}

/// Finite-size fractal dimension `-ln(I_N / I_{N/2}) / ln 2` of the
/// delta-averaged spectral IPR `I` at `N_c` and `N_c / 2` cells (open chain).
pub fn finite_size_d_f(params: &ModelParams, deltas: &[f64]) -> Result<f64> {
    let [half, full] = two_size_average(params, deltas, |d| vec![d.avg_ipr])?;
    Ok(-(full[0] / half[0]).ln() / std::f64::consts::LN_2)
}

fn binned_log_ipr(d: &LocalizationDiagnostics, bins: usize) -> Vec<f64> {
    let l = d.ipr_per_state.len();
    let mut groups = vec![Vec::new(); bins];
    for (n, ipr) in d.ipr_per_state.iter().enumerate() {
        let b = ((n as f64 + 0.5) / l as f64 * bins as f64) as usize;
        groups[b.min(bins - 1)].push(ipr.ln());
    }
    groups.iter().map(|g| mean(g)).collect()
}

fn binned_d_f(d: &LocalizationDiagnostics, bins: usize) -> Vec<f64> {
    let l = d.d_f_per_state.len();
    let mut groups = vec![Vec::new(); bins];
    for (n, df) in d.d_f_per_state.iter().enumerate() {
        let b = ((n as f64 + 0.5) / l as f64 * bins as f64) as usize;
        groups[b.min(bins - 1)].push(*df);
    }
    groups.iter().map(|g| mean(g)).collect()
}

/// Energy-resolved finite-size fractal dimension: states are grouped into
/// `bins` bins of `n / L`, and each bin compares the delta-averaged mean
/// `ln IPR` at `N_c` and `N_c / 2`.
pub fn finite_size_d_f_bins(params: &ModelParams, deltas: &[f64], bins: usize) -> Result<Vec<f64>> {
    if bins == 0 || bins > params.n_cells {
        return Err(invalid("bins", format!("need 1..={} bins, got {bins}", params.n_cells)));
    }
    let [half, full] = two_size_average(params, deltas, |d| binned_log_ipr(d, bins))?;
    Ok(half.iter().zip(&full).map(|(h, f)| -(f - h) / std::f64::consts::LN_2).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    M,
    W,
    WPrime,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DfEstimator {
    /// `-ln(IPR) / ln(L)` at the given size.
    SingleSize,
    /// Comparison of `N_c` with `N_c / 2`.
    #[default]
    FiniteSize,
}

fn with_axis(base: &ModelParams, axis: SweepAxis, value: f64) -> ModelParams {
    let mut p = base.clone();
    match axis {
        SweepAxis::M => p.m = value * base.g,
        SweepAxis::W => p.w = value * base.g,
        SweepAxis::WPrime => p.w_prime = value * base.g,
    }
    p
}

/// `D_f` versus eigenstate ratio `n / L` and a swept parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MobilityEdgeMap {
    pub axis: SweepAxis,
    pub estimator: DfEstimator,
    pub values: Vec<f64>,
    pub bin_centers: Vec<f64>,
    /// `d_f[i][b]`: parameter `values[i]`, energy bin `b`.
    pub d_f: Vec<Vec<f64>>,
    pub classifications: Vec<Classification>,
}

impl MobilityEdgeMap {
    /// Indices `i` where the label of `values[i]` differs from `values[i - 1]`.
    pub fn regime_changes(&self) -> Vec<usize> {
        (1..self.values.len()).filter(|&i| self.classifications[i].label != self.classifications[i - 1].label).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "value,n_over_l,d_f,label")?;
        for (i, v) in self.values.iter().enumerate() {
            for (b, c) in self.bin_centers.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{}",
                    fmt_f64(*v),
                    fmt_f64(*c),
                    fmt_f64(self.d_f[i][b]),
                    self.classifications[i].label
                )?;
            }
        }
        Ok(())
    }
}

/// Sweep `axis` over `values` (units of `g`), binning eigenstates into
/// `bins` bins of `n / L`, and classify each column of bins.
pub fn mobility_edge_map(
    base: &ModelParams,
    axis: SweepAxis,
    values: &[f64],
    deltas: &[f64],
    bins: usize,
    estimator: DfEstimator,
    th: &Thresholds,
) -> Result<MobilityEdgeMap> {
    if bins == 0 || bins > base.chain_length() {
        return Err(invalid("bins", format!("need 1..={} bins, got {bins}", base.chain_length())));
    }
    if deltas.is_empty() {
        return Err(Error::InvalidInput("need at least one delta".into()));
    }
    let columns: Vec<Result<Vec<f64>>> = values
        .par_iter()
        .map(|&v| {
            let p = with_axis(base, axis, v);
            match estimator {
                DfEstimator::FiniteSize => finite_size_d_f_bins(&p, deltas, bins),
                DfEstimator::SingleSize => {
                    let per: Vec<Vec<f64>> = deltas
                        .iter()
                        .map(|&d| {
                            let s = eigensolve(&build_gssh(&p.clone().with_delta(d))?)?;
                            Ok(binned_d_f(&localization_diagnostics(&s), bins))
                        })
                        .collect::<Result<_>>()?;
                    Ok((0..bins).map(|b| mean(&per.iter().map(|r| r[b]).collect::<Vec<_>>())).collect())
                }
            }
        })
        .collect();
    let d_f: Vec<Vec<f64>> = columns.into_iter().collect::<Result<_>>()?;
    let classifications = d_f.iter().map(|col| classify_d_f(col, th)).collect();
    Ok(MobilityEdgeMap {
        axis,
        estimator,
        values: values.to_vec(),
        bin_centers: (0..bins).map(|b| (b as f64 + 0.5) / bins as f64).collect(),
        d_f,
        classifications,
    })
}

/// Power-law fit `y = A x^p` by least squares in log-log space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub exponent: f64,
    /// Fitted `ln A`.
    pub intercept: f64,
    /// Smallest and largest deviation used.
    pub window: (f64, f64),
    pub r_squared: f64,
    pub side: Option<Branch>,
    pub n_points: usize,
}

/// Minimum number of points accepted by [`fit_exponent`].
pub const MIN_FIT_POINTS: usize = 8;

pub fn fit_exponent(x: &[f64], y: &[f64]) -> Result<ScalingFit> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!("length mismatch {} vs {}", x.len(), y.len())));
    }
    if x.len() < MIN_FIT_POINTS {
        return Err(Error::InvalidInput(format!("need at least {MIN_FIT_POINTS} points, got {}", x.len())));
    }
    if let Some(bad) = x.iter().chain(y).find(|&&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput(format!("log-log fit needs positive finite data, got {bad}")));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let sxx = pairwise_sum(&lx.iter().map(|a| (a - mx).powi(2)).collect::<Vec<_>>());
    let sxy = pairwise_sum(&lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).collect::<Vec<_>>());
    let syy = pairwise_sum(&ly.iter().map(|b| (b - my).powi(2)).collect::<Vec<_>>());
    if sxx == 0.0 {
        return Err(Error::InvalidInput("x values are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res =
        pairwise_sum(&lx.iter().zip(&ly).map(|(a, b)| (b - intercept - slope * a).powi(2)).collect::<Vec<_>>());
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ScalingFit { exponent: slope, intercept, window: (lo, hi), r_squared, side: None, n_points: x.len() })
}

/// How `Lambda^{-1}` is evaluated for the correlation-length fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocLengthSource {
    Analytic,
    /// Open golden-ratio chain of `n_cells`, averaged over `deltas`.
    Numeric {
        n_cells: usize,
        deltas: Vec<f64>,
    },
}

/// Open golden-ratio chains at fixed `g` and `delta`s with the modulation
/// `cos(2 pi beta n + delta)` and `ln|t_n|` cached, so that `Lambda^{-1}` at
/// a new `(m, W)` only costs logarithms. Values match
/// [`zero_mode_loc_length_numeric`] bit for bit.
struct LocLengthTable {
    floor: f64,
    rows: Vec<(Vec<f64>, Vec<f64>)>,
}

impl LocLengthTable {
    fn new(g: f64, n_cells: usize, deltas: &[f64]) -> Result<Self> {
        let floor = SINGULAR_BOND_THRESHOLD * g;
        let rows = deltas
            .iter()
            .map(|&d| {
                let p = ModelParams::new(0.0, 1.0, n_cells, Boundary::Open).with_g(g).with_delta(d);
                let inter = p.inter_cell_sequence()?.iter().map(|&t| log_abs_floor(t, floor)).collect();
                Ok((disorder_sequence(&p)?, inter))
            })
            .collect::<Result<_>>()?;
        Ok(Self { floor, rows })
    }

    fn eval(&self, m: f64, w: f64) -> f64 {
        let values: Vec<f64> = self
            .rows
            .par_iter()
            .map(|(cos, log_t)| {
                linalg::clear_upper_simd();
                let sum = pairwise_sum_by(cos.len(), |n| log_abs_floor(m + w * cos[n], self.floor) - log_t[n]);
                sum / cos.len() as f64
            })
            .collect();
        mean(&values)
    }
}

fn log_abs_floor(x: f64, floor: f64) -> f64 {
    if x.abs() < floor {
        floor.ln()
    } else {
        x.abs().ln()
    }
}

fn numeric_table(source: &LocLengthSource, g: f64) -> Result<Option<LocLengthTable>> {
    match source {
        LocLengthSource::Analytic => Ok(None),
        LocLengthSource::Numeric { n_cells, deltas } => LocLengthTable::new(g, *n_cells, deltas).map(Some),
    }
}

/// Fit `Lambda^{-1} ~ (m - m_c)^nu` on the `m > W` side at fixed `W`.
pub fn fit_nu(w: f64, g: f64, window: (f64, f64), n_points: usize, source: &LocLengthSource) -> Result<ScalingFit> {
    let mc = topological_boundary(w, g)?;
    if !mc.applies {
        return Err(invalid("w", format!("no m > W boundary exists at W = {w}")));
    }
    let x = logspace(window.0, window.1, n_points);
    let table = numeric_table(source, g)?;
    let y: Vec<f64> = x
        .par_iter()
        .map(|&dx| {
            let m = mc.value + dx * g;
            match &table {
                None => zero_mode_loc_length_analytic(m, w, g),
                Some(t) => Ok(t.eval(m, w)),
            }
        })
        .collect::<Result<_>>()?;
    let mut fit = fit_exponent(&x, &y)?;
    fit.side = Some(Branch::MAboveW);
    fit.window = window;
    Ok(fit)
}

/// Fit `|Lambda^{-1}| ~ (W_c - W)^nu` approaching `W_c = 2g` from the
/// topological side at fixed `m < 2g`.
pub fn fit_nu_w(m: f64, g: f64, window: (f64, f64), n_points: usize, source: &LocLengthSource) -> Result<ScalingFit> {
    let wc = topological_boundary_w(m, g)?;
    if !wc.applies {
        return Err(invalid("m", format!("no W_c = 2g boundary exists at m = {m}")));
    }
    let x = logspace(window.0, window.1, n_points);
    if let Some(&big) = x.iter().find(|&&dx| wc.value - dx * g <= m) {
        return Err(invalid("window", format!("deviation {big} crosses the m = W line")));
    }
    let table = numeric_table(source, g)?;
    let y: Vec<f64> = x
        .par_iter()
        .map(|&dx| {
            let w = wc.value - dx * g;
            let v = match &table {
                None => zero_mode_loc_length_analytic(m, w, g),
                Some(t) => Ok(t.eval(m, w)),
            };
            v.map(f64::abs)
        })
        .collect::<Result<_>>()?;
    let mut fit = fit_exponent(&x, &y)?;
    fit.side = Some(Branch::MBelowW);
    fit.window = window;
    Ok(fit)
}

/// Delta-averaged half-filling gap of a periodic golden-approximant ring.
pub fn mean_periodic_gap(m: f64, w: f64, g: f64, n_cells: usize, deltas: &[f64]) -> Result<f64> {
    let gaps: Vec<f64> = deltas
        .iter()
        .map(|&d| {
            let p = ModelParams::new(m, w, n_cells, Boundary::Periodic).with_g(g).with_delta(d);
            gap_from_energies(&chiral_energies(&build_gssh(&p)?)?)
        })
        .collect::<Result<_>>()?;
    Ok(mean(&gaps))
}

/// Fit `Delta E ~ |W - W_c|^{nu z}` approaching `W_c = 2g` from below at fixed `m`.
pub fn fit_gap_exponent_w(
    m: f64,
    g: f64,
    n_cells: usize,
    window: (f64, f64),
    n_points: usize,
    deltas: &[f64],
) -> Result<ScalingFit> {
    let wc = topological_boundary_w(m, g)?;
    let x = logspace(window.0, window.1, n_points);
    let y: Vec<f64> =
        x.par_iter().map(|&dx| mean_periodic_gap(m, wc.value - dx * g, g, n_cells, deltas)).collect::<Result<_>>()?;
    let mut fit = fit_exponent(&x, &y)?;
    fit.side = Some(Branch::MBelowW);
    fit.window = window;
    Ok(fit)
}

/// Fit `Delta E ~ (m - m_c)^{nu z}` approaching `m_c` from the trivial side at fixed `W`.
pub fn fit_gap_exponent_m(
    w: f64,
    g: f64,
    n_cells: usize,
    window: (f64, f64),
    n_points: usize,
    deltas: &[f64],
) -> Result<ScalingFit> {
    let mc = topological_boundary(w, g)?;
    let x = logspace(window.0, window.1, n_points);
    let y: Vec<f64> =
        x.par_iter().map(|&dx| mean_periodic_gap(mc.value + dx * g, w, g, n_cells, deltas)).collect::<Result<_>>()?;
    let mut fit = fit_exponent(&x, &y)?;
    fit.side = Some(Branch::MAboveW);
    fit.window = window;
    Ok(fit)
}

/// First sign change of `f` on `[lo, hi]`: scan `scan_points` samples, then
/// bisect to `tol`.
pub fn find_zero_crossing<F>(f: F, lo: f64, hi: f64, scan_points: usize, tol: f64) -> Result<Option<f64>>
where
    F: Fn(f64) -> Result<f64>,
{
    let n = scan_points.max(2);
    let mut a = lo;
    let mut fa = f(a)?;
    if fa == 0.0 {
        return Ok(Some(a));
    }
    for k in 1..n {
        let b = if k == n - 1 { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 };
        let fb = f(b)?;
        if fb == 0.0 {
            return Ok(Some(b));
        }
        if fa.signum() != fb.signum() {
            let (mut x0, mut x1, mut f0) = (a, b, fa);
            while x1 - x0 > tol {
                let mid = 0.5 * (x0 + x1);
                let fm = f(mid)?;
                if fm == 0.0 {
                    return Ok(Some(mid));
                }
                if fm.signum() == f0.signum() {
                    x0 = mid;
                    f0 = fm;
                } else {
                    x1 = mid;
                }
            }
            return Ok(Some(0.5 * (x0 + x1)));
        }
        a = b;
        fa = fb;
    }
    Ok(None)
}

/// Numeric `Lambda^{-1} = 0` crossing in `m` at fixed `W` (m > W branch).
pub fn loc_length_crossing_m(w: f64, g: f64, n_cells: usize, deltas: &[f64]) -> Result<Option<f64>> {
    let table = LocLengthTable::new(g, n_cells, deltas)?;
    find_zero_crossing(|m| Ok(table.eval(m, w)), w, w + 3.0 * g, 120, 1e-10 * g)
}

/// Numeric `Lambda^{-1} = 0` crossing in `W` at fixed `m` (m < W branch).
pub fn loc_length_crossing_w(m: f64, g: f64, n_cells: usize, deltas: &[f64]) -> Result<Option<f64>> {
    let table = LocLengthTable::new(g, n_cells, deltas)?;
    find_zero_crossing(|w| Ok(table.eval(m, w)), m, m + 4.0 * g, 160, 1e-10 * g)
}

/// A named polyline in the `(W/g, m/g)` plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCurve {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Analytic boundaries: `m_c(W)` for the given `W/g` values up to 2 and the
/// vertical `W_c = 2g` segment for `m/g` in `[0, 2]`.
pub fn analytic_boundary_curves(w_values: &[f64], m_values: &[f64]) -> Vec<BoundaryCurve> {
    let mc = w_values.iter().filter(|&&w| w <= 2.0).map(|&w| (w, 1.0 + w * w / 4.0)).collect();
    let wc = m_values.iter().filter(|&&m| m < 2.0).map(|&m| (2.0, m)).collect();
    vec![
        BoundaryCurve { name: "m_c_analytic".into(), points: mc },
        BoundaryCurve { name: "w_c_analytic".into(), points: wc },
    ]
}

/// Finite-size boundaries from numeric `Lambda^{-1}` zero crossings.
pub fn numeric_boundary_curves(
    w_values: &[f64],
    m_values: &[f64],
    n_cells: usize,
    deltas: &[f64],
) -> Result<Vec<BoundaryCurve>> {
    let mc: Vec<Option<(f64, f64)>> = w_values
        .par_iter()
        .filter(|&&w| w <= 2.0)
        .map(|&w| Ok(loc_length_crossing_m(w, 1.0, n_cells, deltas)?.map(|m| (w, m))))
        .collect::<Result<_>>()?;
    let wc: Vec<Option<(f64, f64)>> = m_values
        .par_iter()
        .filter(|&&m| m < 2.0)
        .map(|&m| Ok(loc_length_crossing_w(m, 1.0, n_cells, deltas)?.map(|w| (w, m))))
        .collect::<Result<_>>()?;
    Ok(vec![
        BoundaryCurve { name: "m_c_numeric".into(), points: mc.into_iter().flatten().collect() },
        BoundaryCurve { name: "w_c_numeric".into(), points: wc.into_iter().flatten().collect() },
    ])
}

pub fn write_curves_csv<W: Write>(curves: &[BoundaryCurve], mut out: W) -> Result<()> {
    writeln!(out, "curve,w_over_g,m_over_g")?;
    for c in curves {
        for (w, m) in &c.points {
            writeln!(out, "{},{},{}", c.name, fmt_f64(*w), fmt_f64(*m))?;
        }
    }
    Ok(())
}

/// Winding and analytic `Lambda^{-1}` over a `W x (m or W')` grid of the
/// model with inter-cell disorder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntercellMap {
    /// Second axis: `m` or `w_prime`.
    pub axis: SweepAxis,
    pub w_values: Vec<f64>,
    pub y_values: Vec<f64>,
    /// `winding[j][i]` at `(w_values[i], y_values[j])`.
    pub winding: Vec<Vec<f64>>,
    pub loc_length: Vec<Vec<f64>>,
}

impl IntercellMap {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let y_name = match self.axis {
            SweepAxis::WPrime => "w_prime_over_g",
            _ => "m_over_g",
        };
        writeln!(out, "w_over_g,{y_name},winding,inv_loc_length_analytic")?;
        for (j, y) in self.y_values.iter().enumerate() {
            for (i, w) in self.w_values.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{}",
                    fmt_f64(*w),
                    fmt_f64(*y),
                    fmt_f64(self.winding[j][i]),
                    fmt_f64(self.loc_length[j][i])
                )?;
            }
        }
        Ok(())
    }
}

/// Phase map of the chain with inter-cell disorder. `base` fixes `g`, size,
/// and whichever of `m`, `W'` is not swept; values are in units of `g`.
pub fn intercell_phase_map(
    base: &ModelParams,
    w_values: &[f64],
    y_values: &[f64],
    axis: SweepAxis,
    deltas: &[f64],
    bulk_fraction: f64,
) -> Result<IntercellMap> {
    if !matches!(axis, SweepAxis::M | SweepAxis::WPrime) {
        return Err(invalid("axis", "second axis must be m or w_prime"));
    }
    if base.boundary != Boundary::Open {
        return Err(Error::Boundary { required: "open" });
    }
    let grid: Vec<(usize, usize)> =
        (0..y_values.len()).flat_map(|j| (0..w_values.len()).map(move |i| (j, i))).collect();
    let cells: Vec<Result<(f64, f64)>> = grid
        .par_iter()
        .map(|&(j, i)| {
            let p = with_axis(&with_axis(base, SweepAxis::W, w_values[i]), axis, y_values[j]);
            let nw: Vec<f64> = deltas
                .iter()
                .map(|&d| winding_number(&eigensolve(&build_gssh(&p.clone().with_delta(d))?)?, bulk_fraction))
                .collect::<Result<_>>()?;
            let lam = zero_mode_loc_length_analytic_intercell(p.m, p.w, p.g, p.w_prime)?;
            Ok((mean(&nw), lam))
        })
        .collect();
    let mut winding = vec![vec![0.0; w_values.len()]; y_values.len()];
    let mut loc_length = winding.clone();
    for (&(j, i), r) in grid.iter().zip(cells) {
        let (nw, lam) = r?;
        winding[j][i] = nw;
        loc_length[j][i] = lam;
    }
    Ok(IntercellMap { axis, w_values: w_values.to_vec(), y_values: y_values.to_vec(), winding, loc_length })
}

/// Intervals of `W` in `[0, w_max]` where the analytic `Lambda^{-1}` with
/// inter-cell disorder is negative (topological), at fixed `m` and `W'`.
pub fn topological_w_intervals(
    m: f64,
    g: f64,
    w_prime: f64,
    w_max: f64,
    scan_points: usize,
) -> Result<Vec<(f64, f64)>> {
    let f = |w: f64| zero_mode_loc_length_analytic_intercell(m, w, g, w_prime);
    let n = scan_points.max(2);
    let grid: Vec<f64> = (0..n).map(|k| w_max * k as f64 / (n - 1) as f64).collect();
    let mut out = Vec::new();
    let mut start: Option<f64> = None;
    for k in 0..n {
        let inside = f(grid[k])? < 0.0;
        match (inside, start) {
            (true, None) => {
                start = Some(if k == 0 {
                    grid[0]
                } else {
                    find_zero_crossing(f, grid[k - 1], grid[k], 2, 1e-12)?.unwrap_or(grid[k])
                })
            }
            (false, Some(s)) => {
                let end = find_zero_crossing(f, grid[k - 1], grid[k], 2, 1e-12)?.unwrap_or(grid[k]);
                out.push((s, end));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, w_max));
    }
    Ok(out)
}

/// Default disorder phases `j * pi / 4`, `j = 0..8`.
pub fn default_deltas() -> Vec<f64> {
    (0..8).map(|j| j as f64 * std::f64::consts::FRAC_PI_4).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_arithmetic() {
        assert_eq!(topological_boundary(0.0, 1.0).unwrap().value, 1.0);
        assert_eq!(topological_boundary(1.0, 1.0).unwrap().value, 1.25);
        let wc = topological_boundary_w(0.3, 1.0).unwrap();
        assert_eq!(wc.value, 2.0);
        assert!(wc.applies);
        assert!(!topological_boundary(2.5, 1.0).unwrap().applies);
    }

    #[test]
    fn classification_examples() {
        let c = classify_d_f(&[1.0; 10], &Thresholds::default());
        assert_eq!(c.label, PhaseLabel::Ex);
        assert_eq!((c.fractions.extended, c.fractions.critical, c.fractions.localized), (1.0, 0.0, 0.0));
        let mixed: Vec<f64> = (0..20).map(|i| if i < 10 { 0.5 } else { 0.05 }).collect();
        assert_eq!(classify_d_f(&mixed, &Thresholds::default()).label, PhaseLabel::CrAl);
        let ex_al: Vec<f64> = (0..20).map(|i| if i < 15 { 0.95 } else { 0.05 }).collect();
        assert_eq!(classify_d_f(&ex_al, &Thresholds::default()).label, PhaseLabel::ExAl);
        let ex_cr: Vec<f64> = (0..20).map(|i| if i < 15 { 0.95 } else { 0.5 }).collect();
        assert_eq!(classify_d_f(&ex_cr, &Thresholds::default()).label, PhaseLabel::ExCr);
    }

    #[test]
    fn fit_recovers_power() {
        let x = logspace(1e-3, 1e-1, 10);
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v.powf(1.5)).collect();
        let f = fit_exponent(&x, &y).unwrap();
        assert!((f.exponent - 1.5).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_bad_input() {
        let x = logspace(1e-3, 1e-1, 8);
        let mut y = x.clone();
        y[3] = -1.0;
        assert!(fit_exponent(&x, &y).is_err());
        assert!(fit_exponent(&x[..7], &x[..7]).is_err());
    }

    #[test]
    fn bisection_finds_root() {
        let r = find_zero_crossing(|x| Ok(x * x - 2.0), 0.0, 3.0, 7, 1e-13).unwrap().unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
        assert!(find_zero_crossing(|x| Ok(x + 10.0), 0.0, 1.0, 5, 1e-9).unwrap().is_none());
    }

    #[test]
    fn curves_cover_both_branches() {
        let c = analytic_boundary_curves(&[0.0, 1.0, 2.0, 3.0], &[0.0, 1.0, 2.0]);
        assert_eq!(c[0].points, vec![(0.0, 1.0), (1.0, 1.25), (2.0, 2.0)]);
        assert_eq!(c[1].points, vec![(2.0, 0.0), (2.0, 1.0)]);
    }

    #[test]
    fn cached_loc_length_matches_direct_sum() {
        let deltas = [0.0, 1.3, 4.0];
        let table = LocLengthTable::new(1.5, 89, &deltas).unwrap();
        for (m, w) in [(0.2, 0.7), (1.5, 1.5), (2.0, 0.0), (0.0, 3.0)] {
            let direct: Vec<f64> = deltas
                .iter()
                .map(|&d| {
                    let p = ModelParams::new(m, w, 89, Boundary::Open).with_g(1.5).with_delta(d);
                    crate::spectral::zero_mode_loc_length_numeric(&p).unwrap().value
                })
                .collect();
            assert_eq!(table.eval(m, w).to_bits(), mean(&direct).to_bits(), "m={m} w={w}");
        }
    }
}
