//! The six subcommands. Each runs on the current rayon pool; results are
//! collected in grid order so output bytes do not depend on the worker count.

use std::path::PathBuf;
use std::time::Instant;

use qpssh_core::criticality::{
    analytic_boundary_curves, classify_states, fit_gap_exponent_m, fit_gap_exponent_w, fit_nu, fit_nu_w,
    intercell_phase_map, mobility_edge_map, numeric_boundary_curves, phase_point, topological_boundary,
    topological_boundary_w, topological_w_intervals, write_curves_csv, write_phase_map_csv, BoundaryEstimate,
    Classification, LocLengthSource, PhasePoint, ScalingFit, SweepAxis,
};
use qpssh_core::dynamics::{average_at_horizon, run_instances, write_density_csv, write_series_csv, InstanceAverage};
use qpssh_core::equivalence::{
    band_hierarchy, check_2d_decoupling, check_aah_limit, check_ising_block, check_offdiag_aah_limit, in_gap_edge_scan,
    BandHierarchy, BandSelection, EquivalenceReport, InGapState, TfimChain,
};
use qpssh_core::model::{build_gssh, Boundary, ModelParams, Params2D};
use qpssh_core::numerics::fmt_f64;
use qpssh_core::spectral::{
    chiral_energies, eigensolve, gap_half_filling, localization_diagnostics, winding_number, write_spectrum_csv,
    zero_mode_loc_length_analytic_intercell, zero_mode_loc_length_numeric, ZERO_MODE_THRESHOLD,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{CheckKind, Config, FitKind, FitSpec, GridPoint, LocSource, SweepBlock};
use crate::output::{sha256_hex, unix_seconds, OutputDir, RunManifest};
use crate::{CliError, Command};

pub struct RunContext {
    pub command: Command,
    pub config: Config,
    pub out_dir: PathBuf,
    pub jobs: usize,
}

/// Hash of the configuration with run-location and worker settings removed,
/// so reruns elsewhere or with other `--jobs` share it.
pub fn config_hash(cfg: &Config) -> String {
    let mut c = cfg.clone();
    c.output = Default::default();
    c.parallelism = Default::default();
    sha256_hex(c.to_json().as_bytes())
}

/// Run a command. Failures of individual points are recorded in the manifest
/// and reported as a computational error after all outputs are written.
pub fn run(ctx: &RunContext) -> Result<RunManifest, CliError> {
    let started = unix_seconds();
    let cfg = &ctx.config;
    if let Some(c) = cfg.command {
        if c != ctx.command {
            return Err(CliError::config(format!(
                "command: configuration is for `{}`, not `{}`",
                c.name(),
                ctx.command.name()
            )));
        }
    }
    let mut out = OutputDir::create(&ctx.out_dir)?;
    out.write("config.json", format!("{}\n", cfg.to_json()).as_bytes())?;
    match ctx.command {
        Command::Spectrum => spectrum(cfg, &mut out)?,
        Command::Walk => walk(cfg, &mut out)?,
        Command::Sweep => sweep(cfg, &mut out)?,
        Command::Boundaries => boundaries(cfg, &mut out)?,
        Command::Scaling => scaling(cfg, &mut out)?,
        Command::Check => check(cfg, &mut out)?,
    }
    let manifest = out.finish(ctx.command.name(), config_hash(cfg), ctx.jobs, started)?;
    if !manifest.failures.is_empty() {
        let first = &manifest.failures[0];
        return Err(CliError::Compute(format!(
            "{} item(s) failed; first: {}: {}",
            manifest.failures.len(),
            first.item,
            first.error
        )));
    }
    Ok(manifest)
}

fn point_name(pt: &GridPoint) -> String {
    format!("W={} m={} W'={}", pt.w, pt.m, pt.w_prime)
}

#[derive(Serialize)]
struct SpectrumDiagnostics {
    params: ModelParams,
    dimension: usize,
    avg_ipr: f64,
    avg_npr: f64,
    eta: f64,
    mean_d_f: f64,
    spectral_d_f: f64,
    classification: Classification,
    /// Present only for open chains with winding enabled.
    winding: Option<f64>,
    gap_half_filling: f64,
    inv_loc_length_numeric: f64,
    singular_bond: bool,
    /// Absent where the phase average of `ln|m + W cos|` diverges.
    inv_loc_length_analytic: Option<f64>,
}

fn spectrum(cfg: &Config, out: &mut OutputDir) -> Result<(), CliError> {
    let pt = cfg.model.single_point()?;
    let p = cfg.model.params(pt)?;
    let t0 = Instant::now();
    let s = eigensolve(&build_gssh(&p)?)?;
    let diag = localization_diagnostics(&s);
    let winding = match p.boundary {
        Boundary::Open if cfg.diagnostics.winding => Some(winding_number(&s, cfg.diagnostics.bulk_fraction)?),
        _ => None,
    };
    let numeric = zero_mode_loc_length_numeric(&p)?;
    let report = SpectrumDiagnostics {
        dimension: s.len(),
        avg_ipr: diag.avg_ipr,
        avg_npr: diag.avg_npr,
        eta: diag.eta,
        mean_d_f: diag.mean_d_f(),
        spectral_d_f: diag.spectral_d_f(),
        classification: classify_states(&diag, &cfg.thresholds),
        winding,
        gap_half_filling: gap_half_filling(&s)?,
        inv_loc_length_numeric: numeric.value,
        singular_bond: numeric.singular_bond,
        inv_loc_length_analytic: zero_mode_loc_length_analytic_intercell(p.m, p.w, p.g, p.w_prime).ok(),
        params: p,
    };
    out.write_with("spectrum.csv", |b| write_spectrum_csv(&s, cfg.diagnostics.edge_cells, b))?;
    out.write_json("diagnostics.json", &report)?;
    out.time(point_name(&pt), t0.elapsed().as_secs_f64());
    Ok(())
}

/// Label of the `k`-th grid point when explicit points are named.
fn label(cfg: &Config, k: usize) -> &str {
    match (&cfg.model.labels, &cfg.model.points) {
        (Some(l), Some(p)) => l.get(k % p.len()).map_or("", String::as_str),
        _ => "",
    }
}

fn walk(cfg: &Config, out: &mut OutputDir) -> Result<(), CliError> {
    if cfg.model.boundary != Boundary::Open {
        return Err(CliError::config("model.boundary: walks need an open chain"));
    }
    let grid = cfg.model.grid()?;
    let times = cfg.protocol.times()?;
    let deltas = cfg.protocol.deltas.values()?;
    let l0s = cfg.protocol.l0s(2 * cfg.model.n_cells)?;
    let opts = cfg.protocol.walk_options();
    let mut index = String::from("point,label,w_over_g,m_over_g,w_prime_over_g,t_final,c_bar_final,s_bar_final,file\n");
    for (k, pt) in grid.iter().enumerate() {
        let t0 = Instant::now();
        let p = cfg.model.params(*pt)?;
        let res = run_instances(&p, &deltas, &l0s, &times, &opts)
            .and_then(|r| InstanceAverage::from_results(&r, deltas.len(), l0s.len()).map(|a| (r, a)));
        let (results, avg) = match res {
            Ok(x) => x,
            Err(e) => {
                out.fail(point_name(pt), e);
                continue;
            }
        };
        let file = format!("walk/point_{k:03}_average.csv");
        out.write_with(&file, |b| avg.write_csv(b))?;
        for (i, r) in results.iter().enumerate() {
            let (j, l0) = (i / l0s.len(), r.instance.l0);
            let stem = format!("walk/point_{k:03}/delta_{j:02}_l0_{l0:03}");
            out.write_with(&format!("{stem}_series.csv"), |b| write_series_csv(r, b))?;
            if cfg.protocol.write_density {
                out.write_with(&format!("{stem}_density.csv"), |b| write_density_csv(r, b))?;
            }
        }
        let last = times.len() - 1;
        index.push_str(&format!(
            "{k},{},{},{},{},{},{},{},{file}\n",
            label(cfg, k),
            fmt_f64(pt.w),
            fmt_f64(pt.m),
            fmt_f64(pt.w_prime),
            fmt_f64(times[last]),
            fmt_f64(avg.c_bar[last]),
            fmt_f64(avg.s_bar[last])
        ));
        out.time(point_name(pt), t0.elapsed().as_secs_f64());
    }
    out.write("walk_points.csv", index.as_bytes())
}

fn sweep(cfg: &Config, out: &mut OutputDir) -> Result<(), CliError> {
    match &cfg.sweep {
        SweepBlock::PhaseMap => phase_map(cfg, out),
        SweepBlock::MobilityEdges { axis, bins, estimator } => mobility(cfg, out, *axis, *bins, *estimator),
        SweepBlock::Intercell { axis } => intercell(cfg, out, *axis),
    }
}

fn phase_map(cfg: &Config, out: &mut OutputDir) -> Result<(), CliError> {
    let grid = cfg.model.grid()?;
    let deltas = cfg.protocol.deltas.values()?;
    let d = &cfg.diagnostics;
    let l0s = if d.dynamics {
        if cfg.model.boundary != Boundary::Open {
            return Err(CliError::config("diagnostics.dynamics: walks need an open chain"));
        }
        cfg.protocol.l0s(2 * cfg.model.n_cells)?
    } else {
        Vec::new()
    };
    let bulk = d.winding.then_some(d.bulk_fraction);
    let rows: Vec<(qpssh_core::Result<PhasePoint>, f64)> = grid
        .par_iter()
        .map(|pt| {
            let t0 = Instant::now();
            let r = cfg.model.params(*pt).map_err(|e| qpssh_core::Error::InvalidInput(e.to_string())).and_then(|p| {
                let mut row = phase_point(&p, pt.w, pt.m, &deltas, bulk, &cfg.thresholds)?;
                if d.dynamics {
                    let h = average_at_horizon(&p, &deltas, &l0s, cfg.protocol.t_max, cfg.protocol.position)?;
                    row.c_bar = Some(h.c_bar);
                    row.s_bar = Some(h.s_bar);
                }
                Ok(row)
            });
            (r, t0.elapsed().as_secs_f64())
        })
        .collect();
    let mut points = Vec::with_capacity(rows.len());
    for (pt, (r, secs)) in grid.iter().zip(rows) {
        out.time(point_name(pt), secs);
        match r {
            Ok(row) => points.push(row),
            Err(e) => out.fail(point_name(pt), e),
        }
    }
    out.write_with("phase_map.csv", |b| write_phase_map_csv(&points, b))
}

/// Values of the two grid axes other than `axis`, as partial grid points.
fn fixed_points(cfg: &Config, axis: SweepAxis) -> Result<(Vec<f64>, Vec<GridPoint>), CliError> {
    if cfg.model.points.is_some() {
        return Err(CliError::config("model.points: parameter sweeps need grids, not point lists"));
    }
    let ws = cfg.model.w.values("model.w")?;
    let ms = cfg.model.m.values("model.m")?;
    let wps = cfg.model.w_prime.values("model.w_prime")?;
    let mut fixed = Vec::new();
    let swept = match axis {
        SweepAxis::W => {
            for &w_prime in &wps {
                fixed.extend(ms.iter().map(|&m| GridPoint { w: f64::NAN, m, w_prime }));
            }
            ws
        }
        SweepAxis::M => {
            for &w_prime in &wps {
                fixed.extend(ws.iter().map(|&w| GridPoint { w, m: f64::NAN, w_prime }));
            }
            ms
        }
        SweepAxis::WPrime => {
            for &m in &ms {
                fixed.extend(ws.iter().map(|&w| GridPoint { w, m, w_prime: f64::NAN }));
            }
            wps
        }
    };
    Ok((swept, fixed))
}

fn base_params(cfg: &Config, pt: &GridPoint) -> Result<ModelParams, CliError> {
    let zero = |x: f64| if x.is_nan() { 0.0 } else { x };
    cfg.model.params(GridPoint { w: zero(pt.w), m: zero(pt.m), w_prime: zero(pt.w_prime) })
}

#[derive(Serialize)]
struct MobilitySummary {
    file: String,
    w_over_g: Option<f64>,
    m_over_g: Option<f64>,
    w_prime_over_g: Option<f64>,
    values: Vec<f64>,
    labels: Vec<String>,
    mean_d_f: Vec<f64>,
    /// Swept values at which the label changes from the previous one.
    regime_changes: Vec<f64>,
}

fn mobility(
    cfg: &Config,
    out: &mut OutputDir,
    axis: SweepAxis,
    bins: usize,
    estimator: qpssh_core::criticality::DfEstimator,
) -> Result<(), CliError> {
    let (values, fixed) = fixed_points(cfg, axis)?;
    let deltas = cfg.protocol.deltas.values()?;
    let opt = |x: f64| (!x.is_nan()).then_some(x);
    let mut summary = Vec::new();
    for (k, pt) in fixed.iter().enumerate() {
        let t0 = Instant::now();
        let base = base_params(cfg, pt)?;
        let map = match mobility_edge_map(&base, axis, &values, &deltas, bins, estimator, &cfg.thresholds) {
            Ok(m) => m,
            Err(e) => {
                out.fail(format!("map {k}"), e);
                continue;
            }
        };
        let file = format!("mobility/map_{k:03}.csv");
        out.write_with(&file, |b| map.write_csv(b))?;
        summary.push(MobilitySummary {
            file,
            w_over_g: opt(pt.w),
            m_over_g: opt(pt.m),
            w_prime_over_g: opt(pt.w_prime),
            values: map.values.clone(),
            labels: map.classifications.iter().map(|c| c.label.to_string()).collect(),
            mean_d_f: map.d_f.iter().map(|col| col.iter().sum::<f64>() / col.len() as f64).collect(),
            regime_changes: map.regime_changes().iter().map(|&i| map.values[i]).collect(),
        });
        out.time(format!("map {k}"), t0.elapsed().as_secs_f64());
    }
    out.write_json("mobility_summary.json", &summary)
}

fn intercell(cfg: &Config, out: &mut OutputDir, axis: SweepAxis) -> Result<(), CliError> {
    if cfg.model.points.is_some() {
        return Err(CliError::config("model.points: parameter sweeps need grids, not point lists"));
    }
    let ws = cfg.model.w.values("model.w")?;
    let (ys, other) = match axis {
        SweepAxis::M => (cfg.model.m.values("model.m")?, cfg.model.w_prime.values("model.w_prime")?),
        SweepAxis::WPrime => (cfg.model.w_prime.values("model.w_prime")?, cfg.model.m.values("model.m")?),
        SweepAxis::W => return Err(CliError::config("sweep.axis: intercell maps sweep `m` or `w_prime` against W")),
    };
    let [fixed] = other.as_slice() else {
        return Err(CliError::config("model: the parameter not swept by the intercell map must be a single value"));
    };
    let pt = match axis {
        SweepAxis::M => GridPoint { w: 0.0, m: 0.0, w_prime: *fixed },
        _ => GridPoint { w: 0.0, m: *fixed, w_prime: 0.0 },
    };
    let base = cfg.model.params(pt)?;
    let deltas = cfg.protocol.deltas.values()?;
    let t0 = Instant::now();
    let map = intercell_phase_map(&base, &ws, &ys, axis, &deltas, cfg.diagnostics.bulk_fraction)?;
    out.write_with("intercell_map.csv", |b| map.write_csv(b))?;
    let w_max = ws.iter().copied().fold(0.0, f64::max);
    let mut csv = String::from("m_over_g,w_prime_over_g,w_lo,w_hi\n");
    for &y in &ys {
        let (m, wp) = match axis {
            SweepAxis::M => (y, *fixed),
            _ => (*fixed, y),
        };
        for (lo, hi) in topological_w_intervals(m, 1.0, wp, w_max, 4001)? {
            csv.push_str(&format!("{},{},{},{}\n", fmt_f64(m), fmt_f64(wp), fmt_f64(lo), fmt_f64(hi)));
        }
    }
    out.write("intercell_intervals.csv", csv.as_bytes())?;
    out.time("intercell map", t0.elapsed().as_secs_f64());
    Ok(())
}

#[derive(Serialize)]
struct BoundaryValue {
    w_over_g: Option<f64>,
    m_over_g: Option<f64>,
    estimate: BoundaryEstimate,
}

fn boundaries(cfg: &Config, out: &mut OutputDir) -> Result<(), CliError> {
    let ws = cfg.model.w.values("model.w")?;
    let ms = cfg.model.m.values("model.m")?;
    let t0 = Instant::now();
    let mut curves = analytic_boundary_curves(&ws, &ms);
    if cfg.boundaries.numeric {
        let deltas = cfg.protocol.deltas.values()?;
        curves.extend(numeric_boundary_curves(&ws, &ms, cfg.model.n_cells, &deltas)?);
    }
    out.write_with("boundaries.csv", |b| write_curves_csv(&curves, b))?;
    let mut values = Vec::new();
    for &w in &ws {
        values.push(BoundaryValue { w_over_g: Some(w), m_over_g: None, estimate: topological_boundary(w, 1.0)? });
    }
    for &m in &ms {
        values.push(BoundaryValue { w_over_g: None, m_over_g: Some(m), estimate: topological_boundary_w(m, 1.0)? });
    }
    out.write_json("boundary_values.json", &values)?;
    out.time("boundaries", t0.elapsed().as_secs_f64());
    Ok(())
}

#[derive(Serialize)]
struct FitRecord {
    #[serde(flatten)]
    spec: FitSpec,
    fit: ScalingFit,
}

#[derive(Serialize)]
struct DynamicalExponent {
    gap_fit: String,
    nu_fit: String,
    /// `(nu z) / nu`.
    z: f64,
}

#[derive(Serialize)]
struct ScalingReport {
    fits: Vec<FitRecord>,
    dynamical_exponents: Vec<DynamicalExponent>,
}

fn run_fit(spec: &FitSpec, g: f64, deltas: &[f64]) -> qpssh_core::Result<ScalingFit> {
    let window = (spec.window[0], spec.window[1]);
    let source = match spec.source {
        LocSource::Analytic => LocLengthSource::Analytic,
        LocSource::Numeric => LocLengthSource::Numeric { n_cells: spec.n_cells, deltas: deltas.to_vec() },
    };
    match spec.kind {
        FitKind::NuM => fit_nu(spec.at * g, g, window, spec.points, &source),
        FitKind::NuW => fit_nu_w(spec.at * g, g, window, spec.points, &source),
        FitKind::GapM => fit_gap_exponent_m(spec.at * g, g, spec.n_cells, window, spec.points, deltas),
        FitKind::GapW => fit_gap_exponent_w(spec.at * g, g, spec.n_cells, window, spec.points, deltas),
    }
}

fn scaling(cfg: &Config, out: &mut OutputDir) -> Result<(), CliError> {
    let block = cfg.scaling.as_ref().ok_or_else(|| CliError::config("scaling: block is required"))?;
    if block.fits.is_empty() {
        return Err(CliError::config("scaling.fits: need at least one fit"));
    }
    let deltas = cfg.protocol.deltas.values()?;
    let mut fits = Vec::new();
    for spec in &block.fits {
        let t0 = Instant::now();
        match run_fit(spec, cfg.model.g, &deltas) {
            Ok(fit) => fits.push(FitRecord { spec: spec.clone(), fit }),
            Err(e) => out.fail(&spec.name, e),
        }
        out.time(&spec.name, t0.elapsed().as_secs_f64());
    }
    let mut dynamical_exponents = Vec::new();
    for gap in &fits {
        let partner = match gap.spec.kind {
            FitKind::GapM => FitKind::NuM,
            FitKind::GapW => FitKind::NuW,
            _ => continue,
        };
        if let Some(nu) = fits.iter().find(|f| f.spec.kind == partner && f.spec.at == gap.spec.at) {
            dynamical_exponents.push(DynamicalExponent {
                gap_fit: gap.spec.name.clone(),
                nu_fit: nu.spec.name.clone(),
                z: gap.fit.exponent / nu.fit.exponent,
            });
        }
    }
    out.write_json("scaling.json", &ScalingReport { fits, dynamical_exponents })
}

#[derive(Serialize)]
struct HierarchyReport {
    band: BandSelection,
    n_energies: usize,
    hierarchy: BandHierarchy,
}

#[derive(Serialize, Default)]
struct CheckReport {
    pass: bool,
    reports: Vec<EquivalenceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tfim: Option<TfimChain>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hierarchy: Option<HierarchyReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    in_gap_states: Option<Vec<InGapState>>,
}

/// Energies of one band from the exact `+/- sv(B)` spectrum.
fn band_energies(p: &ModelParams, band: BandSelection) -> qpssh_core::Result<Vec<f64>> {
    let tol = ZERO_MODE_THRESHOLD * p.g;
    let e = chiral_energies(&build_gssh(p)?)?;
    Ok(e.into_iter()
        .filter(|&x| match band {
            BandSelection::All => true,
            BandSelection::Positive => x > tol,
            BandSelection::Negative => x < -tol,
        })
        .collect())
}

fn check(cfg: &Config, out: &mut OutputDir) -> Result<(), CliError> {
    let c = &cfg.check;
    if c.kinds.is_empty() {
        return Err(CliError::config("check.kinds: need at least one check"));
    }
    let pt = cfg.model.single_point()?;
    let p = cfg.model.params(pt)?;
    let mut report = CheckReport::default();
    for kind in &c.kinds {
        let t0 = Instant::now();
        let name = serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let r: qpssh_core::Result<()> = (|| {
            match kind {
                CheckKind::TwoD => {
                    let p2 = Params2D {
                        m: p.m,
                        g: p.g,
                        w: p.w,
                        beta: p.beta,
                        delta: p.delta,
                        l_x: 2 * p.n_cells,
                        l_y: c.l_y,
                    };
                    report.reports.push(check_2d_decoupling(&p2)?);
                }
                CheckKind::Aah => report.reports.push(check_aah_limit(&p)?),
                CheckKind::Offdiag => report.reports.push(check_offdiag_aah_limit(&p)?),
                CheckKind::Ising => {
                    let ising = check_ising_block(&p)?;
                    report.reports.push(ising.report);
                    report.tfim = Some(ising.tfim);
                }
                CheckKind::Hierarchy => {
                    let e = band_energies(&p, c.band)?;
                    let hierarchy = band_hierarchy(&e, &c.hierarchy)?;
                    report.hierarchy = Some(HierarchyReport { band: c.band, n_energies: e.len(), hierarchy });
                }
                CheckKind::InGap => {
                    let s = eigensolve(&build_gssh(&p)?)?;
                    report.in_gap_states = Some(in_gap_edge_scan(&s, c.edge_cells, c.weight_threshold, &c.hierarchy)?);
                }
            }
            Ok(())
        })();
        if let Err(e) = r {
            out.fail(&name, e);
        }
        out.time(name, t0.elapsed().as_secs_f64());
    }
    report.pass = out.failures.is_empty() && report.reports.iter().all(|r| r.pass);
    for r in report.reports.iter().filter(|r| !r.pass) {
        out.fail(
            &r.mapping_name,
            format!("deviation {:e} exceeds tolerance {:e}", r.max_spectral_deviation, r.tolerance),
        );
    }
    out.write_json("check.json", &report)
}
