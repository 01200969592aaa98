//! Checks of the chain's mappings onto related models, and the band
//! hierarchy used to exhibit self-similar spectra.

use std::f64::consts::PI;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::model::{build_2d, build_gssh, disorder_sequence, Boundary, ModelParams, Params2D};
use crate::numerics::mean;
use crate::spectral::{chiral_energies, eigenvalues, ipr_state, Spectrum, ZERO_MODE_THRESHOLD};

/// Safety factor in the perturbative tolerances `5 * (small)^2 * scale`.
pub const PERTURBATIVE_SAFETY: f64 = 5.0;

/// Tolerance for the exact (non-perturbative) identities.
pub const EXACT_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub mapping_name: String,
    /// Worst absolute difference between matched sorted eigenvalues.
    pub max_spectral_deviation: f64,
    /// Perturbative small parameter, when the mapping is a limit.
    pub regime_bound: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    /// Localization regime of the reduced model, when meaningful.
    pub reduced_regime: Option<String>,
}

impl EquivalenceReport {
    fn new(name: &str, deviation: f64, regime_bound: Option<f64>, tolerance: f64) -> Self {
        Self {
            mapping_name: name.into(),
            max_spectral_deviation: deviation,
            regime_bound,
            tolerance,
            pass: deviation <= tolerance,
            reduced_regime: None,
        }
    }
}

fn max_deviation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!("spectra differ in size: {} vs {}", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Real symmetric tridiagonal matrix from its diagonal and off-diagonal,
/// with an optional corner coupling.
fn tridiagonal(diag: &[f64], off: &[f64], corner: Option<f64>) -> Mat<f64> {
    let n = diag.len();
    let mut h = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = diag[i];
    }
    for (i, &t) in off.iter().enumerate() {
        h[(i, i + 1)] = t;
        h[(i + 1, i)] = t;
    }
    if let Some(c) = corner {
        if n > 1 {
            h[(0, n - 1)] += c;
            h[(n - 1, 0)] += c;
        }
    }
    h
}

/// The 2D lattice equals the direct sum of chains at `delta + 2*pi*j / l_y`.
pub fn check_2d_decoupling(p: &Params2D) -> Result<EquivalenceReport> {
    let lattice = eigenvalues(&build_2d(p)?)?;
    let mut chains = Vec::with_capacity(lattice.len());
    for j in 0..p.l_y {
        let k = 2.0 * PI * j as f64 / p.l_y as f64;
        chains.extend(eigenvalues(&build_gssh(&p.chain(k))?)?);
    }
    let dev = max_deviation(&lattice, &sorted(chains))?;
    Ok(EquivalenceReport::new("2d_decoupling", dev, None, EXACT_TOLERANCE))
}

/// Reduced AAH chain of the lower band for `m >> g, W`: on-site
/// `-W cos(2*pi*beta*n + delta)`, hopping `-t_n / 2`.
pub fn aah_reduced_hamiltonian(params: &ModelParams) -> Result<Mat<f64>> {
    let shift = params.m;
    let onsite: Vec<f64> = disorder_sequence(params)?.iter().map(|x| -(x - shift)).collect();
    let inter = params.inter_cell_sequence()?;
    let nc = params.n_cells;
    let off: Vec<f64> = inter[..nc - 1].iter().map(|t| -t / 2.0).collect();
    let corner = (params.boundary == Boundary::Periodic).then(|| -inter[nc - 1] / 2.0);
    Ok(tridiagonal(&onsite, &off, corner))
}

/// Spectrally averaged IPR of the reduced AAH chain.
pub fn aah_reduced_avg_ipr(params: &ModelParams) -> Result<f64> {
    let (_, u) = linalg::eigh_real(&aah_reduced_hamiltonian(params)?)?;
    let n = u.ncols();
    let iprs: Vec<f64> = (0..n).map(|j| ipr_state(&(0..u.nrows()).map(|i| u[(i, j)]).collect::<Vec<_>>())).collect();
    Ok(mean(&iprs))
}

/// Lower-band spectrum versus the reduced AAH chain shifted by `-m`.
/// Tolerance `5 (g/m)^2 m`.
pub fn check_aah_limit(params: &ModelParams) -> Result<EquivalenceReport> {
    if params.m <= 0.0 {
        return Err(invalid("m", "the AAH limit needs m > 0"));
    }
    let full = eigenvalues(&build_gssh(params)?)?;
    let nc = params.n_cells;
    let reduced: Vec<f64> =
        linalg::eigvals_real(&aah_reduced_hamiltonian(params)?)?.iter().map(|e| e - params.m).collect();
    let dev = max_deviation(&full[..nc], &reduced)?;
    let small = params.g / params.m;
    Ok(EquivalenceReport::new("aah_limit", dev, Some(small), PERTURBATIVE_SAFETY * small * small * params.m))
}

/// Regime of an off-diagonal AAH chain with hoppings `(m + W cos)/2`.
pub fn offdiag_regime(m: f64, w: f64) -> &'static str {
    let (m, w) = (m.abs(), w.abs());
    if (m - w).abs() <= 1e-12 * m.max(w) {
        "transition"
    } else if m > w {
        "extended"
    } else {
        "critical"
    }
}

/// The two reduced chains of the `g >> m, W` limit, built on the inter-cell
/// dimers `(b_n, a_{n+1})`: on-site `+/- t_n`, hopping `+/- m_{n+1} / 2`.
pub fn offdiag_reduced_hamiltonians(params: &ModelParams) -> Result<(Mat<f64>, Mat<f64>)> {
    if params.boundary != Boundary::Open {
        return Err(Error::Boundary { required: "open" });
    }
    if params.n_cells < 2 {
        return Err(invalid("n_cells", "need at least two cells for an inter-cell dimer"));
    }
    let intra = disorder_sequence(params)?;
    let inter = params.inter_cell_sequence()?;
    let nd = params.n_cells - 1;
    let t = &inter[..nd];
    let hop: Vec<f64> = intra[1..nd].iter().map(|m| m / 2.0).collect();
    let upper = tridiagonal(t, &hop, None);
    let lower =
        tridiagonal(&t.iter().map(|x| -x).collect::<Vec<_>>(), &hop.iter().map(|x| -x).collect::<Vec<_>>(), None);
    Ok((lower, upper))
}

/// Outer bands (edge modes excluded) versus the two off-diagonal AAH chains.
/// Tolerance `5 ((m + W)/g)^2 g`.
pub fn check_offdiag_aah_limit(params: &ModelParams) -> Result<EquivalenceReport> {
    let (lower, upper) = offdiag_reduced_hamiltonians(params)?;
    let full = eigenvalues(&build_gssh(params)?)?;
    let nd = params.n_cells - 1;
    let l = full.len();
    let dev_lo = max_deviation(&full[..nd], &linalg::eigvals_real(&lower)?)?;
    let dev_hi = max_deviation(&full[l - nd..], &linalg::eigvals_real(&upper)?)?;
    let small = (params.m.abs() + params.w.abs()) / params.g;
    let mut report = EquivalenceReport::new(
        "offdiag_aah_limit",
        dev_lo.max(dev_hi),
        Some(small),
        PERTURBATIVE_SAFETY * small * small * params.g,
    );
    report.reduced_regime = Some(offdiag_regime(params.m, params.w).into());
    Ok(report)
}

/// Transverse-field Ising parameters of the chain: fields `m_n / 2` and
/// couplings `t_n / 2` (the wrap coupling only for periodic chains).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TfimChain {
    pub fields: Vec<f64>,
    pub couplings: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsingCheck {
    pub report: EquivalenceReport,
    pub tfim: TfimChain,
}

/// Eigenvalues of `H` against `+/- sv(B)`, plus the emitted Ising parameters.
pub fn check_ising_block(params: &ModelParams) -> Result<IsingCheck> {
    let h = build_gssh(params)?;
    let dev = max_deviation(&eigenvalues(&h)?, &chiral_energies(&h)?)?;
    let inter = params.inter_cell_sequence()?;
    let n_bonds = if params.boundary == Boundary::Periodic { params.n_cells } else { params.n_cells - 1 };
    let tfim = TfimChain {
        fields: disorder_sequence(params)?.iter().map(|m| m / 2.0).collect(),
        couplings: inter[..n_bonds].iter().map(|t| t / 2.0).collect(),
    };
    Ok(IsingCheck { report: EquivalenceReport::new("ising_block", dev, None, EXACT_TOLERANCE), tfim })
}

/// A cluster of sorted energies and its sub-clusters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub children: Vec<Cluster>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandHierarchy {
    pub root: Cluster,
    /// Intervals at each depth; unsplit clusters carry over unchanged.
    pub levels: Vec<Vec<(f64, f64)>>,
    pub cluster_counts: Vec<usize>,
}

impl BandHierarchy {
    /// Intervals of the deepest level.
    pub fn leaves(&self) -> &[(f64, f64)] {
        self.levels.last().map_or(&[], Vec::as_slice)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyOptions {
    /// A spacing is a candidate gap if it exceeds this multiple of the
    /// cluster's mean level spacing.
    pub gap_factor: f64,
    pub depth: usize,
    /// Candidates at least this fraction of the largest candidate are cut.
    pub dominance: f64,
}

impl Default for HierarchyOptions {
    fn default() -> Self {
        Self { gap_factor: 10.0, depth: 2, dominance: 0.5 }
    }
}

/// Split positions (indices after which to cut) of one sorted cluster.
fn split_points(e: &[f64], opt: &HierarchyOptions) -> Vec<usize> {
    if e.len() < 3 {
        return Vec::new();
    }
    let width = e[e.len() - 1] - e[0];
    if !(width > 0.0) {
        return Vec::new();
    }
    let mean_spacing = width / (e.len() - 1) as f64;
    let gaps: Vec<(usize, f64)> = e
        .windows(2)
        .enumerate()
        .map(|(i, w)| (i, w[1] - w[0]))
        .filter(|&(_, d)| d > opt.gap_factor * mean_spacing)
        .collect();
    let largest = gaps.iter().map(|g| g.1).fold(0.0, f64::max);
    gaps.into_iter().filter(|&(_, d)| d >= opt.dominance * largest).map(|(i, _)| i).collect()
}

fn build_cluster(e: &[f64], depth: usize, opt: &HierarchyOptions) -> Cluster {
    let mut c = Cluster { lo: e[0], hi: e[e.len() - 1], count: e.len(), children: Vec::new() };
    if depth == 0 {
        return c;
    }
    let cuts = split_points(e, opt);
    if cuts.is_empty() {
        return c;
    }
    let mut start = 0;
    for end in cuts.into_iter().map(|i| i + 1).chain(std::iter::once(e.len())) {
        c.children.push(build_cluster(&e[start..end], depth - 1, opt));
        start = end;
    }
    c
}

fn collect_level(c: &Cluster, depth: usize, out: &mut Vec<(f64, f64)>) {
    if depth == 0 || c.children.is_empty() {
        out.push((c.lo, c.hi));
    } else {
        for ch in &c.children {
            collect_level(ch, depth - 1, out);
        }
    }
}

/// Recursive gap splitting of a set of energies (sorted internally).
pub fn band_hierarchy(energies: &[f64], opt: &HierarchyOptions) -> Result<BandHierarchy> {
    if energies.is_empty() {
        return Err(Error::InvalidInput("no energies to cluster".into()));
    }
    if !(opt.gap_factor > 1.0) || opt.depth == 0 || !(opt.dominance > 0.0 && opt.dominance <= 1.0) {
        return Err(invalid("hierarchy", "need gap_factor > 1, depth >= 1 and dominance in (0, 1]"));
    }
    let e = sorted(energies.to_vec());
    let root = build_cluster(&e, opt.depth, opt);
    let mut levels = Vec::with_capacity(opt.depth);
    for d in 1..=opt.depth {
        let mut lv = Vec::new();
        collect_level(&root, d, &mut lv);
        levels.push(lv);
    }
    let cluster_counts = levels.iter().map(Vec::len).collect();
    Ok(BandHierarchy { root, levels, cluster_counts })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandSelection {
    #[default]
    All,
    /// Energies above the zero-mode threshold.
    Positive,
    /// Energies below minus the zero-mode threshold.
    Negative,
}

pub fn select_band(s: &Spectrum, band: BandSelection) -> Vec<f64> {
    let tol = ZERO_MODE_THRESHOLD * s.energy_unit;
    s.energies
        .iter()
        .copied()
        .filter(|&e| match band {
            BandSelection::All => true,
            BandSelection::Positive => e > tol,
            BandSelection::Negative => e < -tol,
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InGapState {
    /// 1-based position in the ascending spectrum.
    pub index: usize,
    pub energy: f64,
    pub edge_weight: f64,
}

/// Edge-localized eigenstates at nonzero energy that sit inside a gap of the
/// remaining spectrum.
///
/// States with edge weight above `weight_threshold` and `|E|` above the
/// zero-mode threshold are candidates. The other energies are clustered with
/// [`band_hierarchy`]; a candidate is kept if its energy lies outside every
/// leaf cluster.
pub fn in_gap_edge_scan(
    s: &Spectrum,
    edge_cells: usize,
    weight_threshold: f64,
    opt: &HierarchyOptions,
) -> Result<Vec<InGapState>> {
    if s.boundary != Boundary::Open {
        return Err(Error::Boundary { required: "open" });
    }
    let zero = ZERO_MODE_THRESHOLD * s.energy_unit;
    let mut candidates = Vec::new();
    let mut rest = Vec::new();
    for n in 0..s.len() {
        let e = s.energies[n];
        let w = s.edge_weight(n, edge_cells)?;
        if w > weight_threshold && e.abs() > zero {
            candidates.push(InGapState { index: n + 1, energy: e, edge_weight: w });
        } else {
            rest.push(e);
        }
    }
    if candidates.is_empty() || rest.is_empty() {
        return Ok(Vec::new());
    }
    let hierarchy = band_hierarchy(&rest, opt)?;
    let width = hierarchy.root.hi - hierarchy.root.lo;
    let tol = 1e-9 * width.max(s.energy_unit);
    Ok(candidates
        .into_iter()
        .filter(|c| !hierarchy.leaves().iter().any(|&(lo, hi)| c.energy >= lo - tol && c.energy <= hi + tol))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hierarchy_splits_two_flat_bands() {
        let e: Vec<f64> = (0..100).map(|i| if i < 50 { -1.0 } else { 1.0 }).collect();
        let h = band_hierarchy(&e, &HierarchyOptions { depth: 3, ..Default::default() }).unwrap();
        assert_eq!(h.cluster_counts, vec![2, 2, 2]);
    }

    #[test]
    fn hierarchy_keeps_uniform_band_whole() {
        let e: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let h = band_hierarchy(&e, &HierarchyOptions::default()).unwrap();
        assert_eq!(h.cluster_counts, vec![1, 1]);
    }

    #[test]
    fn hierarchy_only_cuts_dominant_gaps() {
        // Mean spacing of [0, 0.01, ..., 0.09, 1, 1.01, ..., 1.09, 5] is ~0.24;
        // the 0.91 and 3.91 gaps exceed 10x only for 3.91.
        let mut e: Vec<f64> = (0..10).map(|i| i as f64 * 0.01).collect();
        e.extend((0..10).map(|i| 1.0 + i as f64 * 0.01));
        e.push(5.0);
        let h = band_hierarchy(&e, &HierarchyOptions { depth: 1, ..Default::default() }).unwrap();
        assert_eq!(h.cluster_counts, vec![2]);
        assert_eq!(h.root.children[1].count, 1);
    }

    #[test]
    fn offdiag_regime_labels() {
        assert_eq!(offdiag_regime(0.5, 0.3), "extended");
        assert_eq!(offdiag_regime(0.3, 0.5), "critical");
        assert_eq!(offdiag_regime(0.4, 0.4), "transition");
    }

    #[test]
    fn tfim_fields_are_half_bonds() {
        let p = ModelParams::new(1.0, 0.5, 4, Boundary::Open);
        let c = check_ising_block(&p).unwrap();
        assert!((c.tfim.fields[0] - disorder_sequence(&p).unwrap()[0] / 2.0).abs() < 1e-15);
        assert_eq!(c.tfim.couplings, vec![0.5; 3]);
        assert!(c.report.pass);
    }
}
