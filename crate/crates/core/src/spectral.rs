//! Exact diagonalization and eigenstate-level diagnostics.
//!
//! Everything here is a pure function of a [`Spectrum`]: participation
//! ratios, fractal dimensions, the real-space winding number, the
//! half-filling gap, edge weights and the zero-mode localization length.

use std::io::Write;

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::model::{disorder_sequence, sublattice_block, Boundary, Entries, LatticeHamiltonian, ModelParams};
use crate::numerics::{fmt_f64, mean, pairwise_sum};

/// Energies below this multiple of `g` are treated as zero modes.
pub const ZERO_MODE_THRESHOLD: f64 = 1e-8;

/// Bonds below this multiple of `g` are flagged as singular in the log sum.
pub const SINGULAR_BOND_THRESHOLD: f64 = 1e-14;

/// Zero modes degenerate to within this multiple of `g` are resolved into
/// sublattice-polarized states, since the eigensolver's mixing of them is
/// arbitrary.
pub const ZERO_MODE_DEGENERACY: f64 = 1e-12;

/// Largest accepted `|H - H^dagger|` relative to the largest entry.
const HERMITIAN_TOL: f64 = 1e-12;

/// A wave-function amplitude whose modulus squared is a probability.
pub trait Amplitude: Copy {
    fn abs2(self) -> f64;
}

impl Amplitude for f64 {
    fn abs2(self) -> f64 {
        self * self
    }
}

impl Amplitude for c64 {
    fn abs2(self) -> f64 {
        self.re * self.re + self.im * self.im
    }
}

/// Eigenvectors stored as columns.
#[derive(Clone, Debug)]
pub enum States {
    Real(Mat<f64>),
    Complex(Mat<c64>),
}

impl States {
    pub fn dim(&self) -> usize {
        match self {
            States::Real(m) => m.nrows(),
            States::Complex(m) => m.nrows(),
        }
    }

    /// `|<site|phi_n>|^2`.
    pub fn prob(&self, site: usize, n: usize) -> f64 {
        match self {
            States::Real(m) => m[(site, n)].abs2(),
            States::Complex(m) => m[(site, n)].abs2(),
        }
    }

    /// Site probabilities of eigenstate `n`.
    pub fn probabilities(&self, n: usize) -> Vec<f64> {
        (0..self.dim()).map(|i| self.prob(i, n)).collect()
    }

    pub fn as_real(&self) -> Option<&Mat<f64>> {
        match self {
            States::Real(m) => Some(m),
            States::Complex(_) => None,
        }
    }
}

/// Sorted eigenvalues and gauge-fixed eigenvectors of a lattice Hamiltonian.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub energies: Vec<f64>,
    pub states: States,
    pub chiral_sign: Vec<i8>,
    pub cell_index: Vec<usize>,
    pub params: Option<ModelParams>,
    pub boundary: Boundary,
    /// Energy unit `g` used by the zero-mode threshold.
    pub energy_unit: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn ipr(&self, n: usize) -> f64 {
        (0..self.states.dim()).map(|i| self.states.prob(i, n).powi(2)).sum()
    }

    pub fn n_cells(&self) -> usize {
        self.cell_index.iter().copied().max().unwrap_or(0)
    }

    /// Probability of eigenstate `n` on the first and last `edge_cells` cells.
    pub fn edge_weight(&self, n: usize, edge_cells: usize) -> Result<f64> {
        let nc = self.n_cells();
        check_edge_cells(edge_cells, nc)?;
        Ok((0..self.states.dim())
            .filter(|&i| is_edge_cell(self.cell_index[i], edge_cells, nc))
            .map(|i| self.states.prob(i, n))
            .sum())
    }
}

fn check_edge_cells(edge_cells: usize, n_cells: usize) -> Result<()> {
    if 2 * edge_cells > n_cells {
        return Err(invalid("edge_cells", format!("{edge_cells} edge cells do not fit twice into {n_cells} cells")));
    }
    Ok(())
}

fn is_edge_cell(cell: usize, edge_cells: usize, n_cells: usize) -> bool {
    cell <= edge_cells || cell > n_cells - edge_cells
}

fn check_hermitian(h: &LatticeHamiltonian) -> Result<()> {
    let err = h.hermiticity_error();
    if err > HERMITIAN_TOL * h.max_abs_entry().max(1.0) {
        return Err(Error::NotHermitian(err));
    }
    Ok(())
}

/// Full eigendecomposition with the deterministic gauge applied.
pub fn eigensolve(h: &LatticeHamiltonian) -> Result<Spectrum> {
    check_hermitian(h)?;
    let (energies, states) = match &h.entries {
        Entries::Real(m) => {
            let (e, mut u) = linalg::eigh_real(m)?;
            polarize_zero_modes(&e, &mut u, &h.chiral_sign, ZERO_MODE_DEGENERACY * h.energy_unit())?;
            (e, States::Real(u))
        }
        Entries::Complex(m) => {
            let (e, u) = linalg::eigh_complex(m)?;
            (e, States::Complex(u))
        }
    };
    Ok(Spectrum {
        energies,
        states,
        chiral_sign: h.chiral_sign.clone(),
        cell_index: h.cell_index.clone(),
        params: h.params.clone(),
        boundary: h.boundary,
        energy_unit: h.energy_unit(),
    })
}

/// Rotate an exactly degenerate zero-energy subspace onto eigenvectors of
/// `Z^T Gamma Z`. Any basis of the subspace is a valid eigenbasis; this one
/// is reproducible and makes each edge mode sit on one edge.
fn polarize_zero_modes(energies: &[f64], u: &mut Mat<f64>, chiral_sign: &[i8], tol: f64) -> Result<()> {
    let zero: Vec<usize> = (0..energies.len()).filter(|&n| energies[n].abs() < tol).collect();
    if zero.len() < 2 {
        return Ok(());
    }
    let l = u.nrows();
    let z = Mat::from_fn(l, zero.len(), |i, c| u[(i, zero[c])]);
    let gz = Mat::from_fn(l, zero.len(), |i, c| f64::from(chiral_sign[i]) * z[(i, c)]);
    let (_, rot) = linalg::eigh_real(&(z.transpose() * &gz))?;
    let mut rotated = &z * &rot;
    linalg::fix_gauge_real(&mut rotated);
    for (c, &n) in zero.iter().enumerate() {
        for i in 0..l {
            u[(i, n)] = rotated[(i, c)];
        }
    }
    Ok(())
}

/// Sorted eigenvalues only.
pub fn eigenvalues(h: &LatticeHamiltonian) -> Result<Vec<f64>> {
    check_hermitian(h)?;
    match &h.entries {
        Entries::Real(m) => linalg::eigvals_real(m),
        Entries::Complex(m) => linalg::eigvals_complex(m),
    }
}

/// Sorted eigenvalues of a chiral Hamiltonian assembled as `+/- sv(B)`.
pub fn chiral_energies(h: &LatticeHamiltonian) -> Result<Vec<f64>> {
    let b = sublattice_block(h)?;
    if b.nrows() != b.ncols() {
        return Err(Error::ChiralStructure(format!(
            "sublattice block is {}x{}, expected square",
            b.nrows(),
            b.ncols()
        )));
    }
    let sv = linalg::singular_values(&b)?;
    let mut e: Vec<f64> = sv.iter().rev().map(|s| -s).collect();
    e.extend(sv);
    Ok(e)
}

/// Singular values of the sublattice block, ascending.
pub fn block_singular_values(h: &LatticeHamiltonian) -> Result<Vec<f64>> {
    linalg::singular_values(&sublattice_block(h)?)
}

/// Inverse participation ratio `sum_l |<l|phi>|^4`.
pub fn ipr_state<T: Amplitude>(phi: &[T]) -> f64 {
    phi.iter().map(|a| a.abs2().powi(2)).sum()
}

/// Fractal dimension `-ln(IPR) / ln(L)`.
pub fn fractal_dimension(ipr: f64, chain_length: usize) -> f64 {
    -ipr.ln() / (chain_length as f64).ln()
}

/// Probability on the first and last `edge_cells` unit cells of a chain
/// state in `a_1, b_1, a_2, ...` order.
pub fn edge_weight<T: Amplitude>(phi: &[T], edge_cells: usize) -> Result<f64> {
    let nc = phi.len() / 2;
    check_edge_cells(edge_cells, nc)?;
    Ok(phi.iter().enumerate().filter(|(i, _)| is_edge_cell(i / 2 + 1, edge_cells, nc)).map(|(_, a)| a.abs2()).sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationDiagnostics {
    pub ipr_per_state: Vec<f64>,
    pub avg_ipr: f64,
    pub avg_npr: f64,
    pub eta: f64,
    pub d_f_per_state: Vec<f64>,
    pub chain_length: usize,
}

impl LocalizationDiagnostics {
    pub fn from_iprs(ipr_per_state: Vec<f64>, chain_length: usize) -> Self {
        let l = chain_length as f64;
        let avg_ipr = mean(&ipr_per_state);
        let npr: Vec<f64> = ipr_per_state.iter().map(|x| 1.0 / (l * x)).collect();
        let avg_npr = mean(&npr);
        let d_f_per_state = ipr_per_state.iter().map(|&x| fractal_dimension(x, chain_length)).collect();
        Self { ipr_per_state, avg_ipr, avg_npr, eta: (avg_ipr * avg_npr).log10(), d_f_per_state, chain_length }
    }

    pub fn mean_d_f(&self) -> f64 {
        mean(&self.d_f_per_state)
    }

    /// Fractal dimension of the spectrally averaged IPR.
    pub fn spectral_d_f(&self) -> f64 {
        fractal_dimension(self.avg_ipr, self.chain_length)
    }
}

pub fn localization_diagnostics(s: &Spectrum) -> LocalizationDiagnostics {
    let iprs = (0..s.len()).map(|n| s.ipr(n)).collect();
    LocalizationDiagnostics::from_iprs(iprs, s.states.dim())
}

/// Real-space winding number `N_w = Tr_B(Gamma Q [Q, X]) / L_B`.
///
/// `Q` is the flattened Hamiltonian. Near-zero modes are resolved into
/// eigenvectors of the chiral operator within their subspace and get the sign
/// of that eigenvalue. The trace runs over the sites of the central
/// `bulk_fraction` of unit cells, and `L_B` counts those sites.
pub fn winding_number(s: &Spectrum, bulk_fraction: f64) -> Result<f64> {
    if s.boundary != Boundary::Open {
        return Err(Error::Boundary { required: "open" });
    }
    if !(bulk_fraction > 0.0 && bulk_fraction <= 1.0) {
        return Err(invalid("bulk_fraction", format!("must lie in (0, 1], got {bulk_fraction}")));
    }
    let v = s
        .states
        .as_real()
        .ok_or_else(|| Error::InvalidInput("winding number requires a real chain spectrum".into()))?;
    let l = s.len();
    let zero_tol = ZERO_MODE_THRESHOLD * s.energy_unit;
    let gamma: Vec<f64> = s.chiral_sign.iter().map(|&x| f64::from(x)).collect();

    let zero: Vec<usize> = (0..l).filter(|&n| s.energies[n].abs() < zero_tol).collect();
    let mut basis = Mat::<f64>::zeros(l, l);
    let mut signs = vec![0.0; l];
    let mut col = 0;
    for n in (0..l).filter(|n| !zero.contains(n)) {
        for i in 0..l {
            basis[(i, col)] = v[(i, n)];
        }
        signs[col] = s.energies[n].signum();
        col += 1;
    }
    if !zero.is_empty() {
        let k = zero.len();
        let z = Mat::from_fn(l, k, |i, c| v[(i, zero[c])]);
        let gz = Mat::from_fn(l, k, |i, c| gamma[i] * z[(i, c)]);
        let m = z.transpose() * &gz;
        let (lambda, u) = linalg::eigh_real(&m)?;
        if let Some(bad) = lambda.iter().find(|x| (x.abs() - 1.0).abs() > 1e-6) {
            return Err(Error::ZeroModePairing(format!("{k} near-zero modes, chiral overlap eigenvalue {bad}")));
        }
        let rotated = &z * &u;
        for c in 0..k {
            for i in 0..l {
                basis[(i, col)] = rotated[(i, c)];
            }
            signs[col] = lambda[c].signum();
            col += 1;
        }
    }

    let nc = s.n_cells();
    let nb = ((bulk_fraction * nc as f64).round() as usize).clamp(1, nc);
    let first = (nc - nb) / 2 + 1;
    let bulk: Vec<usize> = (0..l).filter(|&i| (first..first + nb).contains(&s.cell_index[i])).collect();
    let scaled = Mat::from_fn(bulk.len(), l, |r, c| basis[(bulk[r], c)] * signs[c]);
    let q = &scaled * basis.transpose();

    let x: Vec<f64> = s.cell_index.iter().map(|&c| c as f64).collect();
    let rows: Vec<f64> = bulk
        .iter()
        .enumerate()
        .map(|(r, &i)| {
            let terms: Vec<f64> = (0..l).map(|j| q[(r, j)].powi(2) * (x[i] - x[j])).collect();
            gamma[i] * pairwise_sum(&terms)
        })
        .collect();
    Ok(pairwise_sum(&rows) / bulk.len() as f64)
}

/// `E_{L/2+1} - E_{L/2}` of an ascending spectrum of even length.
pub fn gap_from_energies(energies: &[f64]) -> Result<f64> {
    let l = energies.len();
    if l == 0 || l % 2 != 0 {
        return Err(Error::InvalidInput(format!("half filling needs an even spectrum, got {l}")));
    }
    Ok(energies[l / 2] - energies[l / 2 - 1])
}

pub fn gap_half_filling(s: &Spectrum) -> Result<f64> {
    gap_from_energies(&s.energies)
}

/// Numerical zero-mode inverse localization length and its singular-bond flag.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroModeLocLength {
    pub value: f64,
    pub singular_bond: bool,
}

/// `(1/N_c) sum_n (ln|m_n| - ln|t_n|)` over the chain's bond sequences.
pub fn zero_mode_loc_length_numeric(params: &ModelParams) -> Result<ZeroModeLocLength> {
    linalg::clear_upper_simd();
    let intra = disorder_sequence(params)?;
    let inter = params.inter_cell_sequence()?;
    let floor = SINGULAR_BOND_THRESHOLD * params.g;
    let mut singular = false;
    let mut log_abs = |x: f64| {
        if x.abs() < floor {
            singular = true;
            floor.ln()
        } else {
            x.abs().ln()
        }
    };
    let terms: Vec<f64> = intra.iter().zip(&inter).map(|(&m, &t)| log_abs(m) - log_abs(t)).collect();
    Ok(ZeroModeLocLength { value: mean(&terms), singular_bond: singular })
}

/// Phase average `<ln|a + b cos(theta)|>` over a uniform theta.
pub fn log_mean_abs_cos(a: f64, b: f64) -> Result<f64> {
    let (a, b) = (a.abs(), b.abs());
    if a == 0.0 && b == 0.0 {
        return Err(Error::InvalidInput("ln|0| has no finite phase average".into()));
    }
    Ok(if a > b { ((a + (a * a - b * b).sqrt()) / 2.0).ln() } else { (b / 2.0).ln() })
}

/// Closed-form `Lambda^{-1}` for `W' = 0`.
pub fn zero_mode_loc_length_analytic(m: f64, w: f64, g: f64) -> Result<f64> {
    if g <= 0.0 {
        return Err(invalid("g", format!("must be positive, got {g}")));
    }
    if m < 0.0 || w < 0.0 {
        return Err(invalid("m", format!("m and W must be non-negative, got m = {m}, W = {w}")));
    }
    Ok(log_mean_abs_cos(m, w)? - g.ln())
}

/// Closed-form `Lambda^{-1}` with inter-cell disorder `W'`.
pub fn zero_mode_loc_length_analytic_intercell(m: f64, w: f64, g: f64, w_prime: f64) -> Result<f64> {
    if g <= 0.0 {
        return Err(invalid("g", format!("must be positive, got {g}")));
    }
    Ok(log_mean_abs_cos(m, w)? - log_mean_abs_cos(g, w_prime)?)
}

/// Spectrum CSV with columns `index,energy,ipr,d_f,edge_weight` (1-based index).
pub fn write_spectrum_csv<W: Write>(s: &Spectrum, edge_cells: usize, mut out: W) -> Result<()> {
    let diag = localization_diagnostics(s);
    writeln!(out, "index,energy,ipr,d_f,edge_weight")?;
    for n in 0..s.len() {
        writeln!(
            out,
            "{},{},{},{},{}",
            n + 1,
            fmt_f64(s.energies[n]),
            fmt_f64(diag.ipr_per_state[n]),
            fmt_f64(diag.d_f_per_state[n]),
            fmt_f64(s.edge_weight(n, edge_cells)?)
        )?;
    }
    Ok(())
}
