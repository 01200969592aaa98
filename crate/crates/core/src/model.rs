//! Hamiltonians of the quasiperiodic SSH (gSSH) chain and its 2D parent lattice.
//!
//! Sites are ordered `a_1, b_1, a_2, b_2, ...` so that the A->B hopping block is
//! lower bidiagonal. Unit-cell indices `n` run from 1 to `N_c`, and the
//! modulation phase of cell `n` is `2*pi*beta*n + delta`.

use std::f64::consts::PI;
use std::io::Write;

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Inverse golden ratio `(sqrt(5) - 1) / 2`, the default modulation frequency.
pub const GOLDEN_BETA: f64 = 0.618_033_988_749_894_9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Open,
    Periodic,
}

/// Parameters of one gSSH chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Mean intra-cell tunneling.
    pub m: f64,
    /// Homogeneous inter-cell tunneling; sets the energy unit.
    pub g: f64,
    /// Intra-cell quasiperiodic disorder strength.
    pub w: f64,
    /// Inter-cell quasiperiodic disorder strength.
    pub w_prime: f64,
    /// Modulation frequency as requested (see [`ModelParams::effective_beta`]).
    pub beta: f64,
    /// Disorder phase in radians.
    pub delta: f64,
    pub n_cells: usize,
    pub boundary: Boundary,
}

impl ModelParams {
    /// Chain with `g = 1`, no inter-cell disorder, golden `beta` and `delta = 0`.
    pub fn new(m: f64, w: f64, n_cells: usize, boundary: Boundary) -> Self {
        Self { m, g: 1.0, w, w_prime: 0.0, beta: GOLDEN_BETA, delta: 0.0, n_cells, boundary }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_g(mut self, g: f64) -> Self {
        self.g = g;
        self
    }

    pub fn with_w_prime(mut self, w_prime: f64) -> Self {
        self.w_prime = w_prime;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_n_cells(mut self, n_cells: usize) -> Self {
        self.n_cells = n_cells;
        self
    }

    /// Chain length `L = 2 N_c`.
    pub fn chain_length(&self) -> usize {
        2 * self.n_cells
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cells == 0 {
            return Err(invalid("n_cells", "must be at least 1"));
        }
        for (name, v) in [
            ("m", self.m),
            ("g", self.g),
            ("w", self.w),
            ("w_prime", self.w_prime),
            ("beta", self.beta),
            ("delta", self.delta),
        ] {
            if !v.is_finite() {
                return Err(invalid(name, format!("must be finite, got {v}")));
            }
        }
        let has_inter_cell = self.n_cells > 1 || self.boundary == Boundary::Periodic;
        if has_inter_cell && self.g <= 0.0 {
            return Err(invalid("g", format!("must be positive, got {}", self.g)));
        }
        self.effective_beta().map(|_| ())
    }

    /// Modulation frequency actually used by the builders.
    ///
    /// Open chains use `beta` unchanged. Periodic rings replace the golden
    /// value by the Fibonacci approximant `F_{k-1}/F_k` with `F_k = N_c`, and
    /// accept any other `beta` only if `beta * N_c` is an integer, so that the
    /// wrap bond carries no phase defect.
    pub fn effective_beta(&self) -> Result<f64> {
        if self.boundary == Boundary::Open {
            return Ok(self.beta);
        }
        if (self.beta - GOLDEN_BETA).abs() < 1e-12 {
            return fibonacci_approximant(self.n_cells).map(|(p, q)| p as f64 / q as f64).ok_or_else(|| {
                invalid(
                    "n_cells",
                    format!("periodic chains with golden beta need a Fibonacci number of cells, got {}", self.n_cells),
                )
            });
        }
        let wraps = self.beta * self.n_cells as f64;
        if (wraps - wraps.round()).abs() > 1e-9 {
            return Err(invalid(
                "beta",
                format!("beta * n_cells = {wraps} must be an integer under periodic boundaries"),
            ));
        }
        Ok(self.beta)
    }

    /// Modulation phase `2*pi*beta*n + delta` of cell `n` (1-based).
    fn phase(&self, beta: f64, n: usize) -> f64 {
        2.0 * PI * beta * n as f64 + self.delta
    }

    /// Inter-cell bonds `t_n = g + W' cos(2*pi*beta*n + delta)`, n = 1..N_c.
    ///
    /// Bond `n` joins `b_n` and `a_{n+1}`; the last entry is the wrap bond and
    /// only enters periodic chains.
    pub fn inter_cell_sequence(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let beta = self.effective_beta()?;
        Ok((1..=self.n_cells).map(|n| self.g + self.w_prime * self.phase(beta, n).cos()).collect())
    }
}

/// Fibonacci pair `(F_{k-1}, F_k)` with `F_k = n`, if `n` is a Fibonacci number.
pub fn fibonacci_approximant(n: usize) -> Option<(u64, u64)> {
    let (mut prev, mut cur) = (1u64, 1u64);
    while (cur as usize) < n {
        let next = prev.checked_add(cur)?;
        prev = cur;
        cur = next;
    }
    (cur as usize == n).then_some((prev, cur))
}

/// Intra-cell tunnelings `m_n = m + W cos(2*pi*beta*n + delta)`, n = 1..N_c.
pub fn disorder_sequence(params: &ModelParams) -> Result<Vec<f64>> {
    crate::linalg::clear_upper_simd();
    params.validate()?;
    let beta = params.effective_beta()?;
    Ok((1..=params.n_cells).map(|n| params.m + params.w * params.phase(beta, n).cos()).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sublattice {
    A,
    B,
}

/// Dense matrix storage; the chain is real unless complex phases are present.
#[derive(Clone, Debug)]
pub enum Entries {
    Real(Mat<f64>),
    Complex(Mat<c64>),
}

impl Entries {
    pub fn dim(&self) -> usize {
        match self {
            Entries::Real(m) => m.nrows(),
            Entries::Complex(m) => m.nrows(),
        }
    }

    /// Entry `(i, j)` promoted to complex.
    pub fn get(&self, i: usize, j: usize) -> c64 {
        match self {
            Entries::Real(m) => c64::new(m[(i, j)], 0.0),
            Entries::Complex(m) => m[(i, j)],
        }
    }
}

/// Explicit Hermitian tight-binding matrix with per-site labels.
#[derive(Clone, Debug)]
pub struct LatticeHamiltonian {
    pub entries: Entries,
    pub sublattice: Vec<Sublattice>,
    /// Unit-cell index `n` (1-based) of every site; the data of the position operator.
    pub cell_index: Vec<usize>,
    /// Row index along y for 2D lattices (0 for chains).
    pub row_index: Vec<usize>,
    /// `+1` on A, `-1` on B: the diagonal of the chiral operator.
    pub chiral_sign: Vec<i8>,
    /// Originating chain parameters, if this is a gSSH chain.
    pub params: Option<ModelParams>,
    /// Modulation frequency used for the build.
    pub effective_beta: f64,
    pub boundary: Boundary,
}

impl LatticeHamiltonian {
    pub fn dim(&self) -> usize {
        self.entries.dim()
    }

    /// `max |H_ij - conj(H_ji)|`.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                let d = match &self.entries {
                    Entries::Real(m) => (m[(i, j)] - m[(j, i)]).abs(),
                    Entries::Complex(m) => (m[(i, j)] - m[(j, i)].conj()).norm(),
                };
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Largest absolute entry, the scale used by relative tolerances.
    pub fn max_abs_entry(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                worst = worst.max(self.entries.get(i, j).norm());
            }
        }
        worst
    }

    /// Energy unit: `g` of the originating chain, or 1.
    pub fn energy_unit(&self) -> f64 {
        self.params.as_ref().map_or(1.0, |p| p.g)
    }

    /// Nonzero entries as CSV `row,col,value` (real) or `row,col,re,im` (complex).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        use crate::numerics::fmt_f64;
        let n = self.dim();
        match &self.entries {
            Entries::Real(m) => {
                writeln!(out, "row,col,value")?;
                for i in 0..n {
                    for j in 0..n {
                        if m[(i, j)] != 0.0 {
                            writeln!(out, "{i},{j},{}", fmt_f64(m[(i, j)]))?;
                        }
                    }
                }
            }
            Entries::Complex(m) => {
                writeln!(out, "row,col,re,im")?;
                for i in 0..n {
                    for j in 0..n {
                        let z = m[(i, j)];
                        if z != c64::new(0.0, 0.0) {
                            writeln!(out, "{i},{j},{},{}", fmt_f64(z.re), fmt_f64(z.im))?;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Dense row-major little-endian f64 dump; complex entries are stored as
    /// interleaved `(re, im)` pairs.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                match &self.entries {
                    Entries::Real(m) => out.write_all(&m[(i, j)].to_le_bytes())?,
                    Entries::Complex(m) => {
                        out.write_all(&m[(i, j)].re.to_le_bytes())?;
                        out.write_all(&m[(i, j)].im.to_le_bytes())?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn chain_labels(n_cells: usize) -> (Vec<Sublattice>, Vec<usize>, Vec<i8>) {
    let mut sub = Vec::with_capacity(2 * n_cells);
    let mut cell = Vec::with_capacity(2 * n_cells);
    let mut sign = Vec::with_capacity(2 * n_cells);
    for n in 1..=n_cells {
        sub.extend([Sublattice::A, Sublattice::B]);
        cell.extend([n, n]);
        sign.extend([1, -1]);
    }
    (sub, cell, sign)
}

/// Build the gSSH chain Hamiltonian, including inter-cell disorder `W'`.
pub fn build_gssh(params: &ModelParams) -> Result<LatticeHamiltonian> {
    params.validate()?;
    let beta = params.effective_beta()?;
    let nc = params.n_cells;
    let intra = disorder_sequence(params)?;
    let inter = params.inter_cell_sequence()?;
    let l = 2 * nc;
    let mut h = Mat::<f64>::zeros(l, l);
    for i in 0..nc {
        let (a, b) = (2 * i, 2 * i + 1);
        h[(a, b)] += intra[i];
        h[(b, a)] += intra[i];
        let wraps = i + 1 < nc || params.boundary == Boundary::Periodic;
        if wraps {
            let next_a = (2 * i + 2) % l;
            h[(b, next_a)] += inter[i];
            h[(next_a, b)] += inter[i];
        }
    }
    let (sublattice, cell_index, chiral_sign) = chain_labels(nc);
    Ok(LatticeHamiltonian {
        entries: Entries::Real(h),
        sublattice,
        cell_index,
        row_index: vec![0; l],
        chiral_sign,
        params: Some(ModelParams { beta, ..params.clone() }),
        effective_beta: beta,
        boundary: params.boundary,
    })
}

/// Parameters of the 2D lattice whose y-Fourier modes are gSSH chains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params2D {
    pub m: f64,
    pub g: f64,
    pub w: f64,
    pub beta: f64,
    pub delta: f64,
    /// Sites per row, `2 N_c` (open along x).
    pub l_x: usize,
    /// Number of rows (periodic along y).
    pub l_y: usize,
}

impl Params2D {
    pub fn new(m: f64, w: f64, l_x: usize, l_y: usize) -> Self {
        Self { m, g: 1.0, w, beta: GOLDEN_BETA, delta: 0.0, l_x, l_y }
    }

    pub fn n_cells(&self) -> usize {
        self.l_x / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.l_y == 0 {
            return Err(invalid("l_y", "must be at least 1"));
        }
        if self.l_x == 0 || self.l_x % 2 != 0 {
            return Err(invalid("l_x", format!("must be a positive even number, got {}", self.l_x)));
        }
        if self.l_x > 2 && self.g <= 0.0 {
            return Err(invalid("g", format!("must be positive, got {}", self.g)));
        }
        Ok(())
    }

    /// The chain obtained for transverse momentum `k` (phase shift `delta + k`).
    pub fn chain(&self, k: f64) -> ModelParams {
        ModelParams::new(self.m, self.w, self.n_cells(), Boundary::Open)
            .with_g(self.g)
            .with_beta(self.beta)
            .with_delta(self.delta + k)
    }
}

/// Build the 2D lattice: intra-cell `m` and inter-cell `g` along every row, and
/// inter-row hoppings `(W/2) e^{-/+ i theta_n}` from `a_{n,y}` to `b_{n,y-/+1}`,
/// `theta_n = 2*pi*beta*n + delta`, periodic in y. Coinciding neighbours
/// (`l_y = 1, 2`) accumulate.
pub fn build_2d(p: &Params2D) -> Result<LatticeHamiltonian> {
    p.validate()?;
    let (lx, ly, nc) = (p.l_x, p.l_y, p.n_cells());
    let dim = lx * ly;
    let idx = |row: usize, site: usize| row * lx + site;
    let mut h = Mat::<c64>::zeros(dim, dim);
    let mut add = |i: usize, j: usize, v: c64| {
        h[(i, j)] += v;
        h[(j, i)] += v.conj();
    };
    for y in 0..ly {
        let down = (y + ly - 1) % ly;
        let up = (y + 1) % ly;
        for c in 0..nc {
            let n = c + 1;
            let (a, b) = (2 * c, 2 * c + 1);
            add(idx(y, a), idx(y, b), c64::new(p.m, 0.0));
            if c + 1 < nc {
                add(idx(y, b), idx(y, a + 2), c64::new(p.g, 0.0));
            }
            let theta = 2.0 * PI * p.beta * n as f64 + p.delta;
            let half = 0.5 * p.w;
            add(idx(y, a), idx(down, b), c64::from_polar(half, -theta));
            add(idx(y, a), idx(up, b), c64::from_polar(half, theta));
        }
    }
    let mut sublattice = Vec::with_capacity(dim);
    let mut cell_index = Vec::with_capacity(dim);
    let mut row_index = Vec::with_capacity(dim);
    let mut chiral_sign = Vec::with_capacity(dim);
    for y in 0..ly {
        let (s, c, g) = chain_labels(nc);
        sublattice.extend(s);
        cell_index.extend(c);
        chiral_sign.extend(g);
        row_index.extend(std::iter::repeat(y).take(lx));
    }
    Ok(LatticeHamiltonian {
        entries: Entries::Complex(h),
        sublattice,
        cell_index,
        row_index,
        chiral_sign,
        params: None,
        effective_beta: p.beta,
        boundary: Boundary::Open,
    })
}

/// Connected-component label of every site, components numbered in order of
/// their lowest site. Entries with magnitude `<= tol` count as absent.
pub fn connected_components(h: &LatticeHamiltonian, tol: f64) -> Vec<usize> {
    let n = h.dim();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        label[start] = next;
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if label[j] == usize::MAX && h.entries.get(i, j).norm() > tol {
                    label[j] = next;
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    label
}

/// Number of connected components of the hopping graph.
pub fn component_count(h: &LatticeHamiltonian, tol: f64) -> usize {
    connected_components(h, tol).into_iter().max().map_or(0, |m| m + 1)
}

/// A->B hopping block `B` (rows: A sites, columns: B sites, both in site
/// order), so that `H = [[0, B], [B^T, 0]]` up to a site permutation.
pub fn sublattice_block(h: &LatticeHamiltonian) -> Result<Mat<f64>> {
    let m = match &h.entries {
        Entries::Real(m) => m,
        Entries::Complex(_) => return Err(Error::ChiralStructure("sublattice block requires real entries".into())),
    };
    let a_sites: Vec<usize> = (0..h.dim()).filter(|&i| h.sublattice[i] == Sublattice::A).collect();
    let b_sites: Vec<usize> = (0..h.dim()).filter(|&i| h.sublattice[i] == Sublattice::B).collect();
    for i in 0..h.dim() {
        for j in 0..h.dim() {
            if h.sublattice[i] == h.sublattice[j] && m[(i, j)] != 0.0 {
                return Err(Error::ChiralStructure(format!("nonzero same-sublattice amplitude at ({i}, {j})")));
            }
        }
    }
    Ok(Mat::from_fn(a_sites.len(), b_sites.len(), |r, c| m[(a_sites[r], b_sites[c])]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn real(h: &LatticeHamiltonian) -> &Mat<f64> {
        match &h.entries {
            Entries::Real(m) => m,
            Entries::Complex(_) => panic!("expected real entries"),
        }
    }

    #[test]
    fn golden_constant_is_exact() {
        assert_eq!(GOLDEN_BETA, (5f64.sqrt() - 1.0) / 2.0);
    }

    #[test]
    fn clean_sequence_is_constant() {
        let p = ModelParams::new(1.0, 0.0, 3, Boundary::Open).with_delta(0.7);
        assert_eq!(disorder_sequence(&p).unwrap(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn rational_beta_gives_exact_cosines() {
        let p = ModelParams::new(0.0, 1.0, 2, Boundary::Open).with_beta(0.5);
        let s = disorder_sequence(&p).unwrap();
        assert!((s[0] + 1.0).abs() < 1e-15 && (s[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fibonacci_detection() {
        assert_eq!(fibonacci_approximant(610), Some((377, 610)));
        assert_eq!(fibonacci_approximant(8), Some((5, 8)));
        assert_eq!(fibonacci_approximant(16), None);
        assert_eq!(fibonacci_approximant(1), Some((1, 1)));
    }

    #[test]
    fn periodic_rejects_non_fibonacci_sizes() {
        let p = ModelParams::new(1.0, 1.0, 16, Boundary::Periodic);
        assert!(matches!(p.validate(), Err(Error::InvalidParameter { name: "n_cells", .. })));
        let q = p.clone().with_n_cells(13);
        assert_eq!(q.effective_beta().unwrap(), 8.0 / 13.0);
        let commensurate = p.with_beta(0.25);
        assert_eq!(commensurate.effective_beta().unwrap(), 0.25);
    }

    #[test]
    fn zero_cells_rejected() {
        let p = ModelParams::new(1.0, 0.0, 0, Boundary::Open);
        assert!(build_gssh(&p).is_err());
    }

    #[test]
    fn dimerized_limit_has_single_bond() {
        let h = build_gssh(&ModelParams::new(0.0, 0.0, 2, Boundary::Open)).unwrap();
        let m = real(&h);
        for i in 0..4 {
            for j in 0..4 {
                let expect = if (i, j) == (1, 2) || (i, j) == (2, 1) { 1.0 } else { 0.0 };
                assert_eq!(m[(i, j)], expect);
            }
        }
    }

    #[test]
    fn periodic_wrap_bond_uses_last_cell() {
        let p = ModelParams::new(0.5, 0.0, 3, Boundary::Periodic).with_w_prime(0.4);
        let h = build_gssh(&p).unwrap();
        let t = p.inter_cell_sequence().unwrap();
        assert_eq!(real(&h)[(5, 0)], t[2]);
        assert_eq!(real(&h)[(0, 5)], t[2]);
    }

    #[test]
    fn block_of_dimerized_limit() {
        let h = build_gssh(&ModelParams::new(0.0, 0.0, 2, Boundary::Open)).unwrap();
        let b = sublattice_block(&h).unwrap();
        assert_eq!((b[(0, 0)], b[(0, 1)], b[(1, 0)], b[(1, 1)]), (0.0, 0.0, 1.0, 0.0));
    }

    #[test]
    fn block_rejects_same_sublattice_hopping() {
        let mut h = build_gssh(&ModelParams::new(1.0, 0.0, 2, Boundary::Open)).unwrap();
        if let Entries::Real(m) = &mut h.entries {
            m[(0, 2)] = 0.1;
            m[(2, 0)] = 0.1;
        }
        assert!(matches!(sublattice_block(&h), Err(Error::ChiralStructure(_))));
    }

    #[test]
    fn two_d_rejects_empty_rows() {
        assert!(build_2d(&Params2D::new(1.0, 1.0, 4, 0)).is_err());
    }

    #[test]
    fn two_d_without_disorder_decouples_rows() {
        let h = build_2d(&Params2D::new(0.7, 0.0, 8, 4)).unwrap();
        assert_eq!(component_count(&h, 0.0), 4);
    }

    #[test]
    fn two_d_at_zero_m_splits_in_two() {
        let h = build_2d(&Params2D::new(0.0, 1.0, 16, 8)).unwrap();
        assert_eq!(component_count(&h, 1e-14), 2);
        let h = build_2d(&Params2D::new(0.5, 1.0, 16, 8)).unwrap();
        assert_eq!(component_count(&h, 1e-14), 1);
    }

    #[test]
    fn csv_lists_nonzero_entries() {
        let h = build_gssh(&ModelParams::new(0.0, 0.0, 2, Boundary::Open)).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        let mut bin = Vec::new();
        h.write_binary(&mut bin).unwrap();
        assert_eq!(bin.len(), 16 * 8);
    }
}
