//! Strict JSON run configuration.
//!
//! Every block rejects unknown keys. Parameter grids are in units of `g` and
//! accept a single number, an explicit list, or `{"min", "max", "num"}`.

use std::f64::consts::PI;
use std::path::Path;

use qpssh_core::criticality::{DfEstimator, SweepAxis, Thresholds};
use qpssh_core::dynamics::{PositionReference, TimeAveraging, WalkOptions};
use qpssh_core::equivalence::{BandSelection, HierarchyOptions};
use qpssh_core::model::{Boundary, ModelParams, GOLDEN_BETA};
use qpssh_core::numerics::linspace;
use serde::{Deserialize, Serialize};

use crate::{CliError, Command};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub min: f64,
    pub max: f64,
    pub num: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Single(f64),
    Values(Vec<f64>),
    Range(RangeSpec),
}

impl Default for Grid {
    fn default() -> Self {
        Grid::Single(0.0)
    }
}

impl Grid {
    pub fn values(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let v = match self {
            Grid::Single(x) => vec![*x],
            Grid::Values(v) => v.clone(),
            Grid::Range(r) => {
                if r.num == 0 {
                    return Err(CliError::config(format!("{name}.num: grid needs at least one point")));
                }
                if !(r.min <= r.max) {
                    return Err(CliError::config(format!("{name}: min {} exceeds max {}", r.min, r.max)));
                }
                if r.num == 1 {
                    vec![r.min]
                } else {
                    linspace(r.min, r.max, r.num)
                }
            }
        };
        if v.is_empty() {
            return Err(CliError::config(format!("{name}: grid is empty")));
        }
        if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
            return Err(CliError::config(format!("{name}: non-finite grid value {bad}")));
        }
        Ok(v)
    }
}

fn default_g() -> f64 {
    1.0
}

fn default_n_cells() -> usize {
    16
}

/// Hamiltonian knobs. `m`, `w` and `w_prime` are grids in units of `g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    #[serde(default)]
    pub m: Grid,
    #[serde(default)]
    pub w: Grid,
    #[serde(default)]
    pub w_prime: Grid,
    #[serde(default = "default_g")]
    pub g: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Disorder phase of single-point commands.
    #[serde(default)]
    pub delta: f64,
    #[serde(default = "default_n_cells")]
    pub n_cells: usize,
    #[serde(default)]
    pub boundary: Boundary,
    /// Explicit `(W/g, m/g)` pairs; replaces the `w` x `m` product.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<[f64; 2]>>,
    /// Names of the explicit points, in the same order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl Default for ModelBlock {
    fn default() -> Self {
        Self {
            m: Grid::default(),
            w: Grid::default(),
            w_prime: Grid::default(),
            g: 1.0,
            beta: None,
            delta: 0.0,
            n_cells: default_n_cells(),
            boundary: Boundary::Open,
            points: None,
            labels: None,
        }
    }
}

/// One `(W/g, m/g, W'/g)` grid point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridPoint {
    pub w: f64,
    pub m: f64,
    pub w_prime: f64,
}

impl ModelBlock {
    /// Parameters of a point, with values scaled by `g`.
    pub fn params(&self, pt: GridPoint) -> Result<ModelParams, CliError> {
        let p = ModelParams {
            m: pt.m * self.g,
            g: self.g,
            w: pt.w * self.g,
            w_prime: pt.w_prime * self.g,
            beta: self.beta.unwrap_or(GOLDEN_BETA),
            delta: self.delta,
            n_cells: self.n_cells,
            boundary: self.boundary,
        };
        p.validate().map_err(|e| CliError::config(format!("model: {e}")))?;
        Ok(p)
    }

    /// Grid points in row-major order: `W'` slowest, then `m`, then `W`.
    pub fn grid(&self) -> Result<Vec<GridPoint>, CliError> {
        let wp = self.w_prime.values("model.w_prime")?;
        let mut out = Vec::new();
        if let Some(points) = &self.points {
            if points.is_empty() {
                return Err(CliError::config("model.points: list is empty"));
            }
            for &x in &wp {
                out.extend(points.iter().map(|&[w, m]| GridPoint { w, m, w_prime: x }));
            }
        } else {
            let ws = self.w.values("model.w")?;
            let ms = self.m.values("model.m")?;
            for &x in &wp {
                for &m in &ms {
                    out.extend(ws.iter().map(|&w| GridPoint { w, m, w_prime: x }));
                }
            }
        }
        for pt in &out {
            self.params(*pt)?;
        }
        Ok(out)
    }

    pub fn single_point(&self) -> Result<GridPoint, CliError> {
        let grid = self.grid()?;
        match grid.as_slice() {
            [pt] => Ok(*pt),
            _ => Err(CliError::config(format!("model: expected a single parameter point, got {}", grid.len()))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformPhases {
    /// `delta_j = 2 pi j / count`.
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Deltas {
    List(Vec<f64>),
    Uniform(UniformPhases),
}

impl Default for Deltas {
    fn default() -> Self {
        Deltas::Uniform(UniformPhases { count: 8 })
    }
}

impl Deltas {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        let v: Vec<f64> = match self {
            Deltas::List(v) => v.clone(),
            Deltas::Uniform(u) => (0..u.count).map(|j| 2.0 * PI * j as f64 / u.count as f64).collect(),
        };
        if v.is_empty() {
            return Err(CliError::config("protocol.deltas: need at least one phase"));
        }
        Ok(v)
    }
}

fn default_l0s() -> Vec<usize> {
    vec![15, 16, 17, 18]
}

fn default_t_max() -> f64 {
    14.0
}

fn default_num_times() -> usize {
    512
}

fn default_true() -> bool {
    true
}

/// Quantum-walk protocol; times in units of `1/g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolBlock {
    #[serde(default)]
    pub deltas: Deltas,
    #[serde(default = "default_l0s")]
    pub l0s: Vec<usize>,
    /// Evolution horizon `g tau`.
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_num_times")]
    pub num_times: usize,
    #[serde(default)]
    pub averaging: TimeAveraging,
    #[serde(default)]
    pub position: PositionReference,
    /// Write one density CSV per instance.
    #[serde(default = "default_true")]
    pub write_density: bool,
}

impl Default for ProtocolBlock {
    fn default() -> Self {
        Self {
            deltas: Deltas::default(),
            l0s: default_l0s(),
            t_max: default_t_max(),
            num_times: default_num_times(),
            averaging: TimeAveraging::default(),
            position: PositionReference::default(),
            write_density: true,
        }
    }
}

impl ProtocolBlock {
    pub fn times(&self) -> Result<Vec<f64>, CliError> {
        if self.num_times == 0 {
            return Err(CliError::config("protocol.num_times: time grid is empty"));
        }
        if !(self.t_max >= 0.0) || !self.t_max.is_finite() {
            return Err(CliError::config(format!("protocol.t_max: must be finite and >= 0, got {}", self.t_max)));
        }
        if self.num_times == 1 {
            return Ok(vec![self.t_max]);
        }
        if self.t_max == 0.0 {
            return Err(CliError::config("protocol.t_max: several times need t_max > 0"));
        }
        Ok(linspace(0.0, self.t_max, self.num_times))
    }

    pub fn l0s(&self, chain_length: usize) -> Result<Vec<usize>, CliError> {
        if self.l0s.is_empty() {
            return Err(CliError::config("protocol.l0s: need at least one initial site"));
        }
        if let Some(bad) = self.l0s.iter().find(|&&l| l == 0 || l > chain_length) {
            return Err(CliError::config(format!("protocol.l0s: site {bad} outside 1..={chain_length}")));
        }
        Ok(self.l0s.clone())
    }

    pub fn walk_options(&self) -> WalkOptions {
        WalkOptions { averaging: self.averaging, position: self.position }
    }
}

fn default_bulk_fraction() -> f64 {
    0.5
}

fn default_edge_cells() -> usize {
    1
}

/// Which observables a sweep evaluates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsBlock {
    #[serde(default = "default_true")]
    pub winding: bool,
    /// Instance-averaged `C` and `S` at the protocol horizon.
    #[serde(default)]
    pub dynamics: bool,
    #[serde(default = "default_bulk_fraction")]
    pub bulk_fraction: f64,
    #[serde(default = "default_edge_cells")]
    pub edge_cells: usize,
}

impl Default for DiagnosticsBlock {
    fn default() -> Self {
        Self { winding: true, dynamics: false, bulk_fraction: 0.5, edge_cells: 1 }
    }
}

fn default_dir() -> String {
    "out".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_dir")]
    pub dir: String,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParallelismBlock {
    /// Worker threads; `--jobs` and `QPSSH_JOBS` take precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

fn default_bins() -> usize {
    20
}

/// What `sweep` computes over the model grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepBlock {
    /// One phase-map row per grid point.
    PhaseMap,
    /// Energy-resolved `D_f` along `axis`, one map per value of the other
    /// parameter.
    MobilityEdges {
        axis: SweepAxis,
        #[serde(default = "default_bins")]
        bins: usize,
        #[serde(default)]
        estimator: DfEstimator,
    },
    /// Winding over `W` and `axis` (`m` or `w_prime`).
    Intercell { axis: SweepAxis },
}

impl Default for SweepBlock {
    fn default() -> Self {
        SweepBlock::PhaseMap
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    /// `Lambda^{-1}` on the `m > W` side at fixed `W`.
    NuM,
    /// `|Lambda^{-1}|` below `W_c = 2g` at fixed `m`.
    NuW,
    /// Half-filling gap approaching `m_c` at fixed `W`.
    GapM,
    /// Half-filling gap approaching `W_c` at fixed `m`.
    GapW,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocSource {
    Analytic,
    #[default]
    Numeric,
}

fn default_points() -> usize {
    16
}

fn default_fit_cells() -> usize {
    610
}

fn default_window() -> [f64; 2] {
    [1e-3, 1e-1]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    pub name: String,
    pub kind: FitKind,
    /// Fixed `W/g` (for `nu_m`, `gap_m`) or `m/g` (for `nu_w`, `gap_w`).
    pub at: f64,
    #[serde(default = "default_window")]
    pub window: [f64; 2],
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_fit_cells")]
    pub n_cells: usize,
    #[serde(default)]
    pub source: LocSource,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingBlock {
    pub fits: Vec<FitSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    #[serde(rename = "2d")]
    TwoD,
    Aah,
    Offdiag,
    Ising,
    Hierarchy,
    InGap,
}

fn default_check_kinds() -> Vec<CheckKind> {
    vec![CheckKind::TwoD]
}

fn default_l_y() -> usize {
    8
}

fn default_weight_threshold() -> f64 {
    0.5
}

fn default_check_edge_cells() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckBlock {
    #[serde(default = "default_check_kinds")]
    pub kinds: Vec<CheckKind>,
    /// Rows of the 2D lattice (`l_x = 2 n_cells`).
    #[serde(default = "default_l_y")]
    pub l_y: usize,
    #[serde(default)]
    pub hierarchy: HierarchyOptions,
    #[serde(default)]
    pub band: BandSelection,
    #[serde(default = "default_check_edge_cells")]
    pub edge_cells: usize,
    #[serde(default = "default_weight_threshold")]
    pub weight_threshold: f64,
}

impl Default for CheckBlock {
    fn default() -> Self {
        Self {
            kinds: default_check_kinds(),
            l_y: default_l_y(),
            hierarchy: HierarchyOptions::default(),
            band: BandSelection::default(),
            edge_cells: default_check_edge_cells(),
            weight_threshold: default_weight_threshold(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundariesBlock {
    /// Also locate numeric `Lambda^{-1} = 0` crossings at `n_cells`.
    #[serde(default)]
    pub numeric: bool,
}

/// Full run configuration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Subcommand this configuration is meant for, if pinned.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default)]
    pub model: ModelBlock,
    #[serde(default)]
    pub protocol: ProtocolBlock,
    #[serde(default)]
    pub diagnostics: DiagnosticsBlock,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default)]
    pub parallelism: ParallelismBlock,
    #[serde(default)]
    pub sweep: SweepBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<ScalingBlock>,
    #[serde(default)]
    pub check: CheckBlock,
    #[serde(default)]
    pub boundaries: BoundariesBlock,
}

impl Config {
    /// Parse JSON text, reporting the path of the offending key on error.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::config(format!("{path}: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<(Self, String), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Ok((Self::from_json(&text)?, text))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    /// Checks that do not depend on the command.
    pub fn validate(&self) -> Result<(), CliError> {
        let m = &self.model;
        if m.n_cells == 0 {
            return Err(CliError::config("model.n_cells: must be at least 1"));
        }
        if !(m.g > 0.0) {
            return Err(CliError::config(format!("model.g: must be positive, got {}", m.g)));
        }
        m.grid()?;
        if let Some(labels) = &m.labels {
            if m.points.as_ref().map(Vec::len) != Some(labels.len()) {
                return Err(CliError::config("model.labels: need one label per entry of model.points"));
            }
        }
        self.protocol.deltas.values()?;
        let th = &self.thresholds;
        if !(0.0 <= th.theta_loc && th.theta_loc < th.theta_ext && th.theta_ext <= 1.0) {
            return Err(CliError::config("thresholds: need 0 <= theta_loc < theta_ext <= 1"));
        }
        if !(th.purity > 0.5 && th.purity <= 1.0) {
            return Err(CliError::config("thresholds.purity: must lie in (0.5, 1]"));
        }
        if !(self.diagnostics.bulk_fraction > 0.0 && self.diagnostics.bulk_fraction <= 1.0) {
            return Err(CliError::config("diagnostics.bulk_fraction: must lie in (0, 1]"));
        }
        if self.parallelism.jobs == Some(0) {
            return Err(CliError::config("parallelism.jobs: must be at least 1"));
        }
        if let Some(s) = &self.scaling {
            for (i, f) in s.fits.iter().enumerate() {
                if !(f.window[0] > 0.0 && f.window[0] < f.window[1]) {
                    return Err(CliError::config(format!("scaling.fits[{i}].window: need 0 < lo < hi")));
                }
            }
        }
        Ok(())
    }
}
