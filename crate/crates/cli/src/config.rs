//! The JSON run configuration, flag overrides and validation. Everything a
//! command needs is resolved here, before any compute or output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use conformal_disk::curvature::{eval_curvatures, CurvatureSpec, HDef, KDef, SymmetryGroup};
use conformal_disk::radial::{RadialOptions, DEFAULT_A_HI, DEFAULT_A_LO};
use conformal_disk::solvers::{MountainPassOptions, SolverOptions};
use conformal_disk::test_functions::BubbleFamily;
use conformal_disk::{io, BoundaryField, Grid, ScalarField};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    SolveRadial,
    MountainPass,
    BubbleScan,
    Diagnose,
    NonexistenceScan,
    CheckHypotheses,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// The subcommand on the command line takes precedence.
    #[serde(default)]
    pub command: Option<Command>,
    pub curvature: CurvatureConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub mountain_pass: MountainPassConfig,
    #[serde(default)]
    pub radial: RadialConfig,
    #[serde(default)]
    pub scan: ScanConfig,
    /// Perturbation parameter for `solve-radial`, `mountain-pass`, `diagnose`
    /// and the two-dimensional starts of `nonexistence-scan`.
    #[serde(default)]
    pub eps: f64,
    /// Snapshot analysed by `diagnose`.
    #[serde(default)]
    pub field: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Randomized Newton starts of `nonexistence-scan`.
    #[serde(default = "default_n_starts")]
    pub n_starts: usize,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_n_starts() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvatureConfig {
    pub k: KConfig,
    pub h: HConfig,
    #[serde(default = "trivial")]
    pub group: SymmetryGroup,
}

fn trivial() -> SymmetryGroup {
    SymmetryGroup::Trivial
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KConfig {
    Constant { value: f64 },
    /// `K(r) = sum_n coeffs[n] r^(2n)`.
    RadialPolynomial { coeffs: Vec<f64> },
    /// A `.snapshot` file or a CSV of `(r, theta, value)` rows on the solver grid.
    Tabulated { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HConfig {
    Constant { value: f64 },
    Fourier { modes: Vec<FourierMode> },
    /// A CSV with one value per boundary node.
    Tabulated { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierMode {
    pub m: usize,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_r: usize,
    pub n_theta: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n_r: 128, n_theta: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MountainPassConfig {
    #[serde(default = "default_n_path")]
    pub n_path: usize,
    #[serde(default = "default_string_iters")]
    pub max_string_iters: usize,
    #[serde(default = "default_zooms")]
    pub max_zooms: usize,
    #[serde(default = "default_zoom_tol")]
    pub zoom_tol: f64,
    /// Constant value of the low endpoint.
    #[serde(default = "default_low_endpoint")]
    pub low_endpoint: f64,
}

fn default_n_path() -> usize {
    MountainPassOptions::default().n_path
}
fn default_string_iters() -> usize {
    MountainPassOptions::default().max_string_iters
}
fn default_zooms() -> usize {
    MountainPassOptions::default().max_zooms
}
fn default_zoom_tol() -> f64 {
    MountainPassOptions::default().zoom_tol
}
fn default_low_endpoint() -> f64 {
    -8.0
}

impl Default for MountainPassConfig {
    fn default() -> Self {
        Self {
            n_path: default_n_path(),
            max_string_iters: default_string_iters(),
            max_zooms: default_zooms(),
            zoom_tol: default_zoom_tol(),
            low_endpoint: default_low_endpoint(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialConfig {
    #[serde(default = "default_scan_points")]
    pub scan_points: usize,
    #[serde(default = "default_n_steps")]
    pub n_steps: usize,
    #[serde(default = "default_radial_tol")]
    pub tol: f64,
    #[serde(default = "default_max_refine")]
    pub max_refine: usize,
}

fn default_scan_points() -> usize {
    RadialOptions::default().scan_points
}
fn default_n_steps() -> usize {
    RadialOptions::default().n_steps
}
fn default_radial_tol() -> f64 {
    RadialOptions::default().tol
}
fn default_max_refine() -> usize {
    RadialOptions::default().max_refine
}

impl Default for RadialConfig {
    fn default() -> Self {
        Self { scan_points: default_scan_points(), n_steps: default_n_steps(), tol: default_radial_tol(), max_refine: default_max_refine() }
    }
}

impl From<RadialConfig> for RadialOptions {
    fn from(c: RadialConfig) -> Self {
        Self { scan_points: c.scan_points, n_steps: c.n_steps, tol: c.tol, max_refine: c.max_refine }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    /// Concentration parameters of `bubble-scan`.
    #[serde(default)]
    pub mu_schedule: Option<Vec<f64>>,
    #[serde(default)]
    pub family: Option<BubbleFamily>,
    /// Shooting interval of `solve-radial` and `nonexistence-scan`.
    #[serde(default)]
    pub a_bracket: Option<(f64, f64)>,
}

pub const DEFAULT_MU_SCHEDULE: [f64; 5] = [1.2, 1.1, 1.05, 1.02, 1.01];

/// Upper end of the nonexistence bracket: just below the pole value of the
/// constant solution family.
pub fn nonexistence_a_hi() -> f64 {
    2.0 * std::f64::consts::LN_2 - 0.01
}

/// Values given on the command line; each replaces the configured one.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Output directory.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub n_r: Option<usize>,
    #[arg(long)]
    pub n_theta: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Residual tolerance of the solvers.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Constant Gaussian curvature.
    #[arg(long, allow_hyphen_values = true)]
    pub k: Option<f64>,
    /// Constant geodesic curvature.
    #[arg(long, allow_hyphen_values = true)]
    pub h: Option<f64>,
    /// `trivial`, `full-rotation` or `cyclic:K`.
    #[arg(long, value_parser = parse_group)]
    pub group: Option<SymmetryGroup>,
    /// Snapshot to diagnose.
    #[arg(long)]
    pub field: Option<PathBuf>,
    #[arg(long)]
    pub n_starts: Option<usize>,
    #[arg(long)]
    pub compute_morse: bool,
}

pub fn parse_group(s: &str) -> Result<SymmetryGroup, String> {
    match s {
        "trivial" => Ok(SymmetryGroup::Trivial),
        "full-rotation" => Ok(SymmetryGroup::FullRotation),
        _ => {
            let order = s.strip_prefix("cyclic:").ok_or_else(|| format!("unknown group {s:?}"))?;
            let k: usize = order.parse().map_err(|e| format!("bad cyclic order {order:?}: {e}"))?;
            SymmetryGroup::cyclic(k).map_err(|e| e.to_string())
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Library(#[from] conformal_disk::Error),
}

impl RunConfig {
    /// Reads a config file; relative data paths are taken relative to its directory.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read { path: path.into(), message: e.to_string() })?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| ConfigError::Read { path: path.into(), message: e.to_string() })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let KConfig::Tabulated { path } = &mut cfg.curvature.k {
            resolve(path);
        }
        if let HConfig::Tabulated { path } = &mut cfg.curvature.h {
            resolve(path);
        }
        if let Some(f) = &mut cfg.field {
            resolve(f);
        }
        Ok(cfg)
    }

    /// A config from flags alone; needs constant `k` and `h`.
    pub fn from_flags(o: &Overrides) -> Result<Self, ConfigError> {
        let (Some(k), Some(h)) = (o.k, o.h) else {
            return Err(ConfigError::Invalid("without --config, both --k and --h are required".into()));
        };
        Ok(Self {
            command: None,
            curvature: CurvatureConfig { k: KConfig::Constant { value: k }, h: HConfig::Constant { value: h }, group: SymmetryGroup::Trivial },
            grid: GridConfig::default(),
            solver: SolverOptions::default(),
            mountain_pass: MountainPassConfig::default(),
            radial: RadialConfig::default(),
            scan: ScanConfig::default(),
            eps: 0.0,
            field: None,
            output_dir: default_output_dir(),
            seed: 0,
            n_starts: default_n_starts(),
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
        if let Some(n) = o.n_r {
            self.grid.n_r = n;
        }
        if let Some(n) = o.n_theta {
            self.grid.n_theta = n;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(t) = o.tol {
            self.solver.tol_residual = t;
        }
        if let Some(m) = o.max_iters {
            self.solver.max_iters = m;
        }
        if let Some(e) = o.eps {
            self.eps = e;
        }
        if let Some(k) = o.k {
            self.curvature.k = KConfig::Constant { value: k };
        }
        if let Some(h) = o.h {
            self.curvature.h = HConfig::Constant { value: h };
        }
        if let Some(g) = o.group {
            self.curvature.group = g;
        }
        if let Some(f) = &o.field {
            self.field = Some(f.clone());
        }
        if let Some(n) = o.n_starts {
            self.n_starts = n;
        }
        if o.compute_morse {
            self.solver.compute_morse = true;
        }
    }

    pub fn grid(&self) -> Result<Grid, ConfigError> {
        Ok(Grid::new(self.grid.n_r, self.grid.n_theta)?)
    }

    /// Solver options with the curvature group in force.
    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions { symmetry: self.curvature.group, ..self.solver.clone() }
    }

    pub fn mountain_pass_options(&self) -> MountainPassOptions {
        let mp = &self.mountain_pass;
        MountainPassOptions {
            n_path: mp.n_path,
            max_string_iters: mp.max_string_iters,
            max_zooms: mp.max_zooms,
            zoom_tol: mp.zoom_tol,
            solver: self.solver_options(),
        }
    }

    pub fn a_bracket(&self, command: Command) -> (f64, f64) {
        self.scan.a_bracket.unwrap_or(match command {
            Command::NonexistenceScan => (DEFAULT_A_LO, nonexistence_a_hi()),
            _ => (DEFAULT_A_LO, DEFAULT_A_HI),
        })
    }

    pub fn mu_schedule(&self) -> Vec<f64> {
        self.scan.mu_schedule.clone().unwrap_or_else(|| DEFAULT_MU_SCHEDULE.to_vec())
    }

    pub fn family(&self) -> BubbleFamily {
        self.scan.family.unwrap_or(BubbleFamily::Radial)
    }

    /// Builds the curvature data on `grid`, reading tabulated inputs.
    pub fn curvature_spec(&self, grid: Grid) -> Result<CurvatureSpec, ConfigError> {
        let k = match &self.curvature.k {
            KConfig::Constant { value } => KDef::Constant(*value),
            KConfig::RadialPolynomial { coeffs } => KDef::RadialPolynomial(coeffs.clone()),
            KConfig::Tabulated { path } => {
                let field = if path.extension().is_some_and(|e| e == "snapshot") {
                    ScalarField::read_snapshot(path)?
                } else {
                    io::read_grid_table(path, grid)?
                };
                grid.require_same(&field.grid())?;
                KDef::Tabulated(field)
            }
        };
        let h = match &self.curvature.h {
            HConfig::Constant { value } => HDef::Constant(*value),
            HConfig::Fourier { modes } => {
                let mut table = BTreeMap::new();
                for m in modes {
                    if table.insert(m.m, (m.cos, m.sin)).is_some() {
                        return Err(ConfigError::Invalid(format!("Fourier mode {} is listed twice", m.m)));
                    }
                }
                HDef::FourierCosSin(table)
            }
            HConfig::Tabulated { path } => HDef::Tabulated(BoundaryField::from_vec(grid, io::read_boundary_values(path)?)?),
        };
        Ok(CurvatureSpec::new(k, h, self.curvature.group)?)
    }

    /// Checks everything `command` will use. Nothing is computed or written
    /// when this fails.
    pub fn validate(&self, command: Command) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        let grid = self.grid()?;
        self.curvature.group.check_grid(grid)?;
        self.solver.validate()?;
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return invalid(format!("eps must be finite and non-negative, got {}", self.eps));
        }
        match command {
            Command::MountainPass => {
                self.mountain_pass_options().validate()?;
                if !self.mountain_pass.low_endpoint.is_finite() {
                    return invalid("mountain_pass.low_endpoint must be finite".into());
                }
            }
            Command::SolveRadial | Command::NonexistenceScan => {
                let r = &self.radial;
                if r.scan_points < 2 || r.n_steps == 0 || !(r.tol > 0.0) {
                    return invalid("radial options need scan_points >= 2, n_steps >= 1 and tol > 0".into());
                }
                let (lo, hi) = self.a_bracket(command);
                if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                    return invalid(format!("a_bracket ({lo}, {hi}) is not an interval"));
                }
                if command == Command::NonexistenceScan && self.n_starts == 0 {
                    return invalid("n_starts must be at least 1".into());
                }
            }
            Command::BubbleScan => {
                let mus = self.mu_schedule();
                if mus.is_empty() || mus.iter().any(|&m| !(m > self.family().critical_mu())) {
                    return invalid(format!("mu_schedule must be non-empty with every mu above {}", self.family().critical_mu()));
                }
            }
            Command::Diagnose => {
                let Some(path) = &self.field else {
                    return invalid("diagnose needs a field snapshot (field or --field)".into());
                };
                if !path.is_file() {
                    return invalid(format!("field snapshot {} does not exist", path.display()));
                }
            }
            Command::Solve | Command::CheckHypotheses => {}
        }
        let spec = self.curvature_spec(grid)?;
        eval_curvatures(&spec, grid)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, serde_json::Error> {
        serde_json::from_str(text)
    }

    #[test]
    fn checked_in_configs_are_complete_and_valid() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut names = Vec::new();
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "json") {
                let cfg = RunConfig::from_file(&path).unwrap();
                let command = cfg.command.unwrap_or_else(|| panic!("{} names no command", path.display()));
                cfg.validate(command).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
                cfg.curvature_spec(cfg.grid().unwrap()).unwrap();
                names.push(path.file_name().unwrap().to_owned());
            }
        }
        assert!(names.len() >= 5, "{names:?}");
    }

    #[test]
    fn minimal_config_takes_the_documented_defaults() {
        let cfg = parse(r#"{"curvature": {"k": {"kind": "constant", "value": -1}, "h": {"kind": "constant", "value": 1.25}}}"#).unwrap();
        assert_eq!(cfg.grid, GridConfig { n_r: 128, n_theta: 256 });
        assert_eq!(cfg.solver.tol_residual, 1e-9);
        assert_eq!(cfg.curvature.group, SymmetryGroup::Trivial);
        assert_eq!(cfg.output_dir, PathBuf::from("out"));
        cfg.validate(Command::Solve).unwrap();
    }

    #[test]
    fn unknown_keys_and_kinds_are_rejected() {
        let base = |k: &str| format!(r#"{{"curvature": {{"k": {k}, "h": {{"kind": "constant", "value": 1}}}}}}"#);
        assert!(parse(&base(r#"{"kind": "spherical", "value": -1}"#)).is_err());
        assert!(parse(&base(r#"{"kind": "constant", "value": -1, "extra": 0}"#)).is_err());
        let top = r#"{"curvature": {"k": {"kind": "constant", "value": -1}, "h": {"kind": "constant", "value": 1}}, "tolerance": 1}"#;
        assert!(parse(top).is_err());
    }

    #[test]
    fn fourier_data_and_groups_are_checked() {
        let text = r#"{"curvature": {"k": {"kind": "constant", "value": -1},
            "h": {"kind": "fourier", "modes": [{"m": 0, "cos": 1.8}, {"m": 2, "cos": 0.3}]},
            "group": {"kind": "cyclic", "k": 2}}, "grid": {"n_r": 16, "n_theta": 32}}"#;
        let mut cfg = parse(text).unwrap();
        cfg.validate(Command::Solve).unwrap();
        cfg.curvature.group = SymmetryGroup::Cyclic { k: 3 };
        cfg.grid.n_theta = 36;
        assert!(cfg.validate(Command::Solve).is_err());
    }

    #[test]
    fn flags_override_the_file() {
        let mut cfg = RunConfig::from_flags(&Overrides { k: Some(-1.0), h: Some(1.0), ..Default::default() }).unwrap();
        let o = Overrides { n_r: Some(32), tol: Some(1e-7), group: Some(SymmetryGroup::FullRotation), h: Some(1.5), ..Default::default() };
        cfg.apply(&o);
        assert_eq!(cfg.grid.n_r, 32);
        assert_eq!(cfg.solver.tol_residual, 1e-7);
        assert_eq!(cfg.curvature.h, HConfig::Constant { value: 1.5 });
        assert_eq!(cfg.solver_options().symmetry, SymmetryGroup::FullRotation);
        assert!(RunConfig::from_flags(&Overrides::default()).is_err());
    }

    #[test]
    fn group_flag_syntax() {
        assert_eq!(parse_group("cyclic:3").unwrap(), SymmetryGroup::Cyclic { k: 3 });
        assert_eq!(parse_group("full-rotation").unwrap(), SymmetryGroup::FullRotation);
        assert!(parse_group("cyclic:1").is_err());
        assert!(parse_group("dihedral").is_err());
    }

    #[test]
    fn diagnose_needs_a_field() {
        let cfg = parse(r#"{"curvature": {"k": {"kind": "constant", "value": -1}, "h": {"kind": "constant", "value": 1}}}"#).unwrap();
        assert!(cfg.validate(Command::Diagnose).is_err());
    }
}
