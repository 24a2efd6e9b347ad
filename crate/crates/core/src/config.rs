//! TOML run configuration. Unknown keys are rejected and every module
//! precondition that can be checked without solving is checked at load.

use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::dn_map::{ExteriorBasis, FdScheme, Window};
use crate::error::{Error, Result};
use crate::forward::SolverOptions;
use crate::grid::{bump, build_grid, dist, DomainSpec, Grid, Region, ScalarField};
use crate::inversion::InversionOptions;
use crate::io::read_potential_csv;
use crate::potentials::{MagneticPotential, Nonlinearity, PotentialPreset};

pub const MAX_NODES_1D: usize = 512;
pub const MAX_NODES_2D: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub s: f64,
    pub nodes_per_axis: usize,
    #[serde(default)]
    pub seed: u64,
    pub domain: DomainSpec,
    #[serde(default)]
    pub potential: PotentialSource,
    pub nonlinearity: NonlinearityConfig,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub data: Option<BumpSpec>,
    #[serde(default)]
    pub dn: DnConfig,
    #[serde(default)]
    pub inversion: InversionOptions,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PotentialSource {
    File { file: PathBuf },
    Preset(PotentialPreset),
}

impl Default for PotentialSource {
    fn default() -> Self {
        PotentialSource::Preset(PotentialPreset::Zero)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSpec {
    Constant { value: f64 },
    /// `amplitude exp(-|x - center|^2 / (2 width^2))`.
    Gaussian { amplitude: f64, center: Vec<f64>, width: f64 },
    /// Mollifier bump of the given radius.
    Bump { amplitude: f64, center: Vec<f64>, radius: f64 },
}

impl CoefficientSpec {
    pub fn build(&self, grid: &Grid) -> Result<ScalarField> {
        let n = grid.dim();
        let check = |c: &[f64]| {
            if c.len() == n {
                Ok(())
            } else {
                Err(Error::Config(format!("coefficient centre needs {n} components")))
            }
        };
        Ok(match self {
            CoefficientSpec::Constant { value } => ScalarField::constant(grid.len(), *value),
            CoefficientSpec::Gaussian { amplitude, center, width } => {
                check(center)?;
                if !(*width > 0.0) {
                    return Err(Error::Config("gaussian width must be positive".into()));
                }
                ScalarField::from_fn(grid, |p| amplitude * (-dist(p, center).powi(2) / (2.0 * width * width)).exp())
            }
            CoefficientSpec::Bump { amplitude, center, radius } => {
                check(center)?;
                bump(grid, center, *radius, *amplitude)?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientTerm {
    pub order: usize,
    pub coefficient: CoefficientSpec,
}

/// `a(x, z) = sum_k c_k(x) z^k / k!`; orders without a term are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearityConfig {
    pub radius: f64,
    pub terms: Vec<CoefficientTerm>,
}

impl NonlinearityConfig {
    pub fn order(&self) -> usize {
        self.terms.iter().map(|t| t.order).max().unwrap_or(0)
    }

    pub fn build(&self, grid: &Grid) -> Result<Nonlinearity> {
        let k = self.order();
        let mut coeffs = vec![ScalarField::zeros(grid.len()); k.max(1)];
        for t in &self.terms {
            coeffs[t.order - 1] = coeffs[t.order - 1].add(&t.coefficient.build(grid)?);
        }
        Nonlinearity::new(grid, coeffs, self.radius)
    }

    /// Only the order-one coefficient, as needed by blind reconstruction.
    pub fn build_q(&self, grid: &Grid) -> Result<ScalarField> {
        let mut q = ScalarField::zeros(grid.len());
        for t in self.terms.iter().filter(|t| t.order == 1) {
            q = q.add(&t.coefficient.build(grid)?);
        }
        Ok(q.restricted(|k| grid.is_interior(k)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSpec {
    pub center: Vec<f64>,
    pub radius: f64,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
}

fn default_amplitude() -> f64 {
    1.0
}

/// Either explicit bumps or `count` bumps of `radius` on a lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub centers: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub radii: Option<Vec<f64>>,
}

impl BasisConfig {
    fn lattice(count: usize, radius: f64) -> Self {
        Self {
            count: Some(count),
            radius: Some(radius),
            centers: None,
            radii: None,
        }
    }

    pub fn build(&self, grid: &Grid, window: Window) -> Result<ExteriorBasis> {
        match (&self.centers, &self.radii, self.count, self.radius) {
            (Some(c), Some(r), None, None) => ExteriorBasis::from_bumps(grid, window, c, r),
            (None, None, Some(n), Some(r)) => ExteriorBasis::in_window(grid, window, n, r),
            _ => Err(Error::Config(
                "a basis needs either `centers` and `radii` or `count` and `radius`".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DnConfig {
    /// Highest derivative order; defaults to the nonlinearity order capped at 4.
    pub order: Option<usize>,
    pub scheme: FdScheme,
    pub w1: BasisConfig,
    pub w2: BasisConfig,
}

impl Default for DnConfig {
    fn default() -> Self {
        Self {
            order: None,
            scheme: FdScheme::Richardson7,
            w1: BasisConfig::lattice(1, 0.3),
            w2: BasisConfig::lattice(6, 0.3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load and validate; relative potential file paths resolve against the config directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        if let PotentialSource::File { file } = &mut cfg.potential {
            if file.is_relative() {
                if let Some(dir) = path.parent() {
                    *file = dir.join(&*file);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::DomainError(format!("s must lie in (0, 1), got {}", self.s)));
        }
        if !(0.1..=0.9).contains(&self.s) {
            warn!("s = {} is outside [0.1, 0.9]; quadrature accuracy degrades", self.s);
        }
        self.domain.validate()?;
        let cap = if self.domain.dimension == 1 { MAX_NODES_1D } else { MAX_NODES_2D };
        if self.nodes_per_axis > cap {
            return Err(Error::SpecViolation(format!(
                "nodes_per_axis {} exceeds the cap {cap} for dimension {}",
                self.nodes_per_axis, self.domain.dimension
            )));
        }
        let pad = self.domain.omega_padding();
        let half_diam = 0.5 * self.domain.omega.diameter();
        if pad < half_diam - 1e-12 {
            return Err(Error::SpecViolation(format!(
                "box padding {pad:.3} around omega is below half its diameter {half_diam:.3}"
            )));
        }
        self.solver.validate()?;
        self.inversion.validate()?;
        let k = self.nonlinearity.order();
        if k == 0 {
            return Err(Error::Config("nonlinearity needs at least one term".into()));
        }
        if self.nonlinearity.terms.iter().any(|t| t.order == 0) {
            return Err(Error::Config("coefficient orders start at 1".into()));
        }
        if let Some(o) = self.dn.order {
            if o == 0 || o > k || o > 4 {
                return Err(Error::DomainError(format!("dn.order {o} must lie in 1..={}", k.min(4))));
            }
        }
        if let Some(d) = &self.data {
            if d.center.len() != self.domain.dimension {
                return Err(Error::Config("data centre has the wrong dimension".into()));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        build_grid(&self.domain, self.nodes_per_axis)
    }

    pub fn potential(&self, grid: &Grid) -> Result<MagneticPotential> {
        match &self.potential {
            PotentialSource::Preset(p) => p.build(grid),
            PotentialSource::File { file } => read_potential_csv(file, grid),
        }
    }

    pub fn dn_order(&self) -> usize {
        self.dn.order.unwrap_or(self.nonlinearity.order().min(4))
    }

    /// Exterior datum for `solve`: the configured bump, or one filling W1.
    pub fn data_field(&self, grid: &Grid) -> Result<ScalarField> {
        match &self.data {
            Some(b) => {
                let f = bump(grid, &b.center, b.radius, b.amplitude)?;
                if (0..grid.len()).any(|k| f[k] != 0.0 && grid.is_interior(k)) {
                    return Err(Error::SpecViolation("exterior datum meets the domain".into()));
                }
                Ok(f)
            }
            None => {
                let w1 = &self.domain.w1;
                let r = match w1 {
                    Region::Box { half_widths, .. } => half_widths.iter().cloned().fold(f64::INFINITY, f64::min),
                    Region::Ball { radius, .. } => *radius,
                };
                bump(grid, w1.center(), 0.9 * r, 0.1)
            }
        }
    }

    pub fn output_dir(&self, cli: Option<&Path>) -> PathBuf {
        cli.map(Path::to_path_buf)
            .or_else(|| self.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
s = 0.5
nodes_per_axis = 64

[domain]
dimension = 1
box = { lower = [-4.0], upper = [4.0] }
omega = { shape = "box", center = [0.0], half_widths = [1.0] }
w1 = { shape = "box", center = [-2.1], half_widths = [0.9] }
w2 = { shape = "box", center = [2.1], half_widths = [0.9] }

[nonlinearity]
radius = 2.0
terms = [
  { order = 1, coefficient = { kind = "constant", value = 1.0 } },
  { order = 3, coefficient = { kind = "gaussian", amplitude = 1.0, center = [0.0], width = 0.4 } },
]
"#;

    #[test]
    fn base_config_loads() {
        let cfg = RunConfig::from_toml(BASE).unwrap();
        let g = cfg.grid().unwrap();
        let nl = cfg.nonlinearity.build(&g).unwrap();
        assert_eq!(nl.order(), 3);
        assert_eq!(nl.coeff(2).max_abs(), 0.0);
        assert_eq!(cfg.dn_order(), 3);
        assert!(cfg.data_field(&g).unwrap().max_abs() > 0.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{BASE}\n[solver]\ntol_picrd = 1e-9\n");
        assert!(matches!(RunConfig::from_toml(&text), Err(Error::Config(_))));
        let text = BASE.replace("nodes_per_axis", "nodes");
        assert!(RunConfig::from_toml(&text).is_err());
    }

    #[test]
    fn thin_padding_is_rejected() {
        let text = BASE.replace("lower = [-4.0], upper = [4.0]", "lower = [-1.5], upper = [4.0]")
            .replace("center = [-2.1], half_widths = [0.9]", "center = [-1.35], half_widths = [0.1]");
        assert!(matches!(RunConfig::from_toml(&text), Err(Error::SpecViolation(_))));
    }
}
