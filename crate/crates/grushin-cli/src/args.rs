//! Command-line and config-file parameters.
//!
//! Every parameter is optional at parse time. A config file supplies a flat
//! JSON object with the same kebab-case keys as the flags; flags win, then
//! the file, then the built-in defaults filled in by `with_defaults`.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "grushin", version, about = "Minimal-time controllability experiments for the Grushin equation")]
pub struct Cli {
    /// JSON file with parameters for the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for randomized checks (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Spectral table of the modal operators.
    Eig(EigArgs),
    /// Rasterize a control region to a PGM mask.
    Region(RegionArgs),
    /// Build the gluing cutoff for a path.
    Cutoff(CutoffArgs),
    /// Observability constant at one horizon.
    ObsCost(ObsCostArgs),
    /// Scan horizons and truncations for the minimal time.
    MinTime(MinTimeArgs),
    /// HUM control on a region.
    Hum(HumArgs),
    /// Runge family ratios on the negative-result geometry.
    Runge(RungeArgs),
    /// Glue two strip controls along a path.
    Glue(GlueArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Eig(_) => "eig",
            Command::Region(_) => "region",
            Command::Cutoff(_) => "cutoff",
            Command::ObsCost(_) => "obs-cost",
            Command::MinTime(_) => "min-time",
            Command::Hum(_) => "hum",
            Command::Runge(_) => "runge",
            Command::Glue(_) => "glue",
        }
    }
}

/// A region given by name on the command line, or as a full tagged object in
/// the config file.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum RegionArg {
    Name(String),
    Spec(grushin::geometry::RegionKind),
}

impl FromStr for RegionArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(RegionArg::Name(s.to_string()))
    }
}

/// `fig4`, `vertical` (uses `x0`), or explicit `[[x, y], ...]` samples.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum PathArg {
    Name(String),
    Samples(Vec<(f64, f64)>),
}

impl FromStr for PathArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(PathArg::Name(s.to_string()))
    }
}

/// Truncation list: `10,20,30` or a JSON array.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ListArg {
    Text(String),
    List(Vec<usize>),
}

impl FromStr for ListArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(ListArg::Text(s.to_string()))
    }
}

impl ListArg {
    pub fn values(&self) -> Result<Vec<usize>, String> {
        match self {
            ListArg::List(v) => Ok(v.clone()),
            ListArg::Text(s) => s
                .split(',')
                .map(|p| p.trim().parse::<usize>().map_err(|e| format!("bad entry {p:?} in list {s:?}: {e}")))
                .collect(),
        }
    }
}

macro_rules! fill {
    ($s:ident, $($f:ident = $v:expr),* $(,)?) => {
        $( if $s.$f.is_none() { $s.$f = Some($v); } )*
    };
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct GridArgs {
    /// Grid nodes in x, including the walls (odd).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nx: Option<usize>,
    /// Grid nodes in y, including the walls.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ny: Option<usize>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RegionSpecArgs {
    /// two-strips, strip, corridor, rect-complement, path-neighborhood, fig4.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region: Option<RegionArg>,
    /// Critical abscissa for two-strips, corridor and rect-complement.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_min: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_center: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_half: Option<f64>,
    /// Path for path-neighborhood regions.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathArg>,
    /// Abscissa of the `vertical` path.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    /// Tube radius for path neighborhoods.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
}

impl RegionSpecArgs {
    fn fill_region(&mut self) {
        fill!(
            self,
            region = RegionArg::Name("two-strips".into()),
            a = 0.5,
            x_min = 0.5,
            x_max = 1.0,
            y_center = std::f64::consts::FRAC_PI_2,
            y_half = 0.2,
            path = PathArg::Name("fig4".into()),
            x0 = 0.0,
            eps = 0.1,
        );
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EigArgs {
    /// Largest y-mode.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    /// Interior nodes of the x-grid (odd).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// Weight exponent in the w profiles.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Report Richardson-extrapolated eigenvalues.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extrapolate: Option<bool>,
}

impl EigArgs {
    pub fn with_defaults(mut self) -> Self {
        fill!(self, n_max = 30, count = 1999, eps = 0.05, extrapolate = true);
        self
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RegionArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub spec: RegionSpecArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
}

impl RegionArgs {
    pub fn with_defaults(mut self) -> Self {
        self.spec.fill_region();
        self.grid = self.grid.with_defaults();
        self
    }
}

impl GridArgs {
    pub fn with_defaults(mut self) -> Self {
        fill!(self, nx = 801, ny = 401);
        self
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CutoffArgs {
    /// fig4, vertical, or samples in the config file.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathArg>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    /// Tube radius.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
}

impl CutoffArgs {
    pub fn with_defaults(mut self) -> Self {
        fill!(self, path = PathArg::Name("fig4".into()), x0 = 0.0, eps = 0.1);
        self.grid = self.grid.with_defaults();
        self
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ObsCostArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub spec: RegionSpecArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    /// Horizon.
    #[arg(long = "T")]
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    /// Number of y-modes.
    #[arg(long = "N")]
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

impl ObsCostArgs {
    pub fn with_defaults(mut self) -> Self {
        self.spec.fill_region();
        self.grid = self.grid.with_defaults();
        fill!(self, t = 0.3, n = 10);
        self
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct MinTimeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub spec: RegionSpecArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    /// Horizon grid `start:step:stop`.
    #[arg(long = "T")]
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub t: Option<String>,
    /// Truncations, e.g. `10,20,30`.
    #[arg(long = "N")]
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<ListArg>,
}

impl MinTimeArgs {
    pub fn with_defaults(mut self) -> Self {
        self.spec.fill_region();
        self.grid = self.grid.with_defaults();
        fill!(self, t = "0.02:0.02:0.3".into(), n = ListArg::Text("10,20,30".into()));
        self
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct HumArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub spec: RegionSpecArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    #[arg(long = "T")]
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    /// Number of y-modes.
    #[arg(long = "N")]
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Initial state: ground states of modes 1..=f0-modes with weights 2^{1-n}.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f0_modes: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Tikhonov regularization.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reg: Option<f64>,
    /// Trial x-states per y-mode (0 = automatic).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<usize>,
    /// Relative terminal residual regarded as success.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Number of control snapshots written.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<usize>,
}

impl HumArgs {
    pub fn with_defaults(mut self) -> Self {
        self.spec.fill_region();
        self.grid = self.grid.with_defaults();
        fill!(self, t = 0.3, n = 10, f0_modes = 1, dt = 1e-3, reg = 1e-13, basis = 0, tol = 1e-3, snapshots = 5);
        self
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RungeArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y0: Option<f64>,
    /// Slit width.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_prime: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[arg(long = "T")]
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    /// Last family index.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kmax: Option<usize>,
    /// The shift exponent is N + 1.
    #[arg(long = "N")]
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Random trials of the multiplier inequality (0 skips it).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    /// Lowest mode of the multiplier trials is n-low + 1.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_low: Option<usize>,
}

impl RungeArgs {
    pub fn with_defaults(mut self) -> Self {
        let g = grushin::complexplane::NegativeGeometry::default();
        fill!(self, y0 = g.y0, delta = g.delta, a_prime = g.a_prime, eps = g.eps, t = g.t, kmax = 12, n = 4, trials = 0, n_low = 20);
        self
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct GlueArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathArg>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[arg(long = "T")]
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    #[arg(long = "N")]
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f0_modes: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reg: Option<f64>,
    /// Glued-state snapshots written, besides t = 0 and T.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<usize>,
}

impl GlueArgs {
    pub fn with_defaults(mut self) -> Self {
        fill!(self, path = PathArg::Name("fig4".into()), x0 = 0.0, eps = 0.1, t = 0.15, n = 30, f0_modes = 3, dt = 1e-3, reg = 1e-13, snapshots = 3);
        self.grid = self.grid.with_defaults();
        self
    }
}
