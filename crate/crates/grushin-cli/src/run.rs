use std::fmt;
use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};

use grushin::complexplane::{
    build_k, build_u, k_margin_in_u, multiplier_inequality_check, non_adherent, ratio_divergence_test, runge_family,
    NegativeGeometry,
};
use grushin::control::{assemble_gram, hum_control, min_time_scan, obs_cost, parse_t_grid, HumOptions, ObsCost};
use grushin::geometry::{build_cutoff, critical_abscissa, mask_to_pgm, Grid2D, Path, Region, RegionKind};
use grushin::gluing::{default_initial_state, masked_field, run_pipeline, GlueConfig};
use grushin::solver::{evolve, norms_csv, write_snapshot, Record, SineTable};
use grushin::spectral::{Grid1D, SpectralTable};
use grushin::Execution;

use crate::args::*;

pub const THREADS_VAR: &str = "GRUSHIN_THREADS";

#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Numerical(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) | Failure::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<grushin::Error> for Failure {
    fn from(e: grushin::Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Validation(msg.into())
}

type Res<T> = std::result::Result<T, Failure>;

/// Output directory plus the list of files written, for the manifest.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
    seed: u64,
}

impl Outputs {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Res<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| invalid(format!("cannot write {}: {e}", path.display())))?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Pretty JSON with the run seed added to top-level objects.
    fn json(&mut self, name: &str, value: &Value) -> Res<()> {
        let mut value = value.clone();
        if let Value::Object(map) = &mut value {
            map.entry("seed").or_insert(json!(self.seed));
        }
        let mut text = serde_json::to_string_pretty(&value).expect("JSON values always serialize");
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

fn configure_threads() -> Res<usize> {
    let requested = match std::env::var(THREADS_VAR) {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| invalid(format!("{THREADS_VAR} must be a positive integer, got {v:?}")))?,
        ),
        Err(_) => None,
    };
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = requested {
            // A pool may already exist when embedded; keep it then.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        Ok(rayon::current_num_threads())
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = requested;
        Ok(1)
    }
}

fn load_config(path: Option<&FsPath>) -> Res<Map<String, Value>> {
    let Some(path) = path else {
        return Ok(Map::new());
    };
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
    match serde_json::from_str::<Value>(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(invalid("config file must hold a JSON object")),
        Err(e) => Err(invalid(format!("config {}: {e}", path.display()))),
    }
}

/// Flags override config keys; unknown config keys are rejected.
fn resolve<A, F>(cli: &A, config: &Map<String, Value>, defaults: F) -> Res<A>
where
    A: Serialize + DeserializeOwned,
    F: FnOnce(A) -> A,
{
    let mut merged = config.clone();
    if let Value::Object(flags) = serde_json::to_value(cli).expect("arguments serialize") {
        merged.extend(flags);
    }
    let args: A = serde_json::from_value(Value::Object(merged)).map_err(|e| invalid(format!("config: {e}")))?;
    let args = defaults(args);
    let known = serde_json::to_value(&args).expect("arguments serialize");
    if let Some(key) = config.keys().find(|k| known.get(k.as_str()).is_none()) {
        return Err(invalid(format!("unknown config key {key:?}")));
    }
    Ok(args)
}

pub fn run(cli: Cli) -> Res<()> {
    let start = Instant::now();
    let threads = configure_threads()?;
    let mut config = load_config(cli.config.as_deref())?;
    let name = cli.command.name();
    if let Some(c) = config.remove("command") {
        if c.as_str() != Some(name) {
            return Err(invalid(format!("config is for command {c}, not {name}")));
        }
    }
    let out_cfg = config.remove("out");
    let seed_cfg = config.remove("seed");
    let dir = match (cli.out, out_cfg) {
        (Some(d), _) => d,
        (None, Some(Value::String(s))) => PathBuf::from(s),
        (None, Some(v)) => return Err(invalid(format!("config key out must be a string, got {v}"))),
        (None, None) => PathBuf::from("out"),
    };
    let seed = match (cli.seed, seed_cfg) {
        (Some(s), _) => s,
        (None, Some(v)) => v.as_u64().ok_or_else(|| invalid(format!("config key seed must be an integer, got {v}")))?,
        (None, None) => 0,
    };
    fs::create_dir_all(&dir).map_err(|e| invalid(format!("cannot create output directory {}: {e}", dir.display())))?;
    let mut out = Outputs { dir, files: Vec::new(), seed };
    let exec = Execution::default();

    let resolved = match &cli.command {
        Command::Eig(a) => {
            let a = resolve(a, &config, EigArgs::with_defaults)?;
            eig(&a, &mut out, exec)?;
            serde_json::to_value(a)
        }
        Command::Region(a) => {
            let a = resolve(a, &config, RegionArgs::with_defaults)?;
            region(&a, &mut out)?;
            serde_json::to_value(a)
        }
        Command::Cutoff(a) => {
            let a = resolve(a, &config, CutoffArgs::with_defaults)?;
            cutoff(&a, &mut out, exec)?;
            serde_json::to_value(a)
        }
        Command::ObsCost(a) => {
            let a = resolve(a, &config, ObsCostArgs::with_defaults)?;
            cost(&a, &mut out, exec)?;
            serde_json::to_value(a)
        }
        Command::MinTime(a) => {
            let a = resolve(a, &config, MinTimeArgs::with_defaults)?;
            min_time(&a, &mut out, exec)?;
            serde_json::to_value(a)
        }
        Command::Hum(a) => {
            let a = resolve(a, &config, HumArgs::with_defaults)?;
            hum(&a, &mut out, exec)?;
            serde_json::to_value(a)
        }
        Command::Runge(a) => {
            let a = resolve(a, &config, RungeArgs::with_defaults)?;
            runge(&a, seed, &mut out, exec)?;
            serde_json::to_value(a)
        }
        Command::Glue(a) => {
            let a = resolve(a, &config, GlueArgs::with_defaults)?;
            glue(&a, &mut out, exec)?;
            serde_json::to_value(a)
        }
    }
    .expect("arguments serialize");

    let mut files = out.files.clone();
    files.push("manifest.json".into());
    let manifest = json!({
        "command": name,
        "config": resolved,
        "seed": seed,
        "versions": { "grushin": grushin::VERSION, "grushin-cli": env!("CARGO_PKG_VERSION") },
        "parallel": exec.is_parallel(),
        "threads": threads,
        "wall_time_s": start.elapsed().as_secs_f64(),
        "outputs": files,
    });
    out.json("manifest.json", &manifest)
}

fn grid2(g: &GridArgs) -> Res<Grid2D> {
    Ok(Grid2D::new(g.nx.unwrap(), g.ny.unwrap())?)
}

fn build_path(path: &PathArg, x0: f64) -> Res<Path> {
    Ok(match path {
        PathArg::Name(n) if n == "fig4" => Path::fig4(),
        PathArg::Name(n) if n == "vertical" => Path::vertical(x0)?,
        PathArg::Name(n) => return Err(invalid(format!("unknown path {n:?}; use fig4, vertical or a sample list"))),
        PathArg::Samples(s) => Path::new(s.clone())?,
    })
}

/// Corridor `a - 0.05 cos²y < x < 0.9`, whose critical abscissa is `a`.
fn default_corridor(a: f64) -> RegionKind {
    let m = 65;
    let gamma1 = (0..m)
        .map(|k| {
            let y = std::f64::consts::PI * k as f64 / (m - 1) as f64;
            a - 0.05 * y.cos().powi(2)
        })
        .collect();
    RegionKind::Corridor { gamma1, gamma2: vec![0.9; m] }
}

fn build_region(s: &RegionSpecArgs, grid: Grid2D) -> Res<Region> {
    let kind = match s.region.as_ref().unwrap() {
        RegionArg::Spec(k) => k.clone(),
        RegionArg::Name(n) => match n.as_str() {
            "two-strips" => RegionKind::TwoStrips { a: s.a.unwrap() },
            "strip" => RegionKind::Strip { x_min: s.x_min.unwrap(), x_max: s.x_max.unwrap() },
            "corridor" => default_corridor(s.a.unwrap()),
            "rect-complement" => RegionKind::RectangleComplement {
                x_half: s.a.unwrap(),
                y_center: s.y_center.unwrap(),
                y_half: s.y_half.unwrap(),
            },
            "path-neighborhood" => RegionKind::PathNeighborhood {
                path: build_path(s.path.as_ref().unwrap(), s.x0.unwrap())?,
                eps: s.eps.unwrap(),
            },
            "fig4" => RegionKind::PathNeighborhood { path: Path::fig4(), eps: s.eps.unwrap() },
            other => return Err(invalid(format!("unknown region {other:?}"))),
        },
    };
    Ok(Region::new(kind, grid)?)
}

fn eig(a: &EigArgs, out: &mut Outputs, exec: Execution) -> Res<()> {
    let grid = Grid1D::new(a.count.unwrap())?;
    let table = SpectralTable::build(a.n_max.unwrap(), grid, a.eps.unwrap(), a.extrapolate.unwrap(), exec)?;
    out.write("spectrum.csv", table.to_csv().as_bytes())
}

fn region(a: &RegionArgs, out: &mut Outputs) -> Res<()> {
    let grid = grid2(&a.grid)?;
    let r = build_region(&a.spec, grid)?;
    out.write("mask.pgm", &r.to_pgm())?;
    out.json(
        "region.json",
        &json!({
            "nodes": r.count(),
            "fraction": r.count() as f64 / grid.len() as f64,
            "x_only": r.is_x_only(),
            "nx": grid.nx,
            "ny": grid.ny,
        }),
    )
}

fn field_to_pgm(field: &[f64], grid: Grid2D) -> Vec<u8> {
    let mut bytes = format!("P5\n{} {}\n255\n", grid.nx, grid.ny).into_bytes();
    for j in (0..grid.ny).rev() {
        for i in 0..grid.nx {
            bytes.push((field[grid.idx(i, j)].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    bytes
}

fn cutoff(a: &CutoffArgs, out: &mut Outputs, exec: Execution) -> Res<()> {
    let grid = grid2(&a.grid)?;
    let path = build_path(a.path.as_ref().unwrap(), a.x0.unwrap())?;
    let theta = build_cutoff(&path, a.eps.unwrap(), grid, exec)?;
    out.write("theta.pgm", &field_to_pgm(&theta.theta, grid))?;
    out.write("tube.pgm", &mask_to_pgm(&theta.tube, grid))?;
    let violations = theta.support_violations();
    out.json(
        "cutoff.json",
        &json!({
            "critical_abscissa": critical_abscissa(&path),
            "eps": a.eps.unwrap(),
            "gradient_support_nodes": theta.gradient_support.iter().filter(|&&b| b).count(),
            "tube_nodes": theta.tube.iter().filter(|&&b| b).count(),
            "support_violations": violations,
        }),
    )?;
    if violations > 0 {
        return Err(Failure::Numerical(format!("cutoff gradient leaves the tube at {violations} nodes")));
    }
    Ok(())
}

fn cost(a: &ObsCostArgs, out: &mut Outputs, exec: Execution) -> Res<()> {
    let grid = grid2(&a.grid)?;
    let r = build_region(&a.spec, grid)?;
    let (t, n) = (a.t.unwrap(), a.n.unwrap());
    let table = SpectralTable::build(n, Grid1D::new(grid.nx - 2)?, 0.05, false, exec)?;
    let gram = assemble_gram(&r, t, n, &table, exec)?;
    let value = match obs_cost(&gram) {
        ObsCost::Finite(c) => json!({ "T": t, "N": n, "status": "finite", "cost": c }),
        ObsCost::Unobservable { min_eig, floor } => {
            json!({ "T": t, "N": n, "status": "unobservable", "cost": null, "min_eig": min_eig, "floor": floor })
        }
    };
    out.json("obs_cost.json", &value)
}

fn min_time(a: &MinTimeArgs, out: &mut Outputs, exec: Execution) -> Res<()> {
    let grid = grid2(&a.grid)?;
    let r = build_region(&a.spec, grid)?;
    let ts = parse_t_grid(a.t.as_ref().unwrap())?;
    let ns = a.n.as_ref().unwrap().values().map_err(invalid)?;
    let n_max = ns.iter().copied().max().ok_or_else(|| invalid("empty N list"))?;
    let table = SpectralTable::build(n_max, Grid1D::new(grid.nx - 2)?, 0.05, false, exec)?;
    let curve = min_time_scan(&r, &ts, &ns, &table, exec)?;
    out.write("min_time.csv", curve.to_csv().as_bytes())?;
    let classes: Vec<Value> = curve
        .classes
        .iter()
        .map(|(t, ratio, c)| json!({ "T": t, "ratio": ratio, "classification": c.as_str() }))
        .collect();
    out.json(
        "min_time.json",
        &json!({
            "transition": curve.transition.map(|(lo, hi)| vec![lo, hi]),
            "consistent": curve.consistent,
            "classes": classes,
        }),
    )
}

fn hum(a: &HumArgs, out: &mut Outputs, exec: Execution) -> Res<()> {
    let grid = grid2(&a.grid)?;
    let r = build_region(&a.spec, grid)?;
    let g1 = Grid1D::new(grid.nx - 2)?;
    let n = a.n.unwrap();
    let f0 = default_initial_state(n, a.f0_modes.unwrap(), &g1)?;
    let basis = a.basis.unwrap();
    let opts = HumOptions {
        n_modes: n,
        basis_per_mode: (basis > 0).then_some(basis),
        reg: a.reg.unwrap(),
        dt: a.dt.unwrap(),
        tol: a.tol.unwrap(),
    };
    let res = hum_control(&r, a.t.unwrap(), &f0, &opts, exec)?;
    let forcing = &res.forcing;
    let traj = evolve(&f0, a.t.unwrap(), forcing.dt, forcing, Record::Every(1), exec)?;
    out.write("norms.csv", norms_csv(&traj, &g1).as_bytes())?;

    let table = SineTable::new(n, grid.ny);
    let mut bytes = Vec::new();
    let (mut modes, mut field) = (vec![0.0; n * g1.count()], vec![0.0; grid.len()]);
    let count = a.snapshots.unwrap().min(forcing.steps);
    for s in 0..count {
        let step = if count == 1 { 0 } else { s * (forcing.steps - 1) / (count - 1) };
        forcing.control_modes(step, &mut modes);
        masked_field(&modes, n, &r, &table, &mut field, exec);
        write_snapshot(&mut bytes, n, grid, (step as f64 + 0.5) * forcing.dt, &field)
            .map_err(|e| invalid(format!("snapshot: {e}")))?;
    }
    out.write("control.bin", &bytes)?;
    if !res.converged {
        eprintln!(
            "warning: terminal residual {:.3e} exceeds {} of the initial norm; not controllable at this truncation",
            res.residual / res.f0_norm,
            opts.tol
        );
    }
    out.json(
        "hum.json",
        &json!({
            "residual": res.residual,
            "relative_residual": res.residual / res.f0_norm,
            "predicted_residual": res.predicted_residual,
            "control_norm": res.control_norm,
            "f0_norm": res.f0_norm,
            "converged": res.converged,
            "conditioning": res.conditioning,
            "steps": forcing.steps,
            "dt": forcing.dt,
        }),
    )
}

fn runge(a: &RungeArgs, seed: u64, out: &mut Outputs, exec: Execution) -> Res<()> {
    let g = NegativeGeometry {
        y0: a.y0.unwrap(),
        delta: a.delta.unwrap(),
        a_prime: a.a_prime.unwrap(),
        eps: a.eps.unwrap(),
        t: a.t.unwrap(),
    };
    let u = build_u(g.y0, g.delta, g.a_prime, g.eps)?;
    let k = build_k(&g)?;
    let z0 = g.z0();
    let fam = runge_family(z0, a.kmax.unwrap(), a.n.unwrap(), &u)?;
    let rep = ratio_divergence_test(&fam, g.t, &u, exec);
    out.write("runge.csv", rep.to_csv().as_bytes())?;
    out.write("domain_u.csv", u.to_csv().as_bytes())?;
    out.write("domain_k.csv", k.to_csv().as_bytes())?;
    let multiplier = match a.trials.unwrap() {
        0 => Value::Null,
        trials => {
            let n_low = a.n_low.unwrap();
            let table = SpectralTable::build(n_low + 60, Grid1D::new(799)?, g.eps, false, exec)?;
            let m = multiplier_inequality_check(&table, &k, &u, n_low, g.t, trials, seed, exec)?;
            json!({ "trials": trials, "constant": m.constant, "stabilized": m.stabilized })
        }
    };
    out.json(
        "runge.json",
        &json!({
            "z0": [z0.re, z0.im],
            "critical_time": g.critical_time(),
            "z0_non_adherent": non_adherent(&u, z0),
            "target_sup": rep.target_sup,
            "sup_excess": rep.sup_excess(),
            "r0": rep.rows.first().map(|r| r.ratio),
            "exceeded_at": rep.exceeded_at,
            "monotone_from": rep.monotone_from,
            "k_margin": k_margin_in_u(&k, &u)?,
            "multiplier": multiplier,
        }),
    )
}

fn glue(a: &GlueArgs, out: &mut Outputs, exec: Execution) -> Res<()> {
    let grid = grid2(&a.grid)?;
    let g1 = Grid1D::new(grid.nx - 2)?;
    let path = build_path(a.path.as_ref().unwrap(), a.x0.unwrap())?;
    let n = a.n.unwrap();
    let t = a.t.unwrap();
    let f0 = default_initial_state(n, a.f0_modes.unwrap(), &g1)?;
    let (steps, _) = grushin::solver::step_count(t, a.dt.unwrap())?;
    let cfg = GlueConfig {
        path,
        eps: a.eps.unwrap(),
        t,
        grid,
        hum: HumOptions { n_modes: n, basis_per_mode: None, reg: a.reg.unwrap(), dt: a.dt.unwrap(), tol: 1e-3 },
        snapshot_every: steps / (a.snapshots.unwrap() + 1),
    };
    let (sol, left, _) = run_pipeline(&cfg, &f0, exec)?;
    let mut bytes = Vec::new();
    for (ts, field) in &sol.snapshots {
        write_snapshot(&mut bytes, n, grid, *ts, field).map_err(|e| invalid(format!("snapshot: {e}")))?;
    }
    out.write("glue.bin", &bytes)?;
    let d = &sol.diagnostics;
    out.json(
        "glue.json",
        &json!({
            "terminal_norm": d.terminal_norm,
            "relative_terminal_norm": d.terminal_norm / d.f0_norm,
            "f0_norm": d.f0_norm,
            "support_violations": d.support_violations,
            "pde_residual": d.pde_residual,
            "control_norm": d.control_norm,
            "initial_mismatch": d.initial_mismatch,
            "left_residual": d.left_residual,
            "right_residual": d.right_residual,
            "critical_abscissa": left.a,
            "below_critical_time": left.below_critical_time,
        }),
    )
}
