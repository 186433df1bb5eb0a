//! The `diracflow` command line.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::complex::{build_complex, parse_graph, Graph, OrientedComplex};
use crate::diagnostics::{self, CheckGroup};
use crate::error::{Error, Result};
use crate::flow::{self, FlowConfig, FlowState, Observer, Trajectory, DEFAULT_STEP};
use crate::linalg::CVector;
use crate::operators::{self, GradedOperator, MatrixDump};
use crate::oracles;
use crate::spectral::{self, CircleExponent, ConnesOptions, ZetaGrid, ZetaSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Caps the rayon pool when set.
pub const THREADS_ENV: &str = "DIRACFLOW_THREADS";

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Ambiguous(_) | Error::Divergence { .. } | Error::Structure { .. } | Error::Diagnostic(_) => {
            EXIT_NUMERICAL
        }
        _ => EXIT_USAGE,
    }
}

/// Everything a `flow` or `diagnose` run depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub graph_path: Option<PathBuf>,
    pub beta: f64,
    pub gamma: Vec<f64>,
    pub t_end: f64,
    pub h: f64,
    pub snapshot_every: usize,
    pub with_unitary: bool,
    pub flow_poly: Vec<f64>,
    pub observers: Vec<String>,
    pub project: bool,
    pub checks: Vec<String>,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let f = FlowConfig::default();
        Self {
            graph_path: None,
            beta: f.beta,
            gamma: f.gamma,
            t_end: f.t_end,
            h: f.h,
            snapshot_every: f.snapshot_every,
            with_unitary: f.with_unitary,
            flow_poly: f.flow_poly,
            observers: f.observers,
            project: f.project,
            checks: vec!["all".into()],
            output_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn flow_config(&self) -> FlowConfig {
        FlowConfig {
            beta: self.beta,
            gamma: self.gamma.clone(),
            t_end: self.t_end,
            h: self.h,
            observers: self.observers.clone(),
            snapshot_every: self.snapshot_every,
            with_unitary: self.with_unitary,
            flow_poly: self.flow_poly.clone(),
            project: self.project,
        }
    }

    pub fn check_groups(&self) -> Result<Vec<CheckGroup>> {
        CheckGroup::parse_list(&self.checks)
    }

    pub fn validate(&self) -> Result<()> {
        self.flow_config().validate()?;
        self.check_groups()?;
        if self.graph_path.is_none() {
            return Err(Error::Usage("no graph given".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, leaving out `output_dir`.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(&RunConfig {
            output_dir: PathBuf::new(),
            ..self.clone()
        })
        .expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Parser, Debug)]
#[command(name = "diracflow", version, about = "Isospectral deformation of graph Dirac operators")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print f-vector, Euler characteristic and the spectrum of D(0).
    Build {
        graph: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Write D(0) as JSON to this file.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Integrate the deformation and write the trajectory and observer series.
    Flow(RunArgs),
    /// Integrate and run the diagnostic checks; exit 1 if any fails.
    Diagnose(RunArgs),
    /// Reference solutions.
    Oracle(OracleArgs),
    /// Zeta function values on a grid.
    Zeta(ZetaArgs),
    /// Solve the wave equation u'' = -L u.
    Wave(WaveArgs),
    /// Connes pseudo-distance between two vertices of D(t).
    Distance(DistanceArgs),
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Graph file (edge list) or `gnp:<n>:<p>` for a seeded random graph.
    graph: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    beta: Option<f64>,
    /// Comma-separated couplings per degree.
    #[arg(long, value_delimiter = ',')]
    gamma: Option<Vec<f64>>,
    #[arg(long = "t-end", allow_hyphen_values = true)]
    t_end: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "snapshot-every")]
    snapshot_every: Option<usize>,
    /// Comma-separated check groups, or `all`.
    #[arg(long, value_delimiter = ',')]
    checks: Option<Vec<String>>,
    /// Also write the final D(t) as a matrix dump.
    #[arg(long)]
    dump: bool,
    #[arg(long = "output-dir")]
    output_dir: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(g) = &self.graph {
            cfg.graph_path = Some(PathBuf::from(g));
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if let Some(v) = &self.gamma {
            cfg.gamma = v.clone();
        }
        if let Some(v) = self.t_end {
            cfg.t_end = v;
        }
        if let Some(v) = self.h {
            cfg.h = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.snapshot_every {
            cfg.snapshot_every = v;
        }
        if let Some(v) = &self.checks {
            cfg.checks = v.clone();
        }
        if let Some(v) = &self.output_dir {
            cfg.output_dir = v.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum OracleKind {
    K2,
    K3,
    Circle,
}

#[derive(Args, Debug)]
struct OracleArgs {
    kind: OracleKind,
    /// Trajectory JSON written by `flow` to compare against.
    #[arg(long)]
    compare: Option<PathBuf>,
    #[arg(long = "t-end", default_value_t = 3.0)]
    t_end: f64,
    #[arg(long, default_value_t = DEFAULT_STEP)]
    h: f64,
    /// Couplings of d₀ and d₁ for K₃.
    #[arg(long, value_delimiter = ',', default_value = "1,1")]
    gamma: Vec<f64>,
    /// Mode cutoff of the circle model.
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long = "snapshot-every", default_value_t = 10)]
    snapshot_every: usize,
    #[arg(long = "output-dir", default_value = "out")]
    output_dir: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ZetaKind {
    /// Dirac spectrum of a graph.
    Dirac,
    /// The closed-form circle-graph sum.
    CircleGraph,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ExponentArg {
    Printed,
    Spectral,
}

#[derive(Args, Debug)]
struct ZetaArgs {
    kind: ZetaKind,
    #[arg(long)]
    graph: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// `re_min,re_max,im_min,im_max,step`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    grid: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = ExponentArg::Printed)]
    exponent: ExponentArg,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "output-dir", default_value = "out")]
    output_dir: PathBuf,
}

#[derive(Args, Debug)]
struct WaveArgs {
    #[arg(long)]
    graph: String,
    #[arg(long, default_value_t = 10.0)]
    t: f64,
    /// Initial position; defaults to the unit vector on the first simplex.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    u0: Option<Vec<f64>>,
    /// Initial velocity; defaults to zero.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    v0: Option<Vec<f64>>,
    /// Remove the kernel component of the velocity instead of failing.
    #[arg(long = "project-kernel")]
    project_kernel: bool,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "output-dir", default_value = "out")]
    output_dir: PathBuf,
}

#[derive(Args, Debug)]
struct DistanceArgs {
    #[arg(long)]
    graph: String,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    t: f64,
    #[arg(long)]
    from: u64,
    #[arg(long)]
    to: u64,
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    #[arg(long, default_value_t = DEFAULT_STEP)]
    h: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "output-dir")]
    output_dir: Option<PathBuf>,
}

/// Reads a graph file, or generates `gnp:<n>:<p>` from `seed`.
pub fn load_graph(spec: &str, seed: u64) -> Result<Graph> {
    if let Some(rest) = spec.strip_prefix("gnp:") {
        let bad = || Error::Usage(format!("expected gnp:<n>:<p>, got '{spec}'"));
        let (n, p) = rest.split_once(':').ok_or_else(bad)?;
        let n: u64 = n.parse().map_err(|_| bad())?;
        let p: f64 = p.parse().map_err(|_| bad())?;
        if !(0.0..=1.0).contains(&p) || n == 0 {
            return Err(bad());
        }
        return Ok(Graph::erdos_renyi(n, p, seed));
    }
    parse_graph(&std::fs::read_to_string(spec)?)
}

fn load_complex(spec: &str, seed: u64) -> Result<OrientedComplex> {
    build_complex(&load_graph(spec, seed)?)
}

/// Five decimals with trailing zeros removed.
pub fn short_float(x: f64) -> String {
    let s = format!("{x:.5}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// One-line summary printed by `build`.
pub fn build_summary(c: &OrientedComplex) -> Result<String> {
    let d = operators::dirac(c, &[])?;
    let f: Vec<String> = c.f_vector().iter().map(|k| k.to_string()).collect();
    let spec: Vec<String> = d.spectrum().into_iter().map(short_float).collect();
    Ok(format!(
        "f=({}) chi={} spec=[{}]",
        f.join(","),
        c.euler_characteristic(),
        spec.join(", ")
    ))
}

#[derive(Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub t: f64,
    pub dirac: MatrixDump,
}

/// What `flow` writes to `trajectory.json`.
#[derive(Serialize, Deserialize)]
pub struct TrajectoryFile {
    pub config_hash: String,
    pub config: RunConfig,
    pub times: Vec<f64>,
    pub snapshots: Vec<SnapshotRecord>,
}

impl TrajectoryFile {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn diracs(&self) -> Result<Vec<(f64, GradedOperator)>> {
        self.snapshots
            .iter()
            .map(|s| Ok((s.t, GradedOperator::from_dump(&s.dirac)?)))
            .collect()
    }
}

/// Header line carried by every CSV output.
fn hash_header(hash: &str) -> String {
    format!("# config_hash={hash}\n")
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

fn observer_csv(traj: &Trajectory, hash: &str) -> String {
    let mut out = hash_header(hash);
    out.push('t');
    for (name, _) in &traj.observers {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (k, s) in traj.snapshots.iter().enumerate() {
        let _ = write!(out, "{}", s.t);
        for (_, values) in &traj.observers {
            let _ = write!(out, ",{:e}", values[k].re);
        }
        out.push('\n');
    }
    out
}

fn run_flow(cfg: &RunConfig) -> Result<(OrientedComplex, Trajectory)> {
    let graph = cfg.graph_path.as_ref().expect("validated");
    let c = load_complex(&graph.to_string_lossy(), cfg.seed)?;
    let fc = cfg.flow_config();
    let s0 = FlowState::initial(&c, &fc.gamma, fc.beta, fc.with_unitary)?;
    let observers: Vec<Observer> = fc
        .observers
        .iter()
        .map(|n| Observer::builtin(n, &s0))
        .collect::<Result<_>>()?;
    let traj = flow::evolve_with(&s0, fc.t_end, &fc.options(), &observers)?;
    Ok((c, traj))
}

fn cmd_flow(args: &RunArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = args.resolve()?;
    let hash = cfg.hash();
    let (_, traj) = run_flow(&cfg)?;
    let csv = write_file(&cfg.output_dir, "observers.csv", &observer_csv(&traj, &hash))?;
    let file = TrajectoryFile {
        config_hash: hash.clone(),
        config: cfg.clone(),
        times: traj.times(),
        snapshots: traj
            .snapshots
            .iter()
            .map(|s| SnapshotRecord {
                t: s.t,
                dirac: s.dirac().to_dump(),
            })
            .collect(),
    };
    let json = write_file(
        &cfg.output_dir,
        "trajectory.json",
        &serde_json::to_string_pretty(&file)?,
    )?;
    if args.dump {
        write_file(
            &cfg.output_dir,
            "dirac_final.json",
            &serde_json::to_string_pretty(&traj.last().dirac().to_dump())?,
        )?;
    }
    let norm_d = traj.last().d.max_abs();
    writeln!(
        out,
        "t={} snapshots={} norm_d={:e} wrote {} {}",
        traj.last().t,
        traj.snapshots.len(),
        norm_d,
        csv.display(),
        json.display()
    )?;
    Ok(EXIT_OK)
}

fn cmd_diagnose(args: &RunArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = args.resolve()?;
    let hash = cfg.hash();
    let graph = cfg.graph_path.as_ref().expect("validated");
    let c = load_complex(&graph.to_string_lossy(), cfg.seed)?;
    let report = diagnostics::run_suite(&c, &cfg.flow_config(), &cfg.check_groups()?)?;
    let mut json: serde_json::Value = serde_json::from_str(&report.to_json()?)?;
    json["config_hash"] = serde_json::Value::String(hash.clone());
    write_file(&cfg.output_dir, "report.json", &serde_json::to_string_pretty(&json)?)?;
    let text = report.to_text();
    write_file(&cfg.output_dir, "report.txt", &format!("{}{text}", hash_header(&hash)))?;
    write_file(
        &cfg.output_dir,
        "series.csv",
        &format!("{}{}", hash_header(&hash), report.series_csv()),
    )?;
    write!(out, "{text}")?;
    let failures = report.failures().count();
    writeln!(out, "{} checks, {} failed", report.checks.len(), failures)?;
    Ok(if failures == 0 { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn args_hash<T: Serialize>(value: &T) -> String {
    hex::encode(Sha256::digest(serde_json::to_string(value).expect("serializable").as_bytes()))
}

fn cmd_oracle(args: &OracleArgs, out: &mut dyn Write) -> Result<i32> {
    let hash = args_hash(&(
        format!("{:?}", args.kind),
        args.t_end,
        args.h,
        &args.gamma,
        args.n,
        args.snapshot_every,
    ));
    let mut csv = hash_header(&hash);
    match args.kind {
        OracleKind::K2 => {
            if let Some(path) = &args.compare {
                let file = TrajectoryFile::load(path)?;
                let mut worst: f64 = 0.0;
                let mut rows = String::from("t,d,b,d_exact,b_exact\n");
                for (t, dirac) in file.diracs()? {
                    if dirac.size() != 3 {
                        return Err(Error::Usage("comparison trajectory is not a K2 run".into()));
                    }
                    let (d, b) = (dirac.entries()[(2, 0)].norm(), dirac.entries()[(0, 0)].norm());
                    let e = oracles::k2_closed_form(t);
                    worst = worst.max((d - e.d).abs()).max((b - e.b.abs()).abs());
                    let _ = writeln!(rows, "{t},{d:e},{b:e},{:e},{:e}", e.d, e.b);
                }
                csv.push_str(&rows);
                write_file(&args.output_dir, "oracle_k2_compare.csv", &csv)?;
                writeln!(out, "max deviation {worst:e}")?;
                return Ok(EXIT_OK);
            }
            csv.push_str("t,d,b,integral\n");
            let steps = (args.t_end.abs() / args.h).ceil().max(1.0) as usize;
            for k in (0..=steps).step_by(args.snapshot_every.max(1)) {
                let s = oracles::k2_closed_form(args.t_end * k as f64 / steps as f64);
                let _ = writeln!(csv, "{},{:e},{:e},{:e}", s.t, s.d, s.b, s.integral());
            }
            let inf = oracles::k2_inflection()?;
            writeln!(
                out,
                "inflection t*={:.6} slope={:.6} numeric t*={:.6} slope={:.6}",
                inf.t_star, inf.slope, inf.numeric_t_star, inf.numeric_slope
            )?;
            write_file(&args.output_dir, "oracle_k2.csv", &csv)?;
        }
        OracleKind::K3 => {
            let gamma: [f64; 2] = args
                .gamma
                .as_slice()
                .try_into()
                .map_err(|_| Error::Usage("K3 oracle needs two couplings".into()))?;
            let path = oracles::k3_reduced_evolve(
                oracles::K3Reduced::initial(gamma),
                args.t_end,
                args.h,
                args.snapshot_every,
            )?;
            csv.push_str("t,b1,b2,b4,b5,b6,d1,d2,tr_M\n");
            for (t, v) in &path {
                let _ = writeln!(
                    csv,
                    "{t},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                    v.b1, v.b2, v.b4, v.b5, v.b6, v.d1, v.d2, v.trace_m()
                );
            }
            let eq = oracles::k3_equivalence(gamma, args.t_end, args.h)?;
            writeln!(
                out,
                "reduced vs full: max difference {:e}, ansatz residual {:e}",
                eq.max_state_diff, eq.max_ansatz_residual
            )?;
            write_file(&args.output_dir, "oracle_k3.csv", &csv)?;
        }
        OracleKind::Circle => {
            let run = oracles::circle_model_evolve(
                &oracles::circle_model_init(args.n)?,
                args.t_end,
                args.h,
                args.snapshot_every,
            )?;
            csv.push_str("t,norm_a,anticommutator,block_b_drift,block_c_drift\n");
            for s in &run.samples {
                let _ = writeln!(
                    csv,
                    "{},{:e},{:e},{:e},{:e}",
                    s.t, s.norm_a, s.anticommutator, s.block_b_drift, s.block_c_drift
                );
            }
            writeln!(out, "N={} limit error {:e}", args.n, run.last.limit_error())?;
            write_file(&args.output_dir, "oracle_circle.csv", &csv)?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_zeta(args: &ZetaArgs, out: &mut dyn Write) -> Result<i32> {
    let grid = match args.grid.as_deref() {
        None => ZetaGrid::FIGURE,
        Some(&[a, b, c, d, step]) => ZetaGrid {
            re: (a, b),
            im: (c, d),
            step,
        },
        Some(_) => return Err(Error::Usage("--grid takes re0,re1,im0,im1,step".into())),
    };
    let exponent = match args.exponent {
        ExponentArg::Printed => CircleExponent::Printed,
        ExponentArg::Spectral => CircleExponent::Spectral,
    };
    let points = match args.kind {
        ZetaKind::Dirac => {
            let g = args
                .graph
                .as_ref()
                .ok_or_else(|| Error::Usage("zeta dirac needs --graph".into()))?;
            let c = load_complex(g, args.seed.unwrap_or(0))?;
            let z = ZetaSpec::of_operator(&operators::dirac(&c, &[])?);
            spectral::zeta_grid(&grid, |s| spectral::dirac_zeta(&z, s))?
        }
        ZetaKind::CircleGraph => {
            let n = args
                .n
                .ok_or_else(|| Error::Usage("zeta circle-graph needs --n".into()))?;
            spectral::zeta_grid(&grid, |s| spectral::circle_graph_zeta(n, s, exponent))?
        }
    };
    let hash = args_hash(&(
        format!("{:?}", args.kind),
        &args.graph,
        args.n,
        (grid.re, grid.im, grid.step),
        format!("{:?}", args.exponent),
        args.seed,
    ));
    let path = write_file(
        &args.output_dir,
        "zeta.csv",
        &format!("{}{}", hash_header(&hash), spectral::zeta_grid_csv(&points)),
    )?;
    writeln!(out, "{} points wrote {}", points.len(), path.display())?;
    Ok(EXIT_OK)
}

fn real_vector(values: &[f64], n: usize, what: &str) -> Result<CVector> {
    if values.len() != n {
        return Err(Error::Usage(format!("{what} needs {n} entries, got {}", values.len())));
    }
    Ok(CVector::from_iterator(n, values.iter().map(|&x| Complex64::new(x, 0.0))))
}

#[derive(Serialize)]
struct WaveRecord {
    t: f64,
    u: Vec<f64>,
    energy: f64,
}

fn cmd_wave(args: &WaveArgs, out: &mut dyn Write) -> Result<i32> {
    let c = load_complex(&args.graph, args.seed.unwrap_or(0))?;
    let l = operators::laplacian(&operators::dirac(&c, &[])?);
    let n = l.size();
    let u0 = match &args.u0 {
        Some(v) => real_vector(v, n, "--u0")?,
        None => {
            let mut e = vec![0.0; n];
            e[0] = 1.0;
            real_vector(&e, n, "--u0")?
        }
    };
    let v0 = match &args.v0 {
        Some(v) => real_vector(v, n, "--v0")?,
        None => CVector::zeros(n),
    };
    let sol = spectral::WaveSolution::new(&l, &u0, &v0, args.project_kernel)?;
    let samples = args.samples.max(1);
    let records: Vec<WaveRecord> = (0..=samples)
        .map(|k| {
            let t = args.t * k as f64 / samples as f64;
            WaveRecord {
                t,
                u: sol.position(t).iter().map(|z| z.re).collect(),
                energy: sol.energy(t),
            }
        })
        .collect();
    let e0 = records[0].energy;
    let drift = records.iter().map(|r| (r.energy - e0).abs()).fold(0.0, f64::max);
    let hash = args_hash(&(&args.graph, args.t, &args.u0, &args.v0, args.project_kernel, samples));
    let doc = serde_json::json!({ "config_hash": hash, "records": records });
    let path = write_file(&args.output_dir, "wave.json", &serde_json::to_string_pretty(&doc)?)?;
    writeln!(out, "energy drift {drift:e} wrote {}", path.display())?;
    Ok(EXIT_OK)
}

fn cmd_distance(args: &DistanceArgs, out: &mut dyn Write) -> Result<i32> {
    let c = load_complex(&args.graph, args.seed)?;
    let s0 = FlowState::initial(&c, &[], args.beta, false)?;
    let s = flow::advance(
        &s0,
        args.t,
        &flow::EvolveOptions {
            h: args.h,
            ..flow::EvolveOptions::default()
        },
    )?;
    let opts = ConnesOptions {
        seed: args.seed,
        ..ConnesOptions::default()
    };
    let r = spectral::connes_distance_with(&s.geometric(), &c, args.from, args.to, &opts)?;
    writeln!(out, "{}", short_float(r.distance))?;
    if let Some(dir) = &args.output_dir {
        let hash = args_hash(&(&args.graph, args.t, args.from, args.to, args.beta, args.h, args.seed));
        let doc = serde_json::json!({
            "config_hash": hash,
            "t": args.t,
            "from": args.from,
            "to": args.to,
            "distance": if r.distance.is_finite() { serde_json::json!(r.distance) } else { serde_json::json!("inf") },
            "local_search": r.local_search,
            "brute_force": r.brute_force,
            "witness": r.witness,
        });
        write_file(dir, "distance.json", &serde_json::to_string_pretty(&doc)?)?;
    }
    Ok(EXIT_OK)
}

fn cmd_build(graph: &str, seed: u64, dump: Option<&Path>, out: &mut dyn Write) -> Result<i32> {
    let c = load_complex(graph, seed)?;
    writeln!(out, "{}", build_summary(&c)?)?;
    if let Some(path) = dump {
        let d = operators::dirac(&c, &[])?;
        std::fs::write(path, serde_json::to_string_pretty(&d.to_dump())?)?;
    }
    Ok(EXIT_OK)
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    configure_threads();
    let result = match &cli.cmd {
        Command::Build { graph, seed, dump } => cmd_build(graph, seed.unwrap_or(0), dump.as_deref(), out),
        Command::Flow(a) => cmd_flow(a, out),
        Command::Diagnose(a) => cmd_diagnose(a, out),
        Command::Oracle(a) => cmd_oracle(a, out),
        Command::Zeta(a) => cmd_zeta(a, out),
        Command::Wave(a) => cmd_wave(a, out),
        Command::Distance(a) => cmd_distance(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
