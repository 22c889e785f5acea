//! Command-line front end: `gen`, `build`, `query` and `bench`.
//!
//! Settings resolve as command-line flag, then config file (bench only),
//! then the `DPGRID_SEED` environment variable for the master seed, then
//! built-in defaults.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::agrid::AGConfig;
use crate::bench::{
    default_schedule, run_experiment, ExperimentConfig, Method, QuerySchedule, DEFAULT_NUM_SEEDS,
    DEFAULT_QUERIES_PER_SIZE,
};
use crate::error::{Error, Result};
use crate::geo::{
    gen_synthetic, load_points, write_points, Cluster, Point, PointDataset, Rect, SyntheticKind, SyntheticSpec,
};
use crate::hierarchy::HierConfig;
use crate::io::{parse_synopsis, write_synopsis};
use crate::privacy::{NoiseFactory, SizingMode, DEFAULT_ESTIMATE_FRACTION};
use crate::query::{AnySynopsis, Synopsis};
use crate::ugrid::{UGConfig, DEFAULT_C};

pub const SEED_ENV: &str = "DPGRID_SEED";
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Parser)]
#[command(name = "dpgrid", version, about = "Differentially private grid synopses for 2-D points")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic point CSV.
    Gen(GenArgs),
    /// Build a synopsis from a point CSV.
    Build(BuildArgs),
    /// Answer a range query from a synopsis file.
    Query(QueryArgs),
    /// Run the error-evaluation protocol and write a CSV report.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    Uniform,
    Mixture,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value = "uniform")]
    pub kind: GenKind,
    #[arg(long)]
    pub n: usize,
    /// x0,y0,x1,y1
    #[arg(long, default_value = "0,0,1,1", allow_hyphen_values = true)]
    pub domain: Rect,
    /// Mixture component as cx,cy,std,weight; repeat for each cluster.
    #[arg(long = "cluster", allow_hyphen_values = true)]
    pub clusters: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodName {
    Ug,
    Ag,
    Hier,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long, value_enum)]
    pub method: MethodName,
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: f64,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub c2: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Fixed grid size (ug) or leaf grid size (hier).
    #[arg(long)]
    pub m: Option<usize>,
    /// Fixed first-level grid size (ag).
    #[arg(long)]
    pub m1: Option<usize>,
    /// Branching per axis (hier).
    #[arg(long)]
    pub b: Option<usize>,
    /// Number of levels (hier).
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Size grids from the true point count instead of a noisy estimate.
    #[arg(long, conflicts_with = "estimate_fraction")]
    pub exact_n: bool,
    #[arg(long)]
    pub estimate_fraction: Option<f64>,
    /// Skip noise entirely (testing only; the output is not private).
    #[arg(long)]
    pub zero_noise: bool,
    /// Disable constrained inference (hier).
    #[arg(long)]
    pub no_inference: bool,
    /// Explicit domain x0,y0,x1,y1; defaults to the padded bounding box.
    #[arg(long, allow_hyphen_values = true)]
    pub domain: Option<Rect>,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    pub synopsis: PathBuf,
    /// x0,y0,x1,y1
    #[arg(long, allow_hyphen_values = true)]
    pub rect: String,
}

#[derive(Debug, Args, Default)]
pub struct BenchArgs {
    /// TOML file with any of the settings below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub domain: Option<Rect>,
    #[arg(long)]
    pub dataset_tag: Option<String>,
    /// Comma-separated method specs: ug, ug:m=100, ag, ag:m1=25, hier:b=2,d=3,m=360.
    /// Separate several with `;`.
    #[arg(long)]
    pub methods: Option<String>,
    /// Comma-separated privacy budgets.
    #[arg(long, value_delimiter = ',')]
    pub epsilons: Option<Vec<f64>>,
    /// Master seed; trials use seeds master, master+1, ...
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub num_seeds: Option<u64>,
    #[arg(long)]
    pub queries: Option<usize>,
    /// Smallest query size w,h; defaults to 1/64 of the domain per axis.
    #[arg(long)]
    pub q1: Option<String>,
    /// Snap query corners to an n×n lattice.
    #[arg(long)]
    pub lattice: Option<usize>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub c2: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub exact_n: bool,
    #[arg(long)]
    pub zero_noise: bool,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also dump every raw error value to this CSV.
    #[arg(long)]
    pub samples: Option<PathBuf>,
}

/// Bench settings accepted from a TOML config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchFile {
    pub input: Option<PathBuf>,
    pub domain: Option<[f64; 4]>,
    pub dataset_tag: Option<String>,
    pub methods: Option<Vec<String>>,
    pub epsilons: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub num_seeds: Option<u64>,
    pub queries: Option<usize>,
    pub q1: Option<[f64; 2]>,
    pub lattice: Option<usize>,
    pub c: Option<f64>,
    pub c2: Option<f64>,
    pub alpha: Option<f64>,
    pub exact_n: Option<bool>,
    pub zero_noise: Option<bool>,
    pub rho: Option<f64>,
    pub out: Option<PathBuf>,
    pub samples: Option<PathBuf>,
}

fn default_seed() -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s.trim().parse().map_err(|_| Error::param(format!("{SEED_ENV}={s:?} is not an integer"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn read_dataset(path: &Path, domain: Option<Rect>) -> Result<PointDataset> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    load_points(&text, domain)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn parse_cluster(s: &str) -> Result<Cluster> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::param(format!("cluster {s:?}: expected cx,cy,std,weight")))?;
    match v[..] {
        [x, y, std, weight] => Ok(Cluster { center: Point::new(x, y), std, weight }),
        _ => Err(Error::param(format!("cluster {s:?}: expected cx,cy,std,weight"))),
    }
}

pub fn cmd_gen<W: Write>(args: &GenArgs, _stdout: &mut W) -> Result<()> {
    let kind = match args.kind {
        GenKind::Uniform => {
            if !args.clusters.is_empty() {
                return Err(Error::param("--cluster only applies to --kind mixture"));
            }
            SyntheticKind::Uniform
        }
        GenKind::Mixture => {
            SyntheticKind::GaussianMixture(args.clusters.iter().map(|c| parse_cluster(c)).collect::<Result<_>>()?)
        }
    };
    let spec = SyntheticSpec { kind, n: args.n, domain: args.domain };
    let seed = args.seed.map_or_else(default_seed, Ok)?;
    let ds = gen_synthetic(&spec, seed)?;
    let mut out = create(&args.out)?;
    write_points(&ds, &mut out)?;
    out.flush()?;
    Ok(())
}

fn sizing(exact_n: bool, fraction: Option<f64>) -> SizingMode {
    if exact_n {
        SizingMode::ExactN
    } else {
        SizingMode::NoisyEstimate { fraction: fraction.unwrap_or(DEFAULT_ESTIMATE_FRACTION) }
    }
}

/// Resolves the build flags into a method, rejecting flags that do not
/// apply to the chosen method.
pub fn build_method(args: &BuildArgs) -> Result<Method> {
    let reject = |set: bool, flag: &str| -> Result<()> {
        if set {
            Err(Error::param(format!("{flag} does not apply to --method {:?}", args.method).to_lowercase()))
        } else {
            Ok(())
        }
    };
    if !(args.epsilon > 0.0) {
        return Err(Error::param(format!("--epsilon must be positive, got {}", args.epsilon)));
    }
    let mode = sizing(args.exact_n, args.estimate_fraction);
    match args.method {
        MethodName::Ug => {
            reject(args.c2.is_some(), "--c2")?;
            reject(args.alpha.is_some(), "--alpha")?;
            reject(args.m1.is_some(), "--m1")?;
            reject(args.b.is_some() || args.d.is_some(), "--b/--d")?;
            reject(args.no_inference, "--no-inference")?;
            let cfg =
                UGConfig { c: args.c.unwrap_or(DEFAULT_C), m_override: args.m, sizing: mode, ..Default::default() };
            cfg.validate()?;
            Ok(Method::Uniform(cfg))
        }
        MethodName::Ag => {
            reject(args.m.is_some(), "--m")?;
            reject(args.b.is_some() || args.d.is_some(), "--b/--d")?;
            reject(args.no_inference, "--no-inference")?;
            let c = args.c.unwrap_or(DEFAULT_C);
            let cfg = AGConfig {
                alpha: args.alpha.unwrap_or(crate::agrid::DEFAULT_ALPHA),
                c,
                c2: args.c2.unwrap_or(c / 2.0),
                m1_override: args.m1,
                sizing: mode,
                ..Default::default()
            };
            cfg.validate()?;
            Ok(Method::Adaptive(cfg))
        }
        MethodName::Hier => {
            reject(args.c.is_some() || args.c2.is_some(), "--c/--c2")?;
            reject(args.alpha.is_some(), "--alpha")?;
            reject(args.m1.is_some(), "--m1")?;
            reject(args.exact_n || args.estimate_fraction.is_some(), "--exact-n/--estimate-fraction")?;
            let (Some(b), Some(d), Some(m)) = (args.b, args.d, args.m) else {
                return Err(Error::param("--method hier needs --b, --d and --m"));
            };
            let cfg = HierConfig { b, d, leaf_m: m, inference: !args.no_inference };
            cfg.validate()?;
            Ok(Method::Hierarchy(cfg))
        }
    }
}

/// One-line summary of the chosen grid sizes.
pub fn describe(s: &AnySynopsis) -> String {
    match s {
        AnySynopsis::Uniform(g) => format!("method=ug m={}", g.m()),
        AnySynopsis::Adaptive(a) => {
            let split = a.cells().iter().filter(|c| c.m2 > 1).count();
            let max_m2 = a.cells().iter().map(|c| c.m2).max().unwrap_or(1);
            format!("method=ag m1={} leaves={} split_cells={split} max_m2={max_m2}", a.m1(), a.num_leaves())
        }
        AnySynopsis::Hierarchy(h) => {
            let sizes: Vec<String> = h.levels().iter().map(|l| l.grid.m.to_string()).collect();
            format!("method=hier levels={} inference={}", sizes.join(","), h.is_inferred())
        }
    }
}

fn budget_line(s: &AnySynopsis) -> String {
    let b = match s {
        AnySynopsis::Uniform(g) => g.budget(),
        AnySynopsis::Adaptive(a) => a.budget(),
        AnySynopsis::Hierarchy(h) => h.budget(),
    };
    format!("budget total={} spent={} ledger={b}", b.total(), b.spent())
}

pub fn cmd_build<W: Write>(args: &BuildArgs, stdout: &mut W) -> Result<()> {
    let method = build_method(args)?;
    let ds = read_dataset(&args.input, args.domain)?;
    let seed = args.seed.map_or_else(default_seed, Ok)?;
    let factory = if args.zero_noise { NoiseFactory::Zero } else { NoiseFactory::Laplace };
    let syn = method.build(&ds, args.epsilon, &mut factory.make(seed, 0))?;
    let mut out = create(&args.out)?;
    write_synopsis(&syn, &mut out)?;
    out.flush()?;
    writeln!(stdout, "{}", describe(&syn))?;
    writeln!(stdout, "{}", budget_line(&syn))?;
    Ok(())
}

pub fn cmd_query<W: Write>(args: &QueryArgs, stdout: &mut W) -> Result<()> {
    let rect: Rect = args.rect.parse()?;
    let text = fs::read_to_string(&args.synopsis)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", args.synopsis.display()))))?;
    let syn = parse_synopsis(&text)?;
    writeln!(stdout, "{}", syn.answer(&rect).value)?;
    Ok(())
}

/// Parses one method spec such as `ug:m=100` or `hier:b=2,d=3,m=360`.
pub fn parse_method_spec(spec: &str, base_ug: UGConfig, base_ag: AGConfig) -> Result<Method> {
    let (name, params) = spec.trim().split_once(':').unwrap_or((spec.trim(), ""));
    let mut kv = Vec::new();
    for p in params.split(',').filter(|p| !p.is_empty()) {
        let (k, v) = p.split_once('=').ok_or_else(|| Error::param(format!("method {spec:?}: bad parameter {p:?}")))?;
        kv.push((k.trim(), v.trim()));
    }
    let bad = |k: &str| Error::param(format!("method {spec:?}: unknown or malformed parameter {k:?}"));
    let int = |v: &str, k: &str| v.parse::<usize>().map_err(|_| bad(k));
    let real = |v: &str, k: &str| v.parse::<f64>().map_err(|_| bad(k));
    let method = match name {
        "ug" => {
            let mut cfg = base_ug;
            for (k, v) in kv {
                match k {
                    "m" => cfg.m_override = Some(int(v, k)?),
                    "c" => cfg.c = real(v, k)?,
                    _ => return Err(bad(k)),
                }
            }
            cfg.validate()?;
            Method::Uniform(cfg)
        }
        "ag" => {
            let mut cfg = base_ag;
            for (k, v) in kv {
                match k {
                    "m1" => cfg.m1_override = Some(int(v, k)?),
                    "c" => cfg.c = real(v, k)?,
                    "c2" => cfg.c2 = real(v, k)?,
                    "alpha" => cfg.alpha = real(v, k)?,
                    _ => return Err(bad(k)),
                }
            }
            cfg.validate()?;
            Method::Adaptive(cfg)
        }
        "hier" => {
            let mut cfg = HierConfig::new(2, 3, 0);
            for (k, v) in kv {
                match k {
                    "b" => cfg.b = int(v, k)?,
                    "d" => cfg.d = int(v, k)?,
                    "m" => cfg.leaf_m = int(v, k)?,
                    "inference" => cfg.inference = v.parse().map_err(|_| bad(k))?,
                    _ => return Err(bad(k)),
                }
            }
            cfg.validate()?;
            Method::Hierarchy(cfg)
        }
        other => return Err(Error::param(format!("unknown method {other:?}"))),
    };
    Ok(method)
}

/// Fully resolved bench settings.
#[derive(Debug)]
pub struct BenchPlan {
    pub input: PathBuf,
    pub domain: Option<Rect>,
    pub experiment: ExperimentConfig,
    pub out: PathBuf,
    pub samples: Option<PathBuf>,
    /// Query size override (w, h) for q1, if any.
    q1: Option<(f64, f64)>,
}

pub fn resolve_bench(args: &BenchArgs) -> Result<BenchPlan> {
    let file: BenchFile = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
            toml::from_str(&text).map_err(|e| Error::param(format!("{}: {}", path.display(), e.message())))?
        }
        None => BenchFile::default(),
    };
    let input = args.input.clone().or(file.input).ok_or_else(|| Error::param("bench needs --in or `input`"))?;
    let out = args.out.clone().or(file.out).ok_or_else(|| Error::param("bench needs --out or `out`"))?;
    let domain = match (args.domain, file.domain) {
        (Some(d), _) => Some(d),
        (None, Some([x0, y0, x1, y1])) => Some(Rect::new(x0, y0, x1, y1)?),
        _ => None,
    };
    let exact_n = args.exact_n || file.exact_n.unwrap_or(false);
    let zero_noise = args.zero_noise || file.zero_noise.unwrap_or(false);
    let c = args.c.or(file.c).unwrap_or(DEFAULT_C);
    let mode = sizing(exact_n, None);
    let base_ug = UGConfig { c, sizing: mode, ..Default::default() };
    let base_ag = AGConfig {
        c,
        c2: args.c2.or(file.c2).unwrap_or(c / 2.0),
        alpha: args.alpha.or(file.alpha).unwrap_or(crate::agrid::DEFAULT_ALPHA),
        sizing: mode,
        ..Default::default()
    };
    let specs: Vec<String> = match (&args.methods, file.methods) {
        (Some(s), _) => s.split(';').map(str::to_string).collect(),
        (None, Some(v)) => v,
        (None, None) => vec!["ug".into(), "ag".into()],
    };
    let methods = specs.iter().map(|s| parse_method_spec(s, base_ug, base_ag)).collect::<Result<Vec<_>>>()?;
    let epsilons = args.epsilons.clone().or(file.epsilons).unwrap_or_else(|| vec![0.1, 1.0]);
    if let Some(e) = epsilons.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::param(format!("epsilon must be positive, got {e}")));
    }
    let master = match args.seed.or(file.seed) {
        Some(s) => s,
        None => default_seed()?,
    };
    let num_seeds = args.num_seeds.or(file.num_seeds).unwrap_or(DEFAULT_NUM_SEEDS);
    let q1 = match (&args.q1, file.q1) {
        (Some(s), _) => {
            let v: Vec<f64> = s
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::param(format!("--q1 {s:?}: expected w,h")))?;
            match v[..] {
                [w, h] => Some((w, h)),
                _ => return Err(Error::param(format!("--q1 {s:?}: expected w,h"))),
            }
        }
        (None, Some([w, h])) => Some((w, h)),
        _ => None,
    };
    let queries = args.queries.or(file.queries).unwrap_or(DEFAULT_QUERIES_PER_SIZE);
    let dataset_tag = args.dataset_tag.clone().or(file.dataset_tag).unwrap_or_else(|| {
        input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into())
    });
    let experiment = ExperimentConfig {
        dataset_tag,
        methods,
        epsilons,
        // Placeholder until the domain is known; see `cmd_bench`.
        schedule: QuerySchedule {
            lattice: args.lattice.or(file.lattice),
            ..QuerySchedule::from_q1((1.0, 1.0), queries)
        },
        seeds: (0..num_seeds).map(|k| master.wrapping_add(k)).collect(),
        noise: if zero_noise { NoiseFactory::Zero } else { NoiseFactory::Laplace },
        rho: args.rho.or(file.rho),
    };
    Ok(BenchPlan { input, domain, experiment, out, samples: args.samples.clone().or(file.samples), q1 })
}

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
# Plots pooled mean relative error per query size for each method and epsilon.
import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "__CSV__"
series = defaultdict(dict)
with open(path) as fh:
    for row in csv.DictReader(fh):
        if row["seed"] != "pooled" or row["kind"] != "relative":
            continue
        series[(row["method"], float(row["epsilon"]))][int(row["size_index"])] = float(row["mean"])

epsilons = sorted({eps for _, eps in series})
fig, axes = plt.subplots(1, len(epsilons), figsize=(5 * len(epsilons), 4), squeeze=False)
for ax, eps in zip(axes[0], epsilons):
    for (method, e), points in sorted(series.items()):
        if e != eps:
            continue
        sizes = sorted(points)
        ax.plot(sizes, [points[s] for s in sizes], marker="o", label=method)
    ax.set_title(f"epsilon={eps}")
    ax.set_xlabel("query size index")
    ax.set_ylabel("mean relative error")
    ax.set_yscale("log")
    ax.legend()
fig.tight_layout()
fig.savefig(path.rsplit(".", 1)[0] + ".png", dpi=120)
"#;

pub fn cmd_bench<W: Write>(args: &BenchArgs, stdout: &mut W) -> Result<()> {
    let mut plan = resolve_bench(args)?;
    let ds = read_dataset(&plan.input, plan.domain)?;
    let lattice = plan.experiment.schedule.lattice;
    let queries = plan.experiment.schedule.queries_per_size;
    plan.experiment.schedule = match plan.q1 {
        Some(q1) => QuerySchedule::from_q1(q1, queries),
        None => QuerySchedule { queries_per_size: queries, ..default_schedule(&ds.domain()) },
    };
    plan.experiment.schedule.lattice = lattice;
    let report = run_experiment(&ds, &plan.experiment)?;

    let mut out = create(&plan.out)?;
    report.write_csv(&mut out)?;
    out.flush()?;
    let script_path = plan.out.with_extension("plot.py");
    let csv_name = plan.out.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    fs::write(&script_path, PLOT_SCRIPT.replace("__CSV__", &csv_name))?;
    if let Some(path) = &plan.samples {
        let mut f = create(path)?;
        report.write_samples_csv(&mut f)?;
        f.flush()?;
    }
    writeln!(
        stdout,
        "wrote {} rows ({} methods x {} epsilons x {} seeds) to {}",
        report.rows.len(),
        plan.experiment.methods.len(),
        plan.experiment.epsilons.len(),
        plan.experiment.seeds.len(),
        plan.out.display()
    )?;
    Ok(())
}

pub fn run<W: Write>(cli: &Cli, stdout: &mut W) -> Result<()> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a, stdout),
        Command::Build(a) => cmd_build(a, stdout),
        Command::Query(a) => cmd_query(a, stdout),
        Command::Bench(a) => cmd_bench(a, stdout),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_specs() {
        let (u, a) = (UGConfig::default(), AGConfig::default());
        assert_eq!(parse_method_spec("ug", u, a).unwrap().tag(), "ug");
        assert_eq!(parse_method_spec("ug:m=100", u, a).unwrap().tag(), "ug_m100");
        assert_eq!(parse_method_spec("ag:m1=25,alpha=0.25", u, a).unwrap().tag(), "ag_m25");
        assert_eq!(parse_method_spec("hier:b=2,d=3,m=360", u, a).unwrap().tag(), "hier_b2_d3_m360");
        assert!(parse_method_spec("hier:b=2,d=3,m=90", u, a).is_err());
        assert!(parse_method_spec("ag:alpha=1.5", u, a).is_err());
        assert!(parse_method_spec("kd", u, a).is_err());
        assert!(parse_method_spec("ug:q=1", u, a).is_err());
    }

    fn build_args(method: MethodName) -> BuildArgs {
        BuildArgs {
            method,
            epsilon: 1.0,
            c: None,
            c2: None,
            alpha: None,
            m: None,
            m1: None,
            b: None,
            d: None,
            seed: None,
            exact_n: false,
            estimate_fraction: None,
            zero_noise: false,
            no_inference: false,
            domain: None,
            input: PathBuf::from("in.csv"),
            out: PathBuf::from("out.syn"),
        }
    }

    #[test]
    fn build_flag_validation() {
        assert!(build_method(&build_args(MethodName::Ug)).is_ok());
        assert!(build_method(&BuildArgs { alpha: Some(0.3), ..build_args(MethodName::Ug) }).is_err());
        assert!(build_method(&BuildArgs { m: Some(4), ..build_args(MethodName::Ag) }).is_err());
        assert!(build_method(&BuildArgs { alpha: Some(1.0), ..build_args(MethodName::Ag) }).is_err());
        assert!(build_method(&BuildArgs { epsilon: 0.0, ..build_args(MethodName::Ug) }).is_err());
        assert!(build_method(&build_args(MethodName::Hier)).is_err());
        let h = BuildArgs { b: Some(2), d: Some(3), m: Some(8), ..build_args(MethodName::Hier) };
        assert_eq!(build_method(&h).unwrap().tag(), "hier_b2_d3_m8");
        match build_method(&BuildArgs { c2: Some(3.0), ..build_args(MethodName::Ag) }).unwrap() {
            Method::Adaptive(cfg) => assert_eq!((cfg.c, cfg.c2), (10.0, 3.0)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn exact_n_conflicts_with_fraction() {
        let parsed = Cli::try_parse_from([
            "dpgrid",
            "build",
            "--method",
            "ug",
            "--epsilon",
            "1",
            "--exact-n",
            "--estimate-fraction",
            "0.1",
            "--in",
            "a",
            "--out",
            "b",
        ]);
        assert!(parsed.is_err());
    }

    #[test]
    fn bench_precedence_flag_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("bench.toml");
        fs::write(&cfg, "input = \"pts.csv\"\nout = \"r.csv\"\nepsilons = [0.5]\nnum_seeds = 3\nseed = 40\nmethods = [\"ug:m=8\"]\n").unwrap();
        let args = BenchArgs { config: Some(cfg.clone()), ..Default::default() };
        let plan = resolve_bench(&args).unwrap();
        assert_eq!(plan.experiment.epsilons, vec![0.5]);
        assert_eq!(plan.experiment.seeds, vec![40, 41, 42]);
        assert_eq!(plan.experiment.methods[0].tag(), "ug_m8");
        let args = BenchArgs { config: Some(cfg), epsilons: Some(vec![2.0]), seed: Some(7), ..Default::default() };
        let plan = resolve_bench(&args).unwrap();
        assert_eq!(plan.experiment.epsilons, vec![2.0]);
        assert_eq!(plan.experiment.seeds, vec![7, 8, 9]);

        let bad = dir.path().join("bad.toml");
        fs::write(&bad, "inptu = 1\n").unwrap();
        assert!(resolve_bench(&BenchArgs { config: Some(bad), ..Default::default() }).is_err());
    }
}
