use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use slitlab::cantor::{dimension_of_ratio, CantorSpec, DEFAULT_TOL};
use slitlab::config::{run, ExperimentConfig, ExperimentKind, Num, OutputConfig};
use slitlab::dimension::{
    dim_upper_estimate, measure_density_check, ComponentChoice, NetHierarchy, NetSet, SGrid, Separation,
};
use slitlab::extension::{
    default_max_gen, ratio_p, AnalyticSource, ExtensionSetup, Part, TestFunction, UnassignedPolicy,
};
use slitlab::fields::{gradient, grid_sample, read_binary, seminorm_p, write_binary, write_csv, GridField};
use slitlab::regions::{RegionKind, RegionSpec};
use slitlab::stats::parse_fraction;
use slitlab::whitney::{claim_count, reflect_violations, verify_whitney, whitney_decompose, ChainGraph};

#[derive(Parser)]
#[command(name = "slitlab", version, about = "Cantor-slit domain experiments")]
struct Cli {
    /// Worker threads for parallel stages.
    #[arg(long, global = true, env = "SLITLAB_WORKERS")]
    workers: Option<usize>,
    /// Seed for every stochastic step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Cantor set queries.
    #[command(subcommand)]
    Cantor(CantorCmd),
    /// Region membership and components.
    #[command(subcommand)]
    Region(RegionCmd),
    /// Whitney decompositions.
    #[command(subcommand)]
    Whitney(WhitneyCmd),
    /// Grid fields.
    #[command(subcommand)]
    Field(FieldCmd),
    /// Tabulate the extension of a test function.
    Extend(ExtendArgs),
    /// Closed-form and empirical norm table over several lambdas.
    Sweep(SweepArgs),
    /// Net-based dimension estimates.
    #[command(subcommand)]
    Dim(DimCmd),
    /// Monte Carlo density of the slit components at a point.
    Density(DensityArgs),
    /// Run an experiment described by a TOML config.
    Run(RunArgs),
}

#[derive(Args, Clone)]
struct Slit {
    #[arg(long, value_parser = fraction)]
    lambda: f64,
    #[arg(long, default_value_t = 2)]
    n: usize,
}

fn fraction(s: &str) -> Result<f64, String> {
    parse_fraction(s).ok_or_else(|| format!("cannot read number {s:?}"))
}

// an alias keeps clap from treating the field as a repeated argument
type Point = Vec<f64>;

fn point(s: &str) -> Result<Point, String> {
    s.split(',').map(|t| fraction(t.trim())).collect()
}

#[derive(Subcommand)]
enum CantorCmd {
    /// Euclidean distance from a point to the product Cantor set.
    Dist {
        #[command(flatten)]
        slit: Slit,
        /// Coordinates in the Cantor directions, comma separated.
        #[arg(long, value_parser = point)]
        point: Point,
    },
    /// Dimension of the product Cantor set.
    Dim {
        #[command(flatten)]
        slit: Slit,
    },
}

#[derive(Subcommand)]
enum RegionCmd {
    /// Membership, slit side and boundary distance bracket of a point.
    Probe {
        #[arg(long, default_value = "omega")]
        kind: String,
        #[command(flatten)]
        slit: Slit,
        #[arg(long, value_parser = point)]
        point: Point,
    },
    /// Flood-fill components of the region inside a ball.
    Components {
        #[arg(long, default_value = "omega")]
        kind: String,
        #[command(flatten)]
        slit: Slit,
        #[arg(long, value_parser = point)]
        center: Point,
        #[arg(long, value_parser = fraction)]
        radius: f64,
        #[arg(long, value_parser = fraction)]
        h: f64,
        /// Where to write the labels grid (JSON).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Decomp {
    /// `n` for the interior of N, `omega` for its complement.
    #[arg(long, default_value = "n")]
    region: String,
    #[command(flatten)]
    slit: Slit,
    #[arg(long, default_value_t = 8)]
    max_gen: i32,
}

impl Decomp {
    fn region(&self) -> Result<RegionSpec> {
        let kind = RegionKind::parse(&self.region)?;
        Ok(RegionSpec::slit(kind, self.slit.n, self.slit.lambda)?)
    }
}

#[derive(Subcommand)]
enum WhitneyCmd {
    /// Build a decomposition and write its cubes.
    Build {
        #[command(flatten)]
        d: Decomp,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the Whitney conditions and the reflection map.
    Verify {
        #[command(flatten)]
        slit: Slit,
        #[arg(long, default_value_t = 8)]
        max_gen: i32,
    },
    /// Per-k counts of chains sharing a complement cube.
    ClaimCount {
        #[command(flatten)]
        slit: Slit,
        #[arg(long, default_value_t = 10)]
        max_gen: i32,
        #[arg(long, default_value_t = 4)]
        k_max: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum FieldCmd {
    /// Sample a test function on the grid of a region.
    Sample {
        #[arg(long, default_value = "omega")]
        kind: String,
        #[command(flatten)]
        slit: Slit,
        #[arg(long, value_parser = fraction)]
        h: f64,
        /// Test function, e.g. `coord:1`, `random:seed=7`, `jump:depth=1`.
        #[arg(long)]
        u: String,
        /// Output file; `.csv` for text, anything else for binary.
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference gradient of a scalar grid.
    Grad {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// L^p seminorm of a field's gradient (or of a vector field itself).
    Norm {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_parser = fraction)]
        p: f64,
    },
}

#[derive(Args)]
struct ExtendArgs {
    #[command(flatten)]
    slit: Slit,
    /// Report the ratio for this exponent as well.
    #[arg(long, value_parser = fraction)]
    p: Option<f64>,
    #[arg(long, default_value = "jump:depth=1")]
    u: String,
    #[arg(long, value_parser = fraction, default_value = "2^-9")]
    grid: f64,
    #[arg(long)]
    max_gen: Option<i32>,
    /// Fail on unassigned cubes instead of dropping them.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, value_parser = fraction, default_value = "1.5")]
    p: f64,
    #[arg(long, value_delimiter = ',', default_value = "1/8,1/16,1/32")]
    lambdas: Vec<String>,
    #[arg(long, default_value = "2^-8")]
    grid: String,
    #[arg(long)]
    max_gen: Option<i32>,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Test function specs for the empirical column.
    #[arg(long, value_delimiter = ';')]
    family: Option<Vec<String>>,
    /// Closed-form columns only.
    #[arg(long)]
    no_empirical: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SetArg {
    CantorSlit,
    CantorLine,
}

#[derive(Clone, Copy, ValueEnum)]
enum SepArg {
    Single,
    Double,
}

#[derive(Subcommand)]
enum DimCmd {
    /// Certified upper estimate from separated nets.
    Estimate {
        #[arg(long, value_enum, default_value = "cantor-slit")]
        set: SetArg,
        #[command(flatten)]
        slit: Slit,
        #[arg(long, default_value_t = 5)]
        levels: usize,
        #[arg(long, value_enum, default_value = "double")]
        separation: SepArg,
        #[arg(long, default_value_t = 100_000)]
        probes: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CompArg {
    Upper,
    Lower,
    Largest,
}

#[derive(Args)]
struct DensityArgs {
    #[arg(long, value_parser = fraction, default_value = "1/4")]
    lambda: f64,
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, value_parser = point)]
    point: Option<Point>,
    #[arg(long, value_delimiter = ',', value_parser = fraction, default_value = "1/4,1/8,1/16")]
    radii: Vec<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    #[arg(long, value_enum, default_value = "upper")]
    component: CompArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the output directory of the config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn load_grid(path: &Path) -> Result<GridField> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_binary(BufReader::new(f))?)
}

fn save_grid(g: &GridField, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    if path.extension().is_some_and(|e| e == "csv") {
        write_csv(g, &mut w)?;
    } else {
        write_binary(g, &mut w)?;
    }
    w.flush()?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<bool> {
    let seed = cli.seed;
    match cli.cmd {
        Cmd::Cantor(c) => cantor(c),
        Cmd::Region(c) => region(c),
        Cmd::Whitney(c) => whitney(c),
        Cmd::Field(c) => field(c),
        Cmd::Extend(a) => extend(a),
        Cmd::Sweep(a) => sweep(a, seed),
        Cmd::Dim(c) => dim(c, seed),
        Cmd::Density(a) => density(a, seed),
        Cmd::Run(a) => run_config(a, seed),
    }
}

fn cantor(c: CantorCmd) -> Result<bool> {
    match c {
        CantorCmd::Dist { slit, point } => {
            let spec = CantorSpec::fixed(slit.lambda, slit.n - 1, 64)?;
            let d = spec.c_distance(&point, DEFAULT_TOL)?;
            print_json(&json!({ "point": point, "distance": d }))?;
        }
        CantorCmd::Dim { slit } => {
            let spec = CantorSpec::fixed(slit.lambda, slit.n - 1, 64)?;
            print_json(&json!({ "lambda": slit.lambda, "n": slit.n, "dim": spec.cantor_dim(slit.n)? }))?;
        }
    }
    Ok(true)
}

fn region(c: RegionCmd) -> Result<bool> {
    match c {
        RegionCmd::Probe { kind, slit, point } => {
            let spec = RegionSpec::slit(RegionKind::parse(&kind)?, slit.n, slit.lambda)?;
            let member = spec.membership(&point)?;
            let bracket = spec.boundary_distance(&point).ok();
            print_json(&json!({
                "point": point,
                "member": member,
                "slit_side": spec.slit_side(&point),
                "boundary_distance": bracket.map(|(lo, hi)| json!({ "lo": lo, "hi": hi })),
            }))?;
        }
        RegionCmd::Components {
            kind,
            slit,
            center,
            radius,
            h,
            out,
        } => {
            let spec = RegionSpec::slit(RegionKind::parse(&kind)?, slit.n, slit.lambda)?;
            let map = spec.component_label(&center, radius, h)?;
            let path = out.unwrap_or_else(|| PathBuf::from("components.json"));
            write_file(&path, &serde_json::to_string(&map)?)?;
            print_json(&json!({ "count": map.count, "labels": path }))?;
        }
    }
    Ok(true)
}

fn whitney(c: WhitneyCmd) -> Result<bool> {
    match c {
        WhitneyCmd::Build { d, out } => {
            let w = whitney_decompose(&d.region()?, d.max_gen)?;
            write_file(&out, &serde_json::to_string(&w.cubes)?)?;
            print_json(&json!({
                "cubes": w.len(),
                "frontier": w.frontier_count(),
                "generations": w.generation_counts(),
                "out": out,
            }))?;
            Ok(true)
        }
        WhitneyCmd::Verify { slit, max_gen } => {
            let setup = ExtensionSetup::new(slit.n, slit.lambda, max_gen)?;
            let interior = verify_whitney(&setup.w);
            let complement = verify_whitney(&setup.wt);
            let violations = reflect_violations(&setup.w, &setup.wt, &setup.map);
            let unassigned = setup.map.unassigned_fraction(&setup.w);
            print_json(&json!({
                "interior": interior,
                "complement": complement,
                "reflect_violations": violations,
                "unassigned_fraction": unassigned,
            }))?;
            Ok(interior.clean() && complement.clean() && violations == 0)
        }
        WhitneyCmd::ClaimCount {
            slit,
            max_gen,
            k_max,
            out,
        } => {
            let setup = ExtensionSetup::new(slit.n, slit.lambda, max_gen)?;
            let graph = ChainGraph::new(&setup.wt)?;
            let counts = claim_count(&setup.w, &setup.map, &graph, k_max)?;
            let mut csv = String::from("k,max_count,fitted_exponent\n");
            for (k, c) in &counts.counts {
                csv.push_str(&format!("{k},{c},{}\n", counts.exponent));
            }
            match out {
                Some(p) => write_file(&p, &csv)?,
                None => print!("{csv}"),
            }
            Ok(true)
        }
    }
}

fn field(c: FieldCmd) -> Result<bool> {
    match c {
        FieldCmd::Sample { kind, slit, h, u, out } => {
            let spec = RegionSpec::slit(RegionKind::parse(&kind)?, slit.n, slit.lambda)?;
            let omega = spec.with_kind(RegionKind::OmegaLambda)?;
            let prep = TestFunction::parse(&u)?.prepare(&omega, h)?;
            let g = grid_sample(|x| prep.eval(x), &spec, h)?;
            save_grid(&g, &out)?;
            print_json(&json!({ "cells": g.len(), "active": g.masked_count(), "out": out }))?;
        }
        FieldCmd::Grad { input, out } => {
            let g = gradient(&load_grid(&input)?)?;
            save_grid(&g.field, &out)?;
            print_json(&json!({ "flagged": g.flagged, "out": out }))?;
        }
        FieldCmd::Norm { input, p } => {
            let g = load_grid(&input)?;
            let v = if g.components == 1 {
                seminorm_p(&gradient(&g)?.field, p, None)?
            } else {
                seminorm_p(&g, p, None)?
            };
            print_json(&json!({ "p": p, "seminorm": v }))?;
        }
    }
    Ok(true)
}

fn extend(a: ExtendArgs) -> Result<bool> {
    let max_gen = match a.max_gen {
        Some(g) => g,
        None => default_max_gen(a.grid)?,
    };
    let setup = ExtensionSetup::new(a.slit.n, a.slit.lambda, max_gen)?;
    let prep = TestFunction::parse(&a.u)?.prepare(&setup.omega, a.grid)?;
    let source = AnalyticSource::new(|x: &[f64]| prep.eval(x), &setup.omega, a.grid)?;
    let policy = if a.strict {
        UnassignedPolicy::Error
    } else {
        UnassignedPolicy::Exclude
    };
    let asm = setup.assemble(&source, policy)?;
    let eu = asm.extend(&source, &setup.omega.bbox, a.grid, Part::Full)?;
    save_grid(&eu, &a.out)?;
    let ratio = match a.p {
        Some(p) => Some(ratio_p(&setup, &|x: &[f64]| prep.eval(x), &prep.window, p, a.grid)?),
        None => None,
    };
    print_json(&json!({
        "u": prep.label,
        "max_gen": max_gen,
        "cells": eu.len(),
        "active": eu.masked_count(),
        "ratio": ratio,
        "out": a.out,
    }))?;
    Ok(true)
}

fn split_out(out: &Path) -> OutputConfig {
    OutputConfig {
        dir: out
            .parent()
            .filter(|d| !d.as_os_str().is_empty())
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf),
        stem: out.file_stem().map(|s| s.to_string_lossy().into_owned()),
    }
}

fn finish(config: &ExperimentConfig) -> Result<bool> {
    let outcome = run(config)?;
    for c in &outcome.checks {
        eprintln!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
    }
    print_json(&json!({
        "files": outcome.files,
        "manifest": outcome.manifest_path,
        "passed": outcome.passed,
    }))?;
    Ok(outcome.passed)
}

fn sweep(a: SweepArgs, seed: Option<u64>) -> Result<bool> {
    let mut c = ExperimentConfig::new(ExperimentKind::BoundSweep);
    c.n = a.n;
    c.p = a.p;
    c.lambdas = a
        .lambdas
        .iter()
        .map(|s| Num::parse(s))
        .collect::<slitlab::Result<_>>()?;
    c.h = Num::parse(&a.grid)?;
    c.max_gen = a.max_gen;
    c.c = a.c;
    c.family = a.family;
    c.empirical = !a.no_empirical;
    if let Some(s) = seed {
        c.seed = s;
    }
    c.output = split_out(&a.out);
    finish(&c)
}

fn dim(c: DimCmd, seed: Option<u64>) -> Result<bool> {
    let DimCmd::Estimate {
        set,
        slit,
        levels,
        separation,
        probes,
        out,
    } = c;
    let net_set = match set {
        SetArg::CantorSlit => NetSet::cantor_slit(slit.lambda, slit.n)?,
        SetArg::CantorLine => NetSet::cantor_line(slit.lambda)?,
    };
    let closed_form = match set {
        SetArg::CantorSlit => dimension_of_ratio(slit.lambda, slit.n),
        SetArg::CantorLine => dimension_of_ratio(slit.lambda, 2),
    };
    let sep = match separation {
        SepArg::Single => Separation::Single,
        SepArg::Double => Separation::Double,
    };
    let h = NetHierarchy::build(net_set, slit.lambda, levels, sep, probes, seed.unwrap_or(1))?;
    let est = dim_upper_estimate(&h, &SGrid::default())?;
    if let Some(p) = out {
        write_file(&p, &serde_json::to_string_pretty(&est)?)?;
    }
    print_json(&json!({
        "s": est.s,
        "certified": est.certified,
        "levels": est.levels,
        "separation": est.separation,
        "closed_form": closed_form,
    }))?;
    Ok(est.certified)
}

fn density(a: DensityArgs, seed: Option<u64>) -> Result<bool> {
    let region = RegionSpec::slit(RegionKind::OmegaLambda, a.n, a.lambda)?;
    let x = a.point.unwrap_or_else(|| vec![0.0; a.n]);
    let comp = match a.component {
        CompArg::Upper => ComponentChoice::Upper,
        CompArg::Lower => ComponentChoice::Lower,
        CompArg::Largest => ComponentChoice::Largest,
    };
    let rep = measure_density_check(&region, &x, &a.radii, a.samples, comp, seed.unwrap_or(1))?;
    let body = serde_json::to_string_pretty(&rep)?;
    match a.out {
        Some(p) => write_file(&p, &body)?,
        None => println!("{body}"),
    }
    Ok(rep.c_fit.is_some())
}

fn run_config(a: RunArgs, seed: Option<u64>) -> Result<bool> {
    let mut c = ExperimentConfig::load(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    if let Some(s) = seed {
        c.seed = s;
    }
    if let Some(d) = a.out_dir {
        c.output.dir = d;
    }
    if let Err(e) = c.validate() {
        bail!("invalid config: {e}");
    }
    finish(&c)
}
