//! Experiment configuration, orchestration and report emission.
//!
//! A config is one TOML document. [`run`] validates it, runs the requested
//! experiment, writes CSV/JSON reports from a single writer and records a
//! manifest with versions, seeds, timing and the provenance of every row.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cantor::dimension_of_ratio;
use crate::dimension::{
    dim_upper_estimate, measure_density_check, ComponentChoice, DensityReport, DimEstimate, NetHierarchy, NetSet,
    SGrid, Separation,
};
use crate::error::{Error, Result};
use crate::extension::{
    bound_report, default_family, default_max_gen, dyadic_exponent, empirical_ratio, ratio_p, BoundReport, BoundRow,
    ExtensionSetup, Factor, FamilyReport, TestFunction,
};
use crate::regions::{RegionKind, RegionSpec};
use crate::stats::parse_fraction;
use crate::whitney::{claim_count, reflect_violations, verify_whitney, ChainGraph, ClaimCount, VerifyReport};

/// Format version of manifests and reports.
pub const REPORT_FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    BoundSweep,
    ClaimCount,
    DimEstimate,
    Density,
    WhitneyAudit,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::BoundSweep => "bound-sweep",
            ExperimentKind::ClaimCount => "claim-count",
            ExperimentKind::DimEstimate => "dim-estimate",
            ExperimentKind::Density => "density",
            ExperimentKind::WhitneyAudit => "whitney-audit",
        }
    }
}

/// A number written as `"1/8"`, `"2^-10"` or a plain decimal. The text is
/// kept so configs serialize back exactly as written.
#[derive(Debug, Clone, PartialEq)]
pub struct Num {
    text: String,
    value: f64,
}

impl Num {
    pub fn parse(s: &str) -> Result<Self> {
        let value = parse_fraction(s).ok_or_else(|| Error::invalid(format!("cannot read number {s:?}")))?;
        Ok(Self {
            text: s.trim().to_string(),
            value,
        })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

impl From<f64> for Num {
    fn from(value: f64) -> Self {
        Self {
            text: value.to_string(),
            value,
        }
    }
}

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.text)
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Int(i64),
            Float(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Text(s) => Num::parse(&s).map_err(serde::de::Error::custom),
            Raw::Int(v) => Ok(Num {
                text: v.to_string(),
                value: v as f64,
            }),
            Raw::Float(v) => Ok(Num::from(v)),
        }
    }
}

fn nums(xs: &[&str]) -> Vec<Num> {
    xs.iter().map(|s| Num::parse(s).expect("literal")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// File name stem for reports; defaults to the experiment kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stem: Option<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            stem: None,
        }
    }
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default = "d_n")]
    pub n: usize,
    #[serde(default = "d_p")]
    pub p: f64,
    #[serde(default = "d_lambdas")]
    pub lambdas: Vec<Num>,
    /// Finest Whitney generation; energy runs default to `log2(1/h) − 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_gen: Option<i32>,
    /// Grid spacing, a power of two.
    #[serde(default = "d_h")]
    pub h: Num,
    /// Constant in the upper-bound curve.
    #[serde(default = "d_c")]
    pub c: f64,
    /// Largest jump depth in the default test family.
    #[serde(default = "d_depth_max")]
    pub depth_max: usize,
    /// Test family specs; the default family when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Vec<String>>,
    /// Compute the empirical column of a sweep.
    #[serde(default = "d_true")]
    pub empirical: bool,
    #[serde(default = "d_k_max")]
    pub k_max: u32,
    /// Net levels for the dimension estimate.
    #[serde(default = "d_levels")]
    pub levels: usize,
    #[serde(default = "d_separation")]
    pub separation: Separation,
    #[serde(default = "d_probes")]
    pub probes: usize,
    #[serde(default = "d_seed")]
    pub seed: u64,
    #[serde(default = "d_samples")]
    pub samples: usize,
    #[serde(default = "d_radii")]
    pub radii: Vec<Num>,
    /// Density base point; the origin when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
    #[serde(default = "d_components")]
    pub components: Vec<ComponentChoice>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn d_n() -> usize {
    2
}
fn d_p() -> f64 {
    1.5
}
fn d_lambdas() -> Vec<Num> {
    nums(&["1/4"])
}
fn d_h() -> Num {
    Num::parse("2^-8").expect("literal")
}
fn d_c() -> f64 {
    1.0
}
fn d_depth_max() -> usize {
    3
}
fn d_true() -> bool {
    true
}
fn d_k_max() -> u32 {
    4
}
fn d_levels() -> usize {
    5
}
fn d_separation() -> Separation {
    Separation::Double
}
fn d_probes() -> usize {
    100_000
}
fn d_seed() -> u64 {
    1
}
fn d_samples() -> usize {
    1_000_000
}
fn d_radii() -> Vec<Num> {
    nums(&["1/4", "1/8", "1/16"])
}
fn d_components() -> Vec<ComponentChoice> {
    vec![ComponentChoice::Upper, ComponentChoice::Lower]
}

impl ExperimentConfig {
    /// A config of the given kind with every other field at its default.
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            n: d_n(),
            p: d_p(),
            lambdas: d_lambdas(),
            max_gen: None,
            h: d_h(),
            c: d_c(),
            depth_max: d_depth_max(),
            family: None,
            empirical: true,
            k_max: d_k_max(),
            levels: d_levels(),
            separation: d_separation(),
            probes: d_probes(),
            seed: d_seed(),
            samples: d_samples(),
            radii: d_radii(),
            point: None,
            components: d_components(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn lambda_values(&self) -> Vec<f64> {
        self.lambdas.iter().map(Num::value).collect()
    }

    fn stem(&self) -> String {
        self.output.stem.clone().unwrap_or_else(|| self.kind.name().to_string())
    }

    fn max_gen_for_energy(&self) -> Result<i32> {
        match self.max_gen {
            Some(g) => Ok(g),
            None => default_max_gen(self.h.value()),
        }
    }

    /// Check every parameter against the preconditions of the module it
    /// feeds; the first failure is returned.
    pub fn validate(&self) -> Result<()> {
        if !(2..=4).contains(&self.n) {
            return Err(Error::invalid("n must be in 2..=4"));
        }
        if self.lambdas.is_empty() {
            return Err(Error::invalid("lambdas must not be empty"));
        }
        for l in &self.lambdas {
            if !(l.value() > 0.0 && l.value() < 0.5) {
                return Err(Error::invalid("lambda must be in (0, 1/2)"));
            }
        }
        if let Some(g) = self.max_gen {
            if !(1..=14).contains(&g) {
                return Err(Error::invalid("max_gen must be in 1..=14"));
            }
        }
        match self.kind {
            ExperimentKind::BoundSweep => {
                if !(self.p >= 1.0 && self.p.is_finite()) {
                    return Err(Error::invalid("p must be at least 1"));
                }
                if !(self.c.is_finite() && self.c > 0.0) {
                    return Err(Error::invalid("c must be positive"));
                }
                if self.empirical {
                    dyadic_exponent(self.h.value())?;
                    self.max_gen_for_energy()?;
                    for spec in self.family.iter().flatten() {
                        TestFunction::parse(spec)?;
                    }
                }
            }
            ExperimentKind::ClaimCount | ExperimentKind::WhitneyAudit => {
                if self.max_gen.is_none() {
                    return Err(Error::invalid("max_gen is required"));
                }
                if self.k_max > 16 {
                    return Err(Error::invalid("k_max must be at most 16"));
                }
            }
            ExperimentKind::DimEstimate => {
                if self.levels < 3 {
                    return Err(Error::invalid("need at least three net levels"));
                }
                if self.probes == 0 {
                    return Err(Error::invalid("probes must be positive"));
                }
            }
            ExperimentKind::Density => {
                if self.samples == 0 {
                    return Err(Error::invalid("samples must be positive"));
                }
                if self.radii.is_empty() || self.radii.iter().any(|r| !(r.value() > 0.0)) {
                    return Err(Error::invalid("radii must be positive"));
                }
                if let Some(x) = &self.point {
                    if x.len() != self.n {
                        return Err(Error::DimensionMismatch {
                            expected: self.n,
                            got: x.len(),
                        });
                    }
                }
                if self.components.is_empty() {
                    return Err(Error::invalid("components must not be empty"));
                }
            }
        }
        Ok(())
    }
}

/// A named pass/fail sub-check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Where a report row came from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RowEntry {
    /// 1-based line in the file (the header is line 1).
    pub line: usize,
    pub key: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rows: Vec<RowEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub format: u32,
    pub kind: ExperimentKind,
    pub seed: u64,
    pub workers: usize,
    pub started_unix_ms: u128,
    pub elapsed_ms: f64,
    /// Wall time per stage.
    pub timings: Vec<(String, f64)>,
    pub files: Vec<FileEntry>,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub notes: Vec<String>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest_path: PathBuf,
    pub files: Vec<PathBuf>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

/// Everything an experiment produced, before it is written.
struct Output {
    files: Vec<(String, String, Vec<RowEntry>)>,
    checks: Vec<Check>,
    timings: Vec<(String, f64)>,
    notes: Vec<String>,
}

impl Output {
    fn new() -> Self {
        Self {
            files: Vec::new(),
            checks: Vec::new(),
            timings: Vec::new(),
            notes: Vec::new(),
        }
    }
}

/// Validate, run and write reports plus `<stem>.manifest.json`.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    let started_unix_ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    let t0 = Instant::now();
    let out = match config.kind {
        ExperimentKind::BoundSweep => run_sweep(config)?,
        ExperimentKind::ClaimCount => run_claims(config)?,
        ExperimentKind::DimEstimate => run_dim(config)?,
        ExperimentKind::Density => run_density(config)?,
        ExperimentKind::WhitneyAudit => run_audit(config)?,
    };
    let elapsed_ms = t0.elapsed().as_secs_f64() * 1e3;

    let dir = &config.output.dir;
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut entries = Vec::new();
    for (name, body, rows) in out.files {
        let path = dir.join(&name);
        fs::write(&path, body)?;
        entries.push(FileEntry {
            path: PathBuf::from(name),
            rows,
        });
        files.push(path);
    }
    let passed = out.checks.iter().all(|c| c.passed);
    let manifest = Manifest {
        tool: "slitlab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        format: REPORT_FORMAT,
        kind: config.kind,
        seed: config.seed,
        workers: rayon::current_num_threads(),
        started_unix_ms,
        elapsed_ms,
        timings: out.timings,
        files: entries,
        checks: out.checks.clone(),
        passed,
        notes: out.notes,
        config: config.clone(),
    };
    let manifest_path = dir.join(format!("{}.manifest.json", config.stem()));
    fs::write(&manifest_path, to_json(&manifest)?)?;
    Ok(RunOutcome {
        manifest_path,
        files,
        checks: out.checks,
        passed,
    })
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Serde(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// CSV cell for a float: shortest round-trip decimal, `inf`/`nan` spelled
/// out.
pub fn csv_num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        v.to_string()
    }
}

fn csv_opt(v: Option<f64>) -> String {
    csv_num(v.unwrap_or(f64::NAN))
}

pub const SWEEP_HEADER: &str = "lambda,dim,norm_factor,empirical_ratio,C_eff,thm11_upper";

/// The sweep table: one row per `λ`, divergent norm factors as `inf` and
/// columns that depend on them as `nan`.
pub fn sweep_csv(report: &BoundReport) -> String {
    let mut s = String::new();
    s.push_str(SWEEP_HEADER);
    s.push('\n');
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            csv_num(r.lambda),
            csv_num(r.dim),
            csv_num(r.norm_factor.value()),
            csv_opt(r.empirical_ratio),
            csv_opt(r.c_eff),
            csv_opt(r.thm11_upper)
        );
    }
    s
}

/// Closed-form and empirical rows for a sweep; `p = 1` leaves the
/// closed-form columns undefined.
pub fn bound_sweep(config: &ExperimentConfig) -> Result<(BoundReport, Vec<(f64, FamilyReport)>)> {
    let n = config.n;
    let p = config.p;
    let h = config.h.value();
    let lambdas = config.lambda_values();
    let family: Vec<TestFunction> = match &config.family {
        Some(specs) => specs.iter().map(|s| TestFunction::parse(s)).collect::<Result<_>>()?,
        None => default_family(n, config.depth_max),
    };
    let details = std::sync::Mutex::new(Vec::new());
    let empirical = |lambda: f64| -> Result<f64> {
        let setup = ExtensionSetup::new(n, lambda, config.max_gen_for_energy()?)?;
        let rep = empirical_ratio(&setup, &family, p, h)?;
        let sup = rep.sup;
        details.lock().expect("poisoned").push((lambda, rep));
        Ok(sup)
    };
    let report = if p > 1.0 {
        let f: &(dyn Fn(f64) -> Result<f64> + Sync) = &empirical;
        bound_report(n, p, &lambdas, config.c, config.empirical.then_some(f))?
    } else {
        let rows = lambdas
            .par_iter()
            .map(|&lambda| {
                Ok(BoundRow {
                    lambda,
                    dim: dimension_of_ratio(lambda, n),
                    norm_factor: Factor::Finite(f64::NAN),
                    empirical_ratio: config.empirical.then(|| empirical(lambda)).transpose()?,
                    c_eff: None,
                    thm11_upper: None,
                    thm11_improved: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        BoundReport {
            n,
            p,
            c: config.c,
            rows,
        }
    };
    let mut details = details.into_inner().expect("poisoned");
    details.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok((report, details))
}

fn run_sweep(config: &ExperimentConfig) -> Result<Output> {
    let mut out = Output::new();
    let t = Instant::now();
    let (report, details) = bound_sweep(config)?;
    out.timings.push(("sweep".into(), t.elapsed().as_secs_f64()));
    let n = config.n as f64;
    let stem = config.stem();
    let csv_name = format!("{stem}.csv");
    let mut rows = Vec::new();
    for (k, r) in report.rows.iter().enumerate() {
        rows.push(RowEntry {
            line: k + 2,
            key: format!("lambda={}", config.lambdas[k].text()),
        });
        let gap = n - config.p - r.dim;
        if config.p > 1.0 {
            let divergent = matches!(r.norm_factor, Factor::Divergent);
            out.checks.push(Check::new(
                format!("norm factor regime, lambda={}", config.lambdas[k].text()),
                divergent == (gap <= 0.0),
                format!("n - p - dim = {gap}, norm_factor = {}", csv_num(r.norm_factor.value())),
            ));
        }
        if let Some(e) = r.empirical_ratio {
            out.checks.push(Check::new(
                format!("empirical ratio finite, lambda={}", config.lambdas[k].text()),
                e.is_finite() && e > 0.0,
                format!("sup = {e}"),
            ));
        }
    }
    if config.p <= 1.0 {
        out.notes
            .push("p = 1: the norm factor is undefined; only empirical ratios are reported".into());
    }
    out.files.push((csv_name, sweep_csv(&report), rows));
    #[derive(Serialize)]
    struct Detail<'a> {
        report: &'a BoundReport,
        family: Vec<(f64, &'a FamilyReport)>,
    }
    let detail = Detail {
        report: &report,
        family: details.iter().map(|(l, r)| (*l, r)).collect(),
    };
    out.files.push((format!("{stem}.json"), to_json(&detail)?, Vec::new()));
    Ok(out)
}

/// The per-`k` growth bound `c_k ≤ c_0·2^{k/2}`.
pub fn growth_bound_holds(counts: &ClaimCount) -> (bool, Option<u32>) {
    let c0 = counts.counts.first().map_or(0, |c| c.1) as f64;
    let first_bad = counts
        .counts
        .iter()
        .find(|&&(k, c)| c as f64 > c0 * 2f64.powf(k as f64 / 2.0) + 1e-9)
        .map(|c| c.0);
    (first_bad.is_none(), first_bad)
}

fn run_claims(config: &ExperimentConfig) -> Result<Output> {
    let mut out = Output::new();
    let max_gen = config.max_gen.expect("validated");
    let mut csv = String::from("lambda,k,max_count,fitted_exponent\n");
    let mut rows = Vec::new();
    let mut all = Vec::new();
    for l in &config.lambdas {
        let t = Instant::now();
        let setup = ExtensionSetup::new(config.n, l.value(), max_gen)?;
        let graph = ChainGraph::new(&setup.wt)?;
        let counts = claim_count(&setup.w, &setup.map, &graph, config.k_max)?;
        out.timings
            .push((format!("claim-count lambda={}", l.text()), t.elapsed().as_secs_f64()));
        for &(k, c) in &counts.counts {
            let _ = writeln!(csv, "{},{k},{c},{}", csv_num(l.value()), csv_num(counts.exponent));
            rows.push(RowEntry {
                line: rows.len() + 2,
                key: format!("lambda={},k={k}", l.text()),
            });
        }
        let (ok, bad) = growth_bound_holds(&counts);
        out.checks.push(Check::new(
            format!("growth bound, lambda={}", l.text()),
            ok,
            match bad {
                None => "c_k <= c_0 * 2^(k/2) for every k".to_string(),
                Some(k) => format!("first violation at k={k}: counts {:?}", counts.counts),
            },
        ));
        let expected = dimension_of_ratio(l.value(), config.n);
        out.checks.push(Check::new(
            format!("fitted exponent, lambda={}", l.text()),
            (counts.exponent - expected).abs() <= 0.15,
            format!("exponent {} vs dim {expected}", counts.exponent),
        ));
        all.push((l.value(), counts));
    }
    let stem = config.stem();
    out.files.push((format!("{stem}.csv"), csv, rows));
    out.files.push((format!("{stem}.json"), to_json(&all)?, Vec::new()));
    Ok(out)
}

fn run_dim(config: &ExperimentConfig) -> Result<Output> {
    let mut out = Output::new();
    let mut csv = String::from("lambda,levels,separation,s,certified,closed_form\n");
    let mut rows = Vec::new();
    let mut certs: Vec<(f64, DimEstimate)> = Vec::new();
    for l in &config.lambdas {
        let t = Instant::now();
        let set = NetSet::cantor_slit(l.value(), config.n)?;
        let h = NetHierarchy::build(
            set,
            l.value(),
            config.levels,
            config.separation,
            config.probes,
            config.seed,
        )?;
        let est = dim_upper_estimate(&h, &SGrid::default())?;
        out.timings
            .push((format!("dim-estimate lambda={}", l.text()), t.elapsed().as_secs_f64()));
        let expected = dimension_of_ratio(l.value(), config.n);
        let sep = match est.separation {
            Separation::Single => "single",
            Separation::Double => "double",
        };
        let _ = writeln!(
            csv,
            "{},{},{sep},{},{},{}",
            csv_num(l.value()),
            est.levels,
            csv_num(est.s),
            est.certified,
            csv_num(expected)
        );
        rows.push(RowEntry {
            line: rows.len() + 2,
            key: format!("lambda={}", l.text()),
        });
        out.checks.push(Check::new(
            format!("dimension estimate, lambda={}", l.text()),
            est.certified && (est.s - expected).abs() <= 0.05,
            format!("s = {} (certified: {}), closed form {expected}", est.s, est.certified),
        ));
        certs.push((l.value(), est));
    }
    let stem = config.stem();
    out.files.push((format!("{stem}.csv"), csv, rows));
    out.files
        .push((format!("{stem}.cert.json"), to_json(&certs)?, Vec::new()));
    Ok(out)
}

fn run_density(config: &ExperimentConfig) -> Result<Output> {
    let mut out = Output::new();
    let radii: Vec<f64> = config.radii.iter().map(Num::value).collect();
    let point = config.point.clone().unwrap_or_else(|| vec![0.0; config.n]);
    let mut csv = String::from("lambda,component,r,c,half_width\n");
    let mut rows = Vec::new();
    let mut reports: Vec<(f64, DensityReport)> = Vec::new();
    for l in &config.lambdas {
        let region = RegionSpec::slit(RegionKind::OmegaLambda, config.n, l.value())?;
        for &comp in &config.components {
            let t = Instant::now();
            let rep = measure_density_check(&region, &point, &radii, config.samples, comp, config.seed)?;
            let cname = component_name(comp);
            out.timings.push((
                format!("density lambda={} {cname}", l.text()),
                t.elapsed().as_secs_f64(),
            ));
            for (ri, r) in rep.per_radius.iter().enumerate() {
                let _ = writeln!(
                    csv,
                    "{},{cname},{},{},{}",
                    csv_num(l.value()),
                    csv_num(r.r),
                    csv_opt(r.c),
                    csv_num(r.half_width)
                );
                rows.push(RowEntry {
                    line: rows.len() + 2,
                    key: format!("lambda={},component={cname},r={}", l.text(), config.radii[ri].text()),
                });
            }
            out.checks.push(Check::new(
                format!("density lower bound, lambda={} {cname}", l.text()),
                rep.c_fit.is_some_and(|c| c >= 0.05),
                format!("c_fit = {}", csv_opt(rep.c_fit)),
            ));
            reports.push((l.value(), rep));
        }
    }
    let stem = config.stem();
    out.files.push((format!("{stem}.csv"), csv, rows));
    out.files.push((format!("{stem}.json"), to_json(&reports)?, Vec::new()));
    Ok(out)
}

fn component_name(c: ComponentChoice) -> &'static str {
    match c {
        ComponentChoice::Upper => "upper",
        ComponentChoice::Lower => "lower",
        ComponentChoice::Largest => "largest",
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditRow {
    pub lambda: f64,
    pub interior: VerifyReport,
    pub complement: VerifyReport,
    pub reflect_violations: usize,
    pub unassigned_fraction: f64,
}

fn run_audit(config: &ExperimentConfig) -> Result<Output> {
    let mut out = Output::new();
    let max_gen = config.max_gen.expect("validated");
    let mut csv = String::from(
        "lambda,interior_resolved,interior_violations,complement_resolved,complement_violations,reflect_violations,unassigned_fraction\n",
    );
    let mut rows = Vec::new();
    let mut audit = Vec::new();
    for l in &config.lambdas {
        let t = Instant::now();
        let setup = ExtensionSetup::new(config.n, l.value(), max_gen)?;
        let (interior, complement) = rayon::join(|| verify_whitney(&setup.w), || verify_whitney(&setup.wt));
        let row = AuditRow {
            lambda: l.value(),
            reflect_violations: reflect_violations(&setup.w, &setup.wt, &setup.map),
            unassigned_fraction: setup.map.unassigned_fraction(&setup.w),
            interior,
            complement,
        };
        out.timings
            .push((format!("whitney-audit lambda={}", l.text()), t.elapsed().as_secs_f64()));
        let violations = |v: &VerifyReport| v.w1 + v.w2 + v.w3 + v.w4 + v.slab_faces;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            csv_num(row.lambda),
            row.interior.resolved,
            violations(&row.interior),
            row.complement.resolved,
            violations(&row.complement),
            row.reflect_violations,
            csv_num(row.unassigned_fraction)
        );
        rows.push(RowEntry {
            line: rows.len() + 2,
            key: format!("lambda={}", l.text()),
        });
        out.checks.push(Check::new(
            format!("whitney conditions, lambda={}", l.text()),
            row.interior.clean() && row.complement.clean(),
            format!("{:?} / {:?}", row.interior, row.complement),
        ));
        out.checks.push(Check::new(
            format!("reflect map, lambda={}", l.text()),
            row.reflect_violations == 0 && row.unassigned_fraction <= 0.05,
            format!(
                "{} violations, unassigned fraction {}",
                row.reflect_violations, row.unassigned_fraction
            ),
        ));
        audit.push(row);
    }
    let stem = config.stem();
    out.files.push((format!("{stem}.csv"), csv, rows));
    out.files.push((format!("{stem}.json"), to_json(&audit)?, Vec::new()));
    Ok(out)
}

/// Empirical `ratio_p` for a single test function spec, outside a sweep.
pub fn single_ratio(setup: &ExtensionSetup, spec: &TestFunction, p: f64, h: f64) -> Result<f64> {
    let prep = spec.prepare(&setup.omega, h)?;
    Ok(ratio_p(setup, &|x: &[f64]| prep.eval(x), &prep.window, p, h)?.ratio)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_keep_their_text() {
        let n = Num::parse(" 1/8 ").unwrap();
        assert_eq!((n.text(), n.value()), ("1/8", 0.125));
        assert_eq!(Num::parse("2^-10").unwrap().value(), 1.0 / 1024.0);
        assert!(Num::parse("one").is_err());
    }

    #[test]
    fn config_round_trips() {
        let text = r#"
kind = "bound-sweep"
lambdas = ["1/8", 0.0625, "2^-5"]
h = "2^-9"
max_gen = 8
family = ["coord:1", "jump:depth=1"]

[output]
dir = "reports"
"#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(c.lambda_values(), vec![0.125, 0.0625, 0.03125]);
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        let d = ExperimentConfig::new(ExperimentKind::Density);
        assert_eq!(ExperimentConfig::from_toml(&d.to_toml().unwrap()).unwrap(), d);
    }

    #[test]
    fn validation_names_the_failure() {
        let mut c = ExperimentConfig::new(ExperimentKind::BoundSweep);
        c.lambdas = vec![Num::from(0.6)];
        let e = c.validate().unwrap_err().to_string();
        assert!(e.contains("lambda must be in (0, 1/2)"), "{e}");
        assert!(ExperimentConfig::from_toml("kind = \"bound-sweep\"\nbogus = 1\n").is_err());
        let c = ExperimentConfig::new(ExperimentKind::ClaimCount);
        assert!(c.validate().unwrap_err().to_string().contains("max_gen"));
    }

    #[test]
    fn growth_bound_flags_the_first_excess() {
        let c = ClaimCount {
            counts: vec![(0, 2), (1, 2), (2, 4), (3, 6)],
            exponent: 0.5,
            sources: 10,
            skipped: 0,
        };
        assert_eq!(growth_bound_holds(&c), (false, Some(3)));
    }

    #[test]
    fn csv_numbers() {
        assert_eq!(csv_num(f64::INFINITY), "inf");
        assert_eq!(csv_num(f64::NAN), "nan");
        assert_eq!(csv_num(0.125), "0.125");
    }
}
