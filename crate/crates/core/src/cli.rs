//! Run configuration, the five batch subcommands and their artifacts.
//!
//! Every subcommand writes CSV files plus `manifest.toml` into the output
//! directory. The manifest echoes the full configuration and the crate
//! version; CSV content depends only on the configuration.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coeffs::{coefficient_bound_check, tree_coefficient_exact, tree_coefficient_quadrature, write_cache_line, PhasedTree};
use crate::error::{Error, Result};
use crate::indexsets::{classify_frozen, divisor_count, enumerate_assignments, weathered_partition, FrozenLabel, FrozenParams};
use crate::modes::{random_datum, ModeSequence, SpaceParams};
use crate::refsolve::{compare_solutions, integrate_on, GalerkinSystem};
use crate::scalar::{fmt_real, Omega};
use crate::series::{nonlinearity_limit, residual_profile, smoothing_gap, solve_series, SeriesOptions};
use crate::treeops::{eval_l1_operator, LeafInputs, DEFAULT_TUPLE_BUDGET};
use crate::trees::{enumerate_ornamented, enumerate_shapes, fuss_catalan, read_cache, write_cache, EnumLimits, NodeKind, OrnamentedTree};

pub const CACHE_ENV: &str = "NLSTREE_CACHE_DIR";
pub const OUT_ENV: &str = "NLSTREE_OUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subcommand {
    Enumerate,
    Coeffs,
    Solve,
    Compare,
    Diagnose,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Enumerate => "enumerate",
            Subcommand::Coeffs => "coeffs",
            Subcommand::Solve => "solve",
            Subcommand::Compare => "compare",
            Subcommand::Diagnose => "diagnose",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// `+1` focusing or `−1` defocusing sign.
    pub omega: i64,
    pub seed: u64,
    /// Worker threads; `0` uses the available parallelism.
    pub workers: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            omega: 1,
            seed: 1,
            workers: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatumKind {
    Zero,
    Single,
    Random,
    File,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatumSection {
    pub kind: DatumKind,
    /// Support `[−radius, radius]` of a random datum.
    pub radius: u64,
    pub decay: f64,
    pub scale: f64,
    /// Rescales a random datum to this `ℓ¹` norm when set.
    pub l1_norm: Option<f64>,
    /// Mode and `[re, im]` amplitude of a single-mode datum.
    pub mode: i64,
    pub amplitude: [f64; 2],
    /// `n,re,im` CSV for `kind = "file"`.
    pub path: Option<PathBuf>,
}

impl Default for DatumSection {
    fn default() -> Self {
        Self {
            kind: DatumKind::Random,
            radius: 2,
            decay: 0.0,
            scale: 0.04,
            l1_norm: None,
            mode: 0,
            amplitude: [0.5, 0.0],
            path: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpaceSection {
    pub s: f64,
    pub p: f64,
    pub q: f64,
}

impl Default for SpaceSection {
    fn default() -> Self {
        Self { s: 0.0, p: 4.0, q: 2.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeriesSection {
    /// Highest Picard degree index `K`.
    pub max_degree: usize,
    pub tau: f64,
    pub grid_points: usize,
    pub threshold: f64,
    pub term_cap: usize,
    /// Residuals are reported over `|n| ≤ check_cutoff`.
    pub check_cutoff: u64,
}

impl Default for SeriesSection {
    fn default() -> Self {
        Self {
            max_degree: 5,
            tau: 0.5,
            grid_points: 6,
            threshold: 0.2,
            term_cap: crate::coeffs::DEFAULT_TERM_CAP,
            check_cutoff: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeSection {
    /// Trees with `0..=max_k` internal nodes are enumerated.
    pub max_k: usize,
    pub max_internal: usize,
    pub max_trees: u64,
    pub tuple_budget: u64,
}

impl Default for TreeSection {
    fn default() -> Self {
        Self {
            max_k: 2,
            max_internal: 6,
            max_trees: 1_000_000,
            tuple_budget: DEFAULT_TUPLE_BUDGET as u64,
        }
    }
}

impl TreeSection {
    fn limits(&self) -> EnumLimits {
        EnumLimits {
            max_internal: self.max_internal,
            max_trees: self.max_trees as u128,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoeffSection {
    pub times: Vec<f64>,
    pub samples: usize,
    /// Leaf indices of sampled assignments lie in `[−cutoff, cutoff]`.
    pub cutoff: u64,
    pub assignments_per_tree: usize,
    pub eps_cap: u64,
}

impl Default for CoeffSection {
    fn default() -> Self {
        Self {
            times: vec![0.3, 1.0],
            samples: 20_000,
            cutoff: 3,
            assignments_per_tree: 4,
            eps_cap: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrozenSection {
    pub c0: f64,
    pub delta: f64,
    /// Leaf cutoff of the partition diagnostic.
    pub cutoff: u64,
}

impl Default for FrozenSection {
    fn default() -> Self {
        Self {
            c0: 0.25,
            delta: 0.1,
            cutoff: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    /// Galerkin cutoff; `0` picks `(2K+1)·radius`.
    pub cutoff: u64,
    pub dt: f64,
    pub gauged: bool,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            cutoff: 0,
            dt: 1e-3,
            gauged: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseSection {
    pub nl_cutoffs: Vec<u64>,
    pub smoothing_t_min: f64,
    pub smoothing_t_max: f64,
    pub smoothing_points: usize,
    pub slope_min: f64,
    pub divisor_max: u64,
    pub l1_tolerance: f64,
}

impl Default for DiagnoseSection {
    fn default() -> Self {
        Self {
            nl_cutoffs: vec![2, 4, 8],
            smoothing_t_min: 1e-3,
            smoothing_t_max: 1e-1,
            smoothing_points: 5,
            slope_min: 0.9,
            divisor_max: 1000,
            l1_tolerance: 1e-12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSection {
    pub cache_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for PathSection {
    fn default() -> Self {
        Self {
            cache_dir: PathBuf::from("cache"),
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Full configuration of one run, one TOML section per module.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub datum: DatumSection,
    pub space: SpaceSection,
    pub series: SeriesSection,
    pub trees: TreeSection,
    pub coeffs: CoeffSection,
    pub frozen: FrozenSection,
    pub oracle: OracleSection,
    pub diagnose: DiagnoseSection,
    pub paths: PathSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn omega(&self) -> Result<Omega> {
        Omega::from_int(self.run.omega).ok_or_else(|| Error::invalid(format!("omega = {} must be 1 or -1", self.run.omega)))
    }

    pub fn validate(&self) -> Result<()> {
        self.omega()?;
        SpaceParams::new(self.space.s, self.space.p)?;
        SpaceParams::lp(self.space.q)?;
        if self.space.q < 1.0 {
            return Err(Error::invalid("q must be >= 1"));
        }
        FrozenParams::new(self.frozen.c0, self.frozen.delta)?;
        let s = &self.series;
        if !(s.tau >= 0.0 && s.tau.is_finite()) {
            return Err(Error::invalid("tau must be finite and nonnegative"));
        }
        if s.grid_points < 2 {
            return Err(Error::invalid("grid_points must be >= 2"));
        }
        if s.threshold.is_nan() || s.threshold <= 0.0 {
            return Err(Error::invalid("threshold must be positive"));
        }
        let d = &self.datum;
        if !(d.scale >= 0.0 && d.decay >= 0.0) {
            return Err(Error::invalid("datum scale and decay must be nonnegative"));
        }
        if let Some(n) = d.l1_norm {
            if !(n >= 0.0 && n.is_finite()) {
                return Err(Error::invalid("datum l1_norm must be finite and nonnegative"));
            }
        }
        if d.kind == DatumKind::File && d.path.is_none() {
            return Err(Error::invalid("datum kind \"file\" needs a path"));
        }
        if self.oracle.dt.is_nan() || self.oracle.dt <= 0.0 {
            return Err(Error::invalid("oracle dt must be positive"));
        }
        let c = &self.coeffs;
        if c.times.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::invalid("coefficient times must lie in [0, 1]"));
        }
        if c.samples < 1000 {
            return Err(Error::invalid("coeffs samples must be >= 1000"));
        }
        let g = &self.diagnose;
        if g.nl_cutoffs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("nl_cutoffs must be strictly increasing"));
        }
        if !(0.0 < g.smoothing_t_min && g.smoothing_t_min < g.smoothing_t_max) || g.smoothing_points < 2 {
            return Err(Error::invalid("smoothing range needs 0 < t_min < t_max and >= 2 points"));
        }
        if g.divisor_max == 0 {
            return Err(Error::invalid("divisor_max must be >= 1"));
        }
        Ok(())
    }

    pub fn datum(&self) -> Result<ModeSequence<f64>> {
        let d = &self.datum;
        Ok(match d.kind {
            DatumKind::Zero => ModeSequence::zero(),
            DatumKind::Single => ModeSequence::single(d.mode, Complex::new(d.amplitude[0], d.amplitude[1])),
            DatumKind::Random => {
                let x = random_datum::<f64>(d.radius, d.decay, d.scale, self.run.seed);
                match d.l1_norm {
                    Some(target) if x.norm_l1() > 0.0 => x.scaled(Complex::new(target / x.norm_l1(), 0.0)),
                    _ => x,
                }
            }
            DatumKind::File => {
                let path = d.path.as_ref().expect("validated");
                ModeSequence::read_csv(fs::File::open(path)?)?
            }
        })
    }

    /// `0, τ/(g−1), …, τ`.
    pub fn time_grid(&self) -> Vec<f64> {
        let g = self.series.grid_points;
        (0..g).map(|i| self.series.tau * i as f64 / (g - 1) as f64).collect()
    }

    pub fn series_options(&self) -> SeriesOptions {
        SeriesOptions {
            max_degree: self.series.max_degree,
            threshold: self.series.threshold,
            term_cap: self.series.term_cap,
        }
    }

    pub fn oracle_cutoff(&self, datum: &ModeSequence<f64>) -> u64 {
        if self.oracle.cutoff > 0 {
            self.oracle.cutoff
        } else {
            let r = datum.radius().unwrap_or(0).unsigned_abs();
            (2 * self.series.max_degree as u64 + 1) * r
        }
    }
}

/// Directory overrides: command line first, then environment.
#[derive(Clone, Debug, Default)]
pub struct DirOverrides {
    pub out: Option<PathBuf>,
    pub cache: Option<PathBuf>,
}

impl DirOverrides {
    pub fn with_env(mut self) -> Self {
        if self.out.is_none() {
            self.out = std::env::var_os(OUT_ENV).map(PathBuf::from);
        }
        if self.cache.is_none() {
            self.cache = std::env::var_os(CACHE_ENV).map(PathBuf::from);
        }
        self
    }

    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(p) = &self.out {
            cfg.paths.out_dir = p.clone();
        }
        if let Some(p) = &self.cache {
            cfg.paths.cache_dir = p.clone();
        }
    }
}

/// One named pass/fail line of `diagnose`.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    /// CSV files written, relative to the output directory.
    pub files: Vec<String>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl Outcome {
    /// `0`, or `3` when a diagnose check failed.
    pub fn exit_code(&self) -> i32 {
        if self.checks.iter().all(|c| c.pass) {
            0
        } else {
            3
        }
    }
}

/// Exit status for an error: `2` for caps and budgets, `1` otherwise.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Cap { .. } => 2,
        _ => 1,
    }
}

/// Structured `key = value` error report.
pub fn error_report(e: &Error) -> String {
    let kind = match e {
        Error::Validation(_) => "validation",
        Error::Cap { .. } => "cap",
        Error::Parse { .. } => "parse",
        Error::Io(_) => "io",
        Error::Csv(_) => "csv",
    };
    let msg = toml::Value::String(e.to_string());
    format!("status = \"error\"\nkind = \"{kind}\"\nexit_code = {}\nmessage = {msg}\n", error_exit_code(e))
}

/// Runs one subcommand with an already validated configuration.
pub fn run(cmd: Subcommand, cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.workers)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let out = &cfg.paths.out_dir;
    fs::create_dir_all(out)?;
    let mut outcome = pool.install(|| match cmd {
        Subcommand::Enumerate => cmd_enumerate(cfg),
        Subcommand::Coeffs => cmd_coeffs(cfg),
        Subcommand::Solve => cmd_solve(cfg),
        Subcommand::Compare => cmd_compare(cfg),
        Subcommand::Diagnose => cmd_diagnose(cfg),
    })?;
    if !outcome.checks.is_empty() {
        let mut w = csv_writer(out, "checks.csv", &mut outcome.files)?;
        w.write_record(["check", "value", "threshold", "pass"])?;
        for c in &outcome.checks {
            w.write_record([c.name.to_string(), fmt_real(c.value), fmt_real(c.threshold), c.pass.to_string()])?;
        }
        w.flush()?;
    }
    write_manifest(cmd, cfg, &outcome)?;
    Ok(outcome)
}

fn csv_writer(dir: &Path, name: &str, files: &mut Vec<String>) -> Result<csv::Writer<fs::File>> {
    files.push(name.to_string());
    Ok(csv::Writer::from_path(dir.join(name))?)
}

#[derive(Serialize)]
struct ManifestFile {
    name: String,
    sha256: String,
}

#[derive(Serialize)]
struct ManifestHeader<'a> {
    subcommand: &'a str,
    version: &'a str,
    exit_code: i32,
    warnings: &'a [String],
    files: Vec<ManifestFile>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    manifest: ManifestHeader<'a>,
    config: &'a RunConfig,
}

fn write_manifest(cmd: Subcommand, cfg: &RunConfig, outcome: &Outcome) -> Result<()> {
    let dir = &cfg.paths.out_dir;
    let files = outcome
        .files
        .iter()
        .map(|name| -> Result<ManifestFile> {
            let bytes = fs::read(dir.join(name))?;
            let digest = Sha256::digest(&bytes);
            Ok(ManifestFile {
                name: name.clone(),
                sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
            })
        })
        .collect::<Result<_>>()?;
    let m = Manifest {
        manifest: ManifestHeader {
            subcommand: cmd.name(),
            version: env!("CARGO_PKG_VERSION"),
            exit_code: outcome.exit_code(),
            warnings: &outcome.warnings,
            files,
        },
        config: cfg,
    };
    let text = toml::to_string(&m).map_err(|e| Error::invalid(format!("manifest: {e}")))?;
    fs::write(dir.join("manifest.toml"), text)?;
    Ok(())
}

/// Ornamented trees (kinds only) with `k` internal nodes, from the cache
/// when present.
fn cached_trees(cfg: &RunConfig, k: usize) -> Result<Vec<OrnamentedTree>> {
    let dir = &cfg.paths.cache_dir;
    if let Ok(trees) = read_cache(dir, k) {
        let expected = fuss_catalan(k as u64) << k;
        if trees.len() as u128 == expected {
            return Ok(trees);
        }
    }
    let trees = enumerate_ornamented(k, false, false, cfg.trees.limits())?;
    write_cache(dir, k, &trees)?;
    Ok(trees)
}

fn cmd_enumerate(cfg: &RunConfig) -> Result<Outcome> {
    let out = &cfg.paths.out_dir;
    let mut o = Outcome::default();
    let mut rows = Vec::new();
    for k in 0..=cfg.trees.max_k {
        let shapes = enumerate_shapes(k, cfg.trees.limits())?;
        let trees = enumerate_ornamented(k, false, false, cfg.trees.limits())?;
        write_cache(&cfg.paths.cache_dir, k, &trees)?;
        write_cache(out, k, &trees)?;
        o.files.push(format!("trees_k{k}.txt"));
        let leaves_ok = shapes.iter().all(|t| t.leaf_count() == 2 * k + 1);
        rows.push([
            k.to_string(),
            shapes.len().to_string(),
            fuss_catalan(k as u64).to_string(),
            trees.len().to_string(),
            leaves_ok.to_string(),
        ]);
    }
    let mut w = csv_writer(out, "tree_counts.csv", &mut o.files)?;
    w.write_record(["k", "shapes", "fuss_catalan", "ornamented", "leaf_count_ok"])?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(o)
}

fn cmd_coeffs(cfg: &RunConfig) -> Result<Outcome> {
    let out = &cfg.paths.out_dir;
    let omega = cfg.omega()?;
    let c = &cfg.coeffs;
    let mut o = Outcome::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let mut w = csv_writer(out, "coefficients.csv", &mut o.files)?;
    w.write_record([
        "tree",
        "assignment",
        "t",
        "exact_re",
        "exact_im",
        "mc_re",
        "mc_im",
        "std_error",
        "z_score",
        "bound_lhs",
        "bound_a",
        "bound_b",
        "bound_pass",
    ])?;
    fs::create_dir_all(&cfg.paths.cache_dir)?;
    let mut cache = Vec::new();
    let mut sample_id = 0u64;
    for k in 0..=cfg.trees.max_k {
        for tree in cached_trees(cfg, k)? {
            let all = enumerate_assignments(&tree, c.cutoff, cfg.trees.tuple_budget as u128)?;
            let picked: Vec<_> = all.choose_multiple(&mut rng, c.assignments_per_tree).cloned().collect();
            for a in &picked {
                let pt = PhasedTree {
                    tree: &tree,
                    assignment: a,
                    omega,
                };
                for &t in &c.times {
                    let (exact, _) = tree_coefficient_exact::<f64>(&pt, t);
                    let mc = tree_coefficient_quadrature::<f64>(&pt, t, c.samples, cfg.run.seed.wrapping_add(sample_id))?;
                    sample_id += 1;
                    let z = if mc.std_error > 0.0 { (mc.value - exact).norm() / mc.std_error } else { 0.0 };
                    let b = coefficient_bound_check::<f64>(&pt, t, c.eps_cap as u128)?;
                    w.write_record([
                        tree.serialize(),
                        format!("{:?}", a.values()),
                        fmt_real(t),
                        fmt_real(exact.re),
                        fmt_real(exact.im),
                        fmt_real(mc.value.re),
                        fmt_real(mc.value.im),
                        fmt_real(mc.std_error),
                        fmt_real(z),
                        fmt_real(b.lhs),
                        fmt_real(b.bound_a),
                        fmt_real(b.bound_b),
                        b.pass.to_string(),
                    ])?;
                    write_cache_line(&mut cache, &pt, t, exact)?;
                }
            }
        }
    }
    w.flush()?;
    fs::write(cfg.paths.cache_dir.join("coefficients_cache.txt"), cache)?;
    Ok(o)
}

fn cmd_solve(cfg: &RunConfig) -> Result<Outcome> {
    let out = &cfg.paths.out_dir;
    let omega = cfg.omega()?;
    let datum = cfg.datum()?;
    let times = cfg.time_grid();
    let sol = solve_series(&datum, &times, omega, cfg.series_options())?;
    let mut o = Outcome::default();
    if sol.diverging {
        o.warnings.push("component norms are not decaying; tail estimate is unreliable".into());
    }
    o.files.push("solution.csv".into());
    sol.write_csv(fs::File::create(out.join("solution.csv"))?)?;
    let mut w = csv_writer(out, "residuals.csv", &mut o.files)?;
    w.write_record(["t", "residual", "remainder_bound", "degree_tail_estimate", "decay_ratio", "l1_norm", "mass_deviation"])?;
    let residuals = residual_profile(&sol, &times, cfg.series.check_cutoff)?;
    for (i, (&t, r)) in times.iter().zip(&residuals).enumerate() {
        let a = sol.at(i);
        w.write_record([
            fmt_real(t),
            fmt_real(r.value),
            fmt_real(r.remainder_bound),
            fmt_real(sol.tail_estimate[i]),
            fmt_real(sol.decay_ratio[i]),
            fmt_real(a.norm_l1()),
            fmt_real((a.mass() - datum.mass()).abs()),
        ])?;
    }
    w.flush()?;
    Ok(o)
}

fn cmd_compare(cfg: &RunConfig) -> Result<Outcome> {
    let out = &cfg.paths.out_dir;
    let omega = cfg.omega()?;
    let datum = cfg.datum()?;
    let times = cfg.time_grid();
    let sol = solve_series(&datum, &times, omega, cfg.series_options())?;
    let sys = GalerkinSystem::new(cfg.oracle_cutoff(&datum), omega, cfg.oracle.gauged, true);
    let cmp = compare_solutions(&sol, &sys, cfg.oracle.dt)?;
    let mut o = Outcome::default();
    if cmp.cutoff_warning {
        o.warnings.push(format!("Galerkin cutoff {} clips modes generated by the series", sys.cutoff));
    }
    let traj = integrate_on(&sys, &datum, &times, cfg.oracle.dt)?;
    o.files.push("oracle.csv".into());
    traj.write_csv(fs::File::create(out.join("oracle.csv"))?)?;
    let mut w = csv_writer(out, "compare.csv", &mut o.files)?;
    w.write_record(["t", "sup_difference", "degree_tail_estimate"])?;
    for (i, (t, d)) in cmp.times.iter().zip(&cmp.sup_difference).enumerate() {
        w.write_record([fmt_real(*t), fmt_real(*d), fmt_real(sol.tail_estimate[i])])?;
    }
    w.flush()?;
    let mut w = csv_writer(out, "compare_summary.csv", &mut o.files)?;
    w.write_record(["galerkin_cutoff", "dt", "gauged", "max_sup_difference"])?;
    w.write_record([sys.cutoff.to_string(), fmt_real(cfg.oracle.dt), sys.gauged.to_string(), fmt_real(cmp.max())])?;
    w.flush()?;
    Ok(o)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Log-spaced times in `[t_min, t_max]`.
pub fn log_grid(t_min: f64, t_max: f64, points: usize) -> Vec<f64> {
    let (a, b) = (t_min.ln(), t_max.ln());
    (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

fn cmd_diagnose(cfg: &RunConfig) -> Result<Outcome> {
    let out = &cfg.paths.out_dir;
    let omega = cfg.omega()?;
    let datum = cfg.datum()?;
    let fp = FrozenParams::new(cfg.frozen.c0, cfg.frozen.delta)?;
    let budget = cfg.trees.tuple_budget as u128;
    let g = &cfg.diagnose;
    let mut o = Outcome::default();

    // frozen partition
    let mut w = csv_writer(out, "frozen_partition.csv", &mut o.files)?;
    w.write_record(["tree", "frozen_set", "size"])?;
    let mut partition_ok = true;
    let mut simple_rule_ok = true;
    for k in 0..=cfg.trees.max_k {
        for tree in cached_trees(cfg, k)? {
            let all = enumerate_assignments(&tree, cfg.frozen.cutoff, budget)?;
            let fibers = weathered_partition(&tree, cfg.frozen.cutoff, fp, budget)?;
            let mut seen = BTreeSet::new();
            let mut total = 0usize;
            for (set, members) in &fibers {
                total += members.len();
                for a in members {
                    partition_ok &= seen.insert(a.values().to_vec());
                }
                w.write_record([tree.serialize(), format!("{set:?}"), members.len().to_string()])?;
            }
            partition_ok &= total == all.len() && all.iter().all(|a| seen.contains(a.values()));
            let t = tree.tree();
            for a in &all {
                let labels = classify_frozen(&tree, a, fp);
                for v in t.internal_nodes() {
                    let terminal_children = t.children(v).expect("internal").iter().all(|&c| t.is_leaf(c));
                    if tree.kind(v) == Some(NodeKind::Simple) && terminal_children {
                        simple_rule_ok &= labels[v] != Some(FrozenLabel::Alive);
                    }
                }
            }
        }
    }
    w.flush()?;
    o.checks.push(Check {
        name: "frozen_partition_disjoint_exhaustive",
        value: partition_ok as u8 as f64,
        threshold: 1.0,
        pass: partition_ok,
    });
    o.checks.push(Check {
        name: "simple_terminal_nodes_not_alive",
        value: simple_rule_ok as u8 as f64,
        threshold: 1.0,
        pass: simple_rule_ok,
    });

    // ℓ¹ identity on nonnegative inputs
    let y = datum.map_values(|_, v| Complex::new(v.norm(), 0.0));
    let mut w = csv_writer(out, "l1_identity.csv", &mut o.files)?;
    w.write_record(["tree", "output_l1", "product_l1", "relative_error"])?;
    let mut worst = 0.0f64;
    for k in 0..=cfg.trees.max_k {
        for shape in enumerate_shapes(k, cfg.trees.limits())? {
            let inputs = LeafInputs::new(vec![y.clone(); shape.leaf_count()], vec![false; shape.leaf_count()])?;
            let lhs = eval_l1_operator(&shape, &inputs, budget)?.norm_l1();
            let rhs = y.norm_l1().powi(shape.leaf_count() as i32);
            let rel = if rhs > 0.0 { (lhs - rhs).abs() / rhs } else { lhs };
            worst = worst.max(rel);
            let name = OrnamentedTree::new(shape.clone(), &vec![NodeKind::General; k])?.serialize();
            w.write_record([name, fmt_real(lhs), fmt_real(rhs), fmt_real(rel)])?;
        }
    }
    w.flush()?;
    o.checks.push(Check {
        name: "l1_identity_relative_error",
        value: worst,
        threshold: g.l1_tolerance,
        pass: worst <= g.l1_tolerance,
    });

    // divisor statistics
    let mut w = csv_writer(out, "divisors.csv", &mut o.files)?;
    w.write_record(["m", "divisor_count"])?;
    let mut divisor_ok = true;
    for m in 1..=g.divisor_max {
        let d = divisor_count(m)?;
        divisor_ok &= (d as f64) <= 2.0 * (m as f64).sqrt();
        w.write_record([m.to_string(), d.to_string()])?;
    }
    w.flush()?;
    o.checks.push(Check {
        name: "divisor_count_below_2_sqrt_m",
        value: divisor_ok as u8 as f64,
        threshold: 1.0,
        pass: divisor_ok,
    });

    // smoothing gap
    let times = log_grid(g.smoothing_t_min, g.smoothing_t_max, g.smoothing_points);
    let sol = solve_series(&datum, &times, omega, cfg.series_options())?;
    let gaps = smoothing_gap(&sol, &times, cfg.space.q)?;
    let mut w = csv_writer(out, "smoothing.csv", &mut o.files)?;
    w.write_record(["t", "gap"])?;
    for (t, gap) in times.iter().zip(&gaps) {
        w.write_record([fmt_real(*t), fmt_real(*gap)])?;
    }
    w.flush()?;
    if gaps.iter().all(|&v| v > 0.0) {
        let slope = loglog_slope(&times, &gaps);
        o.checks.push(Check {
            name: "smoothing_gap_loglog_slope",
            value: slope,
            threshold: g.slope_min,
            pass: slope >= g.slope_min,
        });
    } else {
        o.warnings.push("smoothing gap vanishes; slope not defined".into());
    }

    // truncated nonlinearity
    let grid = cfg.time_grid();
    let t = *grid.last().expect("grid_points >= 2");
    let sol = solve_series(&datum, &grid, omega, cfg.series_options())?;
    let nl = nonlinearity_limit(&sol, t, &g.nl_cutoffs, cfg.space.p)?;
    let mut w = csv_writer(out, "nonlinearity_limit.csv", &mut o.files)?;
    w.write_record(["n_low", "n_high", "lp_difference"])?;
    for (pair, d) in nl.cutoffs.windows(2).zip(&nl.differences) {
        w.write_record([pair[0].to_string(), pair[1].to_string(), fmt_real(*d)])?;
    }
    w.flush()?;
    if nl.differences.len() >= 2 && nl.differences.iter().any(|&d| d > 0.0) {
        o.checks.push(Check {
            name: "nonlinearity_differences_decreasing",
            value: nl.decreasing() as u8 as f64,
            threshold: 1.0,
            pass: nl.decreasing(),
        });
    }
    Ok(o)
}
