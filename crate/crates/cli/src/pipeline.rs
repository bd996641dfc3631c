//! The subcommands as library functions.
//!
//! Output tree under the output directory:
//!
//! ```text
//! thermal/manifest.toml, log.csv, beta_0000.omps, ...
//! heisenberg/<label>/manifest.toml, log.csv, t_0000.omps, ...
//! correlate/meta.toml, grid.csv (grid_left.csv, grid_right.csv) | greens.csv
//! validate/report.txt
//! report/*.dat
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use ndarray::Array2;
use osmps::basis::make_basis;
use osmps::engine::{build_schedule, evolve, Direction, Evolution, EvolutionConfig, EvolutionStatus, Snapshot};
use osmps::observables::{evaluate_grid, greens_function, ExpectationGrid, GreenFunctionSeries, SideMaps};
use osmps::oracle::{dense_hamiltonian, EigenSystem, ExactCorrelator, ORACLE_MAX_SITES};
use osmps::superop::{build_chi, build_commutator_generator};
use osmps::{BasisKind, LocalBasis, MultSide, OperatorMps, C64};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, CorrelatorKind, LegConfig, Model, OperatorKind, OperatorSpec, RunConfig};
use crate::error::CliError;
use crate::fsio::{read, read_text, write_atomic};
use crate::manifest::{sha256_hex, AbortInfo, LegKind, Manifest, SnapshotEntry, MANIFEST_FILE, MANIFEST_VERSION};
use crate::operators::{dense_operator, initial_state, mult_map};
use crate::snapshot::SnapshotFile;
use crate::table::{self, GREENS_HEADER, GRID_HEADER};

/// Environment variable overriding the output directory of the config file.
pub const OUT_DIR_ENV: &str = "OSMPS_OUT_DIR";

pub fn herm_basis() -> LocalBasis {
    make_basis(2, BasisKind::Hermitian).expect("d = 2 basis")
}

pub fn real_basis() -> LocalBasis {
    make_basis(2, BasisKind::Real).expect("d = 2 basis")
}

fn evo_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Evolution(e.to_string())
}

fn missing_section(name: &str) -> CliError {
    CliError::Config(ConfigError(format!("config has no [{name}] section")))
}

/// A parsed config with its output directory resolved.
#[derive(Clone, Debug)]
pub struct Context {
    pub config: RunConfig,
    pub model: Model,
    pub out: PathBuf,
    pub tolerance: f64,
}

impl Context {
    /// Output directory precedence: `out` argument, then [`OUT_DIR_ENV`], then
    /// the config value, which is relative to the config file.
    pub fn load(path: &Path, out: Option<PathBuf>, tolerance: Option<f64>) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(ConfigError(format!("{}: {e}", path.display()))))?;
        let config = RunConfig::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let out = out
            .or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
            .unwrap_or_else(|| base.join(&config.output.dir));
        Self::new(config, out, tolerance)
    }

    pub fn new(config: RunConfig, out: PathBuf, tolerance: Option<f64>) -> Result<Self, CliError> {
        config.validate()?;
        if let Some(t) = tolerance {
            if !(t > 0.0 && t.is_finite()) {
                return Err(ConfigError(format!("tolerance override {t} must be positive")).into());
            }
        }
        let model = config.model()?;
        let tolerance = tolerance.unwrap_or(config.validate.tolerance);
        Ok(Self { config, model, out, tolerance })
    }

    pub fn thermal_dir(&self) -> PathBuf {
        self.out.join("thermal")
    }

    pub fn heisenberg_dir(&self, label: &str) -> PathBuf {
        self.out.join("heisenberg").join(label)
    }

    pub fn correlate_dir(&self) -> PathBuf {
        self.out.join("correlate")
    }

    fn thermal_leg(&self) -> Result<&LegConfig, CliError> {
        self.config.thermal.as_ref().ok_or_else(|| missing_section("thermal"))
    }

    fn heisenberg_leg(&self) -> Result<&LegConfig, CliError> {
        self.config.heisenberg.as_ref().ok_or_else(|| missing_section("heisenberg"))
    }
}

fn evolution_config(cfg: &RunConfig, leg: &LegConfig) -> EvolutionConfig {
    let t = &cfg.truncation;
    let mut ec = EvolutionConfig::new(t.max_rank, t.weight_tol, leg.total(), leg.snapshots.clone(), cfg.osee_cut(leg));
    ec.log_every = leg.log_every;
    ec.abort_on_cap = t.abort_on_cap;
    ec
}

/// `ρ(β)` snapshots, in memory.
pub fn thermal_evolution(ctx: &Context) -> Result<Evolution, CliError> {
    let leg = ctx.thermal_leg()?;
    let basis = real_basis();
    let map = build_chi(&ctx.model.terms(), &basis).map_err(evo_err)?;
    let schedule = build_schedule(&map, leg.step, leg.order, Direction::Imaginary).map_err(evo_err)?;
    let e = OperatorMps::identity_state(ctx.model.n(), &basis).map_err(evo_err)?;
    evolve(e, &schedule, &evolution_config(&ctx.config, leg)).map_err(evo_err)
}

/// `a(t)` snapshots for one operator, in memory.
pub fn heisenberg_evolution(ctx: &Context, spec: &OperatorSpec) -> Result<Evolution, CliError> {
    let leg = ctx.heisenberg_leg()?;
    let basis = herm_basis();
    let map = build_commutator_generator(&ctx.model.terms(), &basis).map_err(evo_err)?;
    let schedule = build_schedule(&map, leg.step, leg.order, Direction::Real).map_err(evo_err)?;
    let a = initial_state(spec, &ctx.model, &basis)?;
    evolve(a, &schedule, &evolution_config(&ctx.config, leg)).map_err(evo_err)
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Writes snapshots, log and manifest of one leg. The manifest goes last and
/// stale snapshot files from earlier grids are removed after it.
fn write_leg(ctx: &Context, dir: &Path, kind: LegKind, label: &str, leg: &LegConfig, run: &Evolution) -> Result<Manifest, CliError> {
    let prefix = match run.direction {
        Direction::Imaginary => "beta",
        Direction::Real => "t",
    };
    let mut entries = Vec::with_capacity(run.snapshots.len());
    let mut basis = String::new();
    let mut phys_dim = 0;
    for (k, s) in run.snapshots.iter().enumerate() {
        let bytes = SnapshotFile::from_snapshot(run.direction, s).encode();
        let file = format!("{prefix}_{k:04}.omps");
        write_atomic(&dir.join(&file), &bytes)?;
        basis = s.state.basis().to_string();
        phys_dim = s.state.phys_dim();
        let log_norm = s.state.canonicalize(0).map_err(evo_err)?.log_scale();
        entries.push(SnapshotEntry {
            stamp: s.stamp,
            file,
            sha256: sha256_hex(&bytes),
            cum_discarded: s.cum_discarded,
            log_norm,
            max_bond: s.state.max_bond(),
        });
    }
    write_atomic(&dir.join("log.csv"), &table::log_csv(run.direction, &run.log))?;
    let aborted = match run.status {
        EvolutionStatus::Completed => None,
        EvolutionStatus::Aborted { stamp, bond, discarded } => Some(AbortInfo { stamp, bond, discarded }),
    };
    let t = &ctx.config.truncation;
    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        kind,
        label: label.to_string(),
        n: ctx.model.n(),
        phys_dim,
        basis,
        model_sha256: ctx.model.fingerprint(),
        step: leg.step,
        order: leg.order,
        max_rank: t.max_rank,
        weight_tol: t.weight_tol,
        complete: run.is_complete() && entries.len() == leg.snapshots.len(),
        real_arithmetic: run.real_arithmetic,
        aborted: aborted.clone(),
        created_unix: (!ctx.config.deterministic).then(now_unix),
        snapshots: entries,
    };
    write_atomic(&dir.join(MANIFEST_FILE), manifest.to_toml().as_bytes())?;
    let keep: BTreeSet<&str> = manifest.snapshots.iter().map(|s| s.file.as_str()).collect();
    for entry in fs::read_dir(dir).map_err(CliError::io(dir))? {
        let path = entry.map_err(CliError::io(dir))?.path();
        let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("");
        if name.ends_with(".omps") && !keep.contains(name) {
            fs::remove_file(&path).map_err(CliError::io(&path))?;
        }
    }
    if let Some(a) = aborted {
        return Err(CliError::Aborted { leg: format!("{kind:?} leg {label}"), stamp: a.stamp, bond: a.bond, discarded: a.discarded });
    }
    Ok(manifest)
}

/// `thermal`: imaginary-time leg to disk.
pub fn run_thermal(ctx: &Context) -> Result<Manifest, CliError> {
    let leg = ctx.thermal_leg()?;
    let run = thermal_evolution(ctx)?;
    write_leg(ctx, &ctx.thermal_dir(), LegKind::Thermal, "rho", leg, &run)
}

/// `heisenberg`: one real-time leg per configured operator.
pub fn run_heisenberg(ctx: &Context) -> Result<Vec<Manifest>, CliError> {
    let leg = ctx.heisenberg_leg()?;
    let mut out = Vec::new();
    for spec in &leg.operators {
        let label = spec.label();
        let run = heisenberg_evolution(ctx, spec)?;
        out.push(write_leg(ctx, &ctx.heisenberg_dir(&label), LegKind::Heisenberg, &label, leg, &run)?);
    }
    Ok(out)
}

/// A leg read back from disk with every hash checked.
#[derive(Clone, Debug)]
pub struct LoadedLeg {
    pub manifest: Manifest,
    pub manifest_sha256: String,
    pub snapshots: Vec<Snapshot>,
}

pub fn load_leg(dir: &Path, kind: LegKind, model: &Model) -> Result<LoadedLeg, CliError> {
    let path = dir.join(MANIFEST_FILE);
    let text = read_text(&path)?;
    let manifest = Manifest::parse(&text).map_err(|source| CliError::Manifest { path: path.clone(), source })?;
    if manifest.kind != kind {
        return Err(CliError::Incompatible(format!("{} holds a {:?} leg, expected {kind:?}", path.display(), manifest.kind)));
    }
    if manifest.model_sha256 != model.fingerprint() {
        return Err(CliError::Incompatible(format!("{} was produced for a different model", path.display())));
    }
    if manifest.n != model.n() {
        return Err(CliError::Incompatible(format!("{} has {} sites, model has {}", path.display(), manifest.n, model.n())));
    }
    let want_dir = match kind {
        LegKind::Thermal => Direction::Imaginary,
        LegKind::Heisenberg => Direction::Real,
    };
    let mut snapshots = Vec::with_capacity(manifest.snapshots.len());
    for entry in &manifest.snapshots {
        let p = dir.join(&entry.file);
        let bytes = read(&p)?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(CliError::Incompatible(format!("{} does not match its manifest hash", p.display())));
        }
        let file = SnapshotFile::decode(&bytes).map_err(|source| CliError::Snapshot { path: p.clone(), source })?;
        if file.direction != want_dir || file.stamp != entry.stamp || file.state.n() != manifest.n {
            return Err(CliError::Incompatible(format!("{} disagrees with its manifest", p.display())));
        }
        snapshots.push(file.into_snapshot(entry.cum_discarded));
    }
    if snapshots.is_empty() {
        return Err(CliError::Incompatible(format!("{} lists no snapshots", path.display())));
    }
    Ok(LoadedLeg { manifest, manifest_sha256: sha256_hex(text.as_bytes()), snapshots })
}

/// Written next to correlator output; ties it to the legs it was computed from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelateMeta {
    pub kind: CorrelatorKind,
    pub model_sha256: String,
    pub thermal_manifest_sha256: String,
    pub heisenberg: Vec<LegRef>,
    pub complete: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegRef {
    pub label: String,
    pub manifest_sha256: String,
}

/// What `correlate` computed.
#[derive(Clone, Debug)]
pub enum Correlation {
    Grid { total: ExpectationGrid, parts: Option<(ExpectationGrid, ExpectationGrid)> },
    Greens(Vec<GreenFunctionSeries>),
}

fn sum_grids(l: &ExpectationGrid, r: &ExpectationGrid) -> ExpectationGrid {
    let mut out = l.clone();
    out.values = &l.values + &r.values;
    out
}

/// Evaluates the configured observable from in-memory legs.
pub fn correlate_snapshots(
    ctx: &Context,
    thermal: &[Snapshot],
    heisenberg: &dyn Fn(&OperatorSpec) -> Result<Vec<Snapshot>, CliError>,
) -> Result<Correlation, CliError> {
    let obs = ctx.config.observable.as_ref().ok_or_else(|| missing_section("observable"))?;
    let herm = herm_basis();
    let e = OperatorMps::identity_state(ctx.model.n(), &real_basis()).map_err(evo_err)?;
    match obs.kind {
        CorrelatorKind::Plain | CorrelatorKind::Anticommutator => {
            let spec = ctx.config.observable_operator().ok_or_else(|| missing_section("heisenberg"))?;
            let a = heisenberg(spec)?;
            let label = spec.label();
            let grid = |side: MultSide| -> Result<ExpectationGrid, CliError> {
                let map = obs.b.as_ref().map(|b| mult_map(b, &ctx.model, side, &herm)).transpose()?;
                evaluate_grid(&label, thermal, &a, map.as_ref(), &e).map_err(evo_err)
            };
            if obs.kind == CorrelatorKind::Plain {
                Ok(Correlation::Grid { total: grid(obs.side.into())?, parts: None })
            } else {
                let (l, r) = (grid(MultSide::Left)?, grid(MultSide::Right)?);
                Ok(Correlation::Grid { total: sum_grids(&l, &r), parts: Some((l, r)) })
            }
        }
        CorrelatorKind::Greens => {
            let w_spec = ctx.config.operator_of_kind(OperatorKind::MajoranaW).ok_or_else(|| missing_section("heisenberg"))?;
            let wp_spec = ctx.config.operator_of_kind(OperatorKind::MajoranaWp).ok_or_else(|| missing_section("heisenberg"))?;
            let (w_t, wp_t) = (heisenberg(w_spec)?, heisenberg(wp_spec)?);
            let maps = |s: &OperatorSpec| -> Result<SideMaps, CliError> {
                Ok(SideMaps { left: mult_map(s, &ctx.model, MultSide::Left, &herm)?, right: mult_map(s, &ctx.model, MultSide::Right, &herm)? })
            };
            let (wm, wpm) = (maps(w_spec)?, maps(wp_spec)?);
            let series = thermal
                .iter()
                .map(|rho| greens_function(rho, &w_t, &wp_t, &wm, &wpm, &e).map_err(evo_err))
                .collect::<Result<_, _>>()?;
            Ok(Correlation::Greens(series))
        }
    }
}

fn write_correlation(dir: &Path, c: &Correlation) -> Result<(), CliError> {
    match c {
        Correlation::Grid { total, parts } => {
            write_atomic(&dir.join("grid.csv"), &table::grid_csv(total))?;
            if let Some((l, r)) = parts {
                write_atomic(&dir.join("grid_left.csv"), &table::grid_csv(l))?;
                write_atomic(&dir.join("grid_right.csv"), &table::grid_csv(r))?;
            }
        }
        Correlation::Greens(series) => write_atomic(&dir.join("greens.csv"), &table::greens_csv(series))?,
    }
    Ok(())
}

/// `correlate`: reads both legs from disk, evaluates the observable on the
/// full `(β, t)` grid.
pub fn run_correlate(ctx: &Context) -> Result<Correlation, CliError> {
    let obs = ctx.config.observable.as_ref().ok_or_else(|| missing_section("observable"))?;
    let thermal = load_leg(&ctx.thermal_dir(), LegKind::Thermal, &ctx.model)?;
    let labels: Vec<String> = match obs.kind {
        CorrelatorKind::Greens => [OperatorKind::MajoranaW, OperatorKind::MajoranaWp]
            .iter()
            .filter_map(|k| ctx.config.operator_of_kind(*k).map(|s| s.label()))
            .collect(),
        _ => ctx.config.observable_operator().map(|s| s.label()).into_iter().collect(),
    };
    let mut legs = Vec::new();
    for label in &labels {
        let leg = load_leg(&ctx.heisenberg_dir(label), LegKind::Heisenberg, &ctx.model)?;
        if leg.manifest.phys_dim != thermal.manifest.phys_dim {
            return Err(CliError::Incompatible(format!("leg {label} and the thermal leg use different local dimensions")));
        }
        legs.push((label.clone(), leg));
    }
    let lookup = |spec: &OperatorSpec| -> Result<Vec<Snapshot>, CliError> {
        let label = spec.label();
        legs.iter()
            .find(|(l, _)| *l == label)
            .map(|(_, leg)| leg.snapshots.clone())
            .ok_or_else(|| CliError::Missing(ctx.heisenberg_dir(&label)))
    };
    let result = correlate_snapshots(ctx, &thermal.snapshots, &lookup)?;
    let dir = ctx.correlate_dir();
    write_correlation(&dir, &result)?;
    let meta = CorrelateMeta {
        kind: obs.kind,
        model_sha256: ctx.model.fingerprint(),
        thermal_manifest_sha256: thermal.manifest_sha256.clone(),
        heisenberg: legs.iter().map(|(l, leg)| LegRef { label: l.clone(), manifest_sha256: leg.manifest_sha256.clone() }).collect(),
        complete: thermal.manifest.complete && legs.iter().all(|(_, l)| l.manifest.complete),
    };
    write_atomic(&dir.join("meta.toml"), toml::to_string(&meta).expect("meta serializes").as_bytes())?;
    Ok(result)
}

/// One line of the validation report.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub max_deviation: f64,
    pub tolerance: f64,
}

impl CheckLine {
    pub fn passed(&self) -> bool {
        self.max_deviation <= self.tolerance
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub lines: Vec<CheckLine>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(CheckLine::passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for l in &self.lines {
            let verdict = if l.passed() { "PASS" } else { "FAIL" };
            s.push_str(&format!("{verdict} {} max_dev={:.3e} tol={:.1e}\n", l.name, l.max_deviation, l.tolerance));
        }
        if !self.passed() {
            s.push_str(
                "deviations above tolerance: the Trotter error scales as step^2 for order 2 (step for order 1); \
                 halve the step, and check cum_discarded_weight in the logs against weight_tol and max_rank\n",
            );
        }
        s
    }
}

/// Compares the stored correlator output with exact diagonalization.
pub fn validate_against_oracle(ctx: &Context) -> Result<ValidationReport, CliError> {
    let n = ctx.model.n();
    if n > ORACLE_MAX_SITES {
        return Err(CliError::OracleCap(format!("exact check limited to {ORACLE_MAX_SITES} sites, model has {n}")));
    }
    let obs = ctx.config.observable.as_ref().ok_or_else(|| missing_section("observable"))?;
    let dir = ctx.correlate_dir();
    let meta_path = dir.join("meta.toml");
    let meta: CorrelateMeta = toml::from_str(&read_text(&meta_path)?)
        .map_err(|e| CliError::Incompatible(format!("{}: {e}", meta_path.display())))?;
    if meta.model_sha256 != ctx.model.fingerprint() || meta.kind != obs.kind {
        return Err(CliError::Incompatible("correlator output was produced for a different model or observable".into()));
    }
    let h = dense_hamiltonian(&ctx.model.terms()).map_err(|e| CliError::OracleCap(e.to_string()))?;
    let eig = EigenSystem::new(&h).map_err(|e| CliError::OracleCap(e.to_string()))?;
    let exact = |a: &OperatorSpec, b: Option<&OperatorSpec>, side: MultSide| -> Result<ExactCorrelator, CliError> {
        let ad = dense_operator(a, &ctx.model)?;
        let bd = b.map(|b| dense_operator(b, &ctx.model)).transpose()?;
        ExactCorrelator::new(&eig, &ad, bd.as_ref(), side).map_err(|e| CliError::OracleCap(e.to_string()))
    };
    let tol = ctx.tolerance;
    let mut lines = Vec::new();
    match obs.kind {
        CorrelatorKind::Plain | CorrelatorKind::Anticommutator => {
            let path = dir.join("grid.csv");
            let t = table::parse_table(&read(&path)?, Some(&GRID_HEADER)).map_err(|source| CliError::Table { path, source })?;
            let a = ctx.config.observable_operator().ok_or_else(|| missing_section("heisenberg"))?;
            let oracles: Vec<ExactCorrelator> = if obs.kind == CorrelatorKind::Plain {
                vec![exact(a, obs.b.as_ref(), obs.side.into())?]
            } else {
                vec![exact(a, obs.b.as_ref(), MultSide::Left)?, exact(a, obs.b.as_ref(), MultSide::Right)?]
            };
            let mut per_beta: Vec<(f64, f64)> = Vec::new();
            for r in &t.rows {
                let want: C64 = oracles.iter().map(|o| o.eval(r[0], r[1])).sum();
                let dev = (C64::new(r[2], r[3]) - want).norm();
                match per_beta.iter_mut().find(|(b, _)| *b == r[0]) {
                    Some(e) => e.1 = e.1.max(dev),
                    None => per_beta.push((r[0], dev)),
                }
            }
            for (beta, dev) in per_beta {
                lines.push(CheckLine { name: format!("grid beta={beta}"), max_deviation: dev, tolerance: tol });
            }
        }
        CorrelatorKind::Greens => {
            let path = dir.join("greens.csv");
            let t = table::parse_table(&read(&path)?, Some(&GREENS_HEADER)).map_err(|source| CliError::Table { path, source })?;
            let w = ctx.config.operator_of_kind(OperatorKind::MajoranaW).ok_or_else(|| missing_section("heisenberg"))?;
            let wp = ctx.config.operator_of_kind(OperatorKind::MajoranaWp).ok_or_else(|| missing_section("heisenberg"))?;
            // ⟨{x, y(t)}⟩ = ⟨x y(t)⟩ + ⟨y(t) x⟩
            let anti = |x: &OperatorSpec, y: &OperatorSpec| -> Result<[ExactCorrelator; 2], CliError> {
                Ok([exact(y, Some(x), MultSide::Left)?, exact(y, Some(x), MultSide::Right)?])
            };
            let [ww, wpwp, wwp, wpw] = [anti(w, w)?, anti(wp, wp)?, anti(w, wp)?, anti(wp, w)?];
            let ev = |o: &[ExactCorrelator; 2], beta: f64, tt: f64| o[0].eval(beta, tt) + o[1].eval(beta, tt);
            let i = C64::new(0.0, 1.0);
            let mut per_beta: Vec<(f64, f64, f64)> = Vec::new();
            for r in &t.rows {
                let (beta, tt) = (r[0], r[1]);
                let g = -i * 0.25 * (ev(&ww, beta, tt) + ev(&wpwp, beta, tt)) - 0.25 * (ev(&wwp, beta, tt) - ev(&wpw, beta, tt));
                let dev = (C64::new(r[2], r[3]) - g).norm();
                let g0 = if tt == 0.0 { (C64::new(r[2], r[3]) + i).norm() } else { 0.0 };
                match per_beta.iter_mut().find(|(b, _, _)| *b == beta) {
                    Some(e) => {
                        e.1 = e.1.max(dev);
                        e.2 = e.2.max(g0);
                    }
                    None => per_beta.push((beta, dev, g0)),
                }
            }
            for (beta, dev, g0) in per_beta {
                lines.push(CheckLine { name: format!("greens beta={beta}"), max_deviation: dev, tolerance: tol });
                lines.push(CheckLine { name: format!("greens beta={beta} G(0)=-i"), max_deviation: g0, tolerance: tol });
            }
        }
    }
    Ok(ValidationReport { lines })
}

/// `validate`: writes the report and fails when any check does.
pub fn run_validate(ctx: &Context) -> Result<ValidationReport, CliError> {
    let report = validate_against_oracle(ctx)?;
    write_atomic(&ctx.out.join("validate").join("report.txt"), report.render().as_bytes())?;
    if report.passed() {
        Ok(report)
    } else {
        let worst = report.lines.iter().filter(|l| !l.passed()).map(|l| l.max_deviation).fold(0.0, f64::max);
        Err(CliError::ValidationFailed(format!(
            "max deviation {worst:.3e} exceeds tolerance {:.1e}; see {}\n{}",
            ctx.tolerance,
            ctx.out.join("validate").join("report.txt").display(),
            report.render()
        )))
    }
}

fn dat(header: &str, blocks: &[(String, Vec<Vec<f64>>)]) -> Vec<u8> {
    let mut s = format!("# {header}\n");
    for (k, (title, rows)) in blocks.iter().enumerate() {
        if k > 0 {
            s.push_str("\n\n");
        }
        if !title.is_empty() {
            s.push_str(&format!("# {title}\n"));
        }
        for r in rows {
            let cols: Vec<String> = r.iter().map(|x| format!("{x:e}")).collect();
            s.push_str(&cols.join(" "));
            s.push('\n');
        }
    }
    s.into_bytes()
}

/// Splits rows into blocks by the first column, one gnuplot index per value.
fn blocks_by_first(rows: &[Vec<f64>], name: &str) -> Vec<(String, Vec<Vec<f64>>)> {
    let mut out: Vec<(f64, Vec<Vec<f64>>)> = Vec::new();
    for r in rows {
        match out.last_mut() {
            Some((b, rs)) if *b == r[0] => rs.push(r[1..].to_vec()),
            _ => out.push((r[0], vec![r[1..].to_vec()])),
        }
    }
    out.into_iter().map(|(b, rs)| (format!("{name} = {b}"), rs)).collect()
}

/// `report`: gnuplot-ready `.dat` files from whatever CSV output exists.
pub fn run_report(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let dir = ctx.out.join("report");
    let mut written = Vec::new();
    let mut logs = vec![("thermal".to_string(), ctx.thermal_dir().join("log.csv"))];
    if let Some(h) = &ctx.config.heisenberg {
        for op in &h.operators {
            logs.push((format!("heisenberg_{}", op.label()), ctx.heisenberg_dir(&op.label()).join("log.csv")));
        }
    }
    for (name, path) in logs {
        if !path.exists() {
            continue;
        }
        let t = table::parse_log(&read(&path)?).map_err(|source| CliError::Table { path: path.clone(), source })?;
        let header = t.header.join(" ");
        let out = dir.join(format!("{name}_log.dat"));
        write_atomic(&out, &dat(&header, &[(String::new(), t.rows)]))?;
        written.push(out);
    }
    let grid = ctx.correlate_dir().join("grid.csv");
    if grid.exists() {
        let t = table::parse_table(&read(&grid)?, Some(&GRID_HEADER)).map_err(|source| CliError::Table { path: grid.clone(), source })?;
        let out = dir.join("grid.dat");
        write_atomic(&out, &dat("t value_re value_im denom_log trunc_weight_thermal trunc_weight_real", &blocks_by_first(&t.rows, "beta")))?;
        written.push(out);
    }
    let greens = ctx.correlate_dir().join("greens.csv");
    if greens.exists() {
        let t = table::parse_table(&read(&greens)?, Some(&GREENS_HEADER)).map_err(|source| CliError::Table { path: greens.clone(), source })?;
        let out = dir.join("greens.dat");
        write_atomic(&out, &dat(&GREENS_HEADER[1..].join(" "), &blocks_by_first(&t.rows, "beta")))?;
        written.push(out);
    }
    if written.is_empty() {
        return Err(CliError::Missing(ctx.out.clone()));
    }
    Ok(written)
}

/// Dense `(β, t)` values of a grid, for tests and reports.
pub fn grid_values(c: &Correlation) -> Option<&Array2<C64>> {
    match c {
        Correlation::Grid { total, .. } => Some(&total.values),
        Correlation::Greens(_) => None,
    }
}
