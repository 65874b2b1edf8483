//! Subcommand implementations.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use spikesurgery::experiments::{
    bulk_walk, compare_baselines, linearization_sweep, stability_study, AdditiveFit, BaselineConfig, SweepPoint,
};
use spikesurgery::lanczos::{median, top_eigenpairs, SpectrumReport, SpikeBasis};
use spikesurgery::models::{
    per_class_accuracy, train, BlobFixture, ClassAccuracy, Dataset, MlpSpec, Samples, TrainConfig, REPORT_ACCESS,
};
use spikesurgery::operators::{stratified_batch, HvpOracle, ModelOracle, SpikedOracle};
use spikesurgery::sensitivity::{effective_rank, sensitivity_matrix, stratified_split, SensitivityMatrix};
use spikesurgery::slq::{auto_grid, density_from_rules, probe_convergence, probe_rules, ConvergenceTable, DensityEstimate};
use spikesurgery::surgery::{
    decile_report, decile_table, final_report, run_deflated_surgery, run_iterations, spike_basis, DeflationConfig,
    IterationRecord, PhaseRecord, SurgeryReport, SurgeryState,
};
use spikesurgery::vecspace::{read_param_vector, write_param_vector, ParamVector, Rng};

use crate::config::{OperatorSource, RunConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::{file_digest, write_atomic, Command, InputRef, Manifest, Options, ReportDir, Status, MANIFEST_FILE};

const STATE_DIR: &str = "state";
const STATE_FILE: &str = "state.toml";

/// A fully resolved command invocation.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub options: Options,
    pub config: RunConfig,
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,
    /// Surgery only: stop cleanly after this many completed iterations.
    pub stop_after: Option<usize>,
    /// Surgery only: continue from the state saved in `out`.
    pub resume: bool,
}

impl Invocation {
    /// Rebuilds the invocation recorded in a manifest, writing to `out`.
    pub fn from_manifest(manifest: &Manifest, out: &Path) -> CliResult<Self> {
        let checkpoint = match &manifest.checkpoint {
            Some(input) => {
                let path = PathBuf::from(&input.path);
                let digest = file_digest(&path)?;
                if digest != input.sha256 {
                    return Err(CliError::Config(format!(
                        "checkpoint {} changed since the manifest was written",
                        input.path
                    )));
                }
                Some(path)
            }
            None => None,
        };
        Ok(Self {
            command: manifest.command,
            options: manifest.options.clone(),
            config: manifest.config.clone(),
            checkpoint,
            out: out.to_path_buf(),
            stop_after: None,
            resume: false,
        })
    }
}

struct Model {
    spec: MlpSpec,
    theta: ParamVector,
}

struct Context<'a> {
    inv: &'a Invocation,
    cfg: &'a RunConfig,
    data: Dataset,
    fixture: BlobFixture,
    report: ReportDir,
}

impl Context<'_> {
    fn spec(&self) -> CliResult<MlpSpec> {
        self.cfg.model.spec(self.fixture.dim, self.fixture.classes)
    }

    fn train_config(&self) -> TrainConfig {
        self.cfg.train.to_config(self.cfg.seed)
    }

    /// Loads `--checkpoint`, or trains the configured model when none is given.
    fn model(&mut self) -> CliResult<Model> {
        let spec = self.spec()?;
        let theta = match &self.inv.checkpoint {
            Some(path) => load_checkpoint(path)?,
            None => {
                let t0 = Instant::now();
                let theta = train(&spec, self.data.train(), &self.train_config())?.theta;
                self.report.record_seconds("train_seconds", t0.elapsed().as_secs_f64());
                theta
            }
        };
        if theta.dim() != spec.param_count() {
            return Err(CliError::Config(format!(
                "checkpoint has {} parameters but the configured model has {}",
                theta.dim(),
                spec.param_count()
            )));
        }
        Ok(Model { spec, theta })
    }

    fn hvp_batch(&self) -> CliResult<Samples> {
        let op = &self.cfg.operator;
        Ok(stratified_batch(
            self.data.train(),
            self.data.classes(),
            op.hvp_per_class,
            &mut Rng::new(op.batch_seed),
        )?)
    }

    fn checkpoint_meta(&self) -> toml::Table {
        let mut meta = toml::Table::new();
        meta.insert("preset".into(), self.cfg.fixture.preset.clone().into());
        meta.insert("seed".into(), toml::Value::Integer(self.cfg.seed as i64));
        let widths: Vec<toml::Value> = self
            .spec()
            .map(|s| s.layer_widths.iter().map(|&w| toml::Value::Integer(w as i64)).collect())
            .unwrap_or_default();
        meta.insert("layer_widths".into(), toml::Value::Array(widths));
        meta
    }

    fn write_checkpoint(&mut self, name: &str, theta: &ParamVector) -> CliResult<()> {
        let mut buf = Vec::new();
        write_param_vector(&mut buf, theta, &self.checkpoint_meta())?;
        self.report.write(name, buf)
    }

    fn sensitivity_split(&self, seed: u64) -> CliResult<(Samples, &'static str)> {
        Ok(match self.cfg.sensitivity.per_class_cap {
            Some(cap) => (stratified_split(&self.data, cap, seed)?, "stratified-train"),
            None => (self.data.sensitivity().clone(), "sensitivity"),
        })
    }

    /// Spike basis and sensitivity matrix from `[sensitivity]`.
    fn basis_and_matrix(&mut self, model: &Model) -> CliResult<(SpikeBasis, SensitivityMatrix, Samples)> {
        let s = self.cfg.sensitivity.clone();
        let basis = spike_basis(&model.spec, &model.theta, self.hvp_batch()?, &[], s.order, s.spikes, s.seed)?;
        let (split, name) = self.sensitivity_split(s.seed)?;
        let t0 = Instant::now();
        let matrix = sensitivity_matrix(&model.spec, &model.theta, &basis, s.epsilon, &split, name)?;
        self.report.record_seconds("sensitivity_seconds", t0.elapsed().as_secs_f64());
        Ok((basis, matrix, split))
    }
}

pub fn load_checkpoint(path: &Path) -> CliResult<ParamVector> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(read_param_vector(BufReader::new(file))?.vector)
}

/// Runs the invocation and writes its report directory and manifest.
pub fn execute(inv: &Invocation) -> CliResult<Manifest> {
    let cfg = &inv.config;
    let fixture = BlobFixture::preset(&cfg.fixture.preset, cfg.seed)?;
    let data = fixture.generate()?;
    let report = ReportDir::create(&inv.out)?;
    let checkpoint = match &inv.checkpoint {
        Some(p) => Some(InputRef {
            path: p.display().to_string(),
            sha256: file_digest(p)?,
        }),
        None => None,
    };
    let mut manifest = Manifest {
        tool: format!("spikesurgery {}", env!("CARGO_PKG_VERSION")),
        command: inv.command,
        status: Status::Interrupted,
        options: inv.options.clone(),
        checkpoint,
        heldout_accesses: Vec::new(),
        outputs: Default::default(),
        config: cfg.clone(),
    };
    // provisional, so a killed run can still be resumed
    write_atomic(&inv.out.join(MANIFEST_FILE), manifest.to_toml()?.as_bytes())?;
    let mut ctx = Context {
        inv,
        cfg,
        data,
        fixture,
        report,
    };
    let started = Instant::now();
    let status = match inv.command {
        Command::Train => run_train(&mut ctx),
        Command::Spectrum => run_spectrum(&mut ctx),
        Command::Slq => run_slq(&mut ctx),
        Command::Sensitivity => run_sensitivity(&mut ctx),
        Command::Rank => run_rank(&mut ctx),
        Command::Surgery if inv.options.deflated => run_deflated(&mut ctx),
        Command::Surgery => run_surgery_cmd(&mut ctx),
        Command::Bulkwalk => run_bulkwalk(&mut ctx),
        Command::Linearize => run_linearize(&mut ctx),
        Command::Stability => run_stability(&mut ctx),
        Command::Baselines => run_baselines(&mut ctx),
    }?;
    ctx.report.record_seconds("total_seconds", started.elapsed().as_secs_f64());
    manifest.status = status;
    manifest.heldout_accesses = ctx.data.heldout_accesses();
    let manifest = ctx.report.finish(manifest)?;
    match status {
        Status::Complete => Ok(manifest),
        Status::Interrupted => {
            let t = load_state(&inv.out)?.map(|s| s.t).unwrap_or(0);
            Err(CliError::Interrupted(t))
        }
    }
}

/// Continues an interrupted Surgery run in `out`.
pub fn resume(out: &Path, stop_after: Option<usize>) -> CliResult<Manifest> {
    let manifest = Manifest::load(&out.join(MANIFEST_FILE))?;
    if manifest.command != Command::Surgery || manifest.options.deflated {
        return Err(CliError::Config("only plain surgery runs can be resumed".into()));
    }
    let mut inv = Invocation::from_manifest(&manifest, out)?;
    inv.resume = true;
    inv.stop_after = stop_after;
    execute(&inv)
}

/// Re-executes a manifest into `out` and compares output digests.
pub fn replay(manifest_path: &Path, out: &Path, verify: bool) -> CliResult<Manifest> {
    let original = Manifest::load(manifest_path)?;
    let inv = Invocation::from_manifest(&original, out)?;
    let fresh = execute(&inv)?;
    if verify && original.status == Status::Complete {
        let mut names: Vec<String> = original.outputs.keys().chain(fresh.outputs.keys()).cloned().collect();
        names.sort();
        names.dedup();
        let differing: Vec<String> = names
            .into_iter()
            .filter(|n| original.outputs.get(n) != fresh.outputs.get(n))
            .collect();
        if !differing.is_empty() {
            return Err(CliError::ReplayMismatch(differing));
        }
    }
    Ok(fresh)
}

fn run_train(ctx: &mut Context) -> CliResult<Status> {
    let spec = ctx.spec()?;
    let t0 = Instant::now();
    let trained = train(&spec, ctx.data.train(), &ctx.train_config())?;
    ctx.report.record_seconds("train_seconds", t0.elapsed().as_secs_f64());
    ctx.write_checkpoint("checkpoint.paramvec", &trained.theta)?;
    let mut log = String::from("# epoch mean_loss\n");
    for (e, l) in trained.log.epoch_loss.iter().enumerate() {
        log.push_str(&format!("{e} {l:.10e}\n"));
    }
    ctx.report.write("train_log.tsv", log)?;
    let acc = per_class_accuracy(&spec, &trained.theta, ctx.data.sensitivity())?;
    ctx.report.write_toml("accuracy.toml", &SplitAccuracy { split: "sensitivity".into(), accuracy: acc })?;
    Ok(Status::Complete)
}

#[derive(Serialize, Deserialize)]
pub struct SplitAccuracy {
    pub split: String,
    pub accuracy: ClassAccuracy,
}

enum Operator {
    Model(ModelOracle),
    Spiked(SpikedOracle),
}

impl Operator {
    fn as_dyn(&self) -> &dyn HvpOracle {
        match self {
            Operator::Model(o) => o,
            Operator::Spiked(o) => o,
        }
    }
}

fn operator(ctx: &mut Context) -> CliResult<Operator> {
    Ok(match ctx.cfg.operator.source {
        OperatorSource::Spiked => Operator::Spiked(SpikedOracle::new(ctx.cfg.operator.spiked_spec())?),
        OperatorSource::Model => {
            let model = ctx.model()?;
            Operator::Model(ModelOracle::new(model.spec, model.theta, ctx.hvp_batch()?)?)
        }
    })
}

fn run_spectrum(ctx: &mut Context) -> CliResult<Status> {
    let s = ctx.cfg.spectrum.clone();
    let op = operator(ctx)?;
    let t0 = Instant::now();
    let window = top_eigenpairs(op.as_dyn(), s.order, s.order, s.seed)?;
    ctx.report.record_seconds("lanczos_seconds", t0.elapsed().as_secs_f64());
    let bulk_median = match (s.bulk_median, &op) {
        (Some(m), _) => m,
        (None, Operator::Spiked(o)) => o.bulk_median(),
        (None, Operator::Model(_)) => median(&window.eigenvalues[window.len() / 2..]),
    };
    let top = window.truncated(s.top_k);
    let report = SpectrumReport::new(&top, s.order, s.seed, bulk_median, s.gap_factor, 0.0);
    ctx.report.write("spectrum.toml", report.to_toml()?)?;
    let mut table = String::from("# index eigenvalue ratio label\n");
    for (i, ((l, r), lab)) in report.eigenvalues.iter().zip(&report.ratios).zip(&report.labels).enumerate() {
        table.push_str(&format!("{i} {l:.10e} {r:.6e} {}\n", lab.name()));
    }
    ctx.report.write("eigenvalues.tsv", table)?;
    Ok(Status::Complete)
}

#[derive(Serialize, Deserialize)]
pub struct SlqSummary {
    pub integral: f64,
    pub order: usize,
    pub probes: usize,
    pub sigma2: f64,
    pub grid_lo: f64,
    pub grid_hi: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceTable>,
}

fn run_slq(ctx: &mut Context) -> CliResult<Status> {
    let s = ctx.cfg.slq.clone();
    let op = operator(ctx)?;
    let t0 = Instant::now();
    let rules = probe_rules(op.as_dyn(), s.order, s.probes, s.seed)?;
    let grid = auto_grid(&rules, s.sigma2, s.grid_points)?;
    let estimate = DensityEstimate {
        density: density_from_rules(&rules, s.sigma2, &grid)?,
        grid,
        sigma2: s.sigma2,
        probes: s.probes,
        order: s.order,
    };
    ctx.report.record_seconds("slq_seconds", t0.elapsed().as_secs_f64());
    let convergence = if s.convergence_probes.is_empty() {
        None
    } else {
        Some(probe_convergence(op.as_dyn(), s.order, s.sigma2, &estimate.grid, &s.convergence_probes, s.seed)?)
    };
    ctx.report.write("density.tsv", estimate.to_plot_data())?;
    ctx.report.write_toml(
        "slq.toml",
        &SlqSummary {
            integral: estimate.integral(),
            order: s.order,
            probes: s.probes,
            sigma2: s.sigma2,
            grid_lo: estimate.grid[0],
            grid_hi: *estimate.grid.last().unwrap(),
            convergence,
        },
    )?;
    Ok(Status::Complete)
}

#[derive(Serialize, Deserialize)]
pub struct BasisSummary {
    pub source: String,
    pub eigenvalues: Vec<f64>,
    pub orth_error: f64,
}

impl From<&SpikeBasis> for BasisSummary {
    fn from(b: &SpikeBasis) -> Self {
        Self {
            source: b.source.clone(),
            eigenvalues: b.eigenvalues.clone(),
            orth_error: b.orth_error,
        }
    }
}

fn run_sensitivity(ctx: &mut Context) -> CliResult<Status> {
    let model = ctx.model()?;
    let (basis, matrix, _) = ctx.basis_and_matrix(&model)?;
    ctx.report.write_toml("sensitivity.toml", &matrix)?;
    ctx.report.write("sensitivity.tsv", matrix.to_plot_data())?;
    ctx.report.write_toml("basis.toml", &BasisSummary::from(&basis))?;
    Ok(Status::Complete)
}

fn run_rank(ctx: &mut Context) -> CliResult<Status> {
    let model = ctx.model()?;
    let (_, matrix, _) = ctx.basis_and_matrix(&model)?;
    let rank = effective_rank(&matrix)?;
    let mut table = String::from("# index singular_value energy_share\n");
    for (i, (s, e)) in rank.singular_values.iter().zip(&rank.energy_shares).enumerate() {
        table.push_str(&format!("{i} {s:.10e} {e:.10e}\n"));
    }
    ctx.report.write_toml("rank.toml", &rank)?;
    ctx.report.write("singular_values.tsv", table)?;
    Ok(Status::Complete)
}

fn state_dir(out: &Path) -> PathBuf {
    out.join(STATE_DIR)
}

fn theta_file(t: usize) -> String {
    format!("theta-{t}.paramvec")
}

/// Parameters go to a file named by iteration before the state file points
/// at them, so a kill at any moment leaves a consistent pair.
fn save_state(out: &Path, state: &SurgeryState) -> CliResult<()> {
    let dir = state_dir(out);
    let mut buf = Vec::new();
    write_param_vector(&mut buf, &state.theta, &toml::Table::new())?;
    write_atomic(&dir.join(theta_file(state.t)), &buf)?;
    let text = toml::to_string(state).map_err(|e| CliError::Config(e.to_string()))?;
    write_atomic(&dir.join(STATE_FILE), text.as_bytes())?;
    if state.t > 0 {
        let _ = fs::remove_file(dir.join(theta_file(state.t - 1)));
    }
    Ok(())
}

fn load_state(out: &Path) -> CliResult<Option<SurgeryState>> {
    let path = state_dir(out).join(STATE_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let mut state: SurgeryState =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    // the hex copy is authoritative for the parameters
    state.theta = load_checkpoint(&state_dir(out).join(theta_file(state.t)))?;
    Ok(Some(state))
}

#[derive(Serialize, Deserialize)]
pub struct IterationLog {
    pub iterations: Vec<IterationRecord>,
}

fn run_surgery_cmd(ctx: &mut Context) -> CliResult<Status> {
    let config = ctx.cfg.require_surgery()?.clone();
    let model = ctx.model()?;
    let out = ctx.inv.out.clone();
    let mut state = match (ctx.inv.resume, load_state(&out)?) {
        (true, Some(state)) => state,
        // killed before the first iteration finished
        (true, None) => SurgeryState::new(&model.spec, &model.theta, &ctx.data, &config)?,
        (false, _) => {
            let _ = fs::remove_dir_all(state_dir(&out));
            SurgeryState::new(&model.spec, &model.theta, &ctx.data, &config)?
        }
    };
    let stop_after = ctx.inv.stop_after;
    let t0 = Instant::now();
    run_iterations(&mut state, &model.spec, &ctx.data, &config, &mut |s| {
        save_state(&out, s).map_err(|e| spikesurgery::Error::InvalidArgument(e.to_string()))?;
        Ok(stop_after.is_none_or(|n| s.t < n))
    })?;
    ctx.report.record_seconds("surgery_seconds", t0.elapsed().as_secs_f64());
    if state.t < config.iterations {
        save_state(&out, &state)?;
        return Ok(Status::Interrupted);
    }
    let report: SurgeryReport = final_report(&model.spec, &model.theta, &state, &ctx.data)?;
    ctx.write_checkpoint("checkpoint.paramvec", &state.theta)?;
    ctx.report.write("trajectory.tsv", SurgeryReport::trajectory(&state.log))?;
    ctx.report.write_toml("iterations.toml", &IterationLog { iterations: state.log.clone() })?;
    ctx.report.write_toml("report.toml", &report)?;
    let deciles = decile_report(&report.heldout_before, &report.heldout_after, ctx.fixture.classes.min(10))?;
    ctx.report.write("deciles.tsv", decile_table(&deciles))?;
    match fs::remove_dir_all(state_dir(&out)) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(CliError::io(&state_dir(&out), e)),
        _ => {}
    }
    Ok(Status::Complete)
}

#[derive(Serialize, Deserialize)]
pub struct PhaseLog {
    pub phases: Vec<PhaseRecord>,
}

#[derive(Serialize, Deserialize)]
pub struct HeldoutComparison {
    pub heldout_before: ClassAccuracy,
    pub heldout_after: ClassAccuracy,
}

fn run_deflated(ctx: &mut Context) -> CliResult<Status> {
    let base = ctx.cfg.require_surgery()?.clone();
    let mut deflation = ctx.cfg.deflation.clone().unwrap_or(DeflationConfig {
        phases: 2,
        spikes_per_phase: base.spikes,
        iters_per_phase: base.iterations,
        max_vectors: 256,
    });
    if let Some(p) = ctx.inv.options.phases {
        deflation.phases = p;
    }
    let model = ctx.model()?;
    let t0 = Instant::now();
    let (theta, phases) = run_deflated_surgery(&model.spec, &model.theta, &ctx.data, &base, &deflation)?;
    ctx.report.record_seconds("surgery_seconds", t0.elapsed().as_secs_f64());
    let heldout = ctx.data.heldout(REPORT_ACCESS).clone();
    let cmp = HeldoutComparison {
        heldout_before: per_class_accuracy(&model.spec, &model.theta, &heldout)?,
        heldout_after: per_class_accuracy(&model.spec, &theta, &heldout)?,
    };
    ctx.write_checkpoint("checkpoint.paramvec", &theta)?;
    ctx.report.write_toml("phases.toml", &PhaseLog { phases })?;
    ctx.report.write_toml("report.toml", &cmp)?;
    Ok(Status::Complete)
}

#[derive(Serialize, Deserialize)]
pub struct WalkSummary {
    pub epsilon: f64,
    pub displacement: f64,
    pub max_loss_change: f64,
    pub max_class_change: f64,
    pub max_inner: f64,
    pub archived: usize,
    pub absorbed: bool,
    pub log: spikesurgery::experiments::BulkWalkLog,
}

fn run_bulkwalk(ctx: &mut Context) -> CliResult<Status> {
    let model = ctx.model()?;
    let config = ctx.cfg.bulkwalk.to_config(model.theta.norm());
    let t0 = Instant::now();
    let log = bulk_walk(&model.spec, &model.theta, &ctx.data, &config)?;
    ctx.report.record_seconds("walk_seconds", t0.elapsed().as_secs_f64());
    ctx.report.write("walk.tsv", log.to_table())?;
    ctx.report.write_toml(
        "walk.toml",
        &WalkSummary {
            epsilon: log.epsilon,
            displacement: log.displacement,
            max_loss_change: log.max_loss_change(),
            max_class_change: log.max_class_change(),
            max_inner: log.max_inner(),
            archived: log.archived,
            absorbed: log.absorbed,
            log,
        },
    )?;
    Ok(Status::Complete)
}

#[derive(Serialize, Deserialize)]
pub struct SweepSummary {
    pub correlation: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub additive: Option<AdditiveFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power_law: Option<AdditiveFit>,
    pub points: Vec<SweepPoint>,
}

fn run_linearize(ctx: &mut Context) -> CliResult<Status> {
    let sweep = ctx.cfg.require_linearize()?.clone();
    let model = ctx.model()?;
    let (basis, matrix, split) = ctx.basis_and_matrix(&model)?;
    let t0 = Instant::now();
    let log = linearization_sweep(&model.spec, &model.theta, &split, &basis, &matrix, &sweep)?;
    ctx.report.record_seconds("sweep_seconds", t0.elapsed().as_secs_f64());
    ctx.report.write("sweep.tsv", log.to_plot_data())?;
    ctx.report.write("sensitivity.tsv", matrix.to_plot_data())?;
    ctx.report.write_toml(
        "fit.toml",
        &SweepSummary {
            correlation: log.correlation,
            additive: log.additive,
            power_law: log.power_law,
            points: log.points,
        },
    )?;
    Ok(Status::Complete)
}

#[derive(Serialize, Deserialize)]
pub struct StabilitySummary {
    pub sizes: Vec<usize>,
    pub eigenvalues: Vec<Vec<f64>>,
    pub reports: Vec<spikesurgery::lanczos::StabilityReport>,
}

fn run_stability(ctx: &mut Context) -> CliResult<Status> {
    let config = ctx.cfg.require_stability()?.clone();
    let model = ctx.model()?;
    let study = stability_study(&model.spec, &model.theta, ctx.data.train(), &config)?;
    ctx.report.write("eigenvalues.tsv", study.eigenvalue_table())?;
    ctx.report.write("angles.tsv", study.angle_table())?;
    let timings = toml::Value::try_from(&study.timings).map_err(|e| CliError::Config(e.to_string()))?;
    ctx.report.record_timing("stability", timings);
    ctx.report.write_toml(
        "stability.toml",
        &StabilitySummary {
            sizes: study.sizes,
            eigenvalues: study.eigenvalues,
            reports: study.reports,
        },
    )?;
    Ok(Status::Complete)
}

fn run_baselines(ctx: &mut Context) -> CliResult<Status> {
    let b = ctx.cfg.baselines.clone();
    let config = BaselineConfig {
        focal_gamma: b.focal_gamma,
        finetune: TrainConfig {
            epochs: b.finetune_epochs,
            lr: b.finetune_lr,
            seed: ctx.cfg.seed,
            ..TrainConfig::default()
        },
        tau_values: b.tau_values,
        logit_tau: b.logit_tau,
        surgery: ctx.cfg.require_surgery()?.clone(),
    };
    let model = ctx.model()?;
    let t0 = Instant::now();
    let table = compare_baselines(&model.spec, &model.theta, &ctx.data, &config)?;
    ctx.report.record_seconds("baselines_seconds", t0.elapsed().as_secs_f64());
    ctx.report.write("comparison.tsv", table.to_table())?;
    ctx.report.write_toml("comparison.toml", &table)?;
    Ok(Status::Complete)
}
