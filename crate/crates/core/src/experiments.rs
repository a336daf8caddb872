//! Configuration-driven runs, error evaluation against the manufactured
//! solution, table sweeps, rate fitting and plotting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    observation_points_default, sample_uniform, Classification, Geometry, SamplingMode, SamplingPlan,
    SpaceTimePoint, Subdomain,
};
use crate::network::{write_checkpoint, NetworkError};
use crate::physics::{
    exact_solution, pde_residual, synthesize_forcing, Field, FieldJets, FluidParams, ProblemKind, ProblemSpec,
    SolidParams,
};
use crate::training::{
    default_weights, init_networks, posterior_indicator, train, write_history, FieldSource, LossBreakdown,
    LossWeights, NetworkPair, Term, TrainConfig, TrainError, TrainOutcome, TrainStatus, TrainingSet,
};

/// Environment variable that overrides the built-in default seed.
pub const SEED_ENV: &str = "MESHFREE_SEED";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ExperimentError {
    /// Divergence, NaN and overflow as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            ExperimentError::Diverged { .. } => true,
            ExperimentError::Train(e) => matches!(
                e,
                TrainError::NonFiniteGradient { .. }
                    | TrainError::NonFiniteLoss { .. }
                    | TrainError::Network(NetworkError::Overflow { .. })
                    | TrainError::Physics(crate::physics::PhysicsError::NonFinite(_))
            ),
            _ => false,
        }
    }
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    pub sampling: SamplingSection,
    pub network: NetworkSection,
    pub training: TrainingSection,
    pub weights: WeightsSection,
    pub evaluation: EvaluationSection,
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemSection {
    pub kind: ProblemKind,
    pub rho1: f64,
    pub mu1: f64,
    pub rho2: f64,
    pub mu2: f64,
    pub rho_s: f64,
    pub young: f64,
    pub poisson: f64,
    pub divergent_outer_velocity: bool,
    pub include_theory_terms: bool,
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self::from_spec(&ProblemSpec::new(ProblemKind::TwoPhaseFlow))
    }
}

impl ProblemSection {
    pub fn from_spec(s: &ProblemSpec) -> Self {
        Self {
            kind: s.kind,
            rho1: s.fluid1.rho,
            mu1: s.fluid1.mu,
            rho2: s.fluid2.rho,
            mu2: s.fluid2.mu,
            rho_s: s.solid.rho_s,
            young: s.solid.young,
            poisson: s.solid.poisson,
            divergent_outer_velocity: s.divergent_outer_velocity,
            include_theory_terms: s.include_theory_terms,
        }
    }

    pub fn spec(&self) -> ProblemSpec {
        ProblemSpec {
            kind: self.kind,
            fluid1: FluidParams { rho: self.rho1, mu: self.mu1 },
            fluid2: FluidParams { rho: self.rho2, mu: self.mu2 },
            solid: SolidParams {
                rho_s: self.rho_s,
                young: self.young,
                poisson: self.poisson,
            },
            divergent_outer_velocity: self.divergent_outer_velocity,
            include_theory_terms: self.include_theory_terms,
        }
    }
}

/// `"none"`, `"default"` (the five symmetric points) or explicit `[x, y]`
/// pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Observations {
    Named(String),
    Points(Vec<[f64; 2]>),
}

impl Observations {
    pub fn resolve(&self) -> Result<Vec<[f64; 2]>, ExperimentError> {
        match self {
            Observations::Named(s) if s == "none" => Ok(Vec::new()),
            Observations::Named(s) if s == "default" => Ok(observation_points_default()),
            Observations::Named(s) => Err(ExperimentError::Config(format!(
                "sampling.observations: expected \"none\", \"default\" or a list of points, got {s:?}"
            ))),
            Observations::Points(p) => Ok(p.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSection {
    /// `[n_x, n_y, n_t]` per subdomain.
    pub interior: [usize; 3],
    /// `[points per edge, time levels]`.
    pub boundary: [usize; 2],
    /// `[n_θ, n_t]`.
    pub interface: [usize; 2],
    /// `[n_x, n_y]` per subdomain.
    pub initial: [usize; 2],
    pub mode: SamplingMode,
    pub observations: Observations,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            interior: [10, 10, 5],
            boundary: [4, 5],
            interface: [4, 5],
            initial: [4, 4],
            mode: SamplingMode::Random,
            observations: Observations::Named("none".into()),
        }
    }
}

impl SamplingSection {
    pub fn plan(&self, seed: u64) -> Result<SamplingPlan, ExperimentError> {
        Ok(SamplingPlan {
            interior: self.interior,
            boundary_per_edge: self.boundary[0],
            boundary_times: self.boundary[1],
            interface: self.interface,
            initial: self.initial,
            observations: self.observations.resolve()?,
            mode: self.mode,
            seed,
        })
    }

    fn set_table_row(&mut self, n: usize, nt: usize, k: usize) {
        self.interior = [n, n, nt];
        self.boundary = [k, nt];
        self.interface = [k, nt];
        self.initial = [k, k];
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub hidden: Vec<usize>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self { hidden: vec![50, 50, 50] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Epoch count used when `reduced` is set (CI-scale runs).
    pub reduced_epochs: usize,
    pub reduced: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: Option<u64>,
    pub log_interval: usize,
    pub deterministic: bool,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            reduced_epochs: 5000,
            reduced: false,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            seed: None,
            log_interval: t.log_interval,
            deterministic: t.deterministic,
        }
    }
}

impl TrainingSection {
    pub fn effective_epochs(&self) -> usize {
        if self.reduced {
            self.reduced_epochs
        } else {
            self.epochs
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.effective_epochs(),
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            seed,
            log_interval: self.log_interval,
            deterministic: self.deterministic,
        }
    }
}

/// `mode = "auto"` scales each term by its largest coefficient,
/// `"uniform"` uses 1, and `"normalized"` uses 1 per term but divides each
/// residual component by its own coefficients (see
/// [`crate::physics::normalization`]). Per-term keys override any mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightsSection {
    pub mode: String,
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    pub gamma: Option<f64>,
    pub b1: Option<f64>,
    pub b2: Option<f64>,
    pub i1: Option<f64>,
    pub i2: Option<f64>,
    pub obs: Option<f64>,
}

impl Default for WeightsSection {
    fn default() -> Self {
        Self {
            mode: "auto".into(),
            l1: None,
            l2: None,
            gamma: None,
            b1: None,
            b2: None,
            i1: None,
            i2: None,
            obs: None,
        }
    }
}

impl WeightsSection {
    pub fn normalized(&self) -> bool {
        self.mode == "normalized"
    }

    pub fn resolve(&self, spec: &ProblemSpec) -> Result<LossWeights, ExperimentError> {
        let mut w = match self.mode.as_str() {
            "auto" => default_weights(spec),
            "uniform" | "normalized" => LossWeights::uniform(),
            m => {
                return Err(ExperimentError::Config(format!(
                    "weights.mode: expected \"auto\", \"uniform\" or \"normalized\", got {m:?}"
                )))
            }
        };
        let overrides = [
            (Term::L1, self.l1),
            (Term::L2, self.l2),
            (Term::Gamma, self.gamma),
            (Term::B1, self.b1),
            (Term::B2, self.b2),
            (Term::I1, self.i1),
            (Term::I2, self.i2),
            (Term::Obs, self.obs),
        ];
        for (t, v) in overrides {
            if let Some(v) = v {
                w.set(t, v);
            }
        }
        w.validate()?;
        Ok(w)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    /// `[n_x, n_y, n_t]` of the uniform evaluation grid.
    pub grid: [usize; 3],
    pub pressure_gauge: PressureGauge,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            grid: [61, 61, 11],
            pressure_gauge: PressureGauge::Mean,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("runs/default") }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            ExperimentError::Config(m) => ExperimentError::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        let p = &self.problem;
        for (name, v) in [("rho1", p.rho1), ("mu1", p.mu1), ("rho2", p.rho2), ("mu2", p.mu2), ("rho_s", p.rho_s), ("young", p.young)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("problem.{name} must be positive, got {v}"));
            }
        }
        if !(p.poisson > -1.0 && p.poisson < 0.5) {
            return bad(format!("problem.poisson must lie in (-1, 0.5), got {}", p.poisson));
        }
        if self.network.hidden.is_empty() || self.network.hidden.contains(&0) {
            return bad("network.hidden must be a nonempty list of positive widths".into());
        }
        if self.evaluation.grid.iter().any(|&n| n < 2) {
            return bad("evaluation.grid entries must be at least 2".into());
        }
        self.sampling
            .plan(0)?
            .validate()
            .map_err(|e| ExperimentError::Config(format!("sampling: {e}")))?;
        self.weights.resolve(&p.spec())?;
        self.training.train_config(0).validate()?;
        Ok(())
    }

    /// Seed precedence: explicit argument, `training.seed`, the
    /// environment override, then 0.
    pub fn resolve_seed(&self, cli: Option<u64>) -> Result<u64, ExperimentError> {
        if let Some(s) = cli.or(self.training.seed) {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| ExperimentError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
            Err(_) => Ok(0),
        }
    }
}

// ---------------------------------------------------------------------------
// Error evaluation

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldError {
    /// Field name with subdomain number, e.g. `vx1`, `uy2`.
    pub field: String,
    /// `‖e‖ / ‖u‖` on the grid (absolute `‖e‖` if `‖u‖ = 0`).
    pub relative_l2: f64,
    pub error_norm: f64,
    pub exact_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridErrors {
    pub fields: Vec<FieldError>,
    /// `sqrt(Σ‖e‖² / Σ‖u‖²)` over all fields, after the pressure gauge.
    pub combined: f64,
    /// The same without any pressure shift.
    pub combined_raw: f64,
    /// Pressure shift removed at each time level (zeros if none).
    pub pressure_offsets: Vec<f64>,
    pub points: [usize; 2],
}

impl GridErrors {
    pub fn get(&self, field: &str) -> Option<f64> {
        self.fields.iter().find(|f| f.field == field).map(|f| f.relative_l2)
    }
}

/// Uniform grid over the box and `[0, t_end]`, endpoints included, split by
/// subdomain; points on the interface are dropped.
pub fn evaluation_grid(geom: &Geometry, n: [usize; 3]) -> [Vec<SpaceTimePoint>; 2] {
    let lin = |a: f64, b: f64, k: usize, i: usize| a + (b - a) * i as f64 / (k - 1) as f64;
    let mut out = [Vec::new(), Vec::new()];
    for it in 0..n[2] {
        let t = lin(0.0, geom.t_end, n[2], it);
        for iy in 0..n[1] {
            let y = lin(geom.box_min, geom.box_max, n[1], iy);
            for ix in 0..n[0] {
                let x = lin(geom.box_min, geom.box_max, n[0], ix);
                let p = SpaceTimePoint::new(x, y, t);
                if let Classification::In(sub) = geom.classify(&p) {
                    out[sub.index()].push(p);
                }
            }
        }
    }
    out
}

/// How the pressure's additive constant is treated when measuring errors.
///
/// In two-phase flow every condition sees pressure only through its
/// gradient or the jump `p₁ − p₂`, so a common `c(t)` added to both
/// pressures leaves the loss unchanged. `Mean` removes the grid-mean
/// pressure difference at each time level before measuring; `None`
/// compares raw values. FSI pressures are fixed by the dynamic condition
/// and are never shifted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PressureGauge {
    #[default]
    Mean,
    None,
}

/// Relative L2 errors of `source` against the manufactured solution of
/// `spec` on a uniform grid, with the default pressure gauge.
pub fn evaluate_error(source: &dyn FieldSource, spec: &ProblemSpec, grid: [usize; 3]) -> Result<GridErrors, TrainError> {
    evaluate_error_with(source, spec, grid, PressureGauge::default())
}

pub fn evaluate_error_with(
    source: &dyn FieldSource,
    spec: &ProblemSpec,
    grid: [usize; 3],
    gauge: PressureGauge,
) -> Result<GridErrors, TrainError> {
    let pts = evaluation_grid(&Geometry::default(), grid);
    let subs = [Subdomain::Outer, Subdomain::Inner];
    let mut exact = [Vec::new(), Vec::new()];
    let mut approx = [Vec::new(), Vec::new()];
    for sub in subs {
        let i = sub.index();
        let layout = spec.layout(sub);
        approx[i] = source.field_values(sub, &pts[i])?;
        if let Some(a) = approx[i].iter().find(|a| a.len() != layout.len()) {
            return Err(TrainError::OutputWidth {
                sub: sub.number(),
                expected: layout.len(),
                got: a.len(),
            });
        }
        exact[i] = pts[i]
            .iter()
            .map(|p| exact_solution(spec, sub, p).values().iter().map(|j| j.value).collect::<Vec<f64>>())
            .collect();
    }

    // Per-time-level mean of p_approx − p_exact over both subdomains.
    let time_level = |t: f64| ((t / Geometry::default().t_end) * (grid[2] - 1) as f64).round() as usize;
    let mut offsets = vec![0.0; grid[2]];
    if gauge == PressureGauge::Mean && spec.kind == ProblemKind::TwoPhaseFlow {
        let mut counts = vec![0usize; grid[2]];
        for sub in subs {
            let i = sub.index();
            let k = spec.layout(sub).iter().position(|f| *f == Field::P).expect("fluid has pressure");
            for (p, (a, e)) in pts[i].iter().zip(approx[i].iter().zip(&exact[i])) {
                let l = time_level(p.t);
                offsets[l] += a[k] - e[k];
                counts[l] += 1;
            }
        }
        for (o, c) in offsets.iter_mut().zip(&counts) {
            if *c > 0 {
                *o /= *c as f64;
            }
        }
    }

    let mut fields = Vec::new();
    let (mut err_sum, mut raw_sum, mut ref_sum) = (0.0, 0.0, 0.0);
    for sub in subs {
        let i = sub.index();
        let layout = spec.layout(sub);
        let mut e2 = vec![0.0; layout.len()];
        let mut r2 = vec![0.0; layout.len()];
        let mut u2 = vec![0.0; layout.len()];
        for (p, (a, e)) in pts[i].iter().zip(approx[i].iter().zip(&exact[i])) {
            for (k, f) in layout.iter().enumerate() {
                let shift = if *f == Field::P { offsets[time_level(p.t)] } else { 0.0 };
                e2[k] += (a[k] - shift - e[k]).powi(2);
                r2[k] += (a[k] - e[k]).powi(2);
                u2[k] += e[k] * e[k];
            }
        }
        for (k, f) in layout.iter().enumerate() {
            err_sum += e2[k];
            raw_sum += r2[k];
            ref_sum += u2[k];
            let (en, un) = (e2[k].sqrt(), u2[k].sqrt());
            fields.push(FieldError {
                field: format!("{}{}", f.name(), sub.number()),
                relative_l2: if un > 0.0 { en / un } else { en },
                error_norm: en,
                exact_norm: un,
            });
        }
    }
    let ratio = |e: f64| if ref_sum > 0.0 { (e / ref_sum).sqrt() } else { e.sqrt() };
    Ok(GridErrors {
        fields,
        combined: ratio(err_sum),
        combined_raw: ratio(raw_sum),
        pressure_offsets: offsets,
        points: [pts[0].len(), pts[1].len()],
    })
}

// ---------------------------------------------------------------------------
// Single runs

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub problem: String,
    pub seed: u64,
    pub epochs: usize,
    pub status: String,
    pub approx_error: f64,
    pub loss_error: f64,
    pub posterior_indicator: f64,
    pub wall_seconds: f64,
    pub loss_terms: BTreeMap<String, f64>,
    pub errors: GridErrors,
}

fn status_name(s: TrainStatus) -> String {
    match s {
        TrainStatus::Completed => "ok".into(),
        TrainStatus::Diverged { epoch } => format!("diverged@{epoch}"),
    }
}

fn loss_terms(l: &LossBreakdown) -> BTreeMap<String, f64> {
    Term::ALL.iter().map(|&t| (t.name().to_string(), l.get(t))).collect()
}

pub struct RunResult {
    pub report: ErrorReport,
    pub outcome: TrainOutcome,
}

/// Samples, trains and evaluates one configuration. A diverged run is
/// returned, not raised, so callers can still write its history.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<RunResult, ExperimentError> {
    cfg.validate()?;
    let start = Instant::now();
    let spec = cfg.problem.spec();
    let plan = cfg.sampling.plan(seed)?;
    let mut set = TrainingSet::from_plan(spec.clone(), &Geometry::default(), &plan)?;
    set.normalized = cfg.weights.normalized();
    let weights = cfg.weights.resolve(&spec)?;
    let nets = init_networks(&spec, &cfg.network.hidden, seed)?;
    let tc = cfg.training.train_config(seed);
    log::info!(
        "{} seed {seed}: {} epochs, {} + {} batch points",
        spec.kind,
        tc.epochs,
        set.batch_points(Subdomain::Outer).len(),
        set.batch_points(Subdomain::Inner).len()
    );
    let outcome = train(&set, nets, &weights, &tc)?;
    let errors = evaluate_error_with(&NetworkPair(&outcome.nets), &spec, cfg.evaluation.grid, cfg.evaluation.pressure_gauge)?;
    let loss = outcome.final_loss();
    let report = ErrorReport {
        problem: spec.kind.to_string(),
        seed,
        epochs: outcome.history.last().map_or(0, |h| h.epoch),
        status: status_name(outcome.status),
        approx_error: errors.combined,
        loss_error: loss.total,
        posterior_indicator: posterior_indicator(&loss),
        wall_seconds: start.elapsed().as_secs_f64(),
        loss_terms: loss_terms(&loss),
        errors,
    };
    Ok(RunResult { report, outcome })
}

/// Writes `history.csv`, `checkpoint.txt` and `report.toml` into `dir`.
pub fn write_run_outputs(dir: &Path, run: &RunResult) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir)?;
    write_history(fs::File::create(dir.join("history.csv"))?, &run.outcome.history)?;
    let nets = &run.outcome.nets;
    let mut ck = std::io::BufWriter::new(fs::File::create(dir.join("checkpoint.txt"))?);
    write_checkpoint(&mut ck, &[&nets[0], &nets[1]]).map_err(TrainError::from)?;
    ck.flush()?;
    let report = toml::to_string(&run.report).map_err(|e| ExperimentError::Config(e.to_string()))?;
    fs::write(dir.join("report.toml"), report)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Sweeps

/// Interior/time/edge counts `(n, n_t, k)` of the twelve table rows.
pub const TABLE_ROWS: [(usize, usize, usize); 12] = [
    (10, 5, 4),
    (10, 5, 8),
    (10, 5, 16),
    (10, 5, 32),
    (20, 10, 4),
    (20, 10, 8),
    (20, 10, 16),
    (20, 10, 32),
    (40, 20, 4),
    (40, 20, 8),
    (40, 20, 16),
    (40, 20, 32),
];

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub problem: ProblemSpec,
    pub observations: bool,
    /// `(n, n_t, k)` rows.
    pub rows: Vec<(usize, usize, usize)>,
    pub seeds: Vec<u64>,
}

impl SweepSpec {
    /// Problem and rows of table `1..=7`.
    pub fn table(table: u8, seeds: Vec<u64>) -> Result<Self, ExperimentError> {
        let (problem, observations) = match table {
            1 => (ProblemSpec::two_phase(1.0, 1.0), false),
            2 => (ProblemSpec::two_phase(10.0, 10.0), false),
            3 => (ProblemSpec::two_phase(100.0, 100.0), false),
            4 => (ProblemSpec::two_phase(1000.0, 1000.0), false),
            5 => (ProblemSpec::two_phase(1000.0, 1000.0), true),
            6 => (ProblemSpec::new(ProblemKind::FsiWave), false),
            7 => (ProblemSpec::new(ProblemKind::FsiParabolic), false),
            t => return Err(ExperimentError::Usage(format!("no table preset {t}; expected 1-7"))),
        };
        let s = Self {
            problem,
            observations,
            rows: TABLE_ROWS.to_vec(),
            seeds,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.rows.is_empty() || self.seeds.is_empty() {
            return Err(ExperimentError::Usage("a sweep needs at least one row and one seed".into()));
        }
        Ok(())
    }

    /// `base` with this sweep's problem and the given row applied.
    pub fn row_config(&self, base: &ExperimentConfig, row: (usize, usize, usize)) -> ExperimentConfig {
        let mut c = base.clone();
        let include = c.problem.include_theory_terms;
        c.problem = ProblemSection::from_spec(&self.problem);
        c.problem.include_theory_terms = include;
        c.sampling.set_table_row(row.0, row.1, row.2);
        c.sampling.observations = Observations::Named(if self.observations { "default" } else { "none" }.into());
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub problem: String,
    pub rho2_or_rhos: f64,
    #[serde(rename = "mu2_or_E")]
    pub mu2_or_e: f64,
    #[serde(rename = "M_L")]
    pub m_l: usize,
    #[serde(rename = "M_B")]
    pub m_b: usize,
    #[serde(rename = "M_Gamma")]
    pub m_gamma: usize,
    #[serde(rename = "M_I")]
    pub m_i: usize,
    pub seed: u64,
    pub approx_error: f64,
    pub loss_error: f64,
    pub wall_seconds: f64,
    /// `ok`, `diverged@<epoch>` or `error: <message>`.
    pub status: String,
}

impl SweepRow {
    /// Boundary + interface + initial points (the plot abscissa).
    pub fn data_points(&self) -> usize {
        self.m_b + self.m_gamma + self.m_i
    }
}

fn sweep_row_stub(cfg: &ExperimentConfig, seed: u64) -> SweepRow {
    let p = &cfg.problem;
    let s = &cfg.sampling;
    let (a, b) = if p.kind.is_fsi() { (p.rho_s, p.young) } else { (p.rho2, p.mu2) };
    SweepRow {
        problem: p.kind.to_string(),
        rho2_or_rhos: a,
        mu2_or_e: b,
        m_l: s.interior.iter().product(),
        m_b: s.boundary[0] * 4 * s.boundary[1],
        m_gamma: s.interface[0] * s.interface[1],
        m_i: s.initial[0] * s.initial[1],
        seed,
        approx_error: f64::NAN,
        loss_error: f64::NAN,
        wall_seconds: 0.0,
        status: String::new(),
    }
}

/// Runs every row for every seed. Failures are recorded in the row and
/// the sweep continues. `on_row` sees each row as it completes.
pub fn run_sweep(
    base: &ExperimentConfig,
    spec: &SweepSpec,
    mut on_row: impl FnMut(&SweepRow, Option<&RunResult>),
) -> Result<Vec<SweepRow>, ExperimentError> {
    spec.validate()?;
    let mut rows = Vec::new();
    for &row in &spec.rows {
        for &seed in &spec.seeds {
            let cfg = spec.row_config(base, row);
            let mut r = sweep_row_stub(&cfg, seed);
            let start = Instant::now();
            let res = run_experiment(&cfg, seed);
            r.wall_seconds = start.elapsed().as_secs_f64();
            match &res {
                Ok(run) => {
                    r.approx_error = run.report.approx_error;
                    r.loss_error = run.report.loss_error;
                    r.status = run.report.status.clone();
                }
                Err(e) => {
                    log::warn!("sweep row {row:?} seed {seed} failed: {e}");
                    r.status = format!("error: {e}");
                }
            }
            on_row(&r, res.as_ref().ok());
            rows.push(r);
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(w: W, rows: &[SweepRow]) -> Result<(), ExperimentError> {
    let mut wr = csv::WriterBuilder::new().has_headers(true).from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_sweep_csv<R: std::io::Read>(r: R) -> Result<Vec<SweepRow>, ExperimentError> {
    let mut rd = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for rec in rd.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Rates and quadrature

/// Negated least-squares slope of `log error` against `log M`.
pub fn fit_rate(sizes: &[f64], errors: &[f64]) -> Result<f64, ExperimentError> {
    if sizes.len() != errors.len() {
        return Err(ExperimentError::Usage("sizes and errors differ in length".into()));
    }
    if sizes.len() < 3 {
        return Err(ExperimentError::Usage("fit_rate needs at least three points".into()));
    }
    if sizes.iter().chain(errors).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(ExperimentError::Usage("fit_rate needs positive finite values".into()));
    }
    let n = sizes.len() as f64;
    let lx: Vec<f64> = sizes.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(ExperimentError::Usage("fit_rate needs at least two distinct sizes".into()));
    }
    Ok(-sxy / sxx)
}

/// Test integrand `(x−1.5)² + (y−1.5)² + t` for the quadrature study.
pub fn quadrature_integrand(p: &SpaceTimePoint) -> f64 {
    (p.x - 1.5).powi(2) + (p.y - 1.5).powi(2) + p.t
}

/// Exact mean of [`quadrature_integrand`] over `Ω₁ × [0, 1]`.
pub fn quadrature_exact_mean() -> f64 {
    use std::f64::consts::PI;
    // ∫_box r² = 13.5, ∫_disk r² = π/2, |Ω₁| = 9 − π, mean of t is 1/2.
    (13.5 - PI / 2.0) / (9.0 - PI) + 0.5
}

/// Root-mean-square error of the sample mean over `repeats` independent
/// Monte-Carlo draws of `m` points in `Ω₁ × [0, 1]`, for each `m`.
pub fn quadrature_errors(sizes: &[usize], repeats: usize, seed: u64) -> Vec<f64> {
    let geom = Geometry::default();
    let exact = quadrature_exact_mean();
    let mut seeder = ChaCha8Rng::seed_from_u64(seed);
    sizes
        .iter()
        .map(|&m| {
            let mse: f64 = (0..repeats)
                .map(|_| {
                    let pts = sample_uniform(&geom, Subdomain::Outer, m, seeder.gen());
                    let mean = pts.iter().map(quadrature_integrand).sum::<f64>() / m as f64;
                    (mean - exact).powi(2)
                })
                .sum::<f64>()
                / repeats as f64;
            mse.sqrt()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Plot

const PLOT_COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Log-log SVG of approximation error against boundary + interface +
/// initial point count, one series per `M_L`, with a reference line of
/// slope `-slope` through the first plotted point.
pub fn emit_plot(rows: &[SweepRow], slope: f64) -> Result<String, ExperimentError> {
    let usable: Vec<&SweepRow> = rows
        .iter()
        .filter(|r| r.approx_error > 0.0 && r.approx_error.is_finite() && r.data_points() > 0)
        .collect();
    if usable.is_empty() {
        return Err(ExperimentError::Usage("no plottable rows".into()));
    }
    let mut groups: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for r in &usable {
        groups
            .entry(r.m_l)
            .or_default()
            .push(((r.data_points() as f64).log10(), r.approx_error.log10()));
    }
    let (x0, y0) = groups.values().next().unwrap()[0];
    let xs = usable.iter().map(|r| (r.data_points() as f64).log10());
    let (mut xmin, mut xmax) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if xmax - xmin < 1e-9 {
        xmin -= 0.5;
        xmax += 0.5;
    }
    let ref_y = |x: f64| y0 - slope * (x - x0);
    let ys = usable
        .iter()
        .map(|r| r.approx_error.log10())
        .chain([ref_y(xmin), ref_y(xmax)]);
    let (mut ymin, mut ymax) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    if ymax - ymin < 1e-9 {
        ymin -= 0.5;
        ymax += 0.5;
    }
    let (w, h, m) = (640.0, 480.0, 70.0);
    let px = |x: f64| m + (x - xmin) / (xmax - xmin) * (w - 2.0 * m);
    let py = |y: f64| h - m - (y - ymin) / (ymax - ymin) * (h - 2.0 * m);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * m,
        h - 2.0 * m
    );
    for e in (xmin.ceil() as i32)..=(xmax.floor() as i32) {
        let x = px(e as f64);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/>"#, h - m, h - m + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">1e{e}</text>"#, h - m + 18.0);
    }
    for e in (ymin.ceil() as i32)..=(ymax.floor() as i32) {
        let y = py(e as f64);
        let _ = writeln!(s, r#"<line x1="{}" y1="{y:.2}" x2="{m}" y2="{y:.2}" stroke="black"/>"#, m - 5.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">1e{e}</text>"#, m - 8.0, y + 4.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">boundary + interface + initial points</text>"#,
        w / 2.0,
        h - 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">approximation error</text>"#,
        h / 2.0,
        h / 2.0
    );
    let _ = writeln!(
        s,
        r#"<line class="reference" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="6 4"/>"#,
        px(xmin),
        py(ref_y(xmin)),
        px(xmax),
        py(ref_y(xmax))
    );
    let mut legend_y = m + 15.0;
    for (gi, (ml, pts)) in groups.iter().enumerate() {
        let c = PLOT_COLORS[gi % PLOT_COLORS.len()];
        let mut sorted = pts.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let path: Vec<String> = sorted.iter().map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{c}"/>"#, path.join(" "));
        for (x, y) in &sorted {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{c}"/>"#, px(*x), py(*y));
        }
        let _ = writeln!(
            s,
            r#"<text class="legend" x="{}" y="{legend_y}" fill="{c}">M_L = {ml}</text>"#,
            w - m - 120.0
        );
        legend_y += 16.0;
    }
    let _ = writeln!(
        s,
        r#"<text class="legend" x="{}" y="{legend_y}" fill="gray">slope -{slope}</text>"#,
        w - m - 120.0
    );
    s.push_str("</svg>\n");
    Ok(s)
}

// ---------------------------------------------------------------------------
// Grid dumps

/// Exact and approximate fields on the `n_x × n_y` grid at time `t`, as CSV
/// `x,y,t,subdomain,field,exact,approx`.
pub fn write_field_snapshot<W: Write>(
    w: W,
    source: &dyn FieldSource,
    spec: &ProblemSpec,
    n: [usize; 2],
    t: f64,
) -> Result<(), ExperimentError> {
    let pts = evaluation_grid(&Geometry { t_end: t, ..Geometry::default() }, [n[0], n[1], 2]);
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["x", "y", "t", "subdomain", "field", "exact", "approx"])?;
    for sub in [Subdomain::Outer, Subdomain::Inner] {
        let layer: Vec<SpaceTimePoint> = pts[sub.index()].iter().filter(|p| p.t == t).copied().collect();
        let approx = source.field_values(sub, &layer)?;
        for (p, a) in layer.iter().zip(&approx) {
            let exact = exact_solution(spec, sub, p).values();
            for (k, f) in spec.layout(sub).iter().enumerate() {
                wr.write_record([
                    p.x.to_string(),
                    p.y.to_string(),
                    p.t.to_string(),
                    sub.number().to_string(),
                    f.name().to_string(),
                    exact[k].value.to_string(),
                    a[k].to_string(),
                ])?;
            }
        }
    }
    wr.flush()?;
    Ok(())
}

/// Field-equation residual components of `source` on a uniform grid, as CSV
/// `x,y,t,subdomain,component,value`.
pub fn write_residual_grid<W: Write>(
    w: W,
    source: &dyn FieldSource,
    spec: &ProblemSpec,
    n: [usize; 3],
) -> Result<(), ExperimentError> {
    let pts = evaluation_grid(&Geometry::default(), n);
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["x", "y", "t", "subdomain", "component", "value"])?;
    for sub in [Subdomain::Outer, Subdomain::Inner] {
        let jets = source.field_jets(sub, &pts[sub.index()])?;
        for (p, j) in pts[sub.index()].iter().zip(&jets) {
            let f = FieldJets::from_outputs(spec.layout(sub), j).map_err(TrainError::from)?;
            let forcing = synthesize_forcing(spec, sub, p);
            for c in pde_residual(spec, sub, &f, forcing).map_err(TrainError::from)? {
                wr.write_record([
                    p.x.to_string(),
                    p.y.to_string(),
                    p.t.to_string(),
                    sub.number().to_string(),
                    format!("{:?}", c.kind),
                    c.value.value.to_string(),
                ])?;
            }
        }
    }
    wr.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Self-checks

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.value < self.tolerance
    }
}

/// Sampling plan with about a thousand points per loss term.
pub fn oracle_plan(kind: ProblemKind, seed: u64) -> SamplingPlan {
    SamplingPlan {
        interior: [10, 10, 10],
        boundary_per_edge: 50,
        boundary_times: 5,
        interface: [50, 20],
        initial: [32, 32],
        observations: if kind.is_fsi() { Vec::new() } else { observation_points_default() },
        mode: SamplingMode::Random,
        seed,
    }
}

/// Largest residual component and largest loss term of the manufactured
/// solution of `kind` on [`oracle_plan`].
pub fn oracle_check(kind: ProblemKind, seed: u64) -> Result<(f64, f64), ExperimentError> {
    use crate::training::{assemble_loss, residual_components, ExactSource};
    let spec = ProblemSpec::new(kind);
    let set = TrainingSet::from_plan(spec.clone(), &Geometry::default(), &oracle_plan(kind, seed))?;
    let src = ExactSource(&spec);
    let max_comp = residual_components(&set, &src)?
        .iter()
        .flat_map(|(_, _, r)| r.iter().map(|c| c.value.value.abs()))
        .fold(0.0, f64::max);
    let mut w = LossWeights::uniform();
    if !kind.is_fsi() {
        w.set(Term::Obs, 1.0);
    }
    let loss = assemble_loss(&set, &src, &w)?;
    Ok((max_comp, loss.terms.iter().copied().fold(0.0, f64::max)))
}

/// Largest mixed relative error `|a − b| / max(1, |b|)` between network
/// jets and central differences (gradients from values, Hessians from
/// gradients) for a random `3 → 20 → 20 → 3` network.
pub fn jet_fd_check(seed: u64, points: usize, h: f64) -> Result<f64, ExperimentError> {
    use crate::jet::hess_index;
    use crate::network::{LayerSpec, Network};
    let net = Network::init(LayerSpec::with_hidden(&[20, 20], 3).map_err(TrainError::from)?, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let shift = |p: &SpaceTimePoint, a: usize, d: f64| {
        let mut q = *p;
        match a {
            0 => q.x += d,
            1 => q.y += d,
            _ => q.t += d,
        }
        q
    };
    let jet = |p: &SpaceTimePoint| net.forward_jet(p).map_err(TrainError::from);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let p = SpaceTimePoint::new(rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0), rng.gen_range(0.0..1.0));
        let j = jet(&p)?;
        for a in 0..3 {
            let (jp, jm) = (jet(&shift(&p, a, h))?, jet(&shift(&p, a, -h))?);
            for o in 0..3 {
                let fd = (jp[o].value - jm[o].value) / (2.0 * h);
                worst = worst.max((j[o].grad[a] - fd).abs() / fd.abs().max(1.0));
                for b in 0..3 {
                    let fd = (jp[o].grad[b] - jm[o].grad[b]) / (2.0 * h);
                    let an = j[o].hess[hess_index(a, b)];
                    worst = worst.max((an - fd).abs() / fd.abs().max(1.0));
                }
            }
        }
    }
    Ok(worst)
}

/// Relative error `‖g − g_fd‖ / ‖g_fd‖` of the full-loss parameter
/// gradient of a two-phase problem with `[5, 5]` hidden layers.
pub fn gradient_fd_check(seed: u64, h: f64) -> Result<f64, ExperimentError> {
    use crate::training::{assemble_loss, loss_and_gradient};
    let spec = ProblemSpec::new(ProblemKind::TwoPhaseFlow);
    let mut plan = SamplingPlan::table_row(3, 2, 2, seed);
    plan.observations = observation_points_default();
    let set = TrainingSet::from_plan(spec.clone(), &Geometry::default(), &plan)?;
    let w = default_weights(&spec);
    let mut nets = init_networks(&spec, &[5, 5], seed)?;
    let (_, g) = loss_and_gradient(&set, &nets, &w)?;
    let n0 = nets[0].params().len();
    let (mut num, mut den) = (0.0, 0.0);
    for (k, gk) in g.iter().enumerate() {
        let (net, i) = if k < n0 { (0, k) } else { (1, k - n0) };
        let orig = nets[net].params()[i];
        nets[net].params_mut()[i] = orig + h;
        let lp = assemble_loss(&set, &NetworkPair(&nets), &w)?.total;
        nets[net].params_mut()[i] = orig - h;
        let lm = assemble_loss(&set, &NetworkPair(&nets), &w)?.total;
        nets[net].params_mut()[i] = orig;
        let fd = (lp - lm) / (2.0 * h);
        num += (gk - fd) * (gk - fd);
        den += fd * fd;
    }
    Ok((num / den).sqrt())
}

/// Oracle, differentiation and quadrature checks run by the `check` verb.
pub fn run_checks(seed: u64) -> Result<Vec<CheckResult>, ExperimentError> {
    let mut out = Vec::new();
    for kind in ProblemKind::ALL {
        let (comp, term) = oracle_check(kind, seed)?;
        out.push(CheckResult {
            name: format!("{kind} exact-solution residual component"),
            value: comp,
            tolerance: 1e-9,
        });
        out.push(CheckResult {
            name: format!("{kind} exact-solution loss term"),
            value: term,
            tolerance: 1e-10,
        });
    }
    out.push(CheckResult {
        name: "network jets vs finite differences".into(),
        value: jet_fd_check(seed, 100, 1e-5)?,
        tolerance: 1e-5,
    });
    out.push(CheckResult {
        name: "loss gradient vs finite differences".into(),
        value: gradient_fd_check(seed, 1e-5)?,
        tolerance: 1e-5,
    });
    let sizes = [100, 1000, 10_000, 100_000];
    let errs = quadrature_errors(&sizes, 20, seed);
    let alpha = fit_rate(&sizes.map(|m| m as f64), &errs)?;
    out.push(CheckResult {
        name: "Monte-Carlo quadrature rate |alpha - 0.5|".into(),
        value: (alpha - 0.5).abs(),
        tolerance: 0.15,
    });
    Ok(out)
}
