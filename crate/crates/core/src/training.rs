//! Discrete least-squares loss, its parameter gradient, and Adam training.
//!
//! Each loss term is a mean over its sampling points of the weighted
//! squared residual components; the total is the `ω`-weighted sum of terms.
//! Gradients are computed in two stages: both networks are evaluated in
//! batch, then a small per-point tape carries the residual back to the
//! output jets, whose cotangents seed the batched network reverse pass.

use std::io::Write;

use thiserror::Error;

use crate::geometry::{generate_samples, Geometry, GeometryError, SampleSet, SamplingPlan, SpaceTimePoint, Subdomain};
use crate::jet::{Jet2, JetScalar};
use crate::network::{BatchTrace, LayerSpec, Network, NetworkError};
use crate::physics::{
    boundary_residual, exact_solution, initial_residual, interface_residual, observation_residual, pde_residual,
    normalization, synthesize_forcing, synthesize_interface_data, Component, FieldJets, PhysicsError, ProblemKind, ProblemSpec,
};
use crate::tape::Tape;

/// Loss is considered divergent above this value.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("term {0} has no sampling points but a positive weight")]
    EmptyTerm(&'static str),
    #[error("non-finite gradient at epoch {epoch}")]
    NonFiniteGradient { epoch: usize },
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid training configuration: {0}")]
    BadConfig(String),
    #[error("network output width {got} does not match layout width {expected} in subdomain {sub}")]
    OutputWidth { sub: u8, expected: usize, got: usize },
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Loss terms in reporting order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    L1,
    L2,
    Gamma,
    B1,
    B2,
    I1,
    I2,
    Obs,
}

impl Term {
    pub const ALL: [Term; 8] = [
        Term::L1,
        Term::L2,
        Term::Gamma,
        Term::B1,
        Term::B2,
        Term::I1,
        Term::I2,
        Term::Obs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Term::L1 => "L1",
            Term::L2 => "L2",
            Term::Gamma => "Gamma",
            Term::B1 => "B1",
            Term::B2 => "B2",
            Term::I1 => "I1",
            Term::I2 => "I2",
            Term::Obs => "obs",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub omega: [f64; 8],
}

impl LossWeights {
    pub fn uniform() -> Self {
        let mut omega = [1.0; 8];
        omega[Term::B2.index()] = 0.0;
        Self { omega }
    }

    pub fn get(&self, t: Term) -> f64 {
        self.omega[t.index()]
    }

    pub fn set(&mut self, t: Term, w: f64) {
        self.omega[t.index()] = w;
    }

    /// At least one positive weight, none negative or non-finite; the
    /// outer-boundary-only geometry forces `ω_B2 = 0`.
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.omega.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(TrainError::BadConfig("loss weights must be finite and nonnegative".into()));
        }
        if !self.omega.iter().any(|w| *w > 0.0) {
            return Err(TrainError::BadConfig("at least one loss weight must be positive".into()));
        }
        if self.get(Term::B2) != 0.0 {
            return Err(TrainError::BadConfig(
                "the disk has no boundary apart from the interface; omega_B2 must be 0".into(),
            ));
        }
        Ok(())
    }
}

/// `ω = 1 / max(1, largest physical coefficient in the term's residual)`.
pub fn default_weights(spec: &ProblemSpec) -> LossWeights {
    let inv = |coefs: &[f64]| 1.0 / coefs.iter().fold(1.0f64, |m, c| m.max(c.abs()));
    let f1 = spec.fluid1;
    let mut w = LossWeights::uniform();
    w.set(Term::L1, inv(&[f1.rho, f1.mu]));
    w.set(Term::I1, inv(&[f1.rho]));
    match spec.kind {
        ProblemKind::TwoPhaseFlow => {
            let f2 = spec.fluid2;
            w.set(Term::L2, inv(&[f2.rho, f2.mu]));
            w.set(Term::I2, inv(&[f2.rho]));
            w.set(Term::Gamma, inv(&[f1.mu, f2.mu]));
        }
        _ => {
            let s = spec.solid;
            let solid = [s.rho_s, s.mu_s(), s.lambda_s()];
            w.set(Term::L2, inv(&solid));
            w.set(Term::I2, inv(&solid));
            w.set(Term::Gamma, inv(&[f1.mu, s.mu_s(), s.lambda_s()]));
        }
    }
    w
}

/// Unweighted per-term values and the weighted total.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub terms: [f64; 8],
    pub total: f64,
}

impl LossBreakdown {
    pub fn from_terms(terms: [f64; 8], weights: &LossWeights) -> Self {
        let total = Term::ALL.iter().map(|t| weights.get(*t) * terms[t.index()]).sum();
        Self { terms, total }
    }

    pub fn get(&self, t: Term) -> f64 {
        self.terms[t.index()]
    }
}

/// Sampling points together with the data synthesized from the exact
/// solution at each of them.
pub struct TrainingSet {
    pub spec: ProblemSpec,
    pub samples: SampleSet,
    /// Scale every component by [`normalization`] before squaring.
    pub normalized: bool,
    forcing: [Vec<[f64; 2]>; 2],
    interface_data: Vec<([f64; 2], [f64; 2])>,
    boundary_exact: Vec<FieldJets<Jet2>>,
    initial_exact: [Vec<FieldJets<Jet2>>; 2],
    obs_exact: Vec<FieldJets<Jet2>>,
}

/// Where the points of each term sit in a subdomain's batch.
#[derive(Clone, Copy, Debug)]
struct Offsets {
    interior: usize,
    interface: usize,
    /// Boundary points (outer net) or observation points (inner net).
    extra: usize,
    initial: usize,
}

impl TrainingSet {
    pub fn new(spec: ProblemSpec, samples: SampleSet) -> Result<Self, TrainError> {
        let mut forcing: [Vec<[f64; 2]>; 2] = Default::default();
        for sub in [Subdomain::Outer, Subdomain::Inner] {
            forcing[sub.index()] = samples.interior[sub.index()]
                .iter()
                .map(|p| synthesize_forcing(&spec, sub, p))
                .collect();
        }
        let interface_data = samples
            .interface
            .iter()
            .map(|ip| synthesize_interface_data(&spec, &ip.point, ip.normal))
            .collect::<Result<_, _>>()?;
        let boundary_exact = samples
            .boundary
            .iter()
            .map(|b| exact_solution(&spec, Subdomain::Outer, &b.point))
            .collect();
        let mut initial_exact: [Vec<FieldJets<Jet2>>; 2] = Default::default();
        for sub in [Subdomain::Outer, Subdomain::Inner] {
            initial_exact[sub.index()] = samples.initial[sub.index()]
                .iter()
                .map(|p| exact_solution(&spec, sub, p))
                .collect();
        }
        let obs_exact = if spec.kind == ProblemKind::TwoPhaseFlow {
            samples
                .observation
                .iter()
                .map(|p| exact_solution(&spec, Subdomain::Inner, p))
                .collect()
        } else {
            if !samples.observation.is_empty() {
                return Err(PhysicsError::InactiveTerm("obs").into());
            }
            Vec::new()
        };
        Ok(Self {
            spec,
            samples,
            normalized: false,
            forcing,
            interface_data,
            boundary_exact,
            initial_exact,
            obs_exact,
        })
    }

    pub fn from_plan(spec: ProblemSpec, geom: &Geometry, plan: &SamplingPlan) -> Result<Self, TrainError> {
        let samples = generate_samples(geom, plan)?;
        Self::new(spec, samples)
    }

    /// Number of sampling points of `term`.
    pub fn count(&self, term: Term) -> usize {
        let s = &self.samples;
        match term {
            Term::L1 => s.interior[0].len(),
            Term::L2 => s.interior[1].len(),
            Term::Gamma => s.interface.len(),
            Term::B1 => s.boundary.len(),
            Term::B2 => 0,
            Term::I1 => s.initial[0].len(),
            Term::I2 => s.initial[1].len(),
            Term::Obs => self.obs_exact.len(),
        }
    }

    fn offsets(&self, sub: Subdomain) -> Offsets {
        let s = &self.samples;
        let n_int = s.interior[sub.index()].len();
        let n_gamma = s.interface.len();
        let n_extra = match sub {
            Subdomain::Outer => s.boundary.len(),
            Subdomain::Inner => self.obs_exact.len(),
        };
        Offsets {
            interior: 0,
            interface: n_int,
            extra: n_int + n_gamma,
            initial: n_int + n_gamma + n_extra,
        }
    }

    /// All points evaluated by the network of `sub`, in batch order:
    /// interior, interface, boundary or observation, initial.
    pub fn batch_points(&self, sub: Subdomain) -> Vec<SpaceTimePoint> {
        let s = &self.samples;
        let mut pts = s.interior[sub.index()].clone();
        pts.extend(s.interface.iter().map(|ip| ip.point));
        match sub {
            Subdomain::Outer => pts.extend(s.boundary.iter().map(|b| b.point)),
            Subdomain::Inner => pts.extend(s.observation.iter().take(self.obs_exact.len())),
        }
        pts.extend(s.initial[sub.index()].iter());
        pts
    }

    fn check_nonempty(&self, weights: &LossWeights) -> Result<(), TrainError> {
        for t in [Term::L1, Term::L2, Term::Gamma, Term::B1, Term::I1, Term::I2] {
            if weights.get(t) > 0.0 && self.count(t) == 0 {
                return Err(TrainError::EmptyTerm(t.name()));
            }
        }
        Ok(())
    }

    /// Residual components of point `k` of `term`. `f1`/`f2` are the field
    /// sets of the participating subdomains.
    fn residual<S: JetScalar>(
        &self,
        term: Term,
        k: usize,
        f1: Option<&FieldJets<S>>,
        f2: Option<&FieldJets<S>>,
    ) -> Result<Vec<Component<S>>, PhysicsError> {
        let spec = &self.spec;
        let f1 = || f1.expect("outer fields");
        let f2 = || f2.expect("inner fields");
        let mut r = match term {
            Term::L1 => pde_residual(spec, Subdomain::Outer, f1(), self.forcing[0][k]),
            Term::L2 => pde_residual(spec, Subdomain::Inner, f2(), self.forcing[1][k]),
            Term::Gamma => {
                let (g1, g2) = self.interface_data[k];
                interface_residual(spec, f1(), f2(), self.samples.interface[k].normal, g1, g2)
            }
            Term::B1 => boundary_residual(f1(), &self.boundary_exact[k]),
            Term::I1 => initial_residual(spec, Subdomain::Outer, f1(), &self.initial_exact[0][k]),
            Term::I2 => initial_residual(spec, Subdomain::Inner, f2(), &self.initial_exact[1][k]),
            Term::Obs => observation_residual(spec, f2(), &self.obs_exact[k]),
            Term::B2 => Err(PhysicsError::InactiveTerm("B2")),
        }?;
        if self.normalized {
            let sub = match term {
                Term::L2 | Term::I2 | Term::Obs => Subdomain::Inner,
                _ => Subdomain::Outer,
            };
            for c in &mut r {
                c.weight *= normalization(spec, sub, c.kind);
            }
        }
        Ok(r)
    }

    /// Batch indices `(outer, inner)` of point `k` of `term`.
    fn batch_index(&self, term: Term, k: usize, o: &[Offsets; 2]) -> (Option<usize>, Option<usize>) {
        match term {
            Term::L1 => (Some(o[0].interior + k), None),
            Term::L2 => (None, Some(o[1].interior + k)),
            Term::Gamma => (Some(o[0].interface + k), Some(o[1].interface + k)),
            Term::B1 => (Some(o[0].extra + k), None),
            Term::I1 => (Some(o[0].initial + k), None),
            Term::I2 => (None, Some(o[1].initial + k)),
            Term::Obs => (None, Some(o[1].extra + k)),
            Term::B2 => (None, None),
        }
    }
}

/// Anything that yields field jets at the batch points of a subdomain:
/// trained networks, or the exact solution for oracle checks.
pub trait FieldSource {
    /// Output jets per point, in the subdomain's field layout.
    fn field_jets(&self, sub: Subdomain, points: &[SpaceTimePoint]) -> Result<Vec<Vec<Jet2>>, TrainError>;

    /// Field values only; sources with a cheaper value path override this.
    fn field_values(&self, sub: Subdomain, points: &[SpaceTimePoint]) -> Result<Vec<Vec<f64>>, TrainError> {
        Ok(self
            .field_jets(sub, points)?
            .into_iter()
            .map(|js| js.iter().map(|j| j.value).collect())
            .collect())
    }
}

/// The manufactured solution as a field source.
pub struct ExactSource<'a>(pub &'a ProblemSpec);

impl FieldSource for ExactSource<'_> {
    fn field_jets(&self, sub: Subdomain, points: &[SpaceTimePoint]) -> Result<Vec<Vec<Jet2>>, TrainError> {
        Ok(points.iter().map(|p| exact_solution(self.0, sub, p).values()).collect())
    }
}

/// One network per subdomain.
pub struct NetworkPair<'a>(pub &'a [Network; 2]);

impl FieldSource for NetworkPair<'_> {
    fn field_jets(&self, sub: Subdomain, points: &[SpaceTimePoint]) -> Result<Vec<Vec<Jet2>>, TrainError> {
        let trace = self.0[sub.index()].forward_batch(points)?;
        Ok((0..points.len()).map(|p| trace.outputs(p)).collect())
    }

    fn field_values(&self, sub: Subdomain, points: &[SpaceTimePoint]) -> Result<Vec<Vec<f64>>, TrainError> {
        Ok(self.0[sub.index()].forward_values(points)?)
    }
}

fn fields_of(spec: &ProblemSpec, sub: Subdomain, jets: &[Jet2]) -> Result<FieldJets<Jet2>, TrainError> {
    let layout = spec.layout(sub);
    if jets.len() != layout.len() {
        return Err(TrainError::OutputWidth {
            sub: sub.number(),
            expected: layout.len(),
            got: jets.len(),
        });
    }
    Ok(FieldJets::from_outputs(layout, jets)?)
}

/// Residual components of every point of every term, evaluated without a
/// tape. Used by oracle checks and diagnostics.
pub fn residual_components(
    set: &TrainingSet,
    source: &dyn FieldSource,
) -> Result<Vec<(Term, usize, Vec<Component<Jet2>>)>, TrainError> {
    let outs = [
        source.field_jets(Subdomain::Outer, &set.batch_points(Subdomain::Outer))?,
        source.field_jets(Subdomain::Inner, &set.batch_points(Subdomain::Inner))?,
    ];
    let offs = [set.offsets(Subdomain::Outer), set.offsets(Subdomain::Inner)];
    let mut out = Vec::new();
    for term in Term::ALL {
        for k in 0..set.count(term) {
            let (i1, i2) = set.batch_index(term, k, &offs);
            let f1 = i1.map(|i| fields_of(&set.spec, Subdomain::Outer, &outs[0][i])).transpose()?;
            let f2 = i2.map(|i| fields_of(&set.spec, Subdomain::Inner, &outs[1][i])).transpose()?;
            out.push((term, k, set.residual(term, k, f1.as_ref(), f2.as_ref())?));
        }
    }
    Ok(out)
}

/// Loss of `source` on `set`.
pub fn assemble_loss(
    set: &TrainingSet,
    source: &dyn FieldSource,
    weights: &LossWeights,
) -> Result<LossBreakdown, TrainError> {
    set.check_nonempty(weights)?;
    let mut terms = [0.0; 8];
    for (term, _, r) in residual_components(set, source)? {
        terms[term.index()] += r.iter().map(|c| c.weight * c.value.value * c.value.value).sum::<f64>();
    }
    for t in Term::ALL {
        let m = set.count(t);
        if m > 0 {
            terms[t.index()] /= m as f64;
        }
    }
    Ok(LossBreakdown::from_terms(terms, weights))
}

/// Loss of the network pair and its gradient with respect to the
/// concatenated parameter vector (outer network first).
pub fn loss_and_gradient(
    set: &TrainingSet,
    nets: &[Network; 2],
    weights: &LossWeights,
) -> Result<(LossBreakdown, Vec<f64>), TrainError> {
    set.check_nonempty(weights)?;
    let subs = [Subdomain::Outer, Subdomain::Inner];
    let traces: Vec<BatchTrace> = subs
        .iter()
        .map(|&s| nets[s.index()].forward_batch(&set.batch_points(s)))
        .collect::<Result<_, _>>()?;
    for s in subs {
        let got = traces[s.index()].output_width();
        let expected = set.spec.layout(s).len();
        if got != expected {
            return Err(TrainError::OutputWidth {
                sub: s.number(),
                expected,
                got,
            });
        }
    }
    let offs = [set.offsets(Subdomain::Outer), set.offsets(Subdomain::Inner)];
    let mut cots = [traces[0].zero_cotangent(), traces[1].zero_cotangent()];
    let mut terms = [0.0; 8];
    let tape = Tape::new();
    let mut leaves = [Vec::new(), Vec::new()];

    for term in Term::ALL {
        let m = set.count(term);
        if m == 0 {
            continue;
        }
        let scale = weights.get(term) / m as f64;
        let idx_pair = |k| set.batch_index(term, k, &offs);
        for k in 0..m {
            tape.clear();
            let (i1, i2) = idx_pair(k);
            let mut fields = [None, None];
            for (s, idx) in [(0usize, i1), (1, i2)] {
                leaves[s].clear();
                if let Some(i) = idx {
                    let vars: Vec<_> = traces[s].outputs(i).into_iter().map(|j| tape.leaf(j)).collect();
                    leaves[s].extend(vars.iter().map(|v| v.id()));
                    fields[s] = Some(FieldJets::from_outputs(set.spec.layout(subs[s]), &vars)?);
                }
            }
            let r = set.residual(term, k, fields[0].as_ref(), fields[1].as_ref())?;
            let mut acc = r[0].value.square().scale(r[0].weight);
            for c in &r[1..] {
                acc = acc + c.value.square().scale(c.weight);
            }
            terms[term.index()] += acc.value();
            if scale == 0.0 {
                continue;
            }
            let adj = tape.backward(acc.id()).expect("loss node on tape");
            for s in 0..2 {
                if let Some(i) = [i1, i2][s] {
                    for (o, &id) in leaves[s].iter().enumerate() {
                        traces[s].add_cotangent(&mut cots[s], i, o, adj.of(id), scale);
                    }
                }
            }
        }
        terms[term.index()] /= m as f64;
    }

    let mut grad = nets[0].backward_batch(&traces[0], &cots[0]);
    grad.extend(nets[1].backward_batch(&traces[1], &cots[1]));
    Ok((LossBreakdown::from_terms(terms, weights), grad))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Record the loss every `log_interval` epochs (and at the last).
    pub log_interval: usize,
    /// Fixed-order gradient reduction. Evaluation is single-threaded, so
    /// every run is deterministic; the flag is kept for configuration
    /// compatibility.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 50_000,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            log_interval: 100,
            deterministic: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::BadConfig(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if self.epsilon <= 0.0 {
            return bad("Adam epsilon must be positive");
        }
        if self.log_interval == 0 {
            return bad("log interval must be at least 1");
        }
        Ok(())
    }
}

/// Bias-corrected Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    /// One Adam update of `params` in place.
    pub fn step(&mut self, grad: &[f64], params: &mut [f64], cfg: &TrainConfig) {
        assert_eq!(grad.len(), params.len());
        assert_eq!(grad.len(), self.m.len());
        self.step += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.epsilon);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub loss: LossBreakdown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainStatus {
    Completed,
    /// The loss exceeded [`DIVERGENCE_THRESHOLD`] at this epoch.
    Diverged { epoch: usize },
}

pub struct TrainOutcome {
    pub nets: [Network; 2],
    pub history: Vec<HistoryRow>,
    pub status: TrainStatus,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> LossBreakdown {
        self.history.last().expect("history has the initial loss").loss
    }
}

/// Seeds of the two networks derived from the run seed.
pub fn network_seeds(seed: u64) -> [u64; 2] {
    [seed.wrapping_add(1), seed.wrapping_add(2)]
}

/// Networks for `spec` with the given hidden widths.
pub fn init_networks(spec: &ProblemSpec, hidden: &[usize], seed: u64) -> Result<[Network; 2], TrainError> {
    let seeds = network_seeds(seed);
    let mk = |sub: Subdomain| -> Result<Network, TrainError> {
        let ls = LayerSpec::with_hidden(hidden, spec.layout(sub).len())?;
        Ok(Network::init(ls, seeds[sub.index()]))
    };
    Ok([mk(Subdomain::Outer)?, mk(Subdomain::Inner)?])
}

/// Full-batch Adam on the concatenated parameters of both networks.
pub fn train(
    set: &TrainingSet,
    mut nets: [Network; 2],
    weights: &LossWeights,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    weights.validate()?;
    let n0 = nets[0].params().len();
    let n = n0 + nets[1].params().len();
    let mut adam = AdamState::new(n);
    let mut theta: Vec<f64> = nets[0].params().iter().chain(nets[1].params()).copied().collect();
    let mut history = Vec::new();
    let mut status = TrainStatus::Completed;
    for epoch in 0..=cfg.epochs {
        let (loss, grad) = loss_and_gradient(set, &nets, weights)?;
        if !loss.total.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch });
        }
        if epoch % cfg.log_interval == 0 || epoch == cfg.epochs || loss.total > DIVERGENCE_THRESHOLD {
            history.push(HistoryRow { epoch, loss });
            log::debug!("epoch {epoch}: loss {:e}", loss.total);
        }
        if loss.total > DIVERGENCE_THRESHOLD {
            log::warn!("loss {:e} exceeded the divergence threshold at epoch {epoch}", loss.total);
            status = TrainStatus::Diverged { epoch };
            break;
        }
        if epoch == cfg.epochs {
            break;
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(TrainError::NonFiniteGradient { epoch });
        }
        adam.step(&grad, &mut theta, cfg);
        nets[0].params_mut().copy_from_slice(&theta[..n0]);
        nets[1].params_mut().copy_from_slice(&theta[n0..]);
    }
    Ok(TrainOutcome { nets, history, status })
}

pub const HISTORY_HEADER: [&str; 10] = [
    "epoch", "F_L1", "F_L2", "F_Gamma", "F_B1", "F_B2", "F_I1", "F_I2", "F_obs", "total",
];

/// Training history as CSV with a header row.
pub fn write_history<W: Write>(w: W, rows: &[HistoryRow]) -> Result<(), TrainError> {
    let mut wr = csv::Writer::from_writer(w);
    let map = |e: csv::Error| TrainError::Io(std::io::Error::other(e));
    wr.write_record(HISTORY_HEADER).map_err(map)?;
    for r in rows {
        let mut rec = vec![r.epoch.to_string()];
        rec.extend(r.loss.terms.iter().map(|v| v.to_string()));
        rec.push(r.loss.total.to_string());
        wr.write_record(&rec).map_err(map)?;
    }
    wr.flush()?;
    Ok(())
}

/// A-posteriori indicator: initial terms plus the root of the
/// residual, boundary and interface terms (unweighted).
pub fn posterior_indicator(loss: &LossBreakdown) -> f64 {
    let g = |t: Term| loss.get(t);
    let init = g(Term::I1) + g(Term::I2);
    let rest = g(Term::L1) + g(Term::L2) + g(Term::B1) + g(Term::B2) + g(Term::Gamma);
    init + rest.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{observation_points_default, SamplingPlan};

    fn small_set(kind: ProblemKind, seed: u64) -> TrainingSet {
        let mut plan = SamplingPlan::table_row(3, 2, 2, seed);
        if kind == ProblemKind::TwoPhaseFlow {
            plan.observations = observation_points_default();
        }
        TrainingSet::from_plan(ProblemSpec::new(kind), &Geometry::default(), &plan).unwrap()
    }

    #[test]
    fn weights_examples() {
        let w = default_weights(&ProblemSpec::new(ProblemKind::TwoPhaseFlow));
        for t in Term::ALL {
            assert_eq!(w.get(t), if t == Term::B2 { 0.0 } else { 1.0 });
        }
        let w = default_weights(&ProblemSpec::two_phase(1000.0, 1000.0));
        assert_eq!(w.get(Term::L2), 1e-3);
        assert_eq!(w.get(Term::Gamma), 1e-3);
        assert_eq!(w.get(Term::L1), 1.0);
        let spec = ProblemSpec::new(ProblemKind::FsiParabolic);
        let w = default_weights(&spec);
        assert_eq!(w.get(Term::L2), 1.0 / spec.solid.lambda_s());
        let mut bad = LossWeights::uniform();
        bad.set(Term::B2, 1.0);
        assert!(bad.validate().is_err());
        assert!(LossWeights { omega: [0.0; 8] }.validate().is_err());
    }

    #[test]
    fn exact_source_has_zero_loss() {
        for kind in ProblemKind::ALL {
            let set = small_set(kind, 1);
            let spec = set.spec.clone();
            let loss = assemble_loss(&set, &ExactSource(&spec), &default_weights(&spec)).unwrap();
            assert!(loss.total < 1e-10, "{kind}: {loss:?}");
        }
    }

    #[test]
    fn weighted_sum_identity() {
        let set = small_set(ProblemKind::TwoPhaseFlow, 2);
        let nets = init_networks(&set.spec, &[5], 3).unwrap();
        let mut w = default_weights(&set.spec);
        w.set(Term::Gamma, 0.37);
        let loss = assemble_loss(&set, &NetworkPair(&nets), &w).unwrap();
        let sum: f64 = Term::ALL.iter().map(|t| w.get(*t) * loss.get(*t)).sum();
        assert!((loss.total - sum).abs() <= 1e-14 * sum.abs());
        assert!(loss.terms.iter().all(|v| *v >= 0.0));
        let (lg, _) = loss_and_gradient(&set, &nets, &w).unwrap();
        for t in Term::ALL {
            let (a, b) = (lg.get(t), loss.get(t));
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300), "{t:?}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for kind in ProblemKind::ALL {
            let set = small_set(kind, 4);
            let nets = init_networks(&set.spec, &[5], 5).unwrap();
            // Normalised weights keep the loss O(1e6) at most for FSI, so the
            // central difference is not swamped by roundoff.
            let w = default_weights(&set.spec);
            let (_, grad) = loss_and_gradient(&set, &nets, &w).unwrap();
            let n0 = nets[0].params().len();
            let h = 1e-3;
            for i in (0..grad.len()).step_by(7) {
                let eval = |d: f64| {
                    let mut n = nets.clone();
                    if i < n0 {
                        n[0].params_mut()[i] += d;
                    } else {
                        n[1].params_mut()[i - n0] += d;
                    }
                    assemble_loss(&set, &NetworkPair(&n), &w).unwrap().total
                };
                // Fourth-order stencil: the FSI loss is ~1e5 while single
                // gradient entries are O(1), so small steps drown in roundoff.
                let fd = (eval(-2.0 * h) - 8.0 * eval(-h) + 8.0 * eval(h) - eval(2.0 * h)) / (12.0 * h);
                let scale = fd.abs().max(grad[i].abs()).max(1e-3);
                assert!(
                    (fd - grad[i]).abs() / scale < 1e-5,
                    "{kind} param {i}: fd {fd} vs {}",
                    grad[i]
                );
            }
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let cfg = TrainConfig::default();
        let mut s = AdamState::new(2);
        s.m = vec![1.0, -1.0];
        let mut p = vec![0.5, 0.25];
        s.step(&[0.0, 0.0], &mut p, &cfg);
        // Decaying first moment still moves the parameters.
        assert_eq!(s.m, vec![0.9, -0.9]);
        let mut s = AdamState::new(2);
        let mut p = vec![0.5, 0.25];
        s.step(&[0.0, 0.0], &mut p, &cfg);
        assert_eq!(p, vec![0.5, 0.25]);
    }

    #[test]
    fn adam_first_step_has_magnitude_lr() {
        let cfg = TrainConfig::default();
        let mut s = AdamState::new(2);
        let mut p = vec![0.0, 0.0];
        s.step(&[3.0, -1e-3], &mut p, &cfg);
        assert!((p[0] + 1e-3).abs() < 1e-9);
        assert!((p[1] - 1e-3).abs() < 1e-6);
    }

    #[test]
    fn adam_minimizes_square() {
        // Independent oracle: the textbook recurrence written out here.
        let cfg = TrainConfig {
            learning_rate: 0.1,
            ..TrainConfig::default()
        };
        let mut s = AdamState::new(1);
        let mut p = vec![1.0];
        let (mut m, mut v, mut th) = (0.0f64, 0.0f64, 1.0f64);
        let mut reached = None;
        for k in 1..=200 {
            let g = 2.0 * p[0];
            s.step(&[g], &mut p, &cfg);
            let go = 2.0 * th;
            m = 0.9 * m + (1.0 - 0.9) * go;
            v = 0.999 * v + (1.0 - 0.999) * go * go;
            th -= 0.1 * (m / (1.0 - 0.9f64.powi(k))) / ((v / (1.0 - 0.999f64.powi(k))).sqrt() + 1e-8);
            assert_eq!(p[0], th);
            if reached.is_none() && p[0].abs() < 1e-3 {
                reached = Some(k);
            }
        }
        assert!(reached.is_some(), "final {}", p[0]);
    }

    #[test]
    fn zero_epochs_returns_initial() {
        let set = small_set(ProblemKind::FsiWave, 6);
        let nets = init_networks(&set.spec, &[4], 7).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let out = train(&set, nets.clone(), &default_weights(&set.spec), &cfg).unwrap();
        assert_eq!(out.history.len(), 1);
        assert_eq!(out.history[0].epoch, 0);
        assert_eq!(out.nets[0].params(), nets[0].params());
    }

    #[test]
    fn short_training_descends() {
        let set = small_set(ProblemKind::TwoPhaseFlow, 8);
        let nets = init_networks(&set.spec, &[8, 8], 9).unwrap();
        let cfg = TrainConfig {
            epochs: 60,
            log_interval: 20,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let out = train(&set, nets, &default_weights(&set.spec), &cfg).unwrap();
        assert_eq!(out.status, TrainStatus::Completed);
        let epochs: Vec<usize> = out.history.iter().map(|r| r.epoch).collect();
        assert_eq!(epochs, vec![0, 20, 40, 60]);
        assert!(out.final_loss().total < out.history[0].loss.total);
    }

    #[test]
    fn history_csv_header() {
        let set = small_set(ProblemKind::TwoPhaseFlow, 1);
        let nets = init_networks(&set.spec, &[3], 1).unwrap();
        let loss = assemble_loss(&set, &NetworkPair(&nets), &LossWeights::uniform()).unwrap();
        let mut buf = Vec::new();
        write_history(&mut buf, &[HistoryRow { epoch: 0, loss }]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("epoch,F_L1,F_L2,F_Gamma,F_B1,F_B2,F_I1,F_I2,F_obs,total\n"));
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn empty_term_is_usage_error() {
        let mut set = small_set(ProblemKind::TwoPhaseFlow, 1);
        set.samples.boundary.clear();
        set.boundary_exact.clear();
        let nets = init_networks(&set.spec, &[3], 1).unwrap();
        let err = assemble_loss(&set, &NetworkPair(&nets), &LossWeights::uniform()).unwrap_err();
        assert!(matches!(err, TrainError::EmptyTerm("B1")));
    }
}
