//! Residual operators for the two interface problems: two-phase
//! incompressible Navier–Stokes and fluid–structure interaction (wave and
//! parabolic structural forms), together with their manufactured solutions.
//!
//! All operators are generic over [`JetScalar`], so the same code evaluates
//! residuals of exact jets (data synthesis, oracles) and of tape-recorded
//! network outputs (training). Every residual is returned as a list of
//! weighted scalar components; a point contributes `Σ weight · value²`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{SpaceTimePoint, Subdomain};
use crate::jet::{Jet2, JetScalar, AXIS_T, AXIS_X, AXIS_Y};

/// Tolerance on `|n| − 1` for interface normals.
pub const NORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("field {0:?} is not part of this subdomain's layout")]
    MissingField(Field),
    #[error("interface normal has length {0}, expected 1")]
    NonUnitNormal(f64),
    #[error("term {0} is not active for this problem")]
    InactiveTerm(&'static str),
    #[error("non-finite value in residual component {0:?}")]
    NonFinite(ResidualKind),
    #[error("expected {expected} field values, got {got}")]
    LayoutMismatch { expected: usize, got: usize },
    #[error("unknown problem kind `{0}` (expected two-phase, fsi-wave or fsi-parabolic)")]
    UnknownProblem(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    TwoPhaseFlow,
    FsiWave,
    FsiParabolic,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 3] = [
        ProblemKind::TwoPhaseFlow,
        ProblemKind::FsiWave,
        ProblemKind::FsiParabolic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::TwoPhaseFlow => "two-phase",
            ProblemKind::FsiWave => "fsi-wave",
            ProblemKind::FsiParabolic => "fsi-parabolic",
        }
    }

    pub fn is_fsi(self) -> bool {
        !matches!(self, ProblemKind::TwoPhaseFlow)
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = PhysicsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProblemKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| PhysicsError::UnknownProblem(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluidParams {
    pub rho: f64,
    pub mu: f64,
}

/// Linear-elastic structure described by density, Young's modulus and
/// Poisson ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolidParams {
    pub rho_s: f64,
    pub young: f64,
    pub poisson: f64,
}

impl SolidParams {
    /// Shear modulus `E / (2(1+ν))`.
    pub fn mu_s(&self) -> f64 {
        self.young / (2.0 * (1.0 + self.poisson))
    }

    /// First Lamé constant `Eν / ((1+ν)(1−2ν))`.
    pub fn lambda_s(&self) -> f64 {
        self.young * self.poisson / ((1.0 + self.poisson) * (1.0 - 2.0 * self.poisson))
    }
}

/// A concrete interface problem: kind, physical parameters and solution
/// variant.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    /// Fluid in `Ω₁` (both problems).
    pub fluid1: FluidParams,
    /// Fluid in `Ω₂` (two-phase flow only).
    pub fluid2: FluidParams,
    /// Structure in `Ω₂` (FSI only).
    pub solid: SolidParams,
    /// Use the variant `v₁ = (eᵗ sin x cos y, eᵗ cos x sin y)` of the two-phase velocity,
    /// which is not divergence free; the misfit shows up in the
    /// divergence residual.
    pub divergent_outer_velocity: bool,
    /// Keep the strain-energy terms added to the FSI functionals for the
    /// error analysis.
    pub include_theory_terms: bool,
}

impl ProblemSpec {
    pub fn two_phase(rho2: f64, mu2: f64) -> Self {
        Self {
            kind: ProblemKind::TwoPhaseFlow,
            fluid2: FluidParams { rho: rho2, mu: mu2 },
            ..Self::new(ProblemKind::TwoPhaseFlow)
        }
    }

    /// Default parameters: unit fluids, and for FSI `ρ_s = 10³`,
    /// `E = 10⁶`, `ν = 0.3`.
    pub fn new(kind: ProblemKind) -> Self {
        Self {
            kind,
            fluid1: FluidParams { rho: 1.0, mu: 1.0 },
            fluid2: FluidParams { rho: 1.0, mu: 1.0 },
            solid: SolidParams {
                rho_s: 1e3,
                young: 1e6,
                poisson: 0.3,
            },
            divergent_outer_velocity: false,
            include_theory_terms: true,
        }
    }

    pub fn layout(&self, sub: Subdomain) -> &'static [Field] {
        field_layout(self.kind, sub)
    }

    /// Fluid parameters of `sub`, if it holds a fluid.
    pub fn fluid(&self, sub: Subdomain) -> Option<FluidParams> {
        match (self.kind, sub) {
            (_, Subdomain::Outer) => Some(self.fluid1),
            (ProblemKind::TwoPhaseFlow, Subdomain::Inner) => Some(self.fluid2),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Field {
    Vx,
    Vy,
    P,
    Ux,
    Uy,
    VsX,
    VsY,
}

impl Field {
    pub fn name(self) -> &'static str {
        match self {
            Field::Vx => "vx",
            Field::Vy => "vy",
            Field::P => "p",
            Field::Ux => "ux",
            Field::Uy => "uy",
            Field::VsX => "vsx",
            Field::VsY => "vsy",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

const FLUID: [Field; 3] = [Field::Vx, Field::Vy, Field::P];
const WAVE_SOLID: [Field; 2] = [Field::Ux, Field::Uy];
const PARABOLIC_SOLID: [Field; 4] = [Field::Ux, Field::Uy, Field::VsX, Field::VsY];

/// Network output order per subdomain.
pub fn field_layout(kind: ProblemKind, sub: Subdomain) -> &'static [Field] {
    match (kind, sub) {
        (_, Subdomain::Outer) | (ProblemKind::TwoPhaseFlow, Subdomain::Inner) => &FLUID,
        (ProblemKind::FsiWave, Subdomain::Inner) => &WAVE_SOLID,
        (ProblemKind::FsiParabolic, Subdomain::Inner) => &PARABOLIC_SOLID,
    }
}

/// Field values of one subdomain at one point.
#[derive(Clone, Copy, Debug)]
pub struct FieldJets<S> {
    layout: &'static [Field],
    slots: [Option<S>; 7],
}

impl<S: JetScalar> FieldJets<S> {
    /// Pair `values` with `layout` in order.
    pub fn from_outputs(layout: &'static [Field], values: &[S]) -> Result<Self, PhysicsError> {
        if values.len() != layout.len() {
            return Err(PhysicsError::LayoutMismatch {
                expected: layout.len(),
                got: values.len(),
            });
        }
        let mut slots = [None; 7];
        for (f, v) in layout.iter().zip(values) {
            slots[f.slot()] = Some(*v);
        }
        Ok(Self { layout, slots })
    }

    pub fn layout(&self) -> &'static [Field] {
        self.layout
    }

    pub fn get(&self, f: Field) -> Result<S, PhysicsError> {
        self.slots[f.slot()].ok_or(PhysicsError::MissingField(f))
    }

    /// Values in layout order.
    pub fn values(&self) -> Vec<S> {
        self.layout.iter().map(|f| self.slots[f.slot()].unwrap()).collect()
    }

    fn any(&self) -> S {
        self.slots[self.layout[0].slot()].unwrap()
    }

    /// A constant in the same evaluation context as the fields.
    pub fn lift(&self, jet: Jet2) -> S {
        self.any().lift(jet)
    }

    fn velocity(&self) -> Result<[S; 2], PhysicsError> {
        Ok([self.get(Field::Vx)?, self.get(Field::Vy)?])
    }

    fn displacement(&self) -> Result<[S; 2], PhysicsError> {
        Ok([self.get(Field::Ux)?, self.get(Field::Uy)?])
    }

    fn structure_velocity(&self) -> Result<[S; 2], PhysicsError> {
        Ok([self.get(Field::VsX)?, self.get(Field::VsY)?])
    }
}

impl FieldJets<Jet2> {
    /// Record plain jets as constants in the context of `like`.
    pub fn lift_into<S: JetScalar>(&self, like: S) -> FieldJets<S> {
        let mut slots = [None; 7];
        for f in self.layout {
            slots[f.slot()] = self.slots[f.slot()].map(|j| like.lift(j));
        }
        FieldJets {
            layout: self.layout,
            slots,
        }
    }
}

/// Symmetric 2×2 tensor of jets; `xy` serves both off-diagonal slots.
#[derive(Clone, Copy, Debug)]
pub struct Stress<S> {
    pub xx: S,
    pub xy: S,
    pub yy: S,
}

impl<S: JetScalar> Stress<S> {
    pub fn at(&self, i: usize, j: usize) -> S {
        match (i, j) {
            (0, 0) => self.xx,
            (1, 1) => self.yy,
            _ => self.xy,
        }
    }

    pub fn divergence(&self) -> [S; 2] {
        [
            self.xx.d(AXIS_X) + self.xy.d(AXIS_Y),
            self.xy.d(AXIS_X) + self.yy.d(AXIS_Y),
        ]
    }

    pub fn traction(&self, n: [f64; 2]) -> [S; 2] {
        [
            self.xx.scale(n[0]) + self.xy.scale(n[1]),
            self.xy.scale(n[0]) + self.yy.scale(n[1]),
        ]
    }
}

/// `σ = −pI + μ(∇v + ∇vᵀ)`.
pub fn fluid_stress<S: JetScalar>(f: &FieldJets<S>, mu: f64) -> Result<Stress<S>, PhysicsError> {
    let [vx, vy] = f.velocity()?;
    let p = f.get(Field::P)?;
    Ok(Stress {
        xx: vx.d(AXIS_X).scale(2.0 * mu) - p,
        xy: (vx.d(AXIS_Y) + vy.d(AXIS_X)).scale(mu),
        yy: vy.d(AXIS_Y).scale(2.0 * mu) - p,
    })
}

/// Symmetric gradient `ε(w) = (∇w + ∇wᵀ)/2` and its trace.
fn strain<S: JetScalar>(w: [S; 2]) -> (Stress<S>, S) {
    let xx = w[0].d(AXIS_X);
    let yy = w[1].d(AXIS_Y);
    let xy = (w[0].d(AXIS_Y) + w[1].d(AXIS_X)).scale(0.5);
    (Stress { xx, xy, yy }, xx + yy)
}

/// `σ_s = 2μ_s ε(u) + λ_s tr(ε(u)) I`.
pub fn solid_stress<S: JetScalar>(f: &FieldJets<S>, mu_s: f64, lambda_s: f64) -> Result<Stress<S>, PhysicsError> {
    let (e, tr) = strain(f.displacement()?);
    let ltr = tr.scale(lambda_s);
    Ok(Stress {
        xx: e.xx.scale(2.0 * mu_s) + ltr,
        xy: e.xy.scale(2.0 * mu_s),
        yy: e.yy.scale(2.0 * mu_s) + ltr,
    })
}

/// Identity of a scalar residual component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ResidualKind {
    MomentumX,
    MomentumY,
    Divergence,
    SolidX,
    SolidY,
    CompatibilityX,
    CompatibilityY,
    CompatibilityStrainXx,
    CompatibilityStrainYy,
    CompatibilityStrainXy,
    CompatibilityDivergence,
    KinematicX,
    KinematicY,
    DynamicX,
    DynamicY,
    BoundaryX,
    BoundaryY,
    InitialVelocityX,
    InitialVelocityY,
    InitialStrainXx,
    InitialStrainYy,
    InitialStrainXy,
    InitialDivergence,
    InitialDisplacementX,
    InitialDisplacementY,
    Observation,
}

#[derive(Clone, Copy, Debug)]
pub struct Component<S> {
    pub kind: ResidualKind,
    pub value: S,
    /// Prefactor multiplying `value²` (densities, `2μ_s`, `λ_s`, ...).
    pub weight: f64,
}

impl<S: JetScalar> Component<S> {
    fn new(kind: ResidualKind, value: S, weight: f64) -> Self {
        Self { kind, value, weight }
    }
}

/// Factor that makes `weight · value²` of a component dimensionless: the
/// value is divided by the largest coefficient it carries (momentum and
/// traction residuals) and energy-type prefactors (`ρ|v|²`, `2μ_s|ε|²`)
/// are divided by their coefficient. `sub` is the side of interior and
/// initial components; interface components ignore it.
pub fn normalization(spec: &ProblemSpec, sub: Subdomain, kind: ResidualKind) -> f64 {
    use ResidualKind::*;
    let s = spec.solid;
    let solid = 1f64.max(s.rho_s).max(s.mu_s()).max(s.lambda_s());
    let elastic = 1f64.max(s.mu_s()).max(s.lambda_s());
    let fluid = |sub: Subdomain| spec.fluid(sub).map_or(1.0, |f| 1f64.max(f.rho).max(f.mu));
    let traction = match spec.kind {
        ProblemKind::TwoPhaseFlow => 1f64.max(spec.fluid1.mu).max(spec.fluid2.mu),
        _ => 1f64.max(spec.fluid1.mu).max(elastic),
    };
    match kind {
        MomentumX | MomentumY => 1.0 / (fluid(sub) * fluid(sub)),
        SolidX | SolidY => 1.0 / (solid * solid),
        DynamicX | DynamicY => 1.0 / (traction * traction),
        CompatibilityStrainXx | CompatibilityStrainYy | CompatibilityStrainXy | CompatibilityDivergence => 1.0 / elastic,
        InitialStrainXx | InitialStrainYy | InitialStrainXy | InitialDivergence => 1.0 / elastic,
        InitialVelocityX | InitialVelocityY => match spec.fluid(sub) {
            Some(f) => 1.0 / f.rho.max(1.0),
            None => 1.0 / s.rho_s.max(1.0),
        },
        Divergence | CompatibilityX | CompatibilityY | KinematicX | KinematicY | BoundaryX | BoundaryY
        | InitialDisplacementX | InitialDisplacementY | Observation => 1.0,
    }
}

/// Checks every component value for finiteness.
pub fn check_finite<S: JetScalar>(r: &[Component<S>]) -> Result<(), PhysicsError> {
    match r.iter().find(|c| !c.value.value().is_finite()) {
        Some(c) => Err(PhysicsError::NonFinite(c.kind)),
        None => Ok(()),
    }
}

/// `Σ weight · value²` over plain values.
pub fn weighted_square_sum<S: JetScalar>(r: &[Component<S>]) -> f64 {
    r.iter().map(|c| c.weight * c.value.value() * c.value.value()).sum()
}

/// Residuals of the field equations in `sub`. `forcing` is the body force
/// subtracted from the two momentum components.
pub fn pde_residual<S: JetScalar>(
    spec: &ProblemSpec,
    sub: Subdomain,
    f: &FieldJets<S>,
    forcing: [f64; 2],
) -> Result<Vec<Component<S>>, PhysicsError> {
    use ResidualKind::*;
    let force = |k: usize| f.lift(Jet2::constant(forcing[k]));
    let mut out = Vec::with_capacity(11);
    if let Some(fluid) = spec.fluid(sub) {
        let [vx, vy] = f.velocity()?;
        let sigma = fluid_stress(f, fluid.mu)?;
        let div_s = sigma.divergence();
        for (k, (v, kind)) in [(vx, MomentumX), (vy, MomentumY)].into_iter().enumerate() {
            let accel = v.d(AXIS_T) + vx * v.d(AXIS_X) + vy * v.d(AXIS_Y);
            out.push(Component::new(kind, accel.scale(fluid.rho) - div_s[k] - force(k), 1.0));
        }
        out.push(Component::new(Divergence, vx.d(AXIS_X) + vy.d(AXIS_Y), 1.0));
    } else {
        let s = spec.solid;
        let u = f.displacement()?;
        let div_s = solid_stress(f, s.mu_s(), s.lambda_s())?.divergence();
        let inertia = match spec.kind {
            ProblemKind::FsiWave => [u[0].d(AXIS_T).d(AXIS_T), u[1].d(AXIS_T).d(AXIS_T)],
            _ => {
                let vs = f.structure_velocity()?;
                [vs[0].d(AXIS_T), vs[1].d(AXIS_T)]
            }
        };
        for (k, kind) in [SolidX, SolidY].into_iter().enumerate() {
            out.push(Component::new(kind, inertia[k].scale(s.rho_s) - div_s[k] - force(k), 1.0));
        }
        if spec.kind == ProblemKind::FsiParabolic {
            let vs = f.structure_velocity()?;
            let w = [u[0].d(AXIS_T) - vs[0], u[1].d(AXIS_T) - vs[1]];
            out.push(Component::new(CompatibilityX, w[0], 1.0));
            out.push(Component::new(CompatibilityY, w[1], 1.0));
            if spec.include_theory_terms {
                let (e, tr) = strain(w);
                let mu2 = 2.0 * s.mu_s();
                out.push(Component::new(CompatibilityStrainXx, e.xx, mu2));
                out.push(Component::new(CompatibilityStrainYy, e.yy, mu2));
                out.push(Component::new(CompatibilityStrainXy, e.xy, 2.0 * mu2));
                out.push(Component::new(CompatibilityDivergence, tr, s.lambda_s()));
            }
        }
    }
    Ok(out)
}

/// Velocity of the `Ω₂` side entering the kinematic condition.
fn inner_velocity<S: JetScalar>(kind: ProblemKind, f2: &FieldJets<S>) -> Result<[S; 2], PhysicsError> {
    match kind {
        ProblemKind::TwoPhaseFlow => f2.velocity(),
        ProblemKind::FsiWave => {
            let u = f2.displacement()?;
            Ok([u[0].d(AXIS_T), u[1].d(AXIS_T)])
        }
        ProblemKind::FsiParabolic => f2.structure_velocity(),
    }
}

/// Kinematic (`v₁ − v₂ − g₁`) and dynamic (`σ₁n₁ + σ₂n₂ − g₂`, `n₂ = −n₁`)
/// interface residuals.
pub fn interface_residual<S: JetScalar>(
    spec: &ProblemSpec,
    f1: &FieldJets<S>,
    f2: &FieldJets<S>,
    n1: [f64; 2],
    g1: [f64; 2],
    g2: [f64; 2],
) -> Result<Vec<Component<S>>, PhysicsError> {
    use ResidualKind::*;
    let len = n1[0].hypot(n1[1]);
    if (len - 1.0).abs() > NORMAL_TOL || !len.is_finite() {
        return Err(PhysicsError::NonUnitNormal(len));
    }
    let v1 = f1.velocity()?;
    let v2 = inner_velocity(spec.kind, f2)?;
    let sigma1 = fluid_stress(f1, spec.fluid1.mu)?;
    let sigma2 = match spec.fluid(Subdomain::Inner) {
        Some(fl) => fluid_stress(f2, fl.mu)?,
        None => solid_stress(f2, spec.solid.mu_s(), spec.solid.lambda_s())?,
    };
    let n2 = [-n1[0], -n1[1]];
    let t1 = sigma1.traction(n1);
    let t2 = sigma2.traction(n2);
    let c = |x: f64| f1.lift(Jet2::constant(x));
    Ok(vec![
        Component::new(KinematicX, v1[0] - v2[0] - c(g1[0]), 1.0),
        Component::new(KinematicY, v1[1] - v2[1] - c(g1[1]), 1.0),
        Component::new(DynamicX, t1[0] + t2[0] - c(g2[0]), 1.0),
        Component::new(DynamicY, t1[1] + t2[1] - c(g2[1]), 1.0),
    ])
}

/// Outer-boundary residual `ṽ − v_b` for the `Ω₁` fluid. `∂Ω₂ \ Γ` is
/// empty for the immersed disk, so no other boundary term exists.
pub fn boundary_residual<S: JetScalar>(
    f: &FieldJets<S>,
    exact: &FieldJets<Jet2>,
) -> Result<Vec<Component<S>>, PhysicsError> {
    let v = f.velocity()?;
    let vb = exact.velocity()?;
    Ok(vec![
        Component::new(ResidualKind::BoundaryX, v[0] - f.lift(vb[0]), 1.0),
        Component::new(ResidualKind::BoundaryY, v[1] - f.lift(vb[1]), 1.0),
    ])
}

/// Initial-condition residuals in `sub`, with density and Lamé prefactors
/// carried as component weights.
pub fn initial_residual<S: JetScalar>(
    spec: &ProblemSpec,
    sub: Subdomain,
    f: &FieldJets<S>,
    exact: &FieldJets<Jet2>,
) -> Result<Vec<Component<S>>, PhysicsError> {
    use ResidualKind::*;
    if let Some(fluid) = spec.fluid(sub) {
        let v = f.velocity()?;
        let v0 = exact.velocity()?;
        return Ok(vec![
            Component::new(InitialVelocityX, v[0] - f.lift(v0[0]), fluid.rho),
            Component::new(InitialVelocityY, v[1] - f.lift(v0[1]), fluid.rho),
        ]);
    }
    let s = spec.solid;
    let u = f.displacement()?;
    let u0 = exact.displacement()?;
    let (vel, vel0) = match spec.kind {
        ProblemKind::FsiWave => (
            [u[0].d(AXIS_T), u[1].d(AXIS_T)],
            [u0[0].d(AXIS_T), u0[1].d(AXIS_T)],
        ),
        _ => (f.structure_velocity()?, exact.structure_velocity()?),
    };
    let du = [u[0] - f.lift(u0[0]), u[1] - f.lift(u0[1])];
    let mut out = vec![
        Component::new(InitialVelocityX, vel[0] - f.lift(vel0[0]), s.rho_s),
        Component::new(InitialVelocityY, vel[1] - f.lift(vel0[1]), s.rho_s),
    ];
    if spec.include_theory_terms {
        let (e, tr) = strain(du);
        let mu2 = 2.0 * s.mu_s();
        out.push(Component::new(InitialStrainXx, e.xx, mu2));
        out.push(Component::new(InitialStrainYy, e.yy, mu2));
        out.push(Component::new(InitialStrainXy, e.xy, 2.0 * mu2));
        out.push(Component::new(InitialDivergence, tr, s.lambda_s()));
    }
    out.push(Component::new(InitialDisplacementX, du[0], 1.0));
    out.push(Component::new(InitialDisplacementY, du[1], 1.0));
    Ok(out)
}

/// Pressure mismatch at an observation point in `Ω₂` (two-phase only).
pub fn observation_residual<S: JetScalar>(
    spec: &ProblemSpec,
    f2: &FieldJets<S>,
    exact: &FieldJets<Jet2>,
) -> Result<Vec<Component<S>>, PhysicsError> {
    if spec.kind != ProblemKind::TwoPhaseFlow {
        return Err(PhysicsError::InactiveTerm("obs"));
    }
    let p = f2.get(Field::P)?;
    Ok(vec![Component::new(
        ResidualKind::Observation,
        p - f2.lift(exact.get(Field::P)?),
        1.0,
    )])
}

/// Manufactured exact fields of `sub` at `p`, as jets.
pub fn exact_solution(spec: &ProblemSpec, sub: Subdomain, p: &SpaceTimePoint) -> FieldJets<Jet2> {
    let [x, y, t] = p.input_jets();
    let values: Vec<Jet2> = match (spec.kind, sub) {
        (kind, Subdomain::Outer) => {
            let et = t.exp();
            let vy_sign = if kind == ProblemKind::TwoPhaseFlow && spec.divergent_outer_velocity {
                1.0
            } else {
                -1.0
            };
            vec![
                et * x.sin() * y.cos(),
                (et * x.cos() * y.sin()).scale(vy_sign),
                et * x.sin() * y.sin(),
            ]
        }
        (ProblemKind::TwoPhaseFlow, Subdomain::Inner) => {
            let ct = t.cos();
            vec![ct * x.cos() * y.cos(), ct * x.sin() * y.sin(), ct * (x + y).cos()]
        }
        (kind, Subdomain::Inner) => {
            let (ct, st) = (t.cos(), t.sin());
            let mut v = vec![ct * x.cos() * y.cos(), st * x.sin() * y.sin()];
            if kind == ProblemKind::FsiParabolic {
                v.push(-(st * x.cos() * y.cos()));
                v.push(ct * x.sin() * y.sin());
            }
            v
        }
    };
    FieldJets::from_outputs(spec.layout(sub), &values).expect("exact layout")
}

/// Body force of `sub` at `p`: the momentum operators applied to the exact
/// fields.
pub fn synthesize_forcing(spec: &ProblemSpec, sub: Subdomain, p: &SpaceTimePoint) -> [f64; 2] {
    let exact = exact_solution(spec, sub, p);
    let r = pde_residual(spec, sub, &exact, [0.0; 2]).expect("exact fields match layout");
    [r[0].value.value, r[1].value.value]
}

/// Interface jumps `(g₁, g₂)` at `p` with normal `n1`.
pub fn synthesize_interface_data(
    spec: &ProblemSpec,
    p: &SpaceTimePoint,
    n1: [f64; 2],
) -> Result<([f64; 2], [f64; 2]), PhysicsError> {
    let e1 = exact_solution(spec, Subdomain::Outer, p);
    let e2 = exact_solution(spec, Subdomain::Inner, p);
    let r = interface_residual(spec, &e1, &e2, n1, [0.0; 2], [0.0; 2])?;
    Ok((
        [r[0].value.value, r[1].value.value],
        [r[2].value.value, r[3].value.value],
    ))
}
