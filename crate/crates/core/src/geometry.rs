//! Immersed-disk space-time geometry and sampling-point generation.
//!
//! The box `[0,3]²` contains the open disk `Ω₂ = {(x−1.5)² + (y−1.5)² < 1}`;
//! `Ω₁` is the box minus the closed disk. Time runs over `[0,1]`.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jet::Jet2;

/// Points closer than this to the circle count as on the interface.
pub const INTERFACE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point ({x}, {y}) is off the interface by {dist:e}")]
    OffInterface { x: f64, y: f64, dist: f64 },
    #[error("invalid sampling plan: {0}")]
    BadPlan(String),
    #[error("sample file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

impl SpaceTimePoint {
    pub fn new(x: f64, y: f64, t: f64) -> Self {
        Self { x, y, t }
    }

    /// Seeded input jets `(x, y, t)`.
    pub fn input_jets(&self) -> [Jet2; 3] {
        [
            Jet2::var(self.x, 0).unwrap(),
            Jet2::var(self.y, 1).unwrap(),
            Jet2::var(self.t, 2).unwrap(),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subdomain {
    /// Exterior of the disk (`Ω₁`, the fluid in FSI).
    Outer,
    /// The disk (`Ω₂`, the structure in FSI).
    Inner,
}

impl Subdomain {
    pub fn index(self) -> usize {
        match self {
            Subdomain::Outer => 0,
            Subdomain::Inner => 1,
        }
    }

    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }
}

/// Result of classifying a point against the interface.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    In(Subdomain),
    /// Within [`INTERFACE_TOL`] of the circle.
    Ambiguous,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Geometry {
    pub box_min: f64,
    pub box_max: f64,
    pub center: [f64; 2],
    pub radius: f64,
    pub t_end: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            box_min: 0.0,
            box_max: 3.0,
            center: [1.5, 1.5],
            radius: 1.0,
            t_end: 1.0,
        }
    }
}

impl Geometry {
    /// Signed level set `(x−cx)² + (y−cy)² − r²`; negative inside the disk.
    pub fn level(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        dx * dx + dy * dy - self.radius * self.radius
    }

    pub fn classify(&self, p: &SpaceTimePoint) -> Classification {
        let l = self.level(p.x, p.y);
        if l.abs() < INTERFACE_TOL {
            Classification::Ambiguous
        } else if l < 0.0 {
            Classification::In(Subdomain::Inner)
        } else {
            Classification::In(Subdomain::Outer)
        }
    }

    /// Unit normal on the circle pointing from `Ω₁` into `Ω₂` (toward the
    /// center).
    pub fn interface_normal(&self, x: f64, y: f64) -> Result<[f64; 2], GeometryError> {
        let dx = self.center[0] - x;
        let dy = self.center[1] - y;
        let r = (dx * dx + dy * dy).sqrt();
        if (r - self.radius).abs() > 1e-9 {
            return Err(GeometryError::OffInterface {
                x,
                y,
                dist: r - self.radius,
            });
        }
        Ok([dx / r, dy / r])
    }

    pub fn point_on_circle(&self, theta: f64) -> [f64; 2] {
        [
            self.center[0] + self.radius * theta.cos(),
            self.center[1] + self.radius * theta.sin(),
        ]
    }
}

/// How interior and initial points are placed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    /// Uniform random with rejection into the subdomain.
    #[default]
    Random,
    /// Tensor grid over the box, clipped to the subdomain.
    Grid,
}

/// Point budgets in the tensor notation of the experiment tables.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingPlan {
    /// `n_x × n_y × n_t` interior points per subdomain.
    pub interior: [usize; 3],
    /// `n_edge` points per box edge, on `n_t` time levels.
    pub boundary_per_edge: usize,
    pub boundary_times: usize,
    /// `n_θ × n_t` interface points.
    pub interface: [usize; 2],
    /// `n_x × n_y` initial points per subdomain.
    pub initial: [usize; 2],
    /// Fixed `(x, y)` locations in `Ω₂` where pressure is observed.
    pub observations: Vec<[f64; 2]>,
    pub mode: SamplingMode,
    pub seed: u64,
}

impl SamplingPlan {
    /// A row of the tables: interior `n×n×nt`, boundary `k×4×nt`,
    /// interface `k×nt`, initial `k×k`.
    pub fn table_row(n: usize, nt: usize, k: usize, seed: u64) -> Self {
        Self {
            interior: [n, n, nt],
            boundary_per_edge: k,
            boundary_times: nt,
            interface: [k, nt],
            initial: [k, k],
            observations: Vec::new(),
            mode: SamplingMode::Random,
            seed,
        }
    }

    pub fn interior_count(&self) -> usize {
        self.interior.iter().product()
    }

    pub fn boundary_count(&self) -> usize {
        self.boundary_per_edge * 4 * self.boundary_times
    }

    pub fn interface_count(&self) -> usize {
        self.interface[0] * self.interface[1]
    }

    pub fn initial_count(&self) -> usize {
        self.initial[0] * self.initial[1]
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: &str| Err(GeometryError::BadPlan(m.to_string()));
        if self.interior.contains(&0) {
            return bad("interior counts must be positive");
        }
        if self.boundary_per_edge == 0 || self.boundary_times == 0 {
            return bad("boundary counts must be positive");
        }
        if self.interface.contains(&0) {
            return bad("interface counts must be positive");
        }
        if self.initial.contains(&0) {
            return bad("initial counts must be positive");
        }
        let g = Geometry::default();
        for o in &self.observations {
            if g.level(o[0], o[1]) >= -INTERFACE_TOL {
                return bad("observation points must lie strictly inside the disk");
            }
        }
        Ok(())
    }
}

/// Loss-term label of a sampling point set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PointLabel {
    Interior(Subdomain),
    Interface,
    Boundary,
    Initial(Subdomain),
    Observation,
}

impl PointLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PointLabel::Interior(Subdomain::Outer) => "L1",
            PointLabel::Interior(Subdomain::Inner) => "L2",
            PointLabel::Interface => "Gamma",
            PointLabel::Boundary => "B1",
            PointLabel::Initial(Subdomain::Outer) => "I1",
            PointLabel::Initial(Subdomain::Inner) => "I2",
            PointLabel::Observation => "obs",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "L1" => PointLabel::Interior(Subdomain::Outer),
            "L2" => PointLabel::Interior(Subdomain::Inner),
            "Gamma" => PointLabel::Interface,
            "B1" => PointLabel::Boundary,
            "I1" => PointLabel::Initial(Subdomain::Outer),
            "I2" => PointLabel::Initial(Subdomain::Inner),
            "obs" => PointLabel::Observation,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InterfacePoint {
    pub point: SpaceTimePoint,
    /// Unit normal pointing from `Ω₁` into `Ω₂`.
    pub normal: [f64; 2],
}

/// Box edges, counter-clockwise from the bottom.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Edge {
    Bottom = 0,
    Right = 1,
    Top = 2,
    Left = 3,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Bottom, Edge::Right, Edge::Top, Edge::Left];

    pub fn from_id(id: u8) -> Option<Edge> {
        Edge::ALL.get(id as usize).copied()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryPoint {
    pub point: SpaceTimePoint,
    pub edge: Edge,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleSet {
    pub interior: [Vec<SpaceTimePoint>; 2],
    pub interface: Vec<InterfacePoint>,
    pub boundary: Vec<BoundaryPoint>,
    pub initial: [Vec<SpaceTimePoint>; 2],
    pub observation: Vec<SpaceTimePoint>,
}

/// `n` equispaced levels on `[0, end]`, endpoints included.
fn levels(n: usize, end: f64) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|k| end * k as f64 / (n - 1) as f64).collect()
}

fn term_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Rejection sampling of `count` points uniform in `sub`. `time` fixes
/// the time coordinate (initial sets) or draws it uniformly.
fn sample_subdomain(
    geom: &Geometry,
    sub: Subdomain,
    count: usize,
    time: Option<f64>,
    seed: u64,
    stream: u64,
) -> Vec<SpaceTimePoint> {
    // The disk covers π/9 of the box, so the expected number of draws per
    // accepted point is below 3; this cap is only reached by a broken RNG.
    let max_draws = 1000 * count + 1000;
    let mut seed = seed;
    loop {
        let mut rng = term_rng(seed, stream);
        let mut out = Vec::with_capacity(count);
        let mut draws = 0;
        while out.len() < count && draws < max_draws {
            draws += 1;
            let p = SpaceTimePoint {
                x: rng.gen_range(geom.box_min..geom.box_max),
                y: rng.gen_range(geom.box_min..geom.box_max),
                t: match time {
                    Some(t) => t,
                    None => rng.gen_range(0.0..=geom.t_end),
                },
            };
            if geom.classify(&p) == Classification::In(sub) {
                out.push(p);
            }
        }
        if out.len() == count {
            return out;
        }
        log::warn!("rejection sampling for {sub:?} did not converge; retrying with seed {}", seed + 1);
        seed = seed.wrapping_add(1);
    }
}

fn grid_subdomain(geom: &Geometry, sub: Subdomain, n: [usize; 3], time: Option<f64>) -> Vec<SpaceTimePoint> {
    // Cell-centred grid over the box, so no node sits on the box edge.
    let h = |k: usize, n: usize| geom.box_min + (geom.box_max - geom.box_min) * (k as f64 + 0.5) / n as f64;
    let ts = match time {
        Some(t) => vec![t],
        None => levels(n[2], geom.t_end),
    };
    let mut out = Vec::new();
    for &t in &ts {
        for i in 0..n[0] {
            for j in 0..n[1] {
                let p = SpaceTimePoint { x: h(i, n[0]), y: h(j, n[1]), t };
                if geom.classify(&p) == Classification::In(sub) {
                    out.push(p);
                }
            }
        }
    }
    out
}

/// `count` points uniform in `sub × [0, t_end]` (rejection sampling).
pub fn sample_uniform(geom: &Geometry, sub: Subdomain, count: usize, seed: u64) -> Vec<SpaceTimePoint> {
    sample_subdomain(geom, sub, count, None, seed, 7)
}

pub fn generate_samples(geom: &Geometry, plan: &SamplingPlan) -> Result<SampleSet, GeometryError> {
    plan.validate()?;
    let mut set = SampleSet::default();
    for sub in [Subdomain::Outer, Subdomain::Inner] {
        let i = sub.index();
        set.interior[i] = match plan.mode {
            SamplingMode::Random => {
                sample_subdomain(geom, sub, plan.interior_count(), None, plan.seed, 1 + i as u64)
            }
            SamplingMode::Grid => grid_subdomain(geom, sub, plan.interior, None),
        };
        set.initial[i] = match plan.mode {
            SamplingMode::Random => {
                sample_subdomain(geom, sub, plan.initial_count(), Some(0.0), plan.seed, 3 + i as u64)
            }
            SamplingMode::Grid => grid_subdomain(geom, sub, [plan.initial[0], plan.initial[1], 1], Some(0.0)),
        };
    }

    let n_theta = plan.interface[0];
    for &t in &levels(plan.interface[1], geom.t_end) {
        for k in 0..n_theta {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / n_theta as f64;
            let [x, y] = geom.point_on_circle(theta);
            let normal = geom.interface_normal(x, y)?;
            set.interface.push(InterfacePoint {
                point: SpaceTimePoint { x, y, t },
                normal,
            });
        }
    }

    let k = plan.boundary_per_edge;
    let (lo, hi) = (geom.box_min, geom.box_max);
    let along = |j: usize| lo + (hi - lo) * (j + 1) as f64 / (k + 1) as f64;
    for &t in &levels(plan.boundary_times, geom.t_end) {
        for edge in Edge::ALL {
            for j in 0..k {
                let s = along(j);
                let (x, y) = match edge {
                    Edge::Bottom => (s, lo),
                    Edge::Right => (hi, s),
                    Edge::Top => (s, hi),
                    Edge::Left => (lo, s),
                };
                set.boundary.push(BoundaryPoint {
                    point: SpaceTimePoint { x, y, t },
                    edge,
                });
            }
        }
    }

    for &t in &levels(plan.interior[2], geom.t_end) {
        for o in &plan.observations {
            set.observation.push(SpaceTimePoint { x: o[0], y: o[1], t });
        }
    }
    Ok(set)
}

/// The five pressure observation points in `Ω₂`: the disk center and four
/// points at distance 0.5 along the diagonals.
pub fn observation_points_default() -> Vec<[f64; 2]> {
    let d = 0.5 * std::f64::consts::FRAC_PI_4.cos();
    let e = 0.5 * std::f64::consts::FRAC_PI_4.sin();
    vec![
        [1.5 + d, 1.5 + e],
        [1.5 - d, 1.5 + e],
        [1.5 - d, 1.5 - e],
        [1.5 + d, 1.5 - e],
        [1.5, 1.5],
    ]
}

impl SampleSet {
    /// Columnar text export: `label x y t nx ny edge`, one point per line.
    /// Fields that do not apply are written as `-`.
    pub fn write_columns<W: Write>(&self, mut w: W) -> Result<(), GeometryError> {
        writeln!(w, "label x y t nx ny edge")?;
        let row = |w: &mut W, label: PointLabel, p: &SpaceTimePoint, n: Option<[f64; 2]>, e: Option<Edge>| {
            let (nx, ny) = match n {
                Some([a, b]) => (format!("{a:e}"), format!("{b:e}")),
                None => ("-".into(), "-".into()),
            };
            let edge = e.map(|e| (e as u8).to_string()).unwrap_or_else(|| "-".into());
            writeln!(w, "{} {:e} {:e} {:e} {nx} {ny} {edge}", label.as_str(), p.x, p.y, p.t)
        };
        for sub in [Subdomain::Outer, Subdomain::Inner] {
            for p in &self.interior[sub.index()] {
                row(&mut w, PointLabel::Interior(sub), p, None, None)?;
            }
        }
        for ip in &self.interface {
            row(&mut w, PointLabel::Interface, &ip.point, Some(ip.normal), None)?;
        }
        for bp in &self.boundary {
            row(&mut w, PointLabel::Boundary, &bp.point, None, Some(bp.edge))?;
        }
        for sub in [Subdomain::Outer, Subdomain::Inner] {
            for p in &self.initial[sub.index()] {
                row(&mut w, PointLabel::Initial(sub), p, None, None)?;
            }
        }
        for p in &self.observation {
            row(&mut w, PointLabel::Observation, p, None, None)?;
        }
        Ok(())
    }

    pub fn read_columns<R: BufRead>(r: R) -> Result<Self, GeometryError> {
        let mut set = SampleSet::default();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| GeometryError::Parse { line: lineno, msg };
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 7 {
                return Err(err(format!("expected 7 columns, found {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("`{s}`: {e}")));
            let label = PointLabel::parse(f[0]).ok_or_else(|| err(format!("unknown label `{}`", f[0])))?;
            let p = SpaceTimePoint {
                x: num(f[1])?,
                y: num(f[2])?,
                t: num(f[3])?,
            };
            match label {
                PointLabel::Interior(s) => set.interior[s.index()].push(p),
                PointLabel::Initial(s) => set.initial[s.index()].push(p),
                PointLabel::Observation => set.observation.push(p),
                PointLabel::Interface => set.interface.push(InterfacePoint {
                    point: p,
                    normal: [num(f[4])?, num(f[5])?],
                }),
                PointLabel::Boundary => {
                    let id: u8 = f[6].parse().map_err(|e| err(format!("edge id: {e}")))?;
                    let edge = Edge::from_id(id).ok_or_else(|| err(format!("edge id {id} out of range")))?;
                    set.boundary.push(BoundaryPoint { point: p, edge });
                }
            }
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row1() -> SamplingPlan {
        SamplingPlan::table_row(10, 5, 4, 7)
    }

    #[test]
    fn classification() {
        let g = Geometry::default();
        let c = |x, y| g.classify(&SpaceTimePoint::new(x, y, 0.3));
        assert_eq!(c(1.5, 1.5), Classification::In(Subdomain::Inner));
        assert_eq!(c(0.1, 0.1), Classification::In(Subdomain::Outer));
        assert_eq!(c(2.5, 1.5), Classification::Ambiguous);
    }

    #[test]
    fn normals() {
        let g = Geometry::default();
        assert_eq!(g.interface_normal(2.5, 1.5).unwrap(), [-1.0, 0.0]);
        assert_eq!(g.interface_normal(1.5, 0.5).unwrap(), [0.0, 1.0]);
        let a = std::f64::consts::FRAC_PI_4;
        let n = g.interface_normal(1.5 + a.cos(), 1.5 + a.sin()).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((n[0] + h).abs() < 1e-15 && (n[1] + h).abs() < 1e-15);
        assert!(g.interface_normal(2.0, 1.5).is_err());
    }

    #[test]
    fn table_row_counts() {
        let g = Geometry::default();
        let s = generate_samples(&g, &row1()).unwrap();
        assert_eq!(s.interior[0].len(), 500);
        assert_eq!(s.interior[1].len(), 500);
        assert_eq!(s.interface.len(), 20);
        assert_eq!(s.boundary.len(), 80);
        assert_eq!(s.initial[0].len(), 16);
        assert_eq!(s.initial[1].len(), 16);
        for ip in &s.interface {
            assert!(g.level(ip.point.x, ip.point.y).abs() < 1e-12);
            let n = ip.normal;
            assert!(((n[0] * n[0] + n[1] * n[1]).sqrt() - 1.0).abs() < 1e-14);
            // toward the center
            let to_c = [1.5 - ip.point.x, 1.5 - ip.point.y];
            assert!(n[0] * to_c[0] + n[1] * to_c[1] > 0.0);
        }
        for sub in [Subdomain::Outer, Subdomain::Inner] {
            for p in &s.interior[sub.index()] {
                assert_eq!(g.classify(p), Classification::In(sub));
                assert!((0.0..=1.0).contains(&p.t));
            }
            assert!(s.initial[sub.index()].iter().all(|p| p.t == 0.0));
        }
        for b in &s.boundary {
            let p = b.point;
            let on_edge = p.x == 0.0 || p.x == 3.0 || p.y == 0.0 || p.y == 3.0;
            let corner = (p.x == 0.0 || p.x == 3.0) && (p.y == 0.0 || p.y == 3.0);
            assert!(on_edge && !corner);
        }
        let ts: Vec<f64> = s.interface.iter().map(|p| p.point.t).collect();
        assert!(ts.contains(&0.0) && ts.contains(&1.0));
    }

    #[test]
    fn deterministic() {
        let g = Geometry::default();
        assert_eq!(generate_samples(&g, &row1()).unwrap(), generate_samples(&g, &row1()).unwrap());
        let mut other = row1();
        other.seed = 8;
        assert_ne!(generate_samples(&g, &row1()).unwrap(), generate_samples(&g, &other).unwrap());
    }

    #[test]
    fn observation_defaults() {
        let obs = observation_points_default();
        assert_eq!(obs.len(), 5);
        assert!(obs.contains(&[1.5, 1.5]));
        for o in &obs[..4] {
            let r = ((o[0] - 1.5).powi(2) + (o[1] - 1.5).powi(2)).sqrt();
            assert!((r - 0.5).abs() < 1e-15);
        }
        let g = Geometry::default();
        assert!(obs.iter().all(|o| g.level(o[0], o[1]) < 0.0));
        let mut plan = row1();
        plan.observations = obs;
        let s = generate_samples(&g, &plan).unwrap();
        assert_eq!(s.observation.len(), 25);
    }

    #[test]
    fn grid_mode_is_clipped() {
        let g = Geometry::default();
        let mut plan = row1();
        plan.mode = SamplingMode::Grid;
        let s = generate_samples(&g, &plan).unwrap();
        assert_eq!(s.interior[0].len() + s.interior[1].len(), 500);
        assert!(s.interior[1].iter().all(|p| g.level(p.x, p.y) < 0.0));
    }

    #[test]
    fn bad_plans() {
        let g = Geometry::default();
        let mut p = row1();
        p.interface = [0, 5];
        assert!(generate_samples(&g, &p).is_err());
        let mut p = row1();
        p.observations = vec![[0.1, 0.1]];
        assert!(generate_samples(&g, &p).is_err());
    }

    #[test]
    fn columnar_round_trip() {
        let g = Geometry::default();
        let mut plan = SamplingPlan::table_row(3, 2, 2, 1);
        plan.observations = observation_points_default();
        let s = generate_samples(&g, &plan).unwrap();
        let mut buf = Vec::new();
        s.write_columns(&mut buf).unwrap();
        let back = SampleSet::read_columns(buf.as_slice()).unwrap();
        assert_eq!(s, back);
        let err = SampleSet::read_columns(&b"label x y t nx ny edge\nL9 0 0 0 - - -\n"[..]).unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    proptest! {
        #[test]
        fn interface_points_lie_on_circle(n_theta in 1usize..64, nt in 1usize..8) {
            let g = Geometry::default();
            let mut plan = SamplingPlan::table_row(2, nt, 1, 0);
            plan.interface = [n_theta, nt];
            let s = generate_samples(&g, &plan).unwrap();
            prop_assert_eq!(s.interface.len(), n_theta * nt);
            for ip in &s.interface {
                prop_assert!(g.level(ip.point.x, ip.point.y).abs() < 1e-12);
            }
        }
    }
}
