//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! The training criteria (3, 4, 6) run several 5000-epoch trainings and
//! take most of an hour on one core. `MESHFREE_ACCEPTANCE_QUICK=1` skips
//! them; `MESHFREE_LONG_RUNS=1` adds the 50000-epoch band of criterion 3.

use std::process::ExitCode;
use std::time::Instant;

use meshfree_interface::experiments::{fit_rate, oracle_plan, run_experiment, write_run_outputs, ExperimentConfig, Observations};
use meshfree_interface::geometry::{
    observation_points_default, sample_uniform, Geometry, SamplingPlan, SpaceTimePoint, Subdomain,
};
use meshfree_interface::network::{LayerSpec, Network};
use meshfree_interface::physics::{exact_solution, pde_residual, synthesize_interface_data, ProblemKind, ProblemSpec};
use meshfree_interface::training::{
    assemble_loss, default_weights, init_networks, loss_and_gradient, residual_components, ExactSource, LossWeights,
    NetworkPair, Term, TrainingSet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 3] = [0, 1, 2];

struct Outcome {
    pass: Option<bool>,
    detail: String,
}

fn pass(ok: bool, detail: String) -> Outcome {
    Outcome { pass: Some(ok), detail }
}

fn skipped(detail: &str) -> Outcome {
    Outcome {
        pass: None,
        detail: detail.to_string(),
    }
}

fn env_flag(name: &str) -> bool {
    std::env::var(name).is_ok_and(|v| !v.is_empty() && v != "0")
}

fn main() -> ExitCode {
    // `cargo test -- <filter>` passes extra arguments; this suite has no
    // sub-tests to filter, so listing prints nothing.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let quick = env_flag("MESHFREE_ACCEPTANCE_QUICK");
    let long = env_flag("MESHFREE_LONG_RUNS");

    let c1 = criterion_oracle(&ProblemKind::ALL);
    let c2 = criterion_ad();
    let mut baseline = Vec::new();
    let c3 = if quick { skipped("quick mode") } else { criterion_training(long, &mut baseline) };
    let c4 = if quick { skipped("quick mode") } else { criterion_jump(&baseline) };
    let c5 = criterion_quadrature();
    let c6 = if quick { skipped("quick mode") } else { criterion_fsi() };
    let c7 = criterion_determinism();

    let mut failed = false;
    for (i, c) in [c1, c2, c3, c4, c5, c6, c7].iter().enumerate() {
        let tag = match c.pass {
            Some(true) => "PASS",
            Some(false) => {
                failed = true;
                "FAIL"
            }
            None => "SKIP",
        };
        println!("criterion {}: {tag} — {}", i + 1, c.detail);
    }
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

// ---------------------------------------------------------------------------
// 1 (and the oracle half of 6): exact solution with synthesized data.

/// Closed-form body force of the divergence-free outer flow
/// `v = eᵗ(sin x cos y, −cos x sin y)`, `p = eᵗ sin x sin y`:
/// `f = ρ(∂ₜv + (v·∇)v) + ∇p + 2μv` (since `Δv = −2v`).
fn outer_forcing(rho: f64, mu: f64, p: &SpaceTimePoint) -> [f64; 2] {
    let (et, e2t) = (p.t.exp(), (2.0 * p.t).exp());
    let (sx, cx, sy, cy) = (p.x.sin(), p.x.cos(), p.y.sin(), p.y.cos());
    let v = [et * sx * cy, -et * cx * sy];
    let conv = [e2t * sx * cx, e2t * sy * cy];
    let gp = [et * cx * sy, et * sx * cy];
    [0, 1].map(|k| rho * (v[k] + conv[k]) + gp[k] + 2.0 * mu * v[k])
}

/// Inner flow `v = cos t (cos x cos y, sin x sin y)`, `p = cos t cos(x+y)`.
fn inner_forcing(rho: f64, mu: f64, p: &SpaceTimePoint) -> [f64; 2] {
    let (ct, st) = (p.t.cos(), p.t.sin());
    let (sx, cx, sy, cy) = (p.x.sin(), p.x.cos(), p.y.sin(), p.y.cos());
    let v = [ct * cx * cy, ct * sx * sy];
    let dv = [-st * cx * cy, -st * sx * sy];
    let conv = [-ct * ct * sx * cx, ct * ct * sy * cy];
    let gp = -ct * (p.x + p.y).sin();
    [0, 1].map(|k| rho * (dv[k] + conv[k]) + gp + 2.0 * mu * v[k])
}

/// Structure `u = (cos t cos x cos y, sin t sin x sin y)`:
/// `ρ_s ∂ₜₜu − μ_sΔu − (μ_s+λ_s)∇(∇·u) = f` with `∂ₜₜu = −u`, `Δu = −2u`.
fn solid_forcing(spec: &ProblemSpec, p: &SpaceTimePoint) -> [f64; 2] {
    let (ct, st) = (p.t.cos(), p.t.sin());
    let (sx, cx, sy, cy) = (p.x.sin(), p.x.cos(), p.y.sin(), p.y.cos());
    let u = [ct * cx * cy, st * sx * sy];
    let grad_div = [(st - ct) * cx * cy, -(st - ct) * sx * sy];
    let (rs, ms, ls) = (spec.solid.rho_s, spec.solid.mu_s(), spec.solid.lambda_s());
    [0, 1].map(|k| -rs * u[k] + 2.0 * ms * u[k] - (ms + ls) * grad_div[k])
}

fn criterion_oracle(kinds: &[ProblemKind]) -> Outcome {
    let start = Instant::now();
    let mut worst_comp: f64 = 0.0;
    let mut worst_term: f64 = 0.0;
    let mut worst_indep: f64 = 0.0;
    let mut notes = Vec::new();
    for &kind in kinds {
        let spec = ProblemSpec::new(kind);
        let set = TrainingSet::from_plan(spec.clone(), &Geometry::default(), &oracle_plan(kind, 11)).unwrap();
        let src = ExactSource(&spec);
        for (_, _, r) in residual_components(&set, &src).unwrap() {
            for c in r {
                worst_comp = worst_comp.max(c.value.value.abs());
            }
        }
        let mut w = LossWeights::uniform();
        if kind == ProblemKind::TwoPhaseFlow {
            w.set(Term::Obs, 1.0);
        }
        let loss = assemble_loss(&set, &src, &w).unwrap();
        for t in Term::ALL {
            worst_term = worst_term.max(loss.get(t));
        }
    }

    // Independent oracle: hand-derived forcing fed to the operators, at 1000
    // seeded points per subdomain, including a high-contrast two-phase case.
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut specs: Vec<ProblemSpec> = kinds.iter().map(|&k| ProblemSpec::new(k)).collect();
    if kinds.contains(&ProblemKind::TwoPhaseFlow) {
        specs.push(ProblemSpec::two_phase(1000.0, 1000.0));
    }
    for spec in &specs {
        for sub in [Subdomain::Outer, Subdomain::Inner] {
            for _ in 0..1000 {
                let p = SpaceTimePoint::new(rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0), rng.gen_range(0.0..1.0));
                let (f, scale) = match (spec.kind, sub) {
                    (_, Subdomain::Outer) => (outer_forcing(spec.fluid1.rho, spec.fluid1.mu, &p), spec.fluid1.rho.max(spec.fluid1.mu)),
                    (ProblemKind::TwoPhaseFlow, Subdomain::Inner) => {
                        (inner_forcing(spec.fluid2.rho, spec.fluid2.mu, &p), spec.fluid2.rho.max(spec.fluid2.mu))
                    }
                    _ => (solid_forcing(spec, &p), spec.solid.lambda_s()),
                };
                let r = pde_residual(spec, sub, &exact_solution(spec, sub, &p), f).unwrap();
                for c in r {
                    worst_indep = worst_indep.max(c.value.value.abs() / scale);
                }
            }
        }
        // Kinematic jump of the two-phase solution, in closed form.
        if spec.kind == ProblemKind::TwoPhaseFlow {
            for _ in 0..200 {
                let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let p = SpaceTimePoint::new(1.5 + th.cos(), 1.5 + th.sin(), rng.gen_range(0.0..1.0));
                let (g1, _) = synthesize_interface_data(spec, &p, [-th.cos(), -th.sin()]).unwrap();
                let (et, ct) = (p.t.exp(), p.t.cos());
                let (sx, cx, sy, cy) = (p.x.sin(), p.x.cos(), p.y.sin(), p.y.cos());
                let jump = [et * sx * cy - ct * cx * cy, -et * cx * sy - ct * sx * sy];
                for k in 0..2 {
                    worst_indep = worst_indep.max((g1[k] - jump[k]).abs());
                }
            }
        }
    }
    if worst_indep > 1e-12 {
        notes.push(format!("hand-derived data mismatch {worst_indep:.2e}"));
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = worst_comp < 1e-9 && worst_term < 1e-10 && worst_indep < 1e-12 && secs < 30.0;
    pass(
        ok,
        format!(
            "exact-solution oracle ({}): max component {worst_comp:.2e} (< 1e-9), max loss term {worst_term:.2e} (< 1e-10), \
             hand-derived forcing rel. {worst_indep:.2e} (< 1e-12), {secs:.1} s (< 30 s){}",
            kinds.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(", "),
            if notes.is_empty() { String::new() } else { format!("; {}", notes.join("; ")) }
        ),
    )
}

// ---------------------------------------------------------------------------
// 2: differentiation.

fn shift(p: &SpaceTimePoint, axis: usize, h: f64) -> SpaceTimePoint {
    let mut q = *p;
    match axis {
        0 => q.x += h,
        1 => q.y += h,
        _ => q.t += h,
    }
    q
}

fn criterion_ad() -> Outcome {
    let start = Instant::now();
    let net = Network::init(LayerSpec::with_hidden(&[20, 20], 3).unwrap(), 77);
    let value = |p: &SpaceTimePoint| net.forward_values(std::slice::from_ref(p)).unwrap().remove(0);
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    let (hg, hh) = (1e-5, 1e-4);
    let mut worst_jet: f64 = 0.0;
    for _ in 0..100 {
        let p = SpaceTimePoint::new(rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0), rng.gen_range(0.0..1.0));
        let jets = net.forward_jet(&p).unwrap();
        let f0 = value(&p);
        for (o, j) in jets.iter().enumerate() {
            let (mut num, mut den) = (0.0, 0.0);
            for a in 0..3 {
                let fd = (value(&shift(&p, a, hg))[o] - value(&shift(&p, a, -hg))[o]) / (2.0 * hg);
                num += (j.grad[a] - fd).powi(2);
                den += fd * fd;
                for b in 0..3 {
                    let fd = if a == b {
                        (value(&shift(&p, a, hh))[o] - 2.0 * f0[o] + value(&shift(&p, a, -hh))[o]) / (hh * hh)
                    } else {
                        let pp = shift(&shift(&p, a, hh), b, hh);
                        let pm = shift(&shift(&p, a, hh), b, -hh);
                        let mp = shift(&shift(&p, a, -hh), b, hh);
                        let mm = shift(&shift(&p, a, -hh), b, -hh);
                        (value(&pp)[o] - value(&pm)[o] - value(&mp)[o] + value(&mm)[o]) / (4.0 * hh * hh)
                    };
                    num += (j.hess_at(a, b) - fd).powi(2);
                    den += fd * fd;
                }
            }
            worst_jet = worst_jet.max((num / den).sqrt());
        }
    }

    // Full-loss parameter gradient, 2 hidden layers of 5 neurons.
    let spec = ProblemSpec::new(ProblemKind::TwoPhaseFlow);
    let mut plan = SamplingPlan::table_row(4, 3, 3, 5);
    plan.observations = observation_points_default();
    let set = TrainingSet::from_plan(spec.clone(), &Geometry::default(), &plan).unwrap();
    let w = default_weights(&spec);
    let mut nets = init_networks(&spec, &[5, 5], 6).unwrap();
    let (_, g) = loss_and_gradient(&set, &nets, &w).unwrap();
    let n0 = nets[0].params().len();
    let h = 1e-5;
    let (mut num, mut den) = (0.0, 0.0);
    for (k, gk) in g.iter().enumerate() {
        let (net, i) = if k < n0 { (0, k) } else { (1, k - n0) };
        let orig = nets[net].params()[i];
        nets[net].params_mut()[i] = orig + h;
        let lp = assemble_loss(&set, &NetworkPair(&nets), &w).unwrap().total;
        nets[net].params_mut()[i] = orig - h;
        let lm = assemble_loss(&set, &NetworkPair(&nets), &w).unwrap().total;
        nets[net].params_mut()[i] = orig;
        let fd = (lp - lm) / (2.0 * h);
        num += (gk - fd).powi(2);
        den += fd * fd;
    }
    let grad_rel = (num / den).sqrt();
    let secs = start.elapsed().as_secs_f64();
    pass(
        worst_jet < 1e-5 && grad_rel < 1e-5 && secs < 60.0,
        format!(
            "jets of a 3-20-20-3 net vs central differences at 100 points: rel. {worst_jet:.2e} (< 1e-5); \
             full-loss gradient ({} params) rel. {grad_rel:.2e} (< 1e-5); {secs:.1} s (< 60 s)",
            g.len()
        ),
    )
}

// ---------------------------------------------------------------------------
// 3, 4, 6: training.

fn reduced_config(kind: ProblemKind, rho2: f64, mu2: f64, observations: bool) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.problem.kind = kind;
    cfg.problem.rho2 = rho2;
    cfg.problem.mu2 = mu2;
    cfg.training.reduced = true;
    cfg.training.reduced_epochs = 5000;
    if observations {
        cfg.sampling.observations = Observations::Named("default".into());
    }
    cfg
}

/// `(loss, combined error, combined error without pressure gauge)`.
fn train_once(cfg: &ExperimentConfig, seed: u64) -> Result<(f64, f64, f64), String> {
    let run = run_experiment(cfg, seed).map_err(|e| e.to_string())?;
    let r = &run.report;
    eprintln!(
        "  {} rho2={} obs={:?} seed {seed}: loss {:.3e}, error {:.3e} (raw {:.3e}), {:.0} s",
        r.problem, cfg.problem.rho2, cfg.sampling.observations, r.loss_error, r.approx_error, r.errors.combined_raw, r.wall_seconds
    );
    Ok((r.loss_error, r.approx_error, r.errors.combined_raw))
}

fn criterion_training(long: bool, baseline: &mut Vec<(f64, f64, f64)>) -> Outcome {
    let cfg = reduced_config(ProblemKind::TwoPhaseFlow, 1.0, 1.0, false);
    let mut ok = true;
    let mut parts = Vec::new();
    for seed in SEEDS {
        match train_once(&cfg, seed) {
            Ok(r) => {
                ok &= r.0 < 1e-2 && r.1 < 0.3;
                parts.push(format!("seed {seed}: loss {:.2e}, error {:.2e} (raw {:.2e})", r.0, r.1, r.2));
                baseline.push(r);
            }
            Err(e) => {
                ok = false;
                parts.push(format!("seed {seed}: {e}"));
            }
        }
    }
    let mut detail = format!("two-phase 5000 epochs (loss < 1e-2, error < 0.3): {}", parts.join("; "));
    if long {
        let mut full = cfg.clone();
        full.training.reduced = false;
        full.training.epochs = 50000;
        match train_once(&full, SEEDS[0]) {
            Ok((l, e, _)) => {
                ok &= (1e-6..=1e-3).contains(&l) && (1e-2..=3e-1).contains(&e);
                detail.push_str(&format!(
                    "; 50000 epochs: loss {l:.2e} (in [1e-6, 1e-3]), error {e:.2e} (in [1e-2, 3e-1])"
                ));
            }
            Err(e) => {
                ok = false;
                detail.push_str(&format!("; 50000 epochs: {e}"));
            }
        }
    } else {
        detail.push_str("; 50000-epoch band not run (MESHFREE_LONG_RUNS unset)");
    }
    pass(ok, detail)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn criterion_jump(baseline: &[(f64, f64, f64)]) -> Outcome {
    let errs = |cfg: &ExperimentConfig| -> Result<Vec<(f64, f64, f64)>, String> {
        SEEDS.iter().map(|&s| train_once(cfg, s)).collect()
    };
    let jump = errs(&reduced_config(ProblemKind::TwoPhaseFlow, 1000.0, 1000.0, false));
    let jump_obs = errs(&reduced_config(ProblemKind::TwoPhaseFlow, 1000.0, 1000.0, true));
    let (jump, jump_obs) = match (jump, jump_obs) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return pass(false, format!("run failed: {e}")),
    };
    if baseline.len() != SEEDS.len() {
        return pass(false, "unit-coefficient baseline runs missing".into());
    }
    let med = |v: &[(f64, f64, f64)], raw: bool| median(v.iter().map(|r| if raw { r.2 } else { r.1 }).collect());
    let (m1, mj, mo) = (med(baseline, false), med(&jump, false), med(&jump_obs, false));
    let (r1, rj, ro) = (med(baseline, true), med(&jump, true), med(&jump_obs, true));
    pass(
        mj > m1 && mj >= 2.0 * mo,
        format!(
            "median error over 3 seeds at 5000 epochs: unit {m1:.2e}, jump 1000 {mj:.2e} (must exceed unit), \
             jump + 5 observations {mo:.2e} (must be <= jump/2 = {:.2e}); without pressure gauge: {r1:.2e} / {rj:.2e} / {ro:.2e}",
            mj / 2.0
        ),
    )
}

fn criterion_fsi() -> Outcome {
    let oracle = criterion_oracle(&[ProblemKind::FsiWave, ProblemKind::FsiParabolic]);
    let cfg = reduced_config(ProblemKind::FsiParabolic, 1.0, 1.0, false);
    match train_once(&cfg, SEEDS[0]) {
        Ok((l, e, _)) => pass(
            oracle.pass == Some(true) && l < 5e-2 && e < 0.5,
            format!(
                "FSI oracle {}; parabolic 5000 epochs: loss {l:.2e} (< 5e-2), error {e:.2e} (< 0.5)",
                if oracle.pass == Some(true) { "passes" } else { "FAILS" }
            ),
        ),
        Err(e) => pass(false, format!("FSI parabolic run failed: {e}")),
    }
}

// ---------------------------------------------------------------------------
// 5: Monte-Carlo quadrature rate.

fn criterion_quadrature() -> Outcome {
    let start = Instant::now();
    let geom = Geometry::default();
    // Mean of (x−1.5)² + (y−1.5)² + t over Ω₁ × [0, 1]: the box integral of
    // r² is 2·3·∫₀³(x−1.5)²dx = 13.5, the unit disk's is π/2.
    let pi = std::f64::consts::PI;
    let exact = (13.5 - pi / 2.0) / (9.0 - pi) + 0.5;
    let sizes = [100usize, 1000, 10_000, 100_000];
    let repeats = 20;
    let errs: Vec<f64> = sizes
        .iter()
        .map(|&m| {
            let mse = (0..repeats)
                .map(|r| {
                    let pts = sample_uniform(&geom, Subdomain::Outer, m, 1000 * m as u64 + r);
                    let mean = pts
                        .iter()
                        .map(|p| (p.x - 1.5).powi(2) + (p.y - 1.5).powi(2) + p.t)
                        .sum::<f64>()
                        / m as f64;
                    (mean - exact).powi(2)
                })
                .sum::<f64>()
                / repeats as f64;
            mse.sqrt()
        })
        .collect();
    let alpha = fit_rate(&sizes.map(|m| m as f64), &errs).unwrap();
    let secs = start.elapsed().as_secs_f64();
    pass(
        (0.35..=0.65).contains(&alpha) && secs < 30.0,
        format!(
            "fitted alpha {alpha:.3} (in [0.35, 0.65]) from RMS errors [{}]; {secs:.1} s (< 30 s)",
            errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

// ---------------------------------------------------------------------------
// 7: determinism.

fn criterion_determinism() -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.network.hidden = vec![10, 10];
    cfg.sampling.interior = [5, 5, 3];
    cfg.sampling.boundary = [3, 3];
    cfg.sampling.interface = [4, 3];
    cfg.sampling.initial = [3, 3];
    cfg.training.epochs = 300;
    cfg.training.log_interval = 10;
    cfg.training.deterministic = true;
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let run = run_experiment(&cfg, 42).unwrap();
        write_run_outputs(d.path(), &run).unwrap();
    }
    let same = |f: &str| std::fs::read(dirs[0].path().join(f)).unwrap() == std::fs::read(dirs[1].path().join(f)).unwrap();
    let (h, c) = (same("history.csv"), same("checkpoint.txt"));
    pass(
        h && c,
        format!(
            "two 300-epoch runs, seed 42: history.csv {}, checkpoint.txt {}",
            if h { "byte-identical" } else { "DIFFER" },
            if c { "byte-identical" } else { "DIFFER" }
        ),
    )
}
