use std::collections::BTreeSet;

use nalgebra::DVector;

use super::{ClaimKind, ClaimRecord, ComponentMatch, Expect, Status, Tolerances, VectorComparison, VerifyOptions};
use crate::dynamics::{drift_report, integrate_with, IntegratorConfig};
use crate::error::{Error, Result};
use crate::fields::{cofactor_residual, grad_fd, lie_derivative, ScalarField, State, DEFAULT_FD_STEP};
use crate::jlm::{
    aux_condition_residual, canonical_hamilton_residual, canonical_jacobian_check, multiplier_pde_residual,
    planar_pushforward, timedep_hamiltonian_consistency,
};
use crate::poisson::{
    assemble_matrix, build_3d_pair, casimir_residual, compact_matrix, compatibility_lambda, conformal_match,
    degeneracy, hamiltonian_vector_field, hamiltonian_vector_field_expanded,
    jacobi_relative_bruteforce, jacobi_residual_uv, MatrixField, PoissonUV, BRUTE_FORCE_STEP,
};
use crate::sampling::Sampler;
use crate::systems::{
    system, transforms, Direction, IntegralClaim, LevelValues, Pair3d, Reduction, ReductionSpec, StructureClaim,
    System, Transform, TriHamiltonian,
};

/// Levels sampled per reduction.
const LEVELS: usize = 4;
const PENCIL_CONSTANTS: usize = 10;
const PENCIL_SAMPLES: usize = 100;
const TRANSFORM_SAMPLES: usize = 200;
const DRIFT_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Policy {
    /// Failure is a hard failure.
    Hard,
    /// Failure is a reported mismatch with transcribed data.
    Finding,
    /// Negative control: the residual must exceed the tolerance.
    Above,
}

/// Worst residual over a sample set; evaluation errors (domain exits of a
/// stencil) are counted and skipped.
#[derive(Debug, Clone, Copy)]
struct Measured {
    value: f64,
    evaluated: usize,
    skipped: usize,
}

impl Measured {
    fn empty() -> Self {
        Self {
            value: 0.0,
            evaluated: 0,
            skipped: 0,
        }
    }

    fn single(v: f64) -> Self {
        let mut m = Self::empty();
        m.push(v);
        m
    }

    fn push(&mut self, v: f64) {
        self.evaluated += 1;
        let v = if v.is_finite() { v.abs() } else { f64::INFINITY };
        self.value = self.value.max(v);
    }

    fn absorb(&mut self, other: Measured) {
        self.value = self.value.max(other.value);
        self.evaluated += other.evaluated;
        self.skipped += other.skipped;
    }

    fn over(states: &[State], mut f: impl FnMut(&State) -> Result<f64>) -> Self {
        let mut m = Self::empty();
        for s in states {
            match f(s) {
                Ok(v) => m.push(v),
                Err(_) => m.skipped += 1,
            }
        }
        m
    }

    fn value(&self) -> f64 {
        if self.evaluated == 0 {
            f64::NAN
        } else {
            self.value
        }
    }
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| if x.is_finite() { m.max(x.abs()) } else { f64::INFINITY })
}

fn require(ok: bool, what: &str, s: &State) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::OutsideDomain {
            field: what.to_string(),
            at: s.coords.clone(),
            t: s.t,
        })
    }
}

/// `(1 + max |U|) (1 + max |V|)`.
fn uv_scale(p: &PoissonUV, s: &State) -> f64 {
    (1.0 + p.u(s).amax()) * (1.0 + p.v(s).amax())
}

fn sci(v: f64) -> String {
    format!("{v:.3e}")
}

struct Suite<'a> {
    sys: &'a System,
    opts: &'a VerifyOptions,
    tol: Tolerances,
    claims: Vec<ClaimRecord>,
    comparisons: Vec<VectorComparison>,
}

pub(super) fn run(sys: &System, opts: &VerifyOptions) -> Result<(Vec<ClaimRecord>, Vec<VectorComparison>)> {
    let mut suite = Suite {
        sys,
        opts,
        tol: opts.tolerances(),
        claims: Vec::new(),
        comparisons: Vec::new(),
    };
    let states = suite
        .sampler(0)
        .states(&sys.region, opts.samples, |s| sys.accepts(s))?;
    suite.gradients(&states);
    suite.integrals(&states);
    suite.darboux(&states);
    suite.drift()?;
    if let Some(tri) = &sys.tri {
        suite.tri(tri, &states);
    }
    for c in &sys.claims {
        suite.structure_claim(c, &states);
    }
    if let Some(p) = &sys.pair3d {
        suite.pair3d(p, &states)?;
    }
    for (k, r) in sys.reductions.iter().enumerate() {
        suite.reduction(r, 100 + k as u64)?;
    }
    suite.transforms()?;
    suite.extras(&states)?;
    Ok((suite.claims, suite.comparisons))
}

impl Suite<'_> {
    fn sampler(&self, salt: u64) -> Sampler {
        Sampler::new(self.opts.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt)
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        id: impl Into<String>,
        anchor: &str,
        kind: ClaimKind,
        m: Measured,
        tolerance: f64,
        policy: Policy,
        note: Option<String>,
    ) -> Status {
        let v = m.value();
        let status = match policy {
            Policy::Above if v > tolerance => Status::Pass,
            Policy::Above => Status::Fail,
            _ if v <= tolerance => Status::Pass,
            Policy::Hard => Status::Fail,
            Policy::Finding => Status::MismatchReported,
        };
        self.push(id, anchor, kind, m, tolerance, policy, status, note);
        status
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        id: impl Into<String>,
        anchor: &str,
        kind: ClaimKind,
        m: Measured,
        tolerance: f64,
        policy: Policy,
        status: Status,
        note: Option<String>,
    ) {
        let mut notes: Vec<String> = note.into_iter().collect();
        if m.skipped > 0 {
            notes.push(format!("{} samples skipped outside the stencil domain", m.skipped));
        }
        let id = id.into();
        debug_assert!(self.claims.iter().all(|c| c.id != id), "duplicate claim id {id}");
        self.claims.push(ClaimRecord {
            id,
            anchor: anchor.to_string(),
            kind,
            residual_max: m.value(),
            tolerance,
            expect: if policy == Policy::Above { Expect::Above } else { Expect::Below },
            samples: m.evaluated,
            status,
            note: (!notes.is_empty()).then(|| notes.join("; ")),
        });
    }

    fn gradients(&mut self, states: &[State]) {
        let mut fields = self.sys.scalar_fields();
        if let Some(tri) = &self.sys.tri {
            fields.extend(tri.hamiltonians.iter().cloned());
        }
        let mut seen = BTreeSet::new();
        for f in fields.iter().filter(|f| f.has_analytic_grad()) {
            if !seen.insert(f.name().to_string()) {
                continue;
            }
            let m = Measured::over(states, |s| {
                require(f.in_domain(s), f.name(), s)?;
                let a = f.grad(s)?;
                let n = grad_fd(f, s, DEFAULT_FD_STEP)?;
                Ok(max_abs(a.iter().zip(&n).map(|(x, y)| (x - y) / (1.0 + x.abs()))))
            });
            self.record(
                format!("gradient.{}", f.name()),
                self.sys.anchor,
                ClaimKind::Gradient,
                m,
                self.tol.gradient,
                Policy::Hard,
                None,
            );
        }
    }

    fn integrals(&mut self, states: &[State]) {
        let x = &self.sys.field;
        for i in &self.sys.integrals {
            let name = i.field.name();
            let m = Measured::over(states, |s| lie_derivative(x, &i.field, s));
            match &i.claim {
                IntegralClaim::Conserved => {
                    self.record(
                        format!("conservation.{name}"),
                        i.anchor,
                        ClaimKind::Conservation,
                        m,
                        self.tol.pointwise,
                        Policy::Hard,
                        None,
                    );
                }
                IntegralClaim::Disputed { law } => {
                    let lm = Measured::over(states, |s| {
                        require(law.in_domain(s), law.name(), s)?;
                        Ok(lie_derivative(x, &i.field, s)? - law.eval(s))
                    });
                    let law_ok = lm.value() <= self.tol.law;
                    let verdict = if law_ok {
                        format!("stated as conserved; the measured d{name}/dt follows {} instead", law.name())
                    } else {
                        format!("stated as conserved; the candidate law d{name}/dt = {} does not hold either", law.name())
                    };
                    self.record(
                        format!("conservation.{name}"),
                        i.anchor,
                        ClaimKind::Conservation,
                        m,
                        self.tol.pointwise,
                        Policy::Finding,
                        Some(verdict),
                    );
                    self.record(
                        format!("drift_law.{name}.pointwise"),
                        i.anchor,
                        ClaimKind::DriftLaw,
                        lm,
                        self.tol.law,
                        Policy::Hard,
                        Some(format!("d{name}/dt compared with {}", law.name())),
                    );
                }
            }
        }
    }

    fn darboux(&mut self, states: &[State]) {
        for d in &self.sys.darboux {
            let m = Measured::over(states, |s| cofactor_residual(&self.sys.field, &d.poly, &d.cofactor, s));
            self.record(
                format!("darboux.{}", d.poly.name()),
                d.anchor,
                ClaimKind::Darboux,
                m,
                self.tol.pointwise,
                Policy::Hard,
                Some(format!("cofactor {}", d.cofactor.name())),
            );
        }
    }

    fn drift(&mut self) -> Result<()> {
        let sys = self.sys;
        if sys.integrals.is_empty() {
            return Ok(());
        }
        let fields: Vec<ScalarField> = sys.integrals.iter().map(|i| i.field.clone()).collect();
        let s0 = &sys.default_state;
        let cfg = IntegratorConfig::rk4(DRIFT_STEP, s0.t + sys.drift_horizon);
        let traj = integrate_with(&sys.field, s0, &cfg, &fields)?;
        let entries = drift_report(&traj, &fields);
        for (k, (i, e)) in sys.integrals.iter().zip(&entries).enumerate() {
            let name = i.field.name();
            let mut note = format!("rk4 dt = {DRIFT_STEP} over t in [{}, {}]", s0.t, cfg.t_end);
            if e.flagged {
                note.push_str(&format!("; valid until t = {}", e.valid_until));
            }
            let policy = match i.claim {
                IntegralClaim::Conserved => Policy::Hard,
                IntegralClaim::Disputed { .. } => Policy::Finding,
            };
            self.record(
                format!("drift.{name}"),
                i.anchor,
                ClaimKind::Drift,
                Measured::single(e.drift),
                self.tol.drift,
                policy,
                Some(note),
            );
            if let IntegralClaim::Disputed { law } = &i.claim {
                let series = &traj.integral_series[k];
                let ts: Vec<f64> = traj.samples.iter().map(|s| s.t).collect();
                let mut m = Measured::empty();
                for j in 1..series.len().saturating_sub(1) {
                    let (h0, h1) = (ts[j] - ts[j - 1], ts[j + 1] - ts[j]);
                    if (h0 - h1).abs() > 1e-12 * h0 || !(series[j - 1].is_finite() && series[j + 1].is_finite()) {
                        continue;
                    }
                    let s = &traj.samples[j];
                    if !law.in_domain(s) {
                        m.skipped += 1;
                        continue;
                    }
                    m.push((series[j + 1] - series[j - 1]) / (h0 + h1) - law.eval(s));
                }
                self.record(
                    format!("drift_law.{name}.trajectory"),
                    i.anchor,
                    ClaimKind::DriftLaw,
                    m,
                    self.tol.law,
                    Policy::Hard,
                    Some(format!("central difference of {name} along the rk4 trajectory vs {}", law.name())),
                );
            }
        }
        Ok(())
    }

    fn tri(&mut self, tri: &TriHamiltonian, states: &[State]) {
        let sys = self.sys;
        let tol = self.tol;
        let anchor = tri.theta_anchor;
        let label = |i: usize| format!("N{}", i + 1);
        for i in 0..3 {
            let p = &tri.structures[i];
            let h = &tri.hamiltonians[i];
            let (ha, hb) = (&tri.hamiltonians[(i + 1) % 3], &tri.hamiltonians[(i + 2) % 3]);
            let n = label(i);
            let inside = |s: &State| require(p.in_domain(s), p.name(), s);

            let m = Measured::over(states, |s| {
                inside(s)?;
                Ok(degeneracy(p, s) / uv_scale(p, s))
            });
            self.record(format!("poisson.{n}.degeneracy"), anchor, ClaimKind::Degeneracy, m, tol.degeneracy, Policy::Hard, None);

            let m = Measured::over(states, |s| jacobi_residual_uv(p, s).map(|j| j.relative()));
            self.record(format!("poisson.{n}.jacobi_uv"), anchor, ClaimKind::Jacobi, m, tol.jacobi_uv, Policy::Hard, None);

            let mf = p.matrix_field();
            let m = Measured::over(states, |s| jacobi_relative_bruteforce(&mf, s, BRUTE_FORCE_STEP));
            self.record(
                format!("poisson.{n}.jacobi_bruteforce"),
                anchor,
                ClaimKind::Jacobi,
                m,
                tol.jacobi_bruteforce,
                Policy::Hard,
                None,
            );

            for c in [ha, hb] {
                let m = Measured::over(states, |s| {
                    inside(s)?;
                    Ok(casimir_residual(p, c, s)? / ((1.0 + assemble_matrix(p, s).amax()) * (1.0 + max_abs(c.grad(s)?))))
                });
                self.record(
                    format!("poisson.{n}.casimir.{}", c.name()),
                    anchor,
                    ClaimKind::Casimir,
                    m,
                    tol.casimir,
                    Policy::Hard,
                    None,
                );
            }

            let m = Measured::over(states, |s| {
                inside(s)?;
                let v = hamiltonian_vector_field(p, h, s)?;
                let g = h.grad(s)?;
                let scale = (1.0 + assemble_matrix(p, s).amax()) * (1.0 + max_abs(g.iter().copied()).powi(2));
                Ok(g.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / scale)
            });
            self.record(
                format!("poisson.{n}.conservation_law"),
                anchor,
                ClaimKind::Conservation,
                m,
                tol.casimir,
                Policy::Hard,
                Some(format!("grad {} . N grad {}", h.name(), h.name())),
            );

            let m = Measured::over(states, |s| {
                inside(s)?;
                let c = compact_matrix(ha, hb, &sys.chart, s)?;
                let n2 = assemble_matrix(p, s) * 2.0;
                Ok((c - n2).amax() / (1.0 + n2.amax()))
            });
            self.record(
                format!("poisson.{n}.compact_form"),
                anchor,
                ClaimKind::Structure,
                m,
                tol.pointwise,
                Policy::Hard,
                Some("the compact epsilon form equals twice the block matrix".into()),
            );

            let m = Measured::over(states, |s| {
                inside(s)?;
                let a = hamiltonian_vector_field_expanded(ha, hb, h, &sys.chart, s)?;
                let b = hamiltonian_vector_field(p, h, s)?;
                Ok(max_abs(a.iter().zip(&b).map(|(x, y)| x - y)) / (1.0 + max_abs(b.iter().copied())))
            });
            self.record(format!("poisson.{n}.expanded_form"), anchor, ClaimKind::Structure, m, tol.pointwise, Policy::Hard, None);

            if let Some(theta) = &tri.theta {
                let m = Measured::over(states, |s| {
                    require(theta.in_domain(s), theta.name(), s)?;
                    inside(s)?;
                    Ok(conformal_match(&sys.field, p, h, theta, s)? / (1.0 + max_abs(sys.field.eval(s))))
                });
                let policy = if tri.theta_measured.is_some() { Policy::Finding } else { Policy::Hard };
                self.record(
                    format!("conformal.{n}.stated"),
                    anchor,
                    ClaimKind::Conformal,
                    m,
                    tol.conformal,
                    policy,
                    Some(format!("X = theta N grad {}", h.name())),
                );
            }
            if let Some(theta) = &tri.theta_measured {
                let m = Measured::over(states, |s| {
                    require(theta.in_domain(s), theta.name(), s)?;
                    inside(s)?;
                    Ok(conformal_match(&sys.field, p, h, theta, s)? / (1.0 + max_abs(sys.field.eval(s))))
                });
                self.record(
                    format!("conformal.{n}.measured"),
                    anchor,
                    ClaimKind::Conformal,
                    m,
                    tol.conformal,
                    Policy::Hard,
                    Some(format!("factor found by direct computation: {}", theta.name())),
                );
            }

            // Conformal invariance under a smooth nonconstant factor.
            let bump = ScalarField::new("bump", 4, |s| 1.0 + 0.5 * s.coords[0].sin() + 0.25 * (s.coords[1] * s.coords[2]).cos());
            let scaled = p.conformal(&bump);
            let m = Measured::over(states, |s| jacobi_residual_uv(&scaled, s).map(|j| j.relative()));
            self.record(
                format!("poisson.{n}.conformal_invariance"),
                anchor,
                ClaimKind::Jacobi,
                m,
                tol.jacobi_uv,
                Policy::Hard,
                Some("Jacobi residual of (1 + sin(x0)/2 + cos(x1 x2)/4) N".into()),
            );

            self.compare_displayed(&n, &tri.displayed[i], p, tri.displayed_anchor, states);
        }

        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let (pi, pj) = (&tri.structures[i], &tri.structures[j]);
            let m = Measured::over(states, |s| {
                require(pi.in_domain(s) && pj.in_domain(s), pi.name(), s)?;
                Ok(compatibility_lambda(pi, pj, s) / (uv_scale(pi, s) * uv_scale(pj, s)).sqrt())
            });
            self.record(
                format!("poisson.lambda.{}{}", label(i), label(j)),
                anchor,
                ClaimKind::Compatibility,
                m,
                tol.pointwise,
                Policy::Hard,
                None,
            );
        }

        let mut sampler = self.sampler(7);
        let cs: Vec<f64> = (0..PENCIL_CONSTANTS).map(|_| sampler.uniform(-2.0, 2.0)).collect();
        let sub = &states[..states.len().min(PENCIL_SAMPLES)];
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let mut m = Measured::empty();
            for &c in &cs {
                let pencil = tri.structures[i].pencil(&tri.structures[j], c);
                m.absorb(Measured::over(sub, |s| jacobi_residual_uv(&pencil, s).map(|r| r.relative())));
            }
            self.record(
                format!("poisson.pencil.{}{}", label(i), label(j)),
                anchor,
                ClaimKind::Pencil,
                m,
                tol.pencil,
                Policy::Hard,
                Some(format!("{PENCIL_CONSTANTS} random constants in [-2, 2]")),
            );
        }

        // Flip the V component that breaks the identity most.
        let (k, bad, m) = (0..3)
            .map(|k| {
                let bad = tri.structures[0].corrupted(k);
                let m = Measured::over(states, |s| jacobi_residual_uv(&bad, s).map(|j| j.relative()));
                (k, bad, m)
            })
            .max_by(|a, b| a.2.value().total_cmp(&b.2.value()))
            .expect("three components");
        let note = format!("N1 with the sign of V{} flipped must fail", k + 1);
        self.record(
            "negative.corrupted_N1.jacobi_uv",
            anchor,
            ClaimKind::NegativeControl,
            m,
            tol.corrupted,
            Policy::Above,
            Some(note.clone()),
        );
        let bad = bad.matrix_field();
        let m = Measured::over(states, |s| jacobi_relative_bruteforce(&bad, s, BRUTE_FORCE_STEP));
        self.record(
            "negative.corrupted_N1.jacobi_bruteforce",
            anchor,
            ClaimKind::NegativeControl,
            m,
            tol.corrupted,
            Policy::Above,
            Some(note),
        );
    }

    fn compare_displayed(&mut self, n: &str, displayed: &PoissonUV, derived: &PoissonUV, anchor: &str, states: &[State]) {
        let names = ["U1", "U2", "U3", "V1", "V2", "V3"];
        let mut diffs = [Measured::empty(); 6];
        let mut ratios: [Vec<f64>; 6] = Default::default();
        for s in states {
            if !(displayed.in_domain(s) && derived.in_domain(s)) {
                continue;
            }
            let (du, dv, cu, cv) = (displayed.u(s), displayed.v(s), derived.u(s), derived.v(s));
            for k in 0..6 {
                let (d, c) = if k < 3 { (du[k], cu[k]) } else { (dv[k - 3], cv[k - 3]) };
                diffs[k].push((d - c) / (1.0 + c.abs()));
                if c.abs() > 1e-6 {
                    ratios[k].push(d / c);
                }
            }
        }
        let tol = self.tol.conformal;
        let mut components = Vec::new();
        let mut worst = Measured::empty();
        let mut mismatched = Vec::new();
        for k in 0..6 {
            let ratio = ratios[k].first().copied().filter(|r0| {
                ratios[k].iter().all(|r| (r - r0).abs() <= 1e-8 * (1.0 + r0.abs()))
            });
            let matches = diffs[k].value() <= tol;
            if !matches {
                mismatched.push(match ratio {
                    Some(r) => format!("{} (ratio {r:.6})", names[k]),
                    None => names[k].to_string(),
                });
            }
            worst.absorb(diffs[k]);
            components.push(ComponentMatch {
                component: names[k].to_string(),
                max_abs_diff: diffs[k].value(),
                ratio,
                matches,
            });
        }
        self.comparisons.push(VectorComparison {
            structure: n.to_string(),
            anchor: anchor.to_string(),
            components,
        });
        let note = (!mismatched.is_empty()).then(|| format!("displayed components differ: {}", mismatched.join(", ")));
        self.record(
            format!("displayed.{n}"),
            anchor,
            ClaimKind::Comparison,
            worst,
            tol,
            Policy::Finding,
            note,
        );
    }

    fn structure_claim(&mut self, c: &StructureClaim, states: &[State]) {
        let tol = self.tol;
        let p = &c.structure;
        let inside = |s: &State| require(p.in_domain(s) && c.theta.in_domain(s) && c.hamiltonian.in_domain(s), c.id, s);
        let m = Measured::over(states, |s| {
            inside(s)?;
            Ok(conformal_match(&self.sys.field, p, &c.hamiltonian, &c.theta, s)? / (1.0 + max_abs(self.sys.field.eval(s))))
        });
        self.record(
            format!("structure.{}.field", c.id),
            c.anchor,
            ClaimKind::Conformal,
            m,
            tol.conformal,
            Policy::Finding,
            Some(format!("X = {} N grad {}", c.theta.name(), c.hamiltonian.name())),
        );
        let m = Measured::over(states, |s| {
            inside(s)?;
            Ok(degeneracy(p, s))
        });
        self.record(format!("structure.{}.degeneracy", c.id), c.anchor, ClaimKind::Degeneracy, m, tol.degeneracy, Policy::Finding, None);
        let m = Measured::over(states, |s| jacobi_residual_uv(p, s).map(|j| j.relative()));
        self.record(format!("structure.{}.jacobi_uv", c.id), c.anchor, ClaimKind::Jacobi, m, tol.jacobi_uv, Policy::Finding, None);
    }

    fn pair3d(&mut self, pair: &Pair3d, states: &[State]) -> Result<()> {
        let tol = self.tol;
        let x = &self.sys.field;
        let apply = |n: &MatrixField, h: &ScalarField, s: &State| -> Result<f64> {
            let g = DVector::from_vec(h.grad(s)?);
            let v = n.eval(s) * g;
            Ok(max_abs(x.eval(s).iter().zip(v.iter()).map(|(a, b)| a - b)))
        };
        let m = Measured::over(states, |s| apply(&pair.n1, &pair.h2, s));
        self.record("bihamiltonian.N1_gradH2", pair.anchor, ClaimKind::Structure, m, tol.pointwise, Policy::Hard, None);
        let m = Measured::over(states, |s| apply(&pair.n2, &pair.h1, s));
        self.record("bihamiltonian.N2_gradH1", pair.anchor, ClaimKind::Structure, m, tol.pointwise, Policy::Hard, None);

        let (from_h1, from_h2) = build_3d_pair(&pair.h1, &pair.h2)?;
        for (id, shown, built, src) in [
            ("bihamiltonian.N1_compact", &pair.n1, &from_h1, "H1"),
            ("bihamiltonian.N2_compact", &pair.n2, &from_h2, "H2"),
        ] {
            let m = Measured::over(states, |s| Ok((shown.eval(s) - built.eval(s) * pair.scale).amax()));
            self.record(
                id,
                pair.anchor,
                ClaimKind::Structure,
                m,
                tol.matrix,
                Policy::Hard,
                Some(format!("matrix built from grad {src}, scale {}", pair.scale)),
            );
        }

        let cross = |a: &ScalarField, b: &ScalarField, s: &State| -> Result<f64> {
            let (ga, gb) = (a.grad(s)?, b.grad(s)?);
            let c = nalgebra::Vector3::new(ga[0], ga[1], ga[2]).cross(&nalgebra::Vector3::new(gb[0], gb[1], gb[2]));
            Ok(max_abs(x.eval(s).iter().zip(c.iter()).map(|(v, w)| v - pair.scale * w)))
        };
        let r12 = Measured::over(states, |s| cross(&pair.h1, &pair.h2, s));
        let r21 = Measured::over(states, |s| cross(&pair.h2, &pair.h1, s));
        let (ok12, ok21) = (r12.value() <= tol.pointwise, r21.value() <= tol.pointwise);
        let (m, status, note) = match (ok12, ok21) {
            (true, false) => (r12, Status::Pass, format!("X = {} grad H1 x grad H2", pair.scale)),
            (false, true) => (r21, Status::Pass, format!("X = {} grad H2 x grad H1", pair.scale)),
            _ => (
                if r12.value() < r21.value() { r12 } else { r21 },
                Status::Fail,
                format!(
                    "orderings (H1, H2) and (H2, H1) give {} and {}",
                    sci(r12.value()),
                    sci(r21.value())
                ),
            ),
        };
        self.push("nambu.ordering", pair.anchor, ClaimKind::Structure, m, tol.pointwise, Policy::Hard, status, Some(note));

        for (id, n) in [("jacobi3d.N1", &pair.n1), ("jacobi3d.N2", &pair.n2)] {
            let m = Measured::over(states, |s| jacobi_relative_bruteforce(n, s, BRUTE_FORCE_STEP));
            self.record(id, pair.anchor, ClaimKind::Jacobi, m, tol.jacobi_bruteforce, Policy::Hard, None);
        }
        let mut sampler = self.sampler(11);
        let sub = &states[..states.len().min(PENCIL_SAMPLES)];
        let mut m = Measured::empty();
        for _ in 0..PENCIL_CONSTANTS {
            let pencil = pair.n1.pencil(&pair.n2, sampler.uniform(-2.0, 2.0));
            m.absorb(Measured::over(sub, |s| jacobi_relative_bruteforce(&pencil, s, BRUTE_FORCE_STEP)));
        }
        self.record(
            "jacobi3d.pencil",
            pair.anchor,
            ClaimKind::Pencil,
            m,
            tol.pencil,
            Policy::Hard,
            Some(format!("N1 + c N2 for {PENCIL_CONSTANTS} random c in [-2, 2]")),
        );
        Ok(())
    }

    fn reduction(&mut self, spec: &ReductionSpec, salt: u64) -> Result<()> {
        let tol = self.tol;
        let sys = self.sys;
        let mut sampler = self.sampler(salt);
        let per = (self.opts.samples / LEVELS).max(5);

        #[derive(Default)]
        struct Acc(std::collections::BTreeMap<&'static str, Measured>);
        impl Acc {
            fn add(&mut self, k: &'static str, m: Measured) {
                self.0.entry(k).or_insert_with(Measured::empty).absorb(m);
            }
        }
        let mut acc = Acc::default();
        let mut first: Option<Reduction> = None;
        let mut ratio_notes = Vec::new();
        let mut reversed = Measured::empty();

        for _ in 0..LEVELS {
            let lv = LevelValues::new(sampler.uniform(0.5, 2.0), sampler.uniform(0.5, 2.0));
            let red = (spec.build)(lv)?;
            let d = &red.derived;
            let states = sampler.states(&red.region, per, |s| (red.filter)(s) && d.in_domain(s))?;
            let zero = ScalarField::constant("0", 2, 0.0);
            let psi = red.psi.as_ref().unwrap_or(&zero);
            let phi = red.phi.as_ref().unwrap_or(&zero);

            if sys.integrals.len() >= 2 {
                let (i1, i2) = (&sys.integrals[0].field, &sys.integrals[1].field);
                acc.add(
                    "lift",
                    Measured::over(&states, |s| {
                        let a = (red.lift)(s);
                        require(i1.in_domain(&a) && i2.in_domain(&a), "lift", s)?;
                        Ok(((i1.eval(&a) - lv.kappa) / (1.0 + lv.kappa.abs()))
                            .abs()
                            .max(((i2.eval(&a) - lv.tau) / (1.0 + lv.tau.abs())).abs()))
                    }),
                );
            }
            acc.add(
                "displayed",
                Measured::over(&states, |s| {
                    require(red.displayed.in_domain(s), "displayed", s)?;
                    let (a, b) = (d.eval(s), red.displayed.eval(s));
                    Ok(max_abs((0..2).map(|k| (a[k] - b[k]) / (1.0 + a[k].abs()))))
                }),
            );
            acc.add("multiplier_pde", Measured::over(&states, |s| multiplier_pde_residual(d, &red.m, s)));
            if red.psi.is_some() || red.phi.is_some() {
                acc.add("aux", Measured::over(&states, |s| aux_condition_residual(d, &red.m, psi, phi, s)));
            }
            acc.add(
                "hamiltonian",
                Measured::over(&states, |s| {
                    let (a, b) = timedep_hamiltonian_consistency(d, &red.m, psi, phi, &red.h, s)?;
                    Ok(a.abs().max(b.abs()))
                }),
            );
            if d.autonomous {
                let vf = d.vector_field();
                acc.add("conservation", Measured::over(&states, |s| lie_derivative(&vf, &red.h, s)));
            }
            if let (Some(q), Some(p)) = (&red.q, &red.p) {
                acc.add("canonical_jacobian", Measured::over(&states, |s| canonical_jacobian_check(&red.m, q, p, s)));
                if let Some(c) = &red.canonical {
                    let to_qp = |s: &State| -> Result<State> {
                        require(q.in_domain(s) && p.in_domain(s), "Q, P", s)?;
                        let cs = State::new(vec![q.eval(s), p.eval(s)], s.t);
                        require(c.q_dot.in_domain(&cs) && c.p_dot.in_domain(&cs) && c.h.in_domain(&cs), c.anchor, s)?;
                        Ok(cs)
                    };
                    acc.add(
                        "canonical_hamilton",
                        Measured::over(&states, |s| {
                            let (a, b) = canonical_hamilton_residual(&c.q_dot, &c.p_dot, &c.h, &to_qp(s)?)?;
                            Ok(a.abs().max(b.abs()))
                        }),
                    );
                    acc.add(
                        "stated_sign",
                        Measured::over(&states, |s| {
                            let cs = to_qp(s)?;
                            let g = c.h.grad(&cs)?;
                            Ok((c.p_dot.eval(&cs) - c.stated_sign * g[0]).abs().max((c.q_dot.eval(&cs) - g[1]).abs()))
                        }),
                    );
                    acc.add(
                        "total_derivative",
                        Measured::over(&states, |s| {
                            let cs = to_qp(s)?;
                            let g = c.h.grad(&cs)?;
                            Ok(c.q_dot.eval(&cs) * g[0] + c.p_dot.eval(&cs) * g[1])
                        }),
                    );
                    let mut rev = Measured::empty();
                    acc.add(
                        "pushforward",
                        Measured::over(&states, |s| {
                            let cs = to_qp(s)?;
                            let (a, b) = planar_pushforward(d, q, p, s)?;
                            let (qd, pd) = (c.q_dot.eval(&cs), c.p_dot.eval(&cs));
                            rev.push((a + qd).abs().max((b + pd).abs()));
                            Ok((a - qd).abs().max((b - pd).abs()))
                        }),
                    );
                    reversed.absorb(rev);
                }
            }
            if let Some(tri) = &sys.tri {
                let h3 = &tri.hamiltonians[2];
                let mut ratios = Vec::new();
                let mut m = Measured::over(&states, |s| {
                    let a = (red.lift)(s);
                    require(h3.in_domain(&a) && red.h.in_domain(s), "H3", s)?;
                    let hv = red.h.eval(s);
                    require(hv.abs() > 1e-6, "H", s)?;
                    ratios.push(h3.eval(&a) / hv);
                    Ok(0.0)
                });
                if let Some(&r0) = ratios.first() {
                    m = Measured::empty();
                    for r in &ratios {
                        m.push((r - r0) / r0.abs().max(1e-300));
                    }
                    ratio_notes.push(format!("(kappa, tau) = ({:.4}, {:.4}): {} / H = {r0:.10}", lv.kappa, lv.tau, h3.name()));
                }
                acc.add("h3_ratio", m);
            }
            first.get_or_insert(red);
        }

        let red = first.expect("LEVELS > 0");
        let name = red.name;
        let policy = if red.normative { Policy::Hard } else { Policy::Finding };
        let jlm = |k: &str| format!("jlm.{name}.{k}");
        let take = |acc: &mut Acc, k: &str| acc.0.remove(k);
        let levels_note = format!("{LEVELS} levels with kappa, tau in [0.5, 2]");

        if let Some(m) = take(&mut acc, "lift") {
            self.record(format!("reduction.{name}.lift_on_level"), red.anchor, ClaimKind::Reduction, m, tol.pointwise, Policy::Hard, Some(levels_note.clone()));
        }
        if let Some(m) = take(&mut acc, "displayed") {
            self.record(
                format!("reduction.{name}.displayed"),
                red.anchor,
                ClaimKind::Comparison,
                m,
                tol.jlm,
                Policy::Finding,
                Some("transcribed planar system vs the one derived from the ambient field".into()),
            );
        }
        let non_normative = (!red.normative).then(|| "transcribed data; reported, not enforced".to_string());
        for (k, kind) in [
            ("multiplier_pde", ClaimKind::Multiplier),
            ("aux", ClaimKind::Multiplier),
            ("hamiltonian", ClaimKind::Hamiltonian),
            ("conservation", ClaimKind::Conservation),
            ("canonical_hamilton", ClaimKind::Canonical),
            ("total_derivative", ClaimKind::Canonical),
        ] {
            if let Some(m) = take(&mut acc, k) {
                let id = if k == "aux" { jlm("aux_condition") } else { jlm(k) };
                self.record(id, red.anchor, kind, m, tol.jlm, policy, non_normative.clone());
            }
        }
        if let Some(m) = take(&mut acc, "canonical_jacobian") {
            self.record(
                jlm("canonical_jacobian"),
                red.anchor,
                ClaimKind::Canonical,
                m,
                tol.jlm,
                Policy::Finding,
                Some("det d(Q, P)/d(x, y) = M".into()),
            );
        }
        if let Some(m) = take(&mut acc, "stated_sign") {
            let sign = red.canonical.as_ref().map(|c| c.stated_sign).unwrap_or(-1.0);
            let note = if sign > 0.0 { "stated relation P' = +dH/dQ" } else { "stated relation P' = -dH/dQ" };
            self.record(jlm("canonical_stated_sign"), red.anchor, ClaimKind::Canonical, m, tol.jlm, Policy::Finding, Some(note.into()));
        }
        if let Some(m) = take(&mut acc, "pushforward") {
            let note = if reversed.value() <= tol.jlm {
                format!("the pushforward equals the negated canonical field (residual {})", sci(reversed.value()))
            } else {
                "pushforward of the derived planar field under (Q, P)".to_string()
            };
            self.record(jlm("canonical_pushforward"), red.anchor, ClaimKind::Canonical, m, tol.jlm, Policy::Finding, Some(note));
        }
        if let Some(m) = take(&mut acc, "h3_ratio") {
            self.record(
                format!("reduction.{name}.h3_ratio"),
                red.anchor,
                ClaimKind::Reduction,
                m,
                tol.jlm,
                policy,
                Some(ratio_notes.join("; ")),
            );
        }
        Ok(())
    }

    fn transforms(&mut self) -> Result<()> {
        let tol = self.tol;
        let sys = self.sys;
        for (k, desc) in transforms().into_iter().enumerate() {
            let overrides: Vec<(String, f64)> = desc
                .params
                .iter()
                .filter_map(|p| sys.params.get(p.name).map(|v| (p.name.to_string(), *v)))
                .collect();
            let Ok(tr) = desc.instantiate(&overrides) else { continue };
            if tr.source != sys.name && tr.target != sys.name {
                continue;
            }
            let mut sampler = self.sampler(1000 + k as u64);
            let states = sampler.states(&tr.region, TRANSFORM_SAMPLES.min(self.opts.samples), |s| {
                tr.source_field.in_domain(s) && tr.apply(s, Direction::Forward).is_ok()
            })?;
            let name = tr.name;
            let m = Measured::over(&states, |s| {
                let y = tr.apply(s, Direction::Forward)?;
                let back = tr.apply(&y, Direction::Inverse)?;
                Ok(max_abs(
                    back.coords
                        .iter()
                        .zip(&s.coords)
                        .map(|(a, b)| (a - b) / (1.0 + b.abs()))
                        .chain([(back.t - s.t) / (1.0 + s.t.abs())]),
                ))
            });
            self.record(format!("transform.{name}.round_trip"), tr.anchor, ClaimKind::Transform, m, tol.pointwise, Policy::Hard, None);

            if name == "lorenz_scaling" {
                self.scaling_limit(&tr, &states, &overrides)?;
                continue;
            }
            let mut rev = Measured::empty();
            let m = Measured::over(&states, |s| {
                let c = crate::systems::pushforward_residual(&tr, s)?;
                rev.push(c.reversed_residual);
                Ok(c.residual)
            });
            let (status, note) = if m.value() <= tol.transform {
                (Status::Pass, None)
            } else if rev.value() <= tol.transform {
                (
                    Status::MismatchReported,
                    Some(format!("the image follows the time-reversed target field (residual {})", sci(rev.value()))),
                )
            } else {
                (Status::Fail, None)
            };
            self.push(format!("transform.{name}.pushforward"), tr.anchor, ClaimKind::Transform, m, tol.transform, Policy::Hard, status, note);
        }
        Ok(())
    }

    /// The rescaled Lorenz field approaches the conservative limit with an
    /// error that shrinks with `1 / sqrt(rho)`.
    fn scaling_limit(&mut self, tr: &Transform, states: &[State], overrides: &[(String, f64)]) -> Result<()> {
        let residual = |tr: &Transform, states: &[State]| {
            Measured::over(states, |s| crate::systems::pushforward_residual(tr, s).map(|c| c.residual))
        };
        let rho = tr.params.get("rho").copied().unwrap_or(1e4);
        let mut o: Vec<(String, f64)> = overrides.iter().filter(|(k, _)| k != "rho").cloned().collect();
        o.push(("rho".into(), rho * 100.0));
        let finer = crate::systems::transform(tr.name, &o)?;
        let r1 = residual(tr, states);
        // Same target-chart points, pulled back through the finer map.
        let fine_states: Vec<State> = states
            .iter()
            .filter_map(|s| tr.apply(s, Direction::Forward).ok())
            .filter_map(|y| finer.apply(&y, Direction::Inverse).ok())
            .collect();
        let r2 = residual(&finer, &fine_states);
        let mut m = Measured::single(r2.value() / r1.value());
        m.skipped = r1.skipped + r2.skipped;
        self.record(
            format!("transform.{}.limit", tr.name),
            tr.anchor,
            ClaimKind::Transform,
            m,
            0.2,
            Policy::Hard,
            Some(format!(
                "pushforward residual {} at rho = {rho}, {} at rho = {}; ratio must fall below 0.2",
                sci(r1.value()),
                sci(r2.value()),
                rho * 100.0
            )),
        );
        Ok(())
    }

    fn extras(&mut self, states: &[State]) -> Result<()> {
        match self.sys.name {
            "raychaudhuri" => self.fourth_integral(states),
            "qi_special" => self.qi_bar_general()?,
            "lu_autonomous" | "lu_transformed" => self.time_map()?,
            _ => {}
        }
        Ok(())
    }

    /// `-(8 / (z u^3)) (l H2 H3 + m H1 H3 + n H1 H2) = 1` with `l`, `m` drawn
    /// at random and `n` solved from the condition.
    fn fourth_integral(&mut self, states: &[State]) {
        let sys = self.sys;
        let h = |k: usize| &sys.integrals[k].field;
        let mut sampler = self.sampler(13);
        let m = Measured::over(states, |s| {
            let (u, z) = (s.coords[0], s.coords[3]);
            let (h1, h2, h3) = (h(0).eval(s), h(1).eval(s), h(2).eval(s));
            require((h1 * h2).abs() > 1e-9, "H1 H2", s)?;
            let (l, m) = (sampler.uniform(-1.0, 1.0), sampler.uniform(-1.0, 1.0));
            let n = (-z * u.powi(3) / 8.0 - l * h2 * h3 - m * h1 * h3) / (h1 * h2);
            let terms = [l * h2 * h3, m * h1 * h3, n * h1 * h2];
            let c = -8.0 / (z * u.powi(3));
            Ok((c * terms.iter().sum::<f64>() - 1.0) / (1.0 + c.abs() * max_abs(terms)))
        });
        self.record(
            "fourth_integral.condition",
            "FIRE",
            ClaimKind::Condition,
            m,
            self.tol.pointwise,
            Policy::Hard,
            Some("l, m random in [-1, 1], n solved from the scalar condition".into()),
        );
    }

    /// The transcribed tbar system away from `epsilon - lambda = 1`.
    fn qi_bar_general(&mut self) -> Result<()> {
        let p = &self.sys.params;
        let (e, l) = (p["epsilon"], p["lambda"]);
        let e2 = if ((e - l) - 1.0).abs() < 1e-12 { l + 2.0 } else { e };
        let other = system("qi_special", &[("epsilon".into(), e2), ("lambda".into(), l)])?;
        let red = other.reduce(Some("QiBar"), LevelValues::new(1.0, 1.0))?;
        let states = self
            .sampler(17)
            .states(&red.region, self.opts.samples.min(TRANSFORM_SAMPLES), |s| {
                (red.filter)(s) && red.derived.in_domain(s) && red.displayed.in_domain(s)
            })?;
        let m = Measured::over(&states, |s| {
            let (a, b) = (red.derived.eval(s), red.displayed.eval(s));
            Ok(max_abs((0..2).map(|k| (a[k] - b[k]) / (1.0 + a[k].abs()))))
        });
        self.record(
            "reduction.QiBar.displayed_general",
            red.anchor,
            ClaimKind::Comparison,
            m,
            self.tol.jlm,
            Policy::Finding,
            Some(format!("epsilon = {e2}, lambda = {l}, (kappa, tau) = (1, 1)")),
        );
        Ok(())
    }

    /// Integrate in `t` and in `tbar = -exp(-alpha t) / alpha` and compare.
    fn time_map(&mut self) -> Result<()> {
        const HORIZON: f64 = 5.0;
        let p = &self.sys.params;
        let a = p["alpha"];
        if a == 0.0 || p.get("gamma").is_some_and(|g| (g + 2.0 * a).abs() > 1e-12) {
            return Ok(());
        }
        let nonaut = system("lu_transformed", &[("alpha".into(), a), ("gamma".into(), -2.0 * a)])?;
        let aut = system("lu_autonomous", &[("alpha".into(), a)])?;
        let steps = (HORIZON / DRIFT_STEP).round();
        let s0 = State::new(aut.default_state.coords.clone(), 0.0);
        let t_traj = integrate_with(&nonaut.field, &s0, &IntegratorConfig::rk4(DRIFT_STEP, HORIZON), &[])?;
        let (tb0, tb1) = (-1.0 / a, -(-a * HORIZON).exp() / a);
        let tb_traj = integrate_with(
            &aut.field,
            &State::new(s0.coords.clone(), tb0),
            &IntegratorConfig::rk4((tb1 - tb0) / steps, tb1),
            &[],
        )?;
        let m = if t_traj.is_partial() || tb_traj.is_partial() {
            Measured::single(f64::INFINITY)
        } else {
            let (x, y) = (t_traj.last(), tb_traj.last());
            Measured::single(max_abs(x.coords.iter().zip(&y.coords).map(|(a, b)| (a - b) / (1.0 + a.abs()))))
        };
        self.record(
            "time_map.consistency",
            "Lu2aut/time",
            ClaimKind::Transform,
            m,
            self.tol.time_map,
            Policy::Hard,
            Some(format!("t in [0, {HORIZON}] against tbar in [{tb0:.6}, {tb1:.6}], alpha = {a}")),
        );
        Ok(())
    }
}
