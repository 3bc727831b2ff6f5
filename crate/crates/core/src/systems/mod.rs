//! Registry of concrete systems: vector fields, parameters and their
//! constraints, integrals, Darboux pairs, Poisson data, reductions and
//! coordinate/time transformations.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{CoordChart, DomainFn, ScalarField, State, VectorField, ARCSIN_GUARD, DENOMINATOR_GUARD};
use crate::jlm::PlanarSystem;
use crate::poisson::{MatrixField, PoissonUV};
use crate::sampling::Region;

mod lorenz;
mod lu;
mod qi;
mod raychaudhuri;
mod shivamoggi;
pub mod transform;

pub use transform::{
    apply_transform, pushforward_residual, transform, transforms, Direction, PushforwardCheck, Transform, TransformDescriptor,
};

pub type Params = BTreeMap<String, f64>;

#[derive(Debug, Clone, Serialize)]
pub struct ParamSpec {
    pub name: &'static str,
    pub symbol: &'static str,
    pub default: f64,
}

/// Whether a constraint is needed for the vector field itself to be the
/// registered one, or only for the integrals to be conserved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintScope {
    Field,
    Integrals,
}

#[derive(Clone)]
pub struct Constraint {
    pub label: &'static str,
    pub scope: ConstraintScope,
    pub holds: fn(&Params) -> bool,
}

impl fmt::Debug for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Constraint({})", self.label)
    }
}

/// Level values `H1 = kappa`, `H2 = tau` of a reduction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelValues {
    pub kappa: f64,
    pub tau: f64,
}

impl LevelValues {
    pub fn new(kappa: f64, tau: f64) -> Self {
        Self { kappa, tau }
    }
}

/// How the registry states an integral.
#[derive(Debug, Clone)]
pub enum IntegralClaim {
    Conserved,
    /// Claimed conserved, but with a competing candidate law for `dI/dt`
    /// that the verifier measures against.
    Disputed { law: ScalarField },
}

#[derive(Debug, Clone)]
pub struct Integral {
    pub field: ScalarField,
    pub anchor: &'static str,
    pub claim: IntegralClaim,
}

impl Integral {
    fn conserved(field: ScalarField, anchor: &'static str) -> Self {
        Self {
            field,
            anchor,
            claim: IntegralClaim::Conserved,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DarbouxPair {
    pub poly: ScalarField,
    pub cofactor: ScalarField,
    pub anchor: &'static str,
}

/// The cyclic tri-Hamiltonian construction together with the vectors and
/// conformal factor shown alongside it.
#[derive(Debug, Clone)]
pub struct TriHamiltonian {
    pub hamiltonians: [ScalarField; 3],
    pub structures: [PoissonUV; 3],
    pub displayed: [PoissonUV; 3],
    pub displayed_anchor: &'static str,
    /// Stated conformal factor, if one is stated.
    pub theta: Option<ScalarField>,
    /// Factor found by direct computation when it differs from `theta`.
    pub theta_measured: Option<ScalarField>,
    pub theta_anchor: &'static str,
}

/// A single stated Poisson structure with its Hamiltonian, `X = theta N grad H`.
#[derive(Debug, Clone)]
pub struct StructureClaim {
    pub id: &'static str,
    pub structure: PoissonUV,
    pub hamiltonian: ScalarField,
    pub theta: ScalarField,
    pub anchor: &'static str,
}

/// A 3D bi-Hamiltonian pair: `X = N1 grad H2 = N2 grad H1`.
#[derive(Debug, Clone)]
pub struct Pair3d {
    pub h1: ScalarField,
    pub h2: ScalarField,
    /// Displayed matrices.
    pub n1: MatrixField,
    pub n2: MatrixField,
    /// Overall factor between the displayed matrices and the compact
    /// `eps^{abc} d_c H` construction.
    pub scale: f64,
    pub anchor: &'static str,
}

/// A canonical planar system on a `(Q, P)` chart.
#[derive(Debug, Clone)]
pub struct CanonicalSystem {
    pub q_dot: ScalarField,
    pub p_dot: ScalarField,
    pub h: ScalarField,
    /// Sign `s` in the stated relation `P' = s dH/dQ`.
    pub stated_sign: f64,
    pub anchor: &'static str,
}

pub type LiftFn = Arc<dyn Fn(&State) -> State + Send + Sync>;

/// A planar reduction on the common level set of two integrals.
#[derive(Clone)]
pub struct Reduction {
    pub name: &'static str,
    pub anchor: &'static str,
    pub levels: LevelValues,
    /// Built from the ambient field through `lift`.
    pub derived: PlanarSystem,
    /// Transcribed planar system.
    pub displayed: PlanarSystem,
    pub m: ScalarField,
    pub psi: Option<ScalarField>,
    pub phi: Option<ScalarField>,
    pub h: ScalarField,
    pub q: Option<ScalarField>,
    pub p: Option<ScalarField>,
    pub canonical: Option<CanonicalSystem>,
    /// Planar state -> ambient state on the level set.
    pub lift: LiftFn,
    /// Ambient state -> planar state.
    pub project: LiftFn,
    pub region: Region,
    pub filter: DomainFn,
    /// False when the transcribed data is only self-consistent for special
    /// parameter values; its checks are then reported, not enforced.
    pub normative: bool,
}

impl fmt::Debug for Reduction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Reduction")
            .field("name", &self.name)
            .field("levels", &self.levels)
            .finish()
    }
}

pub type ReduceFn = Arc<dyn Fn(LevelValues) -> Result<Reduction> + Send + Sync>;

#[derive(Clone)]
pub struct ReductionSpec {
    pub name: &'static str,
    pub build: ReduceFn,
}

impl fmt::Debug for ReductionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ReductionSpec({})", self.name)
    }
}

/// A system instantiated at concrete parameter values.
#[derive(Clone)]
pub struct System {
    pub name: &'static str,
    pub anchor: &'static str,
    pub chart: CoordChart,
    pub params: Params,
    pub field: VectorField,
    pub integrals: Vec<Integral>,
    pub darboux: Vec<DarbouxPair>,
    pub tri: Option<TriHamiltonian>,
    pub claims: Vec<StructureClaim>,
    pub pair3d: Option<Pair3d>,
    pub reductions: Vec<ReductionSpec>,
    pub default_state: State,
    /// Integration time for drift checks from `default_state`.
    pub drift_horizon: f64,
    pub region: Region,
    pub filter: DomainFn,
}

impl fmt::Debug for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("System")
            .field("name", &self.name)
            .field("params", &self.params)
            .finish()
    }
}

impl System {
    pub fn integral(&self, name: &str) -> Option<&Integral> {
        self.integrals.iter().find(|i| i.field.name() == name)
    }

    pub fn accepts(&self, s: &State) -> bool {
        self.field.in_domain(s) && (self.filter)(s)
    }

    /// Reduction by name, or the first one when `name` is `None`.
    pub fn reduce(&self, name: Option<&str>, lv: LevelValues) -> Result<Reduction> {
        let spec = match name {
            Some(n) => self.reductions.iter().find(|r| r.name == n),
            None => self.reductions.first(),
        }
        .ok_or_else(|| Error::UnknownReduction(name.unwrap_or(self.name).to_string()))?;
        (spec.build)(lv)
    }

    /// Every scalar field the system registers, for gradient oracle checks.
    pub fn scalar_fields(&self) -> Vec<ScalarField> {
        let mut out: Vec<ScalarField> = self.integrals.iter().map(|i| i.field.clone()).collect();
        out.extend(self.darboux.iter().flat_map(|d| [d.poly.clone(), d.cofactor.clone()]));
        if let Some(tri) = &self.tri {
            out.extend(tri.theta.iter().cloned());
            out.extend(tri.theta_measured.iter().cloned());
        }
        out.extend(self.claims.iter().map(|c| c.hamiltonian.clone()));
        out
    }
}

pub type BuildFn = fn(&Params) -> Result<System>;

/// A named system with parameter specs, constraints and a builder.
#[derive(Clone)]
pub struct SystemDescriptor {
    pub name: &'static str,
    pub anchor: &'static str,
    pub description: &'static str,
    pub chart: CoordChart,
    pub params: Vec<ParamSpec>,
    pub constraints: Vec<Constraint>,
    build: BuildFn,
}

impl fmt::Debug for SystemDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemDescriptor").field("name", &self.name).finish()
    }
}

/// Serializable descriptor summary.
#[derive(Debug, Clone, Serialize)]
pub struct DescriptorSummary {
    pub name: String,
    pub anchor: String,
    pub description: String,
    pub chart: CoordChart,
    pub params: Params,
    pub constraints: Vec<ConstraintSummary>,
    pub integrals: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstraintSummary {
    pub label: String,
    pub scope: ConstraintScope,
    pub holds: bool,
}

impl SystemDescriptor {
    pub fn defaults(&self) -> Params {
        self.params
            .iter()
            .map(|p| (p.name.to_string(), p.default))
            .collect()
    }

    /// Defaults overlaid with `overrides`; unknown names are rejected.
    pub fn resolve(&self, overrides: &[(String, f64)]) -> Result<Params> {
        resolve_params(self.name, &self.params, overrides)
    }

    pub fn first_violation(&self, params: &Params) -> Option<&Constraint> {
        self.constraints.iter().find(|c| !(c.holds)(params))
    }

    pub fn check(&self, params: &Params) -> Result<()> {
        match self.first_violation(params) {
            Some(c) => Err(Error::ConstraintViolated {
                system: self.name.to_string(),
                constraint: c.label.to_string(),
            }),
            None => Ok(()),
        }
    }

    /// Instantiate with every declared constraint enforced.
    pub fn instantiate(&self, overrides: &[(String, f64)]) -> Result<System> {
        let params = self.resolve(overrides)?;
        self.check(&params)?;
        (self.build)(&params)
    }

    /// Instantiate without constraint checks (used to show that integrals
    /// drift once their constraints are broken).
    pub fn instantiate_unchecked(&self, overrides: &[(String, f64)]) -> Result<System> {
        let params = self.resolve(overrides)?;
        (self.build)(&params)
    }

    pub fn summary(&self, params: &Params) -> Result<DescriptorSummary> {
        let sys = (self.build)(params)?;
        Ok(DescriptorSummary {
            name: self.name.to_string(),
            anchor: self.anchor.to_string(),
            description: self.description.to_string(),
            chart: self.chart.clone(),
            params: params.clone(),
            constraints: self
                .constraints
                .iter()
                .map(|c| ConstraintSummary {
                    label: c.label.to_string(),
                    scope: c.scope,
                    holds: (c.holds)(params),
                })
                .collect(),
            integrals: sys.integrals.iter().map(|i| i.field.name().to_string()).collect(),
        })
    }
}

/// All registered systems.
pub fn registry() -> Vec<SystemDescriptor> {
    vec![
        lorenz::rho0_descriptor(),
        lorenz::conservative_descriptor(),
        shivamoggi::descriptor(),
        raychaudhuri::descriptor(),
        lu::original_descriptor(),
        lu::transformed_descriptor(),
        lu::autonomous_descriptor(),
        qi::original_descriptor(),
        qi::transformed_descriptor(),
        qi::special_descriptor(),
    ]
}

pub fn descriptor(name: &str) -> Result<SystemDescriptor> {
    registry()
        .into_iter()
        .find(|d| d.name == name)
        .ok_or_else(|| Error::UnknownSystem(name.to_string()))
}

/// Instantiate a registered system with constraints enforced.
pub fn system(name: &str, overrides: &[(String, f64)]) -> Result<System> {
    descriptor(name)?.instantiate(overrides)
}

/// Right-hand side of a registered system.
pub fn eval_field(name: &str, s: &State, overrides: &[(String, f64)]) -> Result<Vec<f64>> {
    let sys = system(name, overrides)?;
    if s.dim() != sys.chart.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.chart.dim(),
            found: s.dim(),
        });
    }
    Ok(sys.field.eval(s))
}

/// Planar reduction of a registered system; `name` is either a system name
/// (its first reduction) or a reduction name.
pub fn reduce(name: &str, lv: LevelValues, overrides: &[(String, f64)]) -> Result<Reduction> {
    if let Ok(d) = descriptor(name) {
        return d.instantiate(overrides)?.reduce(None, lv);
    }
    for d in registry() {
        let Ok(sys) = d.instantiate(overrides) else { continue };
        if sys.reductions.iter().any(|r| r.name == name) {
            return sys.reduce(Some(name), lv);
        }
    }
    Err(Error::UnknownReduction(name.to_string()))
}

/// Defaults of `specs` overlaid with `overrides`, matched by name or symbol.
pub(crate) fn resolve_params(owner: &str, specs: &[ParamSpec], overrides: &[(String, f64)]) -> Result<Params> {
    let mut params: Params = specs.iter().map(|p| (p.name.to_string(), p.default)).collect();
    for (k, v) in overrides {
        let spec = specs
            .iter()
            .find(|p| p.name == k || p.symbol == k)
            .ok_or_else(|| Error::UnknownParameter {
                system: owner.to_string(),
                name: k.clone(),
            })?;
        params.insert(spec.name.to_string(), *v);
    }
    Ok(params)
}

// ---- small helpers shared by the system modules ----

fn param(p: &Params, name: &str) -> f64 {
    *p.get(name).unwrap_or_else(|| panic!("parameter `{name}` missing from resolved set"))
}

fn chart(name: &str, labels: &[&str], distinguished: Option<usize>) -> CoordChart {
    CoordChart::new(name, labels, distinguished).expect("static chart definition")
}

#[inline]
fn c4(s: &State) -> [f64; 4] {
    [s.coords[0], s.coords[1], s.coords[2], s.coords[3]]
}

#[inline]
fn c3(s: &State) -> [f64; 3] {
    [s.coords[0], s.coords[1], s.coords[2]]
}

#[inline]
fn c2(s: &State) -> [f64; 2] {
    [s.coords[0], s.coords[1]]
}

fn nonzero(v: f64) -> bool {
    v.abs() >= DENOMINATOR_GUARD
}

/// Principal angle `arcsin(a / sqrt(a^2 + b^2))` for `b > 0`, evaluated as
/// `atan2(a, b)`, together with its domain test.
fn angle(a: f64, b: f64) -> f64 {
    a.atan2(b)
}

fn angle_domain(a: f64, b: f64) -> bool {
    let r2 = a * a + b * b;
    b > 0.0 && r2 > DENOMINATOR_GUARD && (a / r2.sqrt()).abs() < 1.0 - ARCSIN_GUARD
}

/// `arcsin(q / sqrt(tau))` with the guard on its argument.
fn level_arcsin_domain(q: f64, tau: f64) -> bool {
    tau > 0.0 && (q / tau.sqrt()).abs() < 1.0 - ARCSIN_GUARD && tau - q * q > DENOMINATOR_GUARD
}

fn v3(a: f64, b: f64, c: f64) -> nalgebra::Vector3<f64> {
    nalgebra::Vector3::new(a, b, c)
}

fn planar_chart(x: &str, y: &str) -> CoordChart {
    chart(&format!("{x}{y}"), &[x, y], None)
}

/// `(f, g)` obtained by evaluating the ambient field at lifted states.
fn derived_planar(
    name: &str,
    ambient: &VectorField,
    lift: LiftFn,
    x_index: usize,
    y_index: usize,
    planar: CoordChart,
    domain: DomainFn,
) -> Result<PlanarSystem> {
    let mk = |label: &str, idx: usize| {
        let (x, l, d) = (ambient.clone(), lift.clone(), domain.clone());
        let mut f = ScalarField::new(format!("{name}.{label}"), 2, move |s| x.eval(&l(s))[idx])
            .with_domain(move |s| d(s));
        if !ambient.is_autonomous() {
            f = f.time_dependent();
        }
        f
    };
    PlanarSystem::new(name, planar, mk("f", x_index), mk("g", y_index))
}

fn domain_fn(f: impl Fn(&State) -> bool + Send + Sync + 'static) -> DomainFn {
    Arc::new(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{grad_fd, lie_derivative, DEFAULT_FD_STEP};
    use crate::sampling::Sampler;

    #[test]
    fn registry_has_ten_distinct_systems() {
        let r = registry();
        assert_eq!(r.len(), 10);
        let mut names: Vec<_> = r.iter().map(|d| d.name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 10);
    }

    #[test]
    fn eval_field_reference_points() {
        assert_eq!(
            eval_field("shivamoggi", &State::at(vec![1.0, 2.0, 1.0, 1.0]), &[]).unwrap(),
            vec![-1.0, 1.0, 1.0, 2.0]
        );
        assert_eq!(
            eval_field("lorenz_conservative", &State::at(vec![1.0, 2.0, 3.0]), &[]).unwrap(),
            vec![2.0, -2.0, 2.0]
        );
        assert_eq!(
            eval_field("qi_special", &State::at(vec![0.0, 1.0, 1.0, 1.0]), &[]).unwrap(),
            vec![2.0, -1.0, 1.0, 2.0]
        );
    }

    #[test]
    fn unknown_names_and_violations_error() {
        assert!(matches!(
            eval_field("nope", &State::at(vec![0.0]), &[]),
            Err(Error::UnknownSystem(_))
        ));
        let err = eval_field("lu_original", &State::at(vec![0.0; 4]), &[("delta".into(), 3.0)]).unwrap_err();
        match err {
            Error::ConstraintViolated { constraint, .. } => assert!(constraint.contains("γ = −β = δ")),
            e => panic!("unexpected {e:?}"),
        }
        assert!(matches!(
            system("shivamoggi", &[("alpha".into(), 1.0)]),
            Err(Error::UnknownParameter { .. })
        ));
    }

    #[test]
    fn shivamoggi_integral_names() {
        let s = system("shivamoggi", &[]).unwrap();
        let names: Vec<_> = s.integrals.iter().map(|i| i.field.name()).collect();
        assert_eq!(names, ["H1", "H2", "H3"]);
        let r = system("raychaudhuri", &[]).unwrap();
        assert_eq!(r.darboux.len(), 4);
    }

    #[test]
    fn every_conserved_integral_has_vanishing_lie_derivative() {
        for d in registry() {
            let sys = d.instantiate(&[]).unwrap();
            let states = Sampler::new(5)
                .states(&sys.region, 200, |s| sys.accepts(s))
                .unwrap();
            for i in sys.integrals.iter().filter(|i| matches!(i.claim, IntegralClaim::Conserved)) {
                for s in &states {
                    let l = lie_derivative(&sys.field, &i.field, s).unwrap();
                    assert!(l.abs() < 1e-10, "{} {} at {s:?}: {l}", d.name, i.field.name());
                }
            }
        }
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        for d in registry() {
            let sys = d.instantiate(&[]).unwrap();
            let states = Sampler::new(9)
                .states(&sys.region, 100, |s| sys.accepts(s))
                .unwrap();
            for f in sys.scalar_fields().iter().filter(|f| f.has_analytic_grad()) {
                for s in states.iter().filter(|s| f.in_domain(s)) {
                    let a = f.grad(s).unwrap();
                    let n = grad_fd(f, s, DEFAULT_FD_STEP).unwrap();
                    for (x, y) in a.iter().zip(&n) {
                        assert!((x - y).abs() / (1.0 + x.abs()) < 1e-6, "{} {}", d.name, f.name());
                    }
                }
            }
        }
    }

    #[test]
    fn summaries_serialize() {
        for d in registry() {
            let s = d.summary(&d.defaults()).unwrap();
            let j = serde_json::to_string(&s).unwrap();
            assert!(j.contains(d.name));
        }
    }

    #[test]
    fn reduce_by_system_and_reduction_name() {
        let r = reduce("raychaudhuri", LevelValues::new(1.0, 0.0), &[]).unwrap();
        assert_eq!(r.name, "RedRay");
        let r = reduce("Lu3", LevelValues::new(1.0, 1.0), &[]).unwrap();
        assert_eq!(r.name, "Lu3");
        assert!(reduce("nothing", LevelValues::new(1.0, 1.0), &[]).is_err());
    }
}
