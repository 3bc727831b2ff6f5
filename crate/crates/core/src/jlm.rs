//! Jacobi last multiplier machinery for planar systems
//! `x' = f(x, y, t)`, `y' = g(x, y, t)`.
//!
//! Every residual uses the analytic gradients attached to the fields and
//! falls back to finite differences otherwise.

use crate::error::{Error, Result};
use crate::fields::{CoordChart, ScalarField, State, VectorField};

/// A planar system on a 2D chart ordered as `(x-like, y-like)`.
#[derive(Debug, Clone)]
pub struct PlanarSystem {
    pub name: String,
    pub chart: CoordChart,
    pub f: ScalarField,
    pub g: ScalarField,
    pub autonomous: bool,
}

impl PlanarSystem {
    pub fn new(name: impl Into<String>, chart: CoordChart, f: ScalarField, g: ScalarField) -> Result<Self> {
        if chart.dim() != 2 || f.dim() != 2 || g.dim() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: chart.dim().max(f.dim()).max(g.dim()),
            });
        }
        let autonomous = !f.is_time_dependent() && !g.is_time_dependent();
        Ok(Self {
            name: name.into(),
            chart,
            f,
            g,
            autonomous,
        })
    }

    pub fn eval(&self, s: &State) -> [f64; 2] {
        [self.f.eval(s), self.g.eval(s)]
    }

    pub fn in_domain(&self, s: &State) -> bool {
        self.f.in_domain(s) && self.g.in_domain(s)
    }

    pub fn vector_field(&self) -> VectorField {
        let (f, g) = (self.f.clone(), self.g.clone());
        let (df, dg) = (self.f.clone(), self.g.clone());
        VectorField::new(self.name.clone(), 2, self.autonomous, move |s| vec![f.eval(s), g.eval(s)])
            .with_domain(move |s| df.in_domain(s) && dg.in_domain(s))
    }
}

/// Multiplier, optional auxiliaries, Hamiltonian and canonical coordinates of
/// one reduction.
#[derive(Debug, Clone)]
pub struct MultiplierBundle {
    pub m: ScalarField,
    pub psi: Option<ScalarField>,
    pub phi: Option<ScalarField>,
    pub h: ScalarField,
    pub q: ScalarField,
    pub p: ScalarField,
}

struct Partials {
    v: f64,
    dx: f64,
    dy: f64,
}

fn partials(field: &ScalarField, s: &State) -> Result<Partials> {
    if !field.in_domain(s) {
        return Err(Error::OutsideDomain {
            field: field.name().to_string(),
            at: s.coords.clone(),
            t: s.t,
        });
    }
    let g = field.grad(s)?;
    Ok(Partials {
        v: field.eval(s),
        dx: g[0],
        dy: g[1],
    })
}

fn zero_like(f: &ScalarField) -> ScalarField {
    ScalarField::constant("0", f.dim(), 0.0)
}

/// `d_t M + d_x(M f) + d_y(M g)`.
pub fn multiplier_pde_residual(sys: &PlanarSystem, m: &ScalarField, s: &State) -> Result<f64> {
    let (mm, f, g) = (partials(m, s)?, partials(&sys.f, s)?, partials(&sys.g, s)?);
    Ok(m.dt(s)? + mm.dx * f.v + mm.v * f.dx + mm.dy * g.v + mm.v * g.dy)
}

/// `(d_x H + M g, d_y H - M f)`; both vanish iff `M (f dy - g dx) = dH`.
pub fn hamiltonian_consistency(sys: &PlanarSystem, m: &ScalarField, h: &ScalarField, s: &State) -> Result<(f64, f64)> {
    let z = zero_like(m);
    timedep_hamiltonian_consistency(sys, m, &z, &z, h, s)
}

/// `d_x(M (f - psi)) + d_y(M (g - phi))`.
pub fn aux_condition_residual(
    sys: &PlanarSystem,
    m: &ScalarField,
    psi: &ScalarField,
    phi: &ScalarField,
    s: &State,
) -> Result<f64> {
    let (mm, f, g) = (partials(m, s)?, partials(&sys.f, s)?, partials(&sys.g, s)?);
    let (ps, ph) = (partials(psi, s)?, partials(phi, s)?);
    Ok(mm.dx * (f.v - ps.v) + mm.v * (f.dx - ps.dx) + mm.dy * (g.v - ph.v) + mm.v * (g.dy - ph.dy))
}

/// `(d_x H + M (g - phi), d_y H - M (f - psi))`. The `dt` component of the
/// defining one-form is not constrained.
pub fn timedep_hamiltonian_consistency(
    sys: &PlanarSystem,
    m: &ScalarField,
    psi: &ScalarField,
    phi: &ScalarField,
    h: &ScalarField,
    s: &State,
) -> Result<(f64, f64)> {
    let (mm, hh) = (partials(m, s)?, partials(h, s)?);
    let (f, g) = (sys.f.eval(s), sys.g.eval(s));
    let (ps, ph) = (psi.eval(s), phi.eval(s));
    Ok((hh.dx + mm.v * (g - ph), hh.dy - mm.v * (f - ps)))
}

/// `det d(Q, P)/d(x, y) - M`.
pub fn canonical_jacobian_check(m: &ScalarField, q: &ScalarField, p: &ScalarField, s: &State) -> Result<f64> {
    let (qq, pp) = (partials(q, s)?, partials(p, s)?);
    Ok(qq.dx * pp.dy - qq.dy * pp.dx - m.eval(s))
}

/// Residuals `(Q' - dH/dP, P' + dH/dQ)` of a canonical system on a `(Q, P)`
/// chart.
pub fn canonical_hamilton_residual(
    q_dot: &ScalarField,
    p_dot: &ScalarField,
    h: &ScalarField,
    s: &State,
) -> Result<(f64, f64)> {
    let hh = partials(h, s)?;
    Ok((q_dot.eval(s) - hh.dy, p_dot.eval(s) + hh.dx))
}

/// `(Q', P')` at `s` by the chain rule, i.e. the pushforward of the planar
/// field under `(x, y, t) -> (Q, P, t)`.
pub fn planar_pushforward(sys: &PlanarSystem, q: &ScalarField, p: &ScalarField, s: &State) -> Result<(f64, f64)> {
    let (qq, pp) = (partials(q, s)?, partials(p, s)?);
    let [f, g] = sys.eval(s);
    Ok((q.dt(s)? + qq.dx * f + qq.dy * g, p.dt(s)? + pp.dx * f + pp.dy * g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn xy() -> CoordChart {
        CoordChart::new("xy", &["x", "y"], None).unwrap()
    }

    fn oscillator() -> PlanarSystem {
        PlanarSystem::new(
            "harmonic",
            xy(),
            ScalarField::new("f", 2, |s| s.get(1)).with_grad(|_| vec![0.0, 1.0]),
            ScalarField::new("g", 2, |s| -s.get(0)).with_grad(|_| vec![-1.0, 0.0]),
        )
        .unwrap()
    }

    fn energy(shift: f64) -> ScalarField {
        ScalarField::new("H", 2, move |s| 0.5 * (s.get(0).powi(2) + s.get(1).powi(2)) + shift)
            .with_grad(|s| vec![s.get(0), s.get(1)])
    }

    #[test]
    fn oscillator_energy_is_consistent_and_gauge_free() {
        let sys = oscillator();
        let one = ScalarField::constant("M", 2, 1.0);
        let s = State::at(vec![0.3, -1.7]);
        assert_eq!(hamiltonian_consistency(&sys, &one, &energy(0.0), &s).unwrap(), (0.0, 0.0));
        assert_eq!(
            hamiltonian_consistency(&sys, &one, &energy(4.0), &s).unwrap(),
            hamiltonian_consistency(&sys, &one, &energy(0.0), &s).unwrap()
        );
        assert_eq!(multiplier_pde_residual(&sys, &one, &s).unwrap(), 0.0);
    }

    #[test]
    fn aux_equal_to_field_vanishes_and_zero_aux_reduces_to_pde() {
        let sys = PlanarSystem::new(
            "nonlinear",
            xy(),
            ScalarField::new("f", 2, |s| s.get(0) * s.get(1)),
            ScalarField::new("g", 2, |s| s.get(1).sin() - s.get(0)),
        )
        .unwrap();
        let m = ScalarField::new("M", 2, |s| (s.get(0) + 2.0 * s.get(1)).exp());
        let s = State::at(vec![0.4, 0.2]);
        assert_abs_diff_eq!(aux_condition_residual(&sys, &m, &sys.f, &sys.g, &s).unwrap(), 0.0, epsilon = 1e-12);
        let z = ScalarField::constant("0", 2, 0.0);
        assert_abs_diff_eq!(
            aux_condition_residual(&sys, &m, &z, &z, &s).unwrap(),
            multiplier_pde_residual(&sys, &m, &s).unwrap(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn identity_canonical_map() {
        let one = ScalarField::constant("M", 2, 1.0);
        let q = ScalarField::coordinate("Q", 2, 0);
        let p = ScalarField::coordinate("P", 2, 1);
        assert_eq!(canonical_jacobian_check(&one, &q, &p, &State::at(vec![1.0, 2.0])).unwrap(), 0.0);
    }

    #[test]
    fn timedep_branch_with_zero_aux_matches_autonomous() {
        let sys = oscillator();
        let one = ScalarField::constant("M", 2, 1.0);
        let z = ScalarField::constant("0", 2, 0.0);
        let s = State::at(vec![0.9, 0.1]);
        assert_eq!(
            timedep_hamiltonian_consistency(&sys, &one, &z, &z, &energy(0.0), &s).unwrap(),
            hamiltonian_consistency(&sys, &one, &energy(0.0), &s).unwrap()
        );
    }

    #[test]
    fn canonical_oscillator_residual() {
        let q_dot = ScalarField::coordinate("Qdot", 2, 1);
        let p_dot = ScalarField::new("Pdot", 2, |s| -s.get(0));
        let s = State::at(vec![0.5, 0.25]);
        assert_eq!(canonical_hamilton_residual(&q_dot, &p_dot, &energy(0.0), &s).unwrap(), (0.0, 0.0));
        let (a, b) = planar_pushforward(&oscillator(), &ScalarField::coordinate("Q", 2, 0), &ScalarField::coordinate("P", 2, 1), &s).unwrap();
        assert_eq!((a, b), (0.25, -0.5));
    }
}
