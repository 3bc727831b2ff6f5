//! Coordinate and time transformations between registered systems.
//!
//! A transform maps `(x, t)` on the source chart to `(y, tau)` on the target
//! chart. The pushforward check differentiates the map along the source flow
//! `(X, 1)` and divides by `d tau / dt`.

use std::sync::Arc;

use serde::Serialize;

use super::{c3, c4, lorenz::lorenz_field, param, resolve_params, system, ParamSpec, Params};
use crate::error::{Error, Result};
use crate::fields::{richardson_vec, State, VectorField};
use crate::sampling::Region;

/// Step for the directional derivative of the forward map.
const PUSHFORWARD_STEP: f64 = 1e-4;

pub type MapFn = Arc<dyn Fn(&State) -> Result<State> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Inverse,
}

/// A transform instantiated at concrete parameter values.
#[derive(Clone)]
pub struct Transform {
    pub name: &'static str,
    pub anchor: &'static str,
    pub source: String,
    pub target: String,
    pub params: Params,
    pub forward: MapFn,
    pub inverse: MapFn,
    pub source_field: VectorField,
    pub target_field: VectorField,
    /// Source states used for pushforward sampling.
    pub region: Region,
}

impl std::fmt::Debug for Transform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transform")
            .field("name", &self.name)
            .field("params", &self.params)
            .finish()
    }
}

impl Transform {
    pub fn apply(&self, s: &State, dir: Direction) -> Result<State> {
        match dir {
            Direction::Forward => (self.forward)(s),
            Direction::Inverse => (self.inverse)(s),
        }
    }
}

#[derive(Clone)]
pub struct TransformDescriptor {
    pub name: &'static str,
    pub anchor: &'static str,
    pub description: &'static str,
    pub params: Vec<ParamSpec>,
    build: fn(&Params) -> Result<Transform>,
}

impl std::fmt::Debug for TransformDescriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "TransformDescriptor({})", self.name)
    }
}

impl TransformDescriptor {
    pub fn instantiate(&self, overrides: &[(String, f64)]) -> Result<Transform> {
        (self.build)(&resolve_params(self.name, &self.params, overrides)?)
    }
}

/// Pushforward residuals: `max |Y' - X_target|` and the same against the
/// time-reversed target `-X_target`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PushforwardCheck {
    pub residual: f64,
    pub reversed_residual: f64,
}

fn spec(name: &'static str, symbol: &'static str, default: f64) -> ParamSpec {
    ParamSpec { name, symbol, default }
}

pub fn transforms() -> Vec<TransformDescriptor> {
    vec![
        TransformDescriptor {
            name: "lu_cov",
            anchor: "cov",
            description: "lu_original (u,x,y,z) -> lu_transformed (s,p,q,r)",
            params: vec![
                spec("alpha", "α", 1.0),
                spec("beta", "β", 2.0),
                spec("gamma", "γ", -2.0),
                spec("delta", "δ", -2.0),
            ],
            build: lu_cov,
        },
        TransformDescriptor {
            name: "lu_time",
            anchor: "Lu2aut/time",
            description: "lu_transformed with γ = −2α, t -> tbar = −e^{−αt}/α, lands on lu_autonomous",
            params: vec![spec("alpha", "α", 1.0)],
            build: lu_time,
        },
        TransformDescriptor {
            name: "qi_trans",
            anchor: "Qitrans",
            description: "qi_original (u,x,y,z) -> qi_transformed (s,q,p,r)",
            params: vec![
                spec("alpha", "α", 0.0),
                spec("beta", "β", 0.0),
                spec("gamma", "γ", -1.0),
                spec("delta", "δ", 2.0),
                spec("epsilon", "ε", 2.0),
                spec("lambda", "λ", 1.0),
            ],
            build: qi_trans,
        },
        TransformDescriptor {
            name: "qi_time",
            anchor: "QiH32/time",
            description: "qi_special, t -> tbar = e^{(ε−λ)t}/(ε−λ)",
            params: vec![spec("epsilon", "ε", 2.0), spec("lambda", "λ", 1.0)],
            build: qi_time,
        },
        TransformDescriptor {
            name: "lorenz_rho0",
            anchor: "has/map",
            description: "Lorenz(σ=1/2, ρ=0, β=1) (x,y,z) -> lorenz_rho0 (u,v,w), tbar = 2e^{−t/2}",
            params: Vec::new(),
            build: lorenz_rho0,
        },
        TransformDescriptor {
            name: "lorenz_scaling",
            anchor: "trclim",
            description: "Lorenz(σ,ρ,β) -> lorenz_conservative via (εx, σε²y, σε²z, t/ε), ε = (σρ)^{−1/2}",
            params: vec![spec("sigma", "σ", 10.0), spec("rho", "ρ", 1.0e4), spec("beta", "β", 8.0 / 3.0)],
            build: lorenz_scaling,
        },
    ]
}

pub fn transform(name: &str, overrides: &[(String, f64)]) -> Result<Transform> {
    transforms()
        .into_iter()
        .find(|d| d.name == name)
        .ok_or_else(|| Error::UnknownTransform(name.to_string()))?
        .instantiate(overrides)
}

pub fn apply_transform(name: &str, s: &State, dir: Direction, overrides: &[(String, f64)]) -> Result<State> {
    transform(name, overrides)?.apply(s, dir)
}

/// Pushforward of the source field at source state `s` compared with the
/// target field at the image point.
pub fn pushforward_residual(tr: &Transform, s: &State) -> Result<PushforwardCheck> {
    let x = tr.source_field.eval(s);
    let image = (tr.forward)(s)?;
    let path = |h: f64| {
        let moved = State::new(
            s.coords.iter().zip(&x).map(|(c, v)| c + h * v).collect::<Vec<_>>(),
            s.t + h,
        );
        let y = (tr.forward)(&moved).ok()?;
        let mut out = y.coords;
        out.push(y.t);
        Some(out)
    };
    let d = richardson_vec(path, 0.0, PUSHFORWARD_STEP).ok_or_else(|| Error::TransformDomain {
        transform: tr.name.to_string(),
        t: s.t,
    })?;
    let (dy, dtau) = d.split_at(d.len() - 1);
    let target = tr.target_field.eval(&image);
    let (mut residual, mut reversed_residual) = (0.0f64, 0.0f64);
    for (a, b) in dy.iter().zip(&target) {
        let v = a / dtau[0];
        residual = residual.max((v - b).abs());
        reversed_residual = reversed_residual.max((v + b).abs());
    }
    Ok(PushforwardCheck {
        residual,
        reversed_residual,
    })
}

fn domain_err(name: &str, t: f64) -> Error {
    Error::TransformDomain {
        transform: name.to_string(),
        t,
    }
}

fn lu_cov(p: &Params) -> Result<Transform> {
    let (a, g) = (param(p, "alpha"), param(p, "gamma"));
    let overrides: Vec<(String, f64)> = p.iter().map(|(k, v)| (k.clone(), *v)).collect();
    let source = system("lu_original", &overrides)?;
    let target = system("lu_transformed", &[("alpha".into(), a), ("gamma".into(), g)])?;
    let forward: MapFn = Arc::new(move |s| {
        let [u, x, y, z] = c4(s);
        let (eg, ea) = ((-g * s.t).exp(), (a * s.t).exp());
        Ok(State::new(vec![u * eg, x * ea, y * eg, z * eg], s.t))
    });
    let inverse: MapFn = Arc::new(move |s| {
        let [sv, pv, q, r] = c4(s);
        let (eg, ea) = ((g * s.t).exp(), (-a * s.t).exp());
        Ok(State::new(vec![sv * eg, pv * ea, q * eg, r * eg], s.t))
    });
    Ok(Transform {
        name: "lu_cov",
        anchor: "cov",
        source: "lu_original".into(),
        target: "lu_transformed".into(),
        params: p.clone(),
        forward,
        inverse,
        source_field: source.field,
        target_field: target.field,
        region: Region::cube(4, 2.0).with_time(-1.0, 1.0),
    })
}

fn lu_time(p: &Params) -> Result<Transform> {
    let a = param(p, "alpha");
    if a == 0.0 {
        return Err(Error::InvalidConfig("lu_time needs α ≠ 0".into()));
    }
    let source = system("lu_transformed", &[("alpha".into(), a), ("gamma".into(), -2.0 * a)])?;
    let target = system("lu_autonomous", &[("alpha".into(), a)])?;
    let forward: MapFn = Arc::new(move |s| Ok(State::new(s.coords.clone(), -(-a * s.t).exp() / a)));
    let inverse: MapFn = Arc::new(move |s| {
        let arg = -a * s.t;
        if arg <= 0.0 {
            return Err(domain_err("lu_time", s.t));
        }
        Ok(State::new(s.coords.clone(), -arg.ln() / a))
    });
    Ok(Transform {
        name: "lu_time",
        anchor: "Lu2aut/time",
        source: "lu_transformed".into(),
        target: "lu_autonomous".into(),
        params: p.clone(),
        forward,
        inverse,
        source_field: source.field,
        target_field: target.field,
        region: Region::cube(4, 2.0).with_time(0.0, 1.0),
    })
}

fn qi_trans(p: &Params) -> Result<Transform> {
    let (a, g, l) = (param(p, "alpha"), param(p, "gamma"), param(p, "lambda"));
    let k = g + l;
    let overrides: Vec<(String, f64)> = p.iter().map(|(k, v)| (k.clone(), *v)).collect();
    let source = system("qi_original", &overrides)?;
    let target_overrides: Vec<(String, f64)> = overrides.iter().filter(|(k, _)| k != "delta").cloned().collect();
    let target = system("qi_transformed", &target_overrides)?;
    let forward: MapFn = Arc::new(move |s| {
        let [u, x, y, z] = c4(s);
        let (ek, ea) = ((k * s.t).exp(), (a * s.t).exp());
        Ok(State::new(vec![u * ek, y * ea, x * ea, z * ek], s.t))
    });
    let inverse: MapFn = Arc::new(move |s| {
        let [sv, q, pv, r] = c4(s);
        let (ek, ea) = ((-k * s.t).exp(), (-a * s.t).exp());
        Ok(State::new(vec![sv * ek, pv * ea, q * ea, r * ek], s.t))
    });
    Ok(Transform {
        name: "qi_trans",
        anchor: "Qitrans",
        source: "qi_original".into(),
        target: "qi_transformed".into(),
        params: p.clone(),
        forward,
        inverse,
        source_field: source.field,
        target_field: target.field,
        region: Region::cube(4, 2.0).with_time(-1.0, 1.0),
    })
}

fn qi_time(p: &Params) -> Result<Transform> {
    let (e, l) = (param(p, "epsilon"), param(p, "lambda"));
    let c = e - l;
    let source = system("qi_special", &[("epsilon".into(), e), ("lambda".into(), l)])?;
    let x = source.field.clone();
    let target = VectorField::new("qi_special(tbar)", 4, false, move |s| {
        x.eval(s).into_iter().map(|v| v / (c * s.t)).collect()
    });
    let forward: MapFn = Arc::new(move |s| Ok(State::new(s.coords.clone(), (c * s.t).exp() / c)));
    let inverse: MapFn = Arc::new(move |s| {
        let arg = c * s.t;
        if arg <= 0.0 {
            return Err(domain_err("qi_time", s.t));
        }
        Ok(State::new(s.coords.clone(), arg.ln() / c))
    });
    Ok(Transform {
        name: "qi_time",
        anchor: "QiH32/time",
        source: "qi_special".into(),
        target: "qi_special(tbar)".into(),
        params: p.clone(),
        forward,
        inverse,
        source_field: source.field,
        target_field: target,
        region: Region::cube(4, 2.0).with_range(2, 0.05, 2.0).with_time(0.0, 1.0),
    })
}

fn lorenz_rho0(p: &Params) -> Result<Transform> {
    let target = system("lorenz_rho0", &[])?;
    let forward: MapFn = Arc::new(|s| {
        let [x, y, z] = c3(s);
        let tb = 2.0 * (-0.5 * s.t).exp();
        Ok(State::new(vec![2.0 * x / tb, 4.0 * y / (tb * tb), 4.0 * z / (tb * tb)], tb))
    });
    let inverse: MapFn = Arc::new(|s| {
        if s.t <= 0.0 {
            return Err(domain_err("lorenz_rho0", s.t));
        }
        let [u, v, w] = c3(s);
        let tb = s.t;
        Ok(State::new(
            vec![0.5 * tb * u, 0.25 * tb * tb * v, 0.25 * tb * tb * w],
            -2.0 * (0.5 * tb).ln(),
        ))
    });
    Ok(Transform {
        name: "lorenz_rho0",
        anchor: "has/map",
        source: "lorenz(σ=1/2, ρ=0, β=1)".into(),
        target: "lorenz_rho0".into(),
        params: p.clone(),
        forward,
        inverse,
        source_field: lorenz_field(0.5, 0.0, 1.0),
        target_field: target.field,
        region: Region::cube(3, 2.0).with_time(0.0, 2.0),
    })
}

fn lorenz_scaling(p: &Params) -> Result<Transform> {
    let (sigma, rho, beta) = (param(p, "sigma"), param(p, "rho"), param(p, "beta"));
    if sigma * rho <= 0.0 {
        return Err(Error::InvalidConfig("lorenz_scaling needs σρ > 0".into()));
    }
    let eps = 1.0 / (sigma * rho).sqrt();
    let target = system("lorenz_conservative", &[])?;
    let forward: MapFn = Arc::new(move |s| {
        let [x, y, z] = c3(s);
        let k = sigma * eps * eps;
        Ok(State::new(vec![eps * x, k * y, k * z], s.t / eps))
    });
    let inverse: MapFn = Arc::new(move |s| {
        let [x, y, z] = c3(s);
        let k = sigma * eps * eps;
        Ok(State::new(vec![x / eps, y / k, z / k], s.t * eps))
    });
    let (xs, ys) = (2.0 / eps, 2.0 / (sigma * eps * eps));
    Ok(Transform {
        name: "lorenz_scaling",
        anchor: "trclim",
        source: format!("lorenz(σ={sigma}, ρ={rho}, β={beta})"),
        target: "lorenz_conservative".into(),
        params: p.clone(),
        forward,
        inverse,
        source_field: lorenz_field(sigma, rho, beta),
        target_field: target.field,
        region: Region::cube(3, xs).with_range(1, -ys, ys).with_range(2, -ys, ys),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::Sampler;

    #[test]
    fn round_trips_are_exact() {
        for d in transforms() {
            let tr = d.instantiate(&[]).unwrap();
            let states = Sampler::new(3).states(&tr.region, 50, |_| true).unwrap();
            for s in &states {
                let back = tr.apply(&tr.apply(s, Direction::Forward).unwrap(), Direction::Inverse).unwrap();
                let err = s
                    .coords
                    .iter()
                    .zip(&back.coords)
                    .map(|(a, b)| (a - b).abs() / (1.0 + a.abs()))
                    .fold((s.t - back.t).abs(), f64::max);
                assert!(err < 1e-12, "{} at {s:?}: {err}", d.name);
            }
        }
    }

    #[test]
    fn lu_cov_is_identity_at_t_zero() {
        let s = State::at(vec![0.1, -0.4, 0.7, 1.3]);
        assert_eq!(apply_transform("lu_cov", &s, Direction::Forward, &[]).unwrap(), s);
    }

    #[test]
    fn qi_trans_reorders_under_vanishing_exponents() {
        let s = State::new(vec![0.1, -0.4, 0.7, 1.3], 0.8);
        let y = apply_transform("qi_trans", &s, Direction::Forward, &[]).unwrap();
        assert_eq!(y.coords, vec![0.1, 0.7, -0.4, 1.3]);
    }

    #[test]
    fn exact_pushforwards_vanish() {
        for name in ["lu_cov", "lu_time", "qi_trans", "qi_time"] {
            let tr = transform(name, &[]).unwrap();
            let states = Sampler::new(4).states(&tr.region, 40, |_| true).unwrap();
            for s in &states {
                let r = pushforward_residual(&tr, s).unwrap();
                let scale = 1.0 + tr.target_field.eval(&tr.apply(s, Direction::Forward).unwrap()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(r.residual / scale < 1e-7, "{name}: {r:?}");
            }
        }
    }

    #[test]
    fn rho0_map_reverses_time() {
        let tr = transform("lorenz_rho0", &[]).unwrap();
        let s = State::new(vec![0.3, -0.2, 0.5], 0.4);
        let r = pushforward_residual(&tr, &s).unwrap();
        assert!(r.reversed_residual < 1e-7, "{r:?}");
        assert!(r.residual > 1e-2);
    }

    #[test]
    fn conservative_limit_residual_shrinks_with_epsilon() {
        let at = |rho: f64| {
            let tr = transform("lorenz_scaling", &[("rho".into(), rho)]).unwrap();
            let eps = 1.0 / (10.0 * rho).sqrt();
            let s = State::at(vec![0.5 / eps, 0.3 / (10.0 * eps * eps), 0.2 / (10.0 * eps * eps)]);
            pushforward_residual(&tr, &s).unwrap().residual
        };
        let (a, b) = (at(1e2), at(1e4));
        assert!(b < a / 5.0, "{a} {b}");
    }
}
