use super::*;
use crate::poisson::tri_hamiltonian_set;

const EQ_TOL: f64 = 1e-12;

fn uxyz() -> CoordChart {
    chart("uxyz", &["u", "x", "y", "z"], Some(0))
}

fn sqpr() -> CoordChart {
    chart("sqpr", &["s", "q", "p", "r"], Some(0))
}

fn sym(name: &'static str, symbol: &'static str, default: f64) -> ParamSpec {
    ParamSpec { name, symbol, default }
}

pub(super) fn original_descriptor() -> SystemDescriptor {
    SystemDescriptor {
        name: "qi_original",
        anchor: "QiSystem",
        description: "Hyperchaotic Qi system u' = -δu + λz + xy, x' = α(y − x) + yz, y' = β(x + y) − xz, z' = −γz − εu + xy",
        chart: uxyz(),
        params: vec![
            sym("alpha", "α", 0.0),
            sym("beta", "β", 0.0),
            sym("gamma", "γ", -1.0),
            sym("delta", "δ", 2.0),
            sym("epsilon", "ε", 2.0),
            sym("lambda", "λ", 1.0),
        ],
        constraints: vec![Constraint {
            label: "α + β = 0, γ + ε + λ = δ",
            scope: ConstraintScope::Integrals,
            holds: |p| {
                (param(p, "alpha") + param(p, "beta")).abs() < EQ_TOL
                    && (param(p, "gamma") + param(p, "epsilon") + param(p, "lambda") - param(p, "delta")).abs() < EQ_TOL
            },
        }],
        build: build_original,
    }
}

fn build_original(params: &Params) -> Result<System> {
    let (a, b, g, d, e, l) = (
        param(params, "alpha"),
        param(params, "beta"),
        param(params, "gamma"),
        param(params, "delta"),
        param(params, "epsilon"),
        param(params, "lambda"),
    );
    let k = g + l;
    let field = VectorField::new("qi_original", 4, true, move |s| {
        let [u, x, y, z] = c4(s);
        vec![-d * u + l * z + x * y, a * (y - x) + y * z, b * (x + y) - x * z, -g * z - e * u + x * y]
    });
    let i1 = ScalarField::new("I1", 4, move |s| {
        let [u, _, _, z] = c4(s);
        (z - u) * (k * s.t).exp()
    })
    .with_grad(move |s| {
        let ek = (k * s.t).exp();
        vec![-ek, 0.0, 0.0, ek]
    })
    .with_dt(move |s| {
        let [u, _, _, z] = c4(s);
        k * (z - u) * (k * s.t).exp()
    });
    let i2 = ScalarField::new("I2", 4, move |s| {
        let [_, x, y, _] = c4(s);
        (x * x + y * y) * (2.0 * a * s.t).exp()
    })
    .with_grad(move |s| {
        let [_, x, y, _] = c4(s);
        let ea = (2.0 * a * s.t).exp();
        vec![0.0, 2.0 * x * ea, 2.0 * y * ea, 0.0]
    })
    .with_dt(move |s| {
        let [_, x, y, _] = c4(s);
        2.0 * a * (x * x + y * y) * (2.0 * a * s.t).exp()
    });
    Ok(System {
        name: "qi_original",
        anchor: "QiSystem",
        chart: uxyz(),
        params: params.clone(),
        field,
        integrals: vec![Integral::conserved(i1, "QiFI"), Integral::conserved(i2, "QiFI")],
        darboux: Vec::new(),
        tri: None,
        claims: Vec::new(),
        pair3d: None,
        reductions: Vec::new(),
        default_state: State::at(vec![0.2, 0.8, 0.3, 0.5]),
        drift_horizon: 1.0,
        region: Region::cube(4, 2.0).with_time(-1.0, 1.0),
        filter: domain_fn(|_| true),
    })
}

fn h1() -> ScalarField {
    ScalarField::new("H1", 4, |s| s.coords[3] - s.coords[0]).with_grad(|_| vec![-1.0, 0.0, 0.0, 1.0])
}

fn h2() -> ScalarField {
    ScalarField::new("H2", 4, |s| s.coords[2].powi(2) + s.coords[1].powi(2))
        .with_grad(|s| vec![0.0, 2.0 * s.coords[1], 2.0 * s.coords[2], 0.0])
}

fn angle_qp(s: &State) -> f64 {
    angle(s.coords[1], s.coords[2])
}

fn qp_domain(s: &State) -> bool {
    angle_domain(s.coords[1], s.coords[2])
}

pub(super) fn transformed_descriptor() -> SystemDescriptor {
    SystemDescriptor {
        name: "qi_transformed",
        anchor: "hyperQid",
        description: "Qi system in the comoving variables (s, q, p, r), nonautonomous",
        chart: sqpr(),
        params: vec![
            sym("alpha", "α", 0.0),
            sym("beta", "β", 0.0),
            sym("gamma", "γ", -1.0),
            sym("epsilon", "ε", 2.0),
            sym("lambda", "λ", 1.0),
        ],
        constraints: vec![Constraint {
            label: "α + β = 0",
            scope: ConstraintScope::Field,
            holds: |p| (param(p, "alpha") + param(p, "beta")).abs() < EQ_TOL,
        }],
        build: build_transformed,
    }
}

fn build_transformed(params: &Params) -> Result<System> {
    let (a, b, g, e, l) = (
        param(params, "alpha"),
        param(params, "beta"),
        param(params, "gamma"),
        param(params, "epsilon"),
        param(params, "lambda"),
    );
    let k = g + l;
    let field = VectorField::new("qi_transformed", 4, false, move |s| {
        let [sv, q, p, r] = c4(s);
        let w = l * r - e * sv + p * q * ((k - 2.0 * a) * s.t).exp();
        let c = b - r * (-k * s.t).exp();
        vec![w, p * c, -q * c, w]
    });
    let ambient = field.clone();
    Ok(System {
        name: "qi_transformed",
        anchor: "hyperQid",
        chart: sqpr(),
        params: params.clone(),
        field,
        integrals: vec![Integral::conserved(h1(), "QiFI2"), Integral::conserved(h2(), "QiFI2")],
        darboux: Vec::new(),
        tri: None,
        claims: Vec::new(),
        pair3d: None,
        reductions: vec![ReductionSpec {
            name: "QiPl1",
            build: Arc::new(move |lv| qipl1(&ambient, lv, QiParams { a, b, g, e, l })),
        }],
        default_state: State::at(vec![0.2, 0.3, 0.8, 0.5]),
        drift_horizon: 1.0,
        region: Region::cube(4, 2.0).with_range(2, 0.05, 2.0).with_time(0.0, 1.0),
        filter: domain_fn(qp_domain),
    })
}

pub(super) fn special_descriptor() -> SystemDescriptor {
    SystemDescriptor {
        name: "qi_special",
        anchor: "QiH32",
        description: "Qi system with α = β = 0, γ = −λ, δ = ε: s' = r' = λr − εs + pq, q' = −pr, p' = qr",
        chart: sqpr(),
        params: vec![sym("epsilon", "ε", 2.0), sym("lambda", "λ", 1.0)],
        constraints: vec![Constraint {
            label: "ε ≠ λ",
            scope: ConstraintScope::Integrals,
            holds: |p| nonzero(param(p, "epsilon") - param(p, "lambda")),
        }],
        build: build_special,
    }
}

fn build_special(params: &Params) -> Result<System> {
    let (e, l) = (param(params, "epsilon"), param(params, "lambda"));
    let field = VectorField::new("qi_special", 4, true, move |s| {
        let [sv, q, p, r] = c4(s);
        let w = l * r - e * sv + p * q;
        vec![w, -p * r, q * r, w]
    });
    let c = 1.0 / (e - l);
    let h3 = ScalarField::new("H3", 4, move |s| {
        let [sv, q, _, r] = c4(s);
        c * (e * (r - sv) * angle_qp(s) + 0.5 * q * q + 0.5 * r * r)
    })
    .with_grad(move |s| {
        let [sv, q, p, r] = c4(s);
        let n = p * p + q * q;
        let th = angle_qp(s);
        vec![
            -c * e * th,
            c * (e * (r - sv) * p / n + q),
            -c * e * (r - sv) * q / n,
            c * (e * th + r),
        ]
    })
    .with_domain(qp_domain);
    let law = ScalarField::new("-r^2", 4, |s| -s.coords[3].powi(2)).with_grad(|s| vec![0.0, 0.0, 0.0, -2.0 * s.coords[3]]);

    let (h1, h2) = (h1(), h2());
    let structures = tri_hamiltonian_set(&h1, &h2, &h3, &sqpr())?;
    let displayed = [
        PoissonUV::new(
            "QiN.N1",
            sqpr(),
            move |s| {
                let [sv, q, p, r] = c4(s);
                let th = angle_qp(s);
                v3(e * p * th + p * r, -e * q * th - q * r, -e * (r - sv) - p * q) * (2.0 * c)
            },
            move |s| {
                let [_, q, p, _] = c4(s);
                v3(q, p, 0.0) * (2.0 * e * c * angle_qp(s))
            },
        )?,
        PoissonUV::new(
            "QiN.N2",
            sqpr(),
            move |s| {
                let [sv, q, p, r] = c4(s);
                let n = p * p + q * q;
                v3(-e * (r - sv) * q / n, -e * (r - sv) * p / n - q, 0.0) * c
            },
            move |s| {
                let [sv, q, p, r] = c4(s);
                let n = p * p + q * q;
                v3(e * (r - sv) * p / n + q, -e * (r - sv) * q / n, r) * c
            },
        )?,
        PoissonUV::new(
            "QiN.N3",
            sqpr(),
            |s| v3(-2.0 * s.coords[2], 2.0 * s.coords[1], 0.0),
            |s| v3(-2.0 * s.coords[1], -2.0 * s.coords[2], 0.0),
        )?,
    ]
    .map(|p| p.with_domain(qp_domain));

    let ambient = field.clone();
    Ok(System {
        name: "qi_special",
        anchor: "QiH32",
        chart: sqpr(),
        params: params.clone(),
        field,
        integrals: vec![
            Integral::conserved(h1.clone(), "QiFI2"),
            Integral::conserved(h2.clone(), "QiFI2"),
            Integral {
                field: h3.clone(),
                anchor: "QiH32",
                claim: IntegralClaim::Disputed { law },
            },
        ],
        darboux: Vec::new(),
        tri: Some(TriHamiltonian {
            hamiltonians: [h1, h2, h3],
            structures,
            displayed,
            displayed_anchor: "QiH32/UV",
            theta: None,
            theta_measured: None,
            theta_anchor: "QiH32",
        }),
        claims: Vec::new(),
        pair3d: None,
        reductions: vec![ReductionSpec {
            name: "QiBar",
            build: Arc::new(move |lv| qi_bar(&ambient, lv, e, l)),
        }],
        default_state: State::at(vec![0.2, 0.3, 0.8, 0.5]),
        drift_horizon: 10.0,
        region: Region::cube(4, 2.0).with_range(2, 0.05, 2.0),
        filter: domain_fn(qp_domain),
    })
}

#[derive(Clone, Copy)]
struct QiParams {
    a: f64,
    b: f64,
    g: f64,
    e: f64,
    l: f64,
}

/// Level set `r - s = kappa`, `p^2 + q^2 = tau` with `p > 0`, planar
/// coordinates `(r, q)`.
fn qi_level(lv: LevelValues) -> Result<(LiftFn, LiftFn, DomainFn)> {
    let LevelValues { kappa, tau } = lv;
    if tau <= 0.0 {
        return Err(Error::InvalidLevels(format!("tau = {tau} must be positive (tau = p^2 + q^2)")));
    }
    let lift: LiftFn = Arc::new(move |s| {
        let [r, q] = c2(s);
        State::new(vec![r - kappa, q, (tau - q * q).sqrt(), r], s.t)
    });
    let project: LiftFn = Arc::new(|s| State::new(vec![s.coords[3], s.coords[1]], s.t));
    Ok((lift, project, domain_fn(move |s| level_arcsin_domain(s.coords[1], tau))))
}

fn qipl1(ambient: &VectorField, lv: LevelValues, qp: QiParams) -> Result<Reduction> {
    let QiParams { a, b, g, e, l } = qp;
    let LevelValues { kappa, tau } = lv;
    let k = g + l;
    let (lift, project, domain) = qi_level(lv)?;
    let planar = planar_chart("r", "q");
    let derived = derived_planar("QiPl1", ambient, lift.clone(), 3, 1, planar.clone(), domain.clone())?;
    let dom = move |s: &State| level_arcsin_domain(s.coords[1], tau);
    let w = move |q: f64| (tau - q * q).sqrt();
    let em = move |t: f64| ((k - 2.0 * a) * t).exp();
    let ek = move |t: f64| (-k * t).exp();
    let el = move |t: f64| ((e - l) * t).exp();

    let f = ScalarField::new("f", 2, move |s| {
        let [r, q] = c2(s);
        e * kappa + (l - e) * r + q * w(q) * em(s.t)
    })
    .with_grad(move |s| {
        let q = s.coords[1];
        vec![l - e, (w(q) - q * q / w(q)) * em(s.t)]
    })
    .with_dt(move |s| {
        let q = s.coords[1];
        (k - 2.0 * a) * q * w(q) * em(s.t)
    })
    .with_domain(dom);
    let gf = ScalarField::new("g", 2, move |s| {
        let [r, q] = c2(s);
        w(q) * (b - r * ek(s.t))
    })
    .with_grad(move |s| {
        let [r, q] = c2(s);
        vec![-w(q) * ek(s.t), -q / w(q) * (b - r * ek(s.t))]
    })
    .with_dt(move |s| {
        let [r, q] = c2(s);
        k * r * w(q) * ek(s.t)
    })
    .with_domain(dom);
    let displayed = PlanarSystem::new("QiPl1", planar, f, gf)?;

    let m = ScalarField::new("M", 2, move |s| el(s.t) / w(s.coords[1]))
        .with_grad(move |s| {
            let q = s.coords[1];
            vec![0.0, el(s.t) * q / w(q).powi(3)]
        })
        .with_dt(move |s| (e - l) * el(s.t) / w(s.coords[1]))
        .with_domain(dom);
    let psi = ScalarField::new("psi", 2, move |s| (l - e) * s.coords[0]).with_grad(move |_| vec![l - e, 0.0]);
    let phi = ScalarField::new("phi", 2, move |s| b * w(s.coords[1]))
        .with_grad(move |s| vec![0.0, -b * s.coords[1] / w(s.coords[1])])
        .with_domain(dom);

    let sq = tau.sqrt();
    let inner = move |s: &State| {
        let [r, q] = c2(s);
        ek(s.t) * r * r / 2.0 + e * kappa * (q / sq).asin() + q * q / 2.0 * em(s.t)
    };
    let h = ScalarField::new("H", 2, move |s| el(s.t) * inner(s))
        .with_grad(move |s| {
            let [r, q] = c2(s);
            vec![el(s.t) * ek(s.t) * r, el(s.t) * (e * kappa / w(q) + q * em(s.t))]
        })
        .with_dt(move |s| {
            let [r, q] = c2(s);
            (e - l) * el(s.t) * inner(s)
                + el(s.t) * (-k * ek(s.t) * r * r / 2.0 + (k - 2.0 * a) * q * q / 2.0 * em(s.t))
        })
        .with_domain(dom);

    let q_can = ScalarField::new("Q", 2, move |s| el(s.t) * s.coords[0])
        .with_grad(move |s| vec![el(s.t), 0.0])
        .with_dt(move |s| (e - l) * el(s.t) * s.coords[0]);
    let p_can = ScalarField::new("P", 2, move |s| (s.coords[1] / sq).asin() - b * s.t)
        .with_grad(move |s| vec![0.0, 1.0 / w(s.coords[1])])
        .with_dt(move |_| -b)
        .with_domain(dom);

    let en = move |t: f64| ((e + g - 2.0 * a) * t).exp();
    let eg = move |t: f64| (-(g + e) * t).exp();
    let canonical = CanonicalSystem {
        q_dot: ScalarField::new("Qdot", 2, move |s| {
            el(s.t) * e * kappa + tau / 2.0 * (2.0 * (s.coords[1] + b * s.t)).sin() * en(s.t)
        }),
        p_dot: ScalarField::new("Pdot", 2, move |s| -s.coords[0] * eg(s.t)),
        h: ScalarField::new("H(Q,P)", 2, move |s| {
            let [qq, pp] = c2(s);
            eg(s.t) * qq * qq / 2.0 + e * kappa * el(s.t) * (pp + b * s.t) + tau / 2.0 * en(s.t) * (pp + b * s.t).sin().powi(2)
        })
        .with_grad(move |s| {
            let [qq, pp] = c2(s);
            vec![
                eg(s.t) * qq,
                e * kappa * el(s.t) + tau / 2.0 * en(s.t) * (2.0 * (pp + b * s.t)).sin(),
            ]
        })
        .time_dependent(),
        stated_sign: -1.0,
        anchor: "Qi2DCan",
    };

    Ok(Reduction {
        name: "QiPl1",
        anchor: "QiPl1",
        levels: lv,
        derived,
        displayed,
        m,
        psi: Some(psi),
        phi: Some(phi),
        h,
        q: Some(q_can),
        p: Some(p_can),
        canonical: Some(canonical),
        lift,
        project,
        region: Region::cube(2, 2.0).with_range(1, -0.95 * sq, 0.95 * sq).with_time(0.0, 1.0),
        filter: domain,
        normative: true,
    })
}

/// The `qi_special` level-set reduction written in the time
/// `tbar = e^{(eps - lambda) t} / (eps - lambda)`, where the state's `t` is `tbar`.
fn qi_bar(ambient: &VectorField, lv: LevelValues, e: f64, l: f64) -> Result<Reduction> {
    let LevelValues { kappa, tau } = lv;
    if !nonzero(e - l) {
        return Err(Error::InvalidLevels("ε = λ leaves the time map undefined".into()));
    }
    let c = 1.0 / (e - l);
    let (lift, project, domain) = qi_level(lv)?;
    let tdom = move |s: &State| nonzero(s.t) && s.t * (e - l) > 0.0;
    let rescaled = {
        let x = ambient.clone();
        VectorField::new("qi_special(tbar)", 4, false, move |s| {
            x.eval(s).into_iter().map(|v| v * c / s.t).collect()
        })
        .with_domain(tdom)
    };
    let planar = planar_chart("r", "q");
    let full_domain = {
        let d = domain.clone();
        domain_fn(move |s| d(s) && tdom(s))
    };
    let derived = derived_planar("QiBar", &rescaled, lift.clone(), 3, 1, planar.clone(), full_domain.clone())?;
    let dom = move |s: &State| level_arcsin_domain(s.coords[1], tau) && tdom(s);
    let w = move |q: f64| (tau - q * q).sqrt();

    // Transcribed form, without the 1/(eps - lambda) on the q sqrt(tau - q^2) term.
    let displayed = PlanarSystem::new(
        "QiBar",
        planar,
        ScalarField::new("f", 2, move |s| {
            let [r, q] = c2(s);
            (e * kappa * c + q * w(q) - r) / s.t
        })
        .time_dependent()
        .with_domain(dom),
        ScalarField::new("g", 2, move |s| {
            let [r, q] = c2(s);
            -r / s.t * w(q)
        })
        .time_dependent()
        .with_domain(dom),
    )?;
    let m = ScalarField::new("M", 2, move |s| s.t / w(s.coords[1]))
        .with_grad(move |s| {
            let q = s.coords[1];
            vec![0.0, s.t * q / w(q).powi(3)]
        })
        .with_dt(move |s| 1.0 / w(s.coords[1]))
        .with_domain(dom);
    let psi = ScalarField::new("psi", 2, |s| -s.coords[0] / s.t)
        .with_grad(|s| vec![-1.0 / s.t, 0.0])
        .with_dt(|s| s.coords[0] / (s.t * s.t))
        .with_domain(tdom);
    let sq = tau.sqrt();
    let (tbar_lo, tbar_hi) = (0.5 * (e - l).signum(), 2.0 * (e - l).signum());
    let h = ScalarField::new("H", 2, move |s| {
        let [r, q] = c2(s);
        c * (e * kappa * (q / sq).asin() + q * q / 2.0 + r * r / 2.0)
    })
    .with_grad(move |s| {
        let [r, q] = c2(s);
        vec![c * r, c * (e * kappa / w(q) + q)]
    })
    .with_domain(dom);
    Ok(Reduction {
        name: "QiBar",
        anchor: "QiH32/tbar",
        levels: lv,
        derived,
        displayed,
        m,
        psi: Some(psi),
        phi: Some(ScalarField::constant("phi", 2, 0.0)),
        h,
        q: None,
        p: None,
        canonical: None,
        lift,
        project,
        region: Region::cube(2, 2.0)
            .with_range(1, -0.95 * sq, 0.95 * sq)
            .with_time(tbar_lo.min(tbar_hi), tbar_lo.max(tbar_hi)),
        filter: full_domain,
        normative: false,
    })
}
