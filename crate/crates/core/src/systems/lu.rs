use super::*;
use crate::poisson::tri_hamiltonian_set;

const EQ_TOL: f64 = 1e-12;

fn uxyz() -> CoordChart {
    chart("uxyz", &["u", "x", "y", "z"], Some(0))
}

fn spqr() -> CoordChart {
    chart("spqr", &["s", "p", "q", "r"], Some(0))
}

fn integrals_constraint() -> Constraint {
    Constraint {
        label: "γ = −β = δ",
        scope: ConstraintScope::Integrals,
        holds: |p| (param(p, "gamma") + param(p, "beta")).abs() < EQ_TOL && (param(p, "gamma") - param(p, "delta")).abs() < EQ_TOL,
    }
}

pub(super) fn original_descriptor() -> SystemDescriptor {
    SystemDescriptor {
        name: "lu_original",
        anchor: "LuG",
        description: "Hyperchaotic Lü system u' = δu + xz, x' = α(y − x) + u, y' = γy − xz, z' = −βz + xy",
        chart: uxyz(),
        params: vec![
            ParamSpec { name: "alpha", symbol: "α", default: 1.0 },
            ParamSpec { name: "beta", symbol: "β", default: 2.0 },
            ParamSpec { name: "gamma", symbol: "γ", default: -2.0 },
            ParamSpec { name: "delta", symbol: "δ", default: -2.0 },
        ],
        constraints: vec![integrals_constraint()],
        build: build_original,
    }
}

fn build_original(params: &Params) -> Result<System> {
    let (a, b, g, d) = (param(params, "alpha"), param(params, "beta"), param(params, "gamma"), param(params, "delta"));
    let field = VectorField::new("lu_original", 4, true, move |s| {
        let [u, x, y, z] = c4(s);
        vec![d * u + x * z, a * (y - x) + u, g * y - x * z, -b * z + x * y]
    });
    let i1 = ScalarField::new("I1", 4, move |s| {
        let [u, _, y, _] = c4(s);
        (-g * s.t).exp() * (y + u)
    })
    .with_grad(move |s| {
        let e = (-g * s.t).exp();
        vec![e, 0.0, e, 0.0]
    })
    .with_dt(move |s| {
        let [u, _, y, _] = c4(s);
        -g * (-g * s.t).exp() * (y + u)
    });
    let i2 = ScalarField::new("I2", 4, move |s| {
        let [_, _, y, z] = c4(s);
        (-2.0 * g * s.t).exp() * (y * y + z * z)
    })
    .with_grad(move |s| {
        let [_, _, y, z] = c4(s);
        let e = (-2.0 * g * s.t).exp();
        vec![0.0, 0.0, 2.0 * y * e, 2.0 * z * e]
    })
    .with_dt(move |s| {
        let [_, _, y, z] = c4(s);
        -2.0 * g * (-2.0 * g * s.t).exp() * (y * y + z * z)
    });
    Ok(System {
        name: "lu_original",
        anchor: "LuG",
        chart: uxyz(),
        params: params.clone(),
        field,
        integrals: vec![Integral::conserved(i1, "ILu1"), Integral::conserved(i2, "ILu1")],
        darboux: Vec::new(),
        tri: None,
        claims: Vec::new(),
        pair3d: None,
        reductions: Vec::new(),
        default_state: State::at(vec![0.5, 0.2, 0.3, 0.4]),
        drift_horizon: 1.0,
        region: Region::cube(4, 2.0).with_time(-1.0, 1.0),
        filter: domain_fn(|_| true),
    })
}

pub(super) fn transformed_descriptor() -> SystemDescriptor {
    SystemDescriptor {
        name: "lu_transformed",
        anchor: "LunonAut",
        description: "Lü system in the comoving variables (s, p, q, r), nonautonomous",
        chart: spqr(),
        params: vec![
            ParamSpec { name: "alpha", symbol: "α", default: 1.0 },
            ParamSpec { name: "gamma", symbol: "γ", default: -2.0 },
        ],
        constraints: Vec::new(),
        build: build_transformed,
    }
}

fn h1() -> ScalarField {
    ScalarField::new("H1", 4, |s| s.coords[2] + s.coords[0]).with_grad(|_| vec![1.0, 0.0, 1.0, 0.0])
}

fn h2() -> ScalarField {
    ScalarField::new("H2", 4, |s| s.coords[2].powi(2) + s.coords[3].powi(2))
        .with_grad(|s| vec![0.0, 0.0, 2.0 * s.coords[2], 2.0 * s.coords[3]])
}

fn angle_qr(s: &State) -> f64 {
    angle(s.coords[2], s.coords[3])
}

fn qr_domain(s: &State) -> bool {
    angle_domain(s.coords[2], s.coords[3])
}

fn build_transformed(params: &Params) -> Result<System> {
    let (a, g) = (param(params, "alpha"), param(params, "gamma"));
    let field = VectorField::new("lu_transformed", 4, false, move |s| {
        let [sv, p, q, r] = c4(s);
        let (ed, eg) = ((-a * s.t).exp(), ((a + g) * s.t).exp());
        vec![r * p * ed, (a * q + sv) * eg, -r * p * ed, q * p * ed]
    });

    // Time-dependent Hamiltonian paired with U = (0, -r, 0), V = (r, 0, q).
    let bracket = move |s: &State| {
        let [sv, _, q, r] = c4(s);
        (q + sv) * angle_qr(s) - (a - 1.0) * r
    };
    let hi3 = ScalarField::new("H_LuI3", 4, move |s| {
        let p = s.coords[1];
        ((a + g) * s.t).exp() * bracket(s) + 0.5 * p * p * (-a * s.t).exp()
    })
    .with_grad(move |s| {
        let [sv, p, q, r] = c4(s);
        let e = ((a + g) * s.t).exp();
        let n = q * q + r * r;
        let th = angle_qr(s);
        vec![
            e * th,
            p * (-a * s.t).exp(),
            e * (th + (q + sv) * r / n),
            e * (-(q + sv) * q / n - (a - 1.0)),
        ]
    })
    .with_dt(move |s| {
        let p = s.coords[1];
        (a + g) * ((a + g) * s.t).exp() * bracket(s) - 0.5 * a * p * p * (-a * s.t).exp()
    })
    .with_domain(qr_domain);
    let claim = PoissonUV::new(
        "LuI3",
        spqr(),
        |s| v3(0.0, -s.coords[3], 0.0),
        |s| v3(s.coords[3], 0.0, s.coords[2]),
    )?;

    let ambient = field.clone();
    let reductions = vec![ReductionSpec {
        name: "Lu3",
        build: Arc::new(move |lv| lu3(&ambient, lv, a, g)),
    }];

    Ok(System {
        name: "lu_transformed",
        anchor: "LunonAut",
        chart: spqr(),
        params: params.clone(),
        field,
        integrals: vec![Integral::conserved(h1(), "ILu"), Integral::conserved(h2(), "ILu")],
        darboux: Vec::new(),
        tri: None,
        claims: vec![StructureClaim {
            id: "LuI3_structure",
            structure: claim,
            hamiltonian: hi3,
            theta: ScalarField::constant("1", 4, 1.0),
            anchor: "LuI3",
        }],
        pair3d: None,
        reductions,
        default_state: State::at(vec![-0.39, 0.1, 0.4, 0.8]),
        drift_horizon: 5.0,
        region: Region::cube(4, 2.0).with_range(3, 0.05, 2.0).with_time(0.0, 1.0),
        filter: domain_fn(qr_domain),
    })
}

pub(super) fn autonomous_descriptor() -> SystemDescriptor {
    SystemDescriptor {
        name: "lu_autonomous",
        anchor: "Lu2aut",
        description: "Lü system in the rescaled time with γ = −2α: s' = rp, p' = αq + s, q' = −rp, r' = qp",
        chart: spqr(),
        params: vec![ParamSpec { name: "alpha", symbol: "α", default: 1.0 }],
        constraints: Vec::new(),
        build: build_autonomous,
    }
}

fn build_autonomous(params: &Params) -> Result<System> {
    let a = param(params, "alpha");
    let field = VectorField::new("lu_autonomous", 4, true, move |s| {
        let [sv, p, q, r] = c4(s);
        vec![r * p, a * q + sv, -r * p, q * p]
    });
    let h3 = ScalarField::new("H3", 4, move |s| {
        let [sv, p, q, r] = c4(s);
        0.5 * p * p + (q + sv) * angle_qr(s) - (a - 1.0) * r
    })
    .with_grad(move |s| {
        let [sv, p, q, r] = c4(s);
        let n = q * q + r * r;
        let th = angle_qr(s);
        vec![th, p, th + (q + sv) * r / n, -(q + sv) * q / n - (a - 1.0)]
    })
    .with_domain(qr_domain);
    let (h1, h2) = (h1(), h2());
    let structures = tri_hamiltonian_set(&h1, &h2, &h3, &spqr())?;
    let displayed = [
        PoissonUV::new(
            "Lu.N1",
            spqr(),
            move |s| {
                let [sv, p, q, r] = c4(s);
                v3(-2.0 * a * q + sv + r * angle_qr(s), -r * p, q * p)
            },
            |s| {
                let [_, _, q, r] = c4(s);
                v3(0.0, q, r) * (-2.0 * angle_qr(s))
            },
        )?,
        PoissonUV::new(
            "Lu.N2",
            spqr(),
            move |s| {
                let [sv, p, q, r] = c4(s);
                v3(a - 1.0 + (q + sv) * q / (q * q + r * r), 0.0, p)
            },
            move |s| {
                let [sv, p, q, r] = c4(s);
                let n = q * q + r * r;
                v3(-p, -(q + sv) * r / n, a - 1.0 + (q + sv) * q / n)
            },
        )?,
        PoissonUV::new(
            "Lu.N3",
            spqr(),
            |s| v3(1.0, 0.0, 0.0) * (2.0 * s.coords[3]),
            |s| v3(0.0, s.coords[2], s.coords[3]) * 2.0,
        )?,
    ]
    .map(|p| p.with_domain(qr_domain));

    let ambient = field.clone();
    let reductions = vec![ReductionSpec {
        name: "Lu2aut",
        build: Arc::new(move |lv| lu2aut(&ambient, lv, a)),
    }];

    Ok(System {
        name: "lu_autonomous",
        anchor: "Lu2aut",
        chart: spqr(),
        params: params.clone(),
        field,
        integrals: vec![
            Integral::conserved(h1.clone(), "ILu"),
            Integral::conserved(h2.clone(), "ILu"),
            Integral::conserved(h3.clone(), "H3Ray"),
        ],
        darboux: Vec::new(),
        tri: Some(TriHamiltonian {
            hamiltonians: [h1, h2, h3],
            structures,
            displayed,
            displayed_anchor: "H3Ray/UV",
            theta: Some(ScalarField::constant("theta", 4, -0.5)),
            theta_measured: None,
            theta_anchor: "H3Ray/theta",
        }),
        claims: Vec::new(),
        pair3d: None,
        reductions,
        default_state: State::at(vec![-0.39, 0.1, 0.4, 0.8]),
        drift_horizon: 10.0,
        region: Region::cube(4, 2.0).with_range(3, 0.05, 2.0),
        filter: domain_fn(qr_domain),
    })
}

/// Shared pieces of both Lü reductions on `H1 = kappa`, `H2 = tau`.
struct LuLevel {
    lift: LiftFn,
    project: LiftFn,
    domain: DomainFn,
    m: ScalarField,
    q: ScalarField,
    p: ScalarField,
    region: Region,
}

fn lu_level(lv: LevelValues) -> Result<LuLevel> {
    let LevelValues { kappa, tau } = lv;
    if tau <= 0.0 {
        return Err(Error::InvalidLevels(format!("tau = {tau} must be positive (tau = q^2 + r^2)")));
    }
    let dom = move |s: &State| level_arcsin_domain(s.coords[1], tau);
    let sq = tau.sqrt();
    Ok(LuLevel {
        lift: Arc::new(move |s| {
            let [p, q] = c2(s);
            State::new(vec![kappa - q, p, q, (tau - q * q).sqrt()], s.t)
        }),
        project: Arc::new(|s| State::new(vec![s.coords[1], s.coords[2]], s.t)),
        domain: domain_fn(dom),
        m: ScalarField::new("M", 2, move |s| (tau - s.coords[1].powi(2)).powf(-0.5))
            .with_grad(move |s| {
                let q = s.coords[1];
                vec![0.0, q * (tau - q * q).powf(-1.5)]
            })
            .with_domain(dom),
        q: ScalarField::new("Q", 2, move |s| (s.coords[1] / sq).asin())
            .with_grad(move |s| vec![0.0, (tau - s.coords[1].powi(2)).powf(-0.5)])
            .with_domain(dom),
        p: ScalarField::coordinate("P", 2, 0),
        region: Region::cube(2, 2.0).with_range(1, -0.95 * sq, 0.95 * sq),
    })
}

fn lu3(ambient: &VectorField, lv: LevelValues, a: f64, g: f64) -> Result<Reduction> {
    let LevelValues { kappa, tau } = lv;
    let base = lu_level(lv)?;
    let planar = planar_chart("p", "q");
    let derived = derived_planar("Lu3", ambient, base.lift.clone(), 1, 2, planar.clone(), base.domain.clone())?;
    let dom = move |s: &State| level_arcsin_domain(s.coords[1], tau);
    let f = ScalarField::new("f", 2, move |s| (kappa + (a - 1.0) * s.coords[1]) * ((a + g) * s.t).exp())
        .with_grad(move |s| vec![0.0, (a - 1.0) * ((a + g) * s.t).exp()])
        .with_dt(move |s| (a + g) * (kappa + (a - 1.0) * s.coords[1]) * ((a + g) * s.t).exp());
    let gf = ScalarField::new("g", 2, move |s| {
        let [p, q] = c2(s);
        -p * (tau - q * q).sqrt() * (-a * s.t).exp()
    })
    .with_grad(move |s| {
        let [p, q] = c2(s);
        let e = (-a * s.t).exp();
        vec![-(tau - q * q).sqrt() * e, p * q / (tau - q * q).sqrt() * e]
    })
    .with_dt(move |s| {
        let [p, q] = c2(s);
        a * p * (tau - q * q).sqrt() * (-a * s.t).exp()
    })
    .with_domain(dom);
    let displayed = PlanarSystem::new("Lu3", planar, f, gf)?;

    let sq = tau.sqrt();
    let inner = move |q: f64| kappa * (q / sq).asin() - (a - 1.0) * (tau - q * q).sqrt();
    let h = ScalarField::new("H", 2, move |s| {
        let [p, q] = c2(s);
        ((a + g) * s.t).exp() * inner(q) + 0.5 * p * p * (-a * s.t).exp()
    })
    .with_grad(move |s| {
        let [p, q] = c2(s);
        let w = (tau - q * q).sqrt();
        vec![p * (-a * s.t).exp(), ((a + g) * s.t).exp() * (kappa + (a - 1.0) * q) / w]
    })
    .with_dt(move |s| {
        let [p, q] = c2(s);
        (a + g) * ((a + g) * s.t).exp() * inner(q) - 0.5 * a * p * p * (-a * s.t).exp()
    })
    .with_domain(dom);

    let canonical = CanonicalSystem {
        q_dot: ScalarField::new("Qdot", 2, move |s| s.coords[1] * (-a * s.t).exp()),
        p_dot: ScalarField::new("Pdot", 2, move |s| {
            -((a + g) * s.t).exp() * (kappa + (a - 1.0) * sq * s.coords[0].sin())
        }),
        h: ScalarField::new("H(Q,P)", 2, move |s| {
            let [qq, pp] = c2(s);
            ((a + g) * s.t).exp() * (kappa * qq - (a - 1.0) * sq * qq.cos()) + 0.5 * pp * pp * (-a * s.t).exp()
        })
        .with_grad(move |s| {
            let [qq, pp] = c2(s);
            vec![
                ((a + g) * s.t).exp() * (kappa + (a - 1.0) * sq * qq.sin()),
                pp * (-a * s.t).exp(),
            ]
        })
        .time_dependent(),
        stated_sign: 1.0,
        anchor: "Lu2DCan",
    };
    Ok(Reduction {
        name: "Lu3",
        anchor: "Lu3",
        levels: lv,
        derived,
        displayed,
        m: base.m,
        psi: Some(ScalarField::constant("psi", 2, 0.0)),
        phi: Some(ScalarField::constant("phi", 2, 0.0)),
        h,
        q: Some(base.q),
        p: Some(base.p),
        canonical: Some(canonical),
        lift: base.lift,
        project: base.project,
        region: base.region.with_time(0.0, 1.0),
        filter: base.domain,
        normative: true,
    })
}

fn lu2aut(ambient: &VectorField, lv: LevelValues, a: f64) -> Result<Reduction> {
    let LevelValues { kappa, tau } = lv;
    let base = lu_level(lv)?;
    let planar = planar_chart("p", "q");
    let derived = derived_planar("Lu2aut", ambient, base.lift.clone(), 1, 2, planar.clone(), base.domain.clone())?;
    let dom = move |s: &State| level_arcsin_domain(s.coords[1], tau);
    let displayed = PlanarSystem::new(
        "Lu2aut",
        planar,
        ScalarField::new("f", 2, move |s| kappa + (a - 1.0) * s.coords[1]).with_grad(move |_| vec![0.0, a - 1.0]),
        ScalarField::new("g", 2, move |s| {
            let [p, q] = c2(s);
            -p * (tau - q * q).sqrt()
        })
        .with_grad(move |s| {
            let [p, q] = c2(s);
            vec![-(tau - q * q).sqrt(), p * q / (tau - q * q).sqrt()]
        })
        .with_domain(dom),
    )?;
    let sq = tau.sqrt();
    let h = ScalarField::new("H", 2, move |s| {
        let [p, q] = c2(s);
        0.5 * p * p + kappa * (q / sq).asin() - (a - 1.0) * (tau - q * q).sqrt()
    })
    .with_grad(move |s| {
        let [p, q] = c2(s);
        vec![p, (kappa + (a - 1.0) * q) / (tau - q * q).sqrt()]
    })
    .with_domain(dom);
    let canonical = CanonicalSystem {
        q_dot: ScalarField::coordinate("Qdot", 2, 1),
        p_dot: ScalarField::new("Pdot", 2, move |s| -(kappa + (a - 1.0) * sq * s.coords[0].sin())),
        h: ScalarField::new("H(Q,P)", 2, move |s| {
            let [qq, pp] = c2(s);
            kappa * qq - (a - 1.0) * sq * qq.cos() + 0.5 * pp * pp
        })
        .with_grad(move |s| {
            let [qq, pp] = c2(s);
            vec![kappa + (a - 1.0) * sq * qq.sin(), pp]
        }),
        stated_sign: 1.0,
        anchor: "Lu2aut/canonical",
    };
    Ok(Reduction {
        name: "Lu2aut",
        anchor: "Lu2aut",
        levels: lv,
        derived,
        displayed,
        m: base.m,
        psi: None,
        phi: None,
        h,
        q: Some(base.q),
        p: Some(base.p),
        canonical: Some(canonical),
        lift: base.lift,
        project: base.project,
        region: base.region,
        filter: base.domain,
        normative: true,
    })
}
