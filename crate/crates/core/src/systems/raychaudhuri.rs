use super::*;
use crate::poisson::tri_hamiltonian_set;

pub(super) fn descriptor() -> SystemDescriptor {
    SystemDescriptor {
        name: "raychaudhuri",
        anchor: "RE",
        description: "Generalized Raychaudhuri equations with all four parameters zero",
        chart: uxyz(),
        params: Vec::new(),
        constraints: Vec::new(),
        build,
    }
}

fn uxyz() -> CoordChart {
    chart("uxyz", &["u", "x", "y", "z"], Some(0))
}

fn j4(s: &State) -> f64 {
    let [u, x, y, z] = c4(s);
    y * y + z * z - u * u - 0.25 * x * x
}

fn j4_grad(s: &State) -> [f64; 4] {
    let [u, x, y, z] = c4(s);
    [-2.0 * u, -0.5 * x, 2.0 * y, 2.0 * z]
}

fn build(params: &Params) -> Result<System> {
    let chart = uxyz();
    let field = VectorField::new("raychaudhuri", 4, true, |s| {
        let [u, x, y, z] = c4(s);
        vec![-x * u, -(0.5 * x * x + 2.0 * (y * y + z * z - u * u)), -x * y, -x * z]
    });

    let cofactor = ScalarField::new("-x", 4, |s| -s.coords[1]).with_grad(|_| vec![0.0, -1.0, 0.0, 0.0]);
    let darboux = vec![
        DarbouxPair {
            poly: ScalarField::coordinate("J1", 4, 2),
            cofactor: cofactor.clone(),
            anchor: "RE/darboux",
        },
        DarbouxPair {
            poly: ScalarField::coordinate("J2", 4, 3),
            cofactor: cofactor.clone(),
            anchor: "RE/darboux",
        },
        DarbouxPair {
            poly: ScalarField::coordinate("J3", 4, 0),
            cofactor: cofactor.clone(),
            anchor: "RE/darboux",
        },
        DarbouxPair {
            poly: ScalarField::new("J4", 4, j4).with_grad(|s| j4_grad(s).to_vec()),
            cofactor,
            anchor: "RE/darboux",
        },
    ];

    let h1 = ScalarField::new("H1", 4, |s| s.coords[3] / s.coords[0])
        .with_grad(|s| {
            let [u, _, _, z] = c4(s);
            vec![-z / (u * u), 0.0, 0.0, 1.0 / u]
        })
        .with_domain(|s| nonzero(s.coords[0]));
    let h2 = ScalarField::new("H2", 4, |s| s.coords[2] / s.coords[3])
        .with_grad(|s| {
            let [_, _, y, z] = c4(s);
            vec![0.0, 0.0, 1.0 / z, -y / (z * z)]
        })
        .with_domain(|s| nonzero(s.coords[3]));
    let h3 = ScalarField::new("H3", 4, |s| j4(s) / s.coords[0])
        .with_grad(|s| {
            let u = s.coords[0];
            let g = j4_grad(s);
            vec![g[0] / u - j4(s) / (u * u), g[1] / u, g[2] / u, g[3] / u]
        })
        .with_domain(|s| nonzero(s.coords[0]));
    let h4 = ScalarField::new("H4", 4, |s| j4(s) / s.coords[2])
        .with_grad(|s| {
            let y = s.coords[2];
            let g = j4_grad(s);
            vec![g[0] / y, g[1] / y, g[2] / y - j4(s) / (y * y), g[3] / y]
        })
        .with_domain(|s| nonzero(s.coords[2]));

    let structures = tri_hamiltonian_set(&h1, &h2, &h3, &chart)?;
    let theta = ScalarField::new("theta", 4, |s| {
        let [u, _, _, z] = c4(s);
        -0.5 * z * u.powi(3)
    })
    .with_grad(|s| {
        let [u, _, _, z] = c4(s);
        vec![-1.5 * z * u * u, 0.0, 0.0, -0.5 * u.powi(3)]
    });
    let theta_measured = ScalarField::new("theta_measured", 4, |s| {
        let [u, _, _, z] = c4(s);
        2.0 * z * u.powi(3)
    })
    .with_grad(|s| {
        let [u, _, _, z] = c4(s);
        vec![6.0 * z * u * u, 0.0, 0.0, 2.0 * u.powi(3)]
    });

    let q = |s: &State| {
        let [u, x, y, z] = c4(s);
        y * y + z * z + u * u - 0.25 * x * x
    };
    let displayed = [
        PoissonUV::new(
            "FIRE.N1",
            chart.clone(),
            |s| {
                let [u, x, y, z] = c4(s);
                v3(4.0 * (y * y + z * z), x * y, x * z) * (-2.0 / (u * z * z))
            },
            move |s| {
                let [_, _, y, z] = c4(s);
                v3(0.0, -z, y) * (4.0 / (z * z) * q(s))
            },
        )?,
        PoissonUV::new(
            "FIRE.N2",
            chart.clone(),
            |s| {
                let [u, x, y, _] = c4(s);
                v3(4.0 * y, x, 0.0) * (-2.0 / (u * u))
            },
            move |s| {
                let [u, x, y, z] = c4(s);
                v3(x * z, -4.0 * y * z, 2.0 * u.powi(3) * q(s) - 4.0 * z * z) * (2.0 / u.powi(3))
            },
        )?,
        PoissonUV::new(
            "FIRE.N3",
            chart.clone(),
            |s| {
                let [u, _, _, z] = c4(s);
                v3(-1.0, 0.0, 0.0) / (u * z)
            },
            |s| {
                let [u, _, y, z] = c4(s);
                v3(0.0, -z, y) / (z * u * u)
            },
        )?,
    ];
    let dom = |s: &State| nonzero(s.coords[0]) && nonzero(s.coords[3]);
    let displayed = displayed.map(|p| p.with_domain(dom));

    let ambient = field.clone();
    let reductions = vec![ReductionSpec {
        name: "RedRay",
        build: Arc::new(move |lv| reduction(&ambient, lv)),
    }];

    Ok(System {
        name: "raychaudhuri",
        anchor: "RE",
        chart: chart.clone(),
        params: params.clone(),
        field,
        integrals: vec![
            Integral::conserved(h1.clone(), "FIRE"),
            Integral::conserved(h2.clone(), "FIRE"),
            Integral::conserved(h3.clone(), "FIRE"),
            Integral::conserved(h4, "FIRE"),
        ],
        darboux,
        tri: Some(TriHamiltonian {
            hamiltonians: [h1, h2, h3],
            structures,
            displayed,
            displayed_anchor: "FIRE/UV",
            theta: Some(theta),
            theta_measured: Some(theta_measured),
            theta_anchor: "FIRE/theta",
        }),
        claims: Vec::new(),
        pair3d: None,
        reductions,
        default_state: State::at(vec![1.0, 1.0, 1.0, 2.0]),
        drift_horizon: 0.2,
        region: Region::cube(4, 2.0),
        filter: domain_fn(|s| {
            let [u, _, y, z] = c4(s);
            u.abs() >= 0.1 && y.abs() >= 0.1 && z.abs() >= 0.1
        }),
    })
}

/// `mu = 2 / kappa^2 - 2 tau^2 - 2`.
pub(crate) fn mu(lv: LevelValues) -> f64 {
    2.0 / (lv.kappa * lv.kappa) - 2.0 * lv.tau * lv.tau - 2.0
}

fn reduction(ambient: &VectorField, lv: LevelValues) -> Result<Reduction> {
    if !nonzero(lv.kappa) {
        return Err(Error::InvalidLevels("kappa = 0 leaves u = z / kappa undefined".into()));
    }
    let LevelValues { kappa, tau } = lv;
    let mu = mu(lv);
    let planar = planar_chart("x", "z");
    let lift: LiftFn = Arc::new(move |s| {
        let [x, z] = c2(s);
        State::new(vec![z / kappa, x, tau * z, z], s.t)
    });
    let project: LiftFn = Arc::new(|s| State::new(vec![s.coords[1], s.coords[3]], s.t));
    let domain = domain_fn(|s| nonzero(s.coords[1]));
    let derived = derived_planar("RedRay", ambient, lift.clone(), 1, 3, planar.clone(), domain.clone())?;
    let displayed = PlanarSystem::new(
        "RedRay",
        planar,
        ScalarField::new("f", 2, move |s| {
            let [x, z] = c2(s);
            -0.5 * x * x + mu * z * z
        })
        .with_grad(move |s| {
            let [x, z] = c2(s);
            vec![-x, 2.0 * mu * z]
        }),
        ScalarField::new("g", 2, |s| -s.coords[0] * s.coords[1]).with_grad(|s| vec![-s.coords[1], -s.coords[0]]),
    )?;
    let zdom = |s: &State| nonzero(s.coords[1]);
    let m = ScalarField::new("M", 2, |s| 1.0 / s.coords[1].powi(2))
        .with_grad(|s| vec![0.0, -2.0 / s.coords[1].powi(3)])
        .with_domain(zdom);
    let h = ScalarField::new("H", 2, move |s| {
        let [x, z] = c2(s);
        x * x / (2.0 * z) + mu * z
    })
    .with_grad(move |s| {
        let [x, z] = c2(s);
        vec![x / z, -x * x / (2.0 * z * z) + mu]
    })
    .with_domain(zdom);
    let q = ScalarField::coordinate("Q", 2, 0);
    let p = ScalarField::new("P", 2, |s| -1.0 / s.coords[1])
        .with_grad(|s| vec![0.0, 1.0 / s.coords[1].powi(2)])
        .with_domain(zdom);
    // In (Q, P) = (x, -1/z): H = -Q^2 P / 2 - mu / P.
    let pdom = |s: &State| nonzero(s.coords[1]);
    let canonical = CanonicalSystem {
        q_dot: ScalarField::new("Qdot", 2, move |s| {
            let [qq, pp] = c2(s);
            -0.5 * qq * qq + mu / (pp * pp)
        })
        .with_domain(pdom),
        p_dot: ScalarField::new("Pdot", 2, |s| s.coords[0] * s.coords[1]),
        h: ScalarField::new("H(Q,P)", 2, move |s| {
            let [qq, pp] = c2(s);
            -0.5 * qq * qq * pp - mu / pp
        })
        .with_grad(move |s| {
            let [qq, pp] = c2(s);
            vec![-qq * pp, -0.5 * qq * qq + mu / (pp * pp)]
        })
        .with_domain(pdom),
        stated_sign: -1.0,
        anchor: "HonRay",
    };
    Ok(Reduction {
        name: "RedRay",
        anchor: "RedRay",
        levels: lv,
        derived,
        displayed,
        m,
        psi: None,
        phi: None,
        h,
        q: Some(q),
        p: Some(p),
        canonical: Some(canonical),
        lift,
        project,
        region: Region::cube(2, 2.0).with_range(1, 0.1, 2.0),
        filter: domain,
        normative: true,
    })
}
