use super::*;
use crate::poisson::tri_hamiltonian_set;

pub(super) fn descriptor() -> SystemDescriptor {
    SystemDescriptor {
        name: "shivamoggi",
        anchor: "SE",
        description: "Shivamoggi equations u' = -uy, x' = zy, y' = zx - u^2, z' = xy",
        chart: uxyz(),
        params: Vec::new(),
        constraints: Vec::new(),
        build,
    }
}

fn uxyz() -> CoordChart {
    chart("uxyz", &["u", "x", "y", "z"], Some(0))
}

fn build(params: &Params) -> Result<System> {
    let chart = uxyz();
    let field = VectorField::new("shivamoggi", 4, true, |s| {
        let [u, x, y, z] = c4(s);
        vec![-u * y, z * y, z * x - u * u, x * y]
    });
    let h1 = ScalarField::new("H1", 4, |s| {
        let [_, x, _, z] = c4(s);
        x * x - z * z
    })
    .with_grad(|s| {
        let [_, x, _, z] = c4(s);
        vec![0.0, 2.0 * x, 0.0, -2.0 * z]
    });
    let h2 = ScalarField::new("H2", 4, |s| {
        let [u, _, y, z] = c4(s);
        z * z + u * u - y * y
    })
    .with_grad(|s| {
        let [u, _, y, z] = c4(s);
        vec![2.0 * u, 0.0, -2.0 * y, 2.0 * z]
    });
    let h3 = ScalarField::new("H3", 4, |s| {
        let [u, x, _, z] = c4(s);
        u * (z + x)
    })
    .with_grad(|s| {
        let [u, x, _, z] = c4(s);
        vec![z + x, u, 0.0, u]
    });
    let structures = tri_hamiltonian_set(&h1, &h2, &h3, &chart)?;
    let theta = ScalarField::new("theta", 4, |s| {
        let [_, x, _, z] = c4(s);
        -1.0 / (4.0 * (x + z))
    })
    .with_grad(|s| {
        let [_, x, _, z] = c4(s);
        let d = 1.0 / (4.0 * (x + z).powi(2));
        vec![0.0, d, 0.0, d]
    })
    .with_domain(|s| nonzero(s.coords[1] + s.coords[3]));

    let displayed = [
        PoissonUV::new(
            "PoiShi.N1",
            chart.clone(),
            |s| {
                let [u, _, y, z] = c4(s);
                v3(-y, z, y) * (2.0 * u)
            },
            |s| {
                let [u, x, y, z] = c4(s);
                v3(u * u, y * (x + z), u * u - z * (x + z)) * 2.0
            },
        )?,
        PoissonUV::new(
            "PoiShi.N2",
            chart.clone(),
            |s| {
                let [u, x, _, z] = c4(s);
                v3(0.0, u, 0.0) * (2.0 * (x + z))
            },
            |s| {
                let [_, x, _, z] = c4(s);
                v3(x, 0.0, -z)
            },
        )?,
        PoissonUV::new(
            "PoiShi.N3",
            chart.clone(),
            |s| {
                let [_, x, y, z] = c4(s);
                v3(y * z, z * x, x * y) * -4.0
            },
            |s| {
                let [u, x, _, z] = c4(s);
                v3(x, 0.0, -z) * (4.0 * u)
            },
        )?,
    ];

    // H = H1 - H2 with the linear structure U = (0, y, 0), V = (-x, 0, -2u).
    let h = ScalarField::linear_combination("H1-H2", &[(1.0, &h1), (-1.0, &h2)]);
    let extra = PoissonUV::new(
        "linear",
        chart.clone(),
        |s| v3(0.0, s.coords[2], 0.0),
        |s| v3(-s.coords[1], 0.0, -2.0 * s.coords[0]),
    )?;

    Ok(System {
        name: "shivamoggi",
        anchor: "SE",
        chart: chart.clone(),
        params: params.clone(),
        field,
        integrals: vec![
            Integral::conserved(h1.clone(), "FISE"),
            Integral::conserved(h2.clone(), "FISE"),
            Integral::conserved(h3.clone(), "FISE"),
        ],
        darboux: Vec::new(),
        tri: Some(TriHamiltonian {
            hamiltonians: [h1, h2, h3],
            structures,
            displayed,
            displayed_anchor: "PoiShi",
            theta: Some(theta),
            theta_measured: None,
            theta_anchor: "tri-Ham",
        }),
        claims: vec![StructureClaim {
            id: "linear_structure",
            structure: extra,
            hamiltonian: h,
            theta: ScalarField::constant("1", 4, 1.0),
            anchor: "SE/linear",
        }],
        pair3d: None,
        reductions: Vec::new(),
        default_state: State::at(vec![1.0, 2.0, 1.0, 1.0]),
        drift_horizon: 0.5,
        region: Region::cube(4, 2.0),
        filter: domain_fn(|s| (s.coords[1] + s.coords[3]).abs() > 0.1),
    })
}
