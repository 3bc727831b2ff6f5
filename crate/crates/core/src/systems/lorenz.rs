use super::*;
use nalgebra::DMatrix;

/// Lorenz field `x' = sigma (y - x)`, `y' = rho x - x z - y`, `z' = -beta z + x y`.
pub(super) fn lorenz_field(sigma: f64, rho: f64, beta: f64) -> VectorField {
    VectorField::new("lorenz", 3, true, move |s| {
        let [x, y, z] = c3(s);
        vec![sigma * (y - x), rho * x - x * z - y, -beta * z + x * y]
    })
}

fn mat3(rows: [[f64; 3]; 3]) -> DMatrix<f64> {
    DMatrix::from_fn(3, 3, |i, j| rows[i][j])
}

pub(super) fn rho0_descriptor() -> SystemDescriptor {
    SystemDescriptor {
        name: "lorenz_rho0",
        anchor: "has",
        description: "Lorenz system at rho = 0, sigma = 1/2, beta = 1 after the time-dependent rescaling: u' = v/2, v' = -uw, w' = uv",
        chart: chart("uvw", &["u", "v", "w"], None),
        params: Vec::new(),
        constraints: Vec::new(),
        build: build_rho0,
    }
}

fn build_rho0(params: &Params) -> Result<System> {
    let field = VectorField::new("lorenz_rho0", 3, true, |s| {
        let [u, v, w] = c3(s);
        vec![0.5 * v, -u * w, u * v]
    });
    let h1 = ScalarField::new("H1", 3, |s| s.coords[2] - s.coords[0].powi(2))
        .with_grad(|s| vec![-2.0 * s.coords[0], 0.0, 1.0]);
    let h2 = ScalarField::new("H2", 3, |s| s.coords[1].powi(2) + s.coords[2].powi(2))
        .with_grad(|s| vec![0.0, 2.0 * s.coords[1], 2.0 * s.coords[2]]);
    let n1 = MatrixField::new("j1.N1", 3, |s| {
        let u = s.coords[0];
        mat3([[0.0, 1.0, 0.0], [-1.0, 0.0, -2.0 * u], [0.0, 2.0 * u, 0.0]]) * 0.25
    });
    let n2 = MatrixField::new("j1.N2", 3, |s| {
        let [_, v, w] = c3(s);
        mat3([[0.0, -w, v], [w, 0.0, 0.0], [-v, 0.0, 0.0]]) * 0.5
    });
    Ok(System {
        name: "lorenz_rho0",
        anchor: "has",
        chart: chart("uvw", &["u", "v", "w"], None),
        params: params.clone(),
        field,
        integrals: vec![Integral::conserved(h1.clone(), "tindepc"), Integral::conserved(h2.clone(), "tindepc")],
        darboux: Vec::new(),
        tri: None,
        claims: Vec::new(),
        pair3d: Some(Pair3d {
            h1,
            h2,
            n1,
            n2,
            scale: 0.25,
            anchor: "j1",
        }),
        reductions: Vec::new(),
        default_state: State::at(vec![0.5, 1.0, -0.5]),
        drift_horizon: 10.0,
        region: Region::cube(3, 2.0),
        filter: domain_fn(|_| true),
    })
}

pub(super) fn conservative_descriptor() -> SystemDescriptor {
    SystemDescriptor {
        name: "lorenz_conservative",
        anchor: "clor",
        description: "Conservative limit of the Lorenz system: x' = y, y' = x - xz, z' = xy",
        chart: chart("xyz", &["x", "y", "z"], None),
        params: Vec::new(),
        constraints: Vec::new(),
        build: build_conservative,
    }
}

fn build_conservative(params: &Params) -> Result<System> {
    let field = VectorField::new("lorenz_conservative", 3, true, |s| {
        let [x, y, z] = c3(s);
        vec![y, x - x * z, x * y]
    });
    let h1 = ScalarField::new("H1", 3, |s| {
        let [x, y, z] = c3(s);
        0.5 * (y * y + z * z - x * x)
    })
    .with_grad(|s| {
        let [x, y, z] = c3(s);
        vec![-x, y, z]
    });
    let h2 = ScalarField::new("H2", 3, |s| 0.5 * s.coords[0].powi(2) - s.coords[2])
        .with_grad(|s| vec![s.coords[0], 0.0, -1.0]);
    let n1 = MatrixField::new("j1l.N1", 3, |s| {
        let [x, y, z] = c3(s);
        mat3([[0.0, z, -y], [-z, 0.0, -x], [y, x, 0.0]])
    });
    let n2 = MatrixField::new("j1l.N2", 3, |s| {
        let x = s.coords[0];
        mat3([[0.0, 1.0, 0.0], [-1.0, 0.0, -x], [0.0, x, 0.0]])
    });
    Ok(System {
        name: "lorenz_conservative",
        anchor: "clor",
        chart: chart("xyz", &["x", "y", "z"], None),
        params: params.clone(),
        field,
        integrals: vec![Integral::conserved(h1.clone(), "hc12"), Integral::conserved(h2.clone(), "hc12")],
        darboux: Vec::new(),
        tri: None,
        claims: Vec::new(),
        pair3d: Some(Pair3d {
            h1,
            h2,
            n1,
            n2,
            scale: 1.0,
            anchor: "j1l",
        }),
        reductions: Vec::new(),
        default_state: State::at(vec![1.0, 0.5, 0.2]),
        drift_horizon: 10.0,
        region: Region::cube(3, 2.0),
        filter: domain_fn(|_| true),
    })
}
