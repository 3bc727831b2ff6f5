//! Degenerate Poisson structures in three and four dimensions.
//!
//! A 4D structure is stored as the pair of 3-vector fields `(U, V)`; the
//! matrix is assembled on demand with the distinguished coordinate playing the
//! role of `u`. General matrix fields (`MatrixField`) cover the 3D
//! bi-Hamiltonian pairs and the brute-force Jacobi oracle.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix4, Vector3};

use crate::error::{Error, Result};
use crate::fields::{richardson_vec, CoordChart, DomainFn, ScalarField, State, VectorField};

pub type Vec3Fn = Arc<dyn Fn(&State) -> Vector3<f64> + Send + Sync>;
pub type MatFn = Arc<dyn Fn(&State) -> DMatrix<f64> + Send + Sync>;

/// Relative step for the brute-force Jacobi oracle.
pub const BRUTE_FORCE_STEP: f64 = 1e-5;
/// Relative step for the `(U, V)` Jacobians in [`jacobi_residual_uv`].
pub const UV_STEP: f64 = 1e-4;

/// A 4D Poisson structure in block form.
#[derive(Clone)]
pub struct PoissonUV {
    name: String,
    chart: CoordChart,
    u: Vec3Fn,
    v: Vec3Fn,
    domain: Option<DomainFn>,
}

impl fmt::Debug for PoissonUV {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PoissonUV")
            .field("name", &self.name)
            .field("chart", &self.chart.name())
            .finish()
    }
}

impl PoissonUV {
    pub fn new(
        name: impl Into<String>,
        chart: CoordChart,
        u: impl Fn(&State) -> Vector3<f64> + Send + Sync + 'static,
        v: impl Fn(&State) -> Vector3<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if chart.distinguished().is_none() {
            return Err(Error::InvalidChart(format!(
                "`{}` has no distinguished coordinate",
                chart.name()
            )));
        }
        Ok(Self {
            name: name.into(),
            chart,
            u: Arc::new(u),
            v: Arc::new(v),
            domain: None,
        })
    }

    pub fn with_domain(mut self, domain: impl Fn(&State) -> bool + Send + Sync + 'static) -> Self {
        self.domain = Some(Arc::new(domain));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn chart(&self) -> &CoordChart {
        &self.chart
    }

    pub fn in_domain(&self, s: &State) -> bool {
        s.dim() == 4 && self.domain.as_ref().is_none_or(|d| d(s))
    }

    pub fn u(&self, s: &State) -> Vector3<f64> {
        (self.u)(s)
    }

    pub fn v(&self, s: &State) -> Vector3<f64> {
        (self.v)(s)
    }

    fn derived(
        &self,
        name: String,
        u: impl Fn(&State) -> Vector3<f64> + Send + Sync + 'static,
        v: impl Fn(&State) -> Vector3<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name,
            chart: self.chart.clone(),
            u: Arc::new(u),
            v: Arc::new(v),
            domain: self.domain.clone(),
        }
    }

    /// `c N`.
    pub fn scaled(&self, c: f64) -> Self {
        let (a, b) = (self.clone(), self.clone());
        self.derived(
            format!("{c}*{}", self.name),
            move |s| a.u(s) * c,
            move |s| b.v(s) * c,
        )
    }

    /// `theta N` for a scalar field `theta`.
    pub fn conformal(&self, theta: &ScalarField) -> Self {
        let (a, b) = (self.clone(), self.clone());
        let (ta, tb) = (theta.clone(), theta.clone());
        let td = theta.clone();
        let mut out = self.derived(
            format!("{}*{}", theta.name(), self.name),
            move |s| a.u(s) * ta.eval(s),
            move |s| b.v(s) * tb.eval(s),
        );
        let inner = self.clone();
        out.domain = Some(Arc::new(move |s| inner.in_domain(s) && td.in_domain(s)));
        out
    }

    /// The pencil `N_self + c N_other`.
    pub fn pencil(&self, other: &PoissonUV, c: f64) -> Self {
        let (a, b) = (self.clone(), other.clone());
        let (a2, b2) = (self.clone(), other.clone());
        let (a3, b3) = (self.clone(), other.clone());
        let mut out = self.derived(
            format!("{}+{c}*{}", self.name, other.name),
            move |s| a.u(s) + b.u(s) * c,
            move |s| a2.v(s) + b2.v(s) * c,
        );
        out.domain = Some(Arc::new(move |s| a3.in_domain(s) && b3.in_domain(s)));
        out
    }

    /// Copy with the sign of `V[component]` flipped; used to show that the
    /// Jacobi checkers can fail.
    pub fn corrupted(&self, component: usize) -> Self {
        let (a, b) = (self.clone(), self.clone());
        self.derived(
            format!("{}~V{}", self.name, component + 1),
            move |s| a.u(s),
            move |s| {
                let mut v = b.v(s);
                v[component] = -v[component];
                v
            },
        )
    }

    /// The assembled 4x4 matrix as a general matrix field.
    pub fn matrix_field(&self) -> MatrixField {
        let p = self.clone();
        let d = self.clone();
        MatrixField::new(self.name.clone(), 4, move |s| {
            DMatrix::from_iterator(4, 4, assemble_matrix(&p, s).iter().copied())
        })
        .with_domain(move |s| d.in_domain(s))
    }
}

/// An `n x n` antisymmetric matrix field.
#[derive(Clone)]
pub struct MatrixField {
    name: String,
    dim: usize,
    eval: MatFn,
    domain: Option<DomainFn>,
}

impl fmt::Debug for MatrixField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatrixField")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .finish()
    }
}

impl MatrixField {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        eval: impl Fn(&State) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            dim,
            eval: Arc::new(eval),
            domain: None,
        }
    }

    pub fn with_domain(mut self, domain: impl Fn(&State) -> bool + Send + Sync + 'static) -> Self {
        self.domain = Some(Arc::new(domain));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn in_domain(&self, s: &State) -> bool {
        s.dim() == self.dim && self.domain.as_ref().is_none_or(|d| d(s))
    }

    pub fn eval(&self, s: &State) -> DMatrix<f64> {
        (self.eval)(s)
    }

    pub fn scaled(&self, c: f64) -> Self {
        let inner = self.clone();
        let mut out = Self::new(format!("{c}*{}", self.name), self.dim, move |s| inner.eval(s) * c);
        out.domain = self.domain.clone();
        out
    }

    /// `N_self + c N_other`.
    pub fn pencil(&self, other: &MatrixField, c: f64) -> Self {
        let (a, b) = (self.clone(), other.clone());
        let (da, db) = (self.clone(), other.clone());
        Self::new(format!("{}+{c}*{}", self.name, other.name), self.dim, move |s| {
            a.eval(s) + b.eval(s) * c
        })
        .with_domain(move |s| da.in_domain(s) && db.in_domain(s))
    }

    /// `N grad H` as a vector field.
    pub fn hamiltonian_field(&self, h: &ScalarField) -> VectorField {
        let (n, h) = (self.clone(), h.clone());
        VectorField::new(format!("{} grad {}", self.name, h.name()), self.dim, true, move |s| {
            let g = grad_or_nan(&h, s);
            (n.eval(s) * DVector::from_vec(g)).iter().copied().collect()
        })
    }
}

fn grad_or_nan(h: &ScalarField, s: &State) -> Vec<f64> {
    h.grad(s).unwrap_or_else(|_| vec![f64::NAN; s.dim()])
}

fn split(chart: &CoordChart, g: &[f64]) -> (f64, Vector3<f64>) {
    let d = chart.distinguished().expect("checked at construction");
    let sp = chart.spatial_indices().expect("checked at construction");
    (g[d], Vector3::new(g[sp[0]], g[sp[1]], g[sp[2]]))
}

fn check_dim(expected: usize, s: &State) -> Result<()> {
    if s.dim() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: s.dim(),
        });
    }
    Ok(())
}

/// Block matrix of `(U, V)`: the distinguished row carries `-U`, the spatial
/// block is the Hodge dual of `V`.
pub fn assemble_matrix(p: &PoissonUV, s: &State) -> Matrix4<f64> {
    let d = p.chart.distinguished().expect("checked at construction");
    let [a, b, c] = p.chart.spatial_indices().expect("checked at construction");
    let (u, v) = (p.u(s), p.v(s));
    let mut n = Matrix4::zeros();
    for (k, &i) in [a, b, c].iter().enumerate() {
        n[(d, i)] = -u[k];
        n[(i, d)] = u[k];
    }
    let mut set = |i: usize, j: usize, val: f64| {
        n[(i, j)] = val;
        n[(j, i)] = -val;
    };
    set(a, b, -v[2]);
    set(a, c, v[1]);
    set(b, c, -v[0]);
    n
}

/// `{F, G} = grad F . N grad G`.
pub fn bracket(n: &MatrixField, f: &ScalarField, g: &ScalarField, s: &State) -> Result<f64> {
    for d in [f.dim(), g.dim()] {
        if d != n.dim() {
            return Err(Error::DimensionMismatch {
                expected: n.dim(),
                found: d,
            });
        }
    }
    let gf = DVector::from_vec(f.grad(s)?);
    let gg = DVector::from_vec(g.grad(s)?);
    Ok(gf.dot(&(n.eval(s) * gg)))
}

/// Partial derivatives of every entry of `n` along each coordinate.
fn matrix_partials(n: &MatrixField, s: &State, h: f64) -> Result<Vec<DMatrix<f64>>> {
    let dim = n.dim();
    (0..dim)
        .map(|a| {
            let step = h * (1.0 + s.get(a).abs());
            richardson_vec(
                |xa| {
                    let mut p = s.clone();
                    p.coords[a] = xa;
                    n.in_domain(&p).then(|| n.eval(&p).iter().copied().collect())
                },
                s.get(a),
                step,
            )
            .map(|v| DMatrix::from_vec(dim, dim, v))
            .ok_or_else(|| Error::StencilOutsideDomain {
                field: n.name().to_string(),
                at: s.coords.clone(),
            })
        })
        .collect()
}

/// Every independent component `N^{a[b} d_a N^{cd]}` for `b < c < d`.
pub fn jacobi_components_bruteforce(n: &MatrixField, s: &State, h: f64) -> Result<Vec<f64>> {
    check_dim(n.dim(), s)?;
    if !n.in_domain(s) {
        return Err(Error::OutsideDomain {
            field: n.name().to_string(),
            at: s.coords.clone(),
            t: s.t,
        });
    }
    let dim = n.dim();
    if dim < 3 {
        return Ok(Vec::new());
    }
    let m = n.eval(s);
    let dn = matrix_partials(n, s, h)?;
    let mut out = Vec::new();
    for b in 0..dim {
        for c in b + 1..dim {
            for d in c + 1..dim {
                let mut acc = 0.0;
                for (a, da) in dn.iter().enumerate() {
                    acc += m[(a, b)] * da[(c, d)] + m[(a, c)] * da[(d, b)] + m[(a, d)] * da[(b, c)];
                }
                out.push(acc);
            }
        }
    }
    Ok(out)
}

/// Largest brute-force Jacobi component divided by
/// `(1 + max |N|) (1 + max |dN|)`.
pub fn jacobi_relative_bruteforce(n: &MatrixField, s: &State, h: f64) -> Result<f64> {
    let r = jacobi_residual_bruteforce(n, s, h)?;
    let dmax = matrix_partials(n, s, h)?.iter().fold(0.0f64, |m, d| m.max(d.amax()));
    Ok(r / ((1.0 + n.eval(s).amax()) * (1.0 + dmax)))
}

/// Largest brute-force Jacobi component; `0` for 2D fields.
pub fn jacobi_residual_bruteforce(n: &MatrixField, s: &State, h: f64) -> Result<f64> {
    Ok(jacobi_components_bruteforce(n, s, h)?
        .into_iter()
        .fold(0.0, |m, v| m.max(v.abs())))
}

/// Scalar and vector Jacobi residuals of the `(U, V)` form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UvJacobi {
    pub scalar: f64,
    pub vector: Vector3<f64>,
    /// `(1 + max |U, V|) (1 + max |d(U, V)|)`, the size of the summed terms.
    pub scale: f64,
}

impl UvJacobi {
    pub fn max_abs(&self) -> f64 {
        self.scalar.abs().max(self.vector.amax())
    }

    pub fn relative(&self) -> f64 {
        self.max_abs() / self.scale
    }
}

pub fn jacobi_residual_uv(p: &PoissonUV, s: &State) -> Result<UvJacobi> {
    jacobi_residual_uv_with_step(p, s, UV_STEP)
}

/// `d_u(U.V) - V.(d_u U - curl V)` and
/// `grad(U.V) - V div U + U x (d_u U - curl V)`, with the `(U, V)` Jacobians
/// taken by Richardson-extrapolated central differences.
pub fn jacobi_residual_uv_with_step(p: &PoissonUV, s: &State, h: f64) -> Result<UvJacobi> {
    check_dim(4, s)?;
    if !p.in_domain(s) {
        return Err(Error::OutsideDomain {
            field: p.name().to_string(),
            at: s.coords.clone(),
            t: s.t,
        });
    }
    let d = p.chart.distinguished().expect("checked at construction");
    let sp = p.chart.spatial_indices().expect("checked at construction");
    // partial[a] = (dU/dx^a, dV/dx^a)
    let partial = |a: usize| -> Result<(Vector3<f64>, Vector3<f64>)> {
        let step = h * (1.0 + s.get(a).abs());
        let v = richardson_vec(
            |xa| {
                let mut q = s.clone();
                q.coords[a] = xa;
                p.in_domain(&q).then(|| {
                    let (u, v) = (p.u(&q), p.v(&q));
                    vec![u[0], u[1], u[2], v[0], v[1], v[2]]
                })
            },
            s.get(a),
            step,
        )
        .ok_or_else(|| Error::StencilOutsideDomain {
            field: p.name().to_string(),
            at: s.coords.clone(),
        })?;
        Ok((Vector3::new(v[0], v[1], v[2]), Vector3::new(v[3], v[4], v[5])))
    };
    let (du_u, dv_u) = partial(d)?;
    let mut du = [Vector3::zeros(); 3];
    let mut dv = [Vector3::zeros(); 3];
    for k in 0..3 {
        (du[k], dv[k]) = partial(sp[k])?;
    }
    let (u, v) = (p.u(s), p.v(s));
    let curl_v = Vector3::new(dv[1][2] - dv[2][1], dv[2][0] - dv[0][2], dv[0][1] - dv[1][0]);
    let div_u = du[0][0] + du[1][1] + du[2][2];
    let w = du_u - curl_v;
    let d_u_uv = du_u.dot(&v) + u.dot(&dv_u);
    let grad_uv = Vector3::from_fn(|k, _| du[k].dot(&v) + u.dot(&dv[k]));
    let dmax = (0..3).fold(du_u.amax().max(dv_u.amax()), |m, k| m.max(du[k].amax()).max(dv[k].amax()));
    Ok(UvJacobi {
        scalar: d_u_uv - v.dot(&w),
        vector: grad_uv - v * div_u + u.cross(&w),
        scale: (1.0 + u.amax().max(v.amax())) * (1.0 + dmax),
    })
}

/// `U . V`.
pub fn degeneracy(p: &PoissonUV, s: &State) -> f64 {
    p.u(s).dot(&p.v(s))
}

/// `U = grad Ha x grad Hb`, `V = d_u Ha grad Hb - d_u Hb grad Ha`.
pub fn build_uv_from_pair(ha: &ScalarField, hb: &ScalarField, chart: &CoordChart) -> Result<PoissonUV> {
    for h in [ha, hb] {
        if h.dim() != chart.dim() {
            return Err(Error::DimensionMismatch {
                expected: chart.dim(),
                found: h.dim(),
            });
        }
    }
    let (a1, b1, c1) = (ha.clone(), hb.clone(), chart.clone());
    let (a2, b2, c2) = (ha.clone(), hb.clone(), chart.clone());
    let (a3, b3) = (ha.clone(), hb.clone());
    Ok(PoissonUV::new(
        format!("N({},{})", ha.name(), hb.name()),
        chart.clone(),
        move |s| {
            let (_, ga) = split(&c1, &grad_or_nan(&a1, s));
            let (_, gb) = split(&c1, &grad_or_nan(&b1, s));
            ga.cross(&gb)
        },
        move |s| {
            let (ua, ga) = split(&c2, &grad_or_nan(&a2, s));
            let (ub, gb) = split(&c2, &grad_or_nan(&b2, s));
            gb * ua - ga * ub
        },
    )?
    .with_domain(move |s| a3.in_domain(s) && b3.in_domain(s)))
}

/// `(N(H2,H3), N(H3,H1), N(H1,H2))`.
pub fn tri_hamiltonian_set(
    h1: &ScalarField,
    h2: &ScalarField,
    h3: &ScalarField,
    chart: &CoordChart,
) -> Result<[PoissonUV; 3]> {
    Ok([
        build_uv_from_pair(h2, h3, chart)?,
        build_uv_from_pair(h3, h1, chart)?,
        build_uv_from_pair(h1, h2, chart)?,
    ])
}

/// `N grad H` with the full gradient, distinguished coordinate included.
pub fn hamiltonian_vector_field(p: &PoissonUV, h: &ScalarField, s: &State) -> Result<Vec<f64>> {
    check_dim(4, s)?;
    let g = nalgebra::Vector4::from_vec(h.grad(s)?);
    Ok((assemble_matrix(p, s) * g).iter().copied().collect())
}

/// The expanded form of `N(Ha, Hb) grad H`:
/// `u' = -(grad Ha x grad Hb) . grad H`, `x' = U d_u H + V x grad H`.
pub fn hamiltonian_vector_field_expanded(
    ha: &ScalarField,
    hb: &ScalarField,
    h: &ScalarField,
    chart: &CoordChart,
    s: &State,
) -> Result<Vec<f64>> {
    check_dim(4, s)?;
    let d = chart
        .distinguished()
        .ok_or_else(|| Error::InvalidChart(format!("`{}` has no distinguished coordinate", chart.name())))?;
    let sp = chart.spatial_indices().expect("distinguished is set");
    let (ua, ga) = split(chart, &ha.grad(s)?);
    let (ub, gb) = split(chart, &hb.grad(s)?);
    let (uh, gh) = split(chart, &h.grad(s)?);
    let u = ga.cross(&gb);
    let v = gb * ua - ga * ub;
    let x = u * uh + v.cross(&gh);
    let mut out = vec![0.0; 4];
    out[d] = -u.dot(&gh);
    for k in 0..3 {
        out[sp[k]] = x[k];
    }
    Ok(out)
}

/// `max |N grad C|`.
pub fn casimir_residual(p: &PoissonUV, c: &ScalarField, s: &State) -> Result<f64> {
    Ok(hamiltonian_vector_field(p, c, s)?
        .into_iter()
        .fold(0.0, |m, v| m.max(v.abs())))
}

/// `U_i . V_j + U_j . V_i`.
pub fn compatibility_lambda(pi: &PoissonUV, pj: &PoissonUV, s: &State) -> f64 {
    pi.u(s).dot(&pj.v(s)) + pj.u(s).dot(&pi.v(s))
}

/// `max |X - theta N grad H|`.
pub fn conformal_match(
    x: &VectorField,
    p: &PoissonUV,
    h: &ScalarField,
    theta: &ScalarField,
    s: &State,
) -> Result<f64> {
    if x.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            found: x.dim(),
        });
    }
    let nh = hamiltonian_vector_field(p, h, s)?;
    let th = theta.eval(s);
    Ok(x.eval(s)
        .iter()
        .zip(&nh)
        .fold(0.0, |m, (a, b)| m.max((a - th * b).abs())))
}

/// Aggregated maxima over a sample set for a family of structures.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CompatReport {
    pub lambda_max: f64,
    pub degeneracy_max: f64,
    pub jacobi_max_scalar: f64,
    pub jacobi_max_vector: f64,
    pub samples: usize,
}

pub fn compat_report(structures: &[PoissonUV], states: &[State]) -> Result<CompatReport> {
    let mut r = CompatReport {
        lambda_max: 0.0,
        degeneracy_max: 0.0,
        jacobi_max_scalar: 0.0,
        jacobi_max_vector: 0.0,
        samples: states.len(),
    };
    for s in states {
        for (i, pi) in structures.iter().enumerate() {
            r.degeneracy_max = r.degeneracy_max.max(degeneracy(pi, s).abs());
            let j = jacobi_residual_uv(pi, s)?;
            r.jacobi_max_scalar = r.jacobi_max_scalar.max(j.scalar.abs());
            r.jacobi_max_vector = r.jacobi_max_vector.max(j.vector.amax());
            for pj in &structures[i + 1..] {
                r.lambda_max = r.lambda_max.max(compatibility_lambda(pi, pj, s).abs());
            }
        }
    }
    Ok(r)
}

/// `M^{ab} = sum_c eps^{abc} g_c`.
fn hodge3(g: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(3, 3);
    m[(0, 1)] = g[2];
    m[(1, 0)] = -g[2];
    m[(0, 2)] = -g[1];
    m[(2, 0)] = g[1];
    m[(1, 2)] = g[0];
    m[(2, 1)] = -g[0];
    m
}

/// The 3D bi-Hamiltonian pair `(eps^{abc} d_c H1, -eps^{abc} d_c H2)`.
///
/// The matrix built from one Hamiltonian is applied to the gradient of the
/// other; both products equal `grad H2 x grad H1`.
pub fn build_3d_pair(h1: &ScalarField, h2: &ScalarField) -> Result<(MatrixField, MatrixField)> {
    for h in [h1, h2] {
        if h.dim() != 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                found: h.dim(),
            });
        }
    }
    let (a, b) = (h1.clone(), h2.clone());
    let (da, db) = (h1.clone(), h2.clone());
    let from_h1 = MatrixField::new(format!("N[{}]", h1.name()), 3, move |s| hodge3(&grad_or_nan(&a, s)))
        .with_domain(move |s| da.in_domain(s));
    let from_h2 = MatrixField::new(format!("N[{}]", h2.name()), 3, move |s| -hodge3(&grad_or_nan(&b, s)))
        .with_domain(move |s| db.in_domain(s));
    Ok((from_h1, from_h2))
}

/// `grad H1 x grad H2`.
pub fn nambu_field(h1: &ScalarField, h2: &ScalarField, s: &State) -> Result<Vector3<f64>> {
    check_dim(3, s)?;
    let g1 = Vector3::from_vec(h1.grad(s)?);
    let g2 = Vector3::from_vec(h2.grad(s)?);
    Ok(g1.cross(&g2))
}

fn perm_sign(p: [usize; 4]) -> f64 {
    let mut sign = 1.0;
    for i in 0..4 {
        for j in i + 1..4 {
            if p[i] == p[j] {
                return 0.0;
            }
            if p[i] > p[j] {
                sign = -sign;
            }
        }
    }
    sign
}

/// Compact form `N^{ab} = -eps^{ijk} eps^{abcd} d_c H_j d_d H_k` for the
/// structure whose cyclic partners are `(hj, hk)`, summed over both orderings
/// of the pair. Indices run over the distinguished coordinate first.
pub fn compact_matrix(hj: &ScalarField, hk: &ScalarField, chart: &CoordChart, s: &State) -> Result<Matrix4<f64>> {
    check_dim(4, s)?;
    let d = chart
        .distinguished()
        .ok_or_else(|| Error::InvalidChart(format!("`{}` has no distinguished coordinate", chart.name())))?;
    let sp = chart.spatial_indices().expect("distinguished is set");
    let order = [d, sp[0], sp[1], sp[2]];
    let gj = hj.grad(s)?;
    let gk = hk.grad(s)?;
    let mut n = Matrix4::zeros();
    for a in 0..4 {
        for b in 0..4 {
            let mut acc = 0.0;
            for c in 0..4 {
                for e in 0..4 {
                    let eps = perm_sign([a, b, c, e]);
                    if eps != 0.0 {
                        let (cc, ee) = (order[c], order[e]);
                        acc += eps * (gj[cc] * gk[ee] - gk[cc] * gj[ee]);
                    }
                }
            }
            n[(order[a], order[b])] = -acc;
        }
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{Region, Sampler};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn chart() -> CoordChart {
        CoordChart::new("uxyz", &["u", "x", "y", "z"], Some(0)).unwrap()
    }

    fn shivamoggi_integrals() -> [ScalarField; 3] {
        [
            ScalarField::new("H1", 4, |s| s.get(1).powi(2) - s.get(3).powi(2))
                .with_grad(|s| vec![0.0, 2.0 * s.get(1), 0.0, -2.0 * s.get(3)]),
            ScalarField::new("H2", 4, |s| s.get(3).powi(2) + s.get(0).powi(2) - s.get(2).powi(2))
                .with_grad(|s| vec![2.0 * s.get(0), 0.0, -2.0 * s.get(2), 2.0 * s.get(3)]),
            ScalarField::new("H3", 4, |s| s.get(0) * (s.get(3) + s.get(1)))
                .with_grad(|s| vec![s.get(3) + s.get(1), s.get(0), 0.0, s.get(0)]),
        ]
    }

    fn shivamoggi_field() -> VectorField {
        VectorField::new("SE", 4, true, |s| {
            let (u, x, y, z) = (s.get(0), s.get(1), s.get(2), s.get(3));
            vec![-u * y, z * y, z * x - u * u, x * y]
        })
    }

    fn constant_uv(u: [f64; 3], v: [f64; 3]) -> PoissonUV {
        PoissonUV::new(
            "const",
            chart(),
            move |_| Vector3::from(u),
            move |_| Vector3::from(v),
        )
        .unwrap()
    }

    fn samples(n: usize, seed: u64) -> Vec<State> {
        Sampler::new(seed)
            .states(&Region::cube(4, 2.0), n, |s| (s.get(1) + s.get(3)).abs() > 0.1)
            .unwrap()
    }

    #[test]
    fn assemble_unit_u_and_zero() {
        let s = State::at(vec![0.0; 4]);
        let n = assemble_matrix(&constant_uv([1.0, 0.0, 0.0], [0.0; 3]), &s);
        let mut expect = Matrix4::zeros();
        expect[(0, 1)] = -1.0;
        expect[(1, 0)] = 1.0;
        assert_eq!(n, expect);
        assert_eq!(assemble_matrix(&constant_uv([0.0; 3], [0.0; 3]), &s), Matrix4::zeros());
    }

    #[test]
    fn lower_block_acts_as_v_cross() {
        let p = constant_uv([0.0; 3], [0.3, -1.2, 2.0]);
        let n = assemble_matrix(&p, &State::at(vec![0.0; 4]));
        let g = Vector3::new(1.5, 0.25, -0.7);
        let lower = n.fixed_view::<3, 3>(1, 1) * g;
        assert_abs_diff_eq!((lower - p.v(&State::at(vec![0.0; 4])).cross(&g)).amax(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn shivamoggi_pair_h1_h2_at_reference_point() {
        let [h1, h2, h3] = shivamoggi_integrals();
        let p = build_uv_from_pair(&h1, &h2, &chart()).unwrap();
        let s = State::at(vec![1.0, 2.0, 1.0, 1.0]);
        assert_eq!(p.u(&s), Vector3::new(-4.0, -8.0, -8.0));
        assert_eq!(p.v(&s), Vector3::new(-8.0, 0.0, 4.0));
        let xh = hamiltonian_vector_field(&p, &h3, &s).unwrap();
        assert_eq!(xh, vec![12.0, -12.0, -12.0, -24.0]);
        let theta = ScalarField::constant("theta", 4, -1.0 / 12.0);
        assert_abs_diff_eq!(conformal_match(&shivamoggi_field(), &p, &h3, &theta, &s).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn tri_set_shivamoggi_u2() {
        let [h1, h2, h3] = shivamoggi_integrals();
        let set = tri_hamiltonian_set(&h1, &h2, &h3, &chart()).unwrap();
        for s in samples(50, 1) {
            let (u, x, z) = (s.get(0), s.get(1), s.get(3));
            let expect = Vector3::new(0.0, 2.0 * (x + z) * u, 0.0);
            assert_abs_diff_eq!((set[1].u(&s) - expect).amax(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn identical_hamiltonians_give_zero_structure() {
        let [h1, ..] = shivamoggi_integrals();
        let set = tri_hamiltonian_set(&h1, &h1, &h1, &chart()).unwrap();
        let s = State::at(vec![0.3, 1.0, -0.4, 0.8]);
        for p in &set {
            assert_eq!(assemble_matrix(p, &s), Matrix4::zeros());
        }
    }

    #[test]
    fn constant_orthogonal_uv_satisfies_jacobi() {
        let p = constant_uv([1.0, 0.0, 0.0], [0.0, 2.0, -1.0]);
        let s = State::at(vec![0.1, 0.2, 0.3, 0.4]);
        let j = jacobi_residual_uv(&p, &s).unwrap();
        assert_eq!(j.max_abs(), 0.0);
        assert_eq!(jacobi_residual_bruteforce(&p.matrix_field(), &s, BRUTE_FORCE_STEP).unwrap(), 0.0);
        assert_eq!(degeneracy(&constant_uv([1.0, 0.0, 0.0], [1.0, 0.0, 0.0]), &s), 1.0);
    }

    #[test]
    fn two_dimensional_jacobi_is_trivial() {
        let n = MatrixField::new("2d", 2, |s| {
            let mut m = DMatrix::zeros(2, 2);
            m[(0, 1)] = s.get(0) * s.get(1).sin();
            m[(1, 0)] = -m[(0, 1)];
            m
        });
        assert_eq!(jacobi_residual_bruteforce(&n, &State::at(vec![0.4, 1.3]), BRUTE_FORCE_STEP).unwrap(), 0.0);
    }

    #[test]
    fn uv_and_bruteforce_agree_componentwise_on_generic_fields() {
        // Brute-force triples (b,c,d) in order (012, 013, 023, 123) equal
        // (-v3, v2, -v1, scalar) of the (U, V) form for any smooth U, V.
        let p = PoissonUV::new(
            "generic",
            chart(),
            |s| Vector3::new(s.get(0) * s.get(2), s.get(1).powi(2) - s.get(3), (s.get(0) + s.get(3)).sin()),
            |s| Vector3::new(s.get(2) * s.get(3), s.get(0).cos() + s.get(1), s.get(0) * s.get(1) * s.get(2)),
        )
        .unwrap();
        let s = State::at(vec![0.4, -0.7, 1.1, 0.3]);
        let b = jacobi_components_bruteforce(&p.matrix_field(), &s, BRUTE_FORCE_STEP).unwrap();
        let j = jacobi_residual_uv(&p, &s).unwrap();
        let expect = [-j.vector[2], j.vector[1], -j.vector[0], j.scalar];
        for (x, y) in b.iter().zip(expect) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-6);
        }
        assert!(j.max_abs() > 1e-2);
    }

    #[test]
    fn casimirs_of_pair_and_nonzero_third() {
        let [h1, h2, h3] = shivamoggi_integrals();
        let p = build_uv_from_pair(&h1, &h2, &chart()).unwrap();
        let mut third = 0.0f64;
        for s in samples(100, 2) {
            assert!(casimir_residual(&p, &h1, &s).unwrap() < 1e-12);
            assert!(casimir_residual(&p, &h2, &s).unwrap() < 1e-12);
            third = third.max(casimir_residual(&p, &h3, &s).unwrap());
        }
        assert!(third > 1e-3);
    }

    #[test]
    fn expanded_form_matches_matrix_product() {
        let [h1, h2, h3] = shivamoggi_integrals();
        let p = build_uv_from_pair(&h1, &h2, &chart()).unwrap();
        for s in samples(100, 3) {
            let a = hamiltonian_vector_field(&p, &h3, &s).unwrap();
            let b = hamiltonian_vector_field_expanded(&h1, &h2, &h3, &chart(), &s).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn compact_formula_is_twice_the_block_matrix() {
        let [h1, h2, h3] = shivamoggi_integrals();
        let set = tri_hamiltonian_set(&h1, &h2, &h3, &chart()).unwrap();
        let pairs = [(&h2, &h3), (&h3, &h1), (&h1, &h2)];
        for s in samples(20, 4) {
            for (p, (a, b)) in set.iter().zip(pairs) {
                let diff = compact_matrix(a, b, &chart(), &s).unwrap() - assemble_matrix(p, &s) * 2.0;
                assert!(diff.amax() < 1e-12);
            }
        }
    }

    #[test]
    fn corrupted_structure_fails_both_oracles() {
        let [h1, h2, _] = shivamoggi_integrals();
        let p = build_uv_from_pair(&h1, &h2, &chart()).unwrap().corrupted(0);
        let s = State::at(vec![1.0, 2.0, 1.0, 1.0]);
        assert!(jacobi_residual_uv(&p, &s).unwrap().max_abs() > 1e-2);
        assert!(jacobi_residual_bruteforce(&p.matrix_field(), &s, BRUTE_FORCE_STEP).unwrap() > 1e-2);
    }

    #[test]
    fn lorenz_conservative_pair() {
        let h1 = ScalarField::new("H1", 3, |s| 0.5 * (s.get(1).powi(2) + s.get(2).powi(2) - s.get(0).powi(2)))
            .with_grad(|s| vec![-s.get(0), s.get(1), s.get(2)]);
        let h2 = ScalarField::new("H2", 3, |s| 0.5 * s.get(0).powi(2) - s.get(2))
            .with_grad(|s| vec![s.get(0), 0.0, -1.0]);
        let (n1, n2) = build_3d_pair(&h1, &h2).unwrap();
        let s = State::at(vec![1.0, 2.0, 3.0]);
        let x = ScalarField::coordinate("x", 3, 0);
        let y = ScalarField::coordinate("y", 3, 1);
        assert_eq!(bracket(&n1, &x, &y, &s).unwrap(), 3.0);
        let a = n2.hamiltonian_field(&h1).eval(&s);
        let b = n1.hamiltonian_field(&h2).eval(&s);
        assert_eq!(a, vec![2.0, -2.0, 2.0]);
        assert_eq!(b, vec![2.0, -2.0, 2.0]);
        let nb = nambu_field(&h2, &h1, &s).unwrap();
        assert_eq!(nb, Vector3::new(2.0, -2.0, 2.0));
        assert_eq!(nambu_field(&h1, &h1, &s).unwrap(), Vector3::zeros());
        assert!(jacobi_residual_bruteforce(&n1.pencil(&n2, 0.7), &s, BRUTE_FORCE_STEP).unwrap() < 1e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn assembled_matrix_is_antisymmetric(c in proptest::array::uniform4(-2.0f64..2.0)) {
            let [h1, h2, _] = shivamoggi_integrals();
            let p = build_uv_from_pair(&h1, &h2, &chart()).unwrap();
            let n = assemble_matrix(&p, &State::at(c.to_vec()));
            prop_assert_eq!(n + n.transpose(), Matrix4::zeros());
        }

        #[test]
        fn pair_construction_is_degenerate_poisson(c in proptest::array::uniform4(-2.0f64..2.0)) {
            let [h1, h2, h3] = shivamoggi_integrals();
            let s = State::at(c.to_vec());
            let p = build_uv_from_pair(&h3, &h2, &chart()).unwrap();
            prop_assert!(degeneracy(&p, &s).abs() < 1e-12);
            prop_assert!(jacobi_residual_uv(&p, &s).unwrap().max_abs() < 1e-6);
            let xh = hamiltonian_vector_field(&p, &h1, &s).unwrap();
            let g = h1.grad(&s).unwrap();
            prop_assert!(crate::fields::dot(&g, &xh).abs() < 1e-12);
        }

        #[test]
        fn bracket_is_antisymmetric(c in proptest::array::uniform4(-2.0f64..2.0)) {
            let [h1, h2, h3] = shivamoggi_integrals();
            let n = build_uv_from_pair(&h1, &h2, &chart()).unwrap().matrix_field();
            let s = State::at(c.to_vec());
            prop_assert!(bracket(&n, &h3, &h3, &s).unwrap().abs() < 1e-12);
            let ab = bracket(&n, &h3, &h2, &s).unwrap() + bracket(&n, &h2, &h3, &s).unwrap();
            prop_assert!(ab.abs() < 1e-12);
        }

        #[test]
        fn conformal_rescaling_keeps_degenerate_structure_poisson(
            c in proptest::array::uniform4(-1.5f64..1.5),
            k in -1.0f64..1.0,
        ) {
            let [h1, h2, _] = shivamoggi_integrals();
            let theta = ScalarField::new("theta", 4, move |s| (k * s.get(0)).exp() + s.get(2).powi(2));
            let p = build_uv_from_pair(&h1, &h2, &chart()).unwrap().conformal(&theta);
            let s = State::at(c.to_vec());
            prop_assert!(jacobi_residual_uv(&p, &s).unwrap().max_abs() < 1e-6);
        }
    }
}
