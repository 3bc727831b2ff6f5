//! Integrators, conservation drift and Lyapunov spectra.

use std::cell::Cell;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{ScalarField, State, VectorField};

/// Central-difference step for tangent-flow Jacobians.
pub const JACOBIAN_STEP: f64 = 1e-6;
pub const DEFAULT_RENORM: f64 = 1.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk4,
    Rk45,
    /// Forward Euler, kept for order tests.
    Euler,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rk4" | "fixed-rk4" => Ok(Self::Rk4),
            "rk45" | "adaptive-rk45" => Ok(Self::Rk45),
            "euler" => Ok(Self::Euler),
            _ => Err(Error::InvalidConfig(format!("unknown method `{s}` (rk4, rk45, euler)"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Fixed step, or the initial step guess for `Rk45` (0 picks one).
    pub dt: f64,
    pub rtol: f64,
    pub atol: f64,
    pub t_end: f64,
    pub max_steps: usize,
    /// Keep every n-th accepted step (the last one is always kept).
    pub record_every: usize,
}

impl IntegratorConfig {
    pub fn rk4(dt: f64, t_end: f64) -> Self {
        Self {
            method: Method::Rk4,
            dt,
            rtol: 1e-10,
            atol: 1e-12,
            t_end,
            max_steps: 50_000_000,
            record_every: 1,
        }
    }

    pub fn rk45(rtol: f64, atol: f64, t_end: f64) -> Self {
        Self {
            method: Method::Rk45,
            dt: 0.0,
            rtol,
            atol,
            ..Self::rk4(0.0, t_end)
        }
    }

    pub fn euler(dt: f64, t_end: f64) -> Self {
        Self {
            method: Method::Euler,
            ..Self::rk4(dt, t_end)
        }
    }

    pub fn with_record_every(mut self, n: usize) -> Self {
        self.record_every = n.max(1);
        self
    }

    pub fn with_max_steps(mut self, n: usize) -> Self {
        self.max_steps = n;
        self
    }

    pub fn validate(&self, t0: f64) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.t_end > t0) {
            return bad("t_end must exceed the initial time");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        match self.method {
            Method::Rk4 | Method::Euler if !(self.dt > 0.0) => bad("dt must be positive"),
            Method::Rk45 if !(self.rtol > 0.0 && self.atol > 0.0) => bad("rtol and atol must be positive"),
            Method::Rk45 if self.dt < 0.0 => bad("initial dt must be non-negative"),
            _ => Ok(()),
        }
    }
}

/// Why an integration stopped before `t_end`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Abort {
    NonFinite { t: f64 },
    OutsideDomain { t: f64 },
    StepUnderflow { t: f64, h: f64 },
    MaxSteps { t: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub labels: Vec<String>,
    pub samples: Vec<State>,
    pub integral_names: Vec<String>,
    /// `integral_series[k][i]` is integral `k` at sample `i`; NaN outside its domain.
    pub integral_series: Vec<Vec<f64>>,
    pub steps: usize,
    pub rejected: usize,
    pub aborted: Option<Abort>,
}

impl Trajectory {
    pub fn is_partial(&self) -> bool {
        self.aborted.is_some()
    }

    pub fn last(&self) -> &State {
        self.samples.last().expect("trajectory holds the initial state")
    }

    /// Drift per integral, `max_k |I_k - I_0| / (1 + |I_0|)`.
    pub fn drift(&self) -> Vec<f64> {
        self.integral_series.iter().map(|s| series_drift(s).0).collect()
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend(self.labels.iter().cloned());
        header.extend(self.integral_names.iter().cloned());
        out.write_record(&header)?;
        for (i, s) in self.samples.iter().enumerate() {
            let mut row = vec![fmt17(s.t)];
            row.extend(s.coords.iter().map(|v| fmt17(*v)));
            row.extend(self.integral_series.iter().map(|series| fmt17(series[i])));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Drift over the finite prefix of `series`, plus whether a NaN (domain exit)
/// cut it short.
fn series_drift(series: &[f64]) -> (f64, bool) {
    let Some(&i0) = series.first() else { return (0.0, false) };
    let mut worst = 0.0f64;
    for &v in series {
        if !v.is_finite() {
            return (worst, true);
        }
        worst = worst.max((v - i0).abs() / (1.0 + i0.abs()));
    }
    (worst, false)
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftEntry {
    pub name: String,
    pub drift: f64,
    /// The integral left its domain (or the trajectory aborted) before the end.
    pub flagged: bool,
    pub valid_until: f64,
}

/// Maximum relative deviation of each integral along `traj`.
pub fn drift_report(traj: &Trajectory, integrals: &[ScalarField]) -> Vec<DriftEntry> {
    integrals
        .iter()
        .map(|f| {
            let mut series = Vec::with_capacity(traj.samples.len());
            let mut valid_until = traj.samples[0].t;
            for s in &traj.samples {
                if !f.in_domain(s) {
                    series.push(f64::NAN);
                    break;
                }
                let v = f.eval(s);
                series.push(v);
                if !v.is_finite() {
                    break;
                }
                valid_until = s.t;
            }
            let (drift, cut) = series_drift(&series);
            DriftEntry {
                name: f.name().to_string(),
                drift,
                flagged: cut || traj.is_partial(),
                valid_until,
            }
        })
        .collect()
}

fn axpy(y: &[f64], a: f64, k: &[f64]) -> Vec<f64> {
    y.iter().zip(k).map(|(y, k)| y + a * k).collect()
}

/// One generic ODE right-hand side `y' = f(t, y)`.
trait Rhs {
    fn eval(&self, t: f64, y: &[f64]) -> Option<Vec<f64>>;
}

/// Field right-hand side; remembers whether a failed evaluation was a
/// non-finite value rather than a domain exit.
struct FieldRhs<'a>(&'a VectorField, Cell<bool>);

impl<'a> FieldRhs<'a> {
    fn new(x: &'a VectorField) -> Self {
        Self(x, Cell::new(false))
    }

    fn halt(&self, t: f64) -> Abort {
        if self.1.get() {
            Abort::NonFinite { t }
        } else {
            Abort::OutsideDomain { t }
        }
    }
}

impl Rhs for FieldRhs<'_> {
    fn eval(&self, t: f64, y: &[f64]) -> Option<Vec<f64>> {
        if !y.iter().all(|v| v.is_finite()) {
            self.1.set(true);
            return None;
        }
        let s = State::new(y.to_vec(), t);
        if !self.0.in_domain(&s) {
            return None;
        }
        let v = self.0.eval(&s);
        if v.iter().all(|x| x.is_finite()) {
            Some(v)
        } else {
            self.1.set(true);
            None
        }
    }
}

fn rk4_step(f: &impl Rhs, t: f64, y: &[f64], h: f64) -> Option<Vec<f64>> {
    let k1 = f.eval(t, y)?;
    let k2 = f.eval(t + 0.5 * h, &axpy(y, 0.5 * h, &k1))?;
    let k3 = f.eval(t + 0.5 * h, &axpy(y, 0.5 * h, &k2))?;
    let k4 = f.eval(t + h, &axpy(y, h, &k3))?;
    Some(
        (0..y.len())
            .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect(),
    )
}

fn euler_step(f: &impl Rhs, t: f64, y: &[f64], h: f64) -> Option<Vec<f64>> {
    Some(axpy(y, h, &f.eval(t, y)?))
}

// Dormand-Prince 5(4).
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Returns the 5th-order solution and the scaled RMS error estimate.
fn dp45_step(f: &impl Rhs, t: f64, y: &[f64], h: f64, rtol: f64, atol: f64) -> Option<(Vec<f64>, f64)> {
    let n = y.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
    for stage in 0..7 {
        let mut yi = y.to_vec();
        for (j, kj) in k.iter().enumerate() {
            let a = A[stage][j];
            if a != 0.0 {
                for i in 0..n {
                    yi[i] += h * a * kj[i];
                }
            }
        }
        k.push(f.eval(t + C[stage] * h, &yi)?);
    }
    let mut y5 = y.to_vec();
    let mut err = 0.0;
    for i in 0..n {
        let (mut d5, mut d4) = (0.0, 0.0);
        for s in 0..7 {
            d5 += B5[s] * k[s][i];
            d4 += B4[s] * k[s][i];
        }
        y5[i] += h * d5;
        let sc = atol + rtol * y[i].abs().max(y5[i].abs());
        err += (h * (d5 - d4) / sc).powi(2);
    }
    Some((y5, (err / n as f64).sqrt()))
}

fn initial_step(f: &impl Rhs, t: f64, y: &[f64], rtol: f64, atol: f64, span: f64) -> f64 {
    let Some(f0) = f.eval(t, y) else { return span * 1e-6 };
    let sc: Vec<f64> = y.iter().map(|v| atol + rtol * v.abs()).collect();
    let norm = |v: &[f64]| (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
    let (d0, d1) = (norm(y), norm(&f0));
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h.min(span)
}

struct Recorder<'a> {
    traj: Trajectory,
    integrals: &'a [ScalarField],
    every: usize,
    pending: Option<State>,
}

impl Recorder<'_> {
    fn push(&mut self, s: State) {
        for (series, f) in self.traj.integral_series.iter_mut().zip(self.integrals) {
            series.push(if f.in_domain(&s) { f.eval(&s) } else { f64::NAN });
        }
        self.traj.samples.push(s);
    }

    fn accept(&mut self, s: State) {
        self.traj.steps += 1;
        if self.traj.steps.is_multiple_of(self.every) {
            self.pending = None;
            self.push(s);
        } else {
            self.pending = Some(s);
        }
    }

    fn finish(mut self, aborted: Option<Abort>) -> Trajectory {
        if let Some(s) = self.pending.take() {
            self.push(s);
        }
        self.traj.aborted = aborted;
        self.traj
    }
}

/// Integrate `x` from `s0` to `cfg.t_end`.
pub fn integrate(x: &VectorField, s0: &State, cfg: &IntegratorConfig) -> Result<Trajectory> {
    integrate_with(x, s0, cfg, &[])
}

/// Integrate and record `integrals` at every kept step.
pub fn integrate_with(x: &VectorField, s0: &State, cfg: &IntegratorConfig, integrals: &[ScalarField]) -> Result<Trajectory> {
    let labels = (0..s0.dim()).map(|i| format!("x{i}")).collect();
    integrate_labelled(x, s0, cfg, integrals, labels)
}

/// As [`integrate_with`], with coordinate labels for CSV export.
pub fn integrate_labelled(
    x: &VectorField,
    s0: &State,
    cfg: &IntegratorConfig,
    integrals: &[ScalarField],
    labels: Vec<String>,
) -> Result<Trajectory> {
    cfg.validate(s0.t)?;
    if s0.dim() != x.dim() || labels.len() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: s0.dim(),
        });
    }
    if !x.in_domain(s0) || !s0.is_finite() {
        return Err(Error::OutsideDomain {
            field: x.name().to_string(),
            at: s0.coords.clone(),
            t: s0.t,
        });
    }
    let mut rec = Recorder {
        traj: Trajectory {
            labels,
            samples: Vec::new(),
            integral_names: integrals.iter().map(|f| f.name().to_string()).collect(),
            integral_series: vec![Vec::new(); integrals.len()],
            steps: 0,
            rejected: 0,
            aborted: None,
        },
        integrals,
        every: cfg.record_every.max(1),
        pending: None,
    };
    rec.push(s0.clone());
    let f = FieldRhs::new(x);
    let (mut t, mut y) = (s0.t, s0.coords.clone());
    let span = cfg.t_end - s0.t;
    let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());

    match cfg.method {
        Method::Rk4 | Method::Euler => {
            let n = (span / cfg.dt).ceil() as usize;
            for i in 0..n {
                if i >= cfg.max_steps {
                    return Ok(rec.finish(Some(Abort::MaxSteps { t })));
                }
                let h = if i + 1 == n { cfg.t_end - t } else { cfg.dt };
                let next = match cfg.method {
                    Method::Rk4 => rk4_step(&f, t, &y, h),
                    _ => euler_step(&f, t, &y, h),
                };
                let Some(next) = next else {
                    return Ok(rec.finish(Some(f.halt(t))));
                };
                if !finite(&next) {
                    return Ok(rec.finish(Some(Abort::NonFinite { t })));
                }
                t = if i + 1 == n { cfg.t_end } else { s0.t + (i + 1) as f64 * cfg.dt };
                y = next;
                rec.accept(State::new(y.clone(), t));
            }
        }
        Method::Rk45 => {
            let mut h = if cfg.dt > 0.0 { cfg.dt } else { initial_step(&f, t, &y, cfg.rtol, cfg.atol, span) };
            let mut err_prev = 1.0f64;
            let (alpha, beta) = (0.7 / 5.0, 0.4 / 5.0);
            let mut attempts = 0usize;
            while t < cfg.t_end {
                attempts += 1;
                if attempts > cfg.max_steps {
                    return Ok(rec.finish(Some(Abort::MaxSteps { t })));
                }
                let last = t + h >= cfg.t_end;
                let hh = if last { cfg.t_end - t } else { h };
                if hh < 1e-14 * t.abs().max(1.0) {
                    return Ok(rec.finish(Some(Abort::StepUnderflow { t, h: hh })));
                }
                match dp45_step(&f, t, &y, hh, cfg.rtol, cfg.atol) {
                    Some((next, err)) if err.is_finite() && err <= 1.0 => {
                        if !finite(&next) {
                            return Ok(rec.finish(Some(Abort::NonFinite { t })));
                        }
                        t = if last { cfg.t_end } else { t + hh };
                        y = next;
                        rec.accept(State::new(y.clone(), t));
                        let e = err.max(1e-10);
                        let factor = (SAFETY * e.powf(-alpha) * err_prev.powf(beta)).clamp(MIN_FACTOR, MAX_FACTOR);
                        err_prev = e;
                        h = hh * factor;
                    }
                    Some((_, err)) if err.is_finite() => {
                        rec.traj.rejected += 1;
                        h = hh * (SAFETY * err.powf(-alpha)).clamp(MIN_FACTOR, 1.0);
                    }
                    _ => {
                        // Left the domain or produced NaN mid-step: shrink hard.
                        rec.traj.rejected += 1;
                        h = hh * MIN_FACTOR;
                    }
                }
            }
        }
    }
    Ok(rec.finish(None))
}

/// Empirical order from three runs at `dt`, `dt/2`, `dt/4`. With `exact` the
/// errors are measured against it, otherwise successive differences are used.
pub fn convergence_order(x: &VectorField, s0: &State, method: Method, dt: f64, t_end: f64, exact: Option<&[f64]>) -> Result<f64> {
    let run = |h: f64| -> Result<Vec<f64>> {
        let cfg = IntegratorConfig {
            method,
            ..IntegratorConfig::rk4(h, t_end)
        }
        .with_record_every(usize::MAX);
        let tr = integrate(x, s0, &cfg)?;
        if let Some(a) = &tr.aborted {
            return Err(Error::InvalidConfig(format!("integration aborted: {a:?}")));
        }
        Ok(tr.last().coords.clone())
    };
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let (y1, y2, y3) = (run(dt)?, run(dt / 2.0)?, run(dt / 4.0)?);
    let ratio = match exact {
        Some(e) => dist(&y2, e) / dist(&y3, e),
        None => dist(&y1, &y2) / dist(&y2, &y3),
    };
    Ok(ratio.log2())
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovResult {
    /// Sorted in decreasing order.
    pub exponents: Vec<f64>,
    /// Standard error of each exponent over the last half of the run.
    pub std_errors: Vec<f64>,
    #[serde(rename = "T")]
    pub t_total: f64,
    pub renorm_interval: f64,
    pub seed: u64,
    pub dt: f64,
}

impl LyapunovResult {
    pub fn max_exponent(&self) -> f64 {
        self.exponents[0]
    }
}

fn jacobian(x: &VectorField, s: &State) -> Option<Vec<Vec<f64>>> {
    let n = s.dim();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let h = JACOBIAN_STEP * (1.0 + s.coords[j].abs());
        let (p, m) = (s.shifted(j, h), s.shifted(j, -h));
        if !x.in_domain(&p) || !x.in_domain(&m) {
            return None;
        }
        let (fp, fm) = (x.eval(&p), x.eval(&m));
        cols.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<_>>());
    }
    // cols[j][i] = d f_i / d x_j
    Some(cols)
}

/// State plus `n` tangent vectors, flattened.
struct TangentRhs<'a>(&'a VectorField, usize);

impl Rhs for TangentRhs<'_> {
    fn eval(&self, t: f64, y: &[f64]) -> Option<Vec<f64>> {
        let n = self.1;
        let s = State::new(y[..n].to_vec(), t);
        let f = FieldRhs::new(self.0).eval(t, &y[..n])?;
        let jac = jacobian(self.0, &s)?;
        let mut out = f;
        for k in 0..n {
            let v = &y[n * (k + 1)..n * (k + 2)];
            out.extend((0..n).map(|i| (0..n).map(|j| jac[j][i] * v[j]).sum::<f64>()));
        }
        Some(out)
    }
}

/// Benettin estimate of the full spectrum with fixed-step RK4 of size
/// `cfg.dt` (the method field is ignored) and modified Gram-Schmidt every
/// `renorm` time units. The initial frame is a seeded random orthonormal one.
pub fn lyapunov_spectrum(x: &VectorField, s0: &State, cfg: &IntegratorConfig, renorm: f64, seed: u64) -> Result<LyapunovResult> {
    if !(cfg.dt > 0.0 && renorm >= cfg.dt && cfg.t_end > s0.t) {
        return Err(Error::InvalidConfig("need dt > 0, renorm >= dt and t_end > t0".into()));
    }
    let n = s0.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frame: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    mgs(&mut frame).ok_or(Error::CollapsedFrame { t: s0.t })?;

    let rhs = TangentRhs(x, n);
    let mut y = s0.coords.clone();
    y.extend(frame.iter().flatten());
    let mut t = s0.t;
    let intervals = ((cfg.t_end - s0.t) / renorm).round().max(1.0) as usize;
    let substeps = (renorm / cfg.dt).round().max(1.0) as usize;
    let h = renorm / substeps as f64;
    let mut sums = vec![0.0; n];
    let mut rates: Vec<Vec<f64>> = Vec::with_capacity(intervals);

    for _ in 0..intervals {
        for _ in 0..substeps {
            y = rk4_step(&rhs, t, &y, h).ok_or_else(|| Error::OutsideDomain {
                field: x.name().to_string(),
                at: y[..n].to_vec(),
                t,
            })?;
            t += h;
        }
        let mut frame: Vec<Vec<f64>> = (0..n).map(|k| y[n * (k + 1)..n * (k + 2)].to_vec()).collect();
        let norms = mgs(&mut frame).ok_or(Error::CollapsedFrame { t })?;
        let r: Vec<f64> = norms.iter().map(|v| v.ln() / renorm).collect();
        for (s, v) in sums.iter_mut().zip(&r) {
            *s += v * renorm;
        }
        rates.push(r);
        y.truncate(n);
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::CollapsedFrame { t });
        }
        y.extend(frame.iter().flatten());
    }
    let total = intervals as f64 * renorm;
    let tail = &rates[rates.len() / 2..];
    let m = tail.len() as f64;
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let mean = tail.iter().map(|r| r[k]).sum::<f64>() / m;
            let var = if m > 1.0 {
                tail.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / (m - 1.0)
            } else {
                0.0
            };
            (sums[k] / total, (var / m).sqrt())
        })
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(LyapunovResult {
        exponents: pairs.iter().map(|p| p.0).collect(),
        std_errors: pairs.iter().map(|p| p.1).collect(),
        t_total: total,
        renorm_interval: renorm,
        seed,
        dt: h,
    })
}

/// Modified Gram-Schmidt in place; returns the norms before normalisation.
fn mgs(frame: &mut [Vec<f64>]) -> Option<Vec<f64>> {
    let mut norms = Vec::with_capacity(frame.len());
    for k in 0..frame.len() {
        for j in 0..k {
            let (done, rest) = frame.split_at_mut(k);
            let d: f64 = done[j].iter().zip(&rest[0]).map(|(a, b)| a * b).sum();
            for (v, q) in rest[0].iter_mut().zip(&done[j]) {
                *v -= d * q;
            }
        }
        let nrm = frame[k].iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(nrm.is_finite() && nrm > 1e-300) {
            return None;
        }
        frame[k].iter_mut().for_each(|v| *v /= nrm);
        norms.push(nrm);
    }
    Some(norms)
}

/// Built-in harmonic oscillator `x' = y, y' = -x`.
pub fn harmonic_oscillator() -> VectorField {
    VectorField::new("harmonic", 2, true, |s| vec![s.coords[1], -s.coords[0]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::system;
    use std::f64::consts::PI;

    #[test]
    fn harmonic_rk4_returns_home() {
        let tr = integrate(&harmonic_oscillator(), &State::at(vec![1.0, 0.0]), &IntegratorConfig::rk4(1e-3, 2.0 * PI)).unwrap();
        let e = tr.last();
        assert!((e.coords[0] - 1.0).abs() < 1e-10 && e.coords[1].abs() < 1e-10, "{e:?}");
        assert_eq!(e.t, 2.0 * PI);
        assert!(tr.samples.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn zero_field_is_constant() {
        let z = VectorField::new("zero", 3, true, |_| vec![0.0; 3]);
        let tr = integrate(&z, &State::at(vec![1.0, 2.0, 3.0]), &IntegratorConfig::rk45(1e-8, 1e-10, 5.0)).unwrap();
        assert!(tr.samples.iter().all(|s| s.coords == vec![1.0, 2.0, 3.0]));
    }

    #[test]
    fn rk45_hits_rtol() {
        let tr = integrate(&harmonic_oscillator(), &State::at(vec![1.0, 0.0]), &IntegratorConfig::rk45(1e-10, 1e-12, 2.0 * PI)).unwrap();
        let e = tr.last();
        assert!((e.coords[0] - 1.0).abs() < 1e-8 && e.coords[1].abs() < 1e-8, "{e:?}");
    }

    #[test]
    fn orders() {
        let x = harmonic_oscillator();
        let s0 = State::at(vec![1.0, 0.0]);
        let exact = [1.0f64.cos(), -1.0f64.sin()];
        let p = convergence_order(&x, &s0, Method::Rk4, 0.05, 1.0, Some(&exact)).unwrap();
        assert!((3.8..=4.2).contains(&p), "{p}");
        let p = convergence_order(&x, &s0, Method::Euler, 1e-3, 1.0, Some(&exact)).unwrap();
        assert!((p - 1.0).abs() < 0.05, "{p}");
        let p = convergence_order(&x, &s0, Method::Rk4, 0.05, 1.0, None).unwrap();
        assert!((3.8..=4.2).contains(&p), "{p}");
    }

    #[test]
    fn explicit_time_integral_drifts() {
        let tr = integrate_with(
            &harmonic_oscillator(),
            &State::at(vec![1.0, 0.0]),
            &IntegratorConfig::rk4(1e-2, 3.0),
            &[ScalarField::new("t", 2, |s| s.t).time_dependent()],
        )
        .unwrap();
        assert!((tr.drift()[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn aborts_on_blowup_with_partial_trajectory() {
        let x = VectorField::new("blowup", 1, true, |s| vec![s.coords[0] * s.coords[0]]);
        let tr = integrate(&x, &State::at(vec![1.0]), &IntegratorConfig::rk4(1e-3, 2.0)).unwrap();
        assert!(tr.is_partial());
        assert!(tr.last().t < 1.01);
    }

    #[test]
    fn lyapunov_linear_growth_and_isometry() {
        let grow = VectorField::new("grow", 1, true, |s| vec![s.coords[0]]);
        let r = lyapunov_spectrum(&grow, &State::at(vec![1.0]), &IntegratorConfig::rk4(0.01, 20.0), 1.0, 1).unwrap();
        assert!((r.exponents[0] - 1.0).abs() < 1e-3, "{r:?}");
        let r = lyapunov_spectrum(&harmonic_oscillator(), &State::at(vec![1.0, 0.0]), &IntegratorConfig::rk4(0.01, 100.0), 1.0, 1).unwrap();
        assert!(r.exponents.iter().all(|l| l.abs() < 0.01), "{r:?}");
        assert!(r.exponents[0] >= r.exponents[1]);
    }

    #[test]
    fn lyapunov_is_deterministic() {
        let cfg = IntegratorConfig::rk4(0.01, 10.0);
        let a = lyapunov_spectrum(&harmonic_oscillator(), &State::at(vec![1.0, 0.5]), &cfg, 1.0, 7).unwrap();
        let b = lyapunov_spectrum(&harmonic_oscillator(), &State::at(vec![1.0, 0.5]), &cfg, 1.0, 7).unwrap();
        assert_eq!(a.exponents, b.exponents);
    }

    #[test]
    fn shivamoggi_drift_scales_with_dt() {
        let sys = system("shivamoggi", &[]).unwrap();
        let hs: Vec<_> = sys.integrals.iter().map(|i| i.field.clone()).collect();
        let run = |dt: f64| {
            let tr = integrate_with(&sys.field, &sys.default_state, &IntegratorConfig::rk4(dt, 0.5), &hs).unwrap();
            assert!(!tr.is_partial());
            drift_report(&tr, &hs).iter().map(|d| d.drift).fold(0.0, f64::max)
        };
        let (a, b) = (run(1e-2), run(5e-3));
        assert!(b < 1e-8, "{b}");
        assert!(a / b >= 8.0, "{a} {b}");
    }

    #[test]
    fn constraint_violation_makes_lu_integral_drift() {
        let d = crate::systems::descriptor("lu_original").unwrap();
        let sys = d.instantiate_unchecked(&[("gamma".into(), 1.0), ("delta".into(), 2.0)]).unwrap();
        let i1 = sys.integral("I1").unwrap().field.clone();
        let tr = integrate_with(&sys.field, &sys.default_state, &IntegratorConfig::rk4(1e-3, 1.0), &[i1]).unwrap();
        assert!(tr.drift()[0] > 1e-2);
    }

    #[test]
    fn csv_has_header_and_full_precision() {
        let tr = integrate_with(
            &harmonic_oscillator(),
            &State::at(vec![1.0, 0.0]),
            &IntegratorConfig::rk4(0.5, 1.0),
            &[ScalarField::new("E", 2, |s| s.coords[0].powi(2) + s.coords[1].powi(2))],
        )
        .unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x0,x1,E");
        assert_eq!(lines.next().unwrap(), "0.0000000000000000e0,1.0000000000000000e0,0.0000000000000000e0,1.0000000000000000e0");
        assert_eq!(text.lines().count(), 4);
    }
}
