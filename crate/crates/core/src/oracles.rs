//! Reference solutions used to validate the integrator: the explicit K₂
//! trajectory, the symmetric reduction on K₃ and the Fourier truncation of
//! the circle.

use num_complex::Complex64;
use serde::Serialize;

use crate::complex::{build_complex, Graph, OrientedComplex};
use crate::error::{Error, Result};
use crate::flow::{self, EvolveOptions, FlowState, Trajectory};
use crate::linalg::{self, CMatrix, I, ZERO};
use crate::operators::{self, GradedOperator};

const SQRT8: f64 = 2.828_427_124_746_190_3;

/// Reduced K₂ variables: `d` is the edge-vertex entry, `b` the vertex diagonal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct K2State {
    pub d: f64,
    pub b: f64,
    pub t: f64,
}

impl K2State {
    /// `d² + 2b²`, equal to one on the exact solution.
    pub fn integral(&self) -> f64 {
        self.d * self.d + 2.0 * self.b * self.b
    }

    /// Reads `(|d|, |b|)` off a full K₂ state.
    pub fn from_flow(s: &FlowState) -> Self {
        Self {
            d: s.d.block(1, 0)[(0, 0)].norm(),
            b: s.b.block(0, 0)[(0, 0)].norm(),
            t: s.t,
        }
    }
}

pub fn k2_closed_form(t: f64) -> K2State {
    let x = SQRT8 * t;
    K2State {
        d: 1.0 / x.cosh(),
        b: x.tanh() / std::f64::consts::SQRT_2,
        t,
    }
}

/// `D(+inf)` and `D(-inf)` on K₂ in the complex's index order.
pub fn k2_limits() -> (CMatrix, CMatrix) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let plus = CMatrix::from_row_slice(
        3,
        3,
        &[1.0, -1.0, 0.0, -1.0, 1.0, 0.0, 0.0, 0.0, -2.0].map(|x| Complex64::new(x * s, 0.0)),
    );
    let minus = -plus.clone();
    (plus, minus)
}

pub fn k2_complex() -> OrientedComplex {
    build_complex(&Graph::complete(2)).expect("K2 is a valid graph")
}

#[derive(Clone, Debug, Serialize)]
pub struct K2Comparison {
    pub max_d_error: f64,
    pub max_b_error: f64,
    pub max_integral_drift: f64,
}

impl K2Comparison {
    pub fn max_error(&self) -> f64 {
        self.max_d_error.max(self.max_b_error)
    }
}

/// Compares magnitudes along a K₂ trajectory with the closed form. The
/// closed form is even in `d` and odd in `b`, so backward runs compare too.
pub fn k2_compare(traj: &Trajectory) -> Result<K2Comparison> {
    if traj.first().grading().size() != 3 {
        return Err(Error::Usage("trajectory is not a K2 run".into()));
    }
    let mut out = K2Comparison {
        max_d_error: 0.0,
        max_b_error: 0.0,
        max_integral_drift: 0.0,
    };
    for s in &traj.snapshots {
        let num = K2State::from_flow(s);
        let exact = k2_closed_form(s.t);
        out.max_d_error = out.max_d_error.max((num.d - exact.d).abs());
        out.max_b_error = out.max_b_error.max((num.b - exact.b.abs()).abs());
        out.max_integral_drift = out.max_integral_drift.max((num.integral() - 1.0).abs());
    }
    Ok(out)
}

/// Location and value of the minimum of `d'(t)` on K₂.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct K2Inflection {
    pub t_star: f64,
    pub slope: f64,
    pub numeric_t_star: f64,
    pub numeric_slope: f64,
}

/// Closed form from `tanh²(√8 t) = 1/2`, plus a golden-section search on
/// `d'(t)` evaluated along the integrated flow.
pub fn k2_inflection() -> Result<K2Inflection> {
    let x = std::f64::consts::FRAC_1_SQRT_2.atanh();
    let t_star = x / SQRT8;
    let slope = -SQRT8 * x.tanh() / x.cosh();

    let s0 = FlowState::initial(&k2_complex(), &[], 0.0, false)?;
    let opts = EvolveOptions {
        h: 1e-4,
        ..EvolveOptions::default()
    };
    let d_dot = |t: f64| -> Result<f64> {
        let s = flow::advance(&s0, t, &opts)?;
        let z = s.d.block(1, 0)[(0, 0)];
        let (dz, _) = flow::rhs(&s);
        let dz = dz.block(1, 0)[(0, 0)];
        Ok((z.conj() * dz).re / z.norm())
    };
    let (numeric_t_star, numeric_slope) = golden_min(d_dot, 0.05, 1.0, 1e-7)?;
    Ok(K2Inflection {
        t_star,
        slope,
        numeric_t_star,
        numeric_slope,
    })
}

fn golden_min(f: impl Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    while b - a > tol {
        if f1 < f2 {
            b = x2;
            (x2, f2) = (x1, f1);
            x1 = b - g * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            (x1, f1) = (x2, f2);
            x2 = a + g * (b - a);
            f2 = f(x2)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, f(x)?))
}

/// The symmetric ansatz on K₃. The vertex block is `b1 I + b2 (J - I)`, the
/// edge block `b4 I + b5 P` with `P` the off-diagonal part of `d₀ d₀*`, the
/// triangle entry `b6`, and `d = d1 d₀ + d2 d₁`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct K3Reduced {
    pub b1: f64,
    pub b2: f64,
    pub b4: f64,
    pub b5: f64,
    pub b6: f64,
    pub d1: f64,
    pub d2: f64,
}

impl K3Reduced {
    /// `b = 0` with the couplings of `d₀` and `d₁`.
    pub fn initial(gamma: [f64; 2]) -> Self {
        Self {
            d1: gamma[0],
            d2: gamma[1],
            ..Self::default()
        }
    }

    fn to_array(self) -> [f64; 7] {
        [self.b1, self.b2, self.b4, self.b5, self.b6, self.d1, self.d2]
    }

    fn from_array(a: [f64; 7]) -> Self {
        Self {
            b1: a[0],
            b2: a[1],
            b4: a[2],
            b5: a[3],
            b6: a[4],
            d1: a[5],
            d2: a[6],
        }
    }

    /// `tr M = 2 (6 d1² + 3 d2²)`.
    pub fn trace_m(&self) -> f64 {
        2.0 * (6.0 * self.d1 * self.d1 + 3.0 * self.d2 * self.d2)
    }

    pub fn max_diff(&self, other: &Self) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
    }
}

pub fn k3_reduced_rhs(v: &K3Reduced) -> K3Reduced {
    let (p, q) = (v.d1 * v.d1, v.d2 * v.d2);
    K3Reduced {
        b1: -4.0 * p,
        b2: 2.0 * p,
        b4: 4.0 * p - 2.0 * q,
        b5: 2.0 * p + 2.0 * q,
        b6: 6.0 * q,
        d1: v.d1 * (v.b1 - v.b2 - v.b4 - v.b5),
        d2: v.d2 * (v.b4 - 2.0 * v.b5 - v.b6),
    }
}

/// RK4 on the reduced system; returns `(t, state)` every `every` steps.
pub fn k3_reduced_evolve(
    v0: K3Reduced,
    t_end: f64,
    h: f64,
    every: usize,
) -> Result<Vec<(f64, K3Reduced)>> {
    let (steps, h) = uniform_steps(t_end, h)?;
    let every = every.max(1);
    let f = |y: [f64; 7]| k3_reduced_rhs(&K3Reduced::from_array(y)).to_array();
    let axpy = |y: [f64; 7], k: [f64; 7], a: f64| std::array::from_fn(|i| y[i] + a * k[i]);
    let mut y = v0.to_array();
    let mut out = vec![(0.0, v0)];
    for step in 1..=steps {
        let k1 = f(y);
        let k2 = f(axpy(y, k1, h / 2.0));
        let k3 = f(axpy(y, k2, h / 2.0));
        let k4 = f(axpy(y, k3, h));
        y = std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        if y.iter().any(|x| !x.is_finite()) {
            return Err(Error::Divergence { t: h * step as f64 });
        }
        if step % every == 0 || step == steps {
            out.push((h * step as f64, K3Reduced::from_array(y)));
        }
    }
    Ok(out)
}

/// Matrices spanning the K₃ ansatz, built from the actual orientation.
pub struct K3Basis {
    complex: OrientedComplex,
    d0: CMatrix,
    d1: CMatrix,
    pattern: CMatrix,
}

impl K3Basis {
    pub fn new() -> Self {
        let complex = build_complex(&Graph::complete(3)).expect("K3 is a valid graph");
        let d = operators::exterior_derivative(&complex);
        let d0 = d.block(1, 0);
        let d1 = d.block(2, 1);
        let mut pattern = &d0 * d0.adjoint();
        for k in 0..3 {
            pattern[(k, k)] = ZERO;
        }
        Self {
            complex,
            d0,
            d1,
            pattern,
        }
    }

    pub fn complex(&self) -> &OrientedComplex {
        &self.complex
    }

    pub fn to_state(&self, v: &K3Reduced, t: f64) -> Result<FlowState> {
        let mut s = FlowState::initial(&self.complex, &[], 0.0, false)?;
        let g = s.grading().clone();
        let mut d = CMatrix::zeros(7, 7);
        d.view_mut((3, 0), (3, 3)).copy_from(&self.d0.scale(v.d1));
        d.view_mut((6, 3), (1, 3)).copy_from(&self.d1.scale(v.d2));
        let mut b = CMatrix::zeros(7, 7);
        let c = |x: f64| Complex64::new(x, 0.0);
        for i in 0..3 {
            for j in 0..3 {
                b[(i, j)] = c(if i == j { v.b1 } else { v.b2 });
                b[(3 + i, 3 + j)] = if i == j { c(v.b4) } else { self.pattern[(i, j)] * v.b5 };
            }
        }
        b[(6, 6)] = c(v.b6);
        s.d = GradedOperator::new(d, g.clone())?;
        s.b = GradedOperator::new(b, g)?;
        s.t = t;
        s.gamma = vec![v.d1, v.d2];
        Ok(s)
    }

    /// Projects a full state onto the ansatz; also returns the distance
    /// between the state and its projection.
    pub fn reduce(&self, s: &FlowState) -> Result<(K3Reduced, f64)> {
        if s.grading().size() != 7 {
            return Err(Error::Usage("state is not a K3 state".into()));
        }
        let dot = |a: &CMatrix, b: &CMatrix| a.dotc(b).re / a.norm_squared();
        let bv = s.b.block(0, 0);
        let be = s.b.block(1, 1);
        let mut off = be.clone();
        for k in 0..3 {
            off[(k, k)] = ZERO;
        }
        let mean = |m: &CMatrix, diag: bool| {
            let mut acc = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    if (i == j) == diag {
                        acc += m[(i, j)].re;
                    }
                }
            }
            acc / if diag { 3.0 } else { 6.0 }
        };
        let v = K3Reduced {
            b1: mean(&bv, true),
            b2: mean(&bv, false),
            b4: mean(&be, true),
            b5: dot(&self.pattern, &off),
            b6: s.b.block(2, 2)[(0, 0)].re,
            d1: dot(&self.d0, &s.d.block(1, 0)),
            d2: dot(&self.d1, &s.d.block(2, 1)),
        };
        let back = self.to_state(&v, s.t)?;
        let residual = linalg::max_abs(&(back.dirac().entries() - s.dirac().entries()));
        Ok((v, residual))
    }
}

impl Default for K3Basis {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct K3Equivalence {
    /// Largest difference of reduced variables between the two integrations.
    pub max_state_diff: f64,
    /// Largest distance of the full trajectory from the ansatz.
    pub max_ansatz_residual: f64,
}

/// Integrates the reduced system and the full 7×7 flow side by side.
pub fn k3_equivalence(gamma: [f64; 2], t_end: f64, h: f64) -> Result<K3Equivalence> {
    let basis = K3Basis::new();
    let v0 = K3Reduced::initial(gamma);
    let reduced = k3_reduced_evolve(v0, t_end, h, 10)?;
    let s0 = FlowState::initial(basis.complex(), &gamma, 0.0, false)?;
    let traj = flow::evolve_with(
        &s0,
        t_end,
        &EvolveOptions {
            h,
            snapshot_every: 10,
            ..EvolveOptions::default()
        },
        &[],
    )?;
    let mut out = K3Equivalence {
        max_state_diff: 0.0,
        max_ansatz_residual: 0.0,
    };
    for ((t, v), s) in reduced.iter().zip(&traj.snapshots) {
        debug_assert!((t - s.t).abs() < 1e-9);
        let (w, res) = basis.reduce(s)?;
        out.max_state_diff = out.max_state_diff.max(v.max_diff(&w));
        out.max_ansatz_residual = out.max_ansatz_residual.max(res);
    }
    Ok(out)
}

/// The Fourier truncation on the circle, `D = [[B, A], [A*, C]]` over modes `-N..=N`.
#[derive(Clone, Debug, PartialEq)]
pub struct CircleModelState {
    pub a: CMatrix,
    pub b: CMatrix,
    pub c: CMatrix,
    pub t: f64,
}

impl CircleModelState {
    pub fn cutoff(&self) -> usize {
        (self.a.nrows() - 1) / 2
    }

    pub fn modes(&self) -> impl Iterator<Item = i64> {
        let n = self.cutoff() as i64;
        -n..=n
    }

    /// `B A + A C`, zero initially and preserved by the flow.
    pub fn anticommutator(&self) -> CMatrix {
        &self.b * &self.a + &self.a * &self.c
    }

    /// The diagonal blocks `B² + A A*` and `C² + A* A` of `D²`.
    pub fn blocks(&self) -> (CMatrix, CMatrix) {
        (
            &self.b * &self.b + &self.a * self.a.adjoint(),
            &self.c * &self.c + self.a.adjoint() * &self.a,
        )
    }

    /// Distance of `(B, C)` from the nearer of `±(diag|n|, -diag|n|)`.
    pub fn limit_error(&self) -> f64 {
        let target = CMatrix::from_diagonal(
            &self.modes().map(|n| Complex64::new(n.abs() as f64, 0.0)).collect::<Vec<_>>().into(),
        );
        [1.0, -1.0]
            .iter()
            .map(|&sign| {
                let tb = target.scale(sign);
                linalg::max_abs(&(&self.b - &tb)).max(linalg::max_abs(&(&self.c + &tb)))
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// `A = diag(i n)`, `B = C = 0`.
pub fn circle_model_init(n: usize) -> Result<CircleModelState> {
    if n == 0 {
        return Err(Error::Usage("circle cutoff must be at least 1".into()));
    }
    let k = 2 * n + 1;
    let diag: Vec<Complex64> = (-(n as i64)..=n as i64).map(|m| I * m as f64).collect();
    Ok(CircleModelState {
        a: CMatrix::from_diagonal(&diag.into()),
        b: CMatrix::zeros(k, k),
        c: CMatrix::zeros(k, k),
        t: 0.0,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CircleSample {
    pub t: f64,
    pub norm_a: f64,
    pub anticommutator: f64,
    pub block_b_drift: f64,
    pub block_c_drift: f64,
}

#[derive(Clone, Debug)]
pub struct CircleTrajectory {
    pub samples: Vec<CircleSample>,
    pub last: CircleModelState,
}

fn circle_rhs(s: &CircleModelState) -> (CMatrix, CMatrix, CMatrix) {
    let aa = &s.a * s.a.adjoint();
    (
        (&s.a * &s.c).scale(2.0),
        aa.scale(2.0),
        (s.a.adjoint() * &s.a).scale(-2.0),
    )
}

/// RK4 for `B' = 2AA*`, `A' = 2AC`, `C' = -2A*A`, sampled every `every` steps.
pub fn circle_model_evolve(
    s: &CircleModelState,
    t_end: f64,
    h: f64,
    every: usize,
) -> Result<CircleTrajectory> {
    let (steps, h) = uniform_steps(t_end, h)?;
    let every = every.max(1);
    let (b0, c0) = s.blocks();
    let sample = |x: &CircleModelState| {
        let (b, c) = x.blocks();
        CircleSample {
            t: x.t,
            norm_a: linalg::operator_norm(&x.a),
            anticommutator: linalg::operator_norm(&x.anticommutator()),
            block_b_drift: linalg::max_abs(&(b - &b0)),
            block_c_drift: linalg::max_abs(&(c - &c0)),
        }
    };
    let shifted = |x: &CircleModelState, k: &(CMatrix, CMatrix, CMatrix), a: f64| CircleModelState {
        a: &x.a + k.0.scale(a),
        b: &x.b + k.1.scale(a),
        c: &x.c + k.2.scale(a),
        t: x.t,
    };
    let mut x = s.clone();
    let mut samples = vec![sample(&x)];
    for step in 1..=steps {
        let k1 = circle_rhs(&x);
        let k2 = circle_rhs(&shifted(&x, &k1, h / 2.0));
        let k3 = circle_rhs(&shifted(&x, &k2, h / 2.0));
        let k4 = circle_rhs(&shifted(&x, &k3, h));
        let w = h / 6.0;
        x.a += (k1.0 + k2.0.scale(2.0) + k3.0.scale(2.0) + k4.0).scale(w);
        x.b += (k1.1 + k2.1.scale(2.0) + k3.1.scale(2.0) + k4.1).scale(w);
        x.c += (k1.2 + k2.2.scale(2.0) + k3.2.scale(2.0) + k4.2).scale(w);
        x.t = s.t + h * step as f64;
        if x.a.iter().chain(x.b.iter()).chain(x.c.iter()).any(|z| !z.is_finite()) {
            return Err(Error::Divergence { t: x.t });
        }
        if step % every == 0 || step == steps {
            samples.push(sample(&x));
        }
    }
    Ok(CircleTrajectory { samples, last: x })
}

/// `‖A(t_end)‖` and the limit error for each cutoff.
pub fn circle_cutoff_report(cutoffs: &[usize], t_end: f64, h: f64) -> Result<Vec<(usize, f64, f64)>> {
    use rayon::prelude::*;
    cutoffs
        .par_iter()
        .map(|&n| {
            let run = circle_model_evolve(&circle_model_init(n)?, t_end, h, usize::MAX)?;
            Ok((n, linalg::operator_norm(&run.last.a), run.last.limit_error()))
        })
        .collect()
}

fn uniform_steps(t_end: f64, h: f64) -> Result<(usize, f64)> {
    if !(h > 0.0) || !t_end.is_finite() || t_end == 0.0 {
        return Err(Error::Usage("need h > 0 and a finite nonzero t_end".into()));
    }
    let steps = (t_end.abs() / h - 1e-9).ceil().max(1.0) as usize;
    Ok((steps, t_end / steps as f64))
}
