//! Spectral tools built on a Dirac operator: the zeta function, the wave
//! equation, the Connes pseudo-distance between vertices and the inflation
//! profile of a deformation run.

use std::f64::consts::PI;

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::complex::OrientedComplex;
use crate::diagnostics::{self, LogLinearFit};
use crate::error::{Error, Result};
use crate::flow::Trajectory;
use crate::linalg::{self, CMatrix, CVector};
use crate::operators::{GradedOperator, KERNEL_TOL};

/// Positive Dirac eigenvalues with multiplicity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZetaSpec {
    positive_eigenvalues: Vec<f64>,
}

impl ZetaSpec {
    pub fn new(mut eigenvalues: Vec<f64>) -> Result<Self> {
        if let Some(bad) = eigenvalues.iter().find(|&&x| !(x > KERNEL_TOL) || !x.is_finite()) {
            return Err(Error::Usage(format!("zeta eigenvalue {bad} is not positive")));
        }
        eigenvalues.sort_by(f64::total_cmp);
        Ok(Self {
            positive_eigenvalues: eigenvalues,
        })
    }

    /// The eigenvalues of `dirac` above the kernel tolerance.
    pub fn of_operator(dirac: &GradedOperator) -> Self {
        Self {
            positive_eigenvalues: dirac
                .spectrum()
                .into_iter()
                .filter(|&x| x > KERNEL_TOL)
                .collect(),
        }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.positive_eigenvalues
    }
}

/// `1 + e^{-i pi s}`.
pub fn branch_factor(s: Complex64) -> Complex64 {
    1.0 + (-Complex64::i() * PI * s).exp()
}

/// `(1 + e^{-i pi s}) sum lambda^{-s}` over the positive spectrum.
pub fn dirac_zeta(z: &ZetaSpec, s: Complex64) -> Result<Complex64> {
    if z.positive_eigenvalues.is_empty() {
        return Err(Error::Usage("zeta needs a nonempty positive spectrum".into()));
    }
    let sum: Complex64 = z
        .positive_eigenvalues
        .iter()
        .map(|&l| (-s * l.ln()).exp())
        .sum();
    Ok(branch_factor(s) * sum)
}

/// Sign of the exponent in [`circle_graph_zeta`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CircleExponent {
    /// `sin^{s}`, the printed formula.
    Printed,
    /// `sin^{-s}`, the spectral convention.
    Spectral,
}

/// `(1 + e^{-i pi s}) sum_{k=1}^{n-1} sin(pi k / n)^{±s}`.
pub fn circle_graph_zeta(n: usize, s: Complex64, exponent: CircleExponent) -> Result<Complex64> {
    if n < 3 {
        return Err(Error::Usage("circle graph needs n >= 3".into()));
    }
    let sign = match exponent {
        CircleExponent::Printed => 1.0,
        CircleExponent::Spectral => -1.0,
    };
    let sum: Complex64 = (1..n)
        .map(|k| (sign * s * (PI * k as f64 / n as f64).sin().ln()).exp())
        .sum();
    Ok(branch_factor(s) * sum)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZetaPoint {
    pub s: Complex64,
    pub zeta: Complex64,
}

/// Rectangle `[re.0, re.1] × [im.0, im.1]` sampled with spacing `step`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZetaGrid {
    pub re: (f64, f64),
    pub im: (f64, f64),
    pub step: f64,
}

impl ZetaGrid {
    /// The domain of the appendix figure.
    pub const FIGURE: ZetaGrid = ZetaGrid {
        re: (-1.5, 1.5),
        im: (0.0, 18.0),
        step: 0.05,
    };

    fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        (0..=n).map(|k| lo + step * k as f64).collect()
    }

    pub fn points(&self) -> Result<Vec<Complex64>> {
        if !(self.step > 0.0) || self.re.1 < self.re.0 || self.im.1 < self.im.0 {
            return Err(Error::Usage("zeta grid needs step > 0 and ordered ranges".into()));
        }
        let xs = Self::axis(self.re.0, self.re.1, self.step);
        let ys = Self::axis(self.im.0, self.im.1, self.step);
        Ok(ys
            .iter()
            .flat_map(|&y| xs.iter().map(move |&x| Complex64::new(x, y)))
            .collect())
    }
}

pub fn zeta_grid(
    grid: &ZetaGrid,
    f: impl Fn(Complex64) -> Result<Complex64> + Sync,
) -> Result<Vec<ZetaPoint>> {
    grid.points()?
        .into_par_iter()
        .map(|s| Ok(ZetaPoint { s, zeta: f(s)? }))
        .collect()
}

pub fn zeta_grid_csv(points: &[ZetaPoint]) -> String {
    let mut out = String::from("re_s,im_s,re_zeta,im_zeta,abs_zeta\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{:e},{:e},{:e}\n",
            p.s.re,
            p.s.im,
            p.zeta.re,
            p.zeta.im,
            p.zeta.norm()
        ));
    }
    out
}

/// Velocity components along `ker L` above this are rejected unless projected.
pub const WAVE_KERNEL_TOL: f64 = 1e-9;

/// `u'' = -L u` solved in the eigenbasis of `L`.
#[derive(Clone, Debug)]
pub struct WaveSolution {
    omega: Vec<f64>,
    basis: CMatrix,
    c0: CVector,
    c1: CVector,
}

impl WaveSolution {
    pub fn new(l: &GradedOperator, u0: &CVector, v0: &CVector, project_kernel: bool) -> Result<Self> {
        let n = l.size();
        if u0.len() != n || v0.len() != n {
            return Err(Error::Usage(format!("wave data must have length {n}")));
        }
        let (values, basis) = linalg::hermitian_eigen(l.entries());
        let c0 = basis.adjoint() * u0;
        let mut c1 = basis.adjoint() * v0;
        let omega: Vec<f64> = values
            .iter()
            .map(|&v| if v.abs() < KERNEL_TOL { 0.0 } else { v.max(0.0).sqrt() })
            .collect();
        let kernel: f64 = omega
            .iter()
            .zip(c1.iter())
            .filter(|(w, _)| **w == 0.0)
            .map(|(_, z)| z.norm_sqr())
            .sum::<f64>()
            .sqrt();
        if kernel > WAVE_KERNEL_TOL && !project_kernel {
            return Err(Error::Usage(format!(
                "initial velocity has kernel component {kernel:e}"
            )));
        }
        for (w, z) in omega.iter().zip(c1.iter_mut()) {
            if *w == 0.0 {
                *z = Complex64::new(0.0, 0.0);
            }
        }
        Ok(Self {
            omega,
            basis,
            c0,
            c1,
        })
    }

    pub fn position(&self, t: f64) -> CVector {
        let c = CVector::from_iterator(
            self.omega.len(),
            self.omega.iter().zip(self.c0.iter().zip(self.c1.iter())).map(|(&w, (&a, &v))| {
                if w == 0.0 {
                    a
                } else {
                    a * (w * t).cos() + v * ((w * t).sin() / w)
                }
            }),
        );
        &self.basis * c
    }

    pub fn velocity(&self, t: f64) -> CVector {
        let c = CVector::from_iterator(
            self.omega.len(),
            self.omega.iter().zip(self.c0.iter().zip(self.c1.iter())).map(|(&w, (&a, &v))| {
                -a * (w * (w * t).sin()) + v * (w * t).cos()
            }),
        );
        &self.basis * c
    }

    /// `‖u'‖² + <u, L u>` from the modal amplitudes.
    pub fn energy(&self, t: f64) -> f64 {
        let u = self.basis.adjoint() * self.position(t);
        let v = self.basis.adjoint() * self.velocity(t);
        self.omega
            .iter()
            .zip(u.iter().zip(v.iter()))
            .map(|(w, (a, b))| b.norm_sqr() + w * w * a.norm_sqr())
            .sum()
    }
}

pub fn wave_solve(
    l: &GradedOperator,
    u0: &CVector,
    v0: &CVector,
    t: f64,
    project_kernel: bool,
) -> Result<CVector> {
    Ok(WaveSolution::new(l, u0, v0, project_kernel)?.position(t))
}

#[derive(Clone, Debug)]
pub struct ConnesOptions {
    pub starts: usize,
    pub seed: u64,
    /// Run the grid search when the complex has at most this many vertices.
    pub brute_force_vertices: usize,
    /// Grid points per angle in the brute-force search.
    pub grid: usize,
}

impl Default for ConnesOptions {
    fn default() -> Self {
        Self {
            starts: 20,
            seed: 0,
            brute_force_vertices: 4,
            grid: 360,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConnesDistance {
    pub distance: f64,
    pub local_search: f64,
    pub brute_force: Option<f64>,
    /// Vertex function attaining `distance`, scaled to `‖[C, f]‖ = 1`.
    pub witness: Vec<f64>,
}

/// Real vertex functions acting on all simplices by the mean of their vertex values.
struct Commutator {
    c: CMatrix,
    ext: Vec<Vec<(usize, f64)>>,
    x: usize,
    y: usize,
}

impl Commutator {
    fn extend(&self, u: &[f64]) -> Vec<f64> {
        self.ext
            .iter()
            .map(|terms| terms.iter().map(|&(k, w)| w * u[k]).sum())
            .collect()
    }

    fn norm(&self, u: &[f64]) -> f64 {
        let f = self.extend(u);
        let m = CMatrix::from_fn(self.c.nrows(), self.c.ncols(), |i, j| self.c[(i, j)] * (f[j] - f[i]));
        linalg::operator_norm(&m)
    }

    fn ratio(&self, u: &[f64]) -> f64 {
        let gap = u[self.x] - u[self.y];
        let n = self.norm(u);
        if n == 0.0 {
            if gap.abs() > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        } else {
            gap / n
        }
    }

    /// Orthonormal basis of the vertex functions `u` with `[C, û] != 0`,
    /// and whether the complement separates `x` from `y`.
    fn effective_basis(&self, nv: usize) -> (Vec<Vec<f64>>, bool) {
        let n = self.c.nrows();
        let mut a = nalgebra::DMatrix::<f64>::zeros(2 * n * n, nv);
        for k in 0..nv {
            let mut e = vec![0.0; nv];
            e[k] = 1.0;
            let f = self.extend(&e);
            for i in 0..n {
                for j in 0..n {
                    let z = self.c[(i, j)] * (f[j] - f[i]);
                    a[(i * n + j, k)] = z.re;
                    a[(n * n + i * n + j, k)] = z.im;
                }
            }
        }
        let svd = (a.transpose() * &a).symmetric_eigen();
        let top = svd.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let mut live = Vec::new();
        let mut separates = false;
        for (k, &ev) in svd.eigenvalues.iter().enumerate() {
            let v: Vec<f64> = svd.eigenvectors.column(k).iter().copied().collect();
            if top > 0.0 && ev > 1e-12 * top {
                live.push(v);
            } else if (v[self.x] - v[self.y]).abs() > 1e-9 {
                separates = true;
            }
        }
        (live, separates)
    }
}

struct NegRatio<'a> {
    comm: &'a Commutator,
    basis: &'a [Vec<f64>],
}

impl NegRatio<'_> {
    fn lift(&self, w: &[f64]) -> Vec<f64> {
        let nv = self.basis[0].len();
        let mut u = vec![0.0; nv];
        for (c, b) in w.iter().zip(self.basis) {
            for (ui, bi) in u.iter_mut().zip(b) {
                *ui += c * bi;
            }
        }
        u
    }
}

impl CostFunction for NegRatio<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, w: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        let r = self.comm.ratio(&self.lift(w));
        Ok(if r.is_finite() { -r } else { 0.0 })
    }
}

fn nelder_mead(problem: NegRatio<'_>, start: Vec<f64>) -> Result<(f64, Vec<f64>)> {
    let dim = start.len();
    let mut simplex = vec![start.clone()];
    for i in 0..dim {
        let mut v = start.clone();
        v[i] += 0.5;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(1e-13)
        .map_err(|e| Error::Diagnostic(e.to_string()))?;
    let res = Executor::new(problem, solver)
        .configure(|s| s.max_iters(4000))
        .run()
        .map_err(|e| Error::Diagnostic(e.to_string()))?;
    let best = res.state().get_best_param().cloned().unwrap_or(start);
    Ok((-res.state().get_best_cost(), best))
}

fn sphere_grid(dim: usize, n: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..n)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / n as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => {
            let m = n / 2;
            (0..=m)
                .flat_map(|i| {
                    let th = PI * i as f64 / m as f64;
                    (0..n).map(move |j| {
                        let ph = 2.0 * PI * j as f64 / n as f64;
                        vec![th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]
                    })
                })
                .collect()
        }
        _ => Vec::new(),
    }
}

/// `sup f(x) - f(y)` over real vertex functions with `‖[C, f̂]‖ <= 1`.
pub fn connes_distance(c: &GradedOperator, complex: &OrientedComplex, x: u64, y: u64) -> Result<f64> {
    Ok(connes_distance_with(c, complex, x, y, &ConnesOptions::default())?.distance)
}

pub fn connes_distance_with(
    c: &GradedOperator,
    complex: &OrientedComplex,
    x: u64,
    y: u64,
    opts: &ConnesOptions,
) -> Result<ConnesDistance> {
    let vx = complex
        .vertex_index(x)
        .ok_or_else(|| Error::Usage(format!("unknown vertex {x}")))?;
    let vy = complex
        .vertex_index(y)
        .ok_or_else(|| Error::Usage(format!("unknown vertex {y}")))?;
    if c.size() != complex.total_dim() {
        return Err(Error::Usage("operator does not match the complex".into()));
    }
    let nv = complex.f_vector()[0];
    let mut empty = ConnesDistance {
        distance: 0.0,
        local_search: 0.0,
        brute_force: None,
        witness: vec![0.0; nv],
    };
    if vx == vy {
        return Ok(empty);
    }
    let ext = complex
        .simplices()
        .iter()
        .map(|s| {
            let w = 1.0 / s.vertices.len() as f64;
            s.vertices
                .iter()
                .map(|v| (complex.vertex_index(*v).expect("vertex of complex"), w))
                .collect()
        })
        .collect();
    let comm = Commutator {
        c: c.entries().clone(),
        ext,
        x: vx,
        y: vy,
    };
    let (basis, separates) = comm.effective_basis(nv);
    if separates || basis.is_empty() {
        empty.distance = f64::INFINITY;
        empty.local_search = f64::INFINITY;
        return Ok(empty);
    }
    let dim = basis.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let starts: Vec<Vec<f64>> = (0..opts.starts.max(1))
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let runs: Vec<(f64, Vec<f64>)> = starts
        .into_par_iter()
        .map(|w| nelder_mead(NegRatio { comm: &comm, basis: &basis }, w))
        .collect::<Result<_>>()?;
    let (local, mut best_w) = runs
        .into_iter()
        .fold((f64::NEG_INFINITY, Vec::new()), |a, b| if b.0 > a.0 { b } else { a });
    let lift = |w: &[f64]| NegRatio { comm: &comm, basis: &basis }.lift(w);

    let brute = (nv <= opts.brute_force_vertices && dim <= 3).then(|| {
        sphere_grid(dim, opts.grid)
            .into_par_iter()
            .map(|w| (comm.ratio(&lift(&w)), w))
            .reduce(|| (f64::NEG_INFINITY, Vec::new()), |a, b| if b.0 > a.0 { b } else { a })
    });
    let brute = match brute {
        Some((value, w)) => {
            let (polished, pw) = nelder_mead(NegRatio { comm: &comm, basis: &basis }, w.clone())?;
            Some(if polished > value { (polished, pw) } else { (value, w) })
        }
        None => None,
    };
    let mut distance = local;
    if let Some((value, w)) = &brute {
        if *value > distance {
            distance = *value;
            best_w = w.clone();
        }
    }
    let mut witness = lift(&best_w);
    let scale = comm.norm(&witness);
    let shift = witness[vy];
    for v in &mut witness {
        *v = (*v - shift) / scale;
    }
    Ok(ConnesDistance {
        distance,
        local_search: local,
        brute_force: brute.map(|b| b.0),
        witness,
    })
}

/// Profile of `tr M(t)` along a forward run.
#[derive(Clone, Debug, Serialize)]
pub struct InflationReport {
    pub times: Vec<f64>,
    pub trace_m: Vec<f64>,
    /// Central differences of `tr M`, negated.
    pub neg_dtr_m: Vec<f64>,
    /// `4 tr(b (dd* - d*d))` at each snapshot.
    pub neg_dtr_m_exact: Vec<f64>,
    /// Maximum of `-d/dt tr M`.
    pub bump_time: f64,
    pub bump_value: f64,
    /// Maximum of `-d/dt sqrt(tr M)`.
    pub sqrt_bump_time: f64,
    pub sqrt_bump_value: f64,
    pub tail: Option<LogLinearFit>,
    /// Most negative value of the exact derivative.
    pub min_derivative: f64,
    pub initial_derivative: f64,
    pub final_derivative: f64,
}

impl InflationReport {
    /// Derivative `>= -1e-9` everywhere and below `1e-6` in size at both ends.
    pub fn passed(&self) -> bool {
        self.min_derivative >= -diagnostics::POSITIVITY_TOL
            && self.initial_derivative.abs() < 1e-6
            && self.final_derivative.abs() < 1e-6
    }
}

/// Vertex of the parabola through the sample maximum and its neighbours.
fn refine_peak(ts: &[f64], ys: &[f64]) -> (f64, f64) {
    let k = ys
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap_or(0);
    if k == 0 || k + 1 >= ys.len() {
        return (ts[k], ys[k]);
    }
    let (t0, t1, t2) = (ts[k - 1], ts[k], ts[k + 1]);
    let (y0, y1, y2) = (ys[k - 1], ys[k], ys[k + 1]);
    let d01 = (y1 - y0) / (t1 - t0);
    let d12 = (y2 - y1) / (t2 - t1);
    let a = (d12 - d01) / (t2 - t0);
    if a >= 0.0 {
        return (t1, y1);
    }
    let b = d01 - a * (t0 + t1);
    let t = -b / (2.0 * a);
    let y = y1 + (t - t1) * (d01 + a * (t - t0));
    (t, y)
}

/// Tail fit needs this much time past the bump.
pub const TAIL_SPAN: f64 = 2.0;

pub fn inflation_report(traj: &Trajectory) -> Result<InflationReport> {
    let times = traj.times();
    if times.len() < 3 || times.iter().any(|&t| t < 0.0) {
        return Err(Error::Usage("inflation report needs a forward run with 3+ snapshots".into()));
    }
    let trace_m: Vec<f64> = traj.snapshots.iter().map(|s| s.kinetic().trace().re).collect();
    let neg_dtr_m: Vec<f64> = diagnostics::finite_derivative(&times, &trace_m)
        .into_iter()
        .map(|v| -v)
        .collect();
    let exact: Vec<f64> = traj.snapshots.iter().map(diagnostics::neg_dtr_m).collect();
    let sqrt_rate: Vec<f64> = exact
        .iter()
        .zip(&trace_m)
        .map(|(d, m)| if *m > 0.0 { d / (2.0 * m.sqrt()) } else { 0.0 })
        .collect();
    let (bump_time, bump_value) = refine_peak(&times, &exact);
    let (sqrt_bump_time, sqrt_bump_value) = refine_peak(&times, &sqrt_rate);
    let t_last = *times.last().expect("nonempty");
    let tail = if t_last - bump_time >= TAIL_SPAN {
        let (xs, ys): (Vec<f64>, Vec<f64>) = times
            .iter()
            .zip(&trace_m)
            .filter(|(t, _)| **t >= bump_time + TAIL_SPAN)
            .map(|(t, m)| (*t, *m))
            .unzip();
        diagnostics::log_linear_fit(&xs, &ys)
    } else {
        None
    };
    Ok(InflationReport {
        min_derivative: exact.iter().cloned().fold(f64::INFINITY, f64::min),
        initial_derivative: exact[0],
        final_derivative: *exact.last().expect("nonempty"),
        times,
        trace_m,
        neg_dtr_m,
        neg_dtr_m_exact: exact,
        bump_time,
        bump_value,
        sqrt_bump_time,
        sqrt_bump_value,
        tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{build_complex, Graph};
    use crate::operators;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn zeta_small_cases() {
        let k2 = build_complex(&Graph::complete(2)).unwrap();
        let z = ZetaSpec::of_operator(&operators::dirac(&k2, &[]).unwrap());
        assert_eq!(z.eigenvalues().len(), 1);
        assert!((dirac_zeta(&z, c(2.0)).unwrap() - c(1.0)).norm() < 1e-12);
        assert!((dirac_zeta(&z, c(0.0)).unwrap() - c(2.0)).norm() < 1e-12);
        assert!(dirac_zeta(&ZetaSpec::new(vec![]).unwrap(), c(1.0)).is_err());
        assert!(ZetaSpec::new(vec![1.0, -2.0]).is_err());
    }

    #[test]
    fn circle_zeta_printed_values() {
        let three = circle_graph_zeta(3, c(2.0), CircleExponent::Printed).unwrap();
        assert!((three - c(3.0)).norm() < 1e-12);
        let four = circle_graph_zeta(4, c(0.0), CircleExponent::Printed).unwrap();
        assert!((four - c(6.0)).norm() < 1e-12);
        assert!(circle_graph_zeta(2, c(1.0), CircleExponent::Printed).is_err());
    }

    #[test]
    fn grid_covers_figure_domain() {
        let pts = ZetaGrid::FIGURE.points().unwrap();
        assert_eq!(pts.len(), 61 * 361);
        assert_eq!(pts[0], Complex64::new(-1.5, 0.0));
        assert!((pts.last().unwrap() - Complex64::new(1.5, 18.0)).norm() < 1e-9);
        let csv = zeta_grid_csv(&[ZetaPoint { s: c(1.0), zeta: c(2.0) }]);
        assert!(csv.starts_with("re_s,im_s,re_zeta,im_zeta,abs_zeta\n1,0,"));
    }

    #[test]
    fn wave_single_mode_and_kernel_flag() {
        let k2 = build_complex(&Graph::complete(2)).unwrap();
        let l = operators::laplacian(&operators::dirac(&k2, &[]).unwrap());
        let u0 = CVector::from_vec(vec![c(0.0), c(0.0), c(1.0)]);
        let zero = CVector::zeros(3);
        let u = wave_solve(&l, &u0, &zero, 0.7, false).unwrap();
        assert!((&u - &u0 * c((2f64.sqrt() * 0.7).cos())).norm() < 1e-12);
        let drift = CVector::from_vec(vec![c(1.0), c(1.0), c(0.0)]);
        assert!(wave_solve(&l, &u0, &drift, 1.0, false).is_err());
        let u = wave_solve(&l, &u0, &drift, 1.0, true).unwrap();
        assert!((u[0] - u[1]).norm() < 1e-12);
        assert_eq!(wave_solve(&l, &u0, &zero, 0.0, false).unwrap(), u0);
    }

    #[test]
    fn connes_k2_and_isolated_vertices() {
        let k2 = build_complex(&Graph::complete(2)).unwrap();
        let d = operators::dirac(&k2, &[]).unwrap();
        let r = connes_distance_with(&d, &k2, 1, 2, &ConnesOptions::default()).unwrap();
        assert!((r.distance - 2f64.sqrt()).abs() < 1e-6, "{r:?}");
        assert!((r.brute_force.unwrap() - 2f64.sqrt()).abs() < 1e-9);
        assert_eq!(connes_distance(&d, &k2, 1, 1).unwrap(), 0.0);
        assert!(matches!(connes_distance(&d, &k2, 1, 9), Err(Error::Usage(_))));

        let two = build_complex(&Graph::new([1, 2], []).unwrap()).unwrap();
        let d = operators::dirac(&two, &[]).unwrap();
        assert_eq!(connes_distance(&d, &two, 1, 2).unwrap(), f64::INFINITY);
    }

    #[test]
    fn parabola_vertex_is_exact_for_quadratics() {
        let ts = [0.0, 0.1, 0.2, 0.3];
        let ys: Vec<f64> = ts.iter().map(|t| 1.0 - (t - 0.17f64).powi(2)).collect();
        let (t, y) = refine_peak(&ts, &ys);
        assert!((t - 0.17).abs() < 1e-12 && (y - 1.0).abs() < 1e-12);
    }
}
