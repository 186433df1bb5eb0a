//! Quantitative checks of the structural properties of a deformation run.

use std::fmt::Write as _;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::complex::OrientedComplex;
use crate::error::{Error, Result};
use crate::flow::{self, EvolveOptions, FlowConfig, FlowState, Trajectory, Transport};
use crate::linalg::{self, CMatrix, CVector};
use crate::operators::{self, GradedOperator, KERNEL_TOL};

/// Allowed violation of a monotone series, per integration step.
pub const MONOTONE_SLACK: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = 1e-9;
pub const STRUCTURE_TOL: f64 = 1e-9;
pub const INVARIANT_TOL: f64 = 1e-8;
pub const SUPERTRACE_TOL: f64 = 1e-6;
pub const PLANE_TOL: f64 = 1e-7;
pub const COCYCLE_TOL: f64 = 1e-7;
pub const RATIO_TOL: f64 = 1e-4;
pub const PATH_TOL: f64 = 1e-5;
pub const FIT_R2: f64 = 0.99;
/// Window of the log-linear angle fit.
pub const FIT_WINDOW: (f64, f64) = (2.0, 8.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Skipped => "skipped",
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    /// The property being measured.
    pub anchor: String,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, residual: f64, tolerance: f64, anchor: &str) -> Self {
        Self {
            name: name.into(),
            residual,
            tolerance,
            verdict: if residual <= tolerance {
                Verdict::Pass
            } else {
                Verdict::Fail
            },
            anchor: anchor.into(),
            detail: String::new(),
        }
    }

    pub fn skipped(name: impl Into<String>, tolerance: f64, anchor: &str, why: &str) -> Self {
        Self {
            name: name.into(),
            residual: 0.0,
            tolerance,
            verdict: Verdict::Skipped,
            anchor: anchor.into(),
            detail: why.into(),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict != Verdict::Fail
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct DiagnosticsReport {
    pub checks: Vec<Check>,
    pub times: Vec<f64>,
    pub series: Vec<Series>,
}

impl DiagnosticsReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_times(times: Vec<f64>) -> Self {
        Self {
            times,
            ..Self::default()
        }
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn add_series(&mut self, name: &str, values: Vec<f64>) {
        if self.series.iter().all(|s| s.name != name) {
            self.series.push(Series {
                name: name.into(),
                values,
            });
        }
    }

    pub fn merge(&mut self, other: DiagnosticsReport) {
        if self.times.is_empty() {
            self.times = other.times;
        }
        self.checks.extend(other.checks);
        for s in other.series {
            self.add_series(&s.name, s.values);
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn series_values(&self, name: &str) -> Option<&[f64]> {
        self.series
            .iter()
            .find(|s| s.name == name)
            .map(|s| s.values.as_slice())
    }

    /// True when no check failed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.verdict == Verdict::Fail)
    }

    /// Folds per-snapshot reports into one, keeping the worst residual of each
    /// check name. A check is skipped only if it was skipped everywhere.
    pub fn worst_of(reports: impl IntoIterator<Item = DiagnosticsReport>) -> Self {
        let mut out = Self::new();
        for r in reports {
            for c in r.checks {
                match out.checks.iter_mut().find(|o| o.name == c.name) {
                    None => out.checks.push(c),
                    Some(o) => {
                        if o.verdict == Verdict::Skipped {
                            *o = c;
                        } else if c.verdict != Verdict::Skipped
                            && (c.residual > o.residual || c.residual.is_nan())
                        {
                            *o = c;
                        }
                    }
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Aligned human-readable table of the checks.
    pub fn to_text(&self) -> String {
        let headers = ["check", "residual", "tolerance", "verdict", "property"];
        let rows: Vec<[String; 5]> = self
            .checks
            .iter()
            .map(|c| {
                [
                    c.name.clone(),
                    format!("{:.3e}", c.residual),
                    format!("{:.1e}", c.tolerance),
                    c.verdict.to_string(),
                    if c.detail.is_empty() {
                        c.anchor.clone()
                    } else {
                        format!("{} ({})", c.anchor, c.detail)
                    },
                ]
            })
            .collect();
        let mut widths = headers.map(str::len);
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        let mut line = |cells: &[&str]| {
            let n = cells.len();
            for (k, (cell, w)) in cells.iter().zip(widths).enumerate() {
                if k + 1 == n {
                    out.push_str(cell);
                } else {
                    let _ = write!(out, "{cell:<w$}  ");
                }
            }
            out.push('\n');
        };
        line(&headers);
        for row in &rows {
            line(&row.each_ref().map(String::as_str));
        }
        let failed = self.failures().count();
        let _ = writeln!(
            out,
            "{} checks, {} failed, {} skipped",
            self.checks.len(),
            failed,
            self.checks
                .iter()
                .filter(|c| c.verdict == Verdict::Skipped)
                .count()
        );
        out
    }

    /// Series as CSV with header `t,<name>...`.
    pub fn series_csv(&self) -> String {
        let mut out = String::from("t");
        for s in &self.series {
            out.push(',');
            out.push_str(&s.name);
        }
        out.push('\n');
        for (k, t) in self.times.iter().enumerate() {
            let _ = write!(out, "{t}");
            for s in &self.series {
                match s.values.get(k) {
                    Some(v) => {
                        let _ = write!(out, ",{v}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

fn fold_max(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |acc, v| {
        if v.is_nan() || acc.is_nan() {
            f64::NAN
        } else {
            acc.max(v)
        }
    })
}

fn vector_norm(v: &CVector) -> f64 {
    v.norm()
}

/// Least-squares line through `(x, ln y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LogLinearFit {
    pub rate: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Fits `ln y = intercept + rate * x` over the points with `y > 0`.
pub fn log_linear_fit(xs: &[f64], ys: &[f64]) -> Option<LogLinearFit> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(_, &y)| y > 0.0 && y.is_finite())
        .map(|(&x, &y)| (x, y.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let rate = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LogLinearFit {
        rate,
        intercept: my - rate * mx,
        r2,
    })
}

/// `-d/dt tr(M)` evaluated in closed form, `4 tr(b (dd^* - d^*d))`.
pub fn neg_dtr_m(s: &FlowState) -> f64 {
    let r = s.raising_square();
    let q = s.lowering_square();
    4.0 * linalg::trace(&(s.b.entries() * (r.entries() - q.entries()))).re
}

/// Central finite differences on a possibly non-uniform grid.
pub fn finite_derivative(ts: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = ts.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|k| {
            let (a, b) = match k {
                0 => (0, 1),
                k if k == n - 1 => (n - 2, n - 1),
                k => (k - 1, k + 1),
            };
            (ys[b] - ys[a]) / (ts[b] - ts[a])
        })
        .collect()
}

fn require_nonnegative_times(traj: &Trajectory, what: &str) -> Result<()> {
    if traj.snapshots.iter().any(|s| s.t < 0.0) {
        return Err(Error::Usage(format!("{what} needs a trajectory with t >= 0")));
    }
    Ok(())
}

/// `tr(b^2)` nondecreasing and `tr(M)` nonincreasing along the run.
pub fn monotonicity_report(traj: &Trajectory) -> Result<DiagnosticsReport> {
    require_nonnegative_times(traj, "monotonicity")?;
    let times = traj.times();
    let tr_b2: Vec<f64> = traj
        .snapshots
        .iter()
        .map(|s| s.potential().trace().re)
        .collect();
    let tr_m: Vec<f64> = traj.snapshots.iter().map(|s| s.kinetic().trace().re).collect();
    let steps = &traj.snapshot_steps;
    let per_step = |series: &[f64], sign: f64| {
        fold_max((0..series.len().saturating_sub(1)).map(|k| {
            let drop = sign * (series[k] - series[k + 1]);
            let n = (steps[k + 1] - steps[k]).max(1) as f64;
            drop.max(0.0) / n
        }))
    };
    let mut r = DiagnosticsReport::with_times(times.clone());
    r.push(Check::new(
        "monotonicity.tr_b2",
        per_step(&tr_b2, 1.0),
        MONOTONE_SLACK,
        "tr(b^2) nondecreasing",
    ));
    r.push(Check::new(
        "monotonicity.tr_M",
        per_step(&tr_m, -1.0),
        MONOTONE_SLACK,
        "tr(M) nonincreasing",
    ));
    let first = traj.first();
    let tr_l = first.laplacian().trace().re;
    if first.b.max_abs() == 0.0 {
        r.push(Check::new(
            "monotonicity.tr_M_initial",
            (tr_m[0] - tr_l).abs(),
            1e-12,
            "tr(M(0)) = tr(L)",
        ));
    }
    let neg_fd: Vec<f64> = finite_derivative(&times, &tr_m)
        .into_iter()
        .map(|v| -v)
        .collect();
    let neg_exact: Vec<f64> = traj.snapshots.iter().map(neg_dtr_m).collect();
    r.add_series("tr_M", tr_m);
    r.add_series("tr_b2", tr_b2);
    r.add_series("neg_dtr_M", neg_fd);
    r.add_series("neg_dtr_M_exact", neg_exact);
    Ok(r)
}

/// `b dd^*` positive and `b d^*d` negative semidefinite, both real symmetric.
pub fn positivity_check(s: &FlowState) -> DiagnosticsReport {
    let names = [
        ("positivity.O_min_eig", "b dd* has no negative eigenvalues"),
        ("positivity.Q_max_eig", "b d*d has no positive eigenvalues"),
        ("positivity.O_symmetric", "b dd* symmetric"),
        ("positivity.Q_symmetric", "b d*d symmetric"),
        ("positivity.O_real", "b dd* real"),
        ("positivity.Q_real", "b d*d real"),
    ];
    let mut r = DiagnosticsReport::new();
    if s.t < 0.0 {
        for (n, a) in names {
            r.push(Check::skipped(n, POSITIVITY_TOL, a, "only asserted for t >= 0"));
        }
        return r;
    }
    let o = s.b.entries() * s.raising_square().entries();
    let q = s.b.entries() * s.lowering_square().entries();
    let o_ev = linalg::hermitian_eigenvalues(&o);
    let q_ev = linalg::hermitian_eigenvalues(&q);
    let residuals = [
        o_ev.first().map_or(0.0, |&m| (-m).max(0.0)),
        q_ev.last().map_or(0.0, |&m| m.max(0.0)),
        linalg::hermitian_residual(&o),
        linalg::hermitian_residual(&q),
        linalg::imag_residual(&o),
        linalg::imag_residual(&q),
    ];
    for ((n, a), res) in names.into_iter().zip(residuals) {
        r.push(Check::new(n, res, POSITIVITY_TOL, a));
    }
    r
}

/// [`positivity_check`] at every snapshot, worst case kept.
pub fn positivity_along(traj: &Trajectory) -> DiagnosticsReport {
    DiagnosticsReport::worst_of(traj.snapshots.par_iter().map(positivity_check).collect::<Vec<_>>())
}

fn matrix_power(m: &CMatrix, k: usize) -> CMatrix {
    let n = m.nrows();
    (0..k).fold(CMatrix::identity(n, n), |acc, _| acc * m)
}

/// `Re str(U) = chi` on every snapshot, plus `str(B^k)` and (for real flows) `Im tr U`.
pub fn mckean_singer_check(traj: &Trajectory) -> Result<DiagnosticsReport> {
    let first = traj.first();
    if first.unitary.is_none() {
        return Err(Error::Usage("trajectory carries no unitary".into()));
    }
    let chi = operators::supertrace(&GradedOperator::identity(first.grading().clone())).re;
    let mut str_re = Vec::new();
    let mut str_im = Vec::new();
    let mut im_tr: f64 = 0.0;
    let mut str_b = [0.0f64; 4];
    for s in &traj.snapshots {
        let u = s
            .unitary
            .as_ref()
            .ok_or_else(|| Error::Usage("snapshot carries no unitary".into()))?;
        let st = operators::supertrace(u);
        str_re.push(st.re);
        str_im.push(st.im);
        im_tr = im_tr.max(u.trace().im.abs());
        let b = s.lax();
        for (k, worst) in str_b.iter_mut().enumerate() {
            let p = GradedOperator::new(matrix_power(b.entries(), k + 1), b.grading().clone())?;
            *worst = worst.max(operators::supertrace(&p).re.abs());
        }
    }
    let mut r = DiagnosticsReport::with_times(traj.times());
    r.push(Check::new(
        "mckean_singer.re_str_U",
        fold_max(str_re.iter().map(|v| (v - chi).abs())),
        SUPERTRACE_TOL,
        "Re str(U(t)) = chi(G)",
    ));
    if first.beta == 0.0 {
        r.push(Check::new(
            "mckean_singer.im_tr_U",
            im_tr,
            SUPERTRACE_TOL,
            "tr(U(t)) stays real",
        ));
    } else {
        r.push(Check::skipped(
            "mckean_singer.im_tr_U",
            SUPERTRACE_TOL,
            "tr(U(t)) stays real",
            "unconstrained for beta != 0",
        ));
    }
    for (k, worst) in str_b.iter().enumerate() {
        r.push(Check::new(
            format!("mckean_singer.str_B{}", k + 1),
            *worst,
            SUPERTRACE_TOL,
            "Re str(B^k) = 0",
        ));
    }
    r.add_series("str_U_re", str_re);
    r.add_series("str_U_im", str_im);
    Ok(r)
}

/// An eigenvector of `dd^*` (exact) or `d^*d` (coexact) with positive
/// eigenvalue, supported in a single degree.
#[derive(Clone, Debug)]
pub struct PureEigenvector {
    pub degree: usize,
    pub lambda: f64,
    pub exact: bool,
    pub vector: CVector,
}

/// All pure eigenvectors of the initial state, degree by degree.
pub fn pure_eigenvectors(s: &FlowState) -> Vec<PureEigenvector> {
    let g = s.grading();
    let mut out = Vec::new();
    for (op, exact) in [(s.raising_square(), true), (s.lowering_square(), false)] {
        for p in 0..g.num_degrees() {
            let range = g.range(p);
            let (vals, vecs) = linalg::hermitian_eigen(&op.block(p, p));
            for (k, &lambda) in vals.iter().enumerate() {
                if lambda > KERNEL_TOL {
                    let mut v = CVector::zeros(g.size());
                    for (i, gi) in range.clone().enumerate() {
                        v[gi] = vecs[(i, k)];
                    }
                    out.push(PureEigenvector {
                        degree: p,
                        lambda,
                        exact,
                        vector: v,
                    });
                }
            }
        }
    }
    out
}

/// Orthonormal basis of the kernel of `L` in each degree.
pub fn harmonic_basis(s: &FlowState) -> Vec<(usize, CVector)> {
    let g = s.grading();
    let l = s.laplacian();
    let mut out = Vec::new();
    for p in 0..g.num_degrees() {
        let range = g.range(p);
        let (vals, vecs) = linalg::hermitian_eigen(&l.block(p, p));
        for (k, &lambda) in vals.iter().enumerate() {
            if lambda.abs() < KERNEL_TOL {
                let mut v = CVector::zeros(g.size());
                for (i, gi) in range.clone().enumerate() {
                    v[gi] = vecs[(i, k)];
                }
                out.push((p, v));
            }
        }
    }
    out
}

fn rayleigh(l: &CMatrix, f: &CVector) -> f64 {
    f.dotc(&(l * f)).re
}

fn eigen_residual(m: &CMatrix, f: &CVector, lambda: f64) -> f64 {
    vector_norm(&(m * f - f * Complex64::new(lambda, 0.0)))
}

fn validate_unit(f: &CVector, n: usize) -> Result<()> {
    if f.len() != n {
        return Err(Error::Usage(format!(
            "vector has length {} but the complex has {n} simplices",
            f.len()
        )));
    }
    if (vector_norm(f) - 1.0).abs() > 1e-8 {
        return Err(Error::Usage("vector must have unit norm".into()));
    }
    Ok(())
}

fn validate_eigenvector(s0: &FlowState, f: &CVector) -> Result<f64> {
    validate_unit(f, s0.grading().size())?;
    let l = s0.laplacian();
    let lambda = rayleigh(l.entries(), f);
    if eigen_residual(l.entries(), f, lambda) > 1e-8 * lambda.abs().max(1.0) {
        return Err(Error::Usage("vector is not an eigenvector of L".into()));
    }
    if lambda.abs() < KERNEL_TOL {
        return Err(Error::Usage(
            "kernel vectors have no McKean-Singer plane".into(),
        ));
    }
    Ok(lambda)
}

fn orthonormal_pair(f: &CVector, g: &CVector) -> CMatrix {
    let e1 = f.normalize();
    let g_perp = g - &e1 * e1.dotc(g);
    let e2 = g_perp.normalize();
    CMatrix::from_columns(&[e1, e2])
}

/// `D(t) f` stays in `span{f, D(0) f}` and remains an `L`-eigenvector.
///
/// `f` must be a pure eigenvector (see [`PureEigenvector`]); mixtures of
/// exact and coexact parts or of several degrees are rejected.
pub fn plane_invariance(f: &CVector, traj: &Trajectory) -> Result<DiagnosticsReport> {
    let s0 = traj.first();
    let lambda = validate_eigenvector(s0, f)?;
    let g = s0.grading();
    let tol = 1e-8 * lambda.max(1.0);
    let exact = eigen_residual(s0.raising_square().entries(), f, lambda) < tol;
    let coexact = eigen_residual(s0.lowering_square().entries(), f, lambda) < tol;
    let support: Vec<usize> = (0..g.num_degrees())
        .filter(|&p| g.range(p).any(|i| f[i].norm() > 1e-9))
        .collect();
    if !(exact || coexact) || support.len() != 1 {
        return Err(Error::Usage(
            "plane invariance needs an exact or coexact eigenvector supported in one degree".into(),
        ));
    }
    let d0f = s0.dirac().entries() * f;
    let q = orthonormal_pair(f, &d0f);
    let qs = q.adjoint();
    let mut dist: f64 = 0.0;
    let mut partner: f64 = 0.0;
    let mut lax_partner: f64 = 0.0;
    let mut det_r: f64 = 0.0;
    let mut det_s: f64 = 0.0;
    let mut tr_r: f64 = 0.0;
    let mut tr_s: f64 = 0.0;
    for s in &traj.snapshots {
        let dm = s.dirac();
        let l = dm.compose(&dm);
        let v = dm.entries() * f;
        dist = dist.max(vector_norm(&(&v - &q * (&qs * &v))));
        partner = partner.max(eigen_residual(l.entries(), &v, lambda));
        let w = s.lax().entries() * f;
        lax_partner = lax_partner.max(eigen_residual(l.entries(), &w, lambda));
        let b_plane = linalg::operator_norm(&(&qs * s.b.entries() * &q));
        for (op, det_w, tr_w) in [
            (s.raising_square(), &mut det_r, &mut tr_r),
            (s.lowering_square(), &mut det_s, &mut tr_s),
        ] {
            let gram = &qs * (op.entries() * s.b.entries()) * &q;
            let det = gram[(0, 0)] * gram[(1, 1)] - gram[(0, 1)] * gram[(1, 0)];
            *det_w = det_w.max(det.norm());
            let scale = linalg::operator_norm(&(&qs * op.entries() * &q)) * b_plane;
            if scale > 1e-300 {
                let tr = (gram[(0, 0)] + gram[(1, 1)]).norm();
                *tr_w = tr_w.max((0.5 - tr / scale).max(0.0));
            }
        }
    }
    let mut r = DiagnosticsReport::new();
    let tag = format!("lambda={lambda:.6}");
    let rows = [
        ("plane.distance", dist, PLANE_TOL, "D(t)f stays in span{f, D(0)f}"),
        ("plane.superpartner", partner, INVARIANT_TOL, "D(t)f is an L-eigenvector"),
        ("plane.lax_partner", lax_partner, INVARIANT_TOL, "B(t)f is an L-eigenvector"),
        ("plane.Rb_det", det_r, INVARIANT_TOL, "Rb has a zero eigenvalue on the plane"),
        ("plane.Sb_det", det_s, INVARIANT_TOL, "Sb has a zero eigenvalue on the plane"),
        ("plane.Rb_trace", tr_r, POSITIVITY_TOL, "Rb has a nonzero eigenvalue on the plane"),
        ("plane.Sb_trace", tr_s, POSITIVITY_TOL, "Sb has a nonzero eigenvalue on the plane"),
    ];
    for (n, res, tolerance, a) in rows {
        r.push(Check::new(n, res, tolerance, a).with_detail(tag.clone()));
    }
    Ok(r)
}

/// Angle between `D(t) f` and the odd-degree subspace at every snapshot.
pub fn fermion_angle(f: &CVector, traj: &Trajectory) -> Result<Vec<f64>> {
    let s0 = traj.first();
    validate_eigenvector(s0, f)?;
    let g = s0.grading();
    let even_part = |v: &CVector| {
        (0..v.len())
            .filter(|&i| !g.is_odd(i))
            .map(|i| v[i].norm_sqr())
            .sum::<f64>()
            .sqrt()
    };
    if even_part(f) > 1e-9 {
        return Err(Error::Usage("vector must be supported on odd degrees".into()));
    }
    Ok(traj
        .snapshots
        .iter()
        .map(|s| {
            let v = s.dirac().entries() * f;
            let n = vector_norm(&v);
            if n == 0.0 {
                0.0
            } else {
                (even_part(&v) / n).clamp(0.0, 1.0).asin()
            }
        })
        .collect())
}

/// Checks on the fermion angle: starts at `pi/2`, decreases, decays exponentially.
pub fn fermion_angle_report(f: &CVector, traj: &Trajectory) -> Result<DiagnosticsReport> {
    let angles = fermion_angle(f, traj)?;
    let times = traj.times();
    let mut r = DiagnosticsReport::with_times(times.clone());
    r.push(Check::new(
        "fermion_angle.initial",
        (angles[0] - std::f64::consts::FRAC_PI_2).abs(),
        1e-9,
        "D(0)f is bosonic",
    ));
    r.push(Check::new(
        "fermion_angle.decreasing",
        fold_max(
            angles
                .windows(2)
                .filter(|w| w[0] > 1e-6)
                .map(|w| (w[1] - w[0]).max(0.0)),
        ),
        1e-9,
        "angle to the fermionic subspace decreases",
    ));
    let (lo, hi) = FIT_WINDOW;
    let window: Vec<(f64, f64)> = times
        .iter()
        .zip(&angles)
        .filter(|(t, _)| **t >= lo - 1e-12 && **t <= hi + 1e-12)
        .map(|(t, a)| (*t, *a))
        .collect();
    let covers = times.first().is_some_and(|&t| t <= lo) && times.last().is_some_and(|&t| t >= hi);
    let fit = covers
        .then(|| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = window.into_iter().unzip();
            log_linear_fit(&xs, &ys)
        })
        .flatten();
    match fit {
        Some(fit) => r.push(
            Check::new(
                "fermion_angle.log_linear_fit",
                1.0 - fit.r2,
                1.0 - FIT_R2,
                "angle decays exponentially",
            )
            .with_detail(format!("rate={:.6} r2={:.6}", fit.rate, fit.r2)),
        ),
        None => r.push(Check::skipped(
            "fermion_angle.log_linear_fit",
            1.0 - FIT_R2,
            "angle decays exponentially",
            "trajectory does not cover the fit window",
        )),
    }
    r.add_series("angle", angles);
    Ok(r)
}

/// `d = del + delbar` with `del = Re d`, `delbar = i Im d`, and all products vanishing.
pub fn dolbeault_check(s: &FlowState) -> DiagnosticsReport {
    let names = [
        ("dolbeault.del_squared", "del^2 = 0"),
        ("dolbeault.delbar_squared", "delbar^2 = 0"),
        ("dolbeault.del_delbar", "del delbar = 0"),
        ("dolbeault.delbar_del", "delbar del = 0"),
        ("dolbeault.split", "d = del + delbar"),
    ];
    let mut r = DiagnosticsReport::new();
    if s.beta == 0.0 {
        for (n, a) in names {
            r.push(Check::skipped(n, INVARIANT_TOL, a, "d is real for beta = 0"));
        }
        return r;
    }
    let d = s.d.entries();
    let del = d.map(|z| Complex64::new(z.re, 0.0));
    let delbar = d.map(|z| Complex64::new(0.0, z.im));
    let residuals = [
        linalg::max_abs(&(&del * &del)),
        linalg::max_abs(&(&delbar * &delbar)),
        linalg::max_abs(&(&del * &delbar)),
        linalg::max_abs(&(&delbar * &del)),
        linalg::max_abs(&(d - (&del + &delbar))),
    ];
    for ((n, a), res) in names.into_iter().zip(residuals) {
        r.push(Check::new(n, res, INVARIANT_TOL, a));
    }
    r
}

/// `b''` along the flow, from differentiating `b' = 2(dd^* - d^*d)`.
pub fn b_acceleration(s: &FlowState) -> CMatrix {
    let (d_dot, _) = flow::rhs(s);
    let d = s.d.entries();
    let dd = d_dot.entries();
    (dd * d.adjoint() + d * dd.adjoint() - dd.adjoint() * d - d.adjoint() * dd)
        * Complex64::new(2.0, 0.0)
}

/// Times (for `beta`) and matched times (for `beta = 0`) used in the ratio check.
pub const RATIO_SAMPLES: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// Compares the flows for `beta` and `0` at points of equal `tr(b^2)`:
/// the acceleration ratio `b''_beta / b''_0` against `1 + beta^2`, and the
/// distance between the two `b` curves.
pub fn beta_timechange_check(c: &OrientedComplex, beta: f64) -> Result<DiagnosticsReport> {
    let h = flow::DEFAULT_STEP;
    let t_last = RATIO_SAMPLES[RATIO_SAMPLES.len() - 1];
    let base = FlowState::initial(c, &[], 0.0, false)?;
    let reference = flow::evolve_with(
        &base,
        1.5 * t_last,
        &EvolveOptions {
            h,
            snapshot_every: 10,
            flow_poly: vec![1.0],
            project: true,
        },
        &[],
    )?;
    let tilted = FlowState::initial(c, &[], beta, false)?;
    let step_opts = EvolveOptions {
        h,
        ..EvolveOptions::default()
    };
    let tr_b2 = |s: &FlowState| s.potential().trace().re;
    let ref_tr: Vec<f64> = reference.snapshots.iter().map(tr_b2).collect();

    let mut ratio_res: f64 = 0.0;
    let mut path_res: f64 = 0.0;
    let mut ratios = Vec::new();
    let mut sample = tilted.clone();
    for &t in &RATIO_SAMPLES {
        sample = flow::advance(&sample, t - sample.t, &step_opts)?;
        let target = tr_b2(&sample);
        let j = ref_tr
            .iter()
            .position(|&v| v >= target)
            .ok_or_else(|| Error::Diagnostic(format!("tr(b^2) = {target} not reached")))?;
        if j == 0 || ref_tr[..=j].windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Diagnostic(format!(
                "tr(b^2) is not strictly increasing before t = {}",
                reference.snapshots[j].t
            )));
        }
        let left = &reference.snapshots[j - 1];
        let (mut lo, mut hi) = (0.0, reference.snapshots[j].t - left.t);
        let mut matched = left.clone();
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            matched = flow::advance(left, mid, &step_opts)?;
            if tr_b2(&matched) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-14 {
                break;
            }
        }
        path_res = path_res.max(linalg::max_abs(&(sample.b.entries() - matched.b.entries())));
        let acc_beta = b_acceleration(&sample);
        let acc_zero = b_acceleration(&matched);
        let scale = linalg::max_abs(&acc_zero);
        for (zb, z0) in acc_beta.iter().zip(acc_zero.iter()) {
            if z0.norm() >= 1e-3 * scale && scale > 0.0 {
                let ratio = zb / z0;
                ratios.push(ratio.re);
                ratio_res = ratio_res.max((ratio - Complex64::new(1.0 + beta * beta, 0.0)).norm());
            }
        }
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len().max(1) as f64;
    let mut r = DiagnosticsReport::new();
    r.push(
        Check::new(
            "beta_timechange.ratio",
            if ratios.is_empty() { f64::NAN } else { ratio_res },
            RATIO_TOL,
            "b''_beta / b''_0 = 1 + beta^2 at matched tr(b^2)",
        )
        .with_detail(format!("beta={beta} mean_ratio={mean:.8} expected={}", 1.0 + beta * beta)),
    );
    r.push(Check::new(
        "beta_timechange.path",
        path_res,
        PATH_TOL,
        "b moves along a beta-independent path",
    ));
    Ok(r)
}

/// Eigenspaces of the degree blocks of a block-diagonal `L`.
pub fn degree_eigenspaces(l: &GradedOperator) -> Vec<Vec<(f64, CMatrix)>> {
    let g = l.grading();
    (0..g.num_degrees())
        .map(|p| {
            let (vals, vecs) = linalg::hermitian_eigen(&l.block(p, p));
            let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
            for (k, &v) in vals.iter().enumerate() {
                match groups.last_mut() {
                    Some((first, idx)) if (v - *first).abs() < 1e-6 * first.abs().max(1.0) => {
                        idx.push(k)
                    }
                    _ => groups.push((v, vec![k])),
                }
            }
            groups
                .into_iter()
                .map(|(v, idx)| {
                    let basis =
                        CMatrix::from_fn(vecs.nrows(), idx.len(), |r, c| vecs[(r, idx[c])]);
                    (v, basis)
                })
                .collect()
        })
        .collect()
}

/// Relative singular-value cut inside one eigenspace block.
pub const RANK_RELATIVE_CUT: f64 = 1e-6;
/// Absolute floor, relative to `|d(0)|`, below which a singular value is roundoff.
pub const RANK_FLOOR: f64 = 1e-13;
/// No singular value may lie within this factor of the cut.
pub const RANK_GAP: f64 = 10.0;

fn block_rank(sv: &[f64], floor: f64) -> std::result::Result<usize, f64> {
    let top = sv.iter().copied().fold(0.0, f64::max);
    let cut = floor.max(RANK_RELATIVE_CUT * top);
    let mut rank = 0;
    for &s in sv {
        if s > cut / RANK_GAP && s < cut * RANK_GAP {
            return Err(s);
        }
        if s > cut {
            rank += 1;
        }
    }
    Ok(rank)
}

/// Betti numbers from the numerical rank of `d(t)`.
///
/// Since `d(t)` commutes with the constant `L`, the rank is taken separately
/// on each eigenspace of `L`, where all nonzero singular values of a block
/// share one scale.
pub fn betti_from_rank(
    s: &FlowState,
    spaces: &[Vec<(f64, CMatrix)>],
    floor: f64,
) -> Result<Vec<usize>> {
    let g = s.grading();
    let np = g.num_degrees();
    let mut ranks = vec![0usize; np];
    for p in 0..np.saturating_sub(1) {
        let block = s.d.block(p + 1, p);
        for (lambda, q) in &spaces[p] {
            let Some((_, q_up)) = spaces[p + 1]
                .iter()
                .find(|(mu, _)| (mu - lambda).abs() < 1e-6 * lambda.abs().max(1.0))
            else {
                continue;
            };
            let sub = q_up.adjoint() * &block * q;
            let sv = linalg::singular_values(&sub);
            ranks[p] += block_rank(&sv, floor).map_err(|sigma| {
                Error::Ambiguous(format!(
                    "t = {}: singular value {sigma:e} of d on degree {p}, eigenvalue {lambda:.6}, is within the rank gap",
                    s.t
                ))
            })?;
        }
    }
    (0..np)
        .map(|p| {
            let below = if p == 0 { 0 } else { ranks[p - 1] };
            g.block_size(p)
                .checked_sub(ranks[p] + below)
                .ok_or_else(|| {
                    Error::Ambiguous(format!(
                        "t = {}: ranks around degree {p} exceed the block size",
                        s.t
                    ))
                })
        })
        .collect()
}

/// Betti numbers preserved along the run, and transported cocycles,
/// coboundaries and harmonic forms keep their type.
pub fn cohomology_check(traj: &Trajectory) -> Result<DiagnosticsReport> {
    let s0 = traj.first();
    let l0 = s0.laplacian();
    let spaces = degree_eigenspaces(&l0);
    let reference = operators::betti_numbers(&l0)?;
    let floor = RANK_FLOOR * linalg::operator_norm(s0.d.entries()).max(1.0);
    let per_snapshot: Vec<Result<Vec<usize>>> = traj
        .snapshots
        .par_iter()
        .map(|s| betti_from_rank(s, &spaces, floor))
        .collect();
    let mut mismatch = 0usize;
    let mut first_bad = None;
    for (s, b) in traj.snapshots.iter().zip(per_snapshot) {
        let b = b?;
        let diff = b
            .iter()
            .zip(&reference)
            .map(|(x, y)| x.abs_diff(*y))
            .max()
            .unwrap_or(0);
        if diff > 0 && first_bad.is_none() {
            first_bad = Some((s.t, b.clone()));
        }
        mismatch = mismatch.max(diff);
    }
    let mut r = DiagnosticsReport::new();
    let mut check = Check::new(
        "cohomology.betti",
        mismatch as f64,
        0.0,
        "Betti numbers from rank d(t) stay constant",
    );
    check.detail = match first_bad {
        Some((t, b)) => format!("reference {reference:?}, {b:?} at t = {t}"),
        None => format!("{reference:?}"),
    };
    r.push(check);

    let harmonic: Vec<CVector> = harmonic_basis(s0).into_iter().map(|(_, v)| v).collect();
    let pure = pure_eigenvectors(s0);
    let exact: Vec<CVector> = pure.iter().filter(|p| p.exact).map(|p| p.vector.clone()).collect();
    let coexact: Vec<CVector> = pure.iter().filter(|p| !p.exact).map(|p| p.vector.clone()).collect();
    let d0 = s0.d.entries();
    let boundaries: Vec<CVector> = coexact.iter().map(|g| d0 * g).collect();

    let mut vectors = Vec::new();
    let mut kinds = Vec::new();
    let cocycles: Vec<&CVector> = harmonic.iter().chain(&exact).collect();
    for v in &cocycles {
        vectors.push((*v).clone());
        kinds.push(Transport::Cocycle);
    }
    for v in coexact.iter().chain(&boundaries) {
        vectors.push(v.clone());
        kinds.push(Transport::Cocycle);
    }
    for v in &harmonic {
        vectors.push(v.clone());
        kinds.push(Transport::Lax);
    }
    let moved = if vectors.is_empty() {
        Vec::new()
    } else {
        flow::transport_many(&vectors, traj, &kinds)?
    };
    let nc = cocycles.len();
    let ng = coexact.len();
    let mut cocycle_res: f64 = 0.0;
    let mut boundary_res: f64 = 0.0;
    let mut harmonic_res: f64 = 0.0;
    for (k, s) in traj.snapshots.iter().enumerate() {
        let d = s.d.entries();
        for path in &moved[..nc] {
            cocycle_res = cocycle_res.max(vector_norm(&(d * &path[k])));
        }
        for j in 0..ng {
            let g_t = &moved[nc + j][k];
            let f_t = &moved[nc + ng + j][k];
            boundary_res = boundary_res.max(vector_norm(&(f_t - d * g_t)));
        }
        let l = s.laplacian();
        for path in &moved[nc + 2 * ng..] {
            harmonic_res = harmonic_res.max(vector_norm(&(l.entries() * &path[k])));
        }
    }
    r.push(
        Check::new(
            "cohomology.cocycle_transport",
            cocycle_res,
            COCYCLE_TOL,
            "transported cocycles stay closed",
        )
        .with_detail(format!("{nc} vectors")),
    );
    r.push(
        Check::new(
            "cohomology.coboundary_transport",
            boundary_res,
            COCYCLE_TOL,
            "transported coboundaries stay exact",
        )
        .with_detail(format!("{ng} vectors")),
    );
    r.push(
        Check::new(
            "cohomology.harmonic_transport",
            harmonic_res,
            INVARIANT_TOL,
            "harmonic forms moved by B stay harmonic",
        )
        .with_detail(format!("{} vectors", harmonic.len())),
    );
    Ok(r)
}

/// Spectrum of `D(t)` and the operator `L(t)` stay fixed.
pub fn isospectral_check(traj: &Trajectory) -> DiagnosticsReport {
    let s0 = traj.first();
    let spec0 = s0.dirac().spectrum();
    let l0 = s0.laplacian();
    let drift: Vec<f64> = traj
        .snapshots
        .par_iter()
        .map(|s| linalg::spectrum_distance(&spec0, &s.dirac().spectrum()))
        .collect();
    let l_drift = fold_max(
        traj.snapshots
            .iter()
            .map(|s| linalg::max_abs(&(s.laplacian().entries() - l0.entries()))),
    );
    let mut r = DiagnosticsReport::with_times(traj.times());
    r.push(Check::new(
        "isospectral.spectrum_drift",
        fold_max(drift.iter().copied()),
        INVARIANT_TOL,
        "D(t) isospectral to D(0)",
    ));
    r.push(Check::new(
        "isospectral.laplacian_drift",
        l_drift,
        INVARIANT_TOL,
        "L(t) = L(0)",
    ));
    r.add_series("spectrum_drift", drift);
    r
}

/// Anticommutators, nilpotency, realness and the split/dense cross-check.
pub fn structure_check(traj: &Trajectory) -> DiagnosticsReport {
    let real_flow = traj.first().beta == 0.0;
    DiagnosticsReport::worst_of(
        traj.snapshots
            .par_iter()
            .map(|s| {
                let d = s.d.entries();
                let b = s.b.entries();
                let ds = d.adjoint();
                let mut r = DiagnosticsReport::new();
                r.push(Check::new(
                    "structure.anticommutator_d_b",
                    linalg::max_abs(&linalg::anticommutator(d, b)),
                    STRUCTURE_TOL,
                    "{d, b} = 0",
                ));
                r.push(Check::new(
                    "structure.anticommutator_dstar_b",
                    linalg::max_abs(&linalg::anticommutator(&ds, b)),
                    STRUCTURE_TOL,
                    "{d*, b} = 0",
                ));
                r.push(Check::new(
                    "structure.nilpotent",
                    linalg::max_abs(&(d * d)),
                    STRUCTURE_TOL,
                    "d^2 = 0",
                ));
                r.push(Check::new(
                    "structure.d_raising",
                    linalg::max_abs(&(d - s.d.degree_part(1).entries())),
                    STRUCTURE_TOL,
                    "d raises degree by one",
                ));
                r.push(Check::new(
                    "structure.b_block_diagonal",
                    linalg::max_abs(&(b - s.b.degree_part(0).entries())),
                    STRUCTURE_TOL,
                    "b is block diagonal",
                ));
                r.push(Check::new(
                    "structure.b_real_symmetric",
                    linalg::hermitian_residual(b).max(linalg::imag_residual(b)),
                    STRUCTURE_TOL,
                    "b real symmetric",
                ));
                let (d_dot, b_dot) = flow::rhs(s);
                let split = d_dot.entries() + d_dot.entries().adjoint() + b_dot.entries();
                let dense = flow::commutator_rhs(s);
                r.push(Check::new(
                    "structure.rhs_crosscheck",
                    linalg::max_abs(&(split - dense.entries())),
                    1e-12,
                    "split right-hand side equals [B, D]",
                ));
                if real_flow {
                    let bm = s.lax();
                    let dm = s.dirac();
                    let twice = bm.entries() * dm.entries() * Complex64::new(2.0, 0.0);
                    r.push(Check::new(
                        "structure.lax_2BD",
                        linalg::max_abs(&(dense.entries() - twice)),
                        STRUCTURE_TOL,
                        "[B, D] = 2BD",
                    ));
                } else {
                    r.push(Check::skipped(
                        "structure.lax_2BD",
                        STRUCTURE_TOL,
                        "[B, D] = 2BD",
                        "only for beta = 0",
                    ));
                }
                r
            })
            .collect::<Vec<_>>(),
    )
}

/// `D(t) + D(-t) = 2 C(t)` on snapshots with matching `|t|`.
pub fn time_reversal_check(forward: &Trajectory, backward: &Trajectory) -> DiagnosticsReport {
    let mut worst: f64 = 0.0;
    let mut matched = 0;
    for f in &forward.snapshots {
        if let Some(b) = backward
            .snapshots
            .iter()
            .find(|b| (b.t + f.t).abs() < 1e-9)
        {
            let c2 = f.geometric().entries() * Complex64::new(2.0, 0.0);
            worst = worst.max(linalg::max_abs(
                &(f.dirac().entries() + b.dirac().entries() - c2),
            ));
            matched += 1;
        }
    }
    let mut r = DiagnosticsReport::new();
    let anchor = "D(t) + D(-t) = 2C(t)";
    if matched == 0 {
        r.push(Check::skipped("time_reversal", INVARIANT_TOL, anchor, "no matching times"));
    } else {
        r.push(
            Check::new("time_reversal", worst, INVARIANT_TOL, anchor)
                .with_detail(format!("{matched} times")),
        );
    }
    r
}

/// `L = M + V` with `M`, `V` commuting and positive semidefinite.
pub fn decomposition_check(traj: &Trajectory) -> DiagnosticsReport {
    let l0 = traj.first().laplacian();
    DiagnosticsReport::worst_of(
        traj.snapshots
            .par_iter()
            .map(|s| {
                let m = s.kinetic();
                let v = s.potential();
                let mut r = DiagnosticsReport::new();
                r.push(Check::new(
                    "decomposition.sum",
                    linalg::max_abs(&(l0.entries() - m.entries() - v.entries())),
                    INVARIANT_TOL,
                    "L = M + V",
                ));
                r.push(Check::new(
                    "decomposition.commute",
                    linalg::max_abs(&linalg::commutator(m.entries(), v.entries())),
                    INVARIANT_TOL,
                    "[M, V] = 0",
                ));
                let min_m = m.spectrum().first().copied().unwrap_or(0.0);
                let min_v = v.spectrum().first().copied().unwrap_or(0.0);
                r.push(Check::new(
                    "decomposition.M_psd",
                    (-min_m).max(0.0),
                    POSITIVITY_TOL,
                    "M positive semidefinite",
                ));
                r.push(Check::new(
                    "decomposition.V_psd",
                    (-min_v).max(0.0),
                    POSITIVITY_TOL,
                    "V positive semidefinite",
                ));
                r
            })
            .collect::<Vec<_>>(),
    )
}

/// Spectrum of `D(t)` symmetric under `lambda -> -lambda`.
pub fn spectrum_symmetry_check(traj: &Trajectory) -> DiagnosticsReport {
    let worst = fold_max(traj.snapshots.par_iter().map(|s| {
        let ev = s.dirac().spectrum();
        let n = ev.len();
        fold_max((0..n).map(|i| (ev[i] + ev[n - 1 - i]).abs()))
    }).collect::<Vec<_>>());
    let mut r = DiagnosticsReport::new();
    r.push(Check::new(
        "spectrum_symmetry",
        worst,
        INVARIANT_TOL,
        "spectrum symmetric under lambda -> -lambda",
    ));
    r
}

/// `b`, `dd^*`, `d^*d`, `b^2` pairwise commute.
pub fn commuting_check(traj: &Trajectory) -> DiagnosticsReport {
    let worst = fold_max(
        traj.snapshots
            .par_iter()
            .map(|s| {
                let ops = [
                    s.b.entries().clone(),
                    s.raising_square().into_entries(),
                    s.lowering_square().into_entries(),
                    s.potential().into_entries(),
                ];
                let mut w: f64 = 0.0;
                for i in 0..ops.len() {
                    for j in i + 1..ops.len() {
                        w = w.max(linalg::max_abs(&linalg::commutator(&ops[i], &ops[j])));
                    }
                }
                w
            })
            .collect::<Vec<_>>(),
    );
    let mut r = DiagnosticsReport::new();
    r.push(Check::new(
        "commuting_family",
        worst,
        INVARIANT_TOL,
        "b, dd*, d*d, b^2 pairwise commute",
    ));
    r
}

/// `tr(D^k)` for `k = 1..6` conserved.
/// Drift tolerance scales with `max(1, |tr D^k(0)|)`.
pub fn trace_conservation_check(traj: &Trajectory) -> DiagnosticsReport {
    let powers = |s: &FlowState| {
        let d = s.dirac().into_entries();
        let mut acc = d.clone();
        let mut out = Vec::with_capacity(6);
        for _ in 0..6 {
            out.push(linalg::trace(&acc).re);
            acc = &acc * &d;
        }
        out
    };
    let reference = powers(traj.first());
    let mut r = DiagnosticsReport::new();
    let drifts: Vec<Vec<f64>> = traj.snapshots.par_iter().map(powers).collect();
    for k in 0..6 {
        r.push(Check::new(
            format!("traces.tr_D{}", k + 1),
            fold_max(drifts.iter().map(|v| (v[k] - reference[k]).abs())),
            INVARIANT_TOL * reference[k].abs().max(1.0),
            "tr(D^k) conserved",
        ));
    }
    r
}

/// `tr(F'(D) B G'(D)) = 0` for `F = x^n`, `G = x^m`, `n != m <= 4`.
pub fn poisson_probe(traj: &Trajectory) -> DiagnosticsReport {
    let anchor = "tr(F'(D) B G'(D)) = 0";
    let mut r = DiagnosticsReport::new();
    if traj.first().beta != 0.0 {
        r.push(Check::skipped("poisson_probe", INVARIANT_TOL, anchor, "only for beta = 0"));
        return r;
    }
    let worst = fold_max(
        traj.snapshots
            .par_iter()
            .map(|s| {
                let d = s.dirac().into_entries();
                let b = s.lax().into_entries();
                let mut w: f64 = 0.0;
                for n in 1..=4usize {
                    for m in 1..=4usize {
                        if n != m {
                            let lhs = matrix_power(&d, n - 1) * Complex64::new(n as f64, 0.0);
                            let rhs = matrix_power(&d, m - 1) * Complex64::new(m as f64, 0.0);
                            w = w.max(linalg::trace(&(lhs * &b * rhs)).norm());
                        }
                    }
                }
                w
            })
            .collect::<Vec<_>>(),
    );
    r.push(Check::new("poisson_probe", worst, INVARIANT_TOL, anchor));
    r
}

/// Co-integrated unitary reproduces the state by conjugation.
pub fn conjugation_check(traj: &Trajectory) -> Result<DiagnosticsReport> {
    let d0 = traj.first().dirac();
    let mut worst: f64 = 0.0;
    for s in &traj.snapshots {
        worst = worst.max(flow::unitary_conjugation_residual(s, &d0)?);
    }
    let mut r = DiagnosticsReport::new();
    r.push(Check::new(
        "conjugation",
        worst,
        1e-6,
        "D(t) = U D(0) U*",
    ));
    Ok(r)
}

/// Named groups of checks selectable from the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CheckGroup {
    Monotonicity,
    Positivity,
    McKeanSinger,
    PlaneInvariance,
    FermionAngle,
    Dolbeault,
    BetaTimeChange,
    Cohomology,
    Isospectral,
    Structure,
    TimeReversal,
    Decomposition,
    SpectrumSymmetry,
    Commuting,
    Traces,
    Poisson,
    Conjugation,
}

impl CheckGroup {
    pub const ALL: [CheckGroup; 17] = [
        CheckGroup::Monotonicity,
        CheckGroup::Positivity,
        CheckGroup::McKeanSinger,
        CheckGroup::PlaneInvariance,
        CheckGroup::FermionAngle,
        CheckGroup::Dolbeault,
        CheckGroup::BetaTimeChange,
        CheckGroup::Cohomology,
        CheckGroup::Isospectral,
        CheckGroup::Structure,
        CheckGroup::TimeReversal,
        CheckGroup::Decomposition,
        CheckGroup::SpectrumSymmetry,
        CheckGroup::Commuting,
        CheckGroup::Traces,
        CheckGroup::Poisson,
        CheckGroup::Conjugation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckGroup::Monotonicity => "monotonicity",
            CheckGroup::Positivity => "positivity",
            CheckGroup::McKeanSinger => "mckean_singer",
            CheckGroup::PlaneInvariance => "plane_invariance",
            CheckGroup::FermionAngle => "fermion_angle",
            CheckGroup::Dolbeault => "dolbeault",
            CheckGroup::BetaTimeChange => "beta_timechange",
            CheckGroup::Cohomology => "cohomology",
            CheckGroup::Isospectral => "isospectral",
            CheckGroup::Structure => "structure",
            CheckGroup::TimeReversal => "time_reversal",
            CheckGroup::Decomposition => "decomposition",
            CheckGroup::SpectrumSymmetry => "spectrum_symmetry",
            CheckGroup::Commuting => "commuting",
            CheckGroup::Traces => "traces",
            CheckGroup::Poisson => "poisson",
            CheckGroup::Conjugation => "conjugation",
        }
    }

    /// Parses a list such as `["all"]` or `["positivity", "cohomology"]`.
    pub fn parse_list<S: AsRef<str>>(names: &[S]) -> Result<Vec<CheckGroup>> {
        if names.is_empty() || names.iter().any(|n| n.as_ref() == "all") {
            return Ok(Self::ALL.to_vec());
        }
        let mut out = Vec::new();
        for n in names {
            let g: CheckGroup = n.as_ref().parse()?;
            if !out.contains(&g) {
                out.push(g);
            }
        }
        Ok(out)
    }
}

impl FromStr for CheckGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown check '{s}'")))
    }
}

/// Integrates the configured flow on `c` and evaluates the selected groups.
/// Rank or matching failures become a failed check instead of aborting the suite.
fn failed_on_numerics(
    name: &str,
    g: CheckGroup,
    r: Result<DiagnosticsReport>,
) -> Result<DiagnosticsReport> {
    match r {
        Err(e @ (Error::Ambiguous(_) | Error::Diagnostic(_))) => {
            let mut out = DiagnosticsReport::new();
            out.push(Check::new(name, f64::INFINITY, 0.0, g.name()).with_detail(e.to_string()));
            Ok(out)
        }
        other => other,
    }
}

pub fn run_suite(
    c: &OrientedComplex,
    cfg: &FlowConfig,
    groups: &[CheckGroup],
) -> Result<DiagnosticsReport> {
    cfg.validate()?;
    let s0 = FlowState::initial(c, &cfg.gamma, cfg.beta, cfg.with_unitary)?;
    let opts = cfg.options();
    let traj = flow::evolve_with(&s0, cfg.t_end, &opts, &[])?;
    let backward = if groups.contains(&CheckGroup::TimeReversal) {
        Some(flow::evolve_with(&s0, -cfg.t_end, &opts, &[])?)
    } else {
        None
    };
    let forward_time = cfg.t_end > 0.0;
    let pure = pure_eigenvectors(&s0);

    let reports: Vec<Result<DiagnosticsReport>> = groups
        .par_iter()
        .map(|&g| -> Result<DiagnosticsReport> {
            let skip = |name: &str, why: &str| {
                let mut r = DiagnosticsReport::new();
                r.push(Check::skipped(name, 0.0, g.name(), why));
                Ok(r)
            };
            match g {
                CheckGroup::Monotonicity if !forward_time => {
                    skip("monotonicity", "needs t_end > 0")
                }
                CheckGroup::Monotonicity => monotonicity_report(&traj),
                CheckGroup::Positivity => Ok(positivity_along(&traj)),
                CheckGroup::McKeanSinger if !cfg.with_unitary => {
                    skip("mckean_singer", "run without unitary")
                }
                CheckGroup::McKeanSinger => mckean_singer_check(&traj),
                CheckGroup::PlaneInvariance => {
                    if pure.is_empty() {
                        return skip("plane", "no nonzero eigenvalues");
                    }
                    let per: Result<Vec<_>> = pure
                        .par_iter()
                        .map(|p| plane_invariance(&p.vector, &traj))
                        .collect();
                    Ok(DiagnosticsReport::worst_of(per?))
                }
                CheckGroup::FermionAngle => {
                    match pure.iter().find(|p| p.degree % 2 == 1) {
                        Some(p) if forward_time => fermion_angle_report(&p.vector, &traj),
                        Some(_) => skip("fermion_angle", "needs t_end > 0"),
                        None => skip("fermion_angle", "no odd-degree eigenvector"),
                    }
                }
                CheckGroup::Dolbeault => Ok(DiagnosticsReport::worst_of(
                    traj.snapshots
                        .iter()
                        .filter(|s| s.t != 0.0)
                        .map(dolbeault_check)
                        .collect::<Vec<_>>(),
                )),
                CheckGroup::BetaTimeChange => {
                    failed_on_numerics("beta_timechange", g, beta_timechange_check(c, cfg.beta))
                }
                CheckGroup::Cohomology => failed_on_numerics("cohomology", g, cohomology_check(&traj)),
                CheckGroup::Isospectral => Ok(isospectral_check(&traj)),
                CheckGroup::Structure => Ok(structure_check(&traj)),
                CheckGroup::TimeReversal => Ok(time_reversal_check(
                    &traj,
                    backward.as_ref().expect("backward run"),
                )),
                CheckGroup::Decomposition => Ok(decomposition_check(&traj)),
                CheckGroup::SpectrumSymmetry => Ok(spectrum_symmetry_check(&traj)),
                CheckGroup::Commuting => Ok(commuting_check(&traj)),
                CheckGroup::Traces => Ok(trace_conservation_check(&traj)),
                CheckGroup::Poisson => Ok(poisson_probe(&traj)),
                CheckGroup::Conjugation if !cfg.with_unitary => {
                    skip("conjugation", "run without unitary")
                }
                CheckGroup::Conjugation => conjugation_check(&traj),
            }
        })
        .collect();
    let mut out = DiagnosticsReport::with_times(traj.times());
    for r in reports {
        out.merge(r?);
    }
    // series that are cheap and always useful
    let tr_m: Vec<f64> = traj.snapshots.iter().map(|s| s.kinetic().trace().re).collect();
    let tr_b2: Vec<f64> = traj.snapshots.iter().map(|s| s.potential().trace().re).collect();
    out.add_series("tr_M", tr_m);
    out.add_series("tr_b2", tr_b2);
    Ok(out)
}
