//! The Lax deformation `D' = [B, D]` with `D = d + d^* + b` and
//! `B = d - d^* + i beta b`, integrated in split form.
//!
//! Writing out the commutator and sorting by degree jump gives
//!
//! ```text
//! d' = (1 - i beta) (d b - b d)
//! b' = 2 (d d^* - d^* d)
//! ```
//!
//! which is what [`rhs`] evaluates; [`commutator_rhs`] forms the dense
//! commutator directly so the two can be cross-checked.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::complex::OrientedComplex;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, I};
use crate::operators::{self, GradedOperator, Grading};

/// Default RK4 step.
pub const DEFAULT_STEP: f64 = 1e-3;
/// Re-unitarize when `max |U*U - I|` exceeds this.
pub const UNITARITY_TRIGGER: f64 = 1e-10;
/// Unitarity is inspected every this many steps.
pub const UNITARITY_CHECK_EVERY: usize = 100;
/// `max |d|` below this, sustained over [`CONVERGENCE_WINDOW`], counts as converged.
pub const CONVERGENCE_THRESHOLD: f64 = 1e-7;
pub const CONVERGENCE_WINDOW: f64 = 1.0;

/// `(d, b)` at time `t`, plus the parameters of the flow and optionally the
/// accumulated unitary `U` with `U' = B U`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub d: GradedOperator,
    pub b: GradedOperator,
    pub t: f64,
    pub beta: f64,
    pub gamma: Vec<f64>,
    pub unitary: Option<GradedOperator>,
}

impl FlowState {
    /// The undeformed state `D = d + d^*` built from the complex with couplings `gamma`.
    pub fn initial(
        c: &OrientedComplex,
        gamma: &[f64],
        beta: f64,
        with_unitary: bool,
    ) -> Result<Self> {
        let d = operators::scaled_exterior_derivative(c, gamma)?;
        let grading = d.grading().clone();
        let gamma = if gamma.is_empty() {
            vec![1.0; c.max_dim()]
        } else {
            gamma.to_vec()
        };
        Ok(Self {
            b: GradedOperator::zeros(grading.clone()),
            unitary: with_unitary.then(|| GradedOperator::identity(grading)),
            d,
            t: 0.0,
            beta,
            gamma,
        })
    }

    pub fn grading(&self) -> &Arc<Grading> {
        self.d.grading()
    }

    fn wrap(&self, m: CMatrix) -> GradedOperator {
        GradedOperator::from_parts(m, self.grading().clone())
    }

    /// `D = d + d^* + b`.
    pub fn dirac(&self) -> GradedOperator {
        let d = self.d.entries();
        self.wrap(d + d.adjoint() + self.b.entries())
    }

    /// `B = d - d^* + i beta b`.
    pub fn lax(&self) -> GradedOperator {
        self.wrap(lax_matrix(self.d.entries(), self.b.entries(), self.beta))
    }

    /// `C = d + d^*`.
    pub fn geometric(&self) -> GradedOperator {
        let d = self.d.entries();
        self.wrap(d + d.adjoint())
    }

    /// `M = C^2 = d d^* + d^* d`.
    pub fn kinetic(&self) -> GradedOperator {
        let c = self.geometric();
        c.compose(&c)
    }

    /// `V = b^2`.
    pub fn potential(&self) -> GradedOperator {
        self.b.compose(&self.b)
    }

    /// `R = d d^*`.
    pub fn raising_square(&self) -> GradedOperator {
        let d = self.d.entries();
        self.wrap(d * d.adjoint())
    }

    /// `S = d^* d`.
    pub fn lowering_square(&self) -> GradedOperator {
        let d = self.d.entries();
        self.wrap(d.adjoint() * d)
    }

    /// `L = D^2`.
    pub fn laplacian(&self) -> GradedOperator {
        operators::laplacian(&self.dirac())
    }

    /// Checks the structural invariants at trajectory tolerance.
    pub fn validate(&self) -> Result<()> {
        let tol = operators::TRAJECTORY_TOL;
        let off_raising = self.d.entries() - self.d.degree_part(1).entries();
        if linalg::max_abs(&off_raising) > tol {
            return Err(Error::Diagnostic("d is not strictly raising".into()));
        }
        let off_diag = self.b.entries() - self.b.degree_part(0).entries();
        if linalg::max_abs(&off_diag) > tol {
            return Err(Error::Diagnostic("b is not block diagonal".into()));
        }
        if self.b.hermitian_residual() > tol || linalg::imag_residual(self.b.entries()) > tol {
            return Err(Error::Diagnostic("b is not real symmetric".into()));
        }
        if let Some(u) = &self.unitary {
            if linalg::unitarity_defect(u.entries()) > 1e-8 {
                return Err(Error::Diagnostic("U is not unitary".into()));
            }
        }
        Ok(())
    }
}

pub(crate) fn lax_matrix(d: &CMatrix, b: &CMatrix, beta: f64) -> CMatrix {
    d - d.adjoint() + b * (I * beta)
}

/// Split right-hand side `(d', b')`.
pub fn rhs(s: &FlowState) -> (GradedOperator, GradedOperator) {
    let (dd, bd) = split_rhs(s.d.entries(), s.b.entries(), s.beta);
    (s.wrap(dd), s.wrap(bd))
}

fn split_rhs(d: &CMatrix, b: &CMatrix, beta: f64) -> (CMatrix, CMatrix) {
    let ds = d.adjoint();
    let d_dot = (d * b - b * d) * Complex64::new(1.0, -beta);
    let b_dot = (d * &ds - &ds * d) * Complex64::new(2.0, 0.0);
    (d_dot, b_dot)
}

/// Dense commutator `[B, D]`.
pub fn commutator_rhs(s: &FlowState) -> GradedOperator {
    let dm = s.dirac();
    let bm = s.lax();
    s.wrap(linalg::commutator(bm.entries(), dm.entries()))
}

/// `f(L)` for the polynomial with coefficients `poly` (constant term first).
pub fn polynomial_of(l: &CMatrix, poly: &[f64]) -> CMatrix {
    let n = l.nrows();
    let mut acc = CMatrix::zeros(n, n);
    let mut power = CMatrix::identity(n, n);
    for (k, &c) in poly.iter().enumerate() {
        if k > 0 {
            power = &power * l;
        }
        if c != 0.0 {
            acc += &power * Complex64::new(c, 0.0);
        }
    }
    acc
}

fn is_first_flow(poly: &[f64]) -> bool {
    poly.is_empty() || (poly[0] == 1.0 && poly[1..].iter().all(|&c| c == 0.0))
}

/// Right-hand side of the higher flow `D' = f(L) [B, D]`.
pub fn higher_flow_rhs(s: &FlowState, poly: &[f64]) -> Result<(GradedOperator, GradedOperator)> {
    if poly.iter().all(|&c| c == 0.0) {
        return Err(Error::Usage("flow polynomial must be nonzero".into()));
    }
    let filter = polynomial_of(s.laplacian().entries(), poly);
    let (dd, bd) = split_rhs(s.d.entries(), s.b.entries(), s.beta);
    Ok((s.wrap(&filter * dd), s.wrap(&filter * bd)))
}

/// How a vector carried along the flow moves.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transport {
    /// `f' = -(1 - i beta) b f`, which keeps cocycles cocycles and coboundaries coboundaries.
    Cocycle,
    /// `f' = B f`, the motion of eigenvectors.
    Lax,
}

#[derive(Clone)]
struct Raw {
    d: CMatrix,
    b: CMatrix,
    u: Option<CMatrix>,
    vecs: Vec<CVector>,
}

impl Raw {
    fn offset(&self, k: &Raw, h: f64) -> Raw {
        let hc = Complex64::new(h, 0.0);
        Raw {
            d: &self.d + &k.d * hc,
            b: &self.b + &k.b * hc,
            u: self
                .u
                .as_ref()
                .zip(k.u.as_ref())
                .map(|(u, ku)| u + ku * hc),
            vecs: self
                .vecs
                .iter()
                .zip(&k.vecs)
                .map(|(v, kv)| v + kv * hc)
                .collect(),
        }
    }

    fn is_finite(&self) -> bool {
        let fin = |m: &CMatrix| m.iter().all(|z| z.re.is_finite() && z.im.is_finite());
        fin(&self.d)
            && fin(&self.b)
            && self.u.as_ref().is_none_or(fin)
            && self
                .vecs
                .iter()
                .all(|v| v.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }
}

/// Orthogonal projection onto the operators commuting with the initial `L`.
///
/// The exact flow never leaves this commutant; projecting after each step
/// removes roundoff that the flow would otherwise amplify near its limit.
#[derive(Clone, Debug)]
struct Projector {
    basis: CMatrix,
    keep: Vec<bool>,
}

impl Projector {
    fn of(s: &FlowState) -> Self {
        let g = s.grading();
        let l = s.laplacian();
        let n = g.size();
        let mut basis = CMatrix::zeros(n, n);
        let mut values = vec![0.0; n];
        for p in 0..g.num_degrees() {
            let range = g.range(p);
            let (vals, vecs) = linalg::hermitian_eigen(&l.block(p, p));
            basis
                .view_mut((range.start, range.start), (range.len(), range.len()))
                .copy_from(&vecs);
            values[range].copy_from_slice(&vals);
        }
        let keep = (0..n * n)
            .map(|k| {
                let (i, j) = (k % n, k / n);
                (values[i] - values[j]).abs() < 1e-6 * values[i].abs().max(1.0)
            })
            .collect();
        Self { basis, keep }
    }

    /// Subtracts the part outside the commutant, so the correction carries
    /// roundoff relative to that small part only.
    fn apply(&self, x: &CMatrix) -> CMatrix {
        let mut t = self.basis.adjoint() * x * &self.basis;
        for (z, &k) in t.iter_mut().zip(&self.keep) {
            if k {
                *z = Complex64::new(0.0, 0.0);
            }
        }
        x - &self.basis * t * self.basis.adjoint()
    }
}

struct Generator {
    beta: f64,
    filter: Option<CMatrix>,
    transports: Vec<Transport>,
    projector: Option<Projector>,
}

impl Generator {
    fn new(
        s: &FlowState,
        poly: &[f64],
        transports: Vec<Transport>,
        project: bool,
    ) -> Result<Self> {
        let filter = if is_first_flow(poly) {
            None
        } else {
            if poly.iter().all(|&c| c == 0.0) {
                return Err(Error::Usage("flow polynomial must be nonzero".into()));
            }
            Some(polynomial_of(s.laplacian().entries(), poly))
        };
        Ok(Self {
            beta: s.beta,
            filter,
            transports,
            projector: project.then(|| Projector::of(s)),
        })
    }

    fn project(&self, y: &mut Raw) {
        if let Some(p) = &self.projector {
            y.d = p.apply(&y.d);
            y.b = p.apply(&y.b);
        }
    }

    fn filtered(&self, m: CMatrix) -> CMatrix {
        match &self.filter {
            Some(f) => f * m,
            None => m,
        }
    }

    fn derivative(&self, y: &Raw) -> Raw {
        let (d_dot, b_dot) = split_rhs(&y.d, &y.b, self.beta);
        let needs_lax = y.u.is_some() || self.transports.contains(&Transport::Lax);
        let lax = needs_lax.then(|| self.filtered(lax_matrix(&y.d, &y.b, self.beta)));
        let cocycle = self
            .transports
            .contains(&Transport::Cocycle)
            .then(|| self.filtered(&y.b * Complex64::new(-1.0, self.beta)));
        Raw {
            d: self.filtered(d_dot),
            b: self.filtered(b_dot),
            u: y.u.as_ref().map(|u| lax.as_ref().expect("lax computed") * u),
            vecs: y
                .vecs
                .iter()
                .zip(&self.transports)
                .map(|(v, kind)| match kind {
                    Transport::Lax => lax.as_ref().expect("lax computed") * v,
                    Transport::Cocycle => cocycle.as_ref().expect("cocycle computed") * v,
                })
                .collect(),
        }
    }

    fn rk4(&self, y: &Raw, h: f64) -> Raw {
        let k1 = self.derivative(y);
        let k2 = self.derivative(&y.offset(&k1, h / 2.0));
        let k3 = self.derivative(&y.offset(&k2, h / 2.0));
        let k4 = self.derivative(&y.offset(&k3, h));
        let mut out = y.offset(&k1, h / 6.0);
        out = out.offset(&k2, h / 3.0);
        out = out.offset(&k3, h / 3.0);
        out.offset(&k4, h / 6.0)
    }
}

fn raw_of(s: &FlowState, vecs: Vec<CVector>) -> Raw {
    Raw {
        d: s.d.entries().clone(),
        b: s.b.entries().clone(),
        u: s.unitary.as_ref().map(|u| u.entries().clone()),
        vecs,
    }
}

fn state_of(template: &FlowState, y: &Raw, t: f64) -> FlowState {
    let g = template.grading().clone();
    FlowState {
        d: GradedOperator::from_parts(y.d.clone(), g.clone()),
        b: GradedOperator::from_parts(y.b.clone(), g.clone()),
        t,
        beta: template.beta,
        gamma: template.gamma.clone(),
        unitary: y.u.as_ref().map(|u| GradedOperator::from_parts(u.clone(), g.clone())),
    }
}

/// One classical RK4 step of size `h` (negative `h` integrates backward).
pub fn step_rk4(s: &FlowState, h: f64) -> Result<FlowState> {
    if h == 0.0 || !h.is_finite() {
        return Err(Error::Usage("step size must be finite and nonzero".into()));
    }
    let g = Generator::new(s, &[], Vec::new(), false)?;
    let y = g.rk4(&raw_of(s, Vec::new()), h);
    let t = s.t + h;
    if !y.is_finite() {
        return Err(Error::Divergence { t });
    }
    Ok(state_of(s, &y, t))
}

/// Advances `s` by `dt` in uniform RK4 steps no longer than `|opts.h|`.
pub fn advance(s: &FlowState, dt: f64, opts: &EvolveOptions) -> Result<FlowState> {
    if dt == 0.0 {
        return Ok(s.clone());
    }
    if opts.h == 0.0 || !opts.h.is_finite() || !dt.is_finite() {
        return Err(Error::Usage("advance needs a finite span and nonzero step".into()));
    }
    let steps = (dt.abs() / opts.h.abs() - 1e-9).ceil().max(1.0) as usize;
    let h = dt / steps as f64;
    let g = Generator::new(s, &opts.flow_poly, Vec::new(), opts.project)?;
    let mut y = raw_of(s, Vec::new());
    for k in 1..=steps {
        y = g.rk4(&y, h);
        g.project(&mut y);
        if !y.is_finite() {
            return Err(Error::Divergence { t: s.t + h * k as f64 });
        }
    }
    Ok(state_of(s, &y, s.t + dt))
}

/// A scalar quantity recorded at every snapshot.
#[derive(Clone)]
pub struct Observer {
    pub name: String,
    eval: Arc<dyn Fn(&FlowState) -> Complex64 + Send + Sync>,
}

impl std::fmt::Debug for Observer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Observer").field("name", &self.name).finish()
    }
}

/// Names accepted by [`Observer::builtin`].
pub const BUILTIN_OBSERVERS: [&str; 6] =
    ["tr_M", "tr_b2", "spec_drift", "str_U_re", "str_U_im", "norm_d"];

impl Observer {
    pub fn new(
        name: impl Into<String>,
        eval: impl Fn(&FlowState) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            eval: Arc::new(eval),
        }
    }

    pub fn evaluate(&self, s: &FlowState) -> Complex64 {
        (self.eval)(s)
    }

    /// Built-in observer by name; `initial` supplies the reference spectrum.
    pub fn builtin(name: &str, initial: &FlowState) -> Result<Self> {
        let real = |x: f64| Complex64::new(x, 0.0);
        Ok(match name {
            "tr_M" => Self::new(name, move |s| real(s.kinetic().trace().re)),
            "tr_b2" => Self::new(name, move |s| real(s.potential().trace().re)),
            "spec_drift" => {
                let reference = initial.dirac().spectrum();
                Self::new(name, move |s| {
                    real(linalg::spectrum_distance(&reference, &s.dirac().spectrum()))
                })
            }
            "str_U_re" => Self::new(name, move |s| {
                real(s.unitary.as_ref().map_or(f64::NAN, |u| operators::supertrace(u).re))
            }),
            "str_U_im" => Self::new(name, move |s| {
                real(s.unitary.as_ref().map_or(f64::NAN, |u| operators::supertrace(u).im))
            }),
            "norm_d" => Self::new(name, move |s| real(s.d.max_abs())),
            other => return Err(Error::Usage(format!("unknown observer '{other}'"))),
        })
    }

    pub fn all_builtin(initial: &FlowState) -> Vec<Self> {
        BUILTIN_OBSERVERS
            .iter()
            .map(|n| Self::builtin(n, initial).expect("builtin names are valid"))
            .collect()
    }
}

/// Integration settings for [`evolve_with`].
#[derive(Clone, Debug, PartialEq)]
pub struct EvolveOptions {
    pub h: f64,
    pub snapshot_every: usize,
    pub flow_poly: Vec<f64>,
    /// Project `d` and `b` onto the commutant of `L(0)` after every step.
    pub project: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            h: DEFAULT_STEP,
            snapshot_every: 1,
            flow_poly: vec![1.0],
            project: true,
        }
    }
}

/// Time-ordered snapshots plus observer series.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub snapshots: Vec<FlowState>,
    pub observers: Vec<(String, Vec<Complex64>)>,
    /// Signed uniform step actually used.
    pub step: f64,
    pub snapshot_every: usize,
    pub flow_poly: Vec<f64>,
    pub project: bool,
    /// Step indices of the snapshots.
    pub snapshot_steps: Vec<usize>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn first(&self) -> &FlowState {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &FlowState {
        self.snapshots.last().expect("trajectory is non-empty")
    }

    pub fn series(&self, name: &str) -> Option<&[Complex64]> {
        self.observers
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    /// Snapshot closest in time to `t`.
    pub fn at(&self, t: f64) -> &FlowState {
        self.snapshots
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .expect("trajectory is non-empty")
    }

    /// Earliest snapshot time after which `max |d|` stays below the convergence
    /// threshold for at least the convergence window.
    pub fn convergence_time(&self) -> Option<f64> {
        let end = self.last().t.abs();
        let mut candidate: Option<f64> = None;
        for s in &self.snapshots {
            if s.d.max_abs() < CONVERGENCE_THRESHOLD {
                candidate.get_or_insert(s.t.abs());
            } else {
                candidate = None;
            }
        }
        candidate.filter(|&c| end - c >= CONVERGENCE_WINDOW)
    }
}

/// Integrates with uniform RK4 steps from `s.t` to `t_end`, keeping every snapshot.
pub fn evolve(s: &FlowState, t_end: f64, h: f64, observers: &[Observer]) -> Result<Trajectory> {
    evolve_with(
        s,
        t_end,
        &EvolveOptions {
            h,
            ..EvolveOptions::default()
        },
        observers,
    )
}

/// Integrates from `s.t` to `t_end` with the given options.
///
/// The step magnitude is `|opts.h|` rounded down so that a whole number of
/// steps lands exactly on `t_end`; the sign follows the direction of time.
pub fn evolve_with(
    s: &FlowState,
    t_end: f64,
    opts: &EvolveOptions,
    observers: &[Observer],
) -> Result<Trajectory> {
    let plan = StepPlan::new(s.t, t_end, opts)?;
    let generator = Generator::new(s, &opts.flow_poly, Vec::new(), opts.project)?;
    let mut snapshots = Vec::new();
    let mut series: Vec<(String, Vec<Complex64>)> = observers
        .iter()
        .map(|o| (o.name.clone(), Vec::new()))
        .collect();
    let mut snapshot_steps = Vec::new();
    let mut record = |state: FlowState, step: usize| {
        for (o, (_, values)) in observers.iter().zip(series.iter_mut()) {
            values.push(o.evaluate(&state));
        }
        snapshots.push(state);
        snapshot_steps.push(step);
    };
    integrate(s, &generator, &plan, Vec::new(), |st, _vecs, step| {
        record(st, step)
    })?;
    Ok(Trajectory {
        snapshots,
        observers: series,
        step: plan.h,
        snapshot_every: plan.snapshot_every,
        flow_poly: opts.flow_poly.clone(),
        project: opts.project,
        snapshot_steps,
    })
}

struct StepPlan {
    t0: f64,
    h: f64,
    steps: usize,
    snapshot_every: usize,
}

impl StepPlan {
    fn new(t0: f64, t_end: f64, opts: &EvolveOptions) -> Result<Self> {
        let span = t_end - t0;
        if !opts.h.is_finite() || opts.h == 0.0 {
            return Err(Error::Usage("step size must be finite and nonzero".into()));
        }
        if !span.is_finite() || span == 0.0 || opts.h.abs() > span.abs() * (1.0 + 1e-12) {
            return Err(Error::Usage(format!(
                "step {} does not fit the interval [{t0}, {t_end}]",
                opts.h
            )));
        }
        let steps = ((span.abs() / opts.h.abs()) - 1e-9).ceil().max(1.0) as usize;
        Ok(Self {
            t0,
            h: span / steps as f64,
            steps,
            snapshot_every: opts.snapshot_every.max(1),
        })
    }
}

fn integrate(
    s: &FlowState,
    generator: &Generator,
    plan: &StepPlan,
    vecs: Vec<CVector>,
    mut on_snapshot: impl FnMut(FlowState, &[CVector], usize),
) -> Result<()> {
    let mut y = raw_of(s, vecs);
    on_snapshot(s.clone(), &y.vecs, 0);
    for step in 1..=plan.steps {
        y = generator.rk4(&y, plan.h);
        generator.project(&mut y);
        let t = plan.t0 + plan.h * step as f64;
        if !y.is_finite() {
            return Err(Error::Divergence { t });
        }
        if step % UNITARITY_CHECK_EVERY == 0 {
            if let Some(u) = &mut y.u {
                if linalg::unitarity_defect(u) > UNITARITY_TRIGGER {
                    *u = linalg::polar_unitary(u);
                }
            }
        }
        if step % plan.snapshot_every == 0 || step == plan.steps {
            on_snapshot(state_of(s, &y, t), &y.vecs, step);
        }
    }
    Ok(())
}

/// Carries `f` along the trajectory with the given transport law, returning
/// its value at every snapshot.
///
/// The flow is re-integrated from the first snapshot with the trajectory's
/// own step so the vector sees exactly the same stepper.
pub fn transport(f: &CVector, traj: &Trajectory, kind: Transport) -> Result<Vec<CVector>> {
    transport_many(std::slice::from_ref(f), traj, &[kind]).map(|mut v| v.remove(0))
}

/// Several vectors at once; outer index follows `fs`.
pub fn transport_many(
    fs: &[CVector],
    traj: &Trajectory,
    kinds: &[Transport],
) -> Result<Vec<Vec<CVector>>> {
    let s = traj.first();
    if fs.len() != kinds.len() {
        return Err(Error::Usage("one transport law per vector".into()));
    }
    if let Some(f) = fs.iter().find(|f| f.len() != s.grading().size()) {
        return Err(Error::Usage(format!(
            "vector has length {} but the complex has {} simplices",
            f.len(),
            s.grading().size()
        )));
    }
    let generator = Generator::new(s, &traj.flow_poly, kinds.to_vec(), traj.project)?;
    let plan = StepPlan {
        t0: s.t,
        h: traj.step,
        steps: *traj.snapshot_steps.last().expect("non-empty"),
        snapshot_every: traj.snapshot_every,
    };
    let mut out: Vec<Vec<CVector>> = vec![Vec::new(); fs.len()];
    let mut stripped = s.clone();
    stripped.unitary = None;
    integrate(&stripped, &generator, &plan, fs.to_vec(), |_, vecs, _| {
        for (acc, v) in out.iter_mut().zip(vecs) {
            acc.push(v.clone());
        }
    })?;
    Ok(out)
}

/// Transport under `f' = -(1 - i beta) b f`.
pub fn transport_cocycle(f: &CVector, traj: &Trajectory) -> Result<Vec<CVector>> {
    transport(f, traj, Transport::Cocycle)
}

/// `max |(d + d^* + b) - U D0 U^*|`.
pub fn unitary_conjugation_residual(s: &FlowState, d0: &GradedOperator) -> Result<f64> {
    let u = s
        .unitary
        .as_ref()
        .ok_or_else(|| Error::Usage("state carries no unitary".into()))?;
    let conj = u.entries() * d0.entries() * u.entries().adjoint();
    Ok(linalg::max_abs(&(s.dirac().entries() - conj)))
}

/// Flow configuration document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub beta: f64,
    pub gamma: Vec<f64>,
    pub t_end: f64,
    pub h: f64,
    pub observers: Vec<String>,
    pub snapshot_every: usize,
    pub with_unitary: bool,
    pub flow_poly: Vec<f64>,
    /// See [`EvolveOptions::project`].
    pub project: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            beta: 0.0,
            gamma: Vec::new(),
            t_end: 10.0,
            h: DEFAULT_STEP,
            observers: BUILTIN_OBSERVERS.iter().map(|s| s.to_string()).collect(),
            snapshot_every: 100,
            with_unitary: true,
            flow_poly: vec![1.0],
            project: true,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::Usage("h must be positive".into()));
        }
        if self.t_end == 0.0 || !self.t_end.is_finite() {
            return Err(Error::Usage("t_end must be finite and nonzero".into()));
        }
        if self.snapshot_every == 0 {
            return Err(Error::Usage("snapshot_every must be at least 1".into()));
        }
        if !self.beta.is_finite() {
            return Err(Error::Usage("beta must be finite".into()));
        }
        if self.flow_poly.iter().all(|&c| c == 0.0) {
            return Err(Error::Usage("flow_poly must be nonzero".into()));
        }
        if let Some(bad) = self
            .observers
            .iter()
            .find(|o| !BUILTIN_OBSERVERS.contains(&o.as_str()))
        {
            return Err(Error::Usage(format!("unknown observer '{bad}'")));
        }
        Ok(())
    }

    pub fn options(&self) -> EvolveOptions {
        EvolveOptions {
            h: self.h,
            snapshot_every: self.snapshot_every,
            flow_poly: self.flow_poly.clone(),
            project: self.project,
        }
    }
}
