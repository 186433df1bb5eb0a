//! End-to-end acceptance criteria. Every criterion prints one PASS/FAIL line
//! and then asserts. Expected values are computed here independently of the
//! library wherever a closed form or a brute-force search exists.

use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::io::Write;
use std::sync::OnceLock;

use diracflow::complex::{build_complex, Graph, OrientedComplex};
use diracflow::flow::{self, EvolveOptions, FlowState, Trajectory};
use diracflow::oracles;
use diracflow::spectral::{self, ConnesOptions, WaveSolution, ZetaSpec};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

type M = DMatrix<Complex64>;
type V = DVector<Complex64>;

const H: f64 = 1e-3;
const SNAP: usize = 50;
const T_END: f64 = 5.0;
const BETAS: [f64; 2] = [0.0, 1.0];

/// Writes around the test harness capture so the line always shows up.
fn verdict(n: u32, title: &str, ok: bool, detail: String) {
    let line = format!(
        "{} criterion {n:>2}: {title} | {detail}\n",
        if ok { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(ok, "criterion {n} failed: {detail}");
}

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn max_abs(m: &M) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

fn graphs() -> Vec<(&'static str, Graph)> {
    vec![
        ("K2", Graph::complete(2)),
        ("K3", Graph::complete(3)),
        ("C4", Graph::cycle(4)),
        ("S4", Graph::star(4)),
        ("G8", Graph::erdos_renyi(8, 0.5, 42)),
    ]
}

struct Run {
    graph: &'static str,
    complex: OrientedComplex,
    beta: f64,
    forward: Trajectory,
    backward: Trajectory,
}

/// Forward (with U) and backward runs on every test graph for both betas.
fn runs() -> &'static [Run] {
    static RUNS: OnceLock<Vec<Run>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let jobs: Vec<(&'static str, Graph, f64)> = graphs()
            .into_iter()
            .flat_map(|(n, g)| BETAS.iter().map(move |&b| (n, g.clone(), b)))
            .collect();
        jobs.into_par_iter()
            .map(|(name, g, beta)| {
                let complex = build_complex(&g).unwrap();
                let opts = EvolveOptions {
                    h: H,
                    snapshot_every: SNAP,
                    ..EvolveOptions::default()
                };
                let s = FlowState::initial(&complex, &[], beta, true).unwrap();
                let forward = flow::evolve_with(&s, T_END, &opts, &[]).unwrap();
                let s = FlowState::initial(&complex, &[], beta, false).unwrap();
                let backward = flow::evolve_with(&s, -T_END, &opts, &[]).unwrap();
                Run {
                    graph: name,
                    complex,
                    beta,
                    forward,
                    backward,
                }
            })
            .collect()
    })
}

fn eigenvalues(m: &M) -> Vec<f64> {
    let h = (m + m.adjoint()).scale(0.5);
    let mut v: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

fn k2_run(beta: f64, t_end: f64, every: usize) -> Trajectory {
    let k2 = build_complex(&Graph::complete(2)).unwrap();
    let s = FlowState::initial(&k2, &[], beta, false).unwrap();
    flow::evolve_with(
        &s,
        t_end,
        &EvolveOptions {
            h: H,
            snapshot_every: every,
            ..EvolveOptions::default()
        },
        &[],
    )
    .unwrap()
}

fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

#[test]
fn criterion_01_k2_closed_form() {
    let traj = k2_run(0.0, 3.0, 1);
    let mut worst: f64 = 0.0;
    for s in &traj.snapshots {
        let d = s.d.entries()[(2, 0)].norm();
        let b = s.b.entries()[(0, 0)].norm();
        let x = 8f64.sqrt() * s.t;
        worst = worst
            .max((d - sech(x)).abs())
            .max((b - x.tanh() / SQRT_2).abs());
    }
    verdict(
        1,
        "K2 (|d|,|b|) vs explicit solution on [0,3]",
        worst < 1e-8,
        format!("max error {worst:.3e} (tol 1e-8)"),
    );
}

#[test]
fn criterion_02_k2_printed_matrix_and_limits() {
    let one = k2_run(0.0, 1.0, 1000).last().dirac().into_entries();
    let printed = [((0, 0), 0.702191), ((2, 0), 0.117712), ((2, 2), 1.40438)];
    let entry_err = printed
        .iter()
        .map(|&(ij, v)| (one[ij].norm() - v).abs())
        .fold(0.0, f64::max);

    let vp = M::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 1.0, 0.0, 0.0, 0.0, -2.0].map(|x| c(x * FRAC_1_SQRT_2)));
    let vm = -vp.clone();
    let fwd = k2_run(0.0, 10.0, 10_000).last().dirac().into_entries();
    let bwd = k2_run(0.0, -10.0, 10_000).last().dirac().into_entries();
    let pair = (max_abs(&(&fwd - &vp)).max(max_abs(&(&bwd - &vm))))
        .min(max_abs(&(&fwd - &vm)).max(max_abs(&(&bwd - &vp))));
    verdict(
        2,
        "K2 D(1) entries match 0.702191/0.117712/1.40438, D(+-10) = {V+, V-}",
        entry_err < 5e-5 && pair < 1e-6,
        format!(
            "D(1) = ({:.6}, {:.6}, {:.6}), max entry error {entry_err:.3e} (tol 5e-5); limit error {pair:.3e} (tol 1e-6)",
            one[(0, 0)].norm(),
            one[(2, 0)].norm(),
            one[(2, 2)].norm()
        ),
    );
}

#[test]
fn criterion_03_isospectral_and_laplacian_constant() {
    let mut spec: f64 = 0.0;
    let mut lap: f64 = 0.0;
    let mut worst = String::new();
    for r in runs() {
        let d0 = r.forward.first().dirac().into_entries();
        let (e0, l0) = (eigenvalues(&d0), &d0 * &d0);
        for s in &r.forward.snapshots {
            let d = s.dirac().into_entries();
            let e = eigenvalues(&d);
            let ds = e.iter().zip(&e0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let dl = (&d * &d - &l0).norm();
            if ds.max(dl) > spec.max(lap) {
                worst = format!("{} beta={}", r.graph, r.beta);
            }
            spec = spec.max(ds);
            lap = lap.max(dl);
        }
    }
    verdict(
        3,
        "spectrum of D(t) and L(t) constant on t in [0,5]",
        spec < 1e-8 && lap < 1e-8,
        format!("spectrum drift {spec:.3e}, |L(t)-L(0)| {lap:.3e} (tol 1e-8, worst {worst})"),
    );
}

fn supertrace(m: &M, f: &[usize]) -> Complex64 {
    let mut start = 0;
    let mut acc = c(0.0);
    for (p, &n) in f.iter().enumerate() {
        let tr: Complex64 = (start..start + n).map(|i| m[(i, i)]).sum();
        acc += if p % 2 == 0 { tr } else { -tr };
        start += n;
    }
    acc
}

#[test]
fn criterion_04_mckean_singer() {
    let mut re_err: f64 = 0.0;
    let mut im_err: f64 = 0.0;
    for r in runs() {
        let f = r.complex.f_vector();
        let chi: i64 = f.iter().enumerate().map(|(p, &n)| if p % 2 == 0 { n as i64 } else { -(n as i64) }).sum();
        for s in &r.forward.snapshots {
            let u = s.unitary.as_ref().unwrap().entries();
            let st = supertrace(u, f);
            re_err = re_err.max((st.re - chi as f64).abs());
            if r.beta == 0.0 {
                let tr: Complex64 = u.diagonal().iter().sum();
                im_err = im_err.max(tr.im.abs());
            }
        }
    }
    verdict(
        4,
        "Re str U(t) = chi, Im tr U = 0 at beta = 0",
        re_err < 1e-6 && im_err < 1e-6,
        format!("|Re str U - chi| {re_err:.3e}, |Im tr U| {im_err:.3e} (tol 1e-6)"),
    );
}

#[test]
fn criterion_05_monotone_and_positive() {
    let mut mono: f64 = 0.0;
    let mut pos: f64 = 0.0;
    for r in runs() {
        let mut prev: Option<(f64, f64)> = None;
        for s in &r.forward.snapshots {
            let d = s.d.entries();
            let b = s.b.entries();
            let dd = d * d.adjoint();
            let ddt = d.adjoint() * d;
            let tr_b2 = (b * b).trace().re;
            let geo = d + d.adjoint();
            let tr_m = (&geo * &geo).trace().re;
            if let Some((pb, pm)) = prev {
                mono = mono.max(pb - tr_b2).max(tr_m - pm);
            }
            prev = Some((tr_b2, tr_m));
            let o = eigenvalues(&(b * &dd));
            let q = eigenvalues(&(b * &ddt));
            pos = pos.max(-o[0]).max(*q.last().unwrap());
        }
    }
    let end = k2_run(0.0, 10.0, 10_000);
    let geo = end.last().geometric().into_entries();
    let tr_m = (&geo * &geo).trace().re;
    let mono_ok = mono <= 1e-10;
    verdict(
        5,
        "tr b^2 up, tr M down, b dd* >= 0 >= b d*d, tr M(10) on K2",
        mono_ok && pos <= 1e-9 && tr_m < 1e-6,
        format!(
            "worst step violation {mono:.3e} (slack 1e-10), sign violation {pos:.3e} (tol 1e-9), tr M(10) {tr_m:.3e} (tol 1e-6)"
        ),
    );
}

#[test]
fn criterion_06_structural_identities() {
    let (mut anti, mut lax, mut rev): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for r in runs() {
        for (s, m) in r.forward.snapshots.iter().zip(&r.backward.snapshots) {
            assert!((s.t + m.t).abs() < 1e-9);
            let d = s.d.entries();
            let b = s.b.entries();
            let ds = d.adjoint();
            anti = anti
                .max(max_abs(&(d * b + b * d)))
                .max(max_abs(&(&ds * b + b * &ds)))
                .max(max_abs(&(d * d)));
            let dirac = d + &ds + b;
            if r.beta == 0.0 {
                let big_b = d - &ds;
                let comm = &big_b * &dirac - &dirac * &big_b;
                lax = lax.max(max_abs(&(comm - (&big_b * &dirac).scale(2.0))));
            }
            let back = m.dirac().into_entries();
            rev = rev.max(max_abs(&(&dirac + back - (d + &ds).scale(2.0))));
        }
    }
    verdict(
        6,
        "{d,b} = {d*,b} = d^2 = 0, [B,D] = 2BD, D(t)+D(-t) = 2C(t)",
        anti < 1e-9 && lax < 1e-9 && rev < 1e-8,
        format!("anticommutators {anti:.3e} (tol 1e-9), lax {lax:.3e} (tol 1e-9), reversal {rev:.3e} (tol 1e-8)"),
    );
}

/// `tr(b²)` and `b` sampled every step on K₂.
fn k2_dense(beta: f64, t_end: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let traj = k2_run(beta, t_end, 1);
    let ts = traj.times();
    let b: Vec<f64> = traj.snapshots.iter().map(|s| s.b.entries()[(0, 0)].re).collect();
    let tr: Vec<f64> = traj.snapshots.iter().map(|s| s.potential().trace().re).collect();
    (ts, b, tr)
}

fn second_difference(ys: &[f64], k: usize, h: f64) -> f64 {
    (ys[k + 1] - 2.0 * ys[k] + ys[k - 1]) / (h * h)
}

/// First index where `series` reaches `level` from below.
fn level_crossing(series: &[f64], level: f64) -> Option<usize> {
    series.windows(2).position(|w| w[0] <= level && level <= w[1])
}

#[test]
fn criterion_07_beta_time_change() {
    let (_, b0, tr0) = k2_dense(0.0, 1.5);
    let mut ratios = Vec::new();
    let mut worst: f64 = 0.0;
    for beta in [1.0, 2.0] {
        let (_, bb, trb) = k2_dense(beta, 1.5);
        for k in 1..=10 {
            let t = 0.1 * k as f64;
            let i = (t / H).round() as usize;
            let level = tr0[i];
            let Some(j) = level_crossing(&trb, level) else { continue };
            let j = if (trb[j + 1] - level).abs() < (trb[j] - level).abs() { j + 1 } else { j };
            if j == 0 || j + 1 >= bb.len() {
                continue;
            }
            let ratio = second_difference(&bb, j, H) / second_difference(&b0, i, H);
            worst = worst.max((ratio - (1.0 + beta * beta)).abs());
            ratios.push((beta, ratio));
        }
    }
    let far = |beta: f64| k2_run(beta, 20.0, 20_000).last().dirac().into_entries();
    let path = max_abs(&(far(0.0) - far(1.0)));
    let mean = |beta: f64| {
        let v: Vec<f64> = ratios.iter().filter(|r| r.0 == beta).map(|r| r.1).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    };
    verdict(
        7,
        "b'' ratio at matched tr b^2 equals 1+beta^2; D_0(20) = D_1(20)",
        !ratios.is_empty() && worst < 1e-4 && path < 1e-5,
        format!(
            "mean ratio beta=1 {:.6} (expect 2), beta=2 {:.6} (expect 5), worst deviation {worst:.3e} (tol 1e-4); |D_0(20)-D_1(20)| {path:.3e} (tol 1e-5)",
            mean(1.0),
            mean(2.0)
        ),
    );
}

/// Rank of `m` by singular values, or `None` when some value sits between
/// `1e-14` and `1e-12` and the split is not clean.
fn clean_rank(m: &M) -> Option<usize> {
    let sv = m.clone().singular_values();
    let mut rank = 0;
    for &s in sv.iter() {
        if s > 1e-12 {
            rank += 1;
        } else if s > 1e-14 {
            return None;
        }
    }
    Some(rank)
}

fn betti_of(s: &FlowState, f: &[usize]) -> Option<Vec<usize>> {
    let ranks: Vec<usize> = (0..f.len().saturating_sub(1))
        .map(|p| clean_rank(&s.d.block(p + 1, p)))
        .collect::<Option<_>>()?;
    Some(
        (0..f.len())
            .map(|p| {
                let out = ranks.get(p).copied().unwrap_or(0);
                let inc = if p == 0 { 0 } else { ranks[p - 1] };
                f[p] - out - inc
            })
            .collect(),
    )
}

/// Kernel dimensions of each block of `L(0)`.
fn kernel_dims(c: &OrientedComplex) -> Vec<usize> {
    let s = FlowState::initial(c, &[], 0.0, false).unwrap();
    let l = s.laplacian();
    (0..c.f_vector().len())
        .map(|p| eigenvalues(&l.block(p, p)).iter().filter(|&&x| x.abs() < 1e-8).count())
        .collect()
}

#[test]
fn criterion_08_cohomology() {
    let mut bad = Vec::new();
    let mut cocycle: f64 = 0.0;
    for r in runs() {
        let f = r.complex.f_vector();
        let reference = kernel_dims(&r.complex);
        for s in &r.forward.snapshots {
            match betti_of(s, f) {
                Some(b) if b == reference => {}
                other => bad.push(format!("{} beta={} t={:.2}: {other:?} vs {reference:?}", r.graph, r.beta, s.t)),
            }
        }
        // an exact cocycle d(0) g and, when present, a harmonic one
        let s0 = r.forward.first();
        let n = s0.grading().size();
        let g = V::from_fn(n, |i, _| c(((i * 7 + 3) % 5) as f64 - 2.0));
        let mut fs = vec![s0.d.entries() * &g];
        let e = s0.laplacian().into_entries().symmetric_eigen();
        if let Some(k) = (0..n).find(|&k| e.eigenvalues[k].abs() < 1e-8) {
            fs.push(e.eigenvectors.column(k).into_owned());
        }
        for f0 in fs {
            let norm = f0.norm();
            if norm < 1e-12 {
                continue;
            }
            let f0 = f0.unscale(norm);
            let moved = flow::transport_cocycle(&f0, &r.forward).unwrap();
            for (s, ft) in r.forward.snapshots.iter().zip(&moved) {
                cocycle = cocycle.max((s.d.entries() * ft).norm());
            }
        }
    }
    verdict(
        8,
        "Betti numbers from rank d(t) constant on [0,5], transported cocycles stay closed",
        bad.is_empty() && cocycle < 1e-7,
        format!(
            "{} rank mismatches{}; cocycle residual {cocycle:.3e} (tol 1e-7)",
            bad.len(),
            bad.first().map(|b| format!(" (first: {b})")).unwrap_or_default()
        ),
    );
}

#[test]
fn criterion_09_fermion_angle() {
    let traj = k2_run(0.0, 10.0, 10);
    let f = V::from_vec(vec![c(0.0), c(0.0), c(1.0)]);
    let angle = |s: &FlowState| {
        let g = s.dirac().into_entries() * &f;
        let even = (g[0].norm_sqr() + g[1].norm_sqr()).sqrt();
        (even / g.norm()).asin()
    };
    let ts = traj.times();
    let alpha: Vec<f64> = traj.snapshots.iter().map(angle).collect();
    let at = |t: f64| ts.iter().position(|&x| (x - t).abs() < 1e-9).unwrap();
    let start = (alpha[0] - PI / 2.0).abs();
    let decreasing = [0.2, 1.0, 5.0].iter().all(|&t| {
        let k = at(t);
        alpha[k + 1] < alpha[k] && alpha[k] < alpha[k - 1]
    });
    let end = *alpha.last().unwrap();
    let (xs, ys): (Vec<f64>, Vec<f64>) = ts
        .iter()
        .zip(&alpha)
        .filter(|(t, a)| **t >= 2.0 && **a > 0.0)
        .map(|(t, a)| (*t, a.ln()))
        .unzip();
    let r2 = r_squared(&xs, &ys);
    verdict(
        9,
        "fermion angle starts at pi/2, decreases, alpha(10) small, exponential tail",
        start < 1e-9 && decreasing && end < 1e-3 && r2 > 0.99,
        format!("|alpha(0)-pi/2| {start:.3e}, decreasing {decreasing}, alpha(10) {end:.3e}, tail R^2 {r2:.6}"),
    );
}

fn r_squared(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    sxy * sxy / (sxx * syy)
}

#[test]
fn criterion_10_circle_model() {
    let s0 = oracles::circle_model_init(4).unwrap();
    let run = oracles::circle_model_evolve(&s0, 10.0, H, 50).unwrap();
    let anti = run
        .samples
        .iter()
        .filter(|s| s.t <= 5.0 + 1e-9)
        .map(|s| s.anticommutator)
        .fold(0.0, f64::max);
    let blocks = run
        .samples
        .iter()
        .map(|s| s.block_b_drift.max(s.block_c_drift))
        .fold(0.0, f64::max);
    let last = &run.last;
    let norm_a = last.a.clone().singular_values().max();
    let target = M::from_diagonal(&V::from_iterator(9, (-4i32..=4).map(|n| c(n.abs() as f64))));
    let lim = max_abs(&(&last.b - &target))
        .max(max_abs(&(&last.c + &target)))
        .min(max_abs(&(&last.b + &target)).max(max_abs(&(&last.c - &target))));
    verdict(
        10,
        "circle model N=4: BA+AC = 0, A(10) -> 0, B(10) = +-diag|n|, blocks constant",
        anti < 1e-8 && norm_a < 1e-4 && lim < 1e-4 && blocks < 1e-7,
        format!("|BA+AC| {anti:.3e}, |A(10)| {norm_a:.3e}, limit error {lim:.3e}, block drift {blocks:.3e}"),
    );
}

/// Reduced K₃ system integrated here, independent of the library copy.
fn k3_local(mut y: [f64; 7], t_end: f64, h: f64, every: usize) -> Vec<[f64; 7]> {
    let f = |v: &[f64; 7]| -> [f64; 7] {
        let [b1, b2, b4, b5, b6, d1, d2] = *v;
        let (p, q) = (d1 * d1, d2 * d2);
        [
            -4.0 * p,
            2.0 * p,
            4.0 * p - 2.0 * q,
            2.0 * p + 2.0 * q,
            6.0 * q,
            d1 * (b1 - b2 - b4 - b5),
            d2 * (b4 - 2.0 * b5 - b6),
        ]
    };
    let steps = (t_end / h).round() as usize;
    let mut out = vec![y];
    for k in 1..=steps {
        let add = |a: &[f64; 7], b: &[f64; 7], s: f64| -> [f64; 7] { std::array::from_fn(|i| a[i] + s * b[i]) };
        let k1 = f(&y);
        let k2 = f(&add(&y, &k1, h / 2.0));
        let k3 = f(&add(&y, &k2, h / 2.0));
        let k4 = f(&add(&y, &k3, h));
        y = std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        if k % every == 0 {
            out.push(y);
        }
    }
    out
}

/// Reads the ansatz variables off a full K₃ state using the t = 0 pattern.
fn k3_read(s: &FlowState, d0: &M, gamma: [f64; 2]) -> [f64; 7] {
    let d = s.d.entries();
    let b = s.b.entries();
    let p = (d0.view((3, 0), (3, 3)) * d0.view((3, 0), (3, 3)).adjoint()).unscale(gamma[0] * gamma[0]);
    [
        b[(0, 0)].re,
        b[(0, 1)].re,
        b[(3, 3)].re,
        (b[(3, 4)] / p[(0, 1)]).re,
        b[(6, 6)].re,
        (d[(3, 0)] / d0[(3, 0)]).re * gamma[0],
        (d[(6, 3)] / d0[(6, 3)]).re * gamma[1],
    ]
}

#[test]
fn criterion_11_k3_reduction() {
    let k3 = build_complex(&Graph::complete(3)).unwrap();
    let mut worst: f64 = 0.0;
    let mut bumps = HashMap::new();
    for gamma in [[1.0, 1.0], [1.0, 10.0]] {
        let s0 = FlowState::initial(&k3, &gamma, 0.0, false).unwrap();
        let traj = flow::evolve_with(
            &s0,
            3.0,
            &EvolveOptions {
                h: H,
                snapshot_every: 5,
                ..EvolveOptions::default()
            },
            &[],
        )
        .unwrap();
        let d0 = s0.d.entries().clone();
        let reduced = k3_local([0.0, 0.0, 0.0, 0.0, 0.0, gamma[0], gamma[1]], 3.0, H, 5);
        assert_eq!(reduced.len(), traj.snapshots.len());
        for (s, v) in traj.snapshots.iter().zip(&reduced) {
            let w = k3_read(s, &d0, gamma);
            worst = w.iter().zip(v).fold(worst, |a, (x, y)| a.max((x - y).abs()));
        }
        let ts = traj.times();
        let tr: Vec<f64> = traj
            .snapshots
            .iter()
            .map(|s| {
                let g = s.geometric().into_entries();
                (&g * &g).trace().re
            })
            .collect();
        let rate = (1..tr.len() - 1)
            .map(|k| -(tr[k + 1] - tr[k - 1]) / (ts[k + 1] - ts[k - 1]))
            .fold(0.0, f64::max);
        bumps.insert(gamma[1] as i64, rate);
    }
    let (plain, scaled) = (bumps[&1], bumps[&10]);
    verdict(
        11,
        "K3 symmetric reduction matches full 7x7 flow; scaled d1 inflates more",
        worst < 1e-6 && scaled > plain,
        format!("max state difference {worst:.3e} (tol 1e-6); bump {plain:.4} unscaled vs {scaled:.4} scaled"),
    );
}

/// First derivative by the eighth-order central stencil.
fn stencil_derivative(f: impl Fn(f64) -> V, t: f64, h: f64) -> V {
    let w = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
    let mut acc = f(t).scale(0.0);
    for (k, wk) in w.iter().enumerate() {
        let s = (k + 1) as f64 * h;
        acc += (f(t + s) - f(t - s)).scale(*wk);
    }
    acc.unscale(h)
}

/// Largest `(u(x) - u(y)) / ‖[D, û]‖` over a fine circle of directions on K₂.
fn k2_brute_force(dirac: &M) -> f64 {
    (0..36_000)
        .map(|k| {
            let th = 2.0 * PI * k as f64 / 36_000.0;
            let (u1, u2) = (th.cos(), th.sin());
            let f = [u1, u2, 0.5 * (u1 + u2)];
            let comm = M::from_fn(3, 3, |i, j| dirac[(i, j)] * (f[j] - f[i]));
            (u1 - u2) / comm.singular_values().max()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn criterion_12_spectral_tools() {
    // zeta against the trace of the pseudo-inverse of L
    let k2 = build_complex(&Graph::complete(2)).unwrap();
    let d = FlowState::initial(&k2, &[], 0.0, false).unwrap().dirac();
    let z = spectral::dirac_zeta(&ZetaSpec::of_operator(&d), c(2.0)).unwrap();
    let pinv: f64 = eigenvalues(&(d.entries() * d.entries()))
        .iter()
        .filter(|&&x| x > 1e-8)
        .map(|x| 1.0 / x)
        .sum();
    let zeta_err = (z - c(1.0)).norm().max((z - c(pinv)).norm());

    // wave energy with the velocity taken from a finite-difference stencil
    let mut energy_drift: f64 = 0.0;
    for g in [Graph::cycle(4), Graph::erdos_renyi(8, 0.5, 42)] {
        let cx = build_complex(&g).unwrap();
        let l = FlowState::initial(&cx, &[], 0.0, false).unwrap().laplacian();
        let n = l.size();
        let u0 = V::from_fn(n, |i, _| c(((i * 5 + 1) % 7) as f64 / 7.0 - 0.4));
        let v0 = V::from_fn(n, |i, _| c(((i * 3 + 2) % 5) as f64 / 5.0 - 0.5));
        let sol = WaveSolution::new(&l, &u0, &v0, true).unwrap();
        let energy = |t: f64| {
            let u = sol.position(t);
            let v = stencil_derivative(|s| sol.position(s), t, 1e-2);
            v.norm_squared() + (u.adjoint() * l.entries() * &u)[(0, 0)].re
        };
        let e0 = energy(0.0);
        for k in 0..=100 {
            energy_drift = energy_drift.max((energy(0.1 * k as f64) - e0).abs());
        }
    }

    // Connes distance against the brute-force oracle and along the flow
    let brute = k2_brute_force(d.entries());
    let k2_distance = spectral::connes_distance(&d, &k2, 1, 2).unwrap();
    let dist_err = (k2_distance - brute).abs().max((brute - SQRT_2).abs());
    let mut monotone = true;
    let mut series = Vec::new();
    for g in [Graph::complete(2), Graph::cycle(4)] {
        let cx = build_complex(&g).unwrap();
        let s = FlowState::initial(&cx, &[], 0.0, false).unwrap();
        let traj = flow::evolve_with(
            &s,
            4.0,
            &EvolveOptions {
                h: H,
                snapshot_every: 500,
                ..EvolveOptions::default()
            },
            &[],
        )
        .unwrap();
        let labels = cx.vertex_labels();
        let values: Vec<f64> = [0.0, 0.5, 1.0, 2.0, 4.0]
            .iter()
            .map(|&t| {
                let st = traj.at(t);
                spectral::connes_distance_with(&st.geometric(), &cx, labels[0], labels[1], &ConnesOptions::default())
                    .unwrap()
                    .distance
            })
            .collect();
        monotone &= values.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-4));
        series.push(values);
    }
    verdict(
        12,
        "zeta(K2,2) = 1, wave energy conserved, Connes distance sqrt 2 and nondecreasing",
        zeta_err < 1e-12 && energy_drift < 1e-9 && dist_err < 1e-4 && monotone,
        format!(
            "zeta error {zeta_err:.3e}; energy drift {energy_drift:.3e}; distance {k2_distance:.6} vs brute force {brute:.6}; K2 {:.4?}, C4 {:.4?}",
            series[0], series[1]
        ),
    );
}
