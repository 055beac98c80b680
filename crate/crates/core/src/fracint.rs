//! Weyl–Marchaud derivatives, the Zähle generalized Stieltjes integral,
//! forward Riemann–Stieltjes sums and the Hardy-type boundary bound.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use statrs::function::gamma::gamma;

use crate::bvfun::BvFunction;
use crate::error::{invalid, Error, Result};
use crate::seminorm::{gagliardo_raw, lp_norm, sobolev_norm, SeminormParams};
use crate::types::{fmt_f64, EstimateReport, SampledPath};
use crate::varcomp::{compose, refinement_verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    LeftFrom0,
    RightFromT,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracDerivParams {
    pub alpha: f64,
    pub side: Side,
}

impl FracDerivParams {
    pub fn new(alpha: f64, side: Side) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return invalid("alpha must lie in (0, 1)");
        }
        Ok(Self { alpha, side })
    }
}

/// (-1)^z as e^{iπz}.
pub fn phase(z: f64) -> Complex64 {
    Complex64::from_polar(1.0, PI * z)
}

// Power tables (m dt)^{-a} and (m dt)^{1-a}, m = 0..=n.
struct Powers {
    neg: Vec<f64>,
    one_minus: Vec<f64>,
}

impl Powers {
    fn new(n: usize, dt: f64, a: f64) -> Self {
        let neg = (0..=n).map(|m| if m == 0 { 0.0 } else { (m as f64 * dt).powf(-a) }).collect();
        let one_minus = (0..=n).map(|m| (m as f64 * dt).powf(1.0 - a)).collect();
        Self { neg, one_minus }
    }
}

/// (v_k - v_0)/t_k^a + a ∫_0^{t_k} (v(t_k)-v(u))/(t_k-u)^{a+1} du with v the
/// piecewise-linear interpolant, each cell integrated exactly.
fn bracket(v: &[f64], dt: f64, a: f64, k: usize, pw: &Powers) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let vk = v[k];
    let mut acc = 0.0;
    for j in 0..k {
        let s = (v[j + 1] - v[j]) / dt;
        let (lo, hi) = (k - j - 1, k - j);
        let term_s = s * (pw.one_minus[hi] - pw.one_minus[lo]) / (1.0 - a);
        let term_a = if lo > 0 {
            let amp = vk - v[j + 1] - s * lo as f64 * dt;
            amp * (pw.neg[lo] - pw.neg[hi]) / a
        } else {
            0.0
        };
        acc += term_a + term_s;
    }
    (vk - v[0]) * pw.neg[k] + a * acc
}

fn scalar(path: &SampledPath) -> Result<Vec<f64>> {
    if path.dim() != 1 {
        return invalid("fractional derivatives need a one-dimensional path");
    }
    Ok(path.scalar_values())
}

/// D^α_{0+} f_0 at t_k (left) or D^{1-α}_{T-} g_T at t_k (right, carrying the
/// phase (-1)^{1-α}).
pub fn weyl_marchaud(f: &SampledPath, params: &FracDerivParams, k: usize) -> Result<Complex64> {
    let v = scalar(f)?;
    let n = f.n_steps();
    let a = params.alpha;
    match params.side {
        Side::LeftFrom0 => {
            if k == 0 || k > n {
                return invalid("left derivative needs t in (0, T]");
            }
            let pw = Powers::new(n, f.dt(), a);
            Ok(Complex64::new(bracket(&v, f.dt(), a, k, &pw) / gamma(1.0 - a), 0.0))
        }
        Side::RightFromT => {
            if k >= n {
                return invalid("right derivative needs t in [0, T)");
            }
            let rev: Vec<f64> = v.iter().rev().copied().collect();
            let b = 1.0 - a;
            let pw = Powers::new(n, f.dt(), b);
            Ok(phase(b) * (bracket(&rev, f.dt(), b, n - k, &pw) / gamma(a)))
        }
    }
}

/// Left profile Γ(1-α)^{-1}·bracket over k = 0..=N (entry 0 is 0).
pub fn left_profile(f: &SampledPath, alpha: f64) -> Result<Vec<f64>> {
    let v = scalar(f)?;
    let n = f.n_steps();
    let pw = Powers::new(n, f.dt(), alpha);
    let g = gamma(1.0 - alpha);
    Ok((0..=n).into_par_iter().map(|k| bracket(&v, f.dt(), alpha, k, &pw) / g).collect())
}

/// Real part of the right profile of order 1-α without its phase, k = 0..=N (entry N is 0).
pub fn right_profile(g: &SampledPath, alpha: f64) -> Result<Vec<f64>> {
    let v = scalar(g)?;
    let n = g.n_steps();
    let rev: Vec<f64> = v.iter().rev().copied().collect();
    let b = 1.0 - alpha;
    let pw = Powers::new(n, g.dt(), b);
    let gm = gamma(alpha);
    Ok((0..=n).into_par_iter().map(|k| bracket(&rev, g.dt(), b, n - k, &pw) / gm).collect())
}

fn zahle_single(f: &SampledPath, g: &SampledPath, alpha: f64, simplify: bool) -> Result<(f64, f64, f64)> {
    let (fv, gv) = (f.scalar_values(), g.scalar_values());
    let n = f.n_steps();
    let dt = f.dt();
    let l = left_profile(f, alpha)?;
    let r = right_profile(g, alpha)?;
    let inner: f64 = (1..n).map(|k| l[k] * r[k]).sum::<f64>() * dt;
    let mut total = phase(alpha) * phase(1.0 - alpha) * inner;
    if simplify {
        // f(0) t^{-α}/Γ(1-α) against the piecewise-linear right profile, exactly per cell
        let a = alpha;
        let mut acc = 0.0;
        for k in 0..n {
            let (t0, t1) = (k as f64 * dt, (k + 1) as f64 * dt);
            let slope = (r[k + 1] - r[k]) / dt;
            let c0 = r[k] - slope * t0;
            acc += c0 * (t1.powf(1.0 - a) - t0.powf(1.0 - a)) / (1.0 - a)
                + slope * (t1.powf(2.0 - a) - t0.powf(2.0 - a)) / (2.0 - a);
        }
        total += phase(alpha) * phase(1.0 - alpha) * (fv[0] / gamma(1.0 - a) * acc);
    } else {
        total += fv[0] * (gv[n] - gv[0]);
    }
    debug_assert!(total.im.abs() <= 1e-10 * total.norm().max(1e-300));
    let l1 = l.iter().take(n).map(|x| x.abs()).sum::<f64>() * dt;
    let r1 = r.iter().skip(1).map(|x| x.abs()).sum::<f64>() * dt;
    Ok((total.re, l1, r1))
}

/// ∫_0^T f dg in the generalized Stieltjes sense. Refinement delta from Δt
/// halving; +∞ when either Marchaud profile grows over three halvings.
pub fn zahle_integral(f: &SampledPath, g: &SampledPath, alpha: f64, simplify: bool) -> Result<EstimateReport> {
    FracDerivParams::new(alpha, Side::LeftFrom0)?;
    if f.n_steps() != g.n_steps() || f.duration() != g.duration() {
        return invalid("f and g must share the grid");
    }
    let mut levels = vec![(f.clone(), g.clone())];
    for _ in 0..2 {
        let (a, b) = levels.last().unwrap();
        match (a.decimate(2), b.decimate(2)) {
            (Ok(x), Ok(y)) => levels.push((x, y)),
            _ => break,
        }
    }
    levels.reverse();
    let mut vals = Vec::new();
    let (mut l1s, mut r1s) = (Vec::new(), Vec::new());
    for (a, b) in &levels {
        let (v, l1, r1) = zahle_single(a, b, alpha, simplify)?;
        vals.push(v);
        l1s.push(l1);
        r1s.push(r1);
    }
    let value = *vals.last().unwrap();
    let dt = f.dt();
    if levels.len() >= 3 {
        let note = "integral hypotheses violated at this alpha";
        if refinement_verdict(&l1s, dt, note)?.is_infinite() || refinement_verdict(&r1s, dt, note)?.is_infinite() {
            return Ok(EstimateReport::infinite(note).with("alpha", alpha).with("last_finite_value", value).with("dt", dt));
        }
    }
    let delta = if vals.len() >= 2 { (vals[vals.len() - 1] - vals[vals.len() - 2]).abs() } else { 0.0 };
    Ok(EstimateReport::new(value).with("alpha", alpha).with("dt", dt).delta(delta))
}

/// Σ f(t_{k-1}) (g(t_k) - g(t_{k-1})) over grid indices.
pub fn stieltjes_forward_sum(f: &SampledPath, g: &SampledPath, partition: &[usize]) -> Result<f64> {
    let n = f.n_steps();
    if g.n_steps() != n {
        return invalid("f and g must share the grid");
    }
    if partition.first() != Some(&0) || partition.last() != Some(&n) || partition.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("partition must increase from 0 to N");
    }
    Ok(partition.windows(2).map(|w| f.x(w[0]) * (g.x(w[1]) - g.x(w[0]))).sum())
}

/// Uniform partition with the given mesh in grid steps.
pub fn uniform_partition(n: usize, mesh: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).step_by(mesh.max(1)).collect();
    p.push(n);
    p
}

/// Samples next to a change of the integrand or on a flagged sample.
pub fn crossing_neighbourhood(f: &[f64], flags: &[bool]) -> Vec<bool> {
    let n = f.len();
    let mut bad = flags.to_vec();
    for i in 0..n - 1 {
        if f[i] != f[i + 1] {
            bad[i] = true;
            bad[i + 1] = true;
        }
    }
    bad
}

/// Uniform nominal points moved to the nearest sample outside `bad`, within
/// less than half a mesh; endpoints are kept.
pub fn crossing_avoiding_partition(bad: &[bool], mesh: usize) -> Vec<usize> {
    let n = bad.len() - 1;
    let mut out = vec![0];
    let reach = (mesh.saturating_sub(1) / 2) as isize;
    let mut j = mesh;
    while j < n {
        let mut pick = j;
        for off in 0..=reach {
            let cands = [j as isize - off, j as isize + off];
            if let Some(&c) = cands.iter().find(|&&c| c > 0 && (c as usize) < n && !bad[c as usize]) {
                pick = c as usize;
                break;
            }
        }
        if pick > *out.last().unwrap() {
            out.push(pick);
        }
        j += mesh;
    }
    out.push(n);
    out
}

/// Extremal forward sum over all partitions with gaps of at most `mesh` steps.
pub fn extremal_forward_sum(f: &SampledPath, g: &SampledPath, mesh: usize, maximize: bool) -> (f64, Vec<usize>) {
    let n = f.n_steps();
    let (fv, gv) = (f.scalar_values(), g.scalar_values());
    let sign = if maximize { 1.0 } else { -1.0 };
    let mut best = vec![f64::NEG_INFINITY; n + 1];
    let mut from = vec![0usize; n + 1];
    best[0] = 0.0;
    for k in 1..=n {
        for j in k.saturating_sub(mesh.max(1))..k {
            let v = best[j] + sign * fv[j] * (gv[k] - gv[j]);
            if v > best[k] {
                best[k] = v;
                from[k] = j;
            }
        }
    }
    let mut part = vec![n];
    while *part.last().unwrap() > 0 {
        part.push(from[*part.last().unwrap()]);
    }
    part.reverse();
    (sign * best[n], part)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositionIntegralReport {
    pub zahle: EstimateReport,
    pub meshes: Vec<usize>,
    pub avoiding: Vec<f64>,
    pub adversarial: Vec<f64>,
    pub tolerance: f64,
    pub converged: bool,
    pub spread: f64,
}

/// ∫ φ(X) dg: Zähle value, forward sums along crossing-avoiding refining
/// partitions, and alternating max/min partitions with the same meshes.
pub fn composition_integral(phi: &BvFunction, x: &SampledPath, g: &SampledPath, alpha: f64, meshes: &[usize]) -> Result<CompositionIntegralReport> {
    if meshes.len() < 2 || meshes.windows(2).any(|w| w[1] >= w[0]) {
        return invalid("meshes must strictly decrease, at least two");
    }
    let comp = compose(phi, x)?;
    let zahle = zahle_integral(&comp.path, g, alpha, false)?;
    let bad = crossing_neighbourhood(comp.path.values(), &comp.flags);
    let avoiding = meshes
        .iter()
        .map(|&m| stieltjes_forward_sum(&comp.path, g, &crossing_avoiding_partition(&bad, m)))
        .collect::<Result<Vec<_>>>()?;
    let adversarial: Vec<f64> = meshes
        .par_iter()
        .enumerate()
        .map(|(i, &m)| extremal_forward_sum(&comp.path, g, m, i % 2 == 0).0)
        .collect();
    let last_inc = (avoiding[avoiding.len() - 1] - avoiding[avoiding.len() - 2]).abs();
    let tolerance = 5.0 * (zahle.refinement_delta.unwrap_or(f64::INFINITY) + last_inc);
    let converged = !zahle.is_infinite() && (avoiding.last().unwrap() - zahle.value).abs() <= tolerance;
    let spread = adversarial.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b)) - adversarial.iter().fold(f64::INFINITY, |a, b| a.min(*b));
    Ok(CompositionIntegralReport { zahle, meshes: meshes.to_vec(), avoiding, adversarial, tolerance, converged, spread })
}

/// (∫ |f-f(0)|^p t^{-βp} dt, [f_0]_{β,p}^p + ‖f_0‖_{L^p}^p).
pub fn hardy_bound_report(f: &SampledPath, beta: f64, p: f64) -> Result<(f64, f64)> {
    if !(beta > 0.0 && beta < 1.0 && p >= 1.0 && p.is_finite()) {
        return invalid("need beta in (0,1) and finite p >= 1");
    }
    if (beta * p - 1.0).abs() < 1e-12 {
        return Err(Error::ExcludedExponent);
    }
    let f0 = f.map_values(|v| v);
    let base = f.point(0).to_vec();
    let vals: Vec<f64> = (0..f.n_samples())
        .flat_map(|i| f.point(i).iter().zip(&base).map(|(a, b)| a - b).collect::<Vec<_>>())
        .collect();
    let f0 = f0.with_values(f.dim(), vals)?;
    let dt = f.dt();
    let zero = vec![0.0; f.dim()];
    let lhs: f64 = (1..=f.n_steps())
        .map(|k| crate::types::euclid(f0.point(k), &zero).powf(p) / (k as f64 * dt).powf(beta * p))
        .sum::<f64>()
        * dt;
    let rhs = gagliardo_raw(&f0, beta, p, 1, 0) + lp_norm(&f0, p).powf(p);
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExistenceVerdict {
    pub case_id: String,
    pub hypothesis_pass: bool,
    /// "direct" (1/p+1/q <= 1) or "exponent-adjusted" (1 < 1/p+1/q < γ+δ)
    pub branch: String,
    pub alpha: f64,
    pub integral: EstimateReport,
    pub ratio: f64,
}

impl ExistenceVerdict {
    pub const CSV_HEADER: &'static str = "case_id,hypothesis_pass,integral,ratio,refinement_delta";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.case_id,
            self.hypothesis_pass,
            fmt_f64(self.integral.value),
            fmt_f64(self.ratio),
            fmt_f64(self.integral.refinement_delta.unwrap_or(f64::NAN))
        )
    }
}

const ALPHA_MARGIN: f64 = 0.02;

pub fn zahle_existence_check(
    case_id: &str,
    f: &SampledPath,
    g: &SampledPath,
    gamma_f: f64,
    p: f64,
    delta: f64,
    q: f64,
) -> Result<ExistenceVerdict> {
    let inv = |x: f64| if x.is_infinite() { 0.0 } else { 1.0 / x };
    let sum_inv = inv(p) + inv(q);
    let mut pass = gamma_f + delta > 1.0 && sum_inv < gamma_f + delta;
    let (mut gf, mut pf) = (gamma_f, p);
    let branch = if sum_inv <= 1.0 {
        "direct"
    } else {
        // embed W^{γ,p} into W^{γ',p'} with 1/p' = 1 - 1/q
        pf = 1.0 / (1.0 - inv(q));
        gf = gamma_f - inv(p) + inv(pf);
        pass = pass && gf > 0.0 && gf + delta > 1.0;
        "exponent-adjusted"
    };
    let (lo, hi) = (1.0 - delta + ALPHA_MARGIN, gamma_f - ALPHA_MARGIN);
    let alpha = if lo < hi { 0.5 * (lo + hi) } else { (0.5 * (1.0 - delta + gamma_f)).clamp(ALPHA_MARGIN, 1.0 - ALPHA_MARGIN) };
    let integral = zahle_integral(f, g, alpha, false)?;
    let n = f.n_steps();
    let (f0v, g0v) = (f.scalar_values(), g.scalar_values());
    let f0 = f.with_values(1, f0v.iter().map(|v| v - f0v[0]).collect())?;
    let gt = g.with_values(1, g0v.iter().map(|v| v - g0v[n]).collect())?;
    let nf = sobolev_norm(&f0, &SeminormParams::new(gf.clamp(1e-3, 0.999), pf)?)?;
    let ng = sobolev_norm(&gt, &SeminormParams::new(delta, q)?)?;
    let boundary = f0v[0] * (g0v[n] - g0v[0]);
    let num = (integral.value - boundary).abs();
    let ratio = if num == 0.0 { 0.0 } else { num / (nf.value * ng.value) };
    Ok(ExistenceVerdict { case_id: case_id.into(), hypothesis_pass: pass, branch: branch.into(), alpha, integral, ratio })
}
