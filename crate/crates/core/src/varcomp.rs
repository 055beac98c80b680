//! (s,p)-variability of a path with respect to a BV function, and the
//! composition φ∘X.

use rand::Rng;
use rayon::prelude::*;

use crate::bvfun::{BvFunction, GradientPotential};
use crate::error::{invalid, Error, Result};
use crate::pathgen::rng_for;
use crate::types::{euclid, fmt_f64, EstimateReport, SampledPath};

/// RNG stream reserved for pair sampling, disjoint from the generator streams.
pub const PAIR_STREAM: u64 = 0x7061_6972;

/// Successive refinement increments shrinking slower than this ratio count as growth.
pub const DIVERGENCE_RATIO: f64 = 0.9;
/// Growth must also add at least this fraction of the value at the last halving.
pub const MIN_RELATIVE_GROWTH: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct VariabilityProfile {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub s: f64,
    pub singular_hits: Vec<usize>,
    pub dt: f64,
}

impl VariabilityProfile {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,value,flag\n");
        let mut hits = self.singular_hits.iter().peekable();
        for (i, (t, v)) in self.times.iter().zip(&self.values).enumerate() {
            let flag = hits.next_if(|&&j| j == i).is_some();
            out.push_str(&format!("{},{},{}\n", fmt_f64(*t), fmt_f64(*v), flag as u8));
        }
        out
    }
}

/// t ↦ U^{1-s}‖Dφ‖(X_t) on the sample grid; `h` is the gradient measure resolution.
pub fn variability_profile(phi: &BvFunction, path: &SampledPath, s: f64, h: f64) -> Result<VariabilityProfile> {
    if phi.dim != path.dim() {
        return invalid("BV function and path dimensions differ");
    }
    if !(1.0 - s < phi.dim as f64) {
        return invalid("need 1 - s < n");
    }
    let gp = GradientPotential::new(phi, s, h)?;
    let rows: Vec<(f64, bool)> = (0..path.n_samples())
        .into_par_iter()
        .map(|i| {
            let x = path.point(i);
            let v = gp.at(x);
            (v, v.is_infinite() || phi.evaluate_representative(x).on_singular_set)
        })
        .collect();
    Ok(VariabilityProfile {
        times: (0..path.n_samples()).map(|i| path.time(i)).collect(),
        values: rows.iter().map(|r| r.0).collect(),
        s,
        singular_hits: rows.iter().enumerate().filter(|(_, r)| r.1).map(|(i, _)| i).collect(),
        dt: path.dt(),
    })
}

/// (Δt Σ v_i^p)^{1/p} over finite left-endpoint samples.
pub fn variability_norm(profile: &VariabilityProfile, p: f64) -> Result<EstimateReport> {
    if !(p >= 1.0) {
        return invalid("p must be >= 1");
    }
    let n = profile.values.len().saturating_sub(1);
    let finite: Vec<f64> = profile.values[..n].iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Ok(EstimateReport::infinite("all samples on the singular set").with("dt", profile.dt));
    }
    let sum: f64 = finite.iter().map(|v| v.powf(p)).sum();
    Ok(EstimateReport::new((profile.dt * sum).powf(1.0 / p))
        .with("dt", profile.dt)
        .with("singular_hits", profile.singular_hits.len() as f64))
}

/// Verdict over a sequence of paths with Δt halving at each step (coarsest
/// first, at least 3). Growth with non-contracting increments across the
/// sequence is reported as +∞.
pub fn variability_norm_refined(phi: &BvFunction, paths: &[SampledPath], s: f64, p: f64, h: f64) -> Result<EstimateReport> {
    if paths.len() < 3 {
        return invalid("need at least 3 refinement levels");
    }
    let mut vals = Vec::with_capacity(paths.len());
    for path in paths {
        let prof = variability_profile(phi, path, s, h)?;
        vals.push(variability_norm(&prof, p)?.value);
    }
    refinement_verdict(&vals, paths.last().unwrap().dt(), "not (s,p)-variable at this resolution")
}

/// Shared trend test: `vals` at successive halvings, coarsest first.
pub(crate) fn refinement_verdict(vals: &[f64], dt: f64, divergent_note: &str) -> Result<EstimateReport> {
    let last = *vals.last().unwrap();
    if !last.is_finite() {
        return Ok(EstimateReport::infinite(divergent_note).with("dt", dt));
    }
    let inc: Vec<f64> = vals.windows(2).map(|w| w[1] - w[0]).collect();
    let growing = inc.iter().all(|d| *d > 0.0)
        && inc.windows(2).all(|w| w[1] >= DIVERGENCE_RATIO * w[0])
        && inc.last().unwrap() / last > MIN_RELATIVE_GROWTH;
    let mut rep = if growing {
        EstimateReport::infinite(divergent_note).with("last_finite_value", last)
    } else {
        EstimateReport::new(last)
    };
    rep = rep.with("dt", dt).delta(inc.last().unwrap().abs());
    for (k, v) in vals.iter().enumerate() {
        rep = rep.with(&format!("level_{k}"), *v);
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    /// φ∘X as a 1-dimensional path; unbounded representatives are stored as f64::MAX
    pub path: SampledPath,
    pub flags: Vec<bool>,
    pub singular_fraction: f64,
}

impl Composition {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,value,flag\n");
        for (i, f) in self.flags.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", fmt_f64(self.path.time(i)), fmt_f64(self.path.x(i)), *f as u8));
        }
        out
    }

    /// Fraction of samples flagged while the path sits at `level` (within `tol`).
    pub fn singular_fraction_at(&self, source: &SampledPath, level: &[f64], tol: f64) -> f64 {
        let hits = (0..self.flags.len()).filter(|&i| self.flags[i] && euclid(source.point(i), level) <= tol).count();
        hits as f64 / self.flags.len() as f64
    }
}

pub fn compose(phi: &BvFunction, path: &SampledPath) -> Result<Composition> {
    if phi.dim != path.dim() {
        return invalid("BV function and path dimensions differ");
    }
    let reps: Vec<_> = (0..path.n_samples()).map(|i| phi.evaluate_representative(path.point(i))).collect();
    let values = reps.iter().map(|r| if r.value.is_finite() { r.value } else { f64::MAX.copysign(r.value) }).collect();
    let flags: Vec<bool> = reps.iter().map(|r| r.on_singular_set).collect();
    let hits = flags.iter().filter(|f| **f).count();
    Ok(Composition {
        path: path.with_values(1, values)?,
        singular_fraction: hits as f64 / flags.len() as f64,
        flags,
    })
}

/// max over sampled pairs of |φ(X_t)-φ(X_τ)| / (|X_t-X_τ|^s (U(X_t)+U(X_τ))).
pub fn pointwise_bound_ratio(
    phi: &BvFunction,
    path: &SampledPath,
    profile: &VariabilityProfile,
    pair_budget: usize,
    seed: u64,
) -> Result<EstimateReport> {
    if profile.values.len() != path.n_samples() {
        return invalid("profile does not match path");
    }
    let mut singular = vec![false; path.n_samples()];
    for &i in &profile.singular_hits {
        singular[i] = true;
    }
    let ok: Vec<usize> = (0..path.n_samples()).filter(|&i| !singular[i] && profile.values[i].is_finite()).collect();
    if ok.len() < 2 {
        return Err(Error::Invalid("no admissible pairs".into()));
    }
    let vals: Vec<f64> = (0..path.n_samples()).map(|i| phi.evaluate_representative(path.point(i)).value).collect();
    let mut rng = rng_for(seed, PAIR_STREAM);
    let (mut used, mut best) = (0usize, 0.0f64);
    for _ in 0..20 * pair_budget {
        if used == pair_budget {
            break;
        }
        let i = ok[rng.random_range(0..ok.len())];
        let j = ok[rng.random_range(0..ok.len())];
        let d = euclid(path.point(i), path.point(j));
        if d == 0.0 {
            continue;
        }
        used += 1;
        let lhs = (vals[i] - vals[j]).abs();
        if lhs == 0.0 {
            continue;
        }
        best = best.max(lhs / (d.powf(profile.s) * (profile.values[i] + profile.values[j])));
    }
    if used == 0 {
        return Err(Error::Invalid("no admissible pairs".into()));
    }
    Ok(EstimateReport::new(best).with("pairs", used as f64).with("dt", path.dt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bvfun::BvKind;
    use crate::pathgen::{generate, Family, GeneratorSpec};
    use crate::potential::riesz_const;
    use crate::types::Interp;

    fn linear(n: usize) -> SampledPath {
        SampledPath::from_fn(1.0, n, Interp::Linear, |t| t).unwrap()
    }

    fn ind() -> BvFunction {
        BvFunction::indicator(0.25, 0.75).unwrap()
    }

    // ∫_0^1 c|t-a|^{-1/2} dt summed over both jumps
    fn exact_p1() -> f64 {
        let c = riesz_const(0.5, 1);
        let one = |a: f64| 2.0 * c * (a.sqrt() + (1.0 - a).sqrt());
        one(0.25) + one(0.75)
    }

    #[test]
    fn profile_examples() {
        let p = variability_profile(&ind(), &linear(64), 0.5, 1e-3).unwrap();
        assert_eq!(p.singular_hits, vec![16, 48]);
        let c = riesz_const(0.5, 1);
        let t = p.times[3];
        assert!((p.values[3] - c * ((0.25 - t).powf(-0.5) + (0.75 - t).powf(-0.5))).abs() < 1e-14);
        let k = BvFunction::new(1, BvKind::Constant { value: 3.0 }).unwrap();
        assert!(variability_profile(&k, &linear(64), 0.5, 1e-3).unwrap().values.iter().all(|v| *v == 0.0));
        let stuck = SampledPath::from_fn(1.0, 64, Interp::Linear, |_| 0.25).unwrap();
        let ps = variability_profile(&ind(), &stuck, 0.5, 1e-3).unwrap();
        assert!(ps.values.iter().all(|v| v.is_infinite()) && ps.singular_hits.len() == 65);
        assert!(variability_norm(&ps, 1.0).unwrap().is_infinite());
    }

    #[test]
    fn norm_converges_for_p1_and_diverges_for_p3() {
        let paths: Vec<_> = (10..14).map(|k| linear(1 << k)).collect();
        let r1 = variability_norm_refined(&ind(), &paths, 0.5, 1.0, 1e-3).unwrap();
        assert!(!r1.is_infinite());
        assert!((r1.value / exact_p1() - 1.0).abs() < 0.02, "{} {}", r1.value, exact_p1());
        let r3 = variability_norm_refined(&ind(), &paths, 0.5, 3.0, 1e-3).unwrap();
        assert!(r3.is_infinite());
    }

    #[test]
    fn zero_profile_norm() {
        let k = BvFunction::new(1, BvKind::Constant { value: 1.0 }).unwrap();
        let p = variability_profile(&k, &linear(32), 0.5, 1e-3).unwrap();
        assert_eq!(variability_norm(&p, 2.0).unwrap().value, 0.0);
    }

    #[test]
    fn norm_monotone_in_p() {
        let p = variability_profile(&ind(), &linear(1000), 0.3, 1e-3).unwrap();
        let mut prev = 0.0;
        for q in [1.0, 1.2, 1.5, 2.0, 3.0] {
            let v = variability_norm(&p, q).unwrap().value;
            assert!(v >= prev * (1.0 - 1e-12));
            prev = v;
        }
    }

    #[test]
    fn compose_examples() {
        let c = compose(&ind(), &linear(8)).unwrap();
        assert_eq!(c.path.values(), &[0.0, 0.0, 0.5, 1.0, 1.0, 1.0, 0.5, 0.0, 0.0]);
        assert_eq!(c.flags.iter().filter(|f| **f).count(), 2);
        let k = BvFunction::new(1, BvKind::Constant { value: 2.5 }).unwrap();
        assert!(compose(&k, &linear(8)).unwrap().path.values().iter().all(|v| *v == 2.5));
        let c2 = compose(&ind().scaled(-3.0), &linear(8)).unwrap();
        for i in 0..9 {
            assert_eq!(c2.path.x(i), -3.0 * c.path.x(i));
            assert_eq!(c2.flags[i], c.flags[i]);
        }
        assert!(c.to_csv().starts_with("t,value,flag\n"));
    }

    #[test]
    fn clash_example_is_flagged() {
        let spec = GeneratorSpec::new(Family::Step { jumps: vec![(1.0, 1.0), (2.0, 1.0)] }, 3.0, 3000);
        let x = generate(&spec).unwrap();
        let phi = BvFunction::indicator(1.0, 2.0).unwrap();
        let c = compose(&phi, &x).unwrap();
        assert!((c.singular_fraction_at(&x, &[1.0], 0.0) - 1.0 / 3.0).abs() < 1e-3);
        assert!((c.singular_fraction - 2.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn singular_fraction_vanishes_under_refinement() {
        let mut prev = 1.0;
        for k in [6, 8, 10] {
            let f = compose(&ind(), &linear(1 << k)).unwrap().singular_fraction;
            assert!(f < prev);
            prev = f;
        }
        assert!(prev < 0.003);
    }

    #[test]
    fn pointwise_ratio_examples() {
        let x = linear(512);
        let k = BvFunction::new(1, BvKind::Constant { value: 1.0 }).unwrap();
        let pk = variability_profile(&k, &x, 0.5, 1e-3).unwrap();
        assert_eq!(pointwise_bound_ratio(&k, &x, &pk, 1000, 1).unwrap().value, 0.0);
        let p1 = variability_profile(&ind(), &x, 0.5, 1e-3).unwrap();
        let p2 = variability_profile(&ind().scaled(2.0), &x, 0.5, 1e-3).unwrap();
        let a = pointwise_bound_ratio(&ind(), &x, &p1, 1000, 1).unwrap().value;
        let b = pointwise_bound_ratio(&ind().scaled(2.0), &x, &p2, 1000, 1).unwrap().value;
        assert!(a > 0.0 && a == b);
        let stuck = SampledPath::from_fn(1.0, 64, Interp::Linear, |_| 0.25).unwrap();
        let ps = variability_profile(&ind(), &stuck, 0.5, 1e-3).unwrap();
        assert!(pointwise_bound_ratio(&ind(), &stuck, &ps, 10, 1).is_err());
    }

    #[test]
    fn pointwise_ratio_stable_on_fbm() {
        let spec = GeneratorSpec::new(Family::Fbm { hurst: 0.5 }, 1.0, 1 << 13).seed(11);
        let fine = generate(&spec).unwrap().map_values(|v| v + 0.5);
        let coarse = fine.decimate(2).unwrap();
        let r = |x: &SampledPath| {
            let p = variability_profile(&ind(), x, 0.5, 1e-3).unwrap();
            pointwise_bound_ratio(&ind(), x, &p, 10_000, 11).unwrap().value
        };
        let (a, b) = (r(&coarse), r(&fine));
        assert!(a.is_finite() && a > 0.0 && (b / a - 1.0).abs() < 0.2, "{a} {b}");
    }

    #[test]
    fn composition_lr_norm_stable() {
        // X_t = t is (0.5, 1)-variable; φ∘X bounded so every L^r norm is stable
        let norm = |n: usize| {
            let c = compose(&ind(), &linear(n)).unwrap();
            let v = c.path.values();
            (v[..n].iter().map(|x| x.abs().powi(2)).sum::<f64>() / n as f64).sqrt()
        };
        assert!((norm(1 << 12) - 0.5f64.sqrt()).abs() < 1e-3);
        assert!((norm(1 << 12) - norm(1 << 11)).abs() < 1e-3);
    }

    #[test]
    fn profile_csv_flags() {
        let p = variability_profile(&ind(), &linear(4), 0.5, 1e-3).unwrap();
        let csv = p.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[2].ends_with(",inf,1") && lines[1].ends_with(",0"));
    }
}
