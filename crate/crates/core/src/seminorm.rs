//! Gagliardo and Hölder seminorms on (0,T), Sobolev norms, the Gagliardo
//! embedding profiles and the composition key estimate.

use rand::Rng;
use rayon::prelude::*;

use crate::bvfun::BvFunction;
use crate::error::{invalid, Error, Result};
use crate::pathgen::rng_for;
use crate::types::{EstimateReport, SampledPath};
use crate::varcomp::{compose, refinement_verdict, variability_norm, variability_profile};

/// Largest N for which every lag band is summed exactly.
pub const EXACT_MAX_N: usize = 1 << 12;
/// Pairs drawn per sampled dyadic lag band.
pub const BAND_SAMPLES: usize = 1 << 16;
pub const SEMINORM_STREAM: u64 = 0x6761_676c;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeminormParams {
    pub theta: f64,
    /// f64::INFINITY selects the Hölder seminorm
    pub p: f64,
    /// smallest |t-τ| kept; None means one grid step at every refinement level
    pub diag_cut: Option<f64>,
    /// number of Δt-halving levels (coarsest decimated by 2^(levels-1))
    pub levels: usize,
    /// seed for band subsampling when N > EXACT_MAX_N
    pub seed: u64,
}

impl SeminormParams {
    pub fn new(theta: f64, p: f64) -> Result<Self> {
        let s = Self { theta, p, diag_cut: None, levels: 3, seed: 0 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return invalid("theta must lie in (0, 1)");
        }
        if !(self.p >= 1.0) {
            return invalid("p must be >= 1");
        }
        if self.levels == 0 {
            return invalid("need at least one level");
        }
        if let Some(c) = self.diag_cut {
            if !(c > 0.0) {
                return invalid("diag_cut must be positive");
            }
        }
        Ok(())
    }
}

fn diff_norm(path: &SampledPath, i: usize, j: usize) -> f64 {
    let (a, b) = (path.point(i), path.point(j));
    if a.len() == 1 {
        return (a[0] - b[0]).abs();
    }
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Δt² Σ_{i≠j, |i-j| ≥ cut} |f_i-f_j|^p / |t_i-t_j|^{1+θp} over left-endpoint
/// samples (p finite), or the max ratio over all samples (p = ∞). One grid, no refinement.
pub fn gagliardo_raw(f: &SampledPath, theta: f64, p: f64, cut_steps: usize, seed: u64) -> f64 {
    let n = f.n_steps();
    let dt = f.dt();
    let cut = cut_steps.max(1);
    if p.is_infinite() {
        let m = f.n_samples();
        return (cut..m)
            .into_par_iter()
            .map(|k| {
                let mut best = 0.0f64;
                for i in 0..m - k {
                    best = best.max(diff_norm(f, i, i + k));
                }
                best / (k as f64 * dt).powf(theta)
            })
            .collect::<Vec<f64>>()
            .into_iter()
            .fold(0.0, f64::max);
    }
    if cut >= n {
        return 0.0;
    }
    let expo = 1.0 + theta * p;
    let lag_sum = |k: usize| -> f64 {
        let s: f64 = (0..n - k).map(|i| diff_norm(f, i, i + k).powf(p)).sum();
        s / (k as f64 * dt).powf(expo)
    };
    // dyadic lag bands [2^b, 2^{b+1}) intersected with [cut, n)
    let mut bands = Vec::new();
    let mut lo = cut;
    while lo < n {
        let hi = ((lo + 1).next_power_of_two()).min(n).max(lo + 1);
        bands.push((lo, hi));
        lo = hi;
    }
    let sums: Vec<f64> = bands
        .par_iter()
        .enumerate()
        .map(|(b, &(lo, hi))| {
            let pairs: usize = (lo..hi).map(|k| n - k).sum();
            if n <= EXACT_MAX_N || pairs <= EXACT_MAX_N * EXACT_MAX_N {
                (lo..hi).map(lag_sum).sum::<f64>()
            } else {
                let mut rng = rng_for(seed ^ SEMINORM_STREAM, b as u64);
                let nk = (hi - lo) as f64;
                let mut acc = 0.0;
                for _ in 0..BAND_SAMPLES {
                    let k = rng.random_range(lo..hi);
                    let i = rng.random_range(0..n - k);
                    acc += (n - k) as f64 * diff_norm(f, i, i + k).powf(p) / (k as f64 * dt).powf(expo);
                }
                acc * nk / BAND_SAMPLES as f64
            }
        })
        .collect();
    2.0 * dt * dt * sums.iter().sum::<f64>()
}

fn refinement_levels(f: &SampledPath, levels: usize) -> Vec<SampledPath> {
    let mut out = vec![f.clone()];
    for _ in 1..levels {
        match out.last().unwrap().decimate(2) {
            Ok(c) => out.push(c),
            Err(_) => break,
        }
    }
    out.reverse();
    out
}

/// [f]_{θ,p} on (0,T) with the diagonal cut halved jointly with Δt.
pub fn gagliardo_seminorm(f: &SampledPath, params: &SeminormParams) -> Result<EstimateReport> {
    params.validate()?;
    let paths = refinement_levels(f, params.levels);
    let fine_dt = f.dt();
    let cut_steps = params.diag_cut.map(|c| (c / fine_dt).round().max(1.0) as usize).unwrap_or(1);
    let vals: Vec<f64> = paths
        .iter()
        .map(|g| {
            let raw = gagliardo_raw(g, params.theta, params.p, cut_steps, params.seed);
            if params.p.is_infinite() { raw } else { raw.powf(1.0 / params.p) }
        })
        .collect();
    let mut rep = if vals.len() >= 3 {
        refinement_verdict(&vals, fine_dt, "seminorm diverges under refinement")?
    } else {
        let r = EstimateReport::new(*vals.last().unwrap()).with("dt", fine_dt);
        if vals.len() == 2 { r.delta((vals[1] - vals[0]).abs()) } else { r }
    };
    rep = rep.with("diag_cut", cut_steps as f64 * fine_dt);
    if f.n_steps() > EXACT_MAX_N && params.p.is_finite() {
        rep = rep.note("stratified lag-band subsampling");
    }
    Ok(rep)
}

/// ‖f‖_{L^p} by a left-endpoint Riemann sum (max for p = ∞).
pub fn lp_norm(f: &SampledPath, p: f64) -> f64 {
    let n = f.n_steps();
    let zero = vec![0.0; f.dim()];
    if p.is_infinite() {
        return (0..f.n_samples()).map(|i| crate::types::euclid(f.point(i), &zero)).fold(0.0, f64::max);
    }
    let s: f64 = (0..n).map(|i| crate::types::euclid(f.point(i), &zero).powf(p)).sum();
    (f.dt() * s).powf(1.0 / p)
}

/// ‖f‖_{L^p} + [f]_{θ,p}.
pub fn sobolev_norm(f: &SampledPath, params: &SeminormParams) -> Result<EstimateReport> {
    let g = gagliardo_seminorm(f, params)?;
    let l = lp_norm(f, params.p);
    if g.is_infinite() {
        return Ok(EstimateReport { value: f64::INFINITY, ..g }.with("lp", l));
    }
    let l_coarse = f.decimate(2).map(|c| lp_norm(&c, params.p)).unwrap_or(l);
    let delta = (l - l_coarse).abs() + g.refinement_delta.unwrap_or(0.0);
    Ok(EstimateReport::new(l + g.value).with("lp", l).with("seminorm", g.value).with("dt", f.dt()).delta(delta))
}

/// Inner-integral profiles of the embedding lemma:
/// lhs_i = [Δt Σ_j |X_i-X_j|^p/|t_i-t_j|^{1+βp}]^{1/p}, rhs_i the same with (q, θ).
pub fn embedding_check(path: &SampledPath, theta: f64, q: f64, beta: f64, p: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(p >= 1.0 && q.is_finite()) || p > q || !(beta > 0.0) || beta >= theta || theta >= 1.0 {
        return Err(Error::Hypotheses("hypotheses violated: need 1 <= p <= q < inf and 0 < beta < theta < 1".into()));
    }
    let n = path.n_steps();
    let dt = path.dt();
    let rows: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (mut a, mut b) = (0.0, 0.0);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let d = diff_norm(path, i, j);
                let tau = (i as f64 - j as f64).abs() * dt;
                a += d.powf(p) / tau.powf(1.0 + beta * p);
                b += d.powf(q) / tau.powf(1.0 + theta * q);
            }
            ((dt * a).powf(1.0 / p), (dt * b).powf(1.0 / q))
        })
        .collect();
    Ok(rows.into_iter().unzip())
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyEstimate {
    /// [φ∘X]_{β,r}
    pub lhs: EstimateReport,
    /// [X]_{θ,q}^s · ‖U^{1-s}‖Dφ‖(X)‖_{L^p}
    pub rhs_product: EstimateReport,
    pub path_seminorm: f64,
    pub variability: f64,
}

impl KeyEstimate {
    pub fn ratio(&self) -> f64 {
        if self.lhs.value == 0.0 {
            0.0
        } else {
            self.lhs.value / self.rhs_product.value
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyParams {
    pub s: f64,
    pub theta: f64,
    pub p: f64,
    pub q: f64,
    pub beta: f64,
    pub r: f64,
    /// gradient measure resolution
    pub h: f64,
}

impl KeyParams {
    pub fn check(&self) -> Result<()> {
        let sq = if self.q.is_infinite() { 0.0 } else { self.s / self.q };
        if !(self.s > 0.0 && self.s < 1.0) || !(self.p >= 1.0 && self.q >= 1.0 && self.r >= 1.0) {
            return Err(Error::Hypotheses("need s in (0,1) and p, q, r >= 1".into()));
        }
        if 1.0 / self.p + sq > 1.0 / self.r + 1e-12 {
            return Err(Error::Hypotheses("need 1/p + s/q <= 1/r".into()));
        }
        if !(self.beta > 0.0 && self.beta < self.s * self.theta) {
            return Err(Error::Hypotheses("need 0 < beta < s*theta".into()));
        }
        SeminormParams::new(self.theta, self.q)?;
        Ok(())
    }
}

// The variability factor is a single-grid value, so a trend sentinel on one
// side is replaced by its finest-grid value and kept as a note.
fn grid_level(rep: EstimateReport) -> EstimateReport {
    match rep.get("last_finite_value") {
        Some(v) if rep.is_infinite() => EstimateReport { value: v, ..rep }.note("divergence trend at this resolution"),
        _ => rep,
    }
}

fn key_single(phi: &BvFunction, path: &SampledPath, kp: &KeyParams) -> Result<(EstimateReport, EstimateReport, f64, f64)> {
    let comp = compose(phi, path)?;
    let lhs = grid_level(gagliardo_seminorm(&comp.path, &SeminormParams::new(kp.beta, kp.r)?)?);
    let sx = grid_level(gagliardo_seminorm(path, &SeminormParams::new(kp.theta, kp.q)?)?);
    let prof = variability_profile(phi, path, kp.s, kp.h)?;
    let v = variability_norm(&prof, kp.p)?;
    let rhs = if sx.is_infinite() || v.is_infinite() {
        EstimateReport::infinite("right-hand factor diverges")
    } else {
        EstimateReport::new(sx.value.powf(kp.s) * v.value)
    };
    Ok((lhs, rhs, sx.value, v.value))
}

/// Both sides of the key estimate, each with a Δt-halving refinement delta.
pub fn key_estimate_report(phi: &BvFunction, path: &SampledPath, kp: &KeyParams) -> Result<KeyEstimate> {
    kp.check()?;
    let (lhs, rhs, sx, v) = key_single(phi, path, kp)?;
    let (lhs_c, rhs_c) = match path.decimate(2) {
        Ok(c) => {
            let (a, b, _, _) = key_single(phi, &c, kp)?;
            (a.value, b.value)
        }
        Err(_) => (lhs.value, rhs.value),
    };
    let dt = path.dt();
    Ok(KeyEstimate {
        lhs: EstimateReport { refinement_delta: Some((lhs.value - lhs_c).abs()), ..lhs }.with("coarse", lhs_c),
        rhs_product: EstimateReport { refinement_delta: Some((rhs.value - rhs_c).abs()), ..rhs }
            .with("dt", dt)
            .with("coarse", rhs_c),
        path_seminorm: sx,
        variability: v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bvfun::BvKind;
    use crate::pathgen::{empirical_holder_exponent, generate, Family, GeneratorSpec};
    use crate::types::Interp;
    use proptest::prelude::*;

    fn lin(n: usize) -> SampledPath {
        SampledPath::from_fn(1.0, n, Interp::Linear, |t| t).unwrap()
    }

    #[test]
    fn constant_is_zero() {
        let f = SampledPath::from_fn(1.0, 256, Interp::Linear, |_| 3.0).unwrap();
        for p in [1.0, 2.0, f64::INFINITY] {
            assert_eq!(gagliardo_seminorm(&f, &SeminormParams::new(0.5, p).unwrap()).unwrap().value, 0.0);
        }
    }

    #[test]
    fn linear_seminorm_is_one() {
        // 2/(((1-θ)p)((1-θ)p+1)) at θ=0.5, p=2
        let r = gagliardo_seminorm(&lin(1 << 11), &SeminormParams::new(0.5, 2.0).unwrap()).unwrap();
        assert!(!r.is_infinite());
        assert!((r.value - 1.0).abs() < 2e-3, "{}", r.value);
        let r3 = gagliardo_seminorm(&lin(1 << 10), &SeminormParams::new(0.3, 3.0).unwrap()).unwrap();
        let e: f64 = 2.0 / ((0.7 * 3.0) * (0.7 * 3.0 + 1.0));
        assert!((r3.value / e.powf(1.0 / 3.0) - 1.0).abs() < 5e-3);
    }

    #[test]
    fn step_diverges() {
        let f = SampledPath::from_fn(1.0, 1 << 10, Interp::Cadlag, |t| if t > 0.5 { 1.0 } else { 0.0 }).unwrap();
        let r = gagliardo_seminorm(&f, &SeminormParams::new(0.6, 2.0).unwrap()).unwrap();
        assert!(r.is_infinite());
        let ok = gagliardo_seminorm(&f, &SeminormParams::new(0.4, 2.0).unwrap()).unwrap();
        assert!(!ok.is_infinite());
    }

    #[test]
    fn holder_seminorm_linear_and_brownian() {
        let r = gagliardo_seminorm(&lin(512), &SeminormParams::new(0.5, f64::INFINITY).unwrap()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        let bm = generate(&GeneratorSpec::new(Family::Fbm { hurst: 0.5 }, 1.0, 1 << 12).seed(2)).unwrap();
        let r = gagliardo_seminorm(&bm, &SeminormParams::new(0.8, f64::INFINITY).unwrap()).unwrap();
        assert!(r.is_infinite());
    }

    #[test]
    fn subsampled_bands_agree_with_exact() {
        let bm = generate(&GeneratorSpec::new(Family::Fbm { hurst: 0.6 }, 1.0, 1 << 14).seed(4)).unwrap();
        let est = gagliardo_raw(&bm, 0.3, 2.0, 1, 9);
        let n = bm.n_steps();
        let dt = bm.dt();
        let exact: f64 = (1..n)
            .into_par_iter()
            .map(|k| (0..n - k).map(|i| (bm.x(i + k) - bm.x(i)).powi(2)).sum::<f64>() / (k as f64 * dt).powf(1.6))
            .collect::<Vec<_>>()
            .iter()
            .sum::<f64>()
            * 2.0
            * dt
            * dt;
        assert!((est / exact - 1.0).abs() < 0.02, "{est} {exact}");
        assert_eq!(est, gagliardo_raw(&bm, 0.3, 2.0, 1, 9));
    }

    #[test]
    fn sobolev_norm_examples() {
        let z = SampledPath::from_fn(1.0, 64, Interp::Linear, |_| 0.0).unwrap();
        assert_eq!(sobolev_norm(&z, &SeminormParams::new(0.5, 2.0).unwrap()).unwrap().value, 0.0);
        let one = SampledPath::from_fn(1.0, 64, Interp::Linear, |_| 1.0).unwrap();
        assert!((sobolev_norm(&one, &SeminormParams::new(0.3, 1.5).unwrap()).unwrap().value - 1.0).abs() < 1e-12);
        let r = sobolev_norm(&lin(1 << 11), &SeminormParams::new(0.5, 2.0).unwrap()).unwrap();
        assert!((r.value - (1.0 / 3.0f64.sqrt() + 1.0)).abs() < 3e-3);
    }

    #[test]
    fn embedding_examples() {
        let c = SampledPath::from_fn(1.0, 64, Interp::Linear, |_| 1.0).unwrap();
        let (a, b) = embedding_check(&c, 0.5, 2.0, 0.3, 2.0).unwrap();
        assert!(a.iter().chain(&b).all(|v| *v == 0.0));
        for t in [1.0, 2.0] {
            let x = SampledPath::from_fn(t, 512, Interp::Linear, |s| s).unwrap();
            let (a, b) = embedding_check(&x, 0.5, 2.0, 0.3, 2.0).unwrap();
            let bound = t.powf(0.2);
            assert!(a.iter().zip(&b).all(|(a, b)| a / b <= bound * (1.0 + 1e-12)));
        }
        assert!(matches!(embedding_check(&c, 0.5, 1.0, 0.3, 2.0), Err(Error::Hypotheses(_))));
        assert!(matches!(embedding_check(&c, 0.3, 2.0, 0.3, 2.0), Err(Error::Hypotheses(_))));
    }

    #[test]
    fn embedding_ratio_stable_on_fbm() {
        let max_ratio = |x: &SampledPath| {
            let (a, b) = embedding_check(x, 0.4, 2.0, 0.2, 1.0).unwrap();
            a.iter().zip(&b).map(|(a, b)| a / b).fold(0.0, f64::max)
        };
        let (mut lo, mut hi) = (0.0f64, 0.0f64);
        for seed in 0..20 {
            let fine = generate(&GeneratorSpec::new(Family::Fbm { hurst: 0.5 }, 1.0, 1 << 11).seed(seed)).unwrap();
            lo = lo.max(max_ratio(&fine.decimate(2).unwrap()));
            hi = hi.max(max_ratio(&fine));
        }
        assert!(lo.is_finite() && (hi / lo - 1.0).abs() < 0.2, "{lo} {hi}");
    }

    fn kp() -> KeyParams {
        KeyParams { s: 0.6, theta: 0.65, p: 2.0, q: f64::INFINITY, beta: 0.35, r: 2.0, h: 1e-3 }
    }

    #[test]
    fn key_estimate_examples() {
        let x = generate(&GeneratorSpec::new(Family::Fbm { hurst: 0.7 }, 1.0, 1 << 10).seed(3)).unwrap();
        let k = BvFunction::new(1, BvKind::Constant { value: 2.0 }).unwrap();
        let r = key_estimate_report(&k, &x, &kp()).unwrap();
        assert_eq!(r.lhs.value, 0.0);
        assert_eq!(r.ratio(), 0.0);
        let phi = BvFunction::indicator(-0.25, 0.25).unwrap();
        let a = key_estimate_report(&phi, &x, &kp()).unwrap();
        let b = key_estimate_report(&phi.scaled(3.0), &x, &kp()).unwrap();
        assert!((b.lhs.value / a.lhs.value / 3.0 - 1.0).abs() < 1e-10, "{:?} {:?}", a.lhs, b.lhs);
        assert!((b.rhs_product.value / a.rhs_product.value / 3.0 - 1.0).abs() < 1e-10);
        assert!(a.ratio().is_finite() && a.ratio() > 0.0);
        let bad = KeyParams { beta: 0.5, ..kp() };
        assert!(matches!(key_estimate_report(&phi, &x, &bad), Err(Error::Hypotheses(_))));
        let bad2 = KeyParams { p: 1.5, r: 2.0, ..kp() };
        assert!(matches!(key_estimate_report(&phi, &x, &bad2), Err(Error::Hypotheses(_))));
    }

    #[test]
    fn holder_monotone_in_theta_on_unit_interval() {
        let bm = generate(&GeneratorSpec::new(Family::Fbm { hurst: 0.5 }, 1.0, 256).seed(1)).unwrap();
        let mut prev = 0.0;
        for th in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let v = gagliardo_raw(&bm, th, f64::INFINITY, 1, 0);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn composition_holder_spot_test() {
        // smooth φ∘X with X smooth: exponent well above sθ - 1/p - s/q
        let x = SampledPath::from_fn(1.0, 4096, Interp::Linear, |t| (3.0 * t).sin()).unwrap();
        let phi = BvFunction::new(1, BvKind::SmoothBump { center: vec![0.3], radius: 0.5, amplitude: 1.0 }).unwrap();
        let c = compose(&phi, &x).unwrap();
        let e = empirical_holder_exponent(&c.path, &[1, 2, 4, 8, 16, 32]).unwrap();
        let (s, theta, p) = (0.5, 0.9, 4.0);
        assert!(e.value >= s * theta - 1.0 / p);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn triangle_inequality(a in proptest::collection::vec(-1.0f64..1.0, 65), b in proptest::collection::vec(-1.0f64..1.0, 65), th in 0.1f64..0.9, p in 1.0f64..4.0) {
            let fa = SampledPath::new(1, 1.0, a.clone(), Interp::Linear).unwrap();
            let fb = SampledPath::new(1, 1.0, b.clone(), Interp::Linear).unwrap();
            let fs = SampledPath::new(1, 1.0, a.iter().zip(&b).map(|(x, y)| x + y).collect(), Interp::Linear).unwrap();
            let g = |f: &SampledPath| gagliardo_raw(f, th, p, 1, 0).powf(1.0 / p);
            prop_assert!(g(&fs) <= (g(&fa) + g(&fb)) * (1.0 + 1e-12));
        }
    }
}
