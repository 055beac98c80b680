//! Path generators: fractional Brownian motion, symmetric stable Lévy
//! motion and deterministic test paths.
//!
//! Randomness comes from ChaCha20 seeded with `seed_from_u64(seed)`;
//! coordinate k draws from stream k (`set_stream(k)`), so adding a
//! coordinate never changes the others.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Exp1, StandardNormal};
use rustfft::{num_complex::Complex64, FftPlanner};

use crate::error::{invalid, Error, Result};
use crate::types::{EstimateReport, Interp, SampledPath};

/// Largest N for which a failed circulant embedding falls back to Cholesky.
pub const CHOLESKY_MAX_N: usize = 1 << 10;

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Fbm { hurst: f64 },
    StableLevy { alpha: f64 },
    Linear,
    Tent,
    /// sum of h_k 1_{[t_k, T]}
    Step { jumps: Vec<(f64, f64)> },
    PiecewiseLinear { breakpoints: Vec<f64>, values: Vec<f64> },
    /// sum_k a^k cos(lambda b^k t), truncated at the grid Nyquist frequency
    Weierstrass { a: f64, b: f64, lambda: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub family: Family,
    pub dim: usize,
    pub t_total: f64,
    pub n: usize,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(family: Family, t_total: f64, n: usize) -> Self {
        Self { family, dim: 1, t_total, n, seed: 0 }
    }
    pub fn dim(mut self, dim: usize) -> Self {
        self.dim = dim;
        self
    }
    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.n < 2 || !(self.t_total > 0.0) {
            return invalid("need dim >= 1, N >= 2, T > 0");
        }
        match &self.family {
            Family::Fbm { hurst } if !(*hurst > 0.0 && *hurst < 1.0) => invalid("fbm needs 0 < H < 1"),
            Family::StableLevy { alpha } if !(*alpha > 0.0 && *alpha <= 2.0) => {
                invalid("stable_levy needs 0 < alpha <= 2")
            }
            Family::PiecewiseLinear { breakpoints, values } => {
                if breakpoints.len() != values.len() || breakpoints.len() < 2 {
                    return invalid("piecewise_linear needs matching breakpoints/values, at least 2");
                }
                let ok = breakpoints.windows(2).all(|w| w[0] < w[1])
                    && breakpoints[0] >= 0.0
                    && *breakpoints.last().unwrap() <= self.t_total;
                if !ok {
                    return invalid("breakpoints must be strictly increasing within [0,T]");
                }
                Ok(())
            }
            Family::Weierstrass { a, b, lambda } if !(*a > 0.0 && *a < 1.0 && *b > 1.0 && *lambda > 0.0) => {
                invalid("weierstrass needs 0<a<1, b>1, lambda>0")
            }
            _ => Ok(()),
        }
    }
}

pub fn rng_for(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub fn generate(spec: &GeneratorSpec) -> Result<SampledPath> {
    spec.validate()?;
    let (n, d, t) = (spec.n, spec.dim, spec.t_total);
    let dt = t / n as f64;
    let coords: Vec<Vec<f64>> = match &spec.family {
        Family::Fbm { hurst } => (0..d)
            .map(|k| fbm_coordinate(*hurst, n, t, &mut rng_for(spec.seed, k as u64)))
            .collect::<Result<_>>()?,
        Family::StableLevy { alpha } => (0..d)
            .map(|k| stable_coordinate(*alpha, n, t, &mut rng_for(spec.seed, k as u64)))
            .collect(),
        fam => {
            let f = deterministic(fam, t, n);
            let c: Vec<f64> = (0..=n).map(|i| f(i as f64 * dt)).collect();
            vec![c; d]
        }
    };
    let interp = match spec.family {
        Family::StableLevy { .. } | Family::Step { .. } => Interp::Cadlag,
        _ => Interp::Linear,
    };
    let mut v = Vec::with_capacity((n + 1) * d);
    for i in 0..=n {
        for c in &coords {
            v.push(c[i]);
        }
    }
    SampledPath::new(d, t, v, interp)
}

fn deterministic(fam: &Family, t_total: f64, n: usize) -> Box<dyn Fn(f64) -> f64 + '_> {
    match fam {
        Family::Linear => Box::new(|t| t),
        Family::Tent => Box::new(move |t| (2.0 * t / t_total - 1.0).abs()),
        Family::Step { jumps } => Box::new(move |t| {
            jumps.iter().filter(|(tk, _)| t >= *tk - 1e-12 * t_total).map(|(_, h)| h).sum()
        }),
        Family::PiecewiseLinear { breakpoints, values } => Box::new(move |t| {
            let k = breakpoints.partition_point(|&b| b <= t);
            if k == 0 {
                values[0]
            } else if k == breakpoints.len() {
                *values.last().unwrap()
            } else {
                let (t0, t1) = (breakpoints[k - 1], breakpoints[k]);
                values[k - 1] + (values[k] - values[k - 1]) * (t - t0) / (t1 - t0)
            }
        }),
        Family::Weierstrass { a, b, lambda } => {
            let nyquist = std::f64::consts::PI * n as f64 / t_total;
            let mut freqs = vec![];
            let mut k = 0;
            while lambda * b.powi(k) <= nyquist {
                freqs.push((a.powi(k), lambda * b.powi(k)));
                k += 1;
            }
            Box::new(move |t| freqs.iter().map(|(amp, w)| amp * (w * t).cos()).sum())
        }
        Family::Fbm { .. } | Family::StableLevy { .. } => unreachable!(),
    }
}

/// Autocovariance of unit-step fractional Gaussian noise.
pub fn fgn_autocov(h: f64, k: usize) -> f64 {
    let k = k as f64;
    let e = 2.0 * h;
    0.5 * ((k + 1.0).powf(e) - 2.0 * k.powf(e) + (k - 1.0).abs().powf(e))
}

/// N samples of unit-step fractional Gaussian noise (Davies–Harte).
pub fn fgn(h: f64, n: usize, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let m = 2 * n;
    let mut row: Vec<Complex64> = Vec::with_capacity(m);
    for k in 0..=n {
        row.push(Complex64::new(fgn_autocov(h, k), 0.0));
    }
    for k in (1..n).rev() {
        row.push(Complex64::new(fgn_autocov(h, k), 0.0));
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(m);
    fft.process(&mut row);
    let lam_max = row.iter().map(|z| z.re).fold(0.0, f64::max);
    let lam_min = row.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    if lam_min < -1e-10 * lam_max {
        if n <= CHOLESKY_MAX_N {
            return fgn_cholesky(h, n, rng);
        }
        return Err(Error::Embedding(lam_min));
    }
    let lam: Vec<f64> = row.iter().map(|z| z.re.max(0.0)).collect();
    let mf = m as f64;
    let mut w = vec![Complex64::new(0.0, 0.0); m];
    w[0] = Complex64::new((lam[0] / mf).sqrt() * rng.sample::<f64, _>(StandardNormal), 0.0);
    for k in 1..n {
        let s = (lam[k] / (2.0 * mf)).sqrt();
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        w[k] = Complex64::new(s * z1, s * z2);
        w[m - k] = w[k].conj();
    }
    w[n] = Complex64::new((lam[n] / mf).sqrt() * rng.sample::<f64, _>(StandardNormal), 0.0);
    fft.process(&mut w);
    Ok(w[..n].iter().map(|z| z.re).collect())
}

fn fgn_cholesky(h: f64, n: usize, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let cov = DMatrix::from_fn(n, n, |i, j| fgn_autocov(h, i.abs_diff(j)));
    let l = cov.cholesky().ok_or(Error::Embedding(f64::NAN))?.l();
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let z = nalgebra::DVector::from_vec(z);
    Ok((l * z).iter().copied().collect())
}

fn fbm_coordinate(h: f64, n: usize, t: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let scale = (t / n as f64).powf(h);
    let inc = fgn(h, n, rng)?;
    Ok(cumsum(inc.iter().map(|x| x * scale)))
}

fn cumsum(inc: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out = vec![0.0];
    let mut s = 0.0;
    for x in inc {
        s += x;
        out.push(s);
    }
    out
}

/// Standard symmetric alpha-stable variate, characteristic function
/// exp(-|xi|^alpha) (Chambers–Mallows–Stuck).
pub fn cms_symmetric(alpha: f64, rng: &mut impl Rng) -> f64 {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let v = rng.random_range(-half_pi..half_pi);
    if (alpha - 1.0).abs() < 1e-12 {
        return v.tan();
    }
    let w: f64 = rng.sample(Exp1);
    (alpha * v).sin() / v.cos().powf(1.0 / alpha) * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
}

// Increments carry exp(-dt |xi|^alpha / 2): alpha = 2 is standard Brownian motion.
fn stable_coordinate(alpha: f64, n: usize, t: f64, rng: &mut impl Rng) -> Vec<f64> {
    let scale = (0.5 * t / n as f64).powf(1.0 / alpha);
    cumsum((0..n).map(|_| scale * cms_symmetric(alpha, rng)))
}

/// Slope of log max_i |X_{t_i+tau} - X_{t_i}| against log tau; `lags` in grid steps.
pub fn empirical_holder_exponent(path: &SampledPath, lags: &[usize]) -> Result<EstimateReport> {
    let mut lags: Vec<usize> = lags.to_vec();
    lags.sort_unstable();
    lags.dedup();
    let n = path.n_steps();
    if lags.len() < 3 || lags[0] == 0 || *lags.last().unwrap() > n {
        return invalid("need at least 3 distinct positive lags within the grid");
    }
    let d = path.dim();
    let mut xs = vec![];
    let mut ys = vec![];
    for &l in &lags {
        let mut m = 0.0f64;
        for i in 0..=n - l {
            let a = path.point(i);
            let b = path.point(i + l);
            let s: f64 = (0..d).map(|k| (b[k] - a[k]).powi(2)).sum();
            m = m.max(s);
        }
        if m == 0.0 {
            return Err(Error::DegeneratePath);
        }
        xs.push((l as f64 * path.dt()).ln());
        ys.push(0.5 * m.ln());
    }
    Ok(EstimateReport::new(ls_slope(&xs, &ys))
        .with("n_lags", lags.len() as f64)
        .with("dt", path.dt()))
}

pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
