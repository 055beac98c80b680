//! Fourier side of occupation measures: weighted Fourier norms, Berman
//! ratios, τ/σ functionals, limiting p-variation, greedy packings and
//! occupation index estimates.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::occupation::occupation_range;
use crate::pathgen::{ls_slope, rng_for};
use crate::potential::{negative_sobolev_norm, EnergyGrid, POINT_MASS_FRACTION};
use crate::types::{euclid, fmt_f64, path_diameter, DiscreteMeasure, EstimateReport, SampledPath, TimeWindow};

pub const WINDOW_STREAM: u64 = 0x7769_6e64;

/// Fitted κ in sum ~ mesh^{-κ} above which p-variation is declared infinite.
pub const GROWTH_EXPONENT: f64 = 0.1;

/// Radial nodes times directions. Directions cover a half sphere; the other
/// half is accounted for by the weights since |μ̂(−ξ)| = |μ̂(ξ)|.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierGrid {
    dim: usize,
    radial_nodes: Vec<f64>,
    directions: Vec<Vec<f64>>,
    direction_weights: Vec<f64>,
}

impl FourierGrid {
    pub fn new(dim: usize, radial_nodes: Vec<f64>, n_angles: usize) -> Result<Self> {
        if radial_nodes.len() < 2 || !(radial_nodes[0] > 0.0) || radial_nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("radial nodes must be positive and strictly increasing");
        }
        if radial_nodes.iter().any(|r| !r.is_finite()) {
            return invalid("radial nodes must be finite");
        }
        let (directions, direction_weights) = match dim {
            1 => (vec![vec![1.0]], vec![2.0]),
            2 => {
                if n_angles < 4 {
                    return invalid("need at least 4 angles");
                }
                let m = n_angles as f64;
                let dirs = (0..n_angles)
                    .map(|k| {
                        let th = PI * (k as f64 + 0.5) / m;
                        vec![th.cos(), th.sin()]
                    })
                    .collect();
                (dirs, vec![2.0 * PI / m; n_angles])
            }
            _ => return invalid("Fourier quadrature implemented for n <= 2"),
        };
        Ok(Self { dim, radial_nodes, directions, direction_weights })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn radial_nodes(&self) -> &[f64] {
        &self.radial_nodes
    }
    pub fn xi_min(&self) -> f64 {
        self.radial_nodes[0]
    }
    pub fn truncation(&self) -> f64 {
        *self.radial_nodes.last().unwrap()
    }
    pub fn n_directions(&self) -> usize {
        self.directions.len()
    }
}

/// Recipe for grids adapted to a measure: log-spaced nodes from
/// `head / extent` until the spacing reaches 2π/(extent·per_period), then
/// uniform up to `resolution_fraction·π / resolution`. The energy fields
/// set the grid of the dual (potential) route.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRule {
    pub per_decade: usize,
    pub per_period: usize,
    pub head: f64,
    pub resolution_fraction: f64,
    pub max_nodes: usize,
    pub n_angles: usize,
    pub energy_cells_per_width: f64,
    pub energy_max_points: usize,
}

impl Default for GridRule {
    fn default() -> Self {
        Self {
            per_decade: 32,
            per_period: 16,
            head: 1e-3,
            resolution_fraction: 0.25,
            max_nodes: 1 << 14,
            n_angles: 32,
            energy_cells_per_width: 1.0,
            energy_max_points: 1 << 12,
        }
    }
}

impl GridRule {
    pub fn build(&self, dim: usize, extent: f64, resolution: f64) -> Result<FourierGrid> {
        if !(resolution > 0.0 && resolution.is_finite() && extent.is_finite()) || self.per_decade < 2 {
            return invalid("grid rule needs a positive resolution");
        }
        let d = extent.max(resolution);
        let xi_min = self.head / d;
        let step = 2.0 * PI / (d * self.per_period as f64);
        let xi_max = (self.resolution_fraction * PI / resolution).max(100.0 * xi_min);
        let q = 10f64.powf(1.0 / self.per_decade as f64);
        let mut nodes = vec![xi_min];
        let mut r = xi_min;
        while nodes.len() < self.max_nodes {
            r = if r * (q - 1.0) < step { r * q } else { r + step };
            if r > xi_max {
                break;
            }
            nodes.push(r);
        }
        FourierGrid::new(dim, nodes, self.n_angles)
    }

    pub fn for_measure(&self, m: &DiscreteMeasure) -> Result<FourierGrid> {
        self.build(m.dim(), measure_extent(m), m.cell_width())
    }

    pub fn energy_grid(&self, m: &DiscreteMeasure) -> EnergyGrid {
        EnergyGrid::auto(m, self.energy_cells_per_width, self.energy_max_points)
    }
}

fn measure_extent(m: &DiscreteMeasure) -> f64 {
    m.bbox().map(|(lo, hi)| euclid(&lo, &hi)).unwrap_or(0.0)
}

fn is_point_mass(m: &DiscreteMeasure) -> bool {
    m.len() == 1 || measure_extent(m) == 0.0 || m.atomic_fraction() > POINT_MASS_FRACTION
}

/// (2π)^{-n/2} Σ w e^{-iξ·x}.
pub fn measure_fourier(m: &DiscreteMeasure, xi: &[f64]) -> Complex64 {
    let norm = (2.0 * PI).powf(-(m.dim() as f64) / 2.0);
    let mut s = Complex64::new(0.0, 0.0);
    for i in 0..m.len() {
        let ph: f64 = m.atom(i).iter().zip(xi).map(|(x, k)| x * k).sum();
        let (sn, cs) = ph.sin_cos();
        s += m.weight(i) * Complex64::new(cs, -sn);
    }
    norm * s
}

/// |μ̂| sampled on a grid; independent of the weight exponent, so one
/// spectrum serves a whole α sweep.
#[derive(Debug, Clone)]
pub struct Spectrum {
    grid: FourierGrid,
    /// |μ̂| per direction, per radial node
    moduli: Vec<Vec<f64>>,
    at_zero: f64,
    point_mass: bool,
    zero: bool,
}

impl Spectrum {
    pub fn compute(m: &DiscreteMeasure, grid: &FourierGrid) -> Result<Self> {
        if m.dim() != grid.dim {
            return invalid("grid dimension mismatch");
        }
        let norm = (2.0 * PI).powf(-(m.dim() as f64) / 2.0);
        let zero = m.is_empty() || m.mass() == 0.0;
        // centring does not change |μ̂| and keeps phases small
        let centre: Vec<f64> = m
            .bbox()
            .map(|(lo, hi)| lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect())
            .unwrap_or_else(|| vec![0.0; m.dim()]);
        let moduli = grid
            .directions
            .iter()
            .map(|dir| {
                let proj: Vec<(f64, f64)> = (0..m.len())
                    .map(|i| {
                        let s: f64 = m.atom(i).iter().zip(&centre).zip(dir).map(|((x, c), d)| (x - c) * d).sum();
                        (s, m.weight(i))
                    })
                    .collect();
                grid.radial_nodes
                    .par_iter()
                    .map(|&r| {
                        let (mut re, mut im) = (0.0, 0.0);
                        for &(s, w) in &proj {
                            let (sn, cs) = (r * s).sin_cos();
                            re += w * cs;
                            im -= w * sn;
                        }
                        norm * re.hypot(im)
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            grid: grid.clone(),
            moduli,
            at_zero: norm * m.mass(),
            point_mass: !zero && is_point_mass(m),
            zero,
        })
    }

    pub fn grid(&self) -> &FourierGrid {
        &self.grid
    }

    /// ‖|ξ|^α μ̂‖_{L^p}. Finite p: head below ξ_min from |μ̂(0)|, trapezoid
    /// over the radial nodes, tail beyond the truncation reported separately.
    pub fn weighted_norm(&self, alpha: f64, p: f64) -> Result<EstimateReport> {
        if !(p > 1.0) {
            return invalid("need 1 < p <= inf");
        }
        let g = &self.grid;
        let n = g.dim as f64;
        let base = EstimateReport::new(0.0).with("xi_max", g.truncation()).with("nodes", g.radial_nodes.len() as f64);
        if self.zero {
            return Ok(base);
        }
        let infinite = |note: &str| {
            let mut r = EstimateReport::infinite(note);
            r.resolution = base.resolution.clone();
            r
        };
        if p.is_infinite() {
            if alpha < 0.0 {
                return Ok(infinite("|xi|^alpha unbounded at the origin"));
            }
            if self.point_mass && alpha > 0.0 {
                return Ok(infinite("point mass: |xi|^alpha mu-hat unbounded"));
            }
            let mut best = if alpha == 0.0 { self.at_zero } else { 0.0 };
            for row in &self.moduli {
                for (r, v) in g.radial_nodes.iter().zip(row) {
                    best = best.max(r.powf(alpha) * v);
                }
            }
            return Ok(EstimateReport { value: best, ..base });
        }
        let e = alpha * p + n;
        if e <= 0.0 {
            return Ok(infinite("|xi|^(alpha p) not integrable at the origin"));
        }
        if self.point_mass {
            return Ok(infinite("point mass: mu-hat does not decay"));
        }
        let r = &g.radial_nodes;
        // shell integrand G(r) = Σ_dir w r^{αp+n-1} |μ̂(rθ)|^p
        let shell: Vec<f64> = (0..r.len())
            .map(|k| {
                let rk = r[k].powf(e - 1.0);
                self.moduli.iter().zip(&g.direction_weights).map(|(row, w)| w * rk * row[k].powf(p)).sum()
            })
            .collect();
        let wsum: f64 = g.direction_weights.iter().sum();
        let head = wsum * self.at_zero.powf(p) * r[0].powf(e) / e;
        let fine = head + trapezoid(r, &shell, 1);
        let coarse = head + trapezoid(r, &shell, 2);
        let tail = tail_estimate(r, &shell);
        let value = fine.powf(1.0 / p);
        Ok(EstimateReport {
            value,
            refinement_delta: Some((value - coarse.powf(1.0 / p)).abs()),
            // |μ̂| ≤ (2π)^{-n/2}·mass bounds the tail by ∫ r^{αp+n-1} dr = ∞ here
            upper_bound: Some(f64::INFINITY),
            ..base
        }
        .with("tail_estimate", tail / fine))
    }
}

/// Trapezoid over every `stride`-th node (the last node always included).
fn trapezoid(r: &[f64], f: &[f64], stride: usize) -> f64 {
    let mut idx: Vec<usize> = (0..r.len()).step_by(stride).collect();
    if *idx.last().unwrap() != r.len() - 1 {
        idx.push(r.len() - 1);
    }
    idx.windows(2).map(|w| 0.5 * (f[w[0]] + f[w[1]]) * (r[w[1]] - r[w[0]])).sum()
}

/// Power-law extrapolation of the shell integrand past the last node, fitted
/// on bin averages over the upper half of the nodes; +∞ without decay.
fn tail_estimate(r: &[f64], shell: &[f64]) -> f64 {
    let half = r.len() / 2;
    let bins = 8.min(r.len() - half);
    if bins < 3 {
        return f64::INFINITY;
    }
    let len = (r.len() - half) / bins;
    let (mut lx, mut ly) = (vec![], vec![]);
    for b in 0..bins {
        let s = half + b * len;
        let avg = shell[s..s + len].iter().sum::<f64>() / len as f64;
        if avg > 0.0 {
            lx.push(r[s + len / 2].ln());
            ly.push(avg.ln());
        }
    }
    if lx.len() < 3 {
        return 0.0;
    }
    let slope = ls_slope(&lx, &ly);
    if slope >= -1.0 {
        return f64::INFINITY;
    }
    let icpt = ly.iter().sum::<f64>() / ly.len() as f64 - slope * lx.iter().sum::<f64>() / lx.len() as f64;
    let rmax = *r.last().unwrap();
    (icpt + slope * rmax.ln()).exp() * rmax / (-slope - 1.0)
}

/// ‖|ξ|^α μ̂‖_{L^p} on the given grid.
pub fn fourier_weighted_norm(m: &DiscreteMeasure, alpha: f64, p: f64, grid: &FourierGrid) -> Result<EstimateReport> {
    Spectrum::compute(m, grid)?.weighted_norm(alpha, p)
}

fn admissible(n: usize, alpha: f64, p: f64) -> bool {
    let n = n as f64;
    p > 1.0 && alpha > -n / p && alpha < n - n / p
}

fn window_resolution(path: &SampledPath, i0: usize, i1: usize, m: &DiscreteMeasure) -> f64 {
    let mut inc: Vec<f64> = (i0..i1).map(|i| euclid(path.point(i), path.point(i + 1))).filter(|d| *d > 0.0).collect();
    if inc.is_empty() {
        return m.cell_width();
    }
    inc.sort_by(f64::total_cmp);
    inc[inc.len() / 2].max(m.cell_width())
}

/// Occupation measure of a window with its range diameter and a grid.
struct WindowData {
    measure: DiscreteMeasure,
    diam: f64,
    grid: FourierGrid,
}

fn window_data(path: &SampledPath, i0: usize, i1: usize, rule: &GridRule) -> Result<WindowData> {
    let measure = occupation_range(path, i0, i1);
    let d = path.dim();
    let sub = SampledPath::new(d, path.dt() * (i1 - i0) as f64, path.values()[i0 * d..(i1 + 1) * d].to_vec(), path.interp())?;
    let diam = path_diameter(&sub);
    let res = window_resolution(path, i0, i1, &measure);
    let grid = rule.build(d, diam, res)?;
    Ok(WindowData { measure, diam, grid })
}

/// Empirical K = diam(X(J))^{α+n/p} ‖|ξ|^α μ̂_X^J‖_{L^p} / L¹(J).
pub fn berman_ratio(path: &SampledPath, window: &TimeWindow, alpha: f64, p: f64, rule: &GridRule) -> Result<EstimateReport> {
    if !admissible(path.dim(), alpha, p) {
        return invalid("need 1 < p <= inf and -n/p < alpha < n - n/p");
    }
    let (i0, i1) = path.window_indices(window)?;
    let w = window_data(path, i0, i1, rule)?;
    if w.diam == 0.0 {
        return Err(Error::DegeneratePath);
    }
    let norm = fourier_weighted_norm(&w.measure, alpha, p, &w.grid)?;
    let expo = alpha + path.dim() as f64 / p;
    let len = w.measure.mass();
    let scale = w.diam.powf(expo) / len;
    let mut rep = EstimateReport::new(scale * norm.value)
        .with("diam", w.diam)
        .with("length", len)
        .with("fourier_norm", norm.value)
        .with("xi_max", w.grid.truncation());
    rep.refinement_delta = norm.refinement_delta.map(|d| scale * d);
    rep.upper_bound = norm.upper_bound.map(|u| scale * u);
    rep.note = norm.note;
    Ok(rep)
}

/// τ = L¹(J)/‖|ξ|^α μ̂‖_{L^p} and σ = L¹(J)/‖μ‖_{L̇^{p'}_α}; each component
/// carries its own range error.
#[derive(Debug, Clone, PartialEq)]
pub struct TauSigma {
    pub tau: Result<f64>,
    pub sigma: Result<f64>,
    /// |τ − σ|/τ when p = 2 and both are positive
    pub dual_gap: Option<f64>,
}

pub fn tau_sigma(path: &SampledPath, window: &TimeWindow, p: f64, alpha: f64, rule: &GridRule) -> Result<TauSigma> {
    let (i0, i1) = path.window_indices(window)?;
    let w = window_data(path, i0, i1, rule)?;
    Ok(tau_sigma_of(&w.measure, &w.grid, p, alpha, rule))
}

fn tau_sigma_of(m: &DiscreteMeasure, grid: &FourierGrid, p: f64, alpha: f64, rule: &GridRule) -> TauSigma {
    let n = m.dim() as f64;
    let len = m.mass();
    let tau = if p > 1.0 {
        fourier_weighted_norm(m, alpha, p, grid).map(|r| len / r.value)
    } else {
        invalid("tau needs 1 < p <= inf")
    };
    let sigma = if p > 1.0 && p.is_finite() && alpha < 0.0 && alpha > -n / p {
        let q = p / (p - 1.0);
        negative_sobolev_norm(m, alpha, q, &rule.energy_grid(m)).map(|r| len / r.value)
    } else {
        invalid("sigma needs 1 < p < inf and -n/p < alpha < 0")
    };
    let dual_gap = match (&tau, &sigma) {
        (Ok(t), Ok(s)) if p == 2.0 && *t > 0.0 && *s > 0.0 => Some((t - s).abs() / t),
        _ => None,
    };
    TauSigma { tau, sigma, dual_gap }
}

/// One row of a window sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub t_start: f64,
    pub t_end: f64,
    pub tau: f64,
    pub sigma: f64,
    pub empirical_k: f64,
}

pub const SWEEP_HEADER: &str = "t_start,t_end,tau,sigma,empirical_K";

impl SweepRow {
    pub fn csv_row(&self) -> String {
        [self.t_start, self.t_end, self.tau, self.sigma, self.empirical_k].map(fmt_f64).join(",")
    }
}

/// τ, σ and K over many windows (parallel, results in input order). Out of
/// range components are NaN.
pub fn window_sweep(path: &SampledPath, windows: &[TimeWindow], p: f64, alpha: f64, rule: &GridRule) -> Result<Vec<SweepRow>> {
    if !admissible(path.dim(), alpha, p) {
        return invalid("need 1 < p <= inf and -n/p < alpha < n - n/p");
    }
    let expo = alpha + path.dim() as f64 / p;
    windows
        .par_iter()
        .map(|win| {
            let (i0, i1) = path.window_indices(win)?;
            let w = window_data(path, i0, i1, rule)?;
            let ts = tau_sigma_of(&w.measure, &w.grid, p, alpha, rule);
            let tau = ts.tau.unwrap_or(f64::NAN);
            Ok(SweepRow {
                t_start: path.time(i0),
                t_end: path.time(i1),
                tau,
                sigma: ts.sigma.unwrap_or(f64::NAN),
                empirical_k: w.diam.powf(expo) / tau,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// Seeded random windows of length in [min_len, max_len] inside [t0, t0+T].
pub fn random_windows(path: &SampledPath, count: usize, min_len: f64, max_len: f64, seed: u64) -> Result<Vec<TimeWindow>> {
    let total = path.duration();
    if !(min_len > 0.0 && min_len <= max_len && max_len <= total) {
        return invalid("need 0 < min_len <= max_len <= T");
    }
    let mut rng = rng_for(seed, WINDOW_STREAM);
    (0..count)
        .map(|_| {
            let len = rng.random_range(min_len..=max_len);
            let a = path.t_start() + rng.random_range(0.0..=(total - len));
            TimeWindow::new(a, a + len)
        })
        .collect()
}

/// Σ|X(t_i) − X(t_{i−1})|^p over partitions of gap ≤ mesh, for each mesh
/// (in steps, decreasing): the uniform partition, then one pass moving each
/// interior breakpoint by ±Δt where that raises the sum. A fitted growth
/// exponent above GROWTH_EXPONENT is reported as +∞.
pub fn limiting_variation(path: &SampledPath, p_var: f64, meshes: &[usize]) -> Result<EstimateReport> {
    if !(p_var > 0.0) {
        return invalid("p must be positive");
    }
    if meshes.len() < 3 {
        return invalid("need at least 3 meshes");
    }
    if meshes.iter().any(|m| *m < 2 || *m > path.n_steps()) || meshes.windows(2).any(|w| w[1] >= w[0]) {
        return invalid("meshes must be decreasing, >= 2 steps and <= N");
    }
    let vals: Vec<f64> = meshes.iter().map(|&m| variation_sum(path, p_var, m)).collect();
    // sums behave like mesh^{-κ}; fit κ on the log-log scale
    let lx: Vec<f64> = meshes.iter().map(|m| -(*m as f64).ln()).collect();
    let ly: Vec<f64> = vals.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).collect();
    let kappa = ls_slope(&lx, &ly);
    let last = *vals.last().unwrap();
    let mut rep = if kappa > GROWTH_EXPONENT && last > vals[0] {
        EstimateReport::infinite("infinite limiting p-variation at this resolution").with("last_finite_value", last)
    } else {
        EstimateReport::new(last)
    };
    rep = rep
        .with("growth_exponent", kappa)
        .with("finest_mesh", *meshes.last().unwrap() as f64 * path.dt())
        .delta((last - vals[vals.len() - 2]).abs());
    for (k, v) in vals.iter().enumerate() {
        rep = rep.with(&format!("level_{k}"), *v);
    }
    Ok(rep)
}

fn variation_sum(path: &SampledPath, p: f64, mesh: usize) -> f64 {
    let n = path.n_steps();
    let mut bp: Vec<usize> = (0..n).step_by(mesh).collect();
    bp.push(n);
    let term = |a: usize, b: usize| euclid(path.point(a), path.point(b)).powf(p);
    for k in 1..bp.len() - 1 {
        let (l, c, r) = (bp[k - 1], bp[k], bp[k + 1]);
        let cur = term(l, c) + term(c, r);
        let mut best = (cur, c);
        for cand in [c - 1, c + 1] {
            if cand > l && cand < r {
                let v = term(l, cand) + term(cand, r);
                if v > best.0 {
                    best = (v, cand);
                }
            }
        }
        bp[k] = best.1;
    }
    bp.windows(2).map(|w| term(w[0], w[1])).sum()
}

/// Greedy packing: chosen grid intervals [i0, i1] (in steps) and Σ τ^q.
#[derive(Debug, Clone, PartialEq)]
pub struct Packing {
    pub report: EstimateReport,
    pub intervals: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PackingParams {
    pub p: f64,
    pub alpha: f64,
    pub q: f64,
    pub delta: f64,
}

/// Candidate intervals of one packing problem with their spectra, so that
/// several α can be evaluated without recomputing Fourier transforms.
struct Candidates {
    intervals: Vec<(usize, usize)>,
    spectra: Vec<Spectrum>,
    lengths: Vec<f64>,
}

fn candidates(path: &SampledPath, e: &[TimeWindow], delta: f64, rule: &GridRule) -> Result<Candidates> {
    let n = path.n_steps();
    let dt = path.dt();
    if !(delta >= 4.0 * dt * (1.0 - 1e-12)) {
        return invalid("delta must be at least 4 steps");
    }
    let mut centres = vec![false; n + 1];
    for w in e {
        let (i0, i1) = path.window_indices(w)?;
        centres[i0..=i1].iter_mut().for_each(|c| *c = true);
    }
    let top = ((delta / dt) * (1.0 + 1e-12)).floor() as usize;
    let mut lens = vec![];
    let mut l = top - top % 2;
    while l >= 4 && lens.len() < 4 {
        lens.push(l);
        l = (l / 2) - (l / 2) % 2;
    }
    let mut intervals = vec![];
    for &len in &lens {
        let stride = (len / 4).max(1);
        let half = len / 2;
        for c in (half..=n.saturating_sub(half)).step_by(stride) {
            if centres[c] {
                intervals.push((c - half, c + half));
            }
        }
    }
    let spectra = intervals
        .par_iter()
        .map(|&(a, b)| {
            let w = window_data(path, a, b, rule)?;
            Spectrum::compute(&w.measure, &w.grid)
        })
        .collect::<Result<Vec<_>>>()?;
    let lengths = intervals.iter().map(|(a, b)| (b - a) as f64 * dt).collect();
    Ok(Candidates { intervals, spectra, lengths })
}

fn greedy_pack(c: &Candidates, alpha: f64, p: f64, q: f64) -> Result<Packing> {
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(c.intervals.len());
    for (k, s) in c.spectra.iter().enumerate() {
        let norm = s.weighted_norm(alpha, p)?.value;
        scored.push(((c.lengths[k] / norm).powf(q), k));
    }
    // highest τ^q first; ties to longer, then earlier intervals
    scored.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(c.lengths[b.1].total_cmp(&c.lengths[a.1]))
            .then(c.intervals[a.1].cmp(&c.intervals[b.1]))
    });
    let mut chosen: Vec<(usize, usize)> = vec![];
    let mut sum = 0.0;
    for (score, k) in scored {
        let (a, b) = c.intervals[k];
        // grid intervals may share an endpoint: left-endpoint occupation
        // measures of such intervals are disjoint
        if chosen.iter().all(|&(x, y)| b <= x || a >= y) {
            chosen.push((a, b));
            sum += score;
        }
    }
    chosen.sort();
    let report = EstimateReport::new(sum)
        .with("lower_bound", 1.0)
        .with("count", chosen.len() as f64)
        .with("candidates", c.intervals.len() as f64);
    Ok(Packing { report, intervals: chosen })
}

/// Greedy lower bound for sup Σ τ_{p,α}(X, I_k)^q over disjoint intervals of
/// length ≤ δ centred in E. Candidates use dyadic lengths δ, δ/2, δ/4, δ/8
/// (≥ 4 steps) with centres every quarter length.
pub fn packing_prefunctional(path: &SampledPath, e: &[TimeWindow], params: &PackingParams, rule: &GridRule) -> Result<Packing> {
    if !admissible(path.dim(), params.alpha, params.p) || !(params.q > 0.0) {
        return invalid("need admissible (p, alpha) and q > 0");
    }
    if e.is_empty() {
        return Ok(Packing { report: EstimateReport::new(0.0).with("lower_bound", 1.0), intervals: vec![] });
    }
    let c = candidates(path, e, params.delta, rule)?;
    let mut pk = greedy_pack(&c, params.alpha, params.p, params.q)?;
    pk.report = pk.report.with("delta", params.delta);
    Ok(pk)
}

/// n/2 + the largest tested α below which the p=2 prefunctional stays under
/// `threshold` at the given δ.
pub fn occupation_index(
    path: &SampledPath,
    e: &[TimeWindow],
    q: f64,
    alpha_grid: &[f64],
    delta: f64,
    threshold: f64,
    rule: &GridRule,
) -> Result<EstimateReport> {
    let n = path.dim() as f64;
    if alpha_grid.len() < 8 || alpha_grid.iter().any(|a| !(*a > -n / 2.0 && *a < 0.0)) {
        return invalid("alpha grid needs >= 8 nodes in (-n/2, 0)");
    }
    if alpha_grid.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("alpha grid must be increasing");
    }
    if !(threshold > 0.0) || !(q > 0.0) {
        return invalid("need positive threshold and q");
    }
    let base = |v: f64| {
        EstimateReport::new(v).with("finite_delta_estimate", 1.0).with("delta", delta).with("threshold", threshold)
    };
    if e.is_empty() {
        return Ok(base(n / 2.0).note("empty set: prefunctional vanishes for every alpha"));
    }
    let c = candidates(path, e, delta, rule)?;
    let vals = alpha_grid
        .iter()
        .map(|&a| greedy_pack(&c, a, 2.0, q).map(|p| p.report.value))
        .collect::<Result<Vec<_>>>()?;
    let below = vals.iter().take_while(|v| **v <= threshold).count();
    let mut rep = match below {
        0 => base(alpha_grid[0] + n / 2.0).note("index outside tested range (below)"),
        k if k == vals.len() => base(alpha_grid[k - 1] + n / 2.0).note("index >= value (upper end of tested range)"),
        k => base(alpha_grid[k - 1] + n / 2.0),
    };
    for (a, v) in alpha_grid.iter().zip(&vals) {
        rep = rep.with(&format!("P({a})"), *v);
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::occupation::occupation_full;
    use crate::pathgen::{generate, Family, GeneratorSpec};
    use crate::types::Interp;

    /// ‖|ξ|^{-0.3} μ̂‖_{L²} for Lebesgue measure on [0,1]: the square root of
    /// (4/π)∫_0^∞ ξ^{-2.6} sin²(ξ/2) dξ = −(2/π)Γ(−1.6)cos(0.8π); the energy
    /// route ∫(U^{0.3}1_{[0,1]})² dx gives the same digits.
    const LEBESGUE_NORM: f64 = 1.090_886_726_112_699_3;

    fn linear(n: usize) -> SampledPath {
        SampledPath::from_fn(1.0, n, Interp::Linear, |t| t).unwrap()
    }

    fn unit() -> TimeWindow {
        TimeWindow::new(0.0, 1.0).unwrap()
    }

    #[test]
    fn fourier_examples() {
        let p = linear(1 << 10);
        let m = occupation_full(&p);
        let c = (2.0 * PI).powf(-0.5);
        assert!((measure_fourier(&m, &[0.0]).re - c).abs() < 1e-12);
        for xi in [0.5, 3.0, 20.0, 100.0] {
            let z = Complex64::new(0.0, xi);
            let exact = c * (1.0 - (-z).exp()) / z;
            assert!((measure_fourier(&m, &[xi]) - exact).norm() <= p.dt() * xi, "xi={xi}");
        }
        let a = DiscreteMeasure::dirac(&[0.3, -1.2], 1.0, 0.1);
        for xi in [[0.0, 0.0], [1.0, 7.0], [-40.0, 3.0]] {
            assert!((measure_fourier(&a, &xi).norm() - 1.0 / (2.0 * PI)).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_norm_trivial_cases() {
        let rule = GridRule::default();
        let g = rule.build(1, 1.0, 0.01).unwrap();
        assert_eq!(fourier_weighted_norm(&DiscreteMeasure::empty(1, 0.1), -0.3, 2.0, &g).unwrap().value, 0.0);
        let atom = DiscreteMeasure::dirac(&[0.4], 1.0, 0.1);
        let v = fourier_weighted_norm(&atom, 0.0, f64::INFINITY, &g).unwrap().value;
        assert!((v - (2.0 * PI).powf(-0.5)).abs() < 1e-12);
        let g2 = rule.build(2, 1.0, 0.05).unwrap();
        let atom2 = DiscreteMeasure::dirac(&[0.4, 0.1], 1.0, 0.1);
        let v = fourier_weighted_norm(&atom2, 0.0, f64::INFINITY, &g2).unwrap().value;
        assert!((v - 1.0 / (2.0 * PI)).abs() < 1e-12);
        assert!(fourier_weighted_norm(&atom, -0.1, f64::INFINITY, &g).unwrap().is_infinite());
        assert!(fourier_weighted_norm(&atom, -0.3, 2.0, &g).unwrap().is_infinite());
        let lin = occupation_full(&linear(256));
        assert!(fourier_weighted_norm(&lin, -0.5, 2.0, &g).unwrap().is_infinite());
        assert!(fourier_weighted_norm(&lin, -0.6, 2.0, &g).unwrap().is_infinite());
    }

    #[test]
    fn lebesgue_dual_routes() {
        let rule = GridRule::default();
        let m = occupation_full(&linear(1 << 12));
        let g = rule.for_measure(&m).unwrap();
        let f = fourier_weighted_norm(&m, -0.3, 2.0, &g).unwrap();
        assert!((f.value / LEBESGUE_NORM - 1.0).abs() < 0.01, "fourier {}", f.value);
        assert!(f.get("tail_estimate").unwrap() < 1e-3);
        assert_eq!(f.upper_bound, Some(f64::INFINITY));
        let e = negative_sobolev_norm(&m, -0.3, 2.0, &rule.energy_grid(&m)).unwrap();
        assert!((f.value / e.value - 1.0).abs() < 0.05, "fourier {} energy {}", f.value, e.value);
    }

    #[test]
    fn berman_linear_oracle_and_scaling() {
        let rule = GridRule::default();
        let p = linear(1 << 12);
        let k = berman_ratio(&p, &unit(), -0.3, 2.0, &rule).unwrap();
        assert!((k.value / LEBESGUE_NORM - 1.0).abs() < 0.02, "{}", k.value);
        let ks: Vec<f64> = (1..=5)
            .map(|j| {
                let len = 0.5f64.powi(j);
                berman_ratio(&p, &TimeWindow::new(0.25, 0.25 + len).unwrap(), -0.3, 2.0, &rule).unwrap().value
            })
            .collect();
        for v in &ks {
            assert!((v / k.value - 1.0).abs() < 0.1, "{ks:?}");
        }
        assert!(berman_ratio(&p, &unit(), -0.6, 2.0, &rule).is_err());
        let c = SampledPath::from_fn(1.0, 64, Interp::Linear, |_| 1.0).unwrap();
        assert_eq!(berman_ratio(&c, &unit(), -0.3, 2.0, &rule), Err(Error::DegeneratePath));
    }

    #[test]
    fn tau_sigma_examples() {
        let rule = GridRule::default();
        let p = linear(1 << 12);
        let ts = tau_sigma(&p, &unit(), 2.0, -0.3, &rule).unwrap();
        let tau = ts.tau.unwrap();
        assert!((tau * LEBESGUE_NORM - 1.0).abs() < 0.02);
        assert!(ts.dual_gap.unwrap() < 0.05);
        let inf = tau_sigma(&p, &unit(), f64::INFINITY, -0.3, &rule).unwrap();
        assert_eq!(inf.tau.unwrap(), 0.0);
        assert!(inf.sigma.is_err());
        let c = SampledPath::from_fn(1.0, 64, Interp::Linear, |_| 1.0).unwrap();
        let ts = tau_sigma(&c, &unit(), 2.0, -0.3, &rule).unwrap();
        assert_eq!(ts.sigma.unwrap(), 0.0);
        assert_eq!(ts.tau.unwrap(), 0.0);
        assert!(tau_sigma(&p, &unit(), 2.0, 0.2, &rule).unwrap().sigma.is_err());
    }

    #[test]
    fn sweep_csv_shape() {
        let rule = GridRule::default();
        let p = generate(&GeneratorSpec::new(Family::Fbm { hurst: 0.5 }, 1.0, 1 << 10).seed(3)).unwrap();
        let wins = random_windows(&p, 6, 0.05, 0.3, 1).unwrap();
        let rows = window_sweep(&p, &wins, 2.0, -0.3, &rule).unwrap();
        let csv = sweep_csv(&rows);
        assert!(csv.starts_with("t_start,t_end,tau,sigma,empirical_K\n"));
        assert_eq!(csv.lines().count(), 7);
        for r in &rows {
            assert!(r.empirical_k > 0.0 && r.empirical_k.is_finite());
            assert!((r.sigma - r.tau).abs() / r.tau < 0.1, "{r:?}");
        }
        assert_eq!(window_sweep(&p, &wins, 2.0, -0.3, &rule).unwrap(), rows);
    }

    #[test]
    fn limiting_variation_examples() {
        let p = linear(1 << 12);
        let meshes = [256, 128, 64, 32, 16];
        let r = limiting_variation(&p, 1.0, &meshes).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        for k in 0..meshes.len() {
            assert!((r.get(&format!("level_{k}")).unwrap() - 1.0).abs() < 1e-12);
        }
        assert!(limiting_variation(&p, 0.5, &meshes).unwrap().is_infinite());
        assert!(limiting_variation(&p, 1.0, &[8, 4, 1]).is_err());
        for seed in 0..5 {
            let b = generate(&GeneratorSpec::new(Family::Fbm { hurst: 0.5 }, 1.0, 1 << 12).seed(seed)).unwrap();
            assert!(!limiting_variation(&b, 3.0, &meshes).unwrap().is_infinite(), "seed {seed}");
            assert!(limiting_variation(&b, 1.5, &meshes).unwrap().is_infinite(), "seed {seed}");
        }
    }

    #[test]
    fn packing_examples() {
        let rule = GridRule::default();
        let p = linear(1 << 12);
        let params = PackingParams { p: 2.0, alpha: -0.3, q: 1.0, delta: 0.125 };
        let empty = packing_prefunctional(&p, &[], &params, &rule).unwrap();
        assert_eq!(empty.report.value, 0.0);
        let pk = packing_prefunctional(&p, &[unit()], &params, &rule).unwrap();
        let oracle = 8.0 * 0.125f64.powf(0.2) / LEBESGUE_NORM;
        assert!((pk.report.value / oracle - 1.0).abs() < 0.15, "{} vs {oracle}", pk.report.value);
        for w in pk.intervals.windows(2) {
            assert!(w[0].1 <= w[1].0);
        }
        for (a, b) in &pk.intervals {
            assert!((b - a) as f64 * p.dt() <= 0.125 + 1e-12);
        }
        let again = packing_prefunctional(&p, &[unit()], &params, &rule).unwrap();
        assert_eq!(again.report.value.to_bits(), pk.report.value.to_bits());
        assert_eq!(again.intervals, pk.intervals);
    }

    #[test]
    fn occupation_index_examples() {
        let rule = GridRule::default();
        let alphas: Vec<f64> = (1..=9).map(|k| -0.5 + 0.05 * k as f64).collect();
        let c = SampledPath::from_fn(1.0, 256, Interp::Linear, |_| 0.0).unwrap();
        let r = occupation_index(&c, &[unit()], 1.0, &alphas, 0.125, 1e-3, &rule).unwrap();
        assert!((r.value - (alphas[8] + 0.5)).abs() < 1e-12);
        assert!(r.note.unwrap().contains("upper end"));
        let b = generate(&GeneratorSpec::new(Family::Fbm { hurst: 0.5 }, 1.0, 1 << 10).seed(2)).unwrap();
        let lo = occupation_index(&b, &[unit()], 1.0, &alphas, 0.125, 1.0, &rule).unwrap();
        let hi = occupation_index(&b, &[unit()], 1.0, &alphas, 0.125, 4.0, &rule).unwrap();
        assert!(hi.value >= lo.value);
        let other = occupation_index(&b, &[unit()], 1.0, &alphas, 0.0625, 1.0, &rule).unwrap();
        assert!((other.value - lo.value).abs() <= 0.1 + 1e-12, "{} {}", lo.value, other.value);
        assert!(occupation_index(&b, &[unit()], 1.0, &alphas[..5], 0.125, 1.0, &rule).is_err());
    }
}
