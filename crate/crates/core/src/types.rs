//! Paths, measures, windows and estimate reports.

use std::fmt::Write as _;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeWindow {
    pub t_start: f64,
    pub t_end: f64,
}

impl TimeWindow {
    pub fn new(t_start: f64, t_end: f64) -> Result<Self> {
        if !(t_start.is_finite() && t_end.is_finite()) || t_start < 0.0 || t_start >= t_end {
            return invalid(format!("bad window [{t_start}, {t_end}]"));
        }
        Ok(Self { t_start, t_end })
    }

    pub fn len(&self) -> f64 {
        self.t_end - self.t_start
    }
}

/// How a path is read between grid times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Interp {
    Linear,
    /// right-continuous steps: value at the largest grid time <= t
    Cadlag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    dim: usize,
    t_total: f64,
    t0: f64,
    values: Vec<f64>,
    interp: Interp,
}

impl SampledPath {
    /// `values` is row-major, `(N+1) * dim` entries, sampled on `t_i = i*T/N`.
    pub fn new(dim: usize, t_total: f64, values: Vec<f64>, interp: Interp) -> Result<Self> {
        Self::with_offset(dim, 0.0, t_total, values, interp)
    }

    pub(crate) fn with_offset(
        dim: usize,
        t0: f64,
        t_total: f64,
        values: Vec<f64>,
        interp: Interp,
    ) -> Result<Self> {
        if dim == 0 {
            return invalid("dim must be positive");
        }
        if !(t_total > 0.0 && t_total.is_finite()) {
            return invalid("T must be positive");
        }
        if !values.len().is_multiple_of(dim) || values.len() / dim < 3 {
            return invalid("need at least 3 samples (N >= 2)");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("non-finite sample");
        }
        Ok(Self { dim, t_total, t0, values, interp })
    }

    pub fn from_fn(t_total: f64, n: usize, interp: Interp, f: impl Fn(f64) -> f64) -> Result<Self> {
        let dt = t_total / n as f64;
        let v = (0..=n).map(|i| f(i as f64 * dt)).collect();
        Self::new(1, t_total, v, interp)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    /// Number of grid intervals N.
    pub fn n_steps(&self) -> usize {
        self.values.len() / self.dim - 1
    }
    pub fn n_samples(&self) -> usize {
        self.values.len() / self.dim
    }
    /// Length of the time domain.
    pub fn duration(&self) -> f64 {
        self.t_total
    }
    pub fn t_start(&self) -> f64 {
        self.t0
    }
    pub fn dt(&self) -> f64 {
        self.t_total / self.n_steps() as f64
    }
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt()
    }
    pub fn interp(&self) -> Interp {
        self.interp
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }
    /// Coordinate 0 of sample i; the natural accessor for scalar paths.
    pub fn x(&self, i: usize) -> f64 {
        self.values[i * self.dim]
    }
    pub fn scalar_values(&self) -> Vec<f64> {
        (0..self.n_samples()).map(|i| self.x(i)).collect()
    }

    /// Evaluate at absolute time t (clamped to the domain).
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let n = self.n_steps();
        let s = ((t - self.t0) / self.dt()).clamp(0.0, n as f64);
        let i = (s.floor() as usize).min(n);
        match self.interp {
            Interp::Cadlag => self.point(i).to_vec(),
            Interp::Linear => {
                if i == n {
                    return self.point(n).to_vec();
                }
                let w = s - i as f64;
                self.point(i)
                    .iter()
                    .zip(self.point(i + 1))
                    .map(|(a, b)| a + w * (b - a))
                    .collect()
            }
        }
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> SampledPath {
        SampledPath {
            values: self.values.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    /// Same path, new sample values (same grid and tag).
    pub fn with_values(&self, dim: usize, values: Vec<f64>) -> Result<SampledPath> {
        if values.len() != self.n_samples() * dim {
            return invalid("sample count mismatch");
        }
        Self::with_offset(dim, self.t0, self.t_total, values, self.interp)
    }

    /// Keep every `k`-th sample. Requires k | N.
    pub fn decimate(&self, k: usize) -> Result<SampledPath> {
        let n = self.n_steps();
        if k == 0 || !n.is_multiple_of(k) || n / k < 2 {
            return invalid(format!("cannot decimate N={n} by {k}"));
        }
        let mut v = Vec::with_capacity((n / k + 1) * self.dim);
        for i in (0..=n).step_by(k) {
            v.extend_from_slice(self.point(i));
        }
        Self::with_offset(self.dim, self.t0, self.t_total, v, self.interp)
    }

    /// Reverse the sample order, keeping the grid.
    pub fn reversed(&self) -> SampledPath {
        let mut v = Vec::with_capacity(self.values.len());
        for i in (0..self.n_samples()).rev() {
            v.extend_from_slice(self.point(i));
        }
        SampledPath { values: v, ..self.clone() }
    }

    /// Grid index range (inclusive) of a window after snapping.
    pub fn window_indices(&self, w: &TimeWindow) -> Result<(usize, usize)> {
        let dt = self.dt();
        let end = self.t0 + self.t_total;
        // windows snap to the nearest grid points, so allow half a step of overhang
        let tol = (0.5 + 1e-9) * dt;
        if w.t_start < self.t0 - tol || w.t_end > end + tol || w.t_start >= w.t_end {
            return invalid(format!("window [{}, {}] outside path domain", w.t_start, w.t_end));
        }
        if w.len() < 2.0 * dt * (1.0 - 1e-12) {
            return Err(Error::UnderResolved);
        }
        let n = self.n_steps() as f64;
        let i0 = ((w.t_start - self.t0) / dt).round().clamp(0.0, n) as usize;
        let i1 = ((w.t_end - self.t0) / dt).round().clamp(0.0, n) as usize;
        if i1 < i0 + 2 {
            return Err(Error::UnderResolved);
        }
        Ok((i0, i1))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t");
        for k in 1..=self.dim {
            let _ = write!(s, ",x{k}");
        }
        s.push('\n');
        for i in 0..self.n_samples() {
            s.push_str(&fmt_f64(self.time(i)));
            for v in self.point(i) {
                s.push(',');
                s.push_str(&fmt_f64(*v));
            }
            s.push('\n');
        }
        s
    }
}

/// Samples with grid times inside the snapped window.
pub fn restrict(path: &SampledPath, window: &TimeWindow) -> Result<SampledPath> {
    let (i0, i1) = path.window_indices(window)?;
    let d = path.dim;
    let v = path.values[i0 * d..(i1 + 1) * d].to_vec();
    let len = path.t_total * (i1 - i0) as f64 / path.n_steps() as f64;
    SampledPath::with_offset(d, path.time(i0), len, v, path.interp)
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}

/// Largest distance between two samples.
pub fn path_diameter(path: &SampledPath) -> f64 {
    let m = path.n_samples();
    match path.dim {
        1 => {
            let (lo, hi) = path.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
                (l.min(v), h.max(v))
            });
            hi - lo
        }
        2 => {
            let pts: Vec<[f64; 2]> = (0..m).map(|i| [path.values[2 * i], path.values[2 * i + 1]]).collect();
            let hull = convex_hull(pts);
            let mut best = 0.0f64;
            for i in 0..hull.len() {
                for j in i + 1..hull.len() {
                    best = best.max(dist2(&hull[i], &hull[j]));
                }
            }
            best.sqrt()
        }
        _ => {
            let mut best = 0.0f64;
            for i in 0..m {
                for j in i + 1..m {
                    best = best.max(dist2(path.point(i), path.point(j)));
                }
            }
            best.sqrt()
        }
    }
}

// Andrew's monotone chain.
fn convex_hull(mut p: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut h: Vec<[f64; 2]> = Vec::with_capacity(2 * p.len());
    for &q in &p {
        while h.len() >= 2 && cross(h[h.len() - 2], h[h.len() - 1], q) <= 0.0 {
            h.pop();
        }
        h.push(q);
    }
    let lower = h.len() + 1;
    for &q in p.iter().rev().skip(1) {
        while h.len() >= lower && cross(h[h.len() - 2], h[h.len() - 1], q) <= 0.0 {
            h.pop();
        }
        h.push(q);
    }
    h.pop();
    h
}

/// Finite nonnegative measure as weighted atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    cell_width: f64,
}

impl DiscreteMeasure {
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>, cell_width: f64) -> Result<Self> {
        if dim == 0 || points.len() != weights.len() * dim {
            return invalid("atom/weight shape mismatch");
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) || points.iter().any(|x| !x.is_finite()) {
            return invalid("weights must be finite and nonnegative");
        }
        if !(cell_width > 0.0 && cell_width.is_finite()) {
            return invalid("cell_width must be positive");
        }
        Ok(Self { dim, points, weights, cell_width })
    }

    pub fn empty(dim: usize, cell_width: f64) -> Self {
        Self { dim, points: vec![], weights: vec![], cell_width }
    }

    pub fn dirac(at: &[f64], weight: f64, cell_width: f64) -> Self {
        Self::new(at.len(), at.to_vec(), vec![weight], cell_width).expect("valid dirac")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.weights.len()
    }
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
    pub fn cell_width(&self) -> f64 {
        self.cell_width
    }
    pub fn atom(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }
    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn points(&self) -> &[f64] {
        &self.points
    }
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn scaled(&self, c: f64) -> DiscreteMeasure {
        DiscreteMeasure { weights: self.weights.iter().map(|w| w * c).collect(), ..self.clone() }
    }

    pub fn translated(&self, v: &[f64]) -> DiscreteMeasure {
        let d = self.dim;
        let points = self.points.iter().enumerate().map(|(k, x)| x + v[k % d]).collect();
        DiscreteMeasure { points, ..self.clone() }
    }

    pub fn with_cell_width(&self, h: f64) -> DiscreteMeasure {
        DiscreteMeasure { cell_width: h, ..self.clone() }
    }

    pub fn push(&mut self, at: &[f64], w: f64) {
        assert_eq!(at.len(), self.dim);
        self.points.extend_from_slice(at);
        self.weights.push(w);
    }

    /// Axis-aligned bounding box (lo, hi); None when empty.
    pub fn bbox(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        if self.is_empty() {
            return None;
        }
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for i in 0..self.len() {
            for (k, &x) in self.atom(i).iter().enumerate() {
                lo[k] = lo[k].min(x);
                hi[k] = hi[k].max(x);
            }
        }
        Some((lo, hi))
    }

    /// Fraction of mass carried by locations holding two or more coincident
    /// atoms. Nonzero values mean the sampled measure has genuine point masses.
    pub fn atomic_fraction(&self) -> f64 {
        let m = self.mass();
        if self.len() < 2 || m <= 0.0 {
            return 0.0;
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| cmp_points(self.atom(a), self.atom(b)));
        let mut dup = 0.0;
        let mut i = 0;
        while i < idx.len() {
            let mut j = i + 1;
            while j < idx.len() && self.atom(idx[j]) == self.atom(idx[i]) {
                j += 1;
            }
            if j - i >= 2 {
                dup += idx[i..j].iter().map(|&k| self.weights[k]).sum::<f64>();
            }
            i = j;
        }
        dup / m
    }
}

fn cmp_points(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// Median nearest-neighbour distance of a point cloud (row-major, `dim` wide).
/// Returns 0 when more than half the points have an exact duplicate.
pub fn median_nn_distance(points: &[f64], dim: usize) -> f64 {
    let m = points.len() / dim;
    if m < 2 {
        return 0.0;
    }
    let mut nn = nearest_neighbour_distances(points, dim);
    let mid = nn.len() / 2;
    nn.select_nth_unstable_by(mid, f64::total_cmp);
    nn[mid]
}

/// Median over the strictly positive nearest-neighbour distances.
pub fn median_positive_nn_distance(points: &[f64], dim: usize) -> Option<f64> {
    let mut nn: Vec<f64> = nearest_neighbour_distances(points, dim).into_iter().filter(|d| *d > 0.0).collect();
    if nn.is_empty() {
        return None;
    }
    let mid = nn.len() / 2;
    nn.select_nth_unstable_by(mid, f64::total_cmp);
    Some(nn[mid])
}

fn nearest_neighbour_distances(points: &[f64], dim: usize) -> Vec<f64> {
    let m = points.len() / dim;
    let p = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| cmp_points(p(a), p(b)));
    let mut out = vec![f64::INFINITY; m];
    for (r, &i) in order.iter().enumerate() {
        let mut best2 = f64::INFINITY;
        let xi = p(i)[0];
        for &j in order[r + 1..].iter() {
            let dx = p(j)[0] - xi;
            if dx * dx >= best2 {
                break;
            }
            best2 = best2.min(dist2(p(i), p(j)));
        }
        for &j in order[..r].iter().rev() {
            let dx = xi - p(j)[0];
            if dx * dx >= best2 {
                break;
            }
            best2 = best2.min(dist2(p(i), p(j)));
        }
        out[i] = best2.sqrt();
    }
    out
}

/// A numerical value with the discretization that produced it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EstimateReport {
    pub value: f64,
    pub resolution: Vec<(String, f64)>,
    pub refinement_delta: Option<f64>,
    /// conservative upper end when the value is a truncated quadrature
    pub upper_bound: Option<f64>,
    pub note: Option<String>,
}

impl EstimateReport {
    pub fn new(value: f64) -> Self {
        Self { value, ..Default::default() }
    }
    pub fn infinite(note: impl Into<String>) -> Self {
        Self { value: f64::INFINITY, note: Some(note.into()), ..Default::default() }
    }
    pub fn with(mut self, key: &str, v: f64) -> Self {
        self.resolution.push((key.to_string(), v));
        self
    }
    pub fn delta(mut self, d: f64) -> Self {
        self.refinement_delta = Some(d);
        self
    }
    pub fn note(mut self, n: impl Into<String>) -> Self {
        self.note = Some(n.into());
        self
    }
    pub fn is_infinite(&self) -> bool {
        self.value == f64::INFINITY
    }
    pub fn get(&self, key: &str) -> Option<f64> {
        self.resolution.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

/// Round-trippable float formatting used in every CSV.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}
