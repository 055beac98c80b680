//! Occupation measures, ball masses, local times and upper regularity.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::pathgen::ls_slope;
use crate::types::{
    euclid, fmt_f64, median_nn_distance, median_positive_nn_distance, DiscreteMeasure, EstimateReport, Interp,
    SampledPath, TimeWindow,
};

/// Atoms at X_{t_i}, weight dt, for the grid times of the snapped window
/// (left endpoints, so the last sample of the window carries no weight).
pub fn occupation_measure(path: &SampledPath, window: &TimeWindow) -> Result<DiscreteMeasure> {
    let (i0, i1) = path.window_indices(window)?;
    Ok(occupation_range(path, i0, i1))
}

/// Occupation measure over the whole time domain.
pub fn occupation_full(path: &SampledPath) -> DiscreteMeasure {
    occupation_range(path, 0, path.n_steps())
}

pub(crate) fn occupation_range(path: &SampledPath, i0: usize, i1: usize) -> DiscreteMeasure {
    let d = path.dim();
    let pts = path.values()[i0 * d..i1 * d].to_vec();
    let w = vec![path.dt(); i1 - i0];
    let h = data_cell_width(&pts, d, path.dt());
    DiscreteMeasure::new(d, pts, w, h).expect("occupation atoms are valid")
}

/// Median nearest-neighbour spacing; falls back to the positive spacings and
/// finally to `fallback` when every atom sits at one point.
pub fn data_cell_width(points: &[f64], dim: usize, fallback: f64) -> f64 {
    let h = median_nn_distance(points, dim);
    if h > 0.0 {
        return h;
    }
    median_positive_nn_distance(points, dim).unwrap_or(fallback)
}

pub fn ball_mass(measure: &DiscreteMeasure, x: &[f64], r: f64) -> f64 {
    (0..measure.len())
        .filter(|&i| euclid(measure.atom(i), x) < r)
        .map(|i| measure.weight(i))
        .sum()
}

/// Ball masses at several radii around one centre (radii ascending).
pub fn ball_masses(measure: &DiscreteMeasure, x: &[f64], radii: &[f64]) -> Vec<f64> {
    let mut dw: Vec<(f64, f64)> = (0..measure.len()).map(|i| (euclid(measure.atom(i), x), measure.weight(i))).collect();
    dw.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cum = Vec::with_capacity(dw.len() + 1);
    cum.push(0.0);
    let mut s = 0.0;
    for (_, w) in &dw {
        s += w;
        cum.push(s);
    }
    radii.iter().map(|&r| cum[dw.partition_point(|(d, _)| *d < r)]).collect()
}

/// Slope of log sup_centres mu(B(x, r)) against log r.
pub fn upper_regularity_exponent(
    measure: &DiscreteMeasure,
    centers: &[Vec<f64>],
    r_grid: &[f64],
) -> Result<EstimateReport> {
    if r_grid.len() < 3 || centers.is_empty() {
        return invalid("need at least 3 radii and one centre");
    }
    let per_center: Vec<Vec<f64>> = centers.par_iter().map(|c| ball_masses(measure, c, r_grid)).collect();
    let mut xs = vec![];
    let mut ys = vec![];
    for (k, &r) in r_grid.iter().enumerate() {
        let m = per_center.iter().map(|v| v[k]).fold(0.0, f64::max);
        if m > 0.0 {
            xs.push(r.ln());
            ys.push(m.ln());
        }
    }
    if xs.is_empty() {
        return invalid("all ball masses are zero");
    }
    if xs.len() < 3 {
        return invalid("fewer than 3 radii with positive mass");
    }
    Ok(EstimateReport::new(ls_slope(&xs, &ys))
        .with("n_centers", centers.len() as f64)
        .with("r_min", r_grid[0])
        .with("r_max", *r_grid.last().unwrap())
        .with("cell_width", measure.cell_width()))
}

/// Dyadic radii 2^{-k} for k in [k_lo, k_hi].
pub fn dyadic_radii(k_lo: i32, k_hi: i32) -> Vec<f64> {
    (k_lo..=k_hi).rev().map(|k| 2f64.powi(-k)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalTimeEstimate {
    pub dim: usize,
    pub bin_width: f64,
    /// bin index -> density; bin k covers [k h, (k+1) h) in every axis
    pub bins: BTreeMap<Vec<i64>, f64>,
}

impl LocalTimeEstimate {
    pub fn bin_center(&self, key: &[i64]) -> Vec<f64> {
        key.iter().map(|&k| (k as f64 + 0.5) * self.bin_width).collect()
    }

    pub fn density_at(&self, y: &[f64]) -> f64 {
        let key: Vec<i64> = y.iter().map(|v| (v / self.bin_width).floor() as i64).collect();
        self.bins.get(&key).copied().unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.bins.values().sum::<f64>() * self.bin_width.powi(self.dim as i32)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for k in 1..=self.dim {
            s.push_str(&format!("center_{k},"));
        }
        s.push_str("density\n");
        for (key, d) in &self.bins {
            for c in self.bin_center(key) {
                s.push_str(&fmt_f64(c));
                s.push(',');
            }
            s.push_str(&fmt_f64(*d));
            s.push('\n');
        }
        s
    }
}

pub fn local_time_histogram(measure: &DiscreteMeasure, bin_width: f64) -> Result<LocalTimeEstimate> {
    let n = measure.dim();
    if n > 3 {
        return Err(Error::DimensionTooLarge);
    }
    if !(bin_width > 0.0) {
        return invalid("bin width must be positive");
    }
    let vol = bin_width.powi(n as i32);
    let mut bins = BTreeMap::new();
    for i in 0..measure.len() {
        let key: Vec<i64> = measure.atom(i).iter().map(|v| (v / bin_width).floor() as i64).collect();
        *bins.entry(key).or_insert(0.0) += measure.weight(i) / vol;
    }
    Ok(LocalTimeEstimate { dim: n, bin_width, bins })
}

/// Local time of a piecewise-linear scalar path at level y:
/// the sum of 1/|slope| over segments crossing y.
pub fn exact_local_time_pl(path: &SampledPath, y: f64) -> Result<f64> {
    if path.dim() != 1 || path.interp() != Interp::Linear {
        return invalid("exact local time needs a 1-d piecewise-linear path");
    }
    let x = path.scalar_values();
    let dt = path.dt();
    for w in x.windows(2) {
        if w[0] == w[1] && w[0] == y {
            return Err(Error::Plateau(y));
        }
    }
    let mut y = y;
    if x.contains(&y) {
        let rise = x
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .filter(|r| *r > 0.0)
            .fold(f64::INFINITY, f64::min);
        if rise.is_finite() {
            y += rise * 1e-9;
        }
    }
    let mut s = 0.0;
    for w in x.windows(2) {
        let (lo, hi) = if w[0] < w[1] { (w[0], w[1]) } else { (w[1], w[0]) };
        if lo < y && y < hi {
            s += dt / (hi - lo);
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathgen::{generate, Family, GeneratorSpec};
    use proptest::prelude::*;

    fn path(n: usize, f: impl Fn(f64) -> f64) -> SampledPath {
        SampledPath::from_fn(1.0, n, Interp::Linear, f).unwrap()
    }

    fn whole(p: &SampledPath) -> TimeWindow {
        TimeWindow::new(0.0, p.duration()).unwrap()
    }

    #[test]
    fn occupation_examples() {
        let p = path(1000, |t| t);
        let m = occupation_measure(&p, &whole(&p)).unwrap();
        assert!((m.mass() - 1.0).abs() < 1e-12);
        assert!((ball_mass(&m, &[0.5], 0.2) - 0.4).abs() <= p.dt() + 1e-12);
        let c = path(100, |_| 2.0);
        let m = occupation_full(&c);
        assert!((m.mass() - 1.0).abs() < 1e-12);
        assert!((0..m.len()).all(|i| m.atom(i) == [2.0]));
        assert_eq!(m.atomic_fraction(), 1.0);
        let tent = path(1000, |t| (2.0 * t - 1.0).abs());
        let m = occupation_full(&tent);
        let below: f64 = (0..m.len()).filter(|&i| m.atom(i)[0] <= 0.5).map(|i| m.weight(i)).sum();
        assert!((below - 0.5).abs() <= 2.0 * tent.dt());
    }

    #[test]
    fn ball_mass_examples() {
        assert_eq!(ball_mass(&DiscreteMeasure::empty(1, 0.1), &[0.0], 1.0), 0.0);
        let d = DiscreteMeasure::dirac(&[0.0], 1.0, 0.1);
        assert_eq!(ball_mass(&d, &[0.0], 1.0), 1.0);
        assert_eq!(ball_mass(&d, &[1.0], 1.0), 0.0);
        let m = occupation_full(&path(512, |t| t));
        let radii = [0.01, 0.1, 0.3];
        let fast = ball_masses(&m, &[0.4], &radii);
        for (r, v) in radii.iter().zip(fast) {
            assert_eq!(v, ball_mass(&m, &[0.4], *r));
        }
    }

    #[test]
    fn occupation_time_formula_on_grid_functions() {
        let p = generate(&GeneratorSpec::new(Family::Fbm { hurst: 0.4 }, 1.0, 512).seed(5)).unwrap();
        let m = occupation_full(&p);
        let g = |x: f64| (3.0 * x).sin() + x * x;
        let lhs: f64 = (0..m.len()).map(|i| g(m.atom(i)[0]) * m.weight(i)).sum();
        let rhs: f64 = p.dt() * (0..p.n_steps()).map(|i| g(p.x(i))).sum::<f64>();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn additivity_over_split_windows() {
        let p = generate(&GeneratorSpec::new(Family::Fbm { hurst: 0.6 }, 1.0, 256).seed(2)).unwrap();
        let full = occupation_full(&p);
        let a = occupation_measure(&p, &TimeWindow::new(0.0, 0.375).unwrap()).unwrap();
        let b = occupation_measure(&p, &TimeWindow::new(0.375, 1.0).unwrap()).unwrap();
        let mut joined: Vec<f64> = a.points().iter().chain(b.points()).copied().collect();
        let mut orig = full.points().to_vec();
        joined.sort_by(f64::total_cmp);
        orig.sort_by(f64::total_cmp);
        assert_eq!(joined, orig);
        assert!((a.mass() + b.mass() - full.mass()).abs() < 1e-14);
    }

    #[test]
    fn time_reversal_up_to_one_atom() {
        // left-endpoint weights: reversal swaps the first atom for the last
        let p = generate(&GeneratorSpec::new(Family::Fbm { hurst: 0.5 }, 1.0, 128).seed(9)).unwrap();
        let a = occupation_full(&p);
        let b = occupation_full(&p.reversed());
        let mut pa = a.points().to_vec();
        pa.retain(|&v| v != p.x(0));
        pa.push(p.x(p.n_steps()));
        let mut pb = b.points().to_vec();
        pa.sort_by(f64::total_cmp);
        pb.sort_by(f64::total_cmp);
        assert_eq!(pa, pb);
    }

    #[test]
    fn regularity_examples() {
        let m = occupation_full(&path(1 << 14, |t| t));
        let centers: Vec<Vec<f64>> = (0..16).map(|k| vec![k as f64 / 16.0]).collect();
        let e = upper_regularity_exponent(&m, &centers, &dyadic_radii(3, 8)).unwrap();
        assert!((e.value - 1.0).abs() < 0.05);
        let d = DiscreteMeasure::dirac(&[0.0], 1.0, 1e-3);
        let e = upper_regularity_exponent(&d, &[vec![0.0]], &dyadic_radii(2, 6)).unwrap();
        assert!(e.value.abs() < 1e-12);
        assert!(upper_regularity_exponent(&d, &[vec![50.0]], &dyadic_radii(2, 6)).is_err());
    }

    #[test]
    fn histogram_examples() {
        let p = path(1 << 14, |t| t);
        let lt = local_time_histogram(&occupation_full(&p), 0.01).unwrap();
        for k in 5..95 {
            let y = (k as f64 + 0.5) * 0.01;
            assert!((lt.density_at(&[y]) - 1.0).abs() <= 0.05, "{y}");
        }
        assert_eq!(lt.density_at(&[1.5]), 0.0);
        let c = occupation_full(&path(100, |_| 0.3));
        let lt = local_time_histogram(&c, 0.1).unwrap();
        assert_eq!(lt.bins.len(), 1);
        assert!((lt.density_at(&[0.3]) - 1.0 / 0.1).abs() < 1e-12);
        let tent = path(1 << 14, |t| (2.0 * t - 1.0).abs());
        let lt = local_time_histogram(&occupation_full(&tent), 1.0 / 64.0).unwrap();
        for k in 2..62 {
            assert!((lt.density_at(&[(k as f64 + 0.5) / 64.0]) - 1.0).abs() < 0.05);
        }
        let big = DiscreteMeasure::new(4, vec![0.0; 4], vec![1.0], 0.1).unwrap();
        assert_eq!(local_time_histogram(&big, 0.1), Err(Error::DimensionTooLarge));
    }

    #[test]
    fn histogram_conserves_mass() {
        let p = generate(&GeneratorSpec::new(Family::Fbm { hurst: 0.5 }, 1.0, 1024).dim(2).seed(1)).unwrap();
        let m = occupation_full(&p);
        let lt = local_time_histogram(&m, 0.05).unwrap();
        assert!((lt.total_mass() - m.mass()).abs() < 1e-12);
        assert!(lt.to_csv().starts_with("center_1,center_2,density\n"));
    }

    #[test]
    fn exact_local_time_examples() {
        let p = path(100, |t| t);
        assert!((exact_local_time_pl(&p, 0.5).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(exact_local_time_pl(&p, 2.0).unwrap(), 0.0);
        let tent = path(100, |t| (2.0 * t - 1.0).abs());
        assert!((exact_local_time_pl(&tent, 0.3).unwrap() - 1.0).abs() < 1e-9);
        let flat = SampledPath::new(1, 1.0, vec![0.0, 0.5, 0.5, 1.0], Interp::Linear).unwrap();
        assert_eq!(exact_local_time_pl(&flat, 0.5), Err(Error::Plateau(0.5)));
    }

    #[test]
    fn exact_and_histogram_agree() {
        let fam = Family::PiecewiseLinear { breakpoints: vec![0.0, 0.3, 0.7, 1.0], values: vec![0.0, 0.9, 0.2, 1.0] };
        let p = generate(&GeneratorSpec::new(fam, 1.0, 1 << 14)).unwrap();
        let h = 1.0 / 128.0;
        let lt = local_time_histogram(&occupation_full(&p), h).unwrap();
        for k in [10, 30, 50, 70, 100] {
            let y = (k as f64 + 0.5) * h;
            let exact = exact_local_time_pl(&p, y).unwrap();
            assert!((lt.density_at(&[y]) - exact).abs() < 10.0 * (h + p.dt()), "{y}");
        }
    }

    proptest! {
        #[test]
        fn ball_mass_monotone_in_radius(v in prop::collection::vec(-1.0f64..1.0, 3..40), r in 0.01f64..1.0) {
            let p = SampledPath::new(1, 1.0, v, Interp::Linear).unwrap();
            let m = occupation_full(&p);
            prop_assert!(ball_mass(&m, &[0.0], r) <= ball_mass(&m, &[0.0], 2.0 * r));
        }
    }
}
