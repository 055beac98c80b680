//! Quadrature helpers shared by the potential, berman and bvfun modules.

use crate::error::{invalid, Result};

/// Axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return invalid("box needs lo < hi in every axis");
        }
        Ok(Self { lo, hi })
    }

    pub fn cube(center: &[f64], half: f64) -> Self {
        Self {
            lo: center.iter().map(|c| c - half).collect(),
            hi: center.iter().map(|c| c + half).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    /// Cell-centred grid with spacing at most `dx`: (points row-major, cell volume).
    pub fn grid(&self, dx: f64) -> (Vec<f64>, f64) {
        let n = self.dim();
        let counts: Vec<usize> = (0..n).map(|k| ((self.hi[k] - self.lo[k]) / dx).ceil().max(1.0) as usize).collect();
        let steps: Vec<f64> = (0..n).map(|k| (self.hi[k] - self.lo[k]) / counts[k] as f64).collect();
        let total: usize = counts.iter().product();
        let mut pts = Vec::with_capacity(total * n);
        let mut idx = vec![0usize; n];
        for _ in 0..total {
            for k in 0..n {
                pts.push(self.lo[k] + (idx[k] as f64 + 0.5) * steps[k]);
            }
            for k in (0..n).rev() {
                idx[k] += 1;
                if idx[k] < counts[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        (pts, steps.iter().product())
    }
}

/// m log-uniform nodes on [a, b].
pub fn log_grid(a: f64, b: f64, m: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    (0..m).map(|i| (la + (lb - la) * i as f64 / (m - 1) as f64).exp()).collect()
}

/// Trapezoid rule in ln r: approximates the integral of f(r) dr/r.
pub fn log_trapezoid(r: &[f64], f: &[f64]) -> f64 {
    r.windows(2)
        .zip(f.windows(2))
        .map(|(rr, ff)| 0.5 * (ff[0] + ff[1]) * (rr[1] / rr[0]).ln())
        .sum()
}

/// Surface area of the unit sphere in R^n.
pub fn sphere_area(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(h) / statrs::function::gamma::gamma(h)
}

/// Volume of the unit ball in R^n.
pub fn ball_volume(n: usize) -> f64 {
    sphere_area(n) / n as f64
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..m {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = m as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[m - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[m - 1 - i] = w[i];
    }
    (x, w)
}

/// Mesh controls for one-dimensional convolutions of two singular power kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvMesh {
    /// integration range [-half_width, half_width] around the singularities
    pub half_width: f64,
    /// geometric grading ratio toward each singularity
    pub ratio: f64,
    /// smallest distance resolved next to a singularity
    pub min_gap: f64,
    /// largest cell size away from the singularities
    pub max_cell: f64,
}

impl ConvMesh {
    pub fn level(k: u32) -> Self {
        let f = 0.5f64.powi(k as i32);
        Self { half_width: 1e3 * 2f64.powi(k as i32), ratio: 1.0 - 0.3 * f, min_gap: 1e-9 * f, max_cell: 0.05 * f }
    }
}

/// Integral over R of c1|z-a1|^{e1-1} * c2|z-a2|^{e2-1} (n = 1), by product
/// integration on a mesh graded toward a1 and a2, plus the far-field tail.
pub fn power_kernel_product_1d(a1: f64, e1: f64, c1: f64, a2: f64, e2: f64, c2: f64, mesh: &ConvMesh) -> f64 {
    let centre = 0.5 * (a1 + a2);
    let lo = centre - mesh.half_width;
    let hi = centre + mesh.half_width;
    let mut pts = vec![lo, hi, a1, a2];
    for s in [a1, a2] {
        let mut d = mesh.min_gap;
        while d < mesh.half_width {
            pts.push(s - d);
            pts.push(s + d);
            let step = d * (1.0 / mesh.ratio - 1.0);
            d += if d < 1.0 { step.min(mesh.max_cell) } else { step };
        }
    }
    pts.retain(|p| *p >= lo && *p <= hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let anti = |v: f64, e: f64| v.signum() * v.abs().powf(e) / e;
    let kern = |v: f64, e: f64, c: f64| c * v.abs().powf(e - 1.0);
    let mut s = 0.0;
    for w in pts.windows(2) {
        let (z0, z1) = (w[0], w[1]);
        let mid = 0.5 * (z0 + z1);
        if (mid - a1).abs() <= (mid - a2).abs() {
            s += c1 * (anti(z1 - a1, e1) - anti(z0 - a1, e1)) * kern(mid - a2, e2, c2);
        } else {
            s += c2 * (anti(z1 - a2, e2) - anti(z0 - a2, e2)) * kern(mid - a1, e1, c1);
        }
    }
    let e = e1 + e2;
    s + 2.0 * c1 * c2 * mesh.half_width.powf(e - 1.0) / (1.0 - e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((s - 2.0 / 15.0).abs() < 1e-13);
    }

    #[test]
    fn log_trapezoid_power() {
        let r = log_grid(1e-3, 1.0, 400);
        let f: Vec<f64> = r.iter().map(|r| r.sqrt()).collect();
        assert!((log_trapezoid(&r, &f) - 2.0 * (1.0 - 1e-3f64.sqrt())).abs() < 1e-4);
    }

    #[test]
    fn box_grid_volume() {
        let b = BoxSpec::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        let (p, v) = b.grid(0.1);
        assert_eq!(p.len() / 2, 10 * 20);
        assert!(((p.len() / 2) as f64 * v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_constants() {
        assert!((sphere_area(2) - 2.0 * std::f64::consts::PI).abs() < 1e-12);
        assert!((ball_volume(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-12);
        assert!((sphere_area(1) - 2.0).abs() < 1e-12);
    }
}
