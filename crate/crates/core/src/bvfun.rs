//! Closed-form BV functions, their gradient measures, fractional maximal
//! functions and potentials of gradient measures.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::potential::{potential_unregularized, potential_with, riesz_const, KernelSpec};
use crate::quad::BoxSpec;
use crate::occupation::ball_masses;
use crate::types::{euclid, DiscreteMeasure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BvKind {
    IndicatorInterval { a: f64, b: f64 },
    /// sum of heights h_k 1_{[x_k, ∞)}
    Staircase { jumps: Vec<(f64, f64)> },
    IndicatorBox { lo: Vec<f64>, hi: Vec<f64> },
    IndicatorBall { center: Vec<f64>, radius: f64 },
    /// A (1 - |x-c|²/R²)² inside the ball, 0 outside
    SmoothBump { center: Vec<f64>, radius: f64, amplitude: f64 },
    /// k_γ restricted to the box [-extent, extent]^n for gradient sampling
    RieszKernel { gamma: f64, extent: f64 },
    Constant { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BvFunction {
    pub dim: usize,
    pub kind: BvKind,
    /// overall multiplier
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Representative {
    pub value: f64,
    pub on_singular_set: bool,
}

impl BvFunction {
    pub fn new(dim: usize, kind: BvKind) -> Result<Self> {
        let f = Self { dim, kind, scale: 1.0 };
        f.validate()?;
        Ok(f)
    }

    pub fn indicator(a: f64, b: f64) -> Result<Self> {
        Self::new(1, BvKind::IndicatorInterval { a, b })
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { scale: self.scale * c, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim;
        if n == 0 || !self.scale.is_finite() {
            return invalid("bad dimension or scale");
        }
        match &self.kind {
            BvKind::IndicatorInterval { a, b } => {
                if n != 1 || !(a < b) {
                    return invalid("indicator_interval needs n = 1 and a < b");
                }
            }
            BvKind::Staircase { jumps } => {
                if n != 1 || jumps.windows(2).any(|w| !(w[0].0 < w[1].0)) {
                    return invalid("staircase needs n = 1 and increasing jump locations");
                }
            }
            BvKind::IndicatorBox { lo, hi } => {
                BoxSpec::new(lo.clone(), hi.clone())?;
                if lo.len() != n {
                    return invalid("box dimension mismatch");
                }
            }
            BvKind::IndicatorBall { center, radius } => {
                if center.len() != n || !(*radius > 0.0) {
                    return invalid("ball needs matching centre and positive radius");
                }
                if n > 3 {
                    return invalid("indicator_ball supported for n <= 3");
                }
            }
            BvKind::SmoothBump { center, radius, .. } => {
                if center.len() != n || !(*radius > 0.0) {
                    return invalid("bump needs matching centre and positive radius");
                }
            }
            BvKind::RieszKernel { gamma, extent } => {
                if n < 2 || !(*gamma > 1.0 && *gamma < n as f64) || !(*extent > 0.0) {
                    return invalid("riesz_kernel_kind needs n >= 2 and 1 < gamma < n");
                }
            }
            BvKind::Constant { .. } => {}
        }
        Ok(())
    }

    /// Approximate limit off the jump set; the symmetric mean on it.
    pub fn evaluate_representative(&self, x: &[f64]) -> Representative {
        let (v, flag) = match &self.kind {
            BvKind::IndicatorInterval { a, b } => {
                let t = x[0];
                if t == *a || t == *b {
                    (0.5, true)
                } else if *a < t && t < *b {
                    (1.0, false)
                } else {
                    (0.0, false)
                }
            }
            BvKind::Staircase { jumps } => {
                let t = x[0];
                let mut v = 0.0;
                let mut flag = false;
                for &(loc, h) in jumps {
                    if t > loc {
                        v += h;
                    } else if t == loc {
                        v += 0.5 * h;
                        flag = h != 0.0;
                    }
                }
                (v, flag)
            }
            BvKind::IndicatorBox { lo, hi } => {
                let mut v = 1.0;
                for k in 0..self.dim {
                    let t = x[k];
                    v *= if t == lo[k] || t == hi[k] {
                        0.5
                    } else if lo[k] < t && t < hi[k] {
                        1.0
                    } else {
                        0.0
                    };
                }
                (v, v > 0.0 && v < 1.0)
            }
            BvKind::IndicatorBall { center, radius } => {
                let d = euclid(x, center);
                if d == *radius {
                    (0.5, true)
                } else if d < *radius {
                    (1.0, false)
                } else {
                    (0.0, false)
                }
            }
            BvKind::SmoothBump { center, radius, amplitude } => {
                let u = euclid(x, center).powi(2) / (radius * radius);
                (if u < 1.0 { amplitude * (1.0 - u).powi(2) } else { 0.0 }, false)
            }
            BvKind::RieszKernel { gamma, .. } => {
                let d = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if d == 0.0 {
                    return Representative { value: f64::INFINITY, on_singular_set: true };
                }
                (riesz_const(*gamma, self.dim) * d.powf(gamma - self.dim as f64), false)
            }
            BvKind::Constant { value } => (*value, false),
        };
        Representative { value: self.scale * v, on_singular_set: flag }
    }

    /// Whether ‖Dφ‖ is a finite sum of exact atoms (n = 1 jump functions).
    pub fn has_exact_atoms(&self) -> bool {
        matches!(self.kind, BvKind::IndicatorInterval { .. } | BvKind::Staircase { .. })
    }

    /// ‖Dφ‖ as weighted atoms; `h` is the surface/volume patch size and the
    /// cell width of the result.
    pub fn gradient_measure(&self, h: f64) -> Result<DiscreteMeasure> {
        if !(h > 0.0) {
            return invalid("resolution must be positive");
        }
        let n = self.dim;
        let s = self.scale.abs();
        let mut m = DiscreteMeasure::empty(n, h);
        match &self.kind {
            BvKind::IndicatorInterval { a, b } => {
                m.push(&[*a], s);
                m.push(&[*b], s);
            }
            BvKind::Staircase { jumps } => {
                for &(loc, ht) in jumps {
                    m.push(&[loc], s * ht.abs());
                }
            }
            BvKind::IndicatorBox { lo, hi } => {
                for k in 0..n {
                    for side in [lo[k], hi[k]] {
                        face_atoms(&mut m, lo, hi, k, side, h, s);
                    }
                }
            }
            BvKind::IndicatorBall { center, radius } => sphere_atoms(&mut m, center, *radius, h, s),
            BvKind::SmoothBump { center, radius, amplitude } => {
                let bx = BoxSpec::cube(center, *radius);
                let (pts, vol) = bx.grid(h);
                for x in pts.chunks(n) {
                    let r = euclid(x, center);
                    let u = r * r / (radius * radius);
                    if u < 1.0 {
                        let g = 4.0 * amplitude.abs() * (1.0 - u) * r / (radius * radius);
                        if g > 0.0 {
                            m.push(x, s * g * vol);
                        }
                    }
                }
            }
            BvKind::RieszKernel { gamma, extent } => {
                // an even number of cells per axis keeps the origin off the grid
                let cells = (((2.0 * extent / h).ceil() as usize).div_ceil(2) * 2).max(2);
                let step = 2.0 * extent / cells as f64;
                let bx = BoxSpec::cube(&vec![0.0; n], *extent);
                let (pts, vol) = bx.grid(step);
                let c = riesz_const(*gamma, n) * (n as f64 - gamma);
                for x in pts.chunks(n) {
                    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                    m.push(x, s * c * r.powf(gamma - n as f64 - 1.0) * vol);
                }
            }
            BvKind::Constant { .. } => {}
        }
        Ok(m)
    }
}

fn face_atoms(m: &mut DiscreteMeasure, lo: &[f64], hi: &[f64], axis: usize, side: f64, h: f64, s: f64) {
    let n = lo.len();
    if n == 1 {
        m.push(&[side], s);
        return;
    }
    let others: Vec<usize> = (0..n).filter(|&k| k != axis).collect();
    let face_lo: Vec<f64> = others.iter().map(|&k| lo[k]).collect();
    let face_hi: Vec<f64> = others.iter().map(|&k| hi[k]).collect();
    let (pts, area) = BoxSpec { lo: face_lo, hi: face_hi }.grid(h);
    for y in pts.chunks(n - 1) {
        let mut x = Vec::with_capacity(n);
        let mut it = y.iter();
        for k in 0..n {
            x.push(if k == axis { side } else { *it.next().unwrap() });
        }
        m.push(&x, s * area);
    }
}

// Equal arcs (n = 2) or equal-area patches in equal-height bands (n = 3).
fn sphere_atoms(m: &mut DiscreteMeasure, c: &[f64], r: f64, h: f64, s: f64) {
    use std::f64::consts::PI;
    match c.len() {
        1 => {
            m.push(&[c[0] - r], s);
            m.push(&[c[0] + r], s);
        }
        2 => {
            let k = ((2.0 * PI * r / h).ceil() as usize).max(8);
            let arc = 2.0 * PI * r / k as f64;
            for j in 0..k {
                let th = (j as f64 + 0.5) * 2.0 * PI / k as f64;
                m.push(&[c[0] + r * th.cos(), c[1] + r * th.sin()], s * arc);
            }
        }
        _ => {
            let bands = ((PI * r / h).ceil() as usize).max(4);
            let band_area = 4.0 * PI * r * r / bands as f64;
            for b in 0..bands {
                let z = -r + (b as f64 + 0.5) * 2.0 * r / bands as f64;
                let rho = (r * r - z * z).sqrt();
                let k = ((2.0 * PI * rho / h).ceil() as usize).max(4);
                for j in 0..k {
                    let th = (j as f64 + 0.5) * 2.0 * PI / k as f64;
                    m.push(&[c[0] + rho * th.cos(), c[1] + rho * th.sin(), c[2] + z], s * band_area / k as f64);
                }
            }
        }
    }
}

/// Log-spaced radii from the cell width to twice the diameter of supp ∪ {x}.
pub fn maximal_radii(m: &DiscreteMeasure, x: &[f64], nodes: usize) -> Vec<f64> {
    crate::potential::wolff_radii(m, x, nodes)
}

/// M_γ ν(x) = max over the radius grid of r^{γ-n} ν(B(x, r)).
pub fn maximal_function(measure: &DiscreteMeasure, gamma: f64, x: &[f64], r_grid: &[f64]) -> Result<f64> {
    let n = measure.dim() as f64;
    if !(gamma > 0.0 && gamma < n) {
        return invalid("need 0 < gamma < n");
    }
    let masses = ball_masses(measure, x, r_grid);
    Ok(r_grid.iter().zip(masses).map(|(r, mb)| r.powf(gamma - n) * mb).fold(0.0, f64::max))
}

/// U^{1-s}‖Dφ‖ with the gradient measure built once.
#[derive(Debug, Clone)]
pub struct GradientPotential {
    measure: DiscreteMeasure,
    kernel: Option<KernelSpec>,
    exact: bool,
}

impl GradientPotential {
    pub fn new(phi: &BvFunction, s: f64, h: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return invalid("s must lie in (0, 1)");
        }
        let measure = phi.gradient_measure(h)?;
        let kernel = if measure.mass() > 0.0 { Some(KernelSpec::new(1.0 - s, phi.dim)?) } else { None };
        Ok(Self { measure, kernel, exact: phi.has_exact_atoms() })
    }

    pub fn measure(&self) -> &DiscreteMeasure {
        &self.measure
    }

    pub fn at(&self, x: &[f64]) -> f64 {
        match &self.kernel {
            None => 0.0,
            Some(k) if self.exact => potential_unregularized(k, &self.measure, x),
            Some(k) => potential_with(k, &self.measure, x),
        }
    }
}

pub fn gradient_potential(phi: &BvFunction, s: f64, x: &[f64], h: f64) -> Result<f64> {
    Ok(GradientPotential::new(phi, s, h)?.at(x))
}
