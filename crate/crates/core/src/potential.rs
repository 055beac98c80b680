//! Riesz kernels, potentials, energies and Wolff potentials.
//!
//! k_γ(x) = c(γ,n)|x|^{γ-n} with c(γ,n) = Γ((n-γ)/2) / (2^γ π^{n/2} Γ(γ/2)).
//! With this constant k_{γ1} * k_{γ2} = k_{γ1+γ2}, which the tests check
//! numerically.
//!
//! Atoms closer than ρ = cell_width/2 to the evaluation point contribute the
//! ball average of the kernel, k̄_γ(ρ) = c(γ,n)(n/γ)ρ^{γ-n}.

use rayon::prelude::*;
use statrs::function::gamma::gamma as gamma_fn;

use crate::error::{invalid, Error, Result};
use crate::occupation::ball_masses;
use crate::quad::{gauss_legendre, log_grid, log_trapezoid, power_kernel_product_1d, sphere_area, BoxSpec, ConvMesh};
use crate::types::{euclid, DiscreteMeasure, EstimateReport};

/// Above this fraction of mass on coincident atoms a measure is treated as
/// having point masses.
pub const POINT_MASS_FRACTION: f64 = 0.01;

pub fn riesz_const(gamma: f64, n: usize) -> f64 {
    let nf = n as f64;
    gamma_fn((nf - gamma) / 2.0) / (2f64.powf(gamma) * std::f64::consts::PI.powf(nf / 2.0) * gamma_fn(gamma / 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub gamma: f64,
    pub dim: usize,
    pub normalization: f64,
}

impl KernelSpec {
    pub fn new(gamma: f64, dim: usize) -> Result<Self> {
        check_gamma(gamma, dim)?;
        Ok(Self { gamma, dim, normalization: riesz_const(gamma, dim) })
    }

    pub fn at_distance(&self, r: f64) -> f64 {
        if r == 0.0 {
            f64::INFINITY
        } else {
            self.normalization * r.powf(self.gamma - self.dim as f64)
        }
    }

    /// Ball average of the kernel over B(0, ρ).
    pub fn averaged(&self, rho: f64) -> f64 {
        self.normalization * (self.dim as f64 / self.gamma) * rho.powf(self.gamma - self.dim as f64)
    }
}

fn check_gamma(gamma: f64, n: usize) -> Result<()> {
    if !(gamma > 0.0 && gamma < n as f64) {
        return invalid(format!("gamma = {gamma} outside (0, {n})"));
    }
    Ok(())
}

pub fn riesz_kernel(spec: &KernelSpec, x: &[f64]) -> f64 {
    spec.at_distance(x.iter().map(|v| v * v).sum::<f64>().sqrt())
}

pub fn riesz_potential(measure: &DiscreteMeasure, gamma: f64, x: &[f64]) -> Result<f64> {
    let k = KernelSpec::new(gamma, measure.dim())?;
    Ok(potential_with(&k, measure, x))
}

pub(crate) fn potential_with(k: &KernelSpec, m: &DiscreteMeasure, x: &[f64]) -> f64 {
    let rho = m.cell_width() / 2.0;
    let near = k.averaged(rho);
    let mut s = 0.0;
    for i in 0..m.len() {
        let d = euclid(m.atom(i), x);
        s += m.weight(i) * if d < rho { near } else { k.at_distance(d) };
    }
    s
}

/// Potential without the near-atom average; +inf on an atom.
pub fn potential_unregularized(k: &KernelSpec, m: &DiscreteMeasure, x: &[f64]) -> f64 {
    (0..m.len()).map(|i| m.weight(i) * k.at_distance(euclid(m.atom(i), x))).sum()
}

/// Quadrature controls for `energy`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyGrid {
    pub bbox: BoxSpec,
    pub dx: f64,
}

impl EnergyGrid {
    /// Box around the atoms with a margin of at least the atom extent, and a
    /// spacing of `cells_per_width` grid cells per measure cell width (capped
    /// at `max_points_per_axis`).
    pub fn auto(m: &DiscreteMeasure, cells_per_width: f64, max_points_per_axis: usize) -> Self {
        let n = m.dim();
        let (lo, hi) = m.bbox().unwrap_or((vec![0.0; n], vec![0.0; n]));
        let extent = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max);
        let margin = extent.max(8.0 * m.cell_width());
        let centre: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let half = 0.5 * extent + margin;
        let dx = (m.cell_width() / cells_per_width).max(2.0 * half / max_points_per_axis as f64);
        Self { bbox: BoxSpec::cube(&centre, half), dx }
    }
}

/// Weight factor applied inside energy integrals: w(x) = |x|^{e} (e = 0: none).
#[derive(Debug, Clone, Copy, PartialEq)]
struct RadialFactor(f64);

/// I_q^γ(μ) = ∫ (U^γ μ)^q dx: grid sum over the box plus the far-field tail;
/// refinement_delta from one halving of dx (the finer value is reported).
pub fn energy(measure: &DiscreteMeasure, gamma: f64, q: f64, grid: &EnergyGrid) -> Result<EstimateReport> {
    energy_weighted(measure, gamma, q, grid, RadialFactor(0.0))
}

fn energy_weighted(
    m: &DiscreteMeasure,
    gamma: f64,
    q: f64,
    grid: &EnergyGrid,
    factor: RadialFactor,
) -> Result<EstimateReport> {
    let n = m.dim();
    let k = KernelSpec::new(gamma, n)?;
    if q < 1.0 {
        return invalid("energy needs q >= 1");
    }
    if grid.bbox.dim() != n {
        return invalid("box dimension mismatch");
    }
    if m.is_empty() || m.mass() == 0.0 {
        return Ok(EstimateReport::new(0.0).with("dx", grid.dx));
    }
    let nf = n as f64;
    let decay = q * (nf - gamma) - factor.0;
    if decay <= nf {
        return Ok(EstimateReport::infinite("far-field tail diverges: q(n-gamma) <= n").with("dx", grid.dx));
    }
    if q * (nf - gamma) >= nf && m.atomic_fraction() > POINT_MASS_FRACTION {
        return Ok(EstimateReport::infinite("point mass: local singularity not integrable").with("dx", grid.dx));
    }
    let coarse = energy_on_grid(&k, m, q, &grid.bbox, grid.dx, factor);
    let fine = energy_on_grid(&k, m, q, &grid.bbox, grid.dx / 2.0, factor);
    Ok(EstimateReport::new(fine)
        .with("dx", grid.dx / 2.0)
        .with("cell_width", m.cell_width())
        .delta((fine - coarse).abs()))
}

fn energy_on_grid(k: &KernelSpec, m: &DiscreteMeasure, q: f64, bbox: &BoxSpec, dx: f64, factor: RadialFactor) -> f64 {
    let n = m.dim();
    let (pts, vol) = bbox.grid(dx);
    let mass = m.mass();
    let bary: Vec<f64> = (0..n)
        .map(|c| (0..m.len()).map(|i| m.weight(i) * m.atom(i)[c]).sum::<f64>() / mass)
        .collect();
    // inscribed radius of the box around the barycentre
    let r_in = (0..n).map(|c| (bary[c] - bbox.lo[c]).min(bbox.hi[c] - bary[c])).fold(f64::INFINITY, f64::min);
    let far = |x: &[f64]| (k.at_distance(euclid(x, &bary)) * mass).powf(q) * weight_at(factor, x);
    let terms: Vec<(f64, f64)> = pts
        .par_chunks(n)
        .map(|x| {
            let u = potential_with(k, m, x).powf(q) * weight_at(factor, x);
            let correction = if n > 1 && euclid(x, &bary) >= r_in { far(x) } else { 0.0 };
            (u, correction)
        })
        .collect();
    let body: f64 = terms.iter().map(|t| t.0).sum::<f64>() * vol;
    let nf = n as f64;
    let decay = q * (nf - k.gamma) - factor.0;
    let cm = k.normalization * mass;
    let tail = if n == 1 {
        let p = 1.0 - decay;
        let a = bbox.hi[0] - bary[0];
        let b = bary[0] - bbox.lo[0];
        cm.powf(q) * (a.powf(p) + b.powf(p)) / (decay - 1.0)
    } else {
        // beyond the inscribed ball analytically, minus the part of that
        // region already covered by the grid
        let ball = cm.powf(q) * sphere_area(n) * r_in.powf(nf - decay) / (decay - nf);
        let overlap: f64 = terms.iter().map(|t| t.1).sum::<f64>() * vol;
        (ball - overlap).max(0.0)
    };
    body + tail
}

fn weight_at(f: RadialFactor, x: &[f64]) -> f64 {
    if f.0 == 0.0 {
        1.0
    } else {
        x.iter().map(|v| v * v).sum::<f64>().sqrt().powf(f.0)
    }
}

/// ∫ (U^γ μ)^p dν.
pub fn mutual_energy(mu: &DiscreteMeasure, nu: &DiscreteMeasure, gamma: f64, p: u32) -> Result<f64> {
    if p < 1 {
        return invalid("p must be a positive integer");
    }
    let k = KernelSpec::new(gamma, mu.dim())?;
    let vals: Vec<f64> = (0..nu.len())
        .into_par_iter()
        .map(|i| nu.weight(i) * potential_with(&k, mu, nu.atom(i)).powi(p as i32))
        .collect();
    Ok(vals.iter().sum())
}

/// ‖μ‖ in the homogeneous Sobolev space of order alpha < 0: I_q^{-alpha}(μ)^{1/q}.
pub fn negative_sobolev_norm(measure: &DiscreteMeasure, alpha: f64, q: f64, grid: &EnergyGrid) -> Result<EstimateReport> {
    let n = measure.dim() as f64;
    if !(alpha < 0.0 && alpha > -n) || !(q > 1.0) {
        return invalid("need -n < alpha < 0 and q > 1");
    }
    let e = energy(measure, -alpha, q, grid)?;
    let v = e.value.powf(1.0 / q);
    let delta = e.refinement_delta.map(|d| {
        let coarse = (e.value - d).max(0.0).powf(1.0 / q);
        let coarse2 = (e.value + d).powf(1.0 / q);
        (v - coarse).abs().max((coarse2 - v).abs())
    });
    Ok(EstimateReport { value: v, refinement_delta: delta, ..e })
}

/// Both sides of the convolution identity for integer p ≤ 2 (n = 1):
/// lhs = ∫(U^{γ1+γ2}μ)^p dν, rhs = Σ_x ν_x (∫ k_{γ1}(x-z) U^{γ2}μ(z) dz)^p.
/// Pairs closer than cell_width/2 use the cell-averaged k_{γ1+γ2} on both sides.
pub fn multi_energy_identity_check(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    gamma1: f64,
    gamma2: f64,
    p: u32,
    mesh: &ConvMesh,
) -> Result<(f64, f64)> {
    if p > 2 {
        return Err(Error::IdentityOrder);
    }
    if p == 0 || !(gamma1 > 0.0 && gamma2 > 0.0) {
        return invalid("need p >= 1 and positive orders");
    }
    let n = mu.dim();
    if n != 1 {
        return invalid("z-quadrature implemented for n = 1");
    }
    let ks = KernelSpec::new(gamma1 + gamma2, n)?;
    let (c1, c2) = (riesz_const(gamma1, n), riesz_const(gamma2, n));
    let rho = mu.cell_width() / 2.0;
    let lhs = mutual_energy(mu, nu, gamma1 + gamma2, p)?;
    let rhs_terms: Vec<f64> = (0..nu.len())
        .into_par_iter()
        .map(|i| {
            let x = nu.atom(i)[0];
            let z_int: f64 = (0..mu.len())
                .map(|j| {
                    let a = mu.atom(j)[0];
                    let conv = if (x - a).abs() < rho {
                        ks.averaged(rho)
                    } else {
                        power_kernel_product_1d(x, gamma1, c1, a, gamma2, c2, mesh)
                    };
                    mu.weight(j) * conv
                })
                .sum();
            nu.weight(i) * z_int.powi(p as i32)
        })
        .collect();
    Ok((lhs, rhs_terms.iter().sum()))
}

/// Numerical k_{γ1} * k_{γ2} at distance r in n = 1.
pub fn kernel_convolution_1d(gamma1: f64, gamma2: f64, r: f64, mesh: &ConvMesh) -> f64 {
    power_kernel_product_1d(r, gamma1, riesz_const(gamma1, 1), 0.0, gamma2, riesz_const(gamma2, 1), mesh)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightSpec {
    Unit,
    /// w(x) = |x|^{alpha_w - n}
    RadialPower { alpha_w: f64 },
}

impl WeightSpec {
    /// growth exponent of w(B(x, r)) for large r
    fn growth(&self, n: usize) -> f64 {
        match self {
            WeightSpec::Unit => n as f64,
            WeightSpec::RadialPower { alpha_w } => *alpha_w,
        }
    }
}

/// w(B(x, r)) for the supported weights. Unit weight is normalised to r^n
/// (the unit-ball volume is left out, matching the classical Wolff potential).
pub fn weight_of_ball(weight: &WeightSpec, x: &[f64], r: f64) -> Result<f64> {
    let n = x.len();
    match *weight {
        WeightSpec::Unit => Ok(r.powi(n as i32)),
        WeightSpec::RadialPower { alpha_w } => {
            if !(alpha_w > 0.0) {
                return invalid("radial weight needs alpha_w > 0");
            }
            let d = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            match n {
                1 => {
                    let f = |y: f64| y.signum() * y.abs().powf(alpha_w) / alpha_w;
                    Ok(f(d + r) - f(d - r))
                }
                2 | 3 => Ok(radial_ball_weight(n, alpha_w, d, r)),
                _ => invalid("radial weights supported for n <= 3"),
            }
        }
    }
}

// ∫_{B(x,r)} |y|^{a-n} dy with |x| = d, integrating over spheres |y| = s.
fn radial_ball_weight(n: usize, a: f64, d: f64, r: f64) -> f64 {
    let area = sphere_area(n);
    let mut total = 0.0;
    let inner = r - d;
    if inner > 0.0 {
        total += area * inner.powf(a) / a;
    }
    let s0 = inner.abs();
    let s1 = d + r;
    if s1 <= s0 || d == 0.0 {
        return total;
    }
    // fraction of the sphere |y| = s inside B(x, r)
    let frac = |s: f64| {
        let c = ((s * s + d * d - r * r) / (2.0 * s * d)).clamp(-1.0, 1.0);
        if n == 2 {
            c.acos() / std::f64::consts::PI
        } else {
            0.5 * (1.0 - c)
        }
    };
    let (gx, gw) = gauss_legendre(64);
    // substitution s = s0 + (s1 - s0) sin^2(θ) tames the square-root endpoints
    let mut part = 0.0;
    for (t, w) in gx.iter().zip(&gw) {
        let th = 0.25 * std::f64::consts::PI * (t + 1.0);
        let sn = th.sin();
        let s = s0 + (s1 - s0) * sn * sn;
        let ds = (s1 - s0) * 2.0 * sn * th.cos() * 0.25 * std::f64::consts::PI;
        if s > 0.0 {
            part += w * area * s.powf(a - 1.0) * frac(s) * ds;
        }
    }
    total + part
}

/// Radius grid for the Wolff integral: log-uniform from the cell width to
/// max(2 diam(supp ∪ {x}), 2 cell width).
pub fn wolff_radii(m: &DiscreteMeasure, x: &[f64], nodes: usize) -> Vec<f64> {
    let mut diam = 0.0f64;
    if let Some((lo, hi)) = m.bbox() {
        let lo2: Vec<f64> = lo.iter().zip(x).map(|(a, b)| a.min(*b)).collect();
        let hi2: Vec<f64> = hi.iter().zip(x).map(|(a, b)| a.max(*b)).collect();
        diam = euclid(&lo2, &hi2);
    }
    let h = m.cell_width();
    log_grid(h, (2.0 * diam).max(2.0 * h), nodes.max(64))
}

/// Wolff potential ∫_0^∞ (r^{γp} μ(B(x,r)) / w(B(x,r)))^{q-1} dr/r.
/// Below r_grid[0] the mass is taken as spread uniformly at that scale; above
/// the last radius the ball holds the total mass.
pub fn wolff_potential(
    measure: &DiscreteMeasure,
    gamma: f64,
    p: f64,
    x: &[f64],
    weight: &WeightSpec,
    r_grid: &[f64],
) -> Result<f64> {
    let n = measure.dim();
    if !(p > 1.0) || !(gamma > 0.0 && gamma < n as f64 / p) {
        return invalid("need p > 1 and 0 < gamma < n/p");
    }
    if r_grid.len() < 2 || r_grid.windows(2).any(|w| !(w[0] < w[1])) || !(r_grid[0] > 0.0) {
        return invalid("radius grid must be positive and increasing");
    }
    if measure.is_empty() || measure.mass() == 0.0 {
        return Ok(0.0);
    }
    let q1 = 1.0 / (p - 1.0);
    let gp = gamma * p;
    let masses = ball_masses(measure, x, r_grid);
    let mut f = Vec::with_capacity(r_grid.len());
    let mut wb = Vec::with_capacity(r_grid.len());
    for (&r, &mb) in r_grid.iter().zip(&masses) {
        let w = weight_of_ball(weight, x, r)?;
        wb.push(w);
        f.push((r.powf(gp) * mb / w).powf(q1));
    }
    let body = log_trapezoid(r_grid, &f);
    let head = f[0] / (gp * q1);
    let growth = weight.growth(n);
    let tail = if growth > gp {
        let last = r_grid.len() - 1;
        (r_grid[last].powf(gp) * measure.mass() / wb[last]).powf(q1) / ((growth - gp) * q1)
    } else {
        f64::INFINITY
    };
    Ok(head + body + tail)
}

/// Both sides of the Wolff comparison: (∫(U^γμ)^q w^{-q/p} dx, n ∫ W dμ)
/// with 1/p + 1/q = 1. The factor n appears only for radial weights.
pub fn wolff_energy_comparison(
    measure: &DiscreteMeasure,
    gamma: f64,
    p: f64,
    weight: &WeightSpec,
    grid: &EnergyGrid,
    radius_nodes: usize,
) -> Result<(f64, f64)> {
    let n = measure.dim();
    if !(p > 1.0) {
        return invalid("p must exceed 1");
    }
    let q = p / (p - 1.0);
    if measure.is_empty() {
        return Ok((0.0, 0.0));
    }
    let factor = match weight {
        WeightSpec::Unit => RadialFactor(0.0),
        WeightSpec::RadialPower { alpha_w } => RadialFactor(-(alpha_w - n as f64) * q / p),
    };
    let lhs = energy_weighted(measure, gamma, q, grid, factor)?.value;
    let vals: Vec<Result<f64>> = (0..measure.len())
        .into_par_iter()
        .map(|i| {
            let x = measure.atom(i);
            let r = wolff_radii(measure, x, radius_nodes);
            Ok(measure.weight(i) * wolff_potential(measure, gamma, p, x, weight, &r)?)
        })
        .collect();
    let mut rhs = 0.0;
    for v in vals {
        rhs += v?;
    }
    if matches!(weight, WeightSpec::RadialPower { .. }) {
        rhs *= n as f64;
    }
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::occupation::occupation_full;
    use crate::types::{Interp, SampledPath};
    use proptest::prelude::*;
    use rand::Rng;

    fn lebesgue(n_atoms: usize) -> DiscreteMeasure {
        occupation_full(&SampledPath::from_fn(1.0, n_atoms, Interp::Linear, |t| t).unwrap())
    }

    #[test]
    fn constant_values() {
        // c(0.5, 1) = 1/sqrt(2π)
        assert!((riesz_const(0.5, 1) - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-14);
        // c(1, 3) = 1/(4π): the Newtonian kernel 1/(4π|x|)... of order 2 is Γ(1/2)/(4 π^{3/2} Γ(1)) = 1/(4π)
        assert!((riesz_const(2.0, 3) - 1.0 / (4.0 * std::f64::consts::PI)).abs() < 1e-14);
    }

    #[test]
    fn kernel_examples() {
        let k = KernelSpec::new(0.5, 1).unwrap();
        assert_eq!(riesz_kernel(&k, &[1.0]), riesz_const(0.5, 1));
        assert_eq!(riesz_kernel(&k, &[0.0]), f64::INFINITY);
        let mut prev = f64::INFINITY;
        for r in [0.1, 1.0, 10.0, 1e3] {
            let v = riesz_kernel(&k, &[r]);
            assert!(v < prev);
            prev = v;
        }
        assert!(KernelSpec::new(1.0, 1).is_err());
    }

    #[test]
    fn semigroup_pins_normalization() {
        let exact = riesz_const(0.7, 1);
        let v = kernel_convolution_1d(0.3, 0.4, 1.0, &ConvMesh::level(2));
        assert!((v / exact - 1.0).abs() < 0.01, "{v} vs {exact}");
    }

    #[test]
    fn potential_examples() {
        let d = DiscreteMeasure::dirac(&[0.3], 1.0, 1e-3);
        let u = riesz_potential(&d, 0.5, &[2.3]).unwrap();
        assert_eq!(u, riesz_const(0.5, 1) * 2f64.powf(-0.5));
        assert_eq!(riesz_potential(&DiscreteMeasure::empty(1, 0.1), 0.5, &[0.0]).unwrap(), 0.0);
        // Lebesgue on [0,1] at x = 0.5: c ∫|0.5-y|^{-1/2} dy = c * 4 * sqrt(0.5)
        let exact = riesz_const(0.5, 1) * 4.0 * 0.5f64.sqrt();
        let err = |n: usize| (riesz_potential(&lebesgue(n), 0.5, &[0.5]).unwrap() / exact - 1.0).abs();
        let (e12, e14) = (err(1 << 12), err(1 << 14));
        assert!(e14 < 0.01 && e14 < e12, "{e12} {e14}");
        let m = lebesgue(64);
        assert!(riesz_potential(&m, 1.5, &[0.0]).is_err());
    }

    #[test]
    fn energy_single_atom_closed_form() {
        // unit atom at 0, n=1, γ=0.25, q=2: constant k̄ inside ρ, c|x|^{-3/4} outside
        let h = 0.01;
        let d = DiscreteMeasure::dirac(&[0.0], 1.0, h);
        let c = riesz_const(0.25, 1);
        let rho = h / 2.0;
        let kbar = c * 4.0 * rho.powf(-0.75);
        let exact = 2.0 * rho * kbar * kbar + 2.0 * c * c * rho.powf(-0.5) / 0.5;
        let grid = EnergyGrid { bbox: BoxSpec::cube(&[0.0], 1.0), dx: h / 64.0 };
        let e = energy(&d, 0.25, 2.0, &grid).unwrap();
        assert!((e.value / exact - 1.0).abs() < 2e-3, "{} vs {exact}", e.value);
        assert!(e.refinement_delta.unwrap() < 0.01 * exact);
    }

    #[test]
    fn energy_edge_cases() {
        let grid = EnergyGrid { bbox: BoxSpec::cube(&[0.0], 1.0), dx: 0.01 };
        let e = energy(&DiscreteMeasure::empty(1, 0.1), 0.25, 2.0, &grid).unwrap();
        assert_eq!(e.value, 0.0);
        let d = DiscreteMeasure::dirac(&[0.0], 1.0, 0.01);
        assert!(energy(&d, 0.6, 2.0, &grid).unwrap().is_infinite());
        let stuck = DiscreteMeasure::new(1, vec![0.0; 10], vec![0.1; 10], 0.01).unwrap();
        assert!(energy(&stuck, 0.25, 2.0, &grid).unwrap().is_infinite());
    }

    #[test]
    fn energy_homogeneity_and_translation() {
        let m = lebesgue(256);
        let grid = EnergyGrid::auto(&m, 2.0, 4096);
        let e = energy(&m, 0.3, 2.0, &grid).unwrap().value;
        let e3 = energy(&m.scaled(3.0), 0.3, 2.0, &grid).unwrap().value;
        assert!((e3 / e - 9.0).abs() < 1e-12);
        let shift = 0.5;
        let g2 = EnergyGrid { bbox: BoxSpec::new(vec![grid.bbox.lo[0] + shift], vec![grid.bbox.hi[0] + shift]).unwrap(), dx: grid.dx };
        let et = energy(&m.translated(&[shift]), 0.3, 2.0, &g2).unwrap().value;
        assert!((et / e - 1.0).abs() < 1e-9);
    }

    #[test]
    fn energy_two_dimensional_converges() {
        let mut pts = vec![];
        for i in 0..16 {
            for j in 0..16 {
                pts.push(i as f64 / 16.0);
                pts.push(j as f64 / 16.0);
            }
        }
        let m = DiscreteMeasure::new(2, pts, vec![1.0 / 256.0; 256], 1.0 / 16.0).unwrap();
        let grid = EnergyGrid::auto(&m, 4.0, 512);
        let e = energy(&m, 0.8, 2.0, &grid).unwrap();
        assert!(e.value.is_finite() && e.value > 0.0);
        assert!(e.refinement_delta.unwrap() < 0.05 * e.value, "{:?}", e);
    }

    #[test]
    fn mutual_energy_examples() {
        let a = DiscreteMeasure::dirac(&[0.0], 1.0, 0.1);
        assert_eq!(mutual_energy(&a, &DiscreteMeasure::empty(1, 0.1), 0.5, 1).unwrap(), 0.0);
        let k = KernelSpec::new(0.5, 1).unwrap();
        assert_eq!(mutual_energy(&a, &a, 0.5, 1).unwrap(), k.averaged(0.05));
        let b = DiscreteMeasure::dirac(&[1.0], 1.0, 0.1);
        assert_eq!(mutual_energy(&a, &b, 0.5, 1).unwrap(), riesz_const(0.5, 1));
    }

    #[test]
    fn identity_single_atoms() {
        let a = DiscreteMeasure::dirac(&[0.0], 1.0, 1e-3);
        let b = DiscreteMeasure::dirac(&[1.0], 1.0, 1e-3);
        let (l, r) = multi_energy_identity_check(&a, &b, 0.2, 0.2, 1, &ConvMesh::level(1)).unwrap();
        assert_eq!(l, riesz_const(0.4, 1));
        assert!((r / l - 1.0).abs() < 0.01);
        assert_eq!(multi_energy_identity_check(&a, &b, 0.2, 0.2, 3, &ConvMesh::level(0)), Err(Error::IdentityOrder));
        let (l, r) = multi_energy_identity_check(&a, &DiscreteMeasure::empty(1, 0.1), 0.2, 0.2, 1, &ConvMesh::level(0)).unwrap();
        assert_eq!((l, r), (0.0, 0.0));
    }

    #[test]
    fn identity_small_random_measures() {
        let mut rng = crate::pathgen::rng_for(4, 0);
        let mut errs = vec![];
        for _ in 0..4 {
            let k = rng.random_range(2..=5);
            let mk = |rng: &mut rand_chacha::ChaCha20Rng| {
                let pts: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
                let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
                DiscreteMeasure::new(1, pts, w, 1e-4).unwrap()
            };
            let mu = mk(&mut rng);
            let nu = mk(&mut rng);
            let (l, r) = multi_energy_identity_check(&mu, &nu, 0.25, 0.35, 2, &ConvMesh::level(2)).unwrap();
            errs.push((r / l - 1.0).abs());
        }
        assert!(errs.iter().all(|e| *e < 0.03), "{errs:?}");
    }

    #[test]
    fn wolff_single_atom_oracle() {
        let h = 1e-3;
        let d = DiscreteMeasure::dirac(&[0.0], 1.0, h);
        let r = wolff_radii(&d, &[0.0], 64);
        let w = wolff_potential(&d, 0.25, 2.0, &[0.0], &WeightSpec::Unit, &r).unwrap();
        assert!((w / (4.0 * h.powf(-0.5)) - 1.0).abs() < 1e-3, "{w}");
        assert_eq!(wolff_potential(&DiscreteMeasure::empty(1, h), 0.25, 2.0, &[0.0], &WeightSpec::Unit, &r).unwrap(), 0.0);
        assert!(wolff_potential(&d, 0.6, 2.0, &[0.0], &WeightSpec::Unit, &r).is_err());
    }

    #[test]
    fn radial_weight_ball_integrals() {
        // n = 2 against a brute-force polar grid
        let (a, d, r) = (1.5, 3.0, 1.2);
        let exact = radial_ball_weight(2, a, d, r);
        let m = 1500;
        let mut s = 0.0;
        let hcell = 2.0 * r / m as f64;
        for i in 0..m {
            for j in 0..m {
                let x = -r + (i as f64 + 0.5) * hcell;
                let y = -r + (j as f64 + 0.5) * hcell;
                if x * x + y * y < r * r {
                    s += ((d + x).powi(2) + y * y).sqrt().powf(a - 2.0) * hcell * hcell;
                }
            }
        }
        assert!((s / exact - 1.0).abs() < 1e-3, "{s} {exact}");
        // ball centred at 0 in n = 3: 4π r^a / a
        let v = radial_ball_weight(3, 2.0, 0.0, 1.5);
        assert!((v - 4.0 * std::f64::consts::PI * 1.5f64.powi(2) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn wolff_bounded_for_regular_measure() {
        // Lebesgue on [0,1] is upper 1-regular and n - γp = 0.4 < 1
        let m = lebesgue(4096);
        let mut rng = crate::pathgen::rng_for(8, 0);
        let vals: Vec<f64> = (0..100)
            .map(|_| {
                let x = [rng.random_range(-0.5..1.5)];
                let r = wolff_radii(&m, &x, 64);
                wolff_potential(&m, 0.3, 2.0, &x, &WeightSpec::Unit, &r).unwrap()
            })
            .collect();
        let max = vals.iter().cloned().fold(0.0, f64::max);
        assert!(max.is_finite() && max < 20.0, "{max}");
    }

    #[test]
    fn wolff_radial_weight_comparability() {
        // μ supported in |x| >= 2, n = 1, w = |x|^{1/H - 1}
        let hurst = 0.5;
        let a = 1.0 / hurst;
        let m = DiscreteMeasure::new(1, vec![2.5, 3.0, 4.0], vec![0.3, 0.5, 0.2], 1e-3).unwrap();
        let mut ratios = vec![];
        for x in [2.2, 2.5, 3.3, 5.0] {
            let r = wolff_radii(&m, &[x], 128);
            let wu = wolff_potential(&m, 0.2, 2.0, &[x], &WeightSpec::Unit, &r).unwrap();
            let ww = wolff_potential(&m, 0.2, 2.0, &[x], &WeightSpec::RadialPower { alpha_w: a }, &r).unwrap();
            ratios.push(ww / (wu * f64::powf(x, 1.0 - a)));
        }
        let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
        assert!(hi / lo < 10.0, "{ratios:?}");
    }

    #[test]
    fn wolff_energy_single_atom() {
        let d = DiscreteMeasure::dirac(&[0.0], 1.0, 1e-2);
        let grid = EnergyGrid { bbox: BoxSpec::cube(&[0.0], 1.0), dx: 1e-2 / 16.0 };
        let (l, r) = wolff_energy_comparison(&d, 0.25, 2.0, &WeightSpec::Unit, &grid, 64).unwrap();
        assert!(l.is_finite() && r.is_finite() && l > 0.0 && r > 0.0);
        let (l, r) = wolff_energy_comparison(&DiscreteMeasure::empty(1, 0.1), 0.25, 2.0, &WeightSpec::Unit, &grid, 64).unwrap();
        assert_eq!((l, r), (0.0, 0.0));
    }

    #[test]
    fn wolff_energy_family_comparability() {
        let mut rng = crate::pathgen::rng_for(21, 0);
        let mut ratios = [vec![], vec![]];
        for _ in 0..100 {
            let k = rng.random_range(1..=12);
            let pts: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
            let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
            let m = DiscreteMeasure::new(1, pts, w, 1e-2).unwrap();
            let grid = EnergyGrid::auto(&m, 4.0, 1 << 14);
            for (lvl, g) in [grid.clone(), EnergyGrid { dx: grid.dx / 2.0, ..grid }].iter().enumerate() {
                let (l, r) = wolff_energy_comparison(&m, 0.3, 2.0, &WeightSpec::Unit, g, 64).unwrap();
                ratios[lvl].push(l / r);
            }
        }
        let spread = |v: &Vec<f64>| {
            let (lo, hi) = v.iter().fold((f64::INFINITY, 0.0f64), |(l, h), x| (l.min(*x), h.max(*x)));
            hi / lo
        };
        let (s0, s1) = (spread(&ratios[0]), spread(&ratios[1]));
        assert!(s0 < 50.0 && s1 < 50.0, "{s0} {s1}");
        assert!((s1 / s0 - 1.0).abs() < 0.2);
    }

    #[test]
    fn negative_sobolev_examples() {
        let grid = EnergyGrid { bbox: BoxSpec::cube(&[0.0], 1.0), dx: 0.01 };
        assert_eq!(negative_sobolev_norm(&DiscreteMeasure::empty(1, 0.1), -0.3, 2.0, &grid).unwrap().value, 0.0);
        let m = lebesgue(512);
        let g = EnergyGrid::auto(&m, 2.0, 8192);
        let a = negative_sobolev_norm(&m, -0.3, 2.0, &g).unwrap().value;
        let b = negative_sobolev_norm(&m.scaled(2.5), -0.3, 2.0, &g).unwrap().value;
        assert!((b / a - 2.5).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn potential_monotone_and_homogeneous(
            pts in prop::collection::vec(-2.0f64..2.0, 1..10),
            extra in -2.0f64..2.0,
            x in -3.0f64..3.0,
            c in 0.1f64..10.0,
        ) {
            let w = vec![0.5; pts.len()];
            let m = DiscreteMeasure::new(1, pts, w, 0.01).unwrap();
            let u = riesz_potential(&m, 0.4, &[x]).unwrap();
            let mut m2 = m.clone();
            m2.push(&[extra], 0.3);
            prop_assert!(riesz_potential(&m2, 0.4, &[x]).unwrap() >= u);
            let uc = riesz_potential(&m.scaled(c), 0.4, &[x]).unwrap();
            prop_assert!((uc - c * u).abs() <= 1e-12 * uc.abs());
            let ut = riesz_potential(&m.translated(&[0.75]), 0.4, &[x + 0.75]).unwrap();
            prop_assert!((ut - u).abs() <= 1e-9 * u.abs());
        }
    }
}
