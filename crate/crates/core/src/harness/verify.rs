//! Named checks (trivial identities, pinned oracles, properties) and the
//! oracle corpus builder.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

use statrs::function::gamma::gamma;
use wildmatch::WildMatch;

use super::config::ExperimentConfig;
use crate::berman::{
    berman_ratio, fourier_weighted_norm, limiting_variation, measure_fourier, packing_prefunctional, random_windows,
    window_sweep, GridRule, PackingParams,
};
use crate::bvfun::{BvFunction, BvKind};
use crate::error::{Error, Result};
use crate::fracint::{hardy_bound_report, weyl_marchaud, zahle_integral, FracDerivParams, Side};
use crate::occupation::{local_time_histogram, occupation_full};
use crate::pathgen::{generate, Family, GeneratorSpec};
use crate::potential::{kernel_convolution_1d, negative_sobolev_norm, riesz_const};
use crate::quad::ConvMesh;
use crate::seminorm::{key_estimate_report, KeyParams};
use crate::types::{fmt_f64, restrict, DiscreteMeasure, Interp, SampledPath, TimeWindow};
use crate::varcomp::{compose, variability_norm, variability_profile};

pub const VERIFY_HEADER: &str = "check_id,status,value,bound,runtime";

/// The checked-in corpus; `fracpath oracle-build` regenerates it.
pub const ORACLE_FILE: &str = include_str!("../../data/oracles.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Warning,
}

impl CheckStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pass => "pass",
            Self::Fail => "fail",
            Self::Warning => "warning",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub check_id: String,
    pub status: CheckStatus,
    pub value: f64,
    pub bound: f64,
    /// seconds
    pub runtime: f64,
}

impl CheckRow {
    /// Runtime is left empty when `with_runtime` is false, so that files
    /// written by experiments stay byte-reproducible.
    pub fn csv_row(&self, with_runtime: bool) -> String {
        let rt = if with_runtime { format!("{:.3}", self.runtime) } else { String::new() };
        format!("{},{},{},{},{}", self.check_id, self.status.as_str(), fmt_f64(self.value), fmt_f64(self.bound), rt)
    }
}

/// Measured value, the bound it is compared with, and the verdict.
struct Outcome {
    value: f64,
    bound: f64,
    pass: bool,
}

fn at_most(value: f64, bound: f64) -> Outcome {
    Outcome { value, bound, pass: value <= bound }
}

fn at_least(value: f64, bound: f64) -> Outcome {
    Outcome { value, bound, pass: value >= bound }
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

type CheckFn = fn(u64) -> Result<Outcome>;

const CHECKS: &[(&str, CheckFn)] = &[
    ("trivial_fourier_at_zero", trivial_fourier_at_zero),
    ("trivial_unit_atom_modulus", trivial_unit_atom_modulus),
    ("trivial_unit_atom_sup_norm", trivial_unit_atom_sup_norm),
    ("trivial_zero_measure_norm", trivial_zero_measure_norm),
    ("trivial_occupation_mass", trivial_occupation_mass),
    ("trivial_linear_variation_p1", trivial_linear_variation_p1),
    ("trivial_packing_empty", trivial_packing_empty),
    ("trivial_constant_composition", trivial_constant_composition),
    ("trivial_restrict_full_window", trivial_restrict_full_window),
    ("oracle_corpus_current", oracle_corpus_current),
    ("oracle_riesz_const_half_1", oracle_riesz_const_half_1),
    ("oracle_riesz_const_2_3", oracle_riesz_const_2_3),
    ("oracle_riesz_semigroup", oracle_riesz_semigroup),
    ("oracle_local_time_tent", oracle_local_time_tent),
    ("oracle_variability_linear", oracle_variability_linear),
    ("oracle_marchaud_half_linear", oracle_marchaud_half_linear),
    ("oracle_zahle_smooth_pair", oracle_zahle_smooth_pair),
    ("oracle_hardy_linear", oracle_hardy_linear),
    ("oracle_berman_linear", oracle_berman_linear),
    ("oracle_disc_perimeter", oracle_disc_perimeter),
    ("property_plancherel_lebesgue", property_plancherel_lebesgue),
    ("property_plancherel_fbm", property_plancherel_fbm),
    ("property_berman_positive_fbm", property_berman_positive_fbm),
    ("property_berman_linear_scaling", property_berman_linear_scaling),
    ("property_prevariation_chain", property_prevariation_chain),
    ("property_key_homogeneity", property_key_homogeneity),
    ("property_zahle_alpha_independence", property_zahle_alpha_independence),
    ("property_variability_dichotomy", property_variability_dichotomy),
    ("property_limiting_variation_fbm", property_limiting_variation_fbm),
    ("property_thread_determinism", property_thread_determinism),
];

/// Runs every check whose id matches the wildcard `filter`. No match yields
/// a single warning row.
pub fn verify_suite(filter: &str, seed: u64) -> Vec<CheckRow> {
    let pat = WildMatch::new(filter);
    let mut rows: Vec<CheckRow> = CHECKS
        .iter()
        .filter(|(id, _)| pat.matches(id))
        .map(|(id, f)| {
            let t = Instant::now();
            let out = f(seed);
            let runtime = t.elapsed().as_secs_f64();
            let (value, bound, status) = match out {
                Ok(o) => (o.value, o.bound, if o.pass { CheckStatus::Pass } else { CheckStatus::Fail }),
                Err(_) => (f64::NAN, f64::NAN, CheckStatus::Fail),
            };
            CheckRow { check_id: id.to_string(), status, value, bound, runtime }
        })
        .collect();
    if rows.is_empty() {
        rows.push(CheckRow {
            check_id: format!("no_checks_match:{filter}"),
            status: CheckStatus::Warning,
            value: f64::NAN,
            bound: f64::NAN,
            runtime: 0.0,
        });
    }
    rows
}

// ---- oracle corpus ----

struct Oracle {
    id: &'static str,
    provenance: &'static str,
    value: fn() -> f64,
}

const ORACLES: &[Oracle] = &[
    Oracle { id: "riesz_const_half_1", provenance: "c(1/2, 1) = 1/sqrt(2 pi)", value: || 1.0 / (2.0 * PI).sqrt() },
    Oracle { id: "riesz_const_2_3", provenance: "c(2, 3) = 1/(4 pi)", value: || 1.0 / (4.0 * PI) },
    Oracle {
        id: "riesz_k07_at_1",
        provenance: "k_0.7(1) = Gamma(0.15)/(2^0.7 sqrt(pi) Gamma(0.35)), target of k_0.3 * k_0.4",
        value: || gamma(0.15) / (2f64.powf(0.7) * PI.sqrt() * gamma(0.35)),
    },
    Oracle { id: "local_time_tent", provenance: "tent path |2t-1| on [0,1]: two crossings at speed 2", value: || 1.0 },
    Oracle {
        id: "variability_linear",
        provenance: "X_t = t, phi = 1_(1/4,3/4), s = 1/2, p = 1: sum over a in {1/4,3/4} of 2 c(1/2,1)(sqrt a + sqrt(1-a))",
        value: || {
            let c = 1.0 / (2.0 * PI).sqrt();
            [0.25f64, 0.75].iter().map(|a| 2.0 * c * (a.sqrt() + (1.0 - a).sqrt())).sum()
        },
    },
    Oracle { id: "marchaud_half_linear", provenance: "D^{1/2} t at t = 1 equals 1/Gamma(3/2) = 2/sqrt(pi)", value: || 2.0 / PI.sqrt() },
    Oracle {
        id: "zahle_t2_sin",
        provenance: "integral over [0,1] of t^2 d(sin t) = 2 cos 1 - sin 1",
        value: || 2.0 * 1f64.cos() - 1f64.sin(),
    },
    Oracle {
        id: "hardy_linear_lhs",
        provenance: "X_t = t, beta = 0.4, p = 2: integral of t^2 t^{-0.8} = 1/2.2",
        value: || 1.0 / 2.2,
    },
    Oracle {
        id: "hardy_linear_rhs",
        provenance: "X_t = t, beta = 0.4, p = 2: Gagliardo [t]^2 = 2/(1.2*2.2) plus ||t||_2^2 = 1/3",
        value: || 2.0 / (1.2 * 2.2) + 1.0 / 3.0,
    },
    Oracle {
        id: "berman_linear_k",
        provenance: "Lebesgue on [0,1], p = 2, alpha = -0.3: sqrt(-(2/pi) Gamma(-1.6) cos(0.8 pi)), diam = length = 1",
        value: || (-(2.0 / PI) * gamma(-1.6) * (0.8 * PI).cos()).sqrt(),
    },
    Oracle { id: "disc_perimeter", provenance: "perimeter of the unit disc", value: || 2.0 * PI },
];

/// Text of the oracle data file: one `id = value` line per oracle, each
/// preceded by its derivation.
pub fn build_oracles() -> String {
    let mut s = String::from("# Pinned oracle values, regenerated by `fracpath oracle-build`.\n");
    for o in ORACLES {
        let _ = writeln!(s, "\n# {}\n{} = {}", o.provenance, o.id, fmt_f64((o.value)()));
    }
    s
}

pub fn pinned_oracles() -> Result<BTreeMap<String, f64>> {
    parse_oracles(ORACLE_FILE)
}

fn parse_oracles(text: &str) -> Result<BTreeMap<String, f64>> {
    let t: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
    t.into_iter()
        .map(|(k, v)| v.as_float().map(|f| (k.clone(), f)).ok_or_else(|| Error::Config(format!("oracle {k} is not a float"))))
        .collect()
}

fn pinned(id: &str) -> Result<f64> {
    pinned_oracles()?.get(id).copied().ok_or_else(|| Error::Config(format!("oracle {id} missing from corpus")))
}

// ---- helpers ----

fn linear(n: usize) -> SampledPath {
    SampledPath::from_fn(1.0, n, Interp::Linear, |t| t).expect("linear path")
}

fn fbm(h: f64, n: usize, seed: u64) -> Result<SampledPath> {
    generate(&GeneratorSpec::new(Family::Fbm { hurst: h }, 1.0, n).seed(seed))
}

fn unit() -> TimeWindow {
    TimeWindow::new(0.0, 1.0).expect("unit window")
}

// ---- trivial ----

fn trivial_fourier_at_zero(_: u64) -> Result<Outcome> {
    let m = occupation_full(&linear(1000));
    let v = measure_fourier(&m, &[0.0]);
    Ok(at_most((v.re - (2.0 * PI).powf(-0.5)).abs() + v.im.abs(), 1e-12))
}

fn trivial_unit_atom_modulus(_: u64) -> Result<Outcome> {
    let a = DiscreteMeasure::dirac(&[0.7, -0.2], 1.0, 0.1);
    let err = [[0.0, 0.0], [3.0, -1.0], [100.0, 250.0]]
        .iter()
        .map(|xi| (measure_fourier(&a, xi).norm() - 1.0 / (2.0 * PI)).abs())
        .fold(0.0, f64::max);
    Ok(at_most(err, 1e-12))
}

fn trivial_unit_atom_sup_norm(_: u64) -> Result<Outcome> {
    let a = DiscreteMeasure::dirac(&[0.7], 1.0, 0.1);
    let g = GridRule::default().build(1, 1.0, 0.01)?;
    let v = fourier_weighted_norm(&a, 0.0, f64::INFINITY, &g)?.value;
    Ok(at_most((v - (2.0 * PI).powf(-0.5)).abs(), 1e-12))
}

fn trivial_zero_measure_norm(_: u64) -> Result<Outcome> {
    let g = GridRule::default().build(1, 1.0, 0.01)?;
    Ok(at_most(fourier_weighted_norm(&DiscreteMeasure::empty(1, 0.1), -0.3, 2.0, &g)?.value, 0.0))
}

fn trivial_occupation_mass(seed: u64) -> Result<Outcome> {
    let m = occupation_full(&fbm(0.5, 1 << 10, seed)?);
    Ok(at_most((m.mass() - 1.0).abs(), 1e-12))
}

fn trivial_linear_variation_p1(_: u64) -> Result<Outcome> {
    let r = limiting_variation(&linear(1 << 10), 1.0, &[64, 32, 16, 8])?;
    Ok(at_most((r.value - 1.0).abs(), 1e-12))
}

fn trivial_packing_empty(_: u64) -> Result<Outcome> {
    let params = PackingParams { p: 2.0, alpha: -0.3, q: 1.0, delta: 0.125 };
    let pk = packing_prefunctional(&linear(256), &[], &params, &GridRule::default())?;
    Ok(at_most(pk.report.value, 0.0))
}

fn trivial_constant_composition(seed: u64) -> Result<Outcome> {
    let phi = BvFunction::new(1, BvKind::Constant { value: 2.5 })?;
    let c = compose(&phi, &fbm(0.5, 256, seed)?)?;
    let dev = c.path.scalar_values().iter().map(|v| (v - 2.5).abs()).fold(0.0, f64::max);
    Ok(at_most(dev + c.singular_fraction, 0.0))
}

fn trivial_restrict_full_window(seed: u64) -> Result<Outcome> {
    let p = fbm(0.3, 128, seed)?;
    let same = restrict(&p, &unit())? == p;
    Ok(at_most(if same { 0.0 } else { 1.0 }, 0.0))
}

// ---- oracles ----

fn oracle_corpus_current(_: u64) -> Result<Outcome> {
    let fresh = parse_oracles(&build_oracles())?;
    let pinned = pinned_oracles()?;
    if fresh.len() != pinned.len() {
        return Ok(at_most(f64::INFINITY, 1e-12));
    }
    let worst = fresh.iter().map(|(k, v)| pinned.get(k).map_or(f64::INFINITY, |p| rel(*v, *p))).fold(0.0, f64::max);
    Ok(at_most(worst, 1e-12))
}

fn oracle_riesz_const_half_1(_: u64) -> Result<Outcome> {
    Ok(at_most(rel(riesz_const(0.5, 1), pinned("riesz_const_half_1")?), 1e-12))
}

fn oracle_riesz_const_2_3(_: u64) -> Result<Outcome> {
    Ok(at_most(rel(riesz_const(2.0, 3), pinned("riesz_const_2_3")?), 1e-12))
}

fn oracle_riesz_semigroup(_: u64) -> Result<Outcome> {
    let v = kernel_convolution_1d(0.3, 0.4, 1.0, &ConvMesh::level(2));
    Ok(at_most(rel(v, pinned("riesz_k07_at_1")?), 0.01))
}

fn oracle_local_time_tent(_: u64) -> Result<Outcome> {
    let tent = SampledPath::from_fn(1.0, 1 << 16, Interp::Linear, |t| (2.0 * t - 1.0).abs())?;
    let lt = local_time_histogram(&occupation_full(&tent), 1.0 / 256.0)?;
    let exact = pinned("local_time_tent")?;
    let dev = lt
        .bins
        .iter()
        .filter(|(k, _)| {
            let c = lt.bin_center(k)[0];
            c > 0.05 && c < 0.95
        })
        .map(|(_, d)| (d - exact).abs())
        .fold(0.0, f64::max);
    Ok(at_most(dev, 0.05))
}

fn oracle_variability_linear(_: u64) -> Result<Outcome> {
    let phi = BvFunction::indicator(0.25, 0.75)?;
    let prof = variability_profile(&phi, &linear(1 << 14), 0.5, 1e-3)?;
    Ok(at_most(rel(variability_norm(&prof, 1.0)?.value, pinned("variability_linear")?), 0.02))
}

fn oracle_marchaud_half_linear(_: u64) -> Result<Outcome> {
    let p = linear(1 << 12);
    let v = weyl_marchaud(&p, &FracDerivParams::new(0.5, Side::LeftFrom0)?, p.n_steps())?;
    Ok(at_most(rel(v.re, pinned("marchaud_half_linear")?), 1e-3))
}

fn smooth_pair(n: usize) -> Result<(SampledPath, SampledPath)> {
    Ok((
        SampledPath::from_fn(1.0, n, Interp::Linear, |t| t * t)?,
        SampledPath::from_fn(1.0, n, Interp::Linear, f64::sin)?,
    ))
}

fn oracle_zahle_smooth_pair(_: u64) -> Result<Outcome> {
    let (f, g) = smooth_pair(1 << 12)?;
    let v = zahle_integral(&f, &g, 0.45, false)?.value;
    Ok(at_most((v - pinned("zahle_t2_sin")?).abs(), 1e-4))
}

fn oracle_hardy_linear(_: u64) -> Result<Outcome> {
    let (l, r) = hardy_bound_report(&linear(1 << 11), 0.4, 2.0)?;
    let err = (l - pinned("hardy_linear_lhs")?).abs().max((r - pinned("hardy_linear_rhs")?).abs());
    Ok(at_most(err, 2e-3))
}

fn oracle_berman_linear(_: u64) -> Result<Outcome> {
    let k = berman_ratio(&linear(1 << 12), &unit(), -0.3, 2.0, &GridRule::default())?.value;
    Ok(at_most(rel(k, pinned("berman_linear_k")?), 0.02))
}

fn oracle_disc_perimeter(_: u64) -> Result<Outcome> {
    let f = BvFunction::new(2, BvKind::IndicatorBall { center: vec![0.0, 0.0], radius: 1.0 })?;
    Ok(at_most(rel(f.gradient_measure(0.01)?.mass(), pinned("disc_perimeter")?), 0.01))
}

// ---- properties ----

fn plancherel_gap(m: &DiscreteMeasure) -> Result<f64> {
    let rule = GridRule::default();
    let f = fourier_weighted_norm(m, -0.3, 2.0, &rule.for_measure(m)?)?.value;
    let e = negative_sobolev_norm(m, -0.3, 2.0, &rule.energy_grid(m))?.value;
    Ok(rel(f, e))
}

fn property_plancherel_lebesgue(_: u64) -> Result<Outcome> {
    Ok(at_most(plancherel_gap(&occupation_full(&linear(1 << 12)))?, 0.05))
}

fn property_plancherel_fbm(seed: u64) -> Result<Outcome> {
    Ok(at_most(plancherel_gap(&occupation_full(&fbm(0.5, 1 << 11, seed)?))?, 0.05))
}

fn property_berman_positive_fbm(seed: u64) -> Result<Outcome> {
    let p = fbm(0.5, 1 << 11, seed)?;
    let rule = GridRule::default();
    let mut kmin = f64::INFINITY;
    for w in random_windows(&p, 20, 0.05, 0.5, seed)? {
        kmin = kmin.min(berman_ratio(&p, &w, -0.3, 2.0, &rule)?.value);
    }
    Ok(Outcome { value: kmin, bound: 0.0, pass: kmin > 0.0 && kmin.is_finite() })
}

fn property_berman_linear_scaling(_: u64) -> Result<Outcome> {
    let p = linear(1 << 12);
    let rule = GridRule::default();
    let ks = (0..=5)
        .map(|j| {
            let len = 0.5f64.powi(j);
            berman_ratio(&p, &TimeWindow::new(0.0, len)?, -0.3, 2.0, &rule).map(|r| r.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    let worst = ks.iter().map(|k| rel(*k, ks[0])).fold(0.0, f64::max);
    Ok(at_most(worst, 0.1))
}

/// With the measured K: Σ diam^{α+n/p} ≥ K_min Σ τ ≥ K_min M²/Σ τ^{-1} (q = 1).
fn property_prevariation_chain(seed: u64) -> Result<Outcome> {
    let p = fbm(0.5, 1 << 11, seed)?;
    let wins: Vec<TimeWindow> = (0..8).map(|k| TimeWindow::new(k as f64 / 8.0, (k + 1) as f64 / 8.0)).collect::<Result<_>>()?;
    let rows = window_sweep(&p, &wins, 2.0, -0.3, &GridRule::default())?;
    let kmin = rows.iter().map(|r| r.empirical_k).fold(f64::INFINITY, f64::min);
    let diam_sum: f64 = rows.iter().map(|r| r.empirical_k * r.tau).sum();
    let tau_sum: f64 = rows.iter().map(|r| r.tau).sum();
    let inv_sum: f64 = rows.iter().map(|r| 1.0 / r.tau).sum();
    let m = rows.len() as f64;
    let first = diam_sum / (kmin * tau_sum);
    let second = tau_sum / (m * m / inv_sum);
    let slack = first.min(second);
    Ok(at_least(slack, 1.0 - 1e-12))
}

fn property_key_homogeneity(seed: u64) -> Result<Outcome> {
    let p = fbm(0.7, 512, seed)?;
    let kp = KeyParams { s: 0.6, theta: 0.65, p: 2.0, q: f64::INFINITY, beta: 0.35, r: 2.0, h: 1e-3 };
    let phi = BvFunction::indicator(0.0, 0.5)?;
    let a = key_estimate_report(&phi, &p, &kp)?.ratio();
    let b = key_estimate_report(&phi.scaled(3.0), &p, &kp)?.ratio();
    Ok(at_most(rel(b, a), 1e-10))
}

fn property_zahle_alpha_independence(_: u64) -> Result<Outcome> {
    let (f, g) = smooth_pair(1 << 12)?;
    let vals = [0.3, 0.45, 0.6].iter().map(|&a| zahle_integral(&f, &g, a, false).map(|r| r.value)).collect::<Result<Vec<_>>>()?;
    let spread = vals.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b)) - vals.iter().fold(f64::INFINITY, |a, b| a.min(*b));
    Ok(at_most(spread, 1e-4))
}

fn property_variability_dichotomy(_: u64) -> Result<Outcome> {
    let phi = BvFunction::indicator(0.25, 0.75)?;
    let paths: Vec<SampledPath> = (10..13).map(|k| linear(1 << k)).collect();
    let finite = crate::varcomp::variability_norm_refined(&phi, &paths, 0.5, 1.0, 1e-3)?;
    let divergent = crate::varcomp::variability_norm_refined(&phi, &paths, 0.5, 3.0, 1e-3)?;
    let ok = !finite.is_infinite() && divergent.is_infinite();
    Ok(Outcome { value: finite.value, bound: f64::INFINITY, pass: ok })
}

fn property_limiting_variation_fbm(seed: u64) -> Result<Outcome> {
    let p = fbm(0.5, 1 << 12, seed)?;
    let meshes = [256, 128, 64, 32, 16];
    let v3 = limiting_variation(&p, 3.0, &meshes)?;
    let v15 = limiting_variation(&p, 1.5, &meshes)?;
    Ok(Outcome { value: v3.value, bound: f64::INFINITY, pass: !v3.is_infinite() && v15.is_infinite() })
}

fn property_thread_determinism(seed: u64) -> Result<Outcome> {
    let text = format!(
        "experiment = \"berman\"\nseeds = [{seed}]\nrefinements = 2\n[generator]\nfamily = \"fbm\"\nhurst = 0.5\nn = 256\n\
         [params]\nalpha = -0.3\np = 2.0\nwindows = 4\n"
    );
    let base = std::env::temp_dir().join(format!("fracpath-verify-{}-{seed}", std::process::id()));
    let mut outputs = vec![];
    for threads in [1, 8] {
        // same directory both times: the path is recorded in config.toml and the manifest
        let mut cfg = ExperimentConfig::from_toml(&text)?;
        cfg.output_dir = base.clone();
        let out = super::run_experiment(&cfg, Some(threads))?;
        let bytes = out
            .files
            .iter()
            .map(|f| std::fs::read(out.output_dir.join(f)).map_err(|e| Error::Io(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        outputs.push(bytes);
        let _ = std::fs::remove_dir_all(&base);
    }
    let differing = outputs[0].iter().zip(&outputs[1]).filter(|(a, b)| a != b).count() as f64;
    Ok(at_most(differing, 0.0))
}
