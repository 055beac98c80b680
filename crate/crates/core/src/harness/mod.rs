//! Experiment orchestration, CSV and plot-data emission, manifests and the
//! verification suite.

mod config;
mod verify;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{BvConfig, Experiment, ExperimentConfig, FamilyName, GeneratorConfig, Params, ALL as ALL_EXPERIMENTS};
pub use verify::{build_oracles, pinned_oracles, verify_suite, CheckRow, CheckStatus, ORACLE_FILE, VERIFY_HEADER};

use crate::berman::{random_windows, sweep_csv, window_sweep, GridRule, WINDOW_STREAM};
use crate::error::{Error, Result};
use crate::fracint::zahle_integral;
use crate::occupation::{ball_masses, dyadic_radii, local_time_histogram, occupation_full, upper_regularity_exponent};
use crate::pathgen::generate;
use crate::potential::{energy, negative_sobolev_norm, EnergyGrid};
use crate::seminorm::{gagliardo_seminorm, key_estimate_report, SeminormParams, SEMINORM_STREAM};
use crate::types::{fmt_f64, EstimateReport, SampledPath};
use crate::varcomp::{compose, pointwise_bound_ratio, refinement_verdict, variability_norm, variability_profile, PAIR_STREAM};

pub const RESULTS_HEADER: &str = "seed,refinement,n,quantity,value,refinement_delta,upper_bound,note,resolution";
pub const SUMMARY_HEADER: &str = "quantity,count,finite,min,max,median";
const POINTWISE_PAIRS: usize = 1 << 14;

/// Files written by one run and the number of failed checks (verify only).
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub output_dir: PathBuf,
    pub files: Vec<String>,
    pub failures: usize,
}

/// Everything one (seed, refinement) task produces.
#[derive(Debug, Default)]
struct TaskOutput {
    seed: u64,
    refinement: usize,
    n: usize,
    rows: Vec<(String, EstimateReport)>,
    files: Vec<(String, String)>,
    /// (figure, x, y)
    plot: Vec<(String, f64, f64)>,
}

/// Runs the experiment on a private pool of `threads` workers (default: the
/// FRACPATH_THREADS variable, else rayon's default). Output bytes do not
/// depend on the thread count.
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<RunOutput> {
    cfg.validate()?;
    let threads = threads.or_else(|| std::env::var("FRACPATH_THREADS").ok().and_then(|v| v.parse().ok()));
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = threads {
        builder = builder.num_threads(k.max(1));
    }
    let pool = builder.build().map_err(|e| Error::Io(e.to_string()))?;
    pool.install(|| run_inner(cfg))
}

fn run_inner(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut files: Vec<(String, String)> = vec![("config.toml".into(), cfg.to_toml())];
    let mut failures = 0;
    if cfg.experiment == Experiment::Verify {
        let filter = cfg.params.filter.clone().unwrap_or_else(|| "*".into());
        let mut csv = format!("seed,{VERIFY_HEADER}\n");
        for &seed in &cfg.seeds {
            for row in verify_suite(&filter, seed) {
                failures += (row.status == CheckStatus::Fail) as usize;
                let _ = writeln!(csv, "{seed},{}", row.csv_row(false));
            }
        }
        files.push(("verify.csv".into(), csv));
    } else {
        let tasks: Vec<(u64, usize)> =
            cfg.seeds.iter().flat_map(|&s| (0..cfg.refinements).map(move |r| (s, r))).collect();
        let outs = tasks.par_iter().map(|&(s, r)| run_task(cfg, s, r)).collect::<Result<Vec<_>>>()?;
        files.push(("results.csv".into(), results_csv(&outs)));
        files.push(("summary.csv".into(), summary_csv(&outs, cfg.refinements - 1)));
        if cfg.experiment == Experiment::Variability && cfg.refinements >= 3 {
            files.push(("verdicts.csv".into(), verdicts_csv(&outs, cfg)?));
        }
        files.extend(plot_files(&outs));
        for o in outs {
            files.extend(o.files);
        }
    }
    let manifest = manifest(cfg, &files);
    files.push(("manifest.toml".into(), manifest));
    for (name, body) in &files {
        std::fs::write(dir.join(name), body).map_err(io)?;
    }
    Ok(RunOutput { output_dir: dir.clone(), files: files.into_iter().map(|f| f.0).collect(), failures })
}

fn io(e: std::io::Error) -> Error {
    Error::Io(e.to_string())
}

fn run_task(cfg: &ExperimentConfig, seed: u64, refinement: usize) -> Result<TaskOutput> {
    let spec = cfg.generator()?.spec(seed, refinement)?;
    let path = generate(&spec)?;
    let mut out = TaskOutput { seed, refinement, n: spec.n, ..Default::default() };
    let tag = format!("seed{seed}_ref{refinement}");
    let p = &cfg.params;
    match cfg.experiment {
        Experiment::Occupation => {
            let m = occupation_full(&path);
            let m_idx = path.n_samples();
            let centres: Vec<Vec<f64>> = (0..16).map(|k| path.point(k * (m_idx - 1) / 15).to_vec()).collect();
            let radii = dyadic_radii(p.k_lo.unwrap_or(3), p.k_hi.unwrap_or(8));
            out.rows.push(("slope".into(), upper_regularity_exponent(&m, &centres, &radii)?));
            let per: Vec<Vec<f64>> = centres.iter().map(|c| ball_masses(&m, c, &radii)).collect();
            for (k, r) in radii.iter().enumerate() {
                let best = per.iter().map(|v| v[k]).fold(0.0, f64::max);
                out.plot.push(("ball_mass".into(), r.ln(), best.ln()));
            }
            if let Some(b) = p.bin_width {
                let lt = local_time_histogram(&m, b)?;
                let top = lt.bins.values().copied().fold(0.0, f64::max);
                out.rows.push(("local_time_max".into(), EstimateReport::new(top).with("bin_width", b)));
                out.files.push((format!("local_time_{tag}.csv"), lt.to_csv()));
            }
        }
        Experiment::Potential => {
            let m = occupation_full(&path);
            let per_axis = [1 << 12, 128, 32][(path.dim() - 1).min(2)];
            let grid = EnergyGrid::auto(&m, 1.0, per_axis);
            let (gamma, q) = (p.gamma.unwrap(), p.q.unwrap());
            out.rows.push(("energy".into(), energy(&m, gamma, q, &grid)?));
            if let Some(a) = p.alpha {
                out.rows.push(("negative_sobolev_norm".into(), negative_sobolev_norm(&m, a, q, &grid)?));
            }
        }
        Experiment::Variability => {
            let phi = cfg.bv()?;
            let prof = variability_profile(&phi, &path, p.s.unwrap(), cfg.h())?;
            out.rows.push(("variability_norm".into(), variability_norm(&prof, p.p.unwrap())?));
            out.files.push((format!("profile_{tag}.csv"), prof.to_csv()));
        }
        Experiment::Compose => {
            let phi = cfg.bv()?;
            let comp = compose(&phi, &path)?;
            out.rows.push(("singular_fraction".into(), EstimateReport::new(comp.singular_fraction)));
            if let Some(s) = p.s {
                let prof = variability_profile(&phi, &path, s, cfg.h())?;
                out.rows.push(("pointwise_ratio".into(), pointwise_bound_ratio(&phi, &path, &prof, POINTWISE_PAIRS, seed)?));
            }
            out.files.push((format!("compose_{tag}.csv"), comp.to_csv()));
        }
        Experiment::Seminorm => {
            let f = composed_or_path(cfg, &path)?;
            let sp = SeminormParams { seed, ..SeminormParams::new(p.theta.unwrap(), p.p.unwrap())? };
            out.rows.push(("seminorm".into(), gagliardo_seminorm(&f, &sp)?));
        }
        Experiment::KeyEstimate => {
            let phi = cfg.bv()?;
            let k = key_estimate_report(&phi, &path, &cfg.key_params()?)?;
            let ratio = EstimateReport::new(k.ratio())
                .with("path_seminorm", k.path_seminorm)
                .with("variability", k.variability);
            out.rows.push(("lhs".into(), k.lhs));
            out.rows.push(("rhs".into(), k.rhs_product));
            out.rows.push(("ratio".into(), ratio));
        }
        Experiment::Integrate => {
            let f = composed_or_path(cfg, &path)?;
            out.rows.push(("zahle".into(), zahle_integral(&f, &path, p.alpha.unwrap(), p.simplify.unwrap_or(false))?));
        }
        Experiment::Berman => {
            let t = path.duration();
            let (lo, hi) = (p.min_len.unwrap_or(0.05) * t, p.max_len.unwrap_or(0.5) * t);
            let wins = random_windows(&path, p.windows.unwrap_or(20), lo, hi, seed)?;
            let rows = window_sweep(&path, &wins, p.p.unwrap(), p.alpha.unwrap(), &GridRule::default())?;
            let mut ks: Vec<f64> = rows.iter().map(|r| r.empirical_k).collect();
            ks.sort_by(f64::total_cmp);
            let n = ks.len() as f64;
            out.rows.push(("min_empirical_k".into(), EstimateReport::new(ks[0]).with("windows", n)));
            out.rows.push(("median_empirical_k".into(), EstimateReport::new(ks[ks.len() / 2]).with("windows", n)));
            out.files.push((format!("sweep_{tag}.csv"), sweep_csv(&rows)));
        }
        Experiment::Verify => unreachable!("verify has no per-seed tasks"),
    }
    let dt = path.dt();
    for (q, r) in &out.rows {
        if r.value.is_finite() && r.value != 0.0 {
            out.plot.push((q.clone(), dt.ln(), r.value.abs().ln()));
        }
    }
    Ok(out)
}

fn composed_or_path(cfg: &ExperimentConfig, path: &SampledPath) -> Result<SampledPath> {
    match &cfg.bv {
        Some(_) => Ok(compose(&cfg.bv()?, path)?.path),
        None => Ok(path.clone()),
    }
}

fn csv_field(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn results_csv(outs: &[TaskOutput]) -> String {
    let mut s = format!("{RESULTS_HEADER}\n");
    for o in outs {
        for (q, r) in &o.rows {
            let res: Vec<String> = r.resolution.iter().map(|(k, v)| format!("{}={}", csv_field(k), fmt_f64(*v))).collect();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                o.seed,
                o.refinement,
                o.n,
                q,
                fmt_f64(r.value),
                opt(r.refinement_delta),
                opt(r.upper_bound),
                csv_field(r.note.as_deref().unwrap_or("")),
                res.join(";")
            );
        }
    }
    s
}

/// Family statistics over seeds at the finest refinement.
fn summary_csv(outs: &[TaskOutput], finest: usize) -> String {
    let mut by_q: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut order: Vec<&str> = vec![];
    for o in outs.iter().filter(|o| o.refinement == finest) {
        for (q, r) in &o.rows {
            if !by_q.contains_key(q.as_str()) {
                order.push(q);
            }
            by_q.entry(q).or_default().push(r.value);
        }
    }
    let mut s = format!("{SUMMARY_HEADER}\n");
    for q in order {
        let all = &by_q[q];
        let mut fin: Vec<f64> = all.iter().copied().filter(|v| v.is_finite()).collect();
        fin.sort_by(f64::total_cmp);
        let (min, max, med) = if fin.is_empty() {
            (f64::NAN, f64::NAN, f64::NAN)
        } else {
            let k = fin.len() / 2;
            let med = if fin.len().is_multiple_of(2) { 0.5 * (fin[k - 1] + fin[k]) } else { fin[k] };
            (fin[0], fin[fin.len() - 1], med)
        };
        // a divergent member makes the family maximum infinite
        let max = if fin.len() < all.len() && all.contains(&f64::INFINITY) { f64::INFINITY } else { max };
        let _ = writeln!(s, "{q},{},{},{},{},{}", all.len(), fin.len(), fmt_f64(min), fmt_f64(max), fmt_f64(med));
    }
    s
}

fn verdicts_csv(outs: &[TaskOutput], cfg: &ExperimentConfig) -> Result<String> {
    let mut s = String::from("seed,quantity,value,note\n");
    for &seed in &cfg.seeds {
        let vals: Vec<f64> = outs
            .iter()
            .filter(|o| o.seed == seed)
            .filter_map(|o| o.rows.iter().find(|(q, _)| q == "variability_norm").map(|(_, r)| r.value))
            .collect();
        let dt = cfg.generator()?.t_total / (cfg.generator()?.n << (cfg.refinements - 1)) as f64;
        let v = refinement_verdict(&vals, dt, "not (s,p)-variable at this resolution")?;
        let _ = writeln!(s, "{seed},variability_norm,{},{}", fmt_f64(v.value), csv_field(v.note.as_deref().unwrap_or("")));
    }
    Ok(s)
}

fn plot_files(outs: &[TaskOutput]) -> Vec<(String, String)> {
    let mut figs: BTreeMap<&str, String> = BTreeMap::new();
    for o in outs {
        for (f, x, y) in &o.plot {
            let body = figs.entry(f).or_insert_with(|| "x,y\n".into());
            let _ = writeln!(body, "{},{}", fmt_f64(*x), fmt_f64(*y));
        }
    }
    figs.into_iter().map(|(f, b)| (format!("plot_{f}.csv"), b)).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct Manifest {
    code_version: String,
    experiment: String,
    config_file: String,
    config_sha256: String,
    rerun: String,
    seeds: Vec<SeedStreams>,
    files: Vec<FileHash>,
}

#[derive(Serialize)]
struct SeedStreams {
    seed: u64,
    generator: String,
    derived: Vec<String>,
}

#[derive(Serialize)]
struct FileHash {
    name: String,
    sha256: String,
}

fn manifest(cfg: &ExperimentConfig, files: &[(String, String)]) -> String {
    let text = cfg.to_toml();
    let seeds = cfg
        .seeds
        .iter()
        .map(|&s| SeedStreams {
            seed: s,
            generator: format!("ChaCha20 seed_from_u64({s}); coordinate k on stream k"),
            derived: vec![
                format!("pointwise pairs: seed {s}, stream {PAIR_STREAM:#x}"),
                format!("seminorm bands: seed {s} xor {SEMINORM_STREAM:#x}, stream = band index"),
                format!("berman windows: seed {s}, stream {WINDOW_STREAM:#x}"),
            ],
        })
        .collect();
    let m = Manifest {
        code_version: format!("fracpath {}", env!("CARGO_PKG_VERSION")),
        experiment: cfg.experiment.name().into(),
        config_file: "config.toml".into(),
        config_sha256: sha256_hex(text.as_bytes()),
        rerun: format!("fracpath {} --config config.toml --seed <seed>", cfg.experiment.name()),
        seeds,
        files: files.iter().map(|(n, b)| FileHash { name: n.clone(), sha256: sha256_hex(b.as_bytes()) }).collect(),
    };
    toml::to_string(&m).expect("manifest serializes")
}

/// Loads a config and applies command-line overrides.
pub fn load_config(path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    if let Some(o) = out {
        cfg.output_dir = o.to_path_buf();
    }
    Ok(cfg)
}
