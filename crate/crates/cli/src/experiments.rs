//! One driver per subcommand: replica-parallel execution with
//! deterministic merge and CSV/JSON artifact emission.

use crate::config::ExperimentConfig;
use crate::output::{
    rate_cell, summary_json, write_json, write_manifest, AcceptanceEntry, Cell, CsvFile,
    ResultTable,
};
use rayon::prelude::*;
use std::path::Path;
use toda_core::compare::{fitted_decay_rate, open_vs_periodic};
use toda_core::hydro::{
    effective_velocity_solve, empirical_density, velocity_compare, velocity_field_from_trajectory,
    velocity_system_residual,
};
use toda_core::lattice::evolve;
use toda_core::lax::{
    build_lax, min_consecutive_gap, spectral_diagnostics, thouless_identity_residual,
    transfer_product, transfer_product_closed_form, LaxMatrix,
};
use toda_core::localization::{bulk_collar, center_bijection, decay_profile, truncation_eigen_match};
use toda_core::quasiparticle::{
    charge_continuity_residual, charge_window_vs_eigsum, scattering_report,
};
use toda_core::rng::RngStream;
use toda_core::thermal::{invariance_test, ks_two_sample, sample_open, sample_periodic};
use rand::Rng;

/// Runtime failure: exit code 3 territory.
pub type RunResult = Result<(), String>;

fn pool() -> rayon::ThreadPool {
    let n = std::env::var("TODA_LAB_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .unwrap_or(0);
    let mut b = rayon::ThreadPoolBuilder::new();
    if n > 0 {
        b = b.num_threads(n);
    }
    b.build().expect("thread pool")
}

/// Run `f` once per replica (deterministic per-replica streams), merging
/// results in replica order independent of scheduling.
fn replica_map<T: Send>(
    cfg: &ExperimentConfig,
    f: impl Fn(u64, RngStream) -> Result<T, toda_core::Error> + Sync,
) -> Result<Vec<(u64, T)>, String> {
    let seed = cfg.seed;
    let out: Result<Vec<(u64, T)>, toda_core::Error> = pool().install(|| {
        (0..cfg.replicas as u64)
            .into_par_iter()
            .map(|r| {
                let stream_id = cfg.stream_offset + r;
                f(stream_id, RngStream::new(seed, stream_id)).map(|t| (stream_id, t))
            })
            .collect()
    });
    out.map_err(|e| e.to_string())
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

fn quantile(mut v: Vec<f64>, p: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[(((v.len() - 1) as f64) * p).round() as usize]
}

fn setup(cfg: &ExperimentConfig) -> Result<(), String> {
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| format!("cannot create {}: {e}", cfg.output_dir.display()))?;
    write_manifest(&cfg.output_dir, cfg).map_err(|e| e.to_string())
}

fn finish(
    dir: &Path,
    experiment: &str,
    results: ResultTable,
    stats: &[(&str, f64)],
    acceptance: &[AcceptanceEntry],
) -> RunResult {
    results.write().map_err(|e| e.to_string())?;
    write_json(&dir.join("summary.json"), &summary_json(experiment, stats, acceptance))
        .map_err(|e| e.to_string())
}

/// `sample`: thermal draws, moment and spacing statistics.
pub fn run_sample(cfg: &ExperimentConfig) -> RunResult {
    setup(cfg)?;
    let params = cfg.thermal_params()?;
    let n = cfg.n;
    let rows = replica_map(cfg, |_, stream| {
        let f = sample_open(&params, n, &stream);
        let spacings: Vec<f64> = f.a[..n - 1].iter().map(|a| -2.0 * a.ln()).collect();
        let mean_r = spacings.iter().sum::<f64>() / spacings.len() as f64;
        let var_r = spacings.iter().map(|r| (r - mean_r) * (r - mean_r)).sum::<f64>()
            / (spacings.len() as f64 - 1.0).max(1.0);
        let mean_a2 = f.a[..n - 1].iter().map(|a| a * a).sum::<f64>() / (n - 1) as f64;
        let mean_b = f.b.iter().sum::<f64>() / n as f64;
        let var_b =
            f.b.iter().map(|b| (b - mean_b) * (b - mean_b)).sum::<f64>() / (n as f64 - 1.0);
        let q = f.positions();
        let summary = toda_core::thermal::spacing_statistics(&q, params.alpha, 1000.min(n - 1));
        Ok((mean_r, var_r, mean_a2, mean_b, var_b, summary.max_deviation))
    })?;
    let mut results = ResultTable::create(&cfg.output_dir, "sample");
    let mut pooled_mean = Vec::new();
    let mut pooled_var = Vec::new();
    for (rid, (mean_r, var_r, mean_a2, mean_b, var_b, max_dev)) in &rows {
        let r = *rid as usize;
        results.push(r, 0.0, "mean_spacing", Cell::Num(*mean_r));
        results.push(r, 0.0, "var_spacing", Cell::Num(*var_r));
        results.push(r, 0.0, "mean_a_squared", Cell::Num(*mean_a2));
        results.push(r, 0.0, "mean_b", Cell::Num(*mean_b));
        results.push(r, 0.0, "var_b", Cell::Num(*var_b));
        results.push(r, 0.0, "max_linear_deviation", Cell::Num(*max_dev));
        pooled_mean.push(*mean_r);
        pooled_var.push(*var_r);
    }
    let draws = (cfg.replicas * (n - 1)) as f64;
    let grand_mean = pooled_mean.iter().sum::<f64>() / pooled_mean.len() as f64;
    let grand_var = pooled_var.iter().sum::<f64>() / pooled_var.len() as f64;
    let se = (grand_var / draws).sqrt();
    let z = (grand_mean - params.alpha).abs() / se;
    finish(
        &cfg.output_dir,
        "sample",
        results,
        &[
            ("mean_spacing", grand_mean),
            ("alpha", params.alpha),
            ("standard_error", se),
            ("z_score", z),
        ],
        &[AcceptanceEntry {
            key: "c11_mean_spacing_z",
            value: z,
            threshold: 3.0,
            upper_bound: true,
        }],
    )
}

/// `evolve`: conserved-quantity drift and isospectrality, with a step
/// halving study.
pub fn run_evolve(cfg: &ExperimentConfig) -> RunResult {
    setup(cfg)?;
    let params = cfg.thermal_params()?;
    let n = cfg.n;
    let t_final = cfg.t;
    let integrator = cfg.integrator();
    let rows = replica_map(cfg, |_, stream| {
        let f = sample_open(&params, n, &stream);
        let lam0 = build_lax(&f).eigenvalues()?;
        let drift_of = |step: f64| -> Result<(f64, f64, f64, f64), toda_core::Error> {
            let mut ic = integrator;
            ic.step = step;
            let traj = evolve(&f, &ic, t_final)?;
            let lam_t = build_lax(traj.last()).eigenvalues()?;
            let eig_drift =
                lam0.iter().zip(&lam_t).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let (dh, dt1, dt2) = traj.max_drift();
            Ok((eig_drift, dh, dt1, dt2))
        };
        let (e1, dh, dt1, dt2) = drift_of(integrator.step)?;
        let (e2, _, _, _) = drift_of(integrator.step / 2.0)?;
        Ok((e1, e2, dh, dt1, dt2))
    })?;
    let mut results = ResultTable::create(&cfg.output_dir, "evolve");
    let mut max_drift = 0.0f64;
    let mut min_ratio = f64::INFINITY;
    for (rid, (e1, e2, dh, dt1, dt2)) in &rows {
        let r = *rid as usize;
        results.push(r, t_final, "eigenvalue_drift", Cell::Num(*e1));
        results.push(r, t_final, "eigenvalue_drift_half_step", Cell::Num(*e2));
        results.push(r, t_final, "hamiltonian_drift", Cell::Num(*dh));
        results.push(r, t_final, "trace_l_drift", Cell::Num(*dt1));
        results.push(r, t_final, "trace_l2_drift", Cell::Num(*dt2));
        max_drift = max_drift.max(*e1);
        min_ratio = min_ratio.min(e1 / e2.max(1e-300));
    }
    finish(
        &cfg.output_dir,
        "evolve",
        results,
        &[("max_eigenvalue_drift", max_drift), ("min_halving_ratio", min_ratio)],
        &[
            AcceptanceEntry {
                key: "c01_isospectral_drift",
                value: max_drift,
                threshold: 1e-7,
                upper_bound: true,
            },
            AcceptanceEntry {
                key: "c01_halving_ratio",
                value: min_ratio,
                threshold: 8.0,
                upper_bound: false,
            },
        ],
    )
}

/// `spectrum`: spectral diagnostics, gap-law fit, kernel density.
pub fn run_spectrum(cfg: &ExperimentConfig) -> RunResult {
    setup(cfg)?;
    let params = cfg.thermal_params()?;
    let n = cfg.n;
    let rows = replica_map(cfg, |_, stream| {
        let f = sample_open(&params, n, &stream);
        let l = build_lax(&f);
        let d = spectral_diagnostics(&l)?;
        let vals = l.eigenvalues()?;
        Ok((d.min_gap, d.max_abs_entry, d.max_abs_eigenvalue, vals))
    })?;
    let mut results = ResultTable::create(&cfg.output_dir, "spectrum");
    let mut gaps = Vec::new();
    let mut pooled = Vec::new();
    for (rid, (min_gap, max_entry, max_eig, vals)) in &rows {
        let r = *rid as usize;
        results.push(r, 0.0, "min_gap", Cell::Num(*min_gap));
        results.push(r, 0.0, "max_abs_entry", Cell::Num(*max_entry));
        results.push(r, 0.0, "max_abs_eigenvalue", Cell::Num(*max_eig));
        gaps.push(*min_gap);
        pooled.extend_from_slice(vals);
    }
    // gap-law fit through the origin on a log grid over [1e-6, 1e-3]
    let deltas: Vec<f64> = (0..13).map(|i| 1e-6 * 10f64.powf(i as f64 / 4.0)).collect();
    let ps: Vec<f64> = deltas
        .iter()
        .map(|&d| gaps.iter().filter(|&&g| g < d).count() as f64 / gaps.len() as f64)
        .collect();
    let mut gapcsv = CsvFile::create(cfg.output_dir.join("gap_cdf.csv"), &["delta", "p"]);
    for (d, p) in deltas.iter().zip(&ps) {
        gapcsv.row(&[Cell::Num(*d), Cell::Num(*p)]);
    }
    gapcsv.write().map_err(|e| e.to_string())?;
    let sxy: f64 = deltas.iter().zip(&ps).map(|(d, p)| d * p).sum();
    let sxx: f64 = deltas.iter().map(|d| d * d).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = deltas.iter().zip(&ps).map(|(d, p)| (p - slope * d).powi(2)).sum();
    let ss_tot: f64 = ps.iter().map(|p| p * p).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { f64::NAN };

    // pooled kernel density (Silverman-style bandwidth)
    let m = pooled.len() as f64;
    let mean = pooled.iter().sum::<f64>() / m;
    let sd = (pooled.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0)).sqrt();
    let bw = 1.06 * sd * m.powf(-0.2);
    let density = empirical_density(&pooled, bw).map_err(|e| e.to_string())?;
    let mut denscsv =
        CsvFile::create(cfg.output_dir.join("spectrum_density.csv"), &["lambda", "density"]);
    for (x, d) in density.grid.iter().zip(&density.density) {
        denscsv.row(&[Cell::Num(*x), Cell::Num(*d)]);
    }
    denscsv.write().map_err(|e| e.to_string())?;

    let mut acceptance = vec![];
    if gaps.len() >= 100 {
        acceptance.push(AcceptanceEntry {
            key: "c12_gap_law_r2",
            value: r2,
            threshold: 0.95,
            upper_bound: false,
        });
    }
    finish(
        &cfg.output_dir,
        "spectrum",
        results,
        &[
            ("gap_law_slope", slope),
            ("gap_law_r2", r2),
            ("density_bandwidth", bw),
            ("density_mass", density.total_mass()),
        ],
        &acceptance,
    )
}

/// `centers`: localization bijections, witnesses, decay rates, and a
/// truncation eigenvalue match at the middle site.
pub fn run_centers(cfg: &ExperimentConfig) -> RunResult {
    setup(cfg)?;
    let params = cfg.thermal_params()?;
    let n = cfg.n;
    let zeta = cfg.zeta();
    let fit_collar = ((n as f64).ln().powi(2) / 2.0).ceil() as usize;
    let rows = replica_map(cfg, |_, stream| {
        let f = sample_open(&params, n, &stream);
        let l = build_lax(&f);
        let dec = l.eig()?;
        let asg = center_bijection(&dec, zeta)?;
        let mut per_k = Vec::with_capacity(n);
        for k in 0..n {
            let rate = match decay_profile(&l, &dec, k, asg.phi[k], fit_collar) {
                Ok(p) => p.rate,
                Err(_) => f64::NAN,
            };
            per_k.push((dec.eigenvalues[k], asg.phi[k], asg.witness[k], rate));
        }
        let matches = truncation_eigen_match(&l, (n / 2) as i64, zeta, 30)?;
        let max_gap = matches.iter().map(|p| p.gap).fold(0.0f64, f64::max);
        Ok((per_k, max_gap))
    })?;
    let mut csv = CsvFile::create(
        cfg.output_dir.join("centers.csv"),
        &["replica", "k", "lambda", "phi", "witness", "rate"],
    );
    let mut results = ResultTable::create(&cfg.output_dir, "centers");
    let mut witnesses = Vec::new();
    let mut rates = Vec::new();
    let mut trunc_gaps = Vec::new();
    for (rid, (per_k, trunc_gap)) in &rows {
        for (k, (lam, phi, wit, rate)) in per_k.iter().enumerate() {
            csv.row(&[
                Cell::Int(*rid as i64),
                Cell::Int(k as i64),
                Cell::Num(*lam),
                Cell::Int(*phi as i64),
                Cell::Num(*wit),
                if rate.is_nan() { Cell::text("underdetermined") } else { rate_cell(*rate) },
            ]);
            witnesses.push(*wit);
            if rate.is_finite() {
                rates.push(*rate);
            }
        }
        results.push(*rid as usize, 0.0, "truncation_max_gap", Cell::Num(*trunc_gap));
        trunc_gaps.push(*trunc_gap);
    }
    csv.write().map_err(|e| e.to_string())?;
    let found = rows.len() as f64 / cfg.replicas as f64;
    finish(
        &cfg.output_dir,
        "centers",
        results,
        &[
            ("bijection_found_fraction", found),
            ("median_witness", median(witnesses)),
            ("median_decay_rate", median(rates)),
            ("median_truncation_gap", median(trunc_gaps.clone())),
            ("max_truncation_gap", trunc_gaps.iter().cloned().fold(0.0, f64::max)),
        ],
        &[AcceptanceEntry {
            key: "c05_bijection_found_fraction",
            value: found,
            threshold: 1.0,
            upper_bound: false,
        }],
    )
}

/// `charges`: continuity refinement study plus window sums at the final
/// time.
pub fn run_charges(cfg: &ExperimentConfig) -> RunResult {
    setup(cfg)?;
    let params = cfg.thermal_params()?;
    let n = cfg.n;
    let t_final = cfg.t;
    let zeta = cfg.zeta();
    let integrator = cfg.integrator();
    let base_dt = (t_final / 25.0).max(integrator.step * 4.0);
    let rows = replica_map(cfg, |_, stream| {
        let f = sample_open(&params, n, &stream);
        // continuity order study at the middle site
        let mut slopes = Vec::new();
        for m in [1usize, 2, 3] {
            let mut residuals = Vec::new();
            for factor in [4.0, 2.0, 1.0] {
                let traj = evolve(
                    &f,
                    &integrator.with_sample_every(base_dt * factor),
                    t_final.min(2.0).max(base_dt * 12.0),
                )?;
                residuals.push(charge_continuity_residual(&traj, n / 2, m)?);
            }
            let xs: Vec<f64> = [4.0f64, 2.0, 1.0].iter().map(|f| (base_dt * f).ln()).collect();
            let ys: Vec<f64> = residuals.iter().map(|r| r.max(1e-300).ln()).collect();
            let mx = xs.iter().sum::<f64>() / 3.0;
            let my = ys.iter().sum::<f64>() / 3.0;
            let slope = xs
                .iter()
                .zip(&ys)
                .map(|(x, y)| (x - mx) * (y - my))
                .sum::<f64>()
                / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
            slopes.push((m, slope));
        }
        // window sums at the final state
        let traj = evolve(&f, &integrator.with_sample_every(t_final), t_final)?;
        let ft = traj.last();
        let l = build_lax(ft);
        let dec = l.eig()?;
        let asg = center_bijection(&dec, zeta)?;
        let q = ft.positions();
        let lo_all = q.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
        let hi_all = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
        let mut trace_residual = 0.0f64;
        for m in 0..=2usize {
            let w = charge_window_vs_eigsum(ft, &dec, &asg, (lo_all, hi_all), m)?;
            trace_residual = trace_residual.max(w.residual);
        }
        let mut windows = Vec::new();
        let mut qs = q.clone();
        qs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (qlo, qhi) = (qs[n / 4], qs[3 * n / 4]);
        let width = t_final.max(3.0);
        let mut lo = qlo;
        while lo + width < qhi {
            for m in 0..=2usize {
                let w = charge_window_vs_eigsum(ft, &dec, &asg, (lo, lo + width), m)?;
                windows.push((m, lo, w));
            }
            lo += 1.5 * width;
        }
        Ok((slopes, trace_residual, windows))
    })?;
    let mut csv = CsvFile::create(
        cfg.output_dir.join("charges_report.csv"),
        &["replica", "m", "window_lo", "window_hi", "charge_sum", "eig_sum", "residual", "gross_charge"],
    );
    let mut results = ResultTable::create(&cfg.output_dir, "charges");
    let mut min_slope = f64::INFINITY;
    let mut max_trace = 0.0f64;
    let mut rel = Vec::new();
    for (rid, (slopes, trace_residual, windows)) in &rows {
        let r = *rid as usize;
        for (m, slope) in slopes {
            results.push(r, 0.0, &format!("continuity_slope_m{m}"), Cell::Num(*slope));
            min_slope = min_slope.min(*slope);
        }
        results.push(r, t_final, "trace_identity_residual", Cell::Num(*trace_residual));
        max_trace = max_trace.max(*trace_residual);
        for (m, lo, w) in windows {
            csv.row(&[
                Cell::Int(*rid as i64),
                Cell::Int(*m as i64),
                Cell::Num(*lo),
                Cell::Num(lo + t_final.max(3.0)),
                Cell::Num(w.charge_sum),
                Cell::Num(w.eig_sum),
                Cell::Num(w.residual),
                Cell::Num(w.gross_charge),
            ]);
            rel.push(w.residual / w.gross_charge.max(1e-12));
        }
    }
    csv.write().map_err(|e| e.to_string())?;
    let med_rel = median(rel.clone());
    let mut acceptance = vec![
        AcceptanceEntry {
            key: "c06_continuity_min_slope",
            value: min_slope,
            threshold: 1.9,
            upper_bound: false,
        },
        AcceptanceEntry {
            key: "c07_trace_identity_residual",
            value: max_trace,
            threshold: 1e-8,
            upper_bound: true,
        },
    ];
    if !rel.is_empty() {
        acceptance.push(AcceptanceEntry {
            key: "c07_window_median_relative_residual",
            value: med_rel,
            threshold: 0.02,
            upper_bound: true,
        });
    }
    finish(
        &cfg.output_dir,
        "charges",
        results,
        &[
            ("continuity_min_slope", min_slope),
            ("trace_identity_residual", max_trace),
            ("window_median_relative_residual", med_rel),
            ("window_p90_relative_residual", quantile(rel, 0.9)),
        ],
        &acceptance,
    )
}

/// `scattering`: the asymptotic scattering relation with the Moser
/// first-entry residuals alongside.
pub fn run_scattering(cfg: &ExperimentConfig) -> RunResult {
    setup(cfg)?;
    let params = cfg.thermal_params_nondegenerate()?;
    let n = cfg.n;
    let t_final = cfg.t;
    let zeta = cfg.zeta();
    let integrator = cfg.integrator().with_sample_every(t_final.max(1e-9));
    let rows = replica_map(cfg, |_, stream| {
        let f = sample_open(&params, n, &stream);
        let traj0 = evolve(&f, &integrator, 0.0)?;
        let rep0 = scattering_report(&traj0, params.alpha, zeta)?;
        let t0_exact = rep0.entries.iter().all(|e| e.residual == 0.0);
        let traj = evolve(&f, &integrator, t_final)?;
        let rep = scattering_report(&traj, params.alpha, zeta)?;
        Ok((t0_exact, rep))
    })?;
    let mut csv = CsvFile::create(
        cfg.output_dir.join("scattering_report.csv"),
        &[
            "k",
            "lambda",
            "Q0",
            "QT",
            "residual",
            "normalized_residual",
            "bulk_flag",
            "residual_center_ordered",
            "normalized_residual_center_ordered",
            "tie_flag",
            "replica",
        ],
    );
    let mut results = ResultTable::create(&cfg.output_dir, "scattering");
    let mut t0_all = true;
    let mut norm = Vec::new();
    let mut norm_center = Vec::new();
    let mut moser_max = 0.0f64;
    let mut c0_max = 0.0f64;
    let mut ctqt = Vec::new();
    for (rid, (t0_exact, rep)) in &rows {
        t0_all &= *t0_exact;
        let collar = rep.collar;
        for e in &rep.entries {
            csv.row(&[
                Cell::Int(e.k as i64),
                Cell::Num(e.lambda),
                Cell::Num(e.q_initial),
                Cell::Num(e.q_final),
                Cell::Num(e.residual),
                Cell::Num(e.normalized_residual),
                Cell::Int(e.bulk as i64),
                Cell::Num(e.residual_center_ordered),
                Cell::Num(e.normalized_residual_center_ordered),
                Cell::Int(e.tie_flagged as i64),
                Cell::Int(*rid as i64),
            ]);
            if e.bulk {
                norm.push(e.normalized_residual);
                norm_center.push(e.normalized_residual_center_ordered);
            }
        }
        let bulk_moser = rep
            .moser_residuals
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                // bulk by the same collar used for the entries
                rep.entries[*k].bulk
            })
            .map(|(_, r)| *r)
            .fold(0.0f64, f64::max);
        moser_max = moser_max.max(bulk_moser);
        c0_max = c0_max.max(rep.c_0.abs());
        ctqt.push(rep.moser_ct_qt_residual);
        results.push(*rid as usize, t_final, "moser_max_bulk_residual", Cell::Num(bulk_moser));
        results.push(*rid as usize, t_final, "c_t", Cell::Num(rep.c_t));
        results.push(*rid as usize, t_final, "c_0", Cell::Num(rep.c_0));
        results.push(
            *rid as usize,
            t_final,
            "ct_qt_residual",
            Cell::Num(rep.moser_ct_qt_residual),
        );
        results.push(*rid as usize, t_final, "collar", Cell::Int(collar as i64));
    }
    csv.write().map_err(|e| e.to_string())?;
    let med = median(norm.clone());
    let med_center = median(norm_center);
    finish(
        &cfg.output_dir,
        "scattering",
        results,
        &[
            ("median_normalized_residual", med),
            ("p90_normalized_residual", quantile(norm, 0.9)),
            ("median_normalized_residual_center_ordered", med_center),
            ("moser_max_bulk_residual", moser_max),
            ("max_abs_c0", c0_max),
            ("median_ct_qt_residual", median(ctqt)),
        ],
        &[
            AcceptanceEntry {
                key: "c08_t0_residual_exact",
                value: if t0_all { 1.0 } else { 0.0 },
                threshold: 1.0,
                upper_bound: false,
            },
            AcceptanceEntry {
                key: "c08_median_normalized_residual",
                value: med,
                threshold: 0.05,
                upper_bound: true,
            },
            AcceptanceEntry {
                key: "c02_moser_max_bulk_residual",
                value: moser_max,
                threshold: 1e-6,
                upper_bound: true,
            },
            AcceptanceEntry {
                key: "c02_c0_exact",
                value: c0_max,
                threshold: 1e-12,
                upper_bound: true,
            },
        ],
    )
}

/// `thouless`: boundary-entry identity sweeps plus transfer-matrix
/// closed-form spot checks.
pub fn run_thouless(cfg: &ExperimentConfig) -> RunResult {
    setup(cfg)?;
    let params = cfg.thermal_params()?;
    let n_max = cfg.n.max(4);
    let rows = replica_map(cfg, |rid, stream| {
        let n = 2 + (rid as usize * 7) % (n_max - 1);
        let f = sample_open(&params, n, &stream);
        let l = LaxMatrix::open_from_parts(0, f.b.clone(), f.a[..n - 1].to_vec());
        let rep = thouless_identity_residual(&l)?;
        // transfer checks on the same instance
        let mut rng = stream.substream(1).rng();
        let mut closed_defect = 0.0f64;
        let mut prop_defect = 0.0f64;
        if n >= 4 {
            let dec = l.eig()?;
            for _ in 0..3 {
                let i = (rng.random::<u64>() % (n as u64 - 1)) as i64;
                let j = i + (rng.random::<u64>() % (n as u64 - 1 - i as u64)) as i64;
                let e = rng.random::<f64>() * 6.0 - 3.0;
                let direct = transfer_product(&l, i, j, e)?;
                let closed = transfer_product_closed_form(&l, i, j, e)?;
                let scale = direct.0.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
                for r in 0..2 {
                    for q in 0..2 {
                        closed_defect = closed_defect
                            .max((direct.0[r][q] - closed.0[r][q]).abs() / scale.max(1e-300));
                    }
                }
                let k = (rng.random::<u64>() % n as u64) as usize;
                let mu = dec.eigenvalues[k];
                let u = dec.vector(k);
                let s = transfer_product(&l, i, j, mu)?;
                let iu = i as usize;
                let ju = j as usize;
                let w_i = [if iu == 0 { 0.0 } else { u[iu - 1] }, u[iu]];
                let out = s.apply(w_i);
                let res = (out[0] - u[ju]).abs().max((out[1] - u[ju + 1]).abs());
                let amp = s.0.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
                prop_defect = prop_defect.max(res / amp.max(1.0));
            }
        }
        Ok((n, rep.max_residual, rep.underflow_guarded, closed_defect, prop_defect))
    })?;
    let mut csv = CsvFile::create(
        cfg.output_dir.join("thouless.csv"),
        &["replica", "n", "max_residual", "underflow_guarded"],
    );
    let mut results = ResultTable::create(&cfg.output_dir, "thouless");
    let mut worst = 0.0f64;
    let mut worst_closed = 0.0f64;
    let mut worst_prop = 0.0f64;
    for (rid, (n, max_res, guarded, closed, prop)) in &rows {
        csv.row(&[
            Cell::Int(*rid as i64),
            Cell::Int(*n as i64),
            Cell::Num(*max_res),
            Cell::Int(*guarded as i64),
        ]);
        results.push(*rid as usize, 0.0, "thouless_max_residual", Cell::Num(*max_res));
        worst = worst.max(*max_res);
        worst_closed = worst_closed.max(*closed);
        worst_prop = worst_prop.max(*prop);
    }
    csv.write().map_err(|e| e.to_string())?;
    finish(
        &cfg.output_dir,
        "thouless",
        results,
        &[
            ("max_residual", worst),
            ("max_closed_form_defect", worst_closed),
            ("max_propagation_defect", worst_prop),
        ],
        &[
            AcceptanceEntry {
                key: "c03_thouless_max_residual",
                value: worst,
                threshold: 1e-9,
                upper_bound: true,
            },
            AcceptanceEntry {
                key: "c04_closed_form_defect",
                value: worst_closed,
                threshold: 1e-8,
                upper_bound: true,
            },
            AcceptanceEntry {
                key: "c04_propagation_defect",
                value: worst_prop,
                threshold: 1e-9,
                upper_bound: true,
            },
        ],
    )
}

/// `velocity`: the effective-velocity solve against measured velocities.
pub fn run_velocity(cfg: &ExperimentConfig) -> RunResult {
    setup(cfg)?;
    let params = cfg.thermal_params_nondegenerate()?;
    if params.alpha <= 0.0 {
        return Err(
            "velocity experiment requires alpha > 0; mirror the spectrum for alpha < 0".into()
        );
    }
    let n = cfg.n;
    let t_final = cfg.t;
    let zeta = cfg.zeta();
    let collar = cfg.collar();
    let integrator = cfg.integrator().with_sample_every(t_final);
    let rows = replica_map(cfg, |_, stream| {
        let f = sample_open(&params, n, &stream);
        let traj = evolve(&f, &integrator, t_final)?;
        let field = velocity_field_from_trajectory(&traj, params.alpha, zeta)?;
        let dec0 = build_lax(traj.initial()).eig()?;
        let asg0 = center_bijection(&dec0, zeta)?;
        Ok((field, asg0.phi))
    })?;
    let mut csv = CsvFile::create(
        cfg.output_dir.join("velocity.csv"),
        &["k", "lambda", "v_solved", "v_empirical", "replica"],
    );
    let mut results = ResultTable::create(&cfg.output_dir, "velocity");
    let mut worst_row = 0.0f64;
    let mut worst_momentum = 0.0f64;
    let mut worst_affine = 0.0f64;
    let mut correlations = Vec::new();
    for (rid, (field, phi)) in &rows {
        for k in 0..n {
            csv.row(&[
                Cell::Int(k as i64),
                Cell::Num(field.lambdas[k]),
                Cell::Num(field.solved[k]),
                Cell::Num(field.empirical[k]),
                Cell::Int(*rid as i64),
            ]);
        }
        let max_l = field.lambdas.iter().fold(0.0f64, |m, l| m.max(l.abs()));
        let row_res = velocity_system_residual(&field.lambdas, params.alpha, &field.solved)
            / max_l.max(1e-300);
        let momentum =
            (field.solved.iter().sum::<f64>() - field.lambdas.iter().sum::<f64>()).abs();
        let shifted: Vec<f64> = field.lambdas.iter().map(|l| l + 0.75).collect();
        let v2 = effective_velocity_solve(&shifted, params.alpha).map_err(|e| e.to_string())?;
        let affine = field
            .solved
            .iter()
            .zip(&v2)
            .map(|(a, b)| (b - a - 0.75).abs())
            .fold(0.0f64, f64::max);
        let bulk: Vec<usize> =
            (0..n).filter(|&k| phi[k] >= collar && phi[k] + collar < n).collect();
        let cmp = velocity_compare(field, &bulk);
        worst_row = worst_row.max(row_res);
        worst_momentum = worst_momentum.max(momentum);
        worst_affine = worst_affine.max(affine);
        correlations.push(cmp.correlation);
        results.push(*rid as usize, t_final, "row_residual_relative", Cell::Num(row_res));
        results.push(*rid as usize, t_final, "momentum_defect", Cell::Num(momentum));
        results.push(*rid as usize, t_final, "affine_defect", Cell::Num(affine));
        results.push(*rid as usize, t_final, "bulk_correlation", Cell::Num(cmp.correlation));
        results.push(
            *rid as usize,
            t_final,
            "bulk_rms_relative_error",
            Cell::Num(cmp.rms_relative_error),
        );
    }
    csv.write().map_err(|e| e.to_string())?;
    let min_corr = correlations.iter().cloned().fold(f64::INFINITY, f64::min);
    finish(
        &cfg.output_dir,
        "velocity",
        results,
        &[
            ("max_row_residual_relative", worst_row),
            ("max_momentum_defect", worst_momentum),
            ("max_affine_defect", worst_affine),
            ("min_bulk_correlation", min_corr),
        ],
        &[
            AcceptanceEntry {
                key: "c10_row_residual_relative",
                value: worst_row,
                threshold: 1e-8,
                upper_bound: true,
            },
            AcceptanceEntry {
                key: "c10_momentum_defect",
                value: worst_momentum,
                threshold: 1e-8,
                upper_bound: true,
            },
            AcceptanceEntry {
                key: "c10_affine_defect",
                value: worst_affine,
                threshold: 1e-8,
                upper_bound: true,
            },
            AcceptanceEntry {
                key: "c10_bulk_correlation",
                value: min_corr,
                threshold: 0.99,
                upper_bound: false,
            },
        ],
    )
}

/// `compare-domains`: open-versus-torus coupling decay in the collar.
pub fn run_compare_domains(cfg: &ExperimentConfig) -> RunResult {
    setup(cfg)?;
    let params = cfg.thermal_params()?;
    let n = cfg.n;
    let t_final = cfg.t;
    let collars: Vec<usize> =
        (1..=8).map(|k| 10 * k).filter(|&k| 2 * k + 1 < n).collect();
    if collars.is_empty() {
        return Err("domain too small for the collar grid".into());
    }
    let integrator = cfg.integrator().with_sample_every(t_final / 20.0);
    let collars_arg = collars.clone();
    let rows = replica_map(cfg, move |_, stream| {
        open_vs_periodic(&params, n, t_final, &collars_arg, &integrator, &stream)
    })?;
    let mut csv = CsvFile::create(
        cfg.output_dir.join("compare.csv"),
        &["replica", "collar", "sup_difference"],
    );
    let mut results = ResultTable::create(&cfg.output_dir, "compare-domains");
    let mut per_collar: Vec<Vec<f64>> = vec![Vec::new(); collars.len()];
    for (rid, decay_rows) in &rows {
        for (idx, row) in decay_rows.iter().enumerate() {
            csv.row(&[
                Cell::Int(*rid as i64),
                Cell::Int(row.collar as i64),
                Cell::Num(row.sup_difference),
            ]);
            per_collar[idx].push(row.sup_difference);
        }
        results.push(
            *rid as usize,
            t_final,
            "sup_difference_no_collar_proxy",
            Cell::Num(decay_rows[0].sup_difference),
        );
    }
    csv.write().map_err(|e| e.to_string())?;
    let medians: Vec<(usize, f64)> = collars
        .iter()
        .zip(&per_collar)
        .map(|(&k, v)| (k, median(v.clone())))
        .collect();
    let rate = fitted_decay_rate(&medians);
    finish(
        &cfg.output_dir,
        "compare-domains",
        results,
        &[("fitted_decay_rate", rate)],
        &[AcceptanceEntry {
            key: "c09_decay_rate",
            value: rate,
            threshold: 0.2,
            upper_bound: false,
        }],
    )
}

/// `invariance`: Kolmogorov-Smirnov invariance test of the periodic
/// marginals under the flow, with a shifted control.
pub fn run_invariance(cfg: &ExperimentConfig) -> RunResult {
    setup(cfg)?;
    let params = cfg.thermal_params()?;
    let integrator = cfg.integrator();
    let report = invariance_test(
        &params,
        cfg.n,
        cfg.t,
        cfg.replicas,
        &integrator,
        &RngStream::new(cfg.seed, cfg.stream_offset),
    )
    .map_err(|e| e.to_string())?;
    // deliberately broken control: b shifted by 1 must be rejected
    let pooled_b: Vec<f64> = (0..cfg.replicas as u64)
        .flat_map(|r| {
            sample_periodic(&params, cfg.n, &RngStream::new(cfg.seed, cfg.stream_offset + r)).b
        })
        .collect();
    let shifted: Vec<f64> = pooled_b.iter().map(|b| b + 1.0).collect();
    let (_, p_control) = ks_two_sample(&pooled_b, &shifted);

    let mut csv = CsvFile::create(
        cfg.output_dir.join("invariance.csv"),
        &["marginal", "statistic", "p_value"],
    );
    csv.row(&[Cell::text("a"), Cell::Num(report.a_statistic), Cell::Num(report.a_p_value)]);
    csv.row(&[Cell::text("b"), Cell::Num(report.b_statistic), Cell::Num(report.b_p_value)]);
    csv.row(&[Cell::text("b_shifted_control"), Cell::Num(f64::NAN.max(0.0)), Cell::Num(p_control)]);
    csv.write().map_err(|e| e.to_string())?;
    let mut results = ResultTable::create(&cfg.output_dir, "invariance");
    results.push(0, cfg.t, "a_p_value", Cell::Num(report.a_p_value));
    results.push(0, cfg.t, "b_p_value", Cell::Num(report.b_p_value));
    results.push(0, cfg.t, "control_p_value", Cell::Num(p_control));
    let p_min = report.a_p_value.min(report.b_p_value);
    finish(
        &cfg.output_dir,
        "invariance",
        results,
        &[
            ("a_p_value", report.a_p_value),
            ("b_p_value", report.b_p_value),
            ("control_p_value", p_control),
        ],
        &[
            AcceptanceEntry {
                key: "c11_invariance_p_min",
                value: p_min,
                threshold: 0.01,
                upper_bound: false,
            },
            AcceptanceEntry {
                key: "c11_control_p_value",
                value: p_control,
                threshold: 1e-6,
                upper_bound: true,
            },
        ],
    )
}
