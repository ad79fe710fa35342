//! Spectral density estimation, the Lyapunov/Thouless comparison, and the
//! effective-velocity linear system with its empirical counterpart.

use crate::error::{Error, Result};
use crate::lax::{build_lax, LaxMatrix, SpectralDecomposition};
use crate::linalg::{Dense, LuFactors};
use crate::localization::{decay_profile, LocalizationAssignment};

/// Gaussian-kernel density estimate on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensityEstimate {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl SpectralDensityEstimate {
    /// Trapezoid integral of the density over its grid.
    pub fn total_mass(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }

    /// L1 distance against another estimate interpolated on this grid.
    pub fn l1_distance(&self, other: &SpectralDensityEstimate) -> f64 {
        let interp = |x: f64| -> f64 {
            let g = &other.grid;
            if x <= g[0] || x >= g[g.len() - 1] {
                return 0.0;
            }
            let step = g[1] - g[0];
            let idx = ((x - g[0]) / step).floor() as usize;
            let idx = idx.min(g.len() - 2);
            let w = (x - g[idx]) / step;
            other.density[idx] * (1.0 - w) + other.density[idx + 1] * w
        };
        let diff: Vec<f64> =
            self.grid.iter().zip(&self.density).map(|(&x, &d)| (d - interp(x)).abs()).collect();
        trapezoid(&self.grid, &diff)
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() - 1 {
        s += 0.5 * (x[i + 1] - x[i]) * (y[i] + y[i + 1]);
    }
    s
}

/// Kernel density estimate of the eigenvalue distribution on the grid
/// spanning `[min - 3 bw, max + 3 bw]`, renormalized to unit mass on the
/// grid.
pub fn empirical_density(eigenvalues: &[f64], bandwidth: f64) -> Result<SpectralDensityEstimate> {
    if !(bandwidth > 0.0) {
        return Err(Error::ZeroBandwidth);
    }
    let lo = eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min) - 3.0 * bandwidth;
    let hi = eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 3.0 * bandwidth;
    let step = (bandwidth / 4.0).min((hi - lo) / 64.0);
    let m = ((hi - lo) / step).ceil() as usize + 1;
    let m = m.min(200_000);
    let grid: Vec<f64> = (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect();
    let norm = 1.0 / (eigenvalues.len() as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    let mut density: Vec<f64> = grid
        .iter()
        .map(|&x| {
            eigenvalues
                .iter()
                .map(|&l| {
                    let z = (x - l) / bandwidth;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect();
    let mass = trapezoid(&grid, &density);
    for d in density.iter_mut() {
        *d /= mass;
    }
    Ok(SpectralDensityEstimate { grid, density, bandwidth })
}

/// Per-eigenvalue comparison of the fitted decay rate against the
/// discrete Thouless prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovEntry {
    pub k: usize,
    pub lambda: f64,
    /// `-rate` from the decay-profile fit (Lyapunov exponents are <= 0).
    pub fitted_gamma: f64,
    /// `-alpha/2 - (1/N) sum_{i != k} log|lambda_k - lambda_i|`.
    pub predicted_gamma: f64,
    pub gap: f64,
}

/// Evaluate the discrete Thouless relation for each eigenvalue: the
/// predicted exponent uses `E[log a] = -alpha/2` and the empirical
/// spectral measure in place of the limiting density.
pub fn lyapunov_thouless_check(
    l: &LaxMatrix,
    dec: &SpectralDecomposition,
    assignment: &LocalizationAssignment,
    alpha: f64,
    collar: usize,
) -> Vec<LyapunovEntry> {
    let n = dec.n;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let lam = dec.eigenvalues[k];
        let mut log_gap_mean = 0.0;
        for i in 0..n {
            if i != k {
                log_gap_mean += (lam - dec.eigenvalues[i]).abs().ln();
            }
        }
        log_gap_mean /= n as f64;
        let predicted = -0.5 * alpha - log_gap_mean;
        let fitted = match decay_profile(l, dec, k, assignment.phi[k], collar) {
            Ok(p) if p.rate.is_finite() => -p.rate,
            _ => f64::NAN,
        };
        out.push(LyapunovEntry {
            k,
            lambda: lam,
            fitted_gamma: fitted,
            predicted_gamma: predicted,
            gap: (fitted - predicted).abs(),
        });
    }
    out
}

/// Solved and measured quasiparticle velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub lambdas: Vec<f64>,
    pub solved: Vec<f64>,
    pub empirical: Vec<f64>,
}

/// Solve the effective-velocity linear system discretized with the
/// empirical spectral measure:
/// `lambda_k = v_k + (2/(alpha N)) sum_{i != k} (v_k - v_i) log|lambda_k - lambda_i|`.
///
/// Refuses near-coincident eigenvalues and condition estimates beyond
/// 1e12; the solution is polished by one step of iterative refinement.
pub fn effective_velocity_solve(eigenvalues: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(
            "effective-velocity system requires alpha > 0 (mirror negative alpha first)".into(),
        ));
    }
    let n = eigenvalues.len();
    if n == 1 {
        return Ok(vec![eigenvalues[0]]);
    }
    let scale = eigenvalues.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        for j in i + 1..n {
            let gap = (eigenvalues[i] - eigenvalues[j]).abs();
            if gap < 1e-13 * scale {
                return Err(Error::CoincidentEigenvalues { gap, index: j });
            }
        }
    }
    let c = 2.0 / (alpha * n as f64);
    let mut a = Dense::zeros(n, n);
    for k in 0..n {
        let mut diag = 1.0;
        for i in 0..n {
            if i == k {
                continue;
            }
            let w = c * (eigenvalues[k] - eigenvalues[i]).abs().ln();
            diag += w;
            a[(k, i)] = -w;
        }
        a[(k, k)] = diag;
    }
    let f = LuFactors::factor(&a)?;
    let cond = a.one_norm() * f.inv_one_norm_estimate();
    if cond > 1e12 {
        return Err(Error::IllConditioned { cond });
    }
    let mut v = f.solve(eigenvalues);
    f.refine(&a, eigenvalues, &mut v);
    Ok(v)
}

/// Max row residual of the defining system after a solve.
pub fn velocity_system_residual(eigenvalues: &[f64], alpha: f64, v: &[f64]) -> f64 {
    let n = eigenvalues.len();
    if n == 1 {
        return (eigenvalues[0] - v[0]).abs();
    }
    let c = 2.0 / (alpha * n as f64);
    let mut worst = 0.0f64;
    for k in 0..n {
        let mut lhs = v[k];
        for i in 0..n {
            if i != k {
                lhs += c * (v[k] - v[i]) * (eigenvalues[k] - eigenvalues[i]).abs().ln();
            }
        }
        worst = worst.max((lhs - eigenvalues[k]).abs());
    }
    worst
}

/// Summary statistics of solved-versus-empirical velocities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityComparison {
    pub correlation: f64,
    pub rms_relative_error: f64,
    pub count: usize,
}

/// Pearson correlation and RMS relative error between the solved and
/// empirical velocity columns, restricted to the given indices. A single
/// point reports the perfect-match sentinel (correlation 1).
pub fn velocity_compare(field: &VelocityField, indices: &[usize]) -> VelocityComparison {
    let xs: Vec<f64> = indices.iter().map(|&k| field.solved[k]).collect();
    let ys: Vec<f64> = indices.iter().map(|&k| field.empirical[k]).collect();
    let count = xs.len();
    if count < 2 {
        return VelocityComparison { correlation: 1.0, rms_relative_error: 0.0, count };
    }
    let m = count as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    let mut rel = 0.0;
    let scale = xs.iter().map(|x| x.abs()).fold(0.0f64, f64::max).max(1e-300);
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
        let r = (y - x) / x.abs().max(0.1 * scale);
        rel += r * r;
    }
    let correlation = if sxx > 0.0 && syy > 0.0 { sxy / (sxx * syy).sqrt() } else { 1.0 };
    VelocityComparison { correlation, rms_relative_error: (rel / m).sqrt(), count }
}

/// Measure empirical velocities `(Q_k(T) - Q_k(0)) / T` along a trajectory
/// and pair them with the solved field.
pub fn velocity_field_from_trajectory(
    traj: &crate::lattice::Trajectory,
    alpha: f64,
    zeta: f64,
) -> Result<VelocityField> {
    use crate::localization::center_bijection;
    use crate::quasiparticle::quasiparticle_positions;
    let f0 = traj.initial();
    let ft = traj.last();
    let t = ft.t - f0.t;
    if t <= 0.0 {
        return Err(Error::TooFewSamples);
    }
    let dec0 = build_lax(f0).eig()?;
    let dect = build_lax(ft).eig()?;
    let asg0 = center_bijection(&dec0, zeta)?;
    let asgt = center_bijection(&dect, zeta)?;
    let q0 = quasiparticle_positions(&asg0, &f0.positions());
    let qt = quasiparticle_positions(&asgt, &ft.positions());
    let empirical: Vec<f64> = q0.iter().zip(&qt).map(|(a, b)| (b - a) / t).collect();
    let solved = effective_velocity_solve(&dec0.eigenvalues, alpha)?;
    Ok(VelocityField { lambdas: dec0.eigenvalues.clone(), solved, empirical })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localization::{bulk_collar, center_bijection};
    use crate::rng::RngStream;
    use crate::thermal::{sample_open, ThermalParams};

    #[test]
    fn kde_single_bump_and_bimodal() {
        let est = empirical_density(&[2.0; 32], 0.1).unwrap();
        assert!((est.total_mass() - 1.0).abs() < 1e-6);
        let peak_x = est.grid[est
            .density
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0];
        assert!((peak_x - 2.0).abs() < 0.02);

        // two well-separated clusters of equal size: masses 1/2 each
        let mut vals = vec![0.0; 16];
        vals.extend(vec![10.0; 16]);
        let est = empirical_density(&vals, 0.2).unwrap();
        assert!((est.total_mass() - 1.0).abs() < 1e-6);
        let mid = est.grid.iter().position(|&x| x > 5.0).unwrap();
        let left = trapezoid(&est.grid[..=mid], &est.density[..=mid]);
        assert!((left - 0.5).abs() < 1e-3, "left mass {left}");
    }

    #[test]
    fn kde_rejects_zero_bandwidth() {
        assert!(matches!(empirical_density(&[1.0, 2.0], 0.0), Err(Error::ZeroBandwidth)));
    }

    #[test]
    fn velocity_solve_small_oracles() {
        // N = 1: v = lambda
        assert_eq!(effective_velocity_solve(&[0.7], 1.0).unwrap(), vec![0.7]);

        // N = 2, alpha = 1, lambda = (1, -1): direct 2x2 solve gives
        // v1 - v2 = 2 / (1 + 2 ln 2), v1 + v2 = 0
        let v = effective_velocity_solve(&[1.0, -1.0], 1.0).unwrap();
        let expect_diff = 2.0 / (1.0 + 2.0 * 2.0f64.ln());
        assert!((v[0] - v[1] - expect_diff).abs() < 1e-12, "{v:?}");
        assert!((v[0] + v[1]).abs() < 1e-12);

        // alpha -> infinity decouples: v -> lambda
        let lams = [1.3, 0.4, -0.2, -1.1];
        let v = effective_velocity_solve(&lams, 1e8).unwrap();
        for (vi, li) in v.iter().zip(&lams) {
            assert!((vi - li).abs() < 1e-6);
        }
    }

    #[test]
    fn velocity_solve_identities() {
        let params = ThermalParams::new(1.0, 1.0).unwrap();
        let f = sample_open(&params, 64, &RngStream::new(41, 0));
        let dec = build_lax(&f).eig().unwrap();
        let lams = &dec.eigenvalues;
        let v = effective_velocity_solve(lams, params.alpha).unwrap();
        // defining system satisfied
        let max_l = lams.iter().fold(0.0f64, |m, l| m.max(l.abs()));
        assert!(velocity_system_residual(lams, params.alpha, &v) < 1e-8 * max_l);
        // momentum-sum identity
        let sv: f64 = v.iter().sum();
        let sl: f64 = lams.iter().sum();
        assert!((sv - sl).abs() < 1e-8, "{sv} vs {sl}");
        // affine covariance
        let shifted: Vec<f64> = lams.iter().map(|l| l + 0.9).collect();
        let v2 = effective_velocity_solve(&shifted, params.alpha).unwrap();
        for (a, b) in v.iter().zip(&v2) {
            assert!((b - a - 0.9).abs() < 1e-8);
        }
    }

    #[test]
    fn velocity_solve_rejects_coincident() {
        match effective_velocity_solve(&[1.0, 1.0, 0.0], 1.0) {
            Err(Error::CoincidentEigenvalues { .. }) => {}
            other => panic!("expected coincident-eigenvalue error, got {other:?}"),
        }
    }

    #[test]
    fn lyapunov_prediction_shift_invariant_and_nonpositive() {
        let params = ThermalParams::new(1.0, 1.0).unwrap();
        let f = sample_open(&params, 96, &RngStream::new(42, 0));
        let l = build_lax(&f);
        let dec = l.eig().unwrap();
        let asg = center_bijection(&dec, 1.0 / 192.0).unwrap();
        let collar = bulk_collar(96, 0.0).min(8);
        let entries = lyapunov_thouless_check(&l, &dec, &asg, params.alpha, collar);
        // predictions unchanged under a spectral shift (gaps only)
        let mut shifted = l.clone();
        for d in shifted.diag.iter_mut() {
            *d += 2.0;
        }
        let dec2 = shifted.eig().unwrap();
        let asg2 = center_bijection(&dec2, 1.0 / 192.0).unwrap();
        let entries2 = lyapunov_thouless_check(&shifted, &dec2, &asg2, params.alpha, collar);
        for (e1, e2) in entries.iter().zip(&entries2) {
            assert!((e1.predicted_gamma - e2.predicted_gamma).abs() < 1e-9);
        }
        // bulk predictions are Lyapunov-like (nonpositive)
        let bulk = &entries[10..86];
        let violations = bulk.iter().filter(|e| e.predicted_gamma > 0.0).count();
        assert!(violations * 10 < bulk.len(), "{violations} positive exponents");
    }

    #[test]
    fn velocity_compare_sentinels() {
        let field = VelocityField {
            lambdas: vec![0.5],
            solved: vec![0.5],
            empirical: vec![0.5],
        };
        let c = velocity_compare(&field, &[0]);
        assert_eq!(c.correlation, 1.0);
        assert_eq!(c.rms_relative_error, 0.0);
    }
}
