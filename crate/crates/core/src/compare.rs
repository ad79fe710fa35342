//! Finite-speed-of-propagation comparisons between Toda lattices on
//! different domains sharing initial data.

use crate::error::{Error, Result};
use crate::lattice::{evolve, FlaschkaState, IntegratorConfig, Trajectory};
use crate::rng::RngStream;
use crate::thermal::ThermalParams;
use rand_distr::{Distribution, Gamma};

/// Sup-difference series over a slot window.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonMetrics {
    /// Window `[lo, hi]` in slots of the first trajectory.
    pub window: (usize, usize),
    /// Running sup over time of `max_i |a - a'| + max_i |b - b'|`.
    pub g_series: Vec<f64>,
    /// `6 * sup` of the summed entry magnitudes over the window.
    pub h_series: Vec<f64>,
    pub times: Vec<f64>,
}

impl ComparisonMetrics {
    pub fn final_g(&self) -> f64 {
        *self.g_series.last().unwrap()
    }
}

/// Compare two trajectories sharing sample times over a common slot
/// window, producing the running sup-difference `G` and magnitude factor
/// `H` series. `offset_b` maps window slots of `a` to slots of `b`.
pub fn overlap_divergence(
    traj_a: &Trajectory,
    traj_b: &Trajectory,
    window: (usize, usize),
    offset_b: i64,
) -> Result<ComparisonMetrics> {
    if traj_a.samples.len() != traj_b.samples.len() {
        return Err(Error::MismatchedSampling);
    }
    let (lo, hi) = window;
    let nb = traj_b.samples[0].domain.len();
    let mut g_running = 0.0f64;
    let mut h_running = 0.0f64;
    let mut g_series = Vec::with_capacity(traj_a.samples.len());
    let mut h_series = Vec::with_capacity(traj_a.samples.len());
    let mut times = Vec::with_capacity(traj_a.samples.len());
    for (sa, sb) in traj_a.samples.iter().zip(&traj_b.samples) {
        if (sa.t - sb.t).abs() > 1e-12 * sa.t.abs().max(1.0) {
            return Err(Error::MismatchedSampling);
        }
        let mut da = 0.0f64;
        let mut db = 0.0f64;
        let mut mag = 0.0f64;
        for i in lo..=hi {
            let j = (i as i64 + offset_b).rem_euclid(nb as i64) as usize;
            da = da.max((sa.a[i] - sb.a[j]).abs());
            db = db.max((sa.b[i] - sb.b[j]).abs());
            mag = mag
                .max(sa.a[i].abs())
                .max(sb.a[j].abs())
                .max(sa.b[i].abs())
                .max(sb.b[j].abs());
        }
        g_running = g_running.max(da + db);
        h_running = h_running.max(6.0 * 4.0 * mag);
        g_series.push(g_running);
        h_series.push(h_running);
        times.push(sa.t);
    }
    Ok(ComparisonMetrics { window: (lo, hi), g_series, h_series, times })
}

/// One row of the open-versus-periodic decay table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRow {
    pub collar: usize,
    pub sup_difference: f64,
}

/// Couple an open thermal lattice to a torus sharing all its draws (the
/// torus gets one extra independent Gamma draw closing the loop), evolve
/// both, and measure the bulk sup-difference for each collar width.
pub fn open_vs_periodic(
    params: &ThermalParams,
    n: usize,
    t_final: f64,
    collars: &[usize],
    cfg: &IntegratorConfig,
    stream: &RngStream,
) -> Result<Vec<DecayRow>> {
    let open = crate::thermal::sample_open(params, n, stream);
    let mut torus_a = open.a.clone();
    // fresh draw closes the loop
    let mut loop_rng = stream.substream(u64::MAX / 2).rng();
    let gamma = Gamma::new(params.theta, 1.0 / params.beta).expect("valid gamma parameters");
    torus_a[n - 1] = gamma.sample(&mut loop_rng).sqrt();
    let upsilon = -2.0 * torus_a.iter().map(|x: &f64| x.ln()).sum::<f64>();
    let torus = FlaschkaState {
        domain: crate::domain::DomainSpec::Torus { n, upsilon },
        a: torus_a,
        b: open.b.clone(),
        t: 0.0,
        q_first: 0.0,
    };
    let traj_open = evolve(&open, cfg, t_final)?;
    let traj_torus = evolve(&torus, cfg, t_final)?;
    let mut rows = Vec::with_capacity(collars.len());
    for &k in collars {
        if 2 * k + 1 >= n {
            return Err(Error::InvalidParameter(format!("collar {k} swallows the domain")));
        }
        let m = overlap_divergence(&traj_open, &traj_torus, (k, n - 1 - k), 0)?;
        rows.push(DecayRow { collar: k, sup_difference: m.final_g() });
    }
    Ok(rows)
}

/// Least-squares decay rate of `log median(sup difference)` in the collar
/// width, ignoring rows at the numerical floor.
pub fn fitted_decay_rate(medians: &[(usize, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = medians
        .iter()
        .filter(|(_, g)| *g > 1e-15)
        .map(|&(k, g)| (k as f64, g.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::INFINITY;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in &pts {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    -(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;

    fn uniform_torus(n: usize) -> FlaschkaState {
        FlaschkaState {
            domain: DomainSpec::Torus { n, upsilon: 0.0 },
            a: vec![1.0; n],
            b: vec![0.0; n],
            t: 0.0,
            q_first: 0.0,
        }
    }

    #[test]
    fn identical_initial_data_starts_at_zero() {
        let f = uniform_torus(8);
        let cfg = IntegratorConfig::rk4(1e-2).unwrap();
        let t1 = evolve(&f, &cfg, 1.0).unwrap();
        let t2 = evolve(&f, &cfg, 1.0).unwrap();
        let m = overlap_divergence(&t1, &t2, (1, 6), 0).unwrap();
        assert_eq!(m.g_series[0], 0.0);
        // both stationary: G stays identically zero
        assert!(m.g_series.iter().all(|&g| g == 0.0));
        // monotone by construction
        for w in m.g_series.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn boundary_difference_shows_up_without_collar() {
        let params = ThermalParams::new(1.0, 1.0).unwrap();
        let cfg = IntegratorConfig::rk4(1e-2).unwrap();
        let rows = open_vs_periodic(&params, 48, 2.0, &[0, 6, 12, 18], &cfg,
            &RngStream::new(75, 0)).unwrap();
        // no collar: order-one difference at the edge where the loop closes
        assert!(rows[0].sup_difference > 1e-3, "{rows:?}");
        // medians decay with the collar within noise
        assert!(rows[3].sup_difference < rows[0].sup_difference);
        let rate = fitted_decay_rate(
            &rows.iter().map(|r| (r.collar, r.sup_difference)).collect::<Vec<_>>(),
        );
        assert!(rate > 0.0, "rate {rate}");
    }

    #[test]
    fn mismatched_sampling_rejected() {
        let f = uniform_torus(8);
        let cfg = IntegratorConfig::rk4(1e-2).unwrap();
        let t1 = evolve(&f, &cfg.with_sample_every(0.5), 1.0).unwrap();
        let t2 = evolve(&f, &cfg.with_sample_every(0.25), 1.0).unwrap();
        assert!(matches!(
            overlap_divergence(&t1, &t2, (1, 6), 0),
            Err(Error::MismatchedSampling)
        ));
    }
}
