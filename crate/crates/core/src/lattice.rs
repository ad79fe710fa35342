//! Toda states in both coordinate systems and the Hamiltonian flow.
//!
//! Integration happens in Flaschka variables `(a, b)`, where the open
//! boundary condition `a` at the right end is exactly zero and the
//! right-hand side is polynomial. Positions are reconstructed on demand
//! from `q_{i+1} - q_i = -2 log a_i` plus the anchor position of the first
//! site, which is integrated alongside the flow.

use crate::domain::DomainSpec;
use crate::error::{Error, Result};

/// `(p, q)` coordinates of one lattice configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TodaState {
    pub domain: DomainSpec,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub t: f64,
}

/// `(a, b)` coordinates of one lattice configuration.
///
/// `q_first` is the position of the first site; together with `a` it
/// determines all positions.
#[derive(Debug, Clone, PartialEq)]
pub struct FlaschkaState {
    pub domain: DomainSpec,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub t: f64,
    pub q_first: f64,
}

impl FlaschkaState {
    /// Positions `q` of all sites in the fundamental domain.
    pub fn positions(&self) -> Vec<f64> {
        let n = self.domain.len();
        let mut q = vec![0.0; n];
        q[0] = self.q_first;
        for i in 1..n {
            q[i] = q[i - 1] - 2.0 * self.a[i - 1].ln();
        }
        q
    }

    /// Shift the anchor so the site labeled 0 sits at position 0.
    pub fn rebase_zero(&mut self) -> Result<()> {
        let idx0 = self
            .domain
            .index_of_site(0)
            .ok_or_else(|| Error::InvalidParameter("site 0 not in domain".into()))?;
        let q = self.positions();
        self.q_first -= q[idx0];
        Ok(())
    }
}

/// Build Flaschka variables from state-space coordinates:
/// `r_i = q_{i+1} - q_i`, `a_i = e^{-r_i/2}`, `b_i = p_i`.
pub fn flaschka_from_state(s: &TodaState) -> Result<FlaschkaState> {
    let n = s.domain.len();
    assert_eq!(s.p.len(), n);
    assert_eq!(s.q.len(), n);
    let mut a = vec![0.0; n];
    for i in 0..n - 1 {
        let r = s.q[i + 1] - s.q[i];
        if !r.is_finite() {
            return Err(Error::NonFiniteSpacing);
        }
        a[i] = (-r / 2.0).exp();
    }
    match s.domain {
        DomainSpec::OpenInterval { .. } => {
            a[n - 1] = 0.0; // q beyond the right end is +infinity
        }
        DomainSpec::Torus { upsilon, .. } => {
            let r = s.q[0] + upsilon - s.q[n - 1];
            if !r.is_finite() {
                return Err(Error::NonFiniteSpacing);
            }
            a[n - 1] = (-r / 2.0).exp();
        }
    }
    Ok(FlaschkaState { domain: s.domain, a, b: s.p.clone(), t: s.t, q_first: s.q[0] })
}

/// Reconstruct state-space coordinates from Flaschka variables:
/// `q_{i+1} - q_i = -2 log a_i`, `p_i = b_i`, anchored at `q_first`.
pub fn state_from_flaschka(f: &FlaschkaState) -> Result<TodaState> {
    let n = f.domain.len();
    for i in 0..n - 1 {
        if f.a[i] <= 0.0 {
            return Err(Error::DegenerateSpacing { site: f.domain.site_of_index(i) });
        }
    }
    Ok(TodaState { domain: f.domain, p: f.b.clone(), q: f.positions(), t: f.t })
}

/// Time derivatives of the Flaschka variables:
/// `da_j = (a_j/2)(b_j - b_{j+1})`, `db_j = a_{j-1}^2 - a_j^2`.
///
/// Open boundaries use `a_{N1-1} = 0` and `a_{N2} = 0`; torus indices wrap.
pub fn toda_rhs(domain: &DomainSpec, a: &[f64], b: &[f64], da: &mut [f64], db: &mut [f64]) {
    let n = domain.len();
    match domain {
        DomainSpec::OpenInterval { .. } => {
            for j in 0..n - 1 {
                da[j] = 0.5 * a[j] * (b[j] - b[j + 1]);
            }
            da[n - 1] = 0.0;
            db[0] = -a[0] * a[0];
            for j in 1..n {
                db[j] = a[j - 1] * a[j - 1] - a[j] * a[j];
            }
        }
        DomainSpec::Torus { .. } => {
            for j in 0..n {
                let jp = if j + 1 == n { 0 } else { j + 1 };
                let jm = if j == 0 { n - 1 } else { j - 1 };
                da[j] = 0.5 * a[j] * (b[j] - b[jp]);
                db[j] = a[jm] * a[jm] - a[j] * a[j];
            }
        }
    }
}

/// Hamiltonian in state-space coordinates: `sum(p^2/2 + e^{q_j - q_{j+1}})`.
pub fn hamiltonian(s: &TodaState) -> f64 {
    let n = s.domain.len();
    let mut h: f64 = s.p.iter().map(|p| 0.5 * p * p).sum();
    for j in 0..n - 1 {
        h += (s.q[j] - s.q[j + 1]).exp();
    }
    if let DomainSpec::Torus { upsilon, .. } = s.domain {
        h += (s.q[n - 1] - s.q[0] - upsilon).exp();
    }
    h
}

/// Hamiltonian in Flaschka variables: `(1/2) sum b^2 + sum a^2`. Agrees
/// with [`hamiltonian`] since `a_i^2 = e^{q_i - q_{i+1}}`.
pub fn hamiltonian_flaschka(f: &FlaschkaState) -> f64 {
    0.5 * f.b.iter().map(|b| b * b).sum::<f64>() + f.a.iter().map(|a| a * a).sum::<f64>()
}

/// The two conserved torus quantities: `sum log a_j` and
/// `sum (2 a_j^2 + b_j^2)`.
pub fn torus_invariants(f: &FlaschkaState) -> Result<(f64, f64)> {
    if !f.domain.is_torus() {
        return Err(Error::DomainMismatch);
    }
    let mut log_sum = 0.0;
    for &a in &f.a {
        if a <= 0.0 {
            return Err(Error::LogOfZero);
        }
        log_sum += a.ln();
    }
    let quad: f64 = f.a.iter().zip(&f.b).map(|(a, b)| 2.0 * a * a + b * b).sum();
    Ok((log_sum, quad))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    RK4Fixed,
    RK45Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub step: f64,
    pub scheme: Scheme,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Sampling interval; `<= 0` selects the default `T/100` clamped to
    /// at least `step`.
    pub sample_every: f64,
}

impl IntegratorConfig {
    pub fn rk4(step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::InvalidParameter("step must be positive".into()));
        }
        Ok(IntegratorConfig { step, scheme: Scheme::RK4Fixed, rel_tol: 1e-10, abs_tol: 1e-12, sample_every: 0.0 })
    }

    pub fn rk45(step: f64, rel_tol: f64, abs_tol: f64) -> Result<Self> {
        if !(step > 0.0 && rel_tol > 0.0 && abs_tol > 0.0) {
            return Err(Error::InvalidParameter("step and tolerances must be positive".into()));
        }
        Ok(IntegratorConfig { step, scheme: Scheme::RK45Adaptive, rel_tol, abs_tol, sample_every: 0.0 })
    }

    pub fn with_sample_every(mut self, dt: f64) -> Self {
        self.sample_every = dt;
        self
    }

    fn resolve_sample_every(&self, t_final: f64) -> f64 {
        let dt = if self.sample_every > 0.0 { self.sample_every } else { t_final / 100.0 };
        dt.max(self.step)
    }
}

/// Per-sample record of the conserved-quantity monitors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftRecord {
    pub t: f64,
    pub hamiltonian: f64,
    pub tr_l: f64,
    pub tr_l2: f64,
}

/// A sampled integration of the Toda flow.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<FlaschkaState>,
    pub conserved_drift: Vec<DriftRecord>,
}

impl Trajectory {
    pub fn domain(&self) -> DomainSpec {
        self.samples[0].domain
    }

    pub fn initial(&self) -> &FlaschkaState {
        &self.samples[0]
    }

    pub fn last(&self) -> &FlaschkaState {
        self.samples.last().unwrap()
    }

    /// Max absolute drift of (H, Tr L, Tr L^2) relative to the first sample.
    pub fn max_drift(&self) -> (f64, f64, f64) {
        let d0 = self.conserved_drift[0];
        self.conserved_drift.iter().fold((0.0f64, 0.0f64, 0.0f64), |(h, t1, t2), d| {
            (
                h.max((d.hamiltonian - d0.hamiltonian).abs()),
                t1.max((d.tr_l - d0.tr_l).abs()),
                t2.max((d.tr_l2 - d0.tr_l2).abs()),
            )
        })
    }
}

fn drift_record(f: &FlaschkaState) -> DriftRecord {
    let tr_l: f64 = f.b.iter().sum();
    let tr_l2: f64 = f.b.iter().map(|b| b * b).sum::<f64>()
        + 2.0 * f.a.iter().map(|a| a * a).sum::<f64>();
    DriftRecord { t: f.t, hamiltonian: hamiltonian_flaschka(f), tr_l, tr_l2 }
}

struct Rk4Work {
    k1a: Vec<f64>, k1b: Vec<f64>,
    k2a: Vec<f64>, k2b: Vec<f64>,
    k3a: Vec<f64>, k3b: Vec<f64>,
    k4a: Vec<f64>, k4b: Vec<f64>,
    ta: Vec<f64>, tb: Vec<f64>,
}

impl Rk4Work {
    fn new(n: usize) -> Self {
        let z = || vec![0.0; n];
        Rk4Work { k1a: z(), k1b: z(), k2a: z(), k2b: z(), k3a: z(), k3b: z(), k4a: z(), k4b: z(), ta: z(), tb: z() }
    }
}

/// One classical RK4 step of size `h` on `(a, b, q_first)` in place.
fn rk4_step(domain: &DomainSpec, a: &mut [f64], b: &mut [f64], qf: &mut f64, h: f64, w: &mut Rk4Work) {
    let n = a.len();
    toda_rhs(domain, a, b, &mut w.k1a, &mut w.k1b);
    let k1q = b[0];
    for i in 0..n {
        w.ta[i] = a[i] + 0.5 * h * w.k1a[i];
        w.tb[i] = b[i] + 0.5 * h * w.k1b[i];
    }
    toda_rhs(domain, &w.ta, &w.tb, &mut w.k2a, &mut w.k2b);
    let k2q = w.tb[0];
    for i in 0..n {
        w.ta[i] = a[i] + 0.5 * h * w.k2a[i];
        w.tb[i] = b[i] + 0.5 * h * w.k2b[i];
    }
    toda_rhs(domain, &w.ta, &w.tb, &mut w.k3a, &mut w.k3b);
    let k3q = w.tb[0];
    for i in 0..n {
        w.ta[i] = a[i] + h * w.k3a[i];
        w.tb[i] = b[i] + h * w.k3b[i];
    }
    toda_rhs(domain, &w.ta, &w.tb, &mut w.k4a, &mut w.k4b);
    let k4q = w.tb[0];
    let c = h / 6.0;
    for i in 0..n {
        a[i] += c * (w.k1a[i] + 2.0 * w.k2a[i] + 2.0 * w.k3a[i] + w.k4a[i]);
        b[i] += c * (w.k1b[i] + 2.0 * w.k2b[i] + 2.0 * w.k3b[i] + w.k4b[i]);
    }
    *qf += c * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
}

// Fehlberg 4(5) coefficients.
const FB_A: [[f64; 5]; 5] = [
    [1.0 / 4.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 32.0, 9.0 / 32.0, 0.0, 0.0, 0.0],
    [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0, 0.0, 0.0],
    [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0, 0.0],
    [-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
];
const FB_B5: [f64; 6] = [16.0 / 135.0, 0.0, 6656.0 / 12825.0, 28561.0 / 56430.0, -9.0 / 50.0, 2.0 / 55.0];
const FB_B4: [f64; 6] = [25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -1.0 / 5.0, 0.0];

/// Integrate the Flaschka flow from `f0.t` for duration `t_final`,
/// sampling every `sample_every` and landing exactly on the final time.
pub fn evolve(f0: &FlaschkaState, cfg: &IntegratorConfig, t_final: f64) -> Result<Trajectory> {
    if t_final < 0.0 {
        return Err(Error::InvalidParameter("T must be nonnegative".into()));
    }
    let n = f0.domain.len();
    let mut a = f0.a.clone();
    let mut b = f0.b.clone();
    let mut qf = f0.q_first;
    let mut samples = vec![f0.clone()];
    let mut drift = vec![drift_record(f0)];
    if t_final == 0.0 {
        return Ok(Trajectory { samples, conserved_drift: drift });
    }

    let dt_sample = cfg.resolve_sample_every(t_final);
    let n_samples = (t_final / dt_sample).ceil() as usize;
    let mut w = Rk4Work::new(n);
    let min_step = 1e-12 * t_final.max(1.0);
    let mut h_adaptive = cfg.step;

    let mut t_prev = 0.0;
    for s in 1..=n_samples {
        let t_next = if s == n_samples { t_final } else { s as f64 * dt_sample };
        let span = t_next - t_prev;
        match cfg.scheme {
            Scheme::RK4Fixed => {
                let m = (span / cfg.step).ceil().max(1.0) as usize;
                let h = span / m as f64;
                for _ in 0..m {
                    rk4_step(&f0.domain, &mut a, &mut b, &mut qf, h, &mut w);
                }
            }
            Scheme::RK45Adaptive => {
                rk45_span(&f0.domain, &mut a, &mut b, &mut qf, span, cfg, &mut h_adaptive, min_step, f0.t + t_prev)?;
            }
        }
        t_prev = t_next;
        let t_abs = f0.t + t_next;
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) || !qf.is_finite() {
            return Err(Error::NonFiniteState { t: t_abs });
        }
        let sample = FlaschkaState { domain: f0.domain, a: a.clone(), b: b.clone(), t: t_abs, q_first: qf };
        drift.push(drift_record(&sample));
        samples.push(sample);
    }
    Ok(Trajectory { samples, conserved_drift: drift })
}

fn rk45_span(
    domain: &DomainSpec,
    a: &mut Vec<f64>,
    b: &mut Vec<f64>,
    qf: &mut f64,
    span: f64,
    cfg: &IntegratorConfig,
    h: &mut f64,
    min_step: f64,
    t0: f64,
) -> Result<()> {
    let n = a.len();
    let mut remaining = span;
    let mut ka = vec![vec![0.0; n]; 6];
    let mut kb = vec![vec![0.0; n]; 6];
    let mut kq = [0.0; 6];
    let (mut ta, mut tb) = (vec![0.0; n], vec![0.0; n]);
    while remaining > 1e-14 * span.max(1.0) {
        let step = h.min(remaining);
        toda_rhs(domain, a, b, &mut ka[0], &mut kb[0]);
        kq[0] = b[0];
        for stage in 1..6 {
            for i in 0..n {
                let mut sa = 0.0;
                let mut sb = 0.0;
                for (j, &c) in FB_A[stage - 1][..stage].iter().enumerate() {
                    sa += c * ka[j][i];
                    sb += c * kb[j][i];
                }
                ta[i] = a[i] + step * sa;
                tb[i] = b[i] + step * sb;
            }
            toda_rhs(domain, &ta, &tb, &mut ka[stage], &mut kb[stage]);
            kq[stage] = tb[0];
        }
        // fifth-order candidate and embedded error estimate
        let mut err: f64 = 0.0;
        for i in 0..n {
            let mut y5a = 0.0;
            let mut y4a = 0.0;
            let mut y5b = 0.0;
            let mut y4b = 0.0;
            for j in 0..6 {
                y5a += FB_B5[j] * ka[j][i];
                y4a += FB_B4[j] * ka[j][i];
                y5b += FB_B5[j] * kb[j][i];
                y4b += FB_B4[j] * kb[j][i];
            }
            let ea = step * (y5a - y4a);
            let eb = step * (y5b - y4b);
            let sa = cfg.abs_tol + cfg.rel_tol * a[i].abs();
            let sb = cfg.abs_tol + cfg.rel_tol * b[i].abs();
            err = err.max((ea / sa).abs()).max((eb / sb).abs());
        }
        if err <= 1.0 {
            for i in 0..n {
                let mut da = 0.0;
                let mut db = 0.0;
                for j in 0..6 {
                    da += FB_B5[j] * ka[j][i];
                    db += FB_B5[j] * kb[j][i];
                }
                a[i] += step * da;
                b[i] += step * db;
            }
            let dq: f64 = (0..6).map(|j| FB_B5[j] * kq[j]).sum();
            *qf += step * dq;
            remaining -= step;
        }
        let factor = if err > 0.0 { 0.9 * err.powf(-0.2) } else { 5.0 };
        *h = (step * factor.clamp(0.2, 5.0)).max(min_step);
        if *h <= min_step && err > 1.0 {
            return Err(Error::StiffnessFailure { t: t0 + (span - remaining), min_step });
        }
    }
    Ok(())
}
