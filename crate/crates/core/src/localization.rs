//! Localization centers: thresholded center sets, center bijections via
//! bipartite matching, eigenvector decay profiles, tracking along
//! trajectories, and truncation eigenvalue matching.

use crate::error::{Error, Result};
use crate::lattice::Trajectory;
use crate::lax::{build_lax, safe_log_profile, LaxMatrix, SpectralDecomposition};

/// A zeta-localization-center bijection between eigenvalue indices and
/// lattice slots.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationAssignment {
    pub zeta: f64,
    /// `phi[k]` is the slot assigned to eigenvalue index `k`.
    pub phi: Vec<usize>,
    /// `witness[k] = |u_k(phi[k])| >= zeta`.
    pub witness: Vec<f64>,
}

impl LocalizationAssignment {
    /// Check the defining invariants: witnesses meet the threshold and
    /// every slot is used exactly once.
    pub fn validate(&self, dec: &SpectralDecomposition) -> bool {
        let n = dec.n;
        let mut used = vec![false; n];
        for k in 0..n {
            let i = self.phi[k];
            if used[i] || dec.vector(k)[i].abs() < self.zeta || self.witness[k] < self.zeta {
                return false;
            }
            used[i] = true;
        }
        true
    }
}

/// All slots `i` with `|u_j(i)| >= zeta`.
pub fn centers(dec: &SpectralDecomposition, j: usize, zeta: f64) -> Vec<usize> {
    dec.vector(j)
        .iter()
        .enumerate()
        .filter_map(|(i, &u)| (u.abs() >= zeta).then_some(i))
        .collect()
}

/// Hopcroft-Karp maximum matching on the bipartite graph given by
/// adjacency lists from left vertices to right vertices.
fn hopcroft_karp(adj: &[Vec<usize>], n_right: usize) -> Vec<Option<usize>> {
    let n_left = adj.len();
    let mut match_right: Vec<Option<usize>> = vec![None; n_right];
    let mut match_left: Vec<Option<usize>> = vec![None; n_left];
    loop {
        // BFS layering from free left vertices
        let mut dist = vec![usize::MAX; n_left];
        let mut queue = std::collections::VecDeque::new();
        for l in 0..n_left {
            if match_left[l].is_none() {
                dist[l] = 0;
                queue.push_back(l);
            }
        }
        let mut found_augmenting = false;
        while let Some(l) = queue.pop_front() {
            for &r in &adj[l] {
                match match_right[r] {
                    None => found_augmenting = true,
                    Some(l2) => {
                        if dist[l2] == usize::MAX {
                            dist[l2] = dist[l] + 1;
                            queue.push_back(l2);
                        }
                    }
                }
            }
        }
        if !found_augmenting {
            break;
        }
        fn dfs(
            l: usize,
            adj: &[Vec<usize>],
            dist: &mut [usize],
            match_left: &mut [Option<usize>],
            match_right: &mut [Option<usize>],
        ) -> bool {
            for &r in &adj[l] {
                let ok = match match_right[r] {
                    None => true,
                    Some(l2) => {
                        dist[l2] == dist[l] + 1 && dfs(l2, adj, dist, match_left, match_right)
                    }
                };
                if ok {
                    match_left[l] = Some(r);
                    match_right[r] = Some(l);
                    return true;
                }
            }
            dist[l] = usize::MAX;
            false
        }
        let mut progress = false;
        for l in 0..n_left {
            if match_left[l].is_none() && dist[l] == 0 {
                progress |= dfs(l, adj, &mut dist, &mut match_left, &mut match_right);
            }
        }
        if !progress {
            break;
        }
    }
    match_left
}

/// Construct a zeta-localization-center bijection by maximum bipartite
/// matching, then greedily improve the total log-witness by pair swaps.
///
/// A perfect matching is guaranteed whenever `zeta <= (2N)^{-1}`; larger
/// thresholds are attempted best-effort and fail with the achieved
/// matching size.
pub fn center_bijection(dec: &SpectralDecomposition, zeta: f64) -> Result<LocalizationAssignment> {
    let n = dec.n;
    let adj: Vec<Vec<usize>> = (0..n).map(|k| centers(dec, k, zeta)).collect();
    let matching = hopcroft_karp(&adj, n);
    let matched = matching.iter().filter(|m| m.is_some()).count();
    if matched < n {
        return Err(Error::NoBijection { max_matching: matched });
    }
    let mut phi: Vec<usize> = matching.into_iter().map(|m| m.unwrap()).collect();

    // greedy swap pass: prefer high-witness centers
    let mut improved = true;
    let mut sweeps = 0;
    while improved && sweeps < 4 {
        improved = false;
        sweeps += 1;
        for k in 0..n {
            for k2 in k + 1..n {
                let (i, i2) = (phi[k], phi[k2]);
                let cur = dec.vector(k)[i].abs() * dec.vector(k2)[i2].abs();
                let swapped_k = dec.vector(k)[i2].abs();
                let swapped_k2 = dec.vector(k2)[i].abs();
                if swapped_k >= zeta
                    && swapped_k2 >= zeta
                    && swapped_k * swapped_k2 > cur * (1.0 + 1e-12)
                {
                    phi.swap(k, k2);
                    improved = true;
                }
            }
        }
    }
    let witness: Vec<f64> = (0..n).map(|k| dec.vector(k)[phi[k]].abs()).collect();
    Ok(LocalizationAssignment { zeta, phi, witness })
}

/// Hall-argument bookkeeping: for a slot set `I`,
/// `sum_{i in I} sum_j u_j(i)^2 = |I|` by orthonormality of the rows.
pub fn unitarity_accounting(dec: &SpectralDecomposition, slots: &[usize]) -> f64 {
    let mut total = 0.0;
    for k in 0..dec.n {
        let u = dec.vector(k);
        for &i in slots {
            total += u[i] * u[i];
        }
    }
    total
}

/// Exponential decay fit of one eigenvector around its assigned center.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayProfile {
    pub center: usize,
    /// Fitted decay rate `c >= 0` in `|u(i)| ~ e^{-c |i - center|}`;
    /// `+inf` when every off-center entry sits at the log floor.
    pub rate: f64,
    /// Root-mean-square residual of the fit in log space.
    pub residual: f64,
    /// Fraction of off-center entries at the log-space floor.
    pub floor_fraction: f64,
}

/// Least-squares fit of `log|u_k(i)|` against `A - c |i - center|` over
/// slots at distance at least `collar` from the center. Floor entries
/// (exact zeros) are excluded from the fit and counted separately.
pub fn decay_profile(
    l: &LaxMatrix,
    dec: &SpectralDecomposition,
    k: usize,
    center: usize,
    collar: usize,
) -> Result<DecayProfile> {
    let n = dec.n;
    let prof = safe_log_profile(l, dec, k);
    let mut floor_count = 0usize;
    let mut off_center = 0usize;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..n {
        if i == center {
            continue;
        }
        off_center += 1;
        let li = prof.log_abs[i];
        if !li.is_finite() || li < crate::lax::LOG_FLOOR {
            floor_count += 1;
            continue;
        }
        let d = center.abs_diff(i);
        if d >= collar.max(1) {
            xs.push(d as f64);
            ys.push(li);
        }
    }
    let floor_fraction =
        if off_center == 0 { 0.0 } else { floor_count as f64 / off_center as f64 };
    if xs.is_empty() && floor_count == off_center && off_center > 0 {
        // basis-vector shape: everything off center is exactly zero
        return Ok(DecayProfile { center, rate: f64::INFINITY, residual: 0.0, floor_fraction });
    }
    if xs.len() < 4 {
        return Err(Error::ProfileUnderdetermined { points: xs.len() });
    }
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::ProfileUnderdetermined { points: 1 });
    }
    let slope = sxy / sxx;
    let rate = (-slope).max(0.0);
    let intercept = my - slope * mx;
    let mut ss = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        let e = y - (intercept + slope * x);
        ss += e * e;
    }
    Ok(DecayProfile { center, rate, residual: (ss / m).sqrt(), floor_fraction })
}

/// Tracking report: per-sample assignments plus displacement statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackReport {
    pub assignments: Vec<LocalizationAssignment>,
    /// Max over eigenvalues of `|phi_{s+1}(k) - phi_s(k)|`, per step.
    pub step_displacement: Vec<usize>,
    /// Max over eigenvalues and samples of `|phi_s(k) - phi_0(k)|`.
    pub max_displacement: usize,
    /// Max eigenvalue drift between consecutive samples.
    pub eigen_drift: f64,
    /// Per-sample max over eigenvalues of the diameter of the
    /// zeta-center set (spread between admissible centers).
    pub center_spread: Vec<usize>,
}

/// Assign centers along a trajectory, with eigenvalue identity maintained
/// by sorted order (eigenvalues are conserved; drift is checked against
/// half the minimal gap and tracking aborts when that fails).
pub fn track_centers(traj: &Trajectory, zeta: f64) -> Result<TrackReport> {
    let mut assignments = Vec::with_capacity(traj.samples.len());
    let mut prev_values: Option<Vec<f64>> = None;
    let mut eigen_drift = 0.0f64;
    let mut center_spread = Vec::with_capacity(traj.samples.len());
    for sample in &traj.samples {
        let l = build_lax(sample);
        let dec = l.eig()?;
        if let Some(prev) = &prev_values {
            let drift = prev
                .iter()
                .zip(&dec.eigenvalues)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            eigen_drift = eigen_drift.max(drift);
            let min_gap = dec.min_gap();
            if drift > 0.5 * min_gap {
                return Err(Error::TrackingUnreliable { drift, min_gap });
            }
        }
        let spread = (0..dec.n)
            .map(|k| {
                let c = centers(&dec, k, zeta);
                if c.is_empty() {
                    0
                } else {
                    c[c.len() - 1] - c[0]
                }
            })
            .max()
            .unwrap_or(0);
        center_spread.push(spread);
        prev_values = Some(dec.eigenvalues.clone());
        assignments.push(center_bijection(&dec, zeta)?);
    }
    let n = assignments[0].phi.len();
    let mut step_displacement = Vec::new();
    let mut max_displacement = 0usize;
    for w in assignments.windows(2) {
        let d = (0..n).map(|k| w[0].phi[k].abs_diff(w[1].phi[k])).max().unwrap_or(0);
        step_displacement.push(d);
    }
    for a in &assignments[1..] {
        let d = (0..n).map(|k| assignments[0].phi[k].abs_diff(a.phi[k])).max().unwrap_or(0);
        max_displacement = max_displacement.max(d);
    }
    Ok(TrackReport { assignments, step_displacement, max_displacement, eigen_drift, center_spread })
}

/// One matched pair from [`truncation_eigen_match`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedPair {
    /// Eigenvalue of the zeroed-out matrix.
    pub mu: f64,
    /// Nearest eigenvalue of the original matrix.
    pub lambda: f64,
    pub gap: f64,
    /// Peak slot of the truncated eigenvector.
    pub center_truncated: usize,
    /// Peak slot of the matched original eigenvector.
    pub center_original: usize,
    /// Set when the nearest original eigenvalue was nearly tied.
    pub ambiguous: bool,
}

/// For each eigenvalue of `L` with row/column `ell` zeroed out whose
/// center sits at least `dist_min` slots from `ell`, locate the nearest
/// eigenvalue of `L` and report the gap and both centers.
pub fn truncation_eigen_match(
    l: &LaxMatrix,
    ell: i64,
    zeta: f64,
    dist_min: usize,
) -> Result<Vec<MatchedPair>> {
    let ell_slot = l
        .domain
        .index_of_site(ell)
        .ok_or_else(|| Error::InvalidParameter(format!("site {ell} outside domain")))?;
    let zeroed = l.zero_out(&[ell]);
    let dec_m = zeroed.eig()?;
    let dec_l = l.eig()?;
    let mut out = Vec::new();
    for j in 0..dec_m.n {
        let mu = dec_m.eigenvalues[j];
        let center = dec_m.peak(j);
        if dec_m.vector(j)[center].abs() < zeta {
            continue;
        }
        if center.abs_diff(ell_slot) < dist_min {
            continue;
        }
        // nearest original eigenvalue
        let mut best = 0usize;
        let mut best_gap = f64::INFINITY;
        let mut second_gap = f64::INFINITY;
        for (k, &lam) in dec_l.eigenvalues.iter().enumerate() {
            let g = (lam - mu).abs();
            if g < best_gap {
                second_gap = best_gap;
                best_gap = g;
                best = k;
            } else if g < second_gap {
                second_gap = g;
            }
        }
        let scale = dec_l.eigenvalues[best].abs().max(1.0);
        let ambiguous = (second_gap - best_gap).abs() <= 1e-12 * scale;
        out.push(MatchedPair {
            mu,
            lambda: dec_l.eigenvalues[best],
            gap: best_gap,
            center_truncated: center,
            center_original: dec_l.peak(best),
            ambiguous,
        });
    }
    Ok(out)
}

/// Default bulk collar: exclude the outer `max(10%, T log N)` slots per
/// side, falling back to 10% when `T log N` exceeds a quarter of the
/// domain.
pub fn bulk_collar(n: usize, t: f64) -> usize {
    let c1 = (0.10 * n as f64).ceil() as usize;
    let c2 = t * (n as f64).ln();
    if c2 < 0.25 * n as f64 {
        c1.max(c2.ceil() as usize)
    } else {
        c1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lax::LaxMatrix;
    use crate::rng::RngStream;
    use crate::thermal::{sample_open, ThermalParams};

    #[test]
    fn centers_basic_shapes() {
        // block-diagonal with 1x1 blocks: eigenvectors are basis vectors
        let l = LaxMatrix::open_from_parts(0, vec![3.0, 1.0, 2.0], vec![0.0, 0.0]);
        let dec = l.eig().unwrap();
        // eigenvalues sorted (3, 2, 1); basis vectors e_0, e_2, e_1
        assert_eq!(centers(&dec, 0, 0.5), vec![0]);
        assert_eq!(centers(&dec, 1, 0.5), vec![2]);
        assert_eq!(centers(&dec, 2, 0.5), vec![1]);
        // bijection is the permutation sorting eigenvalues
        let asg = center_bijection(&dec, 0.5).unwrap();
        assert_eq!(asg.phi, vec![0, 2, 1]);
        assert!(asg.validate(&dec));
    }

    #[test]
    fn torus_laplacian_admits_matching_at_inverse_sqrt() {
        // adjacency matrix of the cycle: diag 0, couplings 1, corner 1
        let n = 8usize;
        let l = LaxMatrix {
            domain: crate::domain::DomainSpec::Torus { n, upsilon: 0.0 },
            diag: vec![0.0; n],
            offdiag: vec![1.0; n - 1],
            corner: Some(1.0),
        };
        let dec = l.eig().unwrap();
        let zeta = (1.0 - 1e-9) / (n as f64).sqrt();
        let asg = center_bijection(&dec, zeta).unwrap();
        assert!(asg.validate(&dec));
        // the uniform eigenvector (eigenvalue 2) admits every site
        assert!((dec.eigenvalues[0] - 2.0).abs() < 1e-12);
        assert_eq!(centers(&dec, 0, zeta).len(), n);
    }

    #[test]
    fn thermal_bijection_exists_at_guaranteed_threshold() {
        let params = ThermalParams::new(1.0, 1.0).unwrap();
        let f = sample_open(&params, 256, &RngStream::new(21, 0));
        let l = build_lax(&f);
        let dec = l.eig().unwrap();
        let zeta = 1.0 / (2.0 * 256.0);
        let asg = center_bijection(&dec, zeta).unwrap();
        assert!(asg.validate(&dec));
        for k in 0..dec.n {
            assert!(asg.witness[k] >= zeta);
        }
    }

    #[test]
    fn unitarity_accounting_counts_slots() {
        let params = ThermalParams::new(1.0, 1.0).unwrap();
        let f = sample_open(&params, 64, &RngStream::new(22, 0));
        let dec = build_lax(&f).eig().unwrap();
        let slots: Vec<usize> = (10..30).collect();
        let total = unitarity_accounting(&dec, &slots);
        assert!((total - 20.0).abs() < 1e-8, "got {total}");
    }

    #[test]
    fn matching_failure_reports_size() {
        let l = LaxMatrix::open_from_parts(0, vec![0.0, 0.0], vec![1.0]);
        let dec = l.eig().unwrap();
        // entries are +-1/sqrt(2) ~ 0.707; a threshold above that matches nothing
        match center_bijection(&dec, 0.9) {
            Err(Error::NoBijection { max_matching }) => assert_eq!(max_matching, 0),
            other => panic!("expected NoBijection, got {other:?}"),
        }
    }

    #[test]
    fn decay_profile_shapes() {
        // basis vector: floor everywhere off center, +inf sentinel
        let l = LaxMatrix::open_from_parts(0, vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![0.0; 4]);
        let dec = l.eig().unwrap();
        let p = decay_profile(&l, &dec, 0, dec.peak(0), 1).unwrap();
        assert!(p.rate.is_infinite());
        assert_eq!(p.floor_fraction, 1.0);

        // thermal vector: positive rate
        let params = ThermalParams::new(1.0, 1.0).unwrap();
        let f = sample_open(&params, 128, &RngStream::new(23, 0));
        let l = build_lax(&f);
        let dec = l.eig().unwrap();
        let asg = center_bijection(&dec, 1.0 / 256.0).unwrap();
        let mid = 64;
        let p = decay_profile(&l, &dec, mid, asg.phi[mid], 3).unwrap();
        assert!(p.rate > 0.0, "rate {}", p.rate);
        assert!(p.residual.is_finite());
    }

    #[test]
    fn tracking_on_stationary_torus_is_constant() {
        use crate::lattice::{evolve, FlaschkaState, IntegratorConfig};
        let f = FlaschkaState {
            domain: crate::domain::DomainSpec::Torus { n: 6, upsilon: 0.0 },
            a: vec![1.0; 6],
            b: vec![0.0; 6],
            t: 0.0,
            q_first: 0.0,
        };
        let traj = evolve(&f, &IntegratorConfig::rk4(1e-2).unwrap(), 1.0).unwrap();
        let rep = track_centers(&traj, 1.0 / 12.0).unwrap();
        for a in &rep.assignments[1..] {
            assert_eq!(a.phi, rep.assignments[0].phi);
        }
        assert_eq!(rep.max_displacement, 0);

        // time reversal gives the reversed assignment sequence
        let mut rev = traj.clone();
        rev.samples.reverse();
        for (i, s) in rev.samples.iter_mut().enumerate() {
            s.t = i as f64; // keep times increasing
        }
        rev.conserved_drift.reverse();
        let rep_rev = track_centers(&rev, 1.0 / 12.0).unwrap();
        let mut expect: Vec<_> = rep.assignments.clone();
        expect.reverse();
        assert_eq!(rep_rev.assignments, expect);
    }

    #[test]
    fn truncation_match_exact_on_decoupled_blocks() {
        // a_{l-1} = a_l = 0 already: zeroing row l changes nothing except
        // the isolated diagonal, so distant eigenvalues match exactly
        let l = LaxMatrix::open_from_parts(
            0,
            vec![0.3, -0.9, 5.0, 0.8, 1.7],
            vec![0.6, 0.0, 0.0, 0.4],
        );
        let pairs = truncation_eigen_match(&l, 2, 1e-8, 1).unwrap();
        assert!(!pairs.is_empty());
        for p in &pairs {
            if p.center_truncated != 2 {
                assert_eq!(p.gap, 0.0, "pair {p:?}");
            }
        }
    }

    #[test]
    fn truncation_match_decays_with_distance() {
        let params = ThermalParams::new(1.0, 1.0).unwrap();
        let f = sample_open(&params, 128, &RngStream::new(29, 0));
        let l = build_lax(&f);
        let pairs = truncation_eigen_match(&l, 64, 1.0 / 256.0, 25).unwrap();
        assert!(!pairs.is_empty());
        let max_gap = pairs.iter().map(|p| p.gap).fold(0.0f64, f64::max);
        assert!(max_gap < 1e-4, "max gap {max_gap}");
    }

    #[test]
    fn bulk_collar_defaults() {
        assert_eq!(bulk_collar(512, 0.0), 52); // ceil(51.2)
        let c = bulk_collar(512, 20.0);
        assert_eq!(c, (20.0 * (512.0f64).ln()).ceil() as usize);
        // very long horizons fall back to the 10% fraction
        assert_eq!(bulk_collar(512, 100.0), 52);
    }
}
