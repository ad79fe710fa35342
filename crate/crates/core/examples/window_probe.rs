use toda_core::lattice::{evolve, IntegratorConfig};
use toda_core::lax::build_lax;
use toda_core::localization::center_bijection;
use toda_core::quasiparticle::charge_window_vs_eigsum;
use toda_core::rng::RngStream;
use toda_core::thermal::{sample_open, ThermalParams};

fn main() {
    let params = ThermalParams::new(1.0, 1.0).unwrap();
    let n = 512usize;
    let t = (n as f64).powf(0.4);
    println!("T = {t:.2}, alpha = {:.4}", params.alpha);
    let mut rel = vec![Vec::new(), Vec::new(), Vec::new()];
    for repn in 0..8u64 {
        let f = sample_open(&params, n, &RngStream::new(900 + repn, 0));
        let traj = evolve(&f, &IntegratorConfig::rk4(1e-3).unwrap(), t).unwrap();
        let ft = traj.last();
        let dec = build_lax(ft).eig().unwrap();
        let asg = center_bijection(&dec, 1.0 / (2.0 * n as f64)).unwrap();
        let q = ft.positions();
        let mut qs = q.clone();
        qs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (qlo, qhi) = (qs[(n as f64 * 0.25) as usize], qs[(n as f64 * 0.75) as usize]);
        // several disjoint windows of width T in the bulk
        let mut lo = qlo;
        while lo + t < qhi {
            for m in 0..=2usize {
                let w = charge_window_vs_eigsum(ft, &dec, &asg, (lo, lo + t), m).unwrap();
                let denom = w.gross_charge.max(1e-12);
                rel[m].push(w.residual / denom);
            }
            lo += t * 1.5;
        }
    }
    for m in 0..=2 {
        let mut v = rel[m].clone();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        println!(
            "m={m}: count={} median_rel={:.4} p90={:.4}",
            v.len(),
            v[v.len() / 2],
            v[(v.len() as f64 * 0.9) as usize]
        );
    }
    let mut pooled: Vec<f64> = rel.concat();
    pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!("pooled median over m in {{0,1,2}}: {:.4}", pooled[pooled.len() / 2]);
}
