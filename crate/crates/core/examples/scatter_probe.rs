use toda_core::lattice::{evolve, IntegratorConfig};
use toda_core::quasiparticle::scattering_report;
use toda_core::rng::RngStream;
use toda_core::thermal::{sample_open, ThermalParams};

fn main() {
    let params = ThermalParams::new(1.0, 1.0).unwrap();
    for (n, t) in [(96usize, 4.0f64), (128, 8.0), (256, 12.0), (512, 20.0)] {
        let mut med_norm = Vec::new();
        let mut med_abs = Vec::new();
        let mut med_naive = Vec::new();
        for rep in 0..4u64 {
            let f = sample_open(&params, n, &RngStream::new(500 + rep, 0));
            let traj = evolve(&f, &IntegratorConfig::rk4(1e-3).unwrap(), t).unwrap();
            let rep_s = scattering_report(&traj, params.alpha, 1.0 / (2.0 * n as f64)).unwrap();
            let mut abs: Vec<f64> = rep_s.entries.iter().filter(|e| e.bulk).map(|e| e.residual.abs()).collect();
            let mut norm: Vec<f64> = rep_s.entries.iter().filter(|e| e.bulk).map(|e| e.normalized_residual).collect();
            let mut naive: Vec<f64> = rep_s.entries.iter().filter(|e| e.bulk)
                .map(|e| (e.lambda * t - e.q_final + e.q_initial).abs()).collect();
            abs.sort_by(|a,b| a.partial_cmp(b).unwrap());
            norm.sort_by(|a,b| a.partial_cmp(b).unwrap());
            naive.sort_by(|a,b| a.partial_cmp(b).unwrap());
            med_abs.push(abs[abs.len()/2]);
            med_norm.push(norm[norm.len()/2]);
            med_naive.push(naive[naive.len()/2]);
        }
        println!("N={n:4} T={t:5.1}: med_abs_resid={:?}", med_abs.iter().map(|x| (x*100.0).round()/100.0).collect::<Vec<_>>());
        println!("            med_naive    ={:?}", med_naive.iter().map(|x| (x*100.0).round()/100.0).collect::<Vec<_>>());
        println!("            med_normalized={:?}", med_norm.iter().map(|x| (x*1000.0).round()/1000.0).collect::<Vec<_>>());
    }
}
