use toda_core::lax::{build_lax, min_consecutive_gap};
use toda_core::rng::RngStream;
use toda_core::thermal::{sample_open, ThermalParams};

fn run(seed: u64) -> (f64, f64, f64) {
    let params = ThermalParams::new(1.0, 1.0).unwrap();
    let n = 128usize;
    let replicas = 10_000usize;
    let mut gaps: Vec<f64> = Vec::with_capacity(replicas);
    for r in 0..replicas {
        let f = sample_open(&params, n, &RngStream::new(seed, r as u64));
        let vals = build_lax(&f).eigenvalues().unwrap();
        gaps.push(min_consecutive_gap(&vals));
    }
    let deltas: Vec<f64> = (0..13).map(|i| 1e-6 * 10f64.powf(i as f64 / 4.0)).collect();
    let ps: Vec<f64> = deltas
        .iter()
        .map(|&d| gaps.iter().filter(|&&g| g < d).count() as f64 / replicas as f64)
        .collect();
    let sxy: f64 = deltas.iter().zip(&ps).map(|(d, p)| d * p).sum();
    let sxx: f64 = deltas.iter().map(|d| d * d).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = deltas.iter().zip(&ps).map(|(d, p)| (p - slope * d).powi(2)).sum();
    let mean_p: f64 = ps.iter().sum::<f64>() / ps.len() as f64;
    let ss_tot_c: f64 = ps.iter().map(|p| (p - mean_p).powi(2)).sum();
    let ss_tot_u: f64 = ps.iter().map(|p| p * p).sum();
    (slope, 1.0 - ss_res / ss_tot_c, 1.0 - ss_res / ss_tot_u)
}

fn main() {
    for seed in [1300u64, 77, 424242] {
        let (s, rc, ru) = run(seed);
        println!("seed {seed}: slope={s:.0} R2c={rc:.4} R2u={ru:.4}");
    }
}
