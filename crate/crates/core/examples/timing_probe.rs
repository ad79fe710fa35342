use std::time::Instant;
use toda_core::lax::{build_lax, transfer_product, LaxMatrix};
use toda_core::rng::RngStream;
use toda_core::thermal::{sample_open, ThermalParams};
use rand::Rng;

fn main() {
    let params = ThermalParams::new(1.0, 1.0).unwrap();
    for n in [256usize, 512, 1024] {
        let f = sample_open(&params, n, &RngStream::new(2000, 0));
        let l = build_lax(&f);
        let t0 = Instant::now();
        let vals = l.eigenvalues().unwrap();
        let t1 = t0.elapsed();
        let t0 = Instant::now();
        let dec = l.eig().unwrap();
        let t2 = t0.elapsed();
        println!("N={n:5}: eigenvalues {t1:?}, full eig {t2:?}  (check {:.2e})", dec.eigen_residual(&l).max(vals[0]-dec.eigenvalues[0]));
    }

    // transfer propagation residual magnitudes on random small instances
    let mut rng = RngStream::new(2001, 0).rng();
    let mut worst_abs = 0.0f64;
    let mut worst_scaled = 0.0f64;
    for inst in 0..200 {
        let n = 4 + (rng.random::<u64>() % 29) as usize; // 4..=32
        let f = sample_open(&params, n, &RngStream::new(2002, inst));
        let l = LaxMatrix::open_from_parts(0, f.b.clone(), f.a[..n - 1].to_vec());
        let dec = l.eig().unwrap();
        let k = (rng.random::<u64>() % n as u64) as usize;
        let mu = dec.eigenvalues[k];
        let u = dec.vector(k);
        let i = (rng.random::<u64>() % (n as u64 - 1)) as usize;
        let j = i + (rng.random::<u64>() % (n as u64 - 1 - i as u64)) as usize;
        let s = transfer_product(&l, i as i64, j as i64, mu).unwrap();
        let w_i = [if i == 0 { 0.0 } else { u[i - 1] }, u[i]];
        let out = s.apply(w_i);
        let res = (out[0] - u[j]).abs().max((out[1] - u[j + 1]).abs());
        let snorm = s.0.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        worst_abs = worst_abs.max(res);
        worst_scaled = worst_scaled.max(res / snorm.max(1.0));
    }
    println!("transfer propagation: worst abs {worst_abs:.3e}, worst amplification-scaled {worst_scaled:.3e}");
}
