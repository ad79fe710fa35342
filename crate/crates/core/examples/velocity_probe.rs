use toda_core::hydro::velocity_field_from_trajectory;
use toda_core::lattice::{evolve, IntegratorConfig};
use toda_core::lax::build_lax;
use toda_core::localization::{bulk_collar, center_bijection};
use toda_core::rng::RngStream;
use toda_core::thermal::{sample_open, ThermalParams};

fn main() {
    let params = ThermalParams::new(1.0, 1.0).unwrap();
    let n = 1024usize;
    let zeta = 1.0 / (2.0 * n as f64);
    let f = sample_open(&params, n, &RngStream::new(111, 0));
    let cfg = IntegratorConfig::rk4(1e-3).unwrap().with_sample_every(32.0);
    let traj = evolve(&f, &cfg, 32.0).unwrap();
    let field = velocity_field_from_trajectory(&traj, params.alpha, zeta).unwrap();
    let dec0 = build_lax(traj.initial()).eig().unwrap();
    let asg0 = center_bijection(&dec0, zeta).unwrap();
    let collar = bulk_collar(n, 32.0);
    println!("collar = {collar}");
    println!("{:>4} {:>9} {:>9} {:>9} {:>6}", "k", "lambda", "v_solved", "v_emp", "phi0");
    for k in (0..n).step_by(64) {
        println!(
            "{:4} {:9.4} {:9.4} {:9.4} {:6}",
            k, field.lambdas[k], field.solved[k], field.empirical[k], asg0.phi[k]
        );
    }
    // least-squares line v_emp ~ a + b v_solved on bulk
    let bulk: Vec<usize> =
        (0..n).filter(|&k| asg0.phi[k] >= collar && asg0.phi[k] + collar < n).collect();
    let xs: Vec<f64> = bulk.iter().map(|&k| field.solved[k]).collect();
    let ys: Vec<f64> = bulk.iter().map(|&k| field.empirical[k]).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    println!("bulk count {}, mean solved {mx:.4}, mean emp {my:.4}, fit slope {:.4}, intercept {:.4}",
        bulk.len(), sxy / sxx, my - sxy / sxx * mx);
}
