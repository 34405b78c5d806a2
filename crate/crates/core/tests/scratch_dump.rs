use redmash::harness::{run_ensemble, Method, RunConfig};
use redmash::harness::CavityConfig;

#[test]
#[ignore]
fn dump_emission() {
    let base = CavityConfig {
        t_final_fs: 120.0,
        dt: Some(10.0),
        grid_points: 1000,
        n_traj: 100_000,
        seed: 0xC9 + 1,
        ..Default::default()
    };
    let hybrid = run_ensemble(&RunConfig::Cavity(base), Method::Hybrid).unwrap();
    let emission = hybrid
        .estimators
        .iter()
        .find(|s| s.name == "emission_rate")
        .unwrap();
    let htimes = &hybrid.times;
    let rebin = 12;
    let n_fine = emission.mean.len() - 1;
    let mut j = 0;
    while j + rebin <= n_fine {
        let mean = emission.mean[j..j + rebin].iter().sum::<f64>() / rebin as f64;
        let se = emission.stderr[j..j + rebin].iter().sum::<f64>() / (rebin as f64).sqrt()
            / rebin as f64;
        println!(
            "t = {:7.2}  rate = {:.6e}  +- {:.2e}",
            0.5 * (htimes[j] + htimes[j + rebin]),
            mean,
            se
        );
        j += rebin;
    }
}
