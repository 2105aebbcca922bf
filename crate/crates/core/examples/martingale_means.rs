//! Empirical means of the three martingales under their matching samplers:
//! the additive martingale on plain trees, the single-particle functional on
//! lone paths, and the spined martingale on trees with a uniform spine. All
//! means sit at the start value.
//!
//! ```sh
//! cargo run --release --example martingale_means
//! ```

use spinetree::eigen::MartingaleSpec;
use spinetree::harness::stats::mean_and_se;
use spinetree::martingale::{eval_z, eval_zeta, eval_zeta_tilde};
use spinetree::model::{bbm_model, Pmf};
use spinetree::simulate::{
    simulate_p_tilde, simulate_single_particle, simulate_tree_p, Measure, ParticleLaw,
    SimConfig, DEFAULT_GRID_STEP,
};
use spinetree::tree::Point;

fn main() {
    let lambda = 0.5;
    let t = 1.0;
    let t_max = t + DEFAULT_GRID_STEP;
    let reps = 20_000u64;
    let model = bbm_model(1.0, Pmf::binary()).expect("valid model");
    let spec = MartingaleSpec::bbm(lambda);

    let mut z_vals = Vec::new();
    let mut zeta_vals = Vec::new();
    let mut tilde_vals = Vec::new();
    for rep in 0..reps {
        let config =
            SimConfig::new(model.clone(), Measure::P, t_max, 101).with_replicate(rep);
        let tree = simulate_tree_p(&config).expect("simulation");
        z_vals.push(eval_z(&spec, &model, &tree, t).expect("eval").value());

        let path = simulate_single_particle(
            &model,
            &ParticleLaw::Plain,
            t_max,
            DEFAULT_GRID_STEP,
            102,
            rep,
            Point::untyped(0.0),
        )
        .expect("path");
        zeta_vals.push(eval_zeta(&spec, &model, &path, t).expect("eval"));

        let config =
            SimConfig::new(model.clone(), Measure::PTilde, t_max, 103).with_replicate(rep);
        let (tree, spine) = simulate_p_tilde(&config).expect("simulation");
        tilde_vals.push(eval_zeta_tilde(&spec, &model, &tree, &spine, t).expect("eval"));
    }

    println!("martingale means at t = {t}, lambda = {lambda}, {reps} replicates");
    println!("{:<28} {:>10} {:>10} {:>8}", "martingale", "mean", "stderr", "z vs 1");
    for (name, vals) in [
        ("additive Z (plain law)", &z_vals),
        ("single-particle zeta", &zeta_vals),
        ("spined zeta~ (uniform spine)", &tilde_vals),
    ] {
        let (m, se) = mean_and_se(vals);
        println!("{name:<28} {m:>10.5} {se:>10.5} {:>8.2}", (m - 1.0) / se);
    }
}
