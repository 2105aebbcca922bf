//! The spine decomposition: conditioning on the full spine record, the
//! expected additive martingale is the spine term plus one fission term per
//! spine birth. Holding one spine skeleton fixed and resampling the
//! non-spine subtrees reproduces the formula value.
//!
//! ```sh
//! cargo run --release --example spine_decomposition
//! ```

use spinetree::eigen::MartingaleSpec;
use spinetree::harness::stats::mean_and_se;
use spinetree::martingale::{eval_z, spine_decomposition};
use spinetree::model::{bbm_model, Pmf};
use spinetree::simulate::{
    simulate_spine_skeleton, tree_from_skeleton, Measure, SimConfig, DEFAULT_GRID_STEP,
};

fn main() {
    let lambda = 0.5;
    let t = 1.0;
    let t_max = t + DEFAULT_GRID_STEP;
    let resamples = 2_000u64;
    let model = bbm_model(1.0, Pmf::binary()).expect("valid model");
    let spec = MartingaleSpec::bbm(lambda);

    // Find a skeleton with at least two fissions to make the sum visible.
    let mut config =
        SimConfig::new(model.clone(), Measure::QTilde(spec.clone()), t_max, 505);
    let skeleton = loop {
        let skel = simulate_spine_skeleton(&config).expect("skeleton");
        if skel.fissions.iter().filter(|f| f.time <= t).count() >= 2 {
            break skel;
        }
        config.replicate += 1;
    };
    println!(
        "skeleton with {} fissions by t = {t} (replicate {})",
        skeleton.fissions.iter().filter(|f| f.time <= t).count(),
        config.replicate
    );

    let (tree0, spine0) = tree_from_skeleton(&config, &skeleton, u64::MAX).expect("assembly");
    let formula = spine_decomposition(&spec, &model, &tree0, &spine0, t).expect("formula");

    let mut values = Vec::with_capacity(resamples as usize);
    for j in 0..resamples {
        let (tree, _) = tree_from_skeleton(&config, &skeleton, 1 + j).expect("assembly");
        values.push(eval_z(&spec, &model, &tree, t).expect("eval").value());
    }
    let (m, se) = mean_and_se(&values);
    println!("spine decomposition formula value: {formula:.6}");
    println!("nested-MC mean of Z({t}) over {resamples} subtree redraws: {m:.6} +- {se:.6}");
    println!("z = {:+.2}", (m - formula) / se);
}
