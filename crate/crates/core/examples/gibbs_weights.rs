//! Gibbs-Boltzmann weights: the normalized per-particle contributions to
//! the additive martingale give the conditional law of the spine's current
//! node under the changed measure. Prints the weight table for one tree,
//! then checks the law empirically.
//!
//! ```sh
//! cargo run --release --example gibbs_weights
//! ```

use std::collections::BTreeMap;

use spinetree::eigen::MartingaleSpec;
use spinetree::martingale::{conditional_expectation_q, gibbs_boltzmann_weights};
use spinetree::model::{bbm_model, Pmf};
use spinetree::simulate::{simulate_q_tilde, Measure, SimConfig, DEFAULT_GRID_STEP};
use spinetree::tree::Label;

fn main() {
    let lambda = 0.5;
    let t = 1.0;
    let t_max = t + DEFAULT_GRID_STEP;
    let model = bbm_model(1.0, Pmf::binary()).expect("valid model");
    let spec = MartingaleSpec::bbm(lambda);

    // One tree's weight table, plus a conditional expectation of position.
    let config = SimConfig::new(model.clone(), Measure::QTilde(spec.clone()), t_max, 606)
        .with_replicate(3);
    let (tree, spine) = simulate_q_tilde(&config).expect("simulation");
    let weights = gibbs_boltzmann_weights(&spec, &model, &tree, t).expect("weights");
    println!("label,weight,position");
    let mut positions = BTreeMap::new();
    for (label, w) in &weights {
        let x = tree.path_point_at(label, t).expect("alive").x;
        positions.insert(label.clone(), x);
        println!("{label},{w:.6},{x:.4}");
    }
    let cond_mean = conditional_expectation_q(&positions, &weights).expect("average");
    println!("conditional mean position under the weights: {cond_mean:.4}");
    println!(
        "realized spine node at t: {}",
        spine.node_at(&tree, t).expect("alive")
    );

    // Empirical check: how often does the realized spine node carry the
    // largest weight, versus the total mass those top nodes carry?
    let reps = 10_000u64;
    let mut top_hits = 0u64;
    let mut top_mass = 0.0f64;
    for rep in 0..reps {
        let config = SimConfig::new(model.clone(), Measure::QTilde(spec.clone()), t_max, 607)
            .with_replicate(rep);
        let (tree, spine) = simulate_q_tilde(&config).expect("simulation");
        let weights = gibbs_boltzmann_weights(&spec, &model, &tree, t).expect("weights");
        let node = spine.node_at(&tree, t).expect("alive");
        let top: &Label = weights
            .iter()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(u, _)| u)
            .unwrap();
        if *top == node {
            top_hits += 1;
        }
        top_mass += weights[top];
    }
    println!(
        "over {reps} replicates: spine sat on the max-weight particle {:.4} of the time; \
         mean max weight {:.4}",
        top_hits as f64 / reps as f64,
        top_mass / reps as f64
    );
}
