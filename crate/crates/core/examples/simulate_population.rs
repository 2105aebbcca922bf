//! Simulate branching Brownian motion under the plain law and compare the
//! population growth against the expectation ODE.
//!
//! ```sh
//! cargo run --release --example simulate_population
//! ```

use spinetree::model::{bbm_model, Pmf};
use spinetree::oracle::expected_population;
use spinetree::simulate::{simulate_tree_p, Measure, SimConfig};

fn main() {
    let rate = 1.0;
    let t_max = 2.0 + 1.0 / 64.0;
    let reps = 5_000u64;
    let model = bbm_model(rate, Pmf::binary()).expect("valid model");

    let checkpoints = [0.5, 1.0, 2.0];
    let mut sums = [0.0f64; 3];
    let mut nodes = 0usize;
    for rep in 0..reps {
        let config = SimConfig::new(model.clone(), Measure::P, t_max, 42).with_replicate(rep);
        let tree = simulate_tree_p(&config).expect("simulation");
        nodes += tree.len();
        for (i, &t) in checkpoints.iter().enumerate() {
            sums[i] += tree.alive_at(t).expect("in horizon").len() as f64;
        }
    }

    println!("binary branching Brownian motion, rate {rate}, {reps} replicates");
    println!("{:>6} {:>12} {:>12}", "t", "mean |N_t|", "e^(m r t)");
    for (i, &t) in checkpoints.iter().enumerate() {
        let mean = sums[i] / reps as f64;
        let oracle = expected_population(rate, 1.0, t);
        println!("{t:>6} {mean:>12.4} {oracle:>12.4}");
    }
    println!("total nodes simulated: {nodes}");
}
