//! Attach a uniformly chosen spine to plain-law trees and check the two
//! identities it satisfies: the ancestral weight sum equals one pathwise,
//! and the realized passage frequency of a fixed label tracks the exact
//! enumeration oracle.
//!
//! ```sh
//! cargo run --release --example uniform_spine
//! ```

use spinetree::model::{bbm_model, Pmf};
use spinetree::oracle::{passage_probability, rational_to_f64};
use spinetree::simulate::{simulate_p_tilde, Measure, SimConfig};
use spinetree::tree::Label;

fn main() {
    let model = bbm_model(2.0, Pmf::zero_or_two()).expect("valid model");
    let reps = 20_000u64;
    let label: Label = "2.1".parse().unwrap();

    let mut worst = 0.0f64;
    let mut hits = 0u64;
    let mut product_mass = 0.0f64;
    for rep in 0..reps {
        let config = SimConfig::new(model.clone(), Measure::PTilde, 1.0, 7).with_replicate(rep);
        let (tree, spine) = simulate_p_tilde(&config).expect("simulation");
        let dev = (tree.ancestral_weight_sum(0.75).unwrap() - 1.0).abs();
        worst = worst.max(dev);
        if spine.contains(&label) {
            hits += 1;
        }
        if tree.contains(&label) {
            product_mass += label
                .ancestors()
                .map(|v| 1.0 / (1.0 + tree.node(&v).unwrap().offspring().unwrap() as f64))
                .product::<f64>();
        }
    }

    println!("offspring law p0 = p2 = 1/2, {reps} spined replicates");
    println!("worst |ancestral weight sum - 1|: {worst:.2e}");
    let exact = passage_probability(&Pmf::zero_or_two(), &label).expect("oracle");
    println!(
        "label {label}: spine passage freq {:.5}, realized ancestral product mass {:.5}",
        hits as f64 / reps as f64,
        product_mass / reps as f64,
    );
    println!(
        "exact passage probability of {label} on the infinite skeleton: {}  (= {:.5})",
        exact,
        rational_to_f64(&exact)
    );
    println!("(the realized frequencies sit below the infinite-skeleton value");
    println!(" exactly by the probability that the label is not yet born)");
}
