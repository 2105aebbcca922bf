//! The exact combinatorial oracle: enumerate every offspring assignment of
//! the discrete skeleton in rational arithmetic and read off the spine
//! identities with zero tolerance.
//!
//! ```sh
//! cargo run --release --example discrete_skeleton
//! ```

use spinetree::model::Pmf;
use spinetree::oracle::{enumerate_discrete_skeleton, passage_probability, rational_to_f64};
use spinetree::tree::Label;

fn main() {
    let pmf = Pmf::zero_or_two();
    let depth = 3;
    let oracle = enumerate_discrete_skeleton(&pmf, depth).expect("enumeration");

    println!("offspring law p0 = p2 = 1/2, depth {depth}");
    println!("enumerated trees: {}", oracle.tree_count);
    println!(
        "expected ancestral weight total at depth {depth}: {} (pathwise constant: {})",
        oracle.weight_total, oracle.pathwise_weight_sum_one
    );
    println!("spine family-size law under the changed weighting (exact):");
    for (a, p) in oracle.spine_family_law.iter().enumerate() {
        println!("  A = {a}: {p}  (= {})", rational_to_f64(p));
    }
    println!("generation-size laws:");
    for (d, law) in oracle.generation_size_law.iter().enumerate() {
        let mean = oracle.expected_generation_size(d);
        let entries: Vec<String> = law.iter().map(|(z, p)| format!("{z}:{p}")).collect();
        println!("  depth {d}: {}  mean {}", entries.join("  "), mean);
    }

    println!("binary passage probabilities (exact powers of two):");
    for d in 1..=4 {
        let label = Label::from_word(&vec![1; d]).unwrap();
        let p = passage_probability(&Pmf::binary(), &label).expect("oracle");
        println!("  depth {d}: {p}");
    }
    let label: Label = "2.1".parse().unwrap();
    println!(
        "passage probability of {label} under p0 = p2 = 1/2: {}",
        passage_probability(&pmf, &label).expect("oracle")
    );
}
