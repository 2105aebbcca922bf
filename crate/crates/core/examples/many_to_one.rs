//! The Many-to-One identity on the two-type model: the expected sum of a
//! type indicator over the population equals a single-particle expectation
//! with an exponential weight, and both match the matrix-exponential value.
//!
//! ```sh
//! cargo run --release --example many_to_one
//! ```

use spinetree::harness::stats::mean_and_se;
use spinetree::model::{finite_type_model, rate_and_mean_along};
use spinetree::oracle::many_to_one_type_oracle;
use spinetree::simulate::{
    simulate_single_particle, simulate_tree_p, Measure, ParticleLaw, SimConfig,
    DEFAULT_GRID_STEP,
};
use spinetree::tree::Point;

fn main() {
    let t = 1.0;
    let t_max = t + DEFAULT_GRID_STEP;
    let reps = 20_000u64;
    let model = finite_type_model(
        &[1.0, 2.0],
        &[1.0, 2.0],
        1.0,
        vec![vec![-1.0, 1.0], vec![1.0, -1.0]],
    )
    .expect("valid model");
    let g = [1.0f64, 0.0];
    let start = Point { x: 0.0, ty: 0 };

    // Population side: sum of g over particles alive at t.
    let mut pop = Vec::new();
    for rep in 0..reps {
        let config =
            SimConfig::new(model.clone(), Measure::P, t_max, 301).with_replicate(rep).with_start(start);
        let tree = simulate_tree_p(&config).expect("simulation");
        let mut total = 0.0;
        for u in tree.alive_at(t).expect("in horizon") {
            total += g[tree.path_point_at(&u, t).expect("alive").ty];
        }
        pop.push(total);
    }

    // Single-particle side: e^{int m R} g(position at t) along one path.
    let mut single = Vec::new();
    for rep in 0..reps {
        let path = simulate_single_particle(
            &model,
            &ParticleLaw::Plain,
            t_max,
            DEFAULT_GRID_STEP,
            302,
            rep,
            start,
        )
        .expect("path");
        let (_, int_mr) = rate_and_mean_along(&model, &path, t).expect("integral");
        single.push(int_mr.exp() * g[path.position_at(t).expect("covered").ty]);
    }

    let oracle = many_to_one_type_oracle(&model, &g, start.ty, t).expect("oracle");
    let (m_pop, se_pop) = mean_and_se(&pop);
    let (m_single, se_single) = mean_and_se(&single);
    println!("two-type model, g = indicator of type 1, t = {t}, {reps} replicates");
    println!("population estimator      {m_pop:>10.5} +- {se_pop:.5}");
    println!("single-particle estimator {m_single:>10.5} +- {se_single:.5}");
    println!("matrix-exponential oracle {oracle:>10.5}");
    println!(
        "z-scores: population {:+.2}, single-particle {:+.2}",
        (m_pop - oracle) / se_pop,
        (m_single - oracle) / se_single
    );
}
