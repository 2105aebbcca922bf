//! The numerical kernels of the finite-type model: the tilted type matrix,
//! its principal eigenpair, and the matrix exponential they feed.
//!
//! ```sh
//! cargo run --release --example eigen_kernels
//! ```

use spinetree::eigen::{build_matrix, expm_apply, principal_eigenpair, residual_inf};
use spinetree::model::finite_type_model;

fn main() {
    let model = finite_type_model(
        &[1.0, 2.0],
        &[1.0, 2.0],
        1.0,
        vec![vec![-1.0, 1.0], vec![1.0, -1.0]],
    )
    .expect("valid model");

    for lambda in [0.0, 0.5, 1.0] {
        let m = build_matrix(&model, lambda).expect("finite-type");
        let (e, v) = principal_eigenpair(&m).expect("eigenpair");
        println!("lambda = {lambda}");
        for row in m.rows() {
            println!("  [{}]", row.iter().map(|x| format!("{x:7.3}")).collect::<Vec<_>>().join(" "));
        }
        println!("  principal eigenvalue {e:.10}");
        println!(
            "  eigenvector ({})  residual {:.2e}",
            v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(", "),
            residual_inf(&m, e, &v)
        );
        // e^{tM} v = e^{Et} v ties the two kernels together.
        let t = 1.5;
        let lhs = expm_apply(&m, t, &v).expect("expm");
        let scale = (e * t).exp();
        let dev = lhs
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - scale * b).abs() / scale)
            .fold(0.0f64, f64::max);
        println!("  | e^(tM) v - e^(Et) v | / e^(Et)  =  {dev:.2e} at t = {t}");
    }
}
