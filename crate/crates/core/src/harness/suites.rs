//! The named verification suites.
//!
//! Each suite pins its models, horizons, tolerances and replicate counts;
//! `SuiteParams` can scale the replicate counts down for exploration, but
//! the defaults are the acceptance settings. Checkpoint evaluations happen
//! strictly inside the horizon, so trees are simulated one grid step past
//! the last checkpoint.

use rayon::prelude::*;
use serde_json::json;

use super::report::{ExperimentReport, ReportRow};
use super::stats::{chi_square_p, mean_and_se};
use super::HarnessError;
use crate::eigen::{expm_apply, principal_eigenpair, residual_inf, MartingaleSpec, SquareMatrix};
use crate::martingale::{
    eval_z, eval_zeta, eval_zeta_tilde, gibbs_boltzmann_weights, spine_decomposition,
};
use crate::model::{bbm_model, finite_type_model, rate_and_mean_along, Pmf};
use crate::oracle::{
    enumerate_discrete_skeleton, expected_population, many_to_one_type_oracle_checked,
    passage_probability, rational_to_f64,
};
use crate::simulate::{
    simulate_p_tilde, simulate_q_tilde, simulate_single_particle, simulate_spine_skeleton,
    simulate_tree_p, tree_from_skeleton, Measure, ParticleLaw, SimConfig, DEFAULT_GRID_STEP,
};
use crate::stream::block_seed;
use crate::tree::{Label, Point};

/// Runtime knobs of a suite run. Replicate counts are pinned per suite; an
/// explicit override replaces them for quick exploratory runs, while the
/// default (`None`) is the acceptance configuration.
#[derive(Clone, Debug)]
pub struct SuiteParams {
    pub seed: u64,
    pub threshold: f64,
    pub replicates_override: Option<u64>,
}

impl Default for SuiteParams {
    fn default() -> Self {
        SuiteParams {
            seed: 1,
            threshold: 4.0,
            replicates_override: None,
        }
    }
}

impl SuiteParams {
    fn reps(&self, pinned: u64) -> u64 {
        self.replicates_override.unwrap_or(pinned).max(10)
    }
}

pub fn suite_names() -> &'static [&'static str] {
    &[
        "extension",
        "martingale",
        "many-to-one",
        "measure-change",
        "spine",
        "gibbs",
        "decomposition",
        "eigen",
        "skeleton",
        "all",
    ]
}

/// Runs a named suite and assembles its report.
pub fn run_suite(name: &str, params: &SuiteParams) -> Result<ExperimentReport, HarnessError> {
    let start = std::time::Instant::now();
    let (rows, config) = match name {
        "extension" => extension_rows(params)?,
        "martingale" => martingale_rows(params)?,
        "many-to-one" => many_to_one_rows(params)?,
        "measure-change" => measure_change_rows(params)?,
        "spine" => spine_rows(params)?,
        "gibbs" => gibbs_rows(params)?,
        "decomposition" => decomposition_rows(params)?,
        "eigen" => eigen_rows(params)?,
        "skeleton" => skeleton_rows(params)?,
        "all" => {
            let mut rows = Vec::new();
            let mut configs = Vec::new();
            for sub in suite_names().iter().filter(|s| **s != "all") {
                let (mut r, c) = match *sub {
                    "extension" => extension_rows(params)?,
                    "martingale" => martingale_rows(params)?,
                    "many-to-one" => many_to_one_rows(params)?,
                    "measure-change" => measure_change_rows(params)?,
                    "spine" => spine_rows(params)?,
                    "gibbs" => gibbs_rows(params)?,
                    "decomposition" => decomposition_rows(params)?,
                    "eigen" => eigen_rows(params)?,
                    "skeleton" => skeleton_rows(params)?,
                    _ => unreachable!(),
                };
                rows.append(&mut r);
                configs.push(json!({ *sub: c }));
            }
            (rows, json!(configs))
        }
        other => return Err(HarnessError::UnknownSuite(other.to_string())),
    };
    Ok(ExperimentReport {
        suite: name.to_string(),
        seed: params.seed,
        threshold: params.threshold,
        config,
        rows,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

fn par_try<T: Send>(
    n: u64,
    f: impl Fn(u64) -> Result<T, HarnessError> + Sync + Send,
) -> Result<Vec<T>, HarnessError> {
    (0..n).into_par_iter().map(f).collect()
}

/// Horizon one grid step past the last checkpoint, so alive-set queries at
/// the checkpoint stay inside the domain.
fn horizon(last_checkpoint: f64) -> f64 {
    last_checkpoint + DEFAULT_GRID_STEP
}

// ---------------------------------------------------------------------------
// Suite: extension (exact ancestral weight identity)
// ---------------------------------------------------------------------------

fn extension_rows(
    params: &SuiteParams,
) -> Result<(Vec<ReportRow>, serde_json::Value), HarnessError> {
    let reps = params.reps(10_000);
    let checkpoints = [0.5, 1.0, 2.0];
    let tol = 1e-9;
    let mut rows = Vec::new();
    for (law_name, pmf) in [("binary", Pmf::binary()), ("p0p2", Pmf::zero_or_two())] {
        let seed = block_seed(params.seed, &format!("extension/{law_name}"));
        let model = bbm_model(1.0, pmf)?;
        let devs = par_try(reps, |rep| {
            let config = SimConfig::new(model.clone(), Measure::PTilde, horizon(2.0), seed)
                .with_replicate(rep);
            let (tree, _) = simulate_p_tilde(&config)?;
            let mut dev = [0.0f64; 3];
            for (i, &t) in checkpoints.iter().enumerate() {
                dev[i] = (tree.ancestral_weight_sum(t)? - 1.0).abs();
            }
            Ok(dev)
        })?;
        for (i, &t) in checkpoints.iter().enumerate() {
            let max_dev = devs.iter().map(|d| d[i]).fold(0.0, f64::max);
            rows.push(ReportRow::exact_row(
                format!("extension/{law_name}/t={t}"),
                max_dev,
                tol,
                "exact:ancestral weight sum = 1",
            ));
        }
    }
    Ok((
        rows,
        json!({"replicates": reps, "checkpoints": checkpoints, "tolerance": tol, "rate": 1.0}),
    ))
}

// ---------------------------------------------------------------------------
// Suite: martingale (means pinned at their start values)
// ---------------------------------------------------------------------------

fn martingale_rows(
    params: &SuiteParams,
) -> Result<(Vec<ReportRow>, serde_json::Value), HarnessError> {
    let reps = params.reps(100_000);
    let lambdas = [0.0, 0.5, 1.0];
    let checkpoints = [0.5, 1.0, 2.0];
    let t_max = horizon(2.0);
    let model = bbm_model(1.0, Pmf::binary())?;
    let mut rows = Vec::new();
    for &lambda in &lambdas {
        let spec = MartingaleSpec::bbm(lambda);

        // Additive martingale under the plain law.
        let seed_z = block_seed(params.seed, &format!("martingale/Z/{lambda}"));
        let z_vals = par_try(reps, |rep| {
            let config = SimConfig::new(model.clone(), Measure::P, t_max, seed_z)
                .with_replicate(rep);
            let tree = simulate_tree_p(&config)?;
            let mut out = [0.0f64; 3];
            for (i, &t) in checkpoints.iter().enumerate() {
                out[i] = eval_z(&spec, &model, &tree, t)?.value();
            }
            Ok(out)
        })?;
        // Single-particle martingale under the single-particle law.
        let seed_sp = block_seed(params.seed, &format!("martingale/zeta/{lambda}"));
        let sp_vals = par_try(reps, |rep| {
            let path = simulate_single_particle(
                &model,
                &ParticleLaw::Plain,
                t_max,
                DEFAULT_GRID_STEP,
                seed_sp,
                rep,
                Point::untyped(0.0),
            )?;
            let mut out = [0.0f64; 3];
            for (i, &t) in checkpoints.iter().enumerate() {
                out[i] = eval_zeta(&spec, &model, &path, t)?;
            }
            Ok(out)
        })?;
        // Spined martingale under the spined plain law.
        let seed_tilde = block_seed(params.seed, &format!("martingale/zeta-tilde/{lambda}"));
        let tilde_vals = par_try(reps, |rep| {
            let config = SimConfig::new(model.clone(), Measure::PTilde, t_max, seed_tilde)
                .with_replicate(rep);
            let (tree, spine) = simulate_p_tilde(&config)?;
            let mut out = [0.0f64; 3];
            for (i, &t) in checkpoints.iter().enumerate() {
                out[i] = eval_zeta_tilde(&spec, &model, &tree, &spine, t)?;
            }
            Ok(out)
        })?;

        for (label, vals) in [
            ("Z", &z_vals),
            ("zeta", &sp_vals),
            ("zeta-tilde", &tilde_vals),
        ] {
            for (i, &t) in checkpoints.iter().enumerate() {
                let series: Vec<f64> = vals.iter().map(|v| v[i]).collect();
                let (m, se) = mean_and_se(&series);
                rows.push(ReportRow::z_row(
                    format!("martingale/{label}/lambda={lambda}/t={t}"),
                    m,
                    se,
                    1.0,
                    params.threshold,
                    "analytic:martingale mean = start value",
                ));
            }
        }
    }
    Ok((
        rows,
        json!({
            "replicates": reps, "lambdas": lambdas, "checkpoints": checkpoints,
            "rate": 1.0, "start": 0.0
        }),
    ))
}

// ---------------------------------------------------------------------------
// Suite: many-to-one
// ---------------------------------------------------------------------------

fn many_to_one_rows(
    params: &SuiteParams,
) -> Result<(Vec<ReportRow>, serde_json::Value), HarnessError> {
    let reps = params.reps(100_000);
    let t = 1.0;
    let t_max = horizon(t);
    let mut rows = Vec::new();

    // (a) Binary Brownian model, g = 1: both estimators against e^{rt}.
    let model = bbm_model(1.0, Pmf::binary())?;
    let target = expected_population(1.0, 1.0, t);
    let seed_pop = block_seed(params.seed, "many-to-one/bbm/population");
    let pops = par_try(reps, |rep| {
        let config =
            SimConfig::new(model.clone(), Measure::P, t_max, seed_pop).with_replicate(rep);
        let tree = simulate_tree_p(&config)?;
        Ok(tree.alive_at(t)?.len() as f64)
    })?;
    let (m, se) = mean_and_se(&pops);
    rows.push(ReportRow::z_row(
        "many-to-one/bbm/population",
        m,
        se,
        target,
        params.threshold,
        "oracle:expected_population",
    ));
    let seed_sp = block_seed(params.seed, "many-to-one/bbm/single-particle");
    let weights = par_try(reps, |rep| {
        let path = simulate_single_particle(
            &model,
            &ParticleLaw::Plain,
            t_max,
            DEFAULT_GRID_STEP,
            seed_sp,
            rep,
            Point::untyped(0.0),
        )?;
        let (_, int_mr) = rate_and_mean_along(&model, &path, t)?;
        Ok(int_mr.exp())
    })?;
    let (m, se) = mean_and_se(&weights);
    rows.push(ReportRow::z_row(
        "many-to-one/bbm/single-particle",
        m,
        se,
        target,
        params.threshold,
        "oracle:expected_population",
    ));

    // (b) Two-type model, g = indicator of type 1 (index 0).
    let ft = finite_type_model(
        &[1.0, 2.0],
        &[1.0, 2.0],
        1.0,
        vec![vec![-1.0, 1.0], vec![1.0, -1.0]],
    )?;
    let g = [1.0, 0.0];
    let y0 = 0usize;
    let (oracle_value, oracle_dev) = many_to_one_type_oracle_checked(&ft, &g, y0, t)?;
    rows.push(ReportRow::exact_row(
        "many-to-one/two-type/oracle-self-check",
        oracle_dev,
        1e-8,
        "oracle:expm halved-step consistency",
    ));
    let seed_pop2 = block_seed(params.seed, "many-to-one/two-type/population");
    let start = Point { x: 0.0, ty: y0 };
    let pops2 = par_try(reps, |rep| {
        let config = SimConfig::new(ft.clone(), Measure::P, t_max, seed_pop2)
            .with_replicate(rep)
            .with_start(start);
        let tree = simulate_tree_p(&config)?;
        let mut total = 0.0;
        for u in tree.alive_at(t)? {
            let p = tree.path_point_at(&u, t)?;
            total += g[p.ty];
        }
        Ok(total)
    })?;
    let (m_pop2, se_pop2) = mean_and_se(&pops2);
    rows.push(ReportRow::z_row(
        "many-to-one/two-type/population",
        m_pop2,
        se_pop2,
        oracle_value,
        params.threshold,
        "oracle:many_to_one_type_oracle",
    ));
    let seed_sp2 = block_seed(params.seed, "many-to-one/two-type/single-particle");
    let weights2 = par_try(reps, |rep| {
        let path = simulate_single_particle(
            &ft,
            &ParticleLaw::Plain,
            t_max,
            DEFAULT_GRID_STEP,
            seed_sp2,
            rep,
            start,
        )?;
        let (_, int_mr) = rate_and_mean_along(&ft, &path, t)?;
        let p = path.position_at(t)?;
        Ok(int_mr.exp() * g[p.ty])
    })?;
    let (m_sp2, se_sp2) = mean_and_se(&weights2);
    rows.push(ReportRow::z_row(
        "many-to-one/two-type/single-particle",
        m_sp2,
        se_sp2,
        oracle_value,
        params.threshold,
        "oracle:many_to_one_type_oracle",
    ));
    rows.push(ReportRow::two_sample_z_row(
        "many-to-one/two-type/estimator-agreement",
        m_pop2,
        se_pop2,
        m_sp2,
        se_sp2,
        params.threshold,
        "two-sample",
    ));

    Ok((
        rows,
        json!({
            "replicates": reps, "t": t,
            "two_type": {"variance": [1.0, 2.0], "rates": [1.0, 2.0], "theta": 1.0},
            "oracle": oracle_value,
        }),
    ))
}

// ---------------------------------------------------------------------------
// Suite: measure-change (end-to-end validation of the changed law)
// ---------------------------------------------------------------------------

fn measure_change_rows(
    params: &SuiteParams,
) -> Result<(Vec<ReportRow>, serde_json::Value), HarnessError> {
    let reps = params.reps(100_000);
    let lambda = 0.5;
    let t = 2.0;
    let t_max = horizon(t);
    let cutoff = 4usize;
    let model = bbm_model(1.0, Pmf::binary())?;
    let spec = MartingaleSpec::bbm(lambda);

    // Left side: E_P[h * Z(t)/Z(0)] under the plain law.
    let seed_p = block_seed(params.seed, "measure-change/p-side");
    let left = par_try(reps, |rep| {
        let config =
            SimConfig::new(model.clone(), Measure::P, t_max, seed_p).with_replicate(rep);
        let tree = simulate_tree_p(&config)?;
        let z_t = eval_z(&spec, &model, &tree, t)?.value();
        let z_0 = eval_z(&spec, &model, &tree, 0.0)?.value();
        let h = f64::from(u8::from(tree.alive_at(t)?.len() >= cutoff));
        Ok([h * z_t / z_0, z_t / z_0])
    })?;
    let h_weighted: Vec<f64> = left.iter().map(|v| v[0]).collect();
    let mass: Vec<f64> = left.iter().map(|v| v[1]).collect();
    let (m_left, se_left) = mean_and_se(&h_weighted);
    let (m_mass, se_mass) = mean_and_se(&mass);

    // Right side: E_Q[h] under the changed law, evaluating h on the tree
    // with the spine ignored.
    let seed_q = block_seed(params.seed, "measure-change/q-side");
    let right = par_try(reps, |rep| {
        let config = SimConfig::new(
            model.clone(),
            Measure::QTilde(spec.clone()),
            t_max,
            seed_q,
        )
        .with_replicate(rep);
        let (tree, _spine) = simulate_q_tilde(&config)?;
        Ok(f64::from(u8::from(tree.alive_at(t)?.len() >= cutoff)))
    })?;
    let (m_right, se_right) = mean_and_se(&right);

    let mut rows = vec![
        ReportRow::z_row(
            "measure-change/total-mass",
            m_mass,
            se_mass,
            1.0,
            params.threshold,
            "analytic:martingale mean = 1",
        ),
        ReportRow::two_sample_z_row(
            format!("measure-change/indicator-N{cutoff}"),
            m_left,
            se_left,
            m_right,
            se_right,
            params.threshold,
            "two-sample:P-weighted vs changed-law",
        ),
    ];

    // Untilted second-moment check: with h = |N_t| e^{-rt} and lambda = 0
    // the reweighted plain-law mean of h Z/Z(0) equals the changed-law mean
    // of h; both sides are estimable and must agree.
    let flat = MartingaleSpec::bbm(0.0);
    let discount = (-t).exp();
    let seed_p0 = block_seed(params.seed, "measure-change/moment-p-side");
    let left0 = par_try(reps, |rep| {
        let config =
            SimConfig::new(model.clone(), Measure::P, t_max, seed_p0).with_replicate(rep);
        let tree = simulate_tree_p(&config)?;
        let n = tree.alive_at(t)?.len() as f64;
        Ok((n * discount) * (n * discount))
    })?;
    let seed_q0 = block_seed(params.seed, "measure-change/moment-q-side");
    let right0 = par_try(reps, |rep| {
        let config = SimConfig::new(
            model.clone(),
            Measure::QTilde(flat.clone()),
            t_max,
            seed_q0,
        )
        .with_replicate(rep);
        let (tree, _) = simulate_q_tilde(&config)?;
        Ok(tree.alive_at(t)?.len() as f64 * discount)
    })?;
    let (m_l0, se_l0) = mean_and_se(&left0);
    let (m_r0, se_r0) = mean_and_se(&right0);
    rows.push(ReportRow::two_sample_z_row(
        "measure-change/moment-N",
        m_l0,
        se_l0,
        m_r0,
        se_r0,
        params.threshold,
        "two-sample:second moment vs changed-law mean",
    ));

    Ok((
        rows,
        json!({
            "replicates": reps, "lambda": lambda, "t": t, "cutoff": cutoff,
            "left": m_left, "right": m_right,
        }),
    ))
}

// ---------------------------------------------------------------------------
// Suite: spine (rate, size-bias, drift, child choice)
// ---------------------------------------------------------------------------

fn spine_rows(
    params: &SuiteParams,
) -> Result<(Vec<ReportRow>, serde_json::Value), HarnessError> {
    let lambda = 0.5;
    let t = 2.0;
    let t_max = horizon(t);
    let mut rows = Vec::new();

    // Fission count and terminal drift on the binary model.
    let reps = params.reps(100_000);
    let model = bbm_model(1.0, Pmf::binary())?;
    let spec = MartingaleSpec::bbm(lambda);
    let seed_skel = block_seed(params.seed, "spine/binary-skeletons");
    let skels = par_try(reps, |rep| {
        let config = SimConfig::new(
            model.clone(),
            Measure::QTilde(spec.clone()),
            t_max,
            seed_skel,
        )
        .with_replicate(rep);
        let skel = simulate_spine_skeleton(&config)?;
        let count = skel.fissions.iter().filter(|f| f.time <= t).count() as f64;
        let x_t = skel.path.position_at(t)?.x;
        Ok([count, x_t])
    })?;
    let counts: Vec<f64> = skels.iter().map(|v| v[0]).collect();
    let xs: Vec<f64> = skels.iter().map(|v| v[1]).collect();
    let (m_count, se_count) = mean_and_se(&counts);
    rows.push(ReportRow::z_row(
        "spine/fission-count",
        m_count,
        se_count,
        (1.0 + 1.0) * 1.0 * t,
        params.threshold,
        "analytic:(1+m) r t",
    ));
    let (m_x, se_x) = mean_and_se(&xs);
    rows.push(ReportRow::z_row(
        "spine/terminal-drift",
        m_x,
        se_x,
        lambda * t,
        params.threshold,
        "analytic:tilted drift",
    ));

    // Size-biased offspring along the spine of the p0 = p2 = 1/2 model:
    // enough replicates for at least 1e5 fission samples in expectation.
    let sb_reps = params.reps(30_000);
    let model2 = bbm_model(1.0, Pmf::zero_or_two())?;
    let seed_sb = block_seed(params.seed, "spine/size-biased");
    let fission_data = par_try(sb_reps, |rep| {
        let config = SimConfig::new(
            model2.clone(),
            Measure::QTilde(MartingaleSpec::bbm(lambda)),
            t_max,
            seed_sb,
        )
        .with_replicate(rep);
        let skel = simulate_spine_skeleton(&config)?;
        let mut counts = [0u64; 3];
        let mut choices = [0u64; 3];
        for f in &skel.fissions {
            counts[f.offspring as usize] += 1;
            if f.offspring == 2 {
                choices[(f.chosen - 1) as usize] += 1;
            }
        }
        Ok((counts, choices))
    })?;
    let mut offspring_counts = [0u64; 3];
    let mut choice_counts = [0u64; 3];
    for (c, ch) in &fission_data {
        for k in 0..3 {
            offspring_counts[k] += c[k];
            choice_counts[k] += ch[k];
        }
    }
    let total = (offspring_counts[0] + offspring_counts[2]) as f64;
    let sb = Pmf::zero_or_two().size_biased();
    let expected = [sb.probs()[0] * total, sb.probs()[2] * total];
    let observed = [offspring_counts[0], offspring_counts[2]];
    let chi2: f64 = observed
        .iter()
        .zip(&expected)
        .map(|(&o, &e)| {
            let d = o as f64 - e;
            d * d / e
        })
        .sum();
    rows.push(ReportRow::p_row(
        "spine/offspring-chi2",
        chi_square_p(chi2, 1.0),
        0.001,
        "oracle:size_biased_pmf",
    ));

    // Uniform choice of the continuing child among triple births.
    let choice_total: u64 = choice_counts.iter().sum();
    let choice_expected = choice_total as f64 / 3.0;
    let chi2_choice: f64 = choice_counts
        .iter()
        .map(|&o| {
            let d = o as f64 - choice_expected;
            d * d / choice_expected
        })
        .sum();
    rows.push(ReportRow::p_row(
        "spine/child-choice-chi2",
        chi_square_p(chi2_choice, 2.0),
        0.001,
        "analytic:uniform choice",
    ));

    Ok((
        rows,
        json!({
            "replicates": reps, "size_bias_replicates": sb_reps,
            "lambda": lambda, "t": t,
            "offspring_samples": offspring_counts[0] + offspring_counts[2],
        }),
    ))
}

// ---------------------------------------------------------------------------
// Suite: gibbs (weights vs realized spine node)
// ---------------------------------------------------------------------------

fn gibbs_rows(
    params: &SuiteParams,
) -> Result<(Vec<ReportRow>, serde_json::Value), HarnessError> {
    let reps = params.reps(10_000);
    let t = 1.0;
    let t_max = horizon(t);
    let model = bbm_model(1.0, Pmf::binary())?;
    let mut rows = Vec::new();

    // Normalization, on every tree, at a nonzero tilt.
    let spec_tilt = MartingaleSpec::bbm(0.5);
    let seed_norm = block_seed(params.seed, "gibbs/normalization");
    let devs = par_try(reps, |rep| {
        let config = SimConfig::new(
            model.clone(),
            Measure::QTilde(spec_tilt.clone()),
            t_max,
            seed_norm,
        )
        .with_replicate(rep);
        let (tree, _) = simulate_q_tilde(&config)?;
        let w = gibbs_boltzmann_weights(&spec_tilt, &model, &tree, t)?;
        Ok((w.values().sum::<f64>() - 1.0).abs())
    })?;
    let max_dev = devs.into_iter().fold(0.0, f64::max);
    rows.push(ReportRow::exact_row(
        "gibbs/weight-normalization",
        max_dev,
        1e-12,
        "exact:weights sum to 1",
    ));

    // Spine-node frequencies vs the weights, pooled chi-square binned by
    // alive-count class. At zero tilt the weights within a class are equal,
    // so the class statistic is an exact multinomial.
    let spec_flat = MartingaleSpec::bbm(0.0);
    let seed_freq = block_seed(params.seed, "gibbs/frequency");
    let picks = par_try(reps, |rep| {
        let config = SimConfig::new(
            model.clone(),
            Measure::QTilde(spec_flat.clone()),
            t_max,
            seed_freq,
        )
        .with_replicate(rep);
        let (tree, spine) = simulate_q_tilde(&config)?;
        let alive = tree.alive_at(t)?;
        let node = spine.node_at(&tree, t)?;
        let rank = alive.iter().position(|u| *u == node).expect("spine alive");
        Ok((alive.len(), rank))
    })?;
    let max_n = 12usize;
    let mut class_counts: Vec<Vec<u64>> = (0..=max_n).map(|n| vec![0u64; n.max(1)]).collect();
    for (n, rank) in &picks {
        if *n >= 1 && *n <= max_n {
            class_counts[*n][*rank] += 1;
        }
    }
    let mut chi2 = 0.0;
    let mut dof = 0usize;
    for n in 1..=max_n {
        let class_total: u64 = class_counts[n].iter().sum();
        let expected = class_total as f64 / n as f64;
        // Only well-populated classes enter the statistic.
        if expected < 5.0 || n < 2 {
            continue;
        }
        for &o in &class_counts[n] {
            let d = o as f64 - expected;
            chi2 += d * d / expected;
        }
        dof += n - 1;
    }
    rows.push(ReportRow::p_row(
        "gibbs/spine-frequency-chi2",
        chi_square_p(chi2, dof as f64),
        0.001,
        "oracle:gibbs_boltzmann_weights",
    ));

    // Tilted weights: the probability-integral statistic of the realized
    // spine node has mean exactly 1/2 under the weights, with a per-tree
    // variance that is computable in closed form.
    let seed_pit = block_seed(params.seed, "gibbs/pit");
    let pit = par_try(reps, |rep| {
        let config = SimConfig::new(
            model.clone(),
            Measure::QTilde(spec_tilt.clone()),
            t_max,
            seed_pit,
        )
        .with_replicate(rep);
        let (tree, spine) = simulate_q_tilde(&config)?;
        let w = gibbs_boltzmann_weights(&spec_tilt, &model, &tree, t)?;
        let node = spine.node_at(&tree, t)?;
        let mut before = 0.0;
        let mut u_stat = 0.0;
        let mut var = 0.0;
        let mut mean = 0.0;
        for (label, wi) in &w {
            let stat = before + wi / 2.0;
            if label == &node {
                u_stat = stat;
            }
            mean += wi * stat;
            var += wi * stat * stat;
            before += wi;
        }
        var -= mean * mean;
        Ok((u_stat, var))
    })?;
    let total_u: f64 = pit.iter().map(|(u, _)| u).sum();
    let total_var: f64 = pit.iter().map(|(_, v)| v).sum();
    let n = pit.len() as f64;
    rows.push(ReportRow::z_row(
        "gibbs/pit",
        total_u / n,
        total_var.sqrt() / n,
        0.5,
        params.threshold,
        "analytic:PIT mean 1/2 under the weights",
    ));

    Ok((
        rows,
        json!({"replicates": reps, "t": t, "max_class": max_n}),
    ))
}

// ---------------------------------------------------------------------------
// Suite: decomposition (nested Monte Carlo vs the spine formula)
// ---------------------------------------------------------------------------

fn decomposition_rows(
    params: &SuiteParams,
) -> Result<(Vec<ReportRow>, serde_json::Value), HarnessError> {
    let skeleton_count = 50usize;
    let resamples = params.reps(1_000);
    let lambda = 0.5;
    let t = 1.0;
    let t_max = horizon(t);
    let model = bbm_model(1.0, Pmf::binary())?;
    let spec = MartingaleSpec::bbm(lambda);
    let seed = block_seed(params.seed, "decomposition");

    // Deterministic scan for skeletons with at least one fission by t.
    let mut chosen = Vec::new();
    let mut rep = 0u64;
    while chosen.len() < skeleton_count && rep < 10_000 {
        let config = SimConfig::new(
            model.clone(),
            Measure::QTilde(spec.clone()),
            t_max,
            seed,
        )
        .with_replicate(rep);
        let skel = simulate_spine_skeleton(&config)?;
        if skel.fissions.iter().any(|f| f.time <= t) {
            chosen.push((rep, skel));
        }
        rep += 1;
    }

    let rows: Vec<ReportRow> = chosen
        .par_iter()
        .enumerate()
        .map(|(k, (rep, skel))| -> Result<ReportRow, HarnessError> {
            let config = SimConfig::new(
                model.clone(),
                Measure::QTilde(spec.clone()),
                t_max,
                seed,
            )
            .with_replicate(*rep);
            // The formula value conditions on the spine only; any assembled
            // tree around this skeleton realizes it.
            let (tree0, spine0) = tree_from_skeleton(&config, skel, u64::MAX)?;
            let formula = spine_decomposition(&spec, &model, &tree0, &spine0, t)?;
            let mut vals = Vec::with_capacity(resamples as usize);
            for j in 0..resamples {
                let salt = (1u64 << 40) + (k as u64) * resamples + j;
                let (tree, _) = tree_from_skeleton(&config, skel, salt)?;
                vals.push(eval_z(&spec, &model, &tree, t)?.value());
            }
            let (m, se) = mean_and_se(&vals);
            Ok(ReportRow::z_row(
                format!("decomposition/skeleton-{k:02}"),
                m,
                se,
                formula,
                params.threshold,
                "oracle:spine_decomposition",
            ))
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok((
        rows,
        json!({
            "skeletons": skeleton_count, "resamples": resamples,
            "lambda": lambda, "t": t,
        }),
    ))
}

// ---------------------------------------------------------------------------
// Suite: eigen (kernel quality on random models)
// ---------------------------------------------------------------------------

fn eigen_rows(
    params: &SuiteParams,
) -> Result<(Vec<ReportRow>, serde_json::Value), HarnessError> {
    use rand::Rng;
    let trials = 100usize;
    let mut rng = crate::stream::derive_rng(
        block_seed(params.seed, "eigen"),
        &[crate::stream::CTX_HARNESS],
    );
    let mut max_residual = 0.0f64;
    let mut max_semigroup = 0.0f64;
    let mut max_stochastic = 0.0f64;
    for _ in 0..trials {
        let n = rng.gen_range(2..=8);
        // Random valid generator plus positive diagonal loadings.
        let mut q = vec![vec![0.0; n]; n];
        for i in 0..n {
            let mut row_sum = 0.0;
            for j in 0..n {
                if i != j {
                    q[i][j] = rng.gen_range(0.01..1.0);
                    row_sum += q[i][j];
                }
            }
            q[i][i] = -row_sum;
        }
        let theta = rng.gen_range(0.2..2.0);
        let variance: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..3.0)).collect();
        let rates: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..2.0)).collect();
        let lambda = rng.gen_range(-1.5..1.5);
        let model = finite_type_model(&variance, &rates, theta, q.clone())?;
        let m = crate::eigen::build_matrix(&model, lambda)?;
        let (e, v) = principal_eigenpair(&m)?;
        max_residual = max_residual.max(residual_inf(&m, e, &v));

        // Semigroup property of the exponential on the same matrix.
        let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (s, t) = (rng.gen_range(0.1..1.0), rng.gen_range(0.1..1.0));
        let direct = expm_apply(&m, s + t, &g)?;
        let stepped = expm_apply(&m, s, &expm_apply(&m, t, &g)?)?;
        let scale = direct
            .iter()
            .chain(&stepped)
            .fold(1.0f64, |acc, x| acc.max(x.abs()));
        let dev = direct
            .iter()
            .zip(&stepped)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / scale;
        max_semigroup = max_semigroup.max(dev);

        // Pure generators preserve constants.
        let mut qm = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                qm.set(i, j, theta * q[i][j]);
            }
        }
        let ones = expm_apply(&qm, 1.5, &vec![1.0; n])?;
        let dev = ones.iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max);
        max_stochastic = max_stochastic.max(dev);
    }
    let rows = vec![
        ReportRow::exact_row(
            "eigen/max-residual",
            max_residual,
            1e-10,
            "exact:eigen residual",
        ),
        ReportRow::exact_row(
            "eigen/semigroup",
            max_semigroup,
            1e-8,
            "exact:expm semigroup",
        ),
        ReportRow::exact_row(
            "eigen/stochastic-rows",
            max_stochastic,
            1e-10,
            "exact:generator preserves constants",
        ),
    ];
    Ok((rows, json!({"trials": trials, "type_range": [2, 8]})))
}

// ---------------------------------------------------------------------------
// Suite: skeleton (exact combinatorial oracle)
// ---------------------------------------------------------------------------

fn skeleton_rows(
    _params: &SuiteParams,
) -> Result<(Vec<ReportRow>, serde_json::Value), HarnessError> {
    use num_traits::One;
    let mut rows = Vec::new();
    // Binary passage probabilities are exactly 2^{-d}.
    for d in 1..=4usize {
        let label = Label::from_word(&vec![1; d]).unwrap();
        let p = passage_probability(&Pmf::binary(), &label)?;
        let expect = num_rational::BigRational::new(
            num_bigint::BigInt::from(1),
            num_bigint::BigInt::from(1u64 << d),
        );
        let dev = if p == expect { 0.0 } else { 1.0 };
        rows.push(ReportRow::exact_row(
            format!("skeleton/binary-passage-d{d}"),
            dev,
            0.0,
            "exact:2^-d",
        ));
    }
    // Size-biased spine family law, exact.
    let oracle = enumerate_discrete_skeleton(&Pmf::zero_or_two(), 1)?;
    let sb = Pmf::zero_or_two().size_biased();
    let sb_match = oracle
        .spine_family_law
        .iter()
        .enumerate()
        .all(|(k, p)| rational_to_f64(p) == sb.probs()[k]);
    rows.push(ReportRow::exact_row(
        "skeleton/size-biased-law",
        if sb_match { 0.0 } else { 1.0 },
        0.0,
        "oracle:size_biased_pmf",
    ));
    // Weight totals and the pathwise identity, exact arithmetic.
    for (name, pmf, d) in [
        ("binary", Pmf::binary(), 4usize),
        ("p0p2", Pmf::zero_or_two(), 3usize),
    ] {
        let oracle = enumerate_discrete_skeleton(&pmf, d)?;
        rows.push(ReportRow::exact_row(
            format!("skeleton/weight-total-{name}"),
            if oracle.weight_total.is_one() { 0.0 } else { 1.0 },
            0.0,
            "exact:extension identity",
        ));
        rows.push(ReportRow::exact_row(
            format!("skeleton/pathwise-{name}"),
            if oracle.pathwise_weight_sum_one {
                0.0
            } else {
                1.0
            },
            0.0,
            "exact:extension identity pathwise",
        ));
    }
    Ok((rows, json!({"depths": {"binary": 4, "p0p2": 3}})))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_params() -> SuiteParams {
        SuiteParams {
            seed: 2024,
            threshold: 4.0,
            replicates_override: Some(1_000),
        }
    }

    #[test]
    fn unknown_suite_is_rejected() {
        assert!(matches!(
            run_suite("nope", &SuiteParams::default()),
            Err(HarnessError::UnknownSuite(_))
        ));
    }

    #[test]
    fn reports_are_deterministic() {
        let params = quick_params();
        let a = run_suite("extension", &params).unwrap();
        let b = run_suite("extension", &params).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.passed(), "{}", a.to_csv());
    }

    #[test]
    fn skeleton_suite_is_exact() {
        let report = run_suite("skeleton", &SuiteParams::default()).unwrap();
        assert!(report.passed(), "{}", report.to_csv());
        assert_eq!(report.rows.len(), 9);
    }

    #[test]
    fn eigen_suite_passes() {
        let report = run_suite("eigen", &SuiteParams::default()).unwrap();
        assert!(report.passed(), "{}", report.to_csv());
    }

    #[test]
    fn quick_martingale_smoke() {
        let report = run_suite("martingale", &quick_params()).unwrap();
        assert_eq!(report.rows.len(), 27);
        assert!(report.passed(), "{}", report.to_csv());
    }

    #[test]
    fn quick_gibbs_and_spine_smoke() {
        let report = run_suite("gibbs", &quick_params()).unwrap();
        assert!(report.passed(), "{}", report.to_csv());
        let report = run_suite("spine", &quick_params()).unwrap();
        assert!(report.passed(), "{}", report.to_csv());
    }
}
