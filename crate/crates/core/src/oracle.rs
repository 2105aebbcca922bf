//! Deterministic ground truths used to validate Monte Carlo output:
//! expectation ODEs, matrix-exponential values for type-indicator sums, and
//! exact small-depth enumerations of the discrete branching skeleton.
//!
//! The discrete skeleton oracle strips motion and time entirely — the
//! spine-choice and size-bias identities are purely combinatorial, so the
//! exact checks run in rational arithmetic with zero tolerance.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use crate::eigen::{expm_apply_checked, EigenError, SquareMatrix};
use crate::model::{ModelError, ModelSpec, MotionLaw, Pmf};
use crate::tree::Label;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("operation requires a finite-type model")]
    NotFiniteType,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("enumeration too large: {0} exceeds the guard of {1}")]
    EnumerationTooLarge(u128, u128),
    #[error("depth {0} exceeds the enumeration guard of {MAX_DEPTH}")]
    DepthTooLarge(usize),
    #[error("pmf entry is not a finite float")]
    NonRationalPmf,
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Enumeration guard on the depth.
pub const MAX_DEPTH: usize = 6;
/// Enumeration guard on the number of trees (or ancestor-line assignments).
pub const MAX_ENUMERATION: u128 = 2_000_000;

// ---------------------------------------------------------------------------
// Analytic expectations
// ---------------------------------------------------------------------------

/// Expected population size under constant rate and constant offspring mean:
/// the solution `e^{m r t}` of `du/dt = m r u`, `u(0) = 1`.
pub fn expected_population(r: f64, m: f64, t: f64) -> f64 {
    (m * r * t).exp()
}

/// Expected sum of a type function over the alive population of a
/// finite-type model: the semigroup value `(e^{t(theta Q + diag(m r))} g)(y0)`.
pub fn many_to_one_type_oracle(
    model: &ModelSpec,
    g: &[f64],
    y0: usize,
    t: f64,
) -> Result<f64, OracleError> {
    Ok(many_to_one_type_oracle_checked(model, g, y0, t)?.0)
}

/// Like [`many_to_one_type_oracle`] but also reports the halved-step
/// self-check deviation of the underlying matrix exponential.
pub fn many_to_one_type_oracle_checked(
    model: &ModelSpec,
    g: &[f64],
    y0: usize,
    t: f64,
) -> Result<(f64, f64), OracleError> {
    let MotionLaw::FiniteType { theta, q, .. } = &model.motion else {
        return Err(OracleError::NotFiniteType);
    };
    let n = q.len();
    if g.len() != n || y0 >= n {
        return Err(OracleError::Dimension(format!(
            "g length {} / start type {y0} for {n} types",
            g.len()
        )));
    }
    let rates = model.rate_by_type()?;
    let means = model.mean_by_type()?;
    let mut m = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            m.set(i, j, theta * q[i][j]);
        }
        m.set(i, i, m.get(i, i) + means[i] * rates[i]);
    }
    let (out, dev) = expm_apply_checked(&m, t, g)?;
    Ok((out[y0], dev))
}

// ---------------------------------------------------------------------------
// Exact discrete skeleton
// ---------------------------------------------------------------------------

fn rational_pmf(pmf: &Pmf) -> Result<Vec<BigRational>, OracleError> {
    pmf.probs()
        .iter()
        .map(|&p| BigRational::from_float(p).ok_or(OracleError::NonRationalPmf))
        .collect()
}

fn big(n: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// Exact results of enumerating every offspring-count assignment over the
/// first `depth` generations.
#[derive(Clone, Debug)]
pub struct SkeletonOracle {
    pub depth: usize,
    /// Number of distinct trees enumerated.
    pub tree_count: u64,
    /// `E[sum over generation-depth nodes of prod 1/(1+A_v)]`, exact.
    pub weight_total: BigRational,
    /// Whether the ancestral weight sum equals one for *every* enumerated
    /// tree (the pathwise extension identity).
    pub pathwise_weight_sum_one: bool,
    /// Exact law of the generation size at each depth `0..=depth`.
    pub generation_size_law: Vec<BTreeMap<u64, BigRational>>,
    /// Exact law of the spine node's offspring count under the spine-changed
    /// weighting: enumerating family size and spine choice with the
    /// change-of-measure factors yields the size-biased law.
    pub spine_family_law: Vec<BigRational>,
}

impl SkeletonOracle {
    /// Expected generation size at a depth, exact.
    pub fn expected_generation_size(&self, depth: usize) -> BigRational {
        self.generation_size_law[depth]
            .iter()
            .map(|(&z, p)| big(z) * p)
            .fold(BigRational::zero(), |acc, x| acc + x)
    }
}

/// Conservative bound on the number of distinct trees of a given depth.
fn tree_count_bound(support: &[usize], depth: usize) -> u128 {
    let mut count: u128 = 1;
    for _ in 0..depth {
        let mut next: u128 = 0;
        for &a in support {
            let children = (a + 1) as u32;
            next = next.saturating_add(count.saturating_pow(children));
            if next > MAX_ENUMERATION {
                return next;
            }
        }
        count = next;
    }
    count
}

/// Brute-force enumeration of the discrete branching skeleton to a small
/// depth, in exact rational arithmetic.
pub fn enumerate_discrete_skeleton(
    pmf: &Pmf,
    depth: usize,
) -> Result<SkeletonOracle, OracleError> {
    if depth > MAX_DEPTH {
        return Err(OracleError::DepthTooLarge(depth));
    }
    let probs = rational_pmf(pmf)?;
    let support: Vec<usize> = probs
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.is_zero())
        .map(|(a, _)| a)
        .collect();
    let bound = tree_count_bound(&support, depth);
    if bound > MAX_ENUMERATION {
        return Err(OracleError::EnumerationTooLarge(bound, MAX_ENUMERATION));
    }

    // One enumerated tree shape, summarized by the statistics the oracle
    // needs: its probability, its per-generation sizes, and the ancestral
    // weight sum over its deepest generation.
    #[derive(Clone)]
    struct Shape {
        prob: BigRational,
        gen_sizes: Vec<u64>,
        weight_sum: BigRational,
    }

    // Trees of depth k are a root family size `a` plus `1 + a` independent
    // trees of depth k - 1; enumerate by depth.
    let mut shapes: Vec<Shape> = vec![Shape {
        prob: BigRational::one(),
        gen_sizes: vec![1],
        weight_sum: BigRational::one(),
    }];
    for level in 1..=depth {
        let mut next: Vec<Shape> = Vec::new();
        for &a in &support {
            let kids = a + 1;
            let inv = BigRational::one() / big(kids as u64);
            // All ordered combinations of `kids` subtrees of depth level-1.
            let mut fresh_sizes = vec![0u64; level + 1];
            fresh_sizes[0] = 1;
            let mut stack: Vec<(usize, Shape)> = vec![(
                0,
                Shape {
                    prob: probs[a].clone(),
                    gen_sizes: fresh_sizes,
                    weight_sum: BigRational::zero(),
                },
            )];
            while let Some((filled, acc)) = stack.pop() {
                if filled == kids {
                    next.push(acc);
                    continue;
                }
                for sub in &shapes {
                    let mut merged = acc.clone();
                    merged.prob *= &sub.prob;
                    // Subtree generation g sits at tree generation g + 1.
                    for (g, &sz) in sub.gen_sizes.iter().enumerate() {
                        merged.gen_sizes[g + 1] += sz;
                    }
                    merged.weight_sum += &inv * &sub.weight_sum;
                    stack.push((filled + 1, merged));
                }
            }
        }
        shapes = next;
    }

    let mut weight_total = BigRational::zero();
    let mut pathwise = true;
    let mut gen_laws: Vec<BTreeMap<u64, BigRational>> = vec![BTreeMap::new(); depth + 1];
    for shape in &shapes {
        weight_total += &shape.prob * &shape.weight_sum;
        if shape.weight_sum != BigRational::one() {
            pathwise = false;
        }
        for (g, &sz) in shape.gen_sizes.iter().enumerate() {
            let entry = gen_laws[g].entry(sz).or_insert_with(BigRational::zero);
            *entry += &shape.prob;
        }
    }

    // Spine family law under the changed weighting: enumerate the family
    // size and the uniform spine choice with the offspring reweighting
    // factor (1+A)/(1+m) attached.
    let mean: BigRational = probs
        .iter()
        .enumerate()
        .map(|(a, p)| big(a as u64) * p)
        .fold(BigRational::zero(), |acc, x| acc + x);
    let norm = BigRational::one() + mean;
    let mut spine_family_law = vec![BigRational::zero(); probs.len()];
    for &a in &support {
        let kids = big((a + 1) as u64);
        for _choice in 0..=a {
            // choose this child to continue the spine: probability 1/(1+a),
            // reweighted by (1+a)/(1+m).
            spine_family_law[a] += &probs[a] * (BigRational::one() / &kids) * (&kids / &norm);
        }
    }

    Ok(SkeletonOracle {
        depth,
        tree_count: shapes.len() as u64,
        weight_total,
        pathwise_weight_sum_one: pathwise,
        generation_size_law: gen_laws,
        spine_family_law,
    })
}

/// Exact probability that the uniformly chosen spine passes through a fixed
/// label, enumerating the offspring assignments along its ancestor line:
/// `prod_k E[1(child k exists) / (1+A)]`, evaluated by brute force.
pub fn passage_probability(pmf: &Pmf, label: &Label) -> Result<BigRational, OracleError> {
    let probs = rational_pmf(pmf)?;
    let support: Vec<usize> = probs
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.is_zero())
        .map(|(a, _)| a)
        .collect();
    let depth = label.depth();
    let assignments = (support.len() as u128).saturating_pow(depth as u32);
    if assignments > MAX_ENUMERATION {
        return Err(OracleError::EnumerationTooLarge(
            assignments,
            MAX_ENUMERATION,
        ));
    }
    // Enumerate assignments (a_0, ..., a_{depth-1}) along the line.
    let word = label.word();
    let mut total = BigRational::zero();
    let mut idx = vec![0usize; depth];
    loop {
        let mut term = BigRational::one();
        let mut allowed = true;
        for (k, &i) in idx.iter().enumerate() {
            let a = support[i];
            if word[k] as usize > a + 1 {
                allowed = false;
                break;
            }
            term *= &probs[a] * (BigRational::one() / big((a + 1) as u64));
        }
        if allowed {
            total += term;
        }
        // Odometer increment over the assignment vector.
        let mut pos = 0;
        loop {
            if pos == depth {
                return Ok(total);
            }
            idx[pos] += 1;
            if idx[pos] < support.len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Convenience: a rational as f64 for report rows.
pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{bbm_model, finite_type_model};

    #[test]
    fn expected_population_values() {
        assert_eq!(expected_population(1.0, 1.0, 0.0), 1.0);
        assert!((expected_population(1.0, 1.0, 1.0) - 1.0f64.exp()).abs() <= 1e-12);
        assert!((expected_population(1.0, 2.0, 1.0) - 2.0f64.exp()).abs() <= 1e-12);
    }

    #[test]
    fn many_to_one_oracle_consistency() {
        // g = 1, constant rate, binary offspring: matches the population ODE.
        let model = finite_type_model(
            &[1.0, 1.0],
            &[0.8, 0.8],
            1.0,
            vec![vec![-1.0, 1.0], vec![1.0, -1.0]],
        )
        .unwrap();
        for t in [0.0, 0.5, 1.0, 2.0] {
            let v = many_to_one_type_oracle(&model, &[1.0, 1.0], 0, t).unwrap();
            let ode = expected_population(0.8, 1.0, t);
            assert!((v - ode).abs() <= 1e-10 * ode, "t={t}: {v} vs {ode}");
        }
        // t = 0 returns g(y0).
        let v = many_to_one_type_oracle(&model, &[3.0, -1.0], 1, 0.0).unwrap();
        assert_eq!(v, -1.0);
        // Requires a finite-type model.
        let bbm = bbm_model(1.0, Pmf::binary()).unwrap();
        assert!(matches!(
            many_to_one_type_oracle(&bbm, &[1.0], 0, 1.0),
            Err(OracleError::NotFiniteType)
        ));
    }

    #[test]
    fn skeleton_binary_passage_is_two_pow_minus_d() {
        for d in 1..=4usize {
            let label = Label::from_word(&vec![1; d]).unwrap();
            let p = passage_probability(&Pmf::binary(), &label).unwrap();
            let expect = BigRational::new(BigInt::from(1), BigInt::from(1u64 << d));
            assert_eq!(p, expect, "depth {d}");
        }
        // A label with child index 2 under binary branching also passes.
        let label = Label::from_word(&[2, 1]).unwrap();
        let p = passage_probability(&Pmf::binary(), &label).unwrap();
        assert_eq!(p, BigRational::new(BigInt::from(1), BigInt::from(4)));
        // Child index 3 never exists under binary branching.
        let label = Label::from_word(&[3]).unwrap();
        assert!(passage_probability(&Pmf::binary(), &label)
            .unwrap()
            .is_zero());
    }

    #[test]
    fn skeleton_weight_total_is_exactly_one() {
        for (pmf, d) in [
            (Pmf::binary(), 4usize),
            (Pmf::zero_or_two(), 3usize),
            (Pmf::new(vec![0.25, 0.5, 0.25]).unwrap(), 2usize),
        ] {
            let oracle = enumerate_discrete_skeleton(&pmf, d).unwrap();
            assert!(oracle.weight_total.is_one(), "E-total at depth {d}");
            assert!(oracle.pathwise_weight_sum_one, "pathwise at depth {d}");
        }
    }

    #[test]
    fn skeleton_spine_family_law_is_size_biased() {
        let pmf = Pmf::zero_or_two();
        let oracle = enumerate_discrete_skeleton(&pmf, 1).unwrap();
        let quarter = BigRational::new(BigInt::from(1), BigInt::from(4));
        let three_quarters = BigRational::new(BigInt::from(3), BigInt::from(4));
        assert_eq!(oracle.spine_family_law[0], quarter);
        assert!(oracle.spine_family_law[1].is_zero());
        assert_eq!(oracle.spine_family_law[2], three_quarters);
        // And it matches the float size-biased law exactly on dyadics.
        let sb = pmf.size_biased();
        for (k, p) in oracle.spine_family_law.iter().enumerate() {
            assert_eq!(rational_to_f64(p), sb.probs()[k]);
        }
    }

    #[test]
    fn skeleton_generation_sizes() {
        // Binary: generation size is exactly 2^d.
        let oracle = enumerate_discrete_skeleton(&Pmf::binary(), 3).unwrap();
        assert_eq!(oracle.tree_count, 1);
        for d in 0..=3usize {
            let law = &oracle.generation_size_law[d];
            assert_eq!(law.len(), 1);
            assert!(law[&(1u64 << d)].is_one());
        }
        // Mean generation size is (1+m)^d.
        let oracle = enumerate_discrete_skeleton(&Pmf::zero_or_two(), 3).unwrap();
        assert_eq!(oracle.tree_count, 1010);
        for d in 0..=3usize {
            let mean = oracle.expected_generation_size(d);
            assert_eq!(mean, big(1u64 << d), "depth {d}");
        }
    }

    #[test]
    fn skeleton_guards() {
        assert!(matches!(
            enumerate_discrete_skeleton(&Pmf::binary(), 7),
            Err(OracleError::DepthTooLarge(7))
        ));
        assert!(matches!(
            enumerate_discrete_skeleton(&Pmf::zero_or_two(), 5),
            Err(OracleError::EnumerationTooLarge(_, _))
        ));
    }
}
