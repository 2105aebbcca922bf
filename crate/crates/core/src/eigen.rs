//! Numerical kernels for the finite-type model: the principal eigenpair of
//! the tilted type matrix and a small dense matrix exponential.
//!
//! Only the Perron root of tiny matrices (a handful of types) is ever needed,
//! so the solver is a shifted power iteration with an inverse-iteration
//! polish rather than a general eigensolver. Iteration order and the starting
//! vector are fixed for bit-reproducibility.

use thiserror::Error;

use crate::model::{ModelSpec, MotionLaw};

#[derive(Debug, Error)]
pub enum EigenError {
    #[error("matrix must be square and nonempty")]
    NotSquare,
    #[error("eigensolver failed to converge within {0} iterations")]
    NoConvergence(usize),
    #[error("principal eigenvector not strictly positive; matrix may be reducible")]
    NotPositive,
    #[error("matrix exponential overflowed")]
    Overflow,
    #[error("matrix exponential self-check failed: relative deviation {0}")]
    SelfCheck(f64),
    #[error("operation requires a finite-type model")]
    NotFiniteType,
    #[error("dimension mismatch")]
    Dimension,
}

/// Relative tolerance of the eigensolver.
pub const EIGEN_REL_TOL: f64 = 1e-12;
/// Iteration cap of the power stage.
pub const EIGEN_MAX_ITERS: usize = 100_000;

// ---------------------------------------------------------------------------
// Small dense matrices
// ---------------------------------------------------------------------------

/// Row-major dense square matrix. Sized for type spaces, not data sets.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, EigenError> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(EigenError::NotSquare);
        }
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| self.data[i * self.n..(i + 1) * self.n].to_vec())
            .collect()
    }

    pub fn transpose(&self) -> SquareMatrix {
        let mut out = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn scaled(&self, c: f64) -> SquareMatrix {
        SquareMatrix {
            n: self.n,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| {
                let row = &self.data[i * self.n..(i + 1) * self.n];
                row.iter().zip(v).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    pub fn matmul(&self, other: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    /// Max absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                self.data[i * self.n..(i + 1) * self.n]
                    .iter()
                    .map(|v| v.abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Solves `self * x = b` by Gaussian elimination with partial pivoting.
    fn solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        let n = self.n;
        let mut a = self.data.clone();
        let mut x = b.to_vec();
        for col in 0..n {
            let (piv_row, piv_val) = (col..n)
                .map(|r| (r, a[r * n + col].abs()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if piv_val == 0.0 || !piv_val.is_finite() {
                return None;
            }
            if piv_row != col {
                for j in 0..n {
                    a.swap(col * n + j, piv_row * n + j);
                }
                x.swap(col, piv_row);
            }
            let pivot = a[col * n + col];
            for r in col + 1..n {
                let f = a[r * n + col] / pivot;
                if f == 0.0 {
                    continue;
                }
                for j in col..n {
                    a[r * n + j] -= f * a[col * n + j];
                }
                x[r] -= f * x[col];
            }
        }
        for col in (0..n).rev() {
            let mut s = x[col];
            for j in col + 1..n {
                s -= a[col * n + j] * x[j];
            }
            x[col] = s / a[col * n + col];
            if !x[col].is_finite() {
                return None;
            }
        }
        Some(x)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

// ---------------------------------------------------------------------------
// Principal eigenpair
// ---------------------------------------------------------------------------

/// The eigenvalue of maximal real part with its strictly positive
/// eigenvector, for a matrix with nonnegative off-diagonals and an
/// irreducible pattern. Shifted power iteration (shift = max diagonal
/// magnitude + 1) followed by an inverse-iteration polish; the eigenvector is
/// normalized so its largest entry is 1.
pub fn principal_eigenpair(m: &SquareMatrix) -> Result<(f64, Vec<f64>), EigenError> {
    let n = m.n();
    if n == 0 {
        return Err(EigenError::NotSquare);
    }
    if n == 1 {
        return Ok((m.get(0, 0), vec![1.0]));
    }
    let shift = (0..n).map(|i| m.get(i, i).abs()).fold(0.0, f64::max) + 1.0;
    let mut b = m.clone();
    for i in 0..n {
        b.set(i, i, b.get(i, i) + shift);
    }

    let mut v = vec![1.0; n];
    let mut mu = 0.0;
    let mut converged = false;
    for _ in 0..EIGEN_MAX_ITERS {
        let w = b.matvec(&v);
        let scale = max_abs(&w);
        if scale == 0.0 || !scale.is_finite() {
            return Err(EigenError::NotPositive);
        }
        let w: Vec<f64> = w.iter().map(|x| x / scale).collect();
        let diff = v
            .iter()
            .zip(&w)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let mu_new = scale;
        let settled = diff <= EIGEN_REL_TOL && (mu_new - mu).abs() <= EIGEN_REL_TOL * mu_new.abs();
        v = w;
        mu = mu_new;
        if settled {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(EigenError::NoConvergence(EIGEN_MAX_ITERS));
    }

    // Inverse-iteration polish: a couple of solves against the shifted
    // matrix pinned near the converged eigenvalue sharpen the vector well
    // past the gap-limited power rate.
    let scale_ref = m.inf_norm().max(1.0);
    for _ in 0..4 {
        let rayleigh = rayleigh_quotient(m, &v);
        if residual_inf(m, rayleigh, &v) <= 1e-14 * scale_ref {
            break;
        }
        let mut shifted = m.clone();
        let eps = 1e-12 * scale_ref;
        for i in 0..n {
            shifted.set(i, i, shifted.get(i, i) - (rayleigh + eps));
        }
        match shifted.solve(&v) {
            Some(w) => {
                let s = max_abs(&w);
                if s == 0.0 || !s.is_finite() {
                    break;
                }
                // Keep the Perron orientation.
                let sign = if w.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
                v = w.iter().map(|x| sign * x / s).collect();
            }
            None => break,
        }
    }

    let eig = rayleigh_quotient(m, &v);
    // Normalize: largest entry exactly 1.
    let vmax = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if vmax <= 0.0 {
        return Err(EigenError::NotPositive);
    }
    let v: Vec<f64> = v.iter().map(|x| x / vmax).collect();
    if !v.iter().all(|&x| x > 0.0) {
        return Err(EigenError::NotPositive);
    }
    Ok((eig, v))
}

fn rayleigh_quotient(m: &SquareMatrix, v: &[f64]) -> f64 {
    let mv = m.matvec(v);
    let num: f64 = v.iter().zip(&mv).map(|(a, b)| a * b).sum();
    let den: f64 = v.iter().map(|a| a * a).sum();
    num / den
}

/// `‖Mv − Ev‖_∞`, the quantity bounded by the module tolerance.
pub fn residual_inf(m: &SquareMatrix, eig: f64, v: &[f64]) -> f64 {
    let mv = m.matvec(v);
    mv.iter()
        .zip(v)
        .map(|(a, b)| (a - eig * b).abs())
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Matrix exponential
// ---------------------------------------------------------------------------

/// `e^{tM} g` by scaling-and-squaring with a truncated Taylor series.
///
/// The result is recomputed with one extra halving step and the two answers
/// must agree to relative `1e-10`, otherwise the call fails; the finer answer
/// is returned.
pub fn expm_apply(m: &SquareMatrix, t: f64, g: &[f64]) -> Result<Vec<f64>, EigenError> {
    let (out, _dev) = expm_apply_checked(m, t, g)?;
    Ok(out)
}

/// Like [`expm_apply`] but also reports the measured relative deviation of
/// the halved-step self-check.
pub fn expm_apply_checked(
    m: &SquareMatrix,
    t: f64,
    g: &[f64],
) -> Result<(Vec<f64>, f64), EigenError> {
    if g.len() != m.n() {
        return Err(EigenError::Dimension);
    }
    if t < 0.0 || !t.is_finite() {
        return Err(EigenError::Overflow);
    }
    if t == 0.0 {
        return Ok((g.to_vec(), 0.0));
    }
    let a = m.scaled(t);
    let s = squarings_for(&a);
    let coarse = expm_matrix(&a, s)?.matvec(g);
    let fine = expm_matrix(&a, s + 1)?.matvec(g);
    let scale = max_abs(&fine).max(max_abs(&coarse));
    let dev = if scale == 0.0 {
        0.0
    } else {
        coarse
            .iter()
            .zip(&fine)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / scale
    };
    if !dev.is_finite() || dev > 1e-10 {
        return Err(EigenError::SelfCheck(dev));
    }
    Ok((fine, dev))
}

fn squarings_for(a: &SquareMatrix) -> u32 {
    let norm = a.inf_norm();
    if norm <= 0.25 {
        0
    } else {
        (norm / 0.25).log2().ceil() as u32
    }
}

fn expm_matrix(a: &SquareMatrix, s: u32) -> Result<SquareMatrix, EigenError> {
    if s > 200 {
        return Err(EigenError::Overflow);
    }
    let b = a.scaled(0.5_f64.powi(s as i32));
    let n = b.n();
    let mut acc = SquareMatrix::identity(n);
    let mut term = SquareMatrix::identity(n);
    for k in 1..=40u32 {
        term = term.matmul(&b).scaled(1.0 / k as f64);
        for i in 0..n * n {
            acc.data[i] += term.data[i];
        }
        if term.inf_norm() <= 1e-20 * acc.inf_norm() {
            break;
        }
    }
    let mut out = acc;
    for _ in 0..s {
        out = out.matmul(&out);
        if !out.inf_norm().is_finite() {
            return Err(EigenError::Overflow);
        }
    }
    if !out.inf_norm().is_finite() {
        return Err(EigenError::Overflow);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Martingale specifications
// ---------------------------------------------------------------------------

/// The single-particle martingale functional: a spatial tilt `lambda` plus
/// the form of the path functional it induces.
#[derive(Clone, Debug, PartialEq)]
pub struct MartingaleSpec {
    pub lambda: f64,
    pub form: ZetaForm,
}

/// Which functional the martingale evaluates along a path.
#[derive(Clone, Debug, PartialEq)]
pub enum ZetaForm {
    /// `exp(lambda x_t - lambda^2 t / 2)`: the exponential Brownian
    /// martingale for unit-variance motion.
    Bbm,
    /// `exp(int_0^t R) v(y_t) exp(lambda x_t - E t)` with `(E, v)` the
    /// principal eigenpair of the tilted type matrix; `v` is normalized so
    /// its largest entry is 1.
    FiniteType { v: Vec<f64>, eigenvalue: f64 },
}

impl MartingaleSpec {
    pub fn bbm(lambda: f64) -> Self {
        MartingaleSpec {
            lambda,
            form: ZetaForm::Bbm,
        }
    }

    /// Solves the eigenproblem of the tilted type matrix for a finite-type
    /// model and packages the result.
    pub fn for_finite_type(model: &ModelSpec, lambda: f64) -> Result<Self, EigenError> {
        let m = build_matrix(model, lambda)?;
        let (eigenvalue, v) = principal_eigenpair(&m)?;
        Ok(MartingaleSpec {
            lambda,
            form: ZetaForm::FiniteType { v, eigenvalue },
        })
    }

    pub fn n_types(&self) -> Option<usize> {
        match &self.form {
            ZetaForm::Bbm => None,
            ZetaForm::FiniteType { v, .. } => Some(v.len()),
        }
    }
}

/// The tilted type matrix `lambda^2/2 * diag(a) + theta Q + diag(r)` whose
/// principal eigenpair defines the finite-type martingale.
pub fn build_matrix(model: &ModelSpec, lambda: f64) -> Result<SquareMatrix, EigenError> {
    let MotionLaw::FiniteType {
        variance, theta, q, ..
    } = &model.motion
    else {
        return Err(EigenError::NotFiniteType);
    };
    let n = variance.len();
    let mut m = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            m.set(i, j, theta * q[i][j]);
        }
        let r_i = model.rate.at(crate::tree::Point { x: 0.0, ty: i });
        m.set(
            i,
            i,
            m.get(i, i) + 0.5 * lambda * lambda * variance[i] + r_i,
        );
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model;
    use crate::model::Pmf;

    fn sym2() -> SquareMatrix {
        SquareMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    /// Brute-force eigenvalues of a 2x2 via the characteristic polynomial.
    fn eig2_max(m: &SquareMatrix) -> f64 {
        let (a, b, c, d) = (m.get(0, 0), m.get(0, 1), m.get(1, 0), m.get(1, 1));
        let tr = a + d;
        let disc = ((a - d) * (a - d) + 4.0 * b * c).sqrt();
        (tr + disc) / 2.0
    }

    #[test]
    fn build_matrix_hand_values() {
        let model = model::finite_type_model(
            &[1.0, 1.0],
            &[1.0, 1.0],
            1.0,
            vec![vec![-1.0, 1.0], vec![1.0, -1.0]],
        )
        .unwrap();
        // lambda = 0, constant r: theta Q + r I.
        let m = build_matrix(&model, 0.0).unwrap();
        assert_eq!(m, sym2());
        // Scalar case.
        let m1 = model::finite_type_model(&[2.0], &[3.0], 1.0, vec![vec![0.0]]).unwrap();
        let m = build_matrix(&m1, 1.0).unwrap();
        assert_eq!(m.get(0, 0), 0.5 * 2.0 + 3.0);
        // BBM model is rejected.
        let bbm = model::bbm_model(1.0, Pmf::binary()).unwrap();
        assert!(matches!(
            build_matrix(&bbm, 0.0),
            Err(EigenError::NotFiniteType)
        ));
    }

    #[test]
    fn principal_eigenpair_constant_rate() {
        // theta Q + r I annihilates constants up to r: (r, ones).
        let q = vec![vec![-2.0, 1.5, 0.5], vec![1.0, -1.0, 0.0], vec![0.25, 0.25, -0.5]];
        let r = 0.7;
        let mut m = SquareMatrix::from_rows(&q).unwrap();
        for i in 0..3 {
            m.set(i, i, m.get(i, i) + r);
        }
        let (e, v) = principal_eigenpair(&m).unwrap();
        assert!((e - r).abs() <= 1e-10);
        for x in v {
            assert!((x - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn principal_eigenpair_scalar_and_sym2() {
        let m = SquareMatrix::from_rows(&[vec![-3.25]]).unwrap();
        assert_eq!(principal_eigenpair(&m).unwrap(), (-3.25, vec![1.0]));

        let m = sym2();
        let (e, v) = principal_eigenpair(&m).unwrap();
        assert!((e - 1.0).abs() <= 1e-12);
        assert!((e - eig2_max(&m)).abs() <= 1e-12);
        assert!((v[0] - 1.0).abs() <= 1e-12 && (v[1] - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn principal_eigenpair_residual_random_matrices() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for trial in 0..100 {
            let n = rng.gen_range(2..=8);
            let mut m = SquareMatrix::zeros(n);
            for i in 0..n {
                let mut row_sum = 0.0;
                for j in 0..n {
                    if i != j {
                        let v = rng.gen_range(0.01..1.0);
                        m.set(i, j, v);
                        row_sum += v;
                    }
                }
                m.set(i, i, -row_sum + rng.gen_range(-1.0..2.0));
            }
            let (e, v) = principal_eigenpair(&m).unwrap();
            let res = residual_inf(&m, e, &v);
            assert!(
                res <= 1e-10 * m.inf_norm().max(1.0),
                "trial {trial}: residual {res}"
            );
            assert!(v.iter().all(|&x| x > 0.0 && x <= 1.0));
        }
    }

    #[test]
    fn expm_apply_basics() {
        let m = sym2();
        // t = 0 is the identity.
        assert_eq!(expm_apply(&m, 0.0, &[1.5, -2.0]).unwrap(), vec![1.5, -2.0]);
        // Diagonal matrices exponentiate entrywise.
        let d = SquareMatrix::from_rows(&[vec![0.5, 0.0], vec![0.0, -1.0]]).unwrap();
        let out = expm_apply(&d, 2.0, &[1.0, 3.0]).unwrap();
        assert!((out[0] - 1.0_f64.exp()).abs() <= 1e-12 * 1.0_f64.exp());
        assert!((out[1] - 3.0 * (-2.0_f64).exp()).abs() <= 1e-12);
    }

    #[test]
    fn expm_apply_eigenvector_consistency() {
        // e^{tM} v = e^{Et} v cross-checks the two kernels.
        let m = SquareMatrix::from_rows(&[vec![-1.0, 0.5], vec![2.0, -0.25]]).unwrap();
        let (e, v) = principal_eigenpair(&m).unwrap();
        let t = 1.75;
        let out = expm_apply(&m, t, &v).unwrap();
        let scale = (e * t).exp();
        for (o, vi) in out.iter().zip(&v) {
            assert!((o - scale * vi).abs() <= 1e-9 * scale.max(1.0));
        }
    }

    #[test]
    fn expm_semigroup_and_generator_rows() {
        let q = SquareMatrix::from_rows(&[
            vec![-1.0, 0.75, 0.25],
            vec![0.5, -0.5, 0.0],
            vec![0.3, 0.2, -0.5],
        ])
        .unwrap();
        let g = vec![0.2, -1.0, 3.0];
        let (s, t) = (0.6, 1.3);
        let both = expm_apply(&q, s + t, &g).unwrap();
        let stepped = expm_apply(&q, s, &expm_apply(&q, t, &g).unwrap()).unwrap();
        for (a, b) in both.iter().zip(&stepped) {
            assert!((a - b).abs() <= 1e-8);
        }
        // Zero row sums preserve constants.
        let ones = expm_apply(&q, 2.0, &[1.0, 1.0, 1.0]).unwrap();
        for x in ones {
            assert!((x - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn expm_overflow_guard() {
        let d = SquareMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            expm_apply(&d, 1.0e6, &[1.0, 1.0]),
            Err(EigenError::Overflow | EigenError::SelfCheck(_))
        ));
    }
}
