//! Matrix-free linear operators around a flow state.
//!
//! The assignment map's Jacobian factors into a block-diagonal probability
//! operator and a path-cost Jacobian; both are applied without forming
//! matrices, so Newton steps and spectral estimates scale with the number
//! of nonzeros in the incidence matrix rather than its square. Dense
//! realizations exist for small systems and for cross-checking the
//! matrix-free kernels.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{Assignment, FlowState};
use crate::error::{Error, Result};
use crate::krylov::{dot, norm2};
use crate::pathset::IncidenceMatrix;

/// Largest system realized as a dense matrix by default.
pub const DENSE_LIMIT: usize = 20_000;

/// Block-diagonal derivative of demand-scaled choice probabilities with
/// respect to path costs, negated and unscaled by the dispersion sign: per
/// OD block `d * theta * (diag(p) - p p^T)`. Symmetric, positive
/// semidefinite, and each block annihilates constants.
#[derive(Debug, Clone)]
pub struct ProbOperator {
    theta: f64,
    od_offsets: Vec<usize>,
    demands: Vec<f64>,
    p: Vec<f64>,
}

impl ProbOperator {
    pub fn from_state(asg: &Assignment, state: &FlowState) -> Self {
        ProbOperator {
            theta: asg.theta(),
            od_offsets: asg.paths().od_offsets().to_vec(),
            demands: asg.od_demands().to_vec(),
            p: state.probabilities.clone(),
        }
    }

    pub fn n(&self) -> usize {
        self.p.len()
    }

    fn n_blocks(&self) -> usize {
        self.demands.len()
    }

    fn block(&self, r: usize) -> std::ops::Range<usize> {
        self.od_offsets[r]..self.od_offsets[r + 1]
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n());
        let mut out = vec![0.0; v.len()];
        for r in 0..self.n_blocks() {
            let range = self.block(r);
            let scale = self.demands[r] * self.theta;
            let mut pv = 0.0;
            for i in range.clone() {
                pv += self.p[i] * v[i];
            }
            for i in range {
                out[i] = scale * self.p[i] * (v[i] - pv);
            }
        }
        out
    }

    /// Derivative of the map through the block totals: entry `i` is its
    /// probability times the block sum of `v`. Vanishes on directions with
    /// zero block sums, which is what keeps the reduced Newton system exact
    /// on the feasible set.
    pub fn apply_choice(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n());
        let mut out = vec![0.0; v.len()];
        for r in 0..self.n_blocks() {
            let range = self.block(r);
            let sum: f64 = v[range.clone()].iter().sum();
            for i in range {
                out[i] = self.p[i] * sum;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        dense_from_apply(self.n(), |v| self.apply(v))
    }

    /// Symmetric square roots of the diagonal blocks, for the similarity
    /// transform that turns the product with the cost Jacobian symmetric.
    /// Eigenvalues driven slightly negative by roundoff are clamped to zero.
    pub fn sqrt_blocks(&self) -> Vec<DMatrix<f64>> {
        let mut blocks = Vec::with_capacity(self.n_blocks());
        for r in 0..self.n_blocks() {
            let range = self.block(r);
            let m = range.len();
            let scale = self.demands[r] * self.theta;
            let s = DMatrix::from_fn(m, m, |i, j| {
                let pi = self.p[range.start + i];
                let pj = self.p[range.start + j];
                let diag = if i == j { pi } else { 0.0 };
                scale * (diag - pi * pj)
            });
            let eig = SymmetricEigen::new(s);
            let mut root = DMatrix::zeros(m, m);
            for k in 0..m {
                let lam = eig.eigenvalues[k].max(0.0).sqrt();
                for i in 0..m {
                    for j in 0..m {
                        root[(i, j)] += eig.eigenvectors[(i, k)] * lam * eig.eigenvectors[(j, k)];
                    }
                }
            }
            blocks.push(root);
        }
        blocks
    }

    /// Apply the block square roots to a full-length vector.
    pub fn apply_sqrt(&self, blocks: &[DMatrix<f64>], v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n());
        let mut out = vec![0.0; v.len()];
        for (r, root) in blocks.iter().enumerate() {
            let range = self.block(r);
            for (i, gi) in range.clone().enumerate() {
                let mut acc = 0.0;
                for (j, gj) in range.clone().enumerate() {
                    acc += root[(i, j)] * v[gj];
                }
                out[gi] = acc;
            }
        }
        out
    }
}

/// Path-cost Jacobian `D^T diag(t') D` at a fixed link-flow vector.
/// Symmetric positive semidefinite whenever every link-cost derivative is
/// nonnegative.
pub struct CostJacobian<'a> {
    incidence: &'a IncidenceMatrix,
    tprime: Vec<f64>,
}

impl<'a> CostJacobian<'a> {
    pub fn from_state(asg: &'a Assignment, state: &FlowState) -> Self {
        CostJacobian {
            incidence: asg.incidence(),
            tprime: asg.network().link_cost_derivatives(&state.link_flows),
        }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut a = self.incidence.link_flows(v);
        for (x, tp) in a.iter_mut().zip(&self.tprime) {
            *x *= tp;
        }
        self.incidence.path_totals(&a)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        dense_from_apply(self.incidence.n_paths, |v| self.apply(v))
    }

    pub fn tprime(&self) -> &[f64] {
        &self.tprime
    }
}

/// The two factors of the map Jacobian on the feasible set. The Jacobian
/// restricted to zero-block-sum directions is `K = -S J`; Newton systems
/// apply `I - K`.
pub struct ReducedSystem<'a> {
    pub s: ProbOperator,
    pub j: CostJacobian<'a>,
}

impl<'a> ReducedSystem<'a> {
    pub fn new(asg: &'a Assignment, state: &FlowState) -> Self {
        ReducedSystem {
            s: ProbOperator::from_state(asg, state),
            j: CostJacobian::from_state(asg, state),
        }
    }

    pub fn n(&self) -> usize {
        self.s.n()
    }

    pub fn apply_k(&self, v: &[f64]) -> Vec<f64> {
        let jv = self.j.apply(v);
        let mut sjv = self.s.apply(&jv);
        for x in sjv.iter_mut() {
            *x = -*x;
        }
        sjv
    }

    pub fn apply_i_minus_k(&self, v: &[f64]) -> Vec<f64> {
        let jv = self.j.apply(v);
        let sjv = self.s.apply(&jv);
        v.iter().zip(&sjv).map(|(vi, si)| vi + si).collect()
    }

    pub fn dense_k(&self, limit: usize) -> Result<DMatrix<f64>> {
        let n = self.n();
        if n > limit {
            return Err(Error::TooLargeForDense { n, limit });
        }
        Ok(dense_from_apply(n, |v| self.apply_k(v)))
    }
}

pub fn dense_from_apply<F>(n: usize, apply: F) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = apply(&e);
        for i in 0..n {
            m[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    m
}

/// Largest eigenvalue of a symmetric operator by Lanczos iteration with
/// full reorthogonalization. Deterministic for a fixed seed. Converges when
/// two consecutive estimates agree to `tol` relative, or the Krylov space
/// becomes invariant.
pub fn lanczos_lambda_max<F>(
    n: usize,
    apply: F,
    max_steps: usize,
    tol: f64,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if n == 0 {
        return Err(Error::Invalid("operator dimension is zero".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let nv = norm2(&v);
    if nv == 0.0 {
        v[0] = 1.0;
    } else {
        v.iter_mut().for_each(|x| *x /= nv);
    }

    let cap = max_steps.min(n);
    let mut basis: Vec<Vec<f64>> = vec![v];
    let mut alphas: Vec<f64> = Vec::with_capacity(cap);
    let mut betas: Vec<f64> = Vec::with_capacity(cap);
    let mut prev = f64::NEG_INFINITY;
    for k in 0..cap {
        let mut w = apply(&basis[k]);
        alphas.push(dot(&w, &basis[k]));
        // Two Gram-Schmidt passes against the whole basis keep the basis
        // orthogonal to working precision; the three-term recurrence alone
        // loses copies of converged eigenvectors.
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&w, b);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
        }
        let beta = norm2(&w);
        let scale = alphas.iter().fold(1.0f64, |m, a| m.max(a.abs()));
        if beta <= 1e-14 * scale {
            break;
        }
        let done = k + 1 == cap;
        if (k + 1) % 5 == 0 || done {
            let lam = tridiag_lambda_max(&alphas, &betas);
            if (lam - prev).abs() <= tol * lam.abs().max(1.0) {
                return Ok(lam);
            }
            prev = lam;
        }
        if !done {
            betas.push(beta);
            w.iter_mut().for_each(|x| *x /= beta);
            basis.push(w);
        }
    }
    Ok(tridiag_lambda_max(&alphas, &betas))
}

fn tridiag_lambda_max(alphas: &[f64], betas: &[f64]) -> f64 {
    let k = alphas.len();
    assert!(k > 0);
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    SymmetricEigen::new(t)
        .eigenvalues
        .iter()
        .fold(f64::NEG_INFINITY, |m, &x| m.max(x))
}

/// Most negative eigenvalue of `K` at a state, through the symmetric
/// similarity `S^(1/2) J S^(1/2)`, whose spectrum matches the nonzero
/// spectrum of `-K`. Never forms a dense system, so it runs at any size.
pub fn lambda_min_symmetric(asg: &Assignment, state: &FlowState) -> Result<f64> {
    let rs = ReducedSystem::new(asg, state);
    let blocks = rs.s.sqrt_blocks();
    let apply = |v: &[f64]| {
        let sv = rs.s.apply_sqrt(&blocks, v);
        let jsv = rs.j.apply(&sv);
        rs.s.apply_sqrt(&blocks, &jsv)
    };
    let lam = lanczos_lambda_max(rs.n(), apply, 300, 1e-10, 7)?;
    // The similarity is positive semidefinite; clamp roundoff noise.
    Ok(-lam.max(0.0))
}

/// Squared spectral norm of the incidence matrix.
pub fn incidence_norm_sq(incidence: &IncidenceMatrix) -> Result<f64> {
    let apply = |v: &[f64]| {
        let a = incidence.link_flows(v);
        incidence.path_totals(&a)
    };
    Ok(lanczos_lambda_max(incidence.n_paths, apply, 300, 1e-10, 7)?.max(0.0))
}

/// Step bound computable before solving: worst-case curvature uses every
/// link carrying the whole demand at once.
pub fn conservative_step(asg: &Assignment) -> Result<f64> {
    let total = asg.demand().total();
    let a_max = vec![total; asg.network().n_links()];
    let tp = asg.network().link_cost_derivatives(&a_max);
    let tp_max = tp.iter().fold(0.0f64, |m, &x| m.max(x));
    let d_sq = incidence_norm_sq(asg.incidence())?;
    let max_d = asg.demand().max_demand();
    Ok(2.0 / (2.0 + asg.theta() * max_d * d_sq * tp_max))
}

/// Guaranteed-convergence step bound from the most negative eigenvalue.
pub fn guaranteed_step(lambda_min: f64) -> f64 {
    2.0 / (2.0 - lambda_min)
}

/// Spectrum summary of the map Jacobian at a state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralReport {
    pub theta: f64,
    pub max_demand: f64,
    /// Most negative eigenvalue, always computed matrix-free.
    pub lambda_min: f64,
    /// Largest eigenvalue. From the dense spectrum when one was computed;
    /// exactly zero otherwise, which the operator structure guarantees.
    pub lambda_max: f64,
    /// Upper limit of the convergent constant-step range.
    pub s_g: f64,
    /// A priori step bound, independent of the state.
    pub s_conservative: f64,
    /// Real parts of the dense spectrum, ascending; empty when the system
    /// was too large to realize densely.
    pub eigenvalues_real: Vec<f64>,
    pub eigenvalues_imag: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Full spectral report at a state. Systems with more than `dense_limit`
/// paths skip the dense eigenvalue list but still get the matrix-free
/// extremes.
pub fn spectral_analysis(
    asg: &Assignment,
    state: &FlowState,
    dense_limit: usize,
) -> Result<SpectralReport> {
    let lambda_min = lambda_min_symmetric(asg, state)?;
    let s_conservative = conservative_step(asg)?;
    let mut warnings = Vec::new();
    let mut eigenvalues_real = Vec::new();
    let mut eigenvalues_imag = Vec::new();
    let mut lambda_max = 0.0;
    let n = asg.n_paths();
    if n <= dense_limit {
        let rs = ReducedSystem::new(asg, state);
        let k = rs.dense_k(dense_limit)?;
        let eigs = k.complex_eigenvalues();
        let mut pairs: Vec<(f64, f64)> = eigs.iter().map(|c| (c.re, c.im)).collect();
        pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let re_scale = pairs.iter().fold(1.0f64, |m, p| m.max(p.0.abs()));
        let im_max = pairs.iter().fold(0.0f64, |m, p| m.max(p.1.abs()));
        if im_max > 1e-6 * re_scale {
            warnings.push(format!(
                "dense spectrum has imaginary parts up to {im_max:.3e}; the operator should be similar to a symmetric one"
            ));
        }
        lambda_max = pairs.iter().fold(f64::NEG_INFINITY, |m, p| m.max(p.0));
        eigenvalues_real = pairs.iter().map(|p| p.0).collect();
        eigenvalues_imag = pairs.iter().map(|p| p.1).collect();
    } else {
        warnings.push(format!(
            "{n} paths exceed the dense limit {dense_limit}; eigenvalue list omitted"
        ));
    }
    Ok(SpectralReport {
        theta: asg.theta(),
        max_demand: asg.demand().max_demand(),
        lambda_min,
        lambda_max,
        s_g: guaranteed_step(lambda_min),
        s_conservative,
        eigenvalues_real,
        eigenvalues_imag,
        warnings,
    })
}

/// Central finite difference of the assignment map along `v` against the
/// operator product, returning the largest absolute entry of the
/// difference. Both endpoints must stay in the nonnegative orthant.
pub fn fd_jacobian_check(asg: &Assignment, h: &[f64], v: &[f64], eps: f64) -> Result<f64> {
    let hp: Vec<f64> = h.iter().zip(v).map(|(a, b)| a + eps * b).collect();
    let hm: Vec<f64> = h.iter().zip(v).map(|(a, b)| a - eps * b).collect();
    if hp.iter().chain(hm.iter()).any(|&x| x < 0.0) {
        return Err(Error::Infeasible(
            "finite-difference endpoint leaves the nonnegative orthant".into(),
        ));
    }
    let lp = asg.logit_map(&hp);
    let lm = asg.logit_map(&hm);
    let state = asg.evaluate(h);
    let rs = ReducedSystem::new(asg, &state);
    let kv = rs.apply_k(v);
    let mut worst = 0.0f64;
    for i in 0..v.len() {
        let fd = (lp[i] - lm[i]) / (2.0 * eps);
        worst = worst.max((fd - kv[i]).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::tests::{braess_assignment, two_link_assignment};
    use approx::assert_relative_eq;

    fn braess_state() -> (Assignment, FlowState) {
        let asg = braess_assignment(1.0);
        let st = asg.evaluate(&[2.0, 2.0, 2.0]);
        (asg, st)
    }

    #[test]
    fn prob_operator_matches_closed_form() {
        let (asg, st) = braess_state();
        let s = ProbOperator::from_state(&asg, &st).to_dense();
        let p = &st.probabilities;
        for i in 0..3 {
            for j in 0..3 {
                let expect = 6.0 * (if i == j { p[i] } else { 0.0 } - p[i] * p[j]);
                assert_relative_eq!(s[(i, j)], expect, max_relative = 1e-13);
            }
        }
        // Symmetric with zero row sums.
        for i in 0..3 {
            assert_relative_eq!(s.row(i).sum(), 0.0, epsilon = 1e-14);
            for j in 0..3 {
                assert_relative_eq!(s[(i, j)], s[(j, i)], max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn cost_jacobian_matches_hand_matrix() {
        let (asg, st) = braess_state();
        let j = CostJacobian::from_state(&asg, &st);
        assert_eq!(j.tprime(), &[1.0, 0.0, 0.0, 1.0, 0.0]);
        let dense = j.to_dense();
        let expect = [[1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 2.0]];
        for i in 0..3 {
            for jj in 0..3 {
                assert_relative_eq!(dense[(i, jj)], expect[i][jj], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn k_application_matches_dense_product() {
        let (asg, st) = braess_state();
        let rs = ReducedSystem::new(&asg, &st);
        let k = rs.dense_k(100).unwrap();
        let minus_sj = -(rs.s.to_dense() * rs.j.to_dense());
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(k[(i, j)], minus_sj[(i, j)], epsilon = 1e-13);
            }
        }
        let v = [0.3, -1.1, 0.8];
        let kv = rs.apply_k(&v);
        let imk = rs.apply_i_minus_k(&v);
        for i in 0..3 {
            assert_relative_eq!(imk[i], v[i] - kv[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn k_output_has_zero_block_sums() {
        let (asg, st) = braess_state();
        let rs = ReducedSystem::new(&asg, &st);
        let kv = rs.apply_k(&[1.7, -0.4, 2.2]);
        assert!(kv.iter().sum::<f64>().abs() < 1e-13);
    }

    #[test]
    fn dense_k_respects_the_limit() {
        let (asg, st) = braess_state();
        let rs = ReducedSystem::new(&asg, &st);
        match rs.dense_k(2) {
            Err(Error::TooLargeForDense { n: 3, limit: 2 }) => {}
            other => panic!("expected TooLargeForDense, got {other:?}"),
        }
    }

    #[test]
    fn choice_term_vanishes_on_zero_sum_directions() {
        let (asg, st) = braess_state();
        let s = ProbOperator::from_state(&asg, &st);
        let out = s.apply_choice(&[0.5, 0.5, -1.0]);
        assert!(out.iter().all(|x| x.abs() < 1e-15));
        let ones = s.apply_choice(&[1.0, 1.0, 1.0]);
        for (o, p) in ones.iter().zip(&st.probabilities) {
            assert_relative_eq!(o, &(3.0 * p), max_relative = 1e-14);
        }
    }

    #[test]
    fn braess_spectrum_is_real_nonpositive_with_zero_top() {
        let (asg, st) = braess_state();
        let report = spectral_analysis(&asg, &st, DENSE_LIMIT).unwrap();
        assert!(report.warnings.is_empty(), "{:?}", report.warnings);
        assert_eq!(report.eigenvalues_real.len(), 3);
        assert!(report.lambda_max.abs() < 1e-12);
        for im in &report.eigenvalues_imag {
            assert!(im.abs() < 1e-10);
        }
        for re in &report.eigenvalues_real {
            assert!(*re <= 1e-12);
        }
        // Matrix-free extreme agrees with the dense spectrum.
        assert_relative_eq!(report.lambda_min, report.eigenvalues_real[0], max_relative = 1e-8);
        assert!(report.s_g > 0.0 && report.s_g <= 1.0);
    }

    #[test]
    fn lanczos_matches_dense_symmetric_eigensolver() {
        // Random PSD matrix with a deterministic seed.
        let n = 30;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        let m = &a * a.transpose();
        let dense_max = SymmetricEigen::new(m.clone())
            .eigenvalues
            .iter()
            .fold(f64::NEG_INFINITY, |acc, &x| acc.max(x));
        let lam = lanczos_lambda_max(
            n,
            |v| {
                let x = DMatrix::from_column_slice(n, 1, v);
                (&m * x).column(0).iter().cloned().collect()
            },
            300,
            1e-12,
            3,
        )
        .unwrap();
        assert_relative_eq!(lam, dense_max, max_relative = 1e-9);
    }

    #[test]
    fn incidence_norm_of_braess_is_two() {
        let (asg, _) = braess_state();
        let d_sq = incidence_norm_sq(asg.incidence()).unwrap();
        assert_relative_eq!(d_sq, 4.0, max_relative = 1e-9);
    }

    #[test]
    fn conservative_step_matches_hand_value() {
        // Worst-case curvature 1, incidence norm squared 4, demand 6:
        // 2 / (2 + 24) = 1/13.
        let (asg, _) = braess_state();
        let s = conservative_step(&asg).unwrap();
        assert_relative_eq!(s, 1.0 / 13.0, max_relative = 1e-9);
    }

    #[test]
    fn sqrt_blocks_square_back_to_the_operator() {
        let (asg, st) = braess_state();
        let s = ProbOperator::from_state(&asg, &st);
        let blocks = s.sqrt_blocks();
        let dense = s.to_dense();
        let v = [0.9, -0.2, 1.4];
        let twice = s.apply_sqrt(&blocks, &s.apply_sqrt(&blocks, &v));
        let direct = &dense * DMatrix::from_column_slice(3, 1, &v);
        for i in 0..3 {
            assert_relative_eq!(twice[i], direct[(i, 0)], epsilon = 1e-12);
        }
    }

    #[test]
    fn fd_check_is_tight_on_braess_and_two_link() {
        let (asg, _) = braess_state();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let mut v: Vec<f64> = (0..3).map(|_| rng.random::<f64>() - 0.5).collect();
            let mean = v.iter().sum::<f64>() / 3.0;
            v.iter_mut().for_each(|x| *x -= mean);
            let worst = fd_jacobian_check(&asg, &[2.0, 2.0, 2.0], &v, 1e-5).unwrap();
            assert!(worst < 1e-6, "difference {worst}");
        }
        let asg2 = two_link_assignment(1.0);
        let worst = fd_jacobian_check(&asg2, &[2.5, 1.5], &[0.5, -0.5], 1e-5).unwrap();
        assert!(worst < 1e-6, "difference {worst}");
    }

    #[test]
    fn fd_check_rejects_orthant_exit() {
        let (asg, _) = braess_state();
        let err = fd_jacobian_check(&asg, &[1e-7, 2.0, 2.0], &[1.0, -1.0, 0.0], 1e-5).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn two_link_lambda_min_matches_the_scalar_slope() {
        // At the fixed point the single nontrivial eigenvalue is the slope
        // of the scalar map, about -1.783.
        let asg = two_link_assignment(1.0);
        let h1 = crate::equilibrium::tests::two_link_root();
        let st = asg.evaluate(&[h1, 4.0 - h1]);
        let lam = lambda_min_symmetric(&asg, &st).unwrap();
        let report = spectral_analysis(&asg, &st, DENSE_LIMIT).unwrap();
        assert_relative_eq!(lam, report.eigenvalues_real[0], max_relative = 1e-9);
        // Scalar slope: d/dh1 of 4 p1 equals -4 theta p1 (1 - p1) * 2.
        let p1 = st.probabilities[0];
        let slope = -8.0 * p1 * (1.0 - p1);
        assert_relative_eq!(lam, slope, max_relative = 1e-9);
    }
}
