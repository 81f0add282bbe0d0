//! Dense small-matrix kernels: pseudoinverse, null-space projector and basis,
//! spectral norm, continuous Lyapunov solve.
//!
//! Everything here targets desk-scale matrices (d ≤ ~10 for the solvers, a few
//! hundred for the gossip second-moment matrices), so the implementations favor
//! transparency and tight tolerances over asymptotic speed.

use nalgebra::linalg::SymmetricEigen;
use thiserror::Error;

use crate::{Matrix, Vector};

#[derive(Debug, Error)]
pub enum LinalgError {
    /// The Lyapunov equation G·S + S·Gᵀ = M has no stable solution because G
    /// is not positive stable; for asymptotic models this means restricted
    /// strong convexity fails numerically.
    #[error(
        "Lyapunov solve requires every eigenvalue of G to have positive real part \
         (restricted strong convexity fails numerically): min Re(eig) = {min_real:.3e}"
    )]
    UnstableLyapunov { min_real: f64 },
    /// The vectorized Lyapunov system was singular despite the stability check.
    #[error("Lyapunov system singular after stability check (pathological conditioning)")]
    SingularLyapunovSystem,
}

/// An orthogonal matrix whose first `r` columns span ker(B) and whose trailing
/// columns span the row space of B. `rank` is the detected numerical rank of B
/// (always `u.ncols() - r`), reported so callers can notice degenerate inputs.
#[derive(Debug, Clone)]
pub struct SubspaceBasis {
    pub u: Matrix,
    pub r: usize,
    pub rank: usize,
}

/// Moore-Penrose pseudoinverse via SVD, truncating singular values at
/// max(rows, cols) · σ_max · 1e-12.
pub fn pseudo_inverse(m: &Matrix) -> Matrix {
    let svd = m.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let eps = m.nrows().max(m.ncols()) as f64 * sigma_max * 1e-12;
    svd.pseudo_inverse(eps)
        .expect("pseudo_inverse: nonnegative truncation threshold")
}

/// Orthogonal projector onto ker(B), equal to I − Bᵀ(BBᵀ)†B. A B with zero
/// rows projects onto the whole space (identity).
///
/// Assembled as I − VᵣVᵣᵀ from the right singular vectors of B itself (same
/// truncation rule as [`pseudo_inverse`]), so idempotence and symmetry hold
/// to machine precision even for badly conditioned B.
pub fn projection_matrix(b: &Matrix) -> Matrix {
    let d = b.ncols();
    let mut p = Matrix::identity(d, d);
    if b.nrows() == 0 {
        return p;
    }
    let svd = b.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("projection_matrix: SVD computes V");
    let eps = b.nrows().max(d) as f64 * svd.singular_values.max() * 1e-12;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > eps {
            let v = v_t.row(i).transpose();
            p -= &v * v.transpose();
        }
    }
    p
}

/// Orthonormal basis of R^d ordered kernel-first: columns 1..r span ker(B),
/// the rest span its orthogonal complement (the row space of B).
///
/// Built from the symmetric eigendecomposition of the projector onto ker(B),
/// whose eigenvalues cluster at 1 (kernel) and 0 (row space).
pub fn null_space_basis(b: &Matrix) -> SubspaceBasis {
    let d = b.ncols();
    let p = projection_matrix(b);
    let eig = SymmetricEigen::new(p);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .expect("projector eigenvalues are finite")
            .then(i.cmp(&j))
    });
    let mut u = Matrix::zeros(d, d);
    let mut r = 0;
    for (col, &src) in order.iter().enumerate() {
        u.set_column(col, &eig.eigenvectors.column(src));
        if eig.eigenvalues[src] > 0.5 {
            r += 1;
        }
    }
    SubspaceBasis { u, r, rank: d - r }
}

/// Largest singular value, to relative accuracy 1e-10.
///
/// Power iteration on MᵀM (Rayleigh-quotient estimate, residual-checked) from
/// the all-ones start and every basis vector, keeping the largest converged
/// eigenvalue: a single start can sit (nearly) inside an invariant subspace
/// and converge to a non-dominant eigenvalue, but no unit eigenvector is
/// orthogonal to all basis vectors. Falls back to a full symmetric
/// eigendecomposition when no start converges (e.g. nearly tied eigenvalues).
pub fn spectral_norm(m: &Matrix) -> f64 {
    let s = m.transpose() * m;
    let n = s.ncols();
    let scale = s.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }

    let mut starts = Vec::with_capacity(n + 1);
    starts.push(Vector::from_element(n, 1.0));
    for i in 0..n {
        let mut e = Vector::zeros(n);
        e[i] = 1.0;
        starts.push(e);
    }

    let mut best: Option<f64> = None;
    for start in starts {
        if let Some(lambda) = power_iteration(&s, start, scale) {
            best = Some(best.map_or(lambda, |b: f64| b.max(lambda)));
        }
    }
    if let Some(lambda) = best {
        return lambda.max(0.0).sqrt();
    }

    let eig = SymmetricEigen::new(s);
    eig.eigenvalues.max().max(0.0).sqrt()
}

/// One power-iteration attempt on symmetric PSD `s`; None = degenerate start
/// or no convergence within the iteration cap.
fn power_iteration(s: &Matrix, mut v: Vector, scale: f64) -> Option<f64> {
    v /= v.norm();
    for _ in 0..10_000 {
        let w = s * &v;
        let wn = w.norm();
        if wn <= scale * 1e-300 {
            return None; // start vector annihilated; caller tries another
        }
        v = w / wn;
        let sv = s * &v;
        let lambda = v.dot(&sv);
        let residual = (&sv - &v * lambda).norm();
        if residual <= 1e-12 * scale.max(lambda) {
            return Some(lambda);
        }
    }
    None
}

/// Solves G·S + S·Gᵀ = M for symmetric S (equivalently ∫₀^∞ e^{−Gt} M e^{−Gᵀt} dt
/// when G is positive stable) by vectorization: (I⊗G + G⊗I)vec(S) = vec(M).
pub fn lyapunov_solve(g: &Matrix, m: &Matrix) -> Result<Matrix, LinalgError> {
    let min_real = g
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::INFINITY, f64::min);
    if !(min_real > 0.0) {
        return Err(LinalgError::UnstableLyapunov { min_real });
    }

    let r = g.nrows();
    let eye = Matrix::identity(r, r);
    let system = eye.kronecker(g) + g.kronecker(&eye);
    let rhs = Vector::from_column_slice(m.as_slice());
    let sol = system
        .lu()
        .solve(&rhs)
        .ok_or(LinalgError::SingularLyapunovSystem)?;
    let s = Matrix::from_column_slice(r, r, sol.as_slice());
    Ok((&s + s.transpose()) * 0.5)
}
