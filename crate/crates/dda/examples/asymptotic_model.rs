//! The limit-law covariances, computed exactly from an instance.
//!
//! For the single-agent instance with R = I, sigma^2 = 1 and the facet
//! -2x1 + x2 = 0 the pieces have closed forms: the facet projector
//! P_B = [[.2,.4],[.4,.8]], curvature G = [2], noise Sigma_bar = 4I, and
//! Lyapunov block Sigma_1 = [1]. Both limit covariances collapse onto the
//! facet direction and happen to equal P_B itself. Run it and check.

use dda::analysis::build_asymptotic_model;
use dda::linalg::lyapunov_solve;
use dda::polyhedron::Polyhedron;
use dda::problem::QuadraticEstimationProblem;
use dda::{Matrix, Vector};

fn show(tag: &str, m: &Matrix) {
    print!("{tag} = [");
    for i in 0..m.nrows() {
        if i > 0 {
            print!("; ");
        }
        for j in 0..m.ncols() {
            if j > 0 {
                print!(", ");
            }
            print!("{:.4}", m[(i, j)]);
        }
    }
    println!("]");
}

fn main() {
    let set = Polyhedron::wedge_example();
    let problem = QuadraticEstimationProblem::new(
        Vector::from_row_slice(&[1.0, 2.0]),
        vec![Matrix::identity(2, 2)],
        vec![1.0],
        None,
    )
    .unwrap();
    let model = build_asymptotic_model(&problem, &set).unwrap();

    println!("single-agent worked instance (R = I, sigma^2 = 1):");
    show("  facet projector P_B", &model.p_b);
    show("  free-block curvature G", &model.g);
    show("  gradient noise Sigma_bar", &model.sigma_bar);
    show("  Lyapunov block Sigma_1", &model.sigma1);
    show("  scaled-error covariance Sigma", &model.sigma);
    show("  averaged covariance Sigma*", &model.sigma_star);
    println!(
        "  restricted margin {:.4}, strict complementarity {}",
        model.restricted_margin, model.strict_complementarity
    );

    // The Lyapunov solver behind Sigma_1, standalone: G X + X G' = Q.
    let g = Matrix::from_row_slice(2, 2, &[3.0, 1.0, 0.0, 2.0]);
    let q = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let x = lyapunov_solve(&g, &q).unwrap();
    let residual = (&g * &x + &x * g.transpose() - &q).norm();
    show("standalone Lyapunov solve X", &x);
    println!("  residual ||G X + X G' - Q|| = {residual:.2e}");
}
