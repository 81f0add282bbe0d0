//! Seeded generation of estimation instances and their gradient oracle.
//!
//! Draws a random 3-agent instance with a convexity margin on the facet,
//! prints the regressor moments and noise variances, then checks by Monte
//! Carlo that sampled gradients are unbiased for the true gradient.

use dda::polyhedron::Polyhedron;
use dda::problem::QuadraticEstimationProblem;
use dda::{derive_seed, Vector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let set = Polyhedron::wedge_example();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(99, 0));
    let problem = QuadraticEstimationProblem::generate_instance_restricted(
        3,
        2,
        Vector::from_row_slice(&[1.0, 2.0]),
        (0.5, 1.5),
        set.block_b().0,
        0.1,
        &mut rng,
    )
    .unwrap();

    for j in 0..problem.m() {
        println!(
            "agent {j}: noise variance {:.4}, regressor moment {:?}",
            problem.noise_variance(j),
            problem.regressor_moment(j).as_slice()
        );
    }
    println!(
        "restricted convexity margin on the facet: {:.4}",
        problem.restricted_convexity_margin(set.block_b().0)
    );

    // Gradient unbiasedness at a non-optimal point.
    let x = Vector::from_row_slice(&[2.5, 0.7]);
    let n = 200_000;
    for j in 0..problem.m() {
        let exact = problem.true_gradient(j, &x);
        let mut mean = Vector::zeros(2);
        for _ in 0..n {
            mean += problem.sample_gradient(j, &x, &mut rng);
        }
        mean /= n as f64;
        println!(
            "agent {j}: true gradient ({:8.4}, {:8.4}), sample mean of {n} draws ({:8.4}, {:8.4})",
            exact[0], exact[1], mean[0], mean[1]
        );
    }
    let (u, d) = problem.draw(0, &mut rng);
    println!(
        "one measurement pair for agent 0: regressor ({:.4}, {:.4}), observation {:.4}",
        u[0], u[1], d
    );
}
