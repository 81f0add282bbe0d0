//! Consensus decay rate of the dual disagreement.
//!
//! Averages Sigma_j ||z_{j,k} - zbar_k||^2 over replications and fits a
//! log-log slope: with step size a/k^0.67 the second-mean theory predicts
//! decay like alpha_k^2, i.e. slope -1.34.

use dda::algorithms::{GradientMode, InitSpec, StepSizeSchedule};
use dda::analysis::{fit_loglog_slope, monte_carlo, MonteCarloConfig};
use dda::network::{GossipScheme, Graph};
use dda::polyhedron::Polyhedron;
use dda::problem::QuadraticEstimationProblem;
use dda::{derive_seed, Vector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let set = Polyhedron::wedge_example();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(808, 0));
    let problem = QuadraticEstimationProblem::generate_instance_restricted(
        10,
        2,
        Vector::from_row_slice(&[1.0, 2.0]),
        (0.5, 1.5),
        set.block_b().0,
        0.1,
        &mut rng,
    )
    .unwrap();
    let scheme = GossipScheme::pairwise(Graph::complete(10)).unwrap();
    let schedule = StepSizeSchedule::new(5.0, 0.67).unwrap();
    let init = InitSpec::Box {
        lo: Vector::from_row_slice(&[0.0, 0.0]),
        hi: Vector::from_row_slice(&[5.0, 5.0]),
    };

    let cfg = MonteCarloConfig::new(30, 10_000, 808);
    let batch = monte_carlo(
        &problem,
        &set,
        &scheme,
        &schedule,
        &init,
        GradientMode::Sampled,
        &cfg,
    )
    .unwrap();

    println!("     k   mean dual disagreement");
    for (k, v) in batch.consensus_grid.iter().zip(&batch.mean_consensus) {
        if [1, 10, 100, 1000, 10_000].contains(k) {
            println!("{k:>6}   {v:.6e}");
        }
    }
    let slope = fit_loglog_slope(&batch.consensus_grid, &batch.mean_consensus, 100, 10_000)
        .expect("slope fit needs positive values");
    println!("fitted log-log slope over [100, 10000]: {slope:.3} (theory: -1.34)");
}
