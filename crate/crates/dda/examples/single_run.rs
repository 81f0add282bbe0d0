//! One seeded trajectory of distributed dual averaging.
//!
//! Five agents estimate x* = (1, 2) from noisy scalar measurements while
//! projecting onto the wedge after every gossip round. Prints the tracked
//! agent's iterate, its distance to the optimum, and the dual disagreement
//! at a few logarithmically spaced rounds.

use dda::algorithms::{DdaRun, GradientMode, InitSpec, StepSizeSchedule};
use dda::network::{GossipScheme, Graph};
use dda::polyhedron::Polyhedron;
use dda::problem::QuadraticEstimationProblem;
use dda::{derive_seed, Vector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let master = 42u64;
    let set = Polyhedron::wedge_example();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master, 0));
    let problem = QuadraticEstimationProblem::generate_instance_restricted(
        5,
        2,
        Vector::from_row_slice(&[1.0, 2.0]),
        (0.5, 1.5),
        set.block_b().0,
        0.1,
        &mut rng,
    )
    .unwrap();

    let scheme = GossipScheme::pairwise(Graph::complete(5)).unwrap();
    let schedule = StepSizeSchedule::new(5.0, 0.67).unwrap();
    let init = InitSpec::Box {
        lo: Vector::from_row_slice(&[0.0, 0.0]),
        hi: Vector::from_row_slice(&[5.0, 5.0]),
    };

    let mut run_rng = ChaCha8Rng::seed_from_u64(derive_seed(master, 1));
    let mut run = DdaRun::new(
        &problem,
        &set,
        &scheme,
        schedule,
        GradientMode::Sampled,
        &init,
        &mut run_rng,
    )
    .unwrap();

    println!("    k   x_0                    dist to x*   dual disagreement");
    let mut next_print = 1usize;
    for k in 1..=5000usize {
        run.step(&mut run_rng).unwrap();
        if k == next_print {
            let st = run.state();
            let x0 = &st.x[0];
            println!(
                "{k:>6}   ({:8.4}, {:8.4})   {:9.5}    {:11.5}",
                x0[0],
                x0[1],
                (x0 - problem.x_star()).norm(),
                st.consensus_error()
            );
            next_print = (next_print as f64 * 2.5).ceil() as usize;
        }
    }
}
