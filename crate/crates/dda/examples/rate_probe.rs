//! Pathwise almost-sure rate probe.
//!
//! The theory predicts ||P_B(xbar_k - x*)|| = o(alpha_k^delta) for every
//! delta < 1 - 1/(2 alpha_exp). The probe tracks the ratio over the tail of
//! each replication, splits it into windows, and checks that the window
//! medians decrease.

use dda::algorithms::{GradientMode, InitSpec, StepSizeSchedule};
use dda::analysis::{tail_trend_probe, TrendConfig};
use dda::network::{GossipScheme, Graph};
use dda::polyhedron::Polyhedron;
use dda::problem::QuadraticEstimationProblem;
use dda::{derive_seed, Vector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let set = Polyhedron::wedge_example();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(1010, 0));
    let problem = QuadraticEstimationProblem::generate_instance_restricted(
        10,
        2,
        Vector::from_row_slice(&[1.0, 2.0]),
        (0.5, 1.5),
        set.block_b().0,
        0.1,
        &mut rng,
    )
    .unwrap()
    .with_tilt(Some(QuadraticEstimationProblem::facet_tilt(set.block_b().0, 1.0, 10)))
    .unwrap();

    let scheme = GossipScheme::pairwise(Graph::complete(10)).unwrap();
    let schedule = StepSizeSchedule::new(5.0, 0.67).unwrap();
    let init = InitSpec::Box {
        lo: Vector::from_row_slice(&[0.0, 0.0]),
        hi: Vector::from_row_slice(&[5.0, 5.0]),
    };
    let cfg = TrendConfig {
        runs: 20,
        steps: 2000,
        delta: 0.2,
        windows: 6,
        tail_fraction: 0.2,
        consensus_points_per_decade: 16,
        master_seed: 1010,
    };
    let report =
        tail_trend_probe(&problem, &set, &scheme, &schedule, &init, GradientMode::Sampled, &cfg)
            .unwrap();

    println!(
        "delta = {} (bound {:.3}), first/last window medians per run:",
        cfg.delta,
        1.0 - 1.0 / (2.0 * schedule.alpha_exp())
    );
    for run in report.runs.iter().take(4) {
        println!(
            "  run {}: {:.4} -> {:.4} ({})",
            run.run_id,
            run.first_median,
            run.last_median,
            if run.decreasing { "decreasing" } else { "not decreasing" }
        );
    }
    println!(
        "window medians decrease in {:.0}% of {} runs, max tail ratio {:.3}",
        100.0 * report.fraction_decreasing,
        report.runs.len(),
        report.max_ratio
    );
    if let Some(slope) = report.consensus_slope {
        println!("consensus log-log slope alongside: {slope:.3}");
    }
}
