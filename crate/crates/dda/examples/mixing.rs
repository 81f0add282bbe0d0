//! Exact mixing analysis of gossip schemes.
//!
//! Enumerates the weight-matrix atoms of pairwise and broadcast gossip on
//! small graphs and prints the contraction factor rho = lambda_max of
//! E[A' (I - 11'/m) A] together with the stochasticity flags the limit
//! theory cares about.

use dda::network::{GossipScheme, Graph};
use dda::Matrix;

fn report(tag: &str, scheme: &GossipScheme) {
    let r = scheme.mixing_report();
    println!("{tag}");
    println!("  rho = {:.6}", r.rho);
    println!(
        "  row stochastic {}, doubly stochastic every round {}, column stochastic in mean {}",
        r.row_stochastic, r.doubly_stochastic_always, r.column_stochastic_in_mean
    );
    for (prob, event) in scheme.atoms() {
        println!("  with prob {prob:.4}: {event:?}");
    }
}

fn main() {
    report(
        "pairwise gossip on K3 (rho should be exactly 1/2):",
        &GossipScheme::pairwise(Graph::complete(3)).unwrap(),
    );
    report(
        "broadcast gossip on K3, mix 0.5:",
        &GossipScheme::broadcast(Graph::complete(3), 0.5).unwrap(),
    );
    report(
        "pairwise gossip on a 5-cycle:",
        &GossipScheme::pairwise(
            Graph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]).unwrap(),
        )
        .unwrap(),
    );
    // A fixed doubly stochastic matrix is the degenerate case: one atom.
    report(
        "fixed equal-weight matrix on 3 nodes:",
        &GossipScheme::fixed(Matrix::from_element(3, 3, 1.0 / 3.0)).unwrap(),
    );
}
