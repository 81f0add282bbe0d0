//! Euclidean projection onto a polyhedron with KKT certificates.
//!
//! Projects a handful of points onto the wedge {-2x1 + x2 <= 0, x1 <= 5,
//! x2 >= 0} and prints the projected point, the active rows, and the
//! multipliers, then verifies the stationarity identity
//! x - z + B'lambda + C'mu = 0 numerically.

use dda::polyhedron::Polyhedron;
use dda::Vector;

fn main() {
    let set = Polyhedron::wedge_example();
    let points = [
        Vector::from_row_slice(&[2.0, 1.0]),   // interior
        Vector::from_row_slice(&[2.0, -1.0]),  // below the floor
        Vector::from_row_slice(&[0.0, 2.0]),   // across the facet
        Vector::from_row_slice(&[6.0, 14.0]),  // past the vertex
    ];
    for z in &points {
        let p = set.project(z).expect("projection failed");
        let (b, _) = set.block_b();
        let (c, _) = set.block_c();
        let residual =
            (&p.point - z + b.transpose() * &p.lambda + c.transpose() * &p.mu).norm();
        println!(
            "z = ({:5.1}, {:5.1}) -> x = ({:7.4}, {:7.4})  lambda = {:?}  mu = {:?}",
            z[0],
            z[1],
            p.point[0],
            p.point[1],
            p.lambda.as_slice(),
            p.mu.as_slice()
        );
        println!(
            "    active facet rows {:?}, active inequality rows {:?}, stationarity residual {:.2e}",
            p.active_b, p.active_c, residual
        );
    }
}
