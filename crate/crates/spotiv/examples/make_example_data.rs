//! Regenerates the bundled example dataset (data/example.csv): one
//! binary_i draw, seed 7, n = 200, written at full precision so the
//! file parses back to the exact generated values.

use std::fmt::Write as _;

use spotiv::dgp::{generate, Scenario, ScenarioSpec, ZDist};

fn main() {
    let spec = ScenarioSpec {
        scenario: Scenario::BinaryI,
        n: 200,
        c_gamma: 0.8,
        z_dist: ZDist::Normal,
        seed: 7,
    };
    let (data, _) = generate(&spec).expect("generation");
    let mut out = String::from("y,d,z1,z2,z3,z4,z5,z6,z7\n");
    for i in 0..data.n() {
        let _ = write!(out, "{},{}", data.y()[i], data.d()[i]);
        for j in 0..data.p() {
            let _ = write!(out, ",{}", data.w()[(i, j)]);
        }
        out.push('\n');
    }
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "data/example.csv".to_string());
    std::fs::write(&path, out).expect("write");
    eprintln!("wrote {path}");
}
