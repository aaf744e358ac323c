//! Exponential integral, Lambert W and the bracketed root finder.

use d2d_power::specfun::{exp_integral_e1, find_root, lambert_w0, RootBracket};

fn main() {
    println!("{:>10}  {:>22}", "x", "E1(x)");
    for x in [1e-8, 1e-3, 0.1, 1.0, 10.0, 100.0, 700.0] {
        println!("{x:>10.0e}  {:>22.15e}", exp_integral_e1(x).unwrap());
    }

    println!();
    println!("{:>10}  {:>20}  {:>10}", "x", "W0(x)", "W e^W - x");
    for x in [
        -1.0 / std::f64::consts::E,
        -0.2,
        0.0,
        1.0,
        std::f64::consts::E,
        1e6,
    ] {
        let w = lambert_w0(x).unwrap();
        println!("{x:>10.4}  {w:>20.15}  {:>10.1e}", w * w.exp() - x);
    }

    // E1(x) = ln 2 has a single root on [0.01, 10]
    let bracket = RootBracket::new(0.01, 10.0).unwrap();
    let root = find_root(
        |x| exp_integral_e1(x).unwrap() - std::f64::consts::LN_2,
        bracket,
    )
    .unwrap();
    println!("\nE1(x) = ln 2 at x = {root:.15}");

    match exp_integral_e1(0.0) {
        Ok(v) => println!("unexpected value {v}"),
        Err(e) => println!("E1(0): {e}"),
    }
}
