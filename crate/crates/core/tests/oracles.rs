//! Scalar values frozen from `oracles/scalar_constants.py` (mpmath, 40
//! digits).

#![allow(clippy::excessive_precision)]

use nsf_stability::lemmas::{gap_f, gap_g, log_crossing, power_bound_constant, BoundBranch};
use nsf_stability::thermo::{alt_entropy, alt_scale, Material};

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

#[test]
fn log_crossing_matches_high_precision_root() {
    assert!(rel(log_crossing(), 5.0091429410818636725) < 1e-14);
}

#[test]
fn power_bound_constants_match_high_precision_values() {
    let cases = [(3, 0.0011193671347558094217, -1.97259797518434), (4, 0.00039786140215202106237, -3.01455232280154)];
    for (l, inv_l, x_int) in cases {
        let b = power_bound_constant(3.0 / 8.0, 0.5, l, -5.0).unwrap();
        assert!(rel(b.inv_l, inv_l) < 1e-12, "l = {l}: {}", b.inv_l);
        assert!((b.x_int - x_int).abs() < 1e-12, "l = {l}: {}", b.x_int);
        assert_eq!(b.branch, BoundBranch::Flattened);
    }
}

#[test]
fn gap_functions_match_high_precision_values() {
    let cases = [
        (-0.999, 0.53135762714228018472, -1.1985005290225016897),
        (-0.5, 0.051395331320528763973, -0.060794399808021358304),
        (1e-6, 1.4999992497536640209e-13, -1.5749989309916388068e-13),
        (0.5, 0.030288889166267606409, -0.029536777431012123331),
        (10.0, 3.1463046272518270295, -2.0483662350260380808),
        (1e6, 272464.17564384362926, -8825.6188103673983914),
    ];
    for (x, f, g) in cases {
        assert!(rel(gap_f(x, 0.6, 0.9).unwrap(), f) < 1e-12, "f at {x}");
        assert!(rel(gap_g(x, 0.6, 0.9).unwrap(), g) < 1e-12, "g at {x}");
    }
}

#[test]
fn alternative_scale_matches_high_precision_values() {
    let mat = Material::default();
    for (theta, m, vt, s) in [
        (250.0, 0.3, 264.05499210981454254, -741.63676474623686454),
        (400.0, 0.7, 327.04150727080530829, 1332.1441417242648907),
    ] {
        let v = alt_scale(theta, m, &mat).unwrap();
        assert!(rel(v, vt) < 1e-14);
        assert!(rel(alt_entropy(v, m, &mat).unwrap(), s) < 1e-13);
    }
}
