use wschaos::units::ModelParams;
use wschaos::ws_basis::{chi_tensor, discretized_hamiltonian, solve_ws_states, verify_translation_identity, BoundingBox};

fn reference_params() -> ModelParams {
    ModelParams::new(5.0, 0.25, 0.25).unwrap()
}

#[test]
fn reference_chi_values() {
    let basis = solve_ws_states(&reference_params(), &BoundingBox::default()).unwrap();
    let chi = chi_tensor(&basis, 3).unwrap();
    let nn = chi.nn();
    println!("chi000 = {:.6}, chi001 = {:.6}, chi00-1 = {:.6}", nn.on_site, nn.forward, nn.backward);
    assert!((nn.on_site - 1.99).abs() < 0.02);
    assert!((nn.forward + 0.16).abs() < 0.02);
    assert!((nn.backward - 0.15).abs() < 0.02);
    // couplings reaching three or more wells away are negligible
    for (t, v) in chi.entries() {
        let mut idx = vec![0, t[0], t[1], t[2]];
        idx.sort_unstable();
        let gap = idx.windows(2).map(|w| w[1] - w[0]).max().unwrap();
        if gap >= 3 {
            assert!(v.abs() < 1e-3, "chi{t:?} = {v}");
        }
    }
}

#[test]
fn ladder_matches_double_resolution() {
    let params = reference_params();
    let basis = solve_ws_states(&params, &BoundingBox::default()).unwrap();
    assert!(basis.ladder_deviation(-5..=5) < 1e-3);

    // independent reference: raw bisection eigenvalues of the doubly refined
    // Hamiltonian, picked inside a narrow window around each ladder rung
    // (higher-band states of distant wells sit about 0.012 away)
    let fine = BoundingBox { points_per_period: 128, ..BoundingBox::default() };
    let (_, h0) = discretized_hamiltonian(&params, &fine);
    let e0 = basis.state(0).unwrap().energy;
    for n in -5..5 {
        let shifted = |m: i32| e0 + params.force * m as f64;
        let window = |m: i32| h0.eigenvalues_in(shifted(m) - 4e-3, shifted(m) + 4e-3);
        let (a, b) = (window(n), window(n + 1));
        assert_eq!(a.len(), 1, "well {n}: {a:?}");
        assert_eq!(b.len(), 1, "well {}: {b:?}", n + 1);
        let spacing = b[0] - a[0];
        assert!((spacing - params.force).abs() < 1e-3 * params.force, "spacing {spacing}");
        let coarse = basis.state(n + 1).unwrap().energy - basis.state(n).unwrap().energy;
        assert!((coarse - spacing).abs() < 1e-6);
    }
}

#[test]
fn translated_states_coincide() {
    let basis = solve_ws_states(&reference_params(), &BoundingBox::default()).unwrap();
    for n in basis.central_wells().take(20) {
        let dev = basis.translation_deviation(n).unwrap();
        assert!(dev < 1e-4, "well {n}: {dev}");
    }
}

#[test]
fn translation_identity_near_center_and_edge() {
    let basis = solve_ws_states(&reference_params(), &BoundingBox::default()).unwrap();
    let chi = chi_tensor(&basis, 2).unwrap();
    let central = verify_translation_identity(&basis, &chi, 1).unwrap();
    assert!(central < 1e-3);

    // keep wells right up to the wall so the outermost states feel it
    let tight = BoundingBox { margin: 1, ..BoundingBox::default() };
    let basis = solve_ws_states(&reference_params(), &tight).unwrap();
    let chi = chi_tensor(&basis, 2).unwrap();
    let central = verify_translation_identity(&basis, &chi, 1).unwrap();
    let edge = verify_translation_identity(&basis, &chi, basis.last_well() - 2).unwrap();
    println!("translation deviation: central {central:e}, edge {edge:e}");
    assert!(edge > 10.0 * central);
}

#[test]
fn orthonormal_among_central_wells() {
    let basis = solve_ws_states(&reference_params(), &BoundingBox::default()).unwrap();
    let wells: Vec<i32> = basis.central_wells().collect();
    for &n in &wells {
        assert!((basis.overlap(n, n).unwrap() - 1.0).abs() < 1e-10);
        for &m in &wells {
            if m != n {
                assert!(basis.overlap(n, m).unwrap().abs() < 1e-8);
            }
        }
    }
}

#[test]
fn grid_refinement_converges() {
    let coarse = solve_ws_states(&reference_params(), &BoundingBox::default()).unwrap();
    let fine_box = BoundingBox { points_per_period: 128, ..BoundingBox::default() };
    let fine = solve_ws_states(&reference_params(), &fine_box).unwrap();
    let a = chi_tensor(&coarse, 1).unwrap().get(0, 0, 0);
    let b = chi_tensor(&fine, 1).unwrap().get(0, 0, 0);
    assert!(((a - b) / b).abs() < 1e-3, "{a} vs {b}");
}

#[test]
fn box_size_independence() {
    let small = solve_ws_states(&reference_params(), &BoundingBox::default()).unwrap();
    let big_box = BoundingBox { well_count: 61, ..BoundingBox::default() };
    let big = solve_ws_states(&reference_params(), &big_box).unwrap();
    let (a, b) = (chi_tensor(&small, 2).unwrap(), chi_tensor(&big, 2).unwrap());
    for (t, v) in a.entries() {
        assert!((v - b.get(t[0], t[1], t[2])).abs() < 1e-4, "chi{t:?}");
    }
}
