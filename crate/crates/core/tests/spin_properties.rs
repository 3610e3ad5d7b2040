use std::f64::consts::PI;

use mdclock::angular::HalfInt;
use mdclock::spin::{
    build_hamiltonian, dipolar_coupling_hz, relaxation_time, time_grid, Propagator, SpinError, SpinGeometry, Subspace,
};

fn close(a: &[Vec<f64>], b: &[Vec<f64>], tol: f64) -> f64 {
    let worst = a
        .iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max);
    assert!(worst < tol, "worst deviation {worst}");
    worst
}

#[test]
fn spin_half_pair_flip_flop_closed_form() {
    // In {|↑↓⟩, |↓↑⟩} the pair is a two-level system with coupling −J/4.
    let geo = SpinGeometry::standard(2);
    let sys = build_hamiltonian(&geo, HalfInt::HALF, Subspace::Full).unwrap();
    let psi = sys.product_state(&[HalfInt::HALF, -HalfInt::HALF]).unwrap();
    let j = dipolar_coupling_hz(1.0, geo.spacing_nm * 1e-9);
    let times = time_grid(400.0, 80);
    let ev = sys.evolve(&psi, &times).unwrap();
    let up = ev.trace.of(HalfInt::HALF).unwrap();
    for (t, p) in times.iter().zip(&up) {
        let want = (2.0 * PI * j / 4.0 * t * 1e-3).cos().powi(2);
        assert!((p - want).abs() < 1e-10, "t={t}: {p} vs {want}");
    }
}

#[test]
fn single_atom_is_stationary() {
    let sys = build_hamiltonian(&SpinGeometry::standard(1), HalfInt::int(4), Subspace::Full).unwrap();
    let ev = sys.evolve(&sys.polarized_zero(), &time_grid(100.0, 10)).unwrap();
    for row in &ev.trace.populations {
        for (m, p) in ev.trace.projections.iter().zip(row) {
            let want = if *m == HalfInt::ZERO { 1.0 } else { 0.0 };
            assert!((p - want).abs() < 1e-14);
        }
    }
}

#[test]
fn neighbour_order_does_not_matter() {
    let f = HalfInt::int(4);
    let times = time_grid(60.0, 30);
    let base = SpinGeometry::standard(3);
    let shuffled = SpinGeometry {
        positions: vec![(-1.0, 0.0), (0.0, 0.0), (1.0, 0.0)],
        central: 1,
        ..base.clone()
    };
    let a = build_hamiltonian(&base, f, Subspace::Full).unwrap();
    let b = build_hamiltonian(&shuffled, f, Subspace::Full).unwrap();
    let ta = a.evolve(&a.polarized_zero(), &times).unwrap().trace;
    let tb = b.evolve(&b.polarized_zero(), &times).unwrap().trace;
    close(&ta.populations, &tb.populations, 1e-10);
}

#[test]
fn rigid_rotation_does_not_matter() {
    let f = HalfInt::int(4);
    let times = time_grid(60.0, 30);
    let base = SpinGeometry::standard(3);
    let rotated = SpinGeometry {
        positions: base.positions.iter().map(|&(x, y)| (-y, x)).collect(),
        ..base.clone()
    };
    let a = build_hamiltonian(&base, f, Subspace::Truncated).unwrap();
    let b = build_hamiltonian(&rotated, f, Subspace::Truncated).unwrap();
    let ta = a.evolve(&a.polarized_zero(), &times).unwrap().trace;
    let tb = b.evolve(&b.polarized_zero(), &times).unwrap().trace;
    close(&ta.populations, &tb.populations, 1e-10);
}

#[test]
fn doubling_spacing_slows_dynamics_eightfold() {
    let f = HalfInt::int(4);
    let near = build_hamiltonian(&SpinGeometry::standard(2), f, Subspace::Full).unwrap();
    let far = build_hamiltonian(&SpinGeometry::standard(2).with_spacing(800.0), f, Subspace::Full).unwrap();
    let t = time_grid(50.0, 25);
    let t8: Vec<f64> = t.iter().map(|x| 8.0 * x).collect();
    let a = near.evolve(&near.polarized_zero(), &t).unwrap().trace;
    let b = far.evolve(&far.polarized_zero(), &t8).unwrap().trace;
    close(&a.populations, &b.populations, 1e-9);
    let ta = relaxation_time(&a.times_ms, &a.initial_level(), 0.7).unwrap();
    let tb = relaxation_time(&b.times_ms, &b.initial_level(), 0.7).unwrap();
    assert!((tb / ta - 8.0).abs() < 1e-6);
}

#[test]
fn dense_and_krylov_agree() {
    let sys = build_hamiltonian(&SpinGeometry::standard(3), HalfInt::int(4), Subspace::Full).unwrap();
    let psi = sys.polarized_zero();
    let times = time_grid(40.0, 20);
    let d = sys.evolve_with(&psi, &times, Propagator::Dense).unwrap();
    let k = sys.evolve_with(&psi, &times, Propagator::Krylov).unwrap();
    assert!(d.dense && !k.dense);
    close(&d.trace.populations, &k.trace.populations, 1e-9);
    assert!(k.norm_drift < 1e-10);
}

#[test]
fn populations_stay_normalized_and_symmetric() {
    // Starting from all m = 0 the Hamiltonian is invariant under m → −m on every atom.
    let sys = build_hamiltonian(&SpinGeometry::standard(3), HalfInt::int(4), Subspace::Full).unwrap();
    let ev = sys.evolve(&sys.polarized_zero(), &time_grid(80.0, 40)).unwrap();
    for row in &ev.trace.populations {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let n = row.len();
        for k in 0..n / 2 {
            assert!((row[k] - row[n - 1 - k]).abs() < 1e-10);
        }
    }
}

#[test]
fn hamiltonian_is_hermitian_and_conserves_parity() {
    let sys = build_hamiltonian(&SpinGeometry::standard(4), HalfInt::int(4), Subspace::Truncated).unwrap();
    assert!(sys.hermiticity_deviation() < 1e-12 * sys.norm_bound());
    for (i, j, _) in sys.hamiltonian().triplet_iter() {
        assert_eq!(sys.parity(i), sys.parity(j));
        assert_eq!((sys.total_m_twice(i) - sys.total_m_twice(j)).rem_euclid(4), 0);
    }
}

#[test]
fn rejects_bad_inputs() {
    let f = HalfInt::int(4);
    assert!(matches!(
        build_hamiltonian(&SpinGeometry::standard(5), f, Subspace::Full),
        Err(SpinError::DimensionLimit { .. })
    ));
    let mut geo = SpinGeometry::standard(2);
    geo.positions[1] = (0.0, 0.0);
    assert!(matches!(build_hamiltonian(&geo, f, Subspace::Full), Err(SpinError::CoincidentPositions(0, 1))));
    let mut geo = SpinGeometry::standard(2);
    geo.central = 2;
    assert!(build_hamiltonian(&geo, f, Subspace::Full).is_err());
    assert!(build_hamiltonian(&SpinGeometry::standard(2).with_spacing(0.0), f, Subspace::Full).is_err());
    assert!(build_hamiltonian(&SpinGeometry::standard(0), f, Subspace::Full).is_err());

    let sys = build_hamiltonian(&SpinGeometry::standard(2), f, Subspace::Truncated).unwrap();
    assert!(sys.product_state(&[HalfInt::int(3), HalfInt::ZERO]).is_err());
    let psi = sys.polarized_zero().scale(2.0);
    assert!(matches!(sys.evolve(&psi, &[0.0, 1.0]), Err(SpinError::NotNormalized(_))));
    assert!(matches!(
        sys.evolve(&sys.polarized_zero(), &[1.0, 0.5]),
        Err(SpinError::BadTimeGrid)
    ));
    assert!(relaxation_time(&[0.0, 1.0], &[1.0, 0.9], 0.7).is_err());
}
