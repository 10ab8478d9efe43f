use beamscan_core::analysis::{correlation_rho, synthesize_omni, LsOptions, LsSolver};
use beamscan_core::array::{synth_codebook, ArrayTables, CodebookParams};
use beamscan_core::sounder::PdpTensor;
use proptest::collection::vec;
use proptest::prelude::*;

fn tables() -> ArrayTables {
    let t = synth_codebook(&CodebookParams::default()).unwrap();
    ArrayTables::new(t.clone(), t)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rho_is_affine_invariant(
        a in vec(-90.0f64..-30.0, 16),
        b in vec(-90.0f64..-30.0, 16),
        alpha in 0.1f64..10.0,
        beta in -50.0f64..50.0,
    ) {
        let Ok(r) = correlation_rho(&a, &b) else { return Ok(()) };
        let a2: Vec<f64> = a.iter().map(|v| alpha * v + beta).collect();
        let b2: Vec<f64> = b.iter().map(|v| alpha * v - beta).collect();
        prop_assert!((correlation_rho(&a2, &b).unwrap() - r).abs() < 1e-9);
        prop_assert!((correlation_rho(&a, &b2).unwrap() - r).abs() < 1e-9);
    }

    #[test]
    fn omni_is_max_over_pacs(vals in vec(-100.0f32..-20.0, 6 * 5 * 4)) {
        let x = PdpTensor::from_fn(6, 5, 4, -90.0, |t, n, j| vals[(j * 5 + n) * 6 + t] as f64).unwrap();
        let s = synthesize_omni(&x);
        for j in 0..4 {
            for t in 0..6 {
                let m = (0..5).map(|n| x.get(t, n, j)).fold(f64::NEG_INFINITY, f64::max);
                prop_assert_eq!(s.get(t, j), m);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn ls_estimate_ignores_constant_offset(
        rssi in vec(-90.0f64..-40.0, 144),
        offset in -30.0f64..30.0,
    ) {
        let tables = tables();
        let solver = LsSolver::new(&tables);
        let shifted: Vec<f64> = rssi.iter().map(|v| v + offset).collect();
        let a = solver.solve(&rssi, 0, &LsOptions::default()).unwrap();
        let b = solver.solve(&shifted, 0, &LsOptions::default()).unwrap();
        prop_assert_eq!(a.omega_hat, b.omega_hat);
        prop_assert!((a.rssi0_dbm + offset - b.rssi0_dbm).abs() < 1e-9);
    }
}
