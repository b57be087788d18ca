use graspkit::depth::{
    apply_repair, corrupt, make_residual_label, rmse, smoothing_repairer, DepthMap, NoiseModel, OracleRepairer,
    RepairPredictor,
};
use graspkit::geometry::CameraIntrinsics;
use proptest::prelude::*;

fn intr(w: usize, h: usize) -> CameraIntrinsics {
    CameraIntrinsics {
        fx: 300.0,
        fy: 300.0,
        cx: w as f64 / 2.0 - 0.5,
        cy: h as f64 / 2.0 - 0.5,
        width: w,
        height: h,
    }
}

fn depth_values(n: usize) -> impl Strategy<Value = Vec<f32>> {
    proptest::collection::vec(prop_oneof![1 => Just(0.0f32), 9 => 50.0f32..5000.0], n)
}

fn plane(w: usize, h: usize, z: f32) -> DepthMap {
    DepthMap::filled(intr(w, h), z).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Repairing with the supervision residual restores the simulated map
    /// bit for bit wherever both maps are valid.
    #[test]
    fn residual_round_trip_is_bit_exact((sim, real) in (2usize..9, 2usize..9).prop_flat_map(|(w, h)| (depth_values(w * h), depth_values(w * h)).prop_map(move |(a, b)| (DepthMap::new(intr(w, h), a).unwrap(), DepthMap::new(intr(w, h), b).unwrap())))) {
        let residual = make_residual_label(&sim, &real).unwrap();
        let repaired = apply_repair(&real, &residual).unwrap();
        prop_assert_eq!(repaired.clamped, 0);
        for i in 0..sim.values.len() {
            if sim.values[i] > 0.0 && real.values[i] > 0.0 {
                prop_assert_eq!(repaired.depth.values[i].to_bits(), sim.values[i].to_bits());
            } else {
                prop_assert_eq!(repaired.depth.values[i].to_bits(), real.values[i].to_bits());
            }
        }
    }

    /// Same seed, same corruption; holes stay holes.
    #[test]
    fn corruption_is_deterministic(values in depth_values(64), seed in any::<u64>()) {
        let sim = DepthMap::new(intr(8, 8), values).unwrap();
        let model = NoiseModel { seed, ..Default::default() };
        let a = corrupt(&sim, &model).unwrap();
        let b = corrupt(&sim, &model).unwrap();
        prop_assert_eq!(&a, &b);
        for (s, r) in sim.values.iter().zip(&a.values) {
            if *s <= 0.0 { prop_assert_eq!(*r, 0.0); }
            prop_assert!(*r >= 0.0);
        }
    }
}

#[test]
fn oracle_repair_of_corrupted_plane_has_zero_rmse() {
    let sim = plane(40, 30, 650.0);
    let real = corrupt(&sim, &NoiseModel { seed: 9, hole_rate: 0.0, ..Default::default() }).unwrap();
    assert!(rmse(&real, &sim).unwrap() > 0.5);
    let residual = OracleRepairer { sim: sim.clone() }.predict(&real).unwrap();
    assert_eq!(rmse(&apply_repair(&real, &residual).unwrap().depth, &sim).unwrap(), 0.0);
}

#[test]
fn smoothing_cuts_plane_noise_by_a_fifth() {
    for (seed, z) in [(1u64, 400.0f32), (2, 800.0), (3, 1200.0)] {
        let sim = plane(64, 48, z);
        let real = corrupt(&sim, &NoiseModel { seed, ..Default::default() }).unwrap();
        let before = rmse(&real, &sim).unwrap();
        let after = rmse(&apply_repair(&real, &smoothing_repairer(&real).unwrap()).unwrap().depth, &sim).unwrap();
        assert!(after <= 0.8 * before, "z {z}: {before} -> {after}");
    }
}
