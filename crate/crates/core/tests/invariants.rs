//! Property-based invariants across the physics and learning primitives.

use dmatrack_core::ar::{ar_predict, ArParams};
use dmatrack_core::autograd::Tape;
use dmatrack_core::chansim::{bezier_point, AreaGrid};
use dmatrack_core::dma::element_response;
use dmatrack_core::rng::derive_seed;
use proptest::prelude::*;

const PI_2: f64 = std::f64::consts::FRAC_PI_2;

proptest! {
    /// `|w| = sqrt((1 + sin phi) / 2)`: the Lorentzian response magnitude
    /// depends only on the phase, not on the element position.
    #[test]
    fn element_response_magnitude_law(
        phi in -PI_2..=PI_2,
        rho in 0.0..0.5f64,
        beta in 100.0..5000.0f64,
    ) {
        let w = element_response(phi, rho, beta).unwrap();
        let expect = ((1.0 + phi.sin()) / 2.0).sqrt();
        prop_assert!((w.norm() - expect).abs() < 1e-12);
    }

    /// The in-strip propagation factor only rotates the response.
    #[test]
    fn element_response_position_is_pure_phase(
        phi in -PI_2..=PI_2,
        rho_a in 0.0..0.5f64,
        rho_b in 0.0..0.5f64,
        beta in 100.0..5000.0f64,
    ) {
        let a = element_response(phi, rho_a, beta).unwrap();
        let b = element_response(phi, rho_b, beta).unwrap();
        prop_assert!((a.norm() - b.norm()).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one(
        rows in 1usize..5,
        cols in 1usize..6,
        seed in any::<u64>(),
    ) {
        let mut rng = dmatrack_core::rng::rng_from_seed(seed);
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| rand::Rng::gen::<f64>(&mut rng) * 20.0 - 10.0)
            .collect();
        let mut tape = Tape::new();
        let x = tape.leaf_from(vec![rows, cols], data).unwrap();
        let s = tape.softmax(x).unwrap();
        let value = tape.value(s);
        for r in 0..rows {
            let sum: f64 = value[r * cols..(r + 1) * cols].iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(value[r * cols..(r + 1) * cols].iter().all(|&v| v >= 0.0));
        }
    }

    /// The refined estimate is linear in the gate and in the history.
    #[test]
    fn ar_prediction_is_linear(
        gamma in -4.0..4.0f64,
        zx in -2.0..2.0f64,
        zy in -2.0..2.0f64,
        alpha in -3.0..3.0f64,
        steps in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 1..8),
    ) {
        let history: Vec<[f64; 2]> = steps.iter().map(|&(x, y)| [x, y]).collect();
        let base = ArParams { gamma, z: [zx, zy] };
        let scaled_gate = ArParams { gamma, z: [alpha * zx, alpha * zy] };
        let a = ar_predict(&base, &history).unwrap();
        let b = ar_predict(&scaled_gate, &history).unwrap();
        prop_assert!((b[0] - alpha * a[0]).abs() < 1e-9);
        prop_assert!((b[1] - alpha * a[1]).abs() < 1e-9);

        let scaled_hist: Vec<[f64; 2]> =
            history.iter().map(|p| [alpha * p[0], alpha * p[1]]).collect();
        let c = ar_predict(&base, &scaled_hist).unwrap();
        prop_assert!((c[0] - alpha * a[0]).abs() < 1e-9);
        prop_assert!((c[1] - alpha * a[1]).abs() < 1e-9);
    }

    /// Snapping is idempotent and lands inside the area.
    #[test]
    fn snap_is_idempotent(
        x in -11.0..11.0f64,
        y in -4.0..4.0f64,
    ) {
        let area = AreaGrid::desk_default();
        let snapped = area.snap([x, y]);
        prop_assert!(area.contains(snapped));
        prop_assert_eq!(area.snap(snapped), snapped);
        // Grid nodes sit on absolute multiples of the spacing.
        let on_grid = |v: f64| ((v / area.spacing).round() * area.spacing - v).abs() < 1e-9;
        prop_assert!(on_grid(snapped[0]) && on_grid(snapped[1]));
    }

    /// Bézier curves interpolate their endpoints and stay inside the
    /// control-point bounding box.
    #[test]
    fn bezier_endpoints_and_hull(
        cps in prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 5),
        s in 0.0..=1.0f64,
    ) {
        let control: [[f64; 2]; 5] =
            [cps[0], cps[1], cps[2], cps[3], cps[4]].map(|(x, y)| [x, y]);
        let start = bezier_point(&control, 0.0).unwrap();
        let end = bezier_point(&control, 1.0).unwrap();
        prop_assert!((start[0] - control[0][0]).abs() < 1e-12);
        prop_assert!((start[1] - control[0][1]).abs() < 1e-12);
        prop_assert!((end[0] - control[4][0]).abs() < 1e-12);
        prop_assert!((end[1] - control[4][1]).abs() < 1e-12);

        let p = bezier_point(&control, s).unwrap();
        for axis in 0..2 {
            let lo = control.iter().map(|c| c[axis]).fold(f64::INFINITY, f64::min);
            let hi = control.iter().map(|c| c[axis]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(p[axis] >= lo - 1e-9 && p[axis] <= hi + 1e-9);
        }
    }

    /// Label-derived seeds differ across labels and bases.
    #[test]
    fn derived_seeds_are_label_sensitive(base in any::<u64>(), idx in 0usize..100) {
        let a = derive_seed(base, &format!("stream-{idx}"));
        let b = derive_seed(base, &format!("stream-{}", idx + 1));
        prop_assert_ne!(a, b);
        prop_assert_eq!(a, derive_seed(base, &format!("stream-{idx}")));
    }
}
