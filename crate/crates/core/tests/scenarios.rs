use proptest::prelude::*;
use setrap_core::field::{find_rf_null, pseudopotential};
use setrap_core::geometry::{build_layout, ShapeKind};
use setrap_core::scenarios::*;
use setrap_core::solver::{ShimDirection, SolveStatus};
use setrap_core::Order;

#[test]
fn characterization_obeys_laplace_and_symmetry() {
    let config = ScenarioConfig::default();
    for kind in ShapeKind::ALL {
        let c = characterize_unit(kind, &config).unwrap();
        let (xx, yy, zz) = (c.curve(Quantity::D2xx), c.curve(Quantity::D2yy), c.curve(Quantity::D2zz));
        for i in 0..xx.values.len() {
            let scale = xx.values[i].abs() + yy.values[i].abs() + zz.values[i].abs();
            let trace = xx.values[i] + yy.values[i] + zz.values[i];
            assert!(trace.abs() <= 1e-9 * scale, "{kind} sample {i}");
        }
        assert!(c.curve(Quantity::Value).x_prime.windows(2).all(|w| w[1] > w[0]));
    }
}

fn mixed_ratios(odd: Quantity) -> Vec<(ShapeKind, f64)> {
    let config = ScenarioConfig::default();
    ShapeKind::ALL[1..]
        .iter()
        .map(|&k| {
            let c = characterize_unit(k, &config).unwrap();
            (k, c.peak(odd) / c.peak(Quantity::D2xz))
        })
        .collect()
}

#[test]
fn xy_rotations_are_costlier_than_xz() {
    for (kind, ratio) in mixed_ratios(Quantity::D2xy) {
        assert!(ratio < 1.0 / 3.0, "{kind}: peak d2xy / d2xz = {ratio:.3}");
    }
}

#[test]
fn yz_rotations_are_costlier_than_xz() {
    let failing: Vec<String> = mixed_ratios(Quantity::D2yz)
        .into_iter()
        .filter(|(_, r)| *r >= 1.0 / 3.0)
        .map(|(k, r)| format!("{k} {r:.3}"))
        .collect();
    assert!(failing.is_empty(), "peak d2yz / d2xz >= 1/3: {failing:?}");
}

#[test]
fn transport_waveforms_are_mirror_symmetric() {
    let config = ScenarioConfig::default();
    for kind in [ShapeKind::Rect, ShapeKind::RectSplit, ShapeKind::Triangular, ShapeKind::T] {
        let layout = build_layout(kind, &config.layout).unwrap();
        let perm = layout.x_mirror_permutation().expect("mirror-symmetric tiling");
        let t = run_transport_on(&layout, &config).unwrap();
        let n = t.steps.len();
        let scale = t.max_abs_voltage;
        let mut worst = 0.0f64;
        for s in 0..n {
            let here = &t.solution.voltages[s];
            let there = &t.solution.voltages[n - 1 - s];
            for (e, &p) in perm.iter().enumerate() {
                worst = worst.max((here[e] - there[p]).abs());
            }
        }
        assert!(worst <= 1e-4 * scale, "{kind}: asymmetry {worst:e} V of {scale} V");
    }
}

#[test]
fn transport_verification_and_report_plumbing() {
    let config = ScenarioConfig::default();
    let t = run_transport(ShapeKind::Triangular, &config).unwrap();
    assert_eq!(t.steps.len(), 101);
    for s in &t.steps {
        assert!((s.axial_frequency / config.axial_frequency - 1.0).abs() < 1e-3);
        assert!(s.depth.depth <= s.depth.left && s.depth.depth <= s.depth.right);
    }
    assert_eq!(t.center_depth, t.steps[50].depth);
    let report = run_report(std::slice::from_ref(&t), &[]);
    assert_eq!(report.shapes, vec![ShapeKind::Triangular]);
    assert_eq!(report.rows.len(), 3);
    assert_eq!(report.rows[0].cells[0], Some(t.max_abs_voltage));
    assert_eq!(report.rows[1].cells[0], Some(1e3 * t.center_depth.depth));
    assert_eq!(report.rows[2].cells[0], Some(1e3 * t.min_depth));
}

#[test]
fn shim_solutions_meet_their_targets() {
    let config = ScenarioConfig::default();
    for kind in [ShapeKind::Rect, ShapeKind::Triangular, ShapeKind::L] {
        let layout = build_layout(kind, &config.layout).unwrap();
        let r = find_rf_null(&layout, 0.0).unwrap();
        let psd = pseudopotential(&layout, &config.drive, &config.species, &r, Order::Hessian).unwrap();
        let radial = psd.hessian[(1, 1)].abs().max(psd.hessian[(2, 2)].abs());
        for dir in ShimDirection::ALL {
            let s = run_shims_on(&layout, dir, &config).unwrap();
            if !s.status.is_feasible() {
                assert_eq!((kind, dir, s.status), (ShapeKind::Rect, ShimDirection::Y, ShimStatus::Unavailable));
                continue;
            }
            assert_eq!(s.checks.len(), s.positions.len());
            for c in &s.checks {
                for axis in 0..3 {
                    let want = if axis == dir.axis() { config.shim_field } else { 0.0 };
                    assert!((c.field[axis] - want).abs() < 0.1, "{kind} {dir}: E = {:?}", c.field);
                }
                for d in c.curvatures {
                    assert!(d.abs() < 1e-3 * radial, "{kind} {dir}: {d:e} vs {radial:e}");
                }
            }
        }
    }
}

#[test]
fn shim_voltages_scale_with_the_field() {
    let mut config = ScenarioConfig::default();
    config.voltage_limit = None;
    let one = run_shims(ShapeKind::Triangular, ShimDirection::X, &config).unwrap();
    config.shim_field *= 2.0;
    let two = run_shims(ShapeKind::Triangular, ShimDirection::X, &config).unwrap();
    let (a, b) = (one.solution.unwrap(), two.solution.unwrap());
    assert_eq!(b.status, SolveStatus::Optimal);
    assert!(b.max_abs_voltage <= 2.0 * a.max_abs_voltage + 1e-6);
    assert!(b.max_abs_voltage >= 2.0 * a.max_abs_voltage * (1.0 - 1e-4));
}

#[test]
fn shim_positions_cover_one_width() {
    let config = ScenarioConfig::default();
    let layout = build_layout(ShapeKind::Z, &config.layout).unwrap();
    let p = shim_positions(&layout, &config).unwrap();
    let w = layout.shape.unwrap().axial_width;
    assert_eq!(p.len(), (w / config.shim_pitch + 1e-9).floor() as usize + 1);
    assert_eq!(p[0], -0.5 * w);
}

#[test]
fn report_marks_unavailable_shims() {
    let config = ScenarioConfig::default();
    let shims: Vec<_> = ShimDirection::ALL
        .iter()
        .map(|&d| run_shims(ShapeKind::Rect, d, &config).unwrap())
        .collect();
    let r = run_report(&[], &shims);
    assert_eq!(r.rows.len(), 6);
    assert_eq!(r.rows[4].cells, vec![None]);
    assert!(r.to_text().lines().nth(5).unwrap().contains(" -"));
    assert_eq!(r.rows[3].cells[0], shims[0].max_abs_voltage);
}

proptest! {
    #[test]
    fn depth_ignores_a_constant_offset(
        coeffs in prop::collection::vec(-1e3f64..1e3, 5),
        offset in -1e3f64..1e3,
        x0 in -100e-6f64..100e-6,
    ) {
        let phi = |x: f64| {
            let u = (x - x0) / 100e-6;
            coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c)
        };
        let a = depth_from_profile(|x| Ok(phi(x)), x0, 150e-6, 1e-6, 1.0).unwrap();
        let b = depth_from_profile(|x| Ok(phi(x) + offset), x0, 150e-6, 1e-6, 1.0).unwrap();
        let scale = coeffs.iter().map(|c| c.abs()).sum::<f64>() * 1.5f64.powi(4) + offset.abs();
        prop_assert!((a.depth - b.depth).abs() <= 1e-12 * scale);
        prop_assert!((a.left - b.left).abs() <= 1e-12 * scale);
    }
}
