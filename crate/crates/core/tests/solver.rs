use nalgebra::DMatrix;
use proptest::prelude::*;
use setrap_core::field::find_rf_null;
use setrap_core::geometry::{build_layout, LayoutConfig, ShapeKind};
use setrap_core::solver::*;
use setrap_core::units::{angular, curvature_for_frequency, species_constants, RfDrive};
use setrap_core::{Error, EvalPoint};

fn spec(n_el: usize, steps: Vec<StepSpec>, limit: Option<f64>, smoothing: Smoothing) -> SolveSpec {
    SolveSpec {
        electrode_ids: (0..n_el).map(|i| format!("e{i}")).collect(),
        steps,
        voltage_limit: limit,
        w0: 1e-6,
        w2: 2e-6,
        smoothing,
        tolerance: 1e-6,
    }
}

fn single(coefficient: f64, target: f64, limit: Option<f64>) -> SolveSpec {
    spec(
        1,
        vec![StepSpec {
            point: EvalPoint::new(0.0, 0.0, 1e-4),
            active: vec![0],
            constraints: vec![LinearConstraint::new("c", vec![coefficient], target)],
        }],
        limit,
        Smoothing::Steps,
    )
}

#[test]
fn no_constraints_gives_zero() {
    let s = spec(
        3,
        vec![StepSpec {
            point: EvalPoint::new(0.0, 0.0, 1e-4),
            active: vec![0, 1, 2],
            constraints: vec![],
        }],
        Some(10.0),
        Smoothing::Steps,
    );
    let sol = solve_l1(&s).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!(sol.voltages[0].iter().all(|v| *v == 0.0));
}

#[test]
fn single_equation_is_solved_exactly() {
    let sol = solve_l1(&single(1.0, 2.0, Some(10.0))).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.voltages[0][0] - 2.0).abs() < 1e-6, "{:?}", sol.voltages);
}

#[test]
fn target_beyond_bound_is_infeasible() {
    let sol = solve_l1(&single(1.0, 20.0, Some(10.0))).unwrap();
    assert_eq!(sol.status, SolveStatus::Infeasible);
    assert_eq!(sol.infeasible_steps.len(), 1);
    assert!((sol.infeasible_steps[0].1 - 10.0).abs() < 1e-9);
    let free = solve_l1(&single(1.0, 20.0, None)).unwrap();
    assert!((free.voltages[0][0] - 20.0).abs() < 1e-5);
}

#[test]
fn target_on_bound_saturates() {
    let sol = solve_l1(&single(1.0, 10.0, Some(10.0))).unwrap();
    assert_eq!(sol.status, SolveStatus::BoundSaturated);
}

#[test]
fn invalid_specs_are_rejected() {
    let mut s = single(1.0, 1.0, Some(10.0));
    s.w0 = 0.0;
    assert!(matches!(solve_l1(&s), Err(Error::Validation { .. })));
    let mut s = single(1.0, 1.0, Some(10.0));
    s.steps[0].active = vec![3];
    assert!(matches!(solve_l1(&s), Err(Error::Validation { .. })));
    let mut s = single(1.0, 1.0, Some(10.0));
    s.steps[0].constraints.push(LinearConstraint::new("d", vec![2.0], 1.0));
    assert!(matches!(solve_l1(&s), Err(Error::Validation { .. })));
}

#[test]
fn huge_k_selects_every_electrode() {
    let layout = build_layout(ShapeKind::Triangular, &LayoutConfig::default()).unwrap();
    let r = find_rf_null(&layout, 0.0).unwrap();
    let mut all = select_active(&layout, &r, 1_000_000).unwrap();
    all.sort_unstable();
    assert_eq!(all, (0..layout.dc_electrodes.len()).collect::<Vec<_>>());
}

#[test]
fn split_rectangles_are_selected_in_pairs() {
    let layout = build_layout(ShapeKind::RectSplit, &LayoutConfig::default()).unwrap();
    let r = find_rf_null(&layout, 0.0).unwrap();
    let active = select_active(&layout, &r, 12).unwrap();
    let mut columns: Vec<i64> = active
        .iter()
        .map(|&i| (layout.dc_electrodes[i].centroid()[0] * 1e9).round() as i64)
        .collect();
    columns.sort_unstable();
    columns.dedup();
    assert_eq!(columns.len(), 6);
    for c in &columns {
        let n = active
            .iter()
            .filter(|&&i| (layout.dc_electrodes[i].centroid()[0] * 1e9).round() as i64 == *c)
            .count();
        assert_eq!(n, 2);
    }
}

#[test]
fn selection_is_mirror_symmetric() {
    for kind in [ShapeKind::Rect, ShapeKind::RectSplit, ShapeKind::L, ShapeKind::Z] {
        let layout = build_layout(kind, &LayoutConfig::default()).unwrap();
        let Some(perm) = layout.x_mirror_permutation() else { continue };
        for x in [37e-6, 120e-6] {
            let a = select_active(&layout, &find_rf_null(&layout, x).unwrap(), 12).unwrap();
            let b = select_active(&layout, &find_rf_null(&layout, -x).unwrap(), 12).unwrap();
            let mut mapped: Vec<usize> = a.iter().map(|&i| perm[i]).collect();
            let mut b = b;
            mapped.sort_unstable();
            b.sort_unstable();
            assert_eq!(mapped, b, "{kind} at {x}");
        }
    }
}

#[test]
fn constraint_counts() {
    let species = species_constants("9Be+").unwrap();
    let drive = RfDrive::new(75.0, angular(88.191e6)).unwrap();
    let target = curvature_for_frequency(&species, angular(1e6));
    for kind in ShapeKind::ALL {
        let layout = build_layout(kind, &LayoutConfig::default()).unwrap();
        let r = find_rf_null(&layout, 0.0).unwrap();
        let active = select_active(&layout, &r, 12).unwrap();
        let t = assemble_transport_constraints(&layout, &drive, &species, &r, &active, target).unwrap();
        let symmetric = kind == ShapeKind::Rect;
        assert_eq!(t.len(), if symmetric { 4 } else { 7 }, "{kind}");
        assert_eq!(y_symmetric_electrodes(&layout), symmetric, "{kind}");
        for dir in ShimDirection::ALL {
            let s = assemble_shim_constraints(&layout, &r, &active, dir, 100.0);
            match (symmetric, dir) {
                (true, ShimDirection::Y) => {
                    assert!(matches!(s, Err(Error::StructurallyUnavailable { .. })))
                }
                (true, _) => assert_eq!(s.unwrap().len(), 5),
                (false, _) => assert_eq!(s.unwrap().len(), 8),
            }
        }
    }
}

#[test]
fn shim_target_sign_follows_field() {
    let layout = build_layout(ShapeKind::Triangular, &LayoutConfig::default()).unwrap();
    let r = find_rf_null(&layout, 0.0).unwrap();
    let active = select_active(&layout, &r, 12).unwrap();
    let rows = assemble_shim_constraints(&layout, &r, &active, ShimDirection::X, 100.0).unwrap();
    // E = -grad Phi
    assert_eq!(rows[0].target, -100.0);
    assert!(rows[1..].iter().all(|c| c.target == 0.0));
}

/// Orthonormal basis of the null space of `a` (columns).
fn null_space(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let n = a.ncols();
    let padded = if a.nrows() < n {
        let mut p = DMatrix::zeros(n, n);
        p.rows_mut(0, a.nrows()).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.unwrap();
    let max = svd.singular_values.max();
    (0..n)
        .filter(|&i| svd.singular_values[i] <= 1e-10 * max)
        .map(|i| vt.row(i).iter().copied().collect())
        .collect()
}

#[derive(Debug, Clone)]
struct Case {
    n_el: usize,
    steps: Vec<(Vec<Vec<f64>>, Vec<f64>)>,
}

fn case() -> impl Strategy<Value = Case> {
    (3usize..6, 1usize..4, 1usize..3).prop_flat_map(|(n_el, n_steps, m)| {
        let m = m.min(n_el - 1);
        let step = (
            prop::collection::vec(prop::collection::vec(-1.0f64..1.0, n_el), m),
            prop::collection::vec(-2.0f64..2.0, n_el),
        )
            .prop_map(|(rows, v)| {
                let b = rows.iter().map(|r| r.iter().zip(&v).map(|(c, x)| c * x).sum()).collect();
                (rows, b)
            });
        prop::collection::vec(step, n_steps).prop_map(move |steps| Case { n_el, steps })
    })
}

fn build(c: &Case, smoothing: Smoothing) -> SolveSpec {
    let steps = c
        .steps
        .iter()
        .map(|(rows, b)| StepSpec {
            point: EvalPoint::new(0.0, 0.0, 1e-4),
            active: (0..c.n_el).collect(),
            constraints: rows
                .iter()
                .zip(b)
                .enumerate()
                .map(|(i, (r, t))| LinearConstraint::new(format!("r{i}"), r.clone(), *t))
                .collect(),
        })
        .collect();
    let mut s = spec(c.n_el, steps, Some(50.0), smoothing);
    s.w0 = 1.0;
    s.w2 = 0.5;
    s
}

fn well_conditioned(c: &Case) -> bool {
    c.steps.iter().all(|(rows, _)| {
        let a = DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
        let sv = a.singular_values();
        sv.min() > 1e-2 * sv.max().max(1e-300)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn residuals_are_within_tolerance(c in case(), mode in prop_oneof![Just(Smoothing::Steps), Just(Smoothing::Electrodes), Just(Smoothing::Off)]) {
        prop_assume!(well_conditioned(&c));
        let s = build(&c, mode);
        let sol = solve_l1(&s).unwrap();
        prop_assert!(sol.is_feasible());
        prop_assert!(sol.max_scaled_residual() < 10.0 * s.tolerance * (1.0 + sol.max_abs_voltage));
        prop_assert!(sol.max_abs_voltage <= 50.0);
    }

    #[test]
    fn no_null_space_move_improves_the_objective(
        c in case(),
        mode in prop_oneof![Just(Smoothing::Steps), Just(Smoothing::Electrodes), Just(Smoothing::Off)],
        dirs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 8), 6),
    ) {
        prop_assume!(well_conditioned(&c));
        let s = build(&c, mode);
        let sol = solve_l1(&s).unwrap();
        let best = objective(&s, &sol.voltages);
        let bases: Vec<Vec<Vec<f64>>> = c.steps.iter().map(|(rows, _)| {
            null_space(&DMatrix::from_fn(rows.len(), c.n_el, |i, j| rows[i][j]))
        }).collect();
        for (trial, coeffs) in dirs.iter().enumerate() {
            for scale in [1e-3, 1e-1, 1.0] {
                let mut v = sol.voltages.clone();
                for (si, basis) in bases.iter().enumerate() {
                    for (k, b) in basis.iter().enumerate() {
                        let a = scale * coeffs[(k + si + trial) % coeffs.len()];
                        for e in 0..c.n_el {
                            v[si][e] += a * b[e];
                        }
                    }
                }
                let other = objective(&s, &v);
                prop_assert!(other >= best - 1e-5 * (1.0 + best), "{other} < {best}");
            }
        }
    }

    #[test]
    fn row_scaling_does_not_change_the_solution(c in case(), factor in 1e-3f64..1e3) {
        prop_assume!(well_conditioned(&c));
        let s = build(&c, Smoothing::Steps);
        let mut scaled = s.clone();
        for step in &mut scaled.steps {
            for row in &mut step.constraints {
                row.coefficients.iter_mut().for_each(|x| *x *= factor);
                row.target *= factor;
            }
        }
        let a = solve_l1(&s).unwrap();
        let b = solve_l1(&scaled).unwrap();
        let oa = objective(&s, &a.voltages);
        let ob = objective(&s, &b.voltages);
        prop_assert!((oa - ob).abs() <= 1e-5 * (1.0 + oa), "{oa} vs {ob}");
    }

    #[test]
    fn solves_are_deterministic(c in case()) {
        let s = build(&c, Smoothing::Steps);
        let a = solve_l1(&s).unwrap();
        let b = solve_l1(&s).unwrap();
        prop_assert_eq!(a, b);
    }
}
