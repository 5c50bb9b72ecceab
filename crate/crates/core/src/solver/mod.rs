//! Constraint assembly and the L1-regularized voltage program.
//!
//! Voltages of the active electrodes at every step are found by
//!
//! ```text
//! min  w0 * sum |V|  +  w2 * sum |second difference of V along the steps|
//! s.t. per-step equality constraints,  |V| <= V_max
//! ```
//!
//! solved jointly over all steps. Each step is first checked for feasibility
//! with an exact phase-1 simplex, and the joint program is then solved with
//! an interior-point method.

mod ipm;
mod simplex;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{dc_basis, pseudopotential, unit_field, FieldSample, Order};
use crate::geometry::TrapLayout;
use crate::units::{EvalPoint, IonSpecies, RfDrive};

/// Relative to the largest interior-point tolerance: how close to the bound
/// counts as saturated.
const SATURATION_FACTOR: f64 = 10.0;

/// One linear equation on the active-electrode voltages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    /// Derivative of each active electrode's unit potential, in active order.
    pub coefficients: Vec<f64>,
    pub target: f64,
    pub label: String,
}

impl LinearConstraint {
    pub fn new(label: impl Into<String>, coefficients: Vec<f64>, target: f64) -> Self {
        Self {
            coefficients,
            target,
            label: label.into(),
        }
    }

    /// `sum(c_i V_i) - target`
    pub fn residual(&self, voltages: &[f64]) -> f64 {
        self.coefficients.iter().zip(voltages).map(|(c, v)| c * v).sum::<f64>() - self.target
    }

    fn norm(&self) -> f64 {
        self.coefficients.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// Constraints of one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSpec {
    pub point: EvalPoint,
    /// Indices into the layout's DC electrodes.
    pub active: Vec<usize>,
    pub constraints: Vec<LinearConstraint>,
}

/// Operand of the second-difference penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    /// Each electrode's voltage along the step index; all steps are solved
    /// as one program.
    #[default]
    Steps,
    /// Neighbouring active electrodes (in layout order) within each step;
    /// steps decouple.
    Electrodes,
    /// No penalty beyond `w0 * sum |V|`.
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSpec {
    pub electrode_ids: Vec<String>,
    pub steps: Vec<StepSpec>,
    /// Symmetric bound on every voltage; `None` removes it.
    pub voltage_limit: Option<f64>,
    pub w0: f64,
    pub w2: f64,
    pub smoothing: Smoothing,
    pub tolerance: f64,
}

impl SolveSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.electrode_ids.len();
        if !(self.w0.is_finite() && self.w0 > 0.0) {
            return Err(Error::validation("w0", "must be positive"));
        }
        if !(self.w2.is_finite() && self.w2 >= 0.0) {
            return Err(Error::validation("w2", "must be non-negative"));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(Error::validation("tolerance", "must lie in (0, 1)"));
        }
        if let Some(u) = self.voltage_limit {
            if !(u.is_finite() && u > 0.0) {
                return Err(Error::validation("voltage_limit", "must be positive"));
            }
        }
        for (s, step) in self.steps.iter().enumerate() {
            let mut seen = vec![false; n];
            for &i in &step.active {
                if i >= n {
                    return Err(Error::validation(
                        "active",
                        format!("step {s}: electrode index {i} out of range"),
                    ));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::validation("active", format!("step {s}: duplicate electrode {i}")));
                }
            }
            if step.active.len() < step.constraints.len() {
                return Err(Error::validation(
                    "active",
                    format!(
                        "step {s}: {} active electrodes for {} constraints",
                        step.active.len(),
                        step.constraints.len()
                    ),
                ));
            }
            for c in &step.constraints {
                if c.coefficients.len() != step.active.len() {
                    return Err(Error::validation(
                        "constraint",
                        format!("step {s}: `{}` has {} coefficients", c.label, c.coefficients.len()),
                    ));
                }
                if !(c.target.is_finite() && c.coefficients.iter().all(|x| x.is_finite())) {
                    return Err(Error::validation("constraint", format!("step {s}: `{}` is not finite", c.label)));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    BoundSaturated,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "OPTIMAL",
            SolveStatus::Infeasible => "INFEASIBLE",
            SolveStatus::BoundSaturated => "BOUND_SATURATED",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageSolution {
    pub electrode_ids: Vec<String>,
    /// `voltages[step][electrode]`; inactive electrodes are exactly 0.
    pub voltages: Vec<Vec<f64>>,
    pub status: SolveStatus,
    /// `w0 * sum|V| + w2 * sum|second difference|` at the solution.
    pub objective: f64,
    pub max_abs_voltage: f64,
    /// Per step and constraint, in the constraint's own units.
    pub residuals: Vec<Vec<f64>>,
    /// Residuals of the rows scaled to unit coefficient norm (volts).
    pub scaled_residuals: Vec<Vec<f64>>,
    /// Steps that failed the phase-1 test, with their infeasibility.
    pub infeasible_steps: Vec<(usize, f64)>,
    pub iterations: usize,
}

impl VoltageSolution {
    /// Electrode id to voltage at one step.
    pub fn step_map(&self, step: usize) -> BTreeMap<String, f64> {
        self.electrode_ids
            .iter()
            .cloned()
            .zip(self.voltages[step].iter().copied())
            .collect()
    }

    pub fn is_feasible(&self) -> bool {
        self.status != SolveStatus::Infeasible
    }

    pub fn max_scaled_residual(&self) -> f64 {
        self.scaled_residuals
            .iter()
            .flatten()
            .fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Exact per-step feasibility test. Returns the normalized infeasibility
/// (0 when feasible) of each step.
pub fn step_infeasibility(spec: &SolveSpec) -> Vec<f64> {
    spec.steps
        .iter()
        .map(|step| {
            let (rows, rhs) = scaled_rows(step);
            if rows.is_empty() {
                return if rhs.iter().any(|b| *b != 0.0) { f64::INFINITY } else { 0.0 };
            }
            let r = simplex::phase_one(&rows, &rhs, step.active.len(), spec.voltage_limit);
            r.infeasibility
        })
        .collect()
}

/// Rows scaled to unit norm. Zero rows are kept so that a nonzero target
/// on them shows up as infeasibility.
fn scaled_rows(step: &StepSpec) -> (Vec<Vec<f64>>, Vec<f64>) {
    step.constraints
        .iter()
        .map(|c| {
            let norm = c.norm();
            if norm == 0.0 {
                (c.coefficients.clone(), c.target)
            } else {
                (c.coefficients.iter().map(|x| x / norm).collect(), c.target / norm)
            }
        })
        .unzip()
}

fn infeasibility_threshold(step: &StepSpec, tol: f64) -> f64 {
    let (_, rhs) = scaled_rows(step);
    tol * (1.0 + rhs.iter().fold(0.0f64, |m, b| m.max(b.abs())))
}

/// Solves the joint L1 program.
pub fn solve_l1(spec: &SolveSpec) -> Result<VoltageSolution> {
    spec.validate()?;
    let n_el = spec.electrode_ids.len();
    let n_steps = spec.steps.len();

    let mut infeasible_steps = Vec::new();
    for (s, inf) in step_infeasibility(spec).into_iter().enumerate() {
        if inf > infeasibility_threshold(&spec.steps[s], spec.tolerance) {
            infeasible_steps.push((s, inf));
        }
    }
    if !infeasible_steps.is_empty() {
        return Ok(VoltageSolution {
            electrode_ids: spec.electrode_ids.clone(),
            voltages: vec![vec![0.0; n_el]; n_steps],
            status: SolveStatus::Infeasible,
            objective: 0.0,
            max_abs_voltage: 0.0,
            residuals: spec.steps.iter().map(|st| st.constraints.iter().map(|c| -c.target).collect()).collect(),
            scaled_residuals: spec
                .steps
                .iter()
                .map(|st| scaled_rows(st).1.iter().map(|b| -b).collect())
                .collect(),
            infeasible_steps,
            iterations: 0,
        });
    }

    // one variable per (step, active electrode)
    let mut var_of = vec![vec![usize::MAX; n_el]; n_steps];
    let mut n = 0;
    for e in 0..n_el {
        for (s, step) in spec.steps.iter().enumerate() {
            if step.active.contains(&e) {
                var_of[s][e] = n;
                n += 1;
            }
        }
    }

    let mut eq = Vec::new();
    let mut rhs = Vec::new();
    for (s, step) in spec.steps.iter().enumerate() {
        let (rows, b) = scaled_rows(step);
        for (row, bi) in rows.into_iter().zip(b) {
            if row.iter().all(|x| *x == 0.0) {
                continue;
            }
            eq.push(ipm::SparseRow {
                idx: step.active.iter().map(|&e| var_of[s][e]).collect(),
                val: row,
            });
            rhs.push(bi);
        }
    }

    let diff = difference_rows(spec, &var_of);
    let groups = coupled_groups(n, &diff);

    let (v, iterations) = if n == 0 || eq.is_empty() {
        (vec![0.0; n], 0)
    } else {
        let scale = spec.w0.max(if diff.is_empty() { 0.0 } else { spec.w2 });
        let problem = ipm::Problem {
            n,
            groups,
            eq,
            rhs,
            cost_abs: spec.w0 / scale,
            cost_diff: spec.w2 / scale,
            diff,
            bound: spec.voltage_limit,
            tol: spec.tolerance,
        };
        let sol = ipm::solve(&problem)?;
        (sol.v, sol.iterations)
    };

    let mut voltages = vec![vec![0.0; n_el]; n_steps];
    for s in 0..n_steps {
        for e in 0..n_el {
            let idx = var_of[s][e];
            if idx != usize::MAX {
                let mut x = v[idx];
                if let Some(u) = spec.voltage_limit {
                    x = x.clamp(-u, u);
                }
                voltages[s][e] = x;
            }
        }
    }
    let max_abs_voltage = voltages.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    let status = match spec.voltage_limit {
        Some(u) if max_abs_voltage >= u * (1.0 - SATURATION_FACTOR * spec.tolerance) => SolveStatus::BoundSaturated,
        _ => SolveStatus::Optimal,
    };
    let objective = objective(spec, &voltages);
    let (residuals, scaled_residuals) = residuals(spec, &voltages);
    Ok(VoltageSolution {
        electrode_ids: spec.electrode_ids.clone(),
        voltages,
        status,
        objective,
        max_abs_voltage,
        residuals,
        scaled_residuals,
        infeasible_steps,
        iterations,
    })
}

/// Second-difference rows over the variables. Inactive entries are pinned
/// to 0 and simply drop out of a row.
fn difference_rows(spec: &SolveSpec, var_of: &[Vec<usize>]) -> Vec<ipm::SparseRow> {
    let mut rows = Vec::new();
    if spec.w2 == 0.0 {
        return rows;
    }
    let mut push = |entries: [usize; 3]| {
        let mut row = ipm::SparseRow { idx: Vec::new(), val: Vec::new() };
        for (v, c) in entries.into_iter().zip([1.0, -2.0, 1.0]) {
            if v != usize::MAX {
                row.idx.push(v);
                row.val.push(c);
            }
        }
        if !row.idx.is_empty() {
            rows.push(row);
        }
    };
    match spec.smoothing {
        Smoothing::Off => {}
        Smoothing::Steps => {
            let n_steps = var_of.len();
            for e in 0..spec.electrode_ids.len() {
                for s in 1..n_steps.saturating_sub(1) {
                    push([var_of[s - 1][e], var_of[s][e], var_of[s + 1][e]]);
                }
            }
        }
        Smoothing::Electrodes => {
            for (s, step) in spec.steps.iter().enumerate() {
                let mut order = step.active.clone();
                order.sort_unstable();
                for w in order.windows(3) {
                    push([var_of[s][w[0]], var_of[s][w[1]], var_of[s][w[2]]]);
                }
            }
        }
    }
    rows
}

/// Connected components of the variables under the difference rows, each
/// sorted ascending, ordered by smallest member.
fn coupled_groups(n: usize, diff: &[ipm::SparseRow]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for row in diff {
        for w in row.idx.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Objective of the program at the given full voltage table.
pub fn objective(spec: &SolveSpec, voltages: &[Vec<f64>]) -> f64 {
    let l1: f64 = voltages.iter().flatten().map(|v| v.abs()).sum();
    let mut smooth = 0.0;
    match spec.smoothing {
        Smoothing::Off => {}
        Smoothing::Steps => {
            for w in voltages.windows(3) {
                for e in 0..spec.electrode_ids.len() {
                    smooth += (w[0][e] - 2.0 * w[1][e] + w[2][e]).abs();
                }
            }
        }
        Smoothing::Electrodes => {
            for (step, v) in spec.steps.iter().zip(voltages) {
                let mut order = step.active.clone();
                order.sort_unstable();
                for w in order.windows(3) {
                    smooth += (v[w[0]] - 2.0 * v[w[1]] + v[w[2]]).abs();
                }
            }
        }
    }
    spec.w0 * l1 + spec.w2 * smooth
}

/// Raw and unit-row-scaled residuals of every constraint.
pub fn residuals(spec: &SolveSpec, voltages: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut raw = Vec::with_capacity(spec.steps.len());
    let mut scaled = Vec::with_capacity(spec.steps.len());
    for (step, all) in spec.steps.iter().zip(voltages) {
        let active: Vec<f64> = step.active.iter().map(|&e| all[e]).collect();
        let r: Vec<f64> = step.constraints.iter().map(|c| c.residual(&active)).collect();
        scaled.push(
            step.constraints
                .iter()
                .zip(&r)
                .map(|(c, r)| {
                    let norm = c.norm();
                    if norm == 0.0 {
                        *r
                    } else {
                        r / norm
                    }
                })
                .collect(),
        );
        raw.push(r);
    }
    (raw, scaled)
}

/// The `k` DC electrodes with the largest unit potential at `r`.
///
/// Ties go to the electrode whose centroid is axially closer to `r`, then
/// to the smaller id.
pub fn select_active(layout: &TrapLayout, r: &EvalPoint, k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::validation("k_active", "must be at least 1"));
    }
    let mut ranked = Vec::with_capacity(layout.dc_electrodes.len());
    for (i, p) in layout.dc_electrodes.iter().enumerate() {
        let value = unit_field(p, r, Order::Value)?.value;
        ranked.push((i, value, (p.centroid()[0] - r.x).abs()));
    }
    ranked.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then(a.2.total_cmp(&b.2))
            .then_with(|| layout.dc_electrodes[a.0].id().cmp(layout.dc_electrodes[b.0].id()))
    });
    Ok(ranked.into_iter().take(k).map(|(i, _, _)| i).collect())
}

/// Whether every DC electrode is its own mirror image under y -> -y, so
/// that all y-odd derivatives vanish on the axis.
pub fn y_symmetric_electrodes(layout: &TrapLayout) -> bool {
    let tol = 1e-12 * layout.rf_outer_half_extent;
    layout
        .dc_electrodes
        .iter()
        .all(|p| p.mirrored_y().same_outline(p, tol))
}

const X: usize = 0;
const Y: usize = 1;
const Z: usize = 2;

fn row(label: &str, basis: &[FieldSample], axes: &[usize], target: f64) -> LinearConstraint {
    LinearConstraint::new(label, basis.iter().map(|b| b.derivative(axes)).collect(), target)
}

/// Transport constraints at `r`: vanishing total field, vanishing mixed
/// curvatures and the requested axial curvature of the total potential.
///
/// The pseudopotential contribution is moved to the targets. Layouts whose
/// electrodes are all y-symmetric lose the y-odd rows, which would read
/// `0 = 0`.
pub fn assemble_transport_constraints(
    layout: &TrapLayout,
    drive: &RfDrive,
    species: &IonSpecies,
    r: &EvalPoint,
    active: &[usize],
    axial_curvature_target: f64,
) -> Result<Vec<LinearConstraint>> {
    let basis = dc_basis(layout, active, r, Order::Hessian)?;
    let psd = pseudopotential(layout, drive, species, r, Order::Hessian)?;
    let drop_y = y_symmetric_electrodes(layout);
    let rows: [(&str, &[usize], f64, bool); 7] = [
        ("d/dx", &[X], 0.0, false),
        ("d/dy", &[Y], 0.0, true),
        ("d/dz", &[Z], 0.0, false),
        ("d2/dxdy", &[X, Y], 0.0, true),
        ("d2/dxdz", &[X, Z], 0.0, false),
        ("d2/dydz", &[Y, Z], 0.0, true),
        ("d2/dx2", &[X, X], axial_curvature_target, false),
    ];
    Ok(rows
        .iter()
        .filter(|(_, _, _, y_odd)| !(drop_y && *y_odd))
        .map(|(label, axes, target, _)| row(label, &basis, axes, target - psd.derivative(axes)))
        .collect())
}

/// Axis of a shim field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShimDirection {
    X,
    Y,
    Z,
}

impl ShimDirection {
    pub const ALL: [ShimDirection; 3] = [ShimDirection::X, ShimDirection::Y, ShimDirection::Z];

    pub fn axis(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ShimDirection::X => "x",
            ShimDirection::Y => "y",
            ShimDirection::Z => "z",
        }
    }
}

impl fmt::Display for ShimDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShimDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x" => Ok(ShimDirection::X),
            "y" => Ok(ShimDirection::Y),
            "z" => Ok(ShimDirection::Z),
            _ => Err(Error::validation("direction", format!("`{s}` is not one of x, y, z"))),
        }
    }
}

/// Shim constraints on the static potential alone: the electric field
/// `E = -grad Phi` equals `field_target` along `direction` and vanishes
/// along the other axes, and every curvature except d2/dz2 vanishes.
pub fn assemble_shim_constraints(
    layout: &TrapLayout,
    r: &EvalPoint,
    active: &[usize],
    direction: ShimDirection,
    field_target: f64,
) -> Result<Vec<LinearConstraint>> {
    let drop_y = y_symmetric_electrodes(layout);
    if drop_y && direction == ShimDirection::Y {
        return Err(Error::StructurallyUnavailable {
            shape: layout.shape_kind().map_or("layout".to_string(), |k| k.name().to_string()),
            direction: direction.name().to_string(),
        });
    }
    let basis = dc_basis(layout, active, r, Order::Hessian)?;
    let slope = |axis: usize| if axis == direction.axis() { -field_target } else { 0.0 };
    let rows: [(&str, &[usize], f64, bool); 8] = [
        ("d/dx", &[X], slope(X), false),
        ("d/dy", &[Y], slope(Y), true),
        ("d/dz", &[Z], slope(Z), false),
        ("d2/dx2", &[X, X], 0.0, false),
        ("d2/dy2", &[Y, Y], 0.0, false),
        ("d2/dxdy", &[X, Y], 0.0, true),
        ("d2/dxdz", &[X, Z], 0.0, false),
        ("d2/dydz", &[Y, Z], 0.0, true),
    ];
    Ok(rows
        .iter()
        .filter(|(_, _, _, y_odd)| !(drop_y && *y_odd))
        .map(|(label, axes, target, _)| row(label, &basis, axes, *target))
        .collect())
}

/// Ratio of smallest to largest singular value of a step's constraint
/// matrix after scaling every row to unit norm (1 for an empty step).
pub fn scaled_condition(step: &StepSpec) -> f64 {
    let (rows, _) = scaled_rows(step);
    if rows.is_empty() || step.active.is_empty() {
        return 1.0;
    }
    let a = nalgebra::DMatrix::from_fn(rows.len(), step.active.len(), |i, j| rows[i][j]);
    let sv = a.singular_values();
    let max = sv.max();
    if max == 0.0 {
        0.0
    } else {
        sv.min() / max
    }
}
