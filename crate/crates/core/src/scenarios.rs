//! End-to-end studies: unit-voltage characterization, transport waveforms,
//! axial trap depth, shim fields and the summary table.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{find_rf_null, static_potential, total_potential, unit_field, FieldSample, Order};
use crate::geometry::{build_layout, LayoutConfig, ShapeKind, TrapLayout};
use crate::solver::{
    assemble_shim_constraints, assemble_transport_constraints, scaled_condition, select_active, solve_l1,
    ShimDirection, Smoothing, SolveSpec, SolveStatus, StepSpec, VoltageSolution,
};
use crate::units::{
    angular, curvature_for_frequency, frequency_for_curvature, species_constants, EvalPoint, IonSpecies, RfDrive,
    ELEMENTARY_CHARGE, MICRON,
};

/// Everything a scenario needs, in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub layout: LayoutConfig,
    pub species: IonSpecies,
    pub drive: RfDrive,
    /// Target axial secular frequency (rad/s).
    pub axial_frequency: f64,
    pub transport_start: f64,
    pub transport_stop: f64,
    pub transport_step: f64,
    pub k_active: usize,
    /// `None` removes the bound.
    pub voltage_limit: Option<f64>,
    pub w0: f64,
    pub w2: f64,
    pub tolerance: f64,
    pub smoothing: Smoothing,
    pub depth_range: f64,
    pub depth_pitch: f64,
    /// Shim field strength (V/m).
    pub shim_field: f64,
    pub shim_pitch: f64,
    pub sweep_half_range: f64,
    pub sweep_pitch: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            layout: LayoutConfig::default(),
            species: species_constants("9Be+").expect("registered species"),
            drive: RfDrive {
                amplitude: 75.0,
                angular_frequency: angular(88.191e6),
            },
            axial_frequency: angular(1e6),
            transport_start: -250.0 * MICRON,
            transport_stop: 250.0 * MICRON,
            transport_step: 5.0 * MICRON,
            k_active: 12,
            voltage_limit: Some(10.0),
            w0: 1e-6,
            w2: 2e-6,
            tolerance: 1e-6,
            smoothing: Smoothing::Steps,
            depth_range: 150.0 * MICRON,
            depth_pitch: 1.0 * MICRON,
            shim_field: 100.0,
            shim_pitch: 1.0 * MICRON,
            sweep_half_range: 150.0 * MICRON,
            sweep_pitch: 1.0 * MICRON,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        let positive = [
            ("axial_frequency", self.axial_frequency),
            ("transport_step", self.transport_step),
            ("depth_range", self.depth_range),
            ("depth_pitch", self.depth_pitch),
            ("shim_pitch", self.shim_pitch),
            ("sweep_half_range", self.sweep_half_range),
            ("sweep_pitch", self.sweep_pitch),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(name, "must be positive"));
            }
        }
        if !(self.transport_start.is_finite() && self.transport_stop.is_finite())
            || self.transport_stop < self.transport_start
        {
            return Err(Error::validation("transport_stop", "must not precede transport_start"));
        }
        if !self.shim_field.is_finite() {
            return Err(Error::validation("shim_field", "must be finite"));
        }
        if self.k_active == 0 {
            return Err(Error::validation("k_active", "must be at least 1"));
        }
        RfDrive::new(self.drive.amplitude, self.drive.angular_frequency)?;
        IonSpecies::new(self.species.name.clone(), self.species.mass, self.species.charge)?;
        if let Some(u) = self.voltage_limit {
            if !(u.is_finite() && u > 0.0) {
                return Err(Error::validation("voltage_limit", "must be positive"));
            }
        }
        Ok(())
    }

    /// Axial positions of the transport steps, start to stop inclusive.
    pub fn transport_positions(&self) -> Vec<f64> {
        grid(self.transport_start, self.transport_stop, self.transport_step)
    }

}

/// `start, start + step, ...` up to `stop` (inclusive within round-off).
/// Points are computed as `start + k step` to avoid accumulating error.
fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| start + k as f64 * step).collect()
}

/// Derivative quantities plotted by the characterization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Value,
    Dx,
    Dy,
    Dz,
    D2xx,
    D2yy,
    D2zz,
    D2xy,
    D2xz,
    D2yz,
}

impl Quantity {
    pub const ALL: [Quantity; 10] = [
        Quantity::Value,
        Quantity::Dx,
        Quantity::Dy,
        Quantity::Dz,
        Quantity::D2xx,
        Quantity::D2yy,
        Quantity::D2zz,
        Quantity::D2xy,
        Quantity::D2xz,
        Quantity::D2yz,
    ];

    pub fn axes(self) -> &'static [usize] {
        match self {
            Quantity::Value => &[],
            Quantity::Dx => &[0],
            Quantity::Dy => &[1],
            Quantity::Dz => &[2],
            Quantity::D2xx => &[0, 0],
            Quantity::D2yy => &[1, 1],
            Quantity::D2zz => &[2, 2],
            Quantity::D2xy => &[0, 1],
            Quantity::D2xz => &[0, 2],
            Quantity::D2yz => &[1, 2],
        }
    }

    /// Column name used in CSV output.
    pub fn label(self) -> &'static str {
        match self {
            Quantity::Value => "value",
            Quantity::Dx => "dx",
            Quantity::Dy => "dy",
            Quantity::Dz => "dz",
            Quantity::D2xx => "d2xx",
            Quantity::D2yy => "d2yy",
            Quantity::D2zz => "d2zz",
            Quantity::D2xy => "d2xy",
            Quantity::D2xz => "d2xz",
            Quantity::D2yz => "d2yz",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterizationCurve {
    pub shape: ShapeKind,
    pub quantity: Quantity,
    /// Axial offset from the electrode centroid (m), ascending.
    pub x_prime: Vec<f64>,
    /// V, V/m or V/m^2.
    pub values: Vec<f64>,
}

/// One electrode of a shape held at -1 V, sampled along the trap axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Characterization {
    pub shape: ShapeKind,
    pub electrode_id: String,
    pub centroid_x: f64,
    /// Ion height of the sweep line (m).
    pub height: f64,
    pub curves: Vec<CharacterizationCurve>,
}

impl Characterization {
    pub fn curve(&self, q: Quantity) -> &CharacterizationCurve {
        self.curves
            .iter()
            .find(|c| c.quantity == q)
            .expect("every quantity is present")
    }

    pub fn peak(&self, q: Quantity) -> f64 {
        self.curve(q).values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Unit-voltage sweep of the electrode nearest to x = 0 along
/// `(x', y = 0, z = h_ion)`.
pub fn characterize_unit(kind: ShapeKind, config: &ScenarioConfig) -> Result<Characterization> {
    config.validate()?;
    characterize_on(&build_layout(kind, &config.layout)?, config)
}

pub fn characterize_on(layout: &TrapLayout, config: &ScenarioConfig) -> Result<Characterization> {
    let kind = layout
        .shape_kind()
        .ok_or_else(|| Error::validation("layout", "characterization needs a catalog shape"))?;
    let height = find_rf_null(layout, 0.0)?.z;
    let poly = layout
        .dc_electrodes
        .iter()
        .min_by(|a, b| {
            a.centroid()[0]
                .abs()
                .total_cmp(&b.centroid()[0].abs())
                .then_with(|| a.id().cmp(b.id()))
        })
        .ok_or_else(|| Error::validation("layout", "no DC electrodes"))?;
    let cx = poly.centroid()[0];
    let x_prime = grid(-config.sweep_half_range, config.sweep_half_range, config.sweep_pitch);
    let samples = x_prime
        .iter()
        .map(|&xp| unit_field(poly, &EvalPoint::new(cx + xp, 0.0, height), Order::Hessian).map(|s| s.scaled(-1.0)))
        .collect::<Result<Vec<FieldSample>>>()?;
    let curves = Quantity::ALL
        .iter()
        .map(|&q| CharacterizationCurve {
            shape: kind,
            quantity: q,
            x_prime: x_prime.clone(),
            values: samples.iter().map(|s| s.derivative(q.axes())).collect(),
        })
        .collect();
    Ok(Characterization {
        shape: kind,
        electrode_id: poly.id().to_string(),
        centroid_x: cx,
        height,
        curves,
    })
}

/// Barrier of an axial potential profile around `x0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapDepth {
    /// min(left, right) in eV.
    pub depth: f64,
    pub left: f64,
    pub right: f64,
}

impl TrapDepth {
    pub fn is_confining(&self) -> bool {
        self.depth > 0.0
    }
}

/// Depth of a profile `phi(x)` (V): the lower of the highest values on
/// either side within `range`, sampled at `pitch`, minus `phi(x0)`, times
/// the charge number.
pub fn depth_from_profile<F>(phi: F, x0: f64, range: f64, pitch: f64, charge_number: f64) -> Result<TrapDepth>
where
    F: Fn(f64) -> Result<f64>,
{
    let n = (range / pitch + 1e-9).floor() as usize;
    if n == 0 {
        return Err(Error::validation("depth_range", "shorter than one sample pitch"));
    }
    let centre = phi(x0)?;
    let mut left = f64::NEG_INFINITY;
    let mut right = f64::NEG_INFINITY;
    for k in 1..=n {
        let d = k as f64 * pitch;
        left = left.max(phi(x0 - d)?);
        right = right.max(phi(x0 + d)?);
    }
    let left = charge_number * (left - centre);
    let right = charge_number * (right - centre);
    Ok(TrapDepth {
        depth: left.min(right),
        left,
        right,
    })
}

/// Axial trap depth of the total potential along the RF null line.
pub fn axial_trap_depth(
    layout: &TrapLayout,
    drive: &RfDrive,
    species: &IonSpecies,
    voltages: &[f64],
    x0: f64,
    range: f64,
    pitch: f64,
) -> Result<TrapDepth> {
    let phi = |x: f64| -> Result<f64> {
        let r = find_rf_null(layout, x)?;
        Ok(total_potential(layout, drive, species, voltages, &r, Order::Value)?.value)
    };
    depth_from_profile(phi, x0, range, pitch, species.charge / ELEMENTARY_CHARGE)
}

/// Re-evaluated total potential at one transport step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportStep {
    pub x: f64,
    pub point: EvalPoint,
    pub active: Vec<String>,
    /// d2/dx2 of the total potential from the solved voltages (V/m^2).
    pub axial_curvature: f64,
    /// Magnitude of the matching secular frequency (rad/s).
    pub axial_frequency: f64,
    /// Total-potential gradient (V/m).
    pub gradient: [f64; 3],
    /// d2/dxdy, d2/dxdz, d2/dydz of the total potential (V/m^2).
    pub mixed: [f64; 3],
    pub depth: TrapDepth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportResult {
    pub shape: ShapeKind,
    pub solution: VoltageSolution,
    pub steps: Vec<TransportStep>,
    pub max_abs_voltage: f64,
    /// Depth at the step closest to x = 0.
    pub center_depth: TrapDepth,
    /// Smallest depth over all steps (eV).
    pub min_depth: f64,
}

impl TransportResult {
    pub fn positions(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.x).collect()
    }
}

/// Transport waveform for a shape: one joint solve over all steps, then a
/// verification pass that re-evaluates the total potential.
pub fn run_transport(kind: ShapeKind, config: &ScenarioConfig) -> Result<TransportResult> {
    config.validate()?;
    let layout = build_layout(kind, &config.layout)?;
    run_transport_on(&layout, config)
}

pub fn run_transport_on(layout: &TrapLayout, config: &ScenarioConfig) -> Result<TransportResult> {
    let kind = layout
        .shape_kind()
        .ok_or_else(|| Error::validation("layout", "transport needs a catalog shape"))?;
    let target = curvature_for_frequency(&config.species, config.axial_frequency);
    let xs = config.transport_positions();
    let steps = xs
        .iter()
        .map(|&x| {
            let r = find_rf_null(layout, x)?;
            let active = select_active(layout, &r, config.k_active)?;
            let constraints =
                assemble_transport_constraints(layout, &config.drive, &config.species, &r, &active, target)?;
            Ok(StepSpec {
                point: r,
                active,
                constraints,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let spec = SolveSpec {
        electrode_ids: layout.dc_ids().map(str::to_string).collect(),
        steps,
        voltage_limit: config.voltage_limit,
        w0: config.w0,
        w2: config.w2,
        smoothing: config.smoothing,
        tolerance: config.tolerance,
    };
    let solution = solve_l1(&spec)?;
    if let Some(&(step, _)) = solution.infeasible_steps.first() {
        return Err(Error::InfeasibleStep {
            step,
            x_um: xs[step] / MICRON,
        });
    }

    let mut steps = Vec::with_capacity(xs.len());
    for ((&x, step), voltages) in xs.iter().zip(&spec.steps).zip(&solution.voltages) {
        let total = total_potential(
            layout,
            &config.drive,
            &config.species,
            voltages,
            &step.point,
            Order::Hessian,
        )?;
        let depth = axial_trap_depth(
            layout,
            &config.drive,
            &config.species,
            voltages,
            x,
            config.depth_range,
            config.depth_pitch,
        )?;
        let h = &total.hessian;
        steps.push(TransportStep {
            x,
            point: step.point,
            active: step.active.iter().map(|&i| spec.electrode_ids[i].clone()).collect(),
            axial_curvature: h[(0, 0)],
            axial_frequency: frequency_for_curvature(&config.species, h[(0, 0)]).omega,
            gradient: [total.gradient[0], total.gradient[1], total.gradient[2]],
            mixed: [h[(0, 1)], h[(0, 2)], h[(1, 2)]],
            depth,
        });
    }
    let center = steps
        .iter()
        .min_by(|a, b| a.x.abs().total_cmp(&b.x.abs()))
        .map(|s| s.depth)
        .ok_or_else(|| Error::validation("transport", "no steps"))?;
    let min_depth = steps.iter().fold(f64::INFINITY, |m, s| m.min(s.depth.depth));
    Ok(TransportResult {
        shape: kind,
        max_abs_voltage: solution.max_abs_voltage,
        solution,
        steps,
        center_depth: center,
        min_depth,
    })
}

/// Outcome class of a shim solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ShimStatus {
    Feasible,
    BoundSaturated,
    /// Infeasible within the voltage limit, feasible without it.
    VoltageLimited,
    /// Infeasible even without a voltage limit, or the constraint matrix is
    /// rank deficient at the solver tolerance.
    Structural,
    /// The electrodes cannot produce this direction at all (mirror symmetry).
    Unavailable,
}

impl ShimStatus {
    pub fn is_feasible(self) -> bool {
        matches!(self, ShimStatus::Feasible | ShimStatus::BoundSaturated)
    }
}

impl fmt::Display for ShimStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShimStatus::Feasible => "FEASIBLE",
            ShimStatus::BoundSaturated => "BOUND_SATURATED",
            ShimStatus::VoltageLimited => "VOLTAGE_LIMITED",
            ShimStatus::Structural => "STRUCTURAL",
            ShimStatus::Unavailable => "UNAVAILABLE",
        })
    }
}

/// Re-evaluated static potential at one shim position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShimCheck {
    /// Electric field `-grad Phi` (V/m).
    pub field: [f64; 3],
    /// d2/dx2, d2/dy2, d2/dxdy, d2/dxdz, d2/dydz (V/m^2).
    pub curvatures: [f64; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShimResult {
    pub shape: ShapeKind,
    pub direction: ShimDirection,
    pub positions: Vec<f64>,
    pub status: ShimStatus,
    /// Solution within the voltage limit (absent when unavailable).
    pub solution: Option<VoltageSolution>,
    /// Largest |V| of the reported solution: the bounded one when feasible,
    /// the unbounded re-solve when only that succeeds.
    pub max_abs_voltage: Option<f64>,
    /// Bound-free re-solve, run only when the bounded one is infeasible.
    pub unbounded: Option<VoltageSolution>,
    /// Smallest scaled condition number over the positions.
    pub min_condition: f64,
    pub checks: Vec<ShimCheck>,
}

impl ShimResult {
    /// Table entry: max |V| for feasible solves, nothing otherwise.
    pub fn table_value(&self) -> Option<f64> {
        if self.status.is_feasible() {
            self.max_abs_voltage
        } else {
            None
        }
    }
}

/// Shim positions: one electrode width starting at -w/2, at the shim pitch.
pub fn shim_positions(layout: &TrapLayout, config: &ScenarioConfig) -> Result<Vec<f64>> {
    let w = layout
        .shape
        .map(|s| s.axial_width)
        .ok_or_else(|| Error::validation("layout", "shims need a catalog shape"))?;
    Ok(grid(-0.5 * w, 0.5 * w, config.shim_pitch))
}

pub fn run_shims(kind: ShapeKind, direction: ShimDirection, config: &ScenarioConfig) -> Result<ShimResult> {
    config.validate()?;
    let layout = build_layout(kind, &config.layout)?;
    run_shims_on(&layout, direction, config)
}

pub fn run_shims_on(layout: &TrapLayout, direction: ShimDirection, config: &ScenarioConfig) -> Result<ShimResult> {
    let kind = layout
        .shape_kind()
        .ok_or_else(|| Error::validation("layout", "shims need a catalog shape"))?;
    let positions = shim_positions(layout, config)?;
    let mut steps = Vec::with_capacity(positions.len());
    for &x in &positions {
        let r = find_rf_null(layout, x)?;
        let active = select_active(layout, &r, config.k_active)?;
        match assemble_shim_constraints(layout, &r, &active, direction, config.shim_field) {
            Ok(constraints) => steps.push(StepSpec {
                point: r,
                active,
                constraints,
            }),
            Err(Error::StructurallyUnavailable { .. }) => {
                return Ok(ShimResult {
                    shape: kind,
                    direction,
                    positions,
                    status: ShimStatus::Unavailable,
                    solution: None,
                    max_abs_voltage: None,
                    unbounded: None,
                    min_condition: 0.0,
                    checks: Vec::new(),
                })
            }
            Err(e) => return Err(e),
        }
    }
    let min_condition = steps.iter().map(scaled_condition).fold(f64::INFINITY, f64::min);
    let mut spec = SolveSpec {
        electrode_ids: layout.dc_ids().map(str::to_string).collect(),
        steps,
        voltage_limit: config.voltage_limit,
        w0: config.w0,
        w2: config.w2,
        smoothing: config.smoothing,
        tolerance: config.tolerance,
    };
    let bounded = solve_l1(&spec)?;
    let (status, reported, unbounded) = match bounded.status {
        SolveStatus::Optimal => (ShimStatus::Feasible, Some(&bounded), None),
        SolveStatus::BoundSaturated => (ShimStatus::BoundSaturated, Some(&bounded), None),
        SolveStatus::Infeasible => {
            spec.voltage_limit = None;
            let free = solve_l1(&spec)?;
            let status = if !free.is_feasible() || min_condition < config.tolerance {
                ShimStatus::Structural
            } else {
                ShimStatus::VoltageLimited
            };
            (status, None, Some(free))
        }
    };
    let max_abs_voltage = reported
        .map(|s| s.max_abs_voltage)
        .or_else(|| unbounded.as_ref().filter(|s| s.is_feasible()).map(|s| s.max_abs_voltage));
    let checked = reported.or(unbounded.as_ref().filter(|s| s.is_feasible()));
    let checks = match checked {
        Some(sol) => spec
            .steps
            .iter()
            .zip(&sol.voltages)
            .map(|(step, v)| {
                let s = static_potential(layout, v, &step.point, Order::Hessian)?;
                let h = &s.hessian;
                Ok(ShimCheck {
                    field: [-s.gradient[0], -s.gradient[1], -s.gradient[2]],
                    curvatures: [h[(0, 0)], h[(1, 1)], h[(0, 1)], h[(0, 2)], h[(1, 2)]],
                })
            })
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    Ok(ShimResult {
        shape: kind,
        direction,
        positions,
        status,
        solution: Some(bounded),
        max_abs_voltage,
        unbounded,
        min_condition,
        checks,
    })
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub unit: String,
    /// One cell per column shape; `None` prints as "-".
    pub cells: Vec<Option<f64>>,
}

/// Summary table: rows of quantities, one column per shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub shapes: Vec<ShapeKind>,
    pub rows: Vec<ReportRow>,
}

/// Builds the summary from whichever results are available. Shapes are
/// ordered as in [`ShapeKind::ALL`]; shim rows appear only when at least one
/// shim result was supplied.
pub fn run_report(transports: &[TransportResult], shims: &[ShimResult]) -> Report {
    let shapes: Vec<ShapeKind> = ShapeKind::ALL
        .into_iter()
        .filter(|k| transports.iter().any(|t| t.shape == *k) || shims.iter().any(|s| s.shape == *k))
        .collect();
    let transport = |k: ShapeKind| transports.iter().find(|t| t.shape == k);
    let mut rows = vec![
        ReportRow {
            label: "transport max|V|".into(),
            unit: "V".into(),
            cells: shapes.iter().map(|&k| transport(k).map(|t| t.max_abs_voltage)).collect(),
        },
        ReportRow {
            label: "axial depth at x0 = 0".into(),
            unit: "meV".into(),
            cells: shapes
                .iter()
                .map(|&k| transport(k).map(|t| 1e3 * t.center_depth.depth))
                .collect(),
        },
        ReportRow {
            label: "axial depth, transport minimum".into(),
            unit: "meV".into(),
            cells: shapes.iter().map(|&k| transport(k).map(|t| 1e3 * t.min_depth)).collect(),
        },
    ];
    if !shims.is_empty() {
        for dir in ShimDirection::ALL {
            if !shims.iter().any(|s| s.direction == dir) {
                continue;
            }
            rows.push(ReportRow {
                label: format!("{dir}-shim max|V|"),
                unit: "V".into(),
                cells: shapes
                    .iter()
                    .map(|&k| {
                        shims
                            .iter()
                            .find(|s| s.shape == k && s.direction == dir)
                            .and_then(ShimResult::table_value)
                    })
                    .collect(),
            });
        }
    }
    Report { shapes, rows }
}

/// Three significant digits, as a plain decimal where that is readable.
pub fn format_cell(v: Option<f64>) -> String {
    match v {
        None => "-".to_string(),
        Some(v) if v == 0.0 => "0".to_string(),
        Some(v) => {
            // round first so 9.9996 prints as 10.0, not 10.00
            let v: f64 = format!("{v:.2e}").parse().expect("formatted float parses");
            let digits = 2 - v.abs().log10().floor() as i32;
            if (0..=6).contains(&digits) {
                format!("{:.*}", digits as usize, v)
            } else if digits < 0 {
                format!("{:.0}", v)
            } else {
                format!("{v:.2e}")
            }
        }
    }
}

impl Report {
    pub fn to_text(&self) -> String {
        let mut header = vec!["quantity".to_string()];
        header.extend(self.shapes.iter().map(|k| k.name().to_string()));
        header.push("unit".to_string());
        let mut table = vec![header];
        for row in &self.rows {
            let mut line = vec![row.label.clone()];
            line.extend(row.cells.iter().map(|c| format_cell(*c)));
            line.push(row.unit.clone());
            table.push(line);
        }
        let widths: Vec<usize> = (0..table[0].len())
            .map(|c| table.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for line in &table {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (cell, w))| if i == 0 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }
}
