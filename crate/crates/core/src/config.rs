//! JSON run configuration in lab units (um, MHz, V).
//!
//! Every key is optional; missing keys take the defaults of the study.
//! Unknown keys are rejected so typos do not silently fall back to a default.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    build_layout_with_shape, normalize_axial_width, LayoutConfig, ShapeKind, ShapeSpec, TrapLayout, AREA_TOLERANCE,
};
use crate::scenarios::ScenarioConfig;
use crate::solver::{ShimDirection, Smoothing};
use crate::units::{angular, species_constants, RfDrive, MICRON};

/// Normalization area the published electrode widths correspond to (um^2).
pub const REFERENCE_AREA_UM2: f64 = 1650.0;
/// Alternate normalization figure that does not reproduce those widths (um^2).
pub const ALTERNATE_AREA_UM2: f64 = 1595.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Characterize,
    Transport,
    Shims,
    #[default]
    Report,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub rf_split_um: f64,
    pub rf_width_um: f64,
    pub trap_length_um: f64,
    pub dc_half_length_um: f64,
    pub target_area_um2: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            rf_split_um: 60.0,
            rf_width_um: 134.0,
            trap_length_um: 10_000.0,
            dc_half_length_um: 1_000.0,
            target_area_um2: REFERENCE_AREA_UM2,
        }
    }
}

/// Per-shape geometry override. A custom `parameter` keeps the area
/// normalization; a custom `w_ax_um` replaces it.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapeOverride {
    pub w_ax_um: Option<f64>,
    /// alpha in degrees for RHOMBOID, epsilon for L/T/Z.
    pub parameter: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveConfig {
    /// Zero-peak RF amplitude (V).
    pub amplitude_v: f64,
    pub frequency_mhz: f64,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self {
            amplitude_v: 75.0,
            frequency_mhz: 88.191,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportConfig {
    pub axial_frequency_mhz: f64,
    pub start_um: f64,
    pub stop_um: f64,
    pub step_um: f64,
    pub depth_range_um: f64,
    pub depth_pitch_um: f64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            axial_frequency_mhz: 1.0,
            start_um: -250.0,
            stop_um: 250.0,
            step_um: 5.0,
            depth_range_um: 150.0,
            depth_pitch_um: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub k_active: usize,
    /// `null` removes the bound.
    pub voltage_limit_v: Option<f64>,
    pub w0: f64,
    pub w2: f64,
    pub tolerance: f64,
    pub smoothing: Smoothing,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            k_active: 12,
            voltage_limit_v: Some(10.0),
            w0: 1e-6,
            w2: 2e-6,
            tolerance: 1e-6,
            smoothing: Smoothing::Steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShimConfig {
    pub field_v_per_m: f64,
    pub pitch_um: f64,
    pub directions: Vec<ShimDirection>,
}

impl Default for ShimConfig {
    fn default() -> Self {
        Self {
            field_v_per_m: 100.0,
            pitch_um: 1.0,
            directions: ShimDirection::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub half_range_um: f64,
    pub pitch_um: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            half_range_um: 150.0,
            pitch_um: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub shapes: Vec<ShapeKind>,
    pub species: String,
    pub geometry: GeometryConfig,
    pub shape_overrides: BTreeMap<ShapeKind, ShapeOverride>,
    pub drive: DriveConfig,
    pub transport: TransportConfig,
    pub solver: SolverConfig,
    pub shims: ShimConfig,
    pub characterize: SweepConfig,
    pub output_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::default(),
            shapes: ShapeKind::ALL.to_vec(),
            species: "9Be+".to_string(),
            geometry: GeometryConfig::default(),
            shape_overrides: BTreeMap::new(),
            drive: DriveConfig::default(),
            transport: TransportConfig::default(),
            solver: SolverConfig::default(),
            shims: ShimConfig::default(),
            characterize: SweepConfig::default(),
            output_dir: "out".to_string(),
        }
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(field, format!("must be positive, got {v}")))
    }
}

impl RunConfig {
    /// Parses a configuration document. A run manifest is accepted as well;
    /// its embedded configuration is used.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let body = match value.get("manifest_version") {
            Some(_) => value
                .get("config")
                .cloned()
                .ok_or_else(|| Error::Parse("manifest without `config`".into()))?,
            None => value,
        };
        serde_json::from_value(body).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every value; returns warnings for settings that are legal but
    /// will not reproduce the reference results.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        if self.shapes.is_empty() {
            return Err(Error::validation("shapes", "at least one shape is required"));
        }
        species_constants(&self.species)?;
        let g = &self.geometry;
        positive("geometry.rf_split_um", g.rf_split_um)?;
        positive("geometry.rf_width_um", g.rf_width_um)?;
        positive("geometry.trap_length_um", g.trap_length_um)?;
        positive("geometry.dc_half_length_um", g.dc_half_length_um)?;
        positive("geometry.target_area_um2", g.target_area_um2)?;
        if 2.0 * g.dc_half_length_um > g.trap_length_um {
            return Err(Error::validation(
                "geometry.dc_half_length_um",
                "DC region extends beyond the trap",
            ));
        }
        if (g.target_area_um2 - ALTERNATE_AREA_UM2).abs() < 1e-9 {
            warnings.push(format!(
                "geometry.target_area_um2 = {ALTERNATE_AREA_UM2} does not reproduce the published electrode widths, \
                 which correspond to {REFERENCE_AREA_UM2} um^2"
            ));
        }
        for (kind, o) in &self.shape_overrides {
            if let Some(w) = o.w_ax_um {
                positive(&format!("shape_overrides.{kind}.w_ax_um"), w)?;
            }
            let spec = self
                .shape_spec(*kind)
                .map_err(|e| retag(e, &format!("shape_overrides.{kind}")))?;
            let target = g.target_area_um2 * MICRON * MICRON;
            if o.w_ax_um.is_some() && *kind != ShapeKind::Rect && (spec.area() / target - 1.0).abs() > AREA_TOLERANCE {
                warnings.push(format!(
                    "shape_overrides.{kind}.w_ax_um gives an area of {:.1} um^2 instead of {:.1} um^2",
                    spec.area() / (MICRON * MICRON),
                    g.target_area_um2
                ));
            }
        }
        let d = &self.drive;
        if !(d.amplitude_v.is_finite() && d.amplitude_v >= 0.0) {
            return Err(Error::validation("drive.amplitude_v", "must be >= 0"));
        }
        positive("drive.frequency_mhz", d.frequency_mhz)?;
        let t = &self.transport;
        positive("transport.axial_frequency_mhz", t.axial_frequency_mhz)?;
        positive("transport.step_um", t.step_um)?;
        positive("transport.depth_range_um", t.depth_range_um)?;
        positive("transport.depth_pitch_um", t.depth_pitch_um)?;
        if !(t.start_um.is_finite() && t.stop_um.is_finite() && t.stop_um >= t.start_um) {
            return Err(Error::validation("transport.stop_um", "must not precede transport.start_um"));
        }
        if t.start_um.abs().max(t.stop_um.abs()) > g.dc_half_length_um {
            return Err(Error::validation("transport.stop_um", "transport leaves the DC region"));
        }
        let s = &self.solver;
        if s.k_active == 0 {
            return Err(Error::validation("solver.k_active", "must be at least 1"));
        }
        if let Some(u) = s.voltage_limit_v {
            positive("solver.voltage_limit_v", u)?;
        }
        positive("solver.w0", s.w0)?;
        if !(s.w2.is_finite() && s.w2 >= 0.0) {
            return Err(Error::validation("solver.w2", "must be >= 0"));
        }
        if !(s.tolerance > 0.0 && s.tolerance < 1.0) {
            return Err(Error::validation("solver.tolerance", "must lie in (0, 1)"));
        }
        if !self.shims.field_v_per_m.is_finite() {
            return Err(Error::validation("shims.field_v_per_m", "must be finite"));
        }
        positive("shims.pitch_um", self.shims.pitch_um)?;
        if self.shims.directions.is_empty() {
            return Err(Error::validation("shims.directions", "at least one direction is required"));
        }
        positive("characterize.half_range_um", self.characterize.half_range_um)?;
        positive("characterize.pitch_um", self.characterize.pitch_um)?;
        Ok(warnings)
    }

    pub fn layout_config(&self) -> LayoutConfig {
        let g = &self.geometry;
        LayoutConfig {
            rf_split: g.rf_split_um * MICRON,
            rf_width: g.rf_width_um * MICRON,
            trap_length: g.trap_length_um * MICRON,
            dc_half_length: g.dc_half_length_um * MICRON,
            target_area: g.target_area_um2 * MICRON * MICRON,
        }
    }

    /// Catalog shape with any override applied.
    pub fn shape_spec(&self, kind: ShapeKind) -> Result<ShapeSpec> {
        let layout = self.layout_config();
        let Some(o) = self.shape_overrides.get(&kind) else {
            return layout.shape(kind);
        };
        let parameter = o.parameter.or(kind.default_parameter());
        let w = match (o.w_ax_um, kind) {
            (Some(w), _) => w * MICRON,
            (None, ShapeKind::Rect) => ShapeSpec::normalized(kind, layout.rf_split, layout.target_area)?.axial_width,
            (None, _) => normalize_axial_width(kind, layout.rf_split, parameter, layout.target_area)?,
        };
        ShapeSpec::new(kind, w, parameter, layout.rf_split)
    }

    pub fn layout(&self, kind: ShapeKind) -> Result<TrapLayout> {
        build_layout_with_shape(&self.shape_spec(kind)?, &self.layout_config())
    }

    /// SI configuration for the scenario runners.
    pub fn scenario_config(&self) -> Result<ScenarioConfig> {
        let t = &self.transport;
        let s = &self.solver;
        Ok(ScenarioConfig {
            layout: self.layout_config(),
            species: species_constants(&self.species)?,
            drive: RfDrive::new(self.drive.amplitude_v, angular(self.drive.frequency_mhz * 1e6))?,
            axial_frequency: angular(t.axial_frequency_mhz * 1e6),
            transport_start: t.start_um * MICRON,
            transport_stop: t.stop_um * MICRON,
            transport_step: t.step_um * MICRON,
            k_active: s.k_active,
            voltage_limit: s.voltage_limit_v,
            w0: s.w0,
            w2: s.w2,
            tolerance: s.tolerance,
            smoothing: s.smoothing,
            depth_range: t.depth_range_um * MICRON,
            depth_pitch: t.depth_pitch_um * MICRON,
            shim_field: self.shims.field_v_per_m,
            shim_pitch: self.shims.pitch_um * MICRON,
            sweep_half_range: self.characterize.half_range_um * MICRON,
            sweep_pitch: self.characterize.pitch_um * MICRON,
        })
    }
}

fn retag(e: Error, prefix: &str) -> Error {
    match e {
        Error::Validation { field, message } => Error::validation(format!("{prefix}.{field}"), message),
        other => other,
    }
}
