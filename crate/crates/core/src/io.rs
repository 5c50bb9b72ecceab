//! CSV and JSON emission.
//!
//! Floats are written with 17 significant digits so every value round-trips
//! exactly. Lengths are written in um; to keep that exact, the decimal
//! exponent of the metre value is shifted in text rather than multiplied.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::geometry::{PolygonElectrode, Role, ShapeKind, ShapeSpec, TrapLayout};
use crate::scenarios::{Characterization, Quantity, Report, ShimResult, TransportResult};

pub const MANIFEST_VERSION: u32 = 1;

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Splits `1.5e-3` into (`1.5`, -3).
fn split_exponent(text: &str) -> Result<(&str, i32)> {
    match text.find(['e', 'E']) {
        Some(i) => {
            let exp = text[i + 1..]
                .parse::<i32>()
                .map_err(|_| Error::Parse(format!("bad number `{text}`")))?;
            Ok((&text[..i], exp))
        }
        None => Ok((text, 0)),
    }
}

/// Metres to um, exact in decimal.
pub fn um_text(metres: f64) -> String {
    let s = fmt_f64(metres);
    let (mantissa, exp) = split_exponent(&s).expect("formatted float");
    format!("{mantissa}e{}", exp + 6)
}

/// Inverse of [`um_text`]: the metre value closest to the decimal, so a
/// written layout reads back bit for bit.
pub fn metres_from_um_text(text: &str) -> Result<f64> {
    let text = text.trim();
    let (mantissa, exp) = split_exponent(text)?;
    let v: f64 = format!("{mantissa}e{}", exp - 6)
        .parse()
        .map_err(|_| Error::Parse(format!("bad number `{text}`")))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!("non-finite number `{text}`")));
    }
    Ok(v)
}

fn raw(text: String) -> Box<RawValue> {
    RawValue::from_string(text).expect("numeric literal is valid JSON")
}

fn raw_um(metres: f64) -> Box<RawValue> {
    raw(um_text(metres))
}

fn um(v: &RawValue) -> Result<f64> {
    metres_from_um_text(v.get())
}

fn csv_text(header: Vec<String>, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// Waveform: one row per step, one column per electrode (V).
pub fn transport_csv(t: &TransportResult) -> String {
    let mut header = vec!["x_um".to_string()];
    header.extend(t.solution.electrode_ids.iter().cloned());
    let rows = t.steps.iter().zip(&t.solution.voltages).map(|(s, v)| {
        let mut row = vec![um_text(s.x)];
        row.extend(v.iter().map(|&x| fmt_f64(x)));
        row
    });
    csv_text(header, rows)
}

/// Per-step verification of the transport solution.
pub fn transport_diagnostics_csv(t: &TransportResult) -> String {
    let header = [
        "x_um",
        "z_um",
        "axial_curvature_v_per_m2",
        "axial_frequency_mhz",
        "grad_x_v_per_m",
        "grad_y_v_per_m",
        "grad_z_v_per_m",
        "d2xy_v_per_m2",
        "d2xz_v_per_m2",
        "d2yz_v_per_m2",
        "max_scaled_residual",
        "depth_mev",
        "depth_left_mev",
        "depth_right_mev",
    ]
    .map(String::from)
    .to_vec();
    let rows = t.steps.iter().enumerate().map(|(i, s)| {
        let resid = t.solution.scaled_residuals[i].iter().fold(0.0f64, |m, r| m.max(r.abs()));
        vec![
            um_text(s.x),
            um_text(s.point.z),
            fmt_f64(s.axial_curvature),
            fmt_f64(s.axial_frequency / (2.0 * std::f64::consts::PI * 1e6)),
            fmt_f64(s.gradient[0]),
            fmt_f64(s.gradient[1]),
            fmt_f64(s.gradient[2]),
            fmt_f64(s.mixed[0]),
            fmt_f64(s.mixed[1]),
            fmt_f64(s.mixed[2]),
            fmt_f64(resid),
            fmt_f64(1e3 * s.depth.depth),
            fmt_f64(1e3 * s.depth.left),
            fmt_f64(1e3 * s.depth.right),
        ]
    });
    csv_text(header, rows)
}

/// Shim voltages per position: the bounded solution when feasible, the
/// unbounded one otherwise. Empty body when the shim is unavailable.
pub fn shim_csv(s: &ShimResult) -> String {
    let sol = match (&s.solution, &s.unbounded) {
        (Some(b), _) if s.status.is_feasible() => Some(b),
        (_, Some(u)) => Some(u),
        (b, None) => b.as_ref(),
    };
    let Some(sol) = sol else {
        return csv_text(vec!["position_um".into(), "status".into()], Vec::new());
    };
    let mut header = vec!["position_um".to_string(), "status".to_string()];
    header.extend(sol.electrode_ids.iter().cloned());
    let status = s.status.to_string();
    let rows = s.positions.iter().zip(&sol.voltages).map(|(&x, v)| {
        let mut row = vec![um_text(x), status.clone()];
        row.extend(v.iter().map(|&x| fmt_f64(x)));
        row
    });
    csv_text(header, rows)
}

/// One row per shim run: status, reported and unbounded max |V|, and the
/// worst scaled condition number over the positions.
pub fn shim_summary_csv(results: &[ShimResult]) -> String {
    let header = [
        "shape",
        "direction",
        "status",
        "max_abs_voltage_v",
        "unbounded_max_abs_voltage_v",
        "min_condition",
    ]
    .map(String::from)
    .to_vec();
    let opt = |v: Option<f64>| v.map_or_else(String::new, fmt_f64);
    let rows = results.iter().map(|r| {
        vec![
            r.shape.name().to_string(),
            r.direction.name().to_string(),
            r.status.to_string(),
            opt(r.table_value()),
            opt(r.unbounded.as_ref().filter(|u| u.is_feasible()).map(|u| u.max_abs_voltage)),
            fmt_f64(r.min_condition),
        ]
    });
    csv_text(header, rows)
}

pub fn characterization_csv(c: &Characterization) -> String {
    let mut header = vec!["x_prime_um".to_string()];
    header.extend(Quantity::ALL.iter().map(|q| q.label().to_string()));
    let x = &c.curve(Quantity::Value).x_prime;
    let rows = (0..x.len()).map(|i| {
        let mut row = vec![um_text(x[i])];
        row.extend(Quantity::ALL.iter().map(|&q| fmt_f64(c.curve(q).values[i])));
        row
    });
    csv_text(header, rows)
}

pub fn report_csv(r: &Report) -> String {
    let mut header = vec!["quantity".to_string(), "unit".to_string()];
    header.extend(r.shapes.iter().map(|k| k.name().to_string()));
    let rows = r.rows.iter().map(|row| {
        let mut line = vec![row.label.clone(), row.unit.clone()];
        line.extend(row.cells.iter().map(|c| c.map_or_else(|| "-".to_string(), fmt_f64)));
        line
    });
    csv_text(header, rows)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ElectrodeDoc {
    id: String,
    role: Role,
    vertices_um: Vec<[Box<RawValue>; 2]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShapeDoc {
    kind: ShapeKind,
    w_ax_um: Box<RawValue>,
    parameter: Option<f64>,
    span_um: Box<RawValue>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayoutDoc {
    rf_inner_half_gap_um: Box<RawValue>,
    rf_outer_half_extent_um: Box<RawValue>,
    trap_length_um: Box<RawValue>,
    dc_region_half_length_um: Box<RawValue>,
    shape: Option<ShapeDoc>,
    electrodes: Vec<ElectrodeDoc>,
}

fn electrode_doc(p: &PolygonElectrode) -> ElectrodeDoc {
    ElectrodeDoc {
        id: p.id().to_string(),
        role: p.role(),
        vertices_um: p.vertices().iter().map(|v| [raw_um(v[0]), raw_um(v[1])]).collect(),
    }
}

/// Layout as JSON, lengths in um. Reads back bit-exactly with
/// [`layout_from_json`].
pub fn layout_to_json(layout: &TrapLayout) -> String {
    let doc = LayoutDoc {
        rf_inner_half_gap_um: raw_um(layout.rf_inner_half_gap),
        rf_outer_half_extent_um: raw_um(layout.rf_outer_half_extent),
        trap_length_um: raw_um(layout.trap_length),
        dc_region_half_length_um: raw_um(layout.dc_region_half_length),
        shape: layout.shape.map(|s| ShapeDoc {
            kind: s.kind,
            w_ax_um: raw_um(s.axial_width),
            parameter: s.parameter,
            span_um: raw_um(s.span),
        }),
        electrodes: layout
            .rf_rails
            .iter()
            .chain(&layout.dc_electrodes)
            .map(electrode_doc)
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("layout serializes")
}

pub fn layout_from_json(text: &str) -> Result<TrapLayout> {
    let doc: LayoutDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let mut rf = Vec::new();
    let mut dc = Vec::new();
    for e in doc.electrodes {
        let vertices = e
            .vertices_um
            .iter()
            .map(|[x, y]| Ok([um(x)?, um(y)?]))
            .collect::<Result<Vec<_>>>()?;
        let poly = PolygonElectrode::new(e.id, vertices, e.role)?;
        match e.role {
            Role::Rf => rf.push(poly),
            Role::Dc => dc.push(poly),
            Role::Ground => return Err(Error::Parse("ground is implicit and cannot be listed".into())),
        }
    }
    let rf_rails: [PolygonElectrode; 2] = rf
        .try_into()
        .map_err(|v: Vec<_>| Error::Parse(format!("expected 2 RF electrodes, found {}", v.len())))?;
    let shape = doc
        .shape
        .map(|s| ShapeSpec::new(s.kind, um(&s.w_ax_um)?, s.parameter, um(&s.span_um)?))
        .transpose()?;
    Ok(TrapLayout {
        rf_rails,
        dc_electrodes: dc,
        rf_inner_half_gap: um(&doc.rf_inner_half_gap_um)?,
        rf_outer_half_extent: um(&doc.rf_outer_half_extent_um)?,
        trap_length: um(&doc.trap_length_um)?,
        dc_region_half_length: um(&doc.dc_region_half_length_um)?,
        shape,
    })
}

/// Record of a CLI run: enough to regenerate every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    /// Output file name to a one-line description.
    pub outputs: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn new(command: impl Into<String>, config: RunConfig) -> Self {
        Self {
            manifest_version: MANIFEST_VERSION,
            tool: "setrap".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.into(),
            config,
            outputs: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// Pretty JSON of any serializable result.
pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("result serializes")
}



#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_layout, LayoutConfig};

    #[test]
    fn um_text_shifts_exponent() {
        assert_eq!(um_text(0.0), "0.0000000000000000e6");
        assert_eq!(um_text(2.5), "2.5000000000000000e6");
        let text = um_text(27.5e-6);
        assert!(text.ends_with("e1"), "{text}");
        assert!((text.parse::<f64>().unwrap() - 27.5).abs() < 1e-12);
        assert_eq!(metres_from_um_text("27.5").unwrap(), 27.5e-6);
        assert_eq!(metres_from_um_text("-1E2").unwrap(), -1e-4);
    }

    #[test]
    fn awkward_values_round_trip() {
        for m in [0.1e-6 * 3.0, 1.0 / 3.0 * 1e-5, -0.0, 5e-324, 1.0, f64::MAX / 1e7, 123.456e-9] {
            let back = metres_from_um_text(&um_text(m)).unwrap();
            assert_eq!(back.to_bits(), m.to_bits(), "{m:e}");
        }
    }

    #[test]
    fn layouts_round_trip_bit_exact() {
        for kind in ShapeKind::ALL {
            let layout = build_layout(kind, &LayoutConfig::default()).unwrap();
            let back = layout_from_json(&layout_to_json(&layout)).unwrap();
            assert_eq!(back, layout, "{kind}");
        }
    }

    #[test]
    fn malformed_layout_is_a_parse_error() {
        assert!(matches!(layout_from_json("{\"electrodes\": 3}"), Err(Error::Parse(_))));
    }
}
