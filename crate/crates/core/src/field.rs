//! Electrostatics in the gapless-plane approximation.
//!
//! A polygonal electrode held at 1 V in an otherwise grounded infinite plane
//! produces the potential `Omega(r) / 2 pi`, where `Omega` is the solid angle
//! the polygon subtends at `r`. The gradient of that potential is a sum of
//! closed-form contributions from each directed boundary edge (the same
//! kernel as the Biot-Savart field of a straight current segment), and the
//! Hessian follows by differentiating those terms once more. Third
//! derivatives are taken numerically from the analytic Hessian.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{PolygonElectrode, TrapLayout, Vertex};
use crate::units::{frequency_for_curvature, EvalPoint, IonSpecies, RfDrive, SecularFrequency, MICRON};

/// Points closer than this to the electrode plane are only accepted away from edges (m).
const PLANE_GUARD: f64 = 1e-12;
/// Base step of the Richardson-extrapolated third derivatives (m).
pub const THIRD_DERIVATIVE_STEP: f64 = 0.1 * MICRON;

pub type ThirdTensor = [[[f64; 3]; 3]; 3];

/// Highest derivative order to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Order {
    Value = 0,
    Gradient = 1,
    Hessian = 2,
    Third = 3,
}

impl TryFrom<u8> for Order {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        match value {
            0 => Ok(Order::Value),
            1 => Ok(Order::Gradient),
            2 => Ok(Order::Hessian),
            3 => Ok(Order::Third),
            _ => Err(Error::validation("order", "must be 0, 1, 2 or 3")),
        }
    }
}

/// Value and derivatives of a potential at one point.
///
/// Derivatives beyond the requested order are left at zero; `third` is only
/// populated for [`Order::Third`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub value: f64,
    pub gradient: Vector3<f64>,
    pub hessian: Matrix3<f64>,
    pub third: Option<ThirdTensor>,
}

impl Default for FieldSample {
    fn default() -> Self {
        Self::zero()
    }
}

impl FieldSample {
    pub fn zero() -> Self {
        Self {
            value: 0.0,
            gradient: Vector3::zeros(),
            hessian: Matrix3::zeros(),
            third: None,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = Self::zero();
        out.add_scaled(self, c);
        out
    }

    /// `self += c * other`
    pub fn add_scaled(&mut self, other: &FieldSample, c: f64) {
        self.value += c * other.value;
        self.gradient += c * other.gradient;
        self.hessian += c * other.hessian;
        if let Some(t) = &other.third {
            let mine = self.third.get_or_insert([[[0.0; 3]; 3]; 3]);
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        mine[i][j][k] += c * t[i][j][k];
                    }
                }
            }
        }
    }

    pub fn sum(&self, other: &FieldSample) -> Self {
        let mut out = *self;
        out.add_scaled(other, 1.0);
        out
    }

    /// Laplacian (trace of the Hessian).
    pub fn laplacian(&self) -> f64 {
        self.hessian.trace()
    }

    /// Derivative selected by a multi-index of axes (0 = x, 1 = y, 2 = z).
    pub fn derivative(&self, axes: &[usize]) -> f64 {
        match *axes {
            [] => self.value,
            [i] => self.gradient[i],
            [i, j] => self.hessian[(i, j)],
            [i, j, k] => self.third.map_or(0.0, |t| t[i][j][k]),
            _ => 0.0,
        }
    }
}

fn check_domain(vertices: &[Vertex], r: &EvalPoint) -> Result<()> {
    if !(r.x.is_finite() && r.y.is_finite() && r.z.is_finite()) {
        return Err(Error::Domain("non-finite evaluation point".into()));
    }
    if r.z <= 0.0 {
        return Err(Error::Domain(format!(
            "evaluation point must lie above the electrode plane (z = {:e} m)",
            r.z
        )));
    }
    if r.z < PLANE_GUARD {
        let n = vertices.len();
        for i in 0..n {
            let p = vertices[i];
            let q = vertices[(i + 1) % n];
            let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
            let len = dx.hypot(dy);
            let dist = ((r.x - p[0]) * dy - (r.y - p[1]) * dx).abs() / len;
            if dist < PLANE_GUARD {
                return Err(Error::Domain(
                    "evaluation point lies on an electrode edge within the plane guard".into(),
                ));
            }
        }
    }
    Ok(())
}

/// Solid angle of a counter-clockwise polygon seen from `r` (z > 0), by fan
/// triangulation from the first vertex and the three-vertex closed form.
fn solid_angle(vertices: &[Vertex], r: &EvalPoint) -> f64 {
    let rel = |v: &Vertex| Vector3::new(v[0] - r.x, v[1] - r.y, -r.z);
    let p0 = vertices[0];
    let a = rel(&p0);
    let la = a.norm();
    let mut omega = 0.0;
    for w in vertices[1..].windows(2) {
        let (p1, p2) = (w[0], w[1]);
        // triple product of the apex vectors: height times twice the signed base area
        let twice_area = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0]);
        if twice_area == 0.0 {
            continue;
        }
        let b = rel(&p1);
        let c = rel(&p2);
        let (lb, lc) = (b.norm(), c.norm());
        let num = r.z * twice_area;
        let den = la * lb * lc + a.dot(&b) * lc + a.dot(&c) * lb + b.dot(&c) * la;
        omega += 2.0 * num.atan2(den);
    }
    omega
}

/// Gradient and (optionally) Hessian of `Omega / 2 pi` from the edge terms.
///
/// For the directed edge p1 -> p2 with `a = p1 - r`, `b = p2 - r`, the
/// gradient contribution is `-(a x b) g / 2 pi` with
/// `g = (|a| + |b|) / (|a||b| (|a||b| + a.b))`.
fn edge_derivatives(vertices: &[Vertex], r: &EvalPoint, hessian: bool) -> (Vector3<f64>, Matrix3<f64>) {
    let n = vertices.len();
    let mut grad = Vector3::zeros();
    let mut hess = Matrix3::zeros();
    let rv = r.to_vector();
    for i in 0..n {
        let p1 = vertices[i];
        let p2 = vertices[(i + 1) % n];
        let a = Vector3::new(p1[0], p1[1], 0.0) - rv;
        let b = Vector3::new(p2[0], p2[1], 0.0) - rv;
        let la = a.norm();
        let lb = b.norm();
        let d = a.dot(&b);
        let p = la * lb;
        let m = p * (p + d);
        let num = la + lb;
        let g = num / m;
        let axb = a.cross(&b);
        grad -= axb * g;
        if hessian {
            let ab = a - b;
            for k in 0..3 {
                let dla = -a[k] / la;
                let dlb = -b[k] / lb;
                let dd = -(a[k] + b[k]);
                let dp = dla * lb + la * dlb;
                let dm = dp * (2.0 * p + d) + p * dd;
                let dg = (dla + dlb - g * dm) / m;
                let mut ek = Vector3::zeros();
                ek[k] = 1.0;
                let daxb = ek.cross(&ab);
                let col = -(daxb * g + axb * dg);
                for j in 0..3 {
                    hess[(j, k)] += col[j];
                }
            }
        }
    }
    let s = 1.0 / (2.0 * PI);
    let hess = 0.5 * (hess + hess.transpose()) * s;
    (grad * s, hess)
}

fn analytic_sample(vertices: &[Vertex], r: &EvalPoint, order: Order) -> FieldSample {
    let mut sample = FieldSample::zero();
    sample.value = solid_angle(vertices, r) / (2.0 * PI);
    if order >= Order::Gradient {
        let (g, h) = edge_derivatives(vertices, r, order >= Order::Hessian);
        sample.gradient = g;
        sample.hessian = h;
    }
    sample
}

/// Third derivatives from Richardson-extrapolated central differences of a
/// Hessian field, symmetrized over index permutations.
pub fn third_from_hessian<F>(hessian_at: F, r: &EvalPoint, step: f64) -> Result<ThirdTensor>
where
    F: Fn(&EvalPoint) -> Result<Matrix3<f64>>,
{
    let mut raw = [[[0.0; 3]; 3]; 3];
    for k in 0..3 {
        let central = |h: f64| -> Result<Matrix3<f64>> {
            let mut dp = [0.0; 3];
            dp[k] = h;
            let plus = hessian_at(&r.offset(dp[0], dp[1], dp[2]))?;
            let minus = hessian_at(&r.offset(-dp[0], -dp[1], -dp[2]))?;
            Ok((plus - minus) / (2.0 * h))
        };
        let coarse = central(step)?;
        let fine = central(0.5 * step)?;
        let d = (4.0 * fine - coarse) / 3.0;
        for i in 0..3 {
            for j in 0..3 {
                raw[i][j][k] = d[(i, j)];
            }
        }
    }
    let mut sym = [[[0.0; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                sym[i][j][k] = (raw[i][j][k] + raw[j][k][i] + raw[k][i][j]) / 3.0;
            }
        }
    }
    Ok(sym)
}

/// Potential per volt of one electrode (rest of the plane grounded).
pub fn unit_field(poly: &PolygonElectrode, r: &EvalPoint, order: Order) -> Result<FieldSample> {
    unit_field_set(std::slice::from_ref(poly), r, order)
}

/// Potential per volt of several electrodes wired together.
pub fn unit_field_set(polys: &[PolygonElectrode], r: &EvalPoint, order: Order) -> Result<FieldSample> {
    for p in polys {
        check_domain(p.vertices(), r)?;
    }
    let mut total = FieldSample::zero();
    for p in polys {
        total.add_scaled(&analytic_sample(p.vertices(), r, order), 1.0);
    }
    if order == Order::Third {
        let hessian_at = |q: &EvalPoint| -> Result<Matrix3<f64>> {
            let mut h = Matrix3::zeros();
            for p in polys {
                check_domain(p.vertices(), q)?;
                h += edge_derivatives(p.vertices(), q, true).1;
            }
            Ok(h)
        };
        total.third = Some(third_from_hessian(hessian_at, r, THIRD_DERIVATIVE_STEP)?);
    }
    Ok(total)
}

/// Unit-voltage sample of the RF basis function (both rails at 1 V).
pub fn rf_basis(layout: &TrapLayout, r: &EvalPoint, order: Order) -> Result<FieldSample> {
    unit_field_set(&layout.rf_rails, r, order)
}

/// Unit-voltage samples of the DC electrodes selected by `indices`, in that order.
pub fn dc_basis(layout: &TrapLayout, indices: &[usize], r: &EvalPoint, order: Order) -> Result<Vec<FieldSample>> {
    indices
        .iter()
        .map(|&i| {
            let poly = layout
                .dc_electrodes
                .get(i)
                .ok_or_else(|| Error::validation("electrode index", format!("{i} out of range")))?;
            unit_field(poly, r, order)
        })
        .collect()
}

/// Static potential of the DC electrodes at the given voltages.
///
/// `voltages[i]` drives `layout.dc_electrodes[i]`; missing trailing entries
/// are treated as 0 V.
pub fn static_potential(layout: &TrapLayout, voltages: &[f64], r: &EvalPoint, order: Order) -> Result<FieldSample> {
    if voltages.len() > layout.dc_electrodes.len() {
        return Err(Error::validation(
            "voltages",
            format!(
                "{} voltages for {} DC electrodes",
                voltages.len(),
                layout.dc_electrodes.len()
            ),
        ));
    }
    let mut total = FieldSample::zero();
    if order == Order::Third {
        total.third = Some([[[0.0; 3]; 3]; 3]);
    }
    for (poly, &u) in layout.dc_electrodes.iter().zip(voltages) {
        if u == 0.0 {
            continue;
        }
        total.add_scaled(&unit_field(poly, r, order)?, u);
    }
    Ok(total)
}

/// Pseudopotential `q U^2 / (4 m Omega^2) |grad Theta|^2` (V), up to the Hessian.
pub fn pseudopotential(
    layout: &TrapLayout,
    drive: &RfDrive,
    species: &IonSpecies,
    r: &EvalPoint,
    order: Order,
) -> Result<FieldSample> {
    if order > Order::Hessian {
        return Err(Error::validation("order", "pseudopotential supports orders 0 to 2"));
    }
    let theta_order = match order {
        Order::Value => Order::Gradient,
        Order::Gradient => Order::Hessian,
        _ => Order::Third,
    };
    let theta = rf_basis(layout, r, theta_order)?;
    Ok(pseudo_from_theta(&theta, drive.pseudopotential_prefactor(species), order))
}

fn pseudo_from_theta(theta: &FieldSample, c: f64, order: Order) -> FieldSample {
    let g = &theta.gradient;
    let h = &theta.hessian;
    let mut out = FieldSample::zero();
    out.value = c * g.norm_squared();
    if order >= Order::Gradient {
        out.gradient = 2.0 * c * (h * g);
    }
    if order >= Order::Hessian {
        let t = theta.third.unwrap_or([[[0.0; 3]; 3]; 3]);
        let mut hess = 2.0 * c * (h * h.transpose());
        for i in 0..3 {
            for j in 0..3 {
                let contraction: f64 = (0..3).map(|k| g[k] * t[i][j][k]).sum();
                hess[(i, j)] += 2.0 * c * contraction;
            }
        }
        out.hessian = 0.5 * (hess + hess.transpose());
    }
    out
}

/// Pseudopotential plus static potential (V), up to the Hessian.
pub fn total_potential(
    layout: &TrapLayout,
    drive: &RfDrive,
    species: &IonSpecies,
    voltages: &[f64],
    r: &EvalPoint,
    order: Order,
) -> Result<FieldSample> {
    let psd = pseudopotential(layout, drive, species, r, order)?;
    let st = static_potential(layout, voltages, r, order)?;
    Ok(psd.sum(&st))
}

/// Converged when the transverse RF field is below this (V/m per volt).
pub const RF_NULL_TOLERANCE: f64 = 1e-6;
const RF_NULL_MAX_ITER: usize = 60;

/// Locates the RF null in the transverse (y, z) plane at axial position `x`.
///
/// Newton iteration on the transverse components of grad Theta, seeded at
/// `(0, sqrt(a b))`, the null height of infinitely long rails.
pub fn find_rf_null(layout: &TrapLayout, x: f64) -> Result<EvalPoint> {
    let a = layout.rf_inner_half_gap;
    let b = layout.rf_outer_half_extent;
    let mut p = EvalPoint::new(x, 0.0, (a * b).sqrt());
    for _ in 0..RF_NULL_MAX_ITER {
        let theta = rf_basis(layout, &p, Order::Hessian)?;
        let f = Vector2::new(theta.gradient[1], theta.gradient[2]);
        if f.norm() < RF_NULL_TOLERANCE {
            return Ok(p);
        }
        let jac = Matrix2::new(
            theta.hessian[(1, 1)],
            theta.hessian[(1, 2)],
            theta.hessian[(2, 1)],
            theta.hessian[(2, 2)],
        );
        let step = jac
            .lu()
            .solve(&f)
            .ok_or_else(|| Error::Numeric("singular Jacobian while locating the RF null".into()))?;
        let mut scale = 1.0;
        while p.z - scale * step[1] <= 0.1 * p.z {
            scale *= 0.5;
        }
        p = EvalPoint::new(x, p.y - scale * step[0], p.z - scale * step[1]);
    }
    Err(Error::Numeric(format!(
        "RF null search did not converge at x = {:.3} um",
        x / MICRON
    )))
}

/// One secular mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    /// Curvature along the axis (V/m^2).
    pub curvature: f64,
    pub frequency: SecularFrequency,
    /// Unit vector.
    pub axis: Vector3<f64>,
}

/// Eigen-decomposition of a potential Hessian into secular modes.
///
/// Modes are sorted by ascending curvature. The first two axes have their
/// largest component positive; the third completes a right-handed frame.
pub fn normal_modes(hessian: &Matrix3<f64>, species: &IonSpecies) -> [Mode; 3] {
    let sym = 0.5 * (hessian + hessian.transpose());
    let eig = SymmetricEigen::new(sym);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let canonical = |v: Vector3<f64>| -> Vector3<f64> {
        let v = v.normalize();
        let imax = v.iamax();
        if v[imax] < 0.0 {
            -v
        } else {
            v
        }
    };
    let e0 = canonical(eig.eigenvectors.column(order[0]).into_owned());
    let e1 = canonical(eig.eigenvectors.column(order[1]).into_owned());
    // re-orthogonalize against round-off before closing the frame
    let e1 = (e1 - e0 * e0.dot(&e1)).normalize();
    let e2 = e0.cross(&e1);
    let axes = [e0, e1, e2];
    let mut modes = [Mode {
        curvature: 0.0,
        frequency: frequency_for_curvature(species, 0.0),
        axis: Vector3::zeros(),
    }; 3];
    for (slot, (&idx, axis)) in modes.iter_mut().zip(order.iter().zip(axes)) {
        let c = eig.eigenvalues[idx];
        *slot = Mode {
            curvature: c,
            frequency: frequency_for_curvature(species, c),
            axis,
        };
    }
    modes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_layout, LayoutConfig, Role, ShapeKind};
    use crate::units::species_constants;

    const UM: f64 = MICRON;

    fn square(side: f64) -> PolygonElectrode {
        let h = 0.5 * side;
        PolygonElectrode::new("sq", vec![[-h, -h], [h, -h], [h, h], [-h, h]], Role::Dc).unwrap()
    }

    /// Solid angle of a polygon by midpoint quadrature of z / |r - r'|^3 over
    /// the area, used as an independent oracle for the closed forms.
    fn quadrature_value(vertices: &[[f64; 2]], r: &EvalPoint, n: usize) -> f64 {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for v in vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        let inside = |x: f64, y: f64| {
            let mut c = false;
            let m = vertices.len();
            for i in 0..m {
                let (p, q) = (vertices[i], vertices[(i + 1) % m]);
                if (p[1] > y) != (q[1] > y) && x < p[0] + (y - p[1]) * (q[0] - p[0]) / (q[1] - p[1]) {
                    c = !c;
                }
            }
            c
        };
        let dx = (hi[0] - lo[0]) / n as f64;
        let dy = (hi[1] - lo[1]) / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = lo[0] + (i as f64 + 0.5) * dx;
                let y = lo[1] + (j as f64 + 0.5) * dy;
                if inside(x, y) {
                    let d2 = (x - r.x).powi(2) + (y - r.y).powi(2) + r.z * r.z;
                    s += r.z / (d2 * d2.sqrt());
                }
            }
        }
        s * dx * dy / (2.0 * PI)
    }

    #[test]
    fn huge_square_is_half_space() {
        let (a, h) = (0.5e6 * UM, 1.0 * UM);
        let sq = square(2.0 * a);
        let s = unit_field(&sq, &EvalPoint::new(0.0, 0.0, h), Order::Value).unwrap();
        // the finite square misses 1.8e-6 of the half-space at this height
        let closed = 2.0 / PI * (a * a / (h * (h * h + 2.0 * a * a).sqrt())).atan();
        assert!((s.value - closed).abs() < 1e-9, "{} vs {closed}", s.value);
        assert!((s.value - 1.0).abs() < 2e-6, "{}", s.value);
    }

    #[test]
    fn on_axis_square_closed_form() {
        let a = 27.5 * UM;
        let h = 70.1 * UM;
        let sq = square(2.0 * a);
        let r = EvalPoint::new(0.0, 0.0, h);
        let s = unit_field(&sq, &r, Order::Hessian).unwrap();
        let closed = 2.0 / PI * (a * a / (h * (h * h + 2.0 * a * a).sqrt())).atan();
        assert!((s.value - closed).abs() < 1e-14);
        assert!((closed - 0.0852).abs() < 5e-4, "{closed}");
        let quad = quadrature_value(sq.vertices(), &r, 800);
        assert!((quad - closed).abs() < 1e-5, "{quad} vs {closed}");
        // mirror symmetry kills the in-plane gradient on the axis
        let gmag = s.gradient.norm();
        assert!(s.gradient[0].abs() <= 1e-12 * gmag);
        assert!(s.gradient[1].abs() <= 1e-12 * gmag);
    }

    #[test]
    fn far_field_is_dipole_like() {
        let side = 10.0 * UM;
        let sq = square(side);
        let d = 50.0 * side;
        let r = EvalPoint::new(0.3 * d, 0.4 * d, (1.0f64 - 0.25).sqrt() * d);
        let s = unit_field(&sq, &r, Order::Value).unwrap();
        let approx = side * side * r.z / (2.0 * PI * d.powi(3));
        assert!((s.value / approx - 1.0).abs() < 0.01);
    }

    #[test]
    fn gradient_sign_points_toward_electrode() {
        // the potential of a 1 V electrode decreases with height
        let s = unit_field(&square(50.0 * UM), &EvalPoint::new(0.0, 0.0, 30.0 * UM), Order::Gradient).unwrap();
        assert!(s.gradient[2] < 0.0);
    }

    #[test]
    fn domain_errors() {
        let sq = square(10.0 * UM);
        assert!(matches!(
            unit_field(&sq, &EvalPoint::new(0.0, 0.0, 0.0), Order::Value),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            unit_field(&sq, &EvalPoint::new(0.0, 0.0, -1e-6), Order::Value),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            unit_field(&sq, &EvalPoint::new(5.0 * UM, 0.0, 1e-13), Order::Value),
            Err(Error::Domain(_))
        ));
        // close to the plane but well inside the electrode is fine
        let s = unit_field(&sq, &EvalPoint::new(0.0, 0.0, 1e-13), Order::Value).unwrap();
        assert!((s.value - 1.0).abs() < 1e-6);
    }

    #[test]
    fn laplace_and_symmetry() {
        let layout = build_layout(ShapeKind::L, &LayoutConfig::default()).unwrap();
        let r = EvalPoint::new(13.0 * UM, -4.0 * UM, 65.0 * UM);
        for p in layout.dc_electrodes.iter().take(80) {
            let s = unit_field(p, &r, Order::Hessian).unwrap();
            let h = s.hessian;
            assert!((h - h.transpose()).norm() <= 1e-12 * h.norm());
            assert!(s.laplacian().abs() <= 1e-9 * h.norm());
        }
    }

    #[test]
    fn third_derivatives_are_harmonic() {
        let tri = PolygonElectrode::new(
            "t",
            vec![[-27.5 * UM, -30.0 * UM], [27.5 * UM, -30.0 * UM], [0.0, 30.0 * UM]],
            Role::Dc,
        )
        .unwrap();
        let s = unit_field(&tri, &EvalPoint::new(10.0 * UM, 5.0 * UM, 70.0 * UM), Order::Third).unwrap();
        let t = s.third.unwrap();
        let scale: f64 = t.iter().flatten().flatten().map(|v| v * v).sum::<f64>().sqrt();
        for k in 0..3 {
            let trace = t[0][0][k] + t[1][1][k] + t[2][2][k];
            assert!(trace.abs() < 1e-6 * scale, "{trace} vs {scale}");
        }
    }

    #[test]
    fn static_potential_linearity() {
        let layout = build_layout(ShapeKind::Triangular, &LayoutConfig::default()).unwrap();
        let r = EvalPoint::new(3.0 * UM, 1.0 * UM, 70.0 * UM);
        let n = layout.dc_electrodes.len();
        let zero = static_potential(&layout, &vec![0.0; n], &r, Order::Hessian).unwrap();
        assert_eq!(zero, FieldSample::zero());
        let u1: Vec<f64> = (0..n).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.1).collect();
        let u2: Vec<f64> = (0..n).map(|i| ((i * 13 % 7) as f64 - 3.0) * 0.2).collect();
        let sum: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| a + b).collect();
        let s1 = static_potential(&layout, &u1, &r, Order::Hessian).unwrap();
        let s2 = static_potential(&layout, &u2, &r, Order::Hessian).unwrap();
        let s12 = static_potential(&layout, &sum, &r, Order::Hessian).unwrap();
        let both = s1.sum(&s2);
        assert!((s12.value - both.value).abs() <= 1e-12 * s12.value.abs().max(both.value.abs()));
        assert!((s12.gradient - both.gradient).norm() <= 1e-12 * s12.gradient.norm());
        assert!((s12.hessian - both.hessian).norm() <= 1e-12 * s12.hessian.norm());
        let scaled: Vec<f64> = u1.iter().map(|v| 3.0 * v).collect();
        let s3 = static_potential(&layout, &scaled, &r, Order::Hessian).unwrap();
        assert!((s3.value - 3.0 * s1.value).abs() <= 1e-12 * s3.value.abs());
        assert!((s3.hessian - 3.0 * s1.hessian).norm() <= 1e-12 * s3.hessian.norm());
        assert!(static_potential(&layout, &vec![0.0; n + 1], &r, Order::Value).is_err());
    }

    #[test]
    fn rf_null_of_default_trap() {
        let layout = build_layout(ShapeKind::Rect, &LayoutConfig::default()).unwrap();
        let null = find_rf_null(&layout, 0.0).unwrap();
        assert!(null.y.abs() < 0.05 * UM);
        assert!((null.z / UM - 70.1).abs() < 0.2, "{}", null.z / UM);
        let ideal = (30.0f64 * 164.0).sqrt();
        assert!((null.z / UM / ideal - 1.0).abs() < 1e-3);
        // argmin is independent of the drive amplitude
        let be = species_constants("9Be+").unwrap();
        for amp in [10.0, 75.0, 300.0] {
            let drive = RfDrive::new(amp, 2.0 * PI * 88.191e6).unwrap();
            let at = pseudopotential(&layout, &drive, &be, &null, Order::Gradient).unwrap();
            let half = pseudopotential(&layout, &drive, &be, &EvalPoint::new(0.0, 0.0, 0.5 * null.z), Order::Value).unwrap();
            assert!(at.value <= 1e-9 * half.value);
            assert!(at.gradient.norm() < 1e-3);
        }
    }

    #[test]
    fn pseudopotential_scales_quadratically() {
        let layout = build_layout(ShapeKind::Rect, &LayoutConfig::default()).unwrap();
        let be = species_constants("9Be+").unwrap();
        let r = EvalPoint::new(0.0, 7.0 * UM, 60.0 * UM);
        let d1 = RfDrive::new(75.0, 2.0 * PI * 88.191e6).unwrap();
        let d2 = RfDrive::new(150.0, 2.0 * PI * 88.191e6).unwrap();
        let p1 = pseudopotential(&layout, &d1, &be, &r, Order::Hessian).unwrap();
        let p2 = pseudopotential(&layout, &d2, &be, &r, Order::Hessian).unwrap();
        assert!((p2.value / p1.value - 4.0).abs() < 1e-12);
        assert!((p2.hessian - 4.0 * p1.hessian).norm() <= 1e-12 * p2.hessian.norm());
    }

    #[test]
    fn pseudopotential_hessian_matches_finite_differences() {
        let layout = build_layout(ShapeKind::Rect, &LayoutConfig::default()).unwrap();
        let be = species_constants("9Be+").unwrap();
        let drive = RfDrive::new(75.0, 2.0 * PI * 88.191e6).unwrap();
        let null = find_rf_null(&layout, 0.0).unwrap();
        let analytic = pseudopotential(&layout, &drive, &be, &null, Order::Hessian).unwrap().hessian;
        let h = 0.05 * UM;
        let v = |dx: f64, dy: f64, dz: f64| {
            pseudopotential(&layout, &drive, &be, &null.offset(dx, dy, dz), Order::Value).unwrap().value
        };
        let mut fd = Matrix3::zeros();
        let e = |i: usize| {
            let mut d = [0.0; 3];
            d[i] = h;
            d
        };
        for i in 0..3 {
            for j in 0..3 {
                let (a, b) = (e(i), e(j));
                let pp = v(a[0] + b[0], a[1] + b[1], a[2] + b[2]);
                let pm = v(a[0] - b[0], a[1] - b[1], a[2] - b[2]);
                let mp = v(-a[0] + b[0], -a[1] + b[1], -a[2] + b[2]);
                let mm = v(-a[0] - b[0], -a[1] - b[1], -a[2] - b[2]);
                fd[(i, j)] = (pp - pm - mp + mm) / (4.0 * h * h);
            }
        }
        let rel = (analytic - fd).norm() / analytic.norm();
        assert!(rel < 1e-4, "relative mismatch {rel}");
    }

    #[test]
    fn total_potential_components() {
        let layout = build_layout(ShapeKind::T, &LayoutConfig::default()).unwrap();
        let be = species_constants("9Be+").unwrap();
        let drive = RfDrive::new(75.0, 2.0 * PI * 88.191e6).unwrap();
        let r = EvalPoint::new(2.0 * UM, 3.0 * UM, 69.0 * UM);
        let n = layout.dc_electrodes.len();
        let zero = vec![0.0; n];
        let psd = pseudopotential(&layout, &drive, &be, &r, Order::Hessian).unwrap();
        assert_eq!(total_potential(&layout, &drive, &be, &zero, &r, Order::Hessian).unwrap(), psd);
        let u: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let st = static_potential(&layout, &u, &r, Order::Hessian).unwrap();
        let off = RfDrive::new(0.0, 1.0).unwrap();
        let only_static = total_potential(&layout, &off, &be, &u, &r, Order::Hessian).unwrap();
        assert_eq!(only_static, st);
        let tot = total_potential(&layout, &drive, &be, &u, &r, Order::Hessian).unwrap();
        assert!((tot.value - (psd.value + st.value)).abs() <= 1e-12 * tot.value.abs());
        assert!((tot.hessian - (psd.hessian + st.hessian)).norm() <= 1e-12 * tot.hessian.norm());
    }

    #[test]
    fn normal_modes_of_diagonal_hessian() {
        let be = species_constants("9Be+").unwrap();
        let c = 1e7;
        let h = Matrix3::from_diagonal(&Vector3::new(c, c, -2.0 * c));
        let modes = normal_modes(&h, &be);
        assert!(modes[0].frequency.anti_confined);
        assert!(!modes[1].frequency.anti_confined && !modes[2].frequency.anti_confined);
        assert!((modes[1].frequency.omega - modes[2].frequency.omega).abs() < 1e-6 * modes[1].frequency.omega);
        let m = Matrix3::from_columns(&[modes[0].axis, modes[1].axis, modes[2].axis]);
        assert!((m.transpose() * m - Matrix3::identity()).norm() < 1e-12);
        assert!((m.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn radial_modes_match_line_scan_fits() {
        let layout = build_layout(ShapeKind::Rect, &LayoutConfig::default()).unwrap();
        let be = species_constants("9Be+").unwrap();
        let drive = RfDrive::new(75.0, 2.0 * PI * 88.191e6).unwrap();
        let null = find_rf_null(&layout, 0.0).unwrap();
        let n = layout.dc_electrodes.len();
        let zero = vec![0.0; n];
        let h = total_potential(&layout, &drive, &be, &zero, &null, Order::Hessian).unwrap().hessian;
        let modes = normal_modes(&h, &be);
        for mode in &modes[1..] {
            // least-squares parabola through a line scan along the mode axis
            let step = 0.2 * UM;
            let (mut s2, mut s4, mut sv2) = (0.0, 0.0, 0.0);
            let v0 = total_potential(&layout, &drive, &be, &zero, &null, Order::Value).unwrap().value;
            for k in -5i32..=5 {
                if k == 0 {
                    continue;
                }
                let d = k as f64 * step;
                let p = null.offset(d * mode.axis[0], d * mode.axis[1], d * mode.axis[2]);
                let v = total_potential(&layout, &drive, &be, &zero, &p, Order::Value).unwrap().value - v0;
                s2 += d * d;
                s4 += d.powi(4);
                sv2 += v * d * d;
                let _ = s2;
            }
            let curvature = 2.0 * sv2 / s4;
            let fit = frequency_for_curvature(&be, curvature).omega;
            let rel = (fit / mode.frequency.omega - 1.0).abs();
            assert!(rel < 1e-3, "{rel}");
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let tri = PolygonElectrode::new(
            "t",
            vec![[-20.0 * UM, -30.0 * UM], [35.0 * UM, -30.0 * UM], [5.0 * UM, 30.0 * UM]],
            Role::Dc,
        )
        .unwrap();
        let r = EvalPoint::new(7.0 * UM, 11.0 * UM, 50.0 * UM);
        let s = unit_field(&tri, &r, Order::Hessian).unwrap();
        let h = 1e-8;
        for k in 0..3 {
            let mut d = [0.0; 3];
            d[k] = h;
            let f = |c: f64| unit_field(&tri, &r.offset(c * d[0], c * d[1], c * d[2]), Order::Gradient).unwrap();
            let (p, m) = (f(1.0), f(-1.0));
            let (p2, m2) = (f(0.5), f(-0.5));
            let gv = (4.0 * (p2.value - m2.value) / h - (p.value - m.value) / (2.0 * h)) / 3.0;
            assert!((gv - s.gradient[k]).abs() < 1e-6 * s.gradient.norm());
            let col = (4.0 * (p2.gradient - m2.gradient) / h - (p.gradient - m.gradient) / (2.0 * h)) / 3.0;
            for j in 0..3 {
                assert!((col[j] - s.hessian[(j, k)]).abs() < 1e-6 * s.hessian.norm());
            }
        }
    }
}
