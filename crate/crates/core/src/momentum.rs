//! Centroidal momentum model: contact map `A`, its derivative, `Ḣ`, `Ḧ`
//! and a fixed-step RK4 momentum plant.

use nalgebra::{DVector, SVector, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{skew, Mat};
use crate::wrench::{stack_gradient, stack_phi, ContactGeometry, WrenchStack, Xi, XiStack};

/// Standard gravity (m/s²).
pub const DEFAULT_GRAVITY: f64 = 9.81;

/// A contact frame fixed in the inertial frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactFrame {
    /// Frame origin (m).
    pub origin: Vector3<f64>,
    /// Origin velocity (m/s); zero for rigid contacts.
    #[serde(default = "Vector3::zeros")]
    pub origin_velocity: Vector3<f64>,
    pub geometry: ContactGeometry,
}

impl ContactFrame {
    pub fn rigid(origin: Vector3<f64>, geometry: ContactGeometry) -> Self {
        Self {
            origin,
            origin_velocity: Vector3::zeros(),
            geometry,
        }
    }
}

/// Geometries of a frame list, in order.
pub fn geometries(frames: &[ContactFrame]) -> Vec<ContactGeometry> {
    frames.iter().map(|f| f.geometry).collect()
}

/// Momentum-plant state plus the controller's integral and exogenous states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumState {
    /// `[linear (kg·m/s); angular (kg·m²/s)]`.
    pub h: Vector6<f64>,
    /// Center of mass (m).
    pub com: Vector3<f64>,
    /// `∫ (H − H_d) dt`.
    pub i_err: Vector6<f64>,
    pub zeta: Vector6<f64>,
    /// Total mass (kg).
    pub mass: f64,
    /// Gravity norm (m/s²).
    pub gravity: f64,
}

impl MomentumState {
    pub fn new(mass: f64, com: Vector3<f64>) -> Result<Self> {
        let s = Self {
            h: Vector6::zeros(),
            com,
            i_err: Vector6::zeros(),
            zeta: Vector6::zeros(),
            mass,
            gravity: DEFAULT_GRAVITY,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) || !self.mass.is_finite() {
            return Err(Error::InvalidInput(format!("mass must be > 0, got {}", self.mass)));
        }
        let finite = self.h.iter().chain(self.com.iter()).chain(self.i_err.iter()).chain(self.zeta.iter())
            .all(|v| v.is_finite())
            && self.gravity.is_finite();
        if !finite {
            return Err(Error::InvalidInput("momentum state has non-finite entries".into()));
        }
        Ok(())
    }

    /// Center-of-mass velocity `H_lin / m`.
    pub fn com_velocity(&self) -> Vector3<f64> {
        self.h.fixed_rows::<3>(0) / self.mass
    }

    /// `m g e3`: the gravity wrench magnitude on the vertical-force component.
    pub fn weight(&self) -> Vector6<f64> {
        Vector6::new(0.0, 0.0, self.mass * self.gravity, 0.0, 0.0, 0.0)
    }
}

fn check_frames(frames: &[ContactFrame]) -> Result<()> {
    if frames.is_empty() {
        return Err(Error::InvalidInput("at least one contact frame is required".into()));
    }
    let finite = frames
        .iter()
        .all(|f| f.origin.iter().chain(f.origin_velocity.iter()).all(|v| v.is_finite()));
    if !finite {
        return Err(Error::InvalidInput("contact frame has non-finite entries".into()));
    }
    Ok(())
}

/// `A = [A_1 … A_nc]`, `A_k = [[I, 0], [S(o_k − o_com), I]]`.
pub fn contact_map(frames: &[ContactFrame], com: &Vector3<f64>) -> Result<Mat> {
    check_frames(frames)?;
    let mut a = Mat::zeros(6, 6 * frames.len());
    for (k, fr) in frames.iter().enumerate() {
        let c = 6 * k;
        a.view_mut((0, c), (3, 3)).fill_with_identity();
        a.view_mut((3, c + 3), (3, 3)).fill_with_identity();
        a.view_mut((3, c), (3, 3)).copy_from(&skew(&(fr.origin - com)));
    }
    Ok(a)
}

/// `Ȧ_k = [[0, 0], [S(ȯ_k − ȯ_com), 0]]`.
pub fn contact_map_dot(frames: &[ContactFrame], com_velocity: &Vector3<f64>) -> Result<Mat> {
    check_frames(frames)?;
    let mut a = Mat::zeros(6, 6 * frames.len());
    for (k, fr) in frames.iter().enumerate() {
        a.view_mut((3, 6 * k), (3, 3))
            .copy_from(&skew(&(fr.origin_velocity - com_velocity)));
    }
    Ok(a)
}

fn check_stack(a: &Mat, len: usize, what: &str) -> Result<()> {
    if a.nrows() != 6 || a.ncols() != len {
        return Err(Error::DimensionMismatch(format!(
            "{what}: contact map is {}x{}, stacked vector has {len} entries",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

/// `Ḣ = A f − m g e3`.
pub fn hdot(f: &WrenchStack, a: &Mat, mass: f64, gravity: f64) -> Result<Vector6<f64>> {
    let fv = f.to_dvector();
    check_stack(a, fv.len(), "hdot")?;
    let mut out = Vector6::from_column_slice((a * fv).as_slice());
    out[2] -= mass * gravity;
    Ok(out)
}

/// `Ḧ = A Φ(ξ) ξ̇ + Ȧ f`.
pub fn hddot(
    xis: &XiStack,
    xi_dot: &DVector<f64>,
    f: &WrenchStack,
    geoms: &[ContactGeometry],
    a: &Mat,
    a_dot: &Mat,
) -> Result<Vector6<f64>> {
    let n = 6 * xis.len();
    check_stack(a, n, "hddot")?;
    check_stack(a_dot, n, "hddot")?;
    if xi_dot.len() != n || f.len() != xis.len() {
        return Err(Error::InvalidInput(format!(
            "hddot: xi_dot has {} entries and {} wrenches for {} contacts",
            xi_dot.len(),
            f.len(),
            xis.len()
        )));
    }
    let phi = stack_gradient(xis, geoms)?;
    debug_assert!({
        let expected = stack_phi(xis, geoms)?.to_dvector();
        (expected - f.to_dvector()).norm() <= 1e-6 * (1.0 + f.to_dvector().norm())
    });
    let out = a * (phi * xi_dot) + a_dot * f.to_dvector();
    Ok(Vector6::from_column_slice(out.as_slice()))
}

/// `Σ_k [f_lin; (o_k − com) × f_lin + f_ang]`, equal to `A f` without forming `A`.
fn net_wrench(frames: &[ContactFrame], com: &Vector3<f64>, f: &WrenchStack) -> Vector6<f64> {
    let mut out = Vector6::zeros();
    for (fr, w) in frames.iter().zip(&f.0) {
        let lin = w.0.fixed_rows::<3>(0).into_owned();
        let ang = w.0.fixed_rows::<3>(3) + (fr.origin - com).cross(&lin);
        out += Vector6::new(lin.x, lin.y, lin.z, ang.x, ang.y, ang.z);
    }
    out
}

/// Integrated plant state `[H; com; I]`.
type PlantVec = SVector<f64, 15>;

fn pack(s: &MomentumState) -> PlantVec {
    let mut v = PlantVec::zeros();
    v.fixed_rows_mut::<6>(0).copy_from(&s.h);
    v.fixed_rows_mut::<3>(6).copy_from(&s.com);
    v.fixed_rows_mut::<6>(9).copy_from(&s.i_err);
    v
}

fn unpack(v: &PlantVec, template: &MomentumState) -> MomentumState {
    MomentumState {
        h: v.fixed_rows::<6>(0).into_owned(),
        com: v.fixed_rows::<3>(6).into_owned(),
        i_err: v.fixed_rows::<6>(9).into_owned(),
        ..*template
    }
}

/// Momentum reference used to integrate `I = ∫ (H − H_d) dt` inside the plant.
pub type MomentumReference<'a> = &'a dyn Fn(f64) -> Vector6<f64>;

struct PlantInputs<'a> {
    frames: &'a [ContactFrame],
    geoms: Vec<ContactGeometry>,
    xis: &'a XiStack,
    xi_dot: Option<&'a DVector<f64>>,
    disturbance: Vector6<f64>,
    reference: Option<(MomentumReference<'a>, f64)>,
}

impl PlantInputs<'_> {
    fn xi_at(&self, s: f64) -> XiStack {
        match self.xi_dot {
            None => self.xis.clone(),
            Some(d) => XiStack(
                self.xis
                    .0
                    .iter()
                    .enumerate()
                    .map(|(k, x)| Xi(x.0 + d.fixed_rows::<6>(6 * k) * s))
                    .collect(),
            ),
        }
    }

    fn derivative(&self, s: f64, v: &PlantVec, template: &MomentumState) -> Result<PlantVec> {
        let st = unpack(v, template);
        let f = stack_phi(&self.xi_at(s), &self.geoms)?;
        let mut hd = net_wrench(self.frames, &st.com, &f) + self.disturbance;
        hd[2] -= st.mass * st.gravity;
        let mut out = PlantVec::zeros();
        out.fixed_rows_mut::<6>(0).copy_from(&hd);
        out.fixed_rows_mut::<3>(6).copy_from(&st.com_velocity());
        if let Some((href, t0)) = self.reference {
            out.fixed_rows_mut::<6>(9).copy_from(&(st.h - href(t0 + s)));
        }
        Ok(out)
    }

    fn rk4(&self, state: &MomentumState, dt: f64) -> Result<MomentumState> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidInput(format!("dt must be > 0, got {dt}")));
        }
        if self.xis.len() != self.frames.len() {
            return Err(Error::InvalidInput(format!(
                "{} parameter blocks for {} contact frames",
                self.xis.len(),
                self.frames.len()
            )));
        }
        check_frames(self.frames)?;
        let y = pack(state);
        let k1 = self.derivative(0.0, &y, state)?;
        let k2 = self.derivative(dt / 2.0, &(y + k1 * (dt / 2.0)), state)?;
        let k3 = self.derivative(dt / 2.0, &(y + k2 * (dt / 2.0)), state)?;
        let k4 = self.derivative(dt, &(y + k3 * dt), state)?;
        Ok(unpack(&(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)), state))
    }
}

/// One RK4 step of `Ḣ = A f − m g e3 + d`, `ȯ_com = H_lin / m` with the
/// wrench `φ(ξ)` held constant. `I` and `ζ` are carried unchanged.
pub fn plant_step(
    state: &MomentumState,
    frames: &[ContactFrame],
    xis: &XiStack,
    dt: f64,
    disturbance: &Vector6<f64>,
) -> Result<MomentumState> {
    PlantInputs {
        frames,
        geoms: geometries(frames),
        xis,
        xi_dot: None,
        disturbance: *disturbance,
        reference: None,
    }
    .rk4(state, dt)
}

/// RK4 step with `ξ̇` held: inside the step `ξ(s) = ξ + ξ̇ s` and the wrench
/// is `φ(ξ(s))`. When `reference = Some((H_d, t0))` the integral state is
/// advanced along with the plant. Returns the new state and `ξ(dt)`.
pub fn plant_step_held(
    state: &MomentumState,
    frames: &[ContactFrame],
    xis: &XiStack,
    xi_dot: &DVector<f64>,
    dt: f64,
    disturbance: &Vector6<f64>,
    reference: Option<(MomentumReference<'_>, f64)>,
) -> Result<(MomentumState, XiStack)> {
    if xi_dot.len() != 6 * xis.len() {
        return Err(Error::InvalidInput(format!(
            "xi_dot has {} entries for {} contacts",
            xi_dot.len(),
            xis.len()
        )));
    }
    let inputs = PlantInputs {
        frames,
        geoms: geometries(frames),
        xis,
        xi_dot: Some(xi_dot),
        disturbance: *disturbance,
        reference,
    };
    let next = inputs.rk4(state, dt)?;
    Ok((next, inputs.xi_at(dt)))
}
