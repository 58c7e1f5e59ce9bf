//! Momentum jerk control laws and the wrench-to-torque map.
//!
//! Every law returns `ξ̇`; contact wrenches follow by integrating `ξ` and
//! evaluating `φ(ξ)`, so they remain contact-stable and continuous in time.

use nalgebra::{DVector, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{pinv, pinv_rank, projector_from_pinv, Mat};
use crate::momentum::{contact_map, contact_map_dot, geometries, ContactFrame, MomentumState};
use crate::sot::DynamicsSample;
use crate::wrench::{stack_gradient, stack_phi_inverse, SaturationPolicy, WrenchStack, XiStack};

/// Relative rank tolerance for `AΦ` and `Λ` pseudoinverses.
pub const CONTROL_RANK_TOL: f64 = 1e-8;

fn is_spd(m: &Mat) -> bool {
    let scale = 1.0 + m.amax();
    m.is_square()
        && m.iter().all(|v| v.is_finite())
        && (m - m.transpose()).amax() <= 1e-12 * scale
        && m.clone().cholesky().is_some()
}

fn to_mat6(m: &Matrix6<f64>) -> Mat {
    Mat::from_column_slice(6, 6, m.as_slice())
}

/// Gain matrix as written in a scenario file: a scalar multiple of the
/// identity, a diagonal, or a full row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainSpec {
    Scalar(f64),
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl GainSpec {
    pub fn to_matrix(&self, dim: usize) -> std::result::Result<Mat, String> {
        match self {
            GainSpec::Scalar(s) => Ok(Mat::identity(dim, dim) * *s),
            GainSpec::Diagonal(d) if d.len() == dim => Ok(Mat::from_diagonal(&DVector::from_column_slice(d))),
            GainSpec::Diagonal(d) => Err(format!("diagonal has {} entries, expected {dim}", d.len())),
            GainSpec::Full(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(format!("full gain must be {dim}x{dim}"));
                }
                Ok(Mat::from_fn(dim, dim, |i, j| rows[i][j]))
            }
        }
    }
}

/// Gains as read from a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainConfig {
    pub kp: GainSpec,
    pub kd: GainSpec,
    #[serde(default = "unit_gain")]
    pub ko: GainSpec,
    #[serde(default)]
    pub ki: Option<GainSpec>,
    #[serde(default)]
    pub k_e: f64,
    #[serde(default)]
    pub k_tau: Option<GainSpec>,
}

fn unit_gain() -> GainSpec {
    GainSpec::Scalar(1.0)
}

impl GainConfig {
    /// Converts to a validated [`GainSet`]; `joints` sizes `K_τ`.
    pub fn build(&self, joints: usize, path: &str) -> std::result::Result<GainSet, Vec<String>> {
        let mut issues = Vec::new();
        let mut six = |name: &str, spec: &GainSpec| -> Option<Matrix6<f64>> {
            match spec.to_matrix(6) {
                Ok(m) if is_spd(&m) => Some(Matrix6::from_column_slice(m.as_slice())),
                Ok(_) => {
                    issues.push(format!("{path}.{name}: must be symmetric positive definite"));
                    None
                }
                Err(e) => {
                    issues.push(format!("{path}.{name}: {e}"));
                    None
                }
            }
        };
        let kp = six("kp", &self.kp);
        let kd = six("kd", &self.kd);
        let ko = six("ko", &self.ko);
        let ki = self.ki.as_ref().map(|k| six("ki", k));
        if !(self.k_e >= 0.0) || !self.k_e.is_finite() {
            issues.push(format!("{path}.k_e: must be finite and >= 0, got {}", self.k_e));
        }
        let k_tau = match &self.k_tau {
            None => None,
            Some(spec) => match spec.to_matrix(joints) {
                Ok(m) if is_spd(&m) => Some(m),
                Ok(_) => {
                    issues.push(format!("{path}.k_tau: must be symmetric positive definite"));
                    None
                }
                Err(e) => {
                    issues.push(format!("{path}.k_tau: {e}"));
                    None
                }
            },
        };
        if !issues.is_empty() {
            return Err(issues);
        }
        Ok(GainSet {
            kp: kp.unwrap(),
            kd: kd.unwrap(),
            ko: ko.unwrap(),
            ki: ki.flatten(),
            k_e: self.k_e,
            k_tau,
        })
    }
}

/// Validated controller gains.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    pub kp: Matrix6<f64>,
    pub kd: Matrix6<f64>,
    pub ko: Matrix6<f64>,
    pub ki: Option<Matrix6<f64>>,
    /// Regularization gain `k_e ≥ 0`.
    pub k_e: f64,
    /// Torque decay gain `K_τ` (n×n).
    pub k_tau: Option<Mat>,
}

impl GainSet {
    /// Checks symmetry and positive definiteness of every matrix gain.
    pub fn new(
        kp: Matrix6<f64>,
        kd: Matrix6<f64>,
        ko: Matrix6<f64>,
        ki: Option<Matrix6<f64>>,
        k_e: f64,
        k_tau: Option<Mat>,
    ) -> Result<Self> {
        let mut issues = Vec::new();
        for (name, m) in [("kp", Some(kp)), ("kd", Some(kd)), ("ko", Some(ko)), ("ki", ki)] {
            if let Some(m) = m {
                if !is_spd(&to_mat6(&m)) {
                    issues.push(format!("{name}: must be symmetric positive definite"));
                }
            }
        }
        if let Some(k) = &k_tau {
            if !is_spd(k) {
                issues.push("k_tau: must be symmetric positive definite".into());
            }
        }
        if !(k_e >= 0.0) || !k_e.is_finite() {
            issues.push(format!("k_e: must be finite and >= 0, got {k_e}"));
        }
        if !issues.is_empty() {
            return Err(Error::Config(issues));
        }
        Ok(Self { kp, kd, ko, ki, k_e, k_tau })
    }

    /// `Kp = kp·I`, `Kd = kd·I`, `Ko = I`, no integral or torque gains.
    pub fn scalar(kp: f64, kd: f64) -> Result<Self> {
        Self::new(Matrix6::identity() * kp, Matrix6::identity() * kd, Matrix6::identity(), None, 0.0, None)
    }
}

/// Momentum reference `(H_d, Ḣ_d, Ḧ_d)` at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReferenceSample {
    pub h_d: Vector6<f64>,
    pub h_d_dot: Vector6<f64>,
    pub h_d_ddot: Vector6<f64>,
}

/// Quantities shared by all momentum laws at one control instant.
///
/// `Ḣ̃` and `Ȧ f` use the measured wrenches, `H̃` the momentum state.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumContext {
    pub a: Mat,
    pub a_dot: Mat,
    pub phi: Mat,
    pub a_phi: Mat,
    pub f_measured: DVector<f64>,
    pub h_err: Vector6<f64>,
    pub hdot_err: Vector6<f64>,
    pub a_dot_f: Vector6<f64>,
    pub i_err: Vector6<f64>,
    pub reference: ReferenceSample,
}

impl MomentumContext {
    pub fn new(
        state: &MomentumState,
        frames: &[ContactFrame],
        xis: &XiStack,
        f_measured: &WrenchStack,
        reference: &ReferenceSample,
    ) -> Result<Self> {
        let geoms = geometries(frames);
        if f_measured.len() != frames.len() {
            return Err(Error::InvalidInput(format!(
                "{} measured wrenches for {} contacts",
                f_measured.len(),
                frames.len()
            )));
        }
        let a = contact_map(frames, &state.com)?;
        let a_dot = contact_map_dot(frames, &state.com_velocity())?;
        let phi = stack_gradient(xis, &geoms)?;
        let f = f_measured.to_dvector();
        let mut hdot = v6(&(&a * &f));
        hdot[2] -= state.mass * state.gravity;
        Ok(Self {
            a_phi: &a * &phi,
            a_dot_f: v6(&(&a_dot * &f)),
            a,
            a_dot,
            phi,
            f_measured: f,
            h_err: state.h - reference.h_d,
            hdot_err: hdot - reference.h_d_dot,
            i_err: state.i_err,
            reference: *reference,
        })
    }

    /// `Ḧ` produced by a given `ξ̇`: `AΦ ξ̇ + Ȧ f`.
    pub fn hddot(&self, xi_dot: &DVector<f64>) -> Vector6<f64> {
        v6(&(&self.a_phi * xi_dot)) + self.a_dot_f
    }

    /// `ζ = Ḣ̃ + K_d H̃ + K_p I`.
    pub fn zeta(&self, gains: &GainSet) -> Vector6<f64> {
        self.hdot_err + gains.kd * self.h_err + gains.kp * self.i_err
    }
}

fn v6(v: &DVector<f64>) -> Vector6<f64> {
    Vector6::from_column_slice(v.as_slice())
}

/// Output of a momentum law.
#[derive(Debug, Clone, PartialEq)]
pub struct LawOutput {
    pub xi_dot: DVector<f64>,
    /// Momentum acceleration the law asked for.
    pub hddot_target: Vector6<f64>,
    /// `‖AΦ ξ̇ + Ȧ f − Ḧ*‖ / (1 + ‖Ḧ*‖)`, regularization excluded.
    pub residual: f64,
    /// `N_{AΦ}`, needed for null-space terms.
    pub nullspace: Mat,
}

/// `ξ̇ = (AΦ)⁺ (Ḧ* − Ȧf) + N_{AΦ} ξ̇₀`.
fn solve_for_hddot(ctx: &MomentumContext, target: Vector6<f64>, xi0: Option<&DVector<f64>>) -> Result<LawOutput> {
    let k = ctx.a_phi.ncols();
    let p = pinv_rank(&ctx.a_phi, CONTROL_RANK_TOL)?;
    let nullspace = projector_from_pinv(&ctx.a_phi, &p.matrix);
    let rhs = DVector::from_column_slice((target - ctx.a_dot_f).as_slice());
    let mut xi_dot = &p.matrix * rhs;
    if let Some(x0) = xi0 {
        if x0.len() != k {
            return Err(Error::DimensionMismatch(format!("xi0 has {} entries, expected {k}", x0.len())));
        }
        xi_dot += &nullspace * x0;
    }
    let residual = (ctx.hddot(&xi_dot) - target).norm() / (1.0 + target.norm());
    if p.rank < 6 {
        return Err(Error::DegradedAuthority {
            rank: p.rank,
            residual,
            xi_dot: xi_dot.as_slice().to_vec(),
        });
    }
    Ok(LawOutput {
        xi_dot,
        hddot_target: target,
        residual,
        nullspace,
    })
}

/// Feedback linearization: `Ḧ* = Ḧ_d − K_d Ḣ̃ − K_p H̃` (and `− K_i I` when
/// `with_integral` is set and `K_i` is configured).
pub fn fb_lin_xidot(ctx: &MomentumContext, gains: &GainSet, with_integral: bool, xi0: Option<&DVector<f64>>) -> Result<LawOutput> {
    let mut target = ctx.reference.h_d_ddot - gains.kd * ctx.hdot_err - gains.kp * ctx.h_err;
    if with_integral {
        let ki = gains
            .ki
            .ok_or_else(|| Error::InvalidInput("integral variant requires ki".into()))?;
        target -= ki * ctx.i_err;
    }
    solve_for_hddot(ctx, target, xi0)
}

/// Integral-augmented law:
/// `Ḧ* = Ḧ_d − (K_d + 1) Ḣ̃ − (K_d + K_o⁻¹ + K_p) H̃ − K_p I`.
pub fn momentum_jerk_xidot(ctx: &MomentumContext, gains: &GainSet, xi0: Option<&DVector<f64>>) -> Result<LawOutput> {
    let ko_inv = gains
        .ko
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("ko is singular".into()))?;
    let id = Matrix6::identity();
    let target = ctx.reference.h_d_ddot
        - (gains.kd + id) * ctx.hdot_err
        - (gains.kd + ko_inv + gains.kp) * ctx.h_err
        - gains.kp * ctx.i_err;
    solve_for_hddot(ctx, target, xi0)
}

/// `−k_e (ξ − ξ_d)`, stacked.
pub fn regularization_term(xis: &XiStack, xi_d: &XiStack, k_e: f64) -> Result<DVector<f64>> {
    if xis.len() != xi_d.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} contacts", xis.len(), xi_d.len())));
    }
    Ok((xis.to_dvector() - xi_d.to_dvector()) * -k_e)
}

/// Integral-augmented law plus `−k_e (ξ − ξ_d)`.
///
/// On degraded authority the error carries the regularized best-effort `ξ̇`.
pub fn regularized_xidot(
    ctx: &MomentumContext,
    gains: &GainSet,
    xi0: Option<&DVector<f64>>,
    xis: &XiStack,
    xi_d: &XiStack,
) -> Result<LawOutput> {
    let reg = regularization_term(xis, xi_d, gains.k_e)?;
    match momentum_jerk_xidot(ctx, gains, xi0) {
        Ok(mut out) => {
            out.xi_dot += reg;
            Ok(out)
        }
        Err(Error::DegradedAuthority { rank, residual, xi_dot }) => Err(Error::DegradedAuthority {
            rank,
            residual,
            xi_dot: (DVector::from_vec(xi_dot) + reg).as_slice().to_vec(),
        }),
        Err(e) => Err(e),
    }
}

/// `V = ½ IᵀK_p I + ½ H̃ᵀH̃ + ½ ζᵀK_o ζ`.
pub fn lyapunov_integral(i_err: &Vector6<f64>, h_err: &Vector6<f64>, zeta: &Vector6<f64>, gains: &GainSet) -> f64 {
    0.5 * (i_err.dot(&(gains.kp * i_err)) + h_err.dot(h_err) + zeta.dot(&(gains.ko * zeta)))
}

/// `V = ½ H̃ᵀK_p H̃ + ½ Ḣ̃ᵀḢ̃` for the feedback-linearizing law.
pub fn lyapunov_fb_lin(h_err: &Vector6<f64>, hdot_err: &Vector6<f64>, gains: &GainSet) -> f64 {
    0.5 * (h_err.dot(&(gains.kp * h_err)) + hdot_err.dot(hdot_err))
}

/// `ζ̇ + ζ + K_o⁻¹ H̃` for the `ξ̇` actually applied; zero for the integral law
/// when `AΦ` is invertible.
pub fn zeta_identity_residual(ctx: &MomentumContext, gains: &GainSet, xi_dot: &DVector<f64>) -> Result<Vector6<f64>> {
    let ko_inv = gains
        .ko
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("ko is singular".into()))?;
    let h_err_ddot = ctx.hddot(xi_dot) - ctx.reference.h_d_ddot;
    let zeta_dot = h_err_ddot + gains.kd * ctx.hdot_err + gains.kp * ctx.h_err;
    Ok(zeta_dot + ctx.zeta(gains) + ko_inv * ctx.h_err)
}

/// Desired parameters: `f_d = A⁺ (Ḣ_d + m g e3)` (minimum norm), then the
/// saturated per-contact inverse. The flag reports active saturation.
pub fn compute_xi_d(
    h_d_dot: &Vector6<f64>,
    frames: &[ContactFrame],
    com: &Vector3<f64>,
    mass: f64,
    gravity: f64,
    policy: &SaturationPolicy,
) -> Result<(XiStack, WrenchStack, bool)> {
    let a = contact_map(frames, com)?;
    let mut rhs = *h_d_dot;
    rhs[2] += mass * gravity;
    let f_d = pinv(&a, CONTROL_RANK_TOL)? * DVector::from_column_slice(rhs.as_slice());
    let f_d = WrenchStack::from_slice(f_d.as_slice())?;
    let (xi_d, saturated) = stack_phi_inverse(&f_d, &geometries(frames), policy)?;
    Ok((xi_d, f_d, saturated))
}

/// Joint torques from contact wrenches.
#[derive(Debug, Clone, PartialEq)]
pub struct TorqueSolution {
    pub tau: DVector<f64>,
    /// `‖J M⁻¹ (Jᵀ f − h) + Λ τ + J̇ν‖ / (1 + ‖J M⁻¹ (h − Jᵀ f) − J̇ν‖)`.
    pub residual: f64,
    pub rank: usize,
}

/// `Λ = J M⁻¹ B`, `Θ = −Λ⁺ J M⁻¹ Jᵀ`, `θ = Λ⁺ (J M⁻¹ h − J̇ν) + N_Λ τ₀`:
/// the affine map `τ = Θ f + θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TorqueMap {
    pub lambda: Mat,
    pub lambda_pinv: Mat,
    pub n_lambda: Mat,
    pub theta: Mat,
    pub theta_offset: DVector<f64>,
    pub rank: usize,
    jminv_jt: Mat,
    jminv_h: DVector<f64>,
    jdot_nu: DVector<f64>,
}

impl TorqueMap {
    /// Fails with [`Error::ActuationDeficiency`] when `Λ` is not of full rank
    /// (`min(6n_c, n)`).
    pub fn new(sample: &DynamicsSample, tau0: Option<&DVector<f64>>) -> Result<Self> {
        let m_inv = sample.m_inv()?;
        let j_minv = &sample.j * m_inv;
        let lambda = &j_minv * &sample.b;
        let p = pinv_rank(&lambda, CONTROL_RANK_TOL)?;
        let expected = lambda.nrows().min(lambda.ncols());
        if p.rank < expected {
            return Err(Error::ActuationDeficiency { rank: p.rank, expected });
        }
        let n_lambda = projector_from_pinv(&lambda, &p.matrix);
        let jminv_jt = &j_minv * sample.j.transpose();
        let jminv_h = &j_minv * &sample.h;
        let mut theta_offset = &p.matrix * (&jminv_h - &sample.jdot_nu);
        if let Some(t0) = tau0 {
            if t0.len() != sample.n {
                return Err(Error::DimensionMismatch(format!("tau0 has {} entries, expected {}", t0.len(), sample.n)));
            }
            theta_offset += &n_lambda * t0;
        }
        Ok(Self {
            theta: -(&p.matrix * &jminv_jt),
            lambda,
            lambda_pinv: p.matrix,
            n_lambda,
            theta_offset,
            rank: p.rank,
            jminv_jt,
            jminv_h,
            jdot_nu: sample.jdot_nu.clone(),
        })
    }

    pub fn torque(&self, f: &DVector<f64>) -> Result<TorqueSolution> {
        if f.len() != self.theta.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "wrench stack has {} entries, expected {}",
                f.len(),
                self.theta.ncols()
            )));
        }
        let tau = &self.theta * f + &self.theta_offset;
        let rhs = &self.jminv_h - &self.jminv_jt * f - &self.jdot_nu;
        let residual = (&self.jminv_jt * f - &self.jminv_h + &self.lambda * &tau + &self.jdot_nu).norm() / (1.0 + rhs.norm());
        Ok(TorqueSolution { tau, residual, rank: self.rank })
    }
}

/// `τ = Λ⁺ (J M⁻¹ (h − Jᵀ f) − J̇ν) + N_Λ τ₀`.
pub fn torque_from_wrench(sample: &DynamicsSample, f: &WrenchStack, tau0: Option<&DVector<f64>>) -> Result<TorqueSolution> {
    TorqueMap::new(sample, tau0)?.torque(&f.to_dvector())
}

/// Time derivatives of `Θ` and `θ` used by [`xi0_torque_min`].
#[derive(Debug, Clone, PartialEq)]
pub enum ThetaDot {
    Zero,
    Given { theta_dot: Mat, theta_offset_dot: DVector<f64> },
}

impl ThetaDot {
    /// Backward difference between two torque maps.
    pub fn finite_difference(current: &TorqueMap, prev: &TorqueMap, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("dt must be > 0, got {dt}")));
        }
        Ok(ThetaDot::Given {
            theta_dot: (&current.theta - &prev.theta) / dt,
            theta_offset_dot: (&current.theta_offset - &prev.theta_offset) / dt,
        })
    }
}

/// Null-space input that drives `τ̇ → −K_τ τ` in the least-squares sense:
/// `ξ̇₀ = −(Θ Φ N_{AΦ})⁺ (Θ̇ f + Θ Φ ξ̇₁ + θ̇ + K_τ τ)`.
///
/// Returns exactly zero when `N_{AΦ}` vanishes (single contact).
#[allow(clippy::too_many_arguments)]
pub fn xi0_torque_min(
    map: &TorqueMap,
    f: &DVector<f64>,
    phi: &Mat,
    nullspace: &Mat,
    xi_dot_1: &DVector<f64>,
    tau: &DVector<f64>,
    k_tau: Option<&Mat>,
    theta_dot: &ThetaDot,
) -> Result<DVector<f64>> {
    let k = phi.ncols();
    if nullspace.amax() <= CONTROL_RANK_TOL {
        return Ok(DVector::zeros(k));
    }
    let theta_phi = &map.theta * phi;
    let mut rhs = &theta_phi * xi_dot_1;
    if let ThetaDot::Given { theta_dot, theta_offset_dot } = theta_dot {
        rhs += theta_dot * f + theta_offset_dot;
    }
    if let Some(kt) = k_tau {
        rhs += kt * tau;
    }
    let m = theta_phi * nullspace;
    Ok(-pinv(&m, CONTROL_RANK_TOL)? * rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::momentum::ContactFrame;
    use crate::wrench::{phi, stack_phi, ContactGeometry, Xi};

    fn state(com: Vector3<f64>) -> MomentumState {
        MomentumState::new(30.0, com).unwrap()
    }

    fn gains() -> GainSet {
        GainSet::new(
            Matrix6::identity() * 4.0,
            Matrix6::identity() * 4.0,
            Matrix6::identity() * 2.0,
            Some(Matrix6::identity()),
            0.5,
            None,
        )
        .unwrap()
    }

    #[test]
    fn gain_validation() {
        let mut bad = Matrix6::identity();
        bad[(0, 1)] = 0.5;
        assert!(GainSet::new(bad, Matrix6::identity(), Matrix6::identity(), None, 0.0, None).is_err());
        assert!(GainSet::new(-Matrix6::identity(), Matrix6::identity(), Matrix6::identity(), None, 0.0, None).is_err());
        assert!(GainSet::scalar(1.0, 1.0).is_ok());
        let cfg: GainConfig = serde_json::from_str(r#"{"kp": 4, "kd": [1,2,3,4,5,6], "k_e": -1}"#).unwrap();
        let issues = cfg.build(0, "controller.gains").unwrap_err();
        assert_eq!(issues, vec!["controller.gains.k_e: must be finite and >= 0, got -1".to_string()]);
        let cfg: GainConfig = serde_json::from_str(r#"{"kp": 4, "kd": 1, "k_tau": 2}"#).unwrap();
        assert_eq!(cfg.build(3, "g").unwrap().k_tau.unwrap(), Mat::identity(3, 3) * 2.0);
    }

    fn single_contact_setup(xi: Xi) -> (Vec<ContactFrame>, XiStack, WrenchStack) {
        let frames = vec![ContactFrame::rigid(Vector3::new(0.02, -0.01, 0.0), ContactGeometry::default())];
        let xis = XiStack(vec![xi]);
        let f = stack_phi(&xis, &geometries(&frames)).unwrap();
        (frames, xis, f)
    }

    #[test]
    fn equilibrium_gives_zero_rate() {
        let g = ContactGeometry::default();
        let frames = vec![ContactFrame::rigid(Vector3::zeros(), g)];
        let s = state(Vector3::new(0.0, 0.0, 0.8));
        let (xi_d, f_d, sat) = compute_xi_d(&Vector6::zeros(), &frames, &s.com, s.mass, s.gravity, &Default::default()).unwrap();
        assert!(!sat);
        assert!((f_d.0[0].0 - Vector6::new(0.0, 0.0, 30.0 * 9.81, 0.0, 0.0, 0.0)).amax() < 1e-9);
        assert!((phi(&xi_d.0[0], &g).0 - f_d.0[0].0).amax() < 1e-8);
        let ctx = MomentumContext::new(&s, &frames, &xi_d, &f_d, &ReferenceSample::default()).unwrap();
        for out in [
            fb_lin_xidot(&ctx, &gains(), false, None).unwrap(),
            momentum_jerk_xidot(&ctx, &gains(), None).unwrap(),
        ] {
            assert!(out.xi_dot.amax() < 1e-9);
        }
    }

    #[test]
    fn xi_d_splits_evenly() {
        let g = ContactGeometry::default();
        let frames = vec![
            ContactFrame::rigid(Vector3::new(0.0, 0.1, 0.0), g),
            ContactFrame::rigid(Vector3::new(0.0, -0.1, 0.0), g),
        ];
        let (_, f_d, _) = compute_xi_d(&Vector6::zeros(), &frames, &Vector3::new(0.0, 0.0, 0.8), 30.0, 9.81, &Default::default()).unwrap();
        for w in &f_d.0 {
            assert!((w.fz() - 15.0 * 9.81).abs() < 1e-9);
            assert!(w.fx().abs() < 1e-9 && w.mx().abs() < 1e-9);
        }
    }

    #[test]
    fn single_contact_achieves_target() {
        let (frames, xis, f) = single_contact_setup(Xi(Vector6::new(0.3, -0.2, 5.0, 0.4, -0.1, 0.2)));
        let mut s = state(Vector3::new(0.0, 0.0, 0.8));
        s.h = Vector6::new(0.5, -0.2, 0.1, 0.3, 0.0, -0.4);
        s.i_err = Vector6::new(0.1, 0.0, 0.0, 0.0, 0.2, 0.0);
        let r = ReferenceSample { h_d_ddot: Vector6::repeat(0.1), ..Default::default() };
        let ctx = MomentumContext::new(&s, &frames, &xis, &f, &r).unwrap();
        for (out, with_int) in [(fb_lin_xidot(&ctx, &gains(), false, None).unwrap(), false), (fb_lin_xidot(&ctx, &gains(), true, None).unwrap(), true)] {
            let achieved = ctx.hddot(&out.xi_dot);
            assert!((achieved - out.hddot_target).norm() < 1e-9 * (1.0 + out.hddot_target.norm()));
            let mut expected = r.h_d_ddot - gains().kd * ctx.hdot_err - gains().kp * ctx.h_err;
            if with_int {
                expected -= gains().ki.unwrap() * ctx.i_err;
            }
            assert!((expected - out.hddot_target).amax() < 1e-12);
        }
        let out = momentum_jerk_xidot(&ctx, &gains(), None).unwrap();
        assert!(zeta_identity_residual(&ctx, &gains(), &out.xi_dot).unwrap().norm() < 1e-8);
        assert!(out.nullspace.amax() < 1e-8);
    }

    #[test]
    fn regularization_adds_pull() {
        let (frames, xis, f) = single_contact_setup(Xi(Vector6::new(0.1, 0.1, 4.0, 0.0, 0.0, 0.0)));
        let s = state(Vector3::new(0.0, 0.0, 0.8));
        let ctx = MomentumContext::new(&s, &frames, &xis, &f, &ReferenceSample::default()).unwrap();
        let base = momentum_jerk_xidot(&ctx, &gains(), None).unwrap();
        let same = regularized_xidot(&ctx, &gains(), None, &xis, &xis).unwrap();
        assert_eq!(base.xi_dot, same.xi_dot);
        let xi_d = XiStack(vec![Xi::zeros()]);
        let reg = regularized_xidot(&ctx, &gains(), None, &xis, &xi_d).unwrap();
        assert!((reg.xi_dot - base.xi_dot + xis.to_dvector() * gains().k_e).amax() < 1e-12);
        let mut g0 = gains();
        g0.k_e = 0.0;
        assert_eq!(regularized_xidot(&ctx, &g0, None, &xis, &xi_d).unwrap().xi_dot, momentum_jerk_xidot(&ctx, &g0, None).unwrap().xi_dot);
    }

    #[test]
    fn null_space_motion_at_rest() {
        let g = ContactGeometry::default();
        let frames = vec![
            ContactFrame::rigid(Vector3::new(0.0, 0.1, 0.0), g),
            ContactFrame::rigid(Vector3::new(0.0, -0.1, 0.0), g),
        ];
        let s = state(Vector3::new(0.0, 0.0, 0.8));
        let (xi_d, f_d, _) = compute_xi_d(&Vector6::zeros(), &frames, &s.com, s.mass, s.gravity, &Default::default()).unwrap();
        let ctx = MomentumContext::new(&s, &frames, &xi_d, &f_d, &ReferenceSample::default()).unwrap();
        let xi0 = DVector::from_fn(12, |i, _| (i as f64 * 0.7).sin());
        let out = momentum_jerk_xidot(&ctx, &gains(), Some(&xi0)).unwrap();
        assert!((&out.xi_dot - &out.nullspace * &xi0).amax() < 1e-9);
        assert!(ctx.hddot(&out.xi_dot).amax() < 1e-8);
    }

    #[test]
    fn degraded_authority_is_reported() {
        // Tangential parameters deep in saturation: Φ loses the ξ1, ξ2 columns.
        let (frames, xis, f) = single_contact_setup(Xi(Vector6::new(40.0, 40.0, 3.0, 0.0, 0.0, 0.0)));
        let mut s = state(Vector3::new(0.0, 0.0, 0.8));
        s.h[0] = 1.0;
        let ctx = MomentumContext::new(&s, &frames, &xis, &f, &ReferenceSample::default()).unwrap();
        match momentum_jerk_xidot(&ctx, &gains(), None) {
            Err(Error::DegradedAuthority { rank, xi_dot, .. }) => {
                assert!(rank < 6);
                assert_eq!(xi_dot.len(), 6);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn torque_map_static_equilibrium() {
        let mut s = DynamicsSample::synthetic(8, 1, 11).unwrap();
        s.jdot_nu.fill(0.0);
        let f = DVector::from_vec(vec![1.0, -2.0, 50.0, 0.3, 0.1, -0.2]);
        s.h = s.j.transpose() * &f;
        let sol = torque_from_wrench(&s, &WrenchStack::from_slice(f.as_slice()).unwrap(), None).unwrap();
        assert!(sol.tau.amax() < 1e-9);
        let tau0 = DVector::from_fn(8, |i, _| i as f64);
        let map = TorqueMap::new(&s, Some(&tau0)).unwrap();
        let shifted = map.torque(&f).unwrap();
        assert!((shifted.tau - &map.n_lambda * &tau0).amax() < 1e-9);
        assert!(shifted.residual < 1e-10);
    }

    #[test]
    fn torque_map_actuation_deficiency() {
        let mut s = DynamicsSample::synthetic(8, 1, 12).unwrap();
        let row = s.j.row(0).into_owned();
        s.j.set_row(1, &row);
        assert!(matches!(TorqueMap::new(&s, None), Err(Error::ActuationDeficiency { .. })));
    }

    #[test]
    fn xi0_is_zero_for_single_contact() {
        let sample = DynamicsSample::synthetic(8, 1, 13).unwrap();
        let map = TorqueMap::new(&sample, None).unwrap();
        let (frames, xis, f) = single_contact_setup(Xi(Vector6::new(0.1, 0.2, 4.0, 0.1, 0.0, 0.0)));
        let s = state(Vector3::new(0.0, 0.0, 0.8));
        let ctx = MomentumContext::new(&s, &frames, &xis, &f, &ReferenceSample::default()).unwrap();
        let out = momentum_jerk_xidot(&ctx, &gains(), None).unwrap();
        let fv = f.to_dvector();
        let tau = map.torque(&fv).unwrap().tau;
        let k_tau = Mat::identity(8, 8);
        let xi0 = xi0_torque_min(&map, &fv, &ctx.phi, &out.nullspace, &out.xi_dot, &tau, Some(&k_tau), &ThetaDot::Zero).unwrap();
        assert!(xi0.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn xi0_reduces_torque_rate_objective() {
        let sample = DynamicsSample::synthetic(14, 2, 14).unwrap();
        let map = TorqueMap::new(&sample, None).unwrap();
        let g = ContactGeometry::default();
        let frames = vec![
            ContactFrame::rigid(Vector3::new(0.0, 0.1, 0.0), g),
            ContactFrame::rigid(Vector3::new(0.0, -0.1, 0.0), g),
        ];
        let xis = XiStack(vec![Xi(Vector6::new(0.2, 0.1, 5.0, 0.0, 0.1, 0.0)), Xi(Vector6::new(-0.1, 0.0, 4.9, 0.1, 0.0, 0.0))]);
        let f = stack_phi(&xis, &geometries(&frames)).unwrap();
        let s = state(Vector3::new(0.0, 0.0, 0.8));
        let ctx = MomentumContext::new(&s, &frames, &xis, &f, &ReferenceSample::default()).unwrap();
        let out = momentum_jerk_xidot(&ctx, &gains(), None).unwrap();
        let fv = f.to_dvector();
        let tau = map.torque(&fv).unwrap().tau;
        let k_tau = Mat::identity(14, 14);
        let xi0 = xi0_torque_min(&map, &fv, &ctx.phi, &out.nullspace, &out.xi_dot, &tau, Some(&k_tau), &ThetaDot::Zero).unwrap();
        let tau_dot = |x: &DVector<f64>| &map.theta * &ctx.phi * (&out.xi_dot + &out.nullspace * x);
        let objective = |x: &DVector<f64>| (tau_dot(x) + &k_tau * &tau).norm();
        assert!(objective(&xi0) <= objective(&DVector::zeros(12)));
        // The momentum rate is unaffected by the null-space term.
        let with = ctx.hddot(&(&out.xi_dot + &out.nullspace * &xi0));
        assert!((with - ctx.hddot(&out.xi_dot)).norm() < 1e-8);
    }
}
