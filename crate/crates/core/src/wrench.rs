//! Contact-stable wrench parametrization.
//!
//! `φ: ℝ⁶ → K′` maps six free variables onto wrenches that strictly satisfy
//! the planar contact-stability constraints (unilateral normal force,
//! Coulomb friction, center of pressure inside the foot rectangle,
//! torsional friction):
//!
//! ```text
//! fz = e^ξ3 + fz_min
//! fx = μc tanh(ξ1) fz / sqrt(1 + tanh²ξ2)
//! fy = μc tanh(ξ2) fz / sqrt(1 + tanh²ξ1)
//! Mx = (δy tanh ξ4 + δy0) fz
//! My = (δx tanh ξ5 + δx0) fz
//! Mz = μz tanh(ξ6) fz
//! ```
//!
//! The map is a bijection onto its image, its inverse is closed form, and its
//! Jacobian `Φ(ξ)` is invertible for every finite `ξ`.

use nalgebra::{DVector, Matrix6, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{block_diag, Mat};

/// `ξ3` is clamped to this value before exponentiation (`fz ≲ 2.4e17 N`).
pub const XI3_CAP: f64 = 40.0;

/// Friction, torsion and foot-rectangle parameters of one planar contact.
///
/// Constructed through [`ContactGeometry::new`], which validates the
/// parameters and precomputes the CoP offsets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GeometryConfig", into = "GeometryConfig")]
pub struct ContactGeometry {
    mu_c: f64,
    mu_z: f64,
    fz_min: f64,
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    delta_x: f64,
    delta_x0: f64,
    delta_y: f64,
    delta_y0: f64,
}

/// Serialized form of [`ContactGeometry`], units in the field names.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub mu_c: f64,
    pub mu_z_m: f64,
    pub fz_min_n: f64,
    pub x_min_m: f64,
    pub x_max_m: f64,
    pub y_min_m: f64,
    pub y_max_m: f64,
}

impl GeometryConfig {
    /// Every violated constraint, each message prefixed with `path`.
    pub fn issues(&self, path: &str) -> Vec<String> {
        let mut out = Vec::new();
        let all = [
            ("mu_c", self.mu_c),
            ("mu_z_m", self.mu_z_m),
            ("fz_min_n", self.fz_min_n),
            ("x_min_m", self.x_min_m),
            ("x_max_m", self.x_max_m),
            ("y_min_m", self.y_min_m),
            ("y_max_m", self.y_max_m),
        ];
        for (name, v) in all {
            if !v.is_finite() {
                out.push(format!("{path}.{name}: must be finite, got {v}"));
            }
        }
        if !(self.mu_c > 0.0) {
            out.push(format!("{path}.mu_c: must be > 0, got {}", self.mu_c));
        }
        if !(self.mu_z_m > 0.0) {
            out.push(format!("{path}.mu_z_m: must be > 0, got {}", self.mu_z_m));
        }
        if !(self.fz_min_n >= 0.0) {
            out.push(format!("{path}.fz_min_n: must be >= 0, got {}", self.fz_min_n));
        }
        if !(self.x_min_m < self.x_max_m) {
            out.push(format!(
                "{path}.x_min_m: must be < x_max_m ({} >= {})",
                self.x_min_m, self.x_max_m
            ));
        }
        if !(self.y_min_m < self.y_max_m) {
            out.push(format!(
                "{path}.y_min_m: must be < y_max_m ({} >= {})",
                self.y_min_m, self.y_max_m
            ));
        }
        out
    }
}

impl TryFrom<GeometryConfig> for ContactGeometry {
    type Error = Error;

    fn try_from(c: GeometryConfig) -> Result<Self> {
        let issues = c.issues("geometry");
        if !issues.is_empty() {
            return Err(Error::Config(issues));
        }
        Ok(Self::build(
            c.mu_c, c.mu_z_m, c.fz_min_n, c.x_min_m, c.x_max_m, c.y_min_m, c.y_max_m,
        ))
    }
}

impl From<ContactGeometry> for GeometryConfig {
    fn from(g: ContactGeometry) -> Self {
        GeometryConfig {
            mu_c: g.mu_c,
            mu_z_m: g.mu_z,
            fz_min_n: g.fz_min,
            x_min_m: g.x_min,
            x_max_m: g.x_max,
            y_min_m: g.y_min,
            y_max_m: g.y_max,
        }
    }
}

impl Default for ContactGeometry {
    /// A 20 cm × 10 cm foot centered on the contact frame, `μc = 1/3`,
    /// `μz = 0.01 m`, no minimum normal force.
    fn default() -> Self {
        Self::build(1.0 / 3.0, 0.01, 0.0, -0.1, 0.1, -0.05, 0.05)
    }
}

impl ContactGeometry {
    pub fn new(
        mu_c: f64,
        mu_z: f64,
        fz_min: f64,
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
    ) -> Result<Self> {
        GeometryConfig {
            mu_c,
            mu_z_m: mu_z,
            fz_min_n: fz_min,
            x_min_m: x_min,
            x_max_m: x_max,
            y_min_m: y_min,
            y_max_m: y_max,
        }
        .try_into()
    }

    fn build(
        mu_c: f64,
        mu_z: f64,
        fz_min: f64,
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
    ) -> Self {
        Self {
            mu_c,
            mu_z,
            fz_min,
            x_min,
            x_max,
            y_min,
            y_max,
            delta_x: (x_max - x_min) / 2.0,
            delta_x0: -(x_min + x_max) / 2.0,
            delta_y: (y_max - y_min) / 2.0,
            delta_y0: (y_max + y_min) / 2.0,
        }
    }

    pub fn mu_c(&self) -> f64 {
        self.mu_c
    }
    pub fn mu_z(&self) -> f64 {
        self.mu_z
    }
    pub fn fz_min(&self) -> f64 {
        self.fz_min
    }
    pub fn x_bounds(&self) -> (f64, f64) {
        (self.x_min, self.x_max)
    }
    pub fn y_bounds(&self) -> (f64, f64) {
        (self.y_min, self.y_max)
    }
    pub fn delta_x(&self) -> f64 {
        self.delta_x
    }
    pub fn delta_x0(&self) -> f64 {
        self.delta_x0
    }
    pub fn delta_y(&self) -> f64 {
        self.delta_y
    }
    pub fn delta_y0(&self) -> f64 {
        self.delta_y0
    }
}

/// One contact wrench `[fx fy fz Mx My Mz]` (N, N·m) in the contact frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench(pub Vector6<f64>);

impl Wrench {
    pub fn new(fx: f64, fy: f64, fz: f64, mx: f64, my: f64, mz: f64) -> Self {
        Wrench(Vector6::new(fx, fy, fz, mx, my, mz))
    }
    pub fn fx(&self) -> f64 {
        self.0[0]
    }
    pub fn fy(&self) -> f64 {
        self.0[1]
    }
    pub fn fz(&self) -> f64 {
        self.0[2]
    }
    pub fn mx(&self) -> f64 {
        self.0[3]
    }
    pub fn my(&self) -> f64 {
        self.0[4]
    }
    pub fn mz(&self) -> f64 {
        self.0[5]
    }
    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Free parameters of one contact wrench.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Xi(pub Vector6<f64>);

impl Xi {
    pub fn zeros() -> Self {
        Xi(Vector6::zeros())
    }
    pub fn from_slice(s: &[f64]) -> Self {
        Xi(Vector6::from_column_slice(s))
    }
}

macro_rules! stack_type {
    ($name:ident, $item:ident) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(pub Vec<$item>);

        impl $name {
            pub fn len(&self) -> usize {
                self.0.len()
            }
            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }
            /// Concatenated `6·n_c` vector.
            pub fn to_dvector(&self) -> DVector<f64> {
                DVector::from_iterator(
                    6 * self.0.len(),
                    self.0.iter().flat_map(|x| x.0.iter().cloned()),
                )
            }
            /// Splits a `6·n_c` vector into per-contact entries.
            pub fn from_slice(v: &[f64]) -> Result<Self> {
                if v.is_empty() || v.len() % 6 != 0 {
                    return Err(Error::DimensionMismatch(format!(
                        "stacked length {} is not a positive multiple of 6",
                        v.len()
                    )));
                }
                Ok($name(
                    v.chunks(6)
                        .map(|c| $item(Vector6::from_column_slice(c)))
                        .collect(),
                ))
            }
        }
    };
}

stack_type!(WrenchStack, Wrench);
stack_type!(XiStack, Xi);

/// Clamps applied by [`phi_inverse`] to wrenches outside `K′`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationPolicy {
    pub enabled: bool,
    /// Lower clamp on `fz − fz_min` (N).
    pub eps_z: f64,
    /// `atanh` arguments are clamped to `[−1 + m, 1 − m]`.
    pub atanh_margin: f64,
    /// `tanh²` values from the tangential solve are clamped to `[0, 1 − m]`.
    pub tanh_sq_margin: f64,
}

impl Default for SaturationPolicy {
    fn default() -> Self {
        Self {
            enabled: true,
            eps_z: 1e-6,
            atanh_margin: 1e-6,
            tanh_sq_margin: 1e-6,
        }
    }
}

impl SaturationPolicy {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }
}

/// Result of [`phi_inverse_checked`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inversion {
    pub xi: Xi,
    /// True when any clamp of the saturation policy was active.
    pub saturated: bool,
}

fn normal_force(xi3: f64, g: &ContactGeometry) -> (f64, f64) {
    let e = xi3.min(XI3_CAP).exp();
    (e + g.fz_min, e)
}

/// The parametrization `φ(ξ)`.
pub fn phi(xi: &Xi, g: &ContactGeometry) -> Wrench {
    let x = &xi.0;
    let (t1, t2, t4, t5, t6) = (x[0].tanh(), x[1].tanh(), x[3].tanh(), x[4].tanh(), x[5].tanh());
    let (fz, _) = normal_force(x[2], g);
    Wrench::new(
        g.mu_c * t1 * fz / (1.0 + t2 * t2).sqrt(),
        g.mu_c * t2 * fz / (1.0 + t1 * t1).sqrt(),
        fz,
        (g.delta_y * t4 + g.delta_y0) * fz,
        (g.delta_x * t5 + g.delta_x0) * fz,
        g.mu_z * t6 * fz,
    )
}

/// Solves the linear system in `(tanh²ξ1, tanh²ξ2)` given the normalized
/// squared tangential forces `a = (fx/μc fz)²`, `b = (fy/μc fz)²`.
///
/// Returns `None` when the 2×2 matrix is singular or indefinite (`ab ≥ 1`).
fn tangential_tanh_sq(a: f64, b: f64) -> Option<(f64, f64)> {
    // [ 1  -a ] [t1]   [a]
    // [ -b  1 ] [t2] = [b]
    let det = 1.0 - a * b;
    if !(det > 0.0) {
        return None;
    }
    Some((a * (1.0 + b) / det, b * (1.0 + a) / det))
}

fn clamp_atanh(arg: f64, policy: &SaturationPolicy, what: &str, saturated: &mut bool) -> Result<f64> {
    let lim = 1.0 - policy.atanh_margin;
    if policy.enabled {
        if arg.abs() > lim {
            *saturated = true;
            return Ok(arg.clamp(-lim, lim).atanh());
        }
        Ok(arg.atanh())
    } else if arg.abs() < 1.0 {
        Ok(arg.atanh())
    } else {
        Err(Error::OutOfDomain(format!("{what} ratio {arg} outside (-1, 1)")))
    }
}

/// Inverse parametrization with a saturation report.
pub fn phi_inverse_checked(
    w: &Wrench,
    g: &ContactGeometry,
    policy: &SaturationPolicy,
) -> Result<Inversion> {
    if !w.is_finite() {
        return Err(Error::InvalidInput("wrench has non-finite entries".into()));
    }
    let mut saturated = false;
    let mut excess = w.fz() - g.fz_min;
    if policy.enabled {
        if excess < policy.eps_z {
            excess = policy.eps_z;
            saturated = true;
        }
    } else if !(excess > 0.0) {
        return Err(Error::OutOfDomain(format!(
            "fz = {} not above fz_min = {}",
            w.fz(),
            g.fz_min
        )));
    }
    let fz = excess + g.fz_min;

    let xi3 = excess.ln();
    let xi4 = clamp_atanh((w.mx() - g.delta_y0 * fz) / (g.delta_y * fz), policy, "CoP y", &mut saturated)?;
    let xi5 = clamp_atanh((w.my() - g.delta_x0 * fz) / (g.delta_x * fz), policy, "CoP x", &mut saturated)?;
    let xi6 = clamp_atanh(w.mz() / (g.mu_z * fz), policy, "torsion", &mut saturated)?;

    let scale = g.mu_c * fz;
    let a = (w.fx() / scale).powi(2);
    let b = (w.fy() / scale).powi(2);
    let cap = 1.0 - policy.tanh_sq_margin;
    let (mut t1, mut t2) = match tangential_tanh_sq(a, b) {
        Some(t) => t,
        None if policy.enabled => {
            saturated = true;
            (cap, cap)
        }
        None => {
            return Err(Error::OutOfDomain(format!(
                "tangential system singular (fx = {}, fy = {}, fz = {})",
                w.fx(),
                w.fy(),
                fz
            )))
        }
    };
    for t in [&mut t1, &mut t2] {
        if policy.enabled {
            if *t > cap {
                *t = cap;
                saturated = true;
            }
        } else if !(*t < 1.0) {
            return Err(Error::OutOfDomain(format!(
                "tangential force outside the parametrized cone (tanh² = {t})"
            )));
        }
        *t = t.max(0.0);
    }
    let xi1 = sign(w.fx()) * t1.sqrt().atanh();
    let xi2 = sign(w.fy()) * t2.sqrt().atanh();

    Ok(Inversion {
        xi: Xi(Vector6::new(xi1, xi2, xi3, xi4, xi5, xi6)),
        saturated,
    })
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Inverse parametrization `ξ = φ⁻¹(w)`.
pub fn phi_inverse(w: &Wrench, g: &ContactGeometry, policy: &SaturationPolicy) -> Result<Xi> {
    phi_inverse_checked(w, g, policy).map(|i| i.xi)
}

/// Operational membership test for `K′`: inversion succeeds without any
/// saturation and `φ(φ⁻¹(w))` reproduces `w` to `rel_tol` (relative to `|w|`).
pub fn in_image(w: &Wrench, g: &ContactGeometry, rel_tol: f64) -> bool {
    match phi_inverse(w, g, &SaturationPolicy::disabled()) {
        Ok(xi) => (phi(&xi, g).0 - w.0).norm() <= rel_tol * (1.0 + w.0.norm()),
        Err(_) => false,
    }
}

/// Analytic Jacobian `Φ(ξ) = ∂φ/∂ξ`.
///
/// Nonzero pattern: (1,1) (1,2) (1,3) (2,1) (2,2) (2,3) (3,3) (4,3) (4,4)
/// (5,3) (5,5) (6,3) (6,6), 1-based. Above [`XI3_CAP`] the `ξ3` column keeps
/// the value at the cap so the matrix stays invertible.
pub fn phi_gradient(xi: &Xi, g: &ContactGeometry) -> Matrix6<f64> {
    let x = &xi.0;
    let (t1, t2, t4, t5, t6) = (x[0].tanh(), x[1].tanh(), x[3].tanh(), x[4].tanh(), x[5].tanh());
    let (fz, e) = normal_force(x[2], g);
    let (s1, s2) = (1.0 + t1 * t1, 1.0 + t2 * t2);
    let mut m = Matrix6::zeros();

    m[(0, 0)] = g.mu_c * (1.0 - t1 * t1) * fz / s2.sqrt();
    m[(0, 1)] = g.mu_c * t1 * fz * (t2 * t2 * t2 - t2) / s2.powf(1.5);
    m[(0, 2)] = g.mu_c * t1 * e / s2.sqrt();

    m[(1, 0)] = g.mu_c * t2 * fz * (t1 * t1 * t1 - t1) / s1.powf(1.5);
    m[(1, 1)] = g.mu_c * (1.0 - t2 * t2) * fz / s1.sqrt();
    m[(1, 2)] = g.mu_c * t2 * e / s1.sqrt();

    m[(2, 2)] = e;

    m[(3, 2)] = (g.delta_y * t4 + g.delta_y0) * e;
    m[(3, 3)] = g.delta_y * (1.0 - t4 * t4) * fz;

    m[(4, 2)] = (g.delta_x * t5 + g.delta_x0) * e;
    m[(4, 4)] = g.delta_x * (1.0 - t5 * t5) * fz;

    m[(5, 2)] = g.mu_z * t6 * e;
    m[(5, 5)] = g.mu_z * (1.0 - t6 * t6) * fz;
    m
}

/// Closed-form `det Φ(ξ)`: the product of the tangential 2×2 determinant
/// and the remaining diagonal entries.
pub fn phi_gradient_det(xi: &Xi, g: &ContactGeometry) -> f64 {
    let x = &xi.0;
    let (t1, t2, t4, t5, t6) = (x[0].tanh(), x[1].tanh(), x[3].tanh(), x[4].tanh(), x[5].tanh());
    let (fz, e) = normal_force(x[2], g);
    let (s1, s2) = (1.0 + t1 * t1, 1.0 + t2 * t2);
    let tangential = g.mu_c * g.mu_c * fz * fz * (1.0 - t1 * t1) * (1.0 - t2 * t2) / (s1 * s2).sqrt()
        * (1.0 + t1 * t1 + t2 * t2)
        / (s1 * s2);
    tangential
        * e
        * g.delta_y
        * (1.0 - t4 * t4)
        * fz
        * g.delta_x
        * (1.0 - t5 * t5)
        * fz
        * g.mu_z
        * (1.0 - t6 * t6)
        * fz
}

/// Status of one contact-stability inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintStatus {
    pub satisfied: bool,
    /// Signed distance to the boundary in natural units (N or m);
    /// `-inf` when undefined because `fz ≤ 0`.
    pub margin: f64,
}

impl ConstraintStatus {
    fn strict(margin: f64) -> Self {
        Self {
            satisfied: margin > 0.0,
            margin,
        }
    }
}

/// Per-constraint report from [`check_constraints`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintReport {
    /// `fz > fz_min` (N).
    pub unilateral: ConstraintStatus,
    /// `sqrt(fx² + fy²) < μc fz` (N).
    pub friction: ConstraintStatus,
    /// `y_min < Mx/fz < y_max` (m).
    pub cop_y: ConstraintStatus,
    /// `x_min < −My/fz < x_max` (m).
    pub cop_x: ConstraintStatus,
    /// `|Mz/fz| < μz` (m).
    pub torsional: ConstraintStatus,
}

impl ConstraintReport {
    pub fn all_satisfied(&self) -> bool {
        self.statuses().iter().all(|s| s.satisfied)
    }

    pub fn statuses(&self) -> [ConstraintStatus; 5] {
        [self.unilateral, self.friction, self.cop_y, self.cop_x, self.torsional]
    }

    pub fn margins(&self) -> [f64; 5] {
        self.statuses().map(|s| s.margin)
    }
}

/// Evaluates the five strict contact-stability inequalities.
pub fn check_constraints(w: &Wrench, g: &ContactGeometry) -> ConstraintReport {
    let fz = w.fz();
    let unilateral = ConstraintStatus::strict(fz - g.fz_min);
    let friction = ConstraintStatus::strict(g.mu_c * fz - w.fx().hypot(w.fy()));
    if !(fz > 0.0) {
        let undefined = ConstraintStatus {
            satisfied: false,
            margin: f64::NEG_INFINITY,
        };
        return ConstraintReport {
            unilateral,
            friction,
            cop_y: undefined,
            cop_x: undefined,
            torsional: undefined,
        };
    }
    let cop_y = w.mx() / fz;
    let cop_x = -w.my() / fz;
    ConstraintReport {
        unilateral,
        friction,
        cop_y: ConstraintStatus::strict((cop_y - g.y_min).min(g.y_max - cop_y)),
        cop_x: ConstraintStatus::strict((cop_x - g.x_min).min(g.x_max - cop_x)),
        torsional: ConstraintStatus::strict(g.mu_z - (w.mz() / fz).abs()),
    }
}

fn check_stack_len(n: usize, geoms: &[ContactGeometry]) -> Result<()> {
    if n == 0 || n != geoms.len() {
        return Err(Error::InvalidInput(format!(
            "stack of {n} contacts paired with {} geometries",
            geoms.len()
        )));
    }
    Ok(())
}

/// Per-contact `φ`.
pub fn stack_phi(xis: &XiStack, geoms: &[ContactGeometry]) -> Result<WrenchStack> {
    check_stack_len(xis.len(), geoms)?;
    Ok(WrenchStack(
        xis.0.iter().zip(geoms).map(|(x, g)| phi(x, g)).collect(),
    ))
}

/// Per-contact saturated inverse; the flag is true if any contact saturated.
pub fn stack_phi_inverse(
    f: &WrenchStack,
    geoms: &[ContactGeometry],
    policy: &SaturationPolicy,
) -> Result<(XiStack, bool)> {
    check_stack_len(f.len(), geoms)?;
    let mut saturated = false;
    let mut out = Vec::with_capacity(f.len());
    for (w, g) in f.0.iter().zip(geoms) {
        let inv = phi_inverse_checked(w, g, policy)?;
        saturated |= inv.saturated;
        out.push(inv.xi);
    }
    Ok((XiStack(out), saturated))
}

/// Block-diagonal `Φ = blkdiag(Φ_1, …, Φ_nc)`.
pub fn stack_gradient(xis: &XiStack, geoms: &[ContactGeometry]) -> Result<Mat> {
    check_stack_len(xis.len(), geoms)?;
    let blocks: Vec<Mat> = xis
        .0
        .iter()
        .zip(geoms)
        .map(|(x, g)| {
            let b = phi_gradient(x, g);
            Mat::from_column_slice(6, 6, b.as_slice())
        })
        .collect();
    block_diag(&blocks)
}

/// Monte Carlo estimate of the friction-disk coverage of `K′`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coverage {
    /// `area(image of (fx, fy)) / area(disk of radius μc fz)`.
    pub ratio: f64,
    /// Binomial standard error of `ratio`.
    pub std_error: f64,
    pub samples: usize,
}

impl Coverage {
    /// Symmetric normal-approximation interval at `z` standard errors.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        (self.ratio - z * self.std_error, self.ratio + z * self.std_error)
    }
}

/// Samples points uniformly in the friction disk at a fixed normal force and
/// counts those reachable by `(fx, fy) = φ_xy(ξ1, ξ2)`.
///
/// Membership is decided by the tangential inversion: a point is covered iff
/// both recovered `tanh²` values lie in `[0, 1)`.
pub fn cone_coverage_estimate(geom: &ContactGeometry, samples: usize, seed: u64) -> Result<Coverage> {
    if samples < 10_000 {
        return Err(Error::InvalidInput(format!(
            "coverage needs at least 10^4 samples, got {samples}"
        )));
    }
    let fz = 1.0 + geom.fz_min;
    let radius = geom.mu_c * fz;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inside = 0usize;
    for _ in 0..samples {
        let r = radius * rng.random::<f64>().sqrt();
        let theta = std::f64::consts::TAU * rng.random::<f64>();
        let (fx, fy) = (r * theta.cos(), r * theta.sin());
        let a = (fx / radius).powi(2);
        let b = (fy / radius).powi(2);
        if let Some((t1, t2)) = tangential_tanh_sq(a, b) {
            if t1 < 1.0 && t2 < 1.0 {
                inside += 1;
            }
        }
    }
    let p = inside as f64 / samples as f64;
    Ok(Coverage {
        ratio: p,
        std_error: (p * (1.0 - p) / samples as f64).sqrt(),
        samples,
    })
}
