//! Built-in property suites behind `jerkctl verify`.
//!
//! Each property draws seeded random samples and records the worst value of
//! its residual against a fixed limit.

use std::fmt;

use nalgebra::{DVector, Matrix6, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::control::TorqueMap;
use crate::error::{Error, Result};
use crate::sim::{run_suite, ScenarioConfig};
use crate::sot::DynamicsSample;
use crate::wrench::{
    check_constraints, phi, phi_gradient, phi_gradient_det, phi_inverse, ContactGeometry, SaturationPolicy, Xi,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Quick,
    Full,
}

impl Profile {
    fn wrench_samples(self) -> usize {
        match self {
            Profile::Quick => 10_000,
            Profile::Full => 100_000,
        }
    }
    fn gradient_samples(self) -> usize {
        match self {
            Profile::Quick => 2_000,
            Profile::Full => 10_000,
        }
    }
    fn episodes(self) -> (usize, f64) {
        match self {
            Profile::Quick => (3, 10.0),
            Profile::Full => (10, 60.0),
        }
    }
    fn torque_samples(self) -> usize {
        match self {
            Profile::Quick => 100,
            Profile::Full => 1000,
        }
    }
}

impl std::str::FromStr for Profile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quick" => Ok(Profile::Quick),
            "full" => Ok(Profile::Full),
            other => Err(Error::InvalidInput(format!("unknown profile {other:?}, expected quick or full"))),
        }
    }
}

/// Direction in which `worst` is compared against `limit`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    /// Passes when `worst < limit`.
    Below,
    /// Passes when `worst > limit`.
    Above,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyCheck {
    pub name: &'static str,
    pub samples: usize,
    pub worst: f64,
    pub limit: f64,
    pub bound: Bound,
}

impl PropertyCheck {
    pub fn passed(&self) -> bool {
        match self.bound {
            Bound::Below => self.worst < self.limit,
            Bound::Above => self.worst > self.limit,
        }
    }
}

impl fmt::Display for PropertyCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.bound {
            Bound::Below => "<",
            Bound::Above => ">",
        };
        write!(
            f,
            "{} {:<28} samples = {:<7} worst = {:<12.4e} required {op} {:.1e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.samples,
            self.worst,
            self.limit
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub profile: Profile,
    pub seed: u64,
    pub checks: Vec<PropertyCheck>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(PropertyCheck::passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "profile = {:?}, seed = {}", self.profile, self.seed)?;
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Random valid geometry; the CoP rectangle need not contain the origin.
pub fn random_geometry(rng: &mut impl Rng) -> ContactGeometry {
    let x_min = rng.random_range(-0.2..0.05);
    let y_min = rng.random_range(-0.1..0.02);
    ContactGeometry::new(
        rng.random_range(0.1..1.2),
        rng.random_range(0.002..0.05),
        rng.random_range(0.0..30.0),
        x_min,
        x_min + rng.random_range(0.02..0.3),
        y_min,
        y_min + rng.random_range(0.02..0.15),
    )
    .expect("sampled geometry is valid")
}

fn random_xi(rng: &mut impl Rng, half_width: f64) -> Xi {
    Xi(Vector6::from_fn(|_, _| rng.random_range(-half_width..half_width)))
}

fn geometries(rng: &mut impl Rng, count: usize) -> Vec<ContactGeometry> {
    (0..count).map(|_| random_geometry(rng)).collect()
}

fn constraint_margins(profile: Profile, rng: &mut ChaCha8Rng) -> PropertyCheck {
    let geoms = geometries(rng, 20);
    let samples = profile.wrench_samples();
    let mut worst = f64::INFINITY;
    for k in 0..samples {
        let g = &geoms[k % geoms.len()];
        let w = phi(&random_xi(rng, 10.0), g);
        let m = check_constraints(&w, g).margins().into_iter().fold(f64::INFINITY, f64::min);
        worst = worst.min(m);
    }
    PropertyCheck { name: "constraint margin (min)", samples, worst, limit: 0.0, bound: Bound::Above }
}

fn round_trips(profile: Profile, rng: &mut ChaCha8Rng) -> Result<[PropertyCheck; 2]> {
    let geoms = geometries(rng, 20);
    let samples = profile.wrench_samples();
    let policy = SaturationPolicy::disabled();
    let (mut forward, mut reverse) = (0.0f64, 0.0f64);
    for k in 0..samples {
        let g = &geoms[k % geoms.len()];
        let xi = random_xi(rng, 5.0);
        let w = phi(&xi, g);
        let back = phi_inverse(&w, g, &policy)?;
        forward = forward.max((back.0 - xi.0).amax());
        let w2 = phi(&back, g);
        reverse = reverse.max((w2.0 - w.0).norm() / w.0.norm());
    }
    Ok([
        PropertyCheck { name: "round trip xi (inf norm)", samples, worst: forward, limit: 1e-8, bound: Bound::Below },
        PropertyCheck { name: "round trip wrench (rel)", samples, worst: reverse, limit: 1e-8, bound: Bound::Below },
    ])
}

fn gradients(profile: Profile, rng: &mut ChaCha8Rng) -> [PropertyCheck; 2] {
    let geoms = geometries(rng, 20);
    let samples = profile.gradient_samples();
    let mut worst = 0.0f64;
    let mut min_det = f64::INFINITY;
    for k in 0..samples {
        let g = &geoms[k % geoms.len()];
        let xi = random_xi(rng, 5.0);
        let analytic = phi_gradient(&xi, g);
        let mut fd = Matrix6::zeros();
        for j in 0..6 {
            let h = 1e-6 * xi.0[j].abs().max(1.0);
            let (mut p, mut m) = (xi, xi);
            p.0[j] += h;
            m.0[j] -= h;
            fd.set_column(j, &((phi(&p, g).0 - phi(&m, g).0) / (2.0 * h)));
        }
        worst = worst.max((analytic - fd).amax() / analytic.amax());
        min_det = min_det.min(phi_gradient_det(&xi, g).abs());
    }
    [
        PropertyCheck { name: "gradient vs central FD (rel)", samples, worst, limit: 1e-5, bound: Bound::Below },
        PropertyCheck { name: "|det gradient| (min)", samples, worst: min_det, limit: 0.0, bound: Bound::Above },
    ]
}

fn spd(rng: &mut impl Rng, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    let q = Matrix6::from_fn(|_, _| rng.random_range(-1.0..1.0)).qr().q();
    let d = Vector6::from_fn(|_, _| rng.random_range(lo..hi));
    let m = q * Matrix6::from_diagonal(&d) * q.transpose();
    let m = (m + m.transpose()) * 0.5;
    m.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

/// Single-contact integral-law episodes with random SPD gains and random
/// initial `(I, H̃)`.
pub fn lyapunov_scenarios(count: usize, horizon_s: f64, rng: &mut impl Rng) -> Result<Vec<crate::sim::Scenario>> {
    (0..count)
        .map(|k| {
            let h0: Vec<f64> = (0..6).map(|_| rng.random_range(-0.5..0.5)).collect();
            let i0: Vec<f64> = (0..6).map(|_| rng.random_range(-0.5..0.5)).collect();
            let v = json!({
                "name": format!("lyapunov-{k}"),
                "mass_kg": 30.0,
                "com_m": [0.0, 0.0, 0.8],
                "contacts": [{
                    "origin_m": [0.0, 0.0, 0.0],
                    "geometry": {"mu_c": 0.5, "mu_z_m": 0.02, "fz_min_n": 0.0,
                                 "x_min_m": -0.1, "x_max_m": 0.1, "y_min_m": -0.05, "y_max_m": 0.05}
                }],
                "controller": {"law": "integral-lyapunov",
                               "gains": {"kp": spd(rng, 1.0, 4.0), "kd": spd(rng, 1.0, 4.0), "ko": spd(rng, 1.0, 4.0)}},
                "initial_momentum": h0,
                "initial_integral": i0,
                "horizon_s": horizon_s
            });
            serde_json::from_value::<ScenarioConfig>(v)
                .map_err(|e| Error::InvalidInput(e.to_string()))?
                .validate()
        })
        .collect()
}

fn lyapunov(profile: Profile, rng: &mut ChaCha8Rng) -> Result<[PropertyCheck; 3]> {
    let (count, horizon) = profile.episodes();
    let scenarios = lyapunov_scenarios(count, horizon, rng)?;
    let (mut increase, mut identity, mut final_norm) = (f64::NEG_INFINITY, 0.0f64, 0.0f64);
    let mut steps = 0;
    for r in run_suite(&scenarios, 0)? {
        let (log, _) = r.outcome?;
        let v0 = log.rows[0].v;
        for w in log.rows.windows(2) {
            increase = increase.max((w[1].v - w[0].v) / v0);
        }
        for row in &log.rows {
            identity = identity.max(row.zeta_identity_residual);
        }
        steps += log.rows.len();
        if let Some(last) = log.rows.last() {
            final_norm = final_norm.max(last.i_err.norm().max(last.h_err.norm()).max(last.zeta.norm()));
        }
    }
    let limit_final = if profile == Profile::Full { 1e-6 } else { 1e-1 };
    Ok([
        PropertyCheck { name: "Lyapunov increase / V0", samples: steps, worst: increase, limit: 1e-6, bound: Bound::Below },
        PropertyCheck { name: "zeta identity residual", samples: steps, worst: identity, limit: 1e-8, bound: Bound::Below },
        PropertyCheck { name: "final (I, H, zeta) norm", samples: count, worst: final_norm, limit: limit_final, bound: Bound::Below },
    ])
}

/// Synthetic sample whose `J̇ν` is chosen so that `τ_true` realizes `f`
/// exactly under the contact constraint.
pub fn consistent_sample(n: usize, n_c: usize, rng: &mut impl Rng) -> Result<(DynamicsSample, DVector<f64>, DVector<f64>)> {
    let mut s = DynamicsSample::synthetic(n, n_c, rng.random())?;
    let f = DVector::from_fn(6 * n_c, |_, _| rng.random_range(-50.0..50.0));
    let tau_true = DVector::from_fn(n, |_, _| rng.random_range(-20.0..20.0));
    let j_minv = &s.j * s.m_inv()?;
    let lambda = &j_minv * &s.b;
    s.jdot_nu = -(&j_minv * (s.j.transpose() * &f - &s.h)) - lambda * &tau_true;
    Ok((s, f, tau_true))
}

fn torque_map(profile: Profile, rng: &mut ChaCha8Rng) -> Result<[PropertyCheck; 2]> {
    let samples = profile.torque_samples();
    let (mut residual, mut shift) = (0.0f64, 0.0f64);
    for k in 0..samples {
        let n = [6, 10][k % 2];
        let n_c = [1, 2][(k / 2) % 2];
        let (s, f, _) = consistent_sample(n, n_c, rng)?;
        let map = TorqueMap::new(&s, None)?;
        let base = map.torque(&f)?;
        residual = residual.max(base.residual);
        let tau0 = DVector::from_fn(n, |_, _| rng.random_range(-10.0..10.0));
        let shifted = TorqueMap::new(&s, Some(&tau0))?.torque(&f)?;
        let delta = &shifted.tau - &base.tau;
        let expected = &map.n_lambda * &tau0;
        let scale: f64 = 1.0 + tau0.norm();
        let effect = &map.lambda * &delta;
        shift = shift.max(((&delta - expected).norm() + effect.norm()) / scale);
    }
    Ok([
        PropertyCheck { name: "torque map residual", samples, worst: residual, limit: 1e-8, bound: Bound::Below },
        PropertyCheck { name: "null-space torque shift", samples, worst: shift, limit: 1e-10, bound: Bound::Below },
    ])
}

/// Runs every property suite.
pub fn run_verification(profile: Profile, seed: u64) -> Result<VerifyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = vec![constraint_margins(profile, &mut rng)];
    checks.extend(round_trips(profile, &mut rng)?);
    checks.extend(gradients(profile, &mut rng));
    checks.extend(lyapunov(profile, &mut rng)?);
    checks.extend(torque_map(profile, &mut rng)?);
    Ok(VerifyReport { profile, seed, checks })
}
