//! Parametrized jerk stack of tasks.
//!
//! Differentiating the rigid-contact dynamics `M ν̇ + h = Jᵀ f + B τ`,
//! `J ν̇ + J̇ ν = 0` once in time gives `Ḋ y + D P u = β̇` with
//! `y = (ν̇, f, τ)`, `u = (ν̈, ξ̇, τ̇)` and `P = blkdiag(I, Φ(ξ), I)`. The
//! solver returns the minimum-norm minimizer of `‖Ȧ y + A P u − ȧ*‖²` over
//! that affine set.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{block_diag, nullspace_projector, pinv, pinv_rank, Mat, DEFAULT_PINV_TOL};
use crate::wrench::{stack_gradient, ContactGeometry, XiStack};

/// Rigid-contact floating-base dynamics at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsSample {
    /// Mass matrix, `(n+6)×(n+6)`, symmetric positive definite.
    pub m: Mat,
    /// Bias forces, `n+6`.
    pub h: DVector<f64>,
    /// Contact Jacobian, `6n_c×(n+6)`.
    pub j: Mat,
    /// `J̇ ν`, `6n_c`.
    pub jdot_nu: DVector<f64>,
    /// Joint selector `[0_{n×6} I_n]ᵀ`.
    pub b: Mat,
    pub n: usize,
    pub n_c: usize,
}

/// `[0_{n×6} I_n]ᵀ`.
pub fn selector(n: usize) -> Mat {
    let mut b = Mat::zeros(n + 6, n);
    b.view_mut((6, 0), (n, n)).fill_with_identity();
    b
}

impl DynamicsSample {
    /// Validates shapes, symmetry and definiteness of `M`, the selector
    /// structure and finiteness. `J` is not required to have full row rank
    /// here; operations that need it check the rank they use.
    pub fn new(m: Mat, h: DVector<f64>, j: Mat, jdot_nu: DVector<f64>, b: Mat) -> Result<Self> {
        let dim = m.nrows();
        if dim < 6 || m.ncols() != dim {
            return Err(Error::DimensionMismatch(format!("mass matrix is {}x{}", m.nrows(), m.ncols())));
        }
        let n = dim - 6;
        if j.nrows() == 0 || j.nrows() % 6 != 0 || j.ncols() != dim {
            return Err(Error::DimensionMismatch(format!("contact Jacobian is {}x{}, expected 6n_c x {dim}", j.nrows(), j.ncols())));
        }
        let n_c = j.nrows() / 6;
        if h.len() != dim || jdot_nu.len() != j.nrows() || b.shape() != (dim, n) {
            return Err(Error::DimensionMismatch(format!(
                "h: {}, Jdot_nu: {}, B: {:?} for n = {n}, n_c = {n_c}",
                h.len(),
                jdot_nu.len(),
                b.shape()
            )));
        }
        let finite = m.iter().chain(h.iter()).chain(j.iter()).chain(jdot_nu.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("dynamics sample has non-finite entries".into()));
        }
        if b != selector(n) {
            return Err(Error::InvalidInput("B must be the joint selector [0; I_n]".into()));
        }
        let scale = 1.0 + m.amax();
        if (&m - m.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidInput("mass matrix is not symmetric".into()));
        }
        if m.clone().cholesky().is_none() {
            return Err(Error::InvalidInput("mass matrix is not positive definite".into()));
        }
        Ok(Self { m, h, j, jdot_nu, b, n, n_c })
    }

    /// Random well-conditioned sample: `M = L Lᵀ + (n+6) I`, entries of `h`,
    /// `J`, `J̇ν` uniform in `[−1, 1]`.
    pub fn synthetic(n: usize, n_c: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = n + 6;
        let l = Mat::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
        let m = &l * l.transpose() + Mat::identity(dim, dim) * dim as f64;
        let m = (&m + m.transpose()) * 0.5;
        let h = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        let j = Mat::from_fn(6 * n_c, dim, |_, _| rng.random_range(-1.0..1.0));
        let jdot_nu = DVector::from_fn(6 * n_c, |_, _| rng.random_range(-1.0..1.0));
        Self::new(m, h, j, jdot_nu, selector(n))
    }

    pub fn m_inv(&self) -> Result<Mat> {
        self.m
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .ok_or_else(|| Error::InvalidInput("mass matrix is not positive definite".into()))
    }

    /// `D = [[M, −Jᵀ, −B], [J, 0, 0]]`.
    pub fn d_matrix(&self) -> Mat {
        let (dim, k, n) = (self.n + 6, 6 * self.n_c, self.n);
        let mut d = Mat::zeros(dim + k, dim + k + n);
        d.view_mut((0, 0), (dim, dim)).copy_from(&self.m);
        d.view_mut((0, dim), (dim, k)).copy_from(&(-self.j.transpose()));
        d.view_mut((0, dim + k), (dim, n)).copy_from(&(-&self.b));
        d.view_mut((dim, 0), (k, dim)).copy_from(&self.j);
        d
    }

    /// `β = [−h; −J̇ν]`.
    pub fn beta(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.h.len() + self.jdot_nu.len());
        out.rows_mut(0, self.h.len()).copy_from(&(-&self.h));
        out.rows_mut(self.h.len(), self.jdot_nu.len()).copy_from(&(-&self.jdot_nu));
        out
    }
}

/// `P = blkdiag(I_{n+6}, Φ(ξ), I_n)`.
pub fn build_p(xis: &XiStack, geoms: &[ContactGeometry], n: usize) -> Result<Mat> {
    let phi = stack_gradient(xis, geoms)?;
    block_diag(&[Mat::identity(n + 6, n + 6), phi, Mat::identity(n, n)])
}

/// One jerk-level stack-of-tasks problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SotProblem {
    pub d: Mat,
    pub d_dot: Mat,
    pub beta_dot: DVector<f64>,
    pub a_task: Mat,
    pub a_task_dot: Mat,
    pub a_star_dot: DVector<f64>,
    /// `(ν̇, f, τ)`.
    pub y: DVector<f64>,
    pub p: Mat,
}

impl SotProblem {
    /// Problem with `Ḋ`, `Ȧ_task` and `β̇` set to zero.
    pub fn new(
        sample: &DynamicsSample,
        xis: &XiStack,
        geoms: &[ContactGeometry],
        a_task: Mat,
        a_star_dot: DVector<f64>,
        y: DVector<f64>,
    ) -> Result<Self> {
        if xis.len() != sample.n_c {
            return Err(Error::DimensionMismatch(format!("{} contacts in xi, {} in dynamics", xis.len(), sample.n_c)));
        }
        let d = sample.d_matrix();
        let p = build_p(xis, geoms, sample.n)?;
        let cols = d.ncols();
        if a_task.ncols() != cols || a_star_dot.len() != a_task.nrows() || y.len() != cols {
            return Err(Error::DimensionMismatch(format!(
                "task map {:?}, task jerk {}, state {} for {cols} unknowns",
                a_task.shape(),
                a_star_dot.len(),
                y.len()
            )));
        }
        Ok(Self {
            d_dot: Mat::zeros(d.nrows(), cols),
            beta_dot: DVector::zeros(d.nrows()),
            a_task_dot: Mat::zeros(a_task.nrows(), cols),
            d,
            a_task,
            a_star_dot,
            y,
            p,
        })
    }

    /// Replaces `Ḋ` and `β̇` by backward differences against `prev`.
    pub fn with_finite_difference(mut self, current: &DynamicsSample, prev: &DynamicsSample, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("dt must be > 0, got {dt}")));
        }
        if prev.n != current.n || prev.n_c != current.n_c {
            return Err(Error::DimensionMismatch("consecutive samples differ in size".into()));
        }
        self.d_dot = (current.d_matrix() - prev.d_matrix()) / dt;
        self.beta_dot = (current.beta() - prev.beta()) / dt;
        Ok(self)
    }
}

/// Solution of [`solve_jerk_sot`].
#[derive(Debug, Clone, PartialEq)]
pub struct SotSolution {
    /// `(ν̈, ξ̇, τ̇)`.
    pub u: DVector<f64>,
    /// `‖Ḋ y + D P u − β̇‖ / (1 + ‖β̇ − Ḋ y‖)`.
    pub constraint_residual: f64,
    /// `‖Ȧ y + A P u − ȧ*‖`.
    pub task_residual: f64,
}

impl SotSolution {
    /// Splits `u` into `(ν̈, ξ̇, τ̇)` for `n` joints and `n_c` contacts.
    pub fn split(&self, n: usize, n_c: usize) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let (a, b) = (n + 6, 6 * n_c);
        (
            self.u.rows(0, a).into_owned(),
            self.u.rows(a, b).into_owned(),
            self.u.rows(a + b, n).into_owned(),
        )
    }
}

/// Minimum-norm minimizer of the task residual on the constraint set,
/// `u = u_p + N z` with `u_p = (DP)⁺ (β̇ − Ḋy)`, `N = I − (DP)⁺ DP` and
/// `z = (A P N)⁺ (ȧ* − Ȧy − A P u_p)`.
pub fn solve_jerk_sot(p: &SotProblem, tol: f64) -> Result<SotSolution> {
    let dp = &p.d * &p.p;
    let rhs = &p.beta_dot - &p.d_dot * &p.y;
    let dp_pinv = pinv_rank(&dp, tol)?;
    let constraint_residual_of = |u: &DVector<f64>| (&dp * u - &rhs).norm() / (1.0 + rhs.norm());
    let u_p = &dp_pinv.matrix * &rhs;
    if dp_pinv.rank < dp.nrows() {
        return Err(Error::Degenerate {
            rank: dp_pinv.rank,
            required: dp.nrows(),
            residual: constraint_residual_of(&u_p),
        });
    }
    let n = nullspace_projector(&dp, tol)?;
    let ap = &p.a_task * &p.p;
    let task_rhs = &p.a_star_dot - &p.a_task_dot * &p.y;
    let z = pinv(&(&ap * &n), DEFAULT_PINV_TOL.max(tol))? * (&task_rhs - &ap * &u_p);
    let u = u_p + n * z;
    Ok(SotSolution {
        constraint_residual: constraint_residual_of(&u),
        task_residual: (&ap * &u - task_rhs).norm(),
        u,
    })
}
