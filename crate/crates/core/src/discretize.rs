//! Implicit Euler stepping with Newton iteration, the stage Jacobians of
//! the implicit step map, and an explicit RK4 integrator for the plant.

use nalgebra::{DMatrix, DVector, SVector};
use thiserror::Error;

use crate::vehicle::{ControlInput, Plant, PlantState, WindCondition, PLANT_DIM};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("model evaluated outside its domain: {0}")]
    Domain(String),
    #[error("non-finite Jacobian entry at row {row}, column {col} of {matrix}")]
    NonFiniteJacobian {
        matrix: &'static str,
        row: usize,
        col: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiscretizeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("singular Newton matrix at iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error("time step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("state became non-finite at substep {substep}")]
    NonFiniteState { substep: usize },
}

/// A continuous-time model `ẋ = f(x, u)`.
pub trait Model: Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn derivative(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, ModelError>;

    /// `(∂f/∂x, ∂f/∂u)` in closed form, when the model has one.
    fn analytic_jacobians(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> Option<Result<(DMatrix<f64>, DMatrix<f64>), ModelError>> {
        None
    }
}

impl<M: Model + ?Sized> Model for &M {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn derivative(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        (**self).derivative(x, u)
    }
    fn analytic_jacobians(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Option<Result<(DMatrix<f64>, DMatrix<f64>), ModelError>> {
        (**self).analytic_jacobians(x, u)
    }
}

fn fd_step(value: f64) -> f64 {
    (1e-6 * value.abs()).max(1e-6)
}

fn check_finite(m: &DMatrix<f64>, matrix: &'static str) -> Result<(), ModelError> {
    for col in 0..m.ncols() {
        for row in 0..m.nrows() {
            if !m[(row, col)].is_finite() {
                return Err(ModelError::NonFiniteJacobian { matrix, row, col });
            }
        }
    }
    Ok(())
}

/// Central finite-difference Jacobians with a component-relative step.
pub fn finite_difference_jacobians<M: Model + ?Sized>(
    model: &M,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>), ModelError> {
    let n = model.state_dim();
    let m = model.input_dim();
    let mut fx = DMatrix::zeros(n, n);
    let mut fu = DMatrix::zeros(n, m);
    let mut xp = x.clone();
    for j in 0..n {
        let h = fd_step(x[j]);
        xp[j] = x[j] + h;
        let plus = model.derivative(&xp, u)?;
        xp[j] = x[j] - h;
        let minus = model.derivative(&xp, u)?;
        xp[j] = x[j];
        fx.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    let mut up = u.clone();
    for j in 0..m {
        let h = fd_step(u[j]);
        up[j] = u[j] + h;
        let plus = model.derivative(x, &up)?;
        up[j] = u[j] - h;
        let minus = model.derivative(x, &up)?;
        up[j] = u[j];
        fu.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    check_finite(&fx, "df/dx")?;
    check_finite(&fu, "df/du")?;
    Ok((fx, fu))
}

/// `(∂f/∂x, ∂f/∂u)`: analytic when available, finite differences otherwise.
pub fn model_jacobians<M: Model + ?Sized>(
    model: &M,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>), ModelError> {
    match model.analytic_jacobians(x, u) {
        Some(result) => {
            let (fx, fu) = result?;
            check_finite(&fx, "df/dx")?;
            check_finite(&fu, "df/du")?;
            Ok((fx, fu))
        }
        None => finite_difference_jacobians(model, x, u),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    /// ∞-norm bound on the implicit residual.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Step halvings attempted when a full Newton step raises the residual.
    pub max_halvings: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 25,
            max_halvings: 4,
        }
    }
}

/// Residual `x − x_prev − f(x, u)Δt` of the implicit Euler map.
pub fn implicit_residual<M: Model + ?Sized>(
    model: &M,
    x: &DVector<f64>,
    x_prev: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
) -> Result<DVector<f64>, ModelError> {
    Ok(x - x_prev - model.derivative(x, u)? * dt)
}

/// One implicit Euler step, solved by Newton iteration from `x_prev`.
pub fn implicit_euler_step<M: Model + ?Sized>(
    model: &M,
    x_prev: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
    settings: &NewtonSettings,
) -> Result<DVector<f64>, DiscretizeError> {
    if !(dt > 0.0) {
        return Err(DiscretizeError::InvalidStep(dt));
    }
    let n = model.state_dim();
    let mut x = x_prev.clone();
    let mut residual = implicit_residual(model, &x, x_prev, u, dt)?;
    let mut norm = residual.amax();
    for iteration in 0..settings.max_iterations {
        if norm <= settings.tolerance {
            return Ok(x);
        }
        let (fx, _) = model_jacobians(model, &x, u)?;
        let newton = DMatrix::identity(n, n) - fx * dt;
        let step = newton
            .lu()
            .solve(&(-&residual))
            .ok_or(DiscretizeError::SingularJacobian { iteration })?;
        let mut scale = 1.0;
        let mut halvings = 0;
        loop {
            let candidate = &x + &step * scale;
            let trial = implicit_residual(model, &candidate, x_prev, u, dt);
            let accept = match &trial {
                Ok(r) => r.amax() < norm || halvings == settings.max_halvings,
                Err(_) => halvings == settings.max_halvings,
            };
            if accept {
                residual = trial?;
                norm = residual.amax();
                x = candidate;
                break;
            }
            scale *= 0.5;
            halvings += 1;
        }
    }
    if norm <= settings.tolerance {
        Ok(x)
    } else {
        Err(DiscretizeError::NotConverged {
            iterations: settings.max_iterations,
            residual: norm,
        })
    }
}

/// Linearization of the implicit step `x_k = x_{k-1} + f(x_k, u)Δt` around
/// a guess: `x_k ≈ F_g + A0 δx_{k-1} + A1 δx_k + B δu`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageJacobians {
    pub a0: DMatrix<f64>,
    pub a1: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// The step map evaluated at the guess.
    pub f_g: DVector<f64>,
}

pub fn step_jacobians<M: Model + ?Sized>(
    model: &M,
    x_k: &DVector<f64>,
    x_prev: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
) -> Result<StageJacobians, ModelError> {
    let n = model.state_dim();
    let (fx, fu) = model_jacobians(model, x_k, u)?;
    let f = model.derivative(x_k, u)?;
    Ok(StageJacobians {
        a0: DMatrix::identity(n, n),
        a1: fx * dt,
        b: fu * dt,
        f_g: x_prev + f * dt,
    })
}

/// Classical RK4 with `substeps` equal steps over `dt`.
pub fn rk4_integrate<const D: usize, F, E>(
    x: SVector<f64, D>,
    dt: f64,
    substeps: usize,
    mut f: F,
) -> Result<SVector<f64, D>, DiscretizeError>
where
    F: FnMut(&SVector<f64, D>) -> Result<SVector<f64, D>, E>,
    E: Into<ModelError>,
{
    if !(dt > 0.0) || substeps == 0 {
        return Err(DiscretizeError::InvalidStep(dt));
    }
    let h = dt / substeps as f64;
    let mut x = x;
    for substep in 0..substeps {
        let mut eval = |y: &SVector<f64, D>| f(y).map_err(|e| DiscretizeError::Model(e.into()));
        let k1 = eval(&x)?;
        let k2 = eval(&(x + k1 * (0.5 * h)))?;
        let k3 = eval(&(x + k2 * (0.5 * h)))?;
        let k4 = eval(&(x + k3 * h))?;
        x += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(DiscretizeError::NonFiniteState { substep });
        }
    }
    Ok(x)
}

/// Propagates the plant over one control period with the input and wind
/// held constant.
pub fn rk4_truth_integrate(
    plant: &Plant,
    state: &PlantState,
    input: &ControlInput,
    wind: &WindCondition,
    dt: f64,
    substeps: usize,
) -> Result<PlantState, DiscretizeError> {
    let x = rk4_integrate::<PLANT_DIM, _, _>(state.to_vector(), dt, substeps, |v| {
        plant
            .derivative(&PlantState::from_vector(v), input, wind)
            .map(|d| d.to_vector())
    })?;
    Ok(PlantState::from_vector(&x))
}
