//! Plant models: the spring-coupled double inverted pendulum and the classic
//! cart-pole, plus process noise and the quadratic stage cost.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Shape of the actuator nonlinearity `h'(u)` applied to each torque.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputNonlinearity {
    Tanh,
    /// `u - u^3 / 3`, monotone only on `[-1, 1]`.
    Cubic,
}

pub fn input_nonlinearity(u: f64, kind: InputNonlinearity) -> f64 {
    match kind {
        InputNonlinearity::Tanh => u.tanh(),
        InputNonlinearity::Cubic => u - u * u * u / 3.0,
    }
}

/// Physical constants of the spring-coupled double pendulum. Angles are
/// measured from the upright vertical, so `x = 0` is the unstable equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumParams {
    pub m1: f64,
    pub m2: f64,
    /// Moments of inertia, kg·m².
    pub j1: f64,
    pub j2: f64,
    pub gravity: f64,
    /// Natural spring length `l'`.
    pub spring_length: f64,
    /// Distance between the two pivots `b`.
    pub pivot_distance: f64,
    pub spring_constant: f64,
    /// Pendulum height `s`.
    pub height: f64,
    pub nonlinearity: InputNonlinearity,
}

impl PendulumParams {
    pub fn table_one(nonlinearity: InputNonlinearity) -> Self {
        Self {
            m1: 2.0,
            m2: 2.0,
            j1: 0.5,
            j2: 0.5,
            gravity: 10.0,
            spring_length: 0.5,
            pivot_distance: 0.4,
            spring_constant: 2.0,
            height: 0.5,
            nonlinearity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.m1,
            self.m2,
            self.j1,
            self.j2,
            self.spring_length,
            self.pivot_distance,
            self.height,
        ];
        if positive.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(
                "pendulum masses, inertias and lengths must be positive".into(),
            ))
        }
    }
}

/// Continuous-time vector field `[θ̇1, θ̈1, θ̇2, θ̈2]` of the double pendulum.
pub fn double_pendulum_deriv(x: &[f64], u: &[f64], p: &PendulumParams) -> [f64; 4] {
    let (t1, w1, t2, w2) = (x[0], x[1], x[2], x[3]);
    let ks2 = p.spring_constant * p.height * p.height / 4.0;
    let offset = p.spring_constant * p.height / 2.0 * (p.spring_length - p.pivot_distance);
    let h1 = input_nonlinearity(u[0], p.nonlinearity);
    let h2 = input_nonlinearity(u[1], p.nonlinearity);

    let a1 = (p.m1 * p.gravity * p.height / p.j1 - ks2 / p.j1) * t1.sin()
        + offset / p.j1
        + h1 / p.j1
        + ks2 / p.j1 * t2.sin();
    let a2 = (p.m2 * p.gravity * p.height / p.j2 + ks2 / p.j2) * t2.sin() - offset / p.j2
        + h2 / p.j2
        + ks2 / p.j2 * t1.sin();
    [w1, a1, w2, a2]
}

/// Constants of the classic gym cart-pole.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartPoleParams {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Half the pole length.
    pub half_length: f64,
    pub dt: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            dt: 0.02,
        }
    }
}

/// One explicit Euler step of the cart-pole with a continuous force `u[0]`.
/// State is `[position, velocity, angle, angular velocity]`.
pub fn cartpole_step(x: &[f64], u: &[f64], p: &CartPoleParams) -> [f64; 4] {
    let (pos, vel, theta, omega) = (x[0], x[1], x[2], x[3]);
    let force = u[0];
    let total_mass = p.cart_mass + p.pole_mass;
    let pole_ml = p.pole_mass * p.half_length;
    let (sin, cos) = (theta.sin(), theta.cos());

    let temp = (force + pole_ml * omega * omega * sin) / total_mass;
    let theta_acc = (p.gravity * sin - cos * temp)
        / (p.half_length * (4.0 / 3.0 - p.pole_mass * cos * cos / total_mass));
    let x_acc = temp - pole_ml * theta_acc * cos / total_mass;

    [
        pos + p.dt * vel,
        vel + p.dt * x_acc,
        theta + p.dt * omega,
        omega + p.dt * theta_acc,
    ]
}

/// Classic fourth-order Runge-Kutta step of `ẋ = f(x)`.
pub fn rk4_step<F>(x: &[f64], dt: f64, f: F) -> Vec<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = x.len();
    let k1 = f(x);
    let mut tmp = vec![0.0; n];
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    let k2 = f(&tmp);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    let k3 = f(&tmp);
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    let k4 = f(&tmp);
    (0..n)
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Plant {
    DoublePendulum {
        params: PendulumParams,
        dt: f64,
        u_max: f64,
    },
    CartPole {
        params: CartPoleParams,
        u_max: f64,
    },
}

impl Plant {
    pub fn double_pendulum(nonlinearity: InputNonlinearity) -> Self {
        let u_max = match nonlinearity {
            InputNonlinearity::Tanh => 2.0,
            InputNonlinearity::Cubic => 1.0,
        };
        Plant::DoublePendulum {
            params: PendulumParams::table_one(nonlinearity),
            dt: 0.02,
            u_max,
        }
    }

    pub fn cartpole() -> Self {
        Plant::CartPole {
            params: CartPoleParams::default(),
            u_max: 10.0,
        }
    }

    pub fn state_dim(&self) -> usize {
        4
    }

    pub fn action_dim(&self) -> usize {
        match self {
            Plant::DoublePendulum { .. } => 2,
            Plant::CartPole { .. } => 1,
        }
    }

    pub fn dt(&self) -> f64 {
        match self {
            Plant::DoublePendulum { dt, .. } => *dt,
            Plant::CartPole { params, .. } => params.dt,
        }
    }

    pub fn u_max(&self) -> f64 {
        match self {
            Plant::DoublePendulum { u_max, .. } | Plant::CartPole { u_max, .. } => *u_max,
        }
    }

    pub fn clip_action(&self, u: &mut [f64]) {
        let limit = self.u_max();
        for v in u.iter_mut() {
            *v = v.clamp(-limit, limit);
        }
    }

    /// Noise-free transition `f(x, u)`.
    pub fn transition(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        check_len("plant state", self.state_dim(), x.len())?;
        check_len("plant action", self.action_dim(), u.len())?;
        Ok(match self {
            Plant::DoublePendulum { params, dt, .. } => {
                rk4_step(x, *dt, |s| double_pendulum_deriv(s, u, params).to_vec())
            }
            Plant::CartPole { params, .. } => cartpole_step(x, u, params).to_vec(),
        })
    }

    /// `x_{t+1} = f(x_t, u_t) + n_t`. `step` is only used to label a divergence.
    pub fn step(
        &self,
        x: &[f64],
        u: &[f64],
        noise: &mut NoiseModel,
        step: usize,
    ) -> Result<Vec<f64>> {
        let mut next = self.transition(x, u)?;
        noise.perturb(&mut next);
        if next.iter().all(|v| v.is_finite()) {
            Ok(next)
        } else {
            Err(Error::Diverged {
                step,
                last_state: x.to_vec(),
            })
        }
    }
}

/// Zero-mean Gaussian process noise with covariance `N`. Each instance owns
/// its random stream.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    factor: Option<DMatrix<f64>>,
    rng: ChaCha8Rng,
}

impl NoiseModel {
    pub fn new(covariance: &DMatrix<f64>, seed: u64) -> Result<Self> {
        if covariance.nrows() != covariance.ncols() {
            return Err(Error::InvalidParameter(
                "noise covariance must be square".into(),
            ));
        }
        let n = covariance.nrows();
        for i in 0..n {
            for j in 0..i {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(
                        "noise covariance must be symmetric".into(),
                    ));
                }
            }
        }
        let factor = if covariance.iter().all(|v| *v == 0.0) {
            None
        } else {
            // Symmetric square root tolerates singular PSD matrices where
            // Cholesky would not.
            let eig = covariance.clone().symmetric_eigen();
            if eig.eigenvalues.iter().any(|l| *l < -1e-12) {
                return Err(Error::InvalidParameter(
                    "noise covariance must be positive semidefinite".into(),
                ));
            }
            let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
            Some(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt) * eig.eigenvectors.transpose())
        };
        Ok(Self {
            factor,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn isotropic(dim: usize, variance: f64, seed: u64) -> Result<Self> {
        Self::new(&(DMatrix::identity(dim, dim) * variance), seed)
    }

    pub fn zero(dim: usize) -> Self {
        Self::isotropic(dim, 0.0, 0).expect("zero covariance is valid")
    }

    pub fn from_rng(covariance: &DMatrix<f64>, rng: ChaCha8Rng) -> Result<Self> {
        let mut model = Self::new(covariance, 0)?;
        model.rng = rng;
        Ok(model)
    }

    pub fn is_zero(&self) -> bool {
        self.factor.is_none()
    }

    pub fn sample(&mut self, dim: usize) -> Vec<f64> {
        match &self.factor {
            None => vec![0.0; dim],
            Some(factor) => {
                let xi =
                    DVector::from_fn(factor.nrows(), |_, _| StandardNormal.sample(&mut self.rng));
                (factor * xi).iter().copied().collect()
            }
        }
    }

    fn perturb(&mut self, x: &mut [f64]) {
        if self.factor.is_some() {
            let n = self.sample(x.len());
            for (v, e) in x.iter_mut().zip(n) {
                *v += e;
            }
        }
    }
}

/// Stage cost `(x̃ - x0)ᵀ Q (x̃ - x0) + ũᵀ B ũ`.
pub fn control_cost(
    x: &[f64],
    u: &[f64],
    q: &DMatrix<f64>,
    b: &DMatrix<f64>,
    x_ref: &[f64],
) -> Result<f64> {
    check_len("cost state weight", q.nrows(), x.len())?;
    check_len("cost reference", x.len(), x_ref.len())?;
    check_len("cost action weight", b.nrows(), u.len())?;
    let dx = DVector::from_iterator(x.len(), x.iter().zip(x_ref).map(|(a, r)| a - r));
    let du = DVector::from_column_slice(u);
    Ok((dx.transpose() * q * &dx)[(0, 0)] + (du.transpose() * b * &du)[(0, 0)])
}
