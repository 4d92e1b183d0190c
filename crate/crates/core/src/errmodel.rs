//! Polynomial surrogate `ε(‖x‖, β)` for the state prediction error after
//! `β` unobserved steps.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::Controller;
use crate::dynamics::{NoiseModel, Plant};
use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSample {
    pub state_norm: f64,
    pub beta: usize,
    pub error: f64,
}

/// Coefficients over the features returned by [`features`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPolyCoeffs {
    pub degree: usize,
    pub alpha: Vec<f64>,
}

/// Feature vector without intercept, ordered by total degree:
/// 1: `[n, β]`; 2: `[n, β, n², β², nβ]`; 3: adds `[n³, β³, n²β, nβ²]`.
pub fn features(degree: usize, n: f64, beta: f64) -> Result<Vec<f64>> {
    let mut f = vec![n, beta];
    if degree >= 2 {
        f.extend_from_slice(&[n * n, beta * beta, n * beta]);
    }
    if degree >= 3 {
        f.extend_from_slice(&[n * n * n, beta * beta * beta, n * n * beta, n * beta * beta]);
    }
    if (1..=3).contains(&degree) {
        Ok(f)
    } else {
        Err(Error::InvalidParameter(
            "polynomial degree must be 1, 2 or 3".into(),
        ))
    }
}

pub fn feature_count(degree: usize) -> usize {
    match degree {
        1 => 2,
        2 => 5,
        _ => 9,
    }
}

impl ErrorPolyCoeffs {
    /// Unclamped polynomial value.
    pub fn eval_raw(&self, n: f64, beta: f64) -> f64 {
        features(self.degree, n, beta)
            .map(|f| f.iter().zip(&self.alpha).map(|(a, b)| a * b).sum())
            .unwrap_or(f64::NAN)
    }
}

/// `ε = max(αᵀ φ(‖x‖, β), 0)`.
pub fn eval_error(coeffs: &ErrorPolyCoeffs, n: f64, beta: f64) -> f64 {
    coeffs.eval_raw(n, beta).max(0.0)
}

const RIDGE: f64 = 1e-8;

/// Ordinary least squares via the normal equations. A ridge of 1e-8 is added
/// when the Gram matrix is numerically singular.
pub fn fit_polynomial(samples: &[ErrorSample], degree: usize) -> Result<ErrorPolyCoeffs> {
    let p = feature_count(degree);
    features(degree, 0.0, 0.0)?;
    if samples.len() <= p {
        return Err(Error::InvalidParameter(
            "need more samples than polynomial features".into(),
        ));
    }
    let mut gram = DMatrix::zeros(p, p);
    let mut rhs = DVector::zeros(p);
    for s in samples {
        let f = DVector::from_vec(features(degree, s.state_norm, s.beta as f64)?);
        gram += &f * f.transpose();
        rhs += &f * s.error;
    }
    let eig = gram.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let singular = !(min > max * 1e-15);
    let system = if singular {
        &gram + DMatrix::identity(p, p) * RIDGE
    } else {
        gram.clone()
    };
    let alpha = system
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| system.lu().solve(&rhs))
        .filter(|a| a.iter().all(|v| v.is_finite()))
        .ok_or(Error::RankDeficient { ridge: RIDGE })?;
    Ok(ErrorPolyCoeffs {
        degree,
        alpha: alpha.iter().copied().collect(),
    })
}

/// Mean absolute residual of the unclamped fit.
pub fn mean_abs_residual(coeffs: &ErrorPolyCoeffs, samples: &[ErrorSample]) -> f64 {
    samples
        .iter()
        .map(|s| (coeffs.eval_raw(s.state_norm, s.beta as f64) - s.error).abs())
        .sum::<f64>()
        / samples.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeScore {
    pub degree: usize,
    pub train_residual: f64,
    pub holdout_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeSelection {
    pub best: usize,
    pub scores: Vec<DegreeScore>,
}

/// Fits every candidate degree on a seeded 80 % split and keeps the lowest
/// held-out mean absolute residual. Near-ties go to the lower degree.
pub fn select_degree(
    samples: &[ErrorSample],
    degrees: &[usize],
    seed: u64,
) -> Result<DegreeSelection> {
    if degrees.len() < 2 {
        return Err(Error::InvalidParameter(
            "degree selection needs at least two candidates".into(),
        ));
    }
    let mut shuffled = samples.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = shuffled.len() * 4 / 5;
    let (train, holdout) = shuffled.split_at(cut);
    let scale =
        1.0 + samples.iter().map(|s| s.error.abs()).sum::<f64>() / samples.len().max(1) as f64;

    let mut sorted = degrees.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut scores = Vec::with_capacity(sorted.len());
    let mut best: Option<(usize, f64)> = None;
    for &degree in &sorted {
        let coeffs = fit_polynomial(train, degree)?;
        let score = DegreeScore {
            degree,
            train_residual: mean_abs_residual(&coeffs, train),
            holdout_residual: mean_abs_residual(&coeffs, holdout),
        };
        if best.is_none_or(|(_, r)| score.holdout_residual < r - 1e-9 * scale) {
            best = Some((degree, score.holdout_residual));
        }
        scores.push(score);
    }
    Ok(DegreeSelection {
        best: best.map(|b| b.0).unwrap_or(sorted[0]),
        scores,
    })
}

/// Where the ground-truth continuation comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleSource {
    /// The real plant with isotropic process noise of the given variance.
    Plant { plant: Plant, noise_variance: f64 },
    /// The model's own latent rollout; errors are identically zero.
    SelfConsistent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub n: usize,
    pub beta_max: usize,
    /// Half-widths of the uniform box for the starting state.
    pub state_box: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub samples: Vec<ErrorSample>,
    /// Samples dropped because the plant diverged.
    pub discarded: usize,
}

/// Draws one sample: random start state and AoI, the controller's planned
/// actions applied open loop, and the distance between the latent prediction
/// and the true continuation.
pub fn collect_sample(
    controller: &Controller,
    source: &SampleSource,
    cfg: &SampleConfig,
    index: usize,
) -> Result<Option<ErrorSample>> {
    let model = &controller.model;
    let d = model.dims.state;
    check_len("sample state box", d, cfg.state_box.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2 * index as u64);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(2 * index as u64 + 1);

    let x: Vec<f64> = cfg
        .state_box
        .iter()
        .map(|&h| {
            if h > 0.0 {
                rng.random_range(-h..h)
            } else {
                0.0
            }
        })
        .collect();
    let beta = rng.random_range(1..=cfg.beta_max.max(1));
    let plan = controller.plan_horizon(&model.embed_state(&x)?, beta)?;
    let actions: Vec<Vec<f64>> = plan.into_iter().map(|p| p.action).collect();
    let predicted = model.predict_missing_state(&x, &actions, beta)?;
    let truth = match source {
        SampleSource::SelfConsistent => predicted.clone(),
        SampleSource::Plant {
            plant,
            noise_variance,
        } => {
            let mut noise =
                NoiseModel::from_rng(&(DMatrix::identity(d, d) * *noise_variance), noise_rng)?;
            let mut state = x.clone();
            for (t, u) in actions.iter().enumerate() {
                match plant.step(&state, u, &mut noise, t) {
                    Ok(next) => state = next,
                    Err(Error::Diverged { .. }) => return Ok(None),
                    Err(e) => return Err(e),
                }
            }
            state
        }
    };
    let error = predicted
        .iter()
        .zip(&truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if !error.is_finite() {
        return Ok(None);
    }
    Ok(Some(ErrorSample {
        state_norm: x.iter().map(|v| v * v).sum::<f64>().sqrt(),
        beta,
        error,
    }))
}

pub fn collect_samples(
    controller: &Controller,
    source: &SampleSource,
    cfg: &SampleConfig,
) -> Result<SampleSet> {
    if cfg.n == 0 {
        return Err(Error::InvalidParameter(
            "sample count must be at least 1".into(),
        ));
    }
    let mut samples = Vec::with_capacity(cfg.n);
    let mut discarded = 0;
    for i in 0..cfg.n {
        match collect_sample(controller, source, cfg, i)? {
            Some(s) => samples.push(s),
            None => discarded += 1,
        }
    }
    Ok(SampleSet { samples, discarded })
}

/// Mean error per exact `β` value, for the requested AoIs.
pub fn binned_means(samples: &[ErrorSample], betas: &[usize]) -> Vec<Option<f64>> {
    betas
        .iter()
        .map(|&b| {
            let (sum, count) = samples
                .iter()
                .filter(|s| s.beta == b)
                .fold((0.0, 0usize), |(s, c), x| (s + x.error, c + 1));
            (count > 0).then(|| sum / count as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::DareOptions;
    use crate::dynamics::InputNonlinearity;
    use crate::koopman::{KoopmanDims, KoopmanModel, ModelVariant};
    use approx::assert_abs_diff_eq;

    fn synthetic(f: impl Fn(f64, f64) -> f64, seed: u64) -> Vec<ErrorSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..400)
            .map(|_| {
                let n = rng.random_range(0.0..2.0);
                let beta = rng.random_range(1..=30);
                ErrorSample {
                    state_norm: n,
                    beta,
                    error: f(n, beta as f64),
                }
            })
            .collect()
    }

    #[test]
    fn exact_recovery() {
        let c = fit_polynomial(&synthetic(|n, b| 2.0 * n + 3.0 * b, 1), 2).unwrap();
        for (a, e) in c.alpha.iter().zip([2.0, 3.0, 0.0, 0.0, 0.0]) {
            assert_abs_diff_eq!(*a, e, epsilon = 1e-6);
        }
        let c = fit_polynomial(&synthetic(|n, b| n * b, 2), 2).unwrap();
        for (a, e) in c.alpha.iter().zip([0.0, 0.0, 0.0, 0.0, 1.0]) {
            assert_abs_diff_eq!(*a, e, epsilon = 1e-6);
        }
    }

    #[test]
    fn eval_examples() {
        let c = ErrorPolyCoeffs {
            degree: 2,
            alpha: vec![0.0, 1.0, 0.0, 0.0, 0.0],
        };
        assert_eq!(eval_error(&c, 0.7, 5.0), 5.0);
        let zero = ErrorPolyCoeffs {
            degree: 2,
            alpha: vec![0.0; 5],
        };
        assert_eq!(eval_error(&zero, 3.0, 9.0), 0.0);
        let neg = ErrorPolyCoeffs {
            degree: 1,
            alpha: vec![-1.0, -1.0],
        };
        assert_eq!(eval_error(&neg, 1.0, 1.0), 0.0);
    }

    #[test]
    fn fit_eval_round_trip() {
        let samples = synthetic(
            |n, b| 0.1 + 0.3 * n * n + 0.01 * b + (n * 13.0).sin() * 0.05,
            3,
        );
        let c = fit_polynomial(&samples, 2).unwrap();
        // Fitted values straight from the design matrix.
        let phi = DMatrix::from_fn(samples.len(), 5, |i, j| {
            features(2, samples[i].state_norm, samples[i].beta as f64).unwrap()[j]
        });
        let fitted = &phi * DVector::from_vec(c.alpha.clone());
        for (i, s) in samples.iter().enumerate() {
            assert_abs_diff_eq!(
                c.eval_raw(s.state_norm, s.beta as f64),
                fitted[i],
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn rank_deficient_data_uses_ridge() {
        // Constant β makes β and β² collinear with each other.
        let samples: Vec<ErrorSample> = (0..50)
            .map(|i| ErrorSample {
                state_norm: i as f64 * 0.01,
                beta: 1,
                error: 0.5 * i as f64 * 0.01 + 1.0,
            })
            .collect();
        let c = fit_polynomial(&samples, 2).unwrap();
        assert!(c.alpha.iter().all(|v| v.is_finite()));
        assert!(mean_abs_residual(&c, &samples) < 1e-4);
        assert!(fit_polynomial(&samples[..3], 2).is_err());
    }

    #[test]
    fn degree_selection() {
        let quad = synthetic(|n, b| 0.2 * n * n + 0.01 * b * b + 0.05 * n * b, 4);
        assert_eq!(select_degree(&quad, &[1, 2, 3], 0).unwrap().best, 2);
        let lin = synthetic(|n, b| 0.5 * n + 0.02 * b, 5);
        let sel = select_degree(&lin, &[1, 2, 3], 0).unwrap();
        assert_eq!(sel.best, 1);
        assert_eq!(sel.scores.len(), 3);
        assert!(select_degree(&lin, &[2], 0).is_err());
    }

    #[test]
    fn self_consistent_samples_have_zero_error() {
        let plant = Plant::double_pendulum(InputNonlinearity::Tanh);
        let mut model =
            KoopmanModel::new(ModelVariant::Proposed, KoopmanDims::new(4, 2, 4), &[8], 1).unwrap();
        model.kx *= 0.9;
        let q = DMatrix::identity(4, 4);
        let b = DMatrix::identity(2, 2) * 0.01;
        let ctrl = Controller::new(
            model,
            &q,
            &b,
            &[0.0; 4],
            plant.u_max(),
            DareOptions::default(),
        )
        .unwrap();
        let cfg = SampleConfig {
            n: 50,
            beta_max: 30,
            state_box: vec![0.3; 4],
            seed: 2,
        };
        let set = collect_samples(&ctrl, &SampleSource::SelfConsistent, &cfg).unwrap();
        assert_eq!(set.samples.len(), 50);
        assert!(set
            .samples
            .iter()
            .all(|s| s.error == 0.0 && (1..=30).contains(&s.beta)));

        let real = collect_samples(
            &ctrl,
            &SampleSource::Plant {
                plant,
                noise_variance: 0.0,
            },
            &cfg,
        )
        .unwrap();
        assert_eq!(real.samples.len() + real.discarded, 50);
        assert_eq!(
            real,
            collect_samples(
                &ctrl,
                &SampleSource::Plant {
                    plant: Plant::double_pendulum(InputNonlinearity::Tanh),
                    noise_variance: 0.0
                },
                &cfg
            )
            .unwrap()
        );
    }

    proptest::proptest! {
        #[test]
        fn clamped_error_is_nonnegative(
            alpha in proptest::collection::vec(-5.0f64..5.0, 5),
            n in 0.0f64..10.0,
            beta in 0.0f64..40.0,
        ) {
            let c = ErrorPolyCoeffs { degree: 2, alpha };
            proptest::prop_assert!(eval_error(&c, n, beta) >= 0.0);
        }
    }
}
