//! LQR in the latent space, horizon planning for the actuator cache, and the
//! DKUC / DKAC baseline control laws.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::koopman::{KoopmanDims, KoopmanModel, ModelVariant};

#[derive(Debug, Clone, PartialEq)]
pub struct LiftedWeights {
    pub q_hat: DMatrix<f64>,
    pub b_hat: DMatrix<f64>,
}

/// `Q̂ = blockdiag(Q, 0)`, `B̂ = B`, so the latent state penalty equals the
/// original one on the pass-through coordinates.
pub fn lift_weights(
    q: &DMatrix<f64>,
    b: &DMatrix<f64>,
    dims: &KoopmanDims,
) -> Result<LiftedWeights> {
    check_len("state weight rows", dims.state, q.nrows())?;
    check_len("state weight cols", dims.state, q.ncols())?;
    check_len("action weight rows", dims.latent_action, b.nrows())?;
    check_len("action weight cols", dims.latent_action, b.ncols())?;
    let mut q_hat = DMatrix::zeros(dims.latent, dims.latent);
    q_hat
        .view_mut((0, 0), (dims.state, dims.state))
        .copy_from(q);
    Ok(LiftedWeights {
        q_hat,
        b_hat: b.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DareMethod {
    /// Riccati value iteration from `P = Q̂`.
    FixedPoint,
    /// Structure-preserving doubling; quadratic convergence.
    Doubling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DareOptions {
    pub method: DareMethod,
    pub tol: f64,
    pub max_iter: usize,
    /// Newton refinement after convergence; `O(n⁶)` per step.
    pub refine: bool,
}

impl Default for DareOptions {
    fn default() -> Self {
        Self {
            method: DareMethod::Doubling,
            tol: 1e-10,
            max_iter: 10_000,
            refine: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqrSolution {
    pub p: DMatrix<f64>,
    /// `K_LQR`, `q' × q`.
    pub gain: DMatrix<f64>,
    /// Frobenius norm of the Riccati equation residual at `p`.
    pub residual: f64,
    pub iterations: usize,
    pub closed_loop_radius: f64,
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    a.clone().lu().solve(b)
}

/// Right-hand side of the Riccati equation and the associated gain.
fn riccati_map(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let pb = p * b;
    let s = r + b.transpose() * &pb;
    let gain = solve(&s, &(pb.transpose() * a))?;
    let mut next = q + a.transpose() * p * a - a.transpose() * &pb * &gain;
    symmetrize(&mut next);
    Some((next, gain))
}

/// Newton refinement: solves the Stein equation `A_cᵀ X A_c − X = −R(P)`
/// for the correction, keeping the iterate with the smallest residual.
fn polish(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: DMatrix<f64>,
    steps: usize,
) -> Option<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let (rhs, gain) = riccati_map(a, b, q, r, &p)?;
    let mut best = (p, rhs, gain);
    let mut best_res = (&best.1 - &best.0).norm();
    for _ in 0..steps {
        if best_res == 0.0 {
            break;
        }
        let ac = a - b * &best.2;
        let act = ac.transpose();
        let lhs = act.kronecker(&act) - DMatrix::<f64>::identity(n * n, n * n);
        let resid = &best.0 - &best.1;
        let x = match lhs
            .lu()
            .solve(&DVector::from_column_slice(resid.as_slice()))
        {
            Some(x) => DMatrix::from_column_slice(n, n, x.as_slice()),
            None => break,
        };
        let mut next = &best.0 + x;
        symmetrize(&mut next);
        let Some((rhs, gain)) = riccati_map(a, b, q, r, &next) else {
            break;
        };
        let res = (&rhs - &next).norm();
        if !(res < best_res) {
            break;
        }
        best = (next, rhs, gain);
        best_res = res;
    }
    Some(best)
}

/// Solves `P = Q̂ + AᵀPA − AᵀPB(B̂ + BᵀPB)⁻¹BᵀPA` with `A = K_x`, `B = K_u`
/// and returns `K_LQR = (B̂ + BᵀPB)⁻¹BᵀPA`. Fails unless the closed loop
/// `A − B K_LQR` is Schur stable.
pub fn solve_dare(
    kx: &DMatrix<f64>,
    ku: &DMatrix<f64>,
    q_hat: &DMatrix<f64>,
    b_hat: &DMatrix<f64>,
    opts: &DareOptions,
) -> Result<LqrSolution> {
    let n = kx.nrows();
    check_len("K_x cols", n, kx.ncols())?;
    check_len("K_u rows", n, ku.nrows())?;
    check_len("Q̂ size", n, q_hat.nrows())?;
    check_len("B̂ size", ku.ncols(), b_hat.nrows())?;

    let fail = |iterations: usize, residual: f64, closed: Option<f64>| Error::Unstabilizable {
        iterations,
        residual,
        open_loop_radius: spectral_radius(kx),
        closed_loop_radius: closed,
    };

    let (p, iterations) = match opts.method {
        DareMethod::FixedPoint => {
            let mut p = q_hat.clone();
            let mut iterations = 0;
            let mut update = f64::INFINITY;
            while iterations < opts.max_iter {
                let (next, _) = riccati_map(kx, ku, q_hat, b_hat, &p)
                    .ok_or_else(|| fail(iterations, update, None))?;
                update = (&next - &p).norm();
                p = next;
                iterations += 1;
                if !update.is_finite() {
                    return Err(fail(iterations, update, None));
                }
                if update <= opts.tol {
                    break;
                }
            }
            if update > opts.tol {
                return Err(fail(iterations, update, None));
            }
            (p, iterations)
        }
        DareMethod::Doubling => {
            let r_inv_bt =
                solve(b_hat, &ku.transpose()).ok_or_else(|| fail(0, f64::INFINITY, None))?;
            let mut a = kx.clone();
            let mut g = ku * r_inv_bt;
            symmetrize(&mut g);
            let mut h = q_hat.clone();
            let eye = DMatrix::<f64>::identity(n, n);
            let mut iterations = 0;
            let mut update = f64::INFINITY;
            while iterations < opts.max_iter {
                let w = &eye + &g * &h;
                let lu = w.lu();
                let w_inv_a = lu.solve(&a).ok_or_else(|| fail(iterations, update, None))?;
                let w_inv_g = lu.solve(&g).ok_or_else(|| fail(iterations, update, None))?;
                let mut h_next = &h + a.transpose() * &h * &w_inv_a;
                let mut g_next = &g + &a * w_inv_g * a.transpose();
                symmetrize(&mut h_next);
                symmetrize(&mut g_next);
                let a_next = &a * w_inv_a;
                update = (&h_next - &h).norm();
                let scale = h_next.norm().max(1.0);
                h = h_next;
                g = g_next;
                a = a_next;
                iterations += 1;
                if !update.is_finite() {
                    return Err(fail(iterations, update, None));
                }
                if update <= opts.tol * scale {
                    break;
                }
            }
            if update > opts.tol * h.norm().max(1.0) {
                return Err(fail(iterations, update, None));
            }
            (h, iterations)
        }
    };

    let steps = if opts.refine { 3 } else { 0 };
    let (p, rhs, gain) = polish(kx, ku, q_hat, b_hat, p, steps)
        .ok_or_else(|| fail(iterations, f64::INFINITY, None))?;
    let residual = (&rhs - &p).norm();
    let closed_loop_radius = spectral_radius(&(kx - ku * &gain));
    if !(closed_loop_radius < 1.0) || !residual.is_finite() {
        return Err(fail(iterations, residual, Some(closed_loop_radius)));
    }
    Ok(LqrSolution {
        p,
        gain,
        residual,
        iterations,
        closed_loop_radius,
    })
}

/// Output of one control computation.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlAction {
    pub latent: Vec<f64>,
    /// Decoded and clipped original-space action.
    pub action: Vec<f64>,
    /// DKAC only: an auxiliary gain was near zero or the per-step Riccati
    /// solve failed.
    pub flagged: bool,
}

/// Near-zero threshold for DKAC auxiliary gains.
pub const AUX_GAIN_EPS: f64 = 1e-8;

/// Latent LQR controller around the reference `x0`.
#[derive(Debug, Clone)]
pub struct Controller {
    pub model: KoopmanModel,
    pub weights: LiftedWeights,
    pub lqr: LqrSolution,
    pub x_ref: Vec<f64>,
    pub z_ref: Vec<f64>,
    pub u_max: f64,
    pub dare: DareOptions,
}

impl Controller {
    pub fn new(
        model: KoopmanModel,
        q: &DMatrix<f64>,
        b: &DMatrix<f64>,
        x_ref: &[f64],
        u_max: f64,
        dare: DareOptions,
    ) -> Result<Self> {
        let weights = lift_weights(q, b, &model.dims)?;
        let lqr = solve_dare(&model.kx, &model.ku, &weights.q_hat, &weights.b_hat, &dare)?;
        let z_ref = model.embed_state(x_ref)?;
        Ok(Self {
            model,
            weights,
            lqr,
            x_ref: x_ref.to_vec(),
            z_ref,
            u_max,
            dare,
        })
    }

    fn deviation(&self, z: &[f64]) -> Result<DVector<f64>> {
        check_len("latent state", self.model.dims.latent, z.len())?;
        Ok(DVector::from_iterator(
            z.len(),
            z.iter().zip(&self.z_ref).map(|(a, b)| a - b),
        ))
    }

    fn clip(&self, mut u: Vec<f64>) -> Vec<f64> {
        for v in &mut u {
            *v = v.clamp(-self.u_max, self.u_max);
        }
        u
    }

    /// `w* = −K_LQR (z − z0)`, without decoding.
    pub fn latent_action(&self, z: &[f64]) -> Result<Vec<f64>> {
        let w = -(&self.lqr.gain * self.deviation(z)?);
        Ok(w.as_slice().to_vec())
    }

    /// Per-state gain for the control-affine variant: Riccati solution for
    /// the effective input matrix `K_u · diag(A(x))`.
    pub fn affine_gain(&self, x: &[f64]) -> Result<(DMatrix<f64>, Vec<f64>)> {
        let gains = self.model.aux_gain(x)?;
        let mut ku_eff = self.model.ku.clone();
        for (j, a) in gains.iter().enumerate() {
            ku_eff.column_mut(j).scale_mut(*a);
        }
        let opts = DareOptions {
            refine: false,
            ..self.dare
        };
        let sol = solve_dare(
            &self.model.kx,
            &ku_eff,
            &self.weights.q_hat,
            &self.weights.b_hat,
            &opts,
        )?;
        Ok((sol.gain, gains))
    }

    fn affine_action(
        &self,
        gain: Option<&(DMatrix<f64>, Vec<f64>)>,
        z: &[f64],
    ) -> Result<ControlAction> {
        let Some((gain, aux)) = gain else {
            return Ok(ControlAction {
                latent: alloc::vec![0.0; self.model.dims.latent_action],
                action: alloc::vec![0.0; self.model.dims.action],
                flagged: true,
            });
        };
        let u = -(gain * self.deviation(z)?);
        let mut flagged = false;
        let mut action: Vec<f64> = u.iter().copied().collect();
        for (v, a) in action.iter_mut().zip(aux) {
            if a.abs() < AUX_GAIN_EPS {
                *v = self.u_max.copysign(*v);
                flagged = true;
            }
        }
        let action = self.clip(action);
        let latent = action.iter().zip(aux).map(|(u, a)| u * a).collect();
        Ok(ControlAction {
            latent,
            action,
            flagged,
        })
    }

    /// Control action for the latent state `z`, decoded and clipped to `u_max`.
    pub fn optimal_action(&self, z: &[f64]) -> Result<ControlAction> {
        match self.model.variant {
            ModelVariant::Proposed | ModelVariant::Dkuc => {
                let w = self.latent_action(z)?;
                let action = self.clip(self.model.decode_action(&w)?);
                Ok(ControlAction {
                    latent: w,
                    action,
                    flagged: false,
                })
            }
            ModelVariant::Dkac => {
                let gain = self.affine_gain(&z[..self.model.dims.state]).ok();
                self.affine_action(gain.as_ref(), z)
            }
        }
    }

    /// `N_c` actions from the nominal latent closed loop starting at `z`.
    pub fn plan_horizon(&self, z: &[f64], n_c: usize) -> Result<Vec<ControlAction>> {
        check_len("latent state", self.model.dims.latent, z.len())?;
        let d = self.model.dims.state;
        // DKAC fixes its gain at the plan origin.
        let affine = match self.model.variant {
            ModelVariant::Dkac => Some(self.affine_gain(&z[..d]).ok()),
            _ => None,
        };
        let mut plan = Vec::with_capacity(n_c);
        let mut zk = z.to_vec();
        for k in 0..n_c {
            let step = match &affine {
                Some(gain) => self.affine_action(gain.as_ref(), &zk)?,
                None => self.optimal_action(&zk)?,
            };
            if k + 1 < n_c {
                let w = match &affine {
                    Some(_) => self.model.latent_action(&zk[..d], &step.action)?,
                    None => step.latent.clone(),
                };
                zk = self.model.latent_step(&zk, &w)?;
            }
            plan.push(step);
        }
        Ok(plan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::DenseNet;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table_q() -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(alloc::vec![20.0, 0.01, 5.0, 0.01]))
    }

    fn table_b() -> DMatrix<f64> {
        DMatrix::identity(2, 2) * 0.001
    }

    #[test]
    fn lifted_weights_pad_with_zeros() {
        let dims = KoopmanDims::new(4, 2, 20);
        let w = lift_weights(&table_q(), &table_b(), &dims).unwrap();
        assert_abs_diff_eq!(w.q_hat.trace(), 25.02, epsilon = 1e-12);
        assert_eq!(w.b_hat, table_b());
        let mut eig: Vec<f64> = w
            .q_hat
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert_abs_diff_eq!(eig[0], 20.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eig[1], 5.0, epsilon = 1e-12);
        assert!(eig[4..].iter().all(|v| v.abs() < 1e-12));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut z = DVector::from_fn(24, |_, _| rng.random_range(-1.0..1.0));
        z.rows_mut(0, 4).copy_from_slice(&x);
        let xv = DVector::from_vec(x);
        let lifted = (z.transpose() * &w.q_hat * &z)[(0, 0)];
        let orig = (xv.transpose() * table_q() * &xv)[(0, 0)];
        assert_abs_diff_eq!(lifted, orig, epsilon = 1e-12);
        assert!(lift_weights(&table_q(), &table_b(), &KoopmanDims::new(3, 2, 20)).is_err());
    }

    #[test]
    fn scalar_golden_ratio() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
        for method in [DareMethod::FixedPoint, DareMethod::Doubling] {
            let sol = solve_dare(
                &one,
                &one,
                &one,
                &one,
                &DareOptions {
                    method,
                    ..Default::default()
                },
            )
            .unwrap();
            assert_abs_diff_eq!(sol.p[(0, 0)], phi, epsilon = 1e-9);
            assert_abs_diff_eq!(sol.gain[(0, 0)], phi / (1.0 + phi), epsilon = 1e-9);
            assert!(sol.closed_loop_radius < 1.0);
        }
    }

    #[test]
    fn zero_dynamics_is_deadbeat() {
        let q = DMatrix::from_diagonal(&DVector::from_vec(alloc::vec![2.0, 1.0, 0.5]));
        let ku = DMatrix::from_row_slice(3, 1, &[1.0, 0.5, -0.2]);
        let r = DMatrix::from_element(1, 1, 0.1);
        let sol = solve_dare(&DMatrix::zeros(3, 3), &ku, &q, &r, &DareOptions::default()).unwrap();
        assert_abs_diff_eq!(sol.p, q, epsilon = 1e-12);
        assert!(sol.gain.iter().all(|v| v.abs() < 1e-12));
    }

    fn random_system(n: usize, m: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(
            n,
            n,
            |i, j| if i == j { 1.0 } else { 0.0 } + rng.random_range(-0.15..0.15),
        );
        let b = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
        (a, b)
    }

    #[test]
    fn methods_agree_and_satisfy_invariants() {
        let (a, b) = random_system(8, 2, 2);
        let mut q = DMatrix::zeros(8, 8);
        q.view_mut((0, 0), (4, 4)).copy_from(&table_q());
        let r = table_b();
        let fp = solve_dare(
            &a,
            &b,
            &q,
            &r,
            &DareOptions {
                method: DareMethod::FixedPoint,
                tol: 1e-12,
                max_iter: 200_000,
                refine: false,
            },
        )
        .unwrap();
        let sda = solve_dare(&a, &b, &q, &r, &DareOptions::default()).unwrap();
        assert!((&fp.p - &sda.p).norm() <= 1e-6 * sda.p.norm());
        assert!(sda.residual <= 1e-8 * sda.p.norm().max(1.0));
        assert_eq!(sda.p, sda.p.transpose());
        assert!(sda
            .p
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .all(|l| *l >= -1e-9));
        assert!(sda.closed_loop_radius < 1.0);

        // Gain is invariant to a common scaling of the weights.
        let scaled = solve_dare(&a, &b, &(&q * 7.5), &(&r * 7.5), &DareOptions::default()).unwrap();
        assert!((&scaled.gain - &sda.gain).norm() <= 1e-8 * sda.gain.norm());
    }

    #[test]
    fn uncontrollable_unstable_mode_is_reported() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(alloc::vec![1.2, 0.5]));
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let q = DMatrix::identity(2, 2);
        let r = DMatrix::identity(1, 1);
        for method in [DareMethod::FixedPoint, DareMethod::Doubling] {
            let err = solve_dare(
                &a,
                &b,
                &q,
                &r,
                &DareOptions {
                    method,
                    tol: 1e-10,
                    max_iter: 500,
                    refine: true,
                },
            )
            .unwrap_err();
            match err {
                Error::Unstabilizable {
                    open_loop_radius, ..
                } => assert_abs_diff_eq!(open_loop_radius, 1.2, epsilon = 1e-12),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    fn controller(variant: ModelVariant, seed: u64) -> Controller {
        let dims = KoopmanDims::new(4, 2, 4);
        let mut model = KoopmanModel::new(variant, dims, &[8], seed).unwrap();
        let (a, b) = random_system(8, 2, seed + 50);
        model.kx = a;
        model.ku = b;
        Controller::new(
            model,
            &table_q(),
            &table_b(),
            &[0.0; 4],
            5.0,
            DareOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn action_at_reference_and_linearity() {
        let c = controller(ModelVariant::Proposed, 3);
        let at_ref = c.optimal_action(&c.z_ref.clone()).unwrap();
        assert!(at_ref.latent.iter().all(|v| *v == 0.0));
        assert_eq!(at_ref.action, c.model.decode_action(&[0.0, 0.0]).unwrap());

        let dz: Vec<f64> = (0..8).map(|i| 0.01 * (i as f64 - 3.0)).collect();
        let z1: Vec<f64> = c.z_ref.iter().zip(&dz).map(|(a, b)| a + b).collect();
        let z2: Vec<f64> = c.z_ref.iter().zip(&dz).map(|(a, b)| a + 2.0 * b).collect();
        let w1 = c.latent_action(&z1).unwrap();
        let w2 = c.latent_action(&z2).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(w2[i], 2.0 * w1[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn closed_latent_loop_contracts() {
        let c = controller(ModelVariant::Proposed, 4);
        let acl = &c.model.kx - &c.model.ku * &c.lqr.gain;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e0 = DVector::from_fn(8, |_, _| rng.random_range(-1.0..1.0));
        let mut e = e0.clone();
        for _ in 0..200 {
            e = &acl * e;
        }
        assert!(e.norm() <= 1e-3 * e0.norm());
    }

    #[test]
    fn plan_prefix_and_head() {
        let c = controller(ModelVariant::Proposed, 6);
        let z: Vec<f64> = (0..8).map(|i| 0.05 * i as f64).collect();
        let long = c.plan_horizon(&z, 10).unwrap();
        let short = c.plan_horizon(&z, 4).unwrap();
        assert_eq!(&long[..4], &short[..]);
        assert_eq!(
            c.plan_horizon(&z, 1).unwrap()[0],
            c.optimal_action(&z).unwrap()
        );
        let at_ref = c.plan_horizon(&c.z_ref.clone(), 5).unwrap();
        let head = c.model.decode_action(&[0.0, 0.0]).unwrap();
        // Off the reference fixed point the rollout drifts, so only the head is exact.
        assert_eq!(at_ref[0].action, head);
    }

    #[test]
    fn dkuc_matches_proposed_with_identity_maps() {
        let mut p = controller(ModelVariant::Proposed, 7);
        p.model.action_encoder = Some(DenseNet::identity(2));
        p.model.action_decoder = Some(DenseNet::identity(2));
        let mut u = controller(ModelVariant::Dkuc, 7);
        u.model.state_net = p.model.state_net.clone();
        u.z_ref = p.z_ref.clone();
        let z: Vec<f64> = (0..8).map(|i| 0.01 * i as f64).collect();
        assert_eq!(
            p.optimal_action(&z).unwrap().action,
            u.optimal_action(&z).unwrap().action
        );
    }

    #[test]
    fn dkac_uses_effective_input_matrix() {
        let c = controller(ModelVariant::Dkac, 8);
        let z: Vec<f64> = (0..8).map(|i| 0.02 * i as f64).collect();
        let out = c.optimal_action(&z).unwrap();
        let (gain, aux) = c.affine_gain(&z[..4]).unwrap();
        let dev = DVector::from_iterator(8, z.iter().zip(&c.z_ref).map(|(a, b)| a - b));
        let expected = -(gain * dev);
        for i in 0..2 {
            assert_abs_diff_eq!(out.action[i], expected[i].clamp(-5.0, 5.0), epsilon = 1e-12);
            assert_abs_diff_eq!(out.latent[i], out.action[i] * aux[i], epsilon = 1e-12);
        }
        assert!(!out.flagged);

        let mut dead = c.clone();
        let aux_net = dead.model.aux_net.as_mut().unwrap();
        for layer in &mut aux_net.layers {
            layer.weight.fill(0.0);
            layer.bias.fill(0.0);
        }
        let out = dead.optimal_action(&z).unwrap();
        assert!(out.flagged);
        assert!(out.action.iter().all(|v| v.abs() <= 5.0));
    }
}
