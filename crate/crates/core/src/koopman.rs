//! Deep Koopman model: learned state lifting, action encoder/decoder and a
//! linear latent transition `z' = K_x z + K_u w`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{NoiseModel, Plant};
use crate::error::{check_len, Error, Result};
use crate::nn::{Adam, DenseNet, ForwardCache, Parameters};

/// Which latent-action construction a model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelVariant {
    /// Learned encoder `w = g_μ(u)` and decoder `u = g_ρ(w)`.
    Proposed,
    /// Latent action equals the raw action.
    Dkuc,
    /// Control-affine: `w = A(x) ⊙ u` with a state-dependent auxiliary net.
    Dkac,
}

impl ModelVariant {
    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Proposed => "proposed",
            ModelVariant::Dkuc => "dkuc",
            ModelVariant::Dkac => "dkac",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KoopmanDims {
    pub state: usize,
    pub action: usize,
    pub latent: usize,
    pub latent_action: usize,
}

impl KoopmanDims {
    /// `q = D + lifted`, `q' = D'`.
    pub fn new(state: usize, action: usize, lifted: usize) -> Self {
        Self {
            state,
            action,
            latent: state + lifted,
            latent_action: action,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanModel {
    pub variant: ModelVariant,
    pub dims: KoopmanDims,
    /// `g_φ: R^D → R^{q−D}`.
    pub state_net: DenseNet,
    pub action_encoder: Option<DenseNet>,
    pub action_decoder: Option<DenseNet>,
    pub aux_net: Option<DenseNet>,
    pub kx: DMatrix<f64>,
    pub ku: DMatrix<f64>,
}

fn chain(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(input);
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    sizes
}

impl KoopmanModel {
    /// Random initialization: He-uniform networks, `K_x = I + 0.01·N`,
    /// `K_u = 0.01·N`.
    pub fn new(
        variant: ModelVariant,
        dims: KoopmanDims,
        hidden: &[usize],
        seed: u64,
    ) -> Result<Self> {
        if dims.latent <= dims.state {
            return Err(Error::InvalidParameter(
                "latent dimension must exceed state dimension".into(),
            ));
        }
        if variant != ModelVariant::Proposed && dims.latent_action != dims.action {
            return Err(Error::InvalidParameter(
                "baseline variants need latent action dimension equal to action dimension".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state_net = DenseNet::new(
            &chain(dims.state, hidden, dims.latent - dims.state),
            &mut rng,
        );
        let (action_encoder, action_decoder, aux_net) = match variant {
            ModelVariant::Proposed => (
                Some(DenseNet::new(
                    &chain(dims.action, hidden, dims.latent_action),
                    &mut rng,
                )),
                Some(DenseNet::new(
                    &chain(dims.latent_action, hidden, dims.action),
                    &mut rng,
                )),
                None,
            ),
            ModelVariant::Dkuc => (None, None, None),
            ModelVariant::Dkac => (
                None,
                None,
                Some(DenseNet::new(
                    &chain(dims.state, hidden, dims.action),
                    &mut rng,
                )),
            ),
        };
        let mut noise = |_: usize, _: usize| -> f64 {
            let v: f64 = StandardNormal.sample(&mut rng);
            0.01 * v
        };
        let kx = DMatrix::identity(dims.latent, dims.latent)
            + DMatrix::from_fn(dims.latent, dims.latent, &mut noise);
        let ku = DMatrix::from_fn(dims.latent, dims.latent_action, &mut noise);
        Ok(Self {
            variant,
            dims,
            state_net,
            action_encoder,
            action_decoder,
            aux_net,
            kx,
            ku,
        })
    }

    /// `z = [x ; g_φ(x)]`.
    pub fn embed_state(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("state embedding input", self.dims.state, x.len())?;
        let mut z = Vec::with_capacity(self.dims.latent);
        z.extend_from_slice(x);
        z.extend(self.state_net.forward(x)?);
        Ok(z)
    }

    /// `w = g_μ(u)`; the raw action for DKUC. DKAC needs the state, see
    /// [`KoopmanModel::latent_action`].
    pub fn embed_action(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len("action embedding input", self.dims.action, u.len())?;
        match self.variant {
            ModelVariant::Proposed => self.encoder()?.forward(u),
            ModelVariant::Dkuc => Ok(u.to_vec()),
            ModelVariant::Dkac => Err(Error::Variant("dkac")),
        }
    }

    /// Latent action for any variant, given the (possibly predicted) state.
    pub fn latent_action(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        match self.variant {
            ModelVariant::Dkac => {
                check_len("action embedding input", self.dims.action, u.len())?;
                let a = self.aux_gain(x)?;
                Ok(a.iter().zip(u).map(|(a, u)| a * u).collect())
            }
            _ => self.embed_action(u),
        }
    }

    /// `u = g_ρ(w)`; identity for DKUC.
    pub fn decode_action(&self, w: &[f64]) -> Result<Vec<f64>> {
        check_len("action decoder input", self.dims.latent_action, w.len())?;
        match self.variant {
            ModelVariant::Proposed => self.decoder()?.forward(w),
            ModelVariant::Dkuc => Ok(w.to_vec()),
            ModelVariant::Dkac => Err(Error::Variant("dkac")),
        }
    }

    /// Auxiliary input gains `A(x)` of the control-affine variant.
    pub fn aux_gain(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("auxiliary network input", self.dims.state, x.len())?;
        self.aux_net
            .as_ref()
            .ok_or(Error::Variant(self.variant.name()))?
            .forward(x)
    }

    /// `z' = K_x z + K_u w`.
    pub fn latent_step(&self, z: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        check_len("latent state", self.dims.latent, z.len())?;
        check_len("latent action", self.dims.latent_action, w.len())?;
        let next =
            &self.kx * DVector::from_column_slice(z) + &self.ku * DVector::from_column_slice(w);
        Ok(next.as_slice().to_vec())
    }

    /// Advances a latent state by one applied action, using the first `D`
    /// latent coordinates as the state estimate where the variant needs it.
    pub fn advance(&self, z: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let w = self.latent_action(&z[..self.dims.state.min(z.len())], u)?;
        self.latent_step(z, &w)
    }

    /// Rolls `steps` applied actions forward from the last received state and
    /// returns the first `D` latent coordinates.
    pub fn predict_missing_state(
        &self,
        x_last: &[f64],
        actions: &[Vec<f64>],
        steps: usize,
    ) -> Result<Vec<f64>> {
        if steps == 0 {
            check_len("state", self.dims.state, x_last.len())?;
            return Ok(x_last.to_vec());
        }
        if actions.len() != steps {
            return Err(Error::ActionCount {
                expected: steps,
                got: actions.len(),
            });
        }
        let mut z = self.embed_state(x_last)?;
        for u in actions {
            z = self.advance(&z, u)?;
        }
        z.truncate(self.dims.state);
        Ok(z)
    }

    fn encoder(&self) -> Result<&DenseNet> {
        self.action_encoder
            .as_ref()
            .ok_or(Error::Variant(self.variant.name()))
    }

    fn decoder(&self) -> Result<&DenseNet> {
        self.action_decoder
            .as_ref()
            .ok_or(Error::Variant(self.variant.name()))
    }
}

impl Parameters for KoopmanModel {
    fn param_len(&self) -> usize {
        self.state_net.param_len()
            + self.action_encoder.as_ref().map_or(0, DenseNet::param_len)
            + self.action_decoder.as_ref().map_or(0, DenseNet::param_len)
            + self.aux_net.as_ref().map_or(0, DenseNet::param_len)
            + self.kx.len()
            + self.ku.len()
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        self.state_net.write_params(out);
        for net in [&self.action_encoder, &self.action_decoder, &self.aux_net]
            .into_iter()
            .flatten()
        {
            net.write_params(out);
        }
        self.kx.write_params(out);
        self.ku.write_params(out);
    }

    fn read_params<'a>(&mut self, mut src: &'a [f64]) -> &'a [f64] {
        src = self.state_net.read_params(src);
        for net in [
            &mut self.action_encoder,
            &mut self.action_decoder,
            &mut self.aux_net,
        ]
        .into_iter()
        .flatten()
        {
            src = net.read_params(src);
        }
        src = self.kx.read_params(src);
        self.ku.read_params(src)
    }
}

/// One recorded trajectory, row-major. `x_{t+1} = f(x_t, u_t) + n_t` holds for
/// every consecutive pair of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    /// Set when the plant diverged and the trajectory was cut short.
    pub truncated: bool,
}

impl Trajectory {
    pub fn len(&self, state_dim: usize) -> usize {
        self.states.len() / state_dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_traj: usize,
    pub n_steps: usize,
    pub u_max: f64,
    /// Half-widths of the uniform initial-state box, per component.
    pub init_box: Vec<f64>,
    /// Isotropic process noise variance.
    pub noise_variance: f64,
    pub seed: u64,
}

impl DatasetConfig {
    /// Desk-scale defaults: 200 trajectories of 500 steps.
    pub fn for_plant(plant: &Plant, seed: u64) -> Self {
        let init_box = match plant {
            Plant::DoublePendulum { .. } => vec![0.5, 1.0, 0.5, 1.0],
            Plant::CartPole { .. } => vec![0.2; 4],
        };
        Self {
            n_traj: 200,
            n_steps: 500,
            u_max: plant.u_max(),
            init_box,
            noise_variance: 1e-6,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDataset {
    pub state_dim: usize,
    pub action_dim: usize,
    pub plant: Plant,
    pub config: DatasetConfig,
    pub trajectories: Vec<Trajectory>,
}

/// Random streams for trajectory `index`: (initial state and actions, noise).
pub fn trajectory_streams(seed: u64, index: usize) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut actions = ChaCha8Rng::seed_from_u64(seed);
    actions.set_stream(2 * index as u64);
    let mut noise = ChaCha8Rng::seed_from_u64(seed);
    noise.set_stream(2 * index as u64 + 1);
    (actions, noise)
}

pub fn generate_trajectory(plant: &Plant, cfg: &DatasetConfig, index: usize) -> Result<Trajectory> {
    let d = plant.state_dim();
    let m = plant.action_dim();
    check_len("initial-state box", d, cfg.init_box.len())?;
    let (mut rng, noise_rng) = trajectory_streams(cfg.seed, index);
    let mut noise =
        NoiseModel::from_rng(&(DMatrix::identity(d, d) * cfg.noise_variance), noise_rng)?;
    let mut x: Vec<f64> = cfg
        .init_box
        .iter()
        .map(|&h| {
            if h > 0.0 {
                rng.random_range(-h..h)
            } else {
                0.0
            }
        })
        .collect();
    let mut states = Vec::with_capacity(cfg.n_steps * d);
    let mut actions = Vec::with_capacity(cfg.n_steps * m);
    let mut truncated = false;
    for t in 0..cfg.n_steps {
        let u: Vec<f64> = (0..m)
            .map(|_| rng.random_range(-cfg.u_max..=cfg.u_max))
            .collect();
        states.extend_from_slice(&x);
        actions.extend_from_slice(&u);
        if t + 1 == cfg.n_steps {
            break;
        }
        match plant.step(&x, &u, &mut noise, t) {
            Ok(next) => x = next,
            Err(Error::Diverged { .. }) => {
                truncated = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Trajectory {
        states,
        actions,
        truncated,
    })
}

/// Uniform random actions from uniform random initial states. Each
/// trajectory has its own streams, so the result does not depend on the
/// generation order.
pub fn generate_dataset(plant: &Plant, cfg: &DatasetConfig) -> Result<TrajectoryDataset> {
    if cfg.n_traj == 0 || cfg.n_steps == 0 {
        return Err(Error::InvalidParameter(
            "dataset needs at least one trajectory and one step".into(),
        ));
    }
    let trajectories = (0..cfg.n_traj)
        .map(|i| generate_trajectory(plant, cfg, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryDataset {
        state_dim: plant.state_dim(),
        action_dim: plant.action_dim(),
        plant: plant.clone(),
        config: cfg.clone(),
        trajectories,
    })
}

/// Start of a training window of `horizon + 1` consecutive samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub traj: usize,
    pub start: usize,
}

/// Box `|x_i| ≤ envelope_i` that every state of a training window must stay in.
pub fn default_envelope(plant: &Plant) -> Vec<f64> {
    match plant {
        Plant::DoublePendulum { .. } => vec![1.0, 3.0, 1.0, 3.0],
        Plant::CartPole { .. } => vec![2.4, 3.0, 0.5, 3.0],
    }
}

impl TrajectoryDataset {
    /// Every stride-1 window of `horizon + 1` samples, optionally keeping only
    /// windows that stay inside `envelope`.
    pub fn windows(&self, horizon: usize, envelope: Option<&[f64]>) -> Result<Vec<Window>> {
        if horizon == 0 {
            return Err(Error::InvalidParameter(
                "prediction horizon must be at least 1".into(),
            ));
        }
        if let Some(env) = envelope {
            check_len("envelope", self.state_dim, env.len())?;
        }
        let d = self.state_dim;
        let mut out = Vec::new();
        let mut longest = 0;
        for (ti, traj) in self.trajectories.iter().enumerate() {
            let len = traj.len(d);
            longest = longest.max(len);
            if len < horizon + 1 {
                continue;
            }
            // Run length of consecutive in-envelope states ending at each row.
            let mut run = 0;
            for t in 0..len {
                let inside = envelope.is_none_or(|env| {
                    traj.states[t * d..(t + 1) * d]
                        .iter()
                        .zip(env)
                        .all(|(v, e)| v.abs() <= *e)
                });
                run = if inside { run + 1 } else { 0 };
                if run > horizon {
                    out.push(Window {
                        traj: ti,
                        start: t - horizon,
                    });
                }
            }
        }
        if longest < horizon + 1 {
            return Err(Error::HorizonTooLong {
                horizon,
                needed: horizon + 1,
                available: longest,
            });
        }
        Ok(out)
    }

    /// Packs windows into a batch. Block `k` of each matrix holds sample
    /// `start + k` of every window.
    pub fn batch(&self, windows: &[Window], horizon: usize) -> Result<Batch> {
        let (d, m) = (self.state_dim, self.action_dim);
        let b = windows.len();
        let mut states = DMatrix::zeros(d, (horizon + 1) * b);
        let mut actions = DMatrix::zeros(m, (horizon + 1) * b);
        for (j, w) in windows.iter().enumerate() {
            let traj = &self.trajectories[w.traj];
            let available = traj.len(d);
            if w.start + horizon >= available {
                return Err(Error::HorizonTooLong {
                    horizon,
                    needed: w.start + horizon + 1,
                    available,
                });
            }
            for k in 0..=horizon {
                let row = w.start + k;
                let col = k * b + j;
                states
                    .column_mut(col)
                    .copy_from_slice(&traj.states[row * d..(row + 1) * d]);
                actions
                    .column_mut(col)
                    .copy_from_slice(&traj.actions[row * m..(row + 1) * m]);
            }
        }
        Ok(Batch {
            states,
            actions,
            size: b,
            horizon,
        })
    }
}

/// Windows of `horizon + 1` samples laid out block-wise by time offset.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: DMatrix<f64>,
    pub actions: DMatrix<f64>,
    pub size: usize,
    pub horizon: usize,
}

impl Batch {
    pub fn from_windows(states: &[Vec<Vec<f64>>], actions: &[Vec<Vec<f64>>]) -> Result<Self> {
        let b = states.len();
        if b == 0 || actions.len() != b {
            return Err(Error::InvalidParameter(
                "batch needs matching, non-empty state and action windows".into(),
            ));
        }
        let len = states[0].len();
        if len < 2 {
            return Err(Error::HorizonTooLong {
                horizon: 1,
                needed: 2,
                available: len,
            });
        }
        let d = states[0][0].len();
        let m = actions[0][0].len();
        let mut sm = DMatrix::zeros(d, len * b);
        let mut am = DMatrix::zeros(m, len * b);
        for j in 0..b {
            if states[j].len() != len || actions[j].len() != len {
                return Err(Error::InvalidParameter(
                    "all windows in a batch must have equal length".into(),
                ));
            }
            for k in 0..len {
                sm.column_mut(k * b + j).copy_from_slice(&states[j][k]);
                am.column_mut(k * b + j).copy_from_slice(&actions[j][k]);
            }
        }
        Ok(Self {
            states: sm,
            actions: am,
            size: b,
            horizon: len - 1,
        })
    }
}

enum ActionPath {
    Proposed {
        mu_cache: ForwardCache,
        rho_out: DMatrix<f64>,
        rho_cache: ForwardCache,
    },
    Raw,
    Affine {
        aux_cache: ForwardCache,
    },
}

impl KoopmanModel {
    /// Multi-step loss
    /// `Σ_{k=1..N_p} MSE(Z_k, Ẑ_k) + MSE(U_k, g_ρ(g_μ(U_k)))`,
    /// where `Ẑ_k` is the latent rollout from `Z_0` driven by `u_0..u_{k−1}`.
    /// The reconstruction term only exists for the proposed variant.
    pub fn multistep_loss(&self, batch: &Batch) -> Result<f64> {
        Ok(self.loss_impl(batch, false)?.0)
    }

    /// Loss and its gradient, flattened in [`Parameters`] order. The targets
    /// `Z_k` depend on `g_φ` and receive gradient too.
    pub fn loss_and_grad(&self, batch: &Batch) -> Result<(f64, Vec<f64>)> {
        let (loss, grad) = self.loss_impl(batch, true)?;
        Ok((loss, grad.unwrap_or_default()))
    }

    fn loss_impl(&self, batch: &Batch, want_grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
        let KoopmanDims {
            state: d,
            action: m,
            latent: q,
            latent_action: qa,
        } = self.dims;
        check_len("batch state rows", d, batch.states.nrows())?;
        check_len("batch action rows", m, batch.actions.nrows())?;
        let (b, np) = (batch.size, batch.horizon);
        if np == 0 {
            return Err(Error::HorizonTooLong {
                horizon: 0,
                needed: 2,
                available: 1,
            });
        }
        let n = (np + 1) * b;
        check_len("batch columns", n, batch.states.ncols())?;
        check_len("batch columns", n, batch.actions.ncols())?;

        let (lifted, phi_cache) = self.state_net.forward_batch(&batch.states)?;
        let mut z_all = DMatrix::zeros(q, n);
        z_all.rows_mut(0, d).copy_from(&batch.states);
        z_all.rows_mut(d, q - d).copy_from(&lifted);

        let (w_all, path) = match self.variant {
            ModelVariant::Proposed => {
                let (mu_out, mu_cache) = self.encoder()?.forward_batch(&batch.actions)?;
                let (rho_out, rho_cache) = self
                    .decoder()?
                    .forward_batch(&mu_out.columns(b, np * b).into_owned())?;
                (
                    mu_out,
                    ActionPath::Proposed {
                        mu_cache,
                        rho_out,
                        rho_cache,
                    },
                )
            }
            ModelVariant::Dkuc => (batch.actions.clone(), ActionPath::Raw),
            ModelVariant::Dkac => {
                let aux = self.aux_net.as_ref().ok_or(Error::Variant("dkac"))?;
                let (gains, aux_cache) = aux.forward_batch(&batch.states)?;
                (
                    gains.component_mul(&batch.actions),
                    ActionPath::Affine { aux_cache },
                )
            }
        };

        let mut zhat: Vec<DMatrix<f64>> = Vec::with_capacity(np + 1);
        zhat.push(z_all.columns(0, b).into_owned());
        let mut loss = 0.0;
        let mut residuals: Vec<DMatrix<f64>> = Vec::with_capacity(np);
        let z_scale = 1.0 / (q * b) as f64;
        for k in 1..=np {
            let next = &self.kx * &zhat[k - 1] + &self.ku * w_all.columns((k - 1) * b, b);
            let r = z_all.columns(k * b, b) - &next;
            loss += r.norm_squared() * z_scale;
            residuals.push(r);
            zhat.push(next);
        }
        let u_scale = 1.0 / (m * b) as f64;
        let recon_residual = match &path {
            ActionPath::Proposed { rho_out, .. } => {
                let r = rho_out - batch.actions.columns(b, np * b);
                loss += r.norm_squared() * u_scale;
                Some(r)
            }
            _ => None,
        };
        if !want_grad {
            return Ok((loss, None));
        }

        // Adjoint of the rollout: λ_k = ∂L/∂Ẑ_k accumulated backwards.
        let mut d_kx = DMatrix::zeros(q, q);
        let mut d_ku = DMatrix::zeros(q, qa);
        let mut d_w = DMatrix::zeros(qa, n);
        let mut d_z = DMatrix::zeros(q, n);
        let mut lambda = DMatrix::zeros(q, b);
        for k in (1..=np).rev() {
            lambda -= &residuals[k - 1] * (2.0 * z_scale);
            d_z.columns_mut(k * b, b)
                .copy_from(&(&residuals[k - 1] * (2.0 * z_scale)));
            d_kx += &lambda * zhat[k - 1].transpose();
            d_ku += &lambda * w_all.columns((k - 1) * b, b).transpose();
            d_w.columns_mut((k - 1) * b, b)
                .copy_from(&(self.ku.transpose() * &lambda));
            lambda = self.kx.transpose() * &lambda;
        }
        d_z.columns_mut(0, b).copy_from(&lambda);

        let (phi_grad, _) = self
            .state_net
            .backward(&phi_cache, &d_z.rows(d, q - d).into_owned())?;

        let mut grad = Vec::with_capacity(self.param_len());
        phi_grad.write_params(&mut grad);
        match path {
            ActionPath::Proposed {
                mu_cache,
                rho_out: _,
                rho_cache,
            } => {
                let r = recon_residual.expect("proposed path has a reconstruction");
                let (rho_grad, rho_in_grad) = self
                    .decoder()?
                    .backward(&rho_cache, &(r * (2.0 * u_scale)))?;
                let mut d_mu = d_w;
                let mut tail = d_mu.columns_mut(b, np * b);
                tail += rho_in_grad;
                let (mu_grad, _) = self.encoder()?.backward(&mu_cache, &d_mu)?;
                mu_grad.write_params(&mut grad);
                rho_grad.write_params(&mut grad);
            }
            ActionPath::Raw => {}
            ActionPath::Affine { aux_cache } => {
                let d_gain = d_w.component_mul(&batch.actions);
                let aux = self.aux_net.as_ref().expect("dkac has an auxiliary net");
                let (aux_grad, _) = aux.backward(&aux_cache, &d_gain)?;
                aux_grad.write_params(&mut grad);
            }
        }
        d_kx.write_params(&mut grad);
        d_ku.write_params(&mut grad);
        Ok((loss, Some(grad)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub horizon: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// L2 penalty folded into the Adam gradient.
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            batch_size: 1000,
            learning_rate: 1e-3,
            epochs: 30,
            weight_decay: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Full-data loss before the first update.
    pub initial_loss: f64,
    /// Mean minibatch loss seen during each epoch.
    pub epoch_losses: Vec<f64>,
    /// Full-data loss after the last update.
    pub final_loss: f64,
}

/// Mean loss over all `windows`, evaluated in chunks.
pub fn dataset_loss(
    model: &KoopmanModel,
    data: &TrajectoryDataset,
    windows: &[Window],
    horizon: usize,
    chunk: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for part in windows.chunks(chunk.max(1)) {
        let batch = data.batch(part, horizon)?;
        total += model.multistep_loss(&batch)? * part.len() as f64;
    }
    Ok(total / windows.len().max(1) as f64)
}

/// Minibatch Adam over every model parameter.
pub fn train_model(
    model: &mut KoopmanModel,
    data: &TrajectoryDataset,
    windows: &[Window],
    cfg: &TrainingConfig,
) -> Result<TrainingReport> {
    if windows.is_empty() {
        return Err(Error::InvalidParameter("no training windows".into()));
    }
    let initial_loss = dataset_loss(model, data, windows, cfg.horizon, cfg.batch_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = model.to_flat();
    let mut adam = Adam::new(params.len(), cfg.learning_rate).with_weight_decay(cfg.weight_decay);
    let mut order: Vec<Window> = windows.to_vec();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for (bi, part) in order.chunks(cfg.batch_size.max(1)).enumerate() {
            let batch = data.batch(part, cfg.horizon)?;
            let (loss, grad) = model.loss_and_grad(&batch)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    lr: cfg.learning_rate,
                    epoch,
                    batch: bi,
                });
            }
            adam.update(&mut params, &grad)?;
            model.read_params(&params);
            sum += loss * part.len() as f64;
        }
        epoch_losses.push(sum / order.len() as f64);
    }
    let final_loss = dataset_loss(model, data, windows, cfg.horizon, cfg.batch_size)?;
    if !final_loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            lr: cfg.learning_rate,
            epoch: cfg.epochs,
            batch: 0,
        });
    }
    Ok(TrainingReport {
        initial_loss,
        epoch_losses,
        final_loss,
    })
}

/// Mean squared error of the `horizon`-step open-loop state prediction, and
/// of the constant-state predictor `x̂_{t+h} = x_t`, over `windows`.
pub fn prediction_mse(
    model: &KoopmanModel,
    data: &TrajectoryDataset,
    windows: &[Window],
    horizon: usize,
) -> Result<(f64, f64)> {
    let d = data.state_dim;
    let m = data.action_dim;
    let mut model_err = 0.0;
    let mut const_err = 0.0;
    for w in windows {
        let traj = &data.trajectories[w.traj];
        let x0 = &traj.states[w.start * d..(w.start + 1) * d];
        let actions: Vec<Vec<f64>> = (0..horizon)
            .map(|k| traj.actions[(w.start + k) * m..(w.start + k + 1) * m].to_vec())
            .collect();
        let pred = model.predict_missing_state(x0, &actions, horizon)?;
        let target = &traj.states[(w.start + horizon) * d..(w.start + horizon + 1) * d];
        for i in 0..d {
            model_err += (pred[i] - target[i]).powi(2);
            const_err += (x0[i] - target[i]).powi(2);
        }
    }
    let n = (windows.len() * d).max(1) as f64;
    Ok((model_err / n, const_err / n))
}
