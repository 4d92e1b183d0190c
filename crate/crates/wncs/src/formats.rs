//! On-disk formats: packed binary and CSV datasets, JSON and binary model
//! checkpoints, and the CSV tables written by the CLI.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wncs_core::control::LqrSolution;
use wncs_core::dynamics::Plant;
use wncs_core::errmodel::{DegreeSelection, ErrorSample};
use wncs_core::harness::{Episode, EpisodeMetrics, Metrics};
use wncs_core::koopman::{
    DatasetConfig, KoopmanDims, KoopmanModel, ModelVariant, Trajectory, TrajectoryDataset,
};
use wncs_core::nn::Parameters;

use crate::CliError;

const DATASET_MAGIC: &[u8; 8] = b"WNCSDAT\0";
const MODEL_MAGIC: &[u8; 8] = b"WNCSMDL\0";
pub const FORMAT_VERSION: u32 = 1;

fn malformed(what: &'static str, detail: impl ToString) -> CliError {
    CliError::Format {
        what,
        detail: detail.to_string(),
    }
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::MissingArtifact(path.to_path_buf()),
        _ => CliError::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    std::fs::write(path, bytes).map_err(io)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Header, length-prefixed JSON, then little-endian `f64` payload.
fn pack(magic: &[u8; 8], header: &impl Serialize, payload: impl Iterator<Item = f64>) -> Vec<u8> {
    let header = serde_json::to_vec(header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + header.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn unpack<'a, H: Deserialize<'a>>(
    magic: &[u8; 8],
    what: &'static str,
    bytes: &'a [u8],
) -> Result<(H, Vec<f64>), CliError> {
    let mut cur = bytes;
    let mut tag = [0u8; 8];
    let mut word = [0u8; 4];
    cur.read_exact(&mut tag).map_err(|e| malformed(what, e))?;
    if &tag != magic {
        return Err(malformed(what, "bad magic header"));
    }
    cur.read_exact(&mut word).map_err(|e| malformed(what, e))?;
    let version = u32::from_le_bytes(word);
    if version != FORMAT_VERSION {
        return Err(malformed(what, format!("unsupported version {version}")));
    }
    cur.read_exact(&mut word).map_err(|e| malformed(what, e))?;
    let len = u32::from_le_bytes(word) as usize;
    if cur.len() < len {
        return Err(malformed(what, "truncated header"));
    }
    let (head, body) = cur.split_at(len);
    let header = serde_json::from_slice(head).map_err(|e| malformed(what, e))?;
    if body.len() % 8 != 0 {
        return Err(malformed(
            what,
            "payload is not a whole number of f64 values",
        ));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((header, values))
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    state_dim: usize,
    action_dim: usize,
    plant: Plant,
    config: DatasetConfig,
    lengths: Vec<usize>,
    truncated: Vec<bool>,
}

pub fn encode_dataset(data: &TrajectoryDataset) -> Vec<u8> {
    let header = DatasetHeader {
        state_dim: data.state_dim,
        action_dim: data.action_dim,
        plant: data.plant.clone(),
        config: data.config.clone(),
        lengths: data
            .trajectories
            .iter()
            .map(|t| t.len(data.state_dim))
            .collect(),
        truncated: data.trajectories.iter().map(|t| t.truncated).collect(),
    };
    let payload = data
        .trajectories
        .iter()
        .flat_map(|t| t.states.iter().chain(&t.actions).copied());
    pack(DATASET_MAGIC, &header, payload)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<TrajectoryDataset, CliError> {
    let (h, values): (DatasetHeader, _) = unpack(DATASET_MAGIC, "dataset", bytes)?;
    if h.lengths.len() != h.truncated.len() {
        return Err(malformed("dataset", "length and truncation tables differ"));
    }
    let expected: usize = h
        .lengths
        .iter()
        .map(|n| n * (h.state_dim + h.action_dim))
        .sum();
    if values.len() != expected {
        return Err(malformed(
            "dataset",
            format!("expected {expected} values, found {}", values.len()),
        ));
    }
    let mut rest = values.as_slice();
    let mut trajectories = Vec::with_capacity(h.lengths.len());
    for (&n, &truncated) in h.lengths.iter().zip(&h.truncated) {
        let (states, r) = rest.split_at(n * h.state_dim);
        let (actions, r) = r.split_at(n * h.action_dim);
        rest = r;
        trajectories.push(Trajectory {
            states: states.to_vec(),
            actions: actions.to_vec(),
            truncated,
        });
    }
    Ok(TrajectoryDataset {
        state_dim: h.state_dim,
        action_dim: h.action_dim,
        plant: h.plant,
        config: h.config,
        trajectories,
    })
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}_{i}"))
}

fn csv_bytes(header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// One row per sample: `traj, t, truncated, x_0.., u_0..`.
pub fn dataset_csv(data: &TrajectoryDataset) -> Vec<u8> {
    let (d, m) = (data.state_dim, data.action_dim);
    let header = ["traj", "t", "truncated"]
        .into_iter()
        .map(String::from)
        .chain(indexed("x", d))
        .chain(indexed("u", m))
        .collect();
    let rows = data
        .trajectories
        .iter()
        .enumerate()
        .flat_map(move |(i, tr)| {
            (0..tr.len(d)).map(move |t| {
                let mut row = vec![
                    i.to_string(),
                    t.to_string(),
                    (tr.truncated as u8).to_string(),
                ];
                row.extend(tr.states[t * d..(t + 1) * d].iter().map(|v| fmt(*v)));
                row.extend(tr.actions[t * m..(t + 1) * m].iter().map(|v| fmt(*v)));
                row
            })
        });
    csv_bytes(header, rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelHeader {
    variant: ModelVariant,
    dims: KoopmanDims,
    hidden: Vec<usize>,
    param_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelJson {
    format: String,
    version: u32,
    #[serde(flatten)]
    header: ModelHeader,
    params: Vec<f64>,
}

fn model_header(model: &KoopmanModel) -> ModelHeader {
    let sizes = model.state_net.sizes();
    ModelHeader {
        variant: model.variant,
        dims: model.dims,
        hidden: sizes[1..sizes.len() - 1].to_vec(),
        param_len: model.param_len(),
    }
}

fn rebuild(header: &ModelHeader, params: &[f64]) -> Result<KoopmanModel, CliError> {
    let mut model = KoopmanModel::new(header.variant, header.dims, &header.hidden, 0)?;
    if model.param_len() != header.param_len || params.len() != header.param_len {
        return Err(malformed(
            "model",
            format!(
                "parameter count {} does not match the layer shapes ({})",
                params.len(),
                model.param_len()
            ),
        ));
    }
    model.read_params(params);
    Ok(model)
}

pub fn encode_model(model: &KoopmanModel) -> Vec<u8> {
    pack(
        MODEL_MAGIC,
        &model_header(model),
        model.to_flat().into_iter(),
    )
}

pub fn decode_model(bytes: &[u8]) -> Result<KoopmanModel, CliError> {
    let (header, params): (ModelHeader, _) = unpack(MODEL_MAGIC, "model", bytes)?;
    rebuild(&header, &params)
}

pub fn model_json(model: &KoopmanModel) -> Vec<u8> {
    let doc = ModelJson {
        format: "wncs-model".into(),
        version: FORMAT_VERSION,
        header: model_header(model),
        params: model.to_flat(),
    };
    serde_json::to_vec_pretty(&doc).expect("model serializes")
}

pub fn model_from_json(bytes: &[u8]) -> Result<KoopmanModel, CliError> {
    let doc: ModelJson = serde_json::from_slice(bytes).map_err(|e| malformed("model", e))?;
    if doc.format != "wncs-model" || doc.version != FORMAT_VERSION {
        return Err(malformed(
            "model",
            format!("unsupported format {} v{}", doc.format, doc.version),
        ));
    }
    rebuild(&doc.header, &doc.params)
}

/// Loads a checkpoint, choosing the format by magic header.
pub fn load_model(path: &Path) -> Result<KoopmanModel, CliError> {
    let bytes = read_file(path)?;
    if bytes.starts_with(MODEL_MAGIC) {
        decode_model(&bytes)
    } else {
        model_from_json(&bytes)
    }
}

pub fn load_dataset(path: &Path) -> Result<TrajectoryDataset, CliError> {
    decode_dataset(&read_file(path)?)
}

pub fn training_csv(initial: f64, epoch_losses: &[f64], final_loss: f64) -> Vec<u8> {
    let rows = std::iter::once(vec!["init".into(), fmt(initial)])
        .chain(
            epoch_losses
                .iter()
                .enumerate()
                .map(|(i, l)| vec![i.to_string(), fmt(*l)]),
        )
        .chain(std::iter::once(vec!["final".into(), fmt(final_loss)]));
    csv_bytes(vec!["epoch".into(), "loss".into()], rows)
}

pub fn episode_csv(ep: &Episode) -> Vec<u8> {
    let first = ep.records.first();
    let d = first.map_or(0, |r| r.x.len());
    let m = first.map_or(0, |r| r.u.len());
    let header = ["t", "a", "gamma", "sc_success", "ca_success"]
        .into_iter()
        .map(String::from)
        .chain(indexed("x", d))
        .chain(indexed("x_tilde", d))
        .chain(indexed("u", m))
        .chain(indexed("u_applied", m))
        .chain(
            [
                "beta",
                "q_a",
                "p_b",
                "epsilon",
                "a0_feasible",
                "battery_ok",
                "starved",
                "overflow",
                "action_flag",
                "cost",
                "true_cost",
            ]
            .into_iter()
            .map(String::from),
        )
        .collect();
    let b = |v: bool| (v as u8).to_string();
    let rows = ep.records.iter().map(|r| {
        let mut row = vec![
            r.t.to_string(),
            b(r.a),
            fmt(r.gamma),
            b(r.sc_success),
            b(r.ca_success),
        ];
        for v in r.x.iter().chain(&r.x_tilde).chain(&r.u).chain(&r.u_applied) {
            row.push(fmt(*v));
        }
        row.extend([
            r.beta.to_string(),
            fmt(r.q_a),
            fmt(r.p_b),
            fmt(r.epsilon),
            b(r.a0_feasible),
            b(r.battery_ok),
            b(r.starved),
            b(r.overflow),
            b(r.action_flag),
            fmt(r.cost),
            fmt(r.true_cost),
        ]);
        row
    });
    csv_bytes(header, rows)
}

pub const EPISODE_SUMMARY_COLUMNS: [&str; 16] = [
    "episode",
    "seed",
    "slots",
    "control_cost",
    "true_control_cost",
    "transmissions",
    "transmission_rate",
    "deliveries",
    "total_cost",
    "aoi_mean",
    "aoi_variance",
    "final_battery",
    "min_battery",
    "starved_slots",
    "overflow_slots",
    "truncated",
];

pub fn summary_csv(metrics: &[EpisodeMetrics]) -> Vec<u8> {
    let rows = metrics.iter().enumerate().map(|(i, e)| {
        vec![
            i.to_string(),
            e.seed.to_string(),
            e.slots.to_string(),
            fmt(e.control_cost),
            fmt(e.true_control_cost),
            e.transmissions.to_string(),
            fmt(e.transmission_rate),
            e.deliveries.to_string(),
            fmt(e.total_cost),
            fmt(e.aoi_mean),
            fmt(e.aoi_variance),
            fmt(e.final_battery),
            fmt(e.min_battery),
            e.starved_slots.to_string(),
            e.overflow_slots.to_string(),
            (e.truncated as u8).to_string(),
        ]
    });
    csv_bytes(
        EPISODE_SUMMARY_COLUMNS
            .iter()
            .map(|s| s.to_string())
            .collect(),
        rows,
    )
}

pub const AGGREGATE_COLUMNS: [&str; 18] = [
    "episodes",
    "control_cost_mean",
    "control_cost_var",
    "true_control_cost_mean",
    "total_cost_mean",
    "total_cost_var",
    "transmissions_mean",
    "transmissions_var",
    "transmission_rate_mean",
    "aoi_mean",
    "aoi_mean_var",
    "aoi_within_var",
    "final_battery_mean",
    "final_battery_var",
    "starved_slots",
    "overflow_slots",
    "truncated",
    "log10_total_cost",
];

pub fn aggregate_fields(m: &Metrics) -> Vec<String> {
    vec![
        m.episodes.to_string(),
        fmt(m.control_cost.mean),
        fmt(m.control_cost.variance),
        fmt(m.true_control_cost.mean),
        fmt(m.total_cost.mean),
        fmt(m.total_cost.variance),
        fmt(m.transmissions.mean),
        fmt(m.transmissions.variance),
        fmt(m.transmission_rate.mean),
        fmt(m.aoi_mean.mean),
        fmt(m.aoi_mean.variance),
        fmt(m.aoi_variance),
        fmt(m.final_battery.mean),
        fmt(m.final_battery.variance),
        m.starved_slots.to_string(),
        m.overflow_slots.to_string(),
        m.truncated.to_string(),
        fmt(m.total_cost.mean.log10()),
    ]
}

pub fn aggregate_csv(m: &Metrics) -> Vec<u8> {
    csv_bytes(
        AGGREGATE_COLUMNS.iter().map(|s| s.to_string()).collect(),
        std::iter::once(aggregate_fields(m)),
    )
}

/// One row per swept value: `axis, value, p_sc`, then the aggregate columns.
pub fn sweep_csv(axis: &str, rows: &[(f64, f64, Metrics)]) -> Vec<u8> {
    let header = ["axis", "value", "p_sc"]
        .into_iter()
        .map(String::from)
        .chain(AGGREGATE_COLUMNS.iter().map(|s| s.to_string()))
        .collect();
    let body = rows.iter().map(|(v, p, m)| {
        let mut row = vec![axis.to_string(), fmt(*v), fmt(*p)];
        row.extend(aggregate_fields(m));
        row
    });
    csv_bytes(header, body)
}

pub fn error_samples_csv(samples: &[ErrorSample]) -> Vec<u8> {
    let rows = samples
        .iter()
        .map(|s| vec![fmt(s.state_norm), s.beta.to_string(), fmt(s.error)]);
    csv_bytes(
        vec!["state_norm".into(), "beta".into(), "error".into()],
        rows,
    )
}

pub fn degree_table_csv(sel: &DegreeSelection) -> Vec<u8> {
    let rows = sel.scores.iter().map(|s| {
        vec![
            s.degree.to_string(),
            fmt(s.train_residual),
            fmt(s.holdout_residual),
            ((s.degree == sel.best) as u8).to_string(),
        ]
    });
    csv_bytes(
        vec![
            "degree".into(),
            "train_residual".into(),
            "holdout_residual".into(),
            "selected".into(),
        ],
        rows,
    )
}

pub fn matrix_csv(m: &nalgebra::DMatrix<f64>) -> Vec<u8> {
    let header = indexed("c", m.ncols()).collect();
    let rows = m.row_iter().map(|r| r.iter().map(|v| fmt(*v)).collect());
    csv_bytes(header, rows)
}

pub fn lqr_summary_csv(sol: &LqrSolution) -> Vec<u8> {
    csv_bytes(
        vec![
            "residual".into(),
            "iterations".into(),
            "closed_loop_radius".into(),
        ],
        std::iter::once(vec![
            fmt(sol.residual),
            sol.iterations.to_string(),
            fmt(sol.closed_loop_radius),
        ]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use wncs_core::dynamics::InputNonlinearity;
    use wncs_core::koopman::generate_dataset;

    #[test]
    fn dataset_round_trip_is_bit_exact() {
        let plant = Plant::double_pendulum(InputNonlinearity::Tanh);
        let mut cfg = DatasetConfig::for_plant(&plant, 3);
        cfg.n_traj = 3;
        cfg.n_steps = 20;
        let data = generate_dataset(&plant, &cfg).unwrap();
        let back = decode_dataset(&encode_dataset(&data)).unwrap();
        assert_eq!(back, data);
        assert!(decode_dataset(b"nonsense").is_err());
        let csv = String::from_utf8(dataset_csv(&data)).unwrap();
        assert_eq!(csv.lines().count(), 1 + 3 * 20);
    }

    #[test]
    fn model_round_trips_in_both_formats() {
        for variant in [
            ModelVariant::Proposed,
            ModelVariant::Dkuc,
            ModelVariant::Dkac,
        ] {
            let model = KoopmanModel::new(variant, KoopmanDims::new(4, 2, 6), &[8, 5], 11).unwrap();
            let bin = decode_model(&encode_model(&model)).unwrap();
            assert_eq!(bin, model);
            let json = model_from_json(&model_json(&model)).unwrap();
            assert_eq!(
                json.to_flat()
                    .iter()
                    .map(|v| v.to_bits())
                    .collect::<Vec<_>>(),
                model
                    .to_flat()
                    .iter()
                    .map(|v| v.to_bits())
                    .collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn corrupted_model_is_rejected() {
        let model =
            KoopmanModel::new(ModelVariant::Dkuc, KoopmanDims::new(4, 2, 6), &[8], 1).unwrap();
        let mut bytes = encode_model(&model);
        bytes.truncate(bytes.len() - 8);
        assert!(decode_model(&bytes).is_err());
        bytes[0] = b'X';
        assert!(decode_model(&bytes).is_err());
    }
}
