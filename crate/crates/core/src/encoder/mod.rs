//! Point-cloud sequence encoder: Fourier lift, edge convolutions over a
//! static kNN graph, channel-max pooling, projection, and self-attention
//! over the observation window. The last attention row is the latent code.

mod attention;
mod edgeconv;
mod fourier;
mod knn;

pub use attention::{attention_weights, self_attention_layer};
pub use edgeconv::edge_conv;
pub use fourier::fourier_lift;
pub use knn::knn_graph;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::error::Error;
use crate::params::{Binding, ParamStore};
use crate::vec3::Point3;

/// Encoder hyperparameters. Defaults are the desk-scale values; the
/// Fourier width m = 32 and the 64/64/128 edge-conv stack follow the
/// architecture reference.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    /// Fourier feature count; the basis is m x 3.
    pub m: usize,
    /// Neighbors per point in the kNN graph.
    pub k: usize,
    /// Latent dimension.
    pub d: usize,
    pub edge_conv_widths: Vec<usize>,
    pub attn_layers: usize,
    /// Sliding-window length T.
    #[serde(rename = "window_T")]
    pub window: usize,
    /// Fixed per-frame cloud size M after resampling.
    pub points_per_cloud: usize,
    /// Ablation switch: false bypasses the attention stack entirely,
    /// reading the last frame code directly.
    pub use_attention: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            m: 32,
            k: 8,
            d: 128,
            edge_conv_widths: vec![64, 64, 128],
            attn_layers: 2,
            window: 4,
            points_per_cloud: 512,
            use_attention: true,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.m == 0 || self.d == 0 || self.window == 0 || self.k == 0 {
            return Err(Error::Invalid(
                "encoder dimensions must be positive".into(),
            ));
        }
        if self.edge_conv_widths.is_empty() {
            return Err(Error::Invalid(
                "encoder needs at least one edge-conv layer".into(),
            ));
        }
        if self.points_per_cloud <= self.k {
            return Err(Error::Invalid(format!(
                "points_per_cloud {} must exceed k {}",
                self.points_per_cloud, self.k
            )));
        }
        Ok(())
    }
}

/// A window of T partial observations, each resampled to the same fixed
/// size, covering contiguous time indices ending at `t()`.
#[derive(Clone, Debug)]
pub struct ObservationWindow {
    clouds: Vec<Vec<Point3>>,
    t0: usize,
}

impl ObservationWindow {
    pub fn new(clouds: Vec<Vec<Point3>>, t0: usize) -> Result<ObservationWindow, Error> {
        if clouds.is_empty() {
            return Err(Error::Invalid("empty observation window".into()));
        }
        let m = clouds[0].len();
        if clouds.iter().any(|c| c.len() != m) {
            return Err(Error::Invalid(
                "window frames must share one cloud size".into(),
            ));
        }
        Ok(ObservationWindow { clouds, t0 })
    }

    pub fn clouds(&self) -> &[Vec<Point3>] {
        &self.clouds
    }

    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }

    /// Time index of the final (current) frame.
    pub fn t(&self) -> usize {
        self.t0 + self.clouds.len() - 1
    }
}

/// Latent code for the final frame of a window.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LatentCode {
    pub z: Vec<f64>,
    pub t: usize,
}

fn uniform_init(rng: &mut impl Rng, n: usize, limit: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-limit..limit)).collect()
}

/// Register all encoder parameters. Linear layers use U(+-sqrt(6/fan_in)),
/// attention projections U(+-sqrt(6/(2d))), and the Fourier basis N(0, 1).
pub fn init_encoder_params(store: &mut ParamStore, cfg: &EncoderConfig, rng: &mut impl Rng) {
    let basis: Vec<f64> = (0..cfg.m * 3)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    store.insert("encoder.fourier.b", basis, vec![cfg.m, 3]);

    let mut in_width = 2 * cfg.m;
    for (i, &out_width) in cfg.edge_conv_widths.iter().enumerate() {
        let fan_in = 2 * in_width;
        let limit = (6.0 / fan_in as f64).sqrt();
        store.insert(
            &format!("encoder.edge{i}.w"),
            uniform_init(rng, fan_in * out_width, limit),
            vec![fan_in, out_width],
        );
        store.insert(&format!("encoder.edge{i}.b"), vec![0.0; out_width], vec![out_width]);
        in_width = out_width;
    }

    let limit = (6.0 / in_width as f64).sqrt();
    store.insert(
        "encoder.proj.w",
        uniform_init(rng, in_width * cfg.d, limit),
        vec![in_width, cfg.d],
    );
    store.insert("encoder.proj.b", vec![0.0; cfg.d], vec![cfg.d]);

    let attn_limit = (6.0 / (2 * cfg.d) as f64).sqrt();
    for layer in 0..cfg.attn_layers {
        for proj in ["wq", "wk", "wv"] {
            store.insert(
                &format!("encoder.attn{layer}.{proj}"),
                uniform_init(rng, cfg.d * cfg.d, attn_limit),
                vec![cfg.d, cfg.d],
            );
        }
    }
}

/// Encode one fixed-size cloud to a [1, d] frame code: Fourier lift,
/// edge-conv stack over a kNN graph built once on raw coordinates,
/// channel-max pool over points, affine projection.
pub fn encode_frame(
    tape: &mut Tape,
    points: &[Point3],
    binding: &Binding,
    cfg: &EncoderConfig,
) -> Result<Tensor, Error> {
    let m_points = points.len();
    let flat: Vec<f64> = points.iter().flatten().copied().collect();
    let x = tape.leaf(flat, &[m_points, 3])?;
    let edges = knn_graph(points, cfg.k)?;

    let basis = binding.tensor("encoder.fourier.b");
    let mut features = fourier_lift(tape, x, basis)?;
    for i in 0..cfg.edge_conv_widths.len() {
        let w = binding.tensor(&format!("encoder.edge{i}.w"));
        let b = binding.tensor(&format!("encoder.edge{i}.b"));
        features = edge_conv(tape, features, &edges, cfg.k, w, b)?;
    }
    let pooled = tape.reduce_max_axis(features, 0)?;
    let width = tape.len(pooled);
    let pooled = tape.reshape(pooled, &[1, width])?;
    let w = binding.tensor("encoder.proj.w");
    let b = binding.tensor("encoder.proj.b");
    let projected = tape.matmul(pooled, w)?;
    Ok(tape.add(projected, b)?)
}

/// Encode a window: per-frame codes stacked to [T, d], the attention
/// stack, then the final row as the window's latent code ([1, d]).
pub fn aggregate_window(
    tape: &mut Tape,
    window: &ObservationWindow,
    binding: &Binding,
    cfg: &EncoderConfig,
) -> Result<Tensor, Error> {
    let codes: Vec<Tensor> = window
        .clouds()
        .iter()
        .map(|cloud| encode_frame(tape, cloud, binding, cfg))
        .collect::<Result<_, _>>()?;
    let mut z = tape.concat(&codes, 0)?;
    if cfg.use_attention {
        for layer in 0..cfg.attn_layers {
            let wq = binding.tensor(&format!("encoder.attn{layer}.wq"));
            let wk = binding.tensor(&format!("encoder.attn{layer}.wk"));
            let wv = binding.tensor(&format!("encoder.attn{layer}.wv"));
            z = self_attention_layer(tape, z, wq, wk, wv)?;
        }
    }
    let last = window.len() - 1;
    Ok(tape.gather_rows(z, vec![last])?)
}

/// Convenience: run a fresh tape and return the latent values.
pub fn encode_window(
    store: &ParamStore,
    window: &ObservationWindow,
    cfg: &EncoderConfig,
) -> Result<LatentCode, Error> {
    let mut tape = Tape::new();
    let binding = Binding::bind(&mut tape, store)?;
    let z = aggregate_window(&mut tape, window, &binding, cfg)?;
    Ok(LatentCode {
        z: tape.values(z).to_vec(),
        t: window.t(),
    })
}
