//! Fully connected approximator: scalar time in, scalar displacement out.

use std::fmt::Write as _;

use ndarray::{Array1, Array2};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::activations::{ActivationError, ActivationKind};
use crate::jet::Jet2;

/// Widths of the default 1 → 128 → 128 → 128 → 1 architecture.
pub const DEFAULT_WIDTHS: [usize; 5] = [1, 128, 128, 128, 1];

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("invalid widths {0:?}: need at least two entries, first and last equal to 1, all positive")]
    InvalidWidths(Vec<usize>),
    #[error("non-finite value in layer {layer}")]
    NonFinite { layer: usize },
    #[error("checkpoint line {line}: {message}")]
    Checkpoint { line: usize, message: String },
    #[error(transparent)]
    Activation(#[from] ActivationError),
}

/// One affine map `z = W·x + b`; `weights` is `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl LayerParams {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            weights: Array2::zeros((rows, cols)),
            biases: Array1::zeros(rows),
        }
    }

    pub fn in_width(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_width(&self) -> usize {
        self.weights.nrows()
    }

    fn len(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// Network parameters. The activation applies to every hidden layer; the
/// final layer is a linear read-out.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<LayerParams>,
    pub activation: ActivationKind,
}

pub fn validate_widths(widths: &[usize]) -> Result<(), NetworkError> {
    let ok = widths.len() >= 2
        && widths.iter().all(|&w| w > 0)
        && widths[0] == 1
        && widths[widths.len() - 1] == 1;
    if ok {
        Ok(())
    } else {
        Err(NetworkError::InvalidWidths(widths.to_vec()))
    }
}

/// Glorot-uniform weights, zero biases, fully determined by `seed`.
pub fn init_params(
    widths: &[usize],
    activation: ActivationKind,
    seed: u64,
) -> Result<MlpParams, NetworkError> {
    validate_widths(widths)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = widths
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            let weights =
                Array2::from_shape_simple_fn((fan_out, fan_in), || dist.sample(&mut rng));
            LayerParams {
                weights,
                biases: Array1::zeros(fan_out),
            }
        })
        .collect();
    Ok(MlpParams { layers, activation })
}

impl MlpParams {
    /// Zero-filled parameters with the given widths.
    pub fn zeros(widths: &[usize], activation: ActivationKind) -> Result<Self, NetworkError> {
        validate_widths(widths)?;
        let layers = widths
            .windows(2)
            .map(|w| LayerParams::zeros(w[1], w[0]))
            .collect();
        Ok(Self { layers, activation })
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut widths = vec![self.layers[0].in_width()];
        widths.extend(self.layers.iter().map(LayerParams::out_width));
        widths
    }

    /// Total number of scalar parameters.
    pub fn len(&self) -> usize {
        self.layers.iter().map(LayerParams::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat indexing: per layer, row-major weights followed by biases.
    pub fn get(&self, index: usize) -> f64 {
        *self.locate(index)
    }

    pub fn set(&mut self, index: usize, value: f64) {
        *self.locate_mut(index) = value;
    }

    fn locate(&self, mut index: usize) -> &f64 {
        for layer in &self.layers {
            if index < layer.weights.len() {
                let cols = layer.in_width();
                return &layer.weights[[index / cols, index % cols]];
            }
            index -= layer.weights.len();
            if index < layer.biases.len() {
                return &layer.biases[index];
            }
            index -= layer.biases.len();
        }
        panic!("parameter index out of range");
    }

    fn locate_mut(&mut self, mut index: usize) -> &mut f64 {
        for layer in &mut self.layers {
            if index < layer.weights.len() {
                let cols = layer.in_width();
                return &mut layer.weights[[index / cols, index % cols]];
            }
            index -= layer.weights.len();
            if index < layer.biases.len() {
                return &mut layer.biases[index];
            }
            index -= layer.biases.len();
        }
        panic!("parameter index out of range");
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|x| x.is_finite()) && l.biases.iter().all(|x| x.is_finite())
        })
    }
}

/// Network output at `t` with its first and second time derivatives.
pub fn forward_jet(params: &MlpParams, t: f64) -> Result<Jet2, NetworkError> {
    let act = params.activation;
    forward_jet_with(params, t, |a| act.jet(a))
}

/// [`forward_jet`] with a caller-supplied hidden-layer jet map.
pub fn forward_jet_with(
    params: &MlpParams,
    t: f64,
    activation: impl Fn(Jet2) -> Jet2,
) -> Result<Jet2, NetworkError> {
    let mut current = vec![Jet2::variable(t)];
    let last = params.layers.len() - 1;
    for (k, layer) in params.layers.iter().enumerate() {
        let mut next = Vec::with_capacity(layer.out_width());
        for (row, &b) in layer.weights.rows().into_iter().zip(layer.biases.iter()) {
            let mut z = Jet2::constant(b);
            for (&w, x) in row.iter().zip(&current) {
                z = z + x.scale(w);
            }
            let out = if k == last { z } else { activation(z) };
            if !out.is_finite() {
                return Err(NetworkError::NonFinite { layer: k });
            }
            next.push(out);
        }
        current = next;
    }
    Ok(current[0])
}

const CHECKPOINT_MAGIC: &str = "oscnet-checkpoint 1";

/// Serialize to the text checkpoint format.
///
/// ```text
/// oscnet-checkpoint 1
/// activation <name>
/// widths <w0> <w1> ... <wL>
/// layer <k> <rows> <cols>
/// <one line per weight row, entries space separated>
/// <bias entries, space separated>
/// ... repeated per layer
/// ```
///
/// Floats use Rust's shortest round-trip formatting, so parsing restores
/// every bit.
pub fn to_checkpoint(params: &MlpParams) -> String {
    let mut out = String::new();
    let join = |xs: &mut dyn Iterator<Item = &f64>| {
        xs.map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
    };
    writeln!(out, "{CHECKPOINT_MAGIC}").unwrap();
    writeln!(out, "activation {}", params.activation).unwrap();
    let widths: Vec<String> = params.widths().iter().map(|w| w.to_string()).collect();
    writeln!(out, "widths {}", widths.join(" ")).unwrap();
    for (k, layer) in params.layers.iter().enumerate() {
        writeln!(out, "layer {k} {} {}", layer.out_width(), layer.in_width()).unwrap();
        for row in layer.weights.rows() {
            writeln!(out, "{}", join(&mut row.iter())).unwrap();
        }
        writeln!(out, "{}", join(&mut layer.biases.iter())).unwrap();
    }
    out
}

pub fn from_checkpoint(text: &str) -> Result<MlpParams, NetworkError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut next = |what: &str| {
        lines.next().ok_or_else(|| NetworkError::Checkpoint {
            line: 0,
            message: format!("unexpected end of file, expected {what}"),
        })
    };
    let bad = |line: usize, message: String| NetworkError::Checkpoint { line, message };

    let (n, magic) = next("header")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(bad(n, format!("bad header `{magic}`")));
    }
    let (n, act) = next("activation")?;
    let activation: ActivationKind = act
        .strip_prefix("activation ")
        .ok_or_else(|| bad(n, "expected `activation <name>`".into()))?
        .parse()?;
    let (n, w) = next("widths")?;
    let widths = w
        .strip_prefix("widths ")
        .ok_or_else(|| bad(n, "expected `widths ...`".into()))?
        .split_whitespace()
        .map(|s| s.parse::<usize>().map_err(|e| bad(n, e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let mut params = MlpParams::zeros(&widths, activation)?;

    let parse_row = |n: usize, line: &str, len: usize| -> Result<Vec<f64>, NetworkError> {
        let vals = line
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|e| bad(n, e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        if vals.len() != len {
            return Err(bad(n, format!("expected {len} entries, found {}", vals.len())));
        }
        Ok(vals)
    };

    for (k, layer) in params.layers.iter_mut().enumerate() {
        let (rows, cols) = (layer.out_width(), layer.in_width());
        let (n, header) = next("layer header")?;
        if header != format!("layer {k} {rows} {cols}") {
            return Err(bad(n, format!("expected `layer {k} {rows} {cols}`, found `{header}`")));
        }
        for r in 0..rows {
            let (n, line) = next("weight row")?;
            let row = parse_row(n, line, cols)?;
            layer.weights.row_mut(r).assign(&Array1::from(row));
        }
        let (n, line) = next("bias row")?;
        layer.biases = Array1::from(parse_row(n, line, rows)?);
    }
    Ok(params)
}
