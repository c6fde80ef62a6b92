//! Exact parameter gradients of the collocation loss.
//!
//! The loss depends on the network output and its first two time derivatives,
//! so the forward pass runs in jet arithmetic: every layer carries three
//! column blocks `[value | d/dt | d²/dt²]` for a batch of `P` times, stored
//! side by side in one `width × 3P` matrix. Affine maps act on all three
//! blocks at once (the bias only touches the value block), which makes each
//! layer a single matrix product. Reverse accumulation then walks back
//! through the recorded jets. Differentiating the `f''(z)·z'²` term of an
//! activation jet w.r.t. `z` is what requires `f'''`.
//!
//! Points are processed in fixed chunks of [`CHUNK`]; partial sums are added
//! in chunk order, so results do not depend on the execution backend.

use ndarray::{s, Array2, ArrayView2, Axis};
use thiserror::Error;

use crate::exec::{map_chunks, Execution};
use crate::jet::Jet2;
use crate::network::{LayerParams, MlpParams};
use crate::problem::{residual_with_partials, Objective, TrialMap};

/// Collocation points per work unit.
pub const CHUNK: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum AutodiffError {
    #[error("no collocation points")]
    NoPoints,
    #[error("collocation point t = {t} lies outside [{t0}, {t_end}]")]
    OutsideDomain { t: f64, t0: f64, t_end: f64 },
    #[error("non-finite residual at collocation point t = {t}")]
    NonFiniteLoss { t: f64 },
    #[error("non-finite gradient from collocation chunk starting at t = {t}")]
    NonFiniteGradient { t: f64 },
}

/// Gradients shaped exactly like the [`MlpParams`] they belong to.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerParams>,
}

impl GradientSet {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| LayerParams::zeros(l.out_width(), l.in_width()))
                .collect(),
        }
    }

    /// Flat indexing in the same order as [`MlpParams::get`].
    pub fn get(&self, mut index: usize) -> f64 {
        for layer in &self.layers {
            if index < layer.weights.len() {
                let cols = layer.in_width();
                return layer.weights[[index / cols, index % cols]];
            }
            index -= layer.weights.len();
            if index < layer.biases.len() {
                return layer.biases[index];
            }
            index -= layer.biases.len();
        }
        panic!("gradient index out of range");
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|x| x.is_finite()) && l.biases.iter().all(|x| x.is_finite())
        })
    }

    fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.biases += &b.biases;
        }
    }

    fn scale(&mut self, c: f64) {
        for l in &mut self.layers {
            l.weights *= c;
            l.biases *= c;
        }
    }
}

/// Recorded state of one hidden layer for the backward sweep.
struct HiddenRecord {
    /// Derivative slots of the pre-activation (`width × 2P`: d1 | d2).
    z_slopes: Array2<f64>,
    /// `f'`, `f''`, `f'''` at the pre-activation values, each `width × P`.
    f1: Array2<f64>,
    f2: Array2<f64>,
    f3: Array2<f64>,
}

/// Forward record for a batch: layer inputs and hidden-layer records.
pub(crate) struct Tape {
    inputs: Vec<Array2<f64>>,
    hidden: Vec<HiddenRecord>,
    output: Array2<f64>,
    batch: usize,
}

impl Tape {
    pub(crate) fn output_jet(&self, p: usize) -> Jet2 {
        let n = self.batch;
        Jet2::new(self.output[[0, p]], self.output[[0, n + p]], self.output[[0, 2 * n + p]])
    }
}

/// Jet forward pass over a batch of times.
pub(crate) fn forward_batch(params: &MlpParams, ts: &[f64]) -> Tape {
    let n = ts.len();
    let mut h = Array2::<f64>::zeros((1, 3 * n));
    for (p, &t) in ts.iter().enumerate() {
        h[[0, p]] = t;
        h[[0, n + p]] = 1.0;
    }
    let last = params.layers.len() - 1;
    let act = params.activation;
    let mut inputs = Vec::with_capacity(params.layers.len());
    let mut hidden = Vec::with_capacity(last);

    for (k, layer) in params.layers.iter().enumerate() {
        let mut z = layer.weights.dot(&h);
        for (mut row, &b) in z.rows_mut().into_iter().zip(layer.biases.iter()) {
            row.slice_mut(s![..n]).mapv_inplace(|x| x + b);
        }
        inputs.push(h);
        if k == last {
            return Tape { inputs, hidden, output: z, batch: n };
        }

        let width = z.nrows();
        let mut out = Array2::<f64>::zeros((width, 3 * n));
        let mut f1 = Array2::<f64>::zeros((width, n));
        let mut f2 = Array2::<f64>::zeros((width, n));
        let mut f3 = Array2::<f64>::zeros((width, n));
        for i in 0..width {
            let zr = z.row(i);
            let zr = zr.as_slice().expect("standard layout");
            let (zv, rest) = zr.split_at(n);
            let (zd1, zd2) = rest.split_at(n);
            let mut orow = out.row_mut(i);
            let orow = orow.as_slice_mut().expect("standard layout");
            for p in 0..n {
                let [d0, d1, d2, d3] = act.derivatives(zv[p]);
                orow[p] = d0;
                orow[n + p] = d1 * zd1[p];
                orow[2 * n + p] = d2 * zd1[p] * zd1[p] + d1 * zd2[p];
                f1[[i, p]] = d1;
                f2[[i, p]] = d2;
                f3[[i, p]] = d3;
            }
        }
        hidden.push(HiddenRecord {
            z_slopes: z.slice(s![.., n..]).to_owned(),
            f1,
            f2,
            f3,
        });
        h = out;
    }
    unreachable!("network has at least one layer")
}

/// Reverse sweep given the adjoint of the output jets (`1 × 3P`).
fn backward_batch(params: &MlpParams, tape: &Tape, output_bar: Array2<f64>) -> GradientSet {
    let n = tape.batch;
    let mut grads = GradientSet::zeros_like(params);
    let mut z_bar = output_bar;
    for k in (0..params.layers.len()).rev() {
        let input: ArrayView2<f64> = tape.inputs[k].view();
        grads.layers[k].weights = z_bar.dot(&input.t());
        grads.layers[k].biases = z_bar.slice(s![.., ..n]).sum_axis(Axis(1));
        if k == 0 {
            break;
        }
        let h_bar = params.layers[k].weights.t().dot(&z_bar);
        let rec = &tape.hidden[k - 1];
        let width = h_bar.nrows();
        let mut next = Array2::<f64>::zeros((width, 3 * n));
        for i in 0..width {
            let hb = h_bar.row(i);
            let hb = hb.as_slice().expect("standard layout");
            let zs = rec.z_slopes.row(i);
            let zs = zs.as_slice().expect("standard layout");
            let mut nrow = next.row_mut(i);
            let nrow = nrow.as_slice_mut().expect("standard layout");
            for p in 0..n {
                let (hv, hd1, hd2) = (hb[p], hb[n + p], hb[2 * n + p]);
                let (zd1, zd2) = (zs[p], zs[n + p]);
                let (f1, f2, f3) = (rec.f1[[i, p]], rec.f2[[i, p]], rec.f3[[i, p]]);
                nrow[p] = hv * f1 + hd1 * f2 * zd1 + hd2 * (f3 * zd1 * zd1 + f2 * zd2);
                nrow[n + p] = hd1 * f1 + hd2 * 2.0 * f2 * zd1;
                nrow[2 * n + p] = hd2 * f1;
            }
        }
        z_bar = next;
    }
    grads
}

fn check_points(objective: &Objective, points: &[f64]) -> Result<(), AutodiffError> {
    if points.is_empty() {
        return Err(AutodiffError::NoPoints);
    }
    let (t0, t_end) = (objective.problem.t0(), objective.problem.t_end());
    if let Some(&t) = points.iter().find(|&&t| !(t0..=t_end).contains(&t)) {
        return Err(AutodiffError::OutsideDomain { t, t0, t_end });
    }
    Ok(())
}

struct ChunkLoss {
    squared_sum: f64,
    grads: Option<GradientSet>,
}

fn chunk_eval(
    params: &MlpParams,
    objective: &Objective,
    ts: &[f64],
    with_grad: bool,
) -> Result<ChunkLoss, AutodiffError> {
    let n = ts.len();
    let tape = forward_batch(params, ts);
    let mut squared_sum = 0.0;
    let mut output_bar = Array2::<f64>::zeros((1, 3 * n));
    for (p, &t) in ts.iter().enumerate() {
        let map = TrialMap::new(objective.transform, &objective.problem, t);
        let u = map.apply(tape.output_jet(p));
        let (r, dr_dv, dr_dd2) = residual_with_partials(&objective.problem, u);
        if !(r * r).is_finite() {
            return Err(AutodiffError::NonFiniteLoss { t });
        }
        squared_sum += r * r;
        if with_grad {
            let bar = map.pullback(Jet2::new(2.0 * r * dr_dv, 0.0, 2.0 * r * dr_dd2));
            output_bar[[0, p]] = bar.v;
            output_bar[[0, n + p]] = bar.d1;
            output_bar[[0, 2 * n + p]] = bar.d2;
        }
    }
    let grads = with_grad.then(|| backward_batch(params, &tape, output_bar));
    Ok(ChunkLoss { squared_sum, grads })
}

/// `λ·(ũ'(t0) − du0)²` and, optionally, its gradient.
fn penalty_eval(
    params: &MlpParams,
    objective: &Objective,
    with_grad: bool,
) -> Result<(f64, Option<GradientSet>), AutodiffError> {
    let t0 = objective.problem.t0();
    let lambda = objective.ic_penalty;
    let tape = forward_batch(params, &[t0]);
    let map = TrialMap::new(objective.transform, &objective.problem, t0);
    let gap = map.apply(tape.output_jet(0)).d1 - objective.problem.du0();
    let value = lambda * gap * gap;
    if !value.is_finite() {
        return Err(AutodiffError::NonFiniteLoss { t: t0 });
    }
    let grads = with_grad.then(|| {
        let bar = map.pullback(Jet2::new(0.0, 2.0 * lambda * gap, 0.0));
        let mut output_bar = Array2::<f64>::zeros((1, 3));
        output_bar[[0, 0]] = bar.v;
        output_bar[[0, 1]] = bar.d1;
        output_bar[[0, 2]] = bar.d2;
        backward_batch(params, &tape, output_bar)
    });
    Ok((value, grads))
}

fn evaluate(
    params: &MlpParams,
    objective: &Objective,
    points: &[f64],
    exec: Execution,
    with_grad: bool,
) -> Result<(f64, Option<GradientSet>), AutodiffError> {
    check_points(objective, points)?;
    let chunks = map_chunks(points, CHUNK, exec, |_, ts| {
        chunk_eval(params, objective, ts, with_grad)
    });

    let mut squared_sum = 0.0;
    let mut grads = with_grad.then(|| GradientSet::zeros_like(params));
    for (i, chunk) in chunks.into_iter().enumerate() {
        let chunk = chunk?;
        squared_sum += chunk.squared_sum;
        if let (Some(total), Some(part)) = (grads.as_mut(), chunk.grads.as_ref()) {
            if !part.all_finite() {
                return Err(AutodiffError::NonFiniteGradient { t: points[i * CHUNK] });
            }
            total.add_assign(part);
        }
    }
    let inv_n = 1.0 / points.len() as f64;
    let mut loss = squared_sum * inv_n;
    if let Some(g) = grads.as_mut() {
        g.scale(inv_n);
    }

    if objective.ic_penalty > 0.0 {
        let (value, pen_grads) = penalty_eval(params, objective, with_grad)?;
        loss += value;
        if let (Some(total), Some(part)) = (grads.as_mut(), pen_grads.as_ref()) {
            total.add_assign(part);
        }
    }
    if let Some(g) = &grads {
        if !g.all_finite() {
            return Err(AutodiffError::NonFiniteGradient { t: points[0] });
        }
    }
    Ok((loss, grads))
}

/// Mean squared residual over `points` and its exact gradient.
pub fn loss_and_grad(
    params: &MlpParams,
    objective: &Objective,
    points: &[f64],
) -> Result<(f64, GradientSet), AutodiffError> {
    loss_and_grad_with(params, objective, points, Execution::default())
}

/// [`loss_and_grad`] on an explicit execution backend.
pub fn loss_and_grad_with(
    params: &MlpParams,
    objective: &Objective,
    points: &[f64],
    exec: Execution,
) -> Result<(f64, GradientSet), AutodiffError> {
    let (loss, grads) = evaluate(params, objective, points, exec, true)?;
    Ok((loss, grads.expect("gradient requested")))
}

pub(crate) fn loss_only(
    params: &MlpParams,
    objective: &Objective,
    points: &[f64],
    exec: Execution,
) -> Result<f64, AutodiffError> {
    evaluate(params, objective, points, exec, false).map(|(loss, _)| loss)
}

/// Network jets at many times through the batched engine.
pub fn network_jets(params: &MlpParams, ts: &[f64], exec: Execution) -> Vec<Jet2> {
    map_chunks(ts, CHUNK, exec, |_, chunk| {
        let tape = forward_batch(params, chunk);
        (0..chunk.len()).map(|p| tape.output_jet(p)).collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}
