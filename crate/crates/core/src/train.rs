//! Stochastic gradient descent on the triplet objective.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{triplet_cost_grad, triplet_terms, TripletCostConfig};
use crate::network::{Gradients, Network, NetworkSpec, ParameterSet};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// Triplets per iteration.
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
    /// Heavy-ball momentum; 0 gives plain SGD.
    #[serde(default)]
    pub momentum: f64,
    /// Iterations per log record (a record is always written for the first
    /// and the last iteration).
    #[serde(default = "default_log_interval")]
    pub log_interval: usize,
}

fn default_lr() -> f64 {
    0.001
}

fn default_batch() -> usize {
    30
}

fn default_iterations() -> usize {
    40_000
}

fn default_log_interval() -> usize {
    100
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: default_lr(),
            batch_size: default_batch(),
            iterations: default_iterations(),
            seed: 0,
            momentum: 0.0,
            log_interval: default_log_interval(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.log_interval == 0 {
            return Err(Error::config("log interval must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLogRecord {
    pub iteration: usize,
    /// Mean per-triplet cost over the iterations since the previous record.
    pub mean_cost: f64,
    pub zero_cost_fraction: f64,
    /// Euclidean norm of the regularised parameters after this iteration's step.
    pub param_norm: f64,
}

pub const LOG_CSV_HEADER: &str = "iteration,mean_cost,zero_cost_fraction,param_norm";

pub fn write_log_csv<W: Write>(records: &[TrainLogRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{LOG_CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{:.9},{:.6},{:.9}",
            r.iteration, r.mean_cost, r.zero_cost_fraction, r.param_norm
        )?;
    }
    Ok(())
}

/// Applies `w <- w - lr * multiplier * (g + 2 lambda w)` to weights and
/// `b <- b - lr * multiplier * g` to biases (plus decay when `decay_biases`).
pub fn apply_sgd(
    params: &mut ParameterSet<f32>,
    grads: &Gradients<f32>,
    learning_rate: f64,
    cost: &TripletCostConfig,
) -> Result<()> {
    check_structure(params, grads)?;
    for (layer, g) in params.layers_mut().iter_mut().zip(&grads.layers) {
        let rate = learning_rate * layer.lr_multiplier;
        if let (Some(w), Some(gw)) = (layer.weights.as_mut(), g.weights.as_ref()) {
            update(w, gw, rate, cost.lambda);
        }
        if let (Some(b), Some(gb)) = (layer.bias.as_mut(), g.bias.as_ref()) {
            update(b, gb, rate, if cost.decay_biases { cost.lambda } else { 0.0 });
        }
    }
    Ok(())
}

fn update(w: &mut Tensor<f32>, g: &Tensor<f32>, rate: f64, lambda: f64) {
    for (w, &g) in w.data_mut().iter_mut().zip(g.data()) {
        let wv = *w as f64;
        *w = (wv - rate * (g as f64 + 2.0 * lambda * wv)) as f32;
    }
}

fn check_structure(params: &ParameterSet<f32>, grads: &Gradients<f32>) -> Result<()> {
    let same = params.layers().len() == grads.layers.len()
        && params.layers().iter().zip(&grads.layers).all(|(p, g)| {
            p.weights.as_ref().map(|t| t.shape()) == g.weights.as_ref().map(|t| t.shape())
                && p.bias.as_ref().map(|t| t.shape()) == g.bias.as_ref().map(|t| t.shape())
        });
    if same {
        Ok(())
    } else {
        Err(Error::shape("gradient shapes do not match parameters"))
    }
}

/// Pure form of [`apply_sgd`].
pub fn sgd_step(
    params: &ParameterSet<f32>,
    grads: &Gradients<f32>,
    learning_rate: f64,
    cost: &TripletCostConfig,
) -> Result<ParameterSet<f32>> {
    let mut next = params.clone();
    apply_sgd(&mut next, grads, learning_rate, cost)?;
    Ok(next)
}

/// Images of one training triplet.
#[derive(Debug, Clone)]
pub struct ImageTriplet {
    pub query: Arc<Tensor<f32>>,
    pub similar: Arc<Tensor<f32>>,
    pub dissimilar: Arc<Tensor<f32>>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParameterSet<f32>,
    pub log: Vec<TrainLogRecord>,
    pub iterations_completed: usize,
    /// Why training stopped before the iteration budget, if it did.
    pub truncated: Option<String>,
}

struct TripletResult {
    cost: f64,
    grads: Gradients<f32>,
}

fn triplet_gradient(net: &Network<'_, f32>, t: &ImageTriplet, margin: f64) -> Result<TripletResult> {
    let q = net.forward_traced(&t.query)?;
    let s = net.forward_traced(&t.similar)?;
    let d = net.forward_traced(&t.dissimilar)?;
    let cost = triplet_terms(&q.descriptor, &s.descriptor, &d.descriptor, margin)?.cost;
    let mut grads = Gradients::zeros_like(net.params());
    if cost > 0.0 {
        let g = triplet_cost_grad(&q.descriptor, &s.descriptor, &d.descriptor, margin)?;
        // weights are shared: the three per-image contributions add up
        grads.accumulate(&net.backward(&q, &g.query)?)?;
        grads.accumulate(&net.backward(&s, &g.similar)?)?;
        grads.accumulate(&net.backward(&d, &g.dissimilar)?)?;
    }
    Ok(TripletResult { cost, grads })
}

/// Batch cost and summed gradient. Per-triplet gradients are reduced in batch
/// order so the result does not depend on the thread count.
pub fn batch_gradient(
    net: &Network<'_, f32>,
    batch: &[ImageTriplet],
    margin: f64,
) -> Result<(Vec<f64>, Gradients<f32>)> {
    let mut total = Gradients::zeros_like(net.params());
    let mut costs = Vec::with_capacity(batch.len());
    if rayon::current_num_threads() <= 1 {
        for t in batch {
            let r = triplet_gradient(net, t, margin)?;
            costs.push(r.cost);
            total.accumulate(&r.grads)?;
        }
    } else {
        let results: Vec<TripletResult> = batch
            .par_iter()
            .map(|t| triplet_gradient(net, t, margin))
            .collect::<Result<_>>()?;
        for r in &results {
            costs.push(r.cost);
            total.accumulate(&r.grads)?;
        }
    }
    Ok((costs, total))
}

struct Momentum {
    coefficient: f64,
    velocity: Option<Gradients<f32>>,
}

impl Momentum {
    /// Folds the new gradient into the velocity and returns the step direction.
    fn direction(&mut self, grads: Gradients<f32>) -> Gradients<f32> {
        if self.coefficient == 0.0 {
            return grads;
        }
        let v = match self.velocity.take() {
            None => grads,
            Some(mut v) => {
                for (vl, gl) in v.layers.iter_mut().zip(&grads.layers) {
                    for (vt, gt) in [(&mut vl.weights, &gl.weights), (&mut vl.bias, &gl.bias)] {
                        if let (Some(vt), Some(gt)) = (vt.as_mut(), gt.as_ref()) {
                            for (a, &b) in vt.data_mut().iter_mut().zip(gt.data()) {
                                *a = (self.coefficient * *a as f64 + b as f64) as f32;
                            }
                        }
                    }
                }
                v
            }
        };
        self.velocity = Some(v.clone());
        v
    }
}

/// Runs up to `config.iterations` SGD iterations over batches drawn from `stream`.
///
/// Weight decay is folded into each step, so gradients here cover only the
/// triplet costs. When the stream runs dry or fails, training stops and the
/// parameters reached so far are returned with `truncated` set.
pub fn train<I>(
    spec: &NetworkSpec,
    initial: ParameterSet<f32>,
    stream: I,
    config: &TrainConfig,
    cost: &TripletCostConfig,
) -> Result<TrainOutcome>
where
    I: IntoIterator<Item = Result<ImageTriplet>>,
{
    config.validate()?;
    cost.validate()?;
    initial.validate_against(spec)?;
    let mut params = initial;
    let mut stream = stream.into_iter();
    let mut log = Vec::new();
    let mut momentum = Momentum {
        coefficient: config.momentum,
        velocity: None,
    };
    let (mut window_cost, mut window_zero, mut window_count) = (0.0, 0usize, 0usize);
    let mut truncated = None;
    let mut completed = 0;

    for iteration in 1..=config.iterations {
        let mut batch = Vec::with_capacity(config.batch_size);
        while batch.len() < config.batch_size {
            match stream.next() {
                Some(Ok(t)) => batch.push(t),
                Some(Err(e)) => {
                    truncated = Some(format!("triplet stream failed at iteration {iteration}: {e}"));
                    break;
                }
                None => {
                    truncated = Some(format!(
                        "triplet stream exhausted at iteration {iteration} ({} of {} triplets in batch)",
                        batch.len(),
                        config.batch_size
                    ));
                    break;
                }
            }
        }
        if truncated.is_some() {
            break;
        }

        let (costs, grads) = {
            let net = Network::new(spec, &params)?;
            batch_gradient(&net, &batch, cost.margin)?
        };
        let step = momentum.direction(grads);
        apply_sgd(&mut params, &step, config.learning_rate, cost)?;
        completed = iteration;

        window_cost += costs.iter().sum::<f64>();
        window_zero += costs.iter().filter(|&&c| c == 0.0).count();
        window_count += costs.len();
        if iteration == 1 || iteration % config.log_interval == 0 || iteration == config.iterations {
            log.push(TrainLogRecord {
                iteration,
                mean_cost: window_cost / window_count as f64,
                zero_cost_fraction: window_zero as f64 / window_count as f64,
                param_norm: params.squared_norm(cost.decay_biases).sqrt(),
            });
            (window_cost, window_zero, window_count) = (0.0, 0, 0);
        }
    }
    if truncated.is_some() && window_count > 0 {
        log.push(TrainLogRecord {
            iteration: completed,
            mean_cost: window_cost / window_count as f64,
            zero_cost_fraction: window_zero as f64 / window_count as f64,
            param_norm: params.squared_norm(cost.decay_biases).sqrt(),
        });
    }
    Ok(TrainOutcome {
        params,
        log,
        iterations_completed: completed,
        truncated,
    })
}

/// Mean per-triplet cost of a batch under fixed parameters.
pub fn mean_batch_cost<T: Real>(net: &Network<'_, T>, batch: &[[&Tensor<T>; 3]], margin: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::usage("empty batch"));
    }
    let mut total = 0.0;
    for [q, s, d] in batch {
        let (q, s, d) = (net.forward(q)?, net.forward(s)?, net.forward(d)?);
        total += triplet_terms(&q, &s, &d, margin)?.cost;
    }
    Ok(total / batch.len() as f64)
}
