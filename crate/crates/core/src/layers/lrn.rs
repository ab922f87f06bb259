//! Cross-channel local response normalization:
//! `out_c = in_c / (k + alpha/n * sum_{c' in window(c)} in_c'^2)^beta`,
//! with a window of `n` channels centred on `c`, clipped at the channel bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrnParams {
    pub size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
}

impl Default for LrnParams {
    fn default() -> Self {
        LrnParams {
            size: 5,
            alpha: 1e-4,
            beta: 0.75,
            k: 2.0,
        }
    }
}

impl LrnParams {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || self.size.is_multiple_of(2) {
            return Err(Error::config(format!(
                "lrn neighborhood size must be odd and positive, got {}",
                self.size
            )));
        }
        if !(self.k > 0.0) {
            return Err(Error::config(format!("lrn bias k must be positive, got {}", self.k)));
        }
        if !self.alpha.is_finite() || !self.beta.is_finite() || self.alpha < 0.0 {
            return Err(Error::config("lrn alpha must be finite and non-negative, beta finite"));
        }
        Ok(())
    }

    fn half(&self) -> usize {
        (self.size - 1) / 2
    }
}

/// Per-element denominator base `k + alpha/n * window sum of squares`.
fn scales<T: Real>(input: &Tensor<T>, p: &LrnParams) -> Vec<T> {
    let s = input.shape();
    let plane = s.plane();
    let half = p.half();
    let k = T::from_f64(p.k);
    let coeff = T::from_f64(p.alpha / p.size as f64);
    let src = input.data();
    let mut scale = vec![T::zero(); src.len()];
    for n in 0..s.n {
        let item = n * s.item_len();
        for c in 0..s.c {
            let lo = c.saturating_sub(half);
            let hi = (c + half).min(s.c - 1);
            let dst = &mut scale[item + c * plane..item + (c + 1) * plane];
            for cc in lo..=hi {
                let chan = &src[item + cc * plane..item + (cc + 1) * plane];
                for (d, &v) in dst.iter_mut().zip(chan) {
                    *d += v * v;
                }
            }
            for d in dst.iter_mut() {
                *d = k + coeff * *d;
            }
        }
    }
    scale
}

pub fn lrn_forward<T: Real>(input: &Tensor<T>, p: &LrnParams) -> Result<Tensor<T>> {
    p.validate()?;
    let scale = scales(input, p);
    let neg_beta = T::from_f64(-p.beta);
    let mut out = input.clone();
    for (o, s) in out.data_mut().iter_mut().zip(scale) {
        *o = *o * s.powf(neg_beta);
    }
    Ok(out)
}

/// Exact gradient of [`lrn_forward`]:
/// `dx_d = g_d s_d^-beta - (2 alpha beta / n) x_d sum_{c: d in window(c)} g_c x_c s_c^(-beta-1)`.
pub fn lrn_backward<T: Real>(input: &Tensor<T>, grad_out: &Tensor<T>, p: &LrnParams) -> Result<Tensor<T>> {
    p.validate()?;
    if input.shape() != grad_out.shape() {
        return Err(Error::shape(format!(
            "lrn grad_out shape {} differs from input {}",
            grad_out.shape(),
            input.shape()
        )));
    }
    let s = input.shape();
    let plane = s.plane();
    let half = p.half();
    let scale = scales(input, p);
    let beta = T::from_f64(p.beta);
    let x = input.data();
    let g = grad_out.data();

    // t_c = g_c x_c s_c^(-beta-1)
    let t: Vec<T> = g
        .iter()
        .zip(x)
        .zip(&scale)
        .map(|((&g, &x), &s)| g * x * s.powf(-beta - T::one()))
        .collect();
    let coeff = T::from_f64(2.0 * p.alpha * p.beta / p.size as f64);

    let mut grad = Tensor::zeros(s);
    let dst = grad.data_mut();
    for n in 0..s.n {
        let item = n * s.item_len();
        for d in 0..s.c {
            let lo = d.saturating_sub(half);
            let hi = (d + half).min(s.c - 1);
            let range = item + d * plane..item + (d + 1) * plane;
            let out = &mut dst[range.clone()];
            for cc in lo..=hi {
                let tc = &t[item + cc * plane..item + (cc + 1) * plane];
                for (o, &v) in out.iter_mut().zip(tc) {
                    *o += v;
                }
            }
            for (i, o) in range.zip(out.iter_mut()) {
                *o = g[i] * scale[i].powf(-beta) - coeff * x[i] * *o;
            }
        }
    }
    Ok(grad)
}
