//! Triplet ratio cost `C = max(0, 1 - |hi - hk| / (margin + |hi - hj|))` and
//! the regularised batch objective built from it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::ParameterSet;
use crate::tensor::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripletCostConfig {
    /// Required separation between the dissimilar and similar distances.
    #[serde(default = "default_margin")]
    pub margin: f64,
    /// Weight-decay coefficient.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Whether biases count towards the decay term.
    #[serde(default)]
    pub decay_biases: bool,
}

fn default_margin() -> f64 {
    1.0
}

fn default_lambda() -> f64 {
    0.0005
}

impl Default for TripletCostConfig {
    fn default() -> Self {
        TripletCostConfig {
            margin: default_margin(),
            lambda: default_lambda(),
            decay_biases: false,
        }
    }
}

impl TripletCostConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::config(format!("margin must be positive, got {}", self.margin)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(format!(
                "regularization must be non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

fn check_lengths<T>(hi: &[T], hj: &[T], hk: &[T]) -> Result<()> {
    if hi.len() != hj.len() || hi.len() != hk.len() {
        return Err(Error::shape(format!(
            "triplet descriptors have lengths {}, {}, {}",
            hi.len(),
            hj.len(),
            hk.len()
        )));
    }
    Ok(())
}

fn distance<T: Real>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Distances and cost of one triplet, evaluated in double precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletTerms {
    /// Query to similar.
    pub positive: f64,
    /// Query to dissimilar.
    pub negative: f64,
    pub cost: f64,
}

pub fn triplet_terms<T: Real>(hi: &[T], hj: &[T], hk: &[T], margin: f64) -> Result<TripletTerms> {
    check_lengths(hi, hj, hk)?;
    if !(margin > 0.0) {
        return Err(Error::config(format!("margin must be positive, got {margin}")));
    }
    let positive = distance(hi, hj);
    let negative = distance(hi, hk);
    let denom = margin + positive;
    let cost = if negative >= denom {
        0.0
    } else {
        1.0 - negative / denom
    };
    Ok(TripletTerms {
        positive,
        negative,
        cost,
    })
}

/// Cost in `[0, 1]`; exactly zero iff `|hi - hk| >= margin + |hi - hj|`.
pub fn triplet_cost<T: Real>(hi: &[T], hj: &[T], hk: &[T], margin: f64) -> Result<T> {
    Ok(T::from_f64(triplet_terms(hi, hj, hk, margin)?.cost))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletGrad<T> {
    pub query: Vec<T>,
    pub similar: Vec<T>,
    pub dissimilar: Vec<T>,
}

/// Gradient of [`triplet_cost`] with respect to each descriptor.
///
/// Zero wherever the cost is clamped. When a pair distance is zero its unit
/// direction is taken as the zero vector.
pub fn triplet_cost_grad<T: Real>(hi: &[T], hj: &[T], hk: &[T], margin: f64) -> Result<TripletGrad<T>> {
    let terms = triplet_terms(hi, hj, hk, margin)?;
    let d = hi.len();
    let mut g = TripletGrad {
        query: vec![T::zero(); d],
        similar: vec![T::zero(); d],
        dissimilar: vec![T::zero(); d],
    };
    if terms.cost == 0.0 {
        return Ok(g);
    }
    let denom = margin + terms.positive;
    // dC/d(dn) = -1/denom, dC/d(dp) = dn/denom^2
    let coef_n = if terms.negative > 0.0 {
        -1.0 / (denom * terms.negative)
    } else {
        0.0
    };
    let coef_p = if terms.positive > 0.0 {
        terms.negative / (denom * denom * terms.positive)
    } else {
        0.0
    };
    for t in 0..d {
        let (q, s, n) = (hi[t].as_f64(), hj[t].as_f64(), hk[t].as_f64());
        let dn = coef_n * (q - n);
        let dp = coef_p * (q - s);
        g.query[t] = T::from_f64(dn + dp);
        g.similar[t] = T::from_f64(-dp);
        g.dissimilar[t] = T::from_f64(-dn);
    }
    Ok(g)
}

/// Descriptors of one triplet: query, similar, dissimilar.
pub type DescriptorTriple<'a, T> = (&'a [T], &'a [T], &'a [T]);

/// Sum of triplet costs over the batch plus `lambda * |w|^2`.
pub fn batch_objective<T: Real>(
    triplets: &[DescriptorTriple<'_, T>],
    params: &ParameterSet<T>,
    config: &TripletCostConfig,
) -> Result<f64> {
    config.validate()?;
    if triplets.is_empty() {
        return Err(Error::usage("batch objective needs at least one triplet"));
    }
    let mut total = 0.0;
    for &(hi, hj, hk) in triplets {
        total += triplet_terms(hi, hj, hk, config.margin)?.cost;
    }
    Ok(total + config.lambda * params.squared_norm(config.decay_biases))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coincident_descriptors_cost_one() {
        let h = [0.3f64, -1.0, 2.0];
        assert_eq!(triplet_cost(&h, &h, &h, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn satisfied_margin_clamps_to_zero() {
        assert_eq!(triplet_cost(&[0.0f64, 0.0], &[0.0, 0.0], &[3.0, 0.0], 1.0).unwrap(), 0.0);
    }

    #[test]
    fn hand_evaluated_quarter() {
        let c = triplet_cost(&[0.0f64, 0.0], &[1.0, 0.0], &[1.5, 0.0], 1.0).unwrap();
        assert!((c - 0.25).abs() < 1e-12);
    }

    #[test]
    fn boundary_is_exactly_zero() {
        let c = triplet_cost(&[0.0f32, 0.0], &[1.0, 0.0], &[2.0, 0.0], 1.0).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn clamped_triplet_has_zero_gradient() {
        let g = triplet_cost_grad(&[0.0f64, 0.0], &[0.0, 0.0], &[3.0, 0.0], 1.0).unwrap();
        assert!(g.query.iter().chain(&g.similar).chain(&g.dissimilar).all(|&v| v == 0.0));
    }

    #[test]
    fn one_dimensional_partials_match_hand_derivation() {
        // hi = 0, hj = 1, hk = 1.5, margin 1: dp = 1, dn = 1.5, C = 1 - dn/(1+dp)
        // dC/dhk = -1/(1+dp) * d(dn)/dhk = -0.5
        // dC/dhj = dn/(1+dp)^2 * d(dp)/dhj = 0.375
        // dC/dhi = -(dC/dhj + dC/dhk) = 0.125
        let g = triplet_cost_grad(&[0.0f64], &[1.0], &[1.5], 1.0).unwrap();
        assert!((g.dissimilar[0] + 0.5).abs() < 1e-15);
        assert!((g.similar[0] - 0.375).abs() < 1e-15);
        assert!((g.query[0] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn coincident_pairs_use_zero_directions() {
        let h = [1.0f64, 1.0];
        let g = triplet_cost_grad(&h, &h, &h, 1.0).unwrap();
        assert!(g.query.iter().all(|v| v.is_finite()));
        assert_eq!(g.query, vec![0.0, 0.0]);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(matches!(
            triplet_cost(&[0.0f32], &[0.0, 1.0], &[0.0], 1.0),
            Err(Error::Shape(_))
        ));
        assert!(triplet_cost_grad(&[0.0f32], &[0.0], &[0.0, 1.0], 1.0).is_err());
    }
}
