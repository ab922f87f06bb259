use crate::error::{Error, Result};
use crate::tensor::{Real, Shape4, Tensor};

#[derive(Debug, Clone)]
pub struct FcGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
}

fn check(input: Shape4, weights: Shape4, bias_len: usize) -> Result<()> {
    if weights.h != 1 || weights.w != 1 {
        return Err(Error::shape(format!(
            "fully-connected weights must be (out, in, 1, 1), got {weights}"
        )));
    }
    if input.item_len() != weights.c {
        return Err(Error::shape(format!(
            "fully-connected input flattens to {} values but weights expect {}",
            input.item_len(),
            weights.c
        )));
    }
    if bias_len != weights.n {
        return Err(Error::shape(format!(
            "fully-connected bias has length {bias_len}, expected {}",
            weights.n
        )));
    }
    Ok(())
}

/// `weights * flatten(input) + bias` per batch item; output is (N, out, 1, 1).
pub fn fc_forward<T: Real>(input: &Tensor<T>, weights: &Tensor<T>, bias: &[T]) -> Result<Tensor<T>> {
    let (is, ws) = (input.shape(), weights.shape());
    check(is, ws, bias.len())?;
    let (n, k, o) = (is.n, ws.c, ws.n);
    let mut out = Tensor::zeros(Shape4::new(n, o, 1, 1));
    for row in out.data_mut().chunks_mut(o.max(1)) {
        row.copy_from_slice(bias);
    }
    // Y (N x O) = X (N x K) * W^T (K x O) + Y
    T::gemm(
        n,
        k,
        o,
        T::one(),
        input.data(),
        (k as isize, 1),
        weights.data(),
        (1, k as isize),
        T::one(),
        out.data_mut(),
        (o as isize, 1),
    );
    Ok(out)
}

pub fn fc_backward<T: Real>(input: &Tensor<T>, weights: &Tensor<T>, grad_out: &Tensor<T>) -> Result<FcGrads<T>> {
    let (is, ws) = (input.shape(), weights.shape());
    check(is, ws, ws.n)?;
    let (n, k, o) = (is.n, ws.c, ws.n);
    if grad_out.shape() != Shape4::new(n, o, 1, 1) {
        return Err(Error::shape(format!(
            "fully-connected grad_out has shape {}, expected {n}x{o}x1x1",
            grad_out.shape()
        )));
    }
    let mut grad_input = Tensor::zeros(is);
    let mut grad_weights = Tensor::zeros(ws);
    // dX (N x K) = dY (N x O) * W (O x K)
    T::gemm(
        n,
        o,
        k,
        T::one(),
        grad_out.data(),
        (o as isize, 1),
        weights.data(),
        (k as isize, 1),
        T::zero(),
        grad_input.data_mut(),
        (k as isize, 1),
    );
    // dW (O x K) = dY^T (O x N) * X (N x K)
    T::gemm(
        o,
        n,
        k,
        T::one(),
        grad_out.data(),
        (1, o as isize),
        input.data(),
        (k as isize, 1),
        T::zero(),
        grad_weights.data_mut(),
        (k as isize, 1),
    );
    let mut grad_bias = vec![T::zero(); o];
    for row in grad_out.data().chunks(o.max(1)) {
        for (b, &g) in grad_bias.iter_mut().zip(row) {
            *b += g;
        }
    }
    Ok(FcGrads {
        input: grad_input,
        weights: grad_weights,
        bias: grad_bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_flatten_input() {
        let input = Tensor::from_fn(Shape4::new(1, 2, 2, 1), |i| i as f32 + 1.0);
        let weights = Tensor::from_fn(Shape4::new(4, 4, 1, 1), |i| if i % 5 == 0 { 1.0 } else { 0.0 });
        let out = fc_forward(&input, &weights, &[0.0; 4]).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn zero_input_yields_bias() {
        let input = Tensor::<f32>::zeros(Shape4::new(2, 3, 1, 1));
        let weights = Tensor::from_fn(Shape4::new(2, 3, 1, 1), |i| i as f32);
        let out = fc_forward(&input, &weights, &[0.5, -2.0]).unwrap();
        assert_eq!(out.data(), &[0.5, -2.0, 0.5, -2.0]);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let input = Tensor::<f32>::zeros(Shape4::new(1, 5, 1, 1));
        let weights = Tensor::zeros(Shape4::new(2, 4, 1, 1));
        assert!(matches!(fc_forward(&input, &weights, &[0.0; 2]), Err(Error::Shape(_))));
    }

    #[test]
    fn backward_is_transpose_and_outer_product() {
        let input = Tensor::from_vec(Shape4::new(1, 2, 1, 1), vec![1.0f64, 2.0]).unwrap();
        let weights = Tensor::from_vec(Shape4::new(2, 2, 1, 1), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let go = Tensor::from_vec(Shape4::new(1, 2, 1, 1), vec![1.0, -1.0]).unwrap();
        let g = fc_backward(&input, &weights, &go).unwrap();
        assert_eq!(g.input.data(), &[-2.0, -2.0]);
        assert_eq!(g.weights.data(), &[1.0, 2.0, -1.0, -2.0]);
        assert_eq!(g.bias, vec![1.0, -1.0]);
    }
}
