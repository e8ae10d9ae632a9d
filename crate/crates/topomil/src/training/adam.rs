//! Bias-corrected Adam.

use crate::milcore::ParamSet;
use crate::tensor::Tensor;

/// First/second moment estimates, index-aligned with the parameter set.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let m = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        let v = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        AdamState { m, v, t: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update from the gradients accumulated in `params`.
pub fn adam_step(
    params: &mut ParamSet,
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
) {
    state.t += 1;
    let t = state.t as i32;
    let bias1 = 1.0 - beta1.powi(t);
    let bias2 = 1.0 - beta2.powi(t);
    params.for_each_value_mut(|i, value, grad| {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for ((x, &g), (m, v)) in value
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.iter_mut().zip(v.iter_mut()))
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *x -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_param(x: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.register("x", Tensor::scalar(x)).unwrap();
        p
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut params = single_param(1.5);
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &mut state, 0.1, 0.9, 0.999, 1e-8);
        assert_eq!(params.get("x").unwrap().value.item(), 1.5);
    }

    #[test]
    fn first_step_magnitude_is_learning_rate() {
        // With constant gradient g, bias correction makes m_hat/sqrt(v_hat)
        // equal sign(g) at t = 1, so the first update is lr * sign(g) up to
        // the epsilon in the denominator.
        let mut params = single_param(0.0);
        params.set_grad_for_test("x", 3.0);
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &mut state, 0.1, 0.9, 0.999, 1e-8);
        let moved = params.get("x").unwrap().value.item();
        assert!((moved + 0.1).abs() < 1e-6, "moved {moved}");
    }

    #[test]
    fn converges_on_square_from_one() {
        // f(x) = x^2, gradient 2x, lr 0.1: |x| < 0.05 within 200 steps.
        let mut params = single_param(1.0);
        let mut state = AdamState::new(&params);
        for _ in 0..200 {
            let x = params.get("x").unwrap().value.item();
            params.zero_grads();
            params.set_grad_for_test("x", 2.0 * x);
            adam_step(&mut params, &mut state, 0.1, 0.9, 0.999, 1e-8);
        }
        let x = params.get("x").unwrap().value.item();
        assert!(x.abs() < 0.05, "x = {x}");
    }

    #[test]
    fn reaches_small_gradient_on_convex_quadratic() {
        // f(x) = sum 0.5 * c_i * x_i^2 with assorted curvatures.
        let curvatures = [0.5, 1.0, 4.0];
        let mut params = ParamSet::new();
        params
            .register("x", Tensor::vector(vec![3.0, -2.0, 1.0]))
            .unwrap();
        let mut state = AdamState::new(&params);
        let mut grad_norm = f64::INFINITY;
        for _ in 0..1000 {
            let x = params.get("x").unwrap().value.clone();
            let grad: Vec<f64> = x
                .data()
                .iter()
                .zip(curvatures.iter())
                .map(|(xi, ci)| ci * xi)
                .collect();
            grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if grad_norm < 1e-3 {
                break;
            }
            params.zero_grads();
            params.set_grad_vec_for_test("x", &grad);
            adam_step(&mut params, &mut state, 0.05, 0.9, 0.999, 1e-8);
        }
        assert!(grad_norm < 1e-3, "gradient norm {grad_norm}");
    }
}
