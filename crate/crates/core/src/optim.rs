/// Adaptive moment estimation over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    step_size: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(num_params: usize, step_size: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            step_size,
            beta1,
            beta2,
            eps,
            first: vec![0.0; num_params],
            second: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.t
    }

    /// One descent step on `params` given the gradient of the loss.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.first.len());
        assert_eq!(grad.len(), self.first.len());
        self.t += 1;
        let bias1 = 1.0 - self.beta1.powi(self.t);
        let bias2 = 1.0 - self.beta2.powi(self.t);
        for (((x, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *x -= self.step_size * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Fixed-step gradient descent.
#[derive(Clone, Debug)]
pub struct GradientDescent {
    step_size: f64,
}

impl GradientDescent {
    pub fn new(step_size: f64) -> Self {
        Self { step_size }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), grad.len());
        for (x, g) in params.iter_mut().zip(grad) {
            *x -= self.step_size * g;
        }
    }
}
