use serde::{Deserialize, Serialize};

/// AdamW with decoupled weight decay:
/// `θ ← θ − lr·m̂/(√v̂ + ε) − lr·λ·θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamW {
    pub fn new(num_params: usize, learning_rate: f64, weight_decay: f64) -> Self {
        AdamW {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "optimizer state size mismatch");
        assert_eq!(grads.len(), self.m.len(), "gradient size mismatch");
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let lr = self.learning_rate;
        let decay = lr * self.weight_decay;
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon) + decay * params[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_pure_decay() {
        let mut opt = AdamW::new(2, 0.001, 0.001);
        let mut theta = [2.0, -4.0];
        opt.step(&mut theta, &[0.0, 0.0]);
        assert!((theta[0] - (2.0 - 0.001 * 0.001 * 2.0)).abs() < 1e-15);
        assert!((theta[1] - (-4.0 + 0.001 * 0.001 * 4.0)).abs() < 1e-15);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn first_step_by_hand() {
        // Fresh state: m = 0.1 g, v = 0.001 g², so m̂ = g and v̂ = g²; the step is
        // lr * g / (|g| + ε) plus decay.
        let (lr, wd, g, theta0) = (0.001, 0.001, 0.3, 1.5);
        let mut opt = AdamW::new(1, lr, wd);
        let mut theta = [theta0];
        opt.step(&mut theta, &[g]);
        let expect = theta0 - lr * g / (g + 1e-8) - lr * wd * theta0;
        assert!((theta[0] - expect).abs() < 1e-15);
        assert!((theta0 - theta[0] - (lr + lr * wd * theta0)).abs() < 1e-10);
    }

    #[test]
    fn identical_runs_are_identical() {
        let run = || {
            let mut opt = AdamW::new(3, 0.01, 0.01);
            let mut p = [0.5, -0.2, 0.1];
            for i in 0..5 {
                let g = [0.1 * i as f64, -0.3, 0.05];
                opt.step(&mut p, &g);
            }
            p
        };
        assert_eq!(run(), run());
    }
}
