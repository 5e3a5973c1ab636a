use crate::error::{Error, Result};
use crate::models::Param;

/// Bias-corrected Adam. Moments are stored in f32, updates computed in f64.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam { lr, beta1, beta2, eps, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [Param], grads: &[Vec<f32>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::dim("adam", format!("{} params vs {} gradients", params.len(), grads.len())));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.tensor.numel()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::dim("adam", "optimizer state does not match the parameter list".to_string()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            if g.len() != m.len() {
                return Err(Error::dim("adam", format!("gradient for {} has {} values, expected {}", p.name, g.len(), m.len())));
            }
            for (i, w) in p.tensor.data_mut().iter_mut().enumerate() {
                let gi = g[i] as f64;
                let mi = self.beta1 * m[i] as f64 + (1.0 - self.beta1) * gi;
                let vi = self.beta2 * v[i] as f64 + (1.0 - self.beta2) * gi * gi;
                m[i] = mi as f32;
                v[i] = vi as f32;
                let update = self.lr * (mi / c1) / ((vi / c2).sqrt() + self.eps);
                *w = (*w as f64 - update) as f32;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn param(v: f32) -> Vec<Param> {
        vec![Param { name: "p".into(), tensor: Tensor::new(&[1], vec![v]).unwrap() }]
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = param(0.75);
        let mut opt = Adam::new(1e-3, 0.9, 0.999, 1e-8);
        for _ in 0..5 {
            opt.step(&mut p, &[vec![0.0]]).unwrap();
        }
        assert_eq!(p[0].tensor.data(), &[0.75]);
    }

    #[test]
    fn first_step_closed_form() {
        for g in [0.3f32, -2.0, 1e-6] {
            let mut p = param(1.0);
            let mut opt = Adam::new(1e-2, 0.9, 0.999, 1e-8);
            opt.step(&mut p, &[vec![g]]).unwrap();
            // m̂ = g and v̂ = g² after one step
            let want = 1.0 - 1e-2 * g as f64 / ((g as f64).abs() + 1e-8);
            assert!((p[0].tensor.data()[0] as f64 - want).abs() < 1e-7, "g={g}");
        }
    }

    #[test]
    fn replay_is_identical() {
        let stream: Vec<f32> = (0..20).map(|i| ((i * 7) as f32).sin()).collect();
        let run = || {
            let mut p = param(0.1);
            let mut opt = Adam::new(1e-3, 0.9, 0.999, 1e-8);
            for g in &stream {
                opt.step(&mut p, &[vec![*g]]).unwrap();
            }
            p[0].tensor.data()[0].to_bits()
        };
        assert_eq!(run(), run());
    }
}
