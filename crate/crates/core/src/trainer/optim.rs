use serde::{Deserialize, Serialize};

use super::encoder::EncoderModel;
use super::loss::Gradients;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Adam with decoupled weight decay. Decay is applied to the parameter
/// before the moment step: `θ ← θ(1 − lr·λ)`, then `θ ← θ − lr·m̂/(√v̂ + ε)`.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub params: AdamWParams,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamW {
    pub fn new(params: AdamWParams, model: &EncoderModel) -> Self {
        let n = model.parameter_count();
        Self {
            params,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, model: &mut EncoderModel, grads: &Gradients, lr: f64) {
        self.step += 1;
        let AdamWParams {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.params;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let decay = 1.0 - lr * weight_decay;
        let params = model.table.iter_mut().chain(model.projection.iter_mut());
        let gs = grads.table.iter().chain(&grads.projection);
        for (((theta, g), m), v) in params.zip(gs).zip(&mut self.m).zip(&mut self.v) {
            *theta *= decay;
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *theta -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Linear warmup from 0 to `peak_lr`, then half-cosine decay to 0 at
/// `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineSchedule {
    pub peak_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl CosineSchedule {
    pub fn new(peak_lr: f64, warmup_fraction: f64, total_steps: u64) -> Self {
        let warmup_steps = ((total_steps as f64) * warmup_fraction).round() as u64;
        Self {
            peak_lr,
            warmup_steps: warmup_steps.min(total_steps),
            total_steps,
        }
    }

    pub fn lr(&self, step: u64) -> f64 {
        if step < self.warmup_steps {
            return self.peak_lr * step as f64 / self.warmup_steps as f64;
        }
        if step >= self.total_steps {
            return 0.0;
        }
        let span = (self.total_steps - self.warmup_steps) as f64;
        let progress = (step - self.warmup_steps) as f64 / span;
        self.peak_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

#[cfg(test)]
mod tests {
    use super::super::encoder::UNK;
    use super::*;

    #[test]
    fn schedule_endpoints() {
        let s = CosineSchedule::new(0.1, 0.1, 100);
        assert_eq!(s.warmup_steps, 10);
        assert_eq!(s.lr(0), 0.0);
        assert!((s.lr(5) - 0.05).abs() < 1e-15);
        assert_eq!(s.lr(10), 0.1);
        assert!((s.lr(55) - 0.05).abs() < 1e-12);
        assert!(s.lr(100).abs() < 1e-9 * 0.1);
        let mut prev = s.lr(10);
        for t in 11..=100 {
            assert!(s.lr(t) <= prev);
            prev = s.lr(t);
        }
    }

    #[test]
    fn schedule_without_warmup_starts_at_peak() {
        let s = CosineSchedule::new(2.0, 0.0, 4);
        assert_eq!(s.lr(0), 2.0);
        assert!((s.lr(2) - 1.0).abs() < 1e-15);
    }

    fn one_param(theta: f64) -> EncoderModel {
        EncoderModel::from_parts(vec![UNK.into()], 1, 1, false, vec![theta], vec![1.0])
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        // with bias correction the first update is lr·g/(|g| + ε)
        let mut m = one_param(1.0);
        let mut opt = AdamW::new(
            AdamWParams {
                weight_decay: 0.0,
                ..Default::default()
            },
            &m,
        );
        let g = Gradients {
            table: vec![0.5],
            projection: vec![-2.0],
        };
        opt.step(&mut m, &g, 0.01);
        assert!((m.table[0] - (1.0 - 0.01 * 0.5 / (0.5 + 1e-8))).abs() < 1e-15);
        assert!((m.projection[0] - (1.0 + 0.01 * 2.0 / (2.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn decoupled_decay_applies_before_moment_step() {
        let mut m = one_param(2.0);
        let mut opt = AdamW::new(AdamWParams::default(), &m);
        let zero = Gradients {
            table: vec![0.0],
            projection: vec![0.0],
        };
        opt.step(&mut m, &zero, 0.5);
        assert_eq!(m.table[0], 2.0 * (1.0 - 0.5 * 0.01));
    }

    #[test]
    fn zero_learning_rate_is_bit_identical() {
        let mut m = one_param(0.123);
        let before = m.clone();
        let mut opt = AdamW::new(AdamWParams::default(), &m);
        let g = Gradients {
            table: vec![3.0],
            projection: vec![-1.0],
        };
        opt.step(&mut m, &g, 0.0);
        assert_eq!(m, before);
    }

    #[test]
    fn matches_hand_unrolled_two_steps() {
        let (b1, b2, eps, wd, lr) = (0.9, 0.999, 1e-8, 0.01, 0.1);
        let mut m = one_param(1.0);
        let mut opt = AdamW::new(AdamWParams::default(), &m);
        let gs = [0.3, -0.7];
        let (mut theta, mut mm, mut vv) = (1.0f64, 0.0f64, 0.0f64);
        for (t, g) in gs.iter().enumerate() {
            opt.step(
                &mut m,
                &Gradients {
                    table: vec![*g],
                    projection: vec![0.0],
                },
                lr,
            );
            let t = (t + 1) as i32;
            theta *= 1.0 - lr * wd;
            mm = b1 * mm + (1.0 - b1) * g;
            vv = b2 * vv + (1.0 - b2) * g * g;
            theta -= lr * (mm / (1.0 - b1.powi(t))) / ((vv / (1.0 - b2.powi(t))).sqrt() + eps);
        }
        assert!((m.table[0] - theta).abs() < 1e-15);
    }
}
