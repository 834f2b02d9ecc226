use ndarray::{ArrayView1, ArrayViewMut1, NdFloat};
use serde::{Deserialize, Serialize};

/// Step-size schedule: `lr0` halved after every `halve_every` optimizer steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub lr0: f64,
    pub halve_every: usize,
}

impl StepSchedule {
    /// Rate used by the step with zero-based index `step`.
    pub fn rate(&self, step: usize) -> f64 {
        if self.halve_every == 0 {
            return self.lr0;
        }
        self.lr0 * 0.5f64.powi((step / self.halve_every) as i32)
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub schedule: StepSchedule,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<F>,
    v: Vec<F>,
    steps: usize,
}

impl<F: NdFloat> Adam<F> {
    pub fn new(n: usize, schedule: StepSchedule) -> Self {
        Self {
            schedule,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![F::zero(); n],
            v: vec![F::zero(); n],
            steps: 0,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn current_rate(&self) -> f64 {
        self.schedule.rate(self.steps)
    }

    pub fn step(&mut self, mut params: ArrayViewMut1<F>, grad: ArrayView1<F>) {
        assert_eq!(params.len(), self.m.len(), "optimizer sized for a different parameter count");
        let lr = self.schedule.rate(self.steps);
        self.steps += 1;
        let t = self.steps as i32;
        let f = |x: f64| F::from(x).unwrap();
        let (b1, b2) = (f(self.beta1), f(self.beta2));
        let c1 = f(1.0 - self.beta1.powi(t));
        let c2 = f(1.0 - self.beta2.powi(t));
        let (lr, eps) = (f(lr), f(self.eps));
        for (((p, &g), m), v) in params.iter_mut().zip(grad.iter()).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (F::one() - b1) * g;
            *v = b2 * *v + (F::one() - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
}
