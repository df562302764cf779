use serde::{Deserialize, Serialize};

/// Dual-averaging step-size adaptation constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualAverageSettings {
    pub gamma: f64,
    pub t0: f64,
    pub kappa: f64,
}

impl Default for DualAverageSettings {
    fn default() -> Self {
        DualAverageSettings {
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DualAverage {
    settings: DualAverageSettings,
    target: f64,
    mu: f64,
    hbar: f64,
    log_step: f64,
    log_step_bar: f64,
    count: u64,
}

impl DualAverage {
    pub fn new(settings: DualAverageSettings, target: f64, initial_step: f64) -> Self {
        DualAverage {
            settings,
            target,
            mu: (10.0 * initial_step).ln(),
            hbar: 0.0,
            log_step: initial_step.ln(),
            log_step_bar: 0.0,
            count: 0,
        }
    }

    pub fn update(&mut self, accept_stat: f64) {
        self.count += 1;
        let t = self.count as f64;
        let w = 1.0 / (t + self.settings.t0);
        self.hbar = (1.0 - w) * self.hbar + w * (self.target - accept_stat);
        self.log_step = self.mu - t.sqrt() / self.settings.gamma * self.hbar;
        let eta = t.powf(-self.settings.kappa);
        self.log_step_bar = eta * self.log_step + (1.0 - eta) * self.log_step_bar;
    }

    /// Step size to use for the next warmup iteration.
    pub fn current(&self) -> f64 {
        self.log_step.exp()
    }

    /// Averaged step size used once adaptation ends.
    pub fn adapted(&self) -> f64 {
        if self.count == 0 {
            self.current()
        } else {
            self.log_step_bar.exp()
        }
    }
}

/// Streaming per-coordinate mean and variance.
#[derive(Debug, Clone)]
pub struct RunningVariance {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningVariance {
    pub fn new(dim: usize) -> Self {
        RunningVariance {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Sample variances shrunk toward 1e-3, as used for a diagonal metric.
    pub fn regularized_variance(&self) -> Vec<f64> {
        let n = self.count as f64;
        self.m2
            .iter()
            .map(|&s| {
                let var = s / (n - 1.0);
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }
}
