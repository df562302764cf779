//! Fixed-length Hamiltonian Monte Carlo with a diagonal metric.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::LogDensity;

/// Energy error beyond which a trajectory counts as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;

/// Position, gradient and log density of the current state.
#[derive(Debug, Clone)]
pub struct State {
    pub position: Vec<f64>,
    pub grad: Vec<f64>,
    pub logp: f64,
}

impl State {
    pub fn new<D: LogDensity + ?Sized>(density: &D, position: Vec<f64>) -> Self {
        let mut grad = vec![0.0; position.len()];
        let logp = density.logp_and_grad(&position, &mut grad);
        State { position, grad, logp }
    }

    pub fn is_finite(&self) -> bool {
        self.logp.is_finite() && self.grad.iter().all(|g| g.is_finite())
    }
}

/// Outcome of one transition.
#[derive(Debug, Clone, Copy)]
pub struct Transition {
    pub accept_stat: f64,
    pub accepted: bool,
    pub divergent: bool,
    pub energy_error: f64,
}

/// Runs `n_steps` leapfrog steps in place. Returns `false` as soon as the log
/// density or its gradient stops being finite.
pub fn leapfrog<D: LogDensity + ?Sized>(
    density: &D,
    state: &mut State,
    momentum: &mut [f64],
    step: f64,
    inv_metric: &[f64],
    n_steps: usize,
) -> bool {
    for _ in 0..n_steps {
        for (p, g) in momentum.iter_mut().zip(&state.grad) {
            *p += 0.5 * step * g;
        }
        for ((x, p), m) in state.position.iter_mut().zip(momentum.iter()).zip(inv_metric) {
            *x += step * m * p;
        }
        state.logp = density.logp_and_grad(&state.position, &mut state.grad);
        if !state.is_finite() {
            return false;
        }
        for (p, g) in momentum.iter_mut().zip(&state.grad) {
            *p += 0.5 * step * g;
        }
    }
    true
}

pub fn kinetic_energy(momentum: &[f64], inv_metric: &[f64]) -> f64 {
    0.5 * momentum.iter().zip(inv_metric).map(|(p, m)| p * p * m).sum::<f64>()
}

pub(crate) fn sample_momentum(rng: &mut ChaCha8Rng, inv_metric: &[f64], out: &mut [f64]) {
    for (p, m) in out.iter_mut().zip(inv_metric) {
        let z: f64 = rng.sample(StandardNormal);
        *p = z / m.sqrt();
    }
}

/// Uniform jitter of ±50% around the nominal path length.
pub(crate) fn jittered_steps(rng: &mut ChaCha8Rng, nominal: usize) -> usize {
    let lo = (nominal / 2).max(1);
    let hi = (nominal + nominal / 2).max(lo);
    rng.random_range(lo..=hi)
}

/// One Metropolis-corrected HMC transition. `scratch` holds the proposal.
pub(crate) fn transition<D: LogDensity + ?Sized>(
    density: &D,
    rng: &mut ChaCha8Rng,
    current: &mut State,
    scratch: &mut State,
    momentum: &mut [f64],
    step: f64,
    inv_metric: &[f64],
    n_steps: usize,
) -> Transition {
    sample_momentum(rng, inv_metric, momentum);
    let h0 = -current.logp + kinetic_energy(momentum, inv_metric);
    scratch.position.copy_from_slice(&current.position);
    scratch.grad.copy_from_slice(&current.grad);
    scratch.logp = current.logp;
    let finite = leapfrog(density, scratch, momentum, step, inv_metric, n_steps);
    let energy_error = if finite {
        -scratch.logp + kinetic_energy(momentum, inv_metric) - h0
    } else {
        f64::INFINITY
    };
    let divergent = !finite || energy_error.is_nan() || energy_error > DIVERGENCE_THRESHOLD;
    let accept_stat = if divergent { 0.0 } else { (-energy_error).exp().min(1.0) };
    let u: f64 = rng.random();
    let accepted = !divergent && u < accept_stat;
    if accepted {
        std::mem::swap(current, scratch);
    }
    Transition {
        accept_stat,
        accepted,
        divergent,
        energy_error,
    }
}

/// Doubles or halves the step until the one-step acceptance crosses 0.5.
pub(crate) fn initial_step_size<D: LogDensity + ?Sized>(
    density: &D,
    rng: &mut ChaCha8Rng,
    state: &State,
    inv_metric: &[f64],
) -> f64 {
    let mut step: f64 = 1.0;
    let mut momentum = vec![0.0; state.position.len()];
    let mut probe = state.clone();
    let mut accept = |step: f64, rng: &mut ChaCha8Rng, probe: &mut State| -> f64 {
        sample_momentum(rng, inv_metric, &mut momentum);
        let h0 = -state.logp + kinetic_energy(&momentum, inv_metric);
        probe.clone_from(state);
        if !leapfrog(density, probe, &mut momentum, step, inv_metric, 1) {
            return 0.0;
        }
        let h1 = -probe.logp + kinetic_energy(&momentum, inv_metric);
        let a = (h0 - h1).exp();
        if a.is_nan() {
            0.0
        } else {
            a
        }
    };
    let a = accept(step, rng, &mut probe);
    let direction = if a > 0.5 { 1.0 } else { -1.0 };
    for _ in 0..100 {
        step *= 2f64.powf(direction);
        let a = accept(step, rng, &mut probe);
        if (direction > 0.0 && a <= 0.5) || (direction < 0.0 && a > 0.5) {
            break;
        }
    }
    step.clamp(1e-8, 1e3)
}
