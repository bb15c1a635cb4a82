//! Explicit leapfrog finite differences for
//! `y_tt - y_xx + f(y) = 0`, `y(0,t) = 0`, `y_x(1,t) = v(t)`.
//!
//! This solver is deliberately unrelated to the finite element code and is
//! used to check that computed controls actually steer the state to rest.

use crate::error::{Error, Result};
use crate::geometry::BoundaryTrace;
use crate::nonlinear::Nonlinearity;

pub const DEFAULT_NODES: usize = 400;
pub const DEFAULT_CFL: f64 = 0.9;
pub const MIN_NODES: usize = 16;

/// A boundary control sampled at increasing times, linearly interpolated
/// in between and held constant outside the sampled range.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl ControlSignal {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::invalid("control samples must be non-empty and paired"));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("control sample times must increase"));
        }
        if values.iter().chain(&times).any(|v| !v.is_finite()) {
            return Err(Error::invalid("control samples must be finite"));
        }
        Ok(Self { times, values })
    }

    pub fn from_trace(trace: &BoundaryTrace) -> Self {
        Self {
            times: trace.times(),
            values: trace.values().to_vec(),
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let k = self.times.partition_point(|&s| s <= t);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        (1.0 - w) * self.values[k - 1] + w * self.values[k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplaySettings {
    /// Number of space intervals.
    pub nodes: usize,
    pub cfl: f64,
    pub t_final: f64,
}

impl ReplaySettings {
    pub fn new(nodes: usize, cfl: f64, t_final: f64) -> Self {
        Self {
            nodes,
            cfl,
            t_final,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.nodes < MIN_NODES {
            return Err(Error::invalid(format!("need at least {MIN_NODES} space intervals")));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::invalid(format!(
                "CFL number {} outside (0, 1]: the scheme would be unstable",
                self.cfl
            )));
        }
        if !(self.t_final > 0.0) {
            return Err(Error::invalid("final time must be positive"));
        }
        Ok(())
    }
}

/// Final relative energy, or the absolute one when the data vanish.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinalEnergy {
    pub value: f64,
    pub relative: bool,
}

#[derive(Debug, Clone)]
pub struct ReplayResult {
    pub dx: f64,
    pub dt: f64,
    pub steps: usize,
    /// `y(x_i, T)` for `i = 0..=M`.
    pub position: Vec<f64>,
    /// Central difference approximation of `y_t(x_i, T)`.
    pub velocity: Vec<f64>,
    /// `(t_n, ||y(., t_n)||)` for every step, including `t = 0`.
    pub history: Vec<(f64, f64)>,
    /// `(||u0'||² + ||u1||²)^(1/2)` on the same grid.
    pub initial_energy: f64,
}

impl ReplayResult {
    /// `(||y_x(T)||² + ||y_t(T)||²)^(1/2)`.
    pub fn final_energy_abs(&self) -> f64 {
        energy(&self.position, &self.velocity, self.dx)
    }

    pub fn final_energy(&self) -> FinalEnergy {
        let e = self.final_energy_abs();
        if self.initial_energy > 0.0 {
            FinalEnergy {
                value: e / self.initial_energy,
                relative: true,
            }
        } else {
            FinalEnergy {
                value: e,
                relative: false,
            }
        }
    }
}

fn energy(y: &[f64], yt: &[f64], dx: f64) -> f64 {
    let grad: f64 = y.windows(2).map(|w| ((w[1] - w[0]) / dx).powi(2)).sum::<f64>() * dx;
    (grad + l2_squared(yt, dx)).sqrt()
}

/// Trapezoidal `||u||²` of node values.
fn l2_squared(u: &[f64], dx: f64) -> f64 {
    let n = u.len() - 1;
    let inner: f64 = u[1..n].iter().map(|v| v * v).sum();
    (inner + 0.5 * (u[0] * u[0] + u[n] * u[n])) * dx
}

/// Advance from `prev`, `cur` to `next`; `v` is the Neumann datum at the
/// current time.
fn step(prev: &[f64], cur: &[f64], next: &mut [f64], r2: f64, dt2: f64, dx: f64, v: f64, nl: &Nonlinearity) {
    let m = cur.len() - 1;
    next[0] = 0.0;
    for i in 1..m {
        let lap = cur[i + 1] - 2.0 * cur[i] + cur[i - 1];
        next[i] = 2.0 * cur[i] - prev[i] + r2 * lap - dt2 * nl.f(cur[i]);
    }
    let ghost = cur[m - 1] + 2.0 * dx * v;
    let lap = ghost - 2.0 * cur[m] + cur[m - 1];
    next[m] = 2.0 * cur[m] - prev[m] + r2 * lap - dt2 * nl.f(cur[m]);
}

/// Simulate the controlled (or free, `control = None`) equation.
pub fn fd_forward(
    u0: &dyn Fn(f64) -> f64,
    u1: &dyn Fn(f64) -> f64,
    control: Option<&ControlSignal>,
    nl: &Nonlinearity,
    settings: ReplaySettings,
) -> Result<ReplayResult> {
    settings.validate()?;
    let m = settings.nodes;
    let dx = 1.0 / m as f64;
    let steps = (settings.t_final / (settings.cfl * dx)).ceil() as usize;
    let dt = settings.t_final / steps as f64;
    let r2 = (dt / dx).powi(2);
    let dt2 = dt * dt;
    let v_at = |n: usize| control.map_or(0.0, |c| c.at(n as f64 * dt));

    let xs: Vec<f64> = (0..=m).map(|i| i as f64 * dx).collect();
    let mut prev: Vec<f64> = xs.iter().map(|&x| u0(x)).collect();
    prev[0] = 0.0;
    let vel: Vec<f64> = xs.iter().map(|&x| u1(x)).collect();
    let initial_energy = {
        let mut v0 = vel.clone();
        v0[0] = 0.0;
        energy(&prev, &v0, dx)
    };

    let mut history = Vec::with_capacity(steps + 1);
    history.push((0.0, l2_squared(&prev, dx).sqrt()));

    let mut cur = vec![0.0; m + 1];
    let v0 = v_at(0);
    for i in 1..=m {
        let right = if i < m { prev[i + 1] } else { prev[m - 1] + 2.0 * dx * v0 };
        let lap = (right - 2.0 * prev[i] + prev[i - 1]) / (dx * dx);
        cur[i] = prev[i] + dt * vel[i] + 0.5 * dt2 * (lap - nl.f(prev[i]));
    }
    history.push((dt, l2_squared(&cur, dx).sqrt()));

    let mut next = vec![0.0; m + 1];
    for n in 1..steps {
        step(&prev, &cur, &mut next, r2, dt2, dx, v_at(n), nl);
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
        history.push(((n + 1) as f64 * dt, l2_squared(&cur, dx).sqrt()));
    }
    // one step past T for the central difference of y_t
    step(&prev, &cur, &mut next, r2, dt2, dx, v_at(steps), nl);
    let velocity: Vec<f64> = next.iter().zip(&prev).map(|(a, b)| (a - b) / (2.0 * dt)).collect();

    Ok(ReplayResult {
        dx,
        dt,
        steps,
        position: cur,
        velocity,
        history,
        initial_energy,
    })
}
