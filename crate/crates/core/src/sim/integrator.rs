use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Rk4,
    Euler,
}

/// Fixed-step explicit integrator with preallocated stage buffers.
#[derive(Debug, Clone)]
pub struct Stepper {
    pub method: Integrator,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

fn check_finite(d: &[f64], t: f64) -> Result<()> {
    if let Some(pos) = d.iter().position(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            time: t,
            reason: format!("non-finite derivative in component {pos}"),
        });
    }
    Ok(())
}

impl Stepper {
    pub fn new(method: Integrator, dim: usize) -> Self {
        Self {
            method,
            k: std::array::from_fn(|_| vec![0.0; dim]),
            tmp: vec![0.0; dim],
        }
    }

    /// Advances `x` from `t` to `t + dt` in place. `rhs(t, x, dx)` writes the derivative.
    pub fn step<F>(&mut self, rhs: &mut F, t: f64, x: &mut [f64], dt: f64) -> Result<()>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        match self.method {
            Integrator::Euler => {
                let k = &mut self.k[0];
                rhs(t, x, k)?;
                check_finite(k, t)?;
                for (xi, ki) in x.iter_mut().zip(k.iter()) {
                    *xi += dt * ki;
                }
            }
            Integrator::Rk4 => {
                let [k1, k2, k3, k4] = &mut self.k;
                let tmp = &mut self.tmp;
                rhs(t, x, k1)?;
                check_finite(k1, t)?;
                for i in 0..x.len() {
                    tmp[i] = x[i] + 0.5 * dt * k1[i];
                }
                rhs(t + 0.5 * dt, tmp, k2)?;
                check_finite(k2, t + 0.5 * dt)?;
                for i in 0..x.len() {
                    tmp[i] = x[i] + 0.5 * dt * k2[i];
                }
                rhs(t + 0.5 * dt, tmp, k3)?;
                check_finite(k3, t + 0.5 * dt)?;
                for i in 0..x.len() {
                    tmp[i] = x[i] + dt * k3[i];
                }
                rhs(t + dt, tmp, k4)?;
                check_finite(k4, t + dt)?;
                for i in 0..x.len() {
                    x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
        Ok(())
    }
}

/// One classical Runge–Kutta step, allocating.
pub fn step_rk4<F>(mut rhs: F, x: &[f64], t: f64, dt: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let mut out = x.to_vec();
    Stepper::new(Integrator::Rk4, x.len()).step(&mut rhs, t, &mut out, dt)?;
    Ok(out)
}
