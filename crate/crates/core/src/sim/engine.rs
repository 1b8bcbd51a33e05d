use nalgebra::DVector;

use super::integrator::Stepper;
use super::record::{lyapunov_terms, RunStatus, Sample, SimRecord};
use super::{ch_monitor, MonitorConfig, MonitorVariant, SimConfig};
use crate::error::{Error, Result};
use crate::formation::{local_errors, ErrorModel, GainSet};
use crate::instance::FormationInstance;
use crate::nn::{FoldedMlp, InputLayout};
use crate::policy::{local_control, oracle_control, LocalFeedback, PolicyKind, DEFAULT_D_HAT0};

/// A policy together with everything it needs at run time.
#[derive(Debug, Clone)]
pub struct Controller {
    pub kind: PolicyKind,
    pub gains: GainSet,
    pub d_hat0: f64,
    nets: Vec<FoldedMlp>,
}

impl Controller {
    /// `nets` holds one network per agent and may be empty for policies without one.
    pub fn new(kind: PolicyKind, gains: GainSet, nets: Vec<FoldedMlp>) -> Result<Self> {
        if kind.uses_nn() && nets.is_empty() {
            return Err(Error::Config(format!("policy {kind} needs trained networks")));
        }
        Ok(Self {
            kind,
            gains,
            d_hat0: DEFAULT_D_HAT0,
            nets: if kind.uses_nn() { nets } else { Vec::new() },
        })
    }

    pub fn oracle(gains: GainSet) -> Self {
        Self::new(PolicyKind::Oracle, gains, Vec::new()).expect("oracle needs no networks")
    }

    pub fn with_d_hat0(mut self, d_hat0: f64) -> Self {
        self.d_hat0 = d_hat0;
        self
    }

    pub fn nets(&self) -> &[FoldedMlp] {
        &self.nets
    }

    fn check(&self, inst: &FormationInstance) -> Result<()> {
        let big_n = inst.n_agents();
        self.gains.validate(big_n)?;
        if !(self.d_hat0 > 0.0) {
            return Err(Error::Config(format!("initial adaptation variable must be positive, got {}", self.d_hat0)));
        }
        if self.kind.uses_nn() {
            let layout = InputLayout::of(inst.topology());
            if self.nets.len() != big_n {
                return Err(Error::Config(format!("{} networks for {big_n} agents", self.nets.len())));
            }
            for (i, net) in self.nets.iter().enumerate() {
                if net.input_dim() != layout.input_dim() || net.output_dim() != layout.state_dim {
                    return Err(Error::Config(format!(
                        "network of agent {} maps {}→{}, instance needs {}→{}",
                        i + 1,
                        net.input_dim(),
                        net.output_dim(),
                        layout.input_dim(),
                        layout.state_dim
                    )));
                }
            }
        }
        Ok(())
    }
}

struct ClosedLoop<'a> {
    inst: &'a FormationInstance,
    ctrl: &'a Controller,
    n: usize,
    big_n: usize,
}

impl ClosedLoop<'_> {
    fn xdim(&self) -> usize {
        2 * self.n * self.big_n
    }

    /// Derivative of the augmented state `[x, d̂]`; the applied input goes to `u`.
    fn eval(&self, u_nn: &[f64], t: f64, z: &[f64], dz: &mut [f64], u: &mut [f64]) -> Result<()> {
        let (n, xdim) = (self.n, self.xdim());
        let (x, d_hat) = z.split_at(xdim);
        let leader = self.inst.leader_state(t);
        let offsets = &self.inst.phase_at(t).offsets;
        let topo = self.inst.topology();
        let gains = &self.ctrl.gains;
        let mut f = vec![0.0; n];
        for i in 0..self.big_n {
            let errs = local_errors(topo, offsets, x, &leader, gains.k1[i], i);
            let xi = self.inst.agent_block(x, i);
            let model = &self.inst.dynamics[i];
            let ui = &mut u[i * n..(i + 1) * n];
            dz[xdim + i] = match self.ctrl.kind {
                PolicyKind::Oracle => {
                    oracle_control(model, xi, t, leader.command.as_slice(), &errs.e2, ui)?;
                    0.0
                }
                kind => local_control(
                    kind,
                    LocalFeedback {
                        e2: &errs.e2,
                        u_nn: &u_nn[i * n..(i + 1) * n],
                        k2: gains.k2[i],
                        d_hat: d_hat[i],
                    },
                    gains.mu1[i],
                    ui,
                )?,
            };
            model.drift_into(xi, t, &mut f);
            let g = model.gain(xi, t)?;
            let base = i * 2 * n;
            for d in 0..n {
                dz[base + d] = xi[n + d];
                dz[base + n + d] = f[d] + g * ui[d];
            }
        }
        Ok(())
    }

    fn refresh_nn(&self, x: &[f64], input: &mut [f64], u_nn: &mut [f64]) {
        let layout = InputLayout::of(self.inst.topology());
        for (i, net) in self.ctrl.nets.iter().enumerate() {
            layout.assemble(self.inst.topology(), i, x, input);
            u_nn[i * self.n..(i + 1) * self.n].copy_from_slice(&net.eval(input));
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn sample(&self, models: &[ErrorModel], mon: &MonitorConfig, u_nn: &[f64], t: f64, z: &[f64], dz: &mut [f64], u: &mut [f64]) -> Result<Sample> {
        self.eval(u_nn, t, z, dz, u)?;
        let (n, xdim) = (self.n, self.xdim());
        let x = &z[..xdim];
        let leader = self.inst.leader_state(t);
        let errs = models[self.inst.phase_index_at(t)].error_state(x, &leader);
        // The oracle's own input plays the role of the network output in the monitor.
        let u_nn_rec: Vec<f64> = if self.ctrl.kind == PolicyKind::Oracle { u.to_vec() } else { u_nn.to_vec() };
        let mut residual = DVector::zeros(n * self.big_n);
        let mut g_min = f64::INFINITY;
        let mut f = vec![0.0; n];
        for i in 0..self.big_n {
            let xi = self.inst.agent_block(x, i);
            let model = &self.inst.dynamics[i];
            model.drift_into(xi, t, &mut f);
            let g = model.gain(xi, t)?;
            g_min = g_min.min(g);
            for d in 0..n {
                residual[i * n + d] = f[d] + g * u_nn_rec[i * n + d] - leader.command[d];
            }
        }
        let e2 = errs.e2.as_slice();
        Ok(Sample {
            t,
            x: x.to_vec(),
            leader_position: leader.position.as_slice().to_vec(),
            leader_velocity: leader.velocity.as_slice().to_vec(),
            leader_command: leader.command.as_slice().to_vec(),
            u: u.to_vec(),
            u_nn: u_nn_rec,
            e1: errs.e1.as_slice().to_vec(),
            e1_dot: errs.e1_dot.as_slice().to_vec(),
            e2: e2.to_vec(),
            delta1: errs.delta1.as_slice().to_vec(),
            d_hat: z[xdim..].to_vec(),
            ch_quadratic: ch_monitor(e2, residual.as_slice(), mon.kappa, MonitorVariant::Quadratic),
            ch_linear: ch_monitor(e2, residual.as_slice(), mon.kappa, MonitorVariant::Linear),
            g_min,
            v1: 0.0,
            v2: 0.0,
            v2_dot: 0.0,
        })
    }
}

/// Integrates the closed loop of `inst` under `ctrl` and records it.
///
/// Divergence (non-finite derivatives or a state norm above the blow-up
/// threshold) ends the run early with a `Diverged` status rather than an error.
pub fn run(inst: &FormationInstance, ctrl: &Controller, sim: &SimConfig, mon: &MonitorConfig) -> Result<SimRecord> {
    sim.validate()?;
    mon.validate()?;
    ctrl.check(inst)?;
    let big_n = inst.n_agents();
    let n = inst.state_dim();
    let plant = ClosedLoop { inst, ctrl, n, big_n };
    let xdim = plant.xdim();
    let models = inst
        .phases()
        .iter()
        .map(|p| ErrorModel::new(inst.topology(), inst.derived(), &p.c, &ctrl.gains))
        .collect::<Result<Vec<_>>>()?;

    let mut z = vec![0.0; xdim + big_n];
    z[..xdim].copy_from_slice(inst.x_init.as_slice());
    z[xdim..].fill(ctrl.d_hat0);
    let mut u_nn = vec![0.0; n * big_n];
    let mut input = vec![0.0; InputLayout::of(inst.topology()).input_dim()];
    let mut u = vec![0.0; n * big_n];
    let mut dz = vec![0.0; z.len()];
    let mut stepper = Stepper::new(sim.integrator, z.len());

    let uses_nn = ctrl.kind.uses_nn();
    let mut refreshed_at = 0;
    if uses_nn {
        plant.refresh_nn(&z[..xdim], &mut input, &mut u_nn);
    }
    let mut samples = vec![plant.sample(&models, mon, &u_nn, 0.0, &z, &mut dz, &mut u)?];
    let mut status = RunStatus::Completed;
    let steps = sim.steps();
    for k in 0..steps {
        let t = k as f64 * sim.dt;
        if uses_nn && k % sim.nn_stride == 0 && refreshed_at != k {
            plant.refresh_nn(&z[..xdim], &mut input, &mut u_nn);
            refreshed_at = k;
        }
        let mut scratch = vec![0.0; n * big_n];
        let mut rhs = |t: f64, z: &[f64], dz: &mut [f64]| plant.eval(&u_nn, t, z, dz, &mut scratch);
        match stepper.step(&mut rhs, t, &mut z, sim.dt) {
            Ok(()) => {}
            Err(Error::Divergence { time, reason }) => {
                status = RunStatus::Diverged { time, reason };
                break;
            }
            Err(e) => return Err(e),
        }
        let t_next = (k + 1) as f64 * sim.dt;
        let size = z[..xdim].iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(size <= sim.blow_up) {
            status = RunStatus::Diverged {
                time: t_next,
                reason: format!("state norm {size:e} exceeds {:e}", sim.blow_up),
            };
            break;
        }
        if (k + 1) % sim.record_stride == 0 {
            if uses_nn && (k + 1) % sim.nn_stride == 0 {
                plant.refresh_nn(&z[..xdim], &mut input, &mut u_nn);
                refreshed_at = k + 1;
            }
            samples.push(plant.sample(&models, mon, &u_nn, t_next, &z, &mut dz, &mut u)?);
        }
    }

    let g_lower = samples.iter().map(|s| s.g_min).fold(f64::INFINITY, f64::min);
    let h_inv = &models[0].h_inv;
    let k1 = &models[0].k1;
    let h_inv_k1 = h_inv * nalgebra::DMatrix::from_diagonal(k1);
    let spectral = h_inv_k1.singular_values().max();
    let d1 = (spectral + mon.kappa) / g_lower;
    for s in &mut samples {
        let (v1, v2) = lyapunov_terms(h_inv, k1, &ctrl.gains.mu1, g_lower, d1, &s.e1, &s.e2, &s.d_hat)?;
        s.v1 = v1;
        s.v2 = v2;
    }
    let m = samples.len();
    for j in 0..m {
        let (a, b) = (j.saturating_sub(1), (j + 1).min(m - 1));
        if a != b {
            samples[j].v2_dot = (samples[b].v2 - samples[a].v2) / (samples[b].t - samples[a].t);
        }
    }
    Ok(SimRecord {
        n_agents: big_n,
        state_dim: n,
        policy: ctrl.kind,
        kappa: mon.kappa,
        variant: mon.variant,
        sigma_min_h: inst.derived().sigma_min_h,
        g_lower,
        d1,
        samples,
        status,
    })
}
