use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::body::{Body, MarkerSet};
use super::morphology::MorphologyVector;
use super::spec::{EnvSpec, Task};
use super::SimError;

/// Gap left between the lowest body point and the ground at reset.
const RESET_CLEARANCE: f64 = 0.02;
const RESET_NOISE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub joint_angles: Vec<f64>,
    pub joint_velocities: Vec<f64>,
    /// Torso centre (zero for a fixed base).
    pub base_position: [f64; 2],
    pub base_angle: f64,
    pub base_velocity: [f64; 2],
    pub base_angular_velocity: f64,
    pub step: usize,
}

impl SimState {
    pub fn is_finite(&self) -> bool {
        self.joint_angles
            .iter()
            .chain(&self.joint_velocities)
            .chain(&self.base_position)
            .chain(&self.base_velocity)
            .chain([&self.base_angle, &self.base_angular_velocity])
            .all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub state: SimState,
    /// The episode is over, for whatever reason.
    pub terminated: bool,
    /// Ended by the termination rule or a numerical failure rather than by
    /// reaching the episode length.
    pub early_termination: bool,
    /// A non-finite state was produced; the state is the last finite one.
    pub failed: bool,
}

#[derive(Clone, Debug)]
pub struct Environment {
    spec: EnvSpec,
    xi: MorphologyVector,
    body: Body,
    q: Vec<f64>,
    qd: Vec<f64>,
    step: usize,
    finished: bool,
}

impl Environment {
    pub fn new(spec: EnvSpec, xi: MorphologyVector) -> Result<Self, SimError> {
        spec.validate()?;
        if xi.len() != spec.morphology_dim() {
            return Err(SimError::DimensionError {
                expected: spec.morphology_dim(),
                got: xi.len(),
            });
        }
        for (index, (&value, &(lower, upper))) in xi.params().iter().zip(&spec.bounds).enumerate() {
            if !(value >= lower && value <= upper) {
                return Err(SimError::BoundsViolation {
                    index,
                    value,
                    lower,
                    upper,
                });
            }
        }
        let (torso, segments) = spec.geometry(xi.params())?;
        let body = Body::build(&spec, torso, &segments);
        let n = body.dof();
        let mut env = Environment {
            spec,
            xi,
            body,
            q: vec![0.0; n],
            qd: vec![0.0; n],
            step: 0,
            finished: false,
        };
        env.place_on_ground();
        Ok(env)
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn morphology(&self) -> &MorphologyVector {
        &self.xi
    }

    pub fn action_dim(&self) -> usize {
        self.spec.joint_count()
    }

    pub fn observation_dim(&self) -> usize {
        3 * self.spec.joint_count() + if self.spec.is_floating() { 6 } else { 0 }
    }

    pub fn episode_length(&self) -> usize {
        self.spec.episode_length
    }

    fn base_offset(&self) -> usize {
        if self.spec.is_floating() {
            3
        } else {
            0
        }
    }

    fn place_on_ground(&mut self) {
        if self.spec.is_floating() {
            self.q[1] = 0.0;
            let lowest = self.body.lowest_point(&self.q);
            self.q[1] = -lowest + RESET_CLEARANCE;
        }
    }

    /// Rest pose plus a seeded uniform perturbation of every joint angle.
    pub fn reset(&mut self, seed: u64) -> SimState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.q.iter_mut().for_each(|v| *v = 0.0);
        self.qd.iter_mut().for_each(|v| *v = 0.0);
        let off = self.base_offset();
        for j in off..self.q.len() {
            self.q[j] = rng.gen_range(-RESET_NOISE..=RESET_NOISE);
        }
        self.place_on_ground();
        self.step = 0;
        self.finished = false;
        self.state()
    }

    pub fn state(&self) -> SimState {
        let off = self.base_offset();
        let (base_position, base_velocity, base_angle, base_angular_velocity) = if off == 3 {
            ([self.q[0], self.q[1]], [self.qd[0], self.qd[1]], self.q[2], self.qd[2])
        } else {
            ([0.0; 2], [0.0; 2], 0.0, 0.0)
        };
        SimState {
            joint_angles: self.q[off..].to_vec(),
            joint_velocities: self.qd[off..].to_vec(),
            base_position,
            base_angle,
            base_velocity,
            base_angular_velocity,
            step: self.step,
        }
    }

    /// Overwrites the dynamic state. Base fields are ignored for a fixed base.
    pub fn set_state(&mut self, state: &SimState) -> Result<(), SimError> {
        let joints = self.spec.joint_count();
        if state.joint_angles.len() != joints || state.joint_velocities.len() != joints {
            return Err(SimError::DimensionError {
                expected: joints,
                got: state.joint_angles.len(),
            });
        }
        let (q, qd) = self.coords(state);
        self.q = q;
        self.qd = qd;
        self.step = state.step;
        self.finished = state.step >= self.spec.episode_length;
        Ok(())
    }

    fn coords(&self, state: &SimState) -> (Vec<f64>, Vec<f64>) {
        let mut q = Vec::with_capacity(self.q.len());
        let mut qd = Vec::with_capacity(self.q.len());
        if self.spec.is_floating() {
            q.extend([state.base_position[0], state.base_position[1], state.base_angle]);
            qd.extend([
                state.base_velocity[0],
                state.base_velocity[1],
                state.base_angular_velocity,
            ]);
        }
        q.extend_from_slice(&state.joint_angles);
        qd.extend_from_slice(&state.joint_velocities);
        (q, qd)
    }

    pub fn markers(&self, state: &SimState) -> MarkerSet {
        let (q, qd) = self.coords(state);
        self.body.markers(&q, &qd)
    }

    /// Marker set of the current state.
    pub fn current_markers(&self) -> MarkerSet {
        self.body.markers(&self.q, &self.qd)
    }

    pub fn observation(&self) -> Vec<f64> {
        observe(&self.state(), self.spec.is_floating())
    }

    pub fn observation_of(&self, state: &SimState) -> Vec<f64> {
        observe(state, self.spec.is_floating())
    }

    /// Kinetic, gravitational and contact-spring energy of `state`.
    pub fn energy(&self, state: &SimState) -> f64 {
        let (q, qd) = self.coords(state);
        self.energy_at(&q, &qd)
    }

    fn energy_at(&self, q: &[f64], qd: &[f64]) -> f64 {
        let d = self.body.dynamics(q, qd);
        let v = DVector::from_column_slice(qd);
        let kinetic = 0.5 * v.dot(&(&d.mass * &v));
        let contact = self
            .spec
            .contact
            .as_ref()
            .map_or(0.0, |c| self.body.contact_energy(q, c));
        kinetic + d.potential + contact
    }

    /// Task progress between two states: forward base displacement or
    /// first-joint rotation.
    pub fn progress(&self, from: &SimState, to: &SimState) -> f64 {
        match self.spec.task {
            Task::Forward => to.base_position[0] - from.base_position[0],
            Task::Spin => to.joint_angles[0] - from.joint_angles[0],
        }
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepResult, SimError> {
        if action.len() != self.action_dim() {
            return Err(SimError::DimensionError {
                expected: self.action_dim(),
                got: action.len(),
            });
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(SimError::InvalidAction);
        }
        if self.finished {
            return Err(SimError::EpisodeFinished);
        }
        let torque: Vec<f64> = action
            .iter()
            .zip(&self.spec.torque_limits)
            .map(|(&a, &lim)| a.clamp(-lim, lim))
            .collect();
        let h = self.spec.timestep / self.spec.substeps as f64;
        let mut failed = false;
        let mut energy = self.energy_at(&self.q, &self.qd);
        for _ in 0..self.spec.substeps {
            match self.substep(&torque, h, energy) {
                Some(e) => energy = e,
                None => {
                    failed = true;
                    break;
                }
            }
        }
        self.step += 1;
        let state = self.state();
        let below = match self.spec.termination_height {
            Some(min) if self.spec.is_floating() => state.base_position[1] < min,
            _ => false,
        };
        let early = failed || below;
        let terminated = early || self.step >= self.spec.episode_length;
        self.finished = terminated;
        if failed {
            log::warn!(
                "non-finite state in `{}` at step {}, episode aborted",
                self.spec.name,
                self.step
            );
        }
        Ok(StepResult {
            state,
            terminated,
            early_termination: early,
            failed,
        })
    }

    /// One semi-implicit Euler step. Returns the new total energy, or `None`
    /// (leaving the state untouched) if the result is not finite.
    fn substep(&mut self, torque: &[f64], h: f64, energy: f64) -> Option<f64> {
        let n = self.q.len();
        let off = self.base_offset();
        let d = self.body.dynamics(&self.q, &self.qd);
        let mut force = d.passive;
        for (j, &t) in torque.iter().enumerate() {
            force[off + j] += t - self.spec.joint_damping * self.qd[off + j];
        }
        if let Some(c) = &self.spec.contact {
            self.body.contact(&self.q, &self.qd, c, &mut force);
        }
        let accel = d.mass.cholesky()?.solve(&force);
        let mut qd: Vec<f64> = (0..n).map(|i| self.qd[i] + h * accel[i]).collect();
        let mut q: Vec<f64> = (0..n).map(|i| self.q[i] + h * qd[i]).collect();
        if q.iter().chain(&qd).any(|v| !v.is_finite()) {
            return None;
        }

        // Energy guard: the step may not add more energy than the actuators
        // supplied. Excess from discretisation is removed from the velocity.
        let work: f64 = torque
            .iter()
            .enumerate()
            .map(|(j, &t)| h * t * qd[off + j])
            .sum();
        let allowed = energy + work;
        let after = self.body.dynamics(&q, &qd);
        let v = DVector::from_column_slice(&qd);
        let kinetic = 0.5 * v.dot(&(&after.mass * &v));
        let potential = after.potential
            + self
                .spec
                .contact
                .as_ref()
                .map_or(0.0, |c| self.body.contact_energy(&q, c));
        let mut total = kinetic + potential;
        if !total.is_finite() {
            return None;
        }
        if total > allowed {
            let budget = allowed - potential;
            if budget > 0.0 && kinetic > 0.0 {
                let s = (budget / kinetic).sqrt();
                qd.iter_mut().for_each(|x| *x *= s);
                total = budget + potential;
            } else {
                q.copy_from_slice(&self.q);
                qd.iter_mut().for_each(|x| *x = 0.0);
                total = self.energy_at(&q, &qd);
            }
        }
        self.q = q;
        self.qd = qd;
        Some(total)
    }
}

fn observe(state: &SimState, floating: bool) -> Vec<f64> {
    let mut obs = Vec::with_capacity(6 + 3 * state.joint_angles.len());
    if floating {
        obs.extend([
            state.base_position[1],
            state.base_angle.sin(),
            state.base_angle.cos(),
            state.base_velocity[0],
            state.base_velocity[1],
            state.base_angular_velocity,
        ]);
    }
    obs.extend(state.joint_angles.iter().map(|a| a.sin()));
    obs.extend(state.joint_angles.iter().map(|a| a.cos()));
    obs.extend_from_slice(&state.joint_velocities);
    obs
}
