//! Rod kinematics and rigid-body dynamics terms.
//!
//! Every point of interest is written as
//! `base + offset + sum_k w_k * u(phi_{rod_k} + alpha_k)` with
//! `u(a) = (sin a, -cos a)`, so angle zero hangs straight down. Rod angles are
//! sums of generalised coordinates, which makes Jacobians and the
//! velocity-product acceleration terms closed form.

use nalgebra::{DMatrix, DVector};

use super::spec::{BaseKind, EnvSpec};

#[inline]
fn dir(a: f64) -> [f64; 2] {
    [a.sin(), -a.cos()]
}

#[inline]
fn dir_deriv(a: f64) -> [f64; 2] {
    [a.cos(), a.sin()]
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Term {
    weight: f64,
    alpha: f64,
    rod: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
struct PointDef {
    offset: [f64; 2],
    terms: Vec<Term>,
}

impl PointDef {
    fn with(&self, weight: f64, alpha: f64, rod: usize) -> PointDef {
        let mut p = self.clone();
        p.terms.push(Term { weight, alpha, rod });
        p
    }
}

#[derive(Clone, Debug)]
struct Rod {
    mass: f64,
    inertia: f64,
    angle_deps: Vec<usize>,
    center: PointDef,
}

/// One tracked point with world-frame position and velocity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Marker {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
}

/// Markers ordered limb by limb from base to tip.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkerSet {
    pub markers: Vec<Marker>,
    /// Index of each limb's base marker in `markers`.
    pub limb_starts: Vec<usize>,
}

impl MarkerSet {
    pub fn limb_count(&self) -> usize {
        self.limb_starts.len()
    }

    /// Markers of limb `l`, base first.
    pub fn limb(&self, l: usize) -> &[Marker] {
        let start = self.limb_starts[l];
        let end = self
            .limb_starts
            .get(l + 1)
            .copied()
            .unwrap_or(self.markers.len());
        &self.markers[start..end]
    }

    pub fn translated(&self, by: [f64; 2]) -> MarkerSet {
        let mut out = self.clone();
        for m in &mut out.markers {
            m.position[0] += by[0];
            m.position[1] += by[1];
        }
        out
    }
}

/// Dynamics terms at one configuration.
pub(crate) struct Dynamics {
    pub mass: DMatrix<f64>,
    /// Gravity plus velocity-product generalised forces.
    pub passive: DVector<f64>,
    pub potential: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct Body {
    floating: bool,
    dof: usize,
    rods: Vec<Rod>,
    limb_markers: Vec<Vec<PointDef>>,
    contact_points: Vec<PointDef>,
    gravity: f64,
    armature: f64,
}

impl Body {
    pub(crate) fn build(spec: &EnvSpec, torso_length: f64, segments: &[Vec<f64>]) -> Body {
        let floating = spec.is_floating();
        let base_dofs = if floating { 3 } else { 0 };
        let mut rods = Vec::new();
        let mut contact_points = Vec::new();
        let torso_rod = if let BaseKind::Floating { axis } = spec.base {
            let mass = spec.density * torso_length;
            rods.push(Rod {
                mass,
                inertia: mass * torso_length * torso_length / 12.0,
                angle_deps: vec![2],
                center: PointDef::default(),
            });
            let root = PointDef::default();
            contact_points.push(root.with(0.5 * torso_length, axis, 0));
            contact_points.push(root.with(-0.5 * torso_length, axis, 0));
            Some((0usize, axis))
        } else {
            None
        };
        let mut limb_markers = Vec::new();
        let mut joint = base_dofs;
        for (limb, lengths) in spec.limbs.iter().zip(segments) {
            let mut point = match torso_rod {
                Some((rod, axis)) => PointDef::default().with(limb.attach * torso_length, axis, rod),
                None => PointDef {
                    offset: [limb.attach, 0.0],
                    terms: Vec::new(),
                },
            };
            let mut deps: Vec<usize> = if floating { vec![2] } else { Vec::new() };
            let mut markers = vec![point.clone()];
            for &len in lengths {
                deps.push(joint);
                joint += 1;
                let rod = rods.len();
                let mass = spec.density * len;
                rods.push(Rod {
                    mass,
                    inertia: mass * len * len / 12.0,
                    angle_deps: deps.clone(),
                    center: point.with(0.5 * len, 0.0, rod),
                });
                point = point.with(len, 0.0, rod);
                markers.push(point.clone());
            }
            contact_points.extend(markers.iter().skip(1).cloned());
            limb_markers.push(markers);
        }
        Body {
            floating,
            dof: joint,
            rods,
            limb_markers,
            contact_points,
            gravity: spec.gravity,
            armature: spec.armature,
        }
    }

    pub(crate) fn dof(&self) -> usize {
        self.dof
    }

    fn rod_angles(&self, q: &[f64], qd: &[f64]) -> (Vec<f64>, Vec<f64>) {
        self.rods
            .iter()
            .map(|r| {
                (
                    r.angle_deps.iter().map(|&j| q[j]).sum::<f64>(),
                    r.angle_deps.iter().map(|&j| qd[j]).sum::<f64>(),
                )
            })
            .unzip()
    }

    fn base(&self, q: &[f64], qd: &[f64]) -> ([f64; 2], [f64; 2]) {
        if self.floating {
            ([q[0], q[1]], [qd[0], qd[1]])
        } else {
            ([0.0; 2], [0.0; 2])
        }
    }

    fn eval_point(&self, p: &PointDef, base: ([f64; 2], [f64; 2]), ang: &[f64], rate: &[f64]) -> Marker {
        let mut pos = [base.0[0] + p.offset[0], base.0[1] + p.offset[1]];
        let mut vel = base.1;
        for t in &p.terms {
            let a = ang[t.rod] + t.alpha;
            let d = dir(a);
            let dd = dir_deriv(a);
            pos[0] += t.weight * d[0];
            pos[1] += t.weight * d[1];
            vel[0] += t.weight * dd[0] * rate[t.rod];
            vel[1] += t.weight * dd[1] * rate[t.rod];
        }
        Marker {
            position: pos,
            velocity: vel,
        }
    }

    /// Writes the 2 x dof Jacobian of `p` into `jac` (row-major, x row then
    /// y row) and returns the velocity-product acceleration `Jdot * qd`.
    fn point_jacobian(&self, p: &PointDef, ang: &[f64], rate: &[f64], jac: &mut [f64]) -> [f64; 2] {
        let n = self.dof;
        jac.iter_mut().for_each(|v| *v = 0.0);
        if self.floating {
            jac[0] = 1.0;
            jac[n + 1] = 1.0;
        }
        let mut bias = [0.0; 2];
        for t in &p.terms {
            let a = ang[t.rod] + t.alpha;
            let dd = dir_deriv(a);
            for &j in &self.rods[t.rod].angle_deps {
                jac[j] += t.weight * dd[0];
                jac[n + j] += t.weight * dd[1];
            }
            let d = dir(a);
            let w2 = t.weight * rate[t.rod] * rate[t.rod];
            bias[0] -= w2 * d[0];
            bias[1] -= w2 * d[1];
        }
        bias
    }

    pub(crate) fn markers(&self, q: &[f64], qd: &[f64]) -> MarkerSet {
        let (ang, rate) = self.rod_angles(q, qd);
        let base = self.base(q, qd);
        let mut markers = Vec::new();
        let mut limb_starts = Vec::new();
        for limb in &self.limb_markers {
            limb_starts.push(markers.len());
            markers.extend(limb.iter().map(|p| self.eval_point(p, base, &ang, &rate)));
        }
        MarkerSet {
            markers,
            limb_starts,
        }
    }

    pub(crate) fn dynamics(&self, q: &[f64], qd: &[f64]) -> Dynamics {
        let n = self.dof;
        let (ang, rate) = self.rod_angles(q, qd);
        let mut mass = DMatrix::<f64>::zeros(n, n);
        let mut passive = DVector::<f64>::zeros(n);
        let mut potential = 0.0;
        let mut jac = vec![0.0; 2 * n];
        let base = self.base(q, qd);
        for rod in &self.rods {
            let bias = self.point_jacobian(&rod.center, &ang, &rate, &mut jac);
            let c = self.eval_point(&rod.center, base, &ang, &rate);
            potential += rod.mass * self.gravity * c.position[1];
            let force = [-rod.mass * bias[0], -rod.mass * (self.gravity + bias[1])];
            for i in 0..n {
                let (jxi, jyi) = (jac[i], jac[n + i]);
                if jxi == 0.0 && jyi == 0.0 {
                    continue;
                }
                passive[i] += jxi * force[0] + jyi * force[1];
                for k in 0..n {
                    mass[(i, k)] += rod.mass * (jxi * jac[k] + jyi * jac[n + k]);
                }
            }
            for &i in &rod.angle_deps {
                for &k in &rod.angle_deps {
                    mass[(i, k)] += rod.inertia;
                }
            }
        }
        let first_joint = if self.floating { 3 } else { 0 };
        for j in first_joint..n {
            mass[(j, j)] += self.armature;
        }
        Dynamics {
            mass,
            passive,
            potential,
        }
    }

    /// Ground contact generalised forces and spring energy.
    pub(crate) fn contact(
        &self,
        q: &[f64],
        qd: &[f64],
        params: &super::spec::ContactParams,
        out: &mut DVector<f64>,
    ) -> f64 {
        let n = self.dof;
        let (ang, rate) = self.rod_angles(q, qd);
        let base = self.base(q, qd);
        let mut jac = vec![0.0; 2 * n];
        let mut energy = 0.0;
        for p in &self.contact_points {
            let m = self.eval_point(p, base, &ang, &rate);
            let depth = -m.position[1];
            if depth <= 0.0 {
                continue;
            }
            energy += 0.5 * params.stiffness * depth * depth;
            let normal = (params.stiffness * depth - params.damping * m.velocity[1]).max(0.0);
            let cap = params.friction * normal;
            let tangential = (-params.friction_damping * m.velocity[0]).clamp(-cap, cap);
            self.point_jacobian(p, &ang, &rate, &mut jac);
            for i in 0..n {
                out[i] += jac[i] * tangential + jac[n + i] * normal;
            }
        }
        energy
    }

    pub(crate) fn contact_energy(&self, q: &[f64], params: &super::spec::ContactParams) -> f64 {
        let zeros = vec![0.0; self.dof];
        let (ang, rate) = self.rod_angles(q, &zeros);
        let base = self.base(q, &zeros);
        self.contact_points
            .iter()
            .map(|p| {
                let depth = -self.eval_point(p, base, &ang, &rate).position[1];
                if depth > 0.0 {
                    0.5 * params.stiffness * depth * depth
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// Lowest point of the body, used to place the base above the ground.
    pub(crate) fn lowest_point(&self, q: &[f64]) -> f64 {
        let zeros = vec![0.0; self.dof];
        let (ang, rate) = self.rod_angles(q, &zeros);
        let base = self.base(q, &zeros);
        self.contact_points
            .iter()
            .map(|p| self.eval_point(p, base, &ang, &rate).position[1])
            .fold(f64::INFINITY, f64::min)
    }
}
