//! Implicit predictor / fixed-point corrector Newmark-β time stepping.
//!
//! Each step predicts displacement and velocity from the previous level, then repeats
//! "evaluate acceleration, correct" until the area-weighted L2 norm of the velocity
//! change between two corrector passes drops to `eps`.

use crate::error::{Error, Result};
use crate::Vec3;

/// Maps a displacement field at time `t` to per-vertex accelerations.
pub trait AccelerationField {
    fn acceleration(&self, u: &[Vec3], t: f64, out: &mut [Vec3]) -> Result<()>;
}

impl<F> AccelerationField for F
where
    F: Fn(&[Vec3], f64, &mut [Vec3]) -> Result<()>,
{
    fn acceleration(&self, u: &[Vec3], t: f64, out: &mut [Vec3]) -> Result<()> {
        self(u, t, out)
    }
}

/// Velocity predictor variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PredictorMode {
    /// `v + (1 - γ) Δt a`, the second-order Newmark predictor.
    #[default]
    Standard,
    /// `v + (1 + γ) Δt a`; not consistent for γ > 0, kept for comparison runs.
    OnePlusGamma,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eps: f64,
    pub max_iters: usize,
    pub predictor: PredictorMode,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            dt: 1e-3,
            beta: 0.25,
            gamma: 0.5,
            eps: 1e-7,
            max_iters: 50,
            predictor: PredictorMode::Standard,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(0.0..=0.5).contains(&self.beta) {
            return Err(Error::param("beta", format!("must lie in [0, 1/2], got {}", self.beta)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::param("gamma", format!("must lie in [0, 1], got {}", self.gamma)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::param("eps", format!("must be positive, got {}", self.eps)));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be at least 1"));
        }
        Ok(())
    }
}

/// Kinematic state at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub u: Vec<Vec3>,
    pub v: Vec<Vec3>,
    pub a: Vec<Vec3>,
}

impl State {
    /// State at rest with zero acceleration.
    pub fn at_rest(nv: usize) -> Self {
        State {
            t: 0.0,
            u: vec![Vec3::zeros(); nv],
            v: vec![Vec3::zeros(); nv],
            a: vec![Vec3::zeros(); nv],
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Corrector passes performed (the k of P(EC)^k).
    pub iterations: usize,
    /// Weighted L2 velocity change at acceptance.
    pub final_residual: f64,
}

/// Predicted displacement and velocity for the next level.
pub fn predict(state: &State, cfg: &IntegratorConfig) -> (Vec<Vec3>, Vec<Vec3>) {
    let dt = cfg.dt;
    let v_coef = match cfg.predictor {
        PredictorMode::Standard => (1.0 - cfg.gamma) * dt,
        PredictorMode::OnePlusGamma => (1.0 + cfg.gamma) * dt,
    };
    let u_coef = (1.0 - 2.0 * cfg.beta) * dt * dt / 2.0;
    let v_pred = state
        .v
        .iter()
        .zip(&state.a)
        .map(|(v, a)| v + a * v_coef)
        .collect();
    let u_pred = state
        .u
        .iter()
        .zip(&state.v)
        .zip(&state.a)
        .map(|((u, v), a)| u + v * dt + a * u_coef)
        .collect();
    (u_pred, v_pred)
}

/// Corrects the predicted fields with a new acceleration estimate.
pub fn correct(u_pred: &[Vec3], v_pred: &[Vec3], a_new: &[Vec3], cfg: &IntegratorConfig) -> (Vec<Vec3>, Vec<Vec3>) {
    let mut u = u_pred.to_vec();
    let mut v = v_pred.to_vec();
    correct_into(u_pred, v_pred, a_new, cfg, &mut u, &mut v);
    (u, v)
}

fn correct_into(
    u_pred: &[Vec3],
    v_pred: &[Vec3],
    a_new: &[Vec3],
    cfg: &IntegratorConfig,
    u_out: &mut [Vec3],
    v_out: &mut [Vec3],
) {
    let v_coef = cfg.gamma * cfg.dt;
    let u_coef = cfg.beta * cfg.dt * cfg.dt;
    for i in 0..a_new.len() {
        v_out[i] = v_pred[i] + a_new[i] * v_coef;
        u_out[i] = u_pred[i] + a_new[i] * u_coef;
    }
}

/// Discrete L2 norm `sqrt(Σ_i w_i |x_i|^2)`.
pub fn weighted_l2_norm(x: &[Vec3], weights: &[f64]) -> f64 {
    x.iter()
        .zip(weights)
        .map(|(v, w)| w * v.norm_squared())
        .sum::<f64>()
        .sqrt()
}

fn weighted_l2_distance(a: &[Vec3], b: &[Vec3], weights: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(weights)
        .map(|((x, y), w)| w * (x - y).norm_squared())
        .sum::<f64>()
        .sqrt()
}

fn first_non_finite(x: &[Vec3]) -> Option<usize> {
    x.iter().position(|v| !v.iter().all(|c| c.is_finite()))
}

/// Acceleration of the initial state.
pub fn initial_acceleration<F: AccelerationField + ?Sized>(u0: &[Vec3], forces: &F) -> Result<Vec<Vec3>> {
    let mut a = vec![Vec3::zeros(); u0.len()];
    forces.acceleration(u0, 0.0, &mut a)?;
    if let Some(vertex) = first_non_finite(&a) {
        return Err(Error::NonFinite { vertex });
    }
    Ok(a)
}

/// Advances `state` by one step of size `cfg.dt`.
///
/// `weights` are the per-vertex areas used in the convergence norm. The returned state
/// carries the last evaluated acceleration.
pub fn step<F: AccelerationField + ?Sized>(
    state: &State,
    forces: &F,
    cfg: &IntegratorConfig,
    weights: &[f64],
) -> Result<(State, StepReport)> {
    let nv = state.len();
    assert_eq!(weights.len(), nv, "weights must match the vertex count");
    let t_next = state.t + cfg.dt;
    let (u_pred, v_pred) = predict(state, cfg);

    let mut u = u_pred.clone();
    let mut v = v_pred.clone();
    let mut u_next = vec![Vec3::zeros(); nv];
    let mut v_next = vec![Vec3::zeros(); nv];
    let mut a = vec![Vec3::zeros(); nv];
    let mut residual = f64::INFINITY;

    for iteration in 1..=cfg.max_iters {
        forces.acceleration(&u, t_next, &mut a)?;
        if let Some(vertex) = first_non_finite(&a) {
            return Err(Error::NonFinite { vertex });
        }
        correct_into(&u_pred, &v_pred, &a, cfg, &mut u_next, &mut v_next);
        if let Some(vertex) = first_non_finite(&u_next).or_else(|| first_non_finite(&v_next)) {
            return Err(Error::NonFinite { vertex });
        }
        residual = weighted_l2_distance(&v_next, &v, weights);
        std::mem::swap(&mut u, &mut u_next);
        std::mem::swap(&mut v, &mut v_next);
        if residual <= cfg.eps {
            return Ok((
                State { t: t_next, u, v, a },
                StepReport {
                    iterations: iteration,
                    final_residual: residual,
                },
            ));
        }
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iters,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(dt: f64) -> IntegratorConfig {
        IntegratorConfig {
            dt,
            ..Default::default()
        }
    }

    fn state(u: Vec<Vec3>, v: Vec<Vec3>, a: Vec<Vec3>) -> State {
        State { t: 0.0, u, v, a }
    }

    #[test]
    fn predict_free_drift() {
        let s = state(vec![Vec3::new(1.0, 2.0, 3.0)], vec![Vec3::new(0.5, 0.0, -1.0)], vec![Vec3::zeros()]);
        let (u, v) = predict(&s, &cfg(0.1));
        assert_eq!(v, s.v);
        assert_eq!(u[0], s.u[0] + s.v[0] * 0.1);
    }

    #[test]
    fn predict_average_acceleration() {
        // β = 1/4 leaves (1 - 2β) Δt²/2 = Δt²/4 of the old acceleration in u_pred.
        let a = Vec3::new(2.0, -4.0, 1.0);
        let s = state(vec![Vec3::new(1.0, 1.0, 1.0)], vec![Vec3::zeros()], vec![a]);
        let (u, v) = predict(&s, &cfg(0.01));
        assert_eq!(v[0], a * 0.005);
        assert!((u[0] - (s.u[0] + a * 2.5e-5)).norm() < 1e-16);

        // β = 1/2 drops it entirely.
        let half = IntegratorConfig { beta: 0.5, ..cfg(0.01) };
        let (u, _) = predict(&s, &half);
        assert_eq!(u[0], s.u[0]);
    }

    #[test]
    fn predict_zero_step_is_identity() {
        let s = state(vec![Vec3::new(1.0, 2.0, 3.0)], vec![Vec3::new(4.0, 5.0, 6.0)], vec![Vec3::new(7.0, 8.0, 9.0)]);
        let c = IntegratorConfig { dt: 0.0, ..Default::default() };
        let (u, v) = predict(&s, &c);
        assert_eq!((u, v), (s.u.clone(), s.v.clone()));
    }

    #[test]
    fn one_plus_gamma_predictor_uses_one_plus_gamma() {
        let a = Vec3::new(1.0, 0.0, 0.0);
        let s = state(vec![Vec3::zeros()], vec![Vec3::zeros()], vec![a]);
        let c = IntegratorConfig {
            predictor: PredictorMode::OnePlusGamma,
            ..cfg(0.1)
        };
        let (_, v) = predict(&s, &c);
        assert!((v[0].x - 0.15).abs() < 1e-15);
    }

    #[test]
    fn correct_examples() {
        let up = vec![Vec3::new(1.0, 0.0, 0.0)];
        let vp = vec![Vec3::new(0.0, 1.0, 0.0)];
        let (u, v) = correct(&up, &vp, &[Vec3::zeros()], &cfg(1e-3));
        assert_eq!((u, v), (up.clone(), vp.clone()));

        let explicit = IntegratorConfig { beta: 0.0, gamma: 0.0, ..cfg(1e-3) };
        let (u, v) = correct(&up, &vp, &[Vec3::new(5.0, 6.0, 7.0)], &explicit);
        assert_eq!((u, v), (up.clone(), vp.clone()));

        let (_, v) = correct(&up, &vp, &[Vec3::new(2.0, 0.0, 0.0)], &cfg(1e-3));
        assert!((v[0] - vp[0] - Vec3::new(1e-3, 0.0, 0.0)).norm() < 1e-18);
    }

    #[test]
    fn drift_without_forces_takes_one_iteration() {
        let zero = |_: &[Vec3], _: f64, out: &mut [Vec3]| -> Result<()> {
            out.fill(Vec3::zeros());
            Ok(())
        };
        let v0 = Vec3::new(0.25, -0.5, 1.0);
        let mut s = state(vec![Vec3::zeros(); 2], vec![v0; 2], vec![Vec3::zeros(); 2]);
        let c = cfg(0.125);
        for n in 1..=8 {
            let (next, report) = step(&s, &zero, &c, &[1.0, 1.0]).unwrap();
            assert_eq!(report.iterations, 1);
            assert_eq!(report.final_residual, 0.0);
            assert_eq!(next.u[0], v0 * (0.125 * n as f64));
            s = next;
        }
        assert_eq!(s.t, 1.0);
    }

    #[test]
    fn non_finite_acceleration_is_reported() {
        let bad = |_: &[Vec3], _: f64, out: &mut [Vec3]| -> Result<()> {
            out.fill(Vec3::new(f64::NAN, 0.0, 0.0));
            Ok(())
        };
        let s = State::at_rest(3);
        assert!(matches!(step(&s, &bad, &cfg(1e-3), &[1.0; 3]), Err(Error::NonFinite { vertex: 0 })));
        assert!(matches!(initial_acceleration(&s.u, &bad), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn divergent_fixed_point_reports_non_convergence() {
        // a = -k u with β k Δt² > 1 makes the corrector iteration diverge.
        let stiff = |u: &[Vec3], _: f64, out: &mut [Vec3]| -> Result<()> {
            for (o, x) in out.iter_mut().zip(u) {
                *o = -x * 1e4;
            }
            Ok(())
        };
        let s = state(vec![Vec3::new(1.0, 0.0, 0.0)], vec![Vec3::zeros()], vec![Vec3::new(-1e4, 0.0, 0.0)]);
        let c = IntegratorConfig { max_iters: 20, ..cfg(0.1) };
        assert!(matches!(step(&s, &stiff, &c, &[1.0]), Err(Error::NonConvergence { iterations: 20, .. })));
    }

    #[test]
    fn config_validation() {
        assert!(IntegratorConfig::default().validate().is_ok());
        assert!(IntegratorConfig { dt: 0.0, ..Default::default() }.validate().is_err());
        assert!(IntegratorConfig { beta: 0.6, ..Default::default() }.validate().is_err());
        assert!(IntegratorConfig { gamma: -0.1, ..Default::default() }.validate().is_err());
        assert!(IntegratorConfig { eps: 0.0, ..Default::default() }.validate().is_err());
        assert!(IntegratorConfig { max_iters: 0, ..Default::default() }.validate().is_err());
    }
}
