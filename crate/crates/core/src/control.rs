//! Multi-predecessor feedback + feedforward longitudinal controller under a
//! constant-time-headway spacing policy.
//!
//! For vehicle `i` with predecessors at ranks `k = 1..N` (rank `k` is the
//! vehicle `k` slots ahead in the virtual sequence):
//!
//! ```text
//! e_i  = sum_k a_k [(x_{i-k} - x_i) - k (L + tau v_i)]
//! dv_i = v_i - sum_k g_k v_{i-k}
//! u_i  = clamp(w_e e_i + w_v dv_i + sum_k f_k a_{i-k}, u_min, u_max)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightScheme {
    /// Every predecessor weighted `1/N`.
    #[default]
    Equal,
    /// `1/2^k` for `k < N`, and `1/2^(N-1)` for the farthest predecessor.
    Geometric,
}

impl WeightScheme {
    pub fn name(self) -> &'static str {
        match self {
            WeightScheme::Equal => "equal",
            WeightScheme::Geometric => "geometric",
        }
    }
}

/// Sign applied to the equilibrium-velocity deviation term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocityFeedback {
    /// `+w_v (v_i - v_eq)`, the form the stability conditions are derived for.
    #[default]
    AsPrinted,
    /// `-w_v (v_i - v_eq)`, the conventional damping sign.
    Damping,
}

/// Position-feedback, acceleration-feedforward and velocity-feedback weights,
/// indexed by predecessor rank (`[0]` is rank 1).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub alpha_b: Vec<f64>,
    pub alpha_f: Vec<f64>,
    pub gamma_b: Vec<f64>,
}

impl WeightVector {
    /// Same weights for all three channels.
    pub fn uniform_channels(w: Vec<f64>) -> Self {
        Self {
            alpha_b: w.clone(),
            alpha_f: w.clone(),
            gamma_b: w,
        }
    }

    pub fn len(&self) -> usize {
        self.alpha_b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha_b.is_empty()
    }

    /// Weighted mean predecessor rank, `sum_k alpha_b[k] * k`.
    pub fn mean_rank(&self) -> f64 {
        self.alpha_b
            .iter()
            .enumerate()
            .map(|(i, a)| a * (i + 1) as f64)
            .sum()
    }
}

pub fn weights(scheme: WeightScheme, n: usize) -> Result<WeightVector> {
    if n == 0 {
        return Err(Error::NoPredecessors);
    }
    let w = match scheme {
        WeightScheme::Equal => vec![1.0 / n as f64; n],
        WeightScheme::Geometric => (1..=n)
            .map(|k| {
                let exp = if k < n { k } else { n - 1 };
                0.5f64.powi(exp as i32)
            })
            .collect(),
    };
    Ok(WeightVector::uniform_channels(w))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    /// Spacing-error gain, 1/s^2.
    pub omega_e: f64,
    /// Velocity-deviation gain, 1/s.
    pub omega_v: f64,
    /// Desired time gap, s.
    pub tau: f64,
    /// Standstill distance including vehicle length, m.
    pub standstill: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub scheme: WeightScheme,
    pub velocity_feedback: VelocityFeedback,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            omega_e: 1.4,
            omega_v: 0.3,
            tau: 1.0,
            standstill: 5.0,
            u_min: -3.0,
            u_max: 3.0,
            scheme: WeightScheme::Equal,
            velocity_feedback: VelocityFeedback::AsPrinted,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("omega_e", self.omega_e),
            ("omega_v", self.omega_v),
            ("tau", self.tau),
            ("standstill", self.standstill),
            ("u_min", self.u_min),
            ("u_max", self.u_max),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(name));
        }
        if self.tau <= 0.0 {
            return Err(Error::InvalidParameter("tau must be > 0".into()));
        }
        if self.standstill <= 0.0 {
            return Err(Error::InvalidParameter("standstill must be > 0".into()));
        }
        if self.omega_e <= 0.0 {
            return Err(Error::InvalidParameter("omega_e must be > 0".into()));
        }
        if self.omega_v < 0.0 {
            return Err(Error::InvalidParameter("omega_v must be >= 0".into()));
        }
        if !(self.u_min < 0.0 && 0.0 < self.u_max) {
            return Err(Error::InvalidParameter("need u_min < 0 < u_max".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    /// Virtual-axis position, m.
    pub x: f64,
    pub v: f64,
    /// Last applied acceleration, m/s^2.
    pub a: f64,
}

impl VehicleState {
    pub fn new(x: f64, v: f64, a: f64) -> Self {
        Self { x, v, a }
    }
}

/// CTH gap to the predecessor `rank` slots ahead.
pub fn desired_spacing(rank: usize, v: f64, cfg: &ControllerConfig) -> f64 {
    rank as f64 * (cfg.standstill + cfg.tau * v)
}

fn check_inputs(i: usize, states: &[VehicleState], preds: &[usize], w: &WeightVector) -> Result<()> {
    if i >= states.len() {
        return Err(Error::IndexOutOfRange { index: i, len: states.len() });
    }
    if preds.is_empty() {
        return Err(Error::NoPredecessors);
    }
    if w.len() < preds.len() {
        return Err(Error::InvalidParameter(format!(
            "{} weights for {} predecessors",
            w.len(),
            preds.len()
        )));
    }
    if let Some(&p) = preds.iter().find(|&&p| p >= i) {
        return Err(Error::InvalidParameter(format!(
            "predecessor {p} is not ahead of vehicle {i}"
        )));
    }
    Ok(())
}

/// Weighted spacing error of vehicle `i`. `preds` holds sequence indices,
/// nearest first; each one's rank is its distance in the sequence.
pub fn spacing_error(
    i: usize,
    states: &[VehicleState],
    preds: &[usize],
    w: &WeightVector,
    cfg: &ControllerConfig,
) -> Result<f64> {
    check_inputs(i, states, preds, w)?;
    let ego = states[i];
    Ok(preds
        .iter()
        .enumerate()
        .map(|(slot, &p)| {
            let rank = i - p;
            w.alpha_b[slot] * ((states[p].x - ego.x) - desired_spacing(rank, ego.v, cfg))
        })
        .sum())
}

/// Deviation of `v_i` from the weighted predecessor speed.
pub fn velocity_deviation(
    i: usize,
    states: &[VehicleState],
    preds: &[usize],
    w: &WeightVector,
) -> Result<f64> {
    check_inputs(i, states, preds, w)?;
    let v_eq: f64 = preds
        .iter()
        .enumerate()
        .map(|(slot, &p)| w.gamma_b[slot] * states[p].v)
        .sum();
    Ok(states[i].v - v_eq)
}

/// Command before saturation.
pub fn raw_command(
    i: usize,
    states: &[VehicleState],
    preds: &[usize],
    w: &WeightVector,
    cfg: &ControllerConfig,
) -> Result<f64> {
    if states.iter().any(|s| !(s.x.is_finite() && s.v.is_finite() && s.a.is_finite())) {
        return Err(Error::NonFinite("vehicle state"));
    }
    let e = spacing_error(i, states, preds, w, cfg)?;
    let dv = velocity_deviation(i, states, preds, w)?;
    let feedforward: f64 = preds
        .iter()
        .enumerate()
        .map(|(slot, &p)| w.alpha_f[slot] * states[p].a)
        .sum();
    let velocity_term = match cfg.velocity_feedback {
        VelocityFeedback::AsPrinted => cfg.omega_v * dv,
        VelocityFeedback::Damping => -cfg.omega_v * dv,
    };
    Ok(cfg.omega_e * e + velocity_term + feedforward)
}

/// Saturated acceleration command. Predecessor accelerations are read from
/// `states[p].a`.
pub fn control_command(
    i: usize,
    states: &[VehicleState],
    preds: &[usize],
    w: &WeightVector,
    cfg: &ControllerConfig,
) -> Result<f64> {
    let raw = raw_command(i, states, preds, w, cfg)?;
    Ok(raw.clamp(cfg.u_min, cfg.u_max))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    fn cfg() -> ControllerConfig {
        ControllerConfig::default()
    }

    #[test]
    fn equal_weights() {
        let w = weights(WeightScheme::Equal, 3).unwrap();
        assert_eq!(w.alpha_b, vec![1.0 / 3.0; 3]);
        assert_eq!(w.alpha_b, w.alpha_f);
        assert_eq!(w.alpha_b, w.gamma_b);
    }

    #[test]
    fn geometric_weights() {
        assert_eq!(weights(WeightScheme::Geometric, 3).unwrap().alpha_b, vec![0.5, 0.25, 0.25]);
        assert_eq!(weights(WeightScheme::Geometric, 1).unwrap().alpha_b, vec![1.0]);
        assert_eq!(weights(WeightScheme::Geometric, 2).unwrap().alpha_b, vec![0.5, 0.5]);
    }

    #[test]
    fn zero_predecessors_rejected() {
        assert_eq!(weights(WeightScheme::Equal, 0).unwrap_err(), Error::NoPredecessors);
    }

    #[test]
    fn desired_spacing_examples() {
        assert_eq!(desired_spacing(1, 20.0, &cfg()), 25.0);
        assert_eq!(desired_spacing(3, 0.0, &cfg()), 15.0);
        let half = ControllerConfig { tau: 0.5, ..cfg() };
        assert_eq!(desired_spacing(2, 10.0, &half), 20.0);
    }

    #[test]
    fn spacing_error_examples() {
        let w1 = weights(WeightScheme::Equal, 1).unwrap();
        let at_eq = [VehicleState::new(25.0, 20.0, 0.0), VehicleState::new(0.0, 20.0, 0.0)];
        assert_eq!(spacing_error(1, &at_eq, &[0], &w1, &cfg()).unwrap(), 0.0);

        let wide = [VehicleState::new(30.0, 20.0, 0.0), VehicleState::new(0.0, 20.0, 0.0)];
        assert!((spacing_error(1, &wide, &[0], &w1, &cfg()).unwrap() - 5.0).abs() < TOL);

        let w2 = weights(WeightScheme::Equal, 2).unwrap();
        let three = [
            VehicleState::new(55.0, 20.0, 0.0),
            VehicleState::new(30.0, 20.0, 0.0),
            VehicleState::new(0.0, 20.0, 0.0),
        ];
        assert!((spacing_error(2, &three, &[1, 0], &w2, &cfg()).unwrap() - 5.0).abs() < TOL);
    }

    #[test]
    fn velocity_deviation_examples() {
        let w2 = weights(WeightScheme::Equal, 2).unwrap();
        let same = [VehicleState::new(50.0, 20.0, 0.0), VehicleState::new(25.0, 20.0, 0.0), VehicleState::new(0.0, 20.0, 0.0)];
        assert_eq!(velocity_deviation(2, &same, &[1, 0], &w2).unwrap(), 0.0);

        let faster = [VehicleState::new(50.0, 20.0, 0.0), VehicleState::new(25.0, 20.0, 0.0), VehicleState::new(0.0, 21.0, 0.0)];
        assert!((velocity_deviation(2, &faster, &[1, 0], &w2).unwrap() - 1.0).abs() < TOL);

        let g2 = weights(WeightScheme::Geometric, 2).unwrap();
        let mixed = [VehicleState::new(50.0, 22.0, 0.0), VehicleState::new(25.0, 20.0, 0.0), VehicleState::new(0.0, 19.0, 0.0)];
        assert!((velocity_deviation(2, &mixed, &[1, 0], &g2).unwrap() + 2.0).abs() < TOL);
    }

    #[test]
    fn command_examples() {
        let w1 = weights(WeightScheme::Equal, 1).unwrap();
        let eq = [VehicleState::new(25.0, 20.0, 0.0), VehicleState::new(0.0, 20.0, 0.0)];
        assert_eq!(control_command(1, &eq, &[0], &w1, &cfg()).unwrap(), 0.0);

        let wide = [VehicleState::new(30.0, 20.0, 0.0), VehicleState::new(0.0, 20.0, 0.0)];
        assert!((raw_command(1, &wide, &[0], &w1, &cfg()).unwrap() - 7.0).abs() < 1e-12);
        assert_eq!(control_command(1, &wide, &[0], &w1, &cfg()).unwrap(), 3.0);

        let braking = [VehicleState::new(25.0, 20.0, -2.0), VehicleState::new(0.0, 20.0, 0.0)];
        assert_eq!(control_command(1, &braking, &[0], &w1, &cfg()).unwrap(), -2.0);
    }

    #[test]
    fn damping_sign_flips_velocity_term() {
        let w1 = weights(WeightScheme::Equal, 1).unwrap();
        let s = [VehicleState::new(25.0, 20.0, 0.0), VehicleState::new(0.0, 21.0, 0.0)];
        // e = -1 (tau * 1 m/s extra), dv = +1
        let printed = raw_command(1, &s, &[0], &w1, &cfg()).unwrap();
        let damped = raw_command(
            1,
            &s,
            &[0],
            &w1,
            &ControllerConfig { velocity_feedback: VelocityFeedback::Damping, ..cfg() },
        )
        .unwrap();
        assert!((printed - (-1.4 + 0.3)).abs() < TOL);
        assert!((damped - (-1.4 - 0.3)).abs() < TOL);
    }

    #[test]
    fn rejects_non_finite_state() {
        let w1 = weights(WeightScheme::Equal, 1).unwrap();
        let s = [VehicleState::new(f64::NAN, 20.0, 0.0), VehicleState::new(0.0, 20.0, 0.0)];
        assert_eq!(
            control_command(1, &s, &[0], &w1, &cfg()).unwrap_err(),
            Error::NonFinite("vehicle state")
        );
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        let bad = ControllerConfig { tau: -1.0, ..cfg() };
        assert_eq!(
            bad.validate().unwrap_err(),
            Error::InvalidParameter("tau must be > 0".into())
        );
        let bad = ControllerConfig { u_min: 0.5, ..cfg() };
        assert!(bad.validate().is_err());
    }
}
