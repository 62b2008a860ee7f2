//! Curvilinear lateral dynamics and the extended-LQR lateral controller.
//!
//! Lateral state is the offset `r` from the lane centreline (positive to the
//! left) and the heading error `dtheta`. The controller is designed on the
//! small-angle model
//!
//! ```text
//! d/dt [r, dtheta] = [[0, v], [0, 0]] [r, dtheta] + [0, 1] mu + [0, -v kappa]
//! ```
//!
//! and combines state feedback with a feedforward on the curvature drift.

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::riccati;

/// Largest heading error for which the small-angle design is trusted.
pub const SMALL_ANGLE_LIMIT: f64 = 14.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSegment {
    pub length: f64,
    /// Signed curvature, 1/m (positive turns left).
    pub curvature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathGeometry {
    #[serde(default)]
    pub start: Pose,
    pub segments: Vec<PathSegment>,
    /// Arc length of the merge point O.
    pub merge_s: f64,
}

impl PathGeometry {
    /// Circular ramp arc of `radius` and `arc_length` joining a straight
    /// mainline of `mainline_length` at O. The mainline runs along +x and O
    /// sits at the origin.
    pub fn ramp_arc(radius: f64, arc_length: f64, mainline_length: f64) -> Result<Self> {
        Self::with_approach(0.0, radius, arc_length, mainline_length)
    }

    /// Straight approach, then the ramp arc, then the mainline.
    pub fn with_approach(
        approach: f64,
        radius: f64,
        arc_length: f64,
        mainline_length: f64,
    ) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter("ramp radius must be > 0".into()));
        }
        let curvature = 1.0 / radius;
        let mut segments = Vec::new();
        if approach > 0.0 {
            segments.push(PathSegment { length: approach, curvature: 0.0 });
        }
        segments.push(PathSegment { length: arc_length, curvature });
        segments.push(PathSegment { length: mainline_length, curvature: 0.0 });

        let mut path = PathGeometry {
            start: Pose { x: 0.0, y: 0.0, heading: -curvature * arc_length },
            segments,
            merge_s: approach + arc_length,
        };
        path.validate()?;
        let o = path.pose_at(path.merge_s)?;
        path.start.x -= o.x;
        path.start.y -= o.y;
        Ok(path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::InvalidParameter("path needs at least one segment".into()));
        }
        for seg in &self.segments {
            if !(seg.length > 0.0) || !seg.curvature.is_finite() {
                return Err(Error::InvalidParameter(
                    "path segments need length > 0 and finite curvature".into(),
                ));
            }
        }
        if !(0.0..=self.length()).contains(&self.merge_s) {
            return Err(Error::InvalidParameter("merge point lies outside the path".into()));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }

    /// Curvature at arc length `s`; the end segments extend beyond the path.
    pub fn curvature_at(&self, s: f64) -> f64 {
        let mut start = 0.0;
        for seg in &self.segments {
            // Joints belong to the downstream segment.
            if s < start + seg.length {
                return seg.curvature;
            }
            start += seg.length;
        }
        self.segments.last().map_or(0.0, |s| s.curvature)
    }

    /// Centreline pose at arc length `s`.
    pub fn pose_at(&self, s: f64) -> Result<Pose> {
        let length = self.length();
        if !(0.0..=length).contains(&s) {
            return Err(Error::OutOfPath { s, length });
        }
        let mut pose = self.start;
        let mut remaining = s;
        for seg in &self.segments {
            let ds = remaining.min(seg.length);
            pose = advance(pose, seg.curvature, ds);
            remaining -= ds;
            if remaining <= 0.0 {
                break;
            }
        }
        Ok(pose)
    }

    /// Global pose of a vehicle in curvilinear state `state`.
    pub fn to_global(&self, state: &CurvilinearState) -> Result<Pose> {
        let c = self.pose_at(state.s)?;
        Ok(Pose {
            x: c.x - state.r * c.heading.sin(),
            y: c.y + state.r * c.heading.cos(),
            heading: c.heading + state.dtheta,
        })
    }
}

fn advance(p: Pose, curvature: f64, ds: f64) -> Pose {
    if curvature == 0.0 {
        return Pose {
            x: p.x + ds * p.heading.cos(),
            y: p.y + ds * p.heading.sin(),
            heading: p.heading,
        };
    }
    let heading = p.heading + curvature * ds;
    Pose {
        x: p.x + (heading.sin() - p.heading.sin()) / curvature,
        y: p.y - (heading.cos() - p.heading.cos()) / curvature,
        heading,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CurvilinearState {
    /// Curvilinear abscissa, m.
    pub s: f64,
    /// Lateral offset, m.
    pub r: f64,
    /// Heading error, rad.
    pub dtheta: f64,
    /// Speed along the vehicle heading, m/s.
    pub v_tilde: f64,
}

impl CurvilinearState {
    /// Speed projected on the centreline, the longitudinal controller's `v`.
    pub fn projected_speed(&self) -> f64 {
        self.v_tilde * self.dtheta.cos()
    }

    pub fn small_angle_valid(&self) -> bool {
        self.dtheta.abs() < SMALL_ANGLE_LIMIT
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LateralWeights {
    /// Weight on lateral offset.
    pub q_offset: f64,
    /// Weight on heading error.
    pub q_heading: f64,
    /// Weight on the angular-rate input.
    pub r_rate: f64,
}

impl Default for LateralWeights {
    fn default() -> Self {
        Self {
            q_offset: 1.0,
            q_heading: 1.0,
            r_rate: 1.0,
        }
    }
}

impl LateralWeights {
    fn validate(&self) -> Result<()> {
        if self.q_offset > 0.0 && self.q_heading > 0.0 && self.r_rate > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter("lateral weights must be > 0".into()))
        }
    }
}

/// Sign convention of the curvature feedforward gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedforwardSign {
    /// `k_f = R^-1 B^T [(A - B R^-1 B^T P)^T]^-1 P`; cancels the drift exactly.
    #[default]
    Standard,
    /// The same expression with a leading minus.
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LateralGains {
    pub p: Matrix2<f64>,
    /// `[k_r, k_dtheta]`.
    pub k_b: [f64; 2],
    pub k_f: [f64; 2],
}

fn system(v: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    (
        DMatrix::from_row_slice(2, 2, &[0.0, v, 0.0, 0.0]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
    )
}

fn check_care_inputs(v: f64, weights: &LateralWeights) -> Result<()> {
    if !(v > 0.0) {
        return Err(Error::NotStabilizable(format!(
            "lateral model needs forward speed, got {v} m/s"
        )));
    }
    weights.validate()
}

/// Stabilizing Riccati solution for the lateral model at speed `v`.
pub fn care_solve(v: f64, weights: &LateralWeights) -> Result<Matrix2<f64>> {
    care_solve_warm(v, weights, None)
}

/// As [`care_solve`], warm-starting from a previous solution.
pub fn care_solve_warm(
    v: f64,
    weights: &LateralWeights,
    previous: Option<&Matrix2<f64>>,
) -> Result<Matrix2<f64>> {
    check_care_inputs(v, weights)?;
    let (a, b) = system(v);
    let q = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        weights.q_offset,
        weights.q_heading,
    ]));
    let r = DMatrix::from_element(1, 1, weights.r_rate);
    let p = match previous {
        Some(prev) => {
            let guess = DMatrix::from_row_slice(2, 2, prev.transpose().as_slice());
            riccati::solve_care_warm(&a, &b, &q, &r, &guess)?
        }
        None => riccati::solve_care(&a, &b, &q, &r)?,
    };
    Ok(Matrix2::new(p[(0, 0)], p[(0, 1)], p[(1, 0)], p[(1, 1)]))
}

pub fn care_residual(v: f64, weights: &LateralWeights, p: &Matrix2<f64>) -> f64 {
    let a = Matrix2::new(0.0, v, 0.0, 0.0);
    let b = nalgebra::Vector2::new(0.0, 1.0);
    let q = Matrix2::new(weights.q_offset, 0.0, 0.0, weights.q_heading);
    let res = p * a + a.transpose() * p - p * b * b.transpose() * p / weights.r_rate + q;
    res.amax()
}

pub fn lateral_gains(v: f64, weights: &LateralWeights, sign: FeedforwardSign) -> Result<LateralGains> {
    gains_from_p(v, weights, care_solve(v, weights)?, sign)
}

pub fn gains_from_p(
    v: f64,
    weights: &LateralWeights,
    p: Matrix2<f64>,
    sign: FeedforwardSign,
) -> Result<LateralGains> {
    let a = Matrix2::new(0.0, v, 0.0, 0.0);
    let b = nalgebra::Vector2::new(0.0, 1.0);
    let r_inv = 1.0 / weights.r_rate;
    let k_b_row = -(b.transpose() * p) * r_inv;
    let a_cl = a - b * b.transpose() * p * r_inv;
    let inv = a_cl
        .transpose()
        .try_inverse()
        .ok_or_else(|| Error::Riccati("closed-loop lateral matrix is singular".into()))?;
    let k_f_row = b.transpose() * inv * p * r_inv;
    let k_f_row = match sign {
        FeedforwardSign::Standard => k_f_row,
        FeedforwardSign::AsPrinted => -k_f_row,
    };
    Ok(LateralGains {
        p,
        k_b: [k_b_row[(0, 0)], k_b_row[(0, 1)]],
        k_f: [k_f_row[(0, 0)], k_f_row[(0, 1)]],
    })
}

/// Angular-rate command `k_b . [r, dtheta] + k_f . [0, -v kappa]`.
pub fn lateral_command(state: &CurvilinearState, gains: &LateralGains, kappa: f64) -> f64 {
    let drift = -state.v_tilde * kappa;
    gains.k_b[0] * state.r + gains.k_b[1] * state.dtheta + gains.k_f[1] * drift
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LateralPlant {
    /// Full trigonometric kinematics.
    #[default]
    Exact,
    /// The small-angle linearisation the controller is designed on.
    SmallAngle,
}

/// One forward-Euler step of the curvilinear kinematics.
pub fn lateral_step(
    state: &CurvilinearState,
    mu: f64,
    kappa: f64,
    dt: f64,
    plant: LateralPlant,
) -> CurvilinearState {
    let v = state.v_tilde;
    let (along, across, drift) = match plant {
        LateralPlant::Exact => {
            let c = state.dtheta.cos();
            (v * c, v * state.dtheta.sin(), v * c * kappa)
        }
        LateralPlant::SmallAngle => (v, v * state.dtheta, v * kappa),
    };
    CurvilinearState {
        s: state.s + dt * along,
        r: state.r + dt * across,
        dtheta: state.dtheta + dt * (mu - drift),
        v_tilde: v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn closed_form(v: f64, w: &LateralWeights) -> (f64, f64, f64) {
        let p12 = (w.q_offset * w.r_rate).sqrt();
        let p22 = (w.r_rate * (2.0 * v * p12 + w.q_heading)).sqrt();
        let p11 = p12 * p22 / (v * w.r_rate);
        (p11, p12, p22)
    }

    #[test]
    fn care_examples() {
        let w = LateralWeights::default();
        let p = care_solve(20.0, &w).unwrap();
        assert!((p[(0, 1)] - 1.0).abs() < 1e-9);
        assert!((p[(1, 1)] - 41f64.sqrt()).abs() < 1e-9);
        assert!((p[(0, 0)] - 0.320_156_211_871_642).abs() < 1e-9);
        assert!(care_residual(20.0, &w, &p) < 1e-8);

        let p = care_solve(10.0, &w).unwrap();
        let (p11, p12, p22) = closed_form(10.0, &w);
        assert!((p[(0, 0)] - p11).abs() < 1e-9);
        assert!((p[(0, 1)] - p12).abs() < 1e-9);
        assert!((p[(1, 1)] - p22).abs() < 1e-9);
        assert!((p22 - 4.582_575_694_955_84).abs() < 1e-12);
    }

    #[test]
    fn care_rejects_bad_inputs() {
        let w = LateralWeights::default();
        assert!(matches!(care_solve(0.0, &w), Err(Error::NotStabilizable(_))));
        assert!(matches!(care_solve(-3.0, &w), Err(Error::NotStabilizable(_))));
        let bad = LateralWeights { r_rate: 0.0, ..w };
        assert!(matches!(care_solve(20.0, &bad), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn feedback_gain_and_closed_loop() {
        let g = lateral_gains(20.0, &LateralWeights::default(), FeedforwardSign::Standard).unwrap();
        assert!((g.k_b[0] + 1.0).abs() < 1e-9);
        assert!((g.k_b[1] + 41f64.sqrt()).abs() < 1e-9);
        let a_cl = Matrix2::new(0.0, 20.0, g.k_b[0], g.k_b[1]);
        for ev in a_cl.complex_eigenvalues().iter() {
            assert!(ev.re < 0.0);
        }
    }

    #[test]
    fn feedforward_matches_explicit_inverse() {
        // Oracle: 2x2 inverse written out by hand.
        let v = 20.0;
        let (p11, p12, p22) = closed_form(v, &LateralWeights::default());
        // A_cl = A - B B^T P = [[0, v], [-p12, -p22]]; A_cl^T = [[0, -p12], [v, -p22]]
        let det = p12 * v;
        let inv = [[-p22 / det, p12 / det], [-v / det, 0.0]];
        // B^T inv P selects the second row of inv * P.
        let kf = [
            inv[1][0] * p11 + inv[1][1] * p12,
            inv[1][0] * p12 + inv[1][1] * p22,
        ];
        let g = lateral_gains(v, &LateralWeights::default(), FeedforwardSign::Standard).unwrap();
        assert!((g.k_f[0] - kf[0]).abs() < 1e-9);
        assert!((g.k_f[1] - kf[1]).abs() < 1e-9);
        let printed = lateral_gains(v, &LateralWeights::default(), FeedforwardSign::AsPrinted).unwrap();
        assert!((printed.k_f[1] + kf[1]).abs() < 1e-9);
    }

    #[test]
    fn command_examples() {
        let g = lateral_gains(20.0, &LateralWeights::default(), FeedforwardSign::Standard).unwrap();
        let centred = CurvilinearState { s: 0.0, r: 0.0, dtheta: 0.0, v_tilde: 20.0 };
        assert_eq!(lateral_command(&centred, &g, 0.0), 0.0);

        let offset = CurvilinearState { r: 1.0, ..centred };
        assert!((lateral_command(&offset, &g, 0.0) + 1.0).abs() < 1e-9);

        let kappa = 1.0 / 300.0;
        let mu = lateral_command(&centred, &g, kappa);
        assert!((mu - g.k_f[1] * (-1.0 / 15.0)).abs() < 1e-12);
        // The feedforward supplies exactly the rate needed to follow the arc.
        assert!((mu - 20.0 * kappa).abs() < 1e-9);
    }

    #[test]
    fn step_examples() {
        let s0 = CurvilinearState { s: 5.0, r: 0.0, dtheta: 0.0, v_tilde: 20.0 };
        let s1 = lateral_step(&s0, 0.0, 0.0, 0.001, LateralPlant::Exact);
        assert_eq!(s1, CurvilinearState { s: 5.0 + 0.02, ..s0 });

        let tilted = CurvilinearState { dtheta: 0.1, ..s0 };
        let s1 = lateral_step(&tilted, 0.0, 0.0, 0.001, LateralPlant::Exact);
        assert!((s1.r - 0.02 * 0.1f64.sin()).abs() < 1e-15);
        assert!((s1.r - 0.001997).abs() < 1e-6);
        assert_eq!(s1.dtheta, 0.1);

        let kappa = 1.0 / 300.0;
        let s1 = lateral_step(&s0, 20.0 * kappa, kappa, 0.001, LateralPlant::Exact);
        assert_eq!(s1.dtheta, 0.0);
    }

    #[test]
    fn global_pose_on_straight() {
        let path = PathGeometry {
            start: Pose::default(),
            segments: vec![PathSegment { length: 100.0, curvature: 0.0 }],
            merge_s: 50.0,
        };
        let st = CurvilinearState { s: 10.0, r: 0.0, dtheta: 0.0, v_tilde: 20.0 };
        assert_eq!(path.to_global(&st).unwrap(), Pose { x: 10.0, y: 0.0, heading: 0.0 });
        let st = CurvilinearState { r: 1.0, ..st };
        let p = path.to_global(&st).unwrap();
        assert!((p.x - 10.0).abs() < 1e-12 && (p.y - 1.0).abs() < 1e-12 && p.heading == 0.0);
        let st = CurvilinearState { s: 120.0, ..st };
        assert!(matches!(path.to_global(&st), Err(Error::OutOfPath { .. })));
    }

    #[test]
    fn global_pose_on_arc() {
        let path = PathGeometry {
            start: Pose::default(),
            segments: vec![PathSegment { length: PI * 300.0, curvature: 1.0 / 300.0 }],
            merge_s: 0.0,
        };
        let quarter = CurvilinearState { s: PI * 150.0, r: 0.0, dtheta: 0.0, v_tilde: 20.0 };
        let p = path.to_global(&quarter).unwrap();
        assert!((p.x - 300.0).abs() < 1e-9 && (p.y - 300.0).abs() < 1e-9);
        assert!((p.heading - PI / 2.0).abs() < 1e-12);

        let half = CurvilinearState { s: PI * 300.0, ..quarter };
        let p = path.to_global(&half).unwrap();
        // Origin reflected through the centre (0, 300).
        assert!(p.x.abs() < 1e-9 && (p.y - 600.0).abs() < 1e-9);
        assert!((p.heading - PI).abs() < 1e-12);
    }

    #[test]
    fn ramp_arc_puts_merge_at_origin() {
        let path = PathGeometry::ramp_arc(300.0, 300.0, 200.0).unwrap();
        let o = path.pose_at(path.merge_s).unwrap();
        assert!(o.x.abs() < 1e-9 && o.y.abs() < 1e-9 && o.heading.abs() < 1e-12);
        assert_eq!(path.curvature_at(10.0), 1.0 / 300.0);
        assert_eq!(path.curvature_at(300.0), 0.0);
        assert_eq!(path.curvature_at(-5.0), 1.0 / 300.0);
    }
}
