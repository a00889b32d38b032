//! Attractive, repulsive and inter-robot forces of the potential field.
//!
//! Forces are dimensionless direction generators. The simulator only uses
//! the direction of their superposition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{RobotState, SurfaceHit, Vec2, EPS};

/// The two field scales the policy tunes online.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApfParams {
    /// Obstacle repulsion scale.
    pub eta: f64,
    /// Multi-robot compactness; neighbours settle at distance `2 * lambda`.
    pub lambda: f64,
}

impl ApfParams {
    /// Hand-tuned baseline field.
    pub const VANILLA: ApfParams = ApfParams { eta: 0.05, lambda: 2.0 };
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ForceBreakdown {
    pub f_a: Vec2,
    pub f_r: Vec2,
    pub f_in: Vec2,
    /// `f_a + f_r`, the input of the wall-following classifier.
    pub f_ar: Vec2,
    pub f_total: Vec2,
}

/// Unit pull toward the goal; zero once the robot sits on it.
pub fn attractive_force(position: Vec2, goal: Vec2) -> Vec2 {
    (goal - position).unit().unwrap_or(Vec2::ZERO)
}

/// Push away from the nearest obstacle surface point.
///
/// Magnitude `eta * (1/d - 1/rho) / d^2`, zero beyond `rho`.
pub fn repulsive_force(position: Vec2, nearest: SurfaceHit, eta: f64, rho: f64) -> Result<Vec2> {
    let d = nearest.distance;
    if d <= 0.0 {
        return Err(Error::Penetration { depth: -d });
    }
    if d > rho || eta == 0.0 {
        return Ok(Vec2::ZERO);
    }
    let away = (position - nearest.point) / d;
    Ok(away * (eta * (1.0 / d - 1.0 / rho) / (d * d)))
}

/// Sum over visible neighbours of `(0.5 - lambda/d) * unit(p_j - p_i)`.
///
/// Repels below `d = 2 lambda` and pulls together above it.
pub fn inter_robot_force(i: usize, robots: &[RobotState], neighbors: &[usize], lambda: f64) -> Result<Vec2> {
    let origin = robots[i].position;
    let mut force = Vec2::ZERO;
    for &j in neighbors {
        let offset = robots[j].position - origin;
        let d = offset.norm();
        if d < EPS {
            return Err(Error::CoincidentRobots(i, j));
        }
        force += offset * ((0.5 - lambda / d) / d);
    }
    Ok(force)
}

pub fn resultant(f_a: Vec2, f_r: Vec2, f_in: Vec2) -> ForceBreakdown {
    let f_ar = f_a + f_r;
    ForceBreakdown {
        f_a,
        f_r,
        f_in,
        f_ar,
        f_total: f_ar + f_in,
    }
}

/// Evaluates all three forces for robot `i`.
pub fn compute_forces(
    i: usize,
    robots: &[RobotState],
    nearest: Option<SurfaceHit>,
    neighbors: &[usize],
    params: ApfParams,
    rho: f64,
) -> Result<ForceBreakdown> {
    let robot = &robots[i];
    let f_a = attractive_force(robot.position, robot.goal);
    let f_r = match nearest {
        Some(hit) => repulsive_force(robot.position, hit, params.eta, rho)?,
        None => Vec2::ZERO,
    };
    let f_in = inter_robot_force(i, robots, neighbors, params.lambda)?;
    Ok(resultant(f_a, f_r, f_in))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn close(a: Vec2, b: Vec2, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    fn robots(points: &[Vec2]) -> Vec<RobotState> {
        points
            .iter()
            .enumerate()
            .map(|(k, &p)| RobotState::new(k, p, p + Vec2::new(1.0, 0.0)))
            .collect()
    }

    #[test]
    fn attraction_is_unit() {
        assert_eq!(attractive_force(Vec2::ZERO, Vec2::new(3.0, 0.0)), Vec2::new(1.0, 0.0));
        assert_eq!(
            attractive_force(Vec2::new(1.0, 1.0), Vec2::new(1.0, 5.0)),
            Vec2::new(0.0, 1.0)
        );
        assert!(close(
            attractive_force(Vec2::ZERO, Vec2::new(3.0, 4.0)),
            Vec2::new(0.6, 0.8),
            1e-15
        ));
        assert_eq!(attractive_force(Vec2::new(2.0, 2.0), Vec2::new(2.0, 2.0)), Vec2::ZERO);
    }

    #[test]
    fn repulsion_values() {
        let hit = |d: f64| SurfaceHit {
            point: Vec2::new(1.0 - d, 0.0),
            distance: d,
        };
        let p = Vec2::new(1.0, 0.0);
        assert_eq!(repulsive_force(p, hit(10.0), 0.05, 10.0).unwrap(), Vec2::ZERO);
        let f = repulsive_force(p, hit(1.0), 0.05, 10.0).unwrap();
        assert!(close(f, Vec2::new(0.045, 0.0), 1e-15));
        assert_eq!(repulsive_force(p, hit(0.3), 0.0, 10.0).unwrap(), Vec2::ZERO);
        assert!(matches!(
            repulsive_force(p, hit(0.0), 0.05, 10.0),
            Err(Error::Penetration { .. })
        ));
    }

    #[test]
    fn repulsion_monotone_in_distance() {
        let p = Vec2::ZERO;
        let mut last = f64::INFINITY;
        for k in 1..1000 {
            let d = 10.0 * k as f64 / 1000.0;
            let hit = SurfaceHit {
                point: Vec2::new(-d, 0.0),
                distance: d,
            };
            let m = repulsive_force(p, hit, 0.05, 10.0).unwrap().norm();
            assert!(m < last, "not decreasing at d={d}");
            last = m;
        }
    }

    #[test]
    fn inter_robot_values() {
        let rs = robots(&[Vec2::ZERO, Vec2::new(4.0, 0.0)]);
        assert_eq!(inter_robot_force(0, &rs, &[1], 2.0).unwrap(), Vec2::ZERO);
        let rs = robots(&[Vec2::ZERO, Vec2::new(2.0, 0.0)]);
        assert!(close(
            inter_robot_force(0, &rs, &[1], 2.0).unwrap(),
            Vec2::new(-0.5, 0.0),
            1e-15
        ));
        let rs = robots(&[Vec2::ZERO, Vec2::new(5.0, 0.0)]);
        assert!(close(
            inter_robot_force(0, &rs, &[1], 2.0).unwrap(),
            Vec2::new(0.1, 0.0),
            1e-15
        ));
        assert_eq!(inter_robot_force(0, &rs, &[], 2.0).unwrap(), Vec2::ZERO);
        let rs = robots(&[Vec2::ZERO, Vec2::ZERO]);
        assert!(matches!(
            inter_robot_force(0, &rs, &[1], 2.0),
            Err(Error::CoincidentRobots(0, 1))
        ));
    }

    #[test]
    fn resultant_sums() {
        let b = resultant(Vec2::new(1.0, 0.0), Vec2::ZERO, Vec2::ZERO);
        assert_eq!(b.f_total, Vec2::new(1.0, 0.0));
        let b = resultant(Vec2::new(1.0, 0.0), Vec2::new(-2.0, 0.0), Vec2::ZERO);
        assert_eq!(b.f_ar, Vec2::new(-1.0, 0.0));
        assert_eq!(b.f_total, Vec2::new(-1.0, 0.0));
        let b = resultant(Vec2::new(1.0, 0.0), Vec2::new(-0.5, 0.5), Vec2::new(0.0, -0.2));
        assert!(close(b.f_total, Vec2::new(0.5, 0.3), 1e-15));
    }

    #[test]
    fn ring_at_equilibrium_distance_is_force_free() {
        // neighbours on a circle of radius 2*lambda around robot 0
        let lambda = 1.3;
        let mut pts = vec![Vec2::ZERO];
        pts.extend((0..5).map(|k| Vec2::from_angle(k as f64 * 1.1) * (2.0 * lambda)));
        let rs = robots(&pts);
        let f = inter_robot_force(0, &rs, &[1, 2, 3, 4, 5], lambda).unwrap();
        assert!(f.norm() < 1e-15);
    }

    proptest! {
        #[test]
        fn forces_rotate_with_the_world(
            theta in -PI..PI,
            px in -3.0..3.0f64, py in -3.0..3.0f64,
            gx in -9.0..9.0f64, gy in -9.0..9.0f64,
            nx in -3.0..3.0f64, ny in -3.0..3.0f64,
            d in 0.05..9.0f64, eta in 0.0..0.1f64, lambda in 0.0..5.0f64,
        ) {
            let p = Vec2::new(px, py);
            let q = Vec2::new(nx, ny);
            prop_assume!(p.distance(q) > 1e-3 && p.distance(Vec2::new(gx, gy)) > 1e-3);
            let surface = p + Vec2::new(0.6, -0.8) * d;
            let build = |rot: f64| {
                let mut rs = robots(&[p.rotate(rot), q.rotate(rot)]);
                rs[0].goal = Vec2::new(gx, gy).rotate(rot);
                let hit = SurfaceHit { point: surface.rotate(rot), distance: d };
                compute_forces(0, &rs, Some(hit), &[1], ApfParams { eta, lambda }, 10.0).unwrap()
            };
            let base = build(0.0);
            let turned = build(theta);
            for (a, b) in [
                (base.f_a, turned.f_a), (base.f_r, turned.f_r),
                (base.f_in, turned.f_in), (base.f_total, turned.f_total),
            ] {
                prop_assert!(close(a.rotate(theta), b, 1e-9 * (1.0 + a.norm())));
            }
        }

        #[test]
        fn pairwise_forces_are_antisymmetric(
            ax in -5.0..5.0f64, ay in -5.0..5.0f64,
            bx in -5.0..5.0f64, by in -5.0..5.0f64, lambda in 0.0..5.0f64,
        ) {
            let rs = robots(&[Vec2::new(ax, ay), Vec2::new(bx, by)]);
            prop_assume!(rs[0].position.distance(rs[1].position) > 1e-6);
            let fi = inter_robot_force(0, &rs, &[1], lambda).unwrap();
            let fj = inter_robot_force(1, &rs, &[0], lambda).unwrap();
            prop_assert!(close(fi, -fj, 1e-12 * (1.0 + fi.norm())));
        }

        #[test]
        fn breakdown_identities(
            fx in -5.0..5.0f64, fy in -5.0..5.0f64, rx in -5.0..5.0f64, ry in -5.0..5.0f64,
        ) {
            let b = resultant(Vec2::new(fx, fy), Vec2::new(rx, ry), Vec2::ZERO);
            prop_assert_eq!(b.f_ar, b.f_a + b.f_r);
        }
    }
}
