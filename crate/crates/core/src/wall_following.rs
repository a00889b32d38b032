//! Hard and soft wall-following around the nearest obstacle.
//!
//! Near an obstacle the free space splits into two sub-areas. In area A the
//! attract+repulse resultant points away from the goal and the robot slides
//! along a surface tangent. In area B the repulsion opposes the goal and the
//! heading is blended between the resultant and the tangent.

use serde::{Deserialize, Serialize};

use crate::apf::ForceBreakdown;
use crate::error::{Error, Result};
use crate::geometry::{Vec2, EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubArea {
    Free,
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentPair {
    pub n1: Vec2,
    pub n2: Vec2,
}

pub fn classify_subarea(f_a: Vec2, f_r: Vec2, f_ar: Vec2) -> SubArea {
    if f_ar.dot(f_a) < 0.0 {
        SubArea::A
    } else if f_r.dot(f_a) < 0.0 {
        SubArea::B
    } else {
        SubArea::Free
    }
}

/// Surface tangents at the nearest point: `n1` is the outward normal turned
/// counter-clockwise, `n2 = -n1`.
pub fn tangent_pair(position: Vec2, surface_point: Vec2) -> Result<TangentPair> {
    let normal = (position - surface_point)
        .unit()
        .ok_or(Error::Degenerate("robot sits on the obstacle surface"))?;
    let n1 = normal.perp();
    Ok(TangentPair { n1, n2: -n1 })
}

/// Picks the tangent closer in angle to `f_in` when it is stronger than
/// `threshold`, otherwise the one closer to the current heading. Exact ties
/// go to `n1`.
pub fn select_tangent(pair: TangentPair, heading: Vec2, f_in: Vec2, threshold: f64) -> Vec2 {
    let reference = if f_in.norm() > threshold { f_in } else { heading };
    // n2 = -n1, so the smaller angle is the one with non-negative projection
    if pair.n1.dot(reference) >= 0.0 {
        pair.n1
    } else {
        pair.n2
    }
}

/// Blend of the resultant and the tangent, weighted by twice the repulsion
/// magnitude, normalised. Falls back to the tangent when the blend vanishes.
pub fn soft_force(f_ar: Vec2, f_r: Vec2, n_sel: Vec2) -> Vec2 {
    let blended = f_ar + n_sel * (2.0 * f_r.norm());
    blended.unit().unwrap_or(n_sel)
}

/// Final unit heading for one robot.
///
/// `tangents` is `None` when no obstacle is sensed; then only the free-space
/// rule can apply because the repulsion is zero.
pub fn plan_direction(forces: &ForceBreakdown, tangents: Option<TangentPair>, heading: Vec2, threshold: f64) -> Vec2 {
    let area = if forces.f_a.norm() < EPS {
        SubArea::Free
    } else {
        classify_subarea(forces.f_a, forces.f_r, forces.f_ar)
    };
    match (area, tangents) {
        (SubArea::A, Some(pair)) => select_tangent(pair, heading, forces.f_in, threshold),
        (SubArea::B, Some(pair)) => {
            let n = select_tangent(pair, heading, forces.f_in, threshold);
            soft_force(forces.f_ar, forces.f_r, n)
        }
        _ => forces.f_total.unit().unwrap_or(heading),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apf::resultant;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn close(a: Vec2, b: Vec2, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn classify_examples() {
        let fa = Vec2::new(1.0, 0.0);
        let fr = Vec2::new(-2.0, 0.0);
        assert_eq!(classify_subarea(fa, fr, fa + fr), SubArea::A);
        let fr = Vec2::new(-0.5, 0.5);
        assert_eq!(classify_subarea(fa, fr, fa + fr), SubArea::B);
        assert_eq!(classify_subarea(fa, Vec2::ZERO, fa), SubArea::Free);
    }

    #[test]
    fn tangent_examples() {
        let t = tangent_pair(Vec2::new(2.0, 0.0), Vec2::new(1.0, 0.0)).unwrap();
        assert_eq!((t.n1, t.n2), (Vec2::new(0.0, 1.0), Vec2::new(0.0, -1.0)));
        let t = tangent_pair(Vec2::new(0.0, 2.0), Vec2::new(0.0, 1.0)).unwrap();
        assert!(close(t.n1, Vec2::new(-1.0, 0.0), 1e-15) && close(t.n2, Vec2::new(1.0, 0.0), 1e-15));
        let rot = PI / 4.0;
        let t45 = tangent_pair(Vec2::new(2.0, 0.0).rotate(rot), Vec2::new(1.0, 0.0).rotate(rot)).unwrap();
        assert!(close(t45.n1, Vec2::new(0.0, 1.0).rotate(rot), 1e-12));
        assert!(tangent_pair(Vec2::new(1.0, 1.0), Vec2::new(1.0, 1.0)).is_err());
    }

    #[test]
    fn select_examples() {
        let pair = TangentPair {
            n1: Vec2::new(0.0, 1.0),
            n2: Vec2::new(0.0, -1.0),
        };
        let heading = Vec2::new(1.0, 0.0);
        assert_eq!(select_tangent(pair, heading, Vec2::new(0.5, -1.2), 1.0), pair.n2);
        let small = Vec2::new(0.2, 0.0);
        assert_eq!(select_tangent(pair, Vec2::new(0.7, 0.7), small, 1.0), pair.n1);
        assert_eq!(select_tangent(pair, pair.n2, small, 1.0), pair.n2);
        // heading perpendicular to both tangents: tie resolves to n1
        assert_eq!(select_tangent(pair, heading, Vec2::ZERO, 1.0), pair.n1);
    }

    #[test]
    fn soft_examples() {
        let n = Vec2::new(0.0, 1.0);
        assert_eq!(soft_force(Vec2::new(1.0, 0.0), Vec2::ZERO, n), Vec2::new(1.0, 0.0));
        let s = soft_force(Vec2::new(0.0, 1.0), Vec2::new(0.5, 0.0), Vec2::new(1.0, 0.0));
        assert!(close(s, Vec2::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2), 1e-15));
        let s = soft_force(Vec2::new(0.0, 1.0), Vec2::new(-100.0, 0.0), Vec2::new(1.0, 0.0));
        assert!(s.angle_between(Vec2::new(1.0, 0.0)) < 0.01);
        // f_ar = -2|f_r| n cancels exactly
        let s = soft_force(Vec2::new(-1.0, 0.0), Vec2::new(0.0, 0.5), Vec2::new(1.0, 0.0));
        assert_eq!(s, Vec2::new(1.0, 0.0));
    }

    #[test]
    fn plan_dispatch() {
        let heading = Vec2::new(1.0, 0.0);
        let free = resultant(Vec2::new(1.0, 0.0), Vec2::ZERO, Vec2::new(2.0, 4.0));
        assert!(close(
            plan_direction(&free, None, heading, 1.0),
            Vec2::new(0.6, 0.8),
            1e-15
        ));

        let pair = TangentPair {
            n1: Vec2::new(0.0, 1.0),
            n2: Vec2::new(0.0, -1.0),
        };
        let a = resultant(Vec2::new(1.0, 0.0), Vec2::new(-2.0, 0.0), Vec2::ZERO);
        let dir = plan_direction(&a, Some(pair), heading, 1.0);
        assert!(dir == pair.n1 || dir == pair.n2);

        let b = resultant(Vec2::new(1.0, 0.0), Vec2::new(-0.5, 0.5), Vec2::new(0.0, -0.2));
        let n = select_tangent(pair, heading, b.f_in, 1.0);
        assert_eq!(
            plan_direction(&b, Some(pair), heading, 1.0),
            soft_force(b.f_ar, b.f_r, n)
        );
    }

    fn v(len: f64, ang: f64) -> Vec2 {
        Vec2::from_angle(ang) * len
    }

    proptest! {
        #[test]
        fn soft_force_is_unit(
            a in 0.0..5.0f64, aa in -PI..PI, r in 0.0..5.0f64, ra in -PI..PI, na in -PI..PI,
        ) {
            let s = soft_force(v(a, aa), v(r, ra), Vec2::from_angle(na));
            prop_assert!((s.norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn tangent_choice_ignores_f_in_scale(
            fa in -PI..PI, fl in 1.01..5.0f64, c in 1.0..100.0f64, na in -PI..PI, ha in -PI..PI,
        ) {
            let pair = TangentPair { n1: Vec2::from_angle(na), n2: -Vec2::from_angle(na) };
            let f_in = v(fl, fa);
            let h = Vec2::from_angle(ha);
            prop_assert_eq!(select_tangent(pair, h, f_in, 1.0), select_tangent(pair, h, f_in * c, 1.0));
        }

        #[test]
        fn on_b_boundary_plan_matches_resultant(
            quarter in 0..4usize, r in 0.0..5.0f64, side in proptest::bool::ANY, ha in -PI..PI,
        ) {
            // axis-aligned so that f_r . f_a is exactly zero
            let f_a = (0..quarter).fold(Vec2::new(1.0, 0.0), |f, _| f.perp());
            let f_r = if side { f_a.perp() * r } else { -f_a.perp() * r };
            let forces = resultant(f_a, f_r, Vec2::ZERO);
            let pair = TangentPair { n1: f_a, n2: -f_a };
            let dir = plan_direction(&forces, Some(pair), Vec2::from_angle(ha), 1.0);
            prop_assert!(close(dir, forces.f_ar.unit().unwrap(), 1e-6));
        }
    }
}
