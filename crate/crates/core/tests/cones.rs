mod common;

use common::{gaussian_data, rng};
use cvxnn::arrangements::enumerate_exact;
use cvxnn::cones::{ChamberCone, DEFAULT_TOL};
use cvxnn::DataMatrix;
use nalgebra::DVector;
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn cones_of(x: &DataMatrix) -> Vec<ChamberCone> {
    enumerate_exact(x)
        .unwrap()
        .patterns
        .iter()
        .map(|h| ChamberCone::new(x, h.clone()).unwrap())
        .collect()
}

fn gaussian(r: &mut rand_chacha::ChaCha8Rng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| StandardNormal.sample(&mut *r))
}

/// Nearest point of the cone among rays on a fine angular grid (and 0).
fn grid_projection(cone: &ChamberCone, c: &DVector<f64>) -> DVector<f64> {
    let steps = 200_000;
    let mut best = DVector::zeros(2);
    let mut best_dist = c.norm_squared();
    for k in 0..steps {
        let t = 2.0 * std::f64::consts::PI * k as f64 / steps as f64;
        let ray = DVector::from_row_slice(&[t.cos(), t.sin()]);
        if !cone.contains(&ray, 1e-12) {
            continue;
        }
        let p = &ray * ray.dot(c).max(0.0);
        let dist = (c - &p).norm_squared();
        if dist < best_dist {
            best_dist = dist;
            best = p;
        }
    }
    if cone.contains(c, 0.0) {
        return c.clone();
    }
    best
}

#[test]
fn planar_projection_matches_angular_grid() {
    let mut r = rng(11);
    let x = gaussian_data(&mut r, 2, 5);
    for cone in cones_of(&x) {
        for _ in 0..4 {
            let c = gaussian(&mut r, 2);
            let p = cone.project(&c, DEFAULT_TOL).unwrap();
            let oracle = grid_projection(&cone, &c);
            // grid spacing 3e-5 rad bounds the oracle error
            assert!((&p - &oracle).norm() < 1e-4 * (1.0 + c.norm()), "{p} vs {oracle}");
            let dual = cone.dual_norm(&c).unwrap();
            assert!((dual - oracle.norm()).abs() < 1e-4 * (1.0 + c.norm()));
        }
    }
}

#[test]
fn projection_satisfies_variational_inequality() {
    let mut r = rng(12);
    let x = gaussian_data(&mut r, 3, 6);
    for cone in cones_of(&x) {
        // feasible points by rejection
        let members: Vec<DVector<f64>> = (0..200_000)
            .map(|_| gaussian(&mut r, 3))
            .filter(|z| cone.contains(z, 0.0))
            .take(200)
            .collect();
        for _ in 0..3 {
            let c = gaussian(&mut r, 3) * 3.0;
            let p = cone.project(&c, DEFAULT_TOL).unwrap();
            assert!(cone.contains(&p, 1e-9));
            let resid = &c - &p;
            assert!(resid.dot(&p).abs() < 1e-9 * (1.0 + c.norm_squared()));
            for z in &members {
                assert!(resid.dot(&(z - &p)) <= 1e-9 * (1.0 + c.norm() * z.norm()));
            }
        }
    }
}

#[test]
fn dykstra_and_active_set_agree() {
    let mut r = rng(13);
    let x = gaussian_data(&mut r, 3, 7);
    for cone in cones_of(&x).iter().take(10) {
        let c = gaussian(&mut r, 3);
        let a = cone.project(&c, 1e-10).unwrap();
        let b = cone.project_dykstra(&c, 1e-10, 100_000).unwrap();
        assert!((a - b).norm() < 1e-6);
    }
}

#[test]
fn face_enumeration_agrees_with_active_set() {
    let mut r = rng(14);
    let x = gaussian_data(&mut r, 2, 6);
    for cone in cones_of(&x) {
        let c = gaussian(&mut r, 2);
        let a = cone.project(&c, DEFAULT_TOL).unwrap();
        let b = cone.project_by_faces(&c).unwrap();
        assert!((a - b).norm() < 1e-9);
    }
}

fn small_instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, usize)> {
    (2usize..=3, 3usize..=6).prop_flat_map(|(d, n)| {
        (
            prop::collection::vec(prop::collection::vec(-3.0f64..3.0, d), n),
            prop::collection::vec(-5.0f64..5.0, d),
            0usize..64,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_feasible_idempotent_and_orthogonal((samples, c, pick) in small_instance()) {
        let x = DataMatrix::from_samples(&samples).unwrap();
        let cones = cones_of(&x);
        let cone = &cones[pick % cones.len()];
        let c = DVector::from_vec(c);
        let p = cone.project(&c, DEFAULT_TOL).unwrap();
        let scale = 1.0 + c.norm();
        prop_assert!(cone.contains(&p, 1e-7 * scale));
        let again = cone.project(&p, DEFAULT_TOL).unwrap();
        prop_assert!((&again - &p).norm() <= 1e-7 * scale);
        // Pythagoras for the projection onto a closed convex cone
        let q = &c - &p;
        prop_assert!((c.norm_squared() - p.norm_squared() - q.norm_squared()).abs() <= 1e-6 * scale * scale);
        prop_assert!(p.norm() <= c.norm() * (1.0 + 1e-12));
    }
}
