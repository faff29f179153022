//! Quaternions as `[w, x, y, z]` arrays.

pub const IDENTITY: [f64; 4] = [1.0, 0.0, 0.0, 0.0];

pub fn norm(q: [f64; 4]) -> f64 {
    dot(q, q).sqrt()
}

pub fn dot(a: [f64; 4], b: [f64; 4]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

pub fn normalized(q: [f64; 4]) -> [f64; 4] {
    let n = norm(q);
    [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
}

/// Gradient of `q / |q|` pulled back to `q`.
pub fn normalize_backward(q: [f64; 4], g: [f64; 4]) -> [f64; 4] {
    let n = norm(q);
    let u = [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
    let d = dot(u, g);
    [
        (g[0] - u[0] * d) / n,
        (g[1] - u[1] * d) / n,
        (g[2] - u[2] * d) / n,
        (g[3] - u[3] * d) / n,
    ]
}

pub fn neg(q: [f64; 4]) -> [f64; 4] {
    [-q[0], -q[1], -q[2], -q[3]]
}

/// Hamilton product.
pub fn mul(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

/// Unit quaternion rotating by `angle` radians about `axis`.
pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> [f64; 4] {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let (s, c) = (0.5 * angle).sin_cos();
    [c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n]
}

/// Rotation angle in radians between two unit quaternions (double cover aware).
pub fn angle_between(a: [f64; 4], b: [f64; 4]) -> f64 {
    2.0 * dot(a, b).abs().min(1.0).acos()
}

/// Rotation matrix of `q / |q|`, acting on column vectors.
pub fn to_matrix(q: [f64; 4]) -> nalgebra::Matrix3<f64> {
    let [w, x, y, z] = normalized(q);
    nalgebra::Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Gradient of [`to_matrix`] pulled back to `q` (normalization included).
pub fn to_matrix_backward(q: [f64; 4], g: &nalgebra::Matrix3<f64>) -> [f64; 4] {
    let [w, x, y, z] = normalized(q);
    let gu = [
        2.0 * (-z * g[(0, 1)] + y * g[(0, 2)] + z * g[(1, 0)] - x * g[(1, 2)] - y * g[(2, 0)] + x * g[(2, 1)]),
        2.0 * (y * g[(0, 1)] + z * g[(0, 2)] + y * g[(1, 0)] - 2.0 * x * g[(1, 1)] - w * g[(1, 2)]
            + z * g[(2, 0)]
            + w * g[(2, 1)]
            - 2.0 * x * g[(2, 2)]),
        2.0 * (-2.0 * y * g[(0, 0)] + x * g[(0, 1)] + w * g[(0, 2)] + x * g[(1, 0)] + z * g[(1, 2)]
            - w * g[(2, 0)]
            + z * g[(2, 1)]
            - 2.0 * y * g[(2, 2)]),
        2.0 * (-2.0 * z * g[(0, 0)] - w * g[(0, 1)] + x * g[(0, 2)] + w * g[(1, 0)] - 2.0 * z * g[(1, 1)]
            + y * g[(1, 2)]
            + x * g[(2, 0)]
            + y * g[(2, 1)]),
    ];
    normalize_backward(q, gu)
}

/// Unit quaternion of a proper rotation matrix, with `w >= 0`.
pub fn from_matrix(m: &nalgebra::Matrix3<f64>) -> [f64; 4] {
    let tr = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
    let q = if tr > 0.0 {
        let s = (tr + 1.0).sqrt() * 2.0;
        [
            0.25 * s,
            (m[(2, 1)] - m[(1, 2)]) / s,
            (m[(0, 2)] - m[(2, 0)]) / s,
            (m[(1, 0)] - m[(0, 1)]) / s,
        ]
    } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
        let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
        [
            (m[(2, 1)] - m[(1, 2)]) / s,
            0.25 * s,
            (m[(0, 1)] + m[(1, 0)]) / s,
            (m[(0, 2)] + m[(2, 0)]) / s,
        ]
    } else if m[(1, 1)] > m[(2, 2)] {
        let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
        [
            (m[(0, 2)] - m[(2, 0)]) / s,
            (m[(0, 1)] + m[(1, 0)]) / s,
            0.25 * s,
            (m[(1, 2)] + m[(2, 1)]) / s,
        ]
    } else {
        let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
        [
            (m[(1, 0)] - m[(0, 1)]) / s,
            (m[(0, 2)] + m[(2, 0)]) / s,
            (m[(1, 2)] + m[(2, 1)]) / s,
            0.25 * s,
        ]
    };
    let q = normalized(q);
    if q[0] < 0.0 {
        neg(q)
    } else {
        q
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::grad_check_fn;
    use nalgebra::{Matrix3, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quarter_turn_about_z() {
        let q = from_axis_angle([0.0, 0.0, 1.0], std::f64::consts::FRAC_PI_2);
        let v = to_matrix(q) * Vector3::new(1.0, 0.0, 0.0);
        assert!((v - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
        assert_eq!(to_matrix(IDENTITY), Matrix3::identity());
        assert!((to_matrix(q) - to_matrix(neg(q))).norm() < 1e-15);
    }

    #[test]
    fn hamilton_product_composes_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let a = normalized(std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
            let b = normalized(std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
            assert!((to_matrix(mul(a, b)) - to_matrix(a) * to_matrix(b)).norm() < 1e-12);
        }
    }

    #[test]
    fn matrix_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let mut q = normalized(std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
            if q[0] < 0.0 {
                q = neg(q);
            }
            let back = from_matrix(&to_matrix(q));
            assert!(angle_between(q, back) < 1e-7, "{q:?} {back:?}");
            assert!((to_matrix(back) - to_matrix(q)).norm() < 1e-12);
        }
    }

    #[test]
    fn matrix_gradient() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let r = grad_check_fn(&q, 1e-5, |x| {
                let q = [x[0], x[1], x[2], x[3]];
                Ok((to_matrix(q).component_mul(&w).sum(), to_matrix_backward(q, &w).to_vec()))
            })
            .unwrap();
            assert!(r.passes(1e-4), "{r:?}");
        }
    }
}
