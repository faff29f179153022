use nalgebra::Matrix4;

use super::quat;
use super::{Gaussian4D, Gaussian4DGrad};
use crate::error::{Error, Result};

const UNIT_TOL: f64 = 1e-6;

// Row-major (component, sign) tables of the left- and right-isoclinic
// matrices; `left[k]` is entry (k / 4, k % 4) of L(q).
#[rustfmt::skip]
const LEFT: [(usize, f64); 16] = [
    (0, 1.0), (1, -1.0), (2, -1.0), (3, -1.0),
    (1, 1.0), (0, 1.0), (3, -1.0), (2, 1.0),
    (2, 1.0), (3, 1.0), (0, 1.0), (1, -1.0),
    (3, 1.0), (2, -1.0), (1, 1.0), (0, 1.0),
];
#[rustfmt::skip]
const RIGHT: [(usize, f64); 16] = [
    (0, 1.0), (1, 1.0), (2, 1.0), (3, 1.0),
    (1, -1.0), (0, 1.0), (3, -1.0), (2, 1.0),
    (2, -1.0), (3, 1.0), (0, 1.0), (1, -1.0),
    (3, -1.0), (2, -1.0), (1, 1.0), (0, 1.0),
];

fn from_table(table: &[(usize, f64); 16], q: [f64; 4]) -> Matrix4<f64> {
    Matrix4::from_fn(|r, c| {
        let (i, s) = table[r * 4 + c];
        if s > 0.0 {
            q[i]
        } else {
            -q[i]
        }
    })
}

fn table_backward(table: &[(usize, f64); 16], g: &Matrix4<f64>) -> [f64; 4] {
    let mut out = [0.0; 4];
    for r in 0..4 {
        for c in 0..4 {
            let (i, s) = table[r * 4 + c];
            out[i] += s * g[(r, c)];
        }
    }
    out
}

/// `L(q_l) R(q_r)` without any normalization check.
pub fn rotation_from_pair(q_l: [f64; 4], q_r: [f64; 4]) -> Matrix4<f64> {
    from_table(&LEFT, q_l) * from_table(&RIGHT, q_r)
}

pub fn rotation_from_pair_backward(
    q_l: [f64; 4],
    q_r: [f64; 4],
    g: &Matrix4<f64>,
) -> ([f64; 4], [f64; 4]) {
    let l = from_table(&LEFT, q_l);
    let r = from_table(&RIGHT, q_r);
    let gl = g * r.transpose();
    let gr = l.transpose() * g;
    (table_backward(&LEFT, &gl), table_backward(&RIGHT, &gr))
}

/// 4D rotation from a pair of unit quaternions.
pub fn rotation4d(q_l: [f64; 4], q_r: [f64; 4]) -> Result<Matrix4<f64>> {
    for q in [q_l, q_r] {
        let n = quat::norm(q);
        if !((n - 1.0).abs() <= UNIT_TOL) {
            return Err(Error::NonUnitQuaternion { norm: n });
        }
    }
    Ok(rotation_from_pair(q_l, q_r))
}

/// `R diag(exp(2 s)) R^T`, with the quaternions normalized first.
pub fn covariance4d(g: &Gaussian4D) -> Matrix4<f64> {
    let rot = rotation_from_pair(quat::normalized(g.q_l), quat::normalized(g.q_r));
    let d = Matrix4::from_diagonal(&nalgebra::Vector4::from_fn(|i, _| (2.0 * g.log_scales[i]).exp()));
    rot * d * rot.transpose()
}

/// Pull `dL/dSigma` back to the rotation and scale parameters of `g`.
pub fn covariance4d_backward(g: &Gaussian4D, g_sigma: &Matrix4<f64>) -> Gaussian4DGrad {
    let (ql, qr) = (quat::normalized(g.q_l), quat::normalized(g.q_r));
    let rot = rotation_from_pair(ql, qr);
    let dvec = nalgebra::Vector4::from_fn(|i, _| (2.0 * g.log_scales[i]).exp());
    let d = Matrix4::from_diagonal(&dvec);
    let sym = g_sigma + g_sigma.transpose();
    let g_rot = sym * rot * d;
    let inner = rot.transpose() * g_sigma * rot;
    let mut out = Gaussian4DGrad::default();
    for k in 0..4 {
        out.log_scales[k] = 2.0 * dvec[k] * inner[(k, k)];
    }
    let (gl, gr) = rotation_from_pair_backward(ql, qr, &g_rot);
    out.q_l = quat::normalize_backward(g.q_l, gl);
    out.q_r = quat::normalize_backward(g.q_r, gr);
    out
}

/// Inverse of [`rotation_from_pair`] for a proper rotation. In quaternion
/// form `m x = a x conj(b)`, so column 0 is `a conj(b)` and
/// `m e_i conj(a conj(b)) = a e_i conj(a)` is a 3D rotation by `a`.
/// The pair is unique up to a common sign.
pub fn pair_from_rotation(m: &Matrix4<f64>) -> Result<([f64; 4], [f64; 4])> {
    if !(m.determinant() > 0.0) {
        return Err(Error::Config("matrix is not a proper rotation".into()));
    }
    let col = |j: usize| [m[(0, j)], m[(1, j)], m[(2, j)], m[(3, j)]];
    let ab = col(0);
    let ab_conj = [ab[0], -ab[1], -ab[2], -ab[3]];
    let mut c = nalgebra::Matrix3::zeros();
    for i in 1..4 {
        let v = quat::mul(col(i), ab_conj);
        for r in 0..3 {
            c[(r, i - 1)] = v[r + 1];
        }
    }
    let a = quat::from_matrix(&c);
    let b_conj = quat::mul([a[0], -a[1], -a[2], -a[3]], ab);
    Ok((a, quat::normalized([b_conj[0], -b_conj[1], -b_conj[2], -b_conj[3]])))
}

/// Log-scales and rotation pair with `R diag(exp(2 s)) R^T = sigma` for a
/// symmetric positive definite `sigma`.
pub fn factor_covariance(sigma: &Matrix4<f64>) -> Result<([f64; 4], [f64; 4], [f64; 4])> {
    let eig = nalgebra::SymmetricEigen::new(*sigma);
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Config("covariance is not positive definite".into()));
    }
    let mut u = eig.eigenvectors;
    if u.determinant() < 0.0 {
        u.column_mut(3).neg_mut();
    }
    let (q_l, q_r) = pair_from_rotation(&u)?;
    let log_scales = std::array::from_fn(|i| 0.5 * eig.eigenvalues[i].ln());
    Ok((log_scales, q_l, q_r))
}
