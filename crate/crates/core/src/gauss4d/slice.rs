use nalgebra::{Matrix3, Matrix4, Vector3};

use super::rotation::{covariance4d, covariance4d_backward};
use super::{sigmoid, Gaussian4D, Gaussian4DGrad};
use crate::error::{Error, Result};

/// A 4D Gaussian conditioned on a time value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sliced3D {
    pub mean3: Vector3<f64>,
    pub cov3: Matrix3<f64>,
    /// `exp(-(t - mu_t)^2 / (2 Sigma_tt))`
    pub temporal_weight: f64,
    pub opacity: f64,
    pub color: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlicedGrad {
    pub mean3: Vector3<f64>,
    pub cov3: Matrix3<f64>,
    pub temporal_weight: f64,
    pub opacity: f64,
    pub color: [f64; 3],
}

impl Default for SlicedGrad {
    fn default() -> Self {
        Self {
            mean3: Vector3::zeros(),
            cov3: Matrix3::zeros(),
            temporal_weight: 0.0,
            opacity: 0.0,
            color: [0.0; 3],
        }
    }
}

struct Blocks {
    a: Matrix3<f64>,
    b: Vector3<f64>,
    c: f64,
}

fn blocks(sigma: &Matrix4<f64>) -> Result<Blocks> {
    let c = sigma[(3, 3)];
    if !(c >= 1e-12) {
        return Err(Error::DegenerateTemporal(c));
    }
    Ok(Blocks {
        a: sigma.fixed_view::<3, 3>(0, 0).into_owned(),
        b: sigma.fixed_view::<3, 1>(0, 3).into_owned(),
        c,
    })
}

/// Condition `g` on time `t`: the Schur complement of the temporal block
/// gives the 3D covariance, the regression on `t - mu_t` gives the mean.
pub fn slice_at(g: &Gaussian4D, t: f64) -> Result<Sliced3D> {
    let Blocks { a, b, c } = blocks(&covariance4d(g))?;
    let dt = t - g.mu[3];
    let mean3 = Vector3::new(g.mu[0], g.mu[1], g.mu[2]) + b * (dt / c);
    let cov3 = a - b * b.transpose() / c;
    Ok(Sliced3D {
        mean3,
        cov3,
        temporal_weight: (-0.5 * dt * dt / c).exp(),
        opacity: sigmoid(g.opacity_logit),
        color: g.color,
    })
}

/// Adjoint of [`slice_at`]; returns the primitive gradient and `dL/dt`.
pub fn slice_backward(g: &Gaussian4D, t: f64, grad: &SlicedGrad) -> Result<(Gaussian4DGrad, f64)> {
    let Blocks { b, c, .. } = blocks(&covariance4d(g))?;
    let dt = t - g.mu[3];
    let w = (-0.5 * dt * dt / c).exp();
    let gm = grad.mean3;
    let gcov = grad.cov3;
    let gmb = gm.dot(&b);
    let g_b = gm * (dt / c) - (gcov + gcov.transpose()) * b / c;
    let g_c = -gmb * dt / (c * c)
        + (b.transpose() * gcov * b)[(0, 0)] / (c * c)
        + grad.temporal_weight * w * 0.5 * dt * dt / (c * c);
    let g_dt = gmb / c - grad.temporal_weight * w * dt / c;

    let mut g_sigma = Matrix4::zeros();
    g_sigma.fixed_view_mut::<3, 3>(0, 0).copy_from(&gcov);
    g_sigma.fixed_view_mut::<3, 1>(0, 3).copy_from(&g_b);
    g_sigma[(3, 3)] = g_c;

    let mut out = covariance4d_backward(g, &g_sigma);
    for i in 0..3 {
        out.mu[i] += gm[i];
        out.color[i] += grad.color[i];
    }
    out.mu[3] -= g_dt;
    let alpha = sigmoid(g.opacity_logit);
    out.opacity_logit += grad.opacity * alpha * (1.0 - alpha);
    Ok((out, g_dt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::grad_check_fn;
    use crate::gauss4d::quat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_gaussian<R: Rng>(rng: &mut R) -> Gaussian4D {
        let unit = |rng: &mut R| loop {
            let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            if quat::norm(q) > 0.1 {
                return quat::normalized(q);
            }
        };
        Gaussian4D {
            mu: std::array::from_fn(|_| rng.random_range(-2.0..2.0)),
            log_scales: std::array::from_fn(|_| rng.random_range(-1.5..0.7)),
            q_l: unit(rng),
            q_r: unit(rng),
            opacity_logit: rng.random_range(-2.0..2.0),
            color: std::array::from_fn(|_| rng.random_range(0.0..1.0)),
        }
    }

    #[test]
    fn decoupled_time_keeps_spatial_part() {
        let mut g = Gaussian4D::isotropic([0.5, -1.0, 2.0, 3.0], 0.0, [0.2, 0.4, 0.6]);
        g.log_scales = [0.1, -0.2, 0.3, 0.5f64.ln()];
        for t in [0.0, 3.0, 7.5] {
            let s = slice_at(&g, t).unwrap();
            assert_eq!(s.mean3, Vector3::new(0.5, -1.0, 2.0));
            for i in 0..3 {
                assert!((s.cov3[(i, i)] - (2.0 * g.log_scales[i]).exp()).abs() < 1e-15);
            }
        }
        assert_eq!(slice_at(&g, 3.0).unwrap().temporal_weight, 1.0);
        // one temporal standard deviation away
        let s = slice_at(&g, 3.5).unwrap();
        assert!((s.temporal_weight - (-0.5f64).exp()).abs() < 1e-15);
        assert!((s.temporal_weight - 0.60653).abs() < 1e-5);
    }

    #[test]
    fn degenerate_temporal_extent_is_error() {
        let mut g = Gaussian4D::isotropic([0.0; 4], 0.0, [0.0; 3]);
        g.log_scales[3] = -20.0;
        assert!(matches!(slice_at(&g, 0.0), Err(Error::DegenerateTemporal(_))));
    }

    #[test]
    fn weight_peaks_at_mean_time() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let g = random_gaussian(&mut rng);
            let w0 = slice_at(&g, g.mu[3]).unwrap().temporal_weight;
            assert_eq!(w0, 1.0);
            let mut prev = w0;
            for k in 1..20 {
                let w = slice_at(&g, g.mu[3] + 0.1 * k as f64).unwrap().temporal_weight;
                assert!(w < prev || (w == 0.0 && prev == 0.0));
                let wm = slice_at(&g, g.mu[3] - 0.1 * k as f64).unwrap().temporal_weight;
                assert!((w - wm).abs() < 1e-12);
                prev = w;
            }
        }
    }

    #[test]
    fn slice_gradients_match_finite_differences() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g0 = random_gaussian(&mut rng);
            let t0 = g0.mu[3] + rng.random_range(-1.0..1.0);
            let wm: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let wc = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let ww = rng.random_range(-1.0..1.0);
            let wo = rng.random_range(-1.0..1.0);
            let wcol: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let pack = |g: &Gaussian4D, t: f64| {
                let mut x = Vec::new();
                x.extend(g.mu);
                x.extend(g.log_scales);
                x.extend(g.q_l);
                x.extend(g.q_r);
                x.push(g.opacity_logit);
                x.extend(g.color);
                x.push(t);
                x
            };
            let unpack = |x: &[f64]| {
                let g = Gaussian4D {
                    mu: x[0..4].try_into().unwrap(),
                    log_scales: x[4..8].try_into().unwrap(),
                    q_l: x[8..12].try_into().unwrap(),
                    q_r: x[12..16].try_into().unwrap(),
                    opacity_logit: x[16],
                    color: x[17..20].try_into().unwrap(),
                };
                (g, x[20])
            };
            let r = grad_check_fn(&pack(&g0, t0), 1e-5, |x| {
                let (g, t) = unpack(x);
                let s = slice_at(&g, t)?;
                let f = s.mean3.iter().zip(&wm).map(|(a, b)| a * b).sum::<f64>()
                    + s.cov3.component_mul(&wc).sum()
                    + ww * s.temporal_weight
                    + wo * s.opacity
                    + s.color.iter().zip(&wcol).map(|(a, b)| a * b).sum::<f64>();
                let grad = SlicedGrad {
                    mean3: Vector3::from(wm),
                    cov3: wc,
                    temporal_weight: ww,
                    opacity: wo,
                    color: wcol,
                };
                let (gg, gt) = slice_backward(&g, t, &grad)?;
                let mut out = Vec::new();
                out.extend(gg.mu);
                out.extend(gg.log_scales);
                out.extend(gg.q_l);
                out.extend(gg.q_r);
                out.push(gg.opacity_logit);
                out.extend(gg.color);
                out.push(gt);
                Ok((f, out))
            })
            .unwrap();
            assert!(r.max_rel_err < 1e-4, "seed {seed}: {r:?}");
        }
    }
}
