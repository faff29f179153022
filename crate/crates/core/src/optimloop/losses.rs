//! Image losses with gradients, pose regularization and quality metrics.

use crate::error::{Error, Result};
use crate::gauss4d::quat;
use crate::splat::{CameraView, Image};

use super::config::LossWeights;

/// A scalar loss value and its gradient with respect to the first image.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageLoss {
    pub value: f64,
    pub grad: Image,
}

impl ImageLoss {
    fn zero_like(a: &Image) -> Self {
        Self {
            value: 0.0,
            grad: Image::new(a.width(), a.height(), a.channels()),
        }
    }

    /// `self += k * other`
    fn add_scaled(&mut self, k: f64, other: &ImageLoss) {
        self.value += k * other.value;
        for (g, o) in self.grad.data_mut().iter_mut().zip(other.grad.data()) {
            *g += k * o;
        }
    }
}

fn sign(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean absolute difference over pixels and channels.
pub fn l1_loss(a: &Image, b: &Image) -> Result<ImageLoss> {
    a.check_shape(b)?;
    let n = a.data().len().max(1) as f64;
    let mut value = 0.0;
    let mut grad = Image::new(a.width(), a.height(), a.channels());
    for ((g, x), y) in grad.data_mut().iter_mut().zip(a.data()).zip(b.data()) {
        value += (x - y).abs();
        *g = sign(x - y) / n;
    }
    Ok(ImageLoss { value: value / n, grad })
}

pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn gauss_taps() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut k: [f64; SSIM_WINDOW] = std::array::from_fn(|i| {
        let d = i as f64 - r;
        (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
    });
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

// Separable window, valid positions only: (w - 10) x (h - 10).
fn filter_valid(x: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (vw, vh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; vw * h];
    for y in 0..h {
        for x0 in 0..vw {
            rows[y * vw + x0] = (0..SSIM_WINDOW).map(|i| k[i] * x[y * w + x0 + i]).sum();
        }
    }
    let mut out = vec![0.0; vw * vh];
    for y0 in 0..vh {
        for x0 in 0..vw {
            out[y0 * vw + x0] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(y0 + i) * vw + x0]).sum();
        }
    }
    out
}

// Adjoint of `filter_valid`.
fn filter_adjoint(g: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (vw, vh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; vw * h];
    for y0 in 0..vh {
        for x0 in 0..vw {
            let v = g[y0 * vw + x0];
            for i in 0..SSIM_WINDOW {
                rows[(y0 + i) * vw + x0] += k[i] * v;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x0 in 0..vw {
            let v = rows[y * vw + x0];
            for i in 0..SSIM_WINDOW {
                out[y * w + x0 + i] += k[i] * v;
            }
        }
    }
    out
}

/// Mean SSIM over channels and valid window positions, optionally with its
/// gradient with respect to `a`.
fn ssim_impl(a: &Image, b: &Image, want_grad: bool) -> Result<(f64, Option<Image>)> {
    a.check_shape(b)?;
    let (w, h, nc) = (a.width(), a.height(), a.channels());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            window: SSIM_WINDOW,
        });
    }
    let k = gauss_taps();
    let npos = ((w + 1 - SSIM_WINDOW) * (h + 1 - SSIM_WINDOW)) as f64;
    let norm = 1.0 / (npos * nc as f64);
    let mut total = 0.0;
    let mut grad = want_grad.then(|| Image::new(w, h, nc));
    for c in 0..nc {
        let xa: Vec<f64> = a.data().iter().skip(c).step_by(nc).copied().collect();
        let xb: Vec<f64> = b.data().iter().skip(c).step_by(nc).copied().collect();
        let sq = |v: &[f64], u: &[f64]| v.iter().zip(u).map(|(p, q)| p * q).collect::<Vec<f64>>();
        let mu_a = filter_valid(&xa, w, h, &k);
        let mu_b = filter_valid(&xb, w, h, &k);
        let e_aa = filter_valid(&sq(&xa, &xa), w, h, &k);
        let e_bb = filter_valid(&sq(&xb, &xb), w, h, &k);
        let e_ab = filter_valid(&sq(&xa, &xb), w, h, &k);
        let n = mu_a.len();
        let mut g_mu = vec![0.0; n];
        let mut g_aa = vec![0.0; n];
        let mut g_ab = vec![0.0; n];
        for p in 0..n {
            let (ma, mb) = (mu_a[p], mu_b[p]);
            let va = e_aa[p] - ma * ma;
            let vb = e_bb[p] - mb * mb;
            let cab = e_ab[p] - ma * mb;
            let a1 = 2.0 * ma * mb + C1;
            let a2 = 2.0 * cab + C2;
            let b1 = ma * ma + mb * mb + C1;
            let b2 = va + vb + C2;
            let s = a1 * a2 / (b1 * b2);
            total += s;
            if want_grad {
                let d = b1 * b2;
                g_ab[p] = norm * 2.0 * a1 / d;
                g_aa[p] = -norm * s / b2;
                g_mu[p] = norm * ((2.0 * mb * a2 - 2.0 * mb * a1) / d - s * 2.0 * ma / b1 + s * 2.0 * ma / b2);
            }
        }
        if let Some(g) = grad.as_mut() {
            let gm = filter_adjoint(&g_mu, w, h, &k);
            let ga = filter_adjoint(&g_aa, w, h, &k);
            let gb = filter_adjoint(&g_ab, w, h, &k);
            for i in 0..w * h {
                g.data_mut()[i * nc + c] = gm[i] + 2.0 * xa[i] * ga[i] + xb[i] * gb[i];
            }
        }
    }
    Ok((total * norm, grad))
}

/// Structural similarity with an 11x11 Gaussian window (sigma 1.5) over
/// valid positions, averaged over channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    Ok(ssim_impl(a, b, false)?.0)
}

/// `(1 - SSIM) / 2`.
pub fn dssim_loss(a: &Image, b: &Image) -> Result<ImageLoss> {
    let (s, g) = ssim_impl(a, b, true)?;
    let mut grad = g.expect("gradient requested");
    grad.data_mut().iter_mut().for_each(|v| *v *= -0.5);
    Ok(ImageLoss {
        value: 0.5 * (1.0 - s),
        grad,
    })
}

/// Pluggable image distance used on generated views.
pub trait ImageDistance: Send + Sync {
    fn distance(&self, a: &Image, b: &Image) -> Result<ImageLoss>;
}

/// L1 between finite-difference image gradients, averaged over two scales
/// (full resolution and a 2x2 box downsample). Stands in for a learned
/// perceptual metric.
#[derive(Clone, Copy, Debug, Default)]
pub struct GradientL1;

/// The constant-zero distance.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroDistance;

impl ImageDistance for ZeroDistance {
    fn distance(&self, a: &Image, b: &Image) -> Result<ImageLoss> {
        a.check_shape(b)?;
        Ok(ImageLoss::zero_like(a))
    }
}

fn downsample(img: &Image) -> Image {
    let (w, h, c) = (img.width() / 2, img.height() / 2, img.channels());
    Image::from_fn(w, h, c, |x, y, ch| {
        0.25 * (img.get(2 * x, 2 * y, ch)
            + img.get(2 * x + 1, 2 * y, ch)
            + img.get(2 * x, 2 * y + 1, ch)
            + img.get(2 * x + 1, 2 * y + 1, ch))
    })
}

fn downsample_adjoint(g: &Image, w: usize, h: usize) -> Image {
    let mut out = Image::new(w, h, g.channels());
    for y in 0..g.height() {
        for x in 0..g.width() {
            for ch in 0..g.channels() {
                let v = 0.25 * g.get(x, y, ch);
                for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    let (px, py) = (2 * x + dx, 2 * y + dy);
                    out.set(px, py, ch, out.get(px, py, ch) + v);
                }
            }
        }
    }
    out
}

// Mean |d_a - d_b| over horizontal and vertical forward differences.
fn gradient_l1_single(a: &Image, b: &Image) -> ImageLoss {
    let (w, h, nc) = (a.width(), a.height(), a.channels());
    let mut out = ImageLoss::zero_like(a);
    for (dx, dy) in [(1usize, 0usize), (0, 1)] {
        if w <= dx || h <= dy {
            continue;
        }
        let n = ((w - dx) * (h - dy) * nc) as f64;
        for y in 0..h - dy {
            for x in 0..w - dx {
                for ch in 0..nc {
                    let da = a.get(x + dx, y + dy, ch) - a.get(x, y, ch);
                    let db = b.get(x + dx, y + dy, ch) - b.get(x, y, ch);
                    let d = da - db;
                    out.value += 0.5 * d.abs() / n;
                    let s = 0.5 * sign(d) / n;
                    let g = out.grad.get(x + dx, y + dy, ch);
                    out.grad.set(x + dx, y + dy, ch, g + s);
                    let g = out.grad.get(x, y, ch);
                    out.grad.set(x, y, ch, g - s);
                }
            }
        }
    }
    out
}

impl ImageDistance for GradientL1 {
    fn distance(&self, a: &Image, b: &Image) -> Result<ImageLoss> {
        a.check_shape(b)?;
        let mut out = ImageLoss::zero_like(a);
        out.add_scaled(0.5, &gradient_l1_single(a, b));
        if a.width() >= 4 && a.height() >= 4 {
            let coarse = gradient_l1_single(&downsample(a), &downsample(b));
            let lifted = ImageLoss {
                value: coarse.value,
                grad: downsample_adjoint(&coarse.grad, a.width(), a.height()),
            };
            out.add_scaled(0.5, &lifted);
        }
        Ok(out)
    }
}

/// `(1 - lambda) * L1 + lambda * D-SSIM`.
pub fn input_view_loss(rendered: &Image, target: &Image, w: &LossWeights) -> Result<ImageLoss> {
    let mut out = ImageLoss::zero_like(rendered);
    out.add_scaled(1.0 - w.lambda_dssim, &l1_loss(rendered, target)?);
    if w.lambda_dssim != 0.0 {
        out.add_scaled(w.lambda_dssim, &dssim_loss(rendered, target)?);
    }
    Ok(out)
}

/// `lambda1 * L1 + lambda2 * perceptual`.
pub fn gen_view_loss(
    rendered: &Image,
    target: &Image,
    w: &LossWeights,
    perceptual: &dyn ImageDistance,
) -> Result<ImageLoss> {
    let mut out = ImageLoss::zero_like(rendered);
    out.add_scaled(w.lambda1, &l1_loss(rendered, target)?);
    out.add_scaled(w.lambda2, &perceptual.distance(rendered, target)?);
    Ok(out)
}

/// Pose drift of one view and its gradients.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PoseLoss {
    pub value: f64,
    pub grad_q: [f64; 4],
    pub grad_t: [f64; 3],
}

/// `lambda_p * (|t - t_init| + |q~ - q_init|)`, with `q~` the sign of `q`
/// closest to `q_init`.
pub fn pose_loss_single(view: &CameraView, lambda_p: f64) -> PoseLoss {
    let dt: Vec<f64> = (0..3).map(|i| view.t_cam[i] - view.t_init[i]).collect();
    let flip = if quat::dot(view.q_cam, view.q_init) < 0.0 { -1.0 } else { 1.0 };
    let dq: Vec<f64> = (0..4).map(|i| flip * view.q_cam[i] - view.q_init[i]).collect();
    let nt = dt.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nq = dq.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut out = PoseLoss {
        value: lambda_p * (nt + nq),
        ..Default::default()
    };
    if nt > 0.0 {
        for i in 0..3 {
            out.grad_t[i] = lambda_p * dt[i] / nt;
        }
    }
    if nq > 0.0 {
        for i in 0..4 {
            out.grad_q[i] = lambda_p * flip * dq[i] / nq;
        }
    }
    out
}

/// Sum of [`pose_loss_single`] over `views`.
pub fn pose_loss<'a>(views: impl IntoIterator<Item = &'a CameraView>, lambda_p: f64) -> f64 {
    views.into_iter().map(|v| pose_loss_single(v, lambda_p).value).sum()
}

/// `10 log10(peak^2 / MSE)`; identical images give `+inf`.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    a.check_shape(b)?;
    let n = a.data().len().max(1) as f64;
    let mse = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    })
}
