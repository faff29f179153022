//! Multi-resolution 2D feature planes over the five axes `(x, y, z, t, s)`.
//!
//! A plane set holds nine planes per scale, one per axis pair except
//! `(t, s)`, in the fixed order `xy, xz, yz, xt, yt, zt, xs, ys, zs`, with
//! scales ascending. A query projects a normalized coordinate onto every
//! plane, interpolates bilinearly, multiplies the nine vectors of a scale
//! element-wise and concatenates the per-scale products.
//!
//! Grids are stored row-major as `[row][col][channel]`, rows indexing the
//! first axis of the pair. Queries outside the grid clamp to the border.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
    T,
    S,
}

impl Axis {
    pub fn label(self) -> char {
        match self {
            Axis::X => 'x',
            Axis::Y => 'y',
            Axis::Z => 'z',
            Axis::T => 't',
            Axis::S => 's',
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

/// The nine axis pairs in storage order.
pub const PLANE_AXES: [(Axis, Axis); 9] = [
    (Axis::X, Axis::Y),
    (Axis::X, Axis::Z),
    (Axis::Y, Axis::Z),
    (Axis::X, Axis::T),
    (Axis::Y, Axis::T),
    (Axis::Z, Axis::T),
    (Axis::X, Axis::S),
    (Axis::Y, Axis::S),
    (Axis::Z, Axis::S),
];

pub fn pair_name(axes: (Axis, Axis)) -> String {
    format!("{}{}", axes.0.label(), axes.1.label())
}

/// A point of the 5D grid domain; each component lies in `[0, N_axis)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NormalizedCoord {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub t: f64,
    pub s: f64,
}

impl NormalizedCoord {
    pub fn new(x: f64, y: f64, z: f64, t: f64, s: f64) -> Self {
        Self { x, y, z, t, s }
    }

    pub fn get(&self, axis: Axis) -> f64 {
        self.as_array()[axis.slot()]
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.x, self.y, self.z, self.t, self.s]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4])
    }
}

/// Shape of one plane: `(scale * base.0) x (scale * base.1) x channels`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaneLayout {
    pub axes: (Axis, Axis),
    pub base: (usize, usize),
    pub scale: usize,
    pub channels: usize,
}

impl PlaneLayout {
    pub fn new(axes: (Axis, Axis), base: (usize, usize), scale: usize, channels: usize) -> Result<Self> {
        if axes.0 == axes.1 {
            return Err(Error::InvalidPlane(format!("repeated axis {:?}", axes.0)));
        }
        if matches!(axes, (Axis::T, Axis::S) | (Axis::S, Axis::T)) {
            return Err(Error::InvalidPlane("the (t, s) pair carries no plane".into()));
        }
        if base.0 == 0 || base.1 == 0 || scale == 0 || channels == 0 {
            return Err(Error::InvalidPlane(format!(
                "non-positive shape {base:?} x{scale} h={channels}"
            )));
        }
        Ok(Self {
            axes,
            base,
            scale,
            channels,
        })
    }

    pub fn rows(&self) -> usize {
        self.scale * self.base.0
    }

    pub fn cols(&self) -> usize {
        self.scale * self.base.1
    }

    pub fn len(&self) -> usize {
        self.rows() * self.cols() * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn offset(&self, r: usize, c: usize) -> usize {
        (r * self.cols() + c) * self.channels
    }
}

/// Project `c` onto the plane spanned by `axes`, scaled by `scale`.
pub fn project(c: &NormalizedCoord, axes: (Axis, Axis), scale: usize) -> [f64; 2] {
    let l = scale as f64;
    [l * c.get(axes.0), l * c.get(axes.1)]
}

#[derive(Clone, Copy, Debug)]
struct Cell {
    r0: usize,
    r1: usize,
    c0: usize,
    c1: usize,
    fr: f64,
    fc: f64,
    // whether the coordinate was inside the grid (gradient passes)
    live: [bool; 2],
}

fn locate(n: usize, x: f64) -> (usize, usize, f64, bool) {
    let hi = (n - 1) as f64;
    let live = x > 0.0 && x < hi;
    let x = x.clamp(0.0, hi);
    if n == 1 {
        return (0, 0, 0.0, false);
    }
    let i0 = (x.floor() as usize).min(n - 2);
    (i0, i0 + 1, x - i0 as f64, live)
}

fn cell(layout: &PlaneLayout, p: [f64; 2]) -> Cell {
    let (r0, r1, fr, lr) = locate(layout.rows(), p[0]);
    let (c0, c1, fc, lc) = locate(layout.cols(), p[1]);
    Cell {
        r0,
        r1,
        c0,
        c1,
        fr,
        fc,
        live: [lr, lc],
    }
}

/// Bilinear lookup of the `channels`-vector at `p`, written to `out`.
pub fn plane_interp(layout: &PlaneLayout, values: &[f64], p: [f64; 2], out: &mut [f64]) {
    let h = layout.channels;
    debug_assert_eq!(values.len(), layout.len());
    debug_assert_eq!(out.len(), h);
    let k = cell(layout, p);
    let w00 = (1.0 - k.fr) * (1.0 - k.fc);
    let w01 = (1.0 - k.fr) * k.fc;
    let w10 = k.fr * (1.0 - k.fc);
    let w11 = k.fr * k.fc;
    let (o00, o01) = (layout.offset(k.r0, k.c0), layout.offset(k.r0, k.c1));
    let (o10, o11) = (layout.offset(k.r1, k.c0), layout.offset(k.r1, k.c1));
    for ch in 0..h {
        out[ch] = w00 * values[o00 + ch]
            + w01 * values[o01 + ch]
            + w10 * values[o10 + ch]
            + w11 * values[o11 + ch];
    }
}

/// Adjoint of [`plane_interp`]: accumulates into `grad_values` and returns
/// the gradient with respect to `p` (zero along clamped components).
pub fn plane_interp_backward(
    layout: &PlaneLayout,
    values: &[f64],
    p: [f64; 2],
    upstream: &[f64],
    grad_values: &mut [f64],
) -> [f64; 2] {
    let h = layout.channels;
    let k = cell(layout, p);
    let w00 = (1.0 - k.fr) * (1.0 - k.fc);
    let w01 = (1.0 - k.fr) * k.fc;
    let w10 = k.fr * (1.0 - k.fc);
    let w11 = k.fr * k.fc;
    let (o00, o01) = (layout.offset(k.r0, k.c0), layout.offset(k.r0, k.c1));
    let (o10, o11) = (layout.offset(k.r1, k.c0), layout.offset(k.r1, k.c1));
    let mut gp = [0.0; 2];
    for ch in 0..h {
        let g = upstream[ch];
        if g == 0.0 {
            continue;
        }
        grad_values[o00 + ch] += w00 * g;
        grad_values[o01 + ch] += w01 * g;
        grad_values[o10 + ch] += w10 * g;
        grad_values[o11 + ch] += w11 * g;
        let (v00, v01, v10, v11) = (values[o00 + ch], values[o01 + ch], values[o10 + ch], values[o11 + ch]);
        gp[0] += g * ((1.0 - k.fc) * (v10 - v00) + k.fc * (v11 - v01));
        gp[1] += g * ((1.0 - k.fr) * (v01 - v00) + k.fr * (v11 - v10));
    }
    if !k.live[0] {
        gp[0] = 0.0;
    }
    if !k.live[1] {
        gp[1] = 0.0;
    }
    gp
}

/// Element-wise product of the nine per-plane vectors of one scale.
pub fn fuse(features: &[&[f64]]) -> Result<Vec<f64>> {
    if features.len() != PLANE_AXES.len() {
        let missing = PLANE_AXES
            .get(features.len())
            .map(|&a| pair_name(a))
            .unwrap_or_else(|| format!("count {}", features.len()));
        return Err(Error::MissingPlane(missing));
    }
    let h = features[0].len();
    if features.iter().any(|f| f.len() != h) {
        return Err(Error::ShapeMismatch("fused vectors differ in length".into()));
    }
    let mut out = vec![1.0; h];
    for f in features {
        for (o, v) in out.iter_mut().zip(f.iter()) {
            *o *= v;
        }
    }
    Ok(out)
}

/// Gradient of [`fuse`] with respect to each input, computed with prefix and
/// suffix products so zero entries are handled exactly.
pub fn fuse_backward(features: &[&[f64]], upstream: &[f64]) -> Vec<Vec<f64>> {
    let n = features.len();
    let h = upstream.len();
    let mut grads = vec![vec![0.0; h]; n];
    for ch in 0..h {
        let mut prefix = vec![1.0; n + 1];
        for i in 0..n {
            prefix[i + 1] = prefix[i] * features[i][ch];
        }
        let mut suffix = 1.0;
        for i in (0..n).rev() {
            grads[i][ch] = upstream[ch] * prefix[i] * suffix;
            suffix *= features[i][ch];
        }
    }
    grads
}

/// Base resolutions, channel count and scale list of a plane set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaneSetConfig {
    pub spatial_res: usize,
    pub t_res: usize,
    pub s_res: usize,
    pub channels: usize,
    pub scales: Vec<usize>,
}

impl PlaneSetConfig {
    fn base(&self, axis: Axis) -> usize {
        match axis {
            Axis::X | Axis::Y | Axis::Z => self.spatial_res,
            Axis::T => self.t_res,
            Axis::S => self.s_res,
        }
    }

    pub fn feature_len(&self) -> usize {
        self.channels * self.scales.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::Config("plane set needs at least one scale".into()));
        }
        if self.scales.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("scales must be strictly ascending".into()));
        }
        for &l in &self.scales {
            for &axes in &PLANE_AXES {
                PlaneLayout::new(axes, (self.base(axes.0), self.base(axes.1)), l, self.channels)?;
            }
        }
        Ok(())
    }

    pub fn layouts(&self) -> Result<Vec<PlaneLayout>> {
        self.validate()?;
        let mut out = Vec::with_capacity(9 * self.scales.len());
        for &l in &self.scales {
            for &axes in &PLANE_AXES {
                out.push(PlaneLayout::new(
                    axes,
                    (self.base(axes.0), self.base(axes.1)),
                    l,
                    self.channels,
                )?);
            }
        }
        Ok(out)
    }
}

/// Initial plane values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PlaneInit {
    /// Space-only planes uniform in `[lo, hi]`, planes touching `t` or `s` set to 1.
    Multiplicative { lo: f64, hi: f64 },
    /// Every plane uniform in `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    Constant(f64),
}

impl Default for PlaneInit {
    fn default() -> Self {
        PlaneInit::Multiplicative { lo: 0.1, hi: 0.5 }
    }
}

/// Nine planes per scale whose values live in a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneSet {
    config: PlaneSetConfig,
    layouts: Vec<PlaneLayout>,
    ids: Vec<ParamId>,
}

fn entry_name(prefix: &str, layout: &PlaneLayout) -> String {
    format!("{prefix}.l{}.{}", layout.scale, pair_name(layout.axes))
}

/// Per-query intermediate values needed by the backward pass.
#[derive(Clone, Debug)]
pub struct FeatureTape {
    coord: NormalizedCoord,
    // interpolated vectors, plane-major in storage order
    interp: Vec<f64>,
}

impl PlaneSet {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        config: PlaneSetConfig,
        init: PlaneInit,
        rng: &mut R,
    ) -> Result<Self> {
        let layouts = config.layouts()?;
        let mut ids = Vec::with_capacity(layouts.len());
        for layout in &layouts {
            let touches_ts = matches!(layout.axes.1, Axis::T | Axis::S);
            let values: Vec<f64> = match init {
                PlaneInit::Multiplicative { .. } if touches_ts => vec![1.0; layout.len()],
                PlaneInit::Multiplicative { lo, hi } | PlaneInit::Uniform { lo, hi } => {
                    (0..layout.len()).map(|_| rng.random_range(lo..=hi)).collect()
                }
                PlaneInit::Constant(v) => vec![v; layout.len()],
            };
            ids.push(store.insert(entry_name(prefix, layout), values)?);
        }
        Ok(Self {
            config,
            layouts,
            ids,
        })
    }

    /// Bind to planes already present in `store` (e.g. from a checkpoint).
    pub fn attach(store: &ParamStore, prefix: &str, config: PlaneSetConfig) -> Result<Self> {
        let layouts = config.layouts()?;
        let mut ids = Vec::with_capacity(layouts.len());
        for layout in &layouts {
            let name = entry_name(prefix, layout);
            let id = store.id(&name)?;
            if store.values(id).len() != layout.len() {
                return Err(Error::ShapeMismatch(format!(
                    "plane `{name}` has {} values, expected {}",
                    store.values(id).len(),
                    layout.len()
                )));
            }
            ids.push(id);
        }
        Ok(Self {
            config,
            layouts,
            ids,
        })
    }

    pub fn config(&self) -> &PlaneSetConfig {
        &self.config
    }

    pub fn layouts(&self) -> &[PlaneLayout] {
        &self.layouts
    }

    pub fn ids(&self) -> &[ParamId] {
        &self.ids
    }

    pub fn feature_len(&self) -> usize {
        self.config.feature_len()
    }

    /// Planes whose interpolation weight along `s` can be non-zero.
    pub fn pose_planes(&self) -> impl Iterator<Item = (PlaneLayout, ParamId)> + '_ {
        self.layouts
            .iter()
            .zip(&self.ids)
            .filter(|(l, _)| l.axes.1 == Axis::S)
            .map(|(l, id)| (*l, *id))
    }

    /// Concatenated per-scale fused features at `c`.
    pub fn multiscale_feature(&self, store: &ParamStore, c: &NormalizedCoord) -> Result<Vec<f64>> {
        Ok(self.multiscale_feature_taped(store, c)?.0)
    }

    pub fn multiscale_feature_taped(
        &self,
        store: &ParamStore,
        c: &NormalizedCoord,
    ) -> Result<(Vec<f64>, FeatureTape)> {
        let h = self.config.channels;
        let mut interp = vec![0.0; self.layouts.len() * h];
        for (k, (layout, id)) in self.layouts.iter().zip(&self.ids).enumerate() {
            let p = project(c, layout.axes, layout.scale);
            plane_interp(layout, store.values(*id), p, &mut interp[k * h..(k + 1) * h]);
        }
        let mut out = Vec::with_capacity(self.feature_len());
        for block in interp.chunks(9 * h) {
            let refs: Vec<&[f64]> = block.chunks(h).collect();
            out.extend(fuse(&refs)?);
        }
        Ok((out, FeatureTape { coord: *c, interp }))
    }

    /// Accumulate plane gradients into `store` and return the gradient with
    /// respect to the normalized coordinate.
    pub fn multiscale_feature_backward(
        &self,
        store: &mut ParamStore,
        tape: &FeatureTape,
        upstream: &[f64],
    ) -> NormalizedCoord {
        let h = self.config.channels;
        let mut gc = [0.0; 5];
        for (si, block) in tape.interp.chunks(9 * h).enumerate() {
            let up = &upstream[si * h..(si + 1) * h];
            if up.iter().all(|&g| g == 0.0) {
                continue;
            }
            let refs: Vec<&[f64]> = block.chunks(h).collect();
            let grads = fuse_backward(&refs, up);
            for (pi, g) in grads.iter().enumerate() {
                let k = si * 9 + pi;
                let layout = &self.layouts[k];
                let p = project(&tape.coord, layout.axes, layout.scale);
                let (vals, gv) = store.split_mut(self.ids[k]);
                let gp = plane_interp_backward(layout, vals, p, g, gv);
                let l = layout.scale as f64;
                gc[layout.axes.0.slot()] += l * gp[0];
                gc[layout.axes.1.slot()] += l * gp[1];
            }
        }
        NormalizedCoord::from_array(gc)
    }

    /// Total-variation penalty; adds `weight * d tv / d values` to the store
    /// gradients when `weight` is non-zero and returns the unweighted value.
    ///
    /// Per plane and per axis the squared neighbor differences are averaged
    /// over their count (differences x channels); the two axis means are
    /// summed and the result is averaged over all planes.
    pub fn tv_loss(&self, store: &mut ParamStore, weight: f64) -> f64 {
        let n = self.layouts.len() as f64;
        let mut total = 0.0;
        for (layout, id) in self.layouts.iter().zip(&self.ids) {
            let (vals, grads) = store.split_mut(*id);
            total += plane_tv(layout, vals, if weight != 0.0 { Some((grads, weight / n)) } else { None });
        }
        total / n
    }

    /// Second-difference penalty along `s` on the `xs, ys, zs` planes of every
    /// scale, scaled by `weight`. Adds its gradient to the store and returns
    /// the weighted value.
    ///
    /// Per plane the squared second differences (summed over channels) are
    /// summed over rows and interior `s` positions and divided by
    /// `rows * cols`; planes are then averaged.
    pub fn smooth_loss(&self, store: &mut ParamStore, weight: f64) -> f64 {
        let planes: Vec<_> = self.pose_planes().collect();
        if let Some((short, _)) = planes.iter().find(|(l, _)| l.cols() < 3) {
            log::warn!(
                "pose axis has {} nodes at scale {}; smoothness term needs at least 3",
                short.cols(),
                short.scale
            );
            return 0.0;
        }
        let n = planes.len() as f64;
        let mut total = 0.0;
        for (layout, id) in planes {
            let (vals, grads) = store.split_mut(id);
            let g = if weight != 0.0 { Some((grads, weight / n)) } else { None };
            total += plane_second_diff(&layout, vals, g);
        }
        weight * total / n
    }
}

/// Total variation of one plane (sum of the two per-axis means).
pub fn plane_tv(layout: &PlaneLayout, values: &[f64], grad: Option<(&mut [f64], f64)>) -> f64 {
    let (rows, cols, h) = (layout.rows(), layout.cols(), layout.channels);
    let n_r = ((rows.saturating_sub(1)) * cols * h) as f64;
    let n_c = (rows * cols.saturating_sub(1) * h) as f64;
    let mut sum_r = 0.0;
    let mut sum_c = 0.0;
    let mut grad = grad;
    for r in 0..rows {
        for c in 0..cols {
            let o = layout.offset(r, c);
            for ch in 0..h {
                let v = values[o + ch];
                if r + 1 < rows {
                    let o2 = layout.offset(r + 1, c) + ch;
                    let d = values[o2] - v;
                    sum_r += d * d;
                    if let Some((g, w)) = grad.as_mut() {
                        let k = *w * 2.0 * d / n_r;
                        g[o2] += k;
                        g[o + ch] -= k;
                    }
                }
                if c + 1 < cols {
                    let o2 = layout.offset(r, c + 1) + ch;
                    let d = values[o2] - v;
                    sum_c += d * d;
                    if let Some((g, w)) = grad.as_mut() {
                        let k = *w * 2.0 * d / n_c;
                        g[o2] += k;
                        g[o + ch] -= k;
                    }
                }
            }
        }
    }
    let mean = |s: f64, n: f64| if n > 0.0 { s / n } else { 0.0 };
    mean(sum_r, n_r) + mean(sum_c, n_c)
}

/// Normalized squared second difference along the column axis of one plane.
pub fn plane_second_diff(layout: &PlaneLayout, values: &[f64], grad: Option<(&mut [f64], f64)>) -> f64 {
    let (rows, cols, h) = (layout.rows(), layout.cols(), layout.channels);
    let norm = (rows * cols) as f64;
    let mut sum = 0.0;
    let mut grad = grad;
    for r in 0..rows {
        for c in 1..cols.saturating_sub(1) {
            let (a, b, d) = (layout.offset(r, c - 1), layout.offset(r, c), layout.offset(r, c + 1));
            for ch in 0..h {
                let e = (values[a + ch] - values[b + ch]) - (values[b + ch] - values[d + ch]);
                sum += e * e;
                if let Some((g, w)) = grad.as_mut() {
                    let k = *w * 2.0 * e / norm;
                    g[a + ch] += k;
                    g[b + ch] -= 2.0 * k;
                    g[d + ch] += k;
                }
            }
        }
    }
    sum / norm
}

/// A plane that owns its values, for standalone lookups.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePlane {
    pub layout: PlaneLayout,
    pub values: Vec<f64>,
}

impl FeaturePlane {
    pub fn new(layout: PlaneLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::ShapeMismatch(format!(
                "plane needs {} values, got {}",
                layout.len(),
                values.len()
            )));
        }
        Ok(Self { layout, values })
    }

    pub fn interp(&self, p: [f64; 2]) -> Vec<f64> {
        let mut out = vec![0.0; self.layout.channels];
        plane_interp(&self.layout, &self.values, p, &mut out);
        out
    }

    pub fn node(&self, r: usize, c: usize) -> &[f64] {
        let o = self.layout.offset(r, c);
        &self.values[o..o + self.layout.channels]
    }
}

#[cfg(test)]
mod tests;
