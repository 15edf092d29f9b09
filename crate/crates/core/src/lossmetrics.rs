//! Photometric training loss (L1 + D-SSIM) and evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub lambda_dssim: f64,
    pub window: usize,
    pub sigma: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { lambda_dssim: 0.2, window: 11, sigma: 1.5, c1: 0.01 * 0.01, c2: 0.03 * 0.03 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::contract(format!("ssim window must be odd and >= 3, got {}", self.window)));
        }
        if !(0.0..=1.0).contains(&self.lambda_dssim) {
            return Err(Error::contract(format!("lambda_dssim must lie in [0, 1], got {}", self.lambda_dssim)));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::contract("ssim sigma must be positive"));
        }
        Ok(())
    }

    /// Normalized 1D Gaussian taps; the 2D window is their outer product.
    pub fn kernel(&self) -> Vec<f64> {
        let r = (self.window / 2) as f64;
        let taps: Vec<f64> =
            (0..self.window).map(|i| (-(i as f64 - r).powi(2) / (2.0 * self.sigma * self.sigma)).exp()).collect();
        let s: f64 = taps.iter().sum();
        taps.into_iter().map(|t| t / s).collect()
    }
}

fn check_shapes(a: &Image, b: &Image) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::contract(format!(
            "image shapes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

/// A single channel as a dense row-major plane.
struct Plane {
    w: usize,
    h: usize,
    v: Vec<f64>,
}

fn channel(img: &Image, c: usize) -> Plane {
    Plane { w: img.width as usize, h: img.height as usize, v: img.data.iter().skip(c).step_by(3).copied().collect() }
}

/// Separable "valid" correlation: output is `(w-k+1) x (h-k+1)`.
fn conv_valid(p: &Plane, k: &[f64]) -> Plane {
    let n = k.len();
    let ow = p.w + 1 - n;
    let oh = p.h + 1 - n;
    let mut rows = vec![0.0; ow * p.h];
    for y in 0..p.h {
        let src = &p.v[y * p.w..(y + 1) * p.w];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&src[x..x + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for (t, kt) in k.iter().enumerate() {
            let src = &rows[(y + t) * ow..(y + t + 1) * ow];
            for (o, s) in out[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                *o += kt * s;
            }
        }
    }
    Plane { w: ow, h: oh, v: out }
}

/// Adjoint of [`conv_valid`]: scatters a valid-size plane back to `w x h`.
fn conv_valid_adjoint(q: &Plane, k: &[f64], w: usize, h: usize) -> Plane {
    let n = k.len();
    let mut rows = vec![0.0; q.w * h];
    for y in 0..q.h {
        for (t, kt) in k.iter().enumerate() {
            let dst = &mut rows[(y + t) * q.w..(y + t + 1) * q.w];
            for (d, s) in dst.iter_mut().zip(&q.v[y * q.w..(y + 1) * q.w]) {
                *d += kt * s;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let src = &rows[y * q.w..(y + 1) * q.w];
        let dst = &mut out[y * w..(y + 1) * w];
        for (x, s) in src.iter().enumerate() {
            for (t, kt) in k.iter().enumerate() {
                dst[x + t] += kt * s;
            }
        }
    }
    debug_assert_eq!(n, k.len());
    Plane { w, h, v: out }
}

fn mul(a: &Plane, b: &Plane) -> Plane {
    Plane { w: a.w, h: a.h, v: a.v.iter().zip(&b.v).map(|(x, y)| x * y).collect() }
}

/// Per-channel SSIM map plus, optionally, d(mean SSIM map)/dx.
fn ssim_channel(x: &Plane, y: &Plane, cfg: &LossConfig, k: &[f64], want_grad: bool) -> (f64, Option<Vec<f64>>) {
    let mx = conv_valid(x, k);
    let my = conv_valid(y, k);
    let sxx = conv_valid(&mul(x, x), k);
    let syy = conv_valid(&mul(y, y), k);
    let sxy = conv_valid(&mul(x, y), k);
    let n = mx.v.len();
    let (mut da, mut db, mut dc) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut total = 0.0;
    for q in 0..n {
        let (ux, uy) = (mx.v[q], my.v[q]);
        let vxx = sxx.v[q] - ux * ux;
        let vyy = syy.v[q] - uy * uy;
        let vxy = sxy.v[q] - ux * uy;
        let n1 = 2.0 * ux * uy + cfg.c1;
        let n2 = 2.0 * vxy + cfg.c2;
        let d1 = ux * ux + uy * uy + cfg.c1;
        let d2 = vxx + vyy + cfg.c2;
        let s = n1 * n2 / (d1 * d2);
        total += s;
        if want_grad {
            let ds_dmu = 2.0 * uy * n2 / (d1 * d2) - s * 2.0 * ux / d1;
            let ds_dvxx = -s / d2;
            let ds_dvxy = 2.0 * n1 / (d1 * d2);
            da[q] = ds_dmu - 2.0 * ux * ds_dvxx - uy * ds_dvxy;
            db[q] = ds_dvxx;
            dc[q] = ds_dvxy;
        }
    }
    let mean = total / n as f64;
    if !want_grad {
        return (mean, None);
    }
    let scale = 1.0 / n as f64;
    let wrap = |v: Vec<f64>| Plane { w: mx.w, h: mx.h, v };
    let ga = conv_valid_adjoint(&wrap(da), k, x.w, x.h);
    let gb = conv_valid_adjoint(&wrap(db), k, x.w, x.h);
    let gc = conv_valid_adjoint(&wrap(dc), k, x.w, x.h);
    let grad = (0..x.v.len()).map(|p| scale * (ga.v[p] + 2.0 * x.v[p] * gb.v[p] + y.v[p] * gc.v[p])).collect();
    (mean, Some(grad))
}

fn ssim_impl(a: &Image, b: &Image, cfg: &LossConfig, want_grad: bool) -> Result<(f64, Option<Image>)> {
    check_shapes(a, b)?;
    cfg.validate()?;
    if (a.width as usize) < cfg.window || (a.height as usize) < cfg.window {
        return Err(Error::contract(format!(
            "image {}x{} is smaller than the {}-pixel ssim window",
            a.width, a.height, cfg.window
        )));
    }
    let k = cfg.kernel();
    let mut sum = 0.0;
    let mut grad = want_grad.then(|| Image::new(a.width, a.height));
    for c in 0..3 {
        let (s, g) = ssim_channel(&channel(a, c), &channel(b, c), cfg, &k, want_grad);
        sum += s;
        if let (Some(img), Some(g)) = (grad.as_mut(), g) {
            for (p, v) in g.into_iter().enumerate() {
                img.data[3 * p + c] = v / 3.0;
            }
        }
    }
    Ok((sum / 3.0, grad))
}

/// Mean local SSIM over valid window positions, averaged over channels.
pub fn ssim(a: &Image, b: &Image, cfg: &LossConfig) -> Result<f64> {
    ssim_impl(a, b, cfg, false).map(|(s, _)| s)
}

/// SSIM together with its gradient with respect to `a`.
pub fn ssim_with_grad(a: &Image, b: &Image, cfg: &LossConfig) -> Result<(f64, Image)> {
    ssim_impl(a, b, cfg, true).map(|(s, g)| (s, g.expect("gradient requested")))
}

pub fn l1(a: &Image, b: &Image) -> Result<f64> {
    check_shapes(a, b)?;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.data.len().max(1) as f64)
}

/// `(1-λ)·L1 + λ·(1-SSIM)` and its gradient with respect to `rendered`.
pub fn photometric_loss(rendered: &Image, target: &Image, cfg: &LossConfig) -> Result<(f64, Image)> {
    check_shapes(rendered, target)?;
    cfg.validate()?;
    let n = rendered.data.len().max(1) as f64;
    let w1 = 1.0 - cfg.lambda_dssim;
    let mut grad = Image::new(rendered.width, rendered.height);
    let mut l1_sum = 0.0;
    for ((g, r), t) in grad.data.iter_mut().zip(&rendered.data).zip(&target.data) {
        let d = r - t;
        l1_sum += d.abs();
        // sign(0) = 0 keeps the gradient zero on identical inputs
        *g = if d > 0.0 {
            w1 / n
        } else if d < 0.0 {
            -w1 / n
        } else {
            0.0
        };
    }
    let mut loss = w1 * l1_sum / n;
    if cfg.lambda_dssim > 0.0 {
        let (s, sg) = ssim_with_grad(rendered, target, cfg)?;
        loss += cfg.lambda_dssim * (1.0 - s);
        for (g, d) in grad.data.iter_mut().zip(&sg.data) {
            *g -= cfg.lambda_dssim * d;
        }
    }
    Ok((loss, grad))
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_shapes(a, b)?;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.data.len().max(1) as f64)
}

/// Peak signal-to-noise ratio in dB; `+inf` for identical images.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 { f64::INFINITY } else { -10.0 * m.log10() })
}
