//! Extended-precision evaluation of a linear image loss.
//!
//! Finite differences in plain `f64` lose most of their digits to
//! cancellation once gradients get small. This module re-implements the
//! forward model (projection, sorting, compositing) generically over a
//! [`Real`] scalar, and instantiates it with a double-double type carrying
//! ~106 bits of mantissa. It shares no code with the production rasterizer
//! beyond constants.

use std::cmp::Ordering;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::gradcheck::{ParamKind, ParamRef};
use crate::cloud::GaussianCloud;
use crate::gsmath::{Camera, SUPPORT_MAHALANOBIS_SQ};
use crate::image::Image;
use crate::render::{RenderOptions, ALPHA_MAX, TRANSMITTANCE_MIN};

pub trait Real:
    Copy + PartialOrd + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
}

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

/// Unevaluated sum `hi + lo` with `|lo| ≤ ulp(hi)/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DoubleDouble {
    pub const ZERO: Self = Self { hi: 0.0, lo: 0.0 };
    const LN2: Self = Self { hi: 6.931_471_805_599_453e-1, lo: 2.319_046_813_846_299_6e-17 };

    pub fn new(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        Self { hi, lo }
    }

    fn mul_pow2(self, s: f64) -> Self {
        Self { hi: self.hi * s, lo: self.lo * s }
    }
}

impl PartialOrd for DoubleDouble {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi)? {
            Ordering::Equal => self.lo.partial_cmp(&other.lo),
            o => Some(o),
        }
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    fn add(self, b: Self) -> Self {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Self { hi, lo }
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    fn neg(self) -> Self {
        Self { hi: -self.hi, lo: -self.lo }
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    fn sub(self, b: Self) -> Self {
        self + (-b)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    fn mul(self, b: Self) -> Self {
        let (p, e) = two_prod(self.hi, b.hi);
        let (hi, lo) = quick_two_sum(p, e + (self.hi * b.lo + self.lo * b.hi));
        Self { hi, lo }
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    fn div(self, b: Self) -> Self {
        let q1 = self.hi / b.hi;
        let r = self - b * Self::from_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b * Self::from_f64(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Self { hi, lo } + Self::from_f64(q3)
    }
}

impl Real for DoubleDouble {
    fn from_f64(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn exp(self) -> Self {
        if self.hi < -745.0 {
            return Self::ZERO;
        }
        assert!(self.hi < 709.0, "exp overflow");
        let k = (self.hi / Self::LN2.hi).round();
        // |r| ≤ ln2/2, scaled by 2^-10 before the series
        let r = (self - Self::LN2 * Self::from_f64(k)).mul_pow2(1.0 / 1024.0);
        let mut term = r;
        let mut sum = r;
        for n in 2..=12 {
            term = term * r / Self::from_f64(f64::from(n));
            sum = sum + term;
        }
        // (1 + s)^2 - 1 = 2s + s^2, repeated to undo the scaling
        for _ in 0..10 {
            sum = sum.mul_pow2(2.0) + sum * sum;
        }
        let e = Self::from_f64(1.0) + sum;
        let scale = 2f64.powi(k as i32);
        e.mul_pow2(scale)
    }

    fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return Self::ZERO;
        }
        let x = self.hi.sqrt();
        let xd = Self::from_f64(x);
        xd + (self - xd * xd) * Self::from_f64(0.5 / x)
    }
}

struct GenericPrimitive<T> {
    mean: [T; 2],
    conic: [T; 3],
    depth: T,
    opacity: T,
    color: [T; 3],
}

fn project_generic<T: Real>(
    pos: [T; 3],
    raw_scale: [T; 3],
    rot: [T; 4],
    raw_opacity: T,
    color: [T; 3],
    cam: &Camera,
    low_pass: f64,
) -> Option<GenericPrimitive<T>> {
    let c = T::from_f64;
    let one = c(1.0);
    let two = c(2.0);
    let rc = |r: usize, k: usize| c(cam.rotation[(r, k)]);
    let tc: [T; 3] = std::array::from_fn(|r| rc(r, 0) * pos[0] + rc(r, 1) * pos[1] + rc(r, 2) * pos[2] + c(cam.translation[r]));
    if tc[2].to_f64() <= cam.near {
        return None;
    }
    let qn = (rot[0] * rot[0] + rot[1] * rot[1] + rot[2] * rot[2] + rot[3] * rot[3]).sqrt();
    if !(qn.to_f64() > 0.0) {
        return None;
    }
    let (w, x, y, z) = (rot[0] / qn, rot[1] / qn, rot[2] / qn, rot[3] / qn);
    let r = [
        [one - two * (y * y + z * z), two * (x * y - w * z), two * (x * z + w * y)],
        [two * (x * y + w * z), one - two * (x * x + z * z), two * (y * z - w * x)],
        [two * (x * z - w * y), two * (y * z + w * x), one - two * (x * x + y * y)],
    ];
    let s = [raw_scale[0].exp(), raw_scale[1].exp(), raw_scale[2].exp()];
    let mut cov3 = [[c(0.0); 3]; 3];
    for (i, row) in cov3.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let mut acc = c(0.0);
            for k in 0..3 {
                acc = acc + r[i][k] * s[k] * s[k] * r[j][k];
            }
            *v = acc;
        }
    }
    let iz = one / tc[2];
    let fx = c(cam.fx);
    let fy = c(cam.fy);
    let jac = [[fx * iz, c(0.0), -(fx * tc[0]) * iz * iz], [c(0.0), fy * iz, -(fy * tc[1]) * iz * iz]];
    // T = J·W
    let tm: [[T; 3]; 2] = std::array::from_fn(|a| {
        std::array::from_fn(|b| jac[a][0] * rc(0, b) + jac[a][1] * rc(1, b) + jac[a][2] * rc(2, b))
    });
    let quad = |a: usize, b: usize| {
        let mut acc = c(0.0);
        for i in 0..3 {
            for j in 0..3 {
                acc = acc + tm[a][i] * cov3[i][j] * tm[b][j];
            }
        }
        acc
    };
    let s00 = quad(0, 0) + c(low_pass);
    let s01 = quad(0, 1);
    let s11 = quad(1, 1) + c(low_pass);
    let det = s00 * s11 - s01 * s01;
    if !(det.to_f64() > 0.0) {
        return None;
    }
    let inv = one / det;
    Some(GenericPrimitive {
        mean: [fx * tc[0] * iz + c(cam.cx), fy * tc[1] * iz + c(cam.cy)],
        conic: [s11 * inv, -s01 * inv, s00 * inv],
        depth: tc[2],
        opacity: one / (one + (-raw_opacity).exp()),
        color,
    })
}

fn fnv(h: &mut u64, v: u64) {
    for b in v.to_le_bytes() {
        *h ^= u64::from(b);
        *h = h.wrapping_mul(0x0100_0000_01b3);
    }
}

/// Evaluates `Σ_p Σ_ch weights[p][ch] · color[p][ch]` over the pixel
/// rectangle `region = (x0, x1, y0, y1)` (half-open), with one parameter
/// optionally replaced by `value`.
///
/// Also returns a hash of the compositing structure (which primitive was
/// blended where, clamped or not, where each pixel terminated); two
/// evaluations with equal hashes lie on the same smooth piece of the loss.
pub fn linear_loss_extended<T: Real>(
    cloud: &GaussianCloud,
    cam: &Camera,
    weights: &Image,
    opts: &RenderOptions,
    replace: Option<(ParamRef, T)>,
    region: (u32, u32, u32, u32),
) -> (T, u64) {
    let c = T::from_f64;
    let prims: Vec<Option<GenericPrimitive<T>>> = (0..cloud.len())
        .map(|i| {
            let v3 = |v: &nalgebra::Vector3<f64>| [c(v.x), c(v.y), c(v.z)];
            let mut pos = v3(&cloud.positions[i]);
            let mut scale = v3(&cloud.raw_scales[i]);
            let q = &cloud.rotations[i];
            let mut rot = [c(q[0]), c(q[1]), c(q[2]), c(q[3])];
            let mut op = c(cloud.raw_opacities[i]);
            let mut col = v3(&cloud.colors[i]);
            if let Some((pr, v)) = replace {
                if pr.primitive == i {
                    match pr.kind {
                        ParamKind::Position => pos[pr.component] = v,
                        ParamKind::RawScale => scale[pr.component] = v,
                        ParamKind::Rotation => rot[pr.component] = v,
                        ParamKind::RawOpacity => op = v,
                        ParamKind::Color => col[pr.component] = v,
                    }
                }
            }
            project_generic(pos, scale, rot, op, col, cam, opts.low_pass)
        })
        .collect();
    let mut order: Vec<usize> = (0..prims.len()).filter(|&i| prims[i].is_some()).collect();
    order.sort_by(|&a, &b| {
        let da = prims[a].as_ref().map(|p| p.depth).unwrap();
        let db = prims[b].as_ref().map(|p| p.depth).unwrap();
        da.partial_cmp(&db).unwrap_or(Ordering::Equal).then(a.cmp(&b))
    });

    let (x0, x1, y0, y1) = region;
    let mut loss = c(0.0);
    let mut sig: u64 = 0xcbf2_9ce4_8422_2325;
    let alpha_max = c(ALPHA_MAX);
    for py in y0..y1 {
        for px in x0..x1 {
            let (fxp, fyp) = (c(f64::from(px)), c(f64::from(py)));
            let mut t = c(1.0);
            let mut col = [c(0.0); 3];
            for &i in &order {
                let p = prims[i].as_ref().unwrap();
                let dx = fxp - p.mean[0];
                let dy = fyp - p.mean[1];
                let maha = p.conic[0] * dx * dx + c(2.0) * p.conic[1] * dx * dy + p.conic[2] * dy * dy;
                if !(maha.to_f64() <= SUPPORT_MAHALANOBIS_SQ) {
                    continue;
                }
                let raw = p.opacity * (c(-0.5) * maha).exp();
                if !(raw.to_f64() > 0.0) {
                    continue;
                }
                let clamped = raw > alpha_max;
                let alpha = if clamped { alpha_max } else { raw };
                let t_next = t * (c(1.0) - alpha);
                if t_next.to_f64() < TRANSMITTANCE_MIN {
                    fnv(&mut sig, u64::MAX);
                    break;
                }
                fnv(&mut sig, ((py as u64) << 40) | ((px as u64) << 20) | ((i as u64) << 1) | u64::from(clamped));
                let w = alpha * t;
                for ch in 0..3 {
                    col[ch] = col[ch] + p.color[ch] * w;
                }
                t = t_next;
            }
            let p = (py * cam.width + px) as usize;
            for ch in 0..3 {
                let v = col[ch] + t * c(opts.background[ch]);
                loss = loss + c(weights.data[3 * p + ch]) * v;
            }
        }
    }
    (loss, sig)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_double_exp_and_sqrt() {
        let e = DoubleDouble::from_f64(1.0).exp();
        assert_eq!(e.hi, std::f64::consts::E);
        assert!((e.lo - 1.445_646_891_729_250_2e-16).abs() < 1e-30);
        let two = DoubleDouble::from_f64(2.0).sqrt();
        assert_eq!(two.hi, std::f64::consts::SQRT_2);
        assert!((two.lo - (-9.667_293_313_452_913e-17)).abs() < 1e-30);
        // exp(a)·exp(-a) = 1 to ~1e-30
        let a = DoubleDouble::new(-3.7, 1e-18);
        let p = a.exp() * (-a).exp() - DoubleDouble::from_f64(1.0);
        assert!(p.to_f64().abs() < 1e-29, "{p:?}");
    }

    #[test]
    fn division_round_trips() {
        let a = DoubleDouble::new(1.0, 1e-20);
        let b = DoubleDouble::from_f64(3.0);
        let q = a / b;
        let back = q * b - a;
        assert!(back.to_f64().abs() < 1e-31);
    }
}
