//! Vectorizable f32 activation kernels for the network forward pass.
//!
//! The hidden layers run in f32, and at production sizes the transcendental
//! activations dominate unless they vectorize. `exp` is implemented with the
//! usual exp2 range reduction and a degree-6 polynomial (relative error
//! below 2e-7 on the range used), written branch-free so the compiler can
//! lower it to SIMD; the AVX2+FMA path is selected at runtime.

use crate::kernel::{Activation, ActivationKind};

const LOG2_E: f32 = std::f32::consts::LOG2_E;
// Cody-Waite split of ln 2: the high part is exact in 12 mantissa bits, so
// t - n * LN2_HI cancels without rounding and the reduced argument keeps
// full precision even at large |t|.
const LN2_HI: f32 = 0.693_359_375;
const LN2_LO: f32 = -2.121_944_4e-4;
// 1.5 * 2^23: adding and subtracting rounds to the nearest integer.
const ROUND_MAGIC: f32 = 12_582_912.0;

/// exp(t) for t <= 0, flushing to zero below the f32-normal range.
#[inline(always)]
fn exp_neg(t: f32) -> f32 {
    let y = t * LOG2_E;
    let n = (y + ROUND_MAGIC) - ROUND_MAGIC;
    let r = (t - n * LN2_HI) - n * LN2_LO;
    let p = 1.0
        + r * (1.0
            + r * (0.5
                + r * (1.0 / 6.0 + r * (1.0 / 24.0 + r * (1.0 / 120.0 + r * (1.0 / 720.0))))));
    let bits = (((n as i32) + 127) << 23) as u32;
    let v = p * f32::from_bits(bits);
    if t < -87.0 {
        0.0
    } else {
        v
    }
}

#[inline(always)]
fn gauss_impl(xs: &mut [f32], half_a2: f32) {
    for x in xs {
        *x = exp_neg(-half_a2 * *x * *x);
    }
}

#[inline(always)]
fn tanh_impl(xs: &mut [f32]) {
    for x in xs {
        let a = x.abs();
        let e = exp_neg(-2.0 * a);
        let t = (1.0 - e) / (1.0 + e);
        *x = if *x < 0.0 { -t } else { t };
    }
}

#[inline(always)]
fn relu_impl(xs: &mut [f32]) {
    for x in xs {
        *x = x.max(0.0);
    }
}

#[cfg(any(target_arch = "x86", target_arch = "x86_64"))]
mod x86 {
    #[target_feature(enable = "avx2,fma")]
    pub unsafe fn gauss(xs: &mut [f32], half_a2: f32) {
        super::gauss_impl(xs, half_a2)
    }

    #[target_feature(enable = "avx2,fma")]
    pub unsafe fn tanh(xs: &mut [f32]) {
        super::tanh_impl(xs)
    }

    pub fn available() -> bool {
        std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma")
    }
}

fn gauss_slice(xs: &mut [f32], half_a2: f32) {
    #[cfg(any(target_arch = "x86", target_arch = "x86_64"))]
    if x86::available() {
        return unsafe { x86::gauss(xs, half_a2) };
    }
    gauss_impl(xs, half_a2)
}

fn tanh_slice(xs: &mut [f32]) {
    #[cfg(any(target_arch = "x86", target_arch = "x86_64"))]
    if x86::available() {
        return unsafe { x86::tanh(xs) };
    }
    tanh_impl(xs)
}

/// Apply the activation elementwise, in place.
pub fn apply_activation(act: &Activation, xs: &mut [f32]) {
    match &act.kind {
        ActivationKind::GaussianRbf { a } => gauss_slice(xs, (0.5 * a * a) as f32),
        ActivationKind::Relu => relu_impl(xs),
        ActivationKind::Tanh => tanh_slice(xs),
        ActivationKind::NumericTable(t) => {
            for x in xs {
                *x = t.eval(*x as f64) as f32;
            }
        }
    }
}
