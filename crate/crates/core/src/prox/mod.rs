//! Proximal operators and the target models built on them.

mod gaussian;
mod nuclear;
mod poisson;
mod separable;
mod trendfilter;

pub use gaussian::{prox_gaussian, GaussianModel};
pub use nuclear::{prox_nuclear, svt, NuclearModel, NuclearSpec};
pub use poisson::{prox_poisson, NewtonReport, PoissonModel, PoissonSpec};
pub use separable::{Penalty, SeparableModel};
pub use trendfilter::{
    diff_matrix, prox_trendfilter, AdmmSettings, AdmmSolution, DiffOperator, GeneralizedLasso,
    TrendfilterModel, TrendfilterSpec,
};

use crate::scalar::Scalar;

/// Soft thresholding, the prox of `t |x|`.
pub fn prox_abs<T: Scalar>(x: T, t: T) -> T {
    let shrunk = (x.abs() - t).max(T::zero());
    if x < T::zero() {
        -shrunk
    } else {
        shrunk
    }
}

/// Prox of `y^4` with parameter `lambda`: the real root of
/// `4 y^3 + (y - x) / lambda = 0`.
///
/// Uses the hyperbolic form of the depressed-cubic root, which avoids the
/// cancellation of the Cardano expression for small and negative `x`,
/// followed by one Newton polish.
pub fn prox_power4<T: Scalar>(x: T, lambda: T) -> T {
    if x == T::zero() {
        return T::zero();
    }
    let three = T::of(3.0);
    let s = (three * lambda).sqrt();
    let mut y = ((three * x * s).asinh() / three).sinh() / s;
    let f = T::of(4.0) * y * y * y + (y - x) / lambda;
    let df = T::of(12.0) * y * y + lambda.recip();
    y -= f / df;
    y
}

/// Prox of `a x^2 + b |x|`.
pub fn prox_quad_l1<T: Scalar>(x: T, a: T, b: T, lambda: T) -> T {
    let dead = lambda * b;
    let denom = T::one() + (a + a) * lambda;
    if x > dead {
        (x - dead) / denom
    } else if x < -dead {
        (x + dead) / denom
    } else {
        T::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Golden-section minimization of a unimodal function on `[a, b]`.
    pub(crate) fn golden(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - r * (b - a);
        let mut d = a + r * (b - a);
        for _ in 0..200 {
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
            c = b - r * (b - a);
            d = a + r * (b - a);
        }
        (a + b) / 2.0
    }

    /// The closed form printed for this prox, evaluated literally.
    fn power4_cardano(x: f64, l: f64) -> f64 {
        let c = 3f64.sqrt() * (l.powi(3) * (27.0 * l * x * x + 1.0)).sqrt() + 9.0 * l * l * x;
        (3f64.cbrt() * c.powf(2.0 / 3.0) - 3f64.powf(2.0 / 3.0) * l) / (6.0 * l * c.cbrt())
    }

    #[test]
    fn abs_examples() {
        assert_eq!(prox_abs(2.0, 0.5), 1.5);
        assert_eq!(prox_abs(0.3, 0.5), 0.0);
        assert_eq!(prox_abs(-2.0, 0.5), -1.5);
    }

    #[test]
    fn quad_l1_examples() {
        assert_eq!(prox_quad_l1(2.0, 1.0, 1.0, 0.5), 0.75);
        assert_eq!(prox_quad_l1(0.3, 1.0, 1.0, 0.5), 0.0);
        assert_eq!(prox_quad_l1(-2.0, 1.0, 1.0, 0.5), -0.75);
    }

    #[test]
    fn power4_examples() {
        assert_eq!(prox_power4(0.0, 0.25), 0.0);
        let oracle = golden(|y| y.powi(4) + (1.0 - y).powi(2) / 0.5, -2.0, 2.0);
        assert!((prox_power4(1.0, 0.25) - oracle).abs() < 1e-8);
    }

    #[test]
    fn power4_matches_printed_closed_form() {
        for &l in &[0.01, 0.25, 1.0, 3.0] {
            for &x in &[0.5, 1.0, 2.0, 7.5] {
                let a = prox_power4(x, l);
                let b = power4_cardano(x, l);
                assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "x={x} l={l}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn power4_in_f32() {
        let y = prox_power4(1.0f32, 0.25f32);
        assert!((y as f64 - prox_power4(1.0f64, 0.25)).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn power4_stationary(x in -20.0f64..20.0, lambda in 1e-3f64..5.0) {
            let y = prox_power4(x, lambda);
            let scale = 1.0 + x.abs() / lambda;
            prop_assert!((4.0 * y.powi(3) + (y - x) / lambda).abs() <= 1e-10 * scale);
        }

        #[test]
        fn power4_odd(x in -20.0f64..20.0, lambda in 1e-3f64..5.0) {
            prop_assert_eq!(prox_power4(-x, lambda), -prox_power4(x, lambda));
        }

        #[test]
        fn scalar_proxes_match_golden_section(x in -10.0f64..10.0, lambda in 0.01f64..3.0) {
            let abs = golden(|y| y.abs() + (y - x).powi(2) / (2.0 * lambda), -11.0, 11.0);
            prop_assert!((prox_abs(x, lambda) - abs).abs() < 1e-6);
            let quartic = golden(|y| y.powi(4) + (y - x).powi(2) / (2.0 * lambda), -11.0, 11.0);
            prop_assert!((prox_power4(x, lambda) - quartic).abs() < 1e-6);
            let ql = golden(|y| 0.7 * y * y + 1.3 * y.abs() + (y - x).powi(2) / (2.0 * lambda), -11.0, 11.0);
            prop_assert!((prox_quad_l1(x, 0.7, 1.3, lambda) - ql).abs() < 1e-6);
        }

        #[test]
        fn scalar_proxes_firmly_nonexpansive(x in -10.0f64..10.0, y in -10.0f64..10.0, lambda in 0.01f64..3.0) {
            for p in [
                |v: f64, l: f64| prox_abs(v, l),
                |v: f64, l: f64| prox_power4(v, l),
                |v: f64, l: f64| prox_quad_l1(v, 0.7, 1.3, l),
            ] {
                let (px, py) = (p(x, lambda), p(y, lambda));
                prop_assert!((px - py).powi(2) <= (x - y) * (px - py) + 1e-12);
            }
        }
    }
}
