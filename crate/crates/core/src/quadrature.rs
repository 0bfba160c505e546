//! Tanh-sinh (double exponential) quadrature.
//!
//! Endpoint singularities of algebraic type are integrated to near machine
//! precision, which is what the limit-law densities need (`x^(2c1-1)` at the
//! origin, polynomial tails on the half line).

use std::f64::consts::FRAC_PI_2;

const MAX_LEVEL: u32 = 10;
const U_MAX: f64 = 4.0;

/// `int_0^1 f` where `f` is called with `(t, 1 - t)`, both computed without
/// cancellation.
pub fn integrate_unit<F: Fn(f64, f64) -> f64>(f: F, tol: f64) -> f64 {
    let eval = |u: f64| -> f64 {
        let v = FRAC_PI_2 * u.sinh();
        let t = 1.0 / (1.0 + (-2.0 * v).exp());
        let s = 1.0 / (1.0 + (2.0 * v).exp());
        if t <= 0.0 || s <= 0.0 {
            return 0.0;
        }
        let w = FRAC_PI_2 * u.cosh() * t * s * 2.0;
        let y = f(t, s) * w;
        if y.is_finite() {
            y
        } else {
            0.0
        }
    };
    let mut h = 0.5;
    let mut sum: f64 = eval(0.0);
    let mut k = 1;
    while k as f64 * h <= U_MAX {
        let u = k as f64 * h;
        sum += eval(u) + eval(-u);
        k += 1;
    }
    let mut estimate = sum * h;
    for _ in 0..MAX_LEVEL {
        h /= 2.0;
        // new nodes are the odd multiples of the halved step
        let mut k = 1;
        while k as f64 * h <= U_MAX {
            let u = k as f64 * h;
            sum += eval(u) + eval(-u);
            k += 2;
        }
        let next = sum * h;
        let done = (next - estimate).abs() <= tol * next.abs().max(1.0);
        estimate = next;
        if done {
            break;
        }
    }
    estimate
}

/// `int_0^inf g` through the map `x = t / (1 - t)`.
pub fn integrate_half_line<G: Fn(f64) -> f64>(g: G, tol: f64) -> f64 {
    integrate_unit(
        |t, s| {
            let x = t / s;
            g(x) / (s * s)
        },
        tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_singular() {
        let v = integrate_unit(|t, _| t * t, 1e-14);
        assert!((v - 1.0 / 3.0).abs() < 1e-13);
        let v = integrate_unit(|t, _| t.powf(-0.5), 1e-14);
        assert!((v - 2.0).abs() < 1e-10);
        let v = integrate_unit(|_, s| s.ln(), 1e-14);
        assert!((v + 1.0).abs() < 1e-12);
    }

    #[test]
    fn half_line() {
        let v = integrate_half_line(|x| (-x).exp(), 1e-14);
        assert!((v - 1.0).abs() < 1e-12);
        let v = integrate_half_line(|x| 1.0 / (1.0 + x * x), 1e-14);
        assert!((v - FRAC_PI_2).abs() < 1e-12);
    }
}
