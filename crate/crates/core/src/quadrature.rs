//! Globally adaptive 21-point Gauss–Kronrod quadrature on finite intervals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{BdfError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        QuadratureSettings {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_intervals: 200,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadratureValue {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

// Kronrod abscissae and weights (QUADPACK qk21), Gauss weights on the odd nodes.
const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077208109241234,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];
const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[10];
    let mut gauss = 0.0;
    for j in 0..10 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    ((kronrod * h), ((kronrod - gauss) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// ∫_a^b f, bisecting the interval with the largest error estimate until the
/// total estimate meets max(abs_tol, rel_tol·|value|).
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    settings: &QuadratureSettings,
) -> Result<QuadratureValue> {
    if a == b {
        return Ok(QuadratureValue {
            value: 0.0,
            error: 0.0,
            intervals: 0,
        });
    }
    let (value, error) = gk21(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value, error });
    let mut total = value;
    let mut total_err = error;
    let mut intervals = 1;
    loop {
        if !total.is_finite() {
            return Err(BdfError::Quadrature {
                a,
                b,
                value: total,
                error: total_err,
            });
        }
        if total_err <= settings.abs_tol.max(settings.rel_tol * total.abs()) {
            return Ok(QuadratureValue {
                value: total,
                error: total_err,
                intervals,
            });
        }
        if intervals >= settings.max_intervals {
            return Err(BdfError::Quadrature {
                a,
                b,
                value: total,
                error: total_err,
            });
        }
        let worst = heap.pop().expect("non-empty interval heap");
        let mid = 0.5 * (worst.a + worst.b);
        let (v1, e1) = gk21(&f, worst.a, mid);
        let (v2, e2) = gk21(&f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Piece {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
        intervals += 1;
        // Re-sum occasionally so cancellation in the running totals cannot
        // stall convergence.
        if intervals % 32 == 0 {
            total = heap.iter().map(|p| p.value).sum();
            total_err = heap.iter().map(|p| p.error).sum();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let s = QuadratureSettings::default();
        let r = integrate(|x| 3.0 * x * x - x + 2.0, -1.0, 2.0, &s).unwrap();
        assert!((r.value - (8.0 + 1.0 - 1.5 + 6.0)).abs() < 1e-13);
        assert_eq!(r.intervals, 1);
    }

    #[test]
    fn peaked_integrand() {
        let s = QuadratureSettings::default();
        let r = integrate(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, &s).unwrap();
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((r.value - exact).abs() <= 1e-8 * exact);
    }

    #[test]
    fn log_endpoint_singularity() {
        let s = QuadratureSettings::default();
        let r = integrate(|x: f64| -x.ln(), 0.0, 1.0, &s).unwrap();
        assert!((r.value - 1.0).abs() < 1e-8, "{}", r.value);
    }

    #[test]
    fn failure_is_reported() {
        let s = QuadratureSettings {
            max_intervals: 3,
            ..Default::default()
        };
        let r = integrate(|x: f64| (1.0 / x).sin() / x, 1e-6, 1.0, &s);
        assert!(matches!(r, Err(BdfError::Quadrature { .. })));
    }
}
