//! Composite Newton-Cotes rules on uniform nodes and exponential product
//! integration weights.

/// Weights (in units of the node spacing) of a composite rule over
/// `n_intervals` uniform intervals: Simpson when even, Simpson followed by
/// a closing 3/8 panel when odd, trapezoid for a single interval.
pub fn composite_weights(n_intervals: usize) -> Vec<f64> {
    let mut w = vec![0.0; n_intervals + 1];
    match n_intervals {
        0 => {}
        1 => {
            w[0] = 0.5;
            w[1] = 0.5;
        }
        _ => {
            let simpson_part = if n_intervals % 2 == 0 {
                n_intervals
            } else {
                n_intervals - 3
            };
            for panel in (0..simpson_part).step_by(2) {
                w[panel] += 1.0 / 3.0;
                w[panel + 1] += 4.0 / 3.0;
                w[panel + 2] += 1.0 / 3.0;
            }
            if simpson_part != n_intervals {
                let s = simpson_part;
                w[s] += 3.0 / 8.0;
                w[s + 1] += 9.0 / 8.0;
                w[s + 2] += 9.0 / 8.0;
                w[s + 3] += 3.0 / 8.0;
            }
        }
    }
    w
}

/// Weights for the single interval `[x0, x1]` using a quadratic through
/// `x0, x1, x2` (the third node lies outside the interval).
pub const ONE_INTERVAL_EXTRAPOLATED: [f64; 3] = [5.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0];

pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n_intervals: usize) -> f64 {
    let n = n_intervals.max(2) + n_intervals.max(2) % 2;
    let h = (b - a) / n as f64;
    composite_weights(n)
        .iter()
        .enumerate()
        .map(|(i, w)| w * f(a + i as f64 * h))
        .sum::<f64>()
        * h
}

#[derive(Debug, Clone, Copy)]
pub struct QuadratureEstimate {
    pub value: f64,
    pub error_estimate: f64,
    pub intervals: usize,
}

/// Composite Simpson with interval doubling until the Richardson error
/// estimate `|S_2n - S_n| / 15` drops under `tol`.
pub fn simpson_to_tolerance<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    tol: f64,
) -> QuadratureEstimate {
    const MAX_INTERVALS: usize = 1 << 22;
    if b <= a {
        return QuadratureEstimate {
            value: 0.0,
            error_estimate: 0.0,
            intervals: 0,
        };
    }
    let mut n = 64;
    let mut coarse = simpson(&f, a, b, n);
    loop {
        let fine = simpson(&f, a, b, 2 * n);
        let err = (fine - coarse).abs() / 15.0;
        n *= 2;
        if err <= tol || n >= MAX_INTERVALS {
            return QuadratureEstimate {
                value: fine,
                error_estimate: err,
                intervals: n,
            };
        }
        coarse = fine;
    }
}

/// phi_k(z) = sum_j z^j / (j + k)! for k = 0..=kmax.
pub fn phi_functions(z: f64, kmax: usize) -> Vec<f64> {
    let mut phi = vec![0.0; kmax + 1];
    if z.abs() < 0.5 {
        for (k, slot) in phi.iter_mut().enumerate() {
            let mut term = 1.0 / factorial(k);
            let mut sum = term;
            for j in 1..30 {
                term *= z / (j + k) as f64;
                sum += term;
                if term.abs() < 1e-18 * sum.abs() {
                    break;
                }
            }
            *slot = sum;
        }
    } else {
        phi[0] = z.exp();
        for k in 1..=kmax {
            phi[k] = (phi[k - 1] - 1.0 / factorial(k - 1)) / z;
        }
    }
    phi
}

fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * i as f64)
}

/// Weights `w` with `int_0^delta exp(rate (delta - x)) F(x) dx ~ sum w_k F(x_k)`
/// where `F` is the Lagrange interpolant through the nodes `x_k` (offsets
/// relative to the interval start, any order, may lie outside `[0, delta]`).
pub fn exp_product_weights(rate: f64, delta: f64, nodes: &[f64]) -> Vec<f64> {
    let d = nodes.len();
    let z = rate * delta;
    let phi = phi_functions(z, d);
    // moments of theta^p against exp(z (1 - theta)) on [0, 1]
    let moments: Vec<f64> = (0..d).map(|p| factorial(p) * phi[p + 1]).collect();
    let scaled: Vec<f64> = nodes.iter().map(|x| x / delta).collect();
    (0..d)
        .map(|k| {
            // coefficients of the k-th Lagrange basis polynomial in theta
            let mut poly = vec![1.0];
            let mut denom = 1.0;
            for (j, xj) in scaled.iter().enumerate() {
                if j == k {
                    continue;
                }
                let mut next = vec![0.0; poly.len() + 1];
                for (p, c) in poly.iter().enumerate() {
                    next[p + 1] += c;
                    next[p] -= c * xj;
                }
                poly = next;
                denom *= scaled[k] - xj;
            }
            delta * poly.iter().zip(&moments).map(|(c, m)| c * m).sum::<f64>() / denom
        })
        .collect()
}
