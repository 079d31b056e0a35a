//! Box-constrained quasi-Newton minimization with finite-difference gradients.
//!
//! Projected BFGS: the inverse-Hessian approximation acts on the free
//! variables only, variables pinned at a bound with an outward gradient are
//! frozen for the iteration, and trial points are clamped back into the box.

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Stop when an accepted step improves the cost by less than this.
    pub cost_tolerance: f64,
    /// Stop when the projected gradient norm falls below this.
    pub gradient_tolerance: f64,
    /// Finite-difference step.
    pub fd_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iterations: 300, cost_tolerance: 1e-10, gradient_tolerance: 1e-10, fd_step: 1e-7 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Minimum<const N: usize> {
    pub x: [f64; N],
    pub cost: f64,
    pub iterations: usize,
}

fn clamp<const N: usize>(x: [f64; N], lo: &[f64; N], hi: &[f64; N]) -> [f64; N] {
    std::array::from_fn(|i| x[i].clamp(lo[i], hi[i]))
}

/// Central differences, one-sided where a bound is in the way.
pub fn gradient<const N: usize, F: Fn(&[f64; N]) -> f64>(
    f: &F,
    x: &[f64; N],
    lo: &[f64; N],
    hi: &[f64; N],
    h: f64,
) -> [f64; N] {
    let fx = f(x);
    std::array::from_fn(|i| {
        let mut xp = *x;
        let mut xm = *x;
        let up = (x[i] + h).min(hi[i]);
        let down = (x[i] - h).max(lo[i]);
        xp[i] = up;
        xm[i] = down;
        let (fp, fm) = (if up > x[i] { f(&xp) } else { fx }, if down < x[i] { f(&xm) } else { fx });
        let span = up - down;
        if span > 0.0 {
            (fp - fm) / span
        } else {
            0.0
        }
    })
}

pub fn minimize_bounded<const N: usize, F: Fn(&[f64; N]) -> f64>(
    f: F,
    x0: [f64; N],
    lo: [f64; N],
    hi: [f64; N],
    opts: &BfgsOptions,
) -> Minimum<N> {
    let identity = || -> [[f64; N]; N] { std::array::from_fn(|i| std::array::from_fn(|j| if i == j { 1.0 } else { 0.0 })) };
    let mut x = clamp(x0, &lo, &hi);
    let mut fx = f(&x);
    let mut g = gradient(&f, &x, &lo, &hi, opts.fd_step);
    let mut h_inv = identity();
    let mut fresh = true;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let free: [bool; N] = std::array::from_fn(|i| !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)));
        let pg_norm = (0..N).filter(|&i| free[i]).map(|i| g[i] * g[i]).sum::<f64>().sqrt();
        if pg_norm < opts.gradient_tolerance {
            break;
        }

        let mut d: [f64; N] = std::array::from_fn(|i| {
            if free[i] {
                -(0..N).filter(|&j| free[j]).map(|j| h_inv[i][j] * g[j]).sum::<f64>()
            } else {
                0.0
            }
        });
        let slope: f64 = (0..N).map(|i| d[i] * g[i]).sum();
        if slope >= 0.0 {
            h_inv = identity();
            fresh = true;
            d = std::array::from_fn(|i| if free[i] { -g[i] } else { 0.0 });
        }
        // keep the first step of a fresh model modest
        let mut alpha = if fresh { (0.1 / d.iter().fold(0.0f64, |m, v| m.max(v.abs()))).min(1.0) } else { 1.0 };

        let mut accepted = None;
        for _ in 0..50 {
            let xn = clamp(std::array::from_fn(|i| x[i] + alpha * d[i]), &lo, &hi);
            let fxn = f(&xn);
            let decrease: f64 = (0..N).map(|i| g[i] * (xn[i] - x[i])).sum();
            if fxn <= fx + 1e-4 * decrease && fxn <= fx {
                accepted = Some((xn, fxn));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fxn)) = accepted else {
            if fresh {
                break;
            }
            h_inv = identity();
            fresh = true;
            continue;
        };

        let gn = gradient(&f, &xn, &lo, &hi, opts.fd_step);
        let s: [f64; N] = std::array::from_fn(|i| xn[i] - x[i]);
        let y: [f64; N] = std::array::from_fn(|i| gn[i] - g[i]);
        let improvement = fx - fxn;
        x = xn;
        fx = fxn;
        g = gn;
        if improvement < opts.cost_tolerance {
            break;
        }

        let sy: f64 = (0..N).map(|i| s[i] * y[i]).sum();
        if sy > 1e-16 {
            // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ
            let rho = 1.0 / sy;
            let hy: [f64; N] = std::array::from_fn(|i| (0..N).map(|j| h_inv[i][j] * y[j]).sum());
            let yhy: f64 = (0..N).map(|i| y[i] * hy[i]).sum();
            for i in 0..N {
                for j in 0..N {
                    h_inv[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
            fresh = false;
        }
    }
    Minimum { x, cost: fx, iterations }
}
