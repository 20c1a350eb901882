//! Small dense kernels used by the block subsolver.
//!
//! Matrices here are square, column-major `&[f64]` buffers of side `n`. Block
//! sizes are capped at 20, so these stay allocation-free in the hot loop and
//! avoid going through `nalgebra` for every one of the 2^k supports.

/// Overwrites the lower triangle of `a` with its Cholesky factor.
/// Returns false if `a` is not (numerically) positive definite.
pub(crate) fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    debug_assert_eq!(a.len(), n * n);
    for j in 0..n {
        let mut d = a[j + j * n];
        for p in 0..j {
            let l = a[j + p * n];
            d -= l * l;
        }
        // relative pivot floor: anything below this is singular for our purposes
        let scale = a[j + j * n].abs().max(f64::MIN_POSITIVE);
        if !(d > 1e-13 * scale) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[j + j * n] = d;
        for i in j + 1..n {
            let mut s = a[i + j * n];
            for p in 0..j {
                s -= a[i + p * n] * a[j + p * n];
            }
            a[i + j * n] = s / d;
        }
    }
    true
}

/// Solves `L Lᵀ x = b` in place given the factor from [`cholesky_in_place`].
pub(crate) fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for p in 0..i {
            s -= l[i + p * n] * b[p];
        }
        b[i] = s / l[i + i * n];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for p in i + 1..n {
            s -= l[p + i * n] * b[p];
        }
        b[i] = s / l[i + i * n];
    }
}

/// `0.5 vᵀ M v + qᵀ v` for a column-major `M`.
#[cfg(test)]
pub(crate) fn quad_form(m: &[f64], n: usize, q: &[f64], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for j in 0..n {
        let mut col = 0.0;
        for i in 0..n {
            col += m[i + j * n] * v[i];
        }
        acc += v[j] * (0.5 * col + q[j]);
    }
    acc
}

/// Minimizes `0.5 vᵀ M v + qᵀ v` over the box `[-rho, rho]^n` for symmetric
/// positive definite `M` using a primal active-set Newton method.
///
/// Starts from the interior point 0, takes Newton steps on the free
/// coordinates with a ratio test against the bounds, and releases the bound
/// with the most negative multiplier once the free subproblem is solved.
/// Terminates finitely for strictly convex problems; `tol` bounds the
/// multiplier sign test. Returns `None` when a free block is not PD.
pub(crate) fn box_qp(m: &[f64], q: &[f64], n: usize, rho: f64, tol: f64) -> Option<Vec<f64>> {
    #[derive(Clone, Copy, PartialEq)]
    enum State {
        Free,
        Upper,
        Lower,
    }
    let mut v = vec![0.0; n];
    let mut state = vec![State::Free; n];
    let mut fac = Vec::with_capacity(n * n);
    let mut rhs = Vec::with_capacity(n);
    let mut grad = vec![0.0; n];
    let max_iter = 50 + 10 * n * n;

    for _ in 0..max_iter {
        for i in 0..n {
            let mut g = q[i];
            for j in 0..n {
                g += m[i + j * n] * v[j];
            }
            grad[i] = g;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == State::Free).collect();
        let nf = free.len();

        let mut step = vec![0.0; n];
        let mut step_norm = 0.0f64;
        if nf > 0 {
            fac.clear();
            for &c in &free {
                for &r in &free {
                    fac.push(m[r + c * n]);
                }
            }
            if !cholesky_in_place(&mut fac, nf) {
                return None;
            }
            rhs.clear();
            rhs.extend(free.iter().map(|&i| -grad[i]));
            cholesky_solve(&fac, nf, &mut rhs);
            for (a, &i) in free.iter().enumerate() {
                step[i] = rhs[a];
                step_norm = step_norm.max(rhs[a].abs());
            }
        }

        if step_norm <= tol * (1.0 + rho.min(1e300)) {
            // free subproblem solved: check the multipliers of the active bounds
            let mut worst = None;
            let mut worst_val = tol;
            for i in 0..n {
                let viol = match state[i] {
                    State::Upper => grad[i],
                    State::Lower => -grad[i],
                    State::Free => continue,
                };
                if viol > worst_val {
                    worst_val = viol;
                    worst = Some(i);
                }
            }
            match worst {
                Some(i) => state[i] = State::Free,
                None => return Some(v),
            }
            continue;
        }

        let mut alpha = 1.0;
        let mut blocking = None;
        for &i in &free {
            let d = step[i];
            let room = if d > 0.0 {
                rho - v[i]
            } else if d < 0.0 {
                -rho - v[i]
            } else {
                continue;
            };
            let a = (room / d).max(0.0);
            if a < alpha {
                alpha = a;
                blocking = Some(i);
            }
        }
        for &i in &free {
            v[i] += alpha * step[i];
        }
        if let Some(i) = blocking {
            if step[i] > 0.0 {
                v[i] = rho;
                state[i] = State::Upper;
            } else {
                v[i] = -rho;
                state[i] = State::Lower;
            }
        }
    }
    Some(v)
}
