//! Dense nonsymmetric eigenvalue solver: balancing, elimination to upper
//! Hessenberg form, and Francis double-shift QR iteration (eigenvalues
//! only). Classic EISPACK/Numerical-Recipes lineage, specialized to f64.
//!
//! Complex eigenvalues of real input come out as exact conjugate pairs:
//! each 2x2 deflation writes `x ± iy` from a single (x, y) computation.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Computes all eigenvalues (with multiplicity) of a real square matrix.
/// The iteration budget is `100 * n` QR sweeps in total; exceeding it
/// reports non-convergence instead of truncating the spectrum.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "eigenvalue input must be square, got {}x{}",
            n,
            m.ncols()
        )));
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric(
            "eigenvalue input has non-finite entries".into(),
        ));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut a = m.clone();
    balance(&mut a);
    hessenberg(&mut a);
    hqr(&mut a, 100 * n)
}

/// Diagonal similarity scaling by radix powers so that row and column
/// norms are comparable; exact (no rounding) because the radix is 2.
fn balance(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    let radix = 2.0_f64;
    let sqrdx = radix * radix;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / radix;
                let mut f = 1.0;
                let s = c + r;
                let mut c_acc = c;
                while c_acc < g {
                    f *= radix;
                    c_acc *= sqrdx;
                }
                g = r * radix;
                while c_acc > g {
                    f /= radix;
                    c_acc /= sqrdx;
                }
                if (c_acc + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    for j in 0..n {
                        a[(i, j)] *= g;
                    }
                    for j in 0..n {
                        a[(j, i)] *= f;
                    }
                }
            }
        }
    }
}

/// Reduction to upper Hessenberg form by stabilized elementary similarity
/// transformations (pivoted Gaussian elimination below the subdiagonal).
fn hessenberg(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    if n < 3 {
        return;
    }
    for m in 1..n - 1 {
        let mut x = 0.0_f64;
        let mut piv = m;
        for j in m..n {
            if a[(j, m - 1)].abs() > x.abs() {
                x = a[(j, m - 1)];
                piv = j;
            }
        }
        if piv != m {
            for j in m - 1..n {
                a.swap((piv, j), (m, j));
            }
            for j in 0..n {
                a.swap((j, piv), (j, m));
            }
        }
        if x != 0.0 {
            for i in m + 1..n {
                let mut y = a[(i, m - 1)];
                if y != 0.0 {
                    y /= x;
                    a[(i, m - 1)] = y;
                    for j in m..n {
                        let t = y * a[(m, j)];
                        a[(i, j)] -= t;
                    }
                    for j in 0..n {
                        let t = y * a[(j, i)];
                        a[(j, m)] += t;
                    }
                }
            }
        }
    }
    // clear the stored multipliers below the subdiagonal
    for i in 2..n {
        for j in 0..i - 1 {
            a[(i, j)] = 0.0;
        }
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix, eigenvalues only.
fn hqr(a: &mut DMatrix<f64>, max_total_sweeps: usize) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    let eps = f64::EPSILON;
    let mut wr = vec![0.0_f64; n];
    let mut wi = vec![0.0_f64; n];

    let mut anorm = 0.0;
    for i in 0..n {
        let j0 = i.saturating_sub(1);
        for j in j0..n {
            anorm += a[(i, j)].abs();
        }
    }
    if anorm == 0.0 {
        return Ok(vec![Complex64::new(0.0, 0.0); n]);
    }

    let mut total_sweeps = 0usize;
    let mut nn = n - 1;
    let mut t = 0.0_f64;
    'outer: loop {
        let mut its = 0usize;
        loop {
            // find a negligible subdiagonal element to split at
            let mut l = nn;
            while l > 0 {
                let mut s = a[(l - 1, l - 1)].abs() + a[(l, l)].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[(l, l - 1)].abs() <= eps * s {
                    a[(l, l - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[(nn, nn)];
            if l == nn {
                // one real eigenvalue deflated
                wr[nn] = x + t;
                wi[nn] = 0.0;
                if nn == 0 {
                    break 'outer;
                }
                nn -= 1;
            } else {
                let y = a[(nn - 1, nn - 1)];
                let w = a[(nn, nn - 1)] * a[(nn - 1, nn)];
                if l == nn - 1 {
                    // 2x2 block: real pair or exact conjugate pair
                    let p = 0.5 * (y - x);
                    let q = p * p + w;
                    let z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        let z = p + z.copysign(p);
                        wr[nn - 1] = x + z;
                        wr[nn] = if z != 0.0 { x - w / z } else { x + z };
                        wi[nn - 1] = 0.0;
                        wi[nn] = 0.0;
                    } else {
                        wr[nn] = x + p;
                        wr[nn - 1] = x + p;
                        wi[nn] = -z;
                        wi[nn - 1] = z;
                    }
                    if nn <= 1 {
                        break 'outer;
                    }
                    nn -= 2;
                } else {
                    total_sweeps += 1;
                    if total_sweeps > max_total_sweeps {
                        return Err(Error::EigenNonConvergence(max_total_sweeps));
                    }
                    let mut y = y;
                    let mut w = w;
                    if its == 10 || its == 20 {
                        // exceptional shift
                        t += x;
                        for i in 0..=nn {
                            a[(i, i)] -= x;
                        }
                        let s = a[(nn, nn - 1)].abs() + a[(nn - 1, nn - 2)].abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    // look for two consecutive small subdiagonals
                    let mut m = nn - 2;
                    let mut p: f64;
                    let mut q: f64;
                    let mut r: f64;
                    loop {
                        let z = a[(m, m)];
                        let rr = x - z;
                        let ss = y - z;
                        p = (rr * ss - w) / a[(m + 1, m)] + a[(m, m + 1)];
                        q = a[(m + 1, m + 1)] - z - rr - ss;
                        r = a[(m + 2, m + 1)];
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = a[(m, m - 1)].abs() * (q.abs() + r.abs());
                        let v =
                            p.abs() * (a[(m - 1, m - 1)].abs() + z.abs() + a[(m + 1, m + 1)].abs());
                        if u <= eps * v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in m..nn - 1 {
                        a[(i + 2, i)] = 0.0;
                        if i != m {
                            a[(i + 2, i - 1)] = 0.0;
                        }
                    }
                    // double QR sweep over rows l..nn
                    for k in m..nn {
                        if k != m {
                            p = a[(k, k - 1)];
                            q = a[(k + 1, k - 1)];
                            r = 0.0;
                            if k + 1 != nn {
                                r = a[(k + 2, k - 1)];
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = (p * p + q * q + r * r).sqrt().copysign(p);
                        if s != 0.0 {
                            if k == m {
                                if l != m {
                                    a[(k, k - 1)] = -a[(k, k - 1)];
                                }
                            } else {
                                a[(k, k - 1)] = -s * x;
                            }
                            p += s;
                            x = p / s;
                            let y2 = q / s;
                            let z2 = r / s;
                            q /= p;
                            r /= p;
                            for j in k..n {
                                let mut pp = a[(k, j)] + q * a[(k + 1, j)];
                                if k + 1 != nn {
                                    pp += r * a[(k + 2, j)];
                                    a[(k + 2, j)] -= pp * z2;
                                }
                                a[(k + 1, j)] -= pp * y2;
                                a[(k, j)] -= pp * x;
                            }
                            let mmin = if nn < k + 3 { nn } else { k + 3 };
                            for i in 0..=mmin {
                                let mut pp = x * a[(i, k)] + y2 * a[(i, k + 1)];
                                if k + 1 != nn {
                                    pp += z2 * a[(i, k + 2)];
                                    a[(i, k + 2)] -= pp * r;
                                }
                                a[(i, k + 1)] -= pp * q;
                                a[(i, k)] -= pp;
                            }
                        }
                    }
                }
            }
            if l + 1 >= nn {
                break;
            }
        }
    }

    let mut eigs: Vec<Complex64> = wr
        .into_iter()
        .zip(wi)
        .map(|(re, im)| Complex64::new(re, im))
        .collect();
    // deterministic output order
    eigs.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap()
            .then(a.im.partial_cmp(&b.im).unwrap())
    });
    Ok(eigs)
}
