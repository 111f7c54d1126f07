//! Deterministic quadrature: adaptive Simpson in one dimension, iterated
//! adaptive rules for boxes up to dimension three, Gauss-Legendre nodes, and
//! the closed-form pieces (Euclidean ball volumes, spherical cap measures)
//! the atom calculus relies on.

/// Adaptive Simpson on `[a, b]` to absolute tolerance `tol`.
///
/// Bisection around discontinuities makes this safe for piecewise-constant
/// integrands: an interval straddling a jump keeps failing the error test and
/// shrinks geometrically, so its contribution to the error vanishes.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(fa, fm, fb, b - a);
    rec(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Iterated adaptive Simpson over an axis-aligned box, dimensions 1 to 3.
///
/// The innermost axis sees the raw integrand; outer axes integrate partial
/// integrals, which are continuous even when the integrand itself jumps.
pub fn adaptive_box<F: Fn(&[f64]) -> f64>(f: &F, bounds: &[(f64, f64)], tol: f64) -> f64 {
    match bounds.len() {
        1 => adaptive_simpson(&|x| f(&[x]), bounds[0].0, bounds[0].1, tol),
        2 => adaptive_simpson(
            &|x| adaptive_simpson(&|y| f(&[x, y]), bounds[1].0, bounds[1].1, tol * 0.1),
            bounds[0].0,
            bounds[0].1,
            tol,
        ),
        3 => adaptive_simpson(
            &|x| {
                adaptive_simpson(
                    &|y| adaptive_simpson(&|z| f(&[x, y, z]), bounds[2].0, bounds[2].1, tol * 0.01),
                    bounds[1].0,
                    bounds[1].1,
                    tol * 0.1,
                )
            },
            bounds[0].0,
            bounds[0].1,
            tol,
        ),
        d => panic!("adaptive_box supports dimensions 1..=3, got {d}"),
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, computed by Newton
/// iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // initial guess: Chebyshev-like
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // Legendre P_n(x) and derivative via recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        // weight
        let mut p0 = 1.0;
        let mut p1 = x;
        for k in 2..=n {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((-x, w)); // negate so nodes come out ascending
    }
    out
}

/// Integrate a smooth function on `[a, b]` with an `n`-point Gauss rule.
pub fn gauss_integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, n: usize) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    gauss_legendre(n)
        .iter()
        .map(|&(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Gamma(k/2) for positive half-integer arguments.
fn gamma_half(k: u32) -> f64 {
    match k {
        0 => panic!("gamma_half(0)"),
        1 => std::f64::consts::PI.sqrt(),
        2 => 1.0,
        _ => (k as f64 / 2.0 - 1.0) * gamma_half(k - 2),
    }
}

/// Volume of the Euclidean unit ball in dimension `n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    std::f64::consts::PI.powf(n as f64 / 2.0) / gamma_half(n as u32 + 2)
}

/// Volume of the Euclidean ball of radius `r` in dimension `n`.
pub fn ball_volume_euclidean(n: usize, r: f64) -> f64 {
    unit_ball_volume(n) * r.powi(n as i32)
}

/// Surface measure of the unit sphere S^{n-1} in R^n.
pub fn unit_sphere_area(n: usize) -> f64 {
    n as f64 * unit_ball_volume(n)
}

/// Normalized measure of a geodesic cap of angular radius `theta` on
/// S^{n-1} (total mass 1). Computed from the colatitude density
/// sin^{n-2}(t) dt; exact limits at 0 and pi.
pub fn sphere_cap_measure(n: usize, theta: f64) -> f64 {
    assert!(n >= 2, "sphere_cap_measure needs ambient dimension >= 2");
    let theta = theta.clamp(0.0, std::f64::consts::PI);
    if theta == 0.0 {
        return 0.0;
    }
    if theta >= std::f64::consts::PI {
        return 1.0;
    }
    let p = (n - 2) as i32;
    let num = gauss_integrate(&|t| t.sin().powi(p), 0.0, theta, 64);
    let den = gauss_integrate(&|t| t.sin().powi(p), 0.0, std::f64::consts::PI, 64);
    num / den
}
