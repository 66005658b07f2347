//! Small helpers for points stored as slices and for fitting power laws.

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Euclidean distance from `p` to the closed axis box `[lo, hi]`.
pub fn point_box_dist(lo: &[f64], hi: &[f64], p: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        let e = if p[i] < lo[i] {
            lo[i] - p[i]
        } else if p[i] > hi[i] {
            p[i] - hi[i]
        } else {
            0.0
        };
        s += e * e;
    }
    s.sqrt()
}

/// Distance between two closed axis boxes.
pub fn box_box_dist(lo1: &[f64], hi1: &[f64], lo2: &[f64], hi2: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..lo1.len() {
        let e = (lo2[i] - hi1[i]).max(lo1[i] - hi2[i]).max(0.0);
        s += e * e;
    }
    s.sqrt()
}

/// Golden-section minimisation of a unimodal function on `[a, b]`.
pub fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        if (b - a).abs() < 1e-15 * (1.0 + a.abs()) {
            break;
        }
    }
    let (fa, fb) = (f(a), f(b));
    let mut best = (c, fc);
    for cand in [(d, fd), (a, fa), (b, fb)] {
        if cand.1 < best.1 {
            best = cand;
        }
    }
    best
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { f64::NAN };
    (slope, my - slope * mx)
}

/// Slope of `log y` against `log x`, skipping non-positive entries.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let (lx, ly): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .unzip();
    if lx.len() < 2 {
        return f64::NAN;
    }
    linear_fit(&lx, &ly).0
}

/// C¹ quintic ramp: 0 for t ≤ 0, 1 for t ≥ 1.
pub fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (t * (6.0 * t - 15.0) + 10.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_minimum() {
        let (x, fx) = golden_min(|t| (t - 0.3) * (t - 0.3) + 2.0, -1.0, 2.0, 200);
        assert!((x - 0.3).abs() < 1e-7);
        assert!((fx - 2.0).abs() < 1e-12);
    }

    #[test]
    fn loglog_slope_of_power() {
        let x: Vec<f64> = (1..6).map(|k| 2f64.powi(-k)).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v.powf(1.7)).collect();
        assert!((loglog_slope(&x, &y) - 1.7).abs() < 1e-12);
    }

    #[test]
    fn box_distances() {
        assert_eq!(point_box_dist(&[0.0, 0.0], &[1.0, 1.0], &[2.0, 0.5]), 1.0);
        let d = box_box_dist(&[0.0, 0.0], &[1.0, 1.0], &[4.0, 5.0], &[6.0, 6.0]);
        assert!((d - 5.0).abs() < 1e-15);
    }

    #[test]
    fn smoothstep_ends() {
        assert_eq!(smoothstep(-0.1), 0.0);
        assert_eq!(smoothstep(1.2), 1.0);
        assert!((smoothstep(0.5) - 0.5).abs() < 1e-15);
    }
}
