//! One-dimensional Legendre machinery and tensor-product rules on `[-1, 1]`.

/// Legendre polynomials `P_0..=P_n` and their derivatives at `x`.
pub fn legendre_all(n: usize, x: f64) -> (Vec<f64>, Vec<f64>) {
    let mut p = vec![0.0; n + 1];
    let mut dp = vec![0.0; n + 1];
    p[0] = 1.0;
    if n >= 1 {
        p[1] = x;
        dp[1] = 1.0;
    }
    for k in 1..n {
        let kf = k as f64;
        p[k + 1] = ((2.0 * kf + 1.0) * x * p[k] - kf * p[k - 1]) / (kf + 1.0);
        // P'_{k+1} = P'_{k-1} + (2k+1) P_k
        dp[k + 1] = dp[k - 1] + (2.0 * kf + 1.0) * p[k];
    }
    (p, dp)
}

/// Single Legendre polynomial value and derivative.
pub fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (p, dp) = legendre_all(n, x);
    (p[n], dp[n])
}

/// Gauss–Legendre points and weights with `n` nodes, ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "gauss_legendre needs at least one point");
    let mut pts = vec![0.0; n];
    let mut wts = vec![0.0; n];
    for i in 0..n {
        // Chebyshev initial guess, then Newton on P_n.
        let mut x = -(std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        pts[i] = x;
        wts[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (pts, wts)
}

/// Gauss–Lobatto nodes with `n` points (endpoints included). `n == 1` gives the midpoint.
pub fn gauss_lobatto_points(n: usize) -> Vec<f64> {
    match n {
        0 => panic!("gauss_lobatto_points needs at least one point"),
        1 => vec![0.0],
        2 => vec![-1.0, 1.0],
        _ => {
            // interior nodes are roots of P'_{n-1}
            let m = n - 1;
            let mut pts = vec![-1.0];
            for i in 1..m {
                let mut x = -(std::f64::consts::PI * i as f64 / m as f64).cos();
                for _ in 0..100 {
                    let (p, dp) = legendre(m, x);
                    // d2P from the Legendre ODE: (1-x^2)P'' = 2xP' - m(m+1)P
                    let d2p = (2.0 * x * dp - (m * (m + 1)) as f64 * p) / (1.0 - x * x);
                    let dx = dp / d2p;
                    x -= dx;
                    if dx.abs() < 1e-16 {
                        break;
                    }
                }
                pts.push(x);
            }
            pts.push(1.0);
            pts
        }
    }
}

/// Tensor Gauss rule on the reference square.
#[derive(Debug, Clone)]
pub struct CellRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl CellRule {
    /// `n` points per direction; x index runs fastest.
    pub fn gauss(n: usize) -> Self {
        let (p, w) = gauss_legendre(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                points.push([p[i], p[j]]);
                weights.push(w[i] * w[j]);
            }
        }
        CellRule { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Gauss rule on `[-1, 1]` used for edges.
#[derive(Debug, Clone)]
pub struct EdgeRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl EdgeRule {
    pub fn gauss(n: usize) -> Self {
        let (points, weights) = gauss_legendre(n);
        EdgeRule { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_integrates_polynomials_exactly() {
        for n in 1..8 {
            let (p, w) = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let q: f64 = p.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-14, "n={n} deg={deg}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn lobatto_three_points() {
        let p = gauss_lobatto_points(3);
        assert_eq!(p.len(), 3);
        assert!(p[1].abs() < 1e-15);
        let p4 = gauss_lobatto_points(4);
        assert!((p4[1] + 1.0 / 5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn legendre_known_values() {
        let (p, dp) = legendre(2, 0.5);
        assert!((p - (-0.125)).abs() < 1e-15);
        assert!((dp - 1.5).abs() < 1e-15);
    }
}
