//! Gaussian quadrature rules for expectations over a standard normal.

use std::f64::consts::PI;

/// Nodes and weights such that `Σ w_i f(z_i) ≈ E f(Z)`, `Z ~ N(0,1)`.
#[derive(Debug, Clone)]
pub struct NormalRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl NormalRule {
    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&z, &w)| w * f(z)).sum()
    }

    /// Gauss–Hermite rule of the given order (Newton iteration on the
    /// orthonormal Hermite recurrence, then rescaled from weight e^{-x²}).
    pub fn gauss_hermite(order: usize) -> Self {
        let n = order;
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let pim4 = PI.powf(-0.25);
        let m = n.div_ceil(2);
        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * (n as f64).powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    p1 = z * (2.0 / (j as f64 + 1.0)).sqrt() * p2 - (j as f64 / (j as f64 + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * n as f64).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        let s = PI.sqrt();
        Self {
            nodes: x.iter().map(|&v| v * 2f64.sqrt()).collect(),
            weights: w.iter().map(|&v| v / s).collect(),
        }
    }

    /// Composite Gauss–Legendre on `[-half_width, half_width]` against the
    /// normal density. Robust for integrands with sharp (but smooth) kinks.
    pub fn composite_legendre(half_width: f64, panels: usize, order: usize) -> Self {
        let (gx, gw) = gauss_legendre(order);
        let h = 2.0 * half_width / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        let norm = 1.0 / (2.0 * PI).sqrt();
        for p in 0..panels {
            let a = -half_width + p as f64 * h;
            for (&t, &wt) in gx.iter().zip(&gw) {
                let z = a + 0.5 * h * (t + 1.0);
                nodes.push(z);
                weights.push(0.5 * h * wt * norm * (-0.5 * z * z).exp());
            }
        }
        Self { nodes, weights }
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_moments() {
        let r = NormalRule::gauss_hermite(60);
        assert!((r.expect(|_| 1.0) - 1.0).abs() < 1e-13);
        assert!(r.expect(|z| z).abs() < 1e-13);
        assert!((r.expect(|z| z * z) - 1.0).abs() < 1e-12);
        assert!((r.expect(|z| z.powi(4)) - 3.0).abs() < 1e-11);
        assert!((r.expect(|z| z.powi(8)) - 105.0).abs() < 1e-8);
        // E cos(Z) = e^{-1/2}
        assert!((r.expect(f64::cos) - (-0.5f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn legendre_matches_hermite() {
        let a = NormalRule::gauss_hermite(60).expect(|z| (1.0 + (2.0 * z).exp()).ln());
        let b = NormalRule::composite_legendre(12.0, 200, 8).expect(|z| (1.0 + (2.0 * z).exp()).ln());
        assert!((a - b).abs() < 1e-9, "{a} {b}");
    }
}
