//! Quadrature rules on the reference triangle and on edges.
//!
//! Triangle rules are given in barycentric coordinates with weights summing to
//! one (multiply by the physical element area). The 6-point rule is exact for
//! degree 4, which covers every polynomial form in the P2/P1 assembly; the
//! 12-point rule (degree 6) is reserved for error norms against non-polynomial
//! exact solutions.

#[derive(Clone, Copy, Debug)]
pub struct TriPoint {
    pub bary: [f64; 3],
    pub weight: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct EdgePoint {
    /// Parameter in [0, 1] along the edge.
    pub t: f64,
    /// Weight on the unit interval (sums to 1; multiply by edge length).
    pub weight: f64,
}

/// 6-point degree-4 rule.
pub const TRI_ORDER4: [TriPoint; 6] = {
    const A1: f64 = 0.816847572980459;
    const B1: f64 = 0.091576213509771;
    const W1: f64 = 0.109951743655322;
    const A2: f64 = 0.108103018168070;
    const B2: f64 = 0.445948490915965;
    const W2: f64 = 0.223381589678011;
    [
        TriPoint { bary: [A1, B1, B1], weight: W1 },
        TriPoint { bary: [B1, A1, B1], weight: W1 },
        TriPoint { bary: [B1, B1, A1], weight: W1 },
        TriPoint { bary: [A2, B2, B2], weight: W2 },
        TriPoint { bary: [B2, A2, B2], weight: W2 },
        TriPoint { bary: [B2, B2, A2], weight: W2 },
    ]
};

/// 12-point degree-6 rule, used for error integration.
pub const TRI_ORDER6: [TriPoint; 12] = {
    const A1: f64 = 0.501426509658179;
    const B1: f64 = 0.249286745170910;
    const W1: f64 = 0.116786275726379;
    const A2: f64 = 0.873821971016996;
    const B2: f64 = 0.063089014491502;
    const W2: f64 = 0.050844906370207;
    const C1: f64 = 0.053145049844817;
    const C2: f64 = 0.310352451033784;
    const C3: f64 = 0.636502499121399;
    const W3: f64 = 0.082851075618374;
    [
        TriPoint { bary: [A1, B1, B1], weight: W1 },
        TriPoint { bary: [B1, A1, B1], weight: W1 },
        TriPoint { bary: [B1, B1, A1], weight: W1 },
        TriPoint { bary: [A2, B2, B2], weight: W2 },
        TriPoint { bary: [B2, A2, B2], weight: W2 },
        TriPoint { bary: [B2, B2, A2], weight: W2 },
        TriPoint { bary: [C1, C2, C3], weight: W3 },
        TriPoint { bary: [C1, C3, C2], weight: W3 },
        TriPoint { bary: [C2, C1, C3], weight: W3 },
        TriPoint { bary: [C2, C3, C1], weight: W3 },
        TriPoint { bary: [C3, C1, C2], weight: W3 },
        TriPoint { bary: [C3, C2, C1], weight: W3 },
    ]
};

/// 3-point Gauss-Legendre rule on [0, 1], exact for degree 5.
pub fn edge_gauss3() -> [EdgePoint; 3] {
    let s = (0.6f64).sqrt(); // sqrt(3/5)
    [
        EdgePoint { t: 0.5 * (1.0 - s), weight: 5.0 / 18.0 },
        EdgePoint { t: 0.5, weight: 8.0 / 18.0 },
        EdgePoint { t: 0.5 * (1.0 + s), weight: 5.0 / 18.0 },
    ]
}

/// 5-point Gauss-Legendre rule on [0, 1], exact for degree 9 (error norms).
pub fn edge_gauss5() -> [EdgePoint; 5] {
    let a = (5.0 - 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
    let b = (5.0 + 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
    let wa = (322.0 + 13.0 * 70.0f64.sqrt()) / 900.0;
    let wb = (322.0 - 13.0 * 70.0f64.sqrt()) / 900.0;
    let wc = 128.0 / 225.0;
    // Map from [-1, 1] to [0, 1]: t = (x + 1)/2, weights halve.
    [
        EdgePoint { t: 0.5 * (1.0 - b), weight: 0.5 * wb },
        EdgePoint { t: 0.5 * (1.0 - a), weight: 0.5 * wa },
        EdgePoint { t: 0.5, weight: 0.5 * wc },
        EdgePoint { t: 0.5 * (1.0 + a), weight: 0.5 * wa },
        EdgePoint { t: 0.5 * (1.0 + b), weight: 0.5 * wb },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Exact integral of x^p y^q over the unit reference triangle.
    fn monomial_exact(p: u32, q: u32) -> f64 {
        // p! q! / (p + q + 2)!
        let fact = |n: u32| (1..=n).map(|k| k as f64).product::<f64>().max(1.0);
        fact(p) * fact(q) / fact(p + q + 2)
    }

    fn integrate_tri(rule: &[TriPoint], p: u32, q: u32) -> f64 {
        // Reference triangle (0,0)-(1,0)-(0,1); area 1/2. bary = (1-x-y, x, y).
        rule.iter()
            .map(|pt| {
                let x = pt.bary[1];
                let y = pt.bary[2];
                0.5 * pt.weight * x.powi(p as i32) * y.powi(q as i32)
            })
            .sum()
    }

    #[test]
    fn tri_order4_exact_to_degree4() {
        for p in 0..=4u32 {
            for q in 0..=(4 - p) {
                assert_relative_eq!(
                    integrate_tri(&TRI_ORDER4, p, q),
                    monomial_exact(p, q),
                    max_relative = 1e-13
                );
            }
        }
    }

    #[test]
    fn tri_order6_exact_to_degree6() {
        for p in 0..=6u32 {
            for q in 0..=(6 - p) {
                assert_relative_eq!(
                    integrate_tri(&TRI_ORDER6, p, q),
                    monomial_exact(p, q),
                    max_relative = 1e-12
                );
            }
        }
    }

    #[test]
    fn edge_rules_integrate_monomials() {
        for (rule, max_deg) in [(edge_gauss3().to_vec(), 5u32), (edge_gauss5().to_vec(), 9)] {
            for d in 0..=max_deg {
                let approx_val: f64 = rule.iter().map(|p| p.weight * p.t.powi(d as i32)).sum();
                assert_relative_eq!(approx_val, 1.0 / (d as f64 + 1.0), max_relative = 1e-13);
            }
        }
    }
}
