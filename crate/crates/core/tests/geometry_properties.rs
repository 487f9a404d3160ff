use nalgebra::DMatrix;
use proptest::prelude::*;
use spacelike_flow::geometry::{
    graph_quantities, mcf_operator_cartesian, mcf_operator_radial, metric_eval, radial_extension,
    ricci_bound, ricci_eval, ConformalMetric, RadialMetric,
};

/// Time-symmetric Schwarzschild slice in isotropic coordinates,
/// `sigma = (1 + m/(2r))^4 delta`, which is scalar flat.
struct SchwarzschildSlice {
    m: f64,
}

impl ConformalMetric for SchwarzschildSlice {
    fn dim(&self) -> usize {
        3
    }
    fn factor(&self, r: f64) -> (f64, f64) {
        let s = 1.0 + self.m / (2.0 * r);
        (s * s, -s * self.m / (r * r))
    }
    fn min_radius(&self) -> f64 {
        1e-6
    }
}

/// Standard closed form for `sigma = e^{2f} delta`:
/// `Ric = -(n-2)(D^2 f - df df) - (lap f + (n-2)|df|^2) delta`,
/// with `f = ln w(r)` and the second radial derivative of `w` supplied.
fn conformal_ricci_closed_form(n: usize, x: &[f64], w: f64, dw: f64, d2w: f64) -> DMatrix<f64> {
    let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
    let big_f = dw / w;
    let big_f_prime = d2w / w - big_f * big_f;
    let nf = n as f64;
    let grad: Vec<f64> = x.iter().map(|xi| big_f * xi / r).collect();
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let xx = x[i] * x[j] / (r * r);
            let d = if i == j { 1.0 } else { 0.0 };
            hess[(i, j)] = big_f_prime * xx + big_f / r * (d - xx);
        }
    }
    let lap = hess.trace();
    let grad_sq: f64 = grad.iter().map(|g| g * g).sum();
    let mut ric = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let d = if i == j { 1.0 } else { 0.0 };
            ric[(i, j)] = -(nf - 2.0) * (hess[(i, j)] - grad[i] * grad[j])
                - (lap + (nf - 2.0) * grad_sq) * d;
        }
    }
    ric
}

fn power_second_derivative(m: &RadialMetric, r: f64) -> f64 {
    m.a * m.tau * (m.tau + 1.0) * r.powf(-m.tau - 2.0)
}

#[test]
fn ricci_matches_conformal_closed_form() {
    let m = RadialMetric::conformal_power(3, 1.0, 1.0).unwrap();
    for x in [[3.0, 0.0, 0.0], [1.0, 2.0, -2.0], [0.5, 4.0, 7.0]] {
        let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        let (w, dw) = m.factor(r);
        let oracle = conformal_ricci_closed_form(3, &x, w, dw, power_second_derivative(&m, r));
        let ric = ricci_eval(&m, &x).unwrap();
        let err = (&ric - &oracle).amax();
        assert!(err < 1e-8, "Ricci mismatch {err} at {x:?}\n{ric}\n{oracle}");
    }
    // other dimensions and exponents
    for (n, a, tau) in [(4, 0.5, 0.5), (5, 0.2, 2.0)] {
        let m = RadialMetric::conformal_power(n, a, tau).unwrap();
        let mut x = vec![0.7; n];
        x[0] = 2.5;
        let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        let (w, dw) = m.factor(r);
        let oracle = conformal_ricci_closed_form(n, &x, w, dw, power_second_derivative(&m, r));
        assert!((ricci_eval(&m, &x).unwrap() - oracle).amax() < 1e-8);
    }
}

#[test]
fn schwarzschild_slice_is_scalar_flat() {
    let m = SchwarzschildSlice { m: 1.0 };
    for x in [[3.0, 0.0, 0.0], [1.0, 1.0, 1.0], [0.4, -2.0, 5.0]] {
        let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        let ric = ricci_eval(&m, &x).unwrap();
        let (w, _) = m.factor(r);
        let scalar = ric.trace() / (w * w);
        assert!(scalar.abs() < 1e-6, "scalar curvature {scalar} at r = {r}");
        // but the Ricci tensor itself is not zero
        assert!(ric.amax() > 1e-3);
    }
}

#[test]
fn ricci_bound_is_finite_and_controls_the_normal_direction() {
    let m = RadialMetric::conformal_power(3, 1.0, 1.0).unwrap();
    let c = ricci_bound(&m, 2.0, 100.0, 200).unwrap();
    assert!(c.is_finite() && c > 0.0);
    println!("measured Ricci constant on [2, 100]: {c:.6e}");

    // |Ric_h(nu, nu)| = v^2 |Ric_sigma(grad u, grad u)| <= C (v^2 - 1)
    let mut samples = 0;
    for r in [2.0, 3.5, 10.0, 40.0, 100.0] {
        for (gx, gy) in [(0.3, 0.1), (0.9, 0.0), (-0.5, 0.7), (0.01, 0.02)] {
            let x = [r, 0.0, 0.0];
            let grad = [gx, gy, 0.2];
            let Ok(gq) = graph_quantities(&m, &x, &grad) else { continue };
            let at = metric_eval(&m, &x).unwrap();
            let ric = ricci_eval(&m, &x).unwrap();
            let up = &at.sigma_inv * DMatrix::from_column_slice(3, 1, &grad);
            let ric_nn = gq.v * gq.v * (up.transpose() * &ric * &up)[(0, 0)];
            assert!(ric_nn.abs() <= c * (gq.v * gq.v - 1.0) * (1.0 + 1e-9) + 1e-15);
            samples += 1;
        }
    }
    assert!(samples > 10);
}

/// Independent contraction: Christoffels from the Levi-Civita formula with
/// the analytic derivative of `sigma`, inverse metric from the textbook
/// formula, then a triple loop.
fn operator_oracle(m: &RadialMetric, x: &[f64], grad: &[f64], hess: &DMatrix<f64>) -> f64 {
    let n = x.len();
    let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
    let (w, dw) = m.factor(r);
    let sig = w * w;
    let d_sigma = |l: usize| 2.0 * w * dw * x[l] / r; // d_l sigma_ii
    let delta = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
    let mut s = 0.0;
    for k in 0..n {
        s += grad[k] * grad[k] / sig;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let g_inv = delta(i, j) / sig + (grad[i] / sig) * (grad[j] / sig) / (1.0 - s);
            let mut cov = hess[(i, j)];
            for k in 0..n {
                let gamma = 0.5 / sig
                    * (d_sigma(j) * delta(k, i) + d_sigma(i) * delta(k, j) - d_sigma(k) * delta(i, j));
                cov -= gamma * grad[k];
            }
            total += g_inv * cov;
        }
    }
    total
}

fn metric_strategy() -> impl Strategy<Value = RadialMetric> {
    (1usize..=5, 0.0f64..1.0, 0.5f64..2.0).prop_map(|(n, a, tau)| {
        if a < 0.05 {
            RadialMetric::euclidean(n)
        } else {
            RadialMetric::conformal_power(n, a, tau).unwrap()
        }
    })
}

/// Random point with `1 <= |x| <= 50` and a gradient with `|grad u|^2_sigma <= 0.95`.
fn configuration() -> impl Strategy<Value = (RadialMetric, Vec<f64>, Vec<f64>)> {
    metric_strategy().prop_flat_map(|m| {
        let n = m.n;
        (
            Just(m),
            prop::collection::vec(-1.0f64..1.0, n),
            1.0f64..50.0,
            prop::collection::vec(-1.0f64..1.0, n),
            0.0f64..0.95,
        )
            .prop_filter_map("degenerate direction", |(m, dir, r, gdir, s)| {
                let dn = dir.iter().map(|c| c * c).sum::<f64>().sqrt();
                let gn = gdir.iter().map(|c| c * c).sum::<f64>().sqrt();
                if dn < 1e-3 || gn < 1e-3 {
                    return None;
                }
                let x: Vec<f64> = dir.iter().map(|c| c / dn * r).collect();
                let (w, _) = m.factor(r);
                // |grad u|_sigma^2 = |grad u|^2 / w^2 = s
                let scale = s.sqrt() * w / gn;
                let g: Vec<f64> = gdir.iter().map(|c| c * scale).collect();
                Some((m, x, g))
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn induced_metric_identities((m, x, grad) in configuration()) {
        let gq = graph_quantities(&m, &x, &grad).unwrap();
        let n = x.len();
        let prod = &gq.g * &gq.g_inv;
        prop_assert!((prod - DMatrix::<f64>::identity(n, n)).amax() < 1e-12);
        let lhs = gq.grad_norm_sq_induced(&grad);
        prop_assert!((lhs - (gq.v * gq.v - 1.0)).abs() < 1e-12 * gq.v * gq.v);
        prop_assert!(gq.v >= 1.0);
        let at = metric_eval(&m, &x).unwrap();
        for i in 0..n {
            for j in 0..n {
                let expect = at.sigma[(i, j)] - grad[i] * grad[j];
                prop_assert!((gq.g[(i, j)] - expect).abs() <= 1e-15 * at.sigma[(0, 0)]);
            }
        }
    }

    #[test]
    fn induced_metric_is_sandwiched(
        (m, x, grad) in configuration(),
        tests in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 5), 20),
    ) {
        let gq = graph_quantities(&m, &x, &grad).unwrap();
        let at = metric_eval(&m, &x).unwrap();
        let n = x.len();
        for t in tests {
            let w = DMatrix::from_column_slice(n, 1, &t[..n]);
            let s = (w.transpose() * &at.sigma * &w)[(0, 0)];
            let g = (w.transpose() * &gq.g * &w)[(0, 0)];
            let slack = 1e-12 * s.max(1.0);
            prop_assert!(s / (gq.v * gq.v) <= g + slack);
            prop_assert!(g <= s + slack);
        }
    }

    #[test]
    fn cartesian_operator_matches_index_oracle(
        (m, x, grad) in configuration(),
        h in prop::collection::vec(-2.0f64..2.0, 25),
    ) {
        let n = x.len();
        let mut hess = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                hess[(i, j)] = 0.5 * (h[i * 5 + j] + h[j * 5 + i]);
            }
        }
        let got = mcf_operator_cartesian(&m, &x, &grad, &hess).unwrap();
        let want = operator_oracle(&m, &x, &grad, &hess);
        prop_assert!((got - want).abs() < 1e-12 * want.abs().max(1.0), "{} vs {}", got, want);
        if m.a == 0.0 {
            // flat: no Christoffel correction
            let gq = graph_quantities(&m, &x, &grad).unwrap();
            let plain: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j)))
                .map(|(i, j)| gq.g_inv[(i, j)] * hess[(i, j)]).sum();
            prop_assert!((got - plain).abs() < 1e-12 * plain.abs().max(1.0));
        }
    }

    #[test]
    fn radial_operator_matches_cartesian(
        m in metric_strategy(),
        r in 0.5f64..60.0,
        p in -0.97f64..0.97,
        d2u in -3.0f64..3.0,
    ) {
        let n = m.n;
        let (w, _) = m.factor(r);
        let du = p * w;
        let mut x = vec![0.0; n];
        x[0] = r * 0.6;
        if n > 1 { x[1] = r * 0.8; } else { x[0] = r; }
        let (grad, hess) = radial_extension(&x, du, d2u);
        let cart = mcf_operator_cartesian(&m, &x, &grad, &hess).unwrap();
        let rad = mcf_operator_radial(&m, r, du, d2u).unwrap();
        prop_assert!((cart - rad).abs() <= 1e-10 * cart.abs().max(1.0), "{} vs {}", cart, rad);
    }
}
