use nalgebra::DMatrix;
use proptest::prelude::*;
use zinbarma_core::likelihood::{observed_information, partial_loglik, score};
use zinbarma_core::model::{compute_states, Layout, ParameterSet};

struct Case {
    params: ParameterSet,
    x: DMatrix<f64>,
    u: DMatrix<f64>,
    y: Vec<u64>,
}

fn numeric_gradient(c: &Case) -> Vec<f64> {
    let layout = c.params.layout();
    let base = c.params.to_vec();
    (0..base.len())
        .map(|i| {
            let h = 1e-6 * base[i].abs().max(1.0);
            let mut plus = base.clone();
            plus[i] += h;
            let mut minus = base.clone();
            minus[i] -= h;
            let fp = partial_loglik(&ParameterSet::from_slice(&layout, &plus).unwrap(), &c.x, &c.u, &c.y)
                .unwrap();
            let fm = partial_loglik(&ParameterSet::from_slice(&layout, &minus).unwrap(), &c.x, &c.u, &c.y)
                .unwrap();
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

fn build(layout: Layout, values: &[f64], n: usize, seed: u64) -> Case {
    let params = ParameterSet::from_slice(&layout, values).unwrap();
    let x = DMatrix::from_fn(n, layout.n1, |t, j| match j {
        0 => 1.0,
        1 => t as f64 / n as f64,
        _ => ((t * (j + 1)) as f64 * 0.37).sin(),
    });
    let u = DMatrix::from_fn(n, layout.n2, |t, j| if j == 0 { 1.0 } else { (t as f64 * 0.21).cos() });
    // deterministic pseudo-counts with plenty of zeros
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let y = (0..n)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let r = (s >> 33) % 10;
            if r < 4 { 0 } else { r - 3 + (s >> 40) % 4 }
        })
        .collect();
    Case { params, x, u, y }
}

fn assert_close(analytic: &[f64], numeric: &[f64]) {
    for (i, (a, b)) in analytic.iter().zip(numeric).enumerate() {
        let tol = 1e-5 * a.abs().max(b.abs()).max(1.0);
        assert!((a - b).abs() < tol, "component {i}: analytic {a}, numeric {b}");
    }
}

#[test]
fn score_matches_finite_differences_full_model() {
    let layout = Layout { n1: 3, p1: 1, q1: 2, n2: 2, p2: 1, q2: 1 };
    let values = [0.6, 0.3, -0.2, 0.35, 0.2, -0.1, -0.5, 0.4, 0.25, 0.15, 1.8];
    let c = build(layout, &values, 40, 7);
    assert_close(&score(&c.params, &c.x, &c.u, &c.y).unwrap(), &numeric_gradient(&c));
}

#[test]
fn score_matches_finite_differences_without_zero_inflation() {
    let layout = Layout { n1: 2, p1: 1, q1: 1, n2: 0, p2: 0, q2: 0 };
    let values = [0.9, -0.3, 0.4, 0.2, 3.0];
    let c = build(layout, &values, 35, 11);
    assert_close(&score(&c.params, &c.x, &c.u, &c.y).unwrap(), &numeric_gradient(&c));
}

#[test]
fn information_is_symmetric_and_positive_near_truth() {
    let layout = Layout { n1: 2, p1: 0, q1: 1, n2: 1, p2: 0, q2: 0 };
    let values = [0.8, 0.2, 0.3, -0.6, 2.0];
    let c = build(layout, &values, 60, 3);
    let info = observed_information(&c.params, &c.x, &c.u, &c.y).unwrap();
    assert_eq!(info, info.transpose());
    assert!(info.iter().all(|v| v.is_finite()));
    for i in 0..info.nrows() {
        assert!(info[(i, i)].is_finite());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn score_agrees_with_numeric_gradient(
        p1 in 0usize..3, q1 in 0usize..3, p2 in 0usize..2, q2 in 0usize..2,
        raw in prop::collection::vec(-0.35f64..0.35, 16),
        k in 0.4f64..6.0,
        seed in any::<u64>(),
    ) {
        let layout = Layout { n1: 2, p1, q1, n2: 2, p2, q2 };
        let mut values: Vec<f64> = raw.into_iter().take(layout.len() - 1).collect();
        values[0] += 0.8;
        values.push(k);
        let c = build(layout, &values, 25, seed);
        // central differences lose accuracy once the recursions blow up
        let st = compute_states(&c.params, &c.x, &c.u, &c.y).unwrap();
        prop_assume!(st.clamped.is_empty() && st.e.iter().all(|e| e.abs() < 20.0));
        let analytic = score(&c.params, &c.x, &c.u, &c.y).unwrap();
        let numeric = numeric_gradient(&c);
        for (a, b) in analytic.iter().zip(&numeric) {
            prop_assert!((a - b).abs() < 2e-5 * a.abs().max(b.abs()).max(1.0), "{} vs {}", a, b);
        }
    }

    #[test]
    fn loglik_is_finite_and_non_positive(
        raw in prop::collection::vec(-1.0f64..1.0, 6),
        k in 0.2f64..20.0,
        seed in any::<u64>(),
    ) {
        let layout = Layout { n1: 2, p1: 0, q1: 1, n2: 2, p2: 0, q2: 1 };
        let mut values = raw;
        values.push(k);
        let c = build(layout, &values, 30, seed);
        let l = partial_loglik(&c.params, &c.x, &c.u, &c.y).unwrap();
        prop_assert!(l.is_finite());
        prop_assert!(l <= 0.0);
    }
}

