use chaosdual_core::basis::{
    binomial, conditional_prefix_sum, enumerate_basis, eval_basis, hermite_eval, MultiIndex,
    Scaling,
};
use chaosdual_core::market::path_rng;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

/// Every exponent tuple with total degree in 1..=p, sorted by (activation,
/// dense tuple). Built by recursion over slots, independent of the library's
/// multiset enumeration.
fn brute_force(p: usize, n: usize, d: usize) -> Vec<Vec<usize>> {
    fn rec(slot: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slot == cur.len() {
            if cur.iter().any(|&e| e > 0) {
                out.push(cur.clone());
            }
            return;
        }
        for e in 0..=left {
            cur[slot] = e;
            rec(slot + 1, left - e, cur, out);
        }
        cur[slot] = 0;
    }
    let mut out = Vec::new();
    rec(0, p, &mut vec![0; n * d], &mut out);
    let activation = |t: &Vec<usize>| t.iter().rposition(|&e| e > 0).unwrap() / d + 1;
    out.sort_by(|a, b| activation(a).cmp(&activation(b)).then_with(|| a.cmp(b)));
    out
}

#[test]
fn matches_brute_force_enumeration() {
    for p in 1..=3 {
        for n in 1..=4 {
            for d in 1..=3 {
                let basis = enumerate_basis(p, n, d).unwrap();
                let dense: Vec<Vec<usize>> =
                    basis.elements().iter().map(|e| e.to_dense(n * d)).collect();
                let expected = brute_force(p, n, d);
                assert_eq!(dense, expected, "p={p} n={n} d={d}");
                assert_eq!(basis.len() + 1, binomial(n * d + p, n * d).unwrap());
                for (e, &k) in basis.elements().iter().zip(basis.activations()) {
                    assert_eq!(e.activation(d), k as usize);
                }
            }
        }
    }
}

#[test]
fn paper_scale_cardinality() {
    assert_eq!(enumerate_basis(2, 9, 40).unwrap().len(), 65340);
}

#[test]
fn normalization_constants() {
    let e = MultiIndex::from_dense(&[2, 0, 3]);
    assert!((e.norm() - (2.0f64 * 6.0).sqrt()).abs() < 1e-15);
    assert_eq!(e.degree(), 5);
    assert_eq!(e.exponent(1, 0, 2), 3);
}

#[test]
fn hermite_orthogonality_by_quadrature() {
    // Simpson on [-12, 12] against the standard normal density.
    let steps = 24_000;
    let h = 24.0 / steps as f64;
    let density = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    for i in 0..6 {
        for j in 0..6 {
            let f = |x: f64| hermite_eval(i, x) * hermite_eval(j, x) * density(x);
            let mut acc = f(-12.0) + f(12.0);
            for k in 1..steps {
                let x = -12.0 + k as f64 * h;
                acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(x);
            }
            let integral = acc * h / 3.0;
            let expected = if i == j {
                (1..=i).product::<usize>() as f64
            } else {
                0.0
            };
            assert!(
                (integral - expected).abs() < 1e-9,
                "<H{i},H{j}> = {integral}"
            );
        }
    }
}

#[test]
fn prefix_sums_have_zero_mean_increments() {
    let basis = enumerate_basis(2, 4, 2).unwrap();
    let mut rng = path_rng(3, 0);
    let lambda: Vec<f64> = (0..basis.len())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let m = 50_000;
    let mut sums = [0.0f64; 4];
    let mut sq = [0.0f64; 4];
    for i in 0..m {
        let mut rng = path_rng(17, i);
        let g: Vec<f64> = (0..8).map(|_| rng.sample(StandardNormal)).collect();
        let vals = eval_basis(&basis, &g, Scaling::Orthonormal).unwrap();
        let mk = conditional_prefix_sum(&basis, &vals, &lambda).unwrap();
        assert_eq!(mk[0], 0.0);
        for k in 0..4 {
            let inc = mk[k + 1] - mk[k];
            sums[k] += inc;
            sq[k] += inc * inc;
        }
    }
    let mf = m as f64;
    for k in 0..4 {
        let mean = sums[k] / mf;
        let se = ((sq[k] / mf - mean * mean) / mf).sqrt();
        assert!(mean.abs() < 5.0 * se, "step {k}: {mean} +- {se}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn values_ignore_later_increments(
        g in prop::collection::vec(-3.0f64..3.0, 12),
        noise in prop::collection::vec(-3.0f64..3.0, 12),
        k in 1usize..4,
    ) {
        let basis = enumerate_basis(3, 4, 3).unwrap();
        let mut h = g.clone();
        for (x, e) in h[k * 3..].iter_mut().zip(&noise[k * 3..]) {
            *x = *e;
        }
        let a = eval_basis(&basis, &g, Scaling::Orthonormal).unwrap();
        let b = eval_basis(&basis, &h, Scaling::Orthonormal).unwrap();
        let cut = basis.active_until(k);
        prop_assert_eq!(&a.values[..cut], &b.values[..cut]);
    }

    #[test]
    fn orthonormal_is_rescaled_raw(g in prop::collection::vec(-2.0f64..2.0, 6)) {
        let basis = enumerate_basis(3, 3, 2).unwrap();
        let raw = eval_basis(&basis, &g, Scaling::Raw).unwrap();
        let unit = eval_basis(&basis, &g, Scaling::Orthonormal).unwrap();
        for ((r, u), c) in raw.values.iter().zip(&unit.values).zip(basis.normalization()) {
            prop_assert!((r / c - u).abs() <= 1e-12 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn sorted_by_activation_then_lex(p in 1usize..4, n in 1usize..5, d in 1usize..4) {
        let basis = enumerate_basis(p, n, d).unwrap();
        let acts = basis.activations();
        for w in 0..basis.len().saturating_sub(1) {
            prop_assert!(acts[w] <= acts[w + 1]);
            if acts[w] == acts[w + 1] {
                let a = basis.elements()[w].to_dense(n * d);
                let b = basis.elements()[w + 1].to_dense(n * d);
                prop_assert!(a < b);
            }
        }
    }
}
