//! Dense tensors, differentiable kernels, parameter storage and AdamW.

mod attention;
pub mod checkpoint;
mod graph;
pub mod gradcheck;
mod kernels;
mod params;
mod tensor;

pub use attention::{
    grouped_cross_attention, multi_head_cross_attention, AttentionOutput, AttentionParams,
    LayerNormParams, Linear,
};
pub use checkpoint::Precision;
pub use graph::{sigmoid, Graph, OpCounter, Var, FOCAL_EPS, GATHER_ZERO};
pub use kernels::{
    gelu, gelu_derivative, gelu_scalar, layer_norm, matmul, normal_cdf, softmax, AttentionShape,
    LN_EPS,
};
pub use params::{adamw_step, AdamW, Param, ParamId, ParamStore};
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::gradcheck::check_gradients;
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(matmul(&Tensor::eye(2), &a).unwrap(), a);
        let b = Tensor::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut r = rng(7);
        let a = Tensor::randn(&[5, 7], 1.0, &mut r);
        let b = Tensor::randn(&[7, 3], 1.0, &mut r);
        let c = matmul(&a, &b).unwrap();
        for i in 0..5 {
            for j in 0..3 {
                let mut s = 0.0;
                for p in 0..7 {
                    s += a.get(&[i, p]) * b.get(&[p, j]);
                }
                assert!((c.get(&[i, j]) - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matmul_shape_mismatch() {
        let err = matmul(&Tensor::zeros(&[2, 3]), &Tensor::zeros(&[2, 3])).unwrap_err();
        assert!(matches!(err, crate::AsfError::Dimension(_)));
    }

    /// Φ(x) from the Maclaurin series of erf, summed until terms vanish.
    fn series_normal_cdf(x: f64) -> f64 {
        let z = x / std::f64::consts::SQRT_2;
        let mut sum = 0.0;
        let mut term = z; // (−1)^n z^(2n+1) / n!
        let mut n = 0u32;
        while term.abs() > 1e-20 || n < 5 {
            sum += term / (2 * n + 1) as f64;
            n += 1;
            term *= -z * z / n as f64;
        }
        0.5 * (1.0 + 2.0 / std::f64::consts::PI.sqrt() * sum)
    }

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu_scalar(0.0), 0.0);
        assert!((gelu_scalar(10.0) - 10.0).abs() < 1e-6);
        let oracle = series_normal_cdf(1.0);
        assert!((gelu_scalar(1.0) - oracle).abs() < 1e-14, "{} vs {oracle}", gelu_scalar(1.0));
        assert!((gelu_scalar(-0.7) - -0.7 * series_normal_cdf(-0.7)).abs() < 1e-14);
    }

    #[test]
    fn layer_norm_cases() {
        let ones = Tensor::filled(&[3], 1.0);
        let zeros = Tensor::zeros(&[3]);
        let c = Tensor::filled(&[1, 3], 4.2);
        assert!(layer_norm(&c, &ones, &zeros, LN_EPS)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));

        let row = Tensor::from_rows(&[vec![1.0, -1.0]]).unwrap();
        let out = layer_norm(&row, &Tensor::filled(&[2], 1.0), &Tensor::zeros(&[2]), 0.0).unwrap();
        assert_eq!(out.data(), &[1.0, -1.0]);

        let mut r = rng(3);
        let x = Tensor::randn(&[1, 37], 10.0, &mut r);
        let y = layer_norm(&x, &Tensor::filled(&[37], 1.0), &Tensor::zeros(&[37]), LN_EPS).unwrap();
        let mean = y.sum() / 37.0;
        let var = y.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 37.0;
        assert!(mean.abs() < 1e-9);
        assert!((var - 1.0).abs() < 1e-6);
    }

    #[test]
    fn softmax_cases() {
        let s = softmax(&Tensor::zeros(&[1, 3])).unwrap();
        for v in s.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(softmax(&Tensor::filled(&[1, 1], -123.0)).unwrap().data(), &[1.0]);
        let big = softmax(&Tensor::from_rows(&[vec![1000.0, 0.0]]).unwrap()).unwrap();
        assert!((big.data()[0] - 1.0).abs() < 1e-12 && big.data()[1] < 1e-300 + 1e-12);
        assert!(big.is_finite());
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(row in prop::collection::vec(-1e4f64..1e4, 1..12)) {
            let k = row.len();
            let s = softmax(&Tensor::new(vec![1, k], row).unwrap()).unwrap();
            prop_assert!((s.sum() - 1.0).abs() < 1e-6);
            prop_assert!(s.data().iter().all(|&v| v >= 0.0));
        }
    }

    fn attention_fixture(seed: u64, c: usize) -> (ParamStore, AttentionParams) {
        let mut store = ParamStore::new();
        let mut r = rng(seed);
        let p = AttentionParams::init(&mut store, "attn", c, &mut r).unwrap();
        // non-zero biases so the oracle exercises them
        for id in [p.q.bias, p.k.bias, p.v.bias, p.out.bias] {
            let t = Tensor::randn(&[c], 0.3, &mut r);
            store.set_value(id, t).unwrap();
        }
        (store, p)
    }

    /// Step-by-step attention with explicit loops and no shared kernels.
    fn naive_attention(
        store: &ParamStore,
        p: &AttentionParams,
        q: &Tensor,
        kv: &Tensor,
        heads: usize,
    ) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
        let proj = |x: &Tensor, l: &Linear| -> Vec<Vec<f64>> {
            let w = store.value(l.weight);
            let b = store.value(l.bias);
            let (rows, cin) = x.dims2().unwrap();
            let cout = w.shape()[1];
            (0..rows)
                .map(|r| {
                    (0..cout)
                        .map(|j| {
                            let mut s = b.data()[j];
                            for i in 0..cin {
                                s += x.get(&[r, i]) * w.get(&[i, j]);
                            }
                            s
                        })
                        .collect()
                })
                .collect()
        };
        let qp = proj(q, &p.q);
        let kp = proj(kv, &p.k);
        let vp = proj(kv, &p.v);
        let c = qp[0].len();
        let d = c / heads;
        let mut mixed = vec![vec![0.0; c]; qp.len()];
        let mut scores = vec![vec![vec![0.0; kp.len()]; qp.len()]; heads];
        for h in 0..heads {
            for (qi, qrow) in qp.iter().enumerate() {
                let logits: Vec<f64> = kp
                    .iter()
                    .map(|krow| {
                        (0..d).map(|j| qrow[h * d + j] * krow[h * d + j]).sum::<f64>()
                            / (d as f64).sqrt()
                    })
                    .collect();
                let m = logits.iter().cloned().fold(f64::MIN, f64::max);
                let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
                let z: f64 = e.iter().sum();
                for (ki, ev) in e.iter().enumerate() {
                    let w = ev / z;
                    scores[h][qi][ki] = w;
                    for j in 0..d {
                        mixed[qi][h * d + j] += w * vp[ki][h * d + j];
                    }
                }
            }
        }
        let mixed_t = Tensor::from_rows(&mixed).unwrap();
        (proj(&mixed_t, &p.out), scores)
    }

    #[test]
    fn attention_matches_naive_oracle() {
        let (store, p) = attention_fixture(11, 4);
        let mut r = rng(12);
        let q = Tensor::randn(&[2, 4], 1.0, &mut r);
        let kv = Tensor::randn(&[3, 4], 1.0, &mut r);
        let mut g = Graph::new();
        let qv = g.constant(q.clone()).unwrap();
        let kvv = g.constant(kv.clone()).unwrap();
        let (out, scores) = multi_head_cross_attention(&mut g, &store, &p, qv, kvv, 1).unwrap();
        let (want, want_scores) = naive_attention(&store, &p, &q, &kv, 1);
        for i in 0..2 {
            for j in 0..4 {
                assert!((g.value(out).get(&[i, j]) - want[i][j]).abs() < 1e-10);
            }
            for k in 0..3 {
                assert!((scores.get(&[0, i, k]) - want_scores[0][i][k]).abs() < 1e-10);
            }
        }
        assert_eq!(g.counter().attention_score_evals, 6);
    }

    #[test]
    fn attention_multi_head_matches_oracle() {
        let (store, p) = attention_fixture(21, 8);
        let mut r = rng(22);
        let q = Tensor::randn(&[3, 8], 1.0, &mut r);
        let kv = Tensor::randn(&[5, 8], 1.0, &mut r);
        let mut g = Graph::new();
        let qv = g.constant(q.clone()).unwrap();
        let kvv = g.constant(kv.clone()).unwrap();
        let (out, _) = multi_head_cross_attention(&mut g, &store, &p, qv, kvv, 4).unwrap();
        let (want, _) = naive_attention(&store, &p, &q, &kv, 4);
        let want = Tensor::from_rows(&want).unwrap();
        assert!(g.value(out).max_abs_diff(&want) < 1e-10);
    }

    #[test]
    fn single_key_weight_is_exactly_one() {
        let (store, p) = attention_fixture(5, 8);
        let mut r = rng(6);
        let mut g = Graph::new();
        let q = g.constant(Tensor::randn(&[4, 8], 5.0, &mut r)).unwrap();
        let kv_t = Tensor::randn(&[1, 8], 5.0, &mut r);
        let kv = g.constant(kv_t.clone()).unwrap();
        let (out, scores) = multi_head_cross_attention(&mut g, &store, &p, q, kv, 2).unwrap();
        assert!(scores.data().iter().all(|&s| s == 1.0));
        // output is the output projection of the single value
        let mut g2 = Graph::new();
        let kv2 = g2.constant(kv_t).unwrap();
        let v = p.v.forward(&mut g2, &store, kv2).unwrap();
        let o = p.out.forward(&mut g2, &store, v).unwrap();
        for row in 0..4 {
            assert_eq!(g.value(out).row(row), g2.value(o).row(0));
        }
    }

    #[test]
    fn identical_keys_give_uniform_scores() {
        let (store, p) = attention_fixture(8, 4);
        let mut r = rng(9);
        let key = Tensor::randn(&[1, 4], 1.0, &mut r);
        let kv = Tensor::new(vec![3, 4], key.data().repeat(3)).unwrap();
        let mut g = Graph::new();
        let q = g.constant(Tensor::randn(&[2, 4], 1.0, &mut r)).unwrap();
        let kv = g.constant(kv).unwrap();
        let (_, scores) = multi_head_cross_attention(&mut g, &store, &p, q, kv, 2).unwrap();
        for s in scores.data() {
            assert!((s - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn attention_errors() {
        let (store, p) = attention_fixture(1, 6);
        let mut g = Graph::new();
        let q = g.constant(Tensor::zeros(&[1, 6])).unwrap();
        let kv = g.constant(Tensor::zeros(&[2, 6])).unwrap();
        assert!(matches!(
            multi_head_cross_attention(&mut g, &store, &p, q, kv, 4),
            Err(crate::AsfError::Config(_))
        ));
        let empty = g.constant(Tensor::zeros(&[0, 6])).unwrap();
        assert!(matches!(
            multi_head_cross_attention(&mut g, &store, &p, q, empty, 2),
            Err(crate::AsfError::EmptyKeys)
        ));
    }

    #[test]
    fn linear_sum_gradient_is_outer_product() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap()).unwrap();
        let unused = store.add("unused", Tensor::filled(&[2], 9.0)).unwrap();
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_rows(&[vec![0.5, -2.0]]).unwrap()).unwrap();
        let wv = g.param(&store, w).unwrap();
        let y = g.matmul(x, wv).unwrap();
        let loss = g.sum(y).unwrap();
        g.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad(w).data(), &[0.5, 0.5, 0.5, -2.0, -2.0, -2.0]);
        assert!(store.grad(unused).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut store = ParamStore::new();
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[2])).unwrap();
        assert!(matches!(g.backward(x, &mut store), Err(crate::AsfError::Contract(_))));
    }

    #[test]
    fn non_finite_is_an_error() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::filled(&[1, 1], 1e308)).unwrap();
        assert!(matches!(g.scale(x, 10.0), Err(crate::AsfError::NonFinite(_))));
    }

    #[test]
    fn primitive_gradients_match_finite_differences() {
        for seed in 0..5 {
            let mut r = rng(100 + seed);
            let mut store = ParamStore::new();
            let x = store.add("x", Tensor::randn(&[3, 8], 1.0, &mut r)).unwrap();
            let ln = LayerNormParams::init(&mut store, "ln", 8).unwrap();
            store.set_value(ln.gamma, Tensor::randn(&[8], 1.0, &mut r)).unwrap();
            store.set_value(ln.beta, Tensor::randn(&[8], 1.0, &mut r)).unwrap();
            let att = AttentionParams::init(&mut store, "att", 8, &mut r).unwrap();
            let kv = store.add("kv", Tensor::randn(&[2 * 3, 8], 1.0, &mut r)).unwrap();
            let sm = store.add("sm", Tensor::randn(&[2, 5], 2.0, &mut r)).unwrap();
            let target: Vec<f64> = (0..10).map(|i| (i % 3) as f64 * 0.7 - 0.5).collect();
            let report = check_gradients(&mut store, 1e-5, |g, s| {
                let xv = g.param(s, x)?;
                let h = ln.forward(g, s, xv)?;
                let h = g.gelu(h)?;
                let q = g.pool_rows(h, vec![vec![0, 1], vec![2]])?;
                let kvv = g.param(s, kv)?;
                let a = grouped_cross_attention(g, s, &att, q, kvv, 2, 3)?;
                let smv = g.param(s, sm)?;
                let p = g.softmax(smv)?;
                let flat = g.reshape(a.out, &[48])?;
                let picked = g.gather(flat, (0..10).map(|i| i * 4).collect(), &[2, 5])?;
                let mixed = g.add(picked, p)?;
                let sig = g.sigmoid(mixed)?;
                let sl = g.smooth_l1(sig, &target, &[1.0; 10], 0.3, 2.0)?;
                let fl = g.focal_loss(mixed, &[1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0], &[1.0; 10], 0.25, 2.0, 3.0)?;
                let t = g.add(sl, fl)?;
                g.scale(t, 1.7)
            })
            .unwrap();
            assert!(report.max_rel_err < 1e-4, "seed {seed}: {}", report.worst);
        }
    }
}
