//! The availability-aware fusion stage: patch partitioning, per-sensor
//! canonical projection, cross-attention across sensors along patches,
//! post-feature normalization and the reshape back to a BEV grid.

mod config;
mod model;
mod patch;
mod pipeline;
mod sam;
mod types;

pub use config::FusionConfig;
pub use model::{FusionParams, ProjectionStack};
pub use patch::{assemble_fused_fm, patchify, unpatchify, PatchLayout, PatchSet};
pub use pipeline::{
    asf_forward, asf_infer, casap_fuse, post_normalize, ucp_project, AsfForward, CasapOutput,
    FusedFm, UnifiedPatchSet,
};
pub use sam::SensorAttentionMap;
pub use types::{
    Availability, AvailabilityMask, FeatureMap, Sensor, SensorBundle, SensorSet,
};

/// Random bundle with the given per-sensor channel counts (test helper).
pub fn random_bundle<R: rand::Rng + ?Sized>(
    channels: [usize; 3],
    height: usize,
    width: usize,
    rng: &mut R,
) -> SensorBundle {
    let mut b = SensorBundle::new();
    for s in Sensor::ALL {
        let data = crate::numerics::Tensor::randn(&[channels[s.index()], height, width], 1.0, rng);
        b.insert(FeatureMap::new(s, data).expect("rank 3"))
            .expect("consistent extents");
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Graph, ParamStore, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const CH: [usize; 3] = [6, 8, 4];

    fn setup(seed: u64, cfg: FusionConfig) -> (ParamStore, FusionParams, SensorBundle) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let params = FusionParams::init(&mut store, cfg, CH, &mut r).unwrap();
        let bundle = random_bundle(CH, 8, 8, &mut r);
        (store, params, bundle)
    }

    fn small() -> FusionConfig {
        FusionConfig {
            c_u: 16,
            n_p: 2,
            n_h: 2,
            ..FusionConfig::desk()
        }
    }

    #[test]
    fn fused_shape_is_the_same_for_every_combination() {
        let (store, params, bundle) = setup(1, small());
        for set in SensorSet::COMBINATIONS {
            let (fused, sam) = asf_infer(&store, &params, &bundle, &AvailabilityMask::from_set(set)).unwrap();
            assert_eq!(fused.0.shape(), &[2 * 4, 8, 8], "combination {set}");
            assert_eq!(sam.present, set);
        }
    }

    #[test]
    fn masking_equals_omission_bit_for_bit() {
        let (store, params, bundle) = setup(2, small());
        for set in SensorSet::COMBINATIONS {
            let mask = AvailabilityMask::from_set(set);
            let (a, sam_a) = asf_infer(&store, &params, &bundle, &mask).unwrap();
            let mut omitted = bundle.clone();
            for s in Sensor::ALL {
                if !set.contains(s) {
                    omitted.remove(s);
                }
            }
            let (b, sam_b) = asf_infer(&store, &params, &omitted, &mask).unwrap();
            assert_eq!(a, b);
            assert_eq!(sam_a, sam_b);
        }
    }

    #[test]
    fn sam_sums_to_one_and_single_sensor_is_exact() {
        let (store, params, bundle) = setup(3, small());
        for set in SensorSet::COMBINATIONS {
            let (_, sam) = asf_infer(&store, &params, &bundle, &AvailabilityMask::from_set(set)).unwrap();
            for b in 0..sam.banks {
                for p in 0..sam.num_patches() {
                    let m = sam.patch_masses(b, p);
                    assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                    for s in Sensor::ALL {
                        if !set.contains(s) {
                            assert_eq!(m[s.index()], 0.0);
                        } else if set.len() == 1 {
                            assert_eq!(m[s.index()], 1.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn degraded_sensor_keeps_shape() {
        let (store, params, mut bundle) = setup(4, small());
        let mut mask = AvailabilityMask::all();
        let (full, sam_full) = asf_infer(&store, &params, &bundle, &mask).unwrap();
        // corruption happens in the data, the mask only labels it
        let cam = bundle.get_mut(Sensor::Camera).unwrap();
        for v in cam.data.data_mut().iter_mut().take(100) {
            *v = 0.0;
        }
        mask.set(Sensor::Camera, Availability::Degraded(0.7));
        let (damaged, sam_damaged) = asf_infer(&store, &params, &bundle, &mask).unwrap();
        assert_eq!(full.0.shape(), damaged.0.shape());
        assert_ne!(sam_full, sam_damaged);
    }

    #[test]
    fn no_sensor_is_an_empty_key_error() {
        let (store, params, bundle) = setup(5, small());
        let mask = AvailabilityMask([Availability::Absent; 3]);
        assert!(matches!(
            asf_infer(&store, &params, &bundle, &mask),
            Err(crate::AsfError::EmptyKeys)
        ));
    }

    #[test]
    fn gradients_reach_only_present_sensors() {
        let (mut store, params, bundle) = setup(6, small());
        for set in SensorSet::COMBINATIONS {
            store.zero_grad();
            let mut g = Graph::new();
            let out = asf_forward(&mut g, &store, &params, &bundle, &AvailabilityMask::from_set(set)).unwrap();
            let loss = g.sum(out.fused).unwrap();
            // sum of a layer-normed output has tiny gradients; weight it
            let w: Vec<f64> = (0..g.value(out.fused).len()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
            let wt = g.constant(Tensor::new(g.shape(out.fused).to_vec(), w).unwrap()).unwrap();
            let prod = g.add(out.fused, wt).unwrap();
            let sq = g.gelu(prod).unwrap();
            let l2 = g.sum(sq).unwrap();
            let total = g.add(loss, l2).unwrap();
            g.backward(total, &mut store).unwrap();
            for s in Sensor::ALL {
                let touched = params
                    .ucp_param_ids(s)
                    .iter()
                    .any(|&id| store.grad(id).data().iter().any(|&v| v != 0.0));
                assert_eq!(touched, set.contains(s), "{s} in {set}");
            }
        }
    }

    #[test]
    fn ucp_width_mismatch_is_config_error() {
        let (store, params, _) = setup(7, small());
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let fm = FeatureMap::new(Sensor::Camera, Tensor::randn(&[5, 4, 4], 1.0, &mut r)).unwrap();
        let ps = patchify(&fm, 2, 2).unwrap();
        let mut g = Graph::new();
        assert!(matches!(
            ucp_project(&mut g, &store, params.ucp(Sensor::Camera), &ps),
            Err(crate::AsfError::Config(_))
        ));
    }

    #[test]
    fn unified_width_is_c_u_for_all_sensors() {
        let (store, params, bundle) = setup(8, small());
        let mut g = Graph::new();
        for s in Sensor::ALL {
            let ps = patchify(bundle.get(s).unwrap(), 2, 2).unwrap();
            let u = ucp_project(&mut g, &store, params.ucp(s), &ps).unwrap();
            assert_eq!(g.shape(u.features), &[16, 16]);
        }
    }

    #[test]
    fn patch_order_permutation_is_equivariant() {
        let (store, params, bundle) = setup(9, small());
        let layout = PatchLayout::new(8, 8, 2, 2).unwrap();
        let n = layout.num_patches();
        let perm: Vec<usize> = (0..n).map(|i| (i * 5 + 3) % n).collect();
        let run = |permute: bool| {
            let mut g = Graph::new();
            let mut unified = Vec::new();
            for s in Sensor::ALL {
                let mut ps = patchify(bundle.get(s).unwrap(), 2, 2).unwrap();
                if permute {
                    let w = ps.patches.shape()[1];
                    let data: Vec<f64> = perm.iter().flat_map(|&p| ps.patches.row(p).to_vec()).collect();
                    ps.patches = Tensor::new(vec![n, w], data).unwrap();
                }
                unified.push(ucp_project(&mut g, &store, params.ucp(s), &ps).unwrap());
            }
            let out = casap_fuse(&mut g, &store, &params, &unified, &AvailabilityMask::all(), &layout).unwrap();
            g.value(out.patches).clone()
        };
        let base = run(false);
        let permuted = run(true);
        let c = base.shape()[1];
        for b in 0..2 {
            for (j, &p) in perm.iter().enumerate() {
                assert_eq!(permuted.row(b * n + j), base.row(b * n + p));
            }
        }
        assert_eq!(base.shape(), &[2 * n, c]);
    }
}
