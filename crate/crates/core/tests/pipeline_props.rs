mod oracles;

use oracles::shape_dataset;
use pointhop::codec::CodecError;
use pointhop::pipeline::{pool, MODEL_VERSION};
use pointhop::rng::Stream;
use pointhop::{
    fit_pointhop, fit_pointhop_with_features, load_model, receptive_fields, save_model, AttributeMatrix,
    InitialAttributes, PipelineError, PointCloud, PointHopConfig, PointHopModel, Pooling, Reduction, Sampling,
};
use proptest::prelude::*;

fn small_config() -> PointHopConfig {
    PointHopConfig {
        input_points: 128,
        unit_points: vec![128, 32, 16],
        k_values: vec![16, 8, 8],
        n_ac: vec![8, 12, 16],
        seed: 5,
        ..PointHopConfig::default()
    }
}

fn data() -> Vec<PointCloud<f64>> {
    shape_dataset(6, 160, 3).0
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn dimension_chain_holds_after_fit() {
    let config = small_config();
    let model = fit_pointhop(&data(), &config).unwrap();
    let dims: Vec<usize> = model.banks().iter().map(|b| b.input_dim()).collect();
    assert_eq!(dims, vec![24, 72, 104]);
    assert_eq!(model.unit_dims(), vec![9, 13, 17]);
    assert_eq!(model.feature_len(), 4 * (9 + 13 + 17));
    for (b, &n) in model.banks().iter().zip(&config.n_ac) {
        assert_eq!(b.output_dim(), n + 1);
    }
}

#[test]
fn fit_is_deterministic_across_thread_counts() {
    let clouds = data();
    let config = small_config();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| save_model(&fit_pointhop(&clouds, &config).unwrap()))
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(3));
}

#[test]
fn training_features_equal_extracted_features() {
    let clouds = data();
    let out = fit_pointhop_with_features(&clouds, &small_config()).unwrap();
    for (cloud, f) in clouds.iter().zip(&out.features) {
        assert_eq!(bits(&out.model.extract_features(cloud).unwrap()), bits(f));
    }
    let many = out.model.extract_many(&clouds, None).unwrap();
    assert_eq!(many, out.features);
}

#[test]
fn features_ignore_point_order() {
    let clouds = data();
    for sampling in [Sampling::Fps, Sampling::Random] {
        let config = PointHopConfig {
            sampling,
            ..small_config()
        };
        let model = fit_pointhop(&clouds, &config).unwrap();
        let mut rng = Stream::new(77);
        for cloud in &clouds[..4] {
            let mut shuffled = cloud.clone();
            rng.shuffle(&mut shuffled.points);
            assert_eq!(
                bits(&model.extract_features(cloud).unwrap()),
                bits(&model.extract_features(&shuffled).unwrap())
            );
        }
    }
}

#[test]
fn unit_outputs_are_nonnegative_on_training_clouds() {
    let clouds = data();
    let model = fit_pointhop(&clouds, &small_config()).unwrap();
    for cloud in &clouds {
        for attrs in model.transform(cloud).unwrap() {
            assert!(attrs.as_slice().iter().all(|&x| x >= 0.0));
        }
    }
}

#[test]
fn model_file_round_trip_and_corruption() {
    let clouds = data();
    let model = fit_pointhop(&clouds, &small_config()).unwrap();
    let bytes = save_model(&model);
    assert_eq!(&bytes[..4], b"PHM1");
    let back: PointHopModel<f64> = load_model(&bytes).unwrap();
    assert_eq!(back.config(), model.config());
    for cloud in &clouds[..3] {
        assert_eq!(
            bits(&back.extract_features(cloud).unwrap()),
            bits(&model.extract_features(cloud).unwrap())
        );
    }

    let mut flipped = bytes.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 0x10;
    assert!(matches!(
        load_model::<f64>(&flipped),
        Err(PipelineError::Codec(CodecError::ChecksumFailure { .. }))
    ));
    assert!(matches!(
        load_model::<f64>(&bytes[..bytes.len() - 9]),
        Err(PipelineError::Codec(
            CodecError::ChecksumFailure { .. } | CodecError::Truncated(_)
        ))
    ));
    assert!(matches!(
        PointHopModel::<f64>::from_bytes_with_reader(&bytes, MODEL_VERSION - 1),
        Err(PipelineError::Codec(CodecError::VersionMismatch {
            found: 1,
            reader: 0
        }))
    ));
}

#[test]
fn single_precision_pipeline_fits_and_widens() {
    let clouds = data();
    let config = small_config();
    let m64 = fit_pointhop(&clouds, &config).unwrap();
    let c32: Vec<PointCloud<f32>> = clouds.iter().map(|c| c.cast()).collect();
    let m32 = fit_pointhop(&c32, &config).unwrap();
    assert_eq!(m32.feature_len(), m64.feature_len());
    // Model files store f64 regardless of precision and load in either.
    let widened: PointHopModel<f64> = load_model(&save_model(&m32)).unwrap();
    assert_eq!(widened.feature_len(), m64.feature_len());
}

#[test]
fn receptive_fields_grow_with_depth() {
    let clouds = data();
    let config = small_config();
    for cloud in &clouds[..3] {
        let fields = receptive_fields(cloud, &config).unwrap();
        assert_eq!(fields.len(), 3);
        assert!(fields[0].iter().all(|(_, s)| s.len() == 16));
        for u in 1..fields.len() {
            for (center, set) in &fields[u] {
                let (_, prev) = fields[u - 1]
                    .iter()
                    .find(|(c, _)| c == center)
                    .expect("center retained from previous unit");
                assert!(set.is_superset(prev));
                assert!(set.contains(center));
            }
        }
    }
}

#[test]
fn channel_response_and_errors() {
    let clouds = data();
    let model = fit_pointhop(&clouds, &small_config()).unwrap();
    let r = model.channel_response(&clouds[0], 1, 3).unwrap();
    assert_eq!(r.len(), 32);
    assert!(matches!(
        model.channel_response(&clouds[0], 1, 13),
        Err(PipelineError::ChannelOutOfRange {
            unit: 1,
            channel: 13,
            channels: 13
        })
    ));
    let tiny = PointCloud::new(clouds[0].points[..50].to_vec());
    assert!(matches!(
        model.extract_features(&tiny),
        Err(PipelineError::InsufficientPoints { needed: 128, found: 50 })
    ));
}

#[test]
fn lower_density_inputs_keep_feature_length() {
    let clouds = data();
    let model = fit_pointhop(&clouds, &small_config()).unwrap();
    for n in [128, 96, 64, 40, 20] {
        let f = model.extract_features_at_density(&clouds[1], n).unwrap();
        assert_eq!(f.len(), model.feature_len());
        assert!(f.iter().all(|x| x.is_finite()));
    }
}

#[test]
fn configuration_variants_fit() {
    let clouds = data();
    let base = small_config();
    let pca = PointHopConfig {
        reduction: Reduction::Pca,
        ..base.clone()
    };
    let m = fit_pointhop(&clouds, &pca).unwrap();
    assert_eq!(m.unit_dims(), vec![9, 13, 17]);
    let uncentered = PointHopConfig {
        center_ac: false,
        ..base.clone()
    };
    fit_pointhop(&clouds, &uncentered).unwrap();
    let rgb = PointHopConfig {
        initial_attributes: InitialAttributes::XyzRgb,
        ..base
    };
    assert!(matches!(fit_pointhop(&clouds, &rgb), Err(PipelineError::MissingColors)));
    let colored: Vec<PointCloud<f64>> = clouds
        .iter()
        .map(|c| PointCloud::with_colors(c.points.clone(), c.points.iter().map(|p| p.map(f64::abs)).collect()).unwrap())
        .collect();
    let m = fit_pointhop(&colored, &rgb).unwrap();
    assert_eq!(m.banks()[0].input_dim(), 48);
}

#[test]
fn empty_training_set_is_rejected() {
    assert!(matches!(
        fit_pointhop::<f64>(&[], &small_config()),
        Err(PipelineError::EmptyTrainingSet)
    ));
}

proptest! {
    #[test]
    fn pooling_bounds(rows in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 4), 1..30)) {
        let m = AttributeMatrix::from_rows(&rows);
        let max = pool(&m, Pooling::Max).unwrap();
        let mean = pool(&m, Pooling::Mean).unwrap();
        let l1 = pool(&m, Pooling::L1).unwrap();
        let l2 = pool(&m, Pooling::L2).unwrap();
        for d in 0..4 {
            prop_assert!(mean[d] <= max[d] + 1e-12);
            prop_assert!(l1[d] + 1e-12 >= mean[d].abs());
            prop_assert!(l2[d] * l2[d] + 1e-9 >= mean[d] * mean[d]);
        }
    }
}
