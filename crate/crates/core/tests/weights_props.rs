use convfeat::nn::{he_normal_init, ArchitectureSpec};
use convfeat::weights::{model_from_container, model_to_container, ModelMeta, ModelSource, TensorRecord, WeightFile};
use proptest::prelude::*;

fn record() -> impl Strategy<Value = (Vec<usize>, Vec<f32>)> {
    prop::collection::vec(1usize..5, 1..4).prop_flat_map(|shape| {
        let n: usize = shape.iter().product();
        (Just(shape), prop::collection::vec(any::<f32>(), n))
    })
}

fn weight_file() -> impl Strategy<Value = WeightFile> {
    (prop::collection::vec(record(), 0..5), "[a-z]{0,12}").prop_map(|(records, note)| {
        let mut f = WeightFile::new(serde_json::json!({ "note": note }));
        for (i, (shape, data)) in records.into_iter().enumerate() {
            f.records.push(TensorRecord::new(format!("t{i}"), &shape, data));
        }
        f
    })
}

fn bits(f: &WeightFile) -> Vec<Vec<u32>> {
    f.records.iter().map(|r| r.data.iter().map(|v| v.to_bits()).collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn roundtrip_is_bit_exact(f in weight_file()) {
        let bytes = f.to_bytes().unwrap();
        let back = WeightFile::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back.metadata, &f.metadata);
        prop_assert_eq!(bits(&back), bits(&f));
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn any_single_byte_change_is_rejected(f in weight_file(), pos in any::<prop::sample::Index>(), mask in 1u8..=255) {
        let mut bytes = f.to_bytes().unwrap();
        let i = pos.index(bytes.len());
        bytes[i] ^= mask;
        prop_assert!(WeightFile::from_bytes(&bytes).is_err());
    }

    #[test]
    fn truncation_is_rejected(f in weight_file(), cut in any::<prop::sample::Index>()) {
        let bytes = f.to_bytes().unwrap();
        let n = cut.index(bytes.len());
        prop_assert!(WeightFile::from_bytes(&bytes[..n]).is_err());
    }
}

#[test]
fn trailing_bytes_are_rejected() {
    let mut bytes = WeightFile::new(serde_json::json!({})).to_bytes().unwrap();
    bytes.push(0);
    assert!(WeightFile::from_bytes(&bytes).is_err());
}

#[test]
fn model_container_requires_every_tensor() {
    let spec = ArchitectureSpec::toy();
    let model = he_normal_init(&spec, 1).unwrap();
    let mut file = model_to_container(&model, &ModelMeta::new(&spec, ModelSource::Random, Some(1))).unwrap();
    let (back, meta) = model_from_container(&file).unwrap();
    assert_eq!(back, model);
    assert_eq!(meta.source, ModelSource::Random);
    file.records.pop();
    assert!(model_from_container(&file).is_err());
}

#[test]
fn documented_example_parses() {
    let bytes = [
        0x43, 0x4e, 0x46, 0x31, 0x01, 0x00, 0x0f, 0x00, 0x00, 0x00, 0x7b, 0x22, 0x6e, 0x6f, 0x74, 0x65, 0x22, 0x3a, 0x22, 0x64, 0x65, 0x6d, 0x6f,
        0x22, 0x7d, 0x01, 0x00, 0x00, 0x00, 0x06, 0x00, 0x62, 0x69, 0x61, 0x73, 0x2e, 0x62, 0x00, 0x01, 0x02, 0x00, 0x00, 0x00, 0x08, 0x00, 0x00,
        0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xbf, 0x0a, 0xd8, 0x7d, 0x42,
    ];
    let f = WeightFile::from_bytes(&bytes).unwrap();
    assert_eq!(f.metadata, serde_json::json!({ "note": "demo" }));
    assert_eq!(f.records, vec![TensorRecord::new("bias.b", &[2], vec![1.0, -0.5])]);
    assert_eq!(f.to_bytes().unwrap(), bytes);
}
