use std::collections::BTreeMap;

use ltssl_autodiff::checkpoint::{load, save};
use ltssl_autodiff::{ParamKind, ParamStore, Tensor};
use proptest::prelude::*;

fn store_from(values: &[Vec<f64>]) -> ParamStore {
    let mut store = ParamStore::new();
    for (i, v) in values.iter().enumerate() {
        let kind = if i % 2 == 0 { ParamKind::Trainable } else { ParamKind::Buffer };
        store.add(format!("layer{i}.w"), Tensor::from_vec(v.clone()), kind);
    }
    store
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn round_trip_is_bit_exact(values in prop::collection::vec(prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..20), 1..6)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.manifest");
        let store = store_from(&values);
        let mut meta = BTreeMap::new();
        meta.insert("arch.variant".to_string(), "vgg".to_string());
        save(&path, &store, &meta).unwrap();
        let (back, meta_back) = load(&path).unwrap();
        prop_assert_eq!(meta_back, meta);
        prop_assert_eq!(back.len(), store.len());
        for ((_, a), (_, b)) in store.iter().zip(back.iter()) {
            prop_assert_eq!(&a.name, &b.name);
            prop_assert_eq!(a.kind, b.kind);
            let abits: Vec<u64> = a.value.data().iter().map(|v| v.to_bits()).collect();
            let bbits: Vec<u64> = b.value.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(abits, bbits);
        }
    }
}

#[test]
fn manifest_lists_shapes_and_offsets() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.manifest");
    let mut store = ParamStore::new();
    store.add("conv.kernel", Tensor::zeros(&[3, 3, 1, 2]), ParamKind::Trainable);
    store.add("bn.running_mean", Tensor::zeros(&[2]), ParamKind::Buffer);
    save(&path, &store, &BTreeMap::new()).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("param.0.shape = 3x3x1x2"));
    assert!(text.contains("param.1.offset = 144"));
    assert!(text.contains("data_bytes = 160"));
    assert!(text.contains("dtype = f64"));
}

#[test]
fn truncated_data_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.manifest");
    save(&path, &store_from(&[vec![1.0, 2.0]]), &BTreeMap::new()).unwrap();
    std::fs::write(dir.path().join("w.bin"), [0u8; 8]).unwrap();
    assert!(load(&path).is_err());
}
