use cellmix_core::tbf::{decode, encode, read_tbf, write_tbf, TbfData, TbfError};
use cellmix_core::{ImageBatch, Provenance, SoftLabelBatch};
use proptest::prelude::*;

fn any_data() -> impl Strategy<Value = TbfData> {
    prop_oneof![
        (1usize..4, 1usize..4, 1usize..6, 1usize..6).prop_flat_map(|(b, c, h, w)| {
            prop::collection::vec(-1e6f32..1e6, b * c * h * w)
                .prop_map(move |d| TbfData::Images(ImageBatch::new(d, b, c, h, w).unwrap()))
        }),
        prop::collection::vec(any::<u32>(), 0..50).prop_map(TbfData::Labels),
        (1usize..6, 1usize..6).prop_flat_map(|(b, n)| {
            prop::collection::vec(0..b as u32, b * n)
                .prop_map(move |d| TbfData::Provenance(Provenance::new(b, n, d).unwrap()))
        }),
        (1usize..6, 2usize..5, 0usize..5).prop_map(|(b, cls, hot)| {
            let mut w = vec![0.0f32; b * cls];
            for s in 0..b {
                w[s * cls + (hot + s) % cls] = 1.0;
            }
            TbfData::SoftLabels(SoftLabelBatch::new(w, b, cls).unwrap())
        }),
    ]
}

proptest! {
    #[test]
    fn encode_decode_encode_is_byte_exact(data in any_data()) {
        let bytes = encode(&data);
        let back = decode(&bytes).unwrap();
        prop_assert_eq!(&back, &data);
        prop_assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn every_strict_prefix_is_rejected(data in any_data(), cut in 0.0f64..1.0) {
        let bytes = encode(&data);
        let len = ((bytes.len() as f64) * cut) as usize;
        let short = &bytes[..len.min(bytes.len() - 1)];
        let is_truncated = matches!(decode(short), Err(TbfError::Truncated { .. }));
        prop_assert!(is_truncated);
    }
}

#[test]
fn file_roundtrip_of_an_image_batch() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("batch.tbf");
    let data = (0..2 * 3 * 4 * 4).map(|v| (v as f32).sin()).collect();
    let batch = TbfData::Images(ImageBatch::new(data, 2, 3, 4, 4).unwrap());
    write_tbf(&path, &batch).unwrap();
    let first = std::fs::read(&path).unwrap();
    let back = read_tbf(&path).unwrap();
    assert_eq!(back, batch);
    write_tbf(&path, &back).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), first);
}
