use proptest::prelude::*;
use rwc_core::snapshot::{decode_snapshot, encode_snapshot, FormatError, TensorValues};
use rwc_core::{read_snapshot, write_snapshot, TensorData, TensorSnapshot};

fn finite_f64() -> impl Strategy<Value = f64> {
    any::<f64>().prop_filter("finite", |v| v.is_finite())
}

fn finite_f32() -> impl Strategy<Value = f32> {
    any::<f32>().prop_filter("finite", |v| v.is_finite())
}

fn tensor() -> impl Strategy<Value = TensorData> {
    prop::collection::vec(0usize..5, 0..=3).prop_flat_map(|shape| {
        let n: usize = shape.iter().product();
        let s32 = shape.clone();
        prop_oneof![
            prop::collection::vec(finite_f32(), n).prop_map(move |v| TensorData::from_f32(s32.clone(), v).unwrap()),
            prop::collection::vec(finite_f64(), n).prop_map(move |v| TensorData::from_f64(shape.clone(), v).unwrap()),
        ]
    })
}

fn snapshot() -> impl Strategy<Value = TensorSnapshot> {
    (
        prop::collection::vec(("[a-z]{1,4}(\\.[a-z0-9_]{1,6}){0,2}", tensor()), 0..6),
        prop::collection::btree_map("[a-z_]{1,8}", ".{0,12}", 0..3),
    )
        .prop_map(|(entries, meta)| {
            let mut s = TensorSnapshot::new();
            for (name, t) in entries {
                let _ = s.insert(name, t);
            }
            for (k, v) in meta {
                s.set_metadata(k, v);
            }
            s
        })
}

fn bits(t: &TensorData) -> Vec<u64> {
    match t.values() {
        TensorValues::F32(v) => v.iter().map(|x| u64::from(x.to_bits())).collect(),
        TensorValues::F64(v) => v.iter().map(|x| x.to_bits()).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn write_read_is_bit_exact(original in snapshot()) {
        let mut bytes = Vec::new();
        write_snapshot(&original, &mut bytes).unwrap();
        let back = read_snapshot(bytes.as_slice()).unwrap();
        prop_assert_eq!(back.names().collect::<Vec<_>>(), original.names().collect::<Vec<_>>());
        prop_assert_eq!(back.metadata(), original.metadata());
        for (name, t) in original.iter() {
            let r = back.get(name).unwrap();
            prop_assert_eq!(r.dtype(), t.dtype());
            prop_assert_eq!(r.shape(), t.shape());
            prop_assert_eq!(bits(r), bits(t));
        }
        prop_assert_eq!(encode_snapshot(&back).unwrap(), bytes);
    }

    #[test]
    fn truncation_is_always_detected(original in snapshot(), cut in any::<prop::sample::Index>()) {
        let bytes = encode_snapshot(&original).unwrap();
        let keep = cut.index(bytes.len());
        prop_assert!(decode_snapshot(&bytes[..keep]).is_err());
    }
}

fn raw_file(header: &str, data: &[u8]) -> Vec<u8> {
    let mut out = (header.len() as u64).to_le_bytes().to_vec();
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(data);
    out
}

#[test]
fn header_that_is_not_json() {
    let bytes = raw_file("{not json", &[]);
    assert!(matches!(decode_snapshot(&bytes), Err(FormatError::MalformedHeader(_))));
}

#[test]
fn header_length_beyond_file() {
    let mut bytes = raw_file("{}", &[]);
    bytes[0] = 200;
    assert!(matches!(decode_snapshot(&bytes), Err(FormatError::MalformedHeader(_))));
}

#[test]
fn missing_payload_bytes() {
    let bytes = raw_file(r#"{"w":{"dtype":"F64","shape":[2],"data_offsets":[0,16]}}"#, &[0u8; 8]);
    assert!(matches!(decode_snapshot(&bytes), Err(FormatError::TruncatedFile { .. })));
    assert!(matches!(decode_snapshot(&bytes[..5]), Err(FormatError::TruncatedFile { .. })));
}

#[test]
fn overlapping_offsets() {
    let header = r#"{"a":{"dtype":"F32","shape":[2],"data_offsets":[0,8]},"b":{"dtype":"F32","shape":[2],"data_offsets":[4,12]}}"#;
    let bytes = raw_file(header, &[0u8; 12]);
    assert!(matches!(decode_snapshot(&bytes), Err(FormatError::MalformedHeader(_))));
}

#[test]
fn bf16_is_unsupported() {
    let bytes = raw_file(r#"{"w":{"dtype":"BF16","shape":[2],"data_offsets":[0,4]}}"#, &[0u8; 4]);
    match decode_snapshot(&bytes) {
        Err(FormatError::UnsupportedDtype { name, dtype }) => {
            assert_eq!(name, "w");
            assert_eq!(dtype, "BF16");
        }
        other => panic!("expected UnsupportedDtype, got {other:?}"),
    }
}

#[test]
fn nan_payload_is_rejected_on_read() {
    let mut data = 1.0f64.to_le_bytes().to_vec();
    data.extend_from_slice(&f64::NAN.to_le_bytes());
    let bytes = raw_file(r#"{"w":{"dtype":"F64","shape":[2],"data_offsets":[0,16]}}"#, &data);
    assert!(matches!(decode_snapshot(&bytes), Err(FormatError::NonFiniteValue { index: 1, .. })));
}

#[test]
fn nan_is_rejected_on_write() {
    let mut s = TensorSnapshot::new();
    s.insert("w", TensorData::from_f32(vec![3], vec![0.0, 1.0, f32::INFINITY]).unwrap()).unwrap();
    assert!(matches!(encode_snapshot(&s), Err(FormatError::NonFiniteValue { index: 2, .. })));
}

#[test]
fn names_are_validated() {
    let mut s = TensorSnapshot::new();
    let t = TensorData::from_f64(vec![1], vec![1.0]).unwrap();
    assert!(s.insert("", t.clone()).is_err());
    assert!(s.insert("__metadata__", t.clone()).is_err());
    s.insert("a", t.clone()).unwrap();
    assert!(matches!(s.insert("a", t), Err(FormatError::DuplicateName(_))));
}
