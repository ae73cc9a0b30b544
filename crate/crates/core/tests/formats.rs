//! Files assembled byte by byte, the way a producer in another language
//! would write them.

use rtw_core::attention::{self_attention_weights, WeightSource};
use rtw_core::io::{decode_features, decode_weights, encode_features, encode_weights};
use rtw_core::FeatureSequence;

fn header(magic: &[u8; 4]) -> Vec<u8> {
    let mut b = magic.to_vec();
    b.extend(1u32.to_le_bytes());
    b
}

#[test]
fn hand_written_feature_file() {
    let mut b = header(b"RTWF");
    b.extend(3u64.to_le_bytes());
    b.extend(2u64.to_le_bytes());
    b.extend(4u32.to_le_bytes());
    b.extend(b"walk");
    for x in [0.5f64, -1.0, 2.0, 0.0, 1e-300, 7.25] {
        b.extend(x.to_le_bytes());
    }
    let seq = decode_features(&b).unwrap();
    assert_eq!(seq.id(), "walk");
    assert_eq!((seq.len(), seq.dim()), (3, 2));
    assert_eq!(seq.frame(1), [2.0, 0.0]);
    assert_eq!(seq.frame(2), [1e-300, 7.25]);
    assert_eq!(encode_features(&seq), b);

    let mut nan = b.clone();
    let at = nan.len() - 8;
    nan[at..].copy_from_slice(&f64::NAN.to_le_bytes());
    assert!(decode_features(&nan).is_err());
    let mut wrong_version = b.clone();
    wrong_version[4] = 2;
    assert!(decode_features(&wrong_version).is_err());
}

#[test]
fn hand_written_weight_file() {
    // One head, d_model = 2, d_k = 1, d_v = 2; matrices row-major.
    let mut b = header(b"RTWA");
    b.extend(1u32.to_le_bytes());
    for n in [2u64, 1, 2] {
        b.extend(n.to_le_bytes());
    }
    let q = [1.0f64, 0.0];
    let k = [0.0f64, 2.0];
    let v = [1.0f64, 2.0, 3.0, 4.0];
    for x in q.iter().chain(&k).chain(&v) {
        b.extend(x.to_le_bytes());
    }
    let cfg = decode_weights(&b).unwrap();
    assert_eq!(cfg.source, WeightSource::File);
    assert_eq!(cfg.heads[0].w_v[(0, 1)], 2.0);
    assert_eq!(cfg.heads[0].w_v[(1, 0)], 3.0);
    assert_eq!(encode_weights(&cfg), b);

    // q_i = z_i0, k_j = 2 z_j1, so logits are 2 z_i0 z_j1 with d_k = 1.
    let seq = FeatureSequence::new("s", vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let a = self_attention_weights(&seq, &cfg, 0).unwrap();
    let e2 = 2f64.exp();
    assert!((a[(0, 1)] - e2 / (1.0 + e2)).abs() < 1e-15);
    assert!((a[(1, 0)] - 0.5).abs() < 1e-15);

    b.push(0);
    assert!(decode_weights(&b).is_err());
}
