use proptest::collection::vec;
use proptest::prelude::*;

use ebake_core::codec::{decode_envelope, decode_fields, encode_fields, Envelope, Field, WireMessage};
use ebake_core::crypto::Digest;
use ebake_core::das::{DasMsg1, DasMsg2, DasMsg3};
use ebake_core::ebake::{AppMessage, Msg1, Msg2, Msg3, Msg4, TopicNotice};
use ebake_core::CorrelationId;

fn field() -> impl Strategy<Value = Field> {
    prop_oneof![
        any::<[u8; 32]>().prop_map(Field::Scalar),
        any::<[u8; 32]>().prop_map(Field::Digest),
        (any::<[u8; 32]>(), any::<bool>()).prop_map(|(b, odd)| {
            let mut p = [0u8; 33];
            p[0] = if odd { 3 } else { 2 };
            p[1..].copy_from_slice(&b);
            Field::Point(p)
        }),
        vec(any::<u8>(), 0..200).prop_map(Field::Bytes),
        any::<u64>().prop_map(Field::Timestamp),
        any::<[u8; 16]>().prop_map(Field::Id),
        "[a-z/+#0-9]{0,40}".prop_map(Field::Str),
    ]
}

fn msg4() -> impl Strategy<Value = Msg4> {
    (vec(any::<u8>(), 0..200), any::<[u8; 32]>(), any::<u64>(), "[a-z/0-9]{1,60}")
        .prop_map(|(z_y, d, t4, topic)| Msg4 { z_y, p_dxx: Digest(d), t4, topic })
}

fn msg1() -> impl Strategy<Value = Msg1> {
    (vec(any::<u8>(), 0..200), any::<[u8; 33]>(), vec(any::<u8>(), 0..300), any::<[u8; 32]>(), any::<u64>())
        .prop_map(|(w, y, z, d, t1)| Msg1 { w, y, z, p_dx: Digest(d), t1 })
}

fn roundtrip<M: WireMessage + PartialEq + std::fmt::Debug>(m: &M, c: [u8; 16], sender: &str) {
    let raw = Envelope::wrap(m, CorrelationId(c), sender).encode();
    let env = decode_envelope(&raw).expect("decodes");
    assert_eq!(env.correlation.0, c);
    assert_eq!(env.sender, sender);
    assert_eq!(&env.message::<M>().expect("schema"), m);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn fields_roundtrip(fs in vec(field(), 0..12)) {
        let raw = encode_fields(&fs);
        prop_assert_eq!(decode_fields(&raw).unwrap(), fs);
    }

    #[test]
    fn messages_roundtrip(m1 in msg1(), m4 in msg4(), c in any::<[u8; 16]>(), s in "[a-z/]{0,30}") {
        roundtrip(&m1, c, &s);
        roundtrip(&m4, c, &s);
        roundtrip(&Msg2 { z: m1.z.clone(), p_dy: m1.p_dx, t2: m1.t1 }, c, &s);
        roundtrip(&Msg3 { z_y: m4.z_y.clone(), p_dta: m4.p_dxx, t3: m4.t4 }, c, &s);
        roundtrip(&TopicNotice { topic: m4.topic.clone(), t4: m4.t4 }, c, &s);
        roundtrip(&AppMessage { sealed: m1.w.clone() }, c, &s);
    }

    #[test]
    fn arbitrary_bytes_never_panic(raw in vec(any::<u8>(), 0..400)) {
        let _ = decode_fields(&raw);
        if let Ok(env) = decode_envelope(&raw) {
            let _ = env.message::<Msg1>();
            let _ = env.message::<Msg2>();
            let _ = env.message::<Msg3>();
            let _ = env.message::<Msg4>();
            let _ = env.message::<TopicNotice>();
            let _ = env.message::<AppMessage>();
            let _ = env.message::<DasMsg1>();
            let _ = env.message::<DasMsg2>();
            let _ = env.message::<DasMsg3>();
        }
    }

    #[test]
    fn mutated_envelopes_never_panic(m in msg4(), pos in any::<prop::sample::Index>(), b in any::<u8>(), cut in any::<prop::sample::Index>()) {
        let mut raw = Envelope::wrap(&m, CorrelationId([9; 16]), "ebake/ta").encode();
        let i = pos.index(raw.len());
        raw[i] = b;
        raw.truncate(cut.index(raw.len() + 1));
        if let Ok(env) = decode_envelope(&raw) {
            let _ = env.message::<Msg4>();
        }
    }
}

#[test]
fn trailing_field_is_rejected() {
    let m = Msg4 { z_y: vec![1, 2], p_dxx: Digest([3; 32]), t4: 4, topic: "t".into() };
    let mut fs = m.fields();
    fs.push(Field::Timestamp(0));
    assert!(Msg4::from_payload(&encode_fields(&fs)).is_err());
}
