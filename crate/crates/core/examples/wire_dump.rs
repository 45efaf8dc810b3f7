//! Prints the worked examples in WIRE-FORMAT.md from a seeded run.
//!
//!     cargo run -p ebake-core --example wire_dump

use std::fmt::Write as _;

use ebake_core::adversary::{self, Captured};
use ebake_core::codec::{decode_envelope, encode_fields, Field, MsgType};
use ebake_core::crypto::hash;
use ebake_core::network::DasNetwork;
use ebake_core::transport::DeliveryMode;

pub const SEED: u64 = 1;

fn wrap(hex: &str) -> String {
    hex.as_bytes()
        .chunks(64)
        .map(|c| std::str::from_utf8(c).expect("ascii"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn short(b: &[u8]) -> String {
    if b.len() <= 20 {
        hex::encode(b)
    } else {
        format!("{}…{} ({} bytes)", hex::encode(&b[..12]), hex::encode(&b[b.len() - 4..]), b.len())
    }
}

fn tag_name(t: u8) -> &'static str {
    match t {
        1 => "Scalar",
        2 => "Point",
        3 => "Digest",
        4 => "Bytes",
        5 => "Timestamp",
        6 => "Id",
        7 => "Str",
        _ => "?",
    }
}

fn describe(out: &mut String, title: &str, names: &[&str], e: &Captured) {
    let env = decode_envelope(&e.raw).expect("own output decodes");
    let _ = writeln!(out, "### {title}\n");
    let _ = writeln!(out, "Topic `{}`, {} bytes.\n", e.topic, e.raw.len());
    let _ = writeln!(out, "```\n{}\n```\n", wrap(&hex::encode(&e.raw)));
    let _ = writeln!(out, "| Offset | Item | Value |");
    let _ = writeln!(out, "|---|---|---|");
    let _ = writeln!(out, "| 0 | msg_type | `{:02x}` ({:?}) |", e.raw[0], env.msg_type);
    let _ = writeln!(out, "| 1 | correlation | `{}` |", hex::encode(env.correlation.0));
    let _ = writeln!(out, "| 17 | sender_len | `{}` ({}) |", hex::encode(&e.raw[17..19]), env.sender.len());
    let _ = writeln!(out, "| 19 | sender | `{}` |", env.sender);
    let mut at = env.payload_offset();
    let _ = writeln!(out, "| {at} | payload version | `{:02x}` |", e.raw[at]);
    at += 1;
    for name in names {
        let t = e.raw[at];
        let len = u32::from_be_bytes(e.raw[at + 1..at + 5].try_into().expect("4 bytes")) as usize;
        let body = &e.raw[at + 5..at + 5 + len];
        let shown = match t {
            7 => String::from_utf8_lossy(body).into_owned(),
            _ => short(body),
        };
        let _ = writeln!(out, "| {at} | {name}: {} len {len} | `{shown}` |", tag_name(t));
        at += 5 + len;
    }
    let _ = writeln!(out);
}

pub fn render() -> String {
    let mut out = String::new();

    let fields = [
        Field::Id(*b"device-x\0\0\0\0\0\0\0\0"),
        Field::Timestamp(1_700_000_000_000),
        Field::Bytes(vec![0xde, 0xad]),
    ];
    let enc = encode_fields(&fields);
    let _ = writeln!(out, "### Field list\n");
    let _ = writeln!(out, "`[Id \"device-x\", Timestamp 1700000000000, Bytes dead]`:\n");
    let _ = writeln!(out, "```\n{}\n```\n", wrap(&hex::encode(&enc)));
    let d = hash("EBAKE-example", &fields);
    let framed = encode_fields(&[
        Field::Str("EBAKE-example".into()),
        fields[0].clone(),
        fields[1].clone(),
        fields[2].clone(),
    ]);
    let _ = writeln!(out, "### Hash input\n");
    let _ = writeln!(out, "`hash(\"EBAKE-example\", same fields)` hashes:\n");
    let _ = writeln!(out, "```\n{}\n```\n", wrap(&hex::encode(&framed)));
    let _ = writeln!(out, "SHA-256 of that: `{}`\n", d.to_hex());

    let mut n = adversary::ebake_network(SEED);
    let s = n.handshake(adversary::device_x(), adversary::device_y());
    assert!(s.keys_match());
    let t = n.broker().tap().transcript();
    let first = |m: MsgType| t.of_type(m).next().expect("captured").clone();
    describe(&mut out, "M1: initiator to TA", &["W", "Y", "Z", "P_dx", "T1"], &first(MsgType::M1));
    describe(&mut out, "M2: TA to responder", &["Z", "P_dy", "T2"], &first(MsgType::M2));
    describe(&mut out, "M3: responder to TA", &["Z_y", "P_dTA", "T3"], &first(MsgType::M3));
    describe(&mut out, "M4: TA to initiator", &["Z_y", "P_dxx", "T4", "topic"], &first(MsgType::M4));
    describe(&mut out, "Topic notice: TA to responder", &["topic", "T4"], &first(MsgType::TopicNotice));
    let _ = writeln!(
        out,
        "Both sides derived the key with fingerprint `{}`.\n",
        s.initiator_key.as_ref().expect("established").fingerprint()
    );

    let mut d = DasNetwork::with_tap(5000, DeliveryMode::default(), SEED, adversary::AdversaryTap::new());
    d.add_device(adversary::device_x()).expect("fresh");
    d.add_device(adversary::device_y()).expect("fresh");
    d.handshake(adversary::device_x(), adversary::device_y()).expect("registered");
    let t = d.broker().tap().transcript();
    let m1 = t.of_type(MsgType::DasM1).next().expect("captured").clone();
    describe(
        &mut out,
        "Baseline M1 (for comparison)",
        &["TS_x", "ID_x", "c_x", "z_x", "A_x", "Pub_x", "R_x"],
        &m1,
    );
    out
}

#[allow(dead_code)]
fn main() {
    print!("{}", render());
}
