//! Canonical, length-prefixed encoding of protocol values and the envelope
//! that carries them over the transport.
//!
//! Field list: `0x01 ‖ (tag(1) ‖ len(4, BE) ‖ bytes)*`.
//! Envelope: `msg_type(1) ‖ correlation(16) ‖ sender_len(2, BE) ‖ sender ‖ field list`.
//! The byte layout is documented with worked examples in `WIRE-FORMAT.md`.

use crate::id::{CorrelationId, DeviceId, Timestamp};

pub const VERSION: u8 = 0x01;

/// Ceiling on any single field, far above the largest protocol value.
pub const MAX_FIELD_LEN: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("input truncated")]
    Truncated,
    #[error("unsupported version byte {0:#04x}")]
    BadVersion(u8),
    #[error("unknown field tag {0:#04x}")]
    UnknownTag(u8),
    #[error("unknown message type {0}")]
    UnknownMsgType(u8),
    #[error("declared length {0} exceeds input")]
    LengthOverflow(usize),
    #[error("field of type {tag:?} has length {len}")]
    BadLength { tag: FieldTag, len: usize },
    #[error("string is not valid UTF-8")]
    Utf8,
    #[error("payload does not match the schema of {0:?}")]
    SchemaMismatch(MsgType),
    #[error("invalid field value: {0}")]
    InvalidValue(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FieldTag {
    Scalar = 0x01,
    Point = 0x02,
    Digest = 0x03,
    Bytes = 0x04,
    Timestamp = 0x05,
    Id = 0x06,
    Str = 0x07,
}

impl FieldTag {
    pub fn from_u8(v: u8) -> Result<FieldTag, CodecError> {
        Ok(match v {
            0x01 => FieldTag::Scalar,
            0x02 => FieldTag::Point,
            0x03 => FieldTag::Digest,
            0x04 => FieldTag::Bytes,
            0x05 => FieldTag::Timestamp,
            0x06 => FieldTag::Id,
            0x07 => FieldTag::Str,
            other => return Err(CodecError::UnknownTag(other)),
        })
    }

    fn fixed_len(self) -> Option<usize> {
        match self {
            FieldTag::Scalar | FieldTag::Digest => Some(32),
            FieldTag::Point => Some(33),
            FieldTag::Timestamp => Some(8),
            FieldTag::Id => Some(16),
            FieldTag::Bytes | FieldTag::Str => None,
        }
    }
}

/// One typed value in a canonical encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Field {
    Scalar([u8; 32]),
    Point([u8; 33]),
    Digest([u8; 32]),
    Bytes(Vec<u8>),
    Timestamp(Timestamp),
    Id([u8; 16]),
    Str(String),
}

impl Field {
    pub fn tag(&self) -> FieldTag {
        match self {
            Field::Scalar(_) => FieldTag::Scalar,
            Field::Point(_) => FieldTag::Point,
            Field::Digest(_) => FieldTag::Digest,
            Field::Bytes(_) => FieldTag::Bytes,
            Field::Timestamp(_) => FieldTag::Timestamp,
            Field::Id(_) => FieldTag::Id,
            Field::Str(_) => FieldTag::Str,
        }
    }

    fn write(&self, out: &mut Vec<u8>) {
        let ts;
        let body: &[u8] = match self {
            Field::Scalar(b) | Field::Digest(b) => b,
            Field::Point(b) => b,
            Field::Bytes(b) => b,
            Field::Timestamp(t) => {
                ts = t.to_be_bytes();
                &ts
            }
            Field::Id(b) => b,
            Field::Str(s) => s.as_bytes(),
        };
        out.push(self.tag() as u8);
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(body);
    }
}

pub fn encode_fields(fields: &[Field]) -> Vec<u8> {
    let mut out = Vec::with_capacity(1 + fields.len() * 40);
    out.push(VERSION);
    for f in fields {
        f.write(&mut out);
    }
    out
}

pub fn decode_fields(raw: &[u8]) -> Result<Vec<Field>, CodecError> {
    let (&version, mut rest) = raw.split_first().ok_or(CodecError::Truncated)?;
    if version != VERSION {
        return Err(CodecError::BadVersion(version));
    }
    let mut fields = Vec::new();
    while !rest.is_empty() {
        if rest.len() < 5 {
            return Err(CodecError::Truncated);
        }
        let tag = FieldTag::from_u8(rest[0])?;
        let len = u32::from_be_bytes([rest[1], rest[2], rest[3], rest[4]]) as usize;
        if len > MAX_FIELD_LEN || len > rest.len() - 5 {
            return Err(CodecError::LengthOverflow(len));
        }
        if let Some(want) = tag.fixed_len() {
            if want != len {
                return Err(CodecError::BadLength { tag, len });
            }
        }
        let body = &rest[5..5 + len];
        fields.push(match tag {
            FieldTag::Scalar => Field::Scalar(body.try_into().unwrap()),
            FieldTag::Point => Field::Point(body.try_into().unwrap()),
            FieldTag::Digest => Field::Digest(body.try_into().unwrap()),
            FieldTag::Bytes => Field::Bytes(body.to_vec()),
            FieldTag::Timestamp => Field::Timestamp(u64::from_be_bytes(body.try_into().unwrap())),
            FieldTag::Id => Field::Id(body.try_into().unwrap()),
            FieldTag::Str => Field::Str(String::from_utf8(body.to_vec()).map_err(|_| CodecError::Utf8)?),
        });
        rest = &rest[5 + len..];
    }
    Ok(fields)
}

/// Pulls typed values off a decoded field list in order.
pub struct FieldReader {
    fields: std::vec::IntoIter<Field>,
}

macro_rules! take {
    ($name:ident, $variant:ident, $ty:ty) => {
        pub fn $name(&mut self) -> Result<$ty, CodecError> {
            match self.fields.next() {
                Some(Field::$variant(v)) => Ok(v),
                Some(_) => Err(CodecError::InvalidValue(concat!("expected ", stringify!($variant)))),
                None => Err(CodecError::Truncated),
            }
        }
    };
}

impl FieldReader {
    pub fn new(fields: Vec<Field>) -> Self {
        FieldReader {
            fields: fields.into_iter(),
        }
    }

    pub fn parse(raw: &[u8]) -> Result<Self, CodecError> {
        decode_fields(raw).map(Self::new)
    }

    take!(scalar, Scalar, [u8; 32]);
    take!(point, Point, [u8; 33]);
    take!(digest, Digest, [u8; 32]);
    take!(bytes, Bytes, Vec<u8>);
    take!(timestamp, Timestamp, Timestamp);
    take!(id_bytes, Id, [u8; 16]);
    take!(string, Str, String);

    pub fn id(&mut self) -> Result<DeviceId, CodecError> {
        self.id_bytes().map(DeviceId)
    }

    pub fn fixed_bytes<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        let b = self.bytes()?;
        let len = b.len();
        b.try_into().map_err(|_| CodecError::BadLength {
            tag: FieldTag::Bytes,
            len,
        })
    }

    pub fn finish(mut self) -> Result<(), CodecError> {
        match self.fields.next() {
            None => Ok(()),
            Some(_) => Err(CodecError::InvalidValue("trailing fields")),
        }
    }
}

/// Envelope message types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[repr(u8)]
pub enum MsgType {
    M1 = 1,
    M2 = 2,
    M3 = 3,
    M4 = 4,
    App = 5,
    TopicNotice = 6,
    DasM1 = 10,
    DasM2 = 11,
    DasM3 = 12,
}

impl MsgType {
    pub fn from_u8(v: u8) -> Result<MsgType, CodecError> {
        Ok(match v {
            1 => MsgType::M1,
            2 => MsgType::M2,
            3 => MsgType::M3,
            4 => MsgType::M4,
            5 => MsgType::App,
            6 => MsgType::TopicNotice,
            10 => MsgType::DasM1,
            11 => MsgType::DasM2,
            12 => MsgType::DasM3,
            other => return Err(CodecError::UnknownMsgType(other)),
        })
    }

    /// Field tags each payload must carry, in order.
    pub fn schema(self) -> &'static [FieldTag] {
        use FieldTag::*;
        match self {
            MsgType::M1 => &[Bytes, Bytes, Bytes, Digest, Timestamp],
            MsgType::M2 => &[Bytes, Digest, Timestamp],
            MsgType::M3 => &[Bytes, Digest, Timestamp],
            MsgType::M4 => &[Bytes, Digest, Timestamp, Str],
            MsgType::App => &[Bytes],
            MsgType::TopicNotice => &[Str, Timestamp],
            MsgType::DasM1 => &[Timestamp, Id, Scalar, Scalar, Point, Point, Point],
            MsgType::DasM2 => &[Id, Timestamp, Point, Scalar, Scalar, Digest, Point, Point],
            MsgType::DasM3 => &[Digest, Timestamp],
        }
    }
}

/// A message as it travels over the transport.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub msg_type: MsgType,
    pub correlation: CorrelationId,
    /// Publisher's client label; doubles as the reply inbox.
    pub sender: String,
    /// Canonical field list matching `msg_type.schema()`.
    pub payload: Vec<u8>,
}

impl Envelope {
    pub const HEADER_LEN: usize = 1 + 16 + 2;

    pub fn encode(&self) -> Vec<u8> {
        let sender = self.sender.as_bytes();
        assert!(sender.len() <= u16::MAX as usize, "sender label too long");
        let mut out = Vec::with_capacity(Self::HEADER_LEN + sender.len() + self.payload.len());
        out.push(self.msg_type as u8);
        out.extend_from_slice(&self.correlation.0);
        out.extend_from_slice(&(sender.len() as u16).to_be_bytes());
        out.extend_from_slice(sender);
        out.extend_from_slice(&self.payload);
        out
    }

    /// Byte offset where the payload starts inside [`Envelope::encode`] output.
    pub fn payload_offset(&self) -> usize {
        Self::HEADER_LEN + self.sender.len()
    }

    pub fn fields(&self) -> Result<FieldReader, CodecError> {
        FieldReader::parse(&self.payload)
    }

    pub fn message<M: WireMessage>(&self) -> Result<M, CodecError> {
        if self.msg_type != M::TYPE {
            return Err(CodecError::SchemaMismatch(M::TYPE));
        }
        M::read(self.fields()?)
    }

    pub fn wrap<M: WireMessage>(m: &M, correlation: CorrelationId, sender: &str) -> Envelope {
        Envelope {
            msg_type: M::TYPE,
            correlation,
            sender: sender.to_owned(),
            payload: encode_fields(&m.fields()),
        }
    }
}

/// Parse and schema-check raw envelope bytes. Trailing bytes are rejected.
pub fn decode_envelope(raw: &[u8]) -> Result<Envelope, CodecError> {
    if raw.len() < Envelope::HEADER_LEN {
        return Err(CodecError::Truncated);
    }
    let msg_type = MsgType::from_u8(raw[0])?;
    let correlation = CorrelationId(raw[1..17].try_into().unwrap());
    let sender_len = u16::from_be_bytes([raw[17], raw[18]]) as usize;
    let rest = &raw[Envelope::HEADER_LEN..];
    if sender_len > rest.len() {
        return Err(CodecError::LengthOverflow(sender_len));
    }
    let sender = std::str::from_utf8(&rest[..sender_len])
        .map_err(|_| CodecError::Utf8)?
        .to_owned();
    let payload = rest[sender_len..].to_vec();
    let fields = decode_fields(&payload)?;
    let tags: Vec<FieldTag> = fields.iter().map(Field::tag).collect();
    if tags != msg_type.schema() {
        return Err(CodecError::SchemaMismatch(msg_type));
    }
    Ok(Envelope {
        msg_type,
        correlation,
        sender,
        payload,
    })
}

/// A protocol message with a fixed envelope type and field schema.
pub trait WireMessage: Sized {
    const TYPE: MsgType;

    fn fields(&self) -> Vec<Field>;

    fn read(r: FieldReader) -> Result<Self, CodecError>;

    fn to_payload(&self) -> Vec<u8> {
        encode_fields(&self.fields())
    }

    fn from_payload(raw: &[u8]) -> Result<Self, CodecError> {
        Self::read(FieldReader::parse(raw)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_version_only() {
        assert_eq!(encode_fields(&[]), vec![0x01]);
        assert_eq!(decode_fields(&[0x01]).unwrap(), vec![]);
    }

    #[test]
    fn id_framing() {
        let id = [0xab; 16];
        let mut want = vec![0x01, 0x06, 0, 0, 0, 0x10];
        want.extend_from_slice(&id);
        assert_eq!(encode_fields(&[Field::Id(id)]), want);
    }

    #[test]
    fn timestamp_is_big_endian_u64() {
        let enc = encode_fields(&[Field::Timestamp(0x0102030405060708)]);
        assert_eq!(enc, vec![1, 5, 0, 0, 0, 8, 1, 2, 3, 4, 5, 6, 7, 8]);
    }

    #[test]
    fn rejects_malformed() {
        assert_eq!(decode_fields(&[]), Err(CodecError::Truncated));
        assert_eq!(decode_fields(&[0x02]), Err(CodecError::BadVersion(2)));
        assert_eq!(decode_fields(&[1, 0x09, 0, 0, 0, 0]), Err(CodecError::UnknownTag(9)));
        assert_eq!(decode_fields(&[1, 0x04, 0, 0, 0]), Err(CodecError::Truncated));
        assert_eq!(decode_fields(&[1, 0x04, 0, 0, 0, 5, 1]), Err(CodecError::LengthOverflow(5)));
        assert_eq!(
            decode_fields(&[1, 0x05, 0, 0, 0, 1, 1]),
            Err(CodecError::BadLength {
                tag: FieldTag::Timestamp,
                len: 1
            })
        );
        assert_eq!(decode_fields(&[1, 0x07, 0, 0, 0, 1, 0xff]), Err(CodecError::Utf8));
        assert_eq!(
            decode_fields(&[1, 0x04, 0xff, 0xff, 0xff, 0xff]),
            Err(CodecError::LengthOverflow(u32::MAX as usize))
        );
    }

    fn sample_envelope() -> Envelope {
        Envelope {
            msg_type: MsgType::M3,
            correlation: CorrelationId([9; 16]),
            sender: "ebake/dev/00/inbox".into(),
            payload: encode_fields(&[
                Field::Bytes(vec![1, 2, 3]),
                Field::Digest([4; 32]),
                Field::Timestamp(5),
            ]),
        }
    }

    #[test]
    fn envelope_roundtrip_and_errors() {
        let env = sample_envelope();
        let raw = env.encode();
        assert_eq!(decode_envelope(&raw).unwrap(), env);
        for cut in 0..raw.len() {
            assert!(decode_envelope(&raw[..cut]).is_err(), "cut {cut}");
        }
        let mut trailing = raw.clone();
        trailing.push(0);
        assert!(decode_envelope(&trailing).is_err());
        let mut bad_type = raw.clone();
        bad_type[0] = 7;
        assert_eq!(decode_envelope(&bad_type), Err(CodecError::UnknownMsgType(7)));
        let mut wrong_schema = raw;
        wrong_schema[0] = MsgType::M1 as u8;
        assert_eq!(decode_envelope(&wrong_schema), Err(CodecError::SchemaMismatch(MsgType::M1)));
    }

    #[test]
    fn reader_enforces_order() {
        let mut r = FieldReader::new(vec![Field::Timestamp(1), Field::Bytes(vec![0; 3])]);
        assert!(r.digest().is_err());
        let mut r = FieldReader::new(vec![Field::Bytes(vec![0; 3])]);
        assert!(r.fixed_bytes::<4>().is_err());
        let r = FieldReader::new(vec![Field::Timestamp(1)]);
        assert!(r.finish().is_err());
    }
}
