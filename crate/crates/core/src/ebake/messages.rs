use crate::codec::{CodecError, Field, FieldReader, MsgType, WireMessage};
use crate::crypto::Digest;
use crate::id::Timestamp;

/// Length of the masked responder key `Y`.
pub const Y_LEN: usize = 33;

/// Initiator to TA.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Msg1 {
    /// Symmetric ciphertext of `[ID_x, r_x]` under `K_dta`.
    pub w: Vec<u8>,
    /// `Q_y` masked with `DP_1^x`.
    pub y: [u8; Y_LEN],
    /// Hybrid ciphertext to `Q_y` of `[Q_x, ID_x, N_x, T_1]`.
    pub z: Vec<u8>,
    pub p_dx: Digest,
    pub t1: Timestamp,
}

/// TA to responder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Msg2 {
    pub z: Vec<u8>,
    pub p_dy: Digest,
    pub t2: Timestamp,
}

/// Responder to TA.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Msg3 {
    /// Hybrid ciphertext to `Q_x` of `[ID_y, N_y, T_2]`.
    pub z_y: Vec<u8>,
    pub p_dta: Digest,
    pub t3: Timestamp,
}

/// TA to initiator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Msg4 {
    pub z_y: Vec<u8>,
    pub p_dxx: Digest,
    pub t4: Timestamp,
    pub topic: String,
}

/// TA to responder once the initiator's leg is verified.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicNotice {
    pub topic: String,
    pub t4: Timestamp,
}

/// Session traffic sealed under SK.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppMessage {
    pub sealed: Vec<u8>,
}

impl WireMessage for Msg1 {
    const TYPE: MsgType = MsgType::M1;

    fn fields(&self) -> Vec<Field> {
        vec![
            Field::Bytes(self.w.clone()),
            Field::Bytes(self.y.to_vec()),
            Field::Bytes(self.z.clone()),
            Field::Digest(self.p_dx.0),
            Field::Timestamp(self.t1),
        ]
    }

    fn read(mut r: FieldReader) -> Result<Self, CodecError> {
        let m = Msg1 {
            w: r.bytes()?,
            y: r.fixed_bytes()?,
            z: r.bytes()?,
            p_dx: Digest(r.digest()?),
            t1: r.timestamp()?,
        };
        r.finish()?;
        Ok(m)
    }
}

impl WireMessage for Msg2 {
    const TYPE: MsgType = MsgType::M2;

    fn fields(&self) -> Vec<Field> {
        vec![
            Field::Bytes(self.z.clone()),
            Field::Digest(self.p_dy.0),
            Field::Timestamp(self.t2),
        ]
    }

    fn read(mut r: FieldReader) -> Result<Self, CodecError> {
        let m = Msg2 {
            z: r.bytes()?,
            p_dy: Digest(r.digest()?),
            t2: r.timestamp()?,
        };
        r.finish()?;
        Ok(m)
    }
}

impl WireMessage for Msg3 {
    const TYPE: MsgType = MsgType::M3;

    fn fields(&self) -> Vec<Field> {
        vec![
            Field::Bytes(self.z_y.clone()),
            Field::Digest(self.p_dta.0),
            Field::Timestamp(self.t3),
        ]
    }

    fn read(mut r: FieldReader) -> Result<Self, CodecError> {
        let m = Msg3 {
            z_y: r.bytes()?,
            p_dta: Digest(r.digest()?),
            t3: r.timestamp()?,
        };
        r.finish()?;
        Ok(m)
    }
}

impl WireMessage for Msg4 {
    const TYPE: MsgType = MsgType::M4;

    fn fields(&self) -> Vec<Field> {
        vec![
            Field::Bytes(self.z_y.clone()),
            Field::Digest(self.p_dxx.0),
            Field::Timestamp(self.t4),
            Field::Str(self.topic.clone()),
        ]
    }

    fn read(mut r: FieldReader) -> Result<Self, CodecError> {
        let m = Msg4 {
            z_y: r.bytes()?,
            p_dxx: Digest(r.digest()?),
            t4: r.timestamp()?,
            topic: r.string()?,
        };
        r.finish()?;
        Ok(m)
    }
}

impl WireMessage for TopicNotice {
    const TYPE: MsgType = MsgType::TopicNotice;

    fn fields(&self) -> Vec<Field> {
        vec![Field::Str(self.topic.clone()), Field::Timestamp(self.t4)]
    }

    fn read(mut r: FieldReader) -> Result<Self, CodecError> {
        let m = TopicNotice {
            topic: r.string()?,
            t4: r.timestamp()?,
        };
        r.finish()?;
        Ok(m)
    }
}

impl WireMessage for AppMessage {
    const TYPE: MsgType = MsgType::App;

    fn fields(&self) -> Vec<Field> {
        vec![Field::Bytes(self.sealed.clone())]
    }

    fn read(mut r: FieldReader) -> Result<Self, CodecError> {
        let m = AppMessage { sealed: r.bytes()? };
        r.finish()?;
        Ok(m)
    }
}
