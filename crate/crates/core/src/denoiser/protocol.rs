//! Framing for the SDNP denoiser protocol.
//!
//! All integers are little-endian.
//!
//! ```text
//! HANDSHAKE  req:  "SDNP" version:u16 flags:u16
//!            resp: "SDNP" version:u16 max_batch:u16 h:u16 w:u16 channels:u8
//! PREDICT    req:  type:u8=1 t:u32 batch:u16 h:u16 w:u16 channels:u8 payload
//!            resp: type:u8=2 t:u32 batch:u16 h:u16 w:u16 channels:u8 payload
//! ERROR      resp: type:u8=255 code:u16 len:u32 utf8[len]
//! ```
//!
//! Payloads are `batch·h·w·channels` binary32 values, row-major with channels
//! interleaved. Any frame may be answered by an ERROR frame; after an ERROR the
//! endpoint closes the connection.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SDNP";
pub const VERSION: u16 = 1;

pub const TYPE_PREDICT: u8 = 1;
pub const TYPE_PREDICTION: u8 = 2;
pub const TYPE_ERROR: u8 = 255;

pub const ERR_MALFORMED: u16 = 1;
pub const ERR_SHAPE: u16 = 2;
pub const ERR_MODEL: u16 = 3;

/// Upper bound on ERROR message length accepted from a peer.
const MAX_MESSAGE: u32 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Handshake {
    pub version: u16,
    pub flags: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HandshakeReply {
    pub version: u16,
    pub max_batch: u16,
    pub h: u16,
    pub w: u16,
    pub channels: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorHeader {
    pub t: u32,
    pub batch: u16,
    pub h: u16,
    pub w: u16,
    pub channels: u8,
}

impl TensorHeader {
    pub fn payload_len(&self) -> usize {
        self.batch as usize * self.h as usize * self.w as usize * self.channels as usize
    }

    fn encode(&self, kind: u8) -> [u8; 12] {
        let mut b = [0u8; 12];
        b[0] = kind;
        b[1..5].copy_from_slice(&self.t.to_le_bytes());
        b[5..7].copy_from_slice(&self.batch.to_le_bytes());
        b[7..9].copy_from_slice(&self.h.to_le_bytes());
        b[9..11].copy_from_slice(&self.w.to_le_bytes());
        b[11] = self.channels;
        b
    }

    fn decode(rest: &[u8; 11]) -> Self {
        Self {
            t: u32::from_le_bytes(rest[0..4].try_into().unwrap()),
            batch: u16::from_le_bytes(rest[4..6].try_into().unwrap()),
            h: u16::from_le_bytes(rest[6..8].try_into().unwrap()),
            w: u16::from_le_bytes(rest[8..10].try_into().unwrap()),
            channels: rest[10],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Prediction { header: TensorHeader, payload: Vec<f32> },
    Error { code: u16, message: String },
}

fn transport(e: io::Error) -> Error {
    Error::Transport(e.to_string())
}

pub fn write_handshake<W: Write>(w: &mut W, hs: &Handshake) -> Result<()> {
    let mut b = [0u8; 8];
    b[..4].copy_from_slice(&MAGIC);
    b[4..6].copy_from_slice(&hs.version.to_le_bytes());
    b[6..8].copy_from_slice(&hs.flags.to_le_bytes());
    w.write_all(&b).and_then(|_| w.flush()).map_err(transport)
}

/// Reads a handshake request. Returns `Ok(None)` on a clean EOF.
pub fn read_handshake<R: Read>(r: &mut R) -> Result<Option<Handshake>> {
    let mut b = [0u8; 8];
    match read_exact_or_eof(r, &mut b)? {
        false => Ok(None),
        true if b[..4] != MAGIC => Err(Error::Protocol("bad handshake magic".into())),
        true => Ok(Some(Handshake {
            version: u16::from_le_bytes([b[4], b[5]]),
            flags: u16::from_le_bytes([b[6], b[7]]),
        })),
    }
}

pub fn write_handshake_reply<W: Write>(w: &mut W, reply: &HandshakeReply) -> Result<()> {
    let mut b = [0u8; 13];
    b[..4].copy_from_slice(&MAGIC);
    b[4..6].copy_from_slice(&reply.version.to_le_bytes());
    b[6..8].copy_from_slice(&reply.max_batch.to_le_bytes());
    b[8..10].copy_from_slice(&reply.h.to_le_bytes());
    b[10..12].copy_from_slice(&reply.w.to_le_bytes());
    b[12] = reply.channels;
    w.write_all(&b).and_then(|_| w.flush()).map_err(transport)
}

/// Reads the endpoint's handshake reply, surfacing an ERROR frame as [`Error::Remote`].
pub fn read_handshake_reply<R: Read>(r: &mut R) -> Result<HandshakeReply> {
    let mut first = [0u8; 1];
    r.read_exact(&mut first).map_err(transport)?;
    if first[0] == TYPE_ERROR {
        let (code, message) = read_error_body(r)?;
        return Err(Error::Remote { code, message });
    }
    let mut rest = [0u8; 12];
    r.read_exact(&mut rest).map_err(transport)?;
    if first[0] != MAGIC[0] || rest[..3] != MAGIC[1..] {
        return Err(Error::Protocol("bad handshake reply magic".into()));
    }
    Ok(HandshakeReply {
        version: u16::from_le_bytes([rest[3], rest[4]]),
        max_batch: u16::from_le_bytes([rest[5], rest[6]]),
        h: u16::from_le_bytes([rest[7], rest[8]]),
        w: u16::from_le_bytes([rest[9], rest[10]]),
        channels: rest[11],
    })
}

fn write_tensor<W: Write>(w: &mut W, kind: u8, header: &TensorHeader, payload: &[f32]) -> Result<()> {
    if payload.len() != header.payload_len() {
        return Err(Error::Protocol(format!(
            "payload has {} values, header implies {}",
            payload.len(),
            header.payload_len()
        )));
    }
    let mut buf = Vec::with_capacity(12 + payload.len() * 4);
    buf.extend_from_slice(&header.encode(kind));
    for v in payload {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf).and_then(|_| w.flush()).map_err(transport)
}

pub fn write_predict<W: Write>(w: &mut W, header: &TensorHeader, payload: &[f32]) -> Result<()> {
    write_tensor(w, TYPE_PREDICT, header, payload)
}

pub fn write_prediction<W: Write>(w: &mut W, header: &TensorHeader, payload: &[f32]) -> Result<()> {
    write_tensor(w, TYPE_PREDICTION, header, payload)
}

pub fn write_error<W: Write>(w: &mut W, code: u16, message: &str) -> Result<()> {
    let mut buf = Vec::with_capacity(7 + message.len());
    buf.push(TYPE_ERROR);
    buf.extend_from_slice(&code.to_le_bytes());
    buf.extend_from_slice(&(message.len() as u32).to_le_bytes());
    buf.extend_from_slice(message.as_bytes());
    w.write_all(&buf).and_then(|_| w.flush()).map_err(transport)
}

fn read_error_body<R: Read>(r: &mut R) -> Result<(u16, String)> {
    let mut b = [0u8; 6];
    r.read_exact(&mut b).map_err(transport)?;
    let code = u16::from_le_bytes([b[0], b[1]]);
    let len = u32::from_le_bytes([b[2], b[3], b[4], b[5]]);
    if len > MAX_MESSAGE {
        return Err(Error::Protocol(format!("error message of {len} bytes")));
    }
    let mut msg = vec![0u8; len as usize];
    r.read_exact(&mut msg).map_err(transport)?;
    Ok((code, String::from_utf8_lossy(&msg).into_owned()))
}

fn read_payload<R: Read>(r: &mut R, len: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; len * 4];
    r.read_exact(&mut bytes).map_err(transport)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn read_response<R: Read>(r: &mut R) -> Result<Response> {
    let mut kind = [0u8; 1];
    r.read_exact(&mut kind).map_err(transport)?;
    match kind[0] {
        TYPE_PREDICTION => {
            let mut rest = [0u8; 11];
            r.read_exact(&mut rest).map_err(transport)?;
            let header = TensorHeader::decode(&rest);
            let payload = read_payload(r, header.payload_len())?;
            Ok(Response::Prediction { header, payload })
        }
        TYPE_ERROR => {
            let (code, message) = read_error_body(r)?;
            Ok(Response::Error { code, message })
        }
        other => Err(Error::Protocol(format!("unexpected response type {other}"))),
    }
}

/// Reads the header of a request frame. `Ok(None)` on a clean EOF.
pub fn read_request_header<R: Read>(r: &mut R) -> Result<Option<TensorHeader>> {
    let mut kind = [0u8; 1];
    if !read_exact_or_eof(r, &mut kind)? {
        return Ok(None);
    }
    if kind[0] != TYPE_PREDICT {
        return Err(Error::Protocol(format!("unexpected request type {}", kind[0])));
    }
    let mut rest = [0u8; 11];
    r.read_exact(&mut rest).map_err(transport)?;
    Ok(Some(TensorHeader::decode(&rest)))
}

fn read_exact_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(false),
            Ok(0) => return Err(Error::Transport("truncated frame".into())),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(transport(e)),
        }
    }
    Ok(true)
}

/// Handler failure reported back to the client as an ERROR frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandlerError {
    pub code: u16,
    pub message: String,
}

/// Serves one connection: handshake, then PREDICT frames until EOF.
///
/// This is the endpoint side of the protocol, used for loopback testing and as a
/// template for model bridges. Malformed input gets an ERROR frame and ends the
/// connection; it never panics.
pub fn serve<S, F>(stream: &mut S, reply: HandshakeReply, mut handler: F) -> Result<()>
where
    S: Read + Write,
    F: FnMut(&TensorHeader, Vec<f32>) -> std::result::Result<Vec<f32>, HandlerError>,
{
    match read_handshake(stream) {
        Ok(None) => return Ok(()),
        Ok(Some(hs)) if hs.version != reply.version => {
            return write_error(stream, ERR_MALFORMED, &format!("unsupported version {}", hs.version));
        }
        Ok(Some(_)) => write_handshake_reply(stream, &reply)?,
        Err(Error::Protocol(msg)) => return write_error(stream, ERR_MALFORMED, &msg),
        Err(e) => return Err(e),
    }
    loop {
        let header = match read_request_header(stream) {
            Ok(None) => return Ok(()),
            Ok(Some(h)) => h,
            Err(Error::Protocol(msg)) => return write_error(stream, ERR_MALFORMED, &msg),
            Err(e) => return Err(e),
        };
        if header.h != reply.h || header.w != reply.w || header.channels != reply.channels {
            return write_error(
                stream,
                ERR_SHAPE,
                &format!(
                    "expected {}x{}x{}, got {}x{}x{}",
                    reply.h, reply.w, reply.channels, header.h, header.w, header.channels
                ),
            );
        }
        if header.batch == 0 || header.batch > reply.max_batch {
            return write_error(stream, ERR_SHAPE, &format!("batch {} outside 1..={}", header.batch, reply.max_batch));
        }
        let payload = read_payload(stream, header.payload_len())?;
        match handler(&header, payload) {
            Ok(out) if out.len() == header.payload_len() => write_prediction(stream, &header, &out)?,
            Ok(out) => {
                return write_error(stream, ERR_MODEL, &format!("handler produced {} values", out.len()));
            }
            Err(e) => return write_error(stream, e.code, &e.message),
        }
    }
}

#[cfg(test)]
mod tests {
    use std::io::Cursor;

    use super::*;

    #[test]
    fn handshake_bytes() {
        let mut buf = Vec::new();
        write_handshake(&mut buf, &Handshake { version: 1, flags: 0 }).unwrap();
        assert_eq!(buf, b"SDNP\x01\x00\x00\x00");
        let reply = HandshakeReply {
            version: 1,
            max_batch: 8,
            h: 64,
            w: 1024,
            channels: 2,
        };
        let mut buf = Vec::new();
        write_handshake_reply(&mut buf, &reply).unwrap();
        assert_eq!(buf.len(), 13);
        assert_eq!(read_handshake_reply(&mut Cursor::new(buf)).unwrap(), reply);
    }

    #[test]
    fn predict_frame_layout() {
        let header = TensorHeader {
            t: 7,
            batch: 1,
            h: 1,
            w: 1,
            channels: 2,
        };
        let mut buf = Vec::new();
        write_predict(&mut buf, &header, &[1.0, -2.5]).unwrap();
        assert_eq!(buf.len(), 12 + 8);
        assert_eq!(buf[0], 1);
        assert_eq!(&buf[1..5], &7u32.to_le_bytes());
        assert_eq!(&buf[12..16], &1.0f32.to_le_bytes());
        let mut cur = Cursor::new(buf);
        assert_eq!(read_request_header(&mut cur).unwrap(), Some(header));
        assert!(write_predict(&mut Vec::new(), &header, &[1.0]).is_err());
    }

    #[test]
    fn error_frame_roundtrip() {
        let mut buf = Vec::new();
        write_error(&mut buf, ERR_SHAPE, "bad shape").unwrap();
        assert_eq!(
            read_response(&mut Cursor::new(buf)).unwrap(),
            Response::Error {
                code: ERR_SHAPE,
                message: "bad shape".into()
            }
        );
    }

    #[test]
    fn handshake_error_surfaces_as_remote() {
        let mut buf = Vec::new();
        write_error(&mut buf, ERR_MALFORMED, "nope").unwrap();
        assert!(matches!(
            read_handshake_reply(&mut Cursor::new(buf)),
            Err(Error::Remote { code: 1, .. })
        ));
    }

    #[test]
    fn truncated_reads_are_transport_errors() {
        assert!(matches!(
            read_response(&mut Cursor::new(vec![2u8, 0, 0])),
            Err(Error::Transport(_))
        ));
        assert_eq!(read_request_header(&mut Cursor::new(Vec::<u8>::new())).unwrap(), None);
    }
}
