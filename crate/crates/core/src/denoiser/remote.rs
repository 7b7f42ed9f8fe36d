//! Client side of the SDNP protocol.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::str::FromStr;
use std::sync::Mutex;

use super::protocol::{self, Handshake, HandshakeReply, Response, TensorHeader};
use super::{Denoiser, DenoiserDescriptor};
use crate::error::{Error, Result};
use crate::range_image::{DenseImage, CHANNELS};

/// Where a remote denoiser lives: `tcp:<host>:<port>` or `exec:<command line>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Tcp(String),
    Exec(Vec<String>),
}

impl FromStr for Endpoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(addr) = s.strip_prefix("tcp:") {
            if addr.is_empty() {
                return Err(Error::invalid("empty tcp address"));
            }
            Ok(Endpoint::Tcp(addr.to_string()))
        } else if let Some(cmd) = s.strip_prefix("exec:") {
            let argv: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
            if argv.is_empty() {
                return Err(Error::invalid("empty exec command"));
            }
            Ok(Endpoint::Exec(argv))
        } else {
            Err(Error::invalid(format!("endpoint '{s}' must start with tcp: or exec:")))
        }
    }
}

trait Duplex: Read + Write + Send {}
impl<T: Read + Write + Send> Duplex for T {}

struct ChildPipe {
    stdin: ChildStdin,
    stdout: ChildStdout,
}

impl Read for ChildPipe {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        self.stdout.read(buf)
    }
}

impl Write for ChildPipe {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.stdin.write(buf)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.stdin.flush()
    }
}

/// A denoiser running in another process. One request is in flight at a time.
pub struct RemoteDenoiser {
    conn: Mutex<Box<dyn Duplex>>,
    info: HandshakeReply,
    child: Option<Child>,
    name: String,
}

impl RemoteDenoiser {
    pub fn connect(endpoint: &Endpoint) -> Result<Self> {
        match endpoint {
            Endpoint::Tcp(addr) => {
                let stream = TcpStream::connect(addr).map_err(|e| Error::Transport(format!("{addr}: {e}")))?;
                stream.set_nodelay(true).ok();
                Self::over(stream, format!("tcp:{addr}"))
            }
            Endpoint::Exec(argv) => {
                let mut child = Command::new(&argv[0])
                    .args(&argv[1..])
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .spawn()
                    .map_err(|e| Error::Transport(format!("spawn {}: {e}", argv[0])))?;
                let pipe = ChildPipe {
                    stdin: child.stdin.take().expect("piped stdin"),
                    stdout: child.stdout.take().expect("piped stdout"),
                };
                let mut remote = Self::over(pipe, format!("exec:{}", argv.join(" ")))?;
                remote.child = Some(child);
                Ok(remote)
            }
        }
    }

    /// Runs the handshake over an already-open byte stream.
    pub fn over<S: Read + Write + Send + 'static>(mut stream: S, name: impl Into<String>) -> Result<Self> {
        protocol::write_handshake(
            &mut stream,
            &Handshake {
                version: protocol::VERSION,
                flags: 0,
            },
        )?;
        let info = protocol::read_handshake_reply(&mut stream)?;
        if info.version != protocol::VERSION {
            return Err(Error::Protocol(format!(
                "endpoint speaks version {}, we speak {}",
                info.version,
                protocol::VERSION
            )));
        }
        if info.max_batch == 0 || info.channels as usize != CHANNELS {
            return Err(Error::Protocol(format!(
                "unusable endpoint: max_batch {} channels {}",
                info.max_batch, info.channels
            )));
        }
        Ok(Self {
            conn: Mutex::new(Box::new(stream)),
            info,
            child: None,
            name: name.into(),
        })
    }

    pub fn info(&self) -> &HandshakeReply {
        &self.info
    }

    fn predict_chunk(&self, mut conn: &mut dyn Duplex, t: usize, chunk: &[DenseImage]) -> Result<Vec<DenseImage>> {
        let (h, w) = (self.info.h as usize, self.info.w as usize);
        let header = TensorHeader {
            t: u32::try_from(t).map_err(|_| Error::invalid("step does not fit in u32"))?,
            batch: chunk.len() as u16,
            h: self.info.h,
            w: self.info.w,
            channels: self.info.channels,
        };
        let mut payload = Vec::with_capacity(header.payload_len());
        for img in chunk {
            if img.dims() != (h, w) {
                return Err(Error::ShapeMismatch(format!(
                    "endpoint expects {h}x{w}, image is {}x{}",
                    img.height(),
                    img.width()
                )));
            }
            payload.extend_from_slice(img.data());
        }
        protocol::write_predict(&mut conn, &header, &payload)?;
        match protocol::read_response(&mut conn)? {
            Response::Error { code, message } => Err(Error::Remote { code, message }),
            Response::Prediction { header: got, payload } => {
                if got.batch != header.batch || got.h != header.h || got.w != header.w || got.channels != header.channels {
                    return Err(Error::ShapeMismatch(format!("response header {got:?} for request {header:?}")));
                }
                let per = h * w * CHANNELS;
                Ok(payload
                    .chunks_exact(per)
                    .map(|c| DenseImage::from_vec(h, w, c.to_vec()).expect("chunk size"))
                    .collect())
            }
        }
    }
}

impl Denoiser for RemoteDenoiser {
    fn descriptor(&self) -> DenoiserDescriptor {
        DenoiserDescriptor {
            name: self.name.clone(),
            channels: self.info.channels as usize,
            accepts_batch: self.info.max_batch > 1,
            concurrent_safe: false,
            expected_h: self.info.h as usize,
            expected_w: self.info.w as usize,
        }
    }

    fn predict(&self, t: usize, batch: &[DenseImage]) -> Result<Vec<DenseImage>> {
        let mut conn = self.conn.lock().map_err(|_| Error::Transport("connection poisoned".into()))?;
        let mut out = Vec::with_capacity(batch.len());
        for chunk in batch.chunks(self.info.max_batch as usize) {
            out.extend(self.predict_chunk(conn.as_mut(), t, chunk)?);
        }
        Ok(out)
    }
}

impl Drop for RemoteDenoiser {
    fn drop(&mut self) {
        if let Some(mut child) = self.child.take() {
            // closing stdin lets a well-behaved endpoint exit on EOF
            drop(std::mem::replace(self.conn.get_mut().unwrap_or_else(|e| e.into_inner()), Box::new(std::io::Cursor::new(Vec::new()))));
            let _ = child.wait();
        }
    }
}
