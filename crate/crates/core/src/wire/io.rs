//! Frame I/O over byte streams, async (tokio) and blocking (std).

use std::io::{self, Read, Write};

use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};

use super::frame::{FrameBuffer, FrameTooLarge};

impl From<FrameTooLarge> for io::Error {
    fn from(e: FrameTooLarge) -> Self {
        io::Error::new(io::ErrorKind::InvalidData, e)
    }
}

/// Reads frame payloads from an async stream.
pub struct FrameReader<R> {
    inner: R,
    buf: FrameBuffer,
    chunk: Box<[u8]>,
}

impl<R: AsyncRead + Unpin> FrameReader<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            buf: FrameBuffer::new(),
            chunk: vec![0; 64 * 1024].into_boxed_slice(),
        }
    }

    /// Next payload, or `None` on a clean end of stream at a frame boundary.
    pub async fn next_payload(&mut self) -> io::Result<Option<Vec<u8>>> {
        loop {
            if let Some(payload) = self.buf.next_payload()? {
                return Ok(Some(payload));
            }
            let n = self.inner.read(&mut self.chunk).await?;
            if n == 0 {
                return if self.buf.pending() == 0 {
                    Ok(None)
                } else {
                    Err(io::Error::new(
                        io::ErrorKind::UnexpectedEof,
                        "stream ended inside a frame",
                    ))
                };
            }
            self.buf.extend(&self.chunk[..n]);
        }
    }
}

pub async fn write_frame<W: AsyncWrite + Unpin>(writer: &mut W, frame: &[u8]) -> io::Result<()> {
    writer.write_all(frame).await?;
    writer.flush().await
}

/// Blocking read of one payload. `None` on clean end of stream.
pub fn read_frame_blocking<R: Read>(
    reader: &mut R,
    buf: &mut FrameBuffer,
) -> io::Result<Option<Vec<u8>>> {
    let mut chunk = [0u8; 16 * 1024];
    loop {
        if let Some(payload) = buf.next_payload()? {
            return Ok(Some(payload));
        }
        let n = match reader.read(&mut chunk) {
            Ok(n) => n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        };
        if n == 0 {
            return if buf.pending() == 0 {
                Ok(None)
            } else {
                Err(io::Error::new(
                    io::ErrorKind::UnexpectedEof,
                    "stream ended inside a frame",
                ))
            };
        }
        buf.extend(&chunk[..n]);
    }
}

pub fn write_frame_blocking<W: Write>(writer: &mut W, frame: &[u8]) -> io::Result<()> {
    writer.write_all(frame)?;
    writer.flush()
}
