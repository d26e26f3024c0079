//! Length-prefixed framing: a 4-byte little-endian payload length followed
//! by exactly that many payload bytes.

use std::io::{self, Read, Write};

use thiserror::Error;

/// Default cap on a single inbound payload (256 MiB).
pub const DEFAULT_MAX_FRAME: usize = 256 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("stream ended after {got} of {expected} bytes")]
    Truncated { expected: usize, got: usize },

    #[error("frame length {len} exceeds cap {cap}")]
    Oversize { len: usize, cap: usize },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn encode_frame(payload: &[u8]) -> Result<Vec<u8>, FrameError> {
    let len = u32::try_from(payload.len()).map_err(|_| FrameError::Oversize {
        len: payload.len(),
        cap: u32::MAX as usize,
    })?;
    let mut out = Vec::with_capacity(payload.len() + 4);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(payload);
    Ok(out)
}

pub fn write_frame<W: Write + ?Sized>(w: &mut W, payload: &[u8]) -> Result<(), FrameError> {
    let len = u32::try_from(payload.len()).map_err(|_| FrameError::Oversize {
        len: payload.len(),
        cap: u32::MAX as usize,
    })?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(payload)?;
    Ok(())
}

/// Reads up to `buf.len()` bytes, stopping early only at end of stream.
fn read_full<R: Read + ?Sized>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Reads one frame. `Ok(None)` means the stream ended cleanly on a frame
/// boundary.
pub fn read_frame_opt<R: Read + ?Sized>(
    r: &mut R,
    max_len: usize,
) -> Result<Option<Vec<u8>>, FrameError> {
    let mut header = [0u8; 4];
    let got = read_full(r, &mut header)?;
    if got == 0 {
        return Ok(None);
    }
    if got < 4 {
        return Err(FrameError::Truncated { expected: 4, got });
    }
    let len = u32::from_le_bytes(header) as usize;
    if len > max_len {
        return Err(FrameError::Oversize { len, cap: max_len });
    }
    let mut payload = Vec::with_capacity(len.min(1 << 20));
    let got = r.take(len as u64).read_to_end(&mut payload)?;
    if got < len {
        return Err(FrameError::Truncated {
            expected: len + 4,
            got: got + 4,
        });
    }
    Ok(Some(payload))
}

/// Reads one frame; end of stream anywhere is `Truncated`.
pub fn read_frame<R: Read + ?Sized>(r: &mut R, max_len: usize) -> Result<Vec<u8>, FrameError> {
    read_frame_opt(r, max_len)?.ok_or(FrameError::Truncated {
        expected: 4,
        got: 0,
    })
}

/// [`read_frame`] with the default cap.
pub fn decode_frame<R: Read + ?Sized>(r: &mut R) -> Result<Vec<u8>, FrameError> {
    read_frame(r, DEFAULT_MAX_FRAME)
}
