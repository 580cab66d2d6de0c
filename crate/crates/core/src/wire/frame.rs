//! Length-prefixed JSON framing.
//!
//! ```text
//! +---------------------+-----------------------------+
//! | length (4 bytes)    | UTF-8 JSON payload          |
//! | big-endian u32      | exactly `length` bytes      |
//! +---------------------+-----------------------------+
//! ```

use thiserror::Error;

use super::message::{ErrorCode, InvalidMessage, WireMessage};

pub const HEADER_LEN: usize = 4;

/// Largest payload a frame may carry: 16 MiB.
pub const MAX_FRAME_LEN: usize = 16 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("invalid message: {0}")]
    Invalid(#[from] InvalidMessage),
    #[error("frame too large: {0} bytes (max {MAX_FRAME_LEN})")]
    TooLarge(usize),
    #[error("json encoding failed: {0}")]
    Json(#[from] serde_json::Error),
}

/// A length prefix above the cap. The stream cannot be resynchronised and
/// the connection must be closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("frame length prefix {0} exceeds {MAX_FRAME_LEN} bytes")]
pub struct FrameTooLarge(pub usize);

/// A complete frame whose payload could not be turned into a message.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed frame: {reason}")]
pub struct DecodeError {
    /// Request id, when the payload was a JSON object with a string `id`.
    pub id: Option<String>,
    pub reason: String,
}

impl DecodeError {
    pub fn code(&self) -> ErrorCode {
        ErrorCode::MalformedRequest
    }
}

/// Wraps an already-serialized JSON payload in a frame.
pub fn frame_payload(payload: &[u8]) -> Result<Vec<u8>, FrameError> {
    if payload.len() > MAX_FRAME_LEN {
        return Err(FrameError::TooLarge(payload.len()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(payload);
    Ok(out)
}

/// Serializes a message into one frame, rejecting messages that violate
/// their invariants.
pub fn encode_frame<M: WireMessage>(message: &M) -> Result<Vec<u8>, FrameError> {
    message.validate()?;
    let payload = serde_json::to_vec(message)?;
    frame_payload(&payload)
}

/// Splits one complete frame off the front of `buf`.
///
/// Returns the payload and the number of bytes consumed, or `None` when `buf`
/// does not yet hold a complete frame.
pub fn take_frame(buf: &[u8]) -> Result<Option<(&[u8], usize)>, FrameTooLarge> {
    if buf.len() < HEADER_LEN {
        return Ok(None);
    }
    let len = u32::from_be_bytes([buf[0], buf[1], buf[2], buf[3]]) as usize;
    if len > MAX_FRAME_LEN {
        return Err(FrameTooLarge(len));
    }
    let end = HEADER_LEN + len;
    if buf.len() < end {
        return Ok(None);
    }
    Ok(Some((&buf[HEADER_LEN..end], end)))
}

/// Splits every complete frame off the front of `buf`; the trailing partial
/// frame (if any) is returned untouched as the remainder.
pub fn split_frames(mut buf: &[u8]) -> Result<(Vec<&[u8]>, &[u8]), FrameTooLarge> {
    let mut frames = Vec::new();
    while let Some((payload, used)) = take_frame(buf)? {
        frames.push(payload);
        buf = &buf[used..];
    }
    Ok((frames, buf))
}

/// Parses and validates one frame payload.
pub fn decode_payload<M: WireMessage>(payload: &[u8]) -> Result<M, DecodeError> {
    let text = std::str::from_utf8(payload).map_err(|e| DecodeError {
        id: None,
        reason: format!("invalid utf-8: {e}"),
    })?;
    let message: M = serde_json::from_str(text).map_err(|e| DecodeError {
        id: salvage_id(text),
        reason: e.to_string(),
    })?;
    message.validate().map_err(|e| DecodeError {
        id: salvage_id(text),
        reason: e.to_string(),
    })?;
    Ok(message)
}

/// Best-effort extraction of the `id` field, so that errors about a broken
/// request can still be correlated by the sender.
pub fn salvage_id(text: &str) -> Option<String> {
    let value: serde_json::Value = serde_json::from_str(text).ok()?;
    value.get("id")?.as_str().map(str::to_owned)
}

pub type Decoded<'a, M> = (Vec<Result<M, DecodeError>>, &'a [u8]);

/// Decodes every complete frame in `stream`.
///
/// Per-frame parse failures are reported in place; an oversized length
/// prefix fails the whole call.
pub fn decode_frames<M: WireMessage>(stream: &[u8]) -> Result<Decoded<'_, M>, FrameTooLarge> {
    let (frames, rest) = split_frames(stream)?;
    Ok((frames.into_iter().map(decode_payload).collect(), rest))
}

/// Incremental decoder for a byte stream arriving in arbitrary chunks.
#[derive(Debug, Default)]
pub struct FrameBuffer {
    buf: Vec<u8>,
}

impl FrameBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn extend(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Pops the next complete payload, if one is buffered.
    pub fn next_payload(&mut self) -> Result<Option<Vec<u8>>, FrameTooLarge> {
        match take_frame(&self.buf)? {
            Some((payload, used)) => {
                let payload = payload.to_vec();
                self.buf.drain(..used);
                Ok(Some(payload))
            }
            None => Ok(None),
        }
    }

    pub fn pending(&self) -> usize {
        self.buf.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::{EvalRequest, EvalResponse, Value};

    #[test]
    fn empty_object_frame_bytes() {
        assert_eq!(frame_payload(b"{}").unwrap(), vec![0, 0, 0, 2, 0x7B, 0x7D]);
    }

    #[test]
    fn empty_input_decodes_to_nothing() {
        let (msgs, rest) = decode_frames::<EvalRequest>(&[]).unwrap();
        assert!(msgs.is_empty());
        assert!(rest.is_empty());
    }

    #[test]
    fn two_frames_back_to_back() {
        let a = EvalRequest::health("a");
        let b = EvalRequest::evaluate("b", "pbo-onemax", vec![Value::binary(true)]);
        let mut bytes = encode_frame(&a).unwrap();
        bytes.extend(encode_frame(&b).unwrap());
        let (msgs, rest) = decode_frames::<EvalRequest>(&bytes).unwrap();
        assert!(rest.is_empty());
        let msgs: Vec<_> = msgs.into_iter().map(Result::unwrap).collect();
        assert_eq!(msgs, vec![a, b]);
    }

    #[test]
    fn partial_header_is_left_in_remainder() {
        let first = encode_frame(&EvalResponse::result("x", 2.5)).unwrap();
        let second = encode_frame(&EvalResponse::result("y", 1.0)).unwrap();
        let mut bytes = first.clone();
        bytes.extend_from_slice(&second[..3]);
        let (msgs, rest) = decode_frames::<EvalResponse>(&bytes).unwrap();
        assert_eq!(msgs.len(), 1);
        assert_eq!(msgs[0].as_ref().unwrap().id, "x");
        assert_eq!(rest, &second[..3]);
    }

    #[test]
    fn oversized_prefix_is_a_protocol_error() {
        let len = (MAX_FRAME_LEN as u32 + 1).to_be_bytes();
        assert_eq!(
            decode_frames::<EvalRequest>(&len).unwrap_err(),
            FrameTooLarge(MAX_FRAME_LEN + 1)
        );
        // exactly the cap is fine, just incomplete
        let len = (MAX_FRAME_LEN as u32).to_be_bytes();
        let (msgs, rest) = decode_frames::<EvalRequest>(&len).unwrap();
        assert!(msgs.is_empty());
        assert_eq!(rest.len(), 4);
    }

    #[test]
    fn bad_frame_is_isolated() {
        let mut bytes = frame_payload(b"{not json").unwrap();
        bytes.extend(frame_payload(&[0xff, 0xfe]).unwrap());
        bytes.extend(frame_payload(br#"{"id":"q","method":"evaluate"}"#).unwrap());
        bytes.extend(encode_frame(&EvalRequest::health("ok")).unwrap());
        let (msgs, rest) = decode_frames::<EvalRequest>(&bytes).unwrap();
        assert!(rest.is_empty());
        assert_eq!(msgs.len(), 4);
        assert!(msgs[0].is_err());
        assert!(msgs[1].is_err());
        let missing = msgs[2].as_ref().unwrap_err();
        assert_eq!(missing.id.as_deref(), Some("q"));
        assert_eq!(missing.code(), ErrorCode::MalformedRequest);
        assert_eq!(msgs[3].as_ref().unwrap().id, "ok");
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let bytes = frame_payload(br#"{"id":"1","method":"health","extra":[1,2,3]}"#).unwrap();
        let (msgs, _) = decode_frames::<EvalRequest>(&bytes).unwrap();
        assert_eq!(msgs[0].as_ref().unwrap(), &EvalRequest::health("1"));
    }

    #[test]
    fn oversized_request_is_rejected_on_encode() {
        // each value serializes to ~38 bytes, so 500k of them exceed 17 MiB
        let values = vec![Value::continuous(0.123456789012345); 500_000];
        let req = EvalRequest::evaluate("big", "lasso-rcv1", values);
        let json_len = serde_json::to_vec(&req).unwrap().len();
        assert!(json_len > 17 * 1024 * 1024, "payload only {json_len} bytes");
        assert!(matches!(encode_frame(&req), Err(FrameError::TooLarge(n)) if n == json_len));
    }

    #[test]
    fn invalid_message_is_rejected_on_encode() {
        assert!(matches!(
            encode_frame(&EvalRequest::health("")),
            Err(FrameError::Invalid(InvalidMessage::EmptyId))
        ));
    }

    #[test]
    fn frame_buffer_waits_for_complete_frames() {
        let frame = encode_frame(&EvalRequest::health("h")).unwrap();
        let mut fb = FrameBuffer::new();
        fb.extend(&frame[..5]);
        assert_eq!(fb.next_payload().unwrap(), None);
        fb.extend(&frame[5..]);
        let payload = fb.next_payload().unwrap().unwrap();
        assert_eq!(payload, &frame[4..]);
        assert_eq!(fb.pending(), 0);
    }
}
